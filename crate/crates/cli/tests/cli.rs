use std::path::Path;
use std::process::{Command, Output};

use pottslab_cli::manifest::Manifest;

fn pottslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pottslab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(&format!("{key}: "))).unwrap_or_else(|| panic!("{key} in {out}"));
    line.split_once(": ").unwrap().1.parse().unwrap()
}

const SMALL: [&str; 6] = ["--set", "model.n=4", "--set", "run.sweeps=40", "--set", "run.burn_in=10"];

#[test]
fn oracle_check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = pottslab(&["oracle-check", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for key in ["free.spin_tv", "free.bond_tv"] {
        assert!(value(&out, key) < 1e-10, "{out}");
    }
}

#[test]
fn wulff_ball_volume() {
    let dir = tempfile::tempdir().unwrap();
    let o = pottslab(&["wulff", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((value(&stdout(&o), "volume_ratio") - 1.0).abs() < 0.02);
    let raster = std::fs::read_to_string(dir.path().join("wulff_raster.txt")).unwrap();
    assert!(raster.starts_with("PARTITION 3 128 1 1\n"));
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let o = pottslab(&["sample", "--set", "model.colours=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.colours"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.cfg");
    std::fs::write(&file, "model.q = 3\nrun.sweeps = many\n").unwrap();
    let o = pottslab(&["sample", "-c", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.sweeps"));
}

#[test]
fn oversized_problems_exit_three() {
    let o = pottslab(&["sample", "--set", "model.n=100000"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = pottslab(&["oracle-check", "--set", "oracle.n=3", "--set", "oracle.q=5"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = pottslab(&["wulff", "--set", "wulff.m=8192"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn csv_artifacts_have_header_and_run_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["phase-partition", "--out", out];
    args.extend(SMALL);
    assert!(pottslab(&args).status.success());
    let manifest = Manifest::parse(&std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap()).unwrap();
    let csvs: Vec<_> = manifest.artifacts.iter().filter(|(n, _)| n.ends_with(".csv")).collect();
    assert_eq!(csvs.len(), 2);
    for (name, _) in csvs {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header[0], "run");
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), header.len(), "{name}: {line}");
            assert_eq!(fields[0], manifest.run);
        }
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file() && e.file_name() != "manifest.txt")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    let mut args = vec!["sample", "--out", first.to_str().unwrap(), "--set", "analysis.snapshots=true"];
    args.extend(SMALL);
    assert!(pottslab(&args).status.success());
    let o = pottslab(&["rerun", first.join("manifest.txt").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("rerun: identical"));
    assert_eq!(read_all(&first), read_all(&again));

    // only output.dir may differ between the two manifests
    let strip = |p: &Path| {
        std::fs::read_to_string(p.join("manifest.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("output.dir"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&first), strip(&again));
}

#[test]
fn rerun_detects_a_changed_input() {
    let dir = tempfile::tempdir().unwrap();
    let part = dir.path().join("slab.txt");
    // 8^3 blocks with the last axis fastest, so each line is one column:
    // colour 2 below the mid-plane, 1 above
    let body = "22221111\n".repeat(64);
    std::fs::write(&part, format!("PARTITION 3 8 1 2\n{body}")).unwrap();
    let first = dir.path().join("first");
    let input = format!("input.partition={}", part.display());
    let o = pottslab(&[
        "surface-energy",
        "--out",
        first.to_str().unwrap(),
        "--set",
        "boundary.kind=top-bottom",
        "--set",
        &input,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((value(&stdout(&o), "energy") - 1.0).abs() < 1e-12);

    std::fs::write(&part, format!("PARTITION 3 8 1 2\n{}", body.replace('2', "1"))).unwrap();
    let o = pottslab(&["rerun", first.join("manifest.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("input") && err.contains("energy.csv"), "{err}");
}

#[test]
fn surface_energy_needs_a_partition() {
    let o = pottslab(&["surface-energy"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("input.partition"));
}

#[test]
fn negative_temperature_is_a_config_error() {
    let o = pottslab(&["oracle-check", "--set", "oracle.beta=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_id_ignores_output_location() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = ["a", "b"]
        .iter()
        .map(|sub| {
            let out = dir.path().join(sub);
            assert!(pottslab(&["oracle-check", "--out", out.to_str().unwrap()]).status.success());
            Manifest::parse(&std::fs::read_to_string(out.join("manifest.txt")).unwrap()).unwrap().run
        })
        .collect();
    assert_eq!(ids[0], ids[1]);
}
