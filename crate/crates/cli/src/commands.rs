//! Experiments. Each builds its artifacts in memory; [`write_run`] is the
//! only place that touches the output directory.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pottslab::anneal::{anneal_partition, AnnealConstraint, AnnealError, AnnealResult, AnnealSchedule};
use pottslab::cluster::{
    order_parameter_estimate, percolation_estimate, slab_lro_probe, AnalysisError, SlabProbeConfig,
};
use pottslab::ensemble::{droplet_experiment, wired_percolation_fraction, Conditioning, DropletConfig, EnsembleError};
use pottslab::exact::{enumerate_exact, ExactError};
use pottslab::gibbs::{hamiltonian, GibbsError};
use pottslab::io::{parse_partition, render_partition, FormatError, Snapshot};
use pottslab::lattice::LatticeError;
use pottslab::phase::{
    discrete_perimeter, empirical_phase_partition, intermediate_scale, surface_energy, PhaseError, TestEventSpec,
};
use pottslab::sampler::{default_burn_in, sample_chain, ChainOutput, RunSpec, SamplerError};
use pottslab::stats::{batch_means, Estimate, DEFAULT_BATCHES};
use pottslab::tau::{tau_estimate_from_samples, AxisRule, TauError};
use pottslab::wulff::{reference_partition, wulff_crystal, ReferenceKind, WulffError, WulffShape};
use pottslab::*;

use crate::config::{BoundaryKind, ConditioningKind, ConfigError, ExperimentConfig, ReferenceChoice, TauKind};
use crate::manifest::{run_id, sha256_hex, Manifest, ManifestError};

/// Largest raster or block grid, in cells, any command will allocate.
pub const MAX_CELLS: usize = 1 << 24;

/// Exact total variation a passing oracle check must stay under.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("too large: {0}")]
    Sizing(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 runtime failure, 2 bad configuration, 3 problem too large.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Sizing(_) => 3,
        }
    }
}

fn invalid(e: impl Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::Sizing { .. } => CliError::Sizing(e.to_string()),
            _ => invalid(e),
        }
    }
}

impl From<GibbsError> for CliError {
    fn from(e: GibbsError) -> Self {
        invalid(e)
    }
}

impl From<PhaseError> for CliError {
    fn from(e: PhaseError) -> Self {
        invalid(e)
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Spec(_) | SamplerError::Gibbs(_) => invalid(e),
            _ => runtime(e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Lattice(l) => l.into(),
            AnalysisError::Empty => runtime(e),
            _ => invalid(e),
        }
    }
}

impl From<TauError> for CliError {
    fn from(e: TauError) -> Self {
        match e {
            TauError::Sampler(s) => s.into(),
            TauError::Empty => runtime(e),
            _ => invalid(e),
        }
    }
}

impl From<WulffError> for CliError {
    fn from(e: WulffError) -> Self {
        invalid(e)
    }
}

impl From<AnnealError> for CliError {
    fn from(e: AnnealError) -> Self {
        invalid(e)
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Lattice(l) => l.into(),
            EnsembleError::Sampler(s) => s.into(),
            _ => invalid(e),
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::Budget { .. } => CliError::Sizing(e.to_string()),
            ExactError::Mismatch => invalid(e),
            ExactError::Degenerate => runtime(e),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(_) => runtime(e),
            _ => invalid(e),
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Config(c) => c.into(),
            ManifestError::Format(_) => invalid(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Sample,
    EstimateTheta,
    EstimateThetaStar,
    PhasePartition,
    SurfaceEnergy,
    TauProbe,
    SlabProbe,
    Wulff,
    Anneal,
    Droplet,
    OracleCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Sample,
        Experiment::EstimateTheta,
        Experiment::EstimateThetaStar,
        Experiment::PhasePartition,
        Experiment::SurfaceEnergy,
        Experiment::TauProbe,
        Experiment::SlabProbe,
        Experiment::Wulff,
        Experiment::Anneal,
        Experiment::Droplet,
        Experiment::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sample => "sample",
            Experiment::EstimateTheta => "estimate-theta",
            Experiment::EstimateThetaStar => "estimate-theta-star",
            Experiment::PhasePartition => "phase-partition",
            Experiment::SurfaceEnergy => "surface-energy",
            Experiment::TauProbe => "tau-probe",
            Experiment::SlabProbe => "slab-probe",
            Experiment::Wulff => "wulff",
            Experiment::Anneal => "anneal",
            Experiment::Droplet => "droplet",
            Experiment::OracleCheck => "oracle-check",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

/// Everything an experiment produced, before anything is written.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, Vec<u8>)>,
    pub streams: Vec<u64>,
    /// `(path, sha256)` of files read.
    pub inputs: Vec<(String, String)>,
    /// `key: value` lines for the terminal.
    pub summary: Vec<String>,
    /// Set when the experiment ran but its check failed.
    pub failure: Option<String>,
}

impl Outcome {
    fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    fn note(&mut self, key: &str, value: impl Display) {
        self.summary.push(format!("{key}: {value}"));
    }
}

/// CSV text with a leading `run` column.
struct Csv {
    run: String,
    text: String,
}

impl Csv {
    fn new(run: &str, columns: &[&str]) -> Self {
        Self { run: run.to_string(), text: format!("run,{}\n", columns.join(",")) }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&self.run);
        for f in fields {
            self.text.push(',');
            self.text.push_str(f);
        }
        self.text.push('\n');
    }
}

/// Shortest round-trip decimal; `NaN` and `inf` as Rust prints them.
fn num(x: impl Display) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn check_cells(m: usize, d: usize) -> Result<(), CliError> {
    match m.checked_pow(d as u32) {
        Some(c) if c <= MAX_CELLS => Ok(()),
        _ => Err(CliError::Sizing(format!("{m}^{d} cells exceed the budget of {MAX_CELLS}"))),
    }
}

fn boundary_spec(cfg: &ExperimentConfig, d: usize, q: usize) -> Result<BoundarySpec, CliError> {
    Ok(match cfg.boundary {
        BoundaryKind::Free => BoundarySpec::free(d, q),
        BoundaryKind::Uniform => BoundarySpec::uniform(d, q, cfg.boundary_color)?,
        BoundaryKind::TopBottom => BoundarySpec::top_bottom(d, q, cfg.boundary_top, cfg.boundary_bottom)?,
        BoundaryKind::SixFace => BoundarySpec::six_face(d, q)?,
        BoundaryKind::Faces => BoundarySpec::faces(d, q, &cfg.boundary_faces)?,
    })
}

fn params(cfg: &ExperimentConfig) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(cfg.q, cfg.beta)?)
}

fn burn_in(cfg: &ExperimentConfig) -> usize {
    if cfg.burn_in == 0 {
        default_burn_in(cfg.n)
    } else {
        cfg.burn_in
    }
}

fn events(cfg: &ExperimentConfig) -> Result<TestEventSpec, CliError> {
    Ok(if cfg.event_eps == 0.0 {
        TestEventSpec::with_default_eps(cfg.q, cfg.event_theta)?
    } else {
        TestEventSpec::new(cfg.q, cfg.event_theta, cfg.event_eps)?
    })
}

fn block_side(cfg: &ExperimentConfig) -> usize {
    if cfg.block == 0 {
        intermediate_scale(cfg.n, cfg.d)
    } else {
        cfg.block
    }
}

fn tau_model(cfg: &ExperimentConfig) -> Result<TauModel, CliError> {
    let v = &cfg.tau_values;
    Ok(match cfg.tau {
        TauKind::Isotropic => match v.as_slice() {
            [c] => TauModel::isotropic(*c)?,
            _ => return Err(invalid(format!("isotropic tension takes one value, got {}", v.len()))),
        },
        TauKind::AxisL1 | TauKind::AxisEuclidean => {
            if v.len() != cfg.d {
                return Err(invalid(format!("axis tension takes d = {} values, got {}", cfg.d, v.len())));
            }
            let rule = if cfg.tau == TauKind::AxisL1 { AxisRule::L1 } else { AxisRule::Euclidean };
            TauModel::axis_anisotropic(v.clone(), rule)?
        }
    })
}

fn crystal(cfg: &ExperimentConfig) -> Result<WulffShape, CliError> {
    check_cells(cfg.wulff_m, cfg.d)?;
    Ok(wulff_crystal(&tau_model(cfg)?, cfg.d, cfg.wulff_m, cfg.wulff_directions)?)
}

fn chain(cfg: &ExperimentConfig) -> Result<(Lattice, ChainOutput), CliError> {
    let lat = Lattice::build_box(cfg.d, cfg.n)?;
    let boundary = discretize_boundary(&boundary_spec(cfg, cfg.d, cfg.q)?, &lat)?;
    let spec = RunSpec {
        params: params(cfg)?,
        boundary,
        sweeps: cfg.sweeps,
        burn_in: burn_in(cfg),
        thinning: cfg.thinning,
        replicas: cfg.replicas,
        seed: cfg.seed,
    };
    let out = sample_chain(&lat, &spec)?;
    Ok((lat, out))
}

fn replica_streams(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.replicas as u64).collect()
}

fn estimate_row(e: &Estimate) -> [String; 3] {
    [num(e.value), num(e.stderr), num(e.samples)]
}

/// Volume of the Euclidean unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Run `experiment` without touching the file system, except to read
/// `input.partition`.
pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let run = run_id(experiment.name(), cfg);
    let mut out = Outcome::default();
    match experiment {
        Experiment::Sample => sample(cfg, &run, &mut out)?,
        Experiment::EstimateTheta => estimate_theta(cfg, &run, &mut out)?,
        Experiment::EstimateThetaStar => estimate_theta_star(cfg, &run, &mut out)?,
        Experiment::PhasePartition => phase_partition(cfg, &run, &mut out)?,
        Experiment::SurfaceEnergy => surface(cfg, &run, &mut out)?,
        Experiment::TauProbe => tau_probe(cfg, &run, &mut out)?,
        Experiment::SlabProbe => slab_probe(cfg, &run, &mut out)?,
        Experiment::Wulff => wulff(cfg, &run, &mut out)?,
        Experiment::Anneal => anneal(cfg, &run, &mut out)?,
        Experiment::Droplet => droplet(cfg, &run, &mut out)?,
        Experiment::OracleCheck => oracle_check(cfg, &run, &mut out)?,
    }
    Ok(out)
}

fn sample(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let (lat, chain) = chain(cfg)?;
    let mut columns = vec!["replica".to_string(), "sweep".into(), "energy".into(), "open_bonds".into()];
    columns.extend((1..=cfg.q).map(|c| format!("count_{c}")));
    let mut csv = Csv::new(run, &columns.iter().map(String::as_str).collect::<Vec<_>>());
    for s in chain.samples() {
        let mut row = vec![num(s.replica), num(s.sweep), num(hamiltonian(&s.spins, &lat)), num(s.bonds.num_open())];
        row.extend(s.spins.color_counts()[1..].iter().map(|&c| num(c)));
        csv.row(&row);
    }
    out.file("samples.csv", csv.text);
    if cfg.snapshots {
        for r in &chain.replicas {
            if let Some(last) = r.samples.last() {
                let sweep = last.sweep as u64;
                let spin = Snapshot::spin(&last.spins, cfg.d, cfg.n, cfg.beta, cfg.seed, sweep)?;
                let bond = Snapshot::bond(&last.bonds, cfg.d, cfg.n, cfg.q, cfg.beta, cfg.seed, sweep)?;
                out.file(&format!("spins_r{}.txt", r.stream), spin.render());
                out.file(&format!("bonds_r{}.txt", r.stream), bond.render());
            }
        }
    }
    let energy = chain.energy();
    out.note("samples", chain.samples().count());
    out.note("mean_energy", energy.mean);
    out.streams = replica_streams(cfg);
    Ok(())
}

fn estimate_theta(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let (lat, chain) = chain(cfg)?;
    let site = lat.center_site();
    let order = order_parameter_estimate(chain.samples().map(|s| &s.spins), site, cfg.boundary_color)?;
    let perc = percolation_estimate(chain.samples().map(|s| &s.bonds), &lat, site)?;
    let mut csv = Csv::new(
        run,
        &[
            "d",
            "n",
            "q",
            "beta",
            "color",
            "site",
            "theta",
            "theta_stderr",
            "samples",
            "percolation",
            "percolation_stderr",
        ],
    );
    let mut row = vec![num(cfg.d), num(cfg.n), num(cfg.q), num(cfg.beta), num(cfg.boundary_color), num(site)];
    row.extend(estimate_row(&order));
    row.extend([num(perc.value), num(perc.stderr)]);
    csv.row(&row);
    out.file("theta.csv", csv.text);
    out.note("theta", format!("{} ± {}", order.value, order.stderr));
    out.note("percolation", format!("{} ± {}", perc.value, perc.stderr));
    out.streams = replica_streams(cfg);
    Ok(())
}

fn theta_star_estimate(cfg: &ExperimentConfig) -> Result<Estimate, CliError> {
    Ok(wired_percolation_fraction(cfg.d, cfg.n, &params(cfg)?, burn_in(cfg), cfg.sweeps, cfg.seed)?)
}

fn estimate_theta_star(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let e = theta_star_estimate(cfg)?;
    let mut csv = Csv::new(run, &["d", "n", "q", "beta", "theta_star", "stderr", "samples"]);
    let mut row = vec![num(cfg.d), num(cfg.n), num(cfg.q), num(cfg.beta)];
    row.extend(estimate_row(&e));
    csv.row(&row);
    out.file("theta_star.csv", csv.text);
    out.note("theta_star", format!("{} ± {}", e.value, e.stderr));
    out.streams = vec![0];
    Ok(())
}

fn phase_partition(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let spec = events(cfg)?;
    let f = block_side(cfg);
    let (lat, chain) = chain(cfg)?;
    let q = cfg.q;
    let mut columns = vec!["replica".to_string(), "sweep".into(), "perimeter".into()];
    columns.extend((0..=q).map(|i| format!("volume_{i}")));
    let mut series = Csv::new(run, &columns.iter().map(String::as_str).collect::<Vec<_>>());
    let mut volumes: Vec<Vec<f64>> = vec![Vec::new(); q + 1];
    let mut last = None;
    for s in chain.samples() {
        let p = empirical_phase_partition(&s.spins, &lat, &spec, f)?;
        let mut row = vec![num(s.replica), num(s.sweep), num(discrete_perimeter(&p))];
        for (i, v) in volumes.iter_mut().enumerate() {
            let vol = p.volume(i as u8);
            v.push(vol);
            row.push(num(vol));
        }
        series.row(&row);
        if s.replica == 0 {
            last = Some(p);
        }
    }
    let last = last.ok_or_else(|| runtime("no samples"))?;
    let mut phases = Csv::new(run, &["label", "mean_volume", "stderr", "samples"]);
    for (i, v) in volumes.iter().enumerate() {
        let e = batch_means(v, DEFAULT_BATCHES).ok_or_else(|| runtime("no samples"))?;
        let mut row = vec![num(i)];
        row.extend(estimate_row(&e));
        phases.row(&row);
    }
    out.file("partition.txt", render_partition(&last)?);
    out.file("phases.csv", phases.text);
    out.file("phase_series.csv", series.text);
    out.note("block_side", f);
    out.note("blocks_per_axis", last.grid().m());
    out.note("last_indefinite_volume", last.volume(0));
    out.streams = replica_streams(cfg);
    Ok(())
}

fn reference_kind(cfg: &ExperimentConfig) -> Option<ReferenceKind> {
    match cfg.anneal_reference {
        ReferenceChoice::None => None,
        ReferenceChoice::Pyramids => Some(ReferenceKind::Pyramids),
        ReferenceChoice::FlatSlab => {
            Some(ReferenceKind::FlatSlab { lower: cfg.boundary_bottom as u8, upper: cfg.boundary_top as u8 })
        }
    }
}

fn reference(cfg: &ExperimentConfig, grid: &BlockGrid) -> Result<Option<PhasePartition>, CliError> {
    reference_kind(cfg).map(|k| reference_partition(&k, grid, cfg.q, None).map_err(CliError::from)).transpose()
}

fn surface(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let tau = tau_model(cfg)?;
    let (source, partition) = if cfg.input_partition.is_empty() {
        check_cells(cfg.anneal_m, cfg.d)?;
        let grid = BlockGrid::uniform(cfg.d, cfg.anneal_m)?;
        let p = reference(cfg, &grid)?
            .ok_or_else(|| invalid("surface-energy needs input.partition or anneal.reference"))?;
        (cfg.anneal_reference.name().to_string(), p)
    } else {
        let bytes = std::fs::read(&cfg.input_partition)
            .map_err(|e| runtime(format!("reading {}: {e}", cfg.input_partition)))?;
        out.inputs.push((cfg.input_partition.clone(), sha256_hex(&bytes)));
        let p = parse_partition(&String::from_utf8_lossy(&bytes))?;
        ("input".to_string(), p)
    };
    let d = partition.grid().dim();
    if d != cfg.d && cfg.tau != TauKind::Isotropic {
        return Err(invalid(format!("partition has d = {d}, config has d = {}", cfg.d)));
    }
    let q = partition.q();
    let energy = surface_energy(&partition, &tau, &boundary_spec(cfg, d, q)?);
    let mut columns = vec!["source".to_string(), "m".into(), "q".into(), "energy".into(), "perimeter".into()];
    columns.extend((0..=q).map(|i| format!("volume_{i}")));
    let mut csv = Csv::new(run, &columns.iter().map(String::as_str).collect::<Vec<_>>());
    let mut row = vec![source, num(partition.grid().m()), num(q), num(energy), num(discrete_perimeter(&partition))];
    row.extend((0..=q).map(|i| num(partition.volume(i as u8))));
    csv.row(&row);
    out.file("energy.csv", csv.text);
    out.note("energy", energy);
    Ok(())
}

fn tau_probe(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let lat = Lattice::build_box(cfg.d, cfg.n)?;
    let spec = RunSpec {
        params: params(cfg)?,
        boundary: BoundaryAssignment::free(&lat),
        sweeps: cfg.tau_samples,
        burn_in: burn_in(cfg),
        thinning: 1,
        replicas: 1,
        seed: cfg.seed,
    };
    let chain = sample_chain(&lat, &spec)?;
    let mut csv = Csv::new(run, &["axis", "n", "samples", "cut_frequency", "tau_hat", "stderr", "censored"]);
    for axis in 0..cfg.d {
        let e = tau_estimate_from_samples(&lat, axis, chain.samples().map(|s| &s.bonds))?;
        csv.row(&[
            num(axis),
            num(e.n),
            num(e.samples),
            num(e.cut_frequency),
            num(e.tau_hat),
            num(e.stderr),
            num(e.censored),
        ]);
        let bound = if e.censored { " (lower bound)" } else { "" };
        out.note(&format!("tau_{axis}"), format!("{}{bound}", e.tau_hat));
    }
    out.file("tau.csv", csv.text);
    out.streams = vec![0];
    Ok(())
}

fn slab_probe(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let p = params(cfg)?.p();
    let mut probe = SlabProbeConfig::new(cfg.d, cfg.slab_half_thickness, cfg.slab_half_width, cfg.q, p);
    probe.alpha = cfg.slab_alpha;
    probe.burn_in = burn_in(cfg);
    probe.samples = cfg.sweeps;
    probe.seed = cfg.seed;
    probe.max_pairs = cfg.slab_max_pairs;
    let r = slab_lro_probe(&probe)?;
    let coords = |c: &[isize]| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let mut csv = Csv::new(
        run,
        &[
            "d",
            "half_thickness",
            "half_width",
            "q",
            "p",
            "min_frequency",
            "x",
            "y",
            "pairs_evaluated",
            "exhaustive",
            "samples",
        ],
    );
    csv.row(&[
        num(cfg.d),
        num(cfg.slab_half_thickness),
        num(cfg.slab_half_width),
        num(cfg.q),
        num(p),
        num(r.min_frequency),
        coords(&r.pair_coords.0),
        coords(&r.pair_coords.1),
        num(r.pairs_evaluated),
        num(r.exhaustive),
        num(r.samples),
    ]);
    out.file("slab.csv", csv.text);
    out.note("min_frequency", r.min_frequency);
    out.note("exhaustive", r.exhaustive);
    out.streams = vec![0];
    Ok(())
}

fn wulff(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let shape = crystal(cfg)?;
    let d = cfg.d;
    let ratio = match cfg.tau {
        TauKind::Isotropic => Some(shape.raster_volume() / (unit_ball_volume(d) * cfg.tau_values[0].powi(d as i32))),
        _ => None,
    };
    let mut columns = vec![
        "d".to_string(),
        "m".into(),
        "directions".into(),
        "raster_volume".into(),
        "ball_ratio".into(),
        "sphericity_cells".into(),
    ];
    columns.extend((0..d).map(|a| format!("extent_{a}")));
    let mut csv = Csv::new(run, &columns.iter().map(String::as_str).collect::<Vec<_>>());
    let mut row = vec![
        num(d),
        num(cfg.wulff_m),
        num(shape.num_directions()),
        num(shape.raster_volume()),
        opt(ratio),
        num(shape.sphericity_cells(200)),
    ];
    row.extend((0..d).map(|a| num(shape.axis_extent(a))));
    csv.row(&row);
    let labels = shape.cells().iter().map(|&c| u8::from(c)).collect();
    let raster = PhasePartition::new(BlockGrid::uniform(d, cfg.wulff_m)?, 1, labels)?;
    out.file("wulff.csv", csv.text);
    out.file("wulff_raster.txt", render_partition(&raster)?);
    out.note("raster_volume", shape.raster_volume());
    if let Some(r) = ratio {
        out.note("volume_ratio", r);
    }
    Ok(())
}

fn anneal(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    check_cells(cfg.anneal_m, cfg.d)?;
    if cfg.anneal_restarts == 0 {
        return Err(invalid("anneal.restarts must be at least 1"));
    }
    let tau = tau_model(cfg)?;
    let grid = BlockGrid::uniform(cfg.d, cfg.anneal_m)?;
    let boundary = boundary_spec(cfg, cfg.d, cfg.q)?;
    let constraint = if cfg.anneal_volumes.is_empty() {
        AnnealConstraint::None
    } else {
        AnnealConstraint::FixedVolumes(cfg.anneal_volumes.clone())
    };
    let t0 = if cfg.anneal_t0 == 0.0 { AnnealSchedule::default_for(&tau, &grid).t0 } else { cfg.anneal_t0 };
    let schedule = AnnealSchedule {
        t0,
        cooling: cfg.anneal_cooling,
        sweeps_per_level: cfg.anneal_sweeps_per_level,
        t_floor: cfg.anneal_floor_ratio * t0,
    };
    let initial = reference(cfg, &grid)?;
    let reference_energy = initial.as_ref().map(|p| surface_energy(p, &tau, &boundary));
    let results: Vec<AnnealResult> = (0..cfg.anneal_restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(cfg.seed, r);
            anneal_partition(&grid, cfg.q, &boundary, &tau, &constraint, &schedule, initial.as_ref(), &mut rng)
        })
        .collect::<Result<_, _>>()?;

    let mut summary = Csv::new(
        run,
        &[
            "restart",
            "initial_energy",
            "final_energy",
            "best_energy",
            "reference_energy",
            "moves",
            "levels",
            "max_audit_error",
        ],
    );
    let mut trace = Csv::new(run, &["restart", "level", "temperature", "energy", "best", "acceptance"]);
    let mut audits = Csv::new(run, &["restart", "moves", "incremental", "full", "error"]);
    for (r, res) in results.iter().enumerate() {
        summary.row(&[
            num(r),
            num(res.initial_energy),
            num(res.final_energy),
            num(res.best_energy),
            opt(reference_energy),
            num(res.moves),
            num(res.trace.len()),
            num(res.max_audit_error()),
        ]);
        for (k, t) in res.trace.iter().enumerate() {
            trace.row(&[num(r), num(k), num(t.temperature), num(t.energy), num(t.best), num(t.acceptance)]);
        }
        for a in &res.audits {
            audits.row(&[num(r), num(a.moves), num(a.incremental), num(a.full), num(a.error())]);
        }
    }
    // lowest energy, earliest restart on ties
    let best =
        results.iter().reduce(|a, b| if b.best_energy < a.best_energy { b } else { a }).expect("at least one restart");
    out.file("anneal.csv", summary.text);
    out.file("trace.csv", trace.text);
    out.file("audits.csv", audits.text);
    out.file("best.txt", render_partition(&best.best)?);
    out.note("best_energy", best.best_energy);
    if let Some(e) = reference_energy {
        out.note("reference_energy", e);
    }
    out.note("max_audit_error", results.iter().map(AnnealResult::max_audit_error).fold(0.0, f64::max));
    out.streams = (0..cfg.anneal_restarts as u64).collect();
    Ok(())
}

fn droplet(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let shape = crystal(cfg)?;
    let theta_star =
        if cfg.ensemble_theta_star == 0.0 { theta_star_estimate(cfg)?.value } else { cfg.ensemble_theta_star };
    let thresholds = if cfg.ensemble_thresholds.is_empty() {
        vec![(1.0 - theta_star) / cfg.q as f64; cfg.q.saturating_sub(1)]
    } else {
        cfg.ensemble_thresholds.clone()
    };
    let mode = match cfg.ensemble_mode {
        ConditioningKind::Rejection => Conditioning::Rejection,
        ConditioningKind::Tilted => {
            if cfg.ensemble_field.len() != cfg.q {
                return Err(invalid(format!("ensemble.field needs q = {} values", cfg.q)));
            }
            Conditioning::Tilted { field: cfg.ensemble_field.clone() }
        }
    };
    let dc = DropletConfig {
        d: cfg.d,
        n: cfg.n,
        params: params(cfg)?,
        boundary_color: cfg.boundary_color,
        thresholds,
        theta_star,
        events: events(cfg)?,
        block: block_side(cfg),
        mode,
        burn_in: burn_in(cfg),
        sweeps: cfg.sweeps,
        seed: cfg.seed,
    };
    let r = droplet_experiment(&dc, &shape)?;
    let mut csv = Csv::new(
        run,
        &[
            "theta_star",
            "target_volume",
            "sweeps",
            "accepted",
            "acceptance_rate",
            "effective_samples",
            "mean_fraction",
            "mean_fraction_stderr",
            "single_component_fraction",
            "mean_wulff_distance",
        ],
    );
    csv.row(&[
        num(theta_star),
        num(r.target_volume),
        num(r.sweeps),
        num(r.accepted),
        num(r.acceptance_rate),
        num(r.effective_samples),
        opt(r.mean_fraction.map(|e| e.value)),
        opt(r.mean_fraction.map(|e| e.stderr)),
        opt(r.single_component_fraction),
        opt(r.mean_wulff_distance),
    ]);
    out.file("droplet.csv", csv.text);
    if let Some(p) = &r.last_partition {
        out.file("droplet_partition.txt", render_partition(p)?);
    }
    out.note("theta_star", theta_star);
    out.note("target_volume", r.target_volume);
    out.note("acceptance_rate", r.acceptance_rate);
    out.streams = vec![0];
    Ok(())
}

fn oracle_check(cfg: &ExperimentConfig, run: &str, out: &mut Outcome) -> Result<(), CliError> {
    let (d, n, q) = (cfg.oracle_d, cfg.oracle_n, cfg.oracle_q);
    let lat = if d == 1 { Lattice::chain(n)? } else { Lattice::build_box(d, n)? };
    let params = ModelParams::new(q, cfg.oracle_beta)?;
    let mut cases = vec![("free".to_string(), BoundaryAssignment::free(&lat))];
    if cfg.boundary != BoundaryKind::Free {
        if d == 1 {
            return Err(invalid("boundary conditions on a chain are not supported"));
        }
        let b = discretize_boundary(&boundary_spec(cfg, d, q)?, &lat)?;
        cases.push((cfg.boundary.name().to_string(), b));
    }
    let mut csv = Csv::new(run, &["boundary", "d", "n", "q", "beta", "spin_states", "spin_tv", "bond_tv", "pass"]);
    let mut failed = Vec::new();
    for (name, b) in &cases {
        let t = enumerate_exact(&lat, &params, b)?;
        let (s, e) = (t.spin_tv(), t.bond_tv());
        let pass = s < ORACLE_TOLERANCE && e < ORACLE_TOLERANCE;
        if !pass {
            failed.push(name.clone());
        }
        csv.row(&[
            name.clone(),
            num(d),
            num(n),
            num(q),
            num(cfg.oracle_beta),
            num(t.potts.len()),
            num(s),
            num(e),
            num(pass),
        ]);
        out.note(&format!("{name}.spin_tv"), s);
        out.note(&format!("{name}.bond_tv"), e);
    }
    out.file("oracle.csv", csv.text);
    if !failed.is_empty() {
        out.failure = Some(format!("oracle mismatch above {ORACLE_TOLERANCE} for {}", failed.join(", ")));
    }
    Ok(())
}

pub fn manifest_for(experiment: Experiment, cfg: &ExperimentConfig, outcome: &Outcome) -> Manifest {
    Manifest {
        command: experiment.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        run: run_id(experiment.name(), cfg),
        config_sha256: sha256_hex(format!("{}\n{}", experiment.name(), cfg.canonical()).as_bytes()),
        seed: cfg.seed,
        streams: outcome.streams.clone(),
        inputs: outcome.inputs.clone(),
        artifacts: outcome.files.iter().map(|(name, bytes)| (name.clone(), sha256_hex(bytes))).collect(),
        config: cfg.clone(),
    }
}

/// Write every artifact, then `manifest.txt`, into `cfg.output_dir`.
pub fn write_run(experiment: Experiment, cfg: &ExperimentConfig, outcome: &Outcome) -> Result<Manifest, CliError> {
    let dir = Path::new(&cfg.output_dir);
    let io = |e: std::io::Error| runtime(format!("writing {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, bytes) in &outcome.files {
        std::fs::write(dir.join(name), bytes).map_err(io)?;
    }
    let manifest = manifest_for(experiment, cfg, outcome);
    std::fs::write(dir.join("manifest.txt"), manifest.render()).map_err(io)?;
    Ok(manifest)
}

/// Run, write, and report the check failure, if any, as an error.
pub fn execute(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let outcome = run_experiment(experiment, cfg)?;
    write_run(experiment, cfg, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerunReport {
    pub out_dir: PathBuf,
    /// Artifacts or inputs whose digest differs, or that were not produced.
    pub mismatches: Vec<String>,
    pub checked: usize,
}

/// Replay the configuration recorded in a manifest into `out` (default:
/// `rerun/` beside the manifest) and compare digests.
pub fn rerun(manifest_path: &Path, out: Option<&Path>) -> Result<(RerunReport, Outcome), CliError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| runtime(format!("reading {}: {e}", manifest_path.display())))?;
    let recorded = Manifest::parse(&text)?;
    let experiment = Experiment::from_name(&recorded.command)
        .ok_or_else(|| invalid(format!("unknown command {:?} in manifest", recorded.command)))?;
    let out_dir = match out {
        Some(p) => p.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("rerun"),
    };
    let mut cfg = recorded.config.clone();
    cfg.output_dir = out_dir.to_string_lossy().into_owned();
    let outcome = run_experiment(experiment, &cfg)?;
    let fresh = write_run(experiment, &cfg, &outcome)?;

    let mut mismatches = Vec::new();
    if fresh.config_sha256 != recorded.config_sha256 {
        mismatches.push("config_sha256".to_string());
    }
    for (expected, label) in [(&recorded.inputs, "input"), (&recorded.artifacts, "artifact")] {
        let got = if label == "input" { &fresh.inputs } else { &fresh.artifacts };
        for (name, digest) in expected {
            if got.iter().find(|(n, _)| n == name).map(|(_, d)| d) != Some(digest) {
                mismatches.push(format!("{label} {name}"));
            }
        }
        for (name, _) in got {
            if !expected.iter().any(|(n, _)| n == name) {
                mismatches.push(format!("unexpected {label} {name}"));
            }
        }
    }
    let checked = recorded.artifacts.len() + recorded.inputs.len();
    Ok((RerunReport { out_dir, mismatches, checked }, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
        assert_eq!(Experiment::from_name("rerun"), None);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn csv_rows_carry_run() {
        let mut csv = Csv::new("abc", &["x", "y"]);
        csv.row(&[num(1), num(0.5)]);
        assert_eq!(csv.text, "run,x,y\nabc,1,0.5\n");
    }

    #[test]
    fn sizing_errors_map_to_three() {
        let cfg = ExperimentConfig { n: 1 << 20, ..ExperimentConfig::default() };
        let err = run_experiment(Experiment::Sample, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
        let cfg = ExperimentConfig { oracle_n: 3, oracle_q: 4, ..ExperimentConfig::default() };
        assert_eq!(run_experiment(Experiment::OracleCheck, &cfg).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn bad_values_map_to_two() {
        let cfg = ExperimentConfig { tau_values: vec![1.0, 2.0], ..ExperimentConfig::default() };
        assert_eq!(run_experiment(Experiment::Wulff, &cfg).unwrap_err().exit_code(), 2);
        let cfg = ExperimentConfig { boundary_color: 9, ..ExperimentConfig::default() };
        assert_eq!(run_experiment(Experiment::Sample, &cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn oracle_passes_on_defaults() {
        let out = run_experiment(Experiment::OracleCheck, &ExperimentConfig::default()).unwrap();
        assert!(out.failure.is_none(), "{:?}", out.summary);
        assert_eq!(out.files.len(), 1);
    }

    #[test]
    fn oracle_chain_has_n_plus_one_sites() {
        let cfg = ExperimentConfig { oracle_d: 1, oracle_n: 3, boundary: BoundaryKind::Free, ..Default::default() };
        let out = run_experiment(Experiment::OracleCheck, &cfg).unwrap();
        let csv = String::from_utf8(out.files[0].1.clone()).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[6], "16");
        assert!(out.failure.is_none());
    }

    #[test]
    fn experiments_are_deterministic() {
        let cfg = ExperimentConfig { n: 4, sweeps: 50, burn_in: 10, ..ExperimentConfig::default() };
        for e in [Experiment::Sample, Experiment::PhasePartition, Experiment::TauProbe] {
            let a = run_experiment(e, &cfg).unwrap();
            let b = run_experiment(e, &cfg).unwrap();
            assert_eq!(a.files, b.files, "{}", e.name());
        }
    }
}
