//! Run manifests: what was run, with which configuration, and the digest of
//! every artifact it wrote.
//!
//! ```text
//! POTTSLAB-MANIFEST v1
//! command = anneal
//! version = 0.1.0
//! run = 3f2a9c0d41b7e655
//! config_sha256 = <64 hex digits>
//! seed = 1
//! streams = 0,1,2
//! input = <path> <sha256>
//! artifact = anneal.csv <sha256>
//! [config]
//! model.d = 3
//! ...
//! ```
//!
//! No timestamps or host data are recorded, so a rerun reproduces the
//! manifest too, up to `output.dir`.

use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ExperimentConfig};

pub const MAGIC: &str = "POTTSLAB-MANIFEST v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Short identifier of `(command, canonical config)` used as the reference
/// column in every CSV.
pub fn run_id(command: &str, config: &ExperimentConfig) -> String {
    sha256_hex(format!("{command}\n{}", config.canonical()).as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub run: String,
    pub config_sha256: String,
    pub seed: u64,
    pub streams: Vec<u64>,
    /// `(path, sha256)` of files read.
    pub inputs: Vec<(String, String)>,
    /// `(file name, sha256)` in write order.
    pub artifacts: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("not a manifest: {0}")]
    Format(String),
    #[error("embedded configuration: {0}")]
    Config(#[from] ConfigError),
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{MAGIC}\ncommand = {}\nversion = {}\nrun = {}\nconfig_sha256 = {}\nseed = {}\nstreams = {}\n",
            self.command,
            self.version,
            self.run,
            self.config_sha256,
            self.seed,
            self.streams.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        );
        for (path, digest) in &self.inputs {
            out.push_str(&format!("input = {path} {digest}\n"));
        }
        for (name, digest) in &self.artifacts {
            out.push_str(&format!("artifact = {name} {digest}\n"));
        }
        out.push_str("[config]\n");
        out.push_str(&self.config.render());
        out
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let bad = |s: &str| ManifestError::Format(s.to_string());
        let (head, config) = text.split_once("[config]\n").ok_or_else(|| bad("missing [config] section"))?;
        let mut lines = head.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header line"));
        }
        let mut m = Manifest {
            command: String::new(),
            version: String::new(),
            run: String::new(),
            config_sha256: String::new(),
            seed: 0,
            streams: Vec::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            config: ExperimentConfig::parse(config)?,
        };
        for line in lines {
            let (key, value) = line.split_once(" = ").ok_or_else(|| bad(line))?;
            match key {
                "command" => m.command = value.into(),
                "version" => m.version = value.into(),
                "run" => m.run = value.into(),
                "config_sha256" => m.config_sha256 = value.into(),
                "seed" => m.seed = value.parse().map_err(|_| bad(line))?,
                "streams" => {
                    m.streams = value
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| bad(line)))
                        .collect::<Result<_, _>>()?
                }
                "input" | "artifact" => {
                    let (name, digest) = value.rsplit_once(' ').ok_or_else(|| bad(line))?;
                    let entry = (name.to_string(), digest.to_string());
                    if key == "input" {
                        m.inputs.push(entry);
                    } else {
                        m.artifacts.push(entry);
                    }
                }
                _ => return Err(bad(line)),
            }
        }
        if m.command.is_empty() {
            return Err(bad("missing command"));
        }
        Ok(m)
    }
}
