//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a valid configuration. Unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}` appears twice")]
    Duplicate { key: String },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Free,
    Uniform,
    TopBottom,
    SixFace,
    Faces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauKind {
    Isotropic,
    AxisL1,
    AxisEuclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceChoice {
    None,
    Pyramids,
    FlatSlab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningKind {
    Rejection,
    Tilted,
}

macro_rules! keyword_enum {
    ($ty:ty, $($name:literal => $variant:expr),+ $(,)?) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                $(if self == $variant { return $name; })+
                unreachable!()
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("expected one of {}", [$($name),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(BoundaryKind,
    "free" => BoundaryKind::Free,
    "uniform" => BoundaryKind::Uniform,
    "top-bottom" => BoundaryKind::TopBottom,
    "six-face" => BoundaryKind::SixFace,
    "faces" => BoundaryKind::Faces,
);
keyword_enum!(TauKind,
    "isotropic" => TauKind::Isotropic,
    "axis-l1" => TauKind::AxisL1,
    "axis-euclidean" => TauKind::AxisEuclidean,
);
keyword_enum!(ReferenceChoice,
    "none" => ReferenceChoice::None,
    "pyramids" => ReferenceChoice::Pyramids,
    "flat-slab" => ReferenceChoice::FlatSlab,
);
keyword_enum!(ConditioningKind,
    "rejection" => ConditioningKind::Rejection,
    "tilted" => ConditioningKind::Tilted,
);

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    pub q: usize,
    pub beta: f64,

    pub boundary: BoundaryKind,
    pub boundary_color: usize,
    pub boundary_top: usize,
    pub boundary_bottom: usize,
    /// Colour of face `2a + side`, used by `faces`.
    pub boundary_faces: Vec<usize>,

    pub sweeps: usize,
    /// 0 selects the default burn-in for the lattice size.
    pub burn_in: usize,
    pub thinning: usize,
    pub replicas: usize,
    pub seed: u64,

    /// Write the last state of every replica as snapshots.
    pub snapshots: bool,
    pub event_theta: f64,
    /// 0 selects the default tolerance.
    pub event_eps: f64,
    /// Block side in lattice units; 0 selects the intermediate scale.
    pub block: usize,

    pub tau: TauKind,
    pub tau_values: Vec<f64>,
    pub tau_samples: usize,

    pub slab_half_thickness: usize,
    pub slab_half_width: usize,
    pub slab_alpha: f64,
    pub slab_max_pairs: usize,

    pub wulff_m: usize,
    pub wulff_directions: usize,

    pub anneal_m: usize,
    /// 0 selects the default schedule.
    pub anneal_t0: f64,
    pub anneal_cooling: f64,
    pub anneal_sweeps_per_level: usize,
    pub anneal_floor_ratio: f64,
    pub anneal_restarts: usize,
    pub anneal_reference: ReferenceChoice,
    /// Fixed volumes of labels `2..=q`; empty for an unconstrained run.
    pub anneal_volumes: Vec<f64>,

    pub ensemble_mode: ConditioningKind,
    /// `s_2..s_q`; empty puts every threshold at its minimum `(1 - θ)/q`.
    pub ensemble_thresholds: Vec<f64>,
    pub ensemble_field: Vec<f64>,
    /// 0 estimates the wired percolation fraction first.
    pub ensemble_theta_star: f64,

    /// Partition file for `surface-energy`; empty evaluates the reference.
    pub input_partition: String,

    pub oracle_d: usize,
    pub oracle_n: usize,
    pub oracle_q: usize,
    pub oracle_beta: f64,

    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 3,
            n: 8,
            q: 2,
            beta: 1.0,
            boundary: BoundaryKind::Uniform,
            boundary_color: 1,
            boundary_top: 1,
            boundary_bottom: 2,
            boundary_faces: Vec::new(),
            sweeps: 1000,
            burn_in: 0,
            thinning: 1,
            replicas: 2,
            seed: 1,
            snapshots: false,
            event_theta: 0.3,
            event_eps: 0.0,
            block: 0,
            tau: TauKind::Isotropic,
            tau_values: vec![1.0],
            tau_samples: 1000,
            slab_half_thickness: 2,
            slab_half_width: 4,
            slab_alpha: 1.0,
            slab_max_pairs: 1_000_000,
            wulff_m: 128,
            wulff_directions: 512,
            anneal_m: 16,
            anneal_t0: 0.0,
            anneal_cooling: 0.97,
            anneal_sweeps_per_level: 50,
            anneal_floor_ratio: 1e-3,
            anneal_restarts: 1,
            anneal_reference: ReferenceChoice::None,
            anneal_volumes: Vec::new(),
            ensemble_mode: ConditioningKind::Rejection,
            ensemble_thresholds: Vec::new(),
            ensemble_field: Vec::new(),
            ensemble_theta_star: 0.0,
            input_partition: String::new(),
            oracle_d: 2,
            oracle_n: 1,
            oracle_q: 2,
            oracle_beta: 0.7,
            output_dir: "out".into(),
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<T>().map_err(|e| e.to_string())).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_scalar<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

/// Every key in rendering order.
pub const KEYS: &[&str] = &[
    "model.d",
    "model.n",
    "model.q",
    "model.beta",
    "boundary.kind",
    "boundary.color",
    "boundary.top",
    "boundary.bottom",
    "boundary.faces",
    "run.sweeps",
    "run.burn_in",
    "run.thinning",
    "run.replicas",
    "run.seed",
    "analysis.snapshots",
    "analysis.theta",
    "analysis.eps",
    "analysis.block",
    "tau.kind",
    "tau.values",
    "tau.samples",
    "slab.half_thickness",
    "slab.half_width",
    "slab.alpha",
    "slab.max_pairs",
    "wulff.m",
    "wulff.directions",
    "anneal.m",
    "anneal.t0",
    "anneal.cooling",
    "anneal.sweeps_per_level",
    "anneal.floor_ratio",
    "anneal.restarts",
    "anneal.reference",
    "anneal.volumes",
    "ensemble.mode",
    "ensemble.thresholds",
    "ensemble.field",
    "ensemble.theta_star",
    "input.partition",
    "oracle.d",
    "oracle.n",
    "oracle.q",
    "oracle.beta",
    "output.dir",
];

impl ExperimentConfig {
    fn get(&self, key: &str) -> String {
        match key {
            "model.d" => self.d.to_string(),
            "model.n" => self.n.to_string(),
            "model.q" => self.q.to_string(),
            "model.beta" => self.beta.to_string(),
            "boundary.kind" => self.boundary.name().into(),
            "boundary.color" => self.boundary_color.to_string(),
            "boundary.top" => self.boundary_top.to_string(),
            "boundary.bottom" => self.boundary_bottom.to_string(),
            "boundary.faces" => list(&self.boundary_faces),
            "run.sweeps" => self.sweeps.to_string(),
            "run.burn_in" => self.burn_in.to_string(),
            "run.thinning" => self.thinning.to_string(),
            "run.replicas" => self.replicas.to_string(),
            "run.seed" => self.seed.to_string(),
            "analysis.snapshots" => self.snapshots.to_string(),
            "analysis.theta" => self.event_theta.to_string(),
            "analysis.eps" => self.event_eps.to_string(),
            "analysis.block" => self.block.to_string(),
            "tau.kind" => self.tau.name().into(),
            "tau.values" => list(&self.tau_values),
            "tau.samples" => self.tau_samples.to_string(),
            "slab.half_thickness" => self.slab_half_thickness.to_string(),
            "slab.half_width" => self.slab_half_width.to_string(),
            "slab.alpha" => self.slab_alpha.to_string(),
            "slab.max_pairs" => self.slab_max_pairs.to_string(),
            "wulff.m" => self.wulff_m.to_string(),
            "wulff.directions" => self.wulff_directions.to_string(),
            "anneal.m" => self.anneal_m.to_string(),
            "anneal.t0" => self.anneal_t0.to_string(),
            "anneal.cooling" => self.anneal_cooling.to_string(),
            "anneal.sweeps_per_level" => self.anneal_sweeps_per_level.to_string(),
            "anneal.floor_ratio" => self.anneal_floor_ratio.to_string(),
            "anneal.restarts" => self.anneal_restarts.to_string(),
            "anneal.reference" => self.anneal_reference.name().into(),
            "anneal.volumes" => list(&self.anneal_volumes),
            "ensemble.mode" => self.ensemble_mode.name().into(),
            "ensemble.thresholds" => list(&self.ensemble_thresholds),
            "ensemble.field" => list(&self.ensemble_field),
            "ensemble.theta_star" => self.ensemble_theta_star.to_string(),
            "input.partition" => self.input_partition.clone(),
            "oracle.d" => self.oracle_d.to_string(),
            "oracle.n" => self.oracle_n.to_string(),
            "oracle.q" => self.oracle_q.to_string(),
            "oracle.beta" => self.oracle_beta.to_string(),
            "output.dir" => self.output_dir.clone(),
            _ => unreachable!("key list and accessor disagree"),
        }
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let r: Result<(), String> = (|| {
            match key {
                "model.d" => self.d = parse_scalar(value)?,
                "model.n" => self.n = parse_scalar(value)?,
                "model.q" => self.q = parse_scalar(value)?,
                "model.beta" => self.beta = parse_scalar(value)?,
                "boundary.kind" => self.boundary = value.parse()?,
                "boundary.color" => self.boundary_color = parse_scalar(value)?,
                "boundary.top" => self.boundary_top = parse_scalar(value)?,
                "boundary.bottom" => self.boundary_bottom = parse_scalar(value)?,
                "boundary.faces" => self.boundary_faces = parse_list(value)?,
                "run.sweeps" => self.sweeps = parse_scalar(value)?,
                "run.burn_in" => self.burn_in = parse_scalar(value)?,
                "run.thinning" => self.thinning = parse_scalar(value)?,
                "run.replicas" => self.replicas = parse_scalar(value)?,
                "run.seed" => self.seed = parse_scalar(value)?,
                "analysis.snapshots" => self.snapshots = parse_bool(value)?,
                "analysis.theta" => self.event_theta = parse_scalar(value)?,
                "analysis.eps" => self.event_eps = parse_scalar(value)?,
                "analysis.block" => self.block = parse_scalar(value)?,
                "tau.kind" => self.tau = value.parse()?,
                "tau.values" => self.tau_values = parse_list(value)?,
                "tau.samples" => self.tau_samples = parse_scalar(value)?,
                "slab.half_thickness" => self.slab_half_thickness = parse_scalar(value)?,
                "slab.half_width" => self.slab_half_width = parse_scalar(value)?,
                "slab.alpha" => self.slab_alpha = parse_scalar(value)?,
                "slab.max_pairs" => self.slab_max_pairs = parse_scalar(value)?,
                "wulff.m" => self.wulff_m = parse_scalar(value)?,
                "wulff.directions" => self.wulff_directions = parse_scalar(value)?,
                "anneal.m" => self.anneal_m = parse_scalar(value)?,
                "anneal.t0" => self.anneal_t0 = parse_scalar(value)?,
                "anneal.cooling" => self.anneal_cooling = parse_scalar(value)?,
                "anneal.sweeps_per_level" => self.anneal_sweeps_per_level = parse_scalar(value)?,
                "anneal.floor_ratio" => self.anneal_floor_ratio = parse_scalar(value)?,
                "anneal.restarts" => self.anneal_restarts = parse_scalar(value)?,
                "anneal.reference" => self.anneal_reference = value.parse()?,
                "anneal.volumes" => self.anneal_volumes = parse_list(value)?,
                "ensemble.mode" => self.ensemble_mode = value.parse()?,
                "ensemble.thresholds" => self.ensemble_thresholds = parse_list(value)?,
                "ensemble.field" => self.ensemble_field = parse_list(value)?,
                "ensemble.theta_star" => self.ensemble_theta_star = parse_scalar(value)?,
                "input.partition" => self.input_partition = value.to_string(),
                "oracle.d" => self.oracle_d = parse_scalar(value)?,
                "oracle.n" => self.oracle_n = parse_scalar(value)?,
                "oracle.q" => self.oracle_q = parse_scalar(value)?,
                "oracle.beta" => self.oracle_beta = parse_scalar(value)?,
                "output.dir" => self.output_dir = value.to_string(),
                _ => return Err(String::new()),
            }
            Ok(())
        })();
        match r {
            Ok(()) => Ok(()),
            Err(_) if !KEYS.contains(&key) => Err(ConfigError::UnknownKey(key.to_string())),
            Err(reason) => Err(ConfigError::Value { key: key.into(), value: value.into(), reason }),
        }
    }

    /// Apply `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: k + 1, text: raw.to_string() })?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate { key: key.into() });
            }
            seen.push(key);
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// All keys in fixed order, one per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key)).expect("string write");
        }
        out
    }

    /// Rendering without `output.dir`: identifies the experiment regardless
    /// of where its artifacts are written.
    pub fn canonical(&self) -> String {
        self.render().lines().filter(|l| !l.starts_with("output.dir ")).map(|l| format!("{l}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(ExperimentConfig::parse("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_named() {
        let err = ExperimentConfig::parse("model.q = 3\nmodel.bta = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("model.bta".into()));
        assert!(err.to_string().contains("model.bta"));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(matches!(ExperimentConfig::parse("model.q = three"), Err(ConfigError::Value { .. })));
        assert!(matches!(ExperimentConfig::parse("tau.kind = round"), Err(ConfigError::Value { .. })));
        assert!(matches!(ExperimentConfig::parse("model.q"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("run.seed = 1\nrun.seed = 2"), Err(ConfigError::Duplicate { .. })));
    }

    #[test]
    fn comments_and_spacing() {
        let c = ExperimentConfig::parse("  model.beta=2.5   # hot\nboundary.faces = 1, 2,3,4\n").unwrap();
        assert_eq!(c.beta, 2.5);
        assert_eq!(c.boundary_faces, vec![1, 2, 3, 4]);
    }

    #[test]
    fn every_key_renders_once() {
        let text = ExperimentConfig::default().render();
        assert_eq!(text.lines().count(), KEYS.len());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, Just(0.0), Just(1e-300), Just(f64::MAX)]
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            (any::<usize>(), any::<usize>(), any::<u64>(), finite(), finite()),
            prop::collection::vec(finite(), 0..5),
            prop::collection::vec(0usize..40, 0..7),
            (any::<bool>(), 0usize..5, 0usize..3, 0usize..3, 0usize..2),
            "[a-zA-Z0-9_/.-]{1,20}",
        )
            .prop_map(|((n, sweeps, seed, beta, t0), values, faces, (snap, b, t, r, m), dir)| {
                ExperimentConfig {
                    n,
                    sweeps,
                    seed,
                    beta,
                    anneal_t0: t0,
                    tau_values: values.clone(),
                    ensemble_field: values,
                    boundary_faces: faces,
                    snapshots: snap,
                    boundary: [
                        BoundaryKind::Free,
                        BoundaryKind::Uniform,
                        BoundaryKind::TopBottom,
                        BoundaryKind::SixFace,
                        BoundaryKind::Faces,
                    ][b],
                    tau: [TauKind::Isotropic, TauKind::AxisL1, TauKind::AxisEuclidean][t],
                    anneal_reference: [ReferenceChoice::None, ReferenceChoice::Pyramids, ReferenceChoice::FlatSlab][r],
                    ensemble_mode: [ConditioningKind::Rejection, ConditioningKind::Tilted][m],
                    output_dir: dir,
                    ..ExperimentConfig::default()
                }
            })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(c in arb_config()) {
            prop_assert_eq!(ExperimentConfig::parse(&c.render()).unwrap(), c);
        }
    }
}
