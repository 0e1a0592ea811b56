//! Conditional ensembles `G_n = {S_n(i) >= s_i for i = 2..=q}` and the
//! droplet experiment comparing conditioned samples with the Wulff shape.

use std::collections::VecDeque;

use thiserror::Error;

use crate::cluster::clusters;
use crate::gibbs::{ModelParams, SpinConfig};
use crate::lattice::{discretize_boundary, BoundarySpec, Lattice, LatticeError};
use crate::phase::{dist_l1, empirical_phase_partition, BlockSet, PhaseError, PhasePartition, TestEventSpec};
use crate::rng::RngStream;
use crate::sampler::{es_bond_step, es_color_step, es_color_step_tilted, SamplerError};
use crate::stats::{batch_means, Estimate, DEFAULT_BATCHES};
use crate::wulff::{droplet_partition, droplet_scale, WulffShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("theta must be positive (got {0})")]
    Theta(f64),
    #[error("threshold s_{color} = {s} is below (1 - theta)/q = {min}")]
    Threshold { color: usize, s: f64, min: f64 },
    #[error("expected {expected} thresholds, got {got}")]
    Count { expected: usize, got: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

/// `v_i = (s_i - (1 - θ)/q) / θ` for thresholds `s_2..s_q`, where `θ` is the
/// percolation probability of the wired FK measure.
pub fn target_volumes(thresholds: &[f64], theta: f64, q: usize) -> Result<Vec<f64>, EnsembleError> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(EnsembleError::Theta(theta));
    }
    if thresholds.len() + 1 != q {
        return Err(EnsembleError::Count { expected: q - 1, got: thresholds.len() });
    }
    let min = (1.0 - theta) / q as f64;
    thresholds
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            if s < min - 1e-12 {
                Err(EnsembleError::Threshold { color: k + 2, s, min })
            } else {
                Ok((s - min) / theta)
            }
        })
        .collect()
}

/// Colour fractions `S_n(i)` over all sites (index `0` unused) and whether
/// `S_n(i) >= s_i` for every `i >= 2`.
pub fn ensemble_condition_check(sigma: &SpinConfig, thresholds: &[f64]) -> (bool, Vec<f64>) {
    let counts = sigma.color_counts();
    let total = sigma.len() as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let ok = thresholds.iter().enumerate().all(|(k, &s)| fractions.get(k + 2).copied().unwrap_or(0.0) >= s);
    (ok, fractions)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    /// Keep only samples in `G_n`.
    Rejection,
    /// Sample the measure tilted by `exp(Σ_c h_c N_c)` (`field[c - 1] = h_c`)
    /// and reweight by `exp(-Σ_c h_c N_c)` on `G_n`.
    Tilted { field: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropletConfig {
    pub d: usize,
    pub n: usize,
    pub params: ModelParams,
    /// Colour of the whole boundary.
    pub boundary_color: usize,
    /// `s_2..s_q`.
    pub thresholds: Vec<f64>,
    /// Percolation probability used for the target volume.
    pub theta_star: f64,
    pub events: TestEventSpec,
    /// Block side in lattice units.
    pub block: usize,
    pub mode: Conditioning,
    pub burn_in: usize,
    pub sweeps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropletReport {
    pub sweeps: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// Natural-log importance weights of the accepted samples (all zero
    /// under rejection).
    pub log_weights: Vec<f64>,
    pub effective_samples: f64,
    /// Weighted mean of `S_n(2)` given `G_n`.
    pub mean_fraction: Option<Estimate>,
    pub target_volume: f64,
    /// Among accepted samples with minority blocks, the fraction whose
    /// minority blocks form one face-connected component.
    pub single_component_fraction: Option<f64>,
    /// Mean over accepted samples of the distance from the minority phase to
    /// the best translate of the rescaled crystal.
    pub mean_wulff_distance: Option<f64>,
    pub last_partition: Option<PhasePartition>,
}

/// Number of face-connected components of a block set.
pub fn block_components(set: &BlockSet) -> usize {
    let g = &set.grid;
    let mut seen = vec![false; g.num_blocks()];
    let mut queue = VecDeque::new();
    let mut count = 0;
    for start in 0..g.num_blocks() {
        if !set.members[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(b) = queue.pop_front() {
            for a in 0..g.dim() {
                for nb in [g.up(b, a), g.down(b, a)].into_iter().flatten() {
                    if set.members[nb] && !seen[nb] {
                        seen[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    count
}

/// Smallest `dist_l1` between `set` and `center + λW` over block-centre
/// translates.
pub fn best_translate_distance(set: &BlockSet, shape: &WulffShape, lambda: f64) -> Result<f64, EnsembleError> {
    let g = &set.grid;
    let mut best = f64::INFINITY;
    for c in 0..g.num_blocks() {
        let center = g.center(c);
        let drop = droplet_partition(g, 1, shape, &center, lambda, 1, 0).map_err(|e| match e {
            crate::wulff::WulffError::Phase(p) => EnsembleError::Phase(p),
            other => EnsembleError::Phase(PhaseError::Spec(other.to_string())),
        })?;
        best = best.min(dist_l1(set, &drop.phase(1))?);
    }
    Ok(best)
}

/// Sample `μ_n` with a constant boundary colour, condition on `G_n` and
/// analyse the minority phase of the accepted samples.
pub fn droplet_experiment(cfg: &DropletConfig, shape: &WulffShape) -> Result<DropletReport, EnsembleError> {
    let q = cfg.params.q();
    let volumes = target_volumes(&cfg.thresholds, cfg.theta_star, q)?;
    let target_volume: f64 = volumes.iter().sum();
    let lat = Lattice::build_box(cfg.d, cfg.n)?;
    let spec = BoundarySpec::uniform(cfg.d, q, cfg.boundary_color)?;
    let boundary = discretize_boundary(&spec, &lat)?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let field = match &cfg.mode {
        Conditioning::Rejection => None,
        Conditioning::Tilted { field } => Some(field.clone()),
    };
    let step = |sigma: &SpinConfig, rng: &mut RngStream| -> Result<SpinConfig, SamplerError> {
        let eta = es_bond_step(sigma, &lat, cfg.params.p(), rng);
        match &field {
            None => es_color_step(&eta, &lat, &boundary, q, rng),
            Some(h) => es_color_step_tilted(&eta, &lat, &boundary, h, rng),
        }
    };
    let mut sigma = SpinConfig::random(&lat, q, &boundary, &mut rng);
    for _ in 0..cfg.burn_in {
        sigma = step(&sigma, &mut rng)?;
    }
    let lambda = if target_volume > 0.0 { Some(droplet_scale(shape, target_volume)) } else { None };
    let majority = cfg.boundary_color as u8;
    let mut log_weights = Vec::new();
    let mut fractions = Vec::new();
    let mut single = (0usize, 0usize);
    let mut distances = Vec::new();
    let mut last_partition = None;
    for _ in 0..cfg.sweeps {
        sigma = step(&sigma, &mut rng)?;
        let (ok, frac) = ensemble_condition_check(&sigma, &cfg.thresholds);
        if !ok {
            continue;
        }
        let log_w = match &field {
            None => 0.0,
            Some(h) => {
                let counts = sigma.color_counts();
                -h.iter().enumerate().map(|(c, hc)| hc * counts[c + 1] as f64).sum::<f64>()
            }
        };
        log_weights.push(log_w);
        fractions.push(frac.get(2).copied().unwrap_or(0.0));
        let partition = empirical_phase_partition(&sigma, &lat, &cfg.events, cfg.block)?;
        let grid = partition.grid().clone();
        let members = partition.labels().iter().map(|&l| l != 0 && l != majority).collect();
        let set = BlockSet { grid, members };
        if set.members.iter().any(|&m| m) {
            single.1 += 1;
            if block_components(&set) == 1 {
                single.0 += 1;
            }
        }
        if let Some(l) = lambda {
            distances.push(best_translate_distance(&set, shape, l)?);
        }
        last_partition = Some(partition);
    }
    let accepted = log_weights.len();
    let (effective_samples, mean_fraction) = if accepted == 0 {
        (0.0, None)
    } else {
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        let sw: f64 = w.iter().sum();
        let sw2: f64 = w.iter().map(|x| x * x).sum();
        let ess = sw * sw / sw2;
        let est = if field.is_none() {
            batch_means(&fractions, DEFAULT_BATCHES)
        } else {
            // self-normalized importance estimate; the error uses the effective sample size
            let mean = w.iter().zip(&fractions).map(|(a, b)| a * b).sum::<f64>() / sw;
            let var = w.iter().zip(&fractions).map(|(a, b)| a * (b - mean).powi(2)).sum::<f64>() / sw;
            Some(Estimate { value: mean, stderr: (var / ess).sqrt(), samples: accepted })
        };
        (ess, est)
    };
    Ok(DropletReport {
        sweeps: cfg.sweeps,
        accepted,
        acceptance_rate: accepted as f64 / cfg.sweeps.max(1) as f64,
        log_weights,
        effective_samples,
        mean_fraction,
        target_volume,
        single_component_fraction: (single.1 > 0).then(|| single.0 as f64 / single.1 as f64),
        mean_wulff_distance: (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64),
        last_partition,
    })
}

/// Mean fraction of sites joined to the boundary in the wired FK measure,
/// estimated from a constant-colour Potts chain; used to set `θ` in
/// [`target_volumes`].
pub fn wired_percolation_fraction(
    d: usize,
    n: usize,
    params: &ModelParams,
    burn_in: usize,
    sweeps: usize,
    seed: u64,
) -> Result<Estimate, EnsembleError> {
    let lat = Lattice::build_box(d, n)?;
    let spec = BoundarySpec::uniform(d, params.q(), 1)?;
    let boundary = discretize_boundary(&spec, &lat)?;
    let mut rng = RngStream::new(seed, 0);
    let mut sigma = SpinConfig::random(&lat, params.q(), &boundary, &mut rng);
    let mut values = Vec::with_capacity(sweeps);
    for k in 0..burn_in + sweeps {
        let eta = es_bond_step(&sigma, &lat, params.p(), &mut rng);
        if k >= burn_in {
            let labeling = clusters(&eta, &lat, &boundary);
            let wired = labeling.id(0);
            values.push(labeling.size(wired) as f64 / lat.num_sites() as f64);
        }
        sigma = es_color_step(&eta, &lat, &boundary, params.q(), &mut rng)?;
    }
    Ok(batch_means(&values, DEFAULT_BATCHES).expect("sweeps > 0"))
}
