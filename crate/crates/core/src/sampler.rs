//! Edwards–Sokal cluster dynamics for the Potts model with mixed boundary
//! conditions, and single-bond heat-bath dynamics for the FK measure with
//! free or wired boundary.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cluster::clusters;
use crate::gibbs::{hamiltonian, BondConfig, GibbsError, ModelParams, SpinConfig};
use crate::lattice::{BoundaryAssignment, Lattice};
use crate::rng::RngStream;
use crate::stats::RunningStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("bond configuration joins boundary sites frozen to different colours")]
    Inadmissible,
    #[error("initial configuration violates the boundary condition")]
    Boundary,
    #[error("invalid run specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
}

/// Open each agreeing edge independently with probability `p`; disagreeing
/// edges stay closed.
pub fn es_bond_step<R: Rng + ?Sized>(sigma: &SpinConfig, lat: &Lattice, p: f64, rng: &mut R) -> BondConfig {
    let labels = sigma.labels();
    let open = lat
        .edges()
        .iter()
        .map(|&[x, y]| labels[x as usize] == labels[y as usize] && p > 0.0 && (p >= 1.0 || rng.random::<f64>() < p))
        .collect();
    BondConfig::from_bits(open)
}

/// Colour the clusters of `eta`: clusters holding frozen sites take their
/// boundary colour, every other cluster an independent uniform colour.
pub fn es_color_step<R: Rng + ?Sized>(
    eta: &BondConfig,
    lat: &Lattice,
    boundary: &BoundaryAssignment,
    q: usize,
    rng: &mut R,
) -> Result<SpinConfig, SamplerError> {
    color_clusters(eta, lat, boundary, q, rng, |rng, _| rng.random_range(1..=q as u8))
}

/// Colour step for the Potts measure tilted by `exp(Σ_c h_c N_c(σ))`, where
/// `N_c` counts sites of colour `c`: a free cluster of size `s` takes colour
/// `c` with probability proportional to `exp(h_c s)`. `field[c - 1] = h_c`.
pub fn es_color_step_tilted<R: Rng + ?Sized>(
    eta: &BondConfig,
    lat: &Lattice,
    boundary: &BoundaryAssignment,
    field: &[f64],
    rng: &mut R,
) -> Result<SpinConfig, SamplerError> {
    let q = field.len();
    let hmax = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w = vec![0.0; q];
    color_clusters(eta, lat, boundary, q, rng, |rng, size| {
        let mut total = 0.0;
        for (wc, h) in w.iter_mut().zip(field) {
            *wc = ((h - hmax) * size as f64).exp();
            total += *wc;
        }
        let mut u = rng.random::<f64>() * total;
        for (c, wc) in w.iter().enumerate() {
            if u < *wc {
                return c as u8 + 1;
            }
            u -= wc;
        }
        q as u8
    })
}

fn color_clusters<R: Rng + ?Sized>(
    eta: &BondConfig,
    lat: &Lattice,
    boundary: &BoundaryAssignment,
    q: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R, usize) -> u8,
) -> Result<SpinConfig, SamplerError> {
    let labeling = clusters(eta, lat, boundary);
    if !labeling.admissible() {
        return Err(SamplerError::Inadmissible);
    }
    let colors: Vec<u8> = (0..labeling.count())
        .map(|k| labeling.frozen_color(k).unwrap_or_else(|| draw(rng, labeling.size(k))))
        .collect();
    let labels = labeling.ids().iter().map(|&id| colors[id as usize]).collect();
    Ok(SpinConfig::from_labels(q, labels)?)
}

/// One Swendsen–Wang update.
pub fn sw_sweep<R: Rng + ?Sized>(
    sigma: &SpinConfig,
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
    rng: &mut R,
) -> Result<SpinConfig, SamplerError> {
    Ok(sw_sweep_coupled(sigma, lat, params, boundary, rng)?.0)
}

/// One Swendsen–Wang update returning the new spins together with the
/// intermediate bond configuration. If `sigma` is Potts-distributed the bonds
/// are FK-distributed and the pair has the joint Edwards–Sokal law.
pub fn sw_sweep_coupled<R: Rng + ?Sized>(
    sigma: &SpinConfig,
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
    rng: &mut R,
) -> Result<(SpinConfig, BondConfig), SamplerError> {
    let eta = es_bond_step(sigma, lat, params.p(), rng);
    let next = es_color_step(&eta, lat, boundary, params.q(), rng)?;
    Ok((next, eta))
}

/// Swendsen–Wang update for the tilted measure; see [`es_color_step_tilted`].
pub fn sw_sweep_tilted<R: Rng + ?Sized>(
    sigma: &SpinConfig,
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
    field: &[f64],
    rng: &mut R,
) -> Result<SpinConfig, SamplerError> {
    let eta = es_bond_step(sigma, lat, params.p(), rng);
    es_color_step_tilted(&eta, lat, boundary, field, rng)
}

/// `max(1000, 20 n)` sweeps. No mixing bound is claimed.
pub fn default_burn_in(n: usize) -> usize {
    1000.max(20 * n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub params: ModelParams,
    pub boundary: BoundaryAssignment,
    /// Post-burn-in sweeps per replica.
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub replicas: usize,
    pub seed: u64,
}

impl RunSpec {
    fn validate(&self, lat: &Lattice) -> Result<(), SamplerError> {
        if self.thinning == 0 {
            return Err(SamplerError::Spec("thinning must be at least 1".into()));
        }
        if self.replicas == 0 {
            return Err(SamplerError::Spec("at least one replica required".into()));
        }
        if self.boundary.len() != lat.num_sites() {
            return Err(SamplerError::Spec("boundary assignment does not match the lattice".into()));
        }
        if self.boundary.q() > self.params.q() {
            return Err(SamplerError::Spec("boundary uses colours beyond q".into()));
        }
        Ok(())
    }
}

/// One emitted state: the spins after post-burn-in sweep `sweep` (1-based)
/// and the bonds that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub replica: usize,
    pub sweep: usize,
    pub spins: SpinConfig,
    pub bonds: BondConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRun {
    pub stream: u64,
    pub samples: Vec<Sample>,
    /// Energy `H(σ)` over the emitted samples.
    pub energy: RunningStats,
    /// Open-edge density over the emitted samples.
    pub open_density: RunningStats,
}

/// What is needed to regenerate a chain output bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub streams: Vec<u64>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub q: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub replicas: Vec<ReplicaRun>,
    pub provenance: Provenance,
}

impl ChainOutput {
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.replicas.iter().flat_map(|r| r.samples.iter())
    }

    pub fn energy(&self) -> RunningStats {
        self.replicas.iter().fold(RunningStats::default(), |acc, r| acc.merge(&r.energy))
    }
}

/// Run one replica, calling `visit` on every emitted state instead of
/// storing it. Replica `r` draws from stream `r` of the run seed.
pub fn run_replica(
    lat: &Lattice,
    spec: &RunSpec,
    replica: usize,
    mut visit: impl FnMut(usize, &SpinConfig, &BondConfig),
) -> Result<(), SamplerError> {
    spec.validate(lat)?;
    let mut rng = RngStream::new(spec.seed, replica as u64);
    let mut sigma = SpinConfig::random(lat, spec.params.q(), &spec.boundary, &mut rng);
    for _ in 0..spec.burn_in {
        sigma = sw_sweep(&sigma, lat, &spec.params, &spec.boundary, &mut rng)?;
    }
    for sweep in 1..=spec.sweeps {
        let (next, eta) = sw_sweep_coupled(&sigma, lat, &spec.params, &spec.boundary, &mut rng)?;
        sigma = next;
        if sweep % spec.thinning == 0 {
            visit(sweep, &sigma, &eta);
        }
    }
    Ok(())
}

/// Run all replicas in parallel and collect the thinned samples, ordered by
/// replica then sweep.
pub fn sample_chain(lat: &Lattice, spec: &RunSpec) -> Result<ChainOutput, SamplerError> {
    spec.validate(lat)?;
    let edges = lat.num_edges().max(1) as f64;
    let replicas = (0..spec.replicas)
        .into_par_iter()
        .map(|r| {
            let mut run = ReplicaRun {
                stream: r as u64,
                samples: Vec::with_capacity(spec.sweeps / spec.thinning),
                energy: RunningStats::default(),
                open_density: RunningStats::default(),
            };
            run_replica(lat, spec, r, |sweep, sigma, eta| {
                run.energy.push(hamiltonian(sigma, lat) as f64);
                run.open_density.push(eta.num_open() as f64 / edges);
                run.samples.push(Sample { replica: r, sweep, spins: sigma.clone(), bonds: eta.clone() });
            })?;
            Ok(run)
        })
        .collect::<Result<Vec<_>, SamplerError>>()?;
    Ok(ChainOutput {
        replicas,
        provenance: Provenance {
            seed: spec.seed,
            streams: (0..spec.replicas as u64).collect(),
            sweeps: spec.sweeps,
            burn_in: spec.burn_in,
            thinning: spec.thinning,
            q: spec.params.q(),
            beta: spec.params.beta(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkBoundary {
    Free,
    /// Every outer-layer site belongs to one cluster for counting purposes.
    Wired,
}

/// Single-bond heat-bath dynamics for the FK measure
/// `p^open (1-p)^closed q^#(η)`.
///
/// Given the rest of the configuration, an edge is open with probability `p`
/// if its endpoints are otherwise connected and `p / (p + (1-p) q)` if not.
#[derive(Debug, Clone)]
pub struct FkDirectChain<'a> {
    lat: &'a Lattice,
    p: f64,
    q: usize,
    bc: FkBoundary,
    eta: BondConfig,
    rng: RngStream,
    seen: Vec<u32>,
    stamp: u32,
    stack: Vec<usize>,
}

impl<'a> FkDirectChain<'a> {
    pub fn new(lat: &'a Lattice, params: &ModelParams, bc: FkBoundary, rng: RngStream) -> Self {
        Self {
            lat,
            p: params.p(),
            q: params.q(),
            bc,
            eta: BondConfig::closed(lat),
            rng,
            seen: vec![0; lat.num_sites()],
            stamp: 0,
            stack: Vec::new(),
        }
    }

    pub fn with_state(mut self, eta: BondConfig) -> Self {
        self.eta = eta;
        self
    }

    pub fn state(&self) -> &BondConfig {
        &self.eta
    }

    /// Conditional probability that edge `e` is open given all other edges.
    pub fn open_probability(&mut self, e: usize) -> f64 {
        if self.q == 1 || self.p <= 0.0 || self.p >= 1.0 {
            return self.p;
        }
        if self.otherwise_connected(e) {
            self.p
        } else {
            self.p / (self.p + (1.0 - self.p) * self.q as f64)
        }
    }

    /// Update every edge once in edge order.
    pub fn sweep(&mut self) {
        for e in 0..self.lat.num_edges() {
            let prob = self.open_probability(e);
            let open = prob > 0.0 && (prob >= 1.0 || self.rng.random::<f64>() < prob);
            self.eta.set(e, open);
        }
    }

    fn otherwise_connected(&mut self, e: usize) -> bool {
        let (x, y) = self.lat.edge(e);
        let (hit, x_boundary) = self.search(x, y, e);
        if hit {
            return true;
        }
        if self.bc == FkBoundary::Wired && x_boundary {
            return self.search(y, usize::MAX, e).1;
        }
        false
    }

    /// Depth-first search from `from` that skips edge `skip`; stops early on
    /// reaching `target` or, when wired, on reaching the outer layer.
    /// Returns (reached target, reached outer layer).
    fn search(&mut self, from: usize, target: usize, skip: usize) -> (bool, bool) {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let wired = self.bc == FkBoundary::Wired;
        self.stack.clear();
        self.stack.push(from);
        self.seen[from] = self.stamp;
        let mut boundary = false;
        while let Some(s) = self.stack.pop() {
            if s == target {
                return (true, boundary);
            }
            if self.lat.is_boundary(s) {
                boundary = true;
                if wired && target == usize::MAX {
                    return (false, true);
                }
            }
            for (nb, edge) in self.lat.neighbors(s) {
                if edge != skip && self.eta.is_open(edge) && self.seen[nb] != self.stamp {
                    self.seen[nb] = self.stamp;
                    self.stack.push(nb);
                }
            }
        }
        (false, boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::fk_weight;

    fn grid2() -> Lattice {
        Lattice::build_box(2, 1).unwrap()
    }

    #[test]
    fn bond_step_extremes() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let mut rng = RngStream::new(1, 0);
        let sigma = SpinConfig::constant(&lat, 2, 1).unwrap();
        assert_eq!(es_bond_step(&sigma, &lat, 0.0, &mut rng).num_open(), 0);
        assert_eq!(es_bond_step(&sigma, &lat, 1.0, &mut rng).num_open(), lat.num_edges());
        let labels = (0..lat.num_sites()).map(|s| 1 + (lat.coords(s).iter().sum::<usize>() % 2) as u8).collect();
        let checker = SpinConfig::from_labels(2, labels).unwrap();
        assert_eq!(es_bond_step(&checker, &lat, 0.9, &mut rng).num_open(), 0);
    }

    #[test]
    fn bond_step_open_fraction() {
        let lat = grid2();
        let sigma = SpinConfig::constant(&lat, 2, 1).unwrap();
        let mut rng = RngStream::new(2, 0);
        let draws = 10_000;
        let open: usize = (0..draws).map(|_| es_bond_step(&sigma, &lat, 0.5, &mut rng).num_open()).sum();
        let trials = (draws * lat.num_edges()) as f64;
        let sd = (0.25 / trials).sqrt();
        assert!((open as f64 / trials - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn color_step_rules() {
        let lat = Lattice::build_box(2, 2).unwrap();
        let mut rng = RngStream::new(3, 0);
        let wired = BoundaryAssignment::wired(&lat);
        let s = es_color_step(&BondConfig::all_open(&lat), &lat, &wired, 3, &mut rng).unwrap();
        assert!(s.labels().iter().all(|&c| c == 1));

        let mut index = vec![0u8; lat.num_sites()];
        index[0] = 1;
        index[8] = 2;
        let mixed = BoundaryAssignment::from_indices(2, index);
        assert_eq!(
            es_color_step(&BondConfig::all_open(&lat), &lat, &mixed, 2, &mut rng),
            Err(SamplerError::Inadmissible)
        );
    }

    #[test]
    fn two_free_clusters_uniform_pairs() {
        let lat = Lattice::chain(1).unwrap();
        let free = BoundaryAssignment::free(&lat);
        let eta = BondConfig::closed(&lat);
        let mut rng = RngStream::new(4, 0);
        let mut counts = [0u64; 9];
        for _ in 0..10_000 {
            let s = es_color_step(&eta, &lat, &free, 3, &mut rng).unwrap();
            counts[(s.get(0) as usize - 1) * 3 + s.get(1) as usize - 1] += 1;
        }
        let r = crate::stats::chi_square(&counts, &[1.0 / 9.0; 9], 0.01);
        assert!(r.passes(), "{r:?}");
    }

    #[test]
    fn q_one_is_fixed() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let free = BoundaryAssignment::free(&lat);
        let params = ModelParams::new(1, 0.7).unwrap();
        let sigma = SpinConfig::constant(&lat, 1, 1).unwrap();
        let mut rng = RngStream::new(5, 0);
        assert_eq!(sw_sweep(&sigma, &lat, &params, &free, &mut rng).unwrap(), sigma);
    }

    #[test]
    fn thinning_count_and_replicas() {
        let lat = grid2();
        let spec = RunSpec {
            params: ModelParams::new(2, 0.8).unwrap(),
            boundary: BoundaryAssignment::free(&lat),
            sweeps: 100,
            burn_in: 10,
            thinning: 7,
            replicas: 2,
            seed: 11,
        };
        let out = sample_chain(&lat, &spec).unwrap();
        assert_eq!(out.replicas[0].samples.len(), 100 / 7);
        assert_eq!(out.replicas[0].samples[0].sweep, 7);
        let a: Vec<_> = out.replicas[0].samples.iter().map(|s| s.spins.clone()).collect();
        let b: Vec<_> = out.replicas[1].samples.iter().map(|s| s.spins.clone()).collect();
        assert_ne!(a, b);
        assert_eq!(sample_chain(&lat, &spec).unwrap(), out);
    }

    #[test]
    fn fk_single_bond_detailed_balance() {
        // heat-bath conditional equals the exact ratio of fk weights
        let lat = Lattice::build_box(2, 2).unwrap();
        for (bc, assignment) in
            [(FkBoundary::Free, BoundaryAssignment::free(&lat)), (FkBoundary::Wired, BoundaryAssignment::wired(&lat))]
        {
            let params = ModelParams::from_p(3, 0.4).unwrap();
            for mask in 0..1u64 << lat.num_edges() {
                for e in 0..lat.num_edges() {
                    let eta = BondConfig::from_mask(&lat, mask);
                    let mut chain = FkDirectChain::new(&lat, &params, bc, RngStream::new(0, 0)).with_state(eta.clone());
                    let prob = chain.open_probability(e);
                    let mut open = eta.clone();
                    open.set(e, true);
                    let mut closed = eta;
                    closed.set(e, false);
                    let wo = fk_weight(&open, &lat, &params, &assignment);
                    let wc = fk_weight(&closed, &lat, &params, &assignment);
                    assert!((prob - wo / (wo + wc)).abs() < 1e-12, "{bc:?} mask {mask} edge {e}");
                }
            }
        }
    }

    #[test]
    fn fk_two_site_third() {
        let lat = Lattice::chain(1).unwrap();
        let params = ModelParams::from_p(2, 0.5).unwrap();
        let mut chain = FkDirectChain::new(&lat, &params, FkBoundary::Free, RngStream::new(6, 0));
        assert!((chain.open_probability(0) - 1.0 / 3.0).abs() < 1e-15);
        let p0 = ModelParams::from_p(2, 0.0).unwrap();
        let mut chain = FkDirectChain::new(&lat, &p0, FkBoundary::Free, RngStream::new(6, 0));
        chain.sweep();
        assert_eq!(chain.state().num_open(), 0);
    }
}
