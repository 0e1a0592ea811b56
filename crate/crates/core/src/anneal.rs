//! Simulated annealing of the surface energy over block labelings.
//!
//! The energy is tracked incrementally from local face contributions and
//! periodically checked against [`surface_energy`], which is computed
//! independently from the whole partition.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::lattice::BoundarySpec;
use crate::phase::{surface_energy, BlockGrid, PhasePartition};
use crate::rng::RngStream;
use crate::tau::TauModel;

/// Moves between two full-energy audits.
pub const AUDIT_INTERVAL: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnealError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("infeasible volume constraint: {0}")]
    Infeasible(String),
    #[error("initial partition does not match the grid, colours or constraint")]
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub t0: f64,
    /// Geometric factor per level, in `(0, 1)`.
    pub cooling: f64,
    pub sweeps_per_level: usize,
    pub t_floor: f64,
}

impl AnnealSchedule {
    /// `T0 = τ_max · (block face area) · 2d`, cooling 0.97, 50 sweeps per
    /// level, floor `1e-3 T0`.
    pub fn default_for(tau: &TauModel, grid: &BlockGrid) -> Self {
        let d = grid.dim();
        let face = (1.0 / grid.m() as f64).powi(d as i32 - 1);
        let t0 = tau.tau_max() * face * 2.0 * d as f64;
        Self { t0, cooling: 0.97, sweeps_per_level: 50, t_floor: 1e-3 * t0 }
    }

    pub fn validate(&self) -> Result<(), AnnealError> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(AnnealError::Schedule(format!("t0 = {}", self.t0)));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(AnnealError::Schedule(format!("cooling = {}", self.cooling)));
        }
        if self.sweeps_per_level == 0 {
            return Err(AnnealError::Schedule("sweeps_per_level = 0".into()));
        }
        if !(self.t_floor > 0.0 && self.t_floor <= self.t0) {
            return Err(AnnealError::Schedule(format!("t_floor = {}", self.t_floor)));
        }
        Ok(())
    }

    /// Temperatures from `t0` down to the last level at or above the floor.
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = self.t0;
        while t >= self.t_floor {
            out.push(t);
            t *= self.cooling;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnnealConstraint {
    None,
    /// Volumes of labels `2..=q`; label 1 takes the remainder. Volumes are
    /// rounded to whole blocks on a uniform grid and then held fixed by
    /// swap moves.
    FixedVolumes(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub temperature: f64,
    pub energy: f64,
    pub best: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub moves: u64,
    pub incremental: f64,
    pub full: f64,
}

impl Audit {
    pub fn error(&self) -> f64 {
        (self.incremental - self.full).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealResult {
    pub best: PhasePartition,
    pub best_energy: f64,
    pub final_energy: f64,
    pub initial_energy: f64,
    pub trace: Vec<TracePoint>,
    pub audits: Vec<Audit>,
    pub moves: u64,
}

impl AnnealResult {
    pub fn max_audit_error(&self) -> f64 {
        self.audits.iter().map(Audit::error).fold(0.0, f64::max)
    }
}

/// Face weights and boundary costs so that a relabel changes the energy by
/// a sum over the block's own faces.
struct EnergyModel {
    grid: BlockGrid,
    q: usize,
    /// `τ(e_a) · area` of the faces of block `b` orthogonal to `a`, at `b * d + a`.
    face_weight: Vec<f64>,
    /// Mismatch cost of block `b` against the boundary when labelled `i`, at `b * (q + 1) + i`.
    boundary_cost: Vec<f64>,
}

impl EnergyModel {
    fn new(grid: &BlockGrid, q: usize, tau: &TauModel, boundary: &BoundarySpec) -> Self {
        let d = grid.dim();
        let tau_axis: Vec<f64> = (0..d).map(|a| tau.axis(a, d)).collect();
        let nb = grid.num_blocks();
        let mut face_weight = vec![0.0; nb * d];
        let mut boundary_cost = vec![0.0; nb * (q + 1)];
        for b in 0..nb {
            let (lo, hi) = (grid.lo(b), grid.hi(b));
            let coords = grid.block_coords(b);
            for a in 0..d {
                face_weight[b * d + a] = tau_axis[a] * grid.face_area(b, a);
                for high in [false, true] {
                    let on_face = if high { coords[a] + 1 == grid.m() } else { coords[a] == 0 };
                    if !on_face {
                        continue;
                    }
                    let overlaps: Vec<f64> =
                        (0..=boundary.q()).map(|j| boundary.overlap_area(j, a, high, &lo, &hi)).collect();
                    for i in 1..=q {
                        let cost: f64 = (1..=boundary.q()).filter(|&j| j != i).map(|j| overlaps[j]).sum();
                        boundary_cost[b * (q + 1) + i] += tau_axis[a] * cost;
                    }
                }
            }
        }
        Self { grid: grid.clone(), q, face_weight, boundary_cost }
    }

    fn delta(&self, labels: &[u8], b: usize, new: u8) -> f64 {
        let old = labels[b];
        if old == new {
            return 0.0;
        }
        let d = self.grid.dim();
        let q1 = self.q + 1;
        let mut delta = self.boundary_cost[b * q1 + new as usize] - self.boundary_cost[b * q1 + old as usize];
        for a in 0..d {
            let w = self.face_weight[b * d + a];
            for nb in [self.grid.up(b, a), self.grid.down(b, a)].into_iter().flatten() {
                let l = labels[nb];
                delta += w * (f64::from(new != l) - f64::from(old != l));
            }
        }
        delta
    }
}

fn random_partition(grid: &BlockGrid, q: usize, counts: Option<&[usize]>, rng: &mut RngStream) -> PhasePartition {
    let nb = grid.num_blocks();
    let labels = match counts {
        None => (0..nb).map(|_| rng.random_range(1..=q as u8)).collect(),
        Some(c) => {
            let mut labels: Vec<u8> =
                c.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i as u8 + 1, k)).collect();
            labels.shuffle(rng);
            labels
        }
    };
    PhasePartition::new(grid.clone(), q, labels).expect("labels in range")
}

/// Block counts per label `1..=q` for the volume constraint.
fn constraint_counts(grid: &BlockGrid, q: usize, volumes: &[f64]) -> Result<Vec<usize>, AnnealError> {
    if volumes.len() + 1 != q {
        return Err(AnnealError::Infeasible(format!("need {} volumes, got {}", q - 1, volumes.len())));
    }
    if volumes.iter().any(|&v| !(0.0..=1.0).contains(&v)) || volumes.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(AnnealError::Infeasible(format!("volumes {volumes:?} do not fit in the unit cube")));
    }
    if grid.m() * grid.f() != grid.n() {
        return Err(AnnealError::Infeasible("volume constraints need a uniform block grid".into()));
    }
    let nb = grid.num_blocks();
    let mut counts: Vec<usize> = volumes.iter().map(|v| (v * nb as f64).round() as usize).collect();
    let used: usize = counts.iter().sum();
    if used > nb {
        return Err(AnnealError::Infeasible("rounded volumes exceed the grid".into()));
    }
    counts.insert(0, nb - used);
    Ok(counts)
}

/// Minimize `surface_energy` over labelings in `1..=q` of `grid`.
///
/// Without a constraint each move relabels one random block; with fixed
/// volumes each move swaps the labels of two random blocks. Acceptance is
/// Metropolis at the level temperature. Returns the best partition seen.
#[allow(clippy::too_many_arguments)]
pub fn anneal_partition(
    grid: &BlockGrid,
    q: usize,
    boundary: &BoundarySpec,
    tau: &TauModel,
    constraint: &AnnealConstraint,
    schedule: &AnnealSchedule,
    initial: Option<&PhasePartition>,
    rng: &mut RngStream,
) -> Result<AnnealResult, AnnealError> {
    schedule.validate()?;
    if q < 2 {
        return Err(AnnealError::Infeasible(format!("q = {q}")));
    }
    let counts = match constraint {
        AnnealConstraint::None => None,
        AnnealConstraint::FixedVolumes(v) => Some(constraint_counts(grid, q, v)?),
    };
    let mut current = match initial {
        Some(p) => {
            let ok = p.grid() == grid
                && p.q() == q
                && !p.has_indefinite()
                && counts.as_ref().is_none_or(|c| p.counts()[1..] == c[..]);
            if !ok {
                return Err(AnnealError::Initial);
            }
            p.clone()
        }
        None => random_partition(grid, q, counts.as_deref(), rng),
    };
    let model = EnergyModel::new(grid, q, tau, boundary);
    let full = |p: &PhasePartition| surface_energy(p, tau, boundary);
    let mut energy = full(&current);
    let initial_energy = energy;
    let mut best_labels = current.labels().to_vec();
    let mut best_energy = energy;
    let nb = grid.num_blocks();
    let mut labels = current.labels().to_vec();
    let mut trace = Vec::new();
    let mut audits = Vec::new();
    let mut moves: u64 = 0;

    for t in schedule.levels() {
        let mut accepted = 0u64;
        let level_moves = (schedule.sweeps_per_level * nb) as u64;
        for _ in 0..level_moves {
            let accept = |delta: f64, rng: &mut RngStream| delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp();
            match counts {
                None => {
                    let b = rng.random_range(0..nb);
                    let mut new = rng.random_range(1..q as u8);
                    if new >= labels[b] {
                        new += 1;
                    }
                    let delta = model.delta(&labels, b, new);
                    if accept(delta, rng) {
                        labels[b] = new;
                        energy += delta;
                        accepted += 1;
                    }
                }
                Some(_) => {
                    let b1 = rng.random_range(0..nb);
                    let b2 = rng.random_range(0..nb);
                    let (l1, l2) = (labels[b1], labels[b2]);
                    if l1 != l2 {
                        let d1 = model.delta(&labels, b1, l2);
                        labels[b1] = l2;
                        let d2 = model.delta(&labels, b2, l1);
                        if accept(d1 + d2, rng) {
                            labels[b2] = l1;
                            energy += d1 + d2;
                            accepted += 1;
                        } else {
                            labels[b1] = l1;
                        }
                    }
                }
            }
            moves += 1;
            if energy < best_energy - 1e-12 {
                best_energy = energy;
                best_labels.copy_from_slice(&labels);
            }
            if moves.is_multiple_of(AUDIT_INTERVAL) {
                current = PhasePartition::new(grid.clone(), q, labels.clone()).expect("labels in range");
                let exact = full(&current);
                audits.push(Audit { moves, incremental: energy, full: exact });
                energy = exact;
            }
        }
        trace.push(TracePoint {
            temperature: t,
            energy,
            best: best_energy,
            acceptance: accepted as f64 / level_moves as f64,
        });
    }
    current = PhasePartition::new(grid.clone(), q, labels).expect("labels in range");
    let final_energy = full(&current);
    audits.push(Audit { moves, incremental: energy, full: final_energy });
    let best = PhasePartition::new(grid.clone(), q, best_labels).expect("labels in range");
    // the stored best energy is re-evaluated exactly
    best_energy = full(&best);
    Ok(AnnealResult { best, best_energy, final_energy, initial_energy, trace, audits, moves })
}
