//! Open-cluster labeling and the connectivity estimators built on it.
//!
//! Cluster counting follows the FK identification rule: all boundary sites
//! frozen to the same colour are merged before any edge is considered, so
//! each boundary colour contributes at most one cluster.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::gibbs::{BondConfig, ModelParams, SpinConfig};
use crate::lattice::{BoundaryAssignment, Lattice, LatticeError};
use crate::rng::{RngStream, AUX_STREAM_BASE};
use crate::sampler::sw_sweep_coupled;
use crate::stats::{batch_means, fit_line, Estimate, LineFit, DEFAULT_BATCHES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no samples")]
    Empty,
    #[error("colour {color} outside 1..={q}")]
    Color { color: usize, q: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("{0}")]
    Invalid(String),
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self { parent: (0..len as u32).collect(), size: vec![1; len] }
    }

    #[inline]
    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Returns true if `x` and `y` were in different sets.
    #[inline]
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let (mut a, mut b) = (self.find(x), self.find(y));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a as u32;
        self.size[a] += self.size[b];
        true
    }
}

/// Result of labeling a bond configuration.
///
/// Cluster ids are `0..count`, assigned in order of the smallest site of
/// each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    ids: Vec<u32>,
    sizes: Vec<usize>,
    dim: usize,
    lo: Vec<u32>,
    hi: Vec<u32>,
    frozen: Vec<Option<u8>>,
    touches: Vec<u64>,
    outer: Vec<bool>,
    admissible: bool,
    extent: Vec<usize>,
}

impl ClusterLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn id(&self, site: usize) -> usize {
        self.ids[site] as usize
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn size(&self, cluster: usize) -> usize {
        self.sizes[cluster]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Boundary colour inherited by the cluster, if it contains frozen sites.
    pub fn frozen_color(&self, cluster: usize) -> Option<u8> {
        self.frozen[cluster]
    }

    /// False when some cluster joins sites frozen to different colours.
    pub fn admissible(&self) -> bool {
        self.admissible
    }

    /// Whether the cluster contains a boundary site assigned part `i`
    /// (tracked for `i < 64`).
    pub fn touches_part(&self, cluster: usize, i: usize) -> bool {
        i < 64 && self.touches[cluster] >> i & 1 == 1
    }

    /// Whether the cluster reaches the outer layer of the grid.
    pub fn touches_outer_layer(&self, cluster: usize) -> bool {
        self.outer[cluster]
    }

    /// ℓ∞ extent of the cluster's bounding box in lattice units.
    pub fn diameter(&self, cluster: usize) -> usize {
        let r = cluster * self.dim..(cluster + 1) * self.dim;
        self.lo[r.clone()].iter().zip(&self.hi[r]).map(|(l, h)| (h - l) as usize).max().unwrap_or(0)
    }

    /// Whether the cluster spans from the low to the high face along `axis`.
    pub fn crosses(&self, cluster: usize, axis: usize) -> bool {
        let k = cluster * self.dim + axis;
        self.lo[k] == 0 && self.hi[k] as usize + 1 == self.extent[axis]
    }

    pub fn largest(&self) -> Option<usize> {
        // first of the largest, for determinism
        self.sizes
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, usize)>, (i, &s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i)
    }
}

/// Label the open clusters of `eta`, merging same-coloured frozen sites first.
pub fn clusters(eta: &BondConfig, lat: &Lattice, boundary: &BoundaryAssignment) -> ClusterLabeling {
    let n = lat.num_sites();
    let d = lat.dim();
    let mut uf = UnionFind::new(n);
    let mut first_of_color: Vec<Option<usize>> = vec![None; 256];
    for s in 0..n {
        if let Some(c) = boundary.frozen(s) {
            match first_of_color[c as usize] {
                Some(f) => {
                    uf.union(f, s);
                }
                None => first_of_color[c as usize] = Some(s),
            }
        }
    }
    for (e, &[x, y]) in lat.edges().iter().enumerate() {
        if eta.is_open(e) {
            uf.union(x as usize, y as usize);
        }
    }

    const UNSET: u32 = u32::MAX;
    let mut root_id = vec![UNSET; n];
    let mut ids = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    let mut lo: Vec<u32> = Vec::new();
    let mut hi: Vec<u32> = Vec::new();
    let mut frozen: Vec<Option<u8>> = Vec::new();
    let mut touches = Vec::new();
    let mut outer = Vec::new();
    let mut admissible = true;
    for s in 0..n {
        let r = uf.find(s);
        let id = if root_id[r] == UNSET {
            root_id[r] = sizes.len() as u32;
            sizes.push(0);
            lo.extend(std::iter::repeat_n(u32::MAX, d));
            hi.extend(std::iter::repeat_n(0, d));
            frozen.push(None);
            touches.push(0u64);
            outer.push(false);
            root_id[r]
        } else {
            root_id[r]
        };
        ids.push(id);
        let k = id as usize;
        sizes[k] += 1;
        for a in 0..d {
            let c = lat.coord(s, a) as u32;
            lo[k * d + a] = lo[k * d + a].min(c);
            hi[k * d + a] = hi[k * d + a].max(c);
        }
        if lat.is_boundary(s) {
            outer[k] = true;
            let i = boundary.index(s) as usize;
            if i < 64 {
                touches[k] |= 1 << i;
            }
        }
        if let Some(c) = boundary.frozen(s) {
            match frozen[k] {
                None => frozen[k] = Some(c),
                Some(prev) if prev != c => admissible = false,
                _ => {}
            }
        }
    }
    ClusterLabeling { ids, sizes, dim: d, lo, hi, frozen, touches, outer, admissible, extent: lat.extent().to_vec() }
}

/// Whether `x` and `y` are joined by an open path (no boundary identification).
pub fn connected(eta: &BondConfig, lat: &Lattice, x: usize, y: usize) -> bool {
    let labeling = clusters(eta, lat, &BoundaryAssignment::free(lat));
    labeling.id(x) == labeling.id(y)
}

/// `P̂[σ_site = j] - 1/q` with a batch-means standard error.
pub fn order_parameter_estimate<'a, I>(samples: I, site: usize, color: usize) -> Result<Estimate, AnalysisError>
where
    I: IntoIterator<Item = &'a SpinConfig>,
{
    let mut q = 0;
    let hits: Vec<f64> = samples
        .into_iter()
        .map(|s| {
            q = s.q();
            f64::from(s.get(site) as usize == color)
        })
        .collect();
    if hits.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if color == 0 || color > q {
        return Err(AnalysisError::Color { color, q });
    }
    let mut e = batch_means(&hits, DEFAULT_BATCHES).expect("nonempty");
    e.value -= 1.0 / q as f64;
    Ok(e)
}

/// Finite-volume proxy for the percolation probability: the fraction of
/// samples in which `site` is joined by open edges to the outer layer of the
/// grid. It overestimates the infinite-volume quantity at finite size.
pub fn percolation_estimate<'a, I>(samples: I, lat: &Lattice, site: usize) -> Result<Estimate, AnalysisError>
where
    I: IntoIterator<Item = &'a BondConfig>,
{
    let free = BoundaryAssignment::free(lat);
    let hits: Vec<f64> = samples
        .into_iter()
        .map(|eta| {
            let labeling = clusters(eta, lat, &free);
            f64::from(labeling.touches_outer_layer(labeling.id(site)))
        })
        .collect();
    if hits.is_empty() {
        return Err(AnalysisError::Empty);
    }
    Ok(batch_means(&hits, DEFAULT_BATCHES).expect("nonempty"))
}

/// Slab connectivity probe on `S(L, n) = [-L, L] × [-n, n]^{d-1}` under the
/// free FK measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabProbeConfig {
    pub d: usize,
    pub half_thickness: usize,
    pub half_width: usize,
    /// Central region is `|x_k| <= alpha * n` for the transverse axes.
    pub alpha: f64,
    pub q: usize,
    pub p: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_pairs: usize,
}

impl SlabProbeConfig {
    pub fn new(d: usize, half_thickness: usize, half_width: usize, q: usize, p: f64) -> Self {
        Self {
            d,
            half_thickness,
            half_width,
            alpha: 1.0,
            q,
            p,
            burn_in: 100,
            samples: 200,
            seed: 0,
            max_pairs: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabProbeResult {
    pub min_frequency: f64,
    /// Minimizing pair as grid sites of the slab lattice.
    pub pair: (usize, usize),
    pub pair_coords: (Vec<isize>, Vec<isize>),
    pub pairs_evaluated: usize,
    pub exhaustive: bool,
    pub samples: usize,
}

pub fn slab_lro_probe(cfg: &SlabProbeConfig) -> Result<SlabProbeResult, AnalysisError> {
    if cfg.d < 2 || cfg.samples == 0 || !(0.0..=1.0).contains(&cfg.p) || cfg.alpha <= 0.0 {
        return Err(AnalysisError::Invalid(format!("bad slab probe configuration {cfg:?}")));
    }
    let mut extent = vec![2 * cfg.half_width + 1; cfg.d];
    extent[0] = 2 * cfg.half_thickness + 1;
    let lat = Lattice::grid(&extent)?;
    let n = cfg.half_width as isize;
    let reach = (cfg.alpha * cfg.half_width as f64 + 1e-9).floor() as isize;
    let central: Vec<usize> =
        (0..lat.num_sites()).filter(|&s| (1..cfg.d).all(|a| (lat.coord(s, a) as isize - n).abs() <= reach)).collect();
    let total_pairs = central.len() * central.len().saturating_sub(1) / 2;
    let exhaustive = total_pairs <= cfg.max_pairs;
    let pairs: Vec<(usize, usize)> = if exhaustive {
        let mut v = Vec::with_capacity(total_pairs);
        for i in 0..central.len() {
            for j in i + 1..central.len() {
                v.push((central[i], central[j]));
            }
        }
        v
    } else {
        let mut rng = RngStream::new(cfg.seed, AUX_STREAM_BASE + 1);
        (0..cfg.max_pairs)
            .map(|_| loop {
                let a = central[rng.random_range(0..central.len())];
                let b = central[rng.random_range(0..central.len())];
                if a != b {
                    break (a.min(b), a.max(b));
                }
            })
            .collect()
    };
    if pairs.is_empty() {
        return Err(AnalysisError::Invalid("central region has fewer than two sites".into()));
    }

    let params = ModelParams::from_p(cfg.q, cfg.p).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let free = BoundaryAssignment::free(&lat);
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut sigma = SpinConfig::random(&lat, cfg.q, &free, &mut rng);
    for _ in 0..cfg.burn_in {
        sigma = sw_sweep_coupled(&sigma, &lat, &params, &free, &mut rng).expect("free boundary").0;
    }
    let mut hits = vec![0u32; pairs.len()];
    for _ in 0..cfg.samples {
        let (next, eta) = sw_sweep_coupled(&sigma, &lat, &params, &free, &mut rng).expect("free boundary");
        sigma = next;
        let labeling = clusters(&eta, &lat, &free);
        for (h, &(a, b)) in hits.iter_mut().zip(&pairs) {
            if labeling.id(a) == labeling.id(b) {
                *h += 1;
            }
        }
    }
    let (k, &h) = hits.iter().enumerate().min_by_key(|(_, &h)| h).expect("nonempty");
    let (a, b) = pairs[k];
    let centered = |s: usize| -> Vec<isize> {
        (0..cfg.d).map(|ax| lat.coord(s, ax) as isize - if ax == 0 { cfg.half_thickness as isize } else { n }).collect()
    };
    Ok(SlabProbeResult {
        min_frequency: h as f64 / cfg.samples as f64,
        pair: (a, b),
        pair_coords: (centered(a), centered(b)),
        pairs_evaluated: pairs.len(),
        exhaustive,
        samples: cfg.samples,
    })
}

/// Histogram of the diameters of all clusters other than the largest one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiameterTail {
    pub counts: BTreeMap<usize, u64>,
    pub samples: usize,
    /// Fit of `ln(frequency)` against diameter over bins with at least
    /// [`DiameterTail::MIN_BIN_COUNT`] entries.
    pub fit: Option<LineFit>,
}

impl DiameterTail {
    pub const MIN_BIN_COUNT: u64 = 5;

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Rows `(diameter, count, ln frequency)`.
    pub fn table(&self) -> Vec<(usize, u64, f64)> {
        let total = self.total() as f64;
        self.counts.iter().map(|(&d, &c)| (d, c, (c as f64 / total).ln())).collect()
    }

    /// Slope is negative with the fit's full confidence interval below zero.
    pub fn slope_negative(&self) -> bool {
        self.fit.is_some_and(|f| f.ci_high < 0.0)
    }
}

pub fn diameter_tail<'a, I>(samples: I, lat: &Lattice) -> DiameterTail
where
    I: IntoIterator<Item = &'a BondConfig>,
{
    let free = BoundaryAssignment::free(lat);
    let mut counts = BTreeMap::new();
    let mut n = 0;
    for eta in samples {
        n += 1;
        let labeling = clusters(eta, lat, &free);
        let largest = labeling.largest();
        for c in 0..labeling.count() {
            if Some(c) != largest {
                *counts.entry(labeling.diameter(c)).or_insert(0u64) += 1;
            }
        }
    }
    let total: u64 = counts.values().sum();
    let (x, y): (Vec<f64>, Vec<f64>) = counts
        .iter()
        .filter(|(_, &c)| c >= DiameterTail::MIN_BIN_COUNT)
        .map(|(&d, &c)| (d as f64, (c as f64 / total as f64).ln()))
        .unzip();
    let fit = fit_line(&x, &y, 0.95);
    DiameterTail { counts, samples: n, fit }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_and_open() {
        let lat = Lattice::build_box(3, 2).unwrap();
        let free = BoundaryAssignment::free(&lat);
        assert_eq!(clusters(&BondConfig::closed(&lat), &lat, &free).count(), 27);
        let all = clusters(&BondConfig::all_open(&lat), &lat, &free);
        assert_eq!(all.count(), 1);
        assert_eq!(all.diameter(0), 2);
        assert!((0..3).all(|a| all.crosses(0, a)));
    }

    #[test]
    fn two_disjoint_edges() {
        let lat = Lattice::build_box(2, 1).unwrap();
        let free = BoundaryAssignment::free(&lat);
        // edges: (0,1) axis0? enumerate and open the two edges along axis 1
        let mut eta = BondConfig::closed(&lat);
        for e in 0..lat.num_edges() {
            if lat.edge_axis(e) == 1 {
                eta.set(e, true);
            }
        }
        let l = clusters(&eta, &lat, &free);
        assert_eq!(l.count(), 2);
        assert_eq!(l.sizes(), &[2, 2]);
    }

    #[test]
    fn boundary_identification() {
        let lat = Lattice::build_box(2, 2).unwrap();
        let wired = BoundaryAssignment::wired(&lat);
        let l = clusters(&BondConfig::closed(&lat), &lat, &wired);
        // one merged boundary cluster plus the centre
        assert_eq!(l.count(), 2);
        assert_eq!(l.frozen_color(l.id(0)), Some(1));
        assert_eq!(l.frozen_color(l.id(lat.center_site())), None);
        assert!(l.admissible());
    }

    #[test]
    fn order_parameter_rejects_empty() {
        let none: Vec<SpinConfig> = Vec::new();
        assert_eq!(order_parameter_estimate(&none, 0, 1), Err(AnalysisError::Empty));
    }

    #[test]
    fn percolation_extremes() {
        let lat = Lattice::build_box(2, 4).unwrap();
        let c = lat.center_site();
        let closed = vec![BondConfig::closed(&lat); 5];
        assert_eq!(percolation_estimate(&closed, &lat, c).unwrap().value, 0.0);
        let open = vec![BondConfig::all_open(&lat); 5];
        assert_eq!(percolation_estimate(&open, &lat, c).unwrap().value, 1.0);
    }

    #[test]
    fn diameter_extremes() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let open = vec![BondConfig::all_open(&lat); 3];
        assert_eq!(diameter_tail(&open, &lat).total(), 0);
        let closed = vec![BondConfig::closed(&lat); 3];
        let t = diameter_tail(&closed, &lat);
        assert_eq!(t.counts.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(t.total(), 3 * 15);
    }

    #[test]
    fn slab_probe_extremes() {
        let mut cfg = SlabProbeConfig::new(2, 1, 2, 2, 1.0);
        cfg.samples = 20;
        cfg.burn_in = 20;
        assert_eq!(slab_lro_probe(&cfg).unwrap().min_frequency, 1.0);
        cfg.p = 0.0;
        let r = slab_lro_probe(&cfg).unwrap();
        assert_eq!(r.min_frequency, 0.0);
        assert!(r.exhaustive);
        assert_eq!(r.pairs_evaluated, 15 * 14 / 2);
    }
}
