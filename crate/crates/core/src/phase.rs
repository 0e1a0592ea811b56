//! Mesoscopic block grids, density test events, the empirical phase
//! partition, and the metrics and interface functionals defined on
//! partitions.

use thiserror::Error;

use crate::gibbs::SpinConfig;
use crate::lattice::{BoundarySpec, Lattice};
use crate::tau::TauModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("partitions live on different block grids")]
    GridMismatch,
    #[error("partitions have different colour counts")]
    ColorMismatch,
    #[error("label {label} exceeds q = {q}")]
    Label { label: u8, q: usize },
    #[error("expected {expected} labels, got {got}")]
    Length { expected: usize, got: usize },
    #[error("test events need theta > 2 eps (theta = {theta}, eps = {eps})")]
    Guard { theta: f64, eps: f64 },
    #[error("invalid test-event parameters: {0}")]
    Spec(String),
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// Smallest `f` with `f^{2(d-1)} >= n`, i.e. `⌈n^{1/(2(d-1))}⌉` in exact
/// integer arithmetic. Then `f^{d-1} ~ sqrt(n)` and `f` grows faster than
/// `log n`.
pub fn intermediate_scale(n: usize, d: usize) -> usize {
    assert!(d >= 2 && n >= 1);
    let e = 2 * (d as u32 - 1);
    let mut f: usize = 1;
    while (f as u128).pow(e) < n as u128 {
        f += 1;
    }
    f
}

/// Rows `(n, f(n), n / f^{d-1}, f / ln n)`.
pub fn scale_growth_table(d: usize, ns: &[usize]) -> Vec<(usize, usize, f64, f64)> {
    ns.iter()
        .map(|&n| {
            let f = intermediate_scale(n, d);
            (n, f, n as f64 / (f as f64).powi(d as i32 - 1), f as f64 / (n as f64).ln())
        })
        .collect()
}

/// A product grid of `m^d` blocks on the unit cube. Block `k` along an axis
/// covers `(k f / n, (k + 1) f / n]`; the last block also absorbs the
/// remainder up to 1, and coordinate 0 belongs to block 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    d: usize,
    n: usize,
    f: usize,
    m: usize,
    cuts: Vec<f64>,
}

impl BlockGrid {
    pub fn for_lattice(d: usize, n: usize, f: usize) -> Result<Self, PhaseError> {
        if d == 0 || n == 0 || f == 0 {
            return Err(PhaseError::Grid(format!("d = {d}, n = {n}, f = {f}")));
        }
        let m = (n / f).max(1);
        let mut cuts: Vec<f64> = (0..m).map(|k| (k * f) as f64 / n as f64).collect();
        cuts.push(1.0);
        Ok(Self { d, n, f, m, cuts })
    }

    /// `m` equal blocks per axis.
    pub fn uniform(d: usize, m: usize) -> Result<Self, PhaseError> {
        Self::for_lattice(d, m, 1)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Lattice resolution the grid was built for.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Block side in lattice units.
    pub fn f(&self) -> usize {
        self.f
    }

    /// Blocks per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_blocks(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn width(&self, k: usize) -> f64 {
        self.cuts[k + 1] - self.cuts[k]
    }

    /// Index along one axis of the block holding lattice coordinate `c`.
    pub fn block_of_coord(&self, c: usize) -> usize {
        if c == 0 {
            0
        } else {
            ((c - 1) / self.f).min(self.m - 1)
        }
    }

    /// Per-axis block indices, first axis most significant.
    pub fn block_coords(&self, b: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        let mut r = b;
        for a in (0..self.d).rev() {
            out[a] = r % self.m;
            r /= self.m;
        }
        out
    }

    pub fn block_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.m + c)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.d - 1 - axis) as u32)
    }

    pub fn volume(&self, b: usize) -> f64 {
        self.block_coords(b).iter().map(|&k| self.width(k)).product()
    }

    /// Area of the faces of block `b` orthogonal to `axis`.
    pub fn face_area(&self, b: usize, axis: usize) -> f64 {
        self.block_coords(b).iter().enumerate().filter(|&(a, _)| a != axis).map(|(_, &k)| self.width(k)).product()
    }

    pub fn lo(&self, b: usize) -> Vec<f64> {
        self.block_coords(b).iter().map(|&k| self.cuts[k]).collect()
    }

    pub fn hi(&self, b: usize) -> Vec<f64> {
        self.block_coords(b).iter().map(|&k| self.cuts[k + 1]).collect()
    }

    pub fn center(&self, b: usize) -> Vec<f64> {
        self.block_coords(b).iter().map(|&k| 0.5 * (self.cuts[k] + self.cuts[k + 1])).collect()
    }

    /// Neighbour of `b` one step up along `axis`.
    pub fn up(&self, b: usize, axis: usize) -> Option<usize> {
        let k = (b / self.stride(axis)) % self.m;
        (k + 1 < self.m).then(|| b + self.stride(axis))
    }

    pub fn down(&self, b: usize, axis: usize) -> Option<usize> {
        let k = (b / self.stride(axis)) % self.m;
        (k > 0).then(|| b - self.stride(axis))
    }

    /// Block of every lattice site.
    pub fn site_blocks(&self, lat: &Lattice) -> Vec<usize> {
        (0..lat.num_sites())
            .map(|s| (0..self.d).fold(0, |acc, a| acc * self.m + self.block_of_coord(lat.coord(s, a))))
            .collect()
    }
}

/// A label in `0..=q` per block; 0 marks blocks where no phase is identified.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePartition {
    grid: BlockGrid,
    q: usize,
    labels: Vec<u8>,
}

impl PhasePartition {
    pub fn new(grid: BlockGrid, q: usize, labels: Vec<u8>) -> Result<Self, PhaseError> {
        if labels.len() != grid.num_blocks() {
            return Err(PhaseError::Length { expected: grid.num_blocks(), got: labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l as usize > q) {
            return Err(PhaseError::Label { label, q });
        }
        Ok(Self { grid, q, labels })
    }

    pub fn constant(grid: BlockGrid, q: usize, label: u8) -> Result<Self, PhaseError> {
        let labels = vec![label; grid.num_blocks()];
        Self::new(grid, q, labels)
    }

    /// Label each block by a function of its centre.
    pub fn from_fn(grid: BlockGrid, q: usize, mut f: impl FnMut(&[f64]) -> u8) -> Result<Self, PhaseError> {
        let labels = (0..grid.num_blocks()).map(|b| f(&grid.center(b))).collect();
        Self::new(grid, q, labels)
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, b: usize) -> u8 {
        self.labels[b]
    }

    pub fn set(&mut self, b: usize, label: u8) {
        assert!(label as usize <= self.q);
        self.labels[b] = label;
    }

    pub fn phase(&self, i: u8) -> BlockSet {
        BlockSet { grid: self.grid.clone(), members: self.labels.iter().map(|&l| l == i).collect() }
    }

    /// Volume of phase `i`.
    pub fn volume(&self, i: u8) -> f64 {
        (0..self.labels.len()).filter(|&b| self.labels[b] == i).map(|b| self.grid.volume(b)).sum()
    }

    /// Number of blocks per label, indexed `0..=q`.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.q + 1];
        self.labels.iter().for_each(|&l| c[l as usize] += 1);
        c
    }

    pub fn has_indefinite(&self) -> bool {
        self.labels.contains(&0)
    }

    /// Relabel by `perm[i]` for `i` in `0..=q` (`perm[0]` should be 0).
    pub fn permuted(&self, perm: &[u8]) -> Self {
        Self { grid: self.grid.clone(), q: self.q, labels: self.labels.iter().map(|&l| perm[l as usize]).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub grid: BlockGrid,
    pub members: Vec<bool>,
}

impl BlockSet {
    pub fn empty(grid: BlockGrid) -> Self {
        let n = grid.num_blocks();
        Self { grid, members: vec![false; n] }
    }

    pub fn full(grid: BlockGrid) -> Self {
        let n = grid.num_blocks();
        Self { grid, members: vec![true; n] }
    }

    pub fn from_fn(grid: BlockGrid, mut f: impl FnMut(&[f64]) -> bool) -> Self {
        let members = (0..grid.num_blocks()).map(|b| f(&grid.center(b))).collect();
        Self { grid, members }
    }

    pub fn volume(&self) -> f64 {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(b, _)| self.grid.volume(b)).sum()
    }
}

/// `vol(A Δ B)`.
pub fn dist_l1(a: &BlockSet, b: &BlockSet) -> Result<f64, PhaseError> {
    if a.grid != b.grid {
        return Err(PhaseError::GridMismatch);
    }
    Ok(a.members.iter().zip(&b.members).enumerate().filter(|(_, (x, y))| x != y).map(|(k, _)| a.grid.volume(k)).sum())
}

/// `Σ_{i=0..=q} vol(A_i Δ B_i)`.
pub fn dist_p(a: &PhasePartition, b: &PhasePartition) -> Result<f64, PhaseError> {
    if a.grid != b.grid {
        return Err(PhaseError::GridMismatch);
    }
    if a.q != b.q {
        return Err(PhaseError::ColorMismatch);
    }
    // a block with different labels lies in the symmetric difference of both phases
    Ok(a.labels
        .iter()
        .zip(&b.labels)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(k, _)| 2.0 * a.grid.volume(k))
        .sum())
}

/// Density test events around the pure-phase reference densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestEventSpec {
    q: usize,
    theta: f64,
    eps: f64,
}

impl TestEventSpec {
    pub fn new(q: usize, theta: f64, eps: f64) -> Result<Self, PhaseError> {
        if q < 2 {
            return Err(PhaseError::Spec(format!("q = {q}")));
        }
        if eps.is_nan() || eps <= 0.0 || theta.is_nan() || theta > 1.0 - 1.0 / q as f64 {
            return Err(PhaseError::Spec(format!("theta = {theta}, eps = {eps}")));
        }
        if theta <= 2.0 * eps {
            return Err(PhaseError::Guard { theta, eps });
        }
        Ok(Self { q, theta, eps })
    }

    /// `eps = min(0.05, theta / 4)`.
    pub fn with_default_eps(q: usize, theta: f64) -> Result<Self, PhaseError> {
        Self::new(q, theta, (theta / 4.0).min(0.05))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Reference density of colour `i` in pure phase `j`.
    pub fn reference(&self, j: usize, i: usize) -> f64 {
        let q = self.q as f64;
        if i == j {
            1.0 / q + self.theta
        } else {
            (1.0 - 1.0 / q - self.theta) / (q - 1.0)
        }
    }

    /// Phase-`j` event from colour counts indexed `0..=q` (entry 0 unused).
    pub fn holds(&self, counts: &[usize], j: usize) -> bool {
        let total: usize = counts[1..].iter().sum();
        if total == 0 {
            return false;
        }
        (1..=self.q).all(|i| (counts[i] as f64 / total as f64 - self.reference(j, i)).abs() <= self.eps + 1e-12)
    }
}

/// Whether the density test event for phase `j` holds on `sites`.
pub fn test_event(sites: &[usize], sigma: &SpinConfig, j: usize, spec: &TestEventSpec) -> bool {
    let mut counts = vec![0usize; spec.q + 1];
    for &s in sites {
        counts[sigma.get(s) as usize] += 1;
    }
    spec.holds(&counts, j)
}

/// Label each block of side `f` by the phase whose test event holds there,
/// or 0.
pub fn empirical_phase_partition(
    sigma: &SpinConfig,
    lat: &Lattice,
    spec: &TestEventSpec,
    f: usize,
) -> Result<PhasePartition, PhaseError> {
    let n = lat.resolution().ok_or_else(|| PhaseError::Grid("lattice is not a scaled box".into()))?;
    if sigma.q() != spec.q {
        return Err(PhaseError::ColorMismatch);
    }
    let grid = BlockGrid::for_lattice(lat.dim(), n, f)?;
    let q = spec.q;
    let mut counts = vec![0usize; grid.num_blocks() * (q + 1)];
    for (s, b) in grid.site_blocks(lat).into_iter().enumerate() {
        counts[b * (q + 1) + sigma.get(s) as usize] += 1;
    }
    let labels = counts.chunks(q + 1).map(|c| (1..=q).find(|&j| spec.holds(c, j)).unwrap_or(0) as u8).collect();
    PhasePartition::new(grid, q, labels)
}

/// Each internal face `(b, up(b, axis))` with different labels, with its area.
fn interface_faces(p: &PhasePartition) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
    let g = &p.grid;
    (0..g.num_blocks()).flat_map(move |b| {
        (0..g.d).filter_map(move |a| {
            let nb = g.up(b, a)?;
            (p.labels[b] != p.labels[nb]).then(|| (b, nb, a, g.face_area(b, a)))
        })
    })
}

/// Total area of internal faces separating different labels, each counted
/// once. Exact for axis-aligned interfaces; overestimates tilted ones by up
/// to a factor `sqrt(d)`.
pub fn discrete_perimeter(p: &PhasePartition) -> f64 {
    interface_faces(p).map(|(.., area)| area).sum()
}

/// Area of internal faces with label `i` on exactly one side.
pub fn phase_perimeter(p: &PhasePartition, i: u8) -> f64 {
    interface_faces(p).filter(|&(b, nb, ..)| p.labels[b] == i || p.labels[nb] == i).map(|(.., area)| area).sum()
}

/// Interface energy inside the cube plus the mismatch energy against the
/// coloured boundary parts; `+∞` if any block is labelled 0.
pub fn surface_energy(p: &PhasePartition, tau: &TauModel, boundary: &BoundarySpec) -> f64 {
    if p.has_indefinite() {
        return f64::INFINITY;
    }
    let d = p.grid.d;
    let tau_axis: Vec<f64> = (0..d).map(|a| tau.axis(a, d)).collect();
    let bulk: f64 = interface_faces(p).map(|(_, _, a, area)| tau_axis[a] * area).sum();
    let g = &p.grid;
    let mut outer = 0.0;
    for b in 0..g.num_blocks() {
        let (lo, hi) = (g.lo(b), g.hi(b));
        let coords = g.block_coords(b);
        let i = p.labels[b] as usize;
        for a in 0..d {
            for high in [false, true] {
                let on_face = if high { coords[a] + 1 == g.m } else { coords[a] == 0 };
                if !on_face {
                    continue;
                }
                for j in (1..=boundary.q()).filter(|&j| j != i) {
                    outer += tau_axis[a] * boundary.overlap_area(j, a, high, &lo, &hi);
                }
            }
        }
    }
    bulk + outer
}
