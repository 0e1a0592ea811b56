//! Wulff crystal `{x : x·ν <= τ(ν) for all ν}` on a raster, and the
//! reference partitions (pyramids, flat slab, droplets) built from it.

use std::f64::consts::PI;

use thiserror::Error;

use crate::phase::{BlockGrid, PhaseError, PhasePartition};
use crate::tau::TauModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WulffError {
    #[error("need m >= 8 and at least 2d = {min} directions (got m = {m}, k = {k})")]
    Resolution { m: usize, k: usize, min: usize },
    #[error("droplet of volume {v} does not fit")]
    DoesNotFit { v: f64 },
    #[error("invalid volume {0}")]
    Volume(f64),
    #[error("{0}")]
    Kind(String),
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// The `2d` axis directions followed by `k - 2d` low-discrepancy unit
/// vectors. The sequence is nested: a shorter list is a prefix of a longer one.
pub fn sample_directions(d: usize, k: usize) -> Vec<Vec<f64>> {
    assert!(d >= 1 && 2 * d <= PRIMES.len());
    let mut out = Vec::with_capacity(k.max(2 * d));
    for a in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[a] = s;
            out.push(e);
        }
    }
    let mut i = 1u64;
    while out.len() < k {
        let v = match d {
            1 => break,
            2 => {
                let t = 2.0 * PI * radical_inverse(i, 2);
                vec![t.cos(), t.sin()]
            }
            3 => {
                let z = 1.0 - 2.0 * radical_inverse(i, 2);
                let phi = 2.0 * PI * radical_inverse(i, 3);
                let r = (1.0 - z * z).max(0.0).sqrt();
                vec![r * phi.cos(), r * phi.sin(), z]
            }
            _ => {
                // Box–Muller on Halton pairs gives a Gaussian vector
                let mut g = Vec::with_capacity(d);
                for j in 0..d.div_ceil(2) {
                    let u1 = radical_inverse(i, PRIMES[2 * j]).max(1e-300);
                    let u2 = radical_inverse(i, PRIMES[2 * j + 1]);
                    let r = (-2.0 * u1.ln()).sqrt();
                    g.push(r * (2.0 * PI * u2).cos());
                    g.push(r * (2.0 * PI * u2).sin());
                }
                g.truncate(d);
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                g.iter().map(|x| x / norm).collect()
            }
        };
        out.push(v);
        i += 1;
    }
    out
}

/// Rasterized Wulff crystal on `m^d` cells covering `[-τ_max, τ_max]^d`,
/// first axis most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct WulffShape {
    d: usize,
    m: usize,
    half_width: f64,
    cells: Vec<bool>,
    directions: Vec<Vec<f64>>,
    tau_values: Vec<f64>,
    tau_min: f64,
}

pub fn wulff_crystal(tau: &TauModel, d: usize, m: usize, k: usize) -> Result<WulffShape, WulffError> {
    if m < 8 || k < 2 * d {
        return Err(WulffError::Resolution { m, k, min: 2 * d });
    }
    let directions = sample_directions(d, k);
    let tau_values: Vec<f64> = directions.iter().map(|u| tau.eval(u)).collect();
    let half_width = tau.tau_max();
    let tau_min = tau.tau_min();
    let mut shape = WulffShape { d, m, half_width, cells: Vec::new(), directions, tau_values, tau_min };
    let cells = (0..m.pow(d as u32)).map(|c| shape.contains(&shape.cell_center(c))).collect();
    shape.cells = cells;
    Ok(shape)
}

impl WulffShape {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.m as f64
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        let h = self.cell_size();
        let mut x = vec![0.0; self.d];
        let mut r = c;
        for a in (0..self.d).rev() {
            x[a] = -self.half_width + ((r % self.m) as f64 + 0.5) * h;
            r /= self.m;
        }
        x
    }

    /// Half-space test against every sampled direction.
    pub fn contains(&self, x: &[f64]) -> bool {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 <= self.tau_min * self.tau_min {
            return true;
        }
        self.directions
            .iter()
            .zip(&self.tau_values)
            .all(|(u, &t)| u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() <= t)
    }

    pub fn raster_volume(&self) -> f64 {
        self.cells.iter().filter(|&&c| c).count() as f64 * self.cell_size().powi(self.d as i32)
    }

    /// Largest `x_a` over the crystal, which is at most `τ(e_a)`.
    pub fn axis_extent(&self, a: usize) -> f64 {
        self.directions
            .iter()
            .zip(&self.tau_values)
            .filter(|(u, _)| u[a] == 1.0)
            .map(|(_, &t)| t)
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from the origin to the raster boundary along `dir`.
    pub fn radius_along(&self, dir: &[f64]) -> f64 {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = dir.iter().map(|v| v / norm).collect();
        let step = self.cell_size() / 8.0;
        let mut r = 0.0;
        loop {
            let next = r + step;
            let x: Vec<f64> = u.iter().map(|v| v * next).collect();
            match self.cell_of(&x) {
                Some(c) if self.cells[c] => r = next,
                _ => return r,
            }
        }
    }

    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let h = self.cell_size();
        let mut c = 0;
        for &v in x {
            let k = ((v + self.half_width) / h).floor();
            if k < 0.0 || k >= self.m as f64 {
                return None;
            }
            c = c * self.m + k as usize;
        }
        Some(c)
    }

    /// `(max - min)` of [`Self::radius_along`] over `k` sampled directions,
    /// in cells.
    pub fn sphericity_cells(&self, k: usize) -> f64 {
        let radii: Vec<f64> = sample_directions(self.d, k).iter().map(|u| self.radius_along(u)).collect();
        let max = radii.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        (max - min) / self.cell_size()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceKind {
    /// Each block takes the colour of its nearest face (`2a + side + 1` for
    /// the face at `x_a = side`), lowest face index on ties.
    Pyramids,
    /// Label `lower` below the mid-plane of the last axis, `upper` above.
    FlatSlab { lower: u8, upper: u8 },
    /// `λW` centred at the origin corner with `λ^d |W| / 2^d = v`.
    CornerDroplet { v: f64, inside: u8, outside: u8 },
    /// `λW` centred in the cube with `λ^d |W| = v`.
    CenteredDroplet { v: f64, inside: u8, outside: u8 },
}

/// Label blocks whose centre lies in `center + λW` with `inside`.
pub fn droplet_partition(
    grid: &BlockGrid,
    q: usize,
    shape: &WulffShape,
    center: &[f64],
    lambda: f64,
    inside: u8,
    outside: u8,
) -> Result<PhasePartition, WulffError> {
    let mut y = vec![0.0; grid.dim()];
    Ok(PhasePartition::from_fn(grid.clone(), q, |x| {
        for (a, v) in y.iter_mut().enumerate() {
            *v = (x[a] - center[a]) / lambda;
        }
        if shape.contains(&y) {
            inside
        } else {
            outside
        }
    })?)
}

/// Scale `λ` with `λ^d |W| = v`.
pub fn droplet_scale(shape: &WulffShape, v: f64) -> f64 {
    (v / shape.raster_volume()).powf(1.0 / shape.dim() as f64)
}

pub fn reference_partition(
    kind: &ReferenceKind,
    grid: &BlockGrid,
    q: usize,
    shape: Option<&WulffShape>,
) -> Result<PhasePartition, WulffError> {
    let d = grid.dim();
    match kind {
        ReferenceKind::Pyramids => {
            if q < 2 * d {
                return Err(WulffError::Kind(format!("pyramids need q >= {}", 2 * d)));
            }
            Ok(PhasePartition::from_fn(grid.clone(), q, |x| {
                let mut best = (f64::INFINITY, 0);
                for (a, &v) in x.iter().enumerate() {
                    for (side, dist) in [(0, v), (1, 1.0 - v)] {
                        if dist < best.0 - 1e-12 {
                            best = (dist, 2 * a + side);
                        }
                    }
                }
                best.1 as u8 + 1
            })?)
        }
        ReferenceKind::FlatSlab { lower, upper } => {
            Ok(PhasePartition::from_fn(grid.clone(), q, |x| if x[d - 1] > 0.5 { *upper } else { *lower })?)
        }
        ReferenceKind::CornerDroplet { v, inside, outside } | ReferenceKind::CenteredDroplet { v, inside, outside } => {
            let shape = shape.ok_or_else(|| WulffError::Kind("droplets need a Wulff shape".into()))?;
            if !(*v > 0.0 && *v < 1.0) {
                return Err(WulffError::Volume(*v));
            }
            let corner = matches!(kind, ReferenceKind::CornerDroplet { .. });
            let full = if corner { v * 2f64.powi(d as i32) } else { *v };
            let lambda = droplet_scale(shape, full);
            let room = if corner { 1.0 } else { 0.5 };
            if (0..d).any(|a| lambda * shape.axis_extent(a) > room + 1e-12) {
                return Err(WulffError::DoesNotFit { v: *v });
            }
            let center = vec![if corner { 0.0 } else { 0.5 }; d];
            droplet_partition(grid, q, shape, &center, lambda, *inside, *outside)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_nested_and_unit() {
        for d in 2..6 {
            let long = sample_directions(d, 40);
            let short = sample_directions(d, 17);
            assert_eq!(&long[..17], &short[..]);
            for u in &long {
                assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn more_directions_smaller_raster() {
        let tau = TauModel::isotropic(1.0).unwrap();
        let a = wulff_crystal(&tau, 2, 64, 8).unwrap();
        let b = wulff_crystal(&tau, 2, 64, 64).unwrap();
        assert!(a.cells().iter().zip(b.cells()).all(|(&x, &y)| x || !y));
    }

    #[test]
    fn homogeneity() {
        let tau = TauModel::axis_anisotropic(vec![1.0, 0.5], crate::tau::AxisRule::Euclidean).unwrap();
        let scaled = TauModel::axis_anisotropic(vec![2.5, 1.25], crate::tau::AxisRule::Euclidean).unwrap();
        let a = wulff_crystal(&tau, 2, 50, 100).unwrap();
        let b = wulff_crystal(&scaled, 2, 50, 100).unwrap();
        assert_eq!(a.cells(), b.cells());
    }

    #[test]
    fn slab_volumes() {
        let g = BlockGrid::uniform(3, 4).unwrap();
        let p = reference_partition(&ReferenceKind::FlatSlab { lower: 2, upper: 1 }, &g, 2, None).unwrap();
        assert_eq!(p.volume(1), 0.5);
        assert_eq!(p.volume(2), 0.5);
    }

    #[test]
    fn droplet_does_not_fit() {
        let tau = TauModel::isotropic(1.0).unwrap();
        let w = wulff_crystal(&tau, 3, 32, 200).unwrap();
        let g = BlockGrid::uniform(3, 8).unwrap();
        let kind = ReferenceKind::CenteredDroplet { v: 0.9, inside: 2, outside: 1 };
        assert_eq!(reference_partition(&kind, &g, 2, Some(&w)), Err(WulffError::DoesNotFit { v: 0.9 }));
    }
}
