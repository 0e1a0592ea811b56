//! Direction-dependent surface tension: models for `τ(ν)` and a finite-size
//! estimator from the FK disconnection event across a box.

use thiserror::Error;

use crate::cluster::UnionFind;
use crate::gibbs::{BondConfig, ModelParams, SpinConfig};
use crate::lattice::{BoundaryAssignment, Lattice};
use crate::rng::RngStream;
use crate::sampler::{sw_sweep_coupled, SamplerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TauError {
    #[error("surface tension values must be finite and positive")]
    NonPositive,
    #[error("direction table is empty or has the wrong dimension")]
    Table,
    #[error("zero direction vector")]
    ZeroDirection,
    #[error("axis {axis} out of range for d = {d}")]
    Axis { axis: usize, d: usize },
    #[error("no samples")]
    Empty,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Combination rule for an axis-anisotropic model with per-axis values `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisRule {
    /// `Σ t_a |ν_a|`, the support function of the box `Π [-t_a, t_a]`.
    L1,
    /// `sqrt(Σ (t_a ν_a)^2)`, the support function of an axis-aligned ellipsoid.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TauModel {
    Isotropic(f64),
    AxisAnisotropic {
        values: Vec<f64>,
        rule: AxisRule,
    },
    /// Value of the tabulated direction closest to `±ν`.
    Tabulated {
        directions: Vec<Vec<f64>>,
        values: Vec<f64>,
    },
}

fn normalized(v: &[f64]) -> Result<Vec<f64>, TauError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(TauError::ZeroDirection);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl TauModel {
    pub fn isotropic(c: f64) -> Result<Self, TauError> {
        if !positive(c) {
            return Err(TauError::NonPositive);
        }
        Ok(Self::Isotropic(c))
    }

    /// One value per axis; the model is symmetric under every sign flip.
    pub fn axis_anisotropic(values: Vec<f64>, rule: AxisRule) -> Result<Self, TauError> {
        if values.is_empty() {
            return Err(TauError::Table);
        }
        if !values.iter().all(|&v| positive(v)) {
            return Err(TauError::NonPositive);
        }
        Ok(Self::AxisAnisotropic { values, rule })
    }

    pub fn tabulated(directions: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self, TauError> {
        if directions.is_empty() || directions.len() != values.len() {
            return Err(TauError::Table);
        }
        let d = directions[0].len();
        if directions.iter().any(|u| u.len() != d) {
            return Err(TauError::Table);
        }
        if !values.iter().all(|&v| positive(v)) {
            return Err(TauError::NonPositive);
        }
        let directions = directions.iter().map(|u| normalized(u)).collect::<Result<_, _>>()?;
        Ok(Self::Tabulated { directions, values })
    }

    /// `τ(ν)`; `nu` need not be normalized but must be nonzero.
    pub fn eval(&self, nu: &[f64]) -> f64 {
        let nu = normalized(nu).expect("nonzero direction");
        match self {
            Self::Isotropic(c) => *c,
            Self::AxisAnisotropic { values, rule } => match rule {
                AxisRule::L1 => values.iter().zip(&nu).map(|(t, v)| t * v.abs()).sum(),
                AxisRule::Euclidean => values.iter().zip(&nu).map(|(t, v)| (t * v).powi(2)).sum::<f64>().sqrt(),
            },
            Self::Tabulated { directions, values } => {
                let mut best = (f64::NEG_INFINITY, 0.0);
                for (u, &v) in directions.iter().zip(values) {
                    let dot = u.iter().zip(&nu).map(|(a, b)| a * b).sum::<f64>().abs();
                    if dot > best.0 {
                        best = (dot, v);
                    }
                }
                best.1
            }
        }
    }

    /// `τ(e_axis)` in dimension `d`.
    pub fn axis(&self, axis: usize, d: usize) -> f64 {
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        self.eval(&e)
    }

    /// Infimum of `τ` over unit vectors.
    pub fn tau_min(&self) -> f64 {
        match self {
            Self::Isotropic(c) => *c,
            Self::AxisAnisotropic { values, .. } => values.iter().cloned().fold(f64::INFINITY, f64::min),
            Self::Tabulated { values, .. } => values.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// Supremum of `τ` over unit vectors.
    pub fn tau_max(&self) -> f64 {
        match self {
            Self::Isotropic(c) => *c,
            Self::AxisAnisotropic { values, rule } => match rule {
                AxisRule::L1 => values.iter().map(|t| t * t).sum::<f64>().sqrt(),
                AxisRule::Euclidean => values.iter().cloned().fold(0.0, f64::max),
            },
            Self::Tabulated { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }
}

/// Half-height of the window around the central section, `2d` layers.
pub fn cut_window(lat: &Lattice, axis: usize) -> (usize, usize) {
    let last = lat.extent()[axis] - 1;
    let mid = last / 2;
    let h = 2 * lat.dim();
    (mid.saturating_sub(h), (mid + h).min(last))
}

/// True iff no open path inside the window of layers `cut_window(axis)`
/// joins its two end layers, i.e. a closed cut separates them there.
pub fn cut_event_indicator(eta: &BondConfig, lat: &Lattice, axis: usize) -> bool {
    let (lo, hi) = cut_window(lat, axis);
    if lo == hi {
        return true;
    }
    let n = lat.num_sites();
    let low_root = n;
    let high_root = n + 1;
    let mut uf = UnionFind::new(n + 2);
    for s in 0..n {
        let c = lat.coord(s, axis);
        if c == lo {
            uf.union(s, low_root);
        } else if c == hi {
            uf.union(s, high_root);
        }
    }
    for (e, &[x, y]) in lat.edges().iter().enumerate() {
        if eta.is_open(e) {
            let (cx, cy) = (lat.coord(x as usize, axis), lat.coord(y as usize, axis));
            if cx >= lo && cy <= hi {
                uf.union(x as usize, y as usize);
            }
        }
    }
    uf.find(low_root) != uf.find(high_root)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub axis: usize,
    pub n: usize,
    pub samples: usize,
    pub cut_frequency: f64,
    /// Finite-n estimate `-ln(frequency) / n^{d-1}`; when censored, the lower
    /// bound `ln(samples) / n^{d-1}`.
    pub tau_hat: f64,
    pub stderr: f64,
    pub censored: bool,
}

/// Estimate from cut-event indicators observed at resolution `n` in
/// dimension `d`.
pub fn tau_from_indicators(axis: usize, n: usize, d: usize, hits: &[bool]) -> Result<TauEstimate, TauError> {
    let samples = hits.len();
    if samples == 0 {
        return Err(TauError::Empty);
    }
    let area = (n as f64).powi(d as i32 - 1);
    let k = hits.iter().filter(|&&h| h).count();
    let freq = k as f64 / samples as f64;
    if k == 0 {
        return Ok(TauEstimate {
            axis,
            n,
            samples,
            cut_frequency: 0.0,
            tau_hat: (samples as f64).ln() / area,
            stderr: f64::NAN,
            censored: true,
        });
    }
    // delta method: sd(ln f) ≈ sqrt((1 - f) / (f N))
    let stderr = ((1.0 - freq) / (freq * samples as f64)).sqrt() / area;
    Ok(TauEstimate { axis, n, samples, cut_frequency: freq, tau_hat: -freq.ln() / area, stderr, censored: false })
}

pub fn tau_estimate_from_samples<'a, I>(lat: &Lattice, axis: usize, samples: I) -> Result<TauEstimate, TauError>
where
    I: IntoIterator<Item = &'a BondConfig>,
{
    let n = lat.resolution().unwrap_or(lat.extent()[axis] - 1);
    let hits: Vec<bool> = samples.into_iter().map(|eta| cut_event_indicator(eta, lat, axis)).collect();
    tau_from_indicators(axis, n, lat.dim(), &hits)
}

/// Sample free-boundary FK configurations on the `d`-dimensional box of
/// resolution `n` and estimate `τ(e_axis)`.
pub fn tau_estimate(
    lat: &Lattice,
    axis: usize,
    params: &ModelParams,
    burn_in: usize,
    samples: usize,
    seed: u64,
) -> Result<TauEstimate, TauError> {
    if axis >= lat.dim() {
        return Err(TauError::Axis { axis, d: lat.dim() });
    }
    let free = BoundaryAssignment::free(lat);
    let mut rng = RngStream::new(seed, 0);
    let mut sigma = SpinConfig::random(lat, params.q(), &free, &mut rng);
    for _ in 0..burn_in {
        sigma = sw_sweep_coupled(&sigma, lat, params, &free, &mut rng)?.0;
    }
    let mut hits = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (next, eta) = sw_sweep_coupled(&sigma, lat, params, &free, &mut rng)?;
        sigma = next;
        hits.push(cut_event_indicator(&eta, lat, axis));
    }
    let n = lat.resolution().unwrap_or(lat.extent()[axis] - 1);
    tau_from_indicators(axis, n, lat.dim(), &hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_symmetries() {
        let models = [
            TauModel::isotropic(1.5).unwrap(),
            TauModel::axis_anisotropic(vec![1.0, 2.0, 0.5], AxisRule::L1).unwrap(),
            TauModel::axis_anisotropic(vec![1.0, 2.0, 0.5], AxisRule::Euclidean).unwrap(),
            TauModel::tabulated(
                vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                vec![1.0, 2.0, 3.0],
            )
            .unwrap(),
        ];
        let probes = [[1.0, 0.0, 0.0], [0.3, -0.4, 0.5], [0.0, 0.0, -1.0], [1.0, 1.0, 1.0]];
        for m in &models {
            for v in &probes {
                let neg: Vec<f64> = v.iter().map(|x| -x).collect();
                assert_eq!(m.eval(v), m.eval(&neg));
                let t = m.eval(v);
                assert!(m.tau_min() - 1e-12 <= t && t <= m.tau_max() + 1e-12);
                // sign flip of a single axis
                let flip = [-v[0], v[1], v[2]];
                assert!((m.eval(&flip) - t).abs() < 1e-12);
            }
            for a in 0..3 {
                assert!(m.axis(a, 3) > 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TauModel::isotropic(0.0).is_err());
        assert!(TauModel::axis_anisotropic(vec![1.0, -1.0], AxisRule::L1).is_err());
        assert!(TauModel::tabulated(vec![vec![0.0, 0.0]], vec![1.0]).is_err());
    }

    #[test]
    fn cut_event_extremes() {
        let lat = Lattice::build_box(3, 4).unwrap();
        assert!(!cut_event_indicator(&BondConfig::all_open(&lat), &lat, 2));
        let mut eta = BondConfig::all_open(&lat);
        for e in 0..lat.num_edges() {
            let (x, _) = lat.edge(e);
            if lat.edge_axis(e) == 2 && lat.coord(x, 2) == 2 {
                eta.set(e, false);
            }
        }
        assert!(cut_event_indicator(&eta, &lat, 2));
        // the same layer of closed edges does not cut along another axis
        assert!(!cut_event_indicator(&eta, &lat, 0));
    }

    #[test]
    fn estimator_edges() {
        let est = tau_from_indicators(0, 4, 3, &[true; 10]).unwrap();
        assert_eq!(est.tau_hat, 0.0);
        assert!(!est.censored);
        let est = tau_from_indicators(0, 4, 3, &[false; 10]).unwrap();
        assert!(est.censored);
        assert!((est.tau_hat - 10f64.ln() / 16.0).abs() < 1e-15);
        assert!(tau_from_indicators(0, 4, 3, &[]).is_err());
    }
}
