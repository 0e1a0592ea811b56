//! Exhaustive enumeration of the Potts, FK and Edwards–Sokal laws on tiny
//! lattices.
//!
//! Spin configurations are indexed by the colours of the free sites only, as
//! a little-endian mixed-radix number: free site `k` (in site order)
//! contributes `(σ - 1) q^k`. Bond configurations are indexed by their edge
//! bitmask.

use thiserror::Error;

use crate::cluster::clusters;
use crate::gibbs::{hamiltonian, log_fk_weight, log_gibbs_weight_from_energy, BondConfig, ModelParams, SpinConfig};
use crate::lattice::{BoundaryAssignment, Lattice};
use crate::stats::total_variation;

/// Default state-space budget in bits, `N_free log2 q + E`.
pub const DEFAULT_BUDGET_BITS: f64 = 26.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("state space needs {bits:.2} bits, budget is {budget}")]
    Budget { bits: f64, budget: f64 },
    #[error("boundary assignment does not match the lattice")]
    Mismatch,
    #[error("no configuration has positive weight")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactTables {
    pub q: usize,
    /// Free sites in site order; position `k` has radix `q^k`.
    pub free_sites: Vec<usize>,
    pub frozen: Vec<Option<u8>>,
    /// Potts law indexed by spin index.
    pub potts: Vec<f64>,
    /// FK law indexed by edge bitmask.
    pub fk: Vec<f64>,
    /// Spin law after a colour step applied to the exact FK law.
    pub es_spin: Vec<f64>,
    /// Bond law after a bond step applied to the exact Potts law.
    pub es_bond: Vec<f64>,
    /// `|Σ - 1|` of each table after normalization, in field order.
    pub residuals: [f64; 4],
}

impl ExactTables {
    pub fn spin_index(&self, sigma: &SpinConfig) -> usize {
        let mut idx = 0;
        let mut radix = 1;
        for &s in &self.free_sites {
            idx += (sigma.get(s) as usize - 1) * radix;
            radix *= self.q;
        }
        idx
    }

    pub fn spin_config(&self, mut idx: usize) -> SpinConfig {
        let mut labels: Vec<u8> = self.frozen.iter().map(|f| f.unwrap_or(1)).collect();
        for &s in &self.free_sites {
            labels[s] = (idx % self.q) as u8 + 1;
            idx /= self.q;
        }
        SpinConfig::from_labels(self.q, labels).expect("labels in range")
    }

    /// `P[σ_site = c]` for `c = 1..=q` (entry `c - 1`).
    pub fn spin_marginal(&self, site: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.q];
        for (idx, &w) in self.potts.iter().enumerate() {
            m[self.spin_config(idx).get(site) as usize - 1] += w;
        }
        m
    }

    /// Total-variation distance between the colour-step image of FK and Potts.
    pub fn spin_tv(&self) -> f64 {
        total_variation(&self.potts, &self.es_spin)
    }

    /// Total-variation distance between the bond-step image of Potts and FK.
    pub fn bond_tv(&self) -> f64 {
        total_variation(&self.fk, &self.es_bond)
    }
}

pub fn state_bits(lat: &Lattice, q: usize, boundary: &BoundaryAssignment) -> f64 {
    let free = (0..lat.num_sites()).filter(|&s| boundary.frozen(s).is_none()).count();
    free as f64 * (q as f64).log2() + lat.num_edges() as f64
}

pub fn enumerate_exact(
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
) -> Result<ExactTables, ExactError> {
    enumerate_exact_with_budget(lat, params, boundary, DEFAULT_BUDGET_BITS)
}

pub fn enumerate_exact_with_budget(
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
    budget: f64,
) -> Result<ExactTables, ExactError> {
    if boundary.len() != lat.num_sites() {
        return Err(ExactError::Mismatch);
    }
    let q = params.q();
    let bits = state_bits(lat, q, boundary);
    if bits > budget || lat.num_edges() >= 63 {
        return Err(ExactError::Budget { bits, budget });
    }
    let frozen: Vec<Option<u8>> = (0..lat.num_sites()).map(|s| boundary.frozen(s)).collect();
    let free_sites: Vec<usize> = (0..lat.num_sites()).filter(|&s| frozen[s].is_none()).collect();
    let num_spins = q.pow(free_sites.len() as u32);
    let num_bonds = 1usize << lat.num_edges();
    let mut tables = ExactTables {
        q,
        free_sites,
        frozen,
        potts: Vec::new(),
        fk: Vec::new(),
        es_spin: vec![0.0; num_spins],
        es_bond: vec![0.0; num_bonds],
        residuals: [0.0; 4],
    };

    let beta = params.beta();
    let logs: Vec<f64> =
        (0..num_spins).map(|i| log_gibbs_weight_from_energy(hamiltonian(&tables.spin_config(i), lat), beta)).collect();
    let (potts, r0) = normalize_log(&logs)?;
    tables.potts = potts;

    let logs: Vec<f64> =
        (0..num_bonds as u64).map(|m| log_fk_weight(&BondConfig::from_mask(lat, m), lat, params, boundary)).collect();
    let (fk, r1) = normalize_log(&logs)?;
    tables.fk = fk;

    color_step_image(&mut tables, lat, boundary);
    bond_step_image(&mut tables, lat, params.p());
    let r2 = (tables.es_spin.iter().sum::<f64>() - 1.0).abs();
    let r3 = (tables.es_bond.iter().sum::<f64>() - 1.0).abs();
    tables.residuals = [r0, r1, r2, r3];
    Ok(tables)
}

fn normalize_log(logs: &[f64]) -> Result<(Vec<f64>, f64), ExactError> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ExactError::Degenerate);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let out: Vec<f64> = w.iter().map(|v| v / total).collect();
    let residual = (out.iter().sum::<f64>() - 1.0).abs();
    Ok((out, residual))
}

fn color_step_image(t: &mut ExactTables, lat: &Lattice, boundary: &BoundaryAssignment) {
    let q = t.q;
    let mut radix = vec![0usize; lat.num_sites()];
    let mut r = 1;
    for &s in &t.free_sites {
        radix[s] = r;
        r *= q;
    }
    for (mask, &w) in t.fk.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let labeling = clusters(&BondConfig::from_mask(lat, mask as u64), lat, boundary);
        // index offset per unit colour step of each cluster
        let mut weight_of = vec![0usize; labeling.count()];
        for &s in &t.free_sites {
            weight_of[labeling.id(s)] += radix[s];
        }
        let mut base = 0;
        let mut free_clusters = Vec::new();
        for (k, &wk) in weight_of.iter().enumerate() {
            match labeling.frozen_color(k) {
                Some(c) => base += (c as usize - 1) * wk,
                None => free_clusters.push(wk),
            }
        }
        let share = w / (q as f64).powi(free_clusters.len() as i32);
        let mut digits = vec![0usize; free_clusters.len()];
        let mut idx = base;
        loop {
            t.es_spin[idx] += share;
            let mut k = 0;
            loop {
                if k == digits.len() {
                    break;
                }
                digits[k] += 1;
                idx += free_clusters[k];
                if digits[k] < q {
                    break;
                }
                idx -= q * free_clusters[k];
                digits[k] = 0;
                k += 1;
            }
            if k == digits.len() {
                break;
            }
        }
    }
}

fn bond_step_image(t: &mut ExactTables, lat: &Lattice, p: f64) {
    let e = lat.num_edges();
    let pow_p: Vec<f64> = (0..=e).map(|k| p.powi(k as i32)).collect();
    let pow_c: Vec<f64> = (0..=e).map(|k| (1.0 - p).powi(k as i32)).collect();
    for idx in 0..t.potts.len() {
        let w = t.potts[idx];
        if w == 0.0 {
            continue;
        }
        let sigma = t.spin_config(idx);
        let agree: u64 = lat
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, &[x, y])| sigma.get(x as usize) == sigma.get(y as usize))
            .fold(0, |m, (k, _)| m | 1 << k);
        let a = agree.count_ones() as usize;
        let mut sub = agree;
        loop {
            let o = sub.count_ones() as usize;
            t.es_bond[sub as usize] += w * pow_p[o] * pow_c[a - o];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & agree;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_uniform() {
        let lat = Lattice::grid(&[1]).unwrap();
        let params = ModelParams::new(3, 1.3).unwrap();
        let t = enumerate_exact(&lat, &params, &BoundaryAssignment::free(&lat)).unwrap();
        for w in &t.potts {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_site_agreement() {
        let lat = Lattice::chain(1).unwrap();
        for beta in [0.0, 0.3, 1.7] {
            let params = ModelParams::new(2, beta).unwrap();
            let t = enumerate_exact(&lat, &params, &BoundaryAssignment::free(&lat)).unwrap();
            let agree = t.potts[0] + t.potts[3];
            assert!((agree - 1.0 / (1.0 + (-beta).exp())).abs() < 1e-14);
            assert!(t.spin_tv() < 1e-12 && t.bond_tv() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        let lat = Lattice::build_box(2, 1).unwrap();
        let params = ModelParams::new(3, 0.5).unwrap();
        let t = enumerate_exact(&lat, &params, &BoundaryAssignment::free(&lat)).unwrap();
        for i in 0..t.potts.len() {
            assert_eq!(t.spin_index(&t.spin_config(i)), i);
        }
    }

    #[test]
    fn budget_enforced() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let params = ModelParams::new(2, 0.5).unwrap();
        assert!(matches!(
            enumerate_exact(&lat, &params, &BoundaryAssignment::free(&lat)),
            Err(ExactError::Budget { .. })
        ));
    }
}
