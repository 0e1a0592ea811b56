//! Potts configurations, energies and Gibbs/FK weights, plus a single-site
//! heat-bath dynamics used as an independent check on the cluster sampler.
//!
//! Energy convention: `H(σ)` counts nearest-neighbour pairs with different
//! colours, so the Gibbs weight is `exp(-β H)`. For `q = 2` this means
//! `β = 2 K` where `K` is the usual Ising coupling with `±1` spins
//! (`-K Σ s_x s_y`); the 3d Ising critical point `K_c ≈ 0.2217` sits at
//! `β ≈ 0.4433` here.

use rand::Rng;
use thiserror::Error;

use crate::cluster::clusters;
use crate::lattice::{BoundaryAssignment, Lattice};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("invalid colour count q = {0}")]
    Colors(usize),
    #[error("invalid inverse temperature {0}")]
    Beta(f64),
    #[error("invalid edge probability {0}")]
    Probability(f64),
    #[error("site {site} is frozen")]
    FrozenSite { site: usize },
    #[error("label {label} at site {site} outside 1..={q}")]
    Label { site: usize, label: u8, q: usize },
    #[error("configuration has {got} entries, lattice has {expected}")]
    Length { expected: usize, got: usize },
}

/// Colour count and inverse temperature. `β = ∞` is accepted as the
/// zero-temperature limit with edge probability `p = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    q: usize,
    beta: f64,
}

impl ModelParams {
    pub fn new(q: usize, beta: f64) -> Result<Self, GibbsError> {
        if q == 0 || q > u8::MAX as usize {
            return Err(GibbsError::Colors(q));
        }
        if beta.is_nan() || beta < 0.0 {
            return Err(GibbsError::Beta(beta));
        }
        Ok(Self { q, beta })
    }

    /// Parameters for a given FK edge probability, `β = -ln(1 - p)`.
    pub fn from_p(q: usize, p: f64) -> Result<Self, GibbsError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GibbsError::Probability(p));
        }
        Self::new(q, -(-p).ln_1p())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `p = 1 - exp(-β)`.
    pub fn p(&self) -> f64 {
        -(-self.beta).exp_m1()
    }
}

/// A colour in `1..=q` per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    q: u8,
    labels: Vec<u8>,
}

impl SpinConfig {
    pub fn from_labels(q: usize, labels: Vec<u8>) -> Result<Self, GibbsError> {
        if q == 0 || q > u8::MAX as usize {
            return Err(GibbsError::Colors(q));
        }
        if let Some((site, &label)) = labels.iter().enumerate().find(|(_, &l)| l == 0 || l as usize > q) {
            return Err(GibbsError::Label { site, label, q });
        }
        Ok(Self { q: q as u8, labels })
    }

    pub fn constant(lat: &Lattice, q: usize, color: u8) -> Result<Self, GibbsError> {
        Self::from_labels(q, vec![color; lat.num_sites()])
    }

    /// Independent uniform colours on free sites, frozen colours elsewhere.
    pub fn random<R: Rng + ?Sized>(lat: &Lattice, q: usize, boundary: &BoundaryAssignment, rng: &mut R) -> Self {
        let labels =
            (0..lat.num_sites()).map(|s| boundary.frozen(s).unwrap_or_else(|| rng.random_range(1..=q as u8))).collect();
        Self { q: q as u8, labels }
    }

    pub fn q(&self) -> usize {
        self.q as usize
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn get(&self, site: usize) -> u8 {
        self.labels[site]
    }

    #[inline]
    pub fn set(&mut self, site: usize, color: u8) {
        debug_assert!(color >= 1 && color <= self.q);
        self.labels[site] = color;
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Overwrite frozen sites with their boundary colour.
    pub fn apply_boundary(&mut self, boundary: &BoundaryAssignment) {
        for (s, l) in self.labels.iter_mut().enumerate() {
            if let Some(c) = boundary.frozen(s) {
                *l = c;
            }
        }
    }

    pub fn respects(&self, boundary: &BoundaryAssignment) -> bool {
        self.labels.iter().enumerate().all(|(s, &l)| boundary.frozen(s).is_none_or(|c| c == l))
    }

    /// Number of sites of each colour, indexed `0..=q` (entry 0 unused).
    pub fn color_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.q as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Apply a colour permutation `perm[c]` (indexed `0..=q`, entry 0 ignored).
    pub fn permuted(&self, perm: &[u8]) -> Self {
        Self { q: self.q, labels: self.labels.iter().map(|&l| perm[l as usize]).collect() }
    }
}

/// An open/closed bit per lattice edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BondConfig {
    open: Vec<bool>,
}

impl BondConfig {
    pub fn closed(lat: &Lattice) -> Self {
        Self { open: vec![false; lat.num_edges()] }
    }

    pub fn all_open(lat: &Lattice) -> Self {
        Self { open: vec![true; lat.num_edges()] }
    }

    pub fn from_bits(open: Vec<bool>) -> Self {
        Self { open }
    }

    /// Edge `e` is open iff bit `e` of `mask` is set.
    pub fn from_mask(lat: &Lattice, mask: u64) -> Self {
        Self { open: (0..lat.num_edges()).map(|e| mask >> e & 1 == 1).collect() }
    }

    pub fn mask(&self) -> u64 {
        debug_assert!(self.open.len() <= 64);
        self.open.iter().enumerate().fold(0, |m, (e, &o)| m | (u64::from(o) << e))
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    #[inline]
    pub fn is_open(&self, e: usize) -> bool {
        self.open[e]
    }

    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        self.open[e] = open;
    }

    pub fn bits(&self) -> &[bool] {
        &self.open
    }

    pub fn num_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }
}

/// Number of edges whose endpoints carry different colours. Edges between
/// two frozen sites are included; they only add a constant.
pub fn hamiltonian(sigma: &SpinConfig, lat: &Lattice) -> u64 {
    lat.edges().iter().filter(|[x, y]| sigma.get(*x as usize) != sigma.get(*y as usize)).count() as u64
}

pub fn log_gibbs_weight(sigma: &SpinConfig, lat: &Lattice, beta: f64) -> f64 {
    log_gibbs_weight_from_energy(hamiltonian(sigma, lat), beta)
}

pub fn log_gibbs_weight_from_energy(energy: u64, beta: f64) -> f64 {
    if energy == 0 {
        0.0
    } else {
        -beta * energy as f64
    }
}

/// Unnormalized `exp(-β H(σ))`.
pub fn gibbs_weight(sigma: &SpinConfig, lat: &Lattice, beta: f64) -> f64 {
    log_gibbs_weight(sigma, lat, beta).exp()
}

/// `ln(p^open (1-p)^closed q^#(η))`, or `-∞` when `η` connects boundary
/// sites frozen to different colours.
pub fn log_fk_weight(eta: &BondConfig, lat: &Lattice, params: &ModelParams, boundary: &BoundaryAssignment) -> f64 {
    let labeling = clusters(eta, lat, boundary);
    if !labeling.admissible() {
        return f64::NEG_INFINITY;
    }
    let open = eta.num_open() as f64;
    let closed = (eta.len() - eta.num_open()) as f64;
    let p = params.p();
    let xlogy = |k: f64, v: f64| if k == 0.0 { 0.0 } else { k * v.ln() };
    xlogy(open, p) + xlogy(closed, 1.0 - p) + labeling.count() as f64 * (params.q() as f64).ln()
}

pub fn fk_weight(eta: &BondConfig, lat: &Lattice, params: &ModelParams, boundary: &BoundaryAssignment) -> f64 {
    log_fk_weight(eta, lat, params, boundary).exp()
}

/// Conditional law of the colour at `site` given its neighbours; entry
/// `c - 1` is the probability of colour `c`.
pub fn heat_bath_probabilities(sigma: &SpinConfig, lat: &Lattice, params: &ModelParams, site: usize) -> Vec<f64> {
    let q = params.q();
    let mut agree = vec![0u32; q];
    for (nb, _) in lat.neighbors(site) {
        agree[sigma.get(nb) as usize - 1] += 1;
    }
    // weight ∝ exp(-β · disagreeing neighbours) ∝ exp(β · agreeing neighbours)
    let max = *agree.iter().max().unwrap_or(&0) as f64;
    let beta = params.beta();
    let mut w: Vec<f64> = agree
        .iter()
        .map(|&a| {
            let gap = max - a as f64;
            if gap == 0.0 {
                1.0
            } else {
                (-beta * gap).exp()
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Resample the colour at `site` from its conditional Gibbs law.
pub fn heat_bath_step<R: Rng + ?Sized>(
    sigma: &mut SpinConfig,
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
    site: usize,
    rng: &mut R,
) -> Result<(), GibbsError> {
    if boundary.frozen(site).is_some() {
        return Err(GibbsError::FrozenSite { site });
    }
    let probs = heat_bath_probabilities(sigma, lat, params, site);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut color = probs.len();
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            color = k + 1;
            break;
        }
    }
    sigma.set(site, color as u8);
    Ok(())
}

/// One heat-bath update of every free site in site order.
pub fn heat_bath_sweep<R: Rng + ?Sized>(
    sigma: &mut SpinConfig,
    lat: &Lattice,
    params: &ModelParams,
    boundary: &BoundaryAssignment,
    rng: &mut R,
) {
    for site in 0..lat.num_sites() {
        if boundary.frozen(site).is_none() {
            heat_bath_step(sigma, lat, params, boundary, site, rng).expect("free site");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn checkerboard(lat: &Lattice) -> SpinConfig {
        let labels = (0..lat.num_sites()).map(|s| 1 + (lat.coords(s).iter().sum::<usize>() % 2) as u8).collect();
        SpinConfig::from_labels(2, labels).unwrap()
    }

    #[test]
    fn params_edge_probability() {
        let m = ModelParams::new(2, 0.0).unwrap();
        assert_eq!(m.p(), 0.0);
        let m = ModelParams::new(3, 2.0f64.ln()).unwrap();
        assert!((m.p() - 0.5).abs() < 1e-15);
        assert_eq!(ModelParams::new(2, f64::INFINITY).unwrap().p(), 1.0);
        assert!(ModelParams::new(2, -1.0).is_err());
        assert!(ModelParams::new(0, 1.0).is_err());
        let mut last = -1.0;
        for k in 0..50 {
            let p = ModelParams::new(2, k as f64 * 0.2).unwrap().p();
            assert!(p > last && p < 1.0);
            last = p;
        }
        let back = ModelParams::from_p(2, 0.3).unwrap();
        assert!((back.p() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn energies() {
        let lat = Lattice::build_box(3, 1).unwrap();
        assert_eq!(hamiltonian(&SpinConfig::constant(&lat, 3, 1).unwrap(), &lat), 0);
        let cb = checkerboard(&lat);
        assert_eq!(hamiltonian(&cb, &lat), 12);
        assert!((gibbs_weight(&cb, &lat, 0.5) - (-6.0f64).exp()).abs() < 1e-15);
        assert_eq!(gibbs_weight(&cb, &lat, 0.0), 1.0);

        let seg = Lattice::chain(1).unwrap();
        let s = SpinConfig::from_labels(2, vec![1, 2]).unwrap();
        assert_eq!(hamiltonian(&s, &seg), 1);
    }

    #[test]
    fn log_weight_linear_in_beta() {
        let lat = Lattice::build_box(3, 1).unwrap();
        let cb = checkerboard(&lat);
        let h = hamiltonian(&cb, &lat) as f64;
        for (b1, b2) in [(0.1, 0.7), (1.3, 0.2)] {
            let lhs = log_gibbs_weight(&cb, &lat, b1 + b2);
            let rhs = log_gibbs_weight(&cb, &lat, b1) + log_gibbs_weight(&cb, &lat, b2);
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((lhs + (b1 + b2) * h).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_weight_two_sites() {
        let seg = Lattice::chain(1).unwrap();
        let free = BoundaryAssignment::free(&seg);
        let params = ModelParams::from_p(2, 0.5).unwrap();
        let open = fk_weight(&BondConfig::all_open(&seg), &seg, &params, &free);
        let closed = fk_weight(&BondConfig::closed(&seg), &seg, &params, &free);
        assert!((open - 1.0).abs() < 1e-12);
        assert!((closed - 2.0).abs() < 1e-12);
        assert!((open / (open + closed) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fk_weight_p_zero_and_constraint() {
        let lat = Lattice::build_box(2, 1).unwrap();
        let free = BoundaryAssignment::free(&lat);
        let params = ModelParams::new(2, 0.0).unwrap();
        for mask in 0..16u64 {
            let w = fk_weight(&BondConfig::from_mask(&lat, mask), &lat, &params, &free);
            assert_eq!(w > 0.0, mask == 0);
        }
        // frozen colours 1 and 2 at the ends of a chain: opening the path is forbidden
        let seg = Lattice::chain(2).unwrap();
        let bc = BoundaryAssignment::from_indices(2, vec![1, 0, 2]);
        let params = ModelParams::new(2, 1.0).unwrap();
        assert_eq!(fk_weight(&BondConfig::all_open(&seg), &seg, &params, &bc), 0.0);
        assert!(fk_weight(&BondConfig::from_mask(&seg, 1), &seg, &params, &bc) > 0.0);
    }

    #[test]
    fn fk_weight_symmetry() {
        // reflection x -> 1 - x of the 2x2 grid maps edges onto edges
        let lat = Lattice::build_box(2, 1).unwrap();
        let free = BoundaryAssignment::free(&lat);
        let params = ModelParams::new(3, 0.8).unwrap();
        let reflect = |s: usize| {
            let c = lat.coords(s);
            lat.site_at(&[1 - c[0], c[1]]).unwrap()
        };
        let edge_image: Vec<usize> = (0..lat.num_edges())
            .map(|e| {
                let (x, y) = lat.edge(e);
                let (a, b) = (reflect(x), reflect(y));
                (0..lat.num_edges())
                    .find(|&f| {
                        let (u, v) = lat.edge(f);
                        (u, v) == (a, b) || (u, v) == (b, a)
                    })
                    .unwrap()
            })
            .collect();
        for mask in 0..16u64 {
            let eta = BondConfig::from_mask(&lat, mask);
            let img = BondConfig::from_bits(
                (0..4).map(|f| eta.is_open(edge_image.iter().position(|&g| g == f).unwrap())).collect(),
            );
            let a = fk_weight(&eta, &lat, &params, &free);
            let b = fk_weight(&img, &lat, &params, &free);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn heat_bath_conditionals() {
        let lat = Lattice::build_box(2, 2).unwrap();
        let center = lat.center_site();
        let sigma = SpinConfig::constant(&lat, 2, 1).unwrap();
        let p0 = heat_bath_probabilities(&sigma, &lat, &ModelParams::new(4, 0.0).unwrap(), center);
        assert!(p0.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let beta = 0.7;
        let probs = heat_bath_probabilities(&sigma, &lat, &ModelParams::new(2, beta).unwrap(), center);
        let k = 4.0;
        let expect = (beta * k).exp() / ((beta * k).exp() + 1.0);
        assert!((probs[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn heat_bath_detailed_balance_chain() {
        let lat = Lattice::chain(2).unwrap();
        let params = ModelParams::new(3, 0.9).unwrap();
        let mut configs = Vec::new();
        for a in 1..=3u8 {
            for b in 1..=3u8 {
                for c in 1..=3u8 {
                    configs.push(SpinConfig::from_labels(3, vec![a, b, c]).unwrap());
                }
            }
        }
        for s in &configs {
            for site in 0..3 {
                for new in 1..=3u8 {
                    let mut t = s.clone();
                    t.set(site, new);
                    let fwd =
                        gibbs_weight(s, &lat, 0.9) * heat_bath_probabilities(s, &lat, &params, site)[new as usize - 1];
                    let back = gibbs_weight(&t, &lat, 0.9)
                        * heat_bath_probabilities(&t, &lat, &params, site)[s.get(site) as usize - 1];
                    assert!((fwd - back).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frozen_site_rejected() {
        let lat = Lattice::build_box(2, 2).unwrap();
        let bc = BoundaryAssignment::wired(&lat);
        let mut sigma = SpinConfig::constant(&lat, 2, 1).unwrap();
        let mut rng = RngStream::new(1, 0);
        let params = ModelParams::new(2, 1.0).unwrap();
        assert_eq!(
            heat_bath_step(&mut sigma, &lat, &params, &bc, 0, &mut rng),
            Err(GibbsError::FrozenSite { site: 0 })
        );
        heat_bath_step(&mut sigma, &lat, &params, &bc, lat.center_site(), &mut rng).unwrap();
    }

    #[test]
    fn labels_validated() {
        assert!(SpinConfig::from_labels(2, vec![1, 3]).is_err());
        assert!(SpinConfig::from_labels(2, vec![0, 1]).is_err());
    }
}
