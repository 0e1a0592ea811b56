//! Lattice geometry for the scaled unit cube, boundary conditions and the
//! half-open boxes used to tile the cube into mesoscopic blocks.
//!
//! Sites are enumerated lexicographically by their integer coordinates with
//! the first axis most significant (the last axis varies fastest). Edges are
//! enumerated by `(site, axis)`: for each site in order, for each axis in
//! order, the edge to the `+axis` neighbour if it exists.

use thiserror::Error;

/// Default cap on the number of sites a lattice may allocate.
pub const DEFAULT_MAX_SITES: usize = 1 << 24;

const NO_EDGE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid dimension {0}")]
    Dimension(usize),
    #[error("invalid resolution {0}")]
    Resolution(usize),
    #[error("lattice with {sites} sites exceeds the budget of {budget} sites")]
    Sizing { sites: u128, budget: usize },
    #[error("invalid boundary specification: {0}")]
    Boundary(String),
    #[error("operation requires a box lattice built at a resolution")]
    NotABox,
}

/// A finite hypercubic grid with nearest-neighbour edges.
///
/// For the scaled unit cube `build_box(d, n)` the site with integer
/// coordinates `c` sits at the physical point `c / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    d: usize,
    /// Resolution `n` of the scaled cube, `None` for plain grids.
    resolution: Option<usize>,
    extent: Vec<usize>,
    strides: Vec<usize>,
    num_sites: usize,
    edges: Vec<[u32; 2]>,
    edge_axis: Vec<u8>,
    /// `edge_at[site * d + axis]` is the edge from `site` in the `+axis` direction.
    edge_at: Vec<u32>,
}

impl Lattice {
    /// The sites of the closed unit cube at resolution `n`, `d >= 2`.
    pub fn build_box(d: usize, n: usize) -> Result<Self, LatticeError> {
        Self::build_box_with_budget(d, n, DEFAULT_MAX_SITES)
    }

    pub fn build_box_with_budget(d: usize, n: usize, max_sites: usize) -> Result<Self, LatticeError> {
        if d < 2 {
            return Err(LatticeError::Dimension(d));
        }
        Self::scaled_cube(d, n, max_sites)
    }

    /// A segment of `n + 1` sites on `[0, 1]`. Only used for tiny test systems.
    pub fn chain(n: usize) -> Result<Self, LatticeError> {
        Self::scaled_cube(1, n, DEFAULT_MAX_SITES)
    }

    fn scaled_cube(d: usize, n: usize, max_sites: usize) -> Result<Self, LatticeError> {
        if d == 0 {
            return Err(LatticeError::Dimension(d));
        }
        if n == 0 {
            return Err(LatticeError::Resolution(n));
        }
        let mut lat = Self::grid_with_budget(&vec![n + 1; d], max_sites)?;
        lat.resolution = Some(n);
        Ok(lat)
    }

    /// A rectangular grid with `extent[a]` sites along axis `a`.
    pub fn grid(extent: &[usize]) -> Result<Self, LatticeError> {
        Self::grid_with_budget(extent, DEFAULT_MAX_SITES)
    }

    pub fn grid_with_budget(extent: &[usize], max_sites: usize) -> Result<Self, LatticeError> {
        let d = extent.len();
        if d == 0 {
            return Err(LatticeError::Dimension(0));
        }
        if extent.contains(&0) {
            return Err(LatticeError::Resolution(0));
        }
        let sites: u128 = extent.iter().map(|&e| e as u128).product();
        // edges plus the per-site edge table scale like (d + 1) * sites
        if sites > max_sites as u128 || sites * (d as u128 + 1) > (u32::MAX as u128) {
            return Err(LatticeError::Sizing { sites, budget: max_sites });
        }
        let num_sites = sites as usize;
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * extent[a + 1];
        }

        let mut edges = Vec::new();
        let mut edge_axis = Vec::new();
        let mut edge_at = vec![NO_EDGE; num_sites * d];
        for site in 0..num_sites {
            for a in 0..d {
                let c = (site / strides[a]) % extent[a];
                if c + 1 < extent[a] {
                    edge_at[site * d + a] = edges.len() as u32;
                    edges.push([site as u32, (site + strides[a]) as u32]);
                    edge_axis.push(a as u8);
                }
            }
        }
        Ok(Self { d, resolution: None, extent: extent.to_vec(), strides, num_sites, edges, edge_axis, edge_at })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Resolution `n` of a scaled cube.
    pub fn resolution(&self) -> Option<usize> {
        self.resolution
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, e: usize) -> (usize, usize) {
        let [x, y] = self.edges[e];
        (x as usize, y as usize)
    }

    #[inline]
    pub fn edge_axis(&self, e: usize) -> usize {
        self.edge_axis[e] as usize
    }

    #[inline]
    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.extent[axis]
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        (0..self.d).map(|a| self.coord(site, a)).collect()
    }

    pub fn site_at(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.d {
            return None;
        }
        let mut site = 0;
        for (a, &c) in coords.iter().enumerate() {
            if c >= self.extent[a] {
                return None;
            }
            site += c * self.strides[a];
        }
        Some(site)
    }

    /// Physical position `c / n` of a site of a scaled cube.
    pub fn position(&self, site: usize) -> Option<Vec<f64>> {
        let n = self.resolution? as f64;
        Some((0..self.d).map(|a| self.coord(site, a) as f64 / n).collect())
    }

    /// The site closest to the centre of the grid (rounding coordinates down).
    pub fn center_site(&self) -> usize {
        let c: Vec<usize> = self.extent.iter().map(|&e| (e - 1) / 2).collect();
        self.site_at(&c).expect("centre inside grid")
    }

    /// Sites with some coordinate on the outer layer of the grid.
    pub fn is_boundary(&self, site: usize) -> bool {
        (0..self.d).any(|a| {
            let c = self.coord(site, a);
            c == 0 || c + 1 == self.extent[a]
        })
    }

    /// Edge joining `site` to its `+axis` neighbour.
    #[inline]
    pub fn edge_plus(&self, site: usize, axis: usize) -> Option<usize> {
        let e = self.edge_at[site * self.d + axis];
        (e != NO_EDGE).then_some(e as usize)
    }

    /// Edge joining `site` to its `-axis` neighbour.
    #[inline]
    pub fn edge_minus(&self, site: usize, axis: usize) -> Option<usize> {
        if self.coord(site, axis) == 0 {
            None
        } else {
            self.edge_plus(site - self.strides[axis], axis)
        }
    }

    /// Neighbours of `site` as `(neighbour, edge)` pairs.
    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |a| {
            let minus = self.edge_minus(site, a).map(|e| (site - self.strides[a], e));
            let plus = self.edge_plus(site, a).map(|e| (site + self.strides[a], e));
            minus.into_iter().chain(plus)
        })
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Sites of the half-open box `{y : -r/2 < y_i - x_i <= r/2}` on a scaled cube.
    pub fn box_at(&self, x: &[f64], r: f64) -> Result<Vec<usize>, LatticeError> {
        let n = self.resolution.ok_or(LatticeError::NotABox)? as f64;
        if x.len() != self.d {
            return Err(LatticeError::Dimension(x.len()));
        }
        // integer coordinate ranges per axis: lo < c <= hi (in lattice units)
        const TOL: f64 = 1e-9;
        let ranges: Vec<(usize, usize)> = (0..self.d)
            .map(|a| {
                let lo = (x[a] - r / 2.0) * n;
                let hi = (x[a] + r / 2.0) * n;
                let first = (lo + TOL).floor() + 1.0;
                let last = (hi + TOL).floor();
                let max = (self.extent[a] - 1) as f64;
                let first = first.max(0.0);
                let last = last.min(max);
                if first > last {
                    (1, 0)
                } else {
                    (first as usize, last as usize)
                }
            })
            .collect();
        if ranges.iter().any(|&(f, l)| f > l) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut c: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.site_at(&c).expect("in range"));
            let mut a = self.d;
            loop {
                if a == 0 {
                    return Ok(out);
                }
                a -= 1;
                if c[a] < ranges[a].1 {
                    c[a] += 1;
                    break;
                }
                c[a] = ranges[a].0;
            }
        }
    }
}

/// Closed axis-aligned box lying in a face of the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatch {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundaryPatch {
    /// The whole closed face `x_axis = side` (side 0 or 1).
    pub fn face(d: usize, axis: usize, high: bool) -> Self {
        let mut lo = vec![0.0; d];
        let mut hi = vec![1.0; d];
        let s = if high { 1.0 } else { 0.0 };
        lo[axis] = s;
        hi[axis] = s;
        Self { lo, hi }
    }

    /// Max-norm distance from `x` to the patch.
    pub fn distance_inf(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Axis of the cube face carrying the patch, with side (false = 0, true = 1).
    pub fn face_of(&self) -> Option<(usize, bool)> {
        (0..self.lo.len()).find_map(|a| {
            if self.lo[a] == self.hi[a] && (self.lo[a] == 0.0 || self.lo[a] == 1.0) {
                Some((a, self.lo[a] == 1.0))
            } else {
                None
            }
        })
    }
}

/// A division of the cube boundary into parts `Γ⁰, …, Γ^q`; part 0 is the
/// free part, part `i >= 1` carries boundary colour `i`.
///
/// Faces are indexed `2 * axis + side` with side 0 the face `x_axis = 0`.
/// The "top" face is the high face of the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    d: usize,
    q: usize,
    parts: Vec<Vec<BoundaryPatch>>,
}

impl BoundarySpec {
    pub fn from_parts(d: usize, q: usize, parts: Vec<Vec<BoundaryPatch>>) -> Result<Self, LatticeError> {
        if parts.len() != q + 1 {
            return Err(LatticeError::Boundary(format!("expected {} parts, got {}", q + 1, parts.len())));
        }
        for patch in parts.iter().flatten() {
            if patch.lo.len() != d || patch.hi.len() != d {
                return Err(LatticeError::Boundary("patch dimension mismatch".into()));
            }
            let in_cube = patch
                .lo
                .iter()
                .zip(&patch.hi)
                .all(|(&lo, &hi)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi);
            if !in_cube || patch.face_of().is_none() {
                return Err(LatticeError::Boundary(format!("patch {patch:?} is not on the cube boundary")));
            }
        }
        Ok(Self { d, q, parts })
    }

    /// One part per face: `colors[2 * axis + side]` in `0..=q`.
    pub fn faces(d: usize, q: usize, colors: &[usize]) -> Result<Self, LatticeError> {
        if colors.len() != 2 * d {
            return Err(LatticeError::Boundary(format!("expected {} face colours, got {}", 2 * d, colors.len())));
        }
        if let Some(&c) = colors.iter().find(|&&c| c > q) {
            return Err(LatticeError::Boundary(format!("face colour {c} exceeds q = {q}")));
        }
        let mut parts = vec![Vec::new(); q + 1];
        for (f, &c) in colors.iter().enumerate() {
            parts[c].push(BoundaryPatch::face(d, f / 2, f % 2 == 1));
        }
        Self::from_parts(d, q, parts)
    }

    /// The whole boundary free.
    pub fn free(d: usize, q: usize) -> Self {
        Self::faces(d, q, &vec![0; 2 * d]).expect("valid")
    }

    /// The whole boundary carries colour `color`.
    pub fn uniform(d: usize, q: usize, color: usize) -> Result<Self, LatticeError> {
        Self::faces(d, q, &vec![color; 2 * d])
    }

    /// Colour `top` on the high face of the last axis, `bottom` on the low
    /// face, free lateral faces.
    pub fn top_bottom(d: usize, q: usize, top: usize, bottom: usize) -> Result<Self, LatticeError> {
        let mut colors = vec![0; 2 * d];
        colors[2 * (d - 1)] = bottom;
        colors[2 * (d - 1) + 1] = top;
        Self::faces(d, q, &colors)
    }

    /// Face `f` gets colour `f + 1` (requires `q >= 2d`).
    pub fn six_face(d: usize, q: usize) -> Result<Self, LatticeError> {
        let colors: Vec<usize> = (1..=2 * d).collect();
        Self::faces(d, q, &colors)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn parts(&self) -> &[Vec<BoundaryPatch>] {
        &self.parts
    }

    /// Max-norm distance from `x` to part `i` (infinite for an empty part).
    pub fn distance_to_part(&self, i: usize, x: &[f64]) -> f64 {
        self.parts[i].iter().map(|p| p.distance_inf(x)).fold(f64::INFINITY, f64::min)
    }

    /// `(d-1)`-dimensional measure of the intersection of part `i` with the
    /// box `[lo, hi]` lying in face `(axis, high)`.
    pub fn overlap_area(&self, i: usize, axis: usize, high: bool, lo: &[f64], hi: &[f64]) -> f64 {
        let side = if high { 1.0 } else { 0.0 };
        self.parts[i]
            .iter()
            .filter(|p| p.lo[axis] == side && p.hi[axis] == side)
            .map(|p| {
                (0..self.d)
                    .filter(|&k| k != axis)
                    .map(|k| (hi[k].min(p.hi[k]) - lo[k].max(p.lo[k])).max(0.0))
                    .product::<f64>()
            })
            .sum()
    }
}

/// Discretized boundary condition: index in `0..=q` for every site (0 for
/// interior sites and for boundary sites of the free part).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryAssignment {
    q: usize,
    index: Vec<u8>,
}

impl BoundaryAssignment {
    /// No frozen sites.
    pub fn free(lat: &Lattice) -> Self {
        Self { q: 0, index: vec![0; lat.num_sites()] }
    }

    /// Every site of the outer layer frozen to colour 1.
    pub fn wired(lat: &Lattice) -> Self {
        let index = (0..lat.num_sites()).map(|s| u8::from(lat.is_boundary(s))).collect();
        Self { q: 1, index }
    }

    /// Explicit per-site indices (0 = free).
    pub fn from_indices(q: usize, index: Vec<u8>) -> Self {
        Self { q, index }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Largest boundary index this assignment may contain.
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn index(&self, site: usize) -> u8 {
        self.index[site]
    }

    #[inline]
    pub fn frozen(&self, site: usize) -> Option<u8> {
        match self.index[site] {
            0 => None,
            c => Some(c),
        }
    }

    pub fn indices(&self) -> &[u8] {
        &self.index
    }

    pub fn num_frozen(&self) -> usize {
        self.index.iter().filter(|&&c| c != 0).count()
    }

    pub fn has_frozen(&self) -> bool {
        self.index.iter().any(|&c| c != 0)
    }
}

/// Assign every boundary site the smallest part index `i` with
/// `d∞(x, Γⁱ) < 1/n`; sites near no part get 0.
pub fn discretize_boundary(spec: &BoundarySpec, lat: &Lattice) -> Result<BoundaryAssignment, LatticeError> {
    let n = lat.resolution().ok_or(LatticeError::NotABox)?;
    if spec.dim() != lat.dim() {
        return Err(LatticeError::Boundary(format!(
            "boundary is {}-dimensional, lattice is {}-dimensional",
            spec.dim(),
            lat.dim()
        )));
    }
    if spec.q() > u8::MAX as usize {
        return Err(LatticeError::Boundary("too many colours".into()));
    }
    let nf = n as f64;
    let mut index = vec![0u8; lat.num_sites()];
    for (site, slot) in index.iter_mut().enumerate() {
        if !lat.is_boundary(site) {
            continue;
        }
        let x = lat.position(site).expect("box lattice");
        *slot = (0..=spec.q()).find(|&i| spec.distance_to_part(i, &x) * nf < 1.0 - 1e-9).unwrap_or(0) as u8;
    }
    Ok(BoundaryAssignment { q: spec.q(), index })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_edge_count(lat: &Lattice) -> usize {
        let mut count = 0;
        for x in 0..lat.num_sites() {
            for y in x + 1..lat.num_sites() {
                let cx = lat.coords(x);
                let cy = lat.coords(y);
                let l1: usize = cx.iter().zip(&cy).map(|(a, b)| a.abs_diff(*b)).sum();
                if l1 == 1 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn box_sizes() {
        let cube = Lattice::build_box(3, 1).unwrap();
        assert_eq!((cube.num_sites(), cube.num_edges()), (8, 12));
        let sq = Lattice::build_box(2, 2).unwrap();
        assert_eq!((sq.num_sites(), sq.num_edges()), (9, 12));
        let big = Lattice::build_box(3, 4).unwrap();
        assert_eq!((big.num_sites(), big.num_edges()), (125, 300));
        assert_eq!(brute_edge_count(&big), 300);
        assert_eq!(3 * 4 * 5 * 5, 300);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert_eq!(Lattice::build_box(1, 3), Err(LatticeError::Dimension(1)));
        assert_eq!(Lattice::build_box(2, 0), Err(LatticeError::Resolution(0)));
        assert!(matches!(Lattice::build_box_with_budget(3, 100, 1000), Err(LatticeError::Sizing { .. })));
    }

    #[test]
    fn edges_join_unit_steps() {
        let lat = Lattice::build_box(3, 3).unwrap();
        for e in 0..lat.num_edges() {
            let (x, y) = lat.edge(e);
            let a = lat.edge_axis(e);
            for k in 0..3 {
                let diff = lat.coord(y, k) as isize - lat.coord(x, k) as isize;
                assert_eq!(diff, if k == a { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn neighbors_are_symmetric() {
        let lat = Lattice::build_box(2, 3).unwrap();
        let total: usize = (0..lat.num_sites()).map(|s| lat.neighbors(s).count()).sum();
        assert_eq!(total, 2 * lat.num_edges());
        for s in 0..lat.num_sites() {
            for (t, e) in lat.neighbors(s) {
                assert!(lat.neighbors(t).any(|(u, f)| u == s && f == e));
            }
        }
    }

    #[test]
    fn whole_boundary_single_part() {
        let lat = Lattice::build_box(2, 2).unwrap();
        let spec = BoundarySpec::uniform(2, 1, 1).unwrap();
        let asg = discretize_boundary(&spec, &lat).unwrap();
        let frozen: Vec<usize> = (0..9).filter(|&s| asg.index(s) == 1).collect();
        assert_eq!(frozen.len(), 8);
        assert_eq!(asg.index(lat.center_site()), 0);
    }

    #[test]
    fn top_bottom_priority() {
        // Γ¹ top, Γ² bottom, Γ⁰ the lateral faces; sites on the lateral faces
        // are within 1/n of Γ⁰, which has priority over every other part.
        let lat = Lattice::build_box(3, 2).unwrap();
        let spec = BoundarySpec::top_bottom(3, 2, 1, 2).unwrap();
        let asg = discretize_boundary(&spec, &lat).unwrap();
        let mut counts = [0usize; 3];
        for s in 0..lat.num_sites() {
            if !lat.is_boundary(s) {
                continue;
            }
            let c = lat.coords(s);
            let lateral = c[0] == 0 || c[0] == 2 || c[1] == 0 || c[1] == 2;
            let expect = if lateral {
                0
            } else if c[2] == 2 {
                1
            } else {
                2
            };
            assert_eq!(asg.index(s), expect, "site {c:?}");
            counts[expect as usize] += 1;
        }
        assert_eq!(counts, [24, 1, 1]);
    }

    #[test]
    fn six_face_smallest_adjacent_color() {
        let lat = Lattice::build_box(3, 3).unwrap();
        let spec = BoundarySpec::six_face(3, 6).unwrap();
        let asg = discretize_boundary(&spec, &lat).unwrap();
        for s in 0..lat.num_sites() {
            let c = lat.coords(s);
            let adjacent: Vec<usize> = (0..3)
                .flat_map(|a| {
                    let mut v = Vec::new();
                    if c[a] == 0 {
                        v.push(2 * a + 1);
                    }
                    if c[a] == 3 {
                        v.push(2 * a + 2);
                    }
                    v
                })
                .collect();
            let expect = adjacent.iter().copied().min().unwrap_or(0);
            assert_eq!(asg.index(s) as usize, expect);
        }
    }

    #[test]
    fn discretization_is_deterministic() {
        let lat = Lattice::build_box(3, 4).unwrap();
        let spec = BoundarySpec::top_bottom(3, 3, 1, 3).unwrap();
        assert_eq!(discretize_boundary(&spec, &lat).unwrap(), discretize_boundary(&spec, &lat).unwrap());
    }

    #[test]
    fn box_at_counts() {
        let lat = Lattice::build_box(2, 4).unwrap();
        let sites = lat.box_at(&[0.5, 0.5], 0.5).unwrap();
        assert_eq!(sites.len(), 4);
        for s in sites {
            for a in 0..2 {
                assert!([2, 3].contains(&lat.coord(s, a)));
            }
        }
        // r = 1 around the centre: coordinates in (0, 1]
        let all = lat.box_at(&[0.5, 0.5], 1.0).unwrap();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn box_at_translates_are_disjoint() {
        let lat = Lattice::build_box(2, 8).unwrap();
        let a = lat.box_at(&[0.25, 0.5], 0.25).unwrap();
        let b = lat.box_at(&[0.5, 0.5], 0.25).unwrap();
        assert!(!a.is_empty() && !b.is_empty());
        assert!(a.iter().all(|s| !b.contains(s)));
    }

    #[test]
    fn boxes_tile_interior() {
        let n = 12;
        let f = 3;
        let lat = Lattice::build_box(2, n).unwrap();
        let r = f as f64 / n as f64;
        let mut hits = vec![0; lat.num_sites()];
        let m = n / f;
        for i in 0..m {
            for j in 0..m {
                let x = [(i as f64 + 0.5) * r, (j as f64 + 0.5) * r];
                for s in lat.box_at(&x, r).unwrap() {
                    hits[s] += 1;
                }
            }
        }
        for (s, &h) in hits.iter().enumerate() {
            let c = lat.coords(s);
            let expected = usize::from(c.iter().all(|&v| v > 0));
            assert_eq!(h, expected, "site {c:?}");
        }
    }

    #[test]
    fn slab_grid() {
        let lat = Lattice::grid(&[5, 3, 3]).unwrap();
        assert_eq!(lat.num_sites(), 45);
        assert_eq!(lat.num_edges(), 4 * 9 + 2 * 2 * 15);
        assert_eq!(lat.resolution(), None);
        assert!(lat.box_at(&[0.5; 3], 0.5).is_err());
    }
}
