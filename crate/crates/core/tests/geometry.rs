use pottslab::phase::*;
use pottslab::tau::AxisRule;
use pottslab::wulff::*;
use pottslab::*;

const TOL: f64 = 1e-12;

fn halves(m: usize, q: usize, left: u8, right: u8) -> PhasePartition {
    PhasePartition::from_fn(BlockGrid::uniform(3, m).unwrap(), q, |x| if x[0] < 0.5 { left } else { right }).unwrap()
}

#[test]
fn scale_table() {
    assert_eq!(intermediate_scale(4096, 3), 8);
    assert_eq!(intermediate_scale(16, 3), 2);
    let rows = scale_growth_table(3, &[1 << 8, 1 << 12, 1 << 16]);
    assert!(rows.windows(2).all(|w| w[1].3 > w[0].3));
}

#[test]
fn l1_distance_examples() {
    let g = BlockGrid::uniform(3, 4).unwrap();
    let full = BlockSet::full(g.clone());
    let empty = BlockSet::empty(g.clone());
    let left = BlockSet::from_fn(g, |x| x[0] < 0.5);
    assert_eq!(dist_l1(&full, &full).unwrap(), 0.0);
    assert!((dist_l1(&empty, &full).unwrap() - 1.0).abs() < TOL);
    assert!((dist_l1(&left, &full).unwrap() - 0.5).abs() < TOL);
}

#[test]
fn partition_distance_examples() {
    let a = halves(4, 2, 1, 2);
    let b = halves(4, 2, 2, 1);
    assert_eq!(dist_p(&a, &a).unwrap(), 0.0);
    assert!((dist_p(&a, &b).unwrap() - 2.0).abs() < TOL);
    let other = PhasePartition::constant(BlockGrid::uniform(3, 5).unwrap(), 2, 1).unwrap();
    assert_eq!(dist_p(&a, &other), Err(PhaseError::GridMismatch));
}

#[test]
fn perimeter_examples() {
    let g = BlockGrid::uniform(3, 4).unwrap();
    assert_eq!(discrete_perimeter(&PhasePartition::constant(g.clone(), 2, 1).unwrap()), 0.0);
    assert!((discrete_perimeter(&halves(4, 2, 1, 2)) - 1.0).abs() < TOL);
    let mut p = PhasePartition::constant(g.clone(), 2, 1).unwrap();
    p.set(g.block_index(&[1, 2, 1]), 2);
    let s: f64 = 0.25;
    assert!((discrete_perimeter(&p) - 6.0 * s * s).abs() < TOL);
}

#[test]
fn surface_energy_examples() {
    let g = BlockGrid::uniform(3, 4).unwrap();
    let b = BoundarySpec::top_bottom(3, 2, 1, 2).unwrap();
    for c in [1.0, 0.7, 2.5] {
        let tau = TauModel::isotropic(c).unwrap();
        let up = PhasePartition::from_fn(g.clone(), 2, |x| if x[2] > 0.5 { 1 } else { 2 }).unwrap();
        let down = up.permuted(&[0, 2, 1]);
        assert!((surface_energy(&up, &tau, &b) - c).abs() < TOL);
        assert!((surface_energy(&down, &tau, &b) - 3.0 * c).abs() < TOL);
        let mut hole = up.clone();
        hole.set(5, 0);
        assert_eq!(surface_energy(&hole, &tau, &b), f64::INFINITY);
    }
}

#[test]
fn test_event_arithmetic() {
    let s = TestEventSpec::new(2, 0.3, 0.05).unwrap();
    assert!(s.holds(&[0, 78, 22], 1));
    assert!(!s.holds(&[0, 78, 22], 2));
    let pure = TestEventSpec::new(3, 2.0 / 3.0, 0.01).unwrap();
    assert!(pure.holds(&[0, 0, 50, 0], 2));
    assert!(!pure.holds(&[0, 0, 50, 0], 1) && !pure.holds(&[0, 0, 50, 0], 3));
    let uniform = TestEventSpec::new(3, 0.3, 0.1).unwrap();
    assert!((1..=3).all(|j| !uniform.holds(&[0, 10, 10, 10], j)));
    assert!(TestEventSpec::with_default_eps(2, 0.0).is_err());
}

#[test]
fn isotropic_crystal_is_a_ball() {
    let w = wulff_crystal(&TauModel::isotropic(1.0).unwrap(), 3, 128, 512).unwrap();
    let ball = 4.0 / 3.0 * std::f64::consts::PI;
    assert!((w.raster_volume() / ball - 1.0).abs() < 0.02);
    assert!(w.sphericity_cells(200) <= 2.0);
}

#[test]
fn l1_crystal_is_a_cube() {
    let tau = TauModel::axis_anisotropic(vec![1.0; 3], AxisRule::L1).unwrap();
    let w = wulff_crystal(&tau, 3, 64, 256).unwrap();
    let h = w.cell_size();
    for (c, &inside) in w.cells().iter().enumerate() {
        let r = w.cell_center(c).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r < 1.0 - h {
            assert!(inside, "cell {c} at ℓ∞ radius {r}");
        }
        if r > 1.0 + h {
            assert!(!inside, "cell {c} at ℓ∞ radius {r}");
        }
    }
}

#[test]
fn reference_partition_volumes() {
    let g = BlockGrid::uniform(3, 16).unwrap();
    let slab = reference_partition(&ReferenceKind::FlatSlab { lower: 2, upper: 1 }, &g, 2, None).unwrap();
    assert!((slab.volume(1) - 0.5).abs() < TOL && (slab.volume(2) - 0.5).abs() < TOL);

    // Nearest-face cells with ties shared evenly have volume exactly 1/6;
    // the raster assigns the tie planes to the lowest face, an O(1/m) excess.
    let mut shared = [0.0; 6];
    for b in 0..g.num_blocks() {
        let x = g.center(b);
        let dist: Vec<f64> = (0..6).map(|f| if f % 2 == 0 { x[f / 2] } else { 1.0 - x[f / 2] }).collect();
        let min = dist.iter().cloned().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..6).filter(|&f| (dist[f] - min).abs() < 1e-12).collect();
        for &f in &tied {
            shared[f] += g.volume(b) / tied.len() as f64;
        }
    }
    assert!(shared.iter().all(|v| (v - 1.0 / 6.0).abs() < TOL), "{shared:?}");
    let mut excess = Vec::new();
    for m in [16, 32, 64] {
        let pyr = reference_partition(&ReferenceKind::Pyramids, &BlockGrid::uniform(3, m).unwrap(), 6, None).unwrap();
        excess.push((1..=6u8).map(|i| (pyr.volume(i) - 1.0 / 6.0).abs()).fold(0.0, f64::max));
        assert!(((1..=6u8).map(|i| pyr.volume(i)).sum::<f64>() - 1.0).abs() < TOL);
    }
    assert!(excess.windows(2).all(|w| w[1] < 0.6 * w[0]), "{excess:?}");
    assert!(excess[2] < 0.01);

    let g32 = BlockGrid::uniform(3, 32).unwrap();
    let w = wulff_crystal(&TauModel::isotropic(1.0).unwrap(), 3, 128, 512).unwrap();
    let kind = ReferenceKind::CornerDroplet { v: 1.0 / 64.0, inside: 2, outside: 1 };
    let drop = reference_partition(&kind, &g32, 2, Some(&w)).unwrap();
    assert!((drop.volume(2) * 64.0 - 1.0).abs() < 0.1);
}

#[test]
fn droplet_energy_scales_with_area() {
    let tau = TauModel::isotropic(1.0).unwrap();
    let w = wulff_crystal(&tau, 3, 128, 512).unwrap();
    let g = BlockGrid::uniform(3, 64).unwrap();
    let free = BoundarySpec::free(3, 2);
    let energy = |lambda: f64| {
        let p = droplet_partition(&g, 2, &w, &[0.5; 3], lambda, 2, 1).unwrap();
        surface_energy(&p, &tau, &free)
    };
    let base = droplet_scale(&w, 0.03);
    let e1 = energy(base);
    for l in [1.25, 1.5] {
        assert!((energy(base * l) / e1 / (l * l) - 1.0).abs() < 0.05);
    }
}
