use super::*;
use crate::mapping::BarycentricMap;
use crate::mesh::generate;

fn quick_config() -> SolverConfig {
    SolverConfig {
        max_outer_iters: 6,
        lbfgs_max_iters: 60,
        ..SolverConfig::default()
    }
}

#[test]
fn beta_schedule() {
    let c = SolverConfig::default();
    assert_eq!(c.beta(0), 0.25);
    assert_eq!(c.beta(20), 5.0);
    assert_eq!(c.beta(45), 5.0);
    assert!((c.beta(10) - 2.625).abs() < 1e-15);
    assert_eq!(SolverConfig { beta_ramp: 0, ..c }.beta(0), 5.0);
}

#[test]
fn config_validation() {
    assert!(SolverConfig::default().validate().is_ok());
    assert!(SolverConfig { alpha: -0.1, ..Default::default() }.validate().is_err());
    assert!(SolverConfig { grad_tol: 0.0, ..Default::default() }.validate().is_err());
    assert!(SolverConfig { lbfgs_memory: 0, ..Default::default() }.validate().is_err());
}

#[test]
fn identity_self_map_is_a_fixed_point() {
    let (m, _) = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]).normalize_volume();
    let init = MapPair::identity(&m);
    let (pair, report) = solve(&m, &m, init.clone(), &SolverConfig::default(), Energy::Arap).unwrap();
    assert_eq!(pair, init);
    for s in report.stages.iter().filter(|s| s.stop.is_some()) {
        assert!(s.iterations <= s.iterations.min(SolverConfig::default().beta_ramp + 1));
    }
    let e = report.final_energy;
    for v in [e.e_arap, e.e_r, e.e_p, e.e_q, e.total] {
        assert!(v.abs() <= 1e-10);
    }
}

#[test]
fn x_step_leaves_identity_and_relaxes_perturbation() {
    let (m, _) = generate::box_grid([2, 2, 2], [1.0, 1.0, 1.0]).normalize_volume();
    let obj = Objective::new(&m, &m, Energy::Arap);
    let w = SolverConfig::default().weights(1.0);
    let mut pair = MapPair::identity(&m);
    let out = x_step(&obj, &mut pair, &w, &LbfgsConfig::default()).unwrap();
    assert_eq!(out.iters, 0);
    assert_eq!(pair, MapPair::identity(&m));

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    use rand::Rng;
    pair.x12.iter_mut().for_each(|v| *v += Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), 0.0));
    let e0 = obj.energy([&pair.p12, &pair.p21], [&pair.x12, &pair.x21], &w).unwrap();
    x_step(&obj, &mut pair, &w, &LbfgsConfig::default()).unwrap();
    let e1 = obj.energy([&pair.p12, &pair.p21], [&pair.x12, &pair.x21], &w).unwrap();
    assert!(e1.e_arap < e0.e_arap);
    assert!(e1.total <= e0.total);
}

fn small_pair() -> (TetMesh, TetMesh, MapPair) {
    let (m1, _) = generate::box_grid([3, 2, 2], [1.5, 1.0, 1.0]).normalize_volume();
    let (m2, _) = generate::transformed(&generate::box_grid([2, 3, 2], [1.2, 1.1, 0.9]), |v| {
        Vec3::new(v.x + 0.15 * v.y * v.y, v.y, v.z)
    })
    .normalize_volume();
    // map through the bounding boxes
    let fit = |from: &TetMesh, to: &TetMesh| {
        let bb = |m: &TetMesh| {
            let lo = m.vertices().iter().fold(Vec3::repeat(f64::INFINITY), |a, v| a.inf(v));
            let hi = m.vertices().iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
            (lo, hi)
        };
        let ((a0, a1), (b0, b1)) = (bb(from), bb(to));
        let pts: Vec<Vec3> = from
            .vertices()
            .iter()
            .map(|v| b0 + (v - a0).component_div(&(a1 - a0)).component_mul(&(b1 - b0)))
            .collect();
        let loc = crate::transfer::PointLocator::new(to);
        let rows = pts.iter().map(|p| loc.locate(p).row).collect();
        BarycentricMap { rows }
    };
    let init = MapPair::from_maps(&m1, &m2, fit(&m1, &m2), fit(&m2, &m1));
    (m1, m2, init)
}

#[test]
fn half_steps_are_monotone_and_boundary_rows_stay_fixed() {
    let (m1, m2, init) = small_pair();
    let cfg = SolverConfig {
        stages: StageToggles { boundary_fixed: true, repair: false, free: false, post_repair: false },
        ..quick_config()
    };
    let (pair, report) = solve(&m1, &m2, init.clone(), &cfg, Energy::Arap).unwrap();
    assert!(!report.history.is_empty());
    assert!(report.worst_half_step_increase() <= 1e-12, "{}", report.worst_half_step_increase());
    for v in m1.boundary().vertices.iter() {
        assert_eq!(pair.p12.rows[*v], init.p12.rows[*v]);
    }
    for v in m2.boundary().vertices.iter() {
        assert_eq!(pair.p21.rows[*v], init.p21.rows[*v]);
    }
    assert!(report.history.last().unwrap().after_x.total < report.history[0].before.total);
}

#[test]
fn swapping_the_meshes_swaps_the_report() {
    let (m1, m2, init) = small_pair();
    let cfg = SolverConfig { max_outer_iters: 3, ..quick_config() };
    let (a_pair, a) = solve(&m1, &m2, init.clone(), &cfg, Energy::Arap).unwrap();
    let (b_pair, b) = solve(&m2, &m1, init.swapped(), &cfg, Energy::Arap).unwrap();
    let json = |r: &SolveReport| serde_json::to_string(r).unwrap();
    assert_eq!(json(&a), json(&b.swapped()));
    assert_eq!(a_pair, b_pair.swapped());
}

#[test]
fn size_mismatch_is_rejected() {
    let (m1, m2, mut init) = small_pair();
    init.x21.pop();
    assert!(matches!(
        solve(&m1, &m2, init, &SolverConfig::default(), Energy::Arap),
        Err(SolveError::SizeMismatch)
    ));
}

fn corner_landmarks(cube: &TetMesh) -> crate::mesh::LandmarkSet {
    use crate::mesh::{Landmark, SimplexPoint};
    let pairs = (0..cube.num_vertices())
        .filter(|&i| cube.vertices()[i].iter().all(|c| *c == 0.0 || *c == 1.0))
        .map(|i| {
            let t = cube.vertex_tets(i)[0];
            let mut weights = [0.0; 4];
            weights[cube.tets()[t].iter().position(|&k| k == i).unwrap()] = 1.0;
            let p = SimplexPoint::Tet { id: t, weights };
            Landmark { on_first: p, on_second: p }
        })
        .collect();
    crate::mesh::LandmarkSet { pairs }
}

#[test]
fn collapsed_init_decreases_and_repair_uninverts() {
    let cube = generate::box_grid([4, 4, 4], [1.0, 1.0, 1.0]);
    let stretched = generate::transformed(&cube, |v| Vec3::new(1.2 * v.x, v.y, v.z / 1.2));
    let lm = corner_landmarks(&cube);
    assert_eq!(lm.len(), 8);
    let (m1, _) = cube.normalize_volume();
    let (m2, _) = stretched.normalize_volume();
    let init = crate::mapping::init_from_landmarks(&m1, &m2, &lm).unwrap();
    let cfg = SolverConfig { max_outer_iters: 25, ..SolverConfig::default() };
    let (_, report) = solve(&m1, &m2, init, &cfg, Energy::Arap).unwrap();
    let first = &report.history[0];
    assert!(first.after_x.total < first.before.total);
    let rep = report.stages.iter().find(|s| s.stage == Stage::Repair).unwrap();
    let [a, b] = rep.repair.as_ref().unwrap();
    assert!(a.inverted_before + b.inverted_before > 0);
    assert!(a.inverted_after + b.inverted_after < a.inverted_before + b.inverted_before);
}
