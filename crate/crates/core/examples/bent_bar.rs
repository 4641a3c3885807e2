//! Maps a straight bar onto a bent bar with a different tessellation and
//! prints the solve history and final quality metrics.

use volmap::energies::Energy;
use volmap::mapping::{init_from_surface_map, surface_map_from_fn};
use volmap::mesh::generate;
use volmap::mesh::geometry::Vec3;
use volmap::solver::{solve, SolverConfig};

fn main() {
    let angle: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(45.0);
    let energy = std::env::args().nth(2).and_then(|s| Energy::from_name(&s)).unwrap_or(Energy::Arap);
    let gamma: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(25.0);
    let theta = angle.to_radians();
    let len = 4.0;
    let straight = generate::transformed(&generate::box_grid([16, 5, 4], [len, 1.0, 1.0]), |v| v - Vec3::new(0.0, 0.5, 0.5));
    let bent = generate::bent_bar([13, 5, 5], [len, 1.0, 1.0], theta);
    let (m1, s1) = straight.normalize_volume();
    let (m2, s2) = bent.normalize_volume();
    let f12 = |p: &Vec3| generate::bend_point(&(p / s1), len, theta) * s2;
    let f21 = |p: &Vec3| generate::unbend_point(&(p / s2), len, theta) * s1;
    let smap = surface_map_from_fn(&m1, &m2, f12, f21);
    let init = init_from_surface_map(&m1, &m2, &smap).expect("surface map covers the boundary");
    let mut cfg = SolverConfig { gamma, ..SolverConfig::default() };
    if std::env::args().any(|a| a == "--no-repair") {
        cfg.stages.repair = false;
        cfg.stages.post_repair = false;
    }
    println!("tets: {} / {}", m1.num_tets(), m2.num_tets());
    let (pair, report) = solve(&m1, &m2, init, &cfg, energy).expect("solve");
    for h in &report.history {
        println!(
            "{:>14} {:>2} beta {:.3} total {:.6e} arap {:.4e} r {:.4e} p {:.4e} q {:.4e} |g| {:.2e} lbfgs {} inv {:?}",
            h.stage.to_string(), h.iteration, h.beta, h.after_x.total, h.after_x.e_arap, h.after_x.e_r, h.after_x.e_p, h.after_x.e_q, h.grad_norm, h.lbfgs_iters, h.n_inv
        );
    }
    for s in &report.stages {
        println!("{} stop {:?} n_inv {:?} e_p {:.4e} -> {:.4e}", s.stage, s.stop, s.n_inv_after, s.energy_before.e_p, s.energy_after.e_p);
    }
    for m in &report.metrics {
        println!("{m:?}");
    }
    println!(
        "volume ratio {:.4} {:.4}",
        volmap::metrics::mean_volume_ratio(&m1, &pair.x12),
        volmap::metrics::mean_volume_ratio(&m2, &pair.x21)
    );
    println!("worst half-step increase {:.3e}", report.worst_half_step_increase());
    println!("wall time {:.2?}", report.wall_time);
}
