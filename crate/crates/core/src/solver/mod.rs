//! Alternating minimization of the symmetric map objective.
//!
//! Stages: alternate with boundary rows of `P` held at their initial values,
//! repair inversions on the 1-ring of inverted tets, alternate freely, then a
//! short repair restricted to vertices of inverted tets.

pub mod lbfgs;
pub mod pstep;
pub mod repair;

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub use lbfgs::{block_dot, lbfgs_minimize, LbfgsConfig, LbfgsResult, LbfgsStatus};
pub use pstep::{p_step_direction, stacking_weights, LiftedMesh, RowMode};
pub use repair::{repair_inverted, RepairOutcome, RepairScope};

use crate::energies::Energy;
use crate::mapping::{count_inversions, MapPair};
use crate::mesh::geometry::Vec3;
use crate::mesh::TetMesh;
use crate::metrics::{map_metrics, MapMetrics};
use crate::objective::{EnergyBreakdown, Objective, ObjectiveError, ObjectiveWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageToggles {
    pub boundary_fixed: bool,
    pub repair: bool,
    pub free: bool,
    pub post_repair: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            boundary_fixed: true,
            repair: true,
            free: true,
            post_repair: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta_ramp: usize,
    pub max_outer_iters: usize,
    pub grad_tol: f64,
    pub obj_decrease_tol: f64,
    pub lbfgs_memory: usize,
    pub lbfgs_max_iters: usize,
    pub repair_lbfgs_steps: usize,
    pub hard_boundary: bool,
    pub stages: StageToggles,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.5,
            gamma: 25.0,
            beta_start: 0.25,
            beta_end: 5.0,
            beta_ramp: 20,
            max_outer_iters: 50,
            grad_tol: 1e-6,
            obj_decrease_tol: 1e-7,
            lbfgs_memory: 10,
            lbfgs_max_iters: 200,
            repair_lbfgs_steps: 100,
            hard_boundary: false,
            stages: StageToggles::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::BadConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and non-negative");
        }
        if !(self.beta_start > 0.0 && self.beta_end > 0.0 && self.beta_start.is_finite() && self.beta_end.is_finite()) {
            return bad("beta schedule must be positive");
        }
        if !(self.grad_tol > 0.0 && self.obj_decrease_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.lbfgs_memory == 0 || self.lbfgs_max_iters == 0 || self.max_outer_iters == 0 {
            return bad("iteration limits and memory must be positive");
        }
        Ok(())
    }

    /// Linear ramp from `beta_start` to `beta_end` over `beta_ramp` iterations.
    pub fn beta(&self, iteration: usize) -> f64 {
        if self.beta_ramp == 0 {
            return self.beta_end;
        }
        let t = iteration.min(self.beta_ramp) as f64 / self.beta_ramp as f64;
        self.beta_start + (self.beta_end - self.beta_start) * t
    }

    pub fn weights(&self, beta: f64) -> ObjectiveWeights {
        ObjectiveWeights {
            alpha: self.alpha,
            beta,
            gamma: self.gamma,
        }
    }

    fn lbfgs(&self, max_iters: usize) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.lbfgs_memory,
            max_iters,
            grad_tol: self.grad_tol,
            ..LbfgsConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BoundaryFixed,
    Repair,
    Free,
    PostRepair,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::BoundaryFixed => "boundary-fixed",
            Stage::Repair => "repair",
            Stage::Free => "free",
            Stage::PostRepair => "post-repair",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    ObjDecrease,
    MaxIters,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("map sizes do not match the meshes")]
    SizeMismatch,
    #[error("non-finite {term} in stage {stage}, iteration {iteration}")]
    NonFinite {
        stage: Stage,
        iteration: usize,
        term: &'static str,
    },
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// One outer iteration: energies at fixed `beta` before the iteration, after
/// the P-step and after the X-step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub stage: Stage,
    pub iteration: usize,
    pub beta: f64,
    pub before: EnergyBreakdown,
    pub after_p: EnergyBreakdown,
    pub after_x: EnergyBreakdown,
    pub rows_changed: [usize; 2],
    pub lbfgs_iters: usize,
    pub lbfgs_status: LbfgsStatus,
    pub grad_norm: f64,
    pub n_inv: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// Index of the stage's first entry in the history.
    pub first_iteration: usize,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    pub repair: Option<[RepairOutcome; 2]>,
    pub energy_before: EnergyBreakdown,
    pub energy_after: EnergyBreakdown,
    pub n_inv_after: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub energy: &'static str,
    pub config: SolverConfig,
    pub stages: Vec<StageRecord>,
    pub history: Vec<IterationRecord>,
    pub final_beta: f64,
    pub final_energy: EnergyBreakdown,
    pub metrics: [MapMetrics; 2],
    /// Kept out of the serialized report so that reports are reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    /// The report with the roles of the two meshes exchanged.
    pub fn swapped(&self) -> SolveReport {
        let mut r = self.clone();
        for h in &mut r.history {
            h.rows_changed.swap(0, 1);
            h.n_inv.swap(0, 1);
        }
        for s in &mut r.stages {
            s.n_inv_after.swap(0, 1);
            if let Some(rep) = &mut s.repair {
                rep.swap(0, 1);
            }
        }
        r.metrics.swap(0, 1);
        r
    }

    /// Largest increase of the total energy across any half-step, relative
    /// to the energy before it. Non-positive when every half-step descends.
    pub fn worst_half_step_increase(&self) -> f64 {
        self.history
            .iter()
            .flat_map(|h| {
                [
                    (h.after_p.total - h.before.total) / h.before.total.abs().max(1e-300),
                    (h.after_x.total - h.after_p.total) / h.after_p.total.abs().max(1e-300),
                ]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn flatten(x: [&[Vec3]; 2]) -> Vec<f64> {
    x.iter().flat_map(|s| s.iter().flat_map(|v| [v.x, v.y, v.z])).collect()
}

fn unflatten(flat: &[f64], n1: usize) -> [Vec<Vec3>; 2] {
    let to = |s: &[f64]| s.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect::<Vec<_>>();
    [to(&flat[..3 * n1]), to(&flat[3 * n1..])]
}

#[derive(Debug, Clone)]
pub struct XStepOutcome {
    pub iters: usize,
    pub status: LbfgsStatus,
}

/// Minimizes the objective over `X12` and `X21` jointly with `P` held
/// fixed. Boundary projections are recomputed at every evaluation. The
/// objective does not increase.
pub fn x_step(obj: &Objective, pair: &mut MapPair, w: &ObjectiveWeights, cfg: &LbfgsConfig) -> Result<XStepOutcome, ObjectiveError> {
    let p = [&pair.p12, &pair.p21];
    let n1 = pair.x12.len();
    let blocks = [3 * n1, 3 * pair.x21.len()];
    let start = obj.evaluate(p, [&pair.x12, &pair.x21], w)?;
    let result = lbfgs_minimize(
        |flat| {
            let [a, b] = unflatten(flat, n1);
            let e = obj.evaluate(p, [&a, &b], w).ok()?;
            Some((e.breakdown.total, flatten([&e.grad[0], &e.grad[1]])))
        },
        flatten([&pair.x12, &pair.x21]),
        cfg,
        &blocks,
    );
    if result.status == LbfgsStatus::NonFiniteStart {
        return Err(ObjectiveError::NonFinite { term: "total" });
    }
    if result.f <= start.breakdown.total {
        let [a, b] = unflatten(&result.x, n1);
        pair.x12 = a;
        pair.x21 = b;
    }
    Ok(XStepOutcome {
        iters: result.iters,
        status: result.status,
    })
}

/// Row-wise projection update of both maps. Returns changed row counts.
pub fn p_step(m1: &TetMesh, m2: &TetMesh, pair: &mut MapPair, alpha: f64, beta: f64, mode: [&(dyn Fn(usize) -> RowMode + Sync); 2]) -> [usize; 2] {
    let a = p_step_direction(m1, m2, &mut pair.p12, &pair.x12, &pair.x21, alpha, beta, mode[0]);
    let b = p_step_direction(m2, m1, &mut pair.p21, &pair.x21, &pair.x12, alpha, beta, mode[1]);
    [a, b]
}

fn gradient_norm(grad: &[Vec<Vec3>; 2]) -> f64 {
    let part = |g: &[Vec3]| g.iter().map(|v| v.norm_squared()).sum::<f64>();
    (part(&grad[0]) + part(&grad[1])).sqrt()
}

struct Run<'a> {
    obj: Objective<'a>,
    cfg: SolverConfig,
    pair: MapPair,
    history: Vec<IterationRecord>,
    stages: Vec<StageRecord>,
    beta: f64,
}

impl<'a> Run<'a> {
    fn meshes(&self) -> [&'a TetMesh; 2] {
        self.obj.meshes
    }

    fn energy(&self, stage: Stage, iteration: usize) -> Result<EnergyBreakdown, SolveError> {
        let w = self.cfg.weights(self.beta);
        self.obj
            .energy([&self.pair.p12, &self.pair.p21], [&self.pair.x12, &self.pair.x21], &w)
            .map_err(|e| context(e, stage, iteration))
    }

    fn inversions(&self) -> [usize; 2] {
        let [m1, m2] = self.meshes();
        [count_inversions(m1, &self.pair.x12).len(), count_inversions(m2, &self.pair.x21).len()]
    }

    fn alternate(&mut self, stage: Stage) -> Result<(), SolveError> {
        let [m1, m2] = self.meshes();
        let first = self.history.len();
        self.beta = self.cfg.beta(0);
        let energy_before = self.energy(stage, 0)?;
        let hard = self.cfg.hard_boundary;
        let mode = |m: &TetMesh, v: usize| match (stage, m.is_boundary_vertex(v)) {
            (Stage::BoundaryFixed, true) => RowMode::Frozen,
            (_, true) if hard => RowMode::Boundary,
            _ => RowMode::Volume,
        };
        let mode1 = |v: usize| mode(m1, v);
        let mode2 = |v: usize| mode(m2, v);
        let lbfgs = self.cfg.lbfgs(self.cfg.lbfgs_max_iters);
        let mut stop = StopReason::MaxIters;
        for t in 0..self.cfg.max_outer_iters {
            self.beta = self.cfg.beta(t);
            let w = self.cfg.weights(self.beta);
            let before = self.energy(stage, t)?;
            let rows_changed = p_step(m1, m2, &mut self.pair, self.cfg.alpha, self.beta, [&mode1, &mode2]);
            let after_p = self.energy(stage, t)?;
            let xs = x_step(&self.obj, &mut self.pair, &w, &lbfgs).map_err(|e| context(e, stage, t))?;
            let eval = self
                .obj
                .evaluate([&self.pair.p12, &self.pair.p21], [&self.pair.x12, &self.pair.x21], &w)
                .map_err(|e| context(e, stage, t))?;
            let grad_norm = gradient_norm(&eval.grad);
            let after_x = eval.breakdown;
            self.history.push(IterationRecord {
                stage,
                iteration: t,
                beta: self.beta,
                before,
                after_p,
                after_x,
                rows_changed,
                lbfgs_iters: xs.iters,
                lbfgs_status: xs.status,
                grad_norm,
                n_inv: self.inversions(),
            });
            if t < self.cfg.beta_ramp {
                continue;
            }
            if grad_norm < self.cfg.grad_tol && rows_changed == [0, 0] {
                stop = StopReason::GradTol;
                break;
            }
            if before.total - after_x.total < self.cfg.obj_decrease_tol {
                stop = StopReason::ObjDecrease;
                break;
            }
        }
        let energy_after = self.energy(stage, self.history.len() - first)?;
        self.stages.push(StageRecord {
            stage,
            first_iteration: first,
            iterations: self.history.len() - first,
            stop: Some(stop),
            repair: None,
            energy_before,
            energy_after,
            n_inv_after: self.inversions(),
        });
        Ok(())
    }

    fn repair(&mut self, stage: Stage, scope: RepairScope, max_iters: usize) -> Result<(), SolveError> {
        let [m1, m2] = self.meshes();
        let energy_before = self.energy(stage, 0)?;
        let cfg = self.cfg.lbfgs(max_iters);
        let energy = self.obj.energy;
        let a = repair_inverted(m1, &mut self.pair.x12, energy, scope, &cfg);
        let b = repair_inverted(m2, &mut self.pair.x21, energy, scope, &cfg);
        let energy_after = self.energy(stage, 0)?;
        self.stages.push(StageRecord {
            stage,
            first_iteration: self.history.len(),
            iterations: 0,
            stop: None,
            repair: Some([a, b]),
            energy_before,
            energy_after,
            n_inv_after: self.inversions(),
        });
        Ok(())
    }
}

fn context(e: ObjectiveError, stage: Stage, iteration: usize) -> SolveError {
    match e {
        ObjectiveError::NonFinite { term } => SolveError::NonFinite { stage, iteration, term },
        ObjectiveError::BadWeights(w) => SolveError::BadConfig(format!("{w:?}")),
    }
}

/// Runs every enabled stage from `init`. Meshes are expected to have unit
/// volume; other volumes only rescale the objective terms.
pub fn solve(m1: &TetMesh, m2: &TetMesh, init: MapPair, config: &SolverConfig, energy: Energy) -> Result<(MapPair, SolveReport), SolveError> {
    let clock = std::time::Instant::now();
    config.validate()?;
    let sizes_ok = init.p12.len() == m1.num_vertices()
        && init.x12.len() == m1.num_vertices()
        && init.p21.len() == m2.num_vertices()
        && init.x21.len() == m2.num_vertices()
        && init.p12.is_valid_for(m2)
        && init.p21.is_valid_for(m1);
    if !sizes_ok {
        return Err(SolveError::SizeMismatch);
    }
    let mut run = Run {
        obj: Objective::new(m1, m2, energy),
        cfg: *config,
        pair: init,
        history: Vec::new(),
        stages: Vec::new(),
        beta: config.beta(0),
    };
    let st = config.stages;
    if st.boundary_fixed {
        run.alternate(Stage::BoundaryFixed)?;
    }
    if st.repair {
        run.repair(Stage::Repair, RepairScope::OneRing, config.lbfgs_max_iters)?;
    }
    if st.free {
        run.alternate(Stage::Free)?;
    }
    if st.post_repair {
        run.repair(Stage::PostRepair, RepairScope::InvertedOnly, config.repair_lbfgs_steps)?;
    }
    let final_energy = run.energy(Stage::PostRepair, 0)?;
    let metrics = [
        map_metrics(m1, m2, &run.pair.x12, final_energy.e_arap, final_energy.e_r)?,
        map_metrics(m2, m1, &run.pair.x21, final_energy.e_arap, final_energy.e_r)?,
    ];
    let report = SolveReport {
        energy: energy.name(),
        config: *config,
        stages: run.stages,
        history: run.history,
        final_beta: run.beta,
        final_energy,
        metrics,
        wall_time: clock.elapsed(),
    };
    Ok((run.pair, report))
}

#[cfg(test)]
mod tests;
