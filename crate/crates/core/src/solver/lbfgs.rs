//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Inner products are taken blockwise: each block is summed sequentially and
//! the block sums are added in order. With two blocks the result is the same
//! whichever block comes first, which keeps a two-mesh solve symmetric under
//! exchanging the meshes.

use std::collections::VecDeque;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 200,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStatus {
    GradTol,
    StepTol,
    MaxIters,
    /// No step satisfying sufficient decrease was found.
    LineSearchFailed,
    /// The objective was not finite at the start point.
    NonFiniteStart,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iters: usize,
    pub status: LbfgsStatus,
}

/// Blockwise dot product; `blocks` lists the block lengths.
pub fn block_dot(a: &[f64], b: &[f64], blocks: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut start = 0;
    for &len in blocks {
        let mut s = 0.0;
        for i in start..start + len {
            s += a[i] * b[i];
        }
        total += s;
        start += len;
    }
    debug_assert_eq!(start, a.len());
    total
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

/// Minimizes `f` from `x0`. The callback returns `None` when the objective is
/// not finite; the line search then shrinks the step.
pub fn lbfgs_minimize<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig, blocks: &[usize]) -> LbfgsResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let dot = |a: &[f64], b: &[f64]| block_dot(a, b, blocks);
    let Some((mut fx, mut g)) = f(&x0).filter(|(v, g)| v.is_finite() && g.iter().all(|c| c.is_finite())) else {
        return LbfgsResult {
            grad: vec![f64::NAN; x0.len()],
            x: x0,
            f: f64::NAN,
            grad_norm: f64::NAN,
            iters: 0,
            status: LbfgsStatus::NonFiniteStart,
        };
    };
    let mut x = x0;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut status = LbfgsStatus::MaxIters;
    let mut iters = 0;
    while iters < cfg.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < cfg.grad_tol {
            status = LbfgsStatus::GradTol;
            break;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            axpy(&mut d, -a, y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            axpy(&mut d, a - b, s);
        }
        let mut dg = dot(&d, &g);
        if !(dg < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            dg = -gnorm * gnorm;
        }
        let alpha0 = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let Some(p) = line_search(&mut f, &x, fx, dg, &d, alpha0, cfg, blocks) else {
            status = LbfgsStatus::LineSearchFailed;
            break;
        };
        iters += 1;
        let s: Vec<f64> = d.iter().map(|v| v * p.alpha).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        axpy(&mut x, 1.0, &s);
        let decrease = fx - p.f;
        fx = p.f;
        g = p.g;
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s.clone(), y, 1.0 / sy));
        }
        let snorm = dot(&s, &s).sqrt();
        let xnorm = dot(&x, &x).sqrt();
        if snorm <= 1e-15 * (1.0 + xnorm) || decrease <= 1e-16 * fx.abs().max(1e-300) {
            status = if dot(&g, &g).sqrt() < cfg.grad_tol { LbfgsStatus::GradTol } else { LbfgsStatus::StepTol };
            break;
        }
    }
    let grad_norm = dot(&g, &g).sqrt();
    if status == LbfgsStatus::MaxIters && grad_norm < cfg.grad_tol {
        status = LbfgsStatus::GradTol;
    }
    LbfgsResult { x, f: fx, grad: g, grad_norm, iters, status }
}

fn eval<F>(f: &mut F, x: &[f64], d: &[f64], alpha: f64, blocks: &[usize]) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut xt = x.to_vec();
    axpy(&mut xt, alpha, d);
    let (fv, g) = f(&xt)?;
    if !fv.is_finite() || !g.iter().all(|c| c.is_finite()) {
        return None;
    }
    let dg = block_dot(&g, d, blocks);
    Some(Point { alpha, f: fv, g, dg })
}

/// Strong Wolfe line search (bracketing then zoom). Returns an accepted point
/// with sufficient decrease, or `None`.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(f: &mut F, x: &[f64], f0: f64, dg0: f64, d: &[f64], alpha0: f64, cfg: &LbfgsConfig, blocks: &[usize]) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let armijo = |p: &Point| p.f <= f0 + cfg.c1 * p.alpha * dg0;
    let curvature = |p: &Point| p.dg.abs() <= -cfg.c2 * dg0;
    let mut prev = Point { alpha: 0.0, f: f0, g: Vec::new(), dg: dg0 };
    let mut alpha = alpha0;
    let mut best: Option<Point> = None;
    let mut evals = 0;
    let keep = |best: &mut Option<Point>, p: Point| {
        if armijo(&p) && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(p);
        }
    };
    loop {
        if evals >= cfg.max_line_search {
            return best;
        }
        evals += 1;
        let Some(p) = eval(f, x, d, alpha, blocks) else {
            // non-finite: backtrack towards the last good step
            alpha = prev.alpha + 0.1 * (alpha - prev.alpha);
            continue;
        };
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) {
            let hi = p;
            return zoom(f, x, f0, dg0, d, prev, hi, cfg, blocks, evals, best);
        }
        if curvature(&p) {
            return Some(p);
        }
        if p.dg >= 0.0 {
            let lo = p;
            return zoom(f, x, f0, dg0, d, lo, prev, cfg, blocks, evals, best);
        }
        alpha = p.alpha * 2.0;
        keep(&mut best, Point { alpha: p.alpha, f: p.f, g: p.g.clone(), dg: p.dg });
        prev = p;
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    dg0: f64,
    d: &[f64],
    mut lo: Point,
    mut hi: Point,
    cfg: &LbfgsConfig,
    blocks: &[usize],
    mut evals: usize,
    mut best: Option<Point>,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let armijo = |p: &Point| p.f <= f0 + cfg.c1 * p.alpha * dg0;
    while evals < cfg.max_line_search {
        evals += 1;
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let mut alpha = interpolate(&lo, &hi);
        let margin = 0.1 * (b - a);
        if !(alpha > a + margin && alpha < b - margin) {
            alpha = 0.5 * (a + b);
        }
        if (b - a) <= 1e-16 * b.max(1e-300) {
            break;
        }
        let Some(p) = eval(f, x, d, alpha, blocks) else {
            hi = Point { alpha, f: f64::INFINITY, g: Vec::new(), dg: f64::NAN };
            continue;
        };
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
            continue;
        }
        if p.dg.abs() <= -cfg.c2 * dg0 {
            return Some(p);
        }
        if p.dg * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        if best.as_ref().is_none_or(|bp| p.f < bp.f) {
            best = Some(Point { alpha: p.alpha, f: p.f, g: p.g.clone(), dg: p.dg });
        }
        lo = p;
    }
    if lo.alpha > 0.0 && armijo(&lo) && best.as_ref().is_none_or(|bp| lo.f < bp.f) {
        return Some(lo);
    }
    best
}

/// Minimizer of the cubic (or quadratic) through the bracket ends.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a0, a1) = (lo.alpha, hi.alpha);
    if !hi.f.is_finite() {
        return 0.5 * (a0 + a1);
    }
    if hi.dg.is_finite() {
        let d1 = lo.dg + hi.dg - 3.0 * (lo.f - hi.f) / (a0 - a1);
        let disc = d1 * d1 - lo.dg * hi.dg;
        if disc >= 0.0 {
            let d2 = (a1 - a0).signum() * disc.sqrt();
            let t = a1 - (a1 - a0) * (hi.dg + d2 - d1) / (hi.dg - lo.dg + 2.0 * d2);
            if t.is_finite() {
                return t;
            }
        }
    }
    let h = a1 - a0;
    let denom = 2.0 * (hi.f - lo.f - lo.dg * h);
    if denom > 0.0 {
        a0 - lo.dg * h * h / denom
    } else {
        0.5 * (a0 + a1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn convex_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let scale: Vec<f64> = (0..20).map(|_| rng.gen_range(0.5..5.0)).collect();
        let x0: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cfg = LbfgsConfig { grad_tol: 1e-10, ..Default::default() };
        let r = lbfgs_minimize(
            |x| {
                let f = x.iter().zip(&a).zip(&scale).map(|((x, a), s)| 0.5 * s * (x - a).powi(2)).sum();
                Some((f, x.iter().zip(&a).zip(&scale).map(|((x, a), s)| s * (x - a)).collect()))
            },
            x0,
            &cfg,
            &[12, 8],
        );
        assert_eq!(r.status, LbfgsStatus::GradTol);
        assert!(r.x.iter().zip(&a).all(|(x, a)| (x - a).abs() < 1e-8));
    }

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        Some((f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let cfg = LbfgsConfig { grad_tol: 1e-10, ..Default::default() };
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &cfg, &[2]);
        assert!(r.f < 1e-8, "{r:?}");
    }

    #[test]
    fn accepted_values_are_monotone() {
        let mut seen = Vec::new();
        let cfg = LbfgsConfig::default();
        let r = lbfgs_minimize(
            |x| {
                let v = rosenbrock(x);
                seen.push(v.as_ref().unwrap().0);
                v
            },
            vec![-1.2, 1.0],
            &cfg,
            &[2],
        );
        assert!(r.f <= seen[0]);
        assert!(r.iters > 0);
    }

    #[test]
    fn zero_gradient_start_returns_immediately() {
        let mut calls = 0;
        let r = lbfgs_minimize(
            |x| {
                calls += 1;
                Some((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()))
            },
            vec![0.0; 4],
            &LbfgsConfig::default(),
            &[4],
        );
        assert_eq!(r.status, LbfgsStatus::GradTol);
        assert_eq!(r.iters, 0);
        assert_eq!(calls, 1);
    }

    #[test]
    fn non_finite_region_is_backtracked() {
        // -log barrier: infinite for x <= 0, minimum at x = 1
        let cfg = LbfgsConfig { grad_tol: 1e-9, ..Default::default() };
        let r = lbfgs_minimize(
            |x| if x[0] <= 0.0 { None } else { Some((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]])) },
            vec![20.0],
            &cfg,
            &[1],
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6, "{r:?}");
        let r = lbfgs_minimize(|_| None, vec![1.0], &cfg, &[1]);
        assert_eq!(r.status, LbfgsStatus::NonFiniteStart);
    }

    #[test]
    fn block_dot_is_block_order_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let swap = |v: &[f64]| [&v[12..], &v[..12]].concat();
        assert_eq!(block_dot(&a, &b, &[12, 18]), block_dot(&swap(&a), &swap(&b), &[18, 12]));
    }
}
