//! Log-barrier interior-point solver for convex QCQPs over real variables:
//! maximize a concave quadratic subject to convex quadratic inequality
//! constraints `q_i(x) <= 0`.
//!
//! Complex subproblems reach this solver through the real embedding in
//! [`crate::cplx`]. Newton inner steps use backtracking line search; the
//! outer loop grows the barrier parameter by a fixed factor until the
//! duality-gap estimate `m / t` drops below the requested tolerance.

use nalgebra::{DMatrix, DVector};

use crate::cplx::RealQuad;
use crate::{Error, Result};

/// A maximize-concave-quadratic problem with convex quadratic constraints.
///
/// `objective.a` must be negative semidefinite and every `constraints[i].a`
/// positive semidefinite; the solver trusts the caller on this (the
/// subproblem builders construct them from Gram matrices).
#[derive(Debug, Clone)]
pub struct ConvexQcqp {
    pub objective: RealQuad,
    pub constraints: Vec<RealQuad>,
}

impl ConvexQcqp {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|q| q.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QcqpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub duals: Vec<f64>,
    pub kkt_residual: f64,
    pub status: QcqpStatus,
    /// Objective value at the end of each outer barrier stage.
    pub outer_objectives: Vec<f64>,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SolverCfg {
    /// Duality-gap tolerance terminating the barrier loop.
    pub tol: f64,
    /// Absolute tolerance on constraint values for feasibility checks.
    pub feasibility_tol: f64,
    /// Initial barrier parameter.
    pub t0: f64,
    /// Barrier growth factor per outer stage.
    pub mu: f64,
    /// Newton decrement threshold for the inner loop.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Armijo slope fraction.
    pub ls_alpha: f64,
    /// Backtracking shrink factor.
    pub ls_beta: f64,
}

impl Default for SolverCfg {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            feasibility_tol: 1e-8,
            t0: 1.0,
            mu: 10.0,
            newton_tol: 1e-12,
            max_newton: 60,
            ls_alpha: 0.3,
            ls_beta: 0.8,
        }
    }
}

/// Stationarity plus complementary-slackness residual at `(x, duals)`.
pub fn kkt_residual(p: &ConvexQcqp, x: &DVector<f64>, duals: &[f64]) -> f64 {
    let mut grad = p.objective.grad(x);
    for (q, &mu) in p.constraints.iter().zip(duals) {
        grad -= q.grad(x) * mu;
    }
    let comp: f64 = p
        .constraints
        .iter()
        .zip(duals)
        .map(|(q, &mu)| (mu * q.eval(x)).abs())
        .sum();
    grad.norm() + comp
}

struct BarrierState {
    x: DVector<f64>,
    t: f64,
    duals: Vec<f64>,
    breakdown: bool,
    outer_objectives: Vec<f64>,
}

/// Maximizes `t * objective + sum log(-q_i)` from a strictly feasible start,
/// growing `t` until the gap estimate is below `tol`. `early_stop` may end
/// the loop after any centering stage (used by phase-1).
fn barrier_loop(
    p: &ConvexQcqp,
    x0: DVector<f64>,
    cfg: &SolverCfg,
    mut early_stop: Option<&mut dyn FnMut(&DVector<f64>) -> bool>,
) -> Result<BarrierState> {
    let m = p.constraints.len();
    let mut x = x0;
    if p.max_violation(&x) >= 0.0 && m > 0 {
        return Err(Error::Infeasible(
            "barrier start point is not strictly feasible".into(),
        ));
    }
    let mut t = cfg.t0;
    let mut breakdown = false;
    let mut outer_objectives = Vec::new();
    let max_outer = 64;

    // Symmetrized quadratic matrices, hoisted out of the Newton loop.
    let obj_sym = &p.objective.a + p.objective.a.transpose();
    let cons_sym: Vec<DMatrix<f64>> = p
        .constraints
        .iter()
        .map(|q| &q.a + q.a.transpose())
        .collect();

    for _outer in 0..max_outer {
        // Newton centering at fixed t.
        for _ in 0..cfg.max_newton {
            let slacks: Vec<f64> = p.constraints.iter().map(|q| -q.eval(&x)).collect();
            let n = x.len();
            let mut grad = (&obj_sym * &x + 2.0 * &p.objective.b) * t;
            let mut hess = &obj_sym * (-t);
            for ((q, sym), &s) in p.constraints.iter().zip(&cons_sym).zip(&slacks) {
                let gq = sym * &x + 2.0 * &q.b;
                grad -= &gq / s;
                hess += sym / s;
                hess += &gq * gq.transpose() / (s * s);
            }
            // hess is the NEGATED Hessian of the barrier objective (PSD).
            let mut reg = 0.0;
            let dir = loop {
                let mut h = hess.clone();
                if reg > 0.0 {
                    for i in 0..n {
                        h[(i, i)] += reg;
                    }
                }
                match h.cholesky() {
                    Some(ch) => break Some(ch.solve(&grad)),
                    None => {
                        if reg == 0.0 {
                            reg = 1e-10 * hess.trace().abs().max(1e-30);
                        } else if reg < 1e-2 * hess.trace().abs().max(1e-30) {
                            reg *= 1e4;
                        } else {
                            breakdown = true;
                            break None;
                        }
                    }
                }
            };
            let Some(dir) = dir else { break };
            let decrement = grad.dot(&dir);
            if decrement <= 2.0 * cfg.newton_tol {
                break;
            }
            // Backtracking: stay strictly feasible, then Armijo on the
            // barrier objective. Every function here is quadratic, so its
            // restriction to the search ray is a scalar quadratic; computing
            // those coefficients once makes each trial step O(m) scalars
            // instead of m dense evaluations.
            let ray = |q: &RealQuad, sym: &DMatrix<f64>| -> (f64, f64, f64) {
                let sym_dir = sym * &dir;
                (
                    q.eval(&x),
                    sym_dir.dot(&x) + 2.0 * q.b.dot(&dir),
                    0.5 * sym_dir.dot(&dir),
                )
            };
            let obj_ray = ray(&p.objective, &obj_sym);
            let cons_ray: Vec<(f64, f64, f64)> = p
                .constraints
                .iter()
                .zip(&cons_sym)
                .map(|(q, sym)| ray(q, sym))
                .collect();
            let psi = |alpha: f64| -> Option<f64> {
                let at = |(c0, c1, c2): (f64, f64, f64)| c0 + alpha * (c1 + alpha * c2);
                let mut v = t * at(obj_ray);
                for &coeffs in &cons_ray {
                    let s = -at(coeffs);
                    if s <= 0.0 {
                        return None;
                    }
                    v += s.ln();
                }
                Some(v)
            };
            let psi_x = psi(0.0).expect("current iterate must be feasible");
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..120 {
                if let Some(v) = psi(step) {
                    if v >= psi_x + cfg.ls_alpha * step * decrement {
                        x += &dir * step;
                        accepted = true;
                        break;
                    }
                }
                step *= cfg.ls_beta;
            }
            if !accepted {
                break;
            }
        }
        outer_objectives.push(p.objective.eval(&x));
        if let Some(cb) = early_stop.as_deref_mut() {
            if cb(&x) {
                break;
            }
        }
        if m == 0 || (m as f64) / t <= cfg.tol {
            break;
        }
        t *= cfg.mu;
    }

    let duals: Vec<f64> = p
        .constraints
        .iter()
        .map(|q| {
            let s = -q.eval(&x);
            if s > 0.0 {
                1.0 / (t * s)
            } else {
                0.0
            }
        })
        .collect();
    Ok(BarrierState {
        x,
        t,
        duals,
        breakdown,
        outer_objectives,
    })
}

/// Solves the QCQP from a strictly feasible start point.
pub fn solve(p: &ConvexQcqp, x0: &DVector<f64>, cfg: &SolverCfg) -> Result<QcqpSolution> {
    if x0.len() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "solve: problem dim {}, start dim {}",
            p.dim(),
            x0.len()
        )));
    }
    let state = barrier_loop(p, x0.clone(), cfg, None)?;
    let m = p.constraints.len();
    let gap = if m == 0 { 0.0 } else { m as f64 / state.t };
    let status = if state.breakdown || gap > cfg.tol {
        QcqpStatus::MaxIter
    } else {
        QcqpStatus::Optimal
    };
    let duals = refine_duals(p, &state.x, &state.duals);
    let kkt = kkt_residual(p, &state.x, &duals);
    let state = BarrierState { duals, ..state };
    Ok(QcqpSolution {
        objective_value: p.objective.eval(&state.x),
        x: state.x,
        duals: state.duals,
        kkt_residual: kkt,
        status,
        outer_objectives: state.outer_objectives,
    })
}

/// Least-squares refit of the multipliers on near-active constraints; the
/// raw barrier duals carry an O(gap) stationarity residual.
fn refine_duals(p: &ConvexQcqp, x: &DVector<f64>, duals: &[f64]) -> Vec<f64> {
    let scale = 1.0 + x.norm();
    let active: Vec<usize> = (0..p.constraints.len())
        .filter(|&i| p.constraints[i].eval(x).abs() <= 1e-4 * scale)
        .collect();
    if active.is_empty() {
        return duals.to_vec();
    }
    let n = x.len();
    let mut jac = DMatrix::<f64>::zeros(n, active.len());
    for (col, &i) in active.iter().enumerate() {
        jac.set_column(col, &p.constraints[i].grad(x));
    }
    let target = p.objective.grad(x);
    let Some(fit) = (jac.transpose() * &jac)
        .cholesky()
        .map(|ch| ch.solve(&(jac.transpose() * &target)))
    else {
        return duals.to_vec();
    };
    let mut refined = duals.to_vec();
    for (col, &i) in active.iter().enumerate() {
        refined[i] = fit[col].max(0.0);
    }
    if kkt_residual(p, x, &refined) <= kkt_residual(p, x, duals) {
        refined
    } else {
        duals.to_vec()
    }
}

/// Phase-1: returns a strictly feasible point, or the minimized
/// max-violation value when none exists.
pub fn find_feasible(
    p: &ConvexQcqp,
    hint: Option<&DVector<f64>>,
    cfg: &SolverCfg,
) -> Result<DVector<f64>> {
    let n = p.dim();
    if p.constraints.is_empty() {
        return Ok(hint.cloned().unwrap_or_else(|| DVector::zeros(n)));
    }
    let margin = cfg.feasibility_tol;
    if let Some(h) = hint {
        if p.max_violation(h) < -margin {
            return Ok(h.clone());
        }
    }
    let x_init = hint.cloned().unwrap_or_else(|| DVector::zeros(n));

    // Augmented problem over (x, s): maximize -s  s.t.  q_i(x) - s <= 0.
    let mut objective = RealQuad::zeros(n + 1);
    objective.b[n] = -0.5;
    let constraints: Vec<RealQuad> = p
        .constraints
        .iter()
        .map(|q| {
            let mut a = DMatrix::zeros(n + 1, n + 1);
            a.view_mut((0, 0), (n, n)).copy_from(&q.a);
            let mut b = DVector::zeros(n + 1);
            b.rows_mut(0, n).copy_from(&q.b);
            b[n] = -0.5;
            RealQuad { a, b, c: q.c }
        })
        .collect();
    let aug = ConvexQcqp {
        objective,
        constraints,
    };
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(&x_init);
    z0[n] = p.max_violation(&x_init) + 1.0;

    let mut early = |z: &DVector<f64>| -> bool {
        let x = z.rows(0, n).into_owned();
        p.max_violation(&x) < -margin
    };
    let state = barrier_loop(&aug, z0, cfg, Some(&mut early))?;
    let x = state.x.rows(0, n).into_owned();
    let violation = p.max_violation(&x);
    if violation < 0.0 {
        Ok(x)
    } else {
        Err(Error::Infeasible(format!(
            "phase-1 minimized max constraint violation to {violation:.6e}"
        )))
    }
}
