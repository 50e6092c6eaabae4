//! Active-beamforming subproblem for a fixed RIS configuration: assemble
//! the per-UE quadratic forms, linearize the concave-in-convex parts at the
//! current anchor, and run the inner SCA loop on top of the QCQP solver.
//!
//! All quadratic data is built over the stacked beam vector
//! `x = [w_1; ...; w_M]` of complex dimension `M * N_t`, then real-embedded
//! for the solver. Objectives and constraints are normalized to O(1) before
//! solving: with physical pathloss the raw forms are ~1e-18 per entry and
//! would be invisible to absolute solver tolerances.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::cplx::{complex_from_embedding, real_embed_vec, CMat, CVec, QuadraticForm, RealQuad, C64};
use crate::qcqp::{self, ConvexQcqp, SolverCfg};
use crate::system::{effective_matrix, Beamformer, PowerConfig, RisPhase};
use crate::transforms::qos_budget;
use crate::{Error, Result};

/// How the UL interference budget enters the subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UlConstraintMode {
    /// Anchor-linearized cross terms; the diagonal blocks stay quadratic.
    Sca,
    /// The exact budget `||S_w sum_m w_m||^2 <= xi_U`, which is already
    /// convex in the stacked beams.
    Direct,
}

/// Fixed data of one BS subproblem instance.
#[derive(Debug, Clone)]
pub struct BsSubproblemData {
    /// Effective DL rows `sqrt(p_D) (D_m + D_{2,m} Theta* D_1)`, `1 x N_t`.
    pub d_w: Vec<CMat>,
    /// Signal quadratics `(1 + r_m) d_w^H d_w` (PSD).
    pub omega: Vec<CMat>,
    /// Unweighted quadratics `d_w^H d_w` entering the `-t_m` penalty.
    pub q: Vec<CMat>,
    /// Effective SI matrix `sqrt(p_D) (S + U_2 Theta* D_1)`.
    pub s_w: CMat,
    /// UL budget quadratic `s_w^H s_w` (PSD).
    pub omega_u: CMat,
    /// Noise-plus-CCI constants `D_{C,m}(Theta*) + sigma^2`.
    pub n: Vec<f64>,
    /// UL interference budget; `f64::INFINITY` disables the constraint.
    pub xi_u: f64,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    pub p_max: f64,
    pub n_t: usize,
    pub m_users: usize,
    /// Starting anchor for the SCA loop.
    pub anchor: Beamformer,
}

/// Flattens the beams column by column into one complex vector.
pub fn stack_beams(w: &Beamformer) -> CVec {
    let (n_t, m) = (w.w.nrows(), w.w.ncols());
    CVec::from_fn(n_t * m, |i, _| w.w[(i % n_t, i / n_t)])
}

pub fn unstack_beams(x: &CVec, n_t: usize, m: usize) -> Beamformer {
    Beamformer::new(CMat::from_fn(n_t, m, |i, j| x[j * n_t + i]))
}

/// Assembles the subproblem data at a fixed RIS configuration.
/// `t_bar <= 0` or `N = 0` disables the UL constraint.
pub fn build_bs_data(
    ris: &RisPhase,
    ch: &ChannelSet,
    r: &[f64],
    t: &[f64],
    power: &PowerConfig,
    t_bar: f64,
    anchor: Beamformer,
) -> Result<BsSubproblemData> {
    let m_users = ch.sizes.m;
    if r.len() != m_users || t.len() != m_users {
        return Err(Error::DimensionMismatch(format!(
            "build_bs_data: {m_users} DL UEs but r has {} and t has {} entries",
            r.len(),
            t.len()
        )));
    }
    let sqrt_pd = C64::new(power.p_d.sqrt(), 0.0);
    let mut d_w = Vec::with_capacity(m_users);
    let mut omega = Vec::with_capacity(m_users);
    let mut q = Vec::with_capacity(m_users);
    let mut n = Vec::with_capacity(m_users);
    for m in 0..m_users {
        let d_row = CMat::from_fn(1, ch.sizes.n_t, |_, j| ch.d[(m, j)]);
        let d2_row = CMat::from_fn(1, ch.sizes.k, |_, j| ch.d2[(m, j)]);
        let eff = effective_matrix(&d_row, &d2_row, &ch.d1, ris) * sqrt_pd;
        let gram = eff.adjoint() * &eff;
        omega.push(&gram * C64::new(1.0 + r[m], 0.0));
        q.push(gram);
        let v_row = CMat::from_fn(1, ch.sizes.n, |_, j| ch.v[(m, j)]);
        let cci = effective_matrix(&v_row, &d2_row, &ch.u1, ris);
        n.push(power.p_u * cci.norm_squared() + power.sigma2);
        d_w.push(eff);
    }
    let s_w = effective_matrix(&ch.s, &ch.u2, &ch.d1, ris) * sqrt_pd;
    let omega_u = s_w.adjoint() * &s_w;
    let xi_u = if ch.sizes.n == 0 || t_bar <= 0.0 {
        f64::INFINITY
    } else {
        let xi = qos_budget(ris, ch, power, t_bar)?;
        if xi < 0.0 {
            return Err(Error::Infeasible(format!(
                "UL QoS unattainable at this RIS configuration: xi_U = {xi:e}"
            )));
        }
        xi
    };
    Ok(BsSubproblemData {
        d_w,
        omega,
        q,
        s_w,
        omega_u,
        n,
        xi_u,
        r: r.to_vec(),
        t: t.to_vec(),
        p_max: power.p_max,
        n_t: ch.sizes.n_t,
        m_users,
        anchor,
    })
}

impl BsSubproblemData {
    fn dim(&self) -> usize {
        self.n_t * self.m_users
    }

    /// Exact subproblem objective
    /// `sum_m (1+r_m)||d_w,m w_m||^2 - t_m (sum_m' ||d_w,m w_m'||^2 + n_m)`.
    pub fn exact_objective(&self, w: &Beamformer) -> f64 {
        let mut total = 0.0;
        for m in 0..self.m_users {
            let wm = w.beam(m);
            let signal = (wm.adjoint() * &self.omega[m] * &wm)[(0, 0)].re;
            let mut denom = self.n[m];
            for mp in 0..self.m_users {
                let wmp = w.beam(mp);
                denom += (wmp.adjoint() * &self.q[m] * &wmp)[(0, 0)].re;
            }
            total += signal - self.t[m] * denom;
        }
        total
    }

    /// Exact UL interference `||s_w sum_m w_m||^2`.
    pub fn exact_ul(&self, w: &Beamformer) -> f64 {
        (&self.s_w * w.beam_sum()).norm_squared()
    }

    /// Rough magnitude of the objective over the power ball, used to
    /// normalize solver tolerances and convergence thresholds.
    pub fn objective_scale(&self) -> f64 {
        let mut s = 0.0;
        for m in 0..self.m_users {
            s += self.omega[m].norm() * self.p_max;
            s += self.t[m] * (self.q[m].norm() * self.p_max * self.m_users as f64 + self.n[m]);
        }
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// Concave surrogate of the exact objective at `anchor`: the PSD signal
/// quadratics are minorized by their tangents, the `-t_m` penalty stays
/// quadratic (NSD).
pub fn sca_bs_objective(data: &BsSubproblemData, anchor: &Beamformer) -> Result<QuadraticForm> {
    let (n_t, mu, dim) = (data.n_t, data.m_users, data.dim());
    // Penalty matrix shared by every diagonal block.
    let mut p = CMat::zeros(n_t, n_t);
    for m in 0..mu {
        p += &data.q[m] * C64::new(data.t[m], 0.0);
    }
    let mut a = CMat::zeros(dim, dim);
    let mut b = CVec::zeros(dim);
    let mut c = 0.0;
    for m in 0..mu {
        a.view_mut((m * n_t, m * n_t), (n_t, n_t)).copy_from(&(-&p));
        let wp = anchor.beam(m);
        let grad = &data.omega[m] * &wp;
        for i in 0..n_t {
            b[m * n_t + i] = grad[i];
        }
        c -= (wp.adjoint() * &data.omega[m] * &wp)[(0, 0)].re;
        c -= data.t[m] * data.n[m];
    }
    QuadraticForm::new(a, b, c)
}

/// UL budget constraint as a `<= 0` quadratic over the stacked beams.
/// `Sca` keeps the diagonal blocks quadratic and anchors the cross terms;
/// `Direct` is the exact convex form. Returns `None` when no UL constraint
/// is active.
pub fn sca_ul_constraint(
    data: &BsSubproblemData,
    anchor: &Beamformer,
    mode: UlConstraintMode,
) -> Result<Option<QuadraticForm>> {
    if !data.xi_u.is_finite() {
        return Ok(None);
    }
    let (n_t, mu, dim) = (data.n_t, data.m_users, data.dim());
    let form = match mode {
        UlConstraintMode::Direct => {
            let mut a = CMat::zeros(dim, dim);
            for m in 0..mu {
                for mp in 0..mu {
                    a.view_mut((m * n_t, mp * n_t), (n_t, n_t))
                        .copy_from(&data.omega_u);
                }
            }
            QuadraticForm::new(a, CVec::zeros(dim), -data.xi_u)?
        }
        UlConstraintMode::Sca => {
            let mut a = CMat::zeros(dim, dim);
            let mut b = CVec::zeros(dim);
            let mut c = -data.xi_u;
            for m in 0..mu {
                a.view_mut((m * n_t, m * n_t), (n_t, n_t))
                    .copy_from(&data.omega_u);
            }
            for m in 0..mu {
                for mp in (m + 1)..mu {
                    let lin = &data.omega_u * anchor.beam(m);
                    for i in 0..n_t {
                        b[mp * n_t + i] += 2.0 * lin[i];
                    }
                    c -= 2.0
                        * (anchor.beam(m).adjoint() * &data.omega_u * anchor.beam(mp))[(0, 0)].re;
                }
            }
            QuadraticForm::new(a, b, c)?
        }
    };
    Ok(Some(form))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BsLoopCfg {
    pub max_iters: usize,
    /// Convergence threshold on the normalized exact-objective change.
    pub rho_w: f64,
    pub mode: UlConstraintMode,
    pub solver: SolverCfg,
}

impl Default for BsLoopCfg {
    fn default() -> Self {
        Self {
            max_iters: 30,
            rho_w: 0.01,
            // The exact convex rewrite dominates the linearized one in
            // practice: no bisection fallback, larger feasible steps.
            mode: UlConstraintMode::Direct,
            solver: SolverCfg::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BsSolveReport {
    /// Exact objective after each SCA iteration (unnormalized).
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn exact_feasible(data: &BsSubproblemData, w: &Beamformer, tol: f64) -> bool {
    if w.total_power() > data.p_max * (1.0 + tol) {
        return false;
    }
    if data.xi_u.is_finite() {
        let slack = data.exact_ul(w) - data.xi_u;
        let scale = data
            .xi_u
            .abs()
            .max(1e-9 * data.omega_u.norm() * data.p_max)
            .max(1e-300);
        if slack > tol * scale {
            return false;
        }
    }
    true
}

fn project_power(data: &BsSubproblemData, w: &Beamformer) -> Beamformer {
    let p = w.total_power();
    if p > data.p_max {
        Beamformer::new(&w.w * C64::new((data.p_max / p).sqrt() * (1.0 - 1e-12), 0.0))
    } else {
        w.clone()
    }
}

/// Inner SCA loop. The anchor in `data` must be feasible for the exact
/// constraints (the orchestrator guarantees this); returns the historical
/// best iterate by exact objective among exactly feasible ones.
pub fn solve_bs(data: &BsSubproblemData, cfg: &BsLoopCfg) -> Result<(Beamformer, BsSolveReport)> {
    let scale = data.objective_scale();
    let mut anchor = project_power(data, &data.anchor);
    if !exact_feasible(data, &anchor, 1e-6) {
        // Shrinking the beams only helps: the UL interference falls
        // quadratically with the common scale.
        if data.xi_u.is_finite() {
            let ui = data.exact_ul(&anchor);
            if ui > data.xi_u {
                let alpha = (data.xi_u / ui).sqrt() * (1.0 - 1e-9);
                anchor = Beamformer::new(&anchor.w * C64::new(alpha, 0.0));
            }
        }
        if !exact_feasible(data, &anchor, 1e-6) {
            return Err(Error::Infeasible(
                "solve_bs: could not construct a feasible starting beamformer".into(),
            ));
        }
    }
    let mut best = anchor.clone();
    let mut best_val = data.exact_objective(&anchor);
    let mut prev_val = best_val;
    let mut history = vec![];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut objective = sca_bs_objective(data, &anchor)?.real_embed();
        objective.scale(scale);
        let mut constraints = vec![RealQuad {
            a: nalgebra::DMatrix::identity(2 * data.dim(), 2 * data.dim()),
            b: nalgebra::DVector::zeros(2 * data.dim()),
            c: -data.p_max,
        }];
        if let Some(ul) = sca_ul_constraint(data, &anchor, cfg.mode)? {
            let mut ul = ul.real_embed();
            let s = ul.a.norm().mul_add(data.p_max, ul.c.abs()).max(1e-300);
            ul.scale(s);
            constraints.push(ul);
        }
        let problem = ConvexQcqp {
            objective,
            constraints,
        };
        let hint = real_embed_vec(&stack_beams(&anchor)) * (1.0 - 1e-9);
        let Ok(x0) = qcqp::find_feasible(&problem, Some(&hint), &cfg.solver) else {
            break;
        };
        let Ok(sol) = qcqp::solve(&problem, &x0, &cfg.solver) else {
            break;
        };
        let mut cand = project_power(
            data,
            &unstack_beams(&complex_from_embedding(&sol.x), data.n_t, data.m_users),
        );
        // The surrogate constraint is a tangent, not a bound; fall back
        // toward the (feasible) anchor until the exact budget holds.
        let mut halvings = 0;
        while !exact_feasible(data, &cand, 1e-9) && halvings < 60 {
            cand = Beamformer::new((&cand.w + &anchor.w) * C64::new(0.5, 0.0));
            halvings += 1;
        }
        if halvings == 60 {
            cand = anchor.clone();
        }
        let val = data.exact_objective(&cand);
        history.push(val);
        if val > best_val {
            best_val = val;
            best = cand.clone();
        }
        let denom = history
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(scale * 1e-12)
            .max(1e-300);
        if (val - prev_val).abs() / denom <= cfg.rho_w {
            converged = true;
            break;
        }
        prev_val = val;
        anchor = cand;
    }
    Ok((
        best,
        BsSolveReport {
            objective_history: history,
            iterations,
            converged,
        },
    ))
}
