//! Passive-phase subproblem for fixed beams: every received power is affine
//! in `u = e^{j theta}` through the cascade decomposition, so the objective
//! and the UL QoS constraint become differences of PSD quadratics in `u`.
//! The convex parts are linearized at the anchor (SCA) and the unit-modulus
//! equality is split into a convex ball plus a linearized outer bound with
//! nonnegative slacks, driven to zero by an increasing penalty (PCCP).
//!
//! Layout of the real solver variable: `z = [Re u; Im u; a; b]` of dimension
//! `4K`, where `a` and `b` are the modulus slacks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::cplx::{complex_from_embedding, CMat, CVec, QuadraticForm, RealQuad, C64};
use crate::qcqp::{self, ConvexQcqp, SolverCfg};
use crate::system::{cascade_affine, AffineThetaMap, Beamformer, PowerConfig, RisPhase};
use crate::{Error, Result};

/// Quadratic coefficients of the phase subproblem. For each DL UE `m` the
/// objective term is `u^H Omega_m u - u^H Psi_m u + 2 Re{zeta_m^H u} + c_m`;
/// the UL constraint is the same shape with the `_u` coefficients and a
/// `>= 0` convention.
#[derive(Debug, Clone)]
pub struct ThetaQuadratics {
    pub omega: Vec<CMat>,
    pub psi: Vec<CMat>,
    pub zeta: Vec<CVec>,
    pub c: Vec<f64>,
    pub omega_u: CMat,
    pub psi_u: CMat,
    pub zeta_u: CVec,
    pub c_u: f64,
    pub has_ul: bool,
    pub k: usize,
    pub beta: f64,
}

fn row_mat(m: &CMat, i: usize) -> CMat {
    CMat::from_fn(1, m.ncols(), |_, j| m[(i, j)])
}

fn gram(g: &CMat) -> CMat {
    g.adjoint() * g
}

/// Builds the coefficients at fixed beams `w`. `t_bar <= 0` or `N = 0`
/// disables the UL constraint.
pub fn build_theta_quadratics(
    w: &Beamformer,
    ch: &ChannelSet,
    r: &[f64],
    t: &[f64],
    power: &PowerConfig,
    t_bar: f64,
    beta: f64,
) -> Result<ThetaQuadratics> {
    let (k, m_users, n_ul) = (ch.sizes.k, ch.sizes.m, ch.sizes.n);
    if r.len() != m_users || t.len() != m_users {
        return Err(Error::DimensionMismatch(format!(
            "build_theta_quadratics: {m_users} DL UEs but r has {} and t has {} entries",
            r.len(),
            t.len()
        )));
    }
    let mut omega = Vec::with_capacity(m_users);
    let mut psi = Vec::with_capacity(m_users);
    let mut zeta = Vec::with_capacity(m_users);
    let mut c = Vec::with_capacity(m_users);
    for m in 0..m_users {
        let d_row = row_mat(&ch.d, m);
        let d2_row = row_mat(&ch.d2, m);
        // Per-beam effective signals at UE m, scaled by sqrt(p_D).
        let maps: Vec<AffineThetaMap> = (0..m_users)
            .map(|mp| {
                cascade_affine(&d_row, &d2_row, &ch.d1, &w.beam(mp), beta)
                    .map(|map| map.scaled(power.p_d.sqrt()))
            })
            .collect::<Result<_>>()?;
        // CCI signal vector (one entry per UL UE), scaled by sqrt(p_U).
        let v_col = CMat::from_fn(n_ul, 1, |i, _| ch.v[(m, i)]);
        let one = CVec::from_element(1, C64::new(1.0, 0.0));
        let cci = cascade_affine(&v_col, &ch.u1.transpose(), &d2_row.transpose(), &one, beta)?
            .scaled(power.p_u.sqrt());
        let sig = &maps[m];
        omega.push(gram(&sig.gain) * C64::new(1.0 + r[m], 0.0));
        let mut psi_m = gram(&cci.gain);
        let mut zeta_int = cci.gain.adjoint() * &cci.base;
        let mut c_int = cci.base.norm_squared() + power.sigma2;
        for map in &maps {
            psi_m += gram(&map.gain);
            zeta_int += map.gain.adjoint() * &map.base;
            c_int += map.base.norm_squared();
        }
        psi.push(psi_m * C64::new(t[m], 0.0));
        zeta.push(
            sig.gain.adjoint() * &sig.base * C64::new(1.0 + r[m], 0.0)
                - zeta_int * C64::new(t[m], 0.0),
        );
        c.push((1.0 + r[m]) * sig.base.norm_squared() - t[m] * c_int);
    }
    let has_ul = n_ul > 0 && t_bar > 0.0;
    let (omega_u, psi_u, zeta_u, c_u) = if has_ul {
        let ones = CVec::from_element(n_ul, C64::new(1.0, 0.0));
        let s_map = cascade_affine(&ch.u, &ch.u2, &ch.u1, &ones, beta)?.scaled(power.p_u.sqrt());
        let i_map =
            cascade_affine(&ch.s, &ch.u2, &ch.d1, &w.beam_sum(), beta)?.scaled(power.p_d.sqrt());
        (
            gram(&s_map.gain),
            gram(&i_map.gain) * C64::new(t_bar, 0.0),
            s_map.gain.adjoint() * &s_map.base
                - i_map.gain.adjoint() * &i_map.base * C64::new(t_bar, 0.0),
            s_map.base.norm_squared() - t_bar * (i_map.base.norm_squared() + power.sigma2_u),
        )
    } else {
        (CMat::zeros(k, k), CMat::zeros(k, k), CVec::zeros(k), 0.0)
    };
    Ok(ThetaQuadratics {
        omega,
        psi,
        zeta,
        c,
        omega_u,
        psi_u,
        zeta_u,
        c_u,
        has_ul,
        k,
        beta,
    })
}

fn quad_re(a: &CMat, u: &CVec) -> f64 {
    (u.adjoint() * a * u)[(0, 0)].re
}

impl ThetaQuadratics {
    /// Exact subproblem objective at `u` (physically meaningful on
    /// `|u_k| = 1`; the quadratic extends it off the circle).
    pub fn exact_objective(&self, u: &CVec) -> f64 {
        let mut total = 0.0;
        for m in 0..self.omega.len() {
            total += quad_re(&self.omega[m], u) - quad_re(&self.psi[m], u)
                + 2.0 * (self.zeta[m].adjoint() * u)[(0, 0)].re
                + self.c[m];
        }
        total
    }

    /// Exact UL constraint value `U_S - t_bar (U_I + sigma_U^2)` (feasible
    /// when `>= 0`); `+inf` when the constraint is disabled.
    pub fn exact_ul_value(&self, u: &CVec) -> f64 {
        if !self.has_ul {
            return f64::INFINITY;
        }
        quad_re(&self.omega_u, u) - quad_re(&self.psi_u, u)
            + 2.0 * (self.zeta_u.adjoint() * u)[(0, 0)].re
            + self.c_u
    }

    /// Rough objective magnitude over the `|u_k| = 1` torus.
    pub fn objective_scale(&self) -> f64 {
        let kf = self.k as f64;
        let mut s = 0.0;
        for m in 0..self.omega.len() {
            s += (self.omega[m].norm() + self.psi[m].norm()) * kf
                + 2.0 * self.zeta[m].norm() * kf.sqrt()
                + self.c[m].abs();
        }
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    fn ul_scale(&self) -> f64 {
        let kf = self.k as f64;
        let s = (self.omega_u.norm() + self.psi_u.norm()) * kf
            + 2.0 * self.zeta_u.norm() * kf.sqrt()
            + self.c_u.abs();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// Anchor-linearized surrogates: the concave objective surrogate and,
/// when the UL constraint is enabled, its `<= 0` convex form
/// `u^H Psi_U u - 2 Re{zeta_bar^H u} - c_bar`.
pub fn sca_theta_surrogates(
    tq: &ThetaQuadratics,
    anchor: &CVec,
) -> Result<(QuadraticForm, Option<QuadraticForm>)> {
    let k = tq.k;
    let mut a = CMat::zeros(k, k);
    let mut b = CVec::zeros(k);
    let mut c = 0.0;
    for m in 0..tq.omega.len() {
        a -= &tq.psi[m];
        b += &tq.zeta[m] + &tq.omega[m] * anchor;
        c += tq.c[m] - quad_re(&tq.omega[m], anchor);
    }
    let objective = QuadraticForm::new(a, b, c)?;
    let ul = if tq.has_ul {
        let b_u = &tq.zeta_u + &tq.omega_u * anchor;
        let c_u = tq.c_u - quad_re(&tq.omega_u, anchor);
        Some(QuadraticForm::new(tq.psi_u.clone(), -b_u, -c_u)?)
    } else {
        None
    };
    Ok((objective, ul))
}

/// PCCP penalty state for one inner iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PccpState {
    pub lambda: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn pad_embed(q: &QuadraticForm, total: usize) -> RealQuad {
    let e = q.real_embed();
    let d = e.dim();
    let mut a = DMatrix::zeros(total, total);
    a.view_mut((0, 0), (d, d)).copy_from(&e.a);
    let mut b = DVector::zeros(total);
    b.rows_mut(0, d).copy_from(&e.b);
    RealQuad { a, b, c: e.c }
}

/// One convex PCCP subproblem at `anchor` with penalty `lambda` (applied in
/// normalized objective units). Returns the next phase vector, the slacks,
/// and the penalized normalized objective value.
pub fn pccp_step(
    tq: &ThetaQuadratics,
    anchor: &CVec,
    lambda: f64,
    cfg: &SolverCfg,
) -> Result<(CVec, Vec<f64>, Vec<f64>, f64)> {
    let k = tq.k;
    let total = 4 * k;
    let scale = tq.objective_scale();
    let (obj_c, ul_c) = sca_theta_surrogates(tq, anchor)?;
    let mut objective = pad_embed(&obj_c, total);
    objective.scale(scale);
    for i in 0..k {
        objective.b[2 * k + i] -= lambda / 2.0;
        objective.b[3 * k + i] -= lambda / 2.0;
    }
    let mut constraints = Vec::with_capacity(4 * k + 1);
    if let Some(ul) = ul_c {
        let mut ul = pad_embed(&ul, total);
        ul.scale(tq.ul_scale());
        constraints.push(ul);
    }
    for i in 0..k {
        // |u_i|^2 - a_i - 1 <= 0.
        let mut ball = RealQuad::zeros(total);
        ball.a[(i, i)] = 1.0;
        ball.a[(k + i, k + i)] = 1.0;
        ball.b[2 * k + i] = -0.5;
        ball.c = -1.0;
        constraints.push(ball);
        // 1 - b_i - Re{conj(anchor_i) u_i} <= 0.
        let mut outer = RealQuad::zeros(total);
        outer.b[i] = -0.5 * anchor[i].re;
        outer.b[k + i] = -0.5 * anchor[i].im;
        outer.b[3 * k + i] = -0.5;
        outer.c = 1.0;
        constraints.push(outer);
        // a_i >= 0 and b_i >= 0.
        let mut a_pos = RealQuad::zeros(total);
        a_pos.b[2 * k + i] = -0.5;
        constraints.push(a_pos);
        let mut b_pos = RealQuad::zeros(total);
        b_pos.b[3 * k + i] = -0.5;
        constraints.push(b_pos);
    }
    let problem = ConvexQcqp {
        objective,
        constraints,
    };
    // Strictly feasible start: slightly shrunken anchor with open slacks.
    let mut z0 = DVector::zeros(total);
    for i in 0..k {
        z0[i] = anchor[i].re * (1.0 - 1e-3);
        z0[k + i] = anchor[i].im * (1.0 - 1e-3);
        z0[2 * k + i] = 0.5;
        z0[3 * k + i] = 0.5;
    }
    let x0 = qcqp::find_feasible(&problem, Some(&z0), cfg)?;
    let sol = qcqp::solve(&problem, &x0, cfg)?;
    let u = complex_from_embedding(&sol.x.rows(0, 2 * k).into_owned());
    let a: Vec<f64> = (0..k).map(|i| sol.x[2 * k + i]).collect();
    let b: Vec<f64> = (0..k).map(|i| sol.x[3 * k + i]).collect();
    Ok((u, a, b, sol.objective_value))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RisLoopCfg {
    pub kappa: f64,
    pub lambda0: f64,
    pub lambda_max: f64,
    /// Convergence threshold on the normalized objective change.
    pub rho_theta: f64,
    pub max_iters: usize,
    pub solver: SolverCfg,
}

impl Default for RisLoopCfg {
    fn default() -> Self {
        Self {
            kappa: 3.0,
            lambda0: 1.0,
            lambda_max: 1e4,
            rho_theta: 0.01,
            max_iters: 30,
            solver: SolverCfg {
                // The phase program is normalized to O(1); a 1e-6 duality
                // gap is far below the 1e-2 loop threshold and roughly
                // halves the barrier stages at large K.
                tol: 1e-6,
                ..SolverCfg::default()
            },
        }
    }
}

impl RisLoopCfg {
    pub fn validate(&self) -> Result<()> {
        if self.kappa < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "penalty growth kappa must be >= 1, got {}",
                self.kappa
            )));
        }
        if !(self.lambda0 >= 0.0 && self.lambda_max >= self.lambda0) {
            return Err(Error::InvalidConfig(
                "require 0 <= lambda0 <= lambda_max".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RisSolveReport {
    /// Exact (unpenalized, unnormalized) objective after each PCCP iterate.
    pub objective_history: Vec<f64>,
    pub slack_sums: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// True when no iterate survived the exact UL re-check and the initial
    /// phases were returned unchanged.
    pub fell_back: bool,
    /// Pre-projection entry moduli of the final iterate.
    pub final_moduli: Vec<f64>,
}

/// PCCP loop with the capped geometric penalty schedule, finishing with a
/// projection to exact unit modulus and an exact UL QoS re-check. Returns
/// the best exactly feasible projected iterate (the initial phases count as
/// a candidate, so the result never regresses below a feasible start).
pub fn solve_ris(
    tq: &ThetaQuadratics,
    init: &RisPhase,
    cfg: &RisLoopCfg,
) -> Result<(RisPhase, RisSolveReport)> {
    cfg.validate()?;
    let k = tq.k;
    if init.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "solve_ris: quadratics built for K = {k}, init has {}",
            init.len()
        )));
    }
    let empty_report = |fell_back| RisSolveReport {
        objective_history: vec![],
        slack_sums: vec![],
        lambda_trace: vec![],
        iterations: 0,
        converged: false,
        fell_back,
        final_moduli: vec![],
    };
    if k == 0 {
        return Ok((init.clone(), empty_report(false)));
    }
    let scale = tq.objective_scale();
    let ul_tol = 1e-9 * tq.ul_scale();
    let feasible = |u: &CVec| tq.exact_ul_value(u) >= -ul_tol;
    let mut anchor = init.unit_vector();
    let mut best: Option<(CVec, f64)> = None;
    let consider = |u: &CVec, best: &mut Option<(CVec, f64)>| {
        if feasible(u) {
            let val = tq.exact_objective(u);
            if best.as_ref().map_or(true, |(_, v)| val > *v) {
                *best = Some((u.clone(), val));
            }
        }
    };
    consider(&anchor, &mut best);
    let mut report = empty_report(false);
    let mut lambda = cfg.lambda0;
    let mut prev_val = tq.exact_objective(&anchor);
    for _ in 0..cfg.max_iters {
        lambda = (cfg.kappa * lambda).min(cfg.lambda_max);
        let Ok((u, a, b, _)) = pccp_step(tq, &anchor, lambda, &cfg.solver) else {
            break;
        };
        report.iterations += 1;
        report.lambda_trace.push(lambda);
        report.slack_sums.push(a.iter().sum::<f64>() + b.iter().sum::<f64>());
        report.final_moduli = u.iter().map(|z| z.norm()).collect();
        let projected = CVec::from_fn(k, |i, _| {
            let z = u[i];
            if z.norm() > 0.0 {
                z / C64::new(z.norm(), 0.0)
            } else {
                anchor[i]
            }
        });
        consider(&projected, &mut best);
        let val = tq.exact_objective(&u);
        report.objective_history.push(val);
        if (val - prev_val).abs() / scale.max(1e-300) <= cfg.rho_theta
            && report.slack_sums.last().copied().unwrap_or(1.0) <= 1e-4 * k as f64
        {
            report.converged = true;
            break;
        }
        prev_val = val;
        // Re-anchor on the projected phases so the outer-bound
        // linearization stays consistent with unit-modulus anchors.
        anchor = projected;
    }
    match best {
        Some((u, _)) => Ok((RisPhase::from_unit_vector(&u, init.beta), report)),
        None => {
            report.fell_back = true;
            Ok((init.clone(), report))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_drop, RicianParams, ScenarioGeometry, Sizes};
    use crate::system::ul_terms;
    use crate::transforms::{dinkelbach_objective, dinkelbach_t, optimal_r};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BETA: f64 = 0.9;

    fn test_drop(seed: u64) -> ChannelSet {
        let sizes = Sizes { n_t: 4, n_r: 4, k: 5, m: 3, n: 2 };
        generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            seed,
        )
        .unwrap()
    }

    fn random_beams(rng: &mut impl Rng, n_t: usize, m: usize, power: f64) -> Beamformer {
        let w = CMat::from_fn(n_t, m, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let scale = (power / w.norm_squared()).sqrt();
        Beamformer::new(w * C64::new(scale, 0.0))
    }

    fn random_angles(rng: &mut impl Rng, k: usize) -> Vec<f64> {
        (0..k).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect()
    }

    fn build(seed: u64, rng: &mut impl Rng, t_bar: f64) -> (ThetaQuadratics, ChannelSet, Beamformer, PowerConfig, Vec<f64>, Vec<f64>) {
        let ch = test_drop(seed);
        let power = PowerConfig::default();
        let w = random_beams(rng, 4, 3, power.p_max);
        let ris0 = RisPhase::new(random_angles(rng, 5), BETA);
        let r = optimal_r(&w, &ris0, &ch, &power);
        let t = dinkelbach_t(&w, &ris0, &r, &ch, &power);
        let tq = build_theta_quadratics(&w, &ch, &r, &t, &power, t_bar, BETA).unwrap();
        (tq, ch, w, power, r, t)
    }

    #[test]
    fn quadratics_match_direct_objective_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..10 {
            let (tq, ch, w, power, r, t) = build(seed, &mut rng, 0.1);
            for _ in 0..10 {
                let ris = RisPhase::new(random_angles(&mut rng, 5), BETA);
                let u = ris.unit_vector();
                let direct = dinkelbach_objective(&w, &ris, &r, &t, &ch, &power);
                let quad = tq.exact_objective(&u);
                assert_relative_eq!(quad, direct, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn quadratics_match_direct_ul_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t_bar = 0.1;
        for seed in 0..10 {
            let (tq, ch, w, power, _, _) = build(100 + seed, &mut rng, t_bar);
            for _ in 0..10 {
                let ris = RisPhase::new(random_angles(&mut rng, 5), BETA);
                let u = ris.unit_vector();
                let (u_s, u_i) = ul_terms(&w, &ris, &ch, &power);
                let direct = u_s - t_bar * (u_i + power.sigma2_u);
                assert_relative_eq!(tq.exact_ul_value(&u), direct, max_relative = 1e-9, epsilon = 1e-18);
            }
        }
    }

    #[test]
    fn scalar_instance_checked_by_hand() {
        // K = 1, one DL UE, no UL: signal (d + d2*beta*u*d1)*w with all
        // channel scalars 1, w = 1, r = t = 0 gives |1 + beta*u|^2.
        let sizes = Sizes { n_t: 1, n_r: 1, k: 1, m: 1, n: 0 };
        let mut ch = generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            3,
        )
        .unwrap();
        let one = C64::new(1.0, 0.0);
        ch.d.fill(one);
        ch.d1.fill(one);
        ch.d2.fill(one);
        let power = PowerConfig {
            p_d: 1.0,
            ..PowerConfig::default()
        };
        let w = Beamformer::new(CMat::from_element(1, 1, one));
        let tq = build_theta_quadratics(&w, &ch, &[0.0], &[0.0], &power, 0.0, BETA).unwrap();
        for phase in [0.0, 1.0, 2.5] {
            let u = CVec::from_element(1, C64::from_polar(1.0, phase));
            let expected = (one + C64::from_polar(BETA, phase)).norm_sqr();
            assert_relative_eq!(tq.exact_objective(&u), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn surrogates_are_tangent_minorants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..10 {
            let (tq, _, _, _, _, _) = build(200 + seed, &mut rng, 0.1);
            let anchor = RisPhase::new(random_angles(&mut rng, 5), BETA).unit_vector();
            let (obj, ul) = sca_theta_surrogates(&tq, &anchor).unwrap();
            let ul = ul.unwrap();
            let scale = tq.objective_scale();
            let ul_scale = tq.ul_scale();
            assert!(
                (obj.eval(&anchor).unwrap() - tq.exact_objective(&anchor)).abs() <= 1e-10 * scale
            );
            // UL surrogate is in <= 0 convention: value = -(surrogate of the
            // >= 0 form), so exact >= -value with tangency at the anchor.
            assert!(
                (-ul.eval(&anchor).unwrap() - tq.exact_ul_value(&anchor)).abs()
                    <= 1e-10 * ul_scale
            );
            for _ in 0..100 {
                let u = RisPhase::new(random_angles(&mut rng, 5), BETA).unit_vector();
                assert!(obj.eval(&u).unwrap() <= tq.exact_objective(&u) + 1e-10 * scale);
                assert!(-ul.eval(&u).unwrap() <= tq.exact_ul_value(&u) + 1e-10 * ul_scale);
            }
        }
    }

    #[test]
    fn zero_omega_keeps_concave_part_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut tq, _, _, _, _, _) = build(300, &mut rng, 0.0);
        for om in &mut tq.omega {
            om.fill(C64::new(0.0, 0.0));
        }
        let anchor = RisPhase::new(random_angles(&mut rng, 5), BETA).unit_vector();
        let (obj, _) = sca_theta_surrogates(&tq, &anchor).unwrap();
        for _ in 0..20 {
            let u = RisPhase::new(random_angles(&mut rng, 5), BETA).unit_vector();
            assert_relative_eq!(
                obj.eval(&u).unwrap(),
                tq.exact_objective(&u),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn pccp_large_penalty_returns_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (tq, _, _, _, _, _) = build(400, &mut rng, 0.0);
        let anchor = RisPhase::new(random_angles(&mut rng, 5), BETA).unit_vector();
        let (u, a, b, _) = pccp_step(&tq, &anchor, 1e10, &SolverCfg::default()).unwrap();
        assert!((u - &anchor).norm() <= 1e-3);
        assert!(a.iter().all(|&x| x <= 1e-5));
        assert!(b.iter().all(|&x| x <= 1e-5));
    }

    /// Penalty-method gradient-ascent oracle for the same convex program.
    fn penalty_gradient_oracle(problem: &ConvexQcqp, z0: &DVector<f64>) -> f64 {
        let mut z = z0.clone();
        let mut rho = 1.0;
        for _ in 0..60 {
            for _ in 0..4000 {
                let mut g = problem.objective.grad(&z);
                for q in &problem.constraints {
                    let v = q.eval(&z);
                    if v > 0.0 {
                        g -= q.grad(&z) * (2.0 * rho * v);
                    }
                }
                let step = 1e-2 / (1.0 + rho);
                z += g * step;
            }
            rho *= 2.0;
        }
        problem.objective.eval(&z)
    }

    #[test]
    fn pccp_step_matches_penalty_gradient_oracle() {
        // K = 2 instance, solved both by the interior-point path and by an
        // independent penalty-method ascent on the same convex program.
        let sizes = Sizes { n_t: 2, n_r: 2, k: 2, m: 1, n: 1 };
        let ch = generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            7,
        )
        .unwrap();
        let power = PowerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_beams(&mut rng, 2, 1, power.p_max);
        let ris0 = RisPhase::new(random_angles(&mut rng, 2), BETA);
        let r = optimal_r(&w, &ris0, &ch, &power);
        let t = dinkelbach_t(&w, &ris0, &r, &ch, &power);
        let tq = build_theta_quadratics(&w, &ch, &r, &t, &power, 0.0, BETA).unwrap();
        let anchor = ris0.unit_vector();
        let lambda = 1.0;
        let (_, _, _, achieved) = pccp_step(&tq, &anchor, lambda, &SolverCfg::default()).unwrap();

        // Rebuild the identical real program for the oracle.
        let k = tq.k;
        let total = 4 * k;
        let scale = tq.objective_scale();
        let (obj_c, _) = sca_theta_surrogates(&tq, &anchor).unwrap();
        let mut objective = pad_embed(&obj_c, total);
        objective.scale(scale);
        for i in 0..k {
            objective.b[2 * k + i] -= lambda / 2.0;
            objective.b[3 * k + i] -= lambda / 2.0;
        }
        let mut constraints = vec![];
        for i in 0..k {
            let mut ball = RealQuad::zeros(total);
            ball.a[(i, i)] = 1.0;
            ball.a[(k + i, k + i)] = 1.0;
            ball.b[2 * k + i] = -0.5;
            ball.c = -1.0;
            constraints.push(ball);
            let mut outer = RealQuad::zeros(total);
            outer.b[i] = -0.5 * anchor[i].re;
            outer.b[k + i] = -0.5 * anchor[i].im;
            outer.b[3 * k + i] = -0.5;
            outer.c = 1.0;
            constraints.push(outer);
            let mut a_pos = RealQuad::zeros(total);
            a_pos.b[2 * k + i] = -0.5;
            constraints.push(a_pos);
            let mut b_pos = RealQuad::zeros(total);
            b_pos.b[3 * k + i] = -0.5;
            constraints.push(b_pos);
        }
        let problem = ConvexQcqp { objective, constraints };
        let mut z0 = DVector::zeros(total);
        for i in 0..k {
            z0[i] = anchor[i].re * 0.9;
            z0[k + i] = anchor[i].im * 0.9;
            z0[2 * k + i] = 0.5;
            z0[3 * k + i] = 0.5;
        }
        let oracle = penalty_gradient_oracle(&problem, &z0);
        let denom = achieved.abs().max(oracle.abs()).max(1.0);
        assert!(
            (achieved - oracle).abs() / denom <= 1e-3,
            "achieved {achieved}, oracle {oracle}"
        );
        assert!(achieved >= oracle - 1e-4 * denom);
    }

    #[test]
    fn lambda_schedule_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (tq, _, _, _, _, _) = build(500, &mut rng, 0.0);
        let init = RisPhase::new(random_angles(&mut rng, 5), BETA);
        let cfg = RisLoopCfg {
            lambda_max: 10.0,
            rho_theta: 0.0,
            max_iters: 5,
            ..RisLoopCfg::default()
        };
        let (_, report) = solve_ris(&tq, &init, &cfg).unwrap();
        assert_eq!(report.lambda_trace.len(), 5);
        assert_eq!(report.lambda_trace, vec![3.0, 9.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn kappa_below_one_rejected() {
        let cfg = RisLoopCfg {
            kappa: 0.5,
            ..RisLoopCfg::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn projection_to_unit_modulus() {
        let u = CVec::from_element(1, C64::from_polar(0.9, 0.7));
        let ris = RisPhase::from_unit_vector(&u, BETA);
        assert_relative_eq!(ris.theta[0], 0.7, epsilon = 1e-12);
        assert_relative_eq!(ris.unit_vector()[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_ris_improves_or_holds_and_keeps_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut checked = 0;
        for seed in 0..8 {
            // Low-power beams: at full power the residual self-interference
            // dominates the UL budget and no random start is feasible.
            let ch = test_drop(600 + seed);
            let power = PowerConfig::default();
            let w = random_beams(&mut rng, 4, 3, 1e-6);
            let ris0 = RisPhase::new(random_angles(&mut rng, 5), BETA);
            let r = optimal_r(&w, &ris0, &ch, &power);
            let t = dinkelbach_t(&w, &ris0, &r, &ch, &power);
            let tq = build_theta_quadratics(&w, &ch, &r, &t, &power, 0.1, BETA).unwrap();
            let init = RisPhase::new(random_angles(&mut rng, 5), BETA);
            let u0 = init.unit_vector();
            if tq.exact_ul_value(&u0) < 0.0 {
                continue;
            }
            checked += 1;
            let (out, report) = solve_ris(&tq, &init, &RisLoopCfg::default()).unwrap();
            assert!(!report.fell_back);
            let scale = tq.objective_scale();
            let u_out = out.unit_vector();
            for z in u_out.iter() {
                assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
            }
            assert!(
                tq.exact_objective(&u_out) >= tq.exact_objective(&u0) - 0.02 * scale,
                "regression at seed {seed}"
            );
            assert!(tq.exact_ul_value(&u_out) >= -1e-9 * tq.ul_scale());
            if report.converged {
                for &m in &report.final_moduli {
                    assert!((0.95..=1.05).contains(&m), "modulus {m}");
                }
            }
        }
        assert!(checked >= 3, "too few UL-feasible starts: {checked}");
    }
}
