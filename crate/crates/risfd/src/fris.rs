//! Joint optimizer: the outer loop fixes the fractional-transform
//! auxiliaries from the previous iterate, alternates the BS and RIS
//! subproblem solvers, and tracks the best exactly feasible iterate by its
//! exact DL sum rate. The surrogate objective is anchored to zero at every
//! iterate by construction, so convergence is tested on the exact rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bs::{build_bs_data, solve_bs, BsLoopCfg};
use crate::channel::ChannelSet;
use crate::cplx::C64;
use crate::ris::{build_theta_quadratics, solve_ris, RisLoopCfg};
use crate::system::{
    effective_matrix, rates, ul_terms, Beamformer, PowerConfig, RateReport, RisPhase,
};
use crate::transforms::{dinkelbach_objective, dinkelbach_t, optimal_r, t_bar_from_gamma_db};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrisConfig {
    /// Outer convergence bound on the exact DL sum-rate change (bits).
    pub rho: f64,
    /// Outer iteration cap.
    pub t_max: usize,
    /// UL SINR target in dB; `None` disables the QoS constraint.
    pub gamma_u_db: Option<f64>,
    /// RIS reflection amplitude.
    pub beta: f64,
    pub bs: BsLoopCfg,
    pub ris: RisLoopCfg,
}

impl Default for FrisConfig {
    fn default() -> Self {
        Self {
            rho: 0.01,
            t_max: 20,
            gamma_u_db: Some(5.0),
            beta: 0.9,
            bs: BsLoopCfg::default(),
            ris: RisLoopCfg::default(),
        }
    }
}

impl FrisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || self.t_max == 0 {
            return Err(Error::InvalidConfig(
                "outer loop requires rho > 0 and t_max >= 1".into(),
            ));
        }
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "reflection amplitude must lie in [0, 1], got {}",
                self.beta
            )));
        }
        self.ris.validate()
    }

    pub fn t_bar(&self) -> f64 {
        self.gamma_u_db.map_or(0.0, t_bar_from_gamma_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrisStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// One row of the outer-loop history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterRecord {
    pub dl_sum_rate: f64,
    pub ul_aggregate_rate: f64,
    /// Exact Dinkelbach surrogate at the new iterate under this iteration's
    /// `(r, t)` (zero again once re-anchored).
    pub surrogate_value: f64,
    pub feasible: bool,
    /// Exact rate dropped by more than 10% in this iteration.
    pub collapsed: bool,
    pub bs_iterations: usize,
    pub ris_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrisResult {
    pub w: Beamformer,
    pub theta: RisPhase,
    pub history: Vec<OuterRecord>,
    pub status: FrisStatus,
    pub initial_dl_sum_rate: f64,
    pub best_dl_sum_rate: f64,
    pub final_rates: RateReport,
}

fn exact_qos_ok(
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
    t_bar: f64,
    tol: f64,
) -> bool {
    if w.total_power() > power.p_max * (1.0 + tol) {
        return false;
    }
    if t_bar <= 0.0 || ch.sizes.n == 0 {
        return true;
    }
    let (u_s, u_i) = ul_terms(w, ris, ch, power);
    u_s >= t_bar * (u_i + power.sigma2_u) * (1.0 - tol)
}

/// Starting point: uniform random phases and a matched-filter beamformer at
/// full power, scaled down when the UL budget demands it.
pub fn initialize(
    ch: &ChannelSet,
    power: &PowerConfig,
    cfg: &FrisConfig,
    seed: u64,
) -> Result<(Beamformer, RisPhase)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6672_6973);
    let theta = RisPhase::new(
        (0..ch.sizes.k)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect(),
        cfg.beta,
    );
    let mut w = Beamformer::zeros(ch.sizes.n_t, ch.sizes.m);
    for m in 0..ch.sizes.m {
        let d_row = crate::cplx::CMat::from_fn(1, ch.sizes.n_t, |_, j| ch.d[(m, j)]);
        let d2_row = crate::cplx::CMat::from_fn(1, ch.sizes.k, |_, j| ch.d2[(m, j)]);
        let eff = effective_matrix(&d_row, &d2_row, &ch.d1, &theta);
        w.w.set_column(m, &eff.adjoint().column(0));
    }
    let norm = w.total_power();
    if norm > 0.0 {
        w = Beamformer::new(&w.w * C64::new((power.p_max / norm).sqrt(), 0.0));
    }
    let t_bar = cfg.t_bar();
    if t_bar > 0.0 && ch.sizes.n > 0 {
        let (u_s, u_i) = ul_terms(&w, &theta, ch, power);
        if u_s < t_bar * power.sigma2_u {
            return Err(Error::Infeasible(format!(
                "UL QoS unattainable even with silent BS: U_S = {u_s:e} < t_bar*sigma_U^2 = {:e}",
                t_bar * power.sigma2_u
            )));
        }
        let budget = (u_s - t_bar * power.sigma2_u) / t_bar;
        if u_i > budget && ch.sizes.m >= 2 {
            // Residual SI only sees the beam sum, so null it instead of
            // draining transmit power: subtracting the common mode keeps
            // most of the matched-filter gain at full power.
            let mean = w.beam_sum() / C64::new(ch.sizes.m as f64, 0.0);
            for m in 0..ch.sizes.m {
                let col = w.beam(m) - &mean;
                w.w.set_column(m, &col);
            }
            let norm = w.total_power();
            if norm > 0.0 {
                w = Beamformer::new(&w.w * C64::new((power.p_max / norm).sqrt(), 0.0));
            }
        }
        let (_, u_i) = ul_terms(&w, &theta, ch, power);
        if u_i > budget {
            let alpha = (budget / u_i).sqrt() * (1.0 - 1e-9);
            w = Beamformer::new(&w.w * C64::new(alpha, 0.0));
        }
    }
    Ok((w, theta))
}

/// Full alternating optimization from a seeded starting point.
pub fn run_fris(
    ch: &ChannelSet,
    power: &PowerConfig,
    cfg: &FrisConfig,
    seed: u64,
) -> Result<FrisResult> {
    cfg.validate()?;
    power.validate()?;
    let t_bar = cfg.t_bar();
    let (mut w, mut theta) = initialize(ch, power, cfg, seed)?;
    let initial_dl_sum_rate = rates(&w, &theta, ch, power).dl_sum;
    let mut best = (w.clone(), theta.clone(), initial_dl_sum_rate);
    let mut history: Vec<OuterRecord> = vec![];
    let mut status = FrisStatus::MaxIter;
    let mut prev_rate = initial_dl_sum_rate;
    for _ in 0..cfg.t_max {
        let r = optimal_r(&w, &theta, ch, power);
        let t = dinkelbach_t(&w, &theta, &r, ch, power);
        let Ok(bs_data) = build_bs_data(&theta, ch, &r, &t, power, t_bar, w.clone()) else {
            break;
        };
        let Ok((w_new, bs_report)) = solve_bs(&bs_data, &cfg.bs) else {
            break;
        };
        let (theta_new, ris_report) = if ch.sizes.k > 0 {
            let tq = build_theta_quadratics(&w_new, ch, &r, &t, power, t_bar, cfg.beta)?;
            solve_ris(&tq, &theta, &cfg.ris)?
        } else {
            (
                theta.clone(),
                crate::ris::RisSolveReport {
                    objective_history: vec![],
                    slack_sums: vec![],
                    lambda_trace: vec![],
                    iterations: 0,
                    converged: true,
                    fell_back: false,
                    final_moduli: vec![],
                },
            )
        };
        w = w_new;
        theta = theta_new;
        let report = rates(&w, &theta, ch, power);
        let feasible = exact_qos_ok(&w, &theta, ch, power, t_bar, 1e-6);
        let collapsed = report.dl_sum < 0.9 * prev_rate - 1e-12;
        history.push(OuterRecord {
            dl_sum_rate: report.dl_sum,
            ul_aggregate_rate: report.ul_aggregate_rate,
            surrogate_value: dinkelbach_objective(&w, &theta, &r, &t, ch, power),
            feasible,
            collapsed,
            bs_iterations: bs_report.iterations,
            ris_iterations: ris_report.iterations,
        });
        if feasible && report.dl_sum > best.2 {
            best = (w.clone(), theta.clone(), report.dl_sum);
        }
        if (report.dl_sum - prev_rate).abs() <= cfg.rho {
            status = FrisStatus::Converged;
            break;
        }
        prev_rate = report.dl_sum;
    }
    let (w_best, theta_best, best_rate) = best;
    let final_rates = rates(&w_best, &theta_best, ch, power);
    Ok(FrisResult {
        w: w_best,
        theta: theta_best,
        history,
        status,
        initial_dl_sum_rate,
        best_dl_sum_rate: best_rate,
        final_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_drop, RicianParams, ScenarioGeometry, Sizes};
    use approx::assert_relative_eq;

    fn small_drop(seed: u64) -> ChannelSet {
        let sizes = Sizes { n_t: 4, n_r: 4, k: 5, m: 2, n: 1 };
        generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            seed,
        )
        .unwrap()
    }

    fn fast_cfg() -> FrisConfig {
        FrisConfig {
            t_max: 6,
            bs: BsLoopCfg {
                max_iters: 8,
                ..BsLoopCfg::default()
            },
            ris: RisLoopCfg {
                max_iters: 8,
                ..RisLoopCfg::default()
            },
            ..FrisConfig::default()
        }
    }

    #[test]
    fn initialize_is_deterministic_and_feasible() {
        let ch = small_drop(1);
        let power = PowerConfig::default();
        let cfg = FrisConfig {
            gamma_u_db: Some(-10.0),
            ..fast_cfg()
        };
        let (w1, t1) = initialize(&ch, &power, &cfg, 7).unwrap();
        let (w2, t2) = initialize(&ch, &power, &cfg, 7).unwrap();
        assert_eq!(t1.theta, t2.theta);
        assert!((&w1.w - &w2.w).norm() == 0.0);
        assert!(exact_qos_ok(&w1, &t1, &ch, &power, cfg.t_bar(), 1e-9));
    }

    #[test]
    fn initialize_without_qos_uses_full_power() {
        let ch = small_drop(2);
        let power = PowerConfig::default();
        let cfg = FrisConfig {
            gamma_u_db: None,
            ..fast_cfg()
        };
        let (w, _) = initialize(&ch, &power, &cfg, 3).unwrap();
        assert_relative_eq!(w.total_power(), power.p_max, max_relative = 1e-12);
    }

    #[test]
    fn initialize_detects_unattainable_qos() {
        let mut ch = small_drop(3);
        ch.u.fill(C64::new(0.0, 0.0));
        ch.u2.fill(C64::new(0.0, 0.0));
        let power = PowerConfig::default();
        let cfg = FrisConfig {
            gamma_u_db: Some(10.0),
            ..fast_cfg()
        };
        assert!(matches!(
            initialize(&ch, &power, &cfg, 4),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn zero_channels_converge_immediately_at_rate_zero() {
        let mut ch = small_drop(4);
        for m in [&mut ch.u, &mut ch.u1, &mut ch.u2, &mut ch.d, &mut ch.d1, &mut ch.d2, &mut ch.s, &mut ch.v] {
            m.fill(C64::new(0.0, 0.0));
        }
        let cfg = FrisConfig {
            gamma_u_db: None,
            ..fast_cfg()
        };
        let result = run_fris(&ch, &PowerConfig::default(), &cfg, 5).unwrap();
        assert_eq!(result.status, FrisStatus::Converged);
        assert!(result.history.len() <= 2);
        assert_eq!(result.best_dl_sum_rate, 0.0);
    }

    #[test]
    fn single_user_no_ris_no_ul_reaches_mrt_rate() {
        let sizes = Sizes { n_t: 4, n_r: 4, k: 0, m: 1, n: 0 };
        let ch = generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            6,
        )
        .unwrap();
        let power = PowerConfig::default();
        let cfg = FrisConfig {
            gamma_u_db: None,
            ..FrisConfig::default()
        };
        let result = run_fris(&ch, &power, &cfg, 7).unwrap();
        let d_norm2 = ch.d.norm_squared();
        let mrt_rate = (1.0 + power.p_max * power.p_d * d_norm2 / power.sigma2).log2();
        assert_relative_eq!(result.best_dl_sum_rate, mrt_rate, max_relative = 1e-4);
    }

    #[test]
    fn returned_solution_never_regresses_below_start() {
        for seed in 0..5 {
            let ch = small_drop(100 + seed);
            let power = PowerConfig::default();
            let cfg = FrisConfig {
                gamma_u_db: Some(-10.0),
                ..fast_cfg()
            };
            let result = run_fris(&ch, &power, &cfg, seed).unwrap();
            assert!(
                result.best_dl_sum_rate >= result.initial_dl_sum_rate - 1e-9,
                "regressed at seed {seed}"
            );
            assert!(result.history.len() <= cfg.t_max);
            assert!(result.w.total_power() <= power.p_max * (1.0 + 1e-6));
            assert!(exact_qos_ok(&result.w, &result.theta, &ch, &power, cfg.t_bar(), 1e-6));
            for z in result.theta.unit_vector().iter() {
                assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let ch = small_drop(8);
        let power = PowerConfig::default();
        let cfg = FrisConfig {
            gamma_u_db: Some(-10.0),
            ..fast_cfg()
        };
        let a = run_fris(&ch, &power, &cfg, 9).unwrap();
        let b = run_fris(&ch, &power, &cfg, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn best_rate_tracks_history_maximum() {
        let ch = small_drop(10);
        let power = PowerConfig::default();
        let cfg = FrisConfig {
            gamma_u_db: Some(-10.0),
            ..fast_cfg()
        };
        let result = run_fris(&ch, &power, &cfg, 11).unwrap();
        let hist_best = result
            .history
            .iter()
            .filter(|rec| rec.feasible)
            .map(|rec| rec.dl_sum_rate)
            .fold(result.initial_dl_sum_rate, f64::max);
        assert_relative_eq!(result.best_dl_sum_rate, hist_best, max_relative = 1e-12);
        assert_relative_eq!(
            result.final_rates.dl_sum,
            result.best_dl_sum_rate,
            max_relative = 1e-12
        );
    }
}
