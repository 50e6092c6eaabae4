//! Fractional-programming transforms that turn the sum-log-of-SINR
//! objective into the SCA-ready affine surrogate: the Lagrangian dual
//! transform (auxiliaries `r`), the Dinkelbach ratios `t`, and the UL QoS
//! rewrite into an interference budget `xi_U`.
//!
//! `lagrangian_objective` uses base-2 logs; the non-log terms therefore
//! carry a `1/ln 2` factor so that the transform keeps both of its defining
//! properties: stationarity in `r` at `r* = SINR` and value equal to the
//! exact sum rate at `r*`. Without the factor only the second holds.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::system::{dl_terms, rate_from_sinr, ul_terms, Beamformer, PowerConfig, RisPhase};
use crate::{Error, Result};

/// Per-outer-iteration snapshot of the transform variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformState {
    /// Auxiliary DL SINRs `r_m*`, fixed at the previous iterate's SINRs.
    pub r: Vec<f64>,
    /// Dinkelbach ratios `t_m*` from the previous iterate.
    pub t: Vec<f64>,
    /// UL SINR threshold `t_bar = 10^(gamma_U/10)`.
    pub t_bar: f64,
    /// UL interference budget `xi_U = (U_S - t_bar*sigma_U^2)/t_bar`.
    pub xi_u: f64,
}

/// Linear-scale UL SINR threshold for a dB target.
pub fn t_bar_from_gamma_db(gamma_u_db: f64) -> f64 {
    10f64.powf(gamma_u_db / 10.0)
}

/// Equivalent UL rate threshold `t_th = log2(1 + t_bar)`.
pub fn t_th_from_gamma_db(gamma_u_db: f64) -> f64 {
    rate_from_sinr(t_bar_from_gamma_db(gamma_u_db))
}

/// Optimal Lagrangian auxiliaries: `r_m* = DL SINR of UE m` at `(W, theta)`.
pub fn optimal_r(
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> Vec<f64> {
    (0..ch.sizes.m)
        .map(|m| {
            let t = dl_terms(m, w, ris, ch, power);
            t.signal / (t.inter_user + t.cci + power.sigma2)
        })
        .collect()
}

/// Lagrangian dual objective `F_D(W, theta, r)` in bits:
/// `sum_m log2(1+r_m) - r_m/ln2 + (1+r_m) S_m / ((S_m+I_m+C_m+sigma^2) ln2)`.
pub fn lagrangian_objective(
    w: &Beamformer,
    ris: &RisPhase,
    r: &[f64],
    ch: &ChannelSet,
    power: &PowerConfig,
) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    (0..ch.sizes.m)
        .map(|m| {
            let t = dl_terms(m, w, ris, ch, power);
            let denom = t.signal + t.inter_user + t.cci + power.sigma2;
            let ratio = if denom > 0.0 { t.signal / denom } else { 0.0 };
            (1.0 + r[m]).log2() - r[m] / ln2 + (1.0 + r[m]) * ratio / ln2
        })
        .sum()
}

/// Dinkelbach ratios at the anchor `(W_prev, theta_prev)`:
/// `t_m* = (1+r_m*) S_m / (S_m + I_m + C_m + sigma^2)`, 0 when degenerate.
pub fn dinkelbach_t(
    w_prev: &Beamformer,
    ris_prev: &RisPhase,
    r: &[f64],
    ch: &ChannelSet,
    power: &PowerConfig,
) -> Vec<f64> {
    (0..ch.sizes.m)
        .map(|m| {
            let t = dl_terms(m, w_prev, ris_prev, ch, power);
            let denom = t.signal + t.inter_user + t.cci + power.sigma2;
            if denom > 0.0 && t.signal > 0.0 {
                (1.0 + r[m]) * t.signal / denom
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-term exact Dinkelbach surrogate
/// `(1+r_m) S_m(W,theta) - t_m (S_m + I_m + C_m + sigma^2)`.
pub fn dinkelbach_terms(
    w: &Beamformer,
    ris: &RisPhase,
    r: &[f64],
    t: &[f64],
    ch: &ChannelSet,
    power: &PowerConfig,
) -> Vec<f64> {
    (0..ch.sizes.m)
        .map(|m| {
            let d = dl_terms(m, w, ris, ch, power);
            let denom = d.signal + d.inter_user + d.cci + power.sigma2;
            (1.0 + r[m]) * d.signal - t[m] * denom
        })
        .collect()
}

/// Exact Dinkelbach surrogate objective (sum over DL UEs).
pub fn dinkelbach_objective(
    w: &Beamformer,
    ris: &RisPhase,
    r: &[f64],
    t: &[f64],
    ch: &ChannelSet,
    power: &PowerConfig,
) -> f64 {
    dinkelbach_terms(w, ris, r, t, ch, power).iter().sum()
}

/// UL interference budget for a fixed RIS configuration:
/// `xi_U = (U_S - t_bar*sigma_U^2)/t_bar`. The rewritten constraint
/// `U_I(W) <= xi_U` is equivalent to `SINR_U >= t_bar`. A negative return
/// means the QoS target is unattainable at this `theta` for any `W`.
pub fn qos_budget(
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
    t_bar: f64,
) -> Result<f64> {
    if !(t_bar > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "qos_budget requires t_bar > 0, got {t_bar}"
        )));
    }
    let (u_s, _) = ul_terms(&Beamformer::zeros(ch.sizes.n_t, ch.sizes.m), ris, ch, power);
    Ok((u_s - t_bar * power.sigma2_u) / t_bar)
}

impl TransformState {
    /// Snapshot at an anchor `(W, theta)` for the next outer iteration.
    pub fn at_anchor(
        w: &Beamformer,
        ris: &RisPhase,
        ch: &ChannelSet,
        power: &PowerConfig,
        gamma_u_db: f64,
    ) -> Result<Self> {
        let r = optimal_r(w, ris, ch, power);
        let t = dinkelbach_t(w, ris, &r, ch, power);
        let t_bar = t_bar_from_gamma_db(gamma_u_db);
        let xi_u = if ch.sizes.n == 0 {
            f64::INFINITY
        } else {
            qos_budget(ris, ch, power, t_bar)?
        };
        Ok(Self { r, t, t_bar, xi_u })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_drop, RicianParams, ScenarioGeometry, Sizes};
    use crate::cplx::{C64, CMat};
    use crate::system::{dl_sinr, rates, ul_aggregate_sinr};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_drop(seed: u64) -> ChannelSet {
        let sizes = Sizes {
            n_t: 4,
            n_r: 4,
            k: 8,
            m: 3,
            n: 2,
        };
        generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            seed,
        )
        .unwrap()
    }

    fn random_point(rng: &mut impl Rng, ch: &ChannelSet) -> (Beamformer, RisPhase) {
        let w = Beamformer::new(CMat::from_fn(ch.sizes.n_t, ch.sizes.m, |_, _| {
            C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        }));
        let ris = RisPhase::new(
            (0..ch.sizes.k)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect(),
            0.9,
        );
        (w, ris)
    }

    #[test]
    fn optimal_r_matches_dl_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = test_drop(1);
        let power = PowerConfig::default();
        let (w, ris) = random_point(&mut rng, &ch);
        let r = optimal_r(&w, &ris, &ch, &power);
        for m in 0..3 {
            assert_relative_eq!(r[m], dl_sinr(m, &w, &ris, &ch, &power), max_relative = 1e-12);
        }
    }

    #[test]
    fn prop1_identity_recovers_sum_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let power = PowerConfig::default();
        for seed in 0..20 {
            let ch = test_drop(100 + seed);
            let (w, ris) = random_point(&mut rng, &ch);
            let r = optimal_r(&w, &ris, &ch, &power);
            let f_d = lagrangian_objective(&w, &ris, &r, &ch, &power);
            let sum_rate = rates(&w, &ris, &ch, &power).dl_sum;
            assert!(
                (f_d - sum_rate).abs() <= 1e-9,
                "identity violated: F_D={f_d}, sum rate={sum_rate}"
            );
        }
    }

    #[test]
    fn stationarity_in_r_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let power = PowerConfig::default();
        let h = 1e-5;
        for seed in 0..100 {
            let ch = test_drop(200 + seed);
            let (w, ris) = random_point(&mut rng, &ch);
            let r = optimal_r(&w, &ris, &ch, &power);
            for m in 0..3 {
                let mut rp = r.clone();
                let mut rm = r.clone();
                rp[m] += h;
                rm[m] -= h;
                let grad = (lagrangian_objective(&w, &ris, &rp, &ch, &power)
                    - lagrangian_objective(&w, &ris, &rm, &ch, &power))
                    / (2.0 * h);
                assert!(grad.abs() <= 1e-6, "grad[{m}] = {grad} at seed {seed}");
            }
        }
    }

    #[test]
    fn lagrangian_single_user_sinr_one() {
        // SINR = 1 and r = 1 give F_D = log2(2) = 1.
        let sizes = Sizes { n_t: 1, n_r: 1, k: 0, m: 1, n: 0 };
        let mut ch = generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            4,
        )
        .unwrap();
        ch.d = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let w = Beamformer::new(CMat::from_element(1, 1, C64::new(1.0, 0.0)));
        let ris = RisPhase::zeros(0, 0.9);
        let power = PowerConfig {
            sigma2: 1.0,
            ..PowerConfig::default()
        };
        assert_relative_eq!(dl_sinr(0, &w, &ris, &ch, &power), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            lagrangian_objective(&w, &ris, &[1.0], &ch, &power),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_channels_give_zero_r_and_t() {
        let mut ch = test_drop(5);
        for m in [&mut ch.u, &mut ch.u1, &mut ch.u2, &mut ch.d, &mut ch.d1, &mut ch.d2, &mut ch.s, &mut ch.v] {
            m.fill(C64::new(0.0, 0.0));
        }
        let w = Beamformer::new(CMat::identity(4, 3));
        let ris = RisPhase::zeros(8, 0.9);
        let power = PowerConfig::default();
        let r = optimal_r(&w, &ris, &ch, &power);
        assert!(r.iter().all(|&x| x == 0.0));
        let t = dinkelbach_t(&w, &ris, &r, &ch, &power);
        assert!(t.iter().all(|&x| x == 0.0));
        assert_eq!(lagrangian_objective(&w, &ris, &r, &ch, &power), 0.0);
    }

    #[test]
    fn dinkelbach_anchor_zero_per_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let power = PowerConfig::default();
        for seed in 0..200 {
            let ch = test_drop(300 + seed);
            let (w, ris) = random_point(&mut rng, &ch);
            let r = optimal_r(&w, &ris, &ch, &power);
            let t = dinkelbach_t(&w, &ris, &r, &ch, &power);
            for term in dinkelbach_terms(&w, &ris, &r, &t, &ch, &power) {
                assert!(term.abs() <= 1e-10, "anchor term {term} at seed {seed}");
            }
        }
    }

    #[test]
    fn dinkelbach_ratio_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = test_drop(8);
        let power = PowerConfig::default();
        let (w, ris) = random_point(&mut rng, &ch);
        let r = optimal_r(&w, &ris, &ch, &power);
        let t = dinkelbach_t(&w, &ris, &r, &ch, &power);
        for m in 0..3 {
            let d = crate::system::dl_terms(m, &w, &ris, &ch, &power);
            let denom = d.signal + d.inter_user + d.cci + power.sigma2;
            assert_relative_eq!(t[m] * denom, (1.0 + r[m]) * d.signal, max_relative = 1e-12);
        }
    }

    #[test]
    fn threshold_mapping() {
        assert_relative_eq!(t_bar_from_gamma_db(0.0), 1.0);
        assert_relative_eq!(t_bar_from_gamma_db(10.0), 10.0);
        // t_th = 1 bit corresponds to t_bar = 1, i.e. gamma = 0 dB.
        assert_relative_eq!(t_th_from_gamma_db(0.0), 1.0);
    }

    #[test]
    fn qos_budget_arithmetic() {
        // U_S = 2, sigma_U^2 = 1, t_bar = 1 -> xi_U = 1.
        let sizes = Sizes { n_t: 2, n_r: 2, k: 0, m: 1, n: 2 };
        let mut ch = generate_drop(
            &ScenarioGeometry::default(),
            &sizes,
            &RicianParams::default(),
            9,
        )
        .unwrap();
        ch.u = CMat::from_fn(2, 2, |_, j| {
            if j == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let ris = RisPhase::zeros(0, 0.9);
        let power = PowerConfig {
            p_u: 1.0,
            sigma2_u: 1.0,
            ..PowerConfig::default()
        };
        let xi = qos_budget(&ris, &ch, &power, 1.0).unwrap();
        assert_relative_eq!(xi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn qos_budget_equivalent_to_sinr_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let power = PowerConfig::default();
        for seed in 0..50 {
            let ch = test_drop(400 + seed);
            let (w, ris) = random_point(&mut rng, &ch);
            let t_bar = t_bar_from_gamma_db(rng.gen_range(-5.0..15.0));
            let xi = qos_budget(&ris, &ch, &power, t_bar).unwrap();
            let (_, u_i) = ul_terms(&w, &ris, &ch, &power);
            let sinr = ul_aggregate_sinr(&w, &ris, &ch, &power);
            // U_I <= xi_U  <=>  SINR_U >= t_bar (up to roundoff at the boundary).
            let lhs = u_i <= xi;
            let rhs = sinr >= t_bar * (1.0 - 1e-10);
            let lhs_loose = u_i <= xi * (1.0 + 1e-10) + 1e-300;
            assert!(
                (lhs == rhs) || (lhs_loose && sinr >= t_bar * (1.0 - 1e-9)),
                "inconsistent at seed {seed}: u_i={u_i}, xi={xi}, sinr={sinr}, t_bar={t_bar}"
            );
        }
    }

    #[test]
    fn threshold_monotonicity() {
        let ch = test_drop(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (_, ris) = random_point(&mut rng, &ch);
        let power = PowerConfig::default();
        let mut prev = f64::INFINITY;
        for gamma in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0] {
            let t_bar = t_bar_from_gamma_db(gamma);
            let xi = qos_budget(&ris, &ch, &power, t_bar).unwrap();
            assert!(xi < prev, "xi_U must decrease as the threshold rises");
            prev = xi;
        }
    }

    #[test]
    fn transform_state_snapshot() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ch = test_drop(14);
        let power = PowerConfig::default();
        let (w, ris) = random_point(&mut rng, &ch);
        let st = TransformState::at_anchor(&w, &ris, &ch, &power, 5.0).unwrap();
        assert_eq!(st.r.len(), 3);
        assert_eq!(st.t.len(), 3);
        assert_relative_eq!(st.t_bar, 10f64.powf(0.5));
        for m in 0..3 {
            assert_relative_eq!(st.r[m], dl_sinr(m, &w, &ris, &ch, &power), max_relative = 1e-10);
        }
    }
}
