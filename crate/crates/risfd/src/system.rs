//! Received-signal powers, SINRs, and rates, plus the affine-in-theta
//! cascade decomposition `(X + A*Theta*B) v = X v + beta * A * diag(B v) * u`
//! with `u = e^{j theta}` that both subproblem builders are built on.
//!
//! Symbol conventions: DL/UL symbols are unit-variance and independent, so
//! per-beam and per-UE interference powers add incoherently at the DL UEs.
//! The UL side uses the aggregate convention: the received UL power and the
//! residual self-interference are evaluated at the deterministic all-ones
//! symbol vector (scaled by the respective transmit powers), which is what
//! the aggregate UL SINR constraint is defined on.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::cplx::{diag_embed, C64, CMat, CVec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerConfig {
    /// DL per-stream power scale (W). Kept at 1 so `p_max` alone governs the
    /// radiated DL power.
    pub p_d: f64,
    /// UL per-UE transmit power (W).
    pub p_u: f64,
    /// BS beamforming power budget (W).
    pub p_max: f64,
    /// UE noise power (W).
    pub sigma2: f64,
    /// BS Rx noise power (W).
    pub sigma2_u: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            p_d: 1.0,
            p_u: 0.1,
            p_max: 1.0,
            sigma2: 1e-9,
            sigma2_u: 1e-9,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p_d, self.p_u, self.p_max, self.sigma2, self.sigma2_u];
        if all.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig("all powers must be positive".into()));
        }
        Ok(())
    }
}

/// The `N_t x M` precoder; column `m` is the beam for DL UE `m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beamformer {
    pub w: CMat,
}

impl Beamformer {
    pub fn new(w: CMat) -> Self {
        Self { w }
    }

    pub fn zeros(n_t: usize, m: usize) -> Self {
        Self {
            w: CMat::zeros(n_t, m),
        }
    }

    pub fn beam(&self, m: usize) -> CVec {
        self.w.column(m).into_owned()
    }

    pub fn num_beams(&self) -> usize {
        self.w.ncols()
    }

    /// Total transmit power `sum_m ||w_m||^2`.
    pub fn total_power(&self) -> f64 {
        self.w.norm_squared()
    }

    /// Sum of all beams (the coherent direction seen by the SI channel).
    pub fn beam_sum(&self) -> CVec {
        let mut sum = CVec::zeros(self.w.nrows());
        for m in 0..self.w.ncols() {
            sum += self.w.column(m);
        }
        sum
    }
}

/// RIS configuration: `K` phase angles and the fixed reflection amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RisPhase {
    pub theta: Vec<f64>,
    pub beta: f64,
}

impl RisPhase {
    pub fn new(theta: Vec<f64>, beta: f64) -> Self {
        Self { theta, beta }
    }

    pub fn zeros(k: usize, beta: f64) -> Self {
        Self {
            theta: vec![0.0; k],
            beta,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Unit-modulus phase vector `e^{j theta}` (amplitude excluded).
    pub fn unit_vector(&self) -> CVec {
        CVec::from_fn(self.theta.len(), |i, _| C64::from_polar(1.0, self.theta[i]))
    }

    /// Realized reflection coefficients `beta * e^{j theta}`.
    pub fn realized(&self) -> CVec {
        self.unit_vector() * C64::new(self.beta, 0.0)
    }

    /// `Theta = beta * diag(e^{j theta})`.
    pub fn reflection_matrix(&self) -> CMat {
        diag_embed(&self.realized())
    }

    /// Recovers angles from an arbitrary nonzero complex vector (projection
    /// to the unit circle).
    pub fn from_unit_vector(u: &CVec, beta: f64) -> Self {
        Self {
            theta: u.iter().map(|z| z.arg().rem_euclid(std::f64::consts::TAU)).collect(),
            beta,
        }
    }
}

/// Affine decomposition of a cascaded signal: `value(u) = base + gain * u`
/// where `u = e^{j theta}` and the RIS amplitude is folded into `gain`.
#[derive(Debug, Clone)]
pub struct AffineThetaMap {
    pub base: CVec,
    pub gain: CMat,
}

impl AffineThetaMap {
    pub fn eval(&self, u: &CVec) -> CVec {
        if self.gain.ncols() == 0 {
            self.base.clone()
        } else {
            &self.base + &self.gain * u
        }
    }

    pub fn power(&self, u: &CVec) -> f64 {
        self.eval(u).norm_squared()
    }

    /// Scales the signal by a real factor.
    pub fn scaled(&self, s: f64) -> AffineThetaMap {
        AffineThetaMap {
            base: &self.base * C64::new(s, 0.0),
            gain: &self.gain * C64::new(s, 0.0),
        }
    }
}

/// Decomposes `(X + A*Theta*B) v` into `X v + beta * A * diag(B v) * u`.
pub fn cascade_affine(
    x: &CMat,
    a: &CMat,
    b: &CMat,
    v: &CVec,
    beta: f64,
) -> Result<AffineThetaMap> {
    if x.ncols() != v.len() || b.ncols() != v.len() || a.ncols() != b.nrows() || x.nrows() != a.nrows()
    {
        return Err(Error::DimensionMismatch(format!(
            "cascade_affine: X {}x{}, A {}x{}, B {}x{}, v {}",
            x.nrows(),
            x.ncols(),
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            v.len()
        )));
    }
    let base = x * v;
    let gain = a * diag_embed(&(b * v)) * C64::new(beta, 0.0);
    Ok(AffineThetaMap { base, gain })
}

/// Effective matrix `X + A*Theta*B` for a fixed RIS configuration.
pub fn effective_matrix(x: &CMat, a: &CMat, b: &CMat, ris: &RisPhase) -> CMat {
    if ris.is_empty() {
        x.clone()
    } else {
        x + a * ris.reflection_matrix() * b
    }
}

/// Signal, inter-user interference, and CCI powers at DL UE `m`.
#[derive(Debug, Clone, Copy)]
pub struct DlTerms {
    pub signal: f64,
    pub inter_user: f64,
    pub cci: f64,
}

fn row_mat(m: &CMat, i: usize) -> CMat {
    CMat::from_fn(1, m.ncols(), |_, j| m[(i, j)])
}

fn dl_row(ch: &ChannelSet, m: usize) -> (CMat, CMat) {
    (row_mat(&ch.d, m), row_mat(&ch.d2, m))
}

/// Per-UE DL powers from Eq.-(1)-style terms with expected symbol powers.
pub fn dl_terms(
    m: usize,
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> DlTerms {
    let (d_m, d2_m) = dl_row(ch, m);
    let eff = effective_matrix(&d_m, &d2_m, &ch.d1, ris); // 1 x N_t
    let signal = power.p_d * (&eff * w.beam(m)).norm_squared();
    let mut inter_user = 0.0;
    for mp in 0..w.num_beams() {
        if mp != m {
            inter_user += power.p_d * (&eff * w.beam(mp)).norm_squared();
        }
    }
    let cci_row = effective_matrix(&row_mat(&ch.v, m), &d2_m, &ch.u1, ris); // 1 x N
    let cci = power.p_u * cci_row.norm_squared();
    DlTerms {
        signal,
        inter_user,
        cci,
    }
}

pub fn dl_sinr(
    m: usize,
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> f64 {
    let t = dl_terms(m, w, ris, ch, power);
    t.signal / (t.cci + t.inter_user + power.sigma2)
}

/// Aggregate UL received power `U_S` and residual SI power `U_I`, both at
/// the all-ones symbol convention.
pub fn ul_terms(
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> (f64, f64) {
    let n = ch.sizes.n;
    let u_s = if n == 0 {
        0.0
    } else {
        let u_eff = effective_matrix(&ch.u, &ch.u2, &ch.u1, ris);
        let ones = CVec::from_element(n, C64::new(1.0, 0.0));
        power.p_u * (u_eff * ones).norm_squared()
    };
    let s_eff = effective_matrix(&ch.s, &ch.u2, &ch.d1, ris);
    let u_i = power.p_d * (s_eff * w.beam_sum()).norm_squared();
    (u_s, u_i)
}

pub fn ul_aggregate_sinr(
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> f64 {
    let (u_s, u_i) = ul_terms(w, ris, ch, power);
    u_s / (u_i + power.sigma2_u)
}

/// Per-UL-UE SINRs under MRC receive combining; reporting only, never used
/// inside the optimization (the aggregate constraint is).
pub fn ul_mrc_sinrs(
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> Vec<f64> {
    let n = ch.sizes.n;
    if n == 0 {
        return vec![];
    }
    let u_eff = effective_matrix(&ch.u, &ch.u2, &ch.u1, ris);
    let s_eff = effective_matrix(&ch.s, &ch.u2, &ch.d1, ris);
    (0..n)
        .map(|idx| {
            let h = u_eff.column(idx).into_owned();
            let h_norm2 = h.norm_squared();
            if h_norm2 == 0.0 {
                return 0.0;
            }
            let signal = power.p_u * h_norm2 * h_norm2;
            let mut interference = 0.0;
            for other in 0..n {
                if other != idx {
                    interference +=
                        power.p_u * (h.adjoint() * u_eff.column(other))[(0, 0)].norm_sqr();
                }
            }
            for m in 0..w.num_beams() {
                interference +=
                    power.p_d * (h.adjoint() * &s_eff * w.beam(m))[(0, 0)].norm_sqr();
            }
            let noise = power.sigma2_u * h_norm2;
            signal / (interference + noise)
        })
        .collect()
}

pub fn rate_from_sinr(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Rates achieved at `(W, theta)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub dl_rates: Vec<f64>,
    pub dl_sum: f64,
    pub ul_aggregate_sinr: f64,
    pub ul_aggregate_rate: f64,
    /// Per-UL-UE MRC reporting SINRs (not part of the optimization model).
    pub ul_report_sinrs: Vec<f64>,
    pub ul_report_rate_sum: f64,
}

pub fn rates(
    w: &Beamformer,
    ris: &RisPhase,
    ch: &ChannelSet,
    power: &PowerConfig,
) -> RateReport {
    let dl_rates: Vec<f64> = (0..ch.sizes.m)
        .map(|m| rate_from_sinr(dl_sinr(m, w, ris, ch, power)))
        .collect();
    let dl_sum = dl_rates.iter().sum();
    let ul_sinr = ul_aggregate_sinr(w, ris, ch, power);
    let ul_report_sinrs = ul_mrc_sinrs(w, ris, ch, power);
    let ul_report_rate_sum = ul_report_sinrs.iter().map(|&s| rate_from_sinr(s)).sum();
    RateReport {
        dl_rates,
        dl_sum,
        ul_aggregate_sinr: ul_sinr,
        ul_aggregate_rate: rate_from_sinr(ul_sinr),
        ul_report_sinrs,
        ul_report_rate_sum,
    }
}
