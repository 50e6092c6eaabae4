//! Comparison schemes for benchmarking: matched-filter BS beams, RIS phases
//! aligned for the strongest DL UE, half-duplex time sharing, full duplex
//! without the RIS, and random phases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelSet;
use crate::cplx::{CMat, C64};
use crate::fris::{run_fris, FrisConfig, FrisResult};
use crate::system::{
    effective_matrix, rates, Beamformer, PowerConfig, RateReport, RisPhase,
};
use crate::Result;

fn row_mat(m: &CMat, i: usize) -> CMat {
    CMat::from_fn(1, m.ncols(), |_, j| m[(i, j)])
}

/// Matched-filter transmit beams on the effective (direct plus cascaded)
/// per-UE channels, jointly scaled to the full power budget.
pub fn mrt_beamformer(ch: &ChannelSet, ris: &RisPhase, power: &PowerConfig) -> Beamformer {
    let mut w = Beamformer::zeros(ch.sizes.n_t, ch.sizes.m);
    for m in 0..ch.sizes.m {
        let d_row = row_mat(&ch.d, m);
        let d2_row = row_mat(&ch.d2, m);
        let eff = effective_matrix(&d_row, &d2_row, &ch.d1, ris);
        w.w.set_column(m, &eff.adjoint().column(0));
    }
    let norm = w.total_power();
    if norm > 0.0 {
        Beamformer::new(&w.w * C64::new((power.p_max / norm).sqrt(), 0.0))
    } else {
        w
    }
}

/// RIS phases that align every cascaded element contribution of the
/// strongest-direct-channel DL UE with its direct path, under a matched
/// filter pointed at that UE.
pub fn mrc_ris_phases(ch: &ChannelSet, beta: f64) -> RisPhase {
    let k = ch.sizes.k;
    if k == 0 || ch.sizes.m == 0 {
        return RisPhase::zeros(k, beta);
    }
    let m_hat = (0..ch.sizes.m)
        .max_by(|&a, &b| {
            let na: f64 = (0..ch.sizes.n_t).map(|j| ch.d[(a, j)].norm_sqr()).sum();
            let nb: f64 = (0..ch.sizes.n_t).map(|j| ch.d[(b, j)].norm_sqr()).sum();
            na.total_cmp(&nb)
        })
        .expect("m >= 1");
    let d_row = row_mat(&ch.d, m_hat);
    let w = d_row.adjoint();
    let direct = (&d_row * &w)[(0, 0)];
    let theta = (0..k)
        .map(|i| {
            let through = ch.d2[(m_hat, i)] * (row_mat(&ch.d1, i) * &w)[(0, 0)];
            if through.norm() > 0.0 {
                direct.arg() - through.arg()
            } else {
                0.0
            }
        })
        .collect();
    RisPhase::new(theta, beta)
}

/// Independent uniform phases, for the random-reflection benchmark.
pub fn random_ris_phases(k: usize, beta: f64, seed: u64) -> RisPhase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7270_6873);
    RisPhase::new(
        (0..k)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect(),
        beta,
    )
}

/// Half-duplex rates under matched-filter beams: the DL phase sees no UL
/// transmissions (no CCI on any path) and the UL phase sees a silent BS (no
/// SI on any path); rate fields carry the 1/2 time-sharing factor while the
/// SINR fields stay per-phase.
pub fn hd_rates(ch: &ChannelSet, ris: &RisPhase, power: &PowerConfig) -> RateReport {
    let w = mrt_beamformer(ch, ris, power);
    let dl_power = PowerConfig { p_u: 0.0, ..*power };
    let dl = rates(&w, ris, ch, &dl_power);
    let silent = Beamformer::zeros(ch.sizes.n_t, ch.sizes.m.max(1));
    let ul = rates(&silent, ris, ch, power);
    RateReport {
        dl_rates: dl.dl_rates.iter().map(|r| 0.5 * r).collect(),
        dl_sum: 0.5 * dl.dl_sum,
        ul_aggregate_sinr: ul.ul_aggregate_sinr,
        ul_aggregate_rate: 0.5 * ul.ul_aggregate_rate,
        ul_report_sinrs: ul.ul_report_sinrs,
        ul_report_rate_sum: 0.5 * ul.ul_report_rate_sum,
    }
}

/// Full optimizer run on the same drop with the RIS matrices emptied out.
pub fn fd_no_ris(
    ch: &ChannelSet,
    power: &PowerConfig,
    cfg: &FrisConfig,
    seed: u64,
) -> Result<FrisResult> {
    run_fris(&ch.without_ris(), power, cfg, seed)
}
