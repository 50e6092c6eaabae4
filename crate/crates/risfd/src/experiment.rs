//! Seeded Monte-Carlo experiment harness behind the CLI: config parsing and
//! hashing, a drop-level worker pool with order-independent results, CSV and
//! JSON emission, gnuplot script generation, and the self-test table.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{fd_no_ris, hd_rates, mrc_ris_phases, mrt_beamformer, random_ris_phases};
use crate::channel::{generate_drop, ChannelSet, RicianParams, ScenarioGeometry, Sizes};
use crate::cplx::{complex_from_embedding, real_embed_vec, CVec, C64};
use crate::fris::{run_fris, FrisConfig, FrisResult, FrisStatus};
use crate::qcqp::{self, ConvexQcqp, SolverCfg};
use crate::ris::{build_theta_quadratics, sca_theta_surrogates};
use crate::system::{rates, PowerConfig, RisPhase};
use crate::transforms::{
    dinkelbach_objective, dinkelbach_t, dinkelbach_terms, lagrangian_objective, optimal_r,
};
use crate::{Error, Result};

/// One experiment description, loadable from JSON. All `_db` fields are in
/// decibels; everything else is linear (watts, meters, counts).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sizes: Sizes,
    pub geometry: ScenarioGeometry,
    pub rician: RicianParams,
    pub power: PowerConfig,
    pub fris: FrisConfig,
    /// Monte-Carlo drops per evaluation point.
    pub drops: usize,
    /// Master seed; per-drop seeds are derived deterministically.
    pub seed: u64,
    /// Worker threads; 0 means "resolve from flag/env, default 1".
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sizes: Sizes {
                n_t: 6,
                n_r: 6,
                k: 16,
                m: 4,
                n: 4,
            },
            geometry: ScenarioGeometry::default(),
            rician: RicianParams::default(),
            power: PowerConfig::default(),
            fris: FrisConfig::default(),
            drops: 10,
            seed: 1,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.n_t == 0 || self.sizes.m == 0 {
            return Err(Error::InvalidConfig(
                "at least one transmit antenna and one DL UE required".into(),
            ));
        }
        if self.drops == 0 {
            return Err(Error::InvalidConfig("drops must be >= 1".into()));
        }
        self.geometry.validate()?;
        self.rician.validate()?;
        self.power.validate()?;
        self.fris.validate()
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 over the canonical JSON form; recorded in every CSV row.
    /// The worker count is an execution detail with no effect on results,
    /// so it is excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// SplitMix-style derivation of independent per-drop seeds.
pub fn drop_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Worker count from an explicit flag, else `RIS_FD_OPT_WORKERS`, else 1.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    if let Some(w) = flag {
        if w > 0 {
            return w;
        }
    }
    std::env::var("RIS_FD_OPT_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or(1)
}

/// Runs `f` over `0..count` on a fixed-size thread pool; the output order is
/// by index regardless of scheduling, so results are worker-count invariant.
pub fn parallel_map<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(count.max(1));
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = std::sync::mpsc::channel::<(usize, T)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let f = &f;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                if tx.send((i, f(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
        for (i, v) in rx {
            slots[i] = Some(v);
        }
        slots
            .into_iter()
            .map(|s| s.expect("every index computed"))
            .collect()
    })
}

/// Outcome of one optimizer drop, CSV-row shaped.
#[derive(Debug, Clone, Serialize)]
pub struct DropOutcome {
    pub drop_id: usize,
    pub seed: u64,
    pub status: String,
    pub dl_sum_rate: f64,
    pub ul_aggregate_rate: f64,
    pub dl_rates: Vec<f64>,
    pub outer_iterations: usize,
    pub wall_ms: f64,
    #[serde(skip)]
    pub result: Option<FrisResult>,
}

fn status_name(s: FrisStatus) -> &'static str {
    match s {
        FrisStatus::Converged => "converged",
        FrisStatus::MaxIter => "max_iter",
        FrisStatus::Infeasible => "infeasible",
    }
}

/// Generates channels for drop `i` of `cfg` and runs the full optimizer.
pub fn run_drop(cfg: &ExperimentConfig, i: usize) -> DropOutcome {
    let seed = drop_seed(cfg.seed, i as u64);
    let start = Instant::now();
    let out = generate_drop(&cfg.geometry, &cfg.sizes, &cfg.rician, seed)
        .and_then(|ch| run_fris(&ch, &cfg.power, &cfg.fris, seed));
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match out {
        Ok(res) => DropOutcome {
            drop_id: i,
            seed,
            status: status_name(res.status).to_string(),
            dl_sum_rate: res.best_dl_sum_rate,
            ul_aggregate_rate: res.final_rates.ul_aggregate_rate,
            dl_rates: res.final_rates.dl_rates.clone(),
            outer_iterations: res.history.len(),
            wall_ms,
            result: Some(res),
        },
        Err(Error::Infeasible(_)) => DropOutcome {
            drop_id: i,
            seed,
            status: "infeasible".to_string(),
            dl_sum_rate: 0.0,
            ul_aggregate_rate: 0.0,
            dl_rates: vec![],
            outer_iterations: 0,
            wall_ms,
            result: None,
        },
        Err(e) => DropOutcome {
            drop_id: i,
            seed,
            status: format!("error: {e}"),
            dl_sum_rate: 0.0,
            ul_aggregate_rate: 0.0,
            dl_rates: vec![],
            outer_iterations: 0,
            wall_ms,
            result: None,
        },
    }
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), contents)?;
    Ok(())
}

fn mean_se(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Batch of seeded optimizer drops; writes `results.csv` (one row per drop)
/// and `result.json` (the full trajectory of the first solvable drop).
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    let hash = cfg.hash();
    let workers = resolve_workers(Some(cfg.workers));
    let outcomes = parallel_map(cfg.drops, workers, |i| run_drop(cfg, i));

    let mut csv = String::from("drop,seed,config,status,dl_sum_rate,ul_aggregate_rate,outer_iterations,wall_ms");
    for m in 0..cfg.sizes.m {
        csv.push_str(&format!(",dl_rate_{m}"));
    }
    csv.push('\n');
    for o in &outcomes {
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{},{:.1}",
            o.drop_id, o.seed, hash, o.status, o.dl_sum_rate, o.ul_aggregate_rate,
            o.outer_iterations, o.wall_ms
        ));
        for m in 0..cfg.sizes.m {
            match o.dl_rates.get(m) {
                Some(r) => csv.push_str(&format!(",{r:.6}")),
                None => csv.push_str(","),
            }
        }
        csv.push('\n');
    }
    write_file(out_dir, "results.csv", &csv)?;

    if let Some(first) = outcomes.iter().find_map(|o| o.result.as_ref()) {
        write_file(out_dir, "result.json", &serde_json::to_string_pretty(first)?)?;
    }
    Ok(())
}

fn sweep_point(cfg: &ExperimentConfig, workers: usize) -> (usize, Vec<f64>, Vec<f64>) {
    let outcomes = parallel_map(cfg.drops, workers, |i| run_drop(cfg, i));
    let ok: Vec<&DropOutcome> = outcomes
        .iter()
        .filter(|o| o.status == "converged" || o.status == "max_iter")
        .collect();
    (
        ok.len(),
        ok.iter().map(|o| o.dl_sum_rate).collect(),
        ok.iter().map(|o| o.ul_aggregate_rate).collect(),
    )
}

/// UE-count sweep: DL UEs `M` in 1..=8 at `N = 4`, then UL UEs `N` in 1..=8
/// at `M = 4`, each under UL targets of 5 and 10 dB.
pub fn cmd_sweep_users(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    let workers = resolve_workers(Some(cfg.workers));
    let hash = cfg.hash();
    let mut csv =
        String::from("sweep,point,gamma_u_db,config,drops_ok,mean_dl,se_dl,mean_ul,se_ul\n");
    for gamma in [5.0, 10.0] {
        for (sweep, count) in [("dl_ues", 8usize), ("ul_ues", 8)] {
            for point in 1..=count {
                let mut c = cfg.clone();
                c.fris.gamma_u_db = Some(gamma);
                if sweep == "dl_ues" {
                    c.sizes.m = point;
                    c.sizes.n = 4;
                } else {
                    c.sizes.m = 4;
                    c.sizes.n = point;
                }
                let (ok, dl, ul) = sweep_point(&c, workers);
                let (mdl, sdl) = mean_se(&dl);
                let (mul, sul) = mean_se(&ul);
                csv.push_str(&format!(
                    "{sweep},{point},{gamma},{hash},{ok},{mdl:.6},{sdl:.6},{mul:.6},{sul:.6}\n"
                ));
            }
        }
    }
    write_file(out_dir, "results.csv", &csv)?;
    write_file(out_dir, "fig2.gp", FIG2_GP)?;
    Ok(())
}

/// Distance grid for the BS-RIS placement sweep.
pub const DISTANCE_GRID: [f64; 9] = [40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0];

/// RIS-placement sweep: BS-RIS distance over [`DISTANCE_GRID`] for
/// `K` in {8, 16, 32}.
pub fn cmd_sweep_distance(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    let workers = resolve_workers(Some(cfg.workers));
    let hash = cfg.hash();
    let mut csv = String::from("k,d,config,drops_ok,mean_dl,se_dl,mean_ul,se_ul\n");
    for k in [8usize, 16, 32] {
        for d in DISTANCE_GRID {
            let mut c = cfg.clone();
            c.sizes.k = k;
            c.geometry.d = d;
            let (ok, dl, ul) = sweep_point(&c, workers);
            let (mdl, sdl) = mean_se(&dl);
            let (mul, sul) = mean_se(&ul);
            csv.push_str(&format!(
                "{k},{d},{hash},{ok},{mdl:.6},{sdl:.6},{mul:.6},{sul:.6}\n"
            ));
        }
    }
    write_file(out_dir, "results.csv", &csv)?;
    write_file(out_dir, "fig3.gp", FIG3_GP)?;
    Ok(())
}

/// Per-drop sum rates (DL + UL) of every scheme on identical channels.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub drop_id: usize,
    pub seed: u64,
    pub status: String,
    pub fris: f64,
    pub fd_no_ris: f64,
    pub hd_ris_mrc: f64,
    pub hd_no_ris: f64,
    pub random_phase: f64,
}

fn scheme_sum(dl: f64, ul: f64) -> f64 {
    dl + ul
}

/// Evaluates all five schemes on one shared channel drop.
pub fn benchmark_drop(cfg: &ExperimentConfig, i: usize) -> Result<BenchmarkRow> {
    let seed = drop_seed(cfg.seed, i as u64);
    let ch = generate_drop(&cfg.geometry, &cfg.sizes, &cfg.rician, seed)?;
    let power = &cfg.power;
    let beta = cfg.fris.beta;

    let fris_res = run_fris(&ch, power, &cfg.fris, seed);
    let no_ris_res = fd_no_ris(&ch, power, &cfg.fris, seed);
    let (status, fris_rate, no_ris_rate) = match (&fris_res, &no_ris_res) {
        (Ok(a), Ok(b)) => (
            "ok".to_string(),
            scheme_sum(a.best_dl_sum_rate, a.final_rates.ul_aggregate_rate),
            scheme_sum(b.best_dl_sum_rate, b.final_rates.ul_aggregate_rate),
        ),
        _ => ("infeasible".to_string(), f64::NAN, f64::NAN),
    };

    let mrc = mrc_ris_phases(&ch, beta);
    let hd1 = hd_rates(&ch, &mrc, power);
    let bare = ch.without_ris();
    let hd0 = hd_rates(&bare, &RisPhase::zeros(0, beta), power);
    let rnd_ris = random_ris_phases(ch.sizes.k, beta, seed);
    let rnd = rates(&mrt_beamformer(&ch, &rnd_ris, power), &rnd_ris, &ch, power);

    Ok(BenchmarkRow {
        drop_id: i,
        seed,
        status,
        fris: fris_rate,
        fd_no_ris: no_ris_rate,
        hd_ris_mrc: scheme_sum(hd1.dl_sum, hd1.ul_aggregate_rate),
        hd_no_ris: scheme_sum(hd0.dl_sum, hd0.ul_aggregate_rate),
        random_phase: scheme_sum(rnd.dl_sum, rnd.ul_aggregate_rate),
    })
}

fn pct_gain(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        100.0 * (a - b) / b
    } else {
        f64::NAN
    }
}

/// Paired benchmark of all schemes; writes per-drop `results.csv` and a
/// `summary.csv` with scheme means plus headline improvement percentages.
pub fn cmd_benchmark(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<BenchmarkRow>> {
    cfg.validate()?;
    let workers = resolve_workers(Some(cfg.workers));
    let rows: Vec<BenchmarkRow> = parallel_map(cfg.drops, workers, |i| benchmark_drop(cfg, i))
        .into_iter()
        .collect::<Result<_>>()?;

    let hash = cfg.hash();
    let mut csv =
        String::from("drop,seed,config,status,fris,fd_no_ris,hd_ris_mrc,hd_no_ris,random_phase\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.drop_id, r.seed, hash, r.status, r.fris, r.fd_no_ris, r.hd_ris_mrc, r.hd_no_ris,
            r.random_phase
        ));
    }
    write_file(out_dir, "results.csv", &csv)?;

    let ok: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let col = |f: fn(&BenchmarkRow) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let means = [
        ("fris", mean_se(&col(|r| r.fris)).0),
        ("fd_no_ris", mean_se(&col(|r| r.fd_no_ris)).0),
        ("hd_ris_mrc", mean_se(&col(|r| r.hd_ris_mrc)).0),
        ("hd_no_ris", mean_se(&col(|r| r.hd_no_ris)).0),
        ("random_phase", mean_se(&col(|r| r.random_phase)).0),
    ];
    let get = |name: &str| means.iter().find(|(n, _)| *n == name).unwrap().1;
    let mut summary = String::from("scheme,mean_sum_rate,gain_over_hd_no_ris_pct\n");
    for (name, mean) in &means {
        summary.push_str(&format!(
            "{name},{mean:.6},{:.2}\n",
            pct_gain(*mean, get("hd_no_ris"))
        ));
    }
    summary.push_str(&format!(
        "# paired_ok_drops={} hd_ris_mrc_vs_hd_no_ris_pct={:.2} fd_no_ris_vs_hd_no_ris_pct={:.2} fris_vs_fd_no_ris_pct={:.2}\n",
        ok.len(),
        pct_gain(get("hd_ris_mrc"), get("hd_no_ris")),
        pct_gain(get("fd_no_ris"), get("hd_no_ris")),
        pct_gain(get("fris"), get("fd_no_ris")),
    ));
    write_file(out_dir, "summary.csv", &summary)?;
    write_file(out_dir, "fig4.gp", FIG4_GP)?;
    Ok(rows)
}

/// One named self-test check.
#[derive(Debug, Clone)]
pub struct SelfTestEntry {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn selftest_channels(seed: u64) -> (ChannelSet, PowerConfig) {
    let sizes = Sizes {
        n_t: 4,
        n_r: 4,
        k: 6,
        m: 3,
        n: 2,
    };
    let ch = generate_drop(
        &ScenarioGeometry::default(),
        &sizes,
        &RicianParams::default(),
        seed,
    )
    .expect("selftest drop");
    (ch, PowerConfig::default())
}

fn random_state(ch: &ChannelSet, power: &PowerConfig, seed: u64) -> (crate::system::Beamformer, RisPhase) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut w = crate::system::Beamformer::zeros(ch.sizes.n_t, ch.sizes.m);
    for m in 0..ch.sizes.m {
        for i in 0..ch.sizes.n_t {
            w.w[(i, m)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let norm = w.total_power();
    let w = crate::system::Beamformer::new(&w.w * C64::new((power.p_max / norm).sqrt(), 0.0));
    let theta = RisPhase::new(
        (0..ch.sizes.k)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect(),
        0.9,
    );
    (w, theta)
}

/// Invariant suite behind `selftest`. `flip_omega_sign` is a mutation
/// fixture: it corrupts the quadratic-fidelity reference so the suite must
/// report a failure (used to prove the checks can fail).
pub fn selftest_report(flip_omega_sign: bool) -> Vec<SelfTestEntry> {
    let mut entries = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        entries.push(SelfTestEntry {
            name,
            passed,
            detail,
        });
    };

    // Lagrangian identity and stationarity at r* over random states.
    let mut worst_id: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for seed in 0..20 {
        let (ch, power) = selftest_channels(300 + seed);
        let (w, theta) = random_state(&ch, &power, seed);
        let r = optimal_r(&w, &theta, &ch, &power);
        let direct: f64 = r.iter().map(|&s| (1.0 + s).log2()).sum();
        worst_id = worst_id.max((lagrangian_objective(&w, &theta, &r, &ch, &power) - direct).abs());
        let h = 1e-5;
        for m in 0..ch.sizes.m {
            let mut rp = r.clone();
            rp[m] += h;
            let mut rm = r.clone();
            rm[m] -= h;
            let g = (lagrangian_objective(&w, &theta, &rp, &ch, &power)
                - lagrangian_objective(&w, &theta, &rm, &ch, &power))
                / (2.0 * h);
            worst_grad = worst_grad.max(g.abs());
        }
    }
    push(
        "lagrangian identity at r*",
        worst_id <= 1e-9,
        format!("max |F_D - sum log2(1+SINR)| = {worst_id:.3e}"),
    );
    push(
        "lagrangian stationarity at r*",
        worst_grad <= 1e-6,
        format!("max |dF_D/dr| = {worst_grad:.3e}"),
    );

    // Dinkelbach surrogate vanishes at its anchor.
    let mut worst_anchor: f64 = 0.0;
    for seed in 0..20 {
        let (ch, power) = selftest_channels(400 + seed);
        let (w, theta) = random_state(&ch, &power, seed);
        let r = optimal_r(&w, &theta, &ch, &power);
        let t = dinkelbach_t(&w, &theta, &r, &ch, &power);
        for term in dinkelbach_terms(&w, &theta, &r, &t, &ch, &power) {
            worst_anchor = worst_anchor.max(term.abs());
        }
    }
    push(
        "dinkelbach anchor-zero",
        worst_anchor <= 1e-10,
        format!("max |term at anchor| = {worst_anchor:.3e}"),
    );

    // Phase-subproblem quadratics reproduce the exact Dinkelbach objective.
    let sign = if flip_omega_sign { -1.0 } else { 1.0 };
    let mut worst_fid: f64 = 0.0;
    for seed in 0..20 {
        let (ch, power) = selftest_channels(500 + seed);
        let (w, theta) = random_state(&ch, &power, seed);
        let r = optimal_r(&w, &theta, &ch, &power);
        let t = dinkelbach_t(&w, &theta, &r, &ch, &power);
        let tq = build_theta_quadratics(&w, &ch, &r, &t, &power, 0.0, theta.beta)
            .expect("quadratics build");
        let u = theta.unit_vector();
        let mut from_quads = 0.0;
        for m in 0..tq.omega.len() {
            let quad = |a: &crate::cplx::CMat| (u.adjoint() * a * &u)[(0, 0)].re;
            from_quads += sign * quad(&tq.omega[m]) - quad(&tq.psi[m])
                + 2.0 * (tq.zeta[m].adjoint() * &u)[(0, 0)].re
                + tq.c[m];
        }
        let exact = dinkelbach_objective(&w, &theta, &r, &t, &ch, &power);
        let scale = exact.abs().max(tq.objective_scale());
        worst_fid = worst_fid.max((from_quads - exact).abs() / scale);
    }
    push(
        "theta-quadratics fidelity",
        worst_fid <= 1e-9,
        format!("max relative mismatch = {worst_fid:.3e}"),
    );

    // Linearized phase surrogate is a tangent minorant.
    let mut minorant_ok = true;
    let mut tangency: f64 = 0.0;
    for seed in 0..10 {
        let (ch, power) = selftest_channels(600 + seed);
        let (w, theta) = random_state(&ch, &power, seed);
        let r = optimal_r(&w, &theta, &ch, &power);
        let t = dinkelbach_t(&w, &theta, &r, &ch, &power);
        let tq = build_theta_quadratics(&w, &ch, &r, &t, &power, 0.0, theta.beta)
            .expect("quadratics build");
        let anchor = theta.unit_vector();
        let (obj, _) = sca_theta_surrogates(&tq, &anchor).expect("surrogate build");
        let scale = tq.objective_scale();
        tangency = tangency.max(
            (obj.eval(&anchor).expect("eval") - tq.exact_objective(&anchor)).abs() / scale,
        );
        for probe in 0..10 {
            let (_, other) = random_state(&ch, &power, 7000 + 10 * seed + probe);
            let u = other.unit_vector();
            if obj.eval(&u).expect("eval") > tq.exact_objective(&u) + 1e-10 * scale {
                minorant_ok = false;
            }
        }
    }
    push(
        "phase surrogate tangent minorant",
        minorant_ok && tangency <= 1e-10,
        format!("tangency gap = {tangency:.3e}, minorant holds = {minorant_ok}"),
    );

    // QCQP solver against an analytic projection instance: maximize
    // -|x - p|^2 over |x| <= 1 with p outside the ball; optimum -(|p|-1)^2.
    let mut worst_qcqp: f64 = 0.0;
    for seed in 0..10 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(800 + seed);
        let p = CVec::from_fn(2, |_, _| {
            C64::new(rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0))
        });
        let dim = 4;
        let mut obj = crate::cplx::RealQuad::zeros(dim);
        obj.a = -nalgebra::DMatrix::identity(dim, dim);
        obj.b = real_embed_vec(&p);
        obj.c = -p.norm_squared();
        let mut ball = crate::cplx::RealQuad::zeros(dim);
        ball.a = nalgebra::DMatrix::identity(dim, dim);
        ball.c = -1.0;
        let prob = ConvexQcqp {
            objective: obj,
            constraints: vec![ball],
        };
        let x0 = nalgebra::DVector::zeros(dim);
        let sol = qcqp::solve(&prob, &x0, &SolverCfg::default()).expect("qcqp solve");
        let xc = complex_from_embedding(&sol.x);
        let achieved = -(&xc - &p).norm_squared();
        let ideal = -(p.norm() - 1.0).powi(2);
        worst_qcqp = worst_qcqp.max((achieved - ideal).abs());
    }
    push(
        "qcqp analytic projection",
        worst_qcqp <= 1e-6,
        format!("max gap to closed form = {worst_qcqp:.3e}"),
    );

    entries
}

/// Prints the self-test table; returns true when every check passed.
pub fn cmd_selftest() -> bool {
    let entries = selftest_report(false);
    let mut all = true;
    for e in &entries {
        println!(
            "{} {:<36} {}",
            if e.passed { "PASS" } else { "FAIL" },
            e.name,
            e.detail
        );
        all &= e.passed;
    }
    all
}

const FIG2_GP: &str = "set datafile separator ','\n\
set key top left\n\
set xlabel 'number of UEs on the swept axis'\n\
set ylabel 'mean rate (b/s/Hz)'\n\
plot 'results.csv' using 2:($3==5 && strcol(1) eq 'dl_ues' ? $6 : 1/0) with linespoints title 'DL rate, gamma_U=5 dB', \\\n\
     'results.csv' using 2:($3==10 && strcol(1) eq 'dl_ues' ? $6 : 1/0) with linespoints title 'DL rate, gamma_U=10 dB', \\\n\
     'results.csv' using 2:($3==5 && strcol(1) eq 'ul_ues' ? $8 : 1/0) with linespoints title 'UL rate, gamma_U=5 dB', \\\n\
     'results.csv' using 2:($3==10 && strcol(1) eq 'ul_ues' ? $8 : 1/0) with linespoints title 'UL rate, gamma_U=10 dB'\n";

const FIG3_GP: &str = "set datafile separator ','\n\
set key top right\n\
set xlabel 'BS-RIS horizontal distance d (m)'\n\
set ylabel 'mean DL sum rate (b/s/Hz)'\n\
plot 'results.csv' using 2:($1==8 ? $5 : 1/0) with linespoints title 'K=8', \\\n\
     'results.csv' using 2:($1==16 ? $5 : 1/0) with linespoints title 'K=16', \\\n\
     'results.csv' using 2:($1==32 ? $5 : 1/0) with linespoints title 'K=32'\n";

const FIG4_GP: &str = "set datafile separator ','\n\
set style data histograms\n\
set style fill solid 0.6\n\
set ylabel 'mean sum rate (b/s/Hz)'\n\
plot 'summary.csv' every ::1 using 2:xtic(1) title 'scheme mean'\n";

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sizes = Sizes {
            n_t: 4,
            n_r: 4,
            k: 4,
            m: 2,
            n: 2,
        };
        cfg.drops = 3;
        cfg.fris.t_max = 2;
        // Low UL target so small random drops stay feasible.
        cfg.fris.gamma_u_db = Some(-10.0);
        cfg
    }

    #[test]
    fn config_roundtrip_and_hash_stability() {
        let cfg = tiny_config();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.hash(), back.hash());
        // A config change must change the hash.
        let mut other = tiny_config();
        other.seed += 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sizes.k, 16);
    }

    #[test]
    fn parallel_map_matches_serial_and_is_order_stable() {
        let serial = parallel_map(40, 1, |i| i * i);
        let parallel = parallel_map(40, 4, |i| i * i);
        assert_eq!(serial, parallel);
    }

    #[test]
    fn drop_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..1000 {
            assert!(seen.insert(drop_seed(7, i)));
        }
    }

    #[test]
    fn cmd_run_is_deterministic_across_workers() {
        let dir1 = tempdir().unwrap();
        let dir2 = tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.workers = 1;
        cmd_run(&cfg, dir1.path()).unwrap();
        cfg.workers = 3;
        cmd_run(&cfg, dir2.path()).unwrap();
        let a = std::fs::read_to_string(dir1.path().join("results.csv")).unwrap();
        let b = std::fs::read_to_string(dir2.path().join("results.csv")).unwrap();
        // Everything but the wall-clock column must be bit-identical.
        let strip = |text: &str| -> Vec<Vec<String>> {
            text.lines()
                .map(|l| {
                    l.split(',')
                        .enumerate()
                        .filter(|(i, _)| *i != 7)
                        .map(|(_, f)| f.to_string())
                        .collect()
                })
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.lines().count() == cfg.drops + 1);
        assert!(dir1.path().join("result.json").exists());
    }

    #[test]
    fn benchmark_rows_are_paired_and_complete() {
        let cfg = tiny_config();
        let dir = tempdir().unwrap();
        let rows = cmd_benchmark(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), cfg.drops);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.seed, drop_seed(cfg.seed, i as u64));
            assert!(r.hd_ris_mrc.is_finite() && r.hd_no_ris.is_finite());
        }
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("fig4.gp").exists());
    }

    #[test]
    fn selftest_passes_clean_and_fails_under_mutation() {
        let clean = selftest_report(false);
        assert!(clean.iter().all(|e| e.passed), "clean selftest failed: {clean:?}");
        let mutated = selftest_report(true);
        assert!(
            mutated.iter().any(|e| !e.passed),
            "sign-flip mutation not detected"
        );
    }

    #[test]
    fn workers_resolution_precedence() {
        assert_eq!(resolve_workers(Some(3)), 3);
        std::env::set_var("RIS_FD_OPT_WORKERS", "5");
        assert_eq!(resolve_workers(None), 5);
        assert_eq!(resolve_workers(Some(0)), 5);
        std::env::remove_var("RIS_FD_OPT_WORKERS");
        assert_eq!(resolve_workers(None), 1);
    }
}
