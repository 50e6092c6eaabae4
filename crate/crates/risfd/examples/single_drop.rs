//! Runs the full optimizer on one seeded drop at the default scenario and
//! prints the per-iteration rate trajectory.

use risfd::channel::{generate_drop, RicianParams, ScenarioGeometry, Sizes};
use risfd::fris::{run_fris, FrisConfig};
use risfd::system::PowerConfig;

fn main() {
    let sizes = Sizes {
        n_t: 6,
        n_r: 6,
        k: 16,
        m: 4,
        n: 4,
    };
    let geom = ScenarioGeometry::default();
    let params = RicianParams::default();
    let power = PowerConfig::default();
    let cfg = FrisConfig::default();
    let seed = 42;

    let ch = generate_drop(&geom, &sizes, &params, seed).expect("channel drop");
    let start = std::time::Instant::now();
    match run_fris(&ch, &power, &cfg, seed) {
        Ok(res) => {
            println!(
                "status {:?}, initial DL sum rate {:.4} b/s/Hz, best {:.4} b/s/Hz",
                res.status, res.initial_dl_sum_rate, res.best_dl_sum_rate
            );
            for (i, rec) in res.history.iter().enumerate() {
                println!(
                    "iter {i:2}: DL {:.4}  UL {:.4}  feasible {}  bs_iters {}  ris_iters {}",
                    rec.dl_sum_rate,
                    rec.ul_aggregate_rate,
                    rec.feasible,
                    rec.bs_iterations,
                    rec.ris_iterations
                );
            }
            println!(
                "final UL aggregate SINR {:.2} dB in {:.1} s",
                10.0 * res.final_rates.ul_aggregate_sinr.log10(),
                start.elapsed().as_secs_f64()
            );
        }
        Err(e) => println!("drop not solvable: {e}"),
    }
}
