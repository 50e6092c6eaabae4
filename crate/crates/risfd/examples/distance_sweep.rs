//! Miniature RIS-placement sweep: mean DL sum rate versus the BS-RIS
//! distance, written as CSV plus a gnuplot script to a temp directory.

use risfd::experiment::{cmd_sweep_distance, ExperimentConfig};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.drops = 3;
    cfg.sizes.k = 8;
    cfg.fris.t_max = 5;

    let out = std::env::temp_dir().join("risfd_distance_sweep");
    cmd_sweep_distance(&cfg, &out).expect("sweep");
    let csv = std::fs::read_to_string(out.join("results.csv")).expect("csv");
    println!("{csv}");
    println!("wrote {} and fig3.gp", out.join("results.csv").display());
}
