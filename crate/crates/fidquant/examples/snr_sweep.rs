//! A miniature sweep: simulate repeated mixtures at two SNR levels, run
//! both the Bayesian and transform pipelines on identical records, and
//! aggregate estimates, intervals and coverage into comparison tables.
//! Output files land in a temporary directory and are byte-identical
//! across reruns with the same seed.
//!
//! Run with: cargo run --example snr_sweep

use fidquant::harness::{run_sweep, SweepConfig};
use fidquant::model::AcquisitionConfig;
use fidquant::optimizer::AnnealSchedule;

fn main() -> anyhow::Result<()> {
    let cfg = SweepConfig {
        snr_targets: vec![20.0, 6.0],
        repetitions: 3,
        freq_jitter_ppm: 0.5,
        // Scaled down from the library defaults so the example finishes in
        // about a minute; a production sweep would keep the full record
        // length, 30 repetitions and a heavier anneal.
        acq: AcquisitionConfig { n_samples: 512, ..AcquisitionConfig::default() },
        n_samples: 2000,
        schedule: AnnealSchedule {
            restarts: 2,
            steps_per_temp: Some(10),
            cooling_factor: 0.8,
            ..AnnealSchedule::default()
        },
        band_half_width: 0.05,
        ..SweepConfig::default()
    };

    let out_dir = std::env::temp_dir().join("fidquant_example_sweep");
    let summary = run_sweep(&cfg, &out_dir)?;

    println!("tracked species: {} (truth {})", cfg.mixture[0].species, cfg.mixture[0].fraction);
    println!("\n{:>6} {:>6} {:>6} {:>10} {:>8} {:>8} {:>8}", "snr", "pipe", "ok", "ci95 pct", "cov68", "cov95", "in-band");
    for row in &summary.rows {
        println!(
            "{:>6} {:>6} {:>6} {:>10.3} {:>8.2} {:>8.2} {:>8.2}",
            row.snr_target, row.pipeline, row.n_ok, row.ci95_half_pct, row.cov68, row.cov95,
            row.band_frac
        );
    }
    println!("\nper-run estimates:");
    for r in &summary.records {
        println!(
            "  snr {:>4} rep {} {:>5}: {:.4} in [{:.4}, {:.4}]",
            r.snr_target, r.repetition, r.pipeline, r.estimate, r.lo_2sd, r.hi_2sd
        );
    }
    println!(
        "\nwrote table2.csv, fig_compare.csv, manifest.json to {}",
        out_dir.display()
    );
    Ok(())
}
