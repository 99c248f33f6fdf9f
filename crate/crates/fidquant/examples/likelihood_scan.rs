//! Scan the log marginal likelihood along single parameters around the
//! truth, printing small ASCII profiles. The noise-variance profile is
//! unimodal; a frequency profile at low SNR grows extra local maxima,
//! which is why the fit needs a global optimizer.
//!
//! Run with: cargo run --example likelihood_scan

use fidquant::harness::{likelihood_scan, snr_to_noise_v, FtParams};
use fidquant::model::{
    ppm_to_rad_s, simulate_fid, AcquisitionConfig, NoiseModel, NuisanceParams,
};
use fidquant::species::{Species, SpeciesLine, SpeciesTable};

fn profile(rows: &[(f64, f64)], label: &str) {
    let best = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let worst = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    println!("\n{label}:");
    for (x, ll) in rows {
        let frac = (ll - worst) / (best - worst + f64::MIN_POSITIVE);
        let bar = "#".repeat(1 + (40.0 * frac) as usize);
        let mark = if *ll == best { " <- max" } else { "" };
        println!("  {x:+12.4e}  {bar}{mark}");
    }
}

fn main() -> anyhow::Result<()> {
    let table = SpeciesTable::new(vec![Species {
        name: "solo".into(),
        lines: vec![SpeciesLine { freq_ppm: 100.0, weight: 1.0 }],
    }])?;
    let acq = AcquisitionConfig::default();
    let psi = NuisanceParams::at_table(&table, &acq, 0.0, 0.0, 22.0);
    let params = FtParams::default();

    // Noise variance profile at SNR 10: one peak near the true value.
    let v = snr_to_noise_v(10.0, &[1.0], &table, &acq, &params, 22.0)?;
    let fid = simulate_fid(&[1.0], &psi, &NoiseModel::new(v)?, &table, &acq, 5)?;
    let grid: Vec<f64> = (-8..=8).map(|k| v * 10f64.powf(k as f64 / 4.0)).collect();
    let rows = likelihood_scan(&fid, &table, &psi, v, "v", &grid)?;
    profile(&rows, &format!("log likelihood vs noise variance (truth {v:.3e})"));

    // Frequency profiles: noise bumps in the tails grow into competing
    // maxima as the SNR drops, eventually displacing the true peak.
    let center = psi.freqs_rad_s[0];
    let half = ppm_to_rad_s(0.5, acq.ref_freq_hz_per_ppm);
    let grid: Vec<f64> = (0..41).map(|k| center - half + 2.0 * half * k as f64 / 40.0).collect();
    for snr in [10.0, 2.0] {
        let v = snr_to_noise_v(snr, &[1.0], &table, &acq, &params, 22.0)?;
        let fid = simulate_fid(&[1.0], &psi, &NoiseModel::new(v)?, &table, &acq, 5)?;
        let rows = likelihood_scan(&fid, &table, &psi, v, "freq[0]", &grid)?;
        let maxima = (1..rows.len() - 1)
            .filter(|&i| rows[i].1 > rows[i - 1].1 && rows[i].1 > rows[i + 1].1)
            .count();
        profile(
            &rows,
            &format!("log likelihood vs line frequency at SNR {snr} ({maxima} local maxima)"),
        );
    }
    Ok(())
}
