//! The conventional transform pipeline end to end: apodize, zero-fill,
//! transform, phase, baseline-correct, integrate windows, and convert the
//! integrals into concentrations with propagated error bars. The same
//! mixture is processed twice — recorded with and without a receiver dead
//! time — to show how windowed integration loses accuracy once the delay
//! rotates neighboring line tails into the windows, even though the phase
//! correction itself is exact.
//!
//! Run with: cargo run --example ft_pipeline

use fidquant::ft::{
    baseline_correct, default_windows, estimate_sigma_s, ft_quantify, integrate_peaks, preprocess,
    FtQuantResult,
};
use fidquant::harness::{snr_to_noise_v, FtParams};
use fidquant::io::{read_species, WeightColumn, BUNDLED_SPECIES_NAME};
use fidquant::model::{simulate_fid, AcquisitionConfig, NoiseModel, NuisanceParams};

fn main() -> anyhow::Result<()> {
    let table = read_species(BUNDLED_SPECIES_NAME, WeightColumn::Theoretical)?;
    let acq = AcquisitionConfig::default();
    let params = FtParams::default();
    let truth = [0.3, 0.7];
    let theta = 0.4;
    let v = snr_to_noise_v(26.0, &truth, &table, &acq, &params, 22.0)?;

    // Quantify a 30/70 record observed with phase `theta` and dead time
    // `tau`, both known exactly to the pipeline.
    let quantify = |tau: f64, verbose: bool| -> anyhow::Result<FtQuantResult> {
        let psi = NuisanceParams::at_table(&table, &acq, theta, tau, 22.0);
        let fid = simulate_fid(&truth, &psi, &NoiseModel::new(v)?, &table, &acq, 7)?;
        let spectrum = preprocess(&fid, params.lb_hz, params.zerofill_to, theta, tau)?;
        let windows = default_windows(&table, params.window_half_ppm)?;
        let spectrum = baseline_correct(&spectrum, params.poly_order, &windows)?;
        let sigma = estimate_sigma_s(&spectrum, params.noise_region_ppm, &windows)?;
        let integrals = integrate_peaks(&spectrum, &windows)?;
        let result = ft_quantify(&integrals, &windows, &table, sigma)?;
        if verbose {
            let (lo, hi) = spectrum.axis_range_ppm();
            println!(
                "spectrum: {} bins over [{lo:.1}, {hi:.1}] ppm, noise level {sigma:.3}",
                spectrum.intensity.len()
            );
            println!("per-window integrals and SNRs:");
            for ((w, a), snr) in windows.iter().zip(&result.peak_areas).zip(&result.peak_snrs) {
                println!(
                    "  {:12} line {} [{:7.2}, {:7.2}] ppm: area {a:10.1}, SNR {snr:7.1}",
                    w.species, w.line_index, w.lo_ppm, w.hi_ppm
                );
            }
        }
        Ok(result)
    };

    println!("truth: 2-Butanone 0.3, Cyclohexane 0.7, weakest peak at SNR 26\n");
    let clean = quantify(0.0, true)?;
    println!("\nconcentrations without dead time:");
    for (name, (c, e)) in clean.species.iter().zip(clean.concentrations.iter().zip(&clean.errors)) {
        println!("  {name:12} {c:.4} +/- {e:.4}");
    }

    let delayed = quantify(2e-4, false)?;
    println!("\nconcentrations with a 0.2 ms dead time (phase correction still exact):");
    for (name, (c, e)) in
        delayed.species.iter().zip(delayed.concentrations.iter().zip(&delayed.errors))
    {
        println!("  {name:12} {c:.4} +/- {e:.4}");
    }
    println!(
        "\nthe delay pushes the estimate {:.1} error bars from the truth: the strong\n\
         solvent line's dispersive tail, rotated by the frequency-dependent phase,\n\
         leaks into the weak peaks' windows and integration cannot remove it",
        (delayed.concentrations[0] - truth[0]).abs() / delayed.errors[0]
    );
    Ok(())
}
