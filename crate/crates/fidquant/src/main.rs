//! Command-line front end: simulate records, fit them with the Bayesian
//! pipeline, quantify via the transform pipeline, batch sweeps, and scan
//! likelihood surfaces. All file outputs are byte-identical across reruns
//! with the same seed; timings and progress go to the log on stderr.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fidquant::ft::{
    baseline_correct, default_windows, estimate_sigma_s, ft_quantify, integrate_peaks,
    preprocess, DEFAULT_BASELINE_ORDER, DEFAULT_LINE_BROADENING_HZ, DEFAULT_ZEROFILL,
};
use fidquant::harness::{likelihood_scan, read_sweep_config, rows_csv, run_sweep, snr_to_noise_v, FtParams};
use fidquant::io::{self, WeightColumn};
use fidquant::model::{simulate_fid, AcquisitionConfig, NoiseModel, NuisanceParams};
use fidquant::quantify::{fit, FitOptions, DEFAULT_SAMPLES};
use fidquant::species::SpeciesTable;

#[derive(Parser)]
#[command(
    name = "fidquant",
    version,
    about = "Bayesian quantification of chemical concentrations from NMR free-induction decays"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn parse_weights(s: &str) -> std::result::Result<WeightColumn, String> {
    match s {
        "theoretical" => Ok(WeightColumn::Theoretical),
        "calibrated" => Ok(WeightColumn::Calibrated),
        other => Err(format!("unknown weight column '{other}'; use theoretical or calibrated")),
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a noisy record for a species mixture at a target SNR.
    Simulate {
        /// Species table JSON path, or "bundled".
        #[arg(long)]
        species: String,
        /// Comma-separated mixture fractions in table order, summing to 1.
        #[arg(long)]
        mix: String,
        /// Target spectral SNR of the weakest peak at zero phase and dead time.
        #[arg(long)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output FID CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Global phase of the simulated truth, rad.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Receiver dead time of the simulated truth, s.
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Decay rate of the simulated truth, 1/s.
        #[arg(long, default_value_t = 22.0)]
        alpha: f64,
        /// Number of complex samples to record.
        #[arg(long, default_value_t = AcquisitionConfig::default().n_samples)]
        n_points: usize,
        /// Dwell time between samples, s.
        #[arg(long, default_value_t = AcquisitionConfig::default().dt_s)]
        dwell: f64,
        /// Which intensity-weight column of the table to use.
        #[arg(long, value_parser = parse_weights, default_value = "theoretical")]
        weights: WeightColumn,
    },
    /// Fit a record with the Bayesian pipeline and write the result as JSON.
    Fit {
        /// Input FID CSV path.
        #[arg(long)]
        fid: PathBuf,
        /// Species table JSON path, or "bundled".
        #[arg(long)]
        species: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Posterior draws used for the concentration summaries.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Annealing restarts; defaults to the library schedule.
        #[arg(long)]
        restarts: Option<usize>,
        /// Annealing steps per temperature; defaults to 20 per dimension.
        #[arg(long)]
        steps_per_temp: Option<usize>,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_weights, default_value = "theoretical")]
        weights: WeightColumn,
    },
    /// Quantify a record with the transform pipeline and write JSON.
    FtAnalyze {
        /// Input FID CSV path.
        #[arg(long)]
        fid: PathBuf,
        /// Species table JSON path, or "bundled".
        #[arg(long)]
        species: String,
        /// Exponential line broadening, Hz.
        #[arg(long, default_value_t = DEFAULT_LINE_BROADENING_HZ)]
        lb_hz: f64,
        /// Zero-fill length.
        #[arg(long, default_value_t = DEFAULT_ZEROFILL)]
        zerofill: usize,
        /// Baseline polynomial order.
        #[arg(long, default_value_t = DEFAULT_BASELINE_ORDER)]
        poly_order: usize,
        /// Windows JSON path; defaults to +/-0.5 ppm around every line.
        #[arg(long)]
        windows: Option<PathBuf>,
        /// Zero-order phase correction, rad.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// First-order phase correction (dead time), s.
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Signal-free region "lo:hi" in ppm for the noise estimate.
        #[arg(long, default_value = "-150:-50")]
        noise_region: String,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of the processed spectrum (ppm,intensity).
        #[arg(long)]
        spectrum_out: Option<PathBuf>,
        #[arg(long, value_parser = parse_weights, default_value = "theoretical")]
        weights: WeightColumn,
    },
    /// Run a configured sweep and write its tables into a directory.
    Sweep {
        /// Sweep configuration JSON path.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan the log marginal likelihood along one parameter.
    Scan {
        /// Input FID CSV path.
        #[arg(long)]
        fid: PathBuf,
        /// Species table JSON path, or "bundled".
        #[arg(long)]
        species: String,
        /// Dimension to scan: freq[i], theta, tau, alpha or v.
        #[arg(long)]
        dim: String,
        /// Grid "lo:hi:n" (inclusive endpoints).
        #[arg(long)]
        grid: String,
        /// Phase held at truth while scanning other dimensions, rad.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Dead time held at truth, s.
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Decay rate held at truth, 1/s.
        #[arg(long, default_value_t = 22.0)]
        alpha: f64,
        /// Noise variance held at truth; defaults to the record's tail variance.
        #[arg(long)]
        v: Option<f64>,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_weights, default_value = "theoretical")]
        weights: WeightColumn,
    },
}

fn parse_mix(s: &str, table: &SpeciesTable) -> Result<Vec<f64>> {
    let mix: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad mixture fraction '{p}'")))
        .collect::<Result<_>>()?;
    if mix.len() != table.n_species() {
        bail!("mixture has {} fractions but the table has {} species", mix.len(), table.n_species());
    }
    if mix.iter().any(|f| !f.is_finite() || *f < 0.0) {
        bail!("mixture fractions must be finite and >= 0");
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        bail!("mixture fractions must sum to 1, got {total}");
    }
    Ok(mix)
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        bail!("{what} must look like lo:hi, got '{s}'");
    }
    let lo = parts[0].parse::<f64>().with_context(|| format!("bad {what} bound '{}'", parts[0]))?;
    let hi = parts[1].parse::<f64>().with_context(|| format!("bad {what} bound '{}'", parts[1]))?;
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must look like lo:hi:n, got '{s}'");
    }
    let lo = parts[0].parse::<f64>().with_context(|| format!("bad grid bound '{}'", parts[0]))?;
    let hi = parts[1].parse::<f64>().with_context(|| format!("bad grid bound '{}'", parts[1]))?;
    let n = parts[2].parse::<usize>().with_context(|| format!("bad grid count '{}'", parts[2]))?;
    if n == 0 {
        bail!("grid needs at least one point");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().cmd {
        Cmd::Simulate { species, mix, snr, seed, out, theta, tau, alpha, n_points, dwell, weights } => {
            let table = io::read_species(&species, weights)?;
            let mix = parse_mix(&mix, &table)?;
            let acq =
                AcquisitionConfig { n_samples: n_points, dt_s: dwell, ..AcquisitionConfig::default() };
            let v = snr_to_noise_v(snr, &mix, &table, &acq, &FtParams::default(), alpha)?;
            let psi = NuisanceParams::at_table(&table, &acq, theta, tau, alpha);
            let fid = simulate_fid(&mix, &psi, &NoiseModel::new(v)?, &table, &acq, seed)?;
            io::write_fid(&fid, &out)?;
            println!("wrote {} samples to {} (noise variance {v:e})", fid.n_real(), out.display());
        }
        Cmd::Fit { fid, species, seed, samples, restarts, steps_per_temp, out, weights } => {
            let record = io::read_fid(&fid)?;
            let table = io::read_species(&species, weights)?;
            let mut schedule = fidquant::optimizer::AnnealSchedule::default();
            if let Some(r) = restarts {
                schedule.restarts = r;
            }
            schedule.steps_per_temp = steps_per_temp.or(schedule.steps_per_temp);
            let opts = FitOptions { seed, n_samples: samples, schedule, ..FitOptions::default() };
            let result = fit(&record, &table, &opts)?;
            io::write_json(&result, &out)?;
            for sp in &result.species {
                println!(
                    "{}: {:.4} +/- {:.4} (95% CI [{:.4}, {:.4}])",
                    sp.name, sp.mean, sp.sd, sp.ci95_lo, sp.ci95_hi
                );
            }
            println!("log evidence {:.4}, wrote {}", result.log_evidence, out.display());
        }
        Cmd::FtAnalyze {
            fid,
            species,
            lb_hz,
            zerofill,
            poly_order,
            windows,
            theta,
            tau,
            noise_region,
            out,
            spectrum_out,
            weights,
        } => {
            let record = io::read_fid(&fid)?;
            let table = io::read_species(&species, weights)?;
            let windows = match windows {
                Some(path) => io::read_windows(path)?,
                None => default_windows(&table, fidquant::ft::DEFAULT_WINDOW_HALF_PPM)?,
            };
            let region = parse_pair(&noise_region, "noise region")?;
            let spec = preprocess(&record, lb_hz, zerofill, theta, tau)?;
            let spec = baseline_correct(&spec, poly_order, &windows)?;
            let sigma = estimate_sigma_s(&spec, region, &windows)?;
            let integrals = integrate_peaks(&spec, &windows)?;
            let result = ft_quantify(&integrals, &windows, &table, sigma)?;
            io::write_json(&result, &out)?;
            if let Some(path) = spectrum_out {
                let mut csv = String::from("ppm,intensity\n");
                for (p, y) in spec.freq_axis_ppm.iter().zip(&spec.intensity) {
                    csv.push_str(&format!("{p},{y}\n"));
                }
                std::fs::write(&path, csv)
                    .with_context(|| format!("writing spectrum to {}", path.display()))?;
            }
            for (name, (c, e)) in result
                .species
                .iter()
                .zip(result.concentrations.iter().zip(&result.errors))
            {
                println!("{name}: {c:.4} +/- {e:.4}");
            }
            println!("weakest peak SNR {:.1}, wrote {}", result.worst_peak_snr(), out.display());
        }
        Cmd::Sweep { config, out } => {
            let cfg = read_sweep_config(&config)?;
            let summary = run_sweep(&cfg, &out)?;
            print!("{}", rows_csv(&summary.rows));
            println!(
                "wrote table2.csv, fig_compare.csv, manifest.json to {} ({} runs failed)",
                out.display(),
                summary.failures.len()
            );
        }
        Cmd::Scan { fid, species, dim, grid, theta, tau, alpha, v, out, weights } => {
            let record = io::read_fid(&fid)?;
            let table = io::read_species(&species, weights)?;
            let grid = parse_grid(&grid)?;
            let psi = NuisanceParams::at_table(&table, &record.acq, theta, tau, alpha);
            let v = v.unwrap_or_else(|| record.tail_variance(0.1));
            let rows = likelihood_scan(&record, &table, &psi, v, &dim, &grid)?;
            let mut csv = String::from("value,loglik\n");
            for (x, ll) in rows {
                csv.push_str(&format!("{x},{ll}\n"));
            }
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .with_context(|| format!("writing scan to {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
