//! Synthetic experiment harness: noise calibration against a target
//! spectral signal-to-noise ratio, likelihood-surface scans, and seeded
//! sweep batches that run the Bayesian and transform pipelines on
//! bit-identical simulated records and aggregate comparison tables.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ft::{
    baseline_correct, default_windows, estimate_sigma_s, ft_quantify, integrate_peaks,
    preprocess, windows_at, Spectrum, DEFAULT_BASELINE_ORDER, DEFAULT_LINE_BROADENING_HZ,
    DEFAULT_WINDOW_HALF_PPM, DEFAULT_ZEROFILL,
};
use crate::inference::{log_marginal_likelihood, vague_gamma, AmplitudePrior};
use crate::model::{
    noise_free_fid, ppm_to_rad_s, simulate_fid, AcquisitionConfig, FidRecord, NoiseModel,
    NuisanceParams,
};
use crate::optimizer::AnnealSchedule;
use crate::quantify::{fit, FitOptions, DEFAULT_SAMPLES};
use crate::seed;
use crate::species::SpeciesTable;

/// Transform-pipeline settings used by sweeps and SNR calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtParams {
    pub lb_hz: f64,
    pub zerofill_to: usize,
    pub poly_order: usize,
    pub window_half_ppm: f64,
    /// Signal-free region used to estimate the spectral noise level.
    pub noise_region_ppm: (f64, f64),
}

impl Default for FtParams {
    fn default() -> Self {
        FtParams {
            lb_hz: DEFAULT_LINE_BROADENING_HZ,
            zerofill_to: DEFAULT_ZEROFILL,
            poly_order: DEFAULT_BASELINE_ORDER,
            window_half_ppm: DEFAULT_WINDOW_HALF_PPM,
            noise_region_ppm: (-150.0, -50.0),
        }
    }
}

/// Which estimation pipelines a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineChoice {
    Bayes,
    Ft,
    Both,
}

impl PipelineChoice {
    fn runs_bayes(self) -> bool {
        matches!(self, PipelineChoice::Bayes | PipelineChoice::Both)
    }
    fn runs_ft(self) -> bool {
        matches!(self, PipelineChoice::Ft | PipelineChoice::Both)
    }
}

/// One species of the simulated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureEntry {
    pub species: String,
    pub fraction: f64,
}

/// Configuration of a seeded sweep over target SNRs and repetitions.
///
/// The first mixture entry is the tracked species whose concentration the
/// summary tables report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub mixture: Vec<MixtureEntry>,
    pub snr_targets: Vec<f64>,
    pub repetitions: usize,
    /// Half-width of the uniform per-line shift jitter, ppm.
    pub freq_jitter_ppm: f64,
    pub seed: u64,
    pub which: PipelineChoice,
    /// Species file path, or "bundled" for the built-in table.
    pub species_file: String,
    pub weights: crate::io::WeightColumn,
    pub acq: AcquisitionConfig,
    /// Decay rate of the simulated truth, 1/s.
    pub alpha_truth_per_s: f64,
    /// True dead times are drawn uniformly from `[0, tau_max_s]`.
    pub tau_max_s: f64,
    /// Posterior draws per Bayesian fit.
    pub n_samples: usize,
    pub schedule: AnnealSchedule,
    pub ft_params: FtParams,
    /// Half-width of the "within band" acceptance region around the
    /// tracked species' true fraction.
    pub band_half_width: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mixture: vec![
                MixtureEntry { species: "2-Butanone".into(), fraction: 0.3 },
                MixtureEntry { species: "Cyclohexane".into(), fraction: 0.7 },
            ],
            snr_targets: vec![9.3, 5.9, 4.2],
            repetitions: 30,
            freq_jitter_ppm: 3.0,
            seed: 0,
            which: PipelineChoice::Both,
            species_file: crate::io::BUNDLED_SPECIES_NAME.into(),
            weights: crate::io::WeightColumn::Theoretical,
            acq: AcquisitionConfig::default(),
            alpha_truth_per_s: 22.0,
            tau_max_s: 1e-3,
            n_samples: DEFAULT_SAMPLES,
            schedule: AnnealSchedule::default(),
            ft_params: FtParams::default(),
            band_half_width: 0.03,
        }
    }
}

impl SweepConfig {
    /// Checks the config against the species table it will run on and
    /// returns the amplitude vector in table order.
    fn amplitudes(&self, table: &SpeciesTable) -> Result<Vec<f64>> {
        if self.repetitions == 0 {
            return Err(Error::invalid("a sweep needs at least one repetition"));
        }
        if self.snr_targets.is_empty() {
            return Err(Error::invalid("a sweep needs at least one SNR target"));
        }
        if self.snr_targets.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("SNR targets must be finite and > 0"));
        }
        if !(self.freq_jitter_ppm >= 0.0) || !self.freq_jitter_ppm.is_finite() {
            return Err(Error::invalid("shift jitter must be finite and >= 0 ppm"));
        }
        if !(self.tau_max_s >= 0.0) || self.tau_max_s > 128.0 * self.acq.dt_s {
            return Err(Error::invalid(format!(
                "tau_max_s must lie in the searched range [0, {}]",
                128.0 * self.acq.dt_s
            )));
        }
        if !(self.alpha_truth_per_s >= 1.0 && self.alpha_truth_per_s <= 200.0) {
            return Err(Error::invalid(
                "alpha_truth_per_s must lie in the searched range [1, 200]",
            ));
        }
        if !(self.band_half_width > 0.0) {
            return Err(Error::invalid("band_half_width must be > 0"));
        }
        let total: f64 = self.mixture.iter().map(|m| m.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture fractions must sum to 1, got {total}")));
        }
        if self.mixture.len() != table.n_species() {
            return Err(Error::Dim {
                what: "mixture entries vs table species",
                expected: table.n_species(),
                got: self.mixture.len(),
            });
        }
        let mut a = vec![f64::NAN; table.n_species()];
        for entry in &self.mixture {
            if !(entry.fraction >= 0.0) || !entry.fraction.is_finite() {
                return Err(Error::invalid(format!(
                    "fraction for '{}' must be finite and >= 0",
                    entry.species
                )));
            }
            let j = table.index_of(&entry.species).ok_or_else(|| {
                Error::invalid(format!("mixture species '{}' is not in the table", entry.species))
            })?;
            if !a[j].is_nan() {
                return Err(Error::invalid(format!("duplicate mixture species '{}'", entry.species)));
            }
            a[j] = entry.fraction;
        }
        Ok(a)
    }
}

/// Reads a sweep configuration from JSON; missing fields take defaults.
pub fn read_sweep_config(path: impl AsRef<Path>) -> Result<SweepConfig> {
    crate::io::read_json(path)
}

/// Sum of squared apodization weights over the record's grid — the factor
/// that maps the per-sample noise variance `v` to the spectral per-bin
/// noise variance `sigma_s^2 = v * sum(w^2)`.
fn apod_energy(times: &[f64], lb_hz: f64) -> f64 {
    times
        .iter()
        .map(|&t| (-2.0 * std::f64::consts::PI * lb_hz * t).exp())
        .sum()
}

/// Tallest bin inside each window, in window order.
fn window_heights(spec: &Spectrum, windows: &[crate::ft::PeakWindow]) -> Result<Vec<f64>> {
    windows
        .iter()
        .map(|w| {
            let mut best = f64::NEG_INFINITY;
            for (&p, &y) in spec.freq_axis_ppm.iter().zip(&spec.intensity) {
                if w.lo_ppm <= p && p <= w.hi_ppm && y > best {
                    best = y;
                }
            }
            if best.is_finite() {
                Ok(best)
            } else {
                Err(Error::invalid(format!(
                    "window [{}, {}] contains no bins",
                    w.lo_ppm, w.hi_ppm
                )))
            }
        })
        .collect()
}

/// Noise variance `v` that makes the weakest peak's spectral height equal
/// `target_snr` times the spectral noise level.
///
/// The quoted SNR convention is peak height over noise level with no
/// intensity-weight division, evaluated at the tabulated (unjittered)
/// frequencies with zero phase and dead time. Height scales linearly with
/// the mixture and the noise level as `sqrt(v * sum(w^2))`, so the target
/// inverts in closed form from one noise-free simulation.
pub fn snr_to_noise_v(
    target_snr: f64,
    mixture: &[f64],
    table: &SpeciesTable,
    acq: &AcquisitionConfig,
    params: &FtParams,
    alpha_truth_per_s: f64,
) -> Result<f64> {
    if !(target_snr > 0.0) || !target_snr.is_finite() {
        return Err(Error::invalid(format!("target SNR must be > 0, got {target_snr}")));
    }
    let psi = NuisanceParams::at_table(table, acq, 0.0, 0.0, alpha_truth_per_s);
    let fid = noise_free_fid(mixture, &psi, table, acq)?;
    let spec = preprocess(&fid, params.lb_hz, params.zerofill_to, 0.0, 0.0)?;
    let windows = default_windows(table, params.window_half_ppm)?;
    let heights = window_heights(&spec, &windows)?;
    let weakest = heights.iter().copied().fold(f64::INFINITY, f64::min);
    if !(weakest > 0.0) {
        return Err(Error::invalid(
            "noise-free spectrum has a non-positive peak height; cannot set an SNR",
        ));
    }
    let sigma_needed = weakest / target_snr;
    Ok(sigma_needed * sigma_needed / apod_energy(&fid.times_real, params.lb_hz))
}

/// Measured SNR of a record: weakest window peak height over the estimated
/// spectral noise level, with windows centered on `centers_ppm` and the
/// true phase and dead time supplied to the transform.
pub fn measure_snr(
    fid: &FidRecord,
    table: &SpeciesTable,
    centers_ppm: &[f64],
    params: &FtParams,
    theta_rad: f64,
    tau_s: f64,
) -> Result<f64> {
    let spec = preprocess(fid, params.lb_hz, params.zerofill_to, theta_rad, tau_s)?;
    let windows = windows_at(table, centers_ppm, params.window_half_ppm)?;
    let spec = baseline_correct(&spec, params.poly_order, &windows)?;
    let sigma = estimate_sigma_s(&spec, params.noise_region_ppm, &windows)?;
    if !(sigma > 0.0) {
        return Err(Error::invalid("estimated noise level is zero"));
    }
    let heights = window_heights(&spec, &windows)?;
    Ok(heights.iter().copied().fold(f64::INFINITY, f64::min) / sigma)
}

/// Evaluates the log marginal likelihood along a grid of one parameter,
/// holding all others at the supplied truth. `dim` is one of `freq[i]`,
/// `theta`, `tau`, `alpha`, or `v` (the grid then carries variances).
/// Returns `(grid value, log marginal likelihood)` rows.
pub fn likelihood_scan(
    fid: &FidRecord,
    table: &SpeciesTable,
    psi_truth: &NuisanceParams,
    v_truth: f64,
    dim: &str,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::invalid("scan grid is empty"));
    }
    psi_truth.validate(table)?;
    enum Target {
        Freq(usize),
        Theta,
        Tau,
        Alpha,
        V,
    }
    let target = match dim {
        "theta" => Target::Theta,
        "tau" => Target::Tau,
        "alpha" => Target::Alpha,
        "v" => Target::V,
        other => {
            let idx = other
                .strip_prefix("freq[")
                .and_then(|s| s.strip_suffix(']'))
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown scan dimension '{other}'; use freq[i], theta, tau, alpha or v"
                    ))
                })?;
            if idx >= psi_truth.freqs_rad_s.len() {
                return Err(Error::invalid(format!(
                    "freq[{idx}] out of range; the table has {} lines",
                    psi_truth.freqs_rad_s.len()
                )));
            }
            Target::Freq(idx)
        }
    };

    let gamma = vague_gamma(fid, psi_truth, table)?;
    let prior = AmplitudePrior::isotropic(table.n_species(), gamma);
    grid.iter()
        .map(|&g| {
            let mut psi = psi_truth.clone();
            let mut v = v_truth;
            match target {
                Target::Freq(i) => psi.freqs_rad_s[i] = g,
                Target::Theta => psi.theta_rad = g,
                Target::Tau => psi.tau_s = g,
                Target::Alpha => psi.alpha_per_s = g,
                Target::V => v = g,
            }
            Ok((g, log_marginal_likelihood(fid, &psi, v, &prior, table)?))
        })
        .collect()
}

/// One pipeline's outcome on one simulated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub snr_target: f64,
    pub repetition: usize,
    pub pipeline: String,
    /// True fraction of the tracked species.
    pub truth: f64,
    /// Estimated fraction of the tracked species.
    pub estimate: f64,
    /// Two-sigma interval of the estimate.
    pub lo_2sd: f64,
    pub hi_2sd: f64,
    /// Mean absolute line-position error, ppm (Bayesian runs only).
    pub freq_err_mean_abs_ppm: Option<f64>,
    /// Objective evaluations (Bayesian runs; 0 for the transform).
    pub evaluations: u64,
}

/// Aggregated sweep row for one (SNR target, pipeline) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_target: f64,
    pub pipeline: String,
    pub n_ok: usize,
    pub n_err: usize,
    /// Mean and standard deviation of per-line shift errors, ppm, pooled
    /// over lines and repetitions (Bayesian runs only).
    pub freq_err_mean_ppm: Option<f64>,
    pub freq_err_sd_ppm: Option<f64>,
    /// Pooled mean absolute shift error, ppm (Bayesian runs only).
    pub freq_err_mean_abs_ppm: Option<f64>,
    /// Mean two-sigma half-width of the tracked species' estimate, in
    /// percentage points of concentration.
    pub ci95_half_pct: f64,
    /// Fraction of runs whose one-sigma interval contains the truth.
    pub cov68: f64,
    /// Fraction of runs whose two-sigma interval contains the truth.
    pub cov95: f64,
    /// Fraction of runs whose estimate lies within the acceptance band.
    pub band_frac: f64,
    pub evals_mean: f64,
}

/// Everything a sweep produced, in deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailureNote>,
}

/// A run that errored, with the deterministic error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub snr_target: f64,
    pub repetition: usize,
    pub pipeline: String,
    pub message: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    crate_version: &'static str,
    config: &'a SweepConfig,
    noise_variances: &'a [f64],
    total_runs: usize,
    failed_runs: usize,
    failures: &'a [FailureNote],
}

struct BayesOut {
    estimate: f64,
    sd: f64,
    freq_err: Vec<f64>,
    evals: u64,
}

struct FtOut {
    estimate: f64,
    sd: f64,
}

struct CellOut {
    snr_idx: usize,
    rep: usize,
    bayes: Option<std::result::Result<BayesOut, String>>,
    ft: Option<std::result::Result<FtOut, String>>,
}

/// Draws one repetition's ground truth: per-line shifts jittered uniformly
/// within the configured half-width, phase uniform over a full period, dead
/// time uniform in `[0, tau_max_s]`, decay rate fixed. Draw order: shifts
/// in global line order, then phase, then dead time.
fn draw_truth(cfg: &SweepConfig, table: &SpeciesTable, cell_seed: u64) -> NuisanceParams {
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
    let freqs_rad_s = table
        .freqs_ppm()
        .iter()
        .map(|&ppm| {
            let jitter = cfg.freq_jitter_ppm * (2.0 * rng.random::<f64>() - 1.0);
            ppm_to_rad_s(ppm + jitter, cfg.acq.ref_freq_hz_per_ppm)
        })
        .collect();
    let theta_rad = std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0);
    let tau_s = cfg.tau_max_s * rng.random::<f64>();
    NuisanceParams { freqs_rad_s, theta_rad, tau_s, alpha_per_s: cfg.alpha_truth_per_s }
}

fn run_cell(
    cfg: &SweepConfig,
    table: &SpeciesTable,
    amplitudes: &[f64],
    tracked: usize,
    noise_v: &[f64],
    snr_idx: usize,
    rep: usize,
) -> CellOut {
    let cell_seed = seed::derive(seed::derive(cfg.seed, snr_idx as u64), rep as u64);
    let psi_truth = draw_truth(cfg, table, cell_seed);
    let noise = match NoiseModel::new(noise_v[snr_idx]) {
        Ok(n) => n,
        Err(e) => {
            let msg = e.to_string();
            return CellOut {
                snr_idx,
                rep,
                bayes: cfg.which.runs_bayes().then(|| Err(msg.clone())),
                ft: cfg.which.runs_ft().then(|| Err(msg)),
            };
        }
    };
    let fid = match simulate_fid(
        amplitudes,
        &psi_truth,
        &noise,
        table,
        &cfg.acq,
        seed::derive(cell_seed, 1),
    ) {
        Ok(f) => f,
        Err(e) => {
            let msg = e.to_string();
            return CellOut {
                snr_idx,
                rep,
                bayes: cfg.which.runs_bayes().then(|| Err(msg.clone())),
                ft: cfg.which.runs_ft().then(|| Err(msg)),
            };
        }
    };
    let truth_ppm = psi_truth.freqs_ppm(&cfg.acq);

    let bayes = cfg.which.runs_bayes().then(|| {
        let started = Instant::now();
        let opts = FitOptions {
            seed: seed::derive(cell_seed, 2),
            n_samples: cfg.n_samples,
            schedule: cfg.schedule.clone(),
            truth_freqs_ppm: Some(truth_ppm.clone()),
            ..FitOptions::default()
        };
        let out = fit(&fid, table, &opts).map_err(|e| e.to_string()).map(|q| BayesOut {
            estimate: q.species[tracked].mean,
            sd: q.species[tracked].sd,
            freq_err: q.freq_error_ppm.clone().unwrap_or_default(),
            evals: q.diagnostics.evaluations,
        });
        log::info!(
            "snr {} rep {rep} bayes: {:.2}s",
            cfg.snr_targets[snr_idx],
            started.elapsed().as_secs_f64()
        );
        out
    });

    let ft = cfg.which.runs_ft().then(|| {
        let started = Instant::now();
        let out = (|| -> Result<FtOut> {
            let p = &cfg.ft_params;
            let windows = windows_at(table, &truth_ppm, p.window_half_ppm)?;
            let spec = preprocess(&fid, p.lb_hz, p.zerofill_to, psi_truth.theta_rad, psi_truth.tau_s)?;
            let spec = baseline_correct(&spec, p.poly_order, &windows)?;
            let sigma = estimate_sigma_s(&spec, p.noise_region_ppm, &windows)?;
            let integrals = integrate_peaks(&spec, &windows)?;
            let quant = ft_quantify(&integrals, &windows, table, sigma)?;
            Ok(FtOut { estimate: quant.concentrations[tracked], sd: quant.errors[tracked] })
        })()
        .map_err(|e| e.to_string());
        log::info!(
            "snr {} rep {rep} ft: {:.3}s",
            cfg.snr_targets[snr_idx],
            started.elapsed().as_secs_f64()
        );
        out
    });

    CellOut { snr_idx, rep, bayes, ft }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs the sweep and writes `table2.csv`, `fig_compare.csv` and
/// `manifest.json` into `out_dir`.
///
/// Both pipelines see bit-identical records per (SNR, repetition) cell; the
/// transform additionally receives the true phase, dead time and window
/// centers, which favors it. Output files are byte-identical across reruns
/// of the same config; wall-clock timings go to the log only. Individual
/// run failures are recorded and tolerated up to half of all runs.
pub fn run_sweep(cfg: &SweepConfig, out_dir: impl AsRef<Path>) -> Result<SweepSummary> {
    let out_dir = out_dir.as_ref();
    let table = crate::io::read_species(&cfg.species_file, cfg.weights)?;
    let amplitudes = cfg.amplitudes(&table)?;
    if cfg.n_samples < 2 {
        return Err(Error::invalid("n_samples must be at least 2"));
    }
    let tracked = table
        .index_of(&cfg.mixture[0].species)
        .expect("validated above");
    let truth_frac = cfg.mixture[0].fraction;

    let noise_v: Vec<f64> = cfg
        .snr_targets
        .iter()
        .map(|&snr| {
            snr_to_noise_v(snr, &amplitudes, &table, &cfg.acq, &cfg.ft_params, cfg.alpha_truth_per_s)
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..cfg.snr_targets.len())
        .flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let mut outcomes: Vec<CellOut> = cells
        .par_iter()
        .map(|&(s, r)| run_cell(cfg, &table, &amplitudes, tracked, &noise_v, s, r))
        .collect();
    outcomes.sort_by_key(|c| (c.snr_idx, c.rep));

    // Flatten into per-run records and failures, in deterministic order:
    // by SNR target, then repetition, with the Bayesian run before the
    // transform run within a cell.
    struct Flat {
        snr_idx: usize,
        pipeline: &'static str,
        estimate: f64,
        sd: f64,
        evals: u64,
        freq_err: Option<Vec<f64>>,
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut flats: Vec<Flat> = Vec::new();
    let mut total_runs = 0usize;
    for cell in &outcomes {
        let snr = cfg.snr_targets[cell.snr_idx];
        let mut runs: Vec<(&'static str, std::result::Result<Flat, &String>)> = Vec::new();
        if let Some(b) = &cell.bayes {
            runs.push((
                "bayes",
                b.as_ref().map(|o| Flat {
                    snr_idx: cell.snr_idx,
                    pipeline: "bayes",
                    estimate: o.estimate,
                    sd: o.sd,
                    evals: o.evals,
                    freq_err: Some(o.freq_err.clone()),
                }),
            ));
        }
        if let Some(f) = &cell.ft {
            runs.push((
                "ft",
                f.as_ref().map(|o| Flat {
                    snr_idx: cell.snr_idx,
                    pipeline: "ft",
                    estimate: o.estimate,
                    sd: o.sd,
                    evals: 0,
                    freq_err: None,
                }),
            ));
        }
        for (name, run) in runs {
            total_runs += 1;
            match run {
                Ok(flat) => {
                    records.push(RunRecord {
                        snr_target: snr,
                        repetition: cell.rep,
                        pipeline: name.into(),
                        truth: truth_frac,
                        estimate: flat.estimate,
                        lo_2sd: flat.estimate - 2.0 * flat.sd,
                        hi_2sd: flat.estimate + 2.0 * flat.sd,
                        freq_err_mean_abs_ppm: flat.freq_err.as_ref().map(|errs| {
                            errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len().max(1) as f64
                        }),
                        evaluations: flat.evals,
                    });
                    flats.push(flat);
                }
                Err(message) => {
                    log::warn!("snr {snr} rep {} {name} failed: {message}", cell.rep);
                    failures.push(FailureNote {
                        snr_target: snr,
                        repetition: cell.rep,
                        pipeline: name.into(),
                        message: message.clone(),
                    });
                }
            }
        }
    }
    if failures.len() * 2 > total_runs {
        return Err(Error::invalid(format!(
            "{} of {} sweep runs failed; first error: {}",
            failures.len(),
            total_runs,
            failures[0].message
        )));
    }

    // Aggregate one row per (SNR target, pipeline).
    let mut rows = Vec::new();
    for (snr_idx, &snr) in cfg.snr_targets.iter().enumerate() {
        for name in ["bayes", "ft"] {
            if name == "bayes" && !cfg.which.runs_bayes() {
                continue;
            }
            if name == "ft" && !cfg.which.runs_ft() {
                continue;
            }
            let ok: Vec<&Flat> = flats
                .iter()
                .filter(|f| f.snr_idx == snr_idx && f.pipeline == name)
                .collect();
            let n_err = failures
                .iter()
                .filter(|f| f.snr_target == snr && f.pipeline == name)
                .count();
            let n_ok = ok.len();
            let pooled: Vec<f64> = ok
                .iter()
                .filter_map(|f| f.freq_err.as_ref())
                .flatten()
                .copied()
                .collect();
            let (freq_err_mean_ppm, freq_err_sd_ppm, freq_err_mean_abs_ppm) = if pooled.is_empty()
            {
                (None, None, None)
            } else {
                let (m, s) = mean_sd(&pooled);
                let abs = pooled.iter().map(|e| e.abs()).sum::<f64>() / pooled.len() as f64;
                (Some(m), Some(s), Some(abs))
            };
            let inv = |num: usize| if n_ok == 0 { f64::NAN } else { num as f64 / n_ok as f64 };
            let cov68 = inv(ok
                .iter()
                .filter(|f| (truth_frac - f.estimate).abs() <= f.sd)
                .count());
            let cov95 = inv(ok
                .iter()
                .filter(|f| (truth_frac - f.estimate).abs() <= 2.0 * f.sd)
                .count());
            let band_frac = inv(ok
                .iter()
                .filter(|f| (truth_frac - f.estimate).abs() <= cfg.band_half_width)
                .count());
            let ci95_half_pct = if n_ok == 0 {
                f64::NAN
            } else {
                ok.iter().map(|f| 200.0 * f.sd).sum::<f64>() / n_ok as f64
            };
            let evals_mean = if n_ok == 0 {
                f64::NAN
            } else {
                ok.iter().map(|f| f.evals as f64).sum::<f64>() / n_ok as f64
            };
            rows.push(SweepRow {
                snr_target: snr,
                pipeline: name.into(),
                n_ok,
                n_err,
                freq_err_mean_ppm,
                freq_err_sd_ppm,
                freq_err_mean_abs_ppm,
                ci95_half_pct,
                cov68,
                cov95,
                band_frac,
                evals_mean,
            });
        }
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|source| Error::Io { path: out_dir.display().to_string(), source })?;
    let summary = SweepSummary { rows, records, failures };
    write_text(&out_dir.join("table2.csv"), &rows_csv(&summary.rows))?;
    write_text(&out_dir.join("fig_compare.csv"), &records_csv(&summary.records))?;
    let manifest = Manifest {
        schema_version: 1,
        crate_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        noise_variances: &noise_v,
        total_runs,
        failed_runs: summary.failures.len(),
        failures: &summary.failures,
    };
    crate::io::write_json(&manifest, out_dir.join("manifest.json"))?;
    Ok(summary)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders the aggregate table as CSV, one row per (SNR target, pipeline).
pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "snr_target,pipeline,n_ok,n_err,freq_err_mean_ppm,freq_err_sd_ppm,\
         freq_err_mean_abs_ppm,ci95_half_pct,cov68,cov95,band_frac,evals_mean\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.snr_target,
            r.pipeline,
            r.n_ok,
            r.n_err,
            opt(r.freq_err_mean_ppm),
            opt(r.freq_err_sd_ppm),
            opt(r.freq_err_mean_abs_ppm),
            r.ci95_half_pct,
            r.cov68,
            r.cov95,
            r.band_frac,
            r.evals_mean,
        ));
    }
    s
}

/// Renders per-run records as CSV, one row per successful pipeline run.
pub fn records_csv(records: &[RunRecord]) -> String {
    let mut s = String::from(
        "snr_target,repetition,pipeline,truth,estimate,lo_2sd,hi_2sd,freq_err_mean_abs_ppm,evaluations\n",
    );
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.snr_target,
            r.repetition,
            r.pipeline,
            r.truth,
            r.estimate,
            r.lo_2sd,
            r.hi_2sd,
            opt(r.freq_err_mean_abs_ppm),
            r.evaluations,
        ));
    }
    s
}
