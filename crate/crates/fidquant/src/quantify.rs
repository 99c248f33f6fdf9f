//! End-to-end Bayesian concentration estimation.
//!
//! Three steps: maximize the marginal likelihood over the nuisance
//! parameters and noise variance with the annealed simplex search, form the
//! closed-form amplitude posterior at the optimum, and summarize Monte
//! Carlo samples of the normalized concentrations with credible intervals.

use crate::error::{Error, Result};
use crate::inference::{
    amplitude_posterior, log_marginal_likelihood, sample_amplitudes, vague_gamma, AmplitudePrior,
};
use crate::model::{uniform_step, FidRecord, NuisanceParams};
use crate::optimizer::{default_space, simpsa_maximize, AnnealSchedule, BoundedParamSpace};
use crate::seed;
use crate::species::SpeciesTable;
use num_complex::Complex;
use rustfft::FftPlanner;

/// Default number of posterior draws used to summarize concentrations.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Number of equal-width bins in a concentration histogram.
const HIST_BINS: usize = 50;
/// Sub-stream tag separating posterior sampling from the optimizer RNG.
const SAMPLE_STREAM: u64 = 0x53414D50;

/// Options for [`fit`]. `seed` drives both the optimizer restarts and the
/// posterior sampling (through separate derived streams), so one seed fixes
/// the whole fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub seed: u64,
    /// Posterior draws for the concentration summary; at least 2.
    pub n_samples: usize,
    /// Annealing schedule; its own `seed` field is overridden by `seed`.
    pub schedule: AnnealSchedule,
    /// Amplitude prior variance; `None` picks a vague scale from the data.
    pub gamma: Option<f64>,
    /// Known nuisance parameters and noise variance; skips the search.
    pub psi_fixed: Option<(NuisanceParams, f64)>,
    /// Custom search box; must follow the default layout
    /// `freq[0..m], theta, tau, alpha, log_v`.
    pub space: Option<BoundedParamSpace>,
    /// True per-line shifts in ppm; enables the frequency-error report.
    pub truth_freqs_ppm: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            seed: 0,
            n_samples: DEFAULT_SAMPLES,
            schedule: AnnealSchedule::default(),
            gamma: None,
            psi_fixed: None,
            space: None,
            truth_freqs_ppm: None,
        }
    }
}

/// Equal-width histogram of one species' concentration samples.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
}

/// Posterior summary of one species' concentration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpeciesEstimate {
    pub name: String,
    /// Posterior mean concentration.
    pub mean: f64,
    /// Posterior standard deviation.
    pub sd: f64,
    /// Central 95% interval by percentiles — the primary interval for
    /// skewed magnitude-ratio distributions.
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    /// `mean ± 2 sd`, the conventional two-sigma quote.
    pub two_sd_lo: f64,
    pub two_sd_hi: f64,
    pub histogram: Histogram,
}

/// Optimizer bookkeeping carried along with a fit.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitDiagnostics {
    /// Objective evaluations spent in the search (0 when skipped).
    pub evaluations: u64,
    /// Best objective per restart.
    pub restart_values: Vec<f64>,
    /// `(temperature, incumbent)` trace of the winning restart.
    pub trace: Vec<(f64, f64)>,
}

/// Full result of a Bayesian fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantResult {
    /// Per-species posterior summaries, in table order. The means sum to 1
    /// up to rounding because every sample's concentrations sum to 1.
    pub species: Vec<SpeciesEstimate>,
    /// Nuisance parameters at the evidence maximum (or as fixed).
    pub psi_hat: NuisanceParams,
    /// Noise variance at the evidence maximum (or as fixed).
    pub v_hat: f64,
    /// Log marginal likelihood at `(psi_hat, v_hat)`.
    pub log_evidence: f64,
    /// Amplitude prior variance actually used.
    pub gamma: f64,
    /// Estimated minus true shift per line, ppm; `None` without truth.
    pub freq_error_ppm: Option<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

/// Interval coverage across repeated fits of the same truth.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoverageStats {
    /// Fraction of fits whose `mean ± sd` contains the truth.
    pub empirical_68: f64,
    /// Fraction of fits whose `mean ± 2 sd` contains the truth.
    pub empirical_95: f64,
    /// Fraction of fits whose mean lies inside the stated band.
    pub frac_within_band: f64,
}

/// Splits an optimizer point into nuisance parameters and noise variance.
/// Layout: `m` frequencies in rad/s, phase, dead time, decay rate, log
/// noise variance.
/// Candidate peaks considered per line box when reading starting
/// frequencies off the magnitude spectrum.
const WARM_PEAKS_PER_LINE: usize = 4;
/// Cap on the number of line-to-peak assignments scored by the evidence.
const WARM_MAX_ASSIGNMENTS: usize = 512;
/// Line broadening applied before the warm-start transform, in Hz.
const WARM_LB_HZ: f64 = 1.0;

/// A deterministic first guess at the line frequencies, phase, and dead
/// time, read off the data before the search starts.
///
/// Frequencies come from local maxima of the magnitude spectrum (immune to
/// the unknown phase) inside each line's search box; when boxes overlap,
/// every injective line-to-peak assignment is scored with the actual
/// marginal likelihood, whose known line weights separate otherwise
/// ambiguous matches. The phase and dead time are then fitted to the
/// complex arguments of the matched bins. Returns `None` when the record is
/// unsuitable (non-uniform grid, too short) or some box contains no peak;
/// the caller keeps the plain tabulated starting point in that case.
fn warm_start(
    fid: &FidRecord,
    table: &SpeciesTable,
    space: &BoundedParamSpace,
) -> Option<(Vec<f64>, f64, f64, f64)> {
    let m = table.total_lines();
    let times = &fid.times_real;
    let n = times.len();
    if fid.times_real != fid.times_imag || n < 16 {
        return None;
    }
    let h = match uniform_step(times) {
        Some(h) if h > 0.0 => h,
        _ => return None,
    };

    let nfft = (4 * n).next_power_of_two().max(4096);
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(nfft);
    for k in 0..n {
        let w = (-std::f64::consts::PI * WARM_LB_HZ * times[k]).exp();
        buf.push(Complex::new(fid.y_real[k] * w, fid.y_imag[k] * w));
    }
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    // Absolute angular frequency per bin, sorted ascending so local maxima
    // can be read off neighbours directly.
    let d_omega = 2.0 * std::f64::consts::PI / (nfft as f64 * h);
    let mut bins: Vec<(f64, Complex<f64>)> = buf
        .into_iter()
        .enumerate()
        .map(|(k, x)| {
            let mm = if k <= (nfft - 1) / 2 { k as f64 } else { k as f64 - nfft as f64 };
            (mm * d_omega + fid.acq.omega0_rad_s, x)
        })
        .collect();
    bins.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite axis"));
    let mut mag: Vec<f64> = bins.iter().map(|(_, x)| x.norm()).collect();

    // Peak extraction by deflation, strongest first. A tall line's tail can
    // exceed a weak line's whole peak, so raw maxima inside a box are
    // unreliable; instead each extracted line is subtracted from the complex
    // spectrum using its exact sampled shape (a geometric series over the
    // record) before the next-strongest is read off what remains.
    let dims = space.dims();
    let in_box: Vec<bool> = bins
        .iter()
        .map(|(omega, _)| dims[..m].iter().any(|d| *omega >= d.lower && *omega <= d.upper))
        .collect();
    let n_bins = bins.len();
    let pick = |mag: &[f64]| -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 1..n_bins - 1 {
            if in_box[j] && best.is_none_or(|b| mag[j] > mag[b]) {
                best = Some(j);
            }
        }
        best
    };

    // Decay-plus-broadening rate from the strongest peak's width: the
    // magnitude of a damped line falls to half its maximum root-three
    // linewidths out.
    let alpha_eff = {
        let j = pick(&mag)?;
        let half_height = 0.5 * mag[j];
        let (mut left, mut right) = (j, j);
        while left > 0 && mag[left] > half_height {
            left -= 1;
        }
        while right + 1 < bins.len() && mag[right] > half_height {
            right += 1;
        }
        ((right - left) as f64 * d_omega / (2.0 * 3.0_f64.sqrt())).max(1e-3)
    };
    let shape = |delta: f64, alpha: f64| -> Complex<f64> {
        let rho = (Complex::new(-alpha, delta) * h).exp();
        let one = Complex::new(1.0, 0.0);
        (one - rho.powu(n as u32)) / (one - rho)
    };

    // (center, complex line amplitude) per extracted peak. The leftover
    // after subtracting a tall line must stay below the weakest genuine
    // peak, so each extraction refines its center and decay rate by local
    // least squares (amplitude solved in closed form per candidate) on a
    // grid that zooms in twice before the line is removed.
    let mut extracted: Vec<(f64, Complex<f64>)> = Vec::new();
    let mut alpha_first = alpha_eff;
    for e in 0..m + WARM_PEAKS_PER_LINE {
        let Some(j) = pick(&mag) else { break };
        if !(mag[j] > 0.0) {
            break;
        }
        let denom = mag[j - 1] - 2.0 * mag[j] + mag[j + 1];
        let delta_bins = if denom < 0.0 {
            (0.5 * (mag[j - 1] - mag[j + 1]) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let mut center = bins[j].0 + delta_bins * d_omega;
        let mut alpha = if e == 0 { alpha_eff } else { alpha_first };
        let window = ((4.0 * alpha / d_omega).ceil() as usize).clamp(3, 64);
        let lo = j.saturating_sub(window);
        let hi = (j + window).min(n_bins - 1);
        let mut best_fit: Option<(f64, f64, f64, Complex<f64>)> = None;
        for zoom in 0..3 {
            let scale = 0.25_f64.powi(zoom);
            let c_span = 0.75 * d_omega * scale;
            let a_span = 0.35 * alpha * scale;
            for ci in -4..=4_i32 {
                for ai in -4..=4_i32 {
                    let c = center + c_span * ci as f64 / 4.0;
                    let a = (alpha + a_span * ai as f64 / 4.0).max(1e-3);
                    let mut sh_sq = 0.0;
                    let mut cross = Complex::new(0.0, 0.0);
                    for k in lo..=hi {
                        let sh = shape(c - bins[k].0, a);
                        sh_sq += sh.norm_sqr();
                        cross += bins[k].1 * sh.conj();
                    }
                    if !(sh_sq > 0.0) {
                        continue;
                    }
                    let amp = cross / sh_sq;
                    // Minimizing |S - amp*sh|^2 with amp at its optimum is
                    // maximizing |cross|^2 / sh_sq.
                    let gain = cross.norm_sqr() / sh_sq;
                    if best_fit.as_ref().is_none_or(|(g, _, _, _)| gain > *g) {
                        best_fit = Some((gain, c, a, amp));
                    }
                }
            }
            if let Some((_, c, a, _)) = best_fit {
                center = c;
                alpha = a;
            }
        }
        let Some((_, c, a, amp)) = best_fit else { break };
        if e == 0 {
            alpha_first = a;
        }
        for (k, (omega, val)) in bins.iter_mut().enumerate() {
            *val -= amp * shape(c - *omega, a);
            mag[k] = val.norm();
        }
        extracted.push((c, amp));
    }

    // Candidate peaks per line: extracted centers inside the line's box, in
    // extraction (strongest-first) order.
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(m);
    for dim in &dims[..m] {
        let peaks: Vec<usize> = extracted
            .iter()
            .enumerate()
            .filter(|(_, (c, _))| *c >= dim.lower && *c <= dim.upper)
            .map(|(e, _)| e)
            .take(WARM_PEAKS_PER_LINE)
            .collect();
        if peaks.is_empty() {
            return None;
        }
        candidates.push(peaks);
    }
    let alpha_guess = alpha_first - std::f64::consts::PI * WARM_LB_HZ;

    // Every injective assignment of lines to peaks, in strongest-first
    // order, capped to keep degenerate overlaps cheap.
    let mut assignments: Vec<Vec<usize>> = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    fn enumerate(
        line: usize,
        candidates: &[Vec<usize>],
        chosen: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if out.len() >= WARM_MAX_ASSIGNMENTS {
            return;
        }
        if line == candidates.len() {
            out.push(chosen.clone());
            return;
        }
        for &peak in &candidates[line] {
            if !chosen.contains(&peak) {
                chosen.push(peak);
                enumerate(line + 1, candidates, chosen, out);
                chosen.pop();
            }
        }
    }
    enumerate(0, &candidates, &mut chosen, &mut assignments);
    if assignments.is_empty() {
        return None;
    }

    // Score each assignment with the evidence at a phase/dead-time fit to
    // the matched bins' arguments; one shared prior keeps scores comparable.
    let alpha_init = alpha_guess.clamp(dims[m + 2].lower, dims[m + 2].upper);
    let v_init = dims[m + 3].init.exp();
    let (tau_lo, tau_hi) = (dims[m + 1].lower, dims[m + 1].upper);
    let gamma = {
        let init: Vec<f64> = dims.iter().map(|d| d.init).collect();
        let (psi, _) = decode_point(&init, m);
        vague_gamma(fid, &psi, table).ok()?
    };
    let prior = AmplitudePrior::isotropic(table.n_species(), gamma);
    let omega0 = fid.acq.omega0_rad_s;
    let t0 = times[0];
    let mut best: Option<(f64, Vec<f64>, f64, f64)> = None;
    for assignment in &assignments {
        let freqs: Vec<f64> = assignment
            .iter()
            .zip(&dims[..m])
            .map(|(&e, dim)| extracted[e].0.clamp(dim.lower, dim.upper))
            .collect();
        // The argument of a line's complex amplitude is
        // theta + (omega - omega0) * (tau + t0); scan the dead-time range
        // finely enough to track the fastest line's phase and read the
        // phase itself off the circular mean.
        let offsets: Vec<f64> = assignment.iter().map(|&e| extracted[e].0 - omega0).collect();
        let phases: Vec<f64> = assignment.iter().map(|&e| extracted[e].1.arg()).collect();
        let weights: Vec<f64> = assignment.iter().map(|&e| extracted[e].1.norm()).collect();
        let max_abs_offset = offsets.iter().fold(0.0_f64, |acc, o| acc.max(o.abs())).max(1e-9);
        let step = std::f64::consts::FRAC_PI_8 / max_abs_offset;
        let n_tau = (((tau_hi - tau_lo) / step).ceil() as usize + 1).min(8192);
        let mut best_tau = (f64::NEG_INFINITY, tau_lo, 0.0);
        for g in 0..n_tau {
            let tau = tau_lo + (tau_hi - tau_lo) * g as f64 / (n_tau.max(2) - 1) as f64;
            let sum: Complex<f64> = offsets
                .iter()
                .zip(&phases)
                .zip(&weights)
                .map(|((o, p), w)| Complex::from_polar(*w, p - o * (tau + t0)))
                .sum();
            if sum.norm() > best_tau.0 {
                best_tau = (sum.norm(), tau, sum.arg());
            }
        }
        let (_, tau, theta) = best_tau;
        let psi = NuisanceParams {
            freqs_rad_s: freqs.clone(),
            theta_rad: theta.clamp(dims[m].lower, dims[m].upper),
            tau_s: tau,
            alpha_per_s: alpha_init,
        };
        let score = match log_marginal_likelihood(fid, &psi, v_init, &prior, table) {
            Ok(s) if s.is_finite() => s,
            _ => continue,
        };
        if best.as_ref().is_none_or(|(b, _, _, _)| score > *b) {
            best = Some((score, freqs, psi.theta_rad, tau));
        }
    }
    best.map(|(_, freqs, theta, tau)| (freqs, theta, tau, alpha_init))
}

fn decode_point(p: &[f64], m: usize) -> (NuisanceParams, f64) {
    (
        NuisanceParams {
            freqs_rad_s: p[..m].to_vec(),
            theta_rad: p[m],
            tau_s: p[m + 1],
            alpha_per_s: p[m + 2],
        },
        p[m + 3].exp(),
    )
}

fn check_layout(space: &BoundedParamSpace, m: usize) -> Result<()> {
    let dims = space.dims();
    let ok = dims.len() == m + 4
        && dims[..m].iter().enumerate().all(|(i, d)| d.name == format!("freq[{i}]"))
        && ["theta", "tau", "alpha", "log_v"]
            .iter()
            .zip(&dims[m..])
            .all(|(want, d)| d.name == *want);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(
            "search space must follow the default layout: freq[0..m], theta, tau, alpha, log_v",
        ))
    }
}

/// Linear-interpolation percentile of pre-sorted values, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(name: &str, values: &[f64]) -> SpeciesEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let sd = (ss / (n - 1.0)).sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite concentration"));
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut counts = vec![0u32; HIST_BINS];
    for &v in values {
        let k = if hi > lo {
            (((v - lo) / (hi - lo)) * HIST_BINS as f64) as usize
        } else {
            0
        };
        counts[k.min(HIST_BINS - 1)] += 1;
    }

    SpeciesEstimate {
        name: name.to_string(),
        mean,
        sd,
        ci95_lo: percentile(&sorted, 0.025),
        ci95_hi: percentile(&sorted, 0.975),
        two_sd_lo: mean - 2.0 * sd,
        two_sd_hi: mean + 2.0 * sd,
        histogram: Histogram { lo, hi, counts },
    }
}

/// Fits a decay record: finds the nuisance parameters and noise variance
/// that maximize the marginal likelihood (unless fixed), forms the
/// amplitude posterior there, and summarizes `n_samples` draws of the
/// normalized concentrations `|A_j| / Σ_i |A_i|`.
///
/// The magnitude convention makes the estimate invariant to a global sign
/// flip of the amplitudes, and the weight normalization already inside the
/// basis makes it directly comparable to the transform pipeline's output.
pub fn fit(fid: &FidRecord, table: &SpeciesTable, opts: &FitOptions) -> Result<QuantResult> {
    if opts.n_samples < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 posterior samples, got {}",
            opts.n_samples
        )));
    }
    let r = table.n_species();
    let m = table.total_lines();
    if let Some(truth) = &opts.truth_freqs_ppm {
        if truth.len() != m {
            return Err(Error::Dim {
                what: "true shifts vs table lines",
                expected: m,
                got: truth.len(),
            });
        }
    }
    if let Some(g) = opts.gamma {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::invalid(format!(
                "prior variance must be finite and > 0, got {g}"
            )));
        }
    }
    let space = match &opts.space {
        Some(s) => s.clone(),
        None => {
            let base = default_space(table, &fid.acq, fid)?;
            // Start the search from spectrum-derived guesses when possible;
            // the box itself is unchanged, so the search can still leave a
            // bad guess behind.
            let warm = if opts.psi_fixed.is_none() { warm_start(fid, table, &base) } else { None };
            match warm {
                Some((freqs, theta, tau, alpha)) => {
                    let mut dims = base.dims().to_vec();
                    for (dim, f) in dims.iter_mut().zip(&freqs) {
                        dim.init = *f;
                    }
                    dims[m].init = theta;
                    dims[m + 1].init = tau;
                    dims[m + 2].init = alpha;
                    BoundedParamSpace::new(dims)?
                }
                None => base,
            }
        }
    };
    check_layout(&space, m)?;

    // Prior scale, referenced to the fixed parameters when given and to the
    // search's initial point otherwise.
    let init: Vec<f64> = space.dims().iter().map(|d| d.init).collect();
    let psi_for_gamma = match &opts.psi_fixed {
        Some((psi, _)) => psi.clone(),
        None => decode_point(&init, m).0,
    };
    let gamma = match opts.gamma {
        Some(g) => g,
        None => vague_gamma(fid, &psi_for_gamma, table)?,
    };
    let prior = AmplitudePrior::isotropic(r, gamma);

    let (psi_hat, v_hat, diagnostics) = match &opts.psi_fixed {
        Some((psi, v)) => {
            psi.validate(table)?;
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "fixed noise variance must be > 0 and finite, got {v}"
                )));
            }
            (psi.clone(), *v, FitDiagnostics::default())
        }
        None => {
            let objective = |p: &[f64]| {
                let (psi, v) = decode_point(p, m);
                log_marginal_likelihood(fid, &psi, v, &prior, table)
                    .unwrap_or(f64::NEG_INFINITY)
            };
            let mut sched = opts.schedule.clone();
            sched.seed = opts.seed;
            let out = simpsa_maximize(objective, &space, &sched)?;
            let (psi, v) = decode_point(&out.best_point, m);
            (
                psi,
                v,
                FitDiagnostics {
                    evaluations: out.evaluations,
                    restart_values: out.restart_values,
                    trace: out.trace,
                },
            )
        }
    };

    let log_evidence = log_marginal_likelihood(fid, &psi_hat, v_hat, &prior, table)?;
    let posterior = amplitude_posterior(fid, &psi_hat, v_hat, &prior, table)?;
    let samples =
        sample_amplitudes(&posterior, opts.n_samples, seed::derive(opts.seed, SAMPLE_STREAM))?;

    let mut conc = vec![vec![0.0f64; opts.n_samples]; r];
    for row in 0..opts.n_samples {
        let total: f64 = (0..r).map(|j| samples[(row, j)].abs()).sum();
        if !(total > 0.0) {
            return Err(Error::invalid(
                "degenerate posterior sample: amplitude magnitudes sum to zero",
            ));
        }
        for (j, series) in conc.iter_mut().enumerate() {
            series[row] = samples[(row, j)].abs() / total;
        }
    }
    let species = table
        .species()
        .iter()
        .zip(&conc)
        .map(|(sp, values)| summarize(&sp.name, values))
        .collect();

    let freq_error_ppm = opts.truth_freqs_ppm.as_ref().map(|truth| {
        psi_hat
            .freqs_ppm(&fid.acq)
            .iter()
            .zip(truth)
            .map(|(est, tru)| est - tru)
            .collect()
    });

    Ok(QuantResult {
        species,
        psi_hat,
        v_hat,
        log_evidence,
        gamma,
        freq_error_ppm,
        diagnostics,
    })
}

/// Interval coverage of one species across repeated fits: how often the
/// one- and two-sigma intervals contain `truth`, and how often the mean
/// lands inside `band` (inclusive).
pub fn coverage_stats(
    results: &[QuantResult],
    species_index: usize,
    truth: f64,
    band: (f64, f64),
) -> Result<CoverageStats> {
    if results.len() < 2 {
        return Err(Error::invalid(format!(
            "coverage needs at least 2 fits, got {}",
            results.len()
        )));
    }
    let n = results.len() as f64;
    let (mut in_1sd, mut in_2sd, mut in_band) = (0usize, 0usize, 0usize);
    for res in results {
        let est = res.species.get(species_index).ok_or(Error::Dim {
            what: "species index vs fit result",
            expected: species_index + 1,
            got: res.species.len(),
        })?;
        if (truth - est.mean).abs() <= est.sd {
            in_1sd += 1;
        }
        if (truth - est.mean).abs() <= 2.0 * est.sd {
            in_2sd += 1;
        }
        if band.0 <= est.mean && est.mean <= band.1 {
            in_band += 1;
        }
    }
    Ok(CoverageStats {
        empirical_68: in_1sd as f64 / n,
        empirical_95: in_2sd as f64 / n,
        frac_within_band: in_band as f64 / n,
    })
}
