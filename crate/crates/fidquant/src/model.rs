//! Generative signal model for two-channel free-induction decays.
//!
//! Both detector channels share one set of nuisance parameters: the real
//! channel stacks damped cosines, the imaginary channel the matching sines,
//!
//! ```text
//! y1(t) = sum_j a_j sum_i B_ij cos((w_ij - w0)(t + tau) + theta) e^(-alpha t) + noise
//! y2(t) = sum_j a_j sum_i B_ij sin((w_ij - w0)(t + tau) + theta) e^(-alpha t) + noise
//! ```
//!
//! so the signal is linear in the amplitudes `a` once the nuisance
//! parameters are fixed. Channels may be sampled on different time grids.

use crate::error::{Error, Result};
use crate::species::SpeciesTable;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Amplitudes, one per species, in the order of the species table.
pub type AmplitudeVector = Vec<f64>;

/// Acquisition geometry: sample count, dwell time and frequency referencing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub n_samples: usize,
    /// Dwell time between samples, seconds.
    pub dt_s: f64,
    /// Carrier (reference) frequency offset in rad/s; shifts in ppm are
    /// expressed relative to this reference.
    pub omega0_rad_s: f64,
    /// Hz per ppm of chemical shift (spectrometer frequency in MHz).
    pub ref_freq_hz_per_ppm: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_samples: 4029,
            dt_s: 25e-6,
            omega0_rad_s: 0.0,
            ref_freq_hz_per_ppm: 75.0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("acquisition needs at least one sample"));
        }
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::invalid(format!("dwell time must be > 0, got {}", self.dt_s)));
        }
        if !(self.ref_freq_hz_per_ppm > 0.0) || !self.ref_freq_hz_per_ppm.is_finite() {
            return Err(Error::invalid(format!(
                "reference frequency must be > 0 Hz/ppm, got {}",
                self.ref_freq_hz_per_ppm
            )));
        }
        if !self.omega0_rad_s.is_finite() {
            return Err(Error::invalid("carrier offset must be finite"));
        }
        Ok(())
    }

    /// Uniform sampling grid `t_n = n * dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|n| n as f64 * self.dt_s).collect()
    }

    /// Total acquisition span in seconds.
    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 * self.dt_s
    }
}

/// Converts a chemical shift in ppm to an angular frequency in rad/s.
pub fn ppm_to_rad_s(freq_ppm: f64, ref_freq_hz_per_ppm: f64) -> f64 {
    freq_ppm * ref_freq_hz_per_ppm * std::f64::consts::TAU
}

/// Inverse of [`ppm_to_rad_s`].
pub fn rad_s_to_ppm(omega_rad_s: f64, ref_freq_hz_per_ppm: f64) -> f64 {
    omega_rad_s / (ref_freq_hz_per_ppm * std::f64::consts::TAU)
}

/// Nuisance parameters shared by every line: per-line angular frequencies
/// plus one global phase, dead-time delay and decay rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceParams {
    /// Angular frequency of each line in rad/s, in global line order.
    pub freqs_rad_s: Vec<f64>,
    /// Zero-order phase in radians.
    pub theta_rad: f64,
    /// Dead time between excitation and first sample, seconds.
    pub tau_s: f64,
    /// Exponential decay rate in 1/s.
    pub alpha_per_s: f64,
}

impl NuisanceParams {
    /// Parameters at the tabulated line positions with the given phase,
    /// dead time and decay.
    pub fn at_table(table: &SpeciesTable, acq: &AcquisitionConfig, theta_rad: f64, tau_s: f64, alpha_per_s: f64) -> Self {
        NuisanceParams {
            freqs_rad_s: table
                .freqs_ppm()
                .iter()
                .map(|&p| ppm_to_rad_s(p, acq.ref_freq_hz_per_ppm))
                .collect(),
            theta_rad,
            tau_s,
            alpha_per_s,
        }
    }

    pub fn validate(&self, table: &SpeciesTable) -> Result<()> {
        if self.freqs_rad_s.len() != table.total_lines() {
            return Err(Error::Dim {
                what: "nuisance frequencies vs table lines",
                expected: table.total_lines(),
                got: self.freqs_rad_s.len(),
            });
        }
        if self.freqs_rad_s.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid("non-finite line frequency"));
        }
        if !self.theta_rad.is_finite() || !self.tau_s.is_finite() {
            return Err(Error::invalid("phase and dead time must be finite"));
        }
        if !(self.alpha_per_s > 0.0) || !self.alpha_per_s.is_finite() {
            return Err(Error::invalid(format!(
                "decay rate must be > 0, got {}",
                self.alpha_per_s
            )));
        }
        Ok(())
    }

    /// Per-line frequencies converted to ppm.
    pub fn freqs_ppm(&self, acq: &AcquisitionConfig) -> Vec<f64> {
        self.freqs_rad_s
            .iter()
            .map(|&w| rad_s_to_ppm(w, acq.ref_freq_hz_per_ppm))
            .collect()
    }
}

/// Independent Gaussian noise with a common variance on both channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    variance_v: f64,
}

impl NoiseModel {
    pub fn new(variance_v: f64) -> Result<Self> {
        if !(variance_v > 0.0) || !variance_v.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance must be > 0 and finite, got {variance_v}"
            )));
        }
        Ok(NoiseModel { variance_v })
    }

    pub fn variance(&self) -> f64 {
        self.variance_v
    }
}

/// A recorded (or simulated) two-channel decay with its acquisition config.
///
/// The channels may have different lengths and grids; both grids must be
/// strictly increasing and all values finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidRecord {
    pub acq: AcquisitionConfig,
    pub times_real: Vec<f64>,
    pub times_imag: Vec<f64>,
    pub y_real: Vec<f64>,
    pub y_imag: Vec<f64>,
}

fn check_channel(times: &[f64], y: &[f64], what: &'static str) -> Result<()> {
    if times.len() != y.len() {
        return Err(Error::Dim { what, expected: times.len(), got: y.len() });
    }
    if times.is_empty() {
        return Err(Error::invalid(format!("{what}: channel is empty")));
    }
    for pair in times.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::invalid(format!(
                "{what}: sample times must be strictly increasing"
            )));
        }
    }
    if times.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite sample")));
    }
    Ok(())
}

impl FidRecord {
    pub fn new(
        acq: AcquisitionConfig,
        times_real: Vec<f64>,
        times_imag: Vec<f64>,
        y_real: Vec<f64>,
        y_imag: Vec<f64>,
    ) -> Result<Self> {
        acq.validate()?;
        check_channel(&times_real, &y_real, "real channel")?;
        check_channel(&times_imag, &y_imag, "imaginary channel")?;
        Ok(FidRecord { acq, times_real, times_imag, y_real, y_imag })
    }

    /// Builds a record on the uniform grid of `acq` (both channels share it).
    pub fn on_grid(acq: AcquisitionConfig, y_real: Vec<f64>, y_imag: Vec<f64>) -> Result<Self> {
        let t = acq.times();
        FidRecord::new(acq, t.clone(), t, y_real, y_imag)
    }

    pub fn n_real(&self) -> usize {
        self.y_real.len()
    }

    pub fn n_imag(&self) -> usize {
        self.y_imag.len()
    }

    /// Sample variance of the trailing `frac` of both channels pooled;
    /// a cheap proxy for the noise floor once the signal has decayed.
    pub fn tail_variance(&self, frac: f64) -> f64 {
        let take = |y: &[f64]| {
            let k = ((y.len() as f64 * frac).ceil() as usize).clamp(1, y.len());
            y[y.len() - k..].to_vec()
        };
        let mut tail = take(&self.y_real);
        tail.extend(take(&self.y_imag));
        let n = tail.len() as f64;
        let mean = tail.iter().sum::<f64>() / n;
        let ss = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        if tail.len() > 1 { ss / (n - 1.0) } else { 0.0 }
    }
}

/// Step of the uniform grid if `times` is an affine sequence `t0 + n h`
/// (to within a tight relative tolerance), else `None`.
pub(crate) fn uniform_step(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return Some(0.0);
    }
    let t0 = times[0];
    let h = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
    let scale = times[times.len() - 1].abs().max(t0.abs()).max(1e-300);
    for (n, &t) in times.iter().enumerate() {
        if (t - (t0 + n as f64 * h)).abs() > 1e-12 * scale {
            return None;
        }
    }
    Some(h)
}

/// How many recurrence steps to take before re-anchoring on exact
/// `sin_cos`/`exp` evaluations; bounds the accumulated rounding drift.
const RESYNC_EVERY: usize = 512;

/// Fills one basis column pair for a single line on a uniform grid using
/// rotation/decay recurrences (one `sin_cos` and one `exp` per resync block).
#[allow(clippy::too_many_arguments)]
fn fill_line_uniform(
    cos_col: &mut [f64],
    sin_col: &mut [f64],
    weight: f64,
    w: f64,
    t0: f64,
    h: f64,
    tau: f64,
    theta: f64,
    alpha: f64,
) {
    let n = cos_col.len();
    let (step_sin, step_cos) = (w * h).sin_cos();
    let decay_step = (-alpha * h).exp();
    let mut idx = 0;
    while idx < n {
        let t = t0 + idx as f64 * h;
        let (mut s, mut c) = (w * (t + tau) + theta).sin_cos();
        let mut d = (-alpha * t).exp();
        let block_end = (idx + RESYNC_EVERY).min(n);
        for k in idx..block_end {
            cos_col[k] += weight * c * d;
            sin_col[k] += weight * s * d;
            let c_next = c * step_cos - s * step_sin;
            s = s * step_cos + c * step_sin;
            c = c_next;
            d *= decay_step;
        }
        idx = block_end;
    }
}

fn fill_line_direct(
    cos_col: &mut [f64],
    sin_col: &mut [f64],
    weight: f64,
    w: f64,
    times: &[f64],
    tau: f64,
    theta: f64,
    alpha: f64,
) {
    for (k, &t) in times.iter().enumerate() {
        let (s, c) = (w * (t + tau) + theta).sin_cos();
        let d = (-alpha * t).exp();
        cos_col[k] += weight * c * d;
        sin_col[k] += weight * s * d;
    }
}

/// Builds the cosine and sine design matrices (`N x r`, one column per
/// species) on the given time grid.
///
/// Column `j` sums the species' lines with their intensity weights, so the
/// two-channel signal expectation is `Phi a` and `Psi a`. The result is a
/// deterministic function of the inputs. Uniform grids take a fast
/// recurrence path whose deviation from direct evaluation stays below about
/// 1e-12 relative.
pub fn basis_matrices(
    psi: &NuisanceParams,
    table: &SpeciesTable,
    acq: &AcquisitionConfig,
    times: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    acq.validate()?;
    psi.validate(table)?;
    if times.is_empty() {
        return Err(Error::invalid("basis requires at least one sample time"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("non-finite sample time"));
    }
    let n = times.len();
    let r = table.n_species();
    let mut phi = DMatrix::zeros(n, r);
    let mut psi_m = DMatrix::zeros(n, r);
    let step = uniform_step(times);
    let mut line_idx = 0;
    for (j, sp) in table.species().iter().enumerate() {
        // Columns of a DMatrix are contiguous (column-major storage).
        let mut cos_col = phi.column_mut(j);
        let mut sin_col = psi_m.column_mut(j);
        let cos_col = cos_col.as_mut_slice();
        let sin_col = sin_col.as_mut_slice();
        for line in &sp.lines {
            let w = psi.freqs_rad_s[line_idx] - acq.omega0_rad_s;
            match step {
                Some(h) => fill_line_uniform(
                    cos_col,
                    sin_col,
                    line.weight,
                    w,
                    times[0],
                    h,
                    psi.tau_s,
                    psi.theta_rad,
                    psi.alpha_per_s,
                ),
                None => fill_line_direct(
                    cos_col,
                    sin_col,
                    line.weight,
                    w,
                    times,
                    psi.tau_s,
                    psi.theta_rad,
                    psi.alpha_per_s,
                ),
            }
            line_idx += 1;
        }
    }
    Ok((phi, psi_m))
}

fn check_amplitudes(a: &[f64], table: &SpeciesTable) -> Result<()> {
    if a.len() != table.n_species() {
        return Err(Error::Dim {
            what: "amplitudes vs species",
            expected: table.n_species(),
            got: a.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite amplitude"));
    }
    Ok(())
}

/// Noise-free signal expectation on the uniform grid of `acq`.
pub fn noise_free_fid(
    a: &[f64],
    psi: &NuisanceParams,
    table: &SpeciesTable,
    acq: &AcquisitionConfig,
) -> Result<FidRecord> {
    check_amplitudes(a, table)?;
    let times = acq.times();
    let (phi, psi_m) = basis_matrices(psi, table, acq, &times)?;
    let av = nalgebra::DVector::from_column_slice(a);
    let y1 = (phi * &av).data.into();
    let y2 = (psi_m * &av).data.into();
    FidRecord::new(*acq, times.clone(), times, y1, y2)
}

/// Simulates a two-channel decay on the uniform grid of `acq`: signal
/// expectation plus i.i.d. Gaussian noise of the given variance on every
/// sample.
///
/// Deterministic for a fixed seed; the real channel's noise is drawn first,
/// then the imaginary channel's.
pub fn simulate_fid(
    a: &[f64],
    psi: &NuisanceParams,
    noise: &NoiseModel,
    table: &SpeciesTable,
    acq: &AcquisitionConfig,
    seed: u64,
) -> Result<FidRecord> {
    let mut fid = noise_free_fid(a, psi, table, acq)?;
    let sd = noise.variance().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for y in fid.y_real.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *y += sd * z;
    }
    for y in fid.y_imag.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *y += sd * z;
    }
    Ok(fid)
}
