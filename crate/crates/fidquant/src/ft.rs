//! Conventional Fourier-transform quantification pipeline.
//!
//! The two-channel decay is apodized, zero-filled and discrete-Fourier
//! transformed; the spectrum is phased into absorption mode, optionally
//! baseline-corrected with a low-order polynomial, and integrated over
//! per-line windows. Window integrals are divided by their tabulated
//! intensity weights, averaged within each species and normalized across
//! species, with first-order propagation of the spectral noise level into
//! a standard error per concentration.

use crate::error::{Error, Result};
use crate::model::{rad_s_to_ppm, uniform_step, FidRecord};
use crate::species::SpeciesTable;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::FftPlanner;

/// Default exponential line broadening applied before the transform, Hz.
pub const DEFAULT_LINE_BROADENING_HZ: f64 = 1.0;
/// Default transform length after zero-filling.
pub const DEFAULT_ZEROFILL: usize = 16384;
/// Default polynomial order for baseline correction.
pub const DEFAULT_BASELINE_ORDER: usize = 3;
/// Default half-width of a peak integration window, ppm.
pub const DEFAULT_WINDOW_HALF_PPM: f64 = 0.5;
/// Minimum number of bins accepted for a spectral noise estimate.
const MIN_NOISE_BINS: usize = 50;

/// A real absorption-mode spectrum on a strictly descending ppm axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin positions in ppm, strictly descending.
    pub freq_axis_ppm: Vec<f64>,
    /// Absorption intensity per bin; same length as the axis.
    pub intensity: Vec<f64>,
}

impl Spectrum {
    /// Lowest and highest ppm on the axis.
    pub fn axis_range_ppm(&self) -> (f64, f64) {
        let hi = self.freq_axis_ppm[0];
        let lo = self.freq_axis_ppm[self.freq_axis_ppm.len() - 1];
        (lo, hi)
    }

    /// Mean spacing between adjacent bins, ppm.
    pub fn bin_spacing_ppm(&self) -> f64 {
        let (lo, hi) = self.axis_range_ppm();
        (hi - lo) / (self.freq_axis_ppm.len() - 1).max(1) as f64
    }

    /// Indices of bins whose position lies in `[lo_ppm, hi_ppm]`.
    fn bins_in(&self, lo_ppm: f64, hi_ppm: f64) -> Vec<usize> {
        self.freq_axis_ppm
            .iter()
            .enumerate()
            .filter(|(_, &p)| lo_ppm <= p && p <= hi_ppm)
            .map(|(k, _)| k)
            .collect()
    }
}

/// One integration window, tied to a tabulated line of a species.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeakWindow {
    /// Name of the species the window belongs to.
    pub species: String,
    /// Index of the line within that species' line list.
    pub line_index: usize,
    /// Lower edge of the window, ppm.
    pub lo_ppm: f64,
    /// Upper edge of the window, ppm.
    pub hi_ppm: f64,
}

impl PeakWindow {
    pub(crate) fn validate(&self) -> Result<()> {
        if !self.lo_ppm.is_finite() || !self.hi_ppm.is_finite() || !(self.lo_ppm < self.hi_ppm) {
            return Err(Error::invalid(format!(
                "window for '{}' line {}: edges must be finite with lo < hi, got [{}, {}]",
                self.species, self.line_index, self.lo_ppm, self.hi_ppm
            )));
        }
        Ok(())
    }

    fn overlaps_range(&self, lo_ppm: f64, hi_ppm: f64) -> bool {
        self.lo_ppm <= hi_ppm && lo_ppm <= self.hi_ppm
    }

    fn overlaps(&self, other: &PeakWindow) -> bool {
        self.overlaps_range(other.lo_ppm, other.hi_ppm)
    }
}

/// Integral of one window: the plain sum of bin intensities and the number
/// of bins that contributed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeakIntegral {
    pub area: f64,
    pub n_bins: usize,
}

/// Concentration estimates from windowed integrals, with standard errors
/// propagated from the per-bin noise level.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FtQuantResult {
    /// Species names in table order.
    pub species: Vec<String>,
    /// Normalized concentration estimates; they sum to 1 by construction.
    pub concentrations: Vec<f64>,
    /// One standard error per concentration; quote `±2·errors` for a
    /// roughly 95% interval.
    pub errors: Vec<f64>,
    /// Weight-normalized, line-averaged integral per species (table order).
    pub species_integrals: Vec<f64>,
    /// Raw window integrals in the order the windows were given.
    pub peak_areas: Vec<f64>,
    /// Per-window signal-to-noise: integral over (weight × noise level).
    pub peak_snrs: Vec<f64>,
}

impl FtQuantResult {
    /// Signal-to-noise of the weakest window — the conventional single
    /// number quoted for a spectrum.
    pub fn worst_peak_snr(&self) -> f64 {
        self.peak_snrs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Apodizes, zero-fills, transforms and phases a decay into a real
/// absorption spectrum on a descending ppm axis.
///
/// Both channels must share one uniform time grid. Each sample is weighted
/// by `exp(-pi * lb_hz * t)`, the complex series `y_real + i*y_imag` is
/// zero-filled to `zerofill_to` points and transformed, and every bin is
/// rotated by `exp(-i*(theta + omega_bin * tau))` where `omega_bin` is the
/// bin's offset from the carrier — the zero-order phase plus the
/// frequency-proportional phase dual to the acquisition dead time. A grid
/// starting at `t0 > 0` is treated as additional dead time.
pub fn preprocess(
    fid: &FidRecord,
    lb_hz: f64,
    zerofill_to: usize,
    theta_rad: f64,
    tau_s: f64,
) -> Result<Spectrum> {
    if !(lb_hz >= 0.0) || !lb_hz.is_finite() {
        return Err(Error::invalid(format!(
            "line broadening must be finite and >= 0 Hz, got {lb_hz}"
        )));
    }
    if !theta_rad.is_finite() || !tau_s.is_finite() {
        return Err(Error::invalid("phase and dead time must be finite"));
    }
    if fid.times_real != fid.times_imag {
        return Err(Error::invalid(
            "transform requires both channels on one shared time grid",
        ));
    }
    let times = &fid.times_real;
    let n = times.len();
    if n < 2 {
        return Err(Error::invalid("transform requires at least two samples"));
    }
    let h = match uniform_step(times) {
        Some(h) if h > 0.0 => h,
        _ => {
            return Err(Error::invalid(
                "transform requires a uniform sampling grid",
            ))
        }
    };
    if zerofill_to < n {
        return Err(Error::invalid(format!(
            "zero-fill length {zerofill_to} is shorter than the record ({n} samples)"
        )));
    }

    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(zerofill_to);
    for k in 0..n {
        let w = (-std::f64::consts::PI * lb_hz * times[k]).exp();
        buf.push(Complex::new(fid.y_real[k] * w, fid.y_imag[k] * w));
    }
    buf.resize(zerofill_to, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(zerofill_to).process(&mut buf);

    // Bin k carries offset frequency 2*pi*m/(N*h) with m = k for the first
    // half of the range and m = k - N for the aliased second half.
    let n_fft = zerofill_to;
    let d_omega = 2.0 * std::f64::consts::PI / (n_fft as f64 * h);
    let tau_eff = tau_s + times[0];
    let mut bins: Vec<(f64, f64)> = Vec::with_capacity(n_fft);
    for (k, x) in buf.into_iter().enumerate() {
        let m = if k <= (n_fft - 1) / 2 { k as f64 } else { k as f64 - n_fft as f64 };
        let omega = m * d_omega;
        let phased = x * Complex::from_polar(1.0, -(theta_rad + omega * tau_eff));
        let ppm = rad_s_to_ppm(omega + fid.acq.omega0_rad_s, fid.acq.ref_freq_hz_per_ppm);
        bins.push((ppm, phased.re));
    }
    bins.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).expect("finite axis"));
    let (freq_axis_ppm, intensity) = bins.into_iter().unzip();
    Ok(Spectrum { freq_axis_ppm, intensity })
}

/// Subtracts a least-squares polynomial of the given order, fitted only to
/// bins outside every exclusion window, from the whole spectrum.
///
/// The axis is mapped to `[-1, 1]` before fitting so the power basis stays
/// well conditioned. Errors if fewer than `order + 1` bins remain outside
/// the exclusion windows.
pub fn baseline_correct(
    spec: &Spectrum,
    poly_order: usize,
    exclusion: &[PeakWindow],
) -> Result<Spectrum> {
    for w in exclusion {
        w.validate()?;
    }
    let (lo, hi) = spec.axis_range_ppm();
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::invalid("baseline fit requires a non-degenerate axis"));
    }
    let x_of = |ppm: f64| 2.0 * (ppm - lo) / span - 1.0;

    let keep: Vec<usize> = (0..spec.freq_axis_ppm.len())
        .filter(|&k| {
            let p = spec.freq_axis_ppm[k];
            !exclusion.iter().any(|w| w.lo_ppm <= p && p <= w.hi_ppm)
        })
        .collect();
    if keep.len() < poly_order + 1 {
        return Err(Error::invalid(format!(
            "baseline fit of order {poly_order} needs at least {} bins outside the \
             exclusion windows, found {}",
            poly_order + 1,
            keep.len()
        )));
    }

    let design = DMatrix::from_fn(keep.len(), poly_order + 1, |i, j| {
        x_of(spec.freq_axis_ppm[keep[i]]).powi(j as i32)
    });
    let rhs = DVector::from_fn(keep.len(), |i, _| spec.intensity[keep[i]]);
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|m| Error::invalid(format!("baseline fit failed: {m}")))?;

    let eval = |ppm: f64| {
        let x = x_of(ppm);
        let mut v = 0.0;
        for j in (0..coeffs.len()).rev() {
            v = v * x + coeffs[j];
        }
        v
    };
    let intensity = spec
        .freq_axis_ppm
        .iter()
        .zip(&spec.intensity)
        .map(|(&p, &y)| y - eval(p))
        .collect();
    Ok(Spectrum { freq_axis_ppm: spec.freq_axis_ppm.clone(), intensity })
}

/// Sums bin intensities inside each window.
///
/// Windows must lie inside the spectral axis and contain at least one bin.
/// Overlapping windows are allowed but logged, since shared bins are then
/// counted toward more than one integral.
pub fn integrate_peaks(spec: &Spectrum, windows: &[PeakWindow]) -> Result<Vec<PeakIntegral>> {
    let (axis_lo, axis_hi) = spec.axis_range_ppm();
    for (i, w) in windows.iter().enumerate() {
        w.validate()?;
        if w.lo_ppm < axis_lo || w.hi_ppm > axis_hi {
            return Err(Error::invalid(format!(
                "window for '{}' line {} [{}, {}] extends outside the spectral axis \
                 [{axis_lo}, {axis_hi}]",
                w.species, w.line_index, w.lo_ppm, w.hi_ppm
            )));
        }
        for other in &windows[..i] {
            if w.overlaps(other) {
                log::warn!(
                    "integration windows '{}' line {} [{}, {}] and '{}' line {} [{}, {}] \
                     overlap; shared bins count toward both integrals",
                    other.species,
                    other.line_index,
                    other.lo_ppm,
                    other.hi_ppm,
                    w.species,
                    w.line_index,
                    w.lo_ppm,
                    w.hi_ppm
                );
            }
        }
    }
    windows
        .iter()
        .map(|w| {
            let bins = spec.bins_in(w.lo_ppm, w.hi_ppm);
            if bins.is_empty() {
                return Err(Error::invalid(format!(
                    "window for '{}' line {} [{}, {}] contains no frequency bins",
                    w.species, w.line_index, w.lo_ppm, w.hi_ppm
                )));
            }
            let area = bins.iter().map(|&k| spec.intensity[k]).sum();
            Ok(PeakIntegral { area, n_bins: bins.len() })
        })
        .collect()
}

/// Converts window integrals into normalized concentrations with standard
/// errors.
///
/// Each integral is divided by its line's intensity weight; the rescaled
/// integrals of one species are averaged and the averages are normalized
/// across species. `sigma_s` is the per-bin noise level of the spectrum:
/// a window of `n` bins then has integral variance `n * sigma_s^2`, which
/// propagates through the averaging and the normalization to first order.
pub fn ft_quantify(
    integrals: &[PeakIntegral],
    windows: &[PeakWindow],
    table: &SpeciesTable,
    sigma_s: f64,
) -> Result<FtQuantResult> {
    if integrals.len() != windows.len() {
        return Err(Error::Dim {
            what: "integrals vs windows",
            expected: windows.len(),
            got: integrals.len(),
        });
    }
    if !(sigma_s > 0.0) || !sigma_s.is_finite() {
        return Err(Error::invalid(format!(
            "noise level must be finite and > 0, got {sigma_s}"
        )));
    }
    let r = table.n_species();
    let mut lines_per_species = vec![0usize; r];
    let mut resolved: Vec<(usize, f64)> = Vec::with_capacity(windows.len());
    for w in windows {
        w.validate()?;
        let j = table.index_of(&w.species).ok_or_else(|| {
            Error::invalid(format!("window references unknown species '{}'", w.species))
        })?;
        let lines = &table.species()[j].lines;
        if w.line_index >= lines.len() {
            return Err(Error::invalid(format!(
                "window references line {} of species '{}', which has {} lines",
                w.line_index,
                w.species,
                lines.len()
            )));
        }
        lines_per_species[j] += 1;
        resolved.push((j, lines[w.line_index].weight));
    }
    if let Some(j) = lines_per_species.iter().position(|&k| k == 0) {
        return Err(Error::invalid(format!(
            "species '{}' has no integration window",
            table.species()[j].name
        )));
    }

    let mut integral = vec![0.0f64; r];
    let mut variance = vec![0.0f64; r];
    let mut peak_areas = Vec::with_capacity(windows.len());
    let mut peak_snrs = Vec::with_capacity(windows.len());
    for ((j, weight), integ) in resolved.iter().zip(integrals) {
        let k_lines = lines_per_species[*j] as f64;
        integral[*j] += integ.area / weight / k_lines;
        variance[*j] += integ.n_bins as f64 * sigma_s * sigma_s / (k_lines * weight).powi(2);
        peak_areas.push(integ.area);
        peak_snrs.push(integ.area / (weight * sigma_s));
    }

    let total: f64 = integral.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid(format!(
            "total integrated signal must be positive to normalize, got {total}"
        )));
    }
    let total_var: f64 = variance.iter().sum();
    let concentrations: Vec<f64> = integral.iter().map(|&i| i / total).collect();
    // Algebraically |C_j| * sqrt(var_j/I_j^2 + total_var/total^2), written
    // without dividing by I_j so a zero integral stays finite.
    let errors: Vec<f64> = integral
        .iter()
        .zip(&variance)
        .map(|(&i, &v)| (v.sqrt() / total).hypot(i * total_var.sqrt() / (total * total)))
        .collect();

    Ok(FtQuantResult {
        species: table.species().iter().map(|s| s.name.clone()).collect(),
        concentrations,
        errors,
        species_integrals: integral,
        peak_areas,
        peak_snrs,
    })
}

/// Sample standard deviation of the bins in a signal-free region — the
/// per-bin noise level fed to [`ft_quantify`].
///
/// The region must not touch any peak window and must contain at least 50
/// bins.
pub fn estimate_sigma_s(
    spec: &Spectrum,
    region_ppm: (f64, f64),
    windows: &[PeakWindow],
) -> Result<f64> {
    let (lo, hi) = region_ppm;
    if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
        return Err(Error::invalid(format!(
            "noise region must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }
    if let Some(w) = windows.iter().find(|w| w.overlaps_range(lo, hi)) {
        return Err(Error::invalid(format!(
            "noise region [{lo}, {hi}] overlaps the window for '{}' line {} [{}, {}]",
            w.species, w.line_index, w.lo_ppm, w.hi_ppm
        )));
    }
    let bins = spec.bins_in(lo, hi);
    if bins.len() < MIN_NOISE_BINS {
        return Err(Error::invalid(format!(
            "noise region [{lo}, {hi}] holds {} bins; at least {MIN_NOISE_BINS} are required",
            bins.len()
        )));
    }
    let n = bins.len() as f64;
    let mean = bins.iter().map(|&k| spec.intensity[k]).sum::<f64>() / n;
    let ss = bins
        .iter()
        .map(|&k| {
            let d = spec.intensity[k] - mean;
            d * d
        })
        .sum::<f64>();
    Ok((ss / (n - 1.0)).sqrt())
}

/// One window per tabulated line, centered on the given positions.
///
/// `centers_ppm` follows the table's global line order and must cover every
/// line.
pub fn windows_at(
    table: &SpeciesTable,
    centers_ppm: &[f64],
    half_width_ppm: f64,
) -> Result<Vec<PeakWindow>> {
    if centers_ppm.len() != table.total_lines() {
        return Err(Error::Dim {
            what: "window centers vs table lines",
            expected: table.total_lines(),
            got: centers_ppm.len(),
        });
    }
    if !(half_width_ppm > 0.0) || !half_width_ppm.is_finite() {
        return Err(Error::invalid(format!(
            "window half-width must be finite and > 0 ppm, got {half_width_ppm}"
        )));
    }
    if let Some(c) = centers_ppm.iter().find(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("non-finite window center {c}")));
    }
    Ok(table
        .lines()
        .zip(centers_ppm)
        .map(|((j, i, _), &c)| PeakWindow {
            species: table.species()[j].name.clone(),
            line_index: i,
            lo_ppm: c - half_width_ppm,
            hi_ppm: c + half_width_ppm,
        })
        .collect())
}

/// One window per tabulated line, centered on the tabulated positions.
pub fn default_windows(table: &SpeciesTable, half_width_ppm: f64) -> Result<Vec<PeakWindow>> {
    windows_at(table, &table.freqs_ppm(), half_width_ppm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{noise_free_fid, simulate_fid, AcquisitionConfig, NoiseModel, NuisanceParams};
    use crate::species::{Species, SpeciesLine, SpeciesTable};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn acq() -> AcquisitionConfig {
        AcquisitionConfig {
            n_samples: 4029,
            dt_s: 25e-6,
            omega0_rad_s: 0.0,
            ref_freq_hz_per_ppm: 75.0,
        }
    }

    fn one_line_table(ppm: f64) -> SpeciesTable {
        SpeciesTable::new(vec![Species {
            name: "solo".into(),
            lines: vec![SpeciesLine { freq_ppm: ppm, weight: 1.0 }],
        }])
        .unwrap()
    }

    fn two_species_table() -> SpeciesTable {
        SpeciesTable::new(vec![
            Species {
                name: "a".into(),
                lines: vec![SpeciesLine { freq_ppm: 50.0, weight: 1.0 }],
            },
            Species {
                name: "b".into(),
                lines: vec![SpeciesLine { freq_ppm: 150.0, weight: 1.0 }],
            },
        ])
        .unwrap()
    }

    #[test]
    fn single_line_peaks_at_its_shift_after_phasing() {
        let acq = acq();
        let table = one_line_table(100.0);
        let (theta, tau) = (0.8, 1e-3);
        let psi = NuisanceParams::at_table(&table, &acq, theta, tau, 20.0);
        let fid = noise_free_fid(&[1.0], &psi, &table, &acq).unwrap();
        let spec = preprocess(&fid, 1.0, 16384, theta, tau).unwrap();

        for pair in spec.freq_axis_ppm.windows(2) {
            assert!(pair[0] > pair[1], "axis must be strictly descending");
        }
        assert_eq!(spec.freq_axis_ppm.len(), 16384);
        assert_eq!(spec.intensity.len(), 16384);

        let k_max = (0..spec.intensity.len())
            .max_by(|&a, &b| spec.intensity[a].partial_cmp(&spec.intensity[b]).unwrap())
            .unwrap();
        assert!(
            (spec.freq_axis_ppm[k_max] - 100.0).abs() <= spec.bin_spacing_ppm(),
            "peak at {} ppm, expected 100",
            spec.freq_axis_ppm[k_max]
        );

        // Phasing must reproduce the spectrum of the already-phased decay.
        let psi0 = NuisanceParams::at_table(&table, &acq, 0.0, 0.0, 20.0);
        let fid0 = noise_free_fid(&[1.0], &psi0, &table, &acq).unwrap();
        let spec0 = preprocess(&fid0, 1.0, 16384, 0.0, 0.0).unwrap();
        assert_relative_eq!(
            spec.intensity[k_max],
            spec0.intensity[k_max],
            max_relative = 1e-3
        );
    }

    #[test]
    fn transform_round_trips_through_the_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let orig: Vec<Complex<f64>> = (0..1024)
            .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let mut buf = orig.clone();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(1024).process(&mut buf);
        planner.plan_fft_inverse(1024).process(&mut buf);
        for (a, b) in orig.iter().zip(&buf) {
            assert_relative_eq!(a.re, b.re / 1024.0, epsilon = 1e-10, max_relative = 1e-10);
            assert_relative_eq!(a.im, b.im / 1024.0, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn quantification_matches_hand_computed_example() {
        let table = SpeciesTable::new(vec![
            Species {
                name: "a".into(),
                lines: vec![
                    SpeciesLine { freq_ppm: 10.0, weight: 1.0 },
                    SpeciesLine { freq_ppm: 20.0, weight: 1.0 },
                ],
            },
            Species {
                name: "b".into(),
                lines: vec![SpeciesLine { freq_ppm: 50.0, weight: 6.0 }],
            },
        ])
        .unwrap();
        let windows = default_windows(&table, 0.5).unwrap();
        let integrals = [
            PeakIntegral { area: 2.0, n_bins: 4 },
            PeakIntegral { area: 2.0, n_bins: 4 },
            PeakIntegral { area: 12.0, n_bins: 9 },
        ];
        let out = ft_quantify(&integrals, &windows, &table, 0.5).unwrap();

        // Weight-normalized averages: ((2/1) + (2/1))/2 = 2 and (12/6)/1 = 2,
        // so both concentrations are 0.5. Errors by hand:
        //   sd_a = sqrt(0.25*(4/4 + 4/4))      = 0.70710678...
        //   sd_b = sqrt(0.25*9/36)             = 0.25
        //   err_a = 0.5*sqrt(0.5/4 + 0.5625/16)    = 0.20009763241977652
        //   err_b = 0.5*sqrt(0.0625/4 + 0.5625/16) = 0.11267347735824966
        assert_eq!(out.species, vec!["a".to_string(), "b".to_string()]);
        assert_relative_eq!(out.species_integrals[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(out.species_integrals[1], 2.0, epsilon = 1e-14);
        assert_relative_eq!(out.concentrations[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(out.concentrations[1], 0.5, epsilon = 1e-14);
        assert_relative_eq!(out.errors[0], 0.20009763241977652, epsilon = 1e-12);
        assert_relative_eq!(out.errors[1], 0.11267347735824966, epsilon = 1e-12);
        assert_eq!(out.peak_areas, vec![2.0, 2.0, 12.0]);
        for snr in &out.peak_snrs {
            assert_relative_eq!(*snr, 4.0, epsilon = 1e-12);
        }
        assert_relative_eq!(out.worst_peak_snr(), 4.0, epsilon = 1e-12);

        let sum: f64 = out.concentrations.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_ratio_survives_the_full_pipeline() {
        let acq = acq();
        let table = two_species_table();
        let psi = NuisanceParams::at_table(&table, &acq, 0.5, 5e-4, 22.0);
        let fid = noise_free_fid(&[0.3, 0.7], &psi, &table, &acq).unwrap();
        let windows = default_windows(&table, DEFAULT_WINDOW_HALF_PPM).unwrap();

        let run = |fid: &FidRecord, zerofill: usize| {
            let spec = preprocess(fid, 1.0, zerofill, 0.5, 5e-4).unwrap();
            let spec = baseline_correct(&spec, DEFAULT_BASELINE_ORDER, &windows).unwrap();
            let integrals = integrate_peaks(&spec, &windows).unwrap();
            ft_quantify(&integrals, &windows, &table, 1e-6).unwrap().concentrations
        };

        // Finite windows clip the line tails, so a few-permille bias is
        // inherent to the windowed-integration approach.
        let c = run(&fid, 16384);
        assert!((c[0] - 0.3).abs() < 5e-3, "c = {c:?}");
        assert!((c[1] - 0.7).abs() < 5e-3, "c = {c:?}");

        // The estimate is scale-invariant to high precision...
        let mut scaled = fid.clone();
        for y in scaled.y_real.iter_mut().chain(scaled.y_imag.iter_mut()) {
            *y *= 3.7;
        }
        let c_scaled = run(&scaled, 16384);
        for (a, b) in c.iter().zip(&c_scaled) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }

        // ...and only weakly sensitive to the zero-fill length.
        let c_short = run(&fid, 8192);
        for (a, b) in c.iter().zip(&c_short) {
            assert!((a - b).abs() < 1e-3, "zerofill drift: {c:?} vs {c_short:?}");
        }
    }

    #[test]
    fn baseline_removes_polynomial_trend_and_keeps_peaks() {
        let n = 2048;
        let axis: Vec<f64> = (0..n).map(|k| 200.0 - 200.0 * k as f64 / (n - 1) as f64).collect();
        let windows = vec![
            PeakWindow { species: "a".into(), line_index: 0, lo_ppm: 140.0, hi_ppm: 160.0 },
            PeakWindow { species: "b".into(), line_index: 0, lo_ppm: 40.0, hi_ppm: 60.0 },
        ];
        let trend = |p: f64| {
            let x = 2.0 * p / 200.0 - 1.0;
            0.5 - 1.2 * x + 0.3 * x * x - 0.7 * x * x * x
        };
        let bump = |p: f64| {
            if (145.0..=155.0).contains(&p) || (45.0..=55.0).contains(&p) {
                2.0
            } else {
                0.0
            }
        };
        let spec = Spectrum {
            intensity: axis.iter().map(|&p| trend(p) + bump(p)).collect(),
            freq_axis_ppm: axis,
        };
        let corrected = baseline_correct(&spec, 3, &windows).unwrap();
        for (k, &p) in corrected.freq_axis_ppm.iter().enumerate() {
            let inside = windows.iter().any(|w| w.lo_ppm <= p && p <= w.hi_ppm);
            let expect = if inside { bump(p) } else { 0.0 };
            assert!(
                (corrected.intensity[k] - expect).abs() < 1e-8,
                "residual {} at {p} ppm",
                corrected.intensity[k] - expect
            );
        }
    }

    #[test]
    fn noise_level_estimate_matches_propagated_variance() {
        let acq = acq();
        let table = one_line_table(100.0);
        let psi = NuisanceParams::at_table(&table, &acq, 0.0, 0.0, 20.0);
        let v = 0.25;
        let fid =
            simulate_fid(&[0.0], &psi, &NoiseModel::new(v).unwrap(), &table, &acq, 5).unwrap();
        let spec = preprocess(&fid, 1.0, 8192, 0.0, 0.0).unwrap();
        let windows = default_windows(&table, 0.5).unwrap();

        let sum_w2: f64 = fid
            .times_real
            .iter()
            .map(|&t| (-2.0 * std::f64::consts::PI * 1.0 * t).exp())
            .sum();
        let expected = (v * sum_w2).sqrt();
        let got = estimate_sigma_s(&spec, (-150.0, -50.0), &windows).unwrap();
        assert!(
            (got - expected).abs() / expected < 0.10,
            "sigma {got} vs analytic {expected}"
        );

        // Overlapping the peak window or giving too few bins must fail.
        assert!(estimate_sigma_s(&spec, (99.8, 102.0), &windows).is_err());
        assert!(estimate_sigma_s(&spec, (-50.01, -50.0), &windows).is_err());
    }

    #[test]
    fn default_windows_cover_every_tabulated_line() {
        let table = two_species_table();
        let windows = default_windows(&table, 0.5).unwrap();
        assert_eq!(windows.len(), table.total_lines());
        for ((j, i, line), w) in table.lines().zip(&windows) {
            assert_eq!(w.species, table.species()[j].name);
            assert_eq!(w.line_index, i);
            assert!(w.lo_ppm < line.freq_ppm && line.freq_ppm < w.hi_ppm);
        }
        assert!(windows_at(&table, &[1.0], 0.5).is_err());
        assert!(windows_at(&table, &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let acq = acq();
        let table = one_line_table(100.0);
        let psi = NuisanceParams::at_table(&table, &acq, 0.0, 0.0, 20.0);
        let fid = noise_free_fid(&[1.0], &psi, &table, &acq).unwrap();

        // Zero-fill shorter than the record, or channels on different grids.
        assert!(preprocess(&fid, 1.0, 4028, 0.0, 0.0).is_err());
        assert!(preprocess(&fid, -1.0, 8192, 0.0, 0.0).is_err());
        let mut skewed = fid.clone();
        skewed.times_imag[0] += 1e-9;
        assert!(preprocess(&skewed, 1.0, 8192, 0.0, 0.0).is_err());

        let spec = preprocess(&fid, 1.0, 8192, 0.0, 0.0).unwrap();
        let bad = |lo: f64, hi: f64| PeakWindow {
            species: "solo".into(),
            line_index: 0,
            lo_ppm: lo,
            hi_ppm: hi,
        };
        assert!(integrate_peaks(&spec, &[bad(10.0, 5.0)]).is_err());
        assert!(integrate_peaks(&spec, &[bad(200.0, 400.0)]).is_err());
        // A sliver between two bins holds no bin at all.
        let spacing = spec.bin_spacing_ppm();
        let between = spec.freq_axis_ppm[10] - 0.5 * spacing;
        assert!(integrate_peaks(&spec, &[bad(between - 1e-9, between + 1e-9)]).is_err());

        // Baseline fit with everything excluded.
        let all = bad(spec.axis_range_ppm().0, spec.axis_range_ppm().1);
        assert!(baseline_correct(&spec, 3, &[all]).is_err());

        // Quantification errors: unknown species, uncovered species,
        // non-positive totals and a bad noise level.
        let windows = default_windows(&table, 0.5).unwrap();
        let one = [PeakIntegral { area: 1.0, n_bins: 3 }];
        let mut alien = windows.clone();
        alien[0].species = "ghost".into();
        assert!(ft_quantify(&one, &alien, &table, 0.5).is_err());
        let two_sp = two_species_table();
        let half = [PeakWindow {
            species: "a".into(),
            line_index: 0,
            lo_ppm: 49.5,
            hi_ppm: 50.5,
        }];
        assert!(ft_quantify(&one, &half, &two_sp, 0.5).is_err());
        assert!(ft_quantify(
            &[PeakIntegral { area: -1.0, n_bins: 3 }],
            &windows,
            &table,
            0.5
        )
        .is_err());
        assert!(ft_quantify(&one, &windows, &table, 0.0).is_err());
        assert!(ft_quantify(&[], &windows, &table, 0.5).is_err());
    }
}
