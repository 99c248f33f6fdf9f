//! Independent reference implementations used only by the test suite.
//!
//! Everything here deliberately avoids the library's computational paths:
//! the basis is evaluated sample by sample with no recurrences, sums are
//! compensated, small matrices are inverted by adjugate/Cramer formulas and
//! the dense evidence goes through a hand-rolled Cholesky of the full
//! `(N+M) x (N+M)` covariance.

#![allow(dead_code)]

use fidquant::inference::AmplitudePrior;
use fidquant::model::{AcquisitionConfig, FidRecord, NuisanceParams};
use fidquant::species::{Species, SpeciesLine, SpeciesTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kahan-compensated sum of an iterator of terms.
pub fn csum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for term in terms {
        let t = term - c;
        let s = sum + t;
        c = (s - sum) - t;
        sum = s;
    }
    sum
}

pub fn cdot(a: &[f64], b: &[f64]) -> f64 {
    csum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Naive basis entry: no recurrences, straight from the definition.
pub fn naive_basis_entry(
    freq_rad_s: f64,
    omega0: f64,
    weight: f64,
    t: f64,
    tau: f64,
    theta: f64,
    alpha: f64,
    sine: bool,
) -> f64 {
    let arg = (freq_rad_s - omega0) * (t + tau) + theta;
    let osc = if sine { arg.sin() } else { arg.cos() };
    weight * osc * (-alpha * t).exp()
}

/// Dense `n x r` basis for one channel, row-major `Vec<Vec<f64>>`.
pub fn naive_basis(
    psi: &NuisanceParams,
    table: &SpeciesTable,
    acq: &AcquisitionConfig,
    times: &[f64],
    sine: bool,
) -> Vec<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let mut row = vec![0.0; table.n_species()];
            let mut line_idx = 0;
            for (j, sp) in table.species().iter().enumerate() {
                row[j] = csum(sp.lines.iter().map(|line| {
                    let w = psi.freqs_rad_s[line_idx];
                    line_idx += 1;
                    naive_basis_entry(
                        w,
                        acq.omega0_rad_s,
                        line.weight,
                        t,
                        psi.tau_s,
                        psi.theta_rad,
                        psi.alpha_per_s,
                        sine,
                    )
                }));
            }
            row
        })
        .collect()
}

/// Determinant and adjugate-based inverse for r in 1..=3.
pub fn small_inverse(m: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let r = m.len();
    match r {
        1 => (m[0][0], vec![vec![1.0 / m[0][0]]]),
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let inv = vec![
                vec![m[1][1] / det, -m[0][1] / det],
                vec![-m[1][0] / det, m[0][0] / det],
            ];
            (det, inv)
        }
        3 => {
            let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
            let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
            let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            let adj = |a: usize, b: usize| -> f64 {
                // Cofactor of entry (b, a) for the transpose-of-cofactors rule.
                let rows: Vec<usize> = (0..3).filter(|&i| i != b).collect();
                let cols: Vec<usize> = (0..3).filter(|&j| j != a).collect();
                let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]]
                    - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
                let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                sign * minor
            };
            let inv = (0..3)
                .map(|i| (0..3).map(|j| adj(i, j) / det).collect())
                .collect();
            (det, inv)
        }
        _ => panic!("small_inverse supports r <= 3"),
    }
}

pub struct OraclePosterior {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

fn prior_parts(prior: &AmplitudePrior, r: usize) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    match prior {
        AmplitudePrior::Isotropic { mu0, gamma } => {
            let mut prec = vec![vec![0.0; r]; r];
            for i in 0..r {
                prec[i][i] = 1.0 / gamma;
            }
            let pm = mu0.iter().map(|m| m / gamma).collect();
            (prec, pm, r as f64 * gamma.ln())
        }
        AmplitudePrior::Gaussian { mu0, s0 } => {
            let s: Vec<Vec<f64>> = (0..r)
                .map(|i| (0..r).map(|j| s0[(i, j)]).collect())
                .collect();
            let (det, prec) = small_inverse(&s);
            let pm = (0..r)
                .map(|i| csum((0..r).map(|j| prec[i][j] * mu0[j])))
                .collect();
            (prec, pm, det.ln())
        }
    }
}

/// Posterior by naive normal equations: compensated Gram assembly and
/// adjugate inversion. Supports r <= 3.
pub fn oracle_posterior(
    fid: &FidRecord,
    psi: &NuisanceParams,
    v: f64,
    prior: &AmplitudePrior,
    table: &SpeciesTable,
) -> OraclePosterior {
    let r = table.n_species();
    let phi = naive_basis(psi, table, &fid.acq, &fid.times_real, false);
    let psi_m = naive_basis(psi, table, &fid.acq, &fid.times_imag, true);
    let col = |m: &Vec<Vec<f64>>, j: usize| -> Vec<f64> { m.iter().map(|row| row[j]).collect() };
    let (prior_prec, prior_pm, _) = prior_parts(prior, r);
    let mut a = vec![vec![0.0; r]; r];
    let mut b = vec![0.0; r];
    for i in 0..r {
        let phi_i = col(&phi, i);
        let psi_i = col(&psi_m, i);
        for j in 0..r {
            a[i][j] = prior_prec[i][j]
                + (cdot(&phi_i, &col(&phi, j)) + cdot(&psi_i, &col(&psi_m, j))) / v;
        }
        b[i] = prior_pm[i] + (cdot(&phi_i, &fid.y_real) + cdot(&psi_i, &fid.y_imag)) / v;
    }
    let (_, cov) = small_inverse(&a);
    let mean = (0..r)
        .map(|i| csum((0..r).map(|j| cov[i][j] * b[j])))
        .collect();
    OraclePosterior { mean, cov }
}

/// Real-channel-only posterior mean by naive normal equations:
/// `(S0^-1 + Phi'Phi / v)^-1 (S0^-1 mu0 + Phi'y1 / v)`.
pub fn oracle_mu_real(
    fid: &FidRecord,
    psi: &NuisanceParams,
    v: f64,
    prior: &AmplitudePrior,
    table: &SpeciesTable,
) -> Vec<f64> {
    let r = table.n_species();
    let phi = naive_basis(psi, table, &fid.acq, &fid.times_real, false);
    let col = |j: usize| -> Vec<f64> { phi.iter().map(|row| row[j]).collect() };
    let (prior_prec, prior_pm, _) = prior_parts(prior, r);
    let mut a = vec![vec![0.0; r]; r];
    let mut b = vec![0.0; r];
    for i in 0..r {
        let phi_i = col(i);
        for j in 0..r {
            a[i][j] = prior_prec[i][j] + cdot(&phi_i, &col(j)) / v;
        }
        b[i] = prior_pm[i] + cdot(&phi_i, &fid.y_real) / v;
    }
    let (_, inv) = small_inverse(&a);
    (0..r)
        .map(|i| csum((0..r).map(|j| inv[i][j] * b[j])))
        .collect()
}

/// Hand-rolled lower Cholesky of a dense symmetric positive-definite matrix.
fn dense_cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = csum((0..j).map(|k| l[i][k] * l[j][k]));
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s = csum((0..i).map(|k| l[i][k] * x[k]));
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

/// Evidence by the dense joint Gaussian `log N(y; X mu0, v I + X S0 X')`
/// over the stacked channels. O((N+M)^3) — only for small instances.
pub fn oracle_evidence(
    fid: &FidRecord,
    psi: &NuisanceParams,
    v: f64,
    prior: &AmplitudePrior,
    table: &SpeciesTable,
) -> f64 {
    let r = table.n_species();
    let phi = naive_basis(psi, table, &fid.acq, &fid.times_real, false);
    let psi_m = naive_basis(psi, table, &fid.acq, &fid.times_imag, true);
    let mut x_rows = phi;
    x_rows.extend(psi_m);
    let nm = x_rows.len();
    let y: Vec<f64> = fid.y_real.iter().chain(fid.y_imag.iter()).copied().collect();
    let (mu0, s0): (Vec<f64>, Vec<Vec<f64>>) = match prior {
        AmplitudePrior::Isotropic { mu0, gamma } => {
            let mut s = vec![vec![0.0; r]; r];
            for i in 0..r {
                s[i][i] = *gamma;
            }
            (mu0.iter().copied().collect(), s)
        }
        AmplitudePrior::Gaussian { mu0, s0 } => (
            mu0.iter().copied().collect(),
            (0..r).map(|i| (0..r).map(|j| s0[(i, j)]).collect()).collect(),
        ),
    };
    // C = v I + X S0 X'
    let mut c = vec![vec![0.0; nm]; nm];
    for p in 0..nm {
        let xs: Vec<f64> = (0..r)
            .map(|i| csum((0..r).map(|j| x_rows[p][j] * s0[j][i])))
            .collect();
        for q in 0..nm {
            c[p][q] = cdot(&xs, &x_rows[q]) + if p == q { v } else { 0.0 };
        }
    }
    let m: Vec<f64> = (0..nm)
        .map(|p| csum((0..r).map(|j| x_rows[p][j] * mu0[j])))
        .collect();
    let resid: Vec<f64> = (0..nm).map(|p| y[p] - m[p]).collect();
    let l = dense_cholesky(&c);
    let z = forward_solve(&l, &resid);
    let quad = csum(z.iter().map(|zi| zi * zi));
    let logdet = 2.0 * csum((0..nm).map(|i| l[i][i].ln()));
    -0.5 * (quad + logdet + nm as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Evidence for r = 1 by Simpson quadrature of `p(y|a) p(a)` over a grid
/// covering the posterior mass, log-stabilized at the grid maximum.
pub fn oracle_evidence_quadrature(
    fid: &FidRecord,
    psi: &NuisanceParams,
    v: f64,
    prior: &AmplitudePrior,
    table: &SpeciesTable,
) -> f64 {
    assert_eq!(table.n_species(), 1, "quadrature oracle is one-dimensional");
    let (mu0, gamma) = match prior {
        AmplitudePrior::Isotropic { mu0, gamma } => (mu0[0], *gamma),
        AmplitudePrior::Gaussian { mu0, s0 } => (mu0[0], s0[(0, 0)]),
    };
    let phi = naive_basis(psi, table, &fid.acq, &fid.times_real, false);
    let psi_m = naive_basis(psi, table, &fid.acq, &fid.times_imag, true);
    let x: Vec<f64> = phi.iter().chain(psi_m.iter()).map(|row| row[0]).collect();
    let y: Vec<f64> = fid.y_real.iter().chain(fid.y_imag.iter()).copied().collect();
    let nm = x.len() as f64;
    let log_integrand = |a: f64| -> f64 {
        let misfit = csum(y.iter().zip(&x).map(|(yi, xi)| {
            let r = yi - xi * a;
            r * r
        }));
        let da = a - mu0;
        -misfit / (2.0 * v)
            - 0.5 * nm * ((2.0 * std::f64::consts::PI * v).ln())
            - da * da / (2.0 * gamma)
            - 0.5 * (2.0 * std::f64::consts::PI * gamma).ln()
    };
    // Posterior center and width from the 1-d normal equations.
    let prec = 1.0 / gamma + cdot(&x, &x) / v;
    let center = (mu0 / gamma + cdot(&x, &y) / v) / prec;
    let sd = prec.sqrt().recip();
    let half = 12.0 * sd;
    let n_pts = 8193; // odd, Simpson-ready
    let h = 2.0 * half / (n_pts - 1) as f64;
    let logs: Vec<f64> = (0..n_pts)
        .map(|k| log_integrand(center - half + k as f64 * h))
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weight = |k: usize| -> f64 {
        if k == 0 || k == n_pts - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let integral = csum((0..n_pts).map(|k| weight(k) * (logs[k] - peak).exp())) * h / 3.0;
    peak + integral.ln()
}

/// A deterministic random instance for oracle comparisons.
pub struct Instance {
    pub fid: FidRecord,
    pub psi: NuisanceParams,
    pub table: SpeciesTable,
    pub v: f64,
    pub prior: AmplitudePrior,
}

/// Builds a small random instance: r species totalling up to 5 lines,
/// channels of different lengths, optionally on non-uniform grids, data
/// drawn i.i.d. so both code paths see generic values.
pub fn random_instance(seed: u64, r: usize, uniform_grid: bool, isotropic_prior: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut species = Vec::new();
    for j in 0..r {
        let n_lines = if r == 1 { rng.random_range(1..=3) } else { rng.random_range(1..=2) };
        let lines = (0..n_lines)
            .map(|_| SpeciesLine {
                freq_ppm: rng.random_range(5.0..220.0),
                weight: rng.random_range(0.5..6.0),
            })
            .collect();
        species.push(Species { name: format!("s{j}"), lines });
    }
    let table = SpeciesTable::new(species).unwrap();
    let acq = AcquisitionConfig::default();
    fn make_times(rng: &mut ChaCha8Rng, n: usize, dt: f64, uniform: bool) -> Vec<f64> {
        if uniform {
            (0..n).map(|k| k as f64 * dt).collect()
        } else {
            let mut t: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0.0..(n as f64 * dt * 2.0)))
                .collect();
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            t.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            while t.len() < n {
                t.push(t.last().unwrap() + dt);
            }
            t
        }
    }
    let n = rng.random_range(8..=32);
    let m = rng.random_range(8..=32);
    let times_real = make_times(&mut rng, n, acq.dt_s, uniform_grid);
    let times_imag = make_times(&mut rng, m, acq.dt_s, uniform_grid);
    let psi = NuisanceParams {
        freqs_rad_s: table
            .freqs_ppm()
            .iter()
            .map(|p| fidquant::model::ppm_to_rad_s(p + rng.random_range(-1.0..1.0), acq.ref_freq_hz_per_ppm))
            .collect(),
        theta_rad: rng.random_range(-3.0..3.0),
        tau_s: rng.random_range(0.0..3e-3),
        alpha_per_s: rng.random_range(2.0..60.0),
    };
    let y_real: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y_imag: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let fid = FidRecord::new(acq, times_real, times_imag, y_real, y_imag).unwrap();
    let v = rng.random_range(0.02..5.0);
    let prior = if isotropic_prior {
        let mu0 = nalgebra::DVector::from_iterator(r, (0..r).map(|_| rng.random_range(-1.0..1.0)));
        AmplitudePrior::Isotropic { mu0, gamma: rng.random_range(0.1..50.0) }
    } else {
        // Random SPD covariance: L L' + d I with positive diagonal L.
        let mut l = nalgebra::DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..=i {
                l[(i, j)] = if i == j {
                    rng.random_range(0.3..2.0)
                } else {
                    rng.random_range(-0.5..0.5)
                };
            }
        }
        let s0 = &l * l.transpose();
        let mu0 = nalgebra::DVector::from_iterator(r, (0..r).map(|_| rng.random_range(-1.0..1.0)));
        AmplitudePrior::Gaussian { mu0, s0 }
    };
    Instance { fid, psi, table, v, prior }
}

/// Largest absolute entry of a nalgebra matrix (for relative comparisons).
pub fn max_abs(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
