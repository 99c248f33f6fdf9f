//! Scratch probe: rebuild failing sweep cells and inspect fit diagnostics.

use fidquant::harness::{snr_to_noise_v, FtParams};
use fidquant::io::WeightColumn;
use fidquant::model::ppm_to_rad_s;
use fidquant::model::{simulate_fid, AcquisitionConfig, NoiseModel, NuisanceParams};
use fidquant::quantify::{fit, FitOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

fn main() -> fidquant::Result<()> {
    let table = fidquant::io::read_species("bundled", WeightColumn::Theoretical)?;
    let acq = AcquisitionConfig::default();
    let a = [0.3, 0.7];
    let alpha = 22.0;
    let params = FtParams::default();
    let jitter_ppm = 3.0;
    let tau_max = 1.0e-3;
    let v = snr_to_noise_v(9.3, &a, &table, &acq, &params, alpha)?;
    let restarts: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6);
    for rep in [1u64, 2] {
        let cell_seed = derive(derive(0, 0), rep);
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
        let freqs_rad_s: Vec<f64> = table
            .freqs_ppm()
            .iter()
            .map(|&ppm| {
                let j = jitter_ppm * (2.0 * rng.random::<f64>() - 1.0);
                ppm_to_rad_s(ppm + j, acq.ref_freq_hz_per_ppm)
            })
            .collect();
        let theta = std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0);
        let tau = tau_max * rng.random::<f64>();
        let psi = NuisanceParams { freqs_rad_s, theta_rad: theta, tau_s: tau, alpha_per_s: alpha };
        let truth_ppm = psi.freqs_ppm(&acq);
        let fid = simulate_fid(&a, &psi, &NoiseModel::new(v)?, &table, &acq, derive(cell_seed, 1))?;
        let mut opts = FitOptions::default();
        opts.seed = derive(cell_seed, 2);
        opts.n_samples = 2000;
        opts.schedule.restarts = restarts;
        if std::env::args().nth(2).as_deref() == Some("nm") {
            opts.schedule.t_initial = Some(0.0);
            opts.schedule.steps_per_temp = Some(6000);
            opts.schedule.restarts = 1;
        }
        opts.truth_freqs_ppm = Some(truth_ppm.clone());
        let t0 = std::time::Instant::now();
        let out = fit(&fid, &table, &opts)?;
        let dt = t0.elapsed().as_secs_f64();
        println!("rep {rep}: truth theta {theta:.3} tau {:.2e}", tau);
        println!(
            "  truth ppm {:?}",
            truth_ppm.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        println!(
            "  freq err  {:?}",
            out.freq_error_ppm
                .as_ref()
                .unwrap()
                .iter()
                .map(|x| (x * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
        println!(
            "  est C0 {:.4}  v_hat {:.3} (v true {:.3})  theta_hat {:.3} tau_hat {:.2e} alpha_hat {:.2}",
            out.species[0].mean,
            out.v_hat,
            v,
            out.psi_hat.theta_rad,
            out.psi_hat.tau_s,
            out.psi_hat.alpha_per_s
        );
        println!(
            "  restart values {:?}  evals {}  {:.1}s",
            out.diagnostics
                .restart_values
                .iter()
                .map(|x| (x * 10.0).round() / 10.0)
                .collect::<Vec<_>>(),
            out.diagnostics.evaluations,
            dt
        );
    }
    Ok(())
}
