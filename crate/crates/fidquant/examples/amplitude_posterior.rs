//! With the nuisance parameters known, the concentration amplitudes have a
//! closed-form Gaussian posterior. This example computes it on a noisy
//! record and shows the posterior tightening as the record grows.
//!
//! Run with: cargo run --example amplitude_posterior

use fidquant::inference::{amplitude_posterior, log_marginal_likelihood, AmplitudePrior};
use fidquant::io::{read_species, WeightColumn, BUNDLED_SPECIES_NAME};
use fidquant::model::{simulate_fid, AcquisitionConfig, NoiseModel, NuisanceParams};

fn main() -> anyhow::Result<()> {
    let table = read_species(BUNDLED_SPECIES_NAME, WeightColumn::Theoretical)?;
    let truth = [0.3, 0.7];
    let v = 0.09;
    let prior = AmplitudePrior::isotropic(table.n_species(), 1e6);

    println!("true amplitudes: {truth:?}, noise variance {v}");
    println!("\n n samples | posterior mean            | posterior sd             | log evidence");
    for n in [64, 256, 1024, 4029] {
        let acq = AcquisitionConfig { n_samples: n, ..AcquisitionConfig::default() };
        let psi = NuisanceParams::at_table(&table, &acq, 0.0, 0.0, 22.0);
        let fid = simulate_fid(&truth, &psi, &NoiseModel::new(v)?, &table, &acq, 11)?;

        let post = amplitude_posterior(&fid, &psi, v, &prior, &table)?;
        let ev = log_marginal_likelihood(&fid, &psi, v, &prior, &table)?;
        println!(
            "  {n:8} | [{:+.5}, {:+.5}]      | [{:.5}, {:.5}]       | {ev:.2}",
            post.mean[0],
            post.mean[1],
            post.cov[(0, 0)].sqrt(),
            post.cov[(1, 1)].sqrt(),
        );
    }
    println!("\nthe mean converges on the truth and the sd shrinks as data accrue");
    Ok(())
}
