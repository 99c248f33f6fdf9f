//! The annealed simplex search against a deliberately multimodal surface.
//! A plain downhill simplex gets trapped in a local optimum of the
//! 4-dimensional Rastrigin function; the annealed, restarted search finds
//! the global optimum from the same starting point.
//!
//! Run with: cargo run --example anneal_multimodal

use fidquant::optimizer::{
    nelder_mead_maximize, simpsa_maximize, AnnealSchedule, BoundedParamSpace, ParamDim,
};

/// Classic egg-carton test surface, negated so the task is maximization;
/// the single global maximum of 0 sits at the origin among thousands of
/// local optima.
fn neg_rastrigin(x: &[f64]) -> f64 {
    use std::f64::consts::TAU;
    -(10.0 * x.len() as f64
        + x.iter().map(|&xi| xi * xi - 10.0 * (TAU * xi).cos()).sum::<f64>())
}

fn main() -> anyhow::Result<()> {
    let space = BoundedParamSpace::new(
        (0..4)
            .map(|i| ParamDim {
                name: format!("x[{i}]"),
                lower: -5.12,
                upper: 5.12,
                init: 3.9, // far from the optimum, near a local peak
            })
            .collect(),
    )?;

    let plain = nelder_mead_maximize(neg_rastrigin, &space, 400)?;
    println!(
        "plain simplex:    value {:+10.4} at {:?} after {} evaluations",
        plain.best_value,
        plain.best_point.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
        plain.evaluations
    );

    let schedule = AnnealSchedule { seed: 1, ..AnnealSchedule::default() };
    let annealed = simpsa_maximize(neg_rastrigin, &space, &schedule)?;
    println!(
        "annealed search:  value {:+10.4} at {:?} after {} evaluations",
        annealed.best_value,
        annealed.best_point.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
        annealed.evaluations
    );
    println!(
        "restart bests: {:?}",
        annealed.restart_values.iter().map(|v| (v * 1e2).round() / 1e2).collect::<Vec<_>>()
    );

    assert!(annealed.best_value > -1e-6, "annealing should reach the global optimum");
    assert!(plain.best_value < -1.0, "the plain simplex should stay trapped");
    println!("\nthe annealed search escaped the local optima; the plain simplex did not");
    Ok(())
}
