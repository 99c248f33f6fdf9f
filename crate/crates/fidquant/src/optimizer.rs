//! Global maximization over a box by an annealed Nelder–Mead simplex.
//!
//! The inner loop is a standard simplex (reflect / expand / contract /
//! shrink). While the temperature is positive, every stored vertex value is
//! perturbed by `+T log(u)` and every trial value by `-T log(u)` when
//! vertices are compared, so the walk can accept downhill moves and escape
//! local maxima; the temperature then cools geometrically. At zero
//! temperature no perturbation randoms are drawn and the procedure is
//! exactly a bounded Nelder–Mead. Several restarts from random interior
//! points run independently (and may run concurrently); the merge picks the
//! best unperturbed value, breaking ties by restart index, so results are
//! reproducible for a fixed seed regardless of thread count.
//!
//! Coordinates are affinely rescaled to the unit box internally; candidate
//! steps that leave the box are folded back by reflection at the faces.
//! Objectives always see physical coordinates inside the bounds.

use crate::error::{Error, Result};
use crate::model::{ppm_to_rad_s, AcquisitionConfig, FidRecord};
use crate::species::SpeciesTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One bounded search dimension with an initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub init: f64,
}

/// A validated box: finite bounds, `lower < upper`, inits inside.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedParamSpace {
    dims: Vec<ParamDim>,
}

impl BoundedParamSpace {
    pub fn new(dims: Vec<ParamDim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("search space needs at least one dimension"));
        }
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.init.is_finite()) {
                return Err(Error::invalid(format!("dimension '{}' has non-finite bounds", d.name)));
            }
            if !(d.lower < d.upper) {
                return Err(Error::invalid(format!(
                    "dimension '{}': lower {} must be < upper {}",
                    d.name, d.lower, d.upper
                )));
            }
            if d.init < d.lower || d.init > d.upper {
                return Err(Error::invalid(format!(
                    "dimension '{}': init {} outside [{}, {}]",
                    d.name, d.init, d.lower, d.upper
                )));
            }
        }
        Ok(BoundedParamSpace { dims })
    }

    pub fn dims(&self) -> &[ParamDim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.dims)
            .map(|(v, d)| (v - d.lower) / (d.upper - d.lower))
            .collect()
    }

    fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.dims)
            .map(|(v, d)| d.lower + v * (d.upper - d.lower))
            .collect()
    }
}

/// Folds `x` into `[0, 1]` by repeated reflection at the faces.
fn fold_unit(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        return x;
    }
    let period = 2.0;
    let mut t = x.rem_euclid(period);
    if t > 1.0 {
        t = period - t;
    }
    t
}

/// Cooling schedule and restart policy.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    /// Starting temperature; `None` estimates 2x the standard deviation of
    /// the objective over 50 random points in the box.
    pub t_initial: Option<f64>,
    /// Geometric cooling factor in (0, 1).
    pub cooling_factor: f64,
    /// Simplex iterations per temperature stage; `None` uses `20 * dims`.
    pub steps_per_temp: Option<usize>,
    /// Stop annealing once the temperature falls below this; `None` uses
    /// `1e-3 * t_initial`. A zero-temperature polish runs afterwards.
    pub t_final: Option<f64>,
    /// Independent restarts; the first starts at the dimensions' inits,
    /// later ones at random interior points.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t_initial: None,
            cooling_factor: 0.9,
            steps_per_temp: None,
            t_final: None,
            restarts: 10,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    fn validate(&self) -> Result<()> {
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(Error::invalid(format!(
                "cooling factor must be in (0, 1), got {}",
                self.cooling_factor
            )));
        }
        if let Some(t) = self.t_initial {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::invalid(format!("initial temperature must be >= 0, got {t}")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::invalid("at least one restart is required"));
        }
        if self.steps_per_temp == Some(0) {
            return Err(Error::invalid("steps per temperature must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of a maximization run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Best point in physical coordinates.
    pub best_point: Vec<f64>,
    /// Unperturbed objective value at `best_point`.
    pub best_value: f64,
    /// Total objective evaluations across restarts and probes.
    pub evaluations: u64,
    /// Best value reached by each restart, in restart order.
    pub restart_values: Vec<f64>,
    /// `(temperature, best value so far)` per stage of the winning restart;
    /// the final zero-temperature polish appears as temperature 0.
    pub trace: Vec<(f64, f64)>,
}

/// Relative f-spread convergence threshold for the zero-temperature polish.
const POLISH_F_TOL: f64 = 1e-12;
/// Unit-coordinate diameter threshold for the polish.
const POLISH_X_TOL: f64 = 1e-10;
/// Initial simplex edge length as a fraction of each dimension's range.
const SIMPLEX_STEP: f64 = 0.2;

struct Vertex {
    u: Vec<f64>,
    value: f64,
}

/// How many distinct candidate regions the thermal walk remembers for the
/// final zero-temperature polish, and how far apart (per coordinate, in unit
/// coordinates) two points must be to count as distinct regions.
const ELITE_MAX: usize = 8;
const ELITE_RADIUS: f64 = 0.05;
/// How many distinct regions the walk-sample scout list tracks; each scout
/// region is explored by a short descent after the walk. Kept deeper than
/// the elite list so that a thermally noisy sample from a good region still
/// registers.
const SCOUT_MAX: usize = 24;
/// Budget of short zero-temperature descents a restart may spend exploring
/// scouted and chained regions, and the descents' per-dimension iteration
/// cap.
const DESCENT_MAX: usize = 40;
const DESCENT_ITERS_PER_DIM: usize = 60;
/// Grid resolution of the cyclic one-dimensional refinement scans that run
/// after the descents, and the cap on full scan cycles. The grid must be
/// fine enough that a basin a few percent of the range wide cannot slip
/// between neighboring scan points.
const AXIS_SCAN_POINTS: usize = 96;
const AXIS_SCAN_CYCLES: usize = 4;

/// Whether two unit-coordinate points fall in the same region for the
/// leaderboards and descent bookkeeping.
fn near(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= ELITE_RADIUS)
}

struct Inner<'a, F: Fn(&[f64]) -> f64> {
    space: &'a BoundedParamSpace,
    objective: &'a F,
    evals: u64,
    /// Best raw value ever evaluated in this restart and where it was.
    best_u: Vec<f64>,
    best_value: f64,
    /// Best raw value per distinct region visited, sorted best first.
    elites: Vec<(Vec<f64>, f64)>,
    /// Like `elites`, but deeper and fed only while the thermal walk runs;
    /// these are the regions the post-walk descents start from.
    scouts: Vec<(Vec<f64>, f64)>,
    collect_scouts: bool,
    /// Local optima already reached by a descent; a region whose start point
    /// lies near one of these has nothing new to offer.
    bottoms: Vec<Vec<f64>>,
    descents_left: usize,
}

impl<'a, F: Fn(&[f64]) -> f64> Inner<'a, F> {
    fn eval(&mut self, u: &[f64]) -> f64 {
        let x = self.space.to_physical(u);
        debug_assert!(x
            .iter()
            .zip(self.space.dims())
            .all(|(v, d)| *v >= d.lower && *v <= d.upper));
        self.evals += 1;
        let val = (self.objective)(&x);
        // Non-finite trial values are treated as arbitrarily bad instead of
        // poisoning the simplex.
        let val = if val.is_finite() { val } else { f64::NEG_INFINITY };
        if val > self.best_value {
            self.best_value = val;
            self.best_u.clear();
            self.best_u.extend_from_slice(u);
        }
        Self::offer(&mut self.elites, ELITE_MAX, u, val);
        if self.collect_scouts {
            Self::offer(&mut self.scouts, SCOUT_MAX, u, val);
        }
        val
    }

    /// Records `u` in a per-region leaderboard of capacity `cap`.
    fn offer(list: &mut Vec<(Vec<f64>, f64)>, cap: usize, u: &[f64], val: f64) {
        for e in list.iter_mut() {
            if near(&e.0, u) {
                if val > e.1 {
                    e.0.clear();
                    e.0.extend_from_slice(u);
                    e.1 = val;
                    list.sort_by(|a, b| {
                        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal)
                    });
                }
                return;
            }
        }
        if list.len() < cap {
            list.push((u.to_vec(), val));
        } else if val > list.last().map_or(f64::INFINITY, |e| e.1) {
            let last = list.last_mut().unwrap();
            last.0.clear();
            last.0.extend_from_slice(u);
            last.1 = val;
        } else {
            return;
        }
        list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    }

    /// Short zero-temperature descent into the region around `u`, then
    /// half-step probes along each axis from the optimum found; a probe
    /// landing outside every known region with a competitive value chains a
    /// further descent there, walking across neighboring regions while they
    /// keep improving. Draws no randomness.
    fn descend_from(&mut self, u: &[f64], val: f64) {
        if self.descents_left == 0 || self.bottoms.iter().any(|b| near(b, u)) {
            return;
        }
        self.descents_left -= 1;
        let mut simplex = self.inflate(u, SIMPLEX_STEP / 4.0, Some(val));
        let d = u.len();
        // Zero temperature draws no randomness, so any RNG value works here.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..DESCENT_ITERS_PER_DIM * d.max(1) {
            if Self::converged(&simplex) {
                break;
            }
            self.step(&mut simplex, 0.0, &mut rng);
        }
        let (bi, _) = Self::best_of(&simplex);
        let anchor = simplex[bi].u.clone();
        if self.bottoms.iter().any(|b| near(b, &anchor)) {
            return;
        }
        self.bottoms.push(anchor.clone());
        let bar = self.elites.last().map_or(f64::NEG_INFINITY, |e| e.1);
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut probe = anchor.clone();
                probe[k] = fold_unit(probe[k] + sign * SIMPLEX_STEP / 2.0);
                let pv = self.eval(&probe);
                if pv > bar {
                    self.descend_from(&probe, pv);
                }
            }
        }
    }

    /// Cyclic fine scans along each axis from the best point found so far:
    /// evaluate a uniform grid across one dimension's full range holding the
    /// others fixed, adopt any improvement, then polish it locally; repeat
    /// the cycle while it keeps improving. This catches narrow basins that
    /// the walk and the half-step probes overstep — a basin only a few
    /// percent of the range wide is invisible to both, but cannot hide from
    /// a 1-D sweep — and draws no randomness.
    fn axis_refine(&mut self, rng: &mut ChaCha8Rng) {
        let d = self.best_u.len();
        let polish_iters = DESCENT_ITERS_PER_DIM * d.max(1);
        for _ in 0..AXIS_SCAN_CYCLES {
            let before = self.best_value;
            for k in 0..d {
                let base = self.best_u.clone();
                let base_value = self.best_value;
                for g in 0..AXIS_SCAN_POINTS {
                    let mut u = base.clone();
                    u[k] = (g as f64 + 0.5) / AXIS_SCAN_POINTS as f64;
                    self.eval(&u);
                }
                if self.best_value > base_value {
                    // The scan moved the record; pull the whole point into
                    // the new basin's optimum before scanning the next axis.
                    let start = self.best_u.clone();
                    let known = self.best_value;
                    let mut simplex = self.inflate(&start, SIMPLEX_STEP / 8.0, Some(known));
                    for _ in 0..polish_iters {
                        if Self::converged(&simplex) {
                            break;
                        }
                        self.step(&mut simplex, 0.0, rng);
                    }
                }
            }
            let gain = self.best_value - before;
            if !(gain > POLISH_F_TOL * (self.best_value.abs() + POLISH_F_TOL)) {
                break;
            }
        }
    }

    /// Simplex with vertex 0 at `u0` and one vertex per dimension offset by
    /// `edge` (folded at the faces). `known_v0` skips re-evaluating `u0`.
    fn inflate(&mut self, u0: &[f64], edge: f64, known_v0: Option<f64>) -> Vec<Vertex> {
        let d = u0.len();
        let mut simplex = Vec::with_capacity(d + 1);
        let v0 = known_v0.unwrap_or_else(|| self.eval(u0));
        simplex.push(Vertex { u: u0.to_vec(), value: v0 });
        for k in 0..d {
            let mut u = u0.to_vec();
            u[k] = fold_unit(u[k] + edge);
            let v = self.eval(&u);
            simplex.push(Vertex { u, value: v });
        }
        simplex
    }

    /// One annealed simplex move at temperature `t`.
    ///
    /// Classic thermal-simplex acceptance: every stored value is perturbed to
    /// look worse by `t·ln(u)` and every trial to look better, with fresh
    /// draws each move, and a trial replaces the worst vertex whenever its
    /// perceived value beats the perceived worst. At `t = 0` no randomness is
    /// drawn and this is exactly one bounded Nelder-Mead step.
    fn step(&mut self, simplex: &mut [Vertex], t: f64, rng: &mut ChaCha8Rng) {
        let d = simplex[0].u.len();
        // Perceived values, drawn fresh in vertex order.
        let perceived: Vec<f64> = simplex
            .iter()
            .map(|v| {
                if t > 0.0 {
                    // log of a uniform in (0, 1]
                    v.value + t * (1.0 - rng.random::<f64>()).ln()
                } else {
                    v.value
                }
            })
            .collect();
        // Best = highest perceived value; worst = lowest; ties go to the
        // earliest index.
        let mut i_best = 0;
        let mut i_worst = 0;
        for (i, &p) in perceived.iter().enumerate() {
            if p > perceived[i_best] {
                i_best = i;
            }
            if p < perceived[i_worst] {
                i_worst = i;
            }
        }
        if i_worst == i_best && d > 0 {
            i_worst = if i_best == 0 { 1 } else { 0 };
        }
        let mut second_worst = f64::INFINITY;
        for (i, &p) in perceived.iter().enumerate() {
            if i != i_worst && p < second_worst {
                second_worst = p;
            }
        }
        let y_best = perceived[i_best];
        let mut y_worst = perceived[i_worst];

        // Coordinate sums over all vertices; the trial-point formula below
        // is the standard simplex-move parameterization in terms of this sum
        // and the current worst vertex.
        let mut psum = vec![0.0; d];
        for v in simplex.iter() {
            for k in 0..d {
                psum[k] += v.u[k];
            }
        }

        // Propose a point at `fac` relative to the face opposite the worst
        // vertex (-1 reflect, 2 expand, 0.5 contract); replace the worst
        // vertex if the perceived trial value beats the perceived worst.
        let try_move = |inner: &mut Self,
                            simplex: &mut [Vertex],
                            psum: &mut [f64],
                            y_worst: &mut f64,
                            fac: f64,
                            rng: &mut ChaCha8Rng|
         -> f64 {
            let fac1 = (1.0 - fac) / d as f64;
            let fac2 = fac1 - fac;
            let u: Vec<f64> = (0..d)
                .map(|k| fold_unit(psum[k] * fac1 - simplex[i_worst].u[k] * fac2))
                .collect();
            let raw = inner.eval(&u);
            let val = if t > 0.0 {
                raw - t * (1.0 - rng.random::<f64>()).ln()
            } else {
                raw
            };
            if val > *y_worst {
                for k in 0..d {
                    psum[k] += u[k] - simplex[i_worst].u[k];
                }
                simplex[i_worst] = Vertex { u, value: raw };
                *y_worst = val;
            }
            val
        };

        let refl = try_move(self, simplex, &mut psum, &mut y_worst, -1.0, rng);
        if refl >= y_best {
            try_move(self, simplex, &mut psum, &mut y_worst, 2.0, rng);
        } else if refl <= second_worst {
            let y_save = y_worst;
            let contracted = try_move(self, simplex, &mut psum, &mut y_worst, 0.5, rng);
            if contracted <= y_save {
                // Contraction failed; shrink everything toward the
                // (perceived) best vertex.
                let anchor = simplex[i_best].u.clone();
                for i in 0..simplex.len() {
                    if i == i_best {
                        continue;
                    }
                    for k in 0..d {
                        simplex[i].u[k] =
                            fold_unit(anchor[k] + 0.5 * (simplex[i].u[k] - anchor[k]));
                    }
                    let u = simplex[i].u.clone();
                    simplex[i].value = self.eval(&u);
                }
            }
        }
    }

    fn best_of(simplex: &[Vertex]) -> (usize, f64) {
        let mut idx = 0;
        let mut val = simplex[0].value;
        for (i, v) in simplex.iter().enumerate().skip(1) {
            if v.value > val {
                val = v.value;
                idx = i;
            }
        }
        (idx, val)
    }

    fn converged(simplex: &[Vertex]) -> bool {
        let (_, best) = Self::best_of(simplex);
        let worst = simplex.iter().map(|v| v.value).fold(f64::INFINITY, f64::min);
        let f_spread = best - worst;
        if f_spread.abs() <= POLISH_F_TOL * (best.abs() + POLISH_F_TOL) {
            return true;
        }
        let d = simplex[0].u.len();
        let mut diam = 0.0_f64;
        for v in &simplex[1..] {
            for k in 0..d {
                diam = diam.max((v.u[k] - simplex[0].u[k]).abs());
            }
        }
        diam <= POLISH_X_TOL
    }
}

struct RestartOutcome {
    best_u: Vec<f64>,
    best_value: f64,
    evals: u64,
    trace: Vec<(f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn run_restart<F: Fn(&[f64]) -> f64>(
    space: &BoundedParamSpace,
    objective: &F,
    u0: Vec<f64>,
    t_initial: f64,
    t_final: f64,
    cooling: f64,
    steps_per_temp: usize,
    mut rng: ChaCha8Rng,
) -> RestartOutcome {
    let annealing = t_initial > t_final && t_initial > 0.0;
    let mut inner = Inner {
        space,
        objective,
        evals: 0,
        best_u: u0.clone(),
        best_value: f64::NEG_INFINITY,
        elites: Vec::new(),
        scouts: Vec::new(),
        collect_scouts: annealing,
        bottoms: Vec::new(),
        descents_left: DESCENT_MAX,
    };
    let mut trace = Vec::new();
    let d = space.len();
    let polish_cap = 400 * d.max(1);
    if annealing {
        // Refine the starting point fully before anything else. Starting
        // points can carry data-derived guesses, and the walk below wanders
        // freely: without this polish a good starting basin would only be
        // kept if the walk happened to revisit it.
        {
            let mut simplex = inner.inflate(&u0, SIMPLEX_STEP / 4.0, None);
            for _ in 0..polish_cap {
                if Inner::<F>::converged(&simplex) {
                    break;
                }
                inner.step(&mut simplex, 0.0, &mut rng);
            }
        }
        // One continuous thermal walk: the simplex inflates to the scale the
        // temperature can reach and shrinks as it cools, while `eval` keeps
        // the record of the best raw values seen anywhere along the way.
        let mut simplex = inner.inflate(&u0, SIMPLEX_STEP, None);
        let mut t = t_initial;
        while t > t_final && t > 0.0 {
            for _ in 0..steps_per_temp {
                inner.step(&mut simplex, t, &mut rng);
            }
            trace.push((t, inner.best_value));
            t *= cooling;
        }
        inner.collect_scouts = false;
        // Explore every region the walk scouted with short descents (plus
        // whatever they chain into): regions then compete by their local
        // optima rather than by raw thermal samples.
        let scouts = std::mem::take(&mut inner.scouts);
        for (su, sv) in scouts {
            inner.descend_from(&su, sv);
        }
        // Zero-temperature polish of every distinct region the walk kept,
        // so regions are compared by their optima rather than by whichever
        // thermal sample happened to land lowest.
        let elites = inner.elites.clone();
        for (rank, (eu, ev)) in elites.into_iter().enumerate() {
            let (edge, cap) = if rank == 0 {
                (SIMPLEX_STEP, polish_cap)
            } else {
                (SIMPLEX_STEP / 4.0, polish_cap / 2)
            };
            let mut simplex = inner.inflate(&eu, edge, Some(ev));
            for _ in 0..cap {
                if Inner::<F>::converged(&simplex) {
                    break;
                }
                inner.step(&mut simplex, 0.0, &mut rng);
            }
        }
        // Fine per-axis sweeps from the winner, for basins narrower than
        // anything the machinery above can resolve.
        inner.axis_refine(&mut rng);
    } else {
        let mut simplex = inner.inflate(&u0, SIMPLEX_STEP, None);
        for _ in 0..polish_cap {
            if Inner::<F>::converged(&simplex) {
                break;
            }
            inner.step(&mut simplex, 0.0, &mut rng);
        }
    }
    trace.push((0.0, inner.best_value));
    RestartOutcome {
        best_u: inner.best_u,
        best_value: inner.best_value,
        evals: inner.evals,
        trace,
    }
}

/// Maximizes `objective` over the box with annealed restarts.
///
/// Fully deterministic for a fixed schedule seed: restart `k` uses RNG
/// stream `k + 1`, the temperature probe stream 0, and the merge is ordered
/// by restart index.
pub fn simpsa_maximize<F>(
    objective: F,
    space: &BoundedParamSpace,
    schedule: &AnnealSchedule,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    schedule.validate()?;
    let d = space.len();
    let u_init = space.to_unit(
        &space.dims().iter().map(|dim| dim.init).collect::<Vec<_>>(),
    );
    let init_val = (objective)(&space.to_physical(&u_init));
    if !init_val.is_finite() {
        return Err(Error::invalid(format!(
            "objective is not finite at the initial point ({init_val})"
        )));
    }
    let mut probe_evals = 1u64;

    let t_initial = match schedule.t_initial {
        Some(t) => t,
        None => {
            // 2x the sd of the objective over 50 random points in the box.
            let mut rng = rng_for_stream(schedule.seed, 0);
            let mut vals = Vec::with_capacity(50);
            for _ in 0..50 {
                let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let v = (objective)(&space.to_physical(&u));
                probe_evals += 1;
                if v.is_finite() {
                    vals.push(v);
                }
            }
            if vals.len() < 2 {
                0.0
            } else {
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                2.0 * var.sqrt()
            }
        }
    };
    let t_final = schedule.t_final.unwrap_or(1e-3 * t_initial);
    let steps_per_temp = schedule.steps_per_temp.unwrap_or(20 * d);

    let outcomes: Vec<RestartOutcome> = (0..schedule.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for_stream(schedule.seed, k as u64 + 1);
            let u0 = if k == 0 {
                u_init.clone()
            } else {
                (0..d).map(|_| rng.random::<f64>()).collect()
            };
            run_restart(
                space,
                &objective,
                u0,
                t_initial,
                t_final,
                schedule.cooling_factor,
                steps_per_temp,
                rng,
            )
        })
        .collect();

    let mut best_idx = 0;
    for (k, o) in outcomes.iter().enumerate() {
        if o.best_value > outcomes[best_idx].best_value {
            best_idx = k;
        }
    }
    let evaluations = probe_evals + outcomes.iter().map(|o| o.evals).sum::<u64>();
    let restart_values = outcomes.iter().map(|o| o.best_value).collect();
    let winner = &outcomes[best_idx];
    Ok(OptimResult {
        best_point: space.to_physical(&winner.best_u),
        best_value: winner.best_value,
        evaluations,
        restart_values,
        trace: winner.trace.clone(),
    })
}

/// ChaCha stream `stream` of the base seed: restart randomness is decoupled
/// from restart count and execution order.
fn rng_for_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.into());
    rng
}

/// Plain bounded Nelder–Mead: the annealed walk with the temperature pinned
/// to zero and a single restart from the inits.
pub fn nelder_mead_maximize<F>(
    objective: F,
    space: &BoundedParamSpace,
    max_stages: usize,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let schedule = AnnealSchedule {
        t_initial: Some(0.0),
        steps_per_temp: Some(max_stages.max(1)),
        t_final: None,
        restarts: 1,
        seed: 0,
        ..AnnealSchedule::default()
    };
    simpsa_maximize(objective, space, &schedule)
}

/// Default nuisance-and-noise search space for a decay record: one bounded
/// frequency per line (tabulated shift +/- 3 ppm), a phase in [-pi, pi], a
/// dead time up to 128 dwell times, a decay rate in [1, 200] /s, and the
/// noise variance searched in log-space over 8 decades around the tail
/// variance of the record.
pub fn default_space(
    table: &SpeciesTable,
    acq: &AcquisitionConfig,
    fid: &FidRecord,
) -> Result<BoundedParamSpace> {
    acq.validate()?;
    let mut dims = Vec::new();
    for (idx, (_, _, line)) in table.lines().enumerate() {
        let center = ppm_to_rad_s(line.freq_ppm, acq.ref_freq_hz_per_ppm);
        let half = ppm_to_rad_s(3.0, acq.ref_freq_hz_per_ppm);
        dims.push(ParamDim {
            name: format!("freq[{idx}]"),
            lower: center - half,
            upper: center + half,
            init: center,
        });
    }
    dims.push(ParamDim {
        name: "theta".into(),
        lower: -std::f64::consts::PI,
        upper: std::f64::consts::PI,
        init: 0.0,
    });
    dims.push(ParamDim {
        name: "tau".into(),
        lower: 0.0,
        upper: 128.0 * acq.dt_s,
        init: 0.0,
    });
    dims.push(ParamDim { name: "alpha".into(), lower: 1.0, upper: 200.0, init: 10.0 });
    let tail = fid.tail_variance(0.1);
    let floor = 1e-12
        * fid
            .y_real
            .iter()
            .chain(fid.y_imag.iter())
            .map(|y| y * y)
            .fold(0.0_f64, f64::max)
            .max(1e-300);
    let tail = tail.max(floor);
    dims.push(ParamDim {
        name: "log_v".into(),
        lower: (tail * 1e-4).ln(),
        upper: (tail * 1e4).ln(),
        init: tail.ln(),
    });
    BoundedParamSpace::new(dims)
}
