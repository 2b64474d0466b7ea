//! Joint warm-up solve over the first T steps.
//!
//! Reliability scores are held constant over the warm-up span and estimated
//! together with the T state vectors by coordinate descent: a closed-form
//! score update alternates with an exact per-process tridiagonal solve of
//! the smoothed state system. Soft sensors are built once from the initial
//! per-process means and their fits held fixed, so each half-step exactly
//! minimizes the same joint objective and the objective is non-increasing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Config, MeasurementFrame, Topology, WARMUP_ITERATION_CAP};
use crate::reliability::{attributed_errors, scores_from_attributed};
use crate::soft_sensor::{
    fit_local, knn, select_explanatory, soft_reliability, ErrorNormalizer, SoftSensorRecord,
};

/// A warm-up instance: T consecutive (already normalized) frames plus the
/// topology and configuration they belong to.
#[derive(Debug, Clone, Copy)]
pub struct WarmupProblem<'a> {
    pub frames: &'a [MeasurementFrame],
    pub topology: &'a Topology,
    pub config: &'a Config,
}

/// Result of the coordinate-descent solve.
#[derive(Debug, Clone)]
pub struct WarmupSolution {
    /// Constant warm-up reliability scores.
    pub scores: Vec<f64>,
    /// Estimated states, indexed `[t][process]`.
    pub states: Vec<Vec<f64>>,
    /// Soft sensors built for each warm-up step, indexed `[t]`.
    pub softs: Vec<Vec<SoftSensorRecord>>,
    pub iterations: usize,
    /// False when the iteration cap fired before the stop rule.
    pub converged: bool,
    /// Joint objective after every iteration.
    pub objective_trace: Vec<f64>,
    /// Fitting-error extrema accumulated over all warm-up soft sensors.
    pub error_normalizer: ErrorNormalizer,
}

/// Initial states: the per-process mean of its sensors at each step.
pub fn init_states(frames: &[MeasurementFrame], topology: &Topology) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|frame| {
            (0..topology.n_processes())
                .map(|p| {
                    let sensors = topology.sensors_of(p);
                    sensors.iter().map(|&s| frame.values[s]).sum::<f64>() / sensors.len() as f64
                })
                .collect()
        })
        .collect()
}

/// Frozen construction choices for one warm-up soft sensor; targets can be
/// re-fit against updated states without consuming randomness.
#[derive(Debug, Clone)]
struct SoftPlan {
    t: usize,
    process: usize,
    index: usize,
    explanatory: Vec<usize>,
    /// Frame indices of the K nearest neighbors, query step excluded.
    neighbors: Vec<usize>,
}

fn plan_soft_sensors<R: Rng>(
    frames: &[MeasurementFrame],
    topology: &Topology,
    config: &Config,
    rng: &mut R,
) -> Result<Vec<SoftPlan>> {
    let all: Vec<(i64, &[f64])> = frames
        .iter()
        .map(|f| (f.t, f.values.as_slice()))
        .collect();
    let mut plans = Vec::new();
    for (t, frame) in frames.iter().enumerate() {
        // Neighbor pool is the whole warm-up span minus the query step.
        let mut candidates = Vec::with_capacity(all.len() - 1);
        let mut original = Vec::with_capacity(all.len() - 1);
        for (i, c) in all.iter().enumerate() {
            if i != t {
                candidates.push(*c);
                original.push(i);
            }
        }
        for p in 0..topology.n_processes() {
            for m in 1..=config.soft_sensors[p] {
                let explanatory =
                    select_explanatory(topology, p, config.explanatory_ratio, rng)?;
                let point: Vec<f64> = explanatory
                    .iter()
                    .map(|&s| frame.values[s])
                    .collect();
                let picked = knn(&candidates, &explanatory, &point, config.neighbors)?;
                plans.push(SoftPlan {
                    t,
                    process: p,
                    index: m,
                    explanatory,
                    neighbors: picked.into_iter().map(|i| original[i]).collect(),
                });
            }
        }
    }
    Ok(plans)
}

/// Fit every planned soft sensor against the given state targets. Errors
/// are normalized against the extrema of the whole warm-up batch.
fn fit_from_plans(
    plans: &[SoftPlan],
    frames: &[MeasurementFrame],
    states: &[Vec<f64>],
    _topology: &Topology,
) -> Result<(Vec<Vec<SoftSensorRecord>>, ErrorNormalizer)> {
    let mut fits = Vec::with_capacity(plans.len());
    let mut error_normalizer = ErrorNormalizer::new();
    for plan in plans {
        let rows: Vec<Vec<f64>> = plan
            .neighbors
            .iter()
            .map(|&i| {
                plan.explanatory
                    .iter()
                    .map(|&s| frames[i].values[s])
                    .collect()
            })
            .collect();
        let targets: Vec<f64> = plan
            .neighbors
            .iter()
            .map(|&i| states[i][plan.process])
            .collect();
        let fit = fit_local(&rows, &targets)?;
        error_normalizer.observe(fit.fit_error);
        fits.push(fit);
    }

    let mut softs: Vec<Vec<SoftSensorRecord>> = vec![Vec::new(); frames.len()];
    for (plan, fit) in plans.iter().zip(fits) {
        let mut record = SoftSensorRecord {
            process: plan.process,
            index: plan.index,
            explanatory: plan.explanatory.clone(),
            weights: fit.weights,
            bias: fit.bias,
            fit_error: fit.fit_error,
            norm_error: error_normalizer.normalized(fit.fit_error),
            output: 0.0,
            reliability: 0.0,
        };
        record.output = record.evaluate(&frames[plan.t].values);
        softs[plan.t].push(record);
    }
    Ok((softs, error_normalizer))
}

/// Score half-step: closed-form constrained update with the window replaced
/// by the full warm-up span.
pub fn update_scores_warmup(
    states: &[Vec<f64>],
    softs: &[Vec<SoftSensorRecord>],
    frames: &[MeasurementFrame],
    topology: &Topology,
) -> Vec<f64> {
    let numerators = attributed_errors(
        frames
            .iter()
            .zip(states)
            .zip(softs)
            .map(|((f, z), s)| (f.values.as_slice(), z.as_slice(), s.as_slice())),
        topology,
    );
    scores_from_attributed(&numerators)
}

/// Solve a symmetric tridiagonal system with main diagonal `diag` and
/// sub/super-diagonal `off` by Thomas elimination.
pub fn solve_symmetric_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d = diag.to_vec();
    let mut r = rhs.to_vec();
    for i in 1..n {
        if d[i - 1].abs() < 1e-300 {
            return Err(Error::Singular(format!("zero pivot at row {}", i - 1)));
        }
        let factor = off[i - 1] / d[i - 1];
        d[i] -= factor * off[i - 1];
        r[i] -= factor * r[i - 1];
    }
    if d[n - 1].abs() < 1e-300 {
        return Err(Error::Singular(format!("zero pivot at row {}", n - 1)));
    }
    let mut x = vec![0.0; n];
    x[n - 1] = r[n - 1] / d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (r[i] - off[i] * x[i + 1]) / d[i];
    }
    Ok(x)
}

/// State half-step: exact solve of the per-process linear system obtained
/// by zeroing the state partials of the joint objective, per process a
/// symmetric tridiagonal system in t.
pub fn solve_states(
    scores: &[f64],
    softs: &[Vec<SoftSensorRecord>],
    frames: &[MeasurementFrame],
    gamma: &[f64],
    topology: &Topology,
) -> Result<Vec<Vec<f64>>> {
    let t_len = frames.len();
    let n_proc = topology.n_processes();
    let mut states = vec![vec![0.0; n_proc]; t_len];

    for p in 0..n_proc {
        let hard_weight: f64 = topology.sensors_of(p).iter().map(|&s| scores[s]).sum();
        let g = gamma[p];
        let mut diag = vec![0.0; t_len];
        let mut rhs = vec![0.0; t_len];
        for t in 0..t_len {
            let mut weight = hard_weight;
            let mut load: f64 = topology
                .sensors_of(p)
                .iter()
                .map(|&s| scores[s] * frames[t].values[s])
                .sum();
            for record in softs[t].iter().filter(|r| r.process == p) {
                if let Some(c) = soft_reliability(record, scores) {
                    weight += c;
                    load += c * record.output;
                }
            }
            if t > 0 {
                weight += g;
            }
            if t + 1 < t_len {
                weight += g;
            }
            diag[t] = weight;
            rhs[t] = load;
        }
        let off = vec![-g; t_len.saturating_sub(1)];
        let column = solve_symmetric_tridiagonal(&diag, &off, &rhs).map_err(|_| {
            Error::Singular(format!(
                "state system for process '{}' is singular (all scores and gamma zero?)",
                topology.process_name(p)
            ))
        })?;
        for t in 0..t_len {
            states[t][p] = column[t];
        }
    }
    Ok(states)
}

/// The joint warm-up objective at `(scores, states)` with the given fixed
/// soft-sensor fits.
pub fn joint_objective(
    scores: &[f64],
    states: &[Vec<f64>],
    softs: &[Vec<SoftSensorRecord>],
    frames: &[MeasurementFrame],
    gamma: &[f64],
    topology: &Topology,
) -> f64 {
    let mut total = 0.0;
    for (t, frame) in frames.iter().enumerate() {
        for (s, score) in scores.iter().enumerate() {
            let p = topology.process_of(s);
            total += score * (states[t][p] - frame.values[s]).powi(2);
        }
        for record in &softs[t] {
            if let Some(c) = soft_reliability(record, scores) {
                total += c * (states[t][record.process] - record.output).powi(2);
            }
        }
    }
    for p in 0..topology.n_processes() {
        for t in 1..states.len() {
            total += gamma[p] * (states[t][p] - states[t - 1][p]).powi(2);
        }
    }
    total
}

/// Coordinate descent on the joint objective from the per-process-mean
/// initialization until the mean state displacement between consecutive
/// iterations drops below epsilon, or the iteration cap fires.
pub fn run_warmup<R: Rng>(problem: &WarmupProblem, rng: &mut R) -> Result<WarmupSolution> {
    let WarmupProblem {
        frames,
        topology,
        config,
    } = *problem;
    config.validate(topology)?;
    if frames.len() != config.warmup_len {
        return Err(Error::Config(format!(
            "warm-up expects exactly T={} frames, got {}",
            config.warmup_len,
            frames.len()
        )));
    }

    let mut states = init_states(frames, topology);
    let plans = plan_soft_sensors(frames, topology, config, rng)?;
    let (mut softs, mut error_normalizer) = fit_from_plans(&plans, frames, &states, topology)?;

    let mut scores = Vec::new();
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=WARMUP_ITERATION_CAP {
        iterations = iteration;
        if iteration > 1 && config.refit_warmup_soft_sensors {
            let rebuilt = fit_from_plans(&plans, frames, &states, topology)?;
            softs = rebuilt.0;
            error_normalizer = rebuilt.1;
        }
        scores = update_scores_warmup(&states, &softs, frames, topology);
        let new_states = solve_states(&scores, &softs, frames, &config.gamma, topology)?;

        let t_len = frames.len() as f64;
        let displacement: f64 = new_states
            .iter()
            .zip(&states)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / t_len;
        states = new_states;
        objective_trace.push(joint_objective(
            &scores,
            &states,
            &softs,
            frames,
            &config.gamma,
            topology,
        ));

        if displacement < config.epsilon {
            converged = true;
            break;
        }
    }

    // Cache final reliabilities so the records can seed the online window.
    for records in &mut softs {
        for record in records {
            record.reliability = soft_reliability(record, &scores).unwrap_or(0.0);
        }
    }

    Ok(WarmupSolution {
        scores,
        states,
        softs,
        iterations,
        converged,
        objective_trace,
        error_normalizer,
    })
}
