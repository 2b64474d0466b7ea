//! Sliding-window reliability score updates.
//!
//! Scores solve the constrained problem "minimize reliability-weighted
//! window error subject to sum(exp(-c)) = 1" in closed form: each sensor's
//! attributed squared error over the window, divided by the total over all
//! sensors, gives f, and c = -ln(f). Soft-sensor errors are attributed back
//! to their explanatory sensors through the cached weights and normalized
//! fitting errors of the step on which each soft sensor was built.

use std::collections::VecDeque;

use crate::model::Topology;
use crate::soft_sensor::SoftSensorRecord;

/// Everything the score update needs to remember about one finalized step.
#[derive(Debug, Clone)]
pub struct WindowRecord {
    pub t: i64,
    pub measurements: Vec<f64>,
    pub estimates: Vec<f64>,
    pub softs: Vec<SoftSensorRecord>,
}

/// Current scores plus the ring of the last `l + 1` step records.
#[derive(Debug, Clone)]
pub struct ReliabilityState {
    scores: Vec<f64>,
    window: VecDeque<WindowRecord>,
    max_records: usize,
}

impl ReliabilityState {
    /// `window_len` is the sliding-window length l; the ring keeps l + 1
    /// records (the update sums k = t-l .. t inclusive).
    pub fn new(initial_scores: Vec<f64>, window_len: usize) -> Self {
        assert!(window_len > 0);
        Self {
            scores: initial_scores,
            window: VecDeque::with_capacity(window_len + 1),
            max_records: window_len + 1,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &WindowRecord> {
        self.window.iter()
    }

    pub fn push_record(&mut self, record: WindowRecord) {
        if let Some(last) = self.window.back() {
            debug_assert!(record.t > last.t, "window records must be time-ordered");
        }
        self.window.push_back(record);
        while self.window.len() > self.max_records {
            self.window.pop_front();
        }
    }

    /// Recompute scores from the current window. A partial window (early
    /// steps right after warm-up) uses all available records.
    pub fn update(&mut self, topology: &Topology) -> &[f64] {
        let numerators = attributed_errors(
            self.window
                .iter()
                .map(|r| (r.measurements.as_slice(), r.estimates.as_slice(), r.softs.as_slice())),
            topology,
        );
        self.scores = scores_from_attributed(&numerators);
        &self.scores
    }
}

/// Share of a soft sensor's squared error attributed to sensor `s`:
/// zero unless `s` is explanatory, else its absolute-weight share scaled by
/// one minus the normalized fitting error.
pub fn g_coefficient(record: &SoftSensorRecord, sensor: usize) -> f64 {
    let wsum = record.abs_weight_sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    match record.explanatory.iter().position(|&s| s == sensor) {
        Some(i) => record.weights[i].abs() / wsum * (1.0 - record.norm_error),
        None => 0.0,
    }
}

/// Per-sensor attributed squared error summed over a span of records:
/// the sensor's own deviation from its process estimate, plus its share of
/// every soft-sensor deviation it helped construct.
pub fn attributed_errors<'a, I>(records: I, topology: &Topology) -> Vec<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64], &'a [SoftSensorRecord])>,
{
    let mut numerators = vec![0.0; topology.n_sensors()];
    for (x, z, softs) in records {
        for (s, numerator) in numerators.iter_mut().enumerate() {
            let d = z[topology.process_of(s)] - x[s];
            *numerator += d * d;
        }
        for record in softs {
            let wsum = record.abs_weight_sum();
            if wsum <= 0.0 {
                continue;
            }
            let d = z[record.process] - record.output;
            let scale = (1.0 - record.norm_error) * d * d / wsum;
            for (&s, w) in record.explanatory.iter().zip(&record.weights) {
                numerators[s] += w.abs() * scale;
            }
        }
    }
    numerators
}

/// Attributed errors below this fraction of the total are floored before
/// the log, capping scores at -ln(1e-12) ~ 27.6 instead of infinity.
pub const SCORE_FLOOR_RATIO: f64 = 1e-12;

/// Closed-form scores from attributed errors: c_s = -ln(numer_s / total).
///
/// An all-zero error vector (every sensor perfect) yields the uniform
/// feasible point c = ln(n).
pub fn scores_from_attributed(numerators: &[f64]) -> Vec<f64> {
    let n = numerators.len();
    let total_raw: f64 = numerators.iter().sum();
    if total_raw.is_nan() || total_raw <= 0.0 {
        return vec![(n as f64).ln(); n];
    }
    let floor = SCORE_FLOOR_RATIO * total_raw;
    let floored: Vec<f64> = numerators.iter().map(|&a| a.max(floor)).collect();
    let total = floored.iter().sum::<f64>().max(1e-300);
    floored.iter().map(|&a| -(a / total).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn topology(schema: &[usize]) -> Topology {
        Topology::new(
            schema
                .iter()
                .enumerate()
                .map(|(p, &n)| {
                    (
                        format!("p{p}"),
                        (0..n).map(|i| format!("p{p}s{i}")).collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn soft(
        process: usize,
        explanatory: Vec<usize>,
        weights: Vec<f64>,
        e: f64,
        y: f64,
    ) -> SoftSensorRecord {
        SoftSensorRecord {
            process,
            index: 1,
            explanatory,
            weights,
            bias: 0.0,
            fit_error: 0.0,
            norm_error: e,
            output: y,
            reliability: 0.0,
        }
    }

    #[test]
    fn g_indicator_and_shares() {
        let record = soft(0, vec![1, 2], vec![0.5, -0.25], 0.5, 0.0);
        assert_eq!(g_coefficient(&record, 0), 0.0); // not explanatory
        assert!((g_coefficient(&record, 1) - (0.5 / 0.75) * 0.5).abs() < 1e-12);
        assert!((g_coefficient(&record, 1) - 1.0 / 3.0).abs() < 1e-9);
        // single explanatory sensor with zero error gets full attribution
        let solo = soft(0, vec![3], vec![-0.8], 0.0, 0.0);
        assert_eq!(g_coefficient(&solo, 3), 1.0);
    }

    fn constant_window(topo: &Topology, x: Vec<f64>, z: Vec<f64>, len: usize) -> ReliabilityState {
        let mut state = ReliabilityState::new(vec![0.0; topo.n_sensors()], len - 1);
        for t in 0..len {
            state.push_record(WindowRecord {
                t: t as i64,
                measurements: x.clone(),
                estimates: z.clone(),
                softs: Vec::new(),
            });
        }
        state
    }

    #[test]
    fn equal_errors_give_ln2() {
        let topo = topology(&[1, 1]);
        let mut state = constant_window(&topo, vec![0.3, 0.7], vec![0.4, 0.6], 4);
        let scores = state.update(&topo).to_vec();
        assert!((scores[0] - 2f64.ln()).abs() < 1e-12);
        assert!((scores[1] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_to_three_error_ratio() {
        // squared errors 0.01 and 0.03 per record -> f = (1/4, 3/4)
        let topo = topology(&[1, 1]);
        let mut state = constant_window(
            &topo,
            vec![0.5 + 0.1, 0.5 + 0.03_f64.sqrt()],
            vec![0.5, 0.5],
            3,
        );
        let scores = state.update(&topo).to_vec();
        assert!((scores[0] - 4f64.ln()).abs() < 1e-9, "{}", scores[0]);
        assert!((scores[1] - (4f64 / 3.0).ln()).abs() < 1e-9, "{}", scores[1]);
    }

    /// Random window with soft sensors for oracle and property tests.
    fn random_state(rng: &mut ChaCha8Rng) -> (Topology, ReliabilityState) {
        let schema: Vec<usize> = (0..2).map(|_| rng.random_range(1..=3)).collect();
        let topo = topology(&schema);
        let len = rng.random_range(3..=6);
        let mut state = ReliabilityState::new(vec![0.0; topo.n_sensors()], len - 1);
        for t in 0..len {
            let measurements: Vec<f64> =
                (0..topo.n_sensors()).map(|_| rng.random_range(0.0..1.0)).collect();
            let estimates: Vec<f64> =
                (0..topo.n_processes()).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut softs = Vec::new();
            for p in 0..topo.n_processes() {
                for _ in 0..2 {
                    let pool = topo.other_sensors(p);
                    let k = rng.random_range(1..=pool.len().min(3));
                    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                    softs.push(soft(
                        p,
                        pool[..k].to_vec(),
                        weights,
                        rng.random_range(0.0..0.9),
                        rng.random_range(0.0..1.0),
                    ));
                }
            }
            state.push_record(WindowRecord {
                t: t as i64,
                measurements,
                estimates,
                softs,
            });
        }
        (topo, state)
    }

    /// Independent recomputation of the attributed window errors, written
    /// directly from the loss definition.
    fn oracle_attributed(topo: &Topology, state: &ReliabilityState) -> Vec<f64> {
        let mut a = vec![0.0; topo.n_sensors()];
        for (s, acc) in a.iter_mut().enumerate() {
            let p = topo.process_of(s);
            for rec in state.records() {
                *acc += (rec.estimates[p] - rec.measurements[s]).powi(2);
                for sr in &rec.softs {
                    if sr.process == p {
                        continue; // explanatory sets exclude own process anyway
                    }
                    if let Some(i) = sr.explanatory.iter().position(|&x| x == s) {
                        let wsum: f64 = sr.weights.iter().map(|w| w.abs()).sum();
                        let g = sr.weights[i].abs() / wsum * (1.0 - sr.norm_error);
                        *acc += g * (rec.estimates[sr.process] - sr.output).powi(2);
                    }
                }
            }
        }
        a
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..10 {
            let (topo, mut state) = random_state(&mut rng);
            let scores = state.update(&topo).to_vec();

            let a = oracle_attributed(&topo, &state);
            let value = |f: &[f64]| -> f64 {
                if f.iter().any(|&v| v <= 0.0) {
                    return f64::INFINITY;
                }
                -f.iter().zip(&a).map(|(fi, ai)| ai * fi.ln()).sum::<f64>()
            };
            let grad = |f: &[f64]| -> Vec<f64> {
                f.iter().zip(&a).map(|(fi, ai)| -ai / fi).collect()
            };
            let start = vec![1.0 / a.len() as f64; a.len()];
            let f = relsen_testkit::projected_gradient(
                value,
                grad,
                relsen_testkit::project_simplex,
                &start,
                1e-12,
                100_000,
            );
            for (s, (&c, &fi)) in scores.iter().zip(&f).enumerate() {
                let oracle_c = -fi.ln();
                assert!((c - oracle_c).abs() < 1e-6, "sensor {s}: {c} vs {oracle_c}");
            }
            // constraint holds by construction
            let residual = (scores.iter().map(|c| (-c).exp()).sum::<f64>() - 1.0).abs();
            assert!(residual < 1e-9, "constraint residual {residual}");
        }
    }

    #[test]
    fn stationarity_of_the_lagrangian() {
        // numer_s = lambda * exp(-c_s) at the returned scores.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (topo, mut state) = random_state(&mut rng);
        let scores = state.update(&topo).to_vec();
        let a = oracle_attributed(&topo, &state);
        let lambda: f64 = a.iter().sum();
        for (s, &c) in scores.iter().enumerate() {
            let residual = (a[s] - lambda * (-c).exp()).abs() / lambda;
            assert!(residual < 1e-9, "sensor {s}: residual {residual}");
        }
    }

    #[test]
    fn larger_window_error_means_smaller_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        for _ in 0..20 {
            let (topo, mut state) = random_state(&mut rng);
            let scores = state.update(&topo).to_vec();
            let a = oracle_attributed(&topo, &state);
            for i in 0..a.len() {
                for j in 0..a.len() {
                    if a[i] > a[j] {
                        assert!(scores[i] < scores[j]);
                    }
                }
            }
            assert!(scores.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn scores_invariant_to_error_scaling() {
        let a = vec![0.04, 0.12, 0.3, 0.9];
        let c1 = scores_from_attributed(&a);
        let scaled: Vec<f64> = a.iter().map(|v| v * 37.5).collect();
        let c2 = scores_from_attributed(&scaled);
        for (x, y) in c1.iter().zip(&c2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_error_floor_caps_scores() {
        let scores = scores_from_attributed(&[0.0, 1.0]);
        assert!((scores[0] - (-(1e-12_f64).ln())).abs() < 1e-6, "{}", scores[0]);
        assert!(scores[0] < 28.0 && scores[0] > 27.0);
        assert!(scores[1] < scores[0]);
        let residual = (scores.iter().map(|c| (-c).exp()).sum::<f64>() - 1.0).abs();
        assert!(residual < 1e-9);
    }

    #[test]
    fn all_perfect_sensors_get_uniform_scores() {
        let scores = scores_from_attributed(&[0.0, 0.0, 0.0]);
        for &c in &scores {
            assert!((c - 3f64.ln()).abs() < 1e-15);
        }
        let residual = (scores.iter().map(|c| (-c).exp()).sum::<f64>() - 1.0).abs();
        assert!(residual < 1e-12);
    }

    #[test]
    fn window_keeps_latest_records_only() {
        let topo = topology(&[1]);
        let mut state = ReliabilityState::new(vec![0.0], 3);
        for t in 0..10 {
            state.push_record(WindowRecord {
                t,
                measurements: vec![0.0],
                estimates: vec![0.0],
                softs: Vec::new(),
            });
        }
        assert_eq!(state.window_len(), 4); // l + 1
        let ts: Vec<i64> = state.records().map(|r| r.t).collect();
        assert_eq!(ts, vec![6, 7, 8, 9]);
        let _ = topo;
    }
}
