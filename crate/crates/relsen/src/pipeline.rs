//! The real-time loop: per step, build soft sensors from the sampled
//! history, estimate process states in closed form, update reliability
//! scores over the sliding window, then fold the finalized step back into
//! the history reservoir.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cleaning::estimate_states;
use crate::error::{Error, Result};
use crate::model::{Config, EstimateFrame, MeasurementFrame, Normalizer, Topology};
use crate::reliability::{ReliabilityState, WindowRecord};
use crate::soft_sensor::{
    fit_local, knn, select_explanatory, soft_reliability, ErrorNormalizer, HistoryEntry,
    HistoryStore, LocalFit, SoftSensorRecord,
};
use crate::warmup::{run_warmup, WarmupProblem};

/// Summary of the warm-up solve, exported alongside the engine.
#[derive(Debug, Clone)]
pub struct WarmupReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Constant warm-up scores per sensor.
    pub scores: Vec<f64>,
    /// Normalized warm-up state estimates.
    pub states: Vec<EstimateFrame>,
}

/// One step's emissions. Estimates and scores are both stamped with the
/// step's timestamp; estimates are in normalized units.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub estimates: EstimateFrame,
    pub scores: Vec<f64>,
    /// Soft sensors not built this step for lack of history.
    pub skipped_soft_sensors: usize,
    /// Soft sensors built but discarded for an all-zero weight vector.
    pub discarded_soft_sensors: usize,
}

/// Streaming engine state. One engine per logical stream.
pub struct Engine {
    topology: Topology,
    config: Config,
    normalizer: Normalizer,
    history: HistoryStore,
    error_normalizer: ErrorNormalizer,
    reliability: ReliabilityState,
    z_prev: Vec<f64>,
    last_t: i64,
    rng: ChaCha8Rng,
}

impl Engine {
    /// Fit the normalizer on the first T frames, solve the warm-up problem,
    /// and seed the history reservoir and the reliability window from it.
    pub fn bootstrap(
        topology: Topology,
        config: Config,
        frames: &[MeasurementFrame],
    ) -> Result<(Self, WarmupReport)> {
        config.validate(&topology)?;
        if frames.len() != config.warmup_len {
            return Err(Error::Config(format!(
                "bootstrap expects exactly T={} frames, got {}",
                config.warmup_len,
                frames.len()
            )));
        }
        crate::model::validate_stream(frames, &topology)?;

        let normalizer = Normalizer::fit(frames)?;
        let normalized: Vec<MeasurementFrame> =
            frames.iter().map(|f| normalizer.normalize(f)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let problem = WarmupProblem {
            frames: &normalized,
            topology: &topology,
            config: &config,
        };
        let solution = run_warmup(&problem, &mut rng)?;

        let mut history = HistoryStore::new(config.history_capacity);
        for (frame, states) in normalized.iter().zip(&solution.states) {
            history.insert(
                HistoryEntry {
                    t: frame.t,
                    measurements: frame.values.clone(),
                    estimates: states.clone(),
                },
                &mut rng,
            );
        }

        let mut reliability = ReliabilityState::new(solution.scores.clone(), config.window);
        let keep = (config.window + 1).min(normalized.len());
        let skip = normalized.len() - keep;
        for (i, frame) in normalized.iter().enumerate().skip(skip) {
            reliability.push_record(WindowRecord {
                t: frame.t,
                measurements: frame.values.clone(),
                estimates: solution.states[i].clone(),
                softs: solution.softs[i].clone(),
            });
        }

        let report = WarmupReport {
            iterations: solution.iterations,
            converged: solution.converged,
            final_objective: solution.objective_trace.last().copied().unwrap_or(0.0),
            scores: solution.scores.clone(),
            states: normalized
                .iter()
                .zip(&solution.states)
                .map(|(f, z)| EstimateFrame::new(f.t, z.clone()))
                .collect(),
        };

        let z_prev = solution
            .states
            .last()
            .cloned()
            .expect("warm-up produces at least one state");
        let last_t = normalized.last().map(|f| f.t).unwrap();

        Ok((
            Self {
                topology,
                config,
                normalizer,
                history,
                error_normalizer: solution.error_normalizer,
                reliability,
                z_prev,
                last_t,
                rng,
            },
            report,
        ))
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn scores(&self) -> &[f64] {
        self.reliability.scores()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Records currently in the reliability window (at most l + 1).
    pub fn window_len(&self) -> usize {
        self.reliability.window_len()
    }

    pub fn last_timestamp(&self) -> i64 {
        self.last_t
    }

    /// Ingest one raw frame and emit cleaned states plus updated scores.
    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<StepOutput> {
        frame.validate(&self.topology)?;
        if frame.t != self.last_t + 1 {
            return Err(Error::Stream(format!(
                "timestamp gap: got t={}, expected {}",
                frame.t,
                self.last_t + 1
            )));
        }
        let x = self.normalizer.normalize(frame);
        let scores_now = self.reliability.scores().to_vec();

        struct Pending {
            process: usize,
            index: usize,
            explanatory: Vec<usize>,
            fit: LocalFit,
        }

        let mut pending: Vec<Pending> = Vec::new();
        let mut skipped = 0usize;
        {
            let candidates = self.history.candidates();
            let entries = self.history.entries();
            for p in 0..self.topology.n_processes() {
                for m in 1..=self.config.soft_sensors[p] {
                    let explanatory = select_explanatory(
                        &self.topology,
                        p,
                        self.config.explanatory_ratio,
                        &mut self.rng,
                    )?;
                    if candidates.len() < self.config.neighbors {
                        skipped += 1;
                        continue;
                    }
                    let point: Vec<f64> =
                        explanatory.iter().map(|&s| x.values[s]).collect();
                    let picked = knn(&candidates, &explanatory, &point, self.config.neighbors)?;
                    let rows: Vec<Vec<f64>> = picked
                        .iter()
                        .map(|&i| {
                            explanatory
                                .iter()
                                .map(|&s| entries[i].measurements[s])
                                .collect()
                        })
                        .collect();
                    let targets: Vec<f64> =
                        picked.iter().map(|&i| entries[i].estimates[p]).collect();
                    let fit = fit_local(&rows, &targets)?;
                    pending.push(Pending {
                        process: p,
                        index: m,
                        explanatory,
                        fit,
                    });
                }
            }
        }

        // All fitting errors of the step join the error set before any of
        // them is normalized.
        for item in &pending {
            self.error_normalizer.observe(item.fit.fit_error);
        }
        let mut softs = Vec::with_capacity(pending.len());
        let mut discarded = 0usize;
        for item in pending {
            let mut record = SoftSensorRecord {
                process: item.process,
                index: item.index,
                explanatory: item.explanatory,
                weights: item.fit.weights,
                bias: item.fit.bias,
                fit_error: item.fit.fit_error,
                norm_error: self.error_normalizer.normalized(item.fit.fit_error),
                output: 0.0,
                reliability: 0.0,
            };
            record.output = record.evaluate(&x.values);
            match soft_reliability(&record, &scores_now) {
                Some(c) => {
                    record.reliability = c;
                    softs.push(record);
                }
                None => discarded += 1,
            }
        }

        let states = estimate_states(
            &x.values,
            &softs,
            &scores_now,
            &self.z_prev,
            &self.config.gamma,
            &self.topology,
        )?;

        self.reliability.push_record(WindowRecord {
            t: frame.t,
            measurements: x.values.clone(),
            estimates: states.clone(),
            softs,
        });
        let scores = self.reliability.update(&self.topology).to_vec();

        // History learns the step only once its estimate is final.
        self.history.insert(
            HistoryEntry {
                t: frame.t,
                measurements: x.values,
                estimates: states.clone(),
            },
            &mut self.rng,
        );
        self.z_prev = states.clone();
        self.last_t = frame.t;

        Ok(StepOutput {
            estimates: EstimateFrame::new(frame.t, states),
            scores,
            skipped_soft_sensors: skipped,
            discarded_soft_sensors: discarded,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn small_config(topo: &Topology, softs: Vec<usize>) -> Config {
        Config {
            explanatory_ratio: 0.7,
            neighbors: 4,
            soft_sensors: softs,
            gamma: vec![0.0; topo.n_processes()],
            window: 3,
            warmup_len: 10,
            epsilon: 1e-5,
            history_capacity: 8,
            seed: 1,
            refit_warmup_soft_sensors: false,
        }
    }

    fn staircase_frames(topo: &Topology, n: usize) -> Vec<MeasurementFrame> {
        (0..n)
            .map(|t| {
                let base = 0.2 + 0.05 * (t % 7) as f64;
                MeasurementFrame::new(
                    t as i64 + 1,
                    (0..topo.n_sensors())
                        .map(|s| base + 0.01 * s as f64)
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn passthrough_without_information_sources() {
        // one sensor per process, no soft sensors, gamma = 0
        let topo = topology(&[1, 1]);
        let config = small_config(&topo, vec![0, 0]);
        let frames = staircase_frames(&topo, 14);
        let (mut engine, _) = Engine::bootstrap(topo, config, &frames[..10]).unwrap();
        for frame in &frames[10..] {
            let out = engine.step(frame).unwrap();
            let x = engine.normalizer().normalize(frame);
            for p in 0..2 {
                assert!((out.estimates.states[p] - x.values[p]).abs() < 1e-12);
            }
            assert_eq!(out.skipped_soft_sensors, 0);
        }
    }

    #[test]
    fn bootstrap_rejects_wrong_frame_count_and_gaps() {
        let topo = topology(&[1, 1]);
        let config = small_config(&topo, vec![0, 0]);
        let frames = staircase_frames(&topo, 14);
        assert!(matches!(
            Engine::bootstrap(topo.clone(), config.clone(), &frames[..9]),
            Err(Error::Config(_))
        ));
        let mut gapped = frames[..10].to_vec();
        gapped[5].t += 3;
        assert!(matches!(
            Engine::bootstrap(topo, config, &gapped),
            Err(Error::Stream(_))
        ));
    }

    #[test]
    fn step_rejects_timestamp_gap() {
        let topo = topology(&[1, 1]);
        let config = small_config(&topo, vec![0, 0]);
        let frames = staircase_frames(&topo, 12);
        let (mut engine, _) = Engine::bootstrap(topo, config, &frames[..10]).unwrap();
        let mut bad = frames[10].clone();
        bad.t += 1; // skips one step
        assert!(matches!(engine.step(&bad), Err(Error::Stream(_))));
        // the expected frame still works afterwards
        engine.step(&frames[10]).unwrap();
    }

    #[test]
    fn constant_stream_stabilizes_scores() {
        // Stationary fixed point: each sensor keeps reporting its own
        // warm-up floor, which normalizes every column to the same constant.
        // Without soft sensors or smoothing the estimate then sits exactly
        // on the measurements and the scores freeze.
        let topo = topology(&[2, 2]);
        let config = small_config(&topo, vec![0, 0]);
        let frames: Vec<MeasurementFrame> = (0..40)
            .map(|t| MeasurementFrame::new(t + 1, vec![0.30, 0.32, 0.55, 0.57]))
            .collect();
        // warm-up needs some variation for the normalizer; wiggle it mildly
        let mut warm = frames[..10].to_vec();
        for (i, f) in warm.iter_mut().enumerate() {
            for v in &mut f.values {
                *v += 0.02 * ((i % 5) as f64);
            }
        }
        let (mut engine, _) = Engine::bootstrap(topo, config, &warm).unwrap();
        let mut last_scores: Option<Vec<f64>> = None;
        let mut max_change_after_fill = 0.0f64;
        for (i, frame) in frames[10..].iter().enumerate() {
            let out = engine.step(frame).unwrap();
            if let Some(prev) = &last_scores {
                // window of l+1 = 4 records fills after 4 constant steps
                if i > 4 {
                    let change = out
                        .scores
                        .iter()
                        .zip(prev)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    max_change_after_fill = max_change_after_fill.max(change);
                }
            }
            last_scores = Some(out.scores.clone());
        }
        assert!(
            max_change_after_fill < 1e-9,
            "scores kept moving: {max_change_after_fill}"
        );
    }

    #[test]
    fn liveness_every_step_emits() {
        // History capacity below K is rejected up front, so force skips by
        // making the engine its own gatekeeper: request more neighbors than
        // the seeded history can ever hold is a config error; instead check
        // that steps with all soft sensors discarded still emit.
        let topo = topology(&[1, 2]);
        let mut config = small_config(&topo, vec![2, 0]);
        config.gamma = vec![1.0, 1.0];
        let frames = staircase_frames(&topo, 16);
        let (mut engine, _) = Engine::bootstrap(topo, config, &frames[..10]).unwrap();
        for frame in &frames[10..] {
            let out = engine.step(frame).unwrap();
            assert_eq!(out.estimates.states.len(), 2);
            assert_eq!(out.scores.len(), 3);
        }
    }

    #[test]
    fn deterministic_replay_is_bit_identical() {
        let topo = topology(&[2, 1, 2]);
        let mut config = small_config(&topo, vec![1, 2, 1]);
        config.gamma = vec![1.0, 1.0, 1.0];
        config.seed = 77;
        let frames: Vec<MeasurementFrame> = (0..60)
            .map(|t| {
                let phase = t as f64 / 9.0;
                MeasurementFrame::new(
                    t + 1,
                    (0..5)
                        .map(|s| 0.5 + 0.3 * (phase + s as f64 * 0.2).sin())
                        .collect(),
                )
            })
            .collect();

        let run = |frames: &[MeasurementFrame]| -> Vec<StepOutput> {
            let (mut engine, _) =
                Engine::bootstrap(topology(&[2, 1, 2]), config.clone(), &frames[..10]).unwrap();
            frames[10..]
                .iter()
                .map(|f| engine.step(f).unwrap())
                .collect()
        };
        let a = run(&frames);
        let b = run(&frames);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.estimates.t, y.estimates.t);
            assert_eq!(x.estimates.states, y.estimates.states); // bit-for-bit
            assert_eq!(x.scores, y.scores);
            assert_eq!(x.skipped_soft_sensors, y.skipped_soft_sensors);
            assert_eq!(x.discarded_soft_sensors, y.discarded_soft_sensors);
        }
    }

    #[test]
    fn bootstrap_seeds_the_reliability_window() {
        let topo = topology(&[2, 1]);
        let mut config = small_config(&topo, vec![1, 1]);
        config.gamma = vec![1.0, 1.0];
        let frames = staircase_frames(&topo, 16);
        let (mut engine, report) = Engine::bootstrap(topo, config, &frames[..10]).unwrap();
        // l + 1 = 4 warm-up records seed the window, and the current scores
        // are the warm-up scores until the first online update
        assert_eq!(engine.window_len(), 4);
        assert_eq!(engine.scores(), report.scores.as_slice());
        for frame in &frames[10..] {
            engine.step(frame).unwrap();
            assert_eq!(engine.window_len(), 4);
        }
    }

    // the engine moves between threads whole; shared model state is Sync
    #[test]
    fn concurrency_markers_hold() {
        fn is_send<T: Send>() {}
        fn is_sync<T: Sync>() {}
        is_send::<Engine>();
        is_sync::<Topology>();
        is_sync::<crate::model::Normalizer>();
        is_sync::<Config>();
        is_sync::<crate::soft_sensor::HistoryStore>();
    }

    #[test]
    fn history_grows_at_most_one_per_step() {
        let topo = topology(&[2, 1]);
        let config = small_config(&topo, vec![1, 1]);
        let frames = staircase_frames(&topo, 20);
        let (mut engine, _) = Engine::bootstrap(topo, config, &frames[..10]).unwrap();
        let mut before = engine.history_len();
        for frame in &frames[10..] {
            engine.step(frame).unwrap();
            let after = engine.history_len();
            assert!(after >= before && after - before <= 1);
            assert!(after <= engine.config().history_capacity);
            before = after;
        }
    }
}
