//! Benchmark evaluation: MAE against pre-injection ground truth, method
//! runners, and the staged fault-injection comparison protocol.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{mean_clean, median_clean, ImcState};
use crate::error::{Error, Result};
use crate::faults::{campaign_on_frames, FaultKind, FaultSpec};
use crate::model::{Config, EstimateFrame, MeasurementFrame, Normalizer, Topology};
use crate::pipeline::Engine;
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Relsen,
    Median,
    Mean,
    Imc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Relsen, Method::Median, Method::Mean, Method::Imc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Relsen => "relsen",
            Method::Median => "median",
            Method::Mean => "mean",
            Method::Imc => "imc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relsen" => Ok(Method::Relsen),
            "median" => Ok(Method::Median),
            "mean" => Ok(Method::Mean),
            "imc" => Ok(Method::Imc),
            other => Err(Error::Eval(format!("unknown method '{other}'"))),
        }
    }
}

/// Ground truth for evaluation: the per-process mean of co-monitoring
/// sensors on the clean (pre-injection) normalized stream.
pub fn ground_truth(clean: &[MeasurementFrame], topology: &Topology) -> Vec<EstimateFrame> {
    clean
        .iter()
        .map(|frame| {
            let states = (0..topology.n_processes())
                .map(|p| {
                    let sensors = topology.sensors_of(p);
                    sensors.iter().map(|&s| frame.values[s]).sum::<f64>()
                        / sensors.len() as f64
                })
                .collect();
            EstimateFrame::new(frame.t, states)
        })
        .collect()
}

/// Mean absolute error of one process's cleaned series against the truth.
/// Series must be non-empty and timestamp-aligned.
pub fn mae(cleaned: &[EstimateFrame], truth: &[EstimateFrame], process: usize) -> Result<f64> {
    if cleaned.is_empty() || cleaned.len() != truth.len() {
        return Err(Error::Eval(format!(
            "series of {} vs {} frames cannot be compared",
            cleaned.len(),
            truth.len()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in cleaned.iter().zip(truth) {
        if a.t != b.t {
            return Err(Error::Eval(format!(
                "timestamp mismatch: {} vs {}",
                a.t, b.t
            )));
        }
        acc += (a.states[process] - b.states[process]).abs();
    }
    Ok(acc / cleaned.len() as f64)
}

/// Cleaned estimates for the post-warm-up span, plus per-step sensor scores
/// for the methods that produce them.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub estimates: Vec<EstimateFrame>,
    pub scores: Option<Vec<(i64, Vec<f64>)>>,
}

/// Run one cleaning method over a full raw stream (warm-up plus online
/// span). Baselines see the same normalization the engine fits on the first
/// T frames; all methods are evaluated on t > T only.
pub fn run_method(
    method: Method,
    topology: &Topology,
    config: &Config,
    frames: &[MeasurementFrame],
    imc_tol: f64,
) -> Result<MethodOutput> {
    let warmup = config.warmup_len;
    if frames.len() <= warmup {
        return Err(Error::Config(format!(
            "stream of {} rows does not extend past the warm-up length T={warmup}",
            frames.len()
        )));
    }
    match method {
        Method::Relsen => {
            let (mut engine, _report) =
                Engine::bootstrap(topology.clone(), config.clone(), &frames[..warmup])?;
            let mut estimates = Vec::with_capacity(frames.len() - warmup);
            let mut scores = Vec::with_capacity(frames.len() - warmup);
            for frame in &frames[warmup..] {
                let out = engine.step(frame)?;
                scores.push((out.estimates.t, out.scores.clone()));
                estimates.push(out.estimates);
            }
            Ok(MethodOutput {
                estimates,
                scores: Some(scores),
            })
        }
        Method::Median | Method::Mean => {
            let normalizer = Normalizer::fit(&frames[..warmup])?;
            let estimates = frames[warmup..]
                .iter()
                .map(|f| {
                    let x = normalizer.normalize(f);
                    match method {
                        Method::Median => median_clean(&x, topology),
                        _ => mean_clean(&x, topology),
                    }
                })
                .collect();
            Ok(MethodOutput {
                estimates,
                scores: None,
            })
        }
        Method::Imc => {
            let normalizer = Normalizer::fit(&frames[..warmup])?;
            let mut imc = ImcState::new(topology, imc_tol, config.window);
            let mut estimates = Vec::with_capacity(frames.len() - warmup);
            let mut scores = Vec::with_capacity(frames.len() - warmup);
            for (i, frame) in frames.iter().enumerate() {
                let x = normalizer.normalize(frame);
                let (z, c) = imc.step(&x, topology);
                if i >= warmup {
                    scores.push((z.t, c));
                    estimates.push(z);
                }
            }
            Ok(MethodOutput {
                estimates,
                scores: Some(scores),
            })
        }
    }
}

/// One benchmark cell: a method run against one faulted stream.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub method: Method,
    pub fault: FaultKind,
    /// Seed of the repeat this run belongs to.
    pub seed: u64,
    pub per_process: Vec<f64>,
    /// Unweighted mean of the per-process MAEs.
    pub average: f64,
    pub runtime: Duration,
}

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub seed: u64,
    /// Number of independently seeded repetitions averaged in the report.
    pub repeats: usize,
    pub stream_len: usize,
    /// Stage intensities, applied over equal thirds of the online span.
    pub intensities: Vec<f64>,
    pub short_rate: f64,
    pub duration: (usize, usize),
    pub gap: usize,
    pub imc_tol: f64,
    /// Worker threads for the method runs; 0 picks the machine default.
    pub threads: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: 1,
            stream_len: 1008,
            intensities: vec![0.75, 1.5, 3.0],
            short_rate: 0.05,
            duration: (10, 50),
            gap: 24,
            imc_tol: crate::baselines::DEFAULT_IMC_TOL,
            threads: 0,
        }
    }
}

/// Which sensor was made faulty for each process in one injected stream.
#[derive(Debug, Clone)]
pub struct FaultAssignment {
    pub seed: u64,
    pub fault: FaultKind,
    /// Faulty sensor index per process.
    pub faulty: Vec<usize>,
}

/// Plot-ready long-format traces for one fault kind (first repeat only):
/// per-sensor reliability series and per-method absolute-error series.
#[derive(Debug, Clone)]
pub struct BenchTraces {
    pub fault: FaultKind,
    pub rows: Vec<(i64, String, f64)>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// Snapshot of the protocol settings the report was produced under.
    pub settings: BenchSettings,
    /// Snapshot of the engine configuration (first repeat).
    pub engine_config: Config,
    pub process_names: Vec<String>,
    pub sensor_counts: Vec<usize>,
    /// Every (repeat, fault, method) cell.
    pub runs: Vec<BenchmarkRun>,
    /// Per (fault, method), averaged over repeats.
    pub mean_runs: Vec<BenchmarkRun>,
    pub assignments: Vec<FaultAssignment>,
    pub traces: Vec<BenchTraces>,
}

fn mix(seed: u64, salt: u64) -> u64 {
    (seed ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Derive the per-process faulty sensors and the fully injected stream for
/// one (repeat, fault) pair of the protocol. Rows before `warmup` stay
/// clean.
pub fn inject_benchmark_faults(
    frames: &[MeasurementFrame],
    topology: &Topology,
    fault: FaultKind,
    settings: &BenchSettings,
    rep_seed: u64,
    warmup: usize,
) -> Result<(Vec<MeasurementFrame>, Vec<usize>)> {
    let fault_salt = match fault {
        FaultKind::Short => 1,
        FaultKind::Noise => 2,
        FaultKind::Constant => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix(rep_seed, fault_salt));
    let mut faulted = frames.to_vec();
    let mut faulty = Vec::with_capacity(topology.n_processes());
    for p in 0..topology.n_processes() {
        let sensors = topology.sensors_of(p);
        let target = sensors[rng.random_range(0..sensors.len())];
        faulty.push(target);
        let spec = FaultSpec {
            kind: fault,
            target,
            intensity: settings.intensities[0],
            short_rate: settings.short_rate,
            duration: settings.duration,
            gap: settings.gap,
            seed: rng.random(),
        };
        // Sigma comes from this sensor's column, still clean because every
        // process gets a distinct target.
        let (next, _mask) = campaign_on_frames(&faulted, &spec, &settings.intensities, warmup)?;
        faulted = next;
    }
    Ok((faulted, faulty))
}

struct PreparedStream {
    rep_seed: u64,
    first_repeat: bool,
    fault: FaultKind,
    topology: Topology,
    config: Config,
    faulted: Vec<MeasurementFrame>,
    truth: Vec<EstimateFrame>,
}

/// Full Table-2-style protocol on synthetic data: generate, inject one
/// faulty sensor per process per fault kind, run every method, score MAEs
/// against the pre-injection ground truth, and average over repeats.
pub fn bench_protocol(settings: &BenchSettings) -> Result<BenchReport> {
    if settings.repeats == 0 {
        return Err(Error::Config("bench needs at least one repeat".into()));
    }
    let mut prepared = Vec::new();
    let mut assignments = Vec::new();
    let mut process_names = Vec::new();
    let mut sensor_counts = Vec::new();
    let mut engine_config = None;

    for rep in 0..settings.repeats {
        let rep_seed = settings.seed.wrapping_add(rep as u64);
        let data = generate(&SynthSpec::benchmark_deployment(settings.stream_len, rep_seed))?;
        let topology = data.topology;
        let config = Config::defaults_for(&topology, mix(rep_seed, 0xE1));
        if settings.stream_len <= config.warmup_len + settings.intensities.len() {
            return Err(Error::Config(format!(
                "stream length {} leaves no room after warm-up T={}",
                settings.stream_len, config.warmup_len
            )));
        }
        if rep == 0 {
            process_names = topology.process_names().to_vec();
            sensor_counts = (0..topology.n_processes())
                .map(|p| topology.sensors_of(p).len())
                .collect();
            engine_config = Some(config.clone());
        }

        let normalizer = Normalizer::fit(&data.frames[..config.warmup_len])?;
        let clean_norm: Vec<MeasurementFrame> =
            data.frames.iter().map(|f| normalizer.normalize(f)).collect();
        let truth = ground_truth(&clean_norm[config.warmup_len..], &topology);

        for fault in FaultKind::ALL {
            let (faulted, faulty) =
                inject_benchmark_faults(
                &data.frames,
                &topology,
                fault,
                settings,
                rep_seed,
                config.warmup_len,
            )?;
            assignments.push(FaultAssignment {
                seed: rep_seed,
                fault,
                faulty,
            });
            prepared.push(PreparedStream {
                rep_seed,
                first_repeat: rep == 0,
                fault,
                topology: topology.clone(),
                config: config.clone(),
                faulted,
                truth: truth.clone(),
            });
        }
    }

    // One cell per (prepared stream, method); embarrassingly parallel.
    let cells: Vec<(usize, Method)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(i, _)| Method::ALL.into_iter().map(move |m| (i, m)))
        .collect();
    let threads = if settings.threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        settings.threads
    };

    let imc_tol = settings.imc_tol;
    let outcomes: Vec<Result<(BenchmarkRun, Option<MethodOutput>)>> =
        parallel_map(&cells, threads, |&(idx, method)| {
            let stream = &prepared[idx];
            let started = Instant::now();
            let output = run_method(
                method,
                &stream.topology,
                &stream.config,
                &stream.faulted,
                imc_tol,
            )?;
            let runtime = started.elapsed();
            let per_process: Result<Vec<f64>> = (0..stream.topology.n_processes())
                .map(|p| mae(&output.estimates, &stream.truth, p))
                .collect();
            let per_process = per_process?;
            let average = per_process.iter().sum::<f64>() / per_process.len() as f64;
            let run = BenchmarkRun {
                method,
                fault: stream.fault,
                seed: stream.rep_seed,
                per_process,
                average,
                runtime,
            };
            let keep_output = stream.first_repeat;
            Ok((run, keep_output.then_some(output)))
        });

    let mut runs = Vec::with_capacity(cells.len());
    let mut traces: Vec<BenchTraces> = Vec::new();
    for (outcome, &(idx, method)) in outcomes.into_iter().zip(&cells) {
        let (run, output) = outcome?;
        if let Some(output) = output {
            let stream = &prepared[idx];
            let entry = match traces.iter_mut().find(|t| t.fault == stream.fault) {
                Some(entry) => entry,
                None => {
                    traces.push(BenchTraces {
                        fault: stream.fault,
                        rows: Vec::new(),
                    });
                    traces.last_mut().unwrap()
                }
            };
            if let Some(score_rows) = &output.scores {
                for (t, scores) in score_rows {
                    for (s, &c) in scores.iter().enumerate() {
                        entry.rows.push((
                            *t,
                            format!("score:{}:{}", method.as_str(), stream.topology.sensor_name(s)),
                            c,
                        ));
                    }
                }
            }
            for (frame, truth) in output.estimates.iter().zip(&stream.truth) {
                for p in 0..stream.topology.n_processes() {
                    entry.rows.push((
                        frame.t,
                        format!(
                            "abserr:{}:{}",
                            method.as_str(),
                            stream.topology.process_name(p)
                        ),
                        (frame.states[p] - truth.states[p]).abs(),
                    ));
                }
            }
        }
        runs.push(run);
    }

    // Average each (fault, method) over the repeats.
    let mut mean_runs = Vec::new();
    for fault in FaultKind::ALL {
        for method in Method::ALL {
            let group: Vec<&BenchmarkRun> = runs
                .iter()
                .filter(|r| r.fault == fault && r.method == method)
                .collect();
            if group.is_empty() {
                continue;
            }
            let n_proc = group[0].per_process.len();
            let per_process: Vec<f64> = (0..n_proc)
                .map(|p| {
                    group.iter().map(|r| r.per_process[p]).sum::<f64>() / group.len() as f64
                })
                .collect();
            let average = group.iter().map(|r| r.average).sum::<f64>() / group.len() as f64;
            let runtime = group.iter().map(|r| r.runtime).sum::<Duration>() / group.len() as u32;
            mean_runs.push(BenchmarkRun {
                method,
                fault,
                seed: settings.seed,
                per_process,
                average,
                runtime,
            });
        }
    }

    Ok(BenchReport {
        settings: settings.clone(),
        engine_config: engine_config.expect("at least one repeat"),
        process_names,
        sensor_counts,
        runs,
        mean_runs,
        assignments,
        traces,
    })
}

/// Strided scatter-gather map over a slice with plain scoped threads.
/// Results come back in input order regardless of scheduling.
pub fn parallel_map<T, U, F>(items: &[T], threads: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let n = items.len();
    let workers = threads.clamp(1, n.max(1));
    if workers <= 1 || n <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<U>> = (0..n).map(|_| None).collect();
    let parts: Vec<Vec<(usize, U)>> = std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = w;
                    while i < n {
                        out.push((i, f(&items[i])));
                        i += workers;
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench worker panicked"))
            .collect()
    });
    for part in parts {
        for (i, u) in part {
            slots[i] = Some(u);
        }
    }
    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}
