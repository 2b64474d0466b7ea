//! Command-line front end: synthetic data generation, streaming runs,
//! fault injection, and the full benchmark protocol.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use relsen::config::{load_config, load_fault_campaign, render_config};
use relsen::eval::{bench_protocol, run_method, BenchSettings, Method};
use relsen::faults::campaign_on_frames;
use relsen::model::Config;
use relsen::synth::{generate, SynthSpec};
use relsen::{io, Engine, Error};

#[derive(Parser)]
#[command(
    name = "relsen",
    version,
    about = "Streaming sensor reliability scoring and data cleaning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-process dataset and a matching config file
    Synth {
        /// Output directory (created if missing)
        #[arg(long)]
        output: PathBuf,
        /// Total rows to generate
        #[arg(long, default_value_t = 1008)]
        rows: usize,
        /// Comma-separated sensors-per-process counts
        #[arg(long, default_value = "5,3,3,2,2,1")]
        schema: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Warm up on the first T rows of a stream, then clean the rest
    Run {
        /// Input measurement CSV (t plus one column per sensor)
        #[arg(long)]
        input: PathBuf,
        /// Engine config TOML (topology plus hyperparameters)
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        output: PathBuf,
        /// Cleaning method: relsen, median, mean or imc
        #[arg(long, default_value = "relsen")]
        method: String,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Consistency tolerance for the imc method
        #[arg(long, default_value_t = relsen::baselines::DEFAULT_IMC_TOL)]
        imc_tol: f64,
    },
    /// Apply a fault-campaign spec file to a clean stream
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Fault campaign TOML
        #[arg(long = "fault-spec")]
        fault_spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Override the campaign seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthetic end-to-end benchmark: inject staged faults, run every
    /// method, and write MAE reports plus plot-ready traces
    Bench {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independently seeded repetitions averaged in the report
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Stream length per repetition
        #[arg(long, default_value_t = 1008)]
        rows: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Topology(_)) => 1,
        Some(
            Error::Stream(_)
            | Error::Csv(_)
            | Error::Io(_)
            | Error::Calibration(_)
            | Error::Injection(_)
            | Error::Eval(_),
        ) => 2,
        Some(_) => 3,
        None => 3,
    }
}

/// RELSEN_THREADS caps bench worker parallelism; 0 = machine default.
fn worker_threads() -> usize {
    std::env::var("RELSEN_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn ensure_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            output,
            rows,
            schema,
            seed,
        } => cmd_synth(&output, rows, &schema, seed),
        Command::Run {
            input,
            config,
            output,
            method,
            seed,
            imc_tol,
        } => cmd_run(&input, &config, &output, &method, seed, imc_tol),
        Command::Inject {
            input,
            config,
            fault_spec,
            output,
            seed,
        } => cmd_inject(&input, &config, &fault_spec, &output, seed),
        Command::Bench {
            output,
            seed,
            repeats,
            rows,
        } => cmd_bench(&output, seed, repeats, rows),
    }
}

fn cmd_synth(output: &Path, rows: usize, schema: &str, seed: u64) -> anyhow::Result<()> {
    let schema: Vec<usize> = schema
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad schema entry '{part}'")))
        })
        .collect::<Result<_, _>>()?;
    if schema.is_empty() || schema.contains(&0) {
        return Err(Error::Config("schema needs positive sensor counts".into()).into());
    }
    let spec = SynthSpec {
        schema,
        len: rows,
        seed,
        drivers: 3,
    };
    let data = generate(&spec)?;
    ensure_dir(output)?;
    io::write_frames_csv(&output.join("synthetic.csv"), &data.frames, &data.topology)?;
    let config = Config::defaults_for(&data.topology, seed);
    io::write_text(
        &output.join("config.toml"),
        &render_config(&data.topology, &config),
    )?;
    eprintln!(
        "wrote {} rows for {} sensors to {}",
        data.frames.len(),
        data.topology.n_sensors(),
        output.display()
    );
    Ok(())
}

fn cmd_run(
    input: &Path,
    config_path: &Path,
    output: &Path,
    method: &str,
    seed: Option<u64>,
    imc_tol: f64,
) -> anyhow::Result<()> {
    let method =
        Method::parse(method).map_err(|_| Error::Config(format!("unknown method '{method}'")))?;
    let (topology, mut config) = load_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let frames = io::read_frames_csv(input, &topology)?;
    if frames.len() <= config.warmup_len {
        return Err(Error::Config(format!(
            "input has {} rows but the warm-up needs T={} plus at least one online step",
            frames.len(),
            config.warmup_len
        ))
        .into());
    }
    ensure_dir(output)?;

    match method {
        Method::Relsen => {
            let warmup_len = config.warmup_len;
            let (mut engine, report) =
                Engine::bootstrap(topology.clone(), config, &frames[..warmup_len])?;
            for s in engine.normalizer().degenerate_sensors() {
                eprintln!(
                    "warning: sensor '{}' was constant over the warm-up window; it normalizes to 0.5",
                    topology.sensor_name(s)
                );
            }
            io::write_warmup_summary_csv(&output.join("warmup_summary.csv"), &report, &topology)?;
            if !report.converged {
                eprintln!(
                    "warning: warm-up hit the iteration cap after {} iterations",
                    report.iterations
                );
            }
            let mut writer = io::StreamWriter::create(
                &output.join("cleaned.csv"),
                &output.join("scores.csv"),
                &topology,
            )?;
            let mut skipped = 0usize;
            let mut discarded = 0usize;
            for frame in &frames[warmup_len..] {
                let out = engine.step(frame)?;
                writer.emit(&out.estimates, &out.scores)?;
                skipped += out.skipped_soft_sensors;
                discarded += out.discarded_soft_sensors;
            }
            if skipped + discarded > 0 {
                eprintln!("note: {skipped} soft sensors skipped, {discarded} discarded");
            }
        }
        _ => {
            let out = run_method(method, &topology, &config, &frames, imc_tol)?;
            io::write_estimates_csv(&output.join("cleaned.csv"), &out.estimates, &topology)?;
            if let Some(scores) = &out.scores {
                io::write_scores_csv(&output.join("scores.csv"), scores, &topology)?;
            }
        }
    }
    eprintln!("run complete: outputs in {}", output.display());
    Ok(())
}

fn cmd_inject(
    input: &Path,
    config_path: &Path,
    fault_spec: &Path,
    output: &Path,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let (topology, _config) = load_config(config_path)?;
    let frames = io::read_frames_csv(input, &topology)?;
    let mut campaign = load_fault_campaign(fault_spec, &topology)?;
    if let Some(seed) = seed {
        for (i, spec) in campaign.specs.iter_mut().enumerate() {
            spec.seed = seed.wrapping_add(0x9E37_79B9u64.wrapping_mul(i as u64 + 1));
        }
    }
    ensure_dir(output)?;

    let mut faulted = frames.clone();
    let mut masks = vec![vec![false; frames.len()]; topology.n_sensors()];
    for spec in &campaign.specs {
        let (next, mask) =
            campaign_on_frames(&faulted, spec, &campaign.intensities, campaign.start)?;
        faulted = next;
        masks[spec.target] = mask;
    }
    io::write_frames_csv(&output.join("faulted.csv"), &faulted, &topology)?;
    let timestamps: Vec<i64> = frames.iter().map(|f| f.t).collect();
    io::write_mask_csv(&output.join("mask.csv"), &timestamps, &masks, &topology)?;
    eprintln!(
        "injected {} fault campaigns into {} rows",
        campaign.specs.len(),
        frames.len()
    );
    Ok(())
}

fn cmd_bench(output: &Path, seed: u64, repeats: usize, rows: usize) -> anyhow::Result<()> {
    let settings = BenchSettings {
        seed,
        repeats,
        stream_len: rows,
        threads: worker_threads(),
        ..BenchSettings::default()
    };
    let report = bench_protocol(&settings)?;
    ensure_dir(output)?;
    io::write_report_csv(&output.join("report.csv"), &report)?;
    io::write_report_mean_csv(&output.join("report_mean.csv"), &report)?;
    let text = io::render_report_text(&report);
    io::write_text(&output.join("report.txt"), &text)?;
    for traces in &report.traces {
        io::write_traces_csv(
            &output.join(format!("traces_{}.csv", traces.fault.as_str())),
            &traces.rows,
        )?;
    }
    print!("{text}");
    // Wall-clock timings go to stderr only, keeping the report files
    // byte-reproducible under a fixed seed.
    eprint!("{}", io::render_runtime_summary(&report));
    Ok(())
}
