//! On-disk configuration: the engine config file (topology plus
//! hyperparameters) and the fault-campaign spec file, both TOML.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::faults::{FaultKind, FaultSpec};
use crate::model::{Config, Topology, DEFAULT_EPSILON};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    /// Explanatory-sensor ratio.
    r: f64,
    /// Neighbor-set size K.
    k: usize,
    /// Sliding-window length l.
    window: usize,
    /// Warm-up length T.
    warmup: usize,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_history_capacity")]
    history_capacity: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    refit_warmup_soft_sensors: bool,
    #[serde(rename = "process")]
    processes: Vec<ProcessSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessSection {
    name: String,
    sensors: Vec<String>,
    /// M_p.
    #[serde(default)]
    soft_sensors: usize,
    /// gamma_p.
    #[serde(default = "default_gamma")]
    gamma: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_history_capacity() -> usize {
    500
}

fn default_gamma() -> f64 {
    1.0
}

/// Parse and validate a config file. TOML errors come back with their line
/// and column; semantic errors name the offending process or sensor.
pub fn parse_config(text: &str) -> Result<(Topology, Config)> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
    let topology = Topology::new(
        file.processes
            .iter()
            .map(|p| (p.name.clone(), p.sensors.clone()))
            .collect(),
    )?;
    let config = Config {
        explanatory_ratio: file.r,
        neighbors: file.k,
        soft_sensors: file.processes.iter().map(|p| p.soft_sensors).collect(),
        gamma: file.processes.iter().map(|p| p.gamma).collect(),
        window: file.window,
        warmup_len: file.warmup,
        epsilon: file.epsilon,
        history_capacity: file.history_capacity,
        seed: file.seed,
        refit_warmup_soft_sensors: file.refit_warmup_soft_sensors,
    };
    config.validate(&topology)?;
    Ok((topology, config))
}

pub fn load_config(path: &Path) -> Result<(Topology, Config)> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Render a config (plus its topology) back to TOML, e.g. next to a freshly
/// generated synthetic dataset.
pub fn render_config(topology: &Topology, config: &Config) -> String {
    let mut out = String::new();
    out.push_str(&format!("r = {}\n", config.explanatory_ratio));
    out.push_str(&format!("k = {}\n", config.neighbors));
    out.push_str(&format!("window = {}\n", config.window));
    out.push_str(&format!("warmup = {}\n", config.warmup_len));
    out.push_str(&format!("epsilon = {}\n", config.epsilon));
    out.push_str(&format!("history_capacity = {}\n", config.history_capacity));
    out.push_str(&format!("seed = {}\n", config.seed));
    for p in 0..topology.n_processes() {
        out.push_str("\n[[process]]\n");
        out.push_str(&format!("name = \"{}\"\n", topology.process_name(p)));
        let sensors: Vec<String> = topology
            .sensors_of(p)
            .iter()
            .map(|&s| format!("\"{}\"", topology.sensor_name(s)))
            .collect();
        out.push_str(&format!("sensors = [{}]\n", sensors.join(", ")));
        out.push_str(&format!("soft_sensors = {}\n", config.soft_sensors[p]));
        out.push_str(&format!("gamma = {}\n", config.gamma[p]));
    }
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultFile {
    /// First contaminated row index (the warm-up span stays clean).
    start: usize,
    /// Stage intensities applied over equal splits of the faulted span.
    intensities: Vec<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(rename = "fault")]
    faults: Vec<FaultSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultSection {
    kind: String,
    sensor: String,
    #[serde(default = "default_rate")]
    rate: f64,
    #[serde(default = "default_duration")]
    duration: [usize; 2],
    #[serde(default = "default_gap")]
    gap: usize,
}

fn default_rate() -> f64 {
    0.05
}

fn default_duration() -> [usize; 2] {
    [10, 50]
}

fn default_gap() -> usize {
    24
}

/// A parsed fault campaign: per-sensor specs plus the shared staging.
#[derive(Debug, Clone)]
pub struct FaultCampaign {
    pub specs: Vec<FaultSpec>,
    pub intensities: Vec<f64>,
    pub start: usize,
}

pub fn parse_fault_campaign(text: &str, topology: &Topology) -> Result<FaultCampaign> {
    let file: FaultFile =
        toml::from_str(text).map_err(|e| Error::Injection(format!("fault spec file: {e}")))?;
    if file.intensities.is_empty() {
        return Err(Error::Injection("no stage intensities given".into()));
    }
    let mut specs = Vec::with_capacity(file.faults.len());
    let mut seen = Vec::new();
    for (i, section) in file.faults.iter().enumerate() {
        let kind = FaultKind::parse(&section.kind)?;
        let target = topology.sensor_index(&section.sensor).ok_or_else(|| {
            Error::Injection(format!(
                "fault target '{}' is not a sensor in the topology",
                section.sensor
            ))
        })?;
        if seen.contains(&target) {
            return Err(Error::Injection(format!(
                "sensor '{}' appears in more than one fault (one kind per sensor)",
                section.sensor
            )));
        }
        seen.push(target);
        let spec = FaultSpec {
            kind,
            target,
            intensity: file.intensities[0],
            short_rate: section.rate,
            duration: (section.duration[0], section.duration[1]),
            gap: section.gap,
            seed: file.seed.wrapping_add(0x9E37_79B9u64.wrapping_mul(i as u64 + 1)),
        };
        spec.validate()?;
        specs.push(spec);
    }
    Ok(FaultCampaign {
        specs,
        intensities: file.intensities,
        start: file.start,
    })
}

pub fn load_fault_campaign(path: &Path, topology: &Topology) -> Result<FaultCampaign> {
    let text = std::fs::read_to_string(path)?;
    parse_fault_campaign(&text, topology)
}
