//! CSV wire formats: measurement streams, cleaned states, score traces,
//! fault masks, and the benchmark report renderings.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{BenchReport, BenchmarkRun};
use crate::faults::FaultKind;
use crate::model::{EstimateFrame, MeasurementFrame, Topology};

/// Read a measurement stream: header `t,<sensor>...`, one row per step.
/// Columns may appear in any order but must cover the topology exactly;
/// timestamps must be consecutive.
pub fn read_frames_csv(path: &Path, topology: &Topology) -> Result<Vec<MeasurementFrame>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut header_iter = headers.iter();
    match header_iter.next() {
        Some("t") => {}
        other => {
            return Err(Error::Stream(format!(
                "first column must be 't', found {:?}",
                other.unwrap_or("<empty>")
            )))
        }
    }
    let names: Vec<&str> = header_iter.collect();
    for name in &names {
        if topology.sensor_index(name).is_none() {
            return Err(Error::Stream(format!(
                "column '{name}' is not a sensor in the topology"
            )));
        }
    }
    // column position of each topology sensor, by name
    let mut column_of = Vec::with_capacity(topology.n_sensors());
    for s in 0..topology.n_sensors() {
        let want = topology.sensor_name(s);
        match names.iter().position(|n| *n == want) {
            Some(pos) => column_of.push(pos + 1),
            None => {
                return Err(Error::Stream(format!(
                    "sensor '{want}' is missing from the CSV header"
                )))
            }
        }
    }

    let mut frames = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let t: i64 = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Stream(format!("row {}: bad timestamp", line + 2)))?;
        let mut values = vec![0.0; topology.n_sensors()];
        for (s, &col) in column_of.iter().enumerate() {
            let raw = record
                .get(col)
                .ok_or_else(|| Error::Stream(format!("row {}: short record", line + 2)))?;
            values[s] = raw.parse().map_err(|_| {
                Error::Stream(format!(
                    "row {}: bad value '{raw}' for sensor '{}'",
                    line + 2,
                    topology.sensor_name(s)
                ))
            })?;
        }
        frames.push(MeasurementFrame::new(t, values));
    }
    crate::model::validate_stream(&frames, topology)?;
    Ok(frames)
}

pub fn write_frames_csv(path: &Path, frames: &[MeasurementFrame], topology: &Topology) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(topology.sensor_names().iter().cloned());
    writer.write_record(&header)?;
    for frame in frames {
        let mut row = vec![frame.t.to_string()];
        row.extend(frame.values.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Incremental writer for the two per-step output streams (cleaned states
/// and scores), flushed after every row.
pub struct StreamWriter {
    cleaned: csv::Writer<std::fs::File>,
    scores: csv::Writer<std::fs::File>,
}

impl StreamWriter {
    pub fn create(cleaned_path: &Path, scores_path: &Path, topology: &Topology) -> Result<Self> {
        let mut cleaned = csv::Writer::from_path(cleaned_path)?;
        let mut header = vec!["t".to_string()];
        header.extend(topology.process_names().iter().cloned());
        cleaned.write_record(&header)?;
        let mut scores = csv::Writer::from_path(scores_path)?;
        let mut header = vec!["t".to_string()];
        header.extend(topology.sensor_names().iter().cloned());
        scores.write_record(&header)?;
        Ok(Self { cleaned, scores })
    }

    /// Emit one step: cleaned states first, then scores, both stamped t.
    pub fn emit(&mut self, estimates: &EstimateFrame, scores: &[f64]) -> Result<()> {
        let mut row = vec![estimates.t.to_string()];
        row.extend(estimates.states.iter().map(|v| v.to_string()));
        self.cleaned.write_record(&row)?;
        let mut row = vec![estimates.t.to_string()];
        row.extend(scores.iter().map(|v| v.to_string()));
        self.scores.write_record(&row)?;
        self.cleaned.flush()?;
        self.scores.flush()?;
        Ok(())
    }
}

/// Batch score table: header `t,<sensor>...`, one row per step.
pub fn write_scores_csv(path: &Path, rows: &[(i64, Vec<f64>)], topology: &Topology) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(topology.sensor_names().iter().cloned());
    writer.write_record(&header)?;
    for (t, scores) in rows {
        let mut row = vec![t.to_string()];
        row.extend(scores.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_estimates_csv(
    path: &Path,
    frames: &[EstimateFrame],
    topology: &Topology,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(topology.process_names().iter().cloned());
    writer.write_record(&header)?;
    for frame in frames {
        let mut row = vec![frame.t.to_string()];
        row.extend(frame.states.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Fault masks in the same shape as the measurement CSV, 0/1 per cell.
pub fn write_mask_csv(
    path: &Path,
    timestamps: &[i64],
    masks: &[Vec<bool>],
    topology: &Topology,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(topology.sensor_names().iter().cloned());
    writer.write_record(&header)?;
    for (i, &t) in timestamps.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for mask in masks {
            row.push(if mask[i] { "1".into() } else { "0".into() });
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Warm-up summary as `key,sensor,value` rows: iteration count, convergence
/// flag, final objective, then one score row per sensor.
pub fn write_warmup_summary_csv(
    path: &Path,
    report: &crate::pipeline::WarmupReport,
    topology: &Topology,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["key", "sensor", "value"])?;
    writer.write_record(["iterations", "", &report.iterations.to_string()])?;
    writer.write_record(["converged", "", &report.converged.to_string()])?;
    writer.write_record(["objective", "", &report.final_objective.to_string()])?;
    for (s, score) in report.scores.iter().enumerate() {
        writer.write_record(["score", topology.sensor_name(s), &score.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_run_rows<W: std::io::Write>(
    writer: &mut csv::Writer<W>,
    runs: &[BenchmarkRun],
    process_names: &[String],
    with_seed: bool,
) -> Result<()> {
    let mut header = vec!["fault".to_string(), "method".to_string()];
    if with_seed {
        header.push("seed".to_string());
    }
    header.extend(process_names.iter().map(|p| format!("mae_{p}")));
    header.push("mae_avg".to_string());
    writer.write_record(&header)?;
    for run in runs {
        let mut row = vec![run.fault.as_str().to_string(), run.method.as_str().to_string()];
        if with_seed {
            row.push(run.seed.to_string());
        }
        row.extend(run.per_process.iter().map(|v| format!("{v:.6}")));
        row.push(format!("{:.6}", run.average));
        writer.write_record(&row)?;
    }
    Ok(())
}

/// Per-repeat MAE table (one row per fault, method and seed).
pub fn write_report_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    write_run_rows(&mut writer, &report.runs, &report.process_names, true)?;
    writer.flush()?;
    Ok(())
}

/// Seed-averaged MAE table.
pub fn write_report_mean_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    write_run_rows(&mut writer, &report.mean_runs, &report.process_names, false)?;
    writer.flush()?;
    Ok(())
}

/// Aligned-column text rendering of the seed-averaged table, one block per
/// fault kind, processes as rows and methods as columns.
pub fn render_report_text(report: &BenchReport) -> String {
    let methods: Vec<crate::eval::Method> = {
        let mut seen = Vec::new();
        for run in &report.mean_runs {
            if !seen.contains(&run.method) {
                seen.push(run.method);
            }
        }
        seen
    };
    let mut out = String::new();
    let s = &report.settings;
    let c = &report.engine_config;
    out.push_str(&format!(
        "settings: rows={} repeats={} seed={} intensities={:?} short_rate={} duration={:?} gap={}\n",
        s.stream_len, s.repeats, s.seed, s.intensities, s.short_rate, s.duration, s.gap
    ));
    out.push_str(&format!(
        "engine: r={} K={} l={} T={} gamma={:?} soft_sensors={:?} history={} epsilon={}\n\n",
        c.explanatory_ratio,
        c.neighbors,
        c.window,
        c.warmup_len,
        c.gamma,
        c.soft_sensors,
        c.history_capacity,
        c.epsilon
    ));
    let name_width = report
        .process_names
        .iter()
        .map(|p| p.len())
        .chain(["process".len(), "average".len()])
        .max()
        .unwrap_or(8)
        .max(8);
    for fault in FaultKind::ALL {
        let runs: Vec<&BenchmarkRun> = report
            .mean_runs
            .iter()
            .filter(|r| r.fault == fault)
            .collect();
        if runs.is_empty() {
            continue;
        }
        out.push_str(&format!("== {} faults ==\n", fault.as_str().to_uppercase()));
        out.push_str(&format!("{:<name_width$}", "process"));
        for m in &methods {
            out.push_str(&format!(" {:>10}", m.as_str()));
        }
        out.push('\n');
        for (p, pname) in report.process_names.iter().enumerate() {
            out.push_str(&format!("{pname:<name_width$}"));
            for m in &methods {
                let run = runs.iter().find(|r| r.method == *m).expect("method present");
                out.push_str(&format!(" {:>10.4}", run.per_process[p]));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<name_width$}", "average"));
        for m in &methods {
            let run = runs.iter().find(|r| r.method == *m).expect("method present");
            out.push_str(&format!(" {:>10.4}", run.average));
        }
        out.push_str("\n\n");
    }
    out
}

/// Long-format trace rows `(t, series, value)` for plotting.
pub fn write_traces_csv(path: &Path, rows: &[(i64, String, f64)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "series", "value"])?;
    for (t, series, value) in rows {
        writer.write_record([t.to_string(), series.clone(), value.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Console summary of runtimes; kept out of the report files so repeated
/// runs stay byte-identical.
pub fn render_runtime_summary(report: &BenchReport) -> String {
    let mut out = String::new();
    for run in &report.mean_runs {
        out.push_str(&format!(
            "{:>9} / {:<7} mean runtime {:?}\n",
            run.fault.as_str(),
            run.method.as_str(),
            run.runtime
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;

    fn topo() -> Topology {
        Topology::new(vec![
            ("a".into(), vec!["a1".into(), "a2".into()]),
            ("b".into(), vec!["b1".into()]),
        ])
        .unwrap()
    }

    #[test]
    fn frames_round_trip_with_shuffled_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.csv");
        let topo = topo();
        let frames = vec![
            MeasurementFrame::new(1, vec![0.25, 0.5, 0.75]),
            MeasurementFrame::new(2, vec![0.3, 0.6, 0.9]),
        ];
        write_frames_csv(&path, &frames, &topo).unwrap();
        let back = read_frames_csv(&path, &topo).unwrap();
        assert_eq!(frames, back);

        // shuffled column order still maps by name
        let shuffled = dir.path().join("shuffled.csv");
        std::fs::write(&shuffled, "t,b1,a1,a2\n1,0.75,0.25,0.5\n2,0.9,0.3,0.6\n").unwrap();
        let back = read_frames_csv(&shuffled, &topo).unwrap();
        assert_eq!(frames, back);
    }

    #[test]
    fn missing_and_unknown_columns_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let topo = topo();
        let missing = dir.path().join("missing.csv");
        std::fs::write(&missing, "t,a1,a2\n1,0.1,0.2\n").unwrap();
        let err = read_frames_csv(&missing, &topo).unwrap_err();
        assert!(err.to_string().contains("b1"), "{err}");

        let unknown = dir.path().join("unknown.csv");
        std::fs::write(&unknown, "t,a1,a2,b1,zz\n1,0.1,0.2,0.3,0.4\n").unwrap();
        let err = read_frames_csv(&unknown, &topo).unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }

    #[test]
    fn timestamp_gap_detected_at_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let topo = topo();
        let path = dir.path().join("gap.csv");
        std::fs::write(&path, "t,a1,a2,b1\n1,0,0,0\n3,0,0,0\n").unwrap();
        let err = read_frames_csv(&path, &topo).unwrap_err();
        assert!(err.to_string().contains("gap"), "{err}");
    }
}
