//! Shared domain types: the sensor/process topology, per-timestep data
//! frames, min-max normalization and the engine configuration.

use crate::error::{Error, Result};

/// Sensor-to-process mapping.
///
/// Processes and sensors are identified by dense indices; names are kept
/// for I/O. Every sensor monitors exactly one process and every process has
/// at least one sensor.
#[derive(Debug, Clone)]
pub struct Topology {
    process_names: Vec<String>,
    sensor_names: Vec<String>,
    /// sensor index -> process index
    sensor_process: Vec<usize>,
    /// process index -> sensor indices, in declaration order
    process_sensors: Vec<Vec<usize>>,
}

impl Topology {
    /// Build a topology from `(process name, sensor names)` groups.
    pub fn new(groups: Vec<(String, Vec<String>)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Topology("no processes declared".into()));
        }
        let mut process_names = Vec::with_capacity(groups.len());
        let mut sensor_names = Vec::new();
        let mut sensor_process = Vec::new();
        let mut process_sensors = Vec::with_capacity(groups.len());

        for (p, (pname, sensors)) in groups.into_iter().enumerate() {
            if sensors.is_empty() {
                return Err(Error::Topology(format!(
                    "process '{pname}' has no sensors (|S_p| >= 1 required)"
                )));
            }
            if process_names.contains(&pname) {
                return Err(Error::Topology(format!("duplicate process name '{pname}'")));
            }
            let mut ids = Vec::with_capacity(sensors.len());
            for sname in sensors {
                if sensor_names.contains(&sname) {
                    return Err(Error::Topology(format!(
                        "sensor '{sname}' is assigned to more than one process"
                    )));
                }
                ids.push(sensor_names.len());
                sensor_names.push(sname);
                sensor_process.push(p);
            }
            process_names.push(pname);
            process_sensors.push(ids);
        }

        debug_assert_eq!(
            process_sensors.iter().map(Vec::len).sum::<usize>(),
            sensor_names.len()
        );
        Ok(Self {
            process_names,
            sensor_names,
            sensor_process,
            process_sensors,
        })
    }

    pub fn n_processes(&self) -> usize {
        self.process_names.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_names.len()
    }

    /// Sensors monitoring process `p` (the set S_p).
    pub fn sensors_of(&self, p: usize) -> &[usize] {
        &self.process_sensors[p]
    }

    /// The process monitored by sensor `s`.
    pub fn process_of(&self, s: usize) -> usize {
        self.sensor_process[s]
    }

    /// All sensors not monitoring process `p` (the set S \ S_p).
    pub fn other_sensors(&self, p: usize) -> Vec<usize> {
        (0..self.n_sensors())
            .filter(|&s| self.sensor_process[s] != p)
            .collect()
    }

    pub fn process_name(&self, p: usize) -> &str {
        &self.process_names[p]
    }

    pub fn sensor_name(&self, s: usize) -> &str {
        &self.sensor_names[s]
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.sensor_names
    }

    pub fn process_names(&self) -> &[String] {
        &self.process_names
    }

    pub fn sensor_index(&self, name: &str) -> Option<usize> {
        self.sensor_names.iter().position(|n| n == name)
    }
}

/// Raw sensor measurements at one timestep, indexed by sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: i64,
    pub values: Vec<f64>,
}

impl MeasurementFrame {
    pub fn new(t: i64, values: Vec<f64>) -> Self {
        Self { t, values }
    }

    /// Exactly one finite value per sensor.
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        if self.values.len() != topology.n_sensors() {
            return Err(Error::Stream(format!(
                "frame t={} has {} values, topology has {} sensors",
                self.t,
                self.values.len(),
                topology.n_sensors()
            )));
        }
        for (s, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Stream(format!(
                    "frame t={} has non-finite value for sensor '{}'",
                    self.t,
                    topology.sensor_name(s)
                )));
            }
        }
        Ok(())
    }
}

/// Estimated process states at one timestep, indexed by process.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateFrame {
    pub t: i64,
    pub states: Vec<f64>,
}

impl EstimateFrame {
    pub fn new(t: i64, states: Vec<f64>) -> Self {
        Self { t, states }
    }
}

/// Check that a frame sequence is non-empty, valid against the topology and
/// has consecutive timestamps (gaps are a hard error at ingestion).
pub fn validate_stream(frames: &[MeasurementFrame], topology: &Topology) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::Stream("empty frame sequence".into()));
    };
    first.validate(topology)?;
    for pair in frames.windows(2) {
        pair[1].validate(topology)?;
        if pair[1].t != pair[0].t + 1 {
            return Err(Error::Stream(format!(
                "timestamp gap: {} follows {}",
                pair[1].t, pair[0].t
            )));
        }
    }
    Ok(())
}

/// Per-sensor affine min-max normalizer, fitted once on a calibration window
/// and frozen afterwards.
///
/// Degenerate sensors (max == min over the calibration window) normalize to
/// 0.5 and denormalize back to their stored constant.
#[derive(Debug, Clone)]
pub struct Normalizer {
    ranges: Vec<(f64, f64)>,
}

impl Normalizer {
    /// Fit per-sensor extrema over a calibration window.
    pub fn fit(frames: &[MeasurementFrame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Calibration("cannot fit normalizer on empty window".into()))?;
        let mut ranges: Vec<(f64, f64)> = first.values.iter().map(|&v| (v, v)).collect();
        for frame in frames {
            if frame.values.len() != ranges.len() {
                return Err(Error::Calibration(
                    "inconsistent frame width in calibration window".into(),
                ));
            }
            for (range, &v) in ranges.iter_mut().zip(&frame.values) {
                if !v.is_finite() {
                    return Err(Error::Calibration(format!(
                        "non-finite value at t={} in calibration window",
                        frame.t
                    )));
                }
                range.0 = range.0.min(v);
                range.1 = range.1.max(v);
            }
        }
        Ok(Self { ranges })
    }

    pub fn n_sensors(&self) -> usize {
        self.ranges.len()
    }

    pub fn range(&self, s: usize) -> (f64, f64) {
        self.ranges[s]
    }

    /// Sensors whose calibration window was constant.
    pub fn degenerate_sensors(&self) -> Vec<usize> {
        self.ranges
            .iter()
            .enumerate()
            .filter(|(_, (lo, hi))| lo == hi)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn normalize_value(&self, s: usize, v: f64) -> f64 {
        let (lo, hi) = self.ranges[s];
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.5
        }
    }

    pub fn denormalize_value(&self, s: usize, v: f64) -> f64 {
        let (lo, hi) = self.ranges[s];
        if hi > lo {
            lo + v * (hi - lo)
        } else {
            lo
        }
    }

    pub fn normalize(&self, frame: &MeasurementFrame) -> MeasurementFrame {
        let values = frame
            .values
            .iter()
            .enumerate()
            .map(|(s, &v)| self.normalize_value(s, v))
            .collect();
        MeasurementFrame::new(frame.t, values)
    }

    pub fn denormalize(&self, frame: &MeasurementFrame) -> MeasurementFrame {
        let values = frame
            .values
            .iter()
            .enumerate()
            .map(|(s, &v)| self.denormalize_value(s, v))
            .collect();
        MeasurementFrame::new(frame.t, values)
    }
}

/// Engine hyperparameters.
#[derive(Debug, Clone)]
pub struct Config {
    /// Explanatory-sensor ratio r in (0, 1].
    pub explanatory_ratio: f64,
    /// Neighbor-set size K.
    pub neighbors: usize,
    /// Soft-sensor count M_p per process.
    pub soft_sensors: Vec<usize>,
    /// Smoothness weight gamma_p per process.
    pub gamma: Vec<f64>,
    /// Sliding-window length l for reliability updates.
    pub window: usize,
    /// Warm-up length T.
    pub warmup_len: usize,
    /// Warm-up convergence threshold.
    pub epsilon: f64,
    /// Fixed size of the sampled neighbor dataset.
    pub history_capacity: usize,
    /// Seed for every random draw the engine makes.
    pub seed: u64,
    /// Rebuild warm-up soft sensors from the current iterate each
    /// coordinate-descent pass instead of fixing them after initialization.
    /// Off by default; the monotone-descent guarantee only holds when off.
    pub refit_warmup_soft_sensors: bool,
}

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const WARMUP_ITERATION_CAP: usize = 500;

impl Config {
    /// The benchmark defaults for a given topology: r = 0.7, K = 48,
    /// l = 72, T = 168, gamma = 1, and M_p chosen so every process has five
    /// hard plus soft sensors in total.
    pub fn defaults_for(topology: &Topology, seed: u64) -> Self {
        let soft_sensors = (0..topology.n_processes())
            .map(|p| 5usize.saturating_sub(topology.sensors_of(p).len()))
            .collect();
        Self {
            explanatory_ratio: 0.7,
            neighbors: 48,
            soft_sensors,
            gamma: vec![1.0; topology.n_processes()],
            window: 72,
            warmup_len: 168,
            epsilon: DEFAULT_EPSILON,
            history_capacity: 500,
            seed,
            refit_warmup_soft_sensors: false,
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.explanatory_ratio > 0.0 && self.explanatory_ratio <= 1.0) {
            return fail(format!(
                "explanatory ratio r must lie in (0, 1], got {}",
                self.explanatory_ratio
            ));
        }
        if self.neighbors == 0 {
            return fail("neighbor count K must be positive".into());
        }
        if self.window == 0 {
            return fail("sliding-window length l must be positive".into());
        }
        if self.warmup_len <= self.neighbors.max(self.window) {
            return fail(format!(
                "warm-up length T={} must exceed max(K={}, l={})",
                self.warmup_len, self.neighbors, self.window
            ));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.history_capacity < self.neighbors {
            return fail(format!(
                "history capacity {} is below the neighbor count K={}",
                self.history_capacity, self.neighbors
            ));
        }
        if self.soft_sensors.len() != topology.n_processes() {
            return fail(format!(
                "soft-sensor counts cover {} processes, topology has {}",
                self.soft_sensors.len(),
                topology.n_processes()
            ));
        }
        if self.gamma.len() != topology.n_processes() {
            return fail(format!(
                "gamma covers {} processes, topology has {}",
                self.gamma.len(),
                topology.n_processes()
            ));
        }
        for (p, &g) in self.gamma.iter().enumerate() {
            if !g.is_finite() || g < 0.0 {
                return fail(format!(
                    "gamma for process '{}' must be finite and >= 0, got {g}",
                    topology.process_name(p)
                ));
            }
        }
        for (p, &m) in self.soft_sensors.iter().enumerate() {
            if m > 0 && topology.other_sensors(p).is_empty() {
                return fail(format!(
                    "process '{}' requests {m} soft sensors but no sensors exist outside it",
                    topology.process_name(p)
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_proc_topology() -> Topology {
        Topology::new(vec![
            ("a".into(), vec!["a1".into(), "a2".into()]),
            ("b".into(), vec!["b1".into()]),
        ])
        .unwrap()
    }

    fn frame(t: i64, values: &[f64]) -> MeasurementFrame {
        MeasurementFrame::new(t, values.to_vec())
    }

    #[test]
    fn topology_rejects_sensor_in_two_processes() {
        let err = Topology::new(vec![
            ("a".into(), vec!["s1".into()]),
            ("b".into(), vec!["s1".into()]),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("more than one process"));
    }

    #[test]
    fn topology_rejects_empty_process() {
        let err = Topology::new(vec![("a".into(), vec![])]).unwrap_err();
        assert!(err.to_string().contains("no sensors"));
    }

    #[test]
    fn topology_indexing() {
        let topo = two_proc_topology();
        assert_eq!(topo.n_sensors(), 3);
        assert_eq!(topo.n_processes(), 2);
        assert_eq!(topo.process_of(0), 0);
        assert_eq!(topo.process_of(2), 1);
        assert_eq!(topo.sensors_of(0), &[0, 1]);
        assert_eq!(topo.other_sensors(0), vec![2]);
        assert_eq!(topo.sensor_index("b1"), Some(2));
        // cardinalities add up to |S|
        let total: usize = (0..topo.n_processes())
            .map(|p| topo.sensors_of(p).len())
            .sum();
        assert_eq!(total, topo.n_sensors());
    }

    #[test]
    fn normalizer_extrema() {
        let frames = vec![
            frame(1, &[2.0, 5.0, 1.0]),
            frame(2, &[4.0, 5.0, 0.0]),
            frame(3, &[6.0, 5.0, 2.0]),
        ];
        let norm = Normalizer::fit(&frames).unwrap();
        assert_eq!(norm.range(0), (2.0, 6.0));
        assert_eq!(norm.range(1), (5.0, 5.0));
        assert_eq!(norm.degenerate_sensors(), vec![1]);
    }

    #[test]
    fn normalizer_rejects_empty_window() {
        assert!(matches!(Normalizer::fit(&[]), Err(Error::Calibration(_))));
    }

    #[test]
    fn normalizer_extrema_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frames: Vec<MeasurementFrame> = (0..100)
            .map(|t| frame(t, &[rng.random_range(-5.0..5.0)]))
            .collect();
        let norm = Normalizer::fit(&frames).unwrap();
        // brute-force scan oracle
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in &frames {
            lo = lo.min(f.values[0]);
            hi = hi.max(f.values[0]);
        }
        assert_eq!(norm.range(0), (lo, hi));
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let norm = Normalizer::fit(&[frame(1, &[2.0]), frame(2, &[6.0])]).unwrap();
        assert_eq!(norm.normalize_value(0, 2.0), 0.0);
        assert_eq!(norm.normalize_value(0, 6.0), 1.0);
        assert_eq!(norm.normalize_value(0, 4.0), 0.5);
        // post-calibration values are not clamped
        assert!(norm.normalize_value(0, 8.0) > 1.0);
    }

    #[test]
    fn degenerate_sensor_maps_to_half_and_back() {
        let norm = Normalizer::fit(&[frame(1, &[5.0]), frame(2, &[5.0])]).unwrap();
        assert_eq!(norm.normalize_value(0, 5.0), 0.5);
        assert_eq!(norm.denormalize_value(0, 0.3), 5.0);
    }

    #[test]
    fn denormalize_endpoints() {
        let norm = Normalizer::fit(&[frame(1, &[2.0]), frame(2, &[6.0])]).unwrap();
        assert_eq!(norm.denormalize_value(0, 0.0), 2.0);
        assert_eq!(norm.denormalize_value(0, 1.0), 6.0);
    }

    #[test]
    fn round_trip_on_random_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let norm = Normalizer::fit(&[frame(1, &[-3.0, 0.1]), frame(2, &[7.0, 0.9])]).unwrap();
        for _ in 0..1000 {
            for s in 0..2 {
                let v: f64 = rng.random_range(-10.0..10.0);
                let back = norm.denormalize_value(s, norm.normalize_value(s, v));
                assert!((back - v).abs() < 1e-12);
                let w: f64 = rng.random_range(-2.0..2.0);
                let there = norm.normalize_value(s, norm.denormalize_value(s, w));
                assert!((there - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stream_validation_catches_gap_and_nan() {
        let topo = two_proc_topology();
        let ok = vec![frame(1, &[0.0; 3]), frame(2, &[0.0; 3])];
        assert!(validate_stream(&ok, &topo).is_ok());

        let gap = vec![frame(1, &[0.0; 3]), frame(3, &[0.0; 3])];
        assert!(matches!(validate_stream(&gap, &topo), Err(Error::Stream(_))));

        let nan = vec![frame(1, &[0.0, f64::NAN, 0.0])];
        let err = validate_stream(&nan, &topo).unwrap_err();
        assert!(err.to_string().contains("a2"));

        let short = vec![frame(1, &[0.0; 2])];
        assert!(validate_stream(&short, &topo).is_err());
    }

    #[test]
    fn config_validation() {
        let topo = two_proc_topology();
        let mut cfg = Config::defaults_for(&topo, 0);
        cfg.neighbors = 4;
        cfg.window = 3;
        cfg.warmup_len = 10;
        cfg.history_capacity = 16;
        cfg.soft_sensors = vec![1, 1];
        assert!(cfg.validate(&topo).is_ok());
        assert_eq!(cfg.epsilon, 1e-5);

        let mut bad = cfg.clone();
        bad.warmup_len = 4; // not > max(K, l)
        assert!(bad.validate(&topo).is_err());

        let mut bad = cfg.clone();
        bad.explanatory_ratio = 0.0;
        assert!(bad.validate(&topo).is_err());

        let mut bad = cfg.clone();
        bad.history_capacity = 2;
        assert!(bad.validate(&topo).is_err());

        // sole process cannot have soft sensors: nothing outside it
        let solo = Topology::new(vec![("a".into(), vec!["s1".into(), "s2".into()])]).unwrap();
        let mut cfg = Config::defaults_for(&solo, 0);
        cfg.neighbors = 2;
        cfg.window = 2;
        cfg.warmup_len = 5;
        cfg.history_capacity = 4;
        cfg.soft_sensors = vec![1];
        assert!(cfg.validate(&solo).is_err());
    }

    #[test]
    fn reference_parameterizations_validate() {
        // hourly deployment: T=168, r=0.7, K=48, l in {24, 72}
        let topo = Topology::new(
            [5usize, 3, 3, 2, 2, 1]
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
        .unwrap();
        for l in [24, 72] {
            let mut cfg = Config::defaults_for(&topo, 0);
            cfg.window = l;
            assert!(cfg.validate(&topo).is_ok(), "l={l}");
        }
        // 30-second kiln deployment: T=2880, l=288, five soft sensors per
        // process
        let kiln = Topology::new(
            (0..20)
                .map(|p| (format!("k{p}"), vec![format!("k{p}s0")]))
                .collect(),
        )
        .unwrap();
        let mut cfg = Config::defaults_for(&kiln, 0);
        cfg.warmup_len = 2880;
        cfg.window = 288;
        cfg.soft_sensors = vec![5; 20];
        assert!(cfg.validate(&kiln).is_ok());
    }

    #[test]
    fn defaults_follow_five_sensor_rule() {
        let topo = Topology::new(vec![
            ("p".into(), (0..5).map(|i| format!("p{i}")).collect()),
            ("q".into(), vec!["q0".into()]),
        ])
        .unwrap();
        let cfg = Config::defaults_for(&topo, 1);
        assert_eq!(cfg.soft_sensors, vec![0, 4]);
        assert_eq!(cfg.neighbors, 48);
        assert_eq!(cfg.warmup_len, 168);
    }
}
