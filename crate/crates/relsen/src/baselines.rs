//! Reference cleaners: MEDIAN, MEAN and the reliability-based IMC method.

use std::collections::VecDeque;

use crate::model::{EstimateFrame, MeasurementFrame, Topology};

/// Median of each process's sensors; an even count takes the mean of the
/// two middle values (so two sensors average, matching the stated rule).
pub fn median_clean(frame: &MeasurementFrame, topology: &Topology) -> EstimateFrame {
    let states = (0..topology.n_processes())
        .map(|p| {
            let mut vals: Vec<f64> = topology
                .sensors_of(p)
                .iter()
                .map(|&s| frame.values[s])
                .collect();
            vals.sort_by(f64::total_cmp);
            let n = vals.len();
            if n % 2 == 1 {
                vals[n / 2]
            } else {
                (vals[n / 2 - 1] + vals[n / 2]) / 2.0
            }
        })
        .collect();
    EstimateFrame::new(frame.t, states)
}

/// Mean of each process's sensors.
pub fn mean_clean(frame: &MeasurementFrame, topology: &Topology) -> EstimateFrame {
    let states = (0..topology.n_processes())
        .map(|p| {
            let sensors = topology.sensors_of(p);
            sensors.iter().map(|&s| frame.values[s]).sum::<f64>() / sensors.len() as f64
        })
        .collect();
    EstimateFrame::new(frame.t, states)
}

pub const DEFAULT_IMC_TOL: f64 = 0.05;

/// Influence Mean Cleaning: per-sensor reliability is the windowed fraction
/// of measurements that landed within `tol` of the weighted-mean estimate.
#[derive(Debug, Clone)]
pub struct ImcState {
    tol: f64,
    window: usize,
    /// Consistency bits per sensor, most recent at the back. Starts fully
    /// trusted (all ones).
    bits: Vec<VecDeque<bool>>,
}

impl ImcState {
    pub fn new(topology: &Topology, tol: f64, window: usize) -> Self {
        assert!(window > 0 && tol > 0.0);
        let bits = (0..topology.n_sensors())
            .map(|_| {
                let mut q = VecDeque::with_capacity(window);
                q.extend(std::iter::repeat_n(true, window));
                q
            })
            .collect();
        Self { tol, window, bits }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|q| q.iter().filter(|&&b| b).count() as f64 / self.window as f64)
            .collect()
    }

    /// One step: estimate from current scores, then refresh the consistency
    /// bits against that estimate. Single-sensor processes pass the raw
    /// measurement through; a process whose scores are all zero falls back
    /// to the unweighted mean.
    pub fn step(&mut self, frame: &MeasurementFrame, topology: &Topology) -> (EstimateFrame, Vec<f64>) {
        let scores = self.scores();
        let states: Vec<f64> = (0..topology.n_processes())
            .map(|p| {
                let sensors = topology.sensors_of(p);
                if sensors.len() == 1 {
                    return frame.values[sensors[0]];
                }
                let total: f64 = sensors.iter().map(|&s| scores[s]).sum();
                if total > 0.0 {
                    sensors.iter().map(|&s| scores[s] * frame.values[s]).sum::<f64>() / total
                } else {
                    sensors.iter().map(|&s| frame.values[s]).sum::<f64>() / sensors.len() as f64
                }
            })
            .collect();

        for s in 0..topology.n_sensors() {
            let p = topology.process_of(s);
            let consistent = (frame.values[s] - states[p]).abs() <= self.tol;
            let q = &mut self.bits[s];
            q.push_back(consistent);
            while q.len() > self.window {
                q.pop_front();
            }
        }
        (EstimateFrame::new(frame.t, states), scores)
    }
}
