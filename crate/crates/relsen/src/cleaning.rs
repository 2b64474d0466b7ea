//! Ground-truth estimation: the closed-form minimizer of the reliability
//! weighted cleaning loss.
//!
//! Each process state is the convex combination of its hard sensors, its
//! soft sensors and the previous estimate, weighted by reliability scores
//! and the smoothness weight.

use crate::error::{Error, Result};
use crate::model::Topology;
use crate::soft_sensor::{soft_reliability, SoftSensorRecord};

/// Estimate all process states for one timestep.
///
/// `softs` holds this step's soft sensors across all processes; records
/// whose weights are all zero are discarded and drop out of both sums.
/// A process whose total weight is exactly zero is reported as dead.
pub fn estimate_states(
    values: &[f64],
    softs: &[SoftSensorRecord],
    scores: &[f64],
    z_prev: &[f64],
    gamma: &[f64],
    topology: &Topology,
) -> Result<Vec<f64>> {
    let n_proc = topology.n_processes();
    debug_assert_eq!(values.len(), topology.n_sensors());
    debug_assert_eq!(scores.len(), topology.n_sensors());
    debug_assert_eq!(z_prev.len(), n_proc);
    debug_assert_eq!(gamma.len(), n_proc);

    let mut numer = vec![0.0; n_proc];
    let mut denom = vec![0.0; n_proc];
    for s in 0..topology.n_sensors() {
        let p = topology.process_of(s);
        numer[p] += scores[s] * values[s];
        denom[p] += scores[s];
    }
    for record in softs {
        if let Some(c) = soft_reliability(record, scores) {
            numer[record.process] += c * record.output;
            denom[record.process] += c;
        }
    }
    for p in 0..n_proc {
        numer[p] += gamma[p] * z_prev[p];
        denom[p] += gamma[p];
    }

    let mut states = vec![0.0; n_proc];
    for p in 0..n_proc {
        if denom[p] <= 0.0 {
            return Err(Error::Estimation(format!(
                "process '{}' has zero total weight (no live information sources)",
                topology.process_name(p)
            )));
        }
        states[p] = numer[p] / denom[p];
    }
    Ok(states)
}
