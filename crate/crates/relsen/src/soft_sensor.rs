//! Random local linear regression soft sensors.
//!
//! A soft sensor for process `p` predicts its state from a random subset of
//! sensors monitoring *other* processes: pick explanatory sensors, find the
//! K nearest stored measurement vectors in explanatory space, fit a local
//! least-squares plane against the stored state estimates, and evaluate the
//! plane at the current measurements.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Topology;

/// One stored `(timestamp, measurements, estimates)` triple.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub t: i64,
    pub measurements: Vec<f64>,
    pub estimates: Vec<f64>,
}

/// Fixed-capacity uniform reservoir over the stream of finalized steps.
///
/// Stores full measurement and estimate vectors; queries project onto the
/// explanatory set of the moment, since that set changes every step.
#[derive(Debug, Clone)]
pub struct HistoryStore {
    capacity: usize,
    seen: u64,
    entries: Vec<HistoryEntry>,
}

impl HistoryStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        Self {
            capacity,
            seen: 0,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries offered so far (not just retained).
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    /// Offer one entry; retained with probability `capacity / seen`
    /// (Algorithm R).
    pub fn insert<R: Rng>(&mut self, entry: HistoryEntry, rng: &mut R) {
        self.seen += 1;
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.entries[j as usize] = entry;
            }
        }
    }

    /// Borrowed `(t, measurements)` view for neighbor queries.
    pub fn candidates(&self) -> Vec<(i64, &[f64])> {
        self.entries
            .iter()
            .map(|e| (e.t, e.measurements.as_slice()))
            .collect()
    }
}

/// Running min/max over every fitting error observed so far, across all
/// processes and timesteps.
#[derive(Debug, Clone, Default)]
pub struct ErrorNormalizer {
    lo: f64,
    hi: f64,
    count: u64,
}

impl ErrorNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, e: f64) {
        if self.count == 0 {
            self.lo = e;
            self.hi = e;
        } else {
            self.lo = self.lo.min(e);
            self.hi = self.hi.max(e);
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Min-max normalized error in [0, 1]. A degenerate error set
    /// (max == min, including the very first error) maps to 0.
    pub fn normalized(&self, e: f64) -> f64 {
        assert!(self.count > 0, "normalized() before any observe()");
        if self.hi > self.lo {
            ((e - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// A fully constructed soft sensor at one timestep.
#[derive(Debug, Clone)]
pub struct SoftSensorRecord {
    pub process: usize,
    /// 1-based index m within the process's soft sensors.
    pub index: usize,
    /// Explanatory sensor ids, sorted ascending; disjoint from S_p.
    pub explanatory: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Mean squared fitting error over the neighbor set.
    pub fit_error: f64,
    /// Fitting error min-max normalized over all errors seen so far.
    pub norm_error: f64,
    /// Prediction at the construction-time measurements.
    pub output: f64,
    /// Reliability score at construction time (cached for export).
    pub reliability: f64,
}

impl SoftSensorRecord {
    /// Evaluate the fitted plane on a full measurement vector.
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.explanatory
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * values[s])
            .sum::<f64>()
            + self.bias
    }

    pub fn abs_weight_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// Uniformly select `ceil(r * |S \ S_p|)` explanatory sensors outside
/// process `p`. The result is sorted for deterministic downstream sums.
pub fn select_explanatory<R: Rng>(
    topology: &Topology,
    process: usize,
    ratio: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let pool = topology.other_sensors(process);
    if pool.is_empty() {
        return Err(Error::Config(format!(
            "no explanatory sensors available for process '{}'",
            topology.process_name(process)
        )));
    }
    let count = ((ratio * pool.len() as f64).ceil() as usize).clamp(1, pool.len());
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, pool.len(), count)
        .iter()
        .map(|i| pool[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Indices of the `k` candidates closest to `point` in Euclidean distance
/// over the explanatory coordinates. Ties broken by older timestamp.
pub fn knn(
    candidates: &[(i64, &[f64])],
    explanatory: &[usize],
    point: &[f64],
    k: usize,
) -> Result<Vec<usize>> {
    assert_eq!(point.len(), explanatory.len());
    if candidates.len() < k {
        return Err(Error::InsufficientHistory {
            have: candidates.len(),
            need: k,
        });
    }
    let mut scored: Vec<(f64, i64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, (t, values))| {
            let d2: f64 = explanatory
                .iter()
                .zip(point)
                .map(|(&s, &q)| {
                    let d = values[s] - q;
                    d * d
                })
                .sum();
            (d2, *t, i)
        })
        .collect();
    let cmp = |a: &(f64, i64, usize), b: &(f64, i64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    Ok(scored.into_iter().map(|(_, _, i)| i).collect())
}

/// A fitted local plane.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Mean squared residual over the fitting points.
    pub fit_error: f64,
}

// Ridge ladder tried when the normal system is not positive definite. The
// first fallback is the documented 1e-8; larger values only fire on
// pathologically degenerate neighborhoods.
const RIDGE_LADDER: [f64; 6] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0];

// A solve whose coefficients blow past this is treated as singular and
// retried with more ridge; near-rank-deficient systems can pass Cholesky
// numerically while amplifying the weights without bound.
const COEFFICIENT_CAP: f64 = 1e8;

/// Least-squares fit of `targets ~ rows * w + b` over a neighbor set.
///
/// Solves the normal equations; a singular system falls back to a small
/// ridge term, which approximates the minimum-norm solution.
pub fn fit_local(rows: &[Vec<f64>], targets: &[f64]) -> Result<LocalFit> {
    let n = rows.len();
    if n == 0 || n != targets.len() {
        return Err(Error::Fit(format!(
            "{} rows against {} targets",
            n,
            targets.len()
        )));
    }
    let d = rows[0].len();
    for row in rows {
        if row.len() != d {
            return Err(Error::Fit("ragged neighbor rows".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite neighbor value".into()));
        }
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite fit target".into()));
    }

    // Normal system over the design [rows | 1].
    let dim = d + 1;
    let mut ata = DMatrix::<f64>::zeros(dim, dim);
    let mut atb = DVector::<f64>::zeros(dim);
    let mut aug = vec![0.0; dim];
    for (row, &y) in rows.iter().zip(targets) {
        aug[..d].copy_from_slice(row);
        aug[d] = 1.0;
        for i in 0..dim {
            for j in i..dim {
                ata[(i, j)] += aug[i] * aug[j];
            }
            atb[i] += aug[i] * y;
        }
    }
    for i in 0..dim {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let mut solution = None;
    for ridge in RIDGE_LADDER {
        let mut m = ata.clone();
        for i in 0..dim {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(m) {
            let sol = chol.solve(&atb);
            if sol.iter().all(|v| v.is_finite() && v.abs() < COEFFICIENT_CAP) {
                solution = Some(sol);
                break;
            }
        }
    }
    let sol =
        solution.ok_or_else(|| Error::Fit("normal system unsolvable at maximum ridge".into()))?;

    let weights: Vec<f64> = sol.as_slice()[..d].to_vec();
    let bias = sol[d];
    let sse: f64 = rows
        .iter()
        .zip(targets)
        .map(|(row, &y)| {
            let pred: f64 = row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() + bias;
            let r = y - pred;
            r * r
        })
        .sum();
    Ok(LocalFit {
        weights,
        bias,
        fit_error: sse / n as f64,
    })
}

/// Reliability of a soft sensor: the |w|-weighted mean of its explanatory
/// sensors' scores, scaled by one minus the normalized fitting error.
///
/// Returns `None` when all weights are zero; such a sensor is discarded for
/// the step and contributes to neither the cleaning nor the score update.
pub fn soft_reliability(record: &SoftSensorRecord, scores: &[f64]) -> Option<f64> {
    let wsum = record.abs_weight_sum();
    if wsum <= 0.0 {
        return None;
    }
    let weighted: f64 = record
        .explanatory
        .iter()
        .zip(&record.weights)
        .map(|(&s, &w)| w.abs() * scores[s])
        .sum();
    Some(weighted / wsum * (1.0 - record.norm_error))
}
