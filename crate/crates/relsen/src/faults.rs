//! Fault injection for benchmarking: SHORT spikes, NOISE segments with
//! inflated variance, and CONSTANT offset segments, plus the staged
//! low/medium/high intensity campaign layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::MeasurementFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    /// Single-point spikes: x -> x + f*x on randomly picked points.
    Short,
    /// Segments with added N(0, f*sigma^2) noise.
    Noise,
    /// Segments with a fixed f*sigma offset.
    Constant,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::Short => "short",
            FaultKind::Noise => "noise",
            FaultKind::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(FaultKind::Short),
            "noise" => Ok(FaultKind::Noise),
            "constant" => Ok(FaultKind::Constant),
            other => Err(Error::Injection(format!("unknown fault kind '{other}'"))),
        }
    }

    pub const ALL: [FaultKind; 3] = [FaultKind::Short, FaultKind::Noise, FaultKind::Constant];
}

/// Declarative description of one fault injection on one sensor.
#[derive(Debug, Clone)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Target sensor index.
    pub target: usize,
    /// Intensity f.
    pub intensity: f64,
    /// Fraction of points contaminated (SHORT only).
    pub short_rate: f64,
    /// Inclusive segment-length range in points (NOISE/CONSTANT).
    pub duration: (usize, usize),
    /// Minimum points between consecutive segments (NOISE/CONSTANT).
    pub gap: usize,
    pub seed: u64,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.intensity.is_finite() || self.intensity < 0.0 {
            return Err(Error::Injection(format!(
                "intensity must be finite and >= 0, got {}",
                self.intensity
            )));
        }
        if self.kind == FaultKind::Short && !(self.short_rate > 0.0 && self.short_rate <= 1.0) {
            return Err(Error::Injection(format!(
                "short rate must lie in (0, 1], got {}",
                self.short_rate
            )));
        }
        if self.kind != FaultKind::Short && (self.duration.0 == 0 || self.duration.0 > self.duration.1)
        {
            return Err(Error::Injection(format!(
                "bad duration range {:?}",
                self.duration
            )));
        }
        Ok(())
    }
}

/// Unbiased sample standard deviation, the sigma_s the injectors expect.
pub fn sample_std(series: &[f64]) -> f64 {
    let n = series.len();
    assert!(n >= 2, "sample std needs at least two points");
    let mean = series.iter().sum::<f64>() / n as f64;
    (series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Greedy left-to-right segment schedule: draw a duration, place the
/// segment if it fits entirely, skip the gap, repeat. Returns half-open
/// `(start, end)` ranges.
fn schedule_segments<R: Rng>(
    len: usize,
    duration: (usize, usize),
    gap: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let (lo, hi) = duration;
    if lo == 0 || lo > hi {
        return Err(Error::Injection(format!("bad duration range {duration:?}")));
    }
    if len < lo {
        return Err(Error::Injection(format!(
            "series of {len} points is too short for one {lo}-point segment"
        )));
    }
    let mut segments = Vec::new();
    let mut pos = 0usize;
    while pos < len {
        let d = rng.random_range(lo..=hi);
        if pos + d > len {
            break;
        }
        segments.push((pos, pos + d));
        pos += d + gap;
    }
    Ok(segments)
}

/// SHORT faults: exactly `round(rate * len)` points get x -> x + f*x.
pub fn inject_short(series: &[f64], spec: &FaultSpec, _sigma: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    debug_assert_eq!(spec.kind, FaultKind::Short);
    spec.validate()?;
    let n = series.len();
    let count = ((spec.short_rate * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = series.to_vec();
    let mut mask = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, count) {
        out[i] = series[i] + spec.intensity * series[i];
        mask[i] = true;
    }
    Ok((out, mask))
}

/// NOISE faults: scheduled segments get i.i.d. N(0, f*sigma^2) added.
pub fn inject_noise(series: &[f64], spec: &FaultSpec, sigma: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    debug_assert_eq!(spec.kind, FaultKind::Noise);
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let segments = schedule_segments(series.len(), spec.duration, spec.gap, &mut rng)?;
    let std = (spec.intensity * sigma * sigma).sqrt();
    let mut out = series.to_vec();
    let mut mask = vec![false; series.len()];
    if std > 0.0 {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::Injection(format!("bad noise distribution: {e}")))?;
        for (a, b) in &segments {
            for i in *a..*b {
                out[i] = series[i] + normal.sample(&mut rng);
                mask[i] = true;
            }
        }
    } else {
        for (a, b) in &segments {
            mask[*a..*b].fill(true);
        }
    }
    Ok((out, mask))
}

/// CONSTANT faults: scheduled segments get the fixed offset f*sigma.
pub fn inject_constant(
    series: &[f64],
    spec: &FaultSpec,
    sigma: f64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    debug_assert_eq!(spec.kind, FaultKind::Constant);
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let segments = schedule_segments(series.len(), spec.duration, spec.gap, &mut rng)?;
    let offset = spec.intensity * sigma;
    let mut out = series.to_vec();
    let mut mask = vec![false; series.len()];
    for (a, b) in &segments {
        for i in *a..*b {
            out[i] = series[i] + offset;
            mask[i] = true;
        }
    }
    Ok((out, mask))
}

/// Dispatch on the spec's kind.
pub fn inject(series: &[f64], spec: &FaultSpec, sigma: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    match spec.kind {
        FaultKind::Short => inject_short(series, spec, sigma),
        FaultKind::Noise => inject_noise(series, spec, sigma),
        FaultKind::Constant => inject_constant(series, spec, sigma),
    }
}

/// Staged campaign over one clean series: the span after `start` is split
/// into one stage per intensity, each injected at that stage's intensity.
/// The region before `start` (the warm-up) is never contaminated. Sigma is
/// computed once from the full clean series.
pub fn staged_campaign(
    series: &[f64],
    spec: &FaultSpec,
    intensities: &[f64],
    start: usize,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if intensities.is_empty() {
        return Err(Error::Injection("no stage intensities given".into()));
    }
    if start >= series.len() {
        return Err(Error::Injection(format!(
            "injection start {start} is beyond the series length {}",
            series.len()
        )));
    }
    let sigma = sample_std(series);
    let region = series.len() - start;
    let stages = intensities.len();
    let mut out = series.to_vec();
    let mut mask = vec![false; series.len()];
    for (i, &f) in intensities.iter().enumerate() {
        let lo = start + i * region / stages;
        let hi = if i + 1 == stages {
            series.len()
        } else {
            start + (i + 1) * region / stages
        };
        let stage_spec = FaultSpec {
            intensity: f,
            seed: spec.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)),
            ..spec.clone()
        };
        let (stage_out, stage_mask) = inject(&series[lo..hi], &stage_spec, sigma)?;
        out[lo..hi].copy_from_slice(&stage_out);
        mask[lo..hi].copy_from_slice(&stage_mask);
    }
    Ok((out, mask))
}

/// Apply a staged campaign to one sensor column of a frame sequence.
/// Returns the faulted frames and the per-timestep mask for that sensor.
pub fn campaign_on_frames(
    frames: &[MeasurementFrame],
    spec: &FaultSpec,
    intensities: &[f64],
    start: usize,
) -> Result<(Vec<MeasurementFrame>, Vec<bool>)> {
    let series: Vec<f64> = frames.iter().map(|f| f.values[spec.target]).collect();
    let (faulted, mask) = staged_campaign(&series, spec, intensities, start)?;
    let mut out = frames.to_vec();
    for (frame, v) in out.iter_mut().zip(&faulted) {
        frame.values[spec.target] = *v;
    }
    Ok((out, mask))
}
