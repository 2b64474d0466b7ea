//! Synthetic benchmark data: cross-correlated process signals driven by
//! shared latent components, observed through sensors with heterogeneous
//! i.i.d. Gaussian noise. Gives known ground truth plus the correlation
//! structure the engine exploits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{MeasurementFrame, Topology};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Sensors per process.
    pub schema: Vec<usize>,
    /// Total stream length.
    pub len: usize,
    pub seed: u64,
    /// Number of shared latent drivers.
    pub drivers: usize,
}

impl SynthSpec {
    /// The default benchmark deployment: six processes monitored by 5, 3,
    /// 3, 2, 2 and 1 sensors, mixing strong redundancy with none at all.
    pub fn benchmark_deployment(len: usize, seed: u64) -> Self {
        Self {
            schema: vec![5, 3, 3, 2, 2, 1],
            len,
            seed,
            drivers: 3,
        }
    }
}

/// Generated stream plus the latent truth it was built from (raw units).
#[derive(Debug, Clone)]
pub struct SynthData {
    pub topology: Topology,
    pub frames: Vec<MeasurementFrame>,
    /// Latent process states, indexed `[t][process]`.
    pub latent: Vec<Vec<f64>>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    assert!(spec.len >= 2 && spec.drivers >= 1 && !spec.schema.is_empty());
    let topology = Topology::new(
        spec.schema
            .iter()
            .enumerate()
            .map(|(p, &n)| {
                (
                    format!("p{p}"),
                    (0..n).map(|i| format!("p{p}s{i}")).collect(),
                )
            })
            .collect(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Shared drivers: two low-frequency sinusoids plus a slow random walk.
    let mut drivers = vec![vec![0.0; spec.len]; spec.drivers];
    for driver in drivers.iter_mut() {
        let periods = [
            rng.random_range(80.0..240.0),
            rng.random_range(240.0..500.0),
        ];
        let amps = [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
        let phases = [
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        ];
        let walk_step = Normal::new(0.0, 0.02).expect("valid distribution");
        let mut walk = 0.0;
        for (t, v) in driver.iter_mut().enumerate() {
            walk += walk_step.sample(&mut rng);
            *v = amps[0] * (std::f64::consts::TAU * t as f64 / periods[0] + phases[0]).sin()
                + amps[1] * (std::f64::consts::TAU * t as f64 / periods[1] + phases[1]).sin()
                + walk;
        }
    }

    // Positive mixing weights keep processes cross-correlated.
    let n_proc = topology.n_processes();
    let mut latent = vec![vec![0.0; n_proc]; spec.len];
    let mut scales = vec![0.0; n_proc];
    for p in 0..n_proc {
        let mut mix: Vec<f64> = (0..spec.drivers).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = mix.iter().sum();
        for w in &mut mix {
            *w /= total;
        }
        let base = rng.random_range(40.0..80.0);
        let scale = rng.random_range(4.0..9.0);
        scales[p] = scale;
        for t in 0..spec.len {
            let mixed: f64 = mix.iter().zip(&drivers).map(|(w, d)| w * d[t]).sum();
            latent[t][p] = base + scale * mixed;
        }
    }

    // Per-sensor calibration bias and intrinsic noise level.
    let n_sens = topology.n_sensors();
    let mut frames = Vec::with_capacity(spec.len);
    let mut biases = vec![0.0; n_sens];
    let mut noises = vec![0.0; n_sens];
    for s in 0..n_sens {
        let scale = scales[topology.process_of(s)];
        biases[s] = rng.random_range(-0.02..0.02) * scale;
        noises[s] = rng.random_range(0.02..0.08) * scale;
    }
    for (t, states) in latent.iter().enumerate() {
        let values = (0..n_sens)
            .map(|s| {
                let p = topology.process_of(s);
                let noise = Normal::new(0.0, noises[s]).expect("valid distribution");
                states[p] + biases[s] + noise.sample(&mut rng)
            })
            .collect();
        frames.push(MeasurementFrame::new(t as i64 + 1, values));
    }

    Ok(SynthData {
        topology,
        frames,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_shape() {
        let data = generate(&SynthSpec::benchmark_deployment(300, 0)).unwrap();
        let counts: Vec<usize> = (0..data.topology.n_processes())
            .map(|p| data.topology.sensors_of(p).len())
            .collect();
        assert_eq!(counts, vec![5, 3, 3, 2, 2, 1]);
        assert_eq!(data.frames.len(), 300);
        assert_eq!(data.frames[0].t, 1);
        assert_eq!(data.frames[299].t, 300);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&SynthSpec::benchmark_deployment(200, 42)).unwrap();
        let b = generate(&SynthSpec::benchmark_deployment(200, 42)).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.values, y.values);
        }
        let c = generate(&SynthSpec::benchmark_deployment(200, 43)).unwrap();
        assert_ne!(a.frames[0].values, c.frames[0].values);
    }

    #[test]
    fn same_process_sensors_are_strongly_correlated() {
        let data = generate(&SynthSpec::benchmark_deployment(1000, 7)).unwrap();
        let topo = &data.topology;
        let correlation = |a: usize, b: usize| -> f64 {
            let xs: Vec<f64> = data.frames.iter().map(|f| f.values[a]).collect();
            let ys: Vec<f64> = data.frames.iter().map(|f| f.values[b]).collect();
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
            cov / (vx.sqrt() * vy.sqrt())
        };
        for p in 0..topo.n_processes() {
            let sensors = topo.sensors_of(p);
            for i in 0..sensors.len() {
                for j in i + 1..sensors.len() {
                    let r = correlation(sensors[i], sensors[j]);
                    assert!(r > 0.9, "corr(p{p}: {i},{j}) = {r}");
                }
            }
        }
    }

    #[test]
    fn values_stay_positive() {
        let data = generate(&SynthSpec::benchmark_deployment(2000, 3)).unwrap();
        for frame in &data.frames {
            for &v in &frame.values {
                assert!(v > 0.0, "non-positive raw value {v}");
            }
        }
    }
}
