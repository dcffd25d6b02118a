use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PsmError, Result};
use crate::transport::ScenarioConfig;

/// Piecewise-linear time series for one control channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    /// Knot times (s), strictly increasing from 0.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn constant(value: f64, duration: f64) -> Self {
        if duration > 0.0 {
            Self {
                times: vec![0.0, duration],
                values: vec![value, value],
            }
        } else {
            Self {
                times: vec![0.0],
                values: vec![value],
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.values.len() {
            return Err(PsmError::Config("trajectory needs matching, non-empty knots".into()));
        }
        if self.times[0] != 0.0 {
            return Err(PsmError::Config("trajectory must start at t = 0".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PsmError::Config("trajectory knot times must increase".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        crate::transport::interpolate(&self.times, &self.values, t)
    }
}

/// One piecewise-linear series per control channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputTrajectory {
    pub channels: Vec<PiecewiseLinear>,
}

impl InputTrajectory {
    /// Every channel held at `v` for `duration` seconds.
    pub fn constant(v: &[f64], duration: f64) -> Self {
        Self {
            channels: v
                .iter()
                .map(|&x| PiecewiseLinear::constant(x, duration))
                .collect(),
        }
    }

    /// Zero-order-hold samples: one control vector per measurement step.
    pub fn from_samples(samples: &[Vec<f64>], delta_t: f64) -> Self {
        let n_ch = samples.first().map_or(0, Vec::len);
        let channels = (0..n_ch)
            .map(|c| PiecewiseLinear {
                times: (0..samples.len()).map(|k| k as f64 * delta_t).collect(),
                values: samples.iter().map(|v| v[c]).collect(),
            })
            .collect();
        Self { channels }
    }

    pub fn duration(&self) -> f64 {
        self.channels
            .iter()
            .map(PiecewiseLinear::duration)
            .fold(0.0, f64::max)
    }

    pub fn values_at(&self, t: f64) -> Vec<f64> {
        self.channels.iter().map(|c| c.value_at(t)).collect()
    }

    pub fn validate(&self, scenario: &ScenarioConfig) -> Result<()> {
        if self.channels.len() != scenario.n_controls() {
            return Err(PsmError::Dimension {
                expected: scenario.n_controls(),
                actual: self.channels.len(),
                context: "trajectory channels",
            });
        }
        for (c, ch) in self.channels.iter().zip(&scenario.controls) {
            c.validate()?;
            if c.values.iter().any(|&v| v < ch.min || v > ch.max) {
                return Err(PsmError::Config(format!(
                    "trajectory for `{}` leaves [{}, {}]",
                    ch.name, ch.min, ch.max
                )));
            }
        }
        Ok(())
    }
}

/// Shape parameters of the random hold/ramp manipulations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManipulationStyle {
    /// Hold duration bounds (s).
    pub hold: (f64, f64),
    /// Ramp rate bounds as a fraction of the channel span per second.
    pub ramp_rate: (f64, f64),
}

impl Default for ManipulationStyle {
    fn default() -> Self {
        Self {
            hold: (5.0, 40.0),
            ramp_rate: (0.01, 0.1),
        }
    }
}

/// Random number stream for experiment `index` under `seed`.
///
/// Experiment `i` always uses ChaCha8 stream `i` of the seed, so experiments
/// can be generated in any order or in parallel without changing results.
pub fn experiment_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n_experiments` random hold/ramp trajectories spanning the episode.
pub fn generate_trajectories(
    seed: u64,
    scenario: &ScenarioConfig,
    n_experiments: usize,
) -> Vec<InputTrajectory> {
    generate_trajectories_with(seed, scenario, n_experiments, ManipulationStyle::default())
}

pub fn generate_trajectories_with(
    seed: u64,
    scenario: &ScenarioConfig,
    n_experiments: usize,
    style: ManipulationStyle,
) -> Vec<InputTrajectory> {
    (0..n_experiments)
        .map(|i| {
            let mut rng = experiment_rng(seed, i as u64);
            let channels = scenario
                .controls
                .iter()
                .map(|ch| random_channel(&mut rng, ch.min, ch.max, scenario.episode_duration, style))
                .collect();
            InputTrajectory { channels }
        })
        .collect()
}

fn random_channel(
    rng: &mut ChaCha8Rng,
    min: f64,
    max: f64,
    duration: f64,
    style: ManipulationStyle,
) -> PiecewiseLinear {
    let span = max - min;
    let mut times = vec![0.0];
    let mut values = vec![rng.random_range(min..=max)];
    let mut t = 0.0;
    let mut holding = true;
    while t < duration {
        let current = *values.last().unwrap();
        let (dt, next) = if holding {
            (rng.random_range(style.hold.0..=style.hold.1), current)
        } else {
            let target = rng.random_range(min..=max);
            let rate = span * rng.random_range(style.ramp_rate.0..=style.ramp_rate.1);
            ((target - current).abs() / rate, target)
        };
        holding = !holding;
        if dt <= 1e-9 {
            continue;
        }
        if t + dt >= duration {
            let frac = (duration - t) / dt;
            times.push(duration);
            values.push((current + frac * (next - current)).clamp(min, max));
            break;
        }
        t += dt;
        times.push(t);
        values.push(next);
    }
    if duration > 0.0 && *times.last().unwrap() < duration {
        times.push(duration);
        values.push(*values.last().unwrap());
    }
    PiecewiseLinear { times, values }
}
