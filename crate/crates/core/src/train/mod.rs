//! Dataset assembly, noise, losses and the training loop.

mod dataset;
mod physics;
mod rollout;

pub use dataset::{
    add_noise, assemble_dataset, assemble_samples, corpus_scaling, input_row, Dataset, NoiseMode, NoiseSpec,
    Sample, SCALING_MARGIN,
};
pub use physics::{
    logcosh, measurement_loss, measurement_loss_grad, physics_loss, physics_loss_grad, space_time_tangents,
    PdeResidualSet, PhysicsModel, PointResidual,
};
pub use rollout::{compare_models, rollout_evaluate, ComparisonTable, RolloutMode, RolloutResult};

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PsmError, Result};
use crate::nn::{backward, init_params, trace, Adam, AdamConfig, MlpSpec, ParamStore};

/// Independent random streams derived from the training seed.
const SHUFFLE_STREAM: u64 = 1;
const COLLOCATION_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Measurement-loss weight.
    pub alpha: f64,
    /// Physics-loss weight; 0 trains the plain data-driven baseline.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub collocation_batch: usize,
    pub learning_rate: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub seed: u64,
    /// (head, intermediate, tail) widths.
    pub widths: [usize; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            epochs: 500,
            batch_size: 2048,
            collocation_batch: 2048,
            learning_rate: 1e-3,
            decay_every: 50,
            decay_factor: 0.5,
            seed: 0,
            widths: [200, 100, 100],
        }
    }
}

impl TrainConfig {
    /// Reduced preset sized for a single workstation.
    pub fn desk() -> Self {
        Self {
            epochs: 200,
            batch_size: 512,
            collocation_batch: 512,
            widths: [64, 32, 32],
            ..Self::default()
        }
    }

    /// Same settings with the physics loss switched off.
    pub fn baseline(&self) -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || (self.alpha + self.beta - 1.0).abs() > 1e-12 {
            return Err(PsmError::Config(format!(
                "loss weights must be non-negative and sum to 1 (alpha {}, beta {})",
                self.alpha, self.beta
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.collocation_batch == 0 {
            return Err(PsmError::Config("epochs and batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PsmError::Config("learning rate must be positive".into()));
        }
        if self.widths.contains(&0) {
            return Err(PsmError::Config("network widths must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            decay_every: self.decay_every,
            decay_factor: self.decay_factor,
            ..AdamConfig::default()
        }
    }

    pub fn network(&self, n_controls: usize, state_dim: usize) -> MlpSpec {
        MlpSpec::for_problem(n_controls, state_dim, (self.widths[0], self.widths[1], self.widths[2]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub measurement: f64,
    pub physics: f64,
    pub total: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
    /// Number of physics-loss evaluations performed.
    pub physics_evaluations: usize,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "L_m", "L_p", "L_total", "learning_rate"])?;
        for m in &self.history {
            out.write_record([
                m.epoch.to_string(),
                m.measurement.to_string(),
                m.physics.to_string(),
                m.total.to_string(),
                m.learning_rate.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Ratio of the first to the best later total loss.
    pub fn total_reduction(&self) -> f64 {
        let first = self.history.first().map_or(f64::NAN, |m| m.total);
        let best = self.history.iter().map(|m| m.total).fold(f64::INFINITY, f64::min);
        first / best
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub optimizer: Adam,
    pub report: TrainReport,
}

/// Collocation inputs: z* and t* uniform on [0, 1]; (v*, x0*) copied from a
/// uniformly chosen row of the measurement mini-batch.
pub fn sample_collocation<R: Rng>(rng: &mut R, size: usize, batch: &Dataset) -> Array2<f64> {
    assert!(!batch.is_empty(), "collocation needs a non-empty mini-batch");
    let mut out = Array2::zeros((size, batch.input_dim()));
    for i in 0..size {
        let src = rng.random_range(0..batch.len());
        out.row_mut(i).assign(&batch.inputs.row(src));
        out[[i, 0]] = rng.random::<f64>();
        out[[i, 1]] = rng.random::<f64>();
    }
    out
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Train a freshly initialised network.
pub fn train(
    spec: &MlpSpec,
    data: &Dataset,
    physics: &PhysicsModel,
    config: &TrainConfig,
    noise: &NoiseSpec,
) -> Result<TrainOutcome> {
    let init = init_params(spec, config.seed)?;
    train_from(spec, init, data, physics, config, noise)
}

/// Mini-batch training from `init`: per batch, measurement loss on noisy
/// rows plus (when beta > 0) physics loss on fresh collocation points.
pub fn train_from(
    spec: &MlpSpec,
    init: ParamStore,
    data: &Dataset,
    physics: &PhysicsModel,
    config: &TrainConfig,
    noise: &NoiseSpec,
) -> Result<TrainOutcome> {
    config.validate()?;
    noise.validate()?;
    if data.input_dim() != spec.input_dim {
        return Err(PsmError::Dimension {
            expected: spec.input_dim,
            actual: data.input_dim(),
            context: "dataset input width",
        });
    }
    if data.is_empty() {
        return Err(PsmError::Config("training set is empty".into()));
    }
    let mut params = init;
    let mut opt = Adam::new(config.adam(), params.len());
    let mut shuffle_rng = stream(config.seed, SHUFFLE_STREAM);
    let mut colloc_rng = stream(config.seed, COLLOCATION_STREAM);
    let mut noise_rng = stream(config.seed, NOISE_STREAM);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let use_physics = config.beta > 0.0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum_m, mut sum_p, mut sum_t) = (0.0, 0.0, 0.0);
        let mut n_batches = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let mut batch = data.select(idx);
            add_noise(&mut batch, noise, &mut noise_rng);
            let tr = trace(spec, &params, batch.inputs.view(), None)?;
            let (lm, seed) = measurement_loss_grad(tr.outputs().view(), batch.targets.view())?;
            let mut grad = backward(spec, &params, &tr, seed.view(), None, false)?.params;
            grad.iter_mut().for_each(|g| *g *= config.alpha);
            let mut lp = 0.0;
            if use_physics {
                let colloc = sample_collocation(&mut colloc_rng, config.collocation_batch, &batch);
                let (loss, _, gp) = physics_loss_grad(spec, &params, colloc.view(), physics, true)?;
                report.physics_evaluations += 1;
                lp = loss;
                for (g, p) in grad.iter_mut().zip(gp.expect("gradient requested")) {
                    *g += config.beta * p;
                }
            }
            let total = config.alpha * lm + config.beta * lp;
            if !total.is_finite() {
                return Err(PsmError::NanLoss { epoch, batch: b });
            }
            opt.step(&mut params.values, &grad, epoch)
                .map_err(|_| PsmError::NanLoss { epoch, batch: b })?;
            sum_m += lm;
            sum_p += lp;
            sum_t += total;
            n_batches += 1;
        }
        let n = n_batches as f64;
        report.history.push(EpochMetrics {
            epoch,
            measurement: sum_m / n,
            physics: sum_p / n,
            total: sum_t / n,
            learning_rate: config.adam().rate_at(epoch),
        });
    }
    Ok(TrainOutcome {
        params,
        optimizer: opt,
        report,
    })
}
