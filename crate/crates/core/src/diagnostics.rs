//! Degradation detection by prediction-error latch, twin fine-tuning on
//! post-fault data, and PDE residual signatures that localise the fault.

use std::io::Write;

use ndarray::Array2;

use crate::error::{PsmError, Result};
use crate::nn::{forward, MlpSpec, ParamStore};
use crate::refsolver::SimulationRecord;
use crate::train::{input_row, physics_loss, train_from, Dataset, NoiseSpec, PhysicsModel, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorConfig {
    /// Latch threshold on window MSE (scaled units squared).
    pub zeta: f64,
    /// Samples per window.
    pub window: usize,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0) || self.window == 0 {
            return Err(PsmError::Config("detector needs zeta > 0 and window >= 1".into()));
        }
        Ok(())
    }
}

/// MSE of the model's predictions over consecutive windows of `data`; a
/// trailing partial window is dropped.
pub fn window_mse(spec: &MlpSpec, params: &ParamStore, data: &Dataset, window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(PsmError::Config("window must be at least 1".into()));
    }
    let pred = forward(spec, params, data.inputs.view())?;
    let err = pred - &data.targets;
    Ok(err
        .axis_chunks_iter(ndarray::Axis(0), window)
        .filter(|c| c.nrows() == window)
        .map(|c| c.mapv(|e| e * e).mean().unwrap_or(0.0))
        .collect())
}

/// `factor` times the `percentile` of validation window MSEs (nearest rank).
pub fn calibrate_zeta(validation: &[f64], percentile: f64, factor: f64) -> Result<f64> {
    if validation.is_empty() {
        return Err(PsmError::Config("calibration needs at least one window".into()));
    }
    let mut v = validation.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Ok(factor * v[rank.min(v.len()) - 1])
}

/// Index of the first window whose MSE exceeds zeta. Once fired the latch
/// stays set, so later windows cannot clear it.
pub fn detect(spec: &MlpSpec, params: &ParamStore, stream: &Dataset, config: &DetectorConfig) -> Result<Option<usize>> {
    config.validate()?;
    let mse = window_mse(spec, params, stream, config.window)?;
    Ok(mse.iter().position(|&e| e > config.zeta))
}

/// Fine-tuning settings for the twin: measurement loss only, a tenth of the
/// base learning rate, 50 epochs.
pub fn twin_config(base: &TrainConfig) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        learning_rate: base.learning_rate / 10.0,
        ..base.baseline()
    }
}

/// Copy of the nominal model fine-tuned on post-latch samples without the
/// physics loss. Aborts if the loss grows more than tenfold.
pub fn transfer_learn_twin(
    spec: &MlpSpec,
    nominal: &ParamStore,
    samples: &Dataset,
    physics: &PhysicsModel,
    config: &TrainConfig,
) -> Result<(ParamStore, TrainReport)> {
    if samples.is_empty() {
        return Ok((nominal.clone(), TrainReport::default()));
    }
    if config.beta != 0.0 {
        return Err(PsmError::Config("twin fine-tuning runs without the physics loss".into()));
    }
    let out = train_from(spec, nominal.clone(), samples, physics, config, &NoiseSpec::none())?;
    let initial = out.report.history.first().map_or(0.0, |m| m.total);
    if let Some(bad) = out.report.history.iter().find(|m| m.total > 10.0 * initial) {
        return Err(PsmError::Divergence {
            initial,
            current: bad.total,
        });
    }
    Ok((out.params, out.report))
}

/// Physical (x0, v) pairs from every step of every record.
pub fn conditions_from_records(records: &[SimulationRecord]) -> Vec<(Vec<f64>, Vec<f64>)> {
    records
        .iter()
        .flat_map(|r| (0..r.n_steps()).map(move |k| (r.sensors[k].clone(), r.controls[k].clone())))
        .collect()
}

/// Residual curves of the three equations over a z grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCurves {
    pub z: Vec<f64>,
    /// mass, momentum, energy
    pub curves: [Vec<f64>; 3],
}

/// Nondimensional residuals at each `z`, evaluated half a step into the
/// interval and averaged over `conditions`.
pub fn pde_residuals(
    spec: &MlpSpec,
    params: &ParamStore,
    physics: &PhysicsModel,
    conditions: &[(Vec<f64>, Vec<f64>)],
    z_grid: &[f64],
) -> Result<ResidualCurves> {
    if conditions.is_empty() {
        return Err(PsmError::Config("residual curves need at least one condition".into()));
    }
    let sc = physics.scaling();
    let t_half = 0.5 * sc.t_max;
    let n_z = z_grid.len();
    let mut colloc = Array2::zeros((n_z * conditions.len(), spec.input_dim));
    for (c, (x0, v)) in conditions.iter().enumerate() {
        for (i, &z) in z_grid.iter().enumerate() {
            let row = input_row(sc, z, t_half, v, x0);
            colloc.row_mut(c * n_z + i).assign(&ndarray::ArrayView1::from(&row[..]));
        }
    }
    let (_, set) = physics_loss(spec, params, colloc.view(), physics)?;
    let mut curves = [vec![0.0; n_z], vec![0.0; n_z], vec![0.0; n_z]];
    let w = 1.0 / conditions.len() as f64;
    for (e, src) in [&set.mass, &set.momentum, &set.energy].into_iter().enumerate() {
        for (j, r) in src.iter().enumerate() {
            curves[e][j % n_z] += w * r;
        }
    }
    Ok(ResidualCurves {
        z: z_grid.to_vec(),
        curves,
    })
}

pub const EQUATIONS: [&str; 3] = ["mass", "momentum", "energy"];

#[derive(Clone, Debug, PartialEq)]
pub struct EquationSignature {
    pub r_nom: Vec<f64>,
    pub r_m: Vec<f64>,
    /// `r_nom - r_m`
    pub r: Vec<f64>,
    /// `r` divided by its largest magnitude, so it lies in [-1, 1] and keeps
    /// its sign and zero.
    pub scaled: Vec<f64>,
    /// Extrema of `r` before scaling.
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSignature {
    pub z: Vec<f64>,
    pub equations: [EquationSignature; 3],
}

pub fn signature(nominal: &ResidualCurves, twin: &ResidualCurves) -> Result<ResidualSignature> {
    if nominal.z != twin.z {
        return Err(PsmError::Config("residual curves are on different z grids".into()));
    }
    let equations = std::array::from_fn(|e| {
        let r: Vec<f64> = nominal.curves[e].iter().zip(&twin.curves[e]).map(|(a, b)| a - b).collect();
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mag = min.abs().max(max.abs());
        let scaled = r.iter().map(|&x| if mag > 0.0 { x / mag } else { 0.0 }).collect();
        EquationSignature {
            r_nom: nominal.curves[e].clone(),
            r_m: twin.curves[e].clone(),
            r,
            scaled,
            min,
            max,
        }
    });
    Ok(ResidualSignature {
        z: nominal.z.clone(),
        equations,
    })
}

impl ResidualSignature {
    /// max |r| inside [lo, hi] over max |r| elsewhere.
    pub fn localization_ratio(&self, equation: usize, lo: f64, hi: f64) -> f64 {
        let (mut inside, mut outside) = (0.0f64, 0.0f64);
        for (&z, &r) in self.z.iter().zip(&self.equations[equation].r) {
            if (lo..=hi).contains(&z) {
                inside = inside.max(r.abs());
            } else {
                outside = outside.max(r.abs());
            }
        }
        inside / outside
    }

    /// Position of the largest |r| for one equation.
    pub fn peak_z(&self, equation: usize) -> f64 {
        let r = &self.equations[equation].r;
        let i = (0..r.len()).max_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs())).unwrap_or(0);
        self.z[i]
    }

    /// Columns: z, eq, r_nom, r_m, r, scaled_r.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["z", "eq", "r_nom", "r_m", "r", "scaled_r"])?;
        for (e, sig) in self.equations.iter().enumerate() {
            for (i, z) in self.z.iter().enumerate() {
                out.write_record([
                    z.to_string(),
                    EQUATIONS[e].to_string(),
                    sig.r_nom[i].to_string(),
                    sig.r_m[i].to_string(),
                    sig.r[i].to_string(),
                    sig.scaled[i].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Evenly spaced evaluation points strictly inside (0, length).
pub fn residual_grid(length: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) * length / n as f64).collect()
}
