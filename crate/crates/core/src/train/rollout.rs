use std::io::Write;

use ndarray::Array2;

use super::dataset::input_row;
use crate::error::{PsmError, Result};
use crate::nn::{forward, MlpSpec, ParamStore};
use crate::refsolver::SimulationRecord;
use crate::transport::{Field, ScalingSpec, ScenarioConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutMode {
    /// Feed the model's own station predictions back as the next x0.
    ClosedLoop,
    /// Take every x0 from the record.
    OracleFed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// Root-mean-square error per field over all cells and predicted steps
    /// (physical units).
    pub rmse: [f64; 3],
    /// Mean squared error per cell (rows) and field (columns).
    pub cell_mse: Array2<f64>,
    pub grid_z: Vec<f64>,
    /// Predicted fields on the record grid after each step, field-major
    /// (`steps x 3*n_cells`).
    pub predictions: Array2<f64>,
}

impl RolloutResult {
    pub fn cell_rmse(&self, field: Field) -> Vec<f64> {
        self.cell_mse.column(field.index()).iter().map(|m| m.sqrt()).collect()
    }
}

/// Predict the record's full fields step by step from its first snapshot
/// and compare against the solver solution.
pub fn rollout_evaluate(
    spec: &MlpSpec,
    params: &ParamStore,
    scaling: &ScalingSpec,
    scenario: &ScenarioConfig,
    record: &SimulationRecord,
    mode: RolloutMode,
) -> Result<RolloutResult> {
    if record.n_times() < 2 {
        return Err(PsmError::Config("rollout needs at least one step".into()));
    }
    let grid = record.grid_z().to_vec();
    let n_cells = grid.len();
    let stations = &scenario.sensor_stations;
    let n_st = stations.len();
    let steps = record.n_steps();
    let mut x0 = record.sensors[0].clone();
    let mut sq = Array2::<f64>::zeros((n_cells, 3));
    let mut predictions = Array2::zeros((steps, 3 * n_cells));
    for k in 0..steps {
        if mode == RolloutMode::OracleFed {
            x0 = record.sensors[k].clone();
        }
        let v = &record.controls[k];
        let points: Vec<f64> = grid.iter().chain(stations.iter()).copied().collect();
        let mut inputs = Array2::zeros((points.len(), spec.input_dim));
        for (i, &z) in points.iter().enumerate() {
            let row = input_row(scaling, z, scaling.t_max, v, &x0);
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        }
        let out = forward(spec, params, inputs.view())?;
        let truth = &record.states[k + 1];
        for f in Field::ALL {
            let j = f.index();
            for i in 0..n_cells {
                let pred = scaling.unscale_field(f, out[[i, j]]);
                predictions[[k, j * n_cells + i]] = pred;
                sq[[i, j]] += (pred - truth.field(f)[i]).powi(2);
            }
            for s in 0..n_st {
                x0[j * n_st + s] = scaling.unscale_field(f, out[[n_cells + s, j]]);
            }
        }
    }
    let cell_mse = sq / steps as f64;
    let rmse = std::array::from_fn(|j| (cell_mse.column(j).sum() / n_cells as f64).sqrt());
    Ok(RolloutResult {
        rmse,
        cell_mse,
        grid_z: grid,
        predictions,
    })
}

/// Mean and maximum rollout RMSE of two models over a set of test records.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub labels: [String; 2],
    /// `[model][field]`
    pub mean: [[f64; 3]; 2],
    pub max: [[f64; 3]; 2],
}

impl ComparisonTable {
    /// First model's error as a percentage of the second's.
    pub fn mean_ratio_percent(&self) -> [f64; 3] {
        std::array::from_fn(|f| 100.0 * self.mean[0][f] / self.mean[1][f])
    }

    pub fn max_ratio_percent(&self) -> [f64; 3] {
        std::array::from_fn(|f| 100.0 * self.max[0][f] / self.max[1][f])
    }

    /// Columns: statistic, field, first model, second model, ratio (%).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["statistic", "field", &self.labels[0], &self.labels[1], "ratio_percent"])?;
        for (name, values, ratio) in [
            ("mean", &self.mean, self.mean_ratio_percent()),
            ("max", &self.max, self.max_ratio_percent()),
        ] {
            for f in Field::ALL {
                let j = f.index();
                out.write_record([
                    name.to_string(),
                    f.name().to_string(),
                    values[0][j].to_string(),
                    values[1][j].to_string(),
                    ratio[j].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Summarise per-record closed-loop RMSEs of two models into a table.
pub fn compare_models(labels: [&str; 2], results: [&[RolloutResult]; 2]) -> ComparisonTable {
    let stats = |rs: &[RolloutResult]| {
        let mut mean = [0.0; 3];
        let mut max = [0.0f64; 3];
        for r in rs {
            for f in 0..3 {
                mean[f] += r.rmse[f] / rs.len() as f64;
                max[f] = max[f].max(r.rmse[f]);
            }
        }
        (mean, max)
    };
    let (m0, x0) = stats(results[0]);
    let (m1, x1) = stats(results[1]);
    ComparisonTable {
        labels: [labels[0].to_string(), labels[1].to_string()],
        mean: [m0, m1],
        max: [x0, x1],
    }
}
