use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PsmError, Result};
use crate::refsolver::SimulationRecord;
use crate::transport::{Field, FieldRange, ScalingSpec, ScenarioConfig};

/// Margin added on each side of the corpus range when building scaling.
pub const SCALING_MARGIN: f64 = 0.05;

/// One training row in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub z: f64,
    /// Either 0 or delta_t.
    pub t: f64,
    pub v: Vec<f64>,
    /// Field-major sensor snapshot at the start of the step.
    pub x0: Vec<f64>,
    /// (p, u, T) at (z, t).
    pub target: [f64; 3],
}

/// Scaled network inputs `[z*, t*, v*, x0*]` and targets `(p*, u*, T*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub n_controls: usize,
    pub state_dim: usize,
}

impl Dataset {
    pub fn from_samples(samples: &[Sample], scaling: &ScalingSpec) -> Self {
        let n_controls = samples.first().map_or(0, |s| s.v.len());
        let state_dim = samples.first().map_or(0, |s| s.x0.len());
        let width = 2 + n_controls + state_dim;
        let mut inputs = Array2::zeros((samples.len(), width));
        let mut targets = Array2::zeros((samples.len(), 3));
        for (i, s) in samples.iter().enumerate() {
            let row = input_row(scaling, s.z, s.t, &s.v, &s.x0);
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
            for f in Field::ALL {
                targets[[i, f.index()]] = scaling.scale_field(f, s.target[f.index()]);
            }
        }
        Self {
            inputs,
            targets,
            n_controls,
            state_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Column index where the x0 block starts.
    pub fn x0_offset(&self) -> usize {
        2 + self.n_controls
    }

    /// Rows `idx` as a new dataset.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(ndarray::Axis(0), idx),
            targets: self.targets.select(ndarray::Axis(0), idx),
            n_controls: self.n_controls,
            state_dim: self.state_dim,
        }
    }
}

/// Scaled network input row for physical `(z, t, v, x0)`.
pub fn input_row(scaling: &ScalingSpec, z: f64, t: f64, v: &[f64], x0: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + v.len() + x0.len());
    row.push(scaling.scale_z(z));
    row.push(scaling.scale_t(t));
    row.extend(scaling.scale_controls(v));
    row.extend(scaling.scale_sensor_vector(x0));
    row
}

/// State-space rows: for every step k and station, one t = 0 row targeting
/// x_k and one t = delta_t row targeting x_{k+1}, both conditioned on
/// (x_k, v_k).
pub fn assemble_samples(records: &[SimulationRecord], scenario: &ScenarioConfig) -> Result<Vec<Sample>> {
    let stations = &scenario.sensor_stations;
    let n_st = stations.len();
    let mut out = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        if rec.n_times() < 2 {
            return Err(PsmError::Config(format!(
                "record {r} has {} snapshots; at least 2 are needed",
                rec.n_times()
            )));
        }
        if rec.stations != *stations {
            return Err(PsmError::Config(format!("record {r} uses different sensor stations")));
        }
        for k in 0..rec.n_steps() {
            let dt = rec.times[k + 1] - rec.times[k];
            if (dt - scenario.delta_t).abs() > 1e-9 * scenario.delta_t {
                return Err(PsmError::Config(format!(
                    "record {r} step {k} spans {dt} s, expected {}",
                    scenario.delta_t
                )));
            }
            let x0 = &rec.sensors[k];
            for (t, snapshot) in [(0.0, &rec.sensors[k]), (scenario.delta_t, &rec.sensors[k + 1])] {
                for (s, &z) in stations.iter().enumerate() {
                    out.push(Sample {
                        z,
                        t,
                        v: rec.controls[k].clone(),
                        x0: x0.clone(),
                        target: [snapshot[s], snapshot[n_st + s], snapshot[2 * n_st + s]],
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Min-max scaling over every full-field state in `records`, widened by
/// [`SCALING_MARGIN`]; control ranges are the scenario's channel ranges.
pub fn corpus_scaling(records: &[SimulationRecord], scenario: &ScenarioConfig) -> Result<ScalingSpec> {
    let values = |f: Field| {
        records
            .iter()
            .flat_map(move |r| r.states.iter().flat_map(move |s| s.field(f).iter().copied()))
    };
    let temperature = FieldRange::covering(values(Field::Temperature), SCALING_MARGIN);
    let rho_a = scenario.fluid.density(temperature.max);
    let rho_b = scenario.fluid.density(temperature.min);
    let scaling = ScalingSpec {
        z_max: scenario.total_length(),
        t_max: scenario.delta_t,
        pressure: FieldRange::covering(values(Field::Pressure), SCALING_MARGIN),
        velocity: FieldRange::covering(values(Field::Velocity), SCALING_MARGIN),
        temperature,
        density: FieldRange::new(rho_a.min(rho_b), rho_a.max(rho_b)),
        controls: scenario
            .controls
            .iter()
            .map(|c| FieldRange::new(c.min, c.max))
            .collect(),
    };
    scaling.validate()?;
    Ok(scaling)
}

pub fn assemble_dataset(
    records: &[SimulationRecord],
    scenario: &ScenarioConfig,
) -> Result<(Vec<Sample>, ScalingSpec)> {
    let samples = assemble_samples(records, scenario)?;
    let scaling = corpus_scaling(records, scenario)?;
    Ok((samples, scaling))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    None,
    Homoscedastic,
    Heteroscedastic,
}

/// Additive measurement noise in scaled units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub xi: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            mode: NoiseMode::None,
            sigma: 0.0,
            xi: 0.0,
        }
    }

    pub fn homoscedastic(sigma: f64) -> Self {
        Self {
            mode: NoiseMode::Homoscedastic,
            sigma,
            xi: 0.0,
        }
    }

    pub fn heteroscedastic(xi: f64) -> Self {
        Self {
            mode: NoiseMode::Heteroscedastic,
            sigma: 0.0,
            xi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.xi >= 0.0) {
            return Err(PsmError::Config(format!("noise parameters must be non-negative: {self:?}")));
        }
        Ok(())
    }

    fn perturb<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        match self.mode {
            NoiseMode::None => x,
            NoiseMode::Homoscedastic => {
                let e: f64 = rng.sample(StandardNormal);
                x + self.sigma * e
            }
            NoiseMode::Heteroscedastic => {
                let e: f64 = rng.sample(StandardNormal);
                x + (x.abs() * self.xi).sqrt() * e
            }
        }
    }
}

impl std::str::FromStr for NoiseSpec {
    type Err = PsmError;

    /// `none`, `homoscedastic:<sigma>` or `heteroscedastic:<xi>`.
    fn from_str(s: &str) -> Result<Self> {
        let (mode, value) = s.split_once(':').unwrap_or((s, ""));
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| PsmError::Config(format!("bad noise level in `{s}`")))
        };
        let spec = match mode {
            "none" => NoiseSpec::none(),
            "homoscedastic" | "homo" => NoiseSpec::homoscedastic(number()?),
            "heteroscedastic" | "hetero" => NoiseSpec::heteroscedastic(number()?),
            _ => return Err(PsmError::Config(format!("unknown noise mode `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Perturb the targets and the x0 block of a batch in place; z, t and the
/// controls are left untouched.
pub fn add_noise<R: Rng>(batch: &mut Dataset, spec: &NoiseSpec, rng: &mut R) {
    if spec.mode == NoiseMode::None {
        return;
    }
    let start = batch.x0_offset();
    for mut row in batch.inputs.rows_mut() {
        for x in row.iter_mut().skip(start) {
            *x = spec.perturb(*x, rng);
        }
    }
    for x in batch.targets.iter_mut() {
        *x = spec.perturb(*x, rng);
    }
}
