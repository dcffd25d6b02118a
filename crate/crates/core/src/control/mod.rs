//! Linearization of a trained model, maximal output admissible sets and the
//! reference/command governors built on them.
//!
//! Everything in this module works in scaled coordinates: states are the
//! min-max scaled sensor vector (field-major) and inputs the scaled controls.

mod ncg;
mod oinf;

pub use ncg::{
    governor_scenario, ncg_rollout, CgConfig, ConstraintSchedule, NcgLog, NcgStep, ScheduleEntry,
};
pub use oinf::{build_oinf, cg_solve, srg_kappa, CgSolution, OInfApprox, OInfConfig, QpStatus, SrgOutcome};

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PsmError, Result};
use crate::nn::{trace, MlpSpec, ParamStore};
use crate::train::input_row;
use crate::transport::{Field, ScalingSpec, ScenarioConfig};

/// First-order model `x+ = f00 + A (x - x00) + B (v - v00)` about an
/// operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSsm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x00: DVector<f64>,
    pub v00: DVector<f64>,
    /// Model prediction at the operating point.
    pub f00: DVector<f64>,
}

impl LinearSsm {
    /// Operating point that is its own successor, so `f00 = x00`.
    pub fn about_fixed_point(a: DMatrix<f64>, b: DMatrix<f64>, x00: DVector<f64>, v00: DVector<f64>) -> Self {
        let f00 = x00.clone();
        Self { a, b, x00, v00, f00 }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn predict(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.f00 + &self.a * (x - &self.x00) + &self.b * (v - &self.v00)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_schur(&self) -> bool {
        self.spectral_radius() < 1.0
    }
}

/// Jacobians of the one-step map at physical sensor state `x00` and
/// controls `v00`, all in scaled units.
///
/// One forward pass carries a tangent per state and control entry.
pub fn linearize(
    spec: &MlpSpec,
    params: &ParamStore,
    scaling: &ScalingSpec,
    scenario: &ScenarioConfig,
    x00: &[f64],
    v00: &[f64],
) -> Result<LinearSsm> {
    let stations = &scenario.sensor_stations;
    let n_st = stations.len();
    let q = scenario.state_dim();
    let p = scenario.n_controls();
    if x00.len() != q || v00.len() != p {
        return Err(PsmError::Dimension {
            expected: q + p,
            actual: x00.len() + v00.len(),
            context: "linearization point",
        });
    }
    let mut inputs = Array2::zeros((n_st, spec.input_dim));
    for (i, &z) in stations.iter().enumerate() {
        let row = input_row(scaling, z, scaling.t_max, v00, x00);
        inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    // tangent k perturbs input column 2 + k: controls first, then x0
    let k_dirs = p + q;
    let mut tangents = Array2::zeros((k_dirs * n_st, spec.input_dim));
    for k in 0..k_dirs {
        for i in 0..n_st {
            tangents[[k * n_st + i, 2 + k]] = 1.0;
        }
    }
    let tr = trace(spec, params, inputs.view(), Some(tangents.view()))?;
    let out = tr.outputs();
    let mut a = DMatrix::zeros(q, q);
    let mut b = DMatrix::zeros(q, p);
    for k in 0..k_dirs {
        let d = tr.output_tangent(k);
        for f in 0..3 {
            for s in 0..n_st {
                let row = f * n_st + s;
                if k < p {
                    b[(row, k)] = d[[s, f]];
                } else {
                    a[(row, k - p)] = d[[s, f]];
                }
            }
        }
    }
    let f00 = DVector::from_fn(q, |row, _| out[[row % n_st, row / n_st]]);
    Ok(LinearSsm {
        a,
        b,
        x00: DVector::from_vec(scaling.scale_sensor_vector(x00)),
        v00: DVector::from_vec(scaling.scale_controls(v00)),
        f00,
    })
}

/// Half-spaces `c . x <= d` on the scaled sensor state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    pub rows: Vec<(DVector<f64>, f64)>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn push(&mut self, c: DVector<f64>, d: f64) -> Result<()> {
        if !c.iter().all(|x| x.is_finite()) || !d.is_finite() {
            return Err(PsmError::Config("constraint coefficients must be finite".into()));
        }
        self.rows.push((c, d));
        Ok(())
    }

    /// Scaled rows for physical bounds on sensor-station values.
    pub fn from_bounds(bounds: &[OutputBound], scenario: &ScenarioConfig, scaling: &ScalingSpec) -> Result<Self> {
        let q = scenario.state_dim();
        let mut set = Self::default();
        for bound in bounds {
            let idx = bound.state_index(scenario)?;
            let range = scaling.range(bound.field);
            if let Some(hi) = bound.max {
                let mut c = DVector::zeros(q);
                c[idx] = 1.0;
                set.push(c, range.scale(hi))?;
            }
            if let Some(lo) = bound.min {
                let mut c = DVector::zeros(q);
                c[idx] = -1.0;
                set.push(c, -range.scale(lo))?;
            }
        }
        Ok(set)
    }
}

/// Physical bound on one field at one sensor station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputBound {
    pub field: Field,
    /// Station position (m); must coincide with a sensor station.
    pub z: f64,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

impl OutputBound {
    pub fn upper(field: Field, z: f64, max: f64) -> Self {
        Self {
            field,
            z,
            min: None,
            max: Some(max),
        }
    }

    /// Position of the bounded quantity in the field-major sensor vector.
    pub fn state_index(&self, scenario: &ScenarioConfig) -> Result<usize> {
        let station = scenario
            .sensor_stations
            .iter()
            .position(|&s| (s - self.z).abs() < 1e-9)
            .ok_or_else(|| PsmError::Config(format!("constraint at z = {} m is not a sensor station", self.z)))?;
        Ok(self.field.index() * scenario.n_stations() + station)
    }

    /// Amount by which physical sensor vector `x` breaks the bound (<= 0 when
    /// satisfied).
    pub fn violation(&self, scenario: &ScenarioConfig, x: &[f64]) -> Result<f64> {
        let value = x[self.state_index(scenario)?];
        let above = self.max.map_or(f64::NEG_INFINITY, |m| value - m);
        let below = self.min.map_or(f64::NEG_INFINITY, |m| m - value);
        Ok(above.max(below))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;
    use crate::transport::{presets, FieldRange};

    fn setup() -> (MlpSpec, ParamStore, ScalingSpec, ScenarioConfig) {
        let s = presets::heated_channel();
        let spec = MlpSpec::for_problem(2, s.state_dim(), (12, 8, 8));
        let params = init_params(&spec, 4).unwrap();
        let scaling = ScalingSpec {
            z_max: s.total_length(),
            t_max: s.delta_t,
            pressure: FieldRange::new(-3000.0, 1000.0),
            velocity: FieldRange::new(0.5, 0.8),
            temperature: FieldRange::new(790.0, 910.0),
            density: FieldRange::new(1960.0, 2040.0),
            controls: s.controls.iter().map(|c| FieldRange::new(c.min, c.max)).collect(),
        };
        (spec, params, scaling, s)
    }

    fn point(scaling: &ScalingSpec, s: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
        let n = s.n_stations();
        let mut x = vec![0.0; s.state_dim()];
        for i in 0..n {
            x[i] = scaling.pressure.unscale(0.3 + 0.05 * i as f64);
            x[n + i] = scaling.velocity.unscale(0.5);
            x[2 * n + i] = scaling.temperature.unscale(0.4 + 0.04 * i as f64);
        }
        (x, vec![0.62, 850.0])
    }

    fn prediction(spec: &MlpSpec, params: &ParamStore, scaling: &ScalingSpec, s: &ScenarioConfig, x: &[f64], v: &[f64]) -> DVector<f64> {
        let stations = &s.sensor_stations;
        let n = stations.len();
        let mut inputs = Array2::zeros((n, spec.input_dim));
        for (i, &z) in stations.iter().enumerate() {
            let row = input_row(scaling, z, scaling.t_max, v, x);
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        }
        let out = crate::nn::forward(spec, params, inputs.view()).unwrap();
        DVector::from_fn(3 * n, |r, _| out[[r % n, r / n]])
    }

    #[test]
    fn zeroth_order_term_is_the_model_prediction() {
        let (spec, params, scaling, s) = setup();
        let (x, v) = point(&scaling, &s);
        let ssm = linearize(&spec, &params, &scaling, &s, &x, &v).unwrap();
        let f = prediction(&spec, &params, &scaling, &s, &x, &v);
        assert_eq!(ssm.predict(&ssm.x00, &ssm.v00), f);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let (spec, params, scaling, s) = setup();
        let (x, v) = point(&scaling, &s);
        let ssm = linearize(&spec, &params, &scaling, &s, &x, &v).unwrap();
        let h = 1e-4;
        let q = s.state_dim();
        let scale = ssm.a.abs().max().max(ssm.b.abs().max());
        for j in 0..q + 2 {
            let mut xs = scaling.scale_sensor_vector(&x);
            let mut vs = scaling.scale_controls(&v);
            let bump = |xs: &mut Vec<f64>, vs: &mut Vec<f64>, d: f64| {
                if j < 2 {
                    vs[j] += d
                } else {
                    xs[j - 2] += d
                }
            };
            bump(&mut xs, &mut vs, h);
            let plus = prediction(&spec, &params, &scaling, &s, &scaling.unscale_sensor_vector(&xs), &scaling.unscale_controls(&vs));
            bump(&mut xs, &mut vs, -2.0 * h);
            let minus = prediction(&spec, &params, &scaling, &s, &scaling.unscale_sensor_vector(&xs), &scaling.unscale_controls(&vs));
            let fd = (plus - minus) / (2.0 * h);
            let col = if j < 2 { ssm.b.column(j).into_owned() } else { ssm.a.column(j - 2).into_owned() };
            let err = (fd - col).abs().max();
            assert!(err < 1e-4 * scale, "column {j}: {err}");
        }
    }

    #[test]
    fn spectral_radius_of_known_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, -0.8]);
        let ssm = LinearSsm::about_fixed_point(a, DMatrix::zeros(2, 1), DVector::zeros(2), DVector::zeros(1));
        assert!((ssm.spectral_radius() - 0.8).abs() < 1e-12);
        assert!(ssm.is_schur());
    }

    #[test]
    fn bounds_map_to_scaled_rows() {
        let (_, _, scaling, s) = setup();
        let b = OutputBound {
            field: Field::Temperature,
            z: 2.3,
            min: Some(800.0),
            max: Some(880.0),
        };
        assert_eq!(b.state_index(&s).unwrap(), 16);
        let set = ConstraintSet::from_bounds(&[b.clone()], &s, &scaling).unwrap();
        assert_eq!(set.len(), 2);
        assert!((set.rows[0].1 - scaling.temperature.scale(880.0)).abs() < 1e-15);
        assert_eq!(set.rows[1].0[16], -1.0);
        let bad = OutputBound::upper(Field::Temperature, 2.0, 880.0);
        assert!(bad.state_index(&s).is_err());
        let mut x = vec![0.0; 18];
        x[16] = 885.0;
        assert_eq!(b.violation(&s, &x).unwrap(), 5.0);
    }
}
