use ndarray::{s, Array2, ArrayView2};

use crate::error::{PsmError, Result};
use crate::nn::{backward, trace, MlpSpec, ParamStore};
use crate::transport::{FluidProps, ScalingSpec, ScenarioConfig};

/// log(cosh(x)) without overflow for large |x|.
pub fn logcosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mean Log-Cosh over every entry of `predictions - targets`.
pub fn measurement_loss(predictions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    Ok(measurement_loss_grad(predictions, targets)?.0)
}

/// Measurement loss and its gradient with respect to `predictions`.
pub fn measurement_loss_grad(predictions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if predictions.dim() != targets.dim() {
        return Err(PsmError::Dimension {
            expected: targets.len(),
            actual: predictions.len(),
            context: "predictions vs targets",
        });
    }
    let n = predictions.len().max(1) as f64;
    let err = &predictions - &targets;
    let loss = err.iter().map(|&e| logcosh(e)).sum::<f64>() / n;
    Ok((loss, err.mapv(|e| e.tanh() / n)))
}

/// Per-point nondimensional residuals of the mass, momentum and energy
/// equations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PdeResidualSet {
    pub mass: Vec<f64>,
    pub momentum: Vec<f64>,
    pub energy: Vec<f64>,
}

impl PdeResidualSet {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mean_abs(&self) -> [f64; 3] {
        let m = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64;
        [m(&self.mass), m(&self.momentum), m(&self.energy)]
    }
}

#[derive(Clone, Debug)]
struct SegmentTerms {
    end: f64,
    /// f / (2 D_h)
    friction: f64,
    gravity: f64,
}

/// Closures, sources and scaling needed to evaluate the transport equations
/// on network outputs.
#[derive(Clone, Debug)]
pub struct PhysicsModel {
    scenario: ScenarioConfig,
    scaling: ScalingSpec,
    fluid: FluidProps,
    segments: Vec<SegmentTerms>,
    /// Residual reference scales for mass, momentum and energy.
    pub references: [f64; 3],
}

/// Residuals at one point and their partial derivatives with respect to the
/// scaled quantities `[y(3), dy/dz*(3), dy/dt*(3)]`.
#[derive(Clone, Copy, Debug)]
pub struct PointResidual {
    pub value: [f64; 3],
    pub partials: [[f64; 9]; 3],
}

impl PhysicsModel {
    pub fn new(scenario: &ScenarioConfig, scaling: &ScalingSpec) -> Result<Self> {
        scaling.validate()?;
        let mut end = 0.0;
        let segments = scenario
            .segments
            .iter()
            .map(|seg| {
                end += seg.length;
                SegmentTerms {
                    end,
                    friction: seg.friction_factor / (2.0 * seg.hydraulic_diameter),
                    gravity: seg.gravity_component,
                }
            })
            .collect();
        let fluid = scenario.fluid.clone();
        let t_mid = 0.5 * (scaling.temperature.min + scaling.temperature.max);
        let rho_ref = fluid.density(t_mid);
        let u_ref = scaling.velocity.min.abs().max(scaling.velocity.max.abs());
        let tm = scaling.t_max;
        let references = [
            rho_ref / tm,
            rho_ref * u_ref / tm,
            rho_ref * fluid.cp * scaling.temperature.span() / tm,
        ];
        Ok(Self {
            scenario: scenario.clone(),
            scaling: scaling.clone(),
            fluid,
            segments,
            references,
        })
    }

    pub fn scaling(&self) -> &ScalingSpec {
        &self.scaling
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    fn segment(&self, z: f64) -> usize {
        self.segments
            .iter()
            .position(|s| z < s.end)
            .unwrap_or(self.segments.len() - 1)
    }

    /// Residuals at physical position `z` under physical controls `v`, for
    /// scaled outputs `y` and their scaled derivatives along z* and t*.
    pub fn point(&self, z: f64, v: &[f64], y: [f64; 3], dz: [f64; 3], dt: [f64; 3]) -> PointResidual {
        let sc = &self.scaling;
        let (sp, su, st) = (sc.pressure.span(), sc.velocity.span(), sc.temperature.span());
        let (zm, tm) = (sc.z_max, sc.t_max);
        let seg_idx = self.segment(z);
        let seg = &self.segments[seg_idx];
        let q = self.scenario.volumetric_heat(seg_idx, v);
        let b = self.fluid.rho_b;
        let cp = self.fluid.cp;
        let (k, g) = (seg.friction, seg.gravity);

        let u = sc.velocity.unscale(y[1]);
        let temp = sc.temperature.unscale(y[2]);
        let rho = self.fluid.density(temp);
        let p_z = sp * dz[0] / zm;
        let u_z = su * dz[1] / zm;
        let t_z = st * dz[2] / zm;
        let u_t = su * dt[1] / tm;
        let t_t = st * dt[2] / tm;

        let mass = -b * t_t - b * u * t_z + rho * u_z;
        let momentum = rho * u_t + rho * u * u_z + p_z - rho * g + k * rho * u * u.abs();
        let energy = rho * cp * (t_t + u * t_z) - q;

        // physical partials, ordered [T, u, p_z, u_z, T_z, u_t, T_t]
        let d_mass = [-b * u_z, -b * t_z, 0.0, rho, -b * u, 0.0, -b];
        let d_mom = [
            -b * (u_t + u * u_z - g + k * u * u.abs()),
            rho * u_z + 2.0 * k * rho * u.abs(),
            1.0,
            rho * u,
            0.0,
            rho,
            0.0,
        ];
        let d_energy = [-b * cp * (t_t + u * t_z), rho * cp * t_z, 0.0, 0.0, rho * cp * u, 0.0, rho * cp];

        let to_scaled = |d: [f64; 7], r: f64| -> [f64; 9] {
            [
                0.0,
                d[1] * su / r,
                d[0] * st / r,
                d[2] * sp / zm / r,
                d[3] * su / zm / r,
                d[4] * st / zm / r,
                0.0,
                d[5] * su / tm / r,
                d[6] * st / tm / r,
            ]
        };
        let [rm, rq, re] = self.references;
        PointResidual {
            value: [mass / rm, momentum / rq, energy / re],
            partials: [to_scaled(d_mass, rm), to_scaled(d_mom, rq), to_scaled(d_energy, re)],
        }
    }
}

/// Tangent directions d/dz* and d/dt*, stacked for a batch of `rows`.
pub fn space_time_tangents(rows: usize, input_dim: usize) -> Array2<f64> {
    let mut t = Array2::zeros((2 * rows, input_dim));
    t.slice_mut(s![..rows, 0]).fill(1.0);
    t.slice_mut(s![rows.., 1]).fill(1.0);
    t
}

/// Residuals at every collocation row plus the Log-Cosh loss and, when
/// `want_grad`, its parameter gradient.
pub fn physics_loss_grad(
    spec: &MlpSpec,
    params: &ParamStore,
    collocation: ArrayView2<f64>,
    model: &PhysicsModel,
    want_grad: bool,
) -> Result<(f64, PdeResidualSet, Option<Vec<f64>>)> {
    let rows = collocation.nrows();
    if let Some(z) = collocation.column(0).iter().find(|z| !(-1e-9..=1.0 + 1e-9).contains(*z)) {
        return Err(PsmError::Config(format!("collocation z* = {z} lies outside [0, 1]")));
    }
    let n_controls = model.scenario.n_controls();
    let tangents = space_time_tangents(rows, spec.input_dim);
    let tr = trace(spec, params, collocation, Some(tangents.view()))?;
    let y = tr.outputs();
    let dz = tr.output_tangent(0);
    let dt = tr.output_tangent(1);
    let sc = &model.scaling;
    let mut set = PdeResidualSet {
        mass: Vec::with_capacity(rows),
        momentum: Vec::with_capacity(rows),
        energy: Vec::with_capacity(rows),
    };
    let n = (3 * rows).max(1) as f64;
    let mut loss = 0.0;
    let mut gy = Array2::zeros((rows, 3));
    let mut gyd = Array2::zeros((2 * rows, 3));
    for i in 0..rows {
        let row = collocation.row(i);
        let z = sc.unscale_z(row[0]);
        let v: Vec<f64> = (0..n_controls).map(|c| sc.controls[c].unscale(row[2 + c])).collect();
        let arr = |a: &Array2<f64>| [a[[i, 0]], a[[i, 1]], a[[i, 2]]];
        let pr = model.point(z, &v, arr(&y), arr(&dz), arr(&dt));
        set.mass.push(pr.value[0]);
        set.momentum.push(pr.value[1]);
        set.energy.push(pr.value[2]);
        for e in 0..3 {
            loss += logcosh(pr.value[e]);
            if want_grad {
                let w = pr.value[e].tanh() / n;
                let d = &pr.partials[e];
                for j in 0..3 {
                    gy[[i, j]] += w * d[j];
                    gyd[[i, j]] += w * d[3 + j];
                    gyd[[rows + i, j]] += w * d[6 + j];
                }
            }
        }
    }
    loss /= n;
    let grad = if want_grad {
        Some(backward(spec, params, &tr, gy.view(), Some(gyd.view()), false)?.params)
    } else {
        None
    };
    Ok((loss, set, grad))
}

pub fn physics_loss(
    spec: &MlpSpec,
    params: &ParamStore,
    collocation: ArrayView2<f64>,
    model: &PhysicsModel,
) -> Result<(f64, PdeResidualSet)> {
    let (loss, set, _) = physics_loss_grad(spec, params, collocation, model, false)?;
    Ok((loss, set))
}
