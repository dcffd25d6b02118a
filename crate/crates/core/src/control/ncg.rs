use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_oinf, cg_solve, linearize, srg_kappa, ConstraintSet, OInfApprox, OInfConfig, OutputBound, QpStatus};
use crate::error::{PsmError, Result};
use crate::nn::{MlpSpec, ParamStore};
use crate::refsolver::{InputTrajectory, PiecewiseLinear, Solver, SolverConfig};
use crate::transport::{Field, ScalingSpec, ScenarioConfig, ScenarioKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    /// Input weighting, row by row; empty means identity.
    pub q: Vec<Vec<f64>>,
    pub horizon: usize,
    pub epsilon: f64,
    /// Re-linearize every `gamma` steps.
    pub gamma: usize,
    pub qp_tolerance: f64,
    pub max_sweeps: usize,
    pub input_box: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            q: Vec::new(),
            horizon: 50,
            epsilon: 0.01,
            gamma: 10,
            qp_tolerance: 1e-9,
            max_sweeps: 100_000,
            input_box: true,
        }
    }
}

impl CgConfig {
    pub fn q_matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        if self.q.is_empty() {
            return Ok(DMatrix::identity(p, p));
        }
        if self.q.len() != p || self.q.iter().any(|r| r.len() != p) {
            return Err(PsmError::Config(format!("Q must be {p}x{p}")));
        }
        let m = DMatrix::from_fn(p, p, |i, j| self.q[i][j]);
        if (&m - m.transpose()).amax() > 1e-12 || m.clone().cholesky().is_none() {
            return Err(PsmError::Config("Q must be symmetric positive definite".into()));
        }
        Ok(m)
    }

    pub fn oinf(&self) -> OInfConfig {
        OInfConfig {
            horizon: self.horizon,
            epsilon: self.epsilon,
            input_box: self.input_box,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.q_matrix(p)?;
        if self.horizon == 0 || self.gamma == 0 {
            return Err(PsmError::Config("horizon and gamma must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) || !(self.qp_tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(PsmError::Config("epsilon, QP tolerance and sweep budget must be positive".into()));
        }
        Ok(())
    }
}

/// Bounds that hold from `start_step` until the next entry starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start_step: usize,
    #[serde(default)]
    pub bounds: Vec<OutputBound>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSchedule {
    #[serde(default)]
    pub entries: Vec<ScheduleEntry>,
}

impl ConstraintSchedule {
    /// Index of the entry in force at `step`.
    pub fn active(&self, step: usize) -> Option<usize> {
        self.entries.iter().rposition(|e| e.start_step <= step)
    }

    pub fn bounds_at(&self, step: usize) -> &[OutputBound] {
        self.active(step).map_or(&[], |i| &self.entries[i].bounds)
    }

    /// Distinct (field, z) pairs appearing anywhere in the schedule.
    pub fn monitored(&self) -> Vec<(Field, f64)> {
        let mut out: Vec<(Field, f64)> = Vec::new();
        for b in self.entries.iter().flat_map(|e| &e.bounds) {
            if !out.iter().any(|&(f, z)| f == b.field && z == b.z) {
                out.push((b.field, b.z));
            }
        }
        out
    }

    pub fn validate(&self, scenario: &ScenarioConfig) -> Result<()> {
        if self.entries.windows(2).any(|w| w[1].start_step <= w[0].start_step) {
            return Err(PsmError::Config("constraint schedule must have increasing start steps".into()));
        }
        for b in self.entries.iter().flat_map(|e| &e.bounds) {
            b.state_index(scenario)?;
            if b.min.is_none() && b.max.is_none() {
                return Err(PsmError::Config("bound needs a min or a max".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NcgStep {
    pub step: usize,
    pub time: f64,
    /// Physical reference and applied input.
    pub reference: Vec<f64>,
    pub applied: Vec<f64>,
    pub status: QpStatus,
    /// Scalar-governor step along `r - v_prev` on the same set (1 when
    /// transparent).
    pub kappa: f64,
    pub relinearized: bool,
    /// Whether the applied pair satisfies the current set's rows.
    pub inside: bool,
    /// Monitored outputs measured after the step, and the bounds in force
    /// for them (NaN where none applies).
    pub outputs: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NcgLog {
    pub control_names: Vec<String>,
    pub monitored: Vec<(Field, f64)>,
    pub steps: Vec<NcgStep>,
}

impl NcgLog {
    /// Largest amount any monitored output exceeded its bound.
    pub fn max_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for s in &self.steps {
            for (i, &y) in s.outputs.iter().enumerate() {
                if s.upper[i].is_finite() {
                    worst = worst.max(y - s.upper[i]);
                }
                if s.lower[i].is_finite() {
                    worst = worst.max(s.lower[i] - y);
                }
            }
        }
        worst
    }

    /// Steps where the applied input differs from the reference.
    pub fn governed_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.applied != s.reference).count()
    }

    /// Columns: step, time, r_<name>, v_<name>, status, kappa, relinearized,
    /// inside, then value/upper/lower per monitored output.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "time".to_string()];
        header.extend(self.control_names.iter().map(|n| format!("r_{n}")));
        header.extend(self.control_names.iter().map(|n| format!("v_{n}")));
        header.extend(["status", "kappa", "relinearized", "inside"].map(String::from));
        for (f, z) in &self.monitored {
            let tag = format!("{}@{z}", f.name());
            header.push(tag.clone());
            header.push(format!("{tag}_max"));
            header.push(format!("{tag}_min"));
        }
        out.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![s.step.to_string(), s.time.to_string()];
            row.extend(s.reference.iter().map(|x| x.to_string()));
            row.extend(s.applied.iter().map(|x| x.to_string()));
            row.push(s.status.name().into());
            row.push(s.kappa.to_string());
            row.push(s.relinearized.to_string());
            row.push(s.inside.to_string());
            for i in 0..self.monitored.len() {
                row.push(s.outputs[i].to_string());
                row.push(s.upper[i].to_string());
                row.push(s.lower[i].to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sequential command governor with the reference solver as the plant.
///
/// The set is rebuilt from a fresh linearization every `gamma` steps and
/// whenever the bounds change. Bounds are looked up one step ahead, since
/// the input chosen at step k first shows in the measurement at k + 1.
#[allow(clippy::too_many_arguments)]
pub fn ncg_rollout(
    spec: &MlpSpec,
    params: &ParamStore,
    scaling: &ScalingSpec,
    scenario: &ScenarioConfig,
    reference: &InputTrajectory,
    schedule: &ConstraintSchedule,
    config: &CgConfig,
    solver_config: SolverConfig,
) -> Result<NcgLog> {
    let p = scenario.n_controls();
    config.validate(p)?;
    schedule.validate(scenario)?;
    reference.validate(scenario)?;
    let q = config.q_matrix(p)?;
    let solver = Solver::new(scenario, solver_config)?;
    let stations = &scenario.sensor_stations;
    let monitored = schedule.monitored();
    let n_steps = (reference.duration() / scenario.delta_t + 1e-9).floor() as usize;
    let at = |step: usize, e: PsmError| PsmError::AtStep {
        step,
        source: Box::new(e),
    };

    let mut state = solver.steady_state(&reference.values_at(0.0))?;
    let mut v_prev = reference.values_at(0.0);
    let mut current: Option<(usize, OInfApprox)> = None;
    let mut last_build = 0;
    let mut steps = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let time = k as f64 * scenario.delta_t;
        let x = state.sensor_readout(stations);
        let r = reference.values_at(time);
        let xs = DVector::from_vec(scaling.scale_sensor_vector(&x));
        let rs = DVector::from_vec(scaling.scale_controls(&r));
        let vps = DVector::from_vec(scaling.scale_controls(&v_prev));
        let entry = schedule.active(k + 1).filter(|&i| !schedule.entries[i].bounds.is_empty());

        let mut relinearized = false;
        let (v, status, kappa, inside) = match entry {
            None => {
                current = None;
                (r.clone(), QpStatus::Transparent, 1.0, true)
            }
            Some(idx) => {
                let stale = match &current {
                    Some((built_for, _)) => *built_for != idx || k - last_build >= config.gamma,
                    None => true,
                };
                if stale {
                    let ssm = linearize(spec, params, scaling, scenario, &x, &v_prev).map_err(|e| at(k, e))?;
                    let set = ConstraintSet::from_bounds(&schedule.entries[idx].bounds, scenario, scaling)?;
                    let oinf = build_oinf(&ssm, &set, &config.oinf()).map_err(|e| at(k, e))?;
                    current = Some((idx, oinf));
                    last_build = k;
                    relinearized = true;
                }
                let oinf = &current.as_ref().expect("built above").1;
                let mut sol = cg_solve(oinf, &xs, &rs, &vps, &q, config.qp_tolerance, config.max_sweeps)?;
                let mut set_used = oinf.clone();
                if sol.status == QpStatus::Infeasible {
                    let relaxed = oinf.input_dependent();
                    let retry = cg_solve(&relaxed, &xs, &rs, &vps, &q, config.qp_tolerance, config.max_sweeps)?;
                    if retry.status != QpStatus::Infeasible {
                        sol = retry;
                        sol.status = QpStatus::Recovered;
                        set_used = relaxed;
                    }
                }
                let kappa = srg_kappa(oinf, &xs, &vps, &rs).kappa;
                let inside = set_used.max_violation(&xs, &sol.v) <= 1e-6;
                let v = if sol.status == QpStatus::Accepted {
                    r.clone()
                } else {
                    scaling.unscale_controls(sol.v.as_slice())
                };
                (v, sol.status, kappa, inside)
            }
        };
        let mut applied = v;
        scenario.clamp_controls(&mut applied);
        state = solver.step(&state, &applied).map_err(|e| at(k, e))?;

        let after = state.sensor_readout(stations);
        let bounds = schedule.bounds_at(k + 1);
        let mut outputs = Vec::with_capacity(monitored.len());
        let mut upper = Vec::with_capacity(monitored.len());
        let mut lower = Vec::with_capacity(monitored.len());
        for &(field, z) in &monitored {
            let probe = OutputBound {
                field,
                z,
                min: None,
                max: None,
            };
            outputs.push(after[probe.state_index(scenario)?]);
            let b = bounds.iter().find(|b| b.field == field && b.z == z);
            upper.push(b.and_then(|b| b.max).unwrap_or(f64::NAN));
            lower.push(b.and_then(|b| b.min).unwrap_or(f64::NAN));
        }
        steps.push(NcgStep {
            step: k,
            time,
            reference: r,
            applied: applied.clone(),
            status,
            kappa,
            relinearized,
            inside,
            outputs,
            upper,
            lower,
        });
        v_prev = applied;
    }
    Ok(NcgLog {
        control_names: scenario.controls.iter().map(|c| c.name.clone()).collect(),
        monitored,
        steps,
    })
}

/// Heated-channel governor case: the inlet temperature request ramps up
/// while the cap on the outlet-side temperature at z = 2.3 m starts loose,
/// tightens, then partly relaxes.
pub fn governor_scenario(scenario: &ScenarioConfig) -> Result<(InputTrajectory, ConstraintSchedule)> {
    if scenario.kind() != ScenarioKind::HeatedChannel || scenario.n_controls() != 2 {
        return Err(PsmError::Config("the governor case is defined for the heated channel".into()));
    }
    let duration = scenario.episode_duration;
    let t_in = &scenario.controls[1];
    let reference = InputTrajectory {
        channels: vec![
            PiecewiseLinear::constant(0.649, duration),
            PiecewiseLinear {
                times: vec![0.0, 50.0, duration],
                values: vec![t_in.min + 0.3 * t_in.span(), t_in.max - 0.125 * t_in.span(), t_in.max - 0.125 * t_in.span()],
            },
        ],
    };
    let cap = |start_step, max| ScheduleEntry {
        start_step,
        bounds: vec![OutputBound::upper(Field::Temperature, 2.3, max)],
    };
    let schedule = ConstraintSchedule {
        entries: vec![cap(0, 897.0), cap(15, 884.0), cap(30, 890.0)],
    };
    Ok((reference, schedule))
}
