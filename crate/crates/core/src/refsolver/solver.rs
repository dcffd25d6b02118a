//! Semi-implicit finite-volume transport solver on a staggered 1D grid.
//!
//! Temperature and pressure live at cell centers, mass flow rates at faces.
//! One substep of length `dt`:
//!
//! 1. Density follows the closure, so the mass balance fixes the face mass
//!    flows once the new temperatures are known: starting from the driven
//!    face (inlet for the channel, pump face for the loop),
//!    `W[i+1] = W[i] - A dz (rho_new - rho_old) / dt`.
//! 2. For the loop, the momentum equation integrated around the circuit gives
//!    the pump-face flow, with inertia and linearized friction implicit.
//! 3. Energy uses implicit first-order upwind advection in the form
//!    `A dz rho_old (T - T_old) / dt + W_in (T - T_up) = q A dz / cp`, which
//!    is algebraically the conservative enthalpy balance once mass holds.
//! 4. Steps 1-3 are repeated (Picard) until temperatures stop changing.
//! 5. Pressure is reconstructed by marching the local momentum balance from
//!    the reference point (outlet or pump outlet).

use serde::{Deserialize, Serialize};

use crate::error::{PsmError, Result};
use crate::transport::{build_grid, BoundarySpec, FieldState, Grid, ScenarioConfig};

/// Inner numerics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Inner time step (s); must divide the scenario's delta_t.
    pub substep: f64,
    /// Picard tolerance on temperature (K) and relative mass flow.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Simulated time allowed for reaching a steady state (s).
    pub steady_max_time: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            substep: 0.05,
            tolerance: 1e-10,
            max_iterations: 50,
            steady_max_time: 2000.0,
        }
    }
}

/// Conservation bookkeeping for one substep (kg and J).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SubstepBalance {
    pub mass_change: f64,
    /// Net mass entering through the boundary (or the loop's pressure reference).
    pub boundary_mass_inflow: f64,
    /// Change of sum(rho cp T A dz).
    pub enthalpy_change: f64,
    /// Integrated volumetric source minus sink.
    pub heat_input: f64,
    /// Net advected enthalpy entering through the boundary.
    pub boundary_enthalpy_inflow: f64,
    pub iterations: usize,
}

impl SubstepBalance {
    pub fn mass_error(&self) -> f64 {
        self.mass_change - self.boundary_mass_inflow
    }

    pub fn enthalpy_error(&self) -> f64 {
        self.enthalpy_change - self.heat_input - self.boundary_enthalpy_inflow
    }
}

pub struct Solver {
    scenario: ScenarioConfig,
    grid: Grid,
    config: SolverConfig,
    area: Vec<f64>,
    /// f / (2 D_h) per cell.
    friction: Vec<f64>,
    gravity: Vec<f64>,
    substeps: usize,
}

/// Everything needed to march pressure for a given pair of time levels.
struct Levels<'a> {
    rho: &'a [f64],
    flow: &'a [f64],
    rho_old: &'a [f64],
    flow_old: &'a [f64],
    inlet_rho: Option<(f64, f64)>,
}

impl Solver {
    pub fn new(scenario: &ScenarioConfig, config: SolverConfig) -> Result<Self> {
        scenario.validate()?;
        let grid = build_grid(scenario)?;
        if !(config.substep > 0.0) || config.substep > scenario.delta_t {
            return Err(PsmError::Config(format!(
                "substep {} must lie in (0, delta_t = {}]",
                config.substep, scenario.delta_t
            )));
        }
        let ratio = scenario.delta_t / config.substep;
        let substeps = ratio.round() as usize;
        if (ratio - substeps as f64).abs() > 1e-9 * ratio {
            return Err(PsmError::Config(format!(
                "substep {} does not divide delta_t {}",
                config.substep, scenario.delta_t
            )));
        }
        let seg = |i: usize| &scenario.segments[grid.segment_of_cell[i]];
        let n = grid.n_cells();
        let area = (0..n).map(|i| seg(i).flow_area).collect();
        let friction = (0..n)
            .map(|i| seg(i).friction_factor / (2.0 * seg(i).hydraulic_diameter))
            .collect();
        let gravity = (0..n).map(|i| seg(i).gravity_component).collect();
        Ok(Self {
            scenario: scenario.clone(),
            grid,
            config,
            area,
            friction,
            gravity,
            substeps,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn is_loop(&self) -> bool {
        matches!(self.scenario.boundary, BoundarySpec::Loop { .. })
    }

    fn rho(&self, t: f64) -> f64 {
        self.scenario.fluid.density(t)
    }

    fn heat(&self, v: &[f64]) -> Vec<f64> {
        self.grid
            .segment_of_cell
            .iter()
            .map(|&s| self.scenario.volumetric_heat(s, v))
            .collect()
    }

    /// Inlet (density, mass flow) for the heated channel.
    fn inlet(&self, v: &[f64]) -> Option<(f64, f64)> {
        match self.scenario.boundary {
            BoundarySpec::HeatedChannel {
                inlet_velocity_channel,
                inlet_temperature_channel,
                ..
            } => {
                let t_in = v[inlet_temperature_channel];
                let rho = self.rho(t_in);
                Some((t_in, rho * v[inlet_velocity_channel] * self.area[0]))
            }
            BoundarySpec::Loop { .. } => None,
        }
    }

    fn pump_head(&self, v: &[f64]) -> f64 {
        match self.scenario.boundary {
            BoundarySpec::Loop { pump_channel, .. } => v[pump_channel],
            BoundarySpec::HeatedChannel { .. } => 0.0,
        }
    }

    fn check_inputs(&self, state: &FieldState, v: &[f64]) -> Result<()> {
        if v.len() != self.scenario.n_controls() {
            return Err(PsmError::Dimension {
                expected: self.scenario.n_controls(),
                actual: v.len(),
                context: "control vector",
            });
        }
        if state.len() != self.grid.n_cells() {
            return Err(PsmError::Dimension {
                expected: self.grid.n_cells(),
                actual: state.len(),
                context: "state on scenario grid",
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PsmError::NonFinite("control vector".into()));
        }
        Ok(())
    }

    /// Advance one measurement interval (delta_t) with inputs held constant.
    pub fn step(&self, state: &FieldState, v: &[f64]) -> Result<FieldState> {
        self.step_with_balances(state, v).map(|(s, _)| s)
    }

    pub fn step_with_balances(
        &self,
        state: &FieldState,
        v: &[f64],
    ) -> Result<(FieldState, Vec<SubstepBalance>)> {
        self.check_inputs(state, v)?;
        let mut current = state.clone();
        let mut balances = Vec::with_capacity(self.substeps);
        for _ in 0..self.substeps {
            let (next, balance) = self.substep(&current, v, self.config.substep)?;
            current = next;
            balances.push(balance);
        }
        Ok((current, balances))
    }

    /// One implicit substep of length `dt`.
    pub fn substep(&self, state: &FieldState, v: &[f64], dt: f64) -> Result<(FieldState, SubstepBalance)> {
        let n = self.grid.n_cells();
        let dz = &self.grid.widths;
        let cp = self.scenario.fluid.cp;
        let q = self.heat(v);
        let inlet = self.inlet(v);
        let is_loop = self.is_loop();

        let t_old = &state.temperature;
        let rho_old: Vec<f64> = t_old.iter().map(|&t| self.rho(t)).collect();
        let flow_old = &state.face_mass_flow;
        let flow_cell_old: Vec<f64> = (0..n).map(|i| 0.5 * (flow_old[i] + flow_old[i + 1])).collect();

        let mut temp = t_old.clone();
        let mut flow = flow_old.clone();
        let mut converged = false;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        while iterations < self.config.max_iterations {
            iterations += 1;
            let rho_new: Vec<f64> = temp.iter().map(|&t| self.rho(t)).collect();
            // mass flow offsets relative to the driven face
            let mut offset = vec![0.0; n + 1];
            for i in 0..n {
                offset[i + 1] = offset[i] - self.area[i] * dz[i] * (rho_new[i] - rho_old[i]) / dt;
            }
            let w0 = match inlet {
                Some((_, w_in)) => w_in,
                None => self.loop_pump_flow(v, &rho_new, &offset, &flow, &flow_cell_old, dt),
            };
            let new_flow: Vec<f64> = offset.iter().map(|c| w0 + c).collect();
            let new_temp = self.solve_energy(t_old, &rho_old, &new_flow, &q, inlet.map(|x| x.0), dt, cp);

            let t_change = new_temp
                .iter()
                .zip(&temp)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let w_scale = new_flow.iter().map(|w| w.abs()).fold(1e-12, f64::max);
            let w_change = new_flow
                .iter()
                .zip(&flow)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / w_scale;
            temp = new_temp;
            flow = new_flow;
            residual = t_change.max(w_change);
            if !residual.is_finite() {
                return Err(PsmError::NonFinite("solver iterate".into()));
            }
            if t_change <= self.config.tolerance && w_change <= self.config.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(PsmError::NonConvergence {
                iterations,
                residual,
            });
        }

        let rho_new: Vec<f64> = temp.iter().map(|&t| self.rho(t)).collect();
        self.check_cfl(&rho_new, &flow, inlet, dt)?;

        let levels = Levels {
            rho: &rho_new,
            flow: &flow,
            rho_old: &rho_old,
            flow_old,
            inlet_rho: inlet.map(|(t, _)| (self.rho(t), t)),
        };
        let pressure = self.pressure_march(&levels, Some(dt));
        let velocity = self.cell_velocity(&rho_new, &flow);

        let mut balance = SubstepBalance {
            iterations,
            ..Default::default()
        };
        for i in 0..n {
            let vol = self.area[i] * dz[i];
            balance.mass_change += vol * (rho_new[i] - rho_old[i]);
            balance.enthalpy_change += vol * cp * (rho_new[i] * temp[i] - rho_old[i] * t_old[i]);
            balance.heat_input += dt * vol * q[i];
        }
        balance.boundary_mass_inflow = dt * (flow[0] - flow[n]);
        let upwind_in = match inlet {
            Some((t_in, _)) => {
                if flow[0] >= 0.0 {
                    t_in
                } else {
                    temp[0]
                }
            }
            None => {
                if flow[0] >= 0.0 {
                    temp[n - 1]
                } else {
                    temp[0]
                }
            }
        };
        let upwind_out = if flow[n] >= 0.0 {
            temp[n - 1]
        } else if is_loop {
            temp[0]
        } else {
            temp[n - 1]
        };
        balance.boundary_enthalpy_inflow = dt * cp * (flow[0] * upwind_in - flow[n] * upwind_out);

        Ok((
            FieldState {
                grid_z: self.grid.centers.clone(),
                pressure,
                velocity,
                temperature: temp,
                face_mass_flow: flow,
            },
            balance,
        ))
    }

    /// Pump-face mass flow from the loop-integrated momentum balance.
    fn loop_pump_flow(
        &self,
        v: &[f64],
        rho: &[f64],
        offset: &[f64],
        flow_iter: &[f64],
        flow_cell_old: &[f64],
        dt: f64,
    ) -> f64 {
        let n = self.grid.n_cells();
        let dz = &self.grid.widths;
        let mut num = self.pump_head(v);
        let mut den = 0.0;
        for i in 0..n {
            let a = self.area[i];
            let cc = 0.5 * (offset[i] + offset[i + 1]);
            let g_iter = 0.5 * (flow_iter[i] + flow_iter[i + 1]) / a;
            let k = self.friction[i] / rho[i];
            let inertia = dz[i] / (a * dt);
            num += rho[i] * self.gravity[i] * dz[i];
            num += inertia * (flow_cell_old[i] - cc);
            num -= dz[i] * k * g_iter.abs() * cc / a;
            den += inertia + dz[i] * k * g_iter.abs() / a;
        }
        num / den
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_energy(
        &self,
        t_old: &[f64],
        rho_old: &[f64],
        flow: &[f64],
        q: &[f64],
        t_inlet: Option<f64>,
        dt: f64,
        cp: f64,
    ) -> Vec<f64> {
        let n = self.grid.n_cells();
        let dz = &self.grid.widths;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let vol = self.area[i] * dz[i];
            let a = vol * rho_old[i] / dt;
            let w_left = flow[i].max(0.0);
            let mut w_right = (-flow[i + 1]).max(0.0);
            if i == n - 1 && t_inlet.is_some() {
                // backflow at the outlet carries the outlet cell's own temperature
                w_right = 0.0;
            }
            diag[i] = a + w_left + w_right;
            lower[i] = -w_left;
            upper[i] = -w_right;
            rhs[i] = a * t_old[i] + q[i] * vol / cp;
        }
        match t_inlet {
            Some(t_in) => {
                rhs[0] -= lower[0] * t_in;
                lower[0] = 0.0;
                solve_tridiagonal(&lower, &diag, &upper, &rhs)
            }
            None => solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs),
        }
    }

    fn cell_velocity(&self, rho: &[f64], flow: &[f64]) -> Vec<f64> {
        (0..self.grid.n_cells())
            .map(|i| 0.5 * (flow[i] + flow[i + 1]) / (self.area[i] * rho[i]))
            .collect()
    }

    /// Velocity at face `j` using the upwind density.
    fn face_velocity(&self, j: usize, rho: &[f64], flow: &[f64], inlet_rho: Option<(f64, f64)>) -> f64 {
        let n = self.grid.n_cells();
        let w = flow[j];
        let (up, a) = if w >= 0.0 {
            if j == 0 {
                match inlet_rho {
                    Some((r, _)) => return w / (self.area[0] * r),
                    None => (n - 1, self.area[n - 1]),
                }
            } else {
                (j - 1, self.area[j - 1])
            }
        } else if j == n {
            if self.is_loop() {
                (0, self.area[0])
            } else {
                (n - 1, self.area[n - 1])
            }
        } else {
            (j, self.area[j])
        };
        w / (a * rho[up])
    }

    pub fn face_velocities(&self, state: &FieldState, v: &[f64]) -> Vec<f64> {
        let rho: Vec<f64> = state.temperature.iter().map(|&t| self.rho(t)).collect();
        let inlet_rho = self.inlet(v).map(|(t, _)| (self.rho(t), t));
        (0..=self.grid.n_cells())
            .map(|j| self.face_velocity(j, &rho, &state.face_mass_flow, inlet_rho))
            .collect()
    }

    fn check_cfl(&self, rho: &[f64], flow: &[f64], inlet: Option<(f64, f64)>, dt: f64) -> Result<()> {
        let inlet_rho = inlet.map(|(t, _)| (self.rho(t), t));
        let n = self.grid.n_cells();
        for j in 0..=n {
            let u = self.face_velocity(j, rho, flow, inlet_rho).abs();
            let width = match j {
                0 => self.grid.widths[0],
                j if j == n => self.grid.widths[n - 1],
                j => self.grid.widths[j - 1].min(self.grid.widths[j]),
            };
            let courant = u * dt / width;
            if courant > 1.0 {
                return Err(PsmError::Cfl {
                    courant,
                    face: j,
                    substep: dt,
                });
            }
        }
        Ok(())
    }

    /// Friction minus gravity per unit length in cell `i` (Pa/m).
    fn cell_source(&self, i: usize, rho: f64, u: f64) -> f64 {
        self.friction[i] * rho * u * u.abs() - rho * self.gravity[i]
    }

    /// Gage pressure from the local momentum balance. `dt = None` drops inertia.
    fn pressure_march(&self, lv: &Levels<'_>, dt: Option<f64>) -> Vec<f64> {
        let n = self.grid.n_cells();
        let dz = &self.grid.widths;
        let centers = &self.grid.centers;
        let u_cell = self.cell_velocity(lv.rho, lv.flow);
        let u_cell_old = self.cell_velocity(lv.rho_old, lv.flow_old);
        // pressure drop from cell j-1 to cell j across interior face j
        let drop = |j: usize| -> f64 {
            let rho_f = 0.5 * (lv.rho[j - 1] + lv.rho[j]);
            let u_f = self.face_velocity(j, lv.rho, lv.flow, lv.inlet_rho);
            let dzc = centers[j] - centers[j - 1];
            let mut d = 0.5 * dz[j - 1] * self.cell_source(j - 1, lv.rho[j - 1], u_cell[j - 1])
                + 0.5 * dz[j] * self.cell_source(j, lv.rho[j], u_cell[j]);
            d += rho_f * u_f * (u_cell[j] - u_cell[j - 1]);
            if let Some(dt) = dt {
                let u_f_old = self.face_velocity(j, lv.rho_old, lv.flow_old, lv.inlet_rho);
                d += rho_f * (u_f - u_f_old) / dt * dzc;
            }
            d
        };
        let mut p = vec![0.0; n];
        if self.is_loop() {
            // reference pressure pinned at the pump outlet cell
            for j in 1..n {
                p[j] = p[j - 1] - drop(j);
            }
        } else {
            let last = n - 1;
            let mut d = 0.5 * dz[last] * self.cell_source(last, lv.rho[last], u_cell[last]);
            if let Some(dt) = dt {
                d += lv.rho[last] * (u_cell[last] - u_cell_old[last]) / dt * 0.5 * dz[last];
            }
            p[last] = d;
            for j in (1..n).rev() {
                p[j - 1] = p[j] + drop(j);
            }
        }
        p
    }

    /// Directly solve the discrete steady equations, then confirm the result
    /// is a fixed point of the transient scheme.
    pub fn steady_state(&self, v: &[f64]) -> Result<FieldState> {
        let guess = self.steady_guess(v)?;
        self.relax_to_steady(&guess, v)
    }

    /// Continue transient steps until the largest change per delta_t drops
    /// below 1e-8 of each field's range.
    pub fn relax_to_steady(&self, initial: &FieldState, v: &[f64]) -> Result<FieldState> {
        let mut state = initial.clone();
        let mut time = 0.0;
        let mut change = f64::INFINITY;
        while time < self.config.steady_max_time {
            let next = self.step(&state, v)?;
            change = relative_change(&state, &next);
            state = next;
            time += self.scenario.delta_t;
            if change < 1e-8 {
                return Ok(state);
            }
        }
        Err(PsmError::SteadyState {
            time,
            residual: change,
        })
    }

    fn steady_guess(&self, v: &[f64]) -> Result<FieldState> {
        let n = self.grid.n_cells();
        let dz = &self.grid.widths;
        let cp = self.scenario.fluid.cp;
        let q = self.heat(v);
        let (temp, w) = match (&self.scenario.boundary, self.inlet(v)) {
            (BoundarySpec::HeatedChannel { .. }, Some((t_in, w))) => {
                if w <= 0.0 {
                    return Err(PsmError::Config("inlet velocity must be positive".into()));
                }
                let mut temp = vec![0.0; n];
                let mut upstream = t_in;
                for i in 0..n {
                    temp[i] = upstream + q[i] * self.area[i] * dz[i] / (w * cp);
                    upstream = temp[i];
                }
                (temp, w)
            }
            (BoundarySpec::Loop { mean_temperature, .. }, _) => {
                self.steady_loop(v, *mean_temperature, &q)?
            }
            _ => unreachable!("heated channel always has an inlet"),
        };
        let rho: Vec<f64> = temp.iter().map(|&t| self.rho(t)).collect();
        let flow = vec![w; n + 1];
        let levels = Levels {
            rho: &rho,
            flow: &flow,
            rho_old: &rho,
            flow_old: &flow,
            inlet_rho: self.inlet(v).map(|(t, _)| (self.rho(t), t)),
        };
        let pressure = self.pressure_march(&levels, None);
        let velocity = self.cell_velocity(&rho, &flow);
        Ok(FieldState {
            grid_z: self.grid.centers.clone(),
            pressure,
            velocity,
            temperature: temp,
            face_mass_flow: flow,
        })
    }

    fn steady_loop(&self, v: &[f64], mean_t: f64, q: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.grid.n_cells();
        let dz = &self.grid.widths;
        let cp = self.scenario.fluid.cp;
        let head = self.pump_head(v);
        let mut temp = vec![mean_t; n];
        let mut w = 0.0;
        for _ in 0..200 {
            let rho: Vec<f64> = temp.iter().map(|&t| self.rho(t)).collect();
            let mut resistance = 0.0;
            let mut drive = head;
            for i in 0..n {
                resistance += dz[i] * self.friction[i] / (rho[i] * self.area[i] * self.area[i]);
                drive += rho[i] * self.gravity[i] * dz[i];
            }
            if resistance <= 0.0 || drive == 0.0 {
                return Err(PsmError::Config(
                    "loop has no friction or no driving head; steady flow undefined".into(),
                ));
            }
            let w_new = drive.signum() * (drive.abs() / resistance).sqrt();
            // march temperature around the loop in the flow direction
            let mut rise = vec![0.0; n];
            if w_new > 0.0 {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += q[i] * self.area[i] * dz[i] / (w_new * cp);
                    rise[i] = acc;
                }
            } else {
                let mut acc = 0.0;
                for i in (0..n).rev() {
                    acc += q[i] * self.area[i] * dz[i] / (w_new.abs() * cp);
                    rise[i] = acc;
                }
            }
            // choose the level so the mass-weighted mean matches
            let mut level = mean_t;
            for _ in 0..20 {
                let (mut m, mut mt) = (0.0, 0.0);
                for i in 0..n {
                    let t = level + rise[i];
                    let mass = self.rho(t) * self.area[i] * dz[i];
                    m += mass;
                    mt += mass * t;
                }
                level += mean_t - mt / m;
            }
            let new_temp: Vec<f64> = rise.iter().map(|r| level + r).collect();
            let change = new_temp
                .iter()
                .zip(&temp)
                .map(|(a, b)| (a - b).abs())
                .fold((w_new - w).abs() / w_new.abs().max(1e-12), f64::max);
            temp = new_temp;
            w = w_new;
            if change < 1e-13 {
                break;
            }
        }
        Ok((temp, w))
    }

    /// Loop-mean temperature weighted by mass.
    pub fn mass_weighted_mean_temperature(&self, state: &FieldState) -> f64 {
        let (mut m, mut mt) = (0.0, 0.0);
        for i in 0..self.grid.n_cells() {
            let mass = self.rho(state.temperature[i]) * self.area[i] * self.grid.widths[i];
            m += mass;
            mt += mass * state.temperature[i];
        }
        mt / m
    }

    /// Total fluid mass (kg).
    pub fn total_mass(&self, state: &FieldState) -> f64 {
        (0..self.grid.n_cells())
            .map(|i| self.rho(state.temperature[i]) * self.area[i] * self.grid.widths[i])
            .sum()
    }
}

/// Largest change between two states relative to each field's range.
fn relative_change(a: &FieldState, b: &FieldState) -> f64 {
    let pairs: [(&[f64], &[f64], f64); 3] = [
        (&a.pressure, &b.pressure, 1.0),
        (&a.velocity, &b.velocity, 1e-3),
        (&a.temperature, &b.temperature, 1.0),
    ];
    pairs
        .iter()
        .map(|(x, y, floor)| {
            let (lo, hi) = y
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let range = (hi - lo).max(*floor);
            let d = x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            d / range
        })
        .fold(0.0, f64::max)
}

/// Thomas algorithm for a tridiagonal system (`lower[0]`, `upper[n-1]` unused).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Periodic tridiagonal system: `lower[0]` couples to the last unknown and
/// `upper[n-1]` to the first (Sherman-Morrison).
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![rhs[0] / (diag[0] + lower[0] + upper[0])];
    }
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &b, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &b, upper, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}
