//! Shared domain types for 1D single-phase transport rigs.
//!
//! A [`ScenarioConfig`] fully describes one rig: the ordered pipe segments,
//! the fluid closures, which boundary conditions are driven by which control
//! channel, the sensor stations and the measurement interval. Everything is
//! in SI units with temperatures in Kelvin.

mod grid;
pub mod presets;
mod scaling;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PsmError, Result};

pub use grid::{build_grid, Grid};
pub use scaling::{Field, FieldRange, ScalingSpec};

/// Offset between Kelvin and Celsius.
pub const KELVIN_OFFSET: f64 = 273.15;

/// Affine density and constant specific heat closure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// Density intercept (kg/m³).
    pub rho_a: f64,
    /// Density slope (kg/m³/K); density = rho_a - rho_b * T.
    pub rho_b: f64,
    /// Specific heat (J/kg/K).
    pub cp: f64,
}

impl FluidProps {
    /// LiF-BeF2 molten salt.
    pub fn flibe() -> Self {
        Self {
            rho_a: 2413.0,
            rho_b: 0.488,
            cp: 2414.0,
        }
    }

    pub fn density(&self, temperature: f64) -> f64 {
        density(self, temperature)
    }

    /// Temperature at which the closure yields `rho`.
    pub fn temperature_for_density(&self, rho: f64) -> f64 {
        (self.rho_a - rho) / self.rho_b
    }

    pub fn validate(&self, t_min: f64, t_max: f64) -> Result<()> {
        if !(self.rho_a > 0.0) || !(self.cp > 0.0) {
            return Err(PsmError::Config(format!(
                "fluid closures require rho_a > 0 and cp > 0 (got {}, {})",
                self.rho_a, self.cp
            )));
        }
        if self.density(t_min) <= 0.0 || self.density(t_max) <= 0.0 {
            return Err(PsmError::Config(format!(
                "density becomes non-positive within [{t_min}, {t_max}] K"
            )));
        }
        Ok(())
    }
}

/// rho_a - rho_b * T.
pub fn density(props: &FluidProps, temperature: f64) -> f64 {
    props.rho_a - props.rho_b * temperature
}

/// Volumetric heat attached to a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeatSource {
    /// Fixed q''' (W/m³).
    Constant { q: f64 },
    /// q''' = gain * v[channel]; a gain of -1 ties a sink to its source.
    Control { channel: usize, gain: f64 },
}

fn default_friction() -> f64 {
    0.001
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipeSegment {
    pub name: String,
    /// m
    pub length: f64,
    /// m²
    pub flow_area: f64,
    /// m
    pub hydraulic_diameter: f64,
    pub n_elements: usize,
    /// Darcy friction factor.
    #[serde(default = "default_friction")]
    pub friction_factor: f64,
    #[serde(default)]
    pub heat_source: Option<HeatSource>,
    /// Gravity component along the flow axis (m/s²).
    #[serde(default)]
    pub gravity_component: f64,
}

impl PipeSegment {
    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: &str| {
            Err(PsmError::Config(format!(
                "segment {index} (`{}`): {what}",
                self.name
            )))
        };
        if !(self.length > 0.0) {
            return bad("length must be positive");
        }
        if !(self.flow_area > 0.0) {
            return bad("flow area must be positive");
        }
        if !(self.hydraulic_diameter > 0.0) {
            return bad("hydraulic diameter must be positive");
        }
        if self.n_elements == 0 {
            return bad("needs at least one element");
        }
        if !(self.friction_factor >= 0.0) {
            return bad("friction factor must be non-negative");
        }
        Ok(())
    }
}

/// Which boundary conditions the control channels drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Dirichlet u and T at the inlet, fixed absolute pressure at the outlet.
    HeatedChannel {
        outlet_pressure: f64,
        inlet_velocity_channel: usize,
        inlet_temperature_channel: usize,
    },
    /// Closed loop with an ideal pump jump at z = 0 (= total length) and a
    /// reference pressure pinned at the pump outlet.
    Loop {
        pump_channel: usize,
        reference_pressure: f64,
        /// Mass-weighted mean temperature used to fix the steady level (K).
        mean_temperature: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    HeatedChannel,
    Loop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlChannel {
    pub name: String,
    pub unit: String,
    pub min: f64,
    pub max: f64,
}

impl ControlChannel {
    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub fluid: FluidProps,
    pub boundary: BoundarySpec,
    pub controls: Vec<ControlChannel>,
    /// Positions (m) carrying (p, u, T) sensors, ascending.
    pub sensor_stations: Vec<f64>,
    /// Control and measurement interval (s).
    pub delta_t: f64,
    /// s
    pub episode_duration: f64,
    pub segments: Vec<PipeSegment>,
}

impl ScenarioConfig {
    pub fn kind(&self) -> ScenarioKind {
        match self.boundary {
            BoundarySpec::HeatedChannel { .. } => ScenarioKind::HeatedChannel,
            BoundarySpec::Loop { .. } => ScenarioKind::Loop,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_stations(&self) -> usize {
        self.sensor_stations.len()
    }

    /// Number of entries in the sensor-state vector (3 fields per station).
    pub fn state_dim(&self) -> usize {
        3 * self.n_stations()
    }

    /// Steps per episode.
    pub fn episode_steps(&self) -> usize {
        (self.episode_duration / self.delta_t).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(PsmError::Config("scenario has no segments".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate(i)?;
            if let Some(HeatSource::Control { channel, .. }) = seg.heat_source {
                self.check_channel(channel, "heat source")?;
            }
        }
        if !(self.delta_t > 0.0) {
            return Err(PsmError::Config("delta_t must be positive".into()));
        }
        if !(self.episode_duration >= 0.0) {
            return Err(PsmError::Config("episode_duration must be non-negative".into()));
        }
        for ch in &self.controls {
            if !(ch.min < ch.max) {
                return Err(PsmError::Config(format!(
                    "control `{}` needs min < max (got {} .. {})",
                    ch.name, ch.min, ch.max
                )));
            }
        }
        let length = self.total_length();
        if self.sensor_stations.is_empty() {
            return Err(PsmError::Config("at least one sensor station is required".into()));
        }
        for w in self.sensor_stations.windows(2) {
            if !(w[1] > w[0]) {
                return Err(PsmError::Config("sensor stations must be strictly increasing".into()));
            }
        }
        for &z in &self.sensor_stations {
            if !(0.0..=length).contains(&z) {
                return Err(PsmError::Config(format!(
                    "sensor station z = {z} lies outside [0, {length}]"
                )));
            }
        }
        match self.boundary {
            BoundarySpec::HeatedChannel {
                inlet_velocity_channel,
                inlet_temperature_channel,
                ..
            } => {
                self.check_channel(inlet_velocity_channel, "inlet velocity")?;
                self.check_channel(inlet_temperature_channel, "inlet temperature")?;
                let ch = &self.controls[inlet_temperature_channel];
                self.fluid.validate(ch.min, ch.max)?;
            }
            BoundarySpec::Loop {
                pump_channel,
                mean_temperature,
                ..
            } => {
                self.check_channel(pump_channel, "pump")?;
                self.fluid.validate(mean_temperature, mean_temperature)?;
            }
        }
        Ok(())
    }

    fn check_channel(&self, channel: usize, what: &str) -> Result<()> {
        if channel >= self.controls.len() {
            return Err(PsmError::Config(format!(
                "{what} refers to control channel {channel}, but only {} exist",
                self.controls.len()
            )));
        }
        Ok(())
    }

    /// Index of the segment containing `z`; the right end belongs to the last segment.
    pub fn segment_at(&self, z: f64) -> usize {
        let mut start = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.length;
            if z < end {
                return i;
            }
            start = end;
        }
        self.segments.len() - 1
    }

    /// Start position of each segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut starts = Vec::with_capacity(self.segments.len());
        let mut z = 0.0;
        for seg in &self.segments {
            starts.push(z);
            z += seg.length;
        }
        starts
    }

    /// q''' (W/m³) in `segment` under control vector `v` (physical units).
    pub fn volumetric_heat(&self, segment: usize, v: &[f64]) -> f64 {
        match self.segments[segment].heat_source {
            None => 0.0,
            Some(HeatSource::Constant { q }) => q,
            Some(HeatSource::Control { channel, gain }) => gain * v[channel],
        }
    }

    /// Clamp a control vector into the admissible ranges.
    pub fn clamp_controls(&self, v: &mut [f64]) {
        for (x, ch) in v.iter_mut().zip(&self.controls) {
            *x = x.clamp(ch.min, ch.max);
        }
    }

    /// Midpoint of every control range.
    pub fn nominal_controls(&self) -> Vec<f64> {
        self.controls.iter().map(|c| 0.5 * (c.min + c.max)).collect()
    }

    /// Content hash of the configuration (first 8 bytes of SHA-256 of its JSON form).
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&json);
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PsmError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Pressure, velocity and temperature over the cell centers at one instant.
///
/// Pressure is gage pressure relative to the scenario reference (outlet
/// pressure for the heated channel, loop pressure for the loop). Velocity is
/// the cell value `G / rho`; the staggered face mass flow rates are carried
/// alongside so a state can be stepped forward without loss.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub grid_z: Vec<f64>,
    /// Pa (gage)
    pub pressure: Vec<f64>,
    /// m/s
    pub velocity: Vec<f64>,
    /// K
    pub temperature: Vec<f64>,
    /// Mass flow rate (kg/s) at the cell faces; one more entry than cells.
    pub face_mass_flow: Vec<f64>,
}

impl FieldState {
    pub fn len(&self) -> usize {
        self.grid_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_z.is_empty()
    }

    pub fn field(&self, field: Field) -> &[f64] {
        match field {
            Field::Pressure => &self.pressure,
            Field::Velocity => &self.velocity,
            Field::Temperature => &self.temperature,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid_z.len();
        for (len, ctx) in [
            (self.pressure.len(), "pressure"),
            (self.velocity.len(), "velocity"),
            (self.temperature.len(), "temperature"),
        ] {
            if len != n {
                return Err(PsmError::Dimension {
                    expected: n,
                    actual: len,
                    context: ctx,
                });
            }
        }
        if self.face_mass_flow.len() != n + 1 {
            return Err(PsmError::Dimension {
                expected: n + 1,
                actual: self.face_mass_flow.len(),
                context: "face mass flow",
            });
        }
        if self.grid_z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PsmError::Config("grid_z must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Linear interpolation of `field` at `z`, clamped to the end cells.
    pub fn interpolate(&self, field: Field, z: f64) -> f64 {
        interpolate(&self.grid_z, self.field(field), z)
    }

    /// Sensor readout in field-major order: p at every station, then u, then T.
    pub fn sensor_readout(&self, stations: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * stations.len());
        for field in Field::ALL {
            for &z in stations {
                out.push(self.interpolate(field, z));
            }
        }
        out
    }
}

/// Piecewise-linear interpolation over ascending `xs`, constant beyond the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}
