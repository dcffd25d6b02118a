use serde::{Deserialize, Serialize};

use super::FieldState;
use crate::error::{PsmError, Result};

/// The three transported fields, in the order used by every state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Pressure,
    Velocity,
    Temperature,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Pressure, Field::Velocity, Field::Temperature];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Pressure => "p",
            Field::Velocity => "u",
            Field::Temperature => "T",
        }
    }
}

/// Closed interval used for min-max scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRange {
    pub min: f64,
    pub max: f64,
}

impl FieldRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    /// Smallest range covering `values`, widened by `margin` of its span on each side.
    pub fn covering(values: impl IntoIterator<Item = f64>, margin: f64) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
        let pad = margin * (hi - lo);
        Self::new(lo - pad, hi + pad)
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.max > self.min) {
            return Err(PsmError::DegenerateRange {
                field: name.to_string(),
                value: self.min,
            });
        }
        Ok(())
    }
}

/// Min-max scaling constants for network inputs and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    /// Path length (m).
    pub z_max: f64,
    /// Measurement interval (s).
    pub t_max: f64,
    pub pressure: FieldRange,
    pub velocity: FieldRange,
    pub temperature: FieldRange,
    pub density: FieldRange,
    /// One range per control channel.
    pub controls: Vec<FieldRange>,
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_max > 0.0) {
            return Err(PsmError::DegenerateRange {
                field: "z".into(),
                value: self.z_max,
            });
        }
        if !(self.t_max > 0.0) {
            return Err(PsmError::DegenerateRange {
                field: "t".into(),
                value: self.t_max,
            });
        }
        self.pressure.check("p")?;
        self.velocity.check("u")?;
        self.temperature.check("T")?;
        self.density.check("rho")?;
        for (i, r) in self.controls.iter().enumerate() {
            r.check(&format!("v{i}"))?;
        }
        Ok(())
    }

    pub fn range(&self, field: Field) -> &FieldRange {
        match field {
            Field::Pressure => &self.pressure,
            Field::Velocity => &self.velocity,
            Field::Temperature => &self.temperature,
        }
    }

    pub fn scale_z(&self, z: f64) -> f64 {
        z / self.z_max
    }

    pub fn unscale_z(&self, z: f64) -> f64 {
        z * self.z_max
    }

    pub fn scale_t(&self, t: f64) -> f64 {
        t / self.t_max
    }

    pub fn unscale_t(&self, t: f64) -> f64 {
        t * self.t_max
    }

    pub fn scale_field(&self, field: Field, x: f64) -> f64 {
        self.range(field).scale(x)
    }

    pub fn unscale_field(&self, field: Field, s: f64) -> f64 {
        self.range(field).unscale(s)
    }

    pub fn scale_density(&self, rho: f64) -> f64 {
        self.density.scale(rho)
    }

    pub fn unscale_density(&self, s: f64) -> f64 {
        self.density.unscale(s)
    }

    /// Scale a field-major sensor vector (p block, u block, T block).
    pub fn scale_sensor_vector(&self, x: &[f64]) -> Vec<f64> {
        self.map_sensor_vector(x, |r, v| r.scale(v))
    }

    pub fn unscale_sensor_vector(&self, x: &[f64]) -> Vec<f64> {
        self.map_sensor_vector(x, |r, v| r.unscale(v))
    }

    fn map_sensor_vector(&self, x: &[f64], f: impl Fn(&FieldRange, f64) -> f64) -> Vec<f64> {
        let n = x.len() / 3;
        x.iter()
            .enumerate()
            .map(|(i, &v)| f(self.range(Field::ALL[i / n]), v))
            .collect()
    }

    pub fn scale_controls(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.controls).map(|(&x, r)| r.scale(x)).collect()
    }

    pub fn unscale_controls(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.controls).map(|(&x, r)| r.unscale(x)).collect()
    }

    /// Scale every field of a state; face fluxes are dropped.
    pub fn scale_state(&self, state: &FieldState) -> ScaledState {
        ScaledState {
            z: state.grid_z.iter().map(|&z| self.scale_z(z)).collect(),
            pressure: state.pressure.iter().map(|&x| self.pressure.scale(x)).collect(),
            velocity: state.velocity.iter().map(|&x| self.velocity.scale(x)).collect(),
            temperature: state
                .temperature
                .iter()
                .map(|&x| self.temperature.scale(x))
                .collect(),
        }
    }

    pub fn unscale_state(&self, scaled: &ScaledState) -> ScaledState {
        ScaledState {
            z: scaled.z.iter().map(|&z| self.unscale_z(z)).collect(),
            pressure: scaled.pressure.iter().map(|&x| self.pressure.unscale(x)).collect(),
            velocity: scaled.velocity.iter().map(|&x| self.velocity.unscale(x)).collect(),
            temperature: scaled
                .temperature
                .iter()
                .map(|&x| self.temperature.unscale(x))
                .collect(),
        }
    }
}

/// Plain field arrays without the solver's face fluxes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledState {
    pub z: Vec<f64>,
    pub pressure: Vec<f64>,
    pub velocity: Vec<f64>,
    pub temperature: Vec<f64>,
}
