//! Dense network engine with forward-mode input tangents carried through a
//! reverse sweep, so losses built from input derivatives can still be
//! differentiated with respect to the parameters.
//!
//! Topology: `input -> head (3 x s_H) -> intermediate (s_I) -> 3 tails`, each
//! tail being one hidden layer of width `s_T` followed by a scalar output.
//! Tails produce, in order, pressure, velocity and temperature.

mod adam;
mod checkpoint;
mod engine;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use engine::{backward, forward, input_jacobian, jacobian_reverse, trace, EvalTrace, Gradients};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PsmError, Result};

pub const HEAD_LAYERS: usize = 3;
pub const N_TAILS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }
}

/// Network shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub head_width: usize,
    pub intermediate_width: usize,
    pub tail_width: usize,
    #[serde(default = "default_activation")]
    pub hidden_activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Tanh
}

/// One dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerDesc {
    /// Node feeding this layer; node 0 is the network input and node
    /// `l + 1` is the output of layer `l`.
    pub source: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    /// Offset of the row-major `fan_in x fan_out` weight block.
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpSpec {
    /// Network for `n_controls` inputs and a `state_dim`-entry initial state.
    pub fn for_problem(n_controls: usize, state_dim: usize, widths: (usize, usize, usize)) -> Self {
        Self {
            input_dim: 2 + n_controls + state_dim,
            head_width: widths.0,
            intermediate_width: widths.1,
            tail_width: widths.2,
            hidden_activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.head_width == 0 || self.intermediate_width == 0 || self.tail_width == 0 {
            return Err(PsmError::Config(format!("network widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<LayerDesc> {
        let act = self.hidden_activation;
        let mut shapes = Vec::new();
        let mut fan_in = self.input_dim;
        for l in 0..HEAD_LAYERS {
            shapes.push((l, fan_in, self.head_width, act));
            fan_in = self.head_width;
        }
        shapes.push((HEAD_LAYERS, self.head_width, self.intermediate_width, act));
        let trunk = HEAD_LAYERS + 1;
        for tail in 0..N_TAILS {
            let hidden = trunk + 2 * tail;
            shapes.push((trunk, self.intermediate_width, self.tail_width, act));
            shapes.push((hidden + 1, self.tail_width, 1, Activation::Identity));
        }
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(source, fan_in, fan_out, activation)| {
                let weight_offset = offset;
                let bias_offset = offset + fan_in * fan_out;
                offset = bias_offset + fan_out;
                LayerDesc {
                    source,
                    fan_in,
                    fan_out,
                    activation,
                    weight_offset,
                    bias_offset,
                }
            })
            .collect()
    }

    /// Node indices holding the p, u and T outputs.
    pub fn output_nodes(&self) -> [usize; N_TAILS] {
        let last_trunk = HEAD_LAYERS + 1;
        std::array::from_fn(|tail| last_trunk + 2 * tail + 2)
    }

    pub fn n_params(&self) -> usize {
        self.layers().last().map_or(0, |l| l.bias_offset + l.fan_out)
    }

    /// First eight bytes of the SHA-256 of the JSON form.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

/// Flat parameter vector with per-layer views.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    layers: Vec<LayerDesc>,
}

impl ParamStore {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            values: vec![0.0; spec.n_params()],
            layers: spec.layers(),
        }
    }

    pub fn from_values(spec: &MlpSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.n_params() {
            return Err(PsmError::Dimension {
                expected: spec.n_params(),
                actual: values.len(),
                context: "parameter vector",
            });
        }
        Ok(Self {
            values,
            layers: spec.layers(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layers(&self) -> &[LayerDesc] {
        &self.layers
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.values[l.weight_offset..l.bias_offset]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.values[l.bias_offset..l.bias_offset + l.fan_out]
    }
}

/// Uniform weights on ±sqrt(3 / fan_in), so each weight has variance
/// 1 / fan_in; biases start at zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<ParamStore> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::zeros(spec);
    for l in spec.layers() {
        let bound = (3.0 / l.fan_in as f64).sqrt();
        for w in &mut store.values[l.weight_offset..l.bias_offset] {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> MlpSpec {
        MlpSpec::for_problem(2, 18, (16, 8, 8))
    }

    #[test]
    fn views_tile_the_parameter_vector() {
        let s = spec();
        let mut covered = vec![0u8; s.n_params()];
        for l in s.layers() {
            for c in &mut covered[l.weight_offset..l.bias_offset + l.fan_out] {
                *c += 1;
            }
            assert_eq!(l.bias_offset - l.weight_offset, l.fan_in * l.fan_out);
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!(s.layers().len(), HEAD_LAYERS + 1 + 2 * N_TAILS);
        assert_eq!(s.output_nodes(), [6, 8, 10]);
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let s = spec();
        let a = init_params(&s, 3).unwrap();
        assert_eq!(a, init_params(&s, 3).unwrap());
        assert_ne!(a, init_params(&s, 4).unwrap());
        for l in 0..a.layers().len() {
            assert!(a.biases(l).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn weight_variance_matches_fan_in() {
        let s = MlpSpec::for_problem(2, 18, (200, 100, 100));
        let p = init_params(&s, 1).unwrap();
        // second head layer: 200 x 200
        let w = p.weights(1);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 1.0 / 200.0;
        assert!((var / target - 1.0).abs() < 0.2, "var {var} target {target}");
    }

    #[test]
    fn fingerprint_tracks_shape() {
        let a = spec();
        let mut b = spec();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.tail_width = 9;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn zero_width_rejected() {
        let mut s = spec();
        s.head_width = 0;
        assert!(init_params(&s, 0).is_err());
    }
}
