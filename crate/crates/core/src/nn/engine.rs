use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::{Activation, MlpSpec, ParamStore, N_TAILS};
use crate::error::{PsmError, Result};

/// Cached activations of one batched evaluation.
///
/// Tangents are stored stacked: rows `k*B..(k+1)*B` hold direction `k` for
/// the `B` samples of the batch.
#[derive(Clone, Debug)]
pub struct EvalTrace {
    batch: usize,
    n_tangents: usize,
    input: Array2<f64>,
    input_tangent: Array2<f64>,
    /// Per layer: post-activation values.
    values: Vec<Array2<f64>>,
    /// Per layer: pre-activation tangents.
    pre_tangents: Vec<Array2<f64>>,
    /// Per layer: post-activation tangents.
    tangents: Vec<Array2<f64>>,
    outputs: [usize; N_TAILS],
}

impl EvalTrace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn n_tangents(&self) -> usize {
        self.n_tangents
    }

    fn node(&self, n: usize) -> (&Array2<f64>, &Array2<f64>) {
        if n == 0 {
            (&self.input, &self.input_tangent)
        } else {
            (&self.values[n - 1], &self.tangents[n - 1])
        }
    }

    /// `B x 3` network outputs (p*, u*, T*).
    pub fn outputs(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.batch, N_TAILS));
        for (j, &n) in self.outputs.iter().enumerate() {
            out.column_mut(j).assign(&self.node(n).0.column(0));
        }
        out
    }

    /// `B x 3` directional derivatives of the outputs along tangent `k`.
    pub fn output_tangent(&self, k: usize) -> Array2<f64> {
        let b = self.batch;
        let mut out = Array2::zeros((b, N_TAILS));
        for (j, &n) in self.outputs.iter().enumerate() {
            out.column_mut(j)
                .assign(&self.node(n).1.slice(s![k * b..(k + 1) * b, 0]));
        }
        out
    }
}

/// Parameter gradient plus, optionally, gradients with respect to the inputs
/// and the input tangents.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Option<Array2<f64>>,
    pub input_tangent: Option<Array2<f64>>,
}

fn weight_view<'a>(params: &'a ParamStore, layer: usize) -> ArrayView2<'a, f64> {
    let l = &params.layers()[layer];
    ArrayView2::from_shape((l.fan_in, l.fan_out), params.weights(layer)).expect("layer view")
}

fn check_params(spec: &MlpSpec, params: &ParamStore) -> Result<()> {
    if params.len() != spec.n_params() {
        return Err(PsmError::Dimension {
            expected: spec.n_params(),
            actual: params.len(),
            context: "parameter vector",
        });
    }
    Ok(())
}

/// Evaluate a batch, carrying `input_tangent` (`K*B x input_dim`, possibly
/// empty) through the network.
pub fn trace(
    spec: &MlpSpec,
    params: &ParamStore,
    input: ArrayView2<f64>,
    input_tangent: Option<ArrayView2<f64>>,
) -> Result<EvalTrace> {
    check_params(spec, params)?;
    if input.ncols() != spec.input_dim {
        return Err(PsmError::Dimension {
            expected: spec.input_dim,
            actual: input.ncols(),
            context: "network input width",
        });
    }
    let batch = input.nrows();
    let input_tangent = match input_tangent {
        Some(t) => {
            if t.ncols() != spec.input_dim || batch == 0 || t.nrows() % batch != 0 {
                return Err(PsmError::Dimension {
                    expected: spec.input_dim,
                    actual: t.ncols(),
                    context: "input tangent shape",
                });
            }
            t.to_owned()
        }
        None => Array2::zeros((0, spec.input_dim)),
    };
    let n_tangents = if batch == 0 { 0 } else { input_tangent.nrows() / batch };
    let mut tr = EvalTrace {
        batch,
        n_tangents,
        input: input.to_owned(),
        input_tangent,
        values: Vec::new(),
        pre_tangents: Vec::new(),
        tangents: Vec::new(),
        outputs: spec.output_nodes(),
    };
    for (li, l) in params.layers().iter().enumerate() {
        let w = weight_view(params, li);
        let bias = ArrayView1::from(params.biases(li));
        let (x, xdot) = tr.node(l.source);
        let mut y = x.dot(&w);
        y += &bias;
        y.mapv_inplace(|a| l.activation.apply(a));
        let adot = xdot.dot(&w);
        let mut ydot = adot.clone();
        if l.activation == Activation::Tanh {
            for k in 0..n_tangents {
                let mut block = ydot.slice_mut(s![k * batch..(k + 1) * batch, ..]);
                ndarray::Zip::from(&mut block).and(&y).for_each(|d, &yv| *d *= 1.0 - yv * yv);
            }
        }
        tr.values.push(y);
        tr.pre_tangents.push(adot);
        tr.tangents.push(ydot);
    }
    Ok(tr)
}

/// Plain batched evaluation: `B x input_dim` in, `B x 3` out.
pub fn forward(spec: &MlpSpec, params: &ParamStore, input: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(trace(spec, params, input, None)?.outputs())
}

/// Directional derivative of the outputs along `direction` at every row.
pub fn input_jacobian(
    spec: &MlpSpec,
    params: &ParamStore,
    input: ArrayView2<f64>,
    direction: &[f64],
) -> Result<Array2<f64>> {
    if direction.len() != spec.input_dim {
        return Err(PsmError::Dimension {
            expected: spec.input_dim,
            actual: direction.len(),
            context: "jacobian direction",
        });
    }
    let dir = ArrayView1::from(direction);
    let tangent = Array2::from_shape_fn((input.nrows(), spec.input_dim), |(_, j)| dir[j]);
    Ok(trace(spec, params, input, Some(tangent.view()))?.output_tangent(0))
}

/// Reverse sweep. `grad_outputs` is dL/d(outputs) (`B x 3`);
/// `grad_output_tangents` is dL/d(output tangents) (`K*B x 3`) when the loss
/// depends on input derivatives.
pub fn backward(
    spec: &MlpSpec,
    params: &ParamStore,
    tr: &EvalTrace,
    grad_outputs: ArrayView2<f64>,
    grad_output_tangents: Option<ArrayView2<f64>>,
    want_input: bool,
) -> Result<Gradients> {
    check_params(spec, params)?;
    let b = tr.batch;
    let kb = tr.n_tangents * b;
    if grad_outputs.dim() != (b, N_TAILS) {
        return Err(PsmError::Dimension {
            expected: b * N_TAILS,
            actual: grad_outputs.len(),
            context: "loss seed must be one scalar per output",
        });
    }
    if let Some(g) = &grad_output_tangents {
        if g.dim() != (kb, N_TAILS) {
            return Err(PsmError::Dimension {
                expected: kb * N_TAILS,
                actual: g.len(),
                context: "tangent loss seed",
            });
        }
    }
    let layers = params.layers();
    let n_nodes = layers.len() + 1;
    let width = |n: usize| if n == 0 { spec.input_dim } else { layers[n - 1].fan_out };
    let mut g: Vec<Option<Array2<f64>>> = vec![None; n_nodes];
    let mut gdot: Vec<Option<Array2<f64>>> = vec![None; n_nodes];
    for (j, &n) in tr.outputs.iter().enumerate() {
        let mut seed = Array2::zeros((b, 1));
        seed.column_mut(0).assign(&grad_outputs.column(j));
        g[n] = Some(seed);
        let mut dseed = Array2::zeros((kb, 1));
        if let Some(gt) = &grad_output_tangents {
            dseed.column_mut(0).assign(&gt.column(j));
        }
        gdot[n] = Some(dseed);
    }
    let mut grad = vec![0.0; params.len()];
    for li in (0..layers.len()).rev() {
        let l = &layers[li];
        let node = li + 1;
        let gy = g[node].take().unwrap_or_else(|| Array2::zeros((b, l.fan_out)));
        let gyd = gdot[node].take().unwrap_or_else(|| Array2::zeros((kb, l.fan_out)));
        let y = &tr.values[li];
        let (ga, gad) = match l.activation {
            Activation::Identity => (gy, gyd),
            Activation::Tanh => {
                let slope = y.mapv(|v| 1.0 - v * v);
                let mut ga = &gy * &slope;
                let mut gad = gyd;
                let curv = &slope * &y.mapv(|v| -2.0 * v);
                let adot = &tr.pre_tangents[li];
                for k in 0..tr.n_tangents {
                    let rows = s![k * b..(k + 1) * b, ..];
                    let mut gblock = gad.slice_mut(rows);
                    ndarray::Zip::from(&mut ga)
                        .and(&gblock)
                        .and(&adot.slice(rows))
                        .and(&curv)
                        .for_each(|a, &gd, &ad, &c| *a += gd * ad * c);
                    gblock *= &slope;
                }
                (ga, gad)
            }
        };
        let (x, xdot) = tr.node(l.source);
        let mut gw = x.t().dot(&ga);
        if kb > 0 {
            gw += &xdot.t().dot(&gad);
        }
        grad[l.weight_offset..l.bias_offset].copy_from_slice(gw.as_slice().expect("standard layout"));
        let gb = ga.sum_axis(Axis(0));
        grad[l.bias_offset..l.bias_offset + l.fan_out].copy_from_slice(gb.as_slice().expect("contiguous"));
        if l.source != 0 || want_input {
            let w = weight_view(params, li);
            let gx = ga.dot(&w.t());
            let gxd = gad.dot(&w.t());
            let src = l.source;
            match &mut g[src] {
                Some(acc) => *acc += &gx,
                slot => *slot = Some(gx),
            }
            match &mut gdot[src] {
                Some(acc) => *acc += &gxd,
                slot => *slot = Some(gxd),
            }
        }
    }
    let (input, input_tangent) = if want_input {
        (
            Some(g[0].take().unwrap_or_else(|| Array2::zeros((b, width(0))))),
            Some(gdot[0].take().unwrap_or_else(|| Array2::zeros((kb, width(0))))),
        )
    } else {
        (None, None)
    };
    Ok(Gradients {
        params: grad,
        input,
        input_tangent,
    })
}

/// Full `3 x input_dim` Jacobian at one input row, assembled row by row from
/// reverse sweeps.
pub fn jacobian_reverse(spec: &MlpSpec, params: &ParamStore, input: &[f64]) -> Result<Array2<f64>> {
    let x = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|_| PsmError::Config("input row".into()))?;
    let tr = trace(spec, params, x, None)?;
    let mut jac = Array2::zeros((N_TAILS, spec.input_dim));
    for j in 0..N_TAILS {
        let mut seed = Array2::zeros((1, N_TAILS));
        seed[[0, j]] = 1.0;
        let gr = backward(spec, params, &tr, seed.view(), None, true)?;
        jac.row_mut(j).assign(&gr.input.expect("requested").row(0));
    }
    Ok(jac)
}
