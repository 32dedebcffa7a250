use rand::Rng;

use super::params::{Manifest, ParamVector};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Real};

pub const MLP_KIND: &str = "mlp";

/// Fully connected network: ReLU on hidden layers, linear output.
///
/// Parameters are stored flat, layer by layer, as a row-major `out x in`
/// weight block followed by the `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    params: ParamVector<T>,
}

/// Loss applied to the network output for a batch.
#[derive(Clone, Debug)]
pub enum LossSpec<T> {
    /// Mean over the batch of the summed squared error against full targets.
    Mse { targets: Vec<T> },
    /// Squared error on one selected output per row (the TD loss).
    SelectedAction { actions: Vec<usize>, targets: Vec<T> },
}

/// Per-layer activations retained by a batched forward pass.
pub struct ForwardTrace<T> {
    rows: usize,
    acts: Vec<Vec<T>>,
}

impl<T> ForwardTrace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let manifest = Manifest::new(MLP_KIND, dims.to_vec());
        Ok(Self {
            dims: dims.to_vec(),
            params: ParamVector::zeros(param_count(dims), manifest),
        })
    }

    /// He-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let block = &mut net.params.as_mut_slice()[offset..offset + fan_in * fan_out];
            for v in block.iter_mut() {
                *v = T::lit(rng.random_range(-limit..limit));
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(params: ParamVector<T>) -> Result<Self> {
        let m = params.manifest();
        if m.kind != MLP_KIND {
            return Err(Error::invalid(format!("expected mlp manifest, got {}", m.kind)));
        }
        validate_dims(&m.dims)?;
        let expected = param_count(&m.dims);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            dims: m.dims.clone(),
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector<T> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &ParamVector<T>) -> Result<()> {
        if !params.same_shape(&self.params) {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params.as_mut_slice().copy_from_slice(params.as_slice());
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let p = self.params.as_slice();
        let layers = self.dims.len() - 1;
        let mut x = input.to_vec();
        let mut offset = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fin, fout) = (w[0], w[1]);
            let weights = &p[offset..offset + fin * fout];
            let bias = &p[offset + fin * fout..offset + fin * fout + fout];
            let mut y: Vec<T> = (0..fout)
                .map(|j| dot(&weights[j * fin..(j + 1) * fin], &x) + bias[j])
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            x = y;
            offset += fin * fout + fout;
        }
        Ok(x)
    }

    /// Batched forward pass over `inputs` laid out row-major (`rows x input_dim`).
    pub fn forward_batch(&self, inputs: &[T]) -> Result<ForwardTrace<T>> {
        let fin0 = self.input_dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(fin0) {
            return Err(Error::DimensionMismatch {
                expected: fin0,
                actual: inputs.len(),
            });
        }
        let rows = inputs.len() / fin0;
        let p = self.params.as_slice();
        let layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(inputs.to_vec());
        let mut offset = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fin, fout) = (w[0], w[1]);
            let weights = &p[offset..offset + fin * fout];
            let bias = &p[offset + fin * fout..offset + fin * fout + fout];
            let x = &acts[l];
            let mut y = vec![T::zero(); rows * fout];
            for r in 0..rows {
                let xr = &x[r * fin..(r + 1) * fin];
                let yr = &mut y[r * fout..(r + 1) * fout];
                for j in 0..fout {
                    let v = dot(&weights[j * fin..(j + 1) * fin], xr) + bias[j];
                    yr[j] = if l + 1 < layers { v.max(T::zero()) } else { v };
                }
            }
            acts.push(y);
            offset += fin * fout + fout;
        }
        Ok(ForwardTrace { rows, acts })
    }

    /// Backpropagates `dout` (gradient of the loss w.r.t. the batch output,
    /// already scaled by any batch-mean factor) through a retained trace.
    pub fn backward_trace(&self, trace: &ForwardTrace<T>, dout: &[T]) -> ParamVector<T> {
        let rows = trace.rows;
        let p = self.params.as_slice();
        let mut grad = ParamVector::zeros(self.params.len(), self.params.manifest().clone());
        let g = grad.as_mut_slice();

        let mut offsets = Vec::with_capacity(self.dims.len() - 1);
        let mut o = 0;
        for w in self.dims.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }

        let mut delta = dout.to_vec();
        for l in (0..self.dims.len() - 1).rev() {
            let (fin, fout) = (self.dims[l], self.dims[l + 1]);
            let off = offsets[l];
            let x = &trace.acts[l];
            {
                let (gw, gb) = g[off..off + fin * fout + fout].split_at_mut(fin * fout);
                for r in 0..rows {
                    let xr = &x[r * fin..(r + 1) * fin];
                    let dr = &delta[r * fout..(r + 1) * fout];
                    for j in 0..fout {
                        if dr[j] != T::zero() {
                            axpy(dr[j], xr, &mut gw[j * fin..(j + 1) * fin]);
                        }
                        gb[j] += dr[j];
                    }
                }
            }
            if l == 0 {
                break;
            }
            let weights = &p[off..off + fin * fout];
            let mut prev = vec![T::zero(); rows * fin];
            for r in 0..rows {
                let dr = &delta[r * fout..(r + 1) * fout];
                let pr = &mut prev[r * fin..(r + 1) * fin];
                for j in 0..fout {
                    if dr[j] != T::zero() {
                        axpy(dr[j], &weights[j * fin..(j + 1) * fin], pr);
                    }
                }
                // ReLU derivative of the hidden activation feeding this layer.
                let act = &x[r * fin..(r + 1) * fin];
                for (d, &a) in pr.iter_mut().zip(act) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            delta = prev;
        }
        grad
    }

    /// Mean loss over the batch and its gradient.
    pub fn loss_and_grad(&self, inputs: &[T], loss: &LossSpec<T>) -> Result<(T, ParamVector<T>)> {
        let trace = self.forward_batch(inputs)?;
        let rows = trace.rows;
        let out_dim = self.output_dim();
        let out = trace.output();
        let n = T::from_usize_lossy(rows);
        let two = T::lit(2.0);
        let mut dout = vec![T::zero(); out.len()];
        let mut total = T::zero();
        match loss {
            LossSpec::Mse { targets } => {
                if targets.len() != out.len() {
                    return Err(Error::DimensionMismatch {
                        expected: out.len(),
                        actual: targets.len(),
                    });
                }
                for i in 0..out.len() {
                    let e = out[i] - targets[i];
                    total += e * e;
                    dout[i] = two * e / n;
                }
            }
            LossSpec::SelectedAction { actions, targets } => {
                if actions.len() != rows || targets.len() != rows {
                    return Err(Error::DimensionMismatch {
                        expected: rows,
                        actual: actions.len().min(targets.len()),
                    });
                }
                for r in 0..rows {
                    let a = actions[r];
                    if a >= out_dim {
                        return Err(Error::InvalidAction(format!("action {a} >= {out_dim}")));
                    }
                    let e = out[r * out_dim + a] - targets[r];
                    total += e * e;
                    dout[r * out_dim + a] = two * e / n;
                }
            }
        }
        Ok((total / n, self.backward_trace(&trace, &dout)))
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid(format!("bad layer dims {dims:?}")));
    }
    Ok(())
}

/// Forward pass of an MLP described by a parameter vector.
pub fn forward_mlp<T: Real>(params: &ParamVector<T>, input: &[T]) -> Result<Vec<T>> {
    Mlp::from_params(params.clone())?.forward(input)
}

/// Gradient of the mean batch loss with respect to `params`.
pub fn backward<T: Real>(params: &ParamVector<T>, inputs: &[T], loss: &LossSpec<T>) -> Result<ParamVector<T>> {
    if inputs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    Ok(Mlp::from_params(params.clone())?.loss_and_grad(inputs, loss)?.1)
}
