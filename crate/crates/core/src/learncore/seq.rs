//! Token-sequence classifier: embedding, one gated recurrent layer and a
//! softmax head over the vocabulary. Predicts the token that follows a window.

use rand::Rng;

use super::gru::{GruShape, GruStepCache};
use super::params::{Manifest, ParamVector};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Real};

pub const SEQ_KIND: &str = "gru-forecaster";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeqDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl SeqDims {
    fn gru(&self) -> GruShape {
        GruShape {
            input: self.embed,
            hidden: self.hidden,
        }
    }

    fn emb_len(&self) -> usize {
        self.vocab * self.embed
    }

    fn gru_offset(&self) -> usize {
        self.emb_len()
    }

    fn head_offset(&self) -> usize {
        self.gru_offset() + self.gru().param_count()
    }

    pub fn param_count(&self) -> usize {
        self.head_offset() + self.vocab * self.hidden + self.vocab
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel<T> {
    dims: SeqDims,
    params: ParamVector<T>,
}

impl<T: Real> SequenceModel<T> {
    /// Random embedding and recurrent weights; the output head starts at zero
    /// so an untrained model predicts the uniform distribution.
    pub fn new<R: Rng + ?Sized>(dims: SeqDims, window: usize, rng: &mut R) -> Result<Self> {
        if dims.vocab == 0 || dims.embed == 0 || dims.hidden == 0 {
            return Err(Error::invalid(format!("bad sequence model dims {dims:?}")));
        }
        let mut manifest = Manifest::new(SEQ_KIND, vec![dims.vocab, dims.embed, dims.hidden]);
        manifest.window = Some(window);
        let mut params = ParamVector::zeros(dims.param_count(), manifest);
        let p = params.as_mut_slice();
        for v in &mut p[..dims.emb_len()] {
            *v = T::lit(rng.random_range(-0.5..0.5));
        }
        let limit = 1.0 / (dims.hidden as f64).sqrt();
        let gru = dims.gru();
        let weights_end = dims.gru_offset() + 3 * gru.hidden * (gru.input + gru.hidden);
        for v in &mut p[dims.gru_offset()..weights_end] {
            *v = T::lit(rng.random_range(-limit..limit));
        }
        Ok(Self { dims, params })
    }

    pub fn from_params(params: ParamVector<T>) -> Result<Self> {
        let m = params.manifest();
        if m.kind != SEQ_KIND || m.dims.len() != 3 {
            return Err(Error::invalid(format!("expected {SEQ_KIND} manifest, got {}", m.kind)));
        }
        let dims = SeqDims {
            vocab: m.dims[0],
            embed: m.dims[1],
            hidden: m.dims[2],
        };
        if params.len() != dims.param_count() {
            return Err(Error::DimensionMismatch {
                expected: dims.param_count(),
                actual: params.len(),
            });
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> SeqDims {
        self.dims
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector<T> {
        &mut self.params
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Empty("token window"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.dims.vocab) {
            return Err(Error::invalid(format!("token {bad} outside vocabulary {}", self.dims.vocab)));
        }
        Ok(())
    }

    fn run(&self, tokens: &[usize]) -> (Vec<T>, Vec<GruStepCache<T>>) {
        let d = self.dims;
        let p = self.params.as_slice();
        let gru = d.gru();
        let cell = &p[d.gru_offset()..d.head_offset()];
        let mut h = vec![T::zero(); d.hidden];
        let mut caches = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let x = &p[t * d.embed..(t + 1) * d.embed];
            let (hn, cache) = gru.step(cell, x, &h);
            caches.push(cache);
            h = hn;
        }
        (h, caches)
    }

    fn logits(&self, h: &[T]) -> Vec<T> {
        let d = self.dims;
        let p = self.params.as_slice();
        let w = &p[d.head_offset()..d.head_offset() + d.vocab * d.hidden];
        let b = &p[d.head_offset() + d.vocab * d.hidden..];
        (0..d.vocab)
            .map(|v| dot(&w[v * d.hidden..(v + 1) * d.hidden], h) + b[v])
            .collect()
    }

    /// Zero recurrent state, the starting point for [`Self::advance`].
    pub fn initial_state(&self) -> Vec<T> {
        vec![T::zero(); self.dims.hidden]
    }

    /// Feeds one token into a running recurrent state.
    pub fn advance(&self, h: &[T], token: usize) -> Result<Vec<T>> {
        self.check_tokens(&[token])?;
        if h.len() != self.dims.hidden {
            return Err(Error::DimensionMismatch {
                expected: self.dims.hidden,
                actual: h.len(),
            });
        }
        let d = self.dims;
        let p = self.params.as_slice();
        let x = &p[token * d.embed..(token + 1) * d.embed];
        Ok(d.gru().step(&p[d.gru_offset()..d.head_offset()], x, h).0)
    }

    /// Next-token distribution for a recurrent state.
    pub fn distribution(&self, h: &[T]) -> Vec<T> {
        softmax(&self.logits(h))
    }

    /// Output-layer bias, one entry per token.
    pub fn head_bias_mut(&mut self) -> &mut [T] {
        let start = self.dims.head_offset() + self.dims.vocab * self.dims.hidden;
        &mut self.params.as_mut_slice()[start..]
    }

    /// Probability of each token following `tokens`.
    pub fn predict(&self, tokens: &[usize]) -> Result<Vec<T>> {
        self.check_tokens(tokens)?;
        let (h, _) = self.run(tokens);
        Ok(softmax(&self.logits(&h)))
    }

    /// Mean cross-entropy of `targets[i]` given `windows[i]`.
    pub fn loss(&self, windows: &[&[usize]], targets: &[usize]) -> Result<T> {
        if windows.is_empty() || windows.len() != targets.len() {
            return Err(Error::Empty("training windows"));
        }
        let mut total = T::zero();
        for (w, &t) in windows.iter().zip(targets) {
            let probs = self.predict(w)?;
            total += -probs[t].max(T::min_positive_value()).ln();
        }
        Ok(total / T::from_usize_lossy(windows.len()))
    }

    /// Mean cross-entropy and its gradient over a batch of windows.
    pub fn loss_and_grad(&self, windows: &[&[usize]], targets: &[usize]) -> Result<(T, ParamVector<T>)> {
        if windows.is_empty() || windows.len() != targets.len() {
            return Err(Error::Empty("training windows"));
        }
        let d = self.dims;
        let gru = d.gru();
        let p = self.params.as_slice();
        let mut grad = ParamVector::zeros(self.params.len(), self.params.manifest().clone());
        let inv_n = T::one() / T::from_usize_lossy(windows.len());
        let mut total = T::zero();
        let head = d.head_offset();
        let head_w = &p[head..head + d.vocab * d.hidden];
        for (w, &target) in windows.iter().zip(targets) {
            self.check_tokens(w)?;
            if target >= d.vocab {
                return Err(Error::invalid(format!("target {target} outside vocabulary")));
            }
            let (h, caches) = self.run(w);
            let probs = softmax(&self.logits(&h));
            total += -probs[target].max(T::min_positive_value()).ln();

            let g = grad.as_mut_slice();
            let mut dh = vec![T::zero(); d.hidden];
            for v in 0..d.vocab {
                let mut dl = probs[v];
                if v == target {
                    dl -= T::one();
                }
                let dl = dl * inv_n;
                if dl == T::zero() {
                    continue;
                }
                axpy(dl, &h, &mut g[head + v * d.hidden..head + (v + 1) * d.hidden]);
                g[head + d.vocab * d.hidden + v] += dl;
                axpy(dl, &head_w[v * d.hidden..(v + 1) * d.hidden], &mut dh);
            }
            let cell = &p[d.gru_offset()..head];
            for (cache, &tok) in caches.iter().zip(w.iter()).rev() {
                let (gemb, gcell) = g.split_at_mut(d.gru_offset());
                let (dx, dprev) = gru.step_backward(cell, cache, &dh, &mut gcell[..gru.param_count()]);
                axpy(T::one(), &dx, &mut gemb[tok * d.embed..(tok + 1) * d.embed]);
                dh = dprev;
            }
        }
        Ok((total * inv_n, grad))
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        let u = T::one() / T::from_usize_lossy(logits.len().max(1));
        return vec![u; logits.len()];
    }
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}
