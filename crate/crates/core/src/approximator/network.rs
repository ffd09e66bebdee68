use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use super::layers::{Dense, DenseCache};
use super::{GradVector, Head, NetworkSpec, Normalization, ParamSnapshot};
use crate::distrl::{QuantileVector, TauVector};
use crate::math::sigmoid;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct EmbeddingLayout {
    offset: usize,
    n_basis: usize,
    embed_dim: usize,
}

impl EmbeddingLayout {
    fn param_len(&self) -> usize {
        self.n_basis * self.embed_dim + self.embed_dim
    }
}

/// `ReLU(sum_i cos(pi * i * tau) * w_ij + b_j)` for `i = 0..n_basis`.
#[derive(Debug, Clone, Copy)]
pub struct CosineEmbedding<'p> {
    /// Row-major `n_basis x embed_dim`.
    pub weights: &'p [f64],
    pub bias: &'p [f64],
    pub n_basis: usize,
    pub embed_dim: usize,
}

impl CosineEmbedding<'_> {
    /// Embedding before the ReLU.
    pub fn pre_activation(&self, tau: f64) -> Vec<f64> {
        let mut out = self.bias.to_vec();
        for i in 0..self.n_basis {
            let c = libm::cos(PI * i as f64 * tau);
            let row = &self.weights[i * self.embed_dim..(i + 1) * self.embed_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += c * w;
            }
        }
        out
    }

    pub fn embed(&self, tau: f64) -> Vec<f64> {
        let mut out = self.pre_activation(tau);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }

    fn embed_all(&self, taus: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(taus.len() * self.embed_dim);
        for &t in taus {
            out.extend(self.embed(t));
        }
        out
    }
}

/// A value network defined by a [`NetworkSpec`].
///
/// The network holds only the layout; parameters are passed in as
/// snapshots so that one `Network` can evaluate live and target parameters
/// from any number of threads.
///
/// Layout: `[state, action]` goes through the hidden layers (each affine,
/// optional layer norm, ReLU) and a final affine layer whose outputs are
/// squashed by a sigmoid into the value range. The implicit head splits the
/// stack before the last hidden layer: the trunk output is multiplied
/// element-wise by the cosine embedding of each probability and the
/// remaining layers run once per probability.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    hash: u64,
    trunk: Vec<Dense>,
    embedding: Option<EmbeddingLayout>,
    post: Vec<Dense>,
    len: usize,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let norm = spec.normalization == Normalization::LayerNorm;
        let mut offset = 0;
        let mut dense = |input: usize, output: usize, hidden: bool| {
            let d = Dense {
                input,
                output,
                offset,
                norm: hidden && norm,
                relu: hidden,
            };
            offset += d.param_len();
            d
        };
        let hidden = &spec.hidden_layers;
        let mut trunk = Vec::new();
        let mut post = Vec::new();
        let mut embedding = None;
        let mut width = spec.input_dim();
        match spec.head {
            Head::Scalar | Head::QuantileFixed { .. } => {
                for &h in hidden {
                    trunk.push(dense(width, h, true));
                    width = h;
                }
                let outputs = spec.fixed_outputs().unwrap_or(1);
                trunk.push(dense(width, outputs, false));
            }
            Head::Implicit { n_basis, embed_dim } => {
                for &h in &hidden[..hidden.len() - 1] {
                    trunk.push(dense(width, h, true));
                    width = h;
                }
                let last = hidden[hidden.len() - 1];
                post.push(dense(width, last, true));
                post.push(dense(last, 1, false));
                let e = EmbeddingLayout {
                    offset,
                    n_basis,
                    embed_dim,
                };
                offset += e.param_len();
                embedding = Some(e);
            }
        }
        Ok(Self {
            hash: spec.digest(),
            spec,
            trunk,
            embedding,
            post,
            len: offset,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn spec_hash(&self) -> u64 {
        self.hash
    }

    pub fn param_len(&self) -> usize {
        self.len
    }

    pub fn is_implicit(&self) -> bool {
        self.embedding.is_some()
    }

    /// Deterministic initialization: weights uniform with variance scaled
    /// by fan-in (doubled ahead of a ReLU), biases zero, layer-norm gains one.
    pub fn init_params(&self, seed: u64) -> ParamSnapshot {
        let mut rng = rng_from_seed(seed);
        let mut values = vec![0.0; self.len];
        let mut fill = |offset: usize, count: usize, fan_in: usize, scale: f64| {
            let limit = libm::sqrt(3.0 * scale / fan_in as f64);
            for v in &mut values[offset..offset + count] {
                *v = rng.random_range(-limit..limit);
            }
        };
        for d in self.trunk.iter().chain(&self.post) {
            let scale = if d.relu { 2.0 } else { 1.0 };
            fill(d.offset, d.input * d.output, d.input, scale);
        }
        if let Some(e) = self.embedding {
            fill(e.offset, e.n_basis * e.embed_dim, e.n_basis, 2.0);
        }
        for d in self.trunk.iter().chain(&self.post).filter(|d| d.norm) {
            let g = d.gain_offset();
            values[g..g + d.output].iter_mut().for_each(|v| *v = 1.0);
        }
        ParamSnapshot::new(0, self.hash, values)
    }

    pub fn cosine_embedding<'p>(&self, params: &'p ParamSnapshot) -> Option<CosineEmbedding<'p>> {
        self.embedding
            .map(|e| self.embedding_view(params.values(), e))
    }

    fn embedding_view<'p>(&self, p: &'p [f64], e: EmbeddingLayout) -> CosineEmbedding<'p> {
        let w_len = e.n_basis * e.embed_dim;
        CosineEmbedding {
            weights: &p[e.offset..e.offset + w_len],
            bias: &p[e.offset + w_len..e.offset + w_len + e.embed_dim],
            n_basis: e.n_basis,
            embed_dim: e.embed_dim,
        }
    }

    /// Outputs produced per (state, action) for the given probabilities.
    pub fn outputs_per_input(&self, taus: Option<&[f64]>) -> usize {
        match self.spec.fixed_outputs() {
            Some(n) => n,
            None => taus.map_or(0, <[f64]>::len),
        }
    }

    fn check_params(&self, params: &ParamSnapshot) -> Result<()> {
        if params.spec_hash() != self.hash {
            return Err(Error::SpecHashMismatch {
                expected: self.hash,
                actual: params.spec_hash(),
            });
        }
        if params.len() != self.len {
            return Err(Error::DimensionMismatch {
                what: "parameters",
                expected: self.len,
                actual: params.len(),
            });
        }
        Ok(())
    }

    fn check_taus(&self, taus: Option<&[f64]>) -> Result<()> {
        match (self.is_implicit(), taus) {
            (true, None) => Err(Error::TausRequired("given")),
            (false, Some(_)) => Err(Error::TausRequired("omitted")),
            (true, Some(t)) => {
                if t.is_empty() {
                    return Err(Error::EmptyCount("taus"));
                }
                match t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    Some(&bad) => Err(Error::TauOutOfRange(bad)),
                    None => Ok(()),
                }
            }
            (false, None) => Ok(()),
        }
    }

    fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                actual,
            })
        }
    }

    fn squash(&self, z: f64) -> f64 {
        let r = self.spec.value_range;
        r.min + r.width() * sigmoid(z)
    }

    /// Values for one `(state, action)`; `taus` is required for the implicit
    /// head and must be omitted otherwise.
    pub fn forward(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        action: &[f64],
        taus: Option<&TauVector>,
    ) -> Result<QuantileVector> {
        let out = self.forward_batch(params, state, action, taus.map(TauVector::as_slice))?;
        Ok(QuantileVector::from_vec(out))
    }

    /// Values for one state and a batch of actions (`actions` holds
    /// `rows * action_dim` entries). The result is row-major
    /// `rows x outputs_per_input`.
    pub fn forward_batch(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        actions: &[f64],
        taus: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_taus(taus)?;
        Self::check_dim("state", self.spec.state_dim, state.len())?;
        let ad = self.spec.action_dim;
        if ad == 0 || !actions.len().is_multiple_of(ad) || actions.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "action batch",
                expected: ad,
                actual: actions.len(),
            });
        }
        let rows = actions.len() / ad;
        let p = params.values();

        let mut x = self.first_layer_shared_state(p, state, actions, rows);
        let mut y = Vec::new();
        for d in &self.trunk[1..] {
            d.forward(p, &x, rows, &mut y);
            core::mem::swap(&mut x, &mut y);
        }
        let Some(e) = self.embedding else {
            x.iter_mut().for_each(|z| *z = self.squash(*z));
            return Ok(x);
        };

        let taus = taus.unwrap_or(&[]);
        let k = taus.len();
        let phi = self.embedding_view(p, e).embed_all(taus);
        let width = e.embed_dim;
        let mut g = Vec::with_capacity(rows * k * width);
        for r in 0..rows {
            let h = &x[r * width..(r + 1) * width];
            for t in 0..k {
                let f = &phi[t * width..(t + 1) * width];
                g.extend(h.iter().zip(f).map(|(a, b)| a * b));
            }
        }
        let mut cur = g;
        for d in &self.post {
            d.forward(p, &cur, rows * k, &mut y);
            core::mem::swap(&mut cur, &mut y);
        }
        cur.iter_mut().for_each(|z| *z = self.squash(*z));
        Ok(cur)
    }

    /// First trunk layer with the state contribution computed once for all
    /// rows.
    fn first_layer_shared_state(
        &self,
        p: &[f64],
        state: &[f64],
        actions: &[f64],
        rows: usize,
    ) -> Vec<f64> {
        let d = &self.trunk[0];
        let sd = self.spec.state_dim;
        let ad = self.spec.action_dim;
        let w = d.weights(p);
        let b = &p[d.bias_offset()..d.bias_offset() + d.output];
        let base: Vec<f64> = (0..d.output)
            .map(|j| {
                let row = &w[j * d.input..j * d.input + sd];
                b[j] + row.iter().zip(state).map(|(a, s)| a * s).sum::<f64>()
            })
            .collect();
        let mut z = Vec::with_capacity(rows * d.output);
        for r in 0..rows {
            let a = &actions[r * ad..(r + 1) * ad];
            for j in 0..d.output {
                let row = &w[j * d.input + sd..(j + 1) * d.input];
                z.push(base[j] + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>());
            }
        }
        d.activate(p, &mut z, rows, None);
        z
    }

    /// Exact gradient of `sum_k upstream[k] * forward(..)[k]` with respect
    /// to the parameters.
    pub fn backward(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        action: &[f64],
        taus: Option<&TauVector>,
        upstream: &[f64],
    ) -> Result<GradVector> {
        let mut grad = GradVector::zeros(self.len);
        let upstream = upstream.to_vec();
        self.forward_backward(params, state, action, taus, &mut grad, |out| {
            if out.len() == upstream.len() {
                Ok(upstream)
            } else {
                Err(Error::DimensionMismatch {
                    what: "upstream gradient",
                    expected: out.len(),
                    actual: upstream.len(),
                })
            }
        })?;
        Ok(grad)
    }

    /// Runs a forward pass, hands the outputs to `upstream` (which returns
    /// the loss gradient with respect to them) and accumulates the parameter
    /// gradient into `grad`. Returns the outputs.
    pub fn forward_backward<F>(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        action: &[f64],
        taus: Option<&TauVector>,
        grad: &mut GradVector,
        upstream: F,
    ) -> Result<Vec<f64>>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        self.check_params(params)?;
        let taus = taus.map(TauVector::as_slice);
        self.check_taus(taus)?;
        Self::check_dim("state", self.spec.state_dim, state.len())?;
        Self::check_dim("action", self.spec.action_dim, action.len())?;
        Self::check_dim("gradient", self.len, grad.len())?;
        let p = params.values();
        let g = grad.values_mut();

        let mut input = Vec::with_capacity(self.spec.input_dim());
        input.extend_from_slice(state);
        input.extend_from_slice(action);

        let mut trunk_caches: Vec<DenseCache> = Vec::with_capacity(self.trunk.len());
        let mut x = input;
        for d in &self.trunk {
            let c = d.forward_cached(p, &x, 1);
            x = c.output.clone();
            trunk_caches.push(c);
        }

        let Some(e) = self.embedding else {
            let z = x;
            let out: Vec<f64> = z.iter().map(|&v| self.squash(v)).collect();
            let d_out = upstream(&out)?;
            Self::check_dim("upstream gradient", out.len(), d_out.len())?;
            let dz = self.squash_backward(&out, &d_out);
            self.backward_stack(p, &self.trunk, &trunk_caches, dz, 1, g, false);
            return Ok(out);
        };

        let taus = taus.unwrap_or(&[]);
        let k = taus.len();
        let width = e.embed_dim;
        let emb = self.embedding_view(p, e);
        let phi = emb.embed_all(taus);
        let h = x;
        let mut gated = Vec::with_capacity(k * width);
        for t in 0..k {
            let f = &phi[t * width..(t + 1) * width];
            gated.extend(h.iter().zip(f).map(|(a, b)| a * b));
        }
        let mut post_caches = Vec::with_capacity(self.post.len());
        let mut cur = gated;
        for d in &self.post {
            let c = d.forward_cached(p, &cur, k);
            cur = c.output.clone();
            post_caches.push(c);
        }
        let out: Vec<f64> = cur.iter().map(|&v| self.squash(v)).collect();
        let d_out = upstream(&out)?;
        Self::check_dim("upstream gradient", out.len(), d_out.len())?;
        let dz = self.squash_backward(&out, &d_out);
        let d_gated = self.backward_stack(p, &self.post, &post_caches, dz, k, g, true);

        let mut d_h = vec![0.0; width];
        let w_len = e.n_basis * e.embed_dim;
        for t in 0..k {
            let dg = &d_gated[t * width..(t + 1) * width];
            let f = &phi[t * width..(t + 1) * width];
            let mut d_pre = vec![0.0; width];
            for j in 0..width {
                d_h[j] += dg[j] * f[j];
                if f[j] > 0.0 {
                    d_pre[j] = dg[j] * h[j];
                }
            }
            for i in 0..e.n_basis {
                let c = libm::cos(PI * i as f64 * taus[t]);
                let row = &mut g[e.offset + i * width..e.offset + (i + 1) * width];
                for (gw, dp) in row.iter_mut().zip(&d_pre) {
                    *gw += c * dp;
                }
            }
            let bias = &mut g[e.offset + w_len..e.offset + w_len + width];
            for (gb, dp) in bias.iter_mut().zip(&d_pre) {
                *gb += dp;
            }
        }
        self.backward_stack(p, &self.trunk, &trunk_caches, d_h, 1, g, false);
        Ok(out)
    }

    fn squash_backward(&self, out: &[f64], d_out: &[f64]) -> Vec<f64> {
        let r = self.spec.value_range;
        out.iter()
            .zip(d_out)
            .map(|(&q, &d)| {
                let s = r.to_unit(q);
                d * r.width() * s * (1.0 - s)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_stack(
        &self,
        p: &[f64],
        layers: &[Dense],
        caches: &[DenseCache],
        d_out: Vec<f64>,
        rows: usize,
        grad: &mut [f64],
        want_input: bool,
    ) -> Vec<f64> {
        let mut d = d_out;
        for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
            let need = i > 0 || want_input;
            d = layer.backward(p, cache, &d, rows, grad, need);
        }
        d
    }
}
