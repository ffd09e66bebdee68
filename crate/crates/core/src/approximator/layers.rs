//! Dense layers with optional layer normalization, over row-major batches.

use alloc::vec;
use alloc::vec::Vec;

/// Variance stabilizer inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `gain * (x - mean) / sqrt(var + eps) + bias` over the whole vector.
pub fn layer_normalize(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    normalize_in_place(&mut out);
    for ((o, g), b) in out.iter_mut().zip(gain).zip(bias) {
        *o = *o * g + b;
    }
    out
}

/// Normalizes `row` in place and returns `1 / sqrt(var + eps)`.
fn normalize_in_place(row: &mut [f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
    for v in row.iter_mut() {
        *v = (*v - mean) * inv_std;
    }
    inv_std
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Parameter offsets of one fully connected layer. Weights are stored
/// row-major as `output x input`, followed by the bias and, when
/// normalized, the layer-norm gain and bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
    pub norm: bool,
    pub relu: bool,
}

/// Activations kept by a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct DenseCache {
    pub input: Vec<f64>,
    /// Normalized pre-activations (only with layer norm).
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub output: Vec<f64>,
}

impl Dense {
    pub fn param_len(&self) -> usize {
        let base = self.output * self.input + self.output;
        if self.norm {
            base + 2 * self.output
        } else {
            base
        }
    }

    pub fn weights<'p>(&self, p: &'p [f64]) -> &'p [f64] {
        &p[self.offset..self.offset + self.output * self.input]
    }

    pub fn bias_offset(&self) -> usize {
        self.offset + self.output * self.input
    }

    pub fn gain_offset(&self) -> usize {
        self.bias_offset() + self.output
    }

    /// `x W^T + b` for `rows` rows of `x`.
    pub fn affine(&self, p: &[f64], x: &[f64], rows: usize, out: &mut Vec<f64>) {
        let w = self.weights(p);
        let b = &p[self.bias_offset()..self.bias_offset() + self.output];
        out.clear();
        out.resize(rows * self.output, 0.0);
        for r in 0..rows {
            let xr = &x[r * self.input..(r + 1) * self.input];
            let yr = &mut out[r * self.output..(r + 1) * self.output];
            for (j, y) in yr.iter_mut().enumerate() {
                *y = b[j] + dot(&w[j * self.input..(j + 1) * self.input], xr);
            }
        }
    }

    /// Layer norm (if any) then ReLU (if any), in place. Fills the
    /// normalization part of `cache` when given.
    pub fn activate(&self, p: &[f64], z: &mut [f64], rows: usize, cache: Option<&mut DenseCache>) {
        let mut cache = cache;
        if self.norm {
            let g = &p[self.gain_offset()..self.gain_offset() + self.output];
            let bb = &p[self.gain_offset() + self.output..self.gain_offset() + 2 * self.output];
            if let Some(c) = cache.as_deref_mut() {
                c.xhat.clear();
                c.inv_std.clear();
            }
            for r in 0..rows {
                let row = &mut z[r * self.output..(r + 1) * self.output];
                let inv_std = normalize_in_place(row);
                if let Some(c) = cache.as_deref_mut() {
                    c.xhat.extend_from_slice(row);
                    c.inv_std.push(inv_std);
                }
                for ((v, gi), bi) in row.iter_mut().zip(g).zip(bb) {
                    *v = *v * gi + bi;
                }
            }
        }
        if self.relu {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64], rows: usize, out: &mut Vec<f64>) {
        self.affine(p, x, rows, out);
        self.activate(p, out, rows, None);
    }

    pub fn forward_cached(&self, p: &[f64], x: &[f64], rows: usize) -> DenseCache {
        let mut cache = DenseCache {
            input: x[..rows * self.input].to_vec(),
            ..DenseCache::default()
        };
        let mut z = Vec::new();
        self.affine(p, x, rows, &mut z);
        self.activate(p, &mut z, rows, Some(&mut cache));
        cache.output = z;
        cache
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input (`rows x input`) when `want_input`.
    pub fn backward(
        &self,
        p: &[f64],
        cache: &DenseCache,
        d_out: &[f64],
        rows: usize,
        grad: &mut [f64],
        want_input: bool,
    ) -> Vec<f64> {
        let n = self.output;
        let mut dz = d_out[..rows * n].to_vec();
        if self.relu {
            for (d, &o) in dz.iter_mut().zip(&cache.output) {
                if o <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        if self.norm {
            let go = self.gain_offset();
            let gain = &p[go..go + n];
            for r in 0..rows {
                let xhat = &cache.xhat[r * n..(r + 1) * n];
                let da = &mut dz[r * n..(r + 1) * n];
                let mut dxhat = vec![0.0; n];
                for j in 0..n {
                    grad[go + j] += da[j] * xhat[j];
                    grad[go + n + j] += da[j];
                    dxhat[j] = da[j] * gain[j];
                }
                let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                let mean_dx = dot(&dxhat, xhat) / n as f64;
                let inv_std = cache.inv_std[r];
                for j in 0..n {
                    da[j] = inv_std * (dxhat[j] - mean_d - xhat[j] * mean_dx);
                }
            }
        }
        let w_off = self.offset;
        let b_off = self.bias_offset();
        for r in 0..rows {
            let x = &cache.input[r * self.input..(r + 1) * self.input];
            let dzr = &dz[r * n..(r + 1) * n];
            for j in 0..n {
                if dzr[j] != 0.0 {
                    let row = &mut grad[w_off + j * self.input..w_off + (j + 1) * self.input];
                    axpy(dzr[j], x, row);
                    grad[b_off + j] += dzr[j];
                }
            }
        }
        if !want_input {
            return Vec::new();
        }
        let w = self.weights(p);
        let mut dx = vec![0.0; rows * self.input];
        for r in 0..rows {
            let dzr = &dz[r * n..(r + 1) * n];
            let dxr = &mut dx[r * self.input..(r + 1) * self.input];
            for j in 0..n {
                if dzr[j] != 0.0 {
                    axpy(dzr[j], &w[j * self.input..(j + 1) * self.input], dxr);
                }
            }
        }
        dx
    }
}
