//! Forward and backward passes for the layer set the two network layouts
//! use: same-padded 1-D convolution (stride 1), batch normalization, ReLU,
//! SELU, inverted dropout, width-2 max pooling, global average pooling, and
//! fully connected layers.
//!
//! Batched activations are `[N, C, L]` (or `[N, D]` after flattening).
//! Cross-sample gradient reductions always run in ascending sample order
//! over fixed-size chunks, so multi-threaded and single-threaded execution
//! produce bit-identical results.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernels::{axpy, conv_row_accum, conv_tap_dots, dot, sum, sum_and_sumsq};
use super::tensor::{Mode, Real, Tensor};
use crate::error::{Error, Result};

/// Samples per parallel gradient chunk. Fixed (not thread-count dependent)
/// so the reduction tree never changes shape.
const GRAD_CHUNK: usize = 32;

pub const SELU_LAMBDA: f64 = 1.05070098735548;
pub const SELU_ALPHA: f64 = 1.67326324235437;

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

/// 1-D cross-correlation, stride 1, zero same-padding, odd kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<F> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `[out_ch, in_ch, kernel]`
    pub weight: Tensor<F>,
    /// `[out_ch]`
    pub bias: Tensor<F>,
    pub grad_weight: Tensor<F>,
    pub grad_bias: Tensor<F>,
}

impl<F: Real> Conv1d<F> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv kernel must be odd, got {kernel}"
            )));
        }
        Ok(Conv1d {
            in_ch,
            out_ch,
            kernel,
            weight: Tensor::zeros(&[out_ch, in_ch, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            grad_weight: Tensor::zeros(&[out_ch, in_ch, kernel]),
            grad_bias: Tensor::zeros(&[out_ch]),
        })
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(usize, usize)> {
        match *x.shape() {
            [n, c, l] if c == self.in_ch && l >= 1 => Ok((n, l)),
            _ => Err(Error::ShapeMismatch(format!(
                "conv1d expects [N, {}, L], got {:?}",
                self.in_ch,
                x.shape()
            ))),
        }
    }

    /// `[N, in_ch, L] -> [N, out_ch, L]`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, l) = self.check_input(x)?;
        let k = self.kernel;
        let pad = (k - 1) / 2;
        let lp = l + k - 1;
        let mut y = Tensor::zeros(&[n, self.out_ch, l]);

        let in_ch = self.in_ch;
        let out_ch = self.out_ch;
        let w = self.weight.data();
        let b = self.bias.data();
        x.data()
            .par_chunks(in_ch * l)
            .zip(y.data_mut().par_chunks_mut(out_ch * l))
            .for_each(|(xs, ys)| {
                let mut xpad = vec![F::ZERO; in_ch * lp];
                for ci in 0..in_ch {
                    xpad[ci * lp + pad..ci * lp + pad + l]
                        .copy_from_slice(&xs[ci * l..(ci + 1) * l]);
                }
                for co in 0..out_ch {
                    let yr = &mut ys[co * l..(co + 1) * l];
                    yr.iter_mut().for_each(|v| *v = b[co]);
                    for ci in 0..in_ch {
                        let xr = &xpad[ci * lp..(ci + 1) * lp];
                        let wr = &w[(co * in_ch + ci) * k..(co * in_ch + ci + 1) * k];
                        conv_row_accum(yr, xr, wr);
                    }
                }
            });
        Ok(y)
    }

    /// Accumulates weight and bias gradients, returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, l) = self.check_input(x)?;
        dy.expect_shape(&[n, self.out_ch, l], "conv1d upstream gradient")?;
        let k = self.kernel;
        let pad = (k - 1) / 2;
        let lp = l + k - 1;
        let in_ch = self.in_ch;
        let out_ch = self.out_ch;
        let w_len = self.weight.numel();
        let w = self.weight.data();

        // The input gradient is a same-padded correlation of dy with the
        // reversed taps; materialize those once.
        let mut w_rev = vec![F::ZERO; w_len];
        for co in 0..out_ch {
            for ci in 0..in_ch {
                let base = (co * in_ch + ci) * k;
                for kk in 0..k {
                    w_rev[base + kk] = w[base + k - 1 - kk];
                }
            }
        }

        let mut dx = Tensor::zeros(&[n, in_ch, l]);
        let partials: Vec<(Vec<F>, Vec<F>)> = x
            .data()
            .par_chunks(GRAD_CHUNK * in_ch * l)
            .zip(dy.data().par_chunks(GRAD_CHUNK * out_ch * l))
            .zip(dx.data_mut().par_chunks_mut(GRAD_CHUNK * in_ch * l))
            .map(|((xc, dyc), dxc)| {
                let mut dw = vec![F::ZERO; w_len];
                let mut db = vec![F::ZERO; out_ch];
                let mut xpad = vec![F::ZERO; in_ch * lp];
                let mut dypad = vec![F::ZERO; out_ch * lp];
                let samples = xc.len() / (in_ch * l);
                for s in 0..samples {
                    let xs = &xc[s * in_ch * l..(s + 1) * in_ch * l];
                    let dys = &dyc[s * out_ch * l..(s + 1) * out_ch * l];
                    for ci in 0..in_ch {
                        xpad[ci * lp + pad..ci * lp + pad + l]
                            .copy_from_slice(&xs[ci * l..(ci + 1) * l]);
                    }
                    for co in 0..out_ch {
                        dypad[co * lp + pad..co * lp + pad + l]
                            .copy_from_slice(&dys[co * l..(co + 1) * l]);
                    }
                    let dxs = &mut dxc[s * in_ch * l..(s + 1) * in_ch * l];
                    dxs.iter_mut().for_each(|v| *v = F::ZERO);
                    for co in 0..out_ch {
                        let dyr = &dys[co * l..(co + 1) * l];
                        let dypr = &dypad[co * lp..(co + 1) * lp];
                        db[co] += sum(dyr);
                        for ci in 0..in_ch {
                            let base = (co * in_ch + ci) * k;
                            conv_tap_dots(
                                &mut dw[base..base + k],
                                dyr,
                                &xpad[ci * lp..(ci + 1) * lp],
                            );
                            conv_row_accum(
                                &mut dxs[ci * l..(ci + 1) * l],
                                dypr,
                                &w_rev[base..base + k],
                            );
                        }
                    }
                }
                (dw, db)
            })
            .collect();

        // Reduce chunk partials in ascending order.
        for (dw, db) in partials {
            axpy(self.grad_weight.data_mut(), F::ONE, &dw);
            axpy(self.grad_bias.data_mut(), F::ONE, &db);
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

/// Per-channel batch normalization over the batch and length dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub ch: usize,
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub grad_gamma: Tensor<F>,
    pub grad_beta: Tensor<F>,
    pub eps: f64,
    /// Weight of the batch statistic in the running-average update.
    pub momentum: f64,
}

/// Values the training-mode backward pass needs.
#[derive(Debug, Clone)]
pub struct BnCache<F> {
    pub xhat: Tensor<F>,
    pub inv_std: Vec<F>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(ch: usize) -> Self {
        let mut running_var = Tensor::zeros(&[ch]);
        running_var.fill(F::ONE);
        let mut gamma = Tensor::zeros(&[ch]);
        gamma.fill(F::ONE);
        BatchNorm {
            ch,
            gamma,
            beta: Tensor::zeros(&[ch]),
            running_mean: Tensor::zeros(&[ch]),
            running_var,
            grad_gamma: Tensor::zeros(&[ch]),
            grad_beta: Tensor::zeros(&[ch]),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    fn dims(&self, x: &Tensor<F>) -> Result<(usize, usize)> {
        match *x.shape() {
            [n, c, l] if c == self.ch => Ok((n, l)),
            [n, c] if c == self.ch => Ok((n, 1)),
            _ => Err(Error::ShapeMismatch(format!(
                "batchnorm over {} channels got {:?}",
                self.ch,
                x.shape()
            ))),
        }
    }

    /// Training mode: normalize by batch statistics and update running ones.
    pub fn forward_train(&mut self, x: &Tensor<F>) -> Result<(Tensor<F>, BnCache<F>)> {
        let (n, l) = self.dims(x)?;
        let m = n * l;
        if m < 2 {
            return Err(Error::InvalidArgument(
                "batchnorm training needs more than one value per channel".into(),
            ));
        }
        let ch = self.ch;
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![F::ZERO; ch];
        let m_f = F::from_f64(m as f64);
        let eps = F::from_f64(self.eps);

        for c in 0..ch {
            let mut s = F::ZERO;
            let mut q = F::ZERO;
            for nn in 0..n {
                let row = &x.data()[(nn * ch + c) * l..(nn * ch + c + 1) * l];
                let (rs, rq) = sum_and_sumsq(row);
                s += rs;
                q += rq;
            }
            let mean = s / m_f;
            let var = (q / m_f - mean * mean).maximum(F::ZERO);
            let istd = F::ONE / (var + eps).sqrt();
            inv_std[c] = istd;

            let keep = F::from_f64(1.0 - self.momentum);
            let new = F::from_f64(self.momentum);
            self.running_mean.data_mut()[c] = keep * self.running_mean.data()[c] + new * mean;
            self.running_var.data_mut()[c] = keep * self.running_var.data()[c] + new * var;

            let g = self.gamma.data()[c];
            let b = self.beta.data()[c];
            for nn in 0..n {
                let base = (nn * ch + c) * l;
                for i in 0..l {
                    let xh = (x.data()[base + i] - mean) * istd;
                    xhat.data_mut()[base + i] = xh;
                    y.data_mut()[base + i] = g * xh + b;
                }
            }
        }
        Ok((y, BnCache { xhat, inv_std }))
    }

    /// Inference mode: a fixed per-channel affine map from running stats.
    pub fn forward_infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, l) = self.dims(x)?;
        let ch = self.ch;
        let eps = F::from_f64(self.eps);
        let mut y = Tensor::zeros(x.shape());
        for c in 0..ch {
            let istd = F::ONE / (self.running_var.data()[c] + eps).sqrt();
            let scale = self.gamma.data()[c] * istd;
            let shift = self.beta.data()[c] - self.running_mean.data()[c] * scale;
            for nn in 0..n {
                let base = (nn * ch + c) * l;
                for i in 0..l {
                    y.data_mut()[base + i] = x.data()[base + i] * scale + shift;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, cache: &BnCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, l) = self.dims(dy)?;
        let m = n * l;
        let ch = self.ch;
        let m_f = F::from_f64(m as f64);
        let mut dx = Tensor::zeros(dy.shape());

        for c in 0..ch {
            let mut s_dy = F::ZERO;
            let mut s_dyxh = F::ZERO;
            for nn in 0..n {
                let base = (nn * ch + c) * l;
                let dyr = &dy.data()[base..base + l];
                let xhr = &cache.xhat.data()[base..base + l];
                s_dy += sum(dyr);
                s_dyxh += dot(dyr, xhr);
            }
            self.grad_beta.data_mut()[c] += s_dy;
            self.grad_gamma.data_mut()[c] += s_dyxh;

            let g = self.gamma.data()[c];
            let istd = cache.inv_std[c];
            let mean_dy = s_dy / m_f;
            let mean_dyxh = s_dyxh / m_f;
            for nn in 0..n {
                let base = (nn * ch + c) * l;
                for i in 0..l {
                    let xh = cache.xhat.data()[base + i];
                    dx.data_mut()[base + i] =
                        g * istd * (dy.data()[base + i] - mean_dy - xh * mean_dyxh);
                }
            }
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Fully connected affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim, in_dim]`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    pub grad_weight: Tensor<F>,
    pub grad_bias: Tensor<F>,
}

impl<F: Real> Dense<F> {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
            grad_weight: Tensor::zeros(&[out_dim, in_dim]),
            grad_bias: Tensor::zeros(&[out_dim]),
        }
    }

    fn batch(&self, x: &Tensor<F>) -> Result<usize> {
        match *x.shape() {
            [n, d] if d == self.in_dim => Ok(n),
            _ => Err(Error::ShapeMismatch(format!(
                "dense expects [N, {}], got {:?}",
                self.in_dim,
                x.shape()
            ))),
        }
    }

    /// `[N, in_dim] -> [N, out_dim]`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let n = self.batch(x)?;
        let mut y = Tensor::zeros(&[n, self.out_dim]);
        let w = self.weight.data();
        let b = self.bias.data();
        let in_dim = self.in_dim;
        let out_dim = self.out_dim;
        x.data()
            .par_chunks(in_dim)
            .zip(y.data_mut().par_chunks_mut(out_dim))
            .for_each(|(xr, yr)| {
                for m in 0..out_dim {
                    yr[m] = b[m] + dot(&w[m * in_dim..(m + 1) * in_dim], xr);
                }
            });
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let n = self.batch(x)?;
        dy.expect_shape(&[n, self.out_dim], "dense upstream gradient")?;
        let mut dx = Tensor::zeros(&[n, self.in_dim]);
        let in_dim = self.in_dim;
        for s in 0..n {
            let xr = &x.data()[s * in_dim..(s + 1) * in_dim];
            let dyr = &dy.data()[s * self.out_dim..(s + 1) * self.out_dim];
            let dxr = &mut dx.data_mut()[s * in_dim..(s + 1) * in_dim];
            for m in 0..self.out_dim {
                let g = dyr[m];
                self.grad_bias.data_mut()[m] += g;
                axpy(&mut self.grad_weight.data_mut()[m * in_dim..(m + 1) * in_dim], g, xr);
                axpy(dxr, g, &self.weight.data()[m * in_dim..(m + 1) * in_dim]);
            }
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Activations and dropout
// ---------------------------------------------------------------------------

pub fn relu_forward<F: Real>(x: &Tensor<F>) -> (Tensor<F>, Vec<u8>) {
    let mut y = x.clone();
    let mut mask = vec![0u8; x.numel()];
    for (v, m) in y.data_mut().iter_mut().zip(mask.iter_mut()) {
        if *v > F::ZERO {
            *m = 1;
        } else {
            *v = F::ZERO;
        }
    }
    (y, mask)
}

pub fn relu_backward<F: Real>(dy: &Tensor<F>, mask: &[u8]) -> Tensor<F> {
    let mut dx = dy.clone();
    for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
        if m == 0 {
            *v = F::ZERO;
        }
    }
    dx
}

pub fn selu_forward<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let lambda = F::from_f64(SELU_LAMBDA);
    let lambda_alpha = F::from_f64(SELU_LAMBDA * SELU_ALPHA);
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = if *v > F::ZERO {
            lambda * *v
        } else {
            lambda_alpha * (v.exp() - F::ONE)
        };
    }
    y
}

/// SELU backward from the cached *output*: for x > 0 the slope is lambda,
/// otherwise `y + lambda*alpha`.
pub fn selu_backward<F: Real>(dy: &Tensor<F>, y: &Tensor<F>) -> Tensor<F> {
    let lambda = F::from_f64(SELU_LAMBDA);
    let lambda_alpha = F::from_f64(SELU_LAMBDA * SELU_ALPHA);
    let mut dx = dy.clone();
    for (g, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
        *g = if yv > F::ZERO { *g * lambda } else { *g * (yv + lambda_alpha) };
    }
    dx
}

/// Inverted dropout. Training scales kept units by `1/(1-rate)`; inference
/// and `rate == 0` are exact identities (no RNG is consumed).
pub fn dropout_forward<F: Real>(
    x: &Tensor<F>,
    rate: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<F>, Option<Vec<u8>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 - rate;
    let scale = F::from_f64(1.0 / keep);
    let mut y = x.clone();
    let mut mask = vec![0u8; x.numel()];
    for (v, m) in y.data_mut().iter_mut().zip(mask.iter_mut()) {
        if rng.gen::<f64>() < keep {
            *m = 1;
            *v = *v * scale;
        } else {
            *v = F::ZERO;
        }
    }
    Ok((y, Some(mask)))
}

pub fn dropout_backward<F: Real>(dy: &Tensor<F>, mask: Option<&[u8]>, rate: f64) -> Tensor<F> {
    match mask {
        None => dy.clone(),
        Some(mask) => {
            let scale = F::from_f64(1.0 / (1.0 - rate));
            let mut dx = dy.clone();
            for (g, &m) in dx.data_mut().iter_mut().zip(mask) {
                *g = if m == 1 { *g * scale } else { F::ZERO };
            }
            dx
        }
    }
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Width-2, stride-2 max pooling. Ties keep the first (left) element; the
/// returned mask holds the chosen offset (0 or 1) per output value.
pub fn maxpool2_forward<F: Real>(x: &Tensor<F>) -> Result<(Tensor<F>, Vec<u8>)> {
    let (n, c, l) = match *x.shape() {
        [n, c, l] => (n, c, l),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "maxpool expects [N, C, L], got {:?}",
                x.shape()
            )))
        }
    };
    if l % 2 != 0 || l == 0 {
        return Err(Error::InvalidArgument(format!(
            "maxpool needs an even length, got {l}"
        )));
    }
    let lo = l / 2;
    let mut y = Tensor::zeros(&[n, c, lo]);
    let mut mask = vec![0u8; n * c * lo];
    for row in 0..n * c {
        let xr = &x.data()[row * l..(row + 1) * l];
        let yr = &mut y.data_mut()[row * lo..(row + 1) * lo];
        let mr = &mut mask[row * lo..(row + 1) * lo];
        for j in 0..lo {
            let a = xr[2 * j];
            let b = xr[2 * j + 1];
            if b > a {
                yr[j] = b;
                mr[j] = 1;
            } else {
                yr[j] = a;
            }
        }
    }
    Ok((y, mask))
}

pub fn maxpool2_backward<F: Real>(dy: &Tensor<F>, mask: &[u8]) -> Result<Tensor<F>> {
    let (n, c, lo) = match *dy.shape() {
        [n, c, lo] => (n, c, lo),
        _ => return Err(Error::ShapeMismatch("maxpool backward expects [N, C, L/2]".into())),
    };
    let mut dx = Tensor::zeros(&[n, c, lo * 2]);
    for row in 0..n * c {
        let dyr = &dy.data()[row * lo..(row + 1) * lo];
        let mr = &mask[row * lo..(row + 1) * lo];
        let dxr = &mut dx.data_mut()[row * lo * 2..(row + 1) * lo * 2];
        for j in 0..lo {
            dxr[2 * j + mr[j] as usize] = dyr[j];
        }
    }
    Ok(dx)
}

/// `[N, C, L] -> [N, C]` mean over the length dimension.
pub fn global_avgpool_forward<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, c, l) = match *x.shape() {
        [n, c, l] => (n, c, l),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "avgpool expects [N, C, L], got {:?}",
                x.shape()
            )))
        }
    };
    let inv = F::from_f64(1.0 / l as f64);
    let mut y = Tensor::zeros(&[n, c]);
    for row in 0..n * c {
        y.data_mut()[row] = sum(&x.data()[row * l..(row + 1) * l]) * inv;
    }
    Ok(y)
}

pub fn global_avgpool_backward<F: Real>(dy: &Tensor<F>, in_len: usize) -> Result<Tensor<F>> {
    let (n, c) = match *dy.shape() {
        [n, c] => (n, c),
        _ => return Err(Error::ShapeMismatch("avgpool backward expects [N, C]".into())),
    };
    let inv = F::from_f64(1.0 / in_len as f64);
    let mut dx = Tensor::zeros(&[n, c, in_len]);
    for row in 0..n * c {
        let g = dy.data()[row] * inv;
        dx.data_mut()[row * in_len..(row + 1) * in_len]
            .iter_mut()
            .for_each(|v| *v = g);
    }
    Ok(dx)
}
