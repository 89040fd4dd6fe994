//! Inner-loop primitives with a fixed arithmetic structure.
//!
//! Reductions use eight independent accumulator lanes combined in a fixed
//! tree, so results are bit-identical no matter how the surrounding work is
//! scheduled across threads, while still autovectorizing.

use super::tensor::Real;

/// `y[i] += a * x[i]`.
#[inline]
pub fn axpy<F: Real>(y: &mut [F], a: F, x: &[F]) {
    debug_assert_eq!(y.len(), x.len());
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with fixed 8-lane accumulation order.
#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [F::ZERO; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let o = i * 8;
        for l in 0..8 {
            lanes[l] += a[o + l] * b[o + l];
        }
    }
    let mut tail = F::ZERO;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    combine(lanes) + tail
}

/// Sum with fixed 8-lane accumulation order.
#[inline]
pub fn sum<F: Real>(a: &[F]) -> F {
    let mut lanes = [F::ZERO; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let o = i * 8;
        for l in 0..8 {
            lanes[l] += a[o + l];
        }
    }
    let mut tail = F::ZERO;
    for v in &a[chunks * 8..] {
        tail += *v;
    }
    combine(lanes) + tail
}

/// Sum of values and sum of squares in one pass (batch-norm statistics).
#[inline]
pub fn sum_and_sumsq<F: Real>(a: &[F]) -> (F, F) {
    let mut s = [F::ZERO; 8];
    let mut q = [F::ZERO; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let o = i * 8;
        for l in 0..8 {
            let v = a[o + l];
            s[l] += v;
            q[l] += v * v;
        }
    }
    let mut st = F::ZERO;
    let mut qt = F::ZERO;
    for &v in &a[chunks * 8..] {
        st += v;
        qt += v * v;
    }
    (combine(s) + st, combine(q) + qt)
}

#[inline]
fn combine<F: Real>(l: [F; 8]) -> F {
    ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]))
}

/// `y[i] += sum_k w[k] * xpad[i + k]`, the conv inner loop, with taps
/// processed four at a time to cut y-row traffic.
#[inline]
pub fn conv_row_accum<F: Real>(y: &mut [F], xpad: &[F], w: &[F]) {
    let l = y.len();
    debug_assert!(xpad.len() >= l + w.len() - 1);
    let mut kk = 0;
    while kk + 4 <= w.len() {
        let (w0, w1, w2, w3) = (w[kk], w[kk + 1], w[kk + 2], w[kk + 3]);
        let xs = &xpad[kk..kk + l + 3];
        for i in 0..l {
            y[i] += w0 * xs[i] + w1 * xs[i + 1] + w2 * xs[i + 2] + w3 * xs[i + 3];
        }
        kk += 4;
    }
    while kk < w.len() {
        axpy(y, w[kk], &xpad[kk..kk + l]);
        kk += 1;
    }
}

/// `dw[k] += sum_i dy[i] * xpad[i + k]` for every tap, four taps per sweep.
/// Accumulation order per tap is the fixed 8-lane structure of [`dot`].
#[inline]
pub fn conv_tap_dots<F: Real>(dw: &mut [F], dy: &[F], xpad: &[F]) {
    let l = dy.len();
    let mut kk = 0;
    while kk + 4 <= dw.len() {
        let xs = &xpad[kk..kk + l + 3];
        let mut lanes = [[F::ZERO; 8]; 4];
        let chunks = l / 8;
        for ci in 0..chunks {
            let o = ci * 8;
            for lane in 0..8 {
                let d = dy[o + lane];
                lanes[0][lane] += d * xs[o + lane];
                lanes[1][lane] += d * xs[o + lane + 1];
                lanes[2][lane] += d * xs[o + lane + 2];
                lanes[3][lane] += d * xs[o + lane + 3];
            }
        }
        let mut tails = [F::ZERO; 4];
        for i in chunks * 8..l {
            let d = dy[i];
            tails[0] += d * xs[i];
            tails[1] += d * xs[i + 1];
            tails[2] += d * xs[i + 2];
            tails[3] += d * xs[i + 3];
        }
        for t in 0..4 {
            dw[kk + t] += combine(lanes[t]) + tails[t];
        }
        kk += 4;
    }
    while kk < dw.len() {
        dw[kk] += dot(dy, &xpad[kk..kk + l]);
        kk += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_on_f64() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn sums_match_naive() {
        let a: Vec<f64> = (0..101).map(|i| (i as f64 * 0.11).tan().atan()).collect();
        let (s, q) = sum_and_sumsq(&a);
        let ns: f64 = a.iter().sum();
        let nq: f64 = a.iter().map(|v| v * v).sum();
        assert!((s - ns).abs() < 1e-10);
        assert!((q - nq).abs() < 1e-10);
        assert!((sum(&a) - ns).abs() < 1e-10);
    }
}
