//! Dense building blocks with hand-written backward passes.
//!
//! Row-vector convention throughout: `y = x W + b` with `W: in x out` and
//! biases/gains stored as `1 x n` matrices so they broadcast over rows.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

pub(crate) type Mat = Array2<f64>;

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Uniform init with standard deviation `std`.
pub(crate) fn init_uniform(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Mat {
    let bound = std * 3f64.sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

pub(crate) fn linear(x: ArrayView2<f64>, w: &Mat, b: &Mat) -> Mat {
    x.dot(w) + b
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub(crate) fn linear_backward(
    x: ArrayView2<f64>,
    w: &Mat,
    dy: &Mat,
    dw: &mut Mat,
    db: &mut Mat,
) -> Mat {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&w.t())
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) struct NormCache {
    pub xhat: Mat,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Mat, gain: &Mat, bias: &Mat) -> (Mat, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| v * r);
        rstd.push(r);
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(
    cache: &NormCache,
    gain: &Mat,
    dy: &Mat,
    dgain: &mut Mat,
    dbias: &mut Mat,
) -> Mat {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gain;
    let n = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (i, (dxh, xh)) in dxhat.rows().into_iter().zip(cache.xhat.rows()).enumerate() {
        let mean_d = dxh.sum() / n;
        let mean_dx = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        let r = cache.rstd[i];
        for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
            *out = r * (dxh[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

/// Numerically stable softmax of one slice.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        for &x in &[-3.0, -1.0, -0.2, 0.0, 0.4, 2.5] {
            assert!((gelu_grad(x) - fd(gelu, x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = init_uniform(3, 5, 1.0, &mut rng);
        let gain = init_uniform(1, 5, 1.0, &mut rng);
        let bias = init_uniform(1, 5, 1.0, &mut rng);
        let probe = init_uniform(3, 5, 1.0, &mut rng);
        let objective = |x: &Mat| (layer_norm(x, &gain, &bias).0 * &probe).sum();
        let (_, cache) = layer_norm(&x, &gain, &bias);
        let mut dg = Array2::zeros(gain.raw_dim());
        let mut db = Array2::zeros(bias.raw_dim());
        let dx = layer_norm_backward(&cache, &gain, &probe, &mut dg, &mut db);
        for i in 0..3 {
            for j in 0..5 {
                let mut plus = x.clone();
                plus[[i, j]] += 1e-6;
                let mut minus = x.clone();
                minus[[i, j]] -= 1e-6;
                let numeric = (objective(&plus) - objective(&minus)) / 2e-6;
                assert!(
                    (numeric - dx[[i, j]]).abs() < 1e-7,
                    "{numeric} vs {}",
                    dx[[i, j]]
                );
            }
        }
    }

    #[test]
    fn softmax_is_normalized_and_matches_log_softmax() {
        let logits = [1000.0, 999.0, -5.0];
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(log_softmax(&logits)) {
            assert!((a.ln() - b).abs() < 1e-9 || *a == 0.0);
        }
    }
}
