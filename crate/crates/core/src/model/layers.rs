//! Forward and backward passes of the building blocks. Activations are
//! `rows x features` matrices for a single sequence.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{Attention, FeedForward};
use super::Float;

pub const NORM_EPS: f64 = 1e-6;

/// Sinusoidal table: `pe[p, 2i] = sin(p / 10000^(2i/d))`, `pe[p, 2i+1] = cos(..)`.
pub fn positional_encoding<F: Float>(len: usize, d: usize) -> Array2<F> {
    Array2::from_shape_fn((len, d), |(p, j)| {
        let i = (j / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * i / d as f64);
        F::lit(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

pub(crate) struct NormCache<F> {
    xhat: Array2<F>,
    inv_rms: Array1<F>,
}

/// `y = x / rms(x) * g` row by row.
pub(crate) fn rms_forward<F: Float>(x: &Array2<F>, g: &Array1<F>) -> (Array2<F>, NormCache<F>) {
    let d = F::lit(x.ncols() as f64);
    let eps = F::lit(NORM_EPS);
    let inv_rms = x.map_axis(Axis(1), |row| F::one() / (row.iter().map(|&v| v * v).sum::<F>() / d + eps).sqrt());
    let xhat = x * &inv_rms.view().insert_axis(Axis(1));
    let y = &xhat * g;
    (y, NormCache { xhat, inv_rms })
}

pub(crate) fn rms_backward<F: Float>(dy: &Array2<F>, g: &Array1<F>, cache: &NormCache<F>, dg: &mut Array1<F>) -> Array2<F> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    let d = F::lit(dy.ncols() as f64);
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    Zip::from(dx.rows_mut())
        .and(dxhat.rows())
        .and(cache.xhat.rows())
        .and(&cache.inv_rms)
        .for_each(|mut out, dh, xh, &inv| {
            let proj = dh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<F>() / d;
            Zip::from(&mut out).and(dh).and(xh).for_each(|o, &a, &b| *o = (a - b * proj) * inv);
        });
    dx
}

/// Row-wise softmax over the first `limit(i)` columns of row `i`; the rest
/// are exactly zero.
fn masked_softmax<F: Float>(scores: &mut Array2<F>, causal: bool) {
    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
        let n = if causal { i + 1 } else { row.len() };
        let max = row.iter().take(n).fold(F::neg_infinity(), |m, &v| m.max(v));
        let mut z = 0f64;
        for v in row.iter_mut().take(n) {
            *v = (*v - max).exp();
            z += v.to_f64().expect("finite");
        }
        let inv = F::lit(1.0 / z);
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j < n { *v * inv } else { F::zero() };
        }
    }
}

/// Probabilities of each row of `logits`; the normaliser is summed in f64.
pub fn softmax_rows<F: Float>(logits: ArrayView2<F>) -> Array2<F> {
    let mut p = logits.to_owned();
    masked_softmax(&mut p, false);
    p
}

/// Summed cross-entropy of `labels` under `logits`, and the probabilities.
pub fn softmax_xent<F: Float>(logits: ArrayView2<F>, labels: &[u32]) -> (f64, Array2<F>) {
    let probs = softmax_rows(logits);
    let mut loss = 0f64;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v)).to_f64().expect("finite");
        let lse = max + row.iter().map(|&v| (v.to_f64().expect("finite") - max).exp()).sum::<f64>().ln();
        loss += lse - row[y as usize].to_f64().expect("finite");
    }
    (loss, probs)
}

pub(crate) struct AttnCache<F> {
    xq: Array2<F>,
    xkv: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    concat: Array2<F>,
}

pub(crate) fn attn_forward<F: Float>(
    a: &Attention<F>,
    xq: &Array2<F>,
    xkv: &Array2<F>,
    n_heads: usize,
    causal: bool,
) -> (Array2<F>, AttnCache<F>) {
    let q = xq.dot(&a.wq);
    let k = xkv.dot(&a.wk);
    let v = xkv.dot(&a.wv);
    let dh = q.ncols() / n_heads;
    let scale = F::lit(1.0 / (dh as f64).sqrt());
    let mut concat = Array2::zeros(q.raw_dim());
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        masked_softmax(&mut scores, causal);
        concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let out = concat.dot(&a.wo);
    (out, AttnCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, probs, concat })
}

/// Gradients with respect to the query input and the key/value input.
pub(crate) fn attn_backward<F: Float>(
    a: &Attention<F>,
    cache: &AttnCache<F>,
    dout: &Array2<F>,
    grad: &mut Attention<F>,
) -> (Array2<F>, Array2<F>) {
    let n_heads = cache.probs.len();
    let dh = cache.q.ncols() / n_heads;
    let scale = F::lit(1.0 / (dh as f64).sqrt());
    grad.wo += &cache.concat.t().dot(dout);
    let dconcat = dout.dot(&a.wo.t());
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let do_h = dconcat.slice(cols);
        let dp = do_h.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&do_h));
        let mut ds = Array2::zeros(p.raw_dim());
        Zip::from(ds.rows_mut()).and(dp.rows()).and(p.rows()).for_each(|mut out, dpr, pr| {
            let dot = dpr.iter().zip(pr).map(|(&a, &b)| a * b).sum::<F>();
            Zip::from(&mut out).and(dpr).and(pr).for_each(|o, &g, &pp| *o = pp * (g - dot) * scale);
        });
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    grad.wq += &cache.xq.t().dot(&dq);
    grad.wk += &cache.xkv.t().dot(&dk);
    grad.wv += &cache.xkv.t().dot(&dv);
    let dxq = dq.dot(&a.wq.t());
    let dxkv = dk.dot(&a.wk.t()) + dv.dot(&a.wv.t());
    (dxq, dxkv)
}

pub(crate) struct FfnCache<F> {
    x: Array2<F>,
    hidden: Array2<F>,
}

pub(crate) fn ffn_forward<F: Float>(f: &FeedForward<F>, x: &Array2<F>) -> (Array2<F>, FfnCache<F>) {
    let hidden = x.dot(&f.w1).mapv(|v| v.max(F::zero()));
    let out = hidden.dot(&f.w2);
    (out, FfnCache { x: x.clone(), hidden })
}

pub(crate) fn ffn_backward<F: Float>(f: &FeedForward<F>, cache: &FfnCache<F>, dout: &Array2<F>, grad: &mut FeedForward<F>) -> Array2<F> {
    grad.w2 += &cache.hidden.t().dot(dout);
    let mut dh = dout.dot(&f.w2.t());
    Zip::from(&mut dh).and(&cache.hidden).for_each(|g, &h| {
        if h <= F::zero() {
            *g = F::zero();
        }
    });
    grad.w1 += &cache.x.t().dot(&dh);
    dh.dot(&f.w1.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn positional_table_values() {
        let pe = positional_encoding::<f64>(3, 4);
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[2, 3]] - (2.0 / 100.0f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn rms_rows_have_unit_rms() {
        let x = array![[3.0, -4.0], [0.5, 0.5]];
        let (y, _) = rms_forward(&x, &Array1::ones(2));
        for row in y.rows() {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / 2.0;
            assert!((ms - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn causal_softmax_zeroes_future() {
        let mut s: Array2<f64> = array![[1.0, 5.0, 2.0], [0.0, 0.0, 9.0], [1.0, 2.0, 3.0]];
        masked_softmax(&mut s, true);
        assert_eq!(s.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(s[[1, 2]], 0.0);
        assert!((s[[1, 0]] - 0.5).abs() < 1e-15);
        assert!((s.row(2).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_cost_ln_v() {
        let logits = Array2::<f64>::zeros((3, 7));
        let (loss, p) = softmax_xent(logits.view(), &[0, 3, 6]);
        assert!((loss / 3.0 - 7f64.ln()).abs() < 1e-12);
        assert!(p.iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let mut logits = Array2::<f32>::zeros((4, 30));
        let labels = [2u32, 9, 17, 29];
        for (i, &y) in labels.iter().enumerate() {
            logits[[i, y as usize]] = 20.0;
        }
        let (loss, _) = softmax_xent(logits.view(), &labels);
        // Analytic: ln(1 + 29 e^-20) per row.
        let expected = (1.0 + 29.0 * (-20f64).exp()).ln();
        assert!(loss / 4.0 < 1e-3);
        assert!((loss / 4.0 - expected).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Array2::from_shape_fn((5, 50), |(i, j)| ((i * 31 + j * 17) % 23) as f32 * 0.7 - 8.0);
        let p = softmax_rows(logits.view());
        for row in p.rows() {
            let total: f64 = row.iter().map(|&v| f64::from(v)).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }
}
