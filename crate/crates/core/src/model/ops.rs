use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::weights::LayerNormParams;
use crate::error::{Error, Result};

/// Mean and `sqrt(var + eps)` of a vector, accumulated in f64.
pub fn ln_stats(x: ArrayView1<'_, f32>, eps: f32) -> (f32, f32) {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean as f32, (var + eps as f64).sqrt() as f32)
}

/// Layer norm of one vector; `params = None` is the parameter-free variant.
pub fn layer_norm(
    x: ArrayView1<'_, f32>,
    params: Option<&LayerNormParams>,
    eps: f32,
) -> Array1<f32> {
    let (mean, scale) = ln_stats(x, eps);
    let mut y = x.mapv(|v| (v - mean) / scale);
    if let Some(p) = params {
        Zip::from(&mut y)
            .and(p.gamma.as_ref())
            .and(p.beta.as_ref())
            .for_each(|y, &g, &b| *y = *y * g + b);
    }
    y
}

/// Row-wise layer norm of a `(T, d)` matrix.
pub fn layer_norm_rows(x: ArrayView2<'_, f32>, params: &LayerNormParams, eps: f32) -> Array2<f32> {
    let mut out = Array2::zeros(x.raw_dim());
    for (src, mut dst) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        dst.assign(&layer_norm(src, Some(params), eps));
    }
    out
}

/// GELU, tanh approximation.
pub fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Softmax in f64.
pub fn softmax(logits: ArrayView1<'_, f32>) -> Array1<f64> {
    let max = logits.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let mut p = logits.mapv(|v| (v as f64 - max).exp());
    let z = p.sum();
    p /= z;
    p
}

/// Probability distribution over the vocabulary for a logit vector.
pub fn next_token_distribution(logits: ArrayView1<'_, f32>) -> Result<Array1<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptySequence);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    Ok(softmax(logits))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(x: ArrayView1<'_, f32>) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}
