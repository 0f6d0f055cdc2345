use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::hooks::{Hook, SwapMode};
use super::ops::{gelu, layer_norm, layer_norm_rows};
use super::trace::{ActivationTrace, CaptureLevel, FullTrace};
use super::weights::ModelWeights;
use crate::error::{Error, Result};

fn check_tokens(weights: &ModelWeights, tokens: &[u32]) -> Result<()> {
    let cfg = &weights.config;
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    if tokens.len() > cfg.n_ctx {
        return Err(Error::ContextOverflow {
            len: tokens.len(),
            max: cfg.n_ctx,
        });
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange(t));
    }
    Ok(())
}

/// Causal softmax of `q k^T / sqrt(dh)`.
fn causal_pattern(q: ArrayView2<'_, f32>, k: ArrayView2<'_, f32>, scale: f32) -> Array2<f32> {
    let mut scores = q.dot(&k.t());
    for (i, mut row) in scores.axis_iter_mut(Axis(0)).enumerate() {
        let max = row
            .slice(s![..=i])
            .iter()
            .fold(f32::NEG_INFINITY, |m, &v| m.max(v * scale));
        let mut z = 0.0f32;
        for (j, v) in row.iter_mut().enumerate() {
            if j <= i {
                *v = (*v * scale - max).exp();
                z += *v;
            } else {
                *v = 0.0;
            }
        }
        row.slice_mut(s![..=i]).mapv_inplace(|v| v / z);
    }
    scores
}

/// Runs the model on `tokens` and returns the final-position logits and the
/// trace recorded at `capture`.
pub fn forward(
    weights: &ModelWeights,
    tokens: &[u32],
    capture: CaptureLevel,
    hooks: &[Hook],
) -> Result<(Array1<f32>, ActivationTrace)> {
    check_tokens(weights, tokens)?;
    let cfg = &weights.config;
    let t = tokens.len();
    for h in hooks {
        h.validate(cfg, t)?;
    }
    let last = t - 1;
    let (d, n_heads, dh) = (cfg.d_model, cfg.n_heads, cfg.d_head());
    let scale = 1.0 / (dh as f32).sqrt();
    let record = capture >= CaptureLevel::FinalPosition;
    let full = capture == CaptureLevel::Full;

    let mut x = Array2::<f32>::zeros((t, d));
    for (i, &tok) in tokens.iter().enumerate() {
        let mut row = x.row_mut(i);
        row.assign(&weights.wte.row(tok as usize));
        row += &weights.wpe.row(i);
    }

    let mut trace = ActivationTrace {
        level: capture,
        seq_len: t,
        ..Default::default()
    };
    let mut full_trace = full.then(|| FullTrace {
        resid: Vec::with_capacity(cfg.n_layers + 1),
        patterns: Vec::with_capacity(cfg.n_layers),
        head_src: Vec::with_capacity(cfg.n_layers),
    });
    if record {
        trace.resid.push(x.row(last).to_owned());
    }
    if let Some(f) = full_trace.as_mut() {
        f.resid.push(x.clone());
    }

    for (l, block) in weights.blocks.iter().enumerate() {
        // attention
        let h = layer_norm_rows(x.view(), &block.ln1, cfg.ln_eps);
        let mut qkv = h.dot(block.w_qkv.as_ref());
        qkv += block.b_qkv.as_ref();

        let mut z = Array2::<f32>::zeros((t, d));
        let mut head_final = Array2::<f32>::zeros((n_heads, d));
        let mut pattern_final = Array2::<f32>::zeros((n_heads, t));
        let mut patterns = full.then(|| Array3::<f32>::zeros((n_heads, t, t)));
        let mut head_src = full.then(|| Array3::<f32>::zeros((n_heads, t, d)));
        let mut literal_swapped = false;
        let layer_literal = hooks.iter().any(|h| {
            matches!(h, Hook::AttentionSwap { layer, mode: SwapMode::Literal, .. } if *layer == l)
        });

        for hd in 0..n_heads {
            let q = qkv.slice(s![.., hd * dh..(hd + 1) * dh]);
            let k = qkv.slice(s![.., d + hd * dh..d + (hd + 1) * dh]);
            let v = qkv.slice(s![.., 2 * d + hd * dh..2 * d + (hd + 1) * dh]);
            let mut pattern = causal_pattern(q, k, scale);

            let mut literal = Vec::new();
            for hook in hooks {
                if let Hook::AttentionSwap {
                    layer,
                    head,
                    pos_a,
                    pos_b,
                    mode,
                } = *hook
                {
                    if layer != l || head != hd {
                        continue;
                    }
                    match mode {
                        SwapMode::Pattern => {
                            let a = pattern[[last, pos_a]];
                            pattern[[last, pos_a]] = pattern[[last, pos_b]];
                            pattern[[last, pos_b]] = a;
                        }
                        SwapMode::Literal => literal.push((pos_a, pos_b)),
                    }
                }
            }

            let zh = pattern.dot(&v);
            z.slice_mut(s![.., hd * dh..(hd + 1) * dh]).assign(&zh);
            let w_o = weights.w_o(l, hd);

            if full || !literal.is_empty() {
                // r_{T,j} = A[T, j] * v_j W_O^h
                let mut r = v.dot(&w_o);
                for (j, mut row) in r.axis_iter_mut(Axis(0)).enumerate() {
                    row *= pattern[[last, j]];
                }
                for &(a, b) in &literal {
                    let ra = r.row(a).to_owned();
                    let rb = r.row(b).to_owned();
                    r.row_mut(a).assign(&rb);
                    r.row_mut(b).assign(&ra);
                }
                if !literal.is_empty() {
                    literal_swapped = true;
                    head_final.row_mut(hd).assign(&r.sum_axis(Axis(0)));
                } else {
                    head_final.row_mut(hd).assign(&zh.row(last).dot(&w_o));
                }
                if let Some(src) = head_src.as_mut() {
                    src.index_axis_mut(Axis(0), hd).assign(&r);
                }
            } else if record || layer_literal {
                head_final.row_mut(hd).assign(&zh.row(last).dot(&w_o));
            }

            if record {
                pattern_final.row_mut(hd).assign(&pattern.row(last));
            }
            if let Some(p) = patterns.as_mut() {
                p.index_axis_mut(Axis(0), hd).assign(&pattern);
            }
        }

        let mut attn = z.dot(block.w_o.as_ref());
        attn += block.b_o.as_ref();
        if literal_swapped {
            let mut row = head_final.sum_axis(Axis(0));
            row += block.b_o.as_ref();
            attn.row_mut(last).assign(&row);
        }
        x += &attn;

        // MLP
        let h2 = layer_norm_rows(x.view(), &block.ln2, cfg.ln_eps);
        let mut pre = h2.dot(block.w_in.as_ref());
        pre += block.b_in.as_ref();
        let coeffs = pre.mapv(gelu);
        let mut mlp = coeffs.dot(block.w_out.as_ref());
        mlp += block.b_out.as_ref();
        for hook in hooks {
            if let Hook::ValuePatch { layer, dim, delta } = hook {
                if *layer == l {
                    for (i, mut row) in mlp.axis_iter_mut(Axis(0)).enumerate() {
                        row.scaled_add(coeffs[[i, *dim]], delta.as_ref());
                    }
                }
            }
        }
        x += &mlp;

        if record {
            trace.attn_out.push(attn.row(last).to_owned());
            trace.mlp_out.push(mlp.row(last).to_owned());
            trace.mlp_coeffs.push(coeffs.row(last).to_owned());
            trace.head_out.push(head_final);
            trace.pattern_final.push(pattern_final);
            trace.resid.push(x.row(last).to_owned());
        }
        if let Some(f) = full_trace.as_mut() {
            f.resid.push(x.clone());
            f.patterns
                .push(patterns.expect("allocated for full capture"));
            f.head_src
                .push(head_src.expect("allocated for full capture"));
        }
    }

    let final_norm = layer_norm(x.row(last), Some(&weights.ln_f), cfg.ln_eps);
    let logits = weights.wte.dot(&final_norm);
    trace.full = full_trace;
    Ok((logits, trace))
}

/// Logits only.
pub fn logits(weights: &ModelWeights, tokens: &[u32], hooks: &[Hook]) -> Result<Array1<f32>> {
    Ok(forward(weights, tokens, CaptureLevel::None, hooks)?.0)
}
