//! Decoder-only transformer with masked self-attention, fixed sinusoidal
//! position encoding and pre-norm residual blocks. The embedding table is
//! shared with the output projection; the input lookup is scaled by
//! sqrt(d_emb) so token and position signals have comparable magnitude.

use rand_pcg::Pcg64;

use super::{dropout_mask, GradScope, GradientSet, LayerParams, ModelState, StepOutput, TransformerLayer};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_bt, matmul_ta_acc, Mat};

const LN_EPS: f64 = 1e-5;

fn gelu(u: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const C: f64 = 0.044715;
    0.5 * u * (1.0 + (K * (u + C * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4;
    const C: f64 = 0.044715;
    let inner = K * (u + C * u * u * u);
    let th = inner.tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * K * (1.0 + 3.0 * C * u * u)
}

fn positional_encoding(t_steps: usize, d: usize) -> Mat {
    let mut pos = Mat::zeros(t_steps, d);
    for p in 0..t_steps {
        for i in 0..d / 2 {
            let rate = (p as f64) / 10000f64.powf(2.0 * i as f64 / d as f64);
            pos.row_mut(p)[2 * i] = rate.sin();
            pos.row_mut(p)[2 * i + 1] = rate.cos();
        }
        if d % 2 == 1 {
            let rate = (p as f64) / 10000f64.powf((d - 1) as f64 / d as f64);
            pos.row_mut(p)[d - 1] = rate.sin();
        }
    }
    pos
}

/// Row-wise layer norm; returns (normalized-before-gain, inv_std, output).
fn layer_norm(x: &Mat, gamma: &[f64], beta: &[f64]) -> (Mat, Vec<f64>, Mat) {
    let d = x.cols;
    let mut xhat = Mat::zeros(x.rows, d);
    let mut inv_std = vec![0.0; x.rows];
    let mut out = Mat::zeros(x.rows, d);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = inv;
        for j in 0..d {
            let xh = (row[j] - mean) * inv;
            xhat.row_mut(r)[j] = xh;
            out.row_mut(r)[j] = gamma[j] * xh + beta[j];
        }
    }
    (xhat, inv_std, out)
}

/// Backward through layer norm; accumulates dgamma/dbeta and returns dx.
fn layer_norm_backward(
    dy: &Mat,
    xhat: &Mat,
    inv_std: &[f64],
    gamma: &[f64],
    dgamma: Option<&mut [f64]>,
    dbeta: Option<&mut [f64]>,
) -> Mat {
    let d = dy.cols;
    let mut dx = Mat::zeros(dy.rows, d);
    if let Some(dg) = dgamma {
        for r in 0..dy.rows {
            for j in 0..d {
                dg[j] += dy.at(r, j) * xhat.at(r, j);
            }
        }
    }
    if let Some(db) = dbeta {
        for r in 0..dy.rows {
            for (b, v) in db.iter_mut().zip(dy.row(r)) {
                *b += v;
            }
        }
    }
    for r in 0..dy.rows {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            let dxh = dy.at(r, j) * gamma[j];
            m1 += dxh;
            m2 += dxh * xhat.at(r, j);
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for j in 0..d {
            let dxh = dy.at(r, j) * gamma[j];
            dx.row_mut(r)[j] = inv_std[r] * (dxh - m1 - xhat.at(r, j) * m2);
        }
    }
    dx
}

fn add_bias(m: &mut Mat, bias: &[f64]) {
    for r in 0..m.rows {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn bias_grad(delta: &Mat, grad: &mut [f64]) {
    for r in 0..delta.rows {
        for (g, v) in grad.iter_mut().zip(delta.row(r)) {
            *g += v;
        }
    }
}

struct LayerCache {
    ln1_xhat: Mat,
    ln1_inv: Vec<f64>,
    a1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Softmaxed causal attention, one (T x T) matrix per (batch row, head).
    probs: Vec<Mat>,
    ctx: Mat,
    attn_mask: Option<Vec<f64>>,
    ln2_xhat: Mat,
    ln2_inv: Vec<f64>,
    a2: Mat,
    u: Mat,
    gelu_u: Mat,
    ff_mask: Option<Vec<f64>>,
}

struct ForwardOut {
    hidden: Mat,
    lnf_xhat: Mat,
    lnf_inv: Vec<f64>,
    emb_mask: Option<Vec<f64>>,
    caches: Vec<LayerCache>,
}

#[allow(clippy::too_many_arguments)]
fn forward(
    model: &ModelState,
    layers: &[TransformerLayer],
    lnf_gamma: &[f64],
    lnf_beta: &[f64],
    inputs: &[TokenId],
    b: usize,
    t_steps: usize,
    mut train_rng: Option<&mut Pcg64>,
    want_caches: bool,
) -> ForwardOut {
    let d = model.config.d_emb;
    let n = b * t_steps;
    let n_heads = model.config.n_heads;
    let dh = d / n_heads;
    let p = model.config.dropout;
    let scale = (d as f64).sqrt();
    let pos = positional_encoding(t_steps, d);

    let mut x = Mat::zeros(n, d);
    for row in 0..b {
        for t in 0..t_steps {
            let id = inputs[row * t_steps + t] as usize;
            let dst = x.row_mut(row * t_steps + t);
            let src = model.params.embedding.row(id);
            let ps = pos.row(t);
            for j in 0..d {
                dst[j] = src[j] * scale + ps[j];
            }
        }
    }
    let emb_mask = match (&mut train_rng, p > 0.0) {
        (Some(rng), true) => {
            let m = dropout_mask(rng, n * d, p);
            for (v, mv) in x.data.iter_mut().zip(&m) {
                *v *= mv;
            }
            Some(m)
        }
        _ => None,
    };

    let mut caches = Vec::with_capacity(if want_caches { layers.len() } else { 0 });
    for layer in layers {
        let x_in = x;
        let (ln1_xhat, ln1_inv, a1) = layer_norm(&x_in, &layer.ln1_gamma, &layer.ln1_beta);

        let mut q = matmul_bt(&a1, &layer.w_q);
        add_bias(&mut q, &layer.b_q);
        let mut k = matmul_bt(&a1, &layer.w_k);
        add_bias(&mut k, &layer.b_k);
        let mut v = matmul_bt(&a1, &layer.w_v);
        add_bias(&mut v, &layer.b_v);

        // causal attention per (batch row, head)
        let inv_sqrt_dh = 1.0 / (dh as f64).sqrt();
        let mut probs: Vec<Mat> = Vec::with_capacity(b * n_heads);
        let mut ctx = Mat::zeros(n, d);
        for row in 0..b {
            for h in 0..n_heads {
                let col0 = h * dh;
                let mut pr = Mat::zeros(t_steps, t_steps);
                for i in 0..t_steps {
                    let qi = &q.row(row * t_steps + i)[col0..col0 + dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let kj = &k.row(row * t_steps + j)[col0..col0 + dh];
                        let s = crate::linalg::dot(qi, kj) * inv_sqrt_dh;
                        pr.row_mut(i)[j] = s;
                        if s > max {
                            max = s;
                        }
                    }
                    let mut sum = 0.0;
                    for j in 0..=i {
                        let e = (pr.at(i, j) - max).exp();
                        pr.row_mut(i)[j] = e;
                        sum += e;
                    }
                    for j in 0..=i {
                        pr.row_mut(i)[j] /= sum;
                    }
                    let ctx_row = ctx.row_mut(row * t_steps + i);
                    for j in 0..=i {
                        let w = pr.at(i, j);
                        let vj = &v.row(row * t_steps + j)[col0..col0 + dh];
                        for (c, vv) in ctx_row[col0..col0 + dh].iter_mut().zip(vj) {
                            *c += w * vv;
                        }
                    }
                }
                probs.push(pr);
            }
        }

        let mut attn_out = matmul_bt(&ctx, &layer.w_o);
        add_bias(&mut attn_out, &layer.b_o);
        let attn_mask = match (&mut train_rng, p > 0.0) {
            (Some(rng), true) => {
                let m = dropout_mask(rng, n * d, p);
                for (v, mv) in attn_out.data.iter_mut().zip(&m) {
                    *v *= mv;
                }
                Some(m)
            }
            _ => None,
        };

        let mut x_mid = x_in.clone();
        x_mid.add_assign(&attn_out);

        let (ln2_xhat, ln2_inv, a2) = layer_norm(&x_mid, &layer.ln2_gamma, &layer.ln2_beta);
        let mut u = matmul_bt(&a2, &layer.w_ff1);
        add_bias(&mut u, &layer.b_ff1);
        let mut gelu_u = Mat::zeros(u.rows, u.cols);
        for (g, uv) in gelu_u.data.iter_mut().zip(&u.data) {
            *g = gelu(*uv);
        }
        let mut ff_out = matmul_bt(&gelu_u, &layer.w_ff2);
        add_bias(&mut ff_out, &layer.b_ff2);
        let ff_mask = match (&mut train_rng, p > 0.0) {
            (Some(rng), true) => {
                let m = dropout_mask(rng, n * d, p);
                for (v, mv) in ff_out.data.iter_mut().zip(&m) {
                    *v *= mv;
                }
                Some(m)
            }
            _ => None,
        };

        let mut x_out = x_mid.clone();
        x_out.add_assign(&ff_out);

        if want_caches {
            caches.push(LayerCache {
                ln1_xhat,
                ln1_inv,
                a1,
                q,
                k,
                v,
                probs,
                ctx,
                attn_mask,
                ln2_xhat,
                ln2_inv,
                a2,
                u,
                gelu_u,
                ff_mask,
            });
        }
        x = x_out;
    }

    let (lnf_xhat, lnf_inv, hidden) = layer_norm(&x, lnf_gamma, lnf_beta);
    ForwardOut {
        hidden,
        lnf_xhat,
        lnf_inv,
        emb_mask,
        caches,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn forward_backward(
    model: &ModelState,
    inputs: &[TokenId],
    targets: &[TokenId],
    mask: &[bool],
    b: usize,
    t_steps: usize,
    train_rng: Option<&mut Pcg64>,
    grads: Option<&mut GradientSet>,
) -> Result<StepOutput> {
    let LayerParams::Transformer {
        layers,
        lnf_gamma,
        lnf_beta,
    } = &model.params.layers
    else {
        return Err(Error::Internal("transformer step on non-transformer model".into()));
    };
    let want_grads = grads.is_some();
    let fwd = forward(
        model, layers, lnf_gamma, lnf_beta, inputs, b, t_steps, train_rng, want_grads,
    );

    let (mut probs, loss_sum, n_positions) =
        super::project_and_loss(model, &fwd.hidden, targets, mask);
    if n_positions == 0 {
        return Err(Error::Input("batch has no predictable positions".into()));
    }
    let Some(grads) = grads else {
        return Ok(StepOutput {
            loss_sum,
            n_positions,
        });
    };

    super::probs_into_delta(&mut probs, targets, mask, n_positions);
    let delta = probs;

    matmul_ta_acc(&delta, &fwd.hidden, &mut grads.params.embedding);
    let full = grads.scope == GradScope::Full;
    if full {
        bias_grad(&delta, &mut grads.params.out_bias);
    }
    let d_hidden = matmul(&delta, &model.params.embedding);

    let d = model.config.d_emb;
    let n_heads = model.config.n_heads;
    let dh = d / n_heads;
    let inv_sqrt_dh = 1.0 / (dh as f64).sqrt();

    let (grad_layers, grad_lnf_gamma, grad_lnf_beta) = match &mut grads.params.layers {
        LayerParams::Transformer {
            layers,
            lnf_gamma,
            lnf_beta,
        } => (layers, lnf_gamma, lnf_beta),
        _ => return Err(Error::Internal("gradient layout mismatch".into())),
    };

    // final layer norm
    let mut dx = layer_norm_backward(
        &d_hidden,
        &fwd.lnf_xhat,
        &fwd.lnf_inv,
        lnf_gamma,
        full.then_some(grad_lnf_gamma.as_mut_slice()),
        full.then_some(grad_lnf_beta.as_mut_slice()),
    );

    for (l, layer) in layers.iter().enumerate().rev() {
        let cache = &fwd.caches[l];
        let gl = &mut grad_layers[l];

        // feed-forward branch
        let mut d_ff_out = dx.clone();
        if let Some(m) = &cache.ff_mask {
            for (v, mv) in d_ff_out.data.iter_mut().zip(m) {
                *v *= mv;
            }
        }
        if full {
            matmul_ta_acc(&d_ff_out, &cache.gelu_u, &mut gl.w_ff2);
            bias_grad(&d_ff_out, &mut gl.b_ff2);
        }
        let d_gelu = matmul(&d_ff_out, &layer.w_ff2);
        let mut du = d_gelu;
        for (g, uv) in du.data.iter_mut().zip(&cache.u.data) {
            *g *= gelu_grad(*uv);
        }
        if full {
            matmul_ta_acc(&du, &cache.a2, &mut gl.w_ff1);
            bias_grad(&du, &mut gl.b_ff1);
        }
        let da2 = matmul(&du, &layer.w_ff1);
        let d_ln2 = layer_norm_backward(
            &da2,
            &cache.ln2_xhat,
            &cache.ln2_inv,
            &layer.ln2_gamma,
            full.then_some(gl.ln2_gamma.as_mut_slice()),
            full.then_some(gl.ln2_beta.as_mut_slice()),
        );
        // residual: d x_mid = dx (through the add) + d_ln2
        let mut dx_mid = dx;
        dx_mid.add_assign(&d_ln2);

        // attention branch
        let mut d_attn_out = dx_mid.clone();
        if let Some(m) = &cache.attn_mask {
            for (v, mv) in d_attn_out.data.iter_mut().zip(m) {
                *v *= mv;
            }
        }
        if full {
            matmul_ta_acc(&d_attn_out, &cache.ctx, &mut gl.w_o);
            bias_grad(&d_attn_out, &mut gl.b_o);
        }
        let d_ctx = matmul(&d_attn_out, &layer.w_o);

        let mut dq = Mat::zeros(d_ctx.rows, d);
        let mut dk = Mat::zeros(d_ctx.rows, d);
        let mut dv = Mat::zeros(d_ctx.rows, d);
        for row in 0..b {
            for h in 0..n_heads {
                let col0 = h * dh;
                let pr = &cache.probs[row * n_heads + h];
                for i in 0..t_steps {
                    let d_ctx_row = &d_ctx.row(row * t_steps + i)[col0..col0 + dh];
                    // d probs then softmax backward for this query row
                    let mut dp = vec![0.0; i + 1];
                    for (j, dpj) in dp.iter_mut().enumerate() {
                        let vj = &cache.v.row(row * t_steps + j)[col0..col0 + dh];
                        *dpj = crate::linalg::dot(d_ctx_row, vj);
                        // dv accumulation
                    }
                    for j in 0..=i {
                        let w = pr.at(i, j);
                        let dvj = &mut dv.row_mut(row * t_steps + j)[col0..col0 + dh];
                        for (dvv, dc) in dvj.iter_mut().zip(d_ctx_row) {
                            *dvv += w * dc;
                        }
                    }
                    let dot_pd: f64 = (0..=i).map(|j| pr.at(i, j) * dp[j]).sum();
                    for (j, dpj) in dp.iter().enumerate() {
                        let ds = pr.at(i, j) * (dpj - dot_pd) * inv_sqrt_dh;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &cache.k.row(row * t_steps + j)[col0..col0 + dh];
                        let qi = &cache.q.row(row * t_steps + i)[col0..col0 + dh];
                        let dq_row = &mut dq.row_mut(row * t_steps + i)[col0..col0 + dh];
                        for (dqv, kv) in dq_row.iter_mut().zip(kj) {
                            *dqv += ds * kv;
                        }
                        let dk_row = &mut dk.row_mut(row * t_steps + j)[col0..col0 + dh];
                        for (dkv, qv) in dk_row.iter_mut().zip(qi) {
                            *dkv += ds * qv;
                        }
                    }
                }
            }
        }

        if full {
            matmul_ta_acc(&dq, &cache.a1, &mut gl.w_q);
            bias_grad(&dq, &mut gl.b_q);
            matmul_ta_acc(&dk, &cache.a1, &mut gl.w_k);
            bias_grad(&dk, &mut gl.b_k);
            matmul_ta_acc(&dv, &cache.a1, &mut gl.w_v);
            bias_grad(&dv, &mut gl.b_v);
        }
        let mut da1 = matmul(&dq, &layer.w_q);
        da1.add_assign(&matmul(&dk, &layer.w_k));
        da1.add_assign(&matmul(&dv, &layer.w_v));

        let d_ln1 = layer_norm_backward(
            &da1,
            &cache.ln1_xhat,
            &cache.ln1_inv,
            &layer.ln1_gamma,
            full.then_some(gl.ln1_gamma.as_mut_slice()),
            full.then_some(gl.ln1_beta.as_mut_slice()),
        );
        let mut dx_in = dx_mid;
        dx_in.add_assign(&d_ln1);
        dx = dx_in;
    }

    // input role of the shared table: scatter with the sqrt(d) input scale,
    // through the embedding dropout
    let scale = (d as f64).sqrt();
    for row in 0..b {
        for t in 0..t_steps {
            let idx = row * t_steps + t;
            let id = inputs[idx] as usize;
            let dst = grads.params.embedding.row_mut(id);
            let src = dx.row(idx);
            for j in 0..d {
                let m = fwd.emb_mask.as_ref().map_or(1.0, |mm| mm[idx * d + j]);
                dst[j] += src[j] * m * scale;
            }
        }
    }

    Ok(StepOutput {
        loss_sum,
        n_positions,
    })
}

/// Final hidden vector (after the last layer norm) at the last position of
/// a single prefix, evaluation mode.
pub(super) fn final_hidden(model: &ModelState, prefix: &[TokenId]) -> Result<Vec<f64>> {
    let LayerParams::Transformer {
        layers,
        lnf_gamma,
        lnf_beta,
    } = &model.params.layers
    else {
        return Err(Error::Internal("transformer step on non-transformer model".into()));
    };
    let fwd = forward(
        model,
        layers,
        lnf_gamma,
        lnf_beta,
        prefix,
        1,
        prefix.len(),
        None,
        false,
    );
    Ok(fwd.hidden.row(prefix.len() - 1).to_vec())
}
