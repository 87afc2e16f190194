//! Multi-layer LSTM with tied input/output embeddings. Gate order is
//! i, f, g, o; dropout sits on the embedding output and between layers,
//! never on the recurrent path.

use rand_pcg::Pcg64;

use super::{dropout_mask, GradScope, GradientSet, LayerParams, ModelState, StepOutput};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_bt, matmul_ta_acc, Mat};

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden and cell state carried across training windows (detached).
#[derive(Clone, Debug)]
pub struct LstmCarry {
    pub h: Vec<Mat>,
    pub c: Vec<Mat>,
}

impl LstmCarry {
    pub fn zeros(n_layers: usize, batch: usize, d_hidden: usize) -> Self {
        LstmCarry {
            h: (0..n_layers).map(|_| Mat::zeros(batch, d_hidden)).collect(),
            c: (0..n_layers).map(|_| Mat::zeros(batch, d_hidden)).collect(),
        }
    }
}

struct StepCache {
    /// Layer input after dropout, (B x in).
    x: Mat,
    i: Mat,
    f: Mat,
    g: Mat,
    o: Mat,
    tanh_c: Mat,
    c_prev: Mat,
    h_prev: Mat,
}

/// One window of the sequence, batched. `inputs`, `targets` and `mask` are
/// (B x T) row-major. Returns summed loss over unmasked positions; when
/// `grads` is given, accumulates exact gradients of the mean loss.
#[allow(clippy::too_many_arguments)]
pub fn forward_backward(
    model: &ModelState,
    inputs: &[TokenId],
    targets: &[TokenId],
    mask: &[bool],
    b: usize,
    t_steps: usize,
    carry: Option<&mut LstmCarry>,
    mut train_rng: Option<&mut Pcg64>,
    grads: Option<&mut GradientSet>,
) -> Result<StepOutput> {
    let layers = match &model.params.layers {
        LayerParams::Lstm(layers) => layers,
        _ => return Err(Error::Internal("lstm step on non-lstm model".into())),
    };
    let d = model.config.d_hidden;
    let n_layers = layers.len();
    let p = model.config.dropout;
    let want_grads = grads.is_some();

    let mut state = match &carry {
        Some(c) => LstmCarry {
            h: c.h.clone(),
            c: c.c.clone(),
        },
        None => LstmCarry::zeros(n_layers, b, d),
    };

    // caches[l][t]; only filled when gradients are requested
    let mut caches: Vec<Vec<StepCache>> = (0..n_layers).map(|_| Vec::new()).collect();
    // dropout masks, drawn in a fixed order: per step, embedding mask then
    // one mask per between-layer boundary
    let mut emb_masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(t_steps);
    let mut layer_masks: Vec<Vec<Option<Vec<f64>>>> = Vec::with_capacity(t_steps);

    let mut top_hidden = Mat::zeros(b * t_steps, d);

    for t in 0..t_steps {
        // embed the (B) tokens for this step
        let mut x = Mat::zeros(b, d);
        for row in 0..b {
            let id = inputs[row * t_steps + t] as usize;
            x.row_mut(row)
                .copy_from_slice(model.params.embedding.row(id));
        }
        let emb_mask = match (&mut train_rng, p > 0.0) {
            (Some(rng), true) => {
                let m = dropout_mask(rng, b * d, p);
                for (v, mv) in x.data.iter_mut().zip(&m) {
                    *v *= mv;
                }
                Some(m)
            }
            _ => None,
        };
        emb_masks.push(emb_mask);
        layer_masks.push(Vec::with_capacity(n_layers.saturating_sub(1)));

        for (l, layer) in layers.iter().enumerate() {
            let h_prev = state.h[l].clone();
            let c_prev = state.c[l].clone();

            // gates = x W_ih^T + h_prev W_hh^T + bias
            let mut pre = matmul_bt(&x, &layer.w_ih);
            let rec = matmul_bt(&h_prev, &layer.w_hh);
            pre.add_assign(&rec);
            for row in 0..b {
                let r = pre.row_mut(row);
                for (v, bias) in r.iter_mut().zip(&layer.bias) {
                    *v += bias;
                }
            }

            let mut gi = Mat::zeros(b, d);
            let mut gf = Mat::zeros(b, d);
            let mut gg = Mat::zeros(b, d);
            let mut go = Mat::zeros(b, d);
            for row in 0..b {
                let pr = pre.row(row);
                for j in 0..d {
                    gi.row_mut(row)[j] = sigmoid(pr[j]);
                    gf.row_mut(row)[j] = sigmoid(pr[d + j]);
                    gg.row_mut(row)[j] = pr[2 * d + j].tanh();
                    go.row_mut(row)[j] = sigmoid(pr[3 * d + j]);
                }
            }

            let mut c = Mat::zeros(b, d);
            let mut tanh_c = Mat::zeros(b, d);
            let mut h = Mat::zeros(b, d);
            for idx in 0..b * d {
                c.data[idx] = gf.data[idx] * c_prev.data[idx] + gi.data[idx] * gg.data[idx];
                tanh_c.data[idx] = c.data[idx].tanh();
                h.data[idx] = go.data[idx] * tanh_c.data[idx];
            }

            state.h[l] = h.clone();
            state.c[l] = c.clone();

            if l == n_layers - 1 {
                for row in 0..b {
                    top_hidden
                        .row_mut(row * t_steps + t)
                        .copy_from_slice(h.row(row));
                }
            }

            if want_grads {
                caches[l].push(StepCache {
                    x: x.clone(),
                    i: gi,
                    f: gf,
                    g: gg,
                    o: go,
                    tanh_c,
                    c_prev,
                    h_prev,
                });
            }

            // input to the next layer, with between-layer dropout
            if l + 1 < n_layers {
                x = h;
                let m = match (&mut train_rng, p > 0.0) {
                    (Some(rng), true) => {
                        let m = dropout_mask(rng, b * d, p);
                        for (v, mv) in x.data.iter_mut().zip(&m) {
                            *v *= mv;
                        }
                        Some(m)
                    }
                    _ => None,
                };
                layer_masks[t].push(m);
            }
        }
    }

    if let Some(c) = carry {
        *c = state;
    }

    let (mut probs, loss_sum, n_positions) =
        super::project_and_loss(model, &top_hidden, targets, mask);
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

    // output role of the shared table, plus output bias
    matmul_ta_acc(&delta, &top_hidden, &mut grads.params.embedding);
    let full_scope = grads.scope == GradScope::Full;
    if full_scope {
        for row in 0..delta.rows {
            for (gb, dv) in grads.params.out_bias.iter_mut().zip(delta.row(row)) {
                *gb += dv;
            }
        }
    }
    let mut d_top = matmul(&delta, &model.params.embedding);

    let grad_layers = match &mut grads.params.layers {
        LayerParams::Lstm(gl) => gl,
        _ => return Err(Error::Internal("gradient layout mismatch".into())),
    };

    // backpropagation through time, top layer first
    let mut dx_below: Option<Vec<Mat>> = None;
    for l in (0..n_layers).rev() {
        let layer = &layers[l];
        let mut dh_next = Mat::zeros(b, d);
        let mut dc_next = Mat::zeros(b, d);
        let mut dx_store: Vec<Mat> = (0..t_steps).map(|_| Mat::zeros(b, d)).collect();

        for t in (0..t_steps).rev() {
            let cache = &caches[l][t];
            // dh: from the output projection (top layer), from the layer
            // above (through its input dropout), and from the next step
            let mut dh = dh_next.clone();
            if l == n_layers - 1 {
                for row in 0..b {
                    let src = d_top.row(row * t_steps + t);
                    for (a, s) in dh.row_mut(row).iter_mut().zip(src) {
                        *a += s;
                    }
                }
            } else if let Some(above) = &dx_below {
                let m = layer_masks[t][l].as_ref();
                for idx in 0..b * d {
                    let scale = m.map_or(1.0, |mm| mm[idx]);
                    dh.data[idx] += above[t].data[idx] * scale;
                }
            }

            let mut dpre = Mat::zeros(b, 4 * d);
            let mut dc = dc_next.clone();
            for row in 0..b {
                for j in 0..d {
                    let idx = row * d + j;
                    let o = cache.o.data[idx];
                    let tc = cache.tanh_c.data[idx];
                    let dh_v = dh.data[idx];
                    // o gate
                    let dpo = dh_v * tc * o * (1.0 - o);
                    // cell
                    dc.data[idx] += dh_v * o * (1.0 - tc * tc);
                    let dc_v = dc.data[idx];
                    let i_g = cache.i.data[idx];
                    let f_g = cache.f.data[idx];
                    let g_g = cache.g.data[idx];
                    let dpi = dc_v * g_g * i_g * (1.0 - i_g);
                    let dpf = dc_v * cache.c_prev.data[idx] * f_g * (1.0 - f_g);
                    let dpg = dc_v * i_g * (1.0 - g_g * g_g);
                    let pr = dpre.row_mut(row);
                    pr[j] = dpi;
                    pr[d + j] = dpf;
                    pr[2 * d + j] = dpg;
                    pr[3 * d + j] = dpo;
                    dc_next.data[idx] = dc_v * f_g;
                }
            }

            if full_scope {
                let gl = &mut grad_layers[l];
                matmul_ta_acc(&dpre, &cache.x, &mut gl.w_ih);
                matmul_ta_acc(&dpre, &cache.h_prev, &mut gl.w_hh);
                for row in 0..b {
                    for (gb, dv) in gl.bias.iter_mut().zip(dpre.row(row)) {
                        *gb += dv;
                    }
                }
            }

            dx_store[t] = matmul(&dpre, &layer.w_ih);
            dh_next = matmul(&dpre, &layer.w_hh);
        }
        dx_below = Some(dx_store);
        if l == n_layers - 1 {
            d_top.fill(0.0);
        }
    }

    // input role of the shared table: scatter through the embedding dropout
    if let Some(dx0) = dx_below {
        for (t, dxt) in dx0.iter().enumerate() {
            let m = emb_masks[t].as_ref();
            for row in 0..b {
                let id = inputs[row * t_steps + t] as usize;
                let dst = grads.params.embedding.row_mut(id);
                let src = dxt.row(row);
                for j in 0..d {
                    let scale = m.map_or(1.0, |mm| mm[row * d + j]);
                    dst[j] += src[j] * scale;
                }
            }
        }
    }

    Ok(StepOutput {
        loss_sum,
        n_positions,
    })
}

/// Final top-layer hidden vector after consuming a prefix, evaluation mode.
pub(super) fn final_hidden(model: &ModelState, prefix: &[TokenId]) -> Result<Vec<f64>> {
    let layers = model.lstm_layers();
    let d = model.config.d_hidden;
    let mut h: Vec<Vec<f64>> = vec![vec![0.0; d]; layers.len()];
    let mut c: Vec<Vec<f64>> = vec![vec![0.0; d]; layers.len()];
    for &id in prefix {
        let mut x: Vec<f64> = model.params.embedding.row(id as usize).to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let mut pre = layer.bias.clone();
            for (j, pv) in pre.iter_mut().enumerate() {
                *pv += crate::linalg::dot(layer.w_ih.row(j), &x)
                    + crate::linalg::dot(layer.w_hh.row(j), &h[l]);
            }
            let mut new_h = vec![0.0; d];
            for j in 0..d {
                let i_g = sigmoid(pre[j]);
                let f_g = sigmoid(pre[d + j]);
                let g_g = pre[2 * d + j].tanh();
                let o_g = sigmoid(pre[3 * d + j]);
                c[l][j] = f_g * c[l][j] + i_g * g_g;
                new_h[j] = o_g * c[l][j].tanh();
            }
            h[l] = new_h.clone();
            x = new_h;
        }
    }
    Ok(h.last().unwrap().clone())
}
