use crate::objectives::{token_loss, Aggregation, ObjectiveConfig, TokenSample};
use crate::policy::{log_softmax, PolicyParams};
use crate::{Error, Result};

use super::RolloutBatch;

/// Largest tolerated `|log π_θ - log π_old|` on any token.
pub const LOG_RATIO_LIMIT: f64 = 50.0;

/// Mini-batch loss and its gradient over the full logit table.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl SurrogateGrad {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn response_weights(batch: &RolloutBatch, indices: &[usize], aggregation: Aggregation) -> Vec<f64> {
    match aggregation {
        Aggregation::PerSequenceMean => {
            let n = indices.len() as f64;
            indices
                .iter()
                .map(|&i| 1.0 / (n * batch.responses[i].len() as f64))
                .collect()
        }
        Aggregation::TokenLevel => {
            let w = 1.0 / batch.num_tokens(indices) as f64;
            vec![w; indices.len()]
        }
    }
}

/// Visits every token of the listed responses in response-major, token-minor order,
/// handing the per-token weight, log-softmax of its row, loss pieces and ratio to `f`.
fn for_each_token<F>(
    params: &PolicyParams,
    batch: &RolloutBatch,
    indices: &[usize],
    cfg: &ObjectiveConfig,
    mut f: F,
) -> Result<()>
where
    F: FnMut(usize, f64, &[f64], usize, crate::objectives::TokenLoss, f64),
{
    if batch.advantages.len() != batch.len() {
        return Err(Error::domain(
            "advantages have not been computed for this batch",
        ));
    }
    let weights = response_weights(batch, indices, cfg.aggregation);
    for (&i, &w) in indices.iter().zip(&weights) {
        let resp = &batch.responses[i];
        let adv = batch.advantages[i];
        for (t, (state, &tok)) in batch.states[i].iter().zip(&resp.tokens).enumerate() {
            let logp = log_softmax(params.row(state));
            let log_ratio = logp[tok] - resp.logps[t];
            if !(log_ratio.abs() <= LOG_RATIO_LIMIT) {
                return Err(Error::RatioOverflow {
                    response: i,
                    token: t,
                    log_ratio,
                });
            }
            let ratio = log_ratio.exp();
            let sample = TokenSample {
                ratio,
                advantage: adv,
                logp_cur: logp[tok],
                logp_ref: batch.ref_logps[i][t],
            };
            let piece = token_loss(&sample, cfg)?;
            f(state.row(params.spec()), w, &logp, tok, piece, ratio);
        }
    }
    Ok(())
}

/// Scalar mini-batch loss `-(weighted) Σ [surrogate - β·kl]`.
pub fn surrogate_loss(
    params: &PolicyParams,
    batch: &RolloutBatch,
    indices: &[usize],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    let mut loss = 0.0;
    for_each_token(params, batch, indices, cfg, |_, w, _, _, piece, _| {
        loss += w * piece.value
    })?;
    Ok(loss)
}

/// Loss and exact gradient via `∂r/∂θ = r·∇log π_θ` and the softmax score function.
pub fn surrogate_gradient(
    params: &PolicyParams,
    batch: &RolloutBatch,
    indices: &[usize],
    cfg: &ObjectiveConfig,
) -> Result<SurrogateGrad> {
    let v = params.spec().vocab_size;
    let mut grad = vec![0.0; params.theta().len()];
    let mut loss = 0.0;
    for_each_token(
        params,
        batch,
        indices,
        cfg,
        |row, w, logp, tok, piece, ratio| {
            loss += w * piece.value;
            let d_logp = w * (piece.grad_wrt_ratio * ratio + piece.grad_wrt_logp_cur_from_kl);
            if d_logp == 0.0 {
                return;
            }
            let g = &mut grad[row * v..(row + 1) * v];
            for (a, (gi, &lp)) in g.iter_mut().zip(logp).enumerate() {
                let score = if a == tok { 1.0 } else { 0.0 } - lp.exp();
                *gi += d_logp * score;
            }
        },
    )?;
    Ok(SurrogateGrad { loss, grad })
}
