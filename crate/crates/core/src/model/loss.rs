use super::{dot, Gradients, MatchModel, Params};
use crate::error::Result;

/// An image vector with an encoded text.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub image: Vec<f64>,
    pub tokens: Vec<usize>,
}

/// A positive pair and its negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchInstance {
    pub positive: Pair,
    pub negatives: Vec<Pair>,
}

/// One specificity term: the child's image scored against both texts.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecTerm {
    pub image: Vec<f64>,
    pub parent: Vec<usize>,
    pub child: Vec<usize>,
}

/// A directed (parent slot, child slot) pair with its edge label.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgePair {
    pub parent: Pair,
    pub child: Pair,
    pub is_edge: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub match_loss: f64,
    pub spec: f64,
    pub edge: f64,
    pub total: f64,
    pub gradients: Gradients,
}

/// Matching loss summed over instances: `logsumexp(s) - s_pos` per instance.
pub fn loss_match(model: &MatchModel, batch: &[MatchInstance]) -> Result<(f64, Gradients)> {
    let mut grads = Params::zeros(model.dims());
    let mut total = 0.0;
    for inst in batch {
        let pairs: Vec<&Pair> = std::iter::once(&inst.positive)
            .chain(inst.negatives.iter())
            .collect();
        if pairs.len() == 1 {
            // D_i holds only the positive; softmax is exactly 1
            continue;
        }
        let fwd = pairs
            .iter()
            .map(|p| model.forward(&p.image, &p.tokens))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = fwd.iter().map(|f| dot(&model.params.theta, &f.v)).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += max + z.ln() - scores[0];
        for (j, (p, f)) in pairs.iter().zip(&fwd).enumerate() {
            let coef = exps[j] / z - if j == 0 { 1.0 } else { 0.0 };
            model.backprop_score(&p.image, &p.tokens, f, coef, &mut grads);
        }
    }
    Ok((total, grads))
}

/// Specificity loss. A hinge at exactly zero counts as inactive.
pub fn loss_spec(model: &MatchModel, terms: &[SpecTerm]) -> Result<(f64, Gradients)> {
    let mut grads = Params::zeros(model.dims());
    let mut total = 0.0;
    for t in terms {
        let fp = model.forward(&t.image, &t.parent)?;
        let fc = model.forward(&t.image, &t.child)?;
        let margin = dot(&model.params.theta, &fp.v) - dot(&model.params.theta, &fc.v);
        if margin > 0.0 {
            total += margin;
            model.backprop_score(&t.image, &t.parent, &fp, 1.0, &mut grads);
            model.backprop_score(&t.image, &t.child, &fc, -1.0, &mut grads);
        }
    }
    Ok((total, grads))
}

/// Logit of the edge predictor for `[v_parent; v_child]`, with the hidden
/// activations.
pub(crate) fn edge_logit(params: &Params, z: &[f64]) -> (f64, Vec<f64>) {
    let width = z.len();
    let hidden: Vec<f64> = params
        .edge_hidden
        .chunks_exact(width)
        .zip(&params.edge_hidden_bias)
        .map(|(row, b)| (dot(row, z) + b).tanh())
        .collect();
    (dot(&params.edge_out, &hidden) + params.edge_out_bias[0], hidden)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log σ(l)` for edges, `-log(1 - σ(l))` otherwise, computed stably.
pub fn bce_with_logit(logit: f64, is_edge: bool) -> f64 {
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    if is_edge {
        softplus - logit
    } else {
        softplus
    }
}

/// Edge-prediction loss summed over pairs.
pub fn loss_edge(model: &MatchModel, pairs: &[EdgePair]) -> Result<(f64, Gradients)> {
    let h = model.dims().h;
    let p = &model.params;
    let mut grads = Params::zeros(model.dims());
    let mut total = 0.0;
    for pair in pairs {
        let fa = model.forward(&pair.parent.image, &pair.parent.tokens)?;
        let fb = model.forward(&pair.child.image, &pair.child.tokens)?;
        let z: Vec<f64> = fa.v.iter().chain(&fb.v).copied().collect();
        let (logit, hidden) = edge_logit(p, &z);
        total += bce_with_logit(logit, pair.is_edge);

        let dlogit = sigmoid(logit) - if pair.is_edge { 1.0 } else { 0.0 };
        grads.edge_out_bias[0] += dlogit;
        let mut dz = vec![0.0; 2 * h];
        for (k, hk) in hidden.iter().enumerate() {
            grads.edge_out[k] += dlogit * hk;
            let da = dlogit * p.edge_out[k] * (1.0 - hk * hk);
            grads.edge_hidden_bias[k] += da;
            let row = &p.edge_hidden[k * 2 * h..(k + 1) * 2 * h];
            let grow = &mut grads.edge_hidden[k * 2 * h..(k + 1) * 2 * h];
            for i in 0..2 * h {
                grow[i] += da * z[i];
                dz[i] += da * row[i];
            }
        }
        model.backprop_fused(&pair.parent.image, &pair.parent.tokens, &fa, &dz[..h], &mut grads);
        model.backprop_fused(&pair.child.image, &pair.child.tokens, &fb, &dz[h..], &mut grads);
    }
    Ok((total, grads))
}

/// `match + λ1·spec + λ2·edge`, with gradients combined the same way.
pub fn loss_total(
    model: &MatchModel,
    batch: &[MatchInstance],
    spec_terms: &[SpecTerm],
    edge_pairs: &[EdgePair],
    lambda1: f64,
    lambda2: f64,
) -> Result<LossValue> {
    let (match_loss, mut gradients) = loss_match(model, batch)?;
    let (spec, gs) = loss_spec(model, spec_terms)?;
    let (edge, ge) = loss_edge(model, edge_pairs)?;
    gradients.axpy(lambda1, &gs);
    gradients.axpy(lambda2, &ge);
    Ok(LossValue {
        match_loss,
        spec,
        edge,
        total: match_loss + lambda1 * spec + lambda2 * edge,
        gradients,
    })
}
