//! Siamese sentence-pair head: feature construction, softmax classifier,
//! score/distribution transforms, and the training loss.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, Graph, ParamId, ParamStore, Tensor, VarId};
use crate::data::EntailmentLabel;
use crate::error::{Error, Result};
use crate::scalar::{cast, cast_usize, Scalar};

/// Classifier parameters over a pair of sentence vectors.
#[derive(Clone, Debug)]
pub struct PairHead {
    pub w_c: ParamId,
    pub b_c: ParamId,
    pub w_p: ParamId,
    pub b_p: ParamId,
    /// Classifier hidden size c.
    pub hidden: usize,
    /// Number of output classes K (5 for relatedness, 3 for entailment).
    pub classes: usize,
}

impl PairHead {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        sentence_dim: usize,
        hidden: usize,
        classes: usize,
    ) -> Self {
        use rand::Rng;
        let mut matrix = |name: &str, rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            let data: Vec<F> = (0..rows * cols)
                .map(|_| cast(rng.random_range(-bound..bound)))
                .collect();
            store.register(name, Tensor::matrix(rows, cols, data).expect("init shape"))
        };
        let w_c = matrix("head.w_c", hidden, 2 * sentence_dim);
        let w_p = matrix("head.w_p", classes, hidden);
        let b_c = store.register(
            "head.b_c",
            Tensor::zeros(crate::autodiff::Shape::Vector(hidden)),
        );
        let b_p = store.register(
            "head.b_p",
            Tensor::zeros(crate::autodiff::Shape::Vector(classes)),
        );
        PairHead {
            w_c,
            b_c,
            w_p,
            b_p,
            hidden,
            classes,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w_c, self.w_p, self.b_c, self.b_p]
    }
}

/// Convert a gold relatedness score in [1, K] into a probability
/// distribution over the K score classes: mass splits linearly between the
/// two adjacent integer scores, and an integer score (K included) is
/// one-hot.
pub fn score_to_distribution<F: Scalar>(y: F, classes: usize) -> Result<Vec<F>> {
    let k = cast_usize::<F>(classes);
    if !(y >= F::one() && y <= k) {
        return Err(Error::Domain(format!(
            "relatedness score {y} outside [1, {classes}]"
        )));
    }
    let floor = y.floor();
    let floor_idx = floor
        .to_usize()
        .expect("floor of a value in [1, K] fits usize");
    let mut p = vec![F::zero(); classes];
    p[floor_idx - 1] = floor - y + F::one();
    if floor_idx < classes {
        p[floor_idx] = y - floor;
    }
    Ok(p)
}

/// Expected score `sum i * p_i` of a distribution over classes 1..=K.
pub fn distribution_to_score<F: Scalar>(p: &[F]) -> F {
    let mut acc = F::zero();
    for (i, &pi) in p.iter().enumerate() {
        acc += cast_usize::<F>(i + 1) * pi;
    }
    acc
}

/// One-hot target over the three entailment classes.
pub fn entailment_target<F: Scalar>(label: EntailmentLabel) -> Vec<F> {
    let mut p = vec![F::zero(); 3];
    p[label.index()] = F::one();
    p
}

/// Class with the largest predicted probability.
pub fn predicted_label<F: Scalar>(p_hat: &[F]) -> EntailmentLabel {
    let mut best = 0;
    for i in 1..p_hat.len() {
        if p_hat[i] > p_hat[best] {
            best = i;
        }
    }
    EntailmentLabel::from_index(best).expect("K = 3 distribution")
}

/// Forward pass of the pair head over two sentence vectors:
/// features `(u ⊙ v : |u − v|)`, a tanh hidden layer, then softmax.
/// Symmetric in its arguments since both features are.
pub fn pair_forward<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    head: &PairHead,
    u: VarId,
    v: VarId,
) -> Result<VarId> {
    let prod = graph.mul(u, v)?;
    let diff = graph.abs_diff(u, v)?;
    let feat = graph.concat(prod, diff)?;
    let w_c = graph.param(store, head.w_c);
    let b_c = graph.param(store, head.b_c);
    let pre = graph.matvec(w_c, feat)?;
    let pre = graph.add(pre, b_c)?;
    let h_s = Activation::Tanh.apply(graph, pre);
    let w_p = graph.param(store, head.w_p);
    let b_p = graph.param(store, head.b_p);
    let logits = graph.matvec(w_p, h_s)?;
    let logits = graph.add(logits, b_p)?;
    graph.softmax(logits)
}

/// Mean KL divergence over a batch, optionally plus an explicit
/// `lambda/2 * ||theta||^2` term over every stored parameter.
///
/// The L2 term and AdaGrad weight decay realize the same regularizer;
/// exactly one of the two is active in any configuration.
pub fn pair_loss<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    batch: &[(Vec<F>, VarId)],
    l2_lambda: Option<F>,
) -> Result<VarId> {
    if batch.is_empty() {
        return Err(Error::Usage("pair_loss: empty batch".into()));
    }
    let mut loss = graph.mean_kl(batch)?;
    if let Some(lambda) = l2_lambda {
        let mut norm = None;
        for id in store.ids().collect::<Vec<_>>() {
            let leaf = graph.param(store, id);
            let sq = graph.mul(leaf, leaf)?;
            let s = graph.sum(sq);
            norm = Some(match norm {
                None => s,
                Some(acc) => graph.add(acc, s)?,
            });
        }
        if let Some(norm) = norm {
            let term = graph.scale(norm, lambda / cast(2.0));
            loss = graph.add(loss, term)?;
        }
    }
    Ok(loss)
}

/// How the L2 regularizer is realized during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularization {
    /// `g + lambda * theta` inside the AdaGrad step (default).
    WeightDecay,
    /// Explicit `lambda/2 * ||theta||^2` term added to the loss.
    LossTerm,
}
