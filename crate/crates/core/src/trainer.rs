//! Mini-batch AdaGrad training loop with seeded shuffling, dev-set model
//! selection, and per-epoch metric logging.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::AdaGrad;
use crate::data::{Dataset, EntailmentLabel, PairExample};
use crate::deptree::{RelationPolicy, RelationVocab};
use crate::embeddings::WordEmbeddings;
use crate::encoders::{EncoderKind, PositionalParams};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{Model, Task};
use crate::pairmodel::{entailment_target, pair_loss, score_to_distribution, Regularization};
use crate::scalar::{cast, Scalar};

/// Everything that determines a training run besides the data itself.
#[derive(Clone, Debug)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub classifier_hidden: usize,
    pub hidden_size: usize,
    pub dep_embed_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub task: Task,
    pub encoder_kind: EncoderKind,
    pub seed: u64,
    pub relation_policy: RelationPolicy,
    pub regularization: Regularization,
}

impl Hyperparams {
    /// Defaults tuned for relatedness scoring on SICK.
    pub fn sick_relatedness() -> Self {
        Hyperparams {
            learning_rate: 0.01,
            batch_size: 25,
            classifier_hidden: 100,
            hidden_size: 130,
            dep_embed_size: 30,
            epochs: 14,
            weight_decay: 1e-4,
            task: Task::Relatedness,
            encoder_kind: EncoderKind::Typed,
            seed: 1,
            relation_policy: RelationPolicy::Subtyped,
            regularization: Regularization::WeightDecay,
        }
    }

    /// Defaults tuned for entailment classification on SICK.
    pub fn sick_entailment() -> Self {
        Hyperparams {
            learning_rate: 0.015,
            batch_size: 10,
            classifier_hidden: 100,
            hidden_size: 100,
            dep_embed_size: 10,
            epochs: 26,
            weight_decay: 1e-4,
            task: Task::Entailment,
            encoder_kind: EncoderKind::Typed,
            seed: 1,
            relation_policy: RelationPolicy::Subtyped,
            regularization: Regularization::WeightDecay,
        }
    }

    pub fn defaults_for(task: Task) -> Self {
        match task {
            Task::Relatedness => Self::sick_relatedness(),
            Task::Entailment => Self::sick_entailment(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.batch_size == 0
            || self.classifier_hidden == 0
            || self.hidden_size == 0
            || self.epochs == 0
            || self.weight_decay < 0.0
        {
            return Err(Error::Usage(
                "hyperparameters must be positive (weight decay non-negative)".into(),
            ));
        }
        if self.encoder_kind == EncoderKind::Typed && self.dep_embed_size == 0 {
            return Err(Error::Usage(
                "typed encoder needs dep_embed_size > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: Option<f64>,
    pub test_metric: Option<f64>,
    pub wall_seconds: f64,
}

/// Render the log as CSV, one row per epoch. Metrics that are undefined
/// (degenerate correlations, absent splits) render as empty fields.
pub fn log_to_csv(rows: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,dev_metric,test_metric,wall_seconds\n");
    for row in rows {
        let opt = |v: Option<f64>| v.map(|m| m.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch,
            row.train_loss,
            opt(row.dev_metric),
            opt(row.test_metric),
            row.wall_seconds
        ));
    }
    out
}

/// Result of a training run: the last-epoch model, the best-on-dev model,
/// and the per-epoch log.
#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub final_model: Model<F>,
    pub best_model: Model<F>,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub optimizer_steps: usize,
}

/// Metrics of one split under one task.
#[derive(Clone, Debug)]
pub enum TaskMetrics {
    Relatedness {
        pearson: Option<f64>,
        spearman: Option<f64>,
        mse: f64,
        /// Set when a correlation was undefined (constant predictions).
        degenerate: bool,
    },
    Entailment {
        accuracy: f64,
        /// confusion[gold][predicted] over the fixed class order.
        confusion: [[usize; 3]; 3],
    },
}

impl TaskMetrics {
    /// The model-selection metric: dev Pearson for relatedness, dev
    /// accuracy for entailment. `None` when undefined.
    pub fn primary(&self) -> Option<f64> {
        match self {
            TaskMetrics::Relatedness { pearson, .. } => *pearson,
            TaskMetrics::Entailment { accuracy, .. } => Some(*accuracy),
        }
    }
}

/// Evaluate a trained model on a split.
pub fn evaluate<F: Scalar>(
    model: &Model<F>,
    split: &[PairExample],
    words: &WordEmbeddings<F>,
) -> Result<TaskMetrics> {
    if split.is_empty() {
        return Err(Error::Usage("evaluate: empty split".into()));
    }
    match model.meta.task {
        Task::Relatedness => {
            let mut predicted = Vec::with_capacity(split.len());
            let mut gold = Vec::with_capacity(split.len());
            for ex in split {
                let score = model.predict_score(&ex.tree_a, &ex.tree_b, words)?;
                predicted.push(score.to_f64().expect("scalar to f64"));
                gold.push(ex.relatedness);
            }
            let mse = metrics::mse(&predicted, &gold)?;
            let pearson = metrics::pearson(&predicted, &gold).ok();
            let spearman = metrics::spearman(&predicted, &gold).ok();
            let degenerate = pearson.is_none() || spearman.is_none();
            Ok(TaskMetrics::Relatedness {
                pearson,
                spearman,
                mse,
                degenerate,
            })
        }
        Task::Entailment => {
            let mut predicted = Vec::with_capacity(split.len());
            let mut gold = Vec::with_capacity(split.len());
            let mut confusion = [[0usize; 3]; 3];
            for ex in split {
                let label = model.predict_label(&ex.tree_a, &ex.tree_b, words)?;
                confusion[ex.entailment.index()][label.index()] += 1;
                predicted.push(label);
                gold.push(ex.entailment);
            }
            let accuracy = metrics::accuracy(&predicted, &gold)?;
            Ok(TaskMetrics::Entailment {
                accuracy,
                confusion,
            })
        }
    }
}

fn target_for<F: Scalar>(task: Task, ex: &PairExample) -> Result<Vec<F>> {
    match task {
        Task::Relatedness => score_to_distribution(cast(ex.relatedness), 5),
        Task::Entailment => Ok(entailment_target(ex.entailment)),
    }
}

fn seeded_permutation(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Train a model to completion, evaluating the dev split after each epoch
/// and retaining the checkpoint with the best dev metric.
pub fn train<F: Scalar>(
    data: &Dataset,
    words: &WordEmbeddings<F>,
    hp: &Hyperparams,
) -> Result<TrainOutcome<F>> {
    train_with(data, words, hp, |_| {})
}

/// [`train`] with a per-epoch observer for live progress reporting.
pub fn train_with<F: Scalar>(
    data: &Dataset,
    words: &WordEmbeddings<F>,
    hp: &Hyperparams,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>> {
    hp.validate()?;
    if data.train.is_empty() {
        return Err(Error::Usage("train: empty training split".into()));
    }

    let relations = RelationVocab::from_trees(
        data.train.iter().flat_map(|ex| [&ex.tree_a, &ex.tree_b]),
        hp.relation_policy,
    );
    let max_offset = match hp.encoder_kind {
        EncoderKind::Positional => PositionalParams::required_offset(
            data.train.iter().flat_map(|ex| [&ex.tree_a, &ex.tree_b]),
        ),
        _ => 0,
    };
    let mut model: Model<F> = Model::init(
        hp.task,
        hp.encoder_kind,
        hp.hidden_size,
        words.dim(),
        hp.dep_embed_size,
        hp.classifier_hidden,
        max_offset,
        relations,
        hp.seed,
    );

    let (decay, l2_term) = match hp.regularization {
        Regularization::WeightDecay => (hp.weight_decay, None),
        Regularization::LossTerm => (0.0, Some(cast::<F>(hp.weight_decay))),
    };
    let mut optimizer = AdaGrad::new(cast::<F>(hp.learning_rate), cast::<F>(decay));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut log = Vec::with_capacity(hp.epochs);
    let mut best: Option<(f64, usize, Model<F>)> = None;
    let mut optimizer_steps = 0usize;

    for epoch in 1..=hp.epochs {
        let started = Instant::now();
        let perm = seeded_permutation(data.train.len(), &mut shuffle_rng);
        let mut loss_sum = 0.0f64;

        for (batch_no, batch) in perm.chunks(hp.batch_size).enumerate() {
            let mut graph = crate::autodiff::Graph::new();
            let mut items = Vec::with_capacity(batch.len());
            for &idx in batch {
                let ex = &data.train[idx];
                let p_hat = model.pair_distribution(&mut graph, &ex.tree_a, &ex.tree_b, words)?;
                items.push((target_for::<F>(hp.task, ex)?, p_hat));
            }
            let loss = pair_loss(&mut graph, &model.store, &items, l2_term)?;
            let loss_value = graph.value(loss).item().to_f64().expect("scalar to f64");
            if !loss_value.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite loss {loss_value} at epoch {epoch}, batch {batch_no}"
                )));
            }
            loss_sum += loss_value * batch.len() as f64;

            graph.backward(loss)?;
            graph.accumulate_param_grads(&mut model.store)?;
            for id in model.store.ids().collect::<Vec<_>>() {
                model.store.get_mut(id).grad_or_init();
            }
            optimizer.step(&mut model.store)?;
            optimizer_steps += 1;
        }

        let train_loss = loss_sum / data.train.len() as f64;
        let dev_metric = if data.dev.is_empty() {
            None
        } else {
            evaluate(&model, &data.dev, words)?.primary()
        };
        let test_metric = if data.test.is_empty() {
            None
        } else {
            evaluate(&model, &data.test, words)?.primary()
        };

        if let Some(m) = dev_metric {
            let improved = match &best {
                None => true,
                Some((best_m, _, _)) => m > *best_m,
            };
            if improved {
                best = Some((m, epoch, model.clone()));
            }
        }

        let row = EpochLog {
            epoch,
            train_loss,
            dev_metric,
            test_metric,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        log.push(row);
    }

    let (best_epoch, best_model) = match best {
        Some((_, epoch, model)) => (epoch, model),
        None => (hp.epochs, model.clone()),
    };
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_epoch,
        log,
        optimizer_steps,
    })
}

/// Mean per-example KL of a split under the current model, without any
/// regularization term. The overfitting smoke tests read this directly.
pub fn mean_kl_loss<F: Scalar>(
    model: &Model<F>,
    split: &[PairExample],
    words: &WordEmbeddings<F>,
) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Usage("mean_kl_loss: empty split".into()));
    }
    let mut total = 0.0f64;
    for ex in split {
        let mut graph = crate::autodiff::Graph::new();
        let p_hat = model.pair_distribution(&mut graph, &ex.tree_a, &ex.tree_b, words)?;
        let target = target_for::<F>(model.meta.task, ex)?;
        let kl = graph.kl_div(&target, p_hat)?;
        total += graph.value(kl).item().to_f64().expect("scalar to f64");
    }
    Ok(total / split.len() as f64)
}

/// Count of entailment labels predicted correctly on a split.
pub fn split_accuracy<F: Scalar>(
    model: &Model<F>,
    split: &[PairExample],
    words: &WordEmbeddings<F>,
) -> Result<f64> {
    let predicted: Vec<EntailmentLabel> = split
        .iter()
        .map(|ex| model.predict_label(&ex.tree_a, &ex.tree_b, words))
        .collect::<Result<_>>()?;
    let gold: Vec<EntailmentLabel> = split.iter().map(|ex| ex.entailment).collect();
    metrics::accuracy(&predicted, &gold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn tiny_hp(epochs: usize) -> Hyperparams {
        Hyperparams {
            learning_rate: 0.05,
            batch_size: 4,
            classifier_hidden: 8,
            hidden_size: 6,
            dep_embed_size: 3,
            epochs,
            weight_decay: 0.0,
            task: Task::Entailment,
            encoder_kind: EncoderKind::Typed,
            seed: 11,
            relation_policy: RelationPolicy::Subtyped,
            regularization: Regularization::WeightDecay,
        }
    }

    fn tiny_data(n: usize) -> (Dataset, WordEmbeddings<f64>) {
        let pairs = synth::random_pairs(3, n);
        let words = WordEmbeddings::synthetic(&synth::synth_words(), 5, 8);
        (
            Dataset::new(pairs.clone(), pairs[..2.min(n)].to_vec(), vec![]),
            words,
        )
    }

    #[test]
    fn optimizer_steps_per_epoch_is_ceil_of_batches() {
        let (data, words) = tiny_data(10);
        let hp = tiny_hp(3);
        let out = train(&data, &words, &hp).unwrap();
        // ceil(10 / 4) = 3 batches per epoch.
        assert_eq!(out.optimizer_steps, 3 * 3);
        assert_eq!(out.log.len(), 3);
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let (data, words) = tiny_data(8);
        let hp = tiny_hp(2);
        let a = train(&data, &words, &hp).unwrap();
        let b = train(&data, &words, &hp).unwrap();
        assert_eq!(a.final_model.to_bytes(), b.final_model.to_bytes());
        assert_eq!(a.best_model.to_bytes(), b.best_model.to_bytes());
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.dev_metric, y.dev_metric);
        }
    }

    #[test]
    fn loss_decreases_on_a_tiny_problem() {
        let (data, words) = tiny_data(8);
        let hp = tiny_hp(30);
        let out = train(&data, &words, &hp).unwrap();
        let first = out.log.first().unwrap().train_loss;
        let last = out.log.last().unwrap().train_loss;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn empty_training_split_is_a_usage_error() {
        let (_, words) = tiny_data(2);
        let data = Dataset::default();
        assert!(matches!(
            train(&data, &words, &tiny_hp(1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn perfect_predictions_evaluate_perfectly() {
        // Gold == predicted is simulated by evaluating a model against its
        // own outputs: feed the model's scores back as gold labels.
        let (data, words) = tiny_data(6);
        let hp = tiny_hp(1);
        let out = train(&data, &words, &hp).unwrap();
        let mut echoed = data.train.clone();
        for ex in &mut echoed {
            ex.entailment = out
                .final_model
                .predict_label(&ex.tree_a, &ex.tree_b, &words)
                .unwrap();
        }
        match evaluate(&out.final_model, &echoed, &words).unwrap() {
            TaskMetrics::Entailment {
                accuracy,
                confusion,
            } => {
                assert_eq!(accuracy, 1.0);
                let off_diagonal: usize = (0..3)
                    .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| confusion[i][j])
                    .sum();
                assert_eq!(off_diagonal, 0);
            }
            other => panic!("wrong metrics variant {other:?}"),
        }
    }

    #[test]
    fn relatedness_metrics_against_echoed_scores() {
        let (mut data, words) = tiny_data(6);
        let mut hp = tiny_hp(1);
        hp.task = Task::Relatedness;
        let out = train(&data, &words, &hp).unwrap();
        for ex in &mut data.train {
            ex.relatedness = out
                .final_model
                .predict_score(&ex.tree_a, &ex.tree_b, &words)
                .unwrap();
        }
        match evaluate(&out.final_model, &data.train, &words).unwrap() {
            TaskMetrics::Relatedness {
                pearson,
                spearman,
                mse,
                degenerate,
            } => {
                assert!(!degenerate);
                assert!((pearson.unwrap() - 1.0).abs() < 1e-9);
                assert!((spearman.unwrap() - 1.0).abs() < 1e-9);
                assert!(mse < 1e-20);
            }
            other => panic!("wrong metrics variant {other:?}"),
        }
    }

    #[test]
    fn constant_predictions_flag_degenerate_correlation() {
        // A freshly initialized model with zeroed parameters predicts the
        // uniform distribution for every pair: constant scores.
        let (data, words) = tiny_data(5);
        let mut hp = tiny_hp(1);
        hp.task = Task::Relatedness;
        let relations = RelationVocab::from_trees(
            data.train.iter().flat_map(|ex| [&ex.tree_a, &ex.tree_b]),
            hp.relation_policy,
        );
        let mut model: Model<f64> = Model::init(
            Task::Relatedness,
            EncoderKind::Typed,
            hp.hidden_size,
            words.dim(),
            hp.dep_embed_size,
            hp.classifier_hidden,
            0,
            relations,
            hp.seed,
        );
        for id in model.store.ids().collect::<Vec<_>>() {
            for v in model.store.get_mut(id).as_mut_slice() {
                *v = 0.0;
            }
        }
        match evaluate(&model, &data.train, &words).unwrap() {
            TaskMetrics::Relatedness {
                pearson,
                degenerate,
                ..
            } => {
                assert!(degenerate);
                assert!(pearson.is_none());
            }
            other => panic!("wrong metrics variant {other:?}"),
        }
    }

    #[test]
    fn csv_log_has_one_row_per_epoch() {
        let rows = vec![
            EpochLog {
                epoch: 1,
                train_loss: 0.5,
                dev_metric: Some(0.25),
                test_metric: None,
                wall_seconds: 0.1,
            },
            EpochLog {
                epoch: 2,
                train_loss: 0.4,
                dev_metric: None,
                test_metric: Some(0.5),
                wall_seconds: 0.2,
            },
        ];
        let csv = log_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "epoch,train_loss,dev_metric,test_metric,wall_seconds"
        );
        assert_eq!(lines[1], "1,0.5,0.25,,0.1");
        assert_eq!(lines[2], "2,0.4,,0.5,0.2");
    }
}
