//! Implementations behind the command-line subcommands.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use treernn_core::autodiff::grad_check;
use treernn_core::data::Dataset;
use treernn_core::deptree::{parse_conllu, DepTree, RelationPolicy, RelationVocab};
use treernn_core::encoders::EncoderKind;
use treernn_core::error::{Error, Result};
use treernn_core::model::{Model, Task};
use treernn_core::pairmodel::{entailment_target, pair_forward, pair_loss};
use treernn_core::synth;
use treernn_core::trainer::{evaluate, log_to_csv, train_with, TaskMetrics};
use treernn_core::WordEmbeddings;

use crate::config::{require_path, RunConfig};
use crate::sick::{assemble_dataset, SickFile, Split};

fn load_model(checkpoint: &Path) -> Result<Model<f64>> {
    if !checkpoint.exists() {
        return Err(Error::Usage(format!(
            "checkpoint path does not exist: {}",
            checkpoint.display()
        )));
    }
    Model::load(checkpoint)
}

fn load_trees(name: &str, path: &Path) -> Result<Vec<DepTree>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read {name} ({}): {e}", path.display())))?;
    parse_conllu(&text)
}

fn tree_word_set(trees: &[DepTree]) -> HashSet<String> {
    let mut words = HashSet::new();
    for tree in trees {
        for node in tree.nodes() {
            words.insert(node.form.clone());
            words.insert(node.form.to_lowercase());
        }
    }
    words
}

struct LoadedData {
    dataset: Dataset,
    words: WordEmbeddings,
    sick: SickFile,
}

fn load_all(cfg: &RunConfig) -> Result<LoadedData> {
    let sick_path = require_path("sick", &cfg.sick)?;
    let conllu_a = require_path("conllu_a", &cfg.conllu_a)?;
    let conllu_b = require_path("conllu_b", &cfg.conllu_b)?;
    let emb_path = require_path("embeddings", &cfg.embeddings)?;

    let sick = SickFile::load(&sick_path)?;
    let trees_a = load_trees("conllu_a", &conllu_a)?;
    let trees_b = load_trees("conllu_b", &conllu_b)?;

    let mut keep = sick.word_set();
    keep.extend(tree_word_set(&trees_a));
    keep.extend(tree_word_set(&trees_b));
    let words = WordEmbeddings::load_glove_text(&emb_path, Some(&keep))?;

    let dataset = assemble_dataset(&sick, trees_a, trees_b)?;
    Ok(LoadedData {
        dataset,
        words,
        sick,
    })
}

fn print_metrics(metrics: &TaskMetrics) {
    match metrics {
        TaskMetrics::Relatedness {
            pearson,
            spearman,
            mse,
            degenerate,
        } => {
            let show = |v: &Option<f64>| match v {
                Some(x) => x.to_string(),
                None => "undefined".to_string(),
            };
            println!("pearson: {}", show(pearson));
            println!("spearman: {}", show(spearman));
            println!("mse: {mse}");
            if *degenerate {
                println!("warning: constant predictions, correlations undefined");
            }
        }
        TaskMetrics::Entailment {
            accuracy,
            confusion,
        } => {
            println!("accuracy: {accuracy}");
            println!("confusion (rows = gold, cols = predicted):");
            let labels = ["CONTRADICTION", "NEUTRAL", "ENTAILMENT"];
            println!(
                "{:>15} {:>13} {:>13} {:>13}",
                "", labels[0], labels[1], labels[2]
            );
            for (i, row) in confusion.iter().enumerate() {
                println!(
                    "{:>15} {:>13} {:>13} {:>13}",
                    labels[i], row[0], row[1], row[2]
                );
            }
        }
    }
}

/// Atomic file write: stage to `<path>.tmp`, then rename into place.
struct StagedWrites {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl StagedWrites {
    fn new() -> Self {
        StagedWrites { staged: Vec::new() }
    }

    fn stage(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(())
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, path) in self.staged.drain(..) {
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}

impl Drop for StagedWrites {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}

/// Train a model; write best/final checkpoints and the per-epoch CSV log.
pub fn cmd_train(cfg: &RunConfig, dry_run: bool) -> Result<()> {
    let hp = &cfg.hp;
    println!("task: {}", hp.task.name());
    println!("encoder: {}", hp.encoder_kind.name());
    println!("learning_rate: {}", hp.learning_rate);
    println!("batch_size: {}", hp.batch_size);
    println!("classifier_hidden: {}", hp.classifier_hidden);
    println!("hidden_size: {}", hp.hidden_size);
    println!("dep_embed_size: {}", hp.dep_embed_size);
    println!("epochs: {}", hp.epochs);
    println!("weight_decay: {}", hp.weight_decay);
    println!("seed: {}", hp.seed);
    println!("relation_policy: {}", hp.relation_policy.name());
    if dry_run {
        println!("dry run: no training performed");
        return Ok(());
    }

    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Usage("missing required path: out_dir".into()))?;
    let loaded = load_all(cfg)?;
    let (train_n, trial_n, test_n) = loaded.sick.split_sizes();
    println!("splits: train {train_n} / trial {trial_n} / test {test_n}");
    println!(
        "embeddings: {} words, dim {}",
        loaded.words.vocab_size(),
        loaded.words.dim()
    );

    let outcome = train_with(&loaded.dataset, &loaded.words, hp, |row| {
        let fmt = |v: Option<f64>| v.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "epoch {:>3}  train_loss {:.6}  dev {}  test {}  ({:.1}s)",
            row.epoch,
            row.train_loss,
            fmt(row.dev_metric),
            fmt(row.test_metric),
            row.wall_seconds
        );
    })?;

    fs::create_dir_all(&out_dir)?;
    let mut writes = StagedWrites::new();
    writes.stage(&out_dir.join("best.ckpt"), &outcome.best_model.to_bytes())?;
    writes.stage(&out_dir.join("final.ckpt"), &outcome.final_model.to_bytes())?;
    writes.stage(
        &out_dir.join("log.csv"),
        log_to_csv(&outcome.log).as_bytes(),
    )?;
    writes.commit()?;

    println!("best epoch: {}", outcome.best_epoch);
    if !loaded.dataset.test.is_empty() {
        println!("test metrics (best checkpoint):");
        print_metrics(&evaluate(
            &outcome.best_model,
            &loaded.dataset.test,
            &loaded.words,
        )?);
    }
    println!("wrote {}", out_dir.join("best.ckpt").display());
    println!("wrote {}", out_dir.join("final.ckpt").display());
    println!("wrote {}", out_dir.join("log.csv").display());
    Ok(())
}

/// Evaluate a checkpoint on one split of a SICK-style dataset.
pub fn cmd_eval(
    checkpoint: &Path,
    cfg: &RunConfig,
    split: Split,
    task_override: Option<Task>,
) -> Result<()> {
    let model = load_model(checkpoint)?;
    if let Some(task) = task_override {
        if task != model.meta.task {
            return Err(Error::Incompatible(format!(
                "checkpoint was trained for {} (K = {}), requested {} (K = {})",
                model.meta.task.name(),
                model.meta.task.classes(),
                task.name(),
                task.classes()
            )));
        }
    }
    let loaded = load_all(cfg)?;
    if loaded.words.dim() != model.meta.word_dim {
        return Err(Error::Incompatible(format!(
            "checkpoint expects {}-dimensional embeddings, file has {}",
            model.meta.word_dim,
            loaded.words.dim()
        )));
    }
    let split_data = match split {
        Split::Train => &loaded.dataset.train,
        Split::Trial => &loaded.dataset.dev,
        Split::Test => &loaded.dataset.test,
    };
    println!("split: {} (n = {})", split.as_str(), split_data.len());
    print_metrics(&evaluate(&model, split_data, &loaded.words)?);
    Ok(())
}

/// Score or label pre-parsed sentence pairs, one output line per pair.
pub fn cmd_predict(
    checkpoint: &Path,
    conllu_a: &Path,
    conllu_b: &Path,
    embeddings: &Path,
) -> Result<()> {
    let model = load_model(checkpoint)?;
    let trees_a = load_trees("conllu_a", conllu_a)?;
    let trees_b = load_trees("conllu_b", conllu_b)?;
    if trees_a.len() != trees_b.len() {
        return Err(Error::Usage(format!(
            "sentence counts differ: {} in {}, {} in {}",
            trees_a.len(),
            conllu_a.display(),
            trees_b.len(),
            conllu_b.display()
        )));
    }
    let mut keep = tree_word_set(&trees_a);
    keep.extend(tree_word_set(&trees_b));
    let words = WordEmbeddings::load_glove_text(embeddings, Some(&keep))?;
    if words.dim() != model.meta.word_dim {
        return Err(Error::Incompatible(format!(
            "checkpoint expects {}-dimensional embeddings, file has {}",
            model.meta.word_dim,
            words.dim()
        )));
    }

    // Streaming output through a pipe: stop quietly when the reader closes.
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (tree_a, tree_b) in trees_a.iter().zip(&trees_b) {
        let line = match model.meta.task {
            Task::Relatedness => {
                let score = model.predict_score(tree_a, tree_b, &words)?;
                score.to_string()
            }
            Task::Entailment => {
                let p = model.predict_distribution(tree_a, tree_b, &words)?;
                let label = treernn_core::pairmodel::predicted_label(&p);
                let probs: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                format!("{}\t{}", label.as_str(), probs.join(" "))
            }
        };
        use std::io::Write;
        match writeln!(out, "{line}") {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Check autodiff gradients of the chosen encoder against central finite
/// differences over five random small tree pairs.
pub fn cmd_gradcheck(kind: EncoderKind, seed: u64, corrupt: bool) -> Result<()> {
    let words: WordEmbeddings =
        WordEmbeddings::synthetic_scaled(&synth::synth_words(), 8, seed, 0.5);
    let relations = RelationVocab::from_labels(synth::SYNTH_RELATIONS, RelationPolicy::Subtyped);
    let mut model: Model<f64> = Model::init(Task::Entailment, kind, 6, 8, 3, 6, 4, relations, seed);
    let tree_pairs = synth::random_tree_pairs(seed.wrapping_add(1), 5);

    println!("gradient check: encoder {} seed {seed}", kind.name());
    let mut worst: Vec<(String, f64)> = model
        .store
        .iter()
        .map(|(name, _)| (name.to_string(), 0.0))
        .collect();
    let mut all_passed = true;

    for (pair, (tree_a, tree_b)) in tree_pairs.iter().enumerate() {
        let target = entailment_target::<f64>(
            treernn_core::data::EntailmentLabel::from_index(pair % 3).unwrap(),
        );

        let encoder = &model.encoder;
        let head = &model.head;
        let rel = &model.meta.relations;
        let report = grad_check(
            &mut model.store,
            |g, s| {
                if corrupt {
                    g.corrupt_tanh_backward();
                }
                let u = encoder.encode(g, s, tree_a, &words, rel)?;
                let v = encoder.encode(g, s, tree_b, &words, rel)?;
                let p = pair_forward(g, s, head, u, v)?;
                pair_loss(g, s, &[(target.clone(), p)], None)
            },
            1e-5,
            1e-4,
        )?;
        for ((_, acc), (_, max)) in worst.iter_mut().zip(&report.per_param) {
            if *max > *acc {
                *acc = *max;
            }
        }
        let verdict = if report.passed() { "pass" } else { "FAIL" };
        println!(
            "pair {}: {} words vs {} words -> {} (max rel error {:.3e})",
            pair + 1,
            tree_a.sentence_length,
            tree_b.sentence_length,
            verdict,
            report.max_rel_error
        );
        all_passed &= report.passed();
    }

    println!("per-parameter max relative error:");
    for (name, max) in &worst {
        println!("  {name:<24} {max:.3e}");
    }
    if all_passed {
        println!("gradient check passed (tolerance 1e-4)");
        Ok(())
    } else {
        let worst_overall = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
        if worst_overall < 1e-3 {
            println!(
                "note: errors this close to tolerance usually mean a finite-difference step \
                 straddled a rectifier corner; try another seed before suspecting the gradients"
            );
        }
        Err(Error::Domain(
            "gradient check failed: autodiff disagrees with finite differences".into(),
        ))
    }
}

/// Sanity-check alignment between a SICK file and its two CoNLL-U files
/// using token-count heuristics.
pub fn cmd_validate(sick_path: &Path, conllu_a: &Path, conllu_b: &Path) -> Result<()> {
    let sick = SickFile::load(sick_path)?;
    let trees_a = load_trees("conllu_a", conllu_a)?;
    let trees_b = load_trees("conllu_b", conllu_b)?;
    if trees_a.len() != sick.records.len() || trees_b.len() != sick.records.len() {
        return Err(Error::Data(format!(
            "sentence counts differ: {} records, {} side-A parses, {} side-B parses",
            sick.records.len(),
            trees_a.len(),
            trees_b.len()
        )));
    }

    // Parses tokenize punctuation, so allow the tree a modest surplus.
    let suspicious = |sentence: &str, tree: &DepTree| {
        let text_tokens = sentence.split_whitespace().count();
        let tree_tokens = tree.sentence_length;
        tree_tokens + 1 < text_tokens || tree_tokens > text_tokens + (text_tokens / 2) + 3
    };
    let mut flagged = 0;
    for ((record, tree_a), tree_b) in sick.records.iter().zip(&trees_a).zip(&trees_b) {
        let bad_a = suspicious(&record.sentence_a, tree_a);
        let bad_b = suspicious(&record.sentence_b, tree_b);
        if bad_a || bad_b {
            flagged += 1;
            println!(
                "pair {}: token counts text A {} / tree A {}, text B {} / tree B {}",
                record.pair_id,
                record.sentence_a.split_whitespace().count(),
                tree_a.sentence_length,
                record.sentence_b.split_whitespace().count(),
                tree_b.sentence_length
            );
        }
    }
    println!(
        "checked {} pairs: {} suspicious",
        sick.records.len(),
        flagged
    );
    Ok(())
}
