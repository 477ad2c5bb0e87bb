//! Run configuration: a flat `key = value` file with command-line overrides.
//!
//! Recognized keys mirror the hyperparameter names plus the input paths:
//!
//! ```text
//! task              relatedness | entailment
//! encoder           typed | positional | relational | single
//! learning_rate     positive real
//! batch_size        positive integer
//! classifier_hidden positive integer
//! hidden_size       positive integer
//! dep_embed_size    positive integer
//! epochs            positive integer
//! weight_decay      non-negative real
//! seed              unsigned integer
//! coarse_relations  true | false   (truncate relation subtypes at ':')
//! l2_in_loss        true | false   (explicit loss term instead of decay)
//! sick              path to the SICK tsv
//! conllu_a          path to side-A parses (CoNLL-U, record order)
//! conllu_b          path to side-B parses
//! embeddings        path to GloVe-format word vectors
//! out_dir           output directory for checkpoints and the log
//! ```
//!
//! Later sources win: task defaults, then the config file, then flags.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use treernn_core::deptree::RelationPolicy;
use treernn_core::encoders::EncoderKind;
use treernn_core::error::{Error, Result};
use treernn_core::model::Task;
use treernn_core::pairmodel::Regularization;
use treernn_core::trainer::Hyperparams;

/// Fully resolved inputs for one command invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub sick: Option<PathBuf>,
    pub conllu_a: Option<PathBuf>,
    pub conllu_b: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub hp: Hyperparams,
}

/// Raw overrides gathered from the config file or the command line,
/// applied on top of the task's defaults.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub encoder: Option<EncoderKind>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub classifier_hidden: Option<usize>,
    pub hidden_size: Option<usize>,
    pub dep_embed_size: Option<usize>,
    pub epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
    pub coarse_relations: Option<bool>,
    pub l2_in_loss: Option<bool>,
    pub sick: Option<PathBuf>,
    pub conllu_a: Option<PathBuf>,
    pub conllu_b: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    /// Parse a `key = value` file. `#` starts a comment; blank lines are
    /// skipped; unknown keys are usage errors.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Usage(format!(
                "cannot read config {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Usage(format!(
                    "config line {}: expected key = value, found {line:?}",
                    line_no + 1
                ))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(map)
    }

    fn from_map(map: HashMap<String, String>) -> Result<Self> {
        let mut o = Overrides::default();
        for (key, value) in map {
            match key.as_str() {
                "task" => {
                    o.task = Some(
                        Task::parse(&value)
                            .ok_or_else(|| Error::Usage(format!("unknown task {value:?}")))?,
                    )
                }
                "encoder" => {
                    o.encoder = Some(
                        EncoderKind::parse(&value)
                            .ok_or_else(|| Error::Usage(format!("unknown encoder {value:?}")))?,
                    )
                }
                "learning_rate" => o.learning_rate = Some(parse_num(&key, &value)?),
                "batch_size" => o.batch_size = Some(parse_num(&key, &value)?),
                "classifier_hidden" => o.classifier_hidden = Some(parse_num(&key, &value)?),
                "hidden_size" => o.hidden_size = Some(parse_num(&key, &value)?),
                "dep_embed_size" => o.dep_embed_size = Some(parse_num(&key, &value)?),
                "epochs" => o.epochs = Some(parse_num(&key, &value)?),
                "weight_decay" => o.weight_decay = Some(parse_num(&key, &value)?),
                "seed" => o.seed = Some(parse_num(&key, &value)?),
                "coarse_relations" => o.coarse_relations = Some(parse_bool(&key, &value)?),
                "l2_in_loss" => o.l2_in_loss = Some(parse_bool(&key, &value)?),
                "sick" => o.sick = Some(PathBuf::from(value)),
                "conllu_a" => o.conllu_a = Some(PathBuf::from(value)),
                "conllu_b" => o.conllu_b = Some(PathBuf::from(value)),
                "embeddings" => o.embeddings = Some(PathBuf::from(value)),
                "out_dir" => o.out_dir = Some(PathBuf::from(value)),
                other => return Err(Error::Usage(format!("unknown config key {other:?}"))),
            }
        }
        Ok(o)
    }

    /// Merge `other` on top of `self` (fields set in `other` win).
    pub fn overlaid_with(mut self, other: Overrides) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            task,
            encoder,
            learning_rate,
            batch_size,
            classifier_hidden,
            hidden_size,
            dep_embed_size,
            epochs,
            weight_decay,
            seed,
            coarse_relations,
            l2_in_loss,
            sick,
            conllu_a,
            conllu_b,
            embeddings,
            out_dir
        );
        self
    }

    /// Resolve against the task's default hyperparameters.
    pub fn resolve(self) -> RunConfig {
        let task = self.task.unwrap_or(Task::Relatedness);
        let mut hp = Hyperparams::defaults_for(task);
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { hp.$field = v; })*
            };
        }
        set!(
            learning_rate,
            batch_size,
            classifier_hidden,
            hidden_size,
            dep_embed_size,
            epochs,
            weight_decay,
            seed
        );
        if let Some(kind) = self.encoder {
            hp.encoder_kind = kind;
        }
        if let Some(true) = self.coarse_relations {
            hp.relation_policy = RelationPolicy::Coarse;
        }
        if let Some(true) = self.l2_in_loss {
            hp.regularization = Regularization::LossTerm;
        }
        RunConfig {
            sick: self.sick,
            conllu_a: self.conllu_a,
            conllu_b: self.conllu_b,
            embeddings: self.embeddings,
            out_dir: self.out_dir,
            hp,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("config key {key}: unparseable value {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Usage(format!(
            "config key {key}: expected true/false, found {other:?}"
        ))),
    }
}

/// Usage error unless the path was provided and exists.
pub fn require_path(name: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("missing required path: {name}")))?;
    if !path.exists() {
        return Err(Error::Usage(format!(
            "{name} path does not exist: {}",
            path.display()
        )));
    }
    Ok(path.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relatedness_defaults_match_the_tuned_settings() {
        let cfg = Overrides::default().resolve();
        assert_eq!(cfg.hp.task, Task::Relatedness);
        assert_eq!(cfg.hp.learning_rate, 0.01);
        assert_eq!(cfg.hp.batch_size, 25);
        assert_eq!(cfg.hp.hidden_size, 130);
        assert_eq!(cfg.hp.dep_embed_size, 30);
        assert_eq!(cfg.hp.epochs, 14);
        assert_eq!(cfg.hp.weight_decay, 1e-4);
    }

    #[test]
    fn entailment_defaults_match_the_tuned_settings() {
        let o = Overrides::parse("task = entailment\n").unwrap();
        let cfg = o.resolve();
        assert_eq!(cfg.hp.learning_rate, 0.015);
        assert_eq!(cfg.hp.batch_size, 10);
        assert_eq!(cfg.hp.hidden_size, 100);
        assert_eq!(cfg.hp.dep_embed_size, 10);
        assert_eq!(cfg.hp.epochs, 26);
    }

    #[test]
    fn file_values_override_defaults_and_flags_override_files() {
        let file = Overrides::parse("task = entailment\nepochs = 5\nseed = 9\n").unwrap();
        let flags = Overrides {
            epochs: Some(2),
            ..Default::default()
        };
        let cfg = file.overlaid_with(flags).resolve();
        assert_eq!(cfg.hp.epochs, 2);
        assert_eq!(cfg.hp.seed, 9);
        assert_eq!(cfg.hp.task, Task::Entailment);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let o = Overrides::parse("# header\n\nseed = 3 # trailing\n").unwrap();
        assert_eq!(o.seed, Some(3));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(matches!(
            Overrides::parse("learning_rat = 0.1\n"),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn coarse_and_l2_switches_map_to_policy_and_regularization() {
        let o = Overrides::parse("coarse_relations = true\nl2_in_loss = true\n").unwrap();
        let cfg = o.resolve();
        assert_eq!(cfg.hp.relation_policy, RelationPolicy::Coarse);
        assert_eq!(cfg.hp.regularization, Regularization::LossTerm);
    }
}
