//! SICK sentence-pair corpus ingestion (tab-separated with a header row).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use treernn_core::data::{Dataset, EntailmentLabel, PairExample};
use treernn_core::deptree::DepTree;
use treernn_core::error::{Error, Result};

/// Corpus partition tags as used by the SICK distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Trial,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TRAIN" => Ok(Split::Train),
            "TRIAL" => Ok(Split::Trial),
            "TEST" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown SemEval_set value {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Trial => "TRIAL",
            Split::Test => "TEST",
        }
    }
}

/// One row of the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct SickRecord {
    pub pair_id: u64,
    pub sentence_a: String,
    pub sentence_b: String,
    pub relatedness: f64,
    pub entailment: EntailmentLabel,
    pub split: Split,
}

/// All records in file order, before any split grouping.
#[derive(Clone, Debug, Default)]
pub struct SickFile {
    pub records: Vec<SickRecord>,
}

impl SickFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    /// Parse the tab-separated format. Requires the columns `pair_ID`,
    /// `sentence_A`, `sentence_B`, `relatedness_score`, and
    /// `entailment_judgment` (`entailment_label` accepted as an alias);
    /// `SemEval_set` is optional and defaults to TRAIN.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Format {
            line: 1,
            reason: "empty SICK file".into(),
        })?;
        let columns: HashMap<&str, usize> = header
            .trim_end_matches('\r')
            .split('\t')
            .enumerate()
            .map(|(i, name)| (name.trim(), i))
            .collect();
        let required = |name: &str| {
            columns.get(name).copied().ok_or_else(|| Error::Format {
                line: 1,
                reason: format!("missing column {name}"),
            })
        };
        let pair_col = required("pair_ID")?;
        let a_col = required("sentence_A")?;
        let b_col = required("sentence_B")?;
        let score_col = required("relatedness_score")?;
        let label_col = columns
            .get("entailment_judgment")
            .or_else(|| columns.get("entailment_label"))
            .copied()
            .ok_or(Error::Format {
                line: 1,
                reason: "missing column entailment_judgment".into(),
            })?;
        let split_col = columns.get("SemEval_set").copied();

        let mut records = Vec::new();
        for (line_no, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let field = |col: usize| -> Result<&str> {
                fields.get(col).copied().ok_or(Error::Format {
                    line: line_no + 1,
                    reason: format!("row has {} fields, column {col} required", fields.len()),
                })
            };
            let pair_id: u64 = field(pair_col)?.trim().parse().map_err(|_| Error::Format {
                line: line_no + 1,
                reason: format!("unparseable pair_ID {:?}", field(pair_col).unwrap_or("")),
            })?;
            let relatedness: f64 = field(score_col)?.trim().parse().map_err(|_| {
                Error::Data(format!("pair {pair_id}: unparseable relatedness score"))
            })?;
            if !(1.0..=5.0).contains(&relatedness) {
                return Err(Error::Data(format!(
                    "pair {pair_id}: relatedness {relatedness} outside [1, 5]"
                )));
            }
            let entailment = EntailmentLabel::parse(field(label_col)?.trim())
                .map_err(|e| Error::Data(format!("pair {pair_id}: {e}")))?;
            let split = match split_col {
                Some(col) => Split::parse(field(col)?)
                    .map_err(|e| Error::Data(format!("pair {pair_id}: {e}")))?,
                None => Split::Train,
            };
            records.push(SickRecord {
                pair_id,
                sentence_a: field(a_col)?.trim().to_string(),
                sentence_b: field(b_col)?.trim().to_string(),
                relatedness,
                entailment,
                split,
            });
        }
        Ok(SickFile { records })
    }

    /// Render back to the tab-separated format (canonical column order).
    pub fn render(&self) -> String {
        let mut out = String::from(
            "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\tSemEval_set\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.pair_id,
                r.sentence_a,
                r.sentence_b,
                r.relatedness,
                r.entailment.as_str(),
                r.split.as_str()
            ));
        }
        out
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let count = |s: Split| self.records.iter().filter(|r| r.split == s).count();
        (count(Split::Train), count(Split::Trial), count(Split::Test))
    }

    /// Every surface word of every sentence, plus lowercase forms, for
    /// embedding-table restriction.
    pub fn word_set(&self) -> std::collections::HashSet<String> {
        let mut words = std::collections::HashSet::new();
        for r in &self.records {
            for sentence in [&r.sentence_a, &r.sentence_b] {
                for w in sentence.split_whitespace() {
                    words.insert(w.to_string());
                    words.insert(w.to_lowercase());
                }
            }
        }
        words
    }
}

/// Zip SICK records with their pre-parsed trees (one tree per record, in
/// record order, per side) and group into train/dev/test splits.
pub fn assemble_dataset(
    sick: &SickFile,
    trees_a: Vec<DepTree>,
    trees_b: Vec<DepTree>,
) -> Result<Dataset> {
    if trees_a.len() != sick.records.len() || trees_b.len() != sick.records.len() {
        return Err(Error::Usage(format!(
            "tree counts ({} / {}) do not match the {} SICK records",
            trees_a.len(),
            trees_b.len(),
            sick.records.len()
        )));
    }
    let mut data = Dataset::default();
    for ((record, tree_a), tree_b) in sick.records.iter().zip(trees_a).zip(trees_b) {
        let example = PairExample {
            tree_a,
            tree_b,
            relatedness: record.relatedness,
            entailment: record.entailment,
        };
        match record.split {
            Split::Train => data.train.push(example),
            Split::Trial => data.dev.push(example),
            Split::Test => data.test.push(example),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\tSemEval_set\n\
1\tNobody is pouring ingredients into a pot\tSomeone is pouring ingredients into a pot\t3.6\tCONTRADICTION\tTRAIN\n\
2\tA dog runs\tAn animal runs\t4.5\tentailment\tTRIAL\n\
3\tA man walks\tA woman sits\t1.2\tNEUTRAL\tTEST\n";

    #[test]
    fn parses_records_with_normalized_labels() {
        let sick = SickFile::parse(SAMPLE).unwrap();
        assert_eq!(sick.records.len(), 3);
        assert_eq!(sick.records[0].entailment, EntailmentLabel::Contradiction);
        assert_eq!(
            sick.records[0].sentence_a,
            "Nobody is pouring ingredients into a pot"
        );
        assert_eq!(sick.records[1].entailment, EntailmentLabel::Entailment);
        assert_eq!(sick.split_sizes(), (1, 1, 1));
    }

    #[test]
    fn missing_column_names_the_column() {
        let text = "pair_ID\tsentence_A\tsentence_B\trelatedness_score\n1\ta\tb\t3.0\n";
        let err = SickFile::parse(text).unwrap_err();
        assert!(err.to_string().contains("entailment_judgment"), "{err}");
    }

    #[test]
    fn out_of_range_score_is_a_record_error() {
        let text = "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n\
9\ta\tb\t7.2\tNEUTRAL\n";
        let err = SickFile::parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pair 9") && msg.contains("7.2"), "{msg}");
    }

    #[test]
    fn entailment_label_alias_is_accepted() {
        let text = "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_label\n\
1\ta\tb\t3.0\tENTAILMENT\n";
        let sick = SickFile::parse(text).unwrap();
        assert_eq!(sick.records[0].entailment, EntailmentLabel::Entailment);
        assert_eq!(sick.records[0].split, Split::Train);
    }

    #[test]
    fn render_round_trips_record_identically() {
        let sick = SickFile::parse(SAMPLE).unwrap();
        let reparsed = SickFile::parse(&sick.render()).unwrap();
        assert_eq!(reparsed.records, sick.records);
    }

    #[test]
    fn word_set_includes_lowercase_forms() {
        let sick = SickFile::parse(SAMPLE).unwrap();
        let words = sick.word_set();
        assert!(words.contains("Nobody") && words.contains("nobody"));
    }

    #[test]
    fn tree_count_mismatch_is_a_usage_error() {
        let sick = SickFile::parse(SAMPLE).unwrap();
        let err = assemble_dataset(&sick, vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
