//! Dependency-tree data model, CoNLL-U ingestion, and the relation
//! vocabulary used for typed-dependency one-hot encodings.

use std::collections::HashMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The 47 universal dependency relations produced by the Stanford parser
/// (the 40 base types plus the English subtypes it emits).
pub const UNIVERSAL_RELATIONS: [&str; 47] = [
    "acl",
    "acl:relcl",
    "advcl",
    "advmod",
    "amod",
    "appos",
    "aux",
    "auxpass",
    "case",
    "cc",
    "cc:preconj",
    "ccomp",
    "compound",
    "compound:prt",
    "conj",
    "cop",
    "csubj",
    "csubjpass",
    "dep",
    "det",
    "det:predet",
    "discourse",
    "dislocated",
    "dobj",
    "expl",
    "foreign",
    "goeswith",
    "iobj",
    "list",
    "mark",
    "mwe",
    "name",
    "neg",
    "nmod",
    "nmod:npmod",
    "nmod:poss",
    "nmod:tmod",
    "nsubj",
    "nsubjpass",
    "nummod",
    "parataxis",
    "punct",
    "remnant",
    "reparandum",
    "root",
    "vocative",
    "xcomp",
];

/// One word of a sentence with its dependents.
///
/// Children are kept in ascending token order; every child edge carries the
/// dependency relation label between this node and that child.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepNode {
    pub token_index: usize,
    pub form: String,
    pub children: Vec<(String, DepNode)>,
}

impl DepNode {
    pub fn leaf(token_index: usize, form: impl Into<String>) -> Self {
        DepNode {
            token_index,
            form: form.into(),
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of words in the subtree rooted here, this node included:
    /// 1 for a leaf, otherwise 1 plus the counts of all children. This is
    /// the subtree-size recursion the composition functions normalize by.
    pub fn word_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|(_, c)| c.word_count())
            .sum::<usize>()
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a DepNode)) {
        f(self);
        for (_, c) in &self.children {
            c.visit(f);
        }
    }
}

/// Signed positional index of `child` among the children of `parent`:
/// `-j` for the j-th child to the parent's left counting outward from the
/// parent, `+j` to the right.
pub fn child_offset(parent: &DepNode, child: &DepNode) -> Result<i32> {
    if !parent
        .children
        .iter()
        .any(|(_, c)| c.token_index == child.token_index)
    {
        return Err(Error::Usage(format!(
            "child_offset: token {} is not a child of token {}",
            child.token_index, parent.token_index
        )));
    }
    let mut left = 0;
    let mut right = 0;
    // Children are in ascending token order, so left ranks count down.
    for (_, c) in &parent.children {
        if c.token_index < parent.token_index {
            left += 1;
        }
    }
    let mut seen_left = 0;
    for (_, c) in &parent.children {
        if c.token_index < parent.token_index {
            seen_left += 1;
            if c.token_index == child.token_index {
                return Ok(-(left - seen_left + 1));
            }
        } else {
            right += 1;
            if c.token_index == child.token_index {
                return Ok(right);
            }
        }
    }
    unreachable!("membership checked above")
}

/// A rooted dependency parse of one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepTree {
    pub root: DepNode,
    pub sentence_length: usize,
}

impl DepTree {
    /// All nodes in depth-first order from the root.
    pub fn nodes(&self) -> Vec<&DepNode> {
        let mut out = Vec::with_capacity(self.sentence_length);
        self.root.visit(&mut |n| out.push(n));
        out
    }

    /// Relation labels of every child edge, in depth-first order.
    pub fn edge_labels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.visit(&mut |n| {
            for (rel, _) in &n.children {
                out.push(rel.as_str());
            }
        });
        out
    }

    /// Surface forms in sentence order.
    pub fn words(&self) -> Vec<&str> {
        let mut indexed: Vec<(usize, &str)> = Vec::with_capacity(self.sentence_length);
        self.root
            .visit(&mut |n| indexed.push((n.token_index, n.form.as_str())));
        indexed.sort_by_key(|&(i, _)| i);
        indexed.into_iter().map(|(_, w)| w).collect()
    }

    /// Render back to the CoNLL-U column subset this crate consumes
    /// (ID, FORM, HEAD, DEPREL; the rest underscored).
    pub fn to_conllu(&self) -> String {
        let mut rows: Vec<(usize, &str, usize, &str)> =
            vec![(self.root.token_index, self.root.form.as_str(), 0, "root")];
        fn walk<'a>(node: &'a DepNode, rows: &mut Vec<(usize, &'a str, usize, &'a str)>) {
            for (rel, c) in &node.children {
                rows.push((
                    c.token_index,
                    c.form.as_str(),
                    node.token_index,
                    rel.as_str(),
                ));
                walk(c, rows);
            }
        }
        walk(&self.root, &mut rows);
        rows.sort_by_key(|&(i, ..)| i);
        let mut out = String::new();
        for (id, form, head, rel) in rows {
            out.push_str(&format!("{id}\t{form}\t_\t_\t_\t_\t{head}\t{rel}\t_\t_\n"));
        }
        out
    }
}

struct RawToken {
    id: usize,
    form: String,
    head: usize,
    deprel: String,
    line: usize,
}

/// Parse CoNLL-U text into one tree per sentence block.
///
/// Uses the ID, FORM, HEAD, and DEPREL columns. Comment lines, multiword
/// token ranges (`3-4`), and empty nodes (`5.1`) are skipped. Accepts LF or
/// CRLF line endings.
pub fn parse_conllu(text: &str) -> Result<Vec<DepTree>> {
    let mut trees = Vec::new();
    let mut block: Vec<RawToken> = Vec::new();
    let mut ordinal = 1;

    for (line_no, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !block.is_empty() {
                trees.push(build_tree(std::mem::take(&mut block), ordinal)?);
                ordinal += 1;
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Format {
                line: line_no + 1,
                reason: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id_field = cols[0];
        if id_field.contains('-') || id_field.contains('.') {
            // Multiword-token range or empty node.
            continue;
        }
        let id: usize = id_field.parse().map_err(|_| Error::Format {
            line: line_no + 1,
            reason: format!("unparseable token ID {id_field:?}"),
        })?;
        let head: usize = cols[6].parse().map_err(|_| Error::MalformedTree {
            ordinal,
            reason: format!("missing head on token {id}"),
        })?;
        block.push(RawToken {
            id,
            form: cols[1].to_string(),
            head,
            deprel: cols[7].to_string(),
            line: line_no + 1,
        });
    }
    if !block.is_empty() {
        trees.push(build_tree(block, ordinal)?);
    }
    Ok(trees)
}

fn build_tree(tokens: Vec<RawToken>, ordinal: usize) -> Result<DepTree> {
    let n = tokens.len();
    let malformed = |reason: String| Error::MalformedTree { ordinal, reason };

    for (expect, tok) in tokens.iter().enumerate() {
        if tok.id != expect + 1 {
            return Err(malformed(format!(
                "non-contiguous token IDs: expected {} at line {}, found {}",
                expect + 1,
                tok.line,
                tok.id
            )));
        }
    }

    let mut root_id = None;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for tok in &tokens {
        if tok.head == 0 {
            if root_id.replace(tok.id).is_some() {
                return Err(malformed("multiple roots".into()));
            }
        } else if tok.head > n {
            return Err(malformed(format!(
                "missing head: token {} points at nonexistent token {}",
                tok.id, tok.head
            )));
        } else {
            children[tok.head].push(tok.id);
        }
    }
    let root_id = root_id.ok_or_else(|| malformed("no root".into()))?;

    fn assemble(
        id: usize,
        tokens: &[RawToken],
        children: &[Vec<usize>],
        visited: &mut usize,
    ) -> DepNode {
        *visited += 1;
        let mut node = DepNode::leaf(id, tokens[id - 1].form.clone());
        for &child_id in &children[id] {
            let rel = tokens[child_id - 1].deprel.clone();
            node.children
                .push((rel, assemble(child_id, tokens, children, visited)));
        }
        node
    }

    let mut visited = 0;
    let root = assemble(root_id, &tokens, &children, &mut visited);
    if visited != n {
        return Err(malformed(format!(
            "head cycle: only {visited} of {n} tokens reachable from root"
        )));
    }
    Ok(DepTree {
        root,
        sentence_length: n,
    })
}

/// Whether relation labels keep their subtype suffix (`nsubj:pass`) or are
/// truncated to the coarse type at the first `:`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationPolicy {
    Subtyped,
    Coarse,
}

impl RelationPolicy {
    fn canon<'a>(&self, label: &'a str) -> &'a str {
        match self {
            RelationPolicy::Subtyped => label,
            RelationPolicy::Coarse => label.split(':').next().unwrap_or(label),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RelationPolicy::Subtyped => "subtyped",
            RelationPolicy::Coarse => "coarse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subtyped" => Some(RelationPolicy::Subtyped),
            "coarse" => Some(RelationPolicy::Coarse),
            _ => None,
        }
    }
}

/// Dense bidirectional mapping between relation labels and indices, with a
/// reserved unknown-label slot at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    policy: RelationPolicy,
}

pub const UNK_LABEL: &str = "<unk>";

impl RelationVocab {
    pub fn from_labels<I, S>(labels: I, policy: RelationPolicy) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = RelationVocab {
            labels: vec![UNK_LABEL.to_string()],
            index: HashMap::from([(UNK_LABEL.to_string(), 0)]),
            policy,
        };
        for label in labels {
            let canon = policy.canon(label.as_ref());
            if !vocab.index.contains_key(canon) {
                vocab.index.insert(canon.to_string(), vocab.labels.len());
                vocab.labels.push(canon.to_string());
            }
        }
        vocab
    }

    /// Vocabulary over all edge labels of the given trees, indexed in
    /// first-seen depth-first order.
    pub fn from_trees<'a>(
        trees: impl IntoIterator<Item = &'a DepTree>,
        policy: RelationPolicy,
    ) -> Self {
        let labels: Vec<String> = trees
            .into_iter()
            .flat_map(|t| t.edge_labels().into_iter().map(String::from))
            .collect();
        Self::from_labels(labels, policy)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the UNK slot is always present
    }

    pub fn policy(&self) -> RelationPolicy {
        self.policy
    }

    /// Index of a label, falling back to the UNK slot for unseen labels.
    pub fn index_of(&self, label: &str) -> usize {
        self.index
            .get(self.policy.canon(label))
            .copied()
            .unwrap_or(0)
    }

    pub fn label_of(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Labels in index order, UNK slot included.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// One-hot encoding of a relation label over this vocabulary.
    pub fn one_hot<F: Scalar>(&self, label: &str) -> Tensor<F> {
        let mut data = vec![F::zero(); self.labels.len()];
        data[self.index_of(label)] = F::one();
        Tensor::vector(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FISH_FOLLOWING: &str = "\
1\tthe\t_\t_\t_\t_\t2\tdet\t_\t_
2\tfish\t_\t_\t_\t_\t4\tnsubj\t_\t_
3\tis\t_\t_\t_\t_\t4\taux\t_\t_
4\tfollowing\t_\t_\t_\t_\t0\troot\t_\t_
5\tthe\t_\t_\t_\t_\t6\tdet\t_\t_
6\tturtle\t_\t_\t_\t_\t4\tdobj\t_\t_
";

    #[test]
    fn parses_minimal_two_token_block() {
        let text = "1\tthe\t_\t_\t_\t_\t2\tdet\t_\t_\n2\tfish\t_\t_\t_\t_\t0\troot\t_\t_\n";
        let trees = parse_conllu(text).unwrap();
        assert_eq!(trees.len(), 1);
        let tree = &trees[0];
        assert_eq!(tree.root.form, "fish");
        assert_eq!(tree.root.children.len(), 1);
        assert_eq!(tree.root.children[0].0, "det");
        assert_eq!(tree.root.children[0].1.form, "the");
    }

    #[test]
    fn two_heads_at_zero_is_multiple_roots() {
        let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t0\troot\t_\t_\n";
        let err = parse_conllu(text).unwrap_err();
        assert!(err.to_string().contains("multiple roots"), "{err}");
    }

    #[test]
    fn parses_the_fish_is_following_the_turtle() {
        let trees = parse_conllu(FISH_FOLLOWING).unwrap();
        let tree = &trees[0];
        assert_eq!(tree.root.form, "following");
        let nsubj = tree
            .root
            .children
            .iter()
            .find(|(r, _)| r == "nsubj")
            .unwrap();
        assert_eq!(nsubj.1.form, "fish");
        let dobj = tree
            .root
            .children
            .iter()
            .find(|(r, _)| r == "dobj")
            .unwrap();
        assert_eq!(dobj.1.form, "turtle");
        assert_eq!(tree.sentence_length, 6);
    }

    #[test]
    fn head_cycle_is_detected() {
        let text = "1\ta\t_\t_\t_\t_\t2\tdep\t_\t_\n2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n3\tc\t_\t_\t_\t_\t0\troot\t_\t_\n";
        let err = parse_conllu(text).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn dangling_head_is_detected() {
        let text = "1\ta\t_\t_\t_\t_\t9\tdep\t_\t_\n2\tb\t_\t_\t_\t_\t0\troot\t_\t_\n";
        let err = parse_conllu(text).unwrap_err();
        assert!(err.to_string().contains("nonexistent"), "{err}");
    }

    #[test]
    fn non_contiguous_ids_are_detected() {
        let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n3\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n";
        let err = parse_conllu(text).unwrap_err();
        assert!(err.to_string().contains("non-contiguous"), "{err}");
    }

    #[test]
    fn multiword_ranges_and_empty_nodes_are_skipped() {
        let text = "\
# sent_id = 1
1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_
1\tde\t_\t_\t_\t_\t2\tcase\t_\t_
2\tel\t_\t_\t_\t_\t0\troot\t_\t_
2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_
";
        let trees = parse_conllu(text).unwrap();
        assert_eq!(trees[0].sentence_length, 2);
    }

    #[test]
    fn crlf_and_trailing_blank_lines_are_tolerated() {
        let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\r\n\r\n";
        let trees = parse_conllu(text).unwrap();
        assert_eq!(trees.len(), 1);
    }

    #[test]
    fn word_count_of_leaf_is_one() {
        assert_eq!(DepNode::leaf(1, "w").word_count(), 1);
    }

    #[test]
    fn word_count_counts_all_words_in_subtree() {
        let mut root = DepNode::leaf(2, "r");
        root.children.push(("det".into(), DepNode::leaf(1, "a")));
        root.children.push(("dobj".into(), DepNode::leaf(3, "b")));
        assert_eq!(root.word_count(), 3);
    }

    #[test]
    fn word_count_of_fig_tree_root_is_six() {
        let trees = parse_conllu(FISH_FOLLOWING).unwrap();
        // Hand recursion: following(1) + fish(1 + the) + is + turtle(1 + the).
        assert_eq!(trees[0].root.word_count(), 6);
        assert_eq!(trees[0].root.word_count(), trees[0].sentence_length);
    }

    #[test]
    fn one_hot_places_single_one_at_label_index() {
        let vocab =
            RelationVocab::from_labels(["det", "aux", "nsubj", "dobj"], RelationPolicy::Subtyped);
        assert_eq!(vocab.len(), 5);
        assert_eq!(vocab.index_of("nsubj"), 3);
        let hot: Tensor<f64> = vocab.one_hot("nsubj");
        assert_eq!(hot.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn unseen_label_maps_to_unk() {
        let vocab = RelationVocab::from_labels(["det"], RelationPolicy::Subtyped);
        assert_eq!(vocab.index_of("xcompfoo"), 0);
        let hot: Tensor<f64> = vocab.one_hot("xcompfoo");
        assert_eq!(hot.as_slice()[0], 1.0);
    }

    #[test]
    fn every_one_hot_sums_to_one() {
        let vocab = RelationVocab::from_labels(UNIVERSAL_RELATIONS, RelationPolicy::Subtyped);
        let labels: Vec<String> = (0..1000).map(|i| format!("rel{}", i % 61)).collect();
        for label in &labels {
            let hot: Tensor<f64> = vocab.one_hot(label);
            let total: f64 = hot.as_slice().iter().sum();
            assert_eq!(total, 1.0);
            assert!(hot.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn universal_inventory_has_at_least_forty_entries() {
        let vocab = RelationVocab::from_labels(UNIVERSAL_RELATIONS, RelationPolicy::Subtyped);
        assert!(vocab.len() >= 40, "|V| = {}", vocab.len());
    }

    #[test]
    fn coarse_policy_merges_subtypes() {
        let vocab =
            RelationVocab::from_labels(["nmod:poss", "nmod", "acl:relcl"], RelationPolicy::Coarse);
        assert_eq!(vocab.index_of("nmod:poss"), vocab.index_of("nmod"));
        assert_ne!(vocab.index_of("acl"), 0);
        assert_eq!(vocab.len(), 3); // unk, nmod, acl

        let subtyped = RelationVocab::from_labels(
            ["nmod:poss", "nmod", "acl:relcl"],
            RelationPolicy::Subtyped,
        );
        assert_ne!(subtyped.index_of("nmod:poss"), subtyped.index_of("nmod"));
    }

    #[test]
    fn child_offsets_count_outward_per_side() {
        let mut parent = DepNode::leaf(4, "p");
        parent.children.push(("dep".into(), DepNode::leaf(2, "a")));
        parent.children.push(("dep".into(), DepNode::leaf(3, "b")));
        parent.children.push(("dep".into(), DepNode::leaf(6, "c")));
        assert_eq!(child_offset(&parent, &parent.children[0].1).unwrap(), -2);
        assert_eq!(child_offset(&parent, &parent.children[1].1).unwrap(), -1);
        assert_eq!(child_offset(&parent, &parent.children[2].1).unwrap(), 1);
    }

    #[test]
    fn only_right_child_has_offset_plus_one() {
        let mut parent = DepNode::leaf(1, "p");
        parent.children.push(("dep".into(), DepNode::leaf(2, "a")));
        assert_eq!(child_offset(&parent, &parent.children[0].1).unwrap(), 1);
    }

    #[test]
    fn non_child_argument_is_an_error() {
        let parent = DepNode::leaf(1, "p");
        let stranger = DepNode::leaf(7, "s");
        assert!(child_offset(&parent, &stranger).is_err());
    }

    #[test]
    fn conllu_round_trip_preserves_structure() {
        let trees = parse_conllu(FISH_FOLLOWING).unwrap();
        let rendered = trees[0].to_conllu();
        let reparsed = parse_conllu(&rendered).unwrap();
        assert_eq!(reparsed[0], trees[0]);
    }

    #[test]
    fn node_count_equals_word_count_equals_tokens() {
        let trees = parse_conllu(FISH_FOLLOWING).unwrap();
        let tree = &trees[0];
        assert_eq!(tree.nodes().len(), tree.root.word_count());
        assert_eq!(tree.root.word_count(), tree.sentence_length);
    }

    #[test]
    fn words_come_back_in_sentence_order() {
        let trees = parse_conllu(FISH_FOLLOWING).unwrap();
        assert_eq!(
            trees[0].words(),
            vec!["the", "fish", "is", "following", "the", "turtle"]
        );
    }
}
