//! Tree-composition functions producing a sentence vector from a dependency
//! parse.
//!
//! Four variants share the same recursive scheme
//! `h_t = f( (W_v x_t + sum_k l(k) * T_k(h_k)) / l(t) )` over subtree word
//! counts `l`, differing in the child transform `T_k`:
//!
//! * typed: one shared rectified dense layer applied to the child state
//!   concatenated with a learned embedding of the child's dependency
//!   relation (the rectifier binds each relation to its own child; without
//!   it the child sum would collapse into relation-order-blind bags),
//! * positional: a matrix per signed child offset,
//! * relational: a matrix per dependency relation,
//! * single: one shared matrix.
//!
//! None of the node transitions carries a bias term; the only bias is `b_d`
//! inside the dependency-embedding layer of the typed variant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, Graph, ParamId, ParamStore, Tensor, VarId};
use crate::deptree::{child_offset, DepNode, DepTree, RelationVocab};
use crate::embeddings::WordEmbeddings;
use crate::error::Result;
use crate::scalar::{cast, cast_usize, Scalar};

/// Which composition function a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    Typed,
    Positional,
    Relational,
    Single,
}

impl EncoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::Typed => "typed",
            EncoderKind::Positional => "positional",
            EncoderKind::Relational => "relational",
            EncoderKind::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "typed" => Some(EncoderKind::Typed),
            "positional" => Some(EncoderKind::Positional),
            "relational" => Some(EncoderKind::Relational),
            "single" => Some(EncoderKind::Single),
            _ => None,
        }
    }

    pub const ALL: [EncoderKind; 4] = [
        EncoderKind::Typed,
        EncoderKind::Positional,
        EncoderKind::Relational,
        EncoderKind::Single,
    ];
}

/// Default cap on positional weight-matrix offsets.
pub const DEFAULT_MAX_OFFSET: usize = 10;

fn init_matrix<F: Scalar>(
    store: &mut ParamStore<F>,
    rng: &mut ChaCha8Rng,
    name: &str,
    rows: usize,
    cols: usize,
) -> ParamId {
    let bound = 1.0 / (cols as f64).sqrt();
    let data: Vec<F> = (0..rows * cols)
        .map(|_| cast(rng.random_range(-bound..bound)))
        .collect();
    store.register(
        name,
        Tensor::matrix(rows, cols, data).expect("consistent init shape"),
    )
}

fn init_zero_vector<F: Scalar>(store: &mut ParamStore<F>, name: &str, len: usize) -> ParamId {
    store.register(name, Tensor::zeros(crate::autodiff::Shape::Vector(len)))
}

/// Parameters of the typed-dependency composition: word projection `w_v`,
/// shared child transform `w_r` over `(h_k : d_k)`, and the dependency
/// embedding layer (`w_d`, `b_d`).
#[derive(Clone, Debug)]
pub struct TypedParams {
    pub w_v: ParamId,
    pub w_r: ParamId,
    pub w_d: ParamId,
    pub b_d: ParamId,
    pub hidden: usize,
    pub dep_dim: usize,
    pub f: Activation,
    pub g: Activation,
}

impl TypedParams {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        hidden: usize,
        word_dim: usize,
        dep_dim: usize,
        vocab_len: usize,
    ) -> Self {
        TypedParams {
            w_v: init_matrix(store, rng, "encoder.w_v", hidden, word_dim),
            w_r: init_matrix(store, rng, "encoder.w_r", hidden, hidden + dep_dim),
            w_d: init_matrix(store, rng, "encoder.w_d", dep_dim, vocab_len),
            b_d: init_zero_vector(store, "encoder.b_d", dep_dim),
            hidden,
            dep_dim,
            f: Activation::Tanh,
            g: Activation::Relu,
        }
    }
}

/// Dependency embedding `d_k = g(w_d z_k + b_d)` for a one-hot relation
/// encoding `z_k`.
pub fn dep_embed<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &TypedParams,
    one_hot: VarId,
) -> Result<VarId> {
    let w_d = graph.param(store, params.w_d);
    let b_d = graph.param(store, params.b_d);
    let projected = graph.matvec(w_d, one_hot)?;
    let shifted = graph.add(projected, b_d)?;
    Ok(params.g.apply(graph, shifted))
}

/// Typed DT-RNN encoding of a tree; returns the root hidden state.
pub fn encode_typed<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &TypedParams,
    tree: &DepTree,
    words: &WordEmbeddings<F>,
    relations: &RelationVocab,
) -> Result<VarId> {
    fn node_state<F: Scalar>(
        graph: &mut Graph<F>,
        store: &ParamStore<F>,
        params: &TypedParams,
        node: &DepNode,
        words: &WordEmbeddings<F>,
        relations: &RelationVocab,
    ) -> Result<VarId> {
        let x = graph.constant(Tensor::vector(words.lookup(&node.form).to_vec()));
        let w_v = graph.param(store, params.w_v);
        let mut acc = graph.matvec(w_v, x)?;
        for (rel, child) in &node.children {
            let h_k = node_state(graph, store, params, child, words, relations)?;
            let z_k = graph.constant(relations.one_hot(rel));
            let d_k = dep_embed(graph, store, params, z_k)?;
            let joint = graph.concat(h_k, d_k)?;
            let w_r = graph.param(store, params.w_r);
            let mixed = graph.matvec(w_r, joint)?;
            let transformed = params.g.apply(graph, mixed);
            let weighted = graph.scale(transformed, cast_usize(child.word_count()));
            acc = graph.add(acc, weighted)?;
        }
        let normalized = graph.scale(acc, F::one() / cast_usize(node.word_count()));
        Ok(params.f.apply(graph, normalized))
    }
    node_state(graph, store, params, &tree.root, words, relations)
}

/// Parameters of the positional DT-RNN: one child matrix per signed offset,
/// capped at `max_offset` with clamping beyond the cap.
#[derive(Clone, Debug)]
pub struct PositionalParams {
    pub w_v: ParamId,
    left: Vec<ParamId>,
    right: Vec<ParamId>,
    pub hidden: usize,
    pub f: Activation,
}

impl PositionalParams {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        hidden: usize,
        word_dim: usize,
        max_offset: usize,
    ) -> Self {
        assert!(max_offset >= 1, "positional family needs at least offset 1");
        let w_v = init_matrix(store, rng, "encoder.w_v", hidden, word_dim);
        let left = (1..=max_offset)
            .map(|j| init_matrix(store, rng, &format!("encoder.w_loc[-{j}]"), hidden, hidden))
            .collect();
        let right = (1..=max_offset)
            .map(|j| init_matrix(store, rng, &format!("encoder.w_loc[+{j}]"), hidden, hidden))
            .collect();
        PositionalParams {
            w_v,
            left,
            right,
            hidden,
            f: Activation::Tanh,
        }
    }

    /// Reassemble from previously registered parameter ids (checkpoints).
    pub fn from_parts(
        w_v: ParamId,
        left: Vec<ParamId>,
        right: Vec<ParamId>,
        hidden: usize,
        f: Activation,
    ) -> Self {
        PositionalParams {
            w_v,
            left,
            right,
            hidden,
            f,
        }
    }

    pub fn max_offset(&self) -> usize {
        self.left.len()
    }

    /// Matrix for a signed child offset; offsets beyond the family clamp to
    /// the extreme matrix on that side.
    pub fn matrix_for_offset(&self, offset: i32) -> ParamId {
        debug_assert!(offset != 0, "a child is never at offset 0");
        let side = if offset < 0 { &self.left } else { &self.right };
        let j = (offset.unsigned_abs() as usize).min(side.len());
        side[j - 1]
    }

    /// Largest absolute child offset observed anywhere in `trees`, clamped
    /// to the default cap. Sizes the matrix family from the training set.
    pub fn required_offset<'a>(trees: impl IntoIterator<Item = &'a DepTree>) -> usize {
        let mut max_seen = 1usize;
        for tree in trees {
            for node in tree.nodes() {
                for (_, child) in &node.children {
                    let off = child_offset(node, child).expect("child of its own parent");
                    max_seen = max_seen.max(off.unsigned_abs() as usize);
                }
            }
        }
        max_seen.min(DEFAULT_MAX_OFFSET)
    }
}

/// Positional DT-RNN encoding.
pub fn encode_dtrnn<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &PositionalParams,
    tree: &DepTree,
    words: &WordEmbeddings<F>,
) -> Result<VarId> {
    fn node_state<F: Scalar>(
        graph: &mut Graph<F>,
        store: &ParamStore<F>,
        params: &PositionalParams,
        node: &DepNode,
        words: &WordEmbeddings<F>,
    ) -> Result<VarId> {
        let x = graph.constant(Tensor::vector(words.lookup(&node.form).to_vec()));
        let w_v = graph.param(store, params.w_v);
        let mut acc = graph.matvec(w_v, x)?;
        for (_, child) in &node.children {
            let h_k = node_state(graph, store, params, child, words)?;
            let offset = child_offset(node, child)?;
            let w_loc = graph.param(store, params.matrix_for_offset(offset));
            let transformed = graph.matvec(w_loc, h_k)?;
            let weighted = graph.scale(transformed, cast_usize(child.word_count()));
            acc = graph.add(acc, weighted)?;
        }
        let normalized = graph.scale(acc, F::one() / cast_usize(node.word_count()));
        Ok(params.f.apply(graph, normalized))
    }
    node_state(graph, store, params, &tree.root, words)
}

/// Parameters of the per-relation SDT-RNN: one child matrix per relation
/// vocabulary entry, the UNK slot included.
#[derive(Clone, Debug)]
pub struct RelationalParams {
    pub w_v: ParamId,
    by_relation: Vec<ParamId>,
    pub hidden: usize,
    pub f: Activation,
}

impl RelationalParams {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        hidden: usize,
        word_dim: usize,
        relations: &RelationVocab,
    ) -> Self {
        let w_v = init_matrix(store, rng, "encoder.w_v", hidden, word_dim);
        let by_relation = relations
            .labels()
            .iter()
            .map(|label| {
                init_matrix(
                    store,
                    rng,
                    &format!("encoder.w_dep[{label}]"),
                    hidden,
                    hidden,
                )
            })
            .collect();
        RelationalParams {
            w_v,
            by_relation,
            hidden,
            f: Activation::Tanh,
        }
    }

    /// Reassemble from previously registered parameter ids (checkpoints).
    pub fn from_parts(
        w_v: ParamId,
        by_relation: Vec<ParamId>,
        hidden: usize,
        f: Activation,
    ) -> Self {
        RelationalParams {
            w_v,
            by_relation,
            hidden,
            f,
        }
    }

    pub fn matrix_for_relation(&self, relations: &RelationVocab, label: &str) -> ParamId {
        self.by_relation[relations.index_of(label)]
    }

    pub fn relation_matrices(&self) -> &[ParamId] {
        &self.by_relation
    }
}

/// SDT-RNN encoding: child matrix selected by the edge's relation label.
pub fn encode_sdtrnn<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &RelationalParams,
    tree: &DepTree,
    words: &WordEmbeddings<F>,
    relations: &RelationVocab,
) -> Result<VarId> {
    fn node_state<F: Scalar>(
        graph: &mut Graph<F>,
        store: &ParamStore<F>,
        params: &RelationalParams,
        node: &DepNode,
        words: &WordEmbeddings<F>,
        relations: &RelationVocab,
    ) -> Result<VarId> {
        let x = graph.constant(Tensor::vector(words.lookup(&node.form).to_vec()));
        let w_v = graph.param(store, params.w_v);
        let mut acc = graph.matvec(w_v, x)?;
        for (rel, child) in &node.children {
            let h_k = node_state(graph, store, params, child, words, relations)?;
            let w_dep = graph.param(store, params.matrix_for_relation(relations, rel));
            let transformed = graph.matvec(w_dep, h_k)?;
            let weighted = graph.scale(transformed, cast_usize(child.word_count()));
            acc = graph.add(acc, weighted)?;
        }
        let normalized = graph.scale(acc, F::one() / cast_usize(node.word_count()));
        Ok(params.f.apply(graph, normalized))
    }
    node_state(graph, store, params, &tree.root, words, relations)
}

/// Parameters of the single-matrix baseline.
#[derive(Clone, Debug)]
pub struct SingleParams {
    pub w_v: ParamId,
    pub w: ParamId,
    pub hidden: usize,
    pub f: Activation,
}

impl SingleParams {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        hidden: usize,
        word_dim: usize,
    ) -> Self {
        SingleParams {
            w_v: init_matrix(store, rng, "encoder.w_v", hidden, word_dim),
            w: init_matrix(store, rng, "encoder.w", hidden, hidden),
            hidden,
            f: Activation::Tanh,
        }
    }
}

/// Single shared-matrix encoding; blind to both child positions and
/// relation labels.
pub fn encode_single<F: Scalar>(
    graph: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &SingleParams,
    tree: &DepTree,
    words: &WordEmbeddings<F>,
) -> Result<VarId> {
    fn node_state<F: Scalar>(
        graph: &mut Graph<F>,
        store: &ParamStore<F>,
        params: &SingleParams,
        node: &DepNode,
        words: &WordEmbeddings<F>,
    ) -> Result<VarId> {
        let x = graph.constant(Tensor::vector(words.lookup(&node.form).to_vec()));
        let w_v = graph.param(store, params.w_v);
        let mut acc = graph.matvec(w_v, x)?;
        for (_, child) in &node.children {
            let h_k = node_state(graph, store, params, child, words)?;
            let w = graph.param(store, params.w);
            let transformed = graph.matvec(w, h_k)?;
            let weighted = graph.scale(transformed, cast_usize(child.word_count()));
            acc = graph.add(acc, weighted)?;
        }
        let normalized = graph.scale(acc, F::one() / cast_usize(node.word_count()));
        Ok(params.f.apply(graph, normalized))
    }
    node_state(graph, store, params, &tree.root, words)
}

/// One of the four encoder variants, dispatched at run time.
#[derive(Clone, Debug)]
pub enum Encoder {
    Typed(TypedParams),
    Positional(PositionalParams),
    Relational(RelationalParams),
    Single(SingleParams),
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Typed(_) => EncoderKind::Typed,
            Encoder::Positional(_) => EncoderKind::Positional,
            Encoder::Relational(_) => EncoderKind::Relational,
            Encoder::Single(_) => EncoderKind::Single,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Encoder::Typed(p) => p.hidden,
            Encoder::Positional(p) => p.hidden,
            Encoder::Relational(p) => p.hidden,
            Encoder::Single(p) => p.hidden,
        }
    }

    pub fn encode<F: Scalar>(
        &self,
        graph: &mut Graph<F>,
        store: &ParamStore<F>,
        tree: &DepTree,
        words: &WordEmbeddings<F>,
        relations: &RelationVocab,
    ) -> Result<VarId> {
        match self {
            Encoder::Typed(p) => encode_typed(graph, store, p, tree, words, relations),
            Encoder::Positional(p) => encode_dtrnn(graph, store, p, tree, words),
            Encoder::Relational(p) => encode_sdtrnn(graph, store, p, tree, words, relations),
            Encoder::Single(p) => encode_single(graph, store, p, tree, words),
        }
    }

    /// Parameter ids owned by this encoder, in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Encoder::Typed(p) => vec![p.w_v, p.w_r, p.w_d, p.b_d],
            Encoder::Positional(p) => {
                let mut ids = vec![p.w_v];
                ids.extend(&p.left);
                ids.extend(&p.right);
                ids
            }
            Encoder::Relational(p) => {
                let mut ids = vec![p.w_v];
                ids.extend(&p.by_relation);
                ids
            }
            Encoder::Single(p) => vec![p.w_v, p.w],
        }
    }

    /// Total trainable scalar count of the encoder.
    pub fn value_count<F: Scalar>(&self, store: &ParamStore<F>) -> usize {
        self.param_ids().iter().map(|&id| store.get(id).len()).sum()
    }
}
