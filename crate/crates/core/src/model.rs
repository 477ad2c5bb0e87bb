//! Complete pair model (encoder + classifier head) and its checkpoint
//! container.
//!
//! # Checkpoint layout (version 1, little-endian)
//!
//! ```text
//! magic            8  bytes  "TRNNCKPT"
//! version          u32
//! task             u8      0 = relatedness, 1 = entailment
//! encoder kind     u8      0 = typed, 1 = positional, 2 = relational, 3 = single
//! f activation     u8      0 = tanh, 1 = relu
//! g activation     u8
//! hidden h         u32
//! word dim d       u32
//! dep dim r        u32     0 unless typed
//! classifier c     u32
//! classes K        u32
//! max offset       u32     0 unless positional
//! relation policy  u8      0 = subtyped, 1 = coarse
//! relation count   u32     UNK slot included
//!   per relation:  len u32, utf8 bytes
//! param count      u32
//!   per parameter: name (len u32, utf8), rank u8, extents u32 x rank,
//!                  values f64 x product(extents)
//! ```
//!
//! Values are stored as raw f64 bits, so a save/load round trip is bitwise
//! faithful.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, Graph, ParamStore, Shape, Tensor, VarId};
use crate::data::EntailmentLabel;
use crate::deptree::{DepTree, RelationPolicy, RelationVocab};
use crate::embeddings::WordEmbeddings;
use crate::encoders::{
    Encoder, EncoderKind, PositionalParams, RelationalParams, SingleParams, TypedParams,
};
use crate::error::{Error, Result};
use crate::pairmodel::{pair_forward, PairHead};
use crate::scalar::{cast, Scalar};

const MAGIC: &[u8; 8] = b"TRNNCKPT";
const VERSION: u32 = 1;

/// Which prediction task a model is trained for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Relatedness,
    Entailment,
}

impl Task {
    /// Output distribution size K.
    pub fn classes(&self) -> usize {
        match self {
            Task::Relatedness => 5,
            Task::Entailment => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Relatedness => "relatedness",
            Task::Entailment => "entailment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relatedness" => Some(Task::Relatedness),
            "entailment" => Some(Task::Entailment),
            _ => None,
        }
    }
}

/// Structural description of a model, sufficient to rebuild it around a
/// loaded parameter store.
#[derive(Clone, Debug)]
pub struct ModelMeta {
    pub task: Task,
    pub encoder_kind: EncoderKind,
    pub f: Activation,
    pub g: Activation,
    pub hidden: usize,
    pub word_dim: usize,
    pub dep_dim: usize,
    pub classifier_hidden: usize,
    pub max_offset: usize,
    pub relations: RelationVocab,
}

/// Encoder, pair head, and their shared parameter store.
#[derive(Clone, Debug)]
pub struct Model<F> {
    pub store: ParamStore<F>,
    pub encoder: Encoder,
    pub head: PairHead,
    pub meta: ModelMeta,
}

impl<F: Scalar> Model<F> {
    /// Build a freshly initialized model. All parameters are drawn from one
    /// seeded stream in a fixed registration order, so equal seeds give
    /// bitwise-equal models.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        task: Task,
        encoder_kind: EncoderKind,
        hidden: usize,
        word_dim: usize,
        dep_dim: usize,
        classifier_hidden: usize,
        max_offset: usize,
        relations: RelationVocab,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = match encoder_kind {
            EncoderKind::Typed => Encoder::Typed(TypedParams::init(
                &mut store,
                &mut rng,
                hidden,
                word_dim,
                dep_dim,
                relations.len(),
            )),
            EncoderKind::Positional => Encoder::Positional(PositionalParams::init(
                &mut store, &mut rng, hidden, word_dim, max_offset,
            )),
            EncoderKind::Relational => Encoder::Relational(RelationalParams::init(
                &mut store, &mut rng, hidden, word_dim, &relations,
            )),
            EncoderKind::Single => {
                Encoder::Single(SingleParams::init(&mut store, &mut rng, hidden, word_dim))
            }
        };
        let head = PairHead::init(
            &mut store,
            &mut rng,
            hidden,
            classifier_hidden,
            task.classes(),
        );
        let (f, g) = encoder_activations(&encoder);
        Model {
            store,
            encoder,
            head,
            meta: ModelMeta {
                task,
                encoder_kind,
                f,
                g,
                hidden,
                word_dim,
                dep_dim,
                classifier_hidden,
                max_offset,
                relations,
            },
        }
    }

    /// Encode both trees against the shared store and run the pair head.
    /// Both encodings pull the same parameter leaves, which is what ties
    /// the siamese weights.
    pub fn pair_distribution(
        &self,
        graph: &mut Graph<F>,
        tree_a: &DepTree,
        tree_b: &DepTree,
        words: &WordEmbeddings<F>,
    ) -> Result<VarId> {
        let u = self
            .encoder
            .encode(graph, &self.store, tree_a, words, &self.meta.relations)?;
        let v = self
            .encoder
            .encode(graph, &self.store, tree_b, words, &self.meta.relations)?;
        pair_forward(graph, &self.store, &self.head, u, v)
    }

    /// Forward-only prediction of the class distribution for one pair.
    pub fn predict_distribution(
        &self,
        tree_a: &DepTree,
        tree_b: &DepTree,
        words: &WordEmbeddings<F>,
    ) -> Result<Vec<F>> {
        let mut graph = Graph::new();
        let p = self.pair_distribution(&mut graph, tree_a, tree_b, words)?;
        Ok(graph.value(p).as_slice().to_vec())
    }

    /// Expected relatedness score for one pair.
    pub fn predict_score(
        &self,
        tree_a: &DepTree,
        tree_b: &DepTree,
        words: &WordEmbeddings<F>,
    ) -> Result<F> {
        let p = self.predict_distribution(tree_a, tree_b, words)?;
        Ok(crate::pairmodel::distribution_to_score(&p))
    }

    /// Most probable entailment label for one pair.
    pub fn predict_label(
        &self,
        tree_a: &DepTree,
        tree_b: &DepTree,
        words: &WordEmbeddings<F>,
    ) -> Result<EntailmentLabel> {
        let p = self.predict_distribution(tree_a, tree_b, words)?;
        Ok(crate::pairmodel::predicted_label(&p))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("in-memory write cannot fail");
        out
    }

    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        let m = &self.meta;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[
            match m.task {
                Task::Relatedness => 0,
                Task::Entailment => 1,
            },
            match m.encoder_kind {
                EncoderKind::Typed => 0,
                EncoderKind::Positional => 1,
                EncoderKind::Relational => 2,
                EncoderKind::Single => 3,
            },
            match m.f {
                Activation::Tanh => 0,
                Activation::Relu => 1,
            },
            match m.g {
                Activation::Tanh => 0,
                Activation::Relu => 1,
            },
        ])?;
        for v in [
            m.hidden,
            m.word_dim,
            m.dep_dim,
            m.classifier_hidden,
            m.task.classes(),
            m.max_offset,
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&[match m.relations.policy() {
            RelationPolicy::Subtyped => 0,
            RelationPolicy::Coarse => 1,
        }])?;
        let labels = m.relations.labels();
        w.write_all(&(labels.len() as u32).to_le_bytes())?;
        for label in labels {
            write_string(w, label)?;
        }
        w.write_all(&(self.store.len() as u32).to_le_bytes())?;
        for (name, tensor) in self.store.iter() {
            write_string(w, name)?;
            match tensor.shape() {
                Shape::Vector(n) => {
                    w.write_all(&[1u8])?;
                    w.write_all(&(n as u32).to_le_bytes())?;
                }
                Shape::Matrix(r, c) => {
                    w.write_all(&[2u8])?;
                    w.write_all(&(r as u32).to_le_bytes())?;
                    w.write_all(&(c as u32).to_le_bytes())?;
                }
            }
            for value in tensor.as_slice() {
                let bits = value.to_f64().expect("scalar to f64");
                w.write_all(&bits.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path.as_ref())?;
        self.write(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read(&mut io::Cursor::new(bytes))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = fs::File::open(path.as_ref())?;
        Self::read(&mut file)
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Incompatible(
                "checkpoint: bad magic, not a model checkpoint".into(),
            ));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint: unsupported version {version}"
            )));
        }
        let mut tags = [0u8; 4];
        r.read_exact(&mut tags)?;
        let task = match tags[0] {
            0 => Task::Relatedness,
            1 => Task::Entailment,
            t => return Err(Error::Incompatible(format!("checkpoint: bad task tag {t}"))),
        };
        let encoder_kind = match tags[1] {
            0 => EncoderKind::Typed,
            1 => EncoderKind::Positional,
            2 => EncoderKind::Relational,
            3 => EncoderKind::Single,
            t => {
                return Err(Error::Incompatible(format!(
                    "checkpoint: bad encoder tag {t}"
                )))
            }
        };
        let activation = |tag: u8| match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            t => Err(Error::Incompatible(format!(
                "checkpoint: bad activation tag {t}"
            ))),
        };
        let f = activation(tags[2])?;
        let g = activation(tags[3])?;

        let hidden = read_u32(r)? as usize;
        let word_dim = read_u32(r)? as usize;
        let dep_dim = read_u32(r)? as usize;
        let classifier_hidden = read_u32(r)? as usize;
        let classes = read_u32(r)? as usize;
        let max_offset = read_u32(r)? as usize;
        if classes != task.classes() {
            return Err(Error::Incompatible(format!(
                "checkpoint: task {} expects K = {}, found {classes}",
                task.name(),
                task.classes()
            )));
        }

        let mut policy_tag = [0u8; 1];
        r.read_exact(&mut policy_tag)?;
        let policy = match policy_tag[0] {
            0 => RelationPolicy::Subtyped,
            1 => RelationPolicy::Coarse,
            t => {
                return Err(Error::Incompatible(format!(
                    "checkpoint: bad relation policy tag {t}"
                )))
            }
        };
        let label_count = read_u32(r)? as usize;
        let mut labels = Vec::with_capacity(label_count);
        for _ in 0..label_count {
            labels.push(read_string(r)?);
        }
        if labels.first().map(String::as_str) != Some(crate::deptree::UNK_LABEL) {
            return Err(Error::Incompatible(
                "checkpoint: relation vocabulary lacks the UNK slot".into(),
            ));
        }
        let relations = RelationVocab::from_labels(&labels[1..], policy);
        if relations.len() != label_count {
            return Err(Error::Incompatible(
                "checkpoint: duplicate relation labels".into(),
            ));
        }

        let param_count = read_u32(r)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..param_count {
            let name = read_string(r)?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let tensor = match rank[0] {
                1 => {
                    let n = read_u32(r)? as usize;
                    Tensor::vector(read_values::<F>(r, n)?)
                }
                2 => {
                    let rows = read_u32(r)? as usize;
                    let cols = read_u32(r)? as usize;
                    Tensor::matrix(rows, cols, read_values::<F>(r, rows * cols)?)
                        .map_err(|e| Error::Incompatible(format!("checkpoint: {e}")))?
                }
                t => {
                    return Err(Error::Incompatible(format!(
                        "checkpoint: bad tensor rank {t}"
                    )))
                }
            };
            store.register(name, tensor);
        }

        let find = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| Error::Incompatible(format!("checkpoint: missing parameter {name}")))
        };
        let encoder = match encoder_kind {
            EncoderKind::Typed => Encoder::Typed(TypedParams {
                w_v: find("encoder.w_v")?,
                w_r: find("encoder.w_r")?,
                w_d: find("encoder.w_d")?,
                b_d: find("encoder.b_d")?,
                hidden,
                dep_dim,
                f,
                g,
            }),
            EncoderKind::Positional => {
                let w_v = find("encoder.w_v")?;
                let left = (1..=max_offset)
                    .map(|j| find(&format!("encoder.w_loc[-{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                let right = (1..=max_offset)
                    .map(|j| find(&format!("encoder.w_loc[+{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                Encoder::Positional(PositionalParams::from_parts(w_v, left, right, hidden, f))
            }
            EncoderKind::Relational => {
                let w_v = find("encoder.w_v")?;
                let by_relation = relations
                    .labels()
                    .iter()
                    .map(|label| find(&format!("encoder.w_dep[{label}]")))
                    .collect::<Result<Vec<_>>>()?;
                Encoder::Relational(RelationalParams::from_parts(w_v, by_relation, hidden, f))
            }
            EncoderKind::Single => Encoder::Single(SingleParams {
                w_v: find("encoder.w_v")?,
                w: find("encoder.w")?,
                hidden,
                f,
            }),
        };
        let head = PairHead {
            w_c: find("head.w_c")?,
            b_c: find("head.b_c")?,
            w_p: find("head.w_p")?,
            b_p: find("head.b_p")?,
            hidden: classifier_hidden,
            classes,
        };

        Ok(Model {
            store,
            encoder,
            head,
            meta: ModelMeta {
                task,
                encoder_kind,
                f,
                g,
                hidden,
                word_dim,
                dep_dim,
                classifier_hidden,
                max_offset,
                relations,
            },
        })
    }
}

fn encoder_activations(encoder: &Encoder) -> (Activation, Activation) {
    match encoder {
        Encoder::Typed(p) => (p.f, p.g),
        Encoder::Positional(p) => (p.f, Activation::Relu),
        Encoder::Relational(p) => (p.f, Activation::Relu),
        Encoder::Single(p) => (p.f, Activation::Relu),
    }
}

fn write_string(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Incompatible(
            "checkpoint: implausible string length".into(),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Incompatible("checkpoint: non-utf8 string".into()))
}

fn read_values<F: Scalar>(r: &mut impl Read, len: usize) -> Result<Vec<F>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(cast(f64::from_le_bytes(buf)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deptree::RelationPolicy;

    fn fixture_vocab() -> RelationVocab {
        RelationVocab::from_labels(["det", "nsubj", "dobj"], RelationPolicy::Subtyped)
    }

    fn roundtrip(kind: EncoderKind) {
        let model: Model<f64> =
            Model::init(Task::Entailment, kind, 5, 4, 3, 6, 2, fixture_vocab(), 1234);
        let bytes = model.to_bytes();
        let loaded = Model::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes, "{kind:?} round trip not bitwise");
        assert_eq!(loaded.store.len(), model.store.len());
        assert_eq!(loaded.meta.relations, model.meta.relations);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise_for_all_encoders() {
        for kind in EncoderKind::ALL {
            roundtrip(kind);
        }
    }

    #[test]
    fn bad_magic_is_incompatible() {
        let err = Model::<f64>::from_bytes(b"NOTACKPT________").unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
    }

    #[test]
    fn truncated_checkpoint_is_an_error() {
        let model: Model<f64> = Model::init(
            Task::Entailment,
            EncoderKind::Single,
            3,
            4,
            0,
            4,
            1,
            fixture_vocab(),
            7,
        );
        let bytes = model.to_bytes();
        assert!(Model::<f64>::from_bytes(&bytes[..bytes.len() / 2]).is_err());
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let words =
            crate::embeddings::WordEmbeddings::<f64>::synthetic(&crate::synth::synth_words(), 4, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let tree_a = crate::synth::random_tree(&mut rng, 5);
        let tree_b = crate::synth::random_tree(&mut rng, 4);
        let model: Model<f64> = Model::init(
            Task::Relatedness,
            EncoderKind::Typed,
            5,
            4,
            3,
            6,
            1,
            fixture_vocab(),
            99,
        );
        let loaded = Model::<f64>::from_bytes(&model.to_bytes()).unwrap();
        let a = model.predict_score(&tree_a, &tree_b, &words).unwrap();
        let b = loaded.predict_score(&tree_a, &tree_b, &words).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
