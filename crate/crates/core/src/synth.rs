//! Seeded generators for synthetic trees, sentence pairs, and embeddings.
//!
//! Used by the gradient-check command and by tests that must not depend on
//! downloaded corpora. Everything here is a pure function of the seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{EntailmentLabel, PairExample};
use crate::deptree::{DepNode, DepTree};

/// Relation inventory for synthetic trees; small on purpose so repeated
/// relations exercise parameter sharing.
pub const SYNTH_RELATIONS: [&str; 6] = ["nsubj", "dobj", "det", "amod", "advmod", "aux"];

/// Size of the synthetic word vocabulary (`w0` .. `w{N-1}`).
pub const SYNTH_VOCAB: usize = 30;

pub fn synth_words() -> Vec<String> {
    (0..SYNTH_VOCAB).map(|i| format!("w{i}")).collect()
}

/// Random dependency tree over `n_words` tokens. Heads are drawn uniformly
/// from the already-placed prefix, which cannot create cycles.
pub fn random_tree(rng: &mut ChaCha8Rng, n_words: usize) -> DepTree {
    assert!(n_words >= 1);
    let forms: Vec<String> = (0..n_words)
        .map(|_| format!("w{}", rng.random_range(0..SYNTH_VOCAB)))
        .collect();
    // head[i] = 0 marks the root; otherwise a 1-based token index.
    let mut heads = vec![0usize; n_words];
    let root = rng.random_range(0..n_words);
    for i in 0..n_words {
        if i == root {
            continue;
        }
        loop {
            let h = rng.random_range(0..n_words);
            if h != i && !creates_cycle(&heads, i, h, root) {
                heads[i] = h + 1;
                break;
            }
        }
    }
    let rels: Vec<&str> = (0..n_words)
        .map(|_| SYNTH_RELATIONS[rng.random_range(0..SYNTH_RELATIONS.len())])
        .collect();

    fn assemble(idx: usize, forms: &[String], heads: &[usize], rels: &[&str]) -> DepNode {
        let mut node = DepNode::leaf(idx + 1, forms[idx].clone());
        for (j, &h) in heads.iter().enumerate() {
            if h == idx + 1 {
                node.children
                    .push((rels[j].to_string(), assemble(j, forms, heads, rels)));
            }
        }
        node
    }
    let root_node = assemble(root, &forms, &heads, &rels);
    DepTree {
        root: root_node,
        sentence_length: n_words,
    }
}

fn creates_cycle(heads: &[usize], child: usize, mut head: usize, root: usize) -> bool {
    // Walk up from the proposed head; hitting `child` closes a cycle.
    let mut steps = 0;
    loop {
        if head == child {
            return true;
        }
        if head == root || steps > heads.len() {
            return false;
        }
        if heads[head] == 0 {
            return false; // not yet attached; attaching cannot loop through child
        }
        head = heads[head] - 1;
        steps += 1;
    }
}

/// Bare tree pairs with word counts drawn from 3..=8, for gradient checks.
pub fn random_tree_pairs(seed: u64, count: usize) -> Vec<(DepTree, DepTree)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let na = rng.random_range(3..=8);
            let a = random_tree(&mut rng, na);
            let nb = rng.random_range(3..=8);
            let b = random_tree(&mut rng, nb);
            (a, b)
        })
        .collect()
}

/// Labeled synthetic sentence pairs with trees of 3-8 words each.
pub fn random_pairs(seed: u64, count: usize) -> Vec<PairExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let na = rng.random_range(3..=8);
            let a = random_tree(&mut rng, na);
            let nb = rng.random_range(3..=8);
            let b = random_tree(&mut rng, nb);
            let label = match rng.random_range(0..3) {
                0 => EntailmentLabel::Contradiction,
                1 => EntailmentLabel::Neutral,
                _ => EntailmentLabel::Entailment,
            };
            let score = 1.0 + 4.0 * rng.random::<f64>();
            PairExample {
                tree_a: a,
                tree_b: b,
                relatedness: score,
                entailment: label,
            }
        })
        .collect()
}
