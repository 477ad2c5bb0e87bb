//! Straight-line oracle evaluators used by the integration suites.
//! Everything here recomputes the model with plain loops over raw
//! parameter values, independently of the graph engine under test.
#![allow(dead_code)] // each test binary uses its own subset
#![allow(clippy::needless_range_loop)] // plain indexed loops are the oracle idiom

use treernn_core::autodiff::{Shape, Tensor};
use treernn_core::deptree::{child_offset, DepNode, DepTree};
use treernn_core::embeddings::WordEmbeddings;
use treernn_core::encoders::Encoder;
use treernn_core::model::Model;

pub fn matvec(m: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = match m.shape() {
        Shape::Matrix(r, c) => (r, c),
        s => panic!("matvec oracle on {s}"),
    };
    assert_eq!(cols, x.len());
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        for j in 0..cols {
            out[i] += m.at(i, j) * x[j];
        }
    }
    out
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn tanh(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Independent recursive evaluation of the encoder's root vector.
pub fn oracle_root(model: &Model<f64>, tree: &DepTree, words: &WordEmbeddings<f64>) -> Vec<f64> {
    oracle_node(model, &tree.root, words)
}

fn oracle_node(model: &Model<f64>, node: &DepNode, words: &WordEmbeddings<f64>) -> Vec<f64> {
    let store = &model.store;
    let relations = &model.meta.relations;
    let mut acc = match &model.encoder {
        Encoder::Typed(p) => matvec(store.get(p.w_v), words.lookup(&node.form)),
        Encoder::Positional(p) => matvec(store.get(p.w_v), words.lookup(&node.form)),
        Encoder::Relational(p) => matvec(store.get(p.w_v), words.lookup(&node.form)),
        Encoder::Single(p) => matvec(store.get(p.w_v), words.lookup(&node.form)),
    };
    for (rel, child) in &node.children {
        let h_k = oracle_node(model, child, words);
        let weight = child.word_count() as f64;
        let term = match &model.encoder {
            Encoder::Typed(p) => {
                // d_k = relu(w_d z_k + b_d) collapses to one w_d column.
                let idx = relations.index_of(rel);
                let w_d = store.get(p.w_d);
                let b_d = store.get(p.b_d).as_slice();
                let mut d_k: Vec<f64> = (0..p.dep_dim).map(|i| w_d.at(i, idx) + b_d[i]).collect();
                relu(&mut d_k);
                let mut joint = h_k.clone();
                joint.extend_from_slice(&d_k);
                let mut t = matvec(store.get(p.w_r), &joint);
                relu(&mut t);
                t
            }
            Encoder::Positional(p) => {
                let offset = child_offset(node, child).expect("child of parent");
                matvec(store.get(p.matrix_for_offset(offset)), &h_k)
            }
            Encoder::Relational(p) => {
                matvec(store.get(p.matrix_for_relation(relations, rel)), &h_k)
            }
            Encoder::Single(p) => matvec(store.get(p.w), &h_k),
        };
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += weight * t;
        }
    }
    let inv = 1.0 / node.word_count() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    tanh(&mut acc);
    acc
}

/// Independent evaluation of the pair head over two root vectors.
pub fn oracle_pair_distribution(
    model: &Model<f64>,
    tree_a: &DepTree,
    tree_b: &DepTree,
    words: &WordEmbeddings<f64>,
) -> Vec<f64> {
    let u = oracle_root(model, tree_a, words);
    let v = oracle_root(model, tree_b, words);
    let feat: Vec<f64> = u
        .iter()
        .zip(&v)
        .map(|(a, b)| a * b)
        .chain(u.iter().zip(&v).map(|(a, b)| (a - b).abs()))
        .collect();
    let head = &model.head;
    let mut h_s = matvec(model.store.get(head.w_c), &feat);
    for (h, b) in h_s.iter_mut().zip(model.store.get(head.b_c).as_slice()) {
        *h += b;
    }
    tanh(&mut h_s);
    let mut logits = matvec(model.store.get(head.w_p), &h_s);
    for (l, b) in logits.iter_mut().zip(model.store.get(head.b_p).as_slice()) {
        *l += b;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    logits.iter().map(|l| (l - max).exp() / z).collect()
}

pub fn kl(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .map(|(&p, &q)| if p > 0.0 { p * (p / q).ln() } else { 0.0 })
        .sum()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
