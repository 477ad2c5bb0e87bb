//! Pearson's r, Spearman's rho, mean squared error, and accuracy.

use crate::error::{Error, Result};
use crate::scalar::{cast_usize, Scalar};

fn check_pairs<F: Scalar>(op: &'static str, predicted: &[F], gold: &[F]) -> Result<()> {
    if predicted.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            op,
            lhs: format!("[{}]", predicted.len()),
            rhs: format!("[{}]", gold.len()),
        });
    }
    if predicted.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{op}: non-finite input value")));
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
///
/// A constant sequence has no defined correlation and is reported as an
/// error rather than a sentinel value.
pub fn pearson<F: Scalar>(predicted: &[F], gold: &[F]) -> Result<F> {
    check_pairs("pearson", predicted, gold)?;
    let n = predicted.len();
    if n < 2 {
        return Err(Error::Usage(format!(
            "pearson: need at least 2 pairs, got {n}"
        )));
    }
    let nf = cast_usize::<F>(n);
    let mean = |xs: &[F]| {
        let mut s = F::zero();
        for &x in xs {
            s += x;
        }
        s / nf
    };
    let (mx, my) = (mean(predicted), mean(gold));
    let mut sxx = F::zero();
    let mut syy = F::zero();
    let mut sxy = F::zero();
    for (&x, &y) in predicted.iter().zip(gold) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(Error::Domain(
            "pearson: constant sequence has undefined correlation".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson over ranks, ties receiving the
/// average of the rank positions they span.
pub fn spearman<F: Scalar>(predicted: &[F], gold: &[F]) -> Result<F> {
    check_pairs("spearman", predicted, gold)?;
    let pr = average_ranks(predicted);
    let gr = average_ranks(gold);
    pearson(&pr, &gr)
}

fn average_ranks<F: Scalar>(values: &[F]) -> Vec<F> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![F::zero(); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 averaged over the tie run.
        let avg = cast_usize::<F>(i + 1 + j + 1) / cast_usize::<F>(2);
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Mean squared error.
pub fn mse<F: Scalar>(predicted: &[F], gold: &[F]) -> Result<F> {
    check_pairs("mse", predicted, gold)?;
    if predicted.is_empty() {
        return Err(Error::Usage("mse: empty input".into()));
    }
    let mut acc = F::zero();
    for (&p, &g) in predicted.iter().zip(gold) {
        let d = p - g;
        acc += d * d;
    }
    Ok(acc / cast_usize(predicted.len()))
}

/// Fraction of exact label matches.
pub fn accuracy<T: PartialEq>(predicted: &[T], gold: &[T]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            op: "accuracy",
            lhs: format!("[{}]", predicted.len()),
            rhs: format!("[{}]", gold.len()),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Usage("accuracy: empty input".into()));
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predicted.len() as f64)
}
