//! AdaGrad parameter updates with optional L2 weight decay.

use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Per-coordinate adaptive gradient optimizer.
///
/// Keeps one accumulator of squared gradients per parameter, in store
/// registration order. Weight decay is applied as an addition to the raw
/// gradient (`g + wd * theta`) before both the accumulator update and the
/// parameter step, which is the differentiated form of an L2 penalty
/// `wd/2 * ||theta||^2` on the loss.
#[derive(Clone, Debug)]
pub struct AdaGrad<F> {
    learning_rate: F,
    epsilon: F,
    weight_decay: F,
    accumulators: Vec<Vec<F>>,
}

impl<F: Scalar> AdaGrad<F> {
    pub fn new(learning_rate: F, weight_decay: F) -> Self {
        AdaGrad {
            learning_rate,
            epsilon: cast(1e-8),
            weight_decay,
            accumulators: Vec::new(),
        }
    }

    pub fn with_epsilon(mut self, epsilon: F) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn learning_rate(&self) -> F {
        self.learning_rate
    }

    pub fn weight_decay(&self) -> F {
        self.weight_decay
    }

    /// Squared-gradient accumulator for the parameter at `index`, if any
    /// step has sized it yet.
    pub fn accumulator(&self, index: usize) -> Option<&[F]> {
        self.accumulators.get(index).map(Vec::as_slice)
    }

    /// Apply one update to every parameter in the store and clear gradients.
    ///
    /// Every parameter must carry a populated gradient buffer (a zero buffer
    /// counts; a missing one signals a skipped backward pass).
    pub fn step(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        while self.accumulators.len() < store.len() {
            let id = crate::autodiff::params::ParamId(self.accumulators.len());
            self.accumulators.push(vec![F::zero(); store.get(id).len()]);
        }

        for id in store.ids().collect::<Vec<_>>() {
            if store.get(id).grad().is_none() {
                return Err(Error::State(format!(
                    "adagrad step: parameter {} has no gradient",
                    store.name(id)
                )));
            }
        }

        let lr = self.learning_rate;
        let wd = self.weight_decay;
        let eps = self.epsilon;
        for id in store.ids().collect::<Vec<_>>() {
            let acc = &mut self.accumulators[id.index()];
            let tensor = store.get_mut(id);
            let grad = tensor.grad().expect("checked above").to_vec();
            let theta = tensor.as_mut_slice();
            for ((t, g), a) in theta.iter_mut().zip(grad).zip(acc.iter_mut()) {
                let eff = g + wd * *t;
                *a += eff * eff;
                *t -= lr * eff / (a.sqrt() + eps);
            }
        }
        store.clear_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::Tensor;

    fn store_with(theta: Vec<f64>) -> (ParamStore<f64>, crate::autodiff::params::ParamId) {
        let mut store = ParamStore::new();
        let id = store.register("theta", Tensor::vector(theta));
        (store, id)
    }

    #[test]
    fn first_step_matches_analytic_value() {
        // theta = 0, g = 4, lr = 0.1, wd = 0: step is lr * g / sqrt(g^2).
        let (mut store, id) = store_with(vec![0.0]);
        store.accumulate_grad(id, &[4.0]).unwrap();
        let mut opt = AdaGrad::new(0.1, 0.0);
        opt.step(&mut store).unwrap();
        let theta = store.get(id).as_slice()[0];
        assert!((theta + 0.1).abs() < 1e-8, "theta = {theta}");
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut store, id) = store_with(vec![1.5, -2.0]);
        store.accumulate_grad(id, &[0.0, 0.0]).unwrap();
        let mut opt = AdaGrad::new(0.1, 0.0);
        opt.step(&mut store).unwrap();
        assert_eq!(store.get(id).as_slice(), &[1.5, -2.0]);
        assert_eq!(opt.accumulator(0).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn matches_scalar_oracle_over_three_steps() {
        // Oracle: hand-rolled scalar AdaGrad on f(t) = t^2 / 2, grad = t.
        let lr = 0.25;
        let mut oracle_theta = 1.0f64;
        let mut oracle_acc = 0.0f64;
        let eps = 1e-8;

        let (mut store, id) = store_with(vec![1.0]);
        let mut opt = AdaGrad::new(lr, 0.0);

        for _ in 0..3 {
            let g = oracle_theta;
            oracle_acc += g * g;
            oracle_theta -= lr * g / (oracle_acc.sqrt() + eps);

            let theta = store.get(id).as_slice()[0];
            store.accumulate_grad(id, &[theta]).unwrap();
            opt.step(&mut store).unwrap();

            let got = store.get(id).as_slice()[0];
            assert!(
                (got - oracle_theta).abs() < 1e-12,
                "got {got}, oracle {oracle_theta}"
            );
        }
    }

    #[test]
    fn missing_gradient_is_a_state_error() {
        let (mut store, _) = store_with(vec![1.0]);
        let mut opt = AdaGrad::new(0.1, 0.0);
        assert!(matches!(
            opt.step(&mut store),
            Err(crate::error::Error::State(_))
        ));
    }

    #[test]
    fn effective_step_size_never_grows() {
        // lr / (sqrt(acc) + eps) is non-increasing when wd = 0.
        let (mut store, id) = store_with(vec![5.0]);
        let mut opt = AdaGrad::new(0.5, 0.0);
        let mut last_scale = f64::INFINITY;
        for g in [3.0, 0.5, 2.0, 0.0, 1.0] {
            store.accumulate_grad(id, &[g]).unwrap();
            opt.step(&mut store).unwrap();
            let acc = opt.accumulator(0).unwrap()[0];
            let scale = 0.5 / (acc.sqrt() + 1e-8);
            assert!(scale <= last_scale);
            last_scale = scale;
        }
    }
}
