//! Stochastic gradient descent with classical momentum.

use super::graph::ModelGraph;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Classical-momentum SGD: `v <- momentum*v - lr*g; w <- w + v`.
///
/// Velocities are kept per parameter in the model's declaration order and
/// are part of training checkpoints.
#[derive(Debug, Clone)]
pub struct SgdMomentum<F> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocities: Vec<Tensor<F>>,
}

impl<F: Real> SgdMomentum<F> {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {momentum} outside [0, 1)"
            )));
        }
        Ok(SgdMomentum { learning_rate, momentum, velocities: Vec::new() })
    }

    /// Apply one update from the model's accumulated gradients, then zero
    /// the gradients.
    pub fn step(&mut self, model: &mut ModelGraph<F>) -> Result<()> {
        if self.velocities.is_empty() {
            model.for_each_param(&mut |param, _| {
                self.velocities.push(Tensor::zeros(param.shape()));
            });
        }
        let lr = F::from_f64(self.learning_rate);
        let mu = F::from_f64(self.momentum);
        let mut idx = 0;
        let velocities = &mut self.velocities;
        let mut status = Ok(());
        model.for_each_param(&mut |param, grad| {
            if status.is_err() {
                return;
            }
            let Some(v) = velocities.get_mut(idx) else {
                status = Err(Error::ShapeMismatch("optimizer/model parameter count".into()));
                return;
            };
            if v.shape() != param.shape() {
                status = Err(Error::ShapeMismatch(format!(
                    "velocity {:?} vs parameter {:?}",
                    v.shape(),
                    param.shape()
                )));
                return;
            }
            for ((w, g), vel) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(v.data_mut())
            {
                *vel = mu * *vel - lr * *g;
                *w += *vel;
            }
            grad.fill(F::ZERO);
            idx += 1;
        });
        status
    }

    pub fn velocities(&self) -> &[Tensor<F>] {
        &self.velocities
    }

    pub fn load_velocities(&mut self, velocities: Vec<Tensor<F>>) {
        self.velocities = velocities;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::{Layer, ModelGraph, Stage};
    use crate::nn::layers::Dense;

    /// One 1x1 dense layer: a single scalar weight plus a bias.
    fn scalar_model(w: f64) -> ModelGraph<f64> {
        let mut fc = Dense::<f64>::new(1, 1);
        fc.weight.data_mut()[0] = w;
        ModelGraph {
            id: "scalar".into(),
            input_channels: 1,
            input_len: 1,
            num_classes: 1,
            stages: vec![Stage { label: "FC".into(), layers: vec![Layer::Dense(fc)] }],
        }
    }

    fn set_grads(model: &mut ModelGraph<f64>, g: f64) {
        model.for_each_param(&mut |_, grad| grad.fill(g));
    }

    fn weight(model: &mut ModelGraph<f64>) -> f64 {
        let mut out = f64::NAN;
        let mut first = true;
        model.for_each_param(&mut |param, _| {
            if first {
                out = param.data()[0];
                first = false;
            }
        });
        out
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut model = scalar_model(1.0);
        let mut opt = SgdMomentum::new(0.5, 0.0).unwrap();
        set_grads(&mut model, 2.0);
        opt.step(&mut model).unwrap();
        assert!((weight(&mut model) - (1.0 - 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_decays_velocity_only() {
        let mut model = scalar_model(3.0);
        let mut opt = SgdMomentum::new(0.1, 0.5).unwrap();
        set_grads(&mut model, 1.0);
        opt.step(&mut model).unwrap();
        let w_after_one = weight(&mut model);
        opt.learning_rate = 0.0;
        set_grads(&mut model, 1.0);
        opt.step(&mut model).unwrap();
        // v was -0.1; with lr 0 it becomes -0.05 and w moves by it.
        assert!((weight(&mut model) - (w_after_one - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn two_hand_computed_steps() {
        // w = 0, g = 1 both steps, lr = 0.1, momentum = 0.9:
        // step 1: v = -0.1, w = -0.1; step 2: v = -0.19, w = -0.29.
        let mut model = scalar_model(0.0);
        let mut opt = SgdMomentum::new(0.1, 0.9).unwrap();
        set_grads(&mut model, 1.0);
        opt.step(&mut model).unwrap();
        assert!((weight(&mut model) + 0.1).abs() < 1e-15);
        set_grads(&mut model, 1.0);
        opt.step(&mut model).unwrap();
        assert!((weight(&mut model) + 0.29).abs() < 1e-15);
    }

    #[test]
    fn invalid_momentum_rejected() {
        assert!(SgdMomentum::<f64>::new(0.1, 1.0).is_err());
        assert!(SgdMomentum::<f64>::new(0.1, -0.1).is_err());
    }

    #[test]
    fn step_zeroes_gradients() {
        let mut model = scalar_model(0.0);
        let mut opt = SgdMomentum::new(0.1, 0.9).unwrap();
        set_grads(&mut model, 1.0);
        opt.step(&mut model).unwrap();
        model.for_each_param(&mut |_, grad| {
            assert!(grad.data().iter().all(|&g| g == 0.0));
        });
    }
}
