use super::{Gradients, NetParams, NeuralError};

/// RMSprop with a running mean of squared gradients per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    mean_square: NetParams,
}

impl RmsProp {
    pub const DEFAULT_LEARNING_RATE: f64 = 0.0005;
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new(params: &NetParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            decay: Self::DEFAULT_DECAY,
            epsilon: Self::DEFAULT_EPSILON,
            mean_square: params.zeros_like(),
        }
    }

    pub fn mean_square(&self) -> &NetParams {
        &self.mean_square
    }

    /// `ms ← decay·ms + (1−decay)·g²; θ ← θ − lr·g / (√ms + ε)`.
    ///
    /// Checks every gradient for finiteness before touching any parameter.
    pub fn step(&mut self, params: &mut NetParams, grads: &Gradients) -> Result<(), NeuralError> {
        if params.shape() != grads.0.shape() || params.shape() != self.mean_square.shape() {
            return Err(NeuralError::ShapeMismatch("optimizer state, parameters and gradients differ".into()));
        }
        for (name, _, g) in grads.0.tensors() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFinite(name.to_owned()));
            }
        }
        let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
        let grad_tensors = grads.0.tensors();
        for (((_, p), (_, ms)), (_, _, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.mean_square.tensors_mut())
            .zip(grad_tensors)
        {
            for ((p, ms), &g) in p.iter_mut().zip(ms.iter_mut()).zip(g) {
                *ms = decay * *ms + (1.0 - decay) * g * g;
                *p -= lr * g / (ms.sqrt() + eps);
            }
        }
        Ok(())
    }
}
