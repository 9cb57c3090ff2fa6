use serde::{Deserialize, Serialize};

use super::{AutodiffError, Matrix};

/// A trainable value with an optional accumulated gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    value: Matrix,
    #[serde(skip)]
    grad: Option<Matrix>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(value: Matrix, requires_grad: bool) -> Self {
        Self {
            value,
            grad: None,
            requires_grad,
        }
    }

    pub fn parameter(value: Matrix) -> Self {
        Self::new(value, true)
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Matrix {
        &mut self.value
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    /// Adds `g` to the stored gradient. Fan-out contributions sum.
    pub fn accumulate_grad(&mut self, g: &Matrix) {
        debug_assert_eq!(g.shape(), self.value.shape());
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
    }

    pub fn scale_grad(&mut self, factor: f64) {
        if let Some(g) = &mut self.grad {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

/// Plain gradient descent: `p <- p - lr * grad`, then clears gradients.
///
/// Every trainable tensor must carry a gradient; nothing is updated otherwise.
pub fn sgd_step(params: &mut [&mut Tensor], learning_rate: f64) -> Result<(), AutodiffError> {
    if !(learning_rate > 0.0) || !learning_rate.is_finite() {
        return Err(AutodiffError::InvalidArgument(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    for (index, p) in params.iter().enumerate() {
        if p.requires_grad && p.grad.is_none() {
            return Err(AutodiffError::MissingGradient { index });
        }
    }
    for p in params.iter_mut() {
        if !p.requires_grad {
            continue;
        }
        let g = p.grad.take().expect("checked above");
        for (v, d) in p.value.data_mut().iter_mut().zip(g.data()) {
            *v -= learning_rate * d;
        }
    }
    Ok(())
}
