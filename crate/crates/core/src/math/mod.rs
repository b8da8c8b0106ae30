//! Dense matrix numerics, reverse-mode gradients and gradient checking.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{finite_diff_check, sample_coords, Coord, CoordCheck, GradCheckReport};
pub use matrix::{
    cross_entropy, gelu, gelu_grad, layer_norm_rows, BoolMatrix, LayerNormOut, Matrix,
    MASKED_LOGIT, PROB_EPSILON,
};
pub use tape::{Gradients, Tape, Var};

/// A named trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        ParamTensor {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}
