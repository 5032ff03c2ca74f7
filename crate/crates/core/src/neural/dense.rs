use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};
use rand::Rng;

/// Affine map `y = x W^T + b` applied row-wise to a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn uniform(inputs: usize, outputs: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self {
            w: Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-scale..=scale)),
            b: Array1::from_shape_simple_fn(outputs, || rng.random_range(-scale..=scale)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        general_mat_mul(1.0, &dy.t(), x, 1.0, &mut grad.w);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}
