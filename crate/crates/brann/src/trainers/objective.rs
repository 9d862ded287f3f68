//! Objective abstraction for the strategy-driven algorithms. The production
//! objective is mean squared error over a fixed dataset; tests substitute
//! analytic objectives (quadratics) to check optimizer mathematics against
//! closed-form solutions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{Network, NetworkLayout};

/// A smooth scalar objective over a flat parameter vector.
///
/// Non-finite parameter points must report `+inf` value and a zero gradient
/// rather than erroring: line searches probe such points and treat them as
/// unacceptable.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, w: &DVector<f64>) -> f64;
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64>;

    fn value_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(w), self.gradient(w))
    }

    /// (sse, ssw) for trace rows; the default reports the raw objective and
    /// the parameter norm, which is correct for unscaled objectives.
    fn trace_sums(&self, w: &DVector<f64>, value: f64) -> (f64, f64) {
        (value, w.norm_squared())
    }
}

/// MSE = SSE / (N*m) of a network on a fixed dataset. MATLAB-scale learning
/// rates assume this normalization, so every strategy-driven algorithm
/// minimizes it.
pub struct MseObjective {
    layout: NetworkLayout,
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    denom: f64,
}

impl MseObjective {
    pub fn new(layout: NetworkLayout, inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::invalid("objective needs at least one sample"));
        }
        if inputs.ncols() != layout.input_dim()
            || targets.ncols() != layout.output_dim()
            || targets.nrows() != inputs.nrows()
        {
            return Err(Error::shape(format!(
                "dataset {}x{} -> {}x{} does not match layout {}-...-{}",
                inputs.nrows(),
                inputs.ncols(),
                targets.nrows(),
                targets.ncols(),
                layout.input_dim(),
                layout.output_dim()
            )));
        }
        let denom = (inputs.nrows() * targets.ncols()) as f64;
        Ok(MseObjective {
            layout,
            inputs,
            targets,
            denom,
        })
    }

    fn network_at(&self, w: &DVector<f64>) -> Option<Network> {
        Network::from_params(self.layout.clone(), w).ok()
    }
}

impl Objective for MseObjective {
    fn dim(&self) -> usize {
        self.layout.param_count()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let Some(net) = self.network_at(w) else {
            return f64::INFINITY;
        };
        let p = net.forward(&self.inputs).expect("dims checked at construction");
        let sse: f64 = (&p - &self.targets).iter().map(|e| e * e).sum();
        if sse.is_finite() {
            sse / self.denom
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let Some(net) = self.network_at(w) else {
            return DVector::zeros(self.dim());
        };
        net.gradient(&self.inputs, &self.targets, 1.0 / self.denom, 0.0)
            .expect("dims checked at construction")
    }

    fn trace_sums(&self, w: &DVector<f64>, value: f64) -> (f64, f64) {
        (value * self.denom, w.norm_squared())
    }
}

/// Convex quadratic f(w) = w'Aw/2 - b'w with SPD `A`: the optimizer test
/// fixture. Minimizer solves Aw = b; conjugate-gradient methods with exact
/// line searches terminate in at most dim(A) iterations.
#[cfg(test)]
pub(crate) struct QuadraticObjective {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[cfg(test)]
impl QuadraticObjective {
    pub fn minimizer(&self) -> DVector<f64> {
        self.a
            .clone()
            .lu()
            .solve(&self.b)
            .expect("test fixture matrices are invertible")
    }
}

#[cfg(test)]
impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.a * w)) - self.b.dot(w)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.a * w - &self.b
    }
}

/// Multiplies an inner objective by a constant: used to show that Rprop
/// iterates depend only on gradient signs.
#[cfg(test)]
pub(crate) struct ScaledObjective<'a> {
    pub inner: &'a dyn Objective,
    pub scale: f64,
}

#[cfg(test)]
impl Objective for ScaledObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        self.scale * self.inner.value(w)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        self.scale * self.inner.gradient(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_weights, TransferKind};

    #[test]
    fn mse_matches_hand_computation() {
        let layout = NetworkLayout::new(vec![1, 1], vec![TransferKind::Purelin]).unwrap();
        // w = 2, b = 0 on x = [1, 2], y = [0, 0]: SSE = 4 + 16 = 20, MSE = 10.
        let obj = MseObjective::new(
            layout,
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.0]),
        )
        .unwrap();
        let w = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(obj.value(&w), 10.0);
        let (sse, ssw) = obj.trace_sums(&w, obj.value(&w));
        assert_eq!(sse, 20.0);
        assert_eq!(ssw, 4.0);
    }

    #[test]
    fn mse_gradient_matches_network_gradient() {
        let layout = NetworkLayout::regression(2, &[3], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 10);
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.4, 0.5, 0.9, -0.3]);
        let y = DMatrix::from_row_slice(3, 1, &[0.5, -0.1, 0.2]);
        let obj = MseObjective::new(layout, x.clone(), y.clone()).unwrap();
        let g = obj.gradient(&net.flatten());
        let expected = net.gradient(&x, &y, 1.0 / 3.0, 0.0).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn non_finite_parameters_give_infinite_value() {
        let layout = NetworkLayout::new(vec![1, 1], vec![TransferKind::Purelin]).unwrap();
        let obj = MseObjective::new(
            layout,
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        )
        .unwrap();
        let w = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert_eq!(obj.value(&w), f64::INFINITY);
        assert_eq!(obj.gradient(&w), DVector::zeros(2));
    }

    #[test]
    fn quadratic_gradient_vanishes_at_minimizer() {
        let quad = QuadraticObjective {
            a: DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]),
            b: DVector::from_vec(vec![1.0, 2.0]),
        };
        let g = quad.gradient(&quad.minimizer());
        assert!(g.norm() < 1e-12);
    }
}
