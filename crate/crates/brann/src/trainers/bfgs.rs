//! Dense inverse-Hessian BFGS with the shared strong-Wolfe search.

use nalgebra::{DMatrix, DVector};

use super::line_search::{steepest_fallback, strong_wolfe, LineSearchParams};
use super::objective::Objective;
use super::{StepOutcome, Strategy};

pub(crate) struct Bfgs {
    search: LineSearchParams,
    b_inv: DMatrix<f64>,
    first: bool,
}

impl Bfgs {
    pub fn new(search: LineSearchParams, dim: usize) -> Self {
        Bfgs {
            search,
            b_inv: DMatrix::identity(dim, dim),
            first: true,
        }
    }
}

impl Strategy for Bfgs {
    fn step(
        &mut self,
        obj: &dyn Objective,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        let mut d = -(&self.b_inv * g);
        let mut note = None;
        if d.dot(g) >= 0.0 {
            // The approximation lost positive definiteness numerically.
            self.b_inv = DMatrix::identity(w.len(), w.len());
            d = -g.clone();
            note = Some("inverse-Hessian reset".to_string());
        }
        let dphi0 = g.dot(&d);
        // A quasi-Newton step has natural length 1; the very first epoch
        // walks along -g where unit steps can be wild, so scale it down.
        let t_init = if self.first { 1.0 / (1.0 + g.norm()) } else { 1.0 };
        self.first = false;

        match strong_wolfe(obj, w, &d, f, dphi0, t_init, &self.search) {
            Some(acc) => {
                let s = acc.t * &d;
                let y = &acc.g - g;
                let sy = s.dot(&y);
                if sy > 1e-10 * s.norm() * y.norm() {
                    // Standard BFGS inverse update:
                    // B <- (I - s y'/sy) B (I - y s'/sy) + s s'/sy.
                    let rho = 1.0 / sy;
                    let n = w.len();
                    let mut left = DMatrix::identity(n, n);
                    left -= rho * &s * y.transpose();
                    self.b_inv = &left * &self.b_inv * left.transpose() + rho * &s * s.transpose();
                } else {
                    note = Some("curvature update skipped (s.y too small)".to_string());
                }
                StepOutcome {
                    w: w + s,
                    cached: Some((acc.f, acc.g)),
                    note,
                }
            }
            None => {
                self.b_inv = DMatrix::identity(w.len(), w.len());
                match steepest_fallback(obj, w, f, g, self.search.c1) {
                    Some((w_new, _)) => StepOutcome {
                        w: w_new,
                        cached: None,
                        note: Some("line search failed; steepest-descent fallback".into()),
                    },
                    None => StepOutcome {
                        w: w.clone(),
                        cached: Some((f, g.clone())),
                        note: Some("line search failed; no progress".into()),
                    },
                }
            }
        }
    }
}
