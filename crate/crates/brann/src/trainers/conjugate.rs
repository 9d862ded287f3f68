//! Conjugate-gradient strategies: Fletcher-Reeves, Polak-Ribiere (with the
//! nonnegativity safeguard) and the Powell-Beale restart variant, all over
//! the shared strong-Wolfe search; plus Moller's scaled conjugate gradient,
//! which replaces the line search with a Hessian-free curvature estimate.

use nalgebra::DVector;

use super::line_search::{steepest_fallback, strong_wolfe, LineSearchParams};
use super::objective::Objective;
use super::{ScgParams, StepOutcome, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CgVariant {
    FletcherReeves,
    PolakRibiere,
    /// Polak-Ribiere coefficient with Powell's restart test
    /// |g_prev . g| >= 0.2*||g||^2 (the two-term Beale direction is
    /// simplified to a plain restart).
    PowellBeale,
}

pub(crate) struct Cg {
    variant: CgVariant,
    search: LineSearchParams,
    /// Restart period: the parameter count.
    dim: usize,
    direction: Option<DVector<f64>>,
    g_prev: DVector<f64>,
    epochs_since_restart: usize,
    t_prev: f64,
}

impl Cg {
    pub fn new(variant: CgVariant, search: LineSearchParams, dim: usize) -> Self {
        Cg {
            variant,
            search,
            dim,
            direction: None,
            g_prev: DVector::zeros(dim),
            epochs_since_restart: 0,
            t_prev: 1.0,
        }
    }

    fn coefficient(&self, g: &DVector<f64>) -> f64 {
        let denom = self.g_prev.norm_squared();
        if denom == 0.0 {
            return 0.0;
        }
        match self.variant {
            CgVariant::FletcherReeves => g.norm_squared() / denom,
            CgVariant::PolakRibiere | CgVariant::PowellBeale => {
                (g.dot(g) - g.dot(&self.g_prev)).max(0.0) / denom
            }
        }
    }
}

impl Strategy for Cg {
    fn step(
        &mut self,
        obj: &dyn Objective,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        let mut restart = match &self.direction {
            None => true,
            Some(_) => self.epochs_since_restart >= self.dim,
        };
        if !restart && self.variant == CgVariant::PowellBeale {
            // Powell's test: consecutive gradients far from orthogonal.
            restart = self.g_prev.dot(g).abs() >= 0.2 * g.norm_squared();
        }
        let mut d = if restart {
            -g.clone()
        } else {
            let beta = self.coefficient(g);
            -g + beta * self.direction.as_ref().unwrap()
        };
        if d.dot(g) >= 0.0 {
            // Conjugacy produced a non-descent direction; fall back to
            // steepest descent for this epoch.
            d = -g.clone();
            restart = true;
        }
        let dphi0 = g.dot(&d);

        match strong_wolfe(obj, w, &d, f, dphi0, self.t_prev, &self.search) {
            Some(acc) => {
                let w_new = w + acc.t * &d;
                self.t_prev = acc.t;
                self.g_prev = g.clone();
                self.direction = Some(d);
                self.epochs_since_restart = if restart {
                    1
                } else {
                    self.epochs_since_restart + 1
                };
                StepOutcome {
                    w: w_new,
                    cached: Some((acc.f, acc.g)),
                    note: None,
                }
            }
            None => {
                self.direction = None;
                self.epochs_since_restart = 0;
                self.t_prev = 1.0;
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

/// Moller's scaled conjugate gradient. One epoch is one SCG iteration; a
/// rejected iteration (comparison parameter < 0) leaves the weights in
/// place and raises the damping.
pub(crate) struct Scg {
    sigma0: f64,
    lambda: f64,
    lambda_bar: f64,
    dim: usize,
    p: Option<DVector<f64>>,
    r: DVector<f64>,
    success: bool,
    delta: f64,
    since_restart: usize,
}

impl Scg {
    pub fn new(params: &ScgParams, dim: usize) -> Self {
        Scg {
            sigma0: params.sigma0,
            lambda: params.lambda0,
            lambda_bar: 0.0,
            dim,
            p: None,
            r: DVector::zeros(dim),
            success: true,
            delta: 0.0,
            since_restart: 0,
        }
    }
}

impl Strategy for Scg {
    fn step(
        &mut self,
        obj: &dyn Objective,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        if self.p.is_none() {
            self.r = -g.clone();
            self.p = Some(self.r.clone());
            self.success = true;
            self.since_restart = 0;
        }
        let p = self.p.clone().unwrap();
        let p_norm_sq = p.norm_squared();
        if p_norm_sq == 0.0 {
            return StepOutcome {
                w: w.clone(),
                cached: Some((f, g.clone())),
                note: None,
            };
        }

        if self.success {
            // Hessian-vector product along p by forward differencing the
            // gradient.
            let sigma = self.sigma0 / p_norm_sq.sqrt();
            let g_probe = obj.gradient(&(w + sigma * &p));
            let s = (g_probe - g) / sigma;
            self.delta = p.dot(&s);
        }
        let mut delta = self.delta + (self.lambda - self.lambda_bar) * p_norm_sq;
        if delta <= 0.0 {
            // Make the curvature estimate positive definite.
            self.lambda_bar = 2.0 * (self.lambda - delta / p_norm_sq);
            delta = -delta + self.lambda * p_norm_sq;
            self.lambda = self.lambda_bar;
        }

        let mu = p.dot(&self.r);
        let alpha = mu / delta;
        let w_new = w + alpha * &p;
        let f_new = obj.value(&w_new);
        let comparison = 2.0 * delta * (f - f_new) / (mu * mu);

        let outcome = if comparison >= 0.0 && f_new.is_finite() {
            let g_new = obj.gradient(&w_new);
            let r_new = -g_new.clone();
            self.lambda_bar = 0.0;
            self.success = true;
            self.since_restart += 1;
            if self.since_restart >= self.dim {
                self.p = Some(r_new.clone());
                self.since_restart = 0;
            } else {
                let beta = (r_new.norm_squared() - r_new.dot(&self.r)) / mu;
                self.p = Some(&r_new + beta * &p);
            }
            self.r = r_new;
            if comparison >= 0.75 {
                self.lambda *= 0.25;
            }
            StepOutcome {
                w: w_new,
                cached: Some((f_new, g_new)),
                note: None,
            }
        } else {
            self.lambda_bar = self.lambda;
            self.success = false;
            StepOutcome {
                w: w.clone(),
                cached: Some((f, g.clone())),
                note: None,
            }
        };
        if comparison < 0.25 {
            self.lambda += delta * (1.0 - comparison) / p_norm_sq;
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::objective::QuadraticObjective;
    use crate::trainers::{run_strategy, AlgorithmKind, TrainingConfig};
    use nalgebra::DMatrix;

    fn quad3() -> QuadraticObjective {
        QuadraticObjective {
            a: DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]),
            b: DVector::from_vec(vec![1.0, -2.0, 0.5]),
        }
    }

    fn run_cg(variant: CgVariant, epochs: usize) -> (DVector<f64>, usize) {
        let obj = quad3();
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Traincgf);
        config.max_epochs = epochs;
        config.stop.grad_tol = 1e-12;
        let strat = Box::new(Cg::new(variant, config.line_search, 3));
        let (w, trace) =
            run_strategy(&obj, DVector::from_vec(vec![5.0, 5.0, 5.0]), &config, strat).unwrap();
        (w, trace.rows.len())
    }

    #[test]
    fn cg_terminates_in_dimension_many_iterations_on_quadratics() {
        // Exact line searches give conjugate gradient finite termination:
        // at most 3 iterations for a 3-variable SPD quadratic.
        let w_star = quad3().minimizer();
        for variant in [
            CgVariant::FletcherReeves,
            CgVariant::PolakRibiere,
            CgVariant::PowellBeale,
        ] {
            let (w, epochs) = run_cg(variant, 3);
            assert!(
                (&w - &w_star).amax() < 1e-8,
                "{variant:?}: off by {} after {epochs} epochs",
                (&w - &w_star).amax()
            );
        }
    }

    #[test]
    fn scg_converges_on_quadratic() {
        let obj = quad3();
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Trainscg);
        config.max_epochs = 60;
        config.stop.grad_tol = 1e-10;
        let strat = Box::new(Scg::new(&config.scg, 3));
        let (w, _) =
            run_strategy(&obj, DVector::from_vec(vec![5.0, 5.0, 5.0]), &config, strat).unwrap();
        assert!((w - quad3().minimizer()).amax() < 1e-6);
    }

    #[test]
    fn scg_objective_never_increases() {
        let obj = quad3();
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Trainscg);
        config.max_epochs = 40;
        let strat = Box::new(Scg::new(&config.scg, 3));
        let (_, trace) =
            run_strategy(&obj, DVector::from_vec(vec![-3.0, 2.0, 7.0]), &config, strat).unwrap();
        for pair in trace.rows.windows(2) {
            assert!(pair[1].objective <= pair[0].objective);
        }
    }

    #[test]
    fn powell_restart_test_detects_non_orthogonal_gradients() {
        // At w = 0 the gradient is [-1, 2, -0.5]. Seed g_prev = g/2 so
        // |g_prev . g| = 0.5*||g||^2 >= 0.2*||g||^2, and a previous direction
        // orthogonal to g whose contribution would pull the step off the -g
        // line if no restart happened.
        let obj = quad3();
        let w = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let g = obj.gradient(&w);
        let d_prev = DVector::from_vec(vec![2.0, 1.0, 0.0]);
        assert!(d_prev.dot(&g).abs() < 1e-15);

        let step_with = |variant: CgVariant| {
            let mut cg = Cg::new(variant, LineSearchParams::default(), 3);
            cg.direction = Some(d_prev.clone());
            cg.epochs_since_restart = 1;
            cg.g_prev = 0.5 * &g;
            let out = cg.step(&obj, &w, obj.value(&w), &g);
            (out.w - &w, cg.epochs_since_restart)
        };
        // Off-line component: size of (moved x g), zero iff moved || g.
        let off_line = |moved: &DVector<f64>| {
            (moved[0] * g[1] - moved[1] * g[0]).abs()
                + (moved[0] * g[2] - moved[2] * g[0]).abs()
                + (moved[1] * g[2] - moved[2] * g[1]).abs()
        };

        let (moved, since_restart) = step_with(CgVariant::PowellBeale);
        assert!(moved.dot(&g) < 0.0);
        assert!(off_line(&moved) < 1e-12, "restart should move along -g");
        assert_eq!(since_restart, 1);

        // Same state under plain Polak-Ribiere: no restart test, so the
        // conjugate term keeps a d_prev component in the step.
        let (moved, since_restart) = step_with(CgVariant::PolakRibiere);
        assert!(off_line(&moved) > 1e-6, "expected a d_prev component");
        assert_eq!(since_restart, 2);
    }

    #[test]
    fn fletcher_reeves_coefficient_formula() {
        let mut cg = Cg::new(CgVariant::FletcherReeves, LineSearchParams::default(), 2);
        cg.g_prev = DVector::from_vec(vec![1.0, 2.0]);
        let g = DVector::from_vec(vec![2.0, 2.0]);
        // ||g||^2 / ||g_prev||^2 = 8 / 5.
        assert!((cg.coefficient(&g) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn polak_ribiere_coefficient_clamps_at_zero() {
        let mut cg = Cg::new(CgVariant::PolakRibiere, LineSearchParams::default(), 2);
        cg.g_prev = DVector::from_vec(vec![2.0, 0.0]);
        // g . (g - g_prev) = 1 - 2 = -1 -> clamped to 0.
        let g = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(cg.coefficient(&g), 0.0);
    }
}
