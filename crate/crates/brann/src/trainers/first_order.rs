//! First-order strategies: classical momentum descent, the two
//! adaptive-rate variants, and sign-based Rprop with step backtracking.

use nalgebra::DVector;

use super::objective::Objective;
use super::{FirstOrderParams, RpropParams, StepOutcome, Strategy};

/// Gradient descent with classical momentum: v <- mc*v - lr*g; w <- w + v.
pub(crate) struct Gdm {
    lr: f64,
    mc: f64,
    velocity: DVector<f64>,
}

impl Gdm {
    pub fn new(p: &FirstOrderParams, dim: usize) -> Self {
        Gdm {
            lr: p.learning_rate,
            mc: p.momentum,
            velocity: DVector::zeros(dim),
        }
    }
}

impl Strategy for Gdm {
    fn step(
        &mut self,
        _obj: &dyn Objective,
        w: &DVector<f64>,
        _f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        self.velocity = self.mc * &self.velocity - self.lr * g;
        StepOutcome {
            w: w + &self.velocity,
            cached: None,
            note: None,
        }
    }
}

/// Adaptive-rate gradient descent: accept a candidate unless the objective
/// grew by more than `max_perf_inc`; the rate grows on improvement and
/// shrinks on rejection.
pub(crate) struct Gda {
    lr: f64,
    lr_inc: f64,
    lr_dec: f64,
    max_perf_inc: f64,
}

impl Gda {
    pub fn new(p: &FirstOrderParams) -> Self {
        Gda {
            lr: p.learning_rate,
            lr_inc: p.lr_inc,
            lr_dec: p.lr_dec,
            max_perf_inc: p.max_perf_inc,
        }
    }
}

impl Strategy for Gda {
    fn step(
        &mut self,
        obj: &dyn Objective,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        let candidate = w - self.lr * g;
        let f_new = obj.value(&candidate);
        if f_new.is_finite() && f_new <= self.max_perf_inc * f {
            if f_new < f {
                self.lr *= self.lr_inc;
            }
            StepOutcome {
                w: candidate,
                cached: None,
                note: None,
            }
        } else {
            self.lr *= self.lr_dec;
            StepOutcome {
                w: w.clone(),
                cached: Some((f, g.clone())),
                note: None,
            }
        }
    }
}

/// Adaptive rate plus momentum. A rejected step also discards the momentum
/// memory, so the next attempt is a pure (smaller) gradient step.
pub(crate) struct Gdx {
    lr: f64,
    mc: f64,
    lr_inc: f64,
    lr_dec: f64,
    max_perf_inc: f64,
    velocity: DVector<f64>,
}

impl Gdx {
    pub fn new(p: &FirstOrderParams, dim: usize) -> Self {
        Gdx {
            lr: p.learning_rate,
            mc: p.momentum,
            lr_inc: p.lr_inc,
            lr_dec: p.lr_dec,
            max_perf_inc: p.max_perf_inc,
            velocity: DVector::zeros(dim),
        }
    }
}

impl Strategy for Gdx {
    fn step(
        &mut self,
        obj: &dyn Objective,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        let velocity = self.mc * &self.velocity - self.lr * g;
        let candidate = w + &velocity;
        let f_new = obj.value(&candidate);
        if f_new.is_finite() && f_new <= self.max_perf_inc * f {
            if f_new < f {
                self.lr *= self.lr_inc;
            }
            self.velocity = velocity;
            StepOutcome {
                w: candidate,
                cached: None,
                note: None,
            }
        } else {
            self.lr *= self.lr_dec;
            self.velocity.fill(0.0);
            StepOutcome {
                w: w.clone(),
                cached: Some((f, g.clone())),
                note: None,
            }
        }
    }
}

/// Resilient backpropagation: per-parameter step sizes adapted from
/// gradient sign agreement, with step backtracking on a sign flip. Step
/// magnitudes never depend on gradient magnitude.
pub(crate) struct Rprop {
    params: RpropParams,
    delta: DVector<f64>,
    prev_grad: DVector<f64>,
    prev_step: DVector<f64>,
}

impl Rprop {
    pub fn new(p: &RpropParams, dim: usize) -> Self {
        Rprop {
            params: *p,
            delta: DVector::from_element(dim, p.delta0),
            prev_grad: DVector::zeros(dim),
            prev_step: DVector::zeros(dim),
        }
    }
}

impl Strategy for Rprop {
    fn step(
        &mut self,
        _obj: &dyn Objective,
        w: &DVector<f64>,
        _f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome {
        let mut next = w.clone();
        for i in 0..w.len() {
            let agreement = g[i] * self.prev_grad[i];
            if agreement > 0.0 {
                self.delta[i] = (self.delta[i] * self.params.eta_plus).min(self.params.delta_max);
                let step = -g[i].signum() * self.delta[i];
                next[i] += step;
                self.prev_step[i] = step;
                self.prev_grad[i] = g[i];
            } else if agreement < 0.0 {
                // Sign flip: the previous step overshot. Undo it, shrink the
                // step size, and skip one adaptation by zeroing the stored
                // gradient.
                self.delta[i] = (self.delta[i] * self.params.eta_minus).max(self.params.delta_min);
                next[i] -= self.prev_step[i];
                self.prev_step[i] = 0.0;
                self.prev_grad[i] = 0.0;
            } else {
                let step = if g[i] == 0.0 {
                    0.0
                } else {
                    -g[i].signum() * self.delta[i]
                };
                next[i] += step;
                self.prev_step[i] = step;
                self.prev_grad[i] = g[i];
            }
        }
        StepOutcome {
            w: next,
            cached: None,
            note: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::objective::{QuadraticObjective, ScaledObjective};
    use crate::trainers::{run_strategy, AlgorithmKind, TrainingConfig};
    use nalgebra::DMatrix;

    fn quad() -> QuadraticObjective {
        QuadraticObjective {
            a: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 8.0]),
            b: DVector::from_vec(vec![1.0, 1.0]),
        }
    }

    #[test]
    fn gdm_zero_momentum_is_plain_gradient_descent() {
        let obj = quad();
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let (f, g) = obj.value_grad(&w);
        let params = FirstOrderParams {
            momentum: 0.0,
            learning_rate: 0.05,
            ..FirstOrderParams::default()
        };
        let mut gdm = Gdm::new(&params, 2);
        let out = gdm.step(&obj, &w, f, &g);
        let expected = &w - 0.05 * &g;
        assert_eq!(out.w, expected);
    }

    #[test]
    fn gdm_momentum_accumulates_velocity() {
        let obj = quad();
        let params = FirstOrderParams {
            momentum: 0.5,
            learning_rate: 0.1,
            ..FirstOrderParams::default()
        };
        let mut gdm = Gdm::new(&params, 2);
        let w0 = DVector::from_vec(vec![1.0, 0.0]);
        let (f0, g0) = obj.value_grad(&w0);
        let w1 = gdm.step(&obj, &w0, f0, &g0).w;
        let (f1, g1) = obj.value_grad(&w1);
        let w2 = gdm.step(&obj, &w1, f1, &g1).w;
        // v1 = -lr*g0; v2 = mc*v1 - lr*g1.
        let v1 = -0.1 * &g0;
        let v2 = 0.5 * &v1 - 0.1 * &g1;
        assert!((w2 - (&w1 + v2)).amax() < 1e-15);
    }

    #[test]
    fn gda_rejects_overshooting_steps_and_shrinks_rate() {
        let obj = quad();
        // Large rate guarantees the first candidate overshoots badly on the
        // stiff axis.
        let params = FirstOrderParams {
            learning_rate: 10.0,
            ..FirstOrderParams::default()
        };
        let mut gda = Gda::new(&params);
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let (f, g) = obj.value_grad(&w);
        let out = gda.step(&obj, &w, f, &g);
        assert_eq!(out.w, w, "overshoot must be rejected");
        assert!(gda.lr < 10.0);
    }

    #[test]
    fn gda_grows_rate_on_improvement() {
        let obj = quad();
        let params = FirstOrderParams {
            learning_rate: 0.01,
            ..FirstOrderParams::default()
        };
        let mut gda = Gda::new(&params);
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let (f, g) = obj.value_grad(&w);
        let out = gda.step(&obj, &w, f, &g);
        assert_ne!(out.w, w);
        assert!((gda.lr - 0.01 * params.lr_inc).abs() < 1e-15);
    }

    #[test]
    fn rprop_iterates_depend_only_on_gradient_signs() {
        let obj = quad();
        let scaled = ScaledObjective {
            inner: &obj,
            scale: 1000.0,
        };
        let config = {
            let mut c = TrainingConfig::for_algorithm(AlgorithmKind::Trainrp);
            c.max_epochs = 25;
            c
        };
        let w0 = DVector::from_vec(vec![3.0, -2.0]);
        let strat_a = Box::new(Rprop::new(&config.rprop, 2));
        let strat_b = Box::new(Rprop::new(&config.rprop, 2));
        let (wa, trace_a) = run_strategy(&obj, w0.clone(), &config, strat_a).unwrap();
        let (wb, _) = run_strategy(&scaled, w0, &config, strat_b).unwrap();
        assert_eq!(wa, wb, "scaling the objective by 1000 changed the path");
        assert!(trace_a.rows.len() >= 10);
    }

    #[test]
    fn rprop_backtracks_on_sign_flip() {
        let obj = quad();
        let params = RpropParams::default();
        let mut rp = Rprop::new(&params, 2);
        // Force a controlled history: pretend the previous step was +0.07 on
        // parameter 0 with positive gradient stored.
        rp.prev_grad[0] = 1.0;
        rp.prev_step[0] = 0.07;
        let w = DVector::from_vec(vec![1.0, 0.0]);
        // Current gradient negative on parameter 0: sign flip.
        let g = DVector::from_vec(vec![-1.0, 0.0]);
        let out = rp.step(&obj, &w, 0.0, &g);
        assert!((out.w[0] - (1.0 - 0.07)).abs() < 1e-15);
        assert!((rp.delta[0] - 0.07 * params.eta_minus).abs() < 1e-15);
        assert_eq!(rp.prev_grad[0], 0.0);
    }

    #[test]
    fn rprop_converges_on_quadratic() {
        let obj = quad();
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Trainrp);
        config.max_epochs = 400;
        config.stop.plateau_rel_tol = 1e-12;
        let strat = Box::new(Rprop::new(&config.rprop, 2));
        let (w, _) = run_strategy(&obj, DVector::from_vec(vec![4.0, -3.0]), &config, strat)
            .unwrap();
        let w_star = obj.minimizer();
        assert!(
            (w - &w_star).amax() < 1e-2,
            "rprop did not approach the minimizer"
        );
    }
}
