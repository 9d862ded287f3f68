//! Levenberg-Marquardt machinery: the damped step, the plain LM loop
//! (`trainlm`, alpha = 0, beta = 1) and the Bayesian-regularized loop
//! (`trainbr`) that re-estimates alpha and beta each epoch from the
//! Gauss-Newton Hessian at the accepted point.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{EpochRow, LmParams, StopReason, TrainingConfig, TrainingTrace};
use crate::bayes::{self, BayesState};
use crate::error::{Error, Result};
use crate::exec::Jobs;
use crate::network::Network;

/// Damping floor: keeps repeated mu decreases from underflowing to zero,
/// where the reject path (mu *= mu_inc) could never escape.
const MU_FLOOR: f64 = 1e-300;

/// Rejections tolerated within one epoch before signalling the mu stop.
const MAX_REJECTIONS: usize = 10;

/// Signed residuals (P - T) stacked in Jacobian row order: row i*m + j
/// holds output j of sample i.
pub fn residual_vector(predictions: &DMatrix<f64>, targets: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = (predictions.nrows(), predictions.ncols());
    let mut r = DVector::zeros(n * m);
    for i in 0..n {
        for j in 0..m {
            r[i * m + j] = predictions[(i, j)] - targets[(i, j)];
        }
    }
    r
}

/// Solve the damped Gauss-Newton system
///
///   (2*beta*J^T J + (2*alpha + mu)*I) delta = -(2*beta*J^T r + 2*alpha*w)
///
/// by Cholesky factorization. The right-hand side is the negative gradient
/// of F = beta*SSE + alpha*SSW, so mu -> infinity degenerates to a tiny
/// steepest-descent step.
pub fn lm_step(
    jac: &DMatrix<f64>,
    residuals: &DVector<f64>,
    w: &DVector<f64>,
    mu: f64,
    alpha: f64,
    beta: f64,
) -> Result<DVector<f64>> {
    if jac.nrows() != residuals.len() || jac.ncols() != w.len() {
        return Err(Error::shape(format!(
            "Jacobian {}x{} does not match {} residuals / {} parameters",
            jac.nrows(),
            jac.ncols(),
            residuals.len(),
            w.len()
        )));
    }
    if mu < 0.0 || mu.is_nan() {
        return Err(Error::invalid("mu must be >= 0"));
    }
    let k = jac.ncols();
    let mut a = jac.transpose() * jac;
    a *= 2.0 * beta;
    for i in 0..k {
        a[(i, i)] += 2.0 * alpha + mu;
    }
    let mut rhs = jac.transpose() * residuals;
    rhs *= -2.0 * beta;
    if alpha != 0.0 {
        rhs -= 2.0 * alpha * w;
    }
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::state("LM normal equations are not positive definite; increase mu")
    })?;
    Ok(chol.solve(&rhs))
}

/// Gradient of F = beta*SSE + alpha*SSW given the Jacobian and residuals at
/// the same point: 2*beta*J^T r + 2*alpha*w.
fn objective_gradient(
    jac: &DMatrix<f64>,
    residuals: &DVector<f64>,
    w: &DVector<f64>,
    alpha: f64,
    beta: f64,
) -> DVector<f64> {
    let mut g = jac.transpose() * residuals;
    g *= 2.0 * beta;
    if alpha != 0.0 {
        g += 2.0 * alpha * w;
    }
    g
}

/// Outcome of the within-epoch accept/reject loop.
struct InnerStep {
    accepted: bool,
    net: Network,
    sse: f64,
    ssw: f64,
    objective: f64,
    mu: f64,
}

/// Try damped steps, growing mu tenfold per rejection, until F decreases or
/// the rejection budget / mu ceiling is exhausted.
#[allow(clippy::too_many_arguments)]
fn lm_inner(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    jac: &DMatrix<f64>,
    f_current: f64,
    alpha: f64,
    beta: f64,
    mut mu: f64,
    lm: &LmParams,
    mu_max: f64,
) -> Result<InnerStep> {
    let w = net.flatten();
    let p = net.forward(inputs)?;
    let r = residual_vector(&p, targets);
    for _rejection in 0..MAX_REJECTIONS {
        if mu > mu_max {
            break;
        }
        let candidate = match lm_step(jac, &r, &w, mu, alpha, beta) {
            Ok(delta) => {
                let w_new = &w + delta;
                Network::from_params(net.layout().clone(), &w_new).ok()
            }
            Err(_) => None,
        };
        if let Some(net_new) = candidate {
            let p_new = net_new.forward(inputs)?;
            let sse = bayes::sse(&p_new, targets);
            let ssw = net_new.ssw();
            let f_new = beta * sse + alpha * ssw;
            if f_new.is_finite() && f_new < f_current {
                return Ok(InnerStep {
                    accepted: true,
                    net: net_new,
                    sse,
                    ssw,
                    objective: f_new,
                    mu: (mu / lm.mu_dec).max(MU_FLOOR),
                });
            }
        }
        mu *= lm.mu_inc;
    }
    Ok(InnerStep {
        accepted: false,
        net: net.clone(),
        sse: bayes::sse(&p, targets),
        ssw: net.ssw(),
        objective: f_current,
        mu,
    })
}

/// One `trainbr` epoch: an LM inner loop on F under the current (alpha,
/// beta), then evidence-framework re-estimation at the accepted point.
pub struct BrEpoch {
    pub net: Network,
    pub state: BayesState,
    pub mu: f64,
    /// False when the rejection budget was exhausted (mu stop signal).
    pub accepted: bool,
    /// F at the returned point under the hyperparameters the step used.
    pub objective: f64,
    /// F at the entry point under the same hyperparameters. Progress
    /// comparisons must use this pair: objectives from different epochs are
    /// rescaled by the hyperparameter updates and are not comparable.
    pub objective_start: f64,
    /// Norm of grad F at the returned point under the same hyperparameters.
    pub grad_norm: f64,
    /// Gaussian-approximation log evidence at the accepted point, when the
    /// Hessian probe succeeded and the pre-update alpha was positive.
    pub evidence: Option<f64>,
    pub notes: Vec<&'static str>,
}

pub fn trainbr_epoch(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    state: &BayesState,
    mu: f64,
    config: &TrainingConfig,
) -> Result<BrEpoch> {
    let jac = net.jacobian_with(Jobs::Serial, inputs)?;
    let (epoch, _) = trainbr_epoch_cached(net, inputs, targets, &jac, state, mu, config)?;
    Ok(epoch)
}

/// The epoch body with the entry-point Jacobian supplied by the caller; the
/// Jacobian at the accepted point is returned so a training loop computes
/// exactly one fresh Jacobian per epoch.
fn trainbr_epoch_cached(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    jac: &DMatrix<f64>,
    state: &BayesState,
    mu: f64,
    config: &TrainingConfig,
) -> Result<(BrEpoch, DMatrix<f64>)> {
    let k = net.param_count();
    let n_targets = inputs.nrows() * targets.ncols();
    let (alpha, beta) = (state.alpha, state.beta);

    let f_current = {
        let p = net.forward(inputs)?;
        beta * bayes::sse(&p, targets) + alpha * net.ssw()
    };
    let inner = lm_inner(
        net,
        inputs,
        targets,
        jac,
        f_current,
        alpha,
        beta,
        mu,
        &config.lm,
        config.stop.mu_max,
    )?;

    if !inner.accepted {
        let p = net.forward(inputs)?;
        let r = residual_vector(&p, targets);
        let grad_norm = objective_gradient(jac, &r, &net.flatten(), alpha, beta).norm();
        let epoch = BrEpoch {
            net: inner.net,
            state: *state,
            mu: inner.mu,
            accepted: false,
            objective: inner.objective,
            objective_start: f_current,
            grad_norm,
            evidence: None,
            notes: vec![],
        };
        return Ok((epoch, jac.clone()));
    }

    let jac_new = inner.net.jacobian_with(Jobs::Serial, inputs)?;
    let w_new = inner.net.flatten();
    let p_new = inner.net.forward(inputs)?;
    let r_new = residual_vector(&p_new, targets);
    let grad_norm = objective_gradient(&jac_new, &r_new, &w_new, alpha, beta).norm();

    let at_new_point = BayesState {
        alpha,
        beta,
        gamma: state.gamma,
        ssw: inner.ssw,
        sse: inner.sse,
    };
    let mut notes = Vec::new();
    let (next_state, evidence) =
        match bayes::probe_hessian(&bayes::gauss_newton_hessian(&jac_new, alpha, beta)) {
            Ok(probe) => {
                if probe.jittered {
                    notes.push("hessian jittered for trace-inverse");
                }
                let (next, update_notes) = bayes::update_hyperparameters(
                    &at_new_point,
                    probe.trace_inverse,
                    k,
                    n_targets,
                );
                notes.extend(update_notes);
                let evidence =
                    bayes::log_evidence_terms(&at_new_point, k, n_targets, probe.log_det).ok();
                (next, evidence)
            }
            Err(_) => {
                // Cannot re-estimate without the trace-inverse; keep the
                // current hyperparameters for another epoch.
                notes.push("hessian probe failed; hyperparameters held");
                (at_new_point, None)
            }
        };

    let epoch = BrEpoch {
        net: inner.net,
        state: next_state,
        mu: inner.mu,
        accepted: true,
        objective: inner.objective,
        objective_start: f_current,
        grad_norm,
        evidence,
        notes,
    };
    Ok((epoch, jac_new))
}

/// Bayesian-regularized training. Returns the last accepted network (the
/// objective is rescaled by each hyperparameter update, so "best epoch" has
/// no consistent meaning) and the full trace.
pub fn train_bayes(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    config: &TrainingConfig,
) -> Result<(Network, TrainingTrace)> {
    check_dims(net, inputs, targets)?;
    let mut current = net.clone();
    let mut state = BayesState::initial();
    let mut mu = config.lm.mu0;
    let mut jac = current.jacobian_with(Jobs::Serial, inputs)?;

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut evidence = Vec::new();
    let mut plateau_run = 0usize;
    let mut stop = None;

    for epoch in 1..=config.max_epochs {
        let (step, jac_new) =
            trainbr_epoch_cached(&current, inputs, targets, &jac, &state, mu, config)?;
        if !step.objective.is_finite() {
            return Err(Error::abort(format!(
                "trainbr objective became non-finite at epoch {epoch}"
            )));
        }
        for n in &step.notes {
            notes.push(format!("epoch {epoch}: {n}"));
        }
        evidence.push(step.evidence);
        rows.push(EpochRow {
            epoch,
            objective: step.objective,
            sse: step.state.sse,
            ssw: step.state.ssw,
            alpha: step.state.alpha,
            beta: step.state.beta,
            gamma: step.state.gamma,
            mu: step.mu,
            grad_norm: step.grad_norm,
        });

        if !step.accepted {
            notes.push(format!(
                "epoch {epoch}: {MAX_REJECTIONS} consecutive step rejections"
            ));
            stop = Some(StopReason::MuMax);
        } else if step.grad_norm < config.stop.grad_tol {
            stop = Some(StopReason::GradTol);
        } else {
            // Plateau must be judged within the epoch (start vs end of the
            // same F): the hyperparameter update rescales the objective, so
            // cross-epoch values are not comparable. The within-epoch gain
            // only stalls once weights AND hyperparameters have settled.
            let rel = (step.objective_start - step.objective)
                / step.objective_start.abs().max(f64::MIN_POSITIVE);
            if rel < config.stop.plateau_rel_tol {
                plateau_run += 1;
            } else {
                plateau_run = 0;
            }
            if plateau_run >= config.stop.plateau_epochs {
                stop = Some(StopReason::Plateau);
            }
            if stop.is_none() && step.mu > config.stop.mu_max {
                stop = Some(StopReason::MuMax);
            }
        }

        current = step.net;
        state = step.state;
        mu = step.mu;
        jac = jac_new;
        if stop.is_some() {
            break;
        }
    }

    let trace = TrainingTrace {
        rows,
        stop_reason: stop.unwrap_or(StopReason::MaxEpochs),
        notes,
        evidence,
    };
    Ok((current, trace))
}

/// Plain Levenberg-Marquardt on SSE (alpha = 0, beta = 1). Returns the
/// best-SSE network, which under the acceptance rule is also the last
/// accepted one.
pub fn train_lm(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    config: &TrainingConfig,
) -> Result<(Network, TrainingTrace)> {
    check_dims(net, inputs, targets)?;
    let mut current = net.clone();
    let mut mu = config.lm.mu0;
    let mut jac = current.jacobian_with(Jobs::Serial, inputs)?;
    let mut f = {
        let p = current.forward(inputs)?;
        bayes::sse(&p, targets)
    };
    let mut best = (f, current.clone());

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut plateau_run = 0usize;
    let mut stop = None;

    for epoch in 1..=config.max_epochs {
        let inner = lm_inner(
            &current,
            inputs,
            targets,
            &jac,
            f,
            0.0,
            1.0,
            mu,
            &config.lm,
            config.stop.mu_max,
        )?;
        if !inner.objective.is_finite() {
            return Err(Error::abort(format!(
                "trainlm objective became non-finite at epoch {epoch}"
            )));
        }
        let f_prev = f;
        let (grad_norm, jac_new) = if inner.accepted {
            let jac_new = inner.net.jacobian_with(Jobs::Serial, inputs)?;
            let p = inner.net.forward(inputs)?;
            let r = residual_vector(&p, targets);
            let g = objective_gradient(&jac_new, &r, &inner.net.flatten(), 0.0, 1.0);
            (g.norm(), jac_new)
        } else {
            let p = current.forward(inputs)?;
            let r = residual_vector(&p, targets);
            let g = objective_gradient(&jac, &r, &current.flatten(), 0.0, 1.0);
            (g.norm(), jac.clone())
        };
        rows.push(EpochRow {
            epoch,
            objective: inner.objective,
            sse: inner.sse,
            ssw: inner.ssw,
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            mu: inner.mu,
            grad_norm,
        });

        if !inner.accepted {
            notes.push(format!(
                "epoch {epoch}: {MAX_REJECTIONS} consecutive step rejections"
            ));
            stop = Some(StopReason::MuMax);
        } else if grad_norm < config.stop.grad_tol {
            stop = Some(StopReason::GradTol);
        } else {
            let rel = (f_prev - inner.objective) / f_prev.abs().max(f64::MIN_POSITIVE);
            if rel < config.stop.plateau_rel_tol {
                plateau_run += 1;
            } else {
                plateau_run = 0;
            }
            if plateau_run >= config.stop.plateau_epochs {
                stop = Some(StopReason::Plateau);
            }
            if stop.is_none() && inner.mu > config.stop.mu_max {
                stop = Some(StopReason::MuMax);
            }
        }

        f = inner.objective;
        current = inner.net;
        mu = inner.mu;
        jac = jac_new;
        if f < best.0 {
            best = (f, current.clone());
        }
        if stop.is_some() {
            break;
        }
    }

    let n_rows = rows.len();
    let trace = TrainingTrace {
        rows,
        stop_reason: stop.unwrap_or(StopReason::MaxEpochs),
        notes,
        evidence: vec![None; n_rows],
    };
    Ok((best.1, trace))
}

fn check_dims(net: &Network, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
    if inputs.ncols() != net.layout().input_dim()
        || targets.ncols() != net.layout().output_dim()
        || targets.nrows() != inputs.nrows()
    {
        return Err(Error::shape(format!(
            "dataset {}x{} -> {}x{} does not match network {} -> {}",
            inputs.nrows(),
            inputs.ncols(),
            targets.nrows(),
            targets.ncols(),
            net.layout().input_dim(),
            net.layout().output_dim()
        )));
    }
    Ok(())
}
