//! Bayesian regularization: the objective F = beta*SSE + alpha*SSW and the
//! evidence-framework re-estimation of alpha and beta from the Gauss-Newton
//! Hessian. The effective parameter count gamma measures how many of the k
//! network parameters the data actually constrains.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::network::Network;

/// Lower clamp for the re-estimated hyperparameters. Keeps both strictly
/// positive without influencing any realistic update.
pub const ALPHA_MIN: f64 = 1e-20;
pub const BETA_MIN: f64 = 1e-20;

/// Regularization hyperparameters plus the loss terms they weight.
///
/// `ssw` and `sse` are the sums at the current weight point; `gamma` is the
/// effective number of parameters from the most recent update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub ssw: f64,
    pub sse: f64,
}

impl BayesState {
    /// Epoch-0 state: no weight penalty, unit error weight.
    pub fn initial() -> Self {
        BayesState {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            ssw: 0.0,
            sse: 0.0,
        }
    }

    /// F = beta*SSE + alpha*SSW at the stored sums.
    pub fn objective(&self) -> f64 {
        self.beta * self.sse + self.alpha * self.ssw
    }
}

/// Sum of squared residuals between predictions and targets.
pub fn sse(predictions: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    (predictions - targets).iter().map(|e| e * e).sum()
}

/// F = beta*SSE + alpha*SSW for a network on a dataset. SSW sums over all k
/// parameters, biases included.
pub fn regularized_loss(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    state: &BayesState,
) -> Result<f64> {
    if targets.nrows() != inputs.nrows() || targets.ncols() != net.layout().output_dim() {
        return Err(Error::shape(format!(
            "targets are {}x{}, expected {}x{}",
            targets.nrows(),
            targets.ncols(),
            inputs.nrows(),
            net.layout().output_dim()
        )));
    }
    let p = net.forward(inputs)?;
    Ok(state.beta * sse(&p, targets) + state.alpha * net.ssw())
}

/// Gauss-Newton approximation H = 2*beta*J^T J + 2*alpha*I.
pub fn gauss_newton_hessian(jac: &DMatrix<f64>, alpha: f64, beta: f64) -> DMatrix<f64> {
    let k = jac.ncols();
    let mut h = jac.transpose() * jac;
    h *= 2.0 * beta;
    for i in 0..k {
        h[(i, i)] += 2.0 * alpha;
    }
    h
}

/// tr(H^-1) and ln det H from one Cholesky factorization.
#[derive(Debug, Clone, Copy)]
pub struct HessianProbe {
    pub trace_inverse: f64,
    pub log_det: f64,
    /// True when the factorization only succeeded after adding jitter.
    pub jittered: bool,
}

/// Factor a symmetric Hessian approximation. A numerically singular matrix
/// gets one retry with 1e-10*I jitter; failure after that is an error.
pub fn probe_hessian(h: &DMatrix<f64>) -> Result<HessianProbe> {
    if let Some((trace_inverse, log_det)) = cholesky_probe(h.clone()) {
        return Ok(HessianProbe {
            trace_inverse,
            log_det,
            jittered: false,
        });
    }
    let mut jittered = h.clone();
    for i in 0..h.nrows() {
        jittered[(i, i)] += 1e-10;
    }
    match cholesky_probe(jittered) {
        Some((trace_inverse, log_det)) => Ok(HessianProbe {
            trace_inverse,
            log_det,
            jittered: true,
        }),
        None => Err(Error::state(
            "Hessian approximation is not positive definite even after jitter",
        )),
    }
}

fn cholesky_probe(h: DMatrix<f64>) -> Option<(f64, f64)> {
    let chol = Cholesky::new(h)?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let trace_inverse = chol.inverse().trace();
    if trace_inverse.is_finite() && log_det.is_finite() {
        Some((trace_inverse, log_det))
    } else {
        None
    }
}

/// Evidence-framework re-estimation at the current weight point:
///
///   gamma' = k - 2*alpha*tr(H^-1)        (clamped to [0, k])
///   alpha' = gamma' / (2*SSW)
///   beta'  = (n_targets - gamma') / (2*SSE)
///
/// `state` must carry SSE and SSW evaluated at the new weights; `alpha` and
/// `beta` are the values H was built with. Degenerate cases (zero sums, or
/// gamma at or above n_targets so the beta numerator is non-positive) hold or
/// clamp instead of producing a non-positive hyperparameter; every such path
/// is reported as a note so traces can flag the epoch.
pub fn update_hyperparameters(
    state: &BayesState,
    hessian_trace_inverse: f64,
    k: usize,
    n_targets: usize,
) -> (BayesState, Vec<&'static str>) {
    let mut notes = Vec::new();
    let kf = k as f64;

    let gamma_raw = kf - 2.0 * state.alpha * hessian_trace_inverse;
    let gamma = gamma_raw.clamp(0.0, kf);
    if gamma != gamma_raw {
        notes.push("gamma clamped to [0, k]");
    }

    let alpha = if state.ssw > 0.0 {
        let a = gamma / (2.0 * state.ssw);
        if a < ALPHA_MIN {
            notes.push("alpha clamped to minimum");
        }
        a.max(ALPHA_MIN)
    } else {
        notes.push("alpha clamped: SSW is zero");
        ALPHA_MIN
    };

    let beta = if state.sse <= 0.0 {
        // A zero-residual fit gives no information about the noise level;
        // keep the previous value rather than dividing by zero.
        notes.push("beta held: SSE is zero");
        state.beta.max(BETA_MIN)
    } else if n_targets as f64 - gamma <= 0.0 {
        // gamma consumed every residual degree of freedom, so the formula
        // has no noise estimate left. This always happens on the first
        // update of an oversized net (alpha = 0 forces gamma = k > n);
        // driving beta to its floor there would turn the next epoch into
        // pure weight decay and crush the network, so hold instead.
        notes.push("beta held: no residual degrees of freedom");
        state.beta.max(BETA_MIN)
    } else {
        let b = (n_targets as f64 - gamma) / (2.0 * state.sse);
        if b < BETA_MIN {
            notes.push("beta clamped to minimum");
        }
        b.max(BETA_MIN)
    };

    (
        BayesState {
            alpha,
            beta,
            gamma,
            ssw: state.ssw,
            sse: state.sse,
        },
        notes,
    )
}

/// Gaussian-approximation log evidence ln P(D | alpha, beta, M):
///
///   -F + (k*ln 2pi - ln det H)/2 + (n/2)*ln beta + (k/2)*ln alpha
///      - ((n+k)/2)*ln pi
///
/// Diagnostic only; never used for control flow. The caller supplies
/// `log_det_h` from [`probe_hessian`] so a non-positive-definite Hessian
/// surfaces there as a missing value rather than here.
pub fn log_evidence_terms(
    state: &BayesState,
    k: usize,
    n_targets: usize,
    log_det_h: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("log evidence undefined for k = 0 parameters"));
    }
    if state.alpha <= 0.0 || state.beta <= 0.0 {
        return Err(Error::invalid(
            "log evidence requires strictly positive alpha and beta",
        ));
    }
    let kf = k as f64;
    let nf = n_targets as f64;
    let f = state.objective();
    Ok(-f + 0.5 * (kf * (2.0 * std::f64::consts::PI).ln() - log_det_h)
        + 0.5 * nf * state.beta.ln()
        + 0.5 * kf * state.alpha.ln()
        - 0.5 * (nf + kf) * std::f64::consts::PI.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkLayout, TransferKind};
    use nalgebra::DVector;

    fn affine_net(w: &[f64], b: f64) -> Network {
        let layout =
            NetworkLayout::new(vec![w.len(), 1], vec![TransferKind::Purelin]).unwrap();
        Network::new(
            layout,
            vec![DMatrix::from_row_slice(1, w.len(), w)],
            vec![DVector::from_vec(vec![b])],
        )
        .unwrap()
    }

    #[test]
    fn loss_zero_weight_net_on_zero_targets() {
        let net = affine_net(&[0.0], 0.0);
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DMatrix::zeros(3, 1);
        let state = BayesState {
            alpha: 0.5,
            beta: 2.0,
            ..BayesState::initial()
        };
        assert_eq!(regularized_loss(&net, &x, &y, &state).unwrap(), 0.0);
    }

    #[test]
    fn loss_alpha_zero_is_scaled_sse() {
        let net = affine_net(&[1.0], 0.0);
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        // SSE = 1 + 4 = 5.
        let state = BayesState {
            alpha: 0.0,
            beta: 3.0,
            ..BayesState::initial()
        };
        assert_eq!(regularized_loss(&net, &x, &y, &state).unwrap(), 15.0);
    }

    #[test]
    fn loss_hand_value() {
        // Weights [1, 2] with zero bias: SSW = 5. Input [1, 1] predicts 3
        // against target 2: SSE = 1. F = 2*1 + 0.5*5 = 4.5.
        let net = affine_net(&[1.0, 2.0], 0.0);
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y = DMatrix::from_row_slice(1, 1, &[2.0]);
        let state = BayesState {
            alpha: 0.5,
            beta: 2.0,
            ..BayesState::initial()
        };
        assert_eq!(regularized_loss(&net, &x, &y, &state).unwrap(), 4.5);
    }

    #[test]
    fn loss_shape_error() {
        let net = affine_net(&[1.0], 0.0);
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 0.0]);
        assert!(regularized_loss(&net, &x, &y, &BayesState::initial()).is_err());
    }

    #[test]
    fn update_hand_value() {
        let state = BayesState {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            ssw: 1.0,
            sse: 1.0,
        };
        let (next, notes) = update_hyperparameters(&state, 0.25, 2, 10);
        assert!(notes.is_empty());
        assert_eq!(next.gamma, 1.5);
        assert_eq!(next.alpha, 0.75);
        assert_eq!(next.beta, 4.25);
    }

    #[test]
    fn update_alpha_zero_gives_gamma_k() {
        let state = BayesState {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            ssw: 2.0,
            sse: 3.0,
        };
        let (next, _) = update_hyperparameters(&state, 123.0, 7, 20);
        assert_eq!(next.gamma, 7.0);
    }

    #[test]
    fn update_clamps_gamma_and_hyperparameters() {
        // 2*alpha*tr = 20 > k = 2 would push gamma below zero.
        let state = BayesState {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            ssw: 1.0,
            sse: 1.0,
        };
        let (next, notes) = update_hyperparameters(&state, 10.0, 2, 10);
        assert_eq!(next.gamma, 0.0);
        assert_eq!(next.alpha, ALPHA_MIN);
        assert!(notes.contains(&"gamma clamped to [0, k]"));
    }

    #[test]
    fn update_degenerate_sums_take_clamp_paths() {
        let state = BayesState {
            alpha: 0.5,
            beta: 7.0,
            gamma: 0.0,
            ssw: 0.0,
            sse: 0.0,
        };
        let (next, notes) = update_hyperparameters(&state, 0.1, 3, 10);
        assert_eq!(next.alpha, ALPHA_MIN);
        assert_eq!(next.beta, 7.0);
        assert!(notes.contains(&"alpha clamped: SSW is zero"));
        assert!(notes.contains(&"beta held: SSE is zero"));
    }

    #[test]
    fn update_holds_beta_when_gamma_reaches_target_count() {
        // k = 5 parameters but only 3 targets: the first update (alpha = 0)
        // yields gamma = 5 > 3, so the beta formula would go negative.
        let state = BayesState {
            alpha: 0.0,
            beta: 2.5,
            gamma: 0.0,
            ssw: 1.0,
            sse: 1.0,
        };
        let (next, notes) = update_hyperparameters(&state, 100.0, 5, 3);
        assert_eq!(next.gamma, 5.0);
        assert_eq!(next.beta, 2.5);
        assert!(notes.contains(&"beta held: no residual degrees of freedom"));
    }

    #[test]
    fn update_invariants_on_random_states(// gamma in [0,k], alpha/beta above their clamps
    ) {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let k = rng.random_range(1..50usize);
            let state = BayesState {
                alpha: rng.random_range(0.0..10.0),
                beta: rng.random_range(1e-6..10.0),
                gamma: 0.0,
                ssw: rng.random_range(0.0..5.0),
                sse: rng.random_range(0.0..5.0),
            };
            let tr = rng.random_range(0.0..20.0);
            let n = rng.random_range(1..100usize);
            let (next, _) = update_hyperparameters(&state, tr, k, n);
            assert!(next.gamma >= 0.0 && next.gamma <= k as f64);
            assert!(next.alpha >= ALPHA_MIN);
            assert!(next.beta >= BETA_MIN);
        }
    }

    #[test]
    fn hessian_assembly_hand_value() {
        let jac = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        // J^T J = [[10, 14], [14, 20]]; H = 2*0.5*J^T J + 2*1*I.
        let h = gauss_newton_hessian(&jac, 1.0, 0.5);
        let expected = DMatrix::from_row_slice(2, 2, &[12.0, 14.0, 14.0, 22.0]);
        assert_eq!(h, expected);
    }

    #[test]
    fn probe_diagonal_hessian() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let probe = probe_hessian(&h).unwrap();
        assert!((probe.trace_inverse - 0.75).abs() < 1e-14);
        assert!((probe.log_det - 8.0f64.ln()).abs() < 1e-12);
        assert!(!probe.jittered);
    }

    #[test]
    fn probe_singular_hessian_uses_jitter_once() {
        let h = DMatrix::zeros(3, 3);
        let probe = probe_hessian(&h).unwrap();
        assert!(probe.jittered);
        assert!((probe.trace_inverse - 3.0e10).abs() / 3.0e10 < 1e-9);
    }

    #[test]
    fn probe_indefinite_hessian_fails() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(probe_hessian(&h).is_err());
    }

    #[test]
    fn evidence_is_pure_and_matches_hand_arithmetic() {
        let state = BayesState {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            ssw: 0.04,
            sse: 0.25,
        };
        // k=1, n=1, F=0.29, ln det H = ln 4:
        // -0.29 + (ln 2pi - ln 4)/2 + 0 + 0 - ln pi.
        let expected = -0.29 + 0.5 * ((2.0 * std::f64::consts::PI).ln() - 4.0f64.ln())
            - std::f64::consts::PI.ln();
        let a = log_evidence_terms(&state, 1, 1, 4.0f64.ln()).unwrap();
        let b = log_evidence_terms(&state, 1, 1, 4.0f64.ln()).unwrap();
        assert_eq!(a, b);
        assert!((a - expected).abs() < 1e-12);
    }

    #[test]
    fn evidence_rejects_degenerate_inputs() {
        let state = BayesState {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            ssw: 1.0,
            sse: 1.0,
        };
        assert!(log_evidence_terms(&state, 0, 5, 0.0).is_err());
        let zero_alpha = BayesState {
            alpha: 0.0,
            ..state
        };
        assert!(log_evidence_terms(&zero_alpha, 3, 5, 0.0).is_err());
    }
}
