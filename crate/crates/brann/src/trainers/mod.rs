//! The eleven training algorithms as interchangeable strategies over a
//! shared epoch loop with common stopping rules and trace recording.
//!
//! `trainbr` and `trainlm` get a dedicated Levenberg-Marquardt loop (module
//! [`lm`]); everything else minimizes MSE through the [`Strategy`] interface
//! so the same loop drives momentum descent, Rprop, the conjugate-gradient
//! family, SCG and BFGS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Network;

pub mod bfgs;
pub mod conjugate;
pub mod first_order;
pub mod line_search;
pub mod lm;
pub mod objective;

pub use line_search::LineSearchParams;
pub use objective::{MseObjective, Objective};

/// The eleven selectable training algorithms, tagged by their conventional
/// names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Trainbr,
    Traingdm,
    Traingda,
    Traingdx,
    Trainlm,
    Trainrp,
    Traincgf,
    Traincgb,
    Trainscg,
    Traincgp,
    Trainbfg,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 11] = [
        AlgorithmKind::Trainbr,
        AlgorithmKind::Traingdm,
        AlgorithmKind::Traingda,
        AlgorithmKind::Traingdx,
        AlgorithmKind::Trainlm,
        AlgorithmKind::Trainrp,
        AlgorithmKind::Traincgf,
        AlgorithmKind::Traincgb,
        AlgorithmKind::Trainscg,
        AlgorithmKind::Traincgp,
        AlgorithmKind::Trainbfg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Trainbr => "trainbr",
            AlgorithmKind::Traingdm => "traingdm",
            AlgorithmKind::Traingda => "traingda",
            AlgorithmKind::Traingdx => "traingdx",
            AlgorithmKind::Trainlm => "trainlm",
            AlgorithmKind::Trainrp => "trainrp",
            AlgorithmKind::Traincgf => "traincgf",
            AlgorithmKind::Traincgb => "traincgb",
            AlgorithmKind::Trainscg => "trainscg",
            AlgorithmKind::Traincgp => "traincgp",
            AlgorithmKind::Trainbfg => "trainbfg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown training algorithm `{s}`")))
    }

    /// Levenberg-Marquardt family (drives the mu schedule and mu stopping).
    pub fn is_lm_family(self) -> bool {
        matches!(self, AlgorithmKind::Trainbr | AlgorithmKind::Trainlm)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Early-stopping thresholds shared by every algorithm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingRule {
    /// Stop when the objective gradient norm falls below this.
    pub grad_tol: f64,
    /// LM family only: stop when mu exceeds this (the damped step has
    /// degenerated to an infinitesimal gradient step).
    pub mu_max: f64,
    /// Plateau: this many consecutive epochs with relative improvement
    /// below `plateau_rel_tol`.
    pub plateau_epochs: usize,
    pub plateau_rel_tol: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            grad_tol: 1e-7,
            mu_max: 1e10,
            plateau_epochs: 5,
            plateau_rel_tol: 1e-6,
        }
    }
}

/// Momentum / adaptive-rate gradient descent parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FirstOrderParams {
    pub learning_rate: f64,
    pub momentum: f64,
    /// traingda/traingdx rate adaptation.
    pub lr_inc: f64,
    pub lr_dec: f64,
    /// Reject a step when the objective grows by more than this factor.
    pub max_perf_inc: f64,
}

impl Default for FirstOrderParams {
    fn default() -> Self {
        FirstOrderParams {
            learning_rate: 0.01,
            momentum: 0.9,
            lr_inc: 1.05,
            lr_dec: 0.7,
            max_perf_inc: 1.04,
        }
    }
}

/// Rprop step-size schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RpropParams {
    pub delta0: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        RpropParams {
            delta0: 0.07,
            delta_min: 1e-6,
            delta_max: 50.0,
            eta_plus: 1.2,
            eta_minus: 0.5,
        }
    }
}

/// Levenberg-Marquardt damping schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LmParams {
    pub mu0: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            mu0: 0.005,
            mu_inc: 10.0,
            mu_dec: 10.0,
        }
    }
}

/// Scaled conjugate gradient constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ScgParams {
    pub sigma0: f64,
    pub lambda0: f64,
}

impl Default for ScgParams {
    fn default() -> Self {
        ScgParams {
            sigma0: 5e-5,
            lambda0: 5e-7,
        }
    }
}

/// Everything a training run needs besides the starting network and data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub algorithm: AlgorithmKind,
    pub max_epochs: usize,
    pub seed: u64,
    pub stop: StoppingRule,
    pub first_order: FirstOrderParams,
    pub rprop: RpropParams,
    pub lm: LmParams,
    pub scg: ScgParams,
    pub line_search: LineSearchParams,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            algorithm: AlgorithmKind::Trainbr,
            max_epochs: 1000,
            seed: 0,
            stop: StoppingRule::default(),
            first_order: FirstOrderParams::default(),
            rprop: RpropParams::default(),
            lm: LmParams::default(),
            scg: ScgParams::default(),
            line_search: LineSearchParams::default(),
        }
    }
}

impl TrainingConfig {
    pub fn for_algorithm(algorithm: AlgorithmKind) -> Self {
        TrainingConfig {
            algorithm,
            ..TrainingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(Error::invalid("max_epochs must be >= 1"));
        }
        let positive = [
            ("grad_tol", self.stop.grad_tol),
            ("mu_max", self.stop.mu_max),
            ("plateau_rel_tol", self.stop.plateau_rel_tol),
            ("learning_rate", self.first_order.learning_rate),
            ("lr_inc", self.first_order.lr_inc),
            ("lr_dec", self.first_order.lr_dec),
            ("max_perf_inc", self.first_order.max_perf_inc),
            ("delta0", self.rprop.delta0),
            ("delta_min", self.rprop.delta_min),
            ("delta_max", self.rprop.delta_max),
            ("eta_plus", self.rprop.eta_plus),
            ("eta_minus", self.rprop.eta_minus),
            ("mu0", self.lm.mu0),
            ("mu_inc", self.lm.mu_inc),
            ("mu_dec", self.lm.mu_dec),
            ("sigma0", self.scg.sigma0),
            ("lambda0", self.scg.lambda0),
            ("c1", self.line_search.c1),
            ("c2", self.line_search.c2),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.stop.plateau_epochs == 0 {
            return Err(Error::invalid("plateau_epochs must be >= 1"));
        }
        if self.first_order.momentum < 0.0 || self.first_order.momentum >= 1.0 {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    GradTol,
    MuMax,
    Plateau,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::GradTol => "grad_tol",
            StopReason::MuMax => "mu_max",
            StopReason::Plateau => "plateau",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One trace row. `alpha`, `beta`, `gamma` are Bayesian-regularization
/// quantities and stay at their fixed placeholders (0, 1, 0) for the other
/// algorithms; `mu` is 0 outside the LM family.
#[derive(Debug, Clone, Copy)]
pub struct EpochRow {
    pub epoch: usize,
    pub objective: f64,
    pub sse: f64,
    pub ssw: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub grad_norm: f64,
}

/// Complete record of a training run.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    pub rows: Vec<EpochRow>,
    pub stop_reason: StopReason,
    /// Free-form per-epoch events: line-search fallbacks, clamped
    /// hyperparameter updates, skipped curvature updates.
    pub notes: Vec<String>,
    /// Log evidence per epoch where defined (trainbr only; `None` marks a
    /// non-positive-definite Hessian or pre-update epochs).
    pub evidence: Vec<Option<f64>>,
}

pub const TRACE_HEADER: &str = "epoch,objective,sse,ssw,alpha,beta,gamma,mu,grad_norm";

impl TrainingTrace {
    /// Render the fixed-header CSV. Floats use the shortest round-trip
    /// decimal form, so equal runs produce byte-identical files.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch, r.objective, r.sse, r.ssw, r.alpha, r.beta, r.gamma, r.mu, r.grad_norm
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Sidecar text: stop reason, a caller-supplied config echo, notes and
    /// the evidence diagnostic.
    pub fn sidecar_string(&self, config_echo: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("stop_reason = {}\n", self.stop_reason));
        out.push_str(&format!("epochs = {}\n", self.rows.len()));
        if let Some(last) = self.rows.last() {
            out.push_str(&format!("final_objective = {}\n", last.objective));
        }
        if let Some(ev) = self.evidence.iter().rev().find_map(|e| *e) {
            out.push_str(&format!("final_log_evidence = {ev}\n"));
        }
        out.push_str("\n[config]\n");
        out.push_str(config_echo);
        if !config_echo.ends_with('\n') {
            out.push('\n');
        }
        if !self.notes.is_empty() {
            out.push_str("\n[notes]\n");
            for n in &self.notes {
                out.push_str(n);
                out.push('\n');
            }
        }
        out
    }

    pub fn write_sidecar(&self, path: &Path, config_echo: &str) -> Result<()> {
        std::fs::write(path, self.sidecar_string(config_echo))?;
        Ok(())
    }
}

/// What a strategy did with one epoch.
pub(crate) struct StepOutcome {
    pub w: DVector<f64>,
    /// (value, gradient) at `w` when the strategy already evaluated them.
    pub cached: Option<(f64, DVector<f64>)>,
    pub note: Option<String>,
}

/// One optimizer epoch: propose the next parameter vector from the current
/// point, value and gradient. Implementations own their internal state.
pub(crate) trait Strategy {
    fn step(
        &mut self,
        obj: &dyn Objective,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> StepOutcome;
}

fn build_strategy(config: &TrainingConfig, dim: usize) -> Result<Box<dyn Strategy>> {
    Ok(match config.algorithm {
        AlgorithmKind::Traingdm => Box::new(first_order::Gdm::new(&config.first_order, dim)),
        AlgorithmKind::Traingda => Box::new(first_order::Gda::new(&config.first_order)),
        AlgorithmKind::Traingdx => Box::new(first_order::Gdx::new(&config.first_order, dim)),
        AlgorithmKind::Trainrp => Box::new(first_order::Rprop::new(&config.rprop, dim)),
        AlgorithmKind::Traincgf => Box::new(conjugate::Cg::new(
            conjugate::CgVariant::FletcherReeves,
            config.line_search,
            dim,
        )),
        AlgorithmKind::Traincgb => Box::new(conjugate::Cg::new(
            conjugate::CgVariant::PowellBeale,
            config.line_search,
            dim,
        )),
        AlgorithmKind::Traincgp => Box::new(conjugate::Cg::new(
            conjugate::CgVariant::PolakRibiere,
            config.line_search,
            dim,
        )),
        AlgorithmKind::Trainscg => Box::new(conjugate::Scg::new(&config.scg, dim)),
        AlgorithmKind::Trainbfg => Box::new(bfgs::Bfgs::new(config.line_search, dim)),
        AlgorithmKind::Trainbr | AlgorithmKind::Trainlm => {
            return Err(Error::state("LM-family algorithms use the dedicated loop"))
        }
    })
}

/// Train a network. Returns the best network encountered (for `trainbr`,
/// the last accepted state — its objective is rescaled by every
/// hyperparameter update, so cross-epoch comparison is meaningless) and the
/// full trace. Deterministic for a fixed starting network and config.
pub fn train(
    net: &Network,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    config: &TrainingConfig,
) -> Result<(Network, TrainingTrace)> {
    config.validate()?;
    if inputs.nrows() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    match config.algorithm {
        AlgorithmKind::Trainbr => lm::train_bayes(net, inputs, targets, config),
        AlgorithmKind::Trainlm => lm::train_lm(net, inputs, targets, config),
        _ => {
            let obj = MseObjective::new(net.layout().clone(), inputs.clone(), targets.clone())?;
            let strategy = build_strategy(config, net.param_count())?;
            let (w, trace) = run_strategy(&obj, net.flatten(), config, strategy)?;
            Ok((net.with_params(&w)?, trace))
        }
    }
}

/// The generic epoch loop: step, record, check stopping rules, track the
/// best objective seen. Exposed within the crate so tests can drive
/// strategies with synthetic objectives.
pub(crate) fn run_strategy(
    obj: &dyn Objective,
    w0: DVector<f64>,
    config: &TrainingConfig,
    mut strategy: Box<dyn Strategy>,
) -> Result<(DVector<f64>, TrainingTrace)> {
    let mut w = w0;
    let (mut f, mut g) = obj.value_grad(&w);
    if !f.is_finite() {
        return Err(Error::abort(format!(
            "objective is non-finite at the starting point ({f})"
        )));
    }
    let mut best_f = f;
    let mut best_w = w.clone();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut plateau_run = 0usize;
    let mut stop = None;

    for epoch in 1..=config.max_epochs {
        let out = strategy.step(obj, &w, f, &g);
        if let Some(note) = out.note {
            notes.push(format!("epoch {epoch}: {note}"));
        }
        let f_prev = f;
        w = out.w;
        match out.cached {
            Some((cf, cg)) => {
                f = cf;
                g = cg;
            }
            None => {
                let (nf, ng) = obj.value_grad(&w);
                f = nf;
                g = ng;
            }
        }
        if !f.is_finite() {
            return Err(Error::abort(format!(
                "objective became non-finite at epoch {epoch} (last finite value {f_prev})"
            )));
        }
        let grad_norm = g.norm();
        let (sse, ssw) = obj.trace_sums(&w, f);
        rows.push(EpochRow {
            epoch,
            objective: f,
            sse,
            ssw,
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
            mu: 0.0,
            grad_norm,
        });

        if f < best_f {
            best_f = f;
            best_w = w.clone();
        }

        if grad_norm < config.stop.grad_tol {
            stop = Some(StopReason::GradTol);
        } else {
            let rel = (f_prev - f) / f_prev.abs().max(f64::MIN_POSITIVE);
            if rel < config.stop.plateau_rel_tol {
                plateau_run += 1;
            } else {
                plateau_run = 0;
            }
            if plateau_run >= config.stop.plateau_epochs {
                stop = Some(StopReason::Plateau);
            }
        }
        if stop.is_some() {
            break;
        }
    }

    let trace = TrainingTrace {
        evidence: vec![None; rows.len()],
        rows,
        stop_reason: stop.unwrap_or(StopReason::MaxEpochs),
        notes,
    };
    Ok((best_w, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_weights, NetworkLayout, TransferKind};

    fn sine_data(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        crate::synthetic::noisy_sine(n, seed)
    }

    #[test]
    fn algorithm_names_round_trip() {
        for kind in AlgorithmKind::ALL {
            assert_eq!(AlgorithmKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(AlgorithmKind::parse("trainml").is_err());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let c = TrainingConfig {
            max_epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::default();
        c.first_order.learning_rate = -1.0;
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::default();
        c.stop.plateau_epochs = 0;
        assert!(c.validate().is_err());
        assert!(TrainingConfig::default().validate().is_ok());
    }

    #[test]
    fn single_epoch_trace_has_one_row() {
        let (x, y) = sine_data(20, 1);
        let layout = NetworkLayout::regression(1, &[4], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 1);
        for kind in AlgorithmKind::ALL {
            let mut config = TrainingConfig::for_algorithm(kind);
            config.max_epochs = 1;
            let (_, trace) = train(&net, &x, &y, &config).unwrap();
            assert_eq!(trace.rows.len(), 1, "{kind}");
            assert_eq!(trace.rows[0].epoch, 1);
        }
    }

    #[test]
    fn all_algorithms_are_bitwise_deterministic() {
        let (x, y) = sine_data(24, 5);
        let layout = NetworkLayout::regression(1, &[6], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 5);
        for kind in AlgorithmKind::ALL {
            let mut config = TrainingConfig::for_algorithm(kind);
            config.max_epochs = 30;
            let (net_a, trace_a) = train(&net, &x, &y, &config).unwrap();
            let (net_b, trace_b) = train(&net, &x, &y, &config).unwrap();
            assert_eq!(net_a.flatten(), net_b.flatten(), "{kind}");
            assert_eq!(
                trace_a.to_csv_string(),
                trace_b.to_csv_string(),
                "{kind} trace differs"
            );
        }
    }

    #[test]
    fn trace_rows_strictly_increasing_and_finite() {
        let (x, y) = sine_data(24, 9);
        let layout = NetworkLayout::regression(1, &[6], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 9);
        for kind in AlgorithmKind::ALL {
            let mut config = TrainingConfig::for_algorithm(kind);
            config.max_epochs = 40;
            let (_, trace) = train(&net, &x, &y, &config).unwrap();
            for (i, row) in trace.rows.iter().enumerate() {
                assert_eq!(row.epoch, i + 1, "{kind}");
                assert!(row.objective.is_finite(), "{kind}");
            }
        }
    }

    #[test]
    fn plateau_stop_fires_on_stalled_descent() {
        // A learning rate this small makes every relative improvement
        // negligible while the gradient norm stays around 1.
        let (x, y) = sine_data(20, 3);
        let layout = NetworkLayout::regression(1, &[4], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 3);
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Traingdm);
        config.first_order.learning_rate = 1e-14;
        config.first_order.momentum = 0.0;
        let (_, trace) = train(&net, &x, &y, &config).unwrap();
        assert_eq!(trace.stop_reason, StopReason::Plateau);
        assert_eq!(trace.rows.len(), config.stop.plateau_epochs);
    }

    #[test]
    fn max_epochs_stop_reports_reason() {
        let (x, y) = sine_data(20, 4);
        let layout = NetworkLayout::regression(1, &[4], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 4);
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Traingdm);
        config.max_epochs = 3;
        let (_, trace) = train(&net, &x, &y, &config).unwrap();
        assert_eq!(trace.stop_reason, StopReason::MaxEpochs);
        assert_eq!(trace.rows.len(), 3);
    }

    #[test]
    fn trace_csv_has_fixed_header() {
        let trace = TrainingTrace {
            rows: vec![EpochRow {
                epoch: 1,
                objective: 0.5,
                sse: 1.0,
                ssw: 2.0,
                alpha: 0.0,
                beta: 1.0,
                gamma: 0.0,
                mu: 0.0,
                grad_norm: 0.25,
            }],
            stop_reason: StopReason::MaxEpochs,
            notes: vec![],
            evidence: vec![None],
        };
        let csv = trace.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,objective,sse,ssw,alpha,beta,gamma,mu,grad_norm"
        );
        assert_eq!(lines.next().unwrap(), "1,0.5,1,2,0,1,0,0,0.25");
    }

    #[test]
    fn best_so_far_network_is_returned() {
        // traingdx with an aggressive learning rate overshoots; the returned
        // network must match the minimum objective row, not the last row.
        let (x, y) = sine_data(24, 6);
        let layout = NetworkLayout::regression(1, &[6], TransferKind::Tansig, 1).unwrap();
        let net = init_weights(&layout, 6);
        let mut config = TrainingConfig::for_algorithm(AlgorithmKind::Traingdx);
        config.max_epochs = 60;
        let (best, trace) = train(&net, &x, &y, &config).unwrap();
        let obj = MseObjective::new(net.layout().clone(), x.clone(), y.clone()).unwrap();
        let best_objective = obj.value(&best.flatten());
        let min_row = trace
            .rows
            .iter()
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        assert!((best_objective - min_row).abs() < 1e-12);
    }
}
