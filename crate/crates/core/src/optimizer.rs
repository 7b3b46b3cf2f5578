//! Vanilla gradient descent on `f(U) = (1/4p) ||P_Omega(U U^T - X*)||_F^2`
//! together with the dynamic signal/residual split `U_t = S_t + E_t`.
//!
//! The factor update only ever sees [`ObservedEntries`]. Everything that
//! needs `X*` itself (errors, the dynamic basis seeded at `V*`) goes through
//! [`Oracle`], and only feeds the trace.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groundtruth::{materialize, GroundTruth};
use crate::init::{init_direction, InitSpec};
use crate::matops::{
    inner, low_rank_sym_op_norm, op_norm, polar_orthonormalize, project, sigma_k, sym_op_norm,
    two_inf_norm, DenseMatrix, OrthonormalBasis,
};
use crate::sampling::{ObservationSet, ObservedEntries};

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaRule {
    Explicit(f64),
    /// `c_eta * mu * r / (sqrt(p d) * sigma1)`.
    Theorem(f64),
}

pub const DEFAULT_C_ETA: f64 = 0.25;

impl Default for EtaRule {
    fn default() -> Self {
        EtaRule::Theorem(DEFAULT_C_ETA)
    }
}

pub fn step_size(gt: &GroundTruth, obs: &ObservationSet, rule: EtaRule) -> Result<f64> {
    let eta = match rule {
        EtaRule::Explicit(eta) => eta,
        EtaRule::Theorem(c) => {
            c * gt.mu * gt.r as f64 / ((obs.p() * gt.d as f64).sqrt() * gt.sigma1())
        }
    };
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid(
            "eta",
            format!("step size must be positive, got {eta}"),
        ));
    }
    Ok(eta)
}

/// Ground-truth access for diagnostics.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub gt: GroundTruth,
    pub xstar: DenseMatrix,
    pub xstar_fro: f64,
}

impl Oracle {
    pub fn new(gt: GroundTruth) -> Self {
        let xstar = materialize(&gt);
        let xstar_fro = xstar.norm();
        Self {
            gt,
            xstar,
            xstar_fro,
        }
    }
}

fn check_factor(observed: &ObservedEntries, u: &DenseMatrix) -> Result<()> {
    if u.nrows() != observed.obs().d() || u.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "factor is {}x{}, expected {} rows",
            u.nrows(),
            u.ncols(),
            observed.obs().d()
        )));
    }
    Ok(())
}

/// `(1/4p) ||P_Omega(U U^T - X*)||_F^2`.
pub fn objective(observed: &ObservedEntries, u: &DenseMatrix) -> Result<f64> {
    check_factor(observed, u)?;
    let g = u * u.transpose();
    Ok(observed.masked_sq_error(&g) / (4.0 * observed.obs().p()))
}

/// `R_Omega(U U^T - X*) U`.
pub fn gradient(observed: &ObservedEntries, u: &DenseMatrix) -> Result<DenseMatrix> {
    check_factor(observed, u)?;
    let g = u * u.transpose();
    let m = observed.residual_operator(&g);
    Ok(-(m * u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub t: usize,
    pub u: DenseMatrix,
    /// Dynamic basis, rank `r`.
    pub v: OrthonormalBasis,
    /// `P_V U`.
    pub s: DenseMatrix,
    /// `U - P_V U`.
    pub e: DenseMatrix,
}

impl IterateState {
    pub fn new(t: usize, u: DenseMatrix, v: OrthonormalBasis) -> Result<Self> {
        let split = project(&v, &u)?;
        Ok(Self {
            t,
            u,
            v,
            s: split.onto,
            e: split.complement,
        })
    }

    /// `Sigma_t = V^T U U^T V`.
    pub fn core(&self) -> DenseMatrix {
        let vu = self.v.matrix().transpose() * &self.u;
        &vu * vu.transpose()
    }
}

/// One GD step: `U' = U + eta M U`, `V' = polar((I + eta M) V)` with
/// `M = R_Omega(X* - U U^T)`.
pub fn advance(state: &IterateState, observed: &ObservedEntries, eta: f64) -> Result<IterateState> {
    check_factor(observed, &state.u)?;
    let g = &state.u * state.u.transpose();
    let m = observed.residual_operator(&g);
    advance_with(state, &m, eta)
}

/// [`advance`] with `M_t` already computed.
pub fn advance_with(state: &IterateState, m: &DenseMatrix, eta: f64) -> Result<IterateState> {
    let u = &state.u + (m * &state.u) * eta;
    let z = state.v.matrix() + (m * state.v.matrix()) * eta;
    let v = polar_orthonormalize(&z).map_err(|e| match e {
        Error::Singular { sigma_min, .. } => Error::Diverged {
            t: state.t,
            reason: format!("dynamic basis update is singular (sigma_min = {sigma_min:e})"),
        },
        other => other,
    })?;
    IterateState::new(state.t + 1, u, v)
}

/// One recorded iteration. The first fourteen fields are the exported trace
/// columns, in order; the remainder feed the post-hoc checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub loss: f64,
    pub err_fro: f64,
    pub err_op: f64,
    pub sig_min: f64,
    pub sig_max: f64,
    pub res_norm: f64,
    pub v_dist_op: f64,
    pub v_dist_fro: f64,
    pub v_incoh: f64,
    pub decoupling: f64,
    pub m_norm: f64,
    pub lambda_norm: f64,
    pub grad_norm: f64,
    /// `<Delta_t, M_t U_t U_t^T>`.
    pub descent_inner: f64,
    /// `||U_t U_t^T||_F`.
    pub uut_fro: f64,
}

impl TraceRecord {
    pub const CSV_COLUMNS: [&'static str; 14] = [
        "t",
        "loss",
        "err_fro",
        "err_op",
        "sig_min",
        "sig_max",
        "res_norm",
        "v_dist_op",
        "v_dist_fro",
        "v_incoh",
        "decoupling",
        "m_norm",
        "lambda_norm",
        "grad_norm",
    ];

    /// Values of [`Self::CSV_COLUMNS`] after `t`.
    pub fn csv_values(&self) -> [f64; 13] {
        [
            self.loss,
            self.err_fro,
            self.err_op,
            self.sig_min,
            self.sig_max,
            self.res_norm,
            self.v_dist_op,
            self.v_dist_fro,
            self.v_incoh,
            self.decoupling,
            self.m_norm,
            self.lambda_norm,
            self.grad_norm,
        ]
    }

    fn is_finite(&self) -> bool {
        self.csv_values().iter().all(|v| v.is_finite())
            && self.descent_inner.is_finite()
            && self.uut_fro.is_finite()
    }
}

/// Everything needed to measure one iterate.
struct Snapshot<'a> {
    state: &'a IterateState,
    g: &'a DenseMatrix,
    m: &'a DenseMatrix,
}

fn measure(snap: &Snapshot<'_>, oracle: &Oracle, observed: &ObservedEntries) -> TraceRecord {
    let Snapshot { state, g, m } = *snap;
    let gt = &oracle.gt;
    let (d, r) = (gt.d, gt.r);
    let rp = state.u.ncols();
    let delta = &oracle.xstar - g;
    let mu_mat = m * &state.u;
    let delta_u = &delta * &state.u;

    let vstar = gt.basis.matrix();
    let ustar = gt.factor();
    let mut span = DenseMatrix::zeros(d, 2 * r + rp);
    span.columns_mut(0, r).copy_from(vstar);
    span.columns_mut(r, r).copy_from(state.v.matrix());
    span.columns_mut(2 * r, rp).copy_from(&state.u);
    let err_op = low_rank_sym_op_norm(&span, &[(&ustar, 1.0), (&state.u, -1.0)]);
    let lambda_norm = low_rank_sym_op_norm(&span, &[(&state.u, 1.0), (&state.s, -1.0)]);

    let vu = state.v.matrix().transpose() * &state.u;
    let v_diff = state.v.matrix() - vstar;
    TraceRecord {
        t: state.t,
        loss: observed.masked_sq_error(g) / (4.0 * observed.obs().p()),
        err_fro: delta.norm(),
        err_op,
        sig_min: sigma_k(&vu, r),
        sig_max: op_norm(&vu),
        res_norm: op_norm(&state.e),
        v_dist_op: op_norm(&v_diff),
        v_dist_fro: v_diff.norm(),
        v_incoh: two_inf_norm(state.v.matrix()),
        decoupling: sym_op_norm(&(&delta - m)),
        m_norm: sym_op_norm(m),
        lambda_norm,
        grad_norm: mu_mat.norm(),
        descent_inner: inner(&delta_u, &mu_mat),
        uut_fro: (state.u.transpose() * &state.u).norm(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gt: GroundTruth,
    pub obs: ObservationSet,
    pub init: InitSpec,
    pub eta_rule: EtaRule,
    pub max_iters: usize,
    /// Stop once `||Delta_t||_F <= stop_tol * ||X*||_F`.
    pub stop_tol: f64,
    pub record_every: usize,
    /// Keep `U_t`, `V_t` and `Sigma_t` for every `t` (needed by ghosts).
    pub capture_streams: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "need T >= 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("stop_tol", "need stop_tol >= 0"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "need record_every >= 1"));
        }
        if self.obs.d() != self.gt.d {
            return Err(Error::Dimension(format!(
                "mask is {0}x{0} but ground truth has d = {1}",
                self.obs.d(),
                self.gt.d
            )));
        }
        if self.init.r_prime == 0 || self.init.r_prime > self.gt.d {
            return Err(invalid(
                "r_prime",
                format!("need 1 <= r' <= d, got {}", self.init.r_prime),
            ));
        }
        if !(self.init.alpha >= 0.0) || !self.init.alpha.is_finite() {
            return Err(invalid("alpha", "need alpha >= 0"));
        }
        Ok(())
    }

    pub fn eta(&self) -> Result<f64> {
        step_size(&self.gt, &self.obs, self.eta_rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max_iters",
            RunStatus::Diverged => "diverged",
        })
    }
}

/// Per-iteration matrices kept when [`RunConfig::capture_streams`] is set.
#[derive(Debug, Clone, Default)]
pub struct Streams {
    pub u: Vec<DenseMatrix>,
    pub v: Vec<OrthonormalBasis>,
    pub sigma: Vec<DenseMatrix>,
}

impl Streams {
    fn push(&mut self, state: &IterateState) {
        self.u.push(state.u.clone());
        self.v.push(state.v.clone());
        self.sigma.push(state.core());
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub final_state: IterateState,
    pub status: RunStatus,
    pub eta: f64,
    pub streams: Option<Streams>,
    /// Set when the run diverged.
    pub failure: Option<String>,
}

impl RunOutput {
    pub fn iterations(&self) -> usize {
        self.final_state.t
    }

    pub fn last(&self) -> &TraceRecord {
        self.trace.last().expect("trace always holds t = 0")
    }
}

const DIVERGENCE_FACTOR: f64 = 1e3;

/// Runs GD until the relative error drops below `stop_tol`, `max_iters`
/// steps are taken, or the iterates blow up.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let eta = config.eta()?;
    let oracle = Oracle::new(config.gt.clone());
    let observed = ObservedEntries::from_full(config.obs.clone(), &oracle.xstar)?;

    let u0 = initial_factor(&config.init, &observed)?;
    let state = IterateState::new(0, u0, config.gt.basis.clone())?;
    run_from(config, state, eta, &oracle, &observed)
}

/// `U_0 = alpha Z`, or the zero factor when `alpha = 0`.
pub fn initial_factor(init: &InitSpec, observed: &ObservedEntries) -> Result<DenseMatrix> {
    if init.alpha == 0.0 {
        return Ok(DenseMatrix::zeros(observed.obs().d(), init.r_prime));
    }
    Ok(init_direction(init, observed)? * init.alpha)
}

/// Continues GD from an arbitrary state.
pub fn run_from(
    config: &RunConfig,
    mut state: IterateState,
    eta: f64,
    oracle: &Oracle,
    observed: &ObservedEntries,
) -> Result<RunOutput> {
    let mut trace = Vec::new();
    let mut streams = config.capture_streams.then(Streams::default);
    let limit = DIVERGENCE_FACTOR * oracle.xstar_fro;
    let target = config.stop_tol * oracle.xstar_fro;
    let start = state.t;

    loop {
        let t = state.t;
        let g = &state.u * state.u.transpose();
        let m = observed.residual_operator(&g);
        let err_fro = (&oracle.xstar - &g).norm();

        let status = if !err_fro.is_finite() || err_fro > limit {
            Some(RunStatus::Diverged)
        } else if err_fro <= target {
            Some(RunStatus::Converged)
        } else if t - start >= config.max_iters {
            Some(RunStatus::MaxIters)
        } else {
            None
        };

        if let Some(s) = streams.as_mut() {
            s.push(&state);
        }
        if status.is_some() || (t - start).is_multiple_of(config.record_every) {
            let rec = measure(
                &Snapshot {
                    state: &state,
                    g: &g,
                    m: &m,
                },
                oracle,
                observed,
            );
            if !rec.is_finite() && status != Some(RunStatus::Diverged) {
                trace.push(rec);
                return Ok(diverged(
                    trace,
                    state,
                    eta,
                    streams,
                    "non-finite diagnostics".into(),
                ));
            }
            trace.push(rec);
        }
        match status {
            Some(RunStatus::Diverged) => {
                let why = format!("error {err_fro:e} exceeds {DIVERGENCE_FACTOR:e} * ||X*||_F");
                return Ok(diverged(trace, state, eta, streams, why));
            }
            Some(status) => {
                return Ok(RunOutput {
                    trace,
                    final_state: state,
                    status,
                    eta,
                    streams,
                    failure: None,
                })
            }
            None => {}
        }
        state = match advance_with(&state, &m, eta) {
            Ok(next) => next,
            Err(Error::Diverged { reason, .. }) => {
                return Ok(diverged(trace, state, eta, streams, reason));
            }
            Err(e) => return Err(e),
        };
    }
}

fn diverged(
    trace: Vec<TraceRecord>,
    state: IterateState,
    eta: f64,
    streams: Option<Streams>,
    why: String,
) -> RunOutput {
    RunOutput {
        failure: Some(format!("t = {}: {why}", state.t)),
        trace,
        final_state: state,
        status: RunStatus::Diverged,
        eta,
        streams,
    }
}
