//! Post-hoc checks over stored traces.
//!
//! Bounds that come with explicit numerals are asserted: every applicable
//! iteration either satisfies them or counts as a violation. Inequalities with
//! hidden constants are turned around: the report carries the smallest
//! constant that makes every applicable iteration true, and an iteration
//! counts as a violation only when it would need more than `c_max`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groundtruth::{generate_ground_truth, materialize, BasisStyle, GroundTruth};
use crate::matops::{gaussian, inner, max_norm, two_inf_norm};
use crate::optimizer::TraceRecord;
use crate::rng::StreamKey;
use crate::sampling::{
    apply_r_omega, apply_r_omega_loo, omega_deviation, omega_deviation_loo, sample_mask,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub t_start: usize,
    pub t_end: usize,
    pub n_applicable: usize,
    pub n_violations: usize,
    /// Smallest `rhs - lhs` over applicable iterations (negative means
    /// violated). `None` when nothing was applicable.
    pub worst_margin: Option<f64>,
    pub empirical_constant: Option<f64>,
    /// Whether the bound is stated with explicit numerals.
    pub explicit: bool,
}

impl CheckReport {
    fn new(name: &str, explicit: bool, trace: &[TraceRecord]) -> Self {
        Self {
            name: name.to_string(),
            t_start: trace.first().map_or(0, |r| r.t),
            t_end: trace.last().map_or(0, |r| r.t),
            n_applicable: 0,
            n_violations: 0,
            worst_margin: None,
            empirical_constant: None,
            explicit,
        }
    }

    /// Records one applicable instance of `lhs <= rhs`.
    fn record(&mut self, lhs: f64, rhs: f64) {
        self.n_applicable += 1;
        let margin = rhs - lhs;
        let tol = 1e-12 * rhs.abs().max(lhs.abs()).max(1.0);
        if margin < -tol || margin.is_nan() {
            self.n_violations += 1;
        }
        self.worst_margin = Some(self.worst_margin.map_or(margin, |m| m.min(margin)));
    }

    fn observe_constant(&mut self, c: f64) {
        self.empirical_constant = Some(self.empirical_constant.map_or(c, |m| m.max(c)));
    }

    pub fn passed(&self) -> bool {
        self.n_violations == 0
    }
}

/// Problem constants the checks plug into the displayed bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckContext {
    pub sigma1: f64,
    pub sigma_r: f64,
    pub kappa: f64,
    pub mu: f64,
    pub r: usize,
    pub d: usize,
    pub p: f64,
    pub eta: f64,
    pub alpha: f64,
    /// Constant in the `||V_t - V*||_F` hypothesis.
    pub gamma1: f64,
    /// Largest hidden constant accepted before an iteration counts as a
    /// violation.
    pub c_max: f64,
}

pub const DEFAULT_GAMMA1: f64 = 1.0;
pub const DEFAULT_C_MAX: f64 = 100.0;

impl CheckContext {
    pub fn new(gt: &GroundTruth, p: f64, eta: f64, alpha: f64) -> Self {
        Self {
            sigma1: gt.sigma1(),
            sigma_r: gt.sigma_r(),
            kappa: gt.kappa,
            mu: gt.mu,
            r: gt.r,
            d: gt.d,
            p,
            eta,
            alpha,
            gamma1: DEFAULT_GAMMA1,
            c_max: DEFAULT_C_MAX,
        }
    }

    fn rf(&self) -> f64 {
        self.r as f64
    }

    fn df(&self) -> f64 {
        self.d as f64
    }

    /// `kappa mu r^{1.5} log(1/alpha) / sqrt(p d)`; infinite for `alpha = 0`.
    fn drift_scale(&self) -> f64 {
        let log_inv = if self.alpha > 0.0 {
            (1.0 / self.alpha).ln()
        } else {
            f64::INFINITY
        };
        self.kappa * self.mu * self.rf().powf(1.5) * log_inv / (self.p * self.df()).sqrt()
    }

    fn s_bound(&self) -> f64 {
        2.0 * self.sigma1.sqrt()
    }

    fn incoherence_bound(&self) -> f64 {
        2.0 * (self.mu * self.rf() / self.df()).sqrt()
    }

    fn v_fro_ok(&self, rec: &TraceRecord) -> bool {
        rec.v_dist_fro <= self.gamma1 * self.drift_scale()
    }

    fn onestep_pre(&self, rec: &TraceRecord) -> bool {
        rec.sig_max <= self.s_bound()
            && rec.res_norm <= (self.sigma1 / self.df()).sqrt()
            && rec.v_incoh <= self.incoherence_bound()
            && self.v_fro_ok(rec)
    }

    fn lambda_pre(&self, rec: &TraceRecord) -> bool {
        rec.sig_max <= self.s_bound()
            && rec.v_incoh <= self.incoherence_bound()
            && rec.res_norm <= (self.sigma1 * self.mu * self.rf() / (81.0 * self.df())).sqrt()
    }
}

/// Consecutive pairs `(t, t + 1)` present in the trace.
fn steps(trace: &[TraceRecord]) -> impl Iterator<Item = (&TraceRecord, &TraceRecord)> {
    trace
        .windows(2)
        .filter(|w| w[1].t == w[0].t + 1)
        .map(|w| (&w[0], &w[1]))
}

fn hidden(report: &mut CheckReport, c: f64, c_max: f64) {
    report.observe_constant(c);
    report.record(c, c_max);
}

/// `<Delta_t, M_t U_t U_t^T> >= (sigma_r / 15) ||Delta_t||_F^2 - C slack ||Delta_t||_F`.
pub fn check_descent(trace: &[TraceRecord], ctx: &CheckContext) -> CheckReport {
    let mut rep = CheckReport::new("descent", false, trace);
    let (s1, sr) = (ctx.sigma1, ctx.sigma_r);
    for rec in trace {
        let pre =
            rec.sig_min >= sr.sqrt() / 2.0 && rec.sig_max <= ctx.s_bound() && rec.v_dist_op <= 0.1;
        if !pre {
            continue;
        }
        let main = sr / 15.0 * rec.err_fro * rec.err_fro;
        let slack = ((sr.powi(3) * ctx.mu * ctx.rf().powi(2) / ctx.p).sqrt() * rec.res_norm
            + ctx.rf().sqrt() * s1 * rec.decoupling)
            * rec.err_fro;
        let shortfall = main - rec.descent_inner;
        let c = if shortfall <= 0.0 {
            0.0
        } else if slack > 0.0 {
            shortfall / slack
        } else {
            f64::INFINITY
        };
        hidden(&mut rep, c, ctx.c_max);
    }
    rep
}

/// The four one-step dynamics plus the persistence of
/// `sigma_r(S_t) >= sqrt(sigma_r)/2` once reached.
pub fn check_onestep(trace: &[TraceRecord], ctx: &CheckContext) -> Result<Vec<CheckReport>> {
    if trace.len() < 2 {
        return Err(invalid(
            "trace",
            "one-step checks need at least two records",
        ));
    }
    let (s1, sr) = (ctx.sigma1, ctx.sigma_r);
    let eta = ctx.eta;
    let k = s1 * ctx.drift_scale();
    let err_scale = (s1.powi(3) * ctx.mu * ctx.rf().powi(2) / ctx.p).sqrt();

    let mut min_sig = CheckReport::new("onestep_min_signal", false, trace);
    let mut max_sig = CheckReport::new("onestep_max_signal", true, trace);
    let mut resid = CheckReport::new("onestep_residual", false, trace);
    let mut growth = CheckReport::new("residual_growth_rate", false, trace);
    let mut error = CheckReport::new("onestep_error", false, trace);

    for (a, b) in steps(trace) {
        if !ctx.onestep_pre(a) {
            continue;
        }
        max_sig.record(b.sig_max, ctx.s_bound());

        let grow = (1.0 + 0.8 * eta * sr - eta * a.sig_min * a.sig_min) * a.sig_min;
        let c = ratio_or_zero(grow - b.sig_min, eta * k * a.res_norm);
        hidden(&mut min_sig, c, ctx.c_max);

        if a.res_norm > RESIDUAL_FLOOR * s1.sqrt() {
            let rate = (b.res_norm / a.res_norm - 1.0) / eta;
            growth.observe_constant(rate);
            // the signal/residual separation needs rate < sigma_r
            growth.record(rate, sr);
            let c = ratio_or_zero(b.res_norm / a.res_norm - 1.0, eta * k);
            hidden(&mut resid, c, ctx.c_max);
        }

        if a.sig_min >= sr.sqrt() / 2.0 {
            let contracted = (1.0 - eta * sr / 10.0) * a.err_fro;
            let c = ratio_or_zero(b.err_fro - contracted, eta * err_scale * a.res_norm);
            hidden(&mut error, c, ctx.c_max);
        }
    }

    let mut persist = CheckReport::new("signal_persistence", true, trace);
    let floor = sr.sqrt() / 2.0;
    if let Some(t1) = trace.iter().position(|r| r.sig_min >= floor) {
        for (a, b) in steps(&trace[t1..]) {
            if ctx.onestep_pre(a) {
                persist.record(floor, b.sig_min);
            }
        }
    }
    Ok(vec![min_sig, max_sig, resid, growth, error, persist])
}

/// Below this multiple of `sqrt(sigma1)` the residual is rounding noise and
/// its growth rate carries no information.
const RESIDUAL_FLOOR: f64 = 1e-10;

/// `excess / scale`, clamped at zero; infinite when a positive excess has
/// no slack to absorb it.
fn ratio_or_zero(excess: f64, scale: f64) -> f64 {
    if excess <= 0.0 {
        0.0
    } else if scale > 0.0 {
        excess / scale
    } else {
        f64::INFINITY
    }
}

/// The helper-lemma bounds on `U_t U_t^T`, `Lambda_t`, `Delta_t`, `M_t`, the
/// always-true triangle bound on `Lambda_t`, and the measured `Gamma` in
/// `||(I - R_Omega)(Delta_t)|| <= 21 Gamma sigma1 sqrt(mu^2 r^2 / (p d))`.
pub fn check_helper_bounds(trace: &[TraceRecord], ctx: &CheckContext) -> Vec<CheckReport> {
    let s1 = ctx.sigma1;
    let mut uut = CheckReport::new("helper_uut", true, trace);
    let mut lambda = CheckReport::new("helper_lambda", true, trace);
    let mut triangle = CheckReport::new("lambda_triangle", true, trace);
    let mut delta = CheckReport::new("helper_delta", true, trace);
    let mut m = CheckReport::new("helper_m", true, trace);
    let mut gamma = CheckReport::new("helper_decoupling_gamma", false, trace);
    let decoupling_scale = 21.0 * s1 * ctx.mu * ctx.rf() / (ctx.p * ctx.df()).sqrt();

    for rec in trace {
        triangle.record(
            rec.lambda_norm,
            2.0 * rec.sig_max * rec.res_norm + rec.res_norm * rec.res_norm,
        );
        if rec.sig_max <= ctx.s_bound()
            && rec.res_norm <= (s1 * ctx.mu * ctx.rf() / ctx.df()).sqrt()
        {
            uut.record(rec.uut_fro, 8.0 * ctx.rf().sqrt() * s1);
        }
        if ctx.lambda_pre(rec) {
            lambda.record(rec.lambda_norm, 5.0 * s1.sqrt() * rec.res_norm);
            if rec.v_dist_op <= ctx.gamma1 * ctx.drift_scale() {
                delta.record(rec.err_op, 5.0 * s1);
                m.record(rec.m_norm, 6.0 * s1);
                hidden(&mut gamma, rec.decoupling / decoupling_scale, ctx.c_max);
            }
        }
    }
    vec![uut, lambda, triangle, delta, m, gamma]
}

/// Per-step increments of `||V_t - V*||_F` against
/// `eta sigma1 sqrt(d r / p) (mu r / d + ||V_t||_{2,inf}^2)`, and the
/// accumulated drift `||V_t - V*||` against the `1 / (2 kappa)` radius the
/// increment bound assumes.
pub fn check_frobenius_drift(trace: &[TraceRecord], ctx: &CheckContext) -> Vec<CheckReport> {
    let mut step = CheckReport::new("frobenius_drift_step", false, trace);
    let mut total = CheckReport::new("basis_drift_total", false, trace);
    let limit = 1.0 / (2.0 * ctx.kappa);
    let base = ctx.mu * ctx.rf() / ctx.df();
    for (a, b) in steps(trace) {
        if a.sig_max > ctx.s_bound() || a.v_dist_op > limit {
            continue;
        }
        let budget = ctx.eta
            * ctx.sigma1
            * (ctx.df() * ctx.rf() / ctx.p).sqrt()
            * (base + a.v_incoh * a.v_incoh);
        hidden(
            &mut step,
            ratio_or_zero(b.v_dist_fro - a.v_dist_fro, budget),
            ctx.c_max,
        );
    }
    for rec in trace {
        total.record(rec.v_dist_op, limit);
    }
    total.empirical_constant = trace.iter().map(|r| r.v_dist_op).reduce(f64::max);
    vec![step, total]
}

/// Every trajectory check over one trace.
pub fn run_all_checks(trace: &[TraceRecord], ctx: &CheckContext) -> Result<Vec<CheckReport>> {
    let mut out = vec![check_descent(trace, ctx)];
    out.extend(check_onestep(trace, ctx)?);
    out.extend(check_helper_bounds(trace, ctx));
    out.extend(check_frobenius_drift(trace, ctx));
    Ok(out)
}

/// Names of explicit-constant checks with at least one violation.
pub fn explicit_failures(reports: &[CheckReport]) -> Vec<&str> {
    reports
        .iter()
        .filter(|r| r.explicit && !r.passed())
        .map(|r| r.name.as_str())
        .collect()
}

/// Monte-Carlo maxima for the concentration statements about the mask.
///
/// Each trial draws a fresh mask and a fresh incoherent rank-`r` ground
/// truth; the reported constant is the largest observed ratio of the measured
/// quantity to the bound with its constant removed.
pub fn estimate_concentration_constants(
    d: usize,
    p: f64,
    r: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    if r == 0 || r > d {
        return Err(invalid("r", format!("need 1 <= r <= d, got {r}")));
    }
    let empty: [TraceRecord; 0] = [];
    let mut gamma = CheckReport::new("omega_concentration", false, &empty);
    let mut inner_rep = CheckReport::new("inner_product", false, &empty);
    let mut loo_mask = CheckReport::new("loo_mask_deviation", true, &empty);
    let mut fro_indep = CheckReport::new("loo_fro_independent", false, &empty);
    let mut fro_general = CheckReport::new("loo_fro_general", false, &empty);
    let scale = (d as f64 / p).sqrt();
    // delta = d^{-3}
    let log_term = (4.0 * r as f64 * (d as f64).powi(3)).ln();

    for trial in 0..trials {
        let key = StreamKey::new(seed, "concentration").with_u64(trial as u64);
        let obs = sample_mask(d, p, key.clone().with_str("mask").seed())?;
        let dev = omega_deviation(&obs);
        gamma.observe_constant(dev / scale);
        gamma.n_applicable += 1;

        let mut rng = key.clone().with_str("factors").rng();
        // symmetric arguments A A^T and B B^T, the case R_Omega is built for
        let a = gaussian(&mut rng, d, r);
        let b = gaussian(&mut rng, d, r);
        let x = &a * a.transpose();
        let lhs = inner(&(&x - apply_r_omega(&obs, &x)?), &(&b * b.transpose())).abs();
        let norms = two_inf_norm(&a) * b.norm() * a.norm() * two_inf_norm(&b);
        inner_rep.observe_constant(lhs / (scale * norms));
        // deterministic form with the realized deviation
        inner_rep.record(lhs, dev * norms);

        let l = (key.clone().with_str("row").seed() % d as u64) as usize;
        loo_mask.record(omega_deviation_loo(&obs, l)?, dev);

        let gt: GroundTruth =
            generate_ground_truth(d, r, 2.0, 1.0, BasisStyle::Haar, key.with_str("gt").seed())?;
        let xs = materialize(&gt);
        let v = gt.basis.matrix();
        let diff = (apply_r_omega(&obs, &xs)? - apply_r_omega_loo(&obs, l, &xs)?) * v;
        let lhs = diff.norm_squared();
        let xmax2 = max_norm(&xs).powi(2);
        let indep = 32.0 * gt.mu * r as f64 * log_term / p * xmax2;
        fro_indep.observe_constant(lhs / indep);
        fro_indep.record(lhs, indep);
        let general = 2.0 * d as f64 / p * xmax2 * v.norm_squared();
        fro_general.observe_constant(lhs / general);
        fro_general.record(lhs, general);
    }
    Ok(vec![gamma, inner_rep, loo_mask, fro_indep, fro_general])
}

/// Baseline entry for regression comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub name: String,
    pub empirical_constant: f64,
}

pub const BASELINE_FACTOR: f64 = 1.5;

/// Reports whose constant exceeds `factor` times the baseline value.
pub fn regressions<'a>(
    reports: &'a [CheckReport],
    baseline: &[BaselineEntry],
    factor: f64,
) -> Result<Vec<&'a CheckReport>> {
    let mut out = Vec::new();
    for b in baseline {
        let rep = reports
            .iter()
            .find(|r| r.name == b.name)
            .ok_or_else(|| Error::Missing(format!("no report named {}", b.name)))?;
        if rep
            .empirical_constant
            .is_some_and(|c| c > factor * b.empirical_constant)
        {
            out.push(rep);
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

/// One row per report: name, applicable, violations, worst margin, constant.
pub fn render_table(reports: &[CheckReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(4)
        .max(5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>10}  {:>10}  {:>12}  {:>12}  {:>8}",
        "check", "applicable", "violations", "worst_margin", "constant", "explicit"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>10}  {:>12}  {:>12}  {:>8}",
            r.name,
            r.n_applicable,
            r.n_violations,
            fmt_opt(r.worst_margin),
            fmt_opt(r.empirical_constant),
            if r.explicit { "yes" } else { "no" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{generate_ground_truth, BasisStyle};
    use crate::init::{InitScheme, InitSpec};
    use crate::optimizer::{run, EtaRule, IterateState, Oracle, RunConfig};
    use crate::sampling::ObservedEntries;

    fn ctx(gt: &GroundTruth, p: f64, eta: f64, alpha: f64) -> CheckContext {
        CheckContext::new(gt, p, eta, alpha)
    }

    fn run_from_truth(p: f64, iters: usize) -> (GroundTruth, Vec<TraceRecord>, f64) {
        let gt = generate_ground_truth(30, 2, 2.0, 1.0, BasisStyle::Haar, 4).unwrap();
        let cfg = RunConfig {
            gt: gt.clone(),
            obs: sample_mask(30, p, 4).unwrap(),
            init: InitSpec {
                scheme: InitScheme::Gaussian,
                r_prime: 2,
                alpha: 1.0,
                seed: 0,
            },
            eta_rule: EtaRule::Theorem(0.25),
            max_iters: iters,
            stop_tol: 0.0,
            record_every: 1,
            capture_streams: false,
        };
        let oracle = Oracle::new(gt.clone());
        let observed = ObservedEntries::from_full(cfg.obs.clone(), &oracle.xstar).unwrap();
        let state = IterateState::new(0, gt.factor(), gt.basis.clone()).unwrap();
        let eta = cfg.eta().unwrap();
        let out = crate::optimizer::run_from(&cfg, state, eta, &oracle, &observed).unwrap();
        (gt, out.trace, eta)
    }

    #[test]
    fn truth_started_run_passes_everything() {
        let (gt, trace, eta) = run_from_truth(0.5, 10);
        assert!(trace.iter().all(|r| r.err_fro < 1e-12));
        let reports = run_all_checks(&trace, &ctx(&gt, 0.5, eta, 1e-3)).unwrap();
        for r in &reports {
            assert!(r.passed(), "{r:?}");
            assert!(r.n_violations <= r.n_applicable);
        }
        let descent = &reports[0];
        assert_eq!(descent.n_applicable, 11);
        assert_eq!(descent.empirical_constant, Some(0.0));
    }

    #[test]
    fn full_observation_descent_needs_no_slack() {
        // p = 1, r' = r, E_t = 0 near truth: <Delta, Delta U U^T> >= (sigma_r/15)||Delta||_F^2
        let gt = generate_ground_truth(20, 2, 2.0, 1.0, BasisStyle::Haar, 1).unwrap();
        let ustar = gt.factor();
        let u = &ustar * 0.97;
        let x = materialize(&gt);
        let delta = &x - &u * u.transpose();
        let lhs = inner(&(&delta * &u), &(&delta * &u));
        assert!(lhs >= gt.sigma_r() / 15.0 * delta.norm_squared());
    }

    #[test]
    fn explicit_violation_is_reported() {
        let (gt, mut trace, eta) = run_from_truth(0.5, 3);
        trace[2].m_norm = 100.0;
        let reports = check_helper_bounds(&trace, &ctx(&gt, 0.5, eta, 1e-3));
        let m = reports.iter().find(|r| r.name == "helper_m").unwrap();
        assert_eq!(m.n_violations, 1);
        assert!(m.worst_margin.unwrap() < 0.0);
        assert_eq!(explicit_failures(&reports), vec!["helper_m"]);
    }

    #[test]
    fn skipped_iterations_are_not_violations() {
        let (gt, mut trace, eta) = run_from_truth(0.5, 3);
        for r in &mut trace {
            r.sig_max = 10.0;
        }
        let reports = check_helper_bounds(&trace, &ctx(&gt, 0.5, eta, 1e-3));
        let uut = reports.iter().find(|r| r.name == "helper_uut").unwrap();
        assert_eq!(uut.n_applicable, 0);
        assert_eq!(uut.worst_margin, None);
        assert!(uut.passed());
    }

    #[test]
    fn short_trace_rejected() {
        let (gt, trace, eta) = run_from_truth(0.5, 1);
        assert!(check_onestep(&trace[..1], &ctx(&gt, 0.5, eta, 1e-3)).is_err());
    }

    #[test]
    fn small_init_run_has_no_explicit_violations() {
        let gt = generate_ground_truth(60, 2, 2.0, 1.0, BasisStyle::Haar, 8).unwrap();
        let cfg = RunConfig {
            gt: gt.clone(),
            obs: sample_mask(60, 0.6, 8).unwrap(),
            init: InitSpec {
                scheme: InitScheme::Gaussian,
                r_prime: 6,
                alpha: 1e-3,
                seed: 1,
            },
            eta_rule: EtaRule::Theorem(0.25),
            max_iters: 300,
            stop_tol: 0.0,
            record_every: 1,
            capture_streams: false,
        };
        let out = run(&cfg).unwrap();
        let reports = run_all_checks(&out.trace, &ctx(&gt, 0.6, out.eta, 1e-3)).unwrap();
        assert!(
            explicit_failures(&reports).is_empty(),
            "{}",
            render_table(&reports)
        );
        let triangle = reports
            .iter()
            .find(|r| r.name == "lambda_triangle")
            .unwrap();
        assert_eq!(triangle.n_applicable, out.trace.len());
    }

    #[test]
    fn concentration_at_full_rate_is_exact() {
        let reports = estimate_concentration_constants(20, 1.0, 2, 3, 0).unwrap();
        for r in &reports {
            assert_eq!(r.empirical_constant.unwrap_or(0.0), 0.0, "{}", r.name);
        }
    }

    #[test]
    fn loo_mask_never_exceeds_full() {
        let reports = estimate_concentration_constants(40, 0.3, 2, 10, 9).unwrap();
        let loo = reports
            .iter()
            .find(|r| r.name == "loo_mask_deviation")
            .unwrap();
        assert_eq!(loo.n_applicable, 10);
        assert_eq!(loo.n_violations, 0);
        let inner_rep = reports.iter().find(|r| r.name == "inner_product").unwrap();
        assert_eq!(inner_rep.n_violations, 0);
    }

    #[test]
    fn baseline_regressions() {
        let reports = estimate_concentration_constants(20, 0.5, 2, 2, 1).unwrap();
        let g = reports[0].empirical_constant.unwrap();
        let ok = [BaselineEntry {
            name: "omega_concentration".into(),
            empirical_constant: g,
        }];
        assert!(regressions(&reports, &ok, 1.5).unwrap().is_empty());
        let tight = [BaselineEntry {
            name: "omega_concentration".into(),
            empirical_constant: g / 2.0,
        }];
        assert_eq!(regressions(&reports, &tight, 1.5).unwrap().len(), 1);
        let unknown = [BaselineEntry {
            name: "nope".into(),
            empirical_constant: 1.0,
        }];
        assert!(regressions(&reports, &unknown, 1.5).is_err());
    }

    #[test]
    fn table_has_a_row_per_report() {
        let (gt, trace, eta) = run_from_truth(0.5, 3);
        let reports = run_all_checks(&trace, &ctx(&gt, 0.5, eta, 1e-3)).unwrap();
        assert_eq!(render_table(&reports).lines().count(), reports.len() + 1);
    }
}
