//! Leave-one-out ghost trajectories.
//!
//! Classical ghosts rerun GD with `R_{Omega^(l)}` in place of `R_Omega`.
//! Weakly-coupled ghosts evolve an orthonormal basis started at `V*` but
//! borrow the main run's core `Sigma_t = V_t^T U_t U_t^T V_t`, so they stay
//! aligned with `V_t` while ignoring the randomness in row/column `l`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groundtruth::{materialize, GroundTruth};
use crate::matops::{polar_orthonormalize, procrustes_dist, DenseMatrix, OrthonormalBasis};
use crate::optimizer::{initial_factor, RunConfig};
use crate::rng::StreamKey;
use crate::sampling::{r_omega_loo_unchecked, ObservationSet, ObservedEntries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooKind {
    Classical,
    WeaklyCoupled,
}

impl std::fmt::Display for LooKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LooKind::Classical => "classical",
            LooKind::WeaklyCoupled => "weakly_coupled",
        })
    }
}

/// One ghost trajectory. `states[t]` is `U_t^(l)` (d x r') for classical
/// ghosts and the basis `V~_t^(l)` (d x r) for weakly-coupled ones.
#[derive(Debug, Clone, PartialEq)]
pub struct LooGhost {
    pub l: usize,
    pub kind: LooKind,
    pub states: Vec<DenseMatrix>,
}

impl LooGhost {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, t: usize) -> Result<&DenseMatrix> {
        self.states.get(t).ok_or_else(|| {
            Error::Missing(format!(
                "{} ghost l = {} has no state at t = {t}",
                self.kind, self.l
            ))
        })
    }
}

fn check_index(l: usize, d: usize) -> Result<()> {
    if l >= d {
        return Err(Error::IndexOutOfRange { index: l, d });
    }
    Ok(())
}

/// Classical ghost for `steps` GD iterations, started at the main run's
/// `U_0`.
pub fn run_classical_loo(config: &RunConfig, l: usize, steps: usize) -> Result<LooGhost> {
    config.validate()?;
    check_index(l, config.gt.d)?;
    let eta = config.eta()?;
    let xstar = materialize(&config.gt);
    let observed = ObservedEntries::from_full(config.obs.clone(), &xstar)?;
    let mut u = initial_factor(&config.init, &observed)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u.clone());
    for t in 0..steps {
        let m = r_omega_loo_unchecked(&config.obs, l, &(&xstar - &u * u.transpose()));
        u += (m * &u) * eta;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                t: t + 1,
                reason: format!("classical ghost l = {l} became non-finite"),
            });
        }
        states.push(u.clone());
    }
    Ok(LooGhost {
        l,
        kind: LooKind::Classical,
        states,
    })
}

/// Weakly-coupled ghost driven by the main run's `Sigma_t` stream. The
/// ghost has one state per entry of `sigma`; `Sigma_t` for the last entry is
/// not consumed.
pub fn run_weakly_coupled_loo(
    sigma: &[DenseMatrix],
    gt: &GroundTruth,
    obs: &ObservationSet,
    eta: f64,
    l: usize,
) -> Result<LooGhost> {
    if sigma.is_empty() {
        return Err(Error::Missing("Sigma_t stream is empty".into()));
    }
    check_index(l, gt.d)?;
    if obs.d() != gt.d {
        return Err(Error::Dimension(format!(
            "mask d = {}, ground truth d = {}",
            obs.d(),
            gt.d
        )));
    }
    if !(eta > 0.0) {
        return Err(invalid("eta", "need eta > 0"));
    }
    let xstar = materialize(gt);
    let mut v = gt.basis.matrix().clone();
    let mut states = Vec::with_capacity(sigma.len());
    states.push(v.clone());
    for (t, core) in sigma.iter().take(sigma.len() - 1).enumerate() {
        if core.shape() != (gt.r, gt.r) {
            return Err(Error::Dimension(format!(
                "Sigma_{t} is {}x{}, expected {}x{}",
                core.nrows(),
                core.ncols(),
                gt.r,
                gt.r
            )));
        }
        let est = &v * core * v.transpose();
        let m = r_omega_loo_unchecked(obs, l, &(&xstar - est));
        let z = &v + (m * &v) * eta;
        v = polar_orthonormalize(&z)
            .map_err(|e| Error::Diverged {
                t: t + 1,
                reason: format!("weakly-coupled ghost l = {l}: {e}"),
            })?
            .into_inner();
        states.push(v.clone());
    }
    Ok(LooGhost {
        l,
        kind: LooKind::WeaklyCoupled,
        states,
    })
}

/// `L` sorted distinct indices from `0..d`, reproducible from `seed`.
pub fn sample_indices(d: usize, count: usize, seed: u64) -> Vec<usize> {
    let count = count.min(d);
    let mut rng = StreamKey::new(seed, "loo-indices")
        .with_u64(d as u64)
        .with_u64(count as u64)
        .rng();
    let mut picked = index::sample(&mut rng, d, count).into_vec();
    picked.sort_unstable();
    picked
}

pub const DEFAULT_GHOST_COUNT: usize = 16;

/// One row of the ghost CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhostRow {
    pub t: usize,
    pub l: usize,
    pub kind: LooKind,
    /// Classical: `dist(U_t, U_t^(l))`. Weakly coupled: `||V_t - V~_t^(l)||_F`.
    pub prox_err: f64,
    /// Classical: `||(U_t^(l) U_t^(l)T - X*)_{l,.}||`. Weakly coupled:
    /// `||(V* - V~_t^(l))_{l,.}||`.
    pub loo_row_err: f64,
    /// Classical: `dist(U_t^(l), U*)` with `U*` padded by zero columns to
    /// width r'. Weakly coupled: `||V~_t^(l) - V*||_F`.
    pub dist_to_truth: f64,
}

/// Width-`cols` copy of `m`, padded with zero columns.
fn pad_columns(m: &DenseMatrix, cols: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), cols.max(m.ncols()));
    out.columns_mut(0, m.ncols()).copy_from(m);
    out
}

/// `dist(U, U*)` for factors of any width.
pub fn dist_to_factor(u: &DenseMatrix, ustar: &DenseMatrix) -> Result<f64> {
    let w = u.ncols().max(ustar.ncols());
    procrustes_dist(&pad_columns(u, w), &pad_columns(ustar, w))
}

/// Per-t diagnostics for a ghost against the main run. `main` is the
/// matching stream: `U_t` for classical ghosts, `V_t` for weakly-coupled.
pub fn ghost_rows(
    ghost: &LooGhost,
    main: &[DenseMatrix],
    gt: &GroundTruth,
) -> Result<Vec<GhostRow>> {
    if main.len() != ghost.len() {
        return Err(Error::Dimension(format!(
            "ghost has {} states, main stream has {}",
            ghost.len(),
            main.len()
        )));
    }
    let l = ghost.l;
    let vstar = gt.basis.matrix();
    let ustar = gt.factor();
    let xstar = materialize(gt);
    let mut rows = Vec::with_capacity(main.len());
    for (t, (g, m)) in ghost.states.iter().zip(main).enumerate() {
        let row = match ghost.kind {
            LooKind::Classical => {
                let est_row = g.row(l) * g.transpose();
                GhostRow {
                    t,
                    l,
                    kind: ghost.kind,
                    prox_err: procrustes_dist(m, g)?,
                    loo_row_err: (est_row - xstar.row(l)).norm(),
                    dist_to_truth: dist_to_factor(g, &ustar)?,
                }
            }
            LooKind::WeaklyCoupled => GhostRow {
                t,
                l,
                kind: ghost.kind,
                prox_err: (m - g).norm(),
                loo_row_err: (vstar.row(l) - g.row(l)).norm(),
                dist_to_truth: (g - vstar).norm(),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// The three-term split `||V_t||_{2,inf} <= loo_err + prox_err + base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceBudget {
    pub t: usize,
    pub loo_err: f64,
    pub prox_err: f64,
    pub base: f64,
    pub bound: f64,
    /// `||V_t||_{2,inf}` over all rows.
    pub actual: f64,
    /// `max_l ||(V_t)_{l,.}||` over the rows that have a ghost.
    pub actual_covered: f64,
    pub covered: usize,
    /// `loo_err <= sqrt(mu r / (4d))`.
    pub loo_target_met: bool,
    /// `prox_err <= sqrt(mu r / (4d))`.
    pub prox_target_met: bool,
}

impl IncoherenceBudget {
    /// The triangle inequality on the covered rows, and on all rows once
    /// every row has a ghost.
    pub fn holds(&self, d: usize) -> bool {
        let slack = 1e-8;
        self.actual_covered <= self.bound + slack
            && (self.covered < d || self.actual <= self.bound + slack)
    }
}

/// Budget at step `t` from weakly-coupled ghosts.
pub fn incoherence_budget(
    v_t: &OrthonormalBasis,
    ghosts: &[LooGhost],
    gt: &GroundTruth,
    t: usize,
) -> Result<IncoherenceBudget> {
    if ghosts.is_empty() {
        return Err(Error::Missing("no weakly-coupled ghosts supplied".into()));
    }
    let v = v_t.matrix();
    let vstar = gt.basis.matrix();
    let (mut loo_err, mut prox_err, mut actual_covered) = (0.0_f64, 0.0_f64, 0.0_f64);
    for ghost in ghosts {
        if ghost.kind != LooKind::WeaklyCoupled {
            return Err(invalid("ghosts", "budget needs weakly-coupled ghosts"));
        }
        let g = ghost.state(t)?;
        let l = ghost.l;
        loo_err = loo_err.max((vstar.row(l) - g.row(l)).norm());
        prox_err = prox_err.max((v - g).norm());
        actual_covered = actual_covered.max(v.row(l).norm());
    }
    let base = gt.incoherence_scale();
    let target = (gt.mu * gt.r as f64 / (4.0 * gt.d as f64)).sqrt();
    let mut rows: Vec<usize> = ghosts.iter().map(|g| g.l).collect();
    rows.sort_unstable();
    rows.dedup();
    Ok(IncoherenceBudget {
        t,
        loo_err,
        prox_err,
        base,
        bound: loo_err + prox_err + base,
        actual: crate::matops::two_inf_norm(v),
        actual_covered,
        covered: rows.len(),
        loo_target_met: loo_err <= target,
        prox_target_met: prox_err <= target,
    })
}

/// Outcome of the local-basin test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinEntry {
    pub entered: bool,
    pub threshold: f64,
    pub dist_truth: f64,
    pub max_ghost_prox: f64,
    pub max_ghost_truth: f64,
    /// `threshold - value` for the three distances, in the order above.
    pub margins: [f64; 3],
}

/// `constant * sqrt(sigma_r mu^3 r^3 log d / (p d^2))`.
pub fn basin_threshold(gt: &GroundTruth, p: f64, constant: f64) -> f64 {
    let (d, r) = (gt.d as f64, gt.r as f64);
    constant * (gt.sigma_r() * gt.mu.powi(3) * r.powi(3) * d.ln() / (p * d * d)).sqrt()
}

pub const DEFAULT_BASIN_CONSTANT: f64 = 1.0;

/// Compares `U_t` and the classical ghosts at `t` against the basin radius.
pub fn basin_entry_check(
    u_t: &DenseMatrix,
    ghosts_t: &[&DenseMatrix],
    gt: &GroundTruth,
    p: f64,
    constant: f64,
) -> Result<BasinEntry> {
    if u_t.ncols() != gt.r {
        return Err(invalid(
            "r_prime",
            format!("basin check needs r' = r = {}, got {}", gt.r, u_t.ncols()),
        ));
    }
    if !(constant > 0.0) {
        return Err(invalid("constant", "need a positive constant"));
    }
    let ustar = gt.factor();
    let dist_truth = procrustes_dist(u_t, &ustar)?;
    let (mut max_ghost_prox, mut max_ghost_truth) = (0.0_f64, 0.0_f64);
    for g in ghosts_t {
        max_ghost_prox = max_ghost_prox.max(procrustes_dist(u_t, g)?);
        max_ghost_truth = max_ghost_truth.max(procrustes_dist(g, &ustar)?);
    }
    let threshold = basin_threshold(gt, p, constant);
    let margins = [
        threshold - dist_truth,
        threshold - max_ghost_prox,
        threshold - max_ghost_truth,
    ];
    Ok(BasinEntry {
        entered: margins.iter().all(|&m| m >= 0.0),
        threshold,
        dist_truth,
        max_ghost_prox,
        max_ghost_truth,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{generate_ground_truth, BasisStyle};
    use crate::init::{InitScheme, InitSpec};
    use crate::matops::orthonormality_defect;
    use crate::optimizer::{run, EtaRule, RunStatus};
    use crate::sampling::sample_mask;

    fn config(d: usize, r: usize, rp: usize, p: f64, alpha: f64, iters: usize) -> RunConfig {
        let gt = generate_ground_truth(d, r, 2.0, 1.0, BasisStyle::Haar, 21).unwrap();
        RunConfig {
            obs: sample_mask(d, p, 21).unwrap(),
            gt,
            init: InitSpec {
                scheme: InitScheme::Gaussian,
                r_prime: rp,
                alpha,
                seed: 5,
            },
            eta_rule: EtaRule::Theorem(0.25),
            max_iters: iters,
            stop_tol: 0.0,
            record_every: 1,
            capture_streams: true,
        }
    }

    #[test]
    fn full_observation_ghost_matches_main() {
        let cfg = config(12, 2, 4, 1.0, 1e-2, 60);
        let out = run(&cfg).unwrap();
        let streams = out.streams.unwrap();
        let ghost = run_classical_loo(&cfg, 3, streams.len() - 1).unwrap();
        assert_eq!(ghost.states, streams.u);
    }

    #[test]
    fn frozen_ghost_keeps_initial_factor() {
        let mut cfg = config(10, 2, 3, 0.5, 1e-2, 5);
        cfg.eta_rule = EtaRule::Explicit(1e-300);
        let ghost = run_classical_loo(&cfg, 0, 5).unwrap();
        for s in &ghost.states {
            assert_eq!(s, &ghost.states[0]);
        }
    }

    #[test]
    fn out_of_range_index() {
        let cfg = config(10, 2, 3, 0.5, 1e-2, 5);
        assert!(matches!(
            run_classical_loo(&cfg, 10, 3),
            Err(Error::IndexOutOfRange { index: 10, d: 10 })
        ));
    }

    #[test]
    fn classical_ghost_ignores_row_l_of_mask() {
        let cfg = config(15, 2, 4, 0.5, 1e-2, 40);
        let l = 6;
        let mut mask = cfg.obs.mask_bytes().to_vec();
        for k in 0..15 {
            mask[l * 15 + k] ^= 1;
            mask[k * 15 + l] ^= (k % 2) as u8;
        }
        let mut cfg2 = cfg.clone();
        cfg2.obs = ObservationSet::from_mask(15, 0.5, 0, mask).unwrap();
        let a = run_classical_loo(&cfg, l, 40).unwrap();
        let b = run_classical_loo(&cfg2, l, 40).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weakly_coupled_starts_at_truth_and_stays_orthonormal() {
        let cfg = config(30, 2, 6, 0.5, 1e-3, 150);
        let out = run(&cfg).unwrap();
        let s = out.streams.unwrap();
        let ghost = run_weakly_coupled_loo(&s.sigma, &cfg.gt, &cfg.obs, out.eta, 4).unwrap();
        assert_eq!(ghost.len(), s.len());
        assert_eq!(&ghost.states[0], cfg.gt.basis.matrix());
        for st in &ghost.states {
            assert!(orthonormality_defect(st) < 1e-10);
        }
        let main_v: Vec<DenseMatrix> = s.v.iter().map(|b| b.matrix().clone()).collect();
        let rows = ghost_rows(&ghost, &main_v, &cfg.gt).unwrap();
        assert_eq!(rows[0].prox_err, 0.0);
    }

    #[test]
    fn weakly_coupled_depends_on_mask_only_through_sigma() {
        let cfg = config(20, 2, 5, 0.5, 1e-3, 80);
        let out = run(&cfg).unwrap();
        let sigma = out.streams.unwrap().sigma;
        let l = 3;
        let mut mask = cfg.obs.mask_bytes().to_vec();
        for k in 0..20 {
            mask[l * 20 + k] ^= 1;
        }
        let other = ObservationSet::from_mask(20, 0.5, 0, mask).unwrap();
        let a = run_weakly_coupled_loo(&sigma, &cfg.gt, &cfg.obs, out.eta, l).unwrap();
        let b = run_weakly_coupled_loo(&sigma, &cfg.gt, &other, out.eta, l).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coupled_case_at_full_observation() {
        // p = 1, r' = r and U_0 inside span V*: ghosts replay V_t exactly
        let mut cfg = config(16, 2, 2, 1.0, 1e-2, 50);
        let observed = ObservedEntries::from_full(cfg.obs.clone(), &materialize(&cfg.gt)).unwrap();
        let u0 = cfg.gt.basis.matrix() * 0.01;
        let state = crate::optimizer::IterateState::new(0, u0, cfg.gt.basis.clone()).unwrap();
        cfg.capture_streams = true;
        let oracle = crate::optimizer::Oracle::new(cfg.gt.clone());
        let eta = cfg.eta().unwrap();
        let out = crate::optimizer::run_from(&cfg, state, eta, &oracle, &observed).unwrap();
        let s = out.streams.unwrap();
        let ghost = run_weakly_coupled_loo(&s.sigma, &cfg.gt, &cfg.obs, eta, 7).unwrap();
        let main_v: Vec<DenseMatrix> = s.v.iter().map(|b| b.matrix().clone()).collect();
        for row in ghost_rows(&ghost, &main_v, &cfg.gt).unwrap() {
            assert!(row.prox_err < 1e-12, "t = {}: {}", row.t, row.prox_err);
        }
    }

    #[test]
    fn missing_sigma_stream() {
        let cfg = config(10, 2, 3, 0.5, 1e-2, 5);
        assert!(matches!(
            run_weakly_coupled_loo(&[], &cfg.gt, &cfg.obs, 0.1, 0),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn budget_at_start_is_the_base_term() {
        let cfg = config(24, 2, 4, 0.5, 1e-3, 10);
        let out = run(&cfg).unwrap();
        let s = out.streams.unwrap();
        let ghosts: Vec<LooGhost> = (0..24)
            .map(|l| run_weakly_coupled_loo(&s.sigma, &cfg.gt, &cfg.obs, out.eta, l).unwrap())
            .collect();
        let b0 = incoherence_budget(&s.v[0], &ghosts, &cfg.gt, 0).unwrap();
        assert_eq!(b0.loo_err, 0.0);
        assert_eq!(b0.prox_err, 0.0);
        assert!((b0.actual - b0.base).abs() < 1e-12);
        for t in 0..s.len() {
            let b = incoherence_budget(&s.v[t], &ghosts, &cfg.gt, t).unwrap();
            assert!(b.holds(24));
        }
        assert!(incoherence_budget(&s.v[0], &ghosts, &cfg.gt, 99).is_err());
    }

    #[test]
    fn sampled_indices_are_reproducible() {
        let a = sample_indices(100, 8, 3);
        assert_eq!(a, sample_indices(100, 8, 3));
        assert_eq!(a.len(), 8);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_indices(5, 16, 0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn basin_at_truth_and_far_away() {
        let gt = generate_ground_truth(50, 2, 2.0, 1.0, BasisStyle::Haar, 0).unwrap();
        let ustar = gt.factor();
        let at = basin_entry_check(&ustar, &[&ustar, &ustar], &gt, 0.5, 1e-6).unwrap();
        assert!(at.entered);
        assert!(at.margins.iter().all(|&m| (m - at.threshold).abs() < 1e-12));

        let far = DenseMatrix::from_element(50, 2, 10.0);
        let out = basin_entry_check(&far, &[&far], &gt, 0.5, 1.0).unwrap();
        assert!(!out.entered);
        assert!(basin_entry_check(&DenseMatrix::zeros(50, 3), &[], &gt, 0.5, 1.0).is_err());
    }

    #[test]
    fn exact_run_enters_basin() {
        let cfg = config(40, 2, 2, 0.6, 1e-3, 400);
        let mut cfg = cfg;
        cfg.stop_tol = 1e-8;
        let out = run(&cfg).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        let s = out.streams.unwrap();
        let ghosts: Vec<LooGhost> = sample_indices(40, 6, 0)
            .into_iter()
            .map(|l| run_classical_loo(&cfg, l, s.len() - 1).unwrap())
            .collect();
        let last = s.len() - 1;
        let at: Vec<&DenseMatrix> = ghosts.iter().map(|g| &g.states[last]).collect();
        let entry = basin_entry_check(&s.u[last], &at, &cfg.gt, 0.6, 1.0).unwrap();
        assert!(entry.entered);
    }
}
