//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export has a plain Rust counterpart returning `Result<_, String>` so
//! the numerics can be tested off the browser; the `#[wasm_bindgen]` wrappers
//! only translate errors into JavaScript exceptions.

use mc_implicit::init::{alignment_score, init_direction, InitScheme, InitSpec};
use mc_implicit::rng::StreamKey;
use mc_implicit::{
    generate_ground_truth, materialize, run, sample_mask, BasisStyle, EtaRule, GroundTruth,
    ObservedEntries, RunConfig, RunStatus,
};
use wasm_bindgen::prelude::*;

/// Plot resolution: at most this many points per trajectory.
const MAX_POINTS: usize = 400;

/// Shared problem description used by every export.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub d: usize,
    pub r: usize,
    pub kappa: f64,
    pub p: f64,
    pub seed: u64,
}

#[wasm_bindgen]
impl Problem {
    #[wasm_bindgen(constructor)]
    pub fn new(d: usize, r: usize, kappa: f64, p: f64, seed: u64) -> Problem {
        Problem {
            d,
            r,
            kappa,
            p,
            seed,
        }
    }
}

impl Problem {
    fn instance(&self) -> Result<(GroundTruth, ObservedEntries), String> {
        let key = StreamKey::new(self.seed, "demo");
        let gt = generate_ground_truth(
            self.d,
            self.r,
            self.kappa,
            1.0,
            BasisStyle::Haar,
            key.clone().with_str("ground-truth").seed(),
        )
        .map_err(|e| e.to_string())?;
        let obs = sample_mask(self.d, self.p, key.with_str("mask").with_f64(self.p).seed())
            .map_err(|e| e.to_string())?;
        let observed =
            ObservedEntries::from_full(obs, &materialize(&gt)).map_err(|e| e.to_string())?;
        Ok((gt, observed))
    }

    fn init_seed(&self, r_prime: usize) -> u64 {
        StreamKey::new(self.seed, "demo")
            .with_str("init")
            .with_u64(r_prime as u64)
            .seed()
    }
}

/// A recorded GD run, one entry per plotted iterate.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Trajectory {
    t: Vec<f64>,
    rel_err: Vec<f64>,
    signal: Vec<f64>,
    residual: Vec<f64>,
    eta: f64,
    mu: f64,
    diverged: bool,
}

#[wasm_bindgen]
impl Trajectory {
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }

    /// `||U U^T - X*||_F / ||X*||_F`.
    pub fn rel_err(&self) -> Vec<f64> {
        self.rel_err.clone()
    }

    /// `sigma_r(S_t)`, the weakest signal direction.
    pub fn signal(&self) -> Vec<f64> {
        self.signal.clone()
    }

    /// `||E_t||`, the residual outside the dynamic basis.
    pub fn residual(&self) -> Vec<f64> {
        self.residual.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[wasm_bindgen(getter)]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[wasm_bindgen(getter)]
    pub fn diverged(&self) -> bool {
        self.diverged
    }
}

impl Trajectory {
    pub fn final_rel_err(&self) -> f64 {
        self.rel_err.last().copied().unwrap_or(f64::NAN)
    }
}

/// Gaussian initialization `U_0 = alpha Z` at search rank `r_prime`, then
/// `iters` steps with the theorem step size.
pub fn simulate(
    problem: &Problem,
    r_prime: usize,
    alpha: f64,
    iters: usize,
) -> Result<Trajectory, String> {
    let (gt, observed) = problem.instance()?;
    let xstar_fro = materialize(&gt).norm();
    let mu = gt.mu;
    let config = RunConfig {
        gt,
        obs: observed.obs().clone(),
        init: InitSpec {
            scheme: InitScheme::Gaussian,
            r_prime,
            alpha,
            seed: problem.init_seed(r_prime),
        },
        eta_rule: EtaRule::default(),
        max_iters: iters,
        stop_tol: 0.0,
        record_every: iters.div_ceil(MAX_POINTS).max(1),
        capture_streams: false,
    };
    let out = run(&config).map_err(|e| e.to_string())?;
    Ok(Trajectory {
        t: out.trace.iter().map(|rec| rec.t as f64).collect(),
        rel_err: out
            .trace
            .iter()
            .map(|rec| rec.err_fro / xstar_fro)
            .collect(),
        signal: out.trace.iter().map(|rec| rec.sig_min).collect(),
        residual: out.trace.iter().map(|rec| rec.res_norm).collect(),
        eta: out.eta,
        mu,
        diverged: out.status == RunStatus::Diverged,
    })
}

/// Final relative error for each initialization scale, same mask and
/// direction throughout.
pub fn sweep_alpha(
    problem: &Problem,
    r_prime: usize,
    alphas: &[f64],
    iters: usize,
) -> Result<Vec<f64>, String> {
    alphas
        .iter()
        .map(|&a| simulate(problem, r_prime, a, iters).map(|tr| tr.final_rel_err()))
        .collect()
}

/// `sigma_r(V*^T Z)` for the named initialization scheme.
pub fn init_alignment(problem: &Problem, scheme: &str, r_prime: usize) -> Result<f64, String> {
    let scheme = match scheme {
        "gaussian" => InitScheme::Gaussian,
        "orthogonal" => InitScheme::Orthogonal,
        "spectral" => InitScheme::Spectral,
        other => return Err(format!("unknown scheme `{other}`")),
    };
    let (gt, observed) = problem.instance()?;
    let spec = InitSpec {
        scheme,
        r_prime,
        alpha: 1.0,
        seed: problem.init_seed(r_prime),
    };
    let z = init_direction(&spec, &observed).map_err(|e| e.to_string())?;
    alignment_score(&z, &gt.basis).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn trajectory(
    problem: &Problem,
    r_prime: usize,
    alpha: f64,
    iters: usize,
) -> Result<Trajectory, JsError> {
    simulate(problem, r_prime, alpha, iters).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = alphaSweep)]
pub fn alpha_sweep(
    problem: &Problem,
    r_prime: usize,
    alphas: Vec<f64>,
    iters: usize,
) -> Result<Vec<f64>, JsError> {
    sweep_alpha(problem, r_prime, &alphas, iters).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn alignment(problem: &Problem, scheme: &str, r_prime: usize) -> Result<f64, JsError> {
    init_alignment(problem, scheme, r_prime).map_err(|e| JsError::new(&e))
}
