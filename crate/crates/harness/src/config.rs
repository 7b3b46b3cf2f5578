//! Experiment configuration: parsing, validation, grid expansion and seed
//! derivation.

use std::path::Path;

use mc_implicit::init::{theorem_alpha, DEFAULT_C_ALPHA};
use mc_implicit::loo::{LooKind, DEFAULT_BASIN_CONSTANT};
use mc_implicit::rng::StreamKey;
use mc_implicit::verify::{DEFAULT_C_MAX, DEFAULT_GAMMA1};
use mc_implicit::{BasisStyle, EtaRule, GroundTruth, InitScheme};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// Either a single value or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(vs) => vs.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::One(_) => 1,
            Grid::Many(vs) => vs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Initialization scale: a literal value, or the exact-parameterization rule
/// `c * sigma_r / (kappa^1.5 d)` with the given `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Rule { theorem: f64 },
}

impl AlphaSpec {
    pub fn resolve(&self, gt: &GroundTruth) -> f64 {
        match *self {
            AlphaSpec::Value(a) => a,
            AlphaSpec::Rule { theorem } => theorem_alpha(gt, theorem),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSpec {
    pub d: usize,
    pub r: usize,
    pub kappa: f64,
    #[serde(default = "one")]
    pub sigma1: f64,
    #[serde(default = "haar")]
    pub basis_style: BasisStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub p: Grid<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub scheme: InitScheme,
    pub r_prime: Grid<usize>,
    pub alpha: Grid<AlphaSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default)]
    pub eta_rule: EtaRule,
    pub max_iters: usize,
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default = "one_usize")]
    pub record_every: usize,
}

/// Which ghosts to build: `"all"`, `"sample:k"`, or an explicit index list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GhostSelection {
    Named(String),
    Indices(Vec<usize>),
}

/// `min(d, 16)` seeded indices.
impl Default for GhostSelection {
    fn default() -> Self {
        GhostSelection::Named("sample:16".into())
    }
}

impl GhostSelection {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let s = s.trim();
        if s == "all" || s.starts_with("sample:") {
            let sel = GhostSelection::Named(s.to_string());
            sel.check()?;
            return Ok(sel);
        }
        let indices = s
            .split(',')
            .map(|tok| tok.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| {
                HarnessError::usage(
                    "ghosts",
                    format!(
                        "expected `all`, `sample:k` or a comma-separated index list, got `{s}`"
                    ),
                )
            })?;
        Ok(GhostSelection::Indices(indices))
    }

    fn check(&self) -> Result<(), HarnessError> {
        if let GhostSelection::Named(s) = self {
            if s == "all" {
                return Ok(());
            }
            match s.strip_prefix("sample:").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => {}
                _ => {
                    return Err(HarnessError::usage(
                        "diagnostics.loo.ghosts",
                        format!(
                            "expected `all`, `sample:k` with k >= 1, or an index list, got `{s}`"
                        ),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Sorted ghost indices for a `d`-dimensional problem.
    pub fn indices(&self, d: usize, seed: u64) -> Result<Vec<usize>, HarnessError> {
        self.check()?;
        let out = match self {
            GhostSelection::Named(s) if s == "all" => (0..d).collect(),
            GhostSelection::Named(s) => {
                let k: usize = s["sample:".len()..].parse().expect("checked above");
                mc_implicit::loo::sample_indices(d, k.min(d), seed)
            }
            GhostSelection::Indices(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                if let Some(&bad) = v.iter().find(|&&l| l >= d) {
                    return Err(HarnessError::usage(
                        "ghosts",
                        format!("ghost index {bad} out of range for d = {d}"),
                    ));
                }
                v
            }
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooSpec {
    #[serde(default)]
    pub ghosts: GhostSelection,
    pub kinds: Vec<LooKind>,
    #[serde(default = "basin_constant")]
    pub basin_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default = "gamma1")]
    pub gamma1: f64,
    #[serde(default = "c_max")]
    pub c_max: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            gamma1: DEFAULT_GAMMA1,
            c_max: DEFAULT_C_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default = "yes")]
    pub checks: bool,
    #[serde(default)]
    pub check_params: CheckParams,
    #[serde(default)]
    pub loo: Option<LooSpec>,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            checks: true,
            check_params: CheckParams::default(),
            loo: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Replication {
    pub n_seeds: usize,
}

impl Default for Replication {
    fn default() -> Self {
        Self { n_seeds: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory. Relative paths resolve against the output root.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "yes")]
    pub svg: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    pub ground_truth: GroundTruthSpec,
    pub sampling: SamplingSpec,
    pub init: InitConfig,
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub replication: Replication,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn haar() -> BasisStyle {
    BasisStyle::Haar
}
fn gamma1() -> f64 {
    DEFAULT_GAMMA1
}
fn c_max() -> f64 {
    DEFAULT_C_MAX
}
fn basin_constant() -> f64 {
    DEFAULT_BASIN_CONSTANT
}

/// One point of the Cartesian product of grid axes and replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub p: f64,
    pub r_prime: usize,
    pub alpha: AlphaSpec,
    pub replicate: usize,
}

/// Seeds handed to the core library for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSeeds {
    pub ground_truth: u64,
    pub mask: u64,
    pub init: u64,
    pub ghosts: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::Usage {
                field: path,
                reason: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, reason: String| Err(HarnessError::usage(field, reason));
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(
                "name",
                format!("must be a nonempty plain file name, got `{}`", self.name),
            );
        }
        let g = &self.ground_truth;
        if g.r == 0 || g.r > g.d {
            return bad(
                "ground_truth.r",
                format!("need 1 <= r <= d = {}, got {}", g.d, g.r),
            );
        }
        if !(g.kappa >= 1.0) || !g.kappa.is_finite() {
            return bad(
                "ground_truth.kappa",
                format!("need kappa >= 1, got {}", g.kappa),
            );
        }
        if !(g.sigma1 > 0.0) || !g.sigma1.is_finite() {
            return bad(
                "ground_truth.sigma1",
                format!("need sigma1 > 0, got {}", g.sigma1),
            );
        }
        if self.sampling.p.is_empty() {
            return bad("sampling.p", "grid is empty".into());
        }
        for p in self.sampling.p.values() {
            if !(p > 0.0 && p <= 1.0) {
                return bad("sampling.p", format!("need 0 < p <= 1, got {p}"));
            }
        }
        if self.init.r_prime.is_empty() {
            return bad("init.r_prime", "grid is empty".into());
        }
        for rp in self.init.r_prime.values() {
            if rp == 0 || rp > g.d {
                return bad(
                    "init.r_prime",
                    format!("need 1 <= r' <= d = {}, got {rp}", g.d),
                );
            }
        }
        if self.init.alpha.is_empty() {
            return bad("init.alpha", "grid is empty".into());
        }
        for a in self.init.alpha.values() {
            let v = match a {
                AlphaSpec::Value(v) => v,
                AlphaSpec::Rule { theorem } => theorem,
            };
            if !(v >= 0.0) || !v.is_finite() {
                return bad(
                    "init.alpha",
                    format!("need a finite nonnegative scale, got {v}"),
                );
            }
        }
        let o = &self.optimizer;
        if o.max_iters == 0 {
            return bad("optimizer.max_iters", "must be at least 1".into());
        }
        if o.record_every == 0 {
            return bad("optimizer.record_every", "must be at least 1".into());
        }
        if !(o.stop_tol >= 0.0) {
            return bad(
                "optimizer.stop_tol",
                format!("must be nonnegative, got {}", o.stop_tol),
            );
        }
        match o.eta_rule {
            EtaRule::Explicit(v) | EtaRule::Theorem(v) if !(v > 0.0) || !v.is_finite() => {
                return bad(
                    "optimizer.eta_rule",
                    format!("constant must be positive, got {v}"),
                );
            }
            _ => {}
        }
        if self.replication.n_seeds == 0 {
            return bad("replication.n_seeds", "must be at least 1".into());
        }
        if let Some(loo) = &self.diagnostics.loo {
            loo.ghosts.check()?;
            if loo.kinds.is_empty() {
                return bad("diagnostics.loo.kinds", "list is empty".into());
            }
            if loo.kinds.contains(&LooKind::WeaklyCoupled) && o.record_every != 1 {
                return bad(
                    "diagnostics.loo.kinds",
                    "weakly-coupled ghosts need optimizer.record_every = 1".into(),
                );
            }
        }
        Ok(())
    }

    /// All cells, ordered by `(p, r', alpha, replicate)` in grid order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for p in self.sampling.p.values() {
            for r_prime in self.init.r_prime.values() {
                for alpha in self.init.alpha.values() {
                    for replicate in 0..self.replication.n_seeds {
                        out.push(Cell {
                            p,
                            r_prime,
                            alpha,
                            replicate,
                        });
                    }
                }
            }
        }
        out
    }

    /// Seeds for a cell. Each seed depends only on the master seed, a purpose
    /// label and the coordinates that consumer actually uses: the ground truth
    /// on the replicate, the mask on `(replicate, p)`, the initialization
    /// direction on `(replicate, r')`. Cells that differ only in `alpha` share
    /// their direction, and cells that differ only in `r'` share their mask.
    pub fn seeds(&self, cell: &Cell) -> CellSeeds {
        let m = self.master_seed;
        let rep = cell.replicate as u64;
        CellSeeds {
            ground_truth: StreamKey::new(m, "ground-truth").with_u64(rep).seed(),
            mask: StreamKey::new(m, "mask")
                .with_u64(rep)
                .with_f64(cell.p)
                .seed(),
            init: StreamKey::new(m, "init")
                .with_u64(rep)
                .with_u64(cell.r_prime as u64)
                .seed(),
            ghosts: StreamKey::new(m, "ghosts").with_u64(rep).seed(),
        }
    }
}

pub const DEFAULT_ALPHA_RULE: AlphaSpec = AlphaSpec::Rule {
    theorem: DEFAULT_C_ALPHA,
};

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "name": "minimal",
        "ground_truth": {"d": 10, "r": 2, "kappa": 2.0},
        "sampling": {"p": 1.0},
        "init": {"scheme": "gaussian", "r_prime": 10, "alpha": 0.001},
        "optimizer": {"max_iters": 50}
    }"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.ground_truth.sigma1, 1.0);
        assert_eq!(cfg.optimizer.eta_rule, EtaRule::Theorem(0.25));
        assert_eq!(cfg.optimizer.record_every, 1);
        assert_eq!(cfg.replication.n_seeds, 1);
        assert_eq!(cfg.cells().len(), 1);
    }

    #[test]
    fn unknown_field_names_its_path() {
        let text = MINIMAL.replace("\"kappa\": 2.0", "\"kappa\": 2.0, \"kapa\": 3");
        match ExperimentConfig::from_json(&text) {
            Err(HarnessError::Usage { field, reason }) => {
                assert_eq!(field, "ground_truth.kapa");
                assert!(reason.contains("kapa"), "{reason}");
            }
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn type_error_names_its_path() {
        let text = MINIMAL.replace("\"max_iters\": 50", "\"max_iters\": \"many\"");
        match ExperimentConfig::from_json(&text) {
            Err(HarnessError::Usage { field, .. }) => assert_eq!(field, "optimizer.max_iters"),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn semantic_validation() {
        for (from, to, field) in [
            ("\"p\": 1.0", "\"p\": 1.5", "sampling.p"),
            ("\"p\": 1.0", "\"p\": []", "sampling.p"),
            ("\"r_prime\": 10", "\"r_prime\": 11", "init.r_prime"),
            (
                "\"schema_version\": 1",
                "\"schema_version\": 2",
                "schema_version",
            ),
            ("\"kappa\": 2.0", "\"kappa\": 0.5", "ground_truth.kappa"),
        ] {
            let text = MINIMAL.replace(from, to);
            match ExperimentConfig::from_json(&text) {
                Err(HarnessError::Usage { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{to}: expected usage error, got {other:?}"),
            }
        }
    }

    #[test]
    fn weakly_coupled_needs_full_resolution() {
        let text = MINIMAL.replace(
            "\"max_iters\": 50}",
            "\"max_iters\": 50, \"record_every\": 5}, \"diagnostics\": {\"loo\": {\"ghosts\": \"sample:2\", \"kinds\": [\"weakly_coupled\"]}}",
        );
        assert!(matches!(
            ExperimentConfig::from_json(&text),
            Err(HarnessError::Usage { .. })
        ));
    }

    #[test]
    fn grids_expand_in_order() {
        let text = MINIMAL
            .replace("\"p\": 1.0", "\"p\": [0.5, 1.0]")
            .replace("\"alpha\": 0.001", "\"alpha\": [0.01, {\"theorem\": 0.1}]")
            .replace(
                "\"max_iters\": 50}",
                "\"max_iters\": 50}, \"replication\": {\"n_seeds\": 2}",
            );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0].p, 0.5);
        assert_eq!(cells[0].replicate, 0);
        assert_eq!(cells[1].replicate, 1);
        assert_eq!(cells[2].alpha, AlphaSpec::Rule { theorem: 0.1 });
        assert_eq!(cells[7].p, 1.0);
    }

    #[test]
    fn seeds_ignore_unrelated_axes() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let base = Cell {
            p: 0.5,
            r_prime: 3,
            alpha: AlphaSpec::Value(1e-3),
            replicate: 0,
        };
        let s = cfg.seeds(&base);
        let other_alpha = cfg.seeds(&Cell {
            alpha: AlphaSpec::Value(1e-5),
            ..base
        });
        assert_eq!(s, other_alpha);
        let other_rp = cfg.seeds(&Cell {
            r_prime: 20,
            ..base
        });
        assert_eq!(s.mask, other_rp.mask);
        assert_ne!(s.init, other_rp.init);
        let other_p = cfg.seeds(&Cell { p: 0.8, ..base });
        assert_eq!(s.ground_truth, other_p.ground_truth);
        assert_ne!(s.mask, other_p.mask);
        let other_rep = cfg.seeds(&Cell {
            replicate: 1,
            ..base
        });
        assert_ne!(s.ground_truth, other_rep.ground_truth);
    }

    #[test]
    fn ghost_selection_parsing() {
        assert_eq!(
            GhostSelection::parse("3, 1,3")
                .unwrap()
                .indices(10, 0)
                .unwrap(),
            vec![1, 3]
        );
        assert_eq!(
            GhostSelection::parse("all").unwrap().indices(4, 0).unwrap(),
            vec![0, 1, 2, 3]
        );
        let a = GhostSelection::parse("sample:8")
            .unwrap()
            .indices(100, 7)
            .unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(
            a,
            GhostSelection::parse("sample:8")
                .unwrap()
                .indices(100, 7)
                .unwrap()
        );
        assert!(GhostSelection::parse("sample:0").is_err());
        assert!(GhostSelection::parse("x").is_err());
        assert!(GhostSelection::parse("12").unwrap().indices(10, 0).is_err());
        assert_eq!(GhostSelection::default().indices(100, 1).unwrap().len(), 16);
        assert_eq!(GhostSelection::default().indices(9, 1).unwrap().len(), 9);
    }
}
