//! Declarative TOML experiment files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::inline::InlineProblem;
use crate::error::{Error, Result};
use crate::problem::{builtins, ProblemSpec};
use crate::solver::RegressionConfig;
use crate::verify::{AprioriCase, BETA_LADDER};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            n_steps: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Required: there is no entropy-seeded default.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_paths() -> usize {
    10_000
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    /// `0` means a single explicit backward pass.
    pub k_max: usize,
    pub tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { k_max: 0, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub regression: RegressionConfig,
    pub picard: PicardConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItoProcess {
    /// `X = W^1`.
    Brownian,
    /// `X = 1 + N^1`, drift cancelling the compensator.
    Counting,
    /// Forward dynamics of the solved triple.
    Solution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// One verifier invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// Integral-form defect of the solution.
    Residual,
    /// All eight weighted norms.
    Norms,
    /// Errors against the closed-form solution of an oracle builtin.
    Oracle,
    /// Randomized hypothesis probes.
    Probe {
        #[serde(default = "d_probe_samples")]
        samples: usize,
    },
    Remark21 {
        #[serde(default = "d_sigmas")]
        slack_sigmas: f64,
    },
    Lemma31 {
        #[serde(default = "d_lemma_samples")]
        samples: usize,
        #[serde(default = "d_p_min")]
        p_min: f64,
        #[serde(default = "d_p_max")]
        p_max: f64,
        #[serde(default = "d_dim")]
        dim: usize,
    },
    Lemma33,
    Ito {
        #[serde(default)]
        mu: f64,
        #[serde(default = "d_process")]
        process: ItoProcess,
        /// Coarsening factors of the configured grid.
        #[serde(default = "d_ito_levels")]
        coarsen: Vec<usize>,
    },
    Apriori {
        case: AprioriCase,
        /// Second problem of difference cases.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        partner: Option<String>,
        #[serde(default = "d_lambda")]
        lambda: f64,
    },
    Contraction {
        #[serde(default = "d_rho")]
        rho: f64,
        #[serde(default = "d_multiples")]
        multiples: Vec<f64>,
    },
    Localization {
        #[serde(default = "d_levels")]
        levels: Vec<f64>,
    },
    Uniqueness {
        #[serde(default = "d_scale")]
        scale: f64,
    },
    Picard,
}

fn d_probe_samples() -> usize {
    2000
}
fn d_sigmas() -> f64 {
    3.0
}
fn d_lemma_samples() -> usize {
    10_000
}
fn d_p_min() -> f64 {
    2.0 + 1e-9
}
fn d_p_max() -> f64 {
    6.0
}
fn d_dim() -> usize {
    2
}
fn d_process() -> ItoProcess {
    ItoProcess::Brownian
}
fn d_ito_levels() -> Vec<usize> {
    vec![8, 4, 2, 1]
}
fn d_lambda() -> f64 {
    2.0
}
fn d_rho() -> f64 {
    1.0
}
fn d_multiples() -> Vec<f64> {
    BETA_LADDER.to_vec()
}
fn d_levels() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn d_scale() -> f64 {
    1.0
}

impl Check {
    pub fn kind(&self) -> &'static str {
        match self {
            Check::Residual => "residual",
            Check::Norms => "norms",
            Check::Oracle => "oracle",
            Check::Probe { .. } => "probe",
            Check::Remark21 { .. } => "remark21",
            Check::Lemma31 { .. } => "lemma31",
            Check::Lemma33 => "lemma33",
            Check::Ito { .. } => "ito",
            Check::Apriori { .. } => "apriori",
            Check::Contraction { .. } => "contraction",
            Check::Localization { .. } => "localization",
            Check::Uniqueness { .. } => "uniqueness",
            Check::Picard => "picard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    /// Report name; defaults to the kind (plus the case for a priori checks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub check: Check,
}

impl CheckConfig {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.check {
            Check::Apriori { case, .. } => format!("apriori_{}", case.label()),
            c => c.kind().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("jbsde-out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

impl ExperimentConfig {
    /// Parses and validates TOML text; `origin` names the source in errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    Error::Config(format!("{origin}:{line}:{col}: {msg}"))
                }
                None => Error::Config(format!("{origin}: {msg}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.ensemble.seed.ok_or_else(|| {
            Error::Config("ensemble.seed is required: runs are never seeded from entropy".into())
        })
    }

    /// The problem with `p`, `beta` and `epsilon` overrides applied.
    pub fn build_problem(&self) -> Result<ProblemSpec> {
        let pc = &self.problem;
        let mut prob = match (&pc.builtin, &pc.inline) {
            (Some(name), None) => builtins::builtin(name).map_err(|e| Error::Config(format!("problem.builtin: {e}")))?,
            (None, Some(inline)) => inline.to_problem()?,
            _ => {
                return Err(Error::Config(
                    "problem: give exactly one of `builtin` and `inline`".into(),
                ))
            }
        };
        if let Some(p) = pc.p {
            prob.p = p;
        }
        if let Some(b) = pc.beta {
            prob.beta = b;
        }
        if let Some(e) = pc.epsilon {
            prob.epsilon = e;
        }
        Ok(prob)
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let prob = self.build_problem()?;
        if !(prob.p > 1.0 && prob.p.is_finite()) {
            return Err(Error::Config(format!("problem.p must exceed 1, got {}", prob.p)));
        }
        if !(prob.beta > 0.0 && prob.beta.is_finite()) {
            return Err(Error::Config(format!("problem.beta must be positive, got {}", prob.beta)));
        }
        if !(prob.epsilon > 0.0 && prob.epsilon.is_finite()) {
            return Err(Error::Config(format!("problem.epsilon must be positive, got {}", prob.epsilon)));
        }
        prob.validate().map_err(|e| Error::Config(format!("problem: {e}")))?;
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) || self.grid.n_steps == 0 {
            return Err(Error::Config("grid: need horizon > 0 and n_steps >= 1".into()));
        }
        if self.ensemble.n_paths < 2 {
            return Err(Error::Config("ensemble.n_paths must be at least 2".into()));
        }
        self.scheme
            .regression
            .validate()
            .map_err(|e| Error::Config(format!("scheme.regression: {e}")))?;
        if !(self.scheme.picard.tol > 0.0) {
            return Err(Error::Config("scheme.picard.tol must be positive".into()));
        }
        let mut labels: Vec<String> = self.checks.iter().map(CheckConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "check name `{}` appears twice; give one a `name`",
                w[0]
            )));
        }
        for c in &self.checks {
            match &c.check {
                Check::Apriori { case, partner, .. } => {
                    let single = matches!(case, AprioriCase::Cor42 | AprioriCase::Cor44);
                    if !single && partner.is_none() {
                        return Err(Error::Config(format!(
                            "check `{}`: case {} needs a `partner` builtin",
                            c.label(),
                            case.label()
                        )));
                    }
                    if let Some(name) = partner {
                        builtins::builtin(name)
                            .map_err(|e| Error::Config(format!("check `{}`: partner: {e}", c.label())))?;
                    }
                }
                Check::Oracle => {
                    let ok = self
                        .problem
                        .builtin
                        .as_deref()
                        .is_some_and(|n| builtins::ORACLE_NAMES.contains(&n));
                    if !ok {
                        return Err(Error::Config(format!(
                            "check `{}`: oracle needs one of the builtins {}",
                            c.label(),
                            builtins::ORACLE_NAMES.join(", ")
                        )));
                    }
                }
                Check::Ito { coarsen, .. } => {
                    if coarsen.len() < 2 || coarsen.iter().any(|f| *f == 0 || self.grid.n_steps % f != 0) {
                        return Err(Error::Config(format!(
                            "check `{}`: need two or more coarsening factors dividing n_steps",
                            c.label()
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of everything but the output
    /// section. Key order in the source file does not matter.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputConfig::default();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// TOML text of the config with every default filled in.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[problem]\nbuiltin = \"zero\"\n[ensemble]\nseed = 1\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL, "t").unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!(c.ensemble.n_paths, 10_000);
        assert_eq!(c.scheme, SchemeConfig::default());
        let echoed = c.to_toml().unwrap();
        assert!(echoed.contains("n_steps = 64"), "{echoed}");
        assert_eq!(ExperimentConfig::from_toml(&echoed, "echo").unwrap(), c);
    }

    #[test]
    fn p_must_exceed_one() {
        let text = "[problem]\nbuiltin = \"zero\"\np = 1.0\n[ensemble]\nseed = 1\n";
        let e = ExperimentConfig::from_toml(text, "t").unwrap_err().to_string();
        assert!(e.contains("p must exceed 1"), "{e}");
    }

    #[test]
    fn missing_seed_is_explicit() {
        let e = ExperimentConfig::from_toml("[problem]\nbuiltin = \"zero\"\n", "t")
            .unwrap_err()
            .to_string();
        assert!(e.contains("seed is required"), "{e}");
    }

    #[test]
    fn parse_error_has_position() {
        let e = ExperimentConfig::from_toml("[problem]\nbuiltin = \n", "cfg.toml")
            .unwrap_err()
            .to_string();
        assert!(e.contains("cfg.toml:2:"), "{e}");
        let e = ExperimentConfig::from_toml("[problem]\nbuiltin = \"zero\"\nfoo = 1\n[ensemble]\nseed = 1\n", "c")
            .unwrap_err()
            .to_string();
        assert!(e.contains("c:3:"), "{e}");
    }

    #[test]
    fn hash_ignores_key_order_and_output() {
        let a = "[ensemble]\nseed = 3\nn_paths = 50\n[problem]\nbuiltin = \"zero\"\n[output]\ndir = \"x\"\n";
        let b = "[problem]\nbuiltin = \"zero\"\n[ensemble]\nn_paths = 50\nseed = 3\n";
        let (a, b) = (
            ExperimentConfig::from_toml(a, "a").unwrap(),
            ExperimentConfig::from_toml(b, "b").unwrap(),
        );
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml("[problem]\nbuiltin = \"zero\"\n[ensemble]\nn_paths = 51\nseed = 3\n", "c")
            .unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn checks_parse_with_defaults() {
        let text = r#"
[problem]
builtin = "brownian_terminal"
[ensemble]
seed = 1
[[checks]]
kind = "residual"
[[checks]]
kind = "lemma31"
samples = 100
[[checks]]
kind = "apriori"
case = "Pgt2_Y"
partner = "zero"
"#;
        let c = ExperimentConfig::from_toml(text, "t").unwrap();
        assert_eq!(c.checks.len(), 3);
        assert_eq!(
            c.checks[1].check,
            Check::Lemma31 {
                samples: 100,
                p_min: d_p_min(),
                p_max: 6.0,
                dim: 2
            }
        );
        assert_eq!(c.checks[2].label(), "apriori_Pgt2_Y");
    }

    #[test]
    fn duplicate_and_unresolvable_checks() {
        let dup = "[problem]\nbuiltin = \"zero\"\n[ensemble]\nseed = 1\n[[checks]]\nkind = \"norms\"\n[[checks]]\nkind = \"norms\"\n";
        assert!(ExperimentConfig::from_toml(dup, "t").is_err());
        let partner = "[problem]\nbuiltin = \"zero\"\n[ensemble]\nseed = 1\n[[checks]]\nkind = \"apriori\"\ncase = \"P2\"\n";
        assert!(ExperimentConfig::from_toml(partner, "t").is_err());
        let oracle = "[problem]\nbuiltin = \"lipschitz_z\"\n[ensemble]\nseed = 1\n[[checks]]\nkind = \"oracle\"\n";
        assert!(ExperimentConfig::from_toml(oracle, "t").is_err());
        let unknown = "[problem]\nbuiltin = \"nope\"\n[ensemble]\nseed = 1\n";
        assert!(ExperimentConfig::from_toml(unknown, "t").is_err());
    }

    #[test]
    fn inline_problem_parses() {
        let text = r#"
[problem.inline]
name = "mine"
jump_rates = [1.5]
generator = { constant = 0.2, y = -1.0, z = [0.5], u = [0.1], odd = [{ coeff = -1.0, power = 3 }] }
terminal = { linear = [1.0] }
[ensemble]
seed = 9
"#;
        let c = ExperimentConfig::from_toml(text, "t").unwrap();
        let p = c.build_problem().unwrap();
        assert_eq!(p.name, "mine");
        assert_eq!(p.n_marks(), 1);
    }
}
