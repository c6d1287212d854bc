//! Experiment configuration: a single JSON document with sections
//! `{alpha, model, budget, solve, simulate, output}`.
//!
//! The schema is strict — unknown keys anywhere are rejected with the parse
//! position — and the full parsed document is echoed into every report so a
//! run can be reproduced from its output alone. All sections are optional at
//! parse time; each command demands the sections it needs.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use response_core::contfrac::{CfError, PartialQuotientSource, RootSign};
use response_core::fourier::{FourierError, FourierField, ModelSpec};
use response_core::simulate::{Method, SimConfig, SimError};
use response_core::solver::SolveConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Cf(#[from] CfError),
    #[error("config error: {0}")]
    Model(#[from] FourierError),
    #[error("config error: {0}")]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn alpha_source(&self) -> Result<PartialQuotientSource, ConfigError> {
        match &self.alpha {
            Some(a) => a.to_source(),
            None => Err(ConfigError::Invalid(
                "an `alpha` section (or --alpha/--quotients shorthand) is required".into(),
            )),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let alpha = self.alpha_source()?;
        match &self.model {
            Some(m) => m.to_model(alpha),
            None => Err(ConfigError::Invalid("a `model` section is required".into())),
        }
    }

    /// Leading power 𝔫 for budget-type commands: explicit budget value,
    /// else the model's, else 3.
    pub fn budget_goth_n(&self) -> u32 {
        self.budget
            .as_ref()
            .and_then(|b| b.goth_n)
            .or_else(|| self.model.as_ref().map(|m| m.goth_n))
            .unwrap_or(3)
    }

    /// Forcing decay rate ξ for budget-type commands, defaulting as above.
    pub fn budget_xi(&self) -> f64 {
        self.budget
            .as_ref()
            .and_then(|b| b.xi)
            .or_else(|| self.model.as_ref().map(|m| m.xi))
            .unwrap_or(4.0)
    }
}

/// Frequency description: ω = (1, α) with α given by its continued fraction
/// or as a certified decimal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum AlphaConfig {
    /// Golden mean (1+√5)/2 = [1; 1, 1, …].
    Golden,
    /// √2 = [1; 2, 2, …].
    Sqrt2,
    /// Explicit partial quotients [a₀; tail…]; with `strict` false the last
    /// tail entry repeats forever, with `strict` true requests past the end
    /// fail as insufficiently certified.
    Quotients {
        a0: i64,
        tail: Vec<u64>,
        #[serde(default)]
        strict: bool,
    },
    /// Positive or negative root of a x² + b x + c = 0.
    Quadratic {
        a: i64,
        b: i64,
        c: i64,
        #[serde(default)]
        negative_root: bool,
    },
    /// Decimal string with a certified digit count.
    Decimal {
        digits: String,
        certified_digits: usize,
    },
}

impl AlphaConfig {
    pub fn to_source(&self) -> Result<PartialQuotientSource, ConfigError> {
        Ok(match self {
            AlphaConfig::Golden => PartialQuotientSource::golden(),
            AlphaConfig::Sqrt2 => PartialQuotientSource::sqrt2(),
            AlphaConfig::Quotients { a0, tail, strict } => {
                PartialQuotientSource::explicit(*a0, tail, *strict)?
            }
            AlphaConfig::Quadratic {
                a,
                b,
                c,
                negative_root,
            } => PartialQuotientSource::quadratic(
                *a,
                *b,
                *c,
                if *negative_root {
                    RootSign::Negative
                } else {
                    RootSign::Positive
                },
            )?,
            AlphaConfig::Decimal {
                digits,
                certified_digits,
            } => PartialQuotientSource::decimal(digits, *certified_digits)?,
        })
    }

    /// Parse the `--quotients "1,1,2"` shorthand: first number is a₀, the
    /// rest the periodic tail (a single number repeats itself).
    pub fn from_quotients_flag(text: &str) -> Result<AlphaConfig, ConfigError> {
        let nums: Vec<i64> = text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|e| ConfigError::Invalid(format!("bad quotient {t:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let (&a0, rest) = nums
            .split_first()
            .ok_or_else(|| ConfigError::Invalid("--quotients needs at least one number".into()))?;
        let tail: Vec<u64> = if rest.is_empty() {
            vec![u64::try_from(a0)
                .map_err(|_| ConfigError::Invalid("single quotient must be positive".into()))?]
        } else {
            rest.iter()
                .map(|&v| {
                    u64::try_from(v).map_err(|_| {
                        ConfigError::Invalid(format!("tail quotient {v} must be positive"))
                    })
                })
                .collect::<Result<_, _>>()?
        };
        Ok(AlphaConfig::Quotients {
            a0,
            tail,
            strict: false,
        })
    }
}

/// One forcing mode: sets f_ν and the conjugate f_{−ν} together so the
/// forcing stays real.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub nu: [i64; 2],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Leading power 𝔫 of the nonlinearity (odd, ≥ 3 unless `validation`).
    pub goth_n: u32,
    #[serde(default)]
    pub c: f64,
    /// Polynomial coefficients g_𝔫, g_{𝔫+1}, …; empty means g ≡ 0
    /// (requires goth_n = 1).
    #[serde(default)]
    pub g: Vec<f64>,
    pub f: Vec<ModeConfig>,
    pub xi: f64,
    /// Accept parameter combinations outside the main regime (even or
    /// linear 𝔫) for validation runs.
    #[serde(default)]
    pub validation: bool,
}

impl ModelConfig {
    pub fn to_model(&self, alpha: PartialQuotientSource) -> Result<ModelSpec, ConfigError> {
        let radius = self
            .f
            .iter()
            .map(|m| m.nu[0].abs().max(m.nu[1].abs()))
            .max()
            .unwrap_or(1)
            .max(1) as usize;
        let mut f = FourierField::new(radius);
        for m in &self.f {
            f.set_pair((m.nu[0], m.nu[1]), Complex64::new(m.re, m.im));
        }
        let spec = if self.g.is_empty() {
            if self.goth_n != 1 {
                return Err(ConfigError::Invalid(format!(
                    "empty g requires goth_n = 1, got {}",
                    self.goth_n
                )));
            }
            ModelSpec::without_nonlinearity(self.c, f, self.xi, alpha)?
        } else if self.validation {
            ModelSpec::for_validation(self.goth_n, self.c, self.g.clone(), f, self.xi, alpha)?
        } else {
            ModelSpec::new(self.goth_n, self.c, self.g.clone(), f, self.xi, alpha)?
        };
        Ok(spec)
    }
}

/// Parameters of the interval construction, the classification depth, and
/// the tree enumeration budget.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Override 𝔫 when no model section applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goth_n: Option<u32>,
    /// Override ξ when no model section applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    /// Smallness budget η₀ of the envelope construction (default 1e−4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    /// Number of intervals beyond the first (default 12).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Classification depth in convergent levels (default 20).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Explicit two-constant family I_n(C, C′) instead of the envelope: both
    /// constants plus the starting index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_start: Option<usize>,
    /// Tree enumeration budget (default 10_000_000 trees).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_budget: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_bif: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_bracket: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    /// Series order cap for the coefficient table (default 𝔫 + 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    /// Modes tabulated by the coefficient table (default: forcing support).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_list: Option<Vec<[i64; 2]>>,
    /// Offset ζ at which series coefficients are evaluated (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
}

impl SolveSection {
    /// Bare section for the `--eps` shorthand: ε set, everything else at the
    /// solver defaults.
    pub fn for_epsilon(epsilon: f64) -> Self {
        SolveSection {
            epsilon,
            n_modes: None,
            tol_range: None,
            tol_bif: None,
            max_newton: None,
            zeta_bracket: None,
            c1: None,
            t_span: None,
            t_points: None,
            k_max: None,
            nu_list: None,
            zeta: None,
        }
    }

    pub fn to_solve_config(&self) -> SolveConfig {
        let mut cfg = SolveConfig::for_epsilon(self.epsilon);
        if let Some(v) = self.n_modes {
            cfg.n_modes = v;
        }
        if let Some(v) = self.tol_range {
            cfg.tol_range = v;
        }
        if let Some(v) = self.tol_bif {
            cfg.tol_bif = v;
        }
        if let Some(v) = self.max_newton {
            cfg.max_newton = v;
        }
        if let Some(v) = self.zeta_bracket {
            cfg.zeta_bracket = Some(v);
        }
        if let Some(v) = self.c1 {
            cfg.c1 = v;
        }
        if let Some(v) = self.t_span {
            cfg.t_span = v;
        }
        if let Some(v) = self.t_points {
            cfg.t_points = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    ImplicitMidpoint,
    ImplicitEuler,
}

impl From<MethodConfig> for Method {
    fn from(m: MethodConfig) -> Method {
        match m {
            MethodConfig::ImplicitMidpoint => Method::ImplicitMidpoint,
            MethodConfig::ImplicitEuler => Method::ImplicitEuler,
        }
    }
}

fn default_method() -> MethodConfig {
    MethodConfig::ImplicitMidpoint
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub v0: f64,
    /// Start from the solved spectral state at t = 0 instead of (x0, v0).
    #[serde(default)]
    pub start_on_response: bool,
    #[serde(default = "default_method")]
    pub method: MethodConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max: Option<u32>,
}

impl SimulateSection {
    pub fn to_sim_config(&self, epsilon: f64, x0: f64, v0: f64) -> SimConfig {
        let mut sim = SimConfig::new(epsilon, self.t_end, self.dt, x0, v0, self.method.into());
        if let Some(v) = self.stride {
            sim.stride = v;
        }
        if let Some(v) = self.transient {
            sim.transient = Some(v);
        }
        if let Some(v) = self.newton_tol {
            sim.newton_tol = v;
        }
        if let Some(v) = self.newton_max {
            sim.newton_max = v;
        }
        sim
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// JSON report path (default: stdout).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    /// CSV artifact path (default: not written).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = r#"{ "alpha": {"kind": "golden"}, "extra": 1 }"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("extra"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
        let nested = r#"{ "model": { "goth_n": 3, "f": [], "xi": 4.0, "bogus": true } }"#;
        assert!(ExperimentConfig::from_json(nested).is_err());
    }

    #[test]
    fn alpha_kinds_round_trip() {
        for text in [
            r#"{"kind": "golden"}"#,
            r#"{"kind": "sqrt2"}"#,
            r#"{"kind": "quotients", "a0": 1, "tail": [2, 3]}"#,
            r#"{"kind": "quadratic", "a": 1, "b": 0, "c": -2}"#,
            r#"{"kind": "decimal", "digits": "1.4142135623730951", "certified_digits": 16}"#,
        ] {
            let cfg: AlphaConfig = serde_json::from_str(text).unwrap();
            cfg.to_source().unwrap();
            let back = serde_json::to_string(&cfg).unwrap();
            let again: AlphaConfig = serde_json::from_str(&back).unwrap();
            again.to_source().unwrap();
        }
    }

    #[test]
    fn quotients_shorthand_parses_like_golden() {
        let a = AlphaConfig::from_quotients_flag("1,1,1").unwrap();
        match &a {
            AlphaConfig::Quotients { a0, tail, strict } => {
                assert_eq!(*a0, 1);
                assert_eq!(tail, &vec![1, 1]);
                assert!(!strict);
            }
            other => panic!("unexpected {other:?}"),
        }
        let single = AlphaConfig::from_quotients_flag("2").unwrap();
        match single {
            AlphaConfig::Quotients { a0, tail, .. } => {
                assert_eq!(a0, 2);
                assert_eq!(tail, vec![2]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(AlphaConfig::from_quotients_flag("1,x").is_err());
        assert!(AlphaConfig::from_quotients_flag("").is_err());
    }

    #[test]
    fn model_section_builds_a_model() {
        let text = r#"{
            "alpha": {"kind": "golden"},
            "model": {
                "goth_n": 3,
                "g": [1.0],
                "f": [{"nu": [1, 0], "re": 0.5}, {"nu": [0, 1], "re": 0.5}],
                "xi": 4.0
            }
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let model = cfg.model_spec().unwrap();
        assert_eq!(model.goth_n, 3);
        assert_eq!(model.f_coeffs.get((1, 0)).re, 0.5);
        assert_eq!(model.f_coeffs.get((-1, 0)).re, 0.5);
        // Empty g demands the linear case.
        let bad = r#"{
            "alpha": {"kind": "golden"},
            "model": {"goth_n": 3, "f": [{"nu": [1,0], "re": 1.0}], "xi": 4.0}
        }"#;
        let cfg = ExperimentConfig::from_json(bad).unwrap();
        assert!(matches!(cfg.model_spec(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn budget_defaults_flow_from_model() {
        let with_model = r#"{
            "alpha": {"kind": "golden"},
            "model": {"goth_n": 5, "g": [2.0], "f": [{"nu": [1,0], "re": 1.0}], "xi": 6.0}
        }"#;
        let cfg = ExperimentConfig::from_json(with_model).unwrap();
        assert_eq!(cfg.budget_goth_n(), 5);
        assert_eq!(cfg.budget_xi(), 6.0);
        let bare = ExperimentConfig::from_json(r#"{"budget": {"goth_n": 7}}"#).unwrap();
        assert_eq!(bare.budget_goth_n(), 7);
        assert_eq!(bare.budget_xi(), 4.0);
        let empty = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(empty.budget_goth_n(), 3);
    }

    #[test]
    fn solve_section_fills_solver_defaults() {
        let cfg: SolveSection =
            serde_json::from_str(r#"{"epsilon": 1e-3, "n_modes": 8}"#).unwrap();
        let sc = cfg.to_solve_config();
        assert_eq!(sc.epsilon, 1e-3);
        assert_eq!(sc.n_modes, 8);
        assert_eq!(sc.tol_range, 1e-10);
        assert_eq!(sc.max_newton, 50);
    }

    #[test]
    fn simulate_method_names_match_the_contract() {
        let cfg: SimulateSection = serde_json::from_str(
            r#"{"t_end": 1.0, "dt": 0.001, "method": "implicit-euler"}"#,
        )
        .unwrap();
        assert_eq!(cfg.method, MethodConfig::ImplicitEuler);
        let sim = cfg.to_sim_config(0.05, 0.0, 0.0);
        assert_eq!(sim.epsilon, 0.05);
        assert!(matches!(sim.method, Method::ImplicitEuler));
        assert!(serde_json::from_str::<SimulateSection>(
            r#"{"t_end": 1.0, "dt": 0.001, "method": "rk4"}"#
        )
        .is_err());
    }
}
