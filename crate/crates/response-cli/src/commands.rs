//! Command implementations.
//!
//! Each command consumes a parsed [`ExperimentConfig`], produces a
//! deterministic JSON report (the echoed config plus a command-specific
//! result block), optionally a CSV artifact, and an exit code. Exit codes:
//! 0 success, 2 configuration error, 3 no bifurcation bracket, 4 no
//! convergence, 5 enumeration/precision budget exceeded, 1 other failures.

use serde::Serialize;
use thiserror::Error;

use response_core::admissible::{
    build_frak_j, build_jn, choose_c1_star_and_n, classify, AdmissibleError, AdmissibleSet,
    ChosenConstants, FrequencyClassification, Hole, RegularityBudget,
};
use response_core::contfrac::{ln_big, CfError, ConvergentEngine};
use response_core::fourier::FourierError;
use response_core::report::{
    admissible_csv, coeff_table_csv, series_csv, to_json_string, CoeffRow, ReportError,
};
use response_core::simulate::{compare_with_spectral, integrate, spectral_state, SimError};
use response_core::solver::{solve_response, SolveConfig, SolveResult, SolverError};
use response_core::trees::{bookkeeping_coefficients, series_coefficient, PropagatorMode, TreeError};

use crate::config::{ConfigError, ExperimentConfig, MethodConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Admissible(#[from] AdmissibleError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cf(#[from] CfError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn cf_code(e: &CfError) -> i32 {
    match e {
        CfError::InsufficientPrecision(_) | CfError::BruteForceTooLarge { .. } => 5,
        CfError::InvalidSource(_) | CfError::InvalidRequest(_) => 2,
    }
}

fn fourier_code(e: &FourierError) -> i32 {
    match e {
        FourierError::InvalidModel(_) => 2,
        FourierError::TooFewShells { .. } => 1,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(SolverError::NoBracket { .. }) => 3,
            CliError::Solver(SolverError::NoConvergence { .. }) => 4,
            CliError::Solver(SolverError::InvalidConfig(_)) => 2,
            CliError::Solver(SolverError::SingularJacobian) => 1,
            CliError::Solver(SolverError::Cf(e)) => cf_code(e),
            CliError::Solver(SolverError::Model(e)) => fourier_code(e),
            CliError::Admissible(AdmissibleError::InvalidBudget(_)) => 2,
            CliError::Admissible(AdmissibleError::Cf(e)) => cf_code(e),
            CliError::Admissible(_) => 1,
            CliError::Tree(TreeError::BudgetExceeded { .. }) => 5,
            CliError::Tree(TreeError::InvalidRequest(_)) => 2,
            CliError::Tree(TreeError::Cf(e)) => cf_code(e),
            CliError::Tree(TreeError::Model(e)) => fourier_code(e),
            CliError::Tree(TreeError::DivisorUnderflow { .. }) => 1,
            CliError::Sim(SimError::InvalidConfig(_)) => 2,
            CliError::Sim(SimError::NewtonStepFailure { .. }) => 4,
            CliError::Sim(SimError::Cf(e)) => cf_code(e),
            CliError::Cf(e) => cf_code(e),
            CliError::Fourier(e) => fourier_code(e),
            CliError::Report(_) | CliError::Io(_) => 1,
        }
    }
}

/// A finished command: the JSON report, an optional CSV artifact, and the
/// exit code (0, or 5 for a partial table after budget exhaustion).
#[derive(Debug)]
pub struct CommandOutput {
    pub json: String,
    pub csv: Option<String>,
    pub exit_code: i32,
}

/// Uniform report envelope: the command name, the parallelism cap in
/// effect, the full echoed config, accumulated warnings, and the result.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'static str,
    threads_cap: Option<usize>,
    config: &'a ExperimentConfig,
    warnings: Vec<String>,
    result: T,
}

fn finish<T: Serialize>(
    command: &'static str,
    threads_cap: Option<usize>,
    config: &ExperimentConfig,
    warnings: Vec<String>,
    result: T,
    csv: Option<String>,
    exit_code: i32,
) -> Result<CommandOutput, CliError> {
    let report = Report {
        command,
        threads_cap,
        config,
        warnings,
        result,
    };
    Ok(CommandOutput {
        json: to_json_string(&report)?,
        csv,
        exit_code,
    })
}

fn budget_eta0(cfg: &ExperimentConfig) -> f64 {
    cfg.budget.as_ref().and_then(|b| b.eta0).unwrap_or(1e-4)
}

fn regularity_budget(cfg: &ExperimentConfig) -> Result<RegularityBudget, CliError> {
    Ok(RegularityBudget::standard(
        cfg.budget_goth_n(),
        cfg.budget_xi(),
        budget_eta0(cfg),
    )?)
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConvergentRow {
    n: usize,
    q: String,
    /// (ln q_n)/n — tends to ln φ ≈ 0.4812 for the golden mean.
    ln_q_over_n: f64,
}

#[derive(Serialize)]
struct ClassifyResult {
    depth: usize,
    goth_n: u32,
    xi: f64,
    eta0: f64,
    convergents: Vec<ConvergentRow>,
    classification: FrequencyClassification,
}

pub fn cmd_classify(
    cfg: &ExperimentConfig,
    threads_cap: Option<usize>,
) -> Result<CommandOutput, CliError> {
    let alpha = cfg.alpha_source()?;
    let budget = regularity_budget(cfg)?;
    let depth = cfg.budget.as_ref().and_then(|b| b.depth).unwrap_or(20);
    let classification = classify(&alpha, &budget, depth)?;
    let mut engine = ConvergentEngine::new(&alpha)?;
    let mut convergents = Vec::with_capacity(depth);
    for n in 1..=depth {
        let q = engine.q(n)?;
        convergents.push(ConvergentRow {
            n,
            q: q.to_string(),
            ln_q_over_n: ln_big(q) / n as f64,
        });
    }
    let result = ClassifyResult {
        depth,
        goth_n: budget.goth_n,
        xi: budget.xi,
        eta0: budget.eta0,
        convergents,
        classification,
    };
    finish("classify", threads_cap, cfg, Vec::new(), result, None, 0)
}

// ---------------------------------------------------------------------------
// admissible
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AdmissibleResult {
    set: AdmissibleSet,
    chosen: Option<ChosenConstants>,
    hole_count: usize,
    zero_holes: bool,
}

pub fn cmd_admissible(
    cfg: &ExperimentConfig,
    threads_cap: Option<usize>,
) -> Result<CommandOutput, CliError> {
    let alpha = cfg.alpha_source()?;
    let b = cfg.budget.clone().unwrap_or_default();
    let n_max = b.n_max.unwrap_or(12);
    let (set, chosen) = match (b.c, b.c_prime) {
        (Some(c), Some(c_prime)) => {
            let n_start = b.n_start.unwrap_or(1);
            (
                build_jn(&alpha, n_start, n_max.max(n_start), c, c_prime, cfg.budget_goth_n())?,
                None,
            )
        }
        (None, None) => {
            let budget = regularity_budget(cfg)?;
            let chosen = choose_c1_star_and_n(&alpha, &budget)?;
            (build_frak_j(&alpha, &budget, n_max)?, Some(chosen))
        }
        _ => {
            return Err(CliError::Config(ConfigError::Invalid(
                "explicit interval constants need both `c` and `c_prime`".into(),
            )))
        }
    };
    let csv = admissible_csv(&set);
    let result = AdmissibleResult {
        hole_count: set.holes.len(),
        zero_holes: set.holes.is_empty(),
        chosen,
        set,
    };
    finish(
        "admissible",
        threads_cap,
        cfg,
        Vec::new(),
        result,
        Some(csv),
        0,
    )
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimSummary {
    method: &'static str,
    t_end: f64,
    dt: f64,
    x0: f64,
    v0: f64,
    transient: f64,
    samples: usize,
    newton_iters_max: u32,
    /// sup |x_sim − (c + ζ + u)| over samples past the transient; absent
    /// when the transient swallows the whole run.
    max_deviation_after_transient: Option<f64>,
}

#[derive(Serialize)]
struct SolveReport {
    solve_config: SolveConfig,
    solve: SolveResult,
    /// Whether ε falls in a gap of the admissible construction (present
    /// only when a `budget` section enables the check).
    epsilon_in_hole: Option<bool>,
    hole: Option<Hole>,
    simulation: Option<SimSummary>,
}

pub fn cmd_solve(
    cfg: &ExperimentConfig,
    threads_cap: Option<usize>,
) -> Result<CommandOutput, CliError> {
    let model = cfg.model_spec()?;
    let section = cfg.solve.as_ref().ok_or_else(|| {
        CliError::Config(ConfigError::Invalid(
            "the solve command requires a `solve` section (or --eps)".into(),
        ))
    })?;
    let solve_config = section.to_solve_config();
    let mut warnings = Vec::new();

    let result = solve_response(&model, &solve_config)?;

    // Optional admissibility cross-check.
    let (mut epsilon_in_hole, mut hole) = (None, None);
    if cfg.budget.is_some() {
        let alpha = cfg.alpha_source()?;
        let budget = regularity_budget(cfg)?;
        let n_max = cfg.budget.as_ref().and_then(|b| b.n_max).unwrap_or(12);
        let set = build_frak_j(&alpha, &budget, n_max)?;
        let eps = solve_config.epsilon;
        let found = set
            .holes
            .iter()
            .find(|h| h.from <= eps && eps <= h.to)
            .cloned();
        epsilon_in_hole = Some(found.is_some());
        if let Some(h) = &found {
            warnings.push(format!(
                "epsilon {eps:e} lies in the admissibility gap [{:e}, {:e}] at junction n = {}",
                h.from, h.to, h.junction_n
            ));
        }
        hole = found;
    }

    // Optional time-domain cross-validation.
    let mut csv = None;
    let simulation = match &cfg.simulate {
        None => None,
        Some(s) => {
            let (x0, v0) = if s.start_on_response {
                spectral_state(&model, &result, 0.0)?
            } else {
                (s.x0, s.v0)
            };
            let sim = s.to_sim_config(solve_config.epsilon, x0, v0);
            let series = integrate(&model, &sim)?;
            warnings.extend(series.warnings.iter().cloned());
            let cutoff = sim.transient_cutoff();
            let deviation = if series.t.last().copied().unwrap_or(0.0) > cutoff {
                Some(compare_with_spectral(&series, &result, &model, cutoff)?)
            } else {
                warnings.push(format!(
                    "transient cutoff {cutoff:e} exceeds the horizon; comparison skipped"
                ));
                None
            };
            let summary = SimSummary {
                method: match s.method {
                    MethodConfig::ImplicitMidpoint => "implicit-midpoint",
                    MethodConfig::ImplicitEuler => "implicit-euler",
                },
                t_end: sim.t_end,
                dt: sim.dt,
                x0,
                v0,
                transient: cutoff,
                samples: series.t.len(),
                newton_iters_max: series.newton_iters_max,
                max_deviation_after_transient: deviation,
            };
            csv = Some(series_csv(&series));
            Some(summary)
        }
    };

    let report = SolveReport {
        solve_config,
        solve: result,
        epsilon_in_hole,
        hole,
        simulation,
    };
    finish("solve", threads_cap, cfg, warnings, report, csv, 0)
}

// ---------------------------------------------------------------------------
// trees
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CoeffRowJson {
    k: u32,
    nu: [i64; 2],
    re: f64,
    im: f64,
    oracle_re: f64,
    oracle_im: f64,
    abs_diff: f64,
}

#[derive(Serialize)]
struct TreesResult {
    epsilon: f64,
    zeta: f64,
    c1: f64,
    k_max: u32,
    tree_budget: u64,
    budget_exceeded: bool,
    max_abs_diff: f64,
    rows: Vec<CoeffRowJson>,
}

pub fn cmd_trees(
    cfg: &ExperimentConfig,
    threads_cap: Option<usize>,
) -> Result<CommandOutput, CliError> {
    let model = cfg.model_spec()?;
    let section = cfg.solve.as_ref().ok_or_else(|| {
        CliError::Config(ConfigError::Invalid(
            "the trees command requires a `solve` section with `epsilon` (or --eps)".into(),
        ))
    })?;
    let epsilon = section.epsilon;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CliError::Config(ConfigError::Invalid(format!(
            "epsilon must be positive and finite, got {epsilon}"
        ))));
    }
    let zeta = section.zeta.unwrap_or(0.0);
    let c1 = section.c1.unwrap_or(0.65);
    let k_max = section.k_max.unwrap_or(model.goth_n + 4);
    let tree_budget = cfg
        .budget
        .as_ref()
        .and_then(|b| b.tree_budget)
        .unwrap_or(10_000_000);
    let nu_list: Vec<(i64, i64)> = match &section.nu_list {
        Some(list) => list.iter().map(|&[a, b]| (a, b)).collect(),
        None => model
            .f_coeffs
            .coeffs
            .keys()
            .copied()
            .filter(|&nu| nu != (0, 0))
            .collect(),
    };
    if nu_list.is_empty() {
        return Err(CliError::Config(ConfigError::Invalid(
            "the coefficient table needs at least one mode (empty forcing support)".into(),
        )));
    }

    let oracle = bookkeeping_coefficients(&model, epsilon, zeta, k_max)?;
    let mut rows = Vec::new();
    let mut budget_exceeded = false;
    let mut warnings = Vec::new();
    'table: for k in 1..=k_max {
        for &nu in &nu_list {
            match series_coefficient(
                &model,
                epsilon,
                zeta,
                c1,
                k,
                nu,
                PropagatorMode::Bare,
                tree_budget,
            ) {
                Ok(value) => rows.push(CoeffRow {
                    k,
                    nu,
                    value,
                    oracle: oracle[k as usize].get(nu),
                }),
                Err(TreeError::BudgetExceeded { budget, estimate }) => {
                    budget_exceeded = true;
                    warnings.push(format!(
                        "enumeration budget exhausted at order k = {k}: estimated {estimate} trees \
                         against budget {budget}; table truncated"
                    ));
                    break 'table;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    let csv = coeff_table_csv(&rows);
    let max_abs_diff = rows.iter().map(CoeffRow::abs_diff).fold(0.0, f64::max);
    let result = TreesResult {
        epsilon,
        zeta,
        c1,
        k_max,
        tree_budget,
        budget_exceeded,
        max_abs_diff,
        rows: rows
            .iter()
            .map(|r| CoeffRowJson {
                k: r.k,
                nu: [r.nu.0, r.nu.1],
                re: r.value.re,
                im: r.value.im,
                oracle_re: r.oracle.re,
                oracle_im: r.oracle.im,
                abs_diff: r.abs_diff(),
            })
            .collect(),
    };
    let exit = if budget_exceeded { 5 } else { 0 };
    finish("trees", threads_cap, cfg, warnings, result, Some(csv), exit)
}
