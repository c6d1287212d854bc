//! Stiff time-domain integration of the oscillator
//!
//!   ε ẍ + ẋ + ε g(x) = ε f(ωt),   i.e.   ẍ = f(ωt) − ẋ/ε − g(x),
//!
//! for independent cross-validation of spectral solutions. The ẋ/ε term
//! makes the equation stiff as ε ↓ 0 (relaxation rate 1/ε), so the
//! integrators are implicit with a fixed step: implicit midpoint
//! (second order, symmetric) and implicit Euler (first order, strongly
//! damping). Each step solves its 2×2 nonlinear system by Newton with an
//! analytic Jacobian.
//!
//! [`compare_with_spectral`] measures sup_{t > t_transient} |x_sim(t) −
//! (c + ζ + u(ωt))| against a solver result, the quantity that validates a
//! spectral response solution in the time domain.

use thiserror::Error;

use crate::contfrac::{AlphaEval, CfError};
use crate::fourier::ModelSpec;
use crate::solver::SolveResult;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(
        "Newton failed at step {step} (t = {t:.6}): residual {residual:.3e} after {iters} iterations"
    )]
    NewtonStepFailure {
        step: usize,
        t: f64,
        residual: f64,
        iters: u32,
    },
    #[error(transparent)]
    Cf(#[from] CfError),
}

/// Time-stepping scheme. Both are A-stable; midpoint is second order and
/// preserves oscillation amplitude well, Euler is first order and damps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ImplicitMidpoint,
    ImplicitEuler,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub epsilon: f64,
    /// Integration horizon; rounded to the nearest whole number of steps.
    pub t_end: f64,
    pub dt: f64,
    pub x0: f64,
    pub v0: f64,
    pub method: Method,
    /// Per-step Newton tolerance, relative to 1 + ‖state‖∞.
    pub newton_tol: f64,
    pub newton_max: u32,
    /// Record every `stride`-th step (the initial and final states always).
    pub stride: usize,
    /// Transient cutoff for comparisons; None selects the relaxation
    /// heuristic 20 ε log(1/newton_tol).
    pub transient: Option<f64>,
}

impl SimConfig {
    pub fn new(epsilon: f64, t_end: f64, dt: f64, x0: f64, v0: f64, method: Method) -> SimConfig {
        SimConfig {
            epsilon,
            t_end,
            dt,
            x0,
            v0,
            method,
            newton_tol: 1e-12,
            newton_max: 25,
            stride: 1,
            transient: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.epsilon > 0.0) {
            return Err(SimError::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(SimError::InvalidConfig("t_end must be positive".into()));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(SimError::InvalidConfig(
                "newton_tol must be positive and newton_max ≥ 1".into(),
            ));
        }
        if self.stride == 0 {
            return Err(SimError::InvalidConfig("stride must be ≥ 1".into()));
        }
        if !self.x0.is_finite() || !self.v0.is_finite() {
            return Err(SimError::InvalidConfig(
                "initial state must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Relaxation-based transient heuristic: the homogeneous part decays no
    /// slower than exp(−t/(20ε)) in the strongly dissipative regime, so
    /// 20 ε log(1/tol) pushes it below the Newton tolerance scale.
    pub fn default_transient(&self) -> f64 {
        20.0 * self.epsilon * (1.0 / self.newton_tol).ln()
    }

    /// Configured transient cutoff, or the heuristic default.
    pub fn transient_cutoff(&self) -> f64 {
        self.transient.unwrap_or_else(|| self.default_transient())
    }
}

/// Recorded trajectory. Samples are strided but always include the initial
/// and final states; `newton_iters_max` is the worst per-step Newton count.
#[derive(Debug, Clone)]
pub struct SimSeries {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub warnings: Vec<String>,
    pub newton_iters_max: u32,
}

/// Σ_j coeffs[j] x^{lo+j} by Horner on the shifted polynomial.
fn eval_shifted_poly(lo: u32, coeffs: &[f64], x: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let mut horner = 0.0;
    for &c in coeffs.iter().rev() {
        horner = horner * x + c;
    }
    horner * x.powi(lo as i32)
}

/// Integrate the oscillator from (x₀, ẋ₀) with the configured fixed-step
/// implicit method. The forcing is evaluated as the finite trigonometric sum
/// of the model at phase (t, αt).
pub fn integrate(model: &ModelSpec, sim: &SimConfig) -> Result<SimSeries, SimError> {
    sim.validate()?;
    let alpha = AlphaEval::new(&model.alpha)?.alpha_f64()?;
    let eps = sim.epsilon;
    let h = sim.dt;
    let (gp_lo, gp_coeffs) = model.g_prime();
    let g = |x: f64| eval_shifted_poly(model.goth_n, &model.g_coeffs, x);
    let gp = |x: f64| eval_shifted_poly(gp_lo, &gp_coeffs, x);
    let f = |t: f64| model.f_coeffs.eval_at(t, alpha * t).re;
    // ẍ = F₂(t, x, v) with F = (v, f − v/ε − g(x)).
    let f2 = |t: f64, x: f64, v: f64| f(t) - v / eps - g(x);

    let mut warnings = Vec::new();
    if h > eps / 2.0 {
        warnings.push(format!(
            "dt = {h:.3e} exceeds ε/2 = {:.3e}; the ẋ/ε relaxation may be underresolved",
            eps / 2.0
        ));
    }

    let n_steps = ((sim.t_end / h).round() as usize).max(1);
    let mut t_out = Vec::with_capacity(n_steps / sim.stride + 2);
    let mut x_out = Vec::with_capacity(n_steps / sim.stride + 2);
    let mut v_out = Vec::with_capacity(n_steps / sim.stride + 2);
    let mut record = |t: f64, x: f64, v: f64| {
        t_out.push(t);
        x_out.push(x);
        v_out.push(v);
    };

    let (mut x, mut v) = (sim.x0, sim.v0);
    record(0.0, x, v);
    let mut iters_max = 0u32;

    for step in 0..n_steps {
        let t_n = step as f64 * h;
        // Forward-Euler predictor.
        let mut xk = x + h * v;
        let mut vk = v + h * f2(t_n, x, v);
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        let mut iters = 0u32;
        while iters < sim.newton_max {
            iters += 1;
            // Residual and Jacobian of the implicit relation at (xk, vk).
            let (r1, r2, j11, j12, j21, j22) = match sim.method {
                Method::ImplicitMidpoint => {
                    let (xm, vm) = (0.5 * (x + xk), 0.5 * (v + vk));
                    let t_m = t_n + 0.5 * h;
                    (
                        xk - x - h * vm,
                        vk - v - h * f2(t_m, xm, vm),
                        1.0,
                        -0.5 * h,
                        0.5 * h * gp(xm),
                        1.0 + 0.5 * h / eps,
                    )
                }
                Method::ImplicitEuler => (
                    xk - x - h * vk,
                    vk - v - h * f2(t_n + h, xk, vk),
                    1.0,
                    -h,
                    h * gp(xk),
                    1.0 + h / eps,
                ),
            };
            last_res = r1.abs().max(r2.abs());
            let scale = 1.0 + xk.abs().max(vk.abs());
            if last_res <= sim.newton_tol * scale {
                converged = true;
                break;
            }
            let det = j11 * j22 - j12 * j21;
            if det == 0.0 || !det.is_finite() {
                break;
            }
            xk -= (r1 * j22 - r2 * j12) / det;
            vk -= (j11 * r2 - j21 * r1) / det;
            if !xk.is_finite() || !vk.is_finite() {
                break;
            }
        }
        if !converged {
            return Err(SimError::NewtonStepFailure {
                step,
                t: t_n + h,
                residual: last_res,
                iters,
            });
        }
        iters_max = iters_max.max(iters);
        x = xk;
        v = vk;
        let is_last = step + 1 == n_steps;
        if (step + 1) % sim.stride == 0 || is_last {
            record((step + 1) as f64 * h, x, v);
        }
    }

    Ok(SimSeries {
        t: t_out,
        x: x_out,
        v: v_out,
        warnings,
        newton_iters_max: iters_max,
    })
}

/// Spectral response state (x, ẋ) at time t: x = c + ζ + u(ωt) and
/// ẋ = Σ_ν i(ω·ν) u_ν e^{i(ω·ν)t}.
pub fn spectral_state(
    model: &ModelSpec,
    result: &SolveResult,
    t: f64,
) -> Result<(f64, f64), SimError> {
    let alpha = AlphaEval::new(&model.alpha)?.alpha_f64()?;
    let x = model.c + result.zeta + result.u.eval_at(t, alpha * t).re;
    let mut v = 0.0;
    for (&(n1, n2), z) in &result.u.coeffs {
        let omega_nu = n1 as f64 + alpha * n2 as f64;
        let phase = omega_nu * t;
        // Re(i ω·ν z e^{i phase}) = −ω·ν (Im z cos + Re z sin).
        v -= omega_nu * (z.im * phase.cos() + z.re * phase.sin());
    }
    Ok((x, v))
}

/// sup over recorded samples with t > t_transient of
/// |x_sim(t) − (c + ζ + u(ωt))|.
pub fn compare_with_spectral(
    series: &SimSeries,
    result: &SolveResult,
    model: &ModelSpec,
    t_transient: f64,
) -> Result<f64, SimError> {
    let alpha = AlphaEval::new(&model.alpha)?.alpha_f64()?;
    let base = model.c + result.zeta;
    let mut max_dev: Option<f64> = None;
    for (i, &t) in series.t.iter().enumerate() {
        if t <= t_transient {
            continue;
        }
        let spectral = base + result.u.eval_at(t, alpha * t).re;
        let dev = (series.x[i] - spectral).abs();
        max_dev = Some(max_dev.map_or(dev, |m: f64| m.max(dev)));
    }
    max_dev.ok_or_else(|| {
        SimError::InvalidConfig(format!(
            "transient cutoff {t_transient} leaves no recorded samples"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contfrac::PartialQuotientSource;
    use crate::fourier::FourierField;
    use crate::solver::{solve_response, SolveConfig};
    use num_complex::Complex64;

    /// Forcing that makes x(t) = sin t an exact solution of
    /// ε ẍ + ẋ + ε x³ = ε f: f = (1/ε) cos t − (1/4) sin t − (1/4) sin 3t.
    fn manufactured_model(eps: f64) -> ModelSpec {
        let mut f = FourierField::new(3);
        f.set_pair((1, 0), Complex64::new(0.5 / eps, 0.125));
        f.set_pair((3, 0), Complex64::new(0.0, 0.125));
        ModelSpec::new(3, 0.0, vec![1.0], f, 4.0, PartialQuotientSource::golden()).unwrap()
    }

    fn linear_model() -> ModelSpec {
        let mut f = FourierField::new(1);
        f.set_pair((1, 0), Complex64::new(0.5, 0.0));
        f.set_pair((0, 1), Complex64::new(0.5, 0.0));
        ModelSpec::for_validation(1, 0.0, vec![1.0], f, 4.0, PartialQuotientSource::golden())
            .unwrap()
    }

    #[test]
    fn free_relaxation_matches_the_exact_linear_solution() {
        // g = 0, f = 0: ẋ = v₀ e^{−t/ε}, x = x₀ + ε v₀ (1 − e^{−t/ε}).
        let model = ModelSpec::without_nonlinearity(
            0.0,
            FourierField::new(1),
            4.0,
            PartialQuotientSource::golden(),
        )
        .unwrap();
        let eps = 0.05;
        for (method, tol) in [(Method::ImplicitMidpoint, 2e-6), (Method::ImplicitEuler, 2e-3)] {
            let sim = SimConfig::new(eps, 1.0, 1e-3, 0.3, 1.0, method);
            let series = integrate(&model, &sim).unwrap();
            assert!(series.warnings.is_empty());
            let mut worst = 0.0f64;
            for (i, &t) in series.t.iter().enumerate() {
                let decay = (-t / eps).exp();
                let x_exact = 0.3 + eps * 1.0 * (1.0 - decay);
                let v_exact = 1.0 * decay;
                worst = worst
                    .max((series.x[i] - x_exact).abs())
                    .max(eps * (series.v[i] - v_exact).abs());
            }
            assert!(worst <= tol, "{method:?}: deviation {worst:.3e} > {tol:.1e}");
        }
    }

    #[test]
    fn step_halving_confirms_convergence_orders() {
        let eps = 0.05;
        let model = manufactured_model(eps);
        let error_at = |method: Method, dt: f64| -> f64 {
            let sim = SimConfig::new(eps, 2.0, dt, 0.0, 1.0, method);
            let series = integrate(&model, &sim).unwrap();
            let mut worst = 0.0f64;
            for (i, &t) in series.t.iter().enumerate() {
                if t >= 0.5 {
                    worst = worst.max((series.x[i] - t.sin()).abs());
                }
            }
            worst
        };
        for (method, band) in [
            (Method::ImplicitMidpoint, (3.4, 4.6)),
            (Method::ImplicitEuler, (1.7, 2.3)),
        ] {
            let e1 = error_at(method, 1e-3);
            let e2 = error_at(method, 5e-4);
            let e3 = error_at(method, 2.5e-4);
            for (coarse, fine) in [(e1, e2), (e2, e3)] {
                let ratio = coarse / fine;
                assert!(
                    ratio >= band.0 && ratio <= band.1,
                    "{method:?}: halving ratio {ratio:.3} outside [{}, {}] (errors {coarse:.3e}/{fine:.3e})",
                    band.0,
                    band.1
                );
            }
        }
    }

    #[test]
    fn newton_failure_and_step_size_warning_are_reported() {
        let eps = 0.05;
        let model = manufactured_model(eps);
        // One Newton iteration cannot meet 1e−12 on a cubic at a huge step.
        let mut sim = SimConfig::new(eps, 2.0, 0.5, 0.0, 1.0, Method::ImplicitMidpoint);
        sim.newton_max = 1;
        match integrate(&model, &sim) {
            Err(SimError::NewtonStepFailure { step, iters, .. }) => {
                assert_eq!(step, 0);
                assert_eq!(iters, 1);
            }
            other => panic!("expected NewtonStepFailure, got {other:?}"),
        }
        // The same oversized step with full Newton converges but warns.
        let sim = SimConfig::new(eps, 1.0, 0.05, 0.0, 1.0, Method::ImplicitEuler);
        let series = integrate(&model, &sim).unwrap();
        assert_eq!(series.warnings.len(), 1);
        assert!(series.warnings[0].contains("ε/2"));
    }

    #[test]
    fn stride_thins_but_keeps_endpoints() {
        let model = linear_model();
        let mut sim = SimConfig::new(0.05, 1.0, 1e-3, 0.1, 0.0, Method::ImplicitMidpoint);
        sim.stride = 7;
        let series = integrate(&model, &sim).unwrap();
        assert_eq!(series.t.first().copied(), Some(0.0));
        assert!((series.t.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(series.t.len() <= 1000 / 7 + 2);
        // Interior samples fall on multiples of 7 dt.
        assert!((series.t[1] - 7e-3).abs() < 1e-12);
    }

    #[test]
    fn transient_heuristic_scales_with_epsilon_and_tolerance() {
        let sim = SimConfig::new(0.05, 1.0, 1e-3, 0.0, 0.0, Method::ImplicitMidpoint);
        let expect = 20.0 * 0.05 * (1e12f64).ln();
        assert!((sim.default_transient() - expect).abs() < 1e-12 * expect);
        assert_eq!(sim.transient_cutoff(), expect);
        let mut pinned = sim.clone();
        pinned.transient = Some(3.0);
        assert_eq!(pinned.transient_cutoff(), 3.0);
    }

    #[test]
    fn trajectory_started_on_the_response_solution_stays_on_it() {
        // Linear g: the response solution is exactly computable and
        // attracting; starting on it, only integrator error accumulates.
        let model = linear_model();
        let eps = 0.05;
        let cfg = SolveConfig::for_epsilon(eps);
        let result = solve_response(&model, &cfg).unwrap();
        let (x0, v0) = spectral_state(&model, &result, 0.0).unwrap();
        let sim = SimConfig::new(eps, 20.0, 2.5e-4, x0, v0, Method::ImplicitMidpoint);
        let series = integrate(&model, &sim).unwrap();
        let dev = compare_with_spectral(&series, &result, &model, 0.0).unwrap();
        assert!(dev <= 1e-6, "deviation {dev:.3e}");
        assert!(series.newton_iters_max <= 6);
    }

    #[test]
    fn comparison_of_spectral_samples_with_themselves_is_zero() {
        let model = linear_model();
        let cfg = SolveConfig::for_epsilon(0.05);
        let result = solve_response(&model, &cfg).unwrap();
        let t: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
        let mut x = Vec::new();
        let mut v = Vec::new();
        for &ti in &t {
            let (xi, vi) = spectral_state(&model, &result, ti).unwrap();
            x.push(xi);
            v.push(vi);
        }
        let series = SimSeries {
            t,
            x,
            v,
            warnings: Vec::new(),
            newton_iters_max: 0,
        };
        let dev = compare_with_spectral(&series, &result, &model, 0.5).unwrap();
        assert_eq!(dev, 0.0);
        // A cutoff beyond the last sample is a config error, not zero.
        assert!(matches!(
            compare_with_spectral(&series, &result, &model, 11.0),
            Err(SimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_dt = SimConfig::new(0.05, 1.0, 0.0, 0.0, 0.0, Method::ImplicitEuler);
        assert!(matches!(bad_dt.validate(), Err(SimError::InvalidConfig(_))));
        let mut bad_stride = SimConfig::new(0.05, 1.0, 1e-3, 0.0, 0.0, Method::ImplicitEuler);
        bad_stride.stride = 0;
        assert!(matches!(
            bad_stride.validate(),
            Err(SimError::InvalidConfig(_))
        ));
    }
}
