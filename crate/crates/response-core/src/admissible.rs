//! Admissible ε-interval sets for the response-solution construction.
//!
//! Solutions are constructed for ε inside closed intervals pinned to the
//! convergent denominators q_n of α. Two interval families appear:
//!
//! - the generic two-constant family `I_n(C, C′) = [e^{−C′ q_n}, (C q_n)^{−𝔫−1}]`,
//!   whose unions `J_N = Cl ⋃_{n ≥ N} I_n` may have holes between consecutive
//!   members, and
//! - the optimized family `𝔍_m = [e^{−C₀ q_{N+m}}, a₀ / q_{N+m}^𝔫]` obtained by
//!   choosing, per n, the largest constant compatible with the convergence
//!   budget: `a₀ = η₀^{1/(𝔫+1)}`, with the starting index N chosen so that
//!   `e^{−C₀ x} ≤ a₀/x^𝔫` for all x ≥ q_N.
//!
//! Consecutive optimized intervals overlap iff
//! `q_{n+1} ≤ b₀ e^{(C₀/𝔫) q_n}` with `b₀ = η₀^{1/(𝔫(𝔫+1))}` — this module
//! reports that margin per junction, merges the intervals, and classifies the
//! frequency (empirical Diophantine certificate, Bryuno partial sums) over
//! the tested range of convergents only: no claim is ever extrapolated to the
//! infinite tail.
//!
//! All hole/overlap decisions are taken in log space from exact big-integer
//! q_n, so they survive denominators far beyond f64 range; the f64 endpoints
//! are for reporting and plotting.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use crate::contfrac::{
    big_to_f64, brjuno_terms, ln_big, CfError, ConvergentEngine, PartialQuotientSource,
};

/// Cap on the index search in [`choose_c1_star_and_n`].
pub const N_SEARCH_CAP: usize = 300;

/// Relative log-margin below which an overlap/hole decision is reported as
/// indeterminate instead of being decided by floating-point luck.
pub const INDETERMINATE_REL: f64 = 1e-15;

/// Maximum tolerated deviation (in nats, ≈ one decade) of any tested point
/// from the fitted Diophantine line before the certificate is withheld.
pub const MAX_FIT_LOG_RESIDUAL: f64 = 2.3;

#[derive(Debug, thiserror::Error)]
pub enum AdmissibleError {
    #[error("invalid regularity budget: {0}")]
    InvalidBudget(String),
    /// Some requested intervals are not well defined (lower > upper).
    #[error("intervals not well defined at n = {offenders:?}")]
    PreconditionViolated { offenders: Vec<usize> },
    /// No starting index within the search cap satisfies the envelope
    /// condition.
    #[error("no admissible starting index within the first {searched_up_to} convergents")]
    NoSuchN { searched_up_to: usize },
    #[error(transparent)]
    Cf(#[from] CfError),
}

/// Analyticity and convergence budget for the construction.
///
/// `xi` is the Fourier decay width of the forcing, `goth_n` the (odd) order 𝔫
/// of the zero of g − f₀, `eta0` the dimensionless convergence threshold, and
/// `phi`/`gamma_sup`/`rho` the forcing bound Φ, the sup bound Γ, and the
/// analyticity radius ρ (carried for diagnostics and reports).
#[derive(Debug, Clone, Serialize)]
pub struct RegularityBudget {
    pub xi: f64,
    pub goth_n: u32,
    pub eta0: f64,
    pub phi: f64,
    pub gamma_sup: f64,
    pub rho: f64,
}

impl RegularityBudget {
    pub fn new(
        goth_n: u32,
        xi: f64,
        eta0: f64,
        phi: f64,
        gamma_sup: f64,
        rho: f64,
    ) -> Result<Self, AdmissibleError> {
        if goth_n < 3 || goth_n % 2 == 0 {
            return Err(AdmissibleError::InvalidBudget(format!(
                "goth_n must be odd and >= 3, got {goth_n}"
            )));
        }
        for (name, v) in [
            ("xi", xi),
            ("eta0", eta0),
            ("phi", phi),
            ("gamma_sup", gamma_sup),
            ("rho", rho),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AdmissibleError::InvalidBudget(format!(
                    "{name} must be a positive finite number, got {v}"
                )));
            }
        }
        Ok(RegularityBudget {
            xi,
            goth_n,
            eta0,
            phi,
            gamma_sup,
            rho,
        })
    }

    /// Budget with the bound fields defaulted to 1 (they do not enter the
    /// interval construction).
    pub fn standard(goth_n: u32, xi: f64, eta0: f64) -> Result<Self, AdmissibleError> {
        Self::new(goth_n, xi, eta0, 1.0, 1.0, 1.0)
    }
}

/// The lower-endpoint rate constant C₀ = (𝔫+1)ξ / (4(𝔫² + 2𝔫 − 1)).
///
/// `numer`/`denom` hold the exact reduced rational (𝔫+1)/(4(𝔫²+2𝔫−1));
/// `value` is that rational times ξ, rounded once.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct C0 {
    pub numer: u64,
    pub denom: u64,
    pub value: f64,
}

pub fn compute_c0(budget: &RegularityBudget) -> C0 {
    let n = budget.goth_n as u64;
    let mut numer = n + 1;
    let mut denom = 4 * (n * n + 2 * n - 1);
    let g = num_integer::gcd(numer, denom);
    numer /= g;
    denom /= g;
    C0 {
        numer,
        denom,
        value: (numer as f64) * budget.xi / (denom as f64),
    }
}

/// Which constants produced an interval family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ConstantsUsed {
    /// The two-constant family I_n(C, C′).
    Pair { c: f64, c_prime: f64, goth_n: u32 },
    /// The optimized envelope family 𝔍 with its derived constants.
    Envelope {
        a0: f64,
        c0: f64,
        b0: f64,
        c1_star: f64,
        goth_n: u32,
    },
}

/// One ε-interval [lower, upper] attached to convergent index n.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonInterval {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub constants_used: ConstantsUsed,
}

/// Outcome of constructing a single interval.
#[derive(Debug, Clone)]
pub enum IntervalStatus {
    WellDefined(EpsilonInterval),
    /// lower > upper: the interval is empty at this n (q_n too small for the
    /// constants).
    NotWellDefined { n: usize, lower: f64, upper: f64 },
}

/// e^{−c·q} with one compensation round: with c·q = hi + lo exactly
/// (two-product via fused multiply-add), e^{−c·q} = e^{−hi}(1 − lo) + O(lo²).
fn exp_neg_prod(c: f64, q: f64) -> f64 {
    if !q.is_finite() {
        return 0.0;
    }
    let hi = c * q;
    let lo = c.mul_add(q, -hi);
    (-hi).exp() * (1.0 - lo)
}

/// Interval endpoints and the well-definedness log-margin
/// m = C′q_n − (𝔫+1)·ln(C·q_n) (≥ 0 ⟺ lower ≤ upper), with its scale.
fn in_endpoints(c: f64, c_prime: f64, goth_n: u32, q: &BigInt) -> (f64, f64, f64, f64) {
    let qf = big_to_f64(q);
    let lower = exp_neg_prod(c_prime, qf);
    let upper = (c * qf).powi(-(goth_n as i32) - 1);
    let t1 = c_prime * qf;
    let t2 = ((goth_n + 1) as f64) * (c.ln() + ln_big(q));
    let scale = t1.abs().max(t2.abs()).max(1.0);
    (lower, upper, t1 - t2, scale)
}

/// The interval I_n(C, C′) = [e^{−C′ q_n}, (C q_n)^{−𝔫−1}].
///
/// An interval whose log-margin vanishes within rounding (|m| below
/// [`INDETERMINATE_REL`] relative) is treated as the degenerate single point
/// rather than decided by the sign of noise.
pub fn interval_in(
    alpha: &PartialQuotientSource,
    n: usize,
    c: f64,
    c_prime: f64,
    goth_n: u32,
) -> Result<IntervalStatus, CfError> {
    let mut engine = ConvergentEngine::new(alpha)?;
    Ok(interval_in_with(&mut engine, n, c, c_prime, goth_n)?)
}

fn interval_in_with(
    engine: &mut ConvergentEngine,
    n: usize,
    c: f64,
    c_prime: f64,
    goth_n: u32,
) -> Result<IntervalStatus, CfError> {
    let q = engine.q(n)?;
    let (lower, upper, margin, scale) = in_endpoints(c, c_prime, goth_n, q);
    let constants_used = ConstantsUsed::Pair {
        c,
        c_prime,
        goth_n,
    };
    if margin >= 0.0 {
        Ok(IntervalStatus::WellDefined(EpsilonInterval {
            lower,
            upper,
            n,
            constants_used,
        }))
    } else if margin.abs() <= INDETERMINATE_REL * scale {
        Ok(IntervalStatus::WellDefined(EpsilonInterval {
            lower: upper,
            upper,
            n,
            constants_used,
        }))
    } else {
        Ok(IntervalStatus::NotWellDefined { n, lower, upper })
    }
}

/// A maximal merged run of overlapping intervals, with the contributing
/// convergent-index range [n_from, n_to].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedInterval {
    pub lower: f64,
    pub upper: f64,
    pub n_from: usize,
    pub n_to: usize,
}

/// An open gap between consecutive merged intervals.
///
/// `junction_n` is the index (in the caller's indexing: convergent index for
/// [`build_jn`], offset m for [`build_frak_j`]) of the interval on the
/// higher-ε side of the gap. `margin_log` is the overlap margin in log space
/// (negative across a hole); `indeterminate` flags margins within rounding
/// of zero, which are merged rather than decided.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hole {
    pub from: f64,
    pub to: f64,
    pub width: f64,
    pub junction_n: usize,
    pub margin_log: f64,
    pub indeterminate: bool,
}

/// Per-junction overlap decision (also recorded for junctions that merge).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JunctionMargin {
    pub junction_n: usize,
    pub margin_log: f64,
    pub overlaps: bool,
    pub indeterminate: bool,
}

/// Sorted disjoint closed ε-intervals with hole report.
///
/// Intervals are sorted descending (largest ε first, i.e. lowest n first);
/// `holes` are exactly the complement gaps between consecutive intervals.
/// The untruncated family accumulates at ε = 0 (lower endpoints e^{−C′q_n}
/// tend to 0), which `contains_zero_closure` records; the list itself is
/// explicitly truncated at `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibleSet {
    pub intervals: Vec<MergedInterval>,
    pub holes: Vec<Hole>,
    pub junctions: Vec<JunctionMargin>,
    pub n_start: usize,
    pub n_max: usize,
    pub contains_zero_closure: bool,
    pub constants: ConstantsUsed,
}

struct RawInterval {
    n: usize,
    lower: f64,
    upper: f64,
}

/// Merge consecutive raw intervals (endpoints strictly decreasing in n) given
/// per-junction overlap decisions.
fn merge_intervals(
    raws: &[RawInterval],
    junctions: &[JunctionMargin],
) -> (Vec<MergedInterval>, Vec<Hole>) {
    let mut intervals: Vec<MergedInterval> = Vec::new();
    let mut holes: Vec<Hole> = Vec::new();
    for (i, raw) in raws.iter().enumerate() {
        if i == 0 {
            intervals.push(MergedInterval {
                lower: raw.lower,
                upper: raw.upper,
                n_from: raw.n,
                n_to: raw.n,
            });
            continue;
        }
        let j = &junctions[i - 1];
        let current = intervals.last_mut().expect("nonempty");
        if j.overlaps {
            current.lower = raw.lower;
            current.n_to = raw.n;
        } else {
            holes.push(Hole {
                from: raw.upper,
                to: current.lower,
                width: current.lower - raw.upper,
                junction_n: j.junction_n,
                margin_log: j.margin_log,
                indeterminate: j.indeterminate,
            });
            intervals.push(MergedInterval {
                lower: raw.lower,
                upper: raw.upper,
                n_from: raw.n,
                n_to: raw.n,
            });
        }
    }
    (intervals, holes)
}

/// The truncated closure J_N = ⋃_{n = N}^{n_max} I_n(C, C′), merged, with
/// hole report.
///
/// Requires every member interval to be well defined; offenders are listed in
/// the error otherwise.
pub fn build_jn(
    alpha: &PartialQuotientSource,
    n_start: usize,
    n_max: usize,
    c: f64,
    c_prime: f64,
    goth_n: u32,
) -> Result<AdmissibleSet, AdmissibleError> {
    if n_max < n_start {
        return Err(AdmissibleError::InvalidBudget(format!(
            "n_max = {n_max} must be >= n_start = {n_start}"
        )));
    }
    let mut engine = ConvergentEngine::new(alpha)?;
    let mut raws = Vec::new();
    let mut offenders = Vec::new();
    for n in n_start..=n_max {
        match interval_in_with(&mut engine, n, c, c_prime, goth_n)? {
            IntervalStatus::WellDefined(iv) => raws.push(RawInterval {
                n,
                lower: iv.lower,
                upper: iv.upper,
            }),
            IntervalStatus::NotWellDefined { n, .. } => offenders.push(n),
        }
    }
    if !offenders.is_empty() {
        return Err(AdmissibleError::PreconditionViolated { offenders });
    }
    // Junction n overlaps n+1 iff e^{−C′q_n} ≤ (C q_{n+1})^{−𝔫−1}.
    let mut junctions = Vec::new();
    for n in n_start..n_max {
        let q_n = big_to_f64(engine.q(n)?);
        let t1 = c_prime * q_n;
        let t2 = ((goth_n + 1) as f64) * (c.ln() + ln_big(engine.q(n + 1)?));
        let margin_log = t1 - t2;
        let scale = t1.abs().max(t2.abs()).max(1.0);
        let indeterminate = margin_log.abs() <= INDETERMINATE_REL * scale;
        junctions.push(JunctionMargin {
            junction_n: n,
            margin_log,
            overlaps: margin_log >= 0.0 || indeterminate,
            indeterminate,
        });
    }
    let (intervals, holes) = merge_intervals(&raws, &junctions);
    Ok(AdmissibleSet {
        intervals,
        holes,
        junctions,
        n_start,
        n_max,
        contains_zero_closure: true,
        constants: ConstantsUsed::Pair {
            c,
            c_prime,
            goth_n,
        },
    })
}

/// The optimized constants: a₀ = η₀^{1/(𝔫+1)}, b₀ = η₀^{1/(𝔫(𝔫+1))}, the
/// envelope crossing x*, the starting index N (lowest n with
/// e^{−C₀x} ≤ a₀/x^𝔫 for all x ≥ q_n), and C₁* = (1/(a₀ q_N))^{1/(𝔫+1)}.
#[derive(Debug, Clone, Serialize)]
pub struct ChosenConstants {
    pub c1_star: f64,
    pub n_index: usize,
    pub a0: f64,
    pub b0: f64,
    pub x_star: f64,
    pub c0: C0,
}

/// Envelope gap h(x) = C₀x − 𝔫 ln x + ln a₀ (≥ 0 ⟺ e^{−C₀x} ≤ a₀/x^𝔫).
fn envelope_h(c0: f64, goth_n: u32, ln_a0: f64, x: f64, ln_x: f64) -> f64 {
    c0 * x - (goth_n as f64) * ln_x + ln_a0
}

pub fn choose_c1_star_and_n(
    alpha: &PartialQuotientSource,
    budget: &RegularityBudget,
) -> Result<ChosenConstants, AdmissibleError> {
    let c0 = compute_c0(budget);
    let gn = budget.goth_n as f64;
    let a0 = budget.eta0.powf(1.0 / (gn + 1.0));
    let b0 = budget.eta0.powf(1.0 / (gn * (gn + 1.0)));
    let ln_a0 = budget.eta0.ln() / (gn + 1.0);

    // h is decreasing up to x_min = 𝔫/C₀ and increasing beyond; if it dips
    // negative, x* is its unique root past x_min.
    let x_min = gn / c0.value;
    let h = |x: f64| envelope_h(c0.value, budget.goth_n, ln_a0, x, x.ln());
    let crossing_free = h(x_min) >= 0.0;
    let x_star = if crossing_free {
        x_min
    } else {
        let mut lo = x_min;
        let mut hi = x_min.max(1.0);
        while h(hi) <= 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut engine = ConvergentEngine::new(alpha)?;
    for n in 0..=N_SEARCH_CAP {
        let q = engine.q(n)?;
        let qf = big_to_f64(q);
        let ok = crossing_free
            || (qf >= x_min && envelope_h(c0.value, budget.goth_n, ln_a0, qf, ln_big(q)) >= 0.0);
        if ok {
            let c1_star = (1.0 / (a0 * qf)).powf(1.0 / (gn + 1.0));
            return Ok(ChosenConstants {
                c1_star,
                n_index: n,
                a0,
                b0,
                x_star,
                c0,
            });
        }
    }
    Err(AdmissibleError::NoSuchN {
        searched_up_to: N_SEARCH_CAP,
    })
}

/// The truncated optimized set ⋃_{m = 0}^{n_max} 𝔍_m with
/// 𝔍_m = [e^{−C₀ q_{N+m}}, a₀ / q_{N+m}^𝔫], merged, with per-junction
/// overlap margins in the normalized form
/// `margin = ln b₀ + (C₀/𝔫) q_{N+m} − ln q_{N+m+1}`.
///
/// Hole indices (`junction_n`) use the offset m; the contributing convergent
/// indices on each merged interval use the absolute index N+m.
pub fn build_frak_j(
    alpha: &PartialQuotientSource,
    budget: &RegularityBudget,
    n_max: usize,
) -> Result<AdmissibleSet, AdmissibleError> {
    let chosen = choose_c1_star_and_n(alpha, budget)?;
    let n_big = chosen.n_index;
    let gn = budget.goth_n as f64;
    let ln_a0 = budget.eta0.ln() / (gn + 1.0);
    let ln_b0 = ln_a0 / gn;
    let mut engine = ConvergentEngine::new(alpha)?;

    let mut raws = Vec::new();
    let mut offenders = Vec::new();
    for m in 0..=n_max {
        let q = engine.q(n_big + m)?;
        let qf = big_to_f64(q);
        let lower = exp_neg_prod(chosen.c0.value, qf);
        let upper = chosen.a0 * qf.powi(-(budget.goth_n as i32));
        // Well-definedness is the envelope condition h(q) ≥ 0, guaranteed by
        // the choice of N; checked defensively.
        if envelope_h(chosen.c0.value, budget.goth_n, ln_a0, qf, ln_big(q)) < 0.0 {
            offenders.push(n_big + m);
        }
        raws.push(RawInterval {
            n: n_big + m,
            lower,
            upper,
        });
    }
    if !offenders.is_empty() {
        return Err(AdmissibleError::PreconditionViolated { offenders });
    }

    let mut junctions = Vec::new();
    for m in 0..n_max {
        let q_n = big_to_f64(engine.q(n_big + m)?);
        let t1 = ln_b0 + (chosen.c0.value / gn) * q_n;
        let t2 = ln_big(engine.q(n_big + m + 1)?);
        let margin_log = t1 - t2;
        let scale = t1.abs().max(t2.abs()).max(1.0);
        let indeterminate = margin_log.abs() <= INDETERMINATE_REL * scale;
        junctions.push(JunctionMargin {
            junction_n: m,
            margin_log,
            overlaps: margin_log >= 0.0 || indeterminate,
            indeterminate,
        });
    }
    let (intervals, holes) = merge_intervals(&raws, &junctions);
    Ok(AdmissibleSet {
        intervals,
        holes,
        junctions,
        n_start: n_big,
        n_max,
        contains_zero_closure: true,
        constants: ConstantsUsed::Envelope {
            a0: chosen.a0,
            c0: chosen.c0.value,
            b0: chosen.b0,
            c1_star: chosen.c1_star,
            goth_n: budget.goth_n,
        },
    })
}

/// Empirical Diophantine certificate over the tested convergents:
/// |q_n α − p_n| ≥ γ q_n^{−τ} holds for every tested n with the reported γ.
#[derive(Debug, Clone, Serialize)]
pub struct DiophantineFit {
    pub gamma: f64,
    pub tau: f64,
    pub k0: f64,
    /// ln K₀ + τ ln q_n − ln q_{n+1} per tested n (≥ 0 when the growth chain
    /// q_{n+1} ≤ K₀ q_n^τ holds).
    pub chain_margins: Vec<f64>,
    pub chain_holds: bool,
    /// Largest deviation of a tested point from the fitted line, in nats.
    pub max_log_residual: f64,
}

/// Bryuno diagnostic over the tested range: terms ε_n = ln(q_{n+1})/q_n,
/// their partial sum, and whether the observed tail is decaying.
#[derive(Debug, Clone, Serialize)]
pub struct BrjunoReport {
    pub terms: Vec<f64>,
    pub partial_sum: f64,
    pub tail_decreasing: bool,
}

/// Per-n truth of the junction-overlap growth condition
/// q_{n+1} ≤ b₀ e^{(C₀/𝔫) q_n}, with log margin.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    pub n: usize,
    pub holds: bool,
    pub margin_log: f64,
    pub indeterminate: bool,
}

/// Frequency classification over a finite tested range; nothing here is a
/// statement about the infinite tail.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyClassification {
    pub diophantine: Option<DiophantineFit>,
    pub brjuno: BrjunoReport,
    pub condition_10_4: Vec<ConditionRow>,
    pub tested_depth: usize,
}

/// Classify α over the first `depth` convergent levels (needs q up to index
/// `depth`).
pub fn classify(
    alpha: &PartialQuotientSource,
    budget: &RegularityBudget,
    depth: usize,
) -> Result<FrequencyClassification, AdmissibleError> {
    if depth < 2 {
        return Err(AdmissibleError::InvalidBudget(format!(
            "classification depth must be >= 2, got {depth}"
        )));
    }
    let terms = brjuno_terms(alpha, depth)?;
    let partial_sum = terms.iter().sum();
    let tail_decreasing = terms.len() >= 4 && {
        let t = &terms[terms.len() - 3..];
        t[0] > t[1] && t[1] > t[2]
    };

    let mut engine = ConvergentEngine::new(alpha)?;
    // Fit ln|q_n α − p_n| ≈ ln γ − τ ln q_n over n = 1…depth−1.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in 1..depth {
        xs.push(ln_big(engine.q(n)?));
        ys.push(engine.ln_divisor(n)?);
    }
    let m = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    let diophantine = if denom.abs() < 1e-12 {
        None
    } else {
        let slope = (m * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / m;
        let tau = -slope;
        let max_log_residual = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - (intercept + slope * x)).abs())
            .fold(0.0_f64, f64::max);
        if !(0.0..=64.0).contains(&tau) || max_log_residual > MAX_FIT_LOG_RESIDUAL {
            None
        } else {
            // Certificate: the largest γ valid over the tested range.
            let ln_gamma = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| y + tau * x)
                .fold(f64::INFINITY, f64::min);
            let gamma = ln_gamma.exp();
            let alpha_f = crate::contfrac::AlphaEval::new(alpha)?.alpha_f64()?;
            let k0 = (1.0 / gamma) * (1.0 + 4.0 * alpha_f * alpha_f).powf(tau / 2.0);
            let mut chain_margins = Vec::new();
            for n in 1..depth {
                let margin = k0.ln() + tau * ln_big(engine.q(n)?) - ln_big(engine.q(n + 1)?);
                chain_margins.push(margin);
            }
            let chain_holds = chain_margins.iter().all(|&v| v >= 0.0);
            Some(DiophantineFit {
                gamma,
                tau,
                k0,
                chain_margins,
                chain_holds,
                max_log_residual,
            })
        }
    };

    let gn = budget.goth_n as f64;
    let c0 = compute_c0(budget);
    let ln_b0 = budget.eta0.ln() / (gn * (gn + 1.0));
    let mut condition_10_4 = Vec::new();
    for n in 0..depth {
        let t1 = ln_b0 + (c0.value / gn) * big_to_f64(engine.q(n)?);
        let t2 = ln_big(engine.q(n + 1)?);
        let margin_log = t1 - t2;
        let scale = t1.abs().max(t2.abs()).max(1.0);
        let indeterminate = margin_log.abs() <= INDETERMINATE_REL * scale;
        condition_10_4.push(ConditionRow {
            n,
            holds: margin_log >= 0.0 || indeterminate,
            margin_log,
            indeterminate,
        });
    }

    Ok(FrequencyClassification {
        diophantine,
        brjuno: BrjunoReport {
            terms,
            partial_sum,
            tail_decreasing,
        },
        condition_10_4,
        tested_depth: depth,
    })
}

/// Exact-rational endpoint comparison backing the inclusion
/// I_n(C₁*, C₀) ⊆ 𝔍_{n−N}: with a₀ rational, the upper endpoints satisfy
/// (C₁* q_n)^{−𝔫−1} = a₀ q_N / q_n^{𝔫+1} ≤ a₀ / q_n^𝔫, with equality iff
/// n = N. Returns (lhs, rhs) as exact rationals.
pub fn upper_endpoint_pair_exact(
    q_n: &BigInt,
    q_n_start: &BigInt,
    a0: &BigRational,
    goth_n: u32,
) -> (BigRational, BigRational) {
    let qn = BigRational::from_integer(q_n.clone());
    let qn_pow = |e: u32| -> BigRational {
        let mut acc = BigRational::one();
        for _ in 0..e {
            acc *= &qn;
        }
        acc
    };
    let lhs = a0 * BigRational::from_integer(q_n_start.clone()) / qn_pow(goth_n + 1);
    let rhs = a0 / qn_pow(goth_n);
    (lhs, rhs)
}
