//! Certified continued-fraction arithmetic for the frequency ratio α.
//!
//! Everything downstream divides by the small divisors ω·ν = ν₁ + ν₂α, so this
//! module never works with a bare floating-point α. A frequency is described
//! by a [`PartialQuotientSource`] that can produce partial quotients with a
//! certificate (exactly, for explicit lists and quadratic irrationals; up to a
//! proven decimal tolerance, for decimal strings), and every derived quantity
//! carries an exact rational enclosure from which floats are extracted last.
//!
//! Convergents follow the classical recurrences
//! `p₀ = a₀, p₁ = a₁a₀+1, p_k = a_k p_{k−1} + p_{k−2}` and
//! `q₀ = 1, q₁ = a₁, q_k = a_k q_{k−1} + q_{k−2}`; consecutive convergents
//! straddle α, which provides the enclosures.

use std::collections::HashMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Hard cap on exhaustive small-divisor scans: ranges with q_n above this are
/// refused rather than ground through.
pub const BRUTE_FORCE_LIMIT: u64 = 100_000;

/// Errors from certified continued-fraction computations.
#[derive(Debug, thiserror::Error)]
pub enum CfError {
    /// The source cannot certify enough partial quotients for the request.
    #[error("insufficient certified precision: {0}")]
    InsufficientPrecision(String),
    /// An exhaustive scan would exceed the brute-force budget.
    #[error("brute-force range too large: q_n = {q_n} exceeds limit {limit}")]
    BruteForceTooLarge { q_n: String, limit: u64 },
    /// The source description itself is malformed.
    #[error("invalid partial-quotient source: {0}")]
    InvalidSource(String),
    /// A structurally invalid request (e.g. an index outside the defined range).
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Which root of a quadratic polynomial defines the irrational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootSign {
    /// (−b + √(b²−4ac)) / (2a)
    Positive,
    /// (−b − √(b²−4ac)) / (2a)
    Negative,
}

/// A supplier of partial quotients [a₀; a₁, a₂, …] with a precision
/// certificate.
#[derive(Debug, Clone)]
pub enum PartialQuotientSource {
    /// A finite list. With `strict = false` the last quotient repeats forever
    /// (an eventually periodic tail, hence a quadratic irrational); with
    /// `strict = true` requests past the end fail with
    /// [`CfError::InsufficientPrecision`].
    ExplicitList {
        a0: BigInt,
        tail: Vec<BigUint>,
        strict: bool,
    },
    /// The chosen root of `a x² + b x + c` with positive non-square
    /// discriminant. Quotients are generated exactly and indefinitely.
    QuadraticIrrational { a: i64, b: i64, c: i64, root: RootSign },
    /// A decimal literal whose first `certified_digits` fractional digits are
    /// guaranteed correct to ± one unit in the last certified place.
    /// Quotients are extracted while the interval certifies them.
    DecimalString {
        digits: String,
        certified_digits: usize,
    },
}

impl PartialQuotientSource {
    /// The golden ratio (1+√5)/2 = [1; 1, 1, …].
    pub fn golden() -> Self {
        PartialQuotientSource::ExplicitList {
            a0: BigInt::one(),
            tail: vec![BigUint::one()],
            strict: false,
        }
    }

    /// √2 = [1; 2, 2, …] as the positive root of x² − 2.
    pub fn sqrt2() -> Self {
        PartialQuotientSource::QuadraticIrrational {
            a: 1,
            b: 0,
            c: -2,
            root: RootSign::Positive,
        }
    }

    /// Explicit list from machine integers.
    pub fn explicit(a0: i64, tail: &[u64], strict: bool) -> Result<Self, CfError> {
        let src = PartialQuotientSource::ExplicitList {
            a0: BigInt::from(a0),
            tail: tail.iter().map(|&a| BigUint::from(a)).collect(),
            strict,
        };
        src.validate()?;
        Ok(src)
    }

    /// Explicit list with arbitrary-precision tail entries.
    pub fn explicit_big(a0: BigInt, tail: Vec<BigUint>, strict: bool) -> Result<Self, CfError> {
        let src = PartialQuotientSource::ExplicitList { a0, tail, strict };
        src.validate()?;
        Ok(src)
    }

    /// Chosen root of `a x² + b x + c`.
    pub fn quadratic(a: i64, b: i64, c: i64, root: RootSign) -> Result<Self, CfError> {
        let src = PartialQuotientSource::QuadraticIrrational { a, b, c, root };
        src.validate()?;
        Ok(src)
    }

    /// Decimal literal with a certified fractional-digit count.
    pub fn decimal(digits: &str, certified_digits: usize) -> Result<Self, CfError> {
        let src = PartialQuotientSource::DecimalString {
            digits: digits.to_string(),
            certified_digits,
        };
        src.validate()?;
        Ok(src)
    }

    fn validate(&self) -> Result<(), CfError> {
        match self {
            PartialQuotientSource::ExplicitList { a0, tail, strict } => {
                if tail.iter().any(|a| a.is_zero()) {
                    return Err(CfError::InvalidSource(
                        "partial quotients a_k with k >= 1 must be >= 1".into(),
                    ));
                }
                if !strict && tail.is_empty() && a0 < &BigInt::one() {
                    return Err(CfError::InvalidSource(
                        "a repeating single quotient must be >= 1".into(),
                    ));
                }
                Ok(())
            }
            PartialQuotientSource::QuadraticIrrational { a, b, c, .. } => {
                if *a == 0 {
                    return Err(CfError::InvalidSource("leading coefficient must be nonzero".into()));
                }
                let disc = BigInt::from(*b) * BigInt::from(*b)
                    - BigInt::from(4) * BigInt::from(*a) * BigInt::from(*c);
                if disc <= BigInt::zero() {
                    return Err(CfError::InvalidSource("discriminant must be positive".into()));
                }
                let root = disc.sqrt();
                if &root * &root == disc {
                    return Err(CfError::InvalidSource(
                        "discriminant is a perfect square: the root is rational".into(),
                    ));
                }
                Ok(())
            }
            PartialQuotientSource::DecimalString {
                digits,
                certified_digits,
            } => {
                let (_, frac_len) = parse_decimal(digits)?;
                if *certified_digits == 0 || *certified_digits > frac_len {
                    return Err(CfError::InvalidSource(format!(
                        "certified_digits must be in 1..={frac_len} for this literal"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Parse a decimal literal into an exact rational plus its fractional length.
fn parse_decimal(s: &str) -> Result<(BigRational, usize), CfError> {
    let s = s.trim();
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s),
    };
    let mut parts = body.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next().unwrap_or("");
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(CfError::InvalidSource("empty decimal literal".into()));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(CfError::InvalidSource(format!("malformed decimal literal {s:?}")));
    }
    let digits: String = format!("{int_part}{frac_part}");
    let num: BigInt = digits.parse().map_err(|_| {
        CfError::InvalidSource(format!("malformed decimal literal {s:?}"))
    })?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok((
        BigRational::new(BigInt::from(sign) * num, den),
        frac_part.len(),
    ))
}

/// Memoizing stream of certified partial quotients.
struct QuotientStream {
    produced: Vec<BigInt>,
    state: StreamState,
}

enum StreamState {
    Explicit {
        a0: BigInt,
        tail: Vec<BigUint>,
        strict: bool,
    },
    /// Surd iteration on (P + √D)/Q with Q | D − P².
    Quadratic {
        p: BigInt,
        q: BigInt,
        d: BigInt,
        sqrt_d: BigInt,
    },
    /// Interval Gauss map on an exact rational enclosure lo < α < hi.
    Decimal {
        lo: BigRational,
        hi: BigRational,
        exhausted: bool,
    },
}

impl QuotientStream {
    fn new(src: &PartialQuotientSource) -> Result<Self, CfError> {
        src.validate()?;
        let state = match src {
            PartialQuotientSource::ExplicitList { a0, tail, strict } => StreamState::Explicit {
                a0: a0.clone(),
                tail: tail.clone(),
                strict: *strict,
            },
            PartialQuotientSource::QuadraticIrrational { a, b, c, root } => {
                let d = BigInt::from(*b) * BigInt::from(*b)
                    - BigInt::from(4) * BigInt::from(*a) * BigInt::from(*c);
                let sqrt_d = d.sqrt();
                let (p, q) = match root {
                    RootSign::Positive => (BigInt::from(-*b), BigInt::from(2 * *a)),
                    RootSign::Negative => (BigInt::from(*b), BigInt::from(-2 * *a)),
                };
                StreamState::Quadratic { p, q, d, sqrt_d }
            }
            PartialQuotientSource::DecimalString {
                digits,
                certified_digits,
            } => {
                let (value, _) = parse_decimal(digits)?;
                let ulp = BigRational::new(BigInt::one(), BigInt::from(10u32).pow(*certified_digits as u32));
                StreamState::Decimal {
                    lo: &value - &ulp,
                    hi: &value + &ulp,
                    exhausted: false,
                }
            }
        };
        Ok(QuotientStream {
            produced: Vec::new(),
            state,
        })
    }

    /// Certified quotient a_k, producing earlier ones as needed.
    fn get(&mut self, k: usize) -> Result<&BigInt, CfError> {
        while self.produced.len() <= k {
            let next = self.step()?;
            self.produced.push(next);
        }
        Ok(&self.produced[k])
    }

    fn step(&mut self) -> Result<BigInt, CfError> {
        let k = self.produced.len();
        match &mut self.state {
            StreamState::Explicit { a0, tail, strict } => {
                if k == 0 {
                    Ok(a0.clone())
                } else if k <= tail.len() {
                    Ok(BigInt::from(tail[k - 1].clone()))
                } else if *strict {
                    Err(CfError::InsufficientPrecision(format!(
                        "strict explicit list ends after a_{}",
                        tail.len()
                    )))
                } else if let Some(last) = tail.last() {
                    Ok(BigInt::from(last.clone()))
                } else {
                    Ok(a0.clone())
                }
            }
            StreamState::Quadratic { p, q, d, sqrt_d } => {
                // a = floor((P + √D)/Q); floor survives replacing √D by its
                // integer part because √D is irrational.
                let a = if q.is_positive() {
                    (&*p + &*sqrt_d).div_floor(q)
                } else {
                    (-&*p - &*sqrt_d - BigInt::one()).div_floor(&-&*q)
                };
                let p_next = &a * &*q - &*p;
                let q_next = (&*d - &p_next * &p_next).div_floor(q);
                debug_assert!(!q_next.is_zero(), "surd iteration reached a rational point");
                debug_assert_eq!(&(&*d - &p_next * &p_next) % &*q, BigInt::zero());
                *p = p_next;
                *q = q_next;
                Ok(a)
            }
            StreamState::Decimal { lo, hi, exhausted } => {
                if *exhausted {
                    return Err(CfError::InsufficientPrecision(format!(
                        "decimal literal certifies only {k} partial quotients"
                    )));
                }
                let a = lo.floor();
                if hi.floor() != a || *lo == a {
                    *exhausted = true;
                    return Err(CfError::InsufficientPrecision(format!(
                        "decimal literal certifies only {k} partial quotients"
                    )));
                }
                let lo_next = (&*hi - &a).recip();
                let hi_next = (&*lo - &a).recip();
                *lo = lo_next;
                *hi = hi_next;
                Ok(a.to_integer())
            }
        }
    }
}

/// One certified convergent p_k/q_k (in lowest terms, q_k > 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Convergent {
    pub k: usize,
    pub p: BigInt,
    pub q: BigInt,
}

impl fmt::Display for Convergent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

/// Lazily grown table of convergents for one source.
pub struct ConvergentEngine {
    stream: QuotientStream,
    p: Vec<BigInt>,
    q: Vec<BigInt>,
}

impl ConvergentEngine {
    pub fn new(src: &PartialQuotientSource) -> Result<Self, CfError> {
        Ok(ConvergentEngine {
            stream: QuotientStream::new(src)?,
            p: Vec::new(),
            q: Vec::new(),
        })
    }

    fn grow_to(&mut self, k: usize) -> Result<(), CfError> {
        while self.p.len() <= k {
            let i = self.p.len();
            let a = self.stream.get(i)?.clone();
            let (p_i, q_i) = match i {
                0 => (a, BigInt::one()),
                1 => (&a * &self.p[0] + BigInt::one(), a),
                _ => (
                    &a * &self.p[i - 1] + &self.p[i - 2],
                    &a * &self.q[i - 1] + &self.q[i - 2],
                ),
            };
            debug_assert!(q_i.is_positive());
            self.p.push(p_i);
            self.q.push(q_i);
        }
        Ok(())
    }

    pub fn convergent(&mut self, k: usize) -> Result<Convergent, CfError> {
        self.grow_to(k)?;
        Ok(Convergent {
            k,
            p: self.p[k].clone(),
            q: self.q[k].clone(),
        })
    }

    pub fn q(&mut self, k: usize) -> Result<&BigInt, CfError> {
        self.grow_to(k)?;
        Ok(&self.q[k])
    }

    /// Exact value of the k-th convergent.
    pub fn value(&mut self, k: usize) -> Result<BigRational, CfError> {
        self.grow_to(k)?;
        Ok(BigRational::new(self.p[k].clone(), self.q[k].clone()))
    }

    /// Strict enclosure of α from the consecutive pair (x_k, x_{k+1}),
    /// returned sorted: lo < α < hi.
    pub fn bracket(&mut self, k: usize) -> Result<(BigRational, BigRational), CfError> {
        let a = self.value(k)?;
        let b = self.value(k + 1)?;
        Ok(if a < b { (a, b) } else { (b, a) })
    }

    /// Certified natural log of |q_k α − p_k|, deepening the expansion until
    /// the enclosure has relative width below 1e−9.
    pub fn ln_divisor(&mut self, k: usize) -> Result<f64, CfError> {
        let c = self.convergent(k)?;
        let qk = BigRational::from_integer(c.q);
        let pk = BigRational::from_integer(c.p);
        let tol = BigRational::new(BigInt::one(), BigInt::from(10u64).pow(9));
        let mut depth = k + 2;
        loop {
            let (lo, hi) = self.bracket(depth)?;
            let a = (&qk * &lo - &pk).abs();
            let b = (&qk * &hi - &pk).abs();
            let d_lo = a.clone().min(b.clone());
            let d_hi = a.max(b);
            if d_lo.is_positive() && &d_hi - &d_lo <= &d_lo * &tol {
                return Ok(0.5 * (ln_rational(&d_lo) + ln_rational(&d_hi)));
            }
            depth += 2;
        }
    }
}

/// Natural log of a positive rational, exact even far outside f64 range.
pub fn ln_rational(x: &BigRational) -> f64 {
    debug_assert!(x.is_positive());
    ln_big(&x.numer().abs()) - ln_big(x.denom())
}

/// First `count` convergents of the source.
pub fn convergents(
    src: &PartialQuotientSource,
    count: usize,
) -> Result<Vec<Convergent>, CfError> {
    let mut engine = ConvergentEngine::new(src)?;
    (0..count).map(|k| engine.convergent(k)).collect()
}

/// Rigorous data about how well x_k approximates α.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub k: usize,
    /// Exact sandwich bounds 1/(q_k(q_k+q_{k+1})) and 1/(q_k q_{k+1}).
    pub sandwich_lower: BigRational,
    pub sandwich_upper: BigRational,
    /// Exact enclosure of |α − p_k/q_k| from deeper convergents.
    pub enclosure: (BigRational, BigRational),
    /// Certified double-precision value of |α − p_k/q_k|.
    pub value: f64,
}

/// `|α − p_k/q_k|` with exact sandwich bounds and a certified enclosure whose
/// relative width is below 1e−12 (deepening the expansion as needed).
pub fn approximation_gap(src: &PartialQuotientSource, k: usize) -> Result<GapReport, CfError> {
    let mut engine = ConvergentEngine::new(src)?;
    let xk = engine.value(k)?;
    let qk = engine.q(k)?.clone();
    let qk1 = engine.q(k + 1)?.clone();
    let sandwich_lower = BigRational::new(BigInt::one(), &qk * (&qk + &qk1));
    let sandwich_upper = BigRational::new(BigInt::one(), &qk * &qk1);

    let tol = BigRational::new(BigInt::one(), BigInt::from(10u32).pow(12));
    let mut depth = k + 1;
    loop {
        let (lo, hi) = engine.bracket(depth)?;
        let d_lo = (&lo - &xk).abs().min((&hi - &xk).abs());
        let d_hi = (&lo - &xk).abs().max((&hi - &xk).abs());
        // α lies strictly between lo and hi, and x_k lies outside for depth > k.
        if &d_hi - &d_lo <= &d_lo * &tol {
            let value = rational_to_f64(&((&d_lo + &d_hi) / BigRational::from_integer(2.into())));
            return Ok(GapReport {
                k,
                sandwich_lower,
                sandwich_upper,
                enclosure: (d_lo, d_hi),
                value,
            });
        }
        depth += 2;
    }
}

/// A certified small divisor ω·ν = ν₁ + ν₂α.
#[derive(Debug, Clone, Copy)]
pub struct SmallDivisor {
    /// Signed midpoint of the certified enclosure.
    pub value: f64,
    /// Certified signed bounds: lower ≤ ν₁ + ν₂α ≤ upper.
    pub lower: f64,
    pub upper: f64,
    /// Certified sign of the divisor (never zero: α is irrational).
    pub signum: i32,
    /// True when the value is an exact integer (ν₂ = 0).
    pub exact: bool,
}

/// Reusable certified evaluator for α and the divisors ω·ν.
///
/// Holds an exact rational enclosure of α derived from consecutive
/// convergents and deepens it on demand; each query returns bounds that are
/// valid for the true α, not for a floating approximation of it.
pub struct AlphaEval {
    engine: ConvergentEngine,
    depth: usize,
    lo: BigRational,
    hi: BigRational,
    exhausted: bool,
}

impl AlphaEval {
    pub fn new(src: &PartialQuotientSource) -> Result<Self, CfError> {
        let mut engine = ConvergentEngine::new(src)?;
        let (lo, hi) = engine.bracket(0)?;
        Ok(AlphaEval {
            engine,
            depth: 0,
            lo,
            hi,
            exhausted: false,
        })
    }

    /// Tighten the enclosure; false once the source has no more certified
    /// quotients (the best-known enclosure is kept).
    fn deepen(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        let next = self.depth + 2;
        match self.engine.bracket(next) {
            Ok((lo, hi)) => {
                self.depth = next;
                if lo > self.lo {
                    self.lo = lo;
                }
                if hi < self.hi {
                    self.hi = hi;
                }
                true
            }
            Err(_) => {
                self.exhausted = true;
                false
            }
        }
    }

    /// Certified α as a double, accurate to the last bit the enclosure allows.
    pub fn alpha_f64(&mut self) -> Result<f64, CfError> {
        let two = BigRational::from_integer(2.into());
        loop {
            let width = &self.hi - &self.lo;
            let mid = (&self.lo + &self.hi) / &two;
            if width <= mid.abs() * BigRational::new(BigInt::one(), BigInt::from(10u64).pow(17)) {
                return Ok(rational_to_f64(&mid));
            }
            if !self.deepen() {
                return Err(CfError::InsufficientPrecision(
                    "enclosure of alpha cannot reach double precision".into(),
                ));
            }
        }
    }

    /// Certified ω·ν with relative error at most 1e−3.
    pub fn eval(&mut self, nu: (i64, i64)) -> Result<SmallDivisor, CfError> {
        self.eval_to(nu, 1e-3)
    }

    /// Certified ω·ν = ν₁ + ν₂α with sign determined and relative enclosure
    /// width at most `rel_tol`.
    pub fn eval_to(&mut self, nu: (i64, i64), rel_tol: f64) -> Result<SmallDivisor, CfError> {
        let (n1, n2) = nu;
        if n2 == 0 {
            let v = n1 as f64;
            return Ok(SmallDivisor {
                value: v,
                lower: v,
                upper: v,
                signum: n1.signum() as i32,
                exact: true,
            });
        }
        let tol = f64_to_rational(rel_tol);
        let n1r = BigRational::from_integer(n1.into());
        let n2r = BigRational::from_integer(n2.into());
        loop {
            let (mut s_lo, mut s_hi) = (&n1r + &n2r * &self.lo, &n1r + &n2r * &self.hi);
            if s_lo > s_hi {
                std::mem::swap(&mut s_lo, &mut s_hi);
            }
            let sign_known = s_lo.is_positive() || s_hi.is_negative();
            if sign_known {
                let width = &s_hi - &s_lo;
                let mag_lo = s_lo.abs().min(s_hi.abs());
                if width <= &mag_lo * &tol {
                    let mid = (&s_lo + &s_hi) / BigRational::from_integer(2.into());
                    return Ok(SmallDivisor {
                        value: rational_to_f64(&mid),
                        lower: rational_to_f64(&s_lo),
                        upper: rational_to_f64(&s_hi),
                        signum: if s_lo.is_positive() { 1 } else { -1 },
                        exact: false,
                    });
                }
            }
            if !self.deepen() {
                return Err(CfError::InsufficientPrecision(format!(
                    "cannot certify omega.nu for nu = ({n1}, {n2}) at relative tolerance {rel_tol}"
                )));
            }
        }
    }
}

/// Certified ω·ν with relative error ≤ 1e−3 (one-shot convenience wrapper).
pub fn small_divisor(
    alpha: &PartialQuotientSource,
    nu: (i64, i64),
) -> Result<SmallDivisor, CfError> {
    AlphaEval::new(alpha)?.eval(nu)
}

/// Signed divisors ω·ν precomputed over the box |ν₁| ≤ r, |ν₂| ≤ r.
pub struct DivisorTable {
    map: HashMap<(i64, i64), f64>,
    pub alpha: f64,
    pub radius: i64,
}

impl DivisorTable {
    /// Build with certified relative error ≤ `rel_tol` per entry.
    pub fn build(
        eval: &mut AlphaEval,
        radius: i64,
        rel_tol: f64,
    ) -> Result<DivisorTable, CfError> {
        let mut map = HashMap::new();
        for n2 in -radius..=radius {
            for n1 in -radius..=radius {
                if (n1, n2) == (0, 0) {
                    continue;
                }
                map.insert((n1, n2), eval.eval_to((n1, n2), rel_tol)?.value);
            }
        }
        Ok(DivisorTable {
            map,
            alpha: eval.alpha_f64()?,
            radius,
        })
    }

    /// Signed ω·ν; None outside the precomputed box (and for ν = 0).
    pub fn get(&self, nu: (i64, i64)) -> Option<f64> {
        self.map.get(&nu).copied()
    }
}

/// Result of the exhaustive best-approximation check at level n.
#[derive(Debug, Clone)]
pub struct BestApproxReport {
    pub n: usize,
    pub q_n: BigInt,
    /// True when 0 < |ν₂| < q_n admits no candidates at all.
    pub vacuous: bool,
    /// Candidate attaining the smallest |ω·ν| over the legal range.
    pub minimizer: Option<(i64, i64)>,
    /// |ω·ν| at the minimizer.
    pub min_value: f64,
    /// Reference value |q_{n−1} α − p_{n−1}|.
    pub reference: f64,
    /// min_value − reference (strictly positive when the claim holds).
    pub margin: f64,
    /// reference − 1/(2 q_n) (strictly positive when the claim holds).
    pub chain_margin: f64,
    /// |ν₂ α − nearest| at the excluded index |ν₂| = q_{n−1}; equals the
    /// reference by the definition of best approximations.
    pub excluded_value: Option<f64>,
    pub holds: bool,
}

/// Exhaustively verify that every ν with 0 < |ν₂| < q_n, |ν₂| ≠ q_{n−1}
/// satisfies |ν₁ + ν₂α| > |q_{n−1}α − p_{n−1}| > 1/(2q_n).
///
/// All comparisons run in exact integer arithmetic against a convergent-pair
/// enclosure of α that is deepened until every comparison is certified.
pub fn verify_best_approx(
    alpha: &PartialQuotientSource,
    n: usize,
) -> Result<BestApproxReport, CfError> {
    if n == 0 {
        return Err(CfError::InvalidRequest(
            "the reference index n must be at least 1".into(),
        ));
    }
    let mut engine = ConvergentEngine::new(alpha)?;
    let q_n_big = engine.q(n)?.clone();
    if q_n_big > BigInt::from(BRUTE_FORCE_LIMIT) {
        return Err(CfError::BruteForceTooLarge {
            q_n: q_n_big.to_string(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let q_n = q_n_big.to_u64().unwrap() as i64;
    let cref = engine.convergent(n - 1)?;
    let q_ref = cref.q.to_i64().unwrap();

    // Deepen until the enclosure is far finer than any distance involved and
    // every reported value is relatively tight.
    let fine = BigInt::from(10u64).pow(13);
    let tight = |lo: &BigInt, hi: &BigInt| -> bool {
        lo.is_positive() && (hi - lo) * &fine <= *lo
    };
    let mut depth = n + 2;
    'retry: for _ in 0..40 {
        let (lo, hi) = engine.bracket(depth)?;
        // Common-denominator form: α ∈ (l/d, h/d) exactly.
        let d = lo.denom() * hi.denom();
        let l = lo.numer() * hi.denom();
        let h = hi.numer() * lo.denom();
        let two_d = BigInt::from(2) * &d;

        // Interval for a distance |ν₂α − m*| with m* the nearest integer.
        // Returns numerators over denominator d, or None when uncertified.
        let dist = |n2: i64| -> Option<(BigInt, BigInt)> {
            let tl = BigInt::from(n2) * &l;
            let th = BigInt::from(n2) * &h;
            let m_lo = (BigInt::from(2) * &tl + &d).div_floor(&two_d);
            let m_hi = (BigInt::from(2) * &th + &d).div_floor(&two_d);
            if m_lo != m_hi {
                return None;
            }
            let md = &m_lo * &d;
            let (a, b) = (&tl - &md, &th - &md);
            if a.is_negative() && b.is_positive() {
                return None;
            }
            let (mut x, mut y) = (a.abs(), b.abs());
            if x > y {
                std::mem::swap(&mut x, &mut y);
            }
            Some((x, y))
        };

        // Reference |q_{n−1}α − p_{n−1}| over the same denominator.
        let r_a = &cref.q * &l - &cref.p * &d;
        let r_b = &cref.q * &h - &cref.p * &d;
        if r_a.is_negative() && r_b.is_positive() {
            depth += 4;
            continue 'retry;
        }
        let (mut r_lo, mut r_hi) = (r_a.abs(), r_b.abs());
        if r_lo > r_hi {
            std::mem::swap(&mut r_lo, &mut r_hi);
        }
        if !tight(&r_lo, &r_hi) {
            depth += 4;
            continue 'retry;
        }

        let mut best: Option<(i64, BigInt, BigInt)> = None;
        for n2 in 1..q_n {
            if n2 == q_ref {
                continue;
            }
            let Some((d_lo, d_hi)) = dist(n2) else {
                depth += 4;
                continue 'retry;
            };
            match &best {
                Some((_, _, best_hi)) if &d_lo > best_hi => {}
                Some((_, best_lo, _)) if &d_hi < best_lo => best = Some((n2, d_lo, d_hi)),
                None => best = Some((n2, d_lo, d_hi)),
                _ => {
                    // Overlapping enclosures between two candidates.
                    depth += 4;
                    continue 'retry;
                }
            }
        }

        let chain_ok = BigInt::from(2) * q_n * &r_lo > d;
        let scale = rational_to_f64(&BigRational::new(BigInt::one(), d.clone()));
        let reference = big_to_f64(&(&r_lo + &r_hi)) / 2.0 * scale;
        let chain_margin = reference - 1.0 / (2.0 * q_n as f64);
        let excluded_value = if q_ref > 0 && q_ref < q_n {
            match dist(q_ref) {
                Some((a, b)) if tight(&a, &b) => Some(big_to_f64(&(&a + &b)) / 2.0 * scale),
                _ => {
                    depth += 4;
                    continue 'retry;
                }
            }
        } else {
            None
        };

        let Some((n2_best, b_lo, b_hi)) = best else {
            return Ok(BestApproxReport {
                n,
                q_n: q_n_big,
                vacuous: true,
                minimizer: None,
                min_value: f64::INFINITY,
                reference,
                margin: f64::INFINITY,
                chain_margin,
                excluded_value,
                holds: chain_ok,
            });
        };
        if (b_lo <= r_hi && r_lo <= b_hi) || !tight(&b_lo, &b_hi) {
            depth += 4;
            continue 'retry;
        }
        let min_value = big_to_f64(&(&b_lo + &b_hi)) / 2.0 * scale;
        // Recover ν₁ = −(nearest integer to ν₂α).
        let t_mid = BigInt::from(n2_best) * (&l + &h);
        let n1 = -((t_mid + &d).div_floor(&two_d)).to_i64().unwrap();
        return Ok(BestApproxReport {
            n,
            q_n: q_n_big,
            vacuous: false,
            minimizer: Some((n1, n2_best)),
            min_value,
            reference,
            margin: min_value - reference,
            chain_margin,
            excluded_value,
            holds: b_lo > r_hi && chain_ok,
        });
    }
    Err(CfError::InsufficientPrecision(
        "best-approximation scan could not be certified".into(),
    ))
}

/// Bryuno sequence ε_n = log(q_{n+1})/q_n for n = 0…count−1.
pub fn brjuno_terms(src: &PartialQuotientSource, count: usize) -> Result<Vec<f64>, CfError> {
    let mut engine = ConvergentEngine::new(src)?;
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let log_q_next = ln_big(engine.q(n + 1)?);
        let q_n = big_to_f64(engine.q(n)?);
        out.push(log_q_next / q_n);
    }
    Ok(out)
}

/// Natural log of a positive big integer, accurate to ~1 ulp even when the
/// integer overflows f64.
pub fn ln_big(x: &BigInt) -> f64 {
    debug_assert!(x.is_positive());
    let bits = x.bits();
    if bits <= 53 {
        return (x.to_f64().unwrap()).ln();
    }
    let shift = bits - 53;
    let top: BigInt = x >> shift;
    (top.to_f64().unwrap()).ln() + (shift as f64) * std::f64::consts::LN_2
}

/// Big integer to f64, saturating to ±∞ on overflow.
pub fn big_to_f64(x: &BigInt) -> f64 {
    x.to_f64().unwrap_or(if x.is_negative() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    })
}

/// Round an exact rational to the nearest double, falling back to a
/// log-space estimate when numerator or denominator overflow f64 range.
pub fn rational_to_f64(x: &BigRational) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    if let Some(v) = x.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let sign = if x.is_negative() { -1.0 } else { 1.0 };
    sign * (ln_big(&x.numer().abs()) - ln_big(x.denom())).exp()
}

fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}
