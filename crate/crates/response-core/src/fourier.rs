//! Truncated two-index Fourier algebra on 𝕋².
//!
//! Fields are finite sums u(ψ) = Σ_ν u_ν e^{iν·ψ} with ν ∈ ℤ² restricted to
//! the sup-norm ball |ν|_∞ ≤ N_modes. Real-valued fields satisfy
//! u_{−ν} = conj(u_ν); the response-solution unknown additionally has zero
//! mean (u_{(0,0)} = 0).
//!
//! Products and polynomial composition g(c + ζ + u) are computed on a
//! zero-padded spectral grid (size a power of two ≥ 2·(degree·N_modes) + 1),
//! which is alias-free for the full product, so the returned coefficients are
//! exact convolutions up to round-off; a direct O(M²) convolution path is
//! kept alongside as an independent oracle and is never removed.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::contfrac::PartialQuotientSource;

#[derive(Debug, thiserror::Error)]
pub enum FourierError {
    /// The decay fit needs at least five populated ℓ¹ shells.
    #[error("decay fit needs at least 5 nonzero shells, found {found}")]
    TooFewShells { found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// A truncated Fourier field u(ψ) = Σ_{|ν|_∞ ≤ N_modes} u_ν e^{iν·ψ}.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    /// Truncation radius in the sup norm: stored modes satisfy |ν|_∞ ≤ n_modes.
    pub n_modes: usize,
    /// Sparse coefficient storage; absent modes are zero.
    pub coeffs: BTreeMap<(i64, i64), Complex64>,
    /// Marker that the ν = (0,0) coefficient is identically zero.
    pub zero_mean: bool,
}

impl FourierField {
    /// The zero field at truncation radius `n_modes`.
    pub fn new(n_modes: usize) -> Self {
        FourierField {
            n_modes,
            coeffs: BTreeMap::new(),
            zero_mean: true,
        }
    }

    /// cos(ν·ψ): coefficients ½ at ±ν.
    pub fn cosine(nu: (i64, i64)) -> Self {
        let radius = nu.0.unsigned_abs().max(nu.1.unsigned_abs()) as usize;
        let mut field = FourierField::new(radius);
        field.set_pair(nu, Complex64::new(0.5, 0.0));
        field
    }

    fn in_ball(&self, nu: (i64, i64)) -> bool {
        nu.0.unsigned_abs() as usize <= self.n_modes && nu.1.unsigned_abs() as usize <= self.n_modes
    }

    /// Insert a single coefficient without symmetrization (test scaffolding
    /// and deserialization; reality is the caller's responsibility).
    pub fn insert_raw(&mut self, nu: (i64, i64), value: Complex64) {
        debug_assert!(self.in_ball(nu), "mode {nu:?} outside ball {}", self.n_modes);
        if nu == (0, 0) && value != Complex64::ZERO {
            self.zero_mean = false;
        }
        self.coeffs.insert(nu, value);
    }

    /// Set u_ν = value and u_{−ν} = conj(value), preserving reality.
    pub fn set_pair(&mut self, nu: (i64, i64), value: Complex64) {
        self.insert_raw(nu, value);
        if nu != (0, 0) {
            self.insert_raw((-nu.0, -nu.1), value.conj());
        } else if value.im != 0.0 {
            debug_assert!(value.im == 0.0, "mean of a real field must be real");
        }
    }

    /// The coefficient u_ν (zero when absent).
    pub fn get(&self, nu: (i64, i64)) -> Complex64 {
        self.coeffs.get(&nu).copied().unwrap_or(Complex64::ZERO)
    }

    /// Largest violation of u_{−ν} = conj(u_ν) over stored modes.
    pub fn reality_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(&(n1, n2), z)| (*z - self.get((-n1, -n2)).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// ℓ¹ mass Σ_ν |u_ν| (bounds sup |u|).
    pub fn mode_l1(&self) -> f64 {
        self.coeffs.values().map(|z| z.norm()).sum()
    }

    /// Pointwise evaluation u(ψ) by direct summation (exact for any ψ, used
    /// for time-grid residuals where ψ = ωt is not a torus grid point).
    pub fn eval_at(&self, psi1: f64, psi2: f64) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (&(n1, n2), z) in &self.coeffs {
            let phase = (n1 as f64) * psi1 + (n2 as f64) * psi2;
            acc += z * Complex64::new(phase.cos(), phase.sin());
        }
        acc
    }

    /// a + b at the larger truncation radius.
    pub fn add(&self, other: &FourierField) -> FourierField {
        let mut out = FourierField::new(self.n_modes.max(other.n_modes));
        out.coeffs = self.coeffs.clone();
        for (&nu, z) in &other.coeffs {
            *out.coeffs.entry(nu).or_insert(Complex64::ZERO) += z;
        }
        out.zero_mean = out.get((0, 0)) == Complex64::ZERO;
        out
    }

    /// a − b at the larger truncation radius.
    pub fn sub(&self, other: &FourierField) -> FourierField {
        self.add(&other.scale(-1.0))
    }

    /// s·u.
    pub fn scale(&self, s: f64) -> FourierField {
        let mut out = self.clone();
        for z in out.coeffs.values_mut() {
            *z *= s;
        }
        out
    }

    /// Shell maxima M_s = max_{|ν|₁ = s} |u_ν| for the decay diagnostic.
    fn shell_maxima(&self) -> BTreeMap<u64, f64> {
        let mut shells: BTreeMap<u64, f64> = BTreeMap::new();
        for (&(n1, n2), z) in &self.coeffs {
            let s = n1.unsigned_abs() + n2.unsigned_abs();
            let m = shells.entry(s).or_insert(0.0);
            *m = m.max(z.norm());
        }
        shells
    }
}

#[derive(Serialize, Deserialize)]
struct ModeJson {
    nu: [i64; 2],
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    #[serde(rename = "N_modes")]
    n_modes: usize,
    modes: Vec<ModeJson>,
}

impl Serialize for FourierField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FieldJson {
            n_modes: self.n_modes,
            modes: self
                .coeffs
                .iter()
                .map(|(&(n1, n2), z)| ModeJson {
                    nu: [n1, n2],
                    re: z.re,
                    im: z.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = FieldJson::deserialize(d)?;
        let mut field = FourierField::new(raw.n_modes);
        for m in raw.modes {
            if m.nu[0].unsigned_abs() as usize > raw.n_modes
                || m.nu[1].unsigned_abs() as usize > raw.n_modes
            {
                return Err(serde::de::Error::custom(format!(
                    "mode {:?} outside the truncation ball {}",
                    m.nu, raw.n_modes
                )));
            }
            field.insert_raw((m.nu[0], m.nu[1]), Complex64::new(m.re, m.im));
        }
        Ok(field)
    }
}

/// The forced oscillator model: ε ẍ + ẋ + ε g(x) = ε f(ωt) with ω = (1, α),
/// g expanded at the unperturbed point c as
/// g(c + y) = g(c) + Σ_{p=𝔫}^{P} g_p y^p with g_𝔫 ≠ 0 and 𝔫 odd
/// (the orders 1 … 𝔫−1 vanish), and the convention g(c) = f₀ so that the
/// constant balance at ε-order zero holds identically.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Order 𝔫 of the zero of g − f₀ at c (odd; 1 is allowed for validation).
    pub goth_n: u32,
    /// Expansion point c.
    pub c: f64,
    /// Taylor coefficients g_𝔫 … g_P (index 0 ↔ power 𝔫). Empty means g has
    /// no nonlinear part beyond the constant (validation only).
    pub g_coeffs: Vec<f64>,
    /// Forcing field f (finite support, real).
    pub f_coeffs: FourierField,
    /// Fourier decay width ξ of the forcing, for diagnostics.
    pub xi: f64,
    /// The irrational frequency ratio α in ω = (1, α).
    pub alpha: PartialQuotientSource,
}

impl ModelSpec {
    pub fn new(
        goth_n: u32,
        c: f64,
        g_coeffs: Vec<f64>,
        f_coeffs: FourierField,
        xi: f64,
        alpha: PartialQuotientSource,
    ) -> Result<Self, FourierError> {
        if goth_n % 2 == 0 {
            return Err(FourierError::InvalidModel(format!(
                "goth_n must be odd, got {goth_n}"
            )));
        }
        match g_coeffs.first() {
            Some(&g_n) if g_n != 0.0 => {}
            Some(_) => {
                return Err(FourierError::InvalidModel(
                    "leading coefficient g_𝔫 must be nonzero".into(),
                ))
            }
            None => {
                return Err(FourierError::InvalidModel(
                    "empty g_coeffs; use ModelSpec::without_nonlinearity for the linear case"
                        .into(),
                ))
            }
        }
        Self::build(goth_n, c, g_coeffs, f_coeffs, xi, alpha)
    }

    /// Degenerate linear model g′ ≡ 0 (the field equation reduces to the
    /// explicit propagator); validation fixtures only.
    pub fn without_nonlinearity(
        c: f64,
        f_coeffs: FourierField,
        xi: f64,
        alpha: PartialQuotientSource,
    ) -> Result<Self, FourierError> {
        Self::build(1, c, Vec::new(), f_coeffs, xi, alpha)
    }

    /// Model with an even-order zero (validation fixtures: even order admits
    /// no sign change of the mean balance, hence in general no response
    /// solution). The production constructor [`ModelSpec::new`] rejects even
    /// orders; this one only requires g_𝔫 ≠ 0.
    pub fn for_validation(
        goth_n: u32,
        c: f64,
        g_coeffs: Vec<f64>,
        f_coeffs: FourierField,
        xi: f64,
        alpha: PartialQuotientSource,
    ) -> Result<Self, FourierError> {
        match g_coeffs.first() {
            Some(&g_n) if g_n != 0.0 => {}
            _ => {
                return Err(FourierError::InvalidModel(
                    "leading coefficient g_𝔫 must be nonzero".into(),
                ))
            }
        }
        Self::build(goth_n, c, g_coeffs, f_coeffs, xi, alpha)
    }

    fn build(
        goth_n: u32,
        c: f64,
        g_coeffs: Vec<f64>,
        f_coeffs: FourierField,
        xi: f64,
        alpha: PartialQuotientSource,
    ) -> Result<Self, FourierError> {
        if !(xi > 0.0) {
            return Err(FourierError::InvalidModel(format!(
                "xi must be positive, got {xi}"
            )));
        }
        let defect = f_coeffs.reality_defect();
        let scale = f_coeffs.mode_l1().max(1.0);
        if defect > 1e-13 * scale {
            return Err(FourierError::InvalidModel(format!(
                "forcing violates reality by {defect:.3e}"
            )));
        }
        if f_coeffs.get((0, 0)).im != 0.0 {
            return Err(FourierError::InvalidModel(
                "forcing mean f₀ must be real".into(),
            ));
        }
        Ok(ModelSpec {
            goth_n,
            c,
            g_coeffs,
            f_coeffs,
            xi,
            alpha,
        })
    }

    /// The forcing mean f₀ = g(c) (normalization convention).
    pub fn f0(&self) -> f64 {
        self.f_coeffs.get((0, 0)).re
    }

    /// Highest power P of the expansion (= 𝔫 when only g_𝔫 is given).
    pub fn max_power(&self) -> u32 {
        if self.g_coeffs.is_empty() {
            0
        } else {
            self.goth_n + (self.g_coeffs.len() as u32 - 1)
        }
    }

    /// Coefficients of g′(c + y) = Σ p·g_p y^{p−1} as (lowest power, list).
    pub fn g_prime(&self) -> (u32, Vec<f64>) {
        if self.g_coeffs.is_empty() {
            return (0, Vec::new());
        }
        let lo = self.goth_n - 1;
        let coeffs = self
            .g_coeffs
            .iter()
            .enumerate()
            .map(|(j, &g)| ((self.goth_n + j as u32) as f64) * g)
            .collect();
        (lo, coeffs)
    }
}

fn fft_2d(data: &mut [Complex<f64>], g: usize, forward: bool) {
    let mut planner = FftPlanner::new();
    let fft = if forward {
        planner.plan_fft_forward(g)
    } else {
        planner.plan_fft_inverse(g)
    };
    for row in data.chunks_exact_mut(g) {
        fft.process(row);
    }
    let mut col = vec![Complex64::ZERO; g];
    for c in 0..g {
        for r in 0..g {
            col[r] = data[r * g + c];
        }
        fft.process(&mut col);
        for r in 0..g {
            data[r * g + c] = col[r];
        }
    }
}

/// Sample the field on the uniform g×g grid ψ_{jk} = 2π(j, k)/g.
///
/// Coefficients fold mod g (e^{iν₁2πj/g} depends on ν₁ mod g only), so the
/// samples are exact values of u at the grid points for every g ≥ 1.
fn grid_values(field: &FourierField, g: usize) -> Vec<Complex64> {
    let mut data = vec![Complex64::ZERO; g * g];
    for (&(n1, n2), z) in &field.coeffs {
        let r = (n1.rem_euclid(g as i64)) as usize;
        let c = (n2.rem_euclid(g as i64)) as usize;
        data[r * g + c] += z;
    }
    fft_2d(&mut data, g, false);
    data
}

/// Recover coefficients with |ν|_∞ ≤ radius from grid samples (exact when the
/// sampled function has no modes beyond (g−1)/2 in either index).
fn grid_to_coeffs(mut data: Vec<Complex64>, g: usize, radius: usize) -> FourierField {
    fft_2d(&mut data, g, true);
    let norm = 1.0 / ((g * g) as f64);
    let mut out = FourierField::new(radius);
    let r = radius as i64;
    for n1 in -r..=r {
        for n2 in -r..=r {
            let row = (n1.rem_euclid(g as i64)) as usize;
            let col = (n2.rem_euclid(g as i64)) as usize;
            let z = data[row * g + col] * norm;
            out.insert_raw((n1, n2), z);
        }
    }
    out.zero_mean = out.get((0, 0)) == Complex64::ZERO;
    out
}

fn padded_grid(radius: usize) -> usize {
    (2 * radius + 1).next_power_of_two()
}

/// Product a·b as a Fourier field: the full coefficient convolution
/// (a·b)_ν = Σ_μ a_μ b_{ν−μ}, carried to radius N_a + N_b so no mode is lost
/// (cos²ψ₁ keeps its ±(2,0) modes). Computed on an alias-free padded grid;
/// reality is preserved when both factors are real.
pub fn multiply(a: &FourierField, b: &FourierField) -> FourierField {
    let radius = a.n_modes + b.n_modes;
    let g = padded_grid(radius);
    let av = grid_values(a, g);
    let bv = grid_values(b, g);
    let prod: Vec<Complex64> = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
    grid_to_coeffs(prod, g, radius)
}

/// Direct O(M²) convolution oracle for [`multiply`]; exact coefficient sums,
/// kept permanently so the two routes can always be compared.
pub fn multiply_direct(a: &FourierField, b: &FourierField) -> FourierField {
    let radius = a.n_modes + b.n_modes;
    let mut out = FourierField::new(radius);
    for (&(a1, a2), za) in &a.coeffs {
        for (&(b1, b2), zb) in &b.coeffs {
            let nu = (a1 + b1, a2 + b2);
            *out.coeffs.entry(nu).or_insert(Complex64::ZERO) += za * zb;
        }
    }
    out.zero_mean = out.get((0, 0)) == Complex64::ZERO;
    out
}

/// Composition with a polynomial with real coefficients `coeffs` for powers
/// `lowest_power` … `lowest_power + coeffs.len() − 1` plus a constant:
///
///   result(ψ) = constant + Σ_p coeffs_{p−lo} · (ζ + u(ψ))^p ,
///
/// evaluated pointwise (Horner) on a padded grid that is alias-free for the
/// highest power, transformed back, and truncated once at the end to
/// `out_radius` (defaults to u's truncation radius).
pub fn compose_polynomial(
    lowest_power: u32,
    coeffs: &[f64],
    constant: f64,
    zeta: f64,
    u: &FourierField,
    out_radius: Option<usize>,
) -> FourierField {
    let out_radius = out_radius.unwrap_or(u.n_modes);
    if coeffs.is_empty() {
        let mut out = FourierField::new(out_radius);
        if constant != 0.0 {
            out.insert_raw((0, 0), Complex64::new(constant, 0.0));
        }
        return out;
    }
    let max_power = lowest_power as usize + coeffs.len() - 1;
    let full_radius = (max_power * u.n_modes).max(out_radius);
    let g = padded_grid(full_radius);
    let mut vals = grid_values(u, g);
    for w in vals.iter_mut() {
        let x = *w + zeta;
        let mut poly = Complex64::ZERO;
        for &c in coeffs.iter().rev() {
            poly = poly * x + c;
        }
        *w = poly * x.powu(lowest_power);
    }
    let mut out = grid_to_coeffs(vals, g, out_radius);
    if constant != 0.0 {
        let z = out.get((0, 0)) + constant;
        out.insert_raw((0, 0), z);
        out.zero_mean = false;
    }
    out
}

/// The field [g(c + ζ + u)]_ν = f₀ + Σ_{p=𝔫}^{P} g_p [(ζ + u)^p]_ν,
/// truncated to u's radius (the constant g(c) = f₀ sits at ν = 0).
pub fn compose_g(spec: &ModelSpec, zeta: f64, u: &FourierField) -> FourierField {
    debug_assert!(
        u.get((0, 0)) == Complex64::ZERO,
        "composition argument must be zero-mean"
    );
    compose_polynomial(spec.goth_n, &spec.g_coeffs, spec.f0(), zeta, u, None)
}

/// Binomial-expansion oracle for [`compose_g`]:
/// Σ_p g_p Σ_{q=0}^{p} binom(p,q) ζ^{p−q} (u^q)_ν with u^q by direct
/// convolution, truncated once at the end. Exponential in P·N; fixtures only.
pub fn compose_g_direct(spec: &ModelSpec, zeta: f64, u: &FourierField) -> FourierField {
    let out_radius = u.n_modes;
    let max_power = spec.max_power() as usize;
    let mut acc = FourierField::new((max_power * u.n_modes).max(out_radius));
    acc.insert_raw((0, 0), Complex64::new(spec.f0(), 0.0));
    // Powers u^q computed once, reused across p.
    let mut u_pow: Vec<FourierField> = vec![{
        let mut one = FourierField::new(0);
        one.insert_raw((0, 0), Complex64::ONE);
        one
    }];
    for q in 1..=max_power {
        u_pow.push(multiply_direct(&u_pow[q - 1], u));
    }
    for (j, &g_p) in spec.g_coeffs.iter().enumerate() {
        let p = spec.goth_n as usize + j;
        for (q, u_q) in u_pow.iter().enumerate().take(p + 1) {
            let mut binom = 1.0;
            for i in 0..q {
                binom = binom * ((p - i) as f64) / ((i + 1) as f64);
            }
            let w = g_p * binom * zeta.powi((p - q) as i32);
            if w == 0.0 {
                continue;
            }
            for (&nu, z) in &u_q.coeffs {
                *acc.coeffs.entry(nu).or_insert(Complex64::ZERO) += z * w;
            }
        }
    }
    let mut out = FourierField::new(out_radius);
    for (&nu, z) in &acc.coeffs {
        if nu.0.unsigned_abs() as usize <= out_radius && nu.1.unsigned_abs() as usize <= out_radius
        {
            out.insert_raw(nu, *z);
        }
    }
    out.zero_mean = out.get((0, 0)) == Complex64::ZERO;
    out
}

/// max over the uniform grid_size×grid_size torus grid of |u(ψ)|.
///
/// Samples are exact field values, so the result is a lower bound on the true
/// sup norm and is nondecreasing along nested grids (e.g. doubling sizes).
pub fn sup_norm(u: &FourierField, grid_size: usize) -> f64 {
    grid_values(u, grid_size.max(1))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Result of the exponential-decay diagnostic |u_ν| ≲ K e^{−λ|ν|₁}.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    pub shells_used: usize,
}

/// Least-squares fit of ln M_s against the shell index s, where
/// M_s = max_{|ν|₁=s} |u_ν| over nonzero shells; returns (K, λ) with
/// ln M_s ≈ ln K − λ s. Diagnostic only — no claim beyond the stored modes.
pub fn decay_fit(u: &FourierField) -> Result<DecayFit, FourierError> {
    let pts: Vec<(f64, f64)> = u
        .shell_maxima()
        .into_iter()
        .filter(|&(s, m)| s > 0 && m > 0.0)
        .map(|(s, m)| (s as f64, m.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(FourierError::TooFewShells { found: pts.len() });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok(DecayFit {
        amplitude: intercept.exp(),
        rate: -slope,
        shells_used: pts.len(),
    })
}
