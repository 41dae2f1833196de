//! Interaction potentials `W`, their gradients and Gaussian-mollified
//! versions.
//!
//! Every kernel is a signed sum of radial terms (powers, logarithm,
//! Gaussian, exponential, constant). All pointwise operations are evaluated
//! on `|x|` and the sign is restored afterwards, so evenness of `W` and
//! oddness of `∇W` hold bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mollifier::Mollifier;
use crate::quadrature::{integrate_with_breaks, QuadOpts};
use crate::special::{dawson, dawson_integral, erf, EULER_GAMMA};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum KernelSpec {
    /// `|x|^k / k`, or `ln|x|` for `k = 0`.
    #[serde(rename = "power_law")]
    PowerLaw { k: f64 },
    /// `|x|^A / A - |x|^B / B` with the same logarithmic convention.
    #[serde(rename = "rep_att")]
    RepulsiveAttractive {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
    },
    /// `-C_A exp(-|x|/l_A) + C_R exp(-|x|/l_R)`.
    #[serde(rename = "morse")]
    Morse {
        #[serde(rename = "C_A")]
        c_a: f64,
        #[serde(rename = "C_R")]
        c_r: f64,
        #[serde(rename = "l_A")]
        l_a: f64,
        #[serde(rename = "l_R")]
        l_r: f64,
    },
    /// Unit-mass Gaussian `exp(-|x|²/4δ²) / (4πδ²)^{d/2}`. Positive, so it
    /// is repulsive on its own; wrap it in `Scaled` with a negative factor
    /// for attraction.
    #[serde(rename = "gaussian")]
    LocalizedGaussian { delta: f64 },
    /// `|x| / δ²`.
    #[serde(rename = "newtonian_1d")]
    ScaledNewtonian1D { delta: f64 },
    /// `ln(|x/δ|) / δ`.
    #[serde(rename = "log_1d")]
    ScaledLog1D { delta: f64 },
    #[serde(rename = "zero")]
    Zero,
    /// `factor * W_inner`.
    #[serde(rename = "scaled")]
    Scaled { factor: f64, kernel: Box<KernelSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    /// `r^k / k`, `k != 0`
    Power(f64),
    /// `ln r`
    Log,
    /// `exp(-r²/4δ²) / (4πδ²)^{d/2}`
    Gauss(f64),
    /// `exp(-r/l)`
    Exp(f64),
    Const,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    coef: f64,
    term: Term,
}

impl Term {
    fn singular_value(self) -> bool {
        matches!(self, Term::Log) || matches!(self, Term::Power(k) if k <= 0.0)
    }

    /// Gradient undefined or discontinuous at the origin.
    fn singular_gradient(self) -> bool {
        matches!(self, Term::Log) || matches!(self, Term::Power(k) if k <= 1.0)
    }

    /// Needs Gaussian mollification when the model asks for it.
    fn mollifiable(self) -> bool {
        self.singular_gradient() || matches!(self, Term::Exp(_))
    }

    fn value(self, r: f64, dim: usize) -> f64 {
        match self {
            Term::Power(k) => r.powf(k) / k,
            Term::Log => r.ln(),
            Term::Gauss(d) => gauss_norm(d, dim) * (-r * r / (4.0 * d * d)).exp(),
            Term::Exp(l) => (-r / l).exp(),
            Term::Const => 1.0,
        }
    }

    /// `W'(r)` for `r > 0`.
    fn radial_derivative(self, r: f64, dim: usize) -> f64 {
        match self {
            Term::Power(k) => r.powf(k - 1.0),
            Term::Log => 1.0 / r,
            Term::Gauss(d) => -r / (2.0 * d * d) * self.value(r, dim),
            Term::Exp(l) => -(-r / l).exp() / l,
            Term::Const => 0.0,
        }
    }

    /// `W'(r)/r`, the factor with `∇W(x) = factor · x`. `None` at a
    /// singular origin.
    fn gradient_factor(self, r: f64, dim: usize) -> Option<f64> {
        if r == 0.0 {
            return match self {
                Term::Power(2.0) => Some(1.0),
                Term::Power(k) if k > 1.0 => Some(0.0),
                Term::Gauss(d) => Some(-self.value(0.0, dim) / (2.0 * d * d)),
                // cusp; the symmetric subgradient is zero
                Term::Exp(_) => Some(0.0),
                Term::Const => Some(0.0),
                _ => None,
            };
        }
        Some(self.radial_derivative(r, dim) / r)
    }

    /// Average of `W(x - y)` over a square cell `[0,h]²` in one dimension.
    fn cell_average(self, h: f64) -> f64 {
        match self {
            Term::Power(k) => 2.0 * h.powf(k) / (k * (k + 1.0) * (k + 2.0)),
            Term::Log => h.ln() - 1.5,
            t => t.value(0.0, 1),
        }
    }
}

fn gauss_norm(delta: f64, dim: usize) -> f64 {
    (4.0 * std::f64::consts::PI * delta * delta).powf(-0.5 * dim as f64)
}

fn power_term(k: f64) -> Term {
    if k == 0.0 {
        Term::Log
    } else {
        Term::Power(k)
    }
}

impl KernelSpec {
    fn components(&self) -> Vec<Component> {
        match *self {
            KernelSpec::PowerLaw { k } => vec![Component { coef: 1.0, term: power_term(k) }],
            KernelSpec::RepulsiveAttractive { a, b } => vec![
                Component { coef: 1.0, term: power_term(a) },
                Component { coef: -1.0, term: power_term(b) },
            ],
            KernelSpec::Morse { c_a, c_r, l_a, l_r } => vec![
                Component { coef: -c_a, term: Term::Exp(l_a) },
                Component { coef: c_r, term: Term::Exp(l_r) },
            ],
            KernelSpec::LocalizedGaussian { delta } => {
                vec![Component { coef: 1.0, term: Term::Gauss(delta) }]
            }
            KernelSpec::ScaledNewtonian1D { delta } => {
                vec![Component { coef: 1.0 / (delta * delta), term: Term::Power(1.0) }]
            }
            KernelSpec::ScaledLog1D { delta } => vec![
                Component { coef: 1.0 / delta, term: Term::Log },
                Component { coef: -delta.ln() / delta, term: Term::Const },
            ],
            KernelSpec::Zero => Vec::new(),
            KernelSpec::Scaled { factor, ref kernel } => kernel
                .components()
                .into_iter()
                .map(|c| Component { coef: factor * c.coef, ..c })
                .collect(),
        }
    }

    /// Checks parameter ranges for the given dimension. Returns the list of
    /// problems (empty when valid).
    pub fn problems(&self, dim: usize) -> Vec<String> {
        let d = dim as f64;
        let mut out = Vec::new();
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("kernel parameter {name} must be positive, got {v}"));
            }
        };
        match *self {
            KernelSpec::PowerLaw { k } => {
                if !(k > -d && k <= 2.0) {
                    out.push(format!("power-law exponent k must satisfy -d < k <= 2, got {k}"));
                }
            }
            KernelSpec::RepulsiveAttractive { a, b } => {
                if !(a > b) {
                    out.push(format!("repulsive-attractive kernel needs A > B, got A={a}, B={b}"));
                }
                if !(b > -d) {
                    out.push(format!("repulsive exponent B must exceed -d, got {b}"));
                }
                if !a.is_finite() {
                    out.push(format!("attractive exponent A must be finite, got {a}"));
                }
            }
            KernelSpec::Morse { c_a, c_r, l_a, l_r } => {
                positive("C_A", c_a, &mut out);
                positive("C_R", c_r, &mut out);
                positive("l_A", l_a, &mut out);
                positive("l_R", l_r, &mut out);
            }
            KernelSpec::LocalizedGaussian { delta } => positive("delta", delta, &mut out),
            KernelSpec::ScaledNewtonian1D { delta } | KernelSpec::ScaledLog1D { delta } => {
                positive("delta", delta, &mut out);
                if dim != 1 {
                    out.push("newtonian_1d and log_1d kernels are one-dimensional".into());
                }
            }
            KernelSpec::Zero => {}
            KernelSpec::Scaled { factor, ref kernel } => {
                if !factor.is_finite() {
                    out.push(format!("kernel scale factor must be finite, got {factor}"));
                }
                out.extend(kernel.problems(dim));
            }
        }
        out
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let problems = self.problems(dim);
        if !problems.is_empty() {
            return Err(Error::Domain(problems.join("; ")));
        }
        if let KernelSpec::Morse { c_a, c_r, l_a, l_r } = *self {
            let c = c_r / c_a;
            let l = l_r / l_a;
            if !(c > 1.0 && l < 1.0 && c * l.powi(dim as i32) < 1.0) {
                log::warn!(
                    "Morse parameters C={c}, l={l} lie outside the usual regime C>1, l<1, Cl^d<1"
                );
            }
        }
        Ok(())
    }

    /// `W(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        let mut sum = 0.0;
        for c in self.components() {
            if r == 0.0 && c.term.singular_value() {
                return domain(format!("{self:?} is singular at the origin"));
            }
            sum += c.coef * c.term.value(r, x.len());
        }
        Ok(sum)
    }

    /// `∇W(x)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let factor = self.gradient_factor(norm(x), x.len())?;
        Ok(x.iter().map(|v| factor * v).collect())
    }

    pub(crate) fn gradient_factor(&self, r: f64, dim: usize) -> Result<f64> {
        let mut f = 0.0;
        for c in self.components() {
            match c.term.gradient_factor(r, dim) {
                Some(v) => f += c.coef * v,
                None => return domain(format!("gradient of {self:?} is singular at the origin")),
            }
        }
        Ok(f)
    }

    /// `∇(W * φ_ε)(x)`. Terms without a singularity pass through unchanged.
    pub fn mollified_gradient(&self, moll: &Mollifier, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() == 1 {
            let k = PairKernel1d::new(self, Some(moll))?;
            return Ok(vec![k.derivative(x[0])]);
        }
        if self.components().iter().any(|c| c.term.mollifiable()) {
            return Err(Error::Unsupported(
                "mollified singular kernels are implemented in one dimension only".into(),
            ));
        }
        self.gradient(x)
    }

    /// True when some term has a singular or discontinuous gradient at 0.
    pub fn is_singular(&self) -> bool {
        self.components().iter().any(|c| c.term.singular_gradient())
    }

    /// True when `W'(r) >= 0` for every `r > 0` term by term.
    pub fn is_purely_attractive(&self) -> bool {
        let comps = self.components();
        comps.iter().any(|c| c.coef != 0.0 && c.term != Term::Const)
            && comps.iter().all(|c| match c.term {
                Term::Power(_) | Term::Log => c.coef >= 0.0,
                Term::Gauss(_) | Term::Exp(_) => c.coef <= 0.0,
                Term::Const => true,
            })
    }

    /// Pure power law `|x|^k/k` (or logarithm) exponent, if this kernel is one.
    pub fn power_exponent(&self) -> Option<f64> {
        match *self {
            KernelSpec::PowerLaw { k } => Some(k),
            _ => None,
        }
    }

    /// `∫ W dx` over `ℝ^d` for integrable kernels.
    pub fn integral(&self, dim: usize) -> Result<f64> {
        let d = dim as f64;
        let sphere = 2.0 * std::f64::consts::PI.powf(0.5 * d) / libm::tgamma(0.5 * d);
        let mut total = 0.0;
        for c in self.components() {
            if c.coef == 0.0 {
                continue;
            }
            total += c.coef
                * match c.term {
                    Term::Gauss(_) => 1.0,
                    Term::Exp(l) => sphere * libm::tgamma(d) * l.powf(d),
                    _ => return domain(format!("{self:?} is not integrable over R^{dim}")),
                };
        }
        Ok(total)
    }

    /// Average of `W(x - y)` over one grid cell of width `h` (1D); the
    /// diagonal entry of a grid interaction sum.
    pub fn cell_self_average(&self, h: f64) -> f64 {
        self.components().iter().map(|c| c.coef * c.term.cell_average(h)).sum()
    }
}

fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Pair terms beyond `exp(-DECAY_CUTOFF)` of their peak are dropped.
const DECAY_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy)]
enum Part1d {
    /// `r^k / k`, small positive integer `k`
    PowInt(i32),
    Pow(f64),
    Log,
    /// `norm · exp(-s r²)`
    Gauss {
        norm: f64,
        s: f64,
    },
    /// `exp(-r / l)`
    Exp {
        inv_l: f64,
    },
    Const,
    /// `|x| * φ_ε`
    MollAbs {
        eps: f64,
        inv_2eps: f64,
    },
    /// `ln|x| * φ_ε`
    MollLog {
        eps: f64,
    },
    /// generic term convolved by quadrature
    MollQuad {
        term: Term,
        moll: Mollifier,
    },
}

fn raw_part(t: Term) -> Part1d {
    match t {
        Term::Power(k) if k.fract() == 0.0 && (1.0..=16.0).contains(&k) => Part1d::PowInt(k as i32),
        Term::Power(k) => Part1d::Pow(k),
        Term::Log => Part1d::Log,
        Term::Gauss(d) => Part1d::Gauss { norm: gauss_norm(d, 1), s: 0.25 / (d * d) },
        Term::Exp(l) => Part1d::Exp { inv_l: 1.0 / l },
        Term::Const => Part1d::Const,
    }
}

/// One-dimensional kernel prepared for pairwise sums: value, first and
/// second derivative of the (optionally mollified) potential.
#[derive(Debug, Clone)]
pub struct PairKernel1d {
    parts: Vec<(f64, Part1d)>,
    skip_self: bool,
    reach: Option<f64>,
}

impl PairKernel1d {
    /// `moll = Some(_)` mollifies every term whose gradient is singular at
    /// the origin; smooth terms are left as they are.
    pub fn new(spec: &KernelSpec, moll: Option<&Mollifier>) -> Result<Self> {
        let mut parts = Vec::new();
        let mut skip_self = false;
        for c in spec.components() {
            if c.coef == 0.0 {
                continue;
            }
            let part = match (moll, c.term) {
                (Some(m), Term::Power(1.0)) => {
                    Part1d::MollAbs { eps: m.epsilon(), inv_2eps: 0.5 / m.epsilon() }
                }
                (Some(m), Term::Log) => Part1d::MollLog { eps: m.epsilon() },
                (Some(m), t) if t.mollifiable() => {
                    if matches!(t, Term::Power(k) if k <= -1.0) {
                        return domain("mollification needs an integrable kernel (k > -1)");
                    }
                    Part1d::MollQuad { term: t, moll: *m }
                }
                (_, t) => {
                    if t.singular_gradient() {
                        skip_self = true;
                    }
                    raw_part(t)
                }
            };
            parts.push((c.coef, part));
        }
        let mut reach = Some(0.0f64);
        for (_, p) in &parts {
            let r = match *p {
                Part1d::Gauss { s, .. } => Some((DECAY_CUTOFF / s).sqrt()),
                Part1d::Exp { inv_l } => Some(DECAY_CUTOFF / inv_l),
                Part1d::MollQuad { term: Term::Exp(l), moll } => {
                    Some(DECAY_CUTOFF * l + 15.0 * moll.epsilon())
                }
                _ => None,
            };
            reach = match (reach, r) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        }
        Ok(Self { parts, skip_self, reach })
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    /// Whether pairwise sums must exclude `j = i` (an unmollified singular term).
    pub fn skips_self(&self) -> bool {
        self.skip_self
    }

    /// Distance beyond which the gradient is negligible (`None` for
    /// long-range kernels). Constant terms carry no force.
    pub fn reach(&self) -> Option<f64> {
        self.reach
    }

    /// `W̃(x)`. Infinite at `x = 0` for an unmollified singular kernel;
    /// callers consult [`skips_self`](Self::skips_self) first.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let r = x.abs();
        self.parts.iter().map(|&(c, p)| c * part_value(p, r)).sum()
    }

    /// `W̃'(x)`, odd.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let r = x.abs();
        if r == 0.0 {
            return 0.0;
        }
        let d: f64 = self.parts.iter().map(|&(c, p)| c * part_derivative(p, r)).sum();
        if x < 0.0 {
            -d
        } else {
            d
        }
    }

    /// `W̃''(x)`, even.
    #[inline]
    pub fn second(&self, x: f64) -> f64 {
        let r = x.abs();
        self.parts.iter().map(|&(c, p)| c * part_second(p, r)).sum()
    }
}

#[inline]
fn part_value(p: Part1d, r: f64) -> f64 {
    match p {
        Part1d::PowInt(k) => r.powi(k) / k as f64,
        Part1d::Pow(k) => r.powf(k) / k,
        Part1d::Log => r.ln(),
        Part1d::Gauss { norm, s } => norm * (-s * r * r).exp(),
        Part1d::Exp { inv_l } => (-r * inv_l).exp(),
        Part1d::Const => 1.0,
        Part1d::MollAbs { eps, inv_2eps } => {
            let u = r * inv_2eps;
            if u > 6.0 {
                // erf(u) rounds to 1 and the Gaussian term is below r·1e-16
                r
            } else {
                2.0 * eps * FRAC_1_SQRT_PI * (-u * u).exp() + r * erf(u)
            }
        }
        Part1d::MollLog { eps } => {
            eps.ln() - 0.5 * EULER_GAMMA + 2.0 * dawson_integral(r / (2.0 * eps))
        }
        Part1d::MollQuad { term, moll } => mollify_by_quadrature(term, &moll, r, 0),
    }
}

#[inline]
fn part_derivative(p: Part1d, r: f64) -> f64 {
    match p {
        Part1d::PowInt(k) => r.powi(k - 1),
        Part1d::Pow(k) => r.powf(k - 1.0),
        Part1d::Log => 1.0 / r,
        Part1d::Gauss { norm, s } => -2.0 * s * r * norm * (-s * r * r).exp(),
        Part1d::Exp { inv_l } => -inv_l * (-r * inv_l).exp(),
        Part1d::Const => 0.0,
        Part1d::MollAbs { inv_2eps, .. } => {
            let u = r * inv_2eps;
            if u > 6.0 {
                1.0
            } else {
                erf(u)
            }
        }
        Part1d::MollLog { eps } => dawson(r / (2.0 * eps)) / eps,
        Part1d::MollQuad { term, moll } => mollify_by_quadrature(term, &moll, r, 1),
    }
}

#[inline]
fn part_second(p: Part1d, r: f64) -> f64 {
    match p {
        Part1d::PowInt(1) => {
            if r == 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
        Part1d::PowInt(k) => (k - 1) as f64 * r.powi(k - 2),
        Part1d::Pow(k) => (k - 1.0) * r.powf(k - 2.0),
        Part1d::Log => -1.0 / (r * r),
        Part1d::Gauss { norm, s } => (4.0 * s * s * r * r - 2.0 * s) * norm * (-s * r * r).exp(),
        Part1d::Exp { inv_l } => inv_l * inv_l * (-r * inv_l).exp(),
        Part1d::Const => 0.0,
        Part1d::MollAbs { eps, inv_2eps } => {
            let u = r * inv_2eps;
            FRAC_1_SQRT_PI * (-u * u).exp() / eps
        }
        Part1d::MollLog { eps } => {
            let u = r / (2.0 * eps);
            (1.0 - 2.0 * u * dawson(u)) / (2.0 * eps * eps)
        }
        Part1d::MollQuad { term, moll } => mollify_by_quadrature(term, &moll, r, 2),
    }
}

/// `(W * φ_ε^{(order)})(x)` for a single radial term by adaptive quadrature,
/// splitting at the kernel singularity.
fn mollify_by_quadrature(term: Term, moll: &Mollifier, x: f64, order: u8) -> f64 {
    let eps = moll.epsilon();
    let reach = 14.0 * eps;
    let integrand = |y: f64| {
        let ay = y.abs();
        if ay == 0.0 && term.singular_value() {
            return 0.0;
        }
        let w = term.value(ay, 1);
        let z = x - y;
        w * match order {
            0 => moll.eval_1d(z),
            1 => moll.grad_1d(z),
            _ => moll.second_derivative_1d(z),
        }
    };
    let opts = QuadOpts { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 4000 };
    match integrate_with_breaks(integrand, x - reach, x + reach, &[0.0, x], opts) {
        Ok(v) => v,
        Err(e) => {
            log::error!("mollified kernel quadrature failed at x={x}: {e}");
            f64::NAN
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn all_variants() -> Vec<KernelSpec> {
        vec![
            KernelSpec::PowerLaw { k: 2.0 },
            KernelSpec::PowerLaw { k: 1.0 },
            KernelSpec::PowerLaw { k: 0.0 },
            KernelSpec::PowerLaw { k: -0.5 },
            KernelSpec::PowerLaw { k: 1.5 },
            KernelSpec::RepulsiveAttractive { a: 4.0, b: 2.0 },
            KernelSpec::RepulsiveAttractive { a: 4.0, b: 1.0 },
            KernelSpec::RepulsiveAttractive { a: 4.0, b: 0.0 },
            KernelSpec::Morse { c_a: 1.0, c_r: 2.0, l_a: 1.0, l_r: 0.3 },
            KernelSpec::LocalizedGaussian { delta: 0.05 },
            KernelSpec::ScaledNewtonian1D { delta: 0.1 },
            KernelSpec::ScaledLog1D { delta: 0.5 },
            KernelSpec::Zero,
            KernelSpec::Scaled {
                factor: -1.0,
                kernel: Box::new(KernelSpec::LocalizedGaussian { delta: 0.04 }),
            },
        ]
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(KernelSpec::PowerLaw { k: 2.0 }.evaluate(&[2.0]).unwrap(), 2.0);
        let ra = KernelSpec::RepulsiveAttractive { a: 4.0, b: 2.0 };
        assert_eq!(ra.evaluate(&[1.0]).unwrap(), -0.25);
        let g = KernelSpec::LocalizedGaussian { delta: 0.5 };
        assert!((g.evaluate(&[0.0]).unwrap() - FRAC_1_SQRT_PI).abs() < 1e-15);
        let lg = KernelSpec::ScaledLog1D { delta: 0.5 };
        assert!((lg.evaluate(&[1.0]).unwrap() - 2.0f64.ln() / 0.5).abs() < 1e-14);
    }

    #[test]
    fn singular_origin_is_a_domain_error() {
        assert!(KernelSpec::PowerLaw { k: 0.0 }.evaluate(&[0.0]).is_err());
        assert!(KernelSpec::PowerLaw { k: -0.5 }.evaluate(&[0.0]).is_err());
        assert!(KernelSpec::ScaledLog1D { delta: 1.0 }.evaluate(&[0.0]).is_err());
        assert!(KernelSpec::PowerLaw { k: 1.0 }.evaluate(&[0.0]).is_ok());
        assert!(KernelSpec::PowerLaw { k: 1.0 }.gradient(&[0.0]).is_err());
        assert!(KernelSpec::ScaledNewtonian1D { delta: 1.0 }.gradient(&[0.0]).is_err());
        assert_eq!(KernelSpec::PowerLaw { k: 2.0 }.gradient(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(KernelSpec::PowerLaw { k: 1.5 }.gradient(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn gradient_examples() {
        let ra = KernelSpec::RepulsiveAttractive { a: 4.0, b: 2.0 };
        assert_eq!(ra.gradient(&[1.0]).unwrap(), vec![0.0]);
        let n = KernelSpec::ScaledNewtonian1D { delta: 1.0 };
        assert_eq!(n.gradient(&[-0.3]).unwrap(), vec![-1.0]);
        let l = KernelSpec::PowerLaw { k: 0.0 };
        assert_eq!(l.gradient(&[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn mollified_abs_examples() {
        let k = KernelSpec::PowerLaw { k: 1.0 };
        let m = Mollifier::new(0.1, 1).unwrap();
        assert_eq!(k.mollified_gradient(&m, &[0.0]).unwrap(), vec![0.0]);
        let g = k.mollified_gradient(&m, &[0.2]).unwrap()[0];
        assert!((g - erf(1.0)).abs() < 1e-15);
        assert!((g - 0.842_701).abs() < 1e-6);
        // independent oracle: quadrature of ∫ sign(x-y) φ_ε(y) dy
        let oracle = integrate_with_breaks(
            |y: f64| (0.2 - y).signum() * m.eval_1d(y),
            -2.0,
            2.0,
            &[0.2],
            QuadOpts::default(),
        )
        .unwrap();
        assert!((g - oracle).abs() < 1e-10);
    }

    #[test]
    fn mollified_log_far_field() {
        let k = KernelSpec::ScaledLog1D { delta: 1.0 };
        let m = Mollifier::new(0.05, 1).unwrap();
        let g = k.mollified_gradient(&m, &[1.0]).unwrap()[0];
        assert!((g - 1.0).abs() < 1e-2, "{g}");
        // quadrature oracle with the derivative moved onto the mollifier
        let oracle = integrate_with_breaks(
            |y: f64| {
                if y == 0.0 {
                    0.0
                } else {
                    y.abs().ln() * m.grad_1d(1.0 - y)
                }
            },
            1.0 - 1.0,
            2.0,
            &[1.0],
            QuadOpts::default(),
        )
        .unwrap();
        assert!((g - oracle).abs() < 1e-10, "{g} vs {oracle}");
    }

    fn convolve(term_value: impl Fn(f64) -> f64, m: &Mollifier, x: f64, order: u8) -> f64 {
        let reach = 16.0 * m.epsilon();
        integrate_with_breaks(
            |y: f64| {
                if y == 0.0 {
                    return 0.0;
                }
                let z = x - y;
                term_value(y)
                    * match order {
                        0 => m.eval_1d(z),
                        1 => m.grad_1d(z),
                        _ => m.second_derivative_1d(z),
                    }
            },
            x - reach,
            x + reach,
            &[0.0, x],
            QuadOpts { abs_tol: 1e-13, rel_tol: 1e-13, max_intervals: 8000 },
        )
        .unwrap()
    }

    #[test]
    fn closed_forms_match_convolution_quadrature() {
        let m = Mollifier::new(0.07, 1).unwrap();
        let abs = PairKernel1d::new(&KernelSpec::PowerLaw { k: 1.0 }, Some(&m)).unwrap();
        let log = PairKernel1d::new(&KernelSpec::PowerLaw { k: 0.0 }, Some(&m)).unwrap();
        for &x in &[0.0, 0.01, -0.05, 0.14, 0.3, 0.9, 2.0, -3.5] {
            for order in 0..3u8 {
                let (a, l) = match order {
                    0 => (abs.value(x), log.value(x)),
                    1 => (abs.derivative(x), log.derivative(x)),
                    _ => (abs.second(x), log.second(x)),
                };
                let qa = convolve(|y: f64| y.abs(), &m, x, order);
                let ql = convolve(|y: f64| y.abs().ln(), &m, x, order);
                assert!(
                    (a - qa).abs() < 1e-9 * (1.0 + qa.abs()),
                    "abs x={x} o={order}: {a} vs {qa}"
                );
                assert!(
                    (l - ql).abs() < 1e-9 * (1.0 + ql.abs()),
                    "log x={x} o={order}: {l} vs {ql}"
                );
            }
        }
    }

    #[test]
    fn quadrature_mollification_of_fractional_power() {
        let m = Mollifier::new(0.05, 1).unwrap();
        let k = PairKernel1d::new(&KernelSpec::PowerLaw { k: 0.5 }, Some(&m)).unwrap();
        // far from the origin the mollified gradient approaches |x|^{-1/2}
        assert!((k.derivative(2.0) - 2.0f64.powf(-0.5)).abs() < 1e-3);
        assert_eq!(k.derivative(0.0), 0.0);
        assert_eq!(k.derivative(-0.3), -k.derivative(0.3));
        let h = 1e-5;
        let fd = (k.value(0.1 + h) - k.value(0.1 - h)) / (2.0 * h);
        assert!((fd - k.derivative(0.1)).abs() < 1e-6);
    }

    #[test]
    fn mollified_gradient_converges_monotonically() {
        for spec in [
            KernelSpec::PowerLaw { k: 1.0 },
            KernelSpec::PowerLaw { k: 0.0 },
            KernelSpec::ScaledLog1D { delta: 1.0 },
        ] {
            let exact = spec.gradient(&[0.5]).unwrap()[0];
            let errs: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&e| {
                    let m = Mollifier::new(e, 1).unwrap();
                    (spec.mollified_gradient(&m, &[0.5]).unwrap()[0] - exact).abs()
                })
                .collect();
            assert!(errs[0] > errs[1] && errs[1] > errs[2], "{spec:?}: {errs:?}");
        }
    }

    #[test]
    fn gaussian_has_unit_mass() {
        let g = KernelSpec::LocalizedGaussian { delta: 0.04 };
        let v = integrate(|x| g.evaluate(&[x]).unwrap(), -2.0, 2.0, QuadOpts::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        assert!((g.integral(1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn morse_integral_closed_form() {
        let k = KernelSpec::Morse { c_a: 1.0, c_r: 2.0, l_a: 1.0, l_r: 0.3 };
        let q = integrate(|x| k.evaluate(&[x]).unwrap(), -60.0, 60.0, QuadOpts::default()).unwrap();
        assert!((k.integral(1).unwrap() - q).abs() < 1e-9);
        assert!(KernelSpec::PowerLaw { k: 1.0 }.integral(1).is_err());
    }

    #[test]
    fn validation_ranges() {
        assert!(KernelSpec::PowerLaw { k: -1.0 }.validate(1).is_err());
        assert!(KernelSpec::PowerLaw { k: 2.5 }.validate(1).is_err());
        assert!(KernelSpec::PowerLaw { k: -1.0 }.validate(2).is_ok());
        assert!(KernelSpec::RepulsiveAttractive { a: 1.0, b: 2.0 }.validate(1).is_err());
        assert!(KernelSpec::LocalizedGaussian { delta: 0.0 }.validate(1).is_err());
        assert!(KernelSpec::ScaledLog1D { delta: 0.1 }.validate(2).is_err());
        // outside the usual regime: warns, still valid
        assert!(KernelSpec::Morse { c_a: 2.0, c_r: 1.0, l_a: 1.0, l_r: 2.0 }.validate(1).is_ok());
    }

    #[test]
    fn json_grammar() {
        let cases = [
            (r#"{"type":"power_law","k":1}"#, KernelSpec::PowerLaw { k: 1.0 }),
            (
                r#"{"type":"rep_att","A":4,"B":2}"#,
                KernelSpec::RepulsiveAttractive { a: 4.0, b: 2.0 },
            ),
            (
                r#"{"type":"morse","C_A":1,"C_R":2,"l_A":1,"l_R":0.5}"#,
                KernelSpec::Morse { c_a: 1.0, c_r: 2.0, l_a: 1.0, l_r: 0.5 },
            ),
            (r#"{"type":"gaussian","delta":0.05}"#, KernelSpec::LocalizedGaussian { delta: 0.05 }),
            (
                r#"{"type":"newtonian_1d","delta":0.1}"#,
                KernelSpec::ScaledNewtonian1D { delta: 0.1 },
            ),
            (r#"{"type":"log_1d","delta":0.1}"#, KernelSpec::ScaledLog1D { delta: 0.1 }),
            (r#"{"type":"zero"}"#, KernelSpec::Zero),
        ];
        for (json, want) in cases {
            let got: KernelSpec = serde_json::from_str(json).unwrap();
            assert_eq!(got, want);
        }
        let scaled: KernelSpec = serde_json::from_str(
            r#"{"type":"scaled","factor":-1,"kernel":{"type":"gaussian","delta":0.04}}"#,
        )
        .unwrap();
        assert!(scaled.is_purely_attractive());
    }

    #[test]
    fn attraction_classification() {
        assert!(KernelSpec::PowerLaw { k: 1.0 }.is_purely_attractive());
        assert!(KernelSpec::ScaledLog1D { delta: 0.1 }.is_purely_attractive());
        assert!(!KernelSpec::LocalizedGaussian { delta: 0.1 }.is_purely_attractive());
        assert!(!KernelSpec::RepulsiveAttractive { a: 4.0, b: 1.0 }.is_purely_attractive());
        assert!(!KernelSpec::Zero.is_purely_attractive());
    }

    #[test]
    fn cell_average_matches_quadrature() {
        let h = 0.01;
        for spec in [
            KernelSpec::PowerLaw { k: 0.0 },
            KernelSpec::PowerLaw { k: -0.5 },
            KernelSpec::PowerLaw { k: 1.0 },
        ] {
            // ∫_0^h∫_0^h W(x-y) = 2∫_0^h (h - s) W(s) ds
            let q = integrate(
                |s| 2.0 * (h - s) * spec.evaluate(&[s]).unwrap_or(0.0),
                0.0,
                h,
                QuadOpts { abs_tol: 1e-16, rel_tol: 1e-13, max_intervals: 4000 },
            )
            .unwrap()
                / (h * h);
            assert!((spec.cell_self_average(h) - q).abs() < 1e-8 * (1.0 + q.abs()), "{spec:?}");
        }
    }

    proptest! {
        #[test]
        fn evenness_is_exact(x in prop_oneof![-3.0f64..-1e-3, 1e-3f64..3.0]) {
            for k in all_variants() {
                prop_assert_eq!(k.evaluate(&[x]).unwrap(), k.evaluate(&[-x]).unwrap());
                let g = k.gradient(&[x]).unwrap()[0];
                let gm = k.gradient(&[-x]).unwrap()[0];
                prop_assert_eq!(g, -gm);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(x in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0]) {
            for k in all_variants() {
                let h = 1e-6 * x.abs().max(1.0);
                let fd = (k.evaluate(&[x + h]).unwrap() - k.evaluate(&[x - h]).unwrap()) / (2.0 * h);
                let g = k.gradient(&[x]).unwrap()[0];
                let scale = g.abs().max(k.evaluate(&[x]).unwrap().abs()).max(1e-8);
                prop_assert!((fd - g).abs() <= 1e-6 * scale, "{:?} at {}: {} vs {}", k, x, g, fd);
            }
        }

        #[test]
        fn pair_kernel_matches_gradient(x in prop_oneof![-2.0f64..-0.01, 0.01f64..2.0]) {
            for k in all_variants() {
                let p = PairKernel1d::new(&k, None).unwrap();
                let g = k.gradient(&[x]).unwrap()[0];
                prop_assert!((p.derivative(x) - g).abs() <= 1e-14 * g.abs().max(1.0));
                let h = 1e-6;
                let fd = (p.derivative(x + h) - p.derivative(x - h)) / (2.0 * h);
                let s = p.second(x);
                prop_assert!((fd - s).abs() <= 1e-5 * s.abs().max(1.0), "{:?} {} {} {}", k, x, fd, s);
            }
        }
    }
}
