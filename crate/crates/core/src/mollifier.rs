//! Gaussian mollifier `φ_ε(x) = (4πε²)^{-d/2} exp(-|x|²/4ε²)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    epsilon: f64,
    dim: usize,
}

impl Mollifier {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return domain(format!("mollifier width must be positive, got {epsilon}"));
        }
        if dim == 0 {
            return domain("mollifier dimension must be at least 1");
        }
        Ok(Self { epsilon, dim })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalization constant `φ_ε(0)`.
    pub fn peak(&self) -> f64 {
        (4.0 * std::f64::consts::PI * self.epsilon * self.epsilon).powf(-0.5 * self.dim as f64)
    }

    /// Coefficient `a` in `exp(-a|x|²)`.
    #[inline]
    pub(crate) fn exponent_scale(&self) -> f64 {
        0.25 / (self.epsilon * self.epsilon)
    }

    #[inline]
    pub(crate) fn eval_sq(&self, r2: f64) -> f64 {
        self.peak() * (-r2 * self.exponent_scale()).exp()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_sq(x.iter().map(|v| v * v).sum())
    }

    pub fn eval_1d(&self, x: f64) -> f64 {
        self.eval_sq(x * x)
    }

    /// `∇φ_ε(x) = -x/(2ε²) φ_ε(x)`.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let f = -0.5 / (self.epsilon * self.epsilon) * self.eval(x);
        x.iter().map(|v| f * v).collect()
    }

    pub fn grad_1d(&self, x: f64) -> f64 {
        -0.5 / (self.epsilon * self.epsilon) * x * self.eval_1d(x)
    }

    /// `φ_ε''(x)` in one dimension.
    pub fn second_derivative_1d(&self, x: f64) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        (x * x / (4.0 * e2 * e2) - 0.5 / e2) * self.eval_1d(x)
    }
}

/// Blob width tied to the initial grid spacing, `ε = h^q`.
///
/// With `q = 1 - p` this is the borderline case of `h^{1-p} ≤ ε`.
pub fn epsilon_from_spacing(h: f64, q: f64) -> Result<f64> {
    if !(h > 0.0) {
        return domain(format!("grid spacing must be positive, got {h}"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return domain(format!("width exponent must lie in (0, 1], got {q}"));
    }
    if h >= 1.0 {
        log::warn!("grid spacing {h} >= 1: h^q no longer exceeds h");
    }
    Ok(h.powf(q))
}
