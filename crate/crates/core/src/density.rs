//! Initial data, particle discretization, density reconstruction and
//! remeshing.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mollifier::Mollifier;
use crate::quadrature::{integrate, integrate_with_breaks, simpson, trapezoid, QuadOpts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum DensitySpec {
    /// `height · 1_[a,b]`
    #[serde(rename = "char")]
    Characteristic { a: f64, b: f64, height: f64 },
    /// `mass · ρ_α(x - center, τ)`
    #[serde(rename = "barenblatt")]
    Barenblatt { alpha: f64, tau: f64, mass: f64, center: f64 },
    #[serde(rename = "sum")]
    Superposition { parts: Vec<DensitySpec> },
}

/// `β = 1/(2 + d(α-1))` and the normalization `κ` making `ρ_α(·,1)` a
/// probability density.
pub fn barenblatt_params(alpha: f64, dim: usize) -> Result<(f64, f64)> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return domain(format!("Barenblatt exponent must exceed 1, got {alpha}"));
    }
    if dim == 0 {
        return domain("dimension must be at least 1");
    }
    let beta = 1.0 / (2.0 + dim as f64 * (alpha - 1.0));
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (alpha.to_bits(), dim);
    if let Some(&k) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok((beta, k));
    }
    let kappa = solve_kappa(alpha, beta, dim)?;
    cache.lock().expect("cache poisoned").insert(key, kappa);
    Ok((beta, kappa))
}

fn quadratic_coef(alpha: f64, beta: f64) -> f64 {
    0.5 * beta * (alpha - 1.0) / alpha
}

/// `∫ (κ - c|x|²)_+^{1/(α-1)} dx` over `ℝ^d`, by radial quadrature.
fn profile_mass(kappa: f64, alpha: f64, beta: f64, dim: usize) -> Result<f64> {
    let c = quadratic_coef(alpha, beta);
    let p = 1.0 / (alpha - 1.0);
    let radius = (kappa / c).sqrt();
    let d = dim as f64;
    let sphere = 2.0 * std::f64::consts::PI.powf(0.5 * d) / libm::tgamma(0.5 * d);
    let opts = QuadOpts { abs_tol: 1e-13, rel_tol: 1e-13, max_intervals: 4000 };
    let radial = integrate(
        |r: f64| r.powi(dim as i32 - 1) * (kappa - c * r * r).max(0.0).powf(p),
        0.0,
        radius,
        opts,
    )?;
    // the 1D "sphere" is the two points ±1
    Ok(sphere * radial)
}

fn solve_kappa(alpha: f64, beta: f64, dim: usize) -> Result<f64> {
    let (mut lo, mut hi) = (1e-12, 1.0);
    while profile_mass(hi, alpha, beta, dim)? < 1.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical("Barenblatt normalization bracket not found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profile_mass(mid, alpha, beta, dim)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `ρ_α(x, τ)` at distance `r = |x|` from the center.
pub fn barenblatt_profile(alpha: f64, tau: f64, dim: usize, r: f64) -> Result<f64> {
    let (beta, kappa) = barenblatt_params(alpha, dim)?;
    let c = quadratic_coef(alpha, beta);
    let base = kappa - c * tau.powf(-2.0 * beta) * r * r;
    if base <= 0.0 {
        return Ok(0.0);
    }
    Ok(tau.powf(-(dim as f64) * beta) * base.powf(1.0 / (alpha - 1.0)))
}

/// Support radius of `ρ_α(·, τ)`.
pub fn barenblatt_radius(alpha: f64, tau: f64, dim: usize) -> Result<f64> {
    let (beta, kappa) = barenblatt_params(alpha, dim)?;
    Ok(tau.powf(beta) * (kappa / quadratic_coef(alpha, beta)).sqrt())
}

impl DensitySpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            DensitySpec::Characteristic { a, b, height } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    out.push(format!("characteristic interval needs a < b, got [{a}, {b}]"));
                }
                if !(*height >= 0.0 && height.is_finite()) {
                    out.push(format!("characteristic height must be nonnegative, got {height}"));
                }
            }
            DensitySpec::Barenblatt { alpha, tau, mass, center } => {
                if !(*alpha > 1.0 && alpha.is_finite()) {
                    out.push(format!("Barenblatt alpha must exceed 1, got {alpha}"));
                }
                if !(*tau > 0.0 && tau.is_finite()) {
                    out.push(format!("Barenblatt tau must be positive, got {tau}"));
                }
                if !(*mass > 0.0 && mass.is_finite()) {
                    out.push(format!("Barenblatt mass must be positive, got {mass}"));
                }
                if !center.is_finite() {
                    out.push(format!("Barenblatt center must be finite, got {center}"));
                }
            }
            DensitySpec::Superposition { parts } => {
                if parts.is_empty() {
                    out.push("superposition needs at least one part".into());
                }
                for p in parts {
                    out.extend(p.problems());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(p.join("; ")))
        }
    }

    /// Pointwise density in one dimension.
    pub fn eval(&self, x: f64) -> Result<f64> {
        match *self {
            DensitySpec::Characteristic { a, b, height } => {
                Ok(if x >= a && x <= b { height } else { 0.0 })
            }
            DensitySpec::Barenblatt { alpha, tau, mass, center } => {
                Ok(mass * barenblatt_profile(alpha, tau, 1, (x - center).abs())?)
            }
            DensitySpec::Superposition { ref parts } => parts.iter().map(|p| p.eval(x)).sum(),
        }
    }

    /// Smallest interval containing the support.
    pub fn support(&self) -> Result<(f64, f64)> {
        match *self {
            DensitySpec::Characteristic { a, b, .. } => Ok((a, b)),
            DensitySpec::Barenblatt { alpha, tau, center, .. } => {
                let r = barenblatt_radius(alpha, tau, 1)?;
                Ok((center - r, center + r))
            }
            DensitySpec::Superposition { ref parts } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for p in parts {
                    let (a, b) = p.support()?;
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
                Ok((lo, hi))
            }
        }
    }

    /// `∫_a^b` of the density; exact for characteristic functions.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        match *self {
            DensitySpec::Characteristic { a: lo, b: hi, height } => {
                Ok(height * (b.min(hi) - a.max(lo)).max(0.0))
            }
            DensitySpec::Barenblatt { alpha, tau, mass, center } => {
                let r = barenblatt_radius(alpha, tau, 1)?;
                let (lo, hi) = (a.max(center - r), b.min(center + r));
                if lo >= hi {
                    return Ok(0.0);
                }
                let opts = QuadOpts { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 2000 };
                let v = integrate_with_breaks(
                    |x| barenblatt_profile(alpha, tau, 1, (x - center).abs()).unwrap_or(0.0),
                    lo,
                    hi,
                    &[center],
                    opts,
                )?;
                Ok(mass * v)
            }
            DensitySpec::Superposition { ref parts } => {
                parts.iter().map(|p| p.integral(a, b)).sum()
            }
        }
    }
}

/// Dirac masses `Σ m_i δ_{x_i}` with reference spacing `h`.
///
/// Positions are stored flat (`N·d` values). In one dimension they are
/// kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    weights: Vec<f64>,
    h: f64,
    dim: usize,
    /// Computational domain the ensemble was laid down on (1D).
    domain: Option<(f64, f64)>,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, weights: Vec<f64>, h: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        if positions.len() != weights.len() * dim {
            return domain(format!(
                "{} coordinates do not match {} weights in dimension {dim}",
                positions.len(),
                weights.len()
            ));
        }
        if !(h > 0.0 && h.is_finite()) {
            return domain(format!("reference spacing must be positive, got {h}"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return domain("weights must be finite and nonnegative");
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return domain("positions must be finite");
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return domain("total weight must be positive");
        }
        let mut e = Self { positions, weights, h, dim, domain: None };
        if dim == 1 {
            e.sort();
        }
        Ok(e)
    }

    fn sort(&mut self) {
        if self.positions.windows(2).all(|w| w[0] <= w[1]) {
            return;
        }
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        idx.sort_by(|&i, &j| self.positions[i].total_cmp(&self.positions[j]));
        self.positions = idx.iter().map(|&i| self.positions[i]).collect();
        self.weights = idx.iter().map(|&i| self.weights[i]).collect();
    }

    pub fn with_domain(mut self, a: f64, b: f64) -> Self {
        self.domain = Some((a, b));
        self
    }

    pub fn domain(&self) -> Option<(f64, f64)> {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Same weights and metadata, new positions (1D positions are re-sorted).
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        let mut e = Self::new(positions, self.weights.clone(), self.h, self.dim)?;
        e.domain = self.domain;
        Ok(e)
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn center_of_mass(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (k, ck) in c.iter_mut().enumerate() {
                *ck += w * self.positions[i * self.dim + k];
            }
        }
        let m = self.mass();
        c.iter_mut().for_each(|v| *v /= m);
        c
    }

    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.position(i).iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// Drops particles of exactly zero weight.
    pub fn without_zero_weights(&self) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        let mut positions = Vec::with_capacity(keep.len() * self.dim);
        for &i in &keep {
            positions.extend_from_slice(self.position(i));
        }
        Self {
            positions,
            weights: keep.iter().map(|&i| self.weights[i]).collect(),
            h: self.h,
            dim: self.dim,
            domain: self.domain,
        }
    }
}

/// One Dirac mass per cell of a uniform partition of `[a, b]`, at the cell
/// center, weighted by the cell integral of the density.
pub fn discretize(spec: &DensitySpec, a: f64, b: f64, n: usize) -> Result<ParticleEnsemble> {
    if n < 2 {
        return domain(format!("need at least 2 particles, got {n}"));
    }
    if !(a < b) {
        return domain(format!("domain needs a < b, got [{a}, {b}]"));
    }
    spec.validate()?;
    let h = (b - a) / n as f64;
    let mut positions = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == n { b } else { a + (i + 1) as f64 * h };
        positions.push(a + (i as f64 + 0.5) * h);
        weights.push(spec.integral(lo, hi)?);
    }
    Ok(ParticleEnsemble::new(positions, weights, h, 1)?.with_domain(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1d {
    pub origin: f64,
    pub spacing: f64,
    pub count: usize,
}

impl Grid1d {
    /// `count` equispaced nodes covering `[a, b]` inclusive.
    pub fn spanning(a: f64, b: f64, count: usize) -> Result<Self> {
        if count < 2 || !(a < b) {
            return domain(format!(
                "grid needs a < b and at least 2 nodes, got [{a}, {b}], {count}"
            ));
        }
        Ok(Self { origin: a, spacing: (b - a) / (count - 1) as f64, count })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.x(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.x(self.count - 1)
    }
}

/// Density samples on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid: Grid1d,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Grid1d, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count {
            return domain(format!("{} values for a grid of {} nodes", values.len(), grid.count));
        }
        if !(grid.spacing > 0.0) {
            return domain("grid spacing must be positive");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("grid values must be finite");
        }
        Ok(Self { grid, values })
    }

    pub fn sample(spec: &DensitySpec, grid: Grid1d) -> Result<Self> {
        let values = (0..grid.count).map(|i| spec.eval(grid.x(i))).collect::<Result<_>>()?;
        Self::new(grid, values)
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn center_of_mass(&self) -> f64 {
        let xv: Vec<f64> =
            self.values.iter().enumerate().map(|(i, v)| v * self.grid.x(i)).collect();
        trapezoid(&xv, self.grid.spacing) / self.mass()
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.grid != other.grid {
            return domain("L1 distance needs identical grids");
        }
        let d: Vec<f64> =
            self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(trapezoid(&d, self.grid.spacing))
    }
}

/// Beyond this many `ε` a Gaussian blob contributes less than `e^{-56}`
/// of its peak.
const BLOB_REACH: f64 = 15.0;

/// `ψ(x) = Σ_i φ_ε(x - x_i) m_i` at each of the (any order) points `xs`.
pub fn reconstruct_at(ens: &ParticleEnsemble, moll: &Mollifier, xs: &[f64]) -> Result<Vec<f64>> {
    if ens.dim() != 1 {
        return Err(Error::Unsupported("density reconstruction is one-dimensional".into()));
    }
    let pos = ens.positions();
    let w = ens.weights();
    let reach = BLOB_REACH * moll.epsilon();
    let peak = moll.peak();
    let a = moll.exponent_scale();
    Ok(xs
        .iter()
        .map(|&x| {
            let lo = pos.partition_point(|&p| p < x - reach);
            let hi = pos.partition_point(|&p| p <= x + reach);
            let mut s = 0.0;
            for j in lo..hi {
                let d = x - pos[j];
                s += w[j] * (-a * d * d).exp();
            }
            peak * s
        })
        .collect())
}

pub fn reconstruct(ens: &ParticleEnsemble, moll: &Mollifier, grid: Grid1d) -> Result<GridDensity> {
    let values = reconstruct_at(ens, moll, &grid.nodes())?;
    GridDensity::new(grid, values)
}

/// Largest gap between consecutive particles (1D).
pub fn max_gap(ens: &ParticleEnsemble) -> Result<f64> {
    if ens.dim() != 1 {
        return Err(Error::Unsupported("max_gap is one-dimensional".into()));
    }
    if ens.len() < 2 {
        return domain("max_gap needs at least 2 particles");
    }
    Ok(ens.positions().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
}

const REMESH_SUBCELLS: usize = 10;
const REMESH_THRESHOLD: f64 = 1e-12;

/// Largest gap between consecutive particles whose midpoint lies inside the
/// reconstructed support (density ≥ 1e-12 of its maximum). Gaps separating
/// disjoint components do not count.
pub fn support_gap(ens: &ParticleEnsemble, moll: &Mollifier) -> Result<f64> {
    max_gap(ens)?;
    let pos = ens.positions();
    let peak = reconstruct_at(ens, moll, pos)?.into_iter().fold(0.0, f64::max);
    let cutoff = REMESH_THRESHOLD * peak;
    let mut widest = 0.0f64;
    for w in pos.windows(2) {
        let g = w[1] - w[0];
        if g > widest && reconstruct_at(ens, moll, &[0.5 * (w[0] + w[1])])?[0] >= cutoff {
            widest = g;
        }
    }
    Ok(widest)
}

/// Re-initializes the ensemble from its reconstruction on cells of the
/// original width `h`, aligned to the original lattice when the domain is
/// known. Cells carrying less than the support threshold are dropped and
/// total mass is restored by a single global factor.
pub fn remesh(ens: &ParticleEnsemble, moll: &Mollifier) -> Result<ParticleEnsemble> {
    if ens.dim() != 1 {
        return Err(Error::Unsupported("remeshing is one-dimensional".into()));
    }
    let h = ens.h();
    let pos = ens.positions();
    let (first, last) = (pos[0], pos[pos.len() - 1]);
    let anchor = ens.domain().map_or(first - 0.5 * h, |d| d.0);
    let limit_width = 10.0 * ens.domain().map_or(last - first + h, |d| d.1 - d.0);

    let peak = reconstruct_at(ens, moll, pos)?.into_iter().fold(0.0, f64::max);
    let cutoff = REMESH_THRESHOLD * peak;
    let step = moll.epsilon().min(h);
    let mut lo = first;
    while reconstruct_at(ens, moll, &[lo])?[0] >= cutoff {
        lo -= step;
        if last - lo > limit_width {
            return Err(Error::Numerical(
                "reconstructed density support exceeds 10x the domain".into(),
            ));
        }
    }
    let mut hi = last;
    while reconstruct_at(ens, moll, &[hi])?[0] >= cutoff {
        hi += step;
        if hi - lo > limit_width {
            return Err(Error::Numerical(
                "reconstructed density support exceeds 10x the domain".into(),
            ));
        }
    }

    let k_lo = ((lo - anchor) / h).floor() as i64;
    let k_hi = ((hi - anchor) / h).ceil() as i64;
    let cells = (k_hi - k_lo) as usize;
    let sub = h / REMESH_SUBCELLS as f64;
    let fine: Vec<f64> =
        (0..=cells * REMESH_SUBCELLS).map(|j| anchor + k_lo as f64 * h + j as f64 * sub).collect();
    let values = reconstruct_at(ens, moll, &fine)?;

    let mut positions = Vec::with_capacity(cells);
    let mut weights = Vec::with_capacity(cells);
    for c in 0..cells {
        let s = c * REMESH_SUBCELLS;
        let w = simpson(&values[s..=s + REMESH_SUBCELLS], sub);
        if w >= cutoff * h {
            positions.push(anchor + (k_lo + c as i64) as f64 * h + 0.5 * h);
            weights.push(w);
        }
    }
    let scale = ens.mass() / weights.iter().sum::<f64>();
    weights.iter_mut().for_each(|w| *w *= scale);
    let mut out = ParticleEnsemble::new(positions, weights, h, 1)?;
    out.domain = ens.domain();
    Ok(out)
}
