//! Continuum functionals of grid densities: entropy, interaction energy,
//! dilation scaling laws, critical exponents, the height-constrained energy
//! and equilibrium classification.

use serde::{Deserialize, Serialize};

use crate::density::{Grid1d, GridDensity};
use crate::error::{domain, Result};
use crate::kernels::KernelSpec;
use crate::quadrature::trapezoid;

/// Steady-state speed threshold.
pub const STEADY_SPEED: f64 = 1e-4;
/// Plateau tolerance for phase detection.
pub const PLATEAU_TOL: f64 = 0.02;
/// Tolerance of the symmetric-decreasing check, relative to the maximum.
pub const MONOTONE_TOL: f64 = 1e-3;
/// `E_∞` is finite when the density never exceeds `1 + HEIGHT_TOL`.
pub const HEIGHT_TOL: f64 = 1e-3;

/// `S_m[ρ] = ∫ ρ^m/(m-1)`, or `∫ ρ log ρ` for `m = 1` (with `0 log 0 = 0`).
pub fn grid_entropy(rho: &GridDensity, m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return domain(format!("diffusion exponent must be >= 1, got {m}"));
    }
    if rho.values.iter().any(|&v| v < 0.0) {
        return domain("density values must be nonnegative");
    }
    let f: Vec<f64> = rho
        .values
        .iter()
        .map(|&v| {
            if m == 1.0 {
                if v > 0.0 {
                    v * v.ln()
                } else {
                    0.0
                }
            } else {
                v.powf(m) / (m - 1.0)
            }
        })
        .collect();
    Ok(trapezoid(&f, rho.grid.spacing))
}

/// `𝒲[ρ] = ½ ∬ ρ(x) ρ(y) W(x - y)` by the tensor trapezoid rule. The
/// zero-distance entries use the cell average of `W`, which stays finite for
/// integrable singularities.
pub fn grid_interaction(rho: &GridDensity, kernel: &KernelSpec) -> Result<f64> {
    let n = rho.values.len();
    let h = rho.grid.spacing;
    let mut w_of = Vec::with_capacity(n);
    w_of.push(kernel.cell_self_average(h));
    for k in 1..n {
        w_of.push(kernel.evaluate(&[k as f64 * h])?);
    }
    let c: Vec<f64> =
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h } * rho.values[i]).collect();
    let mut total = 0.0;
    for i in 0..n {
        if c[i] == 0.0 {
            continue;
        }
        let mut row = 0.5 * w_of[0] * c[i];
        for j in (i + 1)..n {
            row += w_of[j - i] * c[j];
        }
        total += c[i] * row;
    }
    Ok(total)
}

/// Mass-preserving dilation `ρ_λ(x) = λ ρ(λx)`. In one dimension this is
/// exact: the grid is scaled by `1/λ` and the values by `λ`.
pub fn dilate(rho: &GridDensity, lambda: f64) -> Result<GridDensity> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return domain(format!("dilation factor must be positive, got {lambda}"));
    }
    let grid = Grid1d {
        origin: rho.grid.origin / lambda,
        spacing: rho.grid.spacing / lambda,
        count: rho.grid.count,
    };
    GridDensity::new(grid, rho.values.iter().map(|v| lambda * v).collect())
}

/// Both sides of one homogeneity identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    /// Functional evaluated on the dilated density.
    pub dilated: f64,
    /// Value predicted from the undilated density.
    pub predicted: f64,
    pub residual: f64,
}

impl Identity {
    fn new(dilated: f64, predicted: f64) -> Self {
        let scale = predicted.abs().max(dilated.abs());
        let residual = if scale < 1e-12 {
            (dilated - predicted).abs()
        } else {
            (dilated - predicted).abs() / scale
        };
        Self { dilated, predicted, residual }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambda: f64,
    pub entropy: Identity,
    pub interaction: Identity,
}

impl ScalingReport {
    pub fn max_residual(&self) -> f64 {
        self.entropy.residual.max(self.interaction.residual)
    }
}

/// Checks `S_m[ρ_λ] = λ^{m-1} S_m[ρ]` (`S_1[ρ_λ] = S_1[ρ] + M log λ`) and
/// `𝒲_k[ρ_λ] = λ^{-k} 𝒲_k[ρ]` (`𝒲_0[ρ_λ] = 𝒲_0[ρ] - ½ M² log λ`).
pub fn check_scaling_laws(
    rho: &GridDensity,
    m: f64,
    kernel: &KernelSpec,
    lambda: f64,
) -> Result<ScalingReport> {
    let Some(k) = kernel.power_exponent() else {
        return domain(format!("scaling laws need a power-law kernel, got {kernel:?}"));
    };
    let dilated = dilate(rho, lambda)?;
    let mass = rho.mass();
    let s = grid_entropy(rho, m)?;
    let s_pred = if m == 1.0 { s + mass * lambda.ln() } else { lambda.powf(m - 1.0) * s };
    let w = grid_interaction(rho, kernel)?;
    let w_pred = if k == 0.0 { w - 0.5 * mass * mass * lambda.ln() } else { lambda.powf(-k) * w };
    Ok(ScalingReport {
        lambda,
        entropy: Identity::new(grid_entropy(&dilated, m)?, s_pred),
        interaction: Identity::new(grid_interaction(&dilated, kernel)?, w_pred),
    })
}

/// `m_c = 1 - k/d`, separating diffusion- and aggregation-dominated regimes
/// for `W = |x|^k/k`. The endpoint `k = -d` is accepted (`m_c = 2`).
pub fn critical_exponent(k: f64, dim: usize) -> Result<f64> {
    let d = dim as f64;
    if dim == 0 || !(k >= -d) || k > 2.0 {
        return domain(format!("critical exponent needs -d <= k <= 2, got k = {k}, d = {dim}"));
    }
    Ok(1.0 - k / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criticality {
    /// `∫ W dx`
    pub integral: f64,
    /// Critical exponent for integrable kernels.
    pub critical_m: f64,
    /// At `m = 2`, `ν = 1`: a minimizer exists iff `∫ W < -2`.
    pub minimizer_exists: bool,
}

impl Criticality {
    /// Existence prediction for a general diffusion coefficient: `∫ W < -2ν`.
    pub fn minimizer_exists_for(&self, nu: f64) -> bool {
        self.integral < -2.0 * nu
    }
}

pub fn integrable_kernel_criticality(kernel: &KernelSpec) -> Result<Criticality> {
    let integral = kernel.integral(1)?;
    Ok(Criticality { integral, critical_m: 2.0, minimizer_exists: integral < -2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Liquid,
    Intermediate,
    Solid,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Liquid => "liquid",
            Phase::Intermediate => "intermediate",
            Phase::Solid => "solid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// False when the speed is above [`STEADY_SPEED`]; the remaining fields
    /// are still filled in.
    pub converged: bool,
    pub phase: Phase,
    /// `|{ρ ≥ 1 - tol}| / M`
    pub plateau_fraction: f64,
    pub symmetric_decreasing: bool,
}

/// Phase of a (near) steady state from the measure of its plateau at height 1.
pub fn classify_equilibrium(rho: &GridDensity, speed: f64, tol: f64) -> Result<Equilibrium> {
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("plateau tolerance must lie in (0, 1), got {tol}"));
    }
    let mass = rho.mass();
    if !(mass > 0.0) {
        return domain("cannot classify a density with no mass");
    }
    let level = 1.0 - tol;
    let indicator: Vec<f64> =
        rho.values.iter().map(|&v| if v >= level { 1.0 } else { 0.0 }).collect();
    let fraction = trapezoid(&indicator, rho.grid.spacing) / mass;
    let phase = if fraction < 0.1 {
        Phase::Liquid
    } else if fraction > 0.9 {
        Phase::Solid
    } else {
        Phase::Intermediate
    };
    Ok(Equilibrium {
        converged: speed < STEADY_SPEED,
        phase,
        plateau_fraction: fraction,
        symmetric_decreasing: symmetric_decreasing(rho, MONOTONE_TOL),
    })
}

/// True when `ρ` is even about its center of mass and non-increasing in
/// `|x - c|`, both up to `tol · max ρ`.
pub fn symmetric_decreasing(rho: &GridDensity, tol: f64) -> bool {
    let slack = tol * rho.max();
    let c = rho.center_of_mass();
    let g = rho.grid;
    let v = &rho.values;
    let split = (((c - g.origin) / g.spacing).floor().max(-1.0) as isize + 1) as usize;
    let split = split.min(v.len());
    let rising = v[..split].windows(2).all(|w| w[1] >= w[0] - slack);
    let falling = v[split..].windows(2).all(|w| w[1] <= w[0] + slack);
    if !(rising && falling) {
        return false;
    }
    // mirror each node through c
    let at = |x: f64| -> f64 {
        let s = (x - g.origin) / g.spacing;
        if s < 0.0 || s > (g.count - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(g.count - 2);
        let f = s - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    };
    (0..g.count).all(|i| (v[i] - at(2.0 * c - g.x(i))).abs() <= slack)
}

/// Positions of the local maxima of `ρ` whose topographic prominence is at
/// least `frac · max ρ`. A flat top counts once, at its midpoint.
pub fn local_maxima(rho: &GridDensity, frac: f64) -> Vec<f64> {
    // collapse runs of equal values
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &v) in rho.values.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.2 == v => r.1 = i,
            _ => runs.push((i, i, v)),
        }
    }
    let floor = frac * rho.max();
    let mut out = Vec::new();
    for k in 0..runs.len() {
        let v = runs[k].2;
        let left_lower = k == 0 || runs[k - 1].2 < v;
        let right_lower = k + 1 == runs.len() || runs[k + 1].2 < v;
        if !(left_lower && right_lower) || v <= 0.0 {
            continue;
        }
        let mut left_min = v;
        for r in runs[..k].iter().rev() {
            if r.2 > v {
                break;
            }
            left_min = left_min.min(r.2);
        }
        let mut right_min = v;
        for r in &runs[k + 1..] {
            if r.2 > v {
                break;
            }
            right_min = right_min.min(r.2);
        }
        if v - left_min.max(right_min) >= floor {
            let mid = 0.5 * (runs[k].0 + runs[k].1) as f64;
            out.push(rho.grid.origin + mid * rho.grid.spacing);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub entropy: f64,
    pub interaction: f64,
    /// `ν S_m + 𝒲`
    pub total: f64,
    /// Height-constrained energy; `None` when the density exceeds 1.
    pub constrained: Option<f64>,
    pub mass: f64,
}

pub fn energy_report(
    rho: &GridDensity,
    kernel: &KernelSpec,
    m: f64,
    nu: f64,
) -> Result<EnergyReport> {
    let entropy = grid_entropy(rho, m)?;
    let interaction = grid_interaction(rho, kernel)?;
    let constrained = (rho.max() <= 1.0 + HEIGHT_TOL).then_some(interaction);
    Ok(EnergyReport {
        entropy,
        interaction,
        total: nu * entropy + interaction,
        constrained,
        mass: rho.mass(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::quadrature::{integrate, QuadOpts};
    use proptest::prelude::*;

    fn sampled(values: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> GridDensity {
        let g = Grid1d::spanning(a, b, n).unwrap();
        GridDensity::new(g, (0..n).map(|i| values(g.x(i))).collect()).unwrap()
    }

    fn bump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            (1.0 - x * x).powi(4) * 315.0 / 256.0
        } else {
            0.0
        }
    }

    #[test]
    fn entropy_examples() {
        let one = sampled(|_| 1.0, 0.0, 1.0, 101);
        assert!((grid_entropy(&one, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(grid_entropy(&one, 1.0).unwrap().abs() < 1e-15);
        let two = sampled(|_| 2.0, 0.0, 0.5, 51);
        assert!((grid_entropy(&two, 3.0).unwrap() - 2.0).abs() < 1e-14);
        let with_zero = sampled(|x| x, 0.0, 1.0, 2001);
        // ∫ x log x = -1/4
        assert!((grid_entropy(&with_zero, 1.0).unwrap() + 0.25).abs() < 1e-5);
        assert!(grid_entropy(&one, 0.5).is_err());
    }

    #[test]
    fn interaction_examples() {
        let rho = sampled(|_| 1.0, 0.0, 1.0, 1001);
        assert_eq!(grid_interaction(&rho, &KernelSpec::Zero).unwrap(), 0.0);
        // ½ ∬_{[0,1]²} |x - y| = 1/6
        let abs = KernelSpec::PowerLaw { k: 1.0 };
        assert!((grid_interaction(&rho, &abs).unwrap() - 1.0 / 6.0).abs() < 1e-3);
        let quad = KernelSpec::PowerLaw { k: 2.0 };
        // ½ ∬ (x-y)²/2 = 1/24
        assert!((grid_interaction(&rho, &quad).unwrap() - 1.0 / 24.0).abs() < 1e-6);

        let mut hot = vec![0.0; 101];
        hot[50] = 100.0;
        let hot = GridDensity::new(Grid1d::spanning(0.0, 1.0, 101).unwrap(), hot).unwrap();
        assert!(grid_interaction(&hot, &quad).unwrap().abs() < 1e-4);
    }

    #[test]
    fn singular_interaction_converges() {
        // ½ ∬_{[0,1]²} ln|x - y| = -3/4
        let log = KernelSpec::PowerLaw { k: 0.0 };
        let coarse = grid_interaction(&sampled(|_| 1.0, 0.0, 1.0, 201), &log).unwrap();
        let fine = grid_interaction(&sampled(|_| 1.0, 0.0, 1.0, 2001), &log).unwrap();
        assert!((fine + 0.75).abs() < (coarse + 0.75).abs());
        assert!((fine + 0.75).abs() < 2e-3, "{fine}");
    }

    #[test]
    fn interaction_matches_independent_quadrature() {
        let k = KernelSpec::Scaled {
            factor: -1.0,
            kernel: Box::new(KernelSpec::LocalizedGaussian { delta: 0.2 }),
        };
        let rho = sampled(bump, -1.0, 1.0, 801);
        let got = grid_interaction(&rho, &k).unwrap();
        let opts = QuadOpts { abs_tol: 1e-12, rel_tol: 1e-10, ..Default::default() };
        let inner = |x: f64| {
            integrate(|y| bump(y) * k.evaluate(&[x - y]).unwrap(), -1.0, 1.0, opts).unwrap()
        };
        let want = 0.5 * integrate(|x| bump(x) * inner(x), -1.0, 1.0, opts).unwrap();
        assert!((got - want).abs() < 1e-5 * want.abs(), "{got} {want}");
    }

    #[test]
    fn dilation_examples() {
        let rho = sampled(|x| if x.abs() <= 1.0 { 1.0 } else { 0.0 }, -1.0, 1.0, 201);
        assert_eq!(dilate(&rho, 1.0).unwrap(), rho);
        let d = dilate(&rho, 2.0).unwrap();
        assert!((d.grid.origin + 0.5).abs() < 1e-15 && (d.grid.end() - 0.5).abs() < 1e-15);
        assert!(d.values.iter().all(|&v| v == 2.0));
        assert!((d.mass() - rho.mass()).abs() < 1e-12);
        assert!(dilate(&rho, 0.0).is_err());
    }

    #[test]
    fn scaling_law_examples() {
        let rho = sampled(bump, -1.5, 1.5, 2001);
        let r = check_scaling_laws(&rho, 2.0, &KernelSpec::PowerLaw { k: 2.0 }, 2.0).unwrap();
        let ratio = r.entropy.dilated / grid_entropy(&rho, 2.0).unwrap();
        assert!((ratio - 2.0).abs() < 1e-6);
        let wr = r.interaction.dilated
            / grid_interaction(&rho, &KernelSpec::PowerLaw { k: 2.0 }).unwrap();
        assert!((wr - 0.25).abs() < 1e-4);

        let e = std::f64::consts::E;
        let log = KernelSpec::PowerLaw { k: 0.0 };
        let r = check_scaling_laws(&rho, 1.0, &log, e).unwrap();
        let shift = r.interaction.dilated - grid_interaction(&rho, &log).unwrap();
        assert!((shift + 0.5).abs() < 1e-3, "{shift}");
        let s_shift = r.entropy.dilated - grid_entropy(&rho, 1.0).unwrap();
        assert!((s_shift - 1.0).abs() < 1e-3);
        assert!(check_scaling_laws(&rho, 2.0, &KernelSpec::Zero, 2.0).is_err());
    }

    #[test]
    fn scaling_law_grid() {
        let rho = sampled(bump, -1.5, 1.5, 2001);
        for m in [1.0, 2.0, 3.0] {
            for k in [-0.5, 0.0, 1.0, 2.0] {
                for lambda in [0.5, 2.0, 3.7] {
                    let r =
                        check_scaling_laws(&rho, m, &KernelSpec::PowerLaw { k }, lambda).unwrap();
                    assert!(r.max_residual() < 1e-10, "m={m} k={k} {r:?}");
                }
            }
        }
    }

    #[test]
    fn critical_exponents() {
        assert_eq!(critical_exponent(0.0, 2).unwrap(), 1.0);
        assert!((critical_exponent(-1.0, 3).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(critical_exponent(-1.0, 1).unwrap(), 2.0);
        assert!(critical_exponent(-2.5, 2).is_err());
        assert!(critical_exponent(3.0, 1).is_err());
    }

    #[test]
    fn integrable_criticality() {
        let g = KernelSpec::LocalizedGaussian { delta: 0.3 };
        let c = integrable_kernel_criticality(&g).unwrap();
        assert!((c.integral - 1.0).abs() < 1e-12 && !c.minimizer_exists);
        let neg = KernelSpec::Scaled { factor: -3.0, kernel: Box::new(g) };
        let c = integrable_kernel_criticality(&neg).unwrap();
        assert!((c.integral + 3.0).abs() < 1e-12 && c.minimizer_exists);
        assert!(c.minimizer_exists_for(1.4) && !c.minimizer_exists_for(1.6));
        assert_eq!(integrable_kernel_criticality(&KernelSpec::Zero).unwrap().integral, 0.0);
        assert!(integrable_kernel_criticality(&KernelSpec::PowerLaw { k: 1.0 }).is_err());

        let morse = KernelSpec::Morse { c_a: 1.0, c_r: 0.5, l_a: 1.0, l_r: 0.5 };
        let want = integrate(
            |x| 2.0 * morse.evaluate(&[x]).unwrap(),
            0.0,
            60.0,
            QuadOpts { abs_tol: 1e-12, rel_tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        let got = integrable_kernel_criticality(&morse).unwrap().integral;
        assert!((got - want).abs() < 1e-8, "{got} {want}");
    }

    #[test]
    fn phases() {
        let solid = GridDensity::sample(
            &DensitySpec::Characteristic { a: -0.7, b: 0.7, height: 1.0 },
            Grid1d::spanning(-1.0, 1.0, 2001).unwrap(),
        )
        .unwrap();
        let e = classify_equilibrium(&solid, 0.0, PLATEAU_TOL).unwrap();
        assert_eq!(e.phase, Phase::Solid);
        assert!(e.converged && e.symmetric_decreasing);

        let liquid = sampled(|x| 0.8 * (-x * x * 10.0).exp(), -2.0, 2.0, 2001);
        assert_eq!(classify_equilibrium(&liquid, 0.0, PLATEAU_TOL).unwrap().phase, Phase::Liquid);

        // plateau of mass 0.7 and exponential tails of mass 0.3
        let lam = 2.0 / 0.3;
        let mixed = sampled(
            |x| if x.abs() <= 0.35 { 1.0 } else { (-lam * (x.abs() - 0.35)).exp() },
            -5.0,
            5.0,
            20001,
        );
        let e = classify_equilibrium(&mixed, 0.0, PLATEAU_TOL).unwrap();
        assert_eq!(e.phase, Phase::Intermediate);
        assert!((e.plateau_fraction - 0.7).abs() < 0.05);
        assert!(!classify_equilibrium(&mixed, 1.0, PLATEAU_TOL).unwrap().converged);
    }

    #[test]
    fn symmetric_decreasing_detects_two_bumps() {
        let one = sampled(|x| (-x * x * 20.0).exp(), -1.0, 1.0, 1001);
        assert!(symmetric_decreasing(&one, MONOTONE_TOL));
        let two = sampled(
            |x| (-(x - 0.3).powi(2) * 80.0).exp() + (-(x + 0.3).powi(2) * 80.0).exp(),
            -1.0,
            1.0,
            1001,
        );
        assert!(!symmetric_decreasing(&two, MONOTONE_TOL));
        let skew = sampled(
            |x| if x < 0.0 { (-x * x * 20.0).exp() } else { (-x * x * 5.0).exp() },
            -2.0,
            2.0,
            1001,
        );
        assert!(!symmetric_decreasing(&skew, MONOTONE_TOL));
    }

    #[test]
    fn maxima_with_prominence() {
        let two = sampled(
            |x| (-(x - 0.3).powi(2) * 80.0).exp() + (-(x + 0.3).powi(2) * 80.0).exp(),
            -1.0,
            1.0,
            1001,
        );
        let m = local_maxima(&two, 0.05);
        assert_eq!(m.len(), 2);
        assert!((m[0] + 0.3).abs() < 0.01 && (m[1] - 0.3).abs() < 0.01);
        // a 2% ripple does not count
        let ripple =
            sampled(|x| (-x * x * 4.0).exp() * (1.0 + 0.02 * (x * 300.0).cos()), -1.0, 1.0, 2001);
        assert_eq!(local_maxima(&ripple, 0.05).len(), 1);
        assert!(local_maxima(&ripple, 1e-4).len() > 1);
        let flat = sampled(|x| if x.abs() < 0.5 { 1.0 } else { 0.0 }, -1.0, 1.0, 201);
        let m = local_maxima(&flat, 0.05);
        assert_eq!(m.len(), 1);
        assert!(m[0].abs() < 1e-12);
        let zero = sampled(|_| 0.0, -1.0, 1.0, 11);
        assert!(local_maxima(&zero, 0.05).is_empty());
    }

    #[test]
    fn energy_report_consistency() {
        let rho = sampled(|x| if x.abs() <= 0.5 { 0.9 } else { 0.0 }, -1.0, 1.0, 401);
        let k = KernelSpec::RepulsiveAttractive { a: 4.0, b: 1.0 };
        let r = energy_report(&rho, &k, 2.0, 0.3).unwrap();
        assert_eq!(r.total, 0.3 * r.entropy + r.interaction);
        assert_eq!(r.constrained, Some(r.interaction));
        let tall = sampled(|x| if x.abs() <= 0.25 { 1.8 } else { 0.0 }, -1.0, 1.0, 401);
        assert_eq!(energy_report(&tall, &k, 2.0, 0.3).unwrap().constrained, None);
    }

    proptest! {
        #[test]
        fn classification_is_translation_invariant(shift in -3.0f64..3.0, height in 0.5f64..1.2) {
            let f = |x: f64| height * (1.0 - x * x).max(0.0).sqrt();
            let a = sampled(f, -1.5, 1.5, 601);
            let mut b = a.clone();
            b.grid.origin += shift;
            let ea = classify_equilibrium(&a, 0.0, PLATEAU_TOL).unwrap();
            let eb = classify_equilibrium(&b, 0.0, PLATEAU_TOL).unwrap();
            prop_assert_eq!(ea.phase, eb.phase);
            prop_assert!((ea.plateau_fraction - eb.plateau_fraction).abs() < 1e-9);
            prop_assert_eq!(ea.symmetric_decreasing, eb.symmetric_decreasing);
        }

        #[test]
        fn dilation_preserves_mass(lambda in 0.1f64..10.0) {
            let rho = sampled(bump, -1.2, 1.2, 501);
            let d = dilate(&rho, lambda).unwrap();
            prop_assert!((d.mass() - rho.mass()).abs() < 1e-8);
        }

        #[test]
        fn scaling_laws_hold(m in 1.0f64..4.0, k in -0.9f64..2.0, lambda in 0.2f64..5.0) {
            let rho = sampled(bump, -1.2, 1.2, 401);
            let r = check_scaling_laws(&rho, m, &KernelSpec::PowerLaw { k }, lambda).unwrap();
            prop_assert!(r.max_residual() < 1e-9, "{:?}", r);
        }
    }
}
