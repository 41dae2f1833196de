//! Blob-method velocity field, the regularized energy `E_ε`, its Jacobian,
//! and per-state diagnostics.
//!
//! With `ψ_i = Σ_k φ_ε(x_i - x_k) m_k` and `F'(s) = s^{m-2}`,
//!
//! ```text
//! E_ε = ν Σ_i m_i F(ψ_i) + ½ Σ_i Σ_j W̃(x_i - x_j) m_i m_j
//! v_i = -Σ_j W̃'(x_i - x_j) m_j - ν [ψ_i^{m-2} Σ_j φ_ε'(x_i - x_j) m_j
//!                                   + Σ_j φ_ε'(x_i - x_j) m_j ψ_j^{m-2}]
//! ```
//!
//! so that `v_i = -(1/m_i) ∂E_ε/∂x_i`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::ParticleEnsemble;
use crate::error::{domain, Error, Result};
use crate::kernels::{KernelSpec, PairKernel1d};
use crate::mollifier::Mollifier;

const PSI_FLOOR: f64 = 1e-300;
/// Gaussian pair terms with `|d|²/4ε²` above this are dropped (`e^{-64}`).
const EXP_CUTOFF: f64 = 64.0;

#[derive(Debug, Clone)]
pub struct Model {
    kernel: KernelSpec,
    m: f64,
    nu: f64,
    moll: Mollifier,
    mollify_kernel: bool,
    pair: PairKernel1d,
}

/// Scalar summaries of one particle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mass: f64,
    pub center_of_mass: f64,
    pub second_moment: f64,
    pub energy: f64,
    pub max_speed: f64,
    pub max_density: f64,
}

/// Scratch buffers reused across right-hand-side evaluations.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    psi: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    g: Vec<f64>,
    order: Vec<usize>,
    xs: Vec<f64>,
    ws: Vec<f64>,
    v: Vec<f64>,
    /// sorted-index pairs `(i, j)`, `i < j`, with `φ_ε'(x_i - x_j)`
    pairs: Vec<(u32, u32, f64)>,
}

/// Permutation sorting `x` ascending; reuses the previous order, which is
/// nearly sorted between consecutive evaluations.
fn sort_order(x: &[f64], order: &mut Vec<usize>) {
    if order.len() != x.len() {
        order.clear();
        order.extend(0..x.len());
    }
    order.sort_by(|&p, &q| x[p].total_cmp(&x[q]));
}

impl Model {
    pub fn new(
        kernel: KernelSpec,
        m: f64,
        nu: f64,
        moll: Mollifier,
        mollify_kernel: bool,
    ) -> Result<Self> {
        let mut problems = kernel.problems(moll.dim());
        if !(nu >= 0.0 && nu.is_finite()) {
            problems.push(format!("diffusion coefficient nu must be nonnegative, got {nu}"));
        }
        if !m.is_finite() || (nu > 0.0 && m < 1.0) {
            problems.push(format!("diffusion exponent m must be at least 1, got {m}"));
        }
        if !problems.is_empty() {
            return Err(Error::Domain(problems.join("; ")));
        }
        kernel.validate(moll.dim())?;
        let pair = PairKernel1d::new(&kernel, mollify_kernel.then_some(&moll))?;
        Ok(Self { kernel, m, nu, moll, mollify_kernel, pair })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.moll
    }

    pub fn mollify_kernel(&self) -> bool {
        self.mollify_kernel
    }

    pub fn pair_kernel(&self) -> &PairKernel1d {
        &self.pair
    }

    fn diffusion_on(&self) -> bool {
        self.nu > 0.0
    }

    /// `F(s)`: `s^{m-1}/(m-1)`, or `ln s` for `m = 1`.
    fn entropy_density(&self, s: f64) -> f64 {
        if self.m == 1.0 {
            s.ln()
        } else {
            s.powf(self.m - 1.0) / (self.m - 1.0)
        }
    }

    /// `ψ^{m-2}` with integer fast paths.
    #[inline]
    fn g_of(&self, psi: f64) -> f64 {
        let e = self.m - 2.0;
        if e == 0.0 {
            1.0
        } else if e == -1.0 {
            1.0 / psi
        } else {
            psi.powf(e)
        }
    }

    /// `(m-2) ψ^{m-3}`.
    #[inline]
    fn g_prime_of(&self, psi: f64) -> f64 {
        let e = self.m - 2.0;
        if e == 0.0 {
            0.0
        } else if e == -1.0 {
            -1.0 / (psi * psi)
        } else {
            e * psi.powf(e - 1.0)
        }
    }

    /// Velocities of all particles (flat, `N·d` values).
    pub fn velocity(&self, ens: &ParticleEnsemble) -> Result<Vec<f64>> {
        if ens.dim() == 1 {
            let mut out = vec![0.0; ens.len()];
            self.velocity_1d(ens.positions(), ens.weights(), &mut out, &mut Workspace::default())?;
            Ok(out)
        } else {
            self.velocity_nd(ens)
        }
    }

    /// Distance beyond which a diffusion pair is dropped.
    fn diffusion_reach(&self) -> f64 {
        (EXP_CUTOFF / self.moll.exponent_scale()).sqrt()
    }

    /// Largest distance at which any pair term still contributes.
    fn pair_reach(&self) -> f64 {
        let k = if self.pair.is_zero() { 0.0 } else { self.pair.reach().unwrap_or(f64::INFINITY) };
        let d = if self.diffusion_on() { self.diffusion_reach() } else { 0.0 };
        k.max(d)
    }

    /// One-dimensional right-hand side for arbitrary (unsorted) positions.
    pub fn velocity_1d(
        &self,
        x: &[f64],
        w: &[f64],
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        let n = x.len();
        debug_assert_eq!(w.len(), n);
        debug_assert_eq!(out.len(), n);
        let diffuse = self.diffusion_on();
        let interact = !self.pair.is_zero();
        let singular = self.pair.skips_self();
        let kreach = self.pair.reach().unwrap_or(f64::INFINITY);
        let dreach = self.diffusion_reach();
        let reach = self.pair_reach();

        sort_order(x, &mut ws.order);
        ws.xs.clear();
        ws.xs.extend(ws.order.iter().map(|&k| x[k]));
        ws.ws.clear();
        ws.ws.extend(ws.order.iter().map(|&k| w[k]));
        ws.v.clear();
        ws.v.resize(n, 0.0);
        ws.pairs.clear();
        let (xs, wt, v) = (&ws.xs, &ws.ws, &mut ws.v);
        if diffuse {
            ws.psi.clear();
            ws.psi.extend(wt.iter().map(|wi| self.moll.peak() * wi));
            ws.s.clear();
            ws.s.resize(n, 0.0);
            ws.t.clear();
            ws.t.resize(n, 0.0);
        }
        let peak = self.moll.peak();
        let a = self.moll.exponent_scale();
        let dscale = -2.0 * a;

        for i in 0..n {
            let (xi, wi) = (xs[i], wt[i]);
            let mut acc = 0.0;
            for j in (i + 1)..n {
                let d = xi - xs[j];
                if -d > reach {
                    break;
                }
                if interact && -d <= kreach {
                    if d == 0.0 && singular {
                        return domain(format!(
                            "particles {} and {} coincide at {xi} under a singular kernel",
                            ws.order[i], ws.order[j]
                        ));
                    }
                    let wd = self.pair.derivative(d);
                    acc += wd * wt[j];
                    v[j] += wd * wi;
                }
                if diffuse && -d <= dreach {
                    let phi = peak * (-a * d * d).exp();
                    ws.psi[i] += phi * wt[j];
                    ws.psi[j] += phi * wi;
                    let dp = dscale * d * phi;
                    ws.s[i] += dp * wt[j];
                    ws.s[j] -= dp * wi;
                    ws.pairs.push((i as u32, j as u32, dp));
                }
            }
            v[i] -= acc;
        }

        if diffuse {
            ws.g.clear();
            ws.g.extend(ws.psi.iter().map(|&p| self.g_of(p.max(PSI_FLOOR))));
            for &(i, j, dp) in &ws.pairs {
                let (i, j) = (i as usize, j as usize);
                ws.t[i] += dp * wt[j] * ws.g[j];
                ws.t[j] -= dp * wt[i] * ws.g[i];
            }
            for i in 0..n {
                v[i] -= self.nu * (ws.g[i] * ws.s[i] + ws.t[i]);
            }
        }
        for (k, &o) in ws.order.iter().enumerate() {
            out[o] = v[k];
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite velocity {} at particle {i} (x = {})",
                out[i], x[i]
            )));
        }
        Ok(())
    }

    fn velocity_nd(&self, ens: &ParticleEnsemble) -> Result<Vec<f64>> {
        let dim = ens.dim();
        let n = ens.len();
        let w = ens.weights();
        if self.mollify_kernel && self.kernel.is_singular() {
            return Err(Error::Unsupported(
                "mollified singular kernels are implemented in one dimension only".into(),
            ));
        }
        let mut v = vec![0.0; n * dim];
        let mut psi: Vec<f64> = w.iter().map(|wi| self.moll.peak() * wi).collect();
        let mut s = vec![0.0; n * dim];
        let mut diff = vec![0.0; dim];
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..dim {
                    diff[k] = ens.position(i)[k] - ens.position(j)[k];
                }
                let r2: f64 = diff.iter().map(|d| d * d).sum();
                let f = self.kernel.gradient_factor(r2.sqrt(), dim)?;
                let phi = self.moll.eval_sq(r2);
                psi[i] += phi * w[j];
                psi[j] += phi * w[i];
                let fp = -2.0 * self.moll.exponent_scale() * phi;
                for k in 0..dim {
                    v[i * dim + k] -= f * diff[k] * w[j];
                    v[j * dim + k] += f * diff[k] * w[i];
                    s[i * dim + k] += fp * diff[k] * w[j];
                    s[j * dim + k] -= fp * diff[k] * w[i];
                }
            }
        }
        if self.diffusion_on() {
            let g: Vec<f64> = psi.iter().map(|&p| self.g_of(p.max(PSI_FLOOR))).collect();
            let mut t = vec![0.0; n * dim];
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in 0..dim {
                        diff[k] = ens.position(i)[k] - ens.position(j)[k];
                    }
                    let r2: f64 = diff.iter().map(|d| d * d).sum();
                    let fp = -2.0 * self.moll.exponent_scale() * self.moll.eval_sq(r2);
                    for k in 0..dim {
                        t[i * dim + k] += fp * diff[k] * w[j] * g[j];
                        t[j * dim + k] -= fp * diff[k] * w[i] * g[i];
                    }
                }
            }
            for i in 0..n {
                for k in 0..dim {
                    v[i * dim + k] -= self.nu * (g[i] * s[i * dim + k] + t[i * dim + k]);
                }
            }
        }
        Ok(v)
    }

    /// `ψ_i = Σ_k φ_ε(x_i - x_k) m_k` at every particle.
    pub fn particle_density(&self, ens: &ParticleEnsemble) -> Vec<f64> {
        let n = ens.len();
        let w = ens.weights();
        let mut psi: Vec<f64> = w.iter().map(|wi| self.moll.peak() * wi).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let r2: f64 = ens
                    .position(i)
                    .iter()
                    .zip(ens.position(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let phi = self.moll.eval_sq(r2);
                psi[i] += phi * w[j];
                psi[j] += phi * w[i];
            }
        }
        psi
    }

    /// Diffusion part `ν Σ m_i F(ψ_i)` and interaction part of `E_ε`.
    pub fn energy_parts(&self, ens: &ParticleEnsemble) -> Result<(f64, f64)> {
        let w = ens.weights();
        let n = ens.len();
        let diffusion =
            if self.diffusion_on() {
                let psi = self.particle_density(ens);
                self.nu
                    * psi
                        .iter()
                        .zip(w)
                        .map(|(&p, &wi)| {
                            if wi == 0.0 {
                                0.0
                            } else {
                                wi * self.entropy_density(p.max(PSI_FLOOR))
                            }
                        })
                        .sum::<f64>()
            } else {
                0.0
            };
        let mut interaction = 0.0;
        if ens.dim() == 1 {
            if self.pair.is_zero() {
                return Ok((diffusion, 0.0));
            }
            let x = ens.positions();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = x[i] - x[j];
                    if d == 0.0 && self.pair.skips_self() {
                        return domain(format!(
                            "particles {i} and {j} coincide under a singular kernel"
                        ));
                    }
                    interaction += self.pair.value(d) * w[i] * w[j];
                }
            }
            if !self.pair.skips_self() {
                let w0 = self.pair.value(0.0);
                interaction += 0.5 * w0 * w.iter().map(|wi| wi * wi).sum::<f64>();
            }
        } else {
            let dim = ens.dim();
            let mut diff = vec![0.0; dim];
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in 0..dim {
                        diff[k] = ens.position(i)[k] - ens.position(j)[k];
                    }
                    interaction += self.kernel.evaluate(&diff)? * w[i] * w[j];
                }
            }
            if !self.kernel.is_singular() {
                let w0 = self.kernel.evaluate(&vec![0.0; dim])?;
                interaction += 0.5 * w0 * w.iter().map(|wi| wi * wi).sum::<f64>();
            }
        }
        Ok((diffusion, interaction))
    }

    pub fn discrete_energy(&self, ens: &ParticleEnsemble) -> Result<f64> {
        let (d, i) = self.energy_parts(ens)?;
        Ok(d + i)
    }

    /// `dE_ε/dt = -Σ m_i |v_i|²` along the flow.
    pub fn dissipation_rate(&self, ens: &ParticleEnsemble) -> Result<f64> {
        let v = self.velocity(ens)?;
        let dim = ens.dim();
        Ok(-ens
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * v[i * dim..(i + 1) * dim].iter().map(|c| c * c).sum::<f64>())
            .sum::<f64>())
    }

    pub fn diagnostics(&self, ens: &ParticleEnsemble) -> Result<Diagnostics> {
        let v = self.velocity(ens)?;
        let dim = ens.dim();
        let max_speed = (0..ens.len())
            .map(|i| v[i * dim..(i + 1) * dim].iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Diagnostics {
            mass: ens.mass(),
            center_of_mass: ens.center_of_mass()[0],
            second_moment: ens.second_moment(),
            energy: self.discrete_energy(ens)?,
            max_speed,
            max_density: self.particle_density(ens).into_iter().fold(0.0, f64::max),
        })
    }

    /// Analytic Jacobian `∂v_i/∂x_p` of the one-dimensional right-hand side.
    pub fn jacobian_1d(&self, x: &[f64], w: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut ord = Vec::new();
        sort_order(x, &mut ord);
        let xs: Vec<f64> = ord.iter().map(|&k| x[k]).collect();
        let wt: Vec<f64> = ord.iter().map(|&k| w[k]).collect();
        if !self.pair.is_zero() {
            let kreach = self.pair.reach().unwrap_or(f64::INFINITY);
            for i in 0..n {
                let (oi, wi) = (ord[i], wt[i]);
                for p in (i + 1)..n {
                    let d = xs[i] - xs[p];
                    if -d > kreach {
                        break;
                    }
                    if d == 0.0 && self.pair.skips_self() {
                        return domain(format!(
                            "particles {oi} and {} coincide under a singular kernel",
                            ord[p]
                        ));
                    }
                    let op = ord[p];
                    let w2 = self.pair.second(d);
                    jac[(oi, op)] += w2 * wt[p];
                    jac[(op, oi)] += w2 * wi;
                    jac[(oi, oi)] -= w2 * wt[p];
                    jac[(op, op)] -= w2 * wi;
                }
            }
        }
        if !self.diffusion_on() {
            return Ok(jac);
        }

        let peak = self.moll.peak();
        let a = self.moll.exponent_scale();
        let e2 = 1.0 / (2.0 * a); // 2ε²
        let dreach = self.diffusion_reach();
        // sparse rows of φ' and φ'' (i ≠ j), sorted indices
        let mut nbrs: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        let mut psi: Vec<f64> = wt.iter().map(|wi| peak * wi).collect();
        let mut s = vec![0.0; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = xs[i] - xs[j];
                if -d > dreach {
                    break;
                }
                let phi = peak * (-a * d * d).exp();
                let d1 = -d / e2 * phi;
                let d2 = (d * d / (e2 * e2) - 1.0 / e2) * phi;
                psi[i] += phi * wt[j];
                psi[j] += phi * wt[i];
                s[i] += d1 * wt[j];
                s[j] -= d1 * wt[i];
                nbrs[i].push((j, d1, d2));
                nbrs[j].push((i, -d1, d2));
            }
        }
        let psi: Vec<f64> = psi.into_iter().map(|p| p.max(PSI_FLOOR)).collect();
        let g: Vec<f64> = psi.iter().map(|&p| self.g_of(p)).collect();
        let gp: Vec<f64> = psi.iter().map(|&p| self.g_prime_of(p)).collect();
        let c: Vec<f64> = (0..n).map(|j| wt[j] * gp[j]).collect();
        let nu = self.nu;

        let mut prod = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..n {
            // (Φ' diag(c) Φ') row i
            let oi = ord[i];
            for &(j, dij, _) in &nbrs[i] {
                let f = dij * c[j];
                if f == 0.0 {
                    continue;
                }
                for &(p, djp, _) in &nbrs[j] {
                    if prod[p] == 0.0 {
                        touched.push(p);
                    }
                    prod[p] += f * djp;
                }
            }
            let mut diag = gp[i] * s[i] * s[i] - wt[i] * prod[i];
            for &(p, dip, d2ip) in &nbrs[i] {
                let wp = wt[p];
                diag += g[i] * d2ip * wp + d2ip * wp * g[p];
                let off = -gp[i] * s[i] * dip * wp - g[i] * d2ip * wp - d2ip * wp * g[p]
                    + dip * wp * gp[p] * s[p];
                jac[(oi, ord[p])] -= nu * off;
            }
            // second-order neighbours reached only through the product
            for &p in &touched {
                if p != i {
                    jac[(oi, ord[p])] += nu * wt[p] * prod[p];
                }
                prod[p] = 0.0;
            }
            touched.clear();
            jac[(oi, oi)] -= nu * diag;
        }
        Ok(jac)
    }
}

/// Forward-difference Jacobian of any right-hand side, step
/// `√u · max(|x_p|, h)`.
pub fn finite_difference_jacobian<F>(
    mut rhs: F,
    x: &[f64],
    f0: &[f64],
    h: f64,
) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let sq = f64::EPSILON.sqrt();
    for p in 0..n {
        let step = sq * x[p].abs().max(h);
        xp[p] = x[p] + step;
        let actual = xp[p] - x[p];
        rhs(&xp, &mut fp)?;
        for i in 0..n {
            jac[(i, p)] = (fp[i] - f0[i]) / actual;
        }
        xp[p] = x[p];
    }
    Ok(jac)
}
