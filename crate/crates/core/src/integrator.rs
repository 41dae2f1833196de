//! Variable-order, variable-step BDF integration (quasi-constant step
//! size, NDF error constants) with dense output, and the particle-flow
//! driver that adds remeshing and snapshots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{remesh, support_gap, ParticleEnsemble};
use crate::dynamics::{finite_difference_jacobian, Diagnostics, Model, Workspace};
use crate::error::{domain, Error, Result};

pub const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];
const MIN_STEP: f64 = 1e-14;

/// A first-order system `y' = f(t, y)` with a Jacobian.
pub trait OdeSystem {
    fn rhs(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()>;
    fn jacobian(&mut self, t: f64, y: &[f64]) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    pub lu_decompositions: usize,
    pub remeshes: usize,
}

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(scale).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / v.len() as f64).sqrt()
}

fn compute_r(order: usize, factor: f64) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(order + 1, order + 1);
    for j in 0..=order {
        m[(0, j)] = 1.0;
    }
    for i in 1..=order {
        for j in 1..=order {
            m[(i, j)] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    // cumulative product down each column
    for i in 1..=order {
        for j in 0..=order {
            m[(i, j)] *= m[(i - 1, j)];
        }
    }
    m
}

/// Rescales the difference array for a step-size change by `factor`.
fn change_d(d: &mut [Vec<f64>], order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let ru = r * u;
    let n = d[0].len();
    let old: Vec<Vec<f64>> = d[..=order].to_vec();
    for (i, row) in d.iter_mut().enumerate().take(order + 1) {
        for (k, v) in row.iter_mut().enumerate().take(n) {
            *v = (0..=order).map(|j| ru[(j, i)] * old[j][k]).sum();
        }
    }
}

/// Polynomial interpolant over the last accepted step.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    t_old: f64,
    t: f64,
    t_shift: Vec<f64>,
    denom: Vec<f64>,
    d: Vec<Vec<f64>>,
}

impl DenseOutput {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut y = self.d[0].clone();
        let mut p = 1.0;
        for (k, row) in self.d.iter().enumerate().skip(1) {
            p *= (t - self.t_shift[k - 1]) / self.denom[k - 1];
            for (yi, v) in y.iter_mut().zip(row) {
                *yi += p * v;
            }
        }
        y
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t_old, self.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdfOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_order: usize,
}

impl Default for BdfOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-6, abs_tol: 1e-9, max_step: f64::INFINITY, max_order: MAX_ORDER }
    }
}

/// Stepper state; forward integration only.
pub struct Bdf {
    opts: BdfOptions,
    t: f64,
    t_old: f64,
    t_bound: f64,
    y: Vec<f64>,
    h_abs: f64,
    order: usize,
    n_equal_steps: usize,
    d: Vec<Vec<f64>>,
    jac: DMatrix<f64>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    newton_tol: f64,
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 2],
    pub stats: StepStats,
}

impl Bdf {
    pub fn new<S: OdeSystem>(
        sys: &mut S,
        t0: f64,
        y0: Vec<f64>,
        t_bound: f64,
        opts: BdfOptions,
    ) -> Result<Self> {
        if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
            return domain("tolerances must be positive");
        }
        if !(opts.max_step > 0.0) {
            return domain("max_step must be positive");
        }
        if opts.max_order == 0 || opts.max_order > MAX_ORDER {
            return domain(format!("max_order must lie in 1..={MAX_ORDER}"));
        }
        if !(t_bound > t0) {
            return domain(format!("integration needs t0 < T, got [{t0}, {t_bound}]"));
        }
        let rel_tol = if opts.rel_tol < 100.0 * f64::EPSILON {
            log::warn!("rel_tol {} raised to {}", opts.rel_tol, 100.0 * f64::EPSILON);
            100.0 * f64::EPSILON
        } else {
            opts.rel_tol
        };
        let opts = BdfOptions { rel_tol, ..opts };
        let mut gamma = [0.0; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
        }
        let mut alpha = [0.0; MAX_ORDER + 1];
        for k in 0..=MAX_ORDER {
            alpha[k] = (1.0 - KAPPA[k]) * gamma[k];
        }
        let mut error_const = [0.0; MAX_ORDER + 2];
        for k in 0..=MAX_ORDER {
            error_const[k] = KAPPA[k] * gamma[k] + 1.0 / (k + 1) as f64;
        }
        error_const[MAX_ORDER + 1] = 1.0 / (MAX_ORDER + 2) as f64;
        let n = y0.len();
        let mut bdf = Self {
            opts,
            t: t0,
            t_old: t0,
            t_bound,
            y: y0,
            h_abs: 0.0,
            order: 1,
            n_equal_steps: 0,
            d: vec![vec![0.0; n]; MAX_ORDER + 3],
            jac: DMatrix::zeros(n, n),
            lu: None,
            newton_tol: (10.0 * f64::EPSILON / rel_tol).max(0.03f64.min(rel_tol.sqrt())),
            gamma,
            alpha,
            error_const,
            stats: StepStats::default(),
        };
        bdf.restart(sys, None)?;
        Ok(bdf)
    }

    /// Discards the multistep history and starts again at order 1 from the
    /// current time, optionally with a new state vector.
    pub fn restart<S: OdeSystem>(&mut self, sys: &mut S, y: Option<Vec<f64>>) -> Result<()> {
        if let Some(y) = y {
            self.y = y;
        }
        let n = self.y.len();
        let mut f = vec![0.0; n];
        sys.rhs(self.t, &self.y, &mut f)?;
        self.stats.rhs_evals += 1;
        self.h_abs = self.initial_step(sys, &f)?;
        self.d = vec![vec![0.0; n]; MAX_ORDER + 3];
        self.d[0] = self.y.clone();
        self.d[1] = f.iter().map(|v| v * self.h_abs).collect();
        self.order = 1;
        self.n_equal_steps = 0;
        self.lu = None;
        self.jac = sys.jacobian(self.t, &self.y)?;
        self.stats.jacobian_evals += 1;
        Ok(())
    }

    fn initial_step<S: OdeSystem>(&mut self, sys: &mut S, f0: &[f64]) -> Result<f64> {
        let interval = self.t_bound - self.t;
        if self.y.is_empty() {
            return Ok(interval);
        }
        let scale: Vec<f64> =
            self.y.iter().map(|v| self.opts.abs_tol + v.abs() * self.opts.rel_tol).collect();
        let d0 = rms_norm(&self.y, &scale);
        let d1 = rms_norm(f0, &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
        let y1: Vec<f64> = self.y.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; y1.len()];
        sys.rhs(self.t + h0, &y1, &mut f1)?;
        self.stats.rhs_evals += 1;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = rms_norm(&diff, &scale) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.5)
        };
        Ok((100.0 * h0).min(h1).min(interval))
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn step_size(&self) -> f64 {
        self.h_abs
    }

    pub fn finished(&self) -> bool {
        self.t >= self.t_bound
    }

    fn factorize(&mut self, c: f64) -> Result<()> {
        let n = self.y.len();
        let mut a = -c * &self.jac;
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        self.lu = Some(a.lu());
        self.stats.lu_decompositions += 1;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_system<S: OdeSystem>(
        &mut self,
        sys: &mut S,
        t_new: f64,
        y_predict: &[f64],
        c: f64,
        psi: &[f64],
        scale: &[f64],
    ) -> Result<(bool, usize, Vec<f64>, Vec<f64>)> {
        let n = y_predict.len();
        let mut y = y_predict.to_vec();
        let mut d = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut dy_norm_old: Option<f64> = None;
        let mut converged = false;
        let mut iters = 0;
        for k in 0..NEWTON_MAXITER {
            iters = k + 1;
            match sys.rhs(t_new, &y, &mut f) {
                Ok(()) => {}
                Err(Error::Numerical(_)) => break,
                Err(e) => return Err(e),
            }
            self.stats.rhs_evals += 1;
            if f.iter().any(|v| !v.is_finite()) {
                break;
            }
            let rhs = DVector::from_iterator(n, (0..n).map(|i| c * f[i] - psi[i] - d[i]));
            let dy = self
                .lu
                .as_ref()
                .expect("factorized")
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular Newton matrix".into()))?;
            let dy = dy.as_slice();
            let dy_norm = rms_norm(dy, scale);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(r) = rate {
                if r >= 1.0
                    || r.powi((NEWTON_MAXITER - k) as i32) / (1.0 - r) * dy_norm > self.newton_tol
                {
                    break;
                }
            }
            for i in 0..n {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dy_norm < self.newton_tol) {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
        }
        Ok((converged, iters, y, d))
    }

    /// Takes one accepted step and returns the dense output over it.
    pub fn step<S: OdeSystem>(&mut self, sys: &mut S) -> Result<DenseOutput> {
        let t = self.t;
        let max_step = self.opts.max_step;
        let ulp = (t.abs() * f64::EPSILON).max(f64::MIN_POSITIVE);
        let min_step = (10.0 * ulp).max(MIN_STEP);
        let mut h_abs = self.h_abs;
        if h_abs > max_step {
            h_abs = max_step;
            change_d(&mut self.d, self.order, max_step / self.h_abs);
            self.n_equal_steps = 0;
        } else if h_abs < min_step {
            h_abs = min_step;
            change_d(&mut self.d, self.order, min_step / self.h_abs);
            // steps near the floor lose digits to `t_new - t`; that alone
            // must not block step growth
            if min_step > 1.5 * self.h_abs {
                self.n_equal_steps = 0;
            }
        }
        let order = self.order;
        let n = self.y.len();
        let mut current_jac = false;

        let (t_new, y_new, d, n_iter, error_norm, scale) = loop {
            if h_abs < min_step {
                return Err(Error::Stiffness { t, step: h_abs });
            }
            let mut t_new = t + h_abs;
            if t_new >= self.t_bound {
                t_new = self.t_bound;
                let f = (t_new - t) / h_abs;
                if f != 1.0 {
                    change_d(&mut self.d, order, f);
                    self.lu = None;
                }
                self.n_equal_steps = 0;
            }
            let h = t_new - t;
            h_abs = h;

            let y_predict: Vec<f64> =
                (0..n).map(|k| (0..=order).map(|j| self.d[j][k]).sum()).collect();
            let scale: Vec<f64> =
                y_predict.iter().map(|v| self.opts.abs_tol + self.opts.rel_tol * v.abs()).collect();
            let psi: Vec<f64> = (0..n)
                .map(|k| {
                    (1..=order).map(|j| self.d[j][k] * self.gamma[j]).sum::<f64>()
                        / self.alpha[order]
                })
                .collect();
            let c = h / self.alpha[order];

            let mut result;
            loop {
                if self.lu.is_none() {
                    self.factorize(c)?;
                }
                result = self.solve_system(sys, t_new, &y_predict, c, &psi, &scale)?;
                if result.0 || current_jac {
                    break;
                }
                self.jac = sys.jacobian(t_new, &y_predict)?;
                self.stats.jacobian_evals += 1;
                self.lu = None;
                current_jac = true;
            }
            let (converged, n_iter, y_new, d) = result;
            if !converged {
                log::trace!("t = {t}: Newton failed at h = {h_abs:e}, order {order}");
                h_abs *= 0.5;
                change_d(&mut self.d, order, 0.5);
                self.n_equal_steps = 0;
                self.lu = None;
                self.stats.rejected += 1;
                continue;
            }
            let safety =
                0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let scale: Vec<f64> =
                y_new.iter().map(|v| self.opts.abs_tol + self.opts.rel_tol * v.abs()).collect();
            let err: Vec<f64> = d.iter().map(|v| self.error_const[order] * v).collect();
            let error_norm = rms_norm(&err, &scale);
            if error_norm > 1.0 {
                log::trace!("t = {t}: error {error_norm:e} at h = {h_abs:e}, order {order}");
                let factor = MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                change_d(&mut self.d, order, factor);
                self.n_equal_steps = 0;
                self.stats.rejected += 1;
                continue;
            }
            break (t_new, y_new, d, n_iter, error_norm, scale);
        };

        self.stats.steps += 1;
        log::trace!("step to t = {t_new}, h = {h_abs:e}, order {order}, error {error_norm:e}, newton {n_iter}");
        self.n_equal_steps += 1;
        self.t_old = t;
        self.t = t_new;
        self.y = y_new;
        self.h_abs = h_abs;

        for k in 0..n {
            self.d[order + 2][k] = d[k] - self.d[order + 1][k];
            self.d[order + 1][k] = d[k];
        }
        for i in (0..=order).rev() {
            for k in 0..n {
                let v = self.d[i + 1][k];
                self.d[i][k] += v;
            }
        }

        if self.n_equal_steps > order {
            let safety =
                0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let error_m_norm = if order > 1 {
                let e: Vec<f64> =
                    self.d[order].iter().map(|v| self.error_const[order - 1] * v).collect();
                rms_norm(&e, &scale)
            } else {
                f64::INFINITY
            };
            let error_p_norm = if order < self.opts.max_order {
                let e: Vec<f64> =
                    self.d[order + 2].iter().map(|v| self.error_const[order + 1] * v).collect();
                rms_norm(&e, &scale)
            } else {
                f64::INFINITY
            };
            let norms = [error_m_norm, error_norm, error_p_norm];
            let mut best = 0;
            let mut factors = [0.0; 3];
            for (i, en) in norms.iter().enumerate() {
                factors[i] = en.powf(-1.0 / (order + i) as f64);
                if factors[i] > factors[best] {
                    best = i;
                }
            }
            let new_order = order + best - 1;
            let factor = MAX_FACTOR.min(safety * factors[best]);
            self.n_equal_steps = 0;
            let clamped = self.h_abs >= max_step * (1.0 - 1e-9);
            let keep = MAX_FACTOR.min(safety * factors[1]);
            if clamped && self.h_abs * keep >= max_step {
                // the current order would run clamped at max_step again;
                // only a raise in order is taken, at the same step size
                let raise = MAX_FACTOR.min(safety * factors[2]);
                if new_order > order && self.h_abs * raise >= max_step {
                    self.order = new_order;
                    self.lu = None;
                }
            } else {
                self.order = new_order;
                self.h_abs *= factor;
                change_d(&mut self.d, new_order, factor);
                self.lu = None;
            }
        }

        let order = self.order;
        let h = self.h_abs;
        Ok(DenseOutput {
            t_old: self.t_old,
            t: self.t,
            t_shift: (0..order).map(|i| self.t - h * i as f64).collect(),
            denom: (0..order).map(|i| h * (i + 1) as f64).collect(),
            d: self.d[..=order].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOpts {
    pub t0: f64,
    pub t_max: f64,
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_order: usize,
    pub snapshot_dt: f64,
    /// Remesh when the largest particle gap exceeds this multiple of `h`;
    /// `None` disables remeshing.
    pub remesh_factor: Option<f64>,
    pub jacobian: JacobianMode,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_max: 1.0,
            max_step: 1e-3,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_order: MAX_ORDER,
            snapshot_dt: 0.02,
            remesh_factor: Some(1.5),
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl IntegratorOpts {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.t_max > self.t0) || !self.t_max.is_finite() {
            out.push(format!("t_max must exceed t0 = {}, got {}", self.t0, self.t_max));
        }
        if !(self.max_step > 0.0) {
            out.push(format!("max_step must be positive, got {}", self.max_step));
        }
        if !(self.rel_tol > 0.0) {
            out.push(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if !(self.abs_tol > 0.0) {
            out.push(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if self.max_order == 0 || self.max_order > MAX_ORDER {
            out.push(format!("max_order must lie in 1..={MAX_ORDER}, got {}", self.max_order));
        }
        if !(self.snapshot_dt > 0.0) {
            out.push(format!("snapshot_dt must be positive, got {}", self.snapshot_dt));
        }
        if let Some(f) = self.remesh_factor {
            if !(f > 1.0) {
                out.push(format!("remesh_factor must exceed 1, got {f}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub ensemble: ParticleEnsemble,
    pub diagnostics: Diagnostics,
    /// Remeshes performed before this snapshot.
    pub n_remesh: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemeshEvent {
    pub time: f64,
    pub particles_before: usize,
    pub particles_after: usize,
    pub energy_before: f64,
    pub energy_after: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub snapshots: Vec<Snapshot>,
    pub remeshes: Vec<RemeshEvent>,
    pub stats: StepStats,
}

struct ParticleSystem<'a> {
    model: &'a Model,
    weights: Vec<f64>,
    h: f64,
    mode: JacobianMode,
    ws: Workspace,
}

impl OdeSystem for ParticleSystem<'_> {
    fn rhs(&mut self, _t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.model.velocity_1d(y, &self.weights, out, &mut self.ws)
    }

    fn jacobian(&mut self, t: f64, y: &[f64]) -> Result<DMatrix<f64>> {
        match self.mode {
            JacobianMode::Analytic => self.model.jacobian_1d(y, &self.weights),
            JacobianMode::FiniteDifference => {
                let mut f0 = vec![0.0; y.len()];
                self.rhs(t, y, &mut f0)?;
                let (model, weights, ws) = (self.model, &self.weights, &mut self.ws);
                finite_difference_jacobian(
                    |x, out| model.velocity_1d(x, weights, out, ws),
                    y,
                    &f0,
                    self.h,
                )
            }
        }
    }
}

/// Integrates the particle flow, calling `on_snapshot` at `t0`, every
/// `snapshot_dt`, and `t_max`. Only one-dimensional ensembles are supported.
pub fn integrate_with<F>(
    model: &Model,
    ens0: &ParticleEnsemble,
    opts: &IntegratorOpts,
    mut on_snapshot: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(&Snapshot) -> Result<()>,
{
    let problems = opts.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if ens0.dim() != 1 {
        return Err(Error::Unsupported("time integration is one-dimensional".into()));
    }
    let mut ens = ens0.clone();
    let mut sys = ParticleSystem {
        model,
        weights: ens.weights().to_vec(),
        h: ens.h(),
        mode: opts.jacobian,
        ws: Workspace::default(),
    };
    let bdf_opts = BdfOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        max_step: opts.max_step,
        max_order: opts.max_order,
    };
    let mut bdf = Bdf::new(&mut sys, opts.t0, ens.positions().to_vec(), opts.t_max, bdf_opts)?;
    let mut record = TrajectoryRecord {
        snapshots: Vec::new(),
        remeshes: Vec::new(),
        stats: StepStats::default(),
    };

    let mut emit = |t: f64,
                    e: &ParticleEnsemble,
                    n_remesh: usize,
                    record: &mut TrajectoryRecord|
     -> Result<()> {
        let snap =
            Snapshot { time: t, ensemble: e.clone(), diagnostics: model.diagnostics(e)?, n_remesh };
        on_snapshot(&snap)?;
        record.snapshots.push(snap);
        Ok(())
    };
    emit(opts.t0, &ens, 0, &mut record)?;
    let mut k_next = 1usize;
    let next_time = |k: usize| (opts.t0 + k as f64 * opts.snapshot_dt).min(opts.t_max);

    while !bdf.finished() {
        let dense = bdf.step(&mut sys)?;
        let (_, t_new) = dense.span();
        loop {
            let ts = next_time(k_next);
            if ts > t_new || (record.snapshots.last().is_some_and(|s| s.time >= opts.t_max)) {
                break;
            }
            let y = if ts == t_new { bdf.y().to_vec() } else { dense.eval(ts) };
            let snap_ens = ens.with_positions(y)?;
            emit(ts, &snap_ens, record.remeshes.len(), &mut record)?;
            k_next += 1;
            if ts >= opts.t_max {
                break;
            }
        }
        if let Some(factor) = opts.remesh_factor {
            if bdf.finished() {
                break;
            }
            let current = ens.with_positions(bdf.y().to_vec())?;
            if current.len() > 1 && support_gap(&current, model.mollifier())? > factor * current.h()
            {
                let fresh = remesh(&current, model.mollifier())?;
                let event = RemeshEvent {
                    time: bdf.t(),
                    particles_before: current.len(),
                    particles_after: fresh.len(),
                    energy_before: model.discrete_energy(&current)?,
                    energy_after: model.discrete_energy(&fresh)?,
                };
                log::info!(
                    "remesh at t = {:.6}: {} -> {} particles",
                    event.time,
                    event.particles_before,
                    event.particles_after
                );
                record.remeshes.push(event);
                sys.weights = fresh.weights().to_vec();
                bdf.restart(&mut sys, Some(fresh.positions().to_vec()))?;
                ens = fresh;
            }
        }
    }
    if record.snapshots.last().is_none_or(|s| s.time < opts.t_max) {
        let last = ens.with_positions(bdf.y().to_vec())?;
        emit(opts.t_max, &last, record.remeshes.len(), &mut record)?;
    }
    record.stats = bdf.stats;
    record.stats.remeshes = record.remeshes.len();
    Ok(record)
}

pub fn integrate(
    model: &Model,
    ens0: &ParticleEnsemble,
    opts: &IntegratorOpts,
) -> Result<TrajectoryRecord> {
    integrate_with(model, ens0, opts, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::mollifier::Mollifier;

    struct Linear {
        a: DMatrix<f64>,
    }

    impl OdeSystem for Linear {
        fn rhs(&mut self, _t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
            let v = &self.a * DVector::from_column_slice(y);
            out.copy_from_slice(v.as_slice());
            Ok(())
        }
        fn jacobian(&mut self, _t: f64, _y: &[f64]) -> Result<DMatrix<f64>> {
            Ok(self.a.clone())
        }
    }

    fn run_linear(
        a: DMatrix<f64>,
        y0: Vec<f64>,
        t: f64,
        opts: BdfOptions,
    ) -> (Vec<f64>, StepStats) {
        let mut sys = Linear { a };
        let mut bdf = Bdf::new(&mut sys, 0.0, y0, t, opts).unwrap();
        while !bdf.finished() {
            bdf.step(&mut sys).unwrap();
        }
        (bdf.y().to_vec(), bdf.stats)
    }

    #[test]
    fn r_matrix_is_an_involution_at_unit_factor() {
        for order in 1..=5 {
            let u = compute_r(order, 1.0);
            let p = &u * &u;
            assert!((p - DMatrix::identity(order + 1, order + 1)).amax() < 1e-12);
        }
    }

    #[test]
    fn scalar_decay() {
        let (y, stats) =
            run_linear(DMatrix::from_element(1, 1, -1.0), vec![1.0], 2.0, BdfOptions::default());
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-5, "{}", y[0]);
        assert!(stats.steps > 10);
    }

    #[test]
    fn stiff_linear_system() {
        let a = DMatrix::from_row_slice(2, 2, &[-1000.0, 0.0, 0.0, -1.0]);
        let (y, stats) = run_linear(a, vec![1.0, 1.0], 5.0, BdfOptions::default());
        assert!(y[0].abs() < 1e-8);
        assert!((y[1] - (-5.0f64).exp()).abs() < 1e-5);
        // implicit: no step-size collapse from the fast mode
        assert!(stats.steps < 400, "{stats:?}");
    }

    #[test]
    fn max_step_is_respected() {
        let mut sys = Linear { a: DMatrix::from_element(1, 1, -0.1) };
        let opts = BdfOptions { max_step: 0.01, ..Default::default() };
        let mut bdf = Bdf::new(&mut sys, 0.0, vec![1.0], 1.0, opts).unwrap();
        while !bdf.finished() {
            let d = bdf.step(&mut sys).unwrap();
            let (a, b) = d.span();
            assert!(b - a <= 0.01 * (1.0 + 1e-12));
        }
        assert!((bdf.y()[0] - (-0.1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn dense_output_interpolates() {
        let mut sys = Linear { a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]) };
        let opts = BdfOptions { rel_tol: 1e-8, abs_tol: 1e-10, ..Default::default() };
        let mut bdf = Bdf::new(&mut sys, 0.0, vec![0.0, 1.0], 3.0, opts).unwrap();
        while !bdf.finished() {
            let d = bdf.step(&mut sys).unwrap();
            let (a, b) = d.span();
            let tm = 0.5 * (a + b);
            let y = d.eval(tm);
            assert!((y[0] - tm.sin()).abs() < 1e-5, "t={tm}: {} vs {}", y[0], tm.sin());
            let yb = d.eval(b);
            assert!((yb[0] - bdf.y()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let exact = (-1.0f64).exp();
        let (y1, _) = run_linear(
            a.clone(),
            vec![1.0],
            1.0,
            BdfOptions { rel_tol: 1e-5, abs_tol: 1e-8, ..Default::default() },
        );
        let (y2, _) = run_linear(
            a,
            vec![1.0],
            1.0,
            BdfOptions { rel_tol: 1e-7, abs_tol: 1e-10, ..Default::default() },
        );
        assert!((y2[0] - exact).abs() < (y1[0] - exact).abs());
    }

    fn quadratic_model() -> Model {
        Model::new(
            KernelSpec::PowerLaw { k: 2.0 },
            1.0,
            0.0,
            Mollifier::new(0.1, 1).unwrap(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn two_body_contraction() {
        let model = quadratic_model();
        let r0 = 1.0;
        let e = ParticleEnsemble::new(vec![-0.5 * r0, 0.5 * r0], vec![0.5, 0.5], 0.1, 1).unwrap();
        let opts = IntegratorOpts {
            t_max: 1.0,
            max_step: 0.01,
            remesh_factor: None,
            snapshot_dt: 0.25,
            ..Default::default()
        };
        let rec = integrate(&model, &e, &opts).unwrap();
        let last = rec.snapshots.last().unwrap();
        assert_eq!(last.time, 1.0);
        let p = last.ensemble.positions();
        let ratio = (p[1] - p[0]) / r0;
        assert!((ratio / (-1.0f64).exp() - 1.0).abs() < 1e-5, "{ratio}");
        let times: Vec<f64> = rec.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn fixed_point_stays_put() {
        let model =
            Model::new(KernelSpec::Zero, 2.0, 1.0, Mollifier::new(0.1, 1).unwrap(), false).unwrap();
        let e = ParticleEnsemble::new(vec![0.37], vec![1.0], 0.1, 1).unwrap();
        let opts =
            IntegratorOpts { t_max: 10.0, max_step: 1.0, snapshot_dt: 5.0, ..Default::default() };
        let rec = integrate(&model, &e, &opts).unwrap();
        assert_eq!(rec.snapshots.last().unwrap().ensemble.positions(), &[0.37]);
    }

    struct Reversed<'a>(&'a Model, Vec<f64>);

    impl OdeSystem for Reversed<'_> {
        fn rhs(&mut self, _t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
            self.0.velocity_1d(y, &self.1, out, &mut Workspace::default())?;
            out.iter_mut().for_each(|v| *v = -*v);
            Ok(())
        }
        fn jacobian(&mut self, _t: f64, y: &[f64]) -> Result<DMatrix<f64>> {
            Ok(-self.0.jacobian_1d(y, &self.1)?)
        }
    }

    #[test]
    fn time_reversal() {
        let model = quadratic_model();
        let x0 = vec![-0.4, -0.1, 0.2, 0.5];
        let w = vec![0.25; 4];
        let e = ParticleEnsemble::new(x0.clone(), w.clone(), 0.1, 1).unwrap();
        let opts = IntegratorOpts {
            t_max: 1.0,
            max_step: 0.01,
            remesh_factor: None,
            ..Default::default()
        };
        let rec = integrate(&model, &e, &opts).unwrap();
        let x1 = rec.snapshots.last().unwrap().ensemble.positions().to_vec();
        let mut back = Reversed(&model, w);
        let mut bdf =
            Bdf::new(&mut back, 0.0, x1, 1.0, BdfOptions { max_step: 0.01, ..Default::default() })
                .unwrap();
        while !bdf.finished() {
            bdf.step(&mut back).unwrap();
        }
        for (a, b) in bdf.y().iter().zip(&x0) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn finite_difference_jacobian_mode_agrees() {
        let model = Model::new(
            KernelSpec::RepulsiveAttractive { a: 2.0, b: 1.0 },
            2.0,
            0.2,
            Mollifier::new(0.1, 1).unwrap(),
            true,
        )
        .unwrap();
        let e =
            ParticleEnsemble::new(vec![-0.3, -0.1, 0.0, 0.15, 0.4], vec![0.2; 5], 0.1, 1).unwrap();
        let base = IntegratorOpts {
            t_max: 0.5,
            max_step: 0.01,
            remesh_factor: None,
            ..Default::default()
        };
        let a = integrate(&model, &e, &base).unwrap();
        let b = integrate(
            &model,
            &e,
            &IntegratorOpts { jacobian: JacobianMode::FiniteDifference, ..base },
        )
        .unwrap();
        let pa = a.snapshots.last().unwrap().ensemble.positions().to_vec();
        let pb = b.snapshots.last().unwrap().ensemble.positions().to_vec();
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn remesh_restarts_and_conserves_mass() {
        // pure porous-medium spreading opens gaps quickly
        let h: f64 = 0.02;
        let model =
            Model::new(KernelSpec::Zero, 2.0, 1.0, Mollifier::new(h.powf(0.9), 1).unwrap(), false)
                .unwrap();
        let xs: Vec<f64> = (0..10).map(|i| -0.09 + i as f64 * h).collect();
        let e = ParticleEnsemble::new(xs, vec![0.1; 10], h, 1).unwrap().with_domain(-0.1, 0.1);
        let opts =
            IntegratorOpts { t_max: 0.05, max_step: 1e-3, snapshot_dt: 0.01, ..Default::default() };
        let rec = integrate(&model, &e, &opts).unwrap();
        assert!(!rec.remeshes.is_empty());
        let m0 = rec.snapshots[0].diagnostics.mass;
        for s in &rec.snapshots {
            assert!((s.diagnostics.mass - m0).abs() < 1e-13);
        }
        assert_eq!(rec.snapshots.last().unwrap().n_remesh, rec.remeshes.len());
    }

    #[test]
    fn rejects_bad_options() {
        let model = quadratic_model();
        let e = ParticleEnsemble::new(vec![0.0, 1.0], vec![0.5, 0.5], 0.1, 1).unwrap();
        let opts = IntegratorOpts { t_max: -1.0, rel_tol: 0.0, ..Default::default() };
        match integrate(&model, &e, &opts) {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
