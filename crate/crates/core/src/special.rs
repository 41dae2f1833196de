//! Special functions needed for the closed-form Gaussian mollification of
//! the Newtonian (`|x|`) and logarithmic kernels in one dimension.

use std::sync::OnceLock;

use crate::quadrature::gauss_legendre;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

const RYBICKI_H: f64 = 0.2;
const RYBICKI_TERMS: usize = 18;

fn rybicki_coeffs() -> &'static [f64; RYBICKI_TERMS] {
    static C: OnceLock<[f64; RYBICKI_TERMS]> = OnceLock::new();
    C.get_or_init(|| {
        let mut c = [0.0; RYBICKI_TERMS];
        for (i, ci) in c.iter_mut().enumerate() {
            let t = (2 * i + 1) as f64 * RYBICKI_H;
            *ci = (-t * t).exp();
        }
        c
    })
}

/// Dawson's integral `D(x) = exp(-x²) ∫_0^x exp(t²) dt`.
///
/// Taylor series near the origin, Rybicki's sampling formula elsewhere
/// (step 0.2, truncation error far below double precision).
pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.5 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 0..24 {
            term *= -2.0 * x2 / (2 * n + 3) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    let c = rybicki_coeffs();
    let n0 = 2.0 * (0.5 * ax / RYBICKI_H).round();
    let xp = ax - n0 * RYBICKI_H;
    let mut e1 = (2.0 * xp * RYBICKI_H).exp();
    let e2 = e1 * e1;
    let mut d1 = n0 + 1.0;
    let mut d2 = d1 - 2.0;
    let mut sum = 0.0;
    for ci in c.iter() {
        sum += ci * (e1 / d1 + 1.0 / (d2 * e1));
        d1 += 2.0;
        d2 -= 2.0;
        e1 *= e2;
    }
    FRAC_1_SQRT_PI * (-xp * xp).exp() * sum * x.signum()
}

const TABLE_MAX: f64 = 10.0;
const TABLE_STEP: f64 = 1.0 / 128.0;

struct DawsonIntegralTable {
    values: Vec<f64>,
}

fn dawson_integral_table() -> &'static DawsonIntegralTable {
    static T: OnceLock<DawsonIntegralTable> = OnceLock::new();
    T.get_or_init(|| {
        let cells = (TABLE_MAX / TABLE_STEP).round() as usize;
        let (nodes, weights) = gauss_legendre(16);
        let mut values = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for c in 0..cells {
            let a = c as f64 * TABLE_STEP;
            let half = 0.5 * TABLE_STEP;
            let mid = a + half;
            let part: f64 =
                nodes.iter().zip(&weights).map(|(t, w)| w * dawson(mid + half * t)).sum();
            acc += part * half;
            values.push(acc);
        }
        DawsonIntegralTable { values }
    })
}

/// `∫_0^u D(s) ds` for any real `u` (even function).
///
/// Quintic Hermite interpolation of a Gauss–Legendre table on `[0, 10]`
/// (the first and second derivatives `D` and `1 - 2uD` are exact), and the
/// asymptotic series of the Gaussian-averaged logarithm beyond.
pub fn dawson_integral(u: f64) -> f64 {
    let u = u.abs();
    if u >= TABLE_MAX {
        let q = 2.0 * u * u;
        let mut series = 0.0;
        let mut odd_fact = 1.0;
        let mut qn = 1.0;
        for n in 1..=12 {
            odd_fact *= (2 * n - 1) as f64;
            qn *= q;
            series += odd_fact / (2.0 * n as f64 * qn);
        }
        return 0.5 * ((2.0 * u).ln() + 0.5 * EULER_GAMMA - series);
    }
    let table = dawson_integral_table();
    let idx = ((u / TABLE_STEP) as usize).min(table.values.len() - 2);
    let u0 = idx as f64 * TABLE_STEP;
    let u1 = u0 + TABLE_STEP;
    let h = TABLE_STEP;
    let t = (u - u0) / h;
    let (f0, f1) = (table.values[idx], table.values[idx + 1]);
    let (d0, d1) = (dawson(u0), dawson(u1));
    let (s0, s1) = (1.0 - 2.0 * u0 * d0, 1.0 - 2.0 * u1 * d1);
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    f0 * h00 + h * d0 * h10 + h * h * s0 * h20 + f1 * h01 + h * d1 * h11 + h * h * s1 * h21
}
