//! JSON experiment configs, the preset catalog and the run pipeline:
//! discretize, integrate with remeshing, reconstruct, analyse, persist.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::{
    classify_equilibrium, energy_report, local_maxima, EnergyReport, Equilibrium, PLATEAU_TOL,
};
use crate::density::{discretize, reconstruct, DensitySpec, Grid1d, GridDensity, ParticleEnsemble};
use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::integrator::{
    integrate_with, IntegratorOpts, RemeshEvent, Snapshot, StepStats, TrajectoryRecord,
};
use crate::kernels::KernelSpec;
use crate::mollifier::{epsilon_from_spacing, Mollifier};

/// Prominence threshold for counting density maxima, relative to the maximum.
pub const PEAK_PROMINENCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: KernelSpec,
    pub m: f64,
    pub nu: f64,
    #[serde(default)]
    pub mollify_kernel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// What the preset models and how unstated parameters were chosen.
    #[serde(default)]
    pub description: String,
    pub model: ModelConfig,
    /// Absolute mollifier width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_abs: Option<f64>,
    /// Exponent `q` in `ε = h^q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_exp: Option<f64>,
    pub initial: DensitySpec,
    pub domain: [f64; 2],
    pub n: usize,
    #[serde(default)]
    pub integrator: IntegratorOpts,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Hours of compute; excluded from routine test runs.
    #[serde(default)]
    pub long: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Initial cell width `(b - a)/N`.
    pub fn h(&self) -> f64 {
        (self.domain[1] - self.domain[0]) / self.n as f64
    }

    pub fn epsilon(&self) -> Result<f64> {
        match (self.epsilon_abs, self.epsilon_exp) {
            (Some(e), None) if e > 0.0 => Ok(e),
            (None, Some(q)) => epsilon_from_spacing(self.h(), q),
            _ => Err(Error::Config(vec![
                "exactly one of epsilon_abs (> 0) and epsilon_exp must be set".into(),
            ])),
        }
    }

    /// Every problem with the config; empty when it is runnable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("name must not be empty".into());
        }
        out.extend(self.model.kernel.problems(1).into_iter().map(|p| format!("kernel: {p}")));
        if !(self.model.m >= 1.0) || !self.model.m.is_finite() {
            out.push(format!("m must be >= 1, got {}", self.model.m));
        }
        if !(self.model.nu >= 0.0) || !self.model.nu.is_finite() {
            out.push(format!("nu must be >= 0, got {}", self.model.nu));
        }
        match (self.epsilon_abs, self.epsilon_exp) {
            (Some(_), Some(_)) => {
                out.push("epsilon_abs and epsilon_exp are mutually exclusive".into())
            }
            (None, None) => out.push("one of epsilon_abs or epsilon_exp is required".into()),
            (Some(e), None) if !(e > 0.0) => {
                out.push(format!("epsilon_abs must be positive, got {e}"))
            }
            (None, Some(q)) if !(q > 0.0) => {
                out.push(format!("epsilon_exp must be positive, got {q}"))
            }
            _ => {}
        }
        if self.n < 2 {
            out.push(format!("n must be at least 2, got {}", self.n));
        }
        let [a, b] = self.domain;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            out.push(format!("domain must satisfy a < b, got [{a}, {b}]"));
        }
        let init = self.initial.problems();
        if init.is_empty() {
            match self.initial.support() {
                Ok((lo, hi)) if lo < a - 1e-12 || hi > b + 1e-12 => out.push(format!(
                    "domain [{a}, {b}] does not contain the initial support [{lo}, {hi}]"
                )),
                Err(e) => out.push(format!("initial: {e}")),
                _ => {}
            }
        }
        out.extend(init.into_iter().map(|p| format!("initial: {p}")));
        out.extend(self.integrator.problems().into_iter().map(|p| format!("integrator: {p}")));
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            out.push(format!("output_dir {} is not a directory", self.output_dir.display()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Applies `key.path=value` overrides; values parse as JSON, falling back
    /// to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let Some((key, raw)) = o.split_once('=') else {
                return Err(Error::Config(vec![format!("override {o:?} is not key=value")]));
            };
            let value: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, key.trim(), value)?;
        }
        Ok(serde_json::from_value(v)?)
    }

    /// SHA-256 of the resolved config JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn build_model(&self) -> Result<Model> {
        let moll = Mollifier::new(self.epsilon()?, 1)?;
        Model::new(
            self.model.kernel.clone(),
            self.model.m,
            self.model.nu,
            moll,
            self.model.mollify_kernel,
        )
    }

    pub fn initial_ensemble(&self) -> Result<ParticleEnsemble> {
        discretize(&self.initial, self.domain[0], self.domain[1], self.n)
    }
}

fn set_path(v: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(p.to_string(), value);
                    return Ok(());
                }
                map.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = p.parse().map_err(|_| {
                    Error::Config(vec![format!("override {key}: {p:?} is not an index")])
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::Config(vec![format!("override {key}: index {idx} out of {len}")])
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(vec![format!("override {key}: {p:?} is not a field")])),
        };
    }
    Err(Error::Config(vec!["empty override key".into()]))
}

/// One row of `diagnostics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub mass: f64,
    pub center: f64,
    pub second_moment: f64,
    pub energy: f64,
    pub entropy: f64,
    pub interaction: f64,
    pub max_speed: f64,
    pub max_density: f64,
    pub n_remesh: usize,
}

pub const DIAGNOSTICS_HEADER: &str =
    "time,mass,center,M2,E_eps,S_m,W_rho,max_speed,max_density,n_remesh";

impl DiagnosticsRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.time,
            self.mass,
            self.center,
            self.second_moment,
            self.energy,
            self.entropy,
            self.interaction,
            self.max_speed,
            self.max_density,
            self.n_remesh
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_time: f64,
    /// Positions of density maxima with prominence ≥ 5% of the maximum.
    pub maxima: Vec<f64>,
    pub max_density: f64,
    pub max_speed: f64,
    pub energy: EnergyReport,
    pub equilibrium: Equilibrium,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub package: String,
    pub version: String,
    pub config_hash: String,
    pub epsilon: f64,
    pub epsilon_rule: String,
    pub h: f64,
    pub initial_particles: usize,
    pub stats: StepStats,
    pub remeshes: Vec<RemeshEvent>,
    pub wall_time_s: f64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub record: TrajectoryRecord,
    pub rows: Vec<DiagnosticsRow>,
    pub meta: RunMeta,
}

impl RunOutput {
    /// Reconstructed density of snapshot `i` on the run's output grid.
    pub fn density(&self, i: usize) -> Result<GridDensity> {
        output_density(&self.config, &self.record.snapshots[i].ensemble)
    }

    /// The snapshot whose time is closest to `t`.
    pub fn snapshot_near(&self, t: f64) -> usize {
        let s = &self.record.snapshots;
        (0..s.len())
            .min_by(|&i, &j| (s[i].time - t).abs().total_cmp(&(s[j].time - t).abs()))
            .expect("at least one snapshot")
    }
}

/// Output grid: spacing `h/2`, covering the domain and all particles with a
/// margin of `10ε`.
pub fn output_density(cfg: &ExperimentConfig, ens: &ParticleEnsemble) -> Result<GridDensity> {
    let eps = cfg.epsilon()?;
    let pos = ens.positions();
    let lo = cfg.domain[0].min(pos.first().copied().unwrap_or(cfg.domain[0])) - 10.0 * eps;
    let hi = cfg.domain[1].max(pos.last().copied().unwrap_or(cfg.domain[1])) + 10.0 * eps;
    let spacing = 0.5 * cfg.h();
    let count = ((hi - lo) / spacing).ceil() as usize + 1;
    reconstruct(ens, &Mollifier::new(eps, 1)?, Grid1d { origin: lo, spacing, count })
}

fn time_label(t: f64) -> String {
    format!("{t:.6}")
}

fn write_pairs(path: &Path, header: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(48 * xs.len());
    s.push_str(header);
    s.push('\n');
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(s, "{x},{y}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Runs an experiment. With `out = Some(dir)` the config, diagnostics,
/// per-snapshot particles and densities and `meta.json` are written there.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let ens0 = cfg.initial_ensemble()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), cfg.to_json())?;
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut last_energy = None;
    let record = integrate_with(&model, &ens0, &cfg.integrator, |snap: &Snapshot| {
        let rho = output_density(cfg, &snap.ensemble)?;
        let report = energy_report(&rho, &cfg.model.kernel, cfg.model.m, cfg.model.nu)?;
        let d = &snap.diagnostics;
        rows.push(DiagnosticsRow {
            time: snap.time,
            mass: d.mass,
            center: d.center_of_mass,
            second_moment: d.second_moment,
            energy: d.energy,
            entropy: report.entropy,
            interaction: report.interaction,
            max_speed: d.max_speed,
            max_density: rho.max(),
            n_remesh: snap.n_remesh,
        });
        last_energy = Some(report);
        log::info!(
            "{}: t = {:.4}, E = {:.10}, max speed = {:.3e}, N = {}",
            cfg.name,
            snap.time,
            d.energy,
            d.max_speed,
            snap.ensemble.len()
        );
        if let Some(dir) = out {
            let label = time_label(snap.time);
            let e = &snap.ensemble;
            write_pairs(
                &dir.join(format!("particles_{label}.csv")),
                "position,weight",
                e.positions(),
                e.weights(),
            )?;
            write_pairs(
                &dir.join(format!("density_{label}.csv")),
                "x,rho",
                &rho.grid.nodes(),
                &rho.values,
            )?;
        }
        Ok(())
    })?;
    let wall = start.elapsed().as_secs_f64();

    let last = record.snapshots.last().expect("integration records t0");
    let rho = output_density(cfg, &last.ensemble)?;
    let summary = RunSummary {
        final_time: last.time,
        maxima: local_maxima(&rho, PEAK_PROMINENCE),
        max_density: rho.max(),
        max_speed: last.diagnostics.max_speed,
        energy: last_energy.expect("at least one snapshot"),
        equilibrium: classify_equilibrium(&rho, last.diagnostics.max_speed, PLATEAU_TOL)?,
    };
    let meta = RunMeta {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        epsilon: cfg.epsilon()?,
        epsilon_rule: match (cfg.epsilon_abs, cfg.epsilon_exp) {
            (_, Some(q)) => format!("exponent: eps = h^{q}"),
            _ => "absolute".into(),
        },
        h: cfg.h(),
        initial_particles: ens0.len(),
        stats: record.stats,
        remeshes: record.remeshes.clone(),
        wall_time_s: wall,
        summary,
    };
    if let Some(dir) = out {
        let mut csv = String::from(DIAGNOSTICS_HEADER);
        csv.push('\n');
        for r in &rows {
            csv.push_str(&r.csv());
            csv.push('\n');
        }
        fs::write(dir.join("diagnostics.csv"), csv)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    Ok(RunOutput { config: cfg.clone(), record, rows, meta })
}

// ---------------------------------------------------------------------------
// presets

struct P {
    name: String,
    description: String,
    kernel: KernelSpec,
    m: f64,
    nu: f64,
    mollify: bool,
    q: f64,
    initial: DensitySpec,
    domain: [f64; 2],
    n: usize,
    t_max: f64,
    max_step: f64,
    snapshots: usize,
    remesh: bool,
    long: bool,
}

impl P {
    fn new(name: impl Into<String>, kernel: KernelSpec, m: f64, nu: f64) -> Self {
        Self {
            name: name.into(),
            description: String::new(),
            kernel,
            m,
            nu,
            mollify: true,
            q: 0.9,
            initial: chr(-0.6, 0.6, 1.0),
            domain: [-0.6, 0.6],
            n: 600,
            t_max: 1.0,
            max_step: 1e-3,
            snapshots: 50,
            remesh: false,
            long: false,
        }
    }

    fn describe(mut self, d: impl Into<String>) -> Self {
        self.description = d.into();
        self
    }

    fn init(mut self, initial: DensitySpec, domain: [f64; 2]) -> Self {
        self.initial = initial;
        self.domain = domain;
        self
    }

    fn grid(mut self, n: usize, q: f64) -> Self {
        self.n = n;
        self.q = q;
        self
    }

    fn time(mut self, t_max: f64, max_step: f64) -> Self {
        self.t_max = t_max;
        self.max_step = max_step;
        self
    }

    fn remesh(mut self) -> Self {
        self.remesh = true;
        self
    }

    fn long(mut self) -> Self {
        self.long = true;
        self
    }

    fn build(self) -> ExperimentConfig {
        let integrator = IntegratorOpts {
            t_max: self.t_max,
            max_step: self.max_step,
            snapshot_dt: self.t_max / self.snapshots as f64,
            remesh_factor: self.remesh.then_some(1.5),
            ..Default::default()
        };
        let output_dir = PathBuf::from("runs").join(&self.name);
        ExperimentConfig {
            name: self.name,
            description: format!("{} eps = h^{}.", self.description, self.q),
            model: ModelConfig {
                kernel: self.kernel,
                m: self.m,
                nu: self.nu,
                mollify_kernel: self.mollify,
            },
            epsilon_abs: None,
            epsilon_exp: Some(self.q),
            initial: self.initial,
            domain: self.domain,
            n: self.n,
            integrator,
            output_dir,
            long: self.long,
        }
    }
}

fn chr(a: f64, b: f64, height: f64) -> DensitySpec {
    DensitySpec::Characteristic { a, b, height }
}

fn barenblatt(mass: f64, tau: f64, center: f64) -> DensitySpec {
    DensitySpec::Barenblatt { alpha: 2.0, tau, mass, center }
}

fn attractive_gaussian(delta: f64) -> KernelSpec {
    KernelSpec::Scaled { factor: -1.0, kernel: Box::new(KernelSpec::LocalizedGaussian { delta }) }
}

/// Support of `M ρ₂(·, 0.15)` is `|x| ≤ 1.1052`.
const BARENBLATT_DOMAIN: [f64; 2] = [-1.125, 1.125];

fn all_presets() -> Vec<ExperimentConfig> {
    let mut v = Vec::new();
    let x4_x = KernelSpec::RepulsiveAttractive { a: 4.0, b: 1.0 };

    // equilibria for varying diffusion exponent, W = |x|^4/4 - |x|
    for mass in [0.6, 1.0, 1.4] {
        for m in [2.0, 3.0, 10.0, 100.0] {
            let n = if m == 2.0 { 1000 } else { 500 };
            v.push(
                P::new(format!("vary_m{m}_mass{mass:.1}"), x4_x.clone(), m, 1.0)
                    .describe(format!(
                        "W = |x|^4/4 - |x|, m = {m}, initial {mass} rho_2(x, 0.15), N = {n}, k = 1e-3, T = 6."
                    ))
                    .init(barenblatt(mass, 0.15, 0.0), BARENBLATT_DOMAIN)
                    .grid(n, 0.9)
                    .time(6.0, 1e-3)
                    .build(),
            );
        }
        v.push(
            P::new(format!("height_mass_{mass:.1}"), x4_x.clone(), 800.0, 1.0)
                .describe(format!(
                    "W = |x|^4/4 - |x|, m = 800 as a height constraint, initial {mass} rho_2(x, 0.15), N = 500, k = 1e-3, T = 6."
                ))
                .init(barenblatt(mass, 0.15, 0.0), BARENBLATT_DOMAIN)
                .grid(500, 0.9)
                .time(6.0, 1e-3)
                .build(),
        );
    }

    // constrained Newtonian merging
    let newton = KernelSpec::PowerLaw { k: 1.0 };
    v.push(
        P::new("newton_merge_symmetric", newton.clone(), 800.0, 1.0)
            .describe("W = |x|, m = 800, initial 0.3 rho_2(x -+ 0.5, 0.01), N = 400, k = 1e-4; T not stated, T = 1 chosen.")
            .init(
                DensitySpec::Superposition { parts: vec![barenblatt(0.3, 0.01, -0.5), barenblatt(0.3, 0.01, 0.5)] },
                [-0.95, 0.95],
            )
            .grid(400, 0.99)
            .time(1.0, 1e-4)
            .build(),
    );
    v.push(
        P::new("newton_merge_mixed", newton, 800.0, 1.0)
            .describe("W = |x|, m = 800, initial 0.15 rho_2(x - 0.1, 0.01) + 0.15 rho_2(x - 0.5, 0.01) + 0.9 1_[0.5, 0.9], N = 400, k = 1e-4; T not stated, T = 1 chosen.")
            .init(
                DensitySpec::Superposition {
                    parts: vec![barenblatt(0.15, 0.01, 0.1), barenblatt(0.15, 0.01, 0.5), chr(0.5, 0.9, 0.9)],
                },
                [-0.35, 0.95],
            )
            .grid(400, 0.99)
            .time(1.0, 1e-4)
            .build(),
    );

    // equilibria for varying mass, W = |x|^4/4 - |x|^p/p
    type Row = (f64, usize, f64, &'static [(f64, f64, f64)]);
    let table: [Row; 3] = [
        (
            0.0,
            300,
            0.99,
            &[
                (1.5, 1.0, 1e-3),
                (1.7, 1.0, 1e-3),
                (1.9, 1.0, 1e-3),
                (2.1, 0.25, 1e-4),
                (2.3, 0.25, 1e-4),
            ],
        ),
        (
            1.0,
            500,
            0.9,
            &[
                (0.6, 12.0, 1e-3),
                (0.8, 6.0, 3.162_277_660_168_379e-4),
                (1.0, 6.0, 3.162_277_660_168_379e-4),
                (1.2, 3.0, 3.162_277_660_168_379e-4),
                (1.4, 3.0, 3.162_277_660_168_379e-4),
            ],
        ),
        (
            2.0,
            600,
            0.85,
            &[
                (0.7, 28.0, 1e-4),
                (0.9, 20.0, 1e-4),
                (1.1, 12.0, 1e-4),
                (1.3, 12.0, 1e-4),
                (1.5, 2.5, 1e-5),
                (1.7, 0.75, 1e-5),
            ],
        ),
    ];
    for (p, n, q, rows) in table {
        for &(mass, t, k) in rows {
            v.push(
                P::new(
                    format!("phase_p{p}_mass{mass:.1}"),
                    KernelSpec::RepulsiveAttractive { a: 4.0, b: p },
                    800.0,
                    1.0,
                )
                .describe(format!(
                    "W = |x|^4/4 - |x|^{p}/{p}, m = 800, initial ({mass}/2.1) 1_[-1.05, 1.05], N = {n}, T = {t}, k = {k:e}; snapshot cadence not stated, 50 per run."
                ))
                .init(chr(-1.05, 1.05, mass / 2.1), [-1.05, 1.05])
                .grid(n, q)
                .time(t, k)
                .build(),
            );
        }
    }

    // Gaussian metastability for varying interaction range
    for (delta, t) in [(0.02, 0.5), (0.03, 0.5), (0.04, 25.0), (0.05, 125.0)] {
        let mut p = P::new(format!("meta_delta_{delta}"), attractive_gaussian(delta), 2.0, 0.25)
            .describe(format!(
                "attractive Gaussian delta = {delta}, m = 2, nu = 0.25, initial 1_[-0.6, 0.6], N = 600, k = 1e-4."
            ))
            .grid(600, 0.9)
            .time(t, 1e-4);
        if t > 50.0 {
            p = p.long();
        }
        if t > 1.0 {
            p.snapshots = (t * 4.0) as usize;
        }
        v.push(p.build());
    }

    // diffusion-coefficient sweep at delta = 0.05
    for (nu, t) in [(0.15, 5.0), (0.25, 125.0), (0.35, 5.0), (0.45, 5.0)] {
        let mut p = P::new(format!("diffcoeff_nu{nu}"), attractive_gaussian(0.05), 2.0, nu)
            .describe(format!(
                "attractive Gaussian delta = 0.05, m = 2, nu = {nu}, initial 1_[-0.6, 0.6], N = 500, k = 1e-4."
            ))
            .grid(500, 0.9)
            .time(t, 1e-4);
        if t > 50.0 {
            p = p.long();
        }
        p.snapshots = (t * 10.0) as usize;
        v.push(p.build());
    }

    v.push(
        P::new("linear_diffusion", attractive_gaussian(0.1), 1.0, 0.2)
            .describe("attractive Gaussian delta = 0.1, m = 1, nu = 0.2, initial 1_[-0.6, 0.6], N = 500, k = 1e-3, T = 3.")
            .grid(500, 0.9)
            .time(3.0, 1e-3)
            .build(),
    );

    for delta in [0.1, 0.5, 1.0] {
        v.push(
            P::new(format!("meta_log_delta_{delta}"), KernelSpec::ScaledLog1D { delta }, 2.0, 0.4)
                .describe(format!(
                    "W = log(|x/delta|)/delta, delta = {delta}, m = 2, nu = 0.4, initial 1_[-0.5, 0.5] on [-0.55, 0.55], N = 500, k = 1e-5; T not stated, T = 0.25 chosen."
                ))
                .init(chr(-0.5, 0.5, 1.0), [-0.55, 0.55])
                .grid(500, 0.9)
                .time(0.25, 1e-5)
                .build(),
        );
    }
    for delta in [0.05, 0.1, 0.5] {
        v.push(
            P::new(format!("meta_newton_delta_{delta}"), KernelSpec::ScaledNewtonian1D { delta }, 2.0, 0.1)
                .describe(format!(
                    "W = |x|/delta^2, delta = {delta}, m = 2, nu = 0.1, initial 1_[-0.9, 0.9], N = 600, k = 1e-5; T not stated, T = 0.25 chosen."
                ))
                .init(chr(-0.9, 0.9, 1.0), [-0.9, 0.9])
                .grid(600, 0.9)
                .time(0.25, 1e-5)
                .build(),
        );
    }

    // |x|^4/4 - |x|^2/2 suite
    let x4_x2 = KernelSpec::RepulsiveAttractive { a: 4.0, b: 2.0 };
    let two_patches =
        DensitySpec::Superposition { parts: vec![chr(-0.9, -0.3, 0.2), chr(0.1, 0.7, 0.3)] };
    let ek = "initial 0.2 1_[-0.9, -0.3] + 0.3 1_[0.1, 0.7] (\"weight\" read as height, widths fitted to the stated domain [-0.9, 0.7])";
    let nu_small = 0.075 * 0.075 / 2.0;
    v.push(
        P::new("ek_metastability", x4_x2.clone(), 1.0, nu_small)
            .describe(format!("{ek}, N = 600, k = 1e-3; T not stated, T = 20 chosen."))
            .init(two_patches.clone(), [-0.9, 0.7])
            .grid(600, 0.99)
            .time(20.0, 1e-3)
            .build(),
    );
    v.push(
        P::new("ek_m2_nu_small", x4_x2.clone(), 2.0, nu_small)
            .describe(format!("{ek}, N = 800, k = 1e-3; T not stated, T = 20 chosen."))
            .init(two_patches.clone(), [-0.9, 0.7])
            .grid(800, 0.99)
            .time(20.0, 1e-3)
            .build(),
    );
    v.push(
        P::new("ek_m2_nu_0.01", x4_x2.clone(), 2.0, 0.01)
            .describe(format!("{ek}, N = 800, k = 1e-3; T not stated, T = 20 chosen."))
            .init(two_patches.clone(), [-0.9, 0.7])
            .grid(800, 0.99)
            .time(20.0, 1e-3)
            .build(),
    );
    v.push(
        P::new("ek_height", x4_x2.clone(), 800.0, 1.0)
            .describe(format!("{ek}, N = 600, k = 1e-4; T not stated, T = 5 chosen."))
            .init(two_patches, [-0.9, 0.7])
            .grid(600, 0.85)
            .time(5.0, 1e-4)
            .build(),
    );
    for m in [1.0, 2.0, 800.0] {
        v.push(
            P::new(format!("x4_x2_equilibrate_m{m}"), x4_x2.clone(), m, if m == 800.0 { 1.0 } else { 0.01 })
                .describe(format!(
                    "Equilibration suite for W = |x|^4/4 - |x|^2/2 with m = {m}: initial 1_[-0.5, 0.5], N = 400, k = 1e-3, T = 5."
                ))
                .init(chr(-0.5, 0.5, 1.0), [-0.5, 0.5])
                .grid(400, 0.9)
                .time(5.0, 1e-3)
                .build(),
        );
    }

    // checks
    v.push(
        P::new("two_body", KernelSpec::PowerLaw { k: 2.0 }, 2.0, 0.0)
            .describe("Two particles of mass 1/2 at -+0.5 under W = |x|^2/2 without diffusion: r(t) = r(0) e^{-t}.")
            .init(chr(-1.0, 1.0, 0.5), [-1.0, 1.0])
            .grid(2, 0.9)
            .time(1.0, 1e-3)
            .build(),
    );
    v.push(
        P::new("zero_model", KernelSpec::Zero, 2.0, 0.0)
            .describe("No interaction and no diffusion: particles stay put.")
            .init(chr(-0.5, 0.5, 1.0), [-0.5, 0.5])
            .grid(100, 0.9)
            .time(1.0, 1e-2)
            .build(),
    );
    v.push(
        P::new("pme_barenblatt", KernelSpec::Zero, 2.0, 1.0)
            .describe("Porous medium self-similarity: nu = 1, m = 2, no interaction, initial rho_2(x, 0.15), N = 400, k = 1e-3, T = 0.5; compared with rho_2(x, 0.15 + t).")
            .init(barenblatt(1.0, 0.15, 0.0), BARENBLATT_DOMAIN)
            .grid(400, 0.9)
            .time(0.5, 1e-3)
            .remesh()
            .build(),
    );
    v
}

/// The preset catalog.
pub fn list_presets() -> Vec<ExperimentConfig> {
    all_presets()
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    all_presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(vec![format!("unknown preset {name:?}; see list-presets")]))
}
