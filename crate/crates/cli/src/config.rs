//! Experiment configuration: JSON schema, validation and conversion into
//! solver types.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use dipole_core::evolution::{geometric_snapshots, Integrator};
use dipole_core::initial::InitialData;
use dipole_core::{Kernel, KernelFamily};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: String,
    #[serde(default)]
    pub d: Option<f64>,
    /// CSV of (z, value) rows for tabulated kernels.
    #[serde(default)]
    pub path: Option<String>,
}

impl KernelSpec {
    pub fn build(&self, base: &Path) -> Result<Kernel> {
        let k = match self.family.as_str() {
            "epanechnikov" | "biweight" | "smooth_bump" => {
                let d = self.d.context("kernel spec needs d")?;
                let family = match self.family.as_str() {
                    "epanechnikov" => KernelFamily::Epanechnikov,
                    "biweight" => KernelFamily::Biweight,
                    _ => KernelFamily::SmoothBump,
                };
                Kernel::from_family(family, d)?
            }
            "tabulated" => {
                let path = self.path.as_ref().context("tabulated kernel needs path")?;
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .with_context(|| format!("reading kernel table {}", full.display()))?;
                let mut pts = Vec::new();
                for (ln, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || line.starts_with('x') || line.starts_with('z') {
                        continue;
                    }
                    let mut cols = line.split(',');
                    let z: f64 = cols
                        .next()
                        .context("missing z column")?
                        .trim()
                        .parse()
                        .with_context(|| format!("line {}", ln + 1))?;
                    let v: f64 = cols
                        .next()
                        .context("missing value column")?
                        .trim()
                        .parse()
                        .with_context(|| format!("line {}", ln + 1))?;
                    pts.push((z, v));
                }
                Kernel::tabulated(&pts)?
            }
            other => bail!("unknown kernel family '{other}'"),
        };
        Ok(k)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    /// Absent means the sizing rule picks the right edge from t_final.
    #[serde(default)]
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Indicator { a: f64, b: f64 },
    Hat { center: f64, width: f64 },
    GaussianTruncated { center: f64, sigma: f64 },
    Csv { path: String },
}

impl InitialSpec {
    pub fn build(&self, base: &Path) -> Result<InitialData> {
        Ok(match self {
            InitialSpec::Indicator { a, b } => InitialData::Indicator { a: *a, b: *b },
            InitialSpec::Hat { center, width } => InitialData::Hat {
                center: *center,
                width: *width,
            },
            InitialSpec::GaussianTruncated { center, sigma } => InitialData::GaussianTruncated {
                center: *center,
                sigma: *sigma,
            },
            InitialSpec::Csv { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .with_context(|| format!("reading data {}", full.display()))?;
                let mut pts = Vec::new();
                for line in text.lines() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                        continue;
                    }
                    let mut cols = line.split(',');
                    let x: f64 = cols.next().context("missing x")?.trim().parse()?;
                    let v: f64 = cols.next().context("missing value")?.trim().parse()?;
                    pts.push((x, v));
                }
                InitialData::Samples(pts)
            }
        })
    }

    /// Parse compact command-line forms like hat:1:0.1 or indicator:1:2.
    pub fn parse_compact(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["hat", c, w] => Ok(InitialSpec::Hat {
                center: c.parse()?,
                width: w.parse()?,
            }),
            ["indicator", a, b] => Ok(InitialSpec::Indicator {
                a: a.parse()?,
                b: b.parse()?,
            }),
            ["gaussian", c, s] => Ok(InitialSpec::GaussianTruncated {
                center: c.parse()?,
                sigma: s.parse()?,
            }),
            ["csv", p] => Ok(InitialSpec::Csv {
                path: p.to_string(),
            }),
            _ => bail!("cannot parse initial data spec '{s}'"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorSpec {
    #[serde(default = "default_integrator_kind")]
    pub kind: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_integrator_kind() -> String {
    "rk4".into()
}

fn default_dt() -> f64 {
    0.1
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            kind: default_integrator_kind(),
            dt: default_dt(),
        }
    }
}

impl IntegratorSpec {
    pub fn integrator(&self) -> Result<Integrator> {
        Ok(match self.kind.as_str() {
            "rk4" => Integrator::Rk4,
            "exp_integrating_factor" => Integrator::ExpIntegratingFactor,
            other => bail!("unknown integrator '{other}'"),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotSpec {
    /// t0, t0*sqrt(2), t0*2, ... up to t_final, with t = 0 prepended.
    Geometric { t0: f64 },
    Explicit { times: Vec<f64> },
}

impl Default for SnapshotSpec {
    fn default() -> Self {
        SnapshotSpec::Geometric { t0: 1.0 }
    }
}

impl SnapshotSpec {
    pub fn times(&self, t_final: f64) -> Vec<f64> {
        match self {
            SnapshotSpec::Geometric { t0 } => geometric_snapshots(*t0, t_final),
            SnapshotSpec::Explicit { times } => times.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_mu")]
    pub inner_mu: f64,
    #[serde(default = "default_beta")]
    pub inner_beta: f64,
    #[serde(default = "default_window")]
    pub fit_window: [f64; 2],
    /// Earliest time at which the near-field functional is evaluated.
    #[serde(default = "default_inner_from")]
    pub inner_from: f64,
    /// Gate the exit status on decay-rate and monotonicity checks. Disable
    /// for short runs that never reach the asymptotic regime; conservation
    /// and leak checks always gate.
    #[serde(default = "default_true")]
    pub asymptotic_gates: bool,
}

fn default_mu() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.3
}
fn default_window() -> [f64; 2] {
    [256.0, 4096.0]
}
fn default_inner_from() -> f64 {
    64.0
}
fn default_true() -> bool {
    true
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            inner_mu: default_mu(),
            inner_beta: default_beta(),
            fit_window: default_window(),
            inner_from: default_inner_from(),
            asymptotic_gates: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    pub t_final: f64,
    #[serde(default)]
    pub snapshots: SnapshotSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub rng_seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing config JSON")?;
        Ok(cfg)
    }

    /// Collect every violated invariant rather than stopping at the first.
    /// Negated comparisons make NaN entries fail closed.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.grid.h > 0.0) {
            problems.push("grid spacing must be positive".to_string());
        }
        if !(self.t_final >= 0.0) {
            problems.push("t_final must be nonnegative".to_string());
        }
        if !(self.integrator.dt > 0.0 && self.integrator.dt <= 0.25) {
            problems.push(format!(
                "dt = {} outside the stable range (0, 0.25]",
                self.integrator.dt
            ));
        }
        match self.kernel.build(base) {
            Ok(k) => {
                let m = k.support_radius() / self.grid.h;
                if (m - m.round()).abs() > 1e-9 || m.round() < 8.0 {
                    problems.push(format!(
                        "kernel radius {} must be an integer multiple (>= 8) of h = {}",
                        k.support_radius(),
                        self.grid.h
                    ));
                }
            }
            Err(e) => problems.push(format!("kernel: {e}")),
        }
        match self.initial.build(base) {
            Ok(data) => {
                if let Err(e) = data.validate() {
                    problems.push(format!("initial data: {e}"));
                }
            }
            Err(e) => problems.push(format!("initial data: {e}")),
        }
        if let SnapshotSpec::Explicit { times } = &self.snapshots {
            if times.iter().any(|t| *t < 0.0 || *t > self.t_final) {
                problems.push("explicit snapshot outside [0, t_final]".to_string());
            }
        }
        if !(self.diagnostics.inner_beta > 0.25 && self.diagnostics.inner_beta < 0.5) {
            problems.push("inner_beta must lie in (1/4, 1/2)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  {}", problems.join("\n  "))
        }
    }
}
