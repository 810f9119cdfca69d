//! JSON-configured experiments behind the `greenwalk` binary.
//!
//! A config names one registered experiment plus the kernel, grid,
//! subordinator, test function, Monte Carlo budget and horizons it needs.
//! [`resolve`] fills every default into the config; the resolved config is
//! written back as the run manifest, so re-running a manifest reproduces
//! the outputs byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::green::{
    apply_generator, check_green_existence, evolve_semigroup, green_regular_fourier, green_regular_series, CLFunction,
    PointSemigroup, Potential,
};
use crate::grid::GridSpec;
use crate::kernels::{fit_small_k_expansion, validate_kernel, JumpKernel};
use crate::renorm::{
    fke_residual, mc_time_changed_expectation, normalization_n, renormalized_green_histogram,
    renormalized_potential_curve, SubordinatedSolver,
};
use crate::simulate::{
    average_random_green_measure, empirical_random_green_measure, mc_expectation, mc_truncated_potential, replicate,
    sample_cpp_path, substream, OccupationBins,
};
use crate::subordinate::{
    check_admissible, check_h, gfd_apply, inverse_tail_bound, k_laplace_numeric, ks_distance,
    rho_double_laplace_numeric, rho_t_laplace_numeric, sample_inverse_subordinator, time_averaged_ratio, RhoDensity,
    SampledKernel, SubordinatorFamily, SubordinatorSpec,
};

/// Config schema version accepted by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "GREENWALK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Centred Gaussian with covariance `2I`.
    Gaussian { dim: usize },
    /// One-dimensional Cauchy, `â(k) = e^{-|k|}`.
    Cauchy { dim: usize },
}

impl KernelConfig {
    pub fn build(&self) -> Result<JumpKernel> {
        match *self {
            KernelConfig::Gaussian { dim } => JumpKernel::gaussian(dim),
            KernelConfig::Cauchy { dim: 1 } => Ok(JumpKernel::cauchy()),
            KernelConfig::Cauchy { dim } => Err(Error::Config(format!("cauchy kernel is one-dimensional, got dim {dim}"))),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            KernelConfig::Gaussian { dim } | KernelConfig::Cauchy { dim } => dim,
        }
    }
}

/// Periodic grid with `N` points per axis on `[-L, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionConfig {
    /// The jump density itself, `f = a`.
    KernelDensity,
    Constant { value: f64 },
    GaussianBump { center: Vec<f64>, width: f64, height: f64 },
}

impl FunctionConfig {
    pub fn build(&self, kernel: &JumpKernel) -> Result<CLFunction> {
        match self {
            FunctionConfig::KernelDensity => Ok(CLFunction::kernel_density(kernel)),
            FunctionConfig::Constant { value } => Ok(CLFunction::constant(kernel.dim(), *value)),
            FunctionConfig::GaussianBump { center, width, height } => {
                if center.len() != kernel.dim() {
                    return Err(Error::Config(format!(
                        "bump center has dimension {}, kernel has {}",
                        center.len(),
                        kernel.dim()
                    )));
                }
                CLFunction::gaussian_bump(center.clone(), *width, *height)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizons {
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "T_grid", default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subordinator: Option<SubordinatorFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Horizons>,
    /// Evaluation point; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    /// Experiment-specific scalars (see `greenwalk list`).
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Output path prefix, relative to the output directory.
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonNeed {
    None,
    Single,
    Grid,
}

type Runner = fn(&Context) -> Result<Artifacts>;

/// A registered experiment.
pub struct ExperimentInfo {
    pub name: &'static str,
    pub doc: &'static str,
    pub stochastic: bool,
    pub needs_kernel: bool,
    pub needs_grid: bool,
    pub needs_subordinator: bool,
    pub needs_function: bool,
    pub horizons: HorizonNeed,
    /// Accepted `params` keys with defaults.
    pub params: &'static [(&'static str, f64)],
    /// Accepted `tolerances` keys with defaults.
    pub tolerances: &'static [(&'static str, f64)],
    /// Library operations the experiment exercises.
    pub operations: &'static [&'static str],
    run: Runner,
}

impl std::fmt::Debug for ExperimentInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentInfo").field("name", &self.name).finish()
    }
}

const SERIES_TOL: (&str, f64) = ("series", 1e-10);

static REGISTRY: &[ExperimentInfo] = &[
    ExperimentInfo {
        name: "fit-expansion",
        doc: "Fit 1 - â(k) ≈ A|k|^α on a log-spaced probe window",
        stochastic: false,
        needs_kernel: true,
        needs_grid: false,
        needs_subordinator: false,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("k_min", 1e-3), ("k_max", 5e-2), ("n_probe", 64.0)],
        tolerances: &[],
        operations: &["fit_small_k_expansion", "check_green_existence"],
        run: run_fit_expansion,
    },
    ExperimentInfo {
        name: "fke-residual",
        doc: "Residual of the generalized fractional Kolmogorov equation on a uniform time grid",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: true,
        needs_function: true,
        horizons: HorizonNeed::None,
        params: &[("step", 0.01), ("n_steps", 100.0), ("skip_before", 0.1)],
        tolerances: &[],
        operations: &["fke_residual", "gfd_apply", "subordinated_solution"],
        run: run_fke_residual,
    },
    ExperimentInfo {
        name: "gfd",
        doc: "Generalized fractional derivative of f(t) = t against its closed form N(t)",
        stochastic: false,
        needs_kernel: false,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("step", 1e-3), ("n_steps", 1000.0)],
        tolerances: &[],
        operations: &["gfd_apply", "normalization_n"],
        run: run_gfd,
    },
    ExperimentInfo {
        name: "green-compare",
        doc: "Regular Green kernel by series and by Fourier quadrature along the first axis",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("lambda", 0.0), ("r_max", 3.0)],
        tolerances: &[SERIES_TOL],
        operations: &["green_regular_series", "green_regular_fourier"],
        run: run_green_compare,
    },
    ExperimentInfo {
        name: "green-fourier",
        doc: "Regular Green kernel G_λ by radial Fourier quadrature",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("lambda", 0.0), ("r_max", 3.0)],
        tolerances: &[],
        operations: &["green_regular_fourier"],
        run: run_green_fourier,
    },
    ExperimentInfo {
        name: "green-series",
        doc: "Regular Green kernel G_λ by the convolution-power series on the grid",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("lambda", 0.0), ("r_max", 3.0)],
        tolerances: &[SERIES_TOL],
        operations: &["green_regular_series", "convolve_power"],
        run: run_green_series,
    },
    ExperimentInfo {
        name: "inverse-subordinator",
        doc: "Samples of D(t) on a time grid: mean and KS distance to the exact law",
        stochastic: true,
        needs_kernel: false,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::Single,
        params: &[("ds", 1e-3)],
        tolerances: &[],
        operations: &["sample_inverse_subordinator", "ks_distance", "rho_density"],
        run: run_inverse_subordinator,
    },
    ExperimentInfo {
        name: "laplace-check",
        doc: "Numerical Laplace transforms of k, ρ_t(τ) and the double transform against closed forms",
        stochastic: false,
        needs_kernel: false,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("lambda", 1.0), ("tau", 1.0), ("p", 1.0)],
        tolerances: &[],
        operations: &["k_laplace_numeric", "rho_t_laplace_numeric", "rho_double_laplace_numeric"],
        run: run_laplace_check,
    },
    ExperimentInfo {
        name: "mc-expectation",
        doc: "Monte Carlo E^x[f(X_t)] against the semigroup",
        stochastic: true,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: true,
        horizons: HorizonNeed::Grid,
        params: &[],
        tolerances: &[],
        operations: &["mc_expectation", "sample_cpp_path"],
        run: run_mc_expectation,
    },
    ExperimentInfo {
        name: "mc-potential",
        doc: "Monte Carlo truncated potential ∫_0^T f(X_t) dt against V(x, f)",
        stochastic: true,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: true,
        horizons: HorizonNeed::Single,
        params: &[],
        tolerances: &[SERIES_TOL],
        operations: &["mc_truncated_potential", "potential_truncation_bound", "potential"],
        run: run_mc_potential,
    },
    ExperimentInfo {
        name: "mc-time-changed",
        doc: "Monte Carlo E^x[f(Z_t)] for the time-changed process against subordination",
        stochastic: true,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: true,
        needs_function: true,
        horizons: HorizonNeed::Grid,
        params: &[],
        tolerances: &[],
        operations: &["mc_time_changed_expectation", "subordinated_solution"],
        run: run_mc_time_changed,
    },
    ExperimentInfo {
        name: "potential",
        doc: "Potential V(x, f) = f(x) + (G_0 * f)(x)",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: true,
        horizons: HorizonNeed::None,
        params: &[],
        tolerances: &[SERIES_TOL],
        operations: &["potential", "cl_norm"],
        run: run_potential,
    },
    ExperimentInfo {
        name: "random-green",
        doc: "Averaged occupation histogram of X on [0, T] (expected random Green measure)",
        stochastic: true,
        needs_kernel: true,
        needs_grid: false,
        needs_subordinator: false,
        needs_function: false,
        horizons: HorizonNeed::Single,
        params: &[("half_width", 3.5), ("per_axis", 7.0)],
        tolerances: &[],
        operations: &["average_random_green_measure", "empirical_random_green_measure"],
        run: run_random_green,
    },
    ExperimentInfo {
        name: "ratio-trend",
        doc: "Time-averaged ratio M_t(ρ)/M_t(k) at fixed τ over a grid of t",
        stochastic: false,
        needs_kernel: false,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::Grid,
        params: &[("tau", 1.0)],
        tolerances: &[],
        operations: &["time_averaged_ratio"],
        run: run_ratio_trend,
    },
    ExperimentInfo {
        name: "renorm-curve",
        doc: "Renormalized potential (1/N(T)) ∫_0^T v(s, x) ds over a grid of T against V(x, f)",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: true,
        needs_function: true,
        horizons: HorizonNeed::Grid,
        params: &[],
        tolerances: &[SERIES_TOL],
        operations: &["renormalized_potential_curve", "normalization_n", "check_admissible", "check_h"],
        run: run_renorm_curve,
    },
    ExperimentInfo {
        name: "renorm-histogram",
        doc: "Occupation histogram of the time-changed process divided by N(T)",
        stochastic: true,
        needs_kernel: true,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::Single,
        params: &[("half_width", 3.5), ("per_axis", 7.0)],
        tolerances: &[],
        operations: &["renormalized_green_histogram", "normalization_n"],
        run: run_renorm_histogram,
    },
    ExperimentInfo {
        name: "rho",
        doc: "Density, CDF and time integral of D(t), with the Chernoff tail bound",
        stochastic: false,
        needs_kernel: false,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::Single,
        params: &[("tau_max", 5.0), ("n_tau", 51.0)],
        tolerances: &[],
        operations: &["rho_density", "inverse_tail_bound"],
        run: run_rho,
    },
    ExperimentInfo {
        name: "semigroup",
        doc: "Semigroup e^{tL} f at a point on the grid and by the pointwise series",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: true,
        horizons: HorizonNeed::Grid,
        params: &[],
        tolerances: &[("semigroup", 1e-12)],
        operations: &["evolve_semigroup", "apply_generator"],
        run: run_semigroup,
    },
    ExperimentInfo {
        name: "subordinate-solve",
        doc: "v(t, x) and (L v)(t, x) through the subordination formula",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: true,
        needs_function: true,
        horizons: HorizonNeed::Grid,
        params: &[],
        tolerances: &[],
        operations: &["subordinated_solution"],
        run: run_subordinate_solve,
    },
    ExperimentInfo {
        name: "subordinator-check",
        doc: "Assumption (H), admissibility and the functions k, 𝒦, Φ, N of a subordinator",
        stochastic: false,
        needs_kernel: false,
        needs_grid: false,
        needs_subordinator: true,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[("s0", 1.0)],
        tolerances: &[],
        operations: &["check_h", "check_admissible"],
        run: run_subordinator_check,
    },
    ExperimentInfo {
        name: "validate-kernel",
        doc: "Symmetry, positivity, normalization and Fourier checks of a jump kernel on a grid",
        stochastic: false,
        needs_kernel: true,
        needs_grid: true,
        needs_subordinator: false,
        needs_function: false,
        horizons: HorizonNeed::None,
        params: &[],
        tolerances: &[],
        operations: &["validate_kernel"],
        run: run_validate_kernel,
    },
];

/// Registered experiments, sorted by name.
pub fn list_experiments() -> Vec<&'static ExperimentInfo> {
    let mut v: Vec<_> = REGISTRY.iter().collect();
    v.sort_by_key(|e| e.name);
    v
}

/// `name  doc` lines for `greenwalk list`.
pub fn format_listing() -> String {
    let width = REGISTRY.iter().map(|e| e.name.len()).max().unwrap_or(0);
    list_experiments()
        .iter()
        .map(|e| format!("{:width$}  {}{}\n", e.name, e.doc, if e.stochastic { " [stochastic]" } else { "" }))
        .collect()
}

pub fn find_experiment(name: &str) -> Result<&'static ExperimentInfo> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownExperiment(name.to_string()))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// `GREENWALK_SEED`, if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

fn fill_defaults(
    what: &str,
    given: &BTreeMap<String, f64>,
    defaults: &[(&str, f64)],
    positive: bool,
) -> Result<BTreeMap<String, f64>> {
    for key in given.keys() {
        if !defaults.iter().any(|(k, _)| k == key) {
            let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
            return Err(Error::Config(format!("unknown {what} key '{key}' (accepted: {known:?})")));
        }
    }
    let mut out = BTreeMap::new();
    for &(k, d) in defaults {
        let v = given.get(k).copied().unwrap_or(d);
        if !v.is_finite() || (positive && v <= 0.0) {
            return Err(Error::Config(format!("{what} '{k}' must be {}finite, got {v}", if positive { "positive and " } else { "" })));
        }
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn require<T>(present: &Option<T>, need: bool, field: &str, name: &str) -> Result<()> {
    match (present.is_some(), need) {
        (false, true) => Err(Error::Config(format!("experiment '{name}' requires '{field}'"))),
        (true, false) => Err(Error::Config(format!("experiment '{name}' does not use '{field}'"))),
        _ => Ok(()),
    }
}

/// Validate `config` and fill every default; `seed_override` replaces the
/// Monte Carlo seed.
pub fn resolve(config: &ExperimentConfig, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    let info = find_experiment(&config.experiment)?;
    let name = info.name;
    let mut out = config.clone();
    require(&config.kernel, info.needs_kernel, "kernel", name)?;
    require(&config.grid, info.needs_grid, "grid", name)?;
    require(&config.subordinator, info.needs_subordinator, "subordinator", name)?;
    require(&config.function, info.needs_function, "function", name)?;
    require(&config.mc, info.stochastic, "mc", name)?;
    require(&config.horizons, info.horizons != HorizonNeed::None, "horizons", name)?;

    if let Some(k) = &config.kernel {
        let kernel = k.build()?;
        if let Some(f) = &config.function {
            f.build(&kernel)?;
        }
        let d = k.dim();
        match &config.point {
            Some(p) if p.len() != d => {
                return Err(Error::Config(format!("point has dimension {}, kernel has {d}", p.len())));
            }
            Some(p) if p.iter().any(|v| !v.is_finite()) => {
                return Err(Error::Config("point must be finite".into()));
            }
            Some(_) => {}
            None => out.point = Some(vec![0.0; d]),
        }
    } else if config.point.is_some() {
        return Err(Error::Config(format!("experiment '{name}' does not use 'point'")));
    }
    if let (Some(g), Some(k)) = (&config.grid, &config.kernel) {
        GridSpec::new(k.dim(), g.n, g.l)?;
    }
    if let Some(s) = &config.subordinator {
        if matches!(s, SubordinatorFamily::Custom { .. }) {
            return Err(Error::Config("custom subordinators cannot be configured from JSON".into()));
        }
        SubordinatorSpec::from_family(s)?;
    }
    if info.stochastic {
        let mc = out.mc.as_mut().expect("checked above");
        if let Some(seed) = seed_override {
            mc.seed = Some(seed);
        }
        if mc.seed.is_none() {
            return Err(Error::Config(format!("experiment '{name}' is stochastic and needs mc.seed")));
        }
        if mc.n < 2 {
            return Err(Error::Config("mc.n must be at least 2".into()));
        }
    }
    if let Some(h) = &config.horizons {
        match info.horizons {
            HorizonNeed::Single => {
                if h.t_grid.is_some() {
                    return Err(Error::Config(format!("experiment '{name}' takes horizons.T, not T_grid")));
                }
                match h.t {
                    Some(t) if t > 0.0 && t.is_finite() => {}
                    _ => return Err(Error::Config("horizons.T must be positive".into())),
                }
            }
            HorizonNeed::Grid => {
                if h.t.is_some() {
                    return Err(Error::Config(format!("experiment '{name}' takes horizons.T_grid, not T")));
                }
                match &h.t_grid {
                    Some(g) if !g.is_empty() && g[0] > 0.0 && g.windows(2).all(|w| w[1] > w[0]) && g.iter().all(|t| t.is_finite()) => {}
                    _ => return Err(Error::Config("horizons.T_grid must be positive and strictly increasing".into())),
                }
            }
            HorizonNeed::None => {}
        }
    }
    out.params = fill_defaults("params", &config.params, info.params, false)?;
    out.tolerances = fill_defaults("tolerances", &config.tolerances, info.tolerances, true)?;
    if config.output.is_empty() {
        return Err(Error::Config("output prefix must not be empty".into()));
    }
    Ok(out)
}

/// Files produced by one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOutputs {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

/// What an experiment produces before it is written out.
pub struct Artifacts {
    pub csv: Vec<u8>,
    pub summary: Value,
}

/// Resolved inputs handed to a runner.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    kernel: Option<JumpKernel>,
    grid: Option<GridSpec>,
    spec: Option<SubordinatorSpec>,
    function: Option<CLFunction>,
}

impl Context<'_> {
    fn kernel(&self) -> &JumpKernel {
        self.kernel.as_ref().expect("validated")
    }

    fn grid(&self) -> &GridSpec {
        self.grid.as_ref().expect("validated")
    }

    fn spec(&self) -> &SubordinatorSpec {
        self.spec.as_ref().expect("validated")
    }

    fn function(&self) -> &CLFunction {
        self.function.as_ref().expect("validated")
    }

    fn point(&self) -> &[f64] {
        self.config.point.as_deref().expect("validated")
    }

    fn param(&self, k: &str) -> f64 {
        self.config.params[k]
    }

    fn count(&self, k: &str) -> Result<usize> {
        let v = self.param(k);
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("params '{k}' must be a nonnegative integer, got {v}")))
        }
    }

    fn tol(&self, k: &str) -> f64 {
        self.config.tolerances[k]
    }

    fn mc(&self) -> (usize, u64) {
        let mc = self.config.mc.as_ref().expect("validated");
        (mc.n, mc.seed.expect("validated"))
    }

    fn horizon(&self) -> f64 {
        self.config.horizons.as_ref().and_then(|h| h.t).expect("validated")
    }

    fn horizon_grid(&self) -> &[f64] {
        self.config
            .horizons
            .as_ref()
            .and_then(|h| h.t_grid.as_deref())
            .expect("validated")
    }

    fn bins(&self) -> Result<OccupationBins> {
        OccupationBins::cube(self.kernel().dim(), self.param("half_width"), self.count("per_axis")?)
    }
}

/// Validate `config` without running it; returns the resolved config.
pub fn validate(config: &ExperimentConfig, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    resolve(config, seed_override)
}

/// Run a config (resolving it first) and write `<prefix>.csv`,
/// `<prefix>.json` and `<prefix>.manifest.json` under `out_dir`.
pub fn run(config: &ExperimentConfig, seed_override: Option<u64>, out_dir: &Path) -> Result<RunOutputs> {
    let resolved = resolve(config, seed_override)?;
    let info = find_experiment(&resolved.experiment)?;
    let kernel = resolved.kernel.as_ref().map(|k| k.build()).transpose()?;
    let grid = match (&resolved.grid, &kernel) {
        (Some(g), Some(k)) => Some(GridSpec::new(k.dim(), g.n, g.l)?),
        _ => None,
    };
    let spec = resolved
        .subordinator
        .as_ref()
        .map(SubordinatorSpec::from_family)
        .transpose()?;
    let function = match (&resolved.function, &kernel) {
        (Some(f), Some(k)) => Some(f.build(k)?),
        _ => None,
    };
    let ctx = Context {
        config: &resolved,
        kernel,
        grid,
        spec,
        function,
    };
    let artifacts = (info.run)(&ctx)?;

    let base = out_dir.join(&resolved.output);
    if let Some(parent) = base.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let with_suffix = |s: &str| {
        let mut p = base.clone().into_os_string();
        p.push(s);
        PathBuf::from(p)
    };
    let outputs = RunOutputs {
        csv: with_suffix(".csv"),
        summary: with_suffix(".json"),
        manifest: with_suffix(".manifest.json"),
    };
    std::fs::write(&outputs.csv, &artifacts.csv)?;
    let mut summary = serde_json::to_string_pretty(&json!({
        "experiment": resolved.experiment,
        "result": artifacts.summary,
    }))?;
    summary.push('\n');
    std::fs::write(&outputs.summary, summary)?;
    let mut manifest = serde_json::to_string_pretty(&resolved)?;
    manifest.push('\n');
    std::fs::write(&outputs.manifest, manifest)?;
    Ok(outputs)
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownExperiment(_) | Error::Json(_) => 2,
        Error::DivergentGreenMeasure { .. } => 3,
        Error::Inadmissible(_) => 4,
        Error::UnknownTailExponent => 5,
        _ => 1,
    }
}

/// Machine-readable error object printed on failure.
pub fn error_json(err: &Error) -> Value {
    let mut v = json!({
        "error": err.kind(),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    if let Error::DivergentGreenMeasure { dim, alpha } = err {
        v["detail"] = json!({
            "dim": dim,
            "alpha": alpha,
            "explanation": format!(
                "the Green measure of a compound Poisson process with tail exponent alpha = {alpha} \
                 exists only for d > alpha; here d = {dim}, so the potential is infinite"
            ),
        });
    }
    v
}

/// A ready-to-run config for `name` at small desk-scale settings.
pub fn example_config(name: &str) -> Result<ExperimentConfig> {
    let info = find_experiment(name)?;
    let d = if matches!(name, "fke-residual" | "fit-expansion") { 1 } else { 3 };
    let kernel = info.needs_kernel.then_some(KernelConfig::Gaussian { dim: d });
    let grid = info.needs_grid.then_some(if d == 1 {
        GridConfig { n: 512, l: 64.0 }
    } else {
        GridConfig { n: 32, l: 16.0 }
    });
    let horizons = match info.horizons {
        HorizonNeed::None => None,
        HorizonNeed::Single => Some(Horizons {
            t: Some(if name == "inverse-subordinator" || name == "rho" { 1.0 } else { 20.0 }),
            t_grid: None,
        }),
        HorizonNeed::Grid => Some(Horizons {
            t: None,
            t_grid: Some(match name {
                "renorm-curve" | "ratio-trend" => vec![1e2, 1e3, 1e4],
                _ => vec![0.5, 1.0, 2.0],
            }),
        }),
    };
    Ok(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: name.to_string(),
        kernel,
        grid,
        subordinator: info.needs_subordinator.then_some(SubordinatorFamily::Stable { alpha: 0.5 }),
        function: info.needs_function.then_some(FunctionConfig::KernelDensity),
        mc: info.stochastic.then_some(McConfig { n: 1000, seed: Some(1) }),
        horizons,
        point: None,
        params: BTreeMap::new(),
        tolerances: BTreeMap::new(),
        output: name.to_string(),
    })
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        (a - b).abs()
    } else {
        ((a - b) / b).abs()
    }
}

/// Grid points `j h e_1` with `j h ≤ r_max`.
fn axis_points(ctx: &Context) -> Vec<Vec<f64>> {
    let g = ctx.grid();
    let h = g.spacing();
    let r_max = ctx.param("r_max");
    let mut out = Vec::new();
    let mut j = 0;
    while j as f64 * h <= r_max + 1e-12 {
        let mut x = vec![0.0; g.dim()];
        x[0] = j as f64 * h;
        out.push(x);
        j += 1;
    }
    out
}

fn run_fit_expansion(ctx: &Context) -> Result<Artifacts> {
    let kernel = ctx.kernel();
    let (k_min, k_max, n) = (ctx.param("k_min"), ctx.param("k_max"), ctx.count("n_probe")?);
    let fit = fit_small_k_expansion(kernel, k_min, k_max, n)?;
    let ratio = (k_max / k_min).ln() / (n.max(2) - 1) as f64;
    let csv = csv_bytes(&["k", "gap", "model"], |w| {
        for i in 0..n {
            let k = k_min * (ratio * i as f64).exp();
            let model = fit.scale * k.powf(fit.alpha) * (fit.correction * k).exp();
            w.write_record(row(&[k, kernel.gap_radial(k), model]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({
            "fit": fit,
            "existence": format!("{:?}", check_green_existence(&kernel.clone().with_tail_params(fit.tail_params()?))),
        }),
    })
}

fn run_validate_kernel(ctx: &Context) -> Result<Artifacts> {
    let report = validate_kernel(ctx.kernel(), ctx.grid());
    let v = serde_json::to_value(&report)?;
    let csv = csv_bytes(&["check", "value"], |w| {
        if let Value::Object(m) = &v {
            for (k, val) in m {
                w.write_record([k.as_str(), &val.to_string()])?;
            }
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "report": report, "passed": report.passed() }),
    })
}

fn run_green_series(ctx: &Context) -> Result<Artifacts> {
    let green = green_regular_series(ctx.kernel(), ctx.grid(), ctx.param("lambda"), ctx.tol("series"))?;
    let pts = axis_points(ctx);
    let csv = csv_bytes(&["x", "G_series"], |w| {
        for x in &pts {
            w.write_record(row(&[x[0], green.value_at(x)?]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "metadata": green.metadata() }),
    })
}

fn run_green_fourier(ctx: &Context) -> Result<Artifacts> {
    let lambda = ctx.param("lambda");
    let pts = axis_points(ctx);
    let csv = csv_bytes(&["x", "G_fourier"], |w| {
        for x in &pts {
            w.write_record(row(&[x[0], green_regular_fourier(ctx.kernel(), x, lambda)?]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "lambda": lambda, "kernel": ctx.kernel().name(), "points": pts.len() }),
    })
}

fn run_green_compare(ctx: &Context) -> Result<Artifacts> {
    let lambda = ctx.param("lambda");
    let green = green_regular_series(ctx.kernel(), ctx.grid(), lambda, ctx.tol("series"))?;
    let mut max_rel = 0.0f64;
    let pts = axis_points(ctx);
    let csv = csv_bytes(&["x", "G0_series", "G0_fourier", "rel_diff"], |w| {
        for x in &pts {
            let s = green.value_at(x)?;
            let f = green_regular_fourier(ctx.kernel(), x, lambda)?;
            let r = rel_diff(s, f);
            max_rel = max_rel.max(r);
            w.write_record(row(&[x[0], s, f, r]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "max_rel_diff": max_rel, "metadata": green.metadata() }),
    })
}

fn run_potential(ctx: &Context) -> Result<Artifacts> {
    let f = ctx.function();
    let x = ctx.point();
    let value = Potential::new(ctx.kernel(), ctx.grid(), ctx.tol("series"))?.at(f, x)?;
    let d = x.len();
    let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    header.extend(["f".to_string(), "V".to_string()]);
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv = csv_bytes(&header_ref, |w| {
        let mut r = x.to_vec();
        r.extend([f.eval(x), value]);
        w.write_record(row(&r))?;
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "V": value, "cl_norm": crate::green::cl_norm(f)? }),
    })
}

fn run_semigroup(ctx: &Context) -> Result<Artifacts> {
    let (kernel, f, x, grid) = (ctx.kernel(), ctx.function(), ctx.point(), ctx.grid());
    let fs = f.sample(grid);
    let point = PointSemigroup::new(kernel, f, x, grid)?;
    let csv = csv_bytes(&["t", "u_grid", "u_series"], |w| {
        for &t in ctx.horizon_grid() {
            let u = evolve_semigroup(kernel, &fs, t, ctx.tol("semigroup"))?.interpolate(x)?;
            w.write_record(row(&[t, u, point.value(t)]))?;
        }
        Ok(())
    })?;
    let lf = apply_generator(kernel, &fs)?.interpolate(x)?;
    Ok(Artifacts {
        csv,
        summary: json!({ "generator_at_point": lf, "exact_terms": point.exact_terms() }),
    })
}

fn run_mc_expectation(ctx: &Context) -> Result<Artifacts> {
    let (kernel, f, x, grid) = (ctx.kernel(), ctx.function(), ctx.point(), ctx.grid());
    let (n, seed) = ctx.mc();
    let point = PointSemigroup::new(kernel, f, x, grid)?;
    let mut rows = Vec::new();
    for &t in ctx.horizon_grid() {
        let e = mc_expectation(kernel, f, x, t, n, seed)?;
        rows.push((t, e, point.value(t)));
    }
    let csv = csv_bytes(&["t", "mean", "stderr", "semigroup"], |w| {
        for (t, e, u) in &rows {
            w.write_record(row(&[*t, e.mean, e.stderr, *u]))?;
        }
        Ok(())
    })?;
    let t_last = *ctx.horizon_grid().last().expect("validated");
    let path = sample_cpp_path(kernel, x, t_last, &mut substream(seed, u64::MAX))?;
    Ok(Artifacts {
        csv,
        summary: json!({ "n": n, "seed": seed, "example_path_jumps": path.n_jumps() }),
    })
}

fn run_mc_potential(ctx: &Context) -> Result<Artifacts> {
    let (kernel, f, x) = (ctx.kernel(), ctx.function(), ctx.point());
    let (n, seed) = ctx.mc();
    let t = ctx.horizon();
    let e = mc_truncated_potential(kernel, f, x, t, n, seed)?;
    let target = Potential::new(kernel, ctx.grid(), ctx.tol("series"))?.at(f, x)?;
    let bias = e.bias_bound.unwrap_or(f64::NAN);
    let csv = csv_bytes(&["T", "mean", "stderr", "bias_bound", "target", "rel_gap"], |w| {
        w.write_record(row(&[t, e.mean, e.stderr, bias, target, rel_diff(e.mean, target)]))?;
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "estimate": e, "target": target }),
    })
}

fn run_random_green(ctx: &Context) -> Result<Artifacts> {
    let (kernel, x) = (ctx.kernel(), ctx.point());
    let (n, seed) = ctx.mc();
    let bins = ctx.bins()?;
    let t = ctx.horizon();
    let hist = average_random_green_measure(kernel, x, t, &bins, n, seed)?;
    let mut csv = Vec::new();
    hist.write_csv(&mut csv)?;
    let single = empirical_random_green_measure(kernel, x, t, &bins, &mut substream(seed, u64::MAX))?;
    Ok(Artifacts {
        csv,
        summary: json!({
            "metadata": hist.metadata(&kernel.name()),
            "single_path_mass_defect": single.total_mass() + single.escaped - t,
        }),
    })
}

fn run_subordinator_check(ctx: &Context) -> Result<Artifacts> {
    let spec = ctx.spec();
    let h = check_h(spec);
    let a = check_admissible(spec, ctx.param("s0"))?;
    let csv = csv_bytes(&["x", "levy_density", "k", "K", "phi", "N"], |w| {
        for j in -6..=6 {
            let x = 10f64.powi(j);
            w.write_record(row(&[x, spec.levy_density(x), spec.k(x), spec.big_k(x), spec.phi(x), spec.k_primitive(x)]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "subordinator": spec.to_json(), "h": h, "admissible": a }),
    })
}

fn run_inverse_subordinator(ctx: &Context) -> Result<Artifacts> {
    let spec = ctx.spec();
    let (n, seed) = ctx.mc();
    let (t, ds) = (ctx.horizon(), ctx.param("ds"));
    let samples = replicate(n, seed, |rng| Ok(sample_inverse_subordinator(spec, t, ds, rng)?.value))?;
    let est = crate::simulate::McEstimate::from_samples(&samples, seed);
    let rho = RhoDensity::new(spec);
    let ks = ks_distance(&samples, |tau| rho.cdf(t, tau).unwrap_or(f64::NAN));
    let exact = spec.mean_inverse(t);
    let csv = csv_bytes(&["t", "ds", "mean", "stderr", "exact_mean", "ks"], |w| {
        w.write_record(row(&[t, ds, est.mean, est.stderr, exact.unwrap_or(f64::NAN), ks]))?;
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "estimate": est, "exact_mean": exact, "ks": ks }),
    })
}

fn run_rho(ctx: &Context) -> Result<Artifacts> {
    let spec = ctx.spec();
    let rho = RhoDensity::new(spec);
    let t = ctx.horizon();
    let n = ctx.count("n_tau")?.max(2);
    let tau_max = ctx.param("tau_max");
    let csv = csv_bytes(&["tau", "density", "cdf", "R_t", "tail_bound"], |w| {
        for j in 0..n {
            let tau = tau_max * j as f64 / (n - 1) as f64;
            w.write_record(row(&[
                tau,
                rho.density(t, tau)?,
                rho.cdf(t, tau)?,
                rho.time_integral(t, tau)?,
                inverse_tail_bound(spec, t, tau),
            ]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "t": t, "method": rho.method() }),
    })
}

fn run_laplace_check(ctx: &Context) -> Result<Artifacts> {
    let spec = ctx.spec();
    let (lambda, tau, p) = (ctx.param("lambda"), ctx.param("tau"), ctx.param("p"));
    let big_k = spec.big_k(lambda);
    let phi = spec.phi(lambda);
    let rows = [
        ("k", k_laplace_numeric(spec, lambda)?, big_k),
        ("rho_t", rho_t_laplace_numeric(spec, tau, lambda)?, big_k * (-tau * phi).exp()),
        ("double", rho_double_laplace_numeric(spec, p, lambda)?, big_k / (p + phi)),
    ];
    let csv = csv_bytes(&["identity", "numeric", "closed_form", "rel_err"], |w| {
        for (name, num, exact) in &rows {
            w.write_record([name.to_string(), num.to_string(), exact.to_string(), rel_diff(*num, *exact).to_string()])?;
        }
        Ok(())
    })?;
    let max = rows.iter().map(|r| rel_diff(r.1, r.2)).fold(0.0, f64::max);
    Ok(Artifacts {
        csv,
        summary: json!({ "max_rel_err": max }),
    })
}

fn run_ratio_trend(ctx: &Context) -> Result<Artifacts> {
    let spec = ctx.spec();
    let tau = ctx.param("tau");
    let rows: Vec<_> = ctx
        .horizon_grid()
        .iter()
        .map(|&t| time_averaged_ratio(spec, tau, t).map(|r| (t, r)))
        .collect::<Result<_>>()?;
    let csv = csv_bytes(&["t", "M_rho", "M_k", "ratio"], |w| {
        for (t, r) in &rows {
            w.write_record(row(&[*t, r.m_rho, r.m_k, r.ratio]))?;
        }
        Ok(())
    })?;
    let gaps: Vec<f64> = rows.iter().map(|(_, r)| (r.ratio - 1.0).abs()).collect();
    Ok(Artifacts {
        csv,
        summary: json!({ "gaps": gaps, "monotone": gaps.windows(2).all(|w| w[1] <= w[0]) }),
    })
}

fn run_gfd(ctx: &Context) -> Result<Artifacts> {
    let spec = ctx.spec();
    let step = ctx.param("step");
    let n = ctx.count("n_steps")?;
    let k = SampledKernel::from_subordinator(spec, step, n)?;
    let f: Vec<f64> = (0..=n).map(|j| j as f64 * step).collect();
    let d = gfd_apply(&k, &f)?;
    let mut max_err = 0.0f64;
    let csv = csv_bytes(&["t", "gfd", "exact", "abs_err"], |w| {
        for j in 1..=n {
            let t = f[j];
            let exact = normalization_n(spec, t);
            max_err = max_err.max((d[j] - exact).abs());
            w.write_record(row(&[t, d[j], exact, (d[j] - exact).abs()]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "max_abs_err": max_err, "step": step, "n_steps": n }),
    })
}

fn run_subordinate_solve(ctx: &Context) -> Result<Artifacts> {
    let solver = SubordinatedSolver::new(ctx.kernel(), ctx.spec(), ctx.function(), ctx.point(), ctx.grid())?;
    let csv = csv_bytes(&["t", "v", "Lv"], |w| {
        for &t in ctx.horizon_grid() {
            w.write_record(row(&[t, solver.value(t)?, solver.generator_value(t)?]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "exact_terms": solver.semigroup().exact_terms() }),
    })
}

fn run_mc_time_changed(ctx: &Context) -> Result<Artifacts> {
    let (kernel, spec, f, x) = (ctx.kernel(), ctx.spec(), ctx.function(), ctx.point());
    let (n, seed) = ctx.mc();
    let solver = SubordinatedSolver::new(kernel, spec, f, x, ctx.grid())?;
    let mut rows = Vec::new();
    for &t in ctx.horizon_grid() {
        let e = mc_time_changed_expectation(kernel, spec, f, x, t, n, seed)?;
        rows.push([t, e.mean, e.stderr, solver.value(t)?]);
    }
    let csv = csv_bytes(&["t", "mean", "stderr", "subordination"], |w| {
        for r in &rows {
            w.write_record(row(r))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "n": n, "seed": seed }),
    })
}

fn run_renorm_curve(ctx: &Context) -> Result<Artifacts> {
    let curve = renormalized_potential_curve(
        ctx.kernel(),
        ctx.spec(),
        ctx.function(),
        ctx.point(),
        ctx.horizon_grid(),
        ctx.grid(),
        ctx.tol("series"),
    )?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv)?;
    Ok(Artifacts {
        csv,
        summary: json!({
            "target": curve.target,
            "final_gap": curve.final_gap(),
            "gap_nonincreasing": curve.gap_nonincreasing(),
            "growth_factors": curve.growth_factors(),
        }),
    })
}

fn run_renorm_histogram(ctx: &Context) -> Result<Artifacts> {
    let (n, seed) = ctx.mc();
    let bins = ctx.bins()?;
    let hist = renormalized_green_histogram(ctx.kernel(), ctx.spec(), ctx.point(), ctx.horizon(), &bins, n, seed)?;
    let mut csv = Vec::new();
    hist.write_csv(&mut csv)?;
    Ok(Artifacts {
        csv,
        summary: json!({ "metadata": hist.metadata(&ctx.kernel().name()) }),
    })
}

fn run_fke_residual(ctx: &Context) -> Result<Artifacts> {
    let r = fke_residual(
        ctx.kernel(),
        ctx.spec(),
        ctx.function(),
        ctx.point(),
        ctx.param("step"),
        ctx.count("n_steps")?,
        ctx.param("skip_before"),
        ctx.grid(),
    )?;
    let csv = csv_bytes(&["t", "gfd_v", "Lv", "residual"], |w| {
        for j in 1..r.times.len() {
            w.write_record(row(&[r.times[j], r.lhs[j], r.rhs[j], r.lhs[j] - r.rhs[j]]))?;
        }
        Ok(())
    })?;
    Ok(Artifacts {
        csv,
        summary: json!({ "max_abs": r.max_abs, "step": r.step, "skip_before": r.skip_before }),
    })
}
