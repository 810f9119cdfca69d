//! Driftless subordinators, their inverses `D(t)`, the densities `ρ_t` of
//! `D(t)` and the generalized fractional derivative `𝔻_t^{(k)}`.
//!
//! A subordinator is described by its Lévy density `σ'`, the tail
//! `k(t) = σ((t, ∞))`, its Laplace transform `𝒦` and the Laplace exponent
//! `Φ(λ) = λ 𝒦(λ)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::laplace::{gaver_stehfest_checked, talbot_checked};
use crate::quad::Quad;
use crate::special::exp_integral_e1;

/// Step cap for first-passage simulation of `S`.
pub const MAX_SUBORDINATOR_STEPS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubordinatorFamily {
    /// `Φ(λ) = λ^α`, `0 < α < 1`.
    Stable { alpha: f64 },
    /// Lévy density `b e^{-aτ} / τ`.
    Gamma { a: f64, b: f64 },
    /// User-supplied functions; not serializable beyond the name.
    Custom { name: String },
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

struct CustomSubordinator {
    levy_density: RealFn,
    k: RealFn,
    big_k: RealFn,
}

#[derive(Clone)]
pub struct SubordinatorSpec {
    family: SubordinatorFamily,
    custom: Option<Arc<CustomSubordinator>>,
}

impl std::fmt::Debug for SubordinatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.family.fmt(f)
    }
}

impl SubordinatorSpec {
    pub fn stable(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stable index must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            family: SubordinatorFamily::Stable { alpha },
            custom: None,
        })
    }

    pub fn gamma(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma subordinator needs a, b > 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self {
            family: SubordinatorFamily::Gamma { a, b },
            custom: None,
        })
    }

    /// A subordinator given by `σ'`, `k` and `𝒦`; `Φ = λ𝒦`. No increment
    /// sampler and no complex extension (inversion uses Gaver–Stehfest).
    pub fn custom<D, K, L>(name: &str, levy_density: D, k: K, big_k: L) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        K: Fn(f64) -> f64 + Send + Sync + 'static,
        L: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            family: SubordinatorFamily::Custom { name: name.into() },
            custom: Some(Arc::new(CustomSubordinator {
                levy_density: Arc::new(levy_density),
                k: Arc::new(k),
                big_k: Arc::new(big_k),
            })),
        }
    }

    pub fn from_family(family: &SubordinatorFamily) -> Result<Self> {
        match family {
            SubordinatorFamily::Stable { alpha } => Self::stable(*alpha),
            SubordinatorFamily::Gamma { a, b } => Self::gamma(*a, *b),
            SubordinatorFamily::Custom { name } => Err(Error::Config(format!(
                "custom subordinator '{name}' cannot be built from a config"
            ))),
        }
    }

    pub fn family(&self) -> &SubordinatorFamily {
        &self.family
    }

    pub fn stable_index(&self) -> Option<f64> {
        match self.family {
            SubordinatorFamily::Stable { alpha } => Some(alpha),
            _ => None,
        }
    }

    fn is_half_stable(&self) -> bool {
        self.stable_index() == Some(0.5)
    }

    pub fn levy_density(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        match &self.family {
            SubordinatorFamily::Stable { alpha } => alpha * tau.powf(-1.0 - alpha) / gamma(1.0 - alpha),
            SubordinatorFamily::Gamma { a, b } => b * (-a * tau).exp() / tau,
            SubordinatorFamily::Custom { .. } => (self.custom_fns().levy_density)(tau),
        }
    }

    /// `k(t) = σ((t, ∞))`.
    pub fn k(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::INFINITY;
        }
        match &self.family {
            SubordinatorFamily::Stable { alpha } => t.powf(-alpha) / gamma(1.0 - alpha),
            SubordinatorFamily::Gamma { a, b } => b * exp_integral_e1(a * t),
            SubordinatorFamily::Custom { .. } => (self.custom_fns().k)(t),
        }
    }

    /// `𝒦(λ) = ∫_0^∞ e^{-λt} k(t) dt`.
    pub fn big_k(&self, lambda: f64) -> f64 {
        match &self.family {
            SubordinatorFamily::Stable { alpha } => lambda.powf(alpha - 1.0),
            SubordinatorFamily::Gamma { .. } => self.phi(lambda) / lambda,
            SubordinatorFamily::Custom { .. } => (self.custom_fns().big_k)(lambda),
        }
    }

    /// `Φ(λ) = λ 𝒦(λ)`.
    pub fn phi(&self, lambda: f64) -> f64 {
        match &self.family {
            SubordinatorFamily::Stable { alpha } => lambda.powf(*alpha),
            SubordinatorFamily::Gamma { a, b } => b * (lambda / a).ln_1p(),
            SubordinatorFamily::Custom { .. } => lambda * (self.custom_fns().big_k)(lambda),
        }
    }

    /// `𝒦` on the cut plane, when an analytic extension is known.
    pub fn big_k_complex(&self, s: Complex64) -> Option<Complex64> {
        match &self.family {
            SubordinatorFamily::Stable { alpha } => Some(s.powf(alpha - 1.0)),
            SubordinatorFamily::Gamma { .. } => self.phi_complex(s).map(|p| p / s),
            SubordinatorFamily::Custom { .. } => None,
        }
    }

    pub fn phi_complex(&self, s: Complex64) -> Option<Complex64> {
        match &self.family {
            SubordinatorFamily::Stable { alpha } => Some(s.powf(*alpha)),
            SubordinatorFamily::Gamma { a, b } => Some((s / *a + 1.0).ln() * *b),
            SubordinatorFamily::Custom { .. } => None,
        }
    }

    fn custom_fns(&self) -> &CustomSubordinator {
        self.custom.as_deref().expect("custom family carries its functions")
    }

    /// `N(t) = ∫_0^t k(s) ds`.
    pub fn k_primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.family {
            SubordinatorFamily::Stable { alpha } => t.powf(1.0 - alpha) / gamma(2.0 - alpha),
            SubordinatorFamily::Gamma { a, b } => b * (t * exp_integral_e1(a * t) - (-a * t).exp_m1() / a),
            SubordinatorFamily::Custom { .. } => self.graded_integral(|s| self.k(s), t),
        }
    }

    /// `∫_0^t s k(s) ds`.
    pub fn k_first_moment(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.family {
            SubordinatorFamily::Stable { alpha } => {
                t.powf(2.0 - alpha) / ((2.0 - alpha) * gamma(1.0 - alpha))
            }
            SubordinatorFamily::Gamma { a, b } => {
                let at = a * t;
                b * (t * t * exp_integral_e1(at) / 2.0 + (1.0 - (1.0 + at) * (-at).exp()) / (2.0 * a * a))
            }
            SubordinatorFamily::Custom { .. } => self.graded_integral(|s| s * self.k(s), t),
        }
    }

    fn graded_integral<F: Fn(f64) -> f64>(&self, f: F, t: f64) -> f64 {
        let mut points: Vec<f64> = (0..=12).rev().map(|j| t * 10f64.powi(-j)).collect();
        points.insert(0, 0.0);
        Quad::new(1e-14, 1e-10)
            .with_max_intervals(10_000)
            .integrate_points_unchecked(&f, &points)
            .value
    }

    pub fn has_increment_sampler(&self) -> bool {
        !matches!(self.family, SubordinatorFamily::Custom { .. })
    }

    /// Draw `S(dt)`.
    ///
    /// Stable `α = 1/2` uses the exact Lévy law `S(dt) = (dt²/2) / Z²`;
    /// other stable indices use Kanter's representation scaled by
    /// `dt^{1/α}`; Gamma increments are `Gamma(b dt, 1/a)`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<f64> {
        match &self.family {
            SubordinatorFamily::Stable { alpha } if *alpha == 0.5 => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(0.5 * dt * dt / (z * z))
            }
            SubordinatorFamily::Stable { alpha } => {
                let u: f64 = PI * rng.random::<f64>();
                let e: f64 = rng.sample(Exp1);
                let a = *alpha;
                let s1 = (a * u).sin() / u.sin().powf(1.0 / a)
                    * (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a);
                Ok(dt.powf(1.0 / a) * s1)
            }
            SubordinatorFamily::Gamma { a, b } => {
                let g = Gamma::new(b * dt, 1.0 / a)
                    .map_err(|e| Error::InvalidParameter(format!("gamma increment: {e}")))?;
                Ok(g.sample(rng))
            }
            SubordinatorFamily::Custom { name } => Err(Error::NoIncrementSampler(name.clone())),
        }
    }

    /// `E[D(t)]` where known in closed form (stable: `t^α / Γ(1+α)`).
    pub fn mean_inverse(&self, t: f64) -> Option<f64> {
        self.stable_index().map(|a| t.powf(a) / gamma(1.0 + a))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.family).expect("family serializes")
    }
}

/// One limit in the (H) diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitCheck {
    pub name: String,
    pub monotone: bool,
    pub passed: bool,
    /// Values at the first and last probe along the limit direction.
    pub endpoints: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HReport {
    pub limits: Vec<LimitCheck>,
    pub completely_monotone: bool,
    pub cm_orders_checked: usize,
    pub passed: bool,
}

impl HReport {
    pub fn limit(&self, name: &str) -> Option<&LimitCheck> {
        self.limits.iter().find(|l| l.name == name)
    }
}

/// Probes along a limit, ordered in the direction of the limit.
fn limit_check(name: &str, values: &[f64], to_infinity: bool) -> LimitCheck {
    let first = values[0];
    let last = *values.last().unwrap();
    let finite = values.iter().all(|v| v.is_finite());
    let passed;
    let monotone;
    if to_infinity {
        monotone = values.windows(2).all(|w| w[1] > w[0]);
        // Divergence: the last per-decade increment has not collapsed
        // relative to the one before (a convergent limit shrinks them
        // geometrically).
        let n = values.len();
        let inc_last = values[n - 1] - values[n - 2];
        let inc_prev = values[n - 2] - values[n - 3];
        passed = finite && monotone && inc_prev > 0.0 && inc_last >= 0.5 * inc_prev;
    } else {
        monotone = values.windows(2).all(|w| w[1] < w[0]);
        passed = finite && monotone && last.abs() < 1e-2 * first.abs();
    }
    LimitCheck {
        name: name.into(),
        monotone,
        passed,
        endpoints: (first, last),
    }
}

/// Numeric check of assumption (H): `𝒦 → ∞, Φ → 0` as `λ → 0`,
/// `𝒦 → 0, Φ → ∞` as `λ → ∞`, plus a complete-monotonicity spot check of
/// the Lévy density by signs of finite differences of order `≤ 4`.
pub fn check_h(spec: &SubordinatorSpec) -> HReport {
    let down: Vec<f64> = (0..=6).map(|j| 10f64.powi(-j)).collect();
    let up: Vec<f64> = (0..=6).map(|j| 10f64.powi(j)).collect();
    let kd: Vec<f64> = down.iter().map(|&l| spec.big_k(l)).collect();
    let ku: Vec<f64> = up.iter().map(|&l| spec.big_k(l)).collect();
    let pd: Vec<f64> = down.iter().map(|&l| spec.phi(l)).collect();
    let pu: Vec<f64> = up.iter().map(|&l| spec.phi(l)).collect();
    let limits = vec![
        limit_check("K_to_infinity_as_lambda_to_0", &kd, true),
        limit_check("K_to_0_as_lambda_to_infinity", &ku, false),
        limit_check("phi_to_0_as_lambda_to_0", &pd, false),
        limit_check("phi_to_infinity_as_lambda_to_infinity", &pu, true),
    ];

    let orders = 4;
    let step = 0.1;
    let samples: Vec<f64> = (0..48).map(|j| spec.levy_density(0.2 + j as f64 * step)).collect();
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cm = samples.iter().all(|&v| v >= 0.0);
    let mut diff = samples;
    for n in 1..=orders {
        diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        cm &= diff.iter().all(|&d| sign * d >= -1e-12 * scale);
    }
    let passed = limits.iter().all(|l| l.passed) && cm;
    HReport {
        limits,
        completely_monotone: cm,
        cm_orders_checked: orders,
        passed,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A2Probe {
    pub t: f64,
    pub r: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibleReport {
    pub s0: f64,
    /// `(λ, N(s0/λ) / 𝒦(λ))` for decreasing `λ`.
    pub a1: Vec<(f64, f64)>,
    pub a1_passed: bool,
    pub a2: Vec<A2Probe>,
    pub a2_passed: bool,
    pub passed: bool,
}

/// Admissibility: (A1) `liminf_{λ→0} N(s0/λ)/𝒦(λ) > 0` and (A2)
/// `N(t)/N(r) → 1` as `t/r → 1` at large arguments.
pub fn check_admissible(spec: &SubordinatorSpec, s0: f64) -> Result<AdmissibleReport> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::InvalidParameter(format!("s0 must be positive, got {s0}")));
    }
    let a1: Vec<(f64, f64)> = (1..=6)
        .map(|j| {
            let l = 10f64.powi(-j);
            (l, spec.k_primitive(s0 / l) / spec.big_k(l))
        })
        .collect();
    let tail: Vec<f64> = a1.iter().rev().take(3).map(|p| p.1).collect();
    let a1_passed = tail.iter().all(|v| v.is_finite() && *v > 0.0)
        && tail[0] >= 0.5 * tail[1]
        && tail[1] >= 0.5 * tail[2];

    let t = 1e6;
    let qs = [0.9, 0.95, 0.99, 0.999, 1.0, 1.001, 1.01, 1.05, 1.1];
    let nt = spec.k_primitive(t);
    let a2: Vec<A2Probe> = qs
        .iter()
        .map(|&q| {
            let r = t / q;
            A2Probe {
                t,
                r,
                ratio: nt / spec.k_primitive(r),
            }
        })
        .collect();
    let a2_passed = a2.iter().zip(&qs).all(|(p, &q)| {
        let dev = (p.ratio - 1.0).abs();
        p.ratio.is_finite() && dev <= (q - 1.0).abs() * 1.1 + 1e-12
    });
    Ok(AdmissibleReport {
        s0,
        a1,
        a1_passed,
        a2,
        a2_passed,
        passed: a1_passed && a2_passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSubSample {
    pub t: f64,
    pub value: f64,
    pub path_resolution: f64,
}

/// `D(t) = inf{s : S(s) ≥ t}` with `S` simulated on `{0, ds, 2ds, …}`.
/// The crossing grid time overestimates `D(t)` by less than `ds`.
pub fn sample_inverse_subordinator<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    t: f64,
    ds: f64,
    rng: &mut R,
) -> Result<InverseSubSample> {
    let value = sample_inverse_path(spec, &[t], ds, rng)?[0];
    Ok(InverseSubSample {
        t,
        value,
        path_resolution: ds,
    })
}

/// `D(t_1) ≤ … ≤ D(t_m)` on one shared path of `S` (`levels` increasing).
pub fn sample_inverse_path<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    levels: &[f64],
    ds: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(Error::InvalidParameter(format!("ds must be positive, got {ds}")));
    }
    if levels.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("levels must be positive".into()));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("levels must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(levels.len());
    let mut s = 0.0;
    let mut steps: u64 = 0;
    for &t in levels {
        while s < t {
            if steps >= MAX_SUBORDINATOR_STEPS {
                return Err(Error::StepCapExceeded { level: t, steps });
            }
            s += spec.sample_increment(ds, rng)?;
            steps += 1;
        }
        out.push(steps as f64 * ds);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMethod {
    ClosedForm,
    /// Kanter's integral representation of the one-sided stable law.
    StableIntegral,
    LaplaceInversion,
}

/// Values certified below this by the tail bound are returned exactly.
const NEGLIGIBLE: f64 = 1e-15;

/// The density `ρ_t(τ)` of `D(t)`.
#[derive(Debug, Clone)]
pub struct RhoDensity {
    spec: SubordinatorSpec,
    method: RhoMethod,
}

impl RhoDensity {
    pub fn new(spec: &SubordinatorSpec) -> Self {
        let method = if spec.is_half_stable() {
            RhoMethod::ClosedForm
        } else if spec.stable_index().is_some() {
            RhoMethod::StableIntegral
        } else {
            RhoMethod::LaplaceInversion
        };
        Self {
            spec: spec.clone(),
            method,
        }
    }

    pub fn method(&self) -> RhoMethod {
        self.method
    }

    pub fn spec(&self) -> &SubordinatorSpec {
        &self.spec
    }

    /// `ρ_t(τ)`; the inverse of `λ ↦ 𝒦(λ) e^{-τ Φ(λ)}` in `t`.
    pub fn density(&self, t: f64, tau: f64) -> Result<f64> {
        if !(t > 0.0) || tau < 0.0 {
            return Err(Error::InvalidParameter(format!("need t > 0 and tau >= 0, got ({t}, {tau})")));
        }
        match self.method {
            RhoMethod::ClosedForm => Ok((PI * t).powf(-0.5) * (-tau * tau / (4.0 * t)).exp()),
            RhoMethod::StableIntegral => stable_inverse_density(self.alpha(), t, tau),
            RhoMethod::LaplaceInversion => {
                if self.density_negligible(t, tau) {
                    return Ok(0.0);
                }
                let spec = &self.spec;
                let v = self.invert(t, tau, |s| {
                    let k = spec.big_k_complex(s)?;
                    let p = spec.phi_complex(s)?;
                    Some(k * (-p * tau).exp())
                }, |l| spec.big_k(l) * (-tau * spec.phi(l)).exp())?;
                Ok(v.max(0.0))
            }
        }
    }

    /// `P(D(t) ≤ τ)`.
    pub fn cdf(&self, t: f64, tau: f64) -> Result<f64> {
        if tau <= 0.0 {
            return Ok(0.0);
        }
        match self.method {
            RhoMethod::ClosedForm => Ok(erf(tau / (2.0 * t.sqrt()))),
            RhoMethod::StableIntegral => stable_inverse_cdf(self.alpha(), t, tau),
            RhoMethod::LaplaceInversion => {
                if inverse_tail_bound(&self.spec, t, tau) < NEGLIGIBLE {
                    return Ok(1.0);
                }
                // P(D(t) ≤ τ) = P(S(τ) ≥ t) has transform (1 - e^{-τΦ(λ)}) / λ.
                let spec = &self.spec;
                let v = self.invert(t, tau, |s| {
                    let p = spec.phi_complex(s)?;
                    Some((-(-p * tau).exp() + 1.0) / s)
                }, |l| -(-tau * spec.phi(l)).exp_m1() / l)?;
                Ok(v.clamp(0.0, 1.0))
            }
        }
    }

    /// `R_t(τ) = ∫_0^t ρ_s(τ) ds`.
    pub fn time_integral(&self, t: f64, tau: f64) -> Result<f64> {
        match self.method {
            RhoMethod::ClosedForm => {
                let z = tau / (2.0 * t.sqrt());
                Ok(2.0 * (t / PI).sqrt() * (-z * z).exp() - tau * erfc(z))
            }
            RhoMethod::StableIntegral => {
                if tau == 0.0 {
                    return Ok(self.spec.k_primitive(t));
                }
                let a = self.alpha();
                // ρ_s(τ) vanishes faster than any power as s → 0.
                let err = std::cell::RefCell::new(None);
                let v = Quad::new(1e-15, 1e-10)
                    .integrate(
                        |s| match stable_inverse_density(a, s, tau) {
                            Ok(v) => v,
                            Err(e) => {
                                err.borrow_mut().get_or_insert(e);
                                0.0
                            }
                        },
                        0.0,
                        t,
                    )?
                    .value;
                match err.into_inner() {
                    Some(e) => Err(e),
                    None => Ok(v),
                }
            }
            RhoMethod::LaplaceInversion => {
                // ρ_s(τ) is bounded by the same tail estimate for every s ≤ t.
                if t * self.density_tail(t, tau) < NEGLIGIBLE {
                    return Ok(0.0);
                }
                let spec = &self.spec;
                let v = self.invert(t, tau, |s| {
                    let k = spec.big_k_complex(s)?;
                    let p = spec.phi_complex(s)?;
                    Some(k * (-p * tau).exp() / s)
                }, |l| spec.big_k(l) * (-tau * spec.phi(l)).exp() / l)?;
                Ok(v.max(0.0))
            }
        }
    }

    fn alpha(&self) -> f64 {
        self.spec.stable_index().expect("stable method")
    }

    /// Deep in the upper tail the Talbot contour reaches `Re Φ(s) < 0`
    /// (`α > 1/2`) and inversion is meaningless, so values there come from
    /// the Chernoff bound instead. Beyond the mode the density is
    /// decreasing, which gives `ρ_t(τ) ≤ 2 P(D(t) > τ/2) / τ`.
    fn density_tail(&self, t: f64, tau: f64) -> f64 {
        2.0 * inverse_tail_bound(&self.spec, t, 0.5 * tau) / tau
    }

    fn density_negligible(&self, t: f64, tau: f64) -> bool {
        tau > 0.0 && self.density_tail(t, tau) < NEGLIGIBLE
    }

    fn invert<C, R>(&self, t: f64, tau: f64, complex: C, real: R) -> Result<f64>
    where
        C: Fn(Complex64) -> Option<Complex64>,
        R: Fn(f64) -> f64,
    {
        if self.spec.phi_complex(Complex64::new(1.0, 0.0)).is_some() {
            talbot_checked(|s| complex(s).expect("complex extension present"), t, tau)
        } else {
            gaver_stehfest_checked(real, t, tau)
        }
    }
}

/// Kanter's `A(φ) = (sin αφ / sin φ)^{1/(1-α)} sin((1-α)φ) / sin αφ`; the
/// standard one-sided stable law satisfies
/// `P(S ≤ x) = (1/π) ∫_0^π exp(-x^{-α/(1-α)} A(φ)) dφ`.
fn kanter_a(alpha: f64, phi: f64) -> f64 {
    if phi == 0.0 {
        return alpha.powf(1.0 / (1.0 - alpha)) * (1.0 - alpha) / alpha;
    }
    ((alpha * phi).sin() / phi.sin()).powf(1.0 / (1.0 - alpha)) * ((1.0 - alpha) * phi).sin() / (alpha * phi).sin()
}

/// `(1/π) ∫_0^π A^m e^{-zA} dφ`.
fn kanter_moment(alpha: f64, z: f64, m: i32) -> Result<f64> {
    let integrand = |phi: f64| {
        let a = kanter_a(alpha, phi);
        let e = (-z * a).exp();
        if e == 0.0 {
            0.0
        } else {
            a.powi(m) * e
        }
    };
    Ok(Quad::new(1e-300, 1e-11).integrate(integrand, 0.0, PI)?.value / PI)
}

/// `D(t) = (t / S(1))^α`, so with `z = (τ / t^α)^{1/(1-α)}` the law of
/// `D(t)` only involves `E_φ[e^{-zA}]` and `E_φ[A e^{-zA}]`.
fn stable_z(alpha: f64, t: f64, tau: f64) -> f64 {
    (tau / t.powf(alpha)).powf(1.0 / (1.0 - alpha))
}

fn stable_inverse_cdf(alpha: f64, t: f64, tau: f64) -> Result<f64> {
    let z = stable_z(alpha, t, tau);
    Ok((1.0 - kanter_moment(alpha, z, 0)?).clamp(0.0, 1.0))
}

fn stable_inverse_density(alpha: f64, t: f64, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(t.powf(-alpha) / gamma(1.0 - alpha));
    }
    let z = stable_z(alpha, t, tau);
    let beta = alpha / (1.0 - alpha);
    Ok(beta / (alpha * tau) * z * kanter_moment(alpha, z, 1)?)
}

/// `ρ_t(τ)` for `spec`.
pub fn rho_density(spec: &SubordinatorSpec, t: f64, tau: f64) -> Result<f64> {
    RhoDensity::new(spec).density(t, tau)
}

/// Chernoff bound `P(D(t) > τ) = P(S(τ) < t) ≤ inf_θ e^{θt - τΦ(θ)}`.
pub fn inverse_tail_bound(spec: &SubordinatorSpec, t: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    let g = |u: f64| {
        let th = u.exp();
        th * t - tau * spec.phi(th)
    };
    // Golden-section search on ln θ; θt - τΦ(θ) is convex in θ.
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    for _ in 0..200 {
        if g(c) < g(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - r * (hi - lo);
        d = lo + r * (hi - lo);
    }
    g(0.5 * (lo + hi)).exp().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAveragedRatio {
    pub m_rho: f64,
    pub m_k: f64,
    pub ratio: f64,
}

/// `M_ρ = (1/t) ∫_0^t ρ_s(τ) ds`, `M_k = (1/t) ∫_0^t k(s) ds` and their ratio.
pub fn time_averaged_ratio(spec: &SubordinatorSpec, tau: f64, t: f64) -> Result<TimeAveragedRatio> {
    if !(t > 0.0) || tau < 0.0 {
        return Err(Error::InvalidParameter(format!("need t > 0 and tau >= 0, got ({t}, {tau})")));
    }
    let m_rho = RhoDensity::new(spec).time_integral(t, tau)? / t;
    let m_k = spec.k_primitive(t) / t;
    Ok(TimeAveragedRatio {
        m_rho,
        m_k,
        ratio: m_rho / m_k,
    })
}

/// `∫_0^∞ e^{-λt} k(t) dt` by quadrature (head `[0, ε]` from the primitives).
pub fn k_laplace_numeric(spec: &SubordinatorSpec, lambda: f64) -> Result<f64> {
    let eps = 1e-8;
    let head = spec.k_primitive(eps) - lambda * spec.k_first_moment(eps);
    let mut points: Vec<f64> = (0..=8).rev().map(|j| 10f64.powi(-j)).collect();
    points.extend([2.0, 5.0, 10.0, 20.0, 40.0].iter().map(|m| m / lambda.max(1e-3)));
    points[0] = eps;
    let quad = Quad::new(1e-14, 1e-11).with_max_intervals(20_000);
    let body = quad.integrate_points(|t| (-lambda * t).exp() * spec.k(t), &points)?.value;
    let last = *points.last().unwrap();
    let tail = quad
        .integrate_to_infinity(|t| (-lambda * t).exp() * spec.k(t), last)?
        .value;
    Ok(head + body + tail)
}

/// `∫_0^∞ e^{-λt} ρ_t(τ) dt` by quadrature in `v = √t`.
pub fn rho_t_laplace_numeric(spec: &SubordinatorSpec, tau: f64, lambda: f64) -> Result<f64> {
    let rho = RhoDensity::new(spec);
    let quad = Quad::new(1e-13, 1e-9).with_max_intervals(4000);
    let err = std::cell::RefCell::new(None);
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let t = v * v;
        match rho.density(t, tau) {
            Ok(r) => 2.0 * v * (-lambda * t).exp() * r,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let v_max = (60.0 / lambda).sqrt();
    let points: Vec<f64> = (0..=32).map(|j| v_max * j as f64 / 32.0).collect();
    let value = quad.integrate_points(f, &points)?.value;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `∫∫ e^{-pτ - λt} ρ_t(τ) dτ dt`; equals `𝒦(λ) / (λ𝒦(λ) + p)`.
pub fn rho_double_laplace_numeric(spec: &SubordinatorSpec, p: f64, lambda: f64) -> Result<f64> {
    let rho = RhoDensity::new(spec);
    let inner_quad = Quad::new(1e-13, 1e-10);
    let err = std::cell::RefCell::new(None);
    let inner = |t: f64| -> f64 {
        // ρ_t(·) has scale t^α; integrate τ out to where e^{-pτ} or ρ is negligible.
        let scale = t.powf(spec.stable_index().unwrap_or(0.5)).max(1e-6);
        let top = (40.0 / p).min(40.0 * scale.max(1.0) + 40.0 * scale);
        let pts: Vec<f64> = (0..=16).map(|j| top * j as f64 / 16.0).collect();
        let r = inner_quad.integrate_points(
            |tau| match rho.density(t, tau) {
                Ok(v) => (-p * tau).exp() * v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            &pts,
        );
        match r {
            Ok(q) => q.value,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let v_max = (60.0 / lambda).sqrt();
    let points: Vec<f64> = (0..=16).map(|j| v_max * j as f64 / 16.0).collect();
    let value = Quad::new(1e-12, 1e-9)
        .with_max_intervals(2000)
        .integrate_points(
            |v| if v <= 0.0 { 0.0 } else { 2.0 * v * (-lambda * v * v).exp() * inner(v * v) },
            &points,
        )?
        .value;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Kolmogorov–Smirnov distance between samples and a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// A memory kernel `k` on the uniform grid `t_j = j h`, stored as the cell
/// weights used by product integration:
/// `w0_j = ∫_{t_j}^{t_{j+1}} k`, `w1_j = ∫_{t_j}^{t_{j+1}} (u - t_j) k(u) du`.
#[derive(Debug, Clone)]
pub struct SampledKernel {
    step: f64,
    values: Vec<f64>,
    w0: Vec<f64>,
    w1: Vec<f64>,
}

impl SampledKernel {
    /// Cell weights from the analytic primitives of `k` (exact per cell).
    pub fn from_subordinator(spec: &SubordinatorSpec, step: f64, n: usize) -> Result<Self> {
        check_step(step, n)?;
        let prim: Vec<f64> = (0..=n).map(|j| spec.k_primitive(j as f64 * step)).collect();
        let mom: Vec<f64> = (0..=n).map(|j| spec.k_first_moment(j as f64 * step)).collect();
        let w0: Vec<f64> = prim.windows(2).map(|w| w[1] - w[0]).collect();
        let w1: Vec<f64> = (0..n)
            .map(|j| (mom[j + 1] - mom[j]) - j as f64 * step * w0[j])
            .collect();
        let values = (0..=n).map(|j| spec.k(j as f64 * step)).collect();
        Ok(Self { step, values, w0, w1 })
    }

    /// Cell weights from samples `k(t_j)`, `j = 0..=n` (`k(0)` may be
    /// infinite). Cells `j ≥ 1` use linear interpolation; the first cell
    /// uses the power law `c u^{-β}` through `k(t_1), k(t_2)`.
    pub fn from_samples(step: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::GridMismatch("need at least three kernel samples".into()));
        }
        let n = samples.len() - 1;
        check_step(step, n)?;
        if samples[1..].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("kernel samples must be finite and nonnegative for t > 0".into()));
        }
        let h = step;
        let mut w0 = Vec::with_capacity(n);
        let mut w1 = Vec::with_capacity(n);
        let (k1, k2) = (samples[1], samples[2]);
        let beta = if k1 > 0.0 && k2 > 0.0 { (k1 / k2).ln() / 2f64.ln() } else { 0.0 };
        if samples[0].is_finite() && beta <= 0.0 {
            w0.push(0.5 * h * (samples[0] + k1));
            w1.push(h * h * (samples[0] / 6.0 + k1 / 3.0));
        } else {
            if beta >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "kernel is not integrable at 0 (local exponent {beta})"
                )));
            }
            let c = k1 * h.powf(beta);
            w0.push(c * h.powf(1.0 - beta) / (1.0 - beta));
            w1.push(c * h.powf(2.0 - beta) / (2.0 - beta));
        }
        for j in 1..n {
            let (a, b) = (samples[j], samples[j + 1]);
            w0.push(0.5 * h * (a + b));
            w1.push(h * h * (a / 6.0 + b / 3.0));
        }
        Ok(Self {
            step,
            values: samples,
            w0,
            w1,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of grid points `n + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    /// `(k * f)(t_m)` for piecewise-linear `f`, `m = 0..len`.
    pub fn convolve(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() > self.values.len() {
            return Err(Error::GridMismatch(format!(
                "function has {} samples, kernel only {}",
                f.len(),
                self.values.len()
            )));
        }
        let h = self.step;
        Ok((0..f.len())
            .map(|m| {
                (0..m)
                    .map(|j| f[m - j] * self.w0[j] + (f[m - j - 1] - f[m - j]) * self.w1[j] / h)
                    .sum()
            })
            .collect())
    }
}

fn check_step(step: f64, n: usize) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need a positive step and at least 2 cells, got step {step}, n {n}"
        )));
    }
    Ok(())
}

/// `𝔻_t^{(k)} f = d/dt (k * f) - k(t) f(0)` on the grid.
///
/// Computed as `d/dt (k * (f - f(0)))`. The convolution is exact for
/// piecewise-linear `f`; the derivative uses
/// central differences (second-order one-sided at the last point). The
/// value at `t = 0` is undefined and returned as NaN.
pub fn gfd_apply(kernel: &SampledKernel, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() < 3 {
        return Err(Error::GridMismatch("need at least three function samples".into()));
    }
    // d/dt (k * f(0)) = k(t) f(0) exactly, so difference k * (f - f(0)).
    let shifted: Vec<f64> = f.iter().map(|v| v - f[0]).collect();
    let c = kernel.convolve(&shifted)?;
    let h = kernel.step();
    let n = f.len() - 1;
    let mut out = vec![f64::NAN; f.len()];
    for m in 1..=n {
        out[m] = if m < n {
            (c[m + 1] - c[m - 1]) / (2.0 * h)
        } else {
            (3.0 * c[n] - 4.0 * c[n - 1] + c[n - 2]) / (2.0 * h)
        };
    }
    Ok(out)
}
