//! The jump generator `Lf = a*f - f`, its semigroup, the regular Green
//! kernel `G_λ = Σ_{n≥1} a_n / (1+λ)^n` and potentials on `CL(R^d)`.
//!
//! Two independent routes to `G_λ` are provided: a grid series over
//! convolution powers ([`green_regular_series`]) and radial quadrature of
//! the Fourier integral `(2π)^{-d} ∫ e^{ik·x} â/(1+λ-â) dk`
//! ([`green_regular_fourier`]).
//!
//! Convolution powers are computed on a periodic box, so `a_n` picks up
//! images once its spread reaches the box size. The series stops before
//! that happens and sums the remainder with a pointwise model
//! `a_m(x) ≈ q_m(x) (c0 + c1 m^{-γ})`, where `q_m` is the heat kernel
//! (`α = 2`) or the scaling profile `m^{-d/α}`, and `c0, c1` are matched
//! to the last two exact terms.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridSpec};
use crate::kernels::{DiscreteKernel, JumpKernel, TailParams};
use crate::quad::{pairwise_sum, Quad};
use crate::special::{bessel_j0, power_exp_tail};

/// Relative boundary level of `a_n` at which the grid series hands over to
/// the tail model.
pub const WRAP_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenExistence {
    Exists,
    Divergent,
    Unknown,
}

/// `G_0` exists iff `d > α` (strict); `Unknown` without tail parameters.
pub fn check_green_existence(kernel: &JumpKernel) -> GreenExistence {
    match kernel.tail_params() {
        None => GreenExistence::Unknown,
        Some(t) if (kernel.dim() as f64) > t.alpha => GreenExistence::Exists,
        Some(_) => GreenExistence::Divergent,
    }
}

fn require_green_measure(kernel: &JumpKernel) -> Result<TailParams> {
    match kernel.tail_params() {
        None => Err(Error::UnknownTailExponent),
        Some(t) if (kernel.dim() as f64) > t.alpha => Ok(t),
        Some(t) => Err(Error::DivergentGreenMeasure {
            dim: kernel.dim(),
            alpha: t.alpha,
        }),
    }
}

/// `Lf = a*f - f` by FFT convolution.
pub fn apply_generator(kernel: &JumpKernel, f: &FieldGrid) -> Result<FieldGrid> {
    let dk = kernel.discretize(f.grid())?;
    generator_with(&dk, f)
}

pub(crate) fn generator_with(dk: &DiscreteKernel, f: &FieldGrid) -> Result<FieldGrid> {
    let spec = dk.spectrum(f)?;
    Ok(dk.apply_multiplier(&spec, |s| s - 1.0))
}

/// Largest Poisson order used by [`evolve_semigroup`].
pub const MAX_SEMIGROUP_TERMS: usize = 1_000_000;

/// `u(t) = e^{-t} Σ_n t^n/n! a_n * f`, truncated once the Poisson tail
/// weight drops below `tol`.
pub fn evolve_semigroup(kernel: &JumpKernel, f: &FieldGrid, t: f64, tol: f64) -> Result<FieldGrid> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    let dk = kernel.discretize(f.grid())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let weights = poisson_weights(t, tol, MAX_SEMIGROUP_TERMS)?;
    let spec = dk.spectrum(f)?;
    Ok(dk.apply_multiplier(&spec, |s| {
        // Horner evaluation of Σ p_n s^n.
        weights.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }))
}

/// Poisson(t) probabilities `p_0..p_N` with `P(Poisson(t) > N) < tol`.
pub(crate) fn poisson_weights(t: f64, tol: f64, cap: usize) -> Result<Vec<f64>> {
    let mut n = t.ceil() as usize;
    while gamma_lr((n + 1) as f64, t) >= tol {
        n += 1 + n / 16;
        if n > cap {
            return Err(Error::SeriesTruncated {
                terms: cap,
                reason: format!("Poisson tail at t = {t} exceeds tol {tol} within the term cap"),
            });
        }
    }
    Ok((0..=n).map(|k| poisson_pmf(k, t)).collect())
}

pub(crate) fn poisson_pmf(n: usize, t: f64) -> f64 {
    if t == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-t + n as f64 * t.ln() - ln_gamma(n as f64 + 1.0)).exp()
}

/// Why the grid series stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStop {
    /// Increment bound fell below the tolerance.
    Tolerance,
    /// `a_n` started to feel the periodic images; tail model used.
    WrapGuard,
    /// Hard cap on the number of terms; tail model used.
    TermCap,
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesOptions {
    pub tol: f64,
    pub max_terms: usize,
    pub wrap_ratio: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_terms: 4096,
            wrap_ratio: WRAP_RATIO,
        }
    }
}

/// Resolvent kernel `𝔊_λ = (1+λ)^{-1} (δ + G_λ)` with its regular part on a grid.
#[derive(Debug, Clone)]
pub struct ResolventKernel {
    pub lambda: f64,
    pub kernel: JumpKernel,
    pub regular_part: FieldGrid,
    pub singular_weight: f64,
    pub n_terms: usize,
    pub tol: f64,
    pub stop: SeriesStop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventMetadata {
    pub lambda: f64,
    pub d: usize,
    pub alpha: Option<f64>,
    #[serde(rename = "A")]
    pub scale: Option<f64>,
    pub tol: f64,
    pub n_terms: usize,
    pub stop: SeriesStop,
    pub kernel: String,
    pub points_per_axis: usize,
    pub half_width: f64,
}

impl ResolventKernel {
    pub fn grid(&self) -> &GridSpec {
        self.regular_part.grid()
    }

    /// `G_λ(x)` by multilinear interpolation.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        self.regular_part.interpolate(x)
    }

    pub fn metadata(&self) -> ResolventMetadata {
        let tail = self.kernel.tail_params();
        ResolventMetadata {
            lambda: self.lambda,
            d: self.kernel.dim(),
            alpha: tail.map(|t| t.alpha),
            scale: tail.map(|t| t.scale),
            tol: self.tol,
            n_terms: self.n_terms,
            stop: self.stop,
            kernel: self.kernel.name(),
            points_per_axis: self.grid().points_per_axis(),
            half_width: self.grid().half_width(),
        }
    }

    /// Periodic convolution `G_λ * f` on the kernel's grid.
    pub fn convolve(&self, f: &FieldGrid) -> Result<FieldGrid> {
        DiscreteKernel::convolve_fields(self.grid(), &self.regular_part, f)
    }

    /// `𝔊_λ * f = (1+λ)^{-1} (f + G_λ * f)`.
    pub fn resolvent_apply(&self, f: &FieldGrid) -> Result<FieldGrid> {
        let g = self.convolve(f)?;
        let w = self.singular_weight;
        f.zip_with(&g, |a, b| w * (a + b))
    }

    /// `∫_box G_λ` by tensor Simpson. Box faces must be grid points with an
    /// even number of cells per axis.
    pub fn box_integral(&self, lower: &[f64], upper: &[f64]) -> Result<f64> {
        simpson_box(&self.regular_part, lower, upper)
    }
}

pub(crate) fn simpson_box(field: &FieldGrid, lower: &[f64], upper: &[f64]) -> Result<f64> {
    let grid = field.grid();
    let d = grid.dim();
    if lower.len() != d || upper.len() != d {
        return Err(Error::GridMismatch("box corner dimension".into()));
    }
    let h = grid.spacing();
    let n = grid.points_per_axis();
    let mut starts = Vec::with_capacity(d);
    let mut counts = Vec::with_capacity(d);
    for a in 0..d {
        let s = (lower[a] + grid.half_width()) / h;
        let c = (upper[a] - lower[a]) / h;
        let (si, ci) = (s.round(), c.round());
        if (s - si).abs() > 1e-9 || (c - ci).abs() > 1e-9 || ci < 2.0 || (ci as usize) % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "box [{}, {}] on axis {a} is not an even number of grid cells",
                lower[a], upper[a]
            )));
        }
        if si < 0.0 || (si + ci) as usize >= n {
            return Err(Error::PointOutsideBins(upper.to_vec()));
        }
        starts.push(si as usize);
        counts.push(ci as usize);
    }
    let weight = |i: usize, c: usize| -> f64 {
        if i == 0 || i == c {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let total: usize = counts.iter().map(|c| c + 1).product();
    let mut terms = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    let mut pos = vec![0usize; d];
    for mut flat in 0..total {
        let mut w = 1.0;
        for a in (0..d).rev() {
            let m = counts[a] + 1;
            let i = flat % m;
            flat /= m;
            w *= weight(i, counts[a]);
            idx[a] = i;
            pos[a] = starts[a] + i;
        }
        terms.push(w * field.values()[grid.flatten(&pos)]);
    }
    Ok(pairwise_sum(&terms) * (h / 3.0).powi(d as i32))
}

/// Shape of the large-`m` behaviour of convolution powers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TailProfile {
    dim: usize,
    scale: f64,
    alpha: f64,
    shift: f64,
}

impl TailProfile {
    pub(crate) fn new(dim: usize, tail: TailParams, shift: f64) -> Self {
        Self {
            dim,
            scale: tail.scale,
            alpha: tail.alpha,
            shift,
        }
    }

    fn is_diffusive(&self) -> bool {
        self.alpha >= 2.0
    }

    /// Exponent `γ` of the correction `c1 μ^{-γ}`.
    fn gamma(&self) -> f64 {
        if self.is_diffusive() {
            1.0
        } else {
            (2.0 / self.alpha - 1.0).max(0.25)
        }
    }

    /// Power `p` in `μ^{-p}` of the profile.
    fn power(&self) -> f64 {
        if self.is_diffusive() {
            self.dim as f64 / 2.0
        } else {
            self.dim as f64 / self.alpha
        }
    }

    /// Prefactor such that `q = K μ^{-p} e^{-c/μ}`.
    fn prefactor(&self) -> f64 {
        if self.is_diffusive() {
            (4.0 * PI * self.scale).powf(-(self.dim as f64) / 2.0)
        } else {
            self.scale.powf(-(self.dim as f64) / self.alpha)
        }
    }

    /// The exponent constant `c` for squared distance `r2`.
    fn c_of(&self, r2: f64) -> f64 {
        if self.is_diffusive() {
            r2 / (4.0 * self.scale)
        } else {
            0.0
        }
    }

    fn mu(&self, m: f64) -> f64 {
        m + self.shift
    }

    pub(crate) fn q(&self, m: f64, r2: f64) -> f64 {
        let mu = self.mu(m);
        self.prefactor() * mu.powf(-self.power()) * (-self.c_of(r2) / mu).exp()
    }

    /// `q_m (c0 + c1 μ^{-γ})`.
    pub(crate) fn model(&self, m: f64, r2: f64, c: (f64, f64)) -> f64 {
        self.q(m, r2) * (c.0 + c.1 * self.mu(m).powf(-self.gamma()))
    }

    /// Match `c0 + c1 μ^{-γ}` to exact values at `m-1` and `m`.
    pub(crate) fn fit(&self, m: usize, r2: f64, prev: f64, last: f64) -> (f64, f64) {
        let m1 = (m - 1) as f64;
        let m2 = m as f64;
        let r1 = prev / self.q(m1, r2);
        let r2v = last / self.q(m2, r2);
        let g = self.gamma();
        let x1 = self.mu(m1).powf(-g);
        let x2 = self.mu(m2).powf(-g);
        let c1 = (r1 - r2v) / (x1 - x2);
        let c0 = r2v - c1 * x2;
        (c0, c1)
    }

    /// `(Σ_{m>M} r^m μ^{-p} e^{-c/μ}, Σ_{m>M} r^m μ^{-p-γ} e^{-c/μ})` times `K`.
    fn tail_sums(&self, last: usize, ratio: f64, r2: f64) -> (f64, f64) {
        let p = self.power();
        let g = self.gamma();
        let c = self.c_of(r2);
        let k = self.prefactor();
        let log_r = ratio.ln();
        let mut s0 = Vec::with_capacity(64);
        let mut s1 = Vec::with_capacity(64);
        let direct = 64usize;
        for m in last + 1..=last + direct {
            let mu = self.mu(m as f64);
            let w = (m as f64 * log_r).exp() * (-c / mu).exp();
            s0.push(w * mu.powf(-p));
            s1.push(w * mu.powf(-p - g));
        }
        let mut t0 = pairwise_sum(&s0);
        let mut t1 = pairwise_sum(&s1);
        // Remainder by the midpoint rule turned integral.
        let m0 = (last + direct) as f64 + 0.5;
        let weight_at_m0 = (m0 * log_r).exp();
        if weight_at_m0 > 1e-30 {
            if ratio == 1.0 {
                let mu0 = self.mu(m0);
                t0 += power_exp_tail(p, c, mu0);
                t1 += power_exp_tail(p + g, c, mu0);
            } else {
                let beta = -log_r;
                let shift = self.shift;
                let integrand = |q: f64| {
                    move |m: f64| {
                        let mu = m + shift;
                        (-beta * m - c / mu).exp() * mu.powf(-q)
                    }
                };
                let quad = Quad::new(1e-300, 1e-10);
                t0 += quad
                    .integrate_to_infinity(integrand(p), m0)
                    .map(|r| r.value)
                    .unwrap_or(0.0);
                t1 += quad
                    .integrate_to_infinity(integrand(p + g), m0)
                    .map(|r| r.value)
                    .unwrap_or(0.0);
            }
        }
        (k * t0, k * t1)
    }
}

/// `G_λ` on `grid` by summing `a_n / (1+λ)^n`.
pub fn green_regular_series(
    kernel: &JumpKernel,
    grid: &GridSpec,
    lambda: f64,
    tol: f64,
) -> Result<ResolventKernel> {
    green_regular_series_with(
        kernel,
        grid,
        lambda,
        &SeriesOptions {
            tol,
            ..SeriesOptions::default()
        },
    )
}

pub fn green_regular_series_with(
    kernel: &JumpKernel,
    grid: &GridSpec,
    lambda: f64,
    opts: &SeriesOptions,
) -> Result<ResolventKernel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let tail = if lambda == 0.0 {
        Some(require_green_measure(kernel)?)
    } else {
        kernel.tail_params()
    };
    let dk = kernel.discretize(grid)?;
    let ratio = 1.0 / (1.0 + lambda);
    let boundary: Vec<usize> = (0..grid.len()).filter(|&i| grid.on_boundary(i)).collect();
    let hd = grid.cell_volume();

    let mut acc = vec![0.0; grid.len()];
    let mut prev: Option<FieldGrid> = None;
    let mut last: Option<FieldGrid> = None;
    let mut weight = 1.0;
    let mut power: Vec<f64> = vec![1.0; dk.symbol().len()];
    let mut stop = SeriesStop::TermCap;
    let mut n_terms = 0;
    for n in 1..=opts.max_terms {
        power
            .par_iter_mut()
            .zip(dk.symbol().par_iter())
            .for_each(|(p, &s)| *p *= s);
        weight *= ratio;
        // sup |a_n| <= (2L)^{-d} Σ_k |F_k|^n
        let bound = pairwise_sum(&power.iter().map(|p| p.abs()).collect::<Vec<_>>())
            / (grid.len() as f64 * hd);
        let a_n = power_field(&dk, &power);
        if tail.is_some() {
            let peak = a_n.sup_norm();
            let edge = boundary
                .iter()
                .map(|&i| a_n.values()[i].abs())
                .fold(0.0, f64::max);
            if edge > opts.wrap_ratio * peak {
                if n <= 2 {
                    return Err(Error::SeriesTruncated {
                        terms: n,
                        reason: "box too small: a_2 already reaches the boundary".into(),
                    });
                }
                stop = SeriesStop::WrapGuard;
                break;
            }
        }
        acc.par_iter_mut()
            .zip(a_n.values().par_iter())
            .for_each(|(g, &a)| *g += weight * a);
        n_terms = n;
        prev = last.take();
        last = Some(a_n);
        if weight * bound < opts.tol && lambda > 0.0 {
            stop = SeriesStop::Tolerance;
            break;
        }
        if weight * bound < opts.tol * 1e-6 {
            // Numerically complete even at λ = 0 (tiny boxes aside).
            stop = SeriesStop::Tolerance;
            break;
        }
    }

    let needs_tail = lambda == 0.0 || stop != SeriesStop::Tolerance;
    if needs_tail {
        let tail = tail.ok_or(Error::UnknownTailExponent)?;
        let (prev, last) = match (prev, last) {
            (Some(p), Some(l)) => (p, l),
            _ => {
                return Err(Error::SeriesTruncated {
                    terms: n_terms,
                    reason: "fewer than two exact terms before the tail".into(),
                })
            }
        };
        let profile = TailProfile::new(grid.dim(), tail, 0.0);
        add_series_tail(grid, &profile, n_terms, ratio, &prev, &last, &mut acc);
    }

    Ok(ResolventKernel {
        lambda,
        kernel: kernel.clone(),
        regular_part: FieldGrid::from_raw(*grid, acc),
        singular_weight: ratio,
        n_terms,
        tol: opts.tol,
        stop,
    })
}

fn power_field(dk: &DiscreteKernel, power: &[f64]) -> FieldGrid {
    let grid = *dk.grid();
    let hd = grid.cell_volume();
    let mut data: Vec<Complex64> = power.iter().map(|&p| Complex64::new(p / hd, 0.0)).collect();
    dk.fft().inverse(&mut data);
    let offset: Vec<f64> = data.iter().map(|c| c.re).collect();
    FieldGrid::from_raw(grid, grid.to_standard_order(&offset))
}

/// Integer squared-radius key `Σ (j - N/2)²` of a flat index.
fn radius_key(grid: &GridSpec, flat: usize) -> u64 {
    let n = grid.points_per_axis();
    let half = (n / 2) as i64;
    let mut f = flat;
    let mut s = 0i64;
    for _ in 0..grid.dim() {
        let j = (f % n) as i64 - half;
        s += j * j;
        f /= n;
    }
    s as u64
}

fn add_series_tail(
    grid: &GridSpec,
    profile: &TailProfile,
    last_n: usize,
    ratio: f64,
    prev: &FieldGrid,
    last: &FieldGrid,
    acc: &mut [f64],
) {
    let h2 = grid.spacing() * grid.spacing();
    let origin = grid.nearest(&vec![0.0; grid.dim()]);
    let c_origin = profile.fit(last_n, 0.0, prev.values()[origin], last.values()[origin]);
    let floor = 1e-9 * last.values()[origin].abs();

    let mut keys: Vec<u64> = (0..grid.len()).map(|i| radius_key(grid, i)).collect();
    keys.sort_unstable();
    keys.dedup();
    let sums: HashMap<u64, (f64, f64)> = keys
        .par_iter()
        .map(|&k| (k, profile.tail_sums(last_n, ratio, k as f64 * h2)))
        .collect();
    acc.par_iter_mut().enumerate().for_each(|(i, g)| {
        let key = radius_key(grid, i);
        let r2 = key as f64 * h2;
        let (p, l) = (prev.values()[i], last.values()[i]);
        let c = if l.abs() > floor && p.abs() > floor {
            profile.fit(last_n, r2, p, l)
        } else {
            (c_origin.0, 0.0)
        };
        let s = sums[&key];
        *g += c.0 * s.0 + c.1 * s.1;
    });
}

/// Pointwise `G_λ(x)` from the Fourier integral by radial quadrature.
pub fn green_regular_fourier(kernel: &JumpKernel, x: &[f64], lambda: f64) -> Result<f64> {
    green_regular_fourier_with(kernel, x, lambda, 1e-9)
}

pub fn green_regular_fourier_with(
    kernel: &JumpKernel,
    x: &[f64],
    lambda: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        require_green_measure(kernel)?;
    }
    let d = kernel.dim();
    if x.len() != d {
        return Err(Error::GridMismatch(format!("point dimension {} vs kernel {d}", x.len())));
    }
    if !kernel.is_isotropic() {
        return Err(Error::Unsupported(
            "Fourier route needs an isotropic kernel when d > 1".into(),
        ));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let big_k = kernel.spectral_radius();
    let symbol = |k: f64| {
        let gap = kernel.gap_radial(k);
        (1.0 - gap) / (lambda + gap)
    };
    let integrand: Box<dyn Fn(f64) -> f64 + Sync> = match d {
        1 => Box::new(move |k: f64| (k * r).cos() * symbol(k) / PI),
        2 => Box::new(move |k: f64| k * bessel_j0(k * r) * symbol(k) / (2.0 * PI)),
        3 => Box::new(move |k: f64| {
            let kr = k * r;
            let sinc = if kr < 1e-8 { 1.0 - kr * kr / 6.0 } else { kr.sin() / kr };
            k * k * sinc * symbol(k) / (2.0 * PI * PI)
        }),
        _ => {
            return Err(Error::Unsupported(format!(
                "Fourier route implemented for d <= 3, got d = {d}"
            )))
        }
    };
    // Graded near k = 0, then panels short enough to resolve the oscillation.
    let mut points = vec![0.0];
    let mut g = 1e-8;
    while g < 1.0 {
        points.push(g);
        g *= 10.0;
    }
    let width = (PI / r.max(1.0)).min(1.0);
    let mut k = 1.0;
    while k < big_k {
        points.push(k);
        k += width;
    }
    points.push(big_k);
    let quad = Quad::new(1e-15, rel_tol).with_max_intervals(20_000);
    Ok(quad.integrate_points(integrand, &points)?.value)
}

/// A function in `CL(R^d)` (bounded, continuous, integrable) or a constant.
#[derive(Clone)]
pub struct CLFunction {
    dim: usize,
    name: String,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    sup_norm: Option<f64>,
    l1_norm: Option<f64>,
    samples: Option<FieldGrid>,
    constant: Option<f64>,
}

impl std::fmt::Debug for CLFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CLFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sup_norm", &self.sup_norm)
            .field("l1_norm", &self.l1_norm)
            .finish()
    }
}

impl CLFunction {
    /// Wrap an evaluator with optional declared norms.
    pub fn new<F>(dim: usize, name: &str, f: F, sup_norm: Option<f64>, l1_norm: Option<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            dim,
            name: name.into(),
            eval: Arc::new(f),
            sup_norm,
            l1_norm,
            samples: None,
            constant: None,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    /// `f ≡ c`; in `CL` only for `c = 0`.
    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            name: "constant".into(),
            eval: Arc::new(move |_| c),
            sup_norm: Some(c.abs()),
            l1_norm: Some(if c == 0.0 { 0.0 } else { f64::INFINITY }),
            samples: None,
            constant: Some(c),
        }
    }

    /// The kernel density itself, `f = a`.
    pub fn kernel_density(kernel: &JumpKernel) -> Self {
        let k = kernel.clone();
        let peak = kernel.density(&vec![0.0; kernel.dim()]);
        Self::new(kernel.dim(), "kernel", move |x| k.density(x), Some(peak), Some(1.0))
    }

    /// `height · exp(-|x - center|² / (2 width²))`.
    pub fn gaussian_bump(center: Vec<f64>, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter("bump width must be positive".into()));
        }
        let dim = center.len();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let l1 = height.abs() * (2.0 * PI * width * width).powf(dim as f64 / 2.0);
        Ok(Self::new(
            dim,
            "gaussian_bump",
            move |x| {
                let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                height * (-r2 / (2.0 * width * width)).exp()
            },
            Some(height.abs()),
            Some(l1),
        ))
    }

    /// Grid samples interpolated multilinearly; norms from the samples.
    pub fn from_grid(samples: FieldGrid) -> Self {
        let field = samples.clone();
        Self {
            dim: samples.grid().dim(),
            name: "grid".into(),
            eval: Arc::new(move |x| {
                if field.grid().contains(x) {
                    field.interpolate(x).unwrap_or(0.0)
                } else {
                    0.0
                }
            }),
            sup_norm: None,
            l1_norm: None,
            samples: Some(samples),
            constant: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn declared_sup_norm(&self) -> Option<f64> {
        self.sup_norm
    }

    pub fn declared_l1_norm(&self) -> Option<f64> {
        self.l1_norm
    }

    pub fn grid_samples(&self) -> Option<&FieldGrid> {
        self.samples.as_ref()
    }

    /// Attach samples on `grid`.
    pub fn with_samples(mut self, grid: &GridSpec) -> Self {
        self.samples = Some(self.sample(grid));
        self
    }

    /// Samples on `grid` (reuses attached samples when the grid matches).
    pub fn sample(&self, grid: &GridSpec) -> FieldGrid {
        match &self.samples {
            Some(s) if s.grid() == grid => s.clone(),
            _ => {
                let f = self.eval.clone();
                FieldGrid::from_fn(*grid, move |x| f(x))
            }
        }
    }

    /// `c · f`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.eval.clone();
        Self {
            dim: self.dim,
            name: format!("{}*{c}", self.name),
            eval: Arc::new(move |x| c * f(x)),
            sup_norm: self.sup_norm.map(|v| v * c.abs()),
            l1_norm: self.l1_norm.map(|v| v * c.abs()),
            samples: self.samples.as_ref().map(|s| s.map(|v| c * v)),
            constant: self.constant.map(|v| c * v),
        }
    }

    /// `f + g`, with triangle-inequality norm bounds.
    pub fn add(&self, other: &CLFunction) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidDimension(other.dim));
        }
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let sum = |a: Option<f64>, b: Option<f64>| Some(a? + b?);
        Ok(Self {
            dim: self.dim,
            name: format!("{}+{}", self.name, other.name),
            eval: Arc::new(move |x| f(x) + g(x)),
            sup_norm: sum(self.sup_norm, other.sup_norm),
            l1_norm: sum(self.l1_norm, other.l1_norm),
            samples: None,
            constant: match (self.constant, other.constant) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
        })
    }

    /// `(‖f‖_∞, ‖f‖_1)` from samples if present, else declared.
    pub fn norms(&self) -> Result<(f64, f64)> {
        if let Some(s) = &self.samples {
            return Ok((s.sup_norm(), s.l1_norm()));
        }
        match (self.sup_norm, self.l1_norm) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::NotInCl(format!(
                "'{}' has neither grid samples nor declared norms",
                self.name
            ))),
        }
    }

    pub fn ensure_cl(&self) -> Result<()> {
        let (s, l) = self.norms()?;
        if !(s.is_finite() && l.is_finite()) {
            return Err(Error::NotInCl(format!(
                "'{}' has sup norm {s} and L1 norm {l}",
                self.name
            )));
        }
        Ok(())
    }
}

/// `‖f‖_CL = ‖f‖_∞ + ‖f‖_1`.
pub fn cl_norm(f: &CLFunction) -> Result<f64> {
    let (s, l) = f.norms()?;
    Ok(s + l)
}

/// `V(·, f) = f + G_0 * f` backed by a precomputed `G_0`.
#[derive(Debug, Clone)]
pub struct Potential {
    green: ResolventKernel,
}

impl Potential {
    pub fn new(kernel: &JumpKernel, grid: &GridSpec, tol: f64) -> Result<Self> {
        require_green_measure(kernel)?;
        Ok(Self {
            green: green_regular_series(kernel, grid, 0.0, tol)?,
        })
    }

    pub fn from_green(green: ResolventKernel) -> Result<Self> {
        if green.lambda != 0.0 {
            return Err(Error::InvalidParameter("potential needs the lambda = 0 kernel".into()));
        }
        Ok(Self { green })
    }

    pub fn green(&self) -> &ResolventKernel {
        &self.green
    }

    /// `G_0 * f` on the grid.
    pub fn regular_field(&self, f: &CLFunction) -> Result<FieldGrid> {
        f.ensure_cl()?;
        let grid = *self.green.grid();
        if f.dim() != grid.dim() {
            return Err(Error::GridMismatch("function dimension".into()));
        }
        self.green.convolve(&f.sample(&grid))
    }

    /// `V(x, f)` on every grid point.
    pub fn field(&self, f: &CLFunction) -> Result<FieldGrid> {
        let g = self.regular_field(f)?;
        g.zip_with(&f.sample(g.grid()), |a, b| a + b)
    }

    pub fn at(&self, f: &CLFunction, x: &[f64]) -> Result<f64> {
        if f.as_constant() == Some(0.0) {
            return Ok(0.0);
        }
        Ok(f.eval(x) + self.regular_field(f)?.interpolate(x)?)
    }
}

/// `V(x, f) = f(x) + (G_0 * f)(x)`.
pub fn potential(
    kernel: &JumpKernel,
    f: &CLFunction,
    x: &[f64],
    grid: &GridSpec,
    tol: f64,
) -> Result<f64> {
    require_green_measure(kernel)?;
    f.ensure_cl()?;
    Potential::new(kernel, grid, tol)?.at(f, x)
}

/// Upper bound on `|∫_T^∞ u(t, x) dt|` for `f ∈ CL`:
/// `‖f‖_∞ e^{-T} + ‖f‖_1 (2π)^{-d} ∫ e^{-T(1-|â|)} / (1-|â|) dk`.
pub fn potential_truncation_bound(kernel: &JumpKernel, f: &CLFunction, horizon: f64) -> Result<f64> {
    require_green_measure(kernel)?;
    let (sup, l1) = f.norms()?;
    if !kernel.is_isotropic() {
        return Err(Error::Unsupported("bound needs an isotropic kernel".into()));
    }
    let d = kernel.dim();
    let surface = match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => return Err(Error::Unsupported(format!("bound implemented for d <= 3, got {d}"))),
    } / (2.0 * PI).powi(d as i32);
    let integrand = |k: f64| {
        let a = 1.0 - kernel.gap_radial(k);
        let gap = 1.0 - a.abs();
        if gap <= 0.0 {
            return 0.0;
        }
        surface * k.powi(d as i32 - 1) * (-horizon * gap).exp() / gap
    };
    let mut points = vec![0.0, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 1.0];
    points.push(kernel.spectral_radius().max(2.0));
    let r = Quad::new(1e-15, 1e-8)
        .with_max_intervals(20_000)
        .integrate_points(integrand, &points)?;
    Ok(sup * (-horizon).exp() + l1 * r.value)
}

/// Coefficients `b_n = (a_n * f)(x)` giving `u(t, x) = Σ p_n(t) b_n`.
///
/// Exact terms come from the grid until the wrap guard trips; later terms
/// follow the fitted tail model, so `u(t, x)` is available for any `t`.
#[derive(Debug, Clone)]
pub struct PointSemigroup {
    coeffs: Vec<f64>,
    tail: Option<(TailProfile, f64, (f64, f64))>,
    constant: Option<f64>,
}

impl PointSemigroup {
    pub fn new(kernel: &JumpKernel, f: &CLFunction, x: &[f64], grid: &GridSpec) -> Result<Self> {
        Self::with_cap(kernel, f, x, grid, 4096)
    }

    pub fn with_cap(
        kernel: &JumpKernel,
        f: &CLFunction,
        x: &[f64],
        grid: &GridSpec,
        max_terms: usize,
    ) -> Result<Self> {
        if let Some(c) = f.as_constant() {
            return Ok(Self {
                coeffs: vec![c],
                tail: None,
                constant: Some(c),
            });
        }
        let dk = kernel.discretize(grid)?;
        let samples = f.sample(grid);
        let spec = dk.spectrum(&samples)?;
        let boundary: Vec<usize> = (0..grid.len()).filter(|&i| grid.on_boundary(i)).collect();
        let mut coeffs = vec![f.eval(x)];
        let mut current: Vec<Complex64> = spec.clone();
        let mut wrapped = false;
        for _ in 1..=max_terms {
            current
                .par_iter_mut()
                .zip(dk.symbol().par_iter())
                .for_each(|(c, &s)| *c *= s);
            let mut data = current.clone();
            dk.fft().inverse(&mut data);
            let field = FieldGrid::from_raw(*grid, data.iter().map(|c| c.re).collect());
            let peak = field.sup_norm();
            let edge = boundary
                .iter()
                .map(|&i| field.values()[i].abs())
                .fold(0.0, f64::max);
            if edge > WRAP_RATIO * peak {
                wrapped = true;
                break;
            }
            coeffs.push(field.interpolate(x)?);
        }
        let tail = match (kernel.tail_params(), wrapped || coeffs.len() > max_terms) {
            (Some(t), _) if coeffs.len() >= 3 => {
                let (shift, r2) = moment_shift(&samples, x, t);
                let profile = TailProfile::new(grid.dim(), t, shift);
                let m = coeffs.len() - 1;
                let c = profile.fit(m, r2, coeffs[m - 1], coeffs[m]);
                Some((profile, r2, c))
            }
            _ => None,
        };
        if tail.is_none() && wrapped {
            return Err(Error::UnknownTailExponent);
        }
        Ok(Self {
            coeffs,
            tail,
            constant: None,
        })
    }

    /// Number of exact coefficients `b_0..b_M`.
    pub fn exact_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// `b_n`, exact or from the tail model.
    pub fn coefficient(&self, n: usize) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        if n < self.coeffs.len() {
            return self.coeffs[n];
        }
        match &self.tail {
            Some((profile, r2, c)) => profile.model(n as f64, *r2, *c),
            None => 0.0,
        }
    }

    /// `u(t, x)`.
    pub fn value(&self, t: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        self.poisson_average(t, |n| self.coefficient(n))
    }

    /// `(L u)(t, x) = Σ p_n(t) (b_{n+1} - b_n)`.
    pub fn generator_value(&self, t: f64) -> f64 {
        if self.constant.is_some() {
            return 0.0;
        }
        self.poisson_average(t, |n| self.coefficient(n + 1) - self.coefficient(n))
    }

    /// `∫_0^T u(t, x) dt = Σ b_n P(Gamma(n+1) ≤ T)`.
    pub fn time_integral(&self, horizon: f64) -> f64 {
        if let Some(c) = self.constant {
            return c * horizon;
        }
        // Terms with P(n+1, T) ≈ 1 contribute b_n; the rest decay fast.
        let n_max = (horizon + 12.0 * horizon.sqrt() + 40.0) as usize;
        let terms: Vec<f64> = (0..=n_max)
            .map(|n| self.coefficient(n) * gamma_lr(n as f64 + 1.0, horizon))
            .collect();
        pairwise_sum(&terms)
    }

    /// Largest `t` for which `u(t, x)` is covered (infinite with a tail model).
    pub fn max_time(&self) -> f64 {
        if self.constant.is_some() || self.tail.is_some() {
            return f64::INFINITY;
        }
        let m = self.coeffs.len() as f64;
        // Poisson(t) mass beyond m below 1e-16 when t + 9 sqrt(t) + 10 < m.
        let s = ((81.0 + 4.0 * (m - 10.0)).max(0.0).sqrt() - 9.0) / 2.0;
        (s * s).max(0.0)
    }

    fn poisson_average<G: Fn(usize) -> f64>(&self, t: f64, g: G) -> f64 {
        if t <= 0.0 {
            return g(0);
        }
        let spread = 10.0 * t.sqrt() + 12.0;
        let lo = (t - spread).max(0.0).floor() as usize;
        let hi = (t + spread).ceil() as usize;
        let mut p = poisson_pmf(lo, t);
        let mut terms = Vec::with_capacity(hi - lo + 1);
        for n in lo..=hi {
            if n > lo {
                p *= t / n as f64;
            }
            terms.push(p * g(n));
        }
        pairwise_sum(&terms)
    }
}

/// Shift `s` matching the spread of `f` and squared distance from `x` to
/// the centre of mass of `f`.
fn moment_shift(samples: &FieldGrid, x: &[f64], tail: TailParams) -> (f64, f64) {
    let grid = samples.grid();
    let d = grid.dim();
    let mass = samples.integral();
    if mass.abs() < 1e-12 * samples.l1_norm().max(1e-300) {
        return (0.0, x.iter().map(|v| v * v).sum());
    }
    let mut first = vec![0.0; d];
    let mut second = 0.0;
    let hd = grid.cell_volume();
    for (i, &v) in samples.values().iter().enumerate() {
        let p = grid.point(i);
        for a in 0..d {
            first[a] += v * p[a] * hd;
        }
        second += v * p.iter().map(|c| c * c).sum::<f64>() * hd;
    }
    let mean: Vec<f64> = first.iter().map(|m| m / mass).collect();
    let var = (second / mass - mean.iter().map(|m| m * m).sum::<f64>()) / d as f64;
    let shift = if tail.alpha >= 2.0 && var > 0.0 {
        var / (2.0 * tail.scale)
    } else {
        0.0
    };
    let r2 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
    (shift, r2)
}
