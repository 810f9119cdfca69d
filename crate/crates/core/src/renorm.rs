//! The time-changed process `Z(t) = X(D(t))`: the subordination formula
//! `v(t, x) = ∫ u(τ, x) ρ_t(τ) dτ`, Monte Carlo over `Z`, the
//! normalization `N(T) = ∫_0^T k`, renormalized Green measure curves and
//! the residual of `𝔻_t^{(k)} v = L v`.
//!
//! `Z` is simulated without a time grid: while `X` holds for `H_i`, the
//! subordinator advances by an independent draw of `S(H_i)`, and `Z`
//! occupies `X_i` for exactly that much real time.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{check_green_existence, CLFunction, GreenExistence, PointSemigroup, Potential};
use crate::grid::GridSpec;
use crate::kernels::JumpKernel;
use crate::quad::Quad;
use crate::simulate::{average_occupation, replicate, McEstimate, OccupationBins, OccupationHistogram};
use crate::subordinate::{
    check_admissible, check_h, gfd_apply, inverse_tail_bound, RhoDensity, SampledKernel, SubordinatorSpec,
};

/// Absolute tolerance for the neglected `τ`-tail in subordination integrals.
pub const TAIL_TOL: f64 = 1e-10;

/// `s0` used for the admissibility gate.
pub const ADMISSIBILITY_S0: f64 = 1.0;

fn sup_bound(f: &CLFunction, grid: &GridSpec) -> f64 {
    match f.declared_sup_norm() {
        Some(s) => s,
        None => f.sample(grid).sup_norm(),
    }
}

/// `v(t, x)` and `(L v)(t, x)` for one `(f, x)` through the subordination
/// formula.
#[derive(Debug, Clone)]
pub struct SubordinatedSolver {
    semigroup: PointSemigroup,
    rho: RhoDensity,
    spec: SubordinatorSpec,
    sup_f: f64,
    constant: Option<f64>,
    value_at_x: f64,
}

impl SubordinatedSolver {
    pub fn new(
        kernel: &JumpKernel,
        spec: &SubordinatorSpec,
        f: &CLFunction,
        x: &[f64],
        grid: &GridSpec,
    ) -> Result<Self> {
        if x.len() != kernel.dim() || f.dim() != kernel.dim() {
            return Err(Error::InvalidDimension(x.len()));
        }
        Ok(Self {
            semigroup: PointSemigroup::new(kernel, f, x, grid)?,
            rho: RhoDensity::new(spec),
            spec: spec.clone(),
            sup_f: sup_bound(f, grid),
            constant: f.as_constant(),
            value_at_x: f.eval(x),
        })
    }

    pub fn semigroup(&self) -> &PointSemigroup {
        &self.semigroup
    }

    fn scale(&self, t: f64) -> f64 {
        t.powf(self.spec.stable_index().unwrap_or(0.5))
    }

    /// Smallest doubling `τ` with `weight · P(D(t) > τ) < tol`.
    fn tau_max(&self, t: f64, weight: f64, tol: f64) -> Result<f64> {
        let mut tau = self.scale(t).max(1e-3);
        for _ in 0..200 {
            let bound = weight * inverse_tail_bound(&self.spec, t, tau);
            if bound < tol {
                return Ok(tau);
            }
            tau *= 2.0;
        }
        Err(Error::TailBound {
            bound: weight * inverse_tail_bound(&self.spec, t, tau),
            tol,
        })
    }

    fn breakpoints(&self, t: f64, tau_max: f64) -> Vec<f64> {
        let s = self.scale(t);
        let mut pts = vec![0.0];
        let mut b = s / 64.0;
        while b < tau_max {
            pts.push(b);
            b *= 2.0;
        }
        pts.push(tau_max);
        pts
    }

    fn integrate_against_rho<G: Fn(f64) -> f64>(&self, t: f64, g: G, weight: f64) -> Result<f64> {
        let tau_max = self.tau_max(t, weight, TAIL_TOL)?;
        let err = std::cell::RefCell::new(None);
        let integrand = |tau: f64| match self.rho.density(t, tau) {
            Ok(r) => g(tau) * r,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let v = Quad::new(1e-13, 1e-10)
            .with_max_intervals(8000)
            .integrate_points(integrand, &self.breakpoints(t, tau_max))?
            .value;
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// `v(t, x)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        if t == 0.0 {
            return Ok(self.value_at_x);
        }
        check_time(t)?;
        self.integrate_against_rho(t, |tau| self.semigroup.value(tau), self.sup_f)
    }

    /// `(L v)(t, x) = ∫ (L u)(τ, x) ρ_t(τ) dτ`.
    pub fn generator_value(&self, t: f64) -> Result<f64> {
        if self.constant.is_some() {
            return Ok(0.0);
        }
        if t == 0.0 {
            return Ok(self.semigroup.generator_value(0.0));
        }
        check_time(t)?;
        self.integrate_against_rho(t, |tau| self.semigroup.generator_value(tau), 2.0 * self.sup_f)
    }

    /// `∫_0^T v(s, x) ds = ∫ u(τ, x) R_T(τ) dτ` with `R_T(τ) = ∫_0^T ρ_s(τ) ds`.
    pub fn time_integral(&self, horizon: f64) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c * horizon);
        }
        check_time(horizon)?;
        // ∫_{τ>τmax} R_T ≤ T · P(D(T) > τmax).
        let weight = self.sup_f * horizon;
        let tol = TAIL_TOL * self.spec.k_primitive(horizon).max(1.0);
        let tau_max = self.tau_max(horizon, weight, tol)?;
        let err = std::cell::RefCell::new(None);
        let integrand = |tau: f64| match self.rho.time_integral(horizon, tau) {
            Ok(r) => self.semigroup.value(tau) * r,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let mut pts = vec![0.0];
        let mut b = 1e-3;
        while b < tau_max {
            pts.push(b);
            b *= 2.0;
        }
        pts.push(tau_max);
        let v = Quad::new(1e-13, 1e-10)
            .with_max_intervals(8000)
            .integrate_points(integrand, &pts)?
            .value;
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time must be positive, got {t}")))
    }
}

/// `v(t, x) = ∫_0^∞ u(τ, x) ρ_t(τ) dτ`.
pub fn subordinated_solution(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    f: &CLFunction,
    x: &[f64],
    t: f64,
    grid: &GridSpec,
) -> Result<f64> {
    SubordinatedSolver::new(kernel, spec, f, x, grid)?.value(t)
}

/// Walk `Z` on `[0, horizon]`, calling `visit(position, duration)` for every
/// holding interval of `X` (durations in real time).
pub(crate) fn walk_time_changed<R: Rng + ?Sized, V: FnMut(&[f64], f64)>(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    x: &[f64],
    horizon: f64,
    rng: &mut R,
    mut visit: V,
) -> Result<()> {
    let mut pos = x.to_vec();
    let mut jump = vec![0.0; x.len()];
    let mut s = 0.0;
    loop {
        let hold: f64 = rng.sample(Exp1);
        let ds = spec.sample_increment(hold, rng)?;
        let end = s + ds;
        if end >= horizon {
            visit(&pos, horizon - s);
            return Ok(());
        }
        visit(&pos, ds);
        s = end;
        kernel.sample_jump(rng, &mut jump)?;
        for (p, j) in pos.iter_mut().zip(&jump) {
            *p += j;
        }
    }
}

/// `Z(t)` for one replica.
pub(crate) fn time_changed_position<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    x: &[f64],
    t: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut pos = x.to_vec();
    let mut jump = vec![0.0; x.len()];
    let mut s = 0.0;
    loop {
        let hold: f64 = rng.sample(Exp1);
        s += spec.sample_increment(hold, rng)?;
        if s >= t {
            return Ok(pos);
        }
        kernel.sample_jump(rng, &mut jump)?;
        for (p, j) in pos.iter_mut().zip(&jump) {
            *p += j;
        }
    }
}

/// `E^x[f(Z(t))]` from `n` replicas.
pub fn mc_time_changed_expectation(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    f: &CLFunction,
    x: &[f64],
    t: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
    }
    if x.len() != kernel.dim() {
        return Err(Error::InvalidDimension(x.len()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    if let Some(c) = f.as_constant() {
        return Ok(McEstimate::from_samples(&vec![c; n], seed));
    }
    if t == 0.0 {
        return Ok(McEstimate::from_samples(&vec![f.eval(x); n], seed));
    }
    if !kernel.has_sampler() {
        return Err(Error::NoJumpSampler(kernel.name()));
    }
    let samples = replicate(n, seed, |rng| Ok(f.eval(&time_changed_position(kernel, spec, x, t, rng)?)))?;
    Ok(McEstimate::from_samples(&samples, seed))
}

/// `N(T) = ∫_0^T k(s) ds`.
pub fn normalization_n(spec: &SubordinatorSpec, horizon: f64) -> f64 {
    spec.k_primitive(horizon)
}

/// Errors unless the base Green measure exists and `spec` passes (H) and
/// admissibility.
pub fn require_renormalizable(kernel: &JumpKernel, spec: &SubordinatorSpec) -> Result<()> {
    match check_green_existence(kernel) {
        GreenExistence::Exists => {}
        GreenExistence::Unknown => return Err(Error::UnknownTailExponent),
        GreenExistence::Divergent => {
            let t = kernel.tail_params().expect("divergent implies known tail");
            return Err(Error::DivergentGreenMeasure {
                dim: kernel.dim(),
                alpha: t.alpha,
            });
        }
    }
    let h = check_h(spec);
    if !h.passed {
        let failed: Vec<&str> = h
            .limits
            .iter()
            .filter(|l| !l.passed)
            .map(|l| l.name.as_str())
            .collect();
        return Err(Error::Inadmissible(format!(
            "{spec:?} fails assumption (H): {}{}",
            failed.join(", "),
            if h.completely_monotone { "" } else { " (Lévy density not completely monotone)" }
        )));
    }
    let a = check_admissible(spec, ADMISSIBILITY_S0)?;
    if !a.passed {
        return Err(Error::Inadmissible(format!(
            "{spec:?} fails admissibility (A1 {}, A2 {})",
            a.a1_passed, a.a2_passed
        )));
    }
    Ok(())
}

/// `T ↦ (1/N(T)) ∫_0^T v(s, x) ds` against the target `V(x, f)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenormCurve {
    pub t_grid: Vec<f64>,
    pub n_values: Vec<f64>,
    /// Unnormalized `∫_0^T v(s, x) ds`.
    pub integrals: Vec<f64>,
    pub values: Vec<f64>,
    pub target: f64,
}

impl RenormCurve {
    /// `|value / target - 1|` (absolute difference when the target is 0).
    pub fn rel_gaps(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| {
                if self.target == 0.0 {
                    v.abs()
                } else {
                    (v / self.target - 1.0).abs()
                }
            })
            .collect()
    }

    pub fn final_gap(&self) -> f64 {
        *self.rel_gaps().last().unwrap_or(&f64::NAN)
    }

    /// Gaps never increase along the grid.
    pub fn gap_nonincreasing(&self) -> bool {
        self.rel_gaps().windows(2).all(|w| w[1] <= w[0])
    }

    /// Growth factors `I(T_{j+1}) / I(T_j)` of the unnormalized integral.
    pub fn growth_factors(&self) -> Vec<f64> {
        self.integrals.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// CSV columns `T, N, value, target, rel_gap, integral`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["T", "N", "value", "target", "rel_gap", "integral"])?;
        let gaps = self.rel_gaps();
        for j in 0..self.t_grid.len() {
            out.write_record(&[
                self.t_grid[j].to_string(),
                self.n_values[j].to_string(),
                self.values[j].to_string(),
                self.target.to_string(),
                gaps[j].to_string(),
                self.integrals[j].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The renormalized potential curve over `t_grid` (strictly increasing).
pub fn renormalized_potential_curve(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    f: &CLFunction,
    x: &[f64],
    t_grid: &[f64],
    grid: &GridSpec,
    tol: f64,
) -> Result<RenormCurve> {
    require_renormalizable(kernel, spec)?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("T grid must be positive and strictly increasing".into()));
    }
    let target = if f.as_constant() == Some(0.0) {
        0.0
    } else {
        Potential::new(kernel, grid, tol)?.at(f, x)?
    };
    let solver = SubordinatedSolver::new(kernel, spec, f, x, grid)?;
    let mut integrals = Vec::with_capacity(t_grid.len());
    let mut values = Vec::with_capacity(t_grid.len());
    let mut n_values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let n = normalization_n(spec, t);
        let i = solver.time_integral(t)?;
        n_values.push(n);
        integrals.push(i);
        values.push(i / n);
    }
    Ok(RenormCurve {
        t_grid: t_grid.to_vec(),
        n_values,
        integrals,
        values,
        target,
    })
}

/// Occupation of `Z` on `[0, horizon]` averaged over `n` replicas and
/// divided by `N(horizon)`.
#[allow(clippy::too_many_arguments)]
pub fn renormalized_green_histogram(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    x: &[f64],
    horizon: f64,
    bins: &OccupationBins,
    n: usize,
    seed: u64,
) -> Result<OccupationHistogram> {
    require_renormalizable(kernel, spec)?;
    check_time(horizon)?;
    if x.len() != kernel.dim() {
        return Err(Error::InvalidDimension(x.len()));
    }
    if !bins.contains(x) {
        return Err(Error::PointOutsideBins(x.to_vec()));
    }
    if !kernel.has_sampler() {
        return Err(Error::NoJumpSampler(kernel.name()));
    }
    let hist = average_occupation(bins, n, seed, horizon, |rng, sink| {
        walk_time_changed(kernel, spec, x, horizon, rng, |p, d| sink(p, d))
    })?;
    Ok(hist.normalized(normalization_n(spec, horizon)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkeResidual {
    pub step: f64,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Grid times below this are excluded from the maximum.
    pub skip_before: f64,
    pub max_abs: f64,
}

/// `max_{t ≥ skip} |𝔻_t^{(k)} v(t, x) - (L v)(t, x)|` on `t_j = j · step`,
/// `j = 0..=n`. `v` comes from the subordination formula and the
/// derivative from product integration with the analytic primitives of `k`.
#[allow(clippy::too_many_arguments)]
pub fn fke_residual(
    kernel: &JumpKernel,
    spec: &SubordinatorSpec,
    f: &CLFunction,
    x: &[f64],
    step: f64,
    n: usize,
    skip_before: f64,
    grid: &GridSpec,
) -> Result<FkeResidual> {
    let solver = SubordinatedSolver::new(kernel, spec, f, x, grid)?;
    let times: Vec<f64> = (0..=n).map(|j| j as f64 * step).collect();
    let v: Vec<f64> = times.iter().map(|&t| solver.value(t)).collect::<Result<_>>()?;
    let rhs: Vec<f64> = times
        .iter()
        .map(|&t| solver.generator_value(t))
        .collect::<Result<_>>()?;
    let k = SampledKernel::from_subordinator(spec, step, n)?;
    let lhs = gfd_apply(&k, &v)?;
    let max_abs = times
        .iter()
        .enumerate()
        .filter(|(j, &t)| *j > 0 && t >= skip_before)
        .map(|(j, _)| (lhs[j] - rhs[j]).abs())
        .fold(0.0, f64::max);
    Ok(FkeResidual {
        step,
        times,
        lhs,
        rhs,
        skip_before,
        max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::evolve_semigroup;
    use crate::grid::FieldGrid;
    use std::f64::consts::PI;

    fn half() -> SubordinatorSpec {
        SubordinatorSpec::stable(0.5).unwrap()
    }

    fn g1() -> GridSpec {
        GridSpec::new(1, 512, 64.0).unwrap()
    }

    #[test]
    fn normalization_values() {
        assert_eq!(normalization_n(&half(), 0.0), 0.0);
        assert!((normalization_n(&half(), PI) - 2.0).abs() < 1e-13);
        let s = half();
        for q in [1.001, 1.01] {
            let r = normalization_n(&s, 1e8 * q) / normalization_n(&s, 1e8);
            assert!((r - q.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn subordination_trivial_cases() {
        let k = JumpKernel::gaussian(1).unwrap();
        let one = CLFunction::constant(1, 1.0);
        assert_eq!(subordinated_solution(&k, &half(), &one, &[0.0], 2.0, &g1()).unwrap(), 1.0);
        let f = CLFunction::kernel_density(&k);
        // E[D(t)] = 2√(t/π) at α = 1/2, so v(t) - f(x) = O(√t).
        let v = subordinated_solution(&k, &half(), &f, &[0.0], 1e-6, &g1()).unwrap();
        assert!((v / f.eval(&[0.0]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn subordination_against_direct_grid_semigroup() {
        // Oracle: quadrature of the grid semigroup against the closed-form ρ.
        let k = JumpKernel::gaussian(1).unwrap();
        let f = CLFunction::gaussian_bump(vec![0.0], 1.0, 1.0).unwrap();
        let g = g1();
        let fs = f.sample(&g);
        let t = 0.7;
        let rho = RhoDensity::new(&half());
        let taus: Vec<f64> = (0..=400).map(|j| j as f64 * 0.025).collect();
        let vals: Vec<f64> = taus
            .iter()
            .map(|&tau| {
                let u: FieldGrid = evolve_semigroup(&k, &fs, tau, 1e-14).unwrap();
                u.interpolate(&[0.25]).unwrap() * rho.density(t, tau).unwrap()
            })
            .collect();
        // Simpson on [0, 10].
        let h = 0.025;
        let mut oracle = vals[0] + vals[400];
        for j in 1..400 {
            oracle += if j % 2 == 1 { 4.0 } else { 2.0 } * vals[j];
        }
        oracle *= h / 3.0;
        let v = subordinated_solution(&k, &half(), &f, &[0.25], t, &g).unwrap();
        assert!((v - oracle).abs() < 1e-7, "{v} vs {oracle}");
    }

    #[test]
    fn mc_time_changed_trivial_and_agreement() {
        let k = JumpKernel::gaussian(1).unwrap();
        let f = CLFunction::kernel_density(&k);
        let s = half();
        assert_eq!(mc_time_changed_expectation(&k, &s, &f, &[0.0], 0.0, 4, 1).unwrap().mean, f.eval(&[0.0]));
        assert_eq!(
            mc_time_changed_expectation(&k, &s, &CLFunction::constant(1, 3.0), &[0.0], 1.0, 4, 1).unwrap().mean,
            3.0
        );
        let solver = SubordinatedSolver::new(&k, &s, &f, &[0.0], &g1()).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let e = mc_time_changed_expectation(&k, &s, &f, &[0.0], t, 100_000, 17).unwrap();
            let v = solver.value(t).unwrap();
            assert!((e.mean - v).abs() < 3.0 * e.stderr, "t={t}: {} ± {} vs {v}", e.mean, e.stderr);
        }
    }

    #[test]
    fn fubini_time_integral_matches_nested_quadrature() {
        let k = JumpKernel::gaussian(1).unwrap();
        let f = CLFunction::kernel_density(&k);
        let solver = SubordinatedSolver::new(&k, &half(), &f, &[0.0], &g1()).unwrap();
        let horizon: f64 = 3.0;
        // v(s) ~ f(x) - c √s near 0: integrate in w = √s.
        let nested = Quad::new(1e-12, 1e-9)
            .integrate(|w| 2.0 * w * solver.value(w * w).unwrap(), 0.0, horizon.sqrt())
            .unwrap()
            .value;
        let fubini = solver.time_integral(horizon).unwrap();
        assert!((fubini / nested - 1.0).abs() < 1e-7, "{fubini} vs {nested}");
    }

    #[test]
    fn renorm_gates() {
        let g3 = GridSpec::new(3, 32, 16.0).unwrap();
        let k1 = JumpKernel::gaussian(1).unwrap();
        let f1 = CLFunction::kernel_density(&k1);
        assert!(matches!(
            renormalized_potential_curve(&k1, &half(), &f1, &[0.0], &[10.0], &g1(), 1e-8),
            Err(Error::DivergentGreenMeasure { .. })
        ));
        let k3 = JumpKernel::gaussian(3).unwrap();
        let f3 = CLFunction::kernel_density(&k3);
        let identity = SubordinatorSpec::custom("identity", |_| 0.0, |_| 0.0, |_| 1.0);
        assert!(matches!(
            renormalized_potential_curve(&k3, &identity, &f3, &[0.0; 3], &[10.0], &g3, 1e-8),
            Err(Error::Inadmissible(_))
        ));
        let gamma = SubordinatorSpec::gamma(1.0, 1.0).unwrap();
        assert!(matches!(
            renormalized_potential_curve(&k3, &gamma, &f3, &[0.0; 3], &[10.0], &g3, 1e-8),
            Err(Error::Inadmissible(_))
        ));
        let zero = renormalized_potential_curve(&k3, &half(), &CLFunction::zero(3), &[0.0; 3], &[1.0, 2.0], &g3, 1e-8)
            .unwrap();
        assert_eq!(zero.values, vec![0.0, 0.0]);
        assert_eq!(zero.target, 0.0);
    }

    #[test]
    fn renorm_curve_approaches_potential() {
        let g3 = GridSpec::new(3, 32, 16.0).unwrap();
        let k = JumpKernel::gaussian(3).unwrap();
        let f = CLFunction::kernel_density(&k);
        let c = renormalized_potential_curve(&k, &half(), &f, &[0.0; 3], &[1e2, 1e3, 1e4], &g3, 1e-10).unwrap();
        assert!(c.gap_nonincreasing(), "{:?}", c.rel_gaps());
        assert!(c.final_gap() < 0.15);
        assert!(c.n_values.windows(2).all(|w| w[1] > w[0]));
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("T,N,value,target,rel_gap,integral\n"));
    }

    #[test]
    fn time_changed_histogram_mass_and_determinism() {
        let k = JumpKernel::gaussian(3).unwrap();
        let bins = OccupationBins::cube(3, 3.0, 3).unwrap();
        let s = half();
        let a = renormalized_green_histogram(&k, &s, &[0.0; 3], 50.0, &bins, 500, 4).unwrap();
        let b = renormalized_green_histogram(&k, &s, &[0.0; 3], 50.0, &bins, 500, 4).unwrap();
        assert_eq!(a, b);
        let n = normalization_n(&s, 50.0);
        assert!(a.total_mass() <= 50.0 / n + 1e-12);
        assert!((a.total_mass() + a.escaped - 50.0 / n).abs() < 1e-10);
    }

    #[test]
    fn fke_residual_constant_and_convergence() {
        let k = JumpKernel::gaussian(1).unwrap();
        let s = half();
        let c = fke_residual(&k, &s, &CLFunction::constant(1, 2.0), &[0.0], 0.01, 50, 0.1, &g1()).unwrap();
        assert!(c.max_abs < 1e-6);
        let f = CLFunction::kernel_density(&k);
        let coarse = fke_residual(&k, &s, &f, &[0.0], 0.02, 50, 0.1, &g1()).unwrap();
        let fine = fke_residual(&k, &s, &f, &[0.0], 0.01, 100, 0.1, &g1()).unwrap();
        assert!(coarse.max_abs / fine.max_abs >= 1.8, "{} {}", coarse.max_abs, fine.max_abs);
    }
}
