//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15) with a
//! priority queue over subintervals, semi-infinite ranges via the map
//! `x = a + s / (1 - s)`, fixed Gauss–Legendre rules and pairwise summation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Sum with O(log n) error growth and a fixed association order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let err = ((kron - gauss) * h).abs();
    (value, err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.a.partial_cmp(&self.a).unwrap_or(Ordering::Equal))
    }
}

/// Adaptive integrator settings.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quad {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

impl Quad {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    /// Integrate over `[a, b]`, erroring if the tolerance is not met.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<QuadResult> {
        self.integrate_points(f, &[a, b])
    }

    /// Integrate over consecutive breakpoints `points[0] < ... < points[n]`.
    pub fn integrate_points<F: Fn(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<QuadResult> {
        let r = self.integrate_points_unchecked(&f, points);
        if r.error > self.abs_tol.max(self.rel_tol * r.value.abs()) || !r.value.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                estimate: r.value,
                error: r.error,
            });
        }
        Ok(r)
    }

    /// Same as [`Quad::integrate_points`] but returns the best estimate even
    /// when the tolerance is not reached.
    pub fn integrate_points_unchecked<F: Fn(f64) -> f64>(&self, f: &F, points: &[f64]) -> QuadResult {
        let mut heap = BinaryHeap::new();
        for w in points.windows(2) {
            if w[1] > w[0] {
                let (value, error) = gk15(f, w[0], w[1]);
                heap.push(Segment {
                    a: w[0],
                    b: w[1],
                    value,
                    error,
                });
            }
        }
        if heap.is_empty() {
            return QuadResult {
                value: 0.0,
                error: 0.0,
                intervals: 0,
            };
        }
        loop {
            let (total, err) = totals(&heap);
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if err <= target || heap.len() >= self.max_intervals || !total.is_finite() {
                break;
            }
            let worst = heap.pop().expect("nonempty heap");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Interval cannot be split further in floating point.
                heap.push(Segment { error: 0.0, ..worst });
                continue;
            }
            let (v1, e1) = gk15(f, worst.a, mid);
            let (v2, e2) = gk15(f, mid, worst.b);
            heap.push(Segment {
                a: worst.a,
                b: mid,
                value: v1,
                error: e1,
            });
            heap.push(Segment {
                a: mid,
                b: worst.b,
                value: v2,
                error: e2,
            });
        }
        let (value, error) = totals(&heap);
        QuadResult {
            value,
            error,
            intervals: heap.len(),
        }
    }

    /// Integrate over `[a, ∞)` through `x = a + s / (1 - s)`, `s ∈ [0, 1)`.
    pub fn integrate_to_infinity<F: Fn(f64) -> f64>(&self, f: F, a: f64) -> Result<QuadResult> {
        let g = |s: f64| {
            let one_minus = 1.0 - s;
            if one_minus <= 0.0 {
                return 0.0;
            }
            let x = a + s / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        self.integrate_points(g, &[0.0, 0.5, 0.9, 0.99, 1.0])
    }
}

fn totals(heap: &BinaryHeap<Segment>) -> (f64, f64) {
    // Sum in left-endpoint order so the result does not depend on heap layout.
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap_or(Ordering::Equal));
    let values: Vec<f64> = segs.iter().map(|s| s.value).collect();
    let errors: Vec<f64> = segs.iter().map(|s| s.error).collect();
    (pairwise_sum(&values), pairwise_sum(&errors))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
