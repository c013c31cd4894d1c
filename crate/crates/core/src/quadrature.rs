//! Numerical integration.
//!
//! Globally adaptive Gauss–Kronrod (7/15) on finite intervals with optional
//! interior breakpoints, a fixed 5-point Gauss–Legendre rule for cell-wise
//! accumulation on grids, and Gauss–Hermite nodes for weight `e^{-t^2}`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];

const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Stopping rule: the estimated error must fall below `max(abs, rel * |I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn absolute(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }

    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
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
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

const MAX_SEGMENTS: usize = 4000;

/// Adaptive integral of `f` over `[lo, hi]`, with the interval first split at
/// every breakpoint that falls strictly inside it. `lo > hi` integrates with
/// the reversed orientation.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    if lo == hi {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if hi < lo {
        let r = integrate(f, hi, lo, breakpoints, tol)?;
        return Ok(Integral {
            value: -r.value,
            ..r
        });
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "integration bounds must be finite, got [{lo}, {hi}]"
        )));
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let mut left = lo;
    for &c in cuts.iter().chain(std::iter::once(&hi)) {
        heap.push(kronrod15(&f, left, c));
        left = c;
    }
    let mut evaluations = 15 * heap.len();

    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= tol.abs.max(tol.rel * value.abs()) || error == 0.0 {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Accuracy(format!(
                "adaptive quadrature on [{lo}, {hi}] stopped at error {error:e} \
                 (target abs {:e}, rel {:e})",
                tol.abs, tol.rel
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval exhausted at machine resolution; accept its contribution.
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        heap.push(kronrod15(&f, worst.lo, mid));
        heap.push(kronrod15(&f, mid, worst.hi));
        evaluations += 30;
    }
}

/// Five-point Gauss–Legendre rule on `[lo, hi]` (exact for degree 9).
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    GL5_NODES
        .iter()
        .zip(GL5_WEIGHTS.iter())
        .map(|(&x, &w)| w * f(center + half * x))
        .sum::<f64>()
        * half
}

/// Orthonormal Hermite polynomials `p_0..p_{m}` at `t` (weight `e^{-t^2}`).
fn orthonormal_hermite(m: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(m + 1);
    p.push(std::f64::consts::PI.powf(-0.25));
    let mut prev = 0.0;
    for j in 0..m {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * t * p[j] - (jf / (jf + 1.0)).sqrt() * prev;
        prev = p[j];
        p.push(next);
    }
    p
}

/// Nodes and weights of the `m`-point Gauss–Hermite rule for weight `e^{-t^2}`.
///
/// Starting nodes come from the Jacobi matrix (Golub–Welsch); each is then
/// polished by Newton's method on `p_m` and weighted by the Christoffel
/// function `1/Σ p_j(t)^2`.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "Gauss–Hermite rule needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(m, m);
    for i in 1..m {
        let beta = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = beta;
        jacobi[(i - 1, i)] = beta;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let weights = nodes
        .iter_mut()
        .map(|t| {
            for _ in 0..3 {
                let p = orthonormal_hermite(m, *t);
                let derivative = (2.0 * m as f64).sqrt() * p[m - 1];
                if derivative != 0.0 {
                    *t -= p[m] / derivative;
                }
            }
            let p = orthonormal_hermite(m, *t);
            1.0 / p[..m].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (nodes, weights)
}

/// Composite Simpson rule on uniformly spaced samples. An even sample count
/// closes with a trapezoid on the last interval.
pub fn simpson_uniform(values: &[f64], spacing: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let (body, tail) = if n % 2 == 1 {
        (n, 0.0)
    } else {
        (n - 1, 0.5 * spacing * (values[n - 2] + values[n - 1]))
    };
    if body < 3 {
        return tail;
    }
    let mut sum = values[0] + values[body - 1];
    for (i, v) in values.iter().enumerate().take(body - 1).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * spacing / 3.0 + tail
}
