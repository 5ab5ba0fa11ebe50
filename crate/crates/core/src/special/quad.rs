use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_subdivisions: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// `∫_lo^hi f` to relative tolerance `rel_tol`. `hi` may be `+inf`.
pub fn quad_adaptive<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    let opts = QuadOptions {
        rel_tol,
        ..QuadOptions::default()
    };
    integrate(f, lo, hi, &opts).map(|q| q.value)
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature.
///
/// An infinite upper limit is mapped to `[0, 1)` by `x = lo + t/(1-t)`.
/// On failure the returned [`Error::Numerical`] carries the best estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, opts: &QuadOptions) -> Result<Quadrature> {
    if lo.is_nan() || hi.is_nan() || lo.is_infinite() {
        return Err(Error::invalid(format!("bad integration limits [{lo}, {hi}]")));
    }
    if hi < lo {
        return Err(Error::invalid(format!("integration limits reversed: [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if hi.is_infinite() {
        let g = |t: f64| {
            let s = 1.0 - t;
            let v = f(lo + t / s);
            if v == 0.0 {
                0.0
            } else {
                v / (s * s)
            }
        };
        adapt(&g, 0.0, 1.0, opts)
    } else {
        adapt(&f, lo, hi, opts)
    }
}

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
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adapt<F: Fn(f64) -> f64 + ?Sized>(f: &F, lo: f64, hi: f64, opts: &QuadOptions) -> Result<Quadrature> {
    let mut evaluations = 0;
    let first = kronrod(f, lo, hi, &mut evaluations);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    // segments too narrow to split further, their error is frozen
    let mut frozen_error = 0.0;
    let mut frozen: Vec<Segment> = Vec::new();

    for _ in 0..opts.max_subdivisions {
        let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= tol || error <= 50.0 * f64::EPSILON * value.abs() {
            break;
        }
        let seg = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (seg.lo + seg.hi);
        if mid <= seg.lo || mid >= seg.hi || (seg.hi - seg.lo) <= 4.0 * f64::EPSILON * mid.abs() {
            frozen_error += seg.error;
            frozen.push(seg);
            value = heap.iter().chain(frozen.iter()).map(|s| s.value).sum::<f64>();
            error = heap.iter().map(|s| s.error).sum::<f64>() + frozen_error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = kronrod(f, seg.lo, mid, &mut evaluations);
        let right = kronrod(f, mid, seg.hi, &mut evaluations);
        value += left.value + right.value - seg.value;
        error += left.error + right.error - seg.error;
        heap.push(left);
        heap.push(right);
        if heap.len() % 64 == 0 {
            // incremental updates drift, resum now and then
            value = heap.iter().chain(frozen.iter()).map(|s| s.value).sum::<f64>();
            error = heap.iter().map(|s| s.error).sum::<f64>() + frozen_error;
        }
    }
    value = heap.iter().chain(frozen.iter()).map(|s| s.value).sum::<f64>();
    error = heap.iter().map(|s| s.error).sum::<f64>() + frozen_error;

    if !value.is_finite() {
        return Err(Error::Numerical {
            what: "quadrature produced a non-finite value".into(),
            estimate: value,
            error_bound: error,
        });
    }
    let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
    if error <= tol || error <= 50.0 * f64::EPSILON * value.abs() {
        Ok(Quadrature {
            value,
            error,
            evaluations,
        })
    } else {
        Err(Error::Numerical {
            what: "adaptive quadrature did not converge".into(),
            estimate: value,
            error_bound: error,
        })
    }
}

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64 + ?Sized>(f: &F, lo: f64, hi: f64, evaluations: &mut usize) -> Segment {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = h * x;
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    *evaluations += 15;
    let value = k * h;
    let error = ((k - g) * h).abs();
    Segment { lo, hi, value, error }
}
