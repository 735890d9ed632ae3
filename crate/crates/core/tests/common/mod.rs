//! Independent reference computations for the integration tests.
//!
//! Nothing here calls into the library's numerics: densities, quadrature and
//! searches are written out directly so they can serve as oracles.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Scalar Gaussian mixture given as `(weight, mean, variance)` triples.
pub type Mix1 = Vec<(f64, f64, f64)>;

pub fn pdf(m: &Mix1, x: f64) -> f64 {
    m.iter().map(|&(w, mu, v)| w * (-(x - mu).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()).sum()
}

pub fn pdf_deriv(m: &Mix1, x: f64) -> f64 {
    m.iter()
        .map(|&(w, mu, v)| -w * (x - mu) / v * (-(x - mu).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
        .sum()
}

/// Adds independent `N(0, s)` noise to every component.
pub fn plus_noise(m: &Mix1, s: f64) -> Mix1 {
    m.iter().map(|&(w, mu, v)| (w, mu, v + s)).collect()
}

pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let n = ((b - a) / h).round() as usize;
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

fn support(m: &Mix1) -> (f64, f64) {
    let lo = m.iter().map(|&(_, mu, v)| mu - 12.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
    let hi = m.iter().map(|&(_, mu, v)| mu + 12.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    (lo.min(-12.0), hi.max(12.0))
}

/// `−∫ f ln f` by the trapezoid rule with step 1e-3.
pub fn entropy_1d(m: &Mix1) -> f64 {
    let (a, b) = support(m);
    trapezoid(
        |x| {
            let f = pdf(m, x);
            if f > 0.0 {
                -f * f.ln()
            } else {
                0.0
            }
        },
        a,
        b,
        1e-3,
    )
}

/// `∫ (f′)² / f` by the trapezoid rule with step 1e-3.
pub fn fisher_1d(m: &Mix1) -> f64 {
    let (a, b) = support(m);
    trapezoid(
        |x| {
            let f = pdf(m, x);
            if f > 1e-300 {
                pdf_deriv(m, x).powi(2) / f
            } else {
                0.0
            }
        },
        a,
        b,
        1e-3,
    )
}

pub fn variance_1d(m: &Mix1) -> f64 {
    let mean: f64 = m.iter().map(|&(w, mu, _)| w * mu).sum();
    m.iter().map(|&(w, mu, v)| w * (v + (mu - mean).powi(2))).sum()
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of a unimodal function on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Uniform grid on `[lo, hi]` with the given step, then golden-section
/// refinement in the bracketing cells of the best grid point.
pub fn grid_max_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let n = ((hi - lo) / step).ceil() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=n {
        let x = (lo + i as f64 * step).min(hi);
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let refined = golden_max(&f, (best.0 - step).max(lo), (best.0 + step).min(hi));
    let ends = [(lo, f(lo)), (hi, f(hi))];
    [best, refined, ends[0], ends[1]].into_iter().fold((lo, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

/// Uniform grid on the feasible part of a rectangle, then repeated zooming
/// around the incumbent with ten times finer grids.
pub fn grid_max_2d(
    f: impl Fn(f64, f64) -> f64,
    feasible: impl Fn(f64, f64) -> bool,
    lo: [f64; 2],
    hi: [f64; 2],
    step: f64,
) -> ((f64, f64), f64) {
    let scan = |lo: [f64; 2], hi: [f64; 2], step: f64, best: &mut ((f64, f64), f64)| {
        let nx = ((hi[0] - lo[0]) / step).ceil() as usize;
        let ny = ((hi[1] - lo[1]) / step).ceil() as usize;
        for i in 0..=nx {
            let x = (lo[0] + i as f64 * step).min(hi[0]);
            for j in 0..=ny {
                let y = (lo[1] + j as f64 * step).min(hi[1]);
                if feasible(x, y) {
                    let v = f(x, y);
                    if v > best.1 {
                        *best = ((x, y), v);
                    }
                }
            }
        }
    };
    let mut best = ((lo[0], lo[1]), f64::NEG_INFINITY);
    scan(lo, hi, step, &mut best);
    let mut h = step;
    for _ in 0..7 {
        let (x, y) = best.0;
        let wlo = [(x - 2.0 * h).max(lo[0]), (y - 2.0 * h).max(lo[1])];
        let whi = [(x + 2.0 * h).min(hi[0]), (y + 2.0 * h).min(hi[1])];
        h /= 10.0;
        scan(wlo, whi, h, &mut best);
    }
    best
}

/// Scalar log-determinant helper: `ln x`, or `−∞` outside the domain.
pub fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}
