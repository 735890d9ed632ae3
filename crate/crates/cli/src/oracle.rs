//! Brute-force scalar references for the solver self-test.
//!
//! These search the feasible set directly and share no code with the solvers.

use extremal_core::solvers::{BcProblem, SecProblem};

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn scalar(m: &extremal_core::linalg::PsdMatrix) -> f64 {
    m.as_matrix()[(0, 0)]
}

/// Grid over the triangle `b₁ + b₂ ≤ s` followed by repeated zooming.
pub fn bc_value(pr: &BcProblem) -> f64 {
    let (k1, k2, s, m1, m2) = (scalar(&pr.k1), scalar(&pr.k2), scalar(&pr.s), pr.mu1, pr.mu2);
    let f = |b1: f64, b2: f64| {
        let t = |k: f64| 0.5 * ln((s + k) / (b1 + b2 + k));
        t(k1).min(t(k2)) + m2 * 0.5 * ln((b1 + b2 + k2) / (b2 + k2)) + m1 * 0.5 * ln((b2 + k1) / k1)
    };
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    let scan = |lo: [f64; 2], hi: [f64; 2], h: f64, best: &mut (f64, f64, f64)| {
        let n = [((hi[0] - lo[0]) / h).ceil() as usize, ((hi[1] - lo[1]) / h).ceil() as usize];
        for i in 0..=n[0] {
            let b1 = (lo[0] + i as f64 * h).min(hi[0]);
            for j in 0..=n[1] {
                let b2 = (lo[1] + j as f64 * h).min(hi[1]);
                if b1 + b2 <= s {
                    let v = f(b1, b2);
                    if v > best.2 {
                        *best = (b1, b2, v);
                    }
                }
            }
        }
    };
    let mut h = s / 200.0;
    scan([0.0, 0.0], [s, s], h, &mut best);
    for _ in 0..8 {
        let lo = [(best.0 - 2.0 * h).max(0.0), (best.1 - 2.0 * h).max(0.0)];
        let hi = [(best.0 + 2.0 * h).min(s), (best.1 + 2.0 * h).min(s)];
        h /= 10.0;
        scan(lo, hi, h, &mut best);
    }
    best.2
}

/// One-dimensional search over `b₂`; the objective grows with `b₁`, which
/// therefore sits on its lower bound.
pub fn sec_value(pr: &SecProblem) -> f64 {
    let (k, ky, kz, d, mu) = (scalar(&pr.k), scalar(&pr.ky), scalar(&pr.kz), scalar(&pr.d), pr.mu);
    let p0 = 1.0 / k + 1.0 / ky;
    let t = 1.0 / d - p0;
    let ln2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let f = |b2: f64| {
        let b1 = (t - b2).max(0.0);
        let p1 = p0 + b1 + b2;
        mu * 0.5 * ln(p1 / p0) + 0.5 * (ln(p1) - ln2pie) - 0.5 * ln(p0 + b2) + 0.5 * ln(1.0 / k + 1.0 / kz + b2)
    };
    let hi = t.max(0.0) + 50.0;
    let mut h = hi / 5000.0;
    let (mut lo_b, mut hi_b) = (0.0, hi);
    let mut best = (0.0, f(0.0));
    for _ in 0..8 {
        let n = ((hi_b - lo_b) / h).ceil() as usize;
        for i in 0..=n {
            let b = (lo_b + i as f64 * h).min(hi_b);
            let v = f(b);
            if v < best.1 {
                best = (b, v);
            }
        }
        lo_b = (best.0 - 2.0 * h).max(0.0);
        hi_b = (best.0 + 2.0 * h).min(hi);
        h /= 10.0;
    }
    best.1
}
