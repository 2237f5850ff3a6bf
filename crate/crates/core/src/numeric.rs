//! Scalar numerics: bracketed root finding, adaptive Gauss–Kronrod quadrature,
//! golden-section maximization and the handful of distribution functions the
//! closed-form constants need.
//!
//! Quantiles start from the statrs inverse CDF and are then polished by root
//! finding on the CDF itself, which is evaluated through the regularized
//! incomplete gamma/beta functions and is accurate to a few ulps.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{PosiError, Result};

/// Plain left-to-right inner product. Everything that compares t-ratios
/// across code paths goes through this one function.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    let guess = Normal::standard().inverse_cdf(p);
    // One Newton step; erfc_inv is already close to full precision.
    let step = (norm_cdf(guess) - p) / norm_pdf(guess);
    if step.is_finite() {
        guess - step
    } else {
        guess
    }
}

/// `P[|N(0,1)| <= x]`, computed without cancellation for large `x`.
pub fn two_sided_normal_coverage(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    1.0 - libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Upper quantile of χ²_k: the `x` with `P[χ²_k <= x] = p`.
pub fn chi_squared_quantile(k: f64, p: f64) -> f64 {
    let dist = ChiSquared::new(k).expect("positive degrees of freedom");
    let guess = dist.inverse_cdf(p);
    polish_quantile(|x| dist.cdf(x), p, guess, 0.0)
}

/// Quantile of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_quantile(d1: f64, d2: f64, p: f64) -> f64 {
    let dist = FisherSnedecor::new(d1, d2).expect("positive degrees of freedom");
    let guess = dist.inverse_cdf(p);
    polish_quantile(|x| dist.cdf(x), p, guess, 0.0)
}

fn polish_quantile(cdf: impl Fn(f64) -> f64, p: f64, guess: f64, lower: f64) -> f64 {
    let g = if guess.is_finite() && guess > lower { guess } else { 1.0 };
    let mut lo = lower.max(g * 0.5);
    let mut hi = g * 1.5 + 1e-3;
    while cdf(lo) > p && lo > lower {
        lo = lower + (lo - lower) * 0.5;
        if lo - lower < 1e-300 {
            lo = lower;
            break;
        }
    }
    while cdf(hi) < p {
        hi *= 2.0;
    }
    brent(|x| cdf(x) - p, lo, hi, 1e-14).unwrap_or(g)
}

/// Brent's method on a sign-changing bracket `[a, b]`.
pub fn brent(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(PosiError::NoRoot(format!(
            "no sign change on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Ok(b)
}

// 15-point Kronrod nodes on [0, 1] of the symmetric rule, with the embedded
// 7-point Gauss weights at the odd positions.
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

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]` to an
/// absolute error target `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut intervals = vec![(a, b)];
    let mut total = 0.0;
    let mut depth_budget = 4000;
    while let Some((lo, hi)) = intervals.pop() {
        let (value, err) = gk15(&f, lo, hi);
        let share = tol * (hi - lo) / (b - a);
        if err <= share.max(1e-300) || depth_budget == 0 || hi - lo < 1e-12 * (b - a) {
            total += value;
        } else {
            depth_budget -= 1;
            let mid = 0.5 * (lo + hi);
            intervals.push((lo, mid));
            intervals.push((mid, hi));
        }
    }
    total
}

/// Golden-section search for the maximizer of a unimodal `f` on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
