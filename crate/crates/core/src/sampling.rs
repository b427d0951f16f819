//! Exact samplers for single-variable conditionals.
//!
//! Every local update of both models reduces to drawing `t` from
//! `exp(h t - a t^2)` restricted to `[-1, 1]`, with `a >= 0`: a truncated
//! Gaussian, or a truncated exponential when `a = 0`. The sampler inverts the
//! CDF in whichever of three forms is numerically safe for the placement of
//! the interval relative to the Gaussian mode.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

/// Below this curvature the Gaussian factor is within `1e-8` of one on the
/// whole interval; we draw from the exponential part and correct by rejection.
const FLAT_CURVATURE: f64 = 1e-8;

/// Draws `t` in `[-1, 1]` with density proportional to `exp(h t - a t^2)`.
pub fn sample_truncated<R: Rng + ?Sized>(h: f64, a: f64, rng: &mut R) -> f64 {
    debug_assert!(a >= 0.0 && h.is_finite());
    if a > 0.0 && a < FLAT_CURVATURE {
        loop {
            let t = exponential_inverse_cdf(h, open_unit(rng));
            if rng.random::<f64>() < (-a * t * t).exp() {
                return t;
            }
        }
    }
    inverse_cdf(h, a, open_unit(rng))
}

/// Inverse of the CDF of `exp(h t - a t^2)` on `[-1, 1]` at probability `u`.
///
/// Exact up to roundoff for `a = 0` and `a >= 1e-8`; in between the Gaussian
/// factor is ignored, which [`sample_truncated`] corrects by rejection.
pub fn inverse_cdf(h: f64, a: f64, u: f64) -> f64 {
    if a < FLAT_CURVATURE {
        return exponential_inverse_cdf(h, u);
    }
    let sigma = (0.5 / a).sqrt();
    let mu = h / (2.0 * a);
    let lo = (-1.0 - mu) / sigma;
    let hi = (1.0 - mu) / sigma;
    let z = truncated_normal_inverse_cdf(lo, hi, u);
    (mu + sigma * z).clamp(-1.0, 1.0)
}

/// Inverse CDF of `exp(h t)` on `[-1, 1]`.
fn exponential_inverse_cdf(h: f64, u: f64) -> f64 {
    if h == 0.0 {
        return 2.0 * u - 1.0;
    }
    // written for h > 0; negative h by t -> -t, u -> 1 - u
    let (g, v, sign) = if h > 0.0 { (h, u, 1.0) } else { (-h, 1.0 - u, -1.0) };
    let span = -(-2.0 * g).exp_m1();
    let t = 1.0 + (-(1.0 - v) * span).ln_1p() / g;
    sign * t.clamp(-1.0, 1.0)
}

/// Standard normal restricted to `[lo, hi]`, inverse CDF at `u`.
pub fn truncated_normal_inverse_cdf(lo: f64, hi: f64, u: f64) -> f64 {
    debug_assert!(lo < hi);
    if lo >= 0.0 {
        upper_tail_inverse(lo, hi, u)
    } else if hi <= 0.0 {
        -upper_tail_inverse(-hi, -lo, 1.0 - u)
    } else {
        let p_lo = normal_cdf(lo);
        let q_hi = normal_sf(hi);
        let mass = 1.0 - p_lo - q_hi;
        let p = p_lo + u * mass;
        let z = if p <= 0.5 {
            normal_quantile(p)
        } else {
            -normal_quantile(q_hi + (1.0 - u) * mass)
        };
        z.clamp(lo, hi)
    }
}

/// Interval entirely in the upper tail (`0 <= lo < hi`): solve
/// `Q(z)/Q(lo) = 1 - u (1 - Q(hi)/Q(lo))` on the log scale, `Q` the normal
/// survival function expressed through `erfcx` so nothing underflows.
fn upper_tail_inverse(lo: f64, hi: f64, u: f64) -> f64 {
    let erfcx_lo = erfcx(lo * FRAC_1_SQRT_2);
    let log_ratio = |z: f64| 0.5 * (lo - z) * (lo + z) + (erfcx(z * FRAC_1_SQRT_2) / erfcx_lo).ln();
    let slope = |z: f64| -(2.0 / PI).sqrt() / erfcx(z * FRAC_1_SQRT_2);

    let target = (u * log_ratio(hi).exp_m1()).ln_1p();
    if target == 0.0 {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    let mut z = (lo - target / -slope(lo)).clamp(lo, hi);
    for _ in 0..100 {
        let f = log_ratio(z) - target;
        if f > 0.0 {
            a = z;
        } else {
            b = z;
        }
        let mut next = z - f / slope(z);
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        let done = (next - z).abs() <= 1e-15 * (1.0 + z.abs()) || b - a <= 1e-15 * (1.0 + z.abs());
        z = next;
        if done {
            break;
        }
    }
    z.clamp(lo, hi)
}

/// Scaled complementary error function `exp(x^2) erfc(x)`, for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 26.0 {
        // exp(x^2) with the rounding error of x^2 folded back in
        let s = x * x;
        let e = x.mul_add(x, -s);
        s.exp() * (1.0 + e) * libm::erfc(x)
    } else {
        // asymptotic series; the first omitted term is below 1e-17 here
        let w = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=8 {
            term *= -((2 * k - 1) as f64) * w;
            sum += term;
        }
        sum / (x * PI.sqrt())
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation refined by one
/// Halley step against `erfc`, good to a few ulps over `(0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    if u.is_finite() {
        x - u / (1.0 + 0.5 * x * u)
    } else {
        x
    }
}

/// Folds a proposal from `[-3, 3]` back into `[-1, 1]` by mirroring at the walls.
pub fn reflect_into_unit(y: f64) -> f64 {
    if y > 1.0 {
        2.0 - y
    } else if y < -1.0 {
        -2.0 - y
    } else {
        y
    }
}

/// Uniform draw from the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    normal_quantile(open_unit(rng))
}

/// Draws from `exp(h t - a t^2 - t^(2p))` on the real line by rejection
/// against a Gaussian envelope.
pub fn sample_smooth<R: Rng + ?Sized>(h: f64, a: f64, p: u32, rng: &mut R) -> f64 {
    debug_assert!(p >= 1 && a >= 0.0);
    let two_p = 2 * p as i32;
    // exp(-t^2p) <= exp(1 - t^2), so a curvature of a + 1 always dominates
    let (curv, shift) = if a > 0.5 { (a, false) } else { (a + 1.0, true) };
    let mu = h / (2.0 * curv);
    let sigma = (0.5 / curv).sqrt();
    loop {
        let t = mu + sigma * standard_normal(rng);
        let mut log_acc = -t.powi(two_p);
        if shift {
            log_acc += t * t - 1.0;
        }
        if rng.random::<f64>().ln() < log_acc {
            return t;
        }
    }
}
