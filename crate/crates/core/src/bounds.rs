//! Closed-form decay-rate bounds.
//!
//! For the two-wall spin model in `k` dimensions the correlator decays at
//! least as fast as `exp(-m |x|)` with `m = 2 asinh(s / sqrt 8)` whenever
//!
//! ```text
//! s = sqrt(4 omega / (pi beta)) exp(-omega beta - 1) + 2 (omega - k)
//! ```
//!
//! is positive. The gauge theory in `d` dimensions inherits the same rate with
//! `k = d - 1` as a lower bound on its string tension.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub s_tilde: f64,
    /// Decay rate; `None` when `s_tilde <= 0` and the bound says nothing.
    pub rate: Option<f64>,
}

impl BoundResult {
    pub fn valid(&self) -> bool {
        self.rate.is_some()
    }
}

pub fn s_tilde(beta: f64, omega: f64, k: usize) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParams(format!("bound needs finite beta > 0, got {beta}")));
    }
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParams(format!("bound needs omega >= 0, got {omega}")));
    }
    if k < 1 {
        return Err(Error::InvalidParams("bound needs k >= 1".into()));
    }
    let gap = (4.0 * omega / (PI * beta)).sqrt() * (-omega * beta - 1.0).exp();
    Ok(gap + 2.0 * (omega - k as f64))
}

/// `s_tilde` in terms of the gauge coupling `g = 1 / beta`.
pub fn s_tilde_from_coupling(g: f64, omega: f64, k: usize) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::InvalidParams(format!("coupling g = {g} must be > 0")));
    }
    s_tilde(1.0 / g, omega, k)
}

/// `2 asinh(s / sqrt 8)`, defined only for `s > 0`.
pub fn rate_from_s(s: f64) -> Option<f64> {
    (s > 0.0).then(|| 2.0 * (s / 8f64.sqrt()).asinh())
}

/// Mass bound of the `k`-dimensional two-wall model.
pub fn mass_bound(beta: f64, omega: f64, k: usize) -> Result<BoundResult> {
    let s = s_tilde(beta, omega, k)?;
    Ok(BoundResult { s_tilde: s, rate: rate_from_s(s) })
}

/// String-tension lower bound of the `d`-dimensional gauge theory.
pub fn sigma_tilde(beta: f64, omega: f64, d: usize) -> Result<BoundResult> {
    if d < 2 {
        return Err(Error::InvalidParams(format!("gauge dimension must be >= 2, got {d}")));
    }
    mass_bound(beta, omega, d - 1)
}

pub fn sigma_tilde_from_coupling(g: f64, omega: f64, d: usize) -> Result<BoundResult> {
    if !(g > 0.0) {
        return Err(Error::InvalidParams(format!("coupling g = {g} must be > 0")));
    }
    sigma_tilde(1.0 / g, omega, d)
}

/// For `omega < d - 1`, the `beta*` above which the string-tension bound is
/// vacuous; `None` when it holds for every `beta`.
pub fn validity_threshold(omega: f64, d: usize) -> Result<Option<f64>> {
    let k = d.checked_sub(1).filter(|&k| k >= 1).ok_or_else(|| {
        Error::InvalidParams(format!("gauge dimension must be >= 2, got {d}"))
    })?;
    if omega >= k as f64 {
        return Ok(None);
    }
    let s = |b: f64| s_tilde(b, omega, k);
    let mut lo = 1.0;
    while s(lo)? <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(Some(0.0));
        }
    }
    let mut hi = 2.0 * lo;
    while s(hi)? > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if s(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_freedom_form() {
        // omega = k: s = sqrt(4 k g / pi) exp(-k/g - 1)
        for &(g, k) in &[(0.5, 3usize), (1.0, 3), (2.0, 2), (0.3, 1)] {
            let s = s_tilde_from_coupling(g, k as f64, k).unwrap();
            let expect = (4.0 * k as f64 * g / PI).sqrt() * (-(k as f64) / g - 1.0).exp();
            assert!((s / expect - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_values() {
        let s = s_tilde(1.0, 3.0, 3).unwrap();
        assert!((s - 0.035_796_27).abs() < 1e-8, "{s}");
        let b = sigma_tilde(1.0, 3.0, 4).unwrap();
        assert!((b.rate.unwrap() - 0.025_31).abs() < 5e-5);
        let r = rate_from_s(8f64.sqrt()).unwrap();
        assert!((r - 2.0 * (1.0 + 2f64.sqrt()).ln()).abs() < 1e-15);
        assert!((r - 1.762_747_174).abs() < 1e-9);
    }

    #[test]
    fn rate_small_argument_and_monotone() {
        let s = 1e-9;
        assert!((rate_from_s(s).unwrap() / (s / 2f64.sqrt()) - 1.0).abs() < 1e-12);
        assert_eq!(rate_from_s(0.0), None);
        assert_eq!(rate_from_s(-1.0), None);
        let mut prev = 0.0;
        for i in 1..1000 {
            let r = rate_from_s(i as f64 * 0.01).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn sign_analysis() {
        assert!(s_tilde(50.0, 1.0, 3).unwrap() < 0.0);
        assert!(!sigma_tilde(10.0, 0.0, 4).unwrap().valid());
        assert!(s_tilde(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn critical_damping_bound_decreases_to_zero() {
        let mut prev = f64::INFINITY;
        for i in 0..30 {
            let beta = 0.05 * 1.3f64.powi(i);
            let r = sigma_tilde(beta, 2.0, 3).unwrap().rate.unwrap();
            assert!(r > 0.0 && r < prev);
            prev = r;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn validity_threshold_straddles_zero() {
        for &(omega, d) in &[(1.0, 3usize), (2.5, 4), (0.2, 2)] {
            let b = validity_threshold(omega, d).unwrap().unwrap();
            let k = d - 1;
            assert!(s_tilde(b * (1.0 - 1e-9), omega, k).unwrap() > 0.0);
            assert!(s_tilde(b * (1.0 + 1e-9), omega, k).unwrap() <= 0.0);
        }
        assert_eq!(validity_threshold(3.0, 4).unwrap(), None);
        assert_eq!(validity_threshold(0.0, 3).unwrap(), Some(0.0));
    }
}
