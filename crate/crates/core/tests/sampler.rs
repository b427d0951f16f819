//! Distributional checks of the single-variable sampler and of the sweeps.

mod common;

use std::sync::Arc;

use common::rng;
use z2lab::lattice::{Boundary, LatticeGeometry};
use z2lab::model::{GaugeField, ModelParams, UpdateScheme};
use z2lab::oracle::gauss_legendre;
use z2lab::sampling::sample_truncated;
use z2lab::stats::BinnedSeries;

fn moments(h: f64, a: f64, n: usize, seed: u64) -> (f64, f64, Vec<f64>) {
    let mut r = rng(seed);
    let xs: Vec<f64> = (0..n).map(|_| sample_truncated(h, a, &mut r)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var, xs)
}

/// Exact `<t^k>` under `exp(h t - a t^2)` on `[-1, 1]`.
fn exact_moment(h: f64, a: f64, k: i32) -> f64 {
    let (x, w) = gauss_legendre(400);
    let e = |t: f64| (h * t - a * t * t - h.abs()).exp();
    let z: f64 = x.iter().zip(&w).map(|(t, w)| w * e(*t)).sum();
    x.iter().zip(&w).map(|(t, w)| w * t.powi(k) * e(*t)).sum::<f64>() / z
}

#[test]
fn flat_measure_is_uniform() {
    let n = 1_000_000;
    let (mean, var, xs) = moments(0.0, 0.0, n, 1);
    assert!(xs.iter().all(|x| (-1.0..=1.0).contains(x)));
    // sd of the mean is sqrt(1/3 / n)
    assert!(mean.abs() < 4.0 * (1.0 / 3.0 / n as f64).sqrt(), "{mean}");
    // var of t^2 is 4/45
    assert!((var - 1.0 / 3.0).abs() < 4.0 * (4.0 / 45.0 / n as f64).sqrt(), "{var}");
    let mut hist = [0usize; 10];
    for x in &xs {
        hist[(((x + 1.0) / 2.0 * 10.0) as usize).min(9)] += 1;
    }
    let expect = n as f64 / 10.0;
    let chi2: f64 = hist.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 9 degrees of freedom, p ~ 1e-4
    assert!(chi2 < 33.7, "{chi2}");
}

#[test]
fn narrow_gaussian_variance() {
    let n = 200_000;
    let (mean, var, _) = moments(0.0, 50.0, n, 2);
    let v = 1.0 / 100.0;
    assert!(mean.abs() < 4.0 * (v / n as f64).sqrt());
    assert!((var - v).abs() < 4.0 * v * (2.0 / n as f64).sqrt(), "{var}");
}

#[test]
fn strong_field_matches_exact_cdf() {
    let (h, a) = (10.0, 1.0);
    let n = 100_000;
    let (_, _, mut xs) = moments(h, a, n, 3);
    xs.sort_by(f64::total_cmp);
    // exact CDF by quadrature on [-1, t]
    let (gx, gw) = gauss_legendre(64);
    let cdf = |t: f64| {
        let half = 0.5 * (t + 1.0);
        gx.iter().zip(&gw).map(|(x, w)| {
            let s = -1.0 + half * (x + 1.0);
            w * half * (h * s - a * s * s).exp()
        }).sum::<f64>()
    };
    let z = cdf(1.0);
    let mut ks = 0.0f64;
    for (i, &x) in xs.iter().enumerate().step_by(97) {
        let f = cdf(x) / z;
        ks = ks.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks < 0.01, "KS distance {ks}");
}

#[test]
fn moments_across_regimes() {
    for (i, &(h, a)) in [(0.3, 0.0), (-4.0, 0.0), (2.0, 3.0), (-30.0, 5.0), (0.0, 1e-9), (1e3, 1e-3)].iter().enumerate() {
        let n = 100_000;
        let (mean, var, _) = moments(h, a, n, 10 + i as u64);
        let m1 = exact_moment(h, a, 1);
        let v = exact_moment(h, a, 2) - m1 * m1;
        assert!((mean - m1).abs() < 5.0 * (v / n as f64).sqrt() + 1e-12, "h {h} a {a}: {mean} vs {m1}");
        assert!((var - v).abs() < 0.05 * v + 1e-12, "h {h} a {a}: {var} vs {v}");
    }
}

#[test]
fn metropolis_and_heatbath_agree() {
    let g = Arc::new(LatticeGeometry::gauge(2, &[4, 4], Boundary::Periodic).unwrap());
    let p = ModelParams::new(2.0, 0.5).unwrap();
    let run = |scheme: UpdateScheme, seed: u64| {
        let mut r = rng(seed);
        let mut f = GaugeField::random(g.clone(), &mut r);
        let mut xs = Vec::new();
        for i in 0..60_000 {
            f.sweep(&p, scheme, &mut r).unwrap();
            if i >= 2_000 {
                xs.push((0..g.n_plaquettes()).map(|q| f.plaquette(q)).sum::<f64>() / g.n_plaquettes() as f64);
            }
        }
        BinnedSeries::new(&xs, 500).unwrap().estimate()
    };
    let hb = run(UpdateScheme::Heatbath, 5);
    let mh = run(UpdateScheme::Metropolis { width: 0.6 }, 6);
    let err = (hb.error.powi(2) + mh.error.powi(2)).sqrt();
    assert!((hb.mean - mh.mean).abs() < 4.0 * err, "{hb:?} {mh:?}");
}
