//! A free membrane between hard walls, sampled directly, against the
//! two-wall model it maps to.

mod common;

use std::sync::Arc;

use common::rng;
use rand::Rng;
use z2lab::lattice::{Boundary, LatticeGeometry};
use z2lab::model::UpdateScheme;
use z2lab::stats::BinnedSeries;
use z2lab::twowall::{hard_wall_map, membrane_action, SpinField};

const D: f64 = 1.2;
const R: f64 = 0.5;

/// `(<psi^2> / D^2, <psi(y) psi(y + e0)> / D^2)` per configuration.
fn observables(g: &LatticeGeometry, v: &[f64], scale: f64) -> (f64, f64) {
    let n = v.len() as f64;
    let sq = v.iter().map(|x| x * x).sum::<f64>() / n / scale;
    let nn = (0..g.n_sites()).map(|s| v[s] * v[g.shift(s, 0, 1).unwrap()]).sum::<f64>() / n / scale;
    (sq, nn)
}

#[test]
fn raw_membrane_metropolis_matches_two_wall_model() {
    let g = Arc::new(LatticeGeometry::new(&[4, 4], Boundary::Periodic).unwrap());
    let n_sweeps = 100_000;
    let burn = 2_000;

    // plain Metropolis on psi in [-D, D] with weight exp(-membrane action)
    let mut r = rng(21);
    let mut psi: Vec<f64> = (0..g.n_sites()).map(|_| r.random_range(-D..=D)).collect();
    let mut action = membrane_action(&g, &psi, R);
    let (mut sq_raw, mut nn_raw) = (Vec::new(), Vec::new());
    for sweep in 0..n_sweeps {
        for s in 0..g.n_sites() {
            let old = psi[s];
            let new = old + r.random_range(-0.8..0.8);
            if new.abs() > D {
                continue;
            }
            psi[s] = new;
            let trial = membrane_action(&g, &psi, R);
            if r.random::<f64>() < (action - trial).exp() {
                action = trial;
            } else {
                psi[s] = old;
            }
        }
        if sweep >= burn {
            let (a, b) = observables(&g, &psi, D * D);
            sq_raw.push(a);
            nn_raw.push(b);
        }
    }

    let params = hard_wall_map(D, R, 2).unwrap();
    let mut r = rng(22);
    let mut f = SpinField::random(g.clone(), &mut r);
    let (mut sq, mut nn) = (Vec::new(), Vec::new());
    for sweep in 0..n_sweeps {
        f.sweep(&params, UpdateScheme::Heatbath, &mut r).unwrap();
        if sweep >= burn {
            let (a, b) = observables(&g, f.values(), 1.0);
            sq.push(a);
            nn.push(b);
        }
    }

    for (name, raw, mapped) in [("phi^2", &sq_raw, &sq), ("nearest neighbour", &nn_raw, &nn)] {
        let a = BinnedSeries::new(raw, 1000).unwrap().estimate();
        let b = BinnedSeries::new(mapped, 1000).unwrap().estimate();
        let err = (a.error.powi(2) + b.error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 4.0 * err, "{name}: raw {a:?} mapped {b:?}");
    }
}
