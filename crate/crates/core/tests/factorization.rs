//! Frozen spatial links: with a large spatial coupling in d = 3 the loops
//! reduce to powers of the two-wall correlator.

mod common;

use common::{wall_correlator, GaugeRun};
use z2lab::lattice::Boundary;
use z2lab::model::ModelParams;
use z2lab::observables::{LoopKey, LoopKind, PlaneClass};
use z2lab::stats::BinSize;
use z2lab::twowall::{frozen_spatial_loop, WallParams};

/// Gauge loop minus frozen value, with the combined error.
fn gap(beta_spatial: f64) -> (f64, f64) {
    let (beta, omega) = (1.0, 1.0);
    let p = ModelParams::anisotropic(beta, omega, beta_spatial).unwrap();
    let mut run = GaugeRun::new(3, &[4, 4, 4], Boundary::Open, p);
    // a hot start freezes frustrated spatial plaquettes in at large coupling
    run.cold = true;
    run.n_measure = 40_000;
    let t = run.table(BinSize::Fixed(100));
    let key = LoopKey { plane: PlaneClass::Temporal, kind: LoopKind::Wilson, r: 2, t: 1 };
    let w = t.estimate(&key).unwrap();
    let c = wall_correlator(&[4, 4], Boundary::Open, WallParams::new(beta, omega).unwrap(), 2, 1000, 40_000, 100, 2);
    let frozen = frozen_spatial_loop(&c[2], 1).unwrap();
    (w.mean - frozen.mean, (w.error.powi(2) + frozen.error.powi(2)).sqrt())
}

#[test]
fn three_dimensional_open_lattice_factorizes() {
    let (far, far_err) = gap(1e4);
    assert!(far.abs() <= 3.0 * far_err, "gap {far} +- {far_err}");
    // at 50 beta the spatial links still fluctuate visibly
    let (near, _) = gap(50.0);
    assert!(near.abs() > far.abs());
}
