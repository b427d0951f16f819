//! Small Monte Carlo drivers shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use z2lab::lattice::{Boundary, LatticeGeometry};
use z2lab::model::{GaugeField, ModelParams, UpdateScheme};
use z2lab::observables::{LoopMeasurer, LoopSeries, LoopTable};
use z2lab::stats::{BinSize, BinnedSeries};
use z2lab::twowall::{CorrelatorMeasurer, CorrelatorSeries, SpinField, WallParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct GaugeRun {
    pub dim: usize,
    pub extents: Vec<usize>,
    pub boundary: Boundary,
    pub params: ModelParams,
    pub max_r: usize,
    pub max_t: usize,
    pub n_therm: usize,
    pub n_measure: usize,
    pub seed: u64,
    pub cold: bool,
}

impl GaugeRun {
    pub fn new(dim: usize, extents: &[usize], boundary: Boundary, params: ModelParams) -> Self {
        GaugeRun {
            dim,
            extents: extents.to_vec(),
            boundary,
            params,
            max_r: 2,
            max_t: 2,
            n_therm: 1000,
            n_measure: 10_000,
            seed: 1,
            cold: false,
        }
    }

    pub fn table(&self, bin: BinSize) -> LoopTable {
        let g = Arc::new(LatticeGeometry::gauge(self.dim, &self.extents, self.boundary).unwrap());
        let mut r = rng(self.seed);
        let mut f = if self.cold {
            GaugeField::constant(g.clone(), 1.0)
        } else {
            GaugeField::random(g.clone(), &mut r)
        };
        let m = LoopMeasurer::new(&g, self.max_r, self.max_t).unwrap();
        for _ in 0..self.n_therm {
            f.sweep(&self.params, UpdateScheme::Heatbath, &mut r).unwrap();
        }
        let mut s = LoopSeries::default();
        for _ in 0..self.n_measure {
            f.sweep(&self.params, UpdateScheme::Heatbath, &mut r).unwrap();
            s.push(&m.measure(&f));
        }
        LoopTable::from_chains(&[&s], bin).unwrap()
    }
}

/// Axis-averaged two-wall correlator `C(0..=max_sep)`, all binned alike.
pub fn wall_correlator(
    extents: &[usize],
    boundary: Boundary,
    params: WallParams,
    max_sep: usize,
    n_therm: usize,
    n_measure: usize,
    bin: usize,
    seed: u64,
) -> Vec<BinnedSeries> {
    let g = Arc::new(LatticeGeometry::new(extents, boundary).unwrap());
    let mut r = rng(seed);
    let mut f = SpinField::random(g.clone(), &mut r);
    let axes: Vec<usize> = (0..g.dim()).collect();
    let m = CorrelatorMeasurer::new(&g, &axes, Some(max_sep)).unwrap();
    let mut s = CorrelatorSeries::new(&m);
    for _ in 0..n_therm {
        f.sweep(&params, UpdateScheme::Heatbath, &mut r).unwrap();
    }
    for _ in 0..n_measure {
        f.sweep(&params, UpdateScheme::Heatbath, &mut r).unwrap();
        let (phi, tau) = m.measure(&f);
        s.push(&phi, &tau);
    }
    s.axis_averaged(false).iter().map(|c| BinnedSeries::new(c, bin).unwrap()).collect()
}
