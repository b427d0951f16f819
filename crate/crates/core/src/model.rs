//! The gauge model: action with separate couplings for time-like and
//! space-like plaquettes, and local updates that preserve its Gibbs measure.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::sampling::{open_unit, reflect_into_unit, sample_truncated};

/// Single-variable measure: the hard interval `[-1, 1]`, or the smooth
/// weight `exp(-phi^(2p))` on the real line that approaches it as `p` grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    HardInterval,
    SmoothP(u32),
}

/// Coupling of plaquettes in planes not containing direction 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialCoupling {
    Finite(f64),
    /// The frozen limit, realised through the two-wall model rather than by sweeps.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    pub omega: f64,
    pub beta_spatial: SpatialCoupling,
    pub measure: Measure,
}

impl ModelParams {
    /// Isotropic couplings on the hard interval.
    pub fn new(beta: f64, omega: f64) -> Result<Self> {
        Self::anisotropic(beta, omega, beta)
    }

    /// `beta_spatial = f64::INFINITY` selects the frozen limit.
    pub fn anisotropic(beta: f64, omega: f64, beta_spatial: f64) -> Result<Self> {
        let p = ModelParams {
            beta,
            omega,
            beta_spatial: if beta_spatial == f64::INFINITY {
                SpatialCoupling::Infinite
            } else {
                SpatialCoupling::Finite(beta_spatial)
            },
            measure: Measure::HardInterval,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParams(format!("omega = {} must be finite and >= 0", self.omega)));
        }
        if let SpatialCoupling::Finite(b) = self.beta_spatial {
            if !(b >= 0.0) {
                return Err(Error::InvalidParams(format!("beta_spatial = {b} must be >= 0")));
            }
        }
        if let Measure::SmoothP(0) = self.measure {
            return Err(Error::InvalidParams("smooth measure needs p >= 1".into()));
        }
        Ok(())
    }

    pub fn beta_spatial_value(&self) -> f64 {
        match self.beta_spatial {
            SpatialCoupling::Finite(b) => b,
            SpatialCoupling::Infinite => f64::INFINITY,
        }
    }

    /// Coupling of a plaquette in plane `(mu, nu)`, `mu < nu`.
    pub fn coupling(&self, mu: usize, _nu: usize) -> f64 {
        if mu == 0 {
            self.beta
        } else {
            self.beta_spatial_value()
        }
    }

    /// Curvature `beta * omega` of the single-link weight `exp(-beta omega phi^2)`.
    pub fn curvature(&self) -> f64 {
        self.beta * self.omega
    }

    fn check_simulable(&self) -> Result<()> {
        if self.beta_spatial == SpatialCoupling::Infinite {
            return Err(Error::Unsupported(
                "infinite spatial coupling is sampled through the two-wall model".into(),
            ));
        }
        if self.measure != Measure::HardInterval {
            return Err(Error::Unsupported(
                "gauge sweeps only support the hard-interval measure".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateScheme {
    Heatbath,
    Metropolis { width: f64 },
}

impl UpdateScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UpdateScheme::Metropolis { width } if !(width > 0.0 && width <= 2.0) => Err(
                Error::InvalidParams(format!("metropolis width {width} outside (0, 2]")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl SweepStats {
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One real value per link.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    geometry: Arc<LatticeGeometry>,
    values: Vec<f64>,
}

impl GaugeField {
    pub fn constant(geometry: Arc<LatticeGeometry>, value: f64) -> Self {
        let n = geometry.n_links();
        GaugeField { geometry, values: vec![value; n] }
    }

    pub fn from_values(geometry: Arc<LatticeGeometry>, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.n_links() {
            return Err(Error::InvalidParams(format!(
                "{} values for {} links",
                values.len(),
                geometry.n_links()
            )));
        }
        Ok(GaugeField { geometry, values })
    }

    /// Independent uniform values on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(geometry: Arc<LatticeGeometry>, rng: &mut R) -> Self {
        let values = (0..geometry.n_links())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        GaugeField { geometry, values }
    }

    pub fn geometry(&self) -> &Arc<LatticeGeometry> {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, link: usize) -> f64 {
        self.values[link]
    }

    pub fn set(&mut self, link: usize, value: f64) {
        self.values[link] = value;
    }

    pub fn plaquette(&self, p: usize) -> f64 {
        self.geometry
            .plaquette_link_indices(p)
            .iter()
            .map(|&l| self.values[l])
            .product()
    }

    /// `beta S = -sum_P c(P) phi(P) + beta omega sum_l phi(l)^2` with
    /// `c(P)` the time-like or space-like coupling of the plaquette.
    pub fn action(&self, params: &ModelParams) -> f64 {
        let g = &self.geometry;
        let mut plaq = 0.0;
        for p in 0..g.n_plaquettes() {
            let (mu, nu) = g.plaquette_plane(p);
            let c = params.coupling(mu, nu);
            if c != 0.0 {
                plaq += c * self.plaquette(p);
            }
        }
        let sq: f64 = self.values.iter().map(|v| v * v).sum();
        -plaq + params.curvature() * sq
    }

    /// Coefficient `H(l)` of `phi(l)` in the plaquette part of the exponent.
    pub fn staple_sum(&self, link: usize, params: &ModelParams) -> f64 {
        let g = &self.geometry;
        let mut h = 0.0;
        for &p in g.incident_plaquettes(link) {
            let p = p as usize;
            let (mu, nu) = g.plaquette_plane(p);
            let c = params.coupling(mu, nu);
            if c == 0.0 {
                continue;
            }
            let mut prod = 1.0;
            for l in g.plaquette_link_indices(p) {
                if l != link {
                    prod *= self.values[l];
                }
            }
            h += c * prod;
        }
        h
    }

    /// Change in `beta S` when link `link` moves from its value to `t`.
    pub fn local_delta(&self, link: usize, t: f64, params: &ModelParams) -> f64 {
        let old = self.values[link];
        let h = self.staple_sum(link, params);
        -h * (t - old) + params.curvature() * (t * t - old * old)
    }

    /// Resamples one link from its exact full conditional.
    pub fn heatbath_update<R: Rng + ?Sized>(&mut self, link: usize, params: &ModelParams, rng: &mut R) {
        let h = self.staple_sum(link, params);
        self.values[link] = sample_truncated(h, params.curvature(), rng);
    }

    /// Reflected uniform proposal of half-width `width`, Metropolis accept/reject.
    pub fn metropolis_update<R: Rng + ?Sized>(
        &mut self,
        link: usize,
        params: &ModelParams,
        width: f64,
        rng: &mut R,
    ) -> bool {
        let old = self.values[link];
        let proposal = reflect_into_unit(old + width * (2.0 * rng.random::<f64>() - 1.0));
        let delta = self.local_delta(link, proposal, params);
        if delta <= 0.0 || open_unit(rng) < (-delta).exp() {
            self.values[link] = proposal;
            true
        } else {
            false
        }
    }

    /// Visits every link once, in index order.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        params: &ModelParams,
        scheme: UpdateScheme,
        rng: &mut R,
    ) -> Result<SweepStats> {
        params.check_simulable()?;
        scheme.validate()?;
        let n = self.values.len();
        let mut stats = SweepStats { proposed: n, accepted: 0 };
        match scheme {
            UpdateScheme::Heatbath => {
                for l in 0..n {
                    self.heatbath_update(l, params, rng);
                }
                stats.accepted = n;
            }
            UpdateScheme::Metropolis { width } => {
                for l in 0..n {
                    if self.metropolis_update(l, params, width, rng) {
                        stats.accepted += 1;
                    }
                }
            }
        }
        Ok(stats)
    }

    pub fn apply_gauge_transform(&mut self, sigma: &[i8]) {
        self.geometry.gauge_transform(&mut self.values, sigma);
    }

    /// `phi(l) = tau(l) f(l)` with `tau = sgn(phi)` (`sgn 0 = +1`) and `f = |phi|`.
    pub fn decompose_sign_magnitude(&self) -> (Vec<i8>, Vec<f64>) {
        self.values
            .iter()
            .map(|&v| (if v < 0.0 { -1 } else { 1 }, v.abs()))
            .unzip()
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lattice(ext: &[usize], b: Boundary) -> Arc<LatticeGeometry> {
        Arc::new(LatticeGeometry::gauge(ext.len(), ext, b).unwrap())
    }

    #[test]
    fn action_limits() {
        let g = lattice(&[4, 4, 4], Boundary::Periodic);
        let params = ModelParams::new(0.7, 1.5).unwrap();
        assert_eq!(GaugeField::constant(g.clone(), 0.0).action(&params), 0.0);
        let ones = GaugeField::constant(g.clone(), 1.0);
        let expect = -0.7 * g.n_plaquettes() as f64 + 0.7 * 1.5 * g.n_links() as f64;
        assert!((ones.action(&params) - expect).abs() < 1e-12);
    }

    #[test]
    fn action_matches_term_by_term_sum() {
        let g = lattice(&[3, 4, 3], Boundary::Open);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = GaugeField::random(g.clone(), &mut rng);
        let params = ModelParams::anisotropic(0.9, 2.0, 1.7).unwrap();
        // independent recomputation from plaquette refs
        let mut s = 0.0;
        for p in 0..g.n_plaquettes() {
            let pr = g.plaquette(p);
            let c = if pr.mu == 0 { 0.9 } else { 1.7 };
            let links = g.plaquette_links(pr).unwrap();
            s -= c * links
                .iter()
                .map(|&l| f.get(g.link_index(l).unwrap()))
                .product::<f64>();
        }
        for &v in f.values() {
            s += 0.9 * 2.0 * v * v;
        }
        assert!((f.action(&params) - s).abs() <= 1e-12 * s.abs());
    }

    #[test]
    fn staple_sum_limits() {
        let g = lattice(&[3, 3, 3], Boundary::Periodic);
        let params = ModelParams::new(0.6, 1.0).unwrap();
        let ones = GaugeField::constant(g.clone(), 1.0);
        let zeros = GaugeField::constant(g.clone(), 0.0);
        for l in 0..g.n_links() {
            assert!((ones.staple_sum(l, &params) - 4.0 * 0.6).abs() < 1e-14);
            assert_eq!(zeros.staple_sum(l, &params), 0.0);
        }
    }

    #[test]
    fn local_delta_matches_action_difference() {
        let g = lattice(&[4, 3, 3], Boundary::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut f = GaugeField::random(g.clone(), &mut rng);
        let params = ModelParams::anisotropic(1.3, 0.8, 2.1).unwrap();
        for l in [0, 7, 40, g.n_links() - 1] {
            let before = f.action(&params);
            let t = rng.random_range(-1.0..1.0);
            let delta = f.local_delta(l, t, &params);
            f.set(l, t);
            let after = f.action(&params);
            assert!(((after - before) - delta).abs() <= 1e-10 * before.abs().max(1.0));
        }
    }

    #[test]
    fn gauge_invariance_of_action() {
        let g = lattice(&[4, 4, 4], Boundary::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::new(1.1, 2.0).unwrap();
        for _ in 0..10 {
            let mut f = GaugeField::random(g.clone(), &mut rng);
            let a = f.action(&params);
            let sigma: Vec<i8> = (0..g.n_sites())
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect();
            f.apply_gauge_transform(&sigma);
            assert!((f.action(&params) - a).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn gauge_orbit_closure() {
        let g = lattice(&[3, 3], Boundary::Open);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = GaugeField::random(g.clone(), &mut rng);
        let s1: Vec<i8> = (0..9).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let s2: Vec<i8> = (0..9).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        let mut a = f.clone();
        a.apply_gauge_transform(&s1);
        a.apply_gauge_transform(&s2);
        let mut b = f.clone();
        let prod: Vec<i8> = s1.iter().zip(&s2).map(|(x, y)| x * y).collect();
        b.apply_gauge_transform(&prod);
        assert_eq!(a, b);
        let mut c = f.clone();
        c.apply_gauge_transform(&[1; 9]);
        assert_eq!(c, f);
    }

    #[test]
    fn sign_magnitude() {
        let g = lattice(&[2, 2], Boundary::Open);
        let f = GaugeField::from_values(g, vec![-0.5, 0.0, 0.25, -1.0]).unwrap();
        let (tau, mag) = f.decompose_sign_magnitude();
        assert_eq!(tau, vec![-1, 1, 1, -1]);
        assert_eq!(mag, vec![0.5, 0.0, 0.25, 1.0]);
        for i in 0..4 {
            assert_eq!(tau[i] as f64 * mag[i], f.get(i));
        }
    }

    #[test]
    fn metropolis_accepts_everything_without_action() {
        let g = lattice(&[3, 3], Boundary::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = GaugeField::random(g, &mut rng);
        let params = ModelParams::new(0.0, 0.0).unwrap();
        let s = f
            .sweep(&params, UpdateScheme::Metropolis { width: 0.8 }, &mut rng)
            .unwrap();
        assert_eq!(s.acceptance(), 1.0);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let g = lattice(&[3, 3, 3], Boundary::Periodic);
        let params = ModelParams::new(1.0, 1.0).unwrap();
        let run = |scheme| {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut f = GaugeField::constant(g.clone(), 0.3);
            for _ in 0..3 {
                f.sweep(&params, scheme, &mut rng).unwrap();
            }
            f
        };
        assert_eq!(run(UpdateScheme::Heatbath), run(UpdateScheme::Heatbath));
        let m = UpdateScheme::Metropolis { width: 1.0 };
        assert_eq!(run(m), run(m));
    }

    #[test]
    fn zero_coupling_sweep_gives_uniform_links() {
        let g = lattice(&[6, 6, 6], Boundary::Periodic);
        let params = ModelParams::new(0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut f = GaugeField::constant(g.clone(), 1.0);
        let mut vals = Vec::new();
        for _ in 0..20 {
            f.sweep(&params, UpdateScheme::Heatbath, &mut rng).unwrap();
            vals.extend_from_slice(f.values());
        }
        let n = vals.len() as f64;
        let var = vals.iter().map(|v| v * v).sum::<f64>() / n;
        // Var(t^2) for uniform t is 4/45
        let se = (4.0 / 45.0 / n).sqrt();
        assert!((var - 1.0 / 3.0).abs() < 5.0 * se);
    }

    #[test]
    fn rejects_unsupported_sweeps() {
        let g = lattice(&[3, 3, 3], Boundary::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut f = GaugeField::constant(g, 0.0);
        let frozen = ModelParams::anisotropic(1.0, 1.0, f64::INFINITY).unwrap();
        assert!(f.sweep(&frozen, UpdateScheme::Heatbath, &mut rng).is_err());
        let mut smooth = ModelParams::new(1.0, 1.0).unwrap();
        smooth.measure = Measure::SmoothP(4);
        assert!(f.sweep(&smooth, UpdateScheme::Heatbath, &mut rng).is_err());
        let p = ModelParams::new(1.0, 1.0).unwrap();
        assert!(f
            .sweep(&p, UpdateScheme::Metropolis { width: 2.5 }, &mut rng)
            .is_err());
        assert!(ModelParams::new(-1.0, 1.0).is_err());
    }
}
