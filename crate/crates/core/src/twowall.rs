//! The two-wall spin model: one value in `[-1, 1]` per site of a
//! `k`-dimensional lattice, nearest-neighbour coupling `beta` and on-site
//! weight `exp(-beta omega phi^2)`. It is the frozen-spatial limit of the
//! gauge theory with `k = d - 1`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry};
use crate::model::{Measure, SweepStats, UpdateScheme};
use crate::sampling::{open_unit, reflect_into_unit, sample_smooth, sample_truncated};
use crate::stats::{jackknife, BinnedSeries, EstimateWithError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallParams {
    pub beta: f64,
    pub omega: f64,
    #[serde(default)]
    pub measure: Measure,
}

impl WallParams {
    pub fn new(beta: f64, omega: f64) -> Result<Self> {
        let p = WallParams { beta, omega, measure: Measure::HardInterval };
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
        if let Measure::SmoothP(0) = self.measure {
            return Err(Error::InvalidParams("smooth measure needs p >= 1".into()));
        }
        Ok(())
    }

    pub fn curvature(&self) -> f64 {
        self.beta * self.omega
    }
}

/// Parameters of a free membrane between walls at `-D` and `D` with mass
/// term `r`, after rescaling the field by `1 / D`. The correspondence is exact
/// on periodic lattices; on open ones boundary sites have fewer neighbours.
pub fn hard_wall_map(d_wall: f64, r: f64, k: usize) -> Result<WallParams> {
    if !(d_wall > 0.0 && d_wall.is_finite()) {
        return Err(Error::InvalidParams(format!("wall half-separation D = {d_wall} must be > 0")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidParams(format!("mass term r = {r} must be >= 0")));
    }
    WallParams::new(d_wall * d_wall, k as f64 + r / 2.0)
}

/// `exp(-beta omega t^2 - t^(2p))`, the smooth single-site weight.
pub fn smooth_measure_weight(t: f64, p: u32, beta: f64, omega: f64) -> f64 {
    (-beta * omega * t * t - t.powi(2 * p as i32)).exp()
}

#[derive(Debug)]
struct Neighbours {
    offsets: Vec<u32>,
    sites: Vec<u32>,
}

impl Neighbours {
    fn new(g: &LatticeGeometry) -> Self {
        let n = g.n_sites();
        let mut deg = vec![0u32; n];
        for i in 0..g.n_links() {
            let (a, b) = g.link_sites(i);
            deg[a] += 1;
            deg[b] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for s in 0..n {
            offsets[s + 1] = offsets[s] + deg[s];
        }
        let mut fill = offsets.clone();
        let mut sites = vec![0u32; offsets[n] as usize];
        for i in 0..g.n_links() {
            let (a, b) = g.link_sites(i);
            sites[fill[a] as usize] = b as u32;
            fill[a] += 1;
            sites[fill[b] as usize] = a as u32;
            fill[b] += 1;
        }
        Neighbours { offsets, sites }
    }

    fn of(&self, s: usize) -> &[u32] {
        &self.sites[self.offsets[s] as usize..self.offsets[s + 1] as usize]
    }
}

/// Spin configuration; bonds are the links of the geometry, so a periodic
/// extent of 2 couples a pair of sites twice.
#[derive(Debug, Clone)]
pub struct SpinField {
    geometry: Arc<LatticeGeometry>,
    neighbours: Arc<Neighbours>,
    values: Vec<f64>,
}

impl PartialEq for SpinField {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry && self.values == other.values
    }
}

impl SpinField {
    pub fn constant(geometry: Arc<LatticeGeometry>, value: f64) -> Self {
        let n = geometry.n_sites();
        SpinField {
            neighbours: Arc::new(Neighbours::new(&geometry)),
            geometry,
            values: vec![value; n],
        }
    }

    pub fn from_values(geometry: Arc<LatticeGeometry>, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.n_sites() {
            return Err(Error::InvalidParams(format!(
                "{} values for {} sites",
                values.len(),
                geometry.n_sites()
            )));
        }
        let mut f = SpinField::constant(geometry, 0.0);
        f.values = values;
        Ok(f)
    }

    pub fn random<R: Rng + ?Sized>(geometry: Arc<LatticeGeometry>, rng: &mut R) -> Self {
        let mut f = SpinField::constant(geometry, 0.0);
        for v in &mut f.values {
            *v = rng.random_range(-1.0..=1.0);
        }
        f
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

    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    pub fn set(&mut self, site: usize, value: f64) {
        self.values[site] = value;
    }

    pub fn neighbours(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbours.of(site).iter().map(|&s| s as usize)
    }

    /// `-beta sum_bonds phi phi' + beta omega sum_y phi^2`.
    pub fn action(&self, params: &WallParams) -> f64 {
        let g = &self.geometry;
        let bonds: f64 = (0..g.n_links())
            .map(|i| {
                let (a, b) = g.link_sites(i);
                self.values[a] * self.values[b]
            })
            .sum();
        let sq: f64 = self.values.iter().map(|v| v * v).sum();
        -params.beta * bonds + params.curvature() * sq
    }

    /// `h(y) = beta sum_{y' ~ y} phi(y')`.
    pub fn local_field(&self, site: usize, params: &WallParams) -> f64 {
        params.beta * self.neighbours.of(site).iter().map(|&s| self.values[s as usize]).sum::<f64>()
    }

    pub fn local_delta(&self, site: usize, t: f64, params: &WallParams) -> f64 {
        let old = self.values[site];
        -self.local_field(site, params) * (t - old) + params.curvature() * (t * t - old * old)
    }

    /// Visits every site once in index order. Heatbath draws from the exact
    /// conditional of the configured measure; Metropolis is only defined on
    /// the hard interval.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        params: &WallParams,
        scheme: UpdateScheme,
        rng: &mut R,
    ) -> Result<SweepStats> {
        params.validate()?;
        scheme.validate()?;
        let n = self.values.len();
        let a = params.curvature();
        let mut stats = SweepStats { proposed: n, accepted: 0 };
        match (scheme, params.measure) {
            (UpdateScheme::Heatbath, Measure::HardInterval) => {
                for s in 0..n {
                    let h = self.local_field(s, params);
                    self.values[s] = sample_truncated(h, a, rng);
                }
                stats.accepted = n;
            }
            (UpdateScheme::Heatbath, Measure::SmoothP(p)) => {
                for s in 0..n {
                    let h = self.local_field(s, params);
                    self.values[s] = sample_smooth(h, a, p, rng);
                }
                stats.accepted = n;
            }
            (UpdateScheme::Metropolis { width }, Measure::HardInterval) => {
                for s in 0..n {
                    let old = self.values[s];
                    let t = reflect_into_unit(old + width * (2.0 * rng.random::<f64>() - 1.0));
                    let delta = self.local_delta(s, t, params);
                    if delta <= 0.0 || open_unit(rng) < (-delta).exp() {
                        self.values[s] = t;
                        stats.accepted += 1;
                    }
                }
            }
            (UpdateScheme::Metropolis { .. }, Measure::SmoothP(_)) => {
                return Err(Error::Unsupported("Metropolis updates need the hard-interval measure".into()));
            }
        }
        Ok(stats)
    }

    /// `(1 / N) sum_y phi(y) phi(y + sep)` over the `N` sites whose partner lies
    /// on the lattice.
    pub fn correlator_at(&self, sep: &[isize]) -> Result<f64> {
        let pairs = partner_pairs(&self.geometry, sep)?;
        Ok(pairs.iter().map(|&(a, b)| self.values[a as usize] * self.values[b as usize]).sum::<f64>()
            / pairs.len() as f64)
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }
}

/// Membrane action in unscaled units,
/// `1/2 sum_bonds (psi' - psi)^2 + r/2 sum_y psi^2`, for fields in `[-D, D]`.
pub fn membrane_action(geometry: &LatticeGeometry, psi: &[f64], r: f64) -> f64 {
    let grad: f64 = (0..geometry.n_links())
        .map(|i| {
            let (a, b) = geometry.link_sites(i);
            (psi[b] - psi[a]).powi(2)
        })
        .sum();
    0.5 * grad + 0.5 * r * psi.iter().map(|v| v * v).sum::<f64>()
}

fn partner_pairs(g: &LatticeGeometry, sep: &[isize]) -> Result<Vec<(u32, u32)>> {
    if sep.len() != g.dim() {
        return Err(Error::InvalidParams(format!(
            "separation has {} components on a {}-dimensional lattice",
            sep.len(),
            g.dim()
        )));
    }
    let mut pairs = Vec::new();
    'sites: for s in 0..g.n_sites() {
        let mut t = s;
        for (dir, &x) in sep.iter().enumerate() {
            match g.shift(t, dir, x) {
                Some(u) => t = u,
                None => continue 'sites,
            }
        }
        pairs.push((s as u32, t as u32));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParams(format!("separation {sep:?} does not fit the lattice")));
    }
    Ok(pairs)
}

/// Largest separation measured along `axis` by default: `L / 2` on periodic
/// lattices, `L - 1` on open ones.
pub fn default_max_separation(g: &LatticeGeometry, axis: usize) -> usize {
    match g.boundary() {
        Boundary::Periodic => g.extents()[axis] / 2,
        Boundary::Open => g.extents()[axis] - 1,
    }
}

/// Translation-averaged `<phi(0) phi(x e_axis)>` and the matching sign
/// correlator for `x = 0..=max_sep`, along each configured axis.
#[derive(Debug, Clone)]
pub struct CorrelatorMeasurer {
    axes: Vec<usize>,
    max_sep: usize,
    pairs: Vec<Vec<(u32, u32)>>,
}

impl CorrelatorMeasurer {
    pub fn new(g: &LatticeGeometry, axes: &[usize], max_sep: Option<usize>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|&a| a >= g.dim()) {
            return Err(Error::InvalidParams(format!("correlator axes {axes:?} invalid for dimension {}", g.dim())));
        }
        let max_sep = match max_sep {
            Some(m) => m,
            None => axes.iter().map(|&a| default_max_separation(g, a)).min().unwrap_or(0),
        };
        let mut pairs = Vec::new();
        for &a in axes {
            if max_sep > default_max_separation(g, a) {
                return Err(Error::InvalidParams(format!("separation {max_sep} too large along axis {a}")));
            }
            for x in 0..=max_sep {
                let mut sep = vec![0isize; g.dim()];
                sep[a] = x as isize;
                pairs.push(partner_pairs(g, &sep)?);
            }
        }
        Ok(CorrelatorMeasurer { axes: axes.to_vec(), max_sep, pairs })
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn max_sep(&self) -> usize {
        self.max_sep
    }

    /// Site pairs averaged at each (axis, separation), in output order.
    pub fn pairs(&self) -> &[Vec<(u32, u32)>] {
        &self.pairs
    }

    /// Values ordered by axis, then separation; the sign correlator uses
    /// `tau = sgn phi` with `sgn 0 = +1`.
    pub fn measure(&self, field: &SpinField) -> (Vec<f64>, Vec<f64>) {
        let v = field.values();
        let sgn = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
        self.pairs
            .iter()
            .map(|pairs| {
                let (mut c, mut s) = (0.0, 0.0);
                for &(a, b) in pairs {
                    let (x, y) = (v[a as usize], v[b as usize]);
                    c += x * y;
                    s += sgn(x) * sgn(y);
                }
                let n = pairs.len() as f64;
                (c / n, s / n)
            })
            .unzip()
    }
}

/// Per-configuration correlator measurements of one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSeries {
    pub axes: Vec<usize>,
    pub max_sep: usize,
    /// `phi[axis_slot][x]` and `tau[axis_slot][x]`.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub tau: Vec<Vec<Vec<f64>>>,
}

impl CorrelatorSeries {
    pub fn new(m: &CorrelatorMeasurer) -> Self {
        let empty = vec![vec![Vec::new(); m.max_sep + 1]; m.axes.len()];
        CorrelatorSeries { axes: m.axes.clone(), max_sep: m.max_sep, phi: empty.clone(), tau: empty }
    }

    pub fn push(&mut self, phi: &[f64], tau: &[f64]) {
        let w = self.max_sep + 1;
        for (i, (p, t)) in phi.iter().zip(tau).enumerate() {
            self.phi[i / w][i % w].push(*p);
            self.tau[i / w][i % w].push(*t);
        }
    }

    pub fn n_measurements(&self) -> usize {
        self.phi.first().and_then(|a| a.first()).map(Vec::len).unwrap_or(0)
    }

    /// Per-measurement average over axes, `[x][measurement]`.
    pub fn axis_averaged(&self, sign: bool) -> Vec<Vec<f64>> {
        let src = if sign { &self.tau } else { &self.phi };
        let n = self.n_measurements();
        (0..=self.max_sep)
            .map(|x| {
                (0..n)
                    .map(|i| src.iter().map(|a| a[x][i]).sum::<f64>() / src.len() as f64)
                    .collect()
            })
            .collect()
    }
}

/// `<phi(0) phi(N1 e_1)>^N0`, the Wilson loop of the frozen-spatial gauge
/// theory, with the correlator at separation `N1` given as binned data.
pub fn frozen_spatial_loop(correlator_n1: &BinnedSeries, n0: u32) -> Result<EstimateWithError> {
    if n0 == 0 {
        return Err(Error::InvalidLoop("loop extent N0 must be >= 1".into()));
    }
    let c = correlator_n1.mean();
    if !(c > 0.0) {
        return Err(Error::NonPositive(format!("correlator {c:e} is not positive")));
    }
    jackknife(&[correlator_n1], |m| m[0].powi(n0 as i32))
}
