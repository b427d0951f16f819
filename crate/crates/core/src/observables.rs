//! Gauge-invariant measurements and their post-processing: Wilson and sign
//! loops, plaquette averages, Creutz ratios, effective masses and area-law fits.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry};
use crate::model::GaugeField;
use crate::stats::{auto_bin_size, jackknife, BinSize, BinnedSeries, EstimateWithError};

/// A rectangle of `n_mu x n_nu` plaquettes in plane `(mu, nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub mu: usize,
    pub nu: usize,
    pub corner: usize,
    pub n_mu: usize,
    pub n_nu: usize,
}

impl LoopSpec {
    pub fn links(&self, geometry: &LatticeGeometry) -> Result<Vec<usize>> {
        geometry.rect_loop_links(self.mu, self.nu, self.corner, self.n_mu, self.n_nu)
    }
}

/// `A(C)`, the product of link values around the loop.
pub fn wilson_loop(field: &GaugeField, spec: &LoopSpec) -> Result<f64> {
    Ok(spec.links(field.geometry())?.iter().map(|&l| field.get(l)).product())
}

/// `A'(C)`, the product of link signs around the loop (`sgn 0 = +1`).
pub fn ising_loop(field: &GaugeField, spec: &LoopSpec) -> Result<i8> {
    let negatives = spec
        .links(field.geometry())?
        .iter()
        .filter(|&&l| field.get(l) < 0.0)
        .count();
    Ok(if negatives % 2 == 0 { 1 } else { -1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaquetteAverages {
    /// Planes `(0, j)`.
    pub temporal: f64,
    /// Planes `(j, k)`; absent in two dimensions.
    pub spatial: Option<f64>,
}

pub fn average_plaquette(field: &GaugeField) -> PlaquetteAverages {
    let g = field.geometry();
    let (mut st, mut nt, mut ss, mut ns) = (0.0, 0usize, 0.0, 0usize);
    for p in 0..g.n_plaquettes() {
        let v = field.plaquette(p);
        if g.plaquette_plane(p).0 == 0 {
            st += v;
            nt += 1;
        } else {
            ss += v;
            ns += 1;
        }
    }
    PlaquetteAverages {
        temporal: if nt > 0 { st / nt as f64 } else { 0.0 },
        spatial: (ns > 0).then(|| ss / ns as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneClass {
    /// Planes `(0, j)`: `T` runs along direction 0 and `R` along `j`.
    Temporal,
    /// Planes `(j, k)`, both orientations.
    Spatial,
}

impl fmt::Display for PlaneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlaneClass::Temporal => "temporal",
            PlaneClass::Spatial => "spatial",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    Wilson,
    Ising,
}

impl fmt::Display for LoopKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoopKind::Wilson => "wilson",
            LoopKind::Ising => "ising",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LoopKey {
    pub plane: PlaneClass,
    pub kind: LoopKind,
    pub r: usize,
    pub t: usize,
}

/// Precomputed link lists for every translate and equivalent orientation of
/// each `R x T` loop shape up to the configured maxima.
#[derive(Debug, Clone)]
pub struct LoopMeasurer {
    shapes: Vec<LoopShape>,
}

#[derive(Debug, Clone)]
struct LoopShape {
    plane: PlaneClass,
    r: usize,
    t: usize,
    len: usize,
    links: Vec<u32>,
}

impl LoopMeasurer {
    pub fn new(geometry: &LatticeGeometry, max_r: usize, max_t: usize) -> Result<Self> {
        if max_r < 1 || max_t < 1 {
            return Err(Error::InvalidLoop("loop maxima must be >= 1".into()));
        }
        let d = geometry.dim();
        let mut shapes = Vec::new();
        for plane in [PlaneClass::Temporal, PlaneClass::Spatial] {
            for r in 1..=max_r {
                for t in 1..=max_t {
                    // (mu, nu, n_mu, n_nu) orientations belonging to this class
                    let mut orient = Vec::new();
                    match plane {
                        PlaneClass::Temporal => {
                            for j in 1..d {
                                orient.push((0, j, t, r));
                            }
                        }
                        PlaneClass::Spatial => {
                            for j in 1..d {
                                for k in j + 1..d {
                                    orient.push((j, k, r, t));
                                    if r != t {
                                        orient.push((j, k, t, r));
                                    }
                                }
                            }
                        }
                    }
                    let mut links = Vec::new();
                    for (mu, nu, a, b) in orient {
                        for c in geometry.loop_corners(mu, nu, a, b) {
                            links.extend(
                                geometry.rect_loop_links(mu, nu, c, a, b)?.into_iter().map(|l| l as u32),
                            );
                        }
                    }
                    if !links.is_empty() {
                        shapes.push(LoopShape { plane, r, t, len: 2 * (r + t), links });
                    }
                }
            }
        }
        Ok(LoopMeasurer { shapes })
    }

    pub fn keys(&self) -> impl Iterator<Item = LoopKey> + '_ {
        self.shapes.iter().flat_map(|s| {
            [LoopKind::Wilson, LoopKind::Ising].map(|kind| LoopKey { plane: s.plane, kind, r: s.r, t: s.t })
        })
    }

    /// Link lists of every placement averaged under each Wilson-loop key.
    pub fn wilson_placements(&self) -> Vec<(LoopKey, Vec<Vec<usize>>)> {
        self.shapes
            .iter()
            .map(|s| {
                let key = LoopKey { plane: s.plane, kind: LoopKind::Wilson, r: s.r, t: s.t };
                (key, s.links.chunks_exact(s.len).map(|c| c.iter().map(|&l| l as usize).collect()).collect())
            })
            .collect()
    }

    /// Translation- and orientation-averaged loops of one configuration.
    pub fn measure(&self, field: &GaugeField) -> Vec<(LoopKey, f64)> {
        let v = field.values();
        let mut out = Vec::with_capacity(2 * self.shapes.len());
        for s in &self.shapes {
            let (mut w, mut z) = (0.0, 0i64);
            for lp in s.links.chunks_exact(s.len) {
                let mut prod = 1.0;
                let mut neg = false;
                for &l in lp {
                    let x = v[l as usize];
                    prod *= x;
                    neg ^= x < 0.0;
                }
                w += prod;
                z += if neg { -1 } else { 1 };
            }
            let n = (s.links.len() / s.len) as f64;
            out.push((LoopKey { plane: s.plane, kind: LoopKind::Wilson, r: s.r, t: s.t }, w / n));
            out.push((LoopKey { plane: s.plane, kind: LoopKind::Ising, r: s.r, t: s.t }, z as f64 / n));
        }
        out
    }
}

/// Per-configuration loop measurements of one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopSeries {
    pub entries: Vec<(LoopKey, Vec<f64>)>,
}

impl LoopSeries {
    pub fn push(&mut self, row: &[(LoopKey, f64)]) {
        if self.entries.is_empty() {
            self.entries = row.iter().map(|&(k, _)| (k, Vec::new())).collect();
        }
        for ((key, series), (k, v)) in self.entries.iter_mut().zip(row) {
            debug_assert_eq!(key, k);
            series.push(*v);
        }
    }

    pub fn n_measurements(&self) -> usize {
        self.entries.first().map(|e| e.1.len()).unwrap_or(0)
    }
}

/// Loop estimates sharing one bin size, so ratios of loops can be jackknifed.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTable {
    pub bin_size: usize,
    entries: BTreeMap<LoopKey, BinnedSeries>,
}

impl LoopTable {
    /// Bins the series of several independent chains. With `BinSize::Auto` the
    /// largest automatic bin size over all entries and chains is used.
    pub fn from_chains(chains: &[&LoopSeries], bin_size: BinSize) -> Result<Self> {
        let b = match bin_size {
            BinSize::Fixed(b) => b,
            BinSize::Auto => chains
                .iter()
                .flat_map(|c| c.entries.iter().map(|(_, s)| auto_bin_size(s)))
                .max()
                .unwrap_or(1),
        };
        let mut entries: BTreeMap<LoopKey, Vec<BinnedSeries>> = BTreeMap::new();
        for c in chains {
            for (k, s) in &c.entries {
                entries.entry(*k).or_default().push(BinnedSeries::new(s, b)?);
            }
        }
        let entries = entries
            .into_iter()
            .map(|(k, parts)| Ok((k, BinnedSeries::concat(&parts)?)))
            .collect::<Result<_>>()?;
        Ok(LoopTable { bin_size: b, entries })
    }

    /// Table built directly from binned data, e.g. synthetic values.
    pub fn from_binned(bin_size: usize, entries: impl IntoIterator<Item = (LoopKey, BinnedSeries)>) -> Self {
        LoopTable { bin_size, entries: entries.into_iter().collect() }
    }

    pub fn series(&self, key: &LoopKey) -> Option<&BinnedSeries> {
        self.entries.get(key)
    }

    pub fn estimate(&self, key: &LoopKey) -> Option<EstimateWithError> {
        self.entries.get(key).map(BinnedSeries::estimate)
    }

    pub fn keys(&self) -> impl Iterator<Item = &LoopKey> {
        self.entries.keys()
    }

    pub fn estimates(&self) -> impl Iterator<Item = (LoopKey, EstimateWithError)> + '_ {
        self.entries.iter().map(|(k, s)| (*k, s.estimate()))
    }

    fn require(&self, key: LoopKey) -> Result<&BinnedSeries> {
        self.entries
            .get(&key)
            .ok_or_else(|| Error::InvalidLoop(format!("table has no entry {key:?}")))
    }

    /// `chi(R, T) = -ln[W(R,T) W(R-1,T-1) / (W(R-1,T) W(R,T-1))]` with
    /// `W(0, .) = W(., 0) = 1`, jackknifed over bins.
    pub fn creutz_ratio(&self, plane: PlaneClass, kind: LoopKind, r: usize, t: usize) -> Result<EstimateWithError> {
        if r < 1 || t < 1 {
            return Err(Error::InvalidLoop("Creutz ratio needs R, T >= 1".into()));
        }
        let key = |r, t| LoopKey { plane, kind, r, t };
        let mut series = Vec::new();
        let mut slot = |r: usize, t: usize| -> Result<Option<usize>> {
            if r == 0 || t == 0 {
                return Ok(None);
            }
            let s = self.require(key(r, t))?;
            let m = s.mean();
            if !(m > 0.0) {
                return Err(Error::NonPositive(format!("W({r},{t}) = {m:e}")));
            }
            series.push(s);
            Ok(Some(series.len() - 1))
        };
        let idx = [slot(r, t)?, slot(r - 1, t - 1)?, slot(r - 1, t)?, slot(r, t - 1)?];
        let w = |m: &[f64], i: Option<usize>| i.map(|i| m[i]).unwrap_or(1.0);
        jackknife(&series, |m| {
            let (a, b, c, d) = (w(m, idx[0]), w(m, idx[1]), w(m, idx[2]), w(m, idx[3]));
            if a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0 {
                -(a * b / (c * d)).ln()
            } else {
                f64::NAN
            }
        })
    }

    /// `W(R,T) W(R-1,T-1) - e^{-sigma} W(R-1,T) W(R,T-1)`, the Creutz
    /// inequality `chi >= sigma` written without logarithms so that it stays
    /// defined when the loops are buried in noise.
    pub fn creutz_margin(
        &self,
        plane: PlaneClass,
        kind: LoopKind,
        r: usize,
        t: usize,
        sigma: f64,
    ) -> Result<EstimateWithError> {
        if r < 1 || t < 1 {
            return Err(Error::InvalidLoop("Creutz ratio needs R, T >= 1".into()));
        }
        let key = |r, t| LoopKey { plane, kind, r, t };
        let mut series = Vec::new();
        let mut slot = |r: usize, t: usize| -> Result<Option<usize>> {
            if r == 0 || t == 0 {
                return Ok(None);
            }
            series.push(self.require(key(r, t))?);
            Ok(Some(series.len() - 1))
        };
        let idx = [slot(r, t)?, slot(r - 1, t - 1)?, slot(r - 1, t)?, slot(r, t - 1)?];
        let factor = (-sigma).exp();
        let w = |m: &[f64], i: Option<usize>| i.map(|i| m[i]).unwrap_or(1.0);
        jackknife(&series, |m| {
            w(m, idx[0]) * w(m, idx[1]) - factor * w(m, idx[2]) * w(m, idx[3])
        })
    }

    /// Weighted least-squares fit of `ln W = -sigma R T - rho (R + T) - c` over
    /// the given sizes; errors by jackknife of the whole fit.
    pub fn area_law_fit(&self, plane: PlaneClass, kind: LoopKind, sizes: &[(usize, usize)]) -> Result<AreaLawFit> {
        if sizes.len() < 3 {
            return Err(Error::InvalidParams("area-law fit needs at least 3 loop sizes".into()));
        }
        let mut series = Vec::new();
        let mut weights = Vec::new();
        for &(r, t) in sizes {
            let s = self.require(LoopKey { plane, kind, r, t })?;
            let e = s.estimate();
            if !(e.mean > 0.0) {
                return Err(Error::NonPositive(format!("W({r},{t}) = {:e}", e.mean)));
            }
            // variance of ln W is (err / W)^2
            let rel = if e.error > 0.0 { e.error / e.mean } else { 1e-12 };
            weights.push(1.0 / (rel * rel));
            series.push(s);
        }
        let fit = |m: &[f64], which: usize| -> f64 {
            match solve_area_law(sizes, m, &weights) {
                Some(p) => p[which],
                None => f64::NAN,
            }
        };
        Ok(AreaLawFit {
            sigma: jackknife(&series, |m| fit(m, 0))?,
            rho: jackknife(&series, |m| fit(m, 1))?,
            c: jackknife(&series, |m| fit(m, 2))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaLawFit {
    pub sigma: EstimateWithError,
    pub rho: EstimateWithError,
    pub c: EstimateWithError,
}

fn solve_area_law(sizes: &[(usize, usize)], w: &[f64], weights: &[f64]) -> Option<[f64; 3]> {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for ((&(r, t), &wv), &wt) in sizes.iter().zip(w).zip(weights) {
        if !(wv > 0.0) {
            return None;
        }
        let row = [-((r * t) as f64), -((r + t) as f64), -1.0];
        let y = wv.ln();
        for i in 0..3 {
            b[i] += wt * row[i] * y;
            for j in 0..3 {
                a[i][j] += wt * row[i] * row[j];
            }
        }
    }
    solve3(a, b)
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `ln cosh y` without overflow.
fn ln_cosh(y: f64) -> f64 {
    let y = y.abs();
    y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mass `m` with `cosh(m (x - L/2)) / cosh(m (x + 1 - L/2)) = ratio`, for
/// `x + 1 <= L / 2`.
fn cosh_mass(ratio: f64, x: usize, extent: usize) -> Option<f64> {
    let half = extent as f64 / 2.0;
    let (a, b) = (x as f64 - half, x as f64 + 1.0 - half);
    if !(ratio > 1.0) || b > 0.0 || a.abs() <= b.abs() {
        return None;
    }
    let target = ratio.ln();
    let f = |m: f64| ln_cosh(m * a) - ln_cosh(m * b);
    // f is increasing in m with slope |a| - |b| = 1 asymptotically
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Local mass between separations `x` and `x + 1`. Open lattices use the plain
/// log ratio; periodic ones invert the `cosh` form with period `extent`.
pub fn effective_mass_value(c_x: f64, c_next: f64, x: usize, boundary: Boundary, extent: usize) -> Option<f64> {
    if !(c_x > 0.0 && c_next > 0.0) {
        return None;
    }
    match boundary {
        Boundary::Open => Some((c_x / c_next).ln()),
        Boundary::Periodic => cosh_mass(c_x / c_next, x, extent),
    }
}

/// Effective masses of a binned correlator `C(0), C(1), ...`, one entry per
/// separation `x` with `C(x + 1)` available. Entries where the mass is
/// undefined (nonpositive correlator or ratio) are errors.
pub fn effective_mass(
    correlator: &[BinnedSeries],
    boundary: Boundary,
    extent: usize,
) -> Vec<Result<EstimateWithError>> {
    (0..correlator.len().saturating_sub(1))
        .map(|x| {
            let (a, b) = (&correlator[x], &correlator[x + 1]);
            if !(a.mean() > 0.0 && b.mean() > 0.0) {
                return Err(Error::NonPositive(format!(
                    "correlator at x = {x}, {} is {:e}, {:e}",
                    x + 1,
                    a.mean(),
                    b.mean()
                )));
            }
            jackknife(&[a, b], |m| {
                effective_mass_value(m[0], m[1], x, boundary, extent).unwrap_or(f64::NAN)
            })
        })
        .collect()
}
