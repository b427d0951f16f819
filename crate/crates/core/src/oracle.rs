//! Exact expectation values on tiny lattices by Gauss–Legendre quadrature.
//!
//! Every variable is discretised on the same symmetric node set in `[-1, 1]`
//! with weight `w_i exp(-a t_i^2) t_i^e`; every interaction contributes a
//! factor `exp(c prod t)` evaluated on node tuples. The resulting tensor
//! network is contracted by variable elimination.
//!
//! Two exact symmetry reductions keep the tensors small. A monomial that is
//! odd under some sign-flip symmetry of the weight (a gauge transformation, or
//! the global flip of a spin model) integrates to exactly zero. For an even
//! monomial the flips can be used to fix the sign of a maximal independent
//! set of variables (a spanning tree of links in the gauge case), which halves
//! their node sets without changing the quadrature sum.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::model::{Measure, ModelParams, SpatialCoupling};
use crate::observables::LoopSpec;
use crate::twowall::WallParams;

/// Symmetric Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let legendre = |z: f64| {
        // (P_n(z), P_{n-1}(z))
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, pm) = legendre(z);
            let dz = pn / (n as f64 * (z * pn - pm) / (z * z - 1.0));
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (pn, pm) = legendre(z);
        let dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[n - 1 - i] = z;
        x[i] = -z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Starting node count per variable; must be even.
    pub n_nodes: usize,
    /// Doubling stops here.
    pub max_nodes: usize,
    pub rule: QuadratureRule,
    /// Relative change between `n` and `2n` nodes accepted as converged.
    pub convergence_tol: f64,
    /// Largest tensor (in entries) the contraction may create.
    pub max_entries: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            n_nodes: 16,
            max_nodes: 128,
            rule: QuadratureRule::GaussLegendre,
            convergence_tol: 1e-10,
            max_entries: 1 << 25,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 || self.n_nodes % 2 != 0 {
            return Err(Error::InvalidParams(format!("n_nodes = {} must be even and >= 2", self.n_nodes)));
        }
        if self.max_nodes < 2 * self.n_nodes {
            return Err(Error::InvalidParams(format!(
                "max_nodes = {} leaves no room for a doubling from {}",
                self.max_nodes, self.n_nodes
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParams("convergence_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// `prod_v t_v^(e_v)` as a sparse map from variable index to exponent.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Monomial(pub BTreeMap<usize, u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn var(v: usize) -> Self {
        Monomial::from_vars([v])
    }

    /// Product of the listed variables; repeats raise the exponent.
    pub fn from_vars(vars: impl IntoIterator<Item = usize>) -> Self {
        let mut m = BTreeMap::new();
        for v in vars {
            *m.entry(v).or_insert(0) += 1;
        }
        Monomial(m)
    }

    pub fn exponent(&self, v: usize) -> u32 {
        self.0.get(&v).copied().unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut m = self.0.clone();
        for (&v, &e) in &other.0 {
            *m.entry(v).or_insert(0) += e;
        }
        m.retain(|_, e| *e > 0);
        Monomial(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// Node count of the reported value.
    pub n_nodes: usize,
    /// Relative change against the value at half the nodes.
    pub change: f64,
}

/// A weight `prod_v exp(-a_v t_v^2) prod_f exp(c_f prod_{v in f} t_v)` over
/// variables in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct FactorModel {
    curvatures: Vec<f64>,
    factors: Vec<(f64, Vec<usize>)>,
    /// Sign flips that leave every factor invariant, as variable sets.
    symmetries: Vec<Vec<usize>>,
    /// Candidate sets of variables whose sign the symmetries can fix; the
    /// planner picks the one giving the smallest tensors.
    pivot_candidates: Vec<Vec<bool>>,
}

impl FactorModel {
    pub fn new(curvatures: Vec<f64>, factors: Vec<(f64, Vec<usize>)>, symmetries: Vec<Vec<usize>>) -> Result<Self> {
        let n = curvatures.len();
        for (c, vars) in &factors {
            if !c.is_finite() {
                return Err(Error::InvalidParams(format!("factor coupling {c} is not finite")));
            }
            let mut s = vars.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != vars.len() || vars.iter().any(|&v| v >= n) {
                return Err(Error::InvalidParams(format!("factor variables {vars:?} invalid")));
            }
        }
        for sym in &symmetries {
            if sym.iter().any(|&v| v >= n) {
                return Err(Error::InvalidParams(format!("symmetry {sym:?} out of range")));
            }
            for (_, vars) in &factors {
                let hits = vars.iter().filter(|v| sym.contains(v)).count();
                if hits % 2 == 1 {
                    return Err(Error::InvalidParams(format!("{sym:?} is not a symmetry of factor {vars:?}")));
                }
            }
        }
        let pivot_candidates = pivot_candidates(n, &symmetries);
        Ok(FactorModel { curvatures, factors, symmetries, pivot_candidates })
    }

    /// Link variables and plaquette factors of the gauge model; symmetries are
    /// the single-site gauge transformations.
    pub fn gauge(geometry: &LatticeGeometry, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if params.beta_spatial == SpatialCoupling::Infinite {
            return Err(Error::Unsupported("the oracle needs a finite spatial coupling".into()));
        }
        if params.measure != Measure::HardInterval {
            return Err(Error::Unsupported("the oracle integrates over the hard interval only".into()));
        }
        let curv = vec![params.curvature(); geometry.n_links()];
        let mut factors = Vec::new();
        for p in 0..geometry.n_plaquettes() {
            let (mu, nu) = geometry.plaquette_plane(p);
            let c = params.coupling(mu, nu);
            if c != 0.0 {
                factors.push((c, geometry.plaquette_link_indices(p).to_vec()));
            }
        }
        let mut stars = vec![Vec::new(); geometry.n_sites()];
        for l in 0..geometry.n_links() {
            let (a, b) = geometry.link_sites(l);
            stars[a].push(l);
            stars[b].push(l);
        }
        FactorModel::new(curv, factors, stars)
    }

    /// Site variables and bond factors of the two-wall model; the symmetry is
    /// the global flip.
    pub fn spin(geometry: &LatticeGeometry, params: &WallParams) -> Result<Self> {
        params.validate()?;
        if params.measure != Measure::HardInterval {
            return Err(Error::Unsupported("the oracle integrates over the hard interval only".into()));
        }
        let curv = vec![params.curvature(); geometry.n_sites()];
        let factors = if params.beta != 0.0 {
            (0..geometry.n_links())
                .map(|l| {
                    let (a, b) = geometry.link_sites(l);
                    (params.beta, vec![a, b])
                })
                .collect()
        } else {
            Vec::new()
        };
        FactorModel::new(curv, factors, vec![(0..geometry.n_sites()).collect()])
    }

    pub fn n_vars(&self) -> usize {
        self.curvatures.len()
    }

    /// Whether some symmetry flips the sign of the monomial.
    pub fn vanishes_by_symmetry(&self, m: &Monomial) -> bool {
        self.symmetries
            .iter()
            .any(|s| s.iter().map(|&v| m.exponent(v)).sum::<u32>() % 2 == 1)
    }

    /// `<m>` converged under node doubling.
    pub fn expectation(&self, m: &Monomial, quad: &QuadratureSpec) -> Result<OracleValue> {
        Ok(self.expectations(std::slice::from_ref(m), quad)?.remove(0))
    }

    /// Several expectations sharing the quadrature tables; doubling continues
    /// until every entry has converged.
    pub fn expectations(&self, monomials: &[Monomial], quad: &QuadratureSpec) -> Result<Vec<OracleValue>> {
        quad.validate()?;
        if let Some(m) = monomials.iter().find(|m| m.0.keys().any(|&v| v >= self.n_vars())) {
            return Err(Error::InvalidParams(format!("monomial {m:?} references unknown variables")));
        }
        let nonzero: Vec<usize> = (0..monomials.len())
            .filter(|&i| !self.vanishes_by_symmetry(&monomials[i]))
            .collect();
        let mut out: Vec<OracleValue> = vec![OracleValue { value: 0.0, n_nodes: quad.n_nodes, change: 0.0 }; monomials.len()];
        if nonzero.is_empty() {
            return Ok(out);
        }
        let mut n = quad.n_nodes;
        let mut prev = self.evaluate_at(n, monomials, &nonzero, quad)?;
        loop {
            let next_n = 2 * n;
            if next_n > quad.max_nodes {
                let worst = out.iter().map(|o| o.change).fold(0.0, f64::max);
                return Err(Error::NotConverged { change: worst, n_nodes: n, tol: quad.convergence_tol });
            }
            let next = self.evaluate_at(next_n, monomials, &nonzero, quad)?;
            let mut done = true;
            for (k, &i) in nonzero.iter().enumerate() {
                let change = (next[k] - prev[k]).abs() / next[k].abs().max(1e-30);
                out[i] = OracleValue { value: next[k], n_nodes: next_n, change };
                if !(change < quad.convergence_tol) {
                    done = false;
                }
            }
            if done {
                return Ok(out);
            }
            n = next_n;
            prev = next;
        }
    }

    fn evaluate_at(&self, n: usize, monomials: &[Monomial], which: &[usize], quad: &QuadratureSpec) -> Result<Vec<f64>> {
        let prepared = Prepared::new(self, n, quad.max_entries)?;
        let z = prepared.integrate(&Monomial::one());
        if !(z.0 > 0.0) {
            return Err(Error::NonPositive(format!("partition function {:e} at {n} nodes", z.0)));
        }
        Ok(which
            .iter()
            .map(|&i| {
                let (m, s) = prepared.integrate(&monomials[i]);
                if m == 0.0 {
                    0.0
                } else {
                    m / z.0 * (s - z.1).exp()
                }
            })
            .collect())
    }

    /// Largest tensor the contraction creates at `n` nodes per variable.
    pub fn peak_entries(&self, n: usize) -> usize {
        plan(self, n).peak
    }
}

/// Pivot columns of the symmetry generators after GF(2) row reduction.
fn gf2_pivots(n_vars: usize, symmetries: &[Vec<usize>], columns: &[usize]) -> Vec<bool> {
    let words = n_vars.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = symmetries
        .iter()
        .map(|s| {
            let mut r = vec![0u64; words];
            for &v in s {
                r[v / 64] ^= 1 << (v % 64);
            }
            r
        })
        .collect();
    let mut pivots = vec![false; n_vars];
    let mut rank = 0;
    for &col in columns {
        let bit = |r: &Vec<u64>| r[col / 64] >> (col % 64) & 1 == 1;
        let Some(p) = (rank..rows.len()).find(|&i| bit(&rows[i])) else { continue };
        rows.swap(rank, p);
        let pivot_row = rows[rank].clone();
        for (i, r) in rows.iter_mut().enumerate() {
            if i != rank && bit(r) {
                for (a, b) in r.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivots[col] = true;
        rank += 1;
    }
    pivots
}

/// Distinct pivot sets from the natural column order and a fixed family of
/// shuffled ones.
fn pivot_candidates(n_vars: usize, symmetries: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let mut columns: Vec<usize> = (0..n_vars).collect();
    let mut out = vec![gf2_pivots(n_vars, symmetries, &columns)];
    if symmetries.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..PIVOT_SHUFFLES {
        columns.shuffle(&mut rng);
        let p = gf2_pivots(n_vars, symmetries, &columns);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

const PIVOT_SHUFFLES: usize = 256;

/// Variable counts up to which the elimination order is optimised exactly.
const EXACT_PLAN_VARS: usize = 20;

#[derive(Debug, Clone)]
struct Plan {
    order: Vec<usize>,
    pivots: Vec<bool>,
    peak: usize,
    total: usize,
}

/// Elimination order, pivot set and the largest tensor they create.
fn plan(model: &FactorModel, n: usize) -> Plan {
    let nv = model.n_vars();
    // keep the exact search to a few million subset steps
    let exact = nv <= EXACT_PLAN_VARS;
    let limit = if exact { ((1usize << 22) >> nv.min(22)).clamp(1, model.pivot_candidates.len()) } else { 16 };
    let mut best: Option<Plan> = None;
    for pivots in model.pivot_candidates.iter().take(limit) {
        let dim: Vec<usize> = (0..nv).map(|v| if pivots[v] { n / 2 } else { n }).collect();
        let factor_peak = model
            .factors
            .iter()
            .map(|(_, vs)| vs.iter().map(|&v| dim[v]).product::<usize>())
            .max()
            .unwrap_or(1);
        let (order, peak, total) = if exact { exact_plan(model, &dim) } else { greedy_plan(model, &dim) };
        let cand = Plan { order, pivots: pivots.clone(), peak: peak.max(factor_peak), total };
        if best.as_ref().is_none_or(|b| (cand.peak, cand.total) < (b.peak, b.total)) {
            best = Some(cand);
        }
    }
    best.expect("at least one pivot candidate")
}

/// Entries of the tensor produced by eliminating `v` after the set `done`:
/// its scope is every live variable sharing a factor with the component of
/// `v` among eliminated variables.
fn elimination_size(adj: &[Vec<usize>], dim: &[usize], done: u64, v: usize) -> usize {
    let mut seen = 1u64 << v;
    let mut stack = vec![v];
    let mut scope = 0u64;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            let bit = 1u64 << w;
            if done & bit != 0 {
                if seen & bit == 0 {
                    seen |= bit;
                    stack.push(w);
                }
            } else if w != v {
                scope |= bit;
            }
        }
    }
    let mut size = 1usize;
    let mut s = scope;
    while s != 0 {
        let w = s.trailing_zeros() as usize;
        size = size.saturating_mul(dim[w]);
        s &= s - 1;
    }
    size
}

fn adjacency(model: &FactorModel) -> Vec<Vec<usize>> {
    let nv = model.n_vars();
    let mut adj = vec![Vec::new(); nv];
    for (_, vs) in &model.factors {
        for &a in vs {
            for &b in vs {
                if a != b && !adj[a].contains(&b) {
                    adj[a].push(b);
                }
            }
        }
    }
    adj
}

/// Dynamic programme over eliminated sets minimising (peak, total) entries.
fn exact_plan(model: &FactorModel, dim: &[usize]) -> (Vec<usize>, usize, usize) {
    let nv = model.n_vars();
    let adj = adjacency(model);
    let full = (1u64 << nv) - 1;
    let mut best = vec![(usize::MAX, usize::MAX); 1 << nv];
    let mut last = vec![0u8; 1 << nv];
    best[0] = (1, 0);
    for set in 1..=full {
        let mut s = set;
        while s != 0 {
            let v = s.trailing_zeros() as usize;
            s &= s - 1;
            let prev = set & !(1u64 << v);
            let (pk, tot) = best[prev as usize];
            let size = elimination_size(&adj, dim, prev, v);
            let cand = (pk.max(size), tot.saturating_add(size));
            if cand < best[set as usize] {
                best[set as usize] = cand;
                last[set as usize] = v as u8;
            }
        }
    }
    let mut order = Vec::with_capacity(nv);
    let mut set = full;
    while set != 0 {
        let v = last[set as usize] as usize;
        order.push(v);
        set &= !(1u64 << v);
    }
    order.reverse();
    let (peak, total) = best[full as usize];
    (order, peak, total)
}

/// Greedy by result size, then fill-in, then incident factor count.
fn greedy_plan(model: &FactorModel, dim: &[usize]) -> (Vec<usize>, usize, usize) {
    let nv = model.n_vars();
    let mut sets: Vec<Vec<usize>> = model.factors.iter().map(|(_, vs)| sorted(vs)).collect();
    let mut peak = 1;
    let mut total = 0usize;
    let mut remaining: Vec<usize> = (0..nv).collect();
    let mut order = Vec::with_capacity(nv);
    while !remaining.is_empty() {
        let mut best: Option<((usize, usize, usize, usize), usize)> = None;
        for &v in &remaining {
            let touching: Vec<&Vec<usize>> = sets.iter().filter(|s| s.contains(&v)).collect();
            let mut union: Vec<usize> = touching.iter().flat_map(|s| s.iter().copied()).filter(|&u| u != v).collect();
            union.sort_unstable();
            union.dedup();
            let size: usize = union.iter().map(|&u| dim[u]).product();
            let mut fill = 0;
            for (i, &a) in union.iter().enumerate() {
                for &b in &union[i + 1..] {
                    if !sets.iter().any(|s| s.contains(&a) && s.contains(&b)) {
                        fill += 1;
                    }
                }
            }
            let key = (size, fill, touching.len(), v);
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, v));
            }
        }
        let (_, v) = best.unwrap();
        let mut union: Vec<usize> = Vec::new();
        sets.retain(|s| {
            if s.contains(&v) {
                union.extend(s.iter().copied().filter(|&u| u != v));
                false
            } else {
                true
            }
        });
        union.sort_unstable();
        union.dedup();
        let size: usize = union.iter().map(|&u| dim[u]).product();
        peak = peak.max(size);
        total = total.saturating_add(size);
        sets.push(union);
        remaining.retain(|&u| u != v);
        order.push(v);
    }
    (order, peak, total)
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

#[derive(Debug, Clone)]
struct Tensor {
    vars: Vec<usize>,
    data: Vec<f64>,
}

/// Node tables, factor tensors and elimination order at one node count.
struct Prepared {
    /// Node values per variable (positive half for pivots).
    nodes: Vec<Vec<f64>>,
    /// `w exp(-a t^2)`, doubled for pivots.
    base_weights: Vec<Vec<f64>>,
    factors: Vec<Tensor>,
    order: Vec<usize>,
    pivots: Vec<bool>,
}

impl Prepared {
    fn new(model: &FactorModel, n: usize, max_entries: usize) -> Result<Self> {
        let Plan { order, pivots, peak, .. } = plan(model, n);
        if peak > max_entries {
            return Err(Error::BudgetExceeded { needed: peak, budget: max_entries });
        }
        let (x, w) = gauss_legendre(n);
        let mut nodes = Vec::with_capacity(model.n_vars());
        let mut base_weights = Vec::with_capacity(model.n_vars());
        for v in 0..model.n_vars() {
            let a = model.curvatures[v];
            let range = if pivots[v] { n / 2..n } else { 0..n };
            let scale = if pivots[v] { 2.0 } else { 1.0 };
            nodes.push(x[range.clone()].to_vec());
            base_weights.push(range.map(|i| scale * w[i] * (-a * x[i] * x[i]).exp()).collect());
        }
        let factors = model
            .factors
            .iter()
            .map(|(c, vars)| {
                let vs = sorted(vars);
                let dims: Vec<usize> = vs.iter().map(|&v| nodes[v].len()).collect();
                let len: usize = dims.iter().product();
                let mut data = vec![0.0; len];
                let mut idx = vec![0usize; vs.len()];
                for d in data.iter_mut() {
                    let prod: f64 = vs.iter().zip(&idx).map(|(&v, &i)| nodes[v][i]).product();
                    *d = (c * prod).exp();
                    for k in (0..idx.len()).rev() {
                        idx[k] += 1;
                        if idx[k] < dims[k] {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
                Tensor { vars: vs, data }
            })
            .collect();
        Ok(Prepared { nodes, base_weights, factors, order, pivots })
    }

    /// Unnormalised integral of the monomial as `(mantissa, log scale)`.
    fn integrate(&self, m: &Monomial) -> (f64, f64) {
        let mut tensors: Vec<Tensor> = self.factors.clone();
        let mut log_scale = 0.0;
        let mut scalar = 1.0;
        for &v in &self.order {
            let e = m.exponent(v);
            let weights: Vec<f64> = self.base_weights[v]
                .iter()
                .zip(&self.nodes[v])
                .map(|(w, t)| w * t.powi(e as i32))
                .collect();
            let paired = !self.pivots[v];
            let (touching, rest): (Vec<Tensor>, Vec<Tensor>) = tensors.into_iter().partition(|t| t.vars.contains(&v));
            tensors = rest;
            let mut out = eliminate(&touching, v, &weights, paired, &self.nodes);
            let max = out.data.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if max == 0.0 {
                return (0.0, 0.0);
            }
            if out.vars.is_empty() {
                scalar *= out.data[0] / max;
                log_scale += max.ln();
            } else {
                out.data.iter_mut().for_each(|x| *x /= max);
                log_scale += max.ln();
                tensors.push(out);
            }
            // keep the running scalar in range
            if scalar != 0.0 {
                let s = scalar.abs();
                log_scale += s.ln();
                scalar /= s;
            }
        }
        debug_assert!(tensors.is_empty());
        (scalar, log_scale)
    }
}

/// `sum_i w_i prod_k T_k[.., i, ..]` over the node index of `v`. With
/// `paired`, the mirror nodes `i` and `n-1-i` are added together first so
/// that odd integrands cancel exactly.
fn eliminate(tensors: &[Tensor], v: usize, weights: &[f64], paired: bool, nodes: &[Vec<f64>]) -> Tensor {
    let mut out_vars: Vec<usize> = tensors.iter().flat_map(|t| t.vars.iter().copied()).filter(|&u| u != v).collect();
    out_vars.sort_unstable();
    out_vars.dedup();
    let out_dims: Vec<usize> = out_vars.iter().map(|&u| nodes[u].len()).collect();
    let out_len: usize = out_dims.iter().product();
    // strides of each input along each output variable, and along v
    let mut in_strides: Vec<Vec<usize>> = Vec::with_capacity(tensors.len());
    let mut v_strides: Vec<usize> = Vec::with_capacity(tensors.len());
    for t in tensors {
        let dims: Vec<usize> = t.vars.iter().map(|&u| nodes[u].len()).collect();
        let mut own = vec![0usize; dims.len()];
        let mut s = 1;
        for k in (0..dims.len()).rev() {
            own[k] = s;
            s *= dims[k];
        }
        let pos = |u: usize| t.vars.iter().position(|&x| x == u);
        in_strides.push(out_vars.iter().map(|&u| pos(u).map(|p| own[p]).unwrap_or(0)).collect());
        v_strides.push(pos(v).map(|p| own[p]).unwrap_or(0));
    }
    let nv = weights.len();
    let mut data = vec![0.0; out_len];
    const CHUNK: usize = 1 << 12;
    data.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let start = c * CHUNK;
        let mut idx = vec![0usize; out_dims.len()];
        let mut rem = start;
        for k in (0..out_dims.len()).rev() {
            idx[k] = rem % out_dims[k];
            rem /= out_dims[k];
        }
        let mut offs: Vec<usize> = in_strides
            .iter()
            .map(|st| st.iter().zip(&idx).map(|(s, i)| s * i).sum())
            .collect();
        let term = |i: usize, offs: &[usize]| -> f64 {
            let mut p = weights[i];
            for (k, t) in tensors.iter().enumerate() {
                p *= t.data[offs[k] + i * v_strides[k]];
            }
            p
        };
        for slot in chunk.iter_mut() {
            let mut acc = 0.0;
            if paired {
                for i in 0..nv / 2 {
                    acc += term(i, &offs) + term(nv - 1 - i, &offs);
                }
                if nv % 2 == 1 {
                    acc += term(nv / 2, &offs);
                }
            } else {
                for i in 0..nv {
                    acc += term(i, &offs);
                }
            }
            *slot = acc;
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                for (o, st) in offs.iter_mut().zip(&in_strides) {
                    *o += st[k];
                }
                if idx[k] < out_dims[k] {
                    break;
                }
                for (o, st) in offs.iter_mut().zip(&in_strides) {
                    *o -= st[k] * out_dims[k];
                }
                idx[k] = 0;
            }
        }
    });
    Tensor { vars: out_vars, data }
}

/// `<prod_l phi(l)^(e_l)>` in the gauge model.
pub fn exact_expectation(
    geometry: &LatticeGeometry,
    params: &ModelParams,
    monomial: &Monomial,
    quad: &QuadratureSpec,
) -> Result<OracleValue> {
    FactorModel::gauge(geometry, params)?.expectation(monomial, quad)
}

pub fn loop_monomial(geometry: &LatticeGeometry, spec: &LoopSpec) -> Result<Monomial> {
    Ok(Monomial::from_vars(spec.links(geometry)?))
}

/// `<A(C)>` for a rectangular loop.
pub fn exact_loop(
    geometry: &LatticeGeometry,
    params: &ModelParams,
    spec: &LoopSpec,
    quad: &QuadratureSpec,
) -> Result<OracleValue> {
    exact_expectation(geometry, params, &loop_monomial(geometry, spec)?, quad)
}

/// One failed correlation inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GksViolation {
    /// `<phi^A> < -tol`.
    First { a: Monomial, value: f64 },
    /// `<phi^A phi^B> - <phi^A><phi^B> < -tol`.
    Second { a: Monomial, b: Monomial, covariance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GksReport {
    pub n_monomials: usize,
    pub n_pairs: usize,
    pub violations: Vec<GksViolation>,
}

/// Tolerance of the inequality scans.
pub const GKS_TOL: f64 = 1e-10;

/// All monomials with every exponent in `0..=max_degree`.
pub fn monomials_up_to(n_vars: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut e = vec![0u32; n_vars];
    loop {
        out.push(Monomial(e.iter().enumerate().filter(|(_, &x)| x > 0).map(|(v, &x)| (v, x)).collect()));
        let mut k = 0;
        loop {
            if k == n_vars {
                return out;
            }
            e[k] += 1;
            if e[k] <= max_degree {
                break;
            }
            e[k] = 0;
            k += 1;
        }
    }
}

/// Checks both GKS inequalities for all monomials of per-variable degree at
/// most `max_degree` (and all pairs of them).
pub fn gks_scan(model: &FactorModel, max_degree: u32, quad: &QuadratureSpec) -> Result<GksReport> {
    let base = monomials_up_to(model.n_vars(), max_degree);
    let products = monomials_up_to(model.n_vars(), 2 * max_degree);
    let values = model.expectations(&products, quad)?;
    let lookup: BTreeMap<&Monomial, f64> = products.iter().zip(&values).map(|(m, v)| (m, v.value)).collect();
    let mut violations = Vec::new();
    for a in &base {
        let va = lookup[a];
        if va < -GKS_TOL {
            violations.push(GksViolation::First { a: a.clone(), value: va });
        }
    }
    let mut n_pairs = 0;
    for (i, a) in base.iter().enumerate() {
        for b in &base[i..] {
            n_pairs += 1;
            let cov = lookup[&a.mul(b)] - lookup[a] * lookup[b];
            if cov < -GKS_TOL {
                violations.push(GksViolation::Second { a: a.clone(), b: b.clone(), covariance: cov });
            }
        }
    }
    Ok(GksReport { n_monomials: base.len(), n_pairs, violations })
}

/// `<A(C)>` at each spatial coupling of the grid; fails if the sequence
/// decreases by more than the scan tolerance anywhere along an ascending grid.
pub fn monotonicity_check(
    geometry: &LatticeGeometry,
    params: &ModelParams,
    spec: &LoopSpec,
    beta_spatial_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<Vec<(f64, OracleValue)>> {
    if beta_spatial_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParams("spatial coupling grid must be ascending".into()));
    }
    let m = loop_monomial(geometry, spec)?;
    let mut out: Vec<(f64, OracleValue)> = Vec::with_capacity(beta_spatial_grid.len());
    for (i, &bs) in beta_spatial_grid.iter().enumerate() {
        let p = ModelParams::anisotropic(params.beta, params.omega, bs)?;
        let v = exact_expectation(geometry, &p, &m, quad)?;
        if let Some((_, prev)) = out.last() {
            if v.value < prev.value - GKS_TOL {
                return Err(Error::MonotonicityViolated { index: i, previous: prev.value, value: v.value });
            }
        }
        out.push((bs, v));
    }
    Ok(out)
}

/// `<phi(a) phi(b)>` in the two-wall model.
pub fn exact_spin_correlator(
    geometry: &LatticeGeometry,
    params: &WallParams,
    a: usize,
    b: usize,
    quad: &QuadratureSpec,
) -> Result<OracleValue> {
    FactorModel::spin(geometry, params)?.expectation(&Monomial::from_vars([a, b]), quad)
}
