//! Hypercubic lattice geometry: sites, links, plaquettes and rectangular loops.
//!
//! Sites are stored with 0-based coordinates, direction 0 varying fastest.
//! Links are identified by their lower endpoint and a direction, plaquettes by
//! their lower corner and an ordered plane `(mu, nu)` with `mu < nu`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::Open => f.write_str("open"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkRef {
    pub site: usize,
    pub dir: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaquetteRef {
    pub site: usize,
    pub mu: usize,
    pub nu: usize,
}

/// Serialized form of a geometry; everything else is derived on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub dimension: usize,
    pub extents: Vec<usize>,
    pub boundary: Boundary,
}

/// Immutable description of a finite hypercubic lattice with all index maps
/// precomputed. Shared between fields through an `Arc`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GeometrySpec", try_from = "GeometrySpec")]
pub struct LatticeGeometry {
    extents: Vec<usize>,
    boundary: Boundary,
    strides: Vec<usize>,
    n_sites: usize,
    /// `site * d + dir` -> link index, `NONE` where the link leaves an open lattice.
    link_table: Vec<u32>,
    links: Vec<LinkRef>,
    planes: Vec<(usize, usize)>,
    /// `site * n_planes + plane` -> plaquette index.
    plaquette_table: Vec<u32>,
    plaquettes: Vec<PlaquetteRef>,
    plaquette_links: Vec<[u32; 4]>,
    plaquette_plane: Vec<u16>,
    // link -> incident plaquettes, CSR layout
    staple_offsets: Vec<u32>,
    staple_plaquettes: Vec<u32>,
}

impl PartialEq for LatticeGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.extents == other.extents && self.boundary == other.boundary
    }
}

impl From<LatticeGeometry> for GeometrySpec {
    fn from(g: LatticeGeometry) -> Self {
        g.spec()
    }
}

impl TryFrom<GeometrySpec> for LatticeGeometry {
    type Error = Error;

    fn try_from(spec: GeometrySpec) -> Result<Self> {
        if spec.dimension != spec.extents.len() {
            return Err(Error::InvalidGeometry(format!(
                "dimension {} does not match {} extents",
                spec.dimension,
                spec.extents.len()
            )));
        }
        LatticeGeometry::new(&spec.extents, spec.boundary)
    }
}

impl LatticeGeometry {
    /// Geometry for a gauge field: requires `dimension >= 2`.
    pub fn gauge(dimension: usize, extents: &[usize], boundary: Boundary) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidGeometry(format!(
                "gauge lattice needs dimension >= 2, got {dimension}"
            )));
        }
        if extents.len() != dimension {
            return Err(Error::InvalidGeometry(format!(
                "dimension {dimension} does not match {} extents",
                extents.len()
            )));
        }
        Self::new(extents, boundary)
    }

    /// General hypercubic lattice of any dimension >= 1 (spin models use k = 1).
    pub fn new(extents: &[usize], boundary: Boundary) -> Result<Self> {
        let d = extents.len();
        if d == 0 {
            return Err(Error::InvalidGeometry("dimension must be >= 1".into()));
        }
        if let Some((mu, &l)) = extents.iter().enumerate().find(|(_, &l)| l < 2) {
            return Err(Error::InvalidGeometry(format!(
                "extent {l} in direction {mu} is below 2"
            )));
        }
        if boundary == Boundary::Periodic && extents.iter().any(|&l| l == 2) {
            log::warn!(
                "periodic extent 2 in {extents:?}: forward and backward neighbours coincide, \
                 so 1x1 loops wind around the lattice"
            );
        }
        let mut strides = Vec::with_capacity(d);
        let mut n_sites = 1usize;
        for &l in extents {
            strides.push(n_sites);
            n_sites = n_sites
                .checked_mul(l)
                .filter(|&n| n < NONE as usize / (d * d).max(1))
                .ok_or_else(|| Error::InvalidGeometry("lattice too large".into()))?;
        }

        let mut geom = LatticeGeometry {
            extents: extents.to_vec(),
            boundary,
            strides,
            n_sites,
            link_table: vec![NONE; n_sites * d],
            links: Vec::new(),
            planes: Vec::new(),
            plaquette_table: Vec::new(),
            plaquettes: Vec::new(),
            plaquette_links: Vec::new(),
            plaquette_plane: Vec::new(),
            staple_offsets: Vec::new(),
            staple_plaquettes: Vec::new(),
        };

        for site in 0..n_sites {
            for dir in 0..d {
                if geom.shift(site, dir, 1).is_some() {
                    geom.link_table[site * d + dir] = geom.links.len() as u32;
                    geom.links.push(LinkRef { site, dir });
                }
            }
        }

        for mu in 0..d {
            for nu in mu + 1..d {
                geom.planes.push((mu, nu));
            }
        }
        let n_planes = geom.planes.len();
        geom.plaquette_table = vec![NONE; n_sites * n_planes];
        for site in 0..n_sites {
            for (p, &(mu, nu)) in geom.planes.iter().enumerate() {
                let (Some(x_mu), Some(x_nu)) = (geom.shift(site, mu, 1), geom.shift(site, nu, 1))
                else {
                    continue;
                };
                let ls = [
                    geom.link_table[site * d + mu],
                    geom.link_table[x_mu * d + nu],
                    geom.link_table[x_nu * d + mu],
                    geom.link_table[site * d + nu],
                ];
                debug_assert!(ls.iter().all(|&l| l != NONE));
                geom.plaquette_table[site * n_planes + p] = geom.plaquettes.len() as u32;
                geom.plaquettes.push(PlaquetteRef { site, mu, nu });
                geom.plaquette_links.push(ls);
                geom.plaquette_plane.push(p as u16);
            }
        }

        let n_links = geom.links.len();
        let mut counts = vec![0u32; n_links + 1];
        for ls in &geom.plaquette_links {
            for &l in ls {
                counts[l as usize + 1] += 1;
            }
        }
        for i in 0..n_links {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut list = vec![0u32; counts[n_links] as usize];
        for (p, ls) in geom.plaquette_links.iter().enumerate() {
            for &l in ls {
                list[fill[l as usize] as usize] = p as u32;
                fill[l as usize] += 1;
            }
        }
        geom.staple_offsets = counts;
        geom.staple_plaquettes = list;
        Ok(geom)
    }

    pub fn spec(&self) -> GeometrySpec {
        GeometrySpec {
            dimension: self.dim(),
            extents: self.extents.clone(),
            boundary: self.boundary,
        }
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_plaquettes(&self) -> usize {
        self.plaquettes.len()
    }

    /// Ordered planes `(mu, nu)`, `mu < nu`; a plane's position in this list is its plane index.
    pub fn planes(&self) -> &[(usize, usize)] {
        &self.planes
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        self.extents
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| (site / s) % l)
            .collect()
    }

    pub fn coord(&self, site: usize, dir: usize) -> usize {
        (site / self.strides[dir]) % self.extents[dir]
    }

    pub fn site_index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.dim() || coords.iter().zip(&self.extents).any(|(&x, &l)| x >= l) {
            return None;
        }
        Some(coords.iter().zip(&self.strides).map(|(&x, &s)| x * s).sum())
    }

    /// Site reached by `steps` unit steps along `dir`; `None` if it leaves an open lattice.
    pub fn shift(&self, site: usize, dir: usize, steps: isize) -> Option<usize> {
        let l = self.extents[dir] as isize;
        let x = self.coord(site, dir) as isize;
        let y = x + steps;
        let y = match self.boundary {
            Boundary::Periodic => y.rem_euclid(l),
            Boundary::Open if (0..l).contains(&y) => y,
            Boundary::Open => return None,
        };
        Some((site as isize + (y - x) * self.strides[dir] as isize) as usize)
    }

    pub fn link_index(&self, link: LinkRef) -> Option<usize> {
        if link.site >= self.n_sites || link.dir >= self.dim() {
            return None;
        }
        match self.link_table[link.site * self.dim() + link.dir] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn link(&self, index: usize) -> LinkRef {
        self.links[index]
    }

    pub fn links(&self) -> &[LinkRef] {
        &self.links
    }

    /// Both endpoints of a link.
    pub fn link_sites(&self, index: usize) -> (usize, usize) {
        let l = self.links[index];
        (l.site, self.shift(l.site, l.dir, 1).expect("stored links stay inside"))
    }

    pub fn plane_index(&self, mu: usize, nu: usize) -> Option<usize> {
        self.planes.iter().position(|&p| p == (mu, nu))
    }

    pub fn plaquette_index(&self, p: PlaquetteRef) -> Option<usize> {
        let plane = self.plane_index(p.mu, p.nu)?;
        if p.site >= self.n_sites {
            return None;
        }
        match self.plaquette_table[p.site * self.planes.len() + plane] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn plaquette(&self, index: usize) -> PlaquetteRef {
        self.plaquettes[index]
    }

    pub fn plaquette_plane(&self, index: usize) -> (usize, usize) {
        self.planes[self.plaquette_plane[index] as usize]
    }

    /// Link indices of plaquette `index`: `(x,mu)`, `(x+mu,nu)`, `(x+nu,mu)`, `(x,nu)`.
    pub fn plaquette_link_indices(&self, index: usize) -> [usize; 4] {
        self.plaquette_links[index].map(|l| l as usize)
    }

    /// The four links bounding the elementary square at `p`.
    pub fn plaquette_links(&self, p: PlaquetteRef) -> Result<[LinkRef; 4]> {
        let i = self
            .plaquette_index(p)
            .ok_or_else(|| Error::InvalidReference(format!("no plaquette {p:?}")))?;
        Ok(self.plaquette_link_indices(i).map(|l| self.links[l]))
    }

    /// Plaquette indices containing link `index`.
    pub fn incident_plaquettes(&self, index: usize) -> &[u32] {
        let a = self.staple_offsets[index] as usize;
        let b = self.staple_offsets[index + 1] as usize;
        &self.staple_plaquettes[a..b]
    }

    /// All plaquettes containing `link`: `2(d-1)` of them on periodic lattices.
    pub fn staple_plaquettes(&self, link: LinkRef) -> Result<Vec<PlaquetteRef>> {
        let i = self
            .link_index(link)
            .ok_or_else(|| Error::InvalidReference(format!("no link {link:?}")))?;
        Ok(self
            .incident_plaquettes(i)
            .iter()
            .map(|&p| self.plaquettes[p as usize])
            .collect())
    }

    /// Link indices around the `n_mu x n_nu` rectangle with lower corner `corner`
    /// in plane `(mu, nu)`, traversed counter-clockwise from the corner.
    pub fn rect_loop_links(
        &self,
        mu: usize,
        nu: usize,
        corner: usize,
        n_mu: usize,
        n_nu: usize,
    ) -> Result<Vec<usize>> {
        let d = self.dim();
        if mu >= d || nu >= d || mu == nu {
            return Err(Error::InvalidLoop(format!("bad plane ({mu}, {nu})")));
        }
        if corner >= self.n_sites {
            return Err(Error::InvalidLoop(format!("corner {corner} out of range")));
        }
        if n_mu < 1 || n_nu < 1 {
            return Err(Error::InvalidLoop("loop extents must be >= 1".into()));
        }
        if n_mu >= self.extents[mu] || n_nu >= self.extents[nu] {
            return Err(Error::InvalidLoop(format!(
                "{n_mu}x{n_nu} loop winds or exceeds extents ({}, {})",
                self.extents[mu], self.extents[nu]
            )));
        }
        if self.boundary == Boundary::Open
            && (self.coord(corner, mu) + n_mu >= self.extents[mu]
                || self.coord(corner, nu) + n_nu >= self.extents[nu])
        {
            return Err(Error::InvalidLoop(format!(
                "{n_mu}x{n_nu} loop at corner {:?} leaves the open lattice",
                self.coords(corner)
            )));
        }
        let link = |site: usize, dir: usize| self.link_table[site * d + dir] as usize;
        let step = |site: usize, dir: usize, s: isize| self.shift(site, dir, s).unwrap();

        let mut out = Vec::with_capacity(2 * (n_mu + n_nu));
        let mut x = corner;
        for _ in 0..n_mu {
            out.push(link(x, mu));
            x = step(x, mu, 1);
        }
        for _ in 0..n_nu {
            out.push(link(x, nu));
            x = step(x, nu, 1);
        }
        for _ in 0..n_mu {
            x = step(x, mu, -1);
            out.push(link(x, mu));
        }
        for _ in 0..n_nu {
            x = step(x, nu, -1);
            out.push(link(x, nu));
        }
        debug_assert_eq!(x, corner);
        Ok(out)
    }

    /// Corners at which an `n_mu x n_nu` loop in plane `(mu, nu)` fits.
    pub fn loop_corners(&self, mu: usize, nu: usize, n_mu: usize, n_nu: usize) -> Vec<usize> {
        if n_mu >= self.extents[mu] || n_nu >= self.extents[nu] {
            return Vec::new();
        }
        (0..self.n_sites)
            .filter(|&s| {
                self.boundary == Boundary::Periodic
                    || (self.coord(s, mu) + n_mu < self.extents[mu]
                        && self.coord(s, nu) + n_nu < self.extents[nu])
            })
            .collect()
    }

    /// Applies the gauge transformation `phi(l) -> sigma(x) phi(l) sigma(x + dir)`
    /// to per-link values. `sigma` holds one `+1`/`-1` per site.
    pub fn gauge_transform(&self, values: &mut [f64], sigma: &[i8]) {
        assert_eq!(values.len(), self.n_links());
        assert_eq!(sigma.len(), self.n_sites);
        debug_assert!(sigma.iter().all(|&s| s == 1 || s == -1));
        for (i, v) in values.iter_mut().enumerate() {
            let (a, b) = self.link_sites(i);
            if sigma[a] != sigma[b] {
                *v = -*v;
            }
        }
    }
}
