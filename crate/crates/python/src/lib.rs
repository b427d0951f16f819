//! Python module `z2lab`: geometry, fields, sweeps, loops, bounds, oracle
//! values and the file-producing run drivers.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use z2lab_core::config::RunConfig;
use z2lab_core::lattice::{Boundary, LatticeGeometry};
use z2lab_core::model::{GaugeField, ModelParams, UpdateScheme};
use z2lab_core::observables::{average_plaquette, wilson_loop, LoopSpec};
use z2lab_core::oracle::{exact_loop, exact_spin_correlator, QuadratureSpec};
use z2lab_core::twowall::{SpinField, WallParams};
use z2lab_core::{bounds, run, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidGeometry(_)
        | Error::InvalidReference(_)
        | Error::InvalidLoop(_)
        | Error::InvalidParams(_)
        | Error::Config { .. }
        | Error::Toml(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn boundary(name: &str) -> PyResult<Boundary> {
    match name {
        "periodic" => Ok(Boundary::Periodic),
        "open" => Ok(Boundary::Open),
        _ => Err(PyValueError::new_err(format!("boundary must be 'periodic' or 'open', got {name:?}"))),
    }
}

fn scheme(name: &str, width: f64) -> PyResult<UpdateScheme> {
    match name {
        "heatbath" => Ok(UpdateScheme::Heatbath),
        "metropolis" => Ok(UpdateScheme::Metropolis { width }),
        _ => Err(PyValueError::new_err(format!("unknown scheme {name:?}"))),
    }
}

fn quad(max_nodes: usize) -> QuadratureSpec {
    QuadratureSpec { max_nodes, ..QuadratureSpec::default() }
}

#[pyclass(name = "Geometry", frozen)]
struct PyGeometry {
    inner: Arc<LatticeGeometry>,
}

#[pymethods]
impl PyGeometry {
    /// Gauge lattice of `dimension` with the given extents.
    #[staticmethod]
    #[pyo3(signature = (dimension, extents, boundary = "periodic"))]
    fn gauge(dimension: usize, extents: Vec<usize>, boundary: &str) -> PyResult<Self> {
        let g = LatticeGeometry::gauge(dimension, &extents, self::boundary(boundary)?).map_err(err)?;
        Ok(PyGeometry { inner: Arc::new(g) })
    }

    /// Lattice of the two-wall model (dimension is the number of extents).
    #[staticmethod]
    #[pyo3(signature = (extents, boundary = "periodic"))]
    fn spin(extents: Vec<usize>, boundary: &str) -> PyResult<Self> {
        let g = LatticeGeometry::new(&extents, self::boundary(boundary)?).map_err(err)?;
        Ok(PyGeometry { inner: Arc::new(g) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    #[getter]
    fn n_links(&self) -> usize {
        self.inner.n_links()
    }

    #[getter]
    fn n_plaquettes(&self) -> usize {
        self.inner.n_plaquettes()
    }

    fn __repr__(&self) -> String {
        format!("Geometry(extents={:?}, boundary={})", self.inner.extents(), self.inner.boundary())
    }
}

#[pyclass(name = "ModelParams", frozen)]
struct PyModelParams {
    inner: ModelParams,
}

#[pymethods]
impl PyModelParams {
    /// `beta_spatial` defaults to `beta`; `float('inf')` freezes spatial links.
    #[new]
    #[pyo3(signature = (beta, omega, beta_spatial = None))]
    fn new(beta: f64, omega: f64, beta_spatial: Option<f64>) -> PyResult<Self> {
        let inner = ModelParams::anisotropic(beta, omega, beta_spatial.unwrap_or(beta)).map_err(err)?;
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    #[getter]
    fn beta_spatial(&self) -> f64 {
        self.inner.beta_spatial_value()
    }
}

/// Gauge field with its own seeded ChaCha8 generator.
#[pyclass(name = "GaugeField")]
struct PyGaugeField {
    field: GaugeField,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyGaugeField {
    #[new]
    #[pyo3(signature = (geometry, seed = 0, cold = false))]
    fn new(geometry: &PyGeometry, seed: u64, cold: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = if cold {
            GaugeField::constant(geometry.inner.clone(), 1.0)
        } else {
            GaugeField::random(geometry.inner.clone(), &mut rng)
        };
        PyGaugeField { field, rng }
    }

    /// Runs `n` sweeps; returns the acceptance rate of the last one.
    #[pyo3(signature = (params, n = 1, scheme = "heatbath", width = 0.5))]
    fn sweep(&mut self, params: &PyModelParams, n: usize, scheme: &str, width: f64) -> PyResult<f64> {
        let s = self::scheme(scheme, width)?;
        let mut acc = 1.0;
        for _ in 0..n {
            acc = self.field.sweep(&params.inner, s, &mut self.rng).map_err(err)?.acceptance();
        }
        Ok(acc)
    }

    fn values(&self) -> Vec<f64> {
        self.field.values().to_vec()
    }

    fn set_values(&mut self, values: Vec<f64>) -> PyResult<()> {
        self.field = GaugeField::from_values(self.field.geometry().clone(), values).map_err(err)?;
        Ok(())
    }

    fn action(&self, params: &PyModelParams) -> f64 {
        self.field.action(&params.inner)
    }

    fn plaquette(&self, index: usize) -> PyResult<f64> {
        if index >= self.field.geometry().n_plaquettes() {
            return Err(PyValueError::new_err("plaquette index out of range"));
        }
        Ok(self.field.plaquette(index))
    }

    /// `(temporal, spatial)` plaquette averages; spatial is None in d = 2.
    fn average_plaquette(&self) -> (f64, Option<f64>) {
        let p = average_plaquette(&self.field);
        (p.temporal, p.spatial)
    }

    /// Rectangular Wilson loop with `n_mu` steps along `mu` and `n_nu` along `nu`.
    #[pyo3(signature = (mu, nu, n_mu, n_nu, corner = 0))]
    fn wilson_loop(&self, mu: usize, nu: usize, n_mu: usize, n_nu: usize, corner: usize) -> PyResult<f64> {
        wilson_loop(&self.field, &LoopSpec { mu, nu, corner, n_mu, n_nu }).map_err(err)
    }

    /// Flips links at both ends of every site with `sigma = -1`.
    fn gauge_transform(&mut self, sigma: Vec<i8>) -> PyResult<()> {
        if sigma.len() != self.field.geometry().n_sites() || sigma.iter().any(|s| s.abs() != 1) {
            return Err(PyValueError::new_err("sigma needs one +-1 per site"));
        }
        self.field.apply_gauge_transform(&sigma);
        Ok(())
    }

    fn mean_square(&self) -> f64 {
        self.field.mean_square()
    }
}

#[pyclass(name = "SpinField")]
struct PySpinField {
    field: SpinField,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PySpinField {
    #[new]
    #[pyo3(signature = (geometry, seed = 0))]
    fn new(geometry: &PyGeometry, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = SpinField::random(geometry.inner.clone(), &mut rng);
        PySpinField { field, rng }
    }

    #[pyo3(signature = (beta, omega, n = 1))]
    fn sweep(&mut self, beta: f64, omega: f64, n: usize) -> PyResult<()> {
        let p = WallParams::new(beta, omega).map_err(err)?;
        for _ in 0..n {
            self.field.sweep(&p, UpdateScheme::Heatbath, &mut self.rng).map_err(err)?;
        }
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        self.field.values().to_vec()
    }

    /// Translation-averaged `<phi(y) phi(y + sep)>` of this configuration.
    fn correlator(&self, sep: Vec<isize>) -> PyResult<f64> {
        self.field.correlator_at(&sep).map_err(err)
    }
}

/// `(s_tilde, sigma_tilde)`; sigma_tilde is None where the bound is void.
#[pyfunction]
fn sigma_tilde(beta: f64, omega: f64, d: usize) -> PyResult<(f64, Option<f64>)> {
    let b = bounds::sigma_tilde(beta, omega, d).map_err(err)?;
    Ok((b.s_tilde, b.rate))
}

/// `(s_tilde, m_tilde)` for the two-wall model in `k` dimensions.
#[pyfunction]
fn mass_bound(beta: f64, omega: f64, k: usize) -> PyResult<(f64, Option<f64>)> {
    let b = bounds::mass_bound(beta, omega, k).map_err(err)?;
    Ok((b.s_tilde, b.rate))
}

/// Exact `<A(C)>` by quadrature.
#[pyfunction]
#[pyo3(signature = (geometry, params, mu, nu, n_mu, n_nu, corner = 0, max_nodes = 128))]
#[allow(clippy::too_many_arguments)]
fn oracle_loop(
    geometry: &PyGeometry,
    params: &PyModelParams,
    mu: usize,
    nu: usize,
    n_mu: usize,
    n_nu: usize,
    corner: usize,
    max_nodes: usize,
) -> PyResult<f64> {
    let spec = LoopSpec { mu, nu, corner, n_mu, n_nu };
    Ok(exact_loop(&geometry.inner, &params.inner, &spec, &quad(max_nodes)).map_err(err)?.value)
}

/// Exact `<phi(a) phi(b)>` in the two-wall model.
#[pyfunction]
#[pyo3(signature = (geometry, beta, omega, a, b, max_nodes = 128))]
fn oracle_spin_correlator(geometry: &PyGeometry, beta: f64, omega: f64, a: usize, b: usize, max_nodes: usize) -> PyResult<f64> {
    let p = WallParams::new(beta, omega).map_err(err)?;
    Ok(exact_spin_correlator(&geometry.inner, &p, a, b, &quad(max_nodes)).map_err(err)?.value)
}

fn load(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut c = RunConfig::from_path(&config).map_err(err)?;
    if let Some(s) = seed {
        c.run.seed = s;
    }
    if let Some(o) = out {
        c.run.output_dir = o;
    }
    Ok(c)
}

fn files(o: run::RunOutcome) -> Vec<String> {
    o.files.iter().map(|p| p.display().to_string()).collect()
}

/// Runs a gauge simulation from a TOML config; returns the written files.
#[pyfunction]
#[pyo3(signature = (config, seed = None, out = None))]
fn run_gauge(py: Python<'_>, config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<Vec<String>> {
    let c = load(config, seed, out)?;
    let o = py.detach(|| run::run_gauge(&c, &run::RunOptions::default())).map_err(err)?;
    Ok(files(o))
}

#[pyfunction]
#[pyo3(signature = (config, seed = None, out = None))]
fn run_twowall(py: Python<'_>, config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<Vec<String>> {
    let c = load(config, seed, out)?;
    let o = py.detach(|| run::run_twowall(&c, &run::RunOptions::default())).map_err(err)?;
    Ok(files(o))
}

#[pymodule]
fn z2lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyGaugeField>()?;
    m.add_class::<PySpinField>()?;
    m.add_function(wrap_pyfunction!(sigma_tilde, m)?)?;
    m.add_function(wrap_pyfunction!(mass_bound, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_loop, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_spin_correlator, m)?)?;
    m.add_function(wrap_pyfunction!(run_gauge, m)?)?;
    m.add_function(wrap_pyfunction!(run_twowall, m)?)?;
    Ok(())
}
