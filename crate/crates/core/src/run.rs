//! Run orchestration: thermalisation, measurement, checkpoints and output.
//!
//! All chains of a run advance in lockstep blocks of `checkpoint_every`
//! sweeps; after every block the complete state goes to one checkpoint file.
//! Chain `i` draws from the ChaCha8 stream `i` of the run seed, so the emitted
//! numbers depend only on the config, never on the worker count or on where a
//! run was interrupted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{mass_bound, sigma_tilde};
use crate::config::{RunConfig, RunKind};
use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::model::{GaugeField, ModelParams};
use crate::oracle::{gks_scan, FactorModel, GksReport, Monomial, QuadratureSpec};
use crate::observables::{average_plaquette, effective_mass, LoopKind, LoopMeasurer, LoopSeries, LoopTable, PlaneClass};
use crate::stats::{auto_bin_size, integrated_autocorrelation_time, BinSize, BinnedSeries, EstimateWithError};
use crate::twowall::{CorrelatorMeasurer, CorrelatorSeries, SpinField, WallParams};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.z2ck";
const CHECKPOINT_MAGIC: &str = "z2lab-checkpoint";

/// Sweeps of the pilot run that sets the thermalisation length when
/// `n_therm` is not configured; also the floor of that length.
pub const PILOT_SWEEPS: u64 = 1000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop (after writing a checkpoint) once every chain has done this many
    /// sweeps.
    pub halt_after: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Halted { sweeps: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeSeries {
    pub plaquette_temporal: Vec<f64>,
    pub plaquette_spatial: Vec<f64>,
    pub phi_squared: Vec<f64>,
    pub loops: LoopSeries,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallSeries {
    pub phi_squared: Vec<f64>,
    pub correlator: CorrelatorSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Series {
    Gauge(GaugeSeries),
    TwoWall(WallSeries),
}

/// Serialized state of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub index: usize,
    pub sweeps_done: u64,
    pub n_therm: Option<u64>,
    pub n_measured: u64,
    pub proposed: u64,
    pub accepted: u64,
    pub rng_stream: u64,
    /// ChaCha word position, as decimal text (it is a 128-bit integer).
    pub rng_word_pos: String,
    /// Field values as IEEE-754 bit patterns.
    pub field_bits: Vec<u64>,
    pub pilot: Vec<f64>,
    pub series: Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: RunKind,
    pub config: RunConfig,
    pub complete: bool,
    pub chains: Vec<ChainCheckpoint>,
}

impl Checkpoint {
    /// Header line with version and SHA-256 of the payload, then JSON.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = serde_json::to_vec(self)?;
        let digest = Sha256::digest(&payload);
        let mut out = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} sha256={}\n", hex(&digest)).into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Checkpoint("header is not text".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Checkpoint("not a z2lab checkpoint".into()));
        }
        let version = parts
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::Checkpoint("unreadable version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let expected = parts
            .next()
            .and_then(|s| s.strip_prefix("sha256="))
            .ok_or_else(|| Error::Checkpoint("missing checksum".into()))?;
        let payload = &bytes[nl + 1..];
        if hex(&Sha256::digest(payload)) != expected {
            return Err(Error::Checkpoint("checksum mismatch: file is corrupted".into()));
        }
        let cp: Checkpoint = serde_json::from_slice(payload)?;
        if cp.version != version {
            return Err(Error::Checkpoint("header and payload versions differ".into()));
        }
        Ok(cp)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Writes through a temporary file so an interrupt never leaves a torn
    /// checkpoint behind.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("z2ck.tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Generator of chain `index`: the ChaCha8 key comes from the seed, the
/// stream number is the chain index.
pub fn chain_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

enum Field {
    Gauge(GaugeField),
    Spin(SpinField),
}

struct Chain {
    index: usize,
    sweeps_done: u64,
    n_therm: Option<u64>,
    n_measured: u64,
    proposed: u64,
    accepted: u64,
    rng: ChaCha8Rng,
    field: Field,
    pilot: Vec<f64>,
    series: Series,
}

enum Measurer {
    Gauge(LoopMeasurer),
    Spin(CorrelatorMeasurer),
}

enum Params {
    Gauge(ModelParams),
    Wall(WallParams),
}

struct Run {
    kind: RunKind,
    config: RunConfig,
    geometry: Arc<LatticeGeometry>,
    params: Params,
    measurer: Measurer,
    chains: Vec<Chain>,
}

impl Run {
    fn new(kind: RunKind, config: &RunConfig) -> Result<Self> {
        config.validate(kind)?;
        let geometry = Arc::new(config.geometry(kind)?);
        let (params, measurer) = match kind {
            RunKind::Gauge => (
                Params::Gauge(config.model_params()?),
                Measurer::Gauge(LoopMeasurer::new(&geometry, config.observables.max_r, config.observables.max_t)?),
            ),
            RunKind::TwoWall => {
                let axes = config
                    .observables
                    .correlator_axes
                    .clone()
                    .unwrap_or_else(|| (0..geometry.dim()).collect());
                (
                    Params::Wall(config.wall_params()?),
                    Measurer::Spin(CorrelatorMeasurer::new(&geometry, &axes, config.observables.max_separation)?),
                )
            }
        };
        Ok(Run { kind, config: config.clone(), geometry, params, measurer, chains: Vec::new() })
    }

    fn fresh(kind: RunKind, config: &RunConfig) -> Result<Self> {
        let mut run = Run::new(kind, config)?;
        for index in 0..config.run.chains {
            let mut rng = chain_rng(config.run.seed, index as u64);
            let field = match kind {
                RunKind::Gauge => Field::Gauge(GaugeField::random(run.geometry.clone(), &mut rng)),
                RunKind::TwoWall => Field::Spin(SpinField::random(run.geometry.clone(), &mut rng)),
            };
            let series = match &run.measurer {
                Measurer::Gauge(_) => Series::Gauge(GaugeSeries::default()),
                Measurer::Spin(m) => Series::TwoWall(WallSeries { phi_squared: Vec::new(), correlator: CorrelatorSeries::new(m) }),
            };
            run.chains.push(Chain {
                index,
                sweeps_done: 0,
                n_therm: config.sampler.n_therm,
                n_measured: 0,
                proposed: 0,
                accepted: 0,
                rng,
                field,
                pilot: Vec::new(),
                series,
            });
        }
        Ok(run)
    }

    fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        let mut run = Run::new(cp.kind, &cp.config)?;
        for c in cp.chains {
            let mut rng = chain_rng(cp.config.run.seed, c.rng_stream);
            let pos: u128 = c
                .rng_word_pos
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad rng position {:?}", c.rng_word_pos)))?;
            rng.set_word_pos(pos);
            let values: Vec<f64> = c.field_bits.iter().map(|&b| f64::from_bits(b)).collect();
            let field = match cp.kind {
                RunKind::Gauge => Field::Gauge(GaugeField::from_values(run.geometry.clone(), values)?),
                RunKind::TwoWall => Field::Spin(SpinField::from_values(run.geometry.clone(), values)?),
            };
            run.chains.push(Chain {
                index: c.index,
                sweeps_done: c.sweeps_done,
                n_therm: c.n_therm,
                n_measured: c.n_measured,
                proposed: c.proposed,
                accepted: c.accepted,
                rng,
                field,
                pilot: c.pilot,
                series: c.series,
            });
        }
        if run.chains.len() != run.config.run.chains {
            return Err(Error::Checkpoint("chain count differs from the config echo".into()));
        }
        Ok(run)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            config: self.config.clone(),
            complete: self.done(),
            chains: self
                .chains
                .iter()
                .map(|c| ChainCheckpoint {
                    index: c.index,
                    sweeps_done: c.sweeps_done,
                    n_therm: c.n_therm,
                    n_measured: c.n_measured,
                    proposed: c.proposed,
                    accepted: c.accepted,
                    rng_stream: c.rng.get_stream(),
                    rng_word_pos: c.rng.get_word_pos().to_string(),
                    field_bits: match &c.field {
                        Field::Gauge(f) => f.values().iter().map(|v| v.to_bits()).collect(),
                        Field::Spin(f) => f.values().iter().map(|v| v.to_bits()).collect(),
                    },
                    pilot: c.pilot.clone(),
                    series: c.series.clone(),
                })
                .collect(),
        }
    }

    fn done(&self) -> bool {
        let n = self.config.sampler.n_measure;
        self.chains.iter().all(|c| c.n_measured >= n)
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.config.run.output_dir.join(CHECKPOINT_FILE)
    }

    fn execute(mut self, opts: &RunOptions) -> Result<RunOutcome> {
        let dir = self.config.run.output_dir.clone();
        fs::create_dir_all(&dir)?;
        let block = self.config.run.checkpoint_every;
        let scheme = self.config.scheme();
        let n_measure = self.config.sampler.n_measure;
        let stride = self.config.sampler.stride;
        while !self.done() {
            if let Some(h) = opts.halt_after {
                if self.chains.iter().all(|c| c.sweeps_done >= h) {
                    self.checkpoint().write(&self.checkpoint_path())?;
                    return Ok(RunOutcome {
                        status: RunStatus::Halted { sweeps: h },
                        output_dir: dir.clone(),
                        files: vec![self.checkpoint_path()],
                    });
                }
            }
            let (params, measurer) = (&self.params, &self.measurer);
            self.chains.par_iter_mut().try_for_each(|c| -> Result<()> {
                let mut limit = c.sweeps_done + block;
                if let Some(h) = opts.halt_after {
                    if c.sweeps_done < h {
                        limit = limit.min(h);
                    }
                }
                while c.sweeps_done < limit && c.n_measured < n_measure {
                    c.step(params, measurer, scheme, stride)?;
                }
                Ok(())
            })?;
            self.checkpoint().write(&self.checkpoint_path())?;
        }
        let files = self.write_outputs()?;
        Ok(RunOutcome { status: RunStatus::Completed, output_dir: dir, files })
    }

    fn write_outputs(&self) -> Result<Vec<PathBuf>> {
        let outputs = match self.kind {
            RunKind::Gauge => self.gauge_outputs()?,
            RunKind::TwoWall => self.wall_outputs()?,
        };
        let mut files = Vec::new();
        for (name, body) in outputs {
            let path = self.config.run.output_dir.join(name);
            fs::write(&path, body)?;
            files.push(path);
        }
        files.push(self.checkpoint_path());
        Ok(files)
    }

    fn provenance(&self) -> String {
        let echo = serde_json::to_string(&self.config.trajectory_key()).expect("config serializes");
        format!(
            "# z2lab {} {} run\n# seed={} chains={} n_therm={}\n# config={echo}\n",
            env!("CARGO_PKG_VERSION"),
            self.kind,
            self.config.run.seed,
            self.config.run.chains,
            self.chains
                .iter()
                .map(|c| c.n_therm.map(|n| n.to_string()).unwrap_or_else(|| "?".into()))
                .collect::<Vec<_>>()
                .join("/"),
        )
    }

    fn bin_size(&self, all: &[&[f64]]) -> usize {
        match self.config.observables.bin_size {
            BinSize::Fixed(b) => b,
            BinSize::Auto => all.iter().map(|s| auto_bin_size(s)).max().unwrap_or(1),
        }
    }

    fn merged(&self, parts: &[&[f64]], bin: usize) -> Result<BinnedSeries> {
        let binned = parts.iter().map(|s| BinnedSeries::new(s, bin)).collect::<Result<Vec<_>>>()?;
        BinnedSeries::concat(&binned)
    }

    fn gauge_series(&self) -> Vec<&GaugeSeries> {
        self.chains
            .iter()
            .map(|c| match &c.series {
                Series::Gauge(s) => s,
                Series::TwoWall(_) => unreachable!("gauge run holds gauge series"),
            })
            .collect()
    }

    fn wall_series(&self) -> Vec<&WallSeries> {
        self.chains
            .iter()
            .map(|c| match &c.series {
                Series::TwoWall(s) => s,
                Series::Gauge(_) => unreachable!("two-wall run holds two-wall series"),
            })
            .collect()
    }

    fn gauge_outputs(&self) -> Result<Vec<(&'static str, String)>> {
        let cfg = &self.config;
        let series = self.gauge_series();
        let head = self.provenance();
        let (beta, omega, bs) = (cfg.model.beta, cfg.model.omega, cfg.beta_spatial_label());
        let loops: Vec<&LoopSeries> = series.iter().map(|s| &s.loops).collect();
        let table = LoopTable::from_chains(&loops, cfg.observables.bin_size)?;

        let mut loops_csv = head.clone();
        loops_csv.push_str("beta,omega,beta_spatial,plane,R,T,loop_kind,mean,err,n_meas,bin_size\n");
        for (k, e) in table.estimates() {
            let _ = writeln!(
                loops_csv,
                "{beta},{omega},{bs},{},{},{},{},{},{},{},{}",
                k.plane, k.r, k.t, k.kind, e.mean, e.error, e.n_samples, e.bin_size
            );
        }

        let sigma = sigma_tilde_or_none(beta, omega, cfg.model.dimension);
        let mut creutz_csv = head.clone();
        creutz_csv.push_str("beta,omega,beta_spatial,plane,R,T,loop_kind,chi,err,status,sigma_tilde\n");
        let mut creutz_json = Vec::new();
        for k in table.keys().filter(|k| k.r >= 2 && k.t >= 2) {
            let sig = sigma.map(|s| s.to_string()).unwrap_or_else(|| "invalid".into());
            match table.creutz_ratio(k.plane, k.kind, k.r, k.t) {
                Ok(chi) => {
                    let _ = writeln!(
                        creutz_csv,
                        "{beta},{omega},{bs},{},{},{},{},{},{},ok,{sig}",
                        k.plane, k.r, k.t, k.kind, chi.mean, chi.error
                    );
                    creutz_json.push(serde_json::json!({"key": k, "chi": chi}));
                }
                Err(e) => {
                    let status = match e {
                        Error::NonPositive(_) => "nonpositive_loop",
                        _ => "undefined",
                    };
                    let _ = writeln!(creutz_csv, "{beta},{omega},{bs},{},{},{},{},,,{status},{sig}", k.plane, k.r, k.t, k.kind);
                }
            }
        }

        let mut plaq_csv = head.clone();
        plaq_csv.push_str("beta,omega,beta_spatial,observable,mean,err,n_meas,bin_size\n");
        let mut plaq_json = serde_json::Map::new();
        let observables: [(&str, Vec<&[f64]>); 3] = [
            ("plaquette_temporal", series.iter().map(|s| s.plaquette_temporal.as_slice()).collect()),
            ("plaquette_spatial", series.iter().map(|s| s.plaquette_spatial.as_slice()).collect()),
            ("phi_squared", series.iter().map(|s| s.phi_squared.as_slice()).collect()),
        ];
        for (name, parts) in observables {
            if parts.iter().all(|p| p.is_empty()) {
                continue;
            }
            let bin = self.bin_size(&parts);
            let e = self.merged(&parts, bin)?.estimate();
            let _ = writeln!(plaq_csv, "{beta},{omega},{bs},{name},{},{},{},{}", e.mean, e.error, e.n_samples, e.bin_size);
            plaq_json.insert(name.into(), serde_json::to_value(e)?);
        }

        let summary = serde_json::json!({
            "kind": self.kind,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg.trajectory_key(),
            "chains": self.chain_summaries(),
            "plaquette": plaq_json,
            "creutz": creutz_json,
            "sigma_tilde": sigma,
            "loop_bin_size": table.bin_size,
        });
        Ok(vec![
            ("loops.csv", loops_csv),
            ("creutz.csv", creutz_csv),
            ("plaquette.csv", plaq_csv),
            ("summary.json", serde_json::to_string_pretty(&summary)? + "\n"),
        ])
    }

    fn chain_summaries(&self) -> Vec<serde_json::Value> {
        self.chains
            .iter()
            .map(|c| {
                serde_json::json!({
                    "index": c.index,
                    "n_therm": c.n_therm,
                    "sweeps": c.sweeps_done,
                    "acceptance": if c.proposed > 0 { c.accepted as f64 / c.proposed as f64 } else { 1.0 },
                    "pilot_tau_int": (!c.pilot.is_empty()).then(|| integrated_autocorrelation_time(&c.pilot)),
                })
            })
            .collect()
    }

    fn wall_outputs(&self) -> Result<Vec<(&'static str, String)>> {
        let cfg = &self.config;
        let series = self.wall_series();
        let head = self.provenance();
        let k = cfg.model.dimension;
        let (beta, omega) = (cfg.model.beta, cfg.model.omega);
        let first = &series[0].correlator;
        let n_axes = first.axes.len();

        // one bin size for every correlator entry so ratios can be jackknifed
        let mut all: Vec<&[f64]> = Vec::new();
        for s in &series {
            for a in s.correlator.phi.iter().chain(&s.correlator.tau) {
                all.extend(a.iter().map(Vec::as_slice));
            }
        }
        let bin = self.bin_size(&all);

        let mut corr_csv = head.clone();
        corr_csv.push_str("k,beta,omega,axis,x,mean,err,n_meas\n");
        let mut sign_csv = head.clone();
        sign_csv.push_str("k,beta,omega,axis,x,mean,err,n_meas\n");
        for (csv, sign) in [(&mut corr_csv, false), (&mut sign_csv, true)] {
            for slot in 0..n_axes {
                for x in 0..=first.max_sep {
                    let parts: Vec<&[f64]> = series
                        .iter()
                        .map(|s| if sign { &s.correlator.tau } else { &s.correlator.phi })
                        .map(|a| a[slot][x].as_slice())
                        .collect();
                    let e = self.merged(&parts, bin)?.estimate();
                    let _ = writeln!(csv, "{k},{beta},{omega},{},{x},{},{},{}", first.axes[slot], e.mean, e.error, e.n_samples);
                }
            }
            let averaged: Vec<Vec<Vec<f64>>> = series.iter().map(|s| s.correlator.axis_averaged(sign)).collect();
            for x in 0..=first.max_sep {
                let parts: Vec<&[f64]> = averaged.iter().map(|a| a[x].as_slice()).collect();
                let e = self.merged(&parts, bin)?.estimate();
                let _ = writeln!(csv, "{k},{beta},{omega},all,{x},{},{},{}", e.mean, e.error, e.n_samples);
            }
        }

        let averaged: Vec<Vec<Vec<f64>>> = series.iter().map(|s| s.correlator.axis_averaged(false)).collect();
        let corr: Vec<BinnedSeries> = (0..=first.max_sep)
            .map(|x| self.merged(&averaged.iter().map(|a| a[x].as_slice()).collect::<Vec<_>>(), bin))
            .collect::<Result<_>>()?;
        let extent = first.axes.iter().map(|&a| cfg.model.extents[a]).min().unwrap_or(0);
        let bound = if beta > 0.0 { mass_bound(beta, omega, k)?.rate } else { None };
        let mut mass_csv = head.clone();
        mass_csv.push_str("k,beta,omega,axis,x,m_eff,err,status,m_tilde\n");
        let mut mass_json = Vec::new();
        let bound_label = bound.map(|b| b.to_string()).unwrap_or_else(|| "invalid".into());
        for (x, m) in effective_mass(&corr, cfg.model.boundary, extent).into_iter().enumerate() {
            match m {
                Ok(e) => {
                    let _ = writeln!(mass_csv, "{k},{beta},{omega},all,{x},{},{},ok,{bound_label}", e.mean, e.error);
                    mass_json.push(serde_json::json!({"x": x, "m_eff": e}));
                }
                Err(_) => {
                    let _ = writeln!(mass_csv, "{k},{beta},{omega},all,{x},,,undefined,{bound_label}");
                }
            }
        }

        let phi2: Vec<&[f64]> = series.iter().map(|s| s.phi_squared.as_slice()).collect();
        let b2 = self.bin_size(&phi2);
        let phi2 = self.merged(&phi2, b2)?.estimate();
        let summary = serde_json::json!({
            "kind": self.kind,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg.trajectory_key(),
            "chains": self.chain_summaries(),
            "phi_squared": phi2,
            "correlator_bin_size": bin,
            "effective_mass": mass_json,
            "m_tilde": bound,
        });
        Ok(vec![
            ("correlator.csv", corr_csv),
            ("sign_correlator.csv", sign_csv),
            ("effective_mass.csv", mass_csv),
            ("summary.json", serde_json::to_string_pretty(&summary)? + "\n"),
        ])
    }
}

fn sigma_tilde_or_none(beta: f64, omega: f64, d: usize) -> Option<f64> {
    if beta > 0.0 {
        sigma_tilde(beta, omega, d).ok().and_then(|b| b.rate)
    } else {
        None
    }
}

impl Chain {
    fn step(&mut self, params: &Params, measurer: &Measurer, scheme: crate::model::UpdateScheme, stride: u64) -> Result<()> {
        let stats = match (&mut self.field, params) {
            (Field::Gauge(f), Params::Gauge(p)) => f.sweep(p, scheme, &mut self.rng)?,
            (Field::Spin(f), Params::Wall(p)) => f.sweep(p, scheme, &mut self.rng)?,
            _ => unreachable!("field and parameters belong to the same model"),
        };
        self.proposed += stats.proposed as u64;
        self.accepted += stats.accepted as u64;
        self.sweeps_done += 1;
        match self.n_therm {
            None => {
                self.pilot.push(self.energy());
                if self.sweeps_done >= PILOT_SWEEPS {
                    let tau = integrated_autocorrelation_time(&self.pilot);
                    self.n_therm = Some(PILOT_SWEEPS.max((10.0 * tau).ceil() as u64));
                }
            }
            Some(n_therm) => {
                if self.sweeps_done > n_therm && (self.sweeps_done - n_therm) % stride == 0 {
                    self.measure(measurer);
                    self.n_measured += 1;
                }
            }
        }
        Ok(())
    }

    /// Pilot observable: mean plaquette, or mean bond product for spins.
    fn energy(&self) -> f64 {
        match &self.field {
            Field::Gauge(f) => {
                let g = f.geometry();
                (0..g.n_plaquettes()).map(|p| f.plaquette(p)).sum::<f64>() / g.n_plaquettes() as f64
            }
            Field::Spin(f) => {
                let g = f.geometry();
                (0..g.n_links())
                    .map(|l| {
                        let (a, b) = g.link_sites(l);
                        f.get(a) * f.get(b)
                    })
                    .sum::<f64>()
                    / g.n_links() as f64
            }
        }
    }

    fn measure(&mut self, measurer: &Measurer) {
        match (&self.field, measurer, &mut self.series) {
            (Field::Gauge(f), Measurer::Gauge(m), Series::Gauge(s)) => {
                let p = average_plaquette(f);
                s.plaquette_temporal.push(p.temporal);
                if let Some(sp) = p.spatial {
                    s.plaquette_spatial.push(sp);
                }
                s.phi_squared.push(f.mean_square());
                s.loops.push(&m.measure(f));
            }
            (Field::Spin(f), Measurer::Spin(m), Series::TwoWall(s)) => {
                s.phi_squared.push(f.mean_square());
                let (phi, tau) = m.measure(f);
                s.correlator.push(&phi, &tau);
            }
            _ => unreachable!("measurer matches the field"),
        }
    }
}

pub fn run_gauge(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    Run::fresh(RunKind::Gauge, config)?.execute(opts)
}

pub fn run_twowall(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    Run::fresh(RunKind::TwoWall, config)?.execute(opts)
}

/// Continues from a checkpoint. A supplied config must match the echo in
/// every field that affects the trajectory; its output directory is used.
pub fn resume(path: &Path, config: Option<&RunConfig>, opts: &RunOptions) -> Result<RunOutcome> {
    let mut cp = Checkpoint::read(path)?;
    if let Some(c) = config {
        if c.trajectory_key() != cp.config.trajectory_key() {
            return Err(Error::Checkpoint(
                "config differs from the checkpoint's config echo; refusing to resume".into(),
            ));
        }
        cp.config.run.output_dir = c.run.output_dir.clone();
        cp.config.run.checkpoint_every = c.run.checkpoint_every;
    }
    Run::from_checkpoint(cp)?.execute(opts)
}

/// Restores the measured series of a checkpoint for post-processing.
pub fn load_series(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(path)
}

/// Area-law fit over a finished gauge run's loops.
pub fn fit_area_law(
    cp: &Checkpoint,
    plane: PlaneClass,
    kind: LoopKind,
    sizes: &[(usize, usize)],
    bin_size: BinSize,
) -> Result<crate::observables::AreaLawFit> {
    let loops: Vec<&LoopSeries> = cp
        .chains
        .iter()
        .map(|c| match &c.series {
            Series::Gauge(s) => Ok(&s.loops),
            Series::TwoWall(_) => Err(Error::Unsupported("area-law fits need a gauge run".into())),
        })
        .collect::<Result<_>>()?;
    LoopTable::from_chains(&loops, bin_size)?.area_law_fit(plane, kind, sizes)
}

/// Effective masses of a finished two-wall run's axis-averaged correlator.
pub fn fit_effective_mass(cp: &Checkpoint, bin_size: BinSize) -> Result<Vec<Result<EstimateWithError>>> {
    let mut averaged = Vec::new();
    for c in &cp.chains {
        match &c.series {
            Series::TwoWall(s) => averaged.push(s.correlator.axis_averaged(false)),
            Series::Gauge(_) => return Err(Error::Unsupported("effective masses need a two-wall run".into())),
        }
    }
    let first = match &cp.chains[0].series {
        Series::TwoWall(s) => &s.correlator,
        Series::Gauge(_) => unreachable!(),
    };
    let bin = match bin_size {
        BinSize::Fixed(b) => b,
        BinSize::Auto => averaged.iter().flatten().map(|s| auto_bin_size(s)).max().unwrap_or(1),
    };
    let corr: Vec<BinnedSeries> = (0..=first.max_sep)
        .map(|x| {
            let parts = averaged.iter().map(|a| BinnedSeries::new(&a[x], bin)).collect::<Result<Vec<_>>>()?;
            BinnedSeries::concat(&parts)
        })
        .collect::<Result<_>>()?;
    let extent = first.axes.iter().map(|&a| cp.config.model.extents[a]).min().unwrap_or(0);
    Ok(effective_mass(&corr, cp.config.model.boundary, extent))
}

/// `beta,omega,d,s_tilde,sigma_tilde,valid` rows for every grid point;
/// nonpositive `beta` is reported as invalid input.
pub fn bounds_table(grid: &[(f64, f64, usize)]) -> Result<String> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("bounds grid is empty".into()));
    }
    let mut out = String::from("beta,omega,d,s_tilde,sigma_tilde,valid\n");
    for &(beta, omega, d) in grid {
        match sigma_tilde(beta, omega, d) {
            Ok(b) => {
                let rate = b.rate.map(|r| r.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{beta},{omega},{d},{},{rate},{}", b.s_tilde, b.valid());
            }
            Err(_) => {
                let _ = writeln!(out, "{beta},{omega},{d},,,invalid_input");
            }
        }
    }
    Ok(out)
}

/// Oracle values of the quantities a run would estimate: Wilson loops
/// averaged exactly as the loop measurer averages them, or the correlator
/// averaged over the measurer's site pairs.
pub fn oracle_table(kind: RunKind, config: &RunConfig, quad: &QuadratureSpec) -> Result<String> {
    config.validate(kind)?;
    quad.validate()?;
    let g = config.geometry(kind)?;
    let echo = serde_json::to_string(&config.trajectory_key())?;
    let mut out = format!("# z2lab {} oracle\n# quadrature={}\n# config={echo}\n", env!("CARGO_PKG_VERSION"), serde_json::to_string(quad)?);
    let (model, groups): (FactorModel, Vec<(String, Vec<Monomial>)>) = match kind {
        RunKind::Gauge => {
            let p = config.model_params()?;
            let m = LoopMeasurer::new(&g, config.observables.max_r, config.observables.max_t)?;
            let groups = m
                .wilson_placements()
                .into_iter()
                .map(|(k, ls)| {
                    let label = format!("{},{},{},{},{},{}", p.beta, p.omega, config.beta_spatial_label(), k.plane, k.r, k.t);
                    (label, ls.into_iter().map(Monomial::from_vars).collect())
                })
                .collect();
            out.push_str("beta,omega,beta_spatial,plane,R,T,value,n_nodes,change,converged\n");
            (FactorModel::gauge(&g, &p)?, groups)
        }
        RunKind::TwoWall => {
            let p = config.wall_params()?;
            let axes = config.observables.correlator_axes.clone().unwrap_or_else(|| (0..g.dim()).collect());
            let m = CorrelatorMeasurer::new(&g, &axes, config.observables.max_separation)?;
            let mut groups = Vec::new();
            for (i, pairs) in m.pairs().iter().enumerate() {
                let (axis, x) = (axes[i / (m.max_sep() + 1)], i % (m.max_sep() + 1));
                let label = format!("{},{},{},{axis},{x}", g.dim(), p.beta, p.omega);
                groups.push((label, pairs.iter().map(|&(a, b)| Monomial::from_vars([a as usize, b as usize])).collect()));
            }
            out.push_str("k,beta,omega,axis,x,value,n_nodes,change,converged\n");
            (FactorModel::spin(&g, &p)?, groups)
        }
    };
    let mut unique: Vec<Monomial> = groups.iter().flat_map(|(_, ms)| ms.iter().cloned()).collect();
    unique.sort();
    unique.dedup();
    let values = model.expectations(&unique, quad)?;
    for (label, ms) in &groups {
        let (mut sum, mut n_nodes, mut change) = (0.0, 0, 0.0f64);
        for m in ms {
            let v = values[unique.binary_search(m).expect("monomial was collected")];
            sum += v.value;
            n_nodes = n_nodes.max(v.n_nodes);
            change = change.max(v.change);
        }
        let converged = change < quad.convergence_tol;
        let _ = writeln!(out, "{label},{},{n_nodes},{change},{converged}", sum / ms.len() as f64);
    }
    Ok(out)
}

/// GKS I/II scan on the model a config describes.
pub fn gks_report(kind: RunKind, config: &RunConfig, max_degree: u32, quad: &QuadratureSpec) -> Result<GksReport> {
    config.validate(kind)?;
    let g = config.geometry(kind)?;
    let model = match kind {
        RunKind::Gauge => FactorModel::gauge(&g, &config.model_params()?)?,
        RunKind::TwoWall => FactorModel::spin(&g, &config.wall_params()?)?,
    };
    gks_scan(&model, max_degree, quad)
}
