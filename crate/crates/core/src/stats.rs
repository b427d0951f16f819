//! Binning, jackknife and autocorrelation analysis for Markov-chain series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub mean: f64,
    pub error: f64,
    pub n_samples: usize,
    pub bin_size: usize,
}

impl EstimateWithError {
    /// `mean + k * error`, the usual one-sided tolerance.
    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.error
    }

    pub fn lower(&self, k: f64) -> f64 {
        self.mean - k * self.error
    }

    /// Whether `value` lies within `k` standard errors.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSize {
    Fixed(usize),
    /// Double the bin size while the error estimate still grows by more than 5%.
    Auto,
}

/// Smallest number of bins the automatic search will go down to.
const MIN_AUTO_BINS: usize = 32;
const PLATEAU_GROWTH: f64 = 1.05;

/// Bin means of a series; the trailing incomplete bin is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    pub bins: Vec<f64>,
    pub bin_size: usize,
}

impl BinnedSeries {
    pub fn new(samples: &[f64], bin_size: usize) -> Result<Self> {
        if bin_size == 0 || samples.len() < 2 * bin_size {
            return Err(Error::TooFewSamples {
                needed: 2 * bin_size.max(1),
                got: samples.len(),
            });
        }
        let bins = samples
            .chunks_exact(bin_size)
            .map(|c| c.iter().sum::<f64>() / bin_size as f64)
            .collect();
        Ok(BinnedSeries { bins, bin_size })
    }

    /// Wraps already-binned values (e.g. exact or synthetic data).
    pub fn from_bins(bins: Vec<f64>, bin_size: usize) -> Self {
        BinnedSeries { bins, bin_size }
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn n_samples(&self) -> usize {
        self.bins.len() * self.bin_size
    }

    pub fn mean(&self) -> f64 {
        self.bins.iter().sum::<f64>() / self.bins.len() as f64
    }

    pub fn estimate(&self) -> EstimateWithError {
        let n = self.bins.len();
        let mean = self.mean();
        let error = if n < 2 || self.bins.iter().all(|&b| b == self.bins[0]) {
            0.0
        } else {
            let var = self.bins.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        EstimateWithError {
            mean,
            error,
            n_samples: self.n_samples(),
            bin_size: self.bin_size,
        }
    }

    /// Merges bins of equal size from several independent chains.
    pub fn concat(parts: &[BinnedSeries]) -> Result<Self> {
        let bin_size = parts.first().map(|p| p.bin_size).unwrap_or(1);
        if parts.iter().any(|p| p.bin_size != bin_size) {
            return Err(Error::InvalidParams("cannot merge series with different bin sizes".into()));
        }
        Ok(BinnedSeries {
            bins: parts.iter().flat_map(|p| p.bins.iter().copied()).collect(),
            bin_size,
        })
    }
}

/// Bin size selected by the automatic plateau search.
pub fn auto_bin_size(samples: &[f64]) -> usize {
    let err = |b: usize| {
        BinnedSeries::new(samples, b)
            .map(|s| s.estimate().error)
            .unwrap_or(0.0)
    };
    let mut b = 1;
    let mut current = err(1);
    while samples.len() / (2 * b) >= MIN_AUTO_BINS {
        let next = err(2 * b);
        if next > PLATEAU_GROWTH * current {
            b *= 2;
            current = next;
        } else {
            break;
        }
    }
    b
}

pub fn binned_estimate(samples: &[f64], bin_size: BinSize) -> Result<EstimateWithError> {
    let b = match bin_size {
        BinSize::Fixed(b) => b,
        BinSize::Auto => auto_bin_size(samples),
    };
    Ok(BinnedSeries::new(samples, b)?.estimate())
}

/// Delete-one jackknife of `f` applied to the means of several series that
/// share a bin count.
pub fn jackknife<F>(series: &[&BinnedSeries], f: F) -> Result<EstimateWithError>
where
    F: Fn(&[f64]) -> f64,
{
    let nb = series.first().map(|s| s.n_bins()).unwrap_or(0);
    if nb < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: nb });
    }
    if series.iter().any(|s| s.n_bins() != nb) {
        return Err(Error::InvalidParams("jackknife series have different bin counts".into()));
    }
    let sums: Vec<f64> = series.iter().map(|s| s.bins.iter().sum()).collect();
    let means: Vec<f64> = sums.iter().map(|s| s / nb as f64).collect();
    let central = f(&means);
    if !central.is_finite() {
        return Err(Error::NonPositive(format!("estimator undefined at means {means:?}")));
    }
    let mut replicas = Vec::with_capacity(nb);
    let mut args = vec![0.0; series.len()];
    for i in 0..nb {
        for (k, s) in series.iter().enumerate() {
            args[k] = (sums[k] - s.bins[i]) / (nb - 1) as f64;
        }
        let r = f(&args);
        if !r.is_finite() {
            return Err(Error::NonPositive(format!("estimator undefined on jackknife replica {i}")));
        }
        replicas.push(r);
    }
    let rbar = replicas.iter().sum::<f64>() / nb as f64;
    let var = replicas.iter().map(|r| (r - rbar).powi(2)).sum::<f64>() * (nb - 1) as f64 / nb as f64;
    Ok(EstimateWithError {
        mean: central,
        error: var.sqrt(),
        n_samples: series[0].n_samples(),
        bin_size: series[0].bin_size,
    })
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (`W >= 6 tau`). Returns 0.5 for uncorrelated data.
pub fn integrated_autocorrelation_time(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 4 {
        return 0.5;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let c0 = d.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let ct = d[..n - t].iter().zip(&d[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::standard_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_samples_have_zero_error() {
        let s = vec![0.1; 1000];
        let e = binned_estimate(&s, BinSize::Auto).unwrap();
        assert_eq!(e.error, 0.0);
        let e = binned_estimate(&s, BinSize::Fixed(7)).unwrap();
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            binned_estimate(&[1.0, 2.0, 3.0], BinSize::Fixed(2)),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn iid_normals_give_clt_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let s: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let e = binned_estimate(&s, BinSize::Fixed(1)).unwrap();
        let naive = 1.0 / (n as f64).sqrt();
        assert!((e.error / naive - 1.0).abs() < 0.2);
    }

    #[test]
    fn ar1_plateau_matches_analytic_inflation() {
        let rho: f64 = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 1 << 20;
        let mut x = 0.0;
        let mut s = Vec::with_capacity(n);
        let scale = (1.0 - rho * rho).sqrt();
        for _ in 0..n {
            x = rho * x + scale * standard_normal(&mut rng);
            s.push(x);
        }
        let naive = binned_estimate(&s, BinSize::Fixed(1)).unwrap().error;
        let plateau = binned_estimate(&s, BinSize::Auto).unwrap();
        let expect = ((1.0 + rho) / (1.0 - rho)).sqrt() * naive;
        assert!(
            (plateau.error / expect - 1.0).abs() < 0.25,
            "plateau {} expected {} (bin {})",
            plateau.error,
            expect,
            plateau.bin_size
        );
        let tau = integrated_autocorrelation_time(&s);
        // tau_int = (1 + rho) / (2 (1 - rho)) = 9.5
        assert!((tau - 9.5).abs() < 1.5, "tau {tau}");
    }

    #[test]
    fn jackknife_of_linear_function_is_plain_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..4000).map(|_| standard_normal(&mut rng)).collect();
        let b = BinnedSeries::new(&s, 10).unwrap();
        let j = jackknife(&[&b], |m| 3.0 * m[0]).unwrap();
        let e = b.estimate();
        assert!((j.mean - 3.0 * e.mean).abs() < 1e-12);
        assert!((j.error - 3.0 * e.error).abs() < 1e-12);
    }

    #[test]
    fn jackknife_reports_undefined_estimators() {
        let b = BinnedSeries::from_bins(vec![-1.0, -2.0, -1.5], 1);
        assert!(jackknife(&[&b], |m| m[0].ln()).is_err());
    }
}
