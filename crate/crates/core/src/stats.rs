//! Monte Carlo summaries.

use serde::{Deserialize, Serialize};

/// Experiment parameters attached to an estimate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub d: usize,
    pub p: f64,
    pub n: Option<f64>,
    pub eps: Option<f64>,
    pub h: Option<f64>,
}

/// Sample mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub root_seed: u64,
    pub event: String,
    pub params: Params,
}

impl Estimate {
    /// Mean and `sd / sqrt(trials)` of a sample.
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, stderr) = mean_se(xs);
        Estimate { mean, stderr, trials: xs.len(), root_seed: 0, event: String::new(), params: Params::default() }
    }

    pub fn from_bools(xs: &[bool]) -> Self {
        let v: Vec<f64> = xs.iter().map(|&b| b as u8 as f64).collect();
        Self::from_samples(&v)
    }

    pub fn labelled(mut self, event: impl Into<String>, root_seed: u64, params: Params) -> Self {
        self.event = event.into();
        self.root_seed = root_seed;
        self.params = params;
        self
    }

    /// Whether `|mean - target| <= z * stderr`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.stderr
    }
}

/// Mean and standard error; the error is 0 for fewer than two samples.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Standard error of the product of two independent estimates.
pub fn product_se(a: &Estimate, b: &Estimate) -> f64 {
    ((a.mean * b.stderr).powi(2) + (b.mean * a.stderr).powi(2) + (a.stderr * b.stderr).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_summary() {
        let e = Estimate::from_bools(&[true, false, true, true]);
        assert_eq!(e.mean, 0.75);
        assert!((e.stderr - (0.25f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(Estimate::from_samples(&[2.0]).stderr, 0.0);
    }
}
