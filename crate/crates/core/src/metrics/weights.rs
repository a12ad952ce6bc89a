//! Density-based sample weights for imbalanced regression targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityEstimator {
    Histogram { bins: usize },
    Kernel { bandwidth: f64 },
}

impl Default for DensityEstimator {
    fn default() -> Self {
        DensityEstimator::Histogram { bins: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub density_estimator: DensityEstimator,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            alpha: 1.0,
            epsilon: 1e-6,
            density_estimator: DensityEstimator::default(),
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha must be >= 0"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon must be > 0"));
        }
        match self.density_estimator {
            DensityEstimator::Histogram { bins: 0 } => {
                Err(Error::param("histogram bins must be >= 1"))
            }
            DensityEstimator::Kernel { bandwidth } if !(bandwidth > 0.0) => {
                Err(Error::param("kernel bandwidth must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Label density over [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub enum LabelDensity {
    /// Frequency density per equal-width bin; the last bin includes 1.0.
    Histogram { density: Vec<f64> },
    /// Gaussian kernel density estimate.
    Kernel { bandwidth: f64, samples: Vec<f64> },
}

impl LabelDensity {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            LabelDensity::Histogram { density } => density[bin_of(y, density.len())],
            LabelDensity::Kernel { bandwidth, samples } => {
                let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
                samples
                    .iter()
                    .map(|s| {
                        let z = (y - s) / bandwidth;
                        (-0.5 * z * z).exp()
                    })
                    .sum::<f64>()
                    * norm
            }
        }
    }
}

fn bin_of(y: f64, bins: usize) -> usize {
    ((y * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        Some(&bad) => Err(Error::LabelOutOfRange(bad)),
        None => Ok(()),
    }
}

pub fn label_density(labels: &[f64], params: &WeightParams) -> Result<LabelDensity> {
    params.validate()?;
    if labels.len() < 2 {
        return Err(Error::param(format!(
            "density needs at least 2 labels, got {}",
            labels.len()
        )));
    }
    check_labels(labels)?;
    Ok(match params.density_estimator {
        DensityEstimator::Histogram { bins } => {
            let mut counts = vec![0usize; bins];
            for &l in labels {
                counts[bin_of(l, bins)] += 1;
            }
            let scale = bins as f64 / labels.len() as f64;
            LabelDensity::Histogram {
                density: counts.into_iter().map(|c| c as f64 * scale).collect(),
            }
        }
        DensityEstimator::Kernel { bandwidth } => LabelDensity::Kernel {
            bandwidth,
            samples: labels.to_vec(),
        },
    })
}

/// `max(1 - alpha p'(y), eps)` normalised to unit mean, where `p'` is the
/// label density min-max scaled over the observed labels. A flat density
/// (max = min) scales to zero everywhere.
pub fn dense_weights(labels: &[f64], params: &WeightParams) -> Result<Vec<f64>> {
    params.validate()?;
    if labels.is_empty() {
        return Err(Error::param("dense_weights needs at least one label"));
    }
    check_labels(labels)?;
    if labels.len() == 1 {
        return Ok(vec![1.0]);
    }
    let density = label_density(labels, params)?;
    let p: Vec<f64> = match &density {
        LabelDensity::Histogram { .. } => labels.iter().map(|&y| density.eval(y)).collect(),
        LabelDensity::Kernel { .. } => {
            // evaluate once per distinct label
            let mut sorted = labels.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let values: Vec<f64> = sorted.iter().map(|&y| density.eval(y)).collect();
            labels
                .iter()
                .map(|y| {
                    let k = sorted.binary_search_by(|s| s.total_cmp(y)).expect("label present");
                    values[k]
                })
                .collect()
        }
    };
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = p
        .iter()
        .map(|&d| {
            let scaled = if hi > lo { (d - lo) / (hi - lo) } else { 0.0 };
            (1.0 - params.alpha * scaled).max(params.epsilon)
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_labels_give_flat_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let labels: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let LabelDensity::Histogram { density } =
            label_density(&labels, &WeightParams::default()).unwrap()
        else {
            panic!("histogram expected");
        };
        assert_eq!(density.len(), 100);
        assert!(density.iter().all(|d| (d - 1.0).abs() <= 0.1), "{density:?}");
    }

    #[test]
    fn bimodal_density_dips_in_the_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let labels: Vec<f64> = (0..5000)
            .map(|i| {
                let c = if i % 2 == 0 { 0.05 } else { 0.95 };
                (c + rng.random_range(-0.03..0.03f64)).clamp(0.0, 1.0)
            })
            .collect();
        for est in [
            DensityEstimator::Histogram { bins: 100 },
            DensityEstimator::Kernel { bandwidth: 0.05 },
        ] {
            let params = WeightParams {
                density_estimator: est,
                ..WeightParams::default()
            };
            let d = label_density(&labels, &params).unwrap();
            assert!(d.eval(0.5) < d.eval(0.05));
            assert!(d.eval(0.5) < d.eval(0.95));
        }
    }

    #[test]
    fn constant_labels_give_unit_weights() {
        let labels = vec![0.3; 50];
        let d = label_density(&labels, &WeightParams::default()).unwrap();
        assert!(d.eval(0.3) > 0.0);
        for est in [
            DensityEstimator::Histogram { bins: 100 },
            DensityEstimator::Kernel { bandwidth: 0.05 },
        ] {
            let params = WeightParams {
                density_estimator: est,
                ..WeightParams::default()
            };
            assert!(dense_weights(&labels, &params).unwrap().iter().all(|&w| w == 1.0));
        }
    }

    #[test]
    fn zero_alpha_gives_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let labels: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
        let params = WeightParams {
            alpha: 0.0,
            ..WeightParams::default()
        };
        assert!(dense_weights(&labels, &params).unwrap().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn rare_labels_weigh_more() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let labels: Vec<f64> = (0..1000)
            .map(|i| {
                if i % 10 == 0 {
                    rng.random_range(0.95..1.0)
                } else {
                    rng.random_range(0.0..0.05)
                }
            })
            .collect();
        let w = dense_weights(&labels, &WeightParams::default()).unwrap();
        let mean = |pick: bool| {
            let v: Vec<f64> = (0..labels.len())
                .filter(|&i| (i % 10 == 0) == pick)
                .map(|i| w[i])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > mean(false));
    }

    #[test]
    fn errors() {
        assert!(label_density(&[0.5], &WeightParams::default()).is_err());
        assert!(dense_weights(&[], &WeightParams::default()).is_err());
        assert_eq!(dense_weights(&[0.4], &WeightParams::default()).unwrap(), vec![1.0]);
        assert!(matches!(
            dense_weights(&[0.1, 1.5], &WeightParams::default()),
            Err(Error::LabelOutOfRange(_))
        ));
        let bad = WeightParams {
            alpha: -1.0,
            ..WeightParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
