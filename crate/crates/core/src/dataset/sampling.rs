use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Label, MultiPlatformSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let ratios = [self.train, self.val, self.test];
        if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(DatasetError::Config(format!(
                "ratios must be positive, got {ratios:?}"
            )));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Config(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Downsamples the majority class to the minority count, then shuffles.
pub fn balance(samples: &[MultiPlatformSample], seed: u64) -> Result<Vec<MultiPlatformSample>, DatasetError> {
    let (fake, real): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.label() == Label::Fake);
    if fake.is_empty() {
        return Err(DatasetError::Balance(Label::Fake));
    }
    if real.is_empty() {
        return Err(DatasetError::Balance(Label::True));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = fake.len().min(real.len());
    let pick = |group: Vec<&MultiPlatformSample>, rng: &mut ChaCha8Rng| -> Vec<MultiPlatformSample> {
        if group.len() == keep {
            return group.into_iter().cloned().collect();
        }
        let mut idx: Vec<usize> = rand::seq::index::sample(rng, group.len(), keep).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| group[i].clone()).collect()
    };
    let mut out = pick(fake, &mut rng);
    out.extend(pick(real, &mut rng));
    out.shuffle(&mut rng);
    Ok(out)
}

/// Train, validation and test samples.
pub type SplitSets = (Vec<MultiPlatformSample>, Vec<MultiPlatformSample>, Vec<MultiPlatformSample>);

/// Seeded shuffle followed by contiguous cuts of `floor(train * n)` and
/// `floor(val * n)`; the test set takes the remainder.
pub fn split(
    samples: &[MultiPlatformSample],
    config: &SplitConfig,
) -> Result<SplitSets, DatasetError> {
    config.validate()?;
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    // the epsilon keeps 0.7 * 30 from flooring to 20
    let n_train = (config.train * n as f64 + 1e-9).floor() as usize;
    let n_val = ((config.val * n as f64 + 1e-9).floor() as usize).min(n - n_train);
    let take = |range: std::ops::Range<usize>| -> Vec<MultiPlatformSample> {
        order[range].iter().map(|&i| samples[i].clone()).collect()
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_val),
        take(n_train + n_val..n),
    ))
}
