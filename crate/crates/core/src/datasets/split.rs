use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Seeded partition into a discovery part ("infer") and a held-out
/// evaluation part ("eva").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub infer_fraction: f64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            seed,
            infer_fraction: 0.9,
        }
    }

    pub fn eva_fraction(&self) -> f64 {
        1.0 - self.infer_fraction
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(0)
    }
}

/// Shuffles with the spec's seed and cuts at `round(n * infer_fraction)`.
pub fn split<T: Clone>(samples: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    if samples.len() < MIN_SPLIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SPLIT_SAMPLES,
            found: samples.len(),
        });
    }
    if !(spec.infer_fraction > 0.0 && spec.infer_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "infer fraction {} must lie strictly between 0 and 1",
            spec.infer_fraction
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let cut = ((samples.len() as f64) * spec.infer_fraction).round() as usize;
    let cut = cut.clamp(1, samples.len() - 1);
    let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}
