use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PlanningVocabulary;
use crate::error::{Error, Result};

/// Draws `m` distinct vocabulary ids without replacement, each draw proportional to weight.
pub fn sample_candidates(
    vocab: &PlanningVocabulary,
    weights: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if weights.len() != vocab.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} weights", vocab.len()),
            actual: format!("{}", weights.len()),
        });
    }
    if m > vocab.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {m} candidates from {} trajectories",
            vocab.len()
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidParameter(format!("weight {bad} is not finite and nonnegative")));
    }
    let available = weights.iter().filter(|&&w| w > 0.0).count();
    if available < m {
        return Err(Error::InsufficientPositiveWeights { needed: m, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample_weighted(&mut rng, weights.len(), |i| weights[i], m)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(picked.into_vec())
}
