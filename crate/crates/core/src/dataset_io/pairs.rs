//! Seeded scene pairing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPlan {
    pub seed: u64,
    /// Unordered pairs, each stored with the smaller id first.
    pub pairs: Vec<(String, String)>,
}

/// Draws distinct unordered pairs uniformly without replacement; once all are
/// used, further rounds reshuffle the full set.
pub fn sample_pairs(
    scene_ids: &[String],
    n_pairs: usize,
    seed: u64,
) -> Result<PairPlan, DatasetError> {
    let mut ids = scene_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 2 {
        return Err(DatasetError::BadParams(
            "pairing needs at least 2 distinct scenes".into(),
        ));
    }
    if n_pairs == 0 {
        return Err(DatasetError::BadParams("n_pairs must be at least 1".into()));
    }
    let mut all = Vec::new();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            all.push((ids[i].clone(), ids[j].clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let mut round = all.clone();
        round.shuffle(&mut rng);
        pairs.extend(round.into_iter().take(n_pairs - pairs.len()));
    }
    Ok(PairPlan { seed, pairs })
}
