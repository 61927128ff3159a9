//! Seeded K-shot train/dev sampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::task::InputExample;

pub const DEFAULT_SEEDS: [u64; 5] = [13, 21, 42, 87, 100];

/// Draws `k` examples per class for training and another, disjoint `k` per
/// class for development, from a seeded shuffle of `pool`.
pub fn sample_few_shot(
    pool: &[InputExample],
    num_labels: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<InputExample>, Vec<InputExample>)> {
    let mut per_class = vec![0usize; num_labels];
    for ex in pool {
        match ex.gold {
            Some(g) if g < num_labels => per_class[g] += 1,
            _ => return Err(Error::InvalidExample("pool example without a valid gold label".into())),
        }
    }
    if let Some((label, &n)) = per_class.iter().enumerate().find(|(_, &n)| n < 2 * k) {
        return Err(Error::InvalidExample(format!(
            "label {label} has {n} examples, {} needed for k = {k}",
            2 * k
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_count = vec![0usize; num_labels];
    let mut dev_count = vec![0usize; num_labels];
    let mut train = Vec::with_capacity(k * num_labels);
    let mut dev = Vec::with_capacity(k * num_labels);
    for i in order {
        let g = pool[i].gold.expect("checked above");
        if train_count[g] < k {
            train_count[g] += 1;
            train.push(pool[i].clone());
        } else if dev_count[g] < k {
            dev_count[g] += 1;
            dev.push(pool[i].clone());
        }
        if train.len() == k * num_labels && dev.len() == k * num_labels {
            break;
        }
    }
    Ok((train, dev))
}
