#![allow(dead_code)]

use metaemb::embedding_io::{l2_normalize, AlignedEmbeddingSet, EmbeddingTable};
use metaemb::{MetaConfig, TrainConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i:04}")).collect()
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Independent Gaussian sources over a shared vocabulary, l2-normalized.
pub fn random_set(n_words: usize, dims: &[usize], seed: u64) -> AlignedEmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = dims
        .iter()
        .enumerate()
        .map(|(s, &d)| EmbeddingTable::new(format!("src{s}"), words(n_words), gaussian(n_words, d, &mut rng)).unwrap())
        .collect();
    l2_normalize(AlignedEmbeddingSet::new(tables).unwrap()).unwrap()
}

/// Normalized set built from explicit matrices (all sharing one vocabulary).
pub fn set_from(matrices: Vec<Array2<f64>>) -> AlignedEmbeddingSet {
    let n = matrices[0].nrows();
    let tables = matrices
        .into_iter()
        .enumerate()
        .map(|(s, m)| EmbeddingTable::new(format!("src{s}"), words(n), m).unwrap())
        .collect();
    l2_normalize(AlignedEmbeddingSet::new(tables).unwrap()).unwrap()
}

/// Paper defaults with a chosen seed (learning rate left to the loss default).
pub fn default_config(seed: u64) -> MetaConfig {
    MetaConfig {
        seed,
        train: TrainConfig {
            shuffle_seed: seed,
            ..TrainConfig::default()
        },
        ..MetaConfig::default()
    }
}

/// Small, fast configuration for dimension and determinism checks.
pub fn quick_config(hidden: usize, epochs: usize, seed: u64) -> MetaConfig {
    MetaConfig {
        hidden_dim: hidden,
        rank: hidden,
        seed,
        train: TrainConfig {
            epochs,
            shuffle_seed: seed,
            ..TrainConfig::default()
        },
        ..MetaConfig::default()
    }
}
