//! Seeded synthetic data for tests, demos and benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};

use crate::schema::{Dataset, FeatureSpec, Schema};

/// Three real and three categorical features with a binary target.
pub fn mixed_schema() -> Schema {
    Schema::new(
        vec![
            FeatureSpec::real("income"),
            FeatureSpec::real("age"),
            FeatureSpec::real("ratio"),
            FeatureSpec::categorical("housing", ["own", "rent", "free"]),
            FeatureSpec::categorical("phone", ["yes", "no"]),
            FeatureSpec::categorical("purpose", ["car", "home", "business", "other"]),
        ],
        "approved",
        vec!["no".into(), "yes".into()],
    )
    .expect("static schema is valid")
}

/// `n` labelled rows of [`mixed_schema`]. The label is a noisy threshold on
/// a score that mixes all six features.
pub fn mixed_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let age = Normal::<f64>::new(40.0, 10.0).expect("valid normal");
    let noise = Normal::new(0.0, 0.4).expect("valid normal");
    let housing = WeightedIndex::new([0.5, 0.3, 0.2]).expect("valid weights");
    let phone = WeightedIndex::new([0.7, 0.3]).expect("valid weights");
    let purpose = WeightedIndex::new([0.4, 0.3, 0.2, 0.1]).expect("valid weights");
    let housing_effect = [0.8, -0.6, 0.0];
    let phone_effect = [0.0, -0.7];
    let purpose_effect = [0.0, 0.5, -0.9, 1.2];

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let income: f64 = rng.gen_range(0.0..10.0);
        let a = Distribution::<f64>::sample(&age, &mut rng).clamp(18.0, 80.0);
        let ratio: f64 = rng.gen_range(0.0..1.0);
        let h = housing.sample(&mut rng);
        let p = phone.sample(&mut rng);
        let u = purpose.sample(&mut rng);
        let score = 0.6 * (income - 5.0) + 0.05 * (a - 40.0) - 2.5 * (ratio - 0.5)
            + housing_effect[h]
            + phone_effect[p]
            + purpose_effect[u]
            + noise.sample(&mut rng);
        rows.push(vec![income, a, ratio, h as f64, p as f64, u as f64]);
        labels.push(usize::from(score > 0.0));
    }
    Dataset::new(rows, Some(labels))
}

/// Deterministic shuffled split into (train, test) indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let test = idx.split_off(cut.min(n));
    (idx, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_balance() {
        let ds = mixed_dataset(500, 1);
        let schema = mixed_schema();
        assert_eq!(ds.len(), 500);
        for r in &ds.rows {
            schema.check_record(r).unwrap();
        }
        let pos = ds.labels.as_ref().unwrap().iter().filter(|&&l| l == 1).count();
        assert!((150..350).contains(&pos), "{pos} positives");
    }

    #[test]
    fn deterministic() {
        assert_eq!(mixed_dataset(50, 3), mixed_dataset(50, 3));
        assert_ne!(mixed_dataset(50, 3), mixed_dataset(50, 4));
    }

    #[test]
    fn split_is_a_partition() {
        let (train, test) = split_indices(100, 0.75, 2);
        assert_eq!((train.len(), test.len()), (75, 25));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
