//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{AttributeSpec, Dataset, Schema};

pub const WIDE_DOMAIN_UPPER: f64 = ((1u64 << 20) - 1) as f64;

/// `score` over 2^20 integers, `age` over 0..=125 and a four-label `segment`.
pub fn mixed_schema() -> Schema {
    Schema::new(vec![
        AttributeSpec::numeric("score", 0.0, WIDE_DOMAIN_UPPER, 1.0),
        AttributeSpec::numeric("age", 0.0, 125.0, 1.0),
        AttributeSpec::categorical("segment", ["retail", "business", "private", "public"]),
    ])
    .expect("static schema")
}

/// `n` rows over [`mixed_schema`]; about a quarter repeat an earlier row so
/// that groups and duplicates occur.
pub fn mixed_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        if !rows.is_empty() && rng.random_bool(0.25) {
            let mut row = rows[rng.random_range(0..rows.len())].clone();
            // Keep some prefix collisions without a full duplicate.
            if rng.random_bool(0.5) {
                row[1] = f64::from(rng.random_range(0..=125u32));
            }
            rows.push(row);
        } else {
            rows.push(vec![
                rng.random_range(0..1u64 << 20) as f64,
                f64::from(rng.random_range(0..=125u32)),
                f64::from(rng.random_range(0..4u32)),
            ]);
        }
    }
    Dataset::new(mixed_schema(), rows).expect("values inside the schema")
}

/// One attribute over 0..=255 with injected duplicates.
pub fn byte_dataset(n: usize, seed: u64) -> Dataset {
    let schema = Schema::new(vec![AttributeSpec::numeric("x", 0.0, 255.0, 1.0)]).expect("static schema");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let row = if !rows.is_empty() && rng.random_bool(0.4) {
            rows[rng.random_range(0..rows.len())].clone()
        } else {
            vec![f64::from(rng.random_range(0..=255u32))]
        };
        rows.push(row);
    }
    Dataset::new(schema, rows).expect("values inside the schema")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_bounds() {
        let a = mixed_dataset(200, 5);
        assert_eq!(a, mixed_dataset(200, 5));
        assert_ne!(a, mixed_dataset(200, 6));
        let b = byte_dataset(100, 1);
        let distinct: std::collections::BTreeSet<u64> = b.column(0).map(|x| x as u64).collect();
        assert!(distinct.len() < 100);
    }
}
