//! k-local and bootstrap sensitivities of the threshold and existence queries.

use crate::data::{count_matching, Dataset, RangePredicate, Schema, ThresholdQuery, Triviality};
use crate::error::{Error, Result};

/// Closed form from the count alone.
pub fn sensitivity_from_count(count: usize, n: usize, threshold: i64, k: u32, triviality: Triviality) -> u8 {
    let (c, n, b, k) = (count as i64, n as i64, threshold, i64::from(k));
    if k == 0 || b < 0 || b >= n || triviality != Triviality::Mixed {
        return 0;
    }
    u8::from(c > b - k && c <= b + k)
}

pub fn k_local_sensitivity(dataset: &Dataset, query: &ThresholdQuery, k: u32) -> Result<u8> {
    let count = count_matching(dataset, &query.predicate)?;
    let triviality = query.predicate.triviality(dataset.schema())?;
    Ok(sensitivity_from_count(count, dataset.len(), query.threshold, k, triviality))
}

const BRUTE_MAX_N: usize = 8;
const BRUTE_MAX_DOMAIN: u128 = 5;
const BRUTE_MAX_K: u32 = 2;

fn domain_points(schema: &Schema) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for attr in schema.attributes() {
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..attr.grid_len()).map(move |j| {
                    let mut q = p.clone();
                    q.push(attr.grid_point(j));
                    q
                })
            })
            .collect();
    }
    points
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::with_capacity(r), &mut out);
    out
}

/// Maximum change of the threshold query over every dataset reachable by
/// rewriting at most `k` records to arbitrary domain points.
pub fn k_local_sensitivity_bruteforce(dataset: &Dataset, query: &ThresholdQuery, k: u32) -> Result<u8> {
    let n = dataset.len();
    let domain = dataset.schema().domain_size();
    if n > BRUTE_MAX_N || domain > BRUTE_MAX_DOMAIN || k > BRUTE_MAX_K {
        return Err(Error::InstanceTooLarge { n, domain, k });
    }
    query.predicate.check(dataset.schema())?;
    let points = domain_points(dataset.schema());
    let rows = dataset.rows();
    let base = rows.iter().filter(|r| query.predicate.matches(r)).count() as i64;
    let eval = |count: i64| u8::from(count > query.threshold);
    let f0 = eval(base);
    // Rewriting exactly min(k, n) records covers rewriting fewer: a record
    // may be rewritten to its own value.
    let r = (k as usize).min(n);
    for subset in combinations(n, r) {
        let removed = subset.iter().filter(|&&i| query.predicate.matches(&rows[i])).count() as i64;
        let mut assignment = vec![0usize; r];
        loop {
            let added = assignment
                .iter()
                .filter(|&&p| query.predicate.matches(&points[p]))
                .count() as i64;
            if eval(base - removed + added) != f0 {
                return Ok(1);
            }
            let mut slot = 0;
            loop {
                if slot == r {
                    break;
                }
                assignment[slot] += 1;
                if assignment[slot] < points.len() {
                    break;
                }
                assignment[slot] = 0;
                slot += 1;
            }
            if slot == r {
                break;
            }
        }
    }
    Ok(0)
}

/// 0 when every record or no record satisfies the predicate, else 1.
pub fn bootstrap_sensitivity(dataset: &Dataset, predicate: &RangePredicate) -> Result<u8> {
    let count = count_matching(dataset, predicate)?;
    Ok(u8::from(count > 0 && count < dataset.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeSpec;

    fn data(values: &[f64], upper: f64) -> Dataset {
        let schema = Schema::new(vec![AttributeSpec::numeric("x", 0.0, upper, 1.0)]).unwrap();
        Dataset::new(schema, values.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    fn query(u: f64, v: f64, b: i64) -> ThresholdQuery {
        ThresholdQuery::new(RangePredicate::range(0, u, v).unwrap(), b)
    }

    #[test]
    fn example_incomes() {
        let d = data(&[5.0, 8.0, 15.0, 16.0, 17.0, 18.0], 100.0);
        assert_eq!(k_local_sensitivity(&d, &query(1.0, 10.0, 3), 1).unwrap(), 0);
        assert_eq!(k_local_sensitivity(&d, &query(1.0, 10.0, 2), 1).unwrap(), 1);
        assert_eq!(k_local_sensitivity(&d, &query(1.0, 10.0, -1), 1).unwrap(), 0);
    }

    #[test]
    fn sensitivity_profile_over_thresholds() {
        let d = data(&[0.0, 0.0, 2.0, 2.0, 3.0, 3.0], 3.0);
        let profile: Vec<u8> = (0..6)
            .map(|b| k_local_sensitivity(&d, &query(0.0, 1.0, b), 1).unwrap())
            .collect();
        assert_eq!(profile, [0, 1, 1, 0, 0, 0]);
        let brute: Vec<u8> = (0..6)
            .map(|b| k_local_sensitivity_bruteforce(&d, &query(0.0, 1.0, b), 1).unwrap())
            .collect();
        assert_eq!(brute, profile);
    }

    #[test]
    fn bruteforce_edge_cases() {
        let d = data(&[0.0, 2.0], 3.0);
        assert_eq!(k_local_sensitivity_bruteforce(&d, &query(0.0, 1.0, 0), 1).unwrap(), 1);
        assert_eq!(k_local_sensitivity_bruteforce(&d, &query(0.0, 1.0, 0), 0).unwrap(), 0);
        let big = data(&[0.0; 9], 3.0);
        assert!(matches!(
            k_local_sensitivity_bruteforce(&big, &query(0.0, 1.0, 0), 1),
            Err(Error::InstanceTooLarge { n: 9, .. })
        ));
    }

    #[test]
    fn bootstrap_cases() {
        let d = data(&[1.0, 1.0, 3.0], 4.0);
        let p = |u, v| RangePredicate::range(0, u, v).unwrap();
        assert_eq!(bootstrap_sensitivity(&d, &p(0.0, 4.0)).unwrap(), 0);
        assert_eq!(bootstrap_sensitivity(&d, &p(2.0, 3.0)).unwrap(), 0);
        assert_eq!(bootstrap_sensitivity(&d, &p(0.0, 2.0)).unwrap(), 1);
        assert_eq!(bootstrap_sensitivity(&data(&[], 4.0), &p(0.0, 2.0)).unwrap(), 0);
    }
}
