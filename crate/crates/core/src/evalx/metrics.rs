//! Retrieval quality metrics: R@k, MRR and nDCG over ranked id lists.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Aggregate metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub recall_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub ndcg: f64,
    pub per_query: Vec<PerQueryMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerQueryMetrics {
    pub query_id: String,
    /// 1-based rank of the first positive, if any.
    pub first_positive_rank: Option<usize>,
}

fn check_aligned<A, B>(rankings: &[A], positives: &[B]) -> Result<()> {
    if rankings.len() != positives.len() {
        return Err(Error::structural(format!(
            "rankings for {} queries but positives for {}",
            rankings.len(),
            positives.len()
        )));
    }
    Ok(())
}

fn first_positive_rank(ranking: &[String], positives: &BTreeSet<String>) -> Option<usize> {
    ranking.iter().position(|d| positives.contains(d)).map(|i| i + 1)
}

/// Fraction of queries with at least one positive in the top `k`.
pub fn recall_at_k(
    rankings: &[Vec<String>],
    positives: &[BTreeSet<String>],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::validation("recall cutoff k must be ≥ 1"));
    }
    check_aligned(rankings, positives)?;
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let hits = rankings
        .iter()
        .zip(positives)
        .filter(|(r, p)| first_positive_rank(r, p).is_some_and(|rank| rank <= k))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Mean reciprocal rank of the first positive within `cutoff`, 0 on miss.
pub fn mrr(rankings: &[Vec<String>], positives: &[BTreeSet<String>], cutoff: usize) -> Result<f64> {
    if cutoff == 0 {
        return Err(Error::validation("MRR cutoff must be ≥ 1"));
    }
    check_aligned(rankings, positives)?;
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = rankings
        .iter()
        .zip(positives)
        .map(|(r, p)| match first_positive_rank(r, p) {
            Some(rank) if rank <= cutoff => 1.0 / rank as f64,
            _ => 0.0,
        })
        .sum();
    Ok(total / rankings.len() as f64)
}

/// Normalized discounted cumulative gain at `cutoff` with log2 discount,
/// averaged over queries. A query whose gains are all zero contributes 0.
pub fn ndcg(
    rankings: &[Vec<String>],
    gains: &[BTreeMap<String, f64>],
    cutoff: usize,
) -> Result<f64> {
    if cutoff == 0 {
        return Err(Error::validation("nDCG cutoff must be ≥ 1"));
    }
    check_aligned(rankings, gains)?;
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (ranking, gain) in rankings.iter().zip(gains) {
        if gain.values().any(|&g| g < 0.0) {
            return Err(Error::validation("nDCG gains must be nonnegative"));
        }
        let dcg: f64 = ranking
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, d)| gain.get(d).copied().unwrap_or(0.0) / ((i + 2) as f64).log2())
            .sum();
        let mut ideal: Vec<f64> = gain.values().copied().collect();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let idcg: f64 = ideal
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum();
        if idcg > 0.0 {
            total += dcg / idcg;
        }
    }
    Ok(total / rankings.len() as f64)
}

/// Compute the standard metric set (R@k for each `ks`, MRR@cutoff and binary
/// nDCG@cutoff) plus per-query detail rows.
pub fn compute_metrics(
    query_ids: &[String],
    rankings: &[Vec<String>],
    positives: &[BTreeSet<String>],
    ks: &[usize],
    cutoff: usize,
) -> Result<RunMetrics> {
    check_aligned(rankings, positives)?;
    let mut recall_at = BTreeMap::new();
    for &k in ks {
        recall_at.insert(k, recall_at_k(rankings, positives, k)?);
    }
    let gains: Vec<BTreeMap<String, f64>> = positives
        .iter()
        .map(|p| p.iter().map(|d| (d.clone(), 1.0)).collect())
        .collect();
    let per_query = query_ids
        .iter()
        .zip(rankings.iter().zip(positives))
        .map(|(id, (r, p))| PerQueryMetrics {
            query_id: id.clone(),
            first_positive_rank: first_positive_rank(r, p),
        })
        .collect();
    Ok(RunMetrics {
        recall_at,
        mrr: mrr(rankings, positives, cutoff)?,
        ndcg: ndcg(rankings, &gains, cutoff)?,
        per_query,
    })
}

/// Render aggregate metrics as a small CSV table.
pub fn metrics_to_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in &metrics.recall_at {
        out.push_str(&format!("recall_at_{k},{v:.6}\n"));
    }
    out.push_str(&format!("mrr,{:.6}\n", metrics.mrr));
    out.push_str(&format!("ndcg,{:.6}\n", metrics.ndcg));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn pos(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_doc_pool_recall_is_one() {
        let r = vec![ranking(&["d0"])];
        let p = vec![pos(&["d0"])];
        assert_eq!(recall_at_k(&r, &p, 1).unwrap(), 1.0);
    }

    #[test]
    fn positive_at_rank_two_splits_recall() {
        let r = vec![ranking(&["d1", "d0", "d2"])];
        let p = vec![pos(&["d0"])];
        assert_eq!(recall_at_k(&r, &p, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&r, &p, 3).unwrap(), 1.0);
    }

    #[test]
    fn recall_is_monotone_in_k() {
        let r = vec![
            ranking(&["a", "b", "c", "d"]),
            ranking(&["b", "c", "d", "a"]),
            ranking(&["c", "d", "a", "b"]),
        ];
        let p = vec![pos(&["a"]), pos(&["a"]), pos(&["a"])];
        let mut last = 0.0;
        for k in 1..=4 {
            let v = recall_at_k(&r, &p, k).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn random_rankings_give_chance_recall() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let docs: Vec<String> = (0..8).map(|i| format!("d{i}")).collect();
        let mut rankings = Vec::new();
        let mut positives = Vec::new();
        for _ in 0..1000 {
            let mut r = docs.clone();
            r.shuffle(&mut rng);
            rankings.push(r);
            positives.push(pos(&["d0"]));
        }
        let r1 = recall_at_k(&rankings, &positives, 1).unwrap();
        assert!((r1 - 0.125).abs() < 0.03, "chance recall {r1}");
    }

    #[test]
    fn mrr_hand_computed_mixture() {
        // Ranks {1, 2, miss} → (1 + 0.5 + 0)/3 = 0.5.
        let r = vec![
            ranking(&["a", "b", "c"]),
            ranking(&["b", "a", "c"]),
            ranking(&["b", "c", "d"]),
        ];
        let p = vec![pos(&["a"]), pos(&["a"]), pos(&["a"])];
        assert_eq!(mrr(&r, &p, 10).unwrap(), 0.5);
    }

    #[test]
    fn mrr_positive_beyond_cutoff_counts_zero() {
        let r = vec![ranking(&["b", "c", "a"])];
        let p = vec![pos(&["a"])];
        assert_eq!(mrr(&r, &p, 2).unwrap(), 0.0);
        assert!((mrr(&r, &p, 3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ndcg_ideal_ranking_is_one() {
        let r = vec![ranking(&["a", "b"])];
        let g = vec![BTreeMap::from([("a".to_string(), 1.0)])];
        assert!((ndcg(&r, &g, 10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ndcg_single_relevant_at_rank_two() {
        let r = vec![ranking(&["b", "a"])];
        let g = vec![BTreeMap::from([("a".to_string(), 1.0)])];
        let expect = 1.0 / 3.0f64.log2();
        let got = ndcg(&r, &g, 10).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn ndcg_empty_ranking_and_zero_gains_are_zero() {
        let r = vec![ranking(&[])];
        let g = vec![BTreeMap::from([("a".to_string(), 1.0)])];
        assert_eq!(ndcg(&r, &g, 10).unwrap(), 0.0);
        let g0 = vec![BTreeMap::new()];
        assert_eq!(ndcg(&r, &g0, 10).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_invariant_under_equal_gain_permutation() {
        let g = vec![BTreeMap::from([
            ("a".to_string(), 1.0),
            ("b".to_string(), 1.0),
        ])];
        let r1 = vec![ranking(&["a", "b", "c"])];
        let r2 = vec![ranking(&["b", "a", "c"])];
        assert_eq!(ndcg(&r1, &g, 10).unwrap(), ndcg(&r2, &g, 10).unwrap());
    }

    #[test]
    fn compute_metrics_bundles_everything() {
        let ids = vec!["q0".to_string(), "q1".to_string()];
        let r = vec![ranking(&["a", "b"]), ranking(&["b", "a"])];
        let p = vec![pos(&["a"]), pos(&["a"])];
        let m = compute_metrics(&ids, &r, &p, &[1, 2], 10).unwrap();
        assert_eq!(m.recall_at[&1], 0.5);
        assert_eq!(m.recall_at[&2], 1.0);
        assert_eq!(m.mrr, 0.75);
        assert_eq!(m.per_query[0].first_positive_rank, Some(1));
        assert_eq!(m.per_query[1].first_positive_rank, Some(2));
        let csv = metrics_to_csv(&m);
        assert!(csv.contains("recall_at_1,0.500000"));
        assert!(csv.lines().count() >= 4);
    }
}
