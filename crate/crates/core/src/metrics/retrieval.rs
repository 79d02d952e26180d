//! Precision, recall and nDCG at k with binary relevance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::qa::normalize_answer;
use crate::chunker::SerializedChunk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgmentMethod {
    AnswerSpanContainment,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub query_id: String,
    pub relevant_chunk_ids: BTreeSet<String>,
    pub method: JudgmentMethod,
}

impl RelevanceJudgment {
    /// Chunks whose serialized text contains any of the normalized spans.
    pub fn from_answer_spans(query_id: &str, spans: &[String], chunks: &[SerializedChunk]) -> Self {
        let spans: Vec<String> = spans.iter().map(|s| normalize_answer(s)).filter(|s| !s.is_empty()).collect();
        let relevant_chunk_ids = chunks
            .iter()
            .filter(|c| {
                let text = normalize_answer(&c.text);
                spans.iter().any(|s| text.contains(s.as_str()))
            })
            .map(|c| c.chunk_id.clone())
            .collect();
        RelevanceJudgment {
            query_id: query_id.to_string(),
            relevant_chunk_ids,
            method: JudgmentMethod::AnswerSpanContainment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryScores {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    /// Queries that entered the macro average.
    pub evaluated: usize,
    /// Queries with no relevant chunk, left out of the averages.
    pub skipped_empty: Vec<String>,
    pub per_query: BTreeMap<String, QueryScores>,
}

/// Scores of one ranked list.
pub fn query_scores(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> QueryScores {
    let top = &ranking[..ranking.len().min(k)];
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (i, id) in top.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..relevant.len().min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    QueryScores {
        precision: hits as f64 / k as f64,
        recall: hits as f64 / relevant.len() as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
    }
}

/// Macro-averaged P@k, R@k and nDCG@k over the judged queries.
///
/// A judged query without a ranking counts as an empty ranking. `k` below 1
/// is treated as 1.
pub fn retrieval_metrics(
    rankings: &BTreeMap<String, Vec<String>>,
    judgments: &[RelevanceJudgment],
    k: usize,
) -> RetrievalReport {
    let k = k.max(1);
    let mut per_query = BTreeMap::new();
    let mut skipped_empty = Vec::new();
    let empty = Vec::new();
    for j in judgments {
        if j.relevant_chunk_ids.is_empty() {
            skipped_empty.push(j.query_id.clone());
            continue;
        }
        let ranking = rankings.get(&j.query_id).unwrap_or(&empty);
        per_query.insert(j.query_id.clone(), query_scores(ranking, &j.relevant_chunk_ids, k));
    }
    let n = per_query.len();
    let mean = |f: fn(&QueryScores) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_query.values().map(f).sum::<f64>() / n as f64
        }
    };
    RetrievalReport {
        k,
        precision: mean(|q| q.precision),
        recall: mean(|q| q.recall),
        ndcg: mean(|q| q.ndcg),
        evaluated: n,
        skipped_empty,
        per_query,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn list(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_cases() {
        let q = query_scores(&list(&["a"]), &set(&["a"]), 1);
        assert_eq!((q.precision, q.recall, q.ndcg), (1.0, 1.0, 1.0));
        let q = query_scores(&list(&["b", "a"]), &set(&["a"]), 2);
        assert!((q.ndcg - 0.6309).abs() < 1e-4);
        assert!((q.ndcg - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(q.precision, 0.5);
        let q = query_scores(&list(&["x", "y"]), &set(&["a"]), 2);
        assert_eq!((q.precision, q.recall, q.ndcg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_judgments_skipped() {
        let judgments = vec![
            RelevanceJudgment {
                query_id: "q1".into(),
                relevant_chunk_ids: set(&["a"]),
                method: JudgmentMethod::Explicit,
            },
            RelevanceJudgment {
                query_id: "q2".into(),
                relevant_chunk_ids: set(&[]),
                method: JudgmentMethod::Explicit,
            },
            RelevanceJudgment {
                query_id: "q3".into(),
                relevant_chunk_ids: set(&["c"]),
                method: JudgmentMethod::Explicit,
            },
        ];
        let mut rankings = BTreeMap::new();
        rankings.insert("q1".to_string(), list(&["a", "b"]));
        let r = retrieval_metrics(&rankings, &judgments, 2);
        assert_eq!(r.evaluated, 2);
        assert_eq!(r.skipped_empty, vec!["q2".to_string()]);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.precision, 0.25);
    }

    #[test]
    fn span_containment() {
        let chunks = vec![
            SerializedChunk {
                chunk_id: "c0".into(),
                text: "# Intro\nThe Answer, is here.".into(),
                token_count: 6,
            },
            SerializedChunk {
                chunk_id: "c1".into(),
                text: "nothing".into(),
                token_count: 1,
            },
        ];
        let j = RelevanceJudgment::from_answer_spans("q", &["answer is".to_string()], &chunks);
        assert_eq!(j.relevant_chunk_ids, set(&["c0"]));
        assert_eq!(j.method, JudgmentMethod::AnswerSpanContainment);
    }

    proptest! {
        #[test]
        fn ndcg_bounds(perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(), n_rel in 1usize..8, k in 1usize..10) {
            let ranking: Vec<String> = perm.iter().map(|i| format!("c{i}")).collect();
            let relevant: BTreeSet<String> = (0..n_rel).map(|i| format!("c{i}")).collect();
            let q = query_scores(&ranking, &relevant, k);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&q.ndcg));
            // ideal iff the top min(k, |rel|) slots are all relevant
            let ideal = ranking.iter().take(k.min(n_rel)).all(|c| relevant.contains(c));
            prop_assert_eq!((q.ndcg - 1.0).abs() < 1e-12, ideal);
        }
    }
}
