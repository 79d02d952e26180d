//! Evaluation metrics for hierarchy recovery, retrieval and answers.

pub mod hierarchy;
pub mod qa;
pub mod retrieval;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use hierarchy::{parent_counts, parent_f1, steds, tree_edit_distance, EdgeSubsetTag, OrderedTree};
pub use qa::{anls, levenshtein, normalize_answer, rouge_l, DEFAULT_ANLS_THRESHOLD};
pub use retrieval::{
    query_scores, retrieval_metrics, JudgmentMethod, QueryScores, RelevanceJudgment, RetrievalReport,
};

/// Convention line written into every report that carries STEDS.
pub const STEDS_CONVENTION: &str =
    "steds = 1 - TED/(|pred|+|gold|); ordered trees incl. ROOT, children by block id, unit costs, nodes match on block id";

/// One metric with its macro average and per-item values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(rename = "macro")]
    pub macro_avg: f64,
    pub per_query: BTreeMap<String, f64>,
}

impl MetricReport {
    /// Builds a report whose macro value is the mean of `per_query`.
    pub fn from_items(metric: &str, k: Option<usize>, per_query: BTreeMap<String, f64>) -> Self {
        let macro_avg = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        MetricReport {
            metric: metric.to_string(),
            k,
            macro_avg,
            per_query,
        }
    }
}

/// Plain-text table of `(name, value)` rows.
pub fn summary_table(rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  value\n", "metric");
    for (name, v) in rows {
        out.push_str(&format!("{name:<width$}  {v:.4}\n"));
    }
    out
}
