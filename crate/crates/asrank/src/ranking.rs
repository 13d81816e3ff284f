//! Candidate ranking and exact MAP/MRR evaluation.
//!
//! A trained model orders a question's candidates either by ascending
//! squared L2 distance between embeddings or by descending siamese match
//! probability. Both metrics depend only on the induced order, so any
//! strictly monotone transform of the key leaves them unchanged.

use serde::Serialize;

use crate::corpus::QuestionGroup;
use crate::encoder::{encode, Encoder};
use crate::error::{Error, Result};
use crate::objectives::{siamese_score, sq_l2, SiameseHead};

/// Which key orders the candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode {
    /// Ascending squared L2 distance to the question embedding.
    Distance,
    /// Descending siamese head probability.
    Score,
}

impl std::fmt::Display for RankMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankMode::Distance => "distance",
            RankMode::Score => "score",
        })
    }
}

impl std::str::FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<RankMode> {
        match s {
            "distance" => Ok(RankMode::Distance),
            "score" => Ok(RankMode::Score),
            other => Err(Error::Config(format!(
                "unknown rank mode {other:?} (expected distance or score)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedCandidate {
    pub text: String,
    pub label: u8,
    /// The ordering key: squared distance or match probability.
    pub key: f64,
    /// Position in the input group, which also breaks key ties.
    pub original_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub question: String,
    pub mode: RankMode,
    pub candidates: Vec<RankedCandidate>,
}

impl RankedList {
    pub fn labels(&self) -> Vec<u8> {
        self.candidates.iter().map(|c| c.label).collect()
    }
}

/// Candidate order induced by finite keys: ascending for distances,
/// descending for scores, equal keys kept in input order.
pub(crate) fn rank_by_keys(keys: &[f64], mode: RankMode) -> Result<Vec<usize>> {
    if let Some(bad) = keys.iter().find(|k| !k.is_finite()) {
        return Err(Error::NonFinite(format!("ranking key {bad}")));
    }
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    match mode {
        RankMode::Distance => idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b])),
        RankMode::Score => idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a])),
    }
    Ok(idx)
}

/// Orders one question's candidates under the model. Score mode needs the
/// siamese head that was trained with the encoder.
pub fn rank_candidates(
    group: &QuestionGroup,
    encoder: &Encoder,
    head: Option<&SiameseHead>,
    mode: RankMode,
) -> Result<RankedList> {
    if group.candidates.is_empty() {
        return Err(Error::Data(format!(
            "question {:?} has no candidates to rank",
            group.question
        )));
    }
    let q = encode(encoder, &group.question)?;
    let mut keys = Vec::with_capacity(group.candidates.len());
    match mode {
        RankMode::Distance => {
            for c in &group.candidates {
                let e = encode(encoder, &c.text)?;
                keys.push(sq_l2(&q, &e)?);
            }
        }
        RankMode::Score => {
            let head = head.ok_or_else(|| {
                Error::Config("score ranking requires a siamese head; this model has none".into())
            })?;
            for c in &group.candidates {
                let e = encode(encoder, &c.text)?;
                keys.push(f64::from(siamese_score(head, &q, &e)?));
            }
        }
    }
    let order = rank_by_keys(&keys, mode)?;
    let candidates = order
        .into_iter()
        .map(|i| RankedCandidate {
            text: group.candidates[i].text.clone(),
            label: group.candidates[i].label,
            key: keys[i],
            original_index: i,
        })
        .collect();
    Ok(RankedList {
        question: group.question.clone(),
        mode,
        candidates,
    })
}

/// 1 / rank of the first relevant item (ranks start at 1).
pub fn reciprocal_rank(labels: &[u8]) -> Result<f64> {
    match labels.iter().position(|&l| l == 1) {
        Some(i) => Ok(1.0 / (i + 1) as f64),
        None => Err(Error::Data("reciprocal rank of a list with no relevant item".into())),
    }
}

/// Mean over relevant positions k of precision@k, divided by the total
/// number of relevant items.
pub fn average_precision(labels: &[u8]) -> Result<f64> {
    let n_rel = labels.iter().filter(|&&l| l == 1).count();
    if n_rel == 0 {
        return Err(Error::Data("average precision of a list with no relevant item".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0f64;
    for (k, &l) in labels.iter().enumerate() {
        if l == 1 {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(total / n_rel as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuestionMetrics {
    pub question: String,
    pub ap: f64,
    pub rr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub map: f64,
    pub mrr: f64,
    pub per_question: Vec<QuestionMetrics>,
}

impl MetricsReport {
    /// Human-readable summary with one row per question.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("questions\t{}\n", self.n));
        out.push_str(&format!("MAP\t{:.4}\n", self.map));
        out.push_str(&format!("MRR\t{:.4}\n", self.mrr));
        out.push_str("question\tAP\tRR\n");
        for q in &self.per_question {
            out.push_str(&format!("{}\t{:.4}\t{:.4}\n", q.question, q.ap, q.rr));
        }
        out
    }

    /// `metric \t split \t value` lines for downstream tooling.
    pub fn machine_lines(&self, split: &str) -> String {
        format!("map\t{split}\t{:.4}\nmrr\t{split}\t{:.4}\n", self.map, self.mrr)
    }
}

/// Aggregates already-ranked lists into MAP/MRR.
pub fn metrics_from_ranked(lists: &[RankedList]) -> Result<MetricsReport> {
    if lists.is_empty() {
        return Err(Error::Data("evaluation over zero questions".into()));
    }
    let mut per_question = Vec::with_capacity(lists.len());
    let mut ap_sum = 0.0f64;
    let mut rr_sum = 0.0f64;
    for list in lists {
        let labels = list.labels();
        let ap = average_precision(&labels).map_err(|_| {
            Error::Data(format!(
                "question {:?} has no relevant candidate; filter the dataset before evaluating",
                list.question
            ))
        })?;
        let rr = reciprocal_rank(&labels)?;
        ap_sum += ap;
        rr_sum += rr;
        per_question.push(QuestionMetrics {
            question: list.question.clone(),
            ap,
            rr,
        });
    }
    let n = lists.len();
    Ok(MetricsReport {
        n,
        map: ap_sum / n as f64,
        mrr: rr_sum / n as f64,
        per_question,
    })
}

/// Ranks every group and aggregates MAP/MRR. With `threads > 1` the
/// questions are ranked on a local thread pool; results are collected in
/// input order, so the report does not depend on scheduling.
pub fn evaluate(
    groups: &[QuestionGroup],
    encoder: &Encoder,
    head: Option<&SiameseHead>,
    mode: RankMode,
    threads: usize,
) -> Result<MetricsReport> {
    if threads == 0 {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    let lists: Vec<RankedList> = if threads == 1 || groups.len() <= 1 {
        groups
            .iter()
            .map(|grp| rank_candidates(grp, encoder, head, mode))
            .collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            groups
                .par_iter()
                .map(|grp| rank_candidates(grp, encoder, head, mode))
                .collect::<Result<_>>()
        })?
    };
    metrics_from_ranked(&lists)
}
