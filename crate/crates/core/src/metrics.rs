//! Evaluation metrics: joint goal accuracy, binary P/R/F1, MRR@k and Recall@k.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{parse_jsonl, DialogueState};
use crate::error::{Error, Result};
use crate::serializer::parse_state;

fn normalize(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn normalized(state: &DialogueState) -> Vec<(String, String, String)> {
    state
        .iter()
        .map(|(d, s, v)| (d.to_string(), s.to_string(), normalize(v)))
        .collect()
}

/// Fraction of `(predicted, gold)` pairs whose states agree on every triple. Values are
/// compared case-insensitively after collapsing whitespace.
pub fn joint_goal_accuracy(pairs: &[(DialogueState, DialogueState)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Metric("joint goal accuracy of an empty prediction set".into()));
    }
    let correct = pairs
        .iter()
        .filter(|(p, g)| normalized(p) == normalized(g))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 of the positive class. Zero denominators give 0.
pub fn detection_prf(pred: &[bool], gold: &[bool]) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p && **g).count();
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p && !**g).count();
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| !**p && **g).count();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf { precision, recall, f1 })
}

/// 1-based rank of `gold` within the first `k` entries.
fn rank_within<S: AsRef<str>>(ranked: &[S], gold: &str, k: usize) -> Option<usize> {
    ranked.iter().take(k).position(|id| id.as_ref() == gold).map(|p| p + 1)
}

pub fn reciprocal_rank_at_k<S: AsRef<str>>(ranked: &[S], gold: &str, k: usize) -> f64 {
    rank_within(ranked, gold, k).map_or(0.0, |r| 1.0 / r as f64)
}

pub fn hit_at_k<S: AsRef<str>>(ranked: &[S], gold: &str, k: usize) -> f64 {
    if rank_within(ranked, gold, k).is_some() {
        1.0
    } else {
        0.0
    }
}

fn mean_over<S: AsRef<str>>(
    queries: &[(Vec<S>, String)],
    k: usize,
    f: impl Fn(&[S], &str, usize) -> f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Metric("k must be at least 1".into()));
    }
    if queries.is_empty() {
        return Err(Error::Metric("no queries".into()));
    }
    Ok(queries.iter().map(|(r, g)| f(r, g, k)).sum::<f64>() / queries.len() as f64)
}

/// Mean reciprocal rank with ranks past `k` counted as 0, over `(ranking, gold)` queries.
pub fn mrr_at_k<S: AsRef<str>>(queries: &[(Vec<S>, String)], k: usize) -> Result<f64> {
    mean_over(queries, k, reciprocal_rank_at_k)
}

/// Fraction of queries whose gold id is among the first `k`.
pub fn recall_at_k<S: AsRef<str>>(queries: &[(Vec<S>, String)], k: usize) -> Result<f64> {
    mean_over(queries, k, hit_at_k)
}

/// A state given either as triples or in linearized text form.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateField {
    Triples(DialogueState),
    Text(String),
}

impl StateField {
    pub fn resolve(self) -> Result<DialogueState> {
        match self {
            StateField::Triples(s) => Ok(s),
            StateField::Text(t) => parse_state(&t),
        }
    }
}

/// Reads evaluation records from JSONL. Keys may sit at the top level or under
/// `meta`, so serialized training examples can be used directly as gold.
pub fn parse_records<T: DeserializeOwned>(what: &'static str, bytes: &[u8]) -> Result<Vec<T>> {
    let values: Vec<Value> = parse_jsonl(what, bytes)?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            if let Some(Value::Object(meta)) = v.get("meta").cloned() {
                if let Value::Object(top) = &mut v {
                    for (k, mv) in meta {
                        top.entry(k).or_insert(mv);
                    }
                }
            }
            serde_json::from_value(v).map_err(|e| Error::Metric(format!("{what}: record {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct DstRecord {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(alias = "target")]
    pub state: StateField,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LabelField {
    Bool(bool),
    Int(u8),
}

impl LabelField {
    fn as_bool(&self) -> bool {
        match self {
            LabelField::Bool(b) => *b,
            LabelField::Int(i) => *i != 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelRecord {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(alias = "target")]
    pub label: LabelField,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RankingRecord {
    pub dialogue_id: String,
    pub turn: usize,
    pub ranking: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoldSnippetRecord {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(alias = "positive")]
    pub knowledge: String,
}

/// Pairs predictions with gold records by `(dialogue id, turn)`; both sides must cover the
/// same keys exactly once.
pub fn align<P, G, A, B>(
    pred: Vec<P>,
    gold: Vec<G>,
    pred_key: impl Fn(&P) -> (String, usize),
    gold_key: impl Fn(&G) -> (String, usize),
    pred_val: impl Fn(P) -> Result<A>,
    gold_val: impl Fn(G) -> Result<B>,
) -> Result<Vec<(A, B)>> {
    let mut by_key: BTreeMap<(String, usize), P> = BTreeMap::new();
    for p in pred {
        let k = pred_key(&p);
        if by_key.insert(k.clone(), p).is_some() {
            return Err(Error::Metric(format!("duplicate prediction for {} turn {}", k.0, k.1)));
        }
    }
    let total_pred = by_key.len();
    let mut out = Vec::with_capacity(gold.len());
    for g in gold {
        let k = gold_key(&g);
        let p = by_key
            .remove(&k)
            .ok_or_else(|| Error::Metric(format!("no prediction for {} turn {}", k.0, k.1)))?;
        out.push((pred_val(p)?, gold_val(g)?));
    }
    if !by_key.is_empty() {
        let (k, _) = by_key.iter().next().expect("non-empty");
        return Err(Error::Metric(format!(
            "{} of {total_pred} predictions have no gold record, e.g. {} turn {}",
            by_key.len(),
            k.0,
            k.1
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EvalReport {
    Dst { joint_goal_accuracy: f64, turns: usize },
    Detection { precision: f64, recall: f64, f1: f64, turns: usize },
    Selection { mrr_at_5: f64, recall_at_1: f64, recall_at_5: f64, queries: usize },
}

pub fn evaluate_dst(pred: Vec<DstRecord>, gold: Vec<DstRecord>) -> Result<EvalReport> {
    let key = |r: &DstRecord| (r.dialogue_id.clone(), r.turn);
    let pairs = align(pred, gold, key, key, |r| r.state.resolve(), |r| r.state.resolve())?;
    Ok(EvalReport::Dst {
        joint_goal_accuracy: joint_goal_accuracy(&pairs)?,
        turns: pairs.len(),
    })
}

pub fn evaluate_detection(pred: Vec<LabelRecord>, gold: Vec<LabelRecord>) -> Result<EvalReport> {
    let key = |r: &LabelRecord| (r.dialogue_id.clone(), r.turn);
    let pairs = align(pred, gold, key, key, |r| Ok(r.label.as_bool()), |r| Ok(r.label.as_bool()))?;
    let (p, g): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
    let prf = detection_prf(&p, &g)?;
    Ok(EvalReport::Detection {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        turns: p.len(),
    })
}

pub fn evaluate_selection(pred: Vec<RankingRecord>, gold: Vec<GoldSnippetRecord>) -> Result<EvalReport> {
    let queries = align(
        pred,
        gold,
        |r| (r.dialogue_id.clone(), r.turn),
        |r| (r.dialogue_id.clone(), r.turn),
        |r| Ok(r.ranking),
        |r| Ok(r.knowledge),
    )?;
    Ok(EvalReport::Selection {
        mrr_at_5: mrr_at_k(&queries, 5)?,
        recall_at_1: recall_at_k(&queries, 1)?,
        recall_at_5: recall_at_k(&queries, 5)?,
        queries: queries.len(),
    })
}
