//! Multi-scale negative sampling for knowledge selection, with an Okapi BM25 ranker for
//! the semantic scale.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, KnowledgeBase, KnowledgeSnippet};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::text::contains_word;

pub const STAGE: &str = "negatives";

/// Lowercase, split on anything that is not alphanumeric, drop empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Term statistics over the knowledge snippets; documents are `question + " " + answer`.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    tf: Vec<HashMap<String, u32>>,
    doc_len: Vec<usize>,
    avgdl: f64,
    df: HashMap<String, usize>,
    params: Bm25Params,
}

pub fn build_index(snippets: &[KnowledgeSnippet], params: Bm25Params) -> Result<Bm25Index> {
    if snippets.is_empty() {
        return Err(Error::Knowledge("cannot index an empty snippet list".into()));
    }
    let mut tf = Vec::with_capacity(snippets.len());
    let mut doc_len = Vec::with_capacity(snippets.len());
    let mut df: HashMap<String, usize> = HashMap::new();
    for s in snippets {
        let toks = tokenize(&s.text());
        doc_len.push(toks.len());
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in toks {
            *counts.entry(t).or_default() += 1;
        }
        for term in counts.keys() {
            *df.entry(term.clone()).or_default() += 1;
        }
        tf.push(counts);
    }
    let avgdl = doc_len.iter().sum::<usize>() as f64 / snippets.len() as f64;
    let ids: Vec<String> = snippets.iter().map(|s| s.id.clone()).collect();
    let positions = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(Bm25Index {
        ids,
        positions,
        tf,
        doc_len,
        avgdl,
        df,
        params,
    })
}

impl Bm25Index {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_len[doc]
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn tf(&self, doc: usize, term: &str) -> u32 {
        self.tf[doc].get(term).copied().unwrap_or(0)
    }

    pub fn id(&self, doc: usize) -> &str {
        &self.ids[doc]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of document `doc` for already tokenized query terms. Repeated query terms
    /// count once per occurrence.
    pub fn score_tokens(&self, query: &[String], doc: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let avgdl = if self.avgdl > 0.0 { self.avgdl } else { 1.0 };
        let norm = k1 * (1.0 - b + b * self.doc_len[doc] as f64 / avgdl);
        query
            .iter()
            .map(|term| {
                let f = self.tf(doc, term) as f64;
                if f == 0.0 {
                    0.0
                } else {
                    self.idf(term) * f * (k1 + 1.0) / (f + norm)
                }
            })
            .sum()
    }

    /// Every document ranked by descending score; ties keep index order.
    pub fn rank(&self, query: &str) -> Vec<(usize, f64)> {
        let q = tokenize(query);
        let mut scored: Vec<(usize, f64)> = (0..self.len()).map(|d| (d, self.score_tokens(&q, d))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
    }
}

pub fn bm25_score(index: &Bm25Index, query: &str, snippet_id: &str) -> Result<f64> {
    let doc = index
        .position(snippet_id)
        .ok_or_else(|| Error::UnknownSnippet(snippet_id.to_string()))?;
    Ok(index.score_tokens(&tokenize(query), doc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Random,
    InDomain,
    InEntity,
    CrossEntity,
    InSemantics,
}

impl Scale {
    pub const ALL: [Scale; 5] = [
        Scale::Random,
        Scale::InDomain,
        Scale::InEntity,
        Scale::CrossEntity,
        Scale::InSemantics,
    ];

    /// Scales tried, in order, when this one has no candidate left.
    fn fallbacks(self) -> &'static [Scale] {
        match self {
            Scale::Random => &[],
            Scale::InDomain => &[Scale::Random],
            Scale::InEntity => &[Scale::InDomain, Scale::Random],
            Scale::CrossEntity | Scale::InSemantics => &[Scale::InEntity, Scale::InDomain, Scale::Random],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Random => "random",
            Scale::InDomain => "in_domain",
            Scale::InEntity => "in_entity",
            Scale::CrossEntity => "cross_entity",
            Scale::InSemantics => "in_semantics",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negative {
    pub id: String,
    pub scale: Scale,
    /// Scale whose predicate the snippet actually satisfies when `scale` had no candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Scale>,
}

impl Negative {
    pub fn effective_scale(&self) -> Scale {
        self.fallback.unwrap_or(self.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledNegatives {
    pub positive: String,
    pub negatives: Vec<Negative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegativeConfig {
    pub per_scale: usize,
    pub scales: Vec<Scale>,
    pub top_m: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig {
            per_scale: 1,
            scales: Scale::ALL.to_vec(),
            top_m: 10,
            k1: 1.2,
            b: 0.75,
        }
    }
}

impl NegativeConfig {
    pub fn params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_m == 0 {
            return Err(Error::invalid("negative config", "top_m must be at least 1"));
        }
        if !(self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b)) {
            return Err(Error::invalid("negative config", "k1 must be >= 0 and b in [0, 1]"));
        }
        Ok(())
    }
}

/// Shared read-only state for sampling over one knowledge base.
pub struct NegativeSampler<'a> {
    kb: &'a KnowledgeBase,
    index: Bm25Index,
    /// Distinct entities with a nameable surface form, with their snippet positions.
    entities: Vec<(String, String, String, Vec<usize>)>,
    cfg: NegativeConfig,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(kb: &'a KnowledgeBase, cfg: NegativeConfig) -> Result<Self> {
        cfg.validate()?;
        if kb.len() < 2 {
            return Err(Error::Knowledge(format!(
                "negative sampling needs at least 2 snippets, got {}",
                kb.len()
            )));
        }
        let index = build_index(kb.snippets(), cfg.params())?;
        let mut entities: Vec<(String, String, String, Vec<usize>)> = Vec::new();
        for (i, s) in kb.snippets().iter().enumerate() {
            match entities
                .iter_mut()
                .find(|(d, e, _, _)| *d == s.domain && *e == s.entity_id)
            {
                Some(entry) => entry.3.push(i),
                None => entities.push((s.domain.clone(), s.entity_id.clone(), s.entity_name.clone(), vec![i])),
            }
        }
        entities.retain(|(_, _, name, _)| name.chars().any(char::is_alphabetic));
        Ok(NegativeSampler { kb, index, entities, cfg })
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }

    pub fn config(&self) -> &NegativeConfig {
        &self.cfg
    }

    /// Top-M documents for the positive's text, excluding the positive and zero scores.
    pub fn semantic_pool(&self, positive: usize) -> Vec<usize> {
        let query = self.kb.snippets()[positive].text();
        self.index
            .rank(&query)
            .into_iter()
            .filter(|&(d, s)| d != positive && s > 0.0)
            .take(self.cfg.top_m)
            .map(|(d, _)| d)
            .collect()
    }

    /// Snippets of entities named in `context` other than the positive's entity.
    pub fn mentioned_pool(&self, positive: usize, context: &str) -> Vec<usize> {
        let pos = &self.kb.snippets()[positive];
        self.entities
            .iter()
            .filter(|(d, e, name, _)| !(*d == pos.domain && *e == pos.entity_id) && contains_word(context, name))
            .flat_map(|(_, _, _, docs)| docs.iter().copied())
            .collect()
    }

    fn pool(&self, scale: Scale, positive: usize, context: &str) -> Vec<usize> {
        let snippets = self.kb.snippets();
        let pos = &snippets[positive];
        let all = 0..snippets.len();
        match scale {
            Scale::Random => all.filter(|&i| i != positive).collect(),
            Scale::InDomain => all
                .filter(|&i| i != positive && snippets[i].domain == pos.domain)
                .collect(),
            Scale::InEntity => all
                .filter(|&i| i != positive && snippets[i].same_entity(pos))
                .collect(),
            Scale::CrossEntity => self.mentioned_pool(positive, context),
            Scale::InSemantics => self.semantic_pool(positive),
        }
    }

    /// Draws `per_scale` negatives for each configured scale. Within one scale, snippets
    /// are drawn without replacement; once a scale's candidates run out the remaining
    /// draws use its fallback chain.
    pub fn sample<R: Rng + ?Sized>(&self, positive_id: &str, context: &str, rng: &mut R) -> Result<ScaledNegatives> {
        let positive = self
            .kb
            .position(positive_id)
            .ok_or_else(|| Error::UnknownSnippet(positive_id.to_string()))?;
        let mut negatives = Vec::new();
        for &scale in &self.cfg.scales {
            let mut pools: Vec<(Scale, Vec<usize>)> = std::iter::once(scale)
                .chain(scale.fallbacks().iter().copied())
                .map(|s| (s, self.pool(s, positive, context)))
                .collect();
            let mut taken: BTreeSet<usize> = BTreeSet::new();
            for _ in 0..self.cfg.per_scale {
                let mut picked = None;
                for (s, pool) in pools.iter_mut() {
                    pool.retain(|d| !taken.contains(d));
                    if let Some(&d) = pool.choose(rng) {
                        picked = Some((*s, d));
                        break;
                    }
                }
                let Some((used, doc)) = picked else { break };
                taken.insert(doc);
                negatives.push(Negative {
                    id: self.kb.snippets()[doc].id.clone(),
                    scale,
                    fallback: (used != scale).then_some(used),
                });
            }
        }
        Ok(ScaledNegatives {
            positive: positive_id.to_string(),
            negatives,
        })
    }

    /// True when `negative` satisfies the predicate of its effective scale.
    pub fn check(&self, positive_id: &str, context: &str, negative: &Negative) -> bool {
        let (Some(pos), Some(neg)) = (self.kb.position(positive_id), self.kb.position(&negative.id)) else {
            return false;
        };
        if pos == neg {
            return false;
        }
        let p = &self.kb.snippets()[pos];
        let n = &self.kb.snippets()[neg];
        match negative.effective_scale() {
            Scale::Random => true,
            Scale::InDomain => n.domain == p.domain,
            Scale::InEntity => n.same_entity(p),
            Scale::CrossEntity => !n.same_entity(p) && contains_word(context, &n.entity_name),
            Scale::InSemantics => self.semantic_pool(pos).contains(&neg),
        }
    }
}

/// One record per knowledge-grounded user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeRecord {
    pub dialogue_id: String,
    /// 1-based position of the knowledge-seeking user turn.
    pub turn: usize,
    pub positive: String,
    pub negatives: Vec<Negative>,
}

/// Text of turns `1..=t` joined by spaces.
pub fn context_text(dialogue: &Dialogue, t: usize) -> String {
    dialogue.turns[..t]
        .iter()
        .map(|turn| turn.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Samples negatives for every grounded turn in the corpus, in corpus order.
pub fn sample_corpus_negatives(
    corpus: &[Dialogue],
    sampler: &NegativeSampler<'_>,
    stream: &RngStream,
) -> Result<Vec<NegativeRecord>> {
    let jobs: Vec<(&Dialogue, usize)> = corpus
        .iter()
        .flat_map(|d| {
            d.turns
                .iter()
                .enumerate()
                .filter(|(_, t)| t.knowledge_ref.is_some())
                .map(move |(i, _)| (d, i + 1))
        })
        .collect();
    jobs.into_par_iter()
        .map(|(d, t)| {
            let positive = d.turns[t - 1].knowledge_ref.as_deref().expect("filtered");
            let mut rng = stream.stream(STAGE, &format!("{}#{t}", d.id));
            let sampled = sampler
                .sample(positive, &context_text(d, t), &mut rng)
                .map_err(|e| match e {
                    Error::UnknownSnippet(id) => {
                        Error::validation(&d.id, Some(t), format!("knowledge_ref {id:?} is not in the knowledge base"))
                    }
                    other => other,
                })?;
            Ok(NegativeRecord {
                dialogue_id: d.id.clone(),
                turn: t,
                positive: sampled.positive,
                negatives: sampled.negatives,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_jsonl, write_jsonl};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snippet(id: &str, domain: &str, entity: &str, name: &str, q: &str, a: &str) -> KnowledgeSnippet {
        KnowledgeSnippet {
            id: id.into(),
            domain: domain.into(),
            entity_id: entity.into(),
            entity_name: name.into(),
            question: q.into(),
            answer: a.into(),
        }
    }

    #[test]
    fn tokenizer_rule() {
        assert_eq!(tokenize("Wi-Fi"), vec!["wi", "fi"]);
        assert_eq!(tokenize("  Is there free PARKING?? "), vec!["is", "there", "free", "parking"]);
    }

    #[test]
    fn single_document_stats() {
        let idx = build_index(&[snippet("a", "hotel", "1", "X", "cheap", "hotel")], Bm25Params::default()).unwrap();
        assert_eq!(idx.avgdl(), 2.0);
        assert_eq!(idx.df("cheap"), 1);
        assert!(build_index(&[], Bm25Params::default()).is_err());
    }

    #[test]
    fn closed_form_single_doc() {
        // N=1, df=1, tf=1, dl=avgdl: each term scores ln(1 + 0.5/1.5) * (k1+1)/(1+k1)
        let idx = build_index(&[snippet("a", "hotel", "1", "X", "cheap", "hotel")], Bm25Params::default()).unwrap();
        let expected = 2.0 * (1.0f64 + 0.5 / 1.5).ln();
        assert!((bm25_score(&idx, "cheap hotel", "a").unwrap() - expected).abs() < 1e-12);
        assert_eq!(bm25_score(&idx, "museum", "a").unwrap(), 0.0);
        assert!(matches!(bm25_score(&idx, "x", "zz"), Err(Error::UnknownSnippet(_))));
    }

    fn kb() -> KnowledgeBase {
        KnowledgeBase::new(vec![
            snippet("h1a", "hotel", "1", "Acorn Lodge", "Is there parking?", "Yes, free parking."),
            snippet("h1b", "hotel", "1", "Acorn Lodge", "Are pets allowed?", "No pets."),
            snippet("h2a", "hotel", "2", "Bridge House", "Is there wifi?", "Free wifi in rooms."),
            snippet("r1a", "restaurant", "3", "Pizza Hut", "Do they deliver?", "Yes, they deliver."),
        ])
        .unwrap()
    }

    #[test]
    fn forced_sibling_and_fallback() {
        let kb = kb();
        let cfg = NegativeConfig {
            scales: vec![Scale::InEntity, Scale::CrossEntity],
            ..NegativeConfig::default()
        };
        let sampler = NegativeSampler::new(&kb, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sampler.sample("h1a", "Do you have parking at Acorn Lodge?", &mut rng).unwrap();
        assert_eq!(out.negatives[0].id, "h1b");
        assert_eq!(out.negatives[0].fallback, None);
        // Only the positive's own entity is mentioned, so cross_entity falls back to in_entity.
        assert_eq!(out.negatives[1].scale, Scale::CrossEntity);
        assert_eq!(out.negatives[1].fallback, Some(Scale::InEntity));

        let out = sampler
            .sample("h1a", "I liked Bridge House, what about Acorn Lodge parking?", &mut rng)
            .unwrap();
        assert_eq!(out.negatives[1].id, "h2a");
        assert_eq!(out.negatives[1].fallback, None);
    }

    #[test]
    fn tiny_base_rejected() {
        let one = KnowledgeBase::new(vec![snippet("a", "hotel", "1", "X", "q", "a")]).unwrap();
        assert!(matches!(NegativeSampler::new(&one, NegativeConfig::default()), Err(Error::Knowledge(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![NegativeRecord {
            dialogue_id: "d".into(),
            turn: 3,
            positive: "a".into(),
            negatives: vec![Negative { id: "b".into(), scale: Scale::InSemantics, fallback: Some(Scale::Random) }],
        }];
        let bytes = write_jsonl(&recs);
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "{\"dialogue_id\":\"d\",\"turn\":3,\"positive\":\"a\",\"negatives\":[{\"id\":\"b\",\"scale\":\"in_semantics\",\"fallback\":\"random\"}]}\n"
        );
        assert_eq!(parse_jsonl::<NegativeRecord>("negatives", &bytes).unwrap(), recs);
        let err = parse_jsonl::<NegativeRecord>("negatives", b"\n{bad").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 2, .. }), "{err:?}");
    }
}
