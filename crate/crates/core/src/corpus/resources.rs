//! Ontology, entity database and knowledge base.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::io::to_canonical_json;
use crate::error::{Error, Result};

/// `domain -> slot -> candidate values`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ontology {
    pub values: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl Ontology {
    pub fn values(&self, domain: &str, slot: &str) -> Option<&[String]> {
        self.values.get(domain)?.get(slot).map(Vec::as_slice)
    }

    pub fn has_slot(&self, domain: &str, slot: &str) -> bool {
        self.values(domain, slot).is_some()
    }

    pub fn slots(&self, domain: &str) -> impl Iterator<Item = &str> {
        self.values
            .get(domain)
            .into_iter()
            .flat_map(|slots| slots.keys().map(String::as_str))
    }

    pub fn insert(&mut self, domain: &str, slot: &str, values: &[&str]) {
        self.values
            .entry(domain.to_string())
            .or_default()
            .insert(slot.to_string(), values.iter().map(|v| v.to_string()).collect());
    }

    /// Values seen in the corpus' states and act slots, in first-seen order.
    pub fn observed(corpus: &[super::Dialogue]) -> Ontology {
        let mut out = Ontology::default();
        let mut add = |d: &str, s: &str, v: &str| {
            if v.trim().is_empty() || v == "?" {
                return;
            }
            let values = out.values.entry(d.to_string()).or_default().entry(s.to_string()).or_default();
            if !values.iter().any(|x| x == v) {
                values.push(v.to_string());
            }
        };
        for turn in corpus.iter().flat_map(|d| &d.turns) {
            for (d, s, v) in turn.state.iter().flat_map(|st| st.iter()) {
                add(d, s, v);
            }
            for slot in turn.acts.iter().flat_map(|a| &a.slots) {
                if let Some(v) = &slot.value {
                    add(&slot.domain, &slot.slot, v);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (domain, slots) in &self.values {
            for (slot, values) in slots {
                if values.is_empty() {
                    return Err(Error::invalid("ontology", format!("{domain}.{slot} has no values")));
                }
                let mut seen = BTreeSet::new();
                for v in values {
                    if v.trim().is_empty() {
                        return Err(Error::invalid("ontology", format!("{domain}.{slot} has an empty value")));
                    }
                    if !seen.insert(v) {
                        return Err(Error::invalid(
                            "ontology",
                            format!("{domain}.{slot} lists {v:?} twice"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn parse_ontology(bytes: &[u8]) -> Result<Ontology> {
    let ontology: Ontology =
        serde_json::from_slice(bytes).map_err(|e| Error::json("ontology", bytes, e))?;
    ontology.validate()?;
    Ok(ontology)
}

pub fn write_ontology(ontology: &Ontology) -> Vec<u8> {
    to_canonical_json(ontology)
}

/// A database record: an entity of a domain with its attribute values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub domain: String,
    pub name: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Database {
    pub entities: Vec<Entity>,
}

impl Database {
    pub fn in_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities.iter().filter(move |e| e.domain == domain)
    }

    /// Every attribute slot must exist in `ontology` for the entity's domain.
    pub fn check_against(&self, ontology: &Ontology) -> Result<()> {
        for e in &self.entities {
            for slot in e.attributes.keys() {
                if !ontology.has_slot(&e.domain, slot) {
                    return Err(Error::invalid(
                        "database",
                        format!("entity {:?} uses {}.{slot}, which the ontology lacks", e.name, e.domain),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_database(bytes: &[u8]) -> Result<Database> {
    let db: Database = serde_json::from_slice(bytes).map_err(|e| Error::json("database", bytes, e))?;
    for e in &db.entities {
        if e.domain.is_empty() || e.name.trim().is_empty() {
            return Err(Error::invalid("database", "entity with empty domain or name"));
        }
    }
    Ok(db)
}

pub fn write_database(db: &Database) -> Vec<u8> {
    to_canonical_json(db)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSnippet {
    pub id: String,
    pub domain: String,
    pub entity_id: String,
    pub entity_name: String,
    pub question: String,
    pub answer: String,
}

impl KnowledgeSnippet {
    /// Snippet text used for ranking and serialization: question, a space, answer.
    pub fn text(&self) -> String {
        format!("{} {}", self.question, self.answer)
    }

    pub fn same_entity(&self, other: &KnowledgeSnippet) -> bool {
        self.domain == other.domain && self.entity_id == other.entity_id
    }
}

/// Ordered knowledge base `K` with id lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    snippets: Vec<KnowledgeSnippet>,
    by_id: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn new(snippets: Vec<KnowledgeSnippet>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(snippets.len());
        for (i, s) in snippets.iter().enumerate() {
            if s.question.trim().is_empty() || s.answer.trim().is_empty() {
                return Err(Error::Knowledge(format!("snippet {:?} has an empty question or answer", s.id)));
            }
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(Error::Knowledge(format!("duplicate snippet id {:?}", s.id)));
            }
        }
        Ok(KnowledgeBase { snippets, by_id })
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn snippets(&self) -> &[KnowledgeSnippet] {
        &self.snippets
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeSnippet> {
        self.by_id.get(id).map(|&i| &self.snippets[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }
}

#[derive(Deserialize)]
struct DstcDoc {
    title: String,
    body: String,
}

#[derive(Deserialize)]
struct DstcEntity {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    docs: BTreeMap<String, DstcDoc>,
}

/// Keys like "2" and "10" sort numerically; anything else falls back to string order.
fn numeric_aware(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Snippet id assigned when flattening a `domain -> entity -> docs` knowledge file.
pub(crate) fn dstc_snippet_id(domain: &str, entity_id: &str, doc_id: &str) -> String {
    format!("{domain}:{entity_id}:{doc_id}")
}

fn flatten_dstc(bytes: &[u8]) -> Result<Vec<KnowledgeSnippet>> {
    let nested: BTreeMap<String, BTreeMap<String, DstcEntity>> =
        serde_json::from_slice(bytes).map_err(|e| Error::json("knowledge base", bytes, e))?;
    let mut out = Vec::new();
    for (domain, entities) in nested {
        let mut entities: Vec<_> = entities.into_iter().collect();
        entities.sort_by(|a, b| numeric_aware(&a.0, &b.0));
        for (entity_id, entity) in entities {
            let entity_name = entity.name.unwrap_or_else(|| entity_id.clone());
            let mut docs: Vec<_> = entity.docs.into_iter().collect();
            docs.sort_by(|a, b| numeric_aware(&a.0, &b.0));
            for (doc_id, doc) in docs {
                out.push(KnowledgeSnippet {
                    id: dstc_snippet_id(&domain, &entity_id, &doc_id),
                    domain: domain.clone(),
                    entity_id: entity_id.clone(),
                    entity_name: entity_name.clone(),
                    question: doc.title,
                    answer: doc.body,
                });
            }
        }
    }
    Ok(out)
}

/// Parses either the normalized form (array of snippets) or the nested
/// `domain -> entity_id -> {name, docs: doc_id -> {title, body}}` form.
pub fn parse_knowledge_base(bytes: &[u8]) -> Result<KnowledgeBase> {
    let probe: Value =
        serde_json::from_slice(bytes).map_err(|e| Error::json("knowledge base", bytes, e))?;
    let snippets = match probe {
        Value::Array(_) => {
            serde_json::from_slice(bytes).map_err(|e| Error::json("knowledge base", bytes, e))?
        }
        Value::Object(_) => flatten_dstc(bytes)?,
        _ => return Err(Error::Knowledge("expected an array or an object".into())),
    };
    KnowledgeBase::new(snippets)
}

pub fn write_knowledge_base(kb: &KnowledgeBase) -> Vec<u8> {
    to_canonical_json(kb.snippets())
}
