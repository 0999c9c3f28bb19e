//! Utterance patterns, the expression lexicon and pattern extraction from annotated corpora.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{ActionSignature, Dialogue, Ontology};
use crate::error::{Error, Result};
use crate::text::{find_matches, is_word_char, splice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlaceholderKind {
    /// Expression placed before the entity ("moderately priced").
    Prefix,
    /// Expression placed after the entity ("serving italian cuisine").
    Suffix,
    /// The bare value.
    Value,
}

impl PlaceholderKind {
    fn tag(self) -> &'static str {
        match self {
            PlaceholderKind::Prefix => "slot_prefix",
            PlaceholderKind::Suffix => "slot_suffix",
            PlaceholderKind::Value => "value",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "slot_prefix" => Some(PlaceholderKind::Prefix),
            "slot_suffix" => Some(PlaceholderKind::Suffix),
            "value" => Some(PlaceholderKind::Value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Slot {
        kind: PlaceholderKind,
        domain: String,
        slot: String,
    },
}

pub fn placeholder(kind: PlaceholderKind, domain: &str, slot: &str) -> String {
    format!("[{}:{domain}.{slot}]", kind.tag())
}

/// Splits a template into literal text and typed placeholders. Bracketed text that is not a
/// well-formed placeholder stays literal.
pub fn parse_template(template: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let parsed = after.find(']').and_then(|close| {
            let body = &after[..close];
            let (tag, target) = body.split_once(':')?;
            let kind = PlaceholderKind::from_tag(tag)?;
            let (domain, slot) = target.split_once('.')?;
            (!domain.is_empty() && !slot.is_empty()).then(|| {
                (
                    Segment::Slot {
                        kind,
                        domain: domain.to_string(),
                        slot: slot.to_string(),
                    },
                    close,
                )
            })
        });
        match parsed {
            Some((seg, close)) => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut literal)));
                }
                segments.push(seg);
                rest = &after[close + 1..];
            }
            None => {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        segments.push(Segment::Text(literal));
    }
    segments
}

/// A templated utterance for one action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub action: ActionSignature,
    pub template: String,
    pub slot_count: usize,
}

impl Pattern {
    /// Placeholders must sit on word boundaries so that filled values stay whole words.
    pub fn new(action: ActionSignature, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.trim().is_empty() {
            return Err(Error::invalid("pattern", format!("empty template for {action}")));
        }
        let segments = parse_template(&template);
        for (i, seg) in segments.iter().enumerate() {
            if !matches!(seg, Segment::Slot { .. }) {
                continue;
            }
            let before = i.checked_sub(1).and_then(|j| match &segments[j] {
                Segment::Text(t) => t.chars().last(),
                _ => None,
            });
            let after = match segments.get(i + 1) {
                Some(Segment::Text(t)) => t.chars().next(),
                _ => None,
            };
            if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
                return Err(Error::invalid(
                    "pattern",
                    format!("placeholder glued to a word in {template:?}"),
                ));
            }
        }
        let slot_count = segments.iter().filter(|s| matches!(s, Segment::Slot { .. })).count();
        Ok(Pattern {
            action,
            template,
            slot_count,
        })
    }

    pub fn segments(&self) -> Vec<Segment> {
        parse_template(&self.template)
    }

    pub fn slots(&self) -> impl Iterator<Item = (PlaceholderKind, String, String)> {
        self.segments().into_iter().filter_map(|s| match s {
            Segment::Slot { kind, domain, slot } => Some((kind, domain, slot)),
            Segment::Text(_) => None,
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.action, self.template)
    }
}

/// Candidate pattern pools keyed by action signature.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternLibrary {
    pools: BTreeMap<ActionSignature, Vec<Pattern>>,
}

impl PatternLibrary {
    /// Adds a pattern unless the same template is already pooled for its action.
    pub fn add(&mut self, pattern: Pattern) -> bool {
        let pool = self.pools.entry(pattern.action.clone()).or_default();
        if pool.iter().any(|p| p.template == pattern.template) {
            return false;
        }
        pool.push(pattern);
        true
    }

    pub fn pool(&self, action: &ActionSignature) -> &[Pattern] {
        self.pools.get(action).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionSignature> {
        self.pools.keys()
    }

    pub fn len(&self) -> usize {
        self.pools.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every placeholder must name a slot the ontology knows.
    pub fn check_against(&self, ontology: &Ontology) -> Result<()> {
        for p in self.pools.values().flatten() {
            for (_, domain, slot) in p.slots() {
                if !ontology.has_slot(&domain, &slot) {
                    return Err(Error::invalid(
                        "pattern",
                        format!("{p} uses {domain}.{slot}, which the ontology lacks"),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Serialize for PatternLibrary {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_map(self.pools.iter().map(|(action, pool)| {
            (action.to_string(), pool.iter().map(|p| p.template.as_str()).collect::<Vec<_>>())
        }))
    }
}

impl<'de> Deserialize<'de> for PatternLibrary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<ActionSignature, Vec<String>>::deserialize(deserializer)?;
        let mut lib = PatternLibrary::default();
        for (action, templates) in raw {
            for t in templates {
                lib.add(Pattern::new(action.clone(), t).map_err(D::Error::custom)?);
            }
        }
        Ok(lib)
    }
}

/// Statistics of one extraction pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractionReport {
    pub utterances: usize,
    pub skipped_no_surface: usize,
    pub skipped_unknown_slot: usize,
    pub duplicates: usize,
}

/// Turns every annotated utterance into a template by masking its act values with
/// `[value:domain.slot]` placeholders.
pub fn extract_patterns(corpus: &[Dialogue], ontology: &Ontology) -> Result<PatternLibrary> {
    extract_patterns_with_report(corpus, ontology).map(|(lib, _)| lib)
}

pub fn extract_patterns_with_report(
    corpus: &[Dialogue],
    ontology: &Ontology,
) -> Result<(PatternLibrary, ExtractionReport)> {
    if !corpus.iter().flat_map(|d| &d.turns).any(|t| !t.acts.is_empty()) {
        return Err(Error::invalid("corpus", "no act annotations to extract patterns from"));
    }
    let mut lib = PatternLibrary::default();
    let mut report = ExtractionReport::default();
    for turn in corpus.iter().flat_map(|d| &d.turns) {
        report.utterances += 1;
        let mut values: Vec<(String, String, String)> = turn
            .acts
            .iter()
            .flat_map(|a| &a.slots)
            .filter_map(|s| {
                let v = s.value.as_deref()?.trim();
                (!v.is_empty() && v != "?").then(|| (s.domain.clone(), s.slot.clone(), v.to_string()))
            })
            .collect();
        values.sort();
        values.dedup();
        if values.iter().any(|(d, s, _)| !ontology.has_slot(d, s)) {
            report.skipped_unknown_slot += 1;
            continue;
        }
        let needles: Vec<&str> = values.iter().map(|(_, _, v)| v.as_str()).collect();
        let spans = find_matches(&turn.text, &needles);
        let hit: BTreeSet<usize> = spans.iter().map(|s| s.candidate).collect();
        if hit.len() != values.len() {
            report.skipped_no_surface += 1;
            continue;
        }
        let template = splice(&turn.text, &spans, |span, _| {
            let (d, s, _) = &values[span.candidate];
            placeholder(PlaceholderKind::Value, d, s)
        });
        if !lib.add(Pattern::new(turn.signature(), template)?) {
            report.duplicates += 1;
        }
    }
    Ok((lib, report))
}

/// Prefix and suffix phrase templates for one slot. Each contains exactly one `[value]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expressions {
    #[serde(default)]
    pub prefix: Vec<String>,
    #[serde(default)]
    pub suffix: Vec<String>,
}

impl Expressions {
    pub fn of(&self, kind: PlaceholderKind) -> &[String] {
        match kind {
            PlaceholderKind::Prefix => &self.prefix,
            PlaceholderKind::Suffix => &self.suffix,
            PlaceholderKind::Value => &[],
        }
    }
}

pub const VALUE_TOKEN: &str = "[value]";

/// Slot expressions keyed by `(domain, slot)`; serialized with `"domain.slot"` keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpressionLexicon {
    entries: BTreeMap<(String, String), Expressions>,
}

impl ExpressionLexicon {
    pub fn insert(&mut self, domain: &str, slot: &str, expressions: Expressions) -> Result<()> {
        for phrase in expressions.prefix.iter().chain(&expressions.suffix) {
            check_phrase(phrase)?;
        }
        self.entries.insert((domain.to_string(), slot.to_string()), expressions);
        Ok(())
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&Expressions> {
        self.entries.get(&(domain.to_string(), slot.to_string()))
    }

    /// Slots of `domain` that have at least one phrase of `kind`.
    pub fn slots_with(&self, domain: &str, kind: PlaceholderKind) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|((d, _), e)| d == domain && !e.of(kind).is_empty())
            .map(|((_, s), _)| s.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_phrase(phrase: &str) -> Result<()> {
    let count = phrase.matches(VALUE_TOKEN).count();
    if count != 1 {
        return Err(Error::invalid(
            "expression lexicon",
            format!("{phrase:?} must contain exactly one {VALUE_TOKEN}, found {count}"),
        ));
    }
    let at = phrase.find(VALUE_TOKEN).expect("counted above");
    let before = phrase[..at].chars().last();
    let after = phrase[at + VALUE_TOKEN.len()..].chars().next();
    if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
        return Err(Error::invalid(
            "expression lexicon",
            format!("{VALUE_TOKEN} glued to a word in {phrase:?}"),
        ));
    }
    Ok(())
}

impl Serialize for ExpressionLexicon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_map(self.entries.iter().map(|((d, s), e)| (format!("{d}.{s}"), e)))
    }
}

impl<'de> Deserialize<'de> for ExpressionLexicon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, Expressions>::deserialize(deserializer)?;
        let mut lex = ExpressionLexicon::default();
        for (key, e) in raw {
            let (d, s) = key
                .split_once('.')
                .ok_or_else(|| D::Error::custom(format!("lexicon key {key:?} is not domain.slot")))?;
            lex.insert(d, s, e).map_err(D::Error::custom)?;
        }
        Ok(lex)
    }
}

pub fn parse_lexicon(bytes: &[u8]) -> Result<ExpressionLexicon> {
    serde_json::from_slice(bytes).map_err(|e| Error::json("expression lexicon", bytes, e))
}
