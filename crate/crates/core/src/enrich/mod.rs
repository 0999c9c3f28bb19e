//! Ontology and pattern enrichment.

mod ontology;
mod pattern;
mod realize;
mod transitions;

pub use ontology::{
    apply_value_map, augment_knowledge_dialogue, build_value_map, enrich_dialogue, grounded_system_turns,
    insert_reference_phrases, OntologyConfig, ValueMap,
};
pub use pattern::{
    extract_patterns, extract_patterns_with_report, parse_lexicon, parse_template, placeholder, ExpressionLexicon,
    Expressions, ExtractionReport, Pattern, PatternLibrary, PlaceholderKind, Segment, VALUE_TOKEN,
};
pub use realize::{
    fit, generate_dialogues, generate_one, realize_dialogue, realize_traced, PatternConfig, PatternModel,
    PatternTrace, Resources,
};
pub use transitions::{estimate_transitions, sample_action_sequence, TransitionMatrix};
