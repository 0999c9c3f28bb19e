//! End-to-end recipes: load inputs, run stages in order, write outputs atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    parse_corpus, parse_database, parse_knowledge_base, parse_ontology, to_canonical_json, validate_corpus,
    write_corpus, write_jsonl, ActionSignature, Database, Dialogue, KnowledgeBase, Ontology,
};
use crate::enrich::{
    augment_knowledge_dialogue, enrich_dialogue, fit, generate_dialogues, insert_reference_phrases, parse_lexicon,
    ExpressionLexicon, OntologyConfig, PatternConfig, PatternModel,
};
use crate::error::{Error, Result};
use crate::negatives::{sample_corpus_negatives, NegativeConfig, NegativeRecord, NegativeSampler};
use crate::rng::RngStream;
use crate::serializer::{index_negatives, serialize_corpus, SerializeInputs, Task, TrainingExample, DEFAULT_WINDOW};
use crate::spoken::{simulate_corpus, NoiseConfig, NoiseCounts};

pub const ENRICH_ONTOLOGY: &str = "enrich-ontology";
pub const ENRICH_KNOWLEDGE: &str = "enrich-knowledge";
pub const ENRICH_PATTERN: &str = "enrich-pattern";

/// Input files. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub corpus: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub target_ontology: Option<PathBuf>,
    pub database: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub target_knowledge: Option<PathBuf>,
    pub phrases: Option<PathBuf>,
}

impl Inputs {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.ontology,
            &mut self.target_ontology,
            &mut self.database,
            &mut self.lexicon,
            &mut self.model,
            &mut self.knowledge,
            &mut self.target_knowledge,
            &mut self.phrases,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Stage {
    /// Replace slot values with values from `inputs.target_ontology`.
    EnrichOntology {
        #[serde(default)]
        append: bool,
    },
    /// Reground knowledge turns on `inputs.target_knowledge` and insert reference phrases.
    EnrichKnowledge {
        #[serde(default)]
        append: bool,
        #[serde(default)]
        phrase_prob: f64,
    },
    /// Generate dialogues from `inputs.model`, or from a model fitted on the current corpus.
    EnrichPattern {
        count: usize,
        #[serde(default)]
        append: bool,
    },
    Simulate,
    Negatives,
    Serialize {
        tasks: Vec<Task>,
    },
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::EnrichOntology { .. } => ENRICH_ONTOLOGY,
            Stage::EnrichKnowledge { .. } => ENRICH_KNOWLEDGE,
            Stage::EnrichPattern { .. } => ENRICH_PATTERN,
            Stage::Simulate => crate::spoken::STAGE,
            Stage::Negatives => crate::negatives::STAGE,
            Stage::Serialize { .. } => "serialize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub master_seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub window: usize,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    pub ontology: OntologyConfig,
    pub pattern: PatternConfig,
    pub noise: NoiseConfig,
    pub negatives: NegativeConfig,
    pub stages: Vec<Stage>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            master_seed: 0,
            jobs: 0,
            window: DEFAULT_WINDOW,
            output_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            ontology: OntologyConfig::default(),
            pattern: PatternConfig::default(),
            noise: NoiseConfig::default(),
            negatives: NegativeConfig::default(),
            stages: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::json("pipeline config", bytes, e))
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read(path)?;
        let mut cfg = Self::parse(&bytes)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.inputs.resolve(base);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pattern.validate()?;
        self.noise.validate()?;
        self.negatives.validate()?;
        for stage in &self.stages {
            if let Stage::EnrichKnowledge { phrase_prob, .. } = stage {
                if !(0.0..=1.0).contains(phrase_prob) {
                    return Err(Error::invalid("pipeline config", "phrase_prob must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// One phrase per non-blank line.
pub fn parse_phrases(bytes: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub utterances: usize,
    pub user_utterances: usize,
    pub system_utterances: usize,
    pub tokens_per_utterance: f64,
    pub distinct_patterns: usize,
    pub perturbations: NoiseCounts,
}

/// Exact counts over a corpus; tokens are whitespace-separated.
pub fn stats(corpus: &[Dialogue]) -> CorpusStats {
    let mut s = CorpusStats {
        dialogues: corpus.len(),
        ..CorpusStats::default()
    };
    let mut tokens = 0usize;
    for turn in corpus.iter().flat_map(|d| &d.turns) {
        s.utterances += 1;
        if turn.is_user() {
            s.user_utterances += 1;
        } else {
            s.system_utterances += 1;
        }
        tokens += turn.text.split_whitespace().count();
    }
    if s.utterances > 0 {
        s.tokens_per_utterance = tokens as f64 / s.utterances as f64;
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    #[serde(flatten)]
    pub corpus: CorpusStats,
    pub stages: Vec<String>,
    pub negative_records: usize,
    pub examples: BTreeMap<Task, usize>,
    pub outputs: Vec<String>,
}

/// Ontology enrichment of every dialogue, each from its own stream.
pub fn enrich_ontology_corpus(
    corpus: &[Dialogue],
    target: &Ontology,
    cfg: &OntologyConfig,
    stream: &RngStream,
) -> Result<Vec<Dialogue>> {
    corpus
        .par_iter()
        .map(|d| {
            let mut rng = stream.stream(ENRICH_ONTOLOGY, &d.id);
            enrich_dialogue(d, target, &mut rng, cfg)
        })
        .collect()
}

/// Regrounds knowledge-grounded dialogues on `target` (when given) and prepends reference
/// phrases. Dialogues without grounded turns pass through unchanged.
pub fn enrich_knowledge_corpus(
    corpus: &[Dialogue],
    source: &KnowledgeBase,
    target: Option<&KnowledgeBase>,
    phrases: &[String],
    phrase_prob: f64,
    stream: &RngStream,
) -> Result<Vec<Dialogue>> {
    corpus
        .par_iter()
        .map(|d| {
            if !d.turns.iter().any(|t| t.knowledge_ref.is_some()) {
                return Ok(d.clone());
            }
            let mut rng = stream.stream(ENRICH_KNOWLEDGE, &d.id);
            let mut out = match target {
                Some(t) => augment_knowledge_dialogue(d, source, t, &mut rng)?,
                None => d.clone(),
            };
            if phrase_prob > 0.0 && !phrases.is_empty() {
                out = insert_reference_phrases(&out, phrases, phrase_prob, &mut rng)?;
            }
            Ok(out)
        })
        .collect()
}

#[derive(Default)]
struct Loaded {
    ontology: Option<Ontology>,
    target_ontology: Option<Ontology>,
    database: Option<Database>,
    lexicon: Option<ExpressionLexicon>,
    model: Option<PatternModel>,
    knowledge: Option<KnowledgeBase>,
    target_knowledge: Option<KnowledgeBase>,
    phrases: Vec<String>,
}

fn need<'a, T>(value: &'a Option<T>, what: &str, stage: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::invalid("pipeline config", format!("stage {stage} needs inputs.{what}")))
}

fn load_opt<T>(path: &Option<PathBuf>, parse: impl Fn(&[u8]) -> Result<T>) -> Result<Option<T>> {
    path.as_ref().map(|p| parse(&read(p)?)).transpose()
}

impl Loaded {
    fn load(inputs: &Inputs) -> Result<Self> {
        Ok(Loaded {
            ontology: load_opt(&inputs.ontology, parse_ontology)?,
            target_ontology: load_opt(&inputs.target_ontology, parse_ontology)?,
            database: load_opt(&inputs.database, parse_database)?,
            lexicon: load_opt(&inputs.lexicon, parse_lexicon)?,
            model: load_opt(&inputs.model, parse_model)?,
            knowledge: load_opt(&inputs.knowledge, parse_knowledge_base)?,
            target_knowledge: load_opt(&inputs.target_knowledge, parse_knowledge_base)?,
            phrases: load_opt(&inputs.phrases, |b| Ok(parse_phrases(b)))?.unwrap_or_default(),
        })
    }
}

pub fn parse_model(bytes: &[u8]) -> Result<PatternModel> {
    serde_json::from_slice(bytes).map_err(|e| Error::json("pattern model", bytes, e))
}

/// What a pipeline run produced, before anything is written.
#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    /// `(file name, contents)` in write order; `stats.json` is last.
    pub files: Vec<(String, Vec<u8>)>,
    pub stats: PipelineStats,
}

/// Runs every stage in memory on a pool of `config.jobs` workers.
pub fn execute(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.jobs > 0 {
        builder = builder.num_threads(config.jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid("pipeline config", format!("cannot start {} workers: {e}", config.jobs)))?;
    pool.install(|| execute_stages(config))
}

fn execute_stages(config: &PipelineConfig) -> Result<PipelineOutput> {
    let stream = RngStream::new(config.master_seed);
    let loaded = Loaded::load(&config.inputs)?;
    let mut corpus: Vec<Dialogue> = match &config.inputs.corpus {
        Some(p) => parse_corpus(&read(p)?)?,
        None => Vec::new(),
    };
    let mut corpus_changed = false;
    let mut negatives: Option<Vec<NegativeRecord>> = None;
    let mut examples: BTreeMap<Task, Vec<TrainingExample>> = BTreeMap::new();
    let mut patterns_used: BTreeSet<(ActionSignature, usize)> = BTreeSet::new();
    let mut noise = NoiseCounts::default();

    for stage in &config.stages {
        let name = stage.name();
        log::info!("stage {name}: {} dialogues in", corpus.len());
        let mut run = || -> Result<()> {
            match stage {
                Stage::EnrichOntology { append } => {
                    let target = need(&loaded.target_ontology, "target_ontology", name)?;
                    let out = enrich_ontology_corpus(&corpus, target, &config.ontology, &stream)?;
                    merge(&mut corpus, out, *append, "-onto");
                    corpus_changed = true;
                }
                Stage::EnrichKnowledge { append, phrase_prob } => {
                    let source = need(&loaded.knowledge, "knowledge", name)?;
                    let out = enrich_knowledge_corpus(
                        &corpus,
                        source,
                        loaded.target_knowledge.as_ref(),
                        &loaded.phrases,
                        *phrase_prob,
                        &stream,
                    )?;
                    merge(&mut corpus, out, *append, "-kb");
                    corpus_changed = true;
                }
                Stage::EnrichPattern { count, append } => {
                    let ontology = need(&loaded.ontology, "ontology", name)?;
                    let lexicon = need(&loaded.lexicon, "lexicon", name)?;
                    let empty_db = Database::default();
                    let database = loaded.database.as_ref().unwrap_or(&empty_db);
                    let fitted;
                    let model = match &loaded.model {
                        Some(m) => m,
                        None => {
                            fitted = fit(&corpus, ontology)?;
                            &fitted
                        }
                    };
                    let generated =
                        generate_dialogues(*count, model, lexicon, database, ontology, &stream, &config.pattern)?;
                    let mut dialogues = Vec::with_capacity(generated.len());
                    for (d, trace) in generated {
                        patterns_used.extend(trace);
                        dialogues.push(d);
                    }
                    if *append {
                        corpus.extend(dialogues);
                        validate_corpus(&corpus)?;
                    } else {
                        corpus = dialogues;
                    }
                    corpus_changed = true;
                }
                Stage::Simulate => {
                    let (out, counts) =
                        simulate_corpus(&corpus, loaded.ontology.as_ref(), &config.noise, &stream)?;
                    corpus = out;
                    noise.add(&counts);
                    corpus_changed = true;
                }
                Stage::Negatives => {
                    let kb = loaded
                        .target_knowledge
                        .as_ref()
                        .filter(|_| corpus_regrounded(&config.stages))
                        .or(loaded.knowledge.as_ref())
                        .ok_or_else(|| Error::invalid("pipeline config", "stage negatives needs inputs.knowledge"))?;
                    let sampler = NegativeSampler::new(kb, config.negatives.clone())?;
                    negatives = Some(sample_corpus_negatives(&corpus, &sampler, &stream)?);
                }
                Stage::Serialize { tasks } => {
                    let kb = loaded
                        .target_knowledge
                        .as_ref()
                        .filter(|_| corpus_regrounded(&config.stages))
                        .or(loaded.knowledge.as_ref());
                    let indexed = negatives.as_deref().map(index_negatives);
                    let inputs = SerializeInputs {
                        knowledge: kb,
                        negatives: indexed.as_ref(),
                    };
                    for &task in tasks {
                        examples.insert(task, serialize_corpus(&corpus, task, config.window, inputs)?);
                    }
                }
            }
            Ok(())
        };
        run().map_err(|e| e.in_stage(name))?;
    }

    let mut files = Vec::new();
    if corpus_changed {
        files.push(("corpus.json".to_string(), write_corpus(&corpus)));
    }
    if let Some(n) = &negatives {
        files.push(("negatives.jsonl".to_string(), write_jsonl(n)));
    }
    for (task, ex) in &examples {
        files.push((format!("{task}.jsonl"), write_jsonl(ex)));
    }

    let mut corpus_stats = stats(&corpus);
    corpus_stats.distinct_patterns = patterns_used.len();
    corpus_stats.perturbations = noise;
    let stats = PipelineStats {
        corpus: corpus_stats,
        stages: config.stages.iter().map(|s| s.name().to_string()).collect(),
        negative_records: negatives.as_ref().map_or(0, Vec::len),
        examples: examples.iter().map(|(t, e)| (*t, e.len())).collect(),
        outputs: files.iter().map(|(n, _)| n.clone()).collect(),
    };
    files.push(("stats.json".to_string(), to_canonical_json(&stats)));
    Ok(PipelineOutput { files, stats })
}

fn corpus_regrounded(stages: &[Stage]) -> bool {
    stages.iter().any(|s| matches!(s, Stage::EnrichKnowledge { .. }))
}

fn merge(corpus: &mut Vec<Dialogue>, out: Vec<Dialogue>, append: bool, suffix: &str) {
    if append {
        corpus.extend(out.into_iter().map(|mut d| {
            d.id.push_str(suffix);
            d
        }));
    } else {
        *corpus = out;
    }
}

/// Writes every file into `dir` through temporary files, renaming only after all of them
/// were written. On failure, files already renamed by this call are removed again.
pub fn write_atomically(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written: Vec<PathBuf> = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        if let Err(e) = tmp.persist(&dest) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(Error::io(&dest, e.error));
        }
        written.push(dest);
    }
    Ok(written)
}

/// Runs the pipeline and writes its outputs plus `stats.json` into `config.output_dir`.
/// Nothing is written when a stage fails.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineStats> {
    let output = execute(config)?;
    write_atomically(&config.output_dir, &output.files)?;
    Ok(output.stats)
}

/// Helper for the single-file commands: atomic write of one output.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("output path", format!("{} has no file name", path.display())))?;
    write_atomically(dir, &[(name.to_string_lossy().into_owned(), bytes.to_vec())])?;
    Ok(())
}
