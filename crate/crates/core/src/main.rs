use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::Value;

use tod_augment::corpus::{
    parse_corpus, parse_database, parse_jsonl, parse_knowledge_base, parse_ontology, to_canonical_json, write_corpus,
    write_jsonl, Database, Ontology,
};
use tod_augment::enrich::{fit, generate_dialogues, parse_lexicon, OntologyConfig, PatternConfig};
use tod_augment::metrics::{evaluate_detection, evaluate_dst, evaluate_selection, parse_records};
use tod_augment::negatives::{sample_corpus_negatives, NegativeConfig, NegativeSampler};
use tod_augment::pipeline::{
    enrich_knowledge_corpus, enrich_ontology_corpus, parse_model, parse_phrases, read, run_pipeline, stats,
    write_file, PipelineConfig,
};
use tod_augment::serializer::{index_negatives, serialize_corpus, SerializeInputs, Task, DEFAULT_WINDOW};
use tod_augment::spoken::{simulate_corpus, ExternalNoiserAdapter, NoiseConfig};
use tod_augment::RngStream;

/// Augmentation toolkit for task-oriented dialogue corpora.
#[derive(Parser)]
#[command(name = "tod-augment", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config: a pipeline config, or the section for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Input corpus.
    #[arg(long = "in", visible_alias = "corpus", global = true)]
    input: Option<PathBuf>,
    /// Output file (stdout when omitted) or, for `pipeline`, the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Replace slot values with values from a target ontology, and reground knowledge turns.
    EnrichOntology {
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Knowledge base to reground on.
        #[arg(long)]
        knowledge: Option<PathBuf>,
        /// Knowledge base the corpus currently refers to (defaults to --knowledge).
        #[arg(long)]
        source_knowledge: Option<PathBuf>,
        #[arg(long)]
        phrases: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        phrase_prob: f64,
    },
    /// Generate dialogues from patterns and action transitions.
    EnrichPattern {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        database: Option<PathBuf>,
        #[arg(long)]
        lexicon: PathBuf,
        /// Fitted model from `fit`; otherwise fitted from --in.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        max_turns: Option<usize>,
    },
    /// Extract the pattern library and transition matrix from a seed corpus.
    Fit {
        /// Ontology used to recognise slot values; defaults to the values seen in the corpus.
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
    /// Add spoken-style noise to user turns.
    Simulate {
        /// Ontology for self-repair alternatives.
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Shell command with {in} and {out} placeholders, used instead of the built-in noise.
        #[arg(long)]
        external_noiser: Option<String>,
    },
    /// Sample multi-scale negatives for every knowledge-grounded turn.
    Negatives {
        #[arg(long)]
        knowledge: PathBuf,
        #[arg(long)]
        per_scale: Option<usize>,
        #[arg(long)]
        top_m: Option<usize>,
    },
    /// Write training examples as JSON Lines.
    Serialize {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        negatives: Option<PathBuf>,
        #[arg(long)]
        knowledge: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Score predictions against gold records.
    Eval {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Corpus statistics.
    Stats,
    /// Run a configured sequence of stages.
    Pipeline,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOD_AUGMENT_LOG", "warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// The config file as JSON, if one was given.
fn config_value(global: &Global) -> Result<Option<Value>> {
    let Some(path) = &global.config else { return Ok(None) };
    let bytes = read(path)?;
    let value = serde_json::from_slice(&bytes).with_context(|| format!("{}: not JSON", path.display()))?;
    Ok(Some(value))
}

fn is_pipeline_config(v: &Value) -> bool {
    ["stages", "master_seed", "inputs", "noise", "pattern", "negatives", "ontology"]
        .iter()
        .any(|k| v.get(k).is_some())
}

/// The subcommand's config section: `section` of a pipeline config, or the whole file.
fn section<T: DeserializeOwned + Default>(cfg: &Option<Value>, key: &str) -> Result<T> {
    let Some(v) = cfg else { return Ok(T::default()) };
    let part = if is_pipeline_config(v) {
        match v.get(key) {
            Some(p) => p.clone(),
            None => return Ok(T::default()),
        }
    } else {
        v.clone()
    };
    serde_json::from_value(part).with_context(|| format!("config section {key:?}"))
}

fn seed(global: &Global, cfg: &Option<Value>) -> u64 {
    global
        .seed
        .or_else(|| cfg.as_ref().and_then(|v| v.get("master_seed")).and_then(Value::as_u64))
        .unwrap_or(0)
}

fn jobs(global: &Global, cfg: &Option<Value>) -> usize {
    global
        .jobs
        .or_else(|| cfg.as_ref().and_then(|v| v.get("jobs")).and_then(Value::as_u64).map(|j| j as usize))
        .unwrap_or(0)
}

fn input(global: &Global) -> Result<&Path> {
    global.input.as_deref().context("--in is required")
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let Cli { global, command } = cli;
    let cfg = config_value(&global)?;

    if let Command::Pipeline = command {
        let path = global.config.as_deref().context("pipeline needs --config")?;
        let mut pc = PipelineConfig::load(path)?;
        if let Some(s) = global.seed {
            pc.master_seed = s;
        }
        if let Some(j) = global.jobs {
            pc.jobs = j;
        }
        if let Some(o) = &global.out {
            pc.output_dir = o.clone();
        }
        if let Some(i) = &global.input {
            pc.inputs.corpus = Some(i.clone());
        }
        let s = run_pipeline(&pc)?;
        log::info!("wrote {:?} to {}", s.outputs, pc.output_dir.display());
        std::io::stdout().write_all(&to_canonical_json(&s))?;
        return Ok(());
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    let n = jobs(&global, &cfg);
    if n > 0 {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let stream = RngStream::new(seed(&global, &cfg));
    pool.install(|| dispatch(command, &global, &cfg, &stream))
}

fn dispatch(command: Command, global: &Global, cfg: &Option<Value>, stream: &RngStream) -> Result<()> {
    match command {
        Command::EnrichOntology {
            ontology,
            knowledge,
            source_knowledge,
            phrases,
            phrase_prob,
        } => {
            let mut corpus = parse_corpus(&read(input(global)?)?)?;
            if ontology.is_none() && knowledge.is_none() {
                bail!("give --ontology, --knowledge or both");
            }
            if let Some(o) = ontology {
                let target = parse_ontology(&read(&o)?)?;
                let oc: OntologyConfig = section(cfg, "ontology")?;
                corpus = enrich_ontology_corpus(&corpus, &target, &oc, stream)?;
            }
            if let Some(k) = knowledge {
                let target = parse_knowledge_base(&read(&k)?)?;
                let source = match source_knowledge {
                    Some(s) => parse_knowledge_base(&read(&s)?)?,
                    None => target.clone(),
                };
                let phrases = match phrases {
                    Some(p) => parse_phrases(&read(&p)?),
                    None => Vec::new(),
                };
                corpus = enrich_knowledge_corpus(&corpus, &source, Some(&target), &phrases, phrase_prob, stream)?;
            }
            emit(&global.out, &write_corpus(&corpus))
        }
        Command::EnrichPattern {
            ontology,
            database,
            lexicon,
            model,
            count,
            max_turns,
        } => {
            let ontology = parse_ontology(&read(&ontology)?)?;
            let lexicon = parse_lexicon(&read(&lexicon)?)?;
            let database = match database {
                Some(p) => parse_database(&read(&p)?)?,
                None => Database::default(),
            };
            let model = match model {
                Some(p) => parse_model(&read(&p)?)?,
                None => fit(&parse_corpus(&read(input(global)?)?)?, &ontology)?,
            };
            let mut pc: PatternConfig = section(cfg, "pattern")?;
            if let Some(m) = max_turns {
                pc.max_turns = m;
            }
            let generated = generate_dialogues(count, &model, &lexicon, &database, &ontology, stream, &pc)?;
            let corpus: Vec<_> = generated.into_iter().map(|(d, _)| d).collect();
            emit(&global.out, &write_corpus(&corpus))
        }
        Command::Fit { ontology } => {
            let corpus = parse_corpus(&read(input(global)?)?)?;
            let ontology = match ontology {
                Some(p) => parse_ontology(&read(&p)?)?,
                None => Ontology::observed(&corpus),
            };
            emit(&global.out, &to_canonical_json(&fit(&corpus, &ontology)?))
        }
        Command::Simulate {
            ontology,
            external_noiser,
        } => {
            let corpus = parse_corpus(&read(input(global)?)?)?;
            let nc: NoiseConfig = section(cfg, "noise")?;
            let out = match external_noiser {
                Some(cmd) => ExternalNoiserAdapter::new(cmd).apply(&corpus, &nc)?,
                None => {
                    let ontology = ontology.map(|p| read(&p).and_then(|b| parse_ontology(&b))).transpose()?;
                    let (out, counts) = simulate_corpus(&corpus, ontology.as_ref(), &nc, stream)?;
                    log::info!("perturbations: {counts:?}");
                    out
                }
            };
            emit(&global.out, &write_corpus(&out))
        }
        Command::Negatives {
            knowledge,
            per_scale,
            top_m,
        } => {
            let corpus = parse_corpus(&read(input(global)?)?)?;
            let kb = parse_knowledge_base(&read(&knowledge)?)?;
            let mut nc: NegativeConfig = section(cfg, "negatives")?;
            if let Some(p) = per_scale {
                nc.per_scale = p;
            }
            if let Some(m) = top_m {
                nc.top_m = m;
            }
            let sampler = NegativeSampler::new(&kb, nc)?;
            let records = sample_corpus_negatives(&corpus, &sampler, stream)?;
            emit(&global.out, &write_jsonl(&records))
        }
        Command::Serialize {
            task,
            negatives,
            knowledge,
            window,
        } => {
            let corpus = parse_corpus(&read(input(global)?)?)?;
            let kb = knowledge.map(|p| read(&p).and_then(|b| parse_knowledge_base(&b))).transpose()?;
            let records = negatives
                .map(|p| read(&p).and_then(|b| parse_jsonl("negatives", &b)))
                .transpose()?;
            let indexed = records.as_deref().map(index_negatives);
            let window = window
                .or_else(|| cfg.as_ref().and_then(|v| v.get("window")).and_then(Value::as_u64).map(|w| w as usize))
                .unwrap_or(DEFAULT_WINDOW);
            let inputs = SerializeInputs {
                knowledge: kb.as_ref(),
                negatives: indexed.as_ref(),
            };
            let examples = serialize_corpus(&corpus, task, window, inputs)?;
            emit(&global.out, &write_jsonl(&examples))
        }
        Command::Eval { task, pred, gold } => {
            let (p, g) = (read(&pred)?, read(&gold)?);
            let report = match task {
                Task::Dst => evaluate_dst(parse_records("predictions", &p)?, parse_records("gold", &g)?)?,
                Task::Detection => evaluate_detection(parse_records("predictions", &p)?, parse_records("gold", &g)?)?,
                Task::Selection => evaluate_selection(parse_records("predictions", &p)?, parse_records("gold", &g)?)?,
                Task::Generation => bail!("generation has no built-in metric"),
            };
            emit(&global.out, &to_canonical_json(&report))
        }
        Command::Stats => {
            let corpus = parse_corpus(&read(input(global)?)?)?;
            emit(&global.out, &to_canonical_json(&stats(&corpus)))
        }
        Command::Pipeline => unreachable!("handled in run"),
    }
}
