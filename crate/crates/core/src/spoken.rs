//! Spoken-conversation simulation: disfluencies on the utterance level and
//! phoneme-like letter noise on the word level. Only text changes; annotations are
//! carried over untouched.

use std::io::Write as _;
use std::process::Command;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, DialogueState, Ontology, Speaker, Turn};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::text::{find_matches, mirror_case};

pub const STAGE: &str = "simulate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub pause_p: f64,
    pub repetition_p: f64,
    pub restart_p: f64,
    pub repair_p: f64,
    pub sub_p: f64,
    pub ins_p: f64,
    pub del_p: f64,
    pub swap_p: f64,
    pub split_p: f64,
    pub filler_words: Vec<String>,
    pub restart_prefixes: Vec<String>,
    pub confusion_pairs: Vec<[char; 2]>,
    pub vowels: String,
    pub min_split_len: usize,
    pub noise_system_turns: bool,
    pub repair_marker: String,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            pause_p: 0.15,
            repetition_p: 0.10,
            restart_p: 0.10,
            repair_p: 0.05,
            sub_p: 0.03,
            ins_p: 0.05,
            del_p: 0.02,
            swap_p: 0.02,
            split_p: 0.02,
            filler_words: ["uh", "um", "you know", "like", "well"].map(String::from).to_vec(),
            restart_prefixes: ["I mean,", "I just", "And", "So"].map(String::from).to_vec(),
            confusion_pairs: vec![
                ['b', 'p'],
                ['d', 't'],
                ['g', 'k'],
                ['v', 'f'],
                ['s', 'z'],
                ['c', 'k'],
                ['m', 'n'],
            ],
            vowels: "aeiou".into(),
            min_split_len: 6,
            noise_system_turns: false,
            repair_marker: ", no wait,".into(),
        }
    }
}

impl NoiseConfig {
    /// Default word lists with every probability set to zero.
    pub fn silent() -> Self {
        NoiseConfig {
            pause_p: 0.0,
            repetition_p: 0.0,
            restart_p: 0.0,
            repair_p: 0.0,
            sub_p: 0.0,
            ins_p: 0.0,
            del_p: 0.0,
            swap_p: 0.0,
            split_p: 0.0,
            ..NoiseConfig::default()
        }
    }

    fn probabilities(&self) -> [(&'static str, f64); 9] {
        [
            ("pause_p", self.pause_p),
            ("repetition_p", self.repetition_p),
            ("restart_p", self.restart_p),
            ("repair_p", self.repair_p),
            ("sub_p", self.sub_p),
            ("ins_p", self.ins_p),
            ("del_p", self.del_p),
            ("swap_p", self.swap_p),
            ("split_p", self.split_p),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.probabilities() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("noise config", format!("{name} = {p} is outside [0, 1]")));
            }
        }
        for pair in &self.confusion_pairs {
            if pair.iter().any(|c| !c.is_ascii_alphabetic()) {
                return Err(Error::invalid(
                    "noise config",
                    format!("confusion pair {:?} must be two ASCII letters", pair),
                ));
            }
        }
        if self.min_split_len < 2 {
            return Err(Error::invalid("noise config", "min_split_len must be at least 2"));
        }
        if self.pause_p > 0.0 && self.filler_words.is_empty() {
            return Err(Error::invalid("noise config", "pause_p > 0 needs filler_words"));
        }
        if self.restart_p > 0.0 && self.restart_prefixes.is_empty() {
            return Err(Error::invalid("noise config", "restart_p > 0 needs restart_prefixes"));
        }
        Ok(())
    }

    /// Partners of `c` (case-insensitive) in the confusion table.
    fn partners(&self, c: char) -> Vec<char> {
        let lower = c.to_ascii_lowercase();
        let mut out: Vec<char> = self
            .confusion_pairs
            .iter()
            .filter_map(|[a, b]| {
                let (a, b) = (a.to_ascii_lowercase(), b.to_ascii_lowercase());
                if a == lower {
                    Some(b)
                } else if b == lower {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn is_vowel(&self, c: char) -> bool {
        let lower = c.to_lowercase().next().unwrap_or(c);
        self.vowels.contains(lower)
    }
}

fn tokens(utterance: &str) -> Vec<&str> {
    utterance.split_whitespace().collect()
}

/// Inserts one filler at a uniform token boundary with probability `pause_p`.
pub fn pause<R: Rng + ?Sized>(utterance: &str, cfg: &NoiseConfig, rng: &mut R) -> String {
    if !rng.gen_bool(cfg.pause_p) {
        return utterance.to_string();
    }
    let Some(filler) = cfg.filler_words.choose(rng) else {
        return utterance.to_string();
    };
    let toks = tokens(utterance);
    let at = rng.gen_range(0..=toks.len());
    insert_tokens(&toks, at, filler)
}

fn insert_tokens(toks: &[&str], at: usize, inserted: &str) -> String {
    let mut out: Vec<&str> = Vec::with_capacity(toks.len() + 2);
    out.extend_from_slice(&toks[..at]);
    out.push(inserted);
    out.extend_from_slice(&toks[at..]);
    out.join(" ")
}

/// Duplicates a span of 1 to 3 tokens in place with probability `repetition_p`.
pub fn repetition<R: Rng + ?Sized>(utterance: &str, cfg: &NoiseConfig, rng: &mut R) -> String {
    if !rng.gen_bool(cfg.repetition_p) {
        return utterance.to_string();
    }
    let toks = tokens(utterance);
    if toks.is_empty() {
        return utterance.to_string();
    }
    let len = rng.gen_range(1..=toks.len().min(3));
    let start = rng.gen_range(0..=toks.len() - len);
    repeat_span(&toks, start, len)
}

fn repeat_span(toks: &[&str], start: usize, len: usize) -> String {
    let mut out: Vec<&str> = Vec::with_capacity(toks.len() + len);
    out.extend_from_slice(&toks[..start + len]);
    out.extend_from_slice(&toks[start..start + len]);
    out.extend_from_slice(&toks[start + len..]);
    out.join(" ")
}

/// Prepends a restart prefix with probability `restart_p`.
pub fn restart<R: Rng + ?Sized>(utterance: &str, cfg: &NoiseConfig, rng: &mut R) -> String {
    if !rng.gen_bool(cfg.restart_p) {
        return utterance.to_string();
    }
    match cfg.restart_prefixes.choose(rng) {
        Some(prefix) => format!("{prefix} {utterance}"),
        None => utterance.to_string(),
    }
}

/// With probability `repair_p`, picks one state value mentioned in the utterance and
/// rewrites it as "wrong, no wait, right". The wrong value comes from the ontology; slots
/// without an alternative are left alone.
pub fn repair<R: Rng + ?Sized>(
    utterance: &str,
    state: &DialogueState,
    ontology: &Ontology,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> String {
    if !rng.gen_bool(cfg.repair_p) {
        return utterance.to_string();
    }
    let candidates: Vec<(&str, &str, &str)> = state
        .iter()
        .filter(|(_, _, v)| !find_matches(utterance, &[*v]).is_empty())
        .collect();
    let Some(&(domain, slot, value)) = candidates.choose(rng) else {
        return utterance.to_string();
    };
    let alternatives: Vec<&String> = ontology
        .values(domain, slot)
        .unwrap_or_default()
        .iter()
        .filter(|w| w.to_lowercase() != value.to_lowercase())
        .collect();
    let Some(wrong) = alternatives.choose(rng) else {
        return utterance.to_string();
    };
    let spans = find_matches(utterance, &[value]);
    let span = spans.choose(rng).expect("matched above");
    let matched = &utterance[span.start..span.end];
    format!(
        "{}{}{} {}{}",
        &utterance[..span.start],
        mirror_case(matched, wrong),
        cfg.repair_marker,
        matched,
        &utterance[span.end..]
    )
}

/// Replaces one uniformly chosen confusable letter by a pair partner. Case is kept.
pub fn substitute<R: Rng + ?Sized>(word: &str, cfg: &NoiseConfig, rng: &mut R) -> String {
    let chars: Vec<char> = word.chars().collect();
    let positions: Vec<usize> = (0..chars.len())
        .filter(|&i| chars[i].is_ascii_alphabetic() && !cfg.partners(chars[i]).is_empty())
        .collect();
    let Some(&i) = positions.choose(rng) else {
        return word.to_string();
    };
    let partner = *cfg.partners(chars[i]).choose(rng).expect("non-empty");
    let mut out = chars;
    out[i] = if out[i].is_ascii_uppercase() {
        partner.to_ascii_uppercase()
    } else {
        partner
    };
    out.into_iter().collect()
}

/// Inserts one random lowercase letter at a uniform character position.
pub fn insert_letter<R: Rng + ?Sized>(utterance: &str, _cfg: &NoiseConfig, rng: &mut R) -> String {
    let n = utterance.chars().count();
    let at = rng.gen_range(0..=n);
    let letter = char::from(b'a' + rng.gen_range(0..26u8));
    let mut out = String::with_capacity(utterance.len() + 1);
    for (i, c) in utterance.chars().enumerate() {
        if i == at {
            out.push(letter);
        }
        out.push(c);
    }
    if at == n {
        out.push(letter);
    }
    out
}

/// Removes one character at a uniform position; single-character words are unchanged.
pub fn delete_letter<R: Rng + ?Sized>(word: &str, rng: &mut R) -> String {
    let n = word.chars().count();
    if n < 2 {
        return word.to_string();
    }
    let at = rng.gen_range(0..n);
    word.chars()
        .enumerate()
        .filter(|&(i, _)| i != at)
        .map(|(_, c)| c)
        .collect()
}

/// Transposes one uniformly chosen pair of adjacent vowels.
pub fn swap_vowels<R: Rng + ?Sized>(word: &str, cfg: &NoiseConfig, rng: &mut R) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let pairs: Vec<usize> = (1..chars.len())
        .filter(|&i| cfg.is_vowel(chars[i - 1]) && cfg.is_vowel(chars[i]))
        .collect();
    let Some(&i) = pairs.choose(rng) else {
        return word.to_string();
    };
    chars.swap(i - 1, i);
    chars.into_iter().collect()
}

/// Splits a long word at one interior boundary (two boundaries, with probability 0.3, for
/// words at least twice `min_split_len` long).
pub fn split_word<R: Rng + ?Sized>(word: &str, cfg: &NoiseConfig, rng: &mut R) -> String {
    let n = word.chars().count();
    if n < cfg.min_split_len {
        return word.to_string();
    }
    let mut cuts = if n >= 2 * cfg.min_split_len && rng.gen_bool(0.3) {
        rand::seq::index::sample(rng, n - 1, 2).into_iter().map(|i| i + 1).collect()
    } else {
        vec![rng.gen_range(1..n)]
    };
    cuts.sort_unstable();
    split_at(word, &cuts)
}

/// Inserts a space before each character index in `cuts` (sorted, interior).
pub fn split_at(word: &str, cuts: &[usize]) -> String {
    let mut out = String::with_capacity(word.len() + cuts.len());
    for (i, c) in word.chars().enumerate() {
        if cuts.contains(&i) {
            out.push(' ');
        }
        out.push(c);
    }
    out
}

/// How often each operator changed an utterance or word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    pub turns: usize,
    pub noised_turns: usize,
    pub pause: usize,
    pub repetition: usize,
    pub restart: usize,
    pub repair: usize,
    pub substitute: usize,
    pub insert: usize,
    pub delete: usize,
    pub swap: usize,
    pub split: usize,
}

impl NoiseCounts {
    pub fn add(&mut self, other: &NoiseCounts) {
        self.turns += other.turns;
        self.noised_turns += other.noised_turns;
        self.pause += other.pause;
        self.repetition += other.repetition;
        self.restart += other.restart;
        self.repair += other.repair;
        self.substitute += other.substitute;
        self.insert += other.insert;
        self.delete += other.delete;
        self.swap += other.swap;
        self.split += other.split;
    }
}

fn track(counter: &mut usize, before: &str, after: String) -> String {
    if before != after {
        *counter += 1;
    }
    after
}

/// Byte ranges of maximal alphabetic runs.
fn word_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphabetic(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

/// Applies the full operator chain to one utterance.
pub fn noise_utterance<R: Rng + ?Sized>(
    utterance: &str,
    state: Option<&DialogueState>,
    ontology: Option<&Ontology>,
    cfg: &NoiseConfig,
    rng: &mut R,
    counts: &mut NoiseCounts,
) -> String {
    let mut text = utterance.to_string();
    text = track(&mut counts.pause, &text, pause(&text, cfg, rng));
    text = track(&mut counts.repetition, &text, repetition(&text, cfg, rng));
    text = track(&mut counts.restart, &text, restart(&text, cfg, rng));
    if let (Some(state), Some(ontology)) = (state, ontology) {
        text = track(&mut counts.repair, &text, repair(&text, state, ontology, cfg, rng));
    }

    let ranges = word_ranges(&text);
    let mut rebuilt = String::with_capacity(text.len() + 8);
    let mut cursor = 0;
    for (s, e) in ranges {
        rebuilt.push_str(&text[cursor..s]);
        let mut word = text[s..e].to_string();
        if rng.gen_bool(cfg.sub_p) {
            word = track(&mut counts.substitute, &word.clone(), substitute(&word, cfg, rng));
        }
        if rng.gen_bool(cfg.del_p) {
            word = track(&mut counts.delete, &word.clone(), delete_letter(&word, rng));
        }
        if rng.gen_bool(cfg.swap_p) {
            word = track(&mut counts.swap, &word.clone(), swap_vowels(&word, cfg, rng));
        }
        if rng.gen_bool(cfg.split_p) {
            word = track(&mut counts.split, &word.clone(), split_word(&word, cfg, rng));
        }
        rebuilt.push_str(&word);
        cursor = e;
    }
    rebuilt.push_str(&text[cursor..]);
    text = rebuilt;

    if rng.gen_bool(cfg.ins_p) {
        text = track(&mut counts.insert, &text.clone(), insert_letter(&text, cfg, rng));
    }
    text
}

fn eligible(turn: &Turn, cfg: &NoiseConfig) -> bool {
    turn.speaker == Speaker::User || cfg.noise_system_turns
}

/// Noises one dialogue from its own random stream.
pub fn simulate_dialogue(
    dialogue: &Dialogue,
    ontology: Option<&Ontology>,
    cfg: &NoiseConfig,
    stream: &RngStream,
) -> (Dialogue, NoiseCounts) {
    let mut rng = stream.stream(STAGE, &dialogue.id);
    let mut counts = NoiseCounts::default();
    let mut out = dialogue.clone();
    for turn in &mut out.turns {
        if !eligible(turn, cfg) {
            continue;
        }
        counts.turns += 1;
        let noisy = noise_utterance(&turn.text, turn.state.as_ref(), ontology, cfg, &mut rng, &mut counts);
        if noisy != turn.text {
            counts.noised_turns += 1;
            turn.text = noisy;
        }
    }
    (out, counts)
}

/// Noises every eligible turn of the corpus. Output depends only on the inputs and the
/// master seed, not on the number of workers.
pub fn simulate_corpus(
    corpus: &[Dialogue],
    ontology: Option<&Ontology>,
    cfg: &NoiseConfig,
    stream: &RngStream,
) -> Result<(Vec<Dialogue>, NoiseCounts)> {
    cfg.validate()?;
    let results: Vec<(Dialogue, NoiseCounts)> = corpus
        .par_iter()
        .map(|d| simulate_dialogue(d, ontology, cfg, stream))
        .collect();
    let mut total = NoiseCounts::default();
    let mut out = Vec::with_capacity(results.len());
    for (d, c) in results {
        total.add(&c);
        out.push(d);
    }
    Ok((out, total))
}

/// Hands eligible utterances to an external program, one per line, and writes its output
/// lines back. The command runs under `sh -c` with `{in}` and `{out}` replaced by file
/// paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalNoiserAdapter {
    pub command: String,
}

impl ExternalNoiserAdapter {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalNoiserAdapter { command: command.into() }
    }

    /// Runs the command over `lines` and returns its output lines.
    pub fn run_lines(&self, lines: &[String]) -> Result<Vec<String>> {
        let dir = tempfile::tempdir().map_err(|e| Error::External(format!("temp dir: {e}")))?;
        let in_path = dir.path().join("in.txt");
        let out_path = dir.path().join("out.txt");
        {
            let mut f = std::fs::File::create(&in_path).map_err(|e| Error::io(&in_path, e))?;
            for line in lines {
                writeln!(f, "{}", line.replace(['\n', '\r'], " ")).map_err(|e| Error::io(&in_path, e))?;
            }
        }
        let cmd = self
            .command
            .replace("{in}", &shell_quote(&in_path.to_string_lossy()))
            .replace("{out}", &shell_quote(&out_path.to_string_lossy()));
        let status = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .status()
            .map_err(|e| Error::External(format!("could not start `{cmd}`: {e}")))?;
        if !status.success() {
            return Err(Error::External(format!("`{cmd}` exited with {status}")));
        }
        let raw = std::fs::read_to_string(&out_path).map_err(|e| Error::io(&out_path, e))?;
        let out: Vec<String> = raw.lines().map(str::to_string).collect();
        if out.len() != lines.len() {
            return Err(Error::External(format!(
                "external noiser returned {} lines for {} inputs",
                out.len(),
                lines.len()
            )));
        }
        Ok(out)
    }

    /// Replaces the text of every eligible turn with the program's output.
    pub fn apply(&self, corpus: &[Dialogue], cfg: &NoiseConfig) -> Result<Vec<Dialogue>> {
        let lines: Vec<String> = corpus
            .iter()
            .flat_map(|d| d.turns.iter().filter(|t| eligible(t, cfg)).map(|t| t.text.clone()))
            .collect();
        let noisy = self.run_lines(&lines)?;
        let mut it = noisy.into_iter();
        let mut out = corpus.to_vec();
        for d in &mut out {
            for t in d.turns.iter_mut().filter(|t| eligible(t, cfg)) {
                t.text = it.next().expect("line count checked");
            }
        }
        Ok(out)
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}
