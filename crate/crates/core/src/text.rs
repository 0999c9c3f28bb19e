//! Surface matching shared by the enrichment, extraction, repair and mention-detection code.
//!
//! Matching is whole-word and case-insensitive. When candidate occurrences overlap, the
//! longest one wins and ties go to the earliest start.

/// A matched span inside a text. Offsets are byte offsets into the searched string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    /// Index of the candidate that matched.
    pub candidate: usize,
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// Finds non-overlapping whole-word occurrences of `candidates` in `text`, sorted by start.
pub fn find_matches<S: AsRef<str>>(text: &str, candidates: &[S]) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let folded: Vec<char> = chars.iter().map(|&(_, c)| fold(c)).collect();

    // (start char, length in chars, candidate)
    let mut found: Vec<(usize, usize, usize)> = Vec::new();
    for (ci, cand) in candidates.iter().enumerate() {
        let needle: Vec<char> = cand.as_ref().chars().map(fold).collect();
        if needle.is_empty() || needle.len() > folded.len() {
            continue;
        }
        for start in 0..=folded.len() - needle.len() {
            let end = start + needle.len();
            if folded[start..end] != needle[..] {
                continue;
            }
            let left_ok = start == 0 || !is_word_char(chars[start - 1].1) || !is_word_char(chars[start].1);
            let right_ok =
                end == chars.len() || !is_word_char(chars[end].1) || !is_word_char(chars[end - 1].1);
            if left_ok && right_ok {
                found.push((start, needle.len(), ci));
            }
        }
    }

    found.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    let mut taken = vec![false; chars.len()];
    let mut spans = Vec::new();
    for (start, len, candidate) in found {
        if taken[start..start + len].iter().any(|t| *t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        let end = start + len;
        spans.push(Span {
            start: chars[start].0,
            end: if end == chars.len() { text.len() } else { chars[end].0 },
            candidate,
        });
    }
    spans.sort_by_key(|s| s.start);
    spans
}

/// True when `value` occurs as a whole word (case-insensitively) somewhere in `text`.
pub fn contains_word(text: &str, value: &str) -> bool {
    !find_matches(text, &[value]).is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Casing {
    AsIs,
    Title,
    Upper,
}

fn casing_of(span: &str) -> Casing {
    let letters: Vec<char> = span.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() || letters.iter().all(|c| c.is_lowercase()) {
        return Casing::AsIs;
    }
    if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        return Casing::Upper;
    }
    let title = span
        .split_whitespace()
        .filter_map(|w| w.chars().find(|c| c.is_alphabetic()))
        .all(|c| c.is_uppercase());
    if title {
        Casing::Title
    } else {
        Casing::AsIs
    }
}

fn title_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut at_word_start = true;
    for c in s.chars() {
        if c.is_whitespace() {
            at_word_start = true;
            out.push(c);
        } else if at_word_start && c.is_alphabetic() {
            out.extend(c.to_uppercase());
            at_word_start = false;
        } else {
            out.push(c);
            if c.is_alphanumeric() {
                at_word_start = false;
            }
        }
    }
    out
}

/// Renders `replacement` in the casing style of the matched `span`:
/// all-lowercase spans keep the replacement as-is, Title Case spans title-case it and
/// ALL-CAPS spans upper-case it.
pub fn mirror_case(span: &str, replacement: &str) -> String {
    match casing_of(span) {
        Casing::AsIs => replacement.to_string(),
        Casing::Title => title_case(replacement),
        Casing::Upper => replacement.to_uppercase(),
    }
}

/// Replaces each span (sorted, non-overlapping) by the string returned from `render`.
/// Bytes outside the spans are copied unchanged.
pub fn splice(text: &str, spans: &[Span], mut render: impl FnMut(&Span, &str) -> String) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut cursor = 0;
    for span in spans {
        out.push_str(&text[cursor..span.start]);
        out.push_str(&render(span, &text[span.start..span.end]));
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Joins phrases as "a", "a and b", "a, b and c".
pub fn join_with_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}
