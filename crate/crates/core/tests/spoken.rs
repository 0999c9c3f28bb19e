mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tod_augment::corpus::{parse_ontology, write_corpus};
use tod_augment::spoken::{
    delete_letter, insert_letter, pause, repair, repetition, restart, simulate_corpus, split_at, split_word,
    substitute, swap_vowels, ExternalNoiserAdapter, NoiseConfig,
};
use tod_augment::RngStream;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn with(f: impl FnOnce(&mut NoiseConfig)) -> NoiseConfig {
    let mut cfg = NoiseConfig::silent();
    f(&mut cfg);
    cfg
}

fn random_word(r: &mut ChaCha8Rng) -> String {
    let n = r.gen_range(1..=14);
    (0..n)
        .map(|_| {
            let c = char::from(b'a' + r.gen_range(0..26u8));
            if r.gen_bool(0.1) {
                c.to_ascii_uppercase()
            } else {
                c
            }
        })
        .collect()
}

fn random_utterance(r: &mut ChaCha8Rng) -> String {
    let n = r.gen_range(1..=10);
    (0..n).map(|_| random_word(r)).collect::<Vec<_>>().join(" ")
}

/// Searches seeds until `op` yields `want`.
fn reachable(want: &str, mut op: impl FnMut(&mut ChaCha8Rng) -> String) -> bool {
    (0..2000).any(|seed| op(&mut rng(seed)) == want)
}

#[test]
fn pause_example_is_reachable() {
    let cfg = with(|c| {
        c.pause_p = 1.0;
        c.filler_words = vec!["uh".into()];
    });
    assert!(reachable("book uh a table", |r| pause("book a table", &cfg, r)));
}

#[test]
fn pause_rate_matches_probability() {
    let cfg = with(|c| c.pause_p = 0.3);
    let mut r = rng(300);
    let hits = (0..10_000).filter(|_| pause("book a table", &cfg, &mut r) != "book a table").count();
    let rate = hits as f64 / 10_000.0;
    assert!((rate - 0.3).abs() <= 0.02, "rate {rate}");
}

#[test]
fn repetition_example() {
    let cfg = with(|c| c.repetition_p = 1.0);
    assert!(reachable("cheap cheap hotel", |r| repetition("cheap hotel", &cfg, r)));
    assert!(reachable("cheap hotel cheap hotel", |r| repetition("cheap hotel", &cfg, r)));
}

#[test]
fn restart_example() {
    let cfg = with(|c| c.restart_p = 1.0);
    assert!(reachable("I mean, find me a museum", |r| restart("find me a museum", &cfg, r)));
}

#[test]
fn repair_example() {
    let ontology = parse_ontology(br#"{"restaurant":{"food":["italian","chinese"]}}"#).unwrap();
    let cfg = with(|c| c.repair_p = 1.0);
    let s = state(&[("restaurant", "food", "italian")]);
    let mut r = rng(0);
    assert_eq!(
        repair("I want italian food", &s, &ontology, &cfg, &mut r),
        "I want chinese, no wait, italian food"
    );
    assert_eq!(repair("Something else entirely", &s, &ontology, &cfg, &mut r), "Something else entirely");
    let lonely = parse_ontology(br#"{"restaurant":{"food":["italian"]}}"#).unwrap();
    assert_eq!(repair("I want italian food", &s, &lonely, &cfg, &mut r), "I want italian food");
}

#[test]
fn substitute_examples() {
    let bp = with(|c| c.confusion_pairs = vec![['b', 'p']]);
    assert_eq!(substitute("book", &bp, &mut rng(0)), "pook");
    assert_eq!(substitute("aaa", &NoiseConfig::default(), &mut rng(0)), "aaa");
}

#[test]
fn insert_into_empty_gives_one_letter() {
    let out = insert_letter("", &NoiseConfig::default(), &mut rng(5));
    assert_eq!(out.chars().count(), 1);
    assert!(out.chars().all(|c| c.is_ascii_lowercase()));
}

#[test]
fn delete_examples() {
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..50 {
        seen.insert(delete_letter("to", &mut rng(seed)));
    }
    assert_eq!(seen, ["o", "t"].map(String::from).into_iter().collect());
    assert_eq!(delete_letter("a", &mut rng(0)), "a");
}

#[test]
fn deletion_positions_are_uniform() {
    let word = "abcdefghij";
    let mut counts = [0usize; 10];
    let mut r = rng(100);
    for _ in 0..100_000 {
        let out = delete_letter(word, &mut r);
        let missing = word.chars().position(|c| !out.contains(c)).unwrap();
        counts[missing] += 1;
    }
    for c in counts {
        let share = c as f64 / 100_000.0;
        assert!((share - 0.1).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn swap_examples() {
    let cfg = NoiseConfig::default();
    assert_eq!(swap_vowels("rain", &cfg, &mut rng(0)), "rian");
    assert_eq!(swap_vowels("rhythm", &cfg, &mut rng(0)), "rhythm");
}

#[test]
fn split_examples() {
    let cfg = NoiseConfig::default();
    assert_eq!(split_at("restaurant", &[6]), "restau rant");
    assert_eq!(split_at("moderately", &[4]), "mode rately");
    assert!(reachable("restau rant", |r| split_word("restaurant", &cfg, r)));
    assert!(reachable("mode rately", |r| split_word("moderately", &cfg, r)));
    assert_eq!(split_word("cafe", &cfg, &mut rng(0)), "cafe");
}

#[test]
fn operator_laws_hold_over_a_sweep() {
    let cfg = with(|c| {
        c.pause_p = 1.0;
        c.repetition_p = 1.0;
        c.restart_p = 1.0;
    });
    let mut r = rng(42);
    for _ in 0..10_000 {
        let u = random_utterance(&mut r);
        let w = random_word(&mut r);
        assert!(laws::pause(&u, &pause(&u, &cfg, &mut r), &cfg.filler_words));
        assert!(laws::repetition(&u, &repetition(&u, &cfg, &mut r)));
        assert!(laws::restart(&u, &restart(&u, &cfg, &mut r), &cfg.restart_prefixes));
        assert!(laws::substitute(&w, &substitute(&w, &cfg, &mut r), &cfg.confusion_pairs));
        assert!(laws::insert(&u, &insert_letter(&u, &cfg, &mut r)));
        assert!(laws::delete(&w, &delete_letter(&w, &mut r)));
        assert!(laws::swap(&w, &swap_vowels(&w, &cfg, &mut r), &cfg.vowels));
        assert!(laws::split(&w, &split_word(&w, &cfg, &mut r), cfg.min_split_len));
    }
}

#[test]
fn zero_config_leaves_corpus_byte_identical() {
    let corpus = seed_corpus();
    let (out, counts) = simulate_corpus(&corpus, Some(&ontology()), &NoiseConfig::silent(), &RngStream::new(1)).unwrap();
    assert_eq!(write_corpus(&out), write_corpus(&corpus));
    assert_eq!(counts.noised_turns, 0);
}

#[test]
fn same_seed_same_noise() {
    let corpus = seed_corpus();
    let cfg = NoiseConfig::default();
    let a = simulate_corpus(&corpus, Some(&ontology()), &cfg, &RngStream::new(5)).unwrap();
    let b = simulate_corpus(&corpus, Some(&ontology()), &cfg, &RngStream::new(5)).unwrap();
    assert_eq!(write_corpus(&a.0), write_corpus(&b.0));
    assert_eq!(a.1, b.1);
}

#[test]
fn system_turns_are_noised_only_on_request() {
    let corpus = seed_corpus();
    let loud = with(|c| c.restart_p = 1.0);
    let (out, _) = simulate_corpus(&corpus, None, &loud, &RngStream::new(0)).unwrap();
    for (a, b) in corpus.iter().zip(&out) {
        for (x, y) in a.turns.iter().zip(&b.turns) {
            assert_eq!(x.is_user(), x.text != y.text);
        }
    }
    let all = NoiseConfig {
        noise_system_turns: true,
        ..loud
    };
    let (out, counts) = simulate_corpus(&corpus, None, &all, &RngStream::new(0)).unwrap();
    assert!(out.iter().flat_map(|d| &d.turns).all(|t| !t.is_user() || !t.text.is_empty()));
    assert_eq!(counts.turns, corpus.iter().map(|d| d.turns.len()).sum::<usize>());
}

#[test]
fn external_noiser_round_trip() {
    let corpus = seed_corpus();
    let cfg = NoiseConfig::default();
    let upper = ExternalNoiserAdapter::new("tr a-z A-Z < {in} > {out}");
    let out = upper.apply(&corpus, &cfg).unwrap();
    for (a, b) in corpus.iter().zip(&out) {
        for (x, y) in a.turns.iter().zip(&b.turns) {
            assert_eq!(x.state, y.state);
            assert_eq!(x.acts, y.acts);
            if x.is_user() {
                assert_eq!(y.text, x.text.to_uppercase());
            } else {
                assert_eq!(y.text, x.text);
            }
        }
    }
    let short = ExternalNoiserAdapter::new("head -n 1 {in} > {out}");
    assert!(short.apply(&corpus, &cfg).is_err());
    let failing = ExternalNoiserAdapter::new("exit 3");
    assert!(failing.apply(&corpus, &cfg).is_err());
}

fn arb_config() -> impl Strategy<Value = NoiseConfig> {
    prop::array::uniform9(0.0f64..=1.0).prop_map(|p| NoiseConfig {
        pause_p: p[0],
        repetition_p: p[1],
        restart_p: p[2],
        repair_p: p[3],
        sub_p: p[4],
        ins_p: p[5],
        del_p: p[6],
        swap_p: p[7],
        split_p: p[8],
        noise_system_turns: p[0] > 0.5,
        ..NoiseConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn annotations_never_change(cfg in arb_config(), seed in any::<u64>()) {
        let corpus = seed_corpus();
        let (out, _) = simulate_corpus(&corpus, Some(&ontology()), &cfg, &RngStream::new(seed)).unwrap();
        prop_assert_eq!(out.len(), corpus.len());
        for (a, b) in corpus.iter().zip(&out) {
            prop_assert_eq!(&a.id, &b.id);
            for (x, y) in a.turns.iter().zip(&b.turns) {
                prop_assert_eq!(&x.state, &y.state);
                prop_assert_eq!(&x.acts, &y.acts);
                prop_assert_eq!(&x.knowledge_ref, &y.knowledge_ref);
                prop_assert_eq!(&x.seeks_knowledge, &y.seeks_knowledge);
            }
        }
    }
}

proptest! {
    #[test]
    fn insertion_law(u in "[ -~]{0,30}", seed in any::<u64>()) {
        let out = insert_letter(&u, &NoiseConfig::default(), &mut rng(seed));
        prop_assert!(laws::insert(&u, &out));
    }

    #[test]
    fn split_law(w in "[a-zA-Z]{1,20}", seed in any::<u64>(), min in 2usize..8) {
        let cfg = NoiseConfig { min_split_len: min, ..NoiseConfig::default() };
        prop_assert!(laws::split(&w, &split_word(&w, &cfg, &mut rng(seed)), min));
    }

    #[test]
    fn swap_keeps_the_multiset(w in "[a-zA-Z]{0,16}", seed in any::<u64>()) {
        let cfg = NoiseConfig::default();
        prop_assert!(laws::swap(&w, &swap_vowels(&w, &cfg, &mut rng(seed)), &cfg.vowels));
    }
}
