use std::collections::HashSet;

use proptest::prelude::*;
use tp_transformer::data::{
    generate_dataset, generate_excluding, make_batches, oracle, read_jsonl, write_jsonl, Module,
    Sample, Vocabulary, EOS, PAD, SOS,
};
use tp_transformer::model::ModelConfig;
use tp_transformer::Error;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn numbers(s: &str) -> Vec<i64> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_ascii_digit() || (c == '-' && cur.is_empty()) {
            cur.push(c);
        } else if !cur.is_empty() {
            if cur != "-" {
                out.push(cur.parse().unwrap());
            }
            cur.clear();
        }
    }
    out
}

/// Answers a generated question by pattern, independently of the library's
/// evaluator.
fn expected(module: Module, q: &str) -> String {
    let n = numbers(q);
    match module {
        Module::AddSub if q.contains(" + ") => (n[0] + n[1]).to_string(),
        Module::AddSub => (n[0] - n[1]).to_string(),
        Module::Multiply => (n[0] * n[1]).to_string(),
        Module::Compare => {
            let pick = if q.contains("bigger") {
                n[0].max(n[1])
            } else {
                n[0].min(n[1])
            };
            pick.to_string()
        }
        Module::NestedFraction => {
            let (a, b, c, d) = (n[0], n[1], n[2], n[3]);
            let (num, den) = if q.contains(")/(") {
                (a * d, b * c)
            } else {
                (a * c, b * d)
            };
            let g = gcd(num, den);
            let (num, den) = (num / g, den / g);
            if den == 1 {
                num.to_string()
            } else {
                format!("{num}/{den}")
            }
        }
    }
}

#[test]
fn every_module_answers_match_pattern_arithmetic() {
    for module in Module::ALL {
        for s in generate_dataset(module.name(), 500, 11).unwrap() {
            assert_eq!(s.answer, expected(module, &s.question), "{s:?}");
            assert_eq!(s.module, module.name());
        }
    }
}

#[test]
fn oracle_examples() {
    assert_eq!(oracle::answer("Calculate 2 + 3.").as_deref(), Some("5"));
    assert_eq!(
        oracle::answer("Calculate (2/4)/(3/6).").as_deref(),
        Some("1")
    );
    assert_eq!(
        oracle::answer("Which is bigger: 3 or 7?").as_deref(),
        Some("7")
    );
    assert_eq!(
        oracle::answer("Calculate (1/3)*(6/5).").as_deref(),
        Some("2/5")
    );
    assert_eq!(oracle::answer("What is -4*7?").as_deref(), Some("-28"));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate_dataset("nested_fraction", 200, 5).unwrap();
    assert_eq!(a, generate_dataset("nested_fraction", 200, 5).unwrap());
    assert_ne!(a, generate_dataset("nested_fraction", 200, 6).unwrap());
}

#[test]
fn unknown_module_is_a_config_error() {
    assert!(matches!(
        generate_dataset("calculus", 3, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn held_out_questions_avoid_the_excluded_set() {
    let train = generate_dataset("add_sub", 2000, 1).unwrap();
    let seen: HashSet<String> = train.iter().map(|s| s.question.clone()).collect();
    let held = generate_excluding("add_sub", 300, 2, &seen).unwrap();
    assert_eq!(held.len(), 300);
    assert!(held.iter().all(|s| !seen.contains(&s.question)));
}

#[test]
fn vocabulary_enumerates_specials_then_sorted_chars() {
    let v = Vocabulary::from_texts(["ab", "ba"]);
    assert_eq!(v.len(), 5);
    assert_eq!((v.id('a'), v.id('b')), (Some(3), Some(4)));
    assert_eq!(v.symbol(PAD).as_deref(), Some("<pad>"));
    assert_eq!(v.symbol(SOS).as_deref(), Some("<sos>"));
    assert_eq!(v.symbol(EOS).as_deref(), Some("<eos>"));
}

#[test]
fn vocabulary_is_stable_across_regeneration() {
    let build = || {
        let mut all = Vec::new();
        for m in Module::ALL {
            all.extend(generate_dataset(m.name(), 300, 9).unwrap());
        }
        Vocabulary::build(&all).unwrap()
    };
    let (a, b) = (build(), build());
    assert_eq!(a, b);
    assert!(a.chars().windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn generated_questions_round_trip() {
    let samples = generate_dataset("nested_fraction", 500, 3)
        .unwrap()
        .into_iter()
        .chain(generate_dataset("compare", 500, 3).unwrap())
        .collect::<Vec<_>>();
    let vocab = Vocabulary::build(&samples).unwrap();
    for s in &samples {
        assert_eq!(
            vocab.decode(&vocab.encode(&s.question).unwrap()).unwrap(),
            s.question
        );
        assert_eq!(
            vocab.decode(&vocab.encode(&s.answer).unwrap()).unwrap(),
            s.answer
        );
    }
}

#[test]
fn decode_examples() {
    let v = Vocabulary::from_texts(["0123456789"]);
    assert_eq!(v.encode("").unwrap(), vec![EOS]);
    assert_eq!(v.decode(&[EOS]).unwrap(), "");
    let (five, nine) = (v.id('5').unwrap(), v.id('9').unwrap());
    assert_eq!(v.decode(&[SOS, five, EOS, nine]).unwrap(), "5");
    match v.encode("5x") {
        Err(Error::Vocabulary(msg)) => assert!(msg.contains('x'), "{msg}"),
        other => panic!("expected a vocabulary error, got {other:?}"),
    }
}

#[test]
fn single_answer_shift() {
    let s = Sample {
        question: "Calculate 2 + 3.".into(),
        answer: "5".into(),
        module: "add_sub".into(),
    };
    let vocab = Vocabulary::build(std::slice::from_ref(&s)).unwrap();
    let b = &make_batches(&[s], &vocab, 4, &ModelConfig::desk(vocab.len()), None).unwrap()[0];
    let five = vocab.id('5').unwrap();
    assert_eq!(b.tgt_in.ids, vec![SOS, five]);
    assert_eq!(b.tgt_out, vec![five, EOS]);
}

#[test]
fn over_length_sample_names_its_index() {
    let mut samples = generate_dataset("add_sub", 3, 0).unwrap();
    samples[2].question = "9".repeat(100);
    let vocab = Vocabulary::build(&samples).unwrap();
    match make_batches(&samples, &vocab, 2, &ModelConfig::desk(vocab.len()), None) {
        Err(Error::Length(msg)) => assert!(msg.contains("sample 2"), "{msg}"),
        other => panic!("expected a length error, got {other:?}"),
    }
}

#[test]
fn batches_are_right_padded_with_consistent_masks() {
    let samples = generate_dataset("nested_fraction", 203, 4).unwrap();
    let vocab = Vocabulary::build(&samples).unwrap();
    let cfg = ModelConfig::desk(vocab.len());
    let batches = make_batches(&samples, &vocab, 16, &cfg, Some(8)).unwrap();
    assert_eq!(batches.len(), 13);
    assert_eq!(
        batches,
        make_batches(&samples, &vocab, 16, &cfg, Some(8)).unwrap()
    );
    let mut answer_tokens = 0;
    for b in &batches {
        let (n, ts, tt) = (b.size(), b.src.len, b.tgt_in.len);
        assert_eq!((b.src.ids.len(), b.src_mask.len()), (n * ts, n * ts));
        assert_eq!((b.tgt_out.len(), b.loss_mask.len()), (n * tt, n * tt));
        for r in 0..n {
            let src = &b.src.ids[r * ts..(r + 1) * ts];
            let first_pad = src.iter().position(|&id| id == PAD).unwrap_or(ts);
            assert!(src[first_pad..].iter().all(|&id| id == PAD));
            let tin = &b.tgt_in.ids[r * tt..(r + 1) * tt];
            let tout = &b.tgt_out[r * tt..(r + 1) * tt];
            let len = b.tgt_in.lengths[r];
            assert_eq!(tin[0], SOS);
            assert_eq!(&tin[1..len], &tout[..len - 1]);
            assert_eq!(tout[len - 1], EOS);
            for j in 0..tt {
                assert_eq!(b.loss_mask[r * tt + j], tout[j] != PAD);
                assert_eq!(
                    b.src_mask[r * ts + j.min(ts - 1)],
                    src[j.min(ts - 1)] != PAD
                );
            }
        }
        answer_tokens += b.loss_mask.iter().filter(|&&m| m).count();
    }
    let expect: usize = samples.iter().map(|s| s.answer.chars().count() + 1).sum();
    assert_eq!(answer_tokens, expect);
}

#[test]
fn jsonl_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.jsonl");
    let samples = generate_dataset("compare", 100, 2).unwrap();
    write_jsonl(&path, &samples).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), samples);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 100);
}

#[test]
fn empty_jsonl_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert!(read_jsonl(&path).unwrap().is_empty());
}

#[test]
fn missing_answer_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(
        &path,
        "{\"question\":\"What is 1 + 1?\",\"answer\":\"2\",\"module\":\"add_sub\"}\n\
         {\"question\":\"What is 1 + 2?\",\"answer\":\"3\",\"module\":\"add_sub\"}\n\
         {\"question\":\"What is 1 + 3?\",\"module\":\"add_sub\"}\n",
    )
    .unwrap();
    assert!(matches!(
        read_jsonl(&path),
        Err(Error::Parse { line: 3, .. })
    ));
}

proptest! {
    #[test]
    fn in_vocabulary_text_round_trips(s in "[0-9+*/() .?-]{0,40}") {
        let v = Vocabulary::from_texts(["0123456789+-*/() .?"]);
        prop_assert_eq!(v.decode(&v.encode(&s).unwrap()).unwrap(), s);
    }
}
