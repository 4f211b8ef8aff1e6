mod common;

use std::collections::HashMap;

use common::prefix_dp_oracle;
use promptforge::env::synthetic::{CountRange, SyntheticConfig, SyntheticSuite, TaskKind};
use promptforge::env::{
    aggregate_reward, ordered_prefix_len, parse_dataset_jsonl, sample_slice, CallMeter,
    KeywordSpec, KeywordWorker, OrderedProtocolWorker, OrderedSpec, Split, TaskInstance, Worker,
};
use promptforge::policy::PromptSequence;
use promptforge::rng::rng_from_seed;
use promptforge::Error;
use proptest::prelude::*;
use rand::Rng;

const EOS: usize = 1;

fn prompt(content: &[usize]) -> PromptSequence {
    PromptSequence::from_content(content.to_vec(), EOS).unwrap()
}

fn instance(ctx: &str, i: usize, category: Option<&str>) -> TaskInstance {
    TaskInstance {
        context_id: ctx.into(),
        input: format!("x{i}"),
        target: format!("y{i}"),
        category: category.map(str::to_string),
    }
}

fn keyword_worker() -> KeywordWorker {
    // t1=20, t2=21 required, f1=22 forbidden, categories A→23, B→24.
    let spec = KeywordSpec {
        required: vec![20, 21],
        forbidden: vec![22],
        categories: vec![("A".into(), 23), ("B".into(), 24)],
    };
    KeywordWorker::new(HashMap::from([("k".to_string(), spec)]))
}

fn ordered_worker(seq: &[usize]) -> OrderedProtocolWorker {
    OrderedProtocolWorker::new(HashMap::from([(
        "o".to_string(),
        OrderedSpec {
            sequence: seq.to_vec(),
        },
    )]))
}

fn run(worker: &dyn Worker, p: &PromptSequence, inst: &TaskInstance) -> (bool, f64) {
    let out = worker.execute(p, inst).unwrap();
    let s = worker.score(&out, inst, p);
    (out.correct.unwrap(), s)
}

#[test]
fn keyword_rules() {
    let w = keyword_worker();
    let default = instance("k", 0, None);
    assert_eq!(run(&w, &prompt(&[20, 30, 21]), &default), (true, 1.0));
    assert_eq!(run(&w, &prompt(&[20]), &default), (false, 0.0));
    assert_eq!(run(&w, &prompt(&[20, 21, 22]), &default), (false, 0.0));
    assert_eq!(
        run(&w, &prompt(&[20, 21]), &instance("k", 1, Some("A"))),
        (false, 0.0)
    );
    assert_eq!(
        run(&w, &prompt(&[20, 21, 23]), &instance("k", 1, Some("A"))),
        (true, 1.0)
    );
}

#[test]
fn keyword_slice_enumeration() {
    let w = keyword_worker();
    let slice = vec![
        instance("k", 0, Some("A")),
        instance("k", 1, Some("A")),
        instance("k", 2, Some("B")),
        instance("k", 3, None),
    ];
    let p = prompt(&[20, 21, 23]);
    // Oracle: count instances whose category is default or unlocked by 23.
    let correct = slice
        .iter()
        .filter(|i| matches!(i.category.as_deref(), None | Some("A")))
        .count();
    let expected = correct as f64 / slice.len() as f64;
    let meter = CallMeter::new();
    let r = aggregate_reward(&w, &p, &slice, &meter).unwrap();
    assert_eq!(r, expected);
    assert_eq!(r, 0.75);
    assert_eq!(meter.get(), 4);
    assert!(aggregate_reward(&w, &p, &[], &meter).is_err());
}

#[test]
fn ordered_partial_credit() {
    let (a, b, c) = (20, 21, 22);
    let w = ordered_worker(&[a, b, c]);
    let inst = instance("o", 0, None);
    let (ok, s) = run(&w, &prompt(&[b, a, c]), &inst);
    assert!(!ok);
    assert_eq!(s, prefix_dp_oracle(&[a, b, c], &[b, a, c]) as f64 / 3.0);
    assert!((s - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(run(&w, &prompt(&[30, a, 31, b, c]), &inst), (true, 1.0));
    assert_eq!(run(&w, &prompt(&[]), &inst).1, 0.0);
}

#[test]
fn ordered_matches_dp_oracle_on_1000_prompts() {
    let mut rng = rng_from_seed(5);
    for _ in 0..1000 {
        let k = rng.gen_range(1..=5);
        let seq: Vec<usize> = (0..k).map(|_| rng.gen_range(0..6)).collect();
        let p: Vec<usize> = (0..rng.gen_range(0..12))
            .map(|_| rng.gen_range(0..6))
            .collect();
        assert_eq!(
            ordered_prefix_len(&seq, &p),
            prefix_dp_oracle(&seq, &p),
            "{seq:?} in {p:?}"
        );
    }
}

#[test]
fn slices() {
    let suite = SyntheticSuite::generate(&SyntheticConfig::default()).unwrap();
    let splits = &suite.tasks.splits;
    let a = sample_slice(splits, "task0", Split::Train, 16, 3).unwrap();
    let b = sample_slice(splits, "task0", Split::Train, 16, 3).unwrap();
    assert_eq!(a, b);
    let whole = sample_slice(splits, "task0", Split::Validation, 32, 1).unwrap();
    let mut got: Vec<_> = whole.iter().map(|i| i.input.clone()).collect();
    let mut want: Vec<_> = splits
        .split("task0", Split::Validation)
        .unwrap()
        .iter()
        .map(|i| i.input.clone())
        .collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
    assert!(sample_slice(splits, "task0", Split::Train, 0, 1).is_err());
    assert!(sample_slice(splits, "task0", Split::Train, 65, 1).is_err());
}

fn suites() -> Vec<SyntheticSuite> {
    let mut out = Vec::new();
    for seed in 0..6 {
        for kind in [TaskKind::Keyword, TaskKind::Ordered] {
            let cfg = SyntheticConfig {
                kind,
                contexts: 4,
                describe_contexts: true,
                seed,
                ..Default::default()
            };
            out.push(SyntheticSuite::generate(&cfg).unwrap());
        }
    }
    out
}

#[test]
fn optimal_prompts_score_one_on_every_split() {
    for suite in suites() {
        let worker = suite.worker();
        let meter = CallMeter::new();
        for ctx in &suite.tasks.contexts {
            let best = suite.optimal_prompt(&ctx.context_id).unwrap();
            for split in [Split::Train, Split::Validation, Split::Test] {
                let data = suite.tasks.splits.split(&ctx.context_id, split).unwrap();
                assert_eq!(
                    aggregate_reward(worker.as_ref(), best, data, &meter).unwrap(),
                    1.0
                );
            }
        }
    }
}

#[test]
fn generator_respects_ranges_and_is_seeded() {
    let cfg = SyntheticConfig {
        contexts: 5,
        required: CountRange::exactly(3),
        forbidden: CountRange::exactly(1),
        ..Default::default()
    };
    let a = SyntheticSuite::generate(&cfg).unwrap();
    let b = SyntheticSuite::generate(&cfg).unwrap();
    assert_eq!(a.tasks.contexts, b.tasks.contexts);
    let w = a.keyword_worker();
    for ctx in &a.tasks.contexts {
        let spec = w.spec(&ctx.context_id).unwrap();
        assert_eq!(spec.required.len(), 3);
        assert_eq!(spec.forbidden.len(), 1);
        assert!(spec.categories.len() <= 2);
        assert!(ctx.description_tokens.is_empty());
    }
    let bad = SyntheticConfig {
        contexts: 0,
        ..Default::default()
    };
    assert!(matches!(
        SyntheticSuite::generate(&bad),
        Err(Error::Config { .. })
    ));
}

#[test]
fn dataset_parsing() {
    let ok = concat!(
        r#"{"context_id":"a","input":"1","target":"x","split":"train"}"#,
        "\n",
        r#"{"context_id":"a","input":"2","target":"y","split":"validation","category":"c"}"#,
        "\n",
        r#"{"context_id":"a","input":"3","target":"z","split":"test"}"#,
        "\n",
    );
    let d = parse_dataset_jsonl(ok).unwrap();
    assert_eq!(
        d.split("a", Split::Validation).unwrap()[0]
            .category
            .as_deref(),
        Some("c")
    );

    let missing = concat!(
        r#"{"context_id":"a","input":"1","target":"x","split":"train"}"#,
        "\n",
        r#"{"context_id":"a","input":"2","split":"test"}"#,
        "\n",
    );
    assert!(matches!(
        parse_dataset_jsonl(missing),
        Err(Error::Dataset { line: 2, .. })
    ));

    let overlap = concat!(
        r#"{"context_id":"a","input":"1","target":"x","split":"train"}"#,
        "\n",
        r#"{"context_id":"a","input":"1","target":"x","split":"test"}"#,
        "\n",
    );
    assert!(matches!(
        parse_dataset_jsonl(overlap),
        Err(Error::Dataset { line: 2, .. })
    ));

    let empty_split = r#"{"context_id":"a","input":"1","target":"x","split":"train"}"#;
    assert!(matches!(
        parse_dataset_jsonl(empty_split),
        Err(Error::Dataset { line: 1, .. })
    ));
}

proptest! {
    #[test]
    fn adding_helpful_tokens_never_hurts(
        base in proptest::collection::vec(20usize..30, 0..8),
        extra in prop_oneof![Just(20usize), Just(21usize), Just(23usize), Just(24usize)],
        cats in proptest::collection::vec(prop_oneof![Just(None), Just(Some("A")), Just(Some("B"))], 1..6),
    ) {
        let w = keyword_worker();
        let slice: Vec<_> = cats.iter().enumerate().map(|(i, c)| instance("k", i, *c)).collect();
        let meter = CallMeter::new();
        let before = aggregate_reward(&w, &prompt(&base), &slice, &meter).unwrap();
        let mut more = base.clone();
        more.push(extra);
        let after = aggregate_reward(&w, &prompt(&more), &slice, &meter).unwrap();
        prop_assert!(after >= before);
        prop_assert!((0.0..=1.0).contains(&before));
    }
}
