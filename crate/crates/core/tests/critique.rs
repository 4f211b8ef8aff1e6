use std::collections::{HashMap, HashSet};

use promptforge::critique::{generate_critiques, Critic, Feedback, Hint, RuleCritic};
use promptforge::env::synthetic::{SyntheticConfig, SyntheticSuite, TaskKind};
use promptforge::env::{
    evaluate_grid, CallMeter, HiddenSpec, KeywordSpec, OrderedSpec, Split, TaskInstance,
    WorkerOutput,
};
use promptforge::policy::PromptSequence;

const EOS: usize = 1;

fn prompt(content: &[usize]) -> PromptSequence {
    PromptSequence::from_content(content.to_vec(), EOS).unwrap()
}

fn inst(ctx: &str, category: Option<&str>) -> TaskInstance {
    TaskInstance {
        context_id: ctx.into(),
        input: "x".into(),
        target: "y".into(),
        category: category.map(Into::into),
    }
}

fn keyword_critic() -> RuleCritic {
    let spec = KeywordSpec {
        required: vec![20, 21],
        forbidden: vec![25],
        categories: vec![("A".into(), 23)],
    };
    RuleCritic::new(HashMap::from([(
        "k".to_string(),
        HiddenSpec::Keyword(spec),
    )]))
}

#[test]
fn priority_rules() {
    let c = keyword_critic();
    let i = inst("k", None);
    assert_eq!(c.hint(&prompt(&[30]), &i).unwrap(), Some(Hint::Missing(20)));
    assert_eq!(
        c.hint(&prompt(&[25, 21]), &i).unwrap(),
        Some(Hint::Missing(20))
    );
    assert_eq!(
        c.hint(&prompt(&[20, 25, 21]), &i).unwrap(),
        Some(Hint::Forbidden(25))
    );
    assert_eq!(
        c.hint(&prompt(&[20, 21]), &inst("k", Some("A"))).unwrap(),
        Some(Hint::Missing(23))
    );
    assert_eq!(c.hint(&prompt(&[20, 21]), &i).unwrap(), None);
}

#[test]
fn order_hint_names_first_gap() {
    let c = RuleCritic::new(HashMap::from([(
        "o".to_string(),
        HiddenSpec::Ordered(OrderedSpec {
            sequence: vec![20, 21, 22],
        }),
    )]));
    let h = c
        .hint(&prompt(&[21, 20, 30, 22]), &inst("o", None))
        .unwrap();
    assert_eq!(
        h,
        Some(Hint::Order {
            position: 1,
            token: 21,
            anchor: Some(1)
        })
    );
    let h = c.hint(&prompt(&[30]), &inst("o", None)).unwrap();
    assert_eq!(
        h,
        Some(Hint::Order {
            position: 0,
            token: 20,
            anchor: None
        })
    );
}

#[test]
fn only_failures_are_critiqued_up_to_k() {
    let suite = SyntheticSuite::generate(&SyntheticConfig {
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let worker = suite.worker();
    let critic = suite.critic();
    let slice = suite.tasks.splits.split("task0", Split::Train).unwrap();
    let meter = CallMeter::new();

    let bad = prompt(&[]);
    let grid = evaluate_grid(worker.as_ref(), &[&bad], slice, &meter).unwrap();
    let set = generate_critiques(&critic, &bad, slice, &grid[0], 2).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(
        set.entries
            .iter()
            .map(|e| e.instance_ref)
            .collect::<Vec<_>>(),
        vec![0, 1]
    );

    let best = suite.optimal_prompt("task0").unwrap();
    let grid = evaluate_grid(worker.as_ref(), &[best], slice, &meter).unwrap();
    assert!(generate_critiques(&critic, best, slice, &grid[0], 2)
        .unwrap()
        .is_empty());

    let again = generate_critiques(
        &critic,
        &bad,
        slice,
        &evaluate_grid(worker.as_ref(), &[&bad], slice, &meter).unwrap()[0],
        2,
    )
    .unwrap();
    assert_eq!(again, set);
}

/// Oracle editor: repeatedly applies every hint the critic gives on the full
/// train split until the prompt is perfect.
fn hint_closure(suite: &SyntheticSuite, ctx: &str) -> (f64, usize) {
    let worker = suite.worker();
    let critic = suite.critic();
    let slice = suite.tasks.splits.split(ctx, Split::Train).unwrap();
    let meter = CallMeter::new();
    let mut content: Vec<usize> = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..64 {
        let p = prompt(&content);
        let grid = evaluate_grid(worker.as_ref(), &[&p], slice, &meter).unwrap();
        let set = generate_critiques(&critic, &p, slice, &grid[0], slice.len()).unwrap();
        let Some(h) = set.hints().next() else {
            break;
        };
        seen.insert(h.token());
        match h {
            Hint::Missing(t) => content.push(t),
            Hint::Forbidden(t) => content.retain(|&x| x != t),
            Hint::Order { token, anchor, .. } => content.insert(anchor.map_or(0, |a| a + 1), token),
        }
    }
    let p = prompt(&content);
    let grid = evaluate_grid(worker.as_ref(), &[&p], slice, &meter).unwrap();
    (
        grid[0].iter().map(|s| s.score).sum::<f64>() / slice.len() as f64,
        seen.len(),
    )
}

#[test]
fn hints_suffice_to_reach_full_reward() {
    for seed in 0..5 {
        for kind in [TaskKind::Keyword, TaskKind::Ordered] {
            let suite = SyntheticSuite::generate(&SyntheticConfig {
                kind,
                seed,
                contexts: 2,
                ..Default::default()
            })
            .unwrap();
            for ctx in &suite.tasks.contexts {
                let (reward, distinct) = hint_closure(&suite, &ctx.context_id);
                assert_eq!(reward, 1.0);
                let bound = match &ctx.hidden {
                    HiddenSpec::Keyword(k) => {
                        k.required.len() + k.forbidden.len() + k.categories.len()
                    }
                    HiddenSpec::Ordered(o) => o.sequence.len(),
                    HiddenSpec::Opaque => unreachable!(),
                };
                assert!(distinct <= bound);
            }
        }
    }
}

#[test]
fn each_hint_reveals_one_token() {
    let c = keyword_critic();
    let f = c
        .critique(
            &prompt(&[25]),
            &inst("k", None),
            &WorkerOutput {
                text: "no".into(),
                correct: Some(false),
            },
        )
        .unwrap();
    match f {
        Feedback::Hint(h) => assert_eq!(h, Hint::Missing(20)),
        other => panic!("{other:?}"),
    }
}
