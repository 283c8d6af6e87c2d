use ltrk::logic::{build_tree, parse_proposition, parse_rollout, NodeKind, Proposition, ReasoningTrace, Triad};
use ltrk::metrics::{mcnemar, normalize_answer, rouge_l, SynonymTable};
use ltrk::numerics::{cosine_similarity, cross_entropy, infonce_align, AlignmentBatch, Tensor};
use ltrk::verifier::{logic_loss, verify_triad};
use proptest::prelude::*;

fn prop_strategy() -> impl Strategy<Value = Proposition> {
    let leaf = prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(Proposition::atom);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Proposition::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Proposition::implies(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Proposition::and(a, b)),
        ]
    })
}

fn triad_strategy() -> impl Strategy<Value = Triad> {
    (prop_strategy(), prop_strategy(), prop_strategy()).prop_map(|(a, b, c)| Triad::new(a, b, c, 1))
}

fn trace_strategy() -> impl Strategy<Value = ReasoningTrace> {
    prop::collection::vec(triad_strategy(), 1..5).prop_map(|triads| {
        let triads = triads
            .into_iter()
            .enumerate()
            .map(|(i, mut t)| {
                t.step_index = i as u32 + 1;
                t
            })
            .collect();
        ReasoningTrace::new("case_7", triads, "pneumonia").unwrap()
    })
}

fn row(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn proposition_render_parse_round_trip(p in prop_strategy()) {
        prop_assert_eq!(parse_proposition(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn rollout_render_parse_round_trip(t in trace_strategy()) {
        prop_assert_eq!(parse_rollout(&t.render()).unwrap(), t);
    }

    #[test]
    fn logic_loss_in_unit_interval(t in trace_strategy()) {
        let l = logic_loss(&t).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
    }

    #[test]
    fn verifier_ignores_premise_order(t in triad_strategy()) {
        let swapped = Triad::new(t.minor.clone(), t.major.clone(), t.conclusion.clone(), 1);
        prop_assert_eq!(verify_triad(&t).unwrap(), verify_triad(&swapped).unwrap());
    }

    #[test]
    fn verifier_ignores_atom_names(t in triad_strategy()) {
        let rename = |n: &str| format!("finding_{n}");
        let renamed = Triad::new(
            t.major.rename_atoms(&rename),
            t.minor.rename_atoms(&rename),
            t.conclusion.rename_atoms(&rename),
            1,
        );
        prop_assert_eq!(verify_triad(&t).unwrap(), verify_triad(&renamed).unwrap());
    }

    #[test]
    fn modus_ponens_chain_builds_a_rooted_tree(k in 1usize..6) {
        let atom = |i: usize| Proposition::atom(format!("p{i}"));
        let mut facts = vec![atom(0)];
        let mut triads = Vec::new();
        for i in 0..k {
            let rule = Proposition::implies(atom(i), atom(i + 1));
            facts.push(rule.clone());
            triads.push(Triad::new(rule, atom(i), atom(i + 1), i as u32 + 1));
        }
        let trace = ReasoningTrace::new("c", triads, format!("p{k}")).unwrap();
        prop_assert_eq!(logic_loss(&trace).unwrap(), 0.0);
        let tree = build_tree(&trace, &facts).unwrap();
        prop_assert_eq!(tree.nodes.len(), 2 * k + 1);
        prop_assert_eq!(tree.edges.len(), k);
        prop_assert_eq!(tree.nodes[tree.root].kind, NodeKind::Root);
        prop_assert_eq!(&tree.nodes[tree.root].proposition, &atom(k));
        let inputs = tree.nodes.iter().filter(|n| n.kind == NodeKind::InputFact).count();
        prop_assert_eq!(inputs, k + 1);
        for e in &tree.edges {
            prop_assert!(e.major != e.conclusion && e.minor != e.conclusion);
        }
    }

    #[test]
    fn infonce_is_permutation_invariant(
        rows in prop::collection::vec((row(4), row(4)), 2..6),
        seed in any::<u64>(),
    ) {
        let zv: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let zt: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
        let n = rows.len();
        let shift = (seed as usize) % n;
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).rev().collect();
        let pv: Vec<Vec<f64>> = order.iter().map(|&i| zv[i].clone()).collect();
        let pt: Vec<Vec<f64>> = order.iter().map(|&i| zt[i].clone()).collect();
        let loss = |v: &[Vec<f64>], t: &[Vec<f64>]| {
            let b = AlignmentBatch::new(Tensor::from_rows(v).unwrap(), Tensor::from_rows(t).unwrap(), 0.1).unwrap();
            infonce_align(&b).unwrap()
        };
        let a = loss(&zv, &zt);
        prop_assert!(a >= 0.0);
        prop_assert!((a - loss(&pv, &pt)).abs() < 1e-9);
    }

    #[test]
    fn cosine_ignores_positive_scale(u in row(5), v in row(5), s in 0.01f64..100.0) {
        let scaled: Vec<f64> = u.iter().map(|x| x * s).collect();
        let c = cosine_similarity(&u, &v).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine_similarity(&scaled, &v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_ignores_logit_shift(logits in prop::collection::vec(-10.0f64..10.0, 2..8), shift in -50.0f64..50.0, pick in any::<usize>()) {
        let label = pick % logits.len();
        let moved: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let a = cross_entropy(&logits, label).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - cross_entropy(&moved, label).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn normalization_is_idempotent(text in "[A-Za-z ,.!?'-]{0,40}") {
        let mut table = SynonymTable::new();
        table.insert("heart attack", "myocardial infarction").unwrap();
        table.insert("ca", "cancer").unwrap();
        let once = normalize_answer(&text, &table);
        prop_assert_eq!(normalize_answer(&once, &table), once.clone());
    }

    #[test]
    fn mcnemar_is_symmetric(b in 0u64..500, c in 0u64..500) {
        prop_assert_eq!(mcnemar(b, c), mcnemar(c, b));
        prop_assert!(mcnemar(b, c) >= 0.0);
    }

    #[test]
    fn rouge_swap_exchanges_precision_and_recall(
        a in prop::collection::vec(0u8..4, 1..12),
        b in prop::collection::vec(0u8..4, 1..12),
    ) {
        let x = rouge_l(&a, &b).unwrap();
        let y = rouge_l(&b, &a).unwrap();
        prop_assert_eq!(x.precision, y.recall);
        prop_assert_eq!(x.recall, y.precision);
        prop_assert!((x.f1 - y.f1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x.f1));
        prop_assert_eq!(x.f1 == 1.0, a == b);
    }
}
