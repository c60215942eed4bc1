mod common;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{rand_formula, rand_structure};
use gradsep::definability::{
    flatten, flatten_nominal, is_definable, uniform_separator, ConstantScope, Definability,
    DefinabilityError, UniformSeparation,
};
use gradsep::formula::{
    fragment_check, parse_formula, print_formula, Arena, Fml, Fragment, Node,
};
use gradsep::sat::{entails, is_valid};
use gradsep::structure::model_check;

fn p(ar: &mut Arena, s: &str) -> Fml {
    parse_formula(ar, s).expect("test formula parses")
}

fn scope(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn wide() -> Fragment {
    Fragment::gml().with_nominals().with_universal()
}

fn equivalent(ar: &mut Arena, a: Fml, b: Fml) -> bool {
    let bicond = ar.iff(a, b);
    is_valid(ar, bicond, wide()).expect("non-inverse validity")
}

#[test]
fn counting_definability_verdicts() {
    let mut ar = Arena::new();

    let f = p(&mut ar, "dia>=1[R] A");
    let witness = p(&mut ar, "dia[R] A");
    assert_eq!(
        is_definable(&mut ar, f, Fragment::ml()).unwrap(),
        Definability::Definable(witness)
    );

    let f = p(&mut ar, "dia>=2[R] A");
    assert_eq!(
        is_definable(&mut ar, f, Fragment::ml()).unwrap(),
        Definability::NotDefinable
    );

    // Negated exact count: not definable, yet uniformly separable by `true`.
    let f = p(&mut ar, "~(dia>=2[R] A & ~dia>=3[R] A)");
    assert_eq!(
        is_definable(&mut ar, f, Fragment::ml()).unwrap(),
        Definability::NotDefinable
    );

    let inv = p(&mut ar, "dia[R-] A");
    assert_eq!(
        is_definable(&mut ar, inv, Fragment::ml().with_inverse()),
        Err(DefinabilityError::UnsupportedFragment)
    );
}

#[test]
fn uniform_separator_verdicts() {
    let mut ar = Arena::new();

    let f = p(&mut ar, "dia>=3[R] A");
    let witness = p(&mut ar, "dia[R] A");
    assert_eq!(
        uniform_separator(&mut ar, f, &ConstantScope::None, Fragment::ml()).unwrap(),
        UniformSeparation::Exists(witness)
    );

    let f = p(&mut ar, "dia>=2[R] A & ~dia>=3[R] A");
    assert_eq!(
        uniform_separator(&mut ar, f, &ConstantScope::None, Fragment::ml()).unwrap(),
        UniformSeparation::NotExists
    );

    let f = p(&mut ar, "~(dia>=2[R] A & ~dia>=3[R] A)");
    let top = ar.top();
    assert_eq!(
        uniform_separator(&mut ar, f, &ConstantScope::None, Fragment::ml()).unwrap(),
        UniformSeparation::Exists(top)
    );
}

fn two_relation_example(ar: &mut Arena) -> Fml {
    let core = p(ar, "dia[R] A & dia[S] A");
    let r2 = p(ar, "dia>=2[R] A");
    let s2 = p(ar, "dia>=2[S] A");
    let bicond = ar.iff(r2, s2);
    ar.and(core, bicond)
}

#[test]
fn two_relation_example_collapses_to_its_counting_free_core() {
    let mut ar = Arena::new();
    let f = two_relation_example(&mut ar);
    let core = p(&mut ar, "dia[R] A & dia[S] A");

    let flat = flatten(&mut ar, f).unwrap();
    assert!(equivalent(&mut ar, flat, core));

    // Without constants the flattening is a separator and prunes to the core.
    match uniform_separator(&mut ar, f, &ConstantScope::None, Fragment::ml()).unwrap() {
        UniformSeparation::Exists(u) => assert_eq!(u, core),
        other => panic!("expected a separator, got {other:?}"),
    }

    // With two constants in scope the flattening is no longer entailed.
    let fin = ConstantScope::Finite(scope(&["c1", "c2"]));
    assert_eq!(
        uniform_separator(&mut ar, f, &fin, Fragment::ml().with_nominals()).unwrap(),
        UniformSeparation::NotExists
    );
}

#[test]
fn infinite_scope_requires_entailment_back() {
    let mut ar = Arena::new();

    let f = p(&mut ar, "dia>=2[R] A");
    let inf = ConstantScope::Infinite(scope(&["c"]));
    assert_eq!(
        uniform_separator(&mut ar, f, &inf, Fragment::ml().with_nominals()).unwrap(),
        UniformSeparation::NotExists
    );

    // A formula equivalent to its flattening keeps its separator.
    let g = p(&mut ar, "dia>=2[R] A | dia[R] A");
    let plain = p(&mut ar, "dia[R] A");
    match uniform_separator(&mut ar, g, &inf, Fragment::ml().with_nominals()).unwrap() {
        UniformSeparation::Exists(u) => assert!(equivalent(&mut ar, u, plain)),
        other => panic!("expected a separator, got {other:?}"),
    }

    let empty = ConstantScope::Infinite(BTreeSet::new());
    assert_eq!(
        uniform_separator(&mut ar, f, &empty, Fragment::ml().with_nominals()),
        Err(DefinabilityError::EmptyConstantScope)
    );

    let nom = p(&mut ar, "dia[R] @c");
    assert_eq!(
        uniform_separator(&mut ar, nom, &ConstantScope::None, Fragment::ml()),
        Err(DefinabilityError::ConstantOutsideScope("c".to_string()))
    );
}

#[test]
fn flattening_invariants_on_random_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(211);
    let mut ar = Arena::new();
    let frag = Fragment::gml().with_universal();
    let sigma: BTreeSet<String> = scope(&["c"]);
    for _ in 0..300 {
        let f = rand_formula(&mut ar, &mut rng, 2, frag, &["A", "B"], &["R", "S"], &[], 3);
        let flat = flatten(&mut ar, f).unwrap();
        assert!(ar.max_grade(flat) <= 1, "grades must be erased");
        assert_eq!(
            flatten(&mut ar, flat).unwrap(),
            flat,
            "flattening must be idempotent"
        );
        assert!(
            ar.subformulas(flat).len() <= ar.subformulas(f).len(),
            "flattening must not grow the DAG"
        );
        assert!(fragment_check(&ar, flat, frag.counting_free()));

        let empty = BTreeSet::new();
        assert_eq!(
            flatten_nominal(&mut ar, f, &empty).unwrap(),
            flat,
            "empty scope must coincide with the plain flattening"
        );

        // With a scope, grades only survive on denoted-successor disjuncts.
        let nf = flatten_nominal(&mut ar, f, &sigma).unwrap();
        for g in ar.subformulas(nf) {
            if let Node::Dia { grade, body, .. } = ar.node(g) {
                if grade > 1 {
                    let sanctioned = match ar.node(body) {
                        Node::And(_, d) => matches!(ar.node(d), Node::Nom(_)),
                        _ => false,
                    };
                    assert!(sanctioned, "stray grade in {}", print_formula(&ar, nf));
                }
            }
        }
    }
}

#[test]
fn definable_witnesses_agree_with_their_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(212);
    let mut ar = Arena::new();
    let frag = Fragment::gml();
    let mut batch: Vec<Fml> = vec![
        p(&mut ar, "dia>=1[R] B"),
        p(&mut ar, "dia>=2[R] A | dia[R] A"),
        p(&mut ar, "dia[R] (A | dia>=2[S] B | dia[S] B)"),
    ];
    for _ in 0..40 {
        batch.push(rand_formula(
            &mut ar,
            &mut rng,
            2,
            frag,
            &["A", "B"],
            &["R", "S"],
            &[],
            2,
        ));
    }
    let mut definable = 0;
    for f in batch {
        let verdict = is_definable(&mut ar, f, Fragment::ml()).unwrap();
        let witness = match verdict {
            Definability::Definable(w) => w,
            Definability::NotDefinable => continue,
        };
        definable += 1;
        assert!(fragment_check(&ar, witness, Fragment::ml()));
        for _ in 0..200 {
            let s = rand_structure(&mut rng, 4, &["A", "B"], &["R", "S"], &[], 0.4);
            for e in 0..s.len() {
                assert_eq!(
                    model_check(&ar, &s, e, f).unwrap(),
                    model_check(&ar, &s, e, witness).unwrap(),
                    "witness must agree with its source"
                );
            }
        }
    }
    assert!(definable >= 3, "suite too degenerate: {definable} definable");
}

#[test]
fn uniform_separator_is_strongest_sampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(213);
    let mut ar = Arena::new();
    let sources = [
        p(&mut ar, "dia>=3[R] A"),
        two_relation_example(&mut ar),
        p(&mut ar, "dia>=2[R] (A & dia>=2[S] B)"),
    ];
    let cf = Fragment::ml();
    for f in sources {
        let u = match uniform_separator(&mut ar, f, &ConstantScope::None, cf).unwrap() {
            UniformSeparation::Exists(u) => u,
            other => panic!("source must have a separator, got {other:?}"),
        };
        assert!(entails(&mut ar, f, u, wide()).unwrap());
        let mut hits = 0;
        let mut draws = 0;
        while hits < 50 && draws < 600 {
            draws += 1;
            let a = rand_formula(&mut ar, &mut rng, 2, cf, &["A", "B"], &["R", "S"], &[], 1);
            let chi = if draws % 2 == 0 {
                let b = rand_formula(&mut ar, &mut rng, 2, cf, &["A", "B"], &["R", "S"], &[], 1);
                ar.or(a, b)
            } else {
                a
            };
            if !entails(&mut ar, f, chi, wide()).unwrap() {
                continue;
            }
            hits += 1;
            assert!(
                entails(&mut ar, u, chi, wide()).unwrap(),
                "separator must entail every counting-free consequence: {}",
                print_formula(&ar, chi)
            );
        }
        assert!(hits >= 50, "sampling too degenerate: {hits} consequences");
    }
}
