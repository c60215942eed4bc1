mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::rand_formula;
use gradsep::formula::{print_formula, Arena, Fml, Fragment};
use gradsep::sat::{bounded_model_search, sat_check, BoundedResult, SatResult};
use gradsep::structure::model_check;

/// Cross-checks one formula: a model found by the exhaustive search must be
/// matched by a Sat verdict, and every Sat verdict must come with a model
/// that checks out.
fn assert_agreement(ar: &mut Arena, f: Fml, bound: usize) -> bool {
    let frag = Fragment::gml().with_nominals().with_universal();
    let verdict = sat_check(ar, f, frag).expect("non-inverse query");
    let oracle = bounded_model_search(ar, f, bound);
    match (&verdict, &oracle) {
        (SatResult::Unsat, BoundedResult::Sat(m)) => panic!(
            "oracle found a {}-element model of {} but elimination said Unsat",
            m.structure.len(),
            print_formula(ar, f)
        ),
        (SatResult::Sat(m), _) => {
            assert!(
                model_check(ar, &m.structure, m.point, f).expect("model lists every symbol"),
                "returned model fails {}",
                print_formula(ar, f)
            );
            true
        }
        _ => false,
    }
}

#[test]
fn cross_check_graded_universal_up_to_size_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut ar = Arena::new();
    let frag = Fragment::gml().with_universal();
    let mut sat_count = 0;
    for _ in 0..200 {
        let f = rand_formula(&mut ar, &mut rng, 2, frag, &["A", "B"], &["R"], &[], 2);
        if assert_agreement(&mut ar, f, 4) {
            sat_count += 1;
        }
    }
    assert!(
        sat_count >= 60,
        "suite too degenerate: only {sat_count} Sat verdicts"
    );
}

#[test]
fn cross_check_nominals_up_to_size_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut ar = Arena::new();
    let frag = Fragment::gml().with_nominals();
    let mut sat_count = 0;
    for _ in 0..60 {
        let f = rand_formula(&mut ar, &mut rng, 2, frag, &["A", "B"], &["R"], &["c"], 2);
        if assert_agreement(&mut ar, f, 3) {
            sat_count += 1;
        }
    }
    assert!(
        sat_count >= 20,
        "suite too degenerate: only {sat_count} Sat verdicts"
    );
}

#[test]
fn cross_check_full_nonsinverse_language_up_to_size_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut ar = Arena::new();
    let frag = Fragment::gml().with_nominals().with_universal();
    let mut sat_count = 0;
    for _ in 0..60 {
        let f = rand_formula(&mut ar, &mut rng, 2, frag, &["A", "B"], &["R"], &["c"], 2);
        if assert_agreement(&mut ar, f, 3) {
            sat_count += 1;
        }
    }
    assert!(
        sat_count >= 20,
        "suite too degenerate: only {sat_count} Sat verdicts"
    );
}

#[test]
fn unsat_verdicts_extend_beyond_the_oracle_bound() {
    // elimination-level Unsat certificates stay Unsat at larger oracle bounds
    let mut ar = Arena::new();
    let frag = Fragment::gml().with_nominals().with_universal();
    for text in [
        "dia>=2[R] A & ~dia[R] A",
        "dia>=2[R] @c",
        "E A & A (A -> B) & A ~B",
        "dia[R] (A & ~A)",
    ] {
        let f = gradsep::formula::parse_formula(&mut ar, text).unwrap();
        assert!(
            matches!(sat_check(&mut ar, f, frag).unwrap(), SatResult::Unsat),
            "{text}"
        );
        assert!(
            matches!(bounded_model_search(&ar, f, 4), BoundedResult::NoneUpTo(4)),
            "{text}"
        );
    }
}
