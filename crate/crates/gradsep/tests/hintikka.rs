mod common;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{full_fragment, rand_formula};
use gradsep::bits::Bits;
use gradsep::formula::{closure, Arena, ClosureIndex, Node};
use gradsep::hintikka::enumerate_hintikka;

/// Brute-force oracle: filter all subsets of the closure by the coherence
/// conditions, written here independently of the library.
fn oracle_types(arena: &Arena, c: &ClosureIndex) -> BTreeSet<Bits> {
    let n = c.len();
    assert!(n <= 20, "oracle is exponential in closure size");
    let mut out = BTreeSet::new();
    'subset: for mask in 0u32..1 << n {
        let get = |i: usize| mask >> i & 1 == 1;
        for (i, &m) in c.members().iter().enumerate() {
            if get(i) == get(c.neg_of(i)) {
                continue 'subset;
            }
            match arena.node(m) {
                Node::Top => {
                    if !get(i) {
                        continue 'subset;
                    }
                }
                Node::And(a, b) => {
                    let ok = get(i) == (get(c.index_of(a).unwrap()) && get(c.index_of(b).unwrap()));
                    if !ok {
                        continue 'subset;
                    }
                }
                Node::Dia {
                    rel,
                    inv,
                    grade,
                    body,
                } => {
                    if !get(i) {
                        continue;
                    }
                    for (j, &m2) in c.members().iter().enumerate() {
                        if let Node::Dia {
                            rel: r2,
                            inv: i2,
                            grade: g2,
                            body: b2,
                        } = arena.node(m2)
                        {
                            if (r2, i2, b2) == (rel, inv, body) && g2 <= grade && !get(j) {
                                continue 'subset;
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        let mut bits = Bits::new(n);
        for i in 0..n {
            if get(i) {
                bits.set(i, true);
            }
        }
        out.insert(bits);
    }
    out
}

#[test]
fn enumeration_matches_brute_force_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut ar = Arena::new();
    let mut checked = 0;
    for _ in 0..400 {
        let f1 = rand_formula(
            &mut ar,
            &mut rng,
            2,
            full_fragment(),
            &["A", "B"],
            &["R"],
            &["c"],
            3,
        );
        let f2 = rand_formula(
            &mut ar,
            &mut rng,
            1,
            full_fragment(),
            &["A", "B"],
            &["R"],
            &["c"],
            3,
        );
        let c = closure(&mut ar, f1, f2);
        if c.len() > 18 {
            continue;
        }
        let got: BTreeSet<Bits> = enumerate_hintikka(&ar, &c).collect();
        let want = oracle_types(&ar, &c);
        assert_eq!(got, want);
        checked += 1;
    }
    assert!(
        checked >= 100,
        "too few closures small enough for the oracle: {checked}"
    );
}

#[test]
fn stream_is_duplicate_free() {
    let mut ar = Arena::new();
    let f = gradsep::formula::parse_formula(
        &mut ar,
        "dia>=2[R] (A & E B) & ~dia[R] @c | dia>=3[R] (A & E B)",
    )
    .unwrap();
    let top = ar.top();
    let c = closure(&mut ar, f, top);
    let all: Vec<Bits> = enumerate_hintikka(&ar, &c).collect();
    let distinct: BTreeSet<Bits> = all.iter().cloned().collect();
    assert_eq!(all.len(), distinct.len());
}
