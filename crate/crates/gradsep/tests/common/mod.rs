//! Shared generators and independent oracles for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

use gradsep::formula::{Arena, Fml, Fragment, Node};
use gradsep::structure::Structure;

/// Random structure over the given symbols: `1..=max_n` elements, each edge
/// present with probability `edge_p`, each prop per element with 1/2, each
/// constant denoting a uniform element.
pub fn rand_structure(
    rng: &mut impl Rng,
    max_n: usize,
    props: &[&str],
    rels: &[&str],
    consts: &[&str],
    edge_p: f64,
) -> Structure {
    let n = rng.gen_range(1..=max_n);
    let labels: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let mut prop_map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &p in props {
        let members = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        prop_map.insert(p.to_string(), members);
    }
    let mut rel_map: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for &r in rels {
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if rng.gen_bool(edge_p) {
                    pairs.push((a, b));
                }
            }
        }
        rel_map.insert(r.to_string(), pairs);
    }
    let mut const_map: BTreeMap<String, usize> = BTreeMap::new();
    for &c in consts {
        const_map.insert(c.to_string(), rng.gen_range(0..n));
    }
    Structure::from_parts(labels, prop_map, rel_map, const_map).expect("generator is valid")
}

/// Random formula of modal depth at most `depth` drawn from the fragment.
/// Grades range over `1..=max_grade` when the fragment is graded, else 1.
/// A size budget keeps the boolean skeleton from running away.
#[allow(clippy::too_many_arguments)]
pub fn rand_formula(
    arena: &mut Arena,
    rng: &mut impl Rng,
    depth: u32,
    frag: Fragment,
    props: &[&str],
    rels: &[&str],
    consts: &[&str],
    max_grade: u32,
) -> Fml {
    let mut fuel = 40u32;
    rand_formula_fueled(
        arena, rng, depth, frag, props, rels, consts, max_grade, &mut fuel,
    )
}

#[allow(clippy::too_many_arguments)]
fn rand_formula_fueled(
    arena: &mut Arena,
    rng: &mut impl Rng,
    depth: u32,
    frag: Fragment,
    props: &[&str],
    rels: &[&str],
    consts: &[&str],
    max_grade: u32,
    fuel: &mut u32,
) -> Fml {
    let leaf = depth == 0 || rels.is_empty() || *fuel == 0 || rng.gen_bool(0.25);
    if leaf {
        let use_nom = frag.nominals && !consts.is_empty() && rng.gen_bool(0.2);
        if use_nom {
            let c = consts[rng.gen_range(0..consts.len())];
            return arena.nom(c);
        }
        if props.is_empty() || rng.gen_bool(0.1) {
            return arena.top();
        }
        let p = props[rng.gen_range(0..props.len())];
        return arena.prop(p);
    }
    *fuel -= 1;
    let udia_ok = frag.universal;
    match rng.gen_range(0..if udia_ok { 5 } else { 4 }) {
        0 => {
            let b = rand_formula_fueled(
                arena, rng, depth, frag, props, rels, consts, max_grade, fuel,
            );
            arena.not(b)
        }
        1 => {
            let a = rand_formula_fueled(
                arena, rng, depth, frag, props, rels, consts, max_grade, fuel,
            );
            let b = rand_formula_fueled(
                arena, rng, depth, frag, props, rels, consts, max_grade, fuel,
            );
            arena.and(a, b)
        }
        2 => {
            let a = rand_formula_fueled(
                arena, rng, depth, frag, props, rels, consts, max_grade, fuel,
            );
            let b = rand_formula_fueled(
                arena, rng, depth, frag, props, rels, consts, max_grade, fuel,
            );
            arena.or(a, b)
        }
        3 => {
            let body = rand_formula_fueled(
                arena,
                rng,
                depth - 1,
                frag,
                props,
                rels,
                consts,
                max_grade,
                fuel,
            );
            let r = rels[rng.gen_range(0..rels.len())];
            let inv = frag.inverse && rng.gen_bool(0.3);
            let grade = if frag.graded {
                rng.gen_range(1..=max_grade)
            } else {
                1
            };
            arena.dia(r, inv, grade, body)
        }
        _ => {
            let body = rand_formula_fueled(
                arena,
                rng,
                depth - 1,
                frag,
                props,
                rels,
                consts,
                max_grade,
                fuel,
            );
            arena.udia(body)
        }
    }
}

/// Direct recursive truth evaluation, written independently of the library's
/// bottom-up evaluator. Panics on symbols the structure does not interpret;
/// generators keep formula and structure signatures aligned.
pub fn naive_check(arena: &Arena, s: &Structure, e: usize, f: Fml) -> bool {
    match arena.node(f) {
        Node::Top => true,
        Node::Prop(p) => s.has_prop(arena.sym_name(p), e),
        Node::Nom(c) => {
            let d = s
                .const_denotation(arena.sym_name(c))
                .expect("oracle: constant must be denoted");
            d == e
        }
        Node::Not(x) => !naive_check(arena, s, e, x),
        Node::And(a, b) => naive_check(arena, s, e, a) && naive_check(arena, s, e, b),
        Node::Dia {
            rel,
            inv,
            grade,
            body,
        } => {
            let name = arena.sym_name(rel);
            assert!(s.has_rel(name), "oracle: relation must be listed");
            let nbrs = if inv {
                s.preds(name, e)
            } else {
                s.succs(name, e)
            };
            let count = nbrs
                .iter()
                .filter(|&&t| naive_check(arena, s, t as usize, body))
                .count();
            count as u64 >= grade as u64
        }
        Node::Udia(x) => (0..s.len()).any(|t| naive_check(arena, s, t, x)),
    }
}

/// Fixed full-feature fragment used by generator-driven tests.
pub fn full_fragment() -> Fragment {
    Fragment::gml()
        .with_inverse()
        .with_nominals()
        .with_universal()
}

/// The two-way-counting separation example: φ1 forces a one-way infinite
/// R-chain (B at the root, A alternating), φ2 a root with exactly two
/// A-successors and two-by-two counting along the chain. φ1 ⊨ ¬φ2, yet the
/// structures below are bisimilar for the counting-free inverse fragment.
pub fn inverse_example_formulas(ar: &mut Arena) -> (Fml, Fml) {
    let phi1 = gradsep::formula::parse_formula(
        ar,
        "B & A (B -> (~A & dia=1[R] true & ~dia[R-] true & dia[R] A)) \
         & A (A -> (dia=1[R] true & dia=1[R-] true & dia[R] ~A)) \
         & A ((~A & ~B) -> (dia=1[R] true & dia=1[R-] true & dia[R] A))",
    )
    .unwrap();
    let phi2 = gradsep::formula::parse_formula(
        ar,
        "dia=2[R] A & A (A -> dia=2[R] ~A & (~dia[R-] B -> dia=2[R-] ~A)) \
         & A ((~A & ~B) -> (dia=2[R] A & dia=2[R-] A))",
    )
    .unwrap();
    (phi1, phi2)
}

/// Finite loop-closed stand-ins for the intended infinite models of the
/// inverse example: a 6-node chain with the last edge bent back, and a
/// width-2 layered graph (complete bipartite between layers) bent back the
/// same way. Exact-count conjuncts fail at the loop nodes (depth ≥ 4), so
/// model checks are restricted to lower depths; bisimulation conditions are
/// counting-free and hold everywhere.
pub fn inverse_example_structures() -> (Structure, Structure) {
    let a1 = Structure::from_parts(
        (0..6).map(|i| format!("a{i}")).collect(),
        [("A".to_string(), vec![1, 3, 5]), ("B".to_string(), vec![0])].into(),
        [(
            "R".to_string(),
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 4)],
        )]
        .into(),
        BTreeMap::new(),
    )
    .unwrap();
    let mut labels = vec!["e0".to_string()];
    for n in 1..=5 {
        labels.push(format!("e{n}1"));
        labels.push(format!("e{n}2"));
    }
    // Level n nodes have ids 2n-1, 2n.
    let mut edges = vec![(0, 1), (0, 2)];
    for n in 1..5 {
        for from in [2 * n - 1, 2 * n] {
            for to in [2 * n + 1, 2 * n + 2] {
                edges.push((from, to));
            }
        }
    }
    for from in [9, 10] {
        for to in [7, 8] {
            edges.push((from, to));
        }
    }
    let a2 = Structure::from_parts(
        labels,
        [
            ("A".to_string(), vec![1, 2, 5, 6, 9, 10]),
            ("B".to_string(), vec![0]),
        ]
        .into(),
        [("R".to_string(), edges)].into(),
        BTreeMap::new(),
    )
    .unwrap();
    (a1, a2)
}

/// Distance pairing of the two loop-closed structures: chain node at depth n
/// with both layer-n nodes.
pub fn inverse_example_distance_pairs() -> std::collections::BTreeSet<(usize, usize)> {
    let mut pairs = std::collections::BTreeSet::new();
    pairs.insert((0, 0));
    for n in 1..=5usize {
        pairs.insert((n, 2 * n - 1));
        pairs.insert((n, 2 * n));
    }
    pairs
}
