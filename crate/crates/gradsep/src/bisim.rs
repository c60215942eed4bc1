//! Counting-free modal bisimulations between finite structures: greatest
//! bisimulation, point bisimilarity, and certificate verification.
//!
//! A relation β between structures satisfies, for every pair (a,b): equal
//! ϱ-predicate atoms, and forth/back conditions for every relation in ϱ
//! (also for predecessors when the fragment has inverse). Two conditions
//! apply to β as a whole: with nominals, (c_A, c_B) ∈ β for every constant
//! c ∈ ϱ; with the universal modality, β must cover both domains. The graded
//! flag of the fragment is ignored: bisimulations here are counting-free.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::formula::{Fragment, Signature};
use crate::structure::Structure;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BisimError {
    #[error("constant `{0}` in the bisimulation signature is not denoted by both structures")]
    UnknownConstant(String),
}

/// A candidate or computed bisimulation with the signature and fragment it
/// is meant for. Pairs are (element of A, element of B).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BisimRelation {
    pub pairs: BTreeSet<(usize, usize)>,
    pub fragment: Fragment,
    pub sig: Signature,
}

impl BisimRelation {
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// First failed condition found by `verify_bisimulation`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Atom {
        pair: (usize, usize),
        prop: String,
    },
    Forth {
        pair: (usize, usize),
        rel: String,
        inverse: bool,
        succ: usize,
    },
    Back {
        pair: (usize, usize),
        rel: String,
        inverse: bool,
        succ: usize,
    },
    Nominal {
        constant: String,
    },
    NotGlobal {
        side: char,
        element: usize,
    },
}

impl Violation {
    pub fn condition_name(&self) -> &'static str {
        match self {
            Violation::Atom { .. } => "atom",
            Violation::Forth { .. } => "forth",
            Violation::Back { .. } => "back",
            Violation::Nominal { .. } => "nominal",
            Violation::NotGlobal { .. } => "global",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Atom { pair, prop } => write!(
                f,
                "atom condition fails at pair ({}, {}): predicate `{}` differs",
                pair.0, pair.1, prop
            ),
            Violation::Forth { pair, rel, inverse, succ } => write!(
                f,
                "forth condition fails at pair ({}, {}): {}`{}`-successor {} of the left element has no partner",
                pair.0, pair.1, if *inverse { "inverse " } else { "" }, rel, succ
            ),
            Violation::Back { pair, rel, inverse, succ } => write!(
                f,
                "back condition fails at pair ({}, {}): {}`{}`-successor {} of the right element has no partner",
                pair.0, pair.1, if *inverse { "inverse " } else { "" }, rel, succ
            ),
            Violation::Nominal { constant } => write!(
                f,
                "nominal condition fails: denotation pair of constant `{constant}` is not related"
            ),
            Violation::NotGlobal { side, element } => write!(
                f,
                "global condition fails: element {element} of structure {side} is unrelated"
            ),
        }
    }
}

fn directions(sig: &Signature, frag: Fragment) -> Vec<(&str, bool)> {
    let mut dirs = Vec::new();
    for r in &sig.rels {
        dirs.push((r.as_str(), false));
        if frag.inverse {
            dirs.push((r.as_str(), true));
        }
    }
    dirs
}

fn neighbours<'a>(s: &'a Structure, rel: &str, e: usize, inv: bool) -> &'a [u32] {
    if inv {
        s.preds(rel, e)
    } else {
        s.succs(rel, e)
    }
}

/// Largest relation satisfying the per-pair conditions, computed by
/// iterated removal from the atom-compatible full relation; declared empty
/// if a required whole-relation condition (nominal denotation pairs,
/// globality) fails, since no subrelation could restore it.
pub fn greatest_bisimulation(
    a: &Structure,
    b: &Structure,
    rho: &Signature,
    frag: Fragment,
) -> Result<BisimRelation, BisimError> {
    let mut nom_pairs = Vec::new();
    for c in &rho.consts {
        let ca = a
            .const_denotation(c)
            .ok_or_else(|| BisimError::UnknownConstant(c.clone()))?;
        let cb = b
            .const_denotation(c)
            .ok_or_else(|| BisimError::UnknownConstant(c.clone()))?;
        nom_pairs.push((ca, cb));
    }
    let (n, m) = (a.len(), b.len());
    let mut live = vec![false; n * m];
    for x in 0..n {
        for y in 0..m {
            live[x * m + y] = rho
                .props
                .iter()
                .all(|p| a.has_prop(p, x) == b.has_prop(p, y));
        }
    }
    let dirs = directions(rho, frag);
    loop {
        let mut changed = false;
        for x in 0..n {
            for y in 0..m {
                if !live[x * m + y] {
                    continue;
                }
                let ok = dirs.iter().all(|&(r, inv)| {
                    let xs = neighbours(a, r, x, inv);
                    let ys = neighbours(b, r, y, inv);
                    let forth = xs
                        .iter()
                        .all(|&xp| ys.iter().any(|&yp| live[xp as usize * m + yp as usize]));
                    forth
                        && ys
                            .iter()
                            .all(|&yp| xs.iter().any(|&xp| live[xp as usize * m + yp as usize]))
                });
                if !ok {
                    live[x * m + y] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut pairs = BTreeSet::new();
    for x in 0..n {
        for y in 0..m {
            if live[x * m + y] {
                pairs.insert((x, y));
            }
        }
    }
    if frag.nominals && !nom_pairs.iter().all(|p| pairs.contains(p)) {
        pairs.clear();
    }
    if frag.universal && !pairs.is_empty() {
        let left_covered = (0..n).all(|x| (0..m).any(|y| pairs.contains(&(x, y))));
        let right_covered = (0..m).all(|y| (0..n).any(|x| pairs.contains(&(x, y))));
        if !left_covered || !right_covered {
            pairs.clear();
        }
    }
    Ok(BisimRelation {
        pairs,
        fragment: frag,
        sig: rho.clone(),
    })
}

/// True iff (ea, eb) lies in the greatest bisimulation for (ϱ, fragment).
pub fn are_bisimilar(
    a: &Structure,
    ea: usize,
    b: &Structure,
    eb: usize,
    rho: &Signature,
    frag: Fragment,
) -> Result<bool, BisimError> {
    Ok(greatest_bisimulation(a, b, rho, frag)?.contains(ea, eb))
}

/// Check every fragment-selected condition on the given relation; report
/// the first violation in deterministic order (pairs ascending, then
/// predicates, then relations with forward before inverse, then nominal and
/// global conditions). The empty relation verifies vacuously: it certifies
/// no pair, and callers must check membership of the pairs they care about.
pub fn verify_bisimulation(
    rel: &BisimRelation,
    a: &Structure,
    b: &Structure,
) -> Result<(), Violation> {
    for &(x, y) in &rel.pairs {
        assert!(x < a.len() && y < b.len(), "pair out of range");
    }
    if rel.pairs.is_empty() {
        return Ok(());
    }
    let dirs = directions(&rel.sig, rel.fragment);
    for &(x, y) in &rel.pairs {
        for p in &rel.sig.props {
            if a.has_prop(p, x) != b.has_prop(p, y) {
                return Err(Violation::Atom {
                    pair: (x, y),
                    prop: p.clone(),
                });
            }
        }
        for &(r, inv) in &dirs {
            let xs = neighbours(a, r, x, inv);
            let ys = neighbours(b, r, y, inv);
            for &xp in xs {
                if !ys
                    .iter()
                    .any(|&yp| rel.pairs.contains(&(xp as usize, yp as usize)))
                {
                    return Err(Violation::Forth {
                        pair: (x, y),
                        rel: r.to_string(),
                        inverse: inv,
                        succ: xp as usize,
                    });
                }
            }
            for &yp in ys {
                if !xs
                    .iter()
                    .any(|&xp| rel.pairs.contains(&(xp as usize, yp as usize)))
                {
                    return Err(Violation::Back {
                        pair: (x, y),
                        rel: r.to_string(),
                        inverse: inv,
                        succ: yp as usize,
                    });
                }
            }
        }
    }
    if rel.fragment.nominals {
        for c in &rel.sig.consts {
            let pair = match (a.const_denotation(c), b.const_denotation(c)) {
                (Some(ca), Some(cb)) => (ca, cb),
                _ => {
                    return Err(Violation::Nominal {
                        constant: c.clone(),
                    })
                }
            };
            if !rel.pairs.contains(&pair) {
                return Err(Violation::Nominal {
                    constant: c.clone(),
                });
            }
        }
    }
    if rel.fragment.universal {
        for x in 0..a.len() {
            if !rel.pairs.iter().any(|&(px, _)| px == x) {
                return Err(Violation::NotGlobal {
                    side: 'A',
                    element: x,
                });
            }
        }
        for y in 0..b.len() {
            if !rel.pairs.iter().any(|&(_, py)| py == y) {
                return Err(Violation::NotGlobal {
                    side: 'B',
                    element: y,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn point(with_a: bool, consts: &[(&str, &str)]) -> Structure {
        let mut props = BTreeMap::new();
        if with_a {
            props.insert("A".to_string(), vec!["x".to_string()]);
        }
        Structure::new(
            vec!["x".into()],
            props,
            BTreeMap::new(),
            consts
                .iter()
                .map(|&(c, l)| (c.to_string(), l.to_string()))
                .collect(),
        )
        .unwrap()
    }

    fn sig(props: &[&str], rels: &[&str], consts: &[&str]) -> Signature {
        Signature {
            props: props.iter().map(|s| s.to_string()).collect(),
            rels: rels.iter().map(|s| s.to_string()).collect(),
            consts: consts.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn identity_is_contained_on_self() {
        let s = point(true, &[]);
        let rho = sig(&["A"], &[], &[]);
        let rel = greatest_bisimulation(&s, &s, &rho, Fragment::ml()).unwrap();
        assert!(rel.contains(0, 0));
        assert_eq!(verify_bisimulation(&rel, &s, &s), Ok(()));
    }

    #[test]
    fn atom_mismatch_separates_points() {
        let s = point(true, &[]);
        let t = point(false, &[]);
        let rho = sig(&["A"], &[], &[]);
        assert!(!are_bisimilar(&s, 0, &t, 0, &rho, Fragment::ml()).unwrap());
        let empty_rho = sig(&[], &[], &[]);
        assert!(are_bisimilar(&s, 0, &t, 0, &empty_rho, Fragment::ml()).unwrap());
    }

    #[test]
    fn nominal_condition_is_whole_relation() {
        // Denotations differ in an observable way: with nominals the result
        // is declared empty, without them the A-points remain related.
        let mk = |with_const_on_a: bool| {
            Structure::new(
                vec!["x".into(), "y".into()],
                [("A".to_string(), vec!["x".to_string()])].into(),
                BTreeMap::new(),
                [(
                    "c".to_string(),
                    if with_const_on_a {
                        "x".to_string()
                    } else {
                        "y".to_string()
                    },
                )]
                .into(),
            )
            .unwrap()
        };
        let s = mk(true);
        let t = mk(false);
        let rho = sig(&["A"], &[], &["c"]);
        let with_nom = Fragment::ml().with_nominals();
        let rel = greatest_bisimulation(&s, &t, &rho, with_nom).unwrap();
        assert!(rel.is_empty());
        let rel2 = greatest_bisimulation(&s, &t, &rho, Fragment::ml()).unwrap();
        assert!(rel2.contains(0, 0) && rel2.contains(1, 1));
        let missing = sig(&[], &[], &["d"]);
        assert_eq!(
            greatest_bisimulation(&s, &t, &missing, with_nom),
            Err(BisimError::UnknownConstant("d".into()))
        );
    }

    #[test]
    fn globality_is_whole_relation() {
        // Left: single point, no edges. Right: an A-point plus an isolated
        // non-A point that nothing on the left matches.
        let s = point(true, &[]);
        let t = Structure::new(
            vec!["x".into(), "y".into()],
            [("A".to_string(), vec!["x".to_string()])].into(),
            BTreeMap::new(),
            BTreeMap::new(),
        )
        .unwrap();
        let rho = sig(&["A"], &[], &[]);
        let plain = greatest_bisimulation(&s, &t, &rho, Fragment::ml()).unwrap();
        assert!(plain.contains(0, 0));
        let global = greatest_bisimulation(&s, &t, &rho, Fragment::ml().with_universal()).unwrap();
        assert!(global.is_empty());
    }

    #[test]
    fn forth_violation_is_reported() {
        let s = Structure::new(
            vec!["x".into(), "y".into()],
            BTreeMap::new(),
            [("R".to_string(), vec![("x".to_string(), "y".to_string())])].into(),
            BTreeMap::new(),
        )
        .unwrap();
        let t = Structure::new(
            vec!["x".into()],
            BTreeMap::new(),
            BTreeMap::new(),
            BTreeMap::new(),
        )
        .unwrap();
        let rel = BisimRelation {
            pairs: [(0usize, 0usize)].into(),
            fragment: Fragment::ml(),
            sig: sig(&[], &["R"], &[]),
        };
        let v = verify_bisimulation(&rel, &s, &t).unwrap_err();
        assert_eq!(v.condition_name(), "forth");
    }
}
