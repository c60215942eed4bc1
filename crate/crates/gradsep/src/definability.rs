//! Flattening constructions and the decisions built on them: definability
//! inside a counting-free fragment, uniform separators under the three
//! constant-scope policies, and the reduction from relative definability to
//! Craig separation.
//!
//! The common engine is the flattening `fl`, which rewrites every graded
//! diamond to grade 1. With constants in scope, the nominal-aware form
//! splits a graded diamond instead: a grade-1 diamond over non-denoted
//! successors plus a graded diamond restricted to denoted ones. The latter
//! keeps its grade, but ranges over at most `|scope|` elements, so it is
//! equivalent to a counting-free disjunction over the scope and counts as a
//! counting-free witness.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::formula::{fragment_check, signature_of, Arena, Fml, Fragment, Node, Signature};
use crate::sat::{entails, is_valid, SatError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DefinabilityError {
    #[error("plain flattening requires a nominal-free formula")]
    HasNominals,
    #[error("constant {0} occurs in the formula but not in the declared scope")]
    ConstantOutsideScope(String),
    #[error("an infinite-constant policy needs a non-empty finite core scope")]
    EmptyConstantScope,
    #[error("decision requires the non-inverse satisfiability backend")]
    UnsupportedFragment,
}

impl From<SatError> for DefinabilityError {
    fn from(_: SatError) -> DefinabilityError {
        DefinabilityError::UnsupportedFragment
    }
}

/// A formula together with its counting-free rewriting.
#[derive(Clone, Debug)]
pub struct FlatteningResult {
    pub original: Fml,
    pub flattened: Fml,
    /// Constant scope used by the nominal-aware form; empty for the plain one.
    pub constants: BTreeSet<String>,
}

/// Replace every graded diamond in `f` with its grade-1 form. Rewriting is
/// memoized per subterm, so shared subterms stay shared and the DAG never
/// grows.
pub fn flatten(arena: &mut Arena, f: Fml) -> Result<Fml, DefinabilityError> {
    let empty = BTreeSet::new();
    rewrite(arena, f, &empty, true, &mut HashMap::new())
}

/// Nominal-aware flattening of `f` over the constant scope `sigma_c`, which
/// must contain every constant of `f`. With an empty scope this coincides
/// with `flatten` node for node.
pub fn flatten_nominal(
    arena: &mut Arena,
    f: Fml,
    sigma_c: &BTreeSet<String>,
) -> Result<Fml, DefinabilityError> {
    for c in &signature_of(arena, f).consts {
        if !sigma_c.contains(c) {
            return Err(DefinabilityError::ConstantOutsideScope(c.clone()));
        }
    }
    rewrite(arena, f, sigma_c, false, &mut HashMap::new())
}

/// Flattening record for the given scope: the plain form when the scope is
/// empty and `f` is nominal-free, the nominal-aware form otherwise.
pub fn flattening_result(
    arena: &mut Arena,
    f: Fml,
    sigma_c: &BTreeSet<String>,
) -> Result<FlatteningResult, DefinabilityError> {
    let flattened = if sigma_c.is_empty() && signature_of(arena, f).consts.is_empty() {
        flatten(arena, f)?
    } else {
        flatten_nominal(arena, f, sigma_c)?
    };
    Ok(FlatteningResult {
        original: f,
        flattened,
        constants: sigma_c.clone(),
    })
}

fn rewrite(
    arena: &mut Arena,
    f: Fml,
    sigma_c: &BTreeSet<String>,
    reject_nominals: bool,
    memo: &mut HashMap<Fml, Fml>,
) -> Result<Fml, DefinabilityError> {
    if let Some(&g) = memo.get(&f) {
        return Ok(g);
    }
    let g = match arena.node(f) {
        Node::Top | Node::Prop(_) => f,
        Node::Nom(_) => {
            if reject_nominals {
                return Err(DefinabilityError::HasNominals);
            }
            f
        }
        Node::Not(a) => {
            let a = rewrite(arena, a, sigma_c, reject_nominals, memo)?;
            arena.not(a)
        }
        Node::And(a, b) => {
            let a = rewrite(arena, a, sigma_c, reject_nominals, memo)?;
            let b = rewrite(arena, b, sigma_c, reject_nominals, memo)?;
            arena.and(a, b)
        }
        Node::Udia(a) => {
            let a = rewrite(arena, a, sigma_c, reject_nominals, memo)?;
            arena.udia(a)
        }
        Node::Dia {
            rel,
            inv,
            grade,
            body,
        } => {
            let body = rewrite(arena, body, sigma_c, reject_nominals, memo)?;
            let rel = arena.sym_name(rel).to_string();
            if grade <= 1 || sigma_c.is_empty() {
                arena.dia(&rel, inv, 1, body)
            } else {
                let mut noms = Vec::new();
                let mut negs = Vec::new();
                for c in sigma_c {
                    let n = arena.nom(c);
                    noms.push(n);
                    negs.push(arena.not(n));
                }
                let none_denoted = arena.and_all(&negs);
                let some_denoted = arena.or_all(&noms);
                let outside = arena.and(body, none_denoted);
                let inside = arena.and(body, some_denoted);
                let d1 = arena.dia(&rel, inv, 1, outside);
                let d2 = arena.dia(&rel, inv, grade, inside);
                arena.or(d1, d2)
            }
        }
    };
    memo.insert(f, g);
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Definability {
    Definable(Fml),
    NotDefinable,
}

/// Widest fragment the validity backend accepts.
fn decidable() -> Fragment {
    Fragment::gml().with_nominals().with_universal()
}

/// Decide whether `f` is equivalent to a formula of the counting-free
/// `target`: it is iff the biconditional between `f` and its flattening is
/// valid and the flattening lands inside `target`. The scope of the
/// nominal-aware form is the set of constants occurring in `f`.
pub fn is_definable(
    arena: &mut Arena,
    f: Fml,
    target: Fragment,
) -> Result<Definability, DefinabilityError> {
    if !fragment_check(arena, f, decidable()) {
        return Err(DefinabilityError::UnsupportedFragment);
    }
    let consts = signature_of(arena, f).consts;
    let flat = if consts.is_empty() {
        flatten(arena, f)?
    } else {
        flatten_nominal(arena, f, &consts)?
    };
    let bicond = arena.iff(f, flat);
    if is_valid(arena, bicond, decidable())? && target.is_extension_of(witness_fragment(arena, flat))
    {
        Ok(Definability::Definable(flat))
    } else {
        Ok(Definability::NotDefinable)
    }
}

/// Constant policy of the ambient signature for uniform separation.
#[derive(Clone, Debug)]
pub enum ConstantScope {
    /// The signature has no constants.
    None,
    /// The signature's constants are exactly the given finite set.
    Finite(BTreeSet<String>),
    /// The signature has infinitely many constants; the given finite
    /// non-empty core must contain every constant of the query.
    Infinite(BTreeSet<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UniformSeparation {
    Exists(Fml),
    NotExists,
    /// Finite entailment back to the query could not be settled; bounded
    /// search found no finite countermodel up to the reported size.
    UnknownFinVal { searched_up_to: usize },
}

/// Decide whether `f` has a uniform counting-free separator over a signature
/// with the given constant policy, and return the strongest one if so. The
/// witness candidate is the flattening for the policy's scope: it is a
/// separator iff `f` entails it, and under the infinite policy iff
/// additionally the flattening finitely entails `f` back. Every fragment
/// this backend decides has the finite model property, so finite and general
/// entailment coincide here.
pub fn uniform_separator(
    arena: &mut Arena,
    f: Fml,
    scope: &ConstantScope,
    target: Fragment,
) -> Result<UniformSeparation, DefinabilityError> {
    if !fragment_check(arena, f, decidable()) {
        return Err(DefinabilityError::UnsupportedFragment);
    }
    let flat = match scope {
        ConstantScope::None => {
            if let Some(c) = signature_of(arena, f).consts.iter().next() {
                return Err(DefinabilityError::ConstantOutsideScope(c.clone()));
            }
            flatten(arena, f)?
        }
        ConstantScope::Finite(sigma_c) => flatten_nominal(arena, f, sigma_c)?,
        ConstantScope::Infinite(sigma_0) => {
            if sigma_0.is_empty() {
                return Err(DefinabilityError::EmptyConstantScope);
            }
            flatten_nominal(arena, f, sigma_0)?
        }
    };
    if !entails(arena, f, flat, decidable())? || !target.is_extension_of(witness_fragment(arena, flat))
    {
        return Ok(UniformSeparation::NotExists);
    }
    if matches!(scope, ConstantScope::Infinite(_)) && !entails(arena, flat, f, decidable())? {
        return Ok(UniformSeparation::NotExists);
    }
    Ok(UniformSeparation::Exists(prune_witness(arena, flat)?))
}

/// Reduction from relative definability to Craig separation: an explicit
/// counting-free definition of `g` modulo `f` over the symbols of `rho`
/// exists iff the returned pair of formulas is Craig-separable. The right
/// component is built by renaming every propositional variable outside `rho`
/// to a fresh primed copy that collides with no symbol in sight.
pub fn relative_definability_transform(
    arena: &mut Arena,
    rho: &Signature,
    f: Fml,
    g: Fml,
) -> (Fml, Fml) {
    let sig = signature_of(arena, f)
        .union(&signature_of(arena, g))
        .union(rho);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    taken.extend(sig.props.iter().cloned());
    taken.extend(sig.rels.iter().cloned());
    taken.extend(sig.consts.iter().cloned());
    let mut renaming: BTreeMap<String, String> = BTreeMap::new();
    for p in &sig.props {
        if rho.props.contains(p) {
            continue;
        }
        let mut cand = format!("{p}_r");
        let mut k = 0u32;
        while taken.contains(&cand) {
            k += 1;
            cand = format!("{p}_r{k}");
        }
        taken.insert(cand.clone());
        renaming.insert(p.clone(), cand);
    }
    let left = arena.and(f, g);
    let mut memo = HashMap::new();
    let f2 = rename_props(arena, f, &renaming, &mut memo);
    let g2 = rename_props(arena, g, &renaming, &mut memo);
    let ng2 = arena.not(g2);
    let right = arena.and(f2, ng2);
    (left, right)
}

fn rename_props(
    arena: &mut Arena,
    f: Fml,
    renaming: &BTreeMap<String, String>,
    memo: &mut HashMap<Fml, Fml>,
) -> Fml {
    if let Some(&g) = memo.get(&f) {
        return g;
    }
    let g = match arena.node(f) {
        Node::Top | Node::Nom(_) => f,
        Node::Prop(s) => {
            let name = arena.sym_name(s).to_string();
            match renaming.get(&name) {
                Some(n) => arena.prop(n),
                None => f,
            }
        }
        Node::Not(a) => {
            let a = rename_props(arena, a, renaming, memo);
            arena.not(a)
        }
        Node::And(a, b) => {
            let a = rename_props(arena, a, renaming, memo);
            let b = rename_props(arena, b, renaming, memo);
            arena.and(a, b)
        }
        Node::Udia(a) => {
            let a = rename_props(arena, a, renaming, memo);
            arena.udia(a)
        }
        Node::Dia {
            rel,
            inv,
            grade,
            body,
        } => {
            let body = rename_props(arena, body, renaming, memo);
            let rel = arena.sym_name(rel).to_string();
            arena.dia(&rel, inv, grade, body)
        }
    };
    memo.insert(f, g);
    g
}

/// Minimal fragment of a flattening witness. A graded diamond counts as
/// graded only when it is not the sanctioned denoted-successors disjunct,
/// which is equivalent to a counting-free formula over its scope.
fn witness_fragment(arena: &Arena, f: Fml) -> Fragment {
    let mut frag = Fragment::ml();
    for g in arena.subformulas(f) {
        match arena.node(g) {
            Node::Nom(_) => frag.nominals = true,
            Node::Udia(_) => frag.universal = true,
            Node::Dia {
                inv, grade, body, ..
            } => {
                frag.inverse |= inv;
                if grade > 1 && !counts_denoted_only(arena, body) {
                    frag.graded = true;
                }
            }
            _ => {}
        }
    }
    frag
}

/// True for bodies of the shape `chi and (a disjunction of nominals)`.
fn counts_denoted_only(arena: &Arena, body: Fml) -> bool {
    match arena.node(body) {
        Node::And(_, d) => nominal_disjunction(arena, d),
        _ => false,
    }
}

fn nominal_disjunction(arena: &Arena, f: Fml) -> bool {
    fn all_negated_nominals(arena: &Arena, f: Fml) -> bool {
        match arena.node(f) {
            Node::And(a, b) => all_negated_nominals(arena, a) && all_negated_nominals(arena, b),
            Node::Not(g) => matches!(arena.node(g), Node::Nom(_)),
            _ => false,
        }
    }
    match arena.node(f) {
        Node::Nom(_) => true,
        Node::Not(g) => all_negated_nominals(arena, g),
        _ => false,
    }
}

/// Drop top-level conjuncts entailed by the remaining ones, later conjuncts
/// first; a valid witness collapses to `true`. Equivalence is preserved, so
/// the result is still a uniform separator.
fn prune_witness(arena: &mut Arena, u: Fml) -> Result<Fml, SatError> {
    if is_valid(arena, u, decidable())? {
        return Ok(arena.top());
    }
    let mut conjs = conjuncts(arena, u);
    let mut i = conjs.len();
    while i > 0 && conjs.len() > 1 {
        i -= 1;
        let dropped = conjs.remove(i);
        let rest = arena.and_all(&conjs);
        if !entails(arena, rest, dropped, decidable())? {
            conjs.insert(i, dropped);
        }
    }
    Ok(arena.and_all(&conjs))
}

fn conjuncts(arena: &Arena, f: Fml) -> Vec<Fml> {
    match arena.node(f) {
        Node::And(a, b) => {
            let mut v = conjuncts(arena, a);
            v.extend(conjuncts(arena, b));
            v
        }
        _ => vec![f],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn p(arena: &mut Arena, s: &str) -> Fml {
        parse_formula(arena, s).expect("test formula parses")
    }

    #[test]
    fn flattening_rewrites_grades_to_one() {
        let mut ar = Arena::new();
        let f = p(&mut ar, "dia>=3[R] A");
        let expect = p(&mut ar, "dia[R] A");
        assert_eq!(flatten(&mut ar, f).unwrap(), expect);

        let top = ar.top();
        assert_eq!(flatten(&mut ar, top).unwrap(), top);

        let nested = p(&mut ar, "dia>=2[R] (A & dia>=5[S] B)");
        let expect = p(&mut ar, "dia[R] (A & dia[S] B)");
        assert_eq!(flatten(&mut ar, nested).unwrap(), expect);

        let nom = p(&mut ar, "dia>=2[R] @c");
        assert_eq!(
            flatten(&mut ar, nom),
            Err(DefinabilityError::HasNominals)
        );
    }

    #[test]
    fn nominal_flattening_splits_on_the_scope() {
        let mut ar = Arena::new();
        let f = p(&mut ar, "dia>=2[R] A");
        let scope: BTreeSet<String> = ["c".to_string()].into();
        let got = flatten_nominal(&mut ar, f, &scope).unwrap();
        let expect = p(&mut ar, "dia[R] (A & ~@c) | dia>=2[R] (A & @c)");
        assert_eq!(got, expect);

        let empty = BTreeSet::new();
        assert_eq!(
            flatten_nominal(&mut ar, f, &empty).unwrap(),
            flatten(&mut ar, f).unwrap()
        );

        let g = p(&mut ar, "dia[R] @d");
        assert_eq!(
            flatten_nominal(&mut ar, g, &scope),
            Err(DefinabilityError::ConstantOutsideScope("d".to_string()))
        );
    }

    #[test]
    fn renaming_transform_primes_variables_outside_rho() {
        let mut ar = Arena::new();
        let f = p(&mut ar, "dia[R] B");
        let g = p(&mut ar, "A");
        let rho = Signature::default();
        let (left, right) = relative_definability_transform(&mut ar, &rho, f, g);
        assert_eq!(left, p(&mut ar, "dia[R] B & A"));
        assert_eq!(right, p(&mut ar, "dia[R] B_r & ~A_r"));

        let full = signature_of(&ar, left);
        let (_, right_id) = relative_definability_transform(&mut ar, &full, f, g);
        assert_eq!(right_id, p(&mut ar, "dia[R] B & ~A"));
    }

    #[test]
    fn renaming_avoids_existing_symbols() {
        let mut ar = Arena::new();
        let f = p(&mut ar, "A & A_r");
        let g = p(&mut ar, "B");
        let rho = Signature::default();
        let (_, right) = relative_definability_transform(&mut ar, &rho, f, g);
        assert_eq!(right, p(&mut ar, "(A_r1 & A_r_r) & ~B_r"));
    }
}
