//! Satisfiability, validity, and entailment for the non-inverse fragments,
//! plus a brute-force bounded model search usable as an independent oracle.
//!
//! `sat_check` runs Hintikka type elimination: enumerate propositionally
//! coherent subsets of the closure, group them by their verdicts on the
//! global-modality members, pick one denotation anchor per constant, and
//! repeatedly discard types whose graded successor demands cannot be covered
//! by the surviving types. A surviving configuration is materialized as a
//! finite model and re-checked before it is returned.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::bits::Bits;
use crate::formula::{
    closure, fragment_check, signature_of, Arena, ClosureIndex, Fml, Fragment, Node,
};
use crate::hintikka::{enumerate_hintikka, nom_members, udia_members, universal_consistent};
use crate::structure::{model_check, PointedStructure, Structure};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatError {
    /// Inverse modalities are outside this module; separation for inverse
    /// fragments goes through the star-type engine instead.
    #[error("satisfiability over inverse fragments is not supported")]
    UnsupportedFragment,
}

#[derive(Debug, Clone)]
pub enum SatResult {
    Sat(PointedStructure),
    Unsat,
}

#[derive(Debug, Clone)]
pub enum BoundedResult {
    Sat(PointedStructure),
    NoneUpTo(usize),
}

/// Successor count demanded from one surviving type. `Many` stands for any
/// count above the grade ceiling; model extraction realizes it as
/// `ceiling + 1`, which no grade in the closure can distinguish from larger
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Count {
    Exact(u32),
    Many,
}

/// Witness assignment for one (type, relation) feasibility query: how many
/// successors of each surviving type to lay down. Zero counts are omitted.
#[derive(Debug, Clone, Default)]
pub struct CountAssignment {
    /// Pairs of (index into the type pool, demanded count).
    pub counts: Vec<(usize, Count)>,
}

impl CountAssignment {
    fn concrete(&self, ceiling: u32) -> Vec<(usize, u32)> {
        self.counts
            .iter()
            .map(|&(i, c)| {
                (
                    i,
                    match c {
                        Count::Exact(m) => m,
                        Count::Many => ceiling + 1,
                    },
                )
            })
            .collect()
    }
}

/// One graded chain: every `dia>=g[R] body` member over a fixed relation and
/// body, ascending by grade.
struct Chain {
    body_idx: usize,
    grades: Vec<(u32, usize)>,
}

/// Diamond members grouped per relation into grade chains. Inverse members
/// must have been rejected by the caller.
fn rel_chains(arena: &Arena, c: &ClosureIndex) -> Vec<(String, Vec<Chain>)> {
    let mut map: BTreeMap<String, BTreeMap<usize, Vec<(u32, usize)>>> = BTreeMap::new();
    for (i, &m) in c.members().iter().enumerate() {
        if let Node::Dia {
            rel,
            inv,
            grade,
            body,
        } = arena.node(m)
        {
            assert!(!inv, "inverse modalities are rejected before elimination");
            let body_idx = c.index_of(body).expect("closure is subformula closed");
            map.entry(arena.sym_name(rel).to_string())
                .or_default()
                .entry(body_idx)
                .or_default()
                .push((grade, i));
        }
    }
    map.into_iter()
        .map(|(r, bodies)| {
            let chains = bodies
                .into_iter()
                .map(|(body_idx, mut grades)| {
                    grades.sort_unstable();
                    Chain { body_idx, grades }
                })
                .collect();
            (r, chains)
        })
        .collect()
}

/// Successor-count window a type imposes per chain: at least every grade it
/// contains, fewer than the least grade it lacks. `cap` means unbounded.
fn windows(t: &Bits, chains: &[Chain], cap: u32) -> Vec<(u32, u32)> {
    chains
        .iter()
        .map(|ch| {
            let mut lo = 0;
            let mut hi = cap;
            for &(g, idx) in &ch.grades {
                if t.get(idx) {
                    lo = lo.max(g);
                } else {
                    hi = hi.min(g - 1);
                }
            }
            (lo, hi)
        })
        .collect()
}

/// Candidate types for one configuration. Nominal-bearing entries are the
/// chosen anchors and may be realized at most once.
struct Pool {
    types: Vec<Bits>,
    nominal: Vec<bool>,
}

/// Types that satisfy the same chain bodies are interchangeable as
/// successors; only the available multiplicity per trace matters.
struct TraceGroup {
    trace: u64,
    capacity: u32,
    members: Vec<usize>,
}

fn trace_groups(pool: &Pool, alive: &[bool], chains: &[Chain], cap: u32) -> Vec<TraceGroup> {
    assert!(chains.len() <= 64, "more than 64 chains on one relation");
    let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, t) in pool.types.iter().enumerate() {
        if !alive[i] {
            continue;
        }
        let mut trace = 0u64;
        for (ci, ch) in chains.iter().enumerate() {
            if t.get(ch.body_idx) {
                trace |= 1 << ci;
            }
        }
        map.entry(trace).or_default().push(i);
    }
    map.into_iter()
        .map(|(trace, members)| {
            let free = members.iter().any(|&i| !pool.nominal[i]);
            let capacity = if free {
                cap
            } else {
                (members.len() as u32).min(cap)
            };
            TraceGroup {
                trace,
                capacity,
                members,
            }
        })
        .collect()
}

struct Feasibility<'a> {
    groups: &'a [TraceGroup],
    /// Windows of the chains that actually constrain anything, as
    /// (lo, hi, chain index).
    active: Vec<(u32, u32, usize)>,
    /// `max_later[i][a]`: saturated supply active chain `a` can still draw
    /// from groups `i..`.
    max_later: Vec<Vec<u32>>,
    cap: u32,
    /// Visited (group index, saturated sums) states with no completion.
    failed: HashSet<(usize, Vec<u32>)>,
    chosen: Vec<u32>,
}

impl Feasibility<'_> {
    fn solve(groups: &[TraceGroup], wins: &[(u32, u32)], cap: u32) -> Option<Vec<u32>> {
        let active: Vec<(u32, u32, usize)> = wins
            .iter()
            .enumerate()
            .filter(|&(_, &(lo, hi))| lo > 0 || hi < cap)
            .map(|(c, &(lo, hi))| (lo, hi, c))
            .collect();
        if active.is_empty() {
            return Some(vec![0; groups.len()]);
        }
        let na = active.len();
        let mut max_later = vec![vec![0u32; na]; groups.len() + 1];
        for i in (0..groups.len()).rev() {
            for (a, &(_, _, c)) in active.iter().enumerate() {
                let add = if groups[i].trace >> c & 1 == 1 {
                    groups[i].capacity
                } else {
                    0
                };
                max_later[i][a] = (max_later[i + 1][a] + add).min(cap);
            }
        }
        let mut fs = Feasibility {
            groups,
            active,
            max_later,
            cap,
            failed: HashSet::new(),
            chosen: vec![0u32; groups.len()],
        };
        let mut sums = vec![0u32; na];
        if fs.dfs(0, &mut sums) {
            Some(fs.chosen)
        } else {
            None
        }
    }

    fn dfs(&mut self, i: usize, sums: &mut [u32]) -> bool {
        if i == self.groups.len() {
            return self
                .active
                .iter()
                .zip(sums.iter())
                .all(|(&(lo, hi, _), &s)| s >= lo && s <= hi);
        }
        if self.failed.contains(&(i, sums.to_vec())) {
            return false;
        }
        let (gtrace, gcap) = (self.groups[i].trace, self.groups[i].capacity);
        for m in 0..=gcap {
            let mut fail = false;
            let mut unfixable = false;
            for (a, &(lo, hi, c)) in self.active.iter().enumerate() {
                let on = gtrace >> c & 1 == 1;
                let s = if on {
                    (sums[a] + m).min(self.cap)
                } else {
                    sums[a]
                };
                if s > hi {
                    // raising m keeps or raises the sum
                    fail = true;
                    unfixable = true;
                    break;
                }
                if s.saturating_add(self.max_later[i + 1][a]) < lo {
                    fail = true;
                    unfixable = !on;
                    break;
                }
            }
            if fail {
                if unfixable {
                    break;
                }
                continue;
            }
            let saved: Vec<u32> = sums.to_vec();
            for (a, &(_, _, c)) in self.active.iter().enumerate() {
                if gtrace >> c & 1 == 1 {
                    sums[a] = (sums[a] + m).min(self.cap);
                }
            }
            self.chosen[i] = m;
            if self.dfs(i + 1, sums) {
                return true;
            }
            sums.copy_from_slice(&saved);
        }
        self.failed.insert((i, sums.to_vec()));
        false
    }
}

/// Spreads per-group counts onto pool members: a non-nominal member absorbs
/// the whole group demand, otherwise anchors take one each.
fn distribute(pool: &Pool, groups: &[TraceGroup], counts: &[u32], ceiling: u32) -> CountAssignment {
    let encode = |m: u32| {
        if m > ceiling {
            Count::Many
        } else {
            Count::Exact(m)
        }
    };
    let mut out = Vec::new();
    for (g, &m) in groups.iter().zip(counts) {
        if m == 0 {
            continue;
        }
        if let Some(&i) = g.members.iter().find(|&&i| !pool.nominal[i]) {
            out.push((i, encode(m)));
        } else {
            for &i in g.members.iter().take(m as usize) {
                out.push((i, Count::Exact(1)));
            }
        }
    }
    CountAssignment { counts: out }
}

struct Elimination {
    alive: Vec<bool>,
    /// Indexed `[pool type][relation]`, filled for survivors only.
    assignments: Vec<Vec<CountAssignment>>,
}

/// Greatest set of types whose counting demands are jointly coverable.
fn eliminate(pool: &Pool, chains: &[(String, Vec<Chain>)], ceiling: u32) -> Elimination {
    let cap = ceiling + 1;
    let n = pool.types.len();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for (_, rc) in chains {
            let groups = trace_groups(pool, &alive, rc, cap);
            let mut memo: HashMap<Vec<(u32, u32)>, bool> = HashMap::new();
            for (a, t) in alive.iter_mut().zip(&pool.types) {
                if !*a {
                    continue;
                }
                let w = windows(t, rc, cap);
                let ok = *memo
                    .entry(w.clone())
                    .or_insert_with(|| Feasibility::solve(&groups, &w, cap).is_some());
                if !ok {
                    *a = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut assignments = vec![Vec::new(); n];
    for (ri, (_, rc)) in chains.iter().enumerate() {
        let groups = trace_groups(pool, &alive, rc, cap);
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let w = windows(&pool.types[i], rc, cap);
            let counts = Feasibility::solve(&groups, &w, cap)
                .expect("survivors stay feasible at the fixpoint");
            debug_assert_eq!(assignments[i].len(), ri);
            assignments[i].push(distribute(pool, &groups, &counts, ceiling));
        }
    }
    Elimination { alive, assignments }
}

/// All coherent ways to pick one type per constant: the choice must contain
/// its constant, and a chosen type bearing a second constant must be that
/// constant's choice as well.
fn anchor_choices(class: &[Bits], noms: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &nm in noms {
        let mut next = Vec::new();
        for partial in &out {
            for (i, t) in class.iter().enumerate() {
                if t.get(nm) {
                    let mut p = partial.clone();
                    p.push(i);
                    next.push(p);
                }
            }
        }
        out = next;
        if out.is_empty() {
            return out;
        }
    }
    out.retain(|choice| {
        for &ta in choice {
            for (b, &nb) in noms.iter().enumerate() {
                if class[ta].get(nb) && choice[b] != ta {
                    return false;
                }
            }
        }
        true
    });
    out
}

fn build_model(
    arena: &Arena,
    c: &ClosureIndex,
    pool: &Pool,
    node_tys: &[usize],
    edges: &BTreeMap<String, Vec<(usize, usize)>>,
    consts: &BTreeMap<String, usize>,
    point: usize,
) -> PointedStructure {
    let labels: Vec<String> = (0..node_tys.len()).map(|i| format!("w{i}")).collect();
    let mut props: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (mi, &m) in c.members().iter().enumerate() {
        if let Node::Prop(sym) = arena.node(m) {
            let members = node_tys
                .iter()
                .enumerate()
                .filter(|&(_, &ty)| pool.types[ty].get(mi))
                .map(|(x, _)| x)
                .collect();
            props.insert(arena.sym_name(sym).to_string(), members);
        }
    }
    let s = Structure::from_parts(labels, props, edges.clone(), consts.clone())
        .expect("generated parts are consistent");
    PointedStructure::new(s, point)
}

/// Model for a global-modality-free configuration: unravel demands into a
/// tree of depth `modal_depth`, with one shared node per constant anchor.
/// Nodes past the depth budget need no successors, since no formula that
/// deep in the tree is ever evaluated past its own modal depth.
#[allow(clippy::too_many_arguments)]
fn unravel_tree(
    arena: &Arena,
    c: &ClosureIndex,
    pool: &Pool,
    elim: &Elimination,
    chains: &[(String, Vec<Chain>)],
    root_ty: usize,
    anchors: &BTreeMap<String, usize>,
    ceiling: u32,
    depth: u32,
) -> PointedStructure {
    let mut tys: Vec<usize> = Vec::new();
    let mut budgets: Vec<u32> = Vec::new();
    let mut anchor_node: BTreeMap<usize, usize> = BTreeMap::new();
    for &ty in anchors.values() {
        anchor_node.entry(ty).or_insert_with(|| {
            tys.push(ty);
            budgets.push(depth);
            tys.len() - 1
        });
    }
    let root = *anchor_node.entry(root_ty).or_insert_with(|| {
        tys.push(root_ty);
        budgets.push(depth);
        tys.len() - 1
    });
    // only constant anchors may stay in the registry
    if !pool.nominal[root_ty] {
        anchor_node.remove(&root_ty);
    }
    let mut edges: BTreeMap<String, Vec<(usize, usize)>> = chains
        .iter()
        .map(|(r, _)| (r.clone(), Vec::new()))
        .collect();
    let mut qi = 0;
    while qi < tys.len() {
        let (x, ty, budget) = (qi, tys[qi], budgets[qi]);
        qi += 1;
        if budget == 0 {
            continue;
        }
        for (ri, (rname, _)) in chains.iter().enumerate() {
            for (s, m) in elim.assignments[ty][ri].concrete(ceiling) {
                let out = edges.get_mut(rname).expect("initialized per relation");
                if pool.nominal[s] {
                    debug_assert!(m <= 1, "anchors are unique");
                    out.push((x, anchor_node[&s]));
                } else {
                    for _ in 0..m {
                        tys.push(s);
                        budgets.push(budget - 1);
                        out.push((x, tys.len() - 1));
                    }
                }
            }
        }
    }
    let consts: BTreeMap<String, usize> = anchors
        .iter()
        .map(|(name, ty)| (name.clone(), anchor_node[ty]))
        .collect();
    build_model(arena, c, pool, &tys, &edges, &consts, root)
}

/// Model for a configuration with global modalities: realize every survivor
/// (anchors once, others `ceiling + 1` times) and close every node's demands
/// off inside the block.
#[allow(clippy::too_many_arguments)]
fn closed_block(
    arena: &Arena,
    c: &ClosureIndex,
    pool: &Pool,
    elim: &Elimination,
    chains: &[(String, Vec<Chain>)],
    root_ty: usize,
    anchors: &BTreeMap<String, usize>,
    ceiling: u32,
) -> PointedStructure {
    let cap = (ceiling + 1) as usize;
    let mut first = vec![usize::MAX; pool.types.len()];
    let mut tys: Vec<usize> = Vec::new();
    for (i, fc) in first.iter_mut().enumerate() {
        if !elim.alive[i] {
            continue;
        }
        *fc = tys.len();
        let copies = if pool.nominal[i] { 1 } else { cap };
        tys.extend(std::iter::repeat_n(i, copies));
    }
    let mut edges: BTreeMap<String, Vec<(usize, usize)>> = chains
        .iter()
        .map(|(r, _)| (r.clone(), Vec::new()))
        .collect();
    for (x, &ty) in tys.iter().enumerate() {
        for (ri, (rname, _)) in chains.iter().enumerate() {
            let out = edges.get_mut(rname).expect("initialized per relation");
            for (s, m) in elim.assignments[ty][ri].concrete(ceiling) {
                for k in 0..m as usize {
                    out.push((x, first[s] + k));
                }
            }
        }
    }
    let consts: BTreeMap<String, usize> = anchors
        .iter()
        .map(|(name, &ty)| (name.clone(), first[ty]))
        .collect();
    build_model(arena, c, pool, &tys, &edges, &consts, first[root_ty])
}

/// Decides satisfiability of `f` by Hintikka type elimination. The fragment
/// gates the procedure: inverse fragments (or formulas using inverse
/// modalities) are rejected; all other operators are decided regardless of
/// the flags claimed by `frag`. Returned models are re-verified internally.
pub fn sat_check(arena: &mut Arena, f: Fml, frag: Fragment) -> Result<SatResult, SatError> {
    let widest = Fragment::gml().with_nominals().with_universal();
    if frag.inverse || !fragment_check(arena, f, widest) {
        return Err(SatError::UnsupportedFragment);
    }
    let top = arena.top();
    let c = closure(arena, f, top);
    let root_idx = c.index_of(f).expect("closure contains the query");
    let ceiling = c
        .members()
        .iter()
        .map(|&m| match arena.node(m) {
            Node::Dia { grade, .. } => grade,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    let chains = rel_chains(arena, &c);
    let udia = udia_members(arena, &c);
    let udia_bodies: Vec<usize> = udia
        .iter()
        .map(|&u| match arena.node(c.fml(u)) {
            Node::Udia(b) => c.index_of(b).expect("closure is subformula closed"),
            _ => unreachable!("udia member"),
        })
        .collect();
    let noms = nom_members(arena, &c);
    let nom_names: Vec<String> = noms
        .iter()
        .map(|&nm| match arena.node(c.fml(nm)) {
            Node::Nom(sym) => arena.sym_name(sym).to_string(),
            _ => unreachable!("nominal member"),
        })
        .collect();
    let depth = arena.modal_depth(f);

    // all elements of one model agree on every global-modality member
    let mut classes: BTreeMap<Vec<bool>, Vec<Bits>> = BTreeMap::new();
    for t in enumerate_hintikka(arena, &c) {
        if !universal_consistent(arena, &c, &t) {
            continue;
        }
        let key: Vec<bool> = udia.iter().map(|&u| t.get(u)).collect();
        classes.entry(key).or_default().push(t);
    }

    for (ukey, mut class) in classes {
        class.sort();
        if !class.iter().any(|t| t.get(root_idx)) {
            continue;
        }
        for choice in anchor_choices(&class, &noms) {
            let mut pool_of_class = vec![usize::MAX; class.len()];
            let mut types = Vec::new();
            let mut nominal = Vec::new();
            for (i, t) in class.iter().enumerate() {
                let bears = noms.iter().any(|&nm| t.get(nm));
                if !bears || choice.contains(&i) {
                    pool_of_class[i] = types.len();
                    types.push(t.clone());
                    nominal.push(bears);
                }
            }
            let pool = Pool { types, nominal };
            let elim = eliminate(&pool, &chains, ceiling);
            let anchors: BTreeMap<String, usize> = nom_names
                .iter()
                .zip(&choice)
                .map(|(name, &ci)| (name.clone(), pool_of_class[ci]))
                .collect();
            if anchors.values().any(|&i| !elim.alive[i]) {
                continue;
            }
            let witnesses_ok = ukey.iter().zip(&udia_bodies).all(|(&claim, &b)| {
                !claim || (0..pool.types.len()).any(|i| elim.alive[i] && pool.types[i].get(b))
            });
            if !witnesses_ok {
                continue;
            }
            let root_ty =
                (0..pool.types.len()).find(|&i| elim.alive[i] && pool.types[i].get(root_idx));
            let Some(root_ty) = root_ty else { continue };
            let model = if udia.is_empty() {
                unravel_tree(
                    arena, &c, &pool, &elim, &chains, root_ty, &anchors, ceiling, depth,
                )
            } else {
                closed_block(arena, &c, &pool, &elim, &chains, root_ty, &anchors, ceiling)
            };
            let ok = model_check(arena, &model.structure, model.point, f)
                .expect("model lists every symbol of the query");
            assert!(ok, "extracted model must satisfy the query");
            return Ok(SatResult::Sat(model));
        }
    }
    Ok(SatResult::Unsat)
}

pub fn is_valid(arena: &mut Arena, f: Fml, frag: Fragment) -> Result<bool, SatError> {
    let nf = arena.not(f);
    Ok(matches!(sat_check(arena, nf, frag)?, SatResult::Unsat))
}

pub fn entails(arena: &mut Arena, f: Fml, g: Fml, frag: Fragment) -> Result<bool, SatError> {
    let ng = arena.not(g);
    let both = arena.and(f, ng);
    Ok(matches!(sat_check(arena, both, frag)?, SatResult::Unsat))
}

#[derive(Clone, Copy)]
enum Op {
    Full,
    Prop(usize),
    Nom(usize),
    Not(usize),
    And(usize, usize),
    Dia {
        rel: usize,
        inv: bool,
        grade: u32,
        arg: usize,
    },
    Udia(usize),
}

/// Canonical constant targets: the point is element 0 and fresh denotation
/// targets appear in increasing order, so permuted variants are skipped.
fn const_tuples(q: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..q {
        let mut next = Vec::new();
        for t in &out {
            let maxu = t.iter().copied().max().unwrap_or(0);
            let bound = (maxu + 1).min(m - 1);
            for v in 0..=bound {
                let mut t2 = t.clone();
                t2.push(v);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

/// Advances the per-element predicate digits. Elements from `sufstart` on
/// carry no pinned role, so only non-decreasing digit runs are visited there.
fn advance_digits(digits: &mut [u32], sufstart: usize, pmax: u32) -> bool {
    let len = digits.len();
    let mut i = len;
    while i > 0 {
        i -= 1;
        if digits[i] < pmax {
            digits[i] += 1;
            let base = if i >= sufstart { digits[i] } else { 0 };
            for (j, d) in digits.iter_mut().enumerate().skip(i + 1) {
                *d = if j >= sufstart { base } else { 0 };
            }
            return true;
        }
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    arena: &Arena,
    f: Fml,
    m: usize,
    digits: &[u32],
    succ: &[u64],
    ctuple: &[usize],
    props: &[String],
    rels: &[String],
    consts: &[String],
) -> PointedStructure {
    let labels: Vec<String> = (0..m).map(|e| format!("e{e}")).collect();
    let mut pmap: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (pi, p) in props.iter().enumerate() {
        pmap.insert(
            p.clone(),
            (0..m).filter(|&e| digits[e] >> pi & 1 == 1).collect(),
        );
    }
    let mut rmap: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (ri, r) in rels.iter().enumerate() {
        let mut pairs = Vec::new();
        for d in 0..m {
            let mut row = succ[ri * m + d];
            while row != 0 {
                pairs.push((d, row.trailing_zeros() as usize));
                row &= row - 1;
            }
        }
        rmap.insert(r.clone(), pairs);
    }
    let cmap: BTreeMap<String, usize> =
        consts.iter().cloned().zip(ctuple.iter().copied()).collect();
    let s =
        Structure::from_parts(labels, pmap, rmap, cmap).expect("generated parts are consistent");
    let ok = model_check(arena, &s, 0, f).expect("structure lists every symbol");
    assert!(ok, "search only returns verified models");
    PointedStructure::new(s, 0)
}

/// Exhaustive search for a pointed model of `f` with at most `n` elements,
/// up to isomorphism fixing the point at element 0. Handles every fragment,
/// including inverse; intended as an independent oracle, so it evaluates
/// candidates directly from the semantics with no sharing of the
/// type-elimination machinery.
pub fn bounded_model_search(arena: &Arena, f: Fml, n: usize) -> BoundedResult {
    assert!(
        (1..=16).contains(&n),
        "bounded search supports sizes 1..=16"
    );
    let sig = signature_of(arena, f);
    let props: Vec<String> = sig.props.iter().cloned().collect();
    let rels: Vec<String> = sig.rels.iter().cloned().collect();
    let consts: Vec<String> = sig.consts.iter().cloned().collect();
    let post = arena.subformulas(f);
    let pos: HashMap<Fml, usize> = post.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut needs_inv = false;
    let ops: Vec<Op> = post
        .iter()
        .map(|&m| match arena.node(m) {
            Node::Top => Op::Full,
            Node::Prop(s) => Op::Prop(
                props
                    .iter()
                    .position(|p| p == arena.sym_name(s))
                    .expect("own signature"),
            ),
            Node::Nom(s) => Op::Nom(
                consts
                    .iter()
                    .position(|c| c == arena.sym_name(s))
                    .expect("own signature"),
            ),
            Node::Not(a) => Op::Not(pos[&a]),
            Node::And(a, b) => Op::And(pos[&a], pos[&b]),
            Node::Dia {
                rel,
                inv,
                grade,
                body,
            } => {
                needs_inv |= inv;
                Op::Dia {
                    rel: rels
                        .iter()
                        .position(|r| r == arena.sym_name(rel))
                        .expect("own signature"),
                    inv,
                    grade,
                    arg: pos[&body],
                }
            }
            Node::Udia(a) => Op::Udia(pos[&a]),
        })
        .collect();
    let root_pos = pos[&f];
    let pmax: u32 = if props.is_empty() {
        0
    } else {
        (1u32 << props.len()) - 1
    };

    for m in 1..=n {
        let full: u64 = (1u64 << m) - 1;
        let rows = rels.len() * m;
        for ctuple in const_tuples(consts.len(), m) {
            // nonzero targets form a prefix 1..=pinned by construction
            let pinned = ctuple.iter().copied().max().unwrap_or(0);
            let sufstart = pinned + 1;
            let mut digits = vec![0u32; m];
            loop {
                let mut prop_masks = vec![0u64; props.len()];
                for (e, &d) in digits.iter().enumerate() {
                    for (pi, mask) in prop_masks.iter_mut().enumerate() {
                        if d >> pi & 1 == 1 {
                            *mask |= 1 << e;
                        }
                    }
                }
                let mut succ = vec![0u64; rows];
                let mut pred = vec![0u64; rows];
                let mut masks = vec![0u64; ops.len()];
                'edges: loop {
                    if needs_inv {
                        pred.iter_mut().for_each(|v| *v = 0);
                        for r in 0..rels.len() {
                            for d in 0..m {
                                let mut row = succ[r * m + d];
                                while row != 0 {
                                    let e = row.trailing_zeros() as usize;
                                    pred[r * m + e] |= 1 << d;
                                    row &= row - 1;
                                }
                            }
                        }
                    }
                    for (i, op) in ops.iter().enumerate() {
                        masks[i] = match *op {
                            Op::Full => full,
                            Op::Prop(p) => prop_masks[p],
                            Op::Nom(q) => 1 << ctuple[q],
                            Op::Not(a) => full & !masks[a],
                            Op::And(a, b) => masks[a] & masks[b],
                            Op::Dia {
                                rel,
                                inv,
                                grade,
                                arg,
                            } => {
                                let base = if inv { &pred } else { &succ };
                                let mut out = 0u64;
                                for e in 0..m {
                                    if (base[rel * m + e] & masks[arg]).count_ones() >= grade {
                                        out |= 1 << e;
                                    }
                                }
                                out
                            }
                            Op::Udia(a) => {
                                if masks[a] != 0 {
                                    full
                                } else {
                                    0
                                }
                            }
                        };
                    }
                    if masks[root_pos] & 1 == 1 {
                        return BoundedResult::Sat(assemble(
                            arena, f, m, &digits, &succ, &ctuple, &props, &rels, &consts,
                        ));
                    }
                    for s in succ.iter_mut() {
                        *s = (*s + 1) & full;
                        if *s != 0 {
                            continue 'edges;
                        }
                    }
                    break;
                }
                if !advance_digits(&mut digits, sufstart, pmax) {
                    break;
                }
            }
        }
    }
    BoundedResult::NoneUpTo(n)
}
