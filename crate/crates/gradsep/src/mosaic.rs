//! Deciding whether a separating formula exists, by mosaic elimination.
//!
//! Given two formulas and a counting-free target fragment, a separator is a
//! target formula over a restricted shared signature that is entailed by the
//! first formula and contradicts the second. No separator exists iff the two
//! formulas are satisfiable in a pair of pointed structures linked by a
//! bisimulation for the target fragment over the shared signature. The
//! procedure searches for such a pair abstractly: a mosaic is a pair of type
//! sets over the joint closure, one side per input structure, describing a
//! single bisimulation class as seen from both sides. Mosaics whose demands
//! cannot be met (a graded diamond without a witness set, a global diamond
//! without a partner mosaic) are eliminated; the formulas are inseparable iff
//! after elimination some mosaic realizes both formulas under a consistent
//! assignment of constants to mosaics. When neither the inputs nor the
//! target use the global modality, the surviving mosaics unfold into finite
//! pointed models plus a checkable bisimulation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::bisim::{verify_bisimulation, BisimRelation};
use crate::bits::Bits;
use crate::formula::{
    closure, fragment_check, signature_of, Arena, ClosureIndex, Fml, Fragment, Node, Signature,
};
use crate::hintikka::{enumerate_hintikka, is_hintikka, universal_consistent};
use crate::structure::{model_check, PointedStructure, Structure};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeparationError {
    /// Inputs or target outside what the decision procedure covers.
    #[error("unsupported fragment: {0}")]
    UnsupportedFragment(&'static str),
    /// A search stage would exceed its configured budget.
    #[error("budget exceeded during {stage} (limit {limit})")]
    Budget { stage: &'static str, limit: usize },
}

/// Search budgets. Enumeration stays exact unless `side_cap` prunes it;
/// overruns are reported as errors, never silently truncated.
#[derive(Clone, Debug)]
pub struct SeparationOpts {
    /// Cap on the number of candidate types and of enumerated mosaics.
    pub mosaic_budget: usize,
    /// Cap on constant-to-mosaic anchor assignments tried.
    pub anchor_budget: usize,
    /// Cap on constructed model size, in words per side.
    pub model_budget: usize,
    /// Optional cap on mosaic side cardinality; `None` keeps enumeration
    /// exact.
    pub side_cap: Option<usize>,
}

impl Default for SeparationOpts {
    fn default() -> Self {
        SeparationOpts {
            mosaic_budget: 200_000,
            anchor_budget: 10_000,
            model_budget: 50_000,
            side_cap: None,
        }
    }
}

/// A pair of type sets over the joint closure, one side per input formula.
///
/// Invariants: sides are strictly sorted; all types across both sides agree
/// on shared unary atoms and shared constants; within one side all types
/// agree on global diamonds and no two types share a constant; at most one
/// side is empty, and only when the target fragment lacks the global
/// modality.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mosaic {
    pub m1: Vec<Bits>,
    pub m2: Vec<Bits>,
}

impl Mosaic {
    pub fn side(&self, side: u8) -> &[Bits] {
        match side {
            1 => &self.m1,
            2 => &self.m2,
            _ => panic!("mosaic side must be 1 or 2"),
        }
    }
}

/// One edge of a witness relation: type `from` of the host mosaic (on
/// `side`) points at copy `copy` of type `to_type` of candidate `to_mosaic`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct WitnessEdge {
    pub side: u8,
    pub from: usize,
    pub to_mosaic: usize,
    pub to_type: usize,
    pub copy: u32,
}

/// Witness for one relation at one mosaic: a set of candidate mosaics (as
/// indices into the ambient mosaic list) plus an edge relation satisfying
/// harmony (global diamonds agree side by side with every candidate),
/// counting (each type has at least `k` successors satisfying a body iff it
/// contains the corresponding graded diamond), and transfer (for a shared
/// relation, any candidate reached by one host type is reached by all).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessCert {
    pub rel: String,
    pub host: Mosaic,
    pub members: Vec<usize>,
    pub edges: Vec<WitnessEdge>,
}

/// Assignment of one mosaic to every (constant, side) pair. The assigned
/// mosaic carries the constant on that side; any constant occurring in an
/// assigned mosaic is anchored to that same mosaic, and shared constants
/// get the same mosaic on both sides.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct NominalAnchor {
    pub assignments: BTreeMap<(String, u8), Mosaic>,
}

/// Result of mosaic enumeration. `exact` is false when a side cap pruned
/// candidate sides away.
#[derive(Clone, Debug)]
pub struct MosaicSet {
    pub mosaics: Vec<Mosaic>,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SeparationMode {
    /// Pad both formulas to the union signature first; the separator may
    /// use every symbol of either input.
    Plain,
    /// The separator may use only symbols occurring in both inputs.
    Craig,
    /// Unary atoms must occur in both inputs; relations and constants of
    /// either input are allowed.
    UnaryCraig,
}

#[derive(Clone, Debug)]
pub enum Separation {
    Separable,
    NotSeparable(Box<SeparationCert>),
}

impl Separation {
    pub fn is_separable(&self) -> bool {
        matches!(self, Separation::Separable)
    }
}

/// Inseparability certificate: the surviving mosaics with their witnesses,
/// the constant anchor, and a root mosaic realizing both formulas. When the
/// inputs and the target avoid the global modality, `models` holds a pair of
/// finite pointed models of the original formulas together with a
/// bisimulation for the target fragment over `rho` linking the roots.
#[derive(Clone, Debug)]
pub struct SeparationCert {
    pub rho: Signature,
    pub anchor: NominalAnchor,
    pub root: Mosaic,
    pub root_types: (Bits, Bits),
    pub surviving: Vec<Mosaic>,
    /// One witness per surviving mosaic and relation with a positive graded
    /// demand; `members` index into `surviving`.
    pub witnesses: Vec<WitnessCert>,
    pub models: Option<CertModels>,
}

#[derive(Clone, Debug)]
pub struct CertModels {
    pub left: PointedStructure,
    pub right: PointedStructure,
    pub relation: BisimRelation,
}

// ---------------------------------------------------------------------------
// Closure context

struct RelDias {
    /// Distinct body members, ascending.
    bodies: Vec<usize>,
    /// Per body: ascending (grade, diamond member).
    chains: Vec<Vec<(u32, usize)>>,
}

struct Ctx {
    nlen: usize,
    rho: Signature,
    /// Members that are shared unary atoms or shared constants.
    rho_atoms: Bits,
    /// Members that are global diamonds.
    udias: Bits,
    /// (global diamond member, its body member).
    udia_list: Vec<(usize, usize)>,
    /// Every unary atom member, with its name.
    props: Vec<(usize, String)>,
    /// Every constant member, with its name.
    noms: Vec<(usize, String)>,
    /// Members that are constants.
    nom_mask: Bits,
    rels: BTreeMap<String, RelDias>,
    /// Largest grade in the closure.
    kstar: u32,
}

fn has_inverse(arena: &Arena, c: &ClosureIndex) -> bool {
    c.members()
        .iter()
        .any(|&f| matches!(arena.node(f), Node::Dia { inv: true, .. }))
}

fn build_ctx(arena: &Arena, c: &ClosureIndex, rho: &Signature) -> Ctx {
    let n = c.len();
    let mut rho_atoms = Bits::new(n);
    let mut udias = Bits::new(n);
    let mut udia_list = Vec::new();
    let mut props = Vec::new();
    let mut noms = Vec::new();
    let mut nom_mask = Bits::new(n);
    let mut by_rel: BTreeMap<String, BTreeMap<usize, Vec<(u32, usize)>>> = BTreeMap::new();
    let mut kstar = 0;
    for (i, &f) in c.members().iter().enumerate() {
        match arena.node(f) {
            Node::Prop(s) => {
                let name = arena.sym_name(s).to_string();
                if rho.props.contains(&name) {
                    rho_atoms.set(i, true);
                }
                props.push((i, name));
            }
            Node::Nom(s) => {
                let name = arena.sym_name(s).to_string();
                if rho.consts.contains(&name) {
                    rho_atoms.set(i, true);
                }
                nom_mask.set(i, true);
                noms.push((i, name));
            }
            Node::Udia(b) => {
                udias.set(i, true);
                let bi = c.index_of(b).expect("closure is subformula-closed");
                udia_list.push((i, bi));
            }
            Node::Dia {
                rel, grade, body, ..
            } => {
                kstar = kstar.max(grade);
                let bi = c.index_of(body).expect("closure is subformula-closed");
                by_rel
                    .entry(arena.sym_name(rel).to_string())
                    .or_default()
                    .entry(bi)
                    .or_default()
                    .push((grade, i));
            }
            _ => {}
        }
    }
    let rels = by_rel
        .into_iter()
        .map(|(r, m)| {
            let bodies: Vec<usize> = m.keys().copied().collect();
            let chains = m
                .into_values()
                .map(|mut ch| {
                    ch.sort_unstable();
                    ch
                })
                .collect();
            (r, RelDias { bodies, chains })
        })
        .collect();
    Ctx {
        nlen: n,
        rho: rho.clone(),
        rho_atoms,
        udias,
        udia_list,
        props,
        noms,
        nom_mask,
        rels,
        kstar,
    }
}

// ---------------------------------------------------------------------------
// Mosaic predicates

fn side_uniform(mask: &Bits, side: &[Bits]) -> bool {
    side.windows(2)
        .all(|w| w[0].masked(mask) == w[1].masked(mask))
}

fn mosaic_ok(ctx: &Ctx, m: &Mosaic, allow_empty_side: bool) -> bool {
    let e1 = m.m1.is_empty();
    let e2 = m.m2.is_empty();
    if e1 && e2 {
        return false;
    }
    if (e1 || e2) && !allow_empty_side {
        return false;
    }
    for side in [&m.m1, &m.m2] {
        if side.iter().any(|t| t.len() != ctx.nlen) {
            return false;
        }
        if side.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
    }
    // Shared atoms and shared constants agree across both sides.
    let mut fp: Option<Bits> = None;
    for t in m.m1.iter().chain(m.m2.iter()) {
        let f = t.masked(&ctx.rho_atoms);
        match &fp {
            None => fp = Some(f),
            Some(prev) => {
                if *prev != f {
                    return false;
                }
            }
        }
    }
    for side in [&m.m1, &m.m2] {
        // Global diamonds agree within one side.
        if !side_uniform(&ctx.udias, side) {
            return false;
        }
        // No two types of one side share a constant.
        for &(nm, _) in &ctx.noms {
            if side.iter().filter(|t| t.get(nm)).count() > 1 {
                return false;
            }
        }
    }
    true
}

/// Check every mosaic invariant for `m`, including that each side consists
/// of coherent types compatible with the global modality.
pub fn mosaic_conditions_hold(
    arena: &Arena,
    c: &ClosureIndex,
    rho: &Signature,
    m: &Mosaic,
    allow_empty_side: bool,
) -> bool {
    let ctx = build_ctx(arena, c, rho);
    mosaic_ok(&ctx, m, allow_empty_side)
        && m.m1
            .iter()
            .chain(m.m2.iter())
            .all(|t| is_hintikka(arena, c, t) && universal_consistent(arena, c, t))
}

fn nominal_bearing(ctx: &Ctx, m: &Mosaic) -> bool {
    m.m1
        .iter()
        .chain(m.m2.iter())
        .any(|t| t.intersects(&ctx.nom_mask))
}

/// Number of interchangeable copies a mosaic contributes to witness sets:
/// one for constant-bearing mosaics, the largest closure grade otherwise.
fn mult(ctx: &Ctx, m: &Mosaic) -> u32 {
    if nominal_bearing(ctx, m) {
        1
    } else {
        ctx.kstar.max(1)
    }
}

/// Side-by-side agreement on global diamonds, vacuous on empty sides.
fn harmony(ctx: &Ctx, a: &Mosaic, b: &Mosaic) -> bool {
    for (sa, sb) in [(&a.m1, &b.m1), (&a.m2, &b.m2)] {
        if sa.is_empty() || sb.is_empty() {
            continue;
        }
        if sa[0].masked(&ctx.udias) != sb[0].masked(&ctx.udias) {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Enumeration

/// Enumerate every mosaic over the coherent types of closure `c`, with the
/// shared signature `rho` fixing the agreement conditions. With
/// `allow_empty_side` mosaics with exactly one empty side are included.
pub fn enumerate_mosaics(
    arena: &Arena,
    c: &ClosureIndex,
    rho: &Signature,
    allow_empty_side: bool,
    opts: &SeparationOpts,
) -> Result<MosaicSet, SeparationError> {
    if has_inverse(arena, c) {
        return Err(SeparationError::UnsupportedFragment(
            "inverse modalities are not supported here",
        ));
    }
    let ctx = build_ctx(arena, c, rho);
    let pool = type_pool(arena, c, opts)?;
    enumerate_with(&ctx, &pool, allow_empty_side, opts)
}

fn type_pool(
    arena: &Arena,
    c: &ClosureIndex,
    opts: &SeparationOpts,
) -> Result<Vec<Bits>, SeparationError> {
    let mut pool = Vec::new();
    for t in enumerate_hintikka(arena, c) {
        if !universal_consistent(arena, c, &t) {
            continue;
        }
        if pool.len() >= opts.mosaic_budget {
            return Err(SeparationError::Budget {
                stage: "type enumeration",
                limit: opts.mosaic_budget,
            });
        }
        pool.push(t);
    }
    Ok(pool)
}

fn enumerate_with(
    ctx: &Ctx,
    pool: &[Bits],
    allow_empty_side: bool,
    opts: &SeparationOpts,
) -> Result<MosaicSet, SeparationError> {
    // Group candidate types by shared-atom fingerprint, then by the set of
    // global diamonds they carry: a side draws from one inner group, the
    // two sides of a mosaic from one outer group.
    let mut classes: BTreeMap<Bits, BTreeMap<Bits, Vec<usize>>> = BTreeMap::new();
    for (i, t) in pool.iter().enumerate() {
        classes
            .entry(t.masked(&ctx.rho_atoms))
            .or_default()
            .entry(t.masked(&ctx.udias))
            .or_default()
            .push(i);
    }
    let mut truncated = false;
    let mut class_sides: Vec<Vec<Vec<usize>>> = Vec::new();
    for inner in classes.values() {
        let mut sides = Vec::new();
        for members in inner.values() {
            collect_sides(
                ctx,
                pool,
                members,
                opts.side_cap,
                opts.mosaic_budget,
                &mut sides,
                &mut truncated,
            )?;
        }
        class_sides.push(sides);
    }
    let mut total: usize = 0;
    for sides in &class_sides {
        total += sides.len() * sides.len();
        if allow_empty_side {
            total += 2 * sides.len();
        }
        if total > opts.mosaic_budget {
            return Err(SeparationError::Budget {
                stage: "mosaic enumeration",
                limit: opts.mosaic_budget,
            });
        }
    }
    let resolve = |s: &[usize]| -> Vec<Bits> {
        let mut v: Vec<Bits> = s.iter().map(|&i| pool[i].clone()).collect();
        v.sort_unstable();
        v
    };
    let mut mosaics = Vec::with_capacity(total);
    for sides in &class_sides {
        for s1 in sides {
            for s2 in sides {
                mosaics.push(Mosaic {
                    m1: resolve(s1),
                    m2: resolve(s2),
                });
            }
        }
        if allow_empty_side {
            for s in sides {
                mosaics.push(Mosaic {
                    m1: resolve(s),
                    m2: Vec::new(),
                });
                mosaics.push(Mosaic {
                    m1: Vec::new(),
                    m2: resolve(s),
                });
            }
        }
    }
    mosaics.sort_unstable();
    mosaics.dedup();
    Ok(MosaicSet {
        mosaics,
        exact: !truncated,
    })
}

/// Non-empty subsets of `members` in which no two types share a constant.
fn collect_sides(
    ctx: &Ctx,
    pool: &[Bits],
    members: &[usize],
    cap: Option<usize>,
    budget: usize,
    out: &mut Vec<Vec<usize>>,
    truncated: &mut bool,
) -> Result<(), SeparationError> {
    fn rec(
        ctx: &Ctx,
        pool: &[Bits],
        members: &[usize],
        pos: usize,
        cap: Option<usize>,
        budget: usize,
        current: &mut Vec<usize>,
        nom_acc: &mut Bits,
        out: &mut Vec<Vec<usize>>,
        truncated: &mut bool,
    ) -> Result<(), SeparationError> {
        if pos == members.len() {
            if !current.is_empty() {
                if out.len() >= budget {
                    return Err(SeparationError::Budget {
                        stage: "mosaic enumeration",
                        limit: budget,
                    });
                }
                out.push(current.clone());
            }
            return Ok(());
        }
        // Skip branch first: sides come out in increasing size.
        rec(
            ctx, pool, members, pos + 1, cap, budget, current, nom_acc, out, truncated,
        )?;
        let t = &pool[members[pos]];
        let tn = t.masked(&ctx.nom_mask);
        if cap.is_some_and(|k| current.len() >= k) {
            *truncated = true;
            return Ok(());
        }
        if tn.intersects(nom_acc) {
            return Ok(());
        }
        current.push(members[pos]);
        nom_acc.union_with(&tn);
        rec(
            ctx, pool, members, pos + 1, cap, budget, current, nom_acc, out, truncated,
        )?;
        current.pop();
        let mut restored = Bits::new(ctx.nlen);
        for &i in current.iter() {
            restored.union_with(&pool[i].masked(&ctx.nom_mask));
        }
        *nom_acc = restored;
        Ok(())
    }
    let mut current = Vec::new();
    let mut nom_acc = Bits::new(ctx.nlen);
    rec(
        ctx,
        pool,
        members,
        0,
        cap,
        budget,
        &mut current,
        &mut nom_acc,
        out,
        truncated,
    )
}

// ---------------------------------------------------------------------------
// Witness search

/// Grade window of one host type for one body: the count of successors
/// satisfying the body must be at least `lo` and, when bounded, at most
/// `hi`.
struct Delta {
    side: u8,
    ty: usize,
    lo: Vec<u32>,
    hi: Vec<Option<u32>>,
}

fn build_deltas(host: &Mosaic, rd: &RelDias) -> Vec<Delta> {
    let mut deltas = Vec::new();
    for side in [1u8, 2u8] {
        for (ty, t) in host.side(side).iter().enumerate() {
            let mut lo = vec![0u32; rd.bodies.len()];
            let mut hi = vec![None; rd.bodies.len()];
            for (bi, chain) in rd.chains.iter().enumerate() {
                for &(k, d) in chain {
                    if t.get(d) {
                        lo[bi] = lo[bi].max(k);
                    } else {
                        let bound = k.saturating_sub(1);
                        hi[bi] = Some(hi[bi].map_or(bound, |h: u32| h.min(bound)));
                    }
                }
            }
            deltas.push(Delta { side, ty, lo, hi });
        }
    }
    deltas
}

/// Per-candidate slot view for one side: the candidate's types with their
/// body profiles, each usable `cap` times by every host type.
struct CandView {
    cap: u32,
    /// Per side (0 = side 1): (type index, bitmask over bodies).
    slots: [Vec<(usize, u64)>; 2],
}

fn cand_view(ctx: &Ctx, set: &[Mosaic], index: usize, rd: &RelDias) -> CandView {
    let profile = |t: &Bits| -> u64 {
        let mut p = 0u64;
        for (bi, &b) in rd.bodies.iter().enumerate() {
            if t.get(b) {
                p |= 1 << bi;
            }
        }
        p
    };
    let m = &set[index];
    let slots = [
        m.m1
            .iter()
            .enumerate()
            .map(|(i, t)| (i, profile(t)))
            .collect(),
        m.m2
            .iter()
            .enumerate()
            .map(|(i, t)| (i, profile(t)))
            .collect(),
    ];
    CandView {
        cap: mult(ctx, m),
        slots,
    }
}

/// Count assignment for one host type: (position in the member list, type
/// index within that member, successor count).
type DeltaSolution = Vec<(usize, usize, u32)>;

/// Feasible successor counts for one host type over the given members.
/// `require_hit` demands at least one successor in every member. Counting
/// windows are enforced exactly; dead states are memoized on the member
/// position plus the counts clamped at their remaining relevance.
fn solve_delta(delta: &Delta, members: &[&CandView], require_hit: bool) -> Option<DeltaSolution> {
    let nb = delta.lo.len();
    let side = (delta.side - 1) as usize;
    // Suffix bound: the most each body count can still grow.
    let mut suffix = vec![vec![0u32; nb]; members.len() + 1];
    for (mi, m) in members.iter().enumerate().rev() {
        for b in 0..nb {
            let mut add = 0;
            for &(_, p) in &m.slots[side] {
                if p & (1 << b) != 0 {
                    add += m.cap;
                }
            }
            suffix[mi][b] = suffix[mi + 1][b].saturating_add(add);
        }
    }
    let clamp = move |counts: &[u32]| -> Vec<u32> {
        counts
            .iter()
            .enumerate()
            .map(|(b, &v)| match delta.hi[b] {
                Some(_) => v,
                None => v.min(delta.lo[b]),
            })
            .collect()
    };
    let mut search = SearchState {
        delta,
        members,
        side,
        require_hit,
        suffix,
        failed: Default::default(),
    };
    let counts = vec![0u32; nb];
    search.member(0, counts, &clamp).map(|mut chosen| {
        chosen.retain(|&(_, _, cnt)| cnt > 0);
        chosen
    })
}

/// Count search state; counts are passed by value so no undo is needed.
struct SearchState<'a> {
    delta: &'a Delta,
    members: &'a [&'a CandView],
    side: usize,
    require_hit: bool,
    suffix: Vec<Vec<u32>>,
    failed: std::collections::HashSet<(usize, Vec<u32>)>,
}

impl SearchState<'_> {
    fn member(
        &mut self,
        mi: usize,
        counts: Vec<u32>,
        clamp: &dyn Fn(&[u32]) -> Vec<u32>,
    ) -> Option<DeltaSolution> {
        let nb = self.delta.lo.len();
        if mi == self.members.len() {
            if (0..nb).all(|b| counts[b] >= self.delta.lo[b]) {
                return Some(Vec::new());
            }
            return None;
        }
        for b in 0..nb {
            if counts[b].saturating_add(self.suffix[mi][b]) < self.delta.lo[b] {
                return None;
            }
        }
        let key = (mi, clamp(&counts));
        if self.failed.contains(&key) {
            return None;
        }
        if let Some(sol) = self.slot(mi, 0, false, counts.clone(), clamp) {
            return Some(sol);
        }
        self.failed.insert((mi, clamp(&counts)));
        None
    }

    fn slot(
        &mut self,
        mi: usize,
        si: usize,
        hit: bool,
        counts: Vec<u32>,
        clamp: &dyn Fn(&[u32]) -> Vec<u32>,
    ) -> Option<DeltaSolution> {
        let m = self.members[mi];
        if si == m.slots[self.side].len() {
            if self.require_hit && !hit {
                return None;
            }
            return self.member(mi + 1, counts, clamp);
        }
        let (ty, p) = m.slots[self.side][si];
        let max_here = if p == 0 { 1.min(m.cap) } else { m.cap };
        let mut cur = counts;
        for take in 0..=max_here {
            if take > 0 {
                for b in 0..self.delta.lo.len() {
                    if p & (1 << b) != 0 {
                        cur[b] += 1;
                    }
                }
                let over = (0..self.delta.lo.len()).any(|b| {
                    p & (1 << b) != 0 && self.delta.hi[b].is_some_and(|h| cur[b] > h)
                });
                if over {
                    return None;
                }
            }
            if let Some(mut sol) = self.slot(mi, si + 1, hit || take > 0, cur.clone(), clamp) {
                if take > 0 {
                    sol.push((mi, ty, take));
                }
                return Some(sol);
            }
        }
        None
    }
}

/// Internal witness: candidate indices refer to the ambient mosaic list.
struct RawWitness {
    members: Vec<usize>,
    edges: Vec<WitnessEdge>,
}

fn assemble_edges(deltas: &[Delta], solutions: &[(usize, DeltaSolution)], members: &[usize]) -> Vec<WitnessEdge> {
    let mut edges = Vec::new();
    for &(di, ref sol) in solutions {
        let d = &deltas[di];
        for &(mpos, ty, cnt) in sol {
            for copy in 1..=cnt {
                edges.push(WitnessEdge {
                    side: d.side,
                    from: d.ty,
                    to_mosaic: members[mpos],
                    to_type: ty,
                    copy,
                });
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Search a witness for `rel` at `host` among the `alive` entries of `set`.
fn witness_search(
    ctx: &Ctx,
    host: &Mosaic,
    set: &[Mosaic],
    alive: &[bool],
    rel: &str,
) -> Option<RawWitness> {
    let rd = match ctx.rels.get(rel) {
        Some(rd) => rd,
        None => {
            return Some(RawWitness {
                members: Vec::new(),
                edges: Vec::new(),
            })
        }
    };
    let deltas = build_deltas(host, rd);
    if deltas.iter().all(|d| d.lo.iter().all(|&x| x == 0)) {
        // No positive demand: the empty witness satisfies every window.
        return Some(RawWitness {
            members: Vec::new(),
            edges: Vec::new(),
        });
    }
    let cands: Vec<usize> = (0..set.len())
        .filter(|&j| alive[j] && harmony(ctx, host, &set[j]))
        .collect();
    let views: Vec<CandView> = cands.iter().map(|&j| cand_view(ctx, set, j, rd)).collect();
    let shared = ctx.rho.rels.contains(rel);
    if !shared {
        // Host types are independent: each picks from all candidates.
        let refs: Vec<&CandView> = views.iter().collect();
        let mut solutions = Vec::new();
        for (di, d) in deltas.iter().enumerate() {
            let sol = solve_delta(d, &refs, false)?;
            solutions.push((di, sol));
        }
        let mut used: BTreeSet<usize> = BTreeSet::new();
        for (_, sol) in &solutions {
            for &(mpos, _, _) in sol {
                used.insert(cands[mpos]);
            }
        }
        let members: Vec<usize> = used.into_iter().collect();
        let posmap: HashMap<usize, usize> = members
            .iter()
            .enumerate()
            .map(|(p, &idx)| (idx, p))
            .collect();
        let relocated: Vec<(usize, DeltaSolution)> = solutions
            .into_iter()
            .map(|(di, sol)| {
                (
                    di,
                    sol.into_iter()
                        .map(|(mpos, ty, cnt)| (posmap[&cands[mpos]], ty, cnt))
                        .collect(),
                )
            })
            .collect();
        let edges = assemble_edges(&deltas, &relocated, &members);
        return Some(RawWitness { members, edges });
    }
    // Shared relation: every host type must reach exactly the same
    // candidates, so search for a common hit set.
    let host_nonempty = [!host.m1.is_empty(), !host.m2.is_empty()];
    let h0: Vec<usize> = (0..views.len())
        .filter(|&v| {
            (0..2).all(|s| !host_nonempty[s] || !views[v].slots[s].is_empty())
        })
        .collect();
    let try_h = |h: &[usize]| -> Option<Vec<(usize, DeltaSolution)>> {
        let refs: Vec<&CandView> = h.iter().map(|&v| &views[v]).collect();
        let mut out = Vec::new();
        for (di, d) in deltas.iter().enumerate() {
            let sol = solve_delta(d, &refs, true)?;
            out.push((di, sol));
        }
        Some(out)
    };
    // Greedy: start from everything reachable and drop one blocking
    // candidate at a time.
    let mut h = h0.clone();
    let greedy = 'greedy: loop {
        let refs: Vec<&CandView> = h.iter().map(|&v| &views[v]).collect();
        let mut sols = Vec::new();
        let mut stuck = false;
        for (di, d) in deltas.iter().enumerate() {
            match solve_delta(d, &refs, true) {
                Some(sol) => sols.push((di, sol)),
                None => {
                    for drop in 0..h.len() {
                        let mut h2 = h.clone();
                        h2.remove(drop);
                        let refs2: Vec<&CandView> = h2.iter().map(|&v| &views[v]).collect();
                        if solve_delta(d, &refs2, true).is_some() {
                            h = h2;
                            continue 'greedy;
                        }
                    }
                    stuck = true;
                    break;
                }
            }
        }
        if stuck {
            break None;
        }
        break Some((h.clone(), sols));
    };
    let found = greedy.or_else(|| exhaustive_h(ctx, set, &views, &cands, &h0, &deltas, &try_h));
    let (hsel, solutions) = found?;
    let members: Vec<usize> = hsel.iter().map(|&v| cands[v]).collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by_key(|&p| members[p]);
    let sorted_members: Vec<usize> = order.iter().map(|&p| members[p]).collect();
    let mut posmap = vec![0usize; members.len()];
    for (newpos, &old) in order.iter().enumerate() {
        posmap[old] = newpos;
    }
    let relocated: Vec<(usize, DeltaSolution)> = solutions
        .into_iter()
        .map(|(di, sol)| {
            (
                di,
                sol.into_iter()
                    .map(|(mpos, ty, cnt)| (posmap[mpos], ty, cnt))
                    .collect(),
            )
        })
        .collect();
    let edges = assemble_edges(&deltas, &relocated, &sorted_members);
    Some(RawWitness {
        members: sorted_members,
        edges,
    })
}

/// Exhaustive hit-set search. Candidates with identical slot structure are
/// interchangeable, and no flavor ever needs more copies than all counting
/// lower bounds plus one can consume, so the search is complete within that
/// bound.
#[allow(clippy::too_many_arguments)]
fn exhaustive_h(
    ctx: &Ctx,
    set: &[Mosaic],
    views: &[CandView],
    _cands: &[usize],
    h0: &[usize],
    deltas: &[Delta],
    try_h: &dyn Fn(&[usize]) -> Option<Vec<(usize, DeltaSolution)>>,
) -> Option<(Vec<usize>, Vec<(usize, DeltaSolution)>)> {
    let _ = (ctx, set);
    let nb = deltas.first().map_or(0, |d| d.lo.len());
    let kcap = deltas
        .iter()
        .flat_map(|d| d.lo.iter())
        .copied()
        .max()
        .unwrap_or(0);
    let bound = (nb as u32 * kcap + 1) as usize;
    // Group interchangeable candidates.
    let mut flavors: BTreeMap<(Vec<(usize, u64)>, Vec<(usize, u64)>, u32), Vec<usize>> =
        BTreeMap::new();
    for &v in h0 {
        let key = (
            views[v].slots[0].clone(),
            views[v].slots[1].clone(),
            views[v].cap,
        );
        flavors.entry(key).or_default().push(v);
    }
    let groups: Vec<&Vec<usize>> = flavors.values().collect();
    fn rec(
        groups: &[&Vec<usize>],
        gi: usize,
        bound: usize,
        current: &mut Vec<usize>,
        try_h: &dyn Fn(&[usize]) -> Option<Vec<(usize, DeltaSolution)>>,
    ) -> Option<(Vec<usize>, Vec<(usize, DeltaSolution)>)> {
        if gi == groups.len() {
            return try_h(current).map(|sols| (current.clone(), sols));
        }
        let avail = groups[gi].len().min(bound);
        for take in 0..=avail {
            let len_before = current.len();
            current.extend_from_slice(&groups[gi][..take]);
            if let Some(found) = rec(groups, gi + 1, bound, current, try_h) {
                return Some(found);
            }
            current.truncate(len_before);
        }
        None
    }
    let mut current = Vec::new();
    rec(&groups, 0, bound, &mut current, try_h)
}

/// Search a witness for `rel` at `host` among `set`; `None` means no edge
/// relation over any candidate subset meets every condition.
pub fn find_r_witness(
    arena: &Arena,
    c: &ClosureIndex,
    rho: &Signature,
    host: &Mosaic,
    set: &[Mosaic],
    rel: &str,
) -> Option<WitnessCert> {
    let ctx = build_ctx(arena, c, rho);
    let alive = vec![true; set.len()];
    witness_search(&ctx, host, set, &alive, rel).map(|raw| WitnessCert {
        rel: rel.to_string(),
        host: host.clone(),
        members: raw.members,
        edges: raw.edges,
    })
}

/// Re-verify a witness literally: harmony of every member with the host,
/// exact counting windows for every host type, and the transfer condition
/// for shared relations.
pub fn verify_r_witness(
    arena: &Arena,
    c: &ClosureIndex,
    rho: &Signature,
    cert: &WitnessCert,
    set: &[Mosaic],
) -> bool {
    let ctx = build_ctx(arena, c, rho);
    let member_set: BTreeSet<usize> = cert.members.iter().copied().collect();
    if member_set.len() != cert.members.len() || cert.members.iter().any(|&m| m >= set.len()) {
        return false;
    }
    // Harmony: on each side, host and member types all agree on global
    // diamonds.
    for &mi in &cert.members {
        for side in [1u8, 2u8] {
            let all: Vec<&Bits> = cert
                .host
                .side(side)
                .iter()
                .chain(set[mi].side(side).iter())
                .collect();
            if all
                .windows(2)
                .any(|w| w[0].masked(&ctx.udias) != w[1].masked(&ctx.udias))
            {
                return false;
            }
        }
    }
    // Edge sanity: endpoints in range, copies within multiplicity, no
    // duplicates.
    let mut seen = BTreeSet::new();
    for e in &cert.edges {
        if e.side != 1 && e.side != 2 {
            return false;
        }
        if e.from >= cert.host.side(e.side).len() || !member_set.contains(&e.to_mosaic) {
            return false;
        }
        let target = &set[e.to_mosaic];
        if e.to_type >= target.side(e.side).len() {
            return false;
        }
        if e.copy == 0 || e.copy > mult(&ctx, target) {
            return false;
        }
        if !seen.insert((e.side, e.from, e.to_mosaic, e.to_type, e.copy)) {
            return false;
        }
    }
    // Counting: successor counts match the graded diamonds of each host
    // type exactly.
    if let Some(rd) = ctx.rels.get(&cert.rel) {
        for side in [1u8, 2u8] {
            for (ty, t) in cert.host.side(side).iter().enumerate() {
                for (bi, &b) in rd.bodies.iter().enumerate() {
                    let cnt = cert
                        .edges
                        .iter()
                        .filter(|e| {
                            e.side == side
                                && e.from == ty
                                && set[e.to_mosaic].side(side)[e.to_type].get(b)
                        })
                        .count() as u32;
                    for &(k, d) in &rd.chains[bi] {
                        if (cnt >= k) != t.get(d) {
                            return false;
                        }
                    }
                }
            }
        }
    } else if !cert.edges.is_empty() {
        return false;
    }
    // Transfer: for a shared relation every host type reaches the same
    // candidates.
    if ctx.rho.rels.contains(&cert.rel) {
        let mut hits: Vec<BTreeSet<usize>> = Vec::new();
        for side in [1u8, 2u8] {
            for ty in 0..cert.host.side(side).len() {
                hits.push(
                    cert.edges
                        .iter()
                        .filter(|e| e.side == side && e.from == ty)
                        .map(|e| e.to_mosaic)
                        .collect(),
                );
            }
        }
        if hits.windows(2).any(|w| w[0] != w[1]) {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Elimination

struct Fixpoint {
    alive: Vec<bool>,
    wits: HashMap<(usize, String), RawWitness>,
}

fn positive_rels(ctx: &Ctx, m: &Mosaic) -> Vec<String> {
    let mut out = Vec::new();
    for (rel, rd) in &ctx.rels {
        let positive = m.m1.iter().chain(m.m2.iter()).any(|t| {
            rd.chains
                .iter()
                .any(|chain| chain.iter().any(|&(_, d)| t.get(d)))
        });
        if positive {
            out.push(rel.clone());
        }
    }
    out
}

fn udia_demands(ctx: &Ctx, m: &Mosaic) -> Vec<(u8, usize)> {
    let mut out = BTreeSet::new();
    for side in [1u8, 2u8] {
        for t in m.side(side) {
            for &(d, b) in &ctx.udia_list {
                if t.get(d) {
                    out.insert((side, b));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Remove mosaics with an unmeetable demand until none is left. A graded
/// demand needs a witness among the survivors; a global diamond needs a
/// harmonious survivor realizing its body on the same side. The result is
/// the greatest self-supporting subset, independent of scan order.
fn eliminate_fixpoint(ctx: &Ctx, set: &[Mosaic]) -> Fixpoint {
    let n = set.len();
    let mut alive = vec![true; n];
    let mut wits: HashMap<(usize, String), RawWitness> = HashMap::new();
    let pos_rels: Vec<Vec<String>> = set.iter().map(|m| positive_rels(ctx, m)).collect();
    let demands: Vec<Vec<(u8, usize)>> = set.iter().map(|m| udia_demands(ctx, m)).collect();
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        debug_assert!(rounds <= n + 1, "elimination must settle within |S0| rounds");
        let mut changed = false;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let mut bad = false;
            for &(side, body) in &demands[i] {
                let met = (0..n).any(|j| {
                    alive[j]
                        && harmony(ctx, &set[i], &set[j])
                        && set[j].side(side).iter().any(|t| t.get(body))
                });
                if !met {
                    bad = true;
                    break;
                }
            }
            if !bad {
                for rel in &pos_rels[i] {
                    let key = (i, rel.clone());
                    let cached_ok = wits
                        .get(&key)
                        .is_some_and(|w| w.members.iter().all(|&m| alive[m]));
                    if cached_ok {
                        continue;
                    }
                    match witness_search(ctx, &set[i], set, &alive, rel) {
                        Some(w) => {
                            wits.insert(key, w);
                        }
                        None => {
                            bad = true;
                            break;
                        }
                    }
                }
            }
            if bad {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Fixpoint { alive, wits }
}

/// Filter `s0` to constant-free mosaics plus the anchor's mosaics, then
/// eliminate to the greatest self-supporting subset.
pub fn eliminate(
    arena: &Arena,
    c: &ClosureIndex,
    rho: &Signature,
    s0: &[Mosaic],
    anchor: &NominalAnchor,
) -> Result<Vec<Mosaic>, SeparationError> {
    if has_inverse(arena, c) {
        return Err(SeparationError::UnsupportedFragment(
            "inverse modalities are not supported here",
        ));
    }
    let ctx = build_ctx(arena, c, rho);
    let sub: Vec<Mosaic> = s0
        .iter()
        .filter(|m| !nominal_bearing(&ctx, m) || anchor.assignments.values().any(|a| a == *m))
        .cloned()
        .collect();
    let fp = eliminate_fixpoint(&ctx, &sub);
    Ok(sub
        .into_iter()
        .zip(fp.alive)
        .filter_map(|(m, ok)| ok.then_some(m))
        .collect())
}

// ---------------------------------------------------------------------------
// Anchors

/// Enumerate every total assignment of candidate mosaics to (constant,
/// side) slots. Choosing a mosaic anchors every constant it carries to it;
/// shared constants must get the same mosaic on both sides.
fn enumerate_anchors(
    ctx: &Ctx,
    set: &[Mosaic],
    budget: usize,
) -> Result<Vec<BTreeMap<(String, u8), usize>>, SeparationError> {
    let mut names: Vec<(String, usize)> = Vec::new();
    for &(member, ref name) in &ctx.noms {
        if !names.iter().any(|(n, _)| n == name) {
            names.push((name.clone(), member));
        }
    }
    names.sort();
    if names.is_empty() {
        return Ok(vec![BTreeMap::new()]);
    }
    let member_of: BTreeMap<&str, usize> = names.iter().map(|(n, m)| (n.as_str(), *m)).collect();
    let slots: Vec<(String, u8)> = names
        .iter()
        .flat_map(|(n, _)| [(n.clone(), 1u8), (n.clone(), 2u8)])
        .collect();
    let slot_pos: BTreeMap<(String, u8), usize> = slots
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let carries = |mi: usize, name: &str, side: u8| -> bool {
        let member = member_of[name];
        set[mi].side(side).iter().any(|t| t.get(member))
    };
    let candidates: Vec<Vec<usize>> = slots
        .iter()
        .map(|(n, s)| {
            (0..set.len())
                .filter(|&mi| carries(mi, n, *s))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut assign: Vec<Option<usize>> = vec![None; slots.len()];

    // Assigning `mi` to `slot` forces every constant occurrence in `mi`
    // and, for shared constants, the opposite side. Returns the forced
    // slots on success so they can be rolled back.
    fn force(
        ctx: &Ctx,
        set: &[Mosaic],
        slots: &[(String, u8)],
        slot_pos: &BTreeMap<(String, u8), usize>,
        names: &[(String, usize)],
        assign: &mut [Option<usize>],
        slot: usize,
        mi: usize,
        touched: &mut Vec<usize>,
    ) -> bool {
        let mut queue = vec![(slot, mi)];
        while let Some((s, m)) = queue.pop() {
            match assign[s] {
                Some(prev) if prev == m => continue,
                Some(_) => return false,
                None => {}
            }
            let (ref name, side) = slots[s];
            let member = names.iter().find(|(n, _)| n == name).map(|(_, mm)| *mm);
            let member = match member {
                Some(mm) => mm,
                None => return false,
            };
            if !set[m].side(side).iter().any(|t| t.get(member)) {
                return false;
            }
            assign[s] = Some(m);
            touched.push(s);
            // Every constant occurring in the chosen mosaic anchors there.
            for (n2, m2) in names {
                for side2 in [1u8, 2u8] {
                    if set[m].side(side2).iter().any(|t| t.get(*m2)) {
                        queue.push((slot_pos[&(n2.clone(), side2)], m));
                    }
                }
            }
            // A shared constant is anchored to one mosaic on both sides.
            if ctx.rho.consts.contains(name) {
                let other = if side == 1 { 2u8 } else { 1u8 };
                queue.push((slot_pos[&(name.clone(), other)], m));
            }
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        ctx: &Ctx,
        set: &[Mosaic],
        slots: &[(String, u8)],
        slot_pos: &BTreeMap<(String, u8), usize>,
        names: &[(String, usize)],
        candidates: &[Vec<usize>],
        assign: &mut [Option<usize>],
        pos: usize,
        budget: usize,
        out: &mut Vec<BTreeMap<(String, u8), usize>>,
    ) -> Result<(), SeparationError> {
        if pos == slots.len() {
            if out.len() >= budget {
                return Err(SeparationError::Budget {
                    stage: "anchor enumeration",
                    limit: budget,
                });
            }
            out.push(
                slots
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.clone(), assign[i].expect("assignment is total")))
                    .collect(),
            );
            return Ok(());
        }
        if assign[pos].is_some() {
            return rec(
                ctx, set, slots, slot_pos, names, candidates, assign, pos + 1, budget, out,
            );
        }
        for &mi in &candidates[pos] {
            let mut touched = Vec::new();
            if force(
                ctx, set, slots, slot_pos, names, assign, pos, mi, &mut touched,
            ) {
                rec(
                    ctx, set, slots, slot_pos, names, candidates, assign, pos + 1, budget, out,
                )?;
            }
            for t in touched {
                assign[t] = None;
            }
        }
        Ok(())
    }

    rec(
        ctx,
        set,
        &slots,
        &slot_pos,
        &names,
        &candidates,
        &mut assign,
        0,
        budget,
        &mut out,
    )?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Padding and renaming

/// Pad each formula with vacuous conjuncts mentioning the other's symbols,
/// so both signatures become the union while truth is unchanged.
pub fn craig_pad(arena: &mut Arena, f: Fml, g: Fml) -> (Fml, Fml) {
    let sf = signature_of(arena, f);
    let sg = signature_of(arena, g);
    (
        pad_one(arena, f, &sf, &sg),
        pad_one(arena, g, &sg, &sf),
    )
}

fn pad_one(arena: &mut Arena, f: Fml, own: &Signature, other: &Signature) -> Fml {
    let mut acc = f;
    for p in other.props.difference(&own.props) {
        let a = arena.prop(p);
        let taut = arena.implies(a, a);
        acc = arena.and(acc, taut);
    }
    for r in other.rels.difference(&own.rels) {
        let top = arena.top();
        let d = arena.dia(r, false, 1, top);
        let taut = arena.implies(d, d);
        acc = arena.and(acc, taut);
    }
    for cst in other.consts.difference(&own.consts) {
        let a = arena.nom(cst);
        let taut = arena.implies(a, a);
        acc = arena.and(acc, taut);
    }
    acc
}

fn rename_consts(arena: &mut Arena, f: Fml, map: &BTreeMap<String, String>) -> Fml {
    let mut memo: HashMap<Fml, Fml> = HashMap::new();
    for g in arena.subformulas(f) {
        let ng = match arena.node(g) {
            Node::Nom(s) => {
                let name = arena.sym_name(s).to_string();
                match map.get(&name) {
                    Some(nn) => {
                        let nn = nn.clone();
                        arena.nom(&nn)
                    }
                    None => g,
                }
            }
            Node::Not(x) => {
                let nx = memo[&x];
                arena.not(nx)
            }
            Node::And(a, b) => {
                let (na, nb) = (memo[&a], memo[&b]);
                arena.and(na, nb)
            }
            Node::Dia {
                rel,
                inv,
                grade,
                body,
            } => {
                let rname = arena.sym_name(rel).to_string();
                let nb = memo[&body];
                arena.dia(&rname, inv, grade, nb)
            }
            Node::Udia(x) => {
                let nx = memo[&x];
                arena.udia(nx)
            }
            _ => g,
        };
        memo.insert(g, ng);
    }
    memo[&f]
}

fn fresh_names(shared: &BTreeSet<String>, taken: &Signature) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    let mut used: BTreeSet<String> = taken.consts.clone();
    for c in shared {
        let mut n = 1usize;
        let fresh = loop {
            let cand = if n == 1 {
                format!("{c}_r")
            } else {
                format!("{c}_r{n}")
            };
            if !used.contains(&cand) {
                break cand;
            }
            n += 1;
        };
        used.insert(fresh.clone());
        map.insert(c.clone(), fresh);
    }
    map
}

// ---------------------------------------------------------------------------
// Decision procedure

/// Decide whether a formula of `target` over the mode's shared signature
/// separates `f1` from `f2`. The target must be counting-free and
/// forward-only; the inputs may use counting, constants, and the global
/// modality. `NotSeparable` carries a certificate; when the inputs and the
/// target avoid the global modality it includes finite pointed models of
/// the inputs linked by a verified bisimulation.
pub fn decide_separation(
    arena: &mut Arena,
    f1: Fml,
    f2: Fml,
    target: Fragment,
    mode: SeparationMode,
    opts: &SeparationOpts,
) -> Result<Separation, SeparationError> {
    run_separation(arena, f1, f2, target, mode, opts, false)
}

/// Depth-bounded variant: unfolds survivors into models truncated at the
/// inputs' modal depth and takes the verdict from direct verification of
/// those models. Requires inputs and target without the global modality;
/// agrees with [`decide_separation`] on its domain.
pub fn decide_separation_bounded(
    arena: &mut Arena,
    f1: Fml,
    f2: Fml,
    target: Fragment,
    mode: SeparationMode,
    opts: &SeparationOpts,
) -> Result<Separation, SeparationError> {
    run_separation(arena, f1, f2, target, mode, opts, true)
}

fn run_separation(
    arena: &mut Arena,
    f1: Fml,
    f2: Fml,
    target: Fragment,
    mode: SeparationMode,
    opts: &SeparationOpts,
    bounded: bool,
) -> Result<Separation, SeparationError> {
    let source = Fragment::gml().with_nominals().with_universal();
    if !fragment_check(arena, f1, source) || !fragment_check(arena, f2, source) {
        return Err(SeparationError::UnsupportedFragment(
            "inputs must be counting formulas without inverse modalities",
        ));
    }
    if target.graded || target.inverse {
        return Err(SeparationError::UnsupportedFragment(
            "target must be counting-free and forward-only",
        ));
    }
    if bounded && target.universal {
        return Err(SeparationError::UnsupportedFragment(
            "bounded decision requires a target without the global modality",
        ));
    }
    let (g1, mut g2) = match mode {
        SeparationMode::Plain => craig_pad(arena, f1, f2),
        _ => (f1, f2),
    };
    // A target without constants cannot tie the two structures' constants
    // together: make the shared constants formally disjoint.
    let mut renames: BTreeMap<String, String> = BTreeMap::new();
    if !target.nominals {
        let s1 = signature_of(arena, g1);
        let s2 = signature_of(arena, g2);
        let shared: BTreeSet<String> = s1.consts.intersection(&s2.consts).cloned().collect();
        if !shared.is_empty() {
            let fwd = fresh_names(&shared, &s1.union(&s2));
            g2 = rename_consts(arena, g2, &fwd);
            renames = fwd.into_iter().map(|(orig, fresh)| (fresh, orig)).collect();
        }
    }
    let s1 = signature_of(arena, g1);
    let s2 = signature_of(arena, g2);
    let mut rho = match mode {
        SeparationMode::Plain | SeparationMode::Craig => s1.intersection(&s2),
        SeparationMode::UnaryCraig => Signature {
            props: s1.props.intersection(&s2.props).cloned().collect(),
            rels: s1.rels.union(&s2.rels).cloned().collect(),
            consts: s1.consts.union(&s2.consts).cloned().collect(),
        },
    };
    if !target.nominals {
        rho.consts.clear();
    }
    let c = closure(arena, g1, g2);
    let udia_free = !c
        .members()
        .iter()
        .any(|&f| matches!(arena.node(f), Node::Udia(_)));
    if bounded && !udia_free {
        return Err(SeparationError::UnsupportedFragment(
            "bounded decision requires inputs without the global modality",
        ));
    }
    let ctx = build_ctx(arena, &c, &rho);
    let allow_empty = !target.universal;
    let pool = type_pool(arena, &c, opts)?;
    let ms = enumerate_with(&ctx, &pool, allow_empty, opts)?;
    let all = ms.mosaics;
    let f1i = c.index_of(g1).expect("inputs are closure members");
    let f2i = c.index_of(g2).expect("inputs are closure members");
    let depth = arena.modal_depth(g1).max(arena.modal_depth(g2));
    let emit_models = allow_empty && udia_free;
    // All elements of one structure share a single valuation of the
    // somewhere-atoms, so every mosaic of one inseparability witness shows
    // the same per-side fingerprint on its non-empty sides. Decide class by
    // class; pairwise harmony alone would let incompatible fingerprints
    // chain through empty-sided mosaics.
    let fp = |side: &[Bits]| side[0].masked(&ctx.udias);
    let u1: BTreeSet<Bits> = all
        .iter()
        .filter(|m| !m.m1.is_empty())
        .map(|m| fp(&m.m1))
        .collect();
    let u2: BTreeSet<Bits> = all
        .iter()
        .filter(|m| !m.m2.is_empty())
        .map(|m| fp(&m.m2))
        .collect();
    for (c1, c2) in u1.iter().flat_map(|a| u2.iter().map(move |b| (a, b))) {
        let set: Vec<Mosaic> = all
            .iter()
            .filter(|m| {
                (m.m1.is_empty() || fp(&m.m1) == *c1) && (m.m2.is_empty() || fp(&m.m2) == *c2)
            })
            .cloned()
            .collect();
        if let Some(cert) = run_class(
            arena, &ctx, &rho, &set, f1i, f2i, depth, emit_models, &renames, target, opts,
            bounded, f1, f2,
        )? {
            return Ok(Separation::NotSeparable(Box::new(cert)));
        }
    }
    Ok(Separation::Separable)
}

/// Search one somewhere-fingerprint class for an inseparability witness.
#[allow(clippy::too_many_arguments)]
fn run_class(
    arena: &Arena,
    ctx: &Ctx,
    rho: &Signature,
    set: &[Mosaic],
    f1i: usize,
    f2i: usize,
    depth: u32,
    emit_models: bool,
    renames: &BTreeMap<String, String>,
    target: Fragment,
    opts: &SeparationOpts,
    bounded: bool,
    f1: Fml,
    f2: Fml,
) -> Result<Option<SeparationCert>, SeparationError> {
    let anchors = enumerate_anchors(ctx, set, opts.anchor_budget)?;
    for anchor_map in anchors {
        // Restrict to constant-free mosaics plus the anchored ones.
        let anchored: BTreeSet<usize> = anchor_map.values().copied().collect();
        let sub_idx: Vec<usize> = (0..set.len())
            .filter(|&i| !nominal_bearing(ctx, &set[i]) || anchored.contains(&i))
            .collect();
        let sub: Vec<Mosaic> = sub_idx.iter().map(|&i| set[i].clone()).collect();
        let set_to_sub: HashMap<usize, usize> = sub_idx
            .iter()
            .enumerate()
            .map(|(p, &i)| (i, p))
            .collect();
        let fixp = eliminate_fixpoint(ctx, &sub);
        let anchor_sub: BTreeMap<(String, u8), usize> = anchor_map
            .iter()
            .map(|(k, &i)| (k.clone(), set_to_sub[&i]))
            .collect();
        if anchor_sub.values().any(|&p| !fixp.alive[p]) {
            continue;
        }
        let anchor_positions: BTreeSet<usize> = anchor_sub.values().copied().collect();
        for (pos, m) in sub.iter().enumerate() {
            if !fixp.alive[pos] || m.m1.is_empty() || m.m2.is_empty() {
                continue;
            }
            if !anchor_positions.iter().all(|&a| harmony(ctx, m, &sub[a])) {
                continue;
            }
            let t1 = match m.m1.iter().position(|t| t.get(f1i)) {
                Some(t) => t,
                None => continue,
            };
            let t2 = match m.m2.iter().position(|t| t.get(f2i)) {
                Some(t) => t,
                None => continue,
            };
            let models = if emit_models {
                Some(build_models(
                    ctx,
                    &sub,
                    &fixp,
                    &anchor_sub,
                    pos,
                    (t1, t2),
                    depth,
                    renames,
                    target,
                    opts.model_budget,
                )?)
            } else {
                None
            };
            if bounded {
                let cm = models.as_ref().expect("bounded mode always builds models");
                if !models_verify(arena, f1, f2, cm) {
                    continue;
                }
            } else if let Some(cm) = &models {
                debug_assert!(
                    models_verify(arena, f1, f2, cm),
                    "constructed models must satisfy the inputs and the bisimulation conditions"
                );
            }
            let cert = assemble_cert(
                rho, &sub, &fixp, &anchor_sub, pos, (t1, t2), models,
            );
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

fn models_verify(arena: &Arena, f1: Fml, f2: Fml, cm: &CertModels) -> bool {
    model_check(arena, &cm.left.structure, cm.left.point, f1) == Ok(true)
        && model_check(arena, &cm.right.structure, cm.right.point, f2) == Ok(true)
        && cm.relation.contains(cm.left.point, cm.right.point)
        && verify_bisimulation(&cm.relation, &cm.left.structure, &cm.right.structure).is_ok()
}

#[allow(clippy::too_many_arguments)]
fn assemble_cert(
    rho: &Signature,
    sub: &[Mosaic],
    fixp: &Fixpoint,
    anchor_sub: &BTreeMap<(String, u8), usize>,
    root: usize,
    root_types: (usize, usize),
    models: Option<CertModels>,
) -> SeparationCert {
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut surviving = Vec::new();
    for (i, m) in sub.iter().enumerate() {
        if fixp.alive[i] {
            remap.insert(i, surviving.len());
            surviving.push(m.clone());
        }
    }
    let mut witnesses = Vec::new();
    let mut keys: Vec<&(usize, String)> = fixp.wits.keys().collect();
    keys.sort();
    for key in keys {
        let (host_idx, rel) = key;
        if !fixp.alive[*host_idx] {
            continue;
        }
        let raw = &fixp.wits[key];
        witnesses.push(WitnessCert {
            rel: rel.clone(),
            host: sub[*host_idx].clone(),
            members: raw.members.iter().map(|m| remap[m]).collect(),
            edges: raw
                .edges
                .iter()
                .map(|e| WitnessEdge {
                    to_mosaic: remap[&e.to_mosaic],
                    ..e.clone()
                })
                .collect(),
        });
    }
    SeparationCert {
        rho: rho.clone(),
        anchor: NominalAnchor {
            assignments: anchor_sub
                .iter()
                .map(|(k, &p)| (k.clone(), sub[p].clone()))
                .collect(),
        },
        root: sub[root].clone(),
        root_types: (
            sub[root].m1[root_types.0].clone(),
            sub[root].m2[root_types.1].clone(),
        ),
        surviving,
        witnesses,
        models,
    }
}

// ---------------------------------------------------------------------------
// Model construction

struct Word {
    mosaic: usize,
    ty: usize,
    level: u32,
    skel: u32,
}

struct SkelInterner {
    ids: HashMap<(u32, u32, usize), u32>,
}

const SKEL_ROOT: u32 = u32::MAX;

impl SkelInterner {
    fn new() -> Self {
        SkelInterner {
            ids: HashMap::new(),
        }
    }
    fn intern(&mut self, parent: u32, rel: u32, mosaic: usize) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry((parent, rel, mosaic)).or_insert(next)
    }
}

/// Unfold the surviving mosaics into a pair of finite pointed structures of
/// depth `depth`, plus the bisimulation pairing words with equal unfolding
/// skeletons. Requires inputs without global diamonds.
#[allow(clippy::too_many_arguments)]
fn build_models(
    ctx: &Ctx,
    sub: &[Mosaic],
    fixp: &Fixpoint,
    anchor_sub: &BTreeMap<(String, u8), usize>,
    root: usize,
    root_types: (usize, usize),
    depth: u32,
    renames: &BTreeMap<String, String>,
    target: Fragment,
    budget: usize,
) -> Result<CertModels, SeparationError> {
    let rel_names: Vec<&String> = ctx.rels.keys().collect();
    let rel_id: HashMap<&str, u32> = rel_names
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i as u32))
        .collect();
    let anchor_positions: BTreeSet<usize> = anchor_sub.values().copied().collect();
    let root_bits = (
        sub[root].m1[root_types.0].clone(),
        sub[root].m2[root_types.1].clone(),
    );
    let mut interner = SkelInterner::new();
    let mut sides: Vec<(Structure, usize)> = Vec::new();
    let mut skels: Vec<Vec<(u32, usize)>> = Vec::new();
    for side in [1u8, 2u8] {
        let mut words: Vec<Word> = Vec::new();
        let mut level0: HashMap<(usize, usize), usize> = HashMap::new();
        let add_start = |mosaic: usize,
                             ty: usize,
                             words: &mut Vec<Word>,
                             level0: &mut HashMap<(usize, usize), usize>,
                             interner: &mut SkelInterner| {
            let skel = interner.intern(SKEL_ROOT, u32::MAX, mosaic);
            level0.insert((mosaic, ty), words.len());
            words.push(Word {
                mosaic,
                ty,
                level: 0,
                skel,
            });
        };
        for &ap in &anchor_positions {
            for ty in 0..sub[ap].side(side).len() {
                add_start(ap, ty, &mut words, &mut level0, &mut interner);
            }
        }
        if !anchor_positions.contains(&root) {
            for (ty, t) in sub[root].side(side).iter().enumerate() {
                if *t == root_bits.0 || *t == root_bits.1 {
                    add_start(root, ty, &mut words, &mut level0, &mut interner);
                }
            }
        }
        let root_ty = if side == 1 { root_types.0 } else { root_types.1 };
        let root_word = *level0
            .get(&(root, root_ty))
            .expect("the root word is a start");
        let mut edges: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        let mut w = 0usize;
        while w < words.len() {
            if words[w].level == depth {
                w += 1;
                continue;
            }
            let host = words[w].mosaic;
            let host_ty = words[w].ty;
            for rel in &rel_names {
                let wit = match fixp.wits.get(&(host, (*rel).clone())) {
                    Some(wit) => wit,
                    None => continue,
                };
                for e in &wit.edges {
                    if e.side != side || e.from != host_ty {
                        continue;
                    }
                    let tgt = if nominal_bearing(ctx, &sub[e.to_mosaic]) {
                        debug_assert_eq!(e.copy, 1, "anchored mosaics have one copy");
                        *level0
                            .get(&(e.to_mosaic, e.to_type))
                            .expect("constant-bearing survivors are anchored starts")
                    } else {
                        if words.len() >= budget {
                            return Err(SeparationError::Budget {
                                stage: "model construction",
                                limit: budget,
                            });
                        }
                        let skel = interner.intern(
                            words[w].skel,
                            rel_id[rel.as_str()],
                            e.to_mosaic,
                        );
                        words.push(Word {
                            mosaic: e.to_mosaic,
                            ty: e.to_type,
                            level: words[w].level + 1,
                            skel,
                        });
                        words.len() - 1
                    };
                    edges.entry((*rel).clone()).or_default().push((w, tgt));
                }
            }
            w += 1;
        }
        let labels: Vec<String> = (0..words.len()).map(|i| format!("w{i}")).collect();
        let mut props: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, word) in words.iter().enumerate() {
            let t = &sub[word.mosaic].side(side)[word.ty];
            for (member, name) in &ctx.props {
                if t.get(*member) {
                    props.entry(name.clone()).or_default().push(i);
                }
            }
        }
        let mut consts: BTreeMap<String, usize> = BTreeMap::new();
        let member_of: HashMap<&str, usize> = ctx
            .noms
            .iter()
            .map(|(m, n)| (n.as_str(), *m))
            .collect();
        let anchor_word = |name: &str| -> usize {
            let p = anchor_sub[&(name.to_string(), side)];
            let member = member_of[name];
            let ty = sub[p]
                .side(side)
                .iter()
                .position(|t| t.get(member))
                .expect("the anchored mosaic carries its constant");
            level0[&(p, ty)]
        };
        for ((name, s), _) in anchor_sub.iter() {
            if *s != side || renames.contains_key(name) {
                continue;
            }
            consts.insert(name.clone(), anchor_word(name));
        }
        if side == 2 {
            // The right model answers for the original second formula:
            // renamed constants take over the original names.
            for ((name, s), _) in anchor_sub.iter() {
                if *s != side {
                    continue;
                }
                if let Some(orig) = renames.get(name) {
                    consts.insert(orig.clone(), anchor_word(name));
                }
            }
        }
        let structure = Structure::from_parts(labels, props, edges, consts)
            .expect("generated parts are internally consistent");
        skels.push(words.iter().map(|wd| (wd.skel, 0usize)).collect());
        let n = skels.len() - 1;
        for (i, wd) in words.iter().enumerate() {
            skels[n][i] = (wd.skel, i);
        }
        sides.push((structure, root_word));
    }
    let mut by_skel: HashMap<u32, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for &(skel, w) in &skels[0] {
        by_skel.entry(skel).or_default().0.push(w);
    }
    for &(skel, w) in &skels[1] {
        by_skel.entry(skel).or_default().1.push(w);
    }
    let mut pairs = BTreeSet::new();
    for (_, (ls, rs)) in by_skel {
        for &l in &ls {
            for &r in &rs {
                pairs.insert((l, r));
            }
        }
    }
    let right = sides.pop().expect("two sides were built");
    let left = sides.pop().expect("two sides were built");
    let mut sig = ctx.rho.clone();
    if !target.nominals {
        sig.consts.clear();
    }
    Ok(CertModels {
        left: PointedStructure::new(left.0, left.1),
        right: PointedStructure::new(right.0, right.1),
        relation: BisimRelation {
            pairs,
            fragment: target,
            sig,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    fn setup(src1: &str, src2: &str, rho_from: SeparationMode) -> (Arena, Fml, Fml, Signature) {
        let mut a = Arena::new();
        let f1 = parse_formula(&mut a, src1).unwrap();
        let f2 = parse_formula(&mut a, src2).unwrap();
        let s1 = signature_of(&a, f1);
        let s2 = signature_of(&a, f2);
        let rho = match rho_from {
            SeparationMode::UnaryCraig => Signature {
                props: s1.props.intersection(&s2.props).cloned().collect(),
                rels: s1.rels.union(&s2.rels).cloned().collect(),
                consts: s1.consts.union(&s2.consts).cloned().collect(),
            },
            _ => s1.intersection(&s2),
        };
        (a, f1, f2, rho)
    }

    #[test]
    fn enumeration_on_a_one_atom_closure() {
        let (mut a, f1, f2, rho) = setup("A", "A", SeparationMode::Craig);
        let c = closure(&mut a, f1, f2);
        let ms = enumerate_mosaics(&a, &c, &rho, false, &SeparationOpts::default()).unwrap();
        assert!(ms.exact);
        // Types are {A} and {~A}; shared-atom agreement forces equal
        // singletons on both sides.
        assert_eq!(ms.mosaics.len(), 2);
        for m in &ms.mosaics {
            assert!(mosaic_conditions_hold(&a, &c, &rho, m, false));
            assert_eq!(m.m1, m.m2);
        }
    }

    #[test]
    fn vacuous_witness_without_graded_demands() {
        let (mut a, f1, f2, rho) = setup("A", "A", SeparationMode::Craig);
        let c = closure(&mut a, f1, f2);
        let ms = enumerate_mosaics(&a, &c, &rho, false, &SeparationOpts::default()).unwrap();
        let host = ms.mosaics[0].clone();
        let cert = find_r_witness(&a, &c, &rho, &host, &ms.mosaics, "R").unwrap();
        assert!(cert.members.is_empty() && cert.edges.is_empty());
        assert!(verify_r_witness(&a, &c, &rho, &cert, &ms.mosaics));
    }

    #[test]
    fn missing_witness_when_no_candidate_realizes_the_body() {
        let (mut a, f1, f2, rho) = setup("dia[R] A", "dia[R] A", SeparationMode::Craig);
        let c = closure(&mut a, f1, f2);
        let ms = enumerate_mosaics(&a, &c, &rho, false, &SeparationOpts::default()).unwrap();
        // Pick a host with the positive diamond and keep only candidates
        // whose types refute A.
        let f1i = c.index_of(f1).unwrap();
        let ai = c.index_of(parse_formula(&mut a, "A").unwrap()).unwrap();
        let host = ms
            .mosaics
            .iter()
            .find(|m| m.m1.iter().any(|t| t.get(f1i)))
            .unwrap()
            .clone();
        let no_a: Vec<Mosaic> = ms
            .mosaics
            .iter()
            .filter(|m| m.m1.iter().chain(m.m2.iter()).all(|t| !t.get(ai)))
            .cloned()
            .collect();
        assert!(find_r_witness(&a, &c, &rho, &host, &no_a, "R").is_none());
    }

    #[test]
    fn padding_preserves_signature_union_and_shape() {
        let mut a = Arena::new();
        let f = parse_formula(&mut a, "A").unwrap();
        let g = parse_formula(&mut a, "dia[S] (B & @c)").unwrap();
        let (fp, gp) = craig_pad(&mut a, f, g);
        let union = signature_of(&a, f).union(&signature_of(&a, g));
        assert_eq!(signature_of(&a, fp), union);
        assert_eq!(signature_of(&a, gp), union);
        // Padding a formula whose signature already covers the other is a
        // fixpoint.
        let (fp2, _) = craig_pad(&mut a, fp, g);
        assert_eq!(fp2, fp);
    }

    #[test]
    fn atom_against_its_negation_is_separable() {
        let mut a = Arena::new();
        let f1 = parse_formula(&mut a, "A").unwrap();
        let f2 = parse_formula(&mut a, "~A").unwrap();
        let got = decide_separation(
            &mut a,
            f1,
            f2,
            Fragment::ML,
            SeparationMode::Craig,
            &SeparationOpts::default(),
        )
        .unwrap();
        assert!(got.is_separable());
    }

    #[test]
    fn grade_two_against_its_negation_is_not_ml_separable() {
        let mut a = Arena::new();
        let f1 = parse_formula(&mut a, "dia>=2[R] p").unwrap();
        let f2 = parse_formula(&mut a, "~(dia>=2[R] p)").unwrap();
        let got = decide_separation(
            &mut a,
            f1,
            f2,
            Fragment::ML,
            SeparationMode::Craig,
            &SeparationOpts::default(),
        )
        .unwrap();
        match got {
            Separation::NotSeparable(cert) => {
                let cm = cert.models.expect("counting-free targets come with models");
                assert!(models_verify(&a, f1, f2, &cm));
            }
            Separation::Separable => panic!("expected inseparability"),
        }
    }

    #[test]
    fn grade_one_against_its_negation_is_separable() {
        let mut a = Arena::new();
        let f1 = parse_formula(&mut a, "dia[R] p").unwrap();
        let f2 = parse_formula(&mut a, "~(dia[R] p)").unwrap();
        let got = decide_separation(
            &mut a,
            f1,
            f2,
            Fragment::ML,
            SeparationMode::Craig,
            &SeparationOpts::default(),
        )
        .unwrap();
        assert!(got.is_separable());
    }

    #[test]
    fn global_diamond_mismatch_is_separable() {
        // The global diamond itself separates: inseparability would need a
        // partner cluster agreeing on global diamonds side by side.
        let mut a = Arena::new();
        let f1 = parse_formula(&mut a, "E A").unwrap();
        let f2 = parse_formula(&mut a, "~(E A)").unwrap();
        let got = decide_separation(
            &mut a,
            f1,
            f2,
            Fragment::ML.with_universal(),
            SeparationMode::Craig,
            &SeparationOpts::default(),
        )
        .unwrap();
        assert!(got.is_separable());
    }

    #[test]
    fn global_diamonds_over_disjoint_atoms_are_not_separable() {
        let mut a = Arena::new();
        let f1 = parse_formula(&mut a, "E A").unwrap();
        let f2 = parse_formula(&mut a, "~(E B)").unwrap();
        let got = decide_separation(
            &mut a,
            f1,
            f2,
            Fragment::ML.with_universal(),
            SeparationMode::Craig,
            &SeparationOpts::default(),
        )
        .unwrap();
        assert!(matches!(got, Separation::NotSeparable(_)));
    }
}
