//! Lazy enumeration of propositionally coherent member sets over a closure
//! index. Coherence means: `true` is in; exactly one of each member/negation
//! pair; a conjunction is in iff both conjuncts are; graded diamonds over the
//! same relation, direction, and body are downward closed in the grade.
//!
//! Coherent sets approximate realizable types syntactically; decision
//! procedures restore realizability by elimination and apply the stronger
//! per-set filter `universal_consistent` where a single structure is meant.

use crate::bits::Bits;
use crate::formula::{Arena, ClosureIndex, Node};

#[derive(Clone, Copy)]
enum Fill {
    True,
    Slot(usize),
    Chain { chain: usize, rank: usize },
    NotOf(usize),
    AndOf(usize, usize),
}

/// Iterator over all coherent sets, one `Bits` over closure indices each.
pub struct HintikkaIter<'a> {
    closure_len: usize,
    plan: Vec<Fill>,
    slots: Vec<bool>,
    chains: Vec<usize>,
    chain_lens: Vec<usize>,
    done: bool,
    _arena: &'a Arena,
}

/// Enumerate coherent sets lazily. The stream is deterministic for a fixed
/// closure; its length is 2^(free atoms) times the product over grade chains
/// of (chain length + 1).
pub fn enumerate_hintikka<'a>(arena: &'a Arena, c: &'a ClosureIndex) -> HintikkaIter<'a> {
    let mut plan = Vec::with_capacity(c.len());
    let mut slots = 0usize;
    // Chains keyed by (rel, inv, body); members carry (grade, member index).
    let mut chain_keys: Vec<(crate::formula::Sym, bool, crate::formula::Fml)> = Vec::new();
    let mut chain_members: Vec<Vec<(u32, usize)>> = Vec::new();
    for (i, &m) in c.members().iter().enumerate() {
        let fill = match arena.node(m) {
            Node::Top => Fill::True,
            Node::Prop(_) | Node::Nom(_) | Node::Udia(_) => {
                slots += 1;
                Fill::Slot(slots - 1)
            }
            Node::Dia {
                rel,
                inv,
                grade,
                body,
            } => {
                let key = (rel, inv, body);
                let chain = match chain_keys.iter().position(|&k| k == key) {
                    Some(ci) => ci,
                    None => {
                        chain_keys.push(key);
                        chain_members.push(Vec::new());
                        chain_keys.len() - 1
                    }
                };
                chain_members[chain].push((grade, i));
                // Rank is fixed after sorting below; store a placeholder.
                Fill::Chain {
                    chain,
                    rank: usize::MAX,
                }
            }
            Node::Not(x) => {
                let xi = c.index_of(x).expect("closure is subformula-closed");
                assert!(xi < i, "negations follow their bodies in the closure order");
                Fill::NotOf(xi)
            }
            Node::And(a, b) => {
                let ai = c.index_of(a).expect("closure is subformula-closed");
                let bi = c.index_of(b).expect("closure is subformula-closed");
                assert!(ai < i && bi < i, "conjuncts precede conjunctions");
                Fill::AndOf(ai, bi)
            }
        };
        plan.push(fill);
    }
    let mut chain_lens = Vec::with_capacity(chain_members.len());
    for members in &mut chain_members {
        members.sort_unstable();
        for (rank, &(_, idx)) in members.iter().enumerate() {
            if let Fill::Chain { rank: r, .. } = &mut plan[idx] {
                *r = rank;
            }
        }
        chain_lens.push(members.len());
    }
    HintikkaIter {
        closure_len: c.len(),
        plan,
        slots: vec![false; slots],
        chains: vec![0; chain_lens.len()],
        chain_lens,
        done: false,
        _arena: arena,
    }
}

impl Iterator for HintikkaIter<'_> {
    type Item = Bits;

    fn next(&mut self) -> Option<Bits> {
        if self.done {
            return None;
        }
        let mut bits = Bits::new(self.closure_len);
        let mut vals = vec![false; self.closure_len];
        for (i, fill) in self.plan.iter().enumerate() {
            let v = match *fill {
                Fill::True => true,
                Fill::Slot(s) => self.slots[s],
                // Cutoff semantics: the first `chains[chain]` grades of the
                // chain are present, which is exactly downward closure.
                Fill::Chain { chain, rank } => rank < self.chains[chain],
                Fill::NotOf(x) => !vals[x],
                Fill::AndOf(a, b) => vals[a] && vals[b],
            };
            vals[i] = v;
            if v {
                bits.set(i, true);
            }
        }
        // Mixed-radix advance: bool slots first, then chain cutoffs.
        let mut carried = true;
        for s in self.slots.iter_mut() {
            if !carried {
                break;
            }
            carried = *s;
            *s = !*s;
        }
        if carried {
            for (v, &len) in self.chains.iter_mut().zip(&self.chain_lens) {
                if *v < len {
                    *v += 1;
                    carried = false;
                    break;
                }
                *v = 0;
            }
        }
        if carried {
            self.done = true;
        }
        Some(bits)
    }
}

/// Check the coherence conditions directly on a candidate set.
pub fn is_hintikka(arena: &Arena, c: &ClosureIndex, t: &Bits) -> bool {
    if t.len() != c.len() {
        return false;
    }
    for (i, &m) in c.members().iter().enumerate() {
        if t.get(i) == t.get(c.neg_of(i)) {
            return false;
        }
        match arena.node(m) {
            Node::Top => {
                if !t.get(i) {
                    return false;
                }
            }
            Node::And(a, b) => {
                let ai = c.index_of(a).unwrap();
                let bi = c.index_of(b).unwrap();
                if t.get(i) != (t.get(ai) && t.get(bi)) {
                    return false;
                }
            }
            Node::Dia {
                rel,
                inv,
                grade,
                body,
            } => {
                if !t.get(i) {
                    continue;
                }
                // Downward closure: every weaker diamond in the closure over
                // the same relation, direction, and body must be present.
                for (j, &m2) in c.members().iter().enumerate() {
                    if let Node::Dia {
                        rel: r2,
                        inv: i2,
                        grade: g2,
                        body: b2,
                    } = arena.node(m2)
                    {
                        if r2 == rel && i2 == inv && b2 == body && g2 <= grade && !t.get(j) {
                            return false;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    true
}

/// Per-set global-modality filter: if χ is in the set and ◆χ is in the
/// closure, ◆χ must be in the set. Required of every type meant to live in
/// one structure; the converse direction (◆χ needs a witness) is a property
/// of a whole type collection, not of one set.
pub fn universal_consistent(arena: &Arena, c: &ClosureIndex, t: &Bits) -> bool {
    for (i, &m) in c.members().iter().enumerate() {
        if let Node::Udia(x) = arena.node(m) {
            let xi = c.index_of(x).expect("closure is subformula-closed");
            if t.get(xi) && !t.get(i) {
                return false;
            }
        }
    }
    true
}

/// Indices of global-diamond members.
pub fn udia_members(arena: &Arena, c: &ClosureIndex) -> Vec<usize> {
    c.members()
        .iter()
        .enumerate()
        .filter(|&(_, &m)| matches!(arena.node(m), Node::Udia(_)))
        .map(|(i, _)| i)
        .collect()
}

/// Indices of constant-atom members.
pub fn nom_members(arena: &Arena, c: &ClosureIndex) -> Vec<usize> {
    c.members()
        .iter()
        .enumerate()
        .filter(|&(_, &m)| matches!(arena.node(m), Node::Nom(_)))
        .map(|(i, _)| i)
        .collect()
}

/// Indices of graded-diamond members.
pub fn dia_members(arena: &Arena, c: &ClosureIndex) -> Vec<usize> {
    c.members()
        .iter()
        .enumerate()
        .filter(|&(_, &m)| matches!(arena.node(m), Node::Dia { .. }))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{closure, parse_formula};

    #[test]
    fn two_atoms_give_four_types() {
        let mut ar = Arena::new();
        let a = parse_formula(&mut ar, "A").unwrap();
        let b = parse_formula(&mut ar, "B").unwrap();
        let c = closure(&mut ar, a, b);
        let types: Vec<Bits> = enumerate_hintikka(&ar, &c).collect();
        assert_eq!(types.len(), 4);
        for t in &types {
            assert!(is_hintikka(&ar, &c, t));
        }
    }

    #[test]
    fn conjunction_membership_is_forced() {
        let mut ar = Arena::new();
        let ab = parse_formula(&mut ar, "A & B").unwrap();
        let top = ar.top();
        let c = closure(&mut ar, ab, top);
        let i_ab = c.index_of(ab).unwrap();
        let a = parse_formula(&mut ar, "A").unwrap();
        let i_a = c.index_of(a).unwrap();
        for t in enumerate_hintikka(&ar, &c) {
            assert!(!(t.get(i_ab) && !t.get(i_a)));
        }
    }

    #[test]
    fn grade_chains_are_downward_closed() {
        let mut ar = Arena::new();
        let f = parse_formula(&mut ar, "dia>=3[R] A & dia>=1[R] A").unwrap();
        let top = ar.top();
        let c = closure(&mut ar, f, top);
        let d3 = parse_formula(&mut ar, "dia>=3[R] A").unwrap();
        let d1 = parse_formula(&mut ar, "dia[R] A").unwrap();
        let i3 = c.index_of(d3).unwrap();
        let i1 = c.index_of(d1).unwrap();
        let mut seen_both = false;
        for t in enumerate_hintikka(&ar, &c) {
            assert!(
                !(t.get(i3) && !t.get(i1)),
                "strong diamond without weak one"
            );
            seen_both |= t.get(i3) && t.get(i1);
            assert!(is_hintikka(&ar, &c, &t));
        }
        assert!(seen_both);
    }

    #[test]
    fn universal_filter_rejects_witnessed_but_undeclared() {
        let mut ar = Arena::new();
        let f = parse_formula(&mut ar, "E A").unwrap();
        let a = parse_formula(&mut ar, "A").unwrap();
        let c = closure(&mut ar, f, a);
        let i_f = c.index_of(f).unwrap();
        let i_a = c.index_of(a).unwrap();
        let mut rejected = 0;
        for t in enumerate_hintikka(&ar, &c) {
            let coherent_but_inconsistent = t.get(i_a) && !t.get(i_f);
            assert_eq!(
                !universal_consistent(&ar, &c, &t),
                coherent_but_inconsistent
            );
            if coherent_but_inconsistent {
                rejected += 1;
            }
        }
        assert_eq!(rejected, 1);
    }
}
