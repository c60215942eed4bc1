//! Finite Kripke structures with unary predicates, binary relations, and
//! constants, plus model checking, type realization, and copy expansion.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::formula::{Arena, ClosureIndex, Fml, Node, Signature};

/// Errors while building or loading a structure.
#[derive(Debug, Error)]
pub enum StructureError {
    #[error("structure has an empty domain")]
    EmptyDomain,
    #[error("duplicate element label `{0}`")]
    DuplicateElement(String),
    #[error("{context} refers to unknown element `{label}`")]
    UnknownElement { context: String, label: String },
    #[error("structure file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Errors while evaluating a formula on a structure: the formula mentions a
/// symbol the structure does not interpret.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unknown symbol: constant `{0}` is not denoted in the structure")]
    UnknownConstant(String),
    #[error("unknown symbol: relation `{0}` is not listed in the structure")]
    UnknownRelation(String),
}

#[derive(Clone, Debug)]
struct RelData {
    succ: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
}

/// Finite structure. Elements are dense ids `0..len()`; the file format uses
/// string labels mapped at load. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Structure {
    labels: Vec<String>,
    label_ids: HashMap<String, usize>,
    props: BTreeMap<String, Bits>,
    rels: BTreeMap<String, RelData>,
    consts: BTreeMap<String, usize>,
}

/// A structure with a designated evaluation point.
#[derive(Clone, Debug)]
pub struct PointedStructure {
    pub structure: Structure,
    pub point: usize,
}

impl PointedStructure {
    pub fn new(structure: Structure, point: usize) -> PointedStructure {
        assert!(point < structure.len(), "point out of range");
        PointedStructure { structure, point }
    }

    /// JSON with the point recorded by label under "point".
    pub fn to_json(&self) -> String {
        let mut v: serde_json::Value =
            serde_json::from_str(&self.structure.to_json()).expect("own output");
        v["point"] = serde_json::Value::String(self.structure.label(self.point).to_string());
        serde_json::to_string_pretty(&v).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<PointedStructure, StructureError> {
        let structure = Structure::from_json(text)?;
        let v: serde_json::Value = serde_json::from_str(text)?;
        let label = v["point"].as_str().ok_or(StructureError::UnknownElement {
            context: "point".into(),
            label: v["point"].to_string(),
        })?;
        let point = structure
            .element(label)
            .ok_or_else(|| StructureError::UnknownElement {
                context: "point".into(),
                label: label.to_string(),
            })?;
        Ok(PointedStructure { structure, point })
    }
}

/// On-disk form: labels only, missing maps default to empty.
#[derive(Serialize, Deserialize)]
struct StructureFile {
    elements: Vec<String>,
    #[serde(default)]
    props: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    rels: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default)]
    consts: BTreeMap<String, String>,
}

impl Structure {
    /// Build from labeled parts, validating every reference.
    pub fn new(
        elements: Vec<String>,
        props: BTreeMap<String, Vec<String>>,
        rels: BTreeMap<String, Vec<(String, String)>>,
        consts: BTreeMap<String, String>,
    ) -> Result<Structure, StructureError> {
        if elements.is_empty() {
            return Err(StructureError::EmptyDomain);
        }
        let mut label_ids = HashMap::new();
        for (i, l) in elements.iter().enumerate() {
            if label_ids.insert(l.clone(), i).is_some() {
                return Err(StructureError::DuplicateElement(l.clone()));
            }
        }
        let n = elements.len();
        let lookup = |context: &str, label: &str| -> Result<usize, StructureError> {
            label_ids
                .get(label)
                .copied()
                .ok_or_else(|| StructureError::UnknownElement {
                    context: context.to_string(),
                    label: label.to_string(),
                })
        };
        let mut prop_sets = BTreeMap::new();
        for (p, members) in &props {
            let mut bits = Bits::new(n);
            for l in members {
                bits.set(lookup(&format!("predicate `{p}`"), l)?, true);
            }
            prop_sets.insert(p.clone(), bits);
        }
        let mut rel_data = BTreeMap::new();
        for (r, pairs) in &rels {
            let mut succ = vec![Vec::new(); n];
            let mut pred = vec![Vec::new(); n];
            for (from, to) in pairs {
                let f = lookup(&format!("relation `{r}`"), from)?;
                let t = lookup(&format!("relation `{r}`"), to)?;
                succ[f].push(t as u32);
                pred[t].push(f as u32);
            }
            for list in succ.iter_mut().chain(pred.iter_mut()) {
                list.sort_unstable();
                list.dedup();
            }
            rel_data.insert(r.clone(), RelData { succ, pred });
        }
        let mut const_map = BTreeMap::new();
        for (c, l) in &consts {
            const_map.insert(c.clone(), lookup(&format!("constant `{c}`"), l)?);
        }
        Ok(Structure {
            labels: elements,
            label_ids,
            props: prop_sets,
            rels: rel_data,
            consts: const_map,
        })
    }

    /// Build from id-based parts (generated structures).
    pub fn from_parts(
        labels: Vec<String>,
        props: BTreeMap<String, Vec<usize>>,
        rels: BTreeMap<String, Vec<(usize, usize)>>,
        consts: BTreeMap<String, usize>,
    ) -> Result<Structure, StructureError> {
        let as_label = |i: usize, labels: &[String]| labels[i].clone();
        let p = props
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().map(|i| as_label(i, &labels)).collect()))
            .collect();
        let r = rels
            .into_iter()
            .map(|(k, v)| {
                (
                    k,
                    v.into_iter()
                        .map(|(a, b)| (as_label(a, &labels), as_label(b, &labels)))
                        .collect(),
                )
            })
            .collect();
        let c = consts
            .into_iter()
            .map(|(k, i)| (k, as_label(i, &labels)))
            .collect();
        Structure::new(labels, p, r, c)
    }

    pub fn from_json(text: &str) -> Result<Structure, StructureError> {
        let file: StructureFile = serde_json::from_str(text)?;
        Structure::new(file.elements, file.props, file.rels, file.consts)
    }

    /// Deterministic JSON: element order as stored, members ordered by id.
    pub fn to_json(&self) -> String {
        let props = self
            .props
            .iter()
            .map(|(p, bits)| {
                (
                    p.clone(),
                    bits.iter_ones().map(|i| self.labels[i].clone()).collect(),
                )
            })
            .collect();
        let rels = self
            .rels
            .iter()
            .map(|(r, data)| {
                let mut pairs = Vec::new();
                for (from, tos) in data.succ.iter().enumerate() {
                    for &to in tos {
                        pairs.push((self.labels[from].clone(), self.labels[to as usize].clone()));
                    }
                }
                (r.clone(), pairs)
            })
            .collect();
        let consts = self
            .consts
            .iter()
            .map(|(c, &e)| (c.clone(), self.labels[e].clone()))
            .collect();
        let file = StructureFile {
            elements: self.labels.clone(),
            props,
            rels,
            consts,
        };
        serde_json::to_string_pretty(&file).expect("structure serialization cannot fail")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, e: usize) -> &str {
        &self.labels[e]
    }

    pub fn element(&self, label: &str) -> Option<usize> {
        self.label_ids.get(label).copied()
    }

    pub fn has_prop(&self, name: &str, e: usize) -> bool {
        self.props.get(name).is_some_and(|b| b.get(e))
    }

    pub fn prop_set(&self, name: &str) -> Option<&Bits> {
        self.props.get(name)
    }

    pub fn prop_names(&self) -> impl Iterator<Item = &str> {
        self.props.keys().map(|s| s.as_str())
    }

    pub fn has_rel(&self, name: &str) -> bool {
        self.rels.contains_key(name)
    }

    pub fn rel_names(&self) -> impl Iterator<Item = &str> {
        self.rels.keys().map(|s| s.as_str())
    }

    /// Successors of `e` under `rel` (sorted, deduplicated); empty if the
    /// relation is not listed.
    pub fn succs(&self, rel: &str, e: usize) -> &[u32] {
        self.rels
            .get(rel)
            .map(|d| d.succ[e].as_slice())
            .unwrap_or(&[])
    }

    pub fn preds(&self, rel: &str, e: usize) -> &[u32] {
        self.rels
            .get(rel)
            .map(|d| d.pred[e].as_slice())
            .unwrap_or(&[])
    }

    pub fn edge_count(&self, rel: &str) -> usize {
        self.rels
            .get(rel)
            .map(|d| d.succ.iter().map(Vec::len).sum())
            .unwrap_or(0)
    }

    pub fn const_denotation(&self, name: &str) -> Option<usize> {
        self.consts.get(name).copied()
    }

    pub fn consts(&self) -> impl Iterator<Item = (&str, usize)> {
        self.consts.iter().map(|(c, &e)| (c.as_str(), e))
    }

    /// Names interpreted by this structure, by kind.
    pub fn signature(&self) -> Signature {
        Signature {
            props: self.props.keys().cloned().collect(),
            rels: self.rels.keys().cloned().collect(),
            consts: self.consts.keys().cloned().collect(),
        }
    }
}

/// Extensions for each formula in `fs` and all their subformulas, keyed by
/// formula handle. Bottom-up, each subformula evaluated once.
pub fn eval_many(
    arena: &Arena,
    s: &Structure,
    fs: &[Fml],
) -> Result<HashMap<Fml, Bits>, EvalError> {
    let n = s.len();
    let mut memo: HashMap<Fml, Bits> = HashMap::new();
    for &f in fs {
        for g in arena.subformulas(f) {
            if memo.contains_key(&g) {
                continue;
            }
            let ext = match arena.node(g) {
                Node::Top => Bits::full(n),
                Node::Prop(p) => s
                    .prop_set(arena.sym_name(p))
                    .cloned()
                    .unwrap_or_else(|| Bits::new(n)),
                Node::Nom(c) => {
                    let name = arena.sym_name(c);
                    let e = s
                        .const_denotation(name)
                        .ok_or_else(|| EvalError::UnknownConstant(name.to_string()))?;
                    let mut bits = Bits::new(n);
                    bits.set(e, true);
                    bits
                }
                Node::Not(x) => {
                    let mut bits = memo[&x].clone();
                    bits.invert();
                    bits
                }
                Node::And(a, b) => {
                    let mut bits = memo[&a].clone();
                    bits.intersect_with(&memo[&b]);
                    bits
                }
                Node::Dia {
                    rel,
                    inv,
                    grade,
                    body,
                } => {
                    let name = arena.sym_name(rel);
                    if !s.has_rel(name) {
                        return Err(EvalError::UnknownRelation(name.to_string()));
                    }
                    let body_ext = &memo[&body];
                    let mut bits = Bits::new(n);
                    for e in 0..n {
                        let nbrs = if inv {
                            s.preds(name, e)
                        } else {
                            s.succs(name, e)
                        };
                        let mut cnt: u32 = 0;
                        for &t in nbrs {
                            if body_ext.get(t as usize) {
                                cnt += 1;
                                if cnt >= grade {
                                    break;
                                }
                            }
                        }
                        if cnt >= grade {
                            bits.set(e, true);
                        }
                    }
                    bits
                }
                Node::Udia(x) => {
                    if memo[&x].is_empty() {
                        Bits::new(n)
                    } else {
                        Bits::full(n)
                    }
                }
            };
            memo.insert(g, ext);
        }
    }
    Ok(memo)
}

/// Set of elements satisfying `f`.
pub fn extension(arena: &Arena, s: &Structure, f: Fml) -> Result<Bits, EvalError> {
    let mut memo = eval_many(arena, s, &[f])?;
    Ok(memo.remove(&f).expect("root formula was evaluated"))
}

/// Graded Kripke truth of `f` at element `e`. Inverse diamonds count
/// predecessors; the global diamond scans the whole domain; a constant atom
/// holds exactly at its denotation.
pub fn model_check(arena: &Arena, s: &Structure, e: usize, f: Fml) -> Result<bool, EvalError> {
    assert!(e < s.len(), "element id out of range");
    Ok(extension(arena, s, f)?.get(e))
}

/// Bitset over closure indices: which members hold at `e`. Exactly one of
/// each member/negation pair is set.
pub fn realized_type(
    arena: &Arena,
    s: &Structure,
    e: usize,
    c: &ClosureIndex,
) -> Result<Bits, EvalError> {
    Ok(realized_types(arena, s, c)?.swap_remove(e))
}

/// Realized types of all elements at once (one evaluation pass).
pub fn realized_types(
    arena: &Arena,
    s: &Structure,
    c: &ClosureIndex,
) -> Result<Vec<Bits>, EvalError> {
    let memo = eval_many(arena, s, c.members())?;
    let mut types = vec![Bits::new(c.len()); s.len()];
    for (i, &m) in c.members().iter().enumerate() {
        for e in memo[&m].iter_ones() {
            types[e].set(i, true);
        }
    }
    Ok(types)
}

/// κ-fold copy expansion. Elements denoted by a constant keep a single copy;
/// every other element gets κ copies. Predicates copy pointwise, each edge
/// becomes the full product of the endpoint copy sets, and constants denote
/// copy 0. Copy labels are `label#i`.
pub fn omega_expand(s: &Structure, kappa: usize) -> Structure {
    assert!(kappa >= 1, "expansion requires kappa >= 1");
    let denoted: Vec<bool> = {
        let mut d = vec![false; s.len()];
        for (_, e) in s.consts() {
            d[e] = true;
        }
        d
    };
    let copies = |e: usize| if denoted[e] { 1 } else { kappa };
    let mut first_copy = vec![0usize; s.len()];
    let mut labels = Vec::new();
    for (e, fc) in first_copy.iter_mut().enumerate() {
        *fc = labels.len();
        for i in 0..copies(e) {
            labels.push(format!("{}#{}", s.label(e), i));
        }
    }
    let mut props: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for p in s.prop_names() {
        let mut members = Vec::new();
        for e in s.prop_set(p).expect("listed predicate").iter_ones() {
            members.extend(first_copy[e]..first_copy[e] + copies(e));
        }
        props.insert(p.to_string(), members);
    }
    let mut rels: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for r in s.rel_names() {
        let mut pairs = Vec::new();
        for from in 0..s.len() {
            for &to in s.succs(r, from) {
                let to = to as usize;
                for fc in first_copy[from]..first_copy[from] + copies(from) {
                    for tc in first_copy[to]..first_copy[to] + copies(to) {
                        pairs.push((fc, tc));
                    }
                }
            }
        }
        rels.insert(r.to_string(), pairs);
    }
    let consts: BTreeMap<String, usize> = s
        .consts()
        .map(|(c, e)| (c.to_string(), first_copy[e]))
        .collect();
    Structure::from_parts(labels, props, rels, consts)
        .expect("expansion of a valid structure is valid")
}
