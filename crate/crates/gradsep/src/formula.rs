//! Formula syntax: kernel AST, interning arena, parser, printer, signatures,
//! fragments, and the negation-closed subformula index.
//!
//! The kernel grammar is `true | A | @c | ~x | x & y | dia>=k[R] x |
//! dia>=k[R-] x | E x` with `k >= 1`. Every derived connective (`|`, `->`,
//! `box`, the `=`, `<=`, `>` grade comparisons, and the global box `A`) is
//! rewritten into the kernel at construction time. Double negations collapse
//! at construction, so a formula and its negation are always distinct nodes.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Interned symbol (predicate, relation, or constant name).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Sym(u32);

/// Interned formula handle. Structurally equal formulas built in the same
/// arena share the same handle.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Fml(u32);

/// Kernel formula node.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Node {
    Top,
    Prop(Sym),
    Nom(Sym),
    Not(Fml),
    And(Fml, Fml),
    /// `dia>=grade[rel] body`, over predecessors when `inv` is set.
    Dia {
        rel: Sym,
        inv: bool,
        grade: u32,
        body: Fml,
    },
    /// Global diamond `E body`: true somewhere in the structure.
    Udia(Fml),
}

/// Interning arena for formulas and symbol names.
///
/// Construction requires `&mut Arena` and is single-threaded; built formulas
/// are plain handles and may be shared freely across readers.
#[derive(Default)]
pub struct Arena {
    nodes: Vec<Node>,
    node_ids: HashMap<Node, u32>,
    syms: Vec<String>,
    sym_ids: HashMap<String, u32>,
}

impl Arena {
    pub fn new() -> Self {
        Arena::default()
    }

    pub fn sym(&mut self, name: &str) -> Sym {
        if let Some(&id) = self.sym_ids.get(name) {
            return Sym(id);
        }
        let id = self.syms.len() as u32;
        self.syms.push(name.to_string());
        self.sym_ids.insert(name.to_string(), id);
        Sym(id)
    }

    pub fn sym_name(&self, s: Sym) -> &str {
        &self.syms[s.0 as usize]
    }

    pub fn node(&self, f: Fml) -> Node {
        self.nodes[f.0 as usize]
    }

    fn intern(&mut self, n: Node) -> Fml {
        if let Some(&id) = self.node_ids.get(&n) {
            return Fml(id);
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(n);
        self.node_ids.insert(n, id);
        Fml(id)
    }

    pub fn top(&mut self) -> Fml {
        self.intern(Node::Top)
    }

    pub fn bottom(&mut self) -> Fml {
        let t = self.top();
        self.not(t)
    }

    pub fn prop(&mut self, name: &str) -> Fml {
        let s = self.sym(name);
        self.intern(Node::Prop(s))
    }

    pub fn nom(&mut self, name: &str) -> Fml {
        let s = self.sym(name);
        self.intern(Node::Nom(s))
    }

    /// Negation with double-negation collapse.
    pub fn not(&mut self, f: Fml) -> Fml {
        if let Node::Not(g) = self.node(f) {
            return g;
        }
        self.intern(Node::Not(f))
    }

    pub fn and(&mut self, a: Fml, b: Fml) -> Fml {
        self.intern(Node::And(a, b))
    }

    /// `dia>=grade[rel] body`; grade must be at least 1.
    pub fn dia(&mut self, rel: &str, inv: bool, grade: u32, body: Fml) -> Fml {
        assert!(grade >= 1, "graded diamond requires grade >= 1");
        let rel = self.sym(rel);
        self.intern(Node::Dia {
            rel,
            inv,
            grade,
            body,
        })
    }

    pub fn udia(&mut self, body: Fml) -> Fml {
        self.intern(Node::Udia(body))
    }

    pub fn or(&mut self, a: Fml, b: Fml) -> Fml {
        let na = self.not(a);
        let nb = self.not(b);
        let c = self.and(na, nb);
        self.not(c)
    }

    pub fn implies(&mut self, a: Fml, b: Fml) -> Fml {
        let nb = self.not(b);
        let c = self.and(a, nb);
        self.not(c)
    }

    pub fn iff(&mut self, a: Fml, b: Fml) -> Fml {
        let ab = self.implies(a, b);
        let ba = self.implies(b, a);
        self.and(ab, ba)
    }

    /// `box[rel] body`: no successor (predecessor if `inv`) violates `body`.
    pub fn boxm(&mut self, rel: &str, inv: bool, body: Fml) -> Fml {
        let nb = self.not(body);
        let d = self.dia(rel, inv, 1, nb);
        self.not(d)
    }

    /// Global box: `body` holds everywhere.
    pub fn ubox(&mut self, body: Fml) -> Fml {
        let nb = self.not(body);
        let d = self.udia(nb);
        self.not(d)
    }

    /// `dia=k[rel] body` as the conjunction of an at-least and an at-most.
    pub fn dia_exact(&mut self, rel: &str, inv: bool, k: u32, body: Fml) -> Fml {
        if k == 0 {
            let d = self.dia(rel, inv, 1, body);
            return self.not(d);
        }
        let lo = self.dia(rel, inv, k, body);
        let hi = self.dia(rel, inv, k + 1, body);
        let nhi = self.not(hi);
        self.and(lo, nhi)
    }

    /// Conjunction of a list, `true` when empty, left-associated.
    pub fn and_all(&mut self, fs: &[Fml]) -> Fml {
        match fs.split_first() {
            None => self.top(),
            Some((&f0, rest)) => rest.iter().fold(f0, |acc, &f| self.and(acc, f)),
        }
    }

    /// Disjunction of a list, `~true` when empty, left-associated.
    pub fn or_all(&mut self, fs: &[Fml]) -> Fml {
        match fs.split_first() {
            None => self.bottom(),
            Some((&f0, rest)) => rest.iter().fold(f0, |acc, &f| self.or(acc, f)),
        }
    }

    /// Subformulas of `f` in postorder (children before parents), each once.
    pub fn subformulas(&self, f: Fml) -> Vec<Fml> {
        let mut out = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![(f, false)];
        while let Some((g, expanded)) = stack.pop() {
            if expanded {
                out.push(g);
                continue;
            }
            if seen[g.0 as usize] {
                continue;
            }
            seen[g.0 as usize] = true;
            stack.push((g, true));
            match self.node(g) {
                Node::Top | Node::Prop(_) | Node::Nom(_) => {}
                Node::Not(x) | Node::Udia(x) | Node::Dia { body: x, .. } => {
                    stack.push((x, false));
                }
                Node::And(a, b) => {
                    stack.push((b, false));
                    stack.push((a, false));
                }
            }
        }
        out
    }

    /// Maximal nesting of graded and global diamonds.
    pub fn modal_depth(&self, f: Fml) -> u32 {
        let mut memo: HashMap<Fml, u32> = HashMap::new();
        for g in self.subformulas(f) {
            let d = match self.node(g) {
                Node::Top | Node::Prop(_) | Node::Nom(_) => 0,
                Node::Not(x) => memo[&x],
                Node::And(a, b) => memo[&a].max(memo[&b]),
                Node::Dia { body, .. } => memo[&body] + 1,
                Node::Udia(x) => memo[&x] + 1,
            };
            memo.insert(g, d);
        }
        memo[&f]
    }

    /// Largest grade parameter occurring in `f` (0 if none).
    pub fn max_grade(&self, f: Fml) -> u32 {
        self.subformulas(f)
            .iter()
            .map(|&g| match self.node(g) {
                Node::Dia { grade, .. } => grade,
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }
}

/// Signature: unary predicate, binary relation, and constant names.
#[derive(Clone, PartialEq, Eq, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct Signature {
    pub props: std::collections::BTreeSet<String>,
    pub rels: std::collections::BTreeSet<String>,
    pub consts: std::collections::BTreeSet<String>,
}

impl Signature {
    pub fn is_empty(&self) -> bool {
        self.props.is_empty() && self.rels.is_empty() && self.consts.is_empty()
    }

    pub fn union(&self, other: &Signature) -> Signature {
        Signature {
            props: self.props.union(&other.props).cloned().collect(),
            rels: self.rels.union(&other.rels).cloned().collect(),
            consts: self.consts.union(&other.consts).cloned().collect(),
        }
    }

    pub fn intersection(&self, other: &Signature) -> Signature {
        Signature {
            props: self.props.intersection(&other.props).cloned().collect(),
            rels: self.rels.intersection(&other.rels).cloned().collect(),
            consts: self.consts.intersection(&other.consts).cloned().collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Signature) -> bool {
        self.props.is_subset(&other.props)
            && self.rels.is_subset(&other.rels)
            && self.consts.is_subset(&other.consts)
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.props.contains(name) || self.rels.contains(name) || self.consts.contains(name)
    }
}

/// Names occurring in `f`, by kind.
pub fn signature_of(arena: &Arena, f: Fml) -> Signature {
    let mut sig = Signature::default();
    for g in arena.subformulas(f) {
        match arena.node(g) {
            Node::Prop(s) => {
                sig.props.insert(arena.sym_name(s).to_string());
            }
            Node::Nom(s) => {
                sig.consts.insert(arena.sym_name(s).to_string());
            }
            Node::Dia { rel, .. } => {
                sig.rels.insert(arena.sym_name(rel).to_string());
            }
            _ => {}
        }
    }
    sig
}

/// Componentwise intersection of the two formulas' signatures.
pub fn shared_signature(arena: &Arena, f1: Fml, f2: Fml) -> Signature {
    signature_of(arena, f1).intersection(&signature_of(arena, f2))
}

/// Logic fragment: which constructors beyond basic modal logic are licensed.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Fragment {
    pub graded: bool,
    pub inverse: bool,
    pub nominals: bool,
    pub universal: bool,
}

impl Fragment {
    pub const ML: Fragment = Fragment {
        graded: false,
        inverse: false,
        nominals: false,
        universal: false,
    };

    pub fn ml() -> Fragment {
        Fragment::ML
    }

    pub fn gml() -> Fragment {
        Fragment {
            graded: true,
            ..Fragment::ML
        }
    }

    pub fn with_inverse(self) -> Fragment {
        Fragment {
            inverse: true,
            ..self
        }
    }

    pub fn with_nominals(self) -> Fragment {
        Fragment {
            nominals: true,
            ..self
        }
    }

    pub fn with_universal(self) -> Fragment {
        Fragment {
            universal: true,
            ..self
        }
    }

    /// Same fragment with counting removed.
    pub fn counting_free(self) -> Fragment {
        Fragment {
            graded: false,
            ..self
        }
    }

    pub fn is_extension_of(self, other: Fragment) -> bool {
        (self.graded || !other.graded)
            && (self.inverse || !other.inverse)
            && (self.nominals || !other.nominals)
            && (self.universal || !other.universal)
    }

    /// Parse a fragment name such as `ML`, `GML^{i,n,u}`, `gml-iu`, or `MLn`.
    pub fn parse(name: &str) -> Result<Fragment, ParseError> {
        let cleaned: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let rest = if let Some(r) = cleaned.strip_prefix("gml") {
            r
        } else if let Some(r) = cleaned.strip_prefix("ml") {
            r
        } else {
            return Err(ParseError::UnknownOperator {
                pos: 0,
                word: name.to_string(),
            });
        };
        let mut frag = if cleaned.starts_with('g') {
            Fragment::gml()
        } else {
            Fragment::ml()
        };
        for c in rest.chars() {
            match c {
                'i' if !frag.inverse => frag.inverse = true,
                'n' if !frag.nominals => frag.nominals = true,
                'u' if !frag.universal => frag.universal = true,
                _ => {
                    return Err(ParseError::UnknownOperator {
                        pos: 0,
                        word: name.to_string(),
                    })
                }
            }
        }
        Ok(frag)
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.graded { "GML" } else { "ML" })?;
        if self.inverse || self.nominals || self.universal {
            write!(f, "^")?;
            if self.inverse {
                write!(f, "i")?;
            }
            if self.nominals {
                write!(f, "n")?;
            }
            if self.universal {
                write!(f, "u")?;
            }
        }
        Ok(())
    }
}

/// True iff every construct of `f` is licensed by `frag`.
pub fn fragment_check(arena: &Arena, f: Fml, frag: Fragment) -> bool {
    arena.subformulas(f).iter().all(|&g| match arena.node(g) {
        Node::Nom(_) => frag.nominals,
        Node::Udia(_) => frag.universal,
        Node::Dia { inv, grade, .. } => (!inv || frag.inverse) && (grade <= 1 || frag.graded),
        _ => true,
    })
}

/// Parse and construction errors for the surface syntax.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("grade 0 in a graded diamond at byte {pos}")]
    GradeZero { pos: usize },
    #[error("unknown operator `{word}` at byte {pos}")]
    UnknownOperator { pos: usize, word: String },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    True,
    Ident(String),
    At,
    Tilde,
    Amp,
    Pipe,
    Arrow,
    Dia,
    Box,
    LBrack,
    RBrack,
    Minus,
    LParen,
    RParen,
    Ge,
    Le,
    Eq,
    Gt,
    Nat(u32),
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            c if c.is_ascii_whitespace() => i += 1,
            '@' => {
                toks.push((Tok::At, i));
                i += 1;
            }
            '~' => {
                toks.push((Tok::Tilde, i));
                i += 1;
            }
            '&' => {
                toks.push((Tok::Amp, i));
                i += 1;
            }
            '|' => {
                toks.push((Tok::Pipe, i));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            '[' => {
                toks.push((Tok::LBrack, i));
                i += 1;
            }
            ']' => {
                toks.push((Tok::RBrack, i));
                i += 1;
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    toks.push((Tok::Arrow, i));
                    i += 2;
                } else {
                    toks.push((Tok::Minus, i));
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Ge, i));
                    i += 2;
                } else {
                    toks.push((Tok::Gt, i));
                    i += 1;
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Le, i));
                    i += 2;
                } else {
                    return Err(ParseError::Syntax {
                        pos: i,
                        msg: "expected `<=`".into(),
                    });
                }
            }
            '=' => {
                toks.push((Tok::Eq, i));
                i += 1;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let n: u32 = text[start..i].parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: "number too large".into(),
                })?;
                toks.push((Tok::Nat(n), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "true" => Tok::True,
                    "dia" => Tok::Dia,
                    "box" => Tok::Box,
                    _ => Tok::Ident(word.to_string()),
                };
                toks.push((tok, start));
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: format!("unexpected `{c}`"),
                });
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    arena: &'a mut Arena,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError::Syntax {
                pos,
                msg: format!("expected {what}"),
            }),
        }
    }

    fn starts_formula(t: Option<&Tok>) -> bool {
        matches!(
            t,
            Some(
                Tok::True
                    | Tok::Ident(_)
                    | Tok::At
                    | Tok::Tilde
                    | Tok::Dia
                    | Tok::Box
                    | Tok::LParen
            )
        )
    }

    fn formula(&mut self) -> Result<Fml, ParseError> {
        let lhs = self.or_level()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.bump();
            let rhs = self.formula()?;
            return Ok(self.arena.implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_level(&mut self) -> Result<Fml, ParseError> {
        let mut acc = self.and_level()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            let rhs = self.and_level()?;
            acc = self.arena.or(acc, rhs);
        }
        Ok(acc)
    }

    fn and_level(&mut self) -> Result<Fml, ParseError> {
        let mut acc = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            let rhs = self.unary()?;
            acc = self.arena.and(acc, rhs);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Fml, ParseError> {
        let pos = self.here();
        match self.peek() {
            Some(Tok::Tilde) => {
                self.bump();
                let body = self.unary()?;
                Ok(self.arena.not(body))
            }
            Some(Tok::Dia) => {
                self.bump();
                self.modal(pos, false)
            }
            Some(Tok::Box) => {
                self.bump();
                self.modal(pos, true)
            }
            Some(Tok::True) => {
                self.bump();
                Ok(self.arena.top())
            }
            Some(Tok::At) => {
                self.bump();
                let pos = self.here();
                match self.bump() {
                    Some(Tok::Ident(name)) => Ok(self.arena.nom(&name)),
                    _ => Err(ParseError::Syntax {
                        pos,
                        msg: "expected constant name after `@`".into(),
                    }),
                }
            }
            Some(Tok::LParen) => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                // `E phi` and `A phi` are the global modalities exactly when
                // followed by a formula start; bare `E`/`A` are identifiers.
                let global = (name == "E" || name == "A") && Self::starts_formula(self.peek2());
                let name = name.clone();
                self.bump();
                if global {
                    let body = self.unary()?;
                    if name == "E" {
                        Ok(self.arena.udia(body))
                    } else {
                        Ok(self.arena.ubox(body))
                    }
                } else {
                    Ok(self.arena.prop(&name))
                }
            }
            _ => Err(ParseError::Syntax {
                pos,
                msg: "expected a formula".into(),
            }),
        }
    }

    /// Shared tail of `dia`/`box`: optional grade comparison, relation
    /// bracket, then the argument. `box C[R] x` is `~ dia C[R] ~x`.
    fn modal(&mut self, op_pos: usize, is_box: bool) -> Result<Fml, ParseError> {
        let cmp = match self.peek() {
            Some(Tok::Ge) => Some(Tok::Ge),
            Some(Tok::Le) => Some(Tok::Le),
            Some(Tok::Eq) => Some(Tok::Eq),
            Some(Tok::Gt) => Some(Tok::Gt),
            _ => None,
        };
        let grade = match cmp {
            Some(_) => {
                self.bump();
                let pos = self.here();
                match self.bump() {
                    Some(Tok::Nat(n)) => Some(n),
                    _ => {
                        return Err(ParseError::Syntax {
                            pos,
                            msg: "expected a number after grade comparison".into(),
                        })
                    }
                }
            }
            None => None,
        };
        self.expect(Tok::LBrack, "`[`")?;
        let pos = self.here();
        let rel = match self.bump() {
            Some(Tok::Ident(name)) => name,
            _ => {
                return Err(ParseError::Syntax {
                    pos,
                    msg: "expected relation name".into(),
                })
            }
        };
        let inv = if self.peek() == Some(&Tok::Minus) {
            self.bump();
            true
        } else {
            false
        };
        self.expect(Tok::RBrack, "`]`")?;
        let body = self.unary()?;
        let body = if is_box { self.arena.not(body) } else { body };
        let too_large = |pos| ParseError::Syntax {
            pos,
            msg: "grade too large".to_string(),
        };
        let dia = match (cmp, grade) {
            (None, _) => self.arena.dia(&rel, inv, 1, body),
            (Some(Tok::Ge), Some(0)) => return Err(ParseError::GradeZero { pos: op_pos }),
            (Some(Tok::Ge), Some(n)) => self.arena.dia(&rel, inv, n, body),
            (Some(Tok::Gt), Some(n)) => {
                let n1 = n.checked_add(1).ok_or(too_large(op_pos))?;
                self.arena.dia(&rel, inv, n1, body)
            }
            (Some(Tok::Le), Some(n)) => {
                let n1 = n.checked_add(1).ok_or(too_large(op_pos))?;
                let d = self.arena.dia(&rel, inv, n1, body);
                self.arena.not(d)
            }
            (Some(Tok::Eq), Some(n)) => {
                if n == u32::MAX {
                    return Err(too_large(op_pos));
                }
                self.arena.dia_exact(&rel, inv, n, body)
            }
            _ => unreachable!("grade comparison always carries a number"),
        };
        Ok(if is_box { self.arena.not(dia) } else { dia })
    }
}

/// Parse the surface syntax into a kernel formula.
pub fn parse_formula(arena: &mut Arena, text: &str) -> Result<Fml, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        arena,
        toks,
        pos: 0,
        end: text.len(),
    };
    let f = p.formula()?;
    if p.pos < p.toks.len() {
        return Err(ParseError::Syntax {
            pos: p.here(),
            msg: "trailing input".into(),
        });
    }
    Ok(f)
}

/// Print a kernel formula in the surface syntax. Grade-1 diamonds print as
/// plain `dia[R]`; parses back to the same handle in the same arena.
pub fn print_formula(arena: &Arena, f: Fml) -> String {
    let mut out = String::new();
    render(arena, f, false, &mut out);
    out
}

fn render(arena: &Arena, f: Fml, need_unary: bool, out: &mut String) {
    match arena.node(f) {
        Node::Top => out.push_str("true"),
        Node::Prop(s) => out.push_str(arena.sym_name(s)),
        Node::Nom(s) => {
            out.push('@');
            out.push_str(arena.sym_name(s));
        }
        Node::Not(x) => {
            out.push('~');
            render(arena, x, true, out);
        }
        Node::Udia(x) => {
            out.push_str("E ");
            render(arena, x, true, out);
        }
        Node::Dia {
            rel,
            inv,
            grade,
            body,
        } => {
            out.push_str("dia");
            if grade > 1 {
                out.push_str(">=");
                out.push_str(&grade.to_string());
            }
            out.push('[');
            out.push_str(arena.sym_name(rel));
            if inv {
                out.push('-');
            }
            out.push_str("] ");
            render(arena, body, true, out);
        }
        Node::And(a, b) => {
            if need_unary {
                out.push('(');
            }
            render(arena, a, false, out);
            out.push_str(" & ");
            render(arena, b, true, out);
            if need_unary {
                out.push(')');
            }
        }
    }
}

/// Negation-closed subformula index over a pair of formulas.
///
/// Members are all subformulas of both inputs plus `true`, followed by the
/// (collapse-normalized) negations of all of these. Indices are stable for a
/// fixed input pair; each member's negation partner is recorded.
pub struct ClosureIndex {
    members: Vec<Fml>,
    index: HashMap<Fml, usize>,
    neg: Vec<usize>,
}

/// Build the closure index for `(f1, f2)`.
pub fn closure(arena: &mut Arena, f1: Fml, f2: Fml) -> ClosureIndex {
    let mut members = Vec::new();
    let mut index = HashMap::new();
    let push = |members: &mut Vec<Fml>, index: &mut HashMap<Fml, usize>, f: Fml| {
        index.entry(f).or_insert_with(|| {
            members.push(f);
            members.len() - 1
        });
    };
    for f in arena.subformulas(f1) {
        push(&mut members, &mut index, f);
    }
    for f in arena.subformulas(f2) {
        push(&mut members, &mut index, f);
    }
    let top = arena.top();
    push(&mut members, &mut index, top);
    let positive = members.len();
    for i in 0..positive {
        let nf = arena.not(members[i]);
        push(&mut members, &mut index, nf);
    }
    let neg = members
        .iter()
        .map(|&m| {
            let nm = arena.not(m);
            index[&nm]
        })
        .collect();
    ClosureIndex {
        members,
        index,
        neg,
    }
}

impl ClosureIndex {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Fml] {
        &self.members
    }

    pub fn fml(&self, i: usize) -> Fml {
        self.members[i]
    }

    pub fn index_of(&self, f: Fml) -> Option<usize> {
        self.index.get(&f).copied()
    }

    /// Index of the collapse-normalized negation of member `i`.
    pub fn neg_of(&self, i: usize) -> usize {
        self.neg[i]
    }
}
