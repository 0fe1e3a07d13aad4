//! Formula syntax for arc sets: `~ child1|p1:p2 + c2:c3|p3`.
//!
//! `:` separates names in a list, `|` separates children from parents, `+`
//! separates terms and `.` stands for every node (minus the child itself on
//! the parent side). Whitespace is ignored; repeated terms are idempotent.

use super::bit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Tilde,
    Colon,
    Bar,
    Plus,
    Dot,
    Ident(String),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let tok = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            '~' => Tok::Tilde,
            ':' => Tok::Colon,
            '|' => Tok::Bar,
            '+' => Tok::Plus,
            '.' => Tok::Dot,
            _ => {
                let mut ident = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || "~:|+.".contains(c) {
                        break;
                    }
                    ident.push(c);
                    chars.next();
                }
                out.push((pos, Tok::Ident(ident)));
                continue;
            }
        };
        chars.next();
        out.push((pos, tok));
    }
    Ok(out)
}

/// A `:`-separated name list; `None` entries mark `.`.
type NameList = Vec<Option<String>>;

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Syntax {
            pos: self.here(),
            msg: msg.to_string(),
        })
    }

    fn list(&mut self) -> Result<NameList> {
        let mut names = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Ident(s)) => names.push(Some(s.clone())),
                Some(Tok::Dot) => names.push(None),
                _ => return self.err("expected a node name or `.`"),
            }
            self.pos += 1;
            if self.peek() == Some(&Tok::Colon) {
                self.pos += 1;
            } else {
                return Ok(names);
            }
        }
    }
}

fn resolve(list: &NameList, nodes: &[String]) -> Result<(u64, bool)> {
    let mut mask = 0u64;
    let mut has_dot = false;
    for entry in list {
        match entry {
            None => {
                has_dot = true;
                mask |= if nodes.len() == 64 {
                    u64::MAX
                } else {
                    bit(nodes.len()) - 1
                };
            }
            Some(name) => {
                let i = nodes
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::UnknownName(name.clone()))?;
                mask |= bit(i);
            }
        }
    }
    Ok((mask, has_dot))
}

/// Parses a formula into per-child parent masks over `nodes`.
pub fn parse_formula(text: &str, nodes: &[String]) -> Result<Vec<u64>> {
    parse_formula_with_notes(text, nodes).map(|(m, _)| m)
}

/// Like [`parse_formula`], also returning notes on constructs whose
/// meaning is an expansion choice (several children combined with `.`).
pub fn parse_formula_with_notes(text: &str, nodes: &[String]) -> Result<(Vec<u64>, Vec<String>)> {
    if nodes.len() > super::MAX_NODES {
        return Err(Error::TooManyNodes(nodes.len()));
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
    };
    if p.peek() != Some(&Tok::Tilde) {
        return p.err("formula must start with `~`");
    }
    p.pos += 1;
    let mut matrix = vec![0u64; nodes.len()];
    let mut notes = Vec::new();
    if p.peek().is_none() {
        return Ok((matrix, notes));
    }
    loop {
        let children = p.list()?;
        let parents = if p.peek() == Some(&Tok::Bar) {
            p.pos += 1;
            Some(p.list()?)
        } else {
            None
        };
        let (child_mask, child_dot) = resolve(&children, nodes)?;
        if let Some(parents) = parents {
            let (parent_mask, parent_dot) = resolve(&parents, nodes)?;
            if (child_dot || child_mask.count_ones() > 1) && parent_dot {
                notes.push(format!(
                    "term at byte {}: several children with `.` parents expanded as a cartesian product",
                    p.here()
                ));
            }
            for c in super::bits(child_mask) {
                let explicit_self = parents
                    .iter()
                    .any(|e| e.as_deref() == Some(nodes[c].as_str()));
                if explicit_self {
                    return Err(Error::SelfArc(nodes[c].clone()));
                }
                matrix[c] |= parent_mask & !bit(c);
            }
        }
        match p.peek() {
            None => break,
            Some(Tok::Plus) => {
                p.pos += 1;
                if p.peek().is_none() {
                    return p.err("dangling `+`");
                }
            }
            Some(_) => return p.err("expected `+`, `|` or end of formula"),
        }
    }
    Ok((matrix, notes))
}

/// Canonical formula for a parent-mask matrix: one term per child with
/// parents, in node order.
pub fn render_formula(matrix: &[u64], nodes: &[String]) -> String {
    let terms: Vec<String> = matrix
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0)
        .map(|(c, &m)| {
            let parents: Vec<&str> = super::bits(m).map(|j| nodes[j].as_str()).collect();
            format!("{}|{}", nodes[c], parents.join(":"))
        })
        .collect();
    if terms.is_empty() {
        "~".to_string()
    } else {
        format!("~{}", terms.join(" + "))
    }
}
