use std::collections::BTreeMap;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

pub const DEFAULT_MAX_ATOMS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseLimits {
    pub max_atoms: usize,
}

impl Default for ParseLimits {
    fn default() -> Self {
        Self {
            max_atoms: DEFAULT_MAX_ATOMS,
        }
    }
}

struct OpenRing {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    limits: ParseLimits,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    branches: Vec<(usize, usize)>,
    pending: Option<(BondOrder, usize)>,
    rings: BTreeMap<u32, OpenRing>,
}

/// Parses the supported SMILES subset into a connected heavy-atom graph.
///
/// Accepted: organic-subset atoms (`B C N O P S F Cl Br I`), aromatic
/// lowercase atoms (`b c n o p s`), bracket atoms with optional hydrogen
/// count and charge, bonds `- = # :`, branches, ring closures `0-9` and
/// `%nn`. Stereo marks, isotopes, atom classes and `.` are rejected.
///
/// ```
/// use amct::molgraph::{parse_smiles, ParseLimits};
/// let g = parse_smiles("C1CCCCC1O", &ParseLimits::default()).unwrap();
/// assert_eq!((g.num_atoms(), g.bonds().len()), (7, 7));
/// ```
pub fn parse_smiles(text: &str, limits: &ParseLimits) -> Result<MolecularGraph, GraphError> {
    if text.is_empty() {
        return Err(GraphError::Empty);
    }
    if let Some(offset) = text.bytes().position(|b| !b.is_ascii()) {
        let token = text[offset..]
            .chars()
            .next()
            .map(String::from)
            .unwrap_or_default();
        return Err(GraphError::UnsupportedToken { token, offset });
    }
    let mut parser = Parser {
        text: text.as_bytes(),
        pos: 0,
        limits: *limits,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        branches: Vec::new(),
        pending: None,
        rings: BTreeMap::new(),
    };
    parser.run()?;
    MolecularGraph::new(parser.atoms, parser.bonds, text)
}

fn unsupported(text: &[u8], start: usize, end: usize) -> GraphError {
    GraphError::UnsupportedToken {
        token: String::from_utf8_lossy(&text[start..end.min(text.len())]).into_owned(),
        offset: start,
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), GraphError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => {
                    let next = self.text.get(start + 1).copied();
                    let (element, len) = match (c, next) {
                        (b'B', Some(b'r')) => (Element::Br, 2),
                        (b'C', Some(b'l')) => (Element::Cl, 2),
                        _ => {
                            let sym = (c as char).to_string();
                            (Element::from_symbol(&sym).expect("organic subset"), 1)
                        }
                    };
                    self.pos += len;
                    self.add_atom(Atom::new(element, 0, false), start)?;
                }
                b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                    let sym = (c.to_ascii_uppercase() as char).to_string();
                    self.pos += 1;
                    let element = Element::from_symbol(&sym).expect("aromatic subset");
                    self.add_atom(Atom::new(element, 0, true), start)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, start)?;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return Err(unsupported(self.text, start, start + 1));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, start));
                    self.pos += 1;
                }
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(unsupported(self.text, start, start + 1));
                    };
                    if self.pending.is_some() {
                        return Err(unsupported(self.text, start, start + 1));
                    }
                    self.branches.push((prev, start));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(unsupported(self.text, start, start + 1));
                    }
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(unsupported(self.text, start, start + 1));
                    };
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure(u32::from(c - b'0'), start)?;
                }
                b'%' => {
                    let digits = self.text.get(start + 1..start + 3);
                    match digits {
                        Some(d) if d.iter().all(u8::is_ascii_digit) => {
                            let label = u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0');
                            self.pos += 3;
                            self.ring_closure(label, start)?;
                        }
                        _ => return Err(unsupported(self.text, start, start + 3)),
                    }
                }
                b'.' => return Err(GraphError::Disconnected),
                _ => return Err(unsupported(self.text, start, start + 1)),
            }
        }
        if let Some((_, offset)) = self.pending {
            return Err(unsupported(self.text, offset, offset + 1));
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(GraphError::UnclosedBranch { offset });
        }
        if let Some((&label, ring)) = self.rings.iter().next() {
            return Err(GraphError::UnclosedRing {
                label,
                offset: ring.offset,
            });
        }
        if self.atoms.is_empty() {
            return Err(GraphError::Empty);
        }
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<(), GraphError> {
        let (lo, hi) = (a.min(b), a.max(b));
        if a == b || self.bonds.iter().any(|bd| bd.endpoints == (lo, hi)) {
            return Err(GraphError::DuplicateBond(lo, hi));
        }
        self.bonds.push(Bond::new(a, b, order));
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) -> Result<(), GraphError> {
        if self.atoms.len() >= self.limits.max_atoms {
            return Err(GraphError::TooManyAtoms {
                count: self.atoms.len() + 1,
                limit: self.limits.max_atoms,
            });
        }
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some((order, _)) => order,
                None => self.default_order(prev, idx),
            };
            self.add_bond(prev, idx, order)?;
        } else if self.pending.is_some() {
            return Err(unsupported(self.text, offset, offset + 1));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, label: u32, offset: usize) -> Result<(), GraphError> {
        let Some(atom) = self.prev else {
            return Err(unsupported(self.text, offset, self.pos));
        };
        let order = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(
                    label,
                    OpenRing {
                        atom,
                        order,
                        offset,
                    },
                );
            }
            Some(open) => {
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(GraphError::RingBondConflict { label, offset });
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(open.atom, atom),
                };
                self.add_bond(open.atom, atom, order)?;
            }
        }
        Ok(())
    }

    /// `[` element/aromatic symbol, optional `H<n>`, optional charge, `]`.
    fn bracket_atom(&mut self) -> Result<Atom, GraphError> {
        let open = self.pos;
        let close = self.text[open..]
            .iter()
            .position(|&b| b == b']')
            .map(|p| open + p)
            .ok_or_else(|| unsupported(self.text, open, self.text.len()))?;
        let body = &self.text[open + 1..close];
        let bad = || unsupported(self.text, open, close + 1);
        let mut i = 0;

        if body.first().is_some_and(u8::is_ascii_digit) {
            return Err(bad());
        }
        let (element, aromatic) = match body.get(i) {
            Some(&c) if c.is_ascii_lowercase() => {
                let sym = (c.to_ascii_uppercase() as char).to_string();
                let e = Element::from_symbol(&sym).filter(|e| e.can_be_aromatic());
                i += 1;
                (e.ok_or_else(bad)?, true)
            }
            Some(&c) if c.is_ascii_uppercase() => {
                let two = body
                    .get(i + 1)
                    .filter(|n| n.is_ascii_lowercase())
                    .and_then(|&n| Element::from_symbol(&format!("{}{}", c as char, n as char)));
                match two {
                    Some(e) => {
                        i += 2;
                        (e, false)
                    }
                    None => {
                        i += 1;
                        (
                            Element::from_symbol(&(c as char).to_string()).ok_or_else(bad)?,
                            false,
                        )
                    }
                }
            }
            _ => return Err(bad()),
        };
        if body.get(i) == Some(&b'H') {
            i += 1;
            while body.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(&sign @ (b'+' | b'-')) = body.get(i) {
            let unit = if sign == b'+' { 1 } else { -1 };
            i += 1;
            let mut magnitude = 1;
            if body.get(i).is_some_and(u8::is_ascii_digit) {
                let start = i;
                while body.get(i).is_some_and(u8::is_ascii_digit) {
                    i += 1;
                }
                magnitude = std::str::from_utf8(&body[start..i])
                    .ok()
                    .and_then(|s| s.parse::<i32>().ok())
                    .ok_or_else(bad)?;
            } else {
                while body.get(i) == Some(&sign) {
                    magnitude += 1;
                    i += 1;
                }
            }
            charge = unit * magnitude;
        }
        if i != body.len() {
            return Err(bad());
        }
        if !(-2..=2).contains(&charge) {
            return Err(GraphError::ChargeOutOfRange {
                charge,
                offset: open,
            });
        }
        self.pos = close + 1;
        Ok(Atom::new(element, charge as i8, aromatic))
    }
}
