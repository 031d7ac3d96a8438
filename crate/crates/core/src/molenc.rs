//! SMILES parsing, hashed binary fingerprints and the compound-encoder
//! interface.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{from_hex, to_hex, Fnv1a};

const ELEMENTS: [&str; 86] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
];

const ORGANIC: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
const AROMATIC: [&str; 8] = ["b", "c", "n", "o", "p", "s", "se", "as"];

fn element_symbol(s: &str) -> Option<&'static str> {
    ELEMENTS.iter().copied().find(|e| *e == s)
}

/// Normal valences of organic-subset atoms, lowest first.
fn default_valences(element: &str) -> &'static [u8] {
    match element {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3, 5],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => &[],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    /// Contribution to valence; aromatic bonds count one here and the
    /// remaining electron is accounted per atom.
    fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub charge: i8,
    pub aromatic: bool,
    /// Implicit hydrogens for organic-subset atoms, explicit count for
    /// bracket atoms.
    pub hydrogens: u8,
    /// Written in brackets; its hydrogen count is fixed rather than derived.
    pub bracket: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmilesError {
    #[error("position {pos}: unexpected character {ch:?}")]
    Unexpected { pos: usize, ch: char },
    #[error("position {pos}: unknown element {symbol:?}")]
    UnknownElement { pos: usize, symbol: String },
    #[error("position {pos}: unbalanced parenthesis")]
    Parenthesis { pos: usize },
    #[error("position {pos}: ring closure {label} is not closed")]
    OpenRing { pos: usize, label: u32 },
    #[error("position {pos}: invalid ring closure {label}")]
    BadRing { pos: usize, label: u32 },
    #[error("position {pos}: bond without a preceding atom")]
    DanglingBond { pos: usize },
    #[error("position {pos}: unterminated bracket atom")]
    Bracket { pos: usize },
}

impl MolecularGraph {
    pub fn neighbors(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.a].push((b.b, b.order));
            adj[b.b].push((b.a, b.order));
        }
        adj
    }

    fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
    }

    /// Hydrogens an organic-subset atom would carry implicitly given its bonds.
    pub fn implied_hydrogens(&self, atom: usize) -> u8 {
        let a = &self.atoms[atom];
        let mut used: u32 = 0;
        let mut aromatic_bonds = 0;
        for b in self.bonds.iter().filter(|b| b.a == atom || b.b == atom) {
            used += u32::from(b.order.valence());
            if b.order == BondOrder::Aromatic {
                aromatic_bonds += 1;
            }
        }
        let valences = default_valences(&a.element);
        if a.aromatic || aromatic_bonds > 0 {
            used += 1;
            return valences.first().map_or(0, |&v| u32::from(v).saturating_sub(used) as u8);
        }
        valences
            .iter()
            .find(|&&v| u32::from(v) >= used)
            .map_or(0, |&v| (u32::from(v) - used) as u8)
    }

    /// Structural checks: valid distinct endpoints, no duplicate bonds,
    /// implicit hydrogens consistent with the valence model.
    pub fn check(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for b in &self.bonds {
            if b.a >= self.atoms.len() || b.b >= self.atoms.len() || b.a == b.b {
                return Err(format!("invalid bond {}-{}", b.a, b.b));
            }
            if !seen.insert((b.a.min(b.b), b.a.max(b.b))) {
                return Err(format!("duplicate bond {}-{}", b.a, b.b));
            }
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if !a.bracket && a.hydrogens != self.implied_hydrogens(i) {
                return Err(format!("atom {i}: {} hydrogens, valence model gives {}", a.hydrogens, self.implied_hydrogens(i)));
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    mol: MolecularGraph,
    _src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            self.chars[start..self.pos].iter().collect::<String>().parse().ok()
        }
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.chars[self.pos];
        let two: String = self.chars[self.pos..(self.pos + 2).min(self.chars.len())].iter().collect();
        let (symbol, aromatic, len) = if two == "Cl" || two == "Br" {
            (two, false, 2)
        } else if c.is_ascii_uppercase() && ORGANIC.contains(&c.to_string().as_str()) {
            (c.to_string(), false, 1)
        } else if AROMATIC[..6].contains(&c.to_string().as_str()) {
            (c.to_ascii_uppercase().to_string(), true, 1)
        } else {
            return Err(SmilesError::UnknownElement {
                pos: start,
                symbol: c.to_string(),
            });
        };
        self.pos += len;
        Ok(Atom {
            element: symbol,
            charge: 0,
            aromatic,
            hydrogens: 0,
            bracket: false,
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        // isotope, accepted and discarded
        let _ = self.number();
        let start = self.pos;
        let rest: String = self.chars[self.pos..].iter().take(2).collect();
        let (symbol, aromatic) = if let Some(ar) = AROMATIC.iter().find(|a| a.len() == 2 && rest.starts_with(**a)) {
            self.pos += 2;
            (capitalize(ar), true)
        } else if let Some(c) = self.peek().filter(|c| c.is_ascii_lowercase()) {
            if !AROMATIC.contains(&c.to_string().as_str()) {
                return Err(SmilesError::UnknownElement {
                    pos: start,
                    symbol: c.to_string(),
                });
            }
            self.pos += 1;
            (c.to_ascii_uppercase().to_string(), true)
        } else if self.peek().is_some_and(|c| c.is_ascii_uppercase()) {
            let two: String = self.chars[self.pos..].iter().take(2).collect();
            if two.chars().nth(1).is_some_and(|c| c.is_ascii_lowercase()) && element_symbol(&two).is_some() {
                self.pos += 2;
                (two, false)
            } else {
                let one = self.chars[self.pos].to_string();
                if element_symbol(&one).is_none() {
                    return Err(SmilesError::UnknownElement { pos: start, symbol: one });
                }
                self.pos += 1;
                (one, false)
            }
        } else {
            return Err(match self.peek() {
                Some(ch) => SmilesError::Unexpected { pos: self.pos, ch },
                None => SmilesError::Bracket { pos: open },
            });
        };
        // chirality, discarded
        while self.peek() == Some('@') {
            self.pos += 1;
        }
        let mut hydrogens = 0u8;
        if self.peek() == Some('H') {
            self.pos += 1;
            hydrogens = self.number().unwrap_or(1) as u8;
        }
        let mut charge: i32 = 0;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let sign = if c == '+' { 1 } else { -1 };
            match self.number() {
                Some(n) => charge += sign * n as i32,
                None => charge += sign,
            }
        }
        if self.peek() == Some(':') {
            self.pos += 1;
            let _ = self.number();
        }
        match self.peek() {
            Some(']') => self.pos += 1,
            Some(ch) => return Err(SmilesError::Unexpected { pos: self.pos, ch }),
            None => return Err(SmilesError::Bracket { pos: open }),
        }
        Ok(Atom {
            element: symbol,
            charge: charge.clamp(-127, 127) as i8,
            aromatic,
            hydrogens,
            bracket: true,
        })
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

/// Parse a SMILES string.
///
/// Stereo marks (`@`, `/`, `\`), isotopes and atom classes are accepted and
/// dropped. `.` separates disconnected components.
pub fn parse_smiles(s: &str) -> Result<MolecularGraph, SmilesError> {
    let mut p = Parser {
        chars: s.trim().chars().collect(),
        pos: 0,
        mol: MolecularGraph::default(),
        _src: s,
    };
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondOrder, usize)> = None;
    let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
    let mut rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)> = BTreeMap::new();

    fn default_order(mol: &MolecularGraph, a: usize, b: usize) -> BondOrder {
        if mol.atoms[a].aromatic && mol.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    while let Some(c) = p.peek() {
        let pos = p.pos;
        match c {
            '(' => {
                if prev.is_none() {
                    return Err(SmilesError::Parenthesis { pos });
                }
                branches.push((prev, pos));
                p.pos += 1;
            }
            ')' => {
                let Some((b, _)) = branches.pop() else {
                    return Err(SmilesError::Parenthesis { pos });
                };
                if pending.is_some() {
                    return Err(SmilesError::DanglingBond { pos });
                }
                prev = b;
                p.pos += 1;
            }
            '-' | '=' | '#' | ':' | '/' | '\\' => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::DanglingBond { pos });
                }
                let order = match c {
                    '=' => BondOrder::Double,
                    '#' => BondOrder::Triple,
                    ':' => BondOrder::Aromatic,
                    _ => BondOrder::Single,
                };
                pending = Some((order, pos));
                p.pos += 1;
            }
            '.' => {
                if pending.is_some() {
                    return Err(SmilesError::DanglingBond { pos });
                }
                prev = None;
                p.pos += 1;
            }
            '%' | '0'..='9' => {
                let Some(cur) = prev else {
                    return Err(SmilesError::Unexpected { pos, ch: c });
                };
                let label = if c == '%' {
                    p.pos += 1;
                    let start = p.pos;
                    let d: String = p.chars[start..(start + 2).min(p.chars.len())].iter().collect();
                    if d.len() != 2 || !d.chars().all(|c| c.is_ascii_digit()) {
                        return Err(SmilesError::Unexpected { pos, ch: '%' });
                    }
                    p.pos += 2;
                    d.parse::<u32>().unwrap_or(0)
                } else {
                    p.pos += 1;
                    c.to_digit(10).unwrap_or(0)
                };
                let order = pending.take().map(|(o, _)| o);
                match rings.remove(&label) {
                    None => {
                        rings.insert(label, (cur, order, pos));
                    }
                    Some((other, other_order, _)) => {
                        if other == cur || p.mol.bond_between(other, cur).is_some() {
                            return Err(SmilesError::BadRing { pos, label });
                        }
                        let order = match (order, other_order) {
                            (Some(a), Some(b)) if a != b => return Err(SmilesError::BadRing { pos, label }),
                            (Some(a), _) | (None, Some(a)) => a,
                            (None, None) => default_order(&p.mol, other, cur),
                        };
                        p.mol.bonds.push(Bond { a: other, b: cur, order });
                    }
                }
            }
            _ => {
                let atom = if c == '[' { p.bracket_atom()? } else { p.organic_atom()? };
                p.mol.atoms.push(atom);
                let cur = p.mol.atoms.len() - 1;
                if let Some(pr) = prev {
                    let order = match pending.take() {
                        Some((o, _)) => o,
                        None => default_order(&p.mol, pr, cur),
                    };
                    p.mol.bonds.push(Bond { a: pr, b: cur, order });
                } else if let Some((_, bpos)) = pending {
                    return Err(SmilesError::DanglingBond { pos: bpos });
                }
                prev = Some(cur);
            }
        }
    }
    if let Some((_, pos)) = pending {
        return Err(SmilesError::DanglingBond { pos });
    }
    if let Some((_, pos)) = branches.pop() {
        return Err(SmilesError::Parenthesis { pos });
    }
    if let Some((label, (_, _, pos))) = rings.into_iter().next() {
        return Err(SmilesError::OpenRing { pos, label });
    }
    let mut mol = p.mol;
    for i in 0..mol.atoms.len() {
        if !mol.atoms[i].bracket {
            mol.atoms[i].hydrogens = mol.implied_hydrogens(i);
        }
    }
    Ok(mol)
}

fn atom_invariant(mol: &MolecularGraph, adj: &[Vec<(usize, BondOrder)>], i: usize) -> u64 {
    let a = &mol.atoms[i];
    let mut h = Fnv1a::new();
    h.write(b"atom");
    h.write(a.element.as_bytes());
    h.write(&[0, a.charge as u8, adj[i].len() as u8, a.hydrogens, u8::from(a.aromatic)]);
    h.finish()
}

/// Canonical symmetry classes by iterative neighborhood refinement.
fn refine_classes(mol: &MolecularGraph) -> Vec<u64> {
    let adj = mol.neighbors();
    let mut ids: Vec<u64> = (0..mol.atoms.len()).map(|i| atom_invariant(mol, &adj, i)).collect();
    let distinct = |v: &[u64]| v.iter().collect::<BTreeSet<_>>().len();
    let mut classes = distinct(&ids);
    for _ in 0..mol.atoms.len() {
        let next: Vec<u64> = (0..ids.len())
            .map(|i| {
                let mut env: Vec<(u8, u64)> = adj[i].iter().map(|&(n, o)| (o.code(), ids[n])).collect();
                env.sort_unstable();
                let mut h = Fnv1a::new();
                h.write_u64(ids[i]);
                for (o, n) in env {
                    h.write(&[o]);
                    h.write_u64(n);
                }
                h.finish()
            })
            .collect();
        let c = distinct(&next);
        ids = next;
        if c == classes {
            break;
        }
        classes = c;
    }
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintMethod {
    Morgan,
    AtomPair,
    Path,
    Combined,
}

impl FingerprintMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FingerprintMethod::Morgan => "morgan",
            FingerprintMethod::AtomPair => "atom_pair",
            FingerprintMethod::Path => "path",
            FingerprintMethod::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "morgan" => Some(FingerprintMethod::Morgan),
            "atom_pair" | "atompair" => Some(FingerprintMethod::AtomPair),
            "path" | "topological" => Some(FingerprintMethod::Path),
            "combined" => Some(FingerprintMethod::Combined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintParams {
    pub width: usize,
    pub radius: u32,
    pub max_path: usize,
    /// Morgan, atom-pair and path widths of a combined fingerprint.
    pub combined_widths: [usize; 3],
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams {
            width: 2048,
            radius: 2,
            max_path: 7,
            combined_widths: [2048, 2048, 2048],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("fingerprint width {0} is not a power of two")]
    Width(usize),
    #[error("max_path must be at least 1")]
    MaxPath,
    #[error("malformed fingerprint hex: {0}")]
    Hex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub method: FingerprintMethod,
    pub width: usize,
    bits: Vec<u8>,
}

impl Fingerprint {
    pub fn zeros(method: FingerprintMethod, width: usize) -> Self {
        Fingerprint {
            method,
            width,
            bits: vec![0; width.div_ceil(8)],
        }
    }

    pub fn set(&mut self, i: usize) {
        self.bits[i / 8] |= 0x80 >> (i % 8);
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.width).filter(|&i| self.get(i)).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        (0..self.width).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect()
    }

    /// Bits packed big-endian within bytes, as lowercase hex.
    pub fn to_hex(&self) -> String {
        to_hex(&self.bits)
    }

    pub fn from_hex(method: FingerprintMethod, width: usize, hex: &str) -> Result<Self, FingerprintError> {
        let bits = from_hex(hex).ok_or_else(|| FingerprintError::Hex(hex.to_string()))?;
        if bits.len() != width.div_ceil(8) {
            return Err(FingerprintError::Hex(format!("{} bytes for width {width}", bits.len())));
        }
        Ok(Fingerprint { method, width, bits })
    }

    fn concat(parts: &[Fingerprint]) -> Fingerprint {
        let width = parts.iter().map(|p| p.width).sum();
        let mut out = Fingerprint::zeros(FingerprintMethod::Combined, width);
        let mut offset = 0;
        for p in parts {
            for i in p.ones() {
                out.set(offset + i);
            }
            offset += p.width;
        }
        out
    }
}

fn check_width(w: usize) -> Result<(), FingerprintError> {
    if w == 0 || !w.is_power_of_two() {
        Err(FingerprintError::Width(w))
    } else {
        Ok(())
    }
}

/// Hashed Morgan environment identifiers for every round `0..=radius`.
pub fn morgan_features(mol: &MolecularGraph, radius: u32) -> Vec<u64> {
    let adj = mol.neighbors();
    let mut ids: Vec<u64> = (0..mol.atoms.len()).map(|i| atom_invariant(mol, &adj, i)).collect();
    let mut features = ids.clone();
    for round in 1..=radius {
        ids = (0..ids.len())
            .map(|i| {
                let mut env: Vec<(u8, u64)> = adj[i].iter().map(|&(n, o)| (o.code(), ids[n])).collect();
                env.sort_unstable();
                let mut h = Fnv1a::new();
                h.write_u64(u64::from(round));
                h.write_u64(ids[i]);
                for (o, n) in env {
                    h.write(&[o]);
                    h.write_u64(n);
                }
                h.finish()
            })
            .collect();
        features.extend_from_slice(&ids);
    }
    features
}

fn bfs_distances(adj: &[Vec<(usize, BondOrder)>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let d = dist[u].unwrap_or(0);
        for &(v, _) in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Hashed (invariant, distance, invariant) features over connected atom pairs.
pub fn atom_pair_features(mol: &MolecularGraph) -> Vec<u64> {
    let adj = mol.neighbors();
    let inv: Vec<u64> = (0..mol.atoms.len()).map(|i| atom_invariant(mol, &adj, i)).collect();
    let mut out = Vec::new();
    for i in 0..mol.atoms.len() {
        let dist = bfs_distances(&adj, i);
        for (j, d) in dist.iter().enumerate().skip(i + 1) {
            let Some(d) = d else { continue };
            let (lo, hi) = if inv[i] <= inv[j] { (inv[i], inv[j]) } else { (inv[j], inv[i]) };
            let mut h = Fnv1a::new();
            h.write(b"pair");
            h.write_u64(lo);
            h.write_u64(*d as u64);
            h.write_u64(hi);
            out.push(h.finish());
        }
    }
    out
}

fn path_atom_label(a: &Atom) -> u64 {
    let mut h = Fnv1a::new();
    h.write(a.element.as_bytes());
    h.write(&[0, a.charge as u8, u8::from(a.aromatic)]);
    h.finish()
}

/// Hashed labels of linear bond paths of 1 to `max_path` bonds.
pub fn path_features(mol: &MolecularGraph, max_path: usize) -> Vec<u64> {
    let adj = mol.neighbors();
    let labels: Vec<u64> = mol.atoms.iter().map(path_atom_label).collect();
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut orders: Vec<u8> = Vec::new();

    fn emit(labels: &[u64], stack: &[usize], orders: &[u8], out: &mut BTreeSet<u64>) {
        let fwd: Vec<u64> = stack
            .iter()
            .enumerate()
            .flat_map(|(k, &a)| {
                let o = if k < orders.len() { Some(u64::from(orders[k])) } else { None };
                core::iter::once(labels[a]).chain(o)
            })
            .collect();
        let rev: Vec<u64> = fwd.iter().rev().copied().collect();
        let canon = if rev < fwd { rev } else { fwd };
        let mut h = Fnv1a::new();
        h.write(b"path");
        for x in canon {
            h.write_u64(x);
        }
        out.insert(h.finish());
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        adj: &[Vec<(usize, BondOrder)>],
        labels: &[u64],
        max_path: usize,
        stack: &mut Vec<usize>,
        orders: &mut Vec<u8>,
        out: &mut BTreeSet<u64>,
    ) {
        let Some(&last) = stack.last() else { return };
        if orders.len() == max_path {
            return;
        }
        for &(n, o) in &adj[last] {
            if stack.contains(&n) {
                continue;
            }
            stack.push(n);
            orders.push(o.code());
            emit(labels, stack, orders, out);
            walk(adj, labels, max_path, stack, orders, out);
            stack.pop();
            orders.pop();
        }
    }

    for start in 0..mol.atoms.len() {
        stack.push(start);
        walk(&adj, &labels, max_path, &mut stack, &mut orders, &mut out);
        stack.pop();
    }
    out.into_iter().collect()
}

fn fold(method: FingerprintMethod, width: usize, features: &[u64]) -> Fingerprint {
    let mut fp = Fingerprint::zeros(method, width);
    for f in features {
        fp.set((*f & (width as u64 - 1)) as usize);
    }
    fp
}

/// Hashed binary fingerprint. An empty molecule gives all zeros.
pub fn fingerprint(
    mol: &MolecularGraph,
    method: FingerprintMethod,
    params: &FingerprintParams,
) -> Result<Fingerprint, FingerprintError> {
    if method != FingerprintMethod::Combined {
        check_width(params.width)?;
    }
    if params.max_path == 0 && matches!(method, FingerprintMethod::Path | FingerprintMethod::Combined) {
        return Err(FingerprintError::MaxPath);
    }
    if mol.atoms.is_empty() {
        log::warn!("fingerprint of an empty molecule");
    }
    Ok(match method {
        FingerprintMethod::Morgan => fold(method, params.width, &morgan_features(mol, params.radius)),
        FingerprintMethod::AtomPair => fold(method, params.width, &atom_pair_features(mol)),
        FingerprintMethod::Path => fold(method, params.width, &path_features(mol, params.max_path)),
        FingerprintMethod::Combined => {
            let [wm, wa, wp] = params.combined_widths;
            for w in params.combined_widths {
                check_width(w)?;
            }
            Fingerprint::concat(&[
                fold(FingerprintMethod::Morgan, wm, &morgan_features(mol, params.radius)),
                fold(FingerprintMethod::AtomPair, wa, &atom_pair_features(mol)),
                fold(FingerprintMethod::Path, wp, &path_features(mol, params.max_path)),
            ])
        }
    })
}

/// Output width of `method` under `params`.
pub fn fingerprint_width(method: FingerprintMethod, params: &FingerprintParams) -> usize {
    match method {
        FingerprintMethod::Combined => params.combined_widths.iter().sum(),
        _ => params.width,
    }
}

fn write_atom(a: &Atom, implied_h: u8) -> String {
    let organic = ORGANIC.contains(&a.element.as_str())
        && (!a.aromatic || AROMATIC[..6].contains(&a.element.to_ascii_lowercase().as_str()));
    let symbol = if a.aromatic { a.element.to_ascii_lowercase() } else { a.element.clone() };
    if organic && a.charge == 0 && a.hydrogens == implied_h {
        return symbol;
    }
    let mut s = format!("[{symbol}");
    match a.hydrogens {
        0 => {}
        1 => s.push('H'),
        n => s.push_str(&format!("H{n}")),
    }
    match a.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_symbol(mol: &MolecularGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = mol.atoms[a].aromatic && mol.atoms[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn write_with_ranks(mol: &MolecularGraph, ranks: &[u64]) -> String {
    let n = mol.atoms.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (bi, b) in mol.bonds.iter().enumerate() {
        adj[b.a].push((b.b, bi));
        adj[b.b].push((b.a, bi));
    }
    for list in &mut adj {
        list.sort_by_key(|&(nb, _)| (ranks[nb], nb));
    }

    // First pass: spanning forest and ring-closure bonds.
    let mut visited = vec![false; n];
    let mut classified = vec![false; mol.bonds.len()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ring_bonds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (ranks[i], i));
    for &root in &order {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (u, ref mut k)) = stack.last_mut() {
            if *k >= adj[u].len() {
                stack.pop();
                continue;
            }
            let (v, bi) = adj[u][*k];
            *k += 1;
            if classified[bi] {
                continue;
            }
            classified[bi] = true;
            if visited[v] {
                // Opened at the earlier atom v, closed here.
                ring_bonds[v].push(bi);
                ring_bonds[u].push(bi);
            } else {
                visited[v] = true;
                children[u].push((v, bi));
                stack.push((v, 0));
            }
        }
    }

    let implied: Vec<u8> = (0..n).map(|i| mol.implied_hydrogens(i)).collect();
    let mut out = String::new();
    let mut digit_of: BTreeMap<usize, u32> = BTreeMap::new();
    let mut free: BTreeSet<u32> = (1..100).collect();

    enum Step {
        Atom(usize, Option<usize>),
        Open,
        Close,
    }
    for (ri, &root) in roots.iter().enumerate() {
        if ri > 0 {
            out.push('.');
        }
        let mut stack = vec![Step::Atom(root, None)];
        while let Some(step) = stack.pop() {
            let (u, via) = match step {
                Step::Open => {
                    out.push('(');
                    continue;
                }
                Step::Close => {
                    out.push(')');
                    continue;
                }
                Step::Atom(u, via) => (u, via),
            };
            if let Some(bi) = via {
                let b = mol.bonds[bi];
                out.push_str(bond_symbol(mol, b.a, b.b, b.order));
            }
            out.push_str(&write_atom(&mol.atoms[u], implied[u]));
            for &bi in &ring_bonds[u] {
                let b = mol.bonds[bi];
                let label = match digit_of.remove(&bi) {
                    Some(d) => {
                        out.push_str(bond_symbol(mol, b.a, b.b, b.order));
                        free.insert(d);
                        d
                    }
                    None => {
                        let d = free.pop_first().unwrap_or(99);
                        digit_of.insert(bi, d);
                        d
                    }
                };
                if label < 10 {
                    out.push(char::from(b'0' + label as u8));
                } else {
                    out.push_str(&format!("%{label:02}"));
                }
            }
            // Every child but the last is a branch. Pushed in reverse so the
            // first child is written first.
            let kids = &children[u];
            for (k, &(v, bi)) in kids.iter().enumerate().rev() {
                if k + 1 < kids.len() {
                    stack.push(Step::Close);
                    stack.push(Step::Atom(v, Some(bi)));
                    stack.push(Step::Open);
                } else {
                    stack.push(Step::Atom(v, Some(bi)));
                }
            }
        }
    }
    out
}

/// Deterministic SMILES with atoms visited in canonical-class order.
pub fn write_smiles(mol: &MolecularGraph) -> String {
    let classes = refine_classes(mol);
    let mut idx: Vec<usize> = (0..mol.atoms.len()).collect();
    idx.sort_by_key(|&i| (classes[i], i));
    let mut ranks = vec![0u64; mol.atoms.len()];
    for (r, &i) in idx.iter().enumerate() {
        ranks[i] = r as u64;
    }
    write_with_ranks(mol, &ranks)
}

/// A SMILES for the same graph with a random atom visiting order.
pub fn write_smiles_randomized<R: Rng + ?Sized>(mol: &MolecularGraph, rng: &mut R) -> String {
    let mut ranks: Vec<u64> = (0..mol.atoms.len() as u64).collect();
    ranks.shuffle(rng);
    write_with_ranks(mol, &ranks)
}

/// `kb_id\tmethod\twidth\thex_bits`
pub fn fingerprint_cache_line(kb_id: &str, fp: &Fingerprint) -> String {
    format!("{kb_id}\t{}\t{}\t{}", fp.method.as_str(), fp.width, fp.to_hex())
}

pub fn parse_fingerprint_cache_line(line: &str) -> Result<(String, Fingerprint), FingerprintError> {
    let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
    let bad = || FingerprintError::Hex(line.to_string());
    if f.len() != 4 {
        return Err(bad());
    }
    let method = FingerprintMethod::parse(f[1]).ok_or_else(bad)?;
    let width: usize = f[2].parse().map_err(|_| bad())?;
    Ok((f[0].to_string(), Fingerprint::from_hex(method, width, f[3])?))
}

/// Split SMILES into encoder tokens: bracket atoms, two-letter halogens,
/// `%nn` ring labels and single characters.
pub fn tokenize_smiles(s: &str) -> Result<Vec<String>, SmilesError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let tok: String = match c {
            '[' => {
                let end = chars[i..]
                    .iter()
                    .position(|&x| x == ']')
                    .ok_or(SmilesError::Bracket { pos: i })?;
                chars[i..=i + end].iter().collect()
            }
            'C' if chars.get(i + 1) == Some(&'l') => "Cl".to_string(),
            'B' if chars.get(i + 1) == Some(&'r') => "Br".to_string(),
            '%' => {
                if i + 2 >= chars.len() {
                    return Err(SmilesError::Unexpected { pos: i, ch: '%' });
                }
                chars[i..i + 3].iter().collect()
            }
            c if c.is_ascii_alphanumeric() || "()=#-+:/\\.@".contains(c) => c.to_string(),
            ch => return Err(SmilesError::Unexpected { pos: i, ch }),
        };
        i += tok.chars().count();
        out.push(tok);
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error(transparent)]
    Tokenize(#[from] SmilesError),
    #[error("{0} tokens exceed the encoder maximum length")]
    TooLong(usize),
}

/// Maps a SMILES string to a fixed-width vector: the aggregation-token
/// position of the final layer.
pub trait CompoundEncoder {
    fn width(&self) -> usize;
    fn encode(&self, smiles: &str) -> Result<Vec<f64>, EncodeError>;
}

/// Encoding for an entity, or zeros when it has no SMILES.
pub fn encode_compound(encoder: &dyn CompoundEncoder, smiles: Option<&str>) -> Result<Vec<f64>, EncodeError> {
    match smiles {
        None => Ok(vec![0.0; encoder.width()]),
        Some(s) => encoder.encode(s),
    }
}

/// Small randomly initialized transformer over SMILES tokens.
#[derive(Debug, Clone)]
pub struct ToyCompoundEncoder {
    encoder: crate::model::TinyEncoder,
    store: crate::nn::ParamStore,
}

impl ToyCompoundEncoder {
    pub fn new(width: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut vocab_tokens: Vec<String> = Vec::new();
        for sym in ORGANIC.iter().chain(AROMATIC.iter()) {
            vocab_tokens.push(sym.to_string());
        }
        for c in "()=#-+:/\\.@0123456789%H".chars() {
            vocab_tokens.push(c.to_string());
        }
        let vocab = crate::model::Vocab::from_tokens(vocab_tokens);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut store = crate::nn::ParamStore::new();
        let cfg = crate::model::EncoderConfig {
            width,
            layers: 2,
            ffn: 2 * width,
            max_len: 256,
        };
        let encoder = crate::model::TinyEncoder::new(cfg, vocab, &mut store, &mut rng);
        ToyCompoundEncoder { encoder, store }
    }
}

impl CompoundEncoder for ToyCompoundEncoder {
    fn width(&self) -> usize {
        use crate::model::TextEncoder;
        self.encoder.width()
    }

    fn encode(&self, smiles: &str) -> Result<Vec<f64>, EncodeError> {
        use crate::model::TextEncoder;
        let mut tokens = vec![crate::instances::CLS.to_string()];
        tokens.extend(tokenize_smiles(smiles)?);
        if tokens.len() > self.encoder.max_len() {
            return Err(EncodeError::TooLong(tokens.len()));
        }
        let ids = self.encoder.token_ids(&tokens);
        Ok(crate::model::encode_ids(&self.encoder, &self.store, &ids).vector)
    }
}
