//! SMILES tokenisation and formula atom counting.

use std::collections::HashMap;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_INDEX: u32 = 0;
pub const PAD_TOKEN: &str = "<pad>";

/// Vocabulary in index order; index 0 is padding. `@` is deliberately absent.
const TOKENS: [&str; 64] = [
    PAD_TOKEN, "Cl", "Br", // digraphs
    "C", "N", "O", "S", "P", "F", "I", "B", "H", // organic subset + H
    "c", "n", "o", "s", "p", "b", // aromatic
    "-", "=", "#", "$", ":", "/", "\\", ".", // bonds
    "(", ")", "[", "]", "+", // branches, brackets, charge
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "%", // ring closures
    "A", "D", "E", "G", "K", "L", "M", "R", "T", "U", "V", "W", "Z", // other element letters
    "a", "d", "e", "g", "i", "l", "r", "t", "u",
];

#[derive(Debug, Clone)]
pub struct SmilesVocabulary {
    tokens: Vec<&'static str>,
    index: HashMap<&'static str, u32>,
    checksum: [u8; 32],
}

impl SmilesVocabulary {
    pub fn standard() -> &'static SmilesVocabulary {
        static VOCAB: OnceLock<SmilesVocabulary> = OnceLock::new();
        VOCAB.get_or_init(|| {
            let tokens = TOKENS.to_vec();
            let index = tokens.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
            let mut hasher = Sha256::new();
            for t in &tokens {
                hasher.update(t.as_bytes());
                hasher.update([0u8]);
            }
            SmilesVocabulary { tokens, index, checksum: hasher.finalize().into() }
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&'static str> {
        self.tokens.get(index as usize).copied()
    }

    pub fn checksum(&self) -> [u8; 32] {
        self.checksum
    }

    /// Greedy tokenisation: `Cl` and `Br` are matched before single characters.
    pub fn tokenize(&self, smiles: &str) -> Result<Vec<u32>> {
        let chars: Vec<char> = smiles.chars().collect();
        let mut out = Vec::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            if i + 1 < chars.len() {
                let pair: String = chars[i..i + 2].iter().collect();
                if pair == "Cl" || pair == "Br" {
                    out.push(self.index[pair.as_str()]);
                    i += 2;
                    continue;
                }
            }
            let single = chars[i].to_string();
            match self.index.get(single.as_str()) {
                Some(&idx) if idx != PAD_INDEX => out.push(idx),
                _ => return Err(Error::UnknownToken { token: single, position: i }),
            }
            i += 1;
        }
        Ok(out)
    }

    /// Inverse of [`tokenize`](Self::tokenize); padding indices are skipped.
    pub fn detokenize(&self, indices: &[u32]) -> String {
        indices.iter().filter(|&&i| i != PAD_INDEX).filter_map(|&i| self.token(i)).collect()
    }
}

/// Token indices truncated or zero-padded to `max_len`.
pub fn encode_smiles(smiles: &str, max_len: usize) -> Result<Vec<u32>> {
    if smiles.is_empty() {
        return Err(Error::EmptyInput("SMILES string"));
    }
    let mut idx = SmilesVocabulary::standard().tokenize(smiles)?;
    idx.resize(max_len, PAD_INDEX);
    Ok(idx)
}

#[derive(Debug, Clone)]
struct ParsedAtom {
    element: String,
    aromatic: bool,
    explicit_h: Option<u32>,
    bond_sum: u32,
}

/// Organic-subset valences, lowest first.
fn valences(element: &str) -> Option<&'static [u32]> {
    Some(match element {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3, 5],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => return None,
    })
}

impl ParsedAtom {
    fn implicit_h(&self) -> u32 {
        if let Some(h) = self.explicit_h {
            return h;
        }
        let Some(vals) = valences(&self.element) else { return 0 };
        if self.aromatic {
            // Aromatic B/C/N/P spend one valence on the ring pi system; O and S donate a lone pair.
            let pi = u32::from(matches!(self.element.as_str(), "B" | "C" | "N" | "P"));
            return vals[0].saturating_sub(self.bond_sum + pi);
        }
        vals.iter().find(|&&v| v >= self.bond_sum).map_or(0, |v| v - self.bond_sum)
    }
}

struct SmilesGraph {
    atoms: Vec<ParsedAtom>,
}

fn parse_smiles(smiles: &str) -> Result<SmilesGraph> {
    let chars: Vec<char> = smiles.chars().collect();
    let mut atoms: Vec<ParsedAtom> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branch_stack: Vec<Option<usize>> = Vec::new();
    let mut pending: Option<u32> = None;
    let mut rings: HashMap<u32, (usize, Option<u32>)> = HashMap::new();
    let mut i = 0;

    let bond = |atoms: &mut Vec<ParsedAtom>, a: usize, b: usize, order: u32| {
        atoms[a].bond_sum += order;
        atoms[b].bond_sum += order;
    };

    while i < chars.len() {
        let c = chars[i];
        match c {
            '-' | '/' | '\\' | ':' => {
                pending = Some(1);
                i += 1;
            }
            '=' => {
                pending = Some(2);
                i += 1;
            }
            '#' => {
                pending = Some(3);
                i += 1;
            }
            '$' => {
                pending = Some(4);
                i += 1;
            }
            '.' => {
                prev = None;
                pending = None;
                i += 1;
            }
            '(' => {
                if prev.is_none() {
                    return Err(Error::UnsupportedSmiles(format!("branch without a preceding atom at position {i}")));
                }
                branch_stack.push(prev);
                i += 1;
            }
            ')' => {
                prev = branch_stack
                    .pop()
                    .ok_or_else(|| Error::UnsupportedSmiles(format!("unbalanced `)` at position {i}")))?;
                pending = None;
                i += 1;
            }
            '0'..='9' | '%' => {
                let (label, next) = if c == '%' {
                    let digits: String = chars.get(i + 1..i + 3).unwrap_or(&[]).iter().collect();
                    if digits.len() != 2 || !digits.chars().all(|d| d.is_ascii_digit()) {
                        return Err(Error::UnsupportedSmiles(format!("malformed ring label at position {i}")));
                    }
                    (digits.parse::<u32>().unwrap(), i + 3)
                } else {
                    (c.to_digit(10).unwrap(), i + 1)
                };
                let atom = prev.ok_or_else(|| Error::UnsupportedSmiles(format!("ring label without atom at position {i}")))?;
                match rings.remove(&label) {
                    Some((other, open_order)) => {
                        let order = pending.or(open_order).unwrap_or(1);
                        bond(&mut atoms, atom, other, order);
                    }
                    None => {
                        rings.insert(label, (atom, pending));
                    }
                }
                pending = None;
                i = next;
            }
            '[' => {
                let close = chars[i..]
                    .iter()
                    .position(|&ch| ch == ']')
                    .ok_or_else(|| Error::UnsupportedSmiles(format!("unterminated bracket atom at position {i}")))?;
                let body: String = chars[i + 1..i + close].iter().collect();
                let atom = parse_bracket(&body)?;
                let idx = atoms.len();
                atoms.push(atom);
                if let Some(p) = prev {
                    bond(&mut atoms, p, idx, pending.unwrap_or(1));
                }
                prev = Some(idx);
                pending = None;
                i += close + 1;
            }
            _ => {
                let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
                let (symbol, aromatic, width) = if two == "Cl" || two == "Br" {
                    (two, false, 2)
                } else if matches!(c, 'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I') {
                    (c.to_string(), false, 1)
                } else if matches!(c, 'b' | 'c' | 'n' | 'o' | 'p' | 's') {
                    (c.to_ascii_uppercase().to_string(), true, 1)
                } else {
                    return Err(Error::UnsupportedSmiles(format!("`{c}` at position {i}")));
                };
                let idx = atoms.len();
                atoms.push(ParsedAtom { element: symbol, aromatic, explicit_h: None, bond_sum: 0 });
                if let Some(p) = prev {
                    bond(&mut atoms, p, idx, pending.unwrap_or(1));
                }
                prev = Some(idx);
                pending = None;
                i += width;
            }
        }
    }

    if !branch_stack.is_empty() {
        return Err(Error::UnsupportedSmiles("unclosed branch".into()));
    }
    if let Some(label) = rings.keys().min() {
        return Err(Error::UnsupportedSmiles(format!("unclosed ring bond {label}")));
    }
    if atoms.is_empty() {
        return Err(Error::EmptyInput("SMILES string"));
    }
    Ok(SmilesGraph { atoms })
}

fn parse_bracket(body: &str) -> Result<ParsedAtom> {
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1; // isotope
    }
    let start = i;
    let first = *chars
        .get(i)
        .ok_or_else(|| Error::UnsupportedSmiles(format!("empty bracket atom `[{body}]`")))?;
    if first == '*' {
        return Err(Error::UnsupportedSmiles("wildcard atom `*`".into()));
    }
    let (element, aromatic) = if first.is_ascii_lowercase() {
        // Aromatic bracket symbols: two-letter se/as first.
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        if two == "se" || two == "as" {
            i += 2;
            (format!("{}{}", two[..1].to_ascii_uppercase(), &two[1..]), true)
        } else {
            i += 1;
            (first.to_ascii_uppercase().to_string(), true)
        }
    } else if first.is_ascii_uppercase() {
        i += 1;
        // Two-letter element, except when the lowercase letter cannot start a symbol (e.g. `[Hg]` vs `[CH4]`).
        if i < chars.len() && chars[i].is_ascii_lowercase() && first != 'H' {
            i += 1;
        } else if first == 'H' && i < chars.len() && matches!(chars[i], 'e' | 'f' | 'g' | 'o') {
            i += 1;
        }
        (chars[start..i].iter().collect::<String>(), false)
    } else {
        return Err(Error::UnsupportedSmiles(format!("bracket atom `[{body}]`")));
    };
    while i < chars.len() && chars[i] == '@' {
        i += 1;
    }
    while i < chars.len() && chars[i].is_ascii_uppercase() && chars[i] != 'H' {
        i += 1; // extended chirality classes such as @TH1
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
    }
    let mut h = 0;
    if i < chars.len() && chars[i] == 'H' {
        i += 1;
        let digits: String = chars[i..].iter().take_while(|c| c.is_ascii_digit()).collect();
        i += digits.len();
        h = if digits.is_empty() { 1 } else { digits.parse().unwrap() };
    }
    // Charge and atom class carry no hydrogen information.
    while i < chars.len() && matches!(chars[i], '+' | '-' | ':' | '0'..='9') {
        i += 1;
    }
    if i != chars.len() {
        return Err(Error::UnsupportedSmiles(format!("bracket atom `[{body}]`")));
    }
    Ok(ParsedAtom { element, aromatic, explicit_h: Some(h), bond_sum: 0 })
}

/// Heavy (and explicit) atoms plus implicit hydrogens of a SMILES string.
pub fn smiles_atom_count(smiles: &str) -> Result<usize> {
    let graph = parse_smiles(smiles)?;
    let hydrogens: u32 = graph.atoms.iter().map(ParsedAtom::implicit_h).sum();
    Ok(graph.atoms.len() + hydrogens as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ACETAZOLAMIDE: &str = "CC(=O)Nc1nnc(s1)S(=O)(=O)N";

    #[test]
    fn vocabulary_shape() {
        let v = SmilesVocabulary::standard();
        assert_eq!(v.len(), 64);
        assert_eq!(v.index_of(PAD_TOKEN), Some(0));
        assert!(v.index_of("@").is_none());
        for i in 0..v.len() as u32 {
            assert_eq!(v.index_of(v.token(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn encode_pads_and_splits_digraphs() {
        let v = SmilesVocabulary::standard();
        let enc = encode_smiles("CCO", 150).unwrap();
        assert_eq!(enc.len(), 150);
        assert_eq!(&enc[..3], &[v.index_of("C").unwrap(), v.index_of("C").unwrap(), v.index_of("O").unwrap()]);
        assert!(enc[3..].iter().all(|&i| i == 0));

        let cl = v.tokenize("CCl").unwrap();
        assert_eq!(cl, vec![v.index_of("C").unwrap(), v.index_of("Cl").unwrap()]);
    }

    #[test]
    fn unknown_token_names_position() {
        match encode_smiles("C@@H", 150) {
            Err(Error::UnknownToken { token, position }) => {
                assert_eq!(token, "@");
                assert_eq!(position, 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(encode_smiles("", 150), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn truncates_long_strings() {
        let long = "C".repeat(200);
        assert!(encode_smiles(&long, 150).unwrap().iter().all(|&i| i != 0));
    }

    #[test]
    fn atom_counts() {
        assert_eq!(smiles_atom_count(ACETAZOLAMIDE).unwrap(), 19);
        assert_eq!(smiles_atom_count("C").unwrap(), 5);
        assert_eq!(smiles_atom_count("O=C=O").unwrap(), 3);
        assert_eq!(smiles_atom_count("c1ccccc1").unwrap(), 12);
        assert_eq!(smiles_atom_count("c1ccncc1").unwrap(), 11);
        assert_eq!(smiles_atom_count("c1cc[nH]c1").unwrap(), 10);
        assert_eq!(smiles_atom_count("c1ccsc1").unwrap(), 9);
        assert_eq!(smiles_atom_count("CC(=O)[O-]").unwrap(), 7);
        assert_eq!(smiles_atom_count("[NH4+]").unwrap(), 5);
        assert_eq!(smiles_atom_count("C1CC1").unwrap(), 9);
        assert_eq!(smiles_atom_count("C#N").unwrap(), 3);
        assert_eq!(smiles_atom_count("CS(=O)(=O)C").unwrap(), 11);
        assert_eq!(smiles_atom_count("ClC(Cl)Cl").unwrap(), 5);
        assert_eq!(smiles_atom_count("[Na+].[Cl-]").unwrap(), 2);
        assert_eq!(smiles_atom_count("C[C@@H](N)C(=O)O").unwrap(), 13);
        assert_eq!(smiles_atom_count("C%10CC%10").unwrap(), 9);
    }

    #[test]
    fn unsupported_constructs_are_named() {
        for bad in ["C*C", "C(C", "C)C", "C1CC", "[C", "CX"] {
            assert!(matches!(smiles_atom_count(bad), Err(Error::UnsupportedSmiles(_))), "{bad}");
        }
    }
}
