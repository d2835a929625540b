//! Fixed-width PDB reader.
//!
//! Reads `ATOM`/`HETATM` records of the first model into [`Atom`]s and splits
//! them into protein and ligand sets. Waters (`HOH`, `WAT`) are dropped, only
//! the first alternate location of each atom is kept and insertion codes are
//! ignored. Hydrogens are kept when the file has them; none are added.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

const WATER_RESIDUES: [&str; 2] = ["HOH", "WAT"];

const TWO_LETTER_ELEMENTS: [&str; 16] = [
    "CL", "BR", "FE", "ZN", "MG", "MN", "CU", "CO", "NI", "NA", "CA", "SE", "CD", "HG", "LI", "AL",
];

/// Chemical element symbol in canonical capitalisation (`C`, `Cl`, `Zn`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element(String);

impl Element {
    pub fn new(symbol: &str) -> Option<Self> {
        let s = symbol.trim();
        if s.is_empty() || s.len() > 2 || !s.chars().all(|c| c.is_ascii_alphabetic()) {
            return None;
        }
        let mut out = String::with_capacity(2);
        let mut chars = s.chars();
        out.push(chars.next()?.to_ascii_uppercase());
        out.extend(chars.map(|c| c.to_ascii_lowercase()));
        Some(Element(out))
    }

    pub fn symbol(&self) -> &str {
        &self.0
    }

    /// N, O and S: the atom types allowed at either end of a hydrogen bond.
    pub fn is_polar(&self) -> bool {
        matches!(self.0.as_str(), "N" | "O" | "S")
    }

    /// Hydrogen or deuterium.
    pub fn is_hydrogen(&self) -> bool {
        matches!(self.0.as_str(), "H" | "D")
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    Atom,
    Hetatm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub serial: i64,
    pub name: String,
    pub element: Element,
    pub residue_name: String,
    pub residue_seq: i64,
    pub chain_id: char,
    pub position: Vec3,
    pub record_kind: RecordKind,
}

impl Atom {
    pub fn is_polar(&self) -> bool {
        self.element.is_polar()
    }

    pub fn is_hydrogen(&self) -> bool {
        self.element.is_hydrogen()
    }

    /// Formats the atom as a fixed-width record line (coordinates to 3 decimals).
    pub fn to_pdb_line(&self) -> String {
        let record = match self.record_kind {
            RecordKind::Atom => "ATOM  ",
            RecordKind::Hetatm => "HETATM",
        };
        // Names of one-letter elements start in column 14 unless they fill all four columns.
        let name = if self.name.len() < 4 && self.element.symbol().len() == 1 {
            format!(" {:<3}", self.name)
        } else {
            format!("{:<4}", self.name)
        };
        format!(
            "{record}{:>5} {name} {:>3} {}{:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {:>2}",
            self.serial,
            self.residue_name,
            self.chain_id,
            self.residue_seq,
            self.position[0],
            self.position[1],
            self.position[2],
            1.0,
            0.0,
            self.element.symbol().to_ascii_uppercase(),
        )
    }
}

/// A protein-ligand structure split into its two interacting partners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub pdb_id: String,
    pub protein_atoms: Vec<Atom>,
    pub ligand_atoms: Vec<Atom>,
    /// Formula atom count including hydrogens, summed over all ligand copies.
    pub ligand_formula_atom_count: Option<usize>,
}

impl Complex {
    pub fn from_atoms(pdb_id: impl Into<String>, atoms: Vec<Atom>, ligand_residue_name: Option<&str>) -> Result<Self> {
        let (protein_atoms, ligand_atoms) = partition(atoms, ligand_residue_name)?;
        Ok(Complex {
            pdb_id: pdb_id.into(),
            protein_atoms,
            ligand_atoms,
            ligand_formula_atom_count: None,
        })
    }

    /// Number of distinct ligand residues (chain, residue number, residue name).
    pub fn ligand_copies(&self) -> usize {
        self.ligand_atoms
            .iter()
            .map(|a| (a.chain_id, a.residue_seq, a.residue_name.as_str()))
            .collect::<HashSet<_>>()
            .len()
    }

    /// Sets the formula atom count from the ligand SMILES, times the number of copies present.
    pub fn set_formula_from_smiles(&mut self, smiles: &str) -> Result<()> {
        let per_copy = crate::featurize::smiles::smiles_atom_count(smiles)?;
        self.ligand_formula_atom_count = Some(per_copy * self.ligand_copies().max(1));
        Ok(())
    }

    pub fn has_hydrogens(&self) -> bool {
        self.protein_atoms.iter().chain(&self.ligand_atoms).any(Atom::is_hydrogen)
    }

    /// Mean position of all ligand atoms, or `None` without a ligand.
    pub fn ligand_centroid(&self) -> Option<Vec3> {
        if self.ligand_atoms.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for a in &self.ligand_atoms {
            for (ci, pi) in c.iter_mut().zip(a.position) {
                *ci += pi;
            }
        }
        let n = self.ligand_atoms.len() as f64;
        Some(c.map(|v| v / n))
    }

    /// Rigidly translates every atom.
    pub fn translate(&mut self, t: Vec3) {
        for a in self.protein_atoms.iter_mut().chain(self.ligand_atoms.iter_mut()) {
            a.position = crate::geom::add(a.position, t);
        }
    }
}

/// Parses a PDB document and partitions it with every non-water HETATM as ligand.
pub fn parse_pdb(text: &str) -> Result<Complex> {
    let pdb_id = header_id(text).unwrap_or_default();
    let atoms = parse_atoms(text)?;
    Complex::from_atoms(pdb_id, atoms, None)
}

fn header_id(text: &str) -> Option<String> {
    let line = text.lines().find(|l| l.starts_with("HEADER"))?;
    let id = line.get(62..66)?.trim();
    (!id.is_empty()).then(|| id.to_ascii_lowercase())
}

/// Reads the non-water atom records of the first model.
pub fn parse_atoms(text: &str) -> Result<Vec<Atom>> {
    let mut atoms = Vec::new();
    let mut seen_altloc: HashSet<(char, i64, String, String)> = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with("ENDMDL") {
            break;
        }
        let kind = if line.starts_with("ATOM") {
            RecordKind::Atom
        } else if line.starts_with("HETATM") {
            RecordKind::Hetatm
        } else {
            continue;
        };
        let Some(atom) = parse_record(line, line_no, kind)? else {
            continue;
        };
        if WATER_RESIDUES.contains(&atom.residue_name.as_str()) {
            continue;
        }
        let altloc = line.as_bytes().get(16).copied().unwrap_or(b' ');
        if altloc != b' ' {
            let key = (atom.chain_id, atom.residue_seq, atom.residue_name.clone(), atom.name.clone());
            if !seen_altloc.insert(key) {
                continue;
            }
        }
        atoms.push(atom);
    }

    if atoms.is_empty() {
        return Err(Error::EmptyStructure);
    }
    Ok(atoms)
}

fn field(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        return "";
    }
    line.get(start..end).unwrap_or("")
}

fn parse_record(line: &str, line_no: usize, kind: RecordKind) -> Result<Option<Atom>> {
    if !line.is_ascii() {
        return Err(Error::Parse { line: line_no, msg: "non-ASCII characters in atom record".into() });
    }
    if line.len() < 54 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("atom record has {} columns, coordinates need 54", line.len()),
        });
    }
    let perr = |what: &str, raw: &str| Error::Parse { line: line_no, msg: format!("cannot parse {what} from `{raw}`") };

    let serial_raw = field(line, 6, 11).trim();
    let serial = serial_raw.parse::<i64>().map_err(|_| perr("serial", serial_raw))?;
    let raw_name = field(line, 12, 16);
    let name = raw_name.trim().to_string();
    let residue_name = field(line, 17, 20).trim().to_string();
    let chain_id = line.as_bytes()[21] as char;
    let res_raw = field(line, 22, 26).trim();
    let residue_seq = if res_raw.is_empty() { 0 } else { res_raw.parse::<i64>().map_err(|_| perr("residue number", res_raw))? };

    let mut position = [0.0; 3];
    for (axis, (start, end)) in [(30, 38), (38, 46), (46, 54)].into_iter().enumerate() {
        let raw = field(line, start, end).trim();
        let v = raw.parse::<f64>().map_err(|_| perr("coordinate", raw))?;
        if !v.is_finite() {
            return Err(perr("coordinate", raw));
        }
        position[axis] = v;
    }

    let element = match Element::new(field(line, 76, 78)) {
        Some(e) => e,
        None => infer_element(raw_name).ok_or_else(|| perr("element", raw_name))?,
    };

    Ok(Some(Atom { serial, name, element, residue_name, residue_seq, chain_id, position, record_kind: kind }))
}

/// Element from a 4-column atom name when the element columns are blank.
fn infer_element(raw_name: &str) -> Option<Element> {
    let padded = format!("{raw_name:<4}");
    let bytes = padded.as_bytes();
    let first = bytes[0] as char;
    if first == ' ' || first.is_ascii_digit() {
        let letter = padded[1..].trim_start_matches(|c: char| c.is_ascii_digit()).chars().next()?;
        return Element::new(&letter.to_string());
    }
    let trimmed = padded.trim();
    if trimmed.starts_with('H') && trimmed.len() == 4 {
        return Element::new("H");
    }
    let two: String = trimmed.chars().take(2).collect::<String>().to_ascii_uppercase();
    if two.len() == 2 && TWO_LETTER_ELEMENTS.contains(&two.as_str()) {
        return Element::new(&two);
    }
    Element::new(&first.to_string())
}

/// Splits atoms into protein (ATOM) and ligand (non-water HETATM) sets.
///
/// With `ligand_residue_name`, only HETATM records of that residue become
/// ligand and other hetero groups are dropped.
pub fn partition(atoms: Vec<Atom>, ligand_residue_name: Option<&str>) -> Result<(Vec<Atom>, Vec<Atom>)> {
    let mut protein = Vec::new();
    let mut ligand = Vec::new();
    for atom in atoms {
        if WATER_RESIDUES.contains(&atom.residue_name.as_str()) {
            continue;
        }
        match atom.record_kind {
            RecordKind::Atom => protein.push(atom),
            RecordKind::Hetatm => match ligand_residue_name {
                Some(name) if !atom.residue_name.eq_ignore_ascii_case(name) => {}
                _ => ligand.push(atom),
            },
        }
    }
    if let Some(name) = ligand_residue_name {
        if ligand.is_empty() {
            return Err(Error::LigandNotFound(name.to_string()));
        }
    }
    Ok((protein, ligand))
}

/// Ligand atom count used as the density denominator: the formula count when
/// known, else the number of ligand records.
pub fn count_ligand_atoms(complex: &Complex) -> usize {
    complex.ligand_formula_atom_count.unwrap_or(complex.ligand_atoms.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MET_N: &str = "ATOM      1  N   MET A   1      10.000  20.000  30.000  1.00  0.00           N";

    fn het(serial: i64, name: &str, res: &str, seq: i64, elem: &str, pos: Vec3) -> String {
        Atom {
            serial,
            name: name.into(),
            element: Element::new(elem).unwrap(),
            residue_name: res.into(),
            residue_seq: seq,
            chain_id: 'A',
            position: pos,
            record_kind: RecordKind::Hetatm,
        }
        .to_pdb_line()
    }

    #[test]
    fn reads_fixed_width_columns() {
        let atoms = parse_atoms(MET_N).unwrap();
        assert_eq!(atoms.len(), 1);
        let a = &atoms[0];
        assert_eq!(a.serial, 1);
        assert_eq!(a.name, "N");
        assert_eq!(a.element.symbol(), "N");
        assert_eq!(a.residue_name, "MET");
        assert_eq!(a.residue_seq, 1);
        assert_eq!(a.chain_id, 'A');
        assert_eq!(a.position, [10.0, 20.0, 30.0]);
        assert_eq!(a.record_kind, RecordKind::Atom);
    }

    #[test]
    fn water_is_dropped() {
        let text = format!("{MET_N}\n{}", het(2, "O", "HOH", 101, "O", [1.0, 2.0, 3.0]));
        let c = parse_pdb(&text).unwrap();
        assert_eq!(c.protein_atoms.len(), 1);
        assert!(c.ligand_atoms.is_empty());
    }

    #[test]
    fn empty_and_water_only_inputs_fail() {
        assert!(matches!(parse_pdb(""), Err(Error::EmptyStructure)));
        let water = het(1, "O", "HOH", 1, "O", [0.0; 3]);
        assert!(matches!(parse_pdb(&water), Err(Error::EmptyStructure)));
    }

    #[test]
    fn short_line_reports_line_number() {
        let text = format!("{MET_N}\nATOM      2  CA  MET A   1      10.000  20.000");
        match parse_atoms(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_coordinate_is_a_parse_error() {
        let bad = MET_N.replace("20.000", "2x.000");
        assert!(matches!(parse_atoms(&bad), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn element_inferred_from_name() {
        let blank = &MET_N[..76];
        assert_eq!(parse_atoms(blank).unwrap()[0].element.symbol(), "N");
        let fe = "HETATM    3 FE   HEM A 201       1.000   2.000   3.000  1.00  0.00";
        assert_eq!(parse_atoms(fe).unwrap()[0].element.symbol(), "Fe");
        let h = "ATOM      4 HG21 THR A   5       1.000   2.000   3.000  1.00  0.00";
        assert_eq!(parse_atoms(h).unwrap()[0].element.symbol(), "H");
        let ca = "ATOM      5  CA  THR A   5       1.000   2.000   3.000  1.00  0.00";
        assert_eq!(parse_atoms(ca).unwrap()[0].element.symbol(), "C");
    }

    #[test]
    fn first_altloc_and_first_model_only() {
        let a = "ATOM      1  OG1ATHR A   5       1.000   2.000   3.000  0.50  0.00           O";
        let b = "ATOM      2  OG1BTHR A   5       1.500   2.000   3.000  0.50  0.00           O";
        let text = format!("MODEL        1\n{a}\n{b}\nENDMDL\nMODEL        2\n{MET_N}\nENDMDL\n");
        let atoms = parse_atoms(&text).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].position[0], 1.0);
    }

    #[test]
    fn partition_rules() {
        let mut lines = vec![MET_N.to_string()];
        lines.push(MET_N.replace("    1  N  ", "    2  CA ").replace("           N", "           C"));
        lines.push(MET_N.replace("    1  N  ", "    3  C  ").replace("           N", "           C"));
        lines.push(het(4, "C1", "AZM", 301, "C", [1.0, 0.0, 0.0]));
        lines.push(het(5, "N1", "AZM", 301, "N", [2.0, 0.0, 0.0]));
        lines.push(het(6, "S", "SO4", 302, "S", [3.0, 0.0, 0.0]));
        let atoms = parse_atoms(&lines.join("\n")).unwrap();

        let (p, l) = partition(atoms[..5].to_vec(), None).unwrap();
        assert_eq!((p.len(), l.len()), (3, 2));

        let (_, l) = partition(atoms.clone(), Some("AZM")).unwrap();
        assert_eq!(l.len(), 2);
        assert!(l.iter().all(|a| a.residue_name == "AZM"));

        assert!(matches!(partition(atoms, Some("XYZ")), Err(Error::LigandNotFound(n)) if n == "XYZ"));
    }

    #[test]
    fn ligand_counts() {
        let mut text = String::new();
        for i in 0..13 {
            text.push_str(&het(i + 1, "C", "LIG", 1, "C", [i as f64, 0.0, 0.0]));
            text.push('\n');
        }
        let mut c = parse_pdb(&text).unwrap();
        assert_eq!(count_ligand_atoms(&c), 13);

        c.set_formula_from_smiles("CC(=O)Nc1nnc(s1)S(=O)(=O)N").unwrap();
        assert_eq!(count_ligand_atoms(&c), 19);
    }

    #[test]
    fn three_ligand_copies_scale_formula_count() {
        let mut text = String::new();
        for copy in 0..3 {
            for i in 0..13 {
                text.push_str(&het(copy * 13 + i + 1, "C", "AZM", 300 + copy, "C", [i as f64, copy as f64, 0.0]));
                text.push('\n');
            }
        }
        let mut c = parse_pdb(&text).unwrap();
        assert_eq!(c.ligand_copies(), 3);
        c.set_formula_from_smiles("CC(=O)Nc1nnc(s1)S(=O)(=O)N").unwrap();
        assert_eq!(count_ligand_atoms(&c), 57);
    }

    #[test]
    fn written_lines_round_trip() {
        let atom = parse_atoms(MET_N).unwrap().remove(0);
        let line = atom.to_pdb_line();
        assert_eq!(parse_atoms(&line).unwrap()[0], atom);
        assert_eq!(&line[..54], &MET_N[..54]);
    }
}
