//! Geometric protein-ligand hydrogen-bond detection, top-N selection, the
//! padded `N × 9` coordinate matrix, and bond density statistics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{angle_deg, distance, Vec3};
use crate::pdb::{Atom, Complex};

/// Per-row width: protein end, ligand end, midpoint.
pub const FEATURE_DIM: usize = 9;
pub const DEFAULT_TOP_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBondCriteria {
    pub max_distance: f64,
    pub min_angle_deg: f64,
    pub polar_elements: Vec<String>,
    /// A hydrogen within this distance of a heavy atom counts as bonded to it.
    pub covalent_h_distance: f64,
}

impl Default for HBondCriteria {
    fn default() -> Self {
        HBondCriteria {
            max_distance: 3.5,
            min_angle_deg: 120.0,
            polar_elements: vec!["N".into(), "O".into(), "S".into()],
            covalent_h_distance: 1.2,
        }
    }
}

impl HBondCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_distance > 0.0) {
            return Err(Error::config(format!("max_distance must be positive, got {}", self.max_distance)));
        }
        if !(0.0..=180.0).contains(&self.min_angle_deg) {
            return Err(Error::config(format!("min_angle_deg must lie in [0, 180], got {}", self.min_angle_deg)));
        }
        Ok(())
    }

    fn is_polar(&self, atom: &Atom) -> bool {
        !atom.is_hydrogen() && self.polar_elements.iter().any(|e| e.eq_ignore_ascii_case(atom.element.symbol()))
    }

    /// Stable text form, used in cache schema hashes.
    pub fn fingerprint(&self) -> String {
        format!(
            "d={:?};a={:?};polar={};h={:?}",
            self.max_distance,
            self.min_angle_deg,
            self.polar_elements.join(","),
            self.covalent_h_distance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydrogenBond {
    pub protein_end: Vec3,
    pub ligand_end: Vec3,
    pub midpoint: Vec3,
    pub distance: f64,
    /// Best D-H...A angle; absent when neither end carries a hydrogen.
    pub angle_deg: Option<f64>,
    pub protein_atom_serial: i64,
    pub ligand_atom_serial: i64,
}

impl HydrogenBond {
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.protein_atom_serial.cmp(&other.protein_atom_serial))
            .then(self.ligand_atom_serial.cmp(&other.ligand_atom_serial))
    }
}

pub fn midpoint(p: Vec3, l: Vec3) -> Vec3 {
    [(p[0] + l[0]) / 2.0, (p[1] + l[1]) / 2.0, (p[2] + l[2]) / 2.0]
}

fn bonded_hydrogens<'a>(heavy: &Atom, pool: &'a [Atom], cutoff: f64) -> Vec<&'a Atom> {
    pool.iter().filter(|h| h.is_hydrogen() && distance(h.position, heavy.position) <= cutoff).collect()
}

/// All protein-ligand polar pairs within `max_distance`, filtered by the
/// D-H...A angle wherever a hydrogen is attached to either end, sorted by
/// (distance, protein serial, ligand serial).
pub fn detect_hbonds(complex: &Complex, criteria: &HBondCriteria) -> Vec<HydrogenBond> {
    let protein: Vec<&Atom> = complex.protein_atoms.iter().filter(|a| criteria.is_polar(a)).collect();
    let ligand: Vec<&Atom> = complex.ligand_atoms.iter().filter(|a| criteria.is_polar(a)).collect();
    let with_h = complex.has_hydrogens();
    let protein_h: Vec<Vec<&Atom>> = protein
        .iter()
        .map(|a| if with_h { bonded_hydrogens(a, &complex.protein_atoms, criteria.covalent_h_distance) } else { vec![] })
        .collect();
    let ligand_h: Vec<Vec<&Atom>> = ligand
        .iter()
        .map(|a| if with_h { bonded_hydrogens(a, &complex.ligand_atoms, criteria.covalent_h_distance) } else { vec![] })
        .collect();

    let mut bonds = Vec::new();
    for (pi, p) in protein.iter().enumerate() {
        for (li, l) in ligand.iter().enumerate() {
            let d = distance(p.position, l.position);
            if d > criteria.max_distance {
                continue;
            }
            // angle at the hydrogen, between donor and acceptor
            let angles = protein_h[pi]
                .iter()
                .map(|h| angle_deg(p.position, h.position, l.position))
                .chain(ligand_h[li].iter().map(|h| angle_deg(l.position, h.position, p.position)));
            let best = angles.fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))));
            if let Some(a) = best {
                if a < criteria.min_angle_deg {
                    continue;
                }
            }
            bonds.push(HydrogenBond {
                protein_end: p.position,
                ligand_end: l.position,
                midpoint: midpoint(p.position, l.position),
                distance: d,
                angle_deg: best,
                protein_atom_serial: p.serial,
                ligand_atom_serial: l.serial,
            });
        }
    }
    bonds.sort_by(HydrogenBond::canonical_cmp);
    bonds
}

/// Padded hydrogen-bond coordinate matrix; rows past `n_real` are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBondFeatureMatrix {
    pub rows: Vec<[f64; FEATURE_DIM]>,
    pub n_real: usize,
}

impl HBondFeatureMatrix {
    pub fn zeros(n: usize) -> Self {
        HBondFeatureMatrix { rows: vec![[0.0; FEATURE_DIM]; n], n_real: 0 }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.rows.iter().flatten().map(|&v| v as f32).collect()
    }

    pub fn midpoints(&self) -> Vec<Vec3> {
        self.rows.iter().map(|r| [r[6], r[7], r[8]]).collect()
    }
}

/// The `n` shortest bonds (canonical order), zero-padded to `n` rows.
pub fn select_top_n(bonds: &[HydrogenBond], n: usize) -> HBondFeatureMatrix {
    let mut sorted: Vec<&HydrogenBond> = bonds.iter().collect();
    sorted.sort_by(|a, b| a.canonical_cmp(b));
    let mut m = HBondFeatureMatrix::zeros(n);
    for (row, b) in m.rows.iter_mut().zip(sorted.iter()) {
        row[..3].copy_from_slice(&b.protein_end);
        row[3..6].copy_from_slice(&b.ligand_end);
        row[6..].copy_from_slice(&b.midpoint);
    }
    m.n_real = bonds.len().min(n);
    m
}

/// Coordinates on the 0.001 Å grid PDB files are written on.
fn milli(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

/// Expresses every real row relative to the ligand-atom centroid.
///
/// Coordinates are snapped to the 0.001 Å grid and the centroid subtracted
/// in integer arithmetic, so the result is bit-identical under any rigid
/// translation on that grid. Midpoints are recomputed from the centred ends.
pub fn center_features(matrix: &HBondFeatureMatrix, complex: &Complex) -> HBondFeatureMatrix {
    let n = complex.ligand_atoms.len() as i64;
    if n == 0 || matrix.n_real == 0 {
        return matrix.clone();
    }
    let mut sum = [0i64; 3];
    for a in &complex.ligand_atoms {
        for k in 0..3 {
            sum[k] += milli(a.position[k]);
        }
    }
    let denom = (1000 * n) as f64;
    let center = |v: f64, k: usize| (n * milli(v) - sum[k]) as f64 / denom;
    let mut out = matrix.clone();
    for row in out.rows.iter_mut().take(matrix.n_real) {
        for k in 0..3 {
            let p = center(row[k], k);
            let l = center(row[3 + k], k);
            row[k] = p;
            row[3 + k] = l;
            row[6 + k] = (p + l) / 2.0;
        }
    }
    out
}

/// Detection, top-`n` selection and (optionally) centring in one call.
pub fn extract_features(complex: &Complex, criteria: &HBondCriteria, n: usize, center: bool) -> HBondFeatureMatrix {
    let bonds = detect_hbonds(complex, criteria);
    let m = select_top_n(&bonds, n);
    if center {
        center_features(&m, complex)
    } else {
        m
    }
}

/// Bonds per ligand atom.
pub fn hbond_density(n_hbond: usize, n_ligand: usize) -> Result<f64> {
    if n_ligand == 0 {
        return Err(Error::DivisionByZero("ligand atom count is zero"));
    }
    Ok(n_hbond as f64 / n_ligand as f64)
}

/// Per-complex density summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub pdb_id: String,
    pub molecules: usize,
    pub n_hbond: usize,
    pub n_ligand: usize,
    pub density: f64,
}

pub fn density_record(complex: &Complex, criteria: &HBondCriteria) -> Result<DensityRecord> {
    let n_hbond = detect_hbonds(complex, criteria).len();
    let n_ligand = crate::pdb::count_ligand_atoms(complex);
    Ok(DensityRecord {
        pdb_id: complex.pdb_id.clone(),
        molecules: complex.ligand_copies(),
        n_hbond,
        n_ligand,
        density: hbond_density(n_hbond, n_ligand)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBondCountStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Nearest-rank 95th percentile.
    pub p95: usize,
    /// Fraction of counts ≤ 20.
    pub coverage_at_20: f64,
}

pub fn hbond_count_stats(counts: &[usize]) -> Result<HBondCountStats> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("hydrogen-bond counts"));
    }
    let n = counts.len();
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mean = sorted.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let var = sorted.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Ok(HBondCountStats {
        n,
        mean,
        median,
        std: var.sqrt(),
        p95: sorted[rank - 1],
        coverage_at_20: sorted.iter().filter(|&&c| c <= 20).count() as f64 / n as f64,
    })
}

/// `(count, frequency)` rows for a bond-count histogram.
pub fn count_histogram(counts: &[usize]) -> Vec<(usize, usize)> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut freq = vec![0usize; max + 1];
    for &c in counts {
        freq[c] += 1;
    }
    freq.into_iter().enumerate().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdb::{Element, RecordKind};

    fn atom(serial: i64, elem: &str, kind: RecordKind, pos: Vec3) -> Atom {
        Atom {
            serial,
            name: elem.to_string(),
            element: Element::new(elem).unwrap(),
            residue_name: if kind == RecordKind::Atom { "SER".into() } else { "LIG".into() },
            residue_seq: 1,
            chain_id: 'A',
            position: pos,
            record_kind: kind,
        }
    }

    fn complex(protein: Vec<Atom>, ligand: Vec<Atom>) -> Complex {
        Complex { pdb_id: "test".into(), protein_atoms: protein, ligand_atoms: ligand, ligand_formula_atom_count: None }
    }

    #[test]
    fn distance_threshold() {
        let c = complex(vec![atom(1, "N", RecordKind::Atom, [0.0; 3])], vec![atom(2, "O", RecordKind::Hetatm, [0.0, 0.0, 3.4])]);
        let b = detect_hbonds(&c, &HBondCriteria::default());
        assert_eq!(b.len(), 1);
        assert!((b[0].distance - 3.4).abs() < 1e-12);
        assert_eq!(b[0].angle_deg, None);
        let c = complex(vec![atom(1, "N", RecordKind::Atom, [0.0; 3])], vec![atom(2, "O", RecordKind::Hetatm, [0.0, 0.0, 3.6])]);
        assert!(detect_hbonds(&c, &HBondCriteria::default()).is_empty());
    }

    #[test]
    fn angle_filter_when_hydrogen_present() {
        let lig = vec![atom(3, "O", RecordKind::Hetatm, [0.0, 0.0, 3.4])];
        let bent = complex(
            vec![atom(1, "N", RecordKind::Atom, [0.0; 3]), atom(2, "H", RecordKind::Atom, [0.0, 0.95, 0.3])],
            lig.clone(),
        );
        // oracle: angle at H between H->N and H->O
        let h = [0.0, 0.95, 0.3];
        let u = [0.0 - h[0], 0.0 - h[1], 0.0 - h[2]];
        let v = [0.0 - h[0], 0.0 - h[1], 3.4 - h[2]];
        let dot: f64 = (0..3).map(|k| u[k] * v[k]).sum();
        let nu = (u.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let nv = (v.iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert!((dot / (nu * nv)).acos().to_degrees() < 120.0);
        assert!(detect_hbonds(&bent, &HBondCriteria::default()).is_empty());

        let straight = complex(
            vec![atom(1, "N", RecordKind::Atom, [0.0; 3]), atom(2, "H", RecordKind::Atom, [0.0, 0.0, 1.0])],
            lig,
        );
        let b = detect_hbonds(&straight, &HBondCriteria::default());
        assert_eq!(b.len(), 1);
        assert!((b[0].angle_deg.unwrap() - 180.0).abs() < 1e-9);
    }

    fn bond(d: f64, ps: i64) -> HydrogenBond {
        let p = [ps as f64, 0.0, 0.0];
        let l = [ps as f64, 0.0, d];
        HydrogenBond {
            protein_end: p,
            ligand_end: l,
            midpoint: midpoint(p, l),
            distance: d,
            angle_deg: None,
            protein_atom_serial: ps,
            ligand_atom_serial: 100 + ps,
        }
    }

    #[test]
    fn top_n_sorts_and_pads() {
        let m = select_top_n(&[bond(3.4, 1), bond(2.9, 2), bond(3.1, 3)], 20);
        assert_eq!(m.n_real, 3);
        let ds: Vec<f64> = m.rows[..3].iter().map(|r| r[5] - r[2]).collect();
        assert_eq!(ds, [2.9, 3.1, 3.4]);
        assert!(m.rows[3..].iter().all(|r| r.iter().all(|&v| v == 0.0)));
        assert_eq!(m.flatten().len(), 180);

        let empty = select_top_n(&[], 20);
        assert_eq!(empty, HBondFeatureMatrix::zeros(20));
    }

    #[test]
    fn centering() {
        let p = [2.0, 0.0, 0.0];
        let l = [4.0, 0.0, 0.0];
        let b = HydrogenBond {
            protein_end: p,
            ligand_end: l,
            midpoint: midpoint(p, l),
            distance: 2.0,
            angle_deg: None,
            protein_atom_serial: 1,
            ligand_atom_serial: 2,
        };
        let c = complex(
            vec![atom(1, "N", RecordKind::Atom, p)],
            vec![atom(2, "O", RecordKind::Hetatm, l), atom(3, "C", RecordKind::Hetatm, [2.0, 0.0, 0.0])],
        );
        let m = center_features(&select_top_n(&[b], 20), &c);
        assert_eq!(&m.rows[0], &[-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(center_features(&HBondFeatureMatrix::zeros(20), &c), HBondFeatureMatrix::zeros(20));
    }

    #[test]
    fn density_values() {
        assert_eq!(format!("{:.3}", hbond_density(5, 19).unwrap()), "0.263");
        assert_eq!(format!("{:.3}", hbond_density(9, 57).unwrap()), "0.158");
        assert_eq!(hbond_density(0, 19).unwrap(), 0.0);
        assert!(matches!(hbond_density(1, 0), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn count_stats() {
        let s = hbond_count_stats(&[7, 7, 7]).unwrap();
        assert_eq!((s.mean, s.median, s.std, s.p95, s.coverage_at_20), (7.0, 7.0, 0.0, 7, 1.0));
        let s = hbond_count_stats(&(1..=40).collect::<Vec<_>>()).unwrap();
        assert_eq!(s.coverage_at_20, 0.5);
        assert_eq!(s.p95, 38);
        assert!(hbond_count_stats(&[]).is_err());
        assert_eq!(count_histogram(&[0, 2, 2]), [(0, 1), (1, 0), (2, 2)]);
    }
}
