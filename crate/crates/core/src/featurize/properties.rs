//! Frozen 40-dimensional residue descriptor table.
//!
//! Layout per residue:
//! - dims 0..8: eight physicochemical scales, each z-scored over the 20
//!   standard residues (population std): Kyte-Doolittle hydrophobicity,
//!   net charge at pH 7, Grantham polarity, Zamyatnin volume, isoelectric
//!   point, and Chou-Fasman helix / sheet / turn propensities;
//! - dims 8..20: one-hot chemical class (12 classes, see [`CLASS_NAMES`]);
//! - dims 20..40: one-hot residue identity in [`RESIDUES`] order.
//!
//! Unknown residues (`X` and anything non-standard) map to the zero vector.

use std::sync::OnceLock;

use sha2::{Digest, Sha256};

pub const DESCRIPTOR_DIM: usize = 40;
pub const TABLE_VERSION: u32 = 1;

pub const RESIDUES: [char; 20] = [
    'A', 'R', 'N', 'D', 'C', 'Q', 'E', 'G', 'H', 'I', 'L', 'K', 'M', 'F', 'P', 'S', 'T', 'W', 'Y', 'V',
];

pub const CLASS_NAMES: [&str; 12] = [
    "glycine",
    "small-aliphatic",
    "branched-aliphatic",
    "sulfur",
    "hydroxyl",
    "imino",
    "aromatic",
    "aromatic-hydroxyl",
    "acidic",
    "amide",
    "basic",
    "imidazole",
];

// Columns follow RESIDUES order.
const HYDROPHOBICITY: [f64; 20] = [
    1.8, -4.5, -3.5, -3.5, 2.5, -3.5, -3.5, -0.4, -3.2, 4.5, 3.8, -3.9, 1.9, 2.8, -1.6, -0.8, -0.7, -0.9, -1.3, 4.2,
];
const CHARGE_PH7: [f64; 20] = [
    0.0, 1.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];
const POLARITY: [f64; 20] = [
    8.1, 10.5, 11.6, 13.0, 5.5, 10.5, 12.3, 9.0, 10.4, 5.2, 4.9, 11.3, 5.7, 5.2, 8.0, 9.2, 8.6, 5.4, 6.2, 5.9,
];
const VOLUME: [f64; 20] = [
    88.6, 173.4, 114.1, 111.1, 108.5, 143.8, 138.4, 60.1, 153.2, 166.7, 166.7, 168.6, 162.9, 189.9, 112.7, 89.0,
    116.1, 227.8, 193.6, 140.0,
];
const ISOELECTRIC: [f64; 20] = [
    6.00, 10.76, 5.41, 2.77, 5.07, 5.65, 3.22, 5.97, 7.59, 6.02, 5.98, 9.74, 5.74, 5.48, 6.30, 5.68, 5.60, 5.89,
    5.66, 5.96,
];
const HELIX: [f64; 20] = [
    1.42, 0.98, 0.67, 1.01, 0.70, 1.11, 1.51, 0.57, 1.00, 1.08, 1.21, 1.16, 1.45, 1.13, 0.57, 0.77, 0.83, 1.08,
    0.69, 1.06,
];
const SHEET: [f64; 20] = [
    0.83, 0.93, 0.89, 0.54, 1.19, 1.10, 0.37, 0.75, 0.87, 1.60, 1.30, 0.74, 1.05, 1.38, 0.55, 0.75, 1.19, 1.37,
    1.47, 1.70,
];
const TURN: [f64; 20] = [
    0.66, 0.95, 1.56, 1.46, 1.19, 0.98, 0.74, 1.56, 0.95, 0.47, 0.59, 1.01, 0.60, 0.60, 1.52, 1.43, 0.96, 0.96,
    1.14, 0.50,
];
const CLASS_OF: [usize; 20] = [1, 10, 9, 8, 3, 9, 8, 0, 11, 2, 2, 10, 3, 6, 5, 4, 4, 6, 7, 2];

/// Residue letter → 40-dim descriptor lookup.
#[derive(Debug, Clone)]
pub struct ResiduePropertyTable {
    rows: [[f32; DESCRIPTOR_DIM]; 20],
    checksum: [u8; 32],
}

impl ResiduePropertyTable {
    /// The frozen default table (built once, shared).
    pub fn standard() -> &'static ResiduePropertyTable {
        static TABLE: OnceLock<ResiduePropertyTable> = OnceLock::new();
        TABLE.get_or_init(Self::build)
    }

    fn build() -> Self {
        let scales = [&HYDROPHOBICITY, &CHARGE_PH7, &POLARITY, &VOLUME, &ISOELECTRIC, &HELIX, &SHEET, &TURN];
        let mut rows = [[0.0f32; DESCRIPTOR_DIM]; 20];
        for (s, scale) in scales.iter().enumerate() {
            let mean = scale.iter().sum::<f64>() / 20.0;
            let var = scale.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
            let std = var.sqrt();
            for (r, v) in scale.iter().enumerate() {
                rows[r][s] = ((v - mean) / std) as f32;
            }
        }
        for r in 0..20 {
            rows[r][8 + CLASS_OF[r]] = 1.0;
            rows[r][20 + r] = 1.0;
        }
        let mut hasher = Sha256::new();
        hasher.update(TABLE_VERSION.to_le_bytes());
        for row in &rows {
            for v in row {
                hasher.update(v.to_le_bytes());
            }
        }
        ResiduePropertyTable { rows, checksum: hasher.finalize().into() }
    }

    /// Descriptor for a one-letter code; `None` for unknown letters (the zero row).
    pub fn get(&self, residue: char) -> Option<&[f32; DESCRIPTOR_DIM]> {
        let upper = residue.to_ascii_uppercase();
        RESIDUES.iter().position(|&c| c == upper).map(|i| &self.rows[i])
    }

    pub fn checksum(&self) -> [u8; 32] {
        self.checksum
    }

    pub fn checksum_hex(&self) -> String {
        self.checksum.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_standard_residue_is_finite_and_distinct() {
        let t = ResiduePropertyTable::standard();
        for (i, &c) in RESIDUES.iter().enumerate() {
            let row = t.get(c).unwrap();
            assert!(row.iter().all(|v| v.is_finite()));
            assert_eq!(row[8..20].iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row[20 + i], 1.0);
        }
        assert!(t.get('X').is_none());
        assert!(t.get('Z').is_none());
        assert_eq!(t.get('a'), t.get('A'));
    }

    #[test]
    fn scales_are_standardised() {
        let t = ResiduePropertyTable::standard();
        for s in 0..8 {
            let col: Vec<f64> = RESIDUES.iter().map(|&c| t.get(c).unwrap()[s] as f64).collect();
            let mean = col.iter().sum::<f64>() / 20.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
            assert!(mean.abs() < 1e-6, "scale {s} mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "scale {s} var {var}");
        }
    }

    #[test]
    fn checksum_is_stable() {
        let a = ResiduePropertyTable::build();
        let b = ResiduePropertyTable::build();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.checksum_hex().len(), 64);
    }
}
