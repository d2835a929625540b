//! Fixed-shape encodings of protein sequences, pocket sequences and SMILES.

pub mod properties;
pub mod smiles;

pub use properties::{ResiduePropertyTable, DESCRIPTOR_DIM, RESIDUES};
pub use smiles::{encode_smiles, smiles_atom_count, SmilesVocabulary, PAD_INDEX};

use crate::error::{Error, Result};
use crate::hbond::{HBondFeatureMatrix, FEATURE_DIM};

pub const PROTEIN_LEN: usize = 1000;
pub const POCKET_LEN: usize = 63;
pub const SMILES_LEN: usize = 150;
pub const HBOND_N: usize = 20;

/// Row-major `max_len × 40` descriptor matrix; rows past the sequence (or
/// for non-standard residues) are zero.
pub fn encode_residues(sequence: &str, max_len: usize) -> Result<Vec<f32>> {
    if sequence.is_empty() {
        return Err(Error::EmptyInput("residue sequence"));
    }
    let table = ResiduePropertyTable::standard();
    let mut out = vec![0.0f32; max_len * DESCRIPTOR_DIM];
    for (i, c) in sequence.chars().take(max_len).enumerate() {
        if let Some(row) = table.get(c) {
            out[i * DESCRIPTOR_DIM..(i + 1) * DESCRIPTOR_DIM].copy_from_slice(row);
        }
    }
    Ok(out)
}

pub fn encode_protein(sequence: &str, max_len: usize) -> Result<Vec<f32>> {
    encode_residues(sequence, max_len)
}

pub fn encode_pocket(sequence: &str, max_len: usize) -> Result<Vec<f32>> {
    encode_residues(sequence, max_len)
}

/// The four model inputs for one complex.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub id: String,
    /// `protein_len × 40`, row-major.
    pub protein: Vec<f32>,
    /// `pocket_len × 40`, row-major.
    pub pocket: Vec<f32>,
    /// `smiles_len` token indices.
    pub smiles: Vec<u32>,
    /// `hbond_n × 9`, row-major.
    pub hbond: Vec<f32>,
    pub affinity: Option<f32>,
}

impl EncodedSample {
    /// Encodes the sequences at the default lengths.
    pub fn encode(
        id: impl Into<String>,
        protein_seq: &str,
        pocket_seq: &str,
        smiles: &str,
        hbond: &HBondFeatureMatrix,
        affinity: Option<f32>,
    ) -> Result<Self> {
        let sample = EncodedSample {
            id: id.into(),
            protein: encode_protein(protein_seq, PROTEIN_LEN)?,
            pocket: encode_pocket(pocket_seq, POCKET_LEN)?,
            smiles: encode_smiles(smiles, SMILES_LEN)?,
            hbond: hbond.to_f32(),
            affinity,
        };
        if let Some(a) = affinity {
            if !a.is_finite() {
                return Err(Error::data(format!("{}: non-finite affinity", sample.id)));
            }
        }
        Ok(sample)
    }

    /// Checks the block sizes against the given lengths.
    pub fn check_shapes(&self, protein_len: usize, pocket_len: usize, smiles_len: usize, hbond_n: usize) -> Result<()> {
        let expect = [
            ("protein", self.protein.len(), protein_len * DESCRIPTOR_DIM),
            ("pocket", self.pocket.len(), pocket_len * DESCRIPTOR_DIM),
            ("smiles", self.smiles.len(), smiles_len),
            ("hbond", self.hbond.len(), hbond_n * FEATURE_DIM),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::shape(format!("{}: {name} block has {got} values, expected {want}", self.id)));
            }
        }
        Ok(())
    }
}
