//! Seeded synthetic data: encoded samples with a learnable label, and random
//! protein-ligand atom clouds for exercising the bond detector.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::featurize::{encode_residues, encode_smiles, EncodedSample, RESIDUES};
use crate::geom::Vec3;
use crate::hbond::FEATURE_DIM;
use crate::model::HbgsaConfig;
use crate::pdb::{Atom, Complex, Element, RecordKind};

const FRAGMENTS: [&str; 10] =
    ["CC(=O)N", "c1ccccc1", "O", "N", "C(F)(F)F", "S(=O)(=O)N", "Cl", "CCO", "c1ccncc1", "C(=O)O"];

pub fn random_sequence(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| *RESIDUES.choose(rng).unwrap()).collect()
}

pub fn random_smiles(rng: &mut impl Rng, fragments: usize) -> String {
    (0..fragments.max(1)).map(|_| *FRAGMENTS.choose(rng).unwrap()).collect()
}

fn hydrophobic_fraction(seq: &str) -> f64 {
    seq.chars().filter(|c| "AILMFVW".contains(*c)).count() as f64 / seq.len() as f64
}

/// `n` encoded samples sized for `config`.
///
/// The label is a fixed linear function of simple input statistics
/// (hydrophobic fraction, ring count, bond count), so the task is learnable.
pub fn samples(config: &HbgsaConfig, n: usize, seed: u64) -> Vec<EncodedSample> {
    samples_capped(config, n, seed, 120)
}

/// Like [`samples`], with protein sequences of at most `max_len` residues.
pub fn samples_capped(config: &HbgsaConfig, n: usize, seed: u64, max_len: usize) -> Vec<EncodedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let plen = rng.gen_range(config.protein_len.min(8).min(max_len).max(1)..=config.protein_len.min(max_len).max(1));
            let protein = random_sequence(&mut rng, plen);
            let klen = rng.gen_range(1..=config.pocket_len.min(max_len).max(1));
            let pocket = random_sequence(&mut rng, klen);
            let n_frag = rng.gen_range(1..=4);
            let smiles = random_smiles(&mut rng, n_frag);
            let n_bonds = rng.gen_range(0..=config.hbond_n);
            let mut hbond = vec![0.0f32; config.hbond_n * FEATURE_DIM];
            for row in hbond.chunks_mut(FEATURE_DIM).take(n_bonds) {
                let p: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-6.0..6.0));
                let dir: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let norm = dir.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-3);
                let d = rng.gen_range(2.5..3.5);
                let l: [f32; 3] = std::array::from_fn(|k| p[k] + dir[k] / norm * d);
                row[..3].copy_from_slice(&p);
                row[3..6].copy_from_slice(&l);
                for k in 0..3 {
                    row[6 + k] = (p[k] + l[k]) / 2.0;
                }
            }
            let rings = smiles.matches('1').count() as f64 / 2.0;
            let label = 4.0 + 3.0 * hydrophobic_fraction(&protein) + 0.8 * rings + 0.15 * n_bonds as f64;
            EncodedSample {
                id: format!("syn{i:04}"),
                protein: encode_residues(&protein, config.protein_len).expect("non-empty"),
                pocket: encode_residues(&pocket, config.pocket_len).expect("non-empty"),
                smiles: encode_smiles(&smiles, config.smiles_len).expect("vocabulary tokens"),
                hbond,
                affinity: Some(label as f32),
            }
        })
        .collect()
}

fn atom(serial: i64, elem: &str, kind: RecordKind, residue: (&str, i64), position: Vec3) -> Atom {
    Atom {
        serial,
        name: elem.to_string(),
        element: Element::new(elem).expect("valid symbol"),
        residue_name: residue.0.to_string(),
        residue_seq: residue.1,
        chain_id: 'A',
        position,
        record_kind: kind,
    }
}

/// Random protein and ligand atoms in a small box, coordinates on the
/// 0.001 Å grid. With `hydrogens`, about a third of the polar atoms carry an
/// H at ~1 Å in a random direction.
pub fn random_complex(rng: &mut impl Rng, n_atoms: usize, hydrogens: bool) -> Complex {
    const ELEMENTS: [&str; 6] = ["N", "O", "S", "C", "C", "N"];
    let grid = |v: f64| (v * 1000.0).round() / 1000.0;
    let mut atoms = Vec::new();
    let mut serial = 1;
    let n_lig = (n_atoms / 3).max(1);
    while atoms.len() < n_atoms {
        let ligand = atoms.len() >= n_atoms - n_lig;
        let kind = if ligand { RecordKind::Hetatm } else { RecordKind::Atom };
        let residue = if ligand { ("LIG", 900) } else { ("ALA", 1 + atoms.len() as i64 / 4) };
        let pos: Vec3 = std::array::from_fn(|_| grid(rng.gen_range(0.0..7.0)));
        let elem = ELEMENTS[rng.gen_range(0..ELEMENTS.len())];
        atoms.push(atom(serial, elem, kind, residue, pos));
        serial += 1;
        if hydrogens && elem != "C" && rng.gen_bool(0.35) && atoms.len() < n_atoms {
            let dir: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let norm = crate::geom::norm(dir).max(1e-3);
            let h: Vec3 = std::array::from_fn(|k| grid(pos[k] + dir[k] / norm));
            atoms.push(atom(serial, "H", kind, residue, h));
            serial += 1;
        }
    }
    Complex::from_atoms("rand", atoms, None).expect("partition without a ligand name")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_have_config_shapes_and_are_seeded() {
        let c = HbgsaConfig::tiny();
        let a = samples(&c, 4, 1);
        for s in &a {
            s.check_shapes(c.protein_len, c.pocket_len, c.smiles_len, c.hbond_n).unwrap();
        }
        assert_eq!(a, samples(&c, 4, 1));
        assert_ne!(a, samples(&c, 4, 2));
    }

    #[test]
    fn random_complex_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = random_complex(&mut rng, 30, true);
        assert_eq!(c.protein_atoms.len() + c.ligand_atoms.len(), 30);
        assert!(c.ligand_atoms.iter().all(|a| a.record_kind == RecordKind::Hetatm));
    }
}
