//! Ligand atom counts from SMILES and hydrogen-bond density for one- and
//! three-copy acetazolamide complexes.
//!
//! `cargo run --example hbond_density`

use std::path::Path;

use hbgsa::featurize::smiles_atom_count;
use hbgsa::hbond::{density_record, hbond_density, HBondCriteria};
use hbgsa::pdb::parse_pdb;

const ACETAZOLAMIDE: &str = "CC(=O)Nc1nnc(s1)S(=O)(=O)N";

fn main() -> hbgsa::Result<()> {
    println!("acetazolamide formula atoms (with H): {}", smiles_atom_count(ACETAZOLAMIDE)?);
    println!("5 bonds / 19 atoms = {:.3}", hbond_density(5, 19)?);

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    println!("{:<12} {:>9} {:>7} {:>8} {:>8}", "structure", "molecules", "n_hbond", "n_ligand", "density");
    for name in ["azm_single", "azm_triple"] {
        let mut complex = parse_pdb(&std::fs::read_to_string(dir.join(format!("{name}.pdb")))?)?;
        complex.pdb_id = name.into();
        complex.set_formula_from_smiles(ACETAZOLAMIDE)?;
        let r = density_record(&complex, &HBondCriteria::default())?;
        println!("{:<12} {:>9} {:>7} {:>8} {:>7.1}%", r.pdb_id, r.molecules, r.n_hbond, r.n_ligand, 100.0 * r.density);
    }
    Ok(())
}
