//! Parse a structure, detect protein-ligand hydrogen bonds and build the
//! ranked, ligand-centred feature matrix.
//!
//! `cargo run --example hbond_extract [structure.pdb] [LIGAND_RESNAME]`

use std::path::PathBuf;

use hbgsa::hbond::{detect_hbonds, extract_features, HBondCriteria, DEFAULT_TOP_N};
use hbgsa::pdb::{parse_atoms, Complex};

fn main() -> hbgsa::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synth_c.pdb"));
    let ligand = args.next();

    let atoms = parse_atoms(&std::fs::read_to_string(&path)?)?;
    let complex = Complex::from_atoms("example", atoms, ligand.as_deref())?;
    println!(
        "{}: {} protein atoms, {} ligand atoms ({} copies)",
        path.display(),
        complex.protein_atoms.len(),
        complex.ligand_atoms.len(),
        complex.ligand_copies()
    );

    let criteria = HBondCriteria::default();
    let bonds = detect_hbonds(&complex, &criteria);
    println!("{} bonds (d <= {} A, angle >= {} deg when H present)", bonds.len(), criteria.max_distance, criteria.min_angle_deg);
    for b in bonds.iter().take(5) {
        println!("  protein #{:<5} ligand #{:<5} d = {:.3} A", b.protein_atom_serial, b.ligand_atom_serial, b.distance);
    }

    let m = extract_features(&complex, &criteria, DEFAULT_TOP_N, true);
    println!("feature matrix: {} rows, {} real; first row (centred):", m.n_rows(), m.n_real);
    if let Some(r) = m.rows.first() {
        println!("  p = {:?}\n  l = {:?}\n  m = {:?}", &r[0..3], &r[3..6], &r[6..9]);
    }
    Ok(())
}
