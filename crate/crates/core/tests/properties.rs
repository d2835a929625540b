//! Property tests for invariants that should hold on any input.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hbgsa::dataset::{self, EncodeOptions};
use hbgsa::featurize::smiles::SmilesVocabulary;
use hbgsa::gnn::knn_graph;
use hbgsa::hbond::{detect_hbonds, extract_features, select_top_n, HBondCriteria};
use hbgsa::model::{build_params, HbgsaConfig};
use hbgsa::objective::{concordance_index, mae, pearson_loss, rmse, smooth_l1};
use hbgsa::pdb::{parse_atoms, Atom, Element, RecordKind};
use hbgsa::{synthetic, train};

fn vec_pair(min: usize, max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (min..=max).prop_flat_map(|n| (prop::collection::vec(-20.0..20.0f64, n), prop::collection::vec(-20.0..20.0f64, n)))
}

fn not_constant(v: &[f64]) -> bool {
    v.iter().any(|x| (x - v[0]).abs() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smooth_l1_is_nonnegative_and_zero_on_match((p, t) in vec_pair(1, 40)) {
        prop_assert!(smooth_l1(&p, &t).unwrap() >= 0.0);
        prop_assert_eq!(smooth_l1(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn pearson_loss_in_range_and_affine_invariant(
        (p, t) in vec_pair(3, 40), a in 0.1..10.0f64, b in -10.0..10.0f64,
    ) {
        prop_assume!(not_constant(&p) && not_constant(&t));
        let l = pearson_loss(&p, &t).unwrap();
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&l), "{}", l);
        let q: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson_loss(&q, &t).unwrap() - l).abs() < 1e-6);
    }

    #[test]
    fn ci_in_unit_interval_and_rmse_dominates_mae((p, t) in vec_pair(2, 60)) {
        if not_constant(&t) {
            let ci = concordance_index(&p, &t, false).unwrap();
            prop_assert!((0.0..=1.0).contains(&ci));
        }
        prop_assert!(rmse(&p, &t).unwrap() + 1e-12 >= mae(&p, &t).unwrap());
    }

    #[test]
    fn centred_features_survive_grid_translation(
        seed in any::<u64>(), n in 6usize..40, h in any::<bool>(),
        shift in prop::array::uniform3(-50_000i64..50_000),
    ) {
        let c = synthetic::random_complex(&mut ChaCha8Rng::seed_from_u64(seed), n, h);
        let mut moved = c.clone();
        moved.translate(shift.map(|v| v as f64 / 1000.0));
        let crit = HBondCriteria::default();
        let a = extract_features(&c, &crit, 20, true);
        let b = extract_features(&moved, &crit, 20, true);
        prop_assert_eq!(a.n_real, b.n_real);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            prop_assert!(ra.iter().zip(rb).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn top_n_keeps_the_shortest_bonds_in_order(seed in any::<u64>(), n in 6usize..50, k in 1usize..12) {
        let c = synthetic::random_complex(&mut ChaCha8Rng::seed_from_u64(seed), n, false);
        let bonds = detect_hbonds(&c, &HBondCriteria::default());
        let m = select_top_n(&bonds, k);
        prop_assert_eq!(m.n_rows(), k);
        prop_assert_eq!(m.n_real, bonds.len().min(k));
        let dist = |r: &[f64; 9]| ((r[0] - r[3]).powi(2) + (r[1] - r[4]).powi(2) + (r[2] - r[5]).powi(2)).sqrt();
        let kept: Vec<f64> = m.rows[..m.n_real].iter().map(dist).collect();
        prop_assert!(kept.windows(2).all(|w| w[0] <= w[1] + 1e-9));
        let mut all: Vec<f64> = bonds.iter().map(|b| b.distance).collect();
        all.sort_by(f64::total_cmp);
        for (got, want) in kept.iter().zip(&all) {
            prop_assert!((got - want).abs() < 1e-9);
        }
        prop_assert!(m.rows[m.n_real..].iter().all(|r| r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn knn_rows_are_distinct_sorted_and_exclude_self(
        pts in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 2..30), k in 1usize..8,
    ) {
        prop_assume!(k < pts.len());
        let d = |a: [f64; 3], b: [f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
        for (i, row) in knn_graph(&pts, k).unwrap().iter().enumerate() {
            prop_assert_eq!(row.len(), k);
            prop_assert!(!row.contains(&i));
            prop_assert_eq!(row.iter().collect::<BTreeSet<_>>().len(), k);
            prop_assert!(row.windows(2).all(|w| d(pts[i], pts[w[0]]) <= d(pts[i], pts[w[1]])));
            let farthest = d(pts[i], pts[row[k - 1]]);
            let outside = (0..pts.len()).filter(|j| *j != i && !row.contains(j));
            for j in outside {
                prop_assert!(d(pts[i], pts[j]) >= farthest);
            }
        }
    }

    #[test]
    fn split_is_disjoint_and_covers_clean_ids(
        general in prop::collection::btree_set("[a-z][0-9][a-z]{2}", 0..30),
        refined in prop::collection::btree_set("[a-z][0-9][a-z]{2}", 5..30),
        core_pick in prop::collection::vec(any::<prop::sample::Index>(), 0..5),
        exclude_pick in prop::collection::vec(any::<prop::sample::Index>(), 0..5),
        seed in any::<u64>(),
    ) {
        let pool: Vec<&String> = refined.iter().collect();
        let core: BTreeSet<String> = core_pick.iter().map(|i| i.get(&pool).to_string()).collect();
        let exclude: BTreeSet<String> = exclude_pick.iter().map(|i| i.get(&pool).to_string()).collect();
        let spare = refined.iter().filter(|id| !core.contains(*id) && !exclude.contains(*id)).count();
        let s = dataset::clean_and_split(&general, &refined, &core, &exclude, seed, spare / 2).unwrap();
        s.check_disjoint().unwrap();
        prop_assert_eq!(s.val.len(), spare / 2);
        let got: BTreeSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        let want: BTreeSet<&String> = general.iter().chain(&refined).filter(|id| !exclude.contains(*id)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn fold_partition_is_a_partition(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = train::fold_partition(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn smiles_tokenize_round_trips(seed in any::<u64>(), frags in 1usize..12) {
        let s = synthetic::random_smiles(&mut ChaCha8Rng::seed_from_u64(seed), frags);
        let v = SmilesVocabulary::standard();
        prop_assert_eq!(v.detokenize(&v.tokenize(&s).unwrap()), s);
    }

    #[test]
    fn pdb_line_round_trips(
        serial in 1i64..99_999, elem in prop::sample::select(vec!["C", "N", "O", "S", "H", "Cl", "Zn"]),
        suffix in 1u32..99, res in "[A-Z]{3}", seq in -999i64..9999, chain in prop::char::range('A', 'Z'),
        pos in prop::array::uniform3(-999_999i64..9_999_999), het in any::<bool>(),
    ) {
        let atom = Atom {
            serial,
            name: format!("{}{suffix}", elem.to_uppercase()),
            element: Element::new(elem).unwrap(),
            residue_name: res,
            residue_seq: seq,
            chain_id: chain,
            position: pos.map(|v| v as f64 / 1000.0),
            record_kind: if het { RecordKind::Hetatm } else { RecordKind::Atom },
        };
        let parsed = parse_atoms(&atom.to_pdb_line()).unwrap();
        prop_assert_eq!(parsed, vec![atom]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cache_round_trips(seed in any::<u64>(), n in 1usize..6) {
        let config = HbgsaConfig::tiny();
        let samples = synthetic::samples(&config, n, seed);
        let opts = EncodeOptions::for_model(&config);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hbgc");
        dataset::write_cache(&path, &opts, &samples).unwrap();
        let (_, back) = dataset::read_cache(&path, Some(&opts)).unwrap();
        prop_assert_eq!(back, samples);
        let other = EncodeOptions { center: !opts.center, ..opts };
        prop_assert!(dataset::read_cache(&path, Some(&other)).is_err());
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>()) {
        let config = HbgsaConfig::tiny();
        let params = build_params::<f32>(&config, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        train::save_checkpoint(&path, &config, &params).unwrap();
        let (cfg, back) = train::load_checkpoint(&path).unwrap();
        prop_assert_eq!(cfg, config);
        let a: Vec<_> = params.iter().collect();
        let b: Vec<_> = back.iter().collect();
        prop_assert_eq!(a.len(), b.len());
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(ta.shape(), tb.shape());
            prop_assert!(ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
