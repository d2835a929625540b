//! Manifests, PDBbind index files, split construction and the encoded-sample
//! cache.
//!
//! Cache layout (all integers little-endian):
//!
//! ```text
//! "HBGC" | version u32 | schema hash [32] | protein_len u32 | pocket_len u32
//!        | smiles_len u32 | hbond_n u32 | n_records u32
//! record: id_len u32 | id bytes | protein f32[] | pocket f32[] | smiles u32[]
//!         | hbond f32[] | has_label u8 | label f32
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::{encode_residues, encode_smiles, EncodedSample, ResiduePropertyTable, SmilesVocabulary, DESCRIPTOR_DIM};
use crate::hbond::{detect_hbonds, extract_features, HBondCriteria, HBondFeatureMatrix, FEATURE_DIM};
use crate::model::HbgsaConfig;
use crate::pdb::{parse_atoms, Complex};

pub const MANIFEST_COLUMNS: [&str; 7] = ["id", "pdb_path", "ligand_resname", "smiles", "protein_seq", "pocket_seq", "affinity"];
pub const CACHE_MAGIC: &[u8; 4] = b"HBGC";
pub const CACHE_VERSION: u32 = 1;
pub const DEFAULT_VAL_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Resolved against the manifest's directory; `None` when the field is empty.
    pub pdb_path: Option<PathBuf>,
    pub ligand_resname: Option<String>,
    pub smiles: String,
    pub protein_seq: String,
    pub pocket_seq: String,
    /// −log Kd/Ki; absent for prediction-only entries.
    pub affinity: Option<f32>,
}

fn non_empty(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

/// Parses manifest CSV text; relative structure paths are joined to `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    let mut col = HashMap::new();
    for name in MANIFEST_COLUMNS {
        let i = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("manifest lacks required column `{name}`") })?;
        col.insert(name, i);
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |name: &str| rec.get(col[name]).unwrap_or("");
        let id = field("id").to_string();
        if id.is_empty() {
            return Err(Error::Parse { line, msg: "empty id".into() });
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(Error::Parse { line, msg: format!("duplicate id `{id}` on rows {first} and {line}") });
        }
        let affinity = match non_empty(field("affinity")) {
            None => None,
            Some(s) => {
                let v: f32 = s.parse().map_err(|_| Error::Parse { line, msg: format!("affinity `{s}` is not a number") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, msg: format!("affinity `{s}` is not finite") });
                }
                Some(v)
            }
        };
        out.push(ManifestEntry {
            id,
            pdb_path: non_empty(field("pdb_path")).map(|p| base.join(p)),
            ligand_resname: non_empty(field("ligand_resname")).map(str::to_string),
            smiles: field("smiles").to_string(),
            protein_seq: field("protein_seq").to_string(),
            pocket_seq: field("pocket_seq").to_string(),
            affinity,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Affinity column (fourth field) of a PDBbind index, keyed by lower-case code.
pub fn parse_pdbbind_index(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 || fields[0].len() != 4 {
            return Err(Error::Parse { line: i + 1, msg: format!("malformed index line `{line}`") });
        }
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Parse { line: i + 1, msg: format!("affinity field `{}` is not a number", fields[3]) })?;
        out.insert(fields[0].to_ascii_lowercase(), value);
    }
    Ok(out)
}

pub fn load_pdbbind_index(path: &Path) -> Result<BTreeMap<String, f64>> {
    parse_pdbbind_index(&std::fs::read_to_string(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?)
}

/// First token of every non-comment line: reads plain id lists and index files alike.
pub fn parse_id_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().next())
        .map(str::to_ascii_lowercase)
        .collect()
}

pub fn load_id_list(path: &Path) -> Result<BTreeSet<String>> {
    Ok(parse_id_list(&std::fs::read_to_string(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?))
}

/// Sorted, pairwise disjoint id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn check_disjoint(&self) -> Result<()> {
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for id in ids {
                if let Some(prev) = owner.insert(id, name) {
                    return Err(Error::Internal(format!("id `{id}` is in both {prev} and {name}")));
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
            std::fs::write(dir.join(format!("{name}.txt")), text)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<String>> { Ok(load_id_list(&dir.join(format!("{name}.txt")))?.into_iter().collect()) };
        let s = SplitSpec { train: read("train")?, val: read("val")?, test: read("test")? };
        s.check_disjoint()?;
        Ok(s)
    }
}

/// Builds train/validation/test id sets.
///
/// Every set first loses the `exclude` ids. Test is the core set; the
/// validation set is a seeded sample of `val_size` from refined minus core;
/// train is general plus the rest of refined, minus validation and test.
pub fn clean_and_split(
    general: &BTreeSet<String>,
    refined: &BTreeSet<String>,
    core: &BTreeSet<String>,
    exclude: &BTreeSet<String>,
    seed: u64,
    val_size: usize,
) -> Result<SplitSpec> {
    let core: BTreeSet<&String> = core.difference(exclude).collect();
    let refined_rest: Vec<&String> = refined.iter().filter(|id| !core.contains(id) && !exclude.contains(*id)).collect();
    if val_size > refined_rest.len() {
        return Err(Error::config(format!(
            "validation size {val_size} exceeds the {} refined ids left after removing core",
            refined_rest.len()
        )));
    }
    let mut shuffled = refined_rest.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val: BTreeSet<&String> = shuffled[..val_size].iter().copied().collect();
    let train: BTreeSet<&String> = general
        .iter()
        .chain(refined_rest.iter().copied())
        .filter(|id| !exclude.contains(*id) && !core.contains(id) && !val.contains(id))
        .collect();
    let owned = |s: BTreeSet<&String>| s.into_iter().cloned().collect::<Vec<_>>();
    let spec = SplitSpec { train: owned(train), val: owned(val), test: owned(core) };
    spec.check_disjoint()?;
    Ok(spec)
}

/// Everything that determines how a manifest entry becomes a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOptions {
    pub protein_len: usize,
    pub pocket_len: usize,
    pub smiles_len: usize,
    pub hbond_n: usize,
    pub criteria: HBondCriteria,
    pub center: bool,
    /// Entries without a readable structure get an all-zero bond block.
    pub allow_missing_structure: bool,
    /// Abort on the first failing entry instead of skipping it.
    pub strict: bool,
}

impl EncodeOptions {
    pub fn for_model(config: &HbgsaConfig) -> Self {
        EncodeOptions {
            protein_len: config.protein_len,
            pocket_len: config.pocket_len,
            smiles_len: config.smiles_len,
            hbond_n: config.hbond_n,
            criteria: HBondCriteria::default(),
            center: true,
            allow_missing_structure: false,
            strict: false,
        }
    }

    /// Hash over the tables, criteria and lengths a cache was built with.
    pub fn schema_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(ResiduePropertyTable::standard().checksum());
        h.update(SmilesVocabulary::standard().checksum());
        h.update(self.criteria.fingerprint().as_bytes());
        h.update(format!(
            "center={};lens={},{},{},{}",
            self.center, self.protein_len, self.pocket_len, self.smiles_len, self.hbond_n
        ));
        h.finalize().into()
    }
}

fn read_complex(entry: &ManifestEntry) -> Result<Option<Complex>> {
    let Some(path) = &entry.pdb_path else { return Ok(None) };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::data(format!("{}: {e}", path.display()))),
    };
    let atoms = parse_atoms(&text)?;
    Ok(Some(Complex::from_atoms(entry.id.clone(), atoms, entry.ligand_resname.as_deref())?))
}

/// Full featurisation of one entry.
pub fn encode_entry(entry: &ManifestEntry, opts: &EncodeOptions) -> Result<EncodedSample> {
    let hbond = match read_complex(entry)? {
        Some(c) => extract_features(&c, &opts.criteria, opts.hbond_n, opts.center),
        None if opts.allow_missing_structure => HBondFeatureMatrix::zeros(opts.hbond_n),
        None => {
            let path = entry.pdb_path.as_ref().map_or_else(|| "<none>".into(), |p| p.display().to_string());
            return Err(Error::data(format!("structure file {path} is missing")));
        }
    };
    Ok(EncodedSample {
        id: entry.id.clone(),
        protein: encode_residues(&entry.protein_seq, opts.protein_len)?,
        pocket: encode_residues(&entry.pocket_seq, opts.pocket_len)?,
        smiles: encode_smiles(&entry.smiles, opts.smiles_len)?,
        hbond: hbond.to_f32(),
        affinity: entry.affinity,
    })
}

/// Encodes entries in parallel, keeping manifest order. Failing entries
/// are returned alongside the successes unless `opts.strict`.
pub fn encode_entries(entries: &[ManifestEntry], opts: &EncodeOptions) -> Result<(Vec<EncodedSample>, Vec<(String, String)>)> {
    let results: Vec<Result<EncodedSample>> = entries.par_iter().map(|e| encode_entry(e, opts)).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (entry, r) in entries.iter().zip(results) {
        match r {
            Ok(s) => ok.push(s),
            Err(e) if opts.strict => return Err(Error::data(format!("entry `{}`: {e}", entry.id))),
            Err(e) => {
                warn!("skipping entry `{}`: {e}", entry.id);
                failed.push((entry.id.clone(), e.to_string()));
            }
        }
    }
    Ok((ok, failed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheReport {
    pub written: usize,
    pub failed: Vec<(String, String)>,
}

/// Encodes `entries` and writes the cache file.
pub fn encode_and_cache(entries: &[ManifestEntry], opts: &EncodeOptions, path: &Path) -> Result<CacheReport> {
    let (samples, failed) = encode_entries(entries, opts)?;
    write_cache(path, opts, &samples)?;
    Ok(CacheReport { written: samples.len(), failed })
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_len(w: &mut impl Write, v: usize) -> Result<()> {
    put_u32(w, u32::try_from(v).map_err(|_| Error::Format(format!("length {v} does not fit the cache format")))?)
}

pub fn write_cache(path: &Path, opts: &EncodeOptions, samples: &[EncodedSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    put_u32(&mut w, CACHE_VERSION)?;
    w.write_all(&opts.schema_hash())?;
    for v in [opts.protein_len, opts.pocket_len, opts.smiles_len, opts.hbond_n, samples.len()] {
        put_len(&mut w, v)?;
    }
    for s in samples {
        s.check_shapes(opts.protein_len, opts.pocket_len, opts.smiles_len, opts.hbond_n)?;
        put_len(&mut w, s.id.len())?;
        w.write_all(s.id.as_bytes())?;
        for v in s.protein.iter().chain(&s.pocket) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &s.smiles {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &s.hbond {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[u8::from(s.affinity.is_some())])?;
        w.write_all(&s.affinity.unwrap_or(0.0).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated cache: {e}")))?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    Ok(u32::from_le_bytes(get(r)?) as usize)
}

fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    (0..n).map(|_| Ok(f32::from_le_bytes(get(r)?))).collect()
}

/// Header fields of a cache file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHeader {
    pub schema_hash: [u8; 32],
    pub protein_len: usize,
    pub pocket_len: usize,
    pub smiles_len: usize,
    pub hbond_n: usize,
}

/// Reads a cache; with `expected`, a schema mismatch is rejected as stale.
pub fn read_cache(path: &Path, expected: Option<&EncodeOptions>) -> Result<(CacheHeader, Vec<EncodedSample>)> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?);
    if &get::<4>(&mut r)? != CACHE_MAGIC {
        return Err(Error::Format(format!("{} is not a sample cache", path.display())));
    }
    let version = get_u32(&mut r)?;
    if version != CACHE_VERSION as usize {
        return Err(Error::Format(format!("cache version {version}, expected {CACHE_VERSION}")));
    }
    let schema_hash = get::<32>(&mut r)?;
    let header = CacheHeader {
        schema_hash,
        protein_len: get_u32(&mut r)?,
        pocket_len: get_u32(&mut r)?,
        smiles_len: get_u32(&mut r)?,
        hbond_n: get_u32(&mut r)?,
    };
    if let Some(opts) = expected {
        if opts.schema_hash() != schema_hash {
            return Err(Error::Format("stale cache: schema hash differs from the current tables and settings".into()));
        }
    }
    let n = get_u32(&mut r)?;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let id_len = get_u32(&mut r)?;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(|e| Error::Format(format!("truncated cache: {e}")))?;
        let id = String::from_utf8(id).map_err(|_| Error::Format("cache id is not UTF-8".into()))?;
        let protein = get_f32s(&mut r, header.protein_len * DESCRIPTOR_DIM)?;
        let pocket = get_f32s(&mut r, header.pocket_len * DESCRIPTOR_DIM)?;
        let smiles = (0..header.smiles_len).map(|_| Ok(u32::from_le_bytes(get(&mut r)?))).collect::<Result<Vec<_>>>()?;
        let hbond = get_f32s(&mut r, header.hbond_n * FEATURE_DIM)?;
        let has = get::<1>(&mut r)?[0] != 0;
        let label = f32::from_le_bytes(get(&mut r)?);
        samples.push(EncodedSample { id, protein, pocket, smiles, hbond, affinity: has.then_some(label) });
    }
    Ok((header, samples))
}

/// Selects the samples named in `ids`, in `ids` order; unknown ids are an error.
pub fn select(samples: &[EncodedSample], ids: &[String]) -> Result<Vec<EncodedSample>> {
    let by_id: HashMap<&str, &EncodedSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter()
        .map(|id| by_id.get(id.as_str()).map(|s| (*s).clone()).ok_or_else(|| Error::data(format!("id `{id}` is not in the cache"))))
        .collect()
}

/// Detected bond count per entry that has a readable structure.
pub fn hbond_counts(entries: &[ManifestEntry], criteria: &HBondCriteria) -> Result<Vec<(String, usize)>> {
    entries
        .par_iter()
        .filter_map(|e| match read_complex(e) {
            Ok(Some(c)) => Some(Ok((e.id.clone(), detect_hbonds(&c, criteria).len()))),
            Ok(None) => {
                warn!("entry `{}` has no structure file", e.id);
                None
            }
            Err(err) => Some(Err(Error::data(format!("entry `{}`: {err}", e.id)))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,pdb_path,ligand_resname,smiles,protein_seq,pocket_seq,affinity\n";

    #[test]
    fn manifest_rows_and_errors() {
        let text = format!("{HEADER}a,a.pdb,LIG,CCO,MKV,KV,6.5\nb,,,CCN,MKV,KV,\n");
        let m = parse_manifest(&text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].pdb_path.as_deref(), Some(Path::new("/data/a.pdb")));
        assert_eq!(m[1].affinity, None);
        assert_eq!(m[1].ligand_resname, None);

        let mut dup = HEADER.to_string();
        for id in ["x", "1abc", "y", "z", "w", "1abc"] {
            dup.push_str(&format!("{id},p.pdb,,C,A,A,1\n"));
        }
        let err = parse_manifest(&dup, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("1abc") && err.contains("rows 3 and 7"), "{err}");

        assert!(parse_manifest("id,smiles\na,C\n", Path::new(".")).is_err());
    }

    #[test]
    fn index_fields() {
        let m = parse_pdbbind_index("# comment\n1zsb  2.00  1996  9.22  Kd=0.6nM\n").unwrap();
        assert_eq!(m["1zsb"], 9.22);
        assert!(parse_pdbbind_index("# only\n#\n").unwrap().is_empty());
        let err = parse_pdbbind_index("#\n1abc 2.0 2001 xx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    fn ids(range: std::ops::Range<usize>) -> BTreeSet<String> {
        range.map(|i| format!("{i:04}")).collect()
    }

    #[test]
    fn split_set_algebra() {
        let refined = ids(0..1300);
        let core = ids(0..290);
        let general = ids(200..2000);
        let s = clean_and_split(&general, &refined, &core, &BTreeSet::new(), 7, 1000).unwrap();
        assert_eq!(s.val.len(), 1000);
        assert_eq!(s.test.len(), 290);
        assert!(s.val.iter().all(|id| !core.contains(id)));
        assert!(s.train.iter().all(|id| !core.contains(id)));
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 2000);
        assert_eq!(s, clean_and_split(&general, &refined, &core, &BTreeSet::new(), 7, 1000).unwrap());
        assert!(clean_and_split(&general, &refined, &core, &BTreeSet::new(), 7, 1011).is_err());

        let exclude = ids(1999..2000);
        let s = clean_and_split(&general, &refined, &core, &exclude, 7, 10).unwrap();
        assert!(!s.train.contains(&"1999".to_string()));
    }
}
