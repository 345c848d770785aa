//! On-disk corpus layout.
//!
//! ```text
//! <dir>/manifest.tsv          id  path  label  split   (header line first)
//! <dir>/corpus.json           generation spec, synthetic corpora only
//! <dir>/images/<id>.png
//! <dir>/masks/<id>.mask.png   0/255 defect masks, synthetic corpora only
//! ```
//!
//! Paths in the manifest are relative to its directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ioplin_core::corpus::{DefectMask, GeneratedCorpus, GenerationSpec, ImageRecord, Source, Split};
use ioplin_core::preprocess::center_crop_to_tile;
use ioplin_core::Raster;
use sha2::{Digest, Sha256};

use crate::imageio::{load_png, save_png};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SPEC_FILE: &str = "corpus.json";
const HEADER: &str = "id\tpath\tlabel\tsplit";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: u8,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    /// Directory the record paths are relative to.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
    pub spec: Option<GenerationSpec>,
}

impl CorpusManifest {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.id, r.path.display(), r.label, r.split.as_str());
        }
        out
    }

    /// Parses manifest text. Checks the header, field count, label values,
    /// split names and id uniqueness; does not touch the image files.
    pub fn parse(root: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == HEADER => {}
            Some((_, h)) => return Err(Error::Data(format!("manifest header must be `{HEADER}`, got `{h}`"))),
            None => return Err(Error::Data("manifest is empty (missing header line)".into())),
        }
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, path, label, split] = fields[..] else {
                return Err(Error::Data(format!("manifest line {}: expected 4 tab-separated fields", n + 1)));
            };
            let label = match label {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Data(format!("record {id}: label must be 0 or 1, got `{other}`"))),
            };
            let split = Split::parse(split)
                .ok_or_else(|| Error::Data(format!("record {id}: split must be train or test, got `{split}`")))?;
            if !seen.insert(id.to_string()) {
                return Err(Error::Data(format!("duplicate record id {id}")));
            }
            records.push(ManifestRecord { id: id.into(), path: path.into(), label, split });
        }
        Ok(CorpusManifest { root: root.into(), records, spec: None })
    }

    pub fn image_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn mask_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join("masks").join(format!("{}.mask.png", record.id))
    }
}

/// Reads a manifest and checks that every referenced image exists.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut manifest = CorpusManifest::parse(root, &text)?;
    for r in &manifest.records {
        let p = manifest.image_path(r);
        if !p.is_file() {
            return Err(Error::Data(format!("record {}: image file {} not found", r.id, p.display())));
        }
    }
    let spec_path = root.join(SPEC_FILE);
    if spec_path.is_file() {
        let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        manifest.spec = Some(
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", spec_path.display())))?,
        );
    }
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes images, masks, the manifest and the generation spec under `dir`.
pub fn write_corpus(dir: &Path, corpus: &GeneratedCorpus) -> Result<CorpusManifest> {
    let mut records = Vec::with_capacity(corpus.records.len());
    for (rec, mask) in corpus.records.iter().zip(&corpus.masks) {
        let rel = PathBuf::from("images").join(format!("{}.png", rec.id));
        save_png(&dir.join(&rel), &rec.pixels)?;
        let mut visible = mask.mask.clone();
        visible.as_mut_slice().iter_mut().for_each(|v| *v = if *v != 0 { 255 } else { 0 });
        save_png(&dir.join("masks").join(format!("{}.mask.png", rec.id)), &visible)?;
        records.push(ManifestRecord { id: rec.id.clone(), path: rel, label: rec.label, split: rec.split });
    }
    let manifest = CorpusManifest { root: dir.into(), records, spec: Some(corpus.spec.clone()) };
    write_file(&dir.join(MANIFEST_FILE), manifest.to_tsv().as_bytes())?;
    let spec = serde_json::to_string_pretty(&corpus.spec).expect("generation spec serializes");
    write_file(&dir.join(SPEC_FILE), spec.as_bytes())?;
    Ok(manifest)
}

/// Decoded images, plus masks when every record has one.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub manifest: CorpusManifest,
    pub records: Vec<ImageRecord>,
    pub masks: Option<Vec<DefectMask>>,
    /// SHA-256 over the manifest text and every image file, hex encoded.
    pub hash: String,
}

impl LoadedCorpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &ImageRecord)> {
        self.records.iter().enumerate().filter(move |(_, r)| r.split == split)
    }
}

/// Decodes every image of a manifest. With `crop_to_tile`, images (and masks)
/// are center-cropped to the largest region that tiles under that patch size.
pub fn load_corpus(manifest: &CorpusManifest, crop_to_tile: Option<usize>) -> Result<LoadedCorpus> {
    let mut hasher = Sha256::new();
    hasher.update(manifest.to_tsv().as_bytes());
    let source = if manifest.spec.is_some() { Source::Synthetic } else { Source::External };
    let fit = |r: Raster| -> Result<Raster> {
        match crop_to_tile {
            Some(size) => Ok(center_crop_to_tile(&r, size)?),
            None => Ok(r),
        }
    };

    let mut records = Vec::with_capacity(manifest.records.len());
    let mut masks = Vec::with_capacity(manifest.records.len());
    let mut all_masks = true;
    for r in &manifest.records {
        let path = manifest.image_path(r);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(&bytes);
        let pixels = fit(load_png(&path)?)?;
        let mask_path = manifest.mask_path(r);
        if all_masks && mask_path.is_file() {
            let mut mask = fit(load_png(&mask_path)?)?;
            if mask.channels() != 1 || mask.width() != pixels.width() || mask.height() != pixels.height() {
                return Err(Error::Data(format!("record {}: mask does not match the image", r.id)));
            }
            mask.as_mut_slice().iter_mut().for_each(|v| *v = u8::from(*v >= 128));
            masks.push(DefectMask { image_id: r.id.clone(), mask });
        } else {
            all_masks = false;
        }
        records.push(ImageRecord { id: r.id.clone(), pixels, label: r.label, split: r.split, source });
    }
    let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedCorpus { manifest: manifest.clone(), records, masks: all_masks.then_some(masks), hash })
}
