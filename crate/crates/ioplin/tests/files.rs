use std::path::Path;

use ioplin::manifest::{load_corpus, load_manifest, write_corpus, CorpusManifest, MANIFEST_FILE};
use ioplin::store::{load_checkpoint, save_checkpoint};
use ioplin::Error;
use ioplin_core::corpus::{generate_corpus, GenerationSpec};
use ioplin_core::plin::{PatchScorer, SmallCnn, SmallCnnConfig};
use ioplin_core::Raster;

fn tiny_spec(seed: u64) -> GenerationSpec {
    GenerationSpec { n_train_pos: 3, n_train_neg: 3, n_test_pos: 2, n_test_neg: 2, seed, ..Default::default() }
}

fn write_tsv(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn generated_corpus_round_trips_through_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_corpus(&tiny_spec(5)).unwrap();
    let written = write_corpus(dir.path(), &corpus).unwrap();
    let loaded = load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.records, written.records);
    assert_eq!(loaded.spec.as_ref(), Some(&corpus.spec));

    let full = load_corpus(&loaded, None).unwrap();
    assert_eq!(full.records, corpus.records);
    let masks = full.masks.expect("masks are written beside the images");
    for (a, b) in masks.iter().zip(&corpus.masks) {
        assert_eq!(a.mask, b.mask);
    }
    assert_eq!(full.hash, load_corpus(&loaded, None).unwrap().hash);
}

#[test]
fn empty_record_list_is_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tsv(dir.path(), "id\tpath\tlabel\tsplit\n");
    let manifest = load_manifest(&path).unwrap();
    assert!(manifest.records.is_empty());
    assert!(load_corpus(&manifest, None).unwrap().records.is_empty());
}

#[test]
fn missing_image_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tsv(dir.path(), "id\tpath\tlabel\tsplit\nroad_17\timages/road_17.png\t1\ttrain\n");
    let err = load_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("road_17"), "{err}");
}

#[test]
fn bad_label_and_duplicate_id_are_rejected() {
    let root = Path::new(".");
    let bad = CorpusManifest::parse(root, "id\tpath\tlabel\tsplit\na\ta.png\t2\ttrain\n").unwrap_err();
    assert!(bad.to_string().contains("label"), "{bad}");
    let dup = CorpusManifest::parse(root, "id\tpath\tlabel\tsplit\na\ta.png\t1\ttrain\na\tb.png\t0\ttest\n")
        .unwrap_err();
    assert!(dup.to_string().contains("duplicate"), "{dup}");
    assert!(CorpusManifest::parse(root, "name\tfile\n").is_err());
    assert!(CorpusManifest::parse(root, "id\tpath\tlabel\tsplit\na\ta.png\t1\tholdout\n").is_err());
}

fn probe(n: usize, size: usize) -> Vec<Raster> {
    (0..n).map(|k| Raster::from_fn(size, size, |x, y| ((x * 7 + y * 13 + k * 29) % 251) as u8)).collect()
}

#[test]
fn checkpoint_round_trip_preserves_probe_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SmallCnnConfig { widths: vec![4, 8], input_size: 16, ..Default::default() };
    let model = SmallCnn::new(cfg).unwrap();
    let batch = probe(8, 16);
    let before = model.score_patches(&batch).unwrap();

    let a = dir.path().join("a.bin");
    let b = dir.path().join("nested/b.bin");
    save_checkpoint(&a, &model).unwrap();
    save_checkpoint(&b, &model).unwrap();
    for path in [&a, &b] {
        let after = load_checkpoint(path).unwrap().score_patches(&batch).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() <= 1e-7);
        }
    }
}

#[test]
fn missing_or_corrupt_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.bin");
    let err = load_checkpoint(&missing).unwrap_err();
    assert!(err.to_string().contains("none.bin"), "{err}");

    let cfg = SmallCnnConfig { widths: vec![4, 8], input_size: 16, ..Default::default() };
    let path = dir.path().join("c.bin");
    save_checkpoint(&path, &SmallCnn::new(cfg).unwrap()).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Data(_))));
    std::fs::write(&path, &bytes[..10]).unwrap();
    assert!(load_checkpoint(&path).is_err());
}
