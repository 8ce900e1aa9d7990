use std::collections::HashSet;
use std::fs;

use eraseek_core::adapt::{learn_gfk, learn_sa};
use eraseek_core::corpus::{
    load_features, load_manifest, load_model, merge_distractors, parse_manifest, read_model, read_text_matrix,
    sample_descriptors, save_features, save_manifest, save_model, Era, FeatureStore, Manifest, ManifestEntry,
    StoreReader, StoredModel, Workspace,
};
use eraseek_core::encode::{encode_fv, train_gmm, GmmModel};
use eraseek_core::linalg::fit_pca_rows;
use eraseek_core::synth::{gaussian, rng};
use eraseek_core::Error;
use ndarray::Array2;

fn entry(id: &str, class: Option<&str>, era: Era) -> ManifestEntry {
    ManifestEntry {
        id: id.into(),
        class_label: class.map(Into::into),
        era,
        uri: format!("images/{id}.jpg"),
        year: None,
        distractor: class.is_none(),
    }
}

fn store(n: usize, d: usize, seed: u64, prefix: &str) -> FeatureStore {
    let data = gaussian(&mut rng(seed), n, d).mapv(|v| v as f32);
    FeatureStore::new("fv", (0..n).map(|i| format!("{prefix}{i}")).collect(), data).unwrap()
}

#[test]
fn ltll_shaped_manifest_counts() {
    let mut entries = Vec::new();
    for i in 0..225 {
        entries.push(entry(&format!("old{i}"), Some(&format!("loc{}", i % 25)), Era::Old));
    }
    for i in 0..275 {
        entries.push(entry(&format!("new{i}"), Some(&format!("loc{}", i % 25)), Era::New));
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ltll.jsonl");
    save_manifest(&p, &Manifest { entries }).unwrap();
    let s = load_manifest(&p).unwrap().summary();
    assert_eq!(s.per_era[&Era::Old], 225);
    assert_eq!(s.per_era[&Era::New], 275);
    assert_eq!(s.per_class.len(), 25);
}

#[test]
fn manifest_schema_errors_name_the_line() {
    assert!(matches!(parse_manifest(""), Err(Error::Schema { .. })));
    assert!(matches!(parse_manifest("\n\n"), Err(Error::Schema { .. })));
    let ok = r#"{"id":"a","class_label":"x","era":"old","uri":"a.jpg"}"#;
    let cases = [
        (format!("{ok}\n{ok}"), 2, "duplicate"),
        (format!("{ok}\n\n{}", r#"{"id":"b","class_label":"x","era":"medieval","uri":"b.jpg"}"#), 3, "era"),
        (format!("{}", r#"{"id":"b","era":"new","uri":"b.jpg"}"#), 1, "class_label"),
        (format!("{ok}\nnot json"), 2, "JSON"),
    ];
    for (text, line, needle) in cases {
        match parse_manifest(&text) {
            Err(Error::Schema { line: l, message }) => {
                assert_eq!(l, line, "{message}");
                assert!(message.contains(needle), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }
    let distractor = r#"{"id":"d","era":"new","uri":"d.jpg","distractor":true}"#;
    assert_eq!(parse_manifest(distractor).unwrap().summary().distractors, 1);
}

#[test]
fn single_entry_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.jsonl");
    fs::write(&p, r#"{"id":"a","class_label":"x","era":"old","uri":"a.jpg","year":1890}"#).unwrap();
    let m = load_manifest(&p).unwrap();
    save_manifest(&p, &m).unwrap();
    let again = load_manifest(&p).unwrap();
    assert_eq!(m, again);
    assert_eq!(again.entries[0].year, Some(1890));
}

#[test]
fn store_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.feat");
    let mut s = store(10, 8, 1, "img");
    s.data[[3, 4]] = f32::MIN_POSITIVE / 2.0;
    s.data[[0, 0]] = -0.0;
    s.labels = Some((0..10).map(|i| format!("loc{}", i % 3)).collect());
    s.relevant[7] = false;
    save_features(&p, &s).unwrap();
    let back = load_features(&p).unwrap();
    assert_eq!(back.ids, s.ids);
    assert_eq!(back.labels, s.labels);
    assert_eq!(back.relevant, s.relevant);
    assert_eq!(back.scheme, "fv");
    assert_eq!(back.meta["prng"], "pcg64mcg");
    for (a, b) in back.data.iter().zip(s.data.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1, "temporary file left behind");
}

#[test]
fn truncated_or_foreign_store_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.feat");
    save_features(&p, &store(10, 8, 2, "i")).unwrap();
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(load_features(&p), Err(Error::CorruptStore { .. })));
    fs::write(&p, &bytes[..20]).unwrap();
    assert!(matches!(load_features(&p), Err(Error::CorruptStore { .. })));
    let mut extra = bytes.clone();
    extra.push(0);
    fs::write(&p, &extra).unwrap();
    assert!(matches!(load_features(&p), Err(Error::CorruptStore { .. })));
    let mut foreign = bytes;
    foreign[0] = b'X';
    fs::write(&p, &foreign).unwrap();
    assert!(matches!(load_features(&p), Err(Error::UnsupportedVersion(_))));
}

#[test]
fn store_checked_against_manifest() {
    let s = store(3, 4, 3, "a");
    let m = Manifest { entries: (0..3).map(|i| entry(&format!("a{i}"), Some("x"), Era::New)).collect() };
    s.validate_against(&m, Some(4)).unwrap();
    assert!(matches!(s.validate_against(&m, Some(5)), Err(Error::InvalidInput(_))));
    let short = Manifest { entries: m.entries[..2].to_vec() };
    assert!(matches!(s.validate_against(&short, None), Err(Error::InvalidInput(_))));
}

#[test]
fn chunked_reads_match_full_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.feat");
    let s = store(103, 5, 4, "r");
    save_features(&p, &s).unwrap();
    let mut r = StoreReader::open(&p).unwrap();
    assert_eq!((r.header.n, r.header.dim), (103, 5));
    let mut rows = 0;
    while let Some(c) = r.next_chunk(10).unwrap() {
        assert!(c.nrows() <= 10);
        assert_eq!(c, s.data.slice(ndarray::s![rows..rows + c.nrows(), ..]));
        rows += c.nrows();
    }
    assert_eq!(rows, 103);
}

#[test]
fn merging_distractors_flags_them() {
    let rel = store(275, 6, 5, "m");
    let dis = store(1050, 6, 6, "x");
    let merged = merge_distractors(&rel, &dis).unwrap();
    assert_eq!(merged.len(), 1325);
    let rel_ids: HashSet<&String> = rel.ids.iter().collect();
    for (id, flag) in merged.ids.iter().zip(&merged.relevant) {
        assert_eq!(*flag, rel_ids.contains(id), "{id}");
    }
    assert_eq!(merged.data.row(300), dis.data.row(25));

    let empty = FeatureStore::new("fv", vec![], Array2::zeros((0, 6))).unwrap();
    assert_eq!(merge_distractors(&rel, &empty).unwrap(), rel);
    assert!(matches!(merge_distractors(&rel, &store(4, 7, 7, "y")), Err(Error::InvalidInput(_))));
    assert!(matches!(merge_distractors(&rel, &store(4, 6, 7, "m")), Err(Error::InvalidInput(_))));
}

#[test]
fn descriptor_sampling_is_seeded_and_canonical() {
    let stores = vec![store(40, 3, 8, "a"), store(25, 3, 9, "b"), store(35, 3, 10, "c")];
    let all = sample_descriptors(&stores, 100, 0).unwrap();
    let mut k = 0;
    for s in &stores {
        for row in s.data.rows() {
            assert_eq!(all.row(k), row);
            k += 1;
        }
    }
    let a = sample_descriptors(&stores, 30, 42).unwrap();
    let b = sample_descriptors(&stores, 30, 42).unwrap();
    assert_eq!(a.rows(), b.rows());
    assert_ne!(a.rows(), sample_descriptors(&stores, 30, 43).unwrap().rows());
    // Canonical order: sampled rows appear in the same relative order as in `all`.
    let pos: Vec<usize> = a.rows().into_iter().map(|r| all.rows().into_iter().position(|q| q == r).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    assert!(matches!(sample_descriptors(&stores, 101, 0), Err(Error::InsufficientData(_))));
}

#[test]
fn text_matrix_import() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.txt");
    fs::write(&p, "# two descriptors\n1 2 3\n4,5,6\n\n").unwrap();
    let m = read_text_matrix(&p).unwrap();
    assert_eq!(m, ndarray::array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    fs::write(&p, "1 2 3\n4 5\n").unwrap();
    assert!(matches!(read_text_matrix(&p), Err(Error::Schema { line: 2, .. })));
}

fn assert_same_bits<T: Copy + Into<f64>>(a: impl IntoIterator<Item = T>, b: impl IntoIterator<Item = T>) {
    let a: Vec<u64> = a.into_iter().map(|v| v.into().to_bits()).collect();
    let b: Vec<u64> = b.into_iter().map(|v| v.into().to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn models_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let x = gaussian(&mut rng(11), 60, 8);
    let y = gaussian(&mut rng(12), 60, 8);
    let s = fit_pca_rows(x.view(), 3).unwrap();
    let t = fit_pca_rows(y.view(), 3).unwrap();
    let models: Vec<StoredModel<f64>> = vec![
        StoredModel::Subspace(s.clone()),
        StoredModel::Sa(learn_sa(&s, &t).unwrap()),
        StoredModel::Gfk(learn_gfk(&s, &t, 3).unwrap()),
        StoredModel::Gmm(train_gmm(x.view(), 3, 1).unwrap()),
        StoredModel::Codebook(eraseek_core::encode::Codebook::new(x.clone()).unwrap()),
    ];
    for (i, m) in models.iter().enumerate() {
        let p = dir.path().join(format!("m{i}.model"));
        save_model(&p, m).unwrap();
        let back: StoredModel<f64> = load_model(&p).unwrap();
        assert_eq!(&back, m);
        if let (StoredModel::Sa(a), StoredModel::Sa(b)) = (&back, m) {
            assert_same_bits(a.x_a.iter().copied(), b.x_a.iter().copied());
        }
    }

    let g32 = train_gmm(x.mapv(|v| v as f32).view(), 2, 3).unwrap();
    let p = dir.path().join("g32.model");
    save_model(&p, &StoredModel::Gmm(g32.clone())).unwrap();
    let StoredModel::Gmm(back) = load_model::<f32>(&p).unwrap() else { panic!("wrong kind") };
    assert_same_bits(back.weights.iter().copied(), g32.weights.iter().copied());
    assert_same_bits(back.means.iter().copied(), g32.means.iter().copied());
    assert_same_bits(back.variances.iter().copied(), g32.variances.iter().copied());
}

#[test]
fn reloaded_gmm_reencodes_identically() {
    let dir = tempfile::tempdir().unwrap();
    let x = gaussian(&mut rng(13), 200, 6);
    let gmm: GmmModel<f64> = train_gmm(x.view(), 4, 2).unwrap();
    let p = dir.path().join("gmm.model");
    save_model(&p, &StoredModel::Gmm(gmm.clone())).unwrap();
    let StoredModel::Gmm(back) = load_model::<f64>(&p).unwrap() else { panic!("wrong kind") };
    let d = gaussian(&mut rng(14), 30, 6);
    let a = encode_fv(d.view(), &gmm).unwrap();
    let b = encode_fv(d.view(), &back).unwrap();
    assert_same_bits(a.values.iter().copied(), b.values.iter().copied());
}

#[test]
fn foreign_model_files_are_rejected() {
    let mut bytes = Vec::new();
    let s = fit_pca_rows(gaussian(&mut rng(15), 10, 3).view(), 2).unwrap();
    eraseek_core::corpus::write_model(&mut bytes, &StoredModel::Subspace(s)).unwrap();
    let mut bad = bytes.clone();
    bad[..8].copy_from_slice(b"NOTMODEL");
    assert!(matches!(read_model::<f64>(&bad[..], "x"), Err(Error::UnsupportedVersion(_))));
    let mut future = bytes.clone();
    future[8] = 99;
    assert!(matches!(read_model::<f64>(&future[..], "x"), Err(Error::UnsupportedVersion(_))));
    assert!(matches!(read_model::<f64>(&bytes[..bytes.len() - 3], "x"), Err(Error::CorruptStore { .. })));
}

#[test]
fn workspace_layout() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::create(dir.path().join("ws")).unwrap();
    for d in Workspace::DIRS {
        assert!(ws.root().join(d).is_dir());
    }
    assert!(ws.features("archive").starts_with(ws.root().join("features")));
    assert!(ws.session_log("s1").starts_with(ws.root().join("sessions")));
}
