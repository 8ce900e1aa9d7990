//! Fixture builders shared by the CLI, server and acceptance tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use eraseek_core::corpus::{save_features, FeatureStore};
use eraseek_core::synth::{gaussian, retrieval_corpus, rng, RetrievalCorpus, RetrievalParams};
use ndarray::Array2;

pub struct RetrievalFixture {
    pub index: PathBuf,
    pub queries: PathBuf,
    pub corpus: RetrievalCorpus,
}

/// Archive store (labels, with distractors flagged non-relevant) and a
/// labelled query store written under `dir`.
pub fn retrieval_fixture(dir: &Path, p: &RetrievalParams, seed: u64) -> RetrievalFixture {
    let corpus = retrieval_corpus(p, seed);
    let a = &corpus.archive;
    let mut store = FeatureStore::new("synthetic", a.ids().to_vec(), a.rows().mapv(|v| v as f32)).unwrap();
    store.labels = Some(corpus.archive_locations.iter().map(|l| l.clone().unwrap_or_default()).collect());
    store.relevant = corpus.archive_locations.iter().map(Option::is_some).collect();
    let index = dir.join("archive.feat");
    save_features(&index, &store).unwrap();

    let q = &corpus.queries;
    let mut qs = FeatureStore::new("synthetic", q.ids().to_vec(), q.rows().mapv(|v| v as f32)).unwrap();
    qs.labels = q.labels().map(<[String]>::to_vec);
    let queries = dir.join("queries.feat");
    save_features(&queries, &qs).unwrap();
    RetrievalFixture { index, queries, corpus }
}

pub fn write_text_matrix(path: &Path, m: &Array2<f64>) {
    let mut s = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

/// Image collection with per-image local descriptors: each class has its own
/// descriptor cluster centres; old images are shifted and noisier.
/// Returns the manifest path.
pub fn descriptor_fixture(dir: &Path, classes: usize, new_per: usize, old_per: usize, seed: u64) -> PathBuf {
    let d = 8;
    let per_image = 30;
    let mut r = rng(seed);
    let centres = gaussian(&mut r, classes * 3, d) * 3.0;
    let shift = gaussian(&mut r, 1, d) * 0.8;
    std::fs::create_dir_all(dir.join("desc")).unwrap();
    let mut manifest = String::new();
    for c in 0..classes {
        for (era, count) in [("new", new_per), ("old", old_per)] {
            for i in 0..count {
                let id = format!("{era}-c{c}-{i}");
                let mut x = gaussian(&mut r, per_image, d) * if era == "old" { 0.9 } else { 0.6 };
                for (j, mut row) in x.rows_mut().into_iter().enumerate() {
                    row += &centres.row(c * 3 + j % 3);
                    if era == "old" {
                        row += &shift.row(0);
                    }
                }
                let uri = format!("desc/{id}.txt");
                write_text_matrix(&dir.join(&uri), &x);
                manifest.push_str(&format!(
                    "{{\"id\":\"{id}\",\"class_label\":\"loc{c}\",\"era\":\"{era}\",\"uri\":\"{uri}\"}}\n"
                ));
            }
        }
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest).unwrap();
    path
}
