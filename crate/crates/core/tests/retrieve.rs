use std::sync::Arc;

use eraseek_core::adapt::learn_sa;
use eraseek_core::corpus::FeatureStore;
use eraseek_core::linalg::Subspace;
use eraseek_core::retrieve::{
    build_index, model_hash, read_log, replay, simulate_session, Alignment, EventLog, FeedbackRound, IndexMode,
    MapMode, Oracle, RetrievalIndex, Session, SessionConfig, SessionEvent, SessionState, SimulationConfig,
};
use eraseek_core::synth::{gaussian, random_orthonormal, retrieval_corpus, rng, uniform, RetrievalParams};
use eraseek_core::{Domain, Error, FeatureMatrix};
use ndarray::{s, Array1, Array2, ArrayView1};

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:05}")).collect()
}

fn index_of(x: Array2<f64>) -> RetrievalIndex<f64> {
    let n = x.nrows();
    RetrievalIndex::new(ids("a", n), x, vec![true; n], None).unwrap()
}

fn unit(v: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v.mapv(|x| x / n)
}

/// Rows uniformly on a 5-dimensional patch that does not contain the origin,
/// so normalising keeps it 5-dimensional.
fn manifold(n: usize, seed: u64, basis: &Array2<f64>) -> Array2<f64> {
    let u = uniform(&mut rng(seed), n, 5);
    let mut x = u.dot(&basis.slice(s![.., ..5]).t());
    x += &(basis.column(5).to_owned() * 2.0);
    x
}

fn fb(q: &str, sel: &[&str]) -> FeedbackRound {
    FeedbackRound { query_id: q.into(), selected_ids: sel.iter().map(|s| s.to_string()).collect(), round: 0 }
}

#[test]
fn index_construction() {
    let one = FeatureStore::new("fv", vec!["a".into()], Array2::from_elem((1, 4), 1.0f32)).unwrap();
    let idx = build_index(&one).unwrap();
    assert_eq!(idx.len(), 1);
    assert_eq!(idx.mode(), IndexMode::Raw);
    let empty = FeatureStore::new("fv", vec![], Array2::zeros((0, 4))).unwrap();
    assert!(matches!(build_index(&empty), Err(Error::InvalidInput(_))));
}

#[test]
fn raw_rankings_match_brute_force() {
    let mut r = rng(1);
    let x = gaussian(&mut r, 300, 12);
    let idx = index_of(x.clone());
    let qs = gaussian(&mut r, 100, 12);
    for q in qs.rows() {
        let qn = unit(q);
        let mut oracle: Vec<(f64, String)> = x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| ((&unit(row) - &qn).mapv(|v| v * v).sum().sqrt(), format!("a{i:05}")))
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got = idx.query_topk(q, 300).unwrap();
        for (g, o) in got.iter().zip(&oracle) {
            assert_eq!(g.id, o.1);
            assert!((g.score - o.0).abs() < 1e-12);
        }
    }
}

#[test]
fn topk_basics() {
    let x = gaussian(&mut rng(2), 50, 6);
    let idx = index_of(x.clone());
    let hits = idx.query_topk(x.row(17), 1).unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].id, "a00017");
    assert_eq!(hits[0].score, 0.0);
    assert_eq!(idx.query_topk(x.row(3), 500).unwrap().len(), 50);
    assert!(matches!(idx.query_topk(Array1::zeros(5).view(), 3), Err(Error::InvalidInput(_))));
    // Ties are broken by id.
    let tied = index_of(Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap());
    let order: Vec<String> =
        tied.query_topk(ndarray::array![1.0, 0.0].view(), 3).unwrap().into_iter().map(|h| h.id).collect();
    assert_eq!(order, vec!["a00000", "a00002", "a00001"]);
}

#[test]
fn far_distractors_keep_relevant_order() {
    let mut r = rng(3);
    let d = 8;
    // Relevant items in a cap around e1, distractors in a cap around −e1.
    let mut rel = gaussian(&mut r, 40, d) * 0.2;
    rel.column_mut(0).fill(1.0);
    let mut dis = gaussian(&mut r, 400, d) * 0.2;
    dis.column_mut(0).fill(-1.0);
    let alone = index_of(rel.clone());
    let all = ndarray::concatenate(ndarray::Axis(0), &[rel.view(), dis.view()]).unwrap();
    let mixed = index_of(all);
    let qs = {
        let mut q = gaussian(&mut r, 20, d) * 0.2;
        q.column_mut(0).fill(1.0);
        q
    };
    for q in qs.rows() {
        let a: Vec<String> = alone.query_topk(q, 40).unwrap().into_iter().map(|h| h.id).collect();
        let b: Vec<String> =
            mixed.query_topk(q, 440).unwrap().into_iter().map(|h| h.id).filter(|id| a.contains(id)).collect();
        assert_eq!(a, b);
        assert_eq!(mixed.query_topk(q, 40).unwrap().into_iter().map(|h| h.id).collect::<Vec<_>>(), a);
    }
}

#[test]
fn feedback_validation_and_counters() {
    let x = gaussian(&mut rng(4), 20, 5);
    let idx = index_of(x.clone());
    let s0 = Session::<f64>::new(SessionConfig::default()).issue_query("q1", x.row(0)).unwrap();
    for sel in
        [&["a00001", "a00002"][..], &["a00001", "a00002", "a00003", "a00004"][..], &["a00001", "a00001", "a00002"][..]]
    {
        assert!(matches!(s0.record_feedback(&idx, &fb("q1", sel)), Err(Error::InvalidFeedback(_))));
    }
    assert!(matches!(
        s0.record_feedback(&idx, &fb("nope", &["a00001", "a00002", "a00003"])),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(s0.record_feedback(&idx, &fb("q1", &["a00001", "a00002", "zz"])), Err(Error::InvalidInput(_))));

    let s1 = s0.record_feedback(&idx, &fb("q1", &["a00001", "a00002", "a00003"])).unwrap();
    assert_eq!((s1.n_s(), s1.n_t(), s1.round()), (3, 1, 1));
    assert_eq!((s0.n_s(), s0.n_t(), s0.round()), (0, 0, 0), "input session must be untouched");
    let s2 = s1.issue_query("q2", x.row(1)).unwrap();
    let s2 = s2.record_feedback(&idx, &fb("q2", &["a00003", "a00004", "a00001"])).unwrap();
    assert_eq!((s2.n_s(), s2.n_t()), (4, 2));
    let s3 = s2.record_feedback(&idx, &fb("q2", &["a00005", "a00006", "a00007"])).unwrap();
    assert_eq!((s3.n_s(), s3.n_t(), s3.round()), (7, 2, 3));
    assert_eq!(s3.feedback[2].round, 3);
}

#[test]
fn sixty_queries_make_180_feedbacks() {
    let x = gaussian(&mut rng(5), 200, 6);
    let idx = index_of(x.clone());
    let mut s = Session::<f64>::new(SessionConfig::default());
    let mut prev = (0, 0);
    for q in 0..60 {
        let qid = format!("q{q}");
        s = s.issue_query(&qid, x.row(q)).unwrap();
        let sel: Vec<String> = (0..3).map(|j| format!("a{:05}", (q * 2 + j) % 200)).collect();
        s = s.record_feedback(&idx, &FeedbackRound { query_id: qid, selected_ids: sel, round: 0 }).unwrap();
        assert!(s.n_s() >= prev.0 && s.n_t() >= prev.1);
        prev = (s.n_s(), s.n_t());
    }
    let total: usize = s.feedback.iter().map(|f| f.selected_ids.len()).sum();
    assert_eq!(total, 180);
    assert_eq!(s.n_s(), 121);
}

fn drive(
    idx: &RetrievalIndex<f64>,
    queries: &Array2<f64>,
    n: usize,
    cfg: SessionConfig,
) -> (Session<f64>, Vec<SessionEvent>) {
    let mut s = Session::new(cfg);
    let mut events = Vec::new();
    for q in 0..n {
        let qid = format!("q{q:03}");
        s = s.issue_query(&qid, queries.row(q)).unwrap();
        events.push(SessionEvent::Query { query_id: qid.clone(), vector: queries.row(q).to_vec() });
        let sel: Vec<String> = (0..3).map(|j| format!("a{:05}", 3 * q + j)).collect();
        let (next, evs) = s.apply_feedback(idx, &FeedbackRound { query_id: qid, selected_ids: sel, round: 0 }).unwrap();
        s = next;
        events.extend(evs);
    }
    (s, events)
}

#[test]
fn dimension_estimates_wait_for_fifteen_images_each() {
    let basis = random_orthonormal(&mut rng(6), 30, 6);
    let idx = index_of(manifold(300, 7, &basis));
    let queries = manifold(100, 8, &basis);
    let (s, _) = drive(&idx, &queries, 14, SessionConfig::default());
    assert!(matches!(s.estimate_session_dims(), Err(Error::NotReady(_))));
    assert_eq!(s.state(), SessionState::NotReady);
    let (s, _) = drive(&idx, &queries, 15, SessionConfig::default());
    assert!(s.d_hat_s.is_some() && s.d_hat_t.is_some());
}

#[test]
fn session_dims_recover_known_manifold() {
    let basis = random_orthonormal(&mut rng(9), 30, 6);
    let idx = index_of(manifold(300, 10, &basis));
    let queries = manifold(100, 11, &basis);
    let (s, _) = drive(&idx, &queries, 80, SessionConfig { relearn_every: None, ..Default::default() });
    let s = s.estimate_session_dims().unwrap();
    let (ds, dt) = (s.d_hat_s.unwrap().value, s.d_hat_t.unwrap().value);
    assert!((4.0..=6.0).contains(&ds), "source {ds}");
    assert!((4.0..=6.0).contains(&dt), "target {dt}");
    assert_eq!(s.state(), SessionState::Adapted);
}

#[test]
fn alignment_waits_for_the_sample_conditions() {
    // Isotropic 64-dimensional data: 15 images give a large MLE estimate.
    let mut r = rng(12);
    let idx = index_of(gaussian(&mut r, 300, 64));
    let queries = gaussian(&mut r, 100, 64);
    let (s, _) = drive(&idx, &queries, 15, SessionConfig::default());
    let dt = s.d_hat_t.unwrap().rounded;
    assert!(s.n_t() <= dt, "test needs an unmet condition (d_t = {dt})");
    let (same, ev) = s.maybe_learn_alignment().unwrap();
    assert!(ev.is_none() && same.alignment.is_none());
    assert_eq!(same.status(), s.status());
}

#[test]
fn learned_exactly_once_at_first_satisfying_round() {
    let basis = random_orthonormal(&mut rng(13), 30, 6);
    let idx = index_of(manifold(300, 14, &basis));
    let queries = manifold(100, 15, &basis);
    let (s, events) = drive(&idx, &queries, 40, SessionConfig::default());
    let adapted: Vec<usize> = events
        .iter()
        .filter_map(|e| match e {
            SessionEvent::Adapted { round, .. } => Some(*round),
            _ => None,
        })
        .collect();
    assert_eq!(adapted.len(), 1);
    let k = adapted[0];
    assert_eq!(s.k_star, Some(k));
    let (ds, dt) = (s.d_hat_s.unwrap().rounded, s.d_hat_t.unwrap().rounded);
    // k* is the first round with n_t > d_t and n_s > d_s (n_s = 3 n_t here).
    assert_eq!(k, 15.max(dt + 1).max(ds / 3 + 1));
    let a = s.alignment.as_ref().unwrap();
    assert_eq!((a.model.source.dim(), a.target_dim()), (ds, dt));
}

#[test]
fn eager_and_lazy_adapted_scores_agree() {
    let basis = random_orthonormal(&mut rng(16), 30, 6);
    let idx = index_of(manifold(300, 17, &basis));
    let queries = manifold(100, 18, &basis);
    let (s, _) = drive(&idx, &queries, 40, SessionConfig::default());
    let a = Arc::clone(s.alignment.as_ref().unwrap());
    let eager = idx.adapted(Arc::clone(&a), MapMode::Eager).unwrap();
    let lazy = idx.adapted(a, MapMode::Lazy).unwrap();
    assert_eq!(eager.mode(), IndexMode::Adapted);
    for q in 40..60 {
        let e = eager.scores(queries.row(q)).unwrap();
        let l = lazy.scores(queries.row(q)).unwrap();
        for (x, y) in e.iter().zip(&l) {
            assert!((x - y).abs() <= 1e-8);
        }
        assert_eq!(eager.top_k(&e, 20), lazy.top_k(&l, 20));
    }
    assert_eq!(idx.mode(), IndexMode::Raw, "adapting must not modify the raw index");
}

#[test]
fn identical_subspaces_reduce_to_projected_euclidean() {
    let mut r = rng(19);
    let d = 10;
    let x = gaussian(&mut r, 120, d);
    let b = random_orthonormal(&mut r, d, 4);
    let mean = gaussian(&mut r, 1, d).row(0).to_owned() * 0.1;
    let sub = Subspace::new(mean.clone(), b.clone(), Array1::ones(4)).unwrap();
    let model = learn_sa(&sub, &sub).unwrap();
    let a = Arc::new(Alignment::new(model, &Array1::ones(4)).unwrap());
    let idx = index_of(x.clone());
    let adapted = idx.adapted(a, MapMode::Eager).unwrap();

    let mut xn = x.clone();
    for mut row in xn.rows_mut() {
        let u = unit(row.view());
        row.assign(&u);
    }
    let projected = index_of((&xn - &mean).dot(&b));
    for q in gaussian(&mut r, 15, d).rows() {
        let qp = (&unit(q) - &mean).dot(&b);
        let want: Vec<usize> = projected.query_topk(qp.view(), 120).unwrap().into_iter().map(|h| h.position).collect();
        let got: Vec<usize> = adapted.query_topk(q, 120).unwrap().into_iter().map(|h| h.position).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn baseline_uses_the_nearest_accumulated_query() {
    let mut r = rng(20);
    let x = gaussian(&mut r, 30, 5);
    let idx = index_of(x.clone());
    let queries = gaussian(&mut r, 4, 5);
    let s = Session::<f64>::new(SessionConfig::default());
    assert!(matches!(s.baseline_neighbor_query(&idx, queries.row(0), 5), Err(Error::NotReady(_))));
    let s = s.issue_query("q0", queries.row(0)).unwrap();
    let s = s.record_feedback(&idx, &fb("q0", &["a00001", "a00004", "a00007"])).unwrap();
    let probe = |sel: [usize; 3]| -> Array1<f64> {
        sel.iter().map(|&i| unit(x.row(i))).fold(Array1::zeros(5), |a, b| a + b) / 3.0
    };
    let expect = |p: &Array1<f64>| -> Vec<String> {
        let mut v: Vec<(f64, String)> = x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| ((&unit(row) - p).mapv(|v| v * v).sum(), format!("a{i:05}")))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.into_iter().take(10).map(|t| t.1).collect()
    };
    // Single accumulated query: selected whatever q is.
    for q in queries.rows() {
        let got: Vec<String> = s.baseline_neighbor_query(&idx, q, 10).unwrap().into_iter().map(|h| h.id).collect();
        assert_eq!(got, expect(&probe([1, 4, 7])));
    }
    let s = s.issue_query("q1", queries.row(1)).unwrap();
    let s = s.record_feedback(&idx, &fb("q1", &["a00010", "a00011", "a00012"])).unwrap();
    let got: Vec<String> =
        s.baseline_neighbor_query(&idx, queries.row(1), 10).unwrap().into_iter().map(|h| h.id).collect();
    assert_eq!(got, expect(&probe([10, 11, 12])));
}

#[test]
fn event_log_replay_reproduces_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let basis = random_orthonormal(&mut rng(21), 30, 6);
    let idx = index_of(manifold(300, 22, &basis));
    let queries = manifold(100, 23, &basis);
    let cfg = SessionConfig { relearn_every: Some(7), ..Default::default() };
    let (s, events) = drive(&idx, &queries, 45, cfg.clone());
    {
        let (mut log, existing) = EventLog::open(&path).unwrap();
        assert!(existing.is_empty());
        log.append_all(events).unwrap();
    }
    let records = read_log(&path).unwrap();
    assert!(records.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    let again = replay(&idx, cfg.clone(), &records).unwrap();
    let (a, b) = (s.alignment.as_ref().unwrap(), again.alignment.as_ref().unwrap());
    let bits = |m: &Array2<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.model.m), bits(&b.model.m));
    assert_eq!(bits(&a.model.x_a), bits(&b.model.x_a));
    assert_eq!(model_hash(a), model_hash(b));
    assert_eq!(again.status(), s.status());

    // Reopening continues the sequence.
    let (mut log, existing) = EventLog::open(&path).unwrap();
    assert_eq!(log.next_seq(), existing.len() as u64 + 1);
    log.append(SessionEvent::ReadaptRequested).unwrap();

    // Tampering with a recorded hash is detected.
    let text = std::fs::read_to_string(&path).unwrap();
    let h = s.model_hash.clone().unwrap();
    std::fs::write(&path, text.replace(&h, &"0".repeat(64))).unwrap();
    assert!(replay(&idx, cfg, &read_log(&path).unwrap()).is_err());
}

#[test]
fn adapted_index_memory_is_vectors_plus_model() {
    let mut r = rng(24);
    let n = 5000;
    let d_t = 20;
    let dim = 64;
    let x = gaussian(&mut r, n, dim).mapv(|v| v as f32);
    let idx = RetrievalIndex::new(ids("a", n), x, vec![true; n], None).unwrap();
    let b = random_orthonormal(&mut r, dim, d_t).mapv(|v| v as f32);
    let sub = Subspace::new(Array1::zeros(dim), b, Array1::ones(d_t)).unwrap();
    let a = Arc::new(Alignment::new(learn_sa(&sub, &sub).unwrap(), &Array1::ones(d_t)).unwrap());
    let raw_bytes = idx.resident_bytes();
    assert_eq!(raw_bytes, n * dim * 4);
    let adapted = idx.adapted(a, MapMode::Eager).unwrap();
    let model = 4 * (3 * dim * d_t + d_t * d_t + 4 * dim);
    assert_eq!(adapted.resident_bytes(), raw_bytes + n * d_t * 4 + model);
}

fn one_location_corpus(
    n_arch: usize,
    n_q: usize,
    seed: u64,
) -> (RetrievalIndex<f64>, Vec<Option<String>>, FeatureMatrix<f64>) {
    let basis = random_orthonormal(&mut rng(seed), 30, 6);
    // Two-dimensional patch: dimension estimates stay far below the 15-image threshold.
    let patch = |n: usize, s: u64| {
        let u = uniform(&mut rng(s), n, 2);
        let mut x = u.dot(&basis.slice(s![.., ..2]).t());
        x += &(basis.column(5).to_owned() * 2.0);
        x
    };
    let idx = index_of(patch(n_arch, seed + 1));
    let labels = vec![Some("only".to_string()); n_arch];
    let q = FeatureMatrix::from_rows(patch(n_q, seed + 2), "q", Domain::Target)
        .unwrap()
        .with_labels(vec!["only".into(); n_q])
        .unwrap();
    (idx, labels, q)
}

#[test]
fn single_location_trigger_depends_only_on_thresholds() {
    let (idx, labels, q) = one_location_corpus(200, 60, 25);
    for min_distinct in [15, 20] {
        let cfg = SimulationConfig {
            schedule_len: 30,
            repetitions: 3,
            session: SessionConfig { min_distinct, ..Default::default() },
            ..Default::default()
        };
        let rep = simulate_session(&idx, &labels, &q, &cfg).unwrap();
        for r in &rep.repetitions {
            assert_eq!(r.k_star, Some(min_distinct));
        }
    }
}

#[test]
fn noisy_oracle_selects_wrong_images() {
    let c = retrieval_corpus(&RetrievalParams { locations: 20, distractors: 300, ..Default::default() }, 26);
    let idx = index_of(c.archive.rows().to_owned());
    let cfg = SimulationConfig {
        schedule_len: 20,
        repetitions: 1,
        oracle: Oracle::Noisy { error_rate: 1.0 },
        ..Default::default()
    };
    // With every selection wrong the feedback images are all distractors or
    // other locations; the report still completes.
    let rep = simulate_session(&idx, &c.archive_locations, &c.queries, &cfg).unwrap();
    assert!(rep.pre.mean > 0.0);
    assert_eq!(rep.repetitions[0].n_t, 20);
}

#[test]
fn simulation_is_reproducible_and_adaptation_helps() {
    let p = RetrievalParams { locations: 60, distractors: 2000, ..Default::default() };
    let c = retrieval_corpus(&p, 27);
    let idx = index_of(c.archive.rows().to_owned());
    let cfg = SimulationConfig {
        repetitions: 2,
        schedule_len: 60,
        session: SessionConfig { relearn_every: Some(5), ..Default::default() },
        curve_every: 10,
        ..Default::default()
    };
    let a = simulate_session(&idx, &c.archive_locations, &c.queries, &cfg).unwrap();
    let b = simulate_session(&idx, &c.archive_locations, &c.queries, &cfg).unwrap();
    assert_eq!(a, b);
    eprintln!("pre {:.3} post {:.3} naive {:.3}", a.pre.mean, a.post.mean, a.naive.mean);
    assert!(a.post.mean > a.pre.mean, "post {} pre {}", a.post.mean, a.pre.mean);
}
