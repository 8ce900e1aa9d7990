//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fails.

mod common;
#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use eraseek_core::adapt::{learn_gfk, learn_sa};
use eraseek_core::corpus::{StoreReader, StoreWriter};
use eraseek_core::encode::{encode_fv, fisher_vector_raw, GmmModel};
use eraseek_core::eval::{run_protocol, AdaptMethod, Metric, ProtocolConfig, SamplesPerClass};
use eraseek_core::linalg::{
    estimate_dim_fractal_rows, estimate_dim_mle, estimate_dim_mle_rows, fit_pca_rows, FractalMethod, FractalParams,
    Subspace,
};
use eraseek_core::retrieve::{
    model_hash, read_log, replay, simulate_session, Alignment, EventLog, FeedbackRound, RetrievalIndex, Session,
    SessionConfig, SessionEvent, SimulationConfig,
};
use eraseek_core::synth::{
    embedded_cube, gaussian, random_orthonormal, retrieval_corpus, rng, shifted_classes, uniform, RetrievalParams,
    ShiftParams,
};
use ndarray::{array, Array1, Array2, Axis};
use oracles::*;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn subspace(basis: Array2<f64>) -> Subspace<f64> {
    Subspace::from_basis(basis)
}

fn gfk_closed_form() -> Outcome {
    let start = Instant::now();
    let ps = array![[1.0], [0.0]];
    let pt = array![[0.0], [1.0]];
    let g = learn_gfk(&subspace(ps), &subspace(pt), 1).map_err(|e| e.to_string())?.g;
    let inv_pi = 1.0 / std::f64::consts::PI;
    let want = array![[0.5, inv_pi], [inv_pi, 0.5]];
    let planar = max_abs_diff(&g, &want);

    let mut r = rng(100);
    let (mut worst, mut asym, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut gfk_time = 0.0;
    for _ in 0..100 {
        let dim = r.random_range(2..=16);
        let d = r.random_range(1..=(dim / 2).min(4));
        let ps = random_orthonormal(&mut r, dim, d);
        let pt = random_orthonormal(&mut r, dim, d);
        let t = Instant::now();
        let g = learn_gfk(&subspace(ps.clone()), &subspace(pt.clone()), d).map_err(|e| e.to_string())?.g;
        gfk_time += t.elapsed().as_secs_f64();
        worst = worst.max(max_abs_diff(&g, &gfk_quadrature(&ps, &pt, 400)));
        asym = asym.max(max_abs_diff(&g, &g.t().to_owned()));
        min_eig = min_eig.min(min_eigenvalue(&g));
    }
    let total = start.elapsed().as_secs_f64();
    check(
        planar <= 1e-6 && worst <= 1e-6 && asym == 0.0 && min_eig >= -1e-8 && total < 10.0,
        format!(
            "planar err {planar:.1e}; 100 pairs max err {worst:.1e}, asym {asym:.1e}, min eig {min_eig:.1e}; \
             {gfk_time:.3}s closed form, {total:.2}s with oracle"
        ),
    )
}

fn sa_optimality() -> Outcome {
    let mut r = rng(200);
    let mut violations = 0;
    for _ in 0..1000 {
        let m = learn_sa(&subspace(random_orthonormal(&mut r, 20, 5)), &subspace(random_orthonormal(&mut r, 20, 5)))
            .map_err(|e| e.to_string())?;
        let mut delta = gaussian(&mut r, 5, 5);
        delta *= 0.01 / delta.mapv(|v| v * v).sum().sqrt();
        if m.objective((&m.m + &delta).view()) < m.objective(m.m.view()) {
            violations += 1;
        }
    }
    let p = random_orthonormal(&mut r, 20, 5);
    let id = learn_sa(&subspace(p.clone()), &subspace(p)).map_err(|e| e.to_string())?;
    let id_err = max_abs_diff(&id.m, &Array2::eye(5));
    check(
        violations == 0 && id_err <= 1e-10,
        format!("{violations} violations in 1000 trials; identity err {id_err:.1e}"),
    )
}

fn intrinsic_dimension() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, seed, tol) in [(1usize, 11u64, 0.2), (2, 12, 0.3), (5, 13, 1.0)] {
        let v = estimate_dim_mle_rows(embedded_cube(2000, m, 10, seed).view(), 6, 12).map_err(|e| e.to_string())?.value;
        ok &= (v - m as f64).abs() <= tol;
        parts.push(format!("MLE m={m}: {v:.3}"));
    }
    let p = FractalParams::default();
    for (m, seed) in [(1usize, 21u64), (2, 22)] {
        let x = embedded_cube(2000, m, 10, seed);
        for method in [FractalMethod::Gmst, FractalMethod::Cdm] {
            let v = estimate_dim_fractal_rows(x.view(), method, &p).map_err(|e| e.to_string())?.value;
            ok &= (v - m as f64).abs() <= 0.4;
            parts.push(format!("{method:?} m={m}: {v:.3}"));
        }
    }
    check(ok, parts.join(", "))
}

fn fisher_vectors() -> Outcome {
    let mut r = rng(400);
    let gmm = GmmModel::new(Array1::from_elem(64, 1.0 / 64.0), gaussian(&mut r, 64, 64), Array2::ones((64, 64)))
        .map_err(|e| e.to_string())?;
    let dim = encode_fv(gaussian(&mut r, 20, 64).view(), &gmm).map_err(|e| e.to_string())?.values.len();

    // Descriptors sitting on the component means.
    let means = array![[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]];
    let at_means =
        GmmModel::new(array![0.5, 0.25, 0.25], means.clone(), Array2::ones((3, 2))).map_err(|e| e.to_string())?;
    let raw = fisher_vector_raw(means.select(Axis(0), &[0, 0, 1, 2]).view(), &at_means).map_err(|e| e.to_string())?;
    let mean_block = (0..3).flat_map(|c| (0..2).map(move |j| 4 * c + j)).map(|i| raw[i].abs()).fold(0.0, f64::max);

    // Finite-difference gradients of the log-likelihood.
    let small = GmmModel::<f64>::new(array![0.6, 0.4], array![[0.0, 1.0], [1.5, -0.5]], array![[1.0, 0.5], [0.8, 1.2]])
        .map_err(|e| e.to_string())?;
    let x = array![[0.3, 0.7], [1.2, -0.1], [-0.4, 1.5], [2.0, 0.0], [0.9, 0.4]];
    let n = x.nrows() as f64;
    let fv = fisher_vector_raw(x.view(), &small).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut fd_rel = 0.0f64;
    for c in 0..2 {
        let w = small.weights[c];
        for j in 0..2 {
            let sigma = small.variances[[c, j]].sqrt();
            let (mut p, mut m) = (small.clone(), small.clone());
            p.means[[c, j]] += h;
            m.means[[c, j]] -= h;
            let g_mu = (p.log_likelihood(x.view()) - m.log_likelihood(x.view())) / (2.0 * h);
            let (mut p, mut m) = (small.clone(), small.clone());
            p.variances[[c, j]] = (sigma + h).powi(2);
            m.variances[[c, j]] = (sigma - h).powi(2);
            let g_sigma = (p.log_likelihood(x.view()) - m.log_likelihood(x.view())) / (2.0 * h);
            let want = [sigma * g_mu / (n * w.sqrt()), sigma * g_sigma / (n * (2.0 * w).sqrt())];
            let got = [fv[4 * c + j], fv[4 * c + 2 + j]];
            for (g, w) in got.iter().zip(want) {
                fd_rel = fd_rel.max((g - w).abs() / w.abs().max(1e-6));
            }
        }
    }

    let mut norm_err = 0.0f64;
    for k in [1usize, 4, 16] {
        let g =
            GmmModel::new(Array1::from_elem(k, 1.0 / k as f64), gaussian(&mut r, k, 8), uniform(&mut r, k, 8) + 0.5)
                .map_err(|e| e.to_string())?;
        for _ in 0..25 {
            let e = encode_fv((gaussian(&mut r, 40, 8) * 2.0).view(), &g).map_err(|e| e.to_string())?;
            if !e.degenerate {
                norm_err = norm_err.max((e.values.dot(&e.values).sqrt() - 1.0).abs());
            }
        }
    }
    check(
        dim == 8192 && mean_block <= 1e-8 && fd_rel <= 1e-3 && norm_err <= 1e-8,
        format!("dim {dim}; mean block {mean_block:.1e}; FD rel err {fd_rel:.1e}; unit-norm err {norm_err:.1e}"),
    )
}

/// Regression values recorded from the reference build (accuracy %, seed 42).
const SHIFT_REFERENCE: [f64; 4] = [45.5, 74.0, 75.0, 89.0];

fn domain_shift_classification() -> Outcome {
    let seed = 42;
    let (s, t) = shifted_classes(&ShiftParams::default(), seed);
    let acc = |metric, adapt| {
        let cfg = ProtocolConfig { samples_per_class: SamplesPerClass::All, repetitions: 1, seed, metric, adapt };
        run_protocol(&s, &t, &cfg).map(|r| r.mean_accuracy).map_err(|e| e.to_string())
    };
    let ds = estimate_dim_mle(&s, 6, 12).map_err(|e| e.to_string())?.rounded;
    let dt = estimate_dim_mle(&t, 6, 12).map_err(|e| e.to_string())?.rounded;
    let base = acc(Metric::Euclidean, None)?;
    let sa = acc(Metric::SaSim, Some(AdaptMethod::Sa { source_dim: 10, target_dim: 10 }))?;
    let gfk = acc(Metric::GfkSim, Some(AdaptMethod::Gfk { dim: 10 }))?;
    let esa = acc(Metric::EsaDist, Some(AdaptMethod::Sa { source_dim: ds, target_dim: dt }))?;
    let got = [base, sa, gfk, esa];
    let regress = got.iter().zip(SHIFT_REFERENCE).all(|(a, b)| (a - b).abs() < 1e-9);
    check(
        esa - base >= 15.0 && sa - base >= 5.0 && gfk - base >= 5.0 && regress,
        format!(
            "NN {base:.1}%, SA(d=10) {sa:.1}%, GFK(d=10) {gfk:.1}%, ESA(d_s={ds}, d_t={dt}) {esa:.1}%; \
             matches recorded values: {regress}"
        ),
    )
}

fn interactive_retrieval() -> Outcome {
    let c = retrieval_corpus(&RetrievalParams::default(), 0);
    let arch = c.archive.cast::<f32>();
    let idx = RetrievalIndex::new(arch.ids().to_vec(), arch.rows().to_owned(), vec![true; arch.len()], None)
        .map_err(|e| e.to_string())?;
    let cfg = SimulationConfig {
        session: SessionConfig { relearn_every: Some(5), ..Default::default() },
        ..Default::default()
    };
    let rep =
        simulate_session(&idx, &c.archive_locations, &c.queries.cast::<f32>(), &cfg).map_err(|e| e.to_string())?;
    let drop = rep.max_curve_drop().unwrap_or(f64::INFINITY);
    check(
        cfg.repetitions == 10 && rep.post.mean >= 1.3 * rep.pre.mean && rep.post.mean > rep.naive.mean && drop <= 0.02,
        format!(
            "{} archive items, {} reps: pre {:.3}±{:.3}, post {:.3}±{:.3} ({:.2}×), naive {:.3}±{:.3}; \
             first model alone at its trigger {:.3}; latest trigger at {:?} queries, max curve drop after it {drop:.3}",
            idx.len(),
            cfg.repetitions,
            rep.pre.mean,
            rep.pre.std,
            rep.post.mean,
            rep.post.std,
            rep.post.mean / rep.pre.mean,
            rep.naive.mean,
            rep.naive.std,
            rep.trigger.mean,
            rep.last_trigger,
        ),
    )
}

fn rss_kib() -> u64 {
    let s = std::fs::read_to_string("/proc/self/status").unwrap_or_default();
    s.lines()
        .find(|l| l.starts_with("VmRSS:"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn performance_envelope() -> Outcome {
    let (n, dim, d_t) = (100_000usize, 512usize, 95usize);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("archive.feat");
    let mut r = rng(700);
    // Low-rank structure plus noise, written in chunks.
    let basis = random_orthonormal(&mut r, dim, 120).mapv(|v| v as f32);
    let ids: Vec<String> = (0..n).map(|i| format!("x{i:06}")).collect();
    let mut w = StoreWriter::create(&path, "fv", &serde_json::json!({}), dim, &ids, &vec![true; n], None)
        .map_err(|e| e.to_string())?;
    drop(ids);
    let mut sample = Vec::new();
    for start in (0..n).step_by(1000) {
        let z = gaussian(&mut r, 1000, 120).mapv(|v| v as f32);
        let rows = z.dot(&basis.t()) + gaussian(&mut r, 1000, dim).mapv(|v| v as f32 * 0.05);
        if start < 3000 {
            sample.push(rows.clone());
        }
        w.write_rows(rows.view()).map_err(|e| e.to_string())?;
    }
    w.finish().map_err(|e| e.to_string())?;
    let sample = ndarray::concatenate(Axis(0), &sample.iter().map(|a| a.view()).collect::<Vec<_>>()).unwrap();
    let queries = gaussian(&mut r, 2000, 120).mapv(|v| v as f32).dot(&basis.t()) * 1.1f32;
    let src = fit_pca_rows(sample.view(), d_t).map_err(|e| e.to_string())?;
    let tgt = fit_pca_rows(queries.view(), d_t).map_err(|e| e.to_string())?;
    let eig = tgt.eigenvalues.clone();
    let alignment =
        Arc::new(Alignment::new(learn_sa(&src, &tgt).map_err(|e| e.to_string())?, &eig).map_err(|e| e.to_string())?);

    let before = rss_kib();
    let idx = RetrievalIndex::adapted_compact(StoreReader::open(&path).map_err(|e| e.to_string())?, alignment)
        .map_err(|e| e.to_string())?;
    let grown_mib = rss_kib().saturating_sub(before) as f64 / 1024.0;
    let resident_mb = idx.resident_bytes() as f64 / 1e6;
    // The model grows with the ambient width; at 8192-wide Fisher vectors it adds
    // 4·(3·8192·95 + 95² + 4·8192) bytes.
    let at_fv_width_mb = (n * d_t * 4 + 4 * (3 * 8192 * d_t + d_t * d_t + 4 * 8192)) as f64 / 1e6;

    let mut times = Vec::new();
    for q in queries.rows().into_iter().take(41) {
        let t = Instant::now();
        let hits = idx.query_topk(q, 50).map_err(|e| e.to_string())?;
        times.push(t.elapsed().as_secs_f64());
        assert_eq!(hits.len(), 50);
    }
    times.sort_by(f64::total_cmp);
    let (median, worst) = (times[times.len() / 2], times[times.len() - 1]);
    check(
        worst < 0.03 && resident_mb < 350.0 && at_fv_width_mb < 350.0 && grown_mib < 350.0,
        format!(
            "{n} items at d_T={d_t}: query median {:.1} ms, max {:.1} ms; resident {resident_mb:.1} MB \
             (process grew {grown_mib:.1} MiB; {at_fv_width_mb:.1} MB with 8192-wide source vectors)",
            median * 1e3,
            worst * 1e3
        ),
    )
}

fn eraseek(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_eraseek"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("eraseek {args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "resolved-config.json"))
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let manifest = s(&descriptor_fixture(root, 6, 4, 3, 17));
    let fx = retrieval_fixture(root, &RetrievalParams { locations: 40, distractors: 400, ..Default::default() }, 17);
    let plane = root.join("plane.txt");
    write_text_matrix(&plane, &embedded_cube(600, 2, 10, 5));
    let run = |name: &str| s(&root.join(name));
    let (index, queries) = (s(&fx.index), s(&fx.queries));

    let stages: Vec<Vec<String>> = [
        vec![
            "train-codebook",
            "--manifest",
            &manifest,
            "--k",
            "16",
            "--search",
            "approximate",
            "--out",
            &run("codebook"),
        ],
        vec!["train-gmm", "--manifest", &manifest, "--era", "new", "--k", "4", "--out", &run("gmm")],
        vec![
            "encode",
            "--manifest",
            &manifest,
            "--scheme",
            "bow-tfidf",
            "--model",
            &format!("{}/codebook.model", run("codebook")),
            "--out",
            &run("bow"),
        ],
        vec![
            "encode",
            "--manifest",
            &manifest,
            "--scheme",
            "fv",
            "--era",
            "new",
            "--model",
            &format!("{}/gmm.model", run("gmm")),
            "--out",
            &run("fv-new"),
        ],
        vec![
            "encode",
            "--manifest",
            &manifest,
            "--scheme",
            "fv",
            "--era",
            "old",
            "--model",
            &format!("{}/gmm.model", run("gmm")),
            "--out",
            &run("fv-old"),
        ],
        vec![
            "fit-subspace",
            "--features",
            &format!("{}/features.feat", run("fv-new")),
            "--dim",
            "6",
            "--out",
            &run("pca"),
        ],
        vec!["estimate-dim", "--features", &s(&plane), "--method", "mle", "--out", &run("mle")],
        vec!["estimate-dim", "--features", &s(&plane), "--method", "gmst", "--out", &run("gmst")],
        vec!["estimate-dim", "--features", &s(&plane), "--method", "cdm", "--out", &run("cdm")],
        vec![
            "adapt",
            "--source",
            &format!("{}/features.feat", run("fv-new")),
            "--target",
            &format!("{}/features.feat", run("fv-old")),
            "--method",
            "sa",
            "--out",
            &run("sa"),
        ],
        vec![
            "adapt",
            "--source",
            &format!("{}/features.feat", run("fv-new")),
            "--target",
            &format!("{}/features.feat", run("fv-old")),
            "--method",
            "gfk",
            "--out",
            &run("gfk"),
        ],
        vec![
            "classify",
            "--source",
            &format!("{}/features.feat", run("fv-new")),
            "--target",
            &format!("{}/features.feat", run("fv-old")),
            "--metric",
            "sa-sim",
            "--model",
            &format!("{}/alignment.model", run("sa")),
            "--out",
            &run("classify"),
        ],
        vec![
            "eval",
            "--source",
            &format!("{}/features.feat", run("fv-new")),
            "--target",
            &format!("{}/features.feat", run("fv-old")),
            "--adapt",
            "esa",
            "--repetitions",
            "10",
            "--out",
            &run("eval"),
        ],
        vec!["index", "--features", &index, "--out", &run("index")],
        vec![
            "retrieve",
            "--index",
            &format!("{}/index.feat", run("index")),
            "--queries",
            &queries,
            "--out",
            &run("retrieve"),
        ],
        vec![
            "simulate-session",
            "--index",
            &index,
            "--queries",
            &queries,
            "--repetitions",
            "2",
            "--relearn-every",
            "5",
            "--out",
            &run("simulate"),
        ],
        vec![
            "report",
            "--eval",
            &run("eval"),
            "--retrieval",
            &run("retrieve"),
            "--simulation",
            &run("simulate"),
            "--out",
            &run("report"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    let mut checked = 0;
    let mut files = 0;
    for stage in &stages {
        let args: Vec<&str> = stage.iter().map(String::as_str).collect();
        eraseek(&args)?;
        let out = Path::new(stage.last().unwrap());
        let again = out.with_extension("rerun");
        eraseek(&["--config", &s(&out.join("resolved-config.json")), "--out", &s(&again)])?;
        let (a, b) = (artifacts(out), artifacts(&again));
        if a.is_empty() || a != b {
            return Err(format!("{} artifacts differ on re-run", stage[0]));
        }
        checked += 1;
        files += a.len();
    }

    // Session replay from the event log.
    let c = &fx.corpus;
    let arch = c.archive.cast::<f32>();
    let raw = RetrievalIndex::new(arch.ids().to_vec(), arch.rows().to_owned(), vec![true; arch.len()], None)
        .map_err(|e| e.to_string())?;
    let queries = c.queries.cast::<f32>();
    let labels = queries.labels().unwrap().to_vec();
    let cfg = SessionConfig { relearn_every: Some(5), ..Default::default() };
    let log_path = root.join("session.jsonl");
    let (mut log, _) = EventLog::open(&log_path).map_err(|e| e.to_string())?;
    let mut session = Session::<f32>::new(cfg.clone());
    let mut current = raw.clone();
    for q in 0..50 {
        let qid = queries.ids()[q].clone();
        session = session.issue_query(&qid, queries.row(q)).map_err(|e| e.to_string())?;
        log.append(SessionEvent::Query {
            query_id: qid.clone(),
            vector: queries.row(q).iter().map(|v| f64::from(*v)).collect(),
        })
        .map_err(|e| e.to_string())?;
        let hits = current.query_topk(queries.row(q), 50).map_err(|e| e.to_string())?;
        let rel: Vec<String> = (0..c.archive.len())
            .filter(|&i| c.archive_locations[i].as_deref() == Some(labels[q].as_str()))
            .map(|i| c.archive.ids()[i].clone())
            .collect();
        let mut picks: Vec<String> = hits.iter().map(|h| h.id.clone()).filter(|id| rel.contains(id)).take(3).collect();
        for id in &rel {
            if picks.len() < 3 && !picks.contains(id) {
                picks.push(id.clone());
            }
        }
        let before = session.model_hash.clone();
        let (next, events) = session
            .apply_feedback(&raw, &FeedbackRound { query_id: qid, selected_ids: picks, round: 0 })
            .map_err(|e| e.to_string())?;
        log.append_all(events).map_err(|e| e.to_string())?;
        session = next;
        if session.model_hash != before {
            current = raw
                .adapted(Arc::clone(session.alignment.as_ref().unwrap()), Default::default())
                .map_err(|e| e.to_string())?;
        }
    }
    drop(log);
    let replayed = replay(&raw, cfg, &read_log(&log_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (a, b) = match (&session.alignment, &replayed.alignment) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err("session never adapted".into()),
    };
    let bits = |m: &Array2<f32>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same_m = bits(&a.model.m) == bits(&b.model.m) && bits(&a.model.x_a) == bits(&b.model.x_a);
    let same_hash = model_hash(a) == model_hash(b) && replayed.model_hash == session.model_hash;
    check(
        same_m && same_hash,
        format!(
            "{checked} stages re-run from resolved config, {files} artifacts byte-identical; \
             replay of {} rounds reproduces M ({}×{}) bit-exactly: {same_m}",
            session.round(),
            a.model.m.nrows(),
            a.model.m.ncols()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("GFK closed form", gfk_closed_form),
        ("SA optimality", sa_optimality),
        ("intrinsic dimensionality", intrinsic_dimension),
        ("Fisher vectors", fisher_vectors),
        ("domain-shift classification", domain_shift_classification),
        ("interactive retrieval", interactive_retrieval),
        ("performance envelope", performance_envelope),
        ("determinism", determinism),
    ];
    // The memory reading is cleanest before other work has grown the heap.
    let mut results: Vec<Option<Outcome>> = vec![None; criteria.len()];
    for i in std::iter::once(6).chain((0..criteria.len()).filter(|&i| i != 6)) {
        let f = criteria[i].1;
        results[i] = Some(std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into())));
    }
    let mut failed = 0;
    for (i, ((name, _), r)) in criteria.iter().zip(results).enumerate() {
        match r.unwrap() {
            Ok(d) => println!("PASS {} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
