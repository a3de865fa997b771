use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sigproof_core::corpus::{load_image_bytes, preprocess, PreprocessConfig};
use sigproof_core::evidence::{verify, EvidenceReport};
use sigproof_core::features::{extract, Channel, FeatureConfig};
use sigproof_core::synth::{generate, SynthConfig, SynthCorpus};
use sigproof_core::ubm::{Origin, UniverseModel};
use sigproof_service::{router, AppState, ErrorBody, ServiceConfig, UbmRegistry, VERSION_HEADER};

struct Harness {
    app: Router,
    state: Arc<AppState>,
    synth: SynthCorpus,
    ubm: UniverseModel,
    _dir: tempfile::TempDir,
}

fn toy_synth() -> SynthCorpus {
    generate(&SynthConfig {
        writers: 2,
        genuine: 3,
        forgeries: 1,
        ubm_members: 5,
        seed: 5,
    })
}

fn toy_ubm(synth: &SynthCorpus) -> UniverseModel {
    let (pre, cfg) = (PreprocessConfig::default(), FeatureConfig::checked_in());
    let members = synth
        .ubm
        .iter()
        .map(|s| extract(&preprocess(&s.image().unwrap(), &pre).unwrap(), &Channel::HANDCRAFTED, &cfg).unwrap())
        .collect();
    UniverseModel::new(members, Channel::HANDCRAFTED, Origin::Synthetic, "toy").unwrap()
}

fn harness_with(tweak: impl FnOnce(&mut ServiceConfig)) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServiceConfig::new(dir.path());
    tweak(&mut cfg);
    let synth = toy_synth();
    let ubm = toy_ubm(&synth);
    let mut registry = UbmRegistry::default();
    registry.insert("toy", ubm.clone());
    let state = Arc::new(AppState::new(&cfg, registry).unwrap());
    Harness {
        app: router(state.clone(), None),
        state,
        synth,
        ubm,
        _dir: dir,
    }
}

fn harness() -> Harness {
    harness_with(|_| {})
}

struct Reply {
    status: StatusCode,
    version: Option<u64>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }

    fn error(&self) -> ErrorBody {
        serde_json::from_slice(&self.body).unwrap()
    }

    fn report(&self) -> EvidenceReport {
        serde_json::from_slice(&self.body).unwrap()
    }
}

impl Harness {
    async fn call(&self, method: &str, uri: &str, body: Body) -> Reply {
        let req = Request::builder().method(method).uri(uri).body(body).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let version = resp
            .headers()
            .get(VERSION_HEADER)
            .map(|v| v.to_str().unwrap().parse().unwrap());
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, version, body }
    }

    async fn create(&self) -> String {
        let r = self.call("POST", "/api/cases", Body::empty()).await;
        assert_eq!(r.status, StatusCode::CREATED);
        r.json()["case_id"].as_str().unwrap().to_string()
    }

    async fn upload(&self, case: &str, role: &str, png: Vec<u8>) -> Reply {
        self.call("POST", &format!("/api/cases/{case}/specimens?role={role}"), Body::from(png))
            .await
    }

    fn png(&self, i: usize) -> Vec<u8> {
        self.synth.specimens[i].png_bytes().unwrap()
    }

    async fn evaluate(&self, case: &str) -> Reply {
        self.call("POST", &format!("/api/cases/{case}/evaluate"), Body::empty()).await
    }

    async fn report(&self, case: &str) -> Reply {
        self.call("GET", &format!("/api/cases/{case}/report"), Body::empty()).await
    }

    async fn set_config(&self, case: &str, cfg: Value) -> Reply {
        self.call("PUT", &format!("/api/cases/{case}/config"), Body::from(cfg.to_string()))
            .await
    }
}

#[tokio::test]
async fn one_reference_then_two() {
    let h = harness();
    let case = h.create().await;
    let q = h.upload(&case, "questioned", h.png(1)).await;
    assert_eq!(q.status, StatusCode::CREATED);
    assert_eq!(h.upload(&case, "reference", h.png(0)).await.status, StatusCode::CREATED);

    let first = h.evaluate(&case).await;
    assert_eq!(first.status, StatusCode::OK);
    let report = first.report();
    assert_eq!(report.per_channel.len(), 7);
    for ev in report.per_channel.values() {
        assert!((0.0..=1.0).contains(&ev.p_u));
        assert!(ev.p_r.is_none());
    }
    assert!(!String::from_utf8_lossy(&first.body).contains("\"p_r\""));
    assert_eq!(report.curves.len(), 7);
    assert_eq!(report.ubm.size, 5);

    let stored = h.report(&case).await;
    assert_eq!(stored.status, StatusCode::OK);
    assert_eq!(stored.report(), report);
    assert_eq!(stored.version, first.version);

    let added = h.upload(&case, "reference", h.png(2)).await;
    assert!(added.version > first.version);
    let gone = h.report(&case).await;
    assert_eq!(gone.status, StatusCode::NOT_FOUND);
    assert_eq!(gone.error().code, "REPORT_NOT_FOUND");

    let second = h.evaluate(&case).await.report();
    assert_eq!(second.references.len(), 2);
    assert!(second.per_channel.values().all(|ev| ev.p_r.is_some() && ev.ref_fit.is_some()));
    assert!(second.curves.values().all(|c| c.ref_pdf.as_ref().is_some_and(|p| p.len() == 256)));
}

#[tokio::test]
async fn report_matches_direct_verification() {
    let h = harness();
    let case = h.create().await;
    h.upload(&case, "questioned", h.png(4)).await;
    h.upload(&case, "reference", h.png(0)).await;
    h.upload(&case, "reference", h.png(1)).await;
    let served = h.evaluate(&case).await.report();

    let (pre, cfg) = (PreprocessConfig::default(), FeatureConfig::checked_in());
    let feats = |i: usize, role: &str, ordinal: u32| {
        let img = load_image_bytes(&h.png(i)).unwrap();
        let mut set = extract(&preprocess(&img, &pre).unwrap(), &Channel::HANDCRAFTED, &cfg).unwrap();
        set.writer_id = role.into();
        set.specimen_index = ordinal;
        set
    };
    let refs = vec![feats(0, "reference", 2), feats(1, "reference", 3)];
    let direct = verify(&feats(4, "questioned", 1), &refs, &h.ubm, &Default::default()).unwrap();
    assert_eq!(served, direct);
}

#[tokio::test]
async fn preconditions_and_errors() {
    let h = harness();
    let case = h.create().await;

    let r = h.evaluate(&case).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "MISSING_QUESTIONED"));
    h.upload(&case, "questioned", h.png(0)).await;
    let r = h.evaluate(&case).await;
    assert_eq!(r.error().code, "NO_REFERENCES");

    let r = h.evaluate("0123456789abcdef").await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::NOT_FOUND, "CASE_NOT_FOUND"));
    assert_eq!(r.error().detail["case_id"], "0123456789abcdef");

    let r = h.upload(&case, "suspect", h.png(0)).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::BAD_REQUEST, "INVALID_ROLE"));

    let r = h.upload(&case, "reference", b"not an image".to_vec()).await;
    assert_eq!(r.error().code, "UNSUPPORTED_FORMAT");

    let r = h.call("DELETE", &format!("/api/cases/{case}/specimens/s99"), Body::empty()).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::NOT_FOUND, "SPECIMEN_NOT_FOUND"));

    let r = h.set_config(&case, json!({ "channels": ["ext:d1"] })).await;
    assert_eq!(r.error().code, "INVALID_CONFIG");
    let r = h.set_config(&case, json!({ "ubm_id": "gpds" })).await;
    assert_eq!(r.error().code, "UBM_NOT_LOADED");
    let r = h.set_config(&case, json!({ "metric": "euclid" })).await;
    assert_eq!(r.error().code, "INVALID_CONFIG");
    let r = h.set_config(&case, json!({ "channels": ["g"], "weights": "default-dl" })).await;
    assert_eq!(r.error().code, "WEIGHT_MISMATCH");
}

#[tokio::test]
async fn evaluate_without_ubm() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(&ServiceConfig::new(dir.path()), UbmRegistry::default()).unwrap());
    let h = Harness {
        app: router(state.clone(), None),
        state,
        synth: toy_synth(),
        ubm: toy_ubm(&toy_synth()),
        _dir: dir,
    };
    let case = h.create().await;
    h.upload(&case, "questioned", h.png(0)).await;
    h.upload(&case, "reference", h.png(1)).await;
    let r = h.evaluate(&case).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "UBM_NOT_LOADED"));
    let ubms = h.call("GET", "/api/ubms", Body::empty()).await;
    assert_eq!(ubms.json(), json!([]));
}

#[tokio::test]
async fn upload_limits() {
    let h = harness_with(|c| c.max_upload_bytes = 2_000);
    let case = h.create().await;
    let big = h.png(0);
    assert!(big.len() > 2_000);
    let r = h.upload(&case, "questioned", big).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::PAYLOAD_TOO_LARGE, "PAYLOAD_TOO_LARGE"));

    let h = harness_with(|c| c.max_side = 64);
    let case = h.create().await;
    let r = h.upload(&case, "questioned", h.png(0)).await;
    assert_eq!(r.error().code, "IMAGE_TOO_LARGE");
    assert_eq!(r.error().detail["limit"], 64);
    let view = h.call("GET", &format!("/api/cases/{case}"), Body::empty()).await.json();
    assert!(view["questioned"].is_null());
}

#[tokio::test]
async fn every_mutation_clears_the_report() {
    let h = harness();
    let case = h.create().await;
    h.upload(&case, "questioned", h.png(0)).await;
    let r1 = h.upload(&case, "reference", h.png(1)).await.json()["specimen_id"].as_str().unwrap().to_string();
    h.upload(&case, "reference", h.png(2)).await;

    let mutations: Vec<(&str, String, Body)> = vec![
        ("PUT", format!("/api/cases/{case}/config"), Body::from(json!({ "metric": "dtw" }).to_string())),
        ("POST", format!("/api/cases/{case}/specimens?role=questioned"), Body::from(h.png(4))),
        ("DELETE", format!("/api/cases/{case}/specimens/{r1}"), Body::empty()),
        ("POST", format!("/api/cases/{case}/specimens?role=reference"), Body::from(h.png(1))),
    ];
    let mut last_version = 0;
    for (method, uri, body) in mutations {
        let evaluated = h.evaluate(&case).await;
        assert_eq!(evaluated.status, StatusCode::OK, "{uri}");
        assert_eq!(h.report(&case).await.status, StatusCode::OK);
        let m = h.call(method, &uri, body).await;
        assert!(m.status.is_success(), "{method} {uri}: {:?}", String::from_utf8_lossy(&m.body));
        let v = m.version.unwrap();
        assert!(v > last_version);
        last_version = v;
        assert_eq!(h.report(&case).await.status, StatusCode::NOT_FOUND, "{method} {uri}");
    }
    let report = h.evaluate(&case).await.report();
    assert_eq!(report.metric.to_string(), "dtw");
    assert_eq!(report.questioned.specimen, 4);
    let view = h.call("GET", &format!("/api/cases/{case}"), Body::empty()).await.json();
    assert_eq!(view["references"].as_array().unwrap().len(), 2);
    assert_eq!(view["case_version"], last_version);
    assert_eq!(view["has_report"], true);
}

#[tokio::test]
async fn reads_are_idempotent_and_evaluation_is_cached() {
    let h = harness();
    let case = h.create().await;
    h.upload(&case, "questioned", h.png(0)).await;
    h.upload(&case, "reference", h.png(1)).await;
    h.upload(&case, "reference", h.png(2)).await;
    let a = h.evaluate(&case).await;
    let before = std::fs::read(h._dir.path().join("cases").join(&case).join("case.json")).unwrap();
    let (r1, r2) = (h.report(&case).await, h.report(&case).await);
    assert_eq!(r1.body, r2.body);
    assert_eq!(r1.version, a.version);
    h.call("GET", &format!("/api/cases/{case}"), Body::empty()).await;
    let after = std::fs::read(h._dir.path().join("cases").join(&case).join("case.json")).unwrap();
    assert_eq!(before, after);

    let b = h.evaluate(&case).await;
    assert_eq!(a.body, b.body);
    assert_eq!(h.state.engine.cached_enrollments(), 1);

    let img = h.call("GET", &format!("/api/cases/{case}/specimens/s1"), Body::empty()).await;
    assert_eq!(img.body, h.png(0));
}

#[tokio::test]
async fn concurrent_cases_do_not_interleave() {
    let h = Arc::new(harness());
    let mut cases = Vec::new();
    for (q, refs) in [(0usize, [1usize, 2]), (3, [4, 5])] {
        let case = h.create().await;
        h.upload(&case, "questioned", h.png(q)).await;
        for r in refs {
            h.upload(&case, "reference", h.png(r)).await;
        }
        cases.push(case);
    }
    let serial: Vec<Vec<u8>> = {
        let mut out = Vec::new();
        for c in &cases {
            out.push(h.evaluate(c).await.body);
        }
        out
    };
    let tasks: Vec<_> = (0..6)
        .map(|k| {
            let (h, c) = (h.clone(), cases[k % 2].clone());
            tokio::spawn(async move { h.evaluate(&c).await.body })
        })
        .collect();
    for (k, t) in tasks.into_iter().enumerate() {
        assert_eq!(t.await.unwrap(), serial[k % 2]);
    }
    assert_ne!(serial[0], serial[1]);
}

#[tokio::test]
async fn cases_persist_across_restarts() {
    let h = harness();
    let case = h.create().await;
    h.upload(&case, "questioned", h.png(0)).await;
    h.upload(&case, "reference", h.png(1)).await;
    let report = h.evaluate(&case).await.report();

    let mut registry = UbmRegistry::default();
    registry.insert("toy", h.ubm.clone());
    let state = Arc::new(AppState::new(&ServiceConfig::new(h._dir.path()), registry).unwrap());
    let again = Harness {
        app: router(state.clone(), None),
        state,
        synth: toy_synth(),
        ubm: h.ubm.clone(),
        _dir: tempfile::tempdir().unwrap(),
    };
    assert_eq!(again.report(&case).await.report(), report);
    let ubms = again.call("GET", "/api/ubms", Body::empty()).await.json();
    assert_eq!(ubms[0]["ubm_id"], "toy");
    assert_eq!(ubms[0]["size"], 5);
    assert_eq!(ubms[0]["origin"], "synthetic");
    assert_eq!(ubms[0]["channels"].as_array().unwrap().len(), 7);
}

#[test]
fn registry_loads_ubm_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ubm = toy_ubm(&toy_synth());
    ubm.save(&dir.path().join("toy.jsonl")).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let reg = UbmRegistry::load_dir(dir.path()).unwrap();
    assert_eq!(reg.describe().len(), 1);
    assert_eq!(reg.default_id(), Some("toy"));
    assert_eq!(reg.get("toy").unwrap().ubm().size(), 5);
}
