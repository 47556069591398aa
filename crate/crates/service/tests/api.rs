use std::collections::HashMap;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use figmine_core::corpus::{FigureRecord, Manifest, ObjectStore, PaperRecord};
use figmine_core::geometry::Rect;
use figmine_core::search::{SearchEngine, VerificationLog};
use figmine_core::{synth, FigureLabel};
use figmine_service::{router, AppState, ServiceConfig, VERIFICATION_LOG_FILE};

struct Fixture {
    dir: tempfile::TempDir,
    app: Router,
}

fn figure(id: &str, paper: &str, label: FigureLabel, caption: Option<&str>) -> FigureRecord {
    FigureRecord {
        figure_id: id.into(),
        paper_id: paper.into(),
        image_key: format!("{id}.png"),
        caption: caption.map(String::from),
        width: 200,
        height: 100,
        label,
        class_probs: vec![],
        gate_prob: None,
        parent_figure_id: None,
        bbox_in_parent: None,
    }
}

fn small_manifest() -> Manifest {
    let mut a = PaperRecord::new("pa", "Cell", 2012, 8);
    a.title = "Virus entry".into();
    a.alef_score = Some(0.3);
    let mut b = PaperRecord::new("pb", "Nature", 2013, 6);
    b.title = "Protein folding".into();
    b.alef_score = Some(0.1);
    let mut m = Manifest::default();
    m.papers = vec![a, b];
    m.figures = vec![
        figure("a1", "pa", FigureLabel::Diagram, Some("Schematic of the virus life cycle")),
        figure("a2", "pa", FigureLabel::Plot, Some("Viral load curves")),
        figure("a3", "pa", FigureLabel::Multichart, Some("Virus panels")),
        figure("a4", "pa", FigureLabel::Photo, None),
        figure("b1", "pb", FigureLabel::Diagram, Some("Folding pathway of a virus capsid protein")),
    ];
    let mut child = figure("a3-0", "pa", FigureLabel::Plot, None);
    child.parent_figure_id = Some("a3".into());
    child.bbox_in_parent = Some(Rect::new(10, 10, 80, 60));
    m.figures.push(child);
    m.sort();
    m
}

fn fixture(m: Manifest) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let store = Manifest::image_store(dir.path()).unwrap();
    store.put("a1.png", b"\x89PNG fake").unwrap();
    let config = ServiceConfig {
        manifest_dir: dir.path().to_path_buf(),
        scores: None,
        verification_log: None,
        cors_origins: vec!["http://ui.example".into()],
        addr: "127.0.0.1:0".parse().unwrap(),
    };
    let state = AppState::load(&config).unwrap();
    let app = router(state, &config.cors_origins).unwrap();
    Fixture { dir, app }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, headers, body)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, _, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post_json(app: &Router, uri: &str, v: Value) -> (StatusCode, Value) {
    let req = Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())).unwrap();
    let (s, _, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn ids(v: &Value) -> Vec<String> {
    v["results"].as_array().unwrap().iter().map(|r| r["figure_id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn health() {
    let f = fixture(small_manifest());
    let (s, v) = get_json(&f.app, "/healthz").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["figures"], 6);
}

#[tokio::test]
async fn search_filters_and_orders() {
    let f = fixture(small_manifest());
    let (s, v) = get_json(&f.app, "/search?q=virus").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ids(&v), ["a1", "a2", "a3", "a3-0", "a4", "b1"]);
    assert_eq!(v["total"], 6);
    let (_, v) = get_json(&f.app, "/search?q=virus&types=diagram").await;
    assert_eq!(ids(&v), ["a1", "b1"]);
    assert_eq!(v["results"][0]["label"], "diagram");
    assert_eq!(v["results"][0]["alef_score"], 0.3);
    assert_eq!(v["results"][0]["paper"]["journal"], "Cell");
    let (_, v) = get_json(&f.app, "/search?q=capsid%20protein").await;
    assert_eq!(ids(&v), ["b1"]);
    let (_, v) = get_json(&f.app, "/search?q=capsid%20schematic&mode=any").await;
    assert_eq!(ids(&v), ["a1", "b1"]);
}

#[tokio::test]
async fn search_errors() {
    let f = fixture(small_manifest());
    for uri in ["/search?q=", "/search", "/search?q=virus&types=banana", "/search?q=virus&size=0", "/search?q=x&mode=fuzzy"] {
        let (s, v) = get_json(&f.app, uri).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{uri}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn pagination_concatenates_to_full_list() {
    let f = fixture(synth::catalog(100, 4, 2));
    let (_, full) = get_json(&f.app, "/search?q=cell&size=200").await;
    let total = full["total"].as_u64().unwrap() as usize;
    assert!(total > 20 && total <= 200, "{total}");
    let mut walked = Vec::new();
    for page in 0.. {
        let (_, v) = get_json(&f.app, &format!("/search?q=cell&size=10&page={page}")).await;
        let got = ids(&v);
        if got.is_empty() {
            break;
        }
        walked.extend(got);
    }
    assert_eq!(walked, ids(&full));
    // every hit resolves
    for id in walked.iter().take(25) {
        let (s, _) = get_json(&f.app, &format!("/figures/{id}")).await;
        assert_eq!(s, StatusCode::OK);
    }
}

#[tokio::test]
async fn figure_detail_contract() {
    let f = fixture(small_manifest());
    let (s, v) = get_json(&f.app, "/figures/a1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["paper"]["title"], "Virus entry");
    assert_eq!(v["caption"], "Schematic of the virus life cycle");
    // pa has a1..a4 plus the child of a3
    assert_eq!(v["siblings"].as_array().unwrap().len(), 4);
    let (_, v) = get_json(&f.app, "/figures/a3-0").await;
    assert_eq!(v["parent_figure_id"], "a3");
    assert_eq!(v["bbox_in_parent"], json!({"x": 10, "y": 10, "w": 80, "h": 60}));
    let (_, v) = get_json(&f.app, "/figures/a3").await;
    assert_eq!(v["children"][0]["figure_id"], "a3-0");
    let (s, v) = get_json(&f.app, "/figures/missing").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("missing"));
}

#[tokio::test]
async fn images() {
    let f = fixture(small_manifest());
    let (s, h, b) = call(&f.app, Request::get("/figures/a1/image").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h[header::CONTENT_TYPE], "image/png");
    assert_eq!(b, b"\x89PNG fake");
    let (s, _, _) = call(&f.app, Request::get("/figures/a2/image").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn verifications_append_and_dedupe() {
    let f = fixture(small_manifest());
    let body = json!({"figure_id": "a1", "label": "photo", "client_token": "t1"});
    let (s, v) = post_json(&f.app, "/verifications", body.clone()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v, json!({"accepted": true, "appended": true}));
    let (s, v) = post_json(&f.app, "/verifications", body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["appended"], false);
    let (s, _) = post_json(&f.app, "/verifications", json!({"figure_id": "a1", "label": "banana", "client_token": "t1"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post_json(&f.app, "/verifications", json!({"figure_id": "zz", "label": "plot", "client_token": "t1"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = post_json(&f.app, "/verifications", json!({"figure_id": "a1", "proposed_label": "multichart", "client_token": "t2"})).await;
    assert_eq!(s, StatusCode::CREATED);

    let log = std::fs::read_to_string(f.dir.path().join(VERIFICATION_LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 2);
    // machine label untouched
    let (_, v) = get_json(&f.app, "/figures/a1").await;
    assert_eq!(v["label"], "diagram");
    let (_, v) = get_json(&f.app, "/healthz").await;
    assert_eq!(v["verifications"], 2);
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let f = fixture(small_manifest());
    let req = Request::get("/healthz").header(header::ORIGIN, "http://ui.example").body(Body::empty()).unwrap();
    let (_, h, _) = call(&f.app, req).await;
    assert_eq!(h[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.example");
    let req = Request::get("/healthz").header(header::ORIGIN, "http://other.example").body(Body::empty()).unwrap();
    let (_, h, _) = call(&f.app, req).await;
    assert!(!h.contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}

#[tokio::test]
async fn swapped_engine_serves_new_index() {
    let m = small_manifest();
    let state = AppState::new(SearchEngine::new(m.clone(), &HashMap::new(), None), VerificationLog::in_memory());
    let app = router(state.clone(), &[]).unwrap();
    let (_, v) = get_json(&app, "/search?q=capsid").await;
    assert_eq!(ids(&v), ["b1"]);
    let mut m2 = m;
    m2.figures.retain(|f| f.figure_id != "b1");
    state.swap(SearchEngine::new(m2, &HashMap::new(), None));
    let (_, v) = get_json(&app, "/search?q=capsid").await;
    assert!(ids(&v).is_empty());
}
