use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sibyl_core::dataio::generate_demo_corpus;
use sibyl_core::engine::{ContributionQuery, ContributionView, Engine, EngineConfig};
use sibyl_core::model::RiskScore;
use sibyl_core::present::PresentedKind;
use sibyl_core::service::{router, ServiceConfig};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    engine: Arc<Engine>,
}

fn fixture(review_mode: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let paths = generate_demo_corpus(150, 20, 9).unwrap().write_to(dir.path()).unwrap();
    let engine = Engine::open(&paths, EngineConfig { review_mode, importance_repeats: 3, seed: 42 }).unwrap();
    Fixture { _dir: dir, engine: Arc::new(engine) }
}

fn app(f: &Fixture) -> Router {
    router(f.engine.clone(), &ServiceConfig::default())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap()
}

#[tokio::test]
async fn payloads_equal_direct_engine_calls() {
    let f = fixture(true);
    let app = app(&f);
    let e = &f.engine;
    let id = "C00010";

    assert_eq!(call(&app, "GET", "/api/v1/model", None).await.1, to_json(&e.model_info()));
    assert_eq!(call(&app, "GET", "/api/v1/importance", None).await.1, to_json(e.importance()));
    assert_eq!(call(&app, "GET", &format!("/api/v1/cases/{id}"), None).await.1, to_json(&e.case_detail(id).unwrap()));
    assert_eq!(call(&app, "GET", &format!("/api/v1/cases/{id}/flips"), None).await.1, to_json(&e.flips(id).unwrap()));
    assert_eq!(
        call(&app, "GET", "/api/v1/cases?offset=10&limit=7", None).await.1,
        to_json(&e.case_list(10, 7).unwrap())
    );
    for view in [ContributionView::Top, ContributionView::All, ContributionView::Split] {
        let name = to_json(&view);
        let uri = format!("/api/v1/cases/{id}/contributions?view={}", name.as_str().unwrap());
        let q = ContributionQuery { view, ..Default::default() };
        assert_eq!(call(&app, "GET", &uri, None).await.1, to_json(&e.contributions(id, &q).unwrap()));
    }
    let q = ContributionQuery {
        view: ContributionView::All,
        query: "child".into(),
        categories: ["DG".to_string(), "HH".to_string()].into(),
        ..Default::default()
    };
    let (_, filtered) = call(&app, "GET", &format!("/api/v1/cases/{id}/contributions?view=all&query=CHILD&categories=DG,HH"), None).await;
    assert_eq!(filtered, to_json(&e.contributions(id, &q).unwrap()));
    assert!(filtered["matched"].as_u64().unwrap() < filtered["total_factors"].as_u64().unwrap());
    for s in [1u8, 7, 20] {
        let uri = format!("/api/v1/distributions/{s}");
        let want = e.distributions(RiskScore::new(s).unwrap(), None).unwrap();
        assert_eq!(call(&app, "GET", &uri, None).await.1, to_json(&want));
    }
    assert_eq!(
        call(&app, "GET", &format!("/api/v1/cases/{id}/similar?k=5"), None).await.1,
        to_json(&e.similar(id, Some(5)).unwrap())
    );
}

#[tokio::test]
async fn default_contributions_show_ten_rows() {
    let f = fixture(false);
    let (status, body) = call(&app(&f), "GET", "/api/v1/cases/C00001/contributions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["rows"].as_array().unwrap().len(), 10);
    let (_, split) = call(&app(&f), "GET", "/api/v1/cases/C00001/contributions?view=split", None).await;
    assert!(split["risk"].as_array().unwrap().iter().all(|r| r["contribution"].as_f64().unwrap() > 0.0));
    assert!(split["protective"].as_array().unwrap().iter().all(|r| r["contribution"].as_f64().unwrap() < 0.0));
}

#[tokio::test]
async fn error_contract() {
    let f = fixture(false);
    let app = app(&f);
    let cases = [
        ("GET", "/api/v1/cases/nope", None, 404, "CASE_NOT_FOUND"),
        ("GET", "/api/v1/cases/nope/contributions", None, 404, "CASE_NOT_FOUND"),
        ("GET", "/api/v1/cases/C00001/contributions?view=sideways", None, 400, "BAD_QUERY"),
        ("GET", "/api/v1/cases/C00001/contributions?top=abc", None, 400, "BAD_QUERY"),
        ("GET", "/api/v1/cases?limit=0", None, 400, "BAD_QUERY"),
        ("GET", "/api/v1/distributions/21", None, 400, "SCORE_OUT_OF_RANGE"),
        ("GET", "/api/v1/distributions/0", None, 400, "SCORE_OUT_OF_RANGE"),
        ("GET", "/api/v1/distributions/ten", None, 400, "SCORE_OUT_OF_RANGE"),
        ("GET", "/api/v1/distributions/3?factors=NOPE", None, 400, "BAD_QUERY"),
        ("GET", "/api/v1/cases/C00001/similar", None, 404, "FEATURE_DISABLED"),
        ("GET", "/api/v1/unknown", None, 404, "NOT_FOUND"),
        ("POST", "/api/v1/cases/C00001/whatif", Some(json!({"changes": []})), 422, "INVALID_CHANGE"),
        ("POST", "/api/v1/cases/C00001/whatif", Some(json!({"changes": [{"factor": "NOPE", "value": 1}]})), 422, "INVALID_CHANGE"),
        ("POST", "/api/v1/cases/C00001/whatif", Some(json!({"changes": [{"factor": "CHILD HAS SIBLINGS", "value": 3}]})), 422, "INVALID_CHANGE"),
        ("POST", "/api/v1/cases/C00001/whatif", Some(json!({"oops": true})), 400, "BAD_REQUEST"),
        ("POST", "/api/v1/cases/nope/whatif", Some(json!({"changes": []})), 404, "CASE_NOT_FOUND"),
    ];
    for (method, uri, body, status, code) in cases {
        let (got, b) = call(&app, method, uri, body).await;
        assert_eq!(got.as_u16(), status, "{method} {uri}: {b}");
        assert_eq!(b["code"], code, "{method} {uri}");
        assert_eq!(b["status"], status);
        assert!(b["message"].is_string());
    }
}

#[tokio::test]
async fn whatif_limits_and_zero_weight() {
    let f = fixture(false);
    let app = app(&f);
    let e = &f.engine;
    let booleans: Vec<_> = e.schema().factors().iter().filter(|p| p.kind == PresentedKind::Binary).collect();
    let five: Vec<Value> = booleans.iter().take(5).map(|p| json!({"factor": p.display_name, "value": true})).collect();
    let (status, body) = call(&app, "POST", "/api/v1/cases/C00002/whatif", Some(json!({"changes": five}))).await;
    assert_eq!((status.as_u16(), body["code"].as_str()), (422, Some("TOO_MANY_CHANGES")));
    let (status, _) = call(&app, "POST", "/api/v1/cases/C00002/whatif", Some(json!({"changes": five[..4]}))).await;
    assert_eq!(status, StatusCode::OK);

    let zero = booleans
        .iter()
        .find(|p| e.model().weight(&p.sources[0]) == Some(0.0))
        .expect("demo model has a zero-weight Boolean");
    let case = e.case("C00002").unwrap();
    let flipped = case.values[zero.sources[0].as_str()] == 0.0;
    let (status, body) = call(
        &app,
        "POST",
        "/api/v1/cases/C00002/whatif",
        Some(json!({"changes": [{"factor": zero.display_name, "value": flipped}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["new_score"], body["old_score"]);
    assert_eq!(body["direction"], "unchanged");

    let (_, flips) = call(&app, "GET", "/api/v1/cases/C00002/flips", None).await;
    assert_eq!(flips["rows"].as_array().unwrap().len(), booleans.len());
}

#[tokio::test]
async fn responses_do_not_depend_on_request_order() {
    let f = fixture(true);
    let uris = [
        "/api/v1/importance",
        "/api/v1/cases/C00003/contributions?view=split",
        "/api/v1/distributions/12",
        "/api/v1/cases/C00004/similar?k=2",
        "/api/v1/cases/C00003/flips",
    ];
    let mut alone = Vec::new();
    for u in uris {
        alone.push(call(&app(&f), "GET", u, None).await.1);
    }
    let shared = app(&f);
    let _ = call(&shared, "POST", "/api/v1/cases/C00003/whatif", Some(json!({"changes": [{"factor": "PARENT IS SINGLE", "value": true}]}))).await;
    for (u, want) in uris.iter().zip(&alone).rev() {
        assert_eq!(&call(&shared, "GET", u, None).await.1, want, "{u}");
    }
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let a = shared.clone();
            let u = uris[i % uris.len()];
            tokio::spawn(async move { (u, call(&a, "GET", u, None).await.1) })
        })
        .collect();
    for h in handles {
        let (u, body) = h.await.unwrap();
        let i = uris.iter().position(|x| *x == u).unwrap();
        assert_eq!(body, alone[i]);
    }
}

#[tokio::test]
async fn cors_origin_is_configurable() {
    let f = fixture(false);
    let app = router(
        f.engine.clone(),
        &ServiceConfig { cors_origin: Some("http://localhost:5173".into()), static_dir: None },
    );
    let req = Request::get("/api/v1/model")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
}

#[tokio::test]
async fn static_ui_served_when_present() {
    let f = fixture(false);
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<h1>ui</h1>").unwrap();
    let app = router(f.engine.clone(), &ServiceConfig { cors_origin: None, static_dir: Some(ui.path().into()) });
    let resp = app.clone().oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let (status, _) = call(&app, "GET", "/api/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
}
