//! Wire-protocol conformance: the shared request/response vectors, child
//! processes speaking the protocol over stdio, and an HTTP endpoint.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::{extract::State, http::StatusCode, routing::post, Router};
use gleams_core::blackbox::protocol::{respond, PredictRequest};
use gleams_core::blackbox::Model;
use gleams_core::{
    build_surrogate, BlackBox, BlackBoxError, BuildConfig, HttpAdapter, HyperRectangle,
    LinearFunction, StdioAdapter,
};
use serde::Deserialize;

const VECTORS: &str = include_str!("../../../protocol/vectors.json");

#[derive(Deserialize)]
struct Suite {
    model: SuiteModel,
    vectors: Vec<Vector>,
}

#[derive(Deserialize)]
struct SuiteModel {
    beta: Vec<f64>,
}

#[derive(Deserialize)]
struct Vector {
    name: String,
    request: String,
    response: String,
}

#[test]
fn shared_vectors_are_answered_exactly() {
    let suite: Suite = serde_json::from_str(VECTORS).unwrap();
    let model = LinearFunction::new(suite.model.beta);
    for v in &suite.vectors {
        assert_eq!(
            respond(&model, &v.request),
            v.response,
            "vector {:?}",
            v.name
        );
    }
}

/// A shell adapter that answers the handshake and then replays `replies`
/// line by line, one per request.
fn canned(replies: &[&str]) -> String {
    let mut script = String::from(r#"read -r _; echo '{"id":0,"values":[]}'; "#);
    for r in replies {
        script.push_str(&format!("read -r _; echo '{r}'; "));
    }
    script
}

#[test]
fn stdio_adapter_exchanges_batches() {
    let adapter = StdioAdapter::spawn(&canned(&[
        r#"{"id":1,"values":[1.5,-2]}"#,
        r#"{"id":2,"values":[0.25]}"#,
    ]))
    .unwrap();
    assert_eq!(
        adapter.predict(&[vec![0.0], vec![1.0]]).unwrap(),
        vec![1.5, -2.0]
    );
    assert_eq!(adapter.predict(&[vec![0.5]]).unwrap(), vec![0.25]);
    assert!(matches!(
        adapter.predict(&[vec![0.5]]),
        Err(BlackBoxError::Transport(_))
    ));
}

#[test]
fn stdio_adapter_reports_protocol_faults() {
    let adapter = StdioAdapter::spawn(&canned(&[r#"{"id":9,"values":[1]}"#])).unwrap();
    assert!(matches!(
        adapter.predict(&[vec![0.0]]),
        Err(BlackBoxError::Protocol(_))
    ));

    let adapter = StdioAdapter::spawn(&canned(&[r#"{"id":1,"error":"model exploded"}"#])).unwrap();
    match adapter.predict(&[vec![0.0]]) {
        Err(BlackBoxError::Adapter(msg)) => assert_eq!(msg, "model exploded"),
        other => panic!("expected adapter error, got {other:?}"),
    }

    let adapter = StdioAdapter::spawn(&canned(&["not json"])).unwrap();
    assert!(matches!(
        adapter.predict(&[vec![0.0]]),
        Err(BlackBoxError::Protocol(_))
    ));
}

#[test]
fn stdio_nulls_surface_as_non_finite_predictions() {
    let adapter = StdioAdapter::spawn(&canned(&[r#"{"id":1,"values":[1.0,null,3.0]}"#])).unwrap();
    let bb = BlackBox::new(adapter);
    match bb.predict_batch(&[vec![0.0], vec![0.1], vec![0.2]]) {
        Err(BlackBoxError::NonFinite { index, value }) => {
            assert_eq!(index, 1);
            assert!(value.is_nan());
        }
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn stdio_length_mismatch_is_detected() {
    let adapter = StdioAdapter::spawn(&canned(&[r#"{"id":1,"values":[1.0]}"#])).unwrap();
    let bb = BlackBox::new(adapter);
    assert!(matches!(
        bb.predict_batch(&[vec![0.0], vec![0.1]]),
        Err(BlackBoxError::LengthMismatch {
            expected: 2,
            got: 1
        })
    ));
}

#[test]
fn failed_handshakes_are_rejected() {
    assert!(StdioAdapter::spawn("read -r _; echo '{\"id\":0,\"values\":[1]}'").is_err());
    assert!(StdioAdapter::spawn("exit 0").is_err());
    assert!(StdioAdapter::spawn("read -r _; echo '{\"id\":0,\"error\":\"no\"}'").is_err());
}

struct Server {
    addr: SocketAddr,
    _runtime: tokio::runtime::Runtime,
}

fn serve(model: Arc<dyn Model>, fail: bool) -> Server {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    let app = Router::new()
        .route(
            "/predict",
            post(
                move |State(m): State<Arc<dyn Model>>, body: String| async move {
                    let handshake = serde_json::from_str::<PredictRequest>(&body)
                        .is_ok_and(|r| r.points.is_empty());
                    if fail && !handshake {
                        return (StatusCode::INTERNAL_SERVER_ERROR, "boom".to_string());
                    }
                    (StatusCode::OK, respond(m.as_ref(), &body))
                },
            ),
        )
        .with_state(model);
    runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        addr,
        _runtime: runtime,
    }
}

#[test]
fn http_adapter_builds_the_same_surrogate() {
    let beta = vec![0.5, 1.0, -2.0];
    let server = serve(Arc::new(LinearFunction::new(beta.clone())), false);
    let adapter = HttpAdapter::connect(&format!("http://{}", server.addr)).unwrap();
    assert!(adapter.url().ends_with("/predict"));
    assert_eq!(adapter.predict(&[vec![1.0, 0.25]]).unwrap(), vec![1.0]);

    let domain = HyperRectangle::unit(2).unwrap();
    let cfg = BuildConfig::default().with_log2_points(10);
    let remote = BlackBox::new(adapter);
    let a = build_surrogate(
        &remote,
        &domain,
        &BuildConfig {
            batch_size: 100,
            ..cfg.clone()
        },
    )
    .unwrap();
    let b = build_surrogate(&BlackBox::new(LinearFunction::new(beta)), &domain, &cfg).unwrap();
    assert_eq!(remote.query_count(), 1024);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn http_errors_are_transport_failures() {
    let server = serve(Arc::new(LinearFunction::new(vec![0.0, 1.0])), true);
    let adapter = HttpAdapter::connect(&format!("http://{}/predict", server.addr)).unwrap();
    match adapter.predict(&[vec![0.5]]) {
        Err(BlackBoxError::Transport(msg)) => assert!(msg.contains("500")),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert!(HttpAdapter::connect("http://127.0.0.1:1").is_err());
}
