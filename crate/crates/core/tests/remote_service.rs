//! RemoteScorer and `score --backend remote` against an in-process mock of
//! the scoring service.

use std::net::SocketAddr;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use biasgauge::scorer::wire::{
    PllRequest, PllResponse, ScoreWordRequest, ScoreWordResponse, ServiceInfo,
};
use biasgauge::scorer::{Cached, RemoteScorer, ScoreError, Scorer};

#[derive(Default)]
struct Mock {
    fail: bool,
    delay_ms: u64,
    calls: AtomicUsize,
    active: AtomicUsize,
    peak: AtomicUsize,
}

/// Deterministic stand-in for a model: a value in [-6, -0.5] from the text.
fn fake_log_prob(text: &str) -> f64 {
    let h = text
        .bytes()
        .fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    -0.5 - (h % 23) as f64 * 0.25
}

type Reply<T> = Result<Json<T>, (StatusCode, String)>;

async fn enter(m: &Mock) -> Result<(), (StatusCode, String)> {
    m.calls.fetch_add(1, Ordering::SeqCst);
    let now = m.active.fetch_add(1, Ordering::SeqCst) + 1;
    m.peak.fetch_max(now, Ordering::SeqCst);
    if m.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(m.delay_ms)).await;
    }
    m.active.fetch_sub(1, Ordering::SeqCst);
    if m.fail {
        return Err((StatusCode::INTERNAL_SERVER_ERROR, "model crashed".into()));
    }
    Ok(())
}

async fn score_word(
    State(m): State<Arc<Mock>>,
    Json(req): Json<ScoreWordRequest>,
) -> Reply<ScoreWordResponse> {
    enter(&m).await?;
    Ok(Json(ScoreWordResponse {
        mean_log_prob: fake_log_prob(&format!("{}|{}", req.template, req.word)),
        token_count: 1 + (req.word.len() / 5) as u32,
    }))
}

async fn pll(State(m): State<Arc<Mock>>, Json(req): Json<PllRequest>) -> Reply<PllResponse> {
    enter(&m).await?;
    let words: Vec<&str> = req.sentence.split_whitespace().collect();
    let mut out = PllResponse {
        word_log_probs: Vec::new(),
        token_counts: Vec::new(),
    };
    for &i in &req.scored_word_indices {
        let w = words
            .get(i)
            .ok_or((StatusCode::BAD_REQUEST, format!("index {i} out of range")))?;
        out.word_log_probs
            .push(fake_log_prob(&format!("{}#{i}", req.sentence)));
        out.token_counts.push(1 + (w.len() / 5) as u32);
    }
    Ok(Json(out))
}

async fn info() -> Json<ServiceInfo> {
    Json(ServiceInfo {
        model_id: "mock-mlm".into(),
        vocab_size: 1000,
        max_sequence_length: 512,
    })
}

/// Serve the mock on a background runtime for the rest of the test process.
fn spawn(mock: Mock) -> (String, Arc<Mock>) {
    let mock = Arc::new(mock);
    let state = mock.clone();
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/v1/score-word", post(score_word))
                .route("/v1/pll", post(pll))
                .route("/v1/info", get(info))
                .with_state(state);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    (format!("http://{addr}"), mock)
}

#[test]
fn protocol_round_trip() {
    let (url, _) = spawn(Mock::default());
    let s = RemoteScorer::new(&url, 4).unwrap();
    assert_eq!(s.info().unwrap().model_id, "mock-mlm");

    let w = s.score_word("The male is [KW].", "strong").unwrap();
    assert_eq!(w.mean_log_prob, fake_log_prob("The male is [KW].|strong"));
    assert_eq!(w.token_count, 2);

    let terms = s
        .score_sentence_words("Women are bad drivers .", &[1, 3])
        .unwrap();
    assert_eq!(terms.len(), 2);
    assert_eq!(
        terms[0].sum_log_prob,
        fake_log_prob("Women are bad drivers .#1")
    );
    assert_eq!(terms[1].token_count, 2);
}

#[test]
fn client_side_checks_happen_before_the_request() {
    let (url, mock) = spawn(Mock::default());
    let s = RemoteScorer::new(&url, 1).unwrap();
    assert!(matches!(
        s.score_word("no slot here", "x"),
        Err(ScoreError::InvalidInput(_))
    ));
    assert!(matches!(
        s.score_sentence_words("two words", &[2]),
        Err(ScoreError::IndexOutOfRange { index: 2, len: 2 })
    ));
    assert_eq!(mock.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn http_errors_surface_with_payload() {
    let (url, _) = spawn(Mock {
        fail: true,
        ..Mock::default()
    });
    let s = RemoteScorer::new(&url, 1).unwrap();
    match s.score_word("The male is [KW].", "strong") {
        Err(ScoreError::Remote {
            message, payload, ..
        }) => {
            assert!(message.contains("500"), "{message}");
            assert!(message.contains("model crashed"), "{message}");
            assert!(payload.contains("\"word\":\"strong\""), "{payload}");
        }
        other => panic!("expected a remote error, got {other:?}"),
    }
}

#[test]
fn in_flight_requests_are_bounded() {
    let (url, mock) = spawn(Mock {
        delay_ms: 20,
        ..Mock::default()
    });
    let s = RemoteScorer::new(&url, 3).unwrap();
    std::thread::scope(|scope| {
        for i in 0..12 {
            let s = &s;
            scope.spawn(move || s.score_word("The male is [KW].", &format!("w{i}")).unwrap());
        }
    });
    assert_eq!(mock.calls.load(Ordering::SeqCst), 12);
    let peak = mock.peak.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak {peak}");
}

#[test]
fn cache_sends_each_request_once() {
    let (url, mock) = spawn(Mock::default());
    let s = Cached::new(RemoteScorer::new(&url, 2).unwrap());
    for _ in 0..5 {
        s.score_word("The male is [KW].", "strong").unwrap();
        s.score_sentence_words("Men are strong", &[0, 2]).unwrap();
    }
    assert_eq!(mock.calls.load(Ordering::SeqCst), 2);
}

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))
}

fn score_remote(endpoint_env: &str, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_biasgauge"))
        .args([
            "score",
            "--shape",
            "quad",
            "--kinds",
            "ss,cs,csk,f",
            "--backend",
            "remote",
        ])
        .args(["--endpoint", "http://127.0.0.1:9"])
        .arg("--dataset")
        .arg(fixtures().join("table10_quads.jsonl"))
        .arg("--out")
        .arg(out)
        .env("BIASGAUGE_ENDPOINT", endpoint_env)
        .output()
        .unwrap()
}

#[test]
fn cli_scores_through_the_service() {
    let (url, _) = spawn(Mock::default());
    let dir = tempfile::tempdir().unwrap();
    // The environment variable wins over the unreachable --endpoint.
    let out = score_remote(&url, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = std::fs::read_to_string(dir.path().join("table10_quads.summary.json")).unwrap();
    let table = biasgauge::report::parse_json(json.as_bytes()).unwrap();
    for row in [
        "ssμ Original",
        "cs ρ",
        "cskμ Control",
        "fμ",
        "f-cs agreement",
    ] {
        assert!(table.get(row).is_some(), "missing {row}");
    }
    assert_eq!(table.metadata.backend.as_deref(), Some("remote"));
}

#[test]
fn cli_exits_2_when_the_service_fails() {
    let (url, _) = spawn(Mock {
        fail: true,
        ..Mock::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let out = score_remote(&url, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let failures = std::fs::read_to_string(dir.path().join("failures.tsv")).unwrap();
    assert!(failures.lines().count() > 1);
    assert!(failures.contains("h00"));
}
