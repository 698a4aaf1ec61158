mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use common::{fast_ingest, grid16, grid256, json, random_event, send, synth_into};
use dreamspace::config::ServiceConfig;
use dreamspace::service::{router, session_config, AppState, SharedState, StreamEvent};
use dreamspace::session_log::parse_ndjson;
use dreamspace_core::reduce::EmbeddingMethod;
use dreamspace_core::session::{EventKind, ExplorationSession, SessionConfig, SessionEvent};
use dreamspace_core::ParamSet;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Fixture {
    dir: TempDir,
    dataset: PathBuf,
    state: SharedState,
    app: Router,
    space: String,
}

fn pca_defaults() -> SessionConfig {
    SessionConfig {
        embedding: EmbeddingMethod::Pca,
        ..SessionConfig::default()
    }
}

fn config_for(dir: &TempDir) -> ServiceConfig {
    ServiceConfig {
        data_root: dir.path().join("data"),
        ingest: fast_ingest(2000),
        session: pca_defaults(),
        ..ServiceConfig::default()
    }
}

async fn fixture(grid: dreamspace::dataset::ParameterGrid) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let dataset = synth_into(dir.path(), grid, 5);
    let state = AppState::new(config_for(&dir)).unwrap();
    let app = router(state.clone());
    let (status, body) = send(&app, Method::POST, "/spaces", Some(json!({ "path": dataset }))).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    let space = json(&body)["id"].as_str().unwrap().to_string();
    Fixture {
        dir,
        dataset,
        state,
        app,
        space,
    }
}

async fn new_session(f: &Fixture, config: Value) -> String {
    let (status, body) = send(
        &f.app,
        Method::POST,
        "/sessions",
        Some(json!({ "space": f.space, "config": config })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    json(&body)["session"].as_str().unwrap().to_string()
}

async fn post_event(app: &Router, session: &str, seq: u64, event: &EventKind) -> (StatusCode, Value) {
    let (status, body) = send(
        app,
        Method::POST,
        &format!("/sessions/{session}/events"),
        Some(json!({ "seq": seq, "event": event })),
    )
    .await;
    (status, json(&body))
}

async fn get_state(app: &Router, session: &str) -> Value {
    let (status, body) = send(app, Method::GET, &format!("/sessions/{session}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    json(&body)
}

fn first_id(f: &Fixture) -> String {
    f.state.space(&f.space).unwrap().space.solution(0).id.clone()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn spaces_are_listed_and_loaded_once() {
    let f = fixture(grid16()).await;
    let (status, body) = send(&f.app, Method::GET, "/spaces", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = json(&body);
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["n"], 16);
    assert_eq!(list[0]["channels"].as_array().unwrap().len(), 12);
    assert_eq!(list[0]["shape_bins"], 64);
    assert!(f.space.starts_with("monitor-stand-"));

    let (status, body) = send(&f.app, Method::GET, &format!("/spaces/{}", f.space), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["id"], f.space.as_str());

    let (status, body) = send(&f.app, Method::POST, "/spaces", Some(json!({ "path": f.dataset }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json(&body)["code"], "conflict");

    let missing = f.dir.path().join("nowhere");
    let (status, _) = send(&f.app, Method::POST, "/spaces", Some(json!({ "path": missing }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn unknown_resources_are_404() {
    let f = fixture(grid16()).await;
    for uri in [
        "/sessions/session-999999/state".to_string(),
        "/sessions/nope/log".to_string(),
        "/spaces/nope".to_string(),
        format!("/spaces/{}/solutions/nope/mesh", f.space),
        "/no/such/route".to_string(),
    ] {
        let (status, body) = send(&f.app, Method::GET, &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(json(&body)["code"], "not_found", "{uri}");
    }
    let (status, body) = post_event(&f.app, "session-424242", 1, &EventKind::SetEmbeddingMethod {
        method: EmbeddingMethod::Pca,
    })
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");

    let (status, body) = send(&f.app, Method::DELETE, "/spaces", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(json(&body)["code"], "validation");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn malformed_requests_name_the_field() {
    let f = fixture(grid16()).await;
    let s = new_session(&f, json!({})).await;

    let (status, body) = send(
        &f.app,
        Method::POST,
        &format!("/sessions/{s}/events"),
        Some(json!({ "seq": "one", "event": { "type": "select_seed", "id": "x" } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err = json(&body);
    assert_eq!(err["code"], "validation");
    assert_eq!(err["field"], "seq");

    let (status, body) = send(
        &f.app,
        Method::POST,
        "/sessions",
        Some(json!({ "space": f.space, "config": { "rho": 1.5 } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["field"], "config.rho");

    let (status, body) = send(
        &f.app,
        Method::POST,
        "/sessions",
        Some(json!({ "space": f.space, "config": { "lod": { "star": "far" } } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["field"], "config.lod.star");

    let (status, body) = send(&f.app, Method::GET, &format!("/sessions/{s}/state?version=x"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["field"], "version");

    let create = EventKind::CreateSession {
        space: f.space.clone(),
        config: SessionConfig::default(),
    };
    let (status, _) = post_event(&f.app, &s, 1, &create).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = post_event(&f.app, &s, 1, &EventKind::SelectSeed { id: "nope".into() }).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    // Rejected events do not consume a sequence number.
    let (status, _) = post_event(&f.app, &s, 1, &EventKind::SelectSeed { id: first_id(&f) }).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn http_state_equals_the_library_transition() {
    let f = fixture(grid256()).await;
    let patch = json!({ "rho": 0.4, "initial_seed": 3 });
    let s = new_session(&f, patch.clone()).await;

    let space = f.state.space(&f.space).unwrap().space.clone();
    let cfg = session_config(&pca_defaults(), Some(patch)).unwrap();
    let open = SessionEvent {
        seq: 0,
        timestamp_ms: 0,
        event: EventKind::CreateSession {
            space: f.space.clone(),
            config: cfg,
        },
    };
    let mut lib = ExplorationSession::create(open, space, &mut |_| {}).unwrap();
    let remote = get_state(&f.app, &s).await;
    assert_eq!(serde_json::to_value(lib.state()).unwrap(), remote["state"]);

    let mut rng = dreamspace_core::rng::seeded(11);
    let mut accepted = 0;
    for _ in 0..40 {
        let kind = random_event(&lib, &mut rng);
        let seq = lib.next_seq();
        let local = lib.apply_event(
            SessionEvent {
                seq,
                timestamp_ms: 0,
                event: kind.clone(),
            },
            &mut |_| {},
        );
        let (status, body) = post_event(&f.app, &s, seq, &kind).await;
        match local {
            Ok(next) => {
                assert_eq!(status, StatusCode::OK, "{kind:?}: {body}");
                assert_eq!(body["version"], next.version());
                lib = next;
                accepted += 1;
                let remote = get_state(&f.app, &s).await;
                assert_eq!(serde_json::to_value(lib.state()).unwrap(), remote["state"], "after {kind:?}");
                assert_eq!(remote["survivor_count"], lib.state().survivors.len());
                assert_eq!(remote["seed_count"], lib.state().seeds.len());
                assert_eq!(remote["cluster_count"], lib.state().tree.roots.len());
            }
            Err(e) => {
                assert!(status.is_client_error(), "{kind:?} failed locally with {e} but got {status}");
            }
        }
    }
    assert!(accepted >= 10, "only {accepted} events accepted");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_get_exactly_one_success() {
    let f = fixture(grid16()).await;
    let s = new_session(&f, json!({})).await;
    let space = f.state.space(&f.space).unwrap().space.clone();
    for round in 0..8u64 {
        let seq = 1 + round;
        let a = EventKind::SelectSeed {
            id: space.solution(2 * round as usize).id.clone(),
        };
        let b = EventKind::SelectSeed {
            id: space.solution(2 * round as usize + 1).id.clone(),
        };
        let (ra, rb) = tokio::join!(post_event(&f.app, &s, seq, &a), post_event(&f.app, &s, seq, &b));
        let mut statuses = [ra.0, rb.0];
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT], "round {round}");
        let loser = if ra.0 == StatusCode::CONFLICT { ra.1 } else { rb.1 };
        assert_eq!(loser["code"], "conflict");
    }
    let state = get_state(&f.app, &s).await;
    assert_eq!(state["version"], 9);
    assert_eq!(state["seed_count"], 8);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn heavy_event_makes_next_writer_busy() {
    let f = fixture(grid256()).await;
    let s = new_session(&f, json!({})).await;
    let handle = f.state.session(&s).unwrap();
    let mut rx = handle.subscribe();

    let app = f.app.clone();
    let sid = s.clone();
    let heavy = tokio::spawn(async move {
        post_event(&app, &sid, 1, &EventKind::SetEmbeddingMethod {
            method: EmbeddingMethod::Tsne,
        })
        .await
    });
    // A t-SNE progress message proves the event is still being computed.
    loop {
        match tokio::time::timeout(Duration::from_secs(120), rx.recv()).await.unwrap().unwrap() {
            StreamEvent::Tsne { seq: 1, .. } => break,
            StreamEvent::Version { .. } => panic!("the heavy event finished before the probe"),
            _ => {}
        }
    }
    let probe = EventKind::SelectSeed { id: first_id(&f) };
    let (status, body) = post_event(&f.app, &s, 2, &probe).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{body}");
    assert_eq!(body["code"], "busy");

    let (status, body) = heavy.await.unwrap();
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, _) = post_event(&f.app, &s, 2, &probe).await;
    assert_eq!(status, StatusCode::OK);
}

/// Splits a server-sent event stream into `(event, data)` pairs.
fn take_events(buf: &mut String) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    while let Some(end) = buf.find("\n\n") {
        let block: String = buf.drain(..end + 2).collect();
        let mut name = None;
        let mut data = None;
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event: ") {
                name = Some(v.to_string());
            } else if let Some(v) = line.strip_prefix("data: ") {
                data = Some(serde_json::from_str(v).unwrap());
            }
        }
        if let (Some(n), Some(d)) = (name, data) {
            out.push((n, d));
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn stream_reports_phases_then_the_new_version() {
    let f = fixture(grid256()).await;
    let s = new_session(&f, json!({})).await;
    let (status, _) = post_event(&f.app, &s, 1, &EventKind::SelectSeed { id: first_id(&f) }).await;
    assert_eq!(status, StatusCode::OK);

    let req = Request::builder()
        .uri(format!("/sessions/{s}/stream"))
        .body(Body::empty())
        .unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    let mut buf = String::new();
    let mut events = Vec::new();
    let mut posted = None;
    let deadline = tokio::time::Instant::now() + Duration::from_secs(120);
    'read: loop {
        let frame = tokio::time::timeout_at(deadline, body.frame()).await.unwrap().unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            buf.push_str(std::str::from_utf8(&data).unwrap());
        }
        for (name, data) in take_events(&mut buf) {
            if posted.is_none() {
                // The stream opens with the current version.
                assert_eq!((name.as_str(), &data), ("version", &json!({ "type": "version", "version": 2 })));
                let app = f.app.clone();
                let sid = s.clone();
                posted = Some(tokio::spawn(async move {
                    post_event(&app, &sid, 2, &EventKind::TriggerRecluster {
                        rho: None,
                        k: None,
                        seed: 0,
                    })
                    .await
                }));
                continue;
            }
            let done = name == "version";
            events.push((name, data));
            if done {
                break 'read;
            }
        }
    }
    let (status, _) = posted.unwrap().await.unwrap();
    assert_eq!(status, StatusCode::OK);

    let (last_name, last) = events.last().unwrap();
    assert_eq!(last_name, "version");
    assert_eq!(last["version"], 3);
    let mut phases: Vec<String> = Vec::new();
    let mut last_percent = -1.0;
    for (name, data) in &events[..events.len() - 1] {
        assert_eq!(name, "progress");
        assert_eq!(data["seq"], 2);
        let phase = data["phase"].as_str().unwrap().to_string();
        let percent = data["percent"].as_f64().unwrap();
        assert!(percent >= last_percent, "{events:?}");
        last_percent = percent;
        if phases.last() != Some(&phase) {
            phases.push(phase);
        }
    }
    assert_eq!(phases, ["score", "embed", "cluster", "layout"]);
    assert_eq!(last_percent, 100.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reads_are_idempotent_and_versions_are_addressable() {
    let f = fixture(grid16()).await;
    let s = new_session(&f, json!({})).await;
    let uri = format!("/sessions/{s}/state");
    let (_, v1) = send(&f.app, Method::GET, &uri, None).await;
    let (_, again) = send(&f.app, Method::GET, &uri, None).await;
    assert_eq!(v1, again);

    let space = f.state.space(&f.space).unwrap().space.clone();
    for (seq, i) in [(1, 3usize), (2, 9)] {
        let id = space.solution(i).id.clone();
        let (status, _) = post_event(&f.app, &s, seq, &EventKind::SelectSeed { id }).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, _) = post_event(&f.app, &s, 3, &EventKind::TriggerRecluster {
        rho: Some(0.5),
        k: Some(2),
        seed: 1,
    })
    .await;
    assert_eq!(status, StatusCode::OK);

    let (status, past) = send(&f.app, Method::GET, &format!("{uri}?version=1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(past, v1, "replayed version 1 must match the original bytes");
    let (_, current) = send(&f.app, Method::GET, &uri, None).await;
    let (_, pinned) = send(&f.app, Method::GET, &format!("{uri}?version=4"), None).await;
    assert_eq!(current, pinned);
    assert_eq!(json(&current)["survivor_count"], 8);
    let (status, _) = send(&f.app, Method::GET, &format!("{uri}?version=5"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(&f.app, Method::GET, &format!("{uri}?version=0"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn table_and_mesh_payloads() {
    let f = fixture(grid16()).await;
    let s = new_session(&f, json!({})).await;
    let space = f.state.space(&f.space).unwrap().space.clone();
    let id = space.solution(0).id.clone();

    let (status, body) = send(&f.app, Method::GET, &format!("/sessions/{s}/table/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let table = json(&body);
    assert_eq!(table["id"], id.as_str());
    assert_eq!(table["spider"].as_array().unwrap().len(), 12);
    assert_eq!(table["radial"].as_array().unwrap().len(), 12);
    for axis in table["spider"].as_array().unwrap() {
        let t = axis["normalized"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&t));
    }

    let (status, mesh) = send(&f.app, Method::GET, &format!("/spaces/{}/solutions/{id}/mesh", f.space), None).await;
    assert_eq!(status, StatusCode::OK);
    let on_disk = std::fs::read(f.dataset.join(&space.solution(0).mesh_ref)).unwrap();
    assert_eq!(mesh, on_disk);

    // Seed the heaviest-load design and eliminate half the space.
    let heavy = space
        .solutions()
        .iter()
        .position(|d| {
            d.params
                == ParamSet {
                    middle_load: 300.0,
                    outer_load: 300.0,
                    voxel_size: 2.0,
                    volume_minimization: 167,
                }
        })
        .unwrap();
    let seed_id = space.solution(heavy).id.clone();
    assert_eq!(post_event(&f.app, &s, 1, &EventKind::SelectSeed { id: seed_id.clone() }).await.0, StatusCode::OK);
    let recluster = EventKind::TriggerRecluster {
        rho: Some(0.5),
        k: None,
        seed: 0,
    };
    assert_eq!(post_event(&f.app, &s, 2, &recluster).await.0, StatusCode::OK);
    let survivors = f.state.session(&s).unwrap().current().state().survivors.clone();
    assert_eq!(survivors.len(), 8);
    let gone = (0..16).find(|i| !survivors.contains(i)).unwrap();
    let gone_id = space.solution(gone).id.clone();
    let (status, body) = send(&f.app, Method::GET, &format!("/sessions/{s}/table/{gone_id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["code"], "not_found");
    let (status, _) = send(&f.app, Method::GET, &format!("/sessions/{s}/table/{seed_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn log_is_served_and_sessions_resume_after_restart() {
    let f = fixture(grid16()).await;
    let s = new_session(&f, json!({ "k": 3 })).await;
    let space = f.state.space(&f.space).unwrap().space.clone();
    let events = [
        EventKind::SelectSeed {
            id: space.solution(4).id.clone(),
        },
        EventKind::TriggerRecluster {
            rho: Some(0.3),
            k: None,
            seed: 2,
        },
        EventKind::SetEmbeddingMethod {
            method: EmbeddingMethod::Tsne,
        },
    ];
    for (i, e) in events.iter().enumerate() {
        let (status, body) = post_event(&f.app, &s, i as u64 + 1, e).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, log) = send(&f.app, Method::GET, &format!("/sessions/{s}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(log).unwrap();
    let parsed = parse_ndjson(&text, std::path::Path::new("response")).unwrap();
    assert_eq!(parsed.len(), 4);
    for (p, e) in parsed[1..].iter().zip(&events) {
        assert_eq!(&p.event, e);
    }
    let on_disk = std::fs::read_to_string(f.dir.path().join(format!("data/sessions/{s}.ndjson"))).unwrap();
    assert_eq!(on_disk, text);
    let before = get_state(&f.app, &s).await;

    // A fresh process with the same data root.
    let restarted = AppState::new(config_for(&f.dir)).unwrap();
    let app = router(restarted);
    let (status, body) = send(&app, Method::POST, "/spaces", Some(json!({ "path": f.dataset }))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(json(&body)["id"], f.space.as_str());
    assert_eq!(get_state(&app, &s).await, before);
    let (status, _) = post_event(&app, &s, 4, &EventKind::RemoveSeed {
        id: space.solution(4).id.clone(),
    })
    .await;
    assert_eq!(status, StatusCode::OK);
    let fresh = new_session(
        &Fixture {
            dir: tempfile::tempdir().unwrap(),
            dataset: f.dataset.clone(),
            state: Arc::clone(&f.state),
            app: app.clone(),
            space: f.space.clone(),
        },
        json!({}),
    )
    .await;
    assert_ne!(fresh, s, "new ids never collide with persisted sessions");
}
