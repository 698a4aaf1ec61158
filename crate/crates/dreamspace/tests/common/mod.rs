#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use dreamspace::dataset::{IngestOptions, ParameterGrid};
use dreamspace::synth::{generate, SynthConfig};
use dreamspace_core::session::{EventKind, ExplorationSession};
use dreamspace_core::reduce::EmbeddingMethod;
use http_body_util::BodyExt;
use rand::Rng;
use serde_json::Value;
use tower::ServiceExt;

pub fn grid(middle: &[f64], outer: &[f64], voxel: &[f64], levels: &[u32]) -> ParameterGrid {
    ParameterGrid {
        middle_load: middle.to_vec(),
        outer_load: outer.to_vec(),
        voxel_size: voxel.to_vec(),
        volume_minimization: levels.to_vec(),
    }
}

/// Evenly spread levels over the full range.
pub fn levels(count: u32) -> Vec<u32> {
    let max = dreamspace::synth::MAX_VOLUME_LEVEL;
    if count == 1 {
        return vec![0];
    }
    (0..count).map(|i| i * max / (count - 1)).collect()
}

/// 16 designs.
pub fn grid16() -> ParameterGrid {
    grid(&[100.0, 300.0], &[100.0, 300.0], &[0.5, 2.0], &levels(2))
}

/// 256 designs.
pub fn grid256() -> ParameterGrid {
    grid(&[100.0, 150.0, 250.0, 300.0], &[100.0, 150.0, 250.0, 300.0], &[0.5, 1.0, 1.5, 2.0], &levels(4))
}

/// 2,000 designs.
pub fn grid2000() -> ParameterGrid {
    let loads = [100.0, 150.0, 200.0, 250.0, 300.0];
    grid(&loads, &loads, &[0.5, 1.0, 1.5, 2.0], &levels(20))
}

pub fn synth_into(dir: &Path, grid: ParameterGrid, seed: u64) -> PathBuf {
    let out = dir.join("dataset");
    generate(&SynthConfig::with_grid(grid, seed), &out).expect("synthesis");
    out
}

pub fn fast_ingest(pairs: usize) -> IngestOptions {
    IngestOptions {
        pairs,
        ..IngestOptions::default()
    }
}

pub async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

/// A plausible next event for `s`, sometimes one that must be rejected.
pub fn random_event(s: &ExplorationSession, rng: &mut impl Rng) -> EventKind {
    let st = s.state();
    let space = s.space();
    let survivor_id = |rng: &mut dyn rand::RngCore| {
        let i = st.survivors[rng.random_range(0..st.survivors.len())];
        space.solution(i).id.clone()
    };
    match rng.random_range(0..10) {
        0..=3 => EventKind::SelectSeed { id: survivor_id(rng) },
        4 => match st.seeds.iter().next() {
            Some(seed) if rng.random_bool(0.8) => EventKind::RemoveSeed { id: seed.id.clone() },
            _ => EventKind::RemoveSeed { id: survivor_id(rng) },
        },
        5..=6 => EventKind::TriggerRecluster {
            rho: [None, Some(0.3), Some(0.5)][rng.random_range(0..3)],
            k: [None, Some(2), Some(3)][rng.random_range(0..3)],
            seed: rng.random_range(0..4),
        },
        7..=8 => {
            let clusters = st.tree.clusters();
            let c = clusters[rng.random_range(0..clusters.len())];
            EventKind::ExpandCluster {
                cluster: c.id.clone(),
                k_child: rng.random_range(1..4),
                seed: rng.random_range(0..4),
            }
        }
        _ => EventKind::SetEmbeddingMethod {
            method: if rng.random_bool(0.5) {
                EmbeddingMethod::Pca
            } else {
                EmbeddingMethod::Tsne
            },
        },
    }
}
