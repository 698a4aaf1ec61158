//! Event-sourced exploration sessions.
//!
//! A session is a pure fold over its event log: [`ExplorationSession::apply`]
//! validates and applies one event, and [`replay`] rebuilds the identical
//! state from a log.

mod layout;
mod table;

pub use layout::{
    compute_layout, lod_for, ClusterStar, LodLevel, LodThresholds, RoomConfig, SpatialLayout,
    StarPoint, TablePlacement, DEGENERATE_JITTER,
};
pub use table::{percentile, table_model, RadialGraph, SpiderAxis, VisualizationTableModel};

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cluster::{expand_cluster, ClusterTree};
use crate::error::{Error, Result};
use crate::recommend::{organize, run_cycle, CycleParams, SeedSet, DEFAULT_TSNE_MAX_POINTS};
use crate::reduce::{Embedding, EmbeddingMethod, Phase, Progress, TsneConfig};
use crate::space::{FeatureWeights, SolutionSpace};

/// Per-session defaults; event fields override `rho` and `k` per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub rho: f64,
    pub k: Option<usize>,
    /// Metric share of the combined distance.
    pub balance: f64,
    pub embedding: EmbeddingMethod,
    pub tsne: TsneConfig,
    pub tsne_max_points: usize,
    pub lod: LodThresholds,
    pub room: RoomConfig,
    /// Seed of the initial clustering and embedding.
    pub initial_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            rho: 0.5,
            k: None,
            balance: 0.5,
            embedding: EmbeddingMethod::Tsne,
            tsne: TsneConfig::default(),
            tsne_max_points: DEFAULT_TSNE_MAX_POINTS,
            lod: LodThresholds::default(),
            room: RoomConfig::default(),
            initial_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    CreateSession {
        space: String,
        #[serde(default)]
        config: SessionConfig,
    },
    SelectSeed {
        id: String,
    },
    RemoveSeed {
        id: String,
    },
    TriggerRecluster {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    ExpandCluster {
        cluster: String,
        k_child: usize,
        #[serde(default)]
        seed: u64,
    },
    SetEmbeddingMethod {
        method: EmbeddingMethod,
    },
}

impl EventKind {
    /// Events that recompute clustering or embeddings.
    pub fn is_heavy(&self) -> bool {
        matches!(
            self,
            EventKind::CreateSession { .. }
                | EventKind::TriggerRecluster { .. }
                | EventKind::ExpandCluster { .. }
                | EventKind::SetEmbeddingMethod { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Contiguous from 0; `CreateSession` is always 0.
    pub seq: u64,
    /// Milliseconds since the Unix epoch, as stamped by the writer.
    #[serde(default)]
    pub timestamp_ms: u64,
    pub event: EventKind,
}

/// Materialized state. Everything here is derived from the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub space: String,
    pub config: SessionConfig,
    /// Number of applied events.
    pub version: u64,
    pub cycle: u32,
    pub seeds: SeedSet,
    /// Space indices, ascending.
    pub survivors: Vec<usize>,
    pub weights: FeatureWeights,
    pub tree: ClusterTree,
    pub embedding_method: EmbeddingMethod,
    /// Rows aligned with `survivors`.
    pub embedding: Embedding,
    pub layout: SpatialLayout,
    pub last_note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExplorationSession {
    space: Arc<SolutionSpace>,
    state: SessionState,
    log: Vec<SessionEvent>,
}

impl PartialEq for ExplorationSession {
    fn eq(&self, other: &Self) -> bool {
        self.state == other.state && self.log == other.log
    }
}

fn phase(progress: &mut dyn FnMut(Progress), phase: Phase, percent: f64) {
    progress(Progress::Phase { phase, percent });
}

impl ExplorationSession {
    /// Applies the `CreateSession` event that opens every log.
    pub fn create(
        event: SessionEvent,
        space: Arc<SolutionSpace>,
        progress: &mut dyn FnMut(Progress),
    ) -> Result<Self> {
        if event.seq != 0 {
            return Err(Error::Conflict {
                expected: 0,
                found: event.seq,
            });
        }
        let EventKind::CreateSession {
            space: space_ref,
            config,
        } = &event.event
        else {
            return Err(Error::Validation("the first event must create the session".into()));
        };
        let survivors: Vec<usize> = (0..space.len()).collect();
        let weights = FeatureWeights::uniform(space.layout(), config.balance);
        let params = CycleParams {
            rho: config.rho,
            k: config.k,
            seed: config.initial_seed,
            balance: config.balance,
            embedding: config.embedding,
            tsne: config.tsne.clone(),
            tsne_max_points: config.tsne_max_points,
        };
        let (tree, embedding, note) = organize(&space, &survivors, &weights, &params, progress)?;
        phase(progress, Phase::Layout, 95.0);
        let layout = compute_layout(&tree, &embedding, &survivors, &space, &config.room)?;
        let state = SessionState {
            space: space_ref.clone(),
            config: config.clone(),
            version: 1,
            cycle: 0,
            seeds: SeedSet::new(),
            survivors,
            weights,
            tree,
            embedding_method: config.embedding,
            embedding,
            layout,
            last_note: note,
        };
        Ok(ExplorationSession {
            space,
            state,
            log: alloc::vec![event],
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn space(&self) -> &Arc<SolutionSpace> {
        &self.space
    }

    pub fn version(&self) -> u64 {
        self.state.version
    }

    pub fn next_seq(&self) -> u64 {
        self.log.len() as u64
    }

    /// Applies one event in place. On error the session is unchanged.
    pub fn apply(&mut self, event: SessionEvent, progress: &mut dyn FnMut(Progress)) -> Result<()> {
        let next = self.apply_event(event, progress)?;
        *self = next;
        Ok(())
    }

    /// Pure transition: returns the successor session.
    pub fn apply_event(&self, event: SessionEvent, progress: &mut dyn FnMut(Progress)) -> Result<Self> {
        let expected = self.next_seq();
        if event.seq != expected {
            return Err(Error::Conflict {
                expected,
                found: event.seq,
            });
        }
        let space = &self.space;
        let mut st = self.state.clone();
        match &event.event {
            EventKind::CreateSession { .. } => {
                return Err(Error::Validation("session already created".into()));
            }
            EventKind::SelectSeed { id } => {
                let idx = space.require_index(id)?;
                if st.survivors.binary_search(&idx).is_err() {
                    return Err(Error::NotFound(format!("solution {id} is not among the survivors")));
                }
                if !st.seeds.insert(id, st.cycle) {
                    return Err(Error::Validation(format!("solution {id} is already a seed")));
                }
            }
            EventKind::RemoveSeed { id } => {
                if !st.seeds.remove(id) {
                    return Err(Error::NotFound(format!("seed {id}")));
                }
            }
            EventKind::TriggerRecluster { rho, k, seed } => {
                if st.seeds.is_empty() {
                    return Err(Error::Validation("at least one seed required".into()));
                }
                let params = CycleParams {
                    rho: rho.unwrap_or(st.config.rho),
                    k: k.or(st.config.k),
                    seed: *seed,
                    balance: st.config.balance,
                    embedding: st.embedding_method,
                    tsne: st.config.tsne.clone(),
                    tsne_max_points: st.config.tsne_max_points,
                };
                let seeds = st.seeds.indices(space)?;
                let result = run_cycle(space, &st.survivors, &seeds, &params, st.cycle + 1, progress)?;
                st.cycle = result.cycle;
                st.survivors = result.survivors;
                st.weights = result.weights;
                st.tree = result.tree;
                st.embedding = result.embedding;
                st.last_note = result.note;
                phase(progress, Phase::Layout, 95.0);
                st.layout = compute_layout(&st.tree, &st.embedding, &st.survivors, space, &st.config.room)?;
            }
            EventKind::ExpandCluster {
                cluster,
                k_child,
                seed,
            } => {
                let weights = st.tree.weights.clone().unwrap_or_else(|| st.weights.clone());
                let all: Vec<usize> = (0..space.len()).collect();
                let points = space.weighted_points(&all, &weights);
                phase(progress, Phase::Cluster, 50.0);
                let expansion = expand_cluster(&st.tree, cluster, *k_child, *seed, &points)?;
                st.tree = expansion.tree;
                st.last_note = expansion.diagnostic;
                phase(progress, Phase::Layout, 95.0);
                st.layout = compute_layout(&st.tree, &st.embedding, &st.survivors, space, &st.config.room)?;
            }
            EventKind::SetEmbeddingMethod { method } => {
                st.embedding_method = *method;
                let params = CycleParams {
                    rho: st.config.rho,
                    k: Some(st.tree.k),
                    seed: st.tree.seed,
                    balance: st.config.balance,
                    embedding: *method,
                    tsne: st.config.tsne.clone(),
                    tsne_max_points: st.config.tsne_max_points,
                };
                let (_, embedding, note) = organize(space, &st.survivors, &st.weights, &params, progress)?;
                st.embedding = embedding;
                st.last_note = note;
                phase(progress, Phase::Layout, 95.0);
                st.layout = compute_layout(&st.tree, &st.embedding, &st.survivors, space, &st.config.room)?;
            }
        }
        let mut log = self.log.clone();
        log.push(event);
        st.version = log.len() as u64;
        Ok(ExplorationSession {
            space: self.space.clone(),
            state: st,
            log,
        })
    }

    /// Table payload for a surviving solution.
    pub fn table_model(&self, id: &str) -> Result<VisualizationTableModel> {
        let idx = self.space.require_index(id)?;
        table_model(&self.space, &self.state.survivors, idx, LodLevel::FullDetail)
    }
}

/// Rebuilds a session from its log. `resolve` maps the space reference of
/// the opening event to the loaded space.
pub fn replay(
    log: &[SessionEvent],
    resolve: impl FnOnce(&str) -> Option<Arc<SolutionSpace>>,
    progress: &mut dyn FnMut(Progress),
) -> Result<ExplorationSession> {
    let first = log
        .first()
        .ok_or_else(|| Error::Validation("empty session log".into()))?;
    let EventKind::CreateSession { space, .. } = &first.event else {
        return Err(Error::Validation("the first event must create the session".into()));
    };
    let resolved = resolve(space).ok_or_else(|| Error::NotFound(format!("space {space}")))?;
    let mut session = ExplorationSession::create(first.clone(), resolved, progress)?;
    for e in &log[1..] {
        session.apply(e.clone(), progress)?;
    }
    Ok(session)
}
