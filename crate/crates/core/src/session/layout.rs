//! Room-scale placement of stars and visualization tables, and the
//! distance-based level of detail.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterTree;
use crate::error::{Error, Result};
use crate::reduce::Embedding;
use crate::rng::fnv1a;
use crate::space::SolutionSpace;

/// Radius of the deterministic spread used when every point coincides.
pub const DEGENERATE_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomConfig {
    /// Meters along x.
    pub width: f64,
    /// Meters along z.
    pub depth: f64,
    pub sky_height: f64,
    pub table_height: f64,
    /// Fraction of each room extent kept free on every side.
    pub margin: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            width: 40.0,
            depth: 40.0,
            sky_height: 3.0,
            table_height: 1.1,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarPoint {
    pub solution: usize,
    pub id: String,
    /// Deepest cluster holding the solution.
    pub cluster: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStar {
    pub cluster: String,
    /// Centroid of the member stars, at sky height.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePlacement {
    pub cluster: String,
    pub representative: usize,
    pub representative_id: String,
    /// Directly below the cluster star, at table height.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialLayout {
    pub room: RoomConfig,
    pub stars: Vec<StarPoint>,
    pub cluster_stars: Vec<ClusterStar>,
    pub tables: Vec<TablePlacement>,
}

impl SpatialLayout {
    /// Every emitted position, for containment checks.
    pub fn positions(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.stars
            .iter()
            .map(|s| s.position)
            .chain(self.cluster_stars.iter().map(|c| c.position))
            .chain(self.tables.iter().map(|t| t.position))
    }
}

/// Places one star per member of `members` from the first two embedding
/// axes (room x and z), scaled uniformly to fit the room less its margin and
/// centered on the origin. Embedding row `r` belongs to `members[r]`.
pub fn compute_layout(
    tree: &ClusterTree,
    embedding: &Embedding,
    members: &[usize],
    space: &SolutionSpace,
    room: &RoomConfig,
) -> Result<SpatialLayout> {
    let n = members.len();
    if embedding.len() != n {
        return Err(Error::DimensionMismatch {
            what: "embedding rows",
            expected: n,
            found: embedding.len(),
        });
    }
    let coords = &embedding.coords;
    let axis = |r: usize, a: usize| if a < coords.cols() { coords.get(r, a) } else { 0.0 };
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for r in 0..n {
        for a in 0..2 {
            lo[a] = lo[a].min(axis(r, a));
            hi[a] = hi[a].max(axis(r, a));
        }
    }
    let usable = [
        room.width * (1.0 - 2.0 * room.margin),
        room.depth * (1.0 - 2.0 * room.margin),
    ];
    let mut scale = f64::INFINITY;
    for a in 0..2 {
        let range = hi[a] - lo[a];
        if range > 0.0 {
            scale = scale.min(usable[a] / range);
        }
    }
    let mut floor: Vec<[f64; 2]> = Vec::with_capacity(n);
    if scale.is_finite() {
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        for r in 0..n {
            floor.push([(axis(r, 0) - mid[0]) * scale, (axis(r, 1) - mid[1]) * scale]);
        }
    } else if n == 1 {
        floor.push([0.0, 0.0]);
    } else {
        for &m in members {
            let h = fnv1a(space.solution(m).id.as_bytes());
            let angle = (h as f64 / u64::MAX as f64) * core::f64::consts::TAU;
            floor.push([
                DEGENERATE_JITTER * libm::cos(angle),
                DEGENERATE_JITTER * libm::sin(angle),
            ]);
        }
    }
    let row_of = |m: usize| members.binary_search(&m).ok();

    let leaves = tree.leaves();
    let mut leaf_of: Vec<Option<&str>> = alloc::vec![None; n];
    for leaf in &leaves {
        for &m in &leaf.members {
            if let Some(r) = row_of(m) {
                leaf_of[r] = Some(leaf.id.as_str());
            }
        }
    }
    let stars = members
        .iter()
        .enumerate()
        .map(|(r, &m)| StarPoint {
            solution: m,
            id: space.solution(m).id.clone(),
            cluster: leaf_of[r].unwrap_or("").into(),
            position: [floor[r][0], room.sky_height, floor[r][1]],
        })
        .collect();

    let mut cluster_stars = Vec::new();
    let mut tables = Vec::new();
    for c in tree.clusters() {
        let (mut sx, mut sz, mut count) = (0.0, 0.0, 0usize);
        for &m in &c.members {
            if let Some(r) = row_of(m) {
                sx += floor[r][0];
                sz += floor[r][1];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::DimensionMismatch {
                what: "cluster members outside embedding",
                expected: c.members.len(),
                found: 0,
            });
        }
        let (cx, cz) = (sx / count as f64, sz / count as f64);
        cluster_stars.push(ClusterStar {
            cluster: c.id.clone(),
            position: [cx, room.sky_height, cz],
        });
        tables.push(TablePlacement {
            cluster: c.id.clone(),
            representative: c.representative,
            representative_id: space.solution(c.representative).id.clone(),
            position: [cx, room.table_height, cz],
        });
    }
    Ok(SpatialLayout {
        room: *room,
        stars,
        cluster_stars,
        tables,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LodLevel {
    Star,
    Representative,
    FullDetail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LodThresholds {
    /// Below this distance (meters) everything is shown.
    pub full_detail: f64,
    /// At or beyond this distance only stars remain.
    pub star: f64,
}

impl Default for LodThresholds {
    fn default() -> Self {
        LodThresholds {
            full_detail: 3.0,
            star: 10.0,
        }
    }
}

pub fn lod_for(distance: f64, thresholds: &LodThresholds) -> LodLevel {
    if distance < thresholds.full_detail {
        LodLevel::FullDetail
    } else if distance < thresholds.star {
        LodLevel::Representative
    } else {
        LodLevel::Star
    }
}
