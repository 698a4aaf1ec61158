//! Triangle meshes, exact integral properties and the D2 shape distribution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::rng;

/// Vertices closer than this (per axis, millimeters) are merged.
pub const WELD_TOLERANCE: f64 = 1e-6;
pub const D2_BINS: usize = 64;
pub const D2_DEFAULT_PAIRS: usize = 100_000;
pub const D2_MIN_PAIRS: usize = 1000;

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point3) -> f64 {
    libm::sqrt(dot(a, a))
}

impl TriangleMesh {
    /// Validates indices, coordinates and the non-empty triangle list. No welding.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
        }
        let n = vertices.len();
        if let Some(t) = triangles.iter().position(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidMesh(format!(
                "triangle {t} references a vertex outside 0..{n}"
            )));
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    /// Builds an indexed mesh, merging vertices within [`WELD_TOLERANCE`].
    pub fn welded(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let raw = TriangleMesh::new(vertices, triangles)?;
        let (verts, remap) = weld(&raw.vertices, WELD_TOLERANCE);
        let tris = raw
            .triangles
            .iter()
            .map(|t| [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]])
            .collect();
        TriangleMesh::new(verts, tris)
    }

    /// Welds a triangle soup, as produced by STL files.
    pub fn from_soup(soup: &[[Point3; 3]]) -> Result<Self> {
        let mut vertices = Vec::with_capacity(soup.len() * 3);
        let mut triangles = Vec::with_capacity(soup.len());
        for (i, tri) in soup.iter().enumerate() {
            vertices.extend_from_slice(tri);
            let b = (3 * i) as u32;
            triangles.push([b, b + 1, b + 2]);
        }
        TriangleMesh::welded(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Applies `f` to every vertex, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> TriangleMesh {
        self.map_vertices(|v| [v[0] * s, v[1] * s, v[2] * s])
    }

    pub fn translated(&self, t: Point3) -> TriangleMesh {
        self.map_vertices(|v| [v[0] + t[0], v[1] + t[1], v[2] + t[2]])
    }

    /// Appends another mesh as a separate component.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    /// Indices of triangles whose area is exactly zero.
    pub fn degenerate_triangles(&self) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&t| triangle_area(self.corners(t)) == 0.0)
            .collect()
    }

    /// Every edge shared by exactly two triangles. Triangles with repeated
    /// vertex indices carry no edges.
    pub fn is_closed(&self) -> bool {
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(self.triangles.len() * 3);
        for t in &self.triangles {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.push((a.min(b), a.max(b)));
            }
        }
        if edges.is_empty() {
            return false;
        }
        edges.sort_unstable();
        let mut i = 0;
        while i < edges.len() {
            let mut j = i;
            while j < edges.len() && edges[j] == edges[i] {
                j += 1;
            }
            if j - i != 2 {
                return false;
            }
            i = j;
        }
        true
    }
}

/// Merges points within `tol` of an earlier point (Chebyshev distance).
/// Returns the unique points in first-seen order and the index remap.
fn weld(points: &[Point3], tol: f64) -> (Vec<Point3>, Vec<u32>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(points[a][2].total_cmp(&points[b][2]))
            .then(a.cmp(&b))
    });
    // representative original index for every point
    let mut rep: Vec<usize> = (0..points.len()).collect();
    for (pos, &i) in order.iter().enumerate() {
        let p = points[i];
        let mut k = pos;
        while k > 0 {
            k -= 1;
            let j = order[k];
            let q = points[j];
            if p[0] - q[0] > tol {
                break;
            }
            if (p[1] - q[1]).abs() <= tol && (p[2] - q[2]).abs() <= tol {
                let r = rep[j];
                if r < rep[i] {
                    rep[i] = r;
                }
            }
        }
    }
    let mut new_index = vec![u32::MAX; points.len()];
    let mut unique = Vec::new();
    let mut remap = vec![0u32; points.len()];
    for i in 0..points.len() {
        let r = rep[i];
        if new_index[r] == u32::MAX {
            new_index[r] = unique.len() as u32;
            unique.push(points[r]);
        }
        remap[i] = new_index[r];
    }
    (unique, remap)
}

pub fn triangle_area(c: [Point3; 3]) -> f64 {
    0.5 * norm(cross(sub(c[1], c[0]), sub(c[2], c[0])))
}

/// Sum of triangle areas, mm².
pub fn surface_area(mesh: &TriangleMesh) -> f64 {
    (0..mesh.triangles.len())
        .map(|t| triangle_area(mesh.corners(t)))
        .sum()
}

/// Signed volume and the volume-weighted centroid sum over origin tetrahedra.
fn signed_moments(mesh: &TriangleMesh) -> (f64, Point3) {
    let mut vol = 0.0;
    let mut first = [0.0; 3];
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let v = dot(a, cross(b, c)) / 6.0;
        vol += v;
        for k in 0..3 {
            first[k] += v * (a[k] + b[k] + c[k]) / 4.0;
        }
    }
    (vol, first)
}

/// Enclosed volume, mm³. Orientation-agnostic (absolute value).
pub fn volume(mesh: &TriangleMesh) -> Result<f64> {
    if !mesh.is_closed() {
        return Err(Error::NotClosed);
    }
    Ok(signed_moments(mesh).0.abs())
}

/// Center of mass of the enclosed solid at uniform density, mm.
pub fn center_of_mass(mesh: &TriangleMesh) -> Result<Point3> {
    if !mesh.is_closed() {
        return Err(Error::NotClosed);
    }
    let (vol, first) = signed_moments(mesh);
    if vol == 0.0 {
        return Err(Error::InvalidMesh("closed mesh encloses no volume".into()));
    }
    Ok([first[0] / vol, first[1] / vol, first[2] / vol])
}

/// Histogram of surface point-pair distances, normalized by the largest
/// sampled distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDescriptor {
    pub histogram: Vec<f64>,
    /// Normalization scale, mm.
    pub max_pair_distance: f64,
}

impl ShapeDescriptor {
    /// Mean normalized pair distance, reading each bin at its center.
    pub fn mean_normalized_distance(&self) -> f64 {
        let w = 1.0 / self.histogram.len() as f64;
        self.histogram
            .iter()
            .enumerate()
            .map(|(b, h)| h * (b as f64 + 0.5) * w)
            .sum()
    }

    pub fn l1(&self, other: &ShapeDescriptor) -> f64 {
        self.histogram
            .iter()
            .zip(&other.histogram)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Area-weighted uniform surface sampler.
pub struct SurfaceSampler<'a> {
    mesh: &'a TriangleMesh,
    /// Triangle picker proportional to area, O(1) per draw.
    picker: WeightedAliasIndex<f64>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        let areas: Vec<f64> = (0..mesh.triangles.len())
            .map(|t| triangle_area(mesh.corners(t)))
            .collect();
        let total: f64 = areas.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroArea);
        }
        let picker = WeightedAliasIndex::new(areas).map_err(|_| Error::ZeroArea)?;
        Ok(SurfaceSampler { mesh, picker })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        let t = self.picker.sample(rng);
        let [a, b, c] = self.mesh.corners(t);
        let r1 = libm::sqrt(rng.random::<f64>());
        let r2 = rng.random::<f64>();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        [
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ]
    }
}

/// D2 shape distribution over `n_pairs` area-uniform point pairs.
pub fn d2_descriptor(mesh: &TriangleMesh, n_pairs: usize, seed: u64) -> Result<ShapeDescriptor> {
    if n_pairs < D2_MIN_PAIRS {
        return Err(Error::Contract(format!(
            "d2_descriptor needs at least {D2_MIN_PAIRS} pairs, got {n_pairs}"
        )));
    }
    let sampler = SurfaceSampler::new(mesh)?;
    let mut rng = rng::seeded(seed);
    let mut dists = Vec::with_capacity(n_pairs);
    let mut max = 0.0f64;
    for _ in 0..n_pairs {
        let p = sampler.sample(&mut rng);
        let q = sampler.sample(&mut rng);
        let d = norm(sub(p, q));
        max = max.max(d);
        dists.push(d);
    }
    if !(max > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut histogram = vec![0.0; D2_BINS];
    let inc = 1.0 / n_pairs as f64;
    for d in dists {
        let b = ((d / max) * D2_BINS as f64) as usize;
        histogram[b.min(D2_BINS - 1)] += inc;
    }
    Ok(ShapeDescriptor {
        histogram,
        max_pair_distance: max,
    })
}

/// Axis-aligned box as 12 outward-facing triangles.
pub fn box_mesh(min: Point3, max: Point3) -> TriangleMesh {
    let v = |i: usize| -> Point3 {
        [
            if i & 1 == 0 { min[0] } else { max[0] },
            if i & 2 == 0 { min[1] } else { max[1] },
            if i & 4 == 0 { min[2] } else { max[2] },
        ]
    };
    let vertices = (0..8).map(v).collect();
    let triangles = vec![
        [0, 2, 3],
        [0, 3, 1], // z = min
        [4, 5, 7],
        [4, 7, 6], // z = max
        [0, 1, 5],
        [0, 5, 4], // y = min
        [2, 6, 7],
        [2, 7, 3], // y = max
        [0, 4, 6],
        [0, 6, 2], // x = min
        [1, 3, 7],
        [1, 7, 5], // x = max
    ];
    TriangleMesh {
        vertices,
        triangles,
    }
}

pub fn unit_cube() -> TriangleMesh {
    box_mesh([0.0; 3], [1.0; 3])
}
