//! On-disk dataset layout, record validation and ingest into a
//! [`SolutionSpace`].
//!
//! ```text
//! <root>/manifest.json
//! <root>/meta/<id>.json
//! <root>/meshes/<id>.obj
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use dreamspace_core::geometry::{d2_descriptor, D2_DEFAULT_PAIRS};
use dreamspace_core::rng::fnv1a;
use dreamspace_core::{Channel, DesignSolution, ParamSet, PropertySet, SolutionSpace};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordViolation, Result};
use crate::mesh_io;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_DIR: &str = "meta";
pub const MESH_DIR: &str = "meshes";
/// Serialized space written by `ingest`.
pub const SPACE_FILE: &str = "space.json";

/// Full-factorial parameter grid, one list per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub middle_load: Vec<f64>,
    pub outer_load: Vec<f64>,
    pub voxel_size: Vec<f64>,
    pub volume_minimization: Vec<u32>,
}

impl ParameterGrid {
    pub fn len(&self) -> usize {
        self.middle_load.len() * self.outer_load.len() * self.voxel_size.len() * self.volume_minimization.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row-major order with their index tuples.
    pub fn points(&self) -> Vec<([usize; 4], ParamSet)> {
        let mut out = Vec::with_capacity(self.len());
        for (a, &m) in self.middle_load.iter().enumerate() {
            for (b, &o) in self.outer_load.iter().enumerate() {
                for (c, &v) in self.voxel_size.iter().enumerate() {
                    for (d, &l) in self.volume_minimization.iter().enumerate() {
                        out.push((
                            [a, b, c, d],
                            ParamSet {
                                middle_load: m,
                                outer_load: o,
                                voxel_size: v,
                                volume_minimization: l,
                            },
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Provenance of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub seed: u64,
    pub monitor_mass_kg: f64,
    pub min_design_load_n: f64,
    /// Noise standard deviation as a fraction of each channel's range.
    pub noise_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub count: usize,
    pub parameters: ParameterGrid,
    /// Channel names present in every record.
    pub properties: Vec<String>,
    pub mesh_format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

/// Structural capacity recorded by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    /// Newtons.
    pub supportable_load: f64,
}

/// Contents of `meta/<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub params: ParamSet,
    pub properties: PropertySet,
    /// Mesh path relative to the dataset root.
    pub mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignInfo>,
}

impl Record {
    pub fn to_solution(&self) -> DesignSolution {
        DesignSolution {
            id: self.id.clone(),
            params: self.params,
            properties: self.properties,
            mesh_ref: self.mesh.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn violation(field: &str, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        message: message.into(),
    }
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.')
}

/// Relative, inside the root, no parent hops.
fn is_contained(rel: &str) -> bool {
    let p = Path::new(rel);
    !rel.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

/// Schema checks on one record. Returns every violation found.
pub fn validate_record(r: &Record) -> Vec<Violation> {
    let mut out = Vec::new();
    if !is_valid_id(&r.id) {
        out.push(violation("id", format!("id {:?} must be non-empty [A-Za-z0-9._-]", r.id)));
    }
    let p = &r.params;
    for (name, v) in [("middle_load", p.middle_load), ("outer_load", p.outer_load), ("voxel_size", p.voxel_size)] {
        if !(v.is_finite() && v > 0.0) {
            out.push(violation(&format!("params.{name}"), format!("{name} must be > 0")));
        }
    }
    let props = &r.properties;
    for ch in Channel::ALL {
        if !props.get(ch).is_finite() {
            out.push(violation(
                &format!("properties.{}", ch.name()),
                format!("{} must be finite", ch.name()),
            ));
        }
    }
    if !(0.0..=100.0).contains(&props.overhang_percentage) {
        out.push(violation("properties.overhang_percentage", "overhang_percentage out of [0,100]"));
    }
    for (name, v) in [("surface_area", props.surface_area), ("weight", props.weight)] {
        if !(v > 0.0) {
            out.push(violation(&format!("properties.{name}"), format!("{name} must be > 0")));
        }
    }
    if !is_contained(&r.mesh) {
        out.push(violation("mesh", "mesh must be a relative path inside the dataset"));
    }
    if let Some(d) = &r.design {
        if !(d.supportable_load.is_finite() && d.supportable_load > 0.0) {
            out.push(violation("design.supportable_load", "supportable_load must be > 0"));
        }
    }
    out
}

/// Ingest knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    /// D2 point pairs per mesh.
    pub pairs: usize,
    /// Mixed into every per-solution sampling seed.
    pub seed: u64,
    /// Metric channels entering the feature space.
    pub channels: Vec<Channel>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            pairs: D2_DEFAULT_PAIRS,
            seed: 0,
            channels: Channel::ALL.to_vec(),
        }
    }
}

/// Deterministic sampling seed of one solution.
pub fn shape_seed(id: &str, seed: u64) -> u64 {
    fnv1a(id.as_bytes()) ^ seed
}

/// An ingested dataset: the space plus where its meshes live.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub space: SolutionSpace,
}

impl Dataset {
    pub fn mesh_path(&self, id: &str) -> Option<PathBuf> {
        let i = self.space.index_of(id)?;
        Some(self.root.join(&self.space.solution(i).mesh_ref))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::NoManifest(root.to_path_buf()));
    }
    let manifest: Manifest = read_json(&path)?;
    for name in &manifest.properties {
        if Channel::from_name(name).is_none() {
            return Err(Error::Malformed {
                path,
                field: "properties".into(),
                message: format!("unknown property channel {name}"),
            });
        }
    }
    Ok(manifest)
}

/// Records under `meta/`, sorted by file name.
pub fn read_records(root: &Path) -> Result<Vec<Record>> {
    let dir = root.join(META_DIR);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    let parsed: Vec<Result<Record>> = paths.par_iter().map(|p| read_json(p)).collect();
    parsed.into_iter().collect()
}

/// Reads, validates and featurizes a dataset directory.
pub fn load_dataset(root: &Path, opts: &IngestOptions) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let mut records = read_records(root)?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId(w[0].id.clone()));
    }

    let violations: Vec<RecordViolation> = records
        .iter()
        .flat_map(|r| {
            validate_record(r).into_iter().map(|v| RecordViolation {
                id: r.id.clone(),
                field: v.field,
                message: v.message,
            })
        })
        .collect();
    if !violations.is_empty() {
        return Err(Error::InvalidRecords(violations));
    }
    if records.len() != manifest.count {
        return Err(Error::Invalid(format!(
            "manifest declares {} solutions, found {} records",
            manifest.count,
            records.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::Invalid("dataset has no solutions".into()));
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !root.join(&r.mesh).is_file())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingMeshes(missing));
    }
    if opts.channels.is_empty() {
        return Err(Error::Invalid("at least one metric channel is required".into()));
    }
    let unique: BTreeSet<Channel> = opts.channels.iter().copied().collect();
    if unique.len() != opts.channels.len() {
        return Err(Error::Invalid("metric channels must be distinct".into()));
    }

    tracing::info!(count = records.len(), pairs = opts.pairs, "computing shape descriptors");
    let shapes: Vec<Result<Vec<f64>>> = records
        .par_iter()
        .map(|r| {
            let path = root.join(&r.mesh);
            let mesh = mesh_io::parse_mesh(&path)?;
            let d2 = d2_descriptor(&mesh, opts.pairs, shape_seed(&r.id, opts.seed)).map_err(|e| {
                Error::Invalid(format!("{}: {e}", path.display()))
            })?;
            Ok(d2.histogram)
        })
        .collect();
    let shapes = shapes.into_iter().collect::<Result<Vec<_>>>()?;
    let solutions = records.iter().map(Record::to_solution).collect();
    let space = SolutionSpace::build(solutions, shapes, &opts.channels)?;
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
        space,
    })
}

/// Self-contained serialized space; meshes resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub options: IngestOptions,
    pub space: SolutionSpace,
}

pub fn save_space(path: &Path, file: &SpaceFile) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer(&mut w, file).map_err(|e| Error::Internal(e.to_string()))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_space_file(path: &Path) -> Result<SpaceFile> {
    read_json(path)
}

/// Opens a dataset directory, a directory holding `space.json`, or a
/// `space.json` file. Returns the dataset root (for meshes), name and space.
pub fn open_space(path: &Path, opts: &IngestOptions) -> Result<(PathBuf, String, SolutionSpace)> {
    if path.is_file() {
        let file = read_space_file(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok((root, file.name, file.space));
    }
    if !path.is_dir() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let cached = path.join(SPACE_FILE);
    if cached.is_file() {
        let file = read_space_file(&cached)?;
        if &file.options == opts {
            return Ok((path.to_path_buf(), file.name, file.space));
        }
    }
    let ds = load_dataset(path, opts)?;
    Ok((ds.root, ds.manifest.name, ds.space))
}
