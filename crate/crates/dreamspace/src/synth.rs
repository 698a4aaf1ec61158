//! Synthetic monitor-stand dataset over a full-factorial parameter grid.
//!
//! Each design is three cylindrical feet, three platform slabs and a set of
//! kinked square struts. Geometric channels are measured on the generated
//! mesh; structural channels come from a closed-form truss model plus
//! seeded Gaussian noise.

use std::fs;
use std::path::Path;

use dreamspace_core::geometry::{
    box_mesh, center_of_mass, surface_area, triangle_area, unit_cube, volume, Point3, TriangleMesh,
};
use dreamspace_core::rng::{fnv1a, gaussian, seeded};
use dreamspace_core::{Channel, ParamSet, PropertySet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DesignInfo, GeneratorInfo, Manifest, ParameterGrid, Record, MANIFEST_FILE, META_DIR, MESH_DIR};
use crate::error::{Error, Result};
use crate::mesh_io::write_obj;

pub const STANDARD_GRAVITY: f64 = 9.806_65;
/// Factor between the monitor's static weight and the design load.
pub const LOAD_SAFETY_FACTOR: f64 = 2.5;
pub const DEFAULT_MONITOR_MASS_KG: f64 = 8.3;
/// Highest volume-minimization level; the thinnest, sparsest designs.
pub const MAX_VOLUME_LEVEL: u32 = 167;
/// Printed resin, g/mm³.
pub const DENSITY: f64 = 1.24e-3;
/// Young's modulus, MPa.
pub const YOUNGS_MODULUS: f64 = 3500.0;
/// Allowable strut stress, MPa.
pub const ALLOWABLE_STRESS: f64 = 20.0;
/// Coordinates are snapped to this grid, mm.
pub const COORDINATE_QUANTUM: f64 = 1e-4;

const FOOT_RADIUS: f64 = 20.0;
const FOOT_HEIGHT: f64 = 6.0;
const PLATFORM_BOTTOM: f64 = 74.0;
const PLATFORM_TOP: f64 = 80.0;
const ANCHOR_INSET: f64 = 8.0;
const MAX_STRUTS: usize = 9;
const MIN_STRUTS: usize = 6;
/// Triangles facing further down than 45° overhang.
const OVERHANG_NORMAL_Z: f64 = -core::f64::consts::FRAC_1_SQRT_2;

const FEET: [[f64; 2]; 3] = [[-100.0, -50.0], [100.0, -50.0], [0.0, 80.0]];
/// Center and half extents of the left, right and middle platforms.
const PLATFORMS: [([f64; 2], [f64; 2]); 3] = [
    ([-110.0, 0.0], [25.0, 20.0]),
    ([110.0, 0.0], [25.0, 20.0]),
    ([0.0, 10.0], [35.0, 25.0]),
];
/// (foot, platform) pairs in the order struts are dropped from the end.
const STRUTS: [(usize, usize); MAX_STRUTS] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (0, 2),
    (1, 2),
    (2, 0),
    (2, 1),
    (0, 1),
    (1, 0),
];

/// Minimum design load for a monitor of the given mass, rounded to 10 N.
pub fn min_design_load(monitor_mass_kg: f64) -> f64 {
    (monitor_mass_kg * STANDARD_GRAVITY * LOAD_SAFETY_FACTOR / 10.0).round() * 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: String,
    pub grid: ParameterGrid,
    pub seed: u64,
    pub monitor_mass_kg: f64,
    /// Noise σ as a fraction of each structural channel's range.
    pub noise_fraction: f64,
}

impl SynthConfig {
    /// 5 middle loads × 5 outer loads × 4 voxel sizes × 168 levels = 16,800.
    pub fn default_grid() -> ParameterGrid {
        ParameterGrid {
            middle_load: vec![100.0, 150.0, 200.0, 250.0, 300.0],
            outer_load: vec![100.0, 150.0, 200.0, 250.0, 300.0],
            voxel_size: vec![0.5, 1.0, 1.5, 2.0],
            volume_minimization: (0..=MAX_VOLUME_LEVEL).collect(),
        }
    }

    pub fn with_grid(grid: ParameterGrid, seed: u64) -> Self {
        SynthConfig {
            name: "monitor-stand".into(),
            grid,
            seed,
            monitor_mass_kg: DEFAULT_MONITOR_MASS_KG,
            noise_fraction: 0.02,
        }
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.is_empty() {
            return Err(Error::Invalid("every parameter list needs at least one value".into()));
        }
        let bad = |v: &f64| !(v.is_finite() && *v > 0.0);
        if g.middle_load.iter().chain(&g.outer_load).chain(&g.voxel_size).any(bad) {
            return Err(Error::Invalid("loads and voxel sizes must be positive".into()));
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return Err(Error::Invalid("noise fraction must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::with_grid(SynthConfig::default_grid(), 0)
    }
}

/// Generated geometry and the truss quantities the structural model needs.
#[derive(Debug, Clone)]
pub struct StandModel {
    pub mesh: TriangleMesh,
    pub struts: usize,
    /// Strut cross-section edge, mm.
    pub thickness: f64,
    /// Mean centerline length through the knee, mm.
    pub mean_strut_length: f64,
    /// Mean rise over length of the struts.
    pub vertical_cosine: f64,
    /// Newtons.
    pub supportable_load: f64,
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: Point3, d: Point3, s: f64) -> Point3 {
    [a[0] + d[0] * s, a[1] + d[1] * s, a[2] + d[2] * s]
}

fn len(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit(a: Point3) -> Point3 {
    let l = len(a);
    [a[0] / l, a[1] / l, a[2] / l]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn signed_volume(m: &TriangleMesh) -> f64 {
    (0..m.triangles().len())
        .map(|t| {
            let [a, b, c] = m.corners(t);
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0])
        })
        .sum::<f64>()
        / 6.0
}

/// Flips the winding if the component encloses negative volume.
fn outward(m: TriangleMesh) -> Result<TriangleMesh> {
    if signed_volume(&m) >= 0.0 {
        return Ok(m);
    }
    let tris = m.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
    Ok(TriangleMesh::new(m.vertices().to_vec(), tris)?)
}

fn cylinder(center: [f64; 2], radius: f64, z0: f64, z1: f64, segments: usize) -> Result<TriangleMesh> {
    let mut v = vec![[center[0], center[1], z0], [center[0], center[1], z1]];
    for z in [z0, z1] {
        for i in 0..segments {
            let a = std::f64::consts::TAU * i as f64 / segments as f64;
            v.push([center[0] + radius * a.cos(), center[1] + radius * a.sin(), z]);
        }
    }
    let s = segments as u32;
    let b = |i: u32| 2 + i % s;
    let t = |i: u32| 2 + s + i % s;
    let mut tris = Vec::with_capacity(4 * segments);
    for i in 0..s {
        tris.push([0, b(i + 1), b(i)]);
        tris.push([1, t(i), t(i + 1)]);
        tris.push([b(i), b(i + 1), t(i + 1)]);
        tris.push([b(i), t(i + 1), t(i)]);
    }
    outward(TriangleMesh::new(v, tris)?)
}

/// Square prism of edge `t` along the segment `p → q`.
fn prism(p: Point3, q: Point3, t: f64) -> Result<TriangleMesh> {
    let axis = sub(q, p);
    let d = unit(axis);
    let side = cross(d, [0.0, 0.0, 1.0]);
    let u = if len(side) > 1e-9 { unit(side) } else { [1.0, 0.0, 0.0] };
    let w = cross(d, u);
    let m = unit_cube().map_vertices(|c| {
        let mut out = add_scaled(p, u, (c[0] - 0.5) * t);
        out = add_scaled(out, w, (c[1] - 0.5) * t);
        add_scaled(out, axis, c[2])
    });
    outward(m)
}

fn foot_segments(voxel: f64) -> usize {
    ((12.0 * (0.5 / voxel).sqrt()).round() as usize).max(6)
}

fn quantize(p: Point3) -> Point3 {
    p.map(|c| (c / COORDINATE_QUANTUM).round() * COORDINATE_QUANTUM)
}

/// Builds the stand for one parameter combination.
pub fn build_stand(params: &ParamSet, min_load: f64) -> Result<StandModel> {
    let total = params.middle_load + params.outer_load;
    let frac = f64::from(params.volume_minimization.min(MAX_VOLUME_LEVEL)) / f64::from(MAX_VOLUME_LEVEL);
    let struts = MAX_STRUTS - ((MAX_STRUTS - MIN_STRUTS) as f64 * frac).round() as usize;
    let safety = 3.0 - 1.8 * frac;
    let design = total.max(min_load);
    let area = design * safety / ALLOWABLE_STRESS / struts as f64;
    let thickness = area.sqrt().max(2.0 * params.voxel_size);
    let supportable_load = ALLOWABLE_STRESS * struts as f64 * thickness * thickness;
    let bow = 15.0 * (params.outer_load - params.middle_load) / total;

    let mut mesh = cylinder(FEET[0], FOOT_RADIUS, 0.0, FOOT_HEIGHT, foot_segments(params.voxel_size))?;
    for f in &FEET[1..] {
        mesh.append(&cylinder(*f, FOOT_RADIUS, 0.0, FOOT_HEIGHT, foot_segments(params.voxel_size))?);
    }
    for (c, h) in PLATFORMS {
        mesh.append(&box_mesh(
            [c[0] - h[0], c[1] - h[1], PLATFORM_BOTTOM],
            [c[0] + h[0], c[1] + h[1], PLATFORM_TOP],
        ));
    }
    let (mut length_sum, mut cos_sum) = (0.0, 0.0);
    for &(f, p) in &STRUTS[..struts] {
        let foot = FEET[f];
        let plat = PLATFORMS[p].0;
        let dir = unit([plat[0] - foot[0], plat[1] - foot[1], 0.0]);
        let a = [foot[0] + ANCHOR_INSET * dir[0], foot[1] + ANCHOR_INSET * dir[1], FOOT_HEIGHT / 2.0];
        let b = [
            plat[0] - ANCHOR_INSET * dir[0],
            plat[1] - ANCHOR_INSET * dir[1],
            (PLATFORM_BOTTOM + PLATFORM_TOP) / 2.0,
        ];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
        let radial = [mid[0], mid[1], 0.0];
        let out = if len(radial) > 1e-9 { unit(radial) } else { [0.0, -1.0, 0.0] };
        let knee = add_scaled(mid, out, bow);
        let (l1, l2) = (len(sub(knee, a)), len(sub(b, knee)));
        length_sum += l1 + l2;
        cos_sum += (b[2] - a[2]) / (l1 + l2);
        // Both segments run one thickness past the knee so the joint is solid.
        mesh.append(&prism(a, add_scaled(knee, unit(sub(knee, a)), thickness), thickness)?);
        mesh.append(&prism(add_scaled(knee, unit(sub(knee, b)), thickness), b, thickness)?);
    }
    Ok(StandModel {
        mesh: mesh.map_vertices(quantize),
        struts,
        thickness,
        mean_strut_length: length_sum / struts as f64,
        vertical_cosine: cos_sum / struts as f64,
        supportable_load,
    })
}

/// Share of surface area facing downward past 45°, excluding the desk contact.
pub fn overhang_percentage(mesh: &TriangleMesh) -> f64 {
    let (mut down, mut total) = (0.0, 0.0);
    for t in 0..mesh.triangles().len() {
        let c = mesh.corners(t);
        let a = triangle_area(c);
        total += a;
        let n = cross(sub(c[1], c[0]), sub(c[2], c[0]));
        let l = len(n);
        if l > 0.0 && n[2] / l < OVERHANG_NORMAL_Z && c.iter().all(|p| p[2] > 1e-6) {
            down += a;
        }
    }
    if total > 0.0 {
        100.0 * down / total
    } else {
        0.0
    }
}

/// Structural channels before noise, in order: max displacement, max strain,
/// total strain, max von Mises stress, objective value.
pub fn structural_response(params: &ParamSet, model: &StandModel) -> [f64; 5] {
    let f = params.middle_load + params.outer_load;
    let imbalance = (params.middle_load - params.outer_load).abs() / f;
    let n = model.struts as f64;
    let area = model.thickness * model.thickness;
    let c = model.vertical_cosine;
    let l = model.mean_strut_length;
    let displacement =
        f * l / (n * YOUNGS_MODULUS * area * c * c) * (1.0 + 0.5 * imbalance) * (1.0 + 0.1 * params.voxel_size);
    let strain = displacement / l * (1.0 + 0.3 * imbalance);
    let total_strain = strain * n * (0.6 + 0.1 * params.voxel_size);
    let vonmises = f / (n * area * c) * (1.0 + 0.8 * params.middle_load / f);
    let objective = f * displacement / 1000.0;
    [displacement, strain, total_strain, vonmises, objective]
}

/// Deterministic id of a grid point.
pub fn design_id(index: [usize; 4]) -> String {
    format!("stand-{:02}-{:02}-{:02}-{:02}", index[0], index[1], index[2], index[3])
}

struct Generated {
    record: Record,
    response: [f64; 5],
}

fn generate_one(index: [usize; 4], params: ParamSet, min_load: f64, out: &Path) -> Result<Generated> {
    let id = design_id(index);
    let model = build_stand(&params, min_load)?;
    let mesh_rel = format!("{MESH_DIR}/{id}.obj");
    let mesh_path = out.join(&mesh_rel);
    let mut buf = Vec::with_capacity(32 * 1024);
    write_obj(&model.mesh, &mut buf).map_err(|e| Error::io(&mesh_path, e))?;
    fs::write(&mesh_path, buf).map_err(|e| Error::io(&mesh_path, e))?;

    let vol = volume(&model.mesh)?;
    let area = surface_area(&model.mesh);
    let com = center_of_mass(&model.mesh)?;
    let response = structural_response(&params, &model);
    let properties = PropertySet {
        center_of_mass: com,
        weight: vol * DENSITY,
        overhang_percentage: overhang_percentage(&model.mesh),
        surface_area: area,
        area_volume_ratio: area / vol,
        max_displacement: response[0],
        max_strain: response[1],
        total_strain: response[2],
        max_vonmises: response[3],
        objective_value: response[4],
    };
    Ok(Generated {
        record: Record {
            id,
            params,
            properties,
            mesh: mesh_rel,
            design: Some(DesignInfo {
                supportable_load: model.supportable_load,
            }),
        },
        response,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the dataset tree under `out`, which must be absent or empty.
/// Output is byte-identical for equal configurations.
pub fn generate(cfg: &SynthConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        if entries.next().is_some() {
            return Err(Error::Invalid(format!("output directory {} is not empty", out.display())));
        }
    }
    for dir in [out.join(META_DIR), out.join(MESH_DIR)] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let min_load = min_design_load(cfg.monitor_mass_kg);
    let points = cfg.grid.points();
    tracing::info!(count = points.len(), "generating stands");
    let generated: Vec<Result<Generated>> = points
        .par_iter()
        .map(|(index, params)| generate_one(*index, *params, min_load, out))
        .collect();
    let mut generated = generated.into_iter().collect::<Result<Vec<_>>>()?;

    let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 5];
    for g in &generated {
        for (r, v) in ranges.iter_mut().zip(g.response) {
            *r = (r.0.min(v), r.1.max(v));
        }
    }
    generated.par_iter_mut().try_for_each(|g| -> Result<()> {
        let mut rng = seeded(fnv1a(g.record.id.as_bytes()) ^ cfg.seed);
        let mut noisy = [0.0; 5];
        for (k, (base, (lo, hi))) in g.response.iter().zip(ranges).enumerate() {
            let v = base + cfg.noise_fraction * (hi - lo) * gaussian(&mut rng);
            // Noise never flips a physical magnitude's sign.
            noisy[k] = v.max(0.01 * base);
        }
        let p = &mut g.record.properties;
        p.max_displacement = noisy[0];
        p.max_strain = noisy[1];
        p.total_strain = noisy[2];
        p.max_vonmises = noisy[3];
        p.objective_value = noisy[4];
        write_json(&out.join(META_DIR).join(format!("{}.json", g.record.id)), &g.record)
    })?;

    let manifest = Manifest {
        name: cfg.name.clone(),
        count: generated.len(),
        parameters: cfg.grid.clone(),
        properties: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
        mesh_format: "obj".into(),
        generator: Some(GeneratorInfo {
            seed: cfg.seed,
            monitor_mass_kg: cfg.monitor_mass_kg,
            min_design_load_n: min_load,
            noise_fraction: cfg.noise_fraction,
        }),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: f64, o: f64, v: f64, l: u32) -> ParamSet {
        ParamSet {
            middle_load: m,
            outer_load: o,
            voxel_size: v,
            volume_minimization: l,
        }
    }

    #[test]
    fn minimum_load_for_default_monitor() {
        assert_eq!(min_design_load(DEFAULT_MONITOR_MASS_KG), 200.0);
    }

    #[test]
    fn default_grid_has_16800_points() {
        assert_eq!(SynthConfig::default_grid().len(), 16_800);
    }

    #[test]
    fn stand_is_closed_and_supports_minimum() {
        for p in [params(100.0, 100.0, 0.5, 0), params(300.0, 100.0, 2.0, MAX_VOLUME_LEVEL), params(150.0, 250.0, 1.0, 80)] {
            let m = build_stand(&p, 200.0).unwrap();
            assert!(m.mesh.is_closed());
            assert!(volume(&m.mesh).unwrap() > 0.0);
            assert!(m.supportable_load >= 200.0);
            assert!(m.supportable_load >= p.middle_load + p.outer_load);
            let z_min = m.mesh.vertices().iter().map(|v| v[2]).fold(f64::INFINITY, f64::min);
            assert!(z_min >= 0.0, "stand dips below the desk: {z_min}");
        }
    }

    #[test]
    fn components_are_outward() {
        let m = build_stand(&params(200.0, 200.0, 1.0, 10), 200.0).unwrap();
        assert!(signed_volume(&m.mesh) > 0.0);
        let v = volume(&m.mesh).unwrap();
        assert!((v - signed_volume(&m.mesh)).abs() <= 1e-9 * v);
    }

    #[test]
    fn higher_level_means_lighter() {
        let heavy = build_stand(&params(200.0, 200.0, 1.0, 0), 200.0).unwrap();
        let light = build_stand(&params(200.0, 200.0, 1.0, MAX_VOLUME_LEVEL), 200.0).unwrap();
        assert!(volume(&light.mesh).unwrap() < volume(&heavy.mesh).unwrap());
        assert_eq!((heavy.struts, light.struts), (9, 6));
    }

    #[test]
    fn stiffer_struts_deflect_less() {
        let p = params(200.0, 200.0, 1.0, 0);
        let thick = build_stand(&p, 200.0).unwrap();
        let thin = build_stand(&params(200.0, 200.0, 1.0, MAX_VOLUME_LEVEL), 200.0).unwrap();
        assert!(structural_response(&p, &thick)[0] < structural_response(&p, &thin)[0]);
    }

    #[test]
    fn overhang_of_upright_box_is_zero_on_desk() {
        let b = box_mesh([0.0; 3], [1.0; 3]);
        assert_eq!(overhang_percentage(&b), 0.0);
        let lifted = b.translated([0.0, 0.0, 1.0]);
        assert!((overhang_percentage(&lifted) - 100.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn light_loads_still_meet_minimum() {
        let m = build_stand(&params(50.0, 60.0, 1.0, MAX_VOLUME_LEVEL), 200.0).unwrap();
        assert!(m.supportable_load >= 200.0);
    }

    #[test]
    fn rejects_empty_grid() {
        let mut cfg = SynthConfig::default();
        cfg.grid.voxel_size.clear();
        assert!(cfg.validate().is_err());
    }
}
