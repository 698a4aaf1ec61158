//! Solution records, the normalized feature space, and distances within it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;

/// Tolerance on block sums (histograms, weight blocks).
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// Newtons.
    pub middle_load: f64,
    /// Newtons.
    pub outer_load: f64,
    /// Millimeters.
    pub voxel_size: f64,
    /// Ordered discrete setting, 0 = none.
    pub volume_minimization: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertySet {
    /// Millimeters.
    pub center_of_mass: [f64; 3],
    /// Grams.
    pub weight: f64,
    /// Percent in [0, 100].
    pub overhang_percentage: f64,
    /// Square millimeters.
    pub surface_area: f64,
    /// 1/mm.
    pub area_volume_ratio: f64,
    /// Millimeters.
    pub max_displacement: f64,
    pub max_strain: f64,
    pub total_strain: f64,
    /// MPa.
    pub max_vonmises: f64,
    pub objective_value: f64,
}

/// One scalar property channel. The center of mass contributes three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    CenterOfMassX,
    CenterOfMassY,
    CenterOfMassZ,
    Weight,
    OverhangPercentage,
    SurfaceArea,
    AreaVolumeRatio,
    MaxDisplacement,
    MaxStrain,
    TotalStrain,
    MaxVonmises,
    ObjectiveValue,
}

impl Channel {
    pub const ALL: [Channel; 12] = [
        Channel::CenterOfMassX,
        Channel::CenterOfMassY,
        Channel::CenterOfMassZ,
        Channel::Weight,
        Channel::OverhangPercentage,
        Channel::SurfaceArea,
        Channel::AreaVolumeRatio,
        Channel::MaxDisplacement,
        Channel::MaxStrain,
        Channel::TotalStrain,
        Channel::MaxVonmises,
        Channel::ObjectiveValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::CenterOfMassX => "center_of_mass_x",
            Channel::CenterOfMassY => "center_of_mass_y",
            Channel::CenterOfMassZ => "center_of_mass_z",
            Channel::Weight => "weight",
            Channel::OverhangPercentage => "overhang_percentage",
            Channel::SurfaceArea => "surface_area",
            Channel::AreaVolumeRatio => "area_volume_ratio",
            Channel::MaxDisplacement => "max_displacement",
            Channel::MaxStrain => "max_strain",
            Channel::TotalStrain => "total_strain",
            Channel::MaxVonmises => "max_vonmises",
            Channel::ObjectiveValue => "objective_value",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Channel::CenterOfMassX | Channel::CenterOfMassY | Channel::CenterOfMassZ => "mm",
            Channel::Weight => "g",
            Channel::OverhangPercentage => "%",
            Channel::SurfaceArea => "mm^2",
            Channel::AreaVolumeRatio => "1/mm",
            Channel::MaxDisplacement => "mm",
            Channel::MaxStrain | Channel::TotalStrain | Channel::ObjectiveValue => "",
            Channel::MaxVonmises => "MPa",
        }
    }

    pub fn from_name(name: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl PropertySet {
    pub fn get(&self, channel: Channel) -> f64 {
        match channel {
            Channel::CenterOfMassX => self.center_of_mass[0],
            Channel::CenterOfMassY => self.center_of_mass[1],
            Channel::CenterOfMassZ => self.center_of_mass[2],
            Channel::Weight => self.weight,
            Channel::OverhangPercentage => self.overhang_percentage,
            Channel::SurfaceArea => self.surface_area,
            Channel::AreaVolumeRatio => self.area_volume_ratio,
            Channel::MaxDisplacement => self.max_displacement,
            Channel::MaxStrain => self.max_strain,
            Channel::TotalStrain => self.total_strain,
            Channel::MaxVonmises => self.max_vonmises,
            Channel::ObjectiveValue => self.objective_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub id: String,
    pub params: ParamSet,
    pub properties: PropertySet,
    /// Path of the mesh file, relative to the dataset root.
    pub mesh_ref: String,
}

/// Per-solution coordinates in the clustering space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Min-max normalized metrics, each in [0, 1].
    pub metric: Vec<f64>,
    /// Shape histogram, non-negative and summing to 1.
    pub shape: Vec<f64>,
}

impl FeatureVector {
    pub fn dims(&self) -> (usize, usize) {
        (self.metric.len(), self.shape.len())
    }
}

/// Channel names behind each feature dimension of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub metric_channels: Vec<Channel>,
    pub shape_bins: usize,
}

impl FeatureLayout {
    pub fn all_channels(shape_bins: usize) -> Self {
        FeatureLayout {
            metric_channels: Channel::ALL.to_vec(),
            shape_bins,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.metric_channels.len(), self.shape_bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    /// Maps a raw value into [0, 1]; a degenerate range maps to 0.5.
    pub fn normalize(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            ((v - self.min) / span).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    pub fn denormalize(&self, t: f64) -> f64 {
        self.min + t * (self.max - self.min)
    }
}

/// Column-wise min-max scaling. Constant columns map to 0.5.
pub fn normalize_metrics(raw: &Matrix) -> Result<(Matrix, Vec<Bounds>)> {
    if raw.rows() == 0 || raw.cols() == 0 {
        return Err(contract("normalize_metrics needs at least one row and one column"));
    }
    raw.check_finite()?;
    let mut bounds = Vec::with_capacity(raw.cols());
    for j in 0..raw.cols() {
        let mut b = Bounds {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        for i in 0..raw.rows() {
            let v = raw.get(i, j);
            b.min = b.min.min(v);
            b.max = b.max.max(v);
        }
        bounds.push(b);
    }
    let mut out = Matrix::zeros(raw.rows(), raw.cols());
    for i in 0..raw.rows() {
        for (j, b) in bounds.iter().enumerate() {
            out.set(i, j, b.normalize(raw.get(i, j)));
        }
    }
    Ok((out, bounds))
}

/// Per-channel weights for both feature blocks plus the block balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub metric: Vec<f64>,
    pub shape: Vec<f64>,
    /// Share of the metric block in the combined distance, in [0, 1].
    pub balance: f64,
}

impl FeatureWeights {
    pub fn uniform(layout: &FeatureLayout, balance: f64) -> Self {
        let (m, s) = layout.dims();
        FeatureWeights {
            metric: uniform_block(m),
            shape: uniform_block(s),
            balance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.balance) {
            return Err(contract(format!("balance {} outside [0, 1]", self.balance)));
        }
        for (name, block) in [("metric", &self.metric), ("shape", &self.shape)] {
            if block.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(contract(format!("negative or non-finite {name} weight")));
            }
            if !block.is_empty() {
                let s: f64 = block.iter().sum();
                if (s - 1.0).abs() > SUM_TOLERANCE {
                    return Err(contract(format!("{name} weights sum to {s}, expected 1")));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn uniform_block(n: usize) -> Vec<f64> {
    if n == 0 {
        Vec::new()
    } else {
        alloc::vec![1.0 / n as f64; n]
    }
}

/// `λ·sqrt(Σ w (Δm)²) + (1−λ)·Σ w |Δs|`: weighted Euclidean over metrics,
/// weighted L1 over the shape histogram.
pub fn weighted_distance(a: &FeatureVector, b: &FeatureVector, w: &FeatureWeights) -> Result<f64> {
    check_dims(a, w)?;
    check_dims(b, w)?;
    Ok(distance_unchecked(a, b, w))
}

fn check_dims(v: &FeatureVector, w: &FeatureWeights) -> Result<()> {
    if v.metric.len() != w.metric.len() {
        return Err(Error::DimensionMismatch {
            what: "metric block",
            expected: w.metric.len(),
            found: v.metric.len(),
        });
    }
    if v.shape.len() != w.shape.len() {
        return Err(Error::DimensionMismatch {
            what: "shape block",
            expected: w.shape.len(),
            found: v.shape.len(),
        });
    }
    Ok(())
}

pub(crate) fn distance_unchecked(a: &FeatureVector, b: &FeatureVector, w: &FeatureWeights) -> f64 {
    let metric: f64 = a
        .metric
        .iter()
        .zip(&b.metric)
        .zip(&w.metric)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum();
    let shape: f64 = a
        .shape
        .iter()
        .zip(&b.shape)
        .zip(&w.shape)
        .map(|((x, y), w)| w * (x - y).abs())
        .sum();
    w.balance * libm::sqrt(metric) + (1.0 - w.balance) * shape
}

/// Maps a feature vector into the Euclidean space used by k-means and the
/// embeddings: each coordinate scaled by the square root of its block share
/// times its channel weight.
pub fn weighted_point(v: &FeatureVector, w: &FeatureWeights) -> Vec<f64> {
    let ms = w.balance;
    let ss = 1.0 - w.balance;
    v.metric
        .iter()
        .zip(&w.metric)
        .map(|(x, wj)| libm::sqrt(ms * wj) * x)
        .chain(v.shape.iter().zip(&w.shape).map(|(x, wj)| libm::sqrt(ss * wj) * x))
        .collect()
}

/// An ingested, immutable collection of solutions and their features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSpace {
    solutions: Vec<DesignSolution>,
    features: Vec<FeatureVector>,
    bounds: Vec<Bounds>,
    layout: FeatureLayout,
}

impl SolutionSpace {
    /// Orders solutions by id, normalizes the selected metric channels over
    /// the population and attaches the shape histograms.
    pub fn build(
        solutions: Vec<DesignSolution>,
        shapes: Vec<Vec<f64>>,
        metric_channels: &[Channel],
    ) -> Result<Self> {
        if solutions.is_empty() {
            return Err(contract("a solution space needs at least one solution"));
        }
        if solutions.len() != shapes.len() {
            return Err(Error::DimensionMismatch {
                what: "shape descriptors",
                expected: solutions.len(),
                found: shapes.len(),
            });
        }
        if metric_channels.is_empty() {
            return Err(contract("at least one metric channel is required"));
        }
        let bins = shapes[0].len();
        let mut paired: Vec<(DesignSolution, Vec<f64>)> = solutions.into_iter().zip(shapes).collect();
        paired.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        for pair in paired.windows(2) {
            if pair[0].0.id == pair[1].0.id {
                return Err(Error::Validation(format!("duplicate solution id {}", pair[0].0.id)));
            }
        }
        for (s, h) in &paired {
            if h.len() != bins {
                return Err(Error::DimensionMismatch {
                    what: "shape histogram",
                    expected: bins,
                    found: h.len(),
                });
            }
            if bins > 0 {
                let sum: f64 = h.iter().sum();
                if h.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "shape histogram of {} is not a distribution",
                        s.id
                    )));
                }
            }
        }
        let mut raw = Matrix::zeros(paired.len(), metric_channels.len());
        for (i, (s, _)) in paired.iter().enumerate() {
            for (j, ch) in metric_channels.iter().enumerate() {
                raw.set(i, j, s.properties.get(*ch));
            }
        }
        let (norm, bounds) = normalize_metrics(&raw)?;
        let mut solutions = Vec::with_capacity(paired.len());
        let mut features = Vec::with_capacity(paired.len());
        for (i, (s, h)) in paired.into_iter().enumerate() {
            solutions.push(s);
            features.push(FeatureVector {
                metric: norm.row(i).to_vec(),
                shape: h,
            });
        }
        Ok(SolutionSpace {
            solutions,
            features,
            bounds,
            layout: FeatureLayout {
                metric_channels: metric_channels.to_vec(),
                shape_bins: bins,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn solutions(&self) -> &[DesignSolution] {
        &self.solutions
    }

    pub fn solution(&self, index: usize) -> &DesignSolution {
        &self.solutions[index]
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureVector {
        &self.features[index]
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    /// Index of a solution id; solutions are stored sorted by id, so index
    /// order and id order agree.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.solutions.binary_search_by(|s| s.id.as_str().cmp(id)).ok()
    }

    pub fn require_index(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::NotFound(format!("solution {id}")))
    }

    /// Weighted Euclidean points for the listed solutions, in order.
    pub fn weighted_points(&self, indices: &[usize], w: &FeatureWeights) -> Matrix {
        let (m, s) = self.layout.dims();
        let mut data = Vec::with_capacity(indices.len() * (m + s));
        for &i in indices {
            data.extend(weighted_point(&self.features[i], w));
        }
        Matrix::from_vec(indices.len(), m + s, data).expect("feature dims fixed per space")
    }
}
