//! Disease severity of a leaf photograph: segment the leaf, cluster its
//! pixels by colour, call the minority colours disease, and report the
//! diseased share of the leaf.

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, ClusterModel, FeatureMatrix, KMeansParams};
use crate::error::{Error, Result};
use crate::grabcut::{grabcut_segment, GrabCutParams, Rect, SegMask};
use crate::raster::{fit_within, pixel_value, RasterImage};

/// Longest side images are reduced to before segmentation.
pub const MAX_WORKING_DIM: u32 = 1280;
/// Default centroid distance under which a cluster is merged into the leaf.
pub const DEFAULT_TAU: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Rgb,
    Value,
}

impl ColorMode {
    pub fn dim(self) -> usize {
        match self {
            Self::Rgb => 3,
            Self::Value => 1,
        }
    }
}

impl std::str::FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(Self::Rgb),
            "value" | "v" => Ok(Self::Value),
            _ => Err(Error::arg(format!("unknown colour mode {s:?} (expected rgb or value)"))),
        }
    }
}

impl std::fmt::Display for ColorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rgb => "rgb",
            Self::Value => "value",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClusterClass {
    Leaf,
    Disease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub mode: ColorMode,
    /// Cluster count. 5 suits light infections; 3 works better between
    /// roughly 25% and 50% severity.
    pub k: usize,
    pub iterations: usize,
    /// Segmentation rectangle in source-image coordinates. Defaults to a
    /// 2% inset.
    pub rect: Option<Rect>,
    pub seed: u64,
    pub tau: f64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Explicit leaf clusters, bypassing the majority rule.
    pub leaf_clusters: Option<Vec<usize>>,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            mode: ColorMode::Value,
            k: 5,
            iterations: 5,
            rect: None,
            seed: 0,
            tau: DEFAULT_TAU,
            restarts: 10,
            max_iter: 300,
            leaf_clusters: None,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=8).contains(&self.k) {
            return Err(Error::arg(format!("k = {} outside 2..=8", self.k)));
        }
        if self.iterations == 0 {
            return Err(Error::arg("iterations must be at least 1"));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::arg(format!("tau = {} must be non-negative", self.tau)));
        }
        if let Some(leaf) = &self.leaf_clusters {
            if let Some(bad) = leaf.iter().find(|&&c| c >= self.k) {
                return Err(Error::arg(format!("leaf cluster {bad} out of range for k = {}", self.k)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub centroid: Vec<f64>,
    pub pixels: u64,
    pub class: ClusterClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub mode: ColorMode,
    pub k: usize,
    pub d: u64,
    pub lad: u64,
    pub ds: f64,
    pub clusters: Vec<ClusterSummary>,
    pub iterations: usize,
    pub seed: u64,
    pub rect: Rect,
}

impl SeverityReport {
    /// Recomputes `(d, lad, ds)` from the cluster table.
    pub fn rederive(&self) -> Result<(u64, u64, f64)> {
        let d: u64 = self
            .clusters
            .iter()
            .filter(|c| c.class == ClusterClass::Disease)
            .map(|c| c.pixels)
            .sum();
        let leaf: u64 = self
            .clusters
            .iter()
            .filter(|c| c.class == ClusterClass::Leaf)
            .map(|c| c.pixels)
            .sum();
        Ok((d, d + leaf, severity_pct(d, leaf)?))
    }
}

/// Diseased share of the leaf in percent: `d · 100 / (leaf + d)`.
pub fn severity_pct(d: u64, leaf: u64) -> Result<f64> {
    let lad = d + leaf;
    if lad == 0 {
        return Err(Error::EmptyMask(Box::new(SegMask {
            width: 0,
            height: 0,
            data: vec![],
        })));
    }
    Ok(d as f64 * 100.0 / lad as f64)
}

/// The most populous cluster is leaf; any other cluster whose centroid lies
/// within `tau` of it is leaf too; the rest is disease. `override_leaf`
/// replaces the rule with an explicit leaf list.
pub fn label_clusters(
    model: &ClusterModel,
    pixel_counts: &[u64],
    tau: f64,
    override_leaf: Option<&[usize]>,
) -> Vec<ClusterClass> {
    if let Some(leaf) = override_leaf {
        return (0..model.k)
            .map(|c| if leaf.contains(&c) { ClusterClass::Leaf } else { ClusterClass::Disease })
            .collect();
    }
    let major = pixel_counts
        .iter()
        .enumerate()
        .fold(0, |best, (c, &n)| if n > pixel_counts[best] { c } else { best });
    let reference = model.centroid(major);
    (0..model.k)
        .map(|c| {
            let dist = model
                .centroid(c)
                .iter()
                .zip(reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if c == major || dist <= tau {
                ClusterClass::Leaf
            } else {
                ClusterClass::Disease
            }
        })
        .collect()
}

/// Report plus the intermediate rasters, for annotation and diagnostics.
#[derive(Debug, Clone)]
pub struct Quantification {
    pub report: SeverityReport,
    /// The image actually analysed (after any downscaling).
    pub image: RasterImage,
    pub mask: SegMask,
    /// Per-pixel disease flag; always false outside the mask.
    pub disease: Vec<bool>,
    pub energy_trace: Vec<f64>,
}

impl Quantification {
    /// Disease pixels tinted red at 50% over the analysed image.
    pub fn annotated(&self) -> RasterImage {
        let mut out = self.image.clone();
        let w = out.width();
        for (i, &sick) in self.disease.iter().enumerate() {
            if sick {
                let (x, y) = ((i % w as usize) as u32, (i / w as usize) as u32);
                let p = out.get(x, y);
                out.set(x, y, [
                    ((u16::from(p[0]) + 255 + 1) / 2) as u8,
                    ((u16::from(p[1]) + 1) / 2) as u8,
                    ((u16::from(p[2]) + 1) / 2) as u8,
                ]);
            }
        }
        out
    }
}

fn scale_rect(rect: Rect, from: (u32, u32), to: (u32, u32)) -> Rect {
    if from == to {
        return rect;
    }
    let sx = f64::from(to.0) / f64::from(from.0);
    let sy = f64::from(to.1) / f64::from(from.1);
    let x = (f64::from(rect.x) * sx).round() as u32;
    let y = (f64::from(rect.y) * sy).round() as u32;
    let w = ((f64::from(rect.w) * sx).round() as u32).min(to.0.saturating_sub(x));
    let h = ((f64::from(rect.h) * sy).round() as u32).min(to.1.saturating_sub(y));
    Rect { x, y, w, h }
}

pub fn quantify(img: &RasterImage, cfg: &QuantConfig) -> Result<SeverityReport> {
    quantify_detailed(img, cfg).map(|q| q.report)
}

pub fn quantify_detailed(img: &RasterImage, cfg: &QuantConfig) -> Result<Quantification> {
    cfg.validate()?;
    let work = fit_within(img, MAX_WORKING_DIM)?;
    let rect = match cfg.rect {
        Some(r) => scale_rect(r, (img.width(), img.height()), (work.width(), work.height())),
        None => Rect::default_for(work.width(), work.height()),
    };
    let params = GrabCutParams {
        iterations: cfg.iterations,
        seed: cfg.seed,
        ..GrabCutParams::default()
    };
    let seg = grabcut_segment(&work, rect, &params)?;
    let mut q = quantify_masked(&work, &seg.mask, cfg)?;
    q.report.rect = rect;
    q.energy_trace = seg.energy_trace;
    Ok(q)
}

/// Clustering and severity over the given leaf mask only; pixels outside
/// the mask are never read.
pub fn quantify_masked(img: &RasterImage, mask: &SegMask, cfg: &QuantConfig) -> Result<Quantification> {
    cfg.validate()?;
    if mask.width != img.width() || mask.height != img.height() {
        return Err(Error::arg("mask and image dimensions differ"));
    }
    let data = img.data();
    let mut features = Vec::new();
    let mut members = Vec::new();
    for (i, &fg) in mask.data.iter().enumerate() {
        if !fg {
            continue;
        }
        let px = [data[3 * i], data[3 * i + 1], data[3 * i + 2]];
        match cfg.mode {
            ColorMode::Value => features.push(pixel_value(px)),
            ColorMode::Rgb => features.extend(px.iter().map(|&c| f64::from(c) / 255.0)),
        }
        members.push(i);
    }
    if members.is_empty() {
        return Err(Error::EmptyMask(Box::new(mask.clone())));
    }

    let points = FeatureMatrix::new(cfg.mode.dim(), features)?;
    let k = cfg.k.min(points.len());
    let model = kmeans(
        &points,
        &KMeansParams {
            k,
            seed: cfg.seed,
            max_iter: cfg.max_iter,
            restarts: cfg.restarts,
        },
    )?;
    let counts: Vec<u64> = model.counts().into_iter().map(|c| c as u64).collect();
    let classes = label_clusters(&model, &counts, cfg.tau, cfg.leaf_clusters.as_deref());

    let d: u64 = counts
        .iter()
        .zip(&classes)
        .filter(|(_, &c)| c == ClusterClass::Disease)
        .map(|(n, _)| n)
        .sum();
    let lad: u64 = counts.iter().sum();
    let ds = severity_pct(d, lad - d)?;

    let mut disease = vec![false; mask.data.len()];
    for (&i, &a) in members.iter().zip(&model.assignments) {
        disease[i] = classes[a] == ClusterClass::Disease;
    }

    let clusters = (0..k)
        .map(|c| ClusterSummary {
            centroid: model.centroid(c).to_vec(),
            pixels: counts[c],
            class: classes[c],
        })
        .collect();
    Ok(Quantification {
        report: SeverityReport {
            image: String::new(),
            width: img.width(),
            height: img.height(),
            mode: cfg.mode,
            k: cfg.k,
            d,
            lad,
            ds,
            clusters,
            iterations: cfg.iterations,
            seed: cfg.seed,
            rect: cfg.rect.unwrap_or_else(|| Rect::default_for(img.width(), img.height())),
        },
        image: img.clone(),
        mask: mask.clone(),
        disease,
        energy_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(centroids: Vec<f64>, dim: usize) -> ClusterModel {
        ClusterModel {
            k: centroids.len() / dim,
            dim,
            centroids,
            assignments: vec![],
            inertia: 0.0,
            iterations_run: 0,
            inertia_trace: vec![],
        }
    }

    #[test]
    fn severity_examples() {
        assert_eq!(severity_pct(0, 1000).unwrap(), 0.0);
        assert_eq!(severity_pct(200, 800).unwrap(), 20.0);
        assert_eq!(severity_pct(1000, 0).unwrap(), 100.0);
        assert!(matches!(severity_pct(0, 0), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn single_cluster_is_leaf() {
        let classes = label_clusters(&model(vec![0.4], 1), &[500], DEFAULT_TAU, None);
        assert_eq!(classes, vec![ClusterClass::Leaf]);
    }

    #[test]
    fn majority_is_leaf_minorities_disease() {
        let m = model(vec![0.45, 0.85, 0.65], 1);
        let classes = label_clusters(&m, &[9000, 500, 500], DEFAULT_TAU, None);
        assert_eq!(classes, vec![ClusterClass::Leaf, ClusterClass::Disease, ClusterClass::Disease]);
    }

    #[test]
    fn nearby_clusters_merge_into_leaf() {
        let m = model(vec![0.45, 0.50], 1);
        let classes = label_clusters(&m, &[6000, 5990], DEFAULT_TAU, None);
        assert_eq!(classes, vec![ClusterClass::Leaf, ClusterClass::Leaf]);
    }

    #[test]
    fn majority_need_not_be_cluster_zero() {
        let m = model(vec![0.2, 0.2, 0.2, 0.9, 0.9, 0.1], 3);
        let classes = label_clusters(&m, &[10, 90], DEFAULT_TAU, None);
        assert_eq!(classes, vec![ClusterClass::Disease, ClusterClass::Leaf]);
    }

    #[test]
    fn override_replaces_rule() {
        let m = model(vec![0.45, 0.85], 1);
        let classes = label_clusters(&m, &[9000, 500], DEFAULT_TAU, Some(&[1]));
        assert_eq!(classes, vec![ClusterClass::Disease, ClusterClass::Leaf]);
    }

    #[test]
    fn config_validation() {
        assert!(QuantConfig::default().validate().is_ok());
        assert!(QuantConfig { k: 1, ..Default::default() }.validate().is_err());
        assert!(QuantConfig { k: 9, ..Default::default() }.validate().is_err());
        assert!(QuantConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(QuantConfig { leaf_clusters: Some(vec![5]), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("RGB".parse::<ColorMode>().unwrap(), ColorMode::Rgb);
        assert_eq!("value".parse::<ColorMode>().unwrap(), ColorMode::Value);
        assert!("hsv".parse::<ColorMode>().is_err());
    }

    #[test]
    fn empty_mask_carries_mask() {
        let img = RasterImage::filled(4, 4, [9, 9, 9]).unwrap();
        let mask = SegMask { width: 4, height: 4, data: vec![false; 16] };
        match quantify_masked(&img, &mask, &QuantConfig::default()) {
            Err(Error::EmptyMask(m)) => assert_eq!(*m, mask),
            other => panic!("expected empty mask error, got {other:?}"),
        }
    }

    #[test]
    fn annotation_tints_disease_red() {
        let img = RasterImage::filled(2, 1, [100, 100, 100]).unwrap();
        let mask = SegMask { width: 2, height: 1, data: vec![true, true] };
        let q = Quantification {
            report: quantify_masked(&img, &mask, &QuantConfig::default()).unwrap().report,
            image: img,
            mask,
            disease: vec![true, false],
            energy_trace: vec![],
        };
        let a = q.annotated();
        assert_eq!(a.get(0, 0), [178, 50, 50]);
        assert_eq!(a.get(1, 0), [100, 100, 100]);
    }
}
