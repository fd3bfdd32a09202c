//! Rectangle-initialised GrabCut: alternate per-pixel GMM component
//! assignment, mixture re-estimation and an exact min-cut relabelling for a
//! fixed number of rounds.
//!
//! The energy tracked per round is
//! `Σ_n min_k D(α_n, k, z_n) + γ Σ_{(m,n), α_m ≠ α_n} exp(−β‖z_m − z_n‖²) / dist(m, n)`
//! over an 8-connected grid. Each of the three sub-steps minimises it with
//! the others held fixed, so the per-round trace never increases.

pub mod gmm;
pub mod maxflow;

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, FeatureMatrix, KMeansParams};
use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub use gmm::{fit_gmm, Gaussian, GaussianMixture, VARIANCE_FLOOR};
pub use maxflow::{max_flow_min_cut, FlowNetwork, Graph, MinCut, Side, HARD_CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrimapLabel {
    BgFixed,
    FgFixed,
    BgSoft,
    FgSoft,
}

impl TrimapLabel {
    #[inline]
    pub fn is_foreground(self) -> bool {
        matches!(self, Self::FgFixed | Self::FgSoft)
    }

    #[inline]
    pub fn is_fixed(self) -> bool {
        matches!(self, Self::FgFixed | Self::BgFixed)
    }
}

/// `x, y` is the top-left corner; `w × h` pixels are inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Rectangle inset from every border by `margin` of that dimension.
    pub fn inset(width: u32, height: u32, margin: f64) -> Self {
        let mx = (f64::from(width) * margin).round() as u32;
        let my = (f64::from(height) * margin).round() as u32;
        Self {
            x: mx,
            y: my,
            w: width.saturating_sub(2 * mx).max(1),
            h: height.saturating_sub(2 * my).max(1),
        }
    }

    /// Default rectangle: 2% inset.
    pub fn default_for(width: u32, height: u32) -> Self {
        Self::inset(width, height, 0.02)
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x - self.x < self.w && y - self.y < self.h
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::arg(format!("bad rectangle {s:?}: {e}")))?;
        match parts[..] {
            [x, y, w, h] => Ok(Rect { x, y, w, h }),
            _ => Err(Error::arg(format!("rectangle {s:?} needs four comma-separated values"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn count(&self, label: TrimapLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

pub fn init_trimap(width: u32, height: u32, rect: Rect) -> Result<Trimap> {
    if rect.w < 2 || rect.h < 2 {
        return Err(Error::arg(format!(
            "rectangle {}x{} is degenerate (need at least 2x2)",
            rect.w, rect.h
        )));
    }
    if u64::from(rect.x) + u64::from(rect.w) > u64::from(width)
        || u64::from(rect.y) + u64::from(rect.h) > u64::from(height)
    {
        return Err(Error::arg(format!(
            "rectangle ({},{},{},{}) exceeds {width}x{height}",
            rect.x, rect.y, rect.w, rect.h
        )));
    }
    let mut labels = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            labels.push(if rect.contains(x, y) {
                TrimapLabel::FgSoft
            } else {
                TrimapLabel::BgFixed
            });
        }
    }
    Ok(Trimap { width, height, labels })
}

/// Binary leaf mask, `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl SegMask {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 1-bit greyscale PNG: 0 background, 1 (white) foreground.
    pub fn to_png(&self) -> Vec<u8> {
        let row_bytes = (self.width as usize).div_ceil(8);
        let mut packed = vec![0u8; row_bytes * self.height as usize];
        for y in 0..self.height as usize {
            for x in 0..self.width as usize {
                if self.data[y * self.width as usize + x] {
                    packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        let mut out = Vec::new();
        let mut encoder = png::Encoder::new(&mut out, self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::One);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(&packed).expect("in-memory PNG data");
        writer.finish().expect("in-memory PNG finish");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrabCutParams {
    pub iterations: usize,
    /// Components per colour model.
    pub components: usize,
    pub gamma: f64,
    pub variance_floor: f64,
    pub seed: u64,
    /// Lloyd iterations used to seed the mixtures.
    pub init_kmeans_iters: usize,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self {
            iterations: 5,
            components: 5,
            gamma: 50.0,
            variance_floor: VARIANCE_FLOOR,
            seed: 0,
            init_kmeans_iters: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub mask: SegMask,
    /// Total energy after each round.
    pub energy_trace: Vec<f64>,
    pub trimap: Trimap,
    pub background: GaussianMixture,
    pub foreground: GaussianMixture,
}

pub fn grabcut_segment(img: &RasterImage, rect: Rect, params: &GrabCutParams) -> Result<Segmentation> {
    let trimap = init_trimap(img.width(), img.height(), rect)?;
    grabcut_with_trimap(img, trimap, params)
}

/// Neighbour offsets already visited in raster order: left, up-left, up, up-right.
const BACKWARD: [(i64, i64, f64); 4] = [
    (-1, 0, 1.0),
    (-1, -1, std::f64::consts::FRAC_1_SQRT_2),
    (0, -1, 1.0),
    (1, -1, std::f64::consts::FRAC_1_SQRT_2),
];

/// Pairwise smoothness weights of an 8-connected grid, each undirected pair
/// stored once at its later pixel.
struct Smoothness {
    /// `weights[4 * n + d]` pairs pixel `n` with its `BACKWARD[d]` neighbour.
    weights: Vec<f64>,
    /// Upper bound on the total weight touching one pixel.
    max_degree_weight: f64,
}

fn neighbour(width: u32, height: u32, n: usize, d: usize) -> Option<usize> {
    let (dx, dy, _) = BACKWARD[d];
    let x = (n % width as usize) as i64 + dx;
    let y = (n / width as usize) as i64 + dy;
    if x < 0 || y < 0 || x >= i64::from(width) || y >= i64::from(height) {
        None
    } else {
        Some(y as usize * width as usize + x as usize)
    }
}

fn sq_diff(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

fn smoothness(width: u32, height: u32, z: &[[f64; 3]], gamma: f64) -> Smoothness {
    let n = z.len();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for p in 0..n {
        for d in 0..4 {
            if let Some(q) = neighbour(width, height, p, d) {
                total += sq_diff(&z[p], &z[q]);
                pairs += 1;
            }
        }
    }
    let mean = if pairs > 0 { total / pairs as f64 } else { 0.0 };
    let beta = if mean > 0.0 { 1.0 / (2.0 * mean) } else { 0.0 };

    let mut weights = vec![0.0; 4 * n];
    for p in 0..n {
        for d in 0..4 {
            if let Some(q) = neighbour(width, height, p, d) {
                weights[4 * p + d] = gamma * BACKWARD[d].2 * (-beta * sq_diff(&z[p], &z[q])).exp();
            }
        }
    }
    Smoothness {
        weights,
        max_degree_weight: gamma * (4.0 + 4.0 * std::f64::consts::FRAC_1_SQRT_2),
    }
}

/// Initial mixture: k-means seeding of the component assignment, then an
/// ML fit.
fn initial_mixture(z: &[[f64; 3]], params: &GrabCutParams, seed: u64) -> Result<GaussianMixture> {
    let k = params.components.min(z.len());
    let features = FeatureMatrix::new(3, z.iter().flatten().copied().collect())?;
    let km = kmeans(
        &features,
        &KMeansParams {
            k,
            seed,
            max_iter: params.init_kmeans_iters,
            restarts: 1,
        },
    )?;
    fit_gmm(z, &km.assignments, params.components, params.variance_floor)
}

fn side_pixels(z: &[[f64; 3]], labels: &[TrimapLabel], fg: bool) -> Vec<[f64; 3]> {
    z.iter()
        .zip(labels)
        .filter(|(_, l)| l.is_foreground() == fg)
        .map(|(p, _)| *p)
        .collect()
}

/// Re-estimates one side's mixture from pixels assigned to their cheapest
/// component under the current mixture.
fn refit(z: &[[f64; 3]], labels: &[TrimapLabel], fg: bool, model: &GaussianMixture, params: &GrabCutParams) -> Result<GaussianMixture> {
    let mut pixels = Vec::new();
    let mut assignments = Vec::new();
    for (p, l) in z.iter().zip(labels) {
        if l.is_foreground() == fg {
            pixels.push(*p);
            assignments.push(model.best_component(p).0);
        }
    }
    fit_gmm(&pixels, &assignments, params.components, params.variance_floor)
}

/// Energy of a labelling under the given models.
fn total_energy(
    width: u32,
    height: u32,
    z: &[[f64; 3]],
    labels: &[TrimapLabel],
    bg: &GaussianMixture,
    fg: &GaussianMixture,
    smooth: &Smoothness,
) -> f64 {
    let mut e = 0.0;
    for (p, l) in z.iter().zip(labels) {
        let model = if l.is_foreground() { fg } else { bg };
        e += model.best_component(p).1;
    }
    for (p, l) in labels.iter().enumerate() {
        for d in 0..4 {
            if let Some(q) = neighbour(width, height, p, d) {
                if labels[q].is_foreground() != l.is_foreground() {
                    e += smooth.weights[4 * p + d];
                }
            }
        }
    }
    e
}

/// GrabCut from an arbitrary trimap. Fixed labels are never changed.
pub fn grabcut_with_trimap(img: &RasterImage, mut trimap: Trimap, params: &GrabCutParams) -> Result<Segmentation> {
    if params.iterations == 0 {
        return Err(Error::arg("GrabCut needs at least one iteration"));
    }
    if params.components == 0 {
        return Err(Error::arg("GrabCut needs at least one mixture component"));
    }
    if trimap.width != img.width() || trimap.height != img.height() {
        return Err(Error::arg("trimap and image dimensions differ"));
    }
    let (width, height) = (img.width(), img.height());
    let z: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
        .collect();

    let bg_init = side_pixels(&z, &trimap.labels, false);
    let fg_init = side_pixels(&z, &trimap.labels, true);
    if bg_init.is_empty() || fg_init.is_empty() {
        return Err(Error::arg(
            "rectangle leaves no background or no foreground pixels to model",
        ));
    }
    let mut bg = initial_mixture(&bg_init, params, params.seed)?;
    let mut fg = initial_mixture(&fg_init, params, params.seed.wrapping_add(1))?;
    drop((bg_init, fg_init));

    let smooth = smoothness(width, height, &z, params.gamma);
    let hard = smooth.max_degree_weight + 1.0;
    let n = z.len();
    let mut trace = Vec::with_capacity(params.iterations);

    for _ in 0..params.iterations {
        // A soft side can vanish after a cut; keep its previous model then.
        if trimap.labels.iter().any(|l| !l.is_foreground()) {
            bg = refit(&z, &trimap.labels, false, &bg, params)?;
        }
        if trimap.labels.iter().any(|l| l.is_foreground()) {
            fg = refit(&z, &trimap.labels, true, &fg, params)?;
        }

        let mut graph = Graph::new(n, 4 * n);
        for (p, (zp, l)) in z.iter().zip(&trimap.labels).enumerate() {
            match l {
                TrimapLabel::BgFixed => graph.add_terminal_weights(p, 0.0, hard),
                TrimapLabel::FgFixed => graph.add_terminal_weights(p, hard, 0.0),
                _ => {
                    // source side = foreground: pay D_fg on the sink arc
                    let d_fg = fg.best_component(zp).1;
                    let d_bg = bg.best_component(zp).1;
                    let m = d_fg.min(d_bg);
                    graph.add_terminal_weights(p, d_bg - m, d_fg - m);
                }
            }
            for d in 0..4 {
                if let Some(q) = neighbour(width, height, p, d) {
                    let w = smooth.weights[4 * p + d];
                    graph.add_edge(p, q, w, w);
                }
            }
        }
        graph.maxflow();
        for (p, l) in trimap.labels.iter_mut().enumerate() {
            if !l.is_fixed() {
                *l = match graph.side(p) {
                    Side::Source => TrimapLabel::FgSoft,
                    Side::Sink => TrimapLabel::BgSoft,
                };
            }
        }
        trace.push(total_energy(width, height, &z, &trimap.labels, &bg, &fg, &smooth));
    }

    let mask = SegMask {
        width,
        height,
        data: trimap.labels.iter().map(|l| l.is_foreground()).collect(),
    };
    Ok(Segmentation {
        mask,
        energy_trace: trace,
        trimap,
        background: bg,
        foreground: fg,
    })
}
