//! Synthetic leaf photographs with exactly known disease pixel counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub const HEALTHY_GREEN: [u8; 3] = [50, 115, 45];
pub const LESION_HALO: [u8; 3] = [215, 190, 60];
pub const LESION_CORE: [u8; 3] = [170, 100, 40];
pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Rotation in degrees, counter-clockwise.
    #[serde(default)]
    pub angle_deg: f64,
    pub color: [u8; 3],
}

impl Ellipse {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }
}

/// A round lesion. Later spots paint over earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spot {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub color: [u8; 3],
}

impl Spot {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).powi(2) + (y - self.cy).powi(2) <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub leaf: Ellipse,
    #[serde(default)]
    pub spots: Vec<Spot>,
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Per-channel uniform noise amplitude applied to leaf and spot pixels.
    #[serde(default)]
    pub noise: u8,
    #[serde(default)]
    pub seed: u64,
}

fn default_background() -> [u8; 3] {
    WHITE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Healthy leaf pixels.
    pub leaf_px: u64,
    pub disease_px: u64,
    pub ds_true: f64,
}

#[derive(Debug, Clone)]
pub struct SynthLeaf {
    pub image: RasterImage,
    pub truth: SynthTruth,
    /// Per-pixel ground truth: leaf (healthy or diseased).
    pub leaf_mask: Vec<bool>,
    pub disease_mask: Vec<bool>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        if self.leaf.rx <= 0.0 || self.leaf.ry <= 0.0 {
            return Err(Error::Validation("leaf radii must be positive".into()));
        }
        if self.leaf.color == self.background {
            return Err(Error::Validation("leaf colour equals the background".into()));
        }
        for (i, spot) in self.spots.iter().enumerate() {
            if spot.radius <= 0.0 {
                return Err(Error::Validation(format!("spot {i} has non-positive radius")));
            }
            if spot.color == self.background {
                return Err(Error::Validation(format!("spot {i} colour equals the background")));
            }
            if !self.spot_inside_leaf(spot) {
                return Err(Error::Validation(format!(
                    "spot {i} at ({}, {}) r={} extends outside the leaf",
                    spot.cx, spot.cy, spot.radius
                )));
            }
        }
        Ok(())
    }

    /// Every pixel centre covered by the spot must also be covered by the leaf.
    fn spot_inside_leaf(&self, spot: &Spot) -> bool {
        let (x0, x1, y0, y1) = pixel_span(spot, self.width, self.height);
        if spot.cx - spot.radius < -0.5
            || spot.cy - spot.radius < -0.5
            || spot.cx + spot.radius > f64::from(self.width) - 0.5
            || spot.cy + spot.radius > f64::from(self.height) - 0.5
        {
            return false;
        }
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (f64::from(x), f64::from(y));
                if spot.contains(px, py) && !self.leaf.contains(px, py) {
                    return false;
                }
            }
        }
        true
    }

    pub fn render(&self) -> Result<SynthLeaf> {
        self.validate()?;
        let (w, h) = (self.width as usize, self.height as usize);
        let mut leaf_mask = vec![false; w * h];
        let mut colors = vec![self.background; w * h];
        for y in 0..h {
            for x in 0..w {
                if self.leaf.contains(x as f64, y as f64) {
                    leaf_mask[y * w + x] = true;
                    colors[y * w + x] = self.leaf.color;
                }
            }
        }
        let mut disease_mask = vec![false; w * h];
        for spot in &self.spots {
            let (x0, x1, y0, y1) = pixel_span(spot, self.width, self.height);
            for y in y0..y1 {
                for x in x0..x1 {
                    if spot.contains(f64::from(x), f64::from(y)) {
                        let i = y as usize * w + x as usize;
                        disease_mask[i] = true;
                        colors[i] = spot.color;
                    }
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let amp = i16::from(self.noise);
        let mut data = Vec::with_capacity(w * h * 3);
        for (i, c) in colors.iter().enumerate() {
            for &v in c {
                let v = if leaf_mask[i] && amp > 0 {
                    (i16::from(v) + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8
                } else {
                    v
                };
                data.push(v);
            }
        }

        let disease_px = disease_mask.iter().filter(|&&d| d).count() as u64;
        let leaf_total = leaf_mask.iter().filter(|&&d| d).count() as u64;
        let leaf_px = leaf_total - disease_px;
        let ds_true = if leaf_total == 0 {
            0.0
        } else {
            disease_px as f64 * 100.0 / leaf_total as f64
        };
        Ok(SynthLeaf {
            image: RasterImage::new(self.width, self.height, data)?,
            truth: SynthTruth {
                leaf_px,
                disease_px,
                ds_true,
            },
            leaf_mask,
            disease_mask,
        })
    }

    /// Leaf on white with two-tone lesions (bright halo around a darker
    /// core) placed at random until the diseased share of the leaf is as
    /// close as possible to `target_ds` percent.
    pub fn with_target_severity(width: u32, height: u32, target_ds: f64, seed: u64) -> Result<Self> {
        if !(0.0..=90.0).contains(&target_ds) {
            return Err(Error::arg(format!("target severity {target_ds} outside [0, 90]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fw, fh) = (f64::from(width), f64::from(height));
        let leaf = Ellipse {
            cx: fw / 2.0 + rng.gen_range(-0.02..0.02) * fw,
            cy: fh / 2.0 + rng.gen_range(-0.02..0.02) * fh,
            rx: fw * rng.gen_range(0.36..0.42),
            ry: fh * rng.gen_range(0.30..0.36),
            angle_deg: rng.gen_range(-8.0..8.0),
            color: HEALTHY_GREEN,
        };
        let mut spec = SynthSpec {
            width,
            height,
            leaf,
            spots: Vec::new(),
            background: WHITE,
            noise: 6,
            seed: seed ^ 0x5eed,
        };

        let (w, h) = (width as usize, height as usize);
        let mut leaf_mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                leaf_mask[y * w + x] = spec.leaf.contains(x as f64, y as f64);
            }
        }
        let leaf_total = leaf_mask.iter().filter(|&&b| b).count();
        let target_px = (target_ds / 100.0 * leaf_total as f64).round() as usize;
        let mut diseased = vec![false; w * h];
        let mut count = 0usize;

        let min_dim = spec.leaf.rx.min(spec.leaf.ry);
        let (r_lo, r_hi) = (min_dim * 0.04, min_dim * 0.16);
        let mut attempts = 0;
        while count < target_px {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::Degenerate(format!(
                    "could not place lesions for {target_ds}% severity"
                )));
            }
            let r = rng.gen_range(r_lo..r_hi);
            let cx = rng.gen_range(spec.leaf.cx - spec.leaf.rx..spec.leaf.cx + spec.leaf.rx);
            let cy = rng.gen_range(spec.leaf.cy - spec.leaf.ry..spec.leaf.cy + spec.leaf.ry);
            let halo = Spot { cx, cy, radius: r, color: LESION_HALO };
            if !spec.spot_inside_leaf(&halo) {
                continue;
            }
            let gain = new_pixels(&halo, width, height, &diseased);
            let remaining = target_px - count;
            let halo = if gain > remaining {
                // shrink the final lesion to land on the target
                match shrink_to(&halo, remaining, width, height, &diseased) {
                    Some(s) => s,
                    None => break,
                }
            } else {
                halo
            };
            count += paint(&halo, width, height, &mut diseased);
            let core = Spot {
                radius: halo.radius * 0.55,
                color: LESION_CORE,
                ..halo.clone()
            };
            spec.spots.push(halo);
            spec.spots.push(core);
        }
        Ok(spec)
    }
}

fn pixel_span(spot: &Spot, width: u32, height: u32) -> (u32, u32, u32, u32) {
    let x0 = (spot.cx - spot.radius).floor().max(0.0) as u32;
    let y0 = (spot.cy - spot.radius).floor().max(0.0) as u32;
    let x1 = ((spot.cx + spot.radius).ceil() + 1.0).clamp(0.0, f64::from(width)) as u32;
    let y1 = ((spot.cy + spot.radius).ceil() + 1.0).clamp(0.0, f64::from(height)) as u32;
    (x0, x1, y0, y1)
}

fn new_pixels(spot: &Spot, width: u32, height: u32, taken: &[bool]) -> usize {
    let (x0, x1, y0, y1) = pixel_span(spot, width, height);
    let mut n = 0;
    for y in y0..y1 {
        for x in x0..x1 {
            if spot.contains(f64::from(x), f64::from(y)) && !taken[y as usize * width as usize + x as usize] {
                n += 1;
            }
        }
    }
    n
}

fn paint(spot: &Spot, width: u32, height: u32, taken: &mut [bool]) -> usize {
    let (x0, x1, y0, y1) = pixel_span(spot, width, height);
    let mut n = 0;
    for y in y0..y1 {
        for x in x0..x1 {
            let i = y as usize * width as usize + x as usize;
            if spot.contains(f64::from(x), f64::from(y)) && !taken[i] {
                taken[i] = true;
                n += 1;
            }
        }
    }
    n
}

/// Largest radius whose new-pixel gain does not exceed `want`, or `None`
/// if even a tiny spot overshoots.
fn shrink_to(spot: &Spot, want: usize, width: u32, height: u32, taken: &[bool]) -> Option<Spot> {
    let (mut lo, mut hi) = (0.0, spot.radius);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let s = Spot { radius: mid, ..spot.clone() };
        if new_pixels(&s, width, height, taken) <= want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = Spot { radius: lo, ..spot.clone() };
    (lo > 0.0 && new_pixels(&s, width, height, taken) > 0).then_some(s)
}
