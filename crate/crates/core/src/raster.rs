//! Owned RGB rasters, decoding/encoding and the colour-space helpers the
//! quantification pipeline needs.

use std::io::{self, BufRead, Cursor, Read, Seek, SeekFrom};

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("image dimensions must be positive, got {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::arg(format!(
                "pixel buffer holds {} bytes, {width}x{height} RGB needs {expected}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixels in row-major order.
    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }
}

/// Row-major plane of scalars in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPlane {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ScalarPlane {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// HSV value of one pixel: the largest channel scaled to `[0, 1]`.
#[inline]
pub fn pixel_value(rgb: [u8; 3]) -> f64 {
    f64::from(rgb[0].max(rgb[1]).max(rgb[2])) / 255.0
}

pub fn value_channel(img: &RasterImage) -> ScalarPlane {
    ScalarPlane {
        width: img.width,
        height: img.height,
        data: img.pixels().map(pixel_value).collect(),
    }
}

/// Bilinear resampling with half-pixel-centred sample positions.
pub fn resize_bilinear(img: &RasterImage, target_w: u32, target_h: u32) -> Result<RasterImage> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::arg(format!(
            "resize target must be positive, got {target_w}x{target_h}"
        )));
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }

    let xs = sample_positions(img.width, target_w);
    let ys = sample_positions(img.height, target_h);
    let mut out = Vec::with_capacity(target_w as usize * target_h as usize * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p00 = img.get(x0, y0);
            let p10 = img.get(x1, y0);
            let p01 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(target_w, target_h, out)
}

fn sample_positions(src: u32, dst: u32) -> Vec<(u32, u32, f64)> {
    let scale = f64::from(src) / f64::from(dst);
    let last = src - 1;
    (0..dst)
        .map(|i| {
            let s = ((f64::from(i) + 0.5) * scale - 0.5).clamp(0.0, f64::from(last));
            let lo = s.floor() as u32;
            let hi = (lo + 1).min(last);
            (lo, hi, s - f64::from(lo))
        })
        .collect()
}

/// Shrinks the image so that its longer side is at most `max_dim`, keeping
/// the aspect ratio. Smaller images are returned unchanged.
pub fn fit_within(img: &RasterImage, max_dim: u32) -> Result<RasterImage> {
    let longest = img.width.max(img.height);
    if longest <= max_dim {
        return Ok(img.clone());
    }
    let scale = f64::from(max_dim) / f64::from(longest);
    let w = ((f64::from(img.width) * scale).round() as u32).max(1);
    let h = ((f64::from(img.height) * scale).round() as u32).max(1);
    resize_bilinear(img, w, h)
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
const JPEG_MAGIC: &[u8] = &[0xFF, 0xD8, 0xFF];

/// Container formats understood by [`decode_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Png,
    Jpeg,
    Ppm,
}

impl SourceFormat {
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(PNG_MAGIC) {
            Some(Self::Png)
        } else if bytes.starts_with(JPEG_MAGIC) {
            Some(Self::Jpeg)
        } else if bytes.starts_with(b"P6") {
            Some(Self::Ppm)
        } else {
            None
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Png => "png",
            Self::Jpeg => "jpg",
            Self::Ppm => "ppm",
        }
    }
}

/// Decodes PNG, baseline JPEG or binary PPM. Alpha is composited over white.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    match SourceFormat::sniff(bytes) {
        Some(SourceFormat::Ppm) => decode_ppm(bytes),
        Some(SourceFormat::Png) => decode_with_codec(bytes, ImageFormat::Png),
        Some(SourceFormat::Jpeg) => decode_with_codec(bytes, ImageFormat::Jpeg),
        None => Err(Error::Format(match bytes.len() {
            0 => "empty input".to_string(),
            _ => format!(
                "unrecognised signature {:02x?}",
                &bytes[..bytes.len().min(8)]
            ),
        })),
    }
}

fn decode_with_codec(bytes: &[u8], format: ImageFormat) -> Result<RasterImage> {
    let mut reader = TrackingReader::new(bytes);
    let decoded = ImageReader::with_format(&mut reader, format).decode();
    match decoded {
        Ok(img) => from_dynamic(img),
        Err(e) => Err(Error::Decode {
            offset: reader.high_water,
            message: e.to_string(),
        }),
    }
}

fn from_dynamic(img: DynamicImage) -> Result<RasterImage> {
    let (w, h) = (img.width(), img.height());
    if !img.color().has_alpha() {
        return RasterImage::new(w, h, img.into_rgb8().into_raw());
    }
    let rgba = img.into_rgba8();
    let mut out = Vec::with_capacity(w as usize * h as usize * 3);
    for px in rgba.as_raw().chunks_exact(4) {
        let a = u32::from(px[3]);
        for &c in &px[..3] {
            // c·a/255 + 255·(255−a)/255, rounded
            let v = (u32::from(c) * a + 255 * (255 - a) + 127) / 255;
            out.push(v as u8);
        }
    }
    RasterImage::new(w, h, out)
}

/// Cursor that remembers the furthest byte any decoder has consumed, so a
/// failure can be reported with a position.
struct TrackingReader<'a> {
    inner: Cursor<&'a [u8]>,
    high_water: usize,
}

impl<'a> TrackingReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            inner: Cursor::new(bytes),
            high_water: 0,
        }
    }

    fn note(&mut self) {
        self.high_water = self.high_water.max(self.inner.position() as usize);
    }
}

impl Read for TrackingReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.note();
        Ok(n)
    }
}

impl BufRead for TrackingReader<'_> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.note();
    }
}

impl Seek for TrackingReader<'_> {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        self.inner.seek(pos)
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let mut pos = 2; // past "P6"
    let mut header = [0u32; 3];
    for field in header.iter_mut() {
        pos = skip_ppm_whitespace(bytes, pos)?;
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(ppm_error(pos, "expected a decimal header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| ppm_error(start, "header field out of range"))?;
    }
    let [w, h, maxval] = header;
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ppm_error(pos, "missing whitespace after maxval"));
    }
    pos += 1;
    if w == 0 || h == 0 {
        return Err(ppm_error(pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PPM maxval {maxval} (only 8-bit supported)")));
    }
    let need = w as usize * h as usize * 3;
    let available = bytes.len() - pos;
    if available < need {
        return Err(ppm_error(
            bytes.len(),
            format!("truncated pixel data: {available} of {need} bytes"),
        ));
    }
    let raw = &bytes[pos..pos + need];
    let data = if maxval == 255 {
        raw.to_vec()
    } else {
        raw.iter()
            .map(|&v| ((u32::from(v.min(maxval as u8)) * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    RasterImage::new(w, h, data)
}

fn skip_ppm_whitespace(bytes: &[u8], mut pos: usize) -> Result<usize> {
    loop {
        match bytes.get(pos) {
            Some(b'#') => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(_) => return Ok(pos),
            None => return Err(ppm_error(pos, "unexpected end of header")),
        }
    }
}

fn ppm_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Decode {
        offset,
        message: message.into(),
    }
}

/// Encodes as 8-bit RGB PNG.
pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, img.width, img.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().expect("in-memory PNG header");
    writer.write_image_data(&img.data).expect("in-memory PNG data");
    writer.finish().expect("in-memory PNG finish");
    out
}

/// Encodes as binary PPM (P6).
pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}
