//! 3D volumes, centre cross-sections, resizing, channel packing and
//! rotate/crop augmentation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const MVOL_MAGIC: [u8; 4] = *b"MVOL";
pub const MVOL_VERSION: u16 = 1;
pub const MVOL_DTYPE_F32: u8 = 0;
pub const MVOL_HEADER_LEN: usize = 20;

pub const DEFAULT_IMAGE_SIDE: usize = 64;
pub const DEFAULT_MAX_ROTATE_DEG: f64 = 15.0;
pub const DEFAULT_CROP_FRACTION: f64 = 0.9;

/// Scalar 3D grid, x-fastest: `index(x,y,z) = x + X·(y + Y·z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], voxels: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("volume dims must be positive, got {dims:?}")));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Shape(format!("volume dims exceed u32: {dims:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(Error::Shape(format!(
                "{} voxels for dims {dims:?} (expected {expected})",
                voxels.len()
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("volume contains non-finite voxels".into()));
        }
        Ok(Self { dims, voxels })
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        let i = self.index(x, y, z);
        self.voxels[i] = value;
    }

    /// Geometric centre with floor indexing.
    pub fn center(&self) -> [usize; 3] {
        [self.dims[0] / 2, self.dims[1] / 2, self.dims[2] / 2]
    }

    /// Encodes the MVOL v1 byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MVOL_HEADER_LEN + 4 * self.voxels.len());
        out.extend_from_slice(&MVOL_MAGIC);
        out.extend_from_slice(&MVOL_VERSION.to_le_bytes());
        out.push(MVOL_DTYPE_F32);
        out.push(0);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.voxels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: MVOL_HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if magic != MVOL_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes.len() < MVOL_HEADER_LEN {
            return Err(Error::Truncated {
                expected: MVOL_HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MVOL_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if bytes[6] != MVOL_DTYPE_F32 {
            return Err(Error::UnsupportedDtype(bytes[6]));
        }
        let dim = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
        let dims = [dim(8), dim(12), dim(16)];
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let expected = count
            .checked_mul(4)
            .and_then(|n| n.checked_add(MVOL_HEADER_LEN))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after MVOL payload",
                bytes.len() - expected
            )));
        }
        let voxels = bytes[MVOL_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Volume::new(dims, voxels)
    }
}

pub fn volume_read(path: &Path) -> Result<Volume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Volume::from_bytes(&bytes)
}

pub fn volume_write(volume: &Volume, path: &Path) -> Result<()> {
    std::fs::write(path, volume.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Row-major 2D image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image2D {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("image extent {height}×{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{} pixels for {height}×{width}",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }
}

/// The three centre planes. Axis convention: x ↔ sagittal, y ↔ coronal, z ↔ transverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTriplet {
    /// `Y × Z`, rows indexed by y.
    pub sagittal: Image2D,
    /// `X × Z`, rows indexed by x.
    pub coronal: Image2D,
    /// `X × Y`, rows indexed by x.
    pub transverse: Image2D,
}

impl SliceTriplet {
    pub fn as_array(&self) -> [&Image2D; 3] {
        [&self.sagittal, &self.coronal, &self.transverse]
    }
}

pub const SLICE_NAMES: [&str; 3] = ["sagittal", "coronal", "transverse"];

pub fn center_slices(volume: &Volume) -> SliceTriplet {
    let [nx, ny, nz] = volume.dims();
    let [cx, cy, cz] = volume.center();
    let plane = |h: usize, w: usize, f: &dyn Fn(usize, usize) -> f32| {
        let pixels = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| f64::from(f(r, c)))
            .collect();
        Image2D::new(h, w, pixels).expect("volume dims are positive")
    };
    SliceTriplet {
        sagittal: plane(ny, nz, &|y, z| volume.get(cx, y, z)),
        coronal: plane(nx, nz, &|x, z| volume.get(x, cy, z)),
        transverse: plane(nx, ny, &|x, y| volume.get(x, y, cz)),
    }
}

fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out > 1 {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    } else {
        (n_in - 1) as f64 / 2.0
    }
}

/// Bilinear sample at fractional `(r, c)`; `None` when outside the pixel grid.
fn sample_bilinear(image: &Image2D, r: f64, c: f64) -> Option<f64> {
    let (h, w) = image.shape();
    let max_r = (h - 1) as f64;
    let max_c = (w - 1) as f64;
    const SLACK: f64 = 1e-9;
    if r < -SLACK || c < -SLACK || r > max_r + SLACK || c > max_c + SLACK {
        return None;
    }
    let r = r.clamp(0.0, max_r);
    let c = c.clamp(0.0, max_c);
    let r0 = r.floor() as usize;
    let c0 = c.floor() as usize;
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let fr = r - r0 as f64;
    let fc = c - c0 as f64;
    let top = image.get(r0, c0) * (1.0 - fc) + image.get(r0, c1) * fc;
    let bottom = image.get(r1, c0) * (1.0 - fc) + image.get(r1, c1) * fc;
    Some(top * (1.0 - fr) + bottom * fr)
}

/// Edge-aligned bilinear resize.
pub fn resize_bilinear(image: &Image2D, out_h: usize, out_w: usize) -> Result<Image2D> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target {out_h}×{out_w}")));
    }
    if image.shape() == (out_h, out_w) {
        return Ok(image.clone());
    }
    let (h, w) = image.shape();
    let mut pixels = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let sr = source_coord(i, h, out_h);
        for j in 0..out_w {
            let sc = source_coord(j, w, out_w);
            pixels.push(sample_bilinear(image, sr, sc).expect("source coordinate in range"));
        }
    }
    Image2D::new(out_h, out_w, pixels)
}

/// Three-channel square image, channel order (sagittal, coronal, transverse).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    side: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 || data.len() != Self::CHANNELS * side * side {
            return Err(Error::Shape(format!(
                "{} values for a 3×{side}×{side} image",
                data.len()
            )));
        }
        Ok(Self { side, data })
    }

    pub fn from_channels(channels: [Image2D; 3]) -> Result<Self> {
        let side = channels[0].height();
        if channels.iter().any(|c| c.shape() != (side, side)) {
            return Err(Error::Shape("channels must share one square extent".into()));
        }
        let data = channels.iter().flat_map(|c| c.pixels().iter().copied()).collect();
        Self::new(side, data)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn shape(&self) -> [usize; 3] {
        [Self::CHANNELS, self.side, self.side]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> Image2D {
        let n = self.side * self.side;
        Image2D::new(self.side, self.side, self.data[c * n..(c + 1) * n].to_vec())
            .expect("channel shape is consistent")
    }

    fn map_channels(&self, f: impl Fn(&Image2D) -> Result<Image2D>) -> Result<Self> {
        let channels = [
            f(&self.channel(0))?,
            f(&self.channel(1))?,
            f(&self.channel(2))?,
        ];
        Self::from_channels(channels)
    }
}

pub fn assemble_image_input(triplet: &SliceTriplet, side: usize) -> Result<ImageTensor> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!("image side must be ≥ 8, got {side}")));
    }
    let [a, b, c] = triplet.as_array();
    ImageTensor::from_channels([
        resize_bilinear(a, side, side)?,
        resize_bilinear(b, side, side)?,
        resize_bilinear(c, side, side)?,
    ])
}

/// Rotates about the image centre by `theta_deg` (counter-clockwise as displayed,
/// rows growing downward). Samples falling outside the image are 0.
pub fn rotate(image: &Image2D, theta_deg: f64) -> Image2D {
    if theta_deg == 0.0 {
        return image.clone();
    }
    let (h, w) = image.shape();
    let (sin, cos) = theta_deg.to_radians().sin_cos();
    let cy = (h - 1) as f64 / 2.0;
    let cx = (w - 1) as f64 / 2.0;
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        let dy = r as f64 - cy;
        for c in 0..w {
            let dx = c as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            pixels.push(sample_bilinear(image, sy, sx).unwrap_or(0.0));
        }
    }
    Image2D::new(h, w, pixels).expect("same shape as input")
}

/// Crops `side × side` at `(row, col)`.
pub fn crop(image: &Image2D, row: usize, col: usize, side: usize) -> Result<Image2D> {
    if side == 0 || row + side > image.height() || col + side > image.width() {
        return Err(Error::InvalidArgument(format!(
            "crop {side}×{side} at ({row},{col}) exceeds {}×{}",
            image.height(),
            image.width()
        )));
    }
    let pixels = (row..row + side)
        .flat_map(|r| (col..col + side).map(move |c| image.get(r, c)))
        .collect();
    Image2D::new(side, side, pixels)
}

/// One concrete draw of the augmentation transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub theta_deg: f64,
    pub crop_row: usize,
    pub crop_col: usize,
    pub crop_side: usize,
}

impl AugmentDraw {
    pub fn sample(side: usize, rng: &mut RngStream, max_rotate_deg: f64, crop_fraction: f64) -> Result<Self> {
        if !(crop_fraction > 0.0 && crop_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "crop_fraction must be in (0, 1], got {crop_fraction}"
            )));
        }
        if !(max_rotate_deg >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max_rotate_deg must be ≥ 0, got {max_rotate_deg}"
            )));
        }
        let theta_deg = rng.uniform(-max_rotate_deg, max_rotate_deg);
        let crop_side = ((crop_fraction * side as f64).ceil() as usize).clamp(1, side);
        let slack = side - crop_side;
        let crop_row = rng.below(slack + 1);
        let crop_col = rng.below(slack + 1);
        Ok(Self {
            theta_deg,
            crop_row,
            crop_col,
            crop_side,
        })
    }

    /// Rotates, crops, then resizes back to the original side; identical for every channel.
    pub fn apply(&self, input: &ImageTensor) -> Result<ImageTensor> {
        let side = input.side();
        input.map_channels(|ch| {
            let rotated = rotate(ch, self.theta_deg);
            let cropped = crop(&rotated, self.crop_row, self.crop_col, self.crop_side)?;
            resize_bilinear(&cropped, side, side)
        })
    }
}

/// Random rotation + crop drawn from `rng`.
pub fn augment(
    input: &ImageTensor,
    rng: &mut RngStream,
    max_rotate_deg: f64,
    crop_fraction: f64,
) -> Result<ImageTensor> {
    AugmentDraw::sample(input.side(), rng, max_rotate_deg, crop_fraction)?.apply(input)
}

/// Binary PGM bytes, min-max scaled to `0..=255`; constant images map to 0.
pub fn pgm_bytes(image: &Image2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    let (lo, hi) = image
        .pixels()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    out.extend(image.pixels().iter().map(|&v| {
        if range > 0.0 {
            ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn export_pgm(image: &Image2D, path: &Path) -> Result<()> {
    std::fs::write(path, pgm_bytes(image)).map_err(|e| Error::io(path, e))
}
