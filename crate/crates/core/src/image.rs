//! Grayscale rasters in the normalized `[0, 1]` domain, plus binary PGM I/O.
//!
//! Everything inside the crate works on real intensities; 8-bit quantization
//! only happens at the file boundary, with round-half-away-from-zero so that
//! written payloads are byte-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Width and height of an image, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Dims { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidImage(format!(
                "intensity {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    /// Builds an image from arbitrary reals, clamping each into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let data = data.into_iter().map(clamp_unit).collect();
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with replicate (clamp-to-edge) addressing.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Applies `f` to every sample and clamps the result back into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    /// 8-bit quantization used by the PGM writer.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    /// Inverse of [`GrayImage::to_bytes`] for a given `maxval`.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8], maxval: u8) -> Result<Self> {
        if maxval == 0 {
            return Err(Error::BadMaxval(0));
        }
        if let Some(&b) = bytes.iter().find(|&&b| b > maxval) {
            return Err(Error::InvalidImage(format!(
                "sample {b} exceeds maxval {maxval}"
            )));
        }
        let scale = f64::from(maxval);
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / scale).collect(),
        )
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        let oob = || Error::OutOfBounds {
            x,
            y,
            w,
            h,
            width: self.width,
            height: self.height,
        };
        if w == 0 || h == 0 {
            return Err(oob());
        }
        let right = x.checked_add(w).ok_or_else(oob)?;
        let bottom = y.checked_add(h).ok_or_else(oob)?;
        if right > self.width || bottom > self.height {
            return Err(oob());
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..bottom {
            let start = row * self.width;
            data.extend_from_slice(&self.data[start + x..start + right]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            data,
        })
    }

    /// Pads right and bottom by mirror reflection (edge sample not repeated)
    /// until both sides are multiples of `multiple`. Returns the padded image
    /// and the original dimensions.
    pub fn pad_reflect(&self, multiple: usize) -> Result<(GrayImage, Dims)> {
        if multiple == 0 {
            return Err(Error::param("pad multiple must be at least 1"));
        }
        let original = self.dims();
        let width = self.width.div_ceil(multiple) * multiple;
        let height = self.height.div_ceil(multiple) * multiple;
        if width == self.width && height == self.height {
            return Ok((self.clone(), original));
        }
        let mut data = Vec::with_capacity(width * height);
        for py in 0..height {
            let sy = reflect_index(py, self.height);
            for px in 0..width {
                data.push(self.data[sy * self.width + reflect_index(px, self.width)]);
            }
        }
        Ok((
            GrayImage {
                width,
                height,
                data,
            },
            original,
        ))
    }

    /// Undo [`GrayImage::pad_reflect`].
    pub fn unpad(&self, original: Dims) -> Result<GrayImage> {
        self.crop(0, 0, original.width, original.height)
    }
}

/// Mirror `i` into `0..n` without repeating the edge sample: for `n = 4`
/// the sequence continues `.., 3, 2, 1, 0, 1, 2, ..`.
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

#[inline]
pub fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// `round(v * 255)` with halves rounded away from zero (`f64::round`).
#[inline]
pub fn quantize(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Encodes a binary PGM (`P5`, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

/// Decodes a binary PGM. Header fields may be separated by any whitespace
/// and `#` comments; exactly one whitespace byte precedes the payload.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::WrongMagic { found });
    }
    let mut pos = 2;
    let width = header_field(bytes, &mut pos, "width")?;
    let height = header_field(bytes, &mut pos, "height")?;
    let maxval = header_field(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::BadMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::BadHeader(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::BadHeader(
                "missing whitespace before pixel data".into(),
            ))
        }
    }
    let expected = width as usize * height as usize;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::from_bytes(
        width as usize,
        height as usize,
        &payload[..expected],
        maxval as u8,
    )
}

fn header_field(bytes: &[u8], pos: &mut usize, name: &str) -> Result<u32> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::BadHeader(format!("missing {name}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::BadHeader(format!("{name} out of range")))
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads a `.png` (8-bit grayscale) or binary PGM, chosen by extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    if !is_png(path) {
        return load_pgm(path);
    }
    let png_err = |reason: String| Error::Png {
        path: path.to_path_buf(),
        reason,
    };
    let decoded = image::open(path).map_err(|e| png_err(e.to_string()))?;
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            GrayImage::from_bytes(w as usize, h as usize, buf.as_raw(), 255)
        }
        other => Err(png_err(format!(
            "expected 8-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

/// Saves as PNG when the extension is `.png`, otherwise as binary PGM.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !is_png(path) {
        return save_pgm(img, path);
    }
    image::save_buffer(
        path,
        &img.to_bytes(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Png {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
