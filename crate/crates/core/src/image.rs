//! Images in `[-1, 1]` and single-channel planes.

use std::path::Path;

use frontalize_tensor::Tensor;

use crate::{Error, Result};

/// An `H×W×C` image with every value in `[-1, 1]`, stored channel-planar.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Planar data: `data[(c * height + y) * width + x]`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parsing(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Parsing(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Parsing(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Parsing(format!("image value {v} outside [-1, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds an image from `f(x, y, c)`, clamping into `[-1, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c).clamp(-1.0, 1.0));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `(width, height, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    /// `[1, C, H, W]`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[1, self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("image dims match data")
    }

    /// Reads sample `n` of an NCHW tensor.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let (_, c, h, w) = t.dims4()?;
        Self::new(w, h, c, t.sample(n).to_vec())
    }

    /// Stacks images into an `[N, C, H, W]` batch.
    pub fn batch(images: &[&Image]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::Parsing("cannot batch zero images".into()))?;
        let mut data = Vec::with_capacity(first.data.len() * images.len());
        for im in images {
            if im.dims() != first.dims() {
                return Err(Error::Parsing(format!(
                    "cannot batch {:?} with {:?}",
                    im.dims(),
                    first.dims()
                )));
            }
            data.extend_from_slice(&im.data);
        }
        Ok(Tensor::new(
            &[images.len(), first.channels, first.height, first.width],
            data,
        )?)
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Decodes an 8-bit PNG (or any raster the codec understands); grey images
    /// keep one channel, everything else becomes RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let decoded = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (channels, raw, w, h) = match decoded {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                (1, g.into_raw(), w, h)
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                (3, rgb.into_raw(), w, h)
            }
        };
        let (w, h) = (w as usize, h as usize);
        let mut data = vec![0.0; w * h * channels];
        for (i, &byte) in raw.iter().enumerate() {
            let c = i % channels;
            let p = i / channels;
            data[c * w * h + p] = from_byte(byte);
        }
        Self::new(w, h, channels, data)
    }

    /// Writes an 8-bit lossless PNG, mapping `[-1, 1]` linearly onto `0..=255`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (w, h, c) = self.dims();
        let mut raw = vec![0u8; w * h * c];
        for ch in 0..c {
            for p in 0..w * h {
                raw[p * c + ch] = to_byte(self.data[ch * w * h + p]);
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let color = if c == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &raw,
            w as u32,
            h as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Round-trips through 8-bit quantization without touching the disk.
    pub fn quantized(&self) -> Image {
        Image {
            data: self.data.iter().map(|&v| from_byte(to_byte(v))).collect(),
            ..self.clone()
        }
    }

    /// Places images side by side (same height and channels).
    pub fn hstack(images: &[&Image]) -> Result<Image> {
        let first = images
            .first()
            .ok_or_else(|| Error::Parsing("nothing to stack".into()))?;
        let (h, c) = (first.height, first.channels);
        if images.iter().any(|im| im.height != h || im.channels != c) {
            return Err(Error::Parsing(
                "hstack needs equal height and channels".into(),
            ));
        }
        let w: usize = images.iter().map(|im| im.width).sum();
        let mut data = Vec::with_capacity(w * h * c);
        for ch in 0..c {
            for y in 0..h {
                for im in images {
                    let row = (ch * h + y) * im.width;
                    data.extend_from_slice(&im.data[row..row + im.width]);
                }
            }
        }
        Image::new(w, h, c, data)
    }
}

pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn from_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

/// A single-channel `H×W` array, used for soft masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}
