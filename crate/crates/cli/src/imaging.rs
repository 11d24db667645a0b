//! Image and mask codecs plus network preprocessing.
//!
//! Colour images are 8-bit RGB PPM (P6) or PNG; masks are 8-bit grey PGM
//! (P5) or PNG. Tensors are 3×H×W with values in [0, 1].

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dmgcam_core::tensor::bilinear_resize;
use dmgcam_core::{BinaryMask, Tensor};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, GrayImage, ImageEncoder, ImageFormat, ImageReader, RgbImage};

/// Per-channel means subtracted after scaling to [0, 1].
pub const CHANNEL_MEANS: [f32; 3] = [0.485, 0.456, 0.406];

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .with_guessed_format()?;
    match reader.format() {
        Some(ImageFormat::Pnm | ImageFormat::Png) => {}
        other => bail!("{}: unsupported image format {other:?}", path.display()),
    }
    reader
        .decode()
        .with_context(|| format!("cannot decode {}", path.display()))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    match decode(path)? {
        DynamicImage::ImageRgb8(img) => Ok(img),
        other => bail!("{}: expected 8-bit RGB, found {:?}", path.display(), other.color()),
    }
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    match decode(path)? {
        DynamicImage::ImageLuma8(img) => Ok(BinaryMask::from_gray(&img)),
        other => bail!(
            "{}: expected 8-bit greyscale mask, found {:?}",
            path.display(),
            other.color()
        ),
    }
}

fn is_pnm(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("ppm" | "pgm" | "pnm")
    )
}

fn write_pnm(path: &Path, bytes: &[u8], w: u32, h: u32, color: ExtendedColorType) -> Result<()> {
    let subtype = match color {
        ExtendedColorType::L8 => PnmSubtype::Graymap(SampleEncoding::Binary),
        _ => PnmSubtype::Pixmap(SampleEncoding::Binary),
    };
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(subtype)
        .write_image(bytes, w, h, color)
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Saves as binary PPM for `.ppm`, otherwise by extension (PNG).
pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    if is_pnm(path) {
        write_pnm(path, img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
    } else {
        img.save(path)
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn save_gray(path: &Path, img: &GrayImage) -> Result<()> {
    if is_pnm(path) {
        write_pnm(path, img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
    } else {
        img.save(path)
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    save_gray(path, &mask.to_gray())
}

pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = p.0[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("dims match")
}

/// Inverse of [`image_to_tensor`], rounding and clamping to 0..=255.
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let &[3, h, w] = t.shape() else {
        bail!("expected a 3×H×W tensor, found {:?}", t.shape());
    };
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |c: usize| {
            (d[c * h * w + y as usize * w + x as usize] * 255.0)
                .round()
                .clamp(0.0, 255.0) as u8
        };
        image::Rgb([at(0), at(1), at(2)])
    }))
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    Ok(image_to_tensor(&load_rgb(path)?))
}

/// Bilinear resize to `size`×`size`, still in [0, 1].
pub fn resize(image: &Tensor, size: usize) -> Result<Tensor> {
    Ok(bilinear_resize(image, size, size)?)
}

/// Resize to `size`×`size`, then subtract [`CHANNEL_MEANS`].
pub fn preprocess(image: &Tensor, size: usize) -> Result<Tensor> {
    let mut t = resize(image, size)?;
    let plane = size * size;
    for (c, chunk) in t.data_mut().chunks_exact_mut(plane).enumerate() {
        for v in chunk {
            *v -= CHANNEL_MEANS[c];
        }
    }
    Ok(t)
}
