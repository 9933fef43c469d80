//! Image files to/from [`ImageBuf`].
//!
//! Bytes map linearly to [0, 1] by /255 with no gamma transform; the
//! optimizer fits directly in the stored color space.

use super::{file_err, IoError};
use crate::geom::Camera;
use crate::img::{ImageBuf, MaskBuf};
use image::ImageReader;
use std::path::Path;

pub fn read_image(path: &Path) -> Result<ImageBuf, IoError> {
    let img = ImageReader::open(path)
        .map_err(|e| file_err(path, e))?
        .decode()
        .map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageBuf::new(w, h);
    for (i, px) in img.pixels().enumerate() {
        out.pixels[i] = [
            px.0[0] as f64 / 255.0,
            px.0[1] as f64 / 255.0,
            px.0[2] as f64 / 255.0,
        ];
    }
    Ok(out)
}

/// Writes 8-bit PNG (or whatever the extension implies), clamping to [0, 1].
pub fn write_image(img: &ImageBuf, path: &Path) -> Result<(), IoError> {
    let mut out = image::RgbImage::new(img.width as u32, img.height as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        for ch in 0..3 {
            px.0[ch] = (img.pixels[i][ch].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    out.save(path).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Single-channel mask: luminance > 127 is true.
pub fn read_mask(path: &Path) -> Result<MaskBuf, IoError> {
    let img = ImageReader::open(path)
        .map_err(|e| file_err(path, e))?
        .decode()
        .map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = MaskBuf::new(w, h);
    for (i, px) in img.pixels().enumerate() {
        out.values[i] = px.0[0] > 127;
    }
    Ok(out)
}

pub fn write_mask(mask: &MaskBuf, path: &Path) -> Result<(), IoError> {
    let mut out = image::GrayImage::new(mask.width as u32, mask.height as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        px.0[0] = if mask.values[i] { 255 } else { 0 };
    }
    out.save(path).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads `<stem>_normal.png` next to an RGB image, if present: channels in
/// [0,1] are remapped to [-1,1] camera space, renormalized, and rotated to
/// world space with R^T.
pub fn read_normal_prior(
    image_path: &Path,
    camera: &Camera,
) -> Result<Option<ImageBuf>, IoError> {
    let stem = image_path.file_stem().and_then(|s| s.to_str());
    let Some(stem) = stem else { return Ok(None) };
    let prior_path = image_path.with_file_name(format!("{stem}_normal.png"));
    if !prior_path.exists() {
        return Ok(None);
    }
    let raw = read_image(&prior_path)?;
    let rt = camera.rotation.transpose();
    let mut out = ImageBuf::new(raw.width, raw.height);
    for (i, px) in raw.pixels.iter().enumerate() {
        let mut n = nalgebra::Vector3::new(
            px[0] * 2.0 - 1.0,
            px[1] * 2.0 - 1.0,
            px[2] * 2.0 - 1.0,
        );
        let len = n.norm();
        if len > 1e-6 {
            n /= len;
            let w = rt * n;
            out.pixels[i] = [w.x, w.y, w.z];
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn write_read_round_trip_within_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut img = ImageBuf::new(9, 7);
        for px in &mut img.pixels {
            *px = [rng.gen(), rng.gen(), rng.gen()];
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.width, 9);
        assert_eq!(back.height, 7);
        assert!(img.max_abs_diff(&back) <= 1.0 / 255.0);
    }

    #[test]
    fn mask_round_trip() {
        let mut mask = MaskBuf::new(5, 4);
        mask.set(2, 1, true);
        mask.set(4, 3, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        write_mask(&mask, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }
}
