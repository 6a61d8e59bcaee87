//! PNG encoding of masks, speckle images and 8-bit renders.
//!
//! Arrays are indexed `[i, j]` and stored with `i` as the image row.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};
use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optics::SpeckleImage;
use crate::raster::Mask;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Encodes in memory so the bytes can be digested before hitting the disk.
fn encode_png<P, C>(img: &ImageBuffer<P, C>) -> std::result::Result<Vec<u8>, image::ImageError>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn gray8_png_bytes(data: &Array2<u8>) -> Result<Vec<u8>> {
    let (rows, cols) = data.dim();
    let img = GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        Luma([data[(y as usize, x as usize)]])
    });
    encode_png(&img).map_err(|e| image_err(Path::new("<memory>"), e))
}

pub fn write_gray8_png(path: &Path, data: &Array2<u8>) -> Result<()> {
    write_bytes(path, &gray8_png_bytes(data)?)
}

pub fn mask_png_bytes(mask: &Mask) -> Result<Vec<u8>> {
    gray8_png_bytes(&mask.cells().mapv(|v| if v { 255 } else { 0 }))
}

/// 8-bit `{0, 255}` PNG.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    write_bytes(path, &mask_png_bytes(mask)?)
}

/// Reads any grayscale PNG as a mask; pixels at or above 128 are set.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let cells = Array2::from_shape_fn((h as usize, w as usize), |(i, j)| {
        img.get_pixel(j as u32, i as u32)[0] >= 128
    });
    Mask::from_array(cells)
}

/// Reads a grayscale PNG (8 or 16 bit) as reals in `[0, 1]`.
pub fn read_gray_png(path: &Path) -> Result<Array2<f64>> {
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma16();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(i, j)| {
        img.get_pixel(j as u32, i as u32)[0] as f64 / 65535.0
    }))
}

/// 16-bit PNG encoding of a speckle image. The image maximum maps to 65535;
/// multiplying the stored integers by the returned `scale` recovers the
/// intensities within half a quantum.
pub fn speckle_png_bytes(img: &SpeckleImage) -> Result<(Vec<u8>, f64)> {
    let max = img.max();
    let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
    let data = img.data();
    let (rows, cols) = data.dim();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
            let v = data[(y as usize, x as usize)] / scale;
            Luma([v.round().clamp(0.0, 65535.0) as u16])
        });
    let bytes = encode_png(&buf).map_err(|e| image_err(Path::new("<memory>"), e))?;
    Ok((bytes, scale))
}

pub fn write_speckle_png(path: &Path, img: &SpeckleImage) -> Result<f64> {
    let (bytes, scale) = speckle_png_bytes(img)?;
    write_bytes(path, &bytes)?;
    Ok(scale)
}

pub fn read_speckle_png(path: &Path, scale: f64) -> Result<SpeckleImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let img = img.as_luma16().cloned().ok_or_else(|| {
        Error::invalid(format!("{} is not a 16-bit grayscale PNG", path.display()))
    })?;
    let (w, h) = img.dimensions();
    SpeckleImage::new(Array2::from_shape_fn((h as usize, w as usize), |(i, j)| {
        img.get_pixel(j as u32, i as u32)[0] as f64 * scale
    }))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut m = Mask::empty(8);
        m.set(1, 6, true);
        m.set(7, 0, true);
        write_mask_png(&path, &m).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), m);
    }

    #[test]
    fn speckle_round_trip_within_quantum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        let img = SpeckleImage::new(Array2::from_shape_fn((16, 16), |(i, j)| {
            ((i * 31 + j * 7) % 19) as f64 * 3.3
        }))
        .unwrap();
        let scale = write_speckle_png(&path, &img).unwrap();
        let back = read_speckle_png(&path, scale).unwrap();
        let quantum = img.max() / 65535.0;
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() <= quantum);
        }
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
