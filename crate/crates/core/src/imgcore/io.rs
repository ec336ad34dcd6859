//! PNG rasters and Middlebury `.flo` files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{DefenceError, Result};
use crate::imgcore::{BinaryMask, FlowField, Image};
use crate::scalar::Scalar;

/// Magic float at the head of every `.flo` file ("PIEH" read as f32).
pub const FLO_MAGIC: f32 = 202021.25;

/// Decodes a PNG (or any format the codec recognises) into `[0, 1]` intensities.
/// Images without colour channels load as 1 channel, everything else as RGB.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let dynimg = image::open(path.as_ref())?;
    Ok(from_dynamic(&dynimg))
}

pub fn from_dynamic<T: Scalar>(dynimg: &DynamicImage) -> Image<T> {
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let scale = T::lit(1.0 / 255.0);
    if dynimg.color().has_color() {
        let rgb = dynimg.to_rgb8();
        let data = rgb
            .into_raw()
            .into_iter()
            .map(|b| T::from_u8(b).unwrap() * scale)
            .collect();
        Image::from_vec(w, h, 3, data).expect("decoded rgb buffer")
    } else {
        let g = dynimg.to_luma8();
        let data = g
            .into_raw()
            .into_iter()
            .map(|b| T::from_u8(b).unwrap() * scale)
            .collect();
        Image::from_vec(w, h, 1, data).expect("decoded gray buffer")
    }
}

#[inline]
fn quantize<T: Scalar>(v: T) -> u8 {
    let f = v.as_f64().clamp(0.0, 1.0);
    (f * 255.0).round() as u8
}

/// Writes an 8-bit gray or RGB PNG; values are clamped to `[0, 1]`.
pub fn save_image<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize(*v)).collect();
    match img.channels() {
        1 => {
            let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
                .ok_or_else(|| DefenceError::Dimension("gray buffer".into()))?;
            buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        }
        _ => {
            let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes)
                .ok_or_else(|| DefenceError::Dimension("rgb buffer".into()))?;
            buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        }
    }
    Ok(())
}

/// Masks are stored as 8-bit gray, 0 = false and 255 = true. On load any
/// value above 127 counts as set.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask
        .data()
        .iter()
        .map(|b| if *b { 255u8 } else { 0 })
        .collect();
    let buf: GrayImage = ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .ok_or_else(|| DefenceError::Dimension("mask buffer".into()))?;
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let g = image::open(path.as_ref())?.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    BinaryMask::from_vec(w, h, g.into_raw().into_iter().map(|b| b > 127).collect())
}

pub fn write_flo<T: Scalar>(flow: &FlowField<T>, writer: &mut impl Write) -> Result<()> {
    writer.write_all(&FLO_MAGIC.to_le_bytes())?;
    writer.write_all(&(flow.width() as i32).to_le_bytes())?;
    writer.write_all(&(flow.height() as i32).to_le_bytes())?;
    for (u, v) in flow.u().iter().zip(flow.v()) {
        writer.write_all(&(u.as_f64() as f32).to_le_bytes())?;
        writer.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_flo<T: Scalar>(reader: &mut impl Read) -> Result<FlowField<T>> {
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    if f32::from_le_bytes(word) != FLO_MAGIC {
        return Err(DefenceError::Format("bad .flo magic".into()));
    }
    reader.read_exact(&mut word)?;
    let w = i32::from_le_bytes(word);
    reader.read_exact(&mut word)?;
    let h = i32::from_le_bytes(word);
    if w <= 0 || h <= 0 || (w as i64) * (h as i64) > (1 << 28) {
        return Err(DefenceError::Format(format!(
            "implausible .flo size {w}x{h}"
        )));
    }
    let n = w as usize * h as usize;
    let mut raw = vec![0u8; n * 8];
    reader.read_exact(&mut raw)?;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for rec in raw.chunks_exact(8) {
        u.push(T::lit(
            f32::from_le_bytes(rec[0..4].try_into().unwrap()) as f64
        ));
        v.push(T::lit(
            f32::from_le_bytes(rec[4..8].try_into().unwrap()) as f64
        ));
    }
    FlowField::from_vecs(w as usize, h as usize, u, v)
}

pub fn save_flo<T: Scalar>(flow: &FlowField<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_flo(flow, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_flo<T: Scalar>(path: impl AsRef<Path>) -> Result<FlowField<T>> {
    read_flo(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flo_header_layout() {
        let f = FlowField::<f64>::uniform(3, 2, 1.0, -0.5);
        let mut buf = Vec::new();
        write_flo(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 3 * 2 * 8);
        assert_eq!(&buf[0..4], b"PIEH");
        assert_eq!(i32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(i32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(buf[12..16].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(buf[16..20].try_into().unwrap()), -0.5);
    }

    #[test]
    fn flo_rejects_bad_magic() {
        let buf = vec![0u8; 20];
        assert!(read_flo::<f64>(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn flo_round_trip(w in 1usize..6, h in 1usize..6, vals in proptest::collection::vec(-50.0f32..50.0, 72)) {
            let n = w * h;
            let u: Vec<f64> = vals[..n].iter().map(|x| *x as f64).collect();
            let v: Vec<f64> = vals[36..36 + n].iter().map(|x| *x as f64).collect();
            let f = FlowField::from_vecs(w, h, u, v).unwrap();
            let mut buf = Vec::new();
            write_flo(&f, &mut buf).unwrap();
            let g: FlowField<f64> = read_flo(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(f, g);
        }
    }

    #[test]
    fn png_round_trip_quantizes_to_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(7, 5, |x, y| ((x * 5 + y * 31) % 256) as f64 / 255.0);
        let p = dir.path().join("g.png");
        save_image(&img, &p).unwrap();
        let back: Image<f64> = load_image(&p).unwrap();
        assert_eq!(back.channels(), 1);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        let rgb =
            Image::<f32>::from_channels(&[img.cast(), img.cast(), img.map(|v| 1.0 - v).cast()])
                .unwrap();
        let p = dir.path().join("c.png");
        save_image(&rgb, &p).unwrap();
        let back: Image<f32> = load_image(&p).unwrap();
        assert_eq!(back.channels(), 3);

        let m = BinaryMask::from_fn(9, 4, |x, y| x == y);
        let p = dir.path().join("m.png");
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }
}
