//! Binary array files, PGM export and small CSV helpers.
//!
//! Array layout, all little-endian: `"LRIP"`, `u32` version, kind byte
//! (0 image, 1 sinogram), `u32` rows, `u32` cols, then `rows * cols` `f32`
//! values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::geometry::{Image, Sinogram};

pub const MAGIC: &[u8; 4] = b"LRIP";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Image,
    Sinogram,
}

impl ArrayKind {
    fn byte(self) -> u8 {
        match self {
            ArrayKind::Image => 0,
            ArrayKind::Sinogram => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Array {
    Image(Image),
    Sinogram(Sinogram),
}

impl Array {
    pub fn kind(&self) -> ArrayKind {
        match self {
            Array::Image(_) => ArrayKind::Image,
            Array::Sinogram(_) => ArrayKind::Sinogram,
        }
    }

    pub fn into_image(self) -> Result<Image> {
        match self {
            Array::Image(i) => Ok(i),
            Array::Sinogram(_) => Err(Error::invalid("expected an image file, found a sinogram")),
        }
    }

    pub fn into_sinogram(self) -> Result<Sinogram> {
        match self {
            Array::Sinogram(s) => Ok(s),
            Array::Image(_) => Err(Error::invalid("expected a sinogram file, found an image")),
        }
    }
}

pub fn encode_array(kind: ArrayKind, rows: usize, cols: usize, values: &[f64]) -> Result<Vec<u8>> {
    ensure!(rows.checked_mul(cols) == Some(values.len()), "{rows}x{cols} array needs {} values, got {}", rows * cols, values.len());
    ensure!(rows <= u32::MAX as usize && cols <= u32::MAX as usize, "array dimensions exceed the format limit");
    ensure!(!values.iter().any(|v| v.is_nan()), "array contains NaN");
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(kind.byte());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

fn format_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, detail: detail.into() }
}

fn need(bytes: &[u8], offset: usize, len: usize, what: &str) -> Result<()> {
    if bytes.len() < offset + len {
        return Err(format_err(
            bytes.len(),
            format!("truncated {what}: missing {} byte(s)", offset + len - bytes.len()),
        ));
    }
    Ok(())
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn decode_array(bytes: &[u8]) -> Result<Array> {
    need(bytes, 0, 4, "magic")?;
    if &bytes[..4] != MAGIC {
        return Err(format_err(0, "bad magic, not an array file"));
    }
    need(bytes, 4, 4, "version")?;
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    need(bytes, 8, 1, "kind")?;
    let kind = match bytes[8] {
        0 => ArrayKind::Image,
        1 => ArrayKind::Sinogram,
        k => return Err(format_err(8, format!("unknown kind byte {k}"))),
    };
    need(bytes, 9, 8, "dimensions")?;
    let rows = u32_at(bytes, 9) as usize;
    let cols = u32_at(bytes, 13) as usize;
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| format_err(9, "dimensions overflow"))?;
    need(bytes, HEADER_LEN, count, "payload")?;
    if bytes.len() > HEADER_LEN + count {
        return Err(format_err(HEADER_LEN + count, format!("{} trailing byte(s)", bytes.len() - HEADER_LEN - count)));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if v.is_nan() {
            return Err(format_err(HEADER_LEN + 4 * i, "NaN value"));
        }
        values.push(f64::from(v));
    }
    Ok(match kind {
        ArrayKind::Image => Array::Image(Image::new(rows, cols, values)?),
        ArrayKind::Sinogram => Array::Sinogram(Sinogram::new(rows, cols, values)?),
    })
}

pub fn write_array(path: &Path, kind: ArrayKind, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_array(kind, rows, cols, values)?)?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<Array> {
    decode_array(&fs::read(path)?)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_array(path, ArrayKind::Image, img.rows(), img.cols(), img.values())
}

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    write_array(path, ArrayKind::Sinogram, sino.n_views(), sino.n_bins(), sino.values())
}

pub fn read_image(path: &Path) -> Result<Image> {
    read_array(path)?.into_image()
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    read_array(path)?.into_sinogram()
}

/// 8-bit grey level `round(255 clamp((v - lo) / (hi - lo), 0, 1))`, halves rounded up.
pub fn grey_level(v: f64, lo: f64, hi: f64) -> u8 {
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (255.0 * t + 0.5).floor() as u8
}

pub fn encode_pgm(img: &Image, window: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = window;
    ensure!(lo < hi, "display window needs lo < hi, got ({lo}, {hi})");
    let mut buf = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    buf.extend(img.values().iter().map(|&v| grey_level(v, lo, hi)));
    Ok(buf)
}

pub fn export_pgm(img: &Image, path: &Path, window: (f64, f64)) -> Result<()> {
    fs::write(path, encode_pgm(img, window)?)?;
    Ok(())
}

/// Write `header` and `rows` as CSV text.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_layout() {
        let bytes = encode_array(ArrayKind::Image, 2, 2, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bytes.len(), 33);
        assert_eq!(&bytes[..4], b"LRIP");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 0);
        assert_eq!(&bytes[9..17], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[29..33], &3.0f32.to_le_bytes());
    }

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let (r, c) = (rng.random_range(1..12), rng.random_range(1..12));
            let vals: Vec<f64> = (0..r * c).map(|_| f64::from(rng.random::<f32>() * 4.0 - 2.0)).collect();
            let img = Image::new(r, c, vals).unwrap();
            let bytes = encode_array(ArrayKind::Image, r, c, img.values()).unwrap();
            let back = decode_array(&bytes).unwrap();
            assert_eq!(back, Array::Image(img.clone()));
            let again = encode_array(ArrayKind::Image, r, c, back.into_image().unwrap().values()).unwrap();
            assert_eq!(again, bytes);
        }
        let s = Sinogram::new(2, 3, vec![0.5; 6]).unwrap();
        let bytes = encode_array(ArrayKind::Sinogram, 2, 3, s.values()).unwrap();
        assert_eq!(decode_array(&bytes).unwrap().into_sinogram().unwrap(), s);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lrip");
        let img = Image::new(1, 3, vec![0.25, -1.0, 8.0]).unwrap();
        write_image(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
        assert!(read_sinogram(&p).is_err());
    }

    #[test]
    fn format_errors() {
        let bytes = encode_array(ArrayKind::Image, 2, 2, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        match decode_array(&bytes[..30]) {
            Err(Error::Format { offset, detail }) => {
                assert_eq!(offset, 30);
                assert!(detail.contains("missing 3 byte"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_array(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_array(&bad), Err(Error::Format { offset: 4, .. })));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(decode_array(&bad), Err(Error::Format { offset: 8, .. })));
        assert!(matches!(decode_array(&bytes[..6]), Err(Error::Format { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_array(&long), Err(Error::Format { offset: 33, .. })));
        assert!(matches!(encode_array(ArrayKind::Image, 1, 1, &[f64::NAN]), Err(Error::InvalidArgument(_))));
        assert!(encode_array(ArrayKind::Image, 2, 2, &[0.0]).is_err());
    }

    #[test]
    fn pgm_levels() {
        let lo = Image::filled(2, 3, 0.0);
        let pgm = encode_pgm(&lo, (0.0, 1.0)).unwrap();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert!(pgm[11..].iter().all(|&b| b == 0));
        let hi = encode_pgm(&Image::filled(2, 2, 1.0), (0.0, 1.0)).unwrap();
        assert!(hi[11..].iter().all(|&b| b == 255));
        assert_eq!(grey_level(0.5, 0.0, 1.0), 128);
        assert_eq!(grey_level(-3.0, 0.0, 1.0), 0);
        assert_eq!(grey_level(9.0, 0.0, 1.0), 255);
        assert!(encode_pgm(&lo, (1.0, 1.0)).is_err());
    }
}
