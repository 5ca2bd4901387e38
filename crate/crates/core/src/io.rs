//! File formats: RTKD arrays, 16-bit PGM previews and CSV tables.
//!
//! RTKD layout (all little-endian):
//!
//! ```text
//! "RTKD" | version u8 = 1 | dtype u8 = 1 (f64) | ndim u8 | pad u8 = 0
//! dims: ndim × u64 | payload: row-major f64
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filter::FrequencyResponse;
use crate::image::Image;

pub const RTKD_MAGIC: &[u8; 4] = b"RTKD";
pub const RTKD_VERSION: u8 = 1;
pub const RTKD_DTYPE_F64: u8 = 1;
const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RtkdArray {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl RtkdArray {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::mismatch("rtkd payload", expected, values.len()));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::param("dims", "more than 255 dimensions"));
        }
        Ok(Self { dims, values })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (self.dims.len() + self.values.len()));
        out.extend_from_slice(RTKD_MAGIC);
        out.extend_from_slice(&[RTKD_VERSION, RTKD_DTYPE_F64, self.dims.len() as u8, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses and validates an RTKD byte buffer. `path` is only used in errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptFile {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 4 || &bytes[..4] != RTKD_MAGIC {
            return Err(Error::NotRtkd(path.to_path_buf()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header".into()));
        }
        let (version, dtype, ndim, pad) = (bytes[4], bytes[5], bytes[6] as usize, bytes[7]);
        if version != RTKD_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        if dtype != RTKD_DTYPE_F64 {
            return Err(Error::UnsupportedDtype {
                path: path.to_path_buf(),
                dtype,
            });
        }
        if pad != 0 {
            return Err(corrupt(format!("nonzero pad byte {pad}")));
        }
        let dims_end = HEADER_LEN + 8 * ndim;
        if bytes.len() < dims_end {
            return Err(corrupt("truncated dimensions".into()));
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut count: u64 = 1;
        for chunk in bytes[HEADER_LEN..dims_end].chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            count = count
                .checked_mul(d)
                .ok_or_else(|| corrupt("dimension product overflows".into()))?;
            dims.push(
                usize::try_from(d).map_err(|_| corrupt(format!("dimension {d} too large")))?,
            );
        }
        let payload = &bytes[dims_end..];
        let expected = count
            .checked_mul(8)
            .ok_or_else(|| corrupt("payload size overflows".into()))?;
        if payload.len() as u64 != expected {
            return Err(corrupt(format!(
                "payload has {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { dims, values })
    }
}

pub fn write_array(path: &Path, array: &RtkdArray) -> Result<()> {
    fs::write(path, array.to_bytes())?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<RtkdArray> {
    let bytes = fs::read(path)?;
    RtkdArray::from_bytes(&bytes, path)
}

/// Binary 16-bit PGM, linear map `[min, max] → [0, 65535]`; constant images
/// map to 0. Row 0 is written first.
pub fn pgm_bytes(x: &Image) -> Vec<u8> {
    let n = x.grid().n();
    encode_pgm(n, n, x.values())
}

/// Row-major `values` of a `width × height` raster as PGM bytes.
pub fn encode_pgm(width: usize, height: usize, v: &[f64]) -> Vec<u8> {
    debug_assert_eq!(width * height, v.len());
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(2 * v.len());
    for &val in v {
        let level = if span > 0.0 {
            ((val - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

pub fn export_pgm(x: &Image, path: &Path) -> Result<()> {
    fs::write(path, pgm_bytes(x))?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn frequency_response_csv(fr: &FrequencyResponse) -> String {
    let mut s = String::from("freq,magnitude\n");
    for (f, m) in fr.freqs.iter().zip(&fr.magnitude) {
        s.push_str(&fmt_f64(*f));
        s.push(',');
        s.push_str(&fmt_f64(*m));
        s.push('\n');
    }
    s
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageGrid;

    #[test]
    fn header_size_of_two_by_two() {
        let a = RtkdArray::new(vec![2, 2], vec![0.0; 4]).unwrap();
        assert_eq!(a.to_bytes().len(), 4 + 1 + 1 + 1 + 1 + 16 + 32);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Path::new("x.rtkd");
        let a = RtkdArray::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let good = a.to_bytes();

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(RtkdArray::from_bytes(&bad, p), Err(Error::NotRtkd(_))));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(
            RtkdArray::from_bytes(truncated, p),
            Err(Error::CorruptFile { .. })
        ));

        let mut dtype = good.clone();
        dtype[5] = 2;
        assert!(matches!(
            RtkdArray::from_bytes(&dtype, p),
            Err(Error::UnsupportedDtype { dtype: 2, .. })
        ));

        let mut version = good.clone();
        version[4] = 9;
        assert!(matches!(
            RtkdArray::from_bytes(&version, p),
            Err(Error::CorruptFile { .. })
        ));
        assert!(RtkdArray::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn pgm_format() {
        let one = encode_pgm(1, 1, &[3.0]);
        assert_eq!(one, b"P5\n1 1\n65535\n\0\0");

        let g1 = ImageGrid::new(2, 1.0).unwrap();
        let x = Image::from_values(g1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let bytes = pgm_bytes(&x);
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 0, 255, 255, 255, 255, 0, 0]);

        let c = Image::from_values(g1, vec![4.2; 4]).unwrap();
        let bytes = pgm_bytes(&c);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
