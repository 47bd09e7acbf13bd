//! MCSF v1 feature files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MCSF"
//!      4     4  version (u32 LE) = 1
//!      8     4  s
//!     12     4  t
//!     16     4  G
//!     20     4  label
//!     24     1  trimmed flag (0 or 1)
//!     25  4·s·G       spatial values, f32 LE, row-major
//!      …  4·t·(G−1)   temporal values, f32 LE, row-major
//! ```
//!
//! Values are stored at single precision; reading widens them back to `f64`.

use std::fs;
use std::path::Path;

use crate::attention::FeatureSample;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const MAGIC: &[u8; 4] = b"MCSF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 25;

/// Size in bytes of the value payload for the given dimensions.
pub fn payload_len(s: usize, t: usize, g: usize) -> usize {
    4 * (s * g + t * (g - 1))
}

pub fn encode_feature(sample: &FeatureSample) -> Result<Vec<u8>> {
    let (s, g) = sample.spatial.shape();
    let t = sample.temporal.rows();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::dim(format!("{what} = {v} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len(s, t, g));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (v, what) in [(s, "s"), (t, "t"), (g, "G"), (sample.label, "label")] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    out.push(u8::from(sample.trimmed));
    for m in [&sample.spatial, &sample.temporal] {
        for &x in m.as_slice() {
            let y = x as f32;
            if !y.is_finite() {
                return Err(Error::Numeric(format!(
                    "value {x} overflows single precision"
                )));
            }
            out.extend_from_slice(&y.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!(
                    "truncated while reading {what}: need {n} bytes at offset {}",
                    self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let raw = self.take(4 * n, what)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if x.is_finite() {
                    Ok(f64::from(x))
                } else {
                    Err(Error::format(
                        (start + 4 * i) as u64,
                        format!("non-finite {what} value"),
                    ))
                }
            })
            .collect()
    }
}

/// Parses a feature file image. `video_id` is attached to the sample.
pub fn decode_feature(bytes: &[u8], video_id: &str) -> Result<FeatureSample> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"MCSF\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let s = r.u32("s")? as usize;
    let t = r.u32("t")? as usize;
    let g = r.u32("G")? as usize;
    let label = r.u32("label")? as usize;
    if s == 0 {
        return Err(Error::format(8, "s must be positive"));
    }
    if t == 0 {
        return Err(Error::format(12, "t must be positive"));
    }
    if g < 2 {
        return Err(Error::format(16, format!("G must be at least 2, got {g}")));
    }
    let trimmed = match r.take(1, "trimmed flag")?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::format(
                24,
                format!("trimmed flag must be 0 or 1, got {other}"),
            ))
        }
    };
    let spatial_len = s
        .checked_mul(g)
        .ok_or_else(|| Error::format(8, "dimensions overflow"))?;
    let temporal_len = t
        .checked_mul(g - 1)
        .ok_or_else(|| Error::format(12, "dimensions overflow"))?;
    if (spatial_len + temporal_len).saturating_mul(4) > bytes.len() - HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated payload: header declares {} bytes, file has {}",
                payload_len(s, t, g),
                bytes.len() - HEADER_LEN
            ),
        ));
    }
    let spatial = r.f32s(spatial_len, "spatial")?;
    let temporal = r.f32s(temporal_len, "temporal")?;
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    FeatureSample::new(
        Matrix::new(s, g, spatial)?,
        Matrix::new(t, g - 1, temporal)?,
        label,
        trimmed,
        video_id,
    )
}

pub fn write_feature(path: impl AsRef<Path>, sample: &FeatureSample) -> Result<()> {
    fs::write(path, encode_feature(sample)?)?;
    Ok(())
}

/// Reads a feature file; the video id defaults to the file stem.
pub fn read_feature(path: impl AsRef<Path>) -> Result<FeatureSample> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_feature(&bytes, &id)
}

/// Rounds every value to single precision, matching what a file round trip yields.
pub fn quantize(sample: &mut FeatureSample) {
    for m in [&mut sample.spatial, &mut sample.temporal] {
        for x in m.as_mut_slice() {
            *x = f64::from(*x as f32);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(s: usize, t: usize, g: usize) -> FeatureSample {
        let sp = Matrix::new(s, g, (0..s * g).map(|i| i as f64 * 0.1 - 0.3).collect()).unwrap();
        let tp = Matrix::new(
            t,
            g - 1,
            (0..t * (g - 1)).map(|i| (i as f64).sin()).collect(),
        )
        .unwrap();
        FeatureSample::new(sp, tp, 3, true, "x").unwrap()
    }

    #[test]
    fn size_arithmetic() {
        let bytes = encode_feature(&sample(2, 3, 4)).unwrap();
        assert_eq!(payload_len(2, 3, 4), 68);
        assert_eq!(bytes.len(), HEADER_LEN + 68);
    }

    #[test]
    fn round_trip_at_single_precision() {
        let mut original = sample(2, 3, 4);
        let decoded = decode_feature(&encode_feature(&original).unwrap(), "x").unwrap();
        quantize(&mut original);
        assert_eq!(decoded, original);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_feature(&sample(2, 3, 4)).unwrap();
        assert_eq!(&bytes[..4], b"MCSF");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..12], 2u32.to_le_bytes());
        assert_eq!(bytes[12..16], 3u32.to_le_bytes());
        assert_eq!(bytes[16..20], 4u32.to_le_bytes());
        assert_eq!(bytes[20..24], 3u32.to_le_bytes());
        assert_eq!(bytes[24], 1);
        assert_eq!(bytes[25..29], (-0.3f32).to_le_bytes());
    }

    #[test]
    fn truncation_and_corruption_are_format_errors() {
        let bytes = encode_feature(&sample(2, 3, 4)).unwrap();
        for cut in [0, 3, 10, 24, 25, 60, bytes.len() - 1] {
            let err = decode_feature(&bytes[..cut], "x").unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "cut {cut}: {err}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_feature(&bad, "x"),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_feature(&bad, "x"),
            Err(Error::Format { offset: 4, .. })
        ));
        let mut bad = bytes.clone();
        bad[16..20].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(
            decode_feature(&bad, "x"),
            Err(Error::Format { offset: 16, .. })
        ));
        let mut bad = bytes.clone();
        bad[24] = 7;
        assert!(matches!(
            decode_feature(&bad, "x"),
            Err(Error::Format { offset: 24, .. })
        ));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(
            decode_feature(&bad, "x"),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes;
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            decode_feature(&bad, "x"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip_7.mcsf");
        write_feature(&path, &sample(3, 2, 5)).unwrap();
        let back = read_feature(&path).unwrap();
        assert_eq!(back.video_id, "clip_7");
        assert_eq!(back.frames(), 5);
    }
}
