//! Little-endian binary layouts for features, classifier parameters,
//! projector banks and CAS dumps.

use std::fs;
use std::path::Path;

use wtal_core::{Cas, ClassifierParams, Error, Matrix, ProjectorBank, VideoFeatures};

use crate::error::{Result, WtalError};

pub const FEATURES_MAGIC: &[u8; 4] = b"WTFX";
pub const CAS_MAGIC: &[u8; 4] = b"WCAS";
pub const PARAMS_MAGIC: &[u8; 4] = b"WTCP";
pub const BANK_MAGIC: &[u8; 4] = b"TSPC";
pub const VERSION: u32 = 1;
/// Magic, version, two dimensions and the reserved word.
pub const MATRIX_HEADER_LEN: usize = 20;

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        Self { path, buf, pos: 0 }
    }

    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(WtalError::format(
                self.path,
                field,
                format!("truncated: need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()),
            )),
        }
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != want {
            return Err(WtalError::format(
                self.path,
                "magic",
                format!("expected {:?}, found {:?}", String::from_utf8_lossy(want), String::from_utf8_lossy(got)),
            ));
        }
        Ok(())
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn i8(&mut self, field: &'static str) -> Result<i8> {
        Ok(self.take(1, field)?[0] as i8)
    }

    fn f64(&mut self, field: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u32("version")?;
        if v != VERSION {
            return Err(WtalError::format(self.path, "version", format!("unsupported version {v}")));
        }
        Ok(())
    }

    /// Checks that exactly `n` bytes remain before reading them.
    fn payload(&mut self, n: usize) -> Result<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if left != n {
            return Err(WtalError::format(
                self.path,
                "payload",
                format!("header implies {n} payload bytes, file has {left}"),
            ));
        }
        self.take(n, "payload")
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| WtalError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| WtalError::io(path, e))
}

fn dim_u32(path: &Path, field: &'static str, n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| WtalError::format(path, field, format!("{n} does not fit in u32")))
}

fn encode_f32_matrix(path: &Path, magic: &[u8; 4], m: &Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "rows", m.rows())?.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "cols", m.cols())?.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn decode_f32_matrix(path: &Path, magic: &[u8; 4], bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(path, bytes);
    r.magic(magic)?;
    r.version()?;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    if r.u32("reserved")? != 0 {
        return Err(WtalError::format(path, "reserved", "must be zero"));
    }
    if rows == 0 || cols == 0 {
        return Err(WtalError::format(path, "dimensions", format!("{rows}x{cols} matrix is empty")));
    }
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| WtalError::format(path, "dimensions", "size overflows"))?;
    let data = r
        .payload(n)?
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data)?)
}

/// Features are stored as `f32`; values not representable in `f32` are
/// rounded.
pub fn write_features(v: &VideoFeatures, path: &Path) -> Result<()> {
    write_file(path, &encode_f32_matrix(path, FEATURES_MAGIC, v.features())?)
}

/// The video id is taken from the caller since the file does not carry one.
pub fn read_features(path: &Path, video_id: &str, seconds_per_segment: f64) -> Result<VideoFeatures> {
    let x = decode_f32_matrix(path, FEATURES_MAGIC, &read_file(path)?)?;
    Ok(VideoFeatures::new(video_id, x, seconds_per_segment)?)
}

pub fn write_cas_binary(cas: &Cas, path: &Path) -> Result<()> {
    write_file(path, &encode_f32_matrix(path, CAS_MAGIC, &cas.scores)?)
}

pub fn read_cas_binary(path: &Path, video_id: &str) -> Result<Cas> {
    let scores = decode_f32_matrix(path, CAS_MAGIC, &read_file(path)?)?;
    if !scores.is_finite() {
        return Err(Error::Validation(vec![format!("{}: non-finite CAS value", path.display())]).into());
    }
    Ok(Cas {
        video_id: video_id.to_string(),
        scores,
    })
}

pub fn write_params(p: &ClassifierParams, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "D", p.dim())?.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "F", p.num_classes())?.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "k_divisor", p.k_divisor)?.to_le_bytes());
    for v in p.weights.as_slice().iter().chain(&p.bias) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

pub fn read_params(path: &Path) -> Result<ClassifierParams> {
    let bytes = read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(PARAMS_MAGIC)?;
    r.version()?;
    let d = r.u32("D")? as usize;
    let f = r.u32("F")? as usize;
    let k_divisor = r.u32("k_divisor")? as usize;
    if d == 0 || f == 0 || k_divisor == 0 {
        return Err(WtalError::format(path, "dimensions", format!("D={d}, F={f}, k_divisor={k_divisor}")));
    }
    let payload = r.payload(8 * (d * f + f))?;
    let mut vals = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let weights = Matrix::from_vec(d, f, vals.by_ref().take(d * f).collect())?;
    let bias: Vec<f64> = vals.collect();
    if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
        return Err(Error::Validation(vec![format!("{}: non-finite parameter", path.display())]).into());
    }
    Ok(ClassifierParams {
        weights,
        bias,
        k_divisor,
    })
}

pub fn write_bank(bank: &ProjectorBank, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "L", bank.num_projectors())?.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, "D", bank.dim())?.to_le_bytes());
    out.push(bank.orientation as u8);
    out.extend_from_slice(&bank.lambda.to_le_bytes());
    out.extend_from_slice(&bank.beta.to_le_bytes());
    for v in bank.projectors.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

pub fn read_bank(path: &Path) -> Result<ProjectorBank> {
    let bytes = read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(BANK_MAGIC)?;
    r.version()?;
    let l = r.u32("L")? as usize;
    let d = r.u32("D")? as usize;
    let orientation = r.i8("orientation")?;
    let lambda = r.f64("lambda")?;
    let beta = r.f64("beta")?;
    if l == 0 || d == 0 {
        return Err(WtalError::format(path, "dimensions", format!("L={l}, D={d}")));
    }
    let p = r
        .payload(8 * l * d)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ProjectorBank::new(Matrix::from_vec(l, d, p)?, lambda, beta, orientation)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_file_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wtfx");
        let v = VideoFeatures::new("a", Matrix::zeros(1, 1), 1.0).unwrap();
        write_features(&v, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"WTFX");
        assert!(bytes[20..].iter().all(|&b| b == 0));

        let v = VideoFeatures::new("b", Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64), 1.0).unwrap();
        write_features(&v, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 44);
        // Row-major: the fourth value is x[1][0] = 3.
        assert_eq!(f32::from_le_bytes(bytes[32..36].try_into().unwrap()), 3.0);
        assert_eq!(read_features(&p, "b", 1.0).unwrap(), v);
    }

    #[test]
    fn params_and_bank_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ClassifierParams::init(5, 3, 8, 7);
        let path = dir.path().join("p.wtcp");
        write_params(&p, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 20 + 8 * (15 + 3));
        assert_eq!(read_params(&path).unwrap(), p);

        let mut bank = wtal_core::init_projectors(2, 5, 3).unwrap().with_orientation(-1);
        bank.lambda = 0.25;
        bank.beta = 2.0;
        let path = dir.path().join("b.tspc");
        write_bank(&bank, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 33 + 8 * 10);
        assert_eq!(read_bank(&path).unwrap(), bank);
    }

    #[test]
    fn nan_feature_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.wtfx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"WTFX");
        for v in [1u32, 1, 2, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        let err = read_features(&p, "n", 1.0).unwrap_err();
        assert!(matches!(err, WtalError::Core(Error::Validation(_))), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
}
