//! Latent-domain source–channel codec.
//!
//! [`LatentCodec`] is the seam where a learned encoder/decoder pair would
//! plug in. [`LinearCodec`] is the reference implementation: a seeded
//! projection with orthonormal rows, decoded by orthonormal back-projection.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::normalize_power;
use crate::error::{Error, Result};
use crate::rng::{seeded, standard_normal};

/// Encoder/decoder pair between a `2k'` latent and `2k` real channel values.
pub trait LatentCodec: Sync {
    /// Length 2k' of the latent.
    fn latent_len(&self) -> usize;
    /// Length 2k of the real transmit vector.
    fn channel_len(&self) -> usize;
    /// Unnormalized transmit vector.
    fn project(&self, z: &[f64]) -> Result<Vec<f64>>;
    /// Latent estimate from an equalized, denormalized receive vector.
    fn back_project(&self, y: &[f64], sigma2: f64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    /// Latent half-dimension k' (the latent has 2k' reals).
    pub k_prime: usize,
    /// Channel uses k.
    pub k: usize,
    /// Nominal image size used for bandwidth accounting.
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Shrinkage applied at the decoder; 0 disables it.
    pub tikhonov_lambda: f64,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            k_prime: 8,
            k: 2,
            height: 16,
            width: 16,
            channels: 3,
            tikhonov_lambda: 0.0,
            seed: 0x5eed_c0de,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.k_prime {
            return Err(Error::config(format!(
                "codec needs 1 <= k <= k', got k = {}, k' = {}",
                self.k, self.k_prime
            )));
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::config("image dimensions must be positive"));
        }
        if !(self.tikhonov_lambda >= 0.0) {
            return Err(Error::config("tikhonov_lambda must be >= 0"));
        }
        Ok(())
    }

    pub fn source_dims(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Channel bandwidth ratio k / (C·H·W).
pub fn cbr(cfg: &CodecConfig) -> f64 {
    cfg.k as f64 / cfg.source_dims() as f64
}

/// Channel uses closest to a target bandwidth ratio (at least one).
pub fn k_for_cbr(target: f64, cfg: &CodecConfig) -> usize {
    ((target * cfg.source_dims() as f64).round() as usize).max(1)
}

/// Seeded projection codec; `rows` holds P row-major (2k × 2k').
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCodec {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
    seed: u64,
    tikhonov_lambda: f64,
}

impl LinearCodec {
    pub fn new(cfg: &CodecConfig) -> Result<Self> {
        cfg.validate()?;
        let rows = 2 * cfg.k;
        let cols = 2 * cfg.k_prime;
        let mut rng = seeded(cfg.seed);
        let p = orthonormal_rows(rows, cols, &mut rng)?;
        Ok(LinearCodec {
            rows,
            cols,
            p,
            seed: cfg.seed,
            tikhonov_lambda: cfg.tikhonov_lambda,
        })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.cols..(i + 1) * self.cols]
    }

    pub fn tikhonov_lambda(&self) -> f64 {
        self.tikhonov_lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the matrix as a dimension-headed little-endian binary file.
    ///
    /// Layout: magic `GCLC`, u32 version (1), u32 rows, u32 cols, f64
    /// tikhonov lambda, u64 seed, then rows·cols f64 values row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"GCLC")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&self.tikhonov_lambda.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.p {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"GCLC" {
            return Err(Error::Parse("not a codec matrix file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(Error::Parse(format!("unsupported codec file version {version}")));
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        if rows == 0 || rows > cols || rows % 2 != 0 || cols % 2 != 0 {
            return Err(Error::Parse(format!("invalid codec shape {rows}x{cols}")));
        }
        let tikhonov_lambda = f64::from_le_bytes(read_array(&mut r)?);
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        let mut p = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            p.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        Ok(LinearCodec {
            rows,
            cols,
            p,
            seed,
            tikhonov_lambda,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

impl LatentCodec for LinearCodec {
    fn latent_len(&self) -> usize {
        self.cols
    }

    fn channel_len(&self) -> usize {
        self.rows
    }

    fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.cols {
            return Err(Error::contract(format!(
                "latent length {} does not match codec input {}",
                z.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), z)).collect())
    }

    fn back_project(&self, y: &[f64], sigma2: f64) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::contract(format!(
                "channel vector length {} does not match codec output {}",
                y.len(),
                self.rows
            )));
        }
        let shrink = 1.0 / (1.0 + self.tikhonov_lambda * sigma2);
        let mut z = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            let w = yi * shrink;
            for (zj, pij) in z.iter_mut().zip(self.row(i)) {
                *zj += w * pij;
            }
        }
        Ok(z)
    }
}

/// Output of [`encode`]: the unit-power transmit vector and the scale that
/// was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub x: Vec<f64>,
    pub scale: f64,
}

/// Projects and power-normalizes a latent for transmission.
pub fn encode<C: LatentCodec + ?Sized>(codec: &C, z: &[f64]) -> Result<Encoded> {
    let raw = codec.project(z)?;
    let (x, scale) = normalize_power(&raw)?;
    Ok(Encoded { x, scale })
}

/// Back-projects an equalized receive vector and undoes the power scale.
pub fn decode<C: LatentCodec + ?Sized>(
    codec: &C,
    y: &[f64],
    scale: f64,
    sigma2: f64,
) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::contract("decode needs a positive power scale"));
    }
    let z = codec.back_project(y, sigma2)?;
    Ok(z.into_iter().map(|v| v / scale).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rows of a seeded Gaussian matrix orthonormalized by two passes of
/// modified Gram–Schmidt.
fn orthonormal_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Vec<f64>> {
    if rows > cols {
        return Err(Error::config(format!(
            "cannot build {rows} orthonormal rows in dimension {cols}"
        )));
    }
    let mut m: Vec<f64> = (0..rows * cols).map(|_| standard_normal(rng)).collect();
    for i in 0..rows {
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = m.split_at_mut(i * cols);
                let prev = &head[j * cols..(j + 1) * cols];
                let cur = &mut tail[..cols];
                let proj = dot(prev, cur);
                for (c, p) in cur.iter_mut().zip(prev) {
                    *c -= proj * p;
                }
            }
        }
        let row = &mut m[i * cols..(i + 1) * cols];
        let norm = dot(row, row).sqrt();
        if norm < 1e-8 {
            return Err(Error::Domain("degenerate random projection".into()));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_vec;

    fn codec(k_prime: usize, k: usize) -> LinearCodec {
        LinearCodec::new(&CodecConfig {
            k_prime,
            k,
            ..Default::default()
        })
        .unwrap()
    }

    fn roundtrip(c: &LinearCodec, z: &[f64]) -> Vec<f64> {
        let e = encode(c, z).unwrap();
        decode(c, &e.x, e.scale, 0.0).unwrap()
    }

    #[test]
    fn row_gram_is_identity() {
        let c = codec(8, 3);
        for i in 0..6 {
            for j in 0..6 {
                let g = dot(c.row(i), c.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn square_codec_roundtrip() {
        let c = codec(4, 4);
        let z = normal_vec(&mut seeded(5), 8).into_vec();
        let zc = roundtrip(&c, &z);
        for (a, b) in z.iter().zip(&zc) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_properties() {
        let c = codec(8, 2);
        let z = normal_vec(&mut seeded(6), 16).into_vec();
        let zc = roundtrip(&c, &z);
        let zcc = roundtrip(&c, &zc);
        for (a, b) in zc.iter().zip(&zcc) {
            assert!((a - b).abs() < 1e-10);
        }
        let resid: Vec<f64> = z.iter().zip(&zc).map(|(a, b)| a - b).collect();
        for i in 0..4 {
            assert!(dot(c.row(i), &resid).abs() < 1e-10);
        }
        assert!(dot(&zc, &zc) <= dot(&z, &z));
        // z in the row space keeps its norm under projection
        let x = c.project(&zc).unwrap();
        assert!((dot(&x, &x) - dot(&zc, &zc)).abs() < 1e-10);
    }

    #[test]
    fn encode_shapes_and_errors() {
        let c = codec(8, 2);
        assert_eq!(encode(&c, &[1.0; 16]).unwrap().x.len(), 4);
        assert!(matches!(encode(&c, &[0.0; 16]), Err(Error::ZeroPower)));
        assert!(encode(&c, &[1.0; 15]).is_err());
        assert!(c.back_project(&[1.0; 3], 0.0).is_err());
        assert!(LinearCodec::new(&CodecConfig { k: 9, ..Default::default() }).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(codec(8, 2), codec(8, 2));
        let other = LinearCodec::new(&CodecConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(codec(8, 2).matrix(), other.matrix());
    }

    #[test]
    fn shrinkage_variant() {
        let c = LinearCodec::new(&CodecConfig {
            tikhonov_lambda: 1.0,
            ..Default::default()
        })
        .unwrap();
        let plain = codec(8, 2);
        let y = [0.5, -0.2, 0.1, 0.9];
        let a = c.back_project(&y, 0.25).unwrap();
        let b = plain.back_project(&y, 0.25).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y / 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn bandwidth_ratio() {
        let c = CodecConfig {
            height: 256,
            width: 256,
            channels: 3,
            k: 640,
            k_prime: 1024,
            ..Default::default()
        };
        assert!((cbr(&c) - 0.003255).abs() < 1e-6);
        assert_eq!(cbr(&CodecConfig { k: 196608, k_prime: 196608, ..c }), 1.0);
        let big = CodecConfig { height: 512, width: 512, ..c };
        assert!((cbr(&big) - cbr(&c) / 4.0).abs() < 1e-15);
        assert_eq!(k_for_cbr(0.0033, &CodecConfig::default()), 3);
    }

    #[test]
    fn file_roundtrip() {
        let c = codec(8, 2);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 8 + 8 + 4 * 16 * 8);
        assert_eq!(LinearCodec::read_from(&buf[..]).unwrap(), c);
        assert!(LinearCodec::read_from(&buf[..10]).is_err());
        assert!(LinearCodec::read_from(&b"XXXX0000"[..]).is_err());
    }
}
