//! Complex-baseband channel: symbol packing, power normalization, AWGN and
//! Rayleigh fast fading, and per-symbol MMSE equalization with perfect CSI.
//!
//! SNR convention: transmitted symbols have unit average power and σ² is the
//! total complex noise variance per symbol, so σ² = 10^(-SNR/10).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// `k` complex symbols stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymbols {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexSymbols {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn ones(k: usize) -> Self {
        ComplexSymbols {
            re: vec![1.0; k],
            im: vec![0.0; k],
        }
    }

    /// Mean of |x_i|².
    pub fn mean_power(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum();
        total / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    #[default]
    Awgn,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// Signal-to-noise ratio in dB; `inf` gives a noiseless channel.
    pub snr_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            kind: ChannelKind::Awgn,
            snr_db: 10.0,
        }
    }
}

impl ChannelConfig {
    pub fn sigma2(&self) -> f64 {
        snr_to_sigma2(self.snr_db)
    }
}

/// First half of `x` becomes the real part, second half the imaginary part.
pub fn pack_complex(x: &[f64]) -> Result<ComplexSymbols> {
    if x.len() % 2 != 0 {
        return Err(Error::contract(format!(
            "cannot pack odd-length vector ({}) into complex symbols",
            x.len()
        )));
    }
    let k = x.len() / 2;
    Ok(ComplexSymbols {
        re: x[..k].to_vec(),
        im: x[k..].to_vec(),
    })
}

pub fn unpack_complex(x: &ComplexSymbols) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len());
    out.extend_from_slice(&x.re);
    out.extend_from_slice(&x.im);
    out
}

/// Scales `x` (a packed real vector) to unit average complex-symbol power.
///
/// Returns the scaled vector and the applied scale factor.
pub fn normalize_power(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.len() % 2 != 0 {
        return Err(Error::contract("power normalization needs an even length"));
    }
    let k = (x.len() / 2) as f64;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 || !energy.is_finite() {
        return Err(Error::ZeroPower);
    }
    let scale = (k / energy).sqrt();
    Ok((x.iter().map(|v| v * scale).collect(), scale))
}

pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// `y = h ⊙ x + n`; returns the received symbols and the channel gains.
pub fn transmit<R: Rng + ?Sized>(
    x: &ComplexSymbols,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> (ComplexSymbols, ComplexSymbols) {
    let k = x.len();
    let h = match cfg.kind {
        ChannelKind::Awgn => ComplexSymbols::ones(k),
        ChannelKind::Rayleigh => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let mut h = ComplexSymbols {
                re: Vec::with_capacity(k),
                im: Vec::with_capacity(k),
            };
            for _ in 0..k {
                h.re.push(s * standard_normal(rng));
                h.im.push(s * standard_normal(rng));
            }
            h
        }
    };
    let noise_std = (cfg.sigma2() / 2.0).sqrt();
    let mut y = ComplexSymbols {
        re: Vec::with_capacity(k),
        im: Vec::with_capacity(k),
    };
    for i in 0..k {
        let (hr, hi, xr, xi) = (h.re[i], h.im[i], x.re[i], x.im[i]);
        // noise is always drawn so the stream position does not depend on SNR
        let nr = noise_std * standard_normal(rng);
        let ni = noise_std * standard_normal(rng);
        y.re.push(hr * xr - hi * xi + nr);
        y.im.push(hr * xi + hi * xr + ni);
    }
    (y, h)
}

/// Per-symbol MMSE estimate `conj(h)·y / (|h|² + σ²)`, unpacked to reals.
pub fn mmse_equalize(y: &ComplexSymbols, h: &ComplexSymbols, sigma2: f64) -> Vec<f64> {
    equalize_with(y, h, |g2| g2 + sigma2)
}

/// Zero-forcing estimate `conj(h)·y / |h|²`, for comparison.
pub fn zf_equalize(y: &ComplexSymbols, h: &ComplexSymbols) -> Vec<f64> {
    equalize_with(y, h, |g2| g2)
}

fn equalize_with(y: &ComplexSymbols, h: &ComplexSymbols, denom: impl Fn(f64) -> f64) -> Vec<f64> {
    let k = y.len();
    let mut out = vec![0.0; 2 * k];
    for i in 0..k {
        let (hr, hi, yr, yi) = (h.re[i], h.im[i], y.re[i], y.im[i]);
        let d = denom(hr * hr + hi * hi);
        out[i] = (hr * yr + hi * yi) / d;
        out[i + k] = (hr * yi - hi * yr) / d;
    }
    out
}

/// Per-symbol equalizer gain `|h|²/(|h|²+σ²)` and the variance of the
/// equalized noise per real dimension, for building exact linear-Gaussian
/// models of the link.
pub fn mmse_statistics(h: &ComplexSymbols, sigma2: f64) -> (Vec<f64>, Vec<f64>) {
    h.re.iter()
        .zip(&h.im)
        .map(|(r, i)| {
            let g2 = r * r + i * i;
            let d = g2 + sigma2;
            if d == 0.0 {
                (0.0, 0.0)
            } else {
                (g2 / d, g2 * sigma2 / (2.0 * d * d))
            }
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn packing() {
        let s = pack_complex(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.re, vec![1.0, 2.0]);
        assert_eq!(s.im, vec![3.0, 4.0]);
        assert_eq!(unpack_complex(&s), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(pack_complex(&[1.0, 2.0, 3.0]).is_err());
        let z = pack_complex(&[0.0; 4]).unwrap();
        assert!(z.re.iter().chain(&z.im).all(|v| *v == 0.0));
    }

    #[test]
    fn normalization() {
        let (x, s) = normalize_power(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(x, vec![1.0, 0.0, 0.0, 1.0]);
        let (x2, s2) = normalize_power(&[2.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(x2, x);
        assert_eq!(s2, 0.5);
        assert!(matches!(normalize_power(&[0.0; 4]), Err(Error::ZeroPower)));

        let mut rng = seeded(11);
        let raw: Vec<f64> = (0..64).map(|_| 3.0 * standard_normal(&mut rng)).collect();
        let (n, _) = normalize_power(&raw).unwrap();
        let p = pack_complex(&n).unwrap().mean_power();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_sigma2(0.0), 1.0);
        assert!((snr_to_sigma2(10.0) - 0.1).abs() < 1e-15);
        // 10^(-0.3)
        assert!((snr_to_sigma2(3.0) - 0.501187).abs() < 1e-6);
        assert_eq!(snr_to_sigma2(f64::INFINITY), 0.0);
    }

    #[test]
    fn awgn_gain_is_one_and_noiseless_limit() {
        let x = pack_complex(&[1.0, -1.0, 0.5, 0.5]).unwrap();
        let cfg = ChannelConfig {
            kind: ChannelKind::Awgn,
            snr_db: f64::INFINITY,
        };
        let (y, h) = transmit(&x, &cfg, &mut seeded(1));
        assert_eq!(h, ComplexSymbols::ones(2));
        assert_eq!(y, x);
        let cfg = ChannelConfig {
            kind: ChannelKind::Rayleigh,
            snr_db: f64::INFINITY,
        };
        let (y, h) = transmit(&x, &cfg, &mut seeded(1));
        let xhat = mmse_equalize(&y, &h, 0.0);
        for (a, b) in xhat.iter().zip(unpack_complex(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mmse_arithmetic() {
        let y = ComplexSymbols { re: vec![2.0], im: vec![0.0] };
        assert_eq!(mmse_equalize(&y, &ComplexSymbols::ones(1), 1.0), vec![1.0, 0.0]);
        let zero = ComplexSymbols { re: vec![0.0], im: vec![0.0] };
        assert_eq!(mmse_equalize(&y, &zero, 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn transmit_is_deterministic() {
        let x = pack_complex(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        let cfg = ChannelConfig {
            kind: ChannelKind::Rayleigh,
            snr_db: 5.0,
        };
        assert_eq!(transmit(&x, &cfg, &mut seeded(4)), transmit(&x, &cfg, &mut seeded(4)));
    }
}
