//! End-to-end prompt transport and bit-error-rate measurement.
//!
//! Each coded bit rides one quadrature of a complex symbol with amplitude
//! 1/√2, so symbols have unit power and two coded bits share a channel use.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arith::{ac_decode, ac_encode};
use super::frame::PromptFrame;
use super::ldpc::LdpcCode;
use crate::channel::snr_to_sigma2;
use crate::error::Result;
use crate::rng::{standard_normal, trial_stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SideChannelConfig {
    /// LDPC codeword length in bits.
    pub code_length: usize,
    pub code_seed: u64,
    pub max_iters: usize,
    /// Overrides the image-channel SNR when set.
    pub snr_db: Option<f64>,
}

impl Default for SideChannelConfig {
    fn default() -> Self {
        SideChannelConfig {
            code_length: 256,
            code_seed: 0x1d9c,
            max_iters: 50,
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideChannelReport {
    /// Complex channel uses consumed.
    pub k_o: usize,
    pub coded_bits: usize,
    pub blocks: usize,
    /// Received bytes, or `None` when the frame failed its CRC.
    pub decoded: Option<Vec<u8>>,
    /// BP iterations summed over all blocks.
    pub bp_iterations: usize,
    pub all_converged: bool,
}

impl SideChannelReport {
    pub fn ok(&self) -> bool {
        self.decoded.is_some()
    }

    pub fn decoded_text(&self) -> Option<&str> {
        self.decoded.as_deref().and_then(|b| std::str::from_utf8(b).ok())
    }
}

/// Shared, immutable side-channel link.
#[derive(Debug, Clone)]
pub struct SideChannel {
    code: LdpcCode,
    max_iters: usize,
}

impl SideChannel {
    pub fn new(code: LdpcCode, max_iters: usize) -> Self {
        SideChannel { code, max_iters }
    }

    pub fn from_config(cfg: &SideChannelConfig) -> Result<Self> {
        Ok(Self::new(LdpcCode::regular(cfg.code_length, cfg.code_seed)?, cfg.max_iters))
    }

    pub fn code(&self) -> &LdpcCode {
        &self.code
    }

    /// Channel uses a payload of `len` bytes would consume, before compression.
    pub fn blocks_for_frame(&self, frame_bytes: usize) -> usize {
        (8 * frame_bytes).div_ceil(self.code.k()).max(1)
    }

    pub fn send_prompt<R: Rng + ?Sized>(
        &self,
        text: &str,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<SideChannelReport> {
        self.send_bytes(text.as_bytes(), snr_db, rng)
    }

    /// Compresses, frames, encodes and transmits `data`, then runs the
    /// receiver. Only oversize input is an error; channel failures are
    /// reported in-band.
    pub fn send_bytes<R: Rng + ?Sized>(
        &self,
        data: &[u8],
        snr_db: f64,
        rng: &mut R,
    ) -> Result<SideChannelReport> {
        let frame = PromptFrame::new(ac_encode(data)?)?.to_bytes();
        let k = self.code.k();
        let blocks = self.blocks_for_frame(frame.len());
        let mut info = bytes_to_bits(&frame);
        info.resize(blocks * k, 0);

        let mut received = Vec::with_capacity(info.len());
        let mut bp_iterations = 0;
        let mut all_converged = true;
        for chunk in info.chunks(k) {
            let cw = self.code.encode(chunk)?;
            let llrs = bpsk_awgn_llrs(&cw, snr_db, rng);
            let out = self.code.decode(&llrs, self.max_iters)?;
            bp_iterations += out.iterations;
            all_converged &= out.converged;
            received.extend(self.code.extract_info(&out.bits));
        }
        let coded_bits = blocks * self.code.n();
        let decoded = PromptFrame::from_bytes(&bits_to_bytes(&received))
            .ok()
            .and_then(|f| ac_decode(&f.payload).ok());
        Ok(SideChannelReport {
            k_o: coded_bits.div_ceil(2),
            coded_bits,
            blocks,
            decoded,
            bp_iterations,
            all_converged,
        })
    }
}

/// MSB-first bit expansion.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Inverse of [`bytes_to_bits`]; a trailing partial byte is dropped.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect()
}

/// Transmits code bits (0 ↦ +1/√2, 1 ↦ −1/√2 per quadrature) over AWGN with
/// total per-symbol noise variance 10^(−snr/10) and returns the channel LLRs.
pub fn bpsk_awgn_llrs<R: Rng + ?Sized>(bits: &[u8], snr_db: f64, rng: &mut R) -> Vec<f64> {
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let var = snr_to_sigma2(snr_db) / 2.0;
    let std = var.sqrt();
    bits.iter()
        .map(|&b| {
            let x = if b == 0 { amp } else { -amp };
            let y = x + std * standard_normal(rng);
            2.0 * amp * y / var
        })
        .collect()
}

/// SNR per complex symbol giving `ebn0_db` at code rate `rate`.
pub fn ebn0_to_snr_db(ebn0_db: f64, rate: f64) -> f64 {
    ebn0_db + 10.0 * (2.0 * rate).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub frames: usize,
    pub frame_errors: usize,
    pub info_bits: usize,
    pub bit_errors: usize,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.info_bits as f64
    }

    pub fn fer(&self) -> f64 {
        self.frame_errors as f64 / self.frames as f64
    }
}

/// Monte Carlo BER of `code` with random information words. Frame `i` draws
/// from stream `i` of `seed`, so the result does not depend on thread count.
pub fn measure_ber(
    code: &LdpcCode,
    ebn0_db: f64,
    min_info_bits: usize,
    max_iters: usize,
    seed: u64,
) -> Result<BerPoint> {
    let k = code.k();
    let frames = min_info_bits.div_ceil(k).max(1);
    let snr_db = ebn0_to_snr_db(ebn0_db, code.rate());
    let axis = ebn0_db.to_bits() as u32 ^ (ebn0_db.to_bits() >> 32) as u32;
    let errors: Vec<usize> = (0..frames)
        .into_par_iter()
        .map(|f| -> Result<usize> {
            let mut rng = trial_stream(seed, axis, f as u32);
            let info: Vec<u8> = (0..k).map(|_| rng.random_range(0..2u8)).collect();
            let cw = code.encode(&info)?;
            let llrs = bpsk_awgn_llrs(&cw, snr_db, &mut rng);
            let out = code.decode(&llrs, max_iters)?;
            let got = code.extract_info(&out.bits);
            Ok(got.iter().zip(&info).filter(|(a, b)| a != b).count())
        })
        .collect::<Result<_>>()?;
    Ok(BerPoint {
        ebn0_db,
        frames,
        frame_errors: errors.iter().filter(|&&e| e > 0).count(),
        info_bits: frames * k,
        bit_errors: errors.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn link() -> SideChannel {
        SideChannel::from_config(&SideChannelConfig::default()).unwrap()
    }

    #[test]
    fn bit_packing() {
        let b = bytes_to_bits(&[0b1010_0001, 0xff]);
        assert_eq!(&b[..8], &[1, 0, 1, 0, 0, 0, 0, 1]);
        assert_eq!(bits_to_bytes(&b), vec![0b1010_0001, 0xff]);
    }

    #[test]
    fn snr_for_rate_half_equals_ebn0() {
        assert_eq!(ebn0_to_snr_db(3.0, 0.5), 3.0);
        assert!((ebn0_to_snr_db(3.0, 0.25) - (3.0 - 3.0103)).abs() < 1e-4);
    }

    #[test]
    fn noiseless_delivery_and_accounting() {
        let l = link();
        let r = l.send_prompt("class:4", f64::INFINITY, &mut seeded(1)).unwrap();
        assert_eq!(r.decoded_text(), Some("class:4"));
        assert_eq!(r.blocks, 1);
        assert_eq!(r.coded_bits, 256);
        assert_eq!(r.k_o, 128);
        assert_eq!(r.bp_iterations, 1);
        assert!(r.all_converged);
    }

    #[test]
    fn noiseless_llr_magnitude() {
        let llrs = bpsk_awgn_llrs(&[0, 1], f64::INFINITY, &mut seeded(0));
        assert_eq!(llrs, vec![f64::INFINITY, f64::NEG_INFINITY]);
        // 10 dB: per-dimension variance 0.05, noiseless mean 2·(1/√2)²/0.05 = 20
        let mut rng = seeded(3);
        let many = bpsk_awgn_llrs(&vec![0; 20000], 10.0, &mut rng);
        let mean = many.iter().sum::<f64>() / many.len() as f64;
        assert!((mean - 20.0).abs() < 0.2, "{mean}");
    }

    #[test]
    fn hopeless_channel_fails_in_band() {
        let r = link().send_prompt("a longer prompt text", -10.0, &mut seeded(2)).unwrap();
        assert!(!r.ok());
        assert!(r.k_o > 0);
    }

    #[test]
    fn ber_is_thread_independent_and_small_at_high_snr() {
        let code = LdpcCode::regular(256, 5).unwrap();
        let a = measure_ber(&code, 4.0, 20_000, 50, 9).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| measure_ber(&code, 4.0, 20_000, 50, 9).unwrap());
        assert_eq!(a, b);
        assert!(a.ber() < 1e-2);
    }
}
