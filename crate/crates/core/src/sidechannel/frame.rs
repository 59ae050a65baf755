//! Length-prefixed frame with a CRC-32 trailer.
//!
//! Layout: `length: u16 BE ‖ payload ‖ crc: u32 BE`, where the CRC (IEEE,
//! reflected polynomial 0xEDB88320) covers `length ‖ payload`.

use crate::error::{Error, Result};

/// Header plus trailer size in bytes.
pub const FRAME_OVERHEAD: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptFrame {
    pub length: u16,
    pub payload: Vec<u8>,
    pub crc: u32,
}

fn checksum(length: u16, payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&length.to_be_bytes());
    h.update(payload);
    h.finalize()
}

impl PromptFrame {
    pub fn new(payload: Vec<u8>) -> Result<Self> {
        let length = u16::try_from(payload.len()).map_err(|_| {
            Error::Frame(format!("payload of {} bytes does not fit a frame", payload.len()))
        })?;
        let crc = checksum(length, &payload);
        Ok(PromptFrame { length, payload, crc })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + FRAME_OVERHEAD);
        out.extend_from_slice(&self.length.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.crc.to_be_bytes());
        out
    }

    /// Parses a frame from the start of `bytes`; trailing padding is ignored.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_OVERHEAD {
            return Err(Error::Frame("frame shorter than its header".into()));
        }
        let length = u16::from_be_bytes([bytes[0], bytes[1]]);
        let end = 2 + length as usize;
        if bytes.len() < end + 4 {
            return Err(Error::Frame(format!(
                "frame claims {length} payload bytes but only {} are available",
                bytes.len().saturating_sub(FRAME_OVERHEAD)
            )));
        }
        let payload = bytes[2..end].to_vec();
        let crc = u32::from_be_bytes(bytes[end..end + 4].try_into().expect("4 bytes"));
        if crc != checksum(length, &payload) {
            return Err(Error::Frame("CRC mismatch".into()));
        }
        Ok(PromptFrame { length, payload, crc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_known_value() {
        // CRC-32 check value of "123456789"
        let mut h = crc32fast::Hasher::new();
        h.update(b"123456789");
        assert_eq!(h.finalize(), 0xCBF4_3926);
    }

    #[test]
    fn roundtrip_with_padding() {
        let f = PromptFrame::new(b"payload".to_vec()).unwrap();
        let mut bytes = f.to_bytes();
        assert_eq!(&bytes[..2], &[0, 7]);
        bytes.extend_from_slice(&[0; 5]);
        assert_eq!(PromptFrame::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn corruption_detected() {
        let bytes = PromptFrame::new(b"class:2".to_vec()).unwrap().to_bytes();
        for i in 0..bytes.len() {
            for bit in 0..8 {
                let mut b = bytes.clone();
                b[i] ^= 1 << bit;
                assert!(PromptFrame::from_bytes(&b).is_err(), "byte {i} bit {bit}");
            }
        }
        assert!(PromptFrame::from_bytes(&bytes[..5]).is_err());
    }

    #[test]
    fn oversize_payload() {
        assert!(matches!(PromptFrame::new(vec![0; 70_000]), Err(Error::Frame(_))));
    }
}
