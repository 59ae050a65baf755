//! Side channel carrying the text prompt: arithmetic coding, CRC framing and
//! LDPC-coded BPSK.

pub mod arith;
pub mod frame;
pub mod ldpc;
pub mod link;

pub use arith::{ac_decode, ac_encode};
pub use frame::PromptFrame;
pub use ldpc::{DecodeOutcome, LdpcCode};
pub use link::{
    bpsk_awgn_llrs, ebn0_to_snr_db, measure_ber, BerPoint, SideChannel, SideChannelConfig,
    SideChannelReport,
};
