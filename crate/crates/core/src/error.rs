use thiserror::Error;

use crate::linecode::LineScheme;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere along the transmit/receive chains and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit value {0} is not 0 or 1")]
    InvalidBit(u8),
    #[error("payload is empty")]
    EmptyPayload,
    #[error("payload of {len} bits exceeds the limit of {max} bits")]
    PayloadTooLong { len: usize, max: usize },
    #[error("frame of {len} bits is too short for a {crc_bits}-bit CRC")]
    FrameTooShort { len: usize, crc_bits: usize },
    #[error("CRC check failed")]
    CrcFailure,
    #[error("input is empty")]
    EmptyInput,
    #[error("line scheme {0:?} is not supported by this operation")]
    UnsupportedScheme(LineScheme),
    #[error("chip count {0} is not valid for the line scheme")]
    OddChipCount(usize),
    #[error("input of {len} bits is shorter than the encoder memory of {memory} bits")]
    InputTooShort { len: usize, memory: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("repetition factor must be at least 1")]
    ZeroFactor,
    #[error("{len} values cannot be split into groups of {factor}")]
    LengthNotDivisible { len: usize, factor: usize },
    #[error("{chips} chips cannot be packed {per_symbol} per OFDM symbol")]
    ChipCountNotDivisibleByM { chips: usize, per_symbol: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("signal spans {signal_s} s but the channel realization covers only {channel_s} s")]
    DurationMismatch { signal_s: f64, channel_s: f64 },
    #[error("antenna count mismatch: expected {expected}, got {got}")]
    AntennaMismatch { expected: usize, got: usize },
    #[error("no R-TAS found in the received envelope")]
    RtasNotFound,
    #[error("no D-TAS found in the received signal")]
    DtasNotFound,
    #[error("signal too short: {needed} samples needed, {available} available")]
    SignalTooShort { needed: usize, available: usize },
    #[error("data rate needs at least one OFDM symbol")]
    ZeroSymbols,
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("D-TAS length {0} is not supported")]
    LengthTooShort(usize),
    #[error("invalid small-shift factor R = {0}")]
    InvalidR(u32),
    #[error("small-shift option does not match line scheme {0:?}")]
    SchemeMismatch(LineScheme),
    #[error("sample rate {sample_rate_hz} Hz cannot carry {chip_rate_cps} chips/s")]
    UnsupportedRate {
        sample_rate_hz: f64,
        chip_rate_cps: f64,
    },
    #[error("device is not addressed by the paging message")]
    NotAddressed,
    #[error("operation not valid in device state {0:?}")]
    InvalidState(crate::random_access::RaState),
    #[error("config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether this error is a per-block reception failure (counted by the
    /// BLER harness) rather than a configuration or programming error.
    pub fn is_block_error(&self) -> bool {
        matches!(
            self,
            Error::CrcFailure
                | Error::MalformedFrame(_)
                | Error::RtasNotFound
                | Error::DtasNotFound
                | Error::SignalTooShort { .. }
                | Error::OddChipCount(_)
                | Error::LengthMismatch { .. }
        )
    }
}
