use serde::{Deserialize, Serialize};

/// How the receiver learns where a transmission ends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameEnding {
    /// A fixed chip pattern follows the data.
    #[default]
    Postamble,
    /// The TBS travels in a 10-bit field ahead of the transport block.
    TbsInControl,
}

/// Chip pattern closing a frame when [`FrameEnding::Postamble`] is used.
pub const POSTAMBLE: [u8; 4] = [0, 0, 1, 1];
