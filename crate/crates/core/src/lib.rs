//! Link-level simulation of the Ambient-IoT physical layer.

pub mod bits;
pub mod channel;
pub mod crc;
pub mod d2r;
pub mod error;
pub mod fec;
pub mod frame;
pub mod linecode;
pub mod r2d;
pub mod random_access;
pub mod signal;
pub mod sim;
mod sync;

pub use bits::BitVec;
pub use error::{Error, Result};
