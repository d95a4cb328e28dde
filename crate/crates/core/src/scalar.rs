//! Scalar abstraction for model parameters.
//!
//! All parameter math (embedding updates, DeepFM forward/backward, packet
//! payloads) is generic over [`Scalar`] so the same code runs at `f32`
//! (the serving width, and the width of every on-disk and wire format at
//! the crate-root aliases) or at `f64` (used by the gradient-check oracles,
//! where finite differences need the extra precision).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar for parameters: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Copy + Send + Sync + Debug + Display + 'static
{
    /// Width of one value in the binary record and wire encodings.
    const WIRE_SIZE: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes one value from exactly `WIRE_SIZE` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    const WIRE_SIZE: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte scalar"))
    }
}

impl Scalar for f64 {
    const WIRE_SIZE: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte scalar"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_round_trip() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        assert_eq!(buf.len(), f32::WIRE_SIZE);
        assert_eq!(f32::read_le(&buf), 1.5);

        let mut buf = Vec::new();
        (-0.25f64).write_le(&mut buf);
        assert_eq!(buf.len(), f64::WIRE_SIZE);
        assert_eq!(f64::read_le(&buf), -0.25);
    }
}
