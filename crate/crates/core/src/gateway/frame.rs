use serde::{Deserialize, Serialize};

use super::crc::Crc8;
use crate::error::FrameError;

pub const MAX_PAYLOAD: usize = 64;
/// Header (id hi, id lo, counter, len) plus trailing CRC byte.
pub const FRAME_OVERHEAD: usize = 5;

pub const DATA_ID_CONTROL_PRIMARY: u16 = 0x0100;
pub const DATA_ID_CONTROL_SECONDARY: u16 = 0x0101;
pub const DATA_ID_VEHICLE_STATE: u16 = 0x0200;
pub const DATA_ID_MODE_REQUEST: u16 = 0x0300;
pub const DATA_ID_EMERGENCY_STOP: u16 = 0x03FF;

/// End-to-end protected frame.
///
/// Wire layout: `[data_id_hi][data_id_lo][counter][len][payload..][crc]`,
/// where the CRC covers `data_id ‖ counter ‖ payload`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct E2EFrame {
    pub data_id: u16,
    pub counter: u8,
    pub payload: Vec<u8>,
    pub crc: u8,
}

pub fn frame_crc(data_id: u16, counter: u8, payload: &[u8]) -> u8 {
    Crc8::default()
        .update(&data_id.to_be_bytes())
        .update(&[counter])
        .update(payload)
        .finish()
}

pub fn encode_frame(data_id: u16, counter: u8, payload: &[u8]) -> Result<E2EFrame, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLong(payload.len()));
    }
    Ok(E2EFrame {
        data_id,
        counter,
        payload: payload.to_vec(),
        crc: frame_crc(data_id, counter, payload),
    })
}

impl E2EFrame {
    pub fn crc_ok(&self) -> bool {
        self.crc == frame_crc(self.data_id, self.counter, &self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + FRAME_OVERHEAD);
        out.extend_from_slice(&self.data_id.to_be_bytes());
        out.push(self.counter);
        out.push(self.payload.len() as u8);
        out.extend_from_slice(&self.payload);
        out.push(self.crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < FRAME_OVERHEAD {
            return Err(FrameError::Truncated(bytes.len()));
        }
        let declared = bytes[3] as usize;
        let actual = bytes.len() - FRAME_OVERHEAD;
        if declared != actual {
            return Err(FrameError::LengthMismatch { declared, actual });
        }
        if actual > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLong(actual));
        }
        Ok(Self {
            data_id: u16::from_be_bytes([bytes[0], bytes[1]]),
            counter: bytes[2],
            payload: bytes[4..4 + actual].to_vec(),
            crc: bytes[bytes.len() - 1],
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, FrameError> {
        let bytes = hex::decode(s).map_err(|_| FrameError::Hex)?;
        Self::from_bytes(&bytes)
    }
}
