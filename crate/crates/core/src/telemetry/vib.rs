//! Binary sidecar files for vibration waveforms.
//!
//! A day's accelerometer frame is thousands of samples; inlining them in the
//! event log would swamp it, so each frame lives in its own little-endian
//! binary file and the log carries a `vibration_frame_ref` record naming it.
//!
//! Layout: the 4-byte magic `VIB1`, a `u32` sample count, then that many
//! `i16` samples. Everything little-endian. The decoder rejects trailing
//! bytes, so a file is valid iff it round-trips.

use super::TelemetryError;

/// Magic bytes opening every vibration sidecar file.
pub const VIB_MAGIC: [u8; 4] = *b"VIB1";

/// Serialize one frame.
pub fn encode_vib(samples: &[i16]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + samples.len() * 2);
    out.extend_from_slice(&VIB_MAGIC);
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Parse one frame, rejecting bad magic, short reads, and trailing bytes.
pub fn decode_vib(bytes: &[u8]) -> Result<Vec<i16>, TelemetryError> {
    let fail = |reason: &str| TelemetryError::Sidecar {
        reason: reason.to_string(),
    };
    if bytes.len() < 8 {
        return Err(fail("file shorter than the 8-byte header"));
    }
    if bytes[..4] != VIB_MAGIC {
        return Err(fail("bad magic (expected VIB1)"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != count * 2 {
        return Err(fail(&format!(
            "sample count {} implies {} body bytes, file has {}",
            count,
            count * 2,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect())
}
