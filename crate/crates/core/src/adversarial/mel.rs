use std::io::{Read, Write};

use super::{AdversarialError, Result};

/// File signature of the binary mel format.
///
/// Layout: `"MELF"`, `u32` LE bins `F`, `u32` LE frames `T`, then `F * T`
/// `f32` LE values, feature-major (all frames of bin 0 first).
pub const MELF_MAGIC: &[u8; 4] = b"MELF";

/// An `F x T` mel spectrogram, row-major by mel bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Mel {
    bins: usize,
    frames: usize,
    data: Vec<f64>,
}

impl Mel {
    pub fn new(bins: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if bins == 0 || frames == 0 {
            return Err(AdversarialError::MalformedMel(format!("empty shape {bins}x{frames}")));
        }
        if data.len() != bins * frames {
            return Err(AdversarialError::ShapeMismatch {
                what: "mel data".into(),
                expected: vec![bins * frames],
                actual: vec![data.len()],
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AdversarialError::NonFinite("mel".into()));
        }
        Ok(Self { bins, frames, data })
    }

    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self { bins, frames, data: vec![0.0; bins * frames] }
    }

    pub fn from_fn(bins: usize, frames: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..bins).flat_map(|b| (0..frames).map(move |t| (b, t))).map(|(b, t)| f(b, t)).collect();
        Self { bins, frames, data }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.frames + frame]
    }

    pub fn read_melf<R: Read>(mut reader: R) -> Result<Self> {
        let mut bytes = Vec::new();
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| AdversarialError::MalformedMel(e.to_string()))?;
        Self::decode_melf(&bytes)
    }

    pub fn decode_melf(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| AdversarialError::MalformedMel(m);
        if bytes.len() < 12 {
            return Err(bad(format!("{} bytes is shorter than the 12-byte header", bytes.len())));
        }
        if &bytes[..4] != MELF_MAGIC {
            return Err(bad("missing MELF signature".into()));
        }
        let bins = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = bins
            .checked_mul(frames)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| bad(format!("shape {bins}x{frames} overflows")))?;
        let payload = &bytes[12..];
        if payload.len() != expected {
            return Err(bad(format!(
                "shape {bins}x{frames} needs {expected} payload bytes, found {}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(bins, frames, data)
    }

    /// Values are narrowed to `f32`.
    pub fn encode_melf(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(MELF_MAGIC);
        out.extend_from_slice(&(self.bins as u32).to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        for &x in &self.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out
    }

    pub fn write_melf<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.encode_melf())
    }
}

/// A contiguous `F x window` excerpt of a mel.
#[derive(Debug, Clone, PartialEq)]
pub struct MelClip {
    pub bins: usize,
    pub window: usize,
    pub start: usize,
    /// `bins x window`, row-major.
    pub data: Vec<f64>,
}

impl MelClip {
    pub fn get(&self, bin: usize, j: usize) -> f64 {
        self.data[bin * self.window + j]
    }
}

/// Copies frames `start..start + window`. The offset is supplied by the
/// caller, who owns the randomness.
pub fn random_clip(mel: &Mel, window: usize, start: usize) -> Result<MelClip> {
    if window == 0 {
        return Err(AdversarialError::InvalidConfig("window must be positive".into()));
    }
    if window > mel.frames {
        return Err(AdversarialError::WindowTooLong { window, frames: mel.frames });
    }
    if start > mel.frames - window {
        return Err(AdversarialError::StartOutOfRange { start, window, frames: mel.frames });
    }
    let mut data = Vec::with_capacity(mel.bins * window);
    for b in 0..mel.bins {
        let row = &mel.data[b * mel.frames..(b + 1) * mel.frames];
        data.extend_from_slice(&row[start..start + window]);
    }
    Ok(MelClip { bins: mel.bins, window, start, data })
}
