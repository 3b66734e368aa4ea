//! Mel-spectrogram container and its on-disk binary format.
//!
//! Feature files are row-major 32-bit little-endian floats preceded by an
//! 8-byte header: `u32` frame count then `u32` channel count.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A time x channel matrix of acoustic features.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    n_frames: usize,
    n_channels: usize,
}

impl MelSpectrogram {
    pub fn new(data: Vec<f32>, n_frames: usize, n_channels: usize) -> Self {
        assert_eq!(data.len(), n_frames * n_channels, "mel data length mismatch");
        Self { data, n_frames, n_channels }
    }

    pub fn zeros(n_frames: usize, n_channels: usize) -> Self {
        Self::new(vec![0.0; n_frames * n_channels], n_frames, n_channels)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn get(&self, frame: usize, channel: usize) -> f32 {
        self.data[frame * self.n_channels + channel]
    }

    pub fn set(&mut self, frame: usize, channel: usize, value: f32) {
        self.data[frame * self.n_channels + channel] = value;
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_channels..(t + 1) * self.n_channels]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Read only the header of a feature file: (frames, channels).
    pub fn read_header(path: &Path) -> Result<(usize, usize)> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 8];
        f.read_exact(&mut header)
            .map_err(|_| Error::FeatureFormat { path: path.into(), msg: "truncated header".into() })?;
        let frames = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let channels = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        Ok((frames, channels))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 {
            return Err(Error::FeatureFormat { path: path.into(), msg: "truncated header".into() });
        }
        let frames = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let channels = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = 8 + frames * channels * 4;
        if bytes.len() != expected {
            return Err(Error::FeatureFormat {
                path: path.into(),
                msg: format!("expected {expected} bytes for {frames}x{channels}, found {}", bytes.len()),
            });
        }
        let mut data = Vec::with_capacity(frames * channels);
        for chunk in bytes[8..].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok(Self::new(data, frames, channels))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + self.data.len() * 4);
        buf.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_channels as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
