//! Minimal audio input for the feature pipeline.
//!
//! Two uncompressed input forms are supported, both assumed pre-resampled
//! to 22,050 Hz: 16-bit mono PCM WAV (`.wav`) and raw little-endian `f64`
//! samples (`.f64`). Compressed formats are out of scope.

use std::path::Path;

use thiserror::Error;

use fsim_core::features::AudioClip;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Unsupported { path: String, reason: String },
}

fn unsupported(path: &Path, reason: impl Into<String>) -> AudioError {
    AudioError::Unsupported { path: path.display().to_string(), reason: reason.into() }
}

/// Load a clip from `.wav` (PCM16 mono) or `.f64` (raw little-endian
/// doubles at the expected rate).
pub fn read_audio_file(path: &Path, expected_rate: usize) -> Result<AudioClip, AudioError> {
    let bytes = std::fs::read(path)
        .map_err(|source| AudioError::Io { path: path.display().to_string(), source })?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("wav") => read_wav(path, &bytes, expected_rate),
        Some("f64") => read_raw_f64(path, &bytes, expected_rate),
        other => Err(unsupported(path, format!("unsupported extension {other:?}"))),
    }
}

fn read_raw_f64(path: &Path, bytes: &[u8], expected_rate: usize) -> Result<AudioClip, AudioError> {
    if bytes.is_empty() || bytes.len() % 8 != 0 {
        return Err(unsupported(path, "raw f64 file length must be a nonzero multiple of 8"));
    }
    let samples: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(unsupported(path, "non-finite sample"));
    }
    Ok(AudioClip { samples, sample_rate: expected_rate })
}

fn u16_at(bytes: &[u8], at: usize) -> Option<u16> {
    bytes.get(at..at + 2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
}

fn u32_at(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

fn read_wav(path: &Path, bytes: &[u8], expected_rate: usize) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(unsupported(path, "not a RIFF/WAVE file"));
    }
    let mut offset = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None; // codec, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while offset + 8 <= bytes.len() {
        let id = &bytes[offset..offset + 4];
        let size = u32_at(bytes, offset + 4).unwrap() as usize;
        let body_start = offset + 8;
        let body_end = body_start.checked_add(size).filter(|&e| e <= bytes.len());
        let Some(body_end) = body_end else {
            return Err(unsupported(path, "truncated chunk"));
        };
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(unsupported(path, "fmt chunk too small"));
                }
                format = Some((
                    u16_at(bytes, body_start).unwrap(),
                    u16_at(bytes, body_start + 2).unwrap(),
                    u32_at(bytes, body_start + 4).unwrap(),
                    u16_at(bytes, body_start + 14).unwrap(),
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // chunks are word-aligned
        offset = body_end + (size % 2);
    }
    let (codec, channels, rate, bits) =
        format.ok_or_else(|| unsupported(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| unsupported(path, "missing data chunk"))?;
    if codec != 1 || bits != 16 {
        return Err(unsupported(path, format!("need PCM16, found codec {codec} at {bits} bits")));
    }
    if channels != 1 {
        return Err(unsupported(path, format!("need mono, found {channels} channels")));
    }
    if rate as usize != expected_rate {
        return Err(unsupported(
            path,
            format!("sample rate {rate} != expected {expected_rate}; inputs must be pre-resampled"),
        ));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64 / 32768.0)
        .collect();
    if samples.is_empty() {
        return Err(unsupported(path, "empty data chunk"));
    }
    Ok(AudioClip { samples, sample_rate: expected_rate })
}

/// Encode samples as PCM16 mono WAV (test fixtures and round trips).
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: usize) -> std::io::Result<()> {
    let data_len = samples.len() * 2;
    let mut bytes = Vec::with_capacity(44 + data_len);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&(sample_rate as u32).to_le_bytes());
    bytes.extend_from_slice(&((sample_rate * 2) as u32).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_preserves_shape_and_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let samples: Vec<f64> = (0..4410)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 22050.0).sin() * 0.5)
            .collect();
        write_wav(&path, &samples, 22_050).unwrap();
        let clip = read_audio_file(&path, 22_050).unwrap();
        assert_eq!(clip.samples.len(), samples.len());
        assert_eq!(clip.sample_rate, 22_050);
        for (a, b) in clip.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn raw_f64_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.f64");
        let samples = vec![0.25, -0.5, 0.125];
        let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        std::fs::write(&path, bytes).unwrap();
        let clip = read_audio_file(&path, 22_050).unwrap();
        assert_eq!(clip.samples, samples);
    }

    #[test]
    fn wrong_rate_wav_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        write_wav(&path, &[0.0; 100], 44_100).unwrap();
        assert!(matches!(
            read_audio_file(&path, 22_050).unwrap_err(),
            AudioError::Unsupported { .. }
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noise.wav");
        std::fs::write(&path, b"definitely not audio").unwrap();
        assert!(read_audio_file(&path, 22_050).is_err());
    }
}
