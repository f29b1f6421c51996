//! Waveforms, WAV file I/O, and audio lookup for corpus utterances.
//!
//! On-disk audio is WAV, mono, 16-bit PCM. The reader accepts only that
//! layout and skips unrelated RIFF chunks; the writer always produces it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::Utterance;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a RIFF/WAVE file")]
    NotWav { path: PathBuf },
    #[error("{path}: unsupported WAV layout (need mono 16-bit PCM, got {detail})")]
    UnsupportedLayout { path: PathBuf, detail: String },
    #[error("{path}: truncated or malformed chunk structure")]
    Malformed { path: PathBuf },
    #[error("no audio registered for utterance {id:?}")]
    UnknownUtterance { id: String },
}

/// Mono audio at a fixed sample rate, samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| s as f64 * s as f64).sum();
        sum / self.samples.len() as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0_f32, |acc, &s| acc.max(s.abs()))
    }

    pub fn clamp_in_place(&mut self) {
        for s in &mut self.samples {
            *s = s.clamp(-1.0, 1.0);
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AudioError + '_ {
    move |source| AudioError::Io { path: path.to_path_buf(), source }
}

/// Write a waveform as mono 16-bit PCM WAV.
///
/// Samples are clamped to `[-1, 1]` and quantized with round-half-away,
/// so the emitted bytes are a pure function of the input.
pub fn write_wav(path: &Path, wav: &Waveform) -> Result<(), AudioError> {
    let n = wav.samples.len();
    let data_len = (n * 2) as u32;
    let mut buf: Vec<u8> = Vec::with_capacity(44 + n * 2);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&wav.sample_rate.to_le_bytes());
    buf.extend_from_slice(&(wav.sample_rate * 2).to_le_bytes()); // byte rate
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for &s in &wav.samples {
        let q = (s.clamp(-1.0, 1.0) as f64 * 32767.0).round() as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

/// Read a mono 16-bit PCM WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform, AudioError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    parse_wav(&bytes, path)
}

fn parse_wav(bytes: &[u8], path: &Path) -> Result<Waveform, AudioError> {
    let malformed = || AudioError::Malformed { path: path.to_path_buf() };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::NotWav { path: path.to_path_buf() });
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(len).ok_or_else(malformed)?;
        if body_end > bytes.len() {
            return Err(malformed());
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(malformed());
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_end + (len & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(malformed)?;
    if format != 1 || channels != 1 || bits != 16 {
        return Err(AudioError::UnsupportedLayout {
            path: path.to_path_buf(),
            detail: format!("format={format} channels={channels} bits={bits}"),
        });
    }
    let data = data.ok_or_else(malformed)?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
        .collect();
    Ok(Waveform { samples, sample_rate: rate })
}

/// Resolves an utterance to its waveform.
///
/// Training, transcription, and feature extraction all go through this,
/// so corpora can be backed by WAV files on disk or generated in memory.
pub trait AudioSource: Sync {
    fn load(&self, utt: &Utterance) -> Result<Waveform, AudioError>;
}

/// Audio stored as WAV files; `Utterance::audio` paths resolve against `root`.
pub struct WavDirSource {
    root: PathBuf,
}

impl WavDirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn resolve(&self, utt: &Utterance) -> PathBuf {
        let p = Path::new(&utt.audio);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

impl AudioSource for WavDirSource {
    fn load(&self, utt: &Utterance) -> Result<Waveform, AudioError> {
        read_wav(&self.resolve(utt))
    }
}

/// In-memory audio keyed by utterance id.
#[derive(Debug, Default, Clone)]
pub struct MemorySource {
    map: BTreeMap<String, Waveform>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, wav: Waveform) {
        self.map.insert(id.into(), wav);
    }

    pub fn merge(&mut self, other: MemorySource) {
        self.map.extend(other.map);
    }
}

impl AudioSource for MemorySource {
    fn load(&self, utt: &Utterance) -> Result<Waveform, AudioError> {
        self.map
            .get(&utt.id)
            .cloned()
            .ok_or_else(|| AudioError::UnknownUtterance { id: utt.id.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Origin;

    #[test]
    fn wav_round_trip_is_exact_for_quantized_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        // values representable exactly at 16 bits
        let samples: Vec<f32> = (-4i16..4).map(|q| q as f32 * 1024.0 / 32768.0).collect();
        let wav = Waveform::new(samples.clone(), 16_000);
        write_wav(&path, &wav).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.samples.len(), samples.len());
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32768.0 + 1e-9);
        }
    }

    #[test]
    fn reader_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"not a wav at all").unwrap();
        assert!(matches!(read_wav(&path), Err(AudioError::NotWav { .. })));
    }

    #[test]
    fn memory_source_reports_unknown_ids() {
        let src = MemorySource::new();
        let utt = Utterance {
            id: "u1".into(),
            speaker: "s".into(),
            duration_s: 1.0,
            text: "a".into(),
            audio: "u1.wav".into(),
            origin: Origin::Manual,
        };
        assert!(matches!(src.load(&utt), Err(AudioError::UnknownUtterance { .. })));
    }
}
