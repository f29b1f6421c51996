//! Binary model checkpoints and training-history CSV export.
//!
//! Checkpoint layout, all little-endian:
//!   magic "ALCK", u32 format version;
//!   architecture header: u32 context, u32 hidden-layer count, u32 widths,
//!     u32 n_mels, u32 vocab_size, the full feature config (u32/f64
//!     fields), per-mel-bin normalizer mean/std (f64 pairs), u64 init seed;
//!   parameter vector: u64 count, then f64 values;
//!   vocabulary: u32 char count, u32 byte length, UTF-8 bytes;
//!   u64 feature-config hash (integrity check against the embedded config).

use std::fs;
use std::io::Read;
use std::path::Path;

use super::{AcousticModel, Architecture, ModelError, TrainHistory};
use crate::ctc::Vocab;
use crate::features::{FeatureConfig, FeatureNormalizer};

const MAGIC: &[u8; 4] = b"ALCK";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err("truncated checkpoint".into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(model: &AcousticModel, path: &Path) -> Result<(), ModelError> {
    let io = |source| ModelError::Io { path: path.to_path_buf(), source };
    let mut w = Writer { buf: Vec::with_capacity(64 + model.params.len() * 8) };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);

    w.u32(model.arch.context as u32);
    w.u32(model.arch.hidden.len() as u32);
    for &h in &model.arch.hidden {
        w.u32(h as u32);
    }
    w.u32(model.arch.n_mels as u32);
    w.u32(model.arch.vocab_size as u32);

    let fc = &model.feature_config;
    w.u32(fc.n_mels as u32);
    w.f64(fc.frame_length_ms);
    w.f64(fc.frame_shift_ms);
    w.u32(fc.fft_size as u32);
    w.f64(fc.fmin_hz);
    w.f64(fc.fmax_hz);
    w.f64(fc.log_floor);
    w.f64(fc.preemphasis);

    for i in 0..model.arch.n_mels {
        w.f64(model.normalizer.mean[i]);
        w.f64(model.normalizer.std[i]);
    }
    w.u64(model.init_seed);

    w.u64(model.params.len() as u64);
    for &p in &model.params {
        w.f64(p);
    }

    let vocab_string: String = (1..model.vocab.size())
        .map(|t| model.vocab.char_of(t).expect("dense vocab"))
        .collect();
    w.u32((model.vocab.size() - 1) as u32);
    w.u32(vocab_string.len() as u32);
    w.buf.extend_from_slice(vocab_string.as_bytes());

    w.u64(fc.hash());

    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, w.buf).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<AcousticModel, ModelError> {
    let io = |source| ModelError::Io { path: path.to_path_buf(), source };
    let bad = |detail: String| ModelError::BadCheckpoint { path: path.to_path_buf(), detail };
    let mut bytes = Vec::new();
    fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(bad("missing magic".into()));
    }
    let mut r = Reader { bytes: &bytes, pos: 4 };
    (|| -> Result<AcousticModel, String> {
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let context = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        if n_hidden > 64 {
            return Err(format!("implausible hidden layer count {n_hidden}"));
        }
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(r.u32()? as usize);
        }
        let n_mels = r.u32()? as usize;
        let vocab_size = r.u32()? as usize;
        let arch = Architecture { context, hidden, n_mels, vocab_size };

        let feature_config = FeatureConfig {
            n_mels: r.u32()? as usize,
            frame_length_ms: r.f64()?,
            frame_shift_ms: r.f64()?,
            fft_size: r.u32()? as usize,
            fmin_hz: r.f64()?,
            fmax_hz: r.f64()?,
            log_floor: r.f64()?,
            preemphasis: r.f64()?,
        };

        let mut mean = Vec::with_capacity(n_mels);
        let mut std = Vec::with_capacity(n_mels);
        for _ in 0..n_mels {
            mean.push(r.f64()?);
            std.push(r.f64()?);
        }
        let init_seed = r.u64()?;

        let count = r.u64()? as usize;
        if count != arch.param_count() {
            return Err(format!(
                "parameter count {count} does not match architecture ({})",
                arch.param_count()
            ));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(r.f64()?);
        }

        let n_chars = r.u32()? as usize;
        let byte_len = r.u32()? as usize;
        let vocab_bytes = r.take(byte_len)?;
        let vocab_string =
            std::str::from_utf8(vocab_bytes).map_err(|e| format!("vocab not UTF-8: {e}"))?;
        let chars: Vec<char> = vocab_string.chars().collect();
        if chars.len() != n_chars {
            return Err(format!("vocab char count mismatch ({} vs {n_chars})", chars.len()));
        }
        let vocab = Vocab::new(chars);
        if vocab.size() != vocab_size {
            return Err(format!("vocab size {} vs architecture {vocab_size}", vocab.size()));
        }

        let hash = r.u64()?;
        if hash != feature_config.hash() {
            return Err("feature config hash mismatch".into());
        }

        Ok(AcousticModel {
            arch,
            feature_config,
            vocab,
            normalizer: FeatureNormalizer { mean, std },
            params,
            init_seed,
        })
    })()
    .map_err(bad)
}

/// Training history as `step,loss,dev_wer` CSV.
pub fn write_history_csv(history: &TrainHistory, path: &Path) -> Result<(), ModelError> {
    let io = |source| ModelError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut out = String::from("step,loss,dev_wer\n");
    for e in &history.evals {
        out.push_str(&format!("{},{:.6},{:.6}\n", e.step, e.train_loss, e.dev_wer));
    }
    fs::write(path, out).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Alphabet;
    use crate::model::init_model;

    #[test]
    fn checkpoint_round_trip() {
        let vocab = Vocab::from_alphabet(&Alphabet::from_str_chars("abd"));
        let cfg = FeatureConfig { n_mels: 8, ..Default::default() };
        let arch = Architecture { context: 2, hidden: vec![16, 12], n_mels: 8, vocab_size: vocab.size() };
        let mut model = init_model(arch, cfg, vocab, 42).unwrap();
        model.normalizer.mean[3] = 1.25;
        model.normalizer.std[5] = 0.5;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"ALCKgarbage").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::BadCheckpoint { .. })));
    }

    #[test]
    fn history_csv_shape() {
        let history = TrainHistory {
            evals: vec![
                super::super::train::EvalPoint { step: 25, train_loss: 1.5, dev_wer: 0.9 },
                super::super::train::EvalPoint { step: 50, train_loss: 1.0, dev_wer: 0.7 },
            ],
            best_step: 50,
            best_dev_wer: 0.7,
            trained_utterances: 10,
            dropped_infeasible: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_history_csv(&history, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,loss,dev_wer\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
