//! Deterministic parametric speech synthesis and toy-language corpus
//! generation.
//!
//! Each character maps to a fixed formant pattern; a voice scales those
//! formants, sets the fundamental, and fixes the speaking rate. The same
//! (text, voice) pair always yields bit-identical samples, which makes
//! synthetic corpora reproducible from their manifest alone and lets the
//! audio backend regenerate waveforms on demand instead of storing them.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, AudioSource, Waveform};
use crate::corpus::{Alphabet, Corpus, Origin, Utterance};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid voice parameters: {0}")]
    InvalidVoice(String),
    #[error("no formant mapping for character {ch:?}")]
    UnmappedChar { ch: char },
    #[error("cannot synthesize empty text")]
    EmptyText,
    #[error("invalid toy language spec: {0}")]
    InvalidSpec(String),
}

/// One synthetic speaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    /// Fundamental frequency in Hz.
    pub base_f0: f64,
    /// Multiplier applied to every character formant.
    pub formant_shift: f64,
    /// Characters per second; one character occupies `1/speaking_rate`.
    pub speaking_rate: f64,
    /// Peak amplitude in (0, 1].
    pub amplitude: f64,
}

impl Default for VoiceParams {
    fn default() -> Self {
        Self { base_f0: 165.0, formant_shift: 1.0, speaking_rate: 12.5, amplitude: 0.3 }
    }
}

impl VoiceParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(60.0..=400.0).contains(&self.base_f0) {
            return Err(SynthError::InvalidVoice(format!(
                "base_f0 {} outside [60, 400] Hz",
                self.base_f0
            )));
        }
        if !(self.speaking_rate > 0.0) {
            return Err(SynthError::InvalidVoice("speaking_rate must be positive".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(SynthError::InvalidVoice("amplitude must be in (0, 1]".into()));
        }
        if !(0.5..=2.0).contains(&self.formant_shift) {
            return Err(SynthError::InvalidVoice(format!(
                "formant_shift {} outside [0.5, 2.0]",
                self.formant_shift
            )));
        }
        Ok(())
    }
}

/// Character formant pattern (Hz). Defined for `a..=z`; spaces are silence.
fn formants(ch: char) -> Result<[f64; 3], SynthError> {
    if !ch.is_ascii_lowercase() {
        return Err(SynthError::UnmappedChar { ch });
    }
    let i = (ch as u8 - b'a') as usize;
    let f1 = 280.0 + 130.0 * (i % 6) as f64;
    let f2 = 1150.0 + 340.0 * ((i / 6) % 5) as f64;
    let f3 = 2900.0 + 170.0 * (i % 3) as f64;
    Ok([f1, f2, f3])
}

/// Component amplitudes: f0, 2*f0, and the three formants. Sums to 1.
/// Formants carry most of the energy so characters stay legible across
/// voices; the fundamental adds speaker color without drowning them.
const PARTS: [f64; 5] = [0.12, 0.08, 0.32, 0.30, 0.18];
const EDGE_RAMP_S: f64 = 0.008;
const PAD_S: f64 = 0.020;

fn segment_samples(sample_rate: u32, rate: f64) -> usize {
    (sample_rate as f64 / rate).round() as usize
}

/// Exact sample count `synthesize` will produce for this text and voice.
pub fn synthesized_len(text: &str, voice: &VoiceParams, sample_rate: u32) -> usize {
    let seg = segment_samples(sample_rate, voice.speaking_rate);
    let pad = (PAD_S * sample_rate as f64).round() as usize;
    let body: usize =
        text.chars().map(|c| if c == ' ' { seg / 2 } else { seg }).sum();
    body + 2 * pad
}

/// Render normalized text with one voice.
///
/// Characters become fixed-length segments of summed sinusoids (the
/// fundamental, its octave, and three formants scaled by
/// `formant_shift`), each with a raised-cosine attack and release; word
/// boundaries become half-length silences; a short silence pads both ends.
pub fn synthesize(
    text: &str,
    voice: &VoiceParams,
    sample_rate: u32,
) -> Result<Waveform, SynthError> {
    voice.validate()?;
    if text.is_empty() {
        return Err(SynthError::EmptyText);
    }
    let seg = segment_samples(sample_rate, voice.speaking_rate);
    let pad = (PAD_S * sample_rate as f64).round() as usize;
    let ramp = ((EDGE_RAMP_S * sample_rate as f64).round() as usize).min(seg / 4).max(1);
    let total = synthesized_len(text, voice, sample_rate);
    let mut samples = vec![0.0f32; total];

    let sr = sample_rate as f64;
    let mut pos = pad;
    for ch in text.chars() {
        if ch == ' ' {
            pos += seg / 2;
            continue;
        }
        let [f1, f2, f3] = formants(ch)?;
        let freqs = [
            voice.base_f0,
            2.0 * voice.base_f0,
            f1 * voice.formant_shift,
            f2 * voice.formant_shift,
            f3 * voice.formant_shift,
        ];
        for k in 0..seg {
            let t = k as f64 / sr;
            let mut v = 0.0;
            for (a, f) in PARTS.iter().zip(freqs) {
                v += a * (2.0 * PI * f * t).sin();
            }
            let env = if k < ramp {
                0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos()
            } else if k + ramp >= seg {
                0.5 - 0.5 * (PI * (seg - k - 1) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            samples[pos + k] = (voice.amplitude * env * v) as f32;
        }
        pos += seg;
    }
    Ok(Waveform { samples, sample_rate })
}

// ---------------------------------------------------------------------------
// Toy language generation
// ---------------------------------------------------------------------------

/// Generator settings for one synthetic language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLanguageSpec {
    pub name: String,
    /// Letters available for word building (must map to formants).
    pub alphabet: String,
    pub vocab_size: usize,
    pub word_len: (usize, usize),
    pub utt_len: (usize, usize),
    pub speakers: Vec<VoiceParams>,
    /// Additive white noise level in dBFS; `-inf` disables.
    pub noise_floor_db: f64,
    /// Per-utterance relative jitter of f0 / rate / formant shift.
    pub f0_jitter: f64,
    pub rate_jitter: f64,
    pub formant_jitter: f64,
    /// Generate utterances until this much audio exists.
    pub target_minutes: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ToyLanguageSpec {
    fn default() -> Self {
        Self {
            name: "toy".into(),
            alphabet: "abdegiklmnorstu".into(),
            vocab_size: 60,
            word_len: (2, 7),
            utt_len: (5, 13),
            speakers: default_speakers(),
            noise_floor_db: -35.0,
            f0_jitter: 0.06,
            rate_jitter: 0.10,
            formant_jitter: 0.02,
            target_minutes: 30.0,
            sample_rate: 16_000,
            seed: 0,
        }
    }
}

pub fn default_speakers() -> Vec<VoiceParams> {
    vec![
        VoiceParams { base_f0: 115.0, formant_shift: 0.94, speaking_rate: 11.5, amplitude: 0.3 },
        VoiceParams { base_f0: 185.0, formant_shift: 1.00, speaking_rate: 12.5, amplitude: 0.3 },
        VoiceParams { base_f0: 245.0, formant_shift: 1.07, speaking_rate: 13.8, amplitude: 0.3 },
    ]
}

/// Speakers held out of every training corpus, for out-of-domain testing.
pub fn out_of_domain_speakers() -> Vec<VoiceParams> {
    vec![
        VoiceParams { base_f0: 140.0, formant_shift: 0.89, speaking_rate: 10.3, amplitude: 0.3 },
        VoiceParams { base_f0: 290.0, formant_shift: 1.12, speaking_rate: 15.2, amplitude: 0.3 },
    ]
}

impl ToyLanguageSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.alphabet.is_empty() {
            return Err(SynthError::InvalidSpec("empty alphabet".into()));
        }
        for ch in self.alphabet.chars() {
            formants(ch)?;
        }
        if self.vocab_size == 0 {
            return Err(SynthError::InvalidSpec("vocab_size must be positive".into()));
        }
        if self.word_len.0 == 0 || self.word_len.0 > self.word_len.1 {
            return Err(SynthError::InvalidSpec(format!(
                "empty word length range {:?}",
                self.word_len
            )));
        }
        if self.utt_len.0 == 0 || self.utt_len.0 > self.utt_len.1 {
            return Err(SynthError::InvalidSpec(format!(
                "empty utterance length range {:?}",
                self.utt_len
            )));
        }
        if self.speakers.is_empty() {
            return Err(SynthError::InvalidSpec("no speakers".into()));
        }
        for v in &self.speakers {
            v.validate()?;
        }
        if !(self.target_minutes > 0.0) {
            return Err(SynthError::InvalidSpec(format!(
                "unreachable duration target {} min",
                self.target_minutes
            )));
        }
        Ok(())
    }

    /// The word inventory is a pure function of (alphabet, seed).
    pub fn word_inventory(&self) -> Vec<String> {
        let letters: Vec<char> = self.alphabet.chars().collect();
        let mut rng = seed::rng(self.seed, "toy.vocab", 0);
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(self.vocab_size);
        let mut attempts = 0usize;
        while words.len() < self.vocab_size {
            let len = rng.random_range(self.word_len.0..=self.word_len.1);
            let w: String =
                (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect();
            attempts += 1;
            if seen.insert(w.clone()) || attempts > 100 * self.vocab_size {
                words.push(w);
            }
        }
        words
    }
}

/// Realized synthesis parameters of one utterance: everything needed to
/// regenerate its waveform bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UttSynthParams {
    pub text: String,
    pub voice: VoiceParams,
    pub noise_amp: f64,
    pub noise_seed: u64,
    pub sample_rate: u32,
}

impl UttSynthParams {
    pub fn render(&self) -> Result<Waveform, SynthError> {
        let mut wav = synthesize(&self.text, &self.voice, self.sample_rate)?;
        if self.noise_amp > 0.0 {
            let mut rng = seed::rng(self.noise_seed, "toy.noise", 0);
            for s in &mut wav.samples {
                let n: f64 = rng.random_range(-1.0..1.0);
                *s = (*s as f64 + self.noise_amp * n) as f32;
            }
            wav.clamp_in_place();
        }
        Ok(wav)
    }
}

/// Audio backend that re-synthesizes utterances on demand.
#[derive(Debug, Default, Clone)]
pub struct SynthSource {
    params: BTreeMap<String, UttSynthParams>,
}

impl SynthSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, params: UttSynthParams) {
        self.params.insert(id.into(), params);
    }

    pub fn merge(&mut self, other: SynthSource) {
        self.params.extend(other.params);
    }

    pub fn get(&self, id: &str) -> Option<&UttSynthParams> {
        self.params.get(id)
    }
}

impl AudioSource for SynthSource {
    fn load(&self, utt: &Utterance) -> Result<Waveform, AudioError> {
        let p = self
            .params
            .get(&utt.id)
            .ok_or_else(|| AudioError::UnknownUtterance { id: utt.id.clone() })?;
        p.render().map_err(|_| AudioError::UnknownUtterance { id: utt.id.clone() })
    }
}

/// A generated corpus together with its on-demand audio backend.
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub corpus: Corpus,
    pub audio: SynthSource,
}

/// Generate a toy corpus: a seeded word inventory, then utterances spoken
/// by the spec's speakers in round-robin order, each with small seeded
/// per-utterance jitter of f0, rate, and formant shift.
pub fn gen_toy_language(spec: &ToyLanguageSpec) -> Result<ToyCorpus, SynthError> {
    gen_toy_corpus(spec, "main", 0, &spec.speakers, spec.target_minutes)
}

/// Extended generator used for reservoirs (continue `start_index`) and
/// out-of-domain sets (different `stream` and speakers, same inventory).
pub fn gen_toy_corpus(
    spec: &ToyLanguageSpec,
    stream: &str,
    start_index: u64,
    speakers: &[VoiceParams],
    target_minutes: f64,
) -> Result<ToyCorpus, SynthError> {
    spec.validate()?;
    if speakers.is_empty() {
        return Err(SynthError::InvalidSpec("no speakers".into()));
    }
    let words = spec.word_inventory();
    let noise_amp =
        if spec.noise_floor_db.is_finite() { 10f64.powf(spec.noise_floor_db / 20.0) } else { 0.0 };

    let mut utterances = Vec::new();
    let mut audio = SynthSource::new();
    let mut total_s = 0.0;
    let target_s = target_minutes * 60.0;
    let mut index = start_index;
    while total_s < target_s {
        let label = format!("toy.utt.{stream}");
        let mut rng = seed::rng(spec.seed, &label, index);
        let n_words = rng.random_range(spec.utt_len.0..=spec.utt_len.1);
        let text: Vec<&str> =
            (0..n_words).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
        let text = text.join(" ");

        let spk_idx = (index as usize) % speakers.len();
        let base = speakers[spk_idx];
        let jit = |r: &mut rand_chacha::ChaCha8Rng, j: f64| {
            if j > 0.0 {
                1.0 + r.random_range(-j..j)
            } else {
                1.0
            }
        };
        let voice = VoiceParams {
            base_f0: (base.base_f0 * jit(&mut rng, spec.f0_jitter)).clamp(60.0, 400.0),
            formant_shift: (base.formant_shift * jit(&mut rng, spec.formant_jitter))
                .clamp(0.5, 2.0),
            speaking_rate: base.speaking_rate * jit(&mut rng, spec.rate_jitter),
            amplitude: base.amplitude,
        };

        let id = if stream == "main" {
            format!("{}-{index:05}", spec.name)
        } else {
            format!("{}-{stream}-{index:05}", spec.name)
        };
        let speaker = if stream == "ood" {
            format!("{}-oodspk{spk_idx}", spec.name)
        } else {
            format!("{}-spk{spk_idx}", spec.name)
        };
        let n_samples = synthesized_len(&text, &voice, spec.sample_rate);
        let duration_s = n_samples as f64 / spec.sample_rate as f64;
        let params = UttSynthParams {
            text: text.clone(),
            voice,
            noise_amp,
            noise_seed: seed::derive_seed(spec.seed, &format!("toy.noise.{stream}"), index),
            sample_rate: spec.sample_rate,
        };
        audio.insert(id.clone(), params);
        utterances.push(Utterance {
            id: id.clone(),
            speaker,
            duration_s,
            text,
            audio: format!("wav/{id}.wav"),
            origin: Origin::Manual,
        });
        total_s += duration_s;
        index += 1;
    }

    let corpus = Corpus {
        utterances,
        alphabet: Alphabet::from_str_chars(&spec.alphabet),
        sample_rate: spec.sample_rate,
    };
    Ok(ToyCorpus { corpus, audio })
}
