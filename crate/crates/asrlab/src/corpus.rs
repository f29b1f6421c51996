//! Transcribed-speech data model: manifests, transcript normalization,
//! deterministic splits, and duration-based nested subsets.
//!
//! A corpus is immutable once loaded; every operation here is a pure
//! function of its inputs and an explicit seed, so splits and subsets can
//! be regenerated bit-for-bit from a manifest and a seed alone.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed manifest line: {detail}")]
    MalformedLine { path: PathBuf, line: usize, detail: String },
    #[error("duplicate utterance id {id:?}")]
    DuplicateId { id: String },
    #[error("utterance {id:?}: character {ch:?} outside corpus alphabet")]
    CharOutsideAlphabet { id: String, ch: char },
    #[error("utterance {id:?}: non-positive duration {duration_s}")]
    NonPositiveDuration { id: String, duration_s: f64 },
    #[error("utterance {id:?}: audio file {path} not found")]
    MissingAudio { id: String, path: PathBuf },
    #[error("transcript is empty after normalization")]
    EmptyTranscript,
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("corpus has {n} utterances; need at least 3 to populate train/dev/test")]
    TooSmallToSplit { n: usize },
    #[error("invalid subset targets: {0}")]
    InvalidSubsetTargets(String),
    #[error("id collision while merging: {id:?}")]
    IdCollision { id: String },
    #[error("alphabet mismatch while merging (left {left:?}, right {right:?})")]
    AlphabetMismatch { left: String, right: String },
    #[error("sample rate mismatch while merging ({left} vs {right})")]
    SampleRateMismatch { left: u32, right: u32 },
}

/// Where an utterance's (audio, text) pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Human-transcribed recording.
    Manual,
    /// Audio is real, text was produced by a teacher model.
    PseudoLabel,
    /// Text is real, audio was synthesized from it.
    TtsSynth,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Origin::Manual => "manual",
            Origin::PseudoLabel => "pseudo_label",
            Origin::TtsSynth => "tts_synth",
        };
        f.write_str(s)
    }
}

/// One transcribed recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub duration_s: f64,
    pub text: String,
    /// Path of the waveform file, usually relative to the manifest.
    pub audio: String,
    pub origin: Origin,
}

/// Ordered character inventory of a corpus. Never contains space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    /// Build from the given characters, keeping first-seen order.
    /// Space and other whitespace are excluded.
    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in chars {
            if !c.is_whitespace() && seen.insert(c) {
                out.push(c);
            }
        }
        Self { chars: out }
    }

    pub fn from_str_chars(s: &str) -> Self {
        Self::new(s.chars())
    }

    /// Alphabet inferred from texts: sorted set of the non-space characters.
    pub fn infer(texts: &[&str]) -> Self {
        let set: BTreeSet<char> =
            texts.iter().flat_map(|t| t.chars()).filter(|c| !c.is_whitespace()).collect();
        Self { chars: set.into_iter().collect() }
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}

/// An ordered collection of utterances sharing one alphabet and sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub alphabet: Alphabet,
    pub sample_rate: u32,
}

impl Corpus {
    pub fn empty_like(other: &Corpus) -> Corpus {
        Corpus {
            utterances: Vec::new(),
            alphabet: other.alphabet.clone(),
            sample_rate: other.sample_rate,
        }
    }

    pub fn total_duration_s(&self) -> f64 {
        self.utterances.iter().map(|u| u.duration_s).sum()
    }

    pub fn total_duration_min(&self) -> f64 {
        self.total_duration_s() / 60.0
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.utterances.iter().map(|u| u.id.as_str()).collect()
    }

    pub fn max_utterance_duration_s(&self) -> f64 {
        self.utterances.iter().map(|u| u.duration_s).fold(0.0, f64::max)
    }

    /// Duration summed per origin, in seconds.
    pub fn duration_by_origin_s(&self) -> [(Origin, f64); 3] {
        let mut manual = 0.0;
        let mut pseudo = 0.0;
        let mut tts = 0.0;
        for u in &self.utterances {
            match u.origin {
                Origin::Manual => manual += u.duration_s,
                Origin::PseudoLabel => pseudo += u.duration_s,
                Origin::TtsSynth => tts += u.duration_s,
            }
        }
        [(Origin::Manual, manual), (Origin::PseudoLabel, pseudo), (Origin::TtsSynth, tts)]
    }

    /// Check id uniqueness, positive durations, and alphabet membership.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for u in &self.utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId { id: u.id.clone() });
            }
            if !(u.duration_s > 0.0) {
                return Err(CorpusError::NonPositiveDuration {
                    id: u.id.clone(),
                    duration_s: u.duration_s,
                });
            }
            for ch in u.text.chars() {
                if ch != ' ' && !self.alphabet.contains(ch) {
                    return Err(CorpusError::CharOutsideAlphabet { id: u.id.clone(), ch });
                }
            }
        }
        Ok(())
    }

    /// Subset containing exactly the utterances whose ids are in `keep`,
    /// preserving corpus order.
    pub fn filter_by_ids(&self, keep: &BTreeSet<&str>) -> Corpus {
        Corpus {
            utterances: self
                .utterances
                .iter()
                .filter(|u| keep.contains(u.id.as_str()))
                .cloned()
                .collect(),
            alphabet: self.alphabet.clone(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Utterances of `a` that are not in `b` (by id), preserving order.
pub fn corpus_difference(a: &Corpus, b: &Corpus) -> Corpus {
    let drop = b.ids();
    Corpus {
        utterances: a.utterances.iter().filter(|u| !drop.contains(u.id.as_str())).cloned().collect(),
        alphabet: a.alphabet.clone(),
        sample_rate: a.sample_rate,
    }
}

/// Fractions of a corpus assigned to train/dev/test, plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub dev_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, dev_frac: f64, test_frac: f64, seed: u64) -> Self {
        Self { train_frac, dev_frac, test_frac, seed }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fracs = [self.train_frac, self.dev_frac, self.test_frac];
        for f in fracs {
            if !(f > 0.0 && f < 1.0) {
                return Err(CorpusError::InvalidSplitSpec(format!(
                    "fraction {f} not in (0, 1)"
                )));
            }
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplitSpec(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ManifestHeader {
    alphabet: String,
    sample_rate: u32,
}

/// Load a JSONL manifest.
///
/// The first line may be a header object `{"alphabet", "sample_rate"}`;
/// without one the alphabet is inferred from the texts and the sample
/// rate defaults to 16 kHz. With `check_audio` set, every referenced
/// audio file must exist (paths resolved against the manifest directory).
pub fn load_manifest(path: &Path, check_audio: bool) -> Result<Corpus, CorpusError> {
    let io = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let content = fs::read_to_string(path).map_err(io)?;
    let mut header: Option<ManifestHeader> = None;
    let mut utterances: Vec<Utterance> = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<ManifestHeader>(trimmed) {
                header = Some(h);
                continue;
            }
        }
        let utt: Utterance = serde_json::from_str(trimmed).map_err(|e| {
            CorpusError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                detail: e.to_string(),
            }
        })?;
        utterances.push(utt);
    }
    let (alphabet, sample_rate) = match header {
        Some(h) => (Alphabet::from_str_chars(&h.alphabet), h.sample_rate),
        None => {
            let texts: Vec<&str> = utterances.iter().map(|u| u.text.as_str()).collect();
            (Alphabet::infer(&texts), 16_000)
        }
    };
    let corpus = Corpus { utterances, alphabet, sample_rate };
    corpus.validate()?;
    if check_audio {
        let root = path.parent().unwrap_or_else(|| Path::new("."));
        for u in &corpus.utterances {
            let audio = Path::new(&u.audio);
            let resolved = if audio.is_absolute() { audio.to_path_buf() } else { root.join(audio) };
            if !resolved.is_file() {
                return Err(CorpusError::MissingAudio { id: u.id.clone(), path: resolved });
            }
        }
    }
    Ok(corpus)
}

/// Write a corpus as a JSONL manifest with a header line.
pub fn save_manifest(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let header = ManifestHeader {
        alphabet: corpus.alphabet.as_string(),
        sample_rate: corpus.sample_rate,
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(io)?;
    for u in &corpus.utterances {
        serde_json::to_writer(&mut w, u).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Normalize a raw transcript against an alphabet.
///
/// Lowercases, drops characters outside the alphabet, collapses whitespace
/// runs to single spaces, and trims. Idempotent. An empty result is an
/// error so the caller can drop the utterance.
pub fn normalize_transcript(text: &str, alphabet: &Alphabet) -> Result<String, CorpusError> {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = true;
        } else if alphabet.contains(c) {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(CorpusError::EmptyTranscript);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splitting and subsetting
// ---------------------------------------------------------------------------

/// Split a corpus into train/dev/test by cumulative duration.
///
/// Utterances are shuffled with the spec seed, then each is assigned to
/// the partition with the largest remaining duration deficit (ties favor
/// train, then dev). This keeps every partition within one utterance's
/// duration of its target. Speaker overlap across partitions is allowed.
pub fn split_corpus(c: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    spec.validate()?;
    if c.len() < 3 {
        return Err(CorpusError::TooSmallToSplit { n: c.len() });
    }
    let total = c.total_duration_s();
    let targets = [spec.train_frac * total, spec.dev_frac * total, spec.test_frac * total];

    let mut order: Vec<usize> = (0..c.len()).collect();
    order.shuffle(&mut seed::rng(spec.seed, "corpus.split", 0));

    let mut deficits = targets;
    let mut members: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &idx in &order {
        let mut best = 0;
        for p in 1..3 {
            if deficits[p] > deficits[best] {
                best = p;
            }
        }
        members[best].push(idx);
        deficits[best] -= c.utterances[idx].duration_s;
    }

    let mut parts = members.into_iter().map(|mut m| {
        m.sort_unstable();
        Corpus {
            utterances: m.into_iter().map(|i| c.utterances[i].clone()).collect(),
            alphabet: c.alphabet.clone(),
            sample_rate: c.sample_rate,
        }
    });
    Ok((parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap()))
}

/// Produce a nested chain of duration-capped subsets of `train`.
///
/// `targets_min` are minutes, strictly decreasing, each roughly half the
/// previous (within 10%). The corpus is shuffled once with `seed` and each
/// subset is the shortest shuffled prefix reaching its target, so smaller
/// subsets are contained in larger ones by construction. The complement of
/// a subset within `train` (its pseudo-labeling pool) is
/// `corpus_difference(train, subset)`.
pub fn subset_by_duration(
    train: &Corpus,
    targets_min: &[f64],
    seed_value: u64,
) -> Result<Vec<Corpus>, CorpusError> {
    if targets_min.is_empty() {
        return Err(CorpusError::InvalidSubsetTargets("no targets given".into()));
    }
    let total_min = train.total_duration_min();
    for pair in targets_min.windows(2) {
        if pair[1] >= pair[0] {
            return Err(CorpusError::InvalidSubsetTargets(format!(
                "targets must be strictly decreasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
        let half = pair[0] / 2.0;
        if (pair[1] - half).abs() > 0.1 * half {
            return Err(CorpusError::InvalidSubsetTargets(format!(
                "target {} is not within 10% of half of {}",
                pair[1], pair[0]
            )));
        }
    }
    for &t in targets_min {
        if !(t > 0.0) {
            return Err(CorpusError::InvalidSubsetTargets(format!("non-positive target {t}")));
        }
        if t > total_min + 1e-9 {
            return Err(CorpusError::InvalidSubsetTargets(format!(
                "target {t} min exceeds available {total_min:.3} min"
            )));
        }
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut seed::rng(seed_value, "corpus.subset", 0));

    let mut subsets = Vec::with_capacity(targets_min.len());
    for &target in targets_min {
        let target_s = target * 60.0;
        let mut cum = 0.0;
        let mut members: Vec<usize> = Vec::new();
        for &idx in &order {
            if cum >= target_s - 1e-9 {
                break;
            }
            members.push(idx);
            cum += train.utterances[idx].duration_s;
        }
        members.sort_unstable();
        subsets.push(Corpus {
            utterances: members.into_iter().map(|i| train.utterances[i].clone()).collect(),
            alphabet: train.alphabet.clone(),
            sample_rate: train.sample_rate,
        });
    }
    Ok(subsets)
}

/// Union of two corpora with disjoint ids and identical alphabet/rate.
pub fn merge_corpora(a: &Corpus, b: &Corpus) -> Result<Corpus, CorpusError> {
    if a.alphabet != b.alphabet {
        return Err(CorpusError::AlphabetMismatch {
            left: a.alphabet.as_string(),
            right: b.alphabet.as_string(),
        });
    }
    if a.sample_rate != b.sample_rate {
        return Err(CorpusError::SampleRateMismatch { left: a.sample_rate, right: b.sample_rate });
    }
    let ids = a.ids();
    for u in &b.utterances {
        if ids.contains(u.id.as_str()) {
            return Err(CorpusError::IdCollision { id: u.id.clone() });
        }
    }
    let mut utterances = a.utterances.clone();
    utterances.extend(b.utterances.iter().cloned());
    Ok(Corpus { utterances, alphabet: a.alphabet.clone(), sample_rate: a.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, speaker: &str, duration_s: f64, text: &str) -> Utterance {
        Utterance {
            id: id.into(),
            speaker: speaker.into(),
            duration_s,
            text: text.into(),
            audio: format!("{id}.wav"),
            origin: Origin::Manual,
        }
    }

    fn toy(n: usize, dur: f64) -> Corpus {
        Corpus {
            utterances: (0..n).map(|i| utt(&format!("u{i}"), "s0", dur, "ab ba")).collect(),
            alphabet: Alphabet::from_str_chars("ab"),
            sample_rate: 16_000,
        }
    }

    #[test]
    fn manifest_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut lines = String::new();
        for id in ["u1", "u2", "u3"] {
            lines.push_str(&format!(
                r#"{{"id":"{id}","speaker":"s","duration_s":1.5,"text":"ab","audio":"{id}.wav","origin":"manual"}}"#
            ));
            lines.push('\n');
        }
        fs::write(&path, lines).unwrap();
        let c = load_manifest(&path, false).unwrap();
        let ids: Vec<&str> = c.utterances.iter().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, vec!["u1", "u2", "u3"]);
    }

    #[test]
    fn manifest_duplicate_id_names_offender() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let line =
            r#"{"id":"u1","speaker":"s","duration_s":1.0,"text":"a","audio":"u1.wav","origin":"manual"}"#;
        fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        match load_manifest(&path, false) {
            Err(CorpusError::DuplicateId { id }) => assert_eq!(id, "u1"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let good =
            r#"{"id":"u1","speaker":"s","duration_s":1.0,"text":"a","audio":"u1.wav","origin":"manual"}"#;
        fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match load_manifest(&path, false) {
            Err(CorpusError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_rejects_chars_outside_declared_alphabet() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut content = String::from(r#"{"alphabet":"ab","sample_rate":16000}"#);
        content.push('\n');
        content.push_str(
            r#"{"id":"u1","speaker":"s","duration_s":1.0,"text":"abc","audio":"u1.wav","origin":"manual"}"#,
        );
        content.push('\n');
        fs::write(&path, content).unwrap();
        match load_manifest(&path, false) {
            Err(CorpusError::CharOutsideAlphabet { id, ch }) => {
                assert_eq!(id, "u1");
                assert_eq!(ch, 'c');
            }
            other => panic!("expected alphabet error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_drops_punctuation() {
        let ab = Alphabet::from_str_chars("abcdefghijklmnopqrstuvwxyz");
        assert_eq!(normalize_transcript("Moi!", &ab).unwrap(), "moi");
    }

    #[test]
    fn normalize_collapses_whitespace() {
        let ab = Alphabet::from_str_chars("ab");
        assert_eq!(normalize_transcript("ab  ba", &ab).unwrap(), "ab ba");
    }

    #[test]
    fn normalize_handles_mixed_input() {
        // independent expectation: lowercase, strip chars outside
        // {a..z, '}, collapse spaces, trim -> "zo was 't"
        let ab = Alphabet::from_str_chars("abcdefghijklmnopqrstuvwxyz'");
        assert_eq!(normalize_transcript("1977 — zo was 't", &ab).unwrap(), "zo was 't");
    }

    #[test]
    fn normalize_is_idempotent_on_sample() {
        let ab = Alphabet::from_str_chars("abcdefghijklmnopqrstuvwxyz'");
        let once = normalize_transcript("  A  b'C  ", &ab).unwrap();
        let twice = normalize_transcript(&once, &ab).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn normalize_empty_result_is_error() {
        let ab = Alphabet::from_str_chars("ab");
        assert!(matches!(
            normalize_transcript("xyz 123", &ab),
            Err(CorpusError::EmptyTranscript)
        ));
    }

    #[test]
    fn split_hits_duration_targets() {
        // 240 "minutes" scaled down: 240 utterances of 1s => targets 192/24/24 s
        let c = toy(240, 1.0);
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 7);
        let (train, dev, test) = split_corpus(&c, &spec).unwrap();
        assert!((train.total_duration_s() - 192.0).abs() < 1.0 + 1e-9);
        assert!((dev.total_duration_s() - 24.0).abs() < 1.0 + 1e-9);
        assert!((test.total_duration_s() - 24.0).abs() < 1.0 + 1e-9);
    }

    #[test]
    fn split_partitions_ten_utterances() {
        let c = toy(10, 2.0);
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 3);
        let (train, dev, test) = split_corpus(&c, &spec).unwrap();
        assert!(!train.is_empty() && !dev.is_empty() && !test.is_empty());
        let mut all = train.ids();
        all.extend(dev.ids());
        all.extend(test.ids());
        assert_eq!(all, c.ids());
        assert_eq!(train.len() + dev.len() + test.len(), c.len());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let c = toy(60, 1.5);
        let (t7a, ..) = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 7)).unwrap();
        let (t7b, ..) = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 7)).unwrap();
        let (t8, ..) = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 8)).unwrap();
        assert_eq!(t7a.ids(), t7b.ids());
        assert_ne!(t7a.ids(), t8.ids());
    }

    #[test]
    fn split_rejects_tiny_corpus() {
        let c = toy(2, 1.0);
        assert!(matches!(
            split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 1)),
            Err(CorpusError::TooSmallToSplit { n: 2 })
        ));
    }

    #[test]
    fn subsets_nest_and_hit_targets() {
        // 192 "minutes" of 6-second utterances, scaled to seconds via /60
        let c = toy(1920, 6.0); // 192 min
        let subs = subset_by_duration(&c, &[96.0, 48.0, 24.0], 11).unwrap();
        assert_eq!(subs.len(), 3);
        for (sub, target) in subs.iter().zip([96.0, 48.0, 24.0]) {
            assert!((sub.total_duration_min() - target).abs() * 60.0 < 6.0 + 1e-9);
        }
        let ids96 = subs[0].ids();
        let ids48 = subs[1].ids();
        let ids24 = subs[2].ids();
        assert!(ids24.is_subset(&ids48));
        assert!(ids48.is_subset(&ids96));
    }

    #[test]
    fn subset_identity_target() {
        let c = toy(100, 6.0); // 10 min
        let subs = subset_by_duration(&c, &[10.0], 5).unwrap();
        assert_eq!(subs[0].ids(), c.ids());
    }

    #[test]
    fn subset_rejects_non_halving_chain() {
        let c = toy(1000, 6.0);
        assert!(subset_by_duration(&c, &[90.0, 30.0], 5).is_err());
        assert!(subset_by_duration(&c, &[30.0, 90.0], 5).is_err());
        assert!(subset_by_duration(&c, &[1e6], 5).is_err());
    }

    #[test]
    fn merge_preserves_durations_and_origins() {
        let a = toy(10, 2.0);
        let mut b = toy(5, 3.0);
        for (i, u) in b.utterances.iter_mut().enumerate() {
            u.id = format!("p{i}#pl");
            u.origin = Origin::PseudoLabel;
        }
        let m = merge_corpora(&a, &b).unwrap();
        assert_eq!(m.len(), 15);
        assert!((m.total_duration_s() - (a.total_duration_s() + b.total_duration_s())).abs() < 1e-9);
        let by_origin = m.duration_by_origin_s();
        assert!((by_origin[0].1 - 20.0).abs() < 1e-9);
        assert!((by_origin[1].1 - 15.0).abs() < 1e-9);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let a = toy(4, 1.0);
        let m = merge_corpora(&a, &Corpus::empty_like(&a)).unwrap();
        assert_eq!(m, a);
    }

    #[test]
    fn merge_detects_collisions() {
        let a = toy(4, 1.0);
        assert!(matches!(merge_corpora(&a, &a), Err(CorpusError::IdCollision { .. })));
    }
}
