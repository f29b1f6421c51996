//! Connectionist temporal classification: exact log-domain
//! forward-backward loss with analytic gradient, and greedy best-path
//! decoding. No language model and no beam search.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::corpus::Alphabet;

pub const BLANK: usize = 0;

#[derive(Debug, Error)]
pub enum CtcError {
    #[error("label token {token} out of range (vocab size {vocab_size})")]
    TokenOutOfRange { token: usize, vocab_size: usize },
    #[error("label may not contain the blank token")]
    BlankInLabel,
    #[error("infeasible alignment: label needs at least {needed} frames, lattice has {frames}")]
    InfeasibleAlignment { needed: usize, frames: usize },
    #[error("log-probability lattice row {row} does not normalize (logsumexp = {lse})")]
    UnnormalizedRow { row: usize, lse: f64 },
    #[error("character {ch:?} is not in the vocabulary")]
    CharNotInVocab { ch: char },
    #[error("empty lattice")]
    EmptyLattice,
}

/// Token inventory: blank at index 0, then the corpus alphabet, then space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
}

impl Vocab {
    /// Characters in order, excluding blank. Space must be passed explicitly
    /// if wanted; `from_alphabet` appends it for corpus use.
    pub fn new(chars: Vec<char>) -> Self {
        Self { chars }
    }

    /// Blank + alphabet characters in order + space.
    pub fn from_alphabet(alphabet: &Alphabet) -> Self {
        let mut chars: Vec<char> = alphabet.chars().to_vec();
        chars.push(' ');
        Self { chars }
    }

    /// Total token count including blank.
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn token_of(&self, c: char) -> Option<usize> {
        self.chars.iter().position(|&x| x == c).map(|i| i + 1)
    }

    pub fn char_of(&self, token: usize) -> Option<char> {
        if token == BLANK {
            None
        } else {
            self.chars.get(token - 1).copied()
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>, CtcError> {
        text.chars()
            .map(|c| self.token_of(c).ok_or(CtcError::CharNotInVocab { ch: c }))
            .collect()
    }

    pub fn decode(&self, tokens: &[usize]) -> String {
        tokens.iter().filter_map(|&t| self.char_of(t)).collect()
    }
}

/// A `T x V` lattice of per-frame log-probabilities (valid log-softmax rows).
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbs {
    lattice: Array2<f64>,
}

impl LogProbs {
    /// Wrap a lattice, checking that every row log-sum-exps to 0 within 1e-6.
    pub fn new(lattice: Array2<f64>) -> Result<Self, CtcError> {
        if lattice.nrows() == 0 || lattice.ncols() == 0 {
            return Err(CtcError::EmptyLattice);
        }
        for (i, row) in lattice.rows().into_iter().enumerate() {
            let lse = logsumexp_slice(row.as_slice().expect("contiguous row"));
            if lse.abs() > 1e-6 {
                return Err(CtcError::UnnormalizedRow { row: i, lse });
            }
        }
        Ok(Self { lattice })
    }

    /// Wrap without validation; for lattices produced by a log-softmax.
    pub fn from_log_softmax(lattice: Array2<f64>) -> Self {
        Self { lattice }
    }

    pub fn frames(&self) -> usize {
        self.lattice.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.lattice.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.lattice.view()
    }
}

fn logsumexp_slice(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn logsumexp3(a: f64, b: f64, c: f64) -> f64 {
    logsumexp2(logsumexp2(a, b), c)
}

/// Minimum frame count that can emit `label`: its length plus one extra
/// frame per adjacent repeated token (a separating blank).
pub fn min_frames(label: &[usize]) -> usize {
    let repeats = label.windows(2).filter(|w| w[0] == w[1]).count();
    label.len() + repeats
}

fn check_label(label: &[usize], vocab_size: usize, frames: usize) -> Result<(), CtcError> {
    for &t in label {
        if t == BLANK {
            return Err(CtcError::BlankInLabel);
        }
        if t >= vocab_size {
            return Err(CtcError::TokenOutOfRange { token: t, vocab_size });
        }
    }
    let needed = min_frames(label);
    if needed > frames {
        return Err(CtcError::InfeasibleAlignment { needed, frames });
    }
    Ok(())
}

/// CTC negative log-likelihood of `label` under the lattice, with the exact
/// gradient with respect to the pre-softmax logits.
///
/// Everything runs in the log domain with log-sum-exp, so long lattices
/// cannot underflow. The gradient uses the standard identity
/// `d(-ln p)/d(logit[t][k]) = softmax[t][k] - (paths through k at t) / p`.
pub fn ctc_loss(lp: &LogProbs, label: &[usize]) -> Result<(f64, Array2<f64>), CtcError> {
    let frames = lp.frames();
    let vocab_size = lp.vocab_size();
    check_label(label, vocab_size, frames)?;
    let lat = lp.view();

    // blank-interleaved extended label: blank, l1, blank, l2, ..., blank
    let ext_len = 2 * label.len() + 1;
    let ext_token = |s: usize| -> usize {
        if s % 2 == 0 {
            BLANK
        } else {
            label[s / 2]
        }
    };

    let neg = f64::NEG_INFINITY;
    let mut alpha = Array2::<f64>::from_elem((frames, ext_len), neg);
    alpha[[0, 0]] = lat[[0, BLANK]];
    if ext_len > 1 {
        alpha[[0, 1]] = lat[[0, ext_token(1)]];
    }
    for t in 1..frames {
        for s in 0..ext_len {
            let tok = ext_token(s);
            let stay = alpha[[t - 1, s]];
            let step = if s >= 1 { alpha[[t - 1, s - 1]] } else { neg };
            let skip = if s >= 2 && tok != BLANK && tok != ext_token(s - 2) {
                alpha[[t - 1, s - 2]]
            } else {
                neg
            };
            let sum = logsumexp3(stay, step, skip);
            if sum != neg {
                alpha[[t, s]] = sum + lat[[t, tok]];
            }
        }
    }

    let log_p = if ext_len > 1 {
        logsumexp2(alpha[[frames - 1, ext_len - 1]], alpha[[frames - 1, ext_len - 2]])
    } else {
        alpha[[frames - 1, 0]]
    };
    // Feasible labels always have at least one path; this guards NaN fallout
    // from a degenerate lattice rather than an infeasible label.
    if !log_p.is_finite() {
        return Err(CtcError::InfeasibleAlignment { needed: min_frames(label), frames });
    }

    let mut beta = Array2::<f64>::from_elem((frames, ext_len), neg);
    beta[[frames - 1, ext_len - 1]] = lat[[frames - 1, ext_token(ext_len - 1)]];
    if ext_len > 1 {
        beta[[frames - 1, ext_len - 2]] = lat[[frames - 1, ext_token(ext_len - 2)]];
    }
    for t in (0..frames.saturating_sub(1)).rev() {
        for s in 0..ext_len {
            let tok = ext_token(s);
            let stay = beta[[t + 1, s]];
            let step = if s + 1 < ext_len { beta[[t + 1, s + 1]] } else { neg };
            let skip = if s + 2 < ext_len && ext_token(s + 2) != BLANK && tok != ext_token(s + 2) {
                beta[[t + 1, s + 2]]
            } else {
                neg
            };
            let sum = logsumexp3(stay, step, skip);
            if sum != neg {
                beta[[t, s]] = sum + lat[[t, tok]];
            }
        }
    }

    // gradient wrt logits: softmax - gamma / p, where gamma[t][k] sums the
    // probability of all valid paths emitting token k at frame t
    let mut grad = Array2::<f64>::zeros((frames, vocab_size));
    for t in 0..frames {
        let mut log_gamma = vec![neg; vocab_size];
        for s in 0..ext_len {
            let a = alpha[[t, s]];
            let b = beta[[t, s]];
            if a == neg || b == neg {
                continue;
            }
            let tok = ext_token(s);
            // alpha and beta both include the frame-t emission; divide once
            let through = a + b - lat[[t, tok]];
            log_gamma[tok] = logsumexp2(log_gamma[tok], through);
        }
        for k in 0..vocab_size {
            let posterior =
                if log_gamma[k] == neg { 0.0 } else { (log_gamma[k] - log_p).exp() };
            grad[[t, k]] = lat[[t, k]].exp() - posterior;
        }
    }

    Ok((-log_p, grad))
}

/// Merge adjacent duplicate frame tokens, then delete blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for &t in path {
        if Some(t) != prev && t != BLANK {
            out.push(t);
        }
        prev = Some(t);
    }
    out
}

/// Per-frame argmax (ties toward the lowest index, blank first), collapsed.
pub fn ctc_greedy_decode(lp: &LogProbs, _vocab: &Vocab) -> Vec<usize> {
    let lat = lp.view();
    let path: Vec<usize> = lat
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_val = row[0];
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > best_val {
                    best = k;
                    best_val = v;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

/// Greedy decode straight to text.
pub fn greedy_decode_text(lp: &LogProbs, vocab: &Vocab) -> String {
    vocab.decode(&ctc_greedy_decode(lp, vocab))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force reference implementations for tests: enumerate every
    //! frame path, collapse it, and sum probabilities per label.

    use super::*;
    use std::collections::HashMap;

    /// All `V^T` paths with their probabilities, grouped by collapsed label.
    pub fn label_distribution(lp: &LogProbs) -> HashMap<Vec<usize>, f64> {
        let frames = lp.frames();
        let vocab_size = lp.vocab_size();
        let lat = lp.view();
        let mut dist: HashMap<Vec<usize>, f64> = HashMap::new();
        let total = (vocab_size as u64).pow(frames as u32);
        for code in 0..total {
            let mut c = code;
            let mut path = Vec::with_capacity(frames);
            let mut log_prob = 0.0;
            for t in 0..frames {
                let token = (c % vocab_size as u64) as usize;
                c /= vocab_size as u64;
                path.push(token);
                log_prob += lat[[t, token]];
            }
            *dist.entry(collapse(&path)).or_insert(0.0) += log_prob.exp();
        }
        dist
    }

    /// Brute-force `-ln p(label)`; `None` when no path collapses to it.
    pub fn brute_force_loss(lp: &LogProbs, label: &[usize]) -> Option<f64> {
        let dist = label_distribution(lp);
        dist.get(label).map(|p| -p.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    pub fn uniform_lattice(frames: usize, vocab_size: usize) -> LogProbs {
        let v = (1.0 / vocab_size as f64).ln();
        LogProbs::new(Array2::from_elem((frames, vocab_size), v)).unwrap()
    }

    pub fn random_lattice(frames: usize, vocab_size: usize, rng: &mut impl Rng) -> LogProbs {
        let logits: Vec<f64> = (0..frames * vocab_size).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut lat = Array2::from_shape_vec((frames, vocab_size), logits).unwrap();
        for mut row in lat.rows_mut() {
            let lse = logsumexp_slice(row.as_slice().unwrap());
            row.mapv_inplace(|x| x - lse);
        }
        LogProbs::new(lat).unwrap()
    }

    #[test]
    fn single_frame_uniform_label_a() {
        let lp = uniform_lattice(1, 3);
        let (loss, _) = ctc_loss(&lp, &[1]).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_uniform_label_a() {
        // paths collapsing to "a": aa, a-, -a => 3/9 => loss = ln 3
        let lp = uniform_lattice(2, 3);
        let (loss, _) = ctc_loss(&lp, &[1]).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn random_lattice_matches_brute_force() {
        let mut rng = crate::seed::rng(99, "ctc.test", 0);
        for _ in 0..20 {
            let lp = random_lattice(3, 3, &mut rng);
            let (loss, _) = ctc_loss(&lp, &[1, 2]).unwrap();
            let expected = oracle::brute_force_loss(&lp, &[1, 2]).unwrap();
            assert!((loss - expected).abs() < 1e-6, "{loss} vs {expected}");
        }
    }

    #[test]
    fn empty_label_is_all_blank_path() {
        let mut rng = crate::seed::rng(17, "ctc.test", 1);
        let lp = random_lattice(4, 3, &mut rng);
        let (loss, _) = ctc_loss(&lp, &[]).unwrap();
        let direct: f64 = (0..4).map(|t| lp.view()[[t, BLANK]]).sum();
        assert!((loss + direct).abs() < 1e-12);
    }

    #[test]
    fn infeasible_label_is_an_error() {
        let lp = uniform_lattice(2, 3);
        // "aa" needs 3 frames (a blank between repeats)
        match ctc_loss(&lp, &[1, 1]) {
            Err(CtcError::InfeasibleAlignment { needed, frames }) => {
                assert_eq!(needed, 3);
                assert_eq!(frames, 2);
            }
            other => panic!("expected infeasible error, got {other:?}"),
        }
        assert!(ctc_loss(&lp, &[1, 2]).is_ok());
    }

    #[test]
    fn blank_in_label_rejected() {
        let lp = uniform_lattice(2, 3);
        assert!(matches!(ctc_loss(&lp, &[BLANK]), Err(CtcError::BlankInLabel)));
    }

    #[test]
    fn collapse_blank_separates_repeats() {
        assert_eq!(collapse(&[1, 1, 0, 1]), vec![1, 1]);
    }

    #[test]
    fn collapse_empty() {
        assert_eq!(collapse(&[]), Vec::<usize>::new());
    }

    #[test]
    fn greedy_decode_collapses_argmax_path() {
        // path: -, a, a, b, -, b  => "abb"
        let path = [0usize, 1, 1, 2, 0, 2];
        let vocab_size = 3;
        let mut lat = Array2::from_elem((path.len(), vocab_size), -10.0);
        for (t, &tok) in path.iter().enumerate() {
            lat[[t, tok]] = -0.1;
        }
        // renormalize rows
        for mut row in lat.rows_mut() {
            let lse = logsumexp_slice(row.as_slice().unwrap());
            row.mapv_inplace(|x| x - lse);
        }
        let lp = LogProbs::new(lat).unwrap();
        let vocab = Vocab::new(vec!['a', 'b']);
        assert_eq!(ctc_greedy_decode(&lp, &vocab), vec![1, 2, 2]);
        assert_eq!(greedy_decode_text(&lp, &vocab), "abb");
    }

    #[test]
    fn greedy_decode_all_blank_is_empty() {
        let mut lat = Array2::from_elem((4, 3), -5.0);
        for t in 0..4 {
            lat[[t, BLANK]] = -0.01;
        }
        for mut row in lat.rows_mut() {
            let lse = logsumexp_slice(row.as_slice().unwrap());
            row.mapv_inplace(|x| x - lse);
        }
        let lp = LogProbs::new(lat).unwrap();
        assert!(ctc_greedy_decode(&lp, &Vocab::new(vec!['a', 'b'])).is_empty());
    }

    #[test]
    fn greedy_ties_break_toward_lowest_index() {
        let v = (1.0 / 3.0_f64).ln();
        let lp = LogProbs::new(Array2::from_elem((3, 3), v)).unwrap();
        // all rows tie; lowest index is blank, so decode is empty
        assert!(ctc_greedy_decode(&lp, &Vocab::new(vec!['a', 'b'])).is_empty());
    }

    #[test]
    fn decode_of_one_hot_equals_collapse_small_paths() {
        // exhaustive over all paths with T <= 4, V = 3
        let vocab = Vocab::new(vec!['a', 'b']);
        for frames in 1..=4usize {
            for code in 0..3u32.pow(frames as u32) {
                let mut c = code;
                let path: Vec<usize> = (0..frames)
                    .map(|_| {
                        let t = (c % 3) as usize;
                        c /= 3;
                        t
                    })
                    .collect();
                let mut lat = Array2::from_elem((frames, 3), -12.0);
                for (t, &tok) in path.iter().enumerate() {
                    lat[[t, tok]] = -1e-9;
                }
                for mut row in lat.rows_mut() {
                    let lse = logsumexp_slice(row.as_slice().unwrap());
                    row.mapv_inplace(|x| x - lse);
                }
                let lp = LogProbs::new(lat).unwrap();
                assert_eq!(ctc_greedy_decode(&lp, &vocab), collapse(&path), "path {path:?}");
            }
        }
    }

    #[test]
    fn vocab_round_trips_text() {
        let vocab = Vocab::from_alphabet(&crate::corpus::Alphabet::from_str_chars("ab"));
        assert_eq!(vocab.size(), 4); // blank, a, b, space
        let toks = vocab.encode("ab b").unwrap();
        assert_eq!(vocab.decode(&toks), "ab b");
        assert!(vocab.encode("z").is_err());
    }

    #[test]
    fn lattice_validation_rejects_unnormalized_rows() {
        let lat = Array2::from_elem((2, 3), -0.5);
        assert!(matches!(LogProbs::new(lat), Err(CtcError::UnnormalizedRow { .. })));
    }
}
