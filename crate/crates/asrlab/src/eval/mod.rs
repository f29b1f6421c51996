//! WER/CER with substitution/deletion/insertion breakdown, relative
//! reduction arithmetic, and report tables.

mod report;

pub use report::{render_bar_chart, write_report, ReportRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference and hypothesis lists differ in length ({refs} vs {hyps})")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("empty reference list")]
    EmptyReferences,
    #[error("references contain zero words")]
    ZeroReferenceWords,
    #[error("relative reduction undefined for zero baseline")]
    ZeroBaseline,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Error counts from a minimal edit alignment, pooled over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl WerBreakdown {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`. May exceed 1 through insertions.
    pub fn wer(&self) -> f64 {
        self.distance() as f64 / self.ref_words as f64
    }

    pub fn add(&mut self, other: &WerBreakdown) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_words += other.ref_words;
    }
}

/// Minimal-cost alignment of one token pair with a deterministic breakdown.
///
/// Among minimal alignments the backtrace prefers substitution over
/// deletion over insertion, so the S/D/I counts are reproducible even when
/// the minimal alignment is not unique. Total distance is unaffected.
fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> WerBreakdown {
    let n = reference.len();
    let m = hypothesis.len();
    let mut cost = vec![vec![0u32; m + 1]; n + 1];
    for i in 0..=n {
        cost[i][0] = i as u32;
    }
    for j in 0..=m {
        cost[0][j] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[i - 1][j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[i - 1][j] + 1;
            let ins = cost[i][j - 1] + 1;
            cost[i][j] = sub.min(del).min(ins);
        }
    }

    let mut out = WerBreakdown { ref_words: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let sub_step = cost[i - 1][j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            if cost[i][j] == sub_step {
                if reference[i - 1] != hypothesis[j - 1] {
                    out.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            out.deletions += 1;
            i -= 1;
            continue;
        }
        out.insertions += 1;
        j -= 1;
    }
    out
}

fn check_lists<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<(), EvalError> {
    if refs.is_empty() {
        return Err(EvalError::EmptyReferences);
    }
    if refs.len() != hyps.len() {
        return Err(EvalError::LengthMismatch { refs: refs.len(), hyps: hyps.len() });
    }
    Ok(())
}

/// Corpus word error rate: per-pair word-level Levenshtein with unit
/// costs, error counts pooled over all pairs (not a mean of per-pair WERs).
pub fn wer<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<WerBreakdown, EvalError> {
    check_lists(refs, hyps)?;
    let mut pooled = WerBreakdown::default();
    for (r, h) in refs.iter().zip(hyps) {
        let rw: Vec<&str> = r.as_ref().split_whitespace().collect();
        let hw: Vec<&str> = h.as_ref().split_whitespace().collect();
        pooled.add(&align(&rw, &hw));
    }
    if pooled.ref_words == 0 {
        return Err(EvalError::ZeroReferenceWords);
    }
    Ok(pooled)
}

/// Character error rate; spaces count as symbols.
pub fn cer<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<WerBreakdown, EvalError> {
    check_lists(refs, hyps)?;
    let mut pooled = WerBreakdown::default();
    for (r, h) in refs.iter().zip(hyps) {
        let rc: Vec<char> = r.as_ref().chars().collect();
        let hc: Vec<char> = h.as_ref().chars().collect();
        pooled.add(&align(&rc, &hc));
    }
    if pooled.ref_words == 0 {
        return Err(EvalError::ZeroReferenceWords);
    }
    Ok(pooled)
}

/// Percent WER reduction relative to a baseline; negative when worse.
pub fn relative_reduction(baseline_wer: f64, new_wer: f64) -> Result<f64, EvalError> {
    if baseline_wer <= 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (baseline_wer - new_wer) / baseline_wer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_lists_have_zero_wer() {
        let refs = vec!["a b c", "d e"];
        let b = wer(&refs, &refs).unwrap();
        assert_eq!(b.distance(), 0);
        assert_eq!(b.ref_words, 5);
        assert_eq!(b.wer(), 0.0);
    }

    #[test]
    fn single_substitution() {
        let b = wer(&["a b c"], &["a x c"]).unwrap();
        assert_eq!((b.substitutions, b.deletions, b.insertions), (1, 0, 0));
        assert!((b.wer() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deletion_plus_insertion() {
        // full DP: distance 2 via deleting "the" and inserting "down"
        let b = wer(&["the cat sat"], &["cat sat down"]).unwrap();
        assert_eq!(b.distance(), 2);
        assert_eq!((b.substitutions, b.deletions, b.insertions), (0, 1, 1));
        assert!((b.wer() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cer_identical() {
        assert_eq!(cer(&["abc"], &["abc"]).unwrap().distance(), 0);
    }

    #[test]
    fn cer_swap_prefers_substitutions() {
        // 2x2 DP table: cost 2; tie broken toward substitutions
        let b = cer(&["ab"], &["ba"]).unwrap();
        assert_eq!(b.distance(), 2);
        assert_eq!((b.substitutions, b.deletions, b.insertions), (2, 0, 0));
        assert!((b.wer() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_counts_not_mean_of_rates() {
        // one perfect long pair + one bad short pair
        let refs = vec!["a a a a a a a a a", "b"];
        let hyps = vec!["a a a a a a a a a", "x"];
        let b = wer(&refs, &hyps).unwrap();
        assert!((b.wer() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reduction_arithmetic() {
        assert_eq!(relative_reduction(0.4, 0.4).unwrap(), 0.0);
        assert!((relative_reduction(0.50, 0.40).unwrap() - 20.0).abs() < 1e-12);
        assert!(relative_reduction(0.4, 0.5).unwrap() < 0.0);
        assert!(matches!(relative_reduction(0.0, 0.1), Err(EvalError::ZeroBaseline)));
    }

    #[test]
    fn empty_reference_list_is_error() {
        let empty: Vec<&str> = vec![];
        assert!(matches!(wer(&empty, &empty), Err(EvalError::EmptyReferences)));
        assert!(matches!(wer(&[""], &["a"]), Err(EvalError::ZeroReferenceWords)));
    }

    #[test]
    fn insertions_can_push_wer_past_one() {
        let b = wer(&["a"], &["a b c d"]).unwrap();
        assert_eq!(b.insertions, 3);
        assert!(b.wer() > 1.0);
    }
}
