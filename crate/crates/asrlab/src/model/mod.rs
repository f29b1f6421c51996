//! The small trainable acoustic model: log-mel frames with stacked
//! context, tanh hidden layers, and a log-softmax character output
//! trained with CTC.
//!
//! Parameters live in one flat `f64` vector with a shape registry, so
//! checkpoints, Adam state, and finite-difference checks all see the same
//! layout. The forward pass builds ndarray views into that vector; no
//! math happens outside it.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_history_csv};
pub use train::{
    lr_search, pretrain_masked, train, transcribe, EvalPoint, LrSearch, PretrainConfig,
    PretrainHistory, TrainConfig, TrainHistory, Transcriptions,
};

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::audio::AudioError;
use crate::corpus::CorpusError;
use crate::ctc::{CtcError, LogProbs, Vocab};
use crate::features::{FeatureConfig, FeatureError, FeatureNormalizer, Features};
use crate::seed;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("architecture/vocab mismatch: {0}")]
    ArchMismatch(String),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("no train utterance has a CTC-feasible label at the model frame rate")]
    NoFeasibleUtterances,
    #[error("training diverged (non-finite loss) at step {step}")]
    Divergence { step: usize },
    #[error("every learning rate in the grid diverged")]
    AllRatesDiverged,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a valid checkpoint ({detail})")]
    BadCheckpoint { path: std::path::PathBuf, detail: String },
}

/// Network shape: input context, hidden widths, and I/O dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// Frames of context on each side; input dim = (2k+1) * n_mels.
    pub context: usize,
    pub hidden: Vec<usize>,
    pub n_mels: usize,
    pub vocab_size: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        (2 * self.context + 1) * self.n_mels
    }

    /// (in, out) of every weight matrix, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.vocab_size));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Flat-vector layout: per layer, the weight block then the bias block.
    pub fn layout(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (l, (i, o)) in self.layer_dims().into_iter().enumerate() {
            blocks.push(ParamBlock { name: format!("w{l}"), rows: i, cols: o, offset });
            offset += i * o;
            blocks.push(ParamBlock { name: format!("b{l}"), rows: 1, cols: o, offset });
            offset += o;
        }
        blocks
    }
}

/// One named block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight_view<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &params[self.offset..self.offset + self.len()])
            .expect("layout matches vector")
    }

    fn bias_view<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from_shape(self.cols, &params[self.offset..self.offset + self.cols])
            .expect("layout matches vector")
    }

    fn weight_view_mut<'a>(&self, params: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape(
            (self.rows, self.cols),
            &mut params[self.offset..self.offset + self.len()],
        )
        .expect("layout matches vector")
    }
}

/// The trainable model plus everything needed to run it on raw audio
/// features: vocabulary, feature config, and the train-set normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub arch: Architecture,
    pub feature_config: FeatureConfig,
    pub vocab: Vocab,
    pub normalizer: FeatureNormalizer,
    pub params: Vec<f64>,
    pub init_seed: u64,
}

/// Seeded scaled-uniform initialization (Xavier limits), biases zero.
pub fn init_model(
    arch: Architecture,
    feature_config: FeatureConfig,
    vocab: Vocab,
    init_seed: u64,
) -> Result<AcousticModel, ModelError> {
    if vocab.size() != arch.vocab_size {
        return Err(ModelError::ArchMismatch(format!(
            "vocab has {} tokens, architecture expects {}",
            vocab.size(),
            arch.vocab_size
        )));
    }
    if feature_config.n_mels != arch.n_mels {
        return Err(ModelError::ArchMismatch(format!(
            "feature config has {} mel bins, architecture expects {}",
            feature_config.n_mels, arch.n_mels
        )));
    }
    if arch.hidden.is_empty() {
        return Err(ModelError::ArchMismatch("at least one hidden layer required".into()));
    }
    let mut params = vec![0.0; arch.param_count()];
    let mut rng = seed::rng(init_seed, "model.init", 0);
    for pair in arch.layout().chunks(2) {
        let w = &pair[0];
        let limit = (6.0 / (w.rows + w.cols) as f64).sqrt();
        for v in &mut params[w.offset..w.offset + w.len()] {
            *v = rng.random_range(-limit..limit);
        }
        // biases stay zero
    }
    let n_mels = arch.n_mels;
    Ok(AcousticModel {
        arch,
        feature_config,
        vocab,
        normalizer: FeatureNormalizer::identity(n_mels),
        params,
        init_seed,
    })
}

/// Activations kept for the backward pass.
pub struct ForwardTrace {
    /// Stacked, normalized input, T x input_dim.
    pub input: Array2<f64>,
    /// Post-tanh activations per hidden layer.
    pub hidden: Vec<Array2<f64>>,
    /// Log-softmax output, T x vocab_size.
    pub log_probs: Array2<f64>,
}

impl AcousticModel {
    /// Normalize features and stack each frame with its +-context
    /// neighbors (edges replicate the boundary frame).
    pub fn stack_input(&self, feats: &Features) -> Array2<f64> {
        let frames = feats.frames();
        let n_mels = self.arch.n_mels;
        let k = self.arch.context as isize;
        let mut normalized = feats.clone();
        self.normalizer.apply(&mut normalized);
        let mut x = Array2::<f64>::zeros((frames, self.arch.input_dim()));
        for t in 0..frames {
            for (slot, off) in (-k..=k).enumerate() {
                let src = (t as isize + off).clamp(0, frames as isize - 1) as usize;
                let dst = slot * n_mels;
                x.row_mut(t)
                    .slice_mut(ndarray::s![dst..dst + n_mels])
                    .assign(&normalized.matrix.row(src));
            }
        }
        x
    }

    /// Full forward pass with intermediate activations.
    pub fn forward_trace(&self, input: Array2<f64>) -> ForwardTrace {
        let layout = self.arch.layout();
        let n_layers = self.arch.hidden.len() + 1;
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
        for l in 0..n_layers {
            let below = if l == 0 { &input } else { &hidden[l - 1] };
            let w = layout[2 * l].weight_view(&self.params);
            let b = layout[2 * l + 1].bias_view(&self.params);
            let mut z = below.dot(&w);
            z += &b;
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
                hidden.push(z);
            } else {
                log_softmax_rows(&mut z);
                return ForwardTrace { input, hidden, log_probs: z };
            }
        }
        unreachable!("architectures always have an output layer")
    }

    /// Features to a validated per-frame log-probability lattice.
    pub fn forward(&self, feats: &Features) -> LogProbs {
        let x = self.stack_input(feats);
        let trace = self.forward_trace(x);
        LogProbs::from_log_softmax(trace.log_probs)
    }

    /// Accumulate parameter gradients given the loss gradient with respect
    /// to the output logits. `grad` must have `param_count` entries.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Array2<f64>, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.arch.param_count());
        let layout = self.arch.layout();
        let n_layers = self.arch.hidden.len() + 1;
        let mut delta = dlogits.clone();
        for l in (0..n_layers).rev() {
            let below: &Array2<f64> =
                if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
            {
                let wb = &layout[2 * l];
                let mut dw = wb.weight_view_mut(grad);
                let contribution = below.t().dot(&delta);
                dw += &contribution;
            }
            {
                let bb = &layout[2 * l + 1];
                let db = delta.sum_axis(Axis(0));
                let target = &mut grad[bb.offset..bb.offset + bb.cols];
                for (t, d) in target.iter_mut().zip(db.iter()) {
                    *t += d;
                }
            }
            if l > 0 {
                let w = layout[2 * l].weight_view(&self.params);
                let mut dh = delta.dot(&w.t());
                let h = &trace.hidden[l - 1];
                dh.zip_mut_with(h, |d, &a| *d *= 1.0 - a * a);
                delta = dh;
            }
        }
    }
}

fn log_softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
}

/// Adam with bias correction and decoupled weight decay over the flat
/// parameter vector. Deterministic: no state beyond the moment vectors,
/// updates applied in index order.
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(n: usize, weight_decay: f64) -> Self {
        Self { weight_decay, ..Self::new(n) }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Alphabet;
    use crate::ctc;
    use ndarray::Array2;

    pub fn tiny_arch(n_mels: usize, vocab_size: usize) -> Architecture {
        Architecture { context: 1, hidden: vec![8, 8], n_mels, vocab_size }
    }

    fn tiny_model(seed: u64) -> AcousticModel {
        let vocab = Vocab::from_alphabet(&Alphabet::from_str_chars("ab"));
        let cfg = FeatureConfig { n_mels: 4, ..Default::default() };
        init_model(tiny_arch(4, vocab.size()), cfg, vocab, seed).unwrap()
    }

    fn random_features(frames: usize, n_mels: usize, seed: u64) -> Features {
        let mut rng = seed::rng(seed, "model.test.features", 0);
        let data: Vec<f64> = (0..frames * n_mels).map(|_| rng.random_range(-1.0..1.0)).collect();
        Features {
            matrix: Array2::from_shape_vec((frames, n_mels), data).unwrap(),
            frame_shift_ms: 10.0,
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        assert_eq!(tiny_model(5).params, tiny_model(5).params);
        assert_ne!(tiny_model(5).params, tiny_model(6).params);
    }

    #[test]
    fn init_rejects_mismatched_vocab() {
        let vocab = Vocab::from_alphabet(&Alphabet::from_str_chars("ab"));
        let cfg = FeatureConfig { n_mels: 4, ..Default::default() };
        let arch = Architecture { context: 1, hidden: vec![8], n_mels: 4, vocab_size: 99 };
        assert!(matches!(init_model(arch, cfg, vocab, 0), Err(ModelError::ArchMismatch(_))));
    }

    #[test]
    fn forward_rows_are_normalized_log_probs() {
        let model = tiny_model(1);
        let feats = random_features(98, 4, 2);
        let lp = model.forward(&feats);
        assert_eq!(lp.frames(), 98);
        assert_eq!(lp.vocab_size(), model.vocab.size());
        for row in lp.view().rows() {
            let lse: f64 = {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
            };
            assert!(lse.abs() < 1e-9);
        }
    }

    #[test]
    fn parameter_count_matches_layout() {
        let model = tiny_model(3);
        let last = model.arch.layout().last().cloned().unwrap();
        assert_eq!(last.offset + last.len(), model.params.len());
        assert_eq!(model.params.len(), model.arch.param_count());
    }

    #[test]
    fn gradient_matches_finite_differences_end_to_end() {
        // full chain: stacked features -> tanh layers -> log-softmax -> CTC
        let mut model = tiny_model(7);
        assert!(model.params.len() < 2000, "meant to be a tiny model");
        let feats = random_features(6, 4, 3);
        let label = model.vocab.encode("ab").unwrap();

        let loss_of = |m: &AcousticModel| -> f64 {
            let lp = m.forward(&feats);
            ctc::ctc_loss(&lp, &label).unwrap().0
        };

        let x = model.stack_input(&feats);
        let trace = model.forward_trace(x);
        let lp = LogProbs::from_log_softmax(trace.log_probs.clone());
        let (_, dlogits) = ctc::ctc_loss(&lp, &label).unwrap();
        let mut grad = vec![0.0; model.params.len()];
        model.backward(&trace, &dlogits, &mut grad);

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for i in (0..model.params.len()).step_by(7) {
            let orig = model.params[i];
            model.params[i] = orig + eps;
            let up = loss_of(&model);
            model.params[i] = orig - eps;
            let down = loss_of(&model);
            model.params[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            max_rel = max_rel.max((fd - grad[i]).abs() / denom);
        }
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }

    #[test]
    fn adam_with_zero_gradients_leaves_params_unchanged() {
        let mut model = tiny_model(9);
        let before = model.params.clone();
        let grad = vec![0.0; before.len()];
        let mut adam = Adam::new(before.len());
        for _ in 0..3 {
            adam.step(&mut model.params, &grad, 1e-3);
        }
        assert_eq!(model.params, before);
    }
}
