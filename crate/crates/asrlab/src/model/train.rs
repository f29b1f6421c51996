//! Training loop with gradient accumulation and dev-WER checkpoint
//! selection, learning-rate grid search, transcription, and the
//! masked-frame continued-pretraining analog.

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Adam, AcousticModel, ModelError};
use crate::audio::AudioSource;
use crate::corpus::Corpus;
use crate::ctc::{self, LogProbs};
use crate::eval;
use crate::features::{FeatureExtractor, FeatureNormalizer, Features};
use crate::seed;

/// Optimization hyperparameters. Effective batch = `batch_size *
/// grad_accum_steps` utterances per optimizer update.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Optimizer updates, not utterance visits.
    pub max_steps: usize,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub eval_interval_steps: usize,
    /// Non-improving dev evaluations tolerated before stopping early.
    pub patience: usize,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
    /// Amplitude of seeded uniform noise added to normalized inputs during
    /// training visits; a cheap stand-in for more data.
    pub input_noise: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            max_steps: 300,
            batch_size: 4,
            grad_accum_steps: 2,
            eval_interval_steps: 25,
            patience: 6,
            weight_decay: 1e-3,
            input_noise: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("learning_rate", self.learning_rate > 0.0),
            ("max_steps", self.max_steps > 0),
            ("batch_size", self.batch_size > 0),
            ("grad_accum_steps", self.grad_accum_steps > 0),
            ("eval_interval_steps", self.eval_interval_steps > 0),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One dev evaluation during training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub train_loss: f64,
    pub dev_wer: f64,
}

/// Per-eval records plus the best-checkpoint pointer
/// (argmin dev WER, ties resolved toward the earliest step).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub evals: Vec<EvalPoint>,
    pub best_step: usize,
    pub best_dev_wer: f64,
    pub trained_utterances: usize,
    pub dropped_infeasible: usize,
}

struct PreparedUtt {
    features: Features,
    label: Vec<usize>,
}

fn prepare_corpus(
    model: &AcousticModel,
    corpus: &Corpus,
    audio: &dyn AudioSource,
    drop_infeasible: bool,
) -> Result<(Vec<PreparedUtt>, usize), ModelError> {
    let extractor = FeatureExtractor::new(model.feature_config.clone(), corpus.sample_rate)?;
    let mut prepared = Vec::with_capacity(corpus.len());
    let mut dropped = 0;
    for utt in &corpus.utterances {
        let wav = audio.load(utt)?;
        let features = extractor.logmel(&wav)?;
        let label = model.vocab.encode(&utt.text)?;
        if ctc::min_frames(&label) > features.frames() {
            if drop_infeasible {
                warn!(
                    "dropping {}: label needs {} frames, audio has {}",
                    utt.id,
                    ctc::min_frames(&label),
                    features.frames()
                );
                dropped += 1;
                continue;
            }
            return Err(ModelError::Ctc(ctc::CtcError::InfeasibleAlignment {
                needed: ctc::min_frames(&label),
                frames: features.frames(),
            }));
        }
        prepared.push(PreparedUtt { features, label });
    }
    Ok((prepared, dropped))
}

fn dev_wer_of(model: &AcousticModel, dev_feats: &[Features], dev_refs: &[String]) -> f64 {
    let hyps: Vec<String> = dev_feats
        .iter()
        .map(|f| {
            let lp = model.forward(f);
            ctc::greedy_decode_text(&lp, &model.vocab)
        })
        .collect();
    eval::wer(dev_refs, &hyps).map(|b| b.wer()).unwrap_or(f64::INFINITY)
}

/// Train with CTC on `train`, selecting the checkpoint with the lowest dev
/// WER. Fully deterministic given the config seed: epoch shuffles, batch
/// grouping, and gradient reduction order are all fixed.
///
/// The feature normalizer is fit on the training corpus only and stored in
/// the returned model. Utterances whose labels cannot align at the model
/// frame rate are dropped with a warning.
pub fn train(
    model: &AcousticModel,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    audio: &dyn AudioSource,
    cfg: &TrainConfig,
) -> Result<(AcousticModel, TrainHistory), ModelError> {
    cfg.validate()?;
    if train_corpus.is_empty() {
        return Err(ModelError::EmptyCorpus("train"));
    }
    if dev_corpus.is_empty() {
        return Err(ModelError::EmptyCorpus("dev"));
    }

    let mut model = model.clone();
    // normalization statistics come from the training subset only;
    // features stay raw and stack_input applies the normalizer per visit
    let (train_set, dropped) = prepare_corpus(&model, train_corpus, audio, true)?;
    if train_set.is_empty() {
        return Err(ModelError::NoFeasibleUtterances);
    }
    model.normalizer = FeatureNormalizer::fit(train_set.iter().map(|p| &p.features));

    let (dev_set, _) = prepare_corpus(&model, dev_corpus, audio, false)?;
    let dev_feats: Vec<Features> = dev_set.into_iter().map(|p| p.features).collect();
    let dev_refs: Vec<String> = dev_corpus.utterances.iter().map(|u| u.text.clone()).collect();

    let group = cfg.batch_size * cfg.grad_accum_steps;
    let mut adam = Adam::with_weight_decay(model.params.len(), cfg.weight_decay);
    let mut grad = vec![0.0f64; model.params.len()];
    let mut history = TrainHistory {
        trained_utterances: train_set.len(),
        dropped_infeasible: dropped,
        best_dev_wer: f64::INFINITY,
        ..Default::default()
    };

    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0u64;
    let mut cursor = 0usize;
    let next_index = |epoch: &mut u64, cursor: &mut usize, order: &mut Vec<usize>| -> usize {
        if *cursor >= order.len() {
            *order = (0..train_set.len()).collect();
            order.shuffle(&mut seed::rng(cfg.seed, "train.shuffle", *epoch));
            *epoch += 1;
            *cursor = 0;
        }
        let i = order[*cursor];
        *cursor += 1;
        i
    };

    let mut best_params = model.params.clone();
    let mut loss_acc = 0.0f64;
    let mut loss_count = 0usize;
    let mut evals_since_best = 0usize;

    for step in 1..=cfg.max_steps {
        grad.fill(0.0);
        for g in 0..group {
            let idx = next_index(&mut epoch, &mut cursor, &mut order);
            let item = &train_set[idx];
            let mut x = model.stack_input(&item.features);
            if cfg.input_noise > 0.0 {
                let mut rng =
                    seed::rng(cfg.seed, "train.noise", ((step as u64) << 24) | g as u64);
                for v in x.iter_mut() {
                    *v += cfg.input_noise * rng.random_range(-1.0..1.0);
                }
            }
            let trace = model.forward_trace(x);
            let lp = LogProbs::from_log_softmax(trace.log_probs.clone());
            let (loss, dlogits) = ctc::ctc_loss(&lp, &item.label)?;
            let norm = loss / item.label.len().max(1) as f64;
            if !norm.is_finite() {
                return Err(ModelError::Divergence { step });
            }
            loss_acc += norm;
            loss_count += 1;
            let scale = 1.0 / (group as f64 * item.label.len().max(1) as f64);
            let scaled = dlogits.mapv(|g| g * scale);
            model.backward(&trace, &scaled, &mut grad);
        }
        adam.step(&mut model.params, &grad, cfg.learning_rate);
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::Divergence { step });
        }

        if step % cfg.eval_interval_steps == 0 || step == cfg.max_steps {
            let dev_wer = dev_wer_of(&model, &dev_feats, &dev_refs);
            let train_loss = if loss_count > 0 { loss_acc / loss_count as f64 } else { 0.0 };
            history.evals.push(EvalPoint { step, train_loss, dev_wer });
            loss_acc = 0.0;
            loss_count = 0;
            if dev_wer < history.best_dev_wer {
                history.best_dev_wer = dev_wer;
                history.best_step = step;
                best_params.copy_from_slice(&model.params);
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
                if evals_since_best >= cfg.patience {
                    break;
                }
            }
        }
    }

    model.params = best_params;
    Ok((model, history))
}

/// Grid-search outcome: the winning rate with its model and history, plus
/// the dev WER of every rate tried (diverged runs record infinity).
pub struct LrSearch {
    pub best_rate: f64,
    pub best_model: AcousticModel,
    pub best_history: TrainHistory,
    pub per_rate: Vec<(f64, f64)>,
}

/// Train one model per learning rate with identical seeds and budgets;
/// return the argmin dev WER, breaking ties toward the smaller rate.
pub fn lr_search(
    model: &AcousticModel,
    grid: &[f64],
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    audio: &dyn AudioSource,
    cfg: &TrainConfig,
) -> Result<LrSearch, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::InvalidConfig("empty learning-rate grid".into()));
    }
    let mut per_rate = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, AcousticModel, TrainHistory)> = None;
    for &rate in grid {
        let run_cfg = TrainConfig { learning_rate: rate, ..cfg.clone() };
        match train(model, train_corpus, dev_corpus, audio, &run_cfg) {
            Ok((m, h)) => {
                per_rate.push((rate, h.best_dev_wer));
                let better = match &best {
                    None => true,
                    Some((r, _, bh)) => {
                        h.best_dev_wer < bh.best_dev_wer
                            || (h.best_dev_wer == bh.best_dev_wer && rate < *r)
                    }
                };
                if better {
                    best = Some((rate, m, h));
                }
            }
            Err(ModelError::Divergence { .. }) => {
                per_rate.push((rate, f64::INFINITY));
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((best_rate, best_model, best_history)) => {
            Ok(LrSearch { best_rate, best_model, best_history, per_rate })
        }
        None => Err(ModelError::AllRatesDiverged),
    }
}

/// Greedy transcriptions for a corpus. Per-utterance failures (unreadable
/// audio, too-short waveforms) are collected; the run continues.
#[derive(Debug, Default)]
pub struct Transcriptions {
    pub hyps: Vec<(String, String)>,
    pub failures: Vec<(String, String)>,
}

pub fn transcribe(
    model: &AcousticModel,
    corpus: &Corpus,
    audio: &dyn AudioSource,
) -> Result<Transcriptions, ModelError> {
    let extractor = FeatureExtractor::new(model.feature_config.clone(), corpus.sample_rate)?;
    let mut out = Transcriptions::default();
    for utt in &corpus.utterances {
        let result = audio
            .load(utt)
            .map_err(ModelError::from)
            .and_then(|wav| extractor.logmel(&wav).map_err(ModelError::from))
            .map(|f| {
                let lp = model.forward(&f);
                ctc::greedy_decode_text(&lp, &model.vocab)
            });
        match result {
            Ok(text) => out.hyps.push((utt.id.clone(), text)),
            Err(e) => {
                warn!("transcription of {} failed: {e}", utt.id);
                out.failures.push((utt.id.clone(), e.to_string()));
            }
        }
    }
    Ok(out)
}

/// Masked-frame pretraining settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainConfig {
    pub train: TrainConfig,
    /// Fraction of frames masked per utterance.
    pub mask_ratio: f64,
    /// Contiguous span length, in frames.
    pub mask_span: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 1e-3,
                max_steps: 400,
                eval_interval_steps: 50,
                ..TrainConfig::default()
            },
            mask_ratio: 0.3,
            mask_span: 10,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PretrainHistory {
    /// (step, reconstruction loss) at each report interval.
    pub losses: Vec<(usize, f64)>,
}

/// Self-supervised masked-frame reconstruction on unlabeled audio.
///
/// Seeded contiguous frame spans are zeroed in the input; a temporary
/// linear head regresses the masked normalized log-mel frames from the
/// last hidden layer under an L2 loss. The trained hidden layers are
/// returned as the encoder initialization for `train`; the head is
/// discarded and the output layer keeps its fresh initialization.
pub fn pretrain_masked(
    model: &AcousticModel,
    unlabeled: &Corpus,
    audio: &dyn AudioSource,
    cfg: &PretrainConfig,
) -> Result<(AcousticModel, PretrainHistory), ModelError> {
    cfg.train.validate()?;
    if unlabeled.is_empty() {
        return Err(ModelError::EmptyCorpus("unlabeled"));
    }
    if !(0.0..=1.0).contains(&cfg.mask_ratio) {
        return Err(ModelError::InvalidConfig(format!(
            "mask_ratio {} outside [0, 1]",
            cfg.mask_ratio
        )));
    }
    if cfg.mask_span == 0 {
        return Err(ModelError::InvalidConfig("mask_span must be positive".into()));
    }

    let mut model = model.clone();
    let extractor = FeatureExtractor::new(model.feature_config.clone(), unlabeled.sample_rate)?;
    let mut feats = Vec::with_capacity(unlabeled.len());
    for utt in &unlabeled.utterances {
        let wav = audio.load(utt)?;
        feats.push(extractor.logmel(&wav)?);
    }
    model.normalizer = FeatureNormalizer::fit(feats.iter());

    let n_mels = model.arch.n_mels;
    let last_hidden = *model.arch.hidden.last().expect("validated at init");
    let head_len = last_hidden * n_mels + n_mels;
    let mut head = vec![0.0f64; head_len];
    let limit = (6.0 / (last_hidden + n_mels) as f64).sqrt();
    let mut head_rng = seed::rng(cfg.train.seed, "pretrain.head", 0);
    for v in head.iter_mut().take(last_hidden * n_mels) {
        *v = head_rng.random_range(-limit..limit);
    }

    let group = cfg.train.batch_size * cfg.train.grad_accum_steps;
    let mut adam = Adam::new(model.params.len());
    let mut adam_head = Adam::new(head_len);
    let mut grad = vec![0.0f64; model.params.len()];
    let mut head_grad = vec![0.0f64; head_len];
    let mut history = PretrainHistory::default();

    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0u64;
    let mut cursor = 0usize;
    let mut loss_acc = 0.0;
    let mut loss_count = 0usize;

    for step in 1..=cfg.train.max_steps {
        grad.fill(0.0);
        head_grad.fill(0.0);
        let mut group_had_masks = false;
        for g in 0..group {
            if cursor >= order.len() {
                order = (0..feats.len()).collect();
                order.shuffle(&mut seed::rng(cfg.train.seed, "pretrain.shuffle", epoch));
                epoch += 1;
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            let f = &feats[idx];
            let frames = f.frames();

            let mut mask = vec![false; frames];
            let target_masked = (cfg.mask_ratio * frames as f64).round() as usize;
            let mut rng = seed::rng(
                cfg.train.seed,
                "pretrain.mask",
                (step as u64) << 32 | (g as u64),
            );
            let mut masked = 0usize;
            let mut guard = 0usize;
            while masked < target_masked && guard < 10 * frames {
                let start = rng.random_range(0..frames);
                for t in start..(start + cfg.mask_span).min(frames) {
                    if !mask[t] {
                        mask[t] = true;
                        masked += 1;
                    }
                }
                guard += 1;
            }
            if masked == 0 {
                continue;
            }
            group_had_masks = true;

            // normalized target frames, then zero the masked ones in the input
            let mut normalized = f.clone();
            model.normalizer.apply(&mut normalized);
            let target = normalized.matrix.clone();
            for (t, &m) in mask.iter().enumerate() {
                if m {
                    normalized.matrix.row_mut(t).fill(0.0);
                }
            }
            let x = stack_prestacked(&model, &normalized.matrix);
            let trace = model.forward_trace(x);
            let h_last = trace.hidden.last().unwrap_or(&trace.input);

            let wb = head_weight_view(&head, last_hidden, n_mels);
            let mut pred = h_last.dot(&wb);
            for mut row in pred.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += head[last_hidden * n_mels + j];
                }
            }

            let denom = (masked * n_mels) as f64 * group as f64;
            let mut dpred = Array2::<f64>::zeros(pred.raw_dim());
            let mut utt_loss = 0.0;
            for (t, &m) in mask.iter().enumerate() {
                if !m {
                    continue;
                }
                for j in 0..n_mels {
                    let d = pred[[t, j]] - target[[t, j]];
                    utt_loss += d * d;
                    dpred[[t, j]] = 2.0 * d / denom;
                }
            }
            if !utt_loss.is_finite() {
                return Err(ModelError::Divergence { step });
            }
            loss_acc += utt_loss / (masked * n_mels) as f64;
            loss_count += 1;

            // head gradients
            let dw = h_last.t().dot(&dpred);
            for (dst, src) in head_grad[..last_hidden * n_mels].iter_mut().zip(dw.iter()) {
                *dst += src;
            }
            for j in 0..n_mels {
                head_grad[last_hidden * n_mels + j] += dpred.column(j).sum();
            }
            // encoder gradients: route dpred through the head into the last
            // hidden layer, then reuse the usual backward pass with a zero
            // output-layer delta
            let dh_last = dpred.dot(&wb.t());
            backward_hidden_only(&model, &trace, dh_last, &mut grad);
        }
        if group_had_masks {
            adam.step(&mut model.params, &grad, cfg.train.learning_rate);
            adam_head.step(&mut head, &head_grad, cfg.train.learning_rate);
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(ModelError::Divergence { step });
            }
        }
        if step % cfg.train.eval_interval_steps == 0 || step == cfg.train.max_steps {
            let mean = if loss_count > 0 { loss_acc / loss_count as f64 } else { 0.0 };
            history.losses.push((step, mean));
            loss_acc = 0.0;
            loss_count = 0;
        }
    }

    Ok((model, history))
}

fn head_weight_view(head: &[f64], rows: usize, cols: usize) -> ndarray::ArrayView2<'_, f64> {
    ndarray::ArrayView2::from_shape((rows, cols), &head[..rows * cols]).expect("head layout")
}

/// Stack an already-normalized feature matrix with context.
fn stack_prestacked(model: &AcousticModel, normalized: &Array2<f64>) -> Array2<f64> {
    let frames = normalized.nrows();
    let n_mels = model.arch.n_mels;
    let k = model.arch.context as isize;
    let mut x = Array2::<f64>::zeros((frames, model.arch.input_dim()));
    for t in 0..frames {
        for (slot, off) in (-k..=k).enumerate() {
            let src = (t as isize + off).clamp(0, frames as isize - 1) as usize;
            let dst = slot * n_mels;
            x.row_mut(t)
                .slice_mut(ndarray::s![dst..dst + n_mels])
                .assign(&normalized.row(src));
        }
    }
    x
}

/// Backward pass that starts from a gradient on the *last hidden* layer
/// instead of the logits; the output layer receives no gradient.
fn backward_hidden_only(
    model: &AcousticModel,
    trace: &super::ForwardTrace,
    dh_last: Array2<f64>,
    grad: &mut [f64],
) {
    let layout = model.arch.layout();
    let n_hidden = model.arch.hidden.len();
    let mut delta = dh_last;
    // delta is w.r.t. post-activation output of hidden layer n_hidden-1
    for l in (0..n_hidden).rev() {
        let h = &trace.hidden[l];
        let mut dz = delta;
        dz.zip_mut_with(h, |d, &a| *d *= 1.0 - a * a);
        let below: &Array2<f64> = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
        {
            let wb = &layout[2 * l];
            let mut dw = wb.weight_view_mut(grad);
            dw += &below.t().dot(&dz);
        }
        {
            let bb = &layout[2 * l + 1];
            let db = dz.sum_axis(ndarray::Axis(0));
            for (t, d) in grad[bb.offset..bb.offset + bb.cols].iter_mut().zip(db.iter()) {
                *t += d;
            }
        }
        if l > 0 {
            let w = layout[2 * l].weight_view(&model.params);
            delta = dz.dot(&w.t());
        } else {
            delta = dz; // consumed; keeps the borrow checker simple
        }
    }
}
