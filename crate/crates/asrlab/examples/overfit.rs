//! Scratch: single-utterance overfit sanity run.

use asrlab::corpus::Corpus;
use asrlab::ctc::Vocab;
use asrlab::features::FeatureConfig;
use asrlab::model::{init_model, train, Architecture, TrainConfig};
use asrlab::synth::{gen_toy_language, ToyLanguageSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let max_steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let hidden: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(128);
    let n_utts: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);

    let spec = ToyLanguageSpec { target_minutes: 2.0, ..Default::default() };
    let toy = gen_toy_language(&spec).unwrap();
    let one = Corpus {
        utterances: toy.corpus.utterances[..n_utts].to_vec(),
        alphabet: toy.corpus.alphabet.clone(),
        sample_rate: toy.corpus.sample_rate,
    };
    println!("texts: {:?}", one.utterances.iter().map(|u| &u.text).collect::<Vec<_>>());

    let vocab = Vocab::from_alphabet(&toy.corpus.alphabet);
    let fc = FeatureConfig::default();
    let arch = Architecture {
        context: 4,
        hidden: vec![hidden, hidden],
        n_mels: fc.n_mels,
        vocab_size: vocab.size(),
    };
    let model = init_model(arch, fc, vocab, 7).unwrap();
    let cfg = TrainConfig {
        learning_rate: lr,
        max_steps,
        batch_size: 1,
        grad_accum_steps: 1,
        eval_interval_steps: 100,
        patience: usize::MAX,
        seed: 3,
    };
    let t = std::time::Instant::now();
    let (m, h) = train(&model, &one, &one, &toy.audio, &cfg).unwrap();
    for e in &h.evals {
        println!("step {:5}  loss {:8.4}  dev_wer {:.3}", e.step, e.train_loss, e.dev_wer);
    }
    println!("best dev_wer {:.3} @ {} in {:?}", h.best_dev_wer, h.best_step, t.elapsed());
    let out = asrlab::model::transcribe(&m, &one, &toy.audio).unwrap();
    println!("hyp: {:?}", out.hyps.iter().map(|(_, h)| h).collect::<Vec<_>>());
}
