//! Scratch calibration harness (not part of the test suite).

use std::time::Instant;

use asrlab::corpus::{split_corpus, subset_by_duration, SplitSpec};
use asrlab::ctc::Vocab;
use asrlab::features::FeatureConfig;
use asrlab::model::{init_model, train, Architecture, TrainConfig};
use asrlab::synth::{gen_toy_language, ToyLanguageSpec};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale: f64 = arg(&args, 1, 2.5);
    let max_steps: usize = arg(&args, 2, 800);
    let lr: f64 = arg(&args, 3, 3e-3);
    let batch: usize = arg(&args, 4, 4);
    let accum: usize = arg(&args, 5, 1);
    let hidden: usize = arg(&args, 6, 128);
    let context: usize = arg(&args, 7, 4);
    let seed: u64 = arg(&args, 8, 0);
    let verbose: usize = arg(&args, 9, 0);
    let noise_db: f64 = arg(&args, 10, -35.0);
    let shift_spread: f64 = arg(&args, 11, 1.0); // 1.0 keeps defaults, 0.0 centers at 1.0
    let alpha_len: usize = arg(&args, 12, 15);

    let mut spec = ToyLanguageSpec {
        target_minutes: 240.0 * scale / 60.0,
        seed,
        noise_floor_db: noise_db,
        ..Default::default()
    };
    spec.alphabet = spec.alphabet.chars().take(alpha_len).collect();
    for s in &mut spec.speakers {
        s.formant_shift = 1.0 + (s.formant_shift - 1.0) * shift_spread;
    }
    let t0 = Instant::now();
    let toy = gen_toy_language(&spec).unwrap();
    println!(
        "gen: {} utts, {:.1} min in {:?}",
        toy.corpus.len(),
        toy.corpus.total_duration_min(),
        t0.elapsed()
    );

    let (train_c, dev, test) =
        split_corpus(&toy.corpus, &SplitSpec::new(0.8, 0.1, 0.1, seed ^ 1)).unwrap();
    let units = |u: f64| u * scale / 60.0;
    let targets: Vec<f64> = [96.0, 48.0, 24.0].iter().map(|&u| units(u)).collect();
    let subsets = subset_by_duration(&train_c, &targets, seed ^ 2).unwrap();

    let vocab = Vocab::from_alphabet(&toy.corpus.alphabet);
    let fc = FeatureConfig::default();
    let arch = Architecture {
        context,
        hidden: vec![hidden, hidden],
        n_mels: fc.n_mels,
        vocab_size: vocab.size(),
    };
    let model = init_model(arch, fc, vocab, seed ^ 3).unwrap();
    println!("params: {}", model.params.len());

    let wd: f64 = arg(&args, 13, 1e-3);
    let cfg = TrainConfig {
        learning_rate: lr,
        max_steps,
        batch_size: batch,
        grad_accum_steps: accum,
        eval_interval_steps: 50,
        patience: 8,
        weight_decay: wd,
        input_noise: arg(&args, 15, 0.2),
        seed: seed ^ 4,
    };

    let only: usize = arg(&args, 14, 9);
    let conditions: Vec<(&str, &asrlab::corpus::Corpus)> = vec![
        ("24u", &subsets[2]),
        ("48u", &subsets[1]),
        ("96u", &subsets[0]),
        ("192u", &train_c),
    ];
    for (i, (name, corpus)) in conditions.into_iter().enumerate() {
        if only != 9 && i != only {
            continue;
        }
        let t = Instant::now();
        let (m, h) = train(&model, corpus, &dev, &toy.audio, &cfg).unwrap();
        let out = asrlab::model::transcribe(&m, &test, &toy.audio).unwrap();
        let refs: Vec<String> = test.utterances.iter().map(|u| u.text.clone()).collect();
        let hyps: Vec<String> = out.hyps.iter().map(|(_, h)| h.clone()).collect();
        let test_wer = asrlab::eval::wer(&refs, &hyps).unwrap().wer();
        if verbose > 0 {
            for e in &h.evals {
                println!("  step {:5}  loss {:8.4}  dev_wer {:.3}", e.step, e.train_loss, e.dev_wer);
            }
        }
        let test_cer = asrlab::eval::cer(&refs, &hyps).unwrap().wer();
        if verbose > 1 {
            for (r, h) in refs.iter().zip(&hyps).take(3) {
                println!("  ref: {r}\n  hyp: {h}");
            }
        }
        println!(
            "{name}: {} utts ({:.1} min), dev {:.3} @{}, test {:.3} (cer {:.3}), {:?}",
            corpus.len(),
            corpus.total_duration_min(),
            h.best_dev_wer,
            h.best_step,
            test_wer,
            test_cer,
            t.elapsed()
        );
    }
}
