//! Trains on the synthetic cue task and reports held-out quality.
//!
//! Usage: cargo run --example cue_task -- [seed] [steps] [sgd|adam] [lr]

use std::time::Instant;

use metaqa_core::candidates::Condition;
use metaqa_core::heads::OptimizerKind;
use metaqa_core::synth::{synth_generate, SynthConfig};
use metaqa_core::train::{evaluate_at, train, Dataset, Preset};

fn split(n: usize, seed: u64, prefix: &str) -> Dataset {
    let d = synth_generate(&SynthConfig { n_questions: n, seed, id_prefix: prefix.into(), ..SynthConfig::default() })
        .expect("valid config");
    Dataset { records: d.records, gold: d.gold }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(800);
    let kind = match args.get(3).map(String::as_str) {
        Some("sgd") => OptimizerKind::Sgd,
        _ => OptimizerKind::Adam,
    };
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(if kind == OptimizerKind::Adam { 1e-3 } else { 0.05 });

    let train_set = split(2000, 1000 + seed, "t");
    let dev = split(500, 2000 + seed, "d");
    let test = split(500, 3000 + seed, "e");

    let mut config = Preset::AnswerOnly.config();
    config.answerer.condition = Condition::Context;
    config.answerer.window = 2;
    config.seed = seed;
    config.steps = steps;
    config.pretrain_steps = 0;
    config.eval_every = 100;
    config.optimizer.kind = kind;
    config.optimizer.lr = lr;

    let t0 = Instant::now();
    let out = train(&train_set, Some(&dev), &config, None).expect("training succeeds");
    for row in &out.metrics {
        println!("{}", row.csv());
    }
    let threshold = out.checkpoint.threshold.expect("tuned on dev").0;
    let answerer = out.checkpoint.answerer();
    let report = evaluate_at(&answerer, &test, threshold, config.matcher).expect("decodes");
    println!("elapsed {:.1}s threshold {threshold:.4} test {:?}", t0.elapsed().as_secs_f64(), report);
}
