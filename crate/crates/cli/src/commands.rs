use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use metaqa_core::decoder::{scored_questions, tune_threshold, DecodeError, Prediction};
use metaqa_core::evaluation::{
    bootstrap_compare, breakdown_from_counts, breakdown_report, nq_score, ActionCounts, BootstrapSubject,
    LabeledEpisode, PredictedAnswer,
};
use metaqa_core::heads::OptimizerKind;
use metaqa_core::synth::{synth_generate, SynthConfig};
use metaqa_core::train::{dev_report, train as run_training, Dataset, TrainConfig, TrainError};
use metaqa_play::session::Corpus;
use metaqa_play::store::{read_jsonl, IndexEntry, INDEX_FILE};
use metaqa_play::{Backends, Service, Session, Store};
use serde_json::{json, Value};

use crate::files::Paths;
use crate::{
    invalid, runtime, CliError, EvalArgs, Metric, OptimizerArg, PredictArgs, ReportArgs, ReportFormat, ServeArgs,
    SynthArgs, TrainArgs, TuneArgs,
};

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn emit(paths: &Paths, out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => paths.write(p, text).map(|_| ()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) | TrainError::MissingGold(_) | TrainError::Empty | TrainError::Model(_) => invalid(e),
        TrainError::Sample(_) => invalid(e),
        TrainError::Decode(_) | TrainError::Io { .. } | TrainError::Diverged { .. } => runtime(e),
    }
}

fn decode_error(e: DecodeError) -> CliError {
    match e {
        DecodeError::MissingRecord(_) | DecodeError::MissingGold(_) | DecodeError::ScoreCount { .. } => invalid(e),
        DecodeError::EmptyDev | DecodeError::InvalidK { .. } => invalid(e),
        DecodeError::NonFiniteScore | DecodeError::Model(_) => runtime(e),
    }
}

pub fn synth(paths: &Paths, a: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        n_questions: a.questions,
        vocab_size: a.vocab,
        m: a.m,
        context_len: a.context,
        p_cue: a.p_cue,
        answerable_fraction: a.answerable,
        seed: a.seed,
        id_prefix: a.prefix,
    };
    let data = synth_generate(&config).map_err(invalid)?;
    let mbest = paths.write(&a.mbest, &data.mbest_jsonl())?;
    let gold = paths.write(&a.gold, &data.gold_jsonl())?;
    let answerable = data.correct.iter().filter(|c| c.is_some()).count();
    print_json(&json!({
        "questions": data.records.len(),
        "answerable": answerable,
        "mbest": mbest,
        "gold": gold,
    }));
    Ok(())
}

fn resolve_config(paths: &Paths, a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let overlay = match &a.config {
        Some(p) => {
            let text = paths.read_string(p)?;
            Some(serde_json::from_str::<Value>(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut c = TrainConfig::layered(a.preset, overlay.as_ref()).map_err(invalid)?;
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.steps {
        c.steps = v;
    }
    if let Some(v) = a.pretrain_steps {
        c.pretrain_steps = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.lr {
        c.optimizer.lr = v;
    }
    if let Some(v) = a.optimizer {
        c.optimizer.kind = match v {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    if let Some(v) = a.eval_every {
        c.eval_every = v;
    }
    if let Some(v) = a.checkpoint_every {
        c.checkpoint_every = v;
    }
    if let Some(v) = a.condition {
        c.answerer.condition = v;
    }
    if let Some(v) = a.window {
        c.answerer.window = v;
    }
    if let Some(v) = a.m {
        c.answerer.m = v;
    }
    if let Some(v) = a.k {
        c.answerer.k = v;
    }
    c.validate().map_err(invalid)?;
    Ok(c)
}

pub fn train(paths: &Paths, a: TrainArgs) -> Result<(), CliError> {
    let config = resolve_config(paths, &a)?;
    let train_set = Dataset { records: paths.mbest(&a.mbest)?, gold: paths.gold(&a.gold)? };
    let dev = match (&a.dev_mbest, &a.dev_gold) {
        (Some(m), Some(g)) => Some(Dataset { records: paths.mbest(m)?, gold: paths.gold(g)? }),
        _ => None,
    };
    let out = paths.resolve(&a.out);
    paths.write(&out.join("config.json"), &(serde_json::to_string_pretty(&config).expect("config serializes") + "\n"))?;
    let outcome = run_training(&train_set, dev.as_ref(), &config, Some(&out)).map_err(train_error)?;
    let mut ckpt = outcome.checkpoint;
    let mut tuned_on = "dev";
    if ckpt.threshold.is_none() {
        let (report, _) = dev_report(&ckpt.answerer(), &train_set, config.matcher).map_err(decode_error)?;
        ckpt.threshold = Some(report.threshold);
        tuned_on = "train";
    }
    let model = out.join("model.json");
    ckpt.save(&model).map_err(|e| runtime(format!("{}: {e}", model.display())))?;
    print_json(&json!({
        "model": model,
        "steps": ckpt.step,
        "threshold": ckpt.threshold,
        "threshold_tuned_on": tuned_on,
        "dev": outcome.dev,
        "checkpoints": outcome.checkpoints_written,
    }));
    Ok(())
}

pub fn predict(paths: &Paths, a: PredictArgs) -> Result<(), CliError> {
    let ckpt = paths.checkpoint(&a.model)?;
    let mut answerer = ckpt.answerer();
    if let Some(p) = a.preset {
        let s = p.config().answerer;
        if s.variant != answerer.settings.variant {
            return Err(invalid(format!("preset {p} does not match the model's variant")));
        }
        answerer.settings.m = s.m;
        answerer.settings.k = s.k;
    }
    if let Some(m) = a.m {
        answerer.settings.m = m;
    }
    if let Some(k) = a.k {
        answerer.settings.k = k;
    }
    answerer.settings.validate().map_err(invalid)?;
    let threshold = a
        .threshold
        .or(ckpt.threshold)
        .ok_or_else(|| invalid("the model has no tuned threshold; pass --threshold"))?;
    let records = paths.mbest(&a.mbest)?;
    let preds = answerer.predict_all(&records, threshold.0).map_err(decode_error)?;
    let text: String = preds.iter().map(|p| p.to_json_line() + "\n").collect();
    let out = paths.write(&a.out, &text)?;
    let answered = preds.iter().filter(|p| p.answer_index().is_some()).count();
    print_json(&json!({ "predictions": out, "questions": preds.len(), "answered": answered, "threshold": threshold }));
    Ok(())
}

pub fn eval(paths: &Paths, a: EvalArgs) -> Result<(), CliError> {
    let gold = paths.gold(&a.gold)?;
    let matcher = a.matcher.into();
    let answers: Option<Vec<PredictedAnswer>> = match &a.pred {
        Some(p) => Some(paths.predictions(p)?.iter().map(Prediction::to_answer).collect()),
        None => None,
    };
    let report = match a.metric {
        Metric::Nq => {
            let answers = answers.ok_or_else(|| invalid("--annotator needs --metric bootstrap"))?;
            let result = nq_score(&answers, &gold, matcher).map_err(invalid)?;
            json!({ "metric": "nq", "questions": gold.len(), "predictions": answers.len(), "result": result })
        }
        Metric::Bootstrap => {
            let subject = match &answers {
                Some(p) => BootstrapSubject::System(p),
                None => BootstrapSubject::Annotator,
            };
            let result = bootstrap_compare(&gold, subject, a.resamples, a.seed, matcher).map_err(invalid)?;
            json!({
                "metric": "bootstrap",
                "subject": if answers.is_some() { "system" } else { "annotator" },
                "questions": gold.len(),
                "seed": a.seed,
                "result": result,
            })
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    emit(paths, a.out.as_deref(), &text)
}

fn parse_counts(arg: &str) -> Result<(String, ActionCounts), CliError> {
    let bad = || invalid(format!("bad --counts value {arg:?} (expected NAME=a,b,c,d)"));
    let (name, nums) = arg.split_once('=').ok_or_else(bad)?;
    let v: Vec<i64> = nums.split(',').map(|n| n.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    match v[..] {
        [a, b, c, d] if name.trim().len() == name.len() && !name.is_empty() => {
            Ok((name.to_string(), ActionCounts::new(a, b, c, d)))
        }
        _ => Err(bad()),
    }
}

/// Labels every finished episode in a play store. Reads only.
fn play_episodes(paths: &Paths, dir: &Path, a: &ReportArgs) -> Result<Vec<LabeledEpisode>, CliError> {
    let dir = paths.resolve(dir);
    let corpus = Corpus::new(paths.mbest(a.mbest.as_deref().expect("clap requires --mbest"))?).map_err(invalid)?;
    let gold = paths.gold(a.gold.as_deref().expect("clap requires --gold"))?;
    let gold: HashMap<&str, _> = gold.iter().map(|g| (g.question_id.as_str(), g)).collect();
    let entries: Vec<IndexEntry> = read_jsonl(&dir.join(INDEX_FILE)).map_err(invalid)?;
    let mut out = Vec::new();
    for entry in entries {
        let events = read_jsonl(&dir.join(&entry.file)).map_err(invalid)?;
        let session = Session::replay(&events, &corpus).map_err(|e| invalid(format!("{}: {e}", entry.file)))?;
        let system = format!("{}:{}", entry.user_id, entry.condition);
        for ep in &session.episodes {
            let qid = ep.question_id.as_str();
            let g = gold.get(qid).ok_or_else(|| invalid(format!("no gold annotations for {qid}")))?;
            let record = corpus.get(qid).expect("replay checked the corpus");
            let label = ep.outcome(record, g, a.matcher.into()).map_err(|_| invalid(format!("{qid}: impossible outcome")))?;
            out.push(LabeledEpisode { system: system.clone(), question_id: qid.to_string(), label });
        }
    }
    Ok(out)
}

pub fn report(paths: &Paths, a: ReportArgs) -> Result<(), CliError> {
    let report = if let Some(p) = &a.episodes {
        let path = paths.resolve(p);
        let episodes: Vec<LabeledEpisode> = read_jsonl(&path).map_err(invalid)?;
        breakdown_report(&episodes)
    } else if let Some(dir) = &a.play_dir {
        breakdown_report(&play_episodes(paths, dir, &a)?)
    } else if !a.counts.is_empty() {
        let systems = a.counts.iter().map(|s| parse_counts(s)).collect::<Result<Vec<_>, _>>()?;
        breakdown_from_counts(&systems)
    } else {
        return Err(invalid("one of --episodes, --counts or --play-dir is required"));
    };
    let text = match a.format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Csv => report.to_csv(),
    };
    emit(paths, a.out.as_deref(), &text)
}

pub fn tune(paths: &Paths, a: TuneArgs) -> Result<(), CliError> {
    let records = paths.mbest(&a.mbest)?;
    let gold = paths.gold(&a.gold)?;
    let ckpt = a.model.as_deref().map(|m| paths.checkpoint(m)).transpose()?;
    let preds = match (&ckpt, &a.pred) {
        (Some(c), _) => c.answerer().predict_all(&records, f64::NEG_INFINITY).map_err(decode_error)?,
        (None, Some(p)) => paths.predictions(p)?,
        (None, None) => return Err(invalid("one of --model or --pred is required")),
    };
    let scored = scored_questions(&preds, &records, &gold, a.matcher.into()).map_err(decode_error)?;
    let choice = tune_threshold(&scored).map_err(decode_error)?;
    let mut saved = None;
    if let (Some(mut c), Some(out)) = (ckpt, &a.out) {
        c.threshold = Some(choice.threshold);
        saved = Some(paths.write(out, &c.to_json())?);
    }
    print_json(&json!({
        "threshold": choice.threshold,
        "result": choice.result,
        "questions": scored.len(),
        "model": saved,
    }));
    Ok(())
}

pub fn serve(paths: &Paths, a: ServeArgs) -> Result<(), CliError> {
    let corpus = Arc::new(Corpus::new(paths.mbest(&a.mbest)?).map_err(invalid)?);
    let store_dir = paths.resolve(&a.store);
    let store = Store::open(&store_dir).map_err(|e| runtime(format!("{}: {e}", store_dir.display())))?;
    let backends = Backends::standard(corpus.clone()).with_timeout(Duration::from_millis(a.backend_timeout_ms));
    let service = Service::open(corpus, backends, store).map_err(invalid)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    eprintln!("listening on http://{}", a.addr);
    rt.block_on(metaqa_play::serve(a.addr, Arc::new(service))).map_err(runtime)
}
