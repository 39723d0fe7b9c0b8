use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use lfmmi_adapt::adapt::{AdaptMethod, SpeakerAdapter, Supervision};
use lfmmi_adapt::config::{Condition, Criterion, ExperimentConfig};
use lfmmi_adapt::corpus::{generate_corpus, load_corpus, save_corpus, Corpus};
use lfmmi_adapt::experiment::{
    adapt_corpus, adapters_of, decode_corpus, first_passes, references, run_experiment, train_items, train_sat_model,
    train_si_model,
};
use lfmmi_adapt::graph::{ContextMode, GraphSet, TokenInventory};
use lfmmi_adapt::metrics::score_token_error_rate;
use lfmmi_adapt::report::{emit_report, read_json, write_timing, ReportFormat};
use lfmmi_adapt::store::{
    decoding_params, load_adapters, load_model, read_hypotheses, save_adapters, save_model, write_hypotheses, ModelMeta,
};
use lfmmi_adapt::{Error, Result};
use serde_json::json;

use crate::Common;

#[derive(Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_method)]
    pub method: AdaptMethod,
    /// `ce` or `mmi+ce`; defaults to the config's criterion.
    #[arg(long, value_parser = parse_criterion)]
    pub criterion: Option<Criterion>,
    /// Adapt on reference labels instead of first-pass hypotheses.
    #[arg(long)]
    pub oracle: bool,
    /// Fraction of utterances kept by confidence.
    #[arg(long)]
    pub select_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adapt on the first N utterances of each speaker only.
    #[arg(long)]
    pub max_utts: Option<usize>,
}

fn parse_method(s: &str) -> std::result::Result<AdaptMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_criterion(s: &str) -> std::result::Result<Criterion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::load_with_overrides(common.config.as_deref(), &common.overrides)
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} directory {} does not exist", path.display())))
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// The corpus must use the configured token inventory.
fn check_inventory(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<TokenInventory> {
    let inv = cfg.inventory()?;
    if corpus.meta.tokens != inv.tokens() || corpus.meta.silence != cfg.silence {
        return Err(Error::InvalidArgument(format!(
            "corpus tokens {:?} (silence {:?}) differ from the configured inventory",
            corpus.meta.tokens, corpus.meta.silence
        )));
    }
    if corpus.meta.dim != cfg.dim {
        return Err(Error::InvalidArgument(format!(
            "corpus feature dim {} differs from configured dim {}",
            corpus.meta.dim, cfg.dim
        )));
    }
    Ok(inv)
}

fn model_meta(cfg: &ExperimentConfig, epoch_losses: Vec<f64>) -> ModelMeta {
    ModelMeta {
        tokens: cfg.tokens.clone(),
        silence: cfg.silence.clone(),
        context_mode: cfg.context_mode,
        states_per_unit: cfg.states_per_unit,
        lm_order: cfg.lm_order,
        epoch_losses,
    }
}

pub fn config(common: &Common) -> Result<()> {
    print!("{}", load_config(common)?.to_text());
    Ok(())
}

pub fn generate(common: &Common, split: &str, speakers: Option<usize>, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let n = speakers.unwrap_or(if split == "test" { cfg.test_speakers } else { cfg.train_speakers });
    let corpus = generate_corpus(&cfg.inventory()?, &cfg.corpus_spec(split, n))?;
    save_corpus(out, &corpus)?;
    println!("{}", json!({ "utterances": corpus.utterances.len(), "frames": corpus.total_frames(), "out": out }));
    Ok(())
}

pub fn train(common: &Common, corpus_dir: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    require_dir(corpus_dir, "corpus")?;
    let corpus = load_corpus(corpus_dir)?;
    let inv = check_inventory(&cfg, &corpus)?;
    let graphs = GraphSet::from_references(inv, cfg.states_per_unit, cfg.lm_order, &corpus.label_corpus())?;
    let (items, _) = train_items(&graphs, &corpus)?;
    let (net, losses) = train_si_model(&cfg, &graphs, &items)?;
    save_model(out, &graphs, &net, &model_meta(&cfg, losses.clone()))?;
    println!("{}", json!({ "items": items.len(), "epoch_losses": losses, "out": out }));
    Ok(())
}

pub fn sat(common: &Common, corpus_dir: &Path, init: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    require_dir(corpus_dir, "corpus")?;
    let corpus = load_corpus(corpus_dir)?;
    let inv = check_inventory(&cfg, &corpus)?;
    let (graphs, init_net) = match init {
        Some(dir) => {
            require_dir(dir, "model")?;
            let (g, n, _) = load_model(dir)?;
            (g, Some(n))
        }
        None => (
            GraphSet::from_references(inv, cfg.states_per_unit, cfg.lm_order, &corpus.label_corpus())?,
            None,
        ),
    };
    let (items, speakers) = train_items(&graphs, &corpus)?;
    let sat = train_sat_model(&cfg, &graphs, &items, &speakers, init_net.as_ref())?;
    save_model(out, &graphs, &sat.net, &model_meta(&cfg, sat.losses.clone()))?;
    save_adapters(&out.join("train-adapters"), &sat.adapters)?;
    println!("{}", json!({ "items": items.len(), "epoch_losses": sat.losses, "out": out }));
    Ok(())
}

pub fn adapt(common: &Common, a: &AdaptArgs) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(e) = a.epochs {
        cfg.apply_overrides(&[format!("adapt_epochs={e}")])?;
    }
    if let Some(r) = a.select_rate {
        cfg.apply_overrides(&[format!("selection_rate={r}")])?;
    }
    require_dir(&a.model, "model")?;
    require_dir(&a.corpus, "corpus")?;
    let (graphs, net, _) = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    if corpus.meta.tokens != graphs.inventory.tokens() {
        return Err(Error::InvalidArgument("corpus and model token inventories differ".into()));
    }
    if a.max_utts == Some(0) {
        return Err(Error::InvalidArgument("--max-utts must be >= 1".into()));
    }
    let condition = Condition {
        name: a.method.name().to_string(),
        method: Some(a.method),
        criterion: a.criterion.unwrap_or(cfg.criterion),
        supervision: if a.oracle { Supervision::Oracle } else { Supervision::Hypothesis },
        selection_rate: cfg.selection_rate,
        max_utts: a.max_utts,
        sat: false,
    };
    let (outcomes, stats) = adapt_corpus(&cfg, &net, &graphs, &corpus, &condition)?;
    save_adapters(&a.out, &adapters_of(&outcomes))?;

    let mut w = BufWriter::new(File::create(a.out.join("first_pass.tsv"))?);
    for f in first_passes(&outcomes) {
        writeln!(w, "{}\t{}\t{}", f.id, f.confidence, graphs.inventory.render(&f.hypothesis))?;
    }
    w.flush()?;
    let speakers: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "speaker": o.adapter.speaker_id,
                "used": o.used,
                "dropped": o.dropped,
                "steps": o.report.steps,
                "epoch_losses": o.report.epoch_losses,
                "diverged": o.report.diverged,
            })
        })
        .collect();
    let summary = json!({
        "method": a.method.name(),
        "criterion": condition.criterion.name(),
        "supervision": if a.oracle { "oracle" } else { "hypothesis" },
        "selection_rate": cfg.selection_rate,
        "epochs": cfg.adapt_epochs,
        "selection": stats,
        "speakers": speakers,
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    println!("{}", json!({ "adapters": outcomes.len(), "out": a.out }));
    Ok(())
}

pub fn decode(model: &Path, corpus_dir: &Path, adapters: Option<&Path>, out: &Path) -> Result<()> {
    require_dir(model, "model")?;
    require_dir(corpus_dir, "corpus")?;
    let (graphs, net, _) = load_model(model)?;
    let corpus = load_corpus(corpus_dir)?;
    let params = match adapters {
        Some(dir) => {
            require_dir(dir, "adapter")?;
            decoding_params(&load_adapters(dir)?)
        }
        None => BTreeMap::new(),
    };
    let hyps = decode_corpus(&net, &graphs, &corpus, &params)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_hypotheses(out, &graphs.inventory, &hyps)?;
    println!("{}", json!({ "utterances": hyps.len(), "adapted_speakers": params.len(), "out": out }));
    Ok(())
}

pub fn score(corpus_dir: &Path, hyps: &Path, out: Option<&Path>) -> Result<()> {
    require_dir(corpus_dir, "corpus")?;
    let corpus = load_corpus(corpus_dir)?;
    let inv = TokenInventory::new(&corpus.meta.tokens, &corpus.meta.silence, ContextMode::Mono)?;
    let report = score_token_error_rate(&read_hypotheses(hyps, &inv)?, &references(&corpus))?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn report(metrics: &Path, format: &str, out: &Path) -> Result<()> {
    let formats: Vec<ReportFormat> = format.split(',').map(|f| f.trim().parse()).collect::<Result<_>>()?;
    let written = emit_report(&read_json(metrics)?, &formats, out)?;
    println!("{}", json!({ "written": written }));
    Ok(())
}

pub fn experiment(common: &Common, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let (metrics, timing) = run_experiment(&cfg)?;
    let mut written = emit_report(&metrics, &ReportFormat::ALL, &dir)?;
    written.push(write_timing(&timing, &dir)?);
    let cfg_path = dir.join("config.txt");
    std::fs::write(&cfg_path, cfg.to_text())?;
    written.push(cfg_path);
    let summary: Vec<serde_json::Value> = metrics
        .conditions
        .iter()
        .map(|c| json!({ "condition": c.name, "ter": c.ter, "relative_reduction": c.relative_reduction }))
        .collect();
    println!("{}", json!({ "conditions": summary, "written": written }));
    Ok(())
}

pub fn show_adapter(path: &Path) -> Result<()> {
    let a = SpeakerAdapter::load(path)?;
    let stdout = std::io::stdout();
    a.write_text(stdout.lock())?;
    Ok(())
}
