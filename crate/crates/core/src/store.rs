//! On-disk artifacts shared by the CLI commands: model directories,
//! adapter directories and hypothesis files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::SpeakerAdapter;
use crate::error::{Error, Result};
use crate::graph::{build_hmm_topology, ContextMode, GraphSet, TokenId, TokenInventory, WeightedGraph};
use crate::net::{load_checkpoint, save_checkpoint, AcousticNet, LhucParams};

pub const MODEL_META: &str = "model.json";
pub const NET_FILE: &str = "net.lfn";
pub const DEN_FILE: &str = "den.lfg";
pub const DEC_FILE: &str = "dec.lfg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub tokens: Vec<String>,
    pub silence: String,
    pub context_mode: ContextMode,
    pub states_per_unit: usize,
    pub lm_order: usize,
    /// Training-time losses, for inspection.
    pub epoch_losses: Vec<f64>,
}

fn format_err(path: &Path, msg: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn write_graph(path: &Path, g: &WeightedGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    g.write_binary(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_graph(path: &Path) -> Result<WeightedGraph> {
    WeightedGraph::read_binary(BufReader::new(File::open(path)?))
}

pub fn save_model(dir: &Path, graphs: &GraphSet, net: &AcousticNet, meta: &ModelMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(MODEL_META), serde_json::to_string_pretty(meta)? + "\n")?;
    save_checkpoint(&dir.join(NET_FILE), net)?;
    write_graph(&dir.join(DEN_FILE), &graphs.den)?;
    write_graph(&dir.join(DEC_FILE), &graphs.dec)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(GraphSet, AcousticNet, ModelMeta)> {
    let meta_path = dir.join(MODEL_META);
    let text = std::fs::read_to_string(&meta_path)?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| format_err(&meta_path, e))?;
    let inventory = TokenInventory::new(&meta.tokens, &meta.silence, meta.context_mode)?;
    let topology = build_hmm_topology(meta.states_per_unit)?;
    let graphs = GraphSet::from_parts(inventory, topology, read_graph(&dir.join(DEN_FILE))?, read_graph(&dir.join(DEC_FILE))?)?;
    let net = load_checkpoint(&dir.join(NET_FILE))?;
    if net.pdf_count() != graphs.pdf_count() {
        return Err(format_err(dir, format!("network has {} outputs, graphs {} pdfs", net.pdf_count(), graphs.pdf_count())));
    }
    Ok((graphs, net, meta))
}

pub fn save_adapters(dir: &Path, adapters: &[SpeakerAdapter]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    adapters.iter().map(|a| a.save(dir)).collect()
}

/// Every `*.lfa` file in `dir`, keyed by speaker.
pub fn load_adapters(dir: &Path) -> Result<BTreeMap<String, SpeakerAdapter>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lfa"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let a = SpeakerAdapter::load(&p)?;
        out.insert(a.speaker_id.clone(), a);
    }
    Ok(out)
}

/// Decoding parameters per speaker (posterior means for Bayesian adapters).
pub fn decoding_params(adapters: &BTreeMap<String, SpeakerAdapter>) -> BTreeMap<String, LhucParams> {
    adapters.iter().map(|(s, a)| (s.clone(), a.lhuc().clone())).collect()
}

/// `id<TAB>tokens` per line, tokens space separated, sorted by id.
pub fn write_hypotheses(path: &Path, inventory: &TokenInventory, hyps: &BTreeMap<String, Vec<TokenId>>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, h) in hyps {
        writeln!(w, "{id}\t{}", inventory.render(h))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hypotheses(path: &Path, inventory: &TokenInventory) -> Result<BTreeMap<String, Vec<TokenId>>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, toks) = line.split_once('\t').unwrap_or((line, ""));
        let toks = inventory
            .parse(toks)
            .map_err(|e| format_err(path, format!("line {}: {e}", n + 1)))?;
        if out.insert(id.to_string(), toks).is_some() {
            return Err(format_err(path, format!("line {}: duplicate id {id}", n + 1)));
        }
    }
    Ok(out)
}
