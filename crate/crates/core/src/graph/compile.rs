//! Numerator, denominator and decoding graph compilation.
//!
//! Every graph is epsilon-free: each arc enters an HMM state and emits that
//! state's pdf, so a path of `T` arcs consumes exactly `T` frames. State 0
//! is a non-emitting start state. Leaving a unit costs the topology's exit
//! probability, which is folded into the arc that enters the next unit (or
//! into the final weight).

use std::collections::HashMap;

use super::inventory::{ContextMode, TokenId, TokenInventory};
use super::ngram::TokenNgramLm;
use super::topology::HmmTopology;
use super::wfst::{GraphBuilder, StateId, WeightedGraph};
use crate::error::{Error, Result};

/// Minimum frames needed to realize `labels` (without optional silence).
pub fn min_frames(labels: &[TokenId], topology: &HmmTopology) -> usize {
    labels.len() * topology.min_frames()
}

struct Unit {
    token: TokenId,
    left: TokenId,
    states: Vec<StateId>,
}

fn add_unit(b: &mut GraphBuilder, token: TokenId, left: TokenId, topology: &HmmTopology) -> Unit {
    let states = (0..topology.states_per_unit()).map(|_| b.add_state()).collect();
    Unit { token, left, states }
}

fn add_internal_arcs(b: &mut GraphBuilder, u: &Unit, topology: &HmmTopology, inv: &TokenInventory) {
    let k = topology.states_per_unit();
    for t in topology.transitions() {
        if t.to < k {
            let pdf = inv.pdf_id(u.left, u.token, t.to, k);
            b.add_arc(u.states[t.from], u.states[t.to], Some(pdf), None, t.prob.ln());
        }
    }
}

/// Arcs from every exit-capable state of `from` into the entry of `to`.
fn connect(
    b: &mut GraphBuilder,
    from: &Unit,
    to: &Unit,
    topology: &HmmTopology,
    inv: &TokenInventory,
    extra_weight: f64,
    label: Option<TokenId>,
) {
    let k = topology.states_per_unit();
    let pdf = inv.pdf_id(to.left, to.token, 0, k);
    for (s, &state) in from.states.iter().enumerate() {
        if let Some(exit) = topology.exit_log_prob(s) {
            b.add_arc(state, to.states[0], Some(pdf), label, exit + extra_weight);
        }
    }
}

fn enter_from_start(b: &mut GraphBuilder, start: StateId, to: &Unit, topology: &HmmTopology, inv: &TokenInventory, weight: f64, label: Option<TokenId>) {
    let pdf = inv.pdf_id(to.left, to.token, 0, topology.states_per_unit());
    b.add_arc(start, to.states[0], Some(pdf), label, weight);
}

fn set_exit_finals(b: &mut GraphBuilder, u: &Unit, topology: &HmmTopology, extra: f64) {
    for (s, &state) in u.states.iter().enumerate() {
        if let Some(exit) = topology.exit_log_prob(s) {
            b.set_final(state, exit + extra);
        }
    }
}

/// Graph of all HMM state sequences realizing `labels` in order, with an
/// optional silence unit before the first and after the last label (unless
/// that label already is silence).
pub fn build_numerator_graph(
    labels: &[TokenId],
    topology: &HmmTopology,
    inventory: &TokenInventory,
    frames: usize,
) -> Result<WeightedGraph> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("numerator labels are empty".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= inventory.len()) {
        return Err(Error::InvalidArgument(format!("label {bad} outside inventory")));
    }
    let needed = min_frames(labels, topology);
    if frames < needed {
        return Err(Error::InfeasibleSupervision { needed, frames });
    }
    let sil = inventory.silence();
    let mut b = GraphBuilder::new();
    let start = b.add_state();
    b.set_start(start);

    let lead = (labels[0] != sil).then(|| add_unit(&mut b, sil, sil, topology));
    let mut units = Vec::with_capacity(labels.len());
    let mut left = sil;
    for &l in labels {
        units.push(add_unit(&mut b, l, left, topology));
        left = l;
    }
    let last = *labels.last().unwrap();
    let trail = (last != sil).then(|| add_unit(&mut b, sil, last, topology));

    // arcs are added grouped by source state order for readability; the
    // builder sorts stably anyway
    if let Some(lead) = &lead {
        enter_from_start(&mut b, start, lead, topology, inventory, 0.0, Some(sil));
    }
    enter_from_start(&mut b, start, &units[0], topology, inventory, 0.0, Some(units[0].token));
    if let Some(lead) = &lead {
        add_internal_arcs(&mut b, lead, topology, inventory);
        connect(&mut b, lead, &units[0], topology, inventory, 0.0, Some(units[0].token));
    }
    for i in 0..units.len() {
        add_internal_arcs(&mut b, &units[i], topology, inventory);
        if i + 1 < units.len() {
            connect(&mut b, &units[i], &units[i + 1], topology, inventory, 0.0, Some(units[i + 1].token));
        }
    }
    let last_unit = units.last().unwrap();
    set_exit_finals(&mut b, last_unit, topology, 0.0);
    if let Some(trail) = &trail {
        connect(&mut b, last_unit, trail, topology, inventory, 0.0, Some(sil));
        add_internal_arcs(&mut b, trail, topology, inventory);
        set_exit_finals(&mut b, trail, topology, 0.0);
    }
    b.build(inventory.pdf_count(topology.states_per_unit()))
}

/// LM-context state of the composed graph: the n-gram history plus the
/// left token used for context-dependent pdfs.
type ContextKey = (Vec<TokenId>, TokenId);

fn compile_lm_graph(lm: &TokenNgramLm, topology: &HmmTopology, inventory: &TokenInventory, keep_labels: bool) -> Result<WeightedGraph> {
    if lm.vocab() != inventory.len() {
        return Err(Error::DimensionMismatch {
            what: "lm vocabulary vs inventory",
            expected: inventory.len(),
            got: lm.vocab(),
        });
    }
    let sil = inventory.silence();
    let v = inventory.len() as TokenId;
    let ctx_of = |w: TokenId| match inventory.context_mode() {
        ContextMode::Mono => sil,
        ContextMode::LeftBiContext => w,
    };

    // enumerate reachable context states in BFS order
    let mut keys: Vec<ContextKey> = vec![(lm.initial_history(), sil)];
    let mut index: HashMap<ContextKey, usize> = HashMap::from([(keys[0].clone(), 0)]);
    let mut i = 0;
    while i < keys.len() {
        for w in 0..v {
            let nk = (lm.next_history(&keys[i].0, w), ctx_of(w));
            if !index.contains_key(&nk) {
                index.insert(nk.clone(), keys.len());
                keys.push(nk);
            }
        }
        i += 1;
    }

    let mut b = GraphBuilder::new();
    let start = b.add_state();
    b.set_start(start);
    // unit instance (context state c, token w)
    let units: Vec<Vec<Unit>> = keys
        .iter()
        .map(|(_, left)| (0..v).map(|w| add_unit(&mut b, w, *left, topology)).collect())
        .collect();
    let label = |w: TokenId| keep_labels.then_some(w);

    for w in 0..v {
        let lp = lm.log_prob(&keys[0].0, w);
        enter_from_start(&mut b, start, &units[0][w as usize], topology, inventory, lp, label(w));
    }
    for (c, (hist, _)) in keys.iter().enumerate() {
        for w in 0..v {
            let u = &units[c][w as usize];
            add_internal_arcs(&mut b, u, topology, inventory);
            let next = index[&(lm.next_history(hist, w), ctx_of(w))];
            let next_hist = &keys[next].0;
            for w2 in 0..v {
                let lp = lm.log_prob(next_hist, w2);
                connect(&mut b, u, &units[next][w2 as usize], topology, inventory, lp, label(w2));
            }
            set_exit_finals(&mut b, u, topology, 0.0);
        }
    }
    b.build(inventory.pdf_count(topology.states_per_unit()))
}

/// Composition of the token LM with per-token HMMs. Built once per model and
/// shared across all utterances and speakers.
pub fn build_denominator_graph(lm: &TokenNgramLm, topology: &HmmTopology, inventory: &TokenInventory) -> Result<WeightedGraph> {
    compile_lm_graph(lm, topology, inventory, false)
}

/// Same structure as the denominator graph, but arcs entering a unit carry
/// that unit's token as output label.
pub fn build_decoding_graph(lm: &TokenNgramLm, topology: &HmmTopology, inventory: &TokenInventory) -> Result<WeightedGraph> {
    compile_lm_graph(lm, topology, inventory, true)
}

/// Numerator graph carrying the same LM and transition weights as the
/// denominator: the decoding graph restricted to paths whose token labels
/// spell `labels`, with optional boundary silence as in
/// [`build_numerator_graph`]. Every path of the result is a denominator path
/// with identical weight, so the LF-MMI log ratio is never positive.
pub fn build_lm_numerator_graph(
    labels: &[TokenId],
    decoding: &WeightedGraph,
    topology: &HmmTopology,
    inventory: &TokenInventory,
    frames: usize,
) -> Result<WeightedGraph> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("numerator labels are empty".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= inventory.len()) {
        return Err(Error::InvalidArgument(format!("label {bad} outside inventory")));
    }
    let needed = min_frames(labels, topology);
    if frames < needed {
        return Err(Error::InfeasibleSupervision { needed, frames });
    }
    let sil = inventory.silence();
    let n = labels.len();
    let lead = labels[0] != sil;
    let trail = labels[n - 1] != sil;
    // label positions: 0 start, 1 after lead silence, 2 + i after labels[i],
    // n + 2 after trailing silence
    let step = |pos: usize, tok: TokenId| -> Option<usize> {
        match pos {
            0 if lead && tok == sil => Some(1),
            0 | 1 if tok == labels[0] => Some(2),
            p if p >= 2 && p < n + 1 && tok == labels[p - 1] => Some(p + 1),
            p if p == n + 1 && trail && tok == sil => Some(n + 2),
            _ => None,
        }
    };
    let accepting = |pos: usize| pos == n + 1 || pos == n + 2;

    let mut b = GraphBuilder::new();
    let mut index: HashMap<(StateId, usize), StateId> = HashMap::new();
    let mut queue = vec![(decoding.start(), 0usize)];
    let s0 = b.add_state();
    b.set_start(s0);
    index.insert(queue[0], s0);
    let mut i = 0;
    while i < queue.len() {
        let (ds, pos) = queue[i];
        let src = index[&(ds, pos)];
        let fw = decoding.final_weight(ds);
        if fw > f64::NEG_INFINITY && accepting(pos) {
            b.set_final(src, fw);
        }
        for a in decoding.arcs_from(ds) {
            let npos = match a.label {
                Some(tok) => match step(pos, tok) {
                    Some(p) => p,
                    None => continue,
                },
                None => pos,
            };
            let key = (a.dst, npos);
            let dst = match index.get(&key) {
                Some(&d) => d,
                None => {
                    let d = b.add_state();
                    index.insert(key, d);
                    queue.push(key);
                    d
                }
            };
            b.add_arc(src, dst, a.pdf, a.label, a.log_weight);
        }
        i += 1;
    }
    b.build(decoding.pdf_count())
}
