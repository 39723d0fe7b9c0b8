//! Exact beam-filtered lattices.
//!
//! Paths are enumerated best-first with an A* search whose heuristic is the
//! exact backward Viterbi score, so complete paths come out in descending
//! score order. Every path within `beam` of the best is kept (up to
//! `max_paths`), and the kept paths are stored as a prefix tree: an acyclic
//! graph whose path set is exactly the retained set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use ndarray::Array2;

use super::forward_backward::check_inputs;
use super::scores::{log_add, FrameScores, PosteriorTable};
use crate::error::{Error, Result};
use crate::graph::{TokenId, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeArc {
    pub from: u32,
    pub to: u32,
    /// Frame consumed by this arc.
    pub frame: u32,
    pub pdf: u32,
    pub label: Option<TokenId>,
    pub graph_score: f64,
    pub acoustic_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    frames: usize,
    pdf_count: usize,
    num_nodes: usize,
    arcs: Vec<LatticeArc>,
    /// `(node, final graph score)` for every leaf.
    finals: Vec<(u32, f64)>,
}

/// One complete lattice path.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    pub pdfs: Vec<u32>,
    pub tokens: Vec<TokenId>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeOptions {
    pub beam: f64,
    pub max_paths: usize,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self {
            beam: 8.0,
            max_paths: 1000,
        }
    }
}

struct Node {
    parent: u32,
    arc: u32,
    t: u32,
    state: u32,
    g: f64,
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    id: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best completion score from each state after `t` frames.
fn backward_max(graph: &WeightedGraph, scores: &FrameScores) -> Vec<Vec<f64>> {
    let frames = scores.frames();
    let n = graph.num_states();
    let mut h = vec![Vec::new(); frames + 1];
    h[frames] = graph.finals().to_vec();
    for t in (0..frames).rev() {
        let row = scores.row(t);
        let next = &h[t + 1];
        let cur: Vec<f64> = (0..n as u32)
            .map(|s| {
                graph
                    .arcs_from(s)
                    .iter()
                    .map(|a| a.log_weight + row[a.pdf.unwrap() as usize] + next[a.dst as usize])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        h[t] = cur;
    }
    h
}

/// Lattice of all paths scoring within `beam` of the best path.
pub fn generate_lattice(graph: &WeightedGraph, scores: &FrameScores, beam: f64) -> Result<Lattice> {
    generate_lattice_with(
        graph,
        scores,
        LatticeOptions {
            beam,
            max_paths: usize::MAX,
        },
    )
}

/// As [`generate_lattice`], keeping at most `opts.max_paths` best paths.
pub fn generate_lattice_with(graph: &WeightedGraph, scores: &FrameScores, opts: LatticeOptions) -> Result<Lattice> {
    check_inputs(graph, scores)?;
    if !(opts.beam > 0.0) {
        return Err(Error::InvalidArgument(format!("lattice beam must be > 0, got {}", opts.beam)));
    }
    if opts.max_paths == 0 {
        return Err(Error::InvalidArgument("max_paths must be >= 1".into()));
    }
    let frames = scores.frames();
    let h = backward_max(graph, scores);
    let best = h[0][graph.start() as usize];
    if best == f64::NEG_INFINITY {
        return Err(Error::Infeasible { frames });
    }
    // slack absorbs summation-order rounding between g + h and the true score
    let threshold = best - opts.beam - 1e-9 * (1.0 + best.abs());

    let mut nodes = vec![Node {
        parent: u32::MAX,
        arc: u32::MAX,
        t: 0,
        state: graph.start(),
        g: 0.0,
    }];
    let mut heap = BinaryHeap::new();
    heap.push(Entry { f: best, id: 0 });
    let mut complete: Vec<u32> = Vec::new();
    let all = graph.arcs();
    while let Some(Entry { f, id }) = heap.pop() {
        if f < threshold {
            break;
        }
        let (t, state, g) = {
            let n = &nodes[id as usize];
            (n.t as usize, n.state, n.g)
        };
        if t == frames {
            complete.push(id);
            if complete.len() >= opts.max_paths {
                break;
            }
            continue;
        }
        let row = scores.row(t);
        for i in graph.arc_range(state) {
            let a = &all[i];
            let rest = h[t + 1][a.dst as usize];
            if rest == f64::NEG_INFINITY {
                continue;
            }
            let cg = g + a.log_weight + row[a.pdf.unwrap() as usize];
            let cf = cg + rest;
            if cf < threshold {
                continue;
            }
            let cid = nodes.len() as u32;
            nodes.push(Node {
                parent: id,
                arc: i as u32,
                t: (t + 1) as u32,
                state: a.dst,
                g: cg,
            });
            heap.push(Entry { f: cf, id: cid });
        }
    }

    // keep only ancestors of complete leaves, renumbered in creation order
    let mut keep = vec![false; nodes.len()];
    keep[0] = true;
    for &leaf in &complete {
        let mut n = leaf;
        while n != u32::MAX && !keep[n as usize] {
            keep[n as usize] = true;
            n = nodes[n as usize].parent;
        }
    }
    let mut remap = vec![u32::MAX; nodes.len()];
    let mut count = 0u32;
    for (i, k) in keep.iter().enumerate() {
        if *k {
            remap[i] = count;
            count += 1;
        }
    }
    let mut arcs = Vec::with_capacity(count as usize);
    for (i, n) in nodes.iter().enumerate().skip(1) {
        if !keep[i] {
            continue;
        }
        let ga = &all[n.arc as usize];
        let t = n.t - 1;
        arcs.push(LatticeArc {
            from: remap[n.parent as usize],
            to: remap[i],
            frame: t,
            pdf: ga.pdf.unwrap(),
            label: ga.label,
            graph_score: ga.log_weight,
            acoustic_score: scores.get(t as usize, ga.pdf.unwrap()),
        });
    }
    arcs.sort_by_key(|a| a.from);
    let mut finals: Vec<(u32, f64)> = complete
        .iter()
        .map(|&leaf| (remap[leaf as usize], graph.final_weight(nodes[leaf as usize].state)))
        .collect();
    finals.sort_by_key(|f| f.0);
    Ok(Lattice {
        frames,
        pdf_count: graph.pdf_count(),
        num_nodes: count as usize,
        arcs,
        finals,
    })
}

impl Lattice {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn arcs(&self) -> &[LatticeArc] {
        &self.arcs
    }

    pub fn num_paths(&self) -> usize {
        self.finals.len()
    }

    /// All complete paths, in leaf order.
    pub fn paths(&self) -> Vec<LatticePath> {
        let mut incoming = vec![usize::MAX; self.num_nodes];
        for (i, a) in self.arcs.iter().enumerate() {
            incoming[a.to as usize] = i;
        }
        self.finals
            .iter()
            .map(|&(leaf, fw)| {
                let mut rev = Vec::with_capacity(self.frames);
                let mut n = leaf as usize;
                while incoming[n] != usize::MAX {
                    let a = &self.arcs[incoming[n]];
                    rev.push(*a);
                    n = a.from as usize;
                }
                rev.reverse();
                LatticePath {
                    pdfs: rev.iter().map(|a| a.pdf).collect(),
                    tokens: rev.iter().filter_map(|a| a.label).collect(),
                    score: rev.iter().map(|a| a.graph_score + a.acoustic_score).sum::<f64>() + fw,
                }
            })
            .collect()
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# frames {} nodes {} paths {}", self.frames, self.num_nodes, self.finals.len())?;
        for a in &self.arcs {
            let label = a.label.map_or_else(|| "-".to_string(), |l| l.to_string());
            writeln!(
                w,
                "{} {} {} {} {} {} {}",
                a.from, a.to, a.frame, a.pdf, label, a.graph_score, a.acoustic_score
            )?;
        }
        for (n, f) in &self.finals {
            writeln!(w, "{n} {f}")?;
        }
        Ok(())
    }
}

/// Frame-level pdf posteriors normalized over the lattice's paths.
pub fn lattice_frame_posteriors(lattice: &Lattice) -> PosteriorTable {
    let n = lattice.num_nodes;
    // arcs sorted by `from`, and `from < to`, so ascending order is topological
    let mut alpha = vec![f64::NEG_INFINITY; n];
    alpha[0] = 0.0;
    for a in &lattice.arcs {
        let v = alpha[a.from as usize] + a.graph_score + a.acoustic_score;
        alpha[a.to as usize] = log_add(alpha[a.to as usize], v);
    }
    let mut beta = vec![f64::NEG_INFINITY; n];
    for &(leaf, fw) in &lattice.finals {
        beta[leaf as usize] = log_add(beta[leaf as usize], fw);
    }
    for a in lattice.arcs.iter().rev() {
        let v = a.graph_score + a.acoustic_score + beta[a.to as usize];
        beta[a.from as usize] = log_add(beta[a.from as usize], v);
    }
    let total = beta[0];
    let mut post = Array2::<f64>::zeros((lattice.frames, lattice.pdf_count));
    for a in &lattice.arcs {
        let v = alpha[a.from as usize] + a.graph_score + a.acoustic_score + beta[a.to as usize] - total;
        post[[a.frame as usize, a.pdf as usize]] += v.exp();
    }
    PosteriorTable(post)
}
