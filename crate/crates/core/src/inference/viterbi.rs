use super::forward_backward::check_inputs;
use super::scores::FrameScores;
use crate::error::{Error, Result};
use crate::graph::{StateId, TokenId, WeightedGraph};

/// Best-scoring path through a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BestPath {
    /// Arc indices, one per frame.
    pub arcs: Vec<usize>,
    /// State entered at each frame.
    pub states: Vec<StateId>,
    /// Pdf emitted at each frame.
    pub pdfs: Vec<u32>,
    /// Output labels read off the path, in order.
    pub tokens: Vec<TokenId>,
    /// Sum of arc weights, frame scores and the final weight.
    pub score: f64,
}

/// Max-plus Viterbi. Ties go to the lowest arc index when relaxing a state
/// and to the lowest state index when picking the final state.
pub fn viterbi_best_path(graph: &WeightedGraph, scores: &FrameScores) -> Result<BestPath> {
    check_inputs(graph, scores)?;
    let n = graph.num_states();
    let frames = scores.frames();
    let mut delta = vec![f64::NEG_INFINITY; n];
    delta[graph.start() as usize] = 0.0;
    let mut back = vec![u32::MAX; frames * n];
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 0..frames {
        let row = scores.row(t);
        next.fill(f64::NEG_INFINITY);
        let bp = &mut back[t * n..(t + 1) * n];
        for (i, a) in graph.arcs().iter().enumerate() {
            let d = delta[a.src as usize];
            if d == f64::NEG_INFINITY {
                continue;
            }
            let v = d + a.log_weight + row[a.pdf.unwrap() as usize];
            if v > next[a.dst as usize] {
                next[a.dst as usize] = v;
                bp[a.dst as usize] = i as u32;
            }
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_state = usize::MAX;
    for (s, (&d, &f)) in delta.iter().zip(graph.finals()).enumerate() {
        let v = d + f;
        if v > best {
            best = v;
            best_state = s;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Infeasible { frames });
    }
    let mut arcs = vec![0usize; frames];
    let mut s = best_state;
    for t in (0..frames).rev() {
        let ai = back[t * n + s] as usize;
        arcs[t] = ai;
        s = graph.arcs()[ai].src as usize;
    }
    let all = graph.arcs();
    Ok(BestPath {
        states: arcs.iter().map(|&i| all[i].dst).collect(),
        pdfs: arcs.iter().map(|&i| all[i].pdf.unwrap()).collect(),
        tokens: arcs.iter().filter_map(|&i| all[i].label).collect(),
        arcs,
        score: best,
    })
}
