//! Test-only oracles, independent of the library's inference code.
#![allow(dead_code)]

use lfmmi_adapt::graph::{GraphBuilder, WeightedGraph};
use lfmmi_adapt::inference::FrameScores;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct EnumeratedPath {
    pub arcs: Vec<usize>,
    pub pdfs: Vec<u32>,
    pub tokens: Vec<u32>,
    pub score: f64,
}

/// Depth-first enumeration of every complete `frames`-arc path.
pub fn enumerate_paths(graph: &WeightedGraph, scores: Option<&Array2<f64>>, frames: usize) -> Vec<EnumeratedPath> {
    fn rec(
        g: &WeightedGraph,
        scores: Option<&Array2<f64>>,
        frames: usize,
        state: u32,
        arcs: &mut Vec<usize>,
        score: f64,
        out: &mut Vec<EnumeratedPath>,
    ) {
        let t = arcs.len();
        if t == frames {
            let f = g.final_weight(state);
            if f > f64::NEG_INFINITY {
                let all = g.arcs();
                out.push(EnumeratedPath {
                    arcs: arcs.clone(),
                    pdfs: arcs.iter().map(|&i| all[i].pdf.unwrap()).collect(),
                    tokens: arcs.iter().filter_map(|&i| all[i].label).collect(),
                    score: score + f,
                });
            }
            return;
        }
        for i in g.arc_range(state) {
            let a = g.arcs()[i];
            let ac = scores.map_or(0.0, |s| s[[t, a.pdf.unwrap() as usize]]);
            arcs.push(i);
            rec(g, scores, frames, a.dst, arcs, score + a.log_weight + ac, out);
            arcs.pop();
        }
    }
    let mut out = Vec::new();
    rec(graph, scores, frames, graph.start(), &mut Vec::new(), 0.0, &mut out);
    out
}

pub fn lse(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior of each pdf at each frame by explicit path enumeration.
pub fn enumerated_posteriors(paths: &[EnumeratedPath], frames: usize, pdfs: usize) -> Array2<f64> {
    let total = lse(paths.iter().map(|p| p.score));
    let mut post = Array2::zeros((frames, pdfs));
    for p in paths {
        let w = (p.score - total).exp();
        for (t, &pdf) in p.pdfs.iter().enumerate() {
            post[[t, pdf as usize]] += w;
        }
    }
    post
}

pub fn random_scores(rng: &mut ChaCha8Rng, frames: usize, pdfs: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((frames, pdfs), |_| rng.random_range(-scale..scale))
}

pub fn frame_scores(m: &Array2<f64>) -> FrameScores {
    FrameScores::new(m.clone()).unwrap()
}

/// Random epsilon-free graph with a handful of states; may be infeasible for
/// a given length (callers retry).
pub fn random_graph(rng: &mut ChaCha8Rng, states: usize, pdfs: usize, arcs_per_state: usize, labels: bool) -> Option<WeightedGraph> {
    let mut b = GraphBuilder::new();
    let ids: Vec<u32> = (0..states).map(|_| b.add_state()).collect();
    b.set_start(ids[0]);
    for &s in &ids {
        let k = rng.random_range(1..=arcs_per_state);
        for _ in 0..k {
            let d = ids[rng.random_range(0..states)];
            let pdf = rng.random_range(0..pdfs as u32);
            let label = (labels && rng.random_bool(0.5)).then(|| rng.random_range(0..3u32));
            b.add_arc(s, d, Some(pdf), label, -rng.random_range(0.0..2.0));
        }
    }
    let mut any_final = false;
    for &s in &ids[1..] {
        if rng.random_bool(0.5) {
            b.set_final(s, -rng.random_range(0.0..1.0));
            any_final = true;
        }
    }
    if !any_final {
        b.set_final(ids[states - 1], 0.0);
    }
    b.build(pdfs).ok()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
