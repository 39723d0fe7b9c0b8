use ndarray::Array2;

use super::scores::{FrameScores, PosteriorTable};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub log_total: f64,
    pub occupancies: PosteriorTable,
}

pub(crate) fn check_inputs(graph: &WeightedGraph, scores: &FrameScores) -> Result<()> {
    if scores.pdfs() != graph.pdf_count() {
        return Err(Error::DimensionMismatch {
            what: "frame scores vs graph pdf count",
            expected: graph.pdf_count(),
            got: scores.pdfs(),
        });
    }
    if !graph.is_epsilon_free() {
        return Err(Error::InvalidArgument(
            "frame-synchronous inference needs an epsilon-free graph".into(),
        ));
    }
    Ok(())
}

/// Log forward variables, `alpha[t][s]` after consuming `t` frames.
fn forward(graph: &WeightedGraph, scores: &FrameScores) -> Vec<Vec<f64>> {
    let n = graph.num_states();
    let frames = scores.frames();
    let mut alpha = Vec::with_capacity(frames + 1);
    let mut a0 = vec![f64::NEG_INFINITY; n];
    a0[graph.start() as usize] = 0.0;
    alpha.push(a0);
    let mut mx = vec![f64::NEG_INFINITY; n];
    let mut acc = vec![0.0; n];
    for t in 0..frames {
        let prev = &alpha[t];
        let row = scores.row(t);
        mx.fill(f64::NEG_INFINITY);
        for a in graph.arcs() {
            let p = prev[a.src as usize];
            if p == f64::NEG_INFINITY {
                continue;
            }
            let v = p + a.log_weight + row[a.pdf.unwrap() as usize];
            let m = &mut mx[a.dst as usize];
            if v > *m {
                *m = v;
            }
        }
        acc.fill(0.0);
        for a in graph.arcs() {
            let p = prev[a.src as usize];
            if p == f64::NEG_INFINITY {
                continue;
            }
            let v = p + a.log_weight + row[a.pdf.unwrap() as usize];
            acc[a.dst as usize] += (v - mx[a.dst as usize]).exp();
        }
        let next: Vec<f64> = mx
            .iter()
            .zip(&acc)
            .map(|(&m, &s)| if m == f64::NEG_INFINITY { m } else { m + s.ln() })
            .collect();
        alpha.push(next);
    }
    alpha
}

/// Log backward variables, `beta[t][s]` = completions from `s` after `t` frames.
fn backward(graph: &WeightedGraph, scores: &FrameScores) -> Vec<Vec<f64>> {
    let n = graph.num_states();
    let frames = scores.frames();
    let mut beta = vec![Vec::new(); frames + 1];
    beta[frames] = graph.finals().to_vec();
    let mut terms = Vec::new();
    for t in (0..frames).rev() {
        let row = scores.row(t);
        let next = &beta[t + 1];
        let mut cur = vec![f64::NEG_INFINITY; n];
        for (s, c) in cur.iter_mut().enumerate() {
            terms.clear();
            for a in graph.arcs_from(s as u32) {
                let b = next[a.dst as usize];
                if b > f64::NEG_INFINITY {
                    terms.push(a.log_weight + row[a.pdf.unwrap() as usize] + b);
                }
            }
            if !terms.is_empty() {
                *c = super::scores::log_sum_exp(&terms);
            }
        }
        beta[t] = cur;
    }
    beta
}

/// Total log score of all `T`-frame paths and per-frame pdf occupancies.
pub fn forward_backward(graph: &WeightedGraph, scores: &FrameScores) -> Result<ForwardBackward> {
    check_inputs(graph, scores)?;
    let frames = scores.frames();
    let alpha = forward(graph, scores);
    let last = &alpha[frames];
    let finals: Vec<f64> = last
        .iter()
        .zip(graph.finals())
        .map(|(a, f)| a + f)
        .collect();
    let log_total = super::scores::log_sum_exp(&finals);
    if log_total == f64::NEG_INFINITY {
        return Err(Error::Infeasible { frames });
    }
    let beta = backward(graph, scores);
    let mut occ = Array2::<f64>::zeros((frames, graph.pdf_count()));
    for t in 0..frames {
        let row = scores.row(t);
        let (prev, next) = (&alpha[t], &beta[t + 1]);
        let mut out = occ.row_mut(t);
        for a in graph.arcs() {
            let (p, b) = (prev[a.src as usize], next[a.dst as usize]);
            if p == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                continue;
            }
            let pdf = a.pdf.unwrap() as usize;
            out[pdf] += (p + a.log_weight + row[pdf] + b - log_total).exp();
        }
    }
    Ok(ForwardBackward {
        log_total,
        occupancies: PosteriorTable(occ),
    })
}

/// Forward pass only: total log score of all `T`-frame paths.
pub fn log_total(graph: &WeightedGraph, scores: &FrameScores) -> Result<f64> {
    check_inputs(graph, scores)?;
    let frames = scores.frames();
    let alpha = forward(graph, scores);
    let finals: Vec<f64> = alpha[frames]
        .iter()
        .zip(graph.finals())
        .map(|(a, f)| a + f)
        .collect();
    let total = super::scores::log_sum_exp(&finals);
    if total == f64::NEG_INFINITY {
        return Err(Error::Infeasible { frames });
    }
    Ok(total)
}
