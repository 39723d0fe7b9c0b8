use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One fixed HMM transition. `to == states_per_unit` denotes the exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub prob: f64,
}

/// Flat-start HMM topology shared by every unit.
///
/// Transition probabilities are uniform over each state's outgoing arcs and
/// are never trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmTopology {
    states_per_unit: usize,
    transitions: Vec<Transition>,
}

/// Linear left-to-right chain with a self-loop on every state.
pub fn build_hmm_topology(states_per_unit: usize) -> Result<HmmTopology> {
    if states_per_unit == 0 {
        return Err(Error::InvalidArgument("HMM topology needs at least one state".into()));
    }
    let mut transitions = Vec::with_capacity(2 * states_per_unit);
    for s in 0..states_per_unit {
        // self-loop and forward (the last state's forward arc is the exit)
        transitions.push(Transition { from: s, to: s, prob: 0.5 });
        transitions.push(Transition { from: s, to: s + 1, prob: 0.5 });
    }
    Ok(HmmTopology {
        states_per_unit,
        transitions,
    })
}

impl HmmTopology {
    pub fn states_per_unit(&self) -> usize {
        self.states_per_unit
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Index used as the exit target.
    pub fn exit(&self) -> usize {
        self.states_per_unit
    }

    /// Transitions leaving `state`, in declaration order.
    pub fn outgoing(&self, state: usize) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == state)
    }

    /// Log probability of leaving the unit from `state`, if possible.
    pub fn exit_log_prob(&self, state: usize) -> Option<f64> {
        self.outgoing(state)
            .find(|t| t.to == self.exit())
            .map(|t| t.prob.ln())
    }

    /// Fewest frames needed to traverse one unit from entry to exit.
    pub fn min_frames(&self) -> usize {
        // BFS over emitting states; entering state 0 costs one frame.
        let n = self.states_per_unit;
        let mut dist = vec![usize::MAX; n];
        dist[0] = 1;
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut best = usize::MAX;
        while let Some(s) = queue.pop_front() {
            for t in self.outgoing(s) {
                if t.to == n {
                    best = best.min(dist[s]);
                } else if dist[t.to] == usize::MAX {
                    dist[t.to] = dist[s] + 1;
                    queue.push_back(t.to);
                }
            }
        }
        best
    }

    /// Number of state paths through a single unit that take exactly
    /// `frames` frames and then exit.
    pub fn count_paths(&self, frames: usize) -> u64 {
        let n = self.states_per_unit;
        if frames == 0 {
            return 0;
        }
        let mut cur = vec![0u64; n];
        cur[0] = 1;
        for _ in 1..frames {
            let mut next = vec![0u64; n];
            for t in &self.transitions {
                if t.to < n {
                    next[t.to] += cur[t.from];
                }
            }
            cur = next;
        }
        self.transitions
            .iter()
            .filter(|t| t.to == n)
            .map(|t| cur[t.from])
            .sum()
    }

    /// Checks the row-stochastic and connectivity invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.states_per_unit;
        for s in 0..n {
            let sum: f64 = self.outgoing(s).map(|t| t.prob).sum();
            if sum != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "outgoing probabilities of state {s} sum to {sum}"
                )));
            }
        }
        let mut reach = vec![false; n + 1];
        reach[0] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for t in &self.transitions {
                if reach[t.from] && !reach[t.to] {
                    reach[t.to] = true;
                    changed = true;
                }
            }
        }
        let mut coreach = vec![false; n + 1];
        coreach[n] = true;
        changed = true;
        while changed {
            changed = false;
            for t in &self.transitions {
                if coreach[t.to] && !coreach[t.from] {
                    coreach[t.from] = true;
                    changed = true;
                }
            }
        }
        if reach.iter().zip(&coreach).any(|(a, b)| !a || !b) {
            return Err(Error::InvalidArgument("topology has unreachable states".into()));
        }
        Ok(())
    }
}
