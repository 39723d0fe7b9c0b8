//! Immutable weighted finite-state graph over HMM states.
//!
//! Arcs are stored contiguously and sorted by source state; within a source
//! they keep construction order, which fixes iteration (and therefore
//! tie-breaking) order everywhere downstream.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub type StateId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub src: StateId,
    pub dst: StateId,
    /// Emitted pdf, `None` for epsilon.
    pub pdf: Option<u32>,
    /// Output token (decoding graphs only).
    pub label: Option<u32>,
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    num_states: usize,
    start: StateId,
    pdf_count: usize,
    arcs: Vec<Arc>,
    offsets: Vec<usize>,
    finals: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"LFG1";
const VERSION: u32 = 1;

/// Mutable construction buffer for a [`WeightedGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    num_states: usize,
    start: Option<StateId>,
    arcs: Vec<Arc>,
    finals: Vec<f64>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state(&mut self) -> StateId {
        self.num_states += 1;
        self.finals.push(f64::NEG_INFINITY);
        (self.num_states - 1) as StateId
    }

    pub fn set_start(&mut self, s: StateId) {
        self.start = Some(s);
    }

    pub fn set_final(&mut self, s: StateId, log_weight: f64) {
        self.finals[s as usize] = log_weight;
    }

    pub fn add_arc(&mut self, src: StateId, dst: StateId, pdf: Option<u32>, label: Option<u32>, log_weight: f64) {
        self.arcs.push(Arc {
            src,
            dst,
            pdf,
            label,
            log_weight,
        });
    }

    /// Validates, trims dead states and freezes the graph.
    pub fn build(self, pdf_count: usize) -> Result<WeightedGraph> {
        let start = self
            .start
            .ok_or_else(|| Error::InvalidArgument("graph has no start state".into()))?;
        for a in &self.arcs {
            if a.src as usize >= self.num_states || a.dst as usize >= self.num_states {
                return Err(Error::InvalidArgument(format!("arc {}->{} out of range", a.src, a.dst)));
            }
            if let Some(p) = a.pdf {
                if p as usize >= pdf_count {
                    return Err(Error::InvalidArgument(format!("pdf {p} >= pdf count {pdf_count}")));
                }
            }
            if a.log_weight.is_nan() || a.log_weight == f64::INFINITY {
                return Err(Error::InvalidArgument("arc weight must be finite or -inf".into()));
            }
        }
        trim(self.num_states, start, self.arcs, self.finals, pdf_count)
    }
}

fn trim(num_states: usize, start: StateId, arcs: Vec<Arc>, finals: Vec<f64>, pdf_count: usize) -> Result<WeightedGraph> {
    let live_arc = |a: &Arc| a.log_weight > f64::NEG_INFINITY;
    let mut access = vec![false; num_states];
    access[start as usize] = true;
    let mut stack = vec![start];
    let mut fwd: Vec<Vec<StateId>> = vec![Vec::new(); num_states];
    let mut bwd: Vec<Vec<StateId>> = vec![Vec::new(); num_states];
    for a in arcs.iter().filter(|a| live_arc(a)) {
        fwd[a.src as usize].push(a.dst);
        bwd[a.dst as usize].push(a.src);
    }
    while let Some(s) = stack.pop() {
        for &d in &fwd[s as usize] {
            if !access[d as usize] {
                access[d as usize] = true;
                stack.push(d);
            }
        }
    }
    let mut coaccess = vec![false; num_states];
    for (s, f) in finals.iter().enumerate() {
        if *f > f64::NEG_INFINITY {
            coaccess[s] = true;
            stack.push(s as StateId);
        }
    }
    while let Some(s) = stack.pop() {
        for &p in &bwd[s as usize] {
            if !coaccess[p as usize] {
                coaccess[p as usize] = true;
                stack.push(p);
            }
        }
    }
    if !(access[start as usize] && coaccess[start as usize]) {
        return Err(Error::InvalidArgument("graph accepts no path".into()));
    }
    let mut remap = vec![u32::MAX; num_states];
    let mut kept = 0u32;
    for s in 0..num_states {
        if access[s] && coaccess[s] {
            remap[s] = kept;
            kept += 1;
        }
    }
    let mut new_arcs: Vec<Arc> = arcs
        .into_iter()
        .filter(|a| live_arc(a) && remap[a.src as usize] != u32::MAX && remap[a.dst as usize] != u32::MAX)
        .map(|a| Arc {
            src: remap[a.src as usize],
            dst: remap[a.dst as usize],
            ..a
        })
        .collect();
    // stable: keeps construction order within a source state
    new_arcs.sort_by_key(|a| a.src);
    let new_finals: Vec<f64> = (0..num_states)
        .filter(|&s| remap[s] != u32::MAX)
        .map(|s| finals[s])
        .collect();
    Ok(WeightedGraph::from_sorted(kept as usize, remap[start as usize], pdf_count, new_arcs, new_finals))
}

impl WeightedGraph {
    fn from_sorted(num_states: usize, start: StateId, pdf_count: usize, arcs: Vec<Arc>, finals: Vec<f64>) -> Self {
        let mut offsets = vec![0usize; num_states + 1];
        for a in &arcs {
            offsets[a.src as usize + 1] += 1;
        }
        for s in 0..num_states {
            offsets[s + 1] += offsets[s];
        }
        Self {
            num_states,
            start,
            pdf_count,
            arcs,
            offsets,
            finals,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn pdf_count(&self) -> usize {
        self.pdf_count
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Arc index range leaving `s`.
    pub fn arc_range(&self, s: StateId) -> std::ops::Range<usize> {
        self.offsets[s as usize]..self.offsets[s as usize + 1]
    }

    pub fn arcs_from(&self, s: StateId) -> &[Arc] {
        &self.arcs[self.arc_range(s)]
    }

    /// Final log-weight, `-inf` for non-final states.
    pub fn final_weight(&self, s: StateId) -> f64 {
        self.finals[s as usize]
    }

    pub fn finals(&self) -> &[f64] {
        &self.finals
    }

    pub fn is_epsilon_free(&self) -> bool {
        self.arcs.iter().all(|a| a.pdf.is_some())
    }

    /// Copy of the graph with all output labels removed.
    pub fn without_labels(&self) -> Self {
        let mut g = self.clone();
        for a in &mut g.arcs {
            a.label = None;
        }
        g
    }

    /// Whether some start→final path emits exactly `pdfs` (epsilon-free graphs).
    pub fn accepts(&self, pdfs: &[u32]) -> bool {
        let mut cur = vec![false; self.num_states];
        cur[self.start as usize] = true;
        for &p in pdfs {
            let mut next = vec![false; self.num_states];
            for a in &self.arcs {
                if cur[a.src as usize] && a.pdf == Some(p) {
                    next[a.dst as usize] = true;
                }
            }
            cur = next;
        }
        cur.iter()
            .zip(&self.finals)
            .any(|(&on, &f)| on && f > f64::NEG_INFINITY)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.num_states as u32)?;
        w.write_u32::<LittleEndian>(self.start)?;
        w.write_u32::<LittleEndian>(self.pdf_count as u32)?;
        w.write_u32::<LittleEndian>(self.arcs.len() as u32)?;
        for f in &self.finals {
            w.write_f64::<LittleEndian>(*f)?;
        }
        for a in &self.arcs {
            w.write_u32::<LittleEndian>(a.src)?;
            w.write_u32::<LittleEndian>(a.dst)?;
            w.write_i32::<LittleEndian>(a.pdf.map_or(-1, |p| p as i32))?;
            w.write_i32::<LittleEndian>(a.label.map_or(-1, |l| l as i32))?;
            w.write_f64::<LittleEndian>(a.log_weight)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptArchive(format!("graph: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let mut header = [0u32; 4];
        for h in &mut header {
            *h = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
        }
        let [num_states, start, pdf_count, num_arcs] = header.map(|x| x as usize);
        let mut finals = Vec::with_capacity(num_states);
        for _ in 0..num_states {
            finals.push(r.read_f64::<LittleEndian>().map_err(|_| corrupt("truncated finals"))?);
        }
        let mut arcs = Vec::with_capacity(num_arcs);
        for _ in 0..num_arcs {
            let mut rd = || -> std::io::Result<Arc> {
                let src = r.read_u32::<LittleEndian>()?;
                let dst = r.read_u32::<LittleEndian>()?;
                let pdf = r.read_i32::<LittleEndian>()?;
                let label = r.read_i32::<LittleEndian>()?;
                let log_weight = r.read_f64::<LittleEndian>()?;
                Ok(Arc {
                    src,
                    dst,
                    pdf: (pdf >= 0).then_some(pdf as u32),
                    label: (label >= 0).then_some(label as u32),
                    log_weight,
                })
            };
            arcs.push(rd().map_err(|_| corrupt("truncated arcs"))?);
        }
        if start >= num_states.max(1) {
            return Err(corrupt("start state out of range"));
        }
        for (i, a) in arcs.iter().enumerate() {
            if a.src as usize >= num_states || a.dst as usize >= num_states {
                return Err(corrupt(&format!("arc {i} out of range")));
            }
            if a.pdf.is_some_and(|p| p as usize >= pdf_count) {
                return Err(corrupt(&format!("arc {i} pdf out of range")));
            }
            if i > 0 && arcs[i - 1].src > a.src {
                return Err(corrupt("arcs not sorted by source"));
            }
        }
        Ok(Self::from_sorted(num_states, start as StateId, pdf_count, arcs, finals))
    }

    /// Human-readable dump: one arc per line (`src dst pdf log_weight
    /// [label]`, `<eps>` for epsilon), then one `state log_weight` line per
    /// final state.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# start {} states {} pdfs {}", self.start, self.num_states, self.pdf_count)?;
        for a in &self.arcs {
            let pdf = a.pdf.map_or_else(|| "<eps>".to_string(), |p| p.to_string());
            match a.label {
                Some(l) => writeln!(w, "{} {} {} {} {}", a.src, a.dst, pdf, a.log_weight, l)?,
                None => writeln!(w, "{} {} {} {}", a.src, a.dst, pdf, a.log_weight)?,
            }
        }
        for (s, f) in self.finals.iter().enumerate() {
            if *f > f64::NEG_INFINITY {
                writeln!(w, "{s} {f}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> WeightedGraph {
        let mut b = GraphBuilder::new();
        let s0 = b.add_state();
        let s1 = b.add_state();
        let s2 = b.add_state();
        let dead = b.add_state();
        b.set_start(s0);
        b.add_arc(s1, s2, Some(1), Some(7), -0.5);
        b.add_arc(s0, s1, Some(0), None, -0.25);
        b.add_arc(s0, dead, Some(0), None, 0.0);
        b.add_arc(s1, s1, Some(0), None, -1.0);
        b.set_final(s2, -0.1);
        b.build(2).unwrap()
    }

    #[test]
    fn build_sorts_and_trims() {
        let g = tiny();
        assert_eq!(g.num_states(), 3);
        assert_eq!(g.num_arcs(), 3);
        let srcs: Vec<_> = g.arcs().iter().map(|a| a.src).collect();
        assert_eq!(srcs, vec![0, 1, 1]);
        // construction order kept within source 1
        assert_eq!(g.arcs_from(1)[0].dst, 2);
        assert!(g.accepts(&[0, 1]));
        assert!(g.accepts(&[0, 0, 1]));
        assert!(!g.accepts(&[0]));
    }

    #[test]
    fn rejects_out_of_range_pdf() {
        let mut b = GraphBuilder::new();
        let s = b.add_state();
        b.set_start(s);
        b.add_arc(s, s, Some(5), None, 0.0);
        b.set_final(s, 0.0);
        assert!(b.build(2).is_err());
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let g = tiny();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LFG1");
        let back = WeightedGraph::read_binary(&buf[..]).unwrap();
        assert_eq!(back, g);
        let err = WeightedGraph::read_binary(&buf[..buf.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::CorruptArchive(_)));
    }

    #[test]
    fn text_dump_has_one_line_per_arc() {
        let g = tiny();
        let mut out = Vec::new();
        g.write_text(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), g.num_arcs() + 1);
        assert_eq!(lines[0], "0 1 0 -0.25");
        assert_eq!(lines[1], "1 2 1 -0.5 7");
        assert_eq!(lines[3], "2 -0.1");
    }
}
