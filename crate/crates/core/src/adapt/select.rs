//! Confidence scores, confidence-based data selection and length buckets.

use crate::error::{Error, Result};
use crate::inference::{lattice_frame_posteriors, BestPath, Lattice};

/// Mean over frames of the lattice posterior of the best path's pdf.
pub fn confidence_score(lattice: &Lattice, best: &BestPath) -> Result<f64> {
    if best.pdfs.len() != lattice.frames() {
        return Err(Error::DimensionMismatch {
            what: "best path length",
            expected: lattice.frames(),
            got: best.pdfs.len(),
        });
    }
    let post = lattice_frame_posteriors(lattice);
    let sum: f64 = best.pdfs.iter().enumerate().map(|(t, &p)| post.get(t, p)).sum();
    Ok((sum / best.pdfs.len() as f64).clamp(0.0, 1.0))
}

/// Indices (ascending) of the `ceil(rate * n)` highest-scoring items; equal
/// scores are ranked by id.
pub fn select_by_confidence<S: AsRef<str>>(items: &[(S, f64)], rate: f64) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("selection rate must be in (0, 1], got {rate}")));
    }
    if items.is_empty() {
        return Ok(Vec::new());
    }
    // guard against 0.7 * 10 = 7.000000000000001
    let keep = ((rate * items.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .1
            .total_cmp(&items[a].1)
            .then_with(|| items[a].0.as_ref().cmp(items[b].0.as_ref()))
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// Smallest bucket not shorter than `length`.
pub fn bucket_utterance_lengths(length: usize, buckets: &[usize]) -> Result<usize> {
    if buckets.is_empty() {
        return Err(Error::InvalidArgument("bucket table is empty".into()));
    }
    buckets
        .iter()
        .copied()
        .filter(|&b| b >= length)
        .min()
        .ok_or_else(|| Error::InvalidArgument(format!("length {length} exceeds the largest bucket")))
}

/// `count` geometrically spaced lengths from `min` to `max`, rounded up and
/// deduplicated; the ends are always included.
pub fn default_bucket_table(min: usize, max: usize, count: usize) -> Vec<usize> {
    let min = min.max(1);
    let max = max.max(min);
    if count < 2 || min == max {
        return vec![max];
    }
    let ratio = (max as f64 / min as f64).powf(1.0 / (count - 1) as f64);
    let mut out: Vec<usize> = (0..count)
        .map(|i| ((min as f64) * ratio.powi(i as i32) - 1e-9).ceil() as usize)
        .map(|b| b.clamp(min, max))
        .collect();
    out[0] = min;
    *out.last_mut().unwrap() = max;
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_counts_and_ties() {
        let items: Vec<(String, f64)> = (0..10).map(|i| (format!("u{i}"), i as f64 / 10.0)).collect();
        assert_eq!(select_by_confidence(&items, 0.8).unwrap(), vec![2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(select_by_confidence(&items, 1.0).unwrap().len(), 10);
        assert_eq!(select_by_confidence(&items, 0.7).unwrap().len(), 7);
        let tied = vec![("c", 0.5), ("a", 0.5), ("b", 0.5), ("d", 0.9)];
        assert_eq!(select_by_confidence(&tied, 0.5).unwrap(), vec![1, 3]);
        assert!(select_by_confidence::<&str>(&[], 0.5).unwrap().is_empty());
        assert!(select_by_confidence(&tied, 0.0).is_err());
    }

    #[test]
    fn buckets() {
        let b = [20, 25, 30, 35, 40, 50];
        assert_eq!(bucket_utterance_lengths(35, &b).unwrap(), 35);
        assert_eq!(bucket_utterance_lengths(37, &b).unwrap(), 40);
        assert!(bucket_utterance_lengths(51, &b).is_err());
        assert!(bucket_utterance_lengths(1, &[]).is_err());
    }

    #[test]
    fn default_table_is_geometric() {
        let t = default_bucket_table(100, 1000, 40);
        assert_eq!(t.len(), 40);
        assert_eq!((t[0], t[39]), (100, 1000));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        let r = (10f64).powf(1.0 / 39.0);
        for (i, &b) in t.iter().enumerate().skip(1).take(38) {
            assert_eq!(b, (100.0 * r.powi(i as i32) - 1e-9).ceil() as usize);
        }
        // short ranges collapse duplicates
        let s = default_bucket_table(10, 20, 40);
        assert_eq!(s, (10..=20).collect::<Vec<_>>());
    }
}
