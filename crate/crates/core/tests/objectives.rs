mod common;

use common::{enumerate_paths, enumerated_posteriors, lse, random_graph, random_scores, rng};
use lfmmi_adapt::graph::{
    build_decoding_graph, build_denominator_graph, build_hmm_topology, build_lm_numerator_graph, estimate_token_ngram, ContextMode, GraphBuilder,
    TokenInventory,
};
use lfmmi_adapt::inference::{softmax_rows, FrameScores, PosteriorTable};
use lfmmi_adapt::objective::{ce_loss_and_headgrad, lfmmi_loss_and_headgrad, lfmmi_with_occupancies};
use ndarray::Array2;
use proptest::prelude::*;

fn scores(m: &Array2<f64>) -> FrameScores {
    FrameScores::new(m.clone()).unwrap()
}

#[test]
fn lfmmi_loss_and_gradient_match_enumeration() {
    let mut r = rng(3);
    let mut tested = 0;
    while tested < 40 {
        let frames = 4;
        let (Some(num), Some(den)) = (random_graph(&mut r, 3, 3, 2, false), random_graph(&mut r, 4, 3, 3, false)) else {
            continue;
        };
        let m = random_scores(&mut r, frames, 3, 2.0);
        let np = enumerate_paths(&num, Some(&m), frames);
        let dp = enumerate_paths(&den, Some(&m), frames);
        if np.is_empty() || dp.is_empty() {
            continue;
        }
        tested += 1;
        let (loss, grad, occ) = lfmmi_with_occupancies(&num, &den, &scores(&m)).unwrap();
        let want = -(lse(np.iter().map(|p| p.score)) - lse(dp.iter().map(|p| p.score)));
        assert!((loss - want).abs() < 1e-10);
        let want_grad = enumerated_posteriors(&dp, frames, 3) - enumerated_posteriors(&np, frames, 3);
        assert!(grad.iter().zip(&want_grad).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(occ.max_row_sum_error() < 1e-10);

        // central differences on the head scores
        let h = 1e-5;
        for t in 0..frames {
            for p in 0..3 {
                let mut up = m.clone();
                up[[t, p]] += h;
                let mut down = m.clone();
                down[[t, p]] -= h;
                let fd = (lfmmi_loss_and_headgrad(&num, &den, &scores(&up)).unwrap().0
                    - lfmmi_loss_and_headgrad(&num, &den, &scores(&down)).unwrap().0)
                    / (2.0 * h);
                assert!((fd - grad[[t, p]]).abs() < 1e-6 * grad[[t, p]].abs().max(1.0));
            }
        }
    }
}

#[test]
fn ce_against_one_hot_targets_is_frame_cross_entropy() {
    let mut r = rng(4);
    let m = random_scores(&mut r, 3, 4, 2.0);
    let mut t = Array2::zeros((3, 4));
    for (frame, pdf) in [(0, 2), (1, 0), (2, 3)] {
        t[[frame, pdf]] = 1.0;
    }
    let (loss, grad) = ce_loss_and_headgrad(&PosteriorTable(t.clone()), &scores(&m)).unwrap();
    let p = softmax_rows(&m);
    let want: f64 = [(0, 2), (1, 0), (2, 3)].iter().map(|&(f, d)| -p[[f, d]].ln()).sum();
    assert!((loss - want).abs() < 1e-12);
    assert!(grad.iter().zip((&p - &t).iter()).all(|(a, b)| (a - b).abs() < 1e-15));
}

#[test]
fn ce_gradient_matches_differences() {
    let mut r = rng(5);
    let m = random_scores(&mut r, 4, 5, 2.0);
    let t = PosteriorTable(softmax_rows(&random_scores(&mut r, 4, 5, 1.0)));
    let (_, grad) = ce_loss_and_headgrad(&t, &scores(&m)).unwrap();
    let h = 1e-5;
    for idx in 0..20 {
        let (f, d) = (idx / 5, idx % 5);
        let mut up = m.clone();
        up[[f, d]] += h;
        let mut down = m.clone();
        down[[f, d]] -= h;
        let fd = (ce_loss_and_headgrad(&t, &scores(&up)).unwrap().0 - ce_loss_and_headgrad(&t, &scores(&down)).unwrap().0)
            / (2.0 * h);
        assert!((fd - grad[[f, d]]).abs() <= 1e-4 * grad[[f, d]].abs().max(1e-6));
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let t = PosteriorTable(Array2::zeros((2, 3)));
    assert!(ce_loss_and_headgrad(&t, &scores(&Array2::zeros((3, 3)))).is_err());
    let mut b = GraphBuilder::new();
    let s0 = b.add_state();
    let s1 = b.add_state();
    b.set_start(s0);
    b.add_arc(s0, s1, Some(0), None, 0.0);
    b.set_final(s1, 0.0);
    let g = b.build(2).unwrap();
    assert!(lfmmi_loss_and_headgrad(&g, &g, &scores(&Array2::zeros((1, 3)))).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Numerators built by restricting the decoding graph to the labels are
    /// sub-languages of the denominator with the same weights.
    #[test]
    fn lm_numerator_loss_is_non_negative(
        labels in proptest::collection::vec(1u32..3, 1..3),
        extra in 0usize..4,
        seed in 0u64..1000,
    ) {
        let inv = TokenInventory::new(&["sil", "a", "b"], "sil", ContextMode::Mono).unwrap();
        let topo = build_hmm_topology(2).unwrap();
        let lm = estimate_token_ngram(&[vec![0, 1, 2, 0], vec![0, 2, 2, 1, 0], vec![0, 1, 0]], 3, 2).unwrap();
        let den = build_denominator_graph(&lm, &topo, &inv).unwrap();
        let dec = build_decoding_graph(&lm, &topo, &inv).unwrap();
        let frames = 2 * labels.len() + extra;
        let num = build_lm_numerator_graph(&labels, &dec, &topo, &inv, frames).unwrap();
        let mut r = rng(seed);
        let m = random_scores(&mut r, frames, inv.pdf_count(2), 3.0);
        let (loss, grad) = lfmmi_loss_and_headgrad(&num, &den, &scores(&m)).unwrap();
        prop_assert!(loss >= -1e-12, "{}", loss);
        for row in grad.rows() {
            prop_assert!(row.sum().abs() < 1e-10);
        }
    }
}
