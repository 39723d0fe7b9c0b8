use std::collections::BTreeMap;
use std::fs;

use lfmmi_adapt::config::ExperimentConfig;
use lfmmi_adapt::corpus::{generate_corpus, load_corpus, save_corpus, silence_pad, ARCHIVE_FILE, MANIFEST_FILE, META_FILE};
use lfmmi_adapt::experiment::{decode_corpus, prepare, references, run_experiment, Prepared, Timing};
use lfmmi_adapt::graph::GraphSet;
use lfmmi_adapt::metrics::score_token_error_rate;
use lfmmi_adapt::rng::stream;

fn small(extra: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_overrides(&[
        "train_speakers=8",
        "test_speakers=4",
        "utts_per_speaker=16",
        "train_epochs=8",
        "adapt_epochs=4",
        "conditions=si,lhuc-oracle",
    ])
    .unwrap();
    cfg.apply_overrides(extra).unwrap();
    cfg
}

fn ter_of(p: &Prepared, corpus: &lfmmi_adapt::corpus::Corpus) -> f64 {
    let hyps = decode_corpus(&p.si, &p.graphs, corpus, &BTreeMap::new()).unwrap();
    score_token_error_rate(&hyps, &references(corpus)).unwrap().ter
}

#[test]
fn saving_twice_gives_identical_bytes() {
    let cfg = small(&[]);
    let inv = cfg.inventory().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let c = generate_corpus(&inv, &cfg.corpus_spec("test", 3)).unwrap();
        save_corpus(d.path(), &c).unwrap();
    }
    for f in [ARCHIVE_FILE, MANIFEST_FILE, META_FILE] {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        let b = fs::read(dirs[1].path().join(f)).unwrap();
        assert!(!a.is_empty() && a == b, "{f}");
    }
    let back = load_corpus(dirs[0].path()).unwrap();
    assert_eq!(back, generate_corpus(&inv, &cfg.corpus_spec("test", 3)).unwrap());
}

#[test]
fn splits_and_seeds_give_different_data() {
    let cfg = small(&[]);
    let inv = cfg.inventory().unwrap();
    let a = generate_corpus(&inv, &cfg.corpus_spec("train", 2)).unwrap();
    let b = generate_corpus(&inv, &cfg.corpus_spec("test", 2)).unwrap();
    assert_ne!(a.utterances[0].features, b.utterances[0].features);
    let mut other = cfg.clone();
    other.seed += 1;
    let c = generate_corpus(&inv, &other.corpus_spec("train", 2)).unwrap();
    assert_ne!(a.utterances[0].labels, c.utterances[0].labels);
    // speaker profiles do not shift the per-utterance streams
    let flat = small(&["max_scale=1", "offset_std=0"]);
    let d = generate_corpus(&inv, &flat.corpus_spec("train", 2)).unwrap();
    for (x, y) in a.utterances.iter().zip(&d.utterances) {
        assert_eq!(x.labels, y.labels);
        assert_eq!(x.frames(), y.frames());
    }
}

#[test]
fn padded_supervision_stays_feasible() {
    let cfg = small(&[]);
    let inv = cfg.inventory().unwrap();
    let corpus = generate_corpus(&inv, &cfg.corpus_spec("train", 2)).unwrap();
    let graphs = GraphSet::from_references(inv, cfg.states_per_unit, cfg.lm_order, &corpus.label_corpus()).unwrap();
    let sil = graphs.inventory.silence();
    let mut rng = stream(7, "pad-test", &[]);
    for u in &corpus.utterances {
        for extra in [0, 1, 5] {
            let p = silence_pad(u, u.frames() + extra, &corpus.meta.silence_model, sil, &mut rng).unwrap();
            assert_eq!(p.frames(), u.frames() + extra);
            assert_eq!(p.features.slice(ndarray::s![..u.frames(), ..]), u.features);
            if extra > 0 {
                assert_eq!(p.labels.last(), Some(&sil));
            }
            graphs.numerator(&p.labels, p.frames()).unwrap();
        }
        assert!(silence_pad(u, u.frames() - 1, &corpus.meta.silence_model, sil, &mut rng).is_err());
    }
}

/// Stretching half of the feature dimensions at test time moves the data
/// away from what the SI model saw; pooled over seeds it must decode worse.
#[test]
fn feature_scaling_mismatch_hurts_the_si_model() {
    let (mut matched, mut mismatched) = (0.0, 0.0);
    for seed in [42, 43, 44] {
        let seed = format!("seed={seed}");
        let cfg = small(&["max_scale=1", "offset_std=0", "train_speakers=16", "train_epochs=16", &seed]);
        let p = prepare(&cfg, &mut Timing::default()).unwrap();
        let mut stretched = p.test.clone();
        let half = cfg.dim / 2;
        for u in &mut stretched.utterances {
            u.features.slice_mut(ndarray::s![.., ..half]).mapv_inplace(|x| 1.5 * x);
        }
        let (a, b) = (ter_of(&p, &p.test), ter_of(&p, &stretched));
        println!("{seed}: matched {a:.4} mismatched {b:.4}");
        matched += a;
        mismatched += b;
    }
    assert!(mismatched > matched, "{mismatched} !> {matched}");
}

/// With every speaker on the identity profile there is nothing to adapt to,
/// so the oracle adaptation gain should vanish compared with a distorted
/// corpus of the same size.
#[test]
fn adaptation_gain_needs_speaker_variation() {
    let gain = |extra: &[&str]| {
        let r = run_experiment(&small(extra)).unwrap().0;
        r.conditions[1].relative_reduction.unwrap()
    };
    let (mut control, mut distorted) = (0.0, 0.0);
    for seed in [42, 43, 44] {
        let seed = format!("seed={seed}");
        let c = gain(&["max_scale=1", "offset_std=0", &seed]);
        let d = gain(&[&seed]);
        println!("{seed}: control {c:.4} distorted {d:.4}");
        control += c / 3.0;
        distorted += d / 3.0;
    }
    assert!(control.abs() <= 0.02, "{control}");
    assert!(distorted > control + 0.03, "{distorted} vs {control}");
}
