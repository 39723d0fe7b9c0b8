//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{enumerate_paths, enumerated_posteriors, lse, random_graph, random_scores, rng, EnumeratedPath};
use lfmmi_adapt::adapt::{
    blhuc_step_loss, estimate_blhuc_traced, estimate_lhuc_traced, gaussian_kl, AdaptConfig, AdaptItem, PriorSpec,
};
use lfmmi_adapt::config::ExperimentConfig;
use lfmmi_adapt::experiment::{run_experiment, ConditionResult, MetricsReport};
use lfmmi_adapt::graph::WeightedGraph;
use lfmmi_adapt::inference::{
    forward_backward, generate_lattice, lattice_frame_posteriors, viterbi_best_path,
    FrameScores, PosteriorTable,
};
use lfmmi_adapt::net::{forward, AcousticNet, GradRequest, LhucParams, NetConfig};
use lfmmi_adapt::objective::{ce_loss_and_headgrad, lfmmi_loss_and_headgrad, utterance_objective, ObjectiveConfig};
use lfmmi_adapt::report::render_json;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: [u64; 5] = [42, 43, 44, 45, 46];

struct Outcome {
    pass: bool,
    summary: String,
}

fn report(id: u32, title: &str, elapsed: Duration, limit: Option<Duration>, o: Outcome) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    let budget = limit.map_or_else(String::new, |l| format!(" (limit {}s)", l.as_secs()));
    println!(
        "criterion {id} {title}: {} | {} | {:.1}s{budget}",
        if pass { "PASS" } else { "FAIL" },
        o.summary,
        elapsed.as_secs_f64()
    );
    pass
}

// ---------------------------------------------------------------- gradients

/// Component-wise agreement: relative error within `1e-4`, or both values
/// indistinguishable from zero.
fn grad_matches(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-4 * analytic.abs().max(numeric.abs()) || diff <= 1e-9
}

fn central_difference(x: &mut [f64], i: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5 * x[i].abs().max(1.0);
    let old = x[i];
    x[i] = old + h;
    let up = f(x);
    x[i] = old - h;
    let down = f(x);
    x[i] = old;
    (up - down) / (2.0 * h)
}

/// Random graph pair feasible for `frames` frames.
fn feasible_pair(r: &mut ChaCha8Rng, frames: usize, pdfs: usize) -> (WeightedGraph, WeightedGraph) {
    let zero = FrameScores::new(Array2::zeros((frames, pdfs))).unwrap();
    loop {
        let states = r.random_range(2..=5);
        let Some(den) = random_graph(r, states, pdfs, 3, false) else { continue };
        let states = r.random_range(2..=4);
        let Some(num) = random_graph(r, states, pdfs, 2, false) else { continue };
        let ok = |g: &WeightedGraph| forward_backward(g, &zero).is_ok_and(|fb| fb.log_total.is_finite());
        if ok(&den) && ok(&num) {
            return (num, den);
        }
    }
}

/// Interpolated loss with CE targets held fixed.
fn frozen_loss(
    cfg: &ObjectiveConfig,
    net: &AcousticNet,
    x: &Array2<f64>,
    lhuc: Option<&LhucParams>,
    num: &WeightedGraph,
    den: &WeightedGraph,
    targets: &PosteriorTable,
) -> f64 {
    let out = forward(net, x, lhuc).unwrap();
    let (mmi, _) = lfmmi_loss_and_headgrad(num, den, &out.lfmmi_scores().unwrap()).unwrap();
    let (ce, _) = ce_loss_and_headgrad(targets, &out.ce_scores().unwrap()).unwrap();
    (cfg.gamma1 * mmi + cfg.gamma2 * ce) / x.nrows() as f64
}

fn targets_at(net: &AcousticNet, x: &Array2<f64>, lhuc: Option<&LhucParams>, num: &WeightedGraph) -> PosteriorTable {
    let out = forward(net, x, lhuc).unwrap();
    forward_backward(num, &out.lfmmi_scores().unwrap()).unwrap().occupancies
}

fn random_lhuc(r: &mut ChaCha8Rng, net: &AcousticNet, scale: f64) -> LhucParams {
    let mut p = LhucParams::identity(&net.widths(), &[0, 1, 2]);
    let flat: Vec<f64> = (0..p.dim()).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect();
    p.set_flat(&flat);
    p
}

#[derive(Default)]
struct Tally {
    passed: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, a: f64, n: f64) {
        self.total += 1;
        self.passed += usize::from(grad_matches(a, n));
    }

    fn fraction(&self) -> f64 {
        self.passed as f64 / self.total.max(1) as f64
    }
}

fn gradient_trial(seed: u64, weights: &mut Tally, lhuc: &mut Tally, mu_t: &mut Tally, ls_t: &mut Tally) {
    let mut r = rng(seed);
    let dim = 5;
    let pdfs = r.random_range(3..=6);
    let frames = r.random_range(2..=5);
    let net = AcousticNet::new(&NetConfig::new(dim, vec![16, 16, 16], pdfs), &mut r).unwrap();
    let x = Array2::from_shape_fn((frames, dim), |_| r.sample::<f64, _>(StandardNormal));
    let (num, den) = feasible_pair(&mut r, frames, pdfs);
    let obj = ObjectiveConfig::new(1.0, 0.1).unwrap();
    let p = random_lhuc(&mut r, &net, 0.5);

    // network weights and r, jointly from one backward pass
    let out = forward(&net, &x, Some(&p)).unwrap();
    let u = utterance_objective(&obj, &num, &den, &out).unwrap();
    let g = out
        .tape
        .backward(&net, Some(&u.lfmmi_grad), Some(&u.ce_grad), GradRequest::BOTH)
        .unwrap();
    let targets = targets_at(&net, &x, Some(&p), &num);
    let analytic = g.net.unwrap().to_flat();
    let mut theta = net.to_flat();
    let mut probe = net.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let n = central_difference(&mut theta, i, &mut |t| {
            probe.set_flat(t);
            frozen_loss(&obj, &probe, &x, Some(&p), &num, &den, &targets)
        });
        weights.add(a, n);
    }
    let analytic = g.lhuc.unwrap().to_flat();
    let mut flat = p.to_flat();
    let mut q = p.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let n = central_difference(&mut flat, i, &mut |v| {
            q.set_flat(v);
            frozen_loss(&obj, &net, &x, Some(&q), &num, &den, &targets)
        });
        lhuc.add(a, n);
    }

    // Bayesian bound at fixed noise
    let mut cfg = AdaptConfig::default();
    cfg.objective = ObjectiveConfig::with_kl(1.0, 0.1, 0.7).unwrap();
    cfg.prior = PriorSpec {
        mu0: r.random_range(-0.5..0.5),
        sigma0: r.random_range(0.5..1.5),
    };
    let samples = 2;
    let mu = random_lhuc(&mut r, &net, 0.3);
    let log_sigma = mu.map(|_| r.random_range(-3.0..-0.5));
    let eps: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..mu.dim()).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let total_frames = frames + r.random_range(0..10);
    let item = AdaptItem {
        id: "u".into(),
        features: x.clone(),
        num: num.clone(),
        si_ce: None,
    };
    let (_, gmu, gls) = blhuc_step_loss(&net, &den, &item, &mu, &log_sigma, &eps, &cfg, total_frames).unwrap();
    let point = |m: &[f64], ls: &[f64], k: usize| -> Vec<f64> { (0..m.len()).map(|d| m[d] + ls[d].exp() * eps[k][d]).collect() };
    let m0 = mu.to_flat();
    let ls0 = log_sigma.to_flat();
    let frozen: Vec<PosteriorTable> = (0..samples)
        .map(|k| {
            let mut s = mu.clone();
            s.set_flat(&point(&m0, &ls0, k));
            targets_at(&net, &x, Some(&s), &num)
        })
        .collect();
    let bound = |m: &[f64], ls: &[f64]| -> f64 {
        let mut s = mu.clone();
        let mut data = 0.0;
        for (k, t) in frozen.iter().enumerate() {
            s.set_flat(&point(m, ls, k));
            data += frozen_loss(&cfg.objective, &net, &x, Some(&s), &num, &den, t);
        }
        let sigma: Vec<f64> = ls.iter().map(|l| l.exp()).collect();
        data / samples as f64 + cfg.objective.gamma3 * gaussian_kl(m, &sigma, &cfg.prior).unwrap() / total_frames as f64
    };
    let mut m = m0.clone();
    for (i, &a) in gmu.iter().enumerate() {
        let n = central_difference(&mut m, i, &mut |v| bound(v, &ls0));
        mu_t.add(a, n);
    }
    let mut ls = ls0.clone();
    for (i, &a) in gls.iter().enumerate() {
        let n = central_difference(&mut ls, i, &mut |v| bound(&m0, v));
        ls_t.add(a, n);
    }
}

fn criterion_gradients() -> Outcome {
    let (mut w, mut l, mut m, mut s) = (Tally::default(), Tally::default(), Tally::default(), Tally::default());
    for trial in 0..100 {
        gradient_trial(1000 + trial, &mut w, &mut l, &mut m, &mut s);
    }
    let parts = [("weights", &w), ("r", &l), ("mu", &m), ("log_sigma", &s)];
    let pass = parts.iter().all(|(_, t)| t.fraction() >= 0.99);
    let summary = parts
        .iter()
        .map(|(n, t)| format!("{n} {}/{} ({:.2}%)", t.passed, t.total, 100.0 * t.fraction()))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        pass,
        summary: format!("{summary} within 1e-4 over 100 trials"),
    }
}

// ---------------------------------------------------------------- inference

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn path_key(p: &EnumeratedPath) -> (Vec<u32>, Vec<u32>) {
    (p.pdfs.clone(), p.tokens.clone())
}

/// Checks one random instance; `None` when the instance is unusable.
fn inference_instance(seed: u64) -> Option<Result<(), String>> {
    let mut r = rng(seed);
    let pdfs = r.random_range(2..=5);
    let frames = r.random_range(1..=7);
    let states = r.random_range(2..=5);
    let g = random_graph(&mut r, states, pdfs, 3, true)?;
    let m = random_scores(&mut r, frames, pdfs, 2.0);
    let scores = FrameScores::new(m.clone()).unwrap();
    let paths = enumerate_paths(&g, Some(&m), frames);
    if paths.is_empty() || paths.len() > 10_000 {
        return None;
    }
    let beam = r.random_range(0.5..6.0);
    let check = || -> Result<(), String> {
        let fb = forward_backward(&g, &scores).map_err(|e| e.to_string())?;
        let total = lse(paths.iter().map(|p| p.score));
        if (fb.log_total - total).abs() > 1e-8 {
            return Err(format!("log total {} vs {}", fb.log_total, total));
        }
        let occ = enumerated_posteriors(&paths, frames, pdfs);
        let d = max_abs_diff(fb.occupancies.matrix(), &occ);
        if d > 1e-8 {
            return Err(format!("occupancy diff {d}"));
        }

        let best = paths
            .iter()
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .expect("non-empty");
        let vit = viterbi_best_path(&g, &scores).map_err(|e| e.to_string())?;
        if (vit.score - best.score).abs() > 1e-8 || vit.arcs != best.arcs {
            return Err(format!("viterbi {:?} {} vs {:?} {}", vit.arcs, vit.score, best.arcs, best.score));
        }

        let lat = generate_lattice(&g, &scores, beam).map_err(|e| e.to_string())?;
        let mut expect: Vec<&EnumeratedPath> = paths.iter().filter(|p| p.score >= best.score - beam).collect();
        expect.sort_by(|a, b| path_key(a).cmp(&path_key(b)).then(a.score.total_cmp(&b.score)));
        let mut got = lat.paths();
        got.sort_by(|a, b| (&a.pdfs, &a.tokens).cmp(&(&b.pdfs, &b.tokens)).then(a.score.total_cmp(&b.score)));
        if got.len() != expect.len() {
            return Err(format!("lattice has {} paths, brute force {}", got.len(), expect.len()));
        }
        for (a, b) in got.iter().zip(&expect) {
            if a.pdfs != b.pdfs || a.tokens != b.tokens || (a.score - b.score).abs() > 1e-8 {
                return Err("lattice path set differs".into());
            }
        }
        let kept: Vec<EnumeratedPath> = expect.into_iter().cloned().collect();
        let want = enumerated_posteriors(&kept, frames, pdfs);
        let d = max_abs_diff(lattice_frame_posteriors(&lat).matrix(), &want);
        if d > 1e-8 {
            return Err(format!("lattice posterior diff {d}"));
        }
        Ok(())
    };
    Some(check())
}

fn criterion_inference() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut seed = 5000;
    while checked < 200 {
        seed += 1;
        match inference_instance(seed) {
            None => continue,
            Some(Ok(())) => {}
            Some(Err(e)) => failures.push(format!("seed {seed}: {e}")),
        }
        checked += 1;
    }
    Outcome {
        pass: failures.is_empty(),
        summary: format!(
            "{}/200 instances agree with enumeration within 1e-8{}",
            200 - failures.len(),
            failures.first().map_or_else(String::new, |f| format!("; first failure {f}"))
        ),
    }
}

// ---------------------------------------------------------------- identities

fn bits(a: &Array2<f64>) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

fn criterion_degeneracy() -> Outcome {
    let mut notes = Vec::new();

    let mut identity_ok = true;
    for seed in 0..20 {
        let mut r = rng(seed);
        let net = AcousticNet::new(&NetConfig::new(6, vec![12, 9, 7], 5), &mut r).unwrap();
        let x = Array2::from_shape_fn((8, 6), |_| 3.0 * r.sample::<f64, _>(StandardNormal));
        let si = forward(&net, &x, None).unwrap();
        for hooked in [vec![0], vec![1], vec![2], vec![0, 1, 2]] {
            let id = LhucParams::identity(&net.widths(), &hooked);
            let ad = forward(&net, &x, Some(&id)).unwrap();
            identity_ok &= bits(&ad.lfmmi) == bits(&si.lfmmi) && bits(&ad.ce) == bits(&si.ce);
        }
    }
    notes.push(format!("identity adapter bit-equal {identity_ok}"));

    let mut trajectory_ok = true;
    let mut steps = 0;
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let pdfs = 4;
        let net = AcousticNet::new(&NetConfig::new(5, vec![10, 10, 10], pdfs), &mut r).unwrap();
        let items: Vec<AdaptItem> = (0..3)
            .map(|i| {
                let frames = r.random_range(3..=6);
                let (num, _) = feasible_pair(&mut r, frames, pdfs);
                AdaptItem {
                    id: format!("u{i}"),
                    features: Array2::from_shape_fn((frames, 5), |_| r.sample::<f64, _>(StandardNormal)),
                    num,
                    si_ce: None,
                }
            })
            .collect();
        let frames_max = items.iter().map(|i| i.features.nrows()).max().unwrap();
        let (_, den) = feasible_pair(&mut r, frames_max, pdfs);
        let den_ok = items.iter().all(|i| {
            let z = FrameScores::new(Array2::zeros((i.features.nrows(), pdfs))).unwrap();
            forward_backward(&den, &z).is_ok_and(|fb| fb.log_total.is_finite())
        });
        if !den_ok {
            continue;
        }
        let mut cfg = AdaptConfig::default();
        cfg.objective = ObjectiveConfig::with_kl(1.0, 0.1, 0.0).unwrap();
        cfg.epochs = 3;
        cfg.learning_rate = 0.5;
        cfg.seed = seed;
        let mut lhuc_trace = Vec::new();
        estimate_lhuc_traced(&net, &den, &items, &cfg, "spk", &mut |p| lhuc_trace.push(p.to_flat())).unwrap();
        let mut b = cfg.clone();
        b.bayesian = true;
        b.mc_samples = 1;
        b.init_log_sigma = f64::NEG_INFINITY;
        let mut blhuc_trace = Vec::new();
        estimate_blhuc_traced(&net, &den, &items, &b, "spk", &mut |m, _| blhuc_trace.push(m.to_flat())).unwrap();
        steps += lhuc_trace.len();
        let same = lhuc_trace.len() == blhuc_trace.len()
            && lhuc_trace
                .iter()
                .zip(&blhuc_trace)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        trajectory_ok &= same && !lhuc_trace.is_empty();
    }
    trajectory_ok &= steps > 0;
    notes.push(format!("BLHUC(sigma=0) trajectory bit-equal over {steps} steps {trajectory_ok}"));

    let mut kl_ok = true;
    let mut r = rng(7);
    for _ in 0..100 {
        let prior = PriorSpec {
            mu0: r.random_range(-3.0..3.0),
            sigma0: r.random_range(0.01..5.0),
        };
        let d = r.random_range(1..20);
        kl_ok &= gaussian_kl(&vec![prior.mu0; d], &vec![prior.sigma0; d], &prior).unwrap() == 0.0;
    }
    notes.push(format!("KL(p||p) == 0 {kl_ok}"));
    Outcome {
        pass: identity_ok && trajectory_ok && kl_ok,
        summary: notes.join(", "),
    }
}

fn criterion_kl_monte_carlo() -> Outcome {
    let mut r = rng(2024);
    let n = 1_000_000;
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let prior = PriorSpec {
            mu0: r.random_range(-1.0..1.0),
            sigma0: r.random_range(0.3..2.0),
        };
        let mu = r.random_range(-2.0..2.0);
        let sigma = r.random_range(0.2..2.0);
        let exact = gaussian_kl(&[mu], &[sigma], &prior).unwrap();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = r.sample(StandardNormal);
            let x = mu + sigma * z;
            let d = (x - prior.mu0) / prior.sigma0;
            let v = (prior.sigma0 / sigma).ln() - 0.5 * z * z + 0.5 * d * d;
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let z = (mean - exact).abs() / se;
        worst = worst.max(z);
        within += usize::from(z <= 3.0);
    }
    Outcome {
        pass: within == 50,
        summary: format!("{within}/50 pairs within 3 SE of 1e6-sample estimate (worst {worst:.2} SE)"),
    }
}

// ---------------------------------------------------------------- experiment

fn ter(report: &MetricsReport, name: &str) -> f64 {
    condition(report, name).ter
}

fn condition<'a>(report: &'a MetricsReport, name: &str) -> &'a ConditionResult {
    report
        .conditions
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("condition {name} missing"))
}

fn reference_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg
}

fn count_holds(reports: &[MetricsReport], f: impl Fn(&MetricsReport) -> bool) -> usize {
    reports.iter().filter(|r| f(r)).count()
}

fn criterion_trends(reports: &[MetricsReport]) -> Outcome {
    let checks: [(&str, &str, &str); 4] = [
        ("(a) lhuc < si", "lhuc", "si"),
        ("(b) blhuc-n5 <= lhuc-n5", "blhuc-n5", "lhuc-n5"),
        ("(c) lhuc-oracle <= lhuc", "lhuc-oracle", "lhuc"),
        ("(d) lhuc-ce-sat <= lhuc-ce", "lhuc-ce-sat", "lhuc-ce"),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (label, lhs, rhs)) in checks.iter().enumerate() {
        let holds = count_holds(reports, |r| {
            let (a, b) = (ter(r, lhs), ter(r, rhs));
            if i == 0 {
                a < b
            } else {
                a <= b
            }
        });
        pass &= holds >= 4;
        parts.push(format!("{label} {holds}/5"));
    }
    Outcome {
        pass,
        summary: parts.join(", "),
    }
}

fn criterion_selection(reports: &[MetricsReport]) -> Outcome {
    let ordered = count_holds(reports, |r| {
        let s = condition(r, "lhuc").selection.as_ref().expect("selection stats");
        match (s.selected_accuracy, s.rejected_accuracy) {
            (Some(a), Some(b)) => a >= b,
            _ => false,
        }
    });
    let no_worse = count_holds(reports, |r| ter(r, "lhuc") <= ter(r, "lhuc-all"));
    Outcome {
        pass: ordered == 5 && no_worse >= 3,
        summary: format!("selected >= rejected accuracy {ordered}/5, 80% selection <= no selection {no_worse}/5"),
    }
}

fn criterion_reproducible(first: &MetricsReport) -> Outcome {
    let again = run_experiment(&reference_config(first.seed)).expect("experiment").0;
    let a = render_json(first).unwrap();
    let b = render_json(&again).unwrap();
    Outcome {
        pass: a.as_bytes() == b.as_bytes(),
        summary: format!("seed {} re-run metrics JSON byte-identical: {} ({} bytes)", first.seed, a == b, a.len()),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; none apply here
    let mut all = true;
    let minute = Duration::from_secs(60);

    let t = Instant::now();
    let o = criterion_gradients();
    all &= report(1, "gradient correctness", t.elapsed(), Some(2 * minute), o);

    let t = Instant::now();
    let o = criterion_inference();
    all &= report(2, "inference oracle", t.elapsed(), Some(minute), o);

    let t = Instant::now();
    let o = criterion_degeneracy();
    all &= report(3, "degeneracy identities", t.elapsed(), None, o);

    let t = Instant::now();
    let o = criterion_kl_monte_carlo();
    all &= report(4, "closed-form KL", t.elapsed(), None, o);

    let t = Instant::now();
    let reports: Vec<MetricsReport> = SEEDS
        .iter()
        .map(|&s| run_experiment(&reference_config(s)).expect("experiment").0)
        .collect();
    let experiment_time = t.elapsed();
    for r in &reports {
        let row: Vec<String> = r.conditions.iter().map(|c| format!("{}={:.4}", c.name, c.ter)).collect();
        println!("  seed {}: {}", r.seed, row.join(" "));
    }
    all &= report(5, "trend reproduction", experiment_time, Some(30 * minute), criterion_trends(&reports));
    all &= report(6, "confidence selection", experiment_time, None, criterion_selection(&reports));

    let t = Instant::now();
    let o = criterion_reproducible(&reports[0]);
    all &= report(7, "reproducibility", t.elapsed(), None, o);

    if !all {
        std::process::exit(1);
    }
}
