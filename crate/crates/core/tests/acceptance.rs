//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.
//!
//! Run a subset by passing substrings of check names:
//! `cargo test --release --test acceptance -- gradient cam`.
//! The JIGSAWS reproduction runs only when `SKILLCNN_JIGSAWS_MANIFEST` points
//! at a manifest of the real dataset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skillcnn::cam::compute_cam;
use skillcnn::data::synth::{synth_generate, SpectralCentroids, SynthConfig, SynthDataset};
use skillcnn::data::{default_grouping, FoldPlan, Manifest, Task, Trial};
use skillcnn::gradcheck::{run_suite, Coverage, FD_TOLERANCE};
use skillcnn::metrics::aggregate_runs;
use skillcnn::model::{SkillNet, INPUT_CHANNELS};
use skillcnn::nn::Mts;
use skillcnn::training::{format_predictions, run_loso, LosoResult, TrainConfig};

const GRADIENT_INSTANCES: usize = 20;
const GRADIENT_MAX_LEN: usize = 16;
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const CAM_PAIRS: usize = 100;
const CAM_REL_TOL: f64 = 1e-4;
const EXPECTED_PARAMS: usize = 16_003;
const SYNTH_RUNS: usize = 3;
const SYNTH_MIN_MICRO: f64 = 0.95;
const BASELINE_MIN: f64 = 0.90;
const SYNTH_BUDGET: Duration = Duration::from_secs(600);
const LOCALIZATION_MIN: f64 = 0.90;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let report = run_suite(
        &default_grouping(),
        GRADIENT_INSTANCES,
        GRADIENT_MAX_LEN,
        2024,
        Coverage::Sample(12),
        None,
    );
    let elapsed = start.elapsed();
    match report {
        Ok(r) => {
            let failing: Vec<_> = r
                .layers
                .failing(FD_TOLERANCE)
                .chain(r.model.failing(FD_TOLERANCE))
                .map(|t| t.name.clone())
                .collect();
            outcome(
                failing.is_empty() && elapsed < GRADIENT_BUDGET,
                format!(
                    "{} instances, {} layer + {} model coordinates checked ({} skipped at ReLU kinks), max rel err {:.2e}, {:.1}s{}",
                    r.instances,
                    r.layers.checked(),
                    r.model.checked(),
                    r.layers.skipped() + r.model.skipped(),
                    r.max_rel_error(),
                    elapsed.as_secs_f64(),
                    if failing.is_empty() { String::new() } else { format!(", failing: {failing:?}") }
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn cam_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0f64;
    for pair in 0..CAM_PAIRS {
        let mut net = SkillNet::build(default_grouping(), pair as u64).expect("network builds");
        net.params.head.biases = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = rng.gen_range(1..=300);
        let x = Mts::new(
            INPUT_CHANNELS,
            len,
            (0..INPUT_CHANNELS * len)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect(),
        )
        .expect("valid series");
        let map = compute_cam(&net, &x).expect("cam");
        let f = net.forward(&x).expect("forward");
        for c in 0..3 {
            let mean = map.row(c).iter().map(|&v| v as f64).sum::<f64>() / len as f64;
            let logit = f.logits[c] as f64 - net.params.head.biases[c] as f64;
            let rel = (mean - logit).abs() / logit.abs().max(mean.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    outcome(
        worst < CAM_REL_TOL,
        format!("{CAM_PAIRS} random pairs, max rel deviation {worst:.2e}"),
    )
}

fn architecture() -> Outcome {
    let g = default_grouping();
    let net = SkillNet::build(g.clone(), 3).expect("network builds");
    // conv: out * (in * 3 + 1); head: 3 * (32 + 1)
    let mut expected = 0;
    for (_, sub) in g.sub_clusters() {
        expected += 8 * (sub.channels.len() * 3 + 1);
    }
    for cluster in g.clusters() {
        expected += 16 * (cluster.sub_clusters.len() * 8 * 3 + 1);
    }
    expected += 32 * (g.clusters().len() * 16 * 3 + 1) + 3 * (32 + 1);
    let count = net.num_params();

    let mut lengths_ok = true;
    for l in [1, 37, 517] {
        let x = Mts::new(INPUT_CHANNELS, l, vec![0.25; INPUT_CHANNELS * l]).expect("series");
        lengths_ok &= net.forward(&x).expect("forward").a3.len() == l;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l = 20;
    let base = Mts::new(
        INPUT_CHANNELS,
        l,
        (0..INPUT_CHANNELS * l)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .expect("series");
    let bt = net.forward_trace(&base).expect("trace");
    let subs: Vec<_> = g.sub_clusters().map(|(_, s)| s.channels.clone()).collect();
    let mut sub_ok = 0;
    for (s, chans) in subs.iter().enumerate() {
        let mut x = base.clone();
        for &c in chans {
            x.row_mut(c).iter_mut().for_each(|v| *v += 3.0);
        }
        let t = net.forward_trace(&x).expect("trace");
        let others_same = (0..subs.len())
            .filter(|&o| o != s)
            .all(|o| t.layer1_output(o) == bt.layer1_output(o));
        if others_same && t.layer1_output(s) != bt.layer1_output(s) {
            sub_ok += 1;
        }
    }
    let mut cluster_ok = 0;
    for (ci, cluster) in g.clusters().iter().enumerate() {
        let mut x = base.clone();
        for sub in &cluster.sub_clusters {
            for &c in &sub.channels {
                x.row_mut(c).iter_mut().for_each(|v| *v += 3.0);
            }
        }
        let t = net.forward_trace(&x).expect("trace");
        let others_same = (0..g.clusters().len())
            .filter(|&o| o != ci)
            .all(|o| t.layer2_output(o) == bt.layer2_output(o));
        if others_same && t.layer2_output(ci) != bt.layer2_output(ci) {
            cluster_ok += 1;
        }
    }
    outcome(
        count == EXPECTED_PARAMS && expected == EXPECTED_PARAMS && lengths_ok && sub_ok == 20 && cluster_ok == 4,
        format!(
            "{count} parameters (recomputed {expected}), length preserved: {lengths_ok}, isolated sub-clusters {sub_ok}/20, clusters {cluster_ok}/4"
        ),
    )
}

fn loso_harness() -> Outcome {
    let ds = synth_generate(&SynthConfig {
        seed: 11,
        n_subjects: 8,
        trials_per_subject: 5,
        min_len: 50,
        max_len: 80,
    })
    .expect("synthetic data");
    let keys: Vec<_> = ds.trials.iter().map(Trial::key).collect();
    let plan = FoldPlan::from_keys(&keys).expect("fold plan");
    let folds_ok = plan.folds.len() == 5 && plan.folds.iter().all(|f| f.test.len() == 8);
    let runs = 2;
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let result = run_loso(&ds.trials, &default_grouping(), &cfg, runs, Some(1)).expect("loso");
    let mut counts = std::collections::BTreeMap::new();
    for r in &result.rows {
        *counts
            .entry((r.subject.clone(), r.trial_index))
            .or_insert(0) += 1;
    }
    let each = counts.len() == 40 && counts.values().all(|&c| c == runs);
    outcome(
        folds_ok && result.rows.len() == 40 * runs && each,
        format!(
            "{} folds x {:?} test trials, {} rows for {runs} runs, every trial predicted {runs} times: {each}",
            plan.folds.len(),
            plan.folds.iter().map(|f| f.test.len()).collect::<Vec<_>>(),
            result.rows.len()
        ),
    )
}

fn baseline_accuracy(ds: &SynthDataset) -> f64 {
    let keys: Vec<_> = ds.trials.iter().map(Trial::key).collect();
    let plan = FoldPlan::from_keys(&keys).expect("fold plan");
    let channels = &ds.injections[0].channels;
    let mut correct = 0;
    for fold in &plan.folds {
        let train: Vec<Trial> = fold.train.iter().map(|&i| ds.trials[i].clone()).collect();
        let model = SpectralCentroids::fit(&train, channels);
        correct += fold
            .test
            .iter()
            .filter(|&&i| model.predict(&ds.trials[i].series) == ds.trials[i].skill)
            .count();
    }
    correct as f64 / ds.trials.len() as f64
}

struct SynthRun {
    ds: SynthDataset,
    result: LosoResult,
    elapsed: Duration,
}

fn synth_run() -> SynthRun {
    let ds = synth_generate(&SynthConfig::default()).expect("synthetic data");
    let start = Instant::now();
    let result = run_loso(
        &ds.trials,
        &default_grouping(),
        &TrainConfig::default(),
        SYNTH_RUNS,
        Some(1),
    )
    .expect("loso");
    SynthRun {
        ds,
        result,
        elapsed: start.elapsed(),
    }
}

fn synthetic_learning(run: &SynthRun) -> Outcome {
    let summary = aggregate_runs(&run.result.rows).expect("scores");
    let s = &summary[0];
    let baseline = baseline_accuracy(&run.ds);
    let per_run: Vec<String> = s
        .per_run
        .iter()
        .map(|r| format!("{:.3}", r.micro))
        .collect();
    outcome(
        s.micro_mean >= SYNTH_MIN_MICRO && baseline > BASELINE_MIN && run.elapsed < SYNTH_BUDGET,
        format!(
            "mean micro {:.3} (runs {}), spectral baseline {:.3}, {:.0}s single-threaded",
            s.micro_mean,
            per_run.join(", "),
            baseline,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn cam_localization(run: &SynthRun) -> Outcome {
    let mut correct = 0;
    let mut localized = 0;
    for fm in &run.result.models {
        for &i in &fm.test {
            let trial = &run.ds.trials[i];
            let inj = &run.ds.injections[i];
            let x = fm.model.prepare(&trial.series).expect("normalization");
            let map = compute_cam(&fm.model.net, &x).expect("cam");
            if map.predicted != trial.skill {
                continue;
            }
            correct += 1;
            let row = map.row(map.predicted.index());
            let (mut inside, mut n_in, mut outside, mut n_out) = (0f64, 0usize, 0f64, 0usize);
            for (t, &v) in row.iter().enumerate() {
                if inj.contains(t) {
                    inside += v as f64;
                    n_in += 1;
                } else {
                    outside += v as f64;
                    n_out += 1;
                }
            }
            if n_out == 0 || inside / n_in as f64 > outside / n_out as f64 {
                localized += 1;
            }
        }
    }
    let frac = if correct == 0 {
        0.0
    } else {
        localized as f64 / correct as f64
    };
    outcome(
        correct > 0 && frac >= LOCALIZATION_MIN,
        format!(
            "{localized}/{correct} correctly classified test trials localized ({:.1}%)",
            100.0 * frac
        ),
    )
}

fn determinism(first: &SynthRun) -> Outcome {
    let second = synth_run();
    let a = format_predictions(&first.result.rows);
    let b = format_predictions(&second.result.rows);
    outcome(
        a == b,
        format!(
            "two single-threaded runs, {} and {} bytes, identical: {}",
            a.len(),
            b.len(),
            a == b
        ),
    )
}

fn jigsaws() -> Option<Outcome> {
    let path = std::env::var_os("SKILLCNN_JIGSAWS_MANIFEST")?;
    let run = || -> skillcnn::Result<Outcome> {
        let manifest = Manifest::load(&path)?;
        let cfg = TrainConfig::full();
        let mut details = Vec::new();
        let mut pass = true;
        for (task, min) in [(Task::Suturing, 0.95), (Task::KnotTying, 0.85)] {
            let trials = manifest.filter_task(task).load_trials()?;
            let result = run_loso(&trials, &default_grouping(), &cfg, 5, None)?;
            let s = &aggregate_runs(&result.rows)?[0];
            pass &= s.micro_mean >= min;
            details.push(format!("{task} micro {:.3} (need {min})", s.micro_mean));
        }
        Ok(outcome(pass, details.join(", ")))
    };
    Some(run().unwrap_or_else(|e| outcome(false, e.to_string())))
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted =
        |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!(
            "[{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };

    if wanted("gradient") {
        report("gradient suite", gradient_suite());
    }
    if wanted("cam-consistency") {
        report("cam-consistency", cam_consistency());
    }
    if wanted("architecture") {
        report("architecture", architecture());
    }
    if wanted("loso-harness") {
        report("loso-harness", loso_harness());
    }
    if wanted("synthetic") || wanted("localization") || wanted("determinism") {
        let run = synth_run();
        if wanted("synthetic") {
            report("synthetic learning", synthetic_learning(&run));
        }
        if wanted("localization") {
            report("cam localization", cam_localization(&run));
        }
        if wanted("determinism") {
            report("determinism", determinism(&run));
        }
    }
    if wanted("jigsaws") {
        match jigsaws() {
            Some(o) => report("jigsaws reproduction", o),
            None => println!("[SKIP] jigsaws reproduction: SKILLCNN_JIGSAWS_MANIFEST not set"),
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
