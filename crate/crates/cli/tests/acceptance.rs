//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p overfit-cli --test acceptance`. The process exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use overfit_core::controller::{ControllerState, Verdict};
use overfit_core::distmodel::{DistributionModel, ThetaStarMatch};
use overfit_core::metrics::{auroc, radi_empirical, tvd_to_gaussian, ScoreSet};
use overfit_core::pipeline::{run_experiment, TrainConfig};
use overfit_core::toynet::{finite_difference_gradcheck, Activation, ToyNetwork};
use overfit_core::Error;

type Outcome = Result<String, String>;

struct Suite {
    failed: Vec<&'static str>,
}

impl Suite {
    fn check(&mut self, name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut outcome = f();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                println!("FAIL {name}: {detail} [{elapsed:.1?}]");
                self.failed.push(name);
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random score set; some sets are quantized so ties are common.
fn random_scores(rng: &mut ChaCha8Rng, max_per_class: usize) -> ScoreSet<f64> {
    let size = |rng: &mut ChaCha8Rng| {
        let lo = 10f64.ln();
        let hi = (max_per_class as f64).ln();
        rng.random_range(lo..=hi).exp().round() as usize
    };
    let (n_n, n_a) = (size(rng), size(rng));
    let quantum = [0.0, 1.0, 0.1, 0.01][rng.random_range(0..4)];
    let shift: f64 = rng.random_range(-1.0..2.0);
    let draw = |rng: &mut ChaCha8Rng, n: usize, offset: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v: f64 = offset + rng.random_range(-2.0..2.0) + rng.random_range(-2.0..2.0);
                if quantum > 0.0 {
                    (v / quantum).round() * quantum
                } else {
                    v
                }
            })
            .collect()
    };
    let normal = draw(rng, n_n, 0.0);
    let anomaly = draw(rng, n_a, shift);
    ScoreSet::new(normal, anomaly).expect("finite scores")
}

fn radi_auroc_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut tied_sets = 0;
    for _ in 0..200 {
        let s = random_scores(&mut rng, 10_000);
        let mut all: Vec<f64> = s.normal.iter().chain(&s.anomaly).copied().collect();
        all.sort_by(f64::total_cmp);
        if all.windows(2).any(|w| w[0] == w[1]) {
            tied_sets += 1;
        }
        let d = (radi_empirical(&s).map_err(|e| e.to_string())?
            - auroc(&s).map_err(|e| e.to_string())?)
        .abs();
        worst = worst.max(d);
    }
    ensure(worst <= 1e-9, || format!("max |RADI - AUROC| = {worst:e}"))?;
    ensure(tied_sets > 0, || "no set contained ties".into())?;
    Ok(format!("200 sets ({tied_sets} with ties), max |RADI - AUROC| = {worst:e}"))
}

fn pairwise_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for i in 0..100 {
        let s = random_scores(&mut rng, 200);
        let mut doubled: u64 = 0;
        for &a in &s.anomaly {
            for &n in &s.normal {
                doubled += match a.partial_cmp(&n).expect("finite") {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        let expected = doubled as f64 / (2 * s.anomaly.len() * s.normal.len()) as f64;
        let got = radi_empirical(&s).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("set {i}: {got} != pairwise {expected}"))?;
    }
    Ok("100 sets match the O(n^2) pair count exactly".into())
}

fn random_model(rng: &mut ChaCha8Rng) -> DistributionModel<f64> {
    DistributionModel::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.5..2.0),
        rng.random_range(0.3..1.5),
        rng.random_range(0.5..2.0),
        rng.random_range(1.5..4.0),
        rng.random_range(0.1..1.0),
        rng.random_range(0.3..1.2),
        rng.random_range(0.0..0.6),
    )
    .expect("parameters in range")
}

fn monte_carlo_radi() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for m in 0..10 {
        let model = random_model(&mut rng);
        for j in 0..5 {
            let theta: f64 = rng.random_range(0.0..2.0);
            let seed = rng.random();
            let scores = model
                .sample_scores(theta, 1_000_000, 1_000_000, seed)
                .map_err(|e| e.to_string())?;
            let mc = radi_empirical(&scores).map_err(|e| e.to_string())?;
            let closed = model.radi_closed_form(theta);
            let d = (mc - closed).abs();
            ensure(d <= 0.003, || {
                format!("model {m} theta #{j} = {theta}: MC {mc} vs closed {closed}")
            })?;
            worst = worst.max(d);
        }
    }
    Ok(format!("50 (model, theta) pairs, max deviation {worst:.5}"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in 0..10 {
        let model = random_model(&mut rng);
        for i in 0..100 {
            let theta = 3.0 * i as f64 / 99.0;
            if (theta - model.theta_0).abs() < 1e-4 {
                continue;
            }
            let analytic = model.radi_gradient(theta).value;
            let numeric =
                (model.radi_closed_form(theta + h) - model.radi_closed_form(theta - h)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            ensure(rel <= 1e-4, || {
                format!("model {m}, theta {theta}: analytic {analytic}, numeric {numeric}")
            })?;
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(format!("{checked} points, max relative error {worst:.2e}"))
}

fn theta_star_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut tally = [0usize; 4];
    let mut found = 0;
    let mut attempts = 0;
    while found < 20 {
        attempts += 1;
        if attempts > 1000 {
            return Err(format!("only {found} models with an interior optimum"));
        }
        let model = random_model(&mut rng);
        let t = match model.theta_star() {
            Ok(t) => t,
            Err(Error::NoInteriorOptimum { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let d = (t.numeric - t.derived_form).abs();
        ensure(d <= 1e-6, || {
            format!("{model:?}: numeric {} vs derived {}", t.numeric, t.derived_form)
        })?;
        tally[match t.matches {
            ThetaStarMatch::Derived => 0,
            ThetaStarMatch::Paper => 1,
            ThetaStarMatch::Both => 2,
            ThetaStarMatch::Neither => 3,
        }] += 1;
        found += 1;
    }

    let mut zero = DistributionModel::<f64>::demo();
    zero.theta_0 = 0.0;
    let t = zero.theta_star().map_err(|e| e.to_string())?;
    ensure(
        t.matches == ThetaStarMatch::Both
            && (t.paper_form - t.numeric).abs() <= 1e-6
            && (t.derived_form - t.numeric).abs() <= 1e-6,
        || format!("theta_0 = 0 case: {t:?}"),
    )?;
    Ok(format!(
        "20 models: derived form agrees in all; matches derived={} printed={} both={} neither={}; theta_0 = 0 agrees for both",
        tally[0], tally[1], tally[2], tally[3]
    ))
}

fn controller_exhaustive() -> Outcome {
    let mut strings = 0;
    for c_thr in 1..=3usize {
        for len in 0..=10u32 {
            for bits in 0..(1u32 << len) {
                strings += 1;
                let mut ctl = ControllerState::<f64>::new(c_thr, 5).map_err(|e| e.to_string())?;
                let mut layers = vec![false; 16];
                let mut run = 0usize;
                let mut expected_frozen = 0usize;
                for step in 0..len {
                    let violation = bits >> step & 1 == 1;
                    let verdict = ctl.record_violation(violation);
                    let expect = if violation {
                        run += 1;
                        if run == c_thr + 1 {
                            run = 0;
                            Verdict::EmitFreezeSignal
                        } else {
                            Verdict::IncrementCounter
                        }
                    } else {
                        run = 0;
                        Verdict::Continue
                    };
                    ensure(verdict == expect, || {
                        format!("c_thr {c_thr}, string {bits:0len$b}, step {step}: {verdict:?} != {expect:?}", len = len as usize)
                    })?;
                    ensure(ctl.freeze_counter() == run, || {
                        format!("c_thr {c_thr}, string {bits:b}, step {step}: counter {} != {run}", ctl.freeze_counter())
                    })?;
                    if verdict == Verdict::EmitFreezeSignal {
                        let layer = ctl.freeze_next_layer(&mut layers).map_err(|e| e.to_string())?;
                        ensure(layer == expected_frozen, || {
                            format!("froze layer {layer}, expected {expected_frozen}")
                        })?;
                        expected_frozen += 1;
                    }
                }
                let count = layers.iter().filter(|&&f| f).count();
                ensure(count == expected_frozen && ctl.frozen_layers().len() == expected_frozen, || {
                    format!("c_thr {c_thr}, string {bits:b}: {count} frozen, expected {expected_frozen}")
                })?;
                ensure(layers[..count].iter().all(|&f| f), || "frozen set is not a prefix".into())?;
            }
        }
    }
    Ok(format!("{strings} violation strings over c_thr 1..=3"))
}

fn params(net: &ToyNetwork<f64>, layer: usize) -> Vec<u64> {
    let l = &net.layers()[layer];
    l.weights.iter().chain(&l.bias).map(|v| v.to_bits()).collect()
}

fn freeze_isolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let dims = [4, 6, 5, 3];
    let mut net = ToyNetwork::<f64>::random(
        &dims,
        &[Activation::Tanh, Activation::Relu, Activation::Identity],
        7,
    )
    .map_err(|e| e.to_string())?;
    let xs: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut ctl = ControllerState::<f64>::new(1, 2).map_err(|e| e.to_string())?;
    let mut steps = 0;
    for round in 0..dims.len() - 1 {
        ctl.freeze_next_layer(&mut net).map_err(|e| e.to_string())?;
        let before: Vec<Vec<u64>> = (0..net.layers().len()).map(|i| params(&net, i)).collect();
        let mut last_loss = f64::INFINITY;
        for _ in 0..100 {
            last_loss = net.train_batch(&xs, &ys, 0.05).map_err(|e| e.to_string())?;
            steps += 1;
        }
        for (i, b) in before.iter().enumerate() {
            let after = params(&net, i);
            if i <= round {
                ensure(&after == b, || format!("frozen layer {i} changed in round {round}"))?;
            } else if last_loss > 1e-8 {
                ensure(&after != b, || format!("unfrozen layer {i} did not change in round {round}"))?;
            }
        }
    }
    ensure(
        matches!(ctl.freeze_next_layer(&mut net), Err(Error::LayersExhausted { .. })),
        || "freezing past the last layer did not report exhaustion".into(),
    )?;
    Ok(format!("{steps} SGD steps across 3 freeze levels; frozen parameters bit-identical"))
}

fn backprop_gradcheck() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut report = Vec::new();
    for act in [Activation::Identity, Activation::Relu, Activation::Tanh] {
        let mut worst = 0.0f64;
        for n in 0..20 {
            let depth = rng.random_range(1..=3);
            let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=6)).collect();
            let mut net = ToyNetwork::<f64>::random(&dims, &vec![act; depth], rng.random())
                .map_err(|e| e.to_string())?;
            for i in 0..depth {
                for b in &mut net.layer_mut(i).bias {
                    *b = rng.random_range(-0.5..0.5);
                }
            }
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..dims[depth]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = finite_difference_gradcheck(&net, &x, &y, 1e-6).map_err(|e| e.to_string())?;
            ensure(err <= 1e-4, || format!("{act:?} net {n} {dims:?}: relative error {err:e}"))?;
            worst = worst.max(err);
        }
        report.push(format!("{act:?} {worst:.1e}"));
    }
    Ok(format!("60 nets, max relative error: {}", report.join(", ")))
}

fn end_to_end_benefit() -> Outcome {
    let mut wins = 0;
    let mut total = 0.0;
    let mut deltas = Vec::new();
    for seed in 0..10 {
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let exp = run_experiment(&config).map_err(|e| e.to_string())?;
        let d = exp.log.summary.final_radi - exp.log.summary.standard_end_radi;
        if d >= 0.0 {
            wins += 1;
        }
        total += d;
        deltas.push(format!("{d:+.4}"));
    }
    let mean = total / 10.0;
    let detail = format!("{wins}/10 runs improved or held, mean change {mean:+.5} [{}]", deltas.join(" "));
    ensure(wins >= 8 && mean > 0.0, || detail.clone())?;
    Ok(detail)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_overfit"))
}

fn run_ok(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Box–Muller, so the suite does not depend on the core's sampler.
fn box_muller(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    mean + std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_lines(rng: &mut ChaCha8Rng, mean: f64, std: f64, n: usize) -> String {
    (0..n).map(|_| format!("{}\n", box_muller(rng, mean, std))).collect()
}

fn tvd_methodology(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let samples: Vec<f64> = (0..100_000)
        .map(|_| box_muller(&mut rng, 0.0, 1.0))
        .collect();
    let (_, tvd) = tvd_to_gaussian(&samples, 50).map_err(|e| e.to_string())?;
    ensure(tvd < 0.02, || format!("TVD of 1e5 normal samples = {tvd}"))?;

    let (mu_n, sd_n, mu_a, sd_a) = (105.6, 65.5, 99.3, 45.0);
    let normal_path = dir.join("normal.txt");
    let anomaly_path = dir.join("anomaly.txt");
    std::fs::write(&normal_path, gaussian_lines(&mut rng, mu_n, sd_n, 100_000))
        .map_err(|e| e.to_string())?;
    std::fs::write(&anomaly_path, gaussian_lines(&mut rng, mu_a, sd_a, 100_000))
        .map_err(|e| e.to_string())?;
    let json = run_ok(bin().args(["analyze", "--normal"]).arg(&normal_path).arg("--anomaly").arg(&anomaly_path))?;
    let report: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let mean = |class: &str| report[class]["mean"].as_f64().ok_or(format!("no {class} mean"));
    let (fit_n, fit_a) = (mean("normal")?, mean("anomaly")?);
    let rel_n = (fit_n - mu_n).abs() / mu_n;
    let rel_a = (fit_a - mu_a).abs() / mu_a;
    ensure(rel_n <= 0.01 && rel_a <= 0.01, || {
        format!("fitted means {fit_n}, {fit_a} vs {mu_n}, {mu_a}")
    })?;
    Ok(format!(
        "TVD(1e5 normal) = {tvd:.4}; analyze recovers means {fit_n:.2} ({:.2}%) and {fit_a:.2} ({:.2}%)",
        100.0 * rel_n,
        100.0 * rel_a
    ))
}

fn dir_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = std::fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism(dir: &Path) -> Outcome {
    let mut compared = 0;
    for (name, args) in [
        ("train-toy", vec!["train-toy", "--seed", "11", "--export-dataset"]),
        ("simulate", vec!["simulate", "--seed", "11", "--mc-samples", "20000"]),
    ] {
        let a = dir.join(format!("{name}-a"));
        let b = dir.join(format!("{name}-b"));
        run_ok(bin().args(&args).arg("--out").arg(&a))?;
        run_ok(bin().args(&args).arg("--out").arg(&b))?;
        let (fa, fb) = (dir_files(&a)?, dir_files(&b)?);
        ensure(!fa.is_empty() && fa == fb, || format!("{name} outputs differ"))?;
        compared += fa.len();
    }
    Ok(format!("{compared} output files byte-identical across repeated runs"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut suite = Suite { failed: Vec::new() };
    let secs = Duration::from_secs;

    suite.check("radi-auroc-identity", Some(secs(30)), radi_auroc_identity);
    suite.check("radi-pairwise-oracle", None, pairwise_oracle);
    suite.check("closed-form-radi-vs-monte-carlo", Some(secs(120)), monte_carlo_radi);
    suite.check("radi-gradient-check", None, gradient_check);
    suite.check("theta-star-oracle", None, theta_star_oracle);
    suite.check("controller-state-machine", None, controller_exhaustive);
    suite.check("freeze-isolation", None, freeze_isolation);
    suite.check("backprop-gradcheck", None, backprop_gradcheck);
    suite.check("end-to-end-benefit", Some(secs(180)), end_to_end_benefit);
    suite.check("tvd-methodology", None, || tvd_methodology(tmp.path()));
    suite.check("determinism", None, || determinism(tmp.path()));

    if suite.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", suite.failed.len(), suite.failed.join(", "));
        std::process::exit(1);
    }
}
