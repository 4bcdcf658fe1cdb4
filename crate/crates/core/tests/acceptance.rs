//! End-to-end checks against the reference results. Prints one line per
//! criterion and exits nonzero when any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 8 9`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use latentprobe::cli::fig1_verdict;
use latentprobe::data::{fig1_one_dimensional, fig1_two_dimensional};
use latentprobe::experiment::{execute, ExperimentConfig, ExperimentOutcome};
use latentprobe::hull::{in_hull, phase1_simplex, HullQuery, DEFAULT_TOLERANCE};
use latentprobe::stats::{bootstrap_ci, design_matrix, ks_statistic, logistic_fit, Metric, Space};
use ndarray::Array2;

const TOY_INTRINSIC_DIMS: [usize; 4] = [2, 4, 8, 16];
const TOY_TRIALS: usize = 5;
const TOY_BUDGET: Duration = Duration::from_secs(15 * 60);
const MNIST_TRIALS: usize = 3;

type Check = fn(&ExperimentOutcome) -> Verdict;

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn verdict(id: usize, pass: bool, detail: impl Into<String>) -> Verdict {
    let v = Verdict {
        id,
        pass,
        detail: detail.into(),
    };
    println!("criterion {:>2}: {}  {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    v
}

fn rel(o: &ExperimentOutcome, k: usize) -> f64 {
    o.summary
        .bottlenecks
        .iter()
        .find(|b| b.bottleneck == k)
        .map_or(f64::NAN, |b| b.relative_accuracy.mean)
}

fn toy_runs() -> Result<(Vec<(usize, ExperimentOutcome)>, Duration), String> {
    let start = Instant::now();
    let mut out = Vec::new();
    for n_id in TOY_INTRINSIC_DIMS {
        let mut cfg = ExperimentConfig::toy(n_id, false);
        cfg.trials = TOY_TRIALS;
        cfg.analysis.hull = false;
        cfg.analysis.distances = false;
        let o = execute(&cfg).map_err(|e| format!("toy n_id {n_id}: {}", e.error))?;
        out.push((n_id, o));
    }
    Ok((out, start.elapsed()))
}

fn criterion_1(runs: &[(usize, ExperimentOutcome)], elapsed: Duration) -> Verdict {
    let mut pass = elapsed <= TOY_BUDGET;
    let mut parts = Vec::new();
    for (n_id, o) in runs {
        let row: Vec<String> = o
            .summary
            .bottlenecks
            .iter()
            .map(|b| format!("k{}={:.4}", b.bottleneck, b.relative_accuracy.mean))
            .collect();
        for b in &o.summary.bottlenecks {
            if b.bottleneck >= *n_id && b.relative_accuracy.mean < 0.99 {
                pass = false;
            }
        }
        if *n_id >= 4 && !(rel(o, n_id / 2) <= 0.97) {
            pass = false;
        }
        parts.push(format!("n_id {n_id}: {}", row.join(" ")));
    }
    verdict(
        1,
        pass,
        format!(
            "toy recovery (>=0.99 at k>=n_id, <=0.97 at n_id/2), {:.0}s of {}s; {}",
            elapsed.as_secs_f64(),
            TOY_BUDGET.as_secs(),
            parts.join("; ")
        ),
    )
}

fn criterion_2(runs: &[(usize, ExperimentOutcome)]) -> Verdict {
    let means: Vec<(usize, f64)> = runs.iter().map(|(n, o)| (*n, o.summary.base_accuracy.mean)).collect();
    let pass = means.iter().all(|(_, m)| (0.66..=0.76).contains(m));
    let text: Vec<String> = means.iter().map(|(n, m)| format!("n_id {n}: {m:.4}")).collect();
    verdict(2, pass, format!("toy base accuracy in [0.66, 0.76]; {}", text.join(", ")))
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LATENTPROBE_MNIST")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.is_dir().then_some(dir)
}

fn mnist_run() -> Result<ExperimentOutcome, String> {
    let dir = mnist_dir().ok_or("MNIST not found; set LATENTPROBE_MNIST")?;
    let mut cfg = ExperimentConfig::mnist(dir, false);
    cfg.trials = MNIST_TRIALS;
    execute(&cfg).map_err(|e| e.error.to_string())
}

fn criterion_3(o: &ExperimentOutcome) -> Verdict {
    let (r2, r8, r16) = (rel(o, 2), rel(o, 8), rel(o, 16));
    let within = |r: f64| (0.99..=1.01).contains(&r);
    verdict(
        3,
        within(r8) && within(r16) && r2 < 0.99,
        format!(
            "MNIST relative accuracy k2={r2:.4} (<0.99), k8={r8:.4}, k16={r16:.4} (within 0.01 of 1); base {:.4}",
            o.summary.base_accuracy.mean
        ),
    )
}

fn criterion_4(o: &ExperimentOutcome) -> Verdict {
    let f: Vec<(usize, f64)> = o
        .summary
        .bottlenecks
        .iter()
        .filter_map(|b| b.hull_fraction.as_ref().map(|h| (b.bottleneck, h.mean)))
        .collect();
    let get = |k| f.iter().find(|(b, _)| *b == k).map_or(f64::NAN, |x| x.1);
    let monotone = f.windows(2).all(|w| w[0].1 >= w[1].1);
    let (f2, f16) = (get(2), get(16));
    let pass = f.len() == 4 && monotone && f2 >= 0.95 && (0.2..=0.95).contains(&f16);
    let text: Vec<String> = f.iter().map(|(k, v)| format!("k{k}={v:.3}")).collect();
    verdict(4, pass, format!("hull fractions non-increasing, f2>=0.95, f16 in [0.2, 0.95]; {}", text.join(" ")))
}

fn criterion_5(o: &ExperimentOutcome) -> Verdict {
    let mut pass = true;
    let mut text = Vec::new();
    for space in [Space::Neural, Space::Latent] {
        let gaps: Vec<f64> = o
            .trials
            .iter()
            .filter_map(|t| {
                t.analyses
                    .iter()
                    .find(|a| a.space == space && a.metric == Metric::Euclidean)
                    .map(|a| a.bins[0].accuracy - a.bins[a.bins.len() - 1].accuracy)
            })
            .collect();
        let hits = gaps.iter().filter(|&&g| g >= 0.02).count();
        pass &= hits >= 2;
        text.push(format!(
            "{}: gaps {} ({hits}/3 >= 0.02)",
            space.name(),
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", ")
        ));
    }
    verdict(5, pass, format!("decile accuracy gap; {}", text.join("; ")))
}

fn criterion_6(o: &ExperimentOutcome) -> Verdict {
    let z: Vec<f64> = o
        .trials
        .iter()
        .filter_map(|t| {
            t.analyses
                .iter()
                .find(|a| a.space == Space::Latent && a.metric == Metric::Euclidean)
                .and_then(|a| a.logistic.as_ref())
                .map(|f| f.z_values[1])
        })
        .collect();
    let hits = z.iter().filter(|&&v| v < -1.96).count();
    verdict(
        6,
        hits >= 2,
        format!(
            "latent distance z < -1.96 in >=2 of 3 trials; z = {}",
            z.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_7(o: &ExperimentOutcome) -> Verdict {
    let m = o
        .summary
        .metrics
        .iter()
        .find(|m| m.space == Space::Neural && m.metric == Metric::Euclidean)
        .and_then(|m| m.ks.as_ref());
    match m {
        Some(ks) => verdict(
            7,
            ks.mean > 0.0 && ks.interval.low > 0.0,
            format!(
                "neural KS {:.4}, 95% interval [{:.4}, {:.4}] excludes 0",
                ks.mean, ks.interval.low, ks.interval.high
            ),
        ),
        None => verdict(7, false, "no KS statistic in the summary"),
    }
}

fn criterion_8() -> Verdict {
    let mut pass = true;
    let mut text = Vec::new();
    for demo in [fig1_one_dimensional(), fig1_two_dimensional()] {
        match fig1_verdict(&demo) {
            Ok((v, intrinsic, embedded)) => {
                pass &= intrinsic.fraction == 1.0 && embedded.fraction == 0.0;
                text.push(format!(
                    "{}: intrinsic {}/{} embedded {}/{}",
                    demo.name, v.inside_intrinsic, v.n_test, v.inside_embedded, v.n_test
                ));
            }
            Err(e) => {
                pass = false;
                text.push(format!("{}: {e}", demo.name));
            }
        }
    }
    verdict(8, pass, format!("tuning-curve hulls; {}", text.join(", ")))
}

fn criterion_9() -> Verdict {
    let hull_agree = (0..200)
        .filter(|&seed| {
            let (pts, q) = common::random_hull_case_2d(seed);
            let g = Array2::from_shape_fn((pts.len(), 2), |(i, j)| if j == 0 { pts[i].0 } else { pts[i].1 });
            in_hull(&HullQuery {
                query_point: vec![q.0, q.1],
                generators: g,
                tolerance: DEFAULT_TOLERANCE,
            })
            .is_ok_and(|c| c.inside == common::inside_hull_2d(&pts, q))
        })
        .count();
    let lp_agree = (0..200)
        .filter(|&seed| {
            let (a, b) = common::random_lp_case(seed);
            phase1_simplex(a.view(), &b, DEFAULT_TOLERANCE).is_ok_and(|lp| lp.feasible == common::enumeration_feasible(&a, &b))
        })
        .count();
    let fd = (0..50).map(common::random_backprop_case).fold(0.0_f64, f64::max);
    let irls = (0..10)
        .map(|seed| {
            let (d, h, c) = common::random_logistic_case(seed, 200);
            let Ok(fit) = logistic_fit(&d, &h, &c) else {
                return f64::INFINITY;
            };
            let (x, _, _) = design_matrix(&d, &h);
            let y: Vec<f64> = c.iter().map(|&v| f64::from(u8::from(v))).collect();
            let g = common::gradient_ascent_logistic(&x, &y);
            (0..4).map(|k| (fit.coefficients[k] - g[k]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0_f64, f64::max);
    let ks = |a: &[f64], b: &[f64]| ks_statistic(a, b).map(|r| r.statistic).unwrap_or(f64::NAN);
    let ks_ok = ks(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) == 0.0
        && ks(&[1.0, 2.0], &[3.0, 4.0]) == 1.0
        && ks(&[1.0, 2.0, 3.0, 4.0], &[3.5, 5.0]) == 0.75;
    let boot_ok = bootstrap_ci(&[3.0; 7], 100, 0.95, 0).is_ok_and(|ci| ci.low == 3.0 && ci.high == 3.0);
    let pass = hull_agree == 200 && lp_agree == 200 && fd < 1e-4 && irls < 1e-5 && ks_ok && boot_ok;
    verdict(
        9,
        pass,
        format!(
            "oracles: hull {hull_agree}/200, simplex {lp_agree}/200, backprop max rel err {fd:.2e}, IRLS max gap {irls:.2e}, KS examples {}, bootstrap examples {}",
            if ks_ok { "exact" } else { "wrong" },
            if boot_ok { "exact" } else { "wrong" }
        ),
    )
}

fn csv_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let bytes = std::fs::read(&p).unwrap_or_default();
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Verdict {
    let Ok(dir) = tempfile::tempdir() else {
        return verdict(10, false, "no temporary directory");
    };
    let cfg = serde_json::json!({
        "dataset": {"kind": "toy", "n_id": 4, "train_per_class": 40, "test_per_class": 12},
        "classifier": {"epochs": 5},
        "probe": {"bottlenecks": [2, 4], "hidden_width": 24, "training": {"epochs": 3, "loss": "mean_squared_error"}},
        "trials": 2,
        "analysis": {"bootstrap_resamples": 100}
    });
    let cfg_path = dir.path().join("config.json");
    if std::fs::write(&cfg_path, cfg.to_string()).is_err() {
        return verdict(10, false, "cannot write config");
    }
    let mut trees = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_latentprobe"))
            .arg("run")
            .arg("--config")
            .arg(&cfg_path)
            .args(["--seed", "7", "--jobs", jobs, "--out"])
            .arg(&out)
            .output();
        match status {
            Ok(s) if s.status.success() => trees.push(csv_tree(&out)),
            Ok(s) => return verdict(10, false, format!("run failed: {}", String::from_utf8_lossy(&s.stderr).trim())),
            Err(e) => return verdict(10, false, format!("cannot start binary: {e}")),
        }
    }
    let same = trees[0] == trees[1];
    verdict(
        10,
        same && !trees[0].is_empty(),
        format!("{} CSV files byte-identical with --jobs 1 and --jobs 4: {same}", trees[0].len()),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |id: usize| wanted.is_empty() || wanted.contains(&id);
    let mut verdicts = Vec::new();

    if want(8) {
        verdicts.push(criterion_8());
    }
    if want(9) {
        verdicts.push(criterion_9());
    }
    if want(10) {
        verdicts.push(criterion_10());
    }
    if want(1) || want(2) {
        match toy_runs() {
            Ok((runs, elapsed)) => {
                if want(1) {
                    verdicts.push(criterion_1(&runs, elapsed));
                }
                if want(2) {
                    verdicts.push(criterion_2(&runs));
                }
            }
            Err(e) => {
                for id in [1, 2].into_iter().filter(|&i| want(i)) {
                    verdicts.push(verdict(id, false, e.clone()));
                }
            }
        }
    }
    let mnist_ids = [3, 4, 5, 6, 7];
    if mnist_ids.iter().any(|&i| want(i)) {
        let started = Instant::now();
        match mnist_run() {
            Ok(o) => {
                println!("mnist run took {:.0}s", started.elapsed().as_secs_f64());
                let checks: [(usize, Check); 5] =
                    [(3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6), (7, criterion_7)];
                for (id, check) in checks {
                    if want(id) {
                        verdicts.push(check(&o));
                    }
                }
            }
            Err(e) => {
                for id in mnist_ids.into_iter().filter(|&i| want(i)) {
                    verdicts.push(verdict(id, false, e.clone()));
                }
            }
        }
    }

    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        verdicts.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
