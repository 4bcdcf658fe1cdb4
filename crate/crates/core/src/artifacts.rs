//! Files written by an experiment run, and the staging that makes reruns
//! replace an output directory in one step.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::dump_activations;
use crate::error::{Error, Result};
use crate::experiment::{execute, ExperimentConfig, ExperimentOutcome, PartialRun, SpaceAnalysis, TrialOutcome};
use crate::hull::HullFraction;
use crate::plot::{Chart, Series, Style};
use crate::probe::write_probe_csv;
use crate::stats::{DistanceReport, Metric, Space, COEFFICIENT_NAMES};

pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub classifier_seeds: Vec<u64>,
    /// `(trial, bottleneck, seed)` of every autoencoder.
    pub autoencoder_seeds: Vec<(usize, usize, u64)>,
    pub hull_generators: Vec<(usize, usize, usize)>,
    pub dataset: Option<crate::experiment::DatasetInfo>,
    pub files: Vec<String>,
    pub elapsed_seconds: f64,
    pub status: String,
}

/// SHA-256 of the config's JSON form, ignoring the output location.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let cfg = ExperimentConfig {
        out: None,
        ..cfg.clone()
    };
    let json = serde_json::to_vec(&cfg).expect("config serializes");
    hex(&Sha256::digest(&json))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under one root and remembers their relative paths.
pub struct Writer {
    root: PathBuf,
    files: Vec<String>,
}

impl Writer {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            files: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(Error::at_path(parent))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    pub fn text(&mut self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, body).map_err(Error::at_path(&p))
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(value)?;
        self.text(rel, &(body + "\n"))
    }

    pub fn csv<T: Serialize>(&mut self, rel: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let p = self.path(rel)?;
        let mut w = csv::Writer::from_path(&p).map_err(|e| Error::Stage(format!("{}: {e}", p.display())))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(Error::at_path(&p))
    }
}

#[derive(Serialize)]
struct BaseRow {
    trial: usize,
    classifier_seed: u64,
    train_acc: f64,
    test_acc: f64,
}

#[derive(Serialize)]
struct HullRow {
    trial: usize,
    bottleneck: usize,
    fraction: f64,
    n_test: usize,
    generators_used: usize,
}

#[derive(Serialize)]
struct HullSampleRow {
    sample_id: usize,
    inside: bool,
    residual: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct DistanceRow {
    sample_id: usize,
    euclidean: f64,
    cosine: f64,
    class_conditional: f64,
    in_hull: Option<bool>,
    correct: bool,
}

#[derive(Serialize)]
struct BinRow {
    trial: usize,
    space: &'static str,
    metric: &'static str,
    bin: usize,
    mean_distance: f64,
    accuracy: f64,
    ci_low: f64,
    ci_high: f64,
    count: usize,
}

#[derive(Serialize)]
struct GroupRow {
    trial: usize,
    space: &'static str,
    metric: &'static str,
    correct: bool,
    in_hull: Option<bool>,
    mean_distance: f64,
    count: usize,
}

#[derive(Serialize)]
struct RegressionRow {
    trial: usize,
    space: &'static str,
    metric: &'static str,
    term: &'static str,
    coefficient: f64,
    std_error: f64,
    z_value: f64,
    converged: bool,
    iterations: usize,
}

#[derive(Serialize)]
struct KsRow {
    trial: usize,
    space: &'static str,
    metric: &'static str,
    statistic: f64,
    n_correct: usize,
    n_incorrect: usize,
}

pub(crate) fn write_hull_samples(w: &mut Writer, rel: &str, fraction: &HullFraction) -> Result<()> {
    w.csv(
        rel,
        fraction.records.iter().enumerate().map(|(i, r)| HullSampleRow {
            sample_id: i,
            inside: r.inside,
            residual: r.residual,
            iterations: r.iterations,
        }),
    )
}

pub(crate) fn write_distance_report(w: &mut Writer, rel: &str, report: &DistanceReport) -> Result<()> {
    w.csv(
        rel,
        report.records.iter().map(|d| DistanceRow {
            sample_id: d.sample,
            euclidean: d.euclidean,
            cosine: d.cosine,
            class_conditional: d.class_conditional,
            in_hull: d.in_hull,
            correct: d.correct,
        }),
    )
}

/// `binned.csv`, `groups.csv`, `regression.csv` and `ks.csv`.
pub(crate) fn write_analyses(w: &mut Writer, analyses: &[&SpaceAnalysis]) -> Result<()> {
    w.csv(
        "binned.csv",
        analyses.iter().copied().flat_map(|a| {
            a.bins.iter().zip(&a.bin_intervals).enumerate().map(move |(b, (bin, ci))| BinRow {
                trial: a.trial,
                space: a.space.name(),
                metric: a.metric.name(),
                bin: b,
                mean_distance: bin.mean_distance,
                accuracy: bin.accuracy,
                ci_low: ci.low,
                ci_high: ci.high,
                count: bin.count,
            })
        }),
    )?;
    w.csv(
        "groups.csv",
        analyses.iter().copied().flat_map(|a| {
            a.groups.iter().map(move |g| GroupRow {
                trial: a.trial,
                space: a.space.name(),
                metric: a.metric.name(),
                correct: g.correct,
                in_hull: g.in_hull,
                mean_distance: g.mean_distance,
                count: g.count,
            })
        }),
    )?;
    w.csv(
        "regression.csv",
        analyses.iter().copied().flat_map(|a| {
            a.logistic.iter().flat_map(move |f| {
                COEFFICIENT_NAMES.iter().enumerate().map(move |(k, term)| RegressionRow {
                    trial: a.trial,
                    space: a.space.name(),
                    metric: a.metric.name(),
                    term,
                    coefficient: f.coefficients[k],
                    std_error: f.standard_errors[k],
                    z_value: f.z_values[k],
                    converged: f.converged,
                    iterations: f.iterations,
                })
            })
        }),
    )?;
    w.csv(
        "ks.csv",
        analyses.iter().copied().filter_map(|a| {
            a.ks.map(|k| KsRow {
                trial: a.trial,
                space: a.space.name(),
                metric: a.metric.name(),
                statistic: k.statistic,
                n_correct: k.n_a,
                n_incorrect: k.n_b,
            })
        }),
    )?;
    Ok(())
}

fn write_trials(w: &mut Writer, cfg: &ExperimentConfig, trials: &[TrialOutcome]) -> Result<()> {
    w.csv(
        "base.csv",
        trials.iter().map(|t| BaseRow {
            trial: t.trial,
            classifier_seed: t.classifier_seed,
            train_acc: t.base_accuracy_train,
            test_acc: t.base_accuracy_test,
        }),
    )?;
    let probes: Vec<_> = trials.iter().flat_map(|t| t.probes.iter().cloned()).collect();
    let p = w.path("probe.csv")?;
    write_probe_csv(&probes, &p)?;
    w.json("probe.json", &probes)?;

    if cfg.analysis.hull {
        w.csv(
            "hull.csv",
            trials.iter().flat_map(|t| {
                t.hull.iter().map(move |h| HullRow {
                    trial: t.trial,
                    bottleneck: h.bottleneck,
                    fraction: h.fraction.fraction,
                    n_test: h.fraction.records.len(),
                    generators_used: h.fraction.generators_used,
                })
            }),
        )?;
        for t in trials {
            for h in &t.hull {
                write_hull_samples(w, &format!("hull_samples/trial{}_k{}.csv", t.trial, h.bottleneck), &h.fraction)?;
            }
        }
    }

    if cfg.analysis.distances {
        for t in trials {
            for r in &t.reports {
                write_distance_report(w, &format!("distances/trial{}_{}.csv", t.trial, r.space.name()), r)?;
            }
        }
        let analyses: Vec<&SpaceAnalysis> = trials.iter().flat_map(|t| t.analyses.iter()).collect();
        write_analyses(w, &analyses)?;
    }

    if cfg.analysis.save_models {
        for t in trials {
            w.json(&format!("models/trial{}_classifier.json", t.trial), &t.classifier)?;
            for p in &t.probes {
                w.json(&format!("models/trial{}_autoencoder_k{}.json", t.trial, p.bottleneck), &p.autoencoder)?;
            }
        }
    }
    if cfg.analysis.save_activations {
        for t in trials {
            let p = w.path(&format!("activations/trial{}_train.nact", t.trial))?;
            dump_activations(&t.train_acts, &p)?;
            let p = w.path(&format!("activations/trial{}_test.nact", t.trial))?;
            dump_activations(&t.test_acts, &p)?;
            for pr in &t.probes {
                let (tr, te) = pr.latent_sets(&t.train_acts, &t.test_acts)?;
                let p = w.path(&format!("activations/trial{}_latent_k{}_train.nact", t.trial, pr.bottleneck))?;
                dump_activations(&tr, &p)?;
                let p = w.path(&format!("activations/trial{}_latent_k{}_test.nact", t.trial, pr.bottleneck))?;
                dump_activations(&te, &p)?;
            }
        }
    }
    Ok(())
}

fn write_plots(w: &mut Writer, out: &ExperimentOutcome) -> Result<()> {
    let s = &out.summary;
    let mut rel = Chart::new("Hybrid / base test accuracy", "bottleneck width", "relative accuracy");
    rel.log2_x = true;
    rel.band = Some((0.99, 1.01));
    rel.reference = Some(1.0);
    rel.series.push(
        Series::new(
            "mean over trials",
            s.bottlenecks.iter().map(|b| (b.bottleneck as f64, b.relative_accuracy.mean)).collect(),
            Style::Line,
        )
        .with_errors(
            s.bottlenecks
                .iter()
                .map(|b| (b.relative_accuracy.interval.low, b.relative_accuracy.interval.high))
                .collect(),
        ),
    );
    w.text("plots/relative_accuracy.svg", &rel.to_svg())?;

    let hulls: Vec<_> = s.bottlenecks.iter().filter_map(|b| b.hull_fraction.as_ref().map(|h| (b.bottleneck, h))).collect();
    if !hulls.is_empty() {
        let mut c = Chart::new("Test samples inside the training hull", "bottleneck width", "% inside");
        c.log2_x = true;
        c.y_range = Some((0.0, 105.0));
        c.series.push(
            Series::new(
                "mean over trials",
                hulls.iter().map(|(k, h)| (*k as f64, 100.0 * h.mean)).collect(),
                Style::Line,
            )
            .with_errors(hulls.iter().map(|(_, h)| (100.0 * h.interval.low, 100.0 * h.interval.high)).collect()),
        );
        w.text("plots/hull_fraction.svg", &c.to_svg())?;
    }

    if let Some(first) = out.trials.first() {
        if !first.analyses.is_empty() {
            let mut c = Chart::new(
                format!("Accuracy by distance decile (trial {}, euclidean)", first.trial),
                "distance bin (nearest first)",
                "accuracy",
            );
            for space in [Space::Neural, Space::Latent] {
                if let Some(a) = first.analysis(space, Metric::Euclidean) {
                    let pts = a.bins.iter().enumerate().map(|(i, b)| ((i + 1) as f64, b.accuracy)).collect();
                    let errs = a.bin_intervals.iter().map(|ci| (ci.low, ci.high)).collect();
                    let mut series = Series::new(space.name(), pts, Style::Line).with_errors(errs);
                    if space == Space::Latent {
                        series = series.dashed();
                    }
                    c.series.push(series);
                }
            }
            w.text("plots/deciles.svg", &c.to_svg())?;
        }
    }

    let z_terms = ["distance", "in_hull", "distance:in_hull"];
    let ticks: Vec<(f64, String)> = z_terms.iter().enumerate().map(|(i, t)| ((i + 1) as f64, t.to_string())).collect();
    let mut zc = Chart::new("Logistic regression z-values (latent space, euclidean)", "term", "z-value");
    zc.x_ticks = Some(ticks);
    zc.reference = Some(-1.96);
    for t in &out.trials {
        if let Some(f) = t.analysis(Space::Latent, Metric::Euclidean).and_then(|a| a.logistic.as_ref()) {
            let pts = (0..3).map(|i| ((i + 1) as f64, f.z_values[i + 1])).collect();
            zc.series.push(Series::new(format!("trial {}", t.trial), pts, Style::Points));
        }
    }
    if !zc.series.is_empty() {
        w.text("plots/zvalues.svg", &zc.to_svg())?;
    }

    let metrics: Vec<Metric> = out.config.analysis.metrics.clone();
    if out.config.analysis.distances && !metrics.is_empty() {
        let ticks: Vec<(f64, String)> =
            metrics.iter().enumerate().map(|(i, m)| ((i + 1) as f64, m.name().to_string())).collect();
        let mut kc = Chart::new("KS statistic, correct vs incorrect distances", "metric", "KS statistic");
        kc.x_ticks = Some(ticks);
        for space in [Space::Neural, Space::Latent] {
            let mut pts = Vec::new();
            let mut errs = Vec::new();
            for (i, &m) in metrics.iter().enumerate() {
                if let Some(ks) = s.metrics.iter().find(|x| x.space == space && x.metric == m).and_then(|x| x.ks.as_ref()) {
                    pts.push(((i + 1) as f64, ks.mean));
                    errs.push((ks.interval.low, ks.interval.high));
                }
            }
            if !pts.is_empty() {
                kc.series.push(Series::new(space.name(), pts, Style::Bars).with_errors(errs));
            }
        }
        w.text("plots/ks.svg", &kc.to_svg())?;
    }
    Ok(())
}

fn write_outcome(w: &mut Writer, out: &ExperimentOutcome) -> Result<()> {
    w.json("dataset.json", &out.dataset)?;
    write_trials(w, &out.config, &out.trials)?;
    w.json("summary.json", &out.summary)?;
    write_plots(w, out)
}

fn manifest(
    cfg: &ExperimentConfig,
    dataset: Option<&crate::experiment::DatasetInfo>,
    trials: &[TrialOutcome],
    files: &[String],
    elapsed: f64,
    status: &str,
) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        classifier_seeds: trials.iter().map(|t| t.classifier_seed).collect(),
        autoencoder_seeds: trials
            .iter()
            .flat_map(|t| t.probes.iter().map(move |p| (t.trial, p.bottleneck, p.seed)))
            .collect(),
        hull_generators: trials
            .iter()
            .flat_map(|t| t.hull.iter().map(move |h| (t.trial, h.bottleneck, h.fraction.generators_used)))
            .collect(),
        dataset: dataset.cloned(),
        files: files.to_vec(),
        elapsed_seconds: elapsed,
        status: status.into(),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Replace an existing output directory.
    pub force: bool,
    /// Worker threads; the rayon default when absent.
    pub jobs: Option<usize>,
}

/// Runs `f` on a pool capped at `jobs` threads.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Stage(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!(".{name}.partial"))
}

/// Prepares an empty staging directory next to `out`.
pub fn begin_output(out: &Path, force: bool) -> Result<PathBuf> {
    if out.exists() && !force {
        let empty = out.is_dir() && fs::read_dir(out).map_err(Error::at_path(out))?.next().is_none();
        if !empty {
            return Err(Error::InvalidConfig(format!(
                "{} already exists; pass --force to replace it",
                out.display()
            )));
        }
    }
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(Error::at_path(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(Error::at_path(&staging))?;
    Ok(staging)
}

/// Moves a finished staging directory into place.
pub fn commit_output(staging: &Path, out: &Path) -> Result<()> {
    if out.exists() {
        fs::remove_dir_all(out).map_err(Error::at_path(out))?;
    }
    fs::rename(staging, out).map_err(Error::at_path(out))
}

/// Full `run`: execute the experiment and write every artifact. Outputs are
/// staged and moved into `out` only once complete. A failed run leaves
/// its partial artifacts and a `FAILED` marker in `out` when `out` did not
/// exist before, and in the staging directory otherwise.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no output directory configured".into()))?;
    let staging = begin_output(&out, opts.force)?;
    let start = Instant::now();
    let mut w = Writer::new(staging.clone());
    w.json("config.json", cfg)?;
    let result = with_jobs(opts.jobs, || execute(cfg))?;
    let elapsed = start.elapsed().as_secs_f64();
    match result {
        Ok(outcome) => {
            let written = write_outcome(&mut w, &outcome);
            if let Err(e) = written {
                return fail(&mut w, cfg, None, &[], elapsed, &e, &staging, &out);
            }
            let m = manifest(cfg, Some(&outcome.dataset), &outcome.trials, &w.files, elapsed, "ok");
            w.json("manifest.json", &m)?;
            commit_output(&staging, &out)?;
            Ok(outcome)
        }
        Err(partial) => {
            let PartialRun { error, dataset, trials } = *partial;
            if !trials.is_empty() {
                let _ = write_trials(&mut w, cfg, &trials);
            }
            if let Some(d) = &dataset {
                let _ = w.json("dataset.json", d);
            }
            fail(&mut w, cfg, dataset.as_ref(), &trials, elapsed, &error, &staging, &out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fail<T>(
    w: &mut Writer,
    cfg: &ExperimentConfig,
    dataset: Option<&crate::experiment::DatasetInfo>,
    trials: &[TrialOutcome],
    elapsed: f64,
    error: &Error,
    staging: &Path,
    out: &Path,
) -> Result<T> {
    let _ = w.text(FAILURE_MARKER, &format!("{error}\n"));
    let files = w.files.clone();
    let _ = w.json("manifest.json", &manifest(cfg, dataset, trials, &files, elapsed, "failed"));
    let location = if out.exists() {
        staging.to_path_buf()
    } else {
        match fs::rename(staging, out) {
            Ok(()) => out.to_path_buf(),
            Err(_) => staging.to_path_buf(),
        }
    };
    Err(Error::Stage(format!(
        "{error} (partial artifacts in {})",
        location.display()
    )))
}
