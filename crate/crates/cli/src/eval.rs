//! Calibrated evaluation, ablation and noise-robustness reports.

use std::fmt::Write as _;
use std::path::Path;

use fbpick_core::{BranchSet, ModelConfig};
use fbpick_seismic::metrics::{apr_sweep, fmt_num, mean_std, sweep_table, SweepRow, TSV_COLUMNS};
use fbpick_seismic::robustness::{robustness_run, robustness_table, RobustnessRow};
use fbpick_seismic::{calibrate_threshold, compute_metrics, sta_lta_result, MetricsReport, PickResult};

use crate::config::RunConfig;
use crate::corpus::SplitData;
use crate::error::{CliError, Result};
use crate::infer::AnyModel;
use crate::train::{checkpoint_path, seed_dir, train_seed};

/// Threshold-free results of every gather in `data`.
pub fn model_results(model: &AnyModel, data: &SplitData) -> Result<Vec<PickResult>> {
    data.gathers
        .iter()
        .zip(&data.lmo)
        .map(|(g, l)| model.pick(g, l, 0.0))
        .collect()
}

pub fn stalta_results(config: &RunConfig, data: &SplitData) -> Result<Vec<PickResult>> {
    Ok(data
        .gathers
        .iter()
        .map(|g| sta_lta_result(g, &config.eval.stalta))
        .collect::<fbpick_seismic::Result<_>>()?)
}

/// One scored picker: the threshold reaching the target rate over all
/// traces and the metrics there. An unreachable target leaves both empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub label: String,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub report: Option<MetricsReport>,
    pub note: String,
}

pub fn score(label: &str, seed: Option<u64>, results: &[PickResult], data: &SplitData, target: f64) -> Result<Scored> {
    let conf: Vec<f64> = results.iter().flat_map(|r| r.confidence.iter().copied()).collect();
    let manual: Vec<i32> = data.gathers.iter().flat_map(|g| g.picks.iter().copied()).collect();
    let mut s = Scored {
        label: label.into(),
        seed,
        threshold: None,
        report: None,
        note: "ok".into(),
    };
    match calibrate_threshold(&conf, target) {
        Ok(cal) => {
            let auto: Vec<i32> = results.iter().flat_map(|r| r.with_threshold(cal.threshold).picks).collect();
            s.threshold = Some(cal.threshold);
            s.report = Some(compute_metrics(&auto, &manual)?);
        }
        Err(e @ fbpick_seismic::Error::Calibration { .. }) => s.note = e.to_string(),
        Err(e) => return Err(e.into()),
    }
    Ok(s)
}

pub fn sweep(results: &[PickResult], data: &SplitData, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    let manual: Vec<Vec<i32>> = data.gathers.iter().map(|g| g.picks.clone()).collect();
    Ok(apr_sweep(results, &manual, thresholds)?)
}

const FIELDS: usize = 11;

fn metric_values(r: &MetricsReport) -> [f64; FIELDS] {
    [
        r.apr,
        r.n_traces as f64,
        r.n_intersection as f64,
        r.hr[0],
        r.hr[1],
        r.hr[2],
        r.hr[3],
        r.hr[4],
        r.mae,
        r.mbe,
        r.rmse,
    ]
}

/// Rows `label seed threshold <metrics> note`, followed by mean and
/// standard deviation rows per label when a label has several seeds.
pub fn score_table(rows: &[Scored]) -> String {
    let mut s = format!("model\tseed\tthreshold\t{TSV_COLUMNS}\tnote\n");
    let blank = ["undefined"; FIELDS].join("\t");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.label,
            r.seed.map_or("-".into(), |v| v.to_string()),
            r.threshold.map_or("undefined".into(), fmt_num),
            r.report.as_ref().map_or(blank.clone(), MetricsReport::tsv_fields),
            r.note
        );
    }
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    for label in labels {
        let reports: Vec<&MetricsReport> = rows
            .iter()
            .filter(|r| r.label == label)
            .filter_map(|r| r.report.as_ref())
            .collect();
        if rows.iter().filter(|r| r.label == label).count() < 2 {
            continue;
        }
        for (name, pick) in [("mean", 0usize), ("std", 1)] {
            let cols: Vec<String> = (0..FIELDS)
                .map(|k| {
                    let v: Vec<f64> = reports.iter().map(|r| metric_values(r)[k]).collect();
                    mean_std(&v).map_or("undefined".into(), |ms| fmt_num(if pick == 0 { ms.0 } else { ms.1 }))
                })
                .collect();
            let _ = writeln!(s, "{label}\t{name}\t-\t{}\t{} seeds", cols.join("\t"), reports.len());
        }
    }
    s
}

/// Short human summary of one row with the configured hit-rate tolerances.
pub fn summary_line(config: &RunConfig, r: &Scored) -> String {
    let seed = r.seed.map_or(String::new(), |s| format!(" seed {s}"));
    match &r.report {
        None => format!("{}{seed}: {}", r.label, r.note),
        Some(rep) => {
            let hr: Vec<String> = config
                .eval
                .hr_deltas
                .iter()
                .filter_map(|&d| rep.hr_at(d).map(|v| format!("HR@{d}px {v:.4}")))
                .collect();
            format!(
                "{}{seed}: threshold {:.4}, APR {:.4}, {}, MAE {:.4}, MBE {:.4}, RMSE {:.4}",
                r.label,
                r.threshold.unwrap_or(f64::NAN),
                rep.apr,
                hr.join(", "),
                rep.mae,
                rep.mbe,
                rep.rmse
            )
        }
    }
}

pub fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(dir.display(), e))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| CliError::data(p.display(), e))
}

/// Loads the checkpoint of one seed, failing with a pointer to `train` when
/// it does not exist.
pub fn load_seed(config: &RunConfig, run_dir: &Path, seed: u64) -> Result<AnyModel> {
    let p = checkpoint_path(run_dir, seed);
    if !p.exists() {
        return Err(CliError::Data(format!(
            "missing checkpoint {} (run `fbpick train` first)",
            p.display()
        )));
    }
    AnyModel::load(&p, config.training.precision)
}

pub type SeedSweeps = Vec<(u64, Vec<SweepRow>)>;

/// Evaluation of every seed of the run in `run_dir` on `test`, with sweep
/// tables keyed by seed.
pub fn evaluate_run(
    config: &RunConfig,
    label: &str,
    run_dir: &Path,
    test: &SplitData,
) -> Result<(Vec<Scored>, SeedSweeps)> {
    let mut rows = Vec::new();
    let mut sweeps = Vec::new();
    for &seed in &config.training.seeds {
        let model = load_seed(config, run_dir, seed)?;
        let results = model_results(&model, test)?;
        rows.push(score(label, Some(seed), &results, test, config.eval.target_apr)?);
        sweeps.push((seed, sweep(&results, test, &config.eval.sweep_thresholds)?));
    }
    Ok((rows, sweeps))
}

/// `eval`: model seeds and the APR-matched STA/LTA baseline on the test
/// split. Writes `eval.tsv`, one `sweep-seed-N.tsv` per seed and
/// `sweep-stalta.tsv`; returns the rows.
pub fn run_eval(config: &RunConfig, test: &SplitData, progress: &mut dyn FnMut(&str)) -> Result<Vec<Scored>> {
    let out = &config.paths.output_dir;
    // without snake branches the network is a plain U-Net
    let label = if config.model.branches == "local" { "unet" } else { "dsunet" };
    let (mut rows, sweeps) = evaluate_run(config, label, &config.paths.run_dir, test)?;
    for (seed, s) in &sweeps {
        write(out, &format!("sweep-seed-{seed}.tsv"), &sweep_table(s))?;
    }
    let st = stalta_results(config, test)?;
    rows.push(score("stalta", None, &st, test, config.eval.target_apr)?);
    write(out, "sweep-stalta.tsv", &sweep_table(&sweep(&st, test, &config.eval.sweep_thresholds)?))?;
    write(out, "eval.tsv", &score_table(&rows))?;
    for r in &rows {
        progress(&summary_line(config, r));
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Branches,
    Scope,
    Kernel,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Branches => "branches",
            Axis::Scope => "scope",
            Axis::Kernel => "kernel",
        }
    }
}

/// Model variants of one ablation axis with their labels.
pub fn variants(config: &RunConfig, base: &ModelConfig, axis: Axis) -> Vec<(String, ModelConfig)> {
    match axis {
        Axis::Branches => BranchSet::ablation_variants()
            .into_iter()
            .map(|b| {
                (
                    b.to_string(),
                    ModelConfig {
                        branches: b,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        Axis::Scope => config
            .ablation
            .extension_scopes
            .iter()
            .map(|&s| {
                (
                    format!("scope-{s}"),
                    ModelConfig {
                        extension_scope: s,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        Axis::Kernel => config
            .ablation
            .kernel_lengths
            .iter()
            .map(|&k| {
                (
                    format!("kernel-{k}"),
                    ModelConfig {
                        snake_kernel_length: k,
                        ..base.clone()
                    },
                )
            })
            .collect(),
    }
}

/// `ablate`: for each variant, trains missing seeds under
/// `run_dir/ablate/<axis>/<variant>` and scores them. Writes
/// `ablate-<axis>.tsv`.
pub fn run_ablation(
    config: &RunConfig,
    axis: Axis,
    train: &SplitData,
    val: &SplitData,
    test: &SplitData,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<Scored>> {
    let base = config.model.to_model_config()?;
    let mut rows = Vec::new();
    for (label, model) in variants(config, &base, axis) {
        model.validate().map_err(|e| CliError::Usage(format!("ablation variant {label}: {e}")))?;
        let dir = config.paths.run_dir.join("ablate").join(axis.name()).join(&label);
        for &seed in &config.training.seeds {
            if checkpoint_path(&dir, seed).exists() {
                continue;
            }
            progress(&format!("training variant {label}, seed {seed}"));
            let sd = seed_dir(&dir, seed);
            match config.training.precision {
                crate::config::Precision::F32 => train_seed::<f32>(config, &model, train, val, seed, &sd, progress)?,
                crate::config::Precision::F64 => train_seed::<f64>(config, &model, train, val, seed, &sd, progress)?,
            };
        }
        let (r, _) = evaluate_run(config, &label, &dir, test)?;
        for row in &r {
            progress(&summary_line(config, row));
        }
        rows.extend(r);
    }
    write(&config.paths.output_dir, &format!("ablate-{}.tsv", axis.name()), &score_table(&rows))?;
    Ok(rows)
}

/// `robustness`: noise sweep over the clean test copies for every seed and
/// for STA/LTA. Writes `robustness-seed-N.tsv` and `robustness-stalta.tsv`.
pub fn run_robustness(
    config: &RunConfig,
    clean_test: &SplitData,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<(String, Vec<RobustnessRow>)>> {
    let e = &config.eval;
    let pairs = clean_test.pairs();
    let mut out = Vec::new();
    for &seed in &config.training.seeds {
        let model = load_seed(config, &config.paths.run_dir, seed)?;
        let rows = robustness_run(&pairs, &e.snr_list, e.target_apr, e.noise_seed, |g, l| model.pick(g, l, 0.0))?;
        let table = robustness_table(&rows);
        progress(&format!("seed {seed}\n{table}"));
        write(&config.paths.output_dir, &format!("robustness-seed-{seed}.tsv"), &table)?;
        out.push((format!("seed-{seed}"), rows));
    }
    let rows = robustness_run(&pairs, &e.snr_list, e.target_apr, e.noise_seed, |g, _| {
        sta_lta_result(g, &e.stalta)
    })?;
    let table = robustness_table(&rows);
    progress(&format!("stalta\n{table}"));
    write(&config.paths.output_dir, "robustness-stalta.tsv", &table)?;
    out.push(("stalta".into(), rows));
    Ok(out)
}
