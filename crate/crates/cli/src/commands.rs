use std::path::{Path, PathBuf};

use chanex_core::channelgen::{generate_dataset, CsiTensor, DatasetId};
use chanex_core::dataio::{read_dataset, split_dataset, stack_batch, write_atomic, write_dataset, Split, TaskDomain};
use chanex_core::extrapolator::{load_checkpoint, ModelParams, Variant};
use chanex_core::metrics::{
    accuracy, append_csv, baseline_repeat_last, bench_inference, hardware_string, table_csv, BenchOptions,
    BenchResult, EvalReport, EvalRow,
};
use chanex_core::trainer::{predict, train, TaskData, TrainReport};
use chanex_core::{Error, Result};

use crate::config::ExperimentConfig;

pub const BASELINE: &str = "repeat-last";

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

pub fn cmd_gen(cfg: &ExperimentConfig, id: DatasetId, out: Option<PathBuf>, n: Option<usize>) -> Result<()> {
    let n = n.unwrap_or(cfg.channel.n_samples);
    if n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let channel = cfg.channel(id);
    let out = out.unwrap_or_else(|| cfg.dataset_path(id));
    ensure_parent(&out)?;
    let data = generate_dataset(channel, n, channel.seed)?;
    let sum = write_dataset(&data, &out)?;
    write_json(&out.with_extension("config.json"), cfg)?;
    let [t, f, p, q] = channel.grid();
    println!(
        "dataset {id} ({}) -> {}\nshape [{n}, {t}, {f}, {p}, {q}]  seed {}  checksum {sum:#018x}",
        id.distribution(),
        out.display(),
        channel.seed
    );
    Ok(())
}

/// Reads a dataset file and checks it against the configured grid.
pub fn load_dataset(cfg: &ExperimentConfig, id: DatasetId, path: Option<&Path>) -> Result<Vec<CsiTensor>> {
    let path = path.map_or_else(|| cfg.dataset_path(id), Path::to_path_buf);
    let data = read_dataset(&path)?;
    let want = cfg.channel(id).grid();
    if let Some(bad) = data.iter().find(|h| h.dims() != want) {
        return Err(Error::shape("dataset grid vs config", &bad.dims(), &want));
    }
    Ok(data)
}

/// Trains one variant and persists checkpoint, resolved config and report
/// under `cfg.run_path()`.
pub fn run_training(cfg: &ExperimentConfig, data_a: &[CsiTensor], quiet: bool) -> Result<(PathBuf, TrainReport)> {
    let split = split_dataset(data_a.len(), cfg.seed)?;
    let data = TaskData::from_split(data_a, &split, &cfg.spec())?;
    let dir = cfg.run_path();
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let ckpt = dir.join("best.ckpt");
    let epochs = cfg.train.epochs;
    let mut progress = |l: &chanex_core::trainer::EpochLog| {
        if !quiet {
            println!(
                "epoch {:>3}/{epochs}  train {:.6}  val {:.6}  lr {:.3e}",
                l.epoch + 1,
                l.train_loss,
                l.val_loss,
                l.lr
            );
        }
    };
    let (_, report) = train(&cfg.model, &data, &cfg.train, Some(&ckpt), &mut progress)?;
    write_json(&dir.join("train_report.json"), &report)?;
    Ok((ckpt, report))
}

pub fn cmd_train(cfg: &ExperimentConfig, dataset: Option<&Path>) -> Result<()> {
    let data = load_dataset(cfg, DatasetId::A, dataset)?;
    println!(
        "training {} on {} ({} samples, seed {})",
        cfg.model.variant(),
        cfg.task.domain,
        data.len(),
        cfg.seed
    );
    let (ckpt, report) = run_training(cfg, &data, false)?;
    println!(
        "best epoch {} (val {:.6}), {:.1} s; checkpoint {}",
        report.best_epoch + 1,
        report.best_val_loss,
        report.wall_clock_s,
        ckpt.display()
    );
    if let Some(t) = report.test {
        println!("test sgcs {:.4}  nmse {:.2} dB", t.sgcs, t.nmse_db);
    }
    Ok(())
}

/// Samples the model is scored on: the test split for A, everything for B.
pub fn eval_split(cfg: &ExperimentConfig, id: DatasetId, n: usize) -> Result<Split> {
    Ok(match id {
        DatasetId::A => {
            let s = split_dataset(n, cfg.seed)?;
            Split {
                train: Vec::new(),
                val: Vec::new(),
                test: s.test,
            }
        }
        DatasetId::B => Split {
            train: Vec::new(),
            val: Vec::new(),
            test: (0..n).collect(),
        },
    })
}

/// Scores a model and the repeat-last baseline; returns (model, baseline) rows.
pub fn evaluate(
    cfg: &ExperimentConfig,
    params: &ModelParams<f32>,
    id: DatasetId,
    data: &[CsiTensor],
    samples_per_sec: Option<f64>,
) -> Result<(EvalRow, EvalRow)> {
    let spec = cfg.spec();
    let m = &params.config;
    if (m.t_past, m.t_future, m.d_in, m.d_out) != (cfg.model.t_past, cfg.model.t_future, cfg.model.d_in, cfg.model.d_out) {
        return Err(Error::shape(
            "checkpoint vs task (t_past, t_future, d_in, d_out)",
            &[m.t_past, m.t_future, m.d_in, m.d_out],
            &[cfg.model.t_past, cfg.model.t_future, cfg.model.d_in, cfg.model.d_out],
        ));
    }
    let split = eval_split(cfg, id, data.len())?;
    let task = TaskData::from_split(data, &split, &spec)?;
    let (pred, target) = predict(params, &task.test, cfg.eval.batch_size)?;
    let model = accuracy(&pred, &target, task.dims[1])?;
    let idx: Vec<usize> = (0..task.test.len()).collect();
    let (x, _) = stack_batch(&task.test, &idx)?;
    let base = accuracy(&baseline_repeat_last(&x, &spec, task.dims)?, &target, task.dims[1])?;
    let row = |variant: String, sgcs: f64, nmse_db: f64, sps: Option<f64>| EvalRow {
        variant,
        dataset: id.label().into(),
        distribution: id.distribution().into(),
        task: cfg.task.domain,
        samples_per_sec: sps,
        sgcs,
        nmse_db,
        n_samples: task.test.len(),
        seed: cfg.seed,
    };
    Ok((
        row(m.variant().label().into(), model.sgcs, model.nmse_db, samples_per_sec),
        row(BASELINE.into(), base.sgcs, base.nmse_db, None),
    ))
}

/// Appends rows to `<report_dir>/<stem>.csv` and `<stem>.json` and rewrites
/// the pivoted `<stem>_table.csv` from everything recorded so far.
pub fn record(cfg: &ExperimentConfig, stem: &str, rows: &[EvalRow]) -> Result<PathBuf> {
    let dir = &cfg.paths.report_dir;
    std::fs::create_dir_all(dir)?;
    append_csv(&dir.join(format!("{stem}.csv")), rows)?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut report = if json_path.exists() {
        let r: EvalReport = serde_json::from_str(&std::fs::read_to_string(&json_path)?)?;
        r.validate()?;
        r
    } else {
        EvalReport::new(hardware_string())
    };
    report.rows.extend_from_slice(rows);
    write_json(&json_path, &report)?;
    let table = dir.join(format!("{stem}_table.csv"));
    write_atomic(&table, table_csv(&report.rows).as_bytes())?;
    Ok(table)
}

fn print_rows(rows: &[EvalRow]) {
    for r in rows {
        let nmse = if r.nmse_db.is_finite() {
            format!("{:.2}", r.nmse_db)
        } else {
            "-inf".into()
        };
        println!(
            "{:<12} {} {:<19} {:<6} sgcs {:.4}  nmse {nmse} dB  (n={}, seed {})",
            r.variant, r.dataset, r.distribution, r.task, r.sgcs, r.n_samples, r.seed
        );
    }
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    id: DatasetId,
    dataset: Option<&Path>,
    bench: bool,
) -> Result<()> {
    let params = load_checkpoint(checkpoint)?;
    let mut cfg = cfg.clone();
    if let Some(domain) = params.config.domain {
        cfg = cfg.with_task(domain)?;
    }
    let data = load_dataset(&cfg, id, dataset)?;
    let sps = if bench {
        Some(run_bench(&cfg, &params, None)?.samples_per_sec)
    } else {
        None
    };
    let (m, b) = evaluate(&cfg, &params, id, &data, sps)?;
    let rows = [m, b];
    print_rows(&rows);
    let table = record(&cfg, "eval", &rows)?;
    println!("report: {}", table.display());
    Ok(())
}

/// Inference throughput on a batch of freshly generated dataset-A samples.
pub fn run_bench(cfg: &ExperimentConfig, params: &ModelParams<f32>, duration: Option<f64>) -> Result<BenchResult> {
    let opts = BenchOptions {
        duration: duration.unwrap_or(cfg.eval.duration),
        warmup_batches: cfg.eval.warmup_batches,
    };
    if opts.duration.is_nan() || opts.duration < 1.0 {
        return Err(Error::Config(format!("benchmark duration must be at least 1 s, got {}", opts.duration)));
    }
    let bs = cfg.eval.batch_size;
    let csi = generate_dataset(&cfg.channel.a, bs, cfg.channel.a.seed ^ 0xBE4C)?;
    let all: Vec<usize> = (0..bs).collect();
    let data = TaskData::from_split(
        &csi,
        &Split {
            train: Vec::new(),
            val: Vec::new(),
            test: all.clone(),
        },
        &cfg.spec(),
    )?;
    let (x, _) = stack_batch(&data.test, &all)?;
    bench_inference(params, &x, &opts)
}

pub fn cmd_bench(cfg: &ExperimentConfig, checkpoint: &Path, duration: Option<f64>) -> Result<()> {
    if let Some(d) = duration {
        if d.is_nan() || d < 1.0 {
            return Err(Error::Config(format!("--duration must be at least 1 s, got {d}")));
        }
    }
    let params = load_checkpoint(checkpoint)?;
    let mut cfg = cfg.clone();
    if let Some(domain) = params.config.domain {
        cfg = cfg.with_task(domain)?;
    }
    let r = run_bench(&cfg, &params, duration)?;
    println!(
        "{}: {:.2} samples/s (batch {}, {} thread, {} batches in {:.2} s)\nhardware: {}",
        params.config.variant(),
        r.samples_per_sec,
        r.batch_size,
        r.threads,
        r.batches,
        r.elapsed_s,
        r.hardware
    );
    println!("{}", serde_json::to_string(&r)?);
    Ok(())
}

pub fn cmd_ablate(cfg: &ExperimentConfig, tasks: &[TaskDomain], seeds: &[u64], bench: bool) -> Result<()> {
    let data_a = load_dataset(cfg, DatasetId::A, None)?;
    let data_b = match load_dataset(cfg, DatasetId::B, None) {
        Ok(d) => Some(d),
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            println!("dataset B not found at {}; skipping out-of-distribution rows", cfg.dataset_path(DatasetId::B).display());
            None
        }
        Err(e) => return Err(e),
    };
    let mut rows = Vec::new();
    for &task in tasks {
        let base = cfg.with_task(task)?;
        for variant in Variant::ALL {
            let mut speed = None;
            for &seed in seeds {
                let run = base.with_variant(variant)?.with_seed(seed);
                println!("== {task} {variant} seed {seed}");
                let (ckpt, report) = run_training(&run, &data_a, true)?;
                println!(
                    "   best epoch {} val {:.6} ({:.1} s)",
                    report.best_epoch + 1,
                    report.best_val_loss,
                    report.wall_clock_s
                );
                let params = load_checkpoint(&ckpt)?;
                if bench && speed.is_none() {
                    speed = Some(run_bench(&run, &params, None)?.samples_per_sec);
                }
                let mut datasets = vec![(DatasetId::A, &data_a)];
                if let Some(b) = &data_b {
                    datasets.push((DatasetId::B, b));
                }
                for (id, data) in datasets {
                    let (m, b) = evaluate(&run, &params, id, data, speed)?;
                    print_rows(std::slice::from_ref(&m));
                    rows.push(m);
                    // Baseline rows do not depend on the variant.
                    if variant == Variant::Proposed {
                        rows.push(b);
                    }
                }
            }
        }
    }
    let table = record(cfg, "ablation", &rows)?;
    println!("{}", std::fs::read_to_string(&table)?);
    println!("report: {}", table.display());
    Ok(())
}
