use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolator::ModelParams;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Seconds of timed steady-state inference; at least 1.
    pub duration: f64,
    pub warmup_batches: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            duration: 5.0,
            warmup_batches: 10,
        }
    }
}

/// Forward-only throughput. One sample is one task sample (one batch row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub samples_per_sec: f64,
    pub batch_size: usize,
    pub threads: usize,
    pub batches: usize,
    pub elapsed_s: f64,
    pub hardware: String,
}

/// CPU model from `/proc/cpuinfo` when available, else the target triple parts.
pub fn hardware_string() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|info| {
        info.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split(':').nth(1))
            .map(|s| s.trim().to_string())
    });
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} ({} {}, {cores} logical cores)",
        cpu.unwrap_or_else(|| "unknown cpu".into()),
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Times repeated single-threaded forward passes over `batch` after a warmup.
pub fn bench_inference(params: &ModelParams<f32>, batch: &Tensor<f32>, opts: &BenchOptions) -> Result<BenchResult> {
    if opts.duration.is_nan() || opts.duration < 1.0 {
        return Err(Error::Config(format!(
            "benchmark duration must be at least 1 s, got {}",
            opts.duration
        )));
    }
    let batch_size = batch.shape().first().copied().unwrap_or(0);
    for _ in 0..opts.warmup_batches.max(1) {
        params.forward(batch)?;
    }
    let budget = Duration::from_secs_f64(opts.duration);
    let start = Instant::now();
    let mut batches = 0usize;
    while start.elapsed() < budget {
        std::hint::black_box(params.forward(batch)?);
        batches += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(BenchResult {
        samples_per_sec: (batches * batch_size) as f64 / elapsed,
        batch_size,
        threads: 1,
        batches,
        elapsed_s: elapsed,
        hardware: hardware_string(),
    })
}
