//! Decoding metrics: tokens per invocation, invocation and wall-clock speedup
//! over the AR baseline, per-step emission histograms, and sweeps over `k`.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::decoder::{ar_generate, space_generate, DecodeConfig, DecodeTrace};
use crate::error::{Result, SpaceError};
use crate::model::ModelParams;
use crate::TokenId;

/// Timing repeats per generation; the median is reported.
pub const TIMING_REPEATS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tokens_generated: usize,
    pub invocations: usize,
    pub avg_accepted_tokens: f64,
    pub ar_tokens_generated: usize,
    pub ar_invocations: usize,
    /// Seconds.
    pub wall_clock_ar: f64,
    pub wall_clock_space: f64,
    pub speedup_wall: f64,
    pub speedup_invocations: f64,
}

impl RunMetrics {
    fn new(
        tokens_generated: usize,
        invocations: usize,
        ar_tokens_generated: usize,
        ar_invocations: usize,
        wall_clock_ar: f64,
        wall_clock_space: f64,
    ) -> Self {
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        RunMetrics {
            tokens_generated,
            invocations,
            avg_accepted_tokens: ratio(tokens_generated as f64, invocations as f64),
            ar_tokens_generated,
            ar_invocations,
            wall_clock_ar,
            wall_clock_space,
            speedup_wall: ratio(wall_clock_ar, wall_clock_space),
            speedup_invocations: ratio(ar_invocations as f64, invocations as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptResult {
    pub prompt: Vec<TokenId>,
    pub output: Vec<TokenId>,
    pub ar_output: Vec<TokenId>,
    pub metrics: RunMetrics,
    pub trace: DecodeTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub k: usize,
    pub per_prompt: Vec<PromptResult>,
    pub aggregate: RunMetrics,
    /// `histogram[n]` = steps that emitted `n` tokens, `n` in `0..=k+1`.
    pub histogram: Vec<usize>,
}

fn median_seconds(mut samples: Vec<Duration>) -> f64 {
    samples.sort();
    samples[samples.len() / 2].as_secs_f64()
}

/// Per-prompt decode config: the base seed offset by the prompt index.
fn prompt_config(config: &DecodeConfig, index: usize) -> DecodeConfig {
    DecodeConfig {
        seed: config.seed.wrapping_add(index as u64),
        ..config.clone()
    }
}

/// Runs the AR baseline and auto-correct decoding on every prompt.
pub fn run_benchmark(
    params: &ModelParams,
    prompts: &[Vec<TokenId>],
    config: &DecodeConfig,
    baseline: &DecodeConfig,
) -> Result<BenchReport> {
    config.validate()?;
    if config.sampling != baseline.sampling
        || config.max_new_tokens != baseline.max_new_tokens
        || config.seed != baseline.seed
    {
        return Err(SpaceError::Config(
            "baseline and decode configs must share sampling, budget and seed".into(),
        ));
    }
    if prompts.is_empty() {
        return Err(SpaceError::Config("no prompts to benchmark".into()));
    }
    let mut per_prompt = Vec::with_capacity(prompts.len());
    let mut histogram = vec![0; config.k + 2];
    for (i, prompt) in prompts.iter().enumerate() {
        let space_cfg = prompt_config(config, i);
        let ar_cfg = prompt_config(baseline, i);

        let mut space_times = Vec::with_capacity(TIMING_REPEATS);
        let mut space_run = None;
        for _ in 0..TIMING_REPEATS {
            let t0 = Instant::now();
            let r = space_generate(params, prompt, &space_cfg)?;
            space_times.push(t0.elapsed());
            space_run = Some(r);
        }
        let (output, trace) = space_run.expect("at least one repeat");

        let mut ar_times = Vec::with_capacity(TIMING_REPEATS);
        let mut ar_run = None;
        for _ in 0..TIMING_REPEATS {
            let t0 = Instant::now();
            let r = ar_generate(params, prompt, &ar_cfg)?;
            ar_times.push(t0.elapsed());
            ar_run = Some(r);
        }
        let (ar_output, ar_invocations) = ar_run.expect("at least one repeat");
        // AR counts the EOS step as a generated token, like the trace does.
        let ar_tokens = ar_output.len() + usize::from(ar_invocations > ar_output.len());

        for (n, c) in trace.emitted_histogram(config.k).into_iter().enumerate() {
            histogram[n] += c;
        }
        per_prompt.push(PromptResult {
            prompt: prompt.clone(),
            output,
            ar_output,
            metrics: RunMetrics::new(
                trace.tokens_generated,
                trace.invocations,
                ar_tokens,
                ar_invocations,
                median_seconds(ar_times),
                median_seconds(space_times),
            ),
            trace,
        });
    }
    let sum = |f: fn(&RunMetrics) -> usize| per_prompt.iter().map(|p| f(&p.metrics)).sum::<usize>();
    let sumf = |f: fn(&RunMetrics) -> f64| per_prompt.iter().map(|p| f(&p.metrics)).sum::<f64>();
    let aggregate = RunMetrics::new(
        sum(|m| m.tokens_generated),
        sum(|m| m.invocations),
        sum(|m| m.ar_tokens_generated),
        sum(|m| m.ar_invocations),
        sumf(|m| m.wall_clock_ar),
        sumf(|m| m.wall_clock_space),
    );
    Ok(BenchReport {
        k: config.k,
        per_prompt,
        aggregate,
        histogram,
    })
}

const METRIC_HEADER: [&str; 10] = [
    "row",
    "tokens_generated",
    "invocations",
    "avg_accepted_tokens",
    "ar_tokens_generated",
    "ar_invocations",
    "speedup_invocations",
    "wall_clock_ar",
    "wall_clock_space",
    "speedup_wall",
];

/// Columns holding wall-clock measurements, which vary between runs.
pub const WALL_CLOCK_COLUMNS: [&str; 3] = ["wall_clock_ar", "wall_clock_space", "speedup_wall"];

fn metric_record(label: String, m: &RunMetrics) -> Vec<String> {
    vec![
        label,
        m.tokens_generated.to_string(),
        m.invocations.to_string(),
        format!("{:.6}", m.avg_accepted_tokens),
        m.ar_tokens_generated.to_string(),
        m.ar_invocations.to_string(),
        format!("{:.6}", m.speedup_invocations),
        format!("{:.6}", m.wall_clock_ar),
        format!("{:.6}", m.wall_clock_space),
        format!("{:.6}", m.speedup_wall),
    ]
}

impl BenchReport {
    /// One row per prompt followed by an `aggregate` row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(METRIC_HEADER)?;
        for (i, p) in self.per_prompt.iter().enumerate() {
            out.write_record(metric_record(i.to_string(), &p.metrics))?;
        }
        out.write_record(metric_record("aggregate".into(), &self.aggregate))?;
        out.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["emitted", "steps"])?;
        for (n, c) in self.histogram.iter().enumerate() {
            out.write_record([n.to_string(), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k"];
        header.extend_from_slice(&METRIC_HEADER[1..]);
        out.write_record(header)?;
        for r in &self.rows {
            let mut rec = metric_record(String::new(), &r.metrics);
            rec[0] = r.k.to_string();
            out.write_record(rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Benchmarks each `(k, model)` pair with `config.k` replaced by `k`.
pub fn sweep_k(
    models: &[(usize, ModelParams)],
    prompts: &[Vec<TokenId>],
    config: &DecodeConfig,
) -> Result<(SweepTable, Vec<BenchReport>)> {
    let mut rows = Vec::with_capacity(models.len());
    let mut reports = Vec::with_capacity(models.len());
    for (k, params) in models {
        let cfg = DecodeConfig {
            k: *k,
            ..config.clone()
        };
        let report = run_benchmark(params, prompts, &cfg, &cfg)?;
        rows.push(SweepRow {
            k: *k,
            metrics: report.aggregate.clone(),
        });
        reports.push(report);
    }
    Ok((SweepTable { rows }, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};

    fn config(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            ..Default::default()
        }
    }

    #[test]
    fn rejection_floor() {
        // Every token maps to 2 except the mask, whose drafts (3) are never right.
        let m = ModelParams::successor_table(&config(8), &[2, 3, 2, 2, 2, 2, 2, 2], 200.0).unwrap();
        let cfg = DecodeConfig::greedy(3, 12);
        let r = run_benchmark(&m, &[vec![4, 5]], &cfg, &cfg).unwrap();
        assert_eq!(r.aggregate.avg_accepted_tokens, 1.0);
        assert_eq!(r.aggregate.speedup_invocations, 1.0);
        assert_eq!(r.histogram, vec![0, 12, 0, 0, 0]);
    }

    #[test]
    fn acceptance_ceiling() {
        let m = ModelParams::successor_table(&config(8), &[2; 8], 200.0).unwrap();
        let cfg = DecodeConfig::greedy(5, 61);
        let r = run_benchmark(&m, &[vec![4, 5]], &cfg, &cfg).unwrap();
        // 1 + 10 × 6 tokens in 11 invocations
        assert_eq!(r.aggregate.invocations, 11);
        assert_eq!(r.aggregate.tokens_generated, 61);
        assert!((r.aggregate.speedup_invocations - r.aggregate.avg_accepted_tokens).abs() < 1e-12);
        assert_eq!(r.histogram[6], 10);
    }

    #[test]
    fn invariants_on_random_model() {
        let m = init_model(&ModelConfig {
            init_std: 0.5,
            ..config(10)
        })
        .unwrap();
        let cfg = DecodeConfig {
            k: 3,
            max_new_tokens: 20,
            seed: 3,
            ..Default::default()
        };
        let prompts = vec![vec![2, 3], vec![4, 5, 6]];
        let r = run_benchmark(&m, &prompts, &cfg, &cfg).unwrap();
        let a = &r.aggregate;
        assert!((a.avg_accepted_tokens - a.tokens_generated as f64 / a.invocations as f64).abs() < 1e-12);
        assert!(a.avg_accepted_tokens >= 1.0 && a.avg_accepted_tokens <= 4.0);
        assert_eq!(r.histogram[0], 0);
        let mut csv_a = Vec::new();
        r.write_csv(&mut csv_a).unwrap();
        let text = String::from_utf8(csv_a).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().starts_with("aggregate,"));
    }

    #[test]
    fn single_k_sweep_matches_benchmark() {
        let m = ModelParams::successor_table(&config(8), &[2; 8], 200.0).unwrap();
        let cfg = DecodeConfig::greedy(2, 10);
        let (table, _) = sweep_k(&[(2, m.clone())], &[vec![3]], &cfg).unwrap();
        let r = run_benchmark(&m, &[vec![3]], &cfg, &cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].metrics.invocations, r.aggregate.invocations);
        assert_eq!(table.rows[0].metrics.avg_accepted_tokens, r.aggregate.avg_accepted_tokens);
    }

    #[test]
    fn mismatched_baseline_is_rejected() {
        let m = init_model(&config(8)).unwrap();
        let a = DecodeConfig::greedy(2, 10);
        let b = DecodeConfig::greedy(2, 11);
        assert!(run_benchmark(&m, &[vec![3]], &a, &b).is_err());
    }
}
