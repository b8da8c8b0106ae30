use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use space_core::bench::{run_benchmark, sweep_k, BenchReport, RunMetrics};
use space_core::{ModelParams, TokenId};

use crate::args::{BenchArgs, SweepArgs};
use crate::config::RunConfig;
use crate::train::{apply_train_flags, load_corpus, load_model, run_label, train_into};
use crate::Outcome;

#[derive(Deserialize)]
#[serde(untagged)]
enum PromptLine {
    Tokens(Vec<TokenId>),
    Record { prompt: Vec<TokenId> },
}

/// One prompt per line, either a bare token array or an object with a `prompt` field.
pub fn read_prompts(path: &Path) -> Result<Vec<Vec<TokenId>>> {
    let file = File::open(path).with_context(|| format!("opening prompts {}", path.display()))?;
    let mut prompts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p = match serde_json::from_str::<PromptLine>(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?
        {
            PromptLine::Tokens(t) => t,
            PromptLine::Record { prompt } => prompt,
        };
        prompts.push(p);
    }
    if prompts.is_empty() {
        bail!("no prompts in {}", path.display());
    }
    Ok(prompts)
}

fn aggregate_line(m: &RunMetrics) -> String {
    format!(
        "tokens {} invocations {} avg accepted tokens {:.6} speedup (invocations) {:.6} speedup (wall) {:.3}",
        m.tokens_generated, m.invocations, m.avg_accepted_tokens, m.speedup_invocations, m.speedup_wall
    )
}

fn write_report(report: &BenchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.write_csv(BufWriter::new(File::create(dir.join("bench.csv"))?))?;
    report.write_histogram_csv(BufWriter::new(File::create(dir.join("histogram.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("report.json"))?), report)?;
    Ok(())
}

fn report_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.paths.report_dir.clone())
        .context("no output directory: pass --out or set paths.report_dir")
}

pub fn run(args: BenchArgs) -> Result<Outcome> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let model_path = args
        .model
        .or_else(|| cfg.paths.checkpoint.clone())
        .context("no model: pass --model or set paths.checkpoint")?;
    let prompts = read_prompts(&args.prompts_file)?;
    let out = report_dir(args.out, &cfg)?;
    let params = load_model(&model_path)?;
    let decode = args.decode.apply(&cfg.decode);
    let report = run_benchmark(&params, &prompts, &decode, &decode)?;
    write_report(&report, &out)?;
    println!("k: {}", report.k);
    println!("prompts: {}", prompts.len());
    println!("aggregate: {}", aggregate_line(&report.aggregate));
    Ok(Outcome::Success)
}

pub fn sweep(args: SweepArgs) -> Result<Outcome> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    apply_train_flags(&args.train, &mut cfg);
    let decode = args.decode.apply(&cfg.decode);
    let corpus_path = args
        .corpus
        .or_else(|| cfg.paths.corpus.clone())
        .context("no corpus: pass --corpus or set paths.corpus")?;
    let out = report_dir(args.out, &cfg)?;
    let corpus = load_corpus(&corpus_path, &cfg.model)?;
    let prompts = match &args.prompts_file {
        Some(p) => read_prompts(p)?,
        None => corpus.iter().take(args.num_prompts).map(|s| s.prompt.clone()).collect(),
    };
    if prompts.is_empty() {
        bail!("no prompts to decode");
    }

    let mut models: Vec<(usize, ModelParams)> = Vec::with_capacity(args.k_list.len());
    for &k in &args.k_list {
        let mut sarsft = cfg.sarsft.clone();
        sarsft.k = k;
        sarsft.validate()?;
        let dir = out.join(format!("k{k}"));
        let (mut params, loss) = train_into(&cfg.model, &sarsft, &corpus, &dir, false)?;
        // decode the checkpointed weights
        params.round_to_f32();
        println!("trained k={k}: {} final loss {loss:.6}", run_label(&sarsft));
        models.push((k, params));
    }
    let (table, reports) = sweep_k(&models, &prompts, &decode)?;
    std::fs::create_dir_all(&out)?;
    table.write_csv(BufWriter::new(File::create(out.join("sweep.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("sweep.json"))?), &table)?;
    for report in &reports {
        write_report(report, &out.join(format!("k{}", report.k)))?;
    }
    println!("k,avg_accepted_tokens,speedup_invocations,speedup_wall");
    for r in &table.rows {
        println!(
            "{},{:.6},{:.6},{:.3}",
            r.k, r.metrics.avg_accepted_tokens, r.metrics.speedup_invocations, r.metrics.speedup_wall
        );
    }
    let mut sorted: Vec<_> = table.rows.iter().collect();
    sorted.sort_by_key(|r| r.k);
    let monotone = sorted
        .windows(2)
        .all(|w| w[1].metrics.avg_accepted_tokens >= w[0].metrics.avg_accepted_tokens);
    println!("avg accepted tokens nondecreasing in k: {}", if monotone { "yes" } else { "no" });
    Ok(Outcome::Success)
}
