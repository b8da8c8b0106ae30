use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use space_core::sarsft::{read_corpus, train, SarSftConfig, TrainingSample};
use space_core::{init_model, ModelConfig, ModelParams};

use crate::args::{InitArgs, TrainArgs, TrainFlags};
use crate::config::RunConfig;
use crate::Outcome;

pub const FINAL_CHECKPOINT: &str = "model.spc";
pub const LOSS_CURVE: &str = "loss_curve.csv";

pub fn load_corpus(path: &Path, model: &ModelConfig) -> Result<Vec<TrainingSample>> {
    let file = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    let corpus = read_corpus(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if corpus.is_empty() {
        bail!("corpus {} is empty", path.display());
    }
    for (i, s) in corpus.iter().enumerate() {
        if let Some(t) = s.prompt.iter().chain(&s.answer).find(|&&t| t as usize >= model.vocab_size) {
            bail!("corpus sample {i}: token {t} outside vocabulary of {}", model.vocab_size);
        }
    }
    Ok(corpus)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    ModelParams::load(path)
        .map(|c| c.params)
        .with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn apply_train_flags(flags: &TrainFlags, cfg: &mut RunConfig) {
    if let Some(v) = flags.p_ar {
        cfg.sarsft.p_ar = v;
    }
    if let Some(v) = flags.epochs {
        cfg.sarsft.epochs = v;
    }
    if let Some(v) = flags.lr {
        cfg.sarsft.learning_rate = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.sarsft.batch_size = v;
    }
    if let Some(v) = flags.train_seed {
        cfg.sarsft.seed = v;
    }
    if let Some(v) = flags.model_seed {
        cfg.model.seed = v;
    }
}

pub fn run_label(cfg: &SarSftConfig) -> String {
    if cfg.is_plain_sft() {
        "plain SFT (p_ar=1)".to_string()
    } else {
        format!("SAR-SFT (k={}, p_ar={})", cfg.k, cfg.p_ar)
    }
}

/// Trains from a fresh initialisation, writing per-epoch checkpoints, the
/// final checkpoint and the loss curve into `out`. Returns the trained model
/// and the last step's loss.
pub fn train_into(
    model: &ModelConfig,
    sarsft: &SarSftConfig,
    corpus: &[TrainingSample],
    out: &Path,
    verbose: bool,
) -> Result<(ModelParams, f64)> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let init = init_model(model)?;
    let meta = checkpoint_meta(sarsft);
    let epochs = sarsft.epochs;
    let outcome = train(&init, corpus, sarsft, |summary, params| {
        if verbose {
            println!(
                "epoch {}/{} steps {} mean loss {:.6}",
                summary.epoch + 1,
                epochs,
                summary.steps,
                summary.mean_loss
            );
        }
        let mut m = meta.clone();
        m.push(("epoch".into(), (summary.epoch + 1).to_string()));
        let path = out.join(format!("epoch_{:03}.spc", summary.epoch + 1));
        params.save(&path, &m.into_iter().collect())?;
        Ok(())
    })?;
    outcome
        .params
        .save(out.join(FINAL_CHECKPOINT), &meta.into_iter().collect())?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join(LOSS_CURVE))?));
    w.write_record(["step", "loss"])?;
    for (step, loss) in &outcome.losses {
        w.write_record([step.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    let final_loss = outcome.losses.last().map_or(f64::NAN, |l| l.1);
    Ok((outcome.params, final_loss))
}

fn checkpoint_meta(c: &SarSftConfig) -> Vec<(String, String)> {
    vec![
        ("k".into(), c.k.to_string()),
        ("p_ar".into(), c.p_ar.to_string()),
        ("epochs".into(), c.epochs.to_string()),
        ("seed".into(), c.seed.to_string()),
    ]
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.paths.report_dir.clone())
        .context("no output directory: pass --out or set paths.report_dir")
}

pub fn run(args: TrainArgs) -> Result<Outcome> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    apply_train_flags(&args.train, &mut cfg);
    if let Some(k) = args.k {
        cfg.sarsft.k = k;
    }
    if let Some(s) = args.seed {
        cfg.sarsft.seed = s;
    }
    cfg.model.validate()?;
    cfg.sarsft.validate()?;
    let corpus_path = args
        .corpus
        .or_else(|| cfg.paths.corpus.clone())
        .context("no corpus: pass --corpus or set paths.corpus")?;
    let out = out_dir(args.out, &cfg)?;
    let corpus = load_corpus(&corpus_path, &cfg.model)?;

    println!("run: {}", run_label(&cfg.sarsft));
    println!("samples: {}", corpus.len());
    let (_, final_loss) = train_into(&cfg.model, &cfg.sarsft, &corpus, &out, true)?;
    println!("final loss: {final_loss:.9}");
    println!("checkpoint: {}", out.join(FINAL_CHECKPOINT).display());
    Ok(Outcome::Success)
}

pub fn init(args: InitArgs) -> Result<Outcome> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(v) = args.vocab {
        cfg.model.vocab_size = v;
    }
    if let Some(v) = args.init_std {
        cfg.model.init_std = v;
    }
    if let Some(v) = args.model_seed {
        cfg.model.seed = v;
    }
    let params = init_model(&cfg.model)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    params.save(&args.out, &Default::default())?;
    println!("parameters: {}", params.num_parameters());
    println!("checkpoint: {}", args.out.display());
    Ok(Outcome::Success)
}
