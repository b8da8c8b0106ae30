use std::fs::File;
use std::io::BufWriter;

use anyhow::{bail, Context, Result};
use space_core::{ar_generate, space_generate, TokenId};

use crate::args::{GenerateArgs, Mode};
use crate::config::RunConfig;
use crate::train::load_model;
use crate::Outcome;

fn join(tokens: &[TokenId]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run(args: GenerateArgs) -> Result<Outcome> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let model_path = args
        .model
        .or_else(|| cfg.paths.checkpoint.clone())
        .context("no model: pass --model or set paths.checkpoint")?;
    let params = load_model(&model_path)?;
    let decode = args.decode.apply(&cfg.decode);
    let prompt = args.prompt_tokens;
    if prompt.is_empty() {
        bail!("--prompt-tokens is empty");
    }
    if prompt.contains(&params.config.mask_token_id) {
        bail!(
            "prompt contains the mask token id {}, which is reserved for decoding",
            params.config.mask_token_id
        );
    }
    if let Some(t) = prompt.iter().find(|&&t| t as usize >= params.config.vocab_size) {
        bail!("prompt token {t} outside vocabulary of {}", params.config.vocab_size);
    }
    match args.mode {
        Mode::Ar => {
            decode.sampling.validate()?;
            let (tokens, invocations) = ar_generate(&params, &prompt, &decode)?;
            println!("tokens: {}", join(&tokens));
            println!("invocations: {invocations}");
        }
        Mode::Space => {
            let (tokens, trace) = space_generate(&params, &prompt, &decode)?;
            println!("tokens: {}", join(&tokens));
            println!("invocations: {}", trace.invocations);
            println!("tokens generated: {}", trace.tokens_generated);
            println!("avg accepted tokens: {:.6}", trace.avg_accepted_tokens());
            if let Some(path) = args.trace_out {
                let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                trace.write_jsonl(BufWriter::new(f))?;
            }
        }
    }
    Ok(Outcome::Success)
}
