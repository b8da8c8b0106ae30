use std::fs::File;
use std::io::BufWriter;

use anyhow::{Context, Result};
use space_core::oracle::{enumeration_size, equivalence_report, EquivalenceOptions, ENUMERATION_LIMIT};
use space_core::{init_model, ModelConfig};

use crate::args::{OracleArgs, VerificationArg};
use crate::train::load_model;
use crate::Outcome;

pub fn run(args: OracleArgs) -> Result<Outcome> {
    let params = match &args.model {
        Some(path) => load_model(path)?,
        None => init_model(&ModelConfig {
            vocab_size: args.vocab,
            d_model: args.d_model,
            n_layers: args.layers,
            n_heads: args.heads,
            d_ff: args.d_ff,
            init_std: args.init_std,
            mask_init_std: args.init_std,
            seed: args.model_seed,
            ..Default::default()
        })?,
    };
    let estimate = enumeration_size(params.config.vocab_size, args.horizon);
    if estimate > ENUMERATION_LIMIT {
        anyhow::bail!(
            "refusing exact enumeration: vocab {}^horizon {} = {estimate:.3e} sequences exceeds the limit of {ENUMERATION_LIMIT:.0e}",
            params.config.vocab_size,
            args.horizon
        );
    }
    let diagnostic = match args.verification {
        VerificationArg::LosslessResidual => false,
        VerificationArg::PaperLiteral => true,
        VerificationArg::GreedyMatch => {
            anyhow::bail!("oracle-check samples at temperature 1; greedy-match does not apply")
        }
    };
    let opts = EquivalenceOptions {
        horizon: args.horizon,
        k: args.k,
        n_samples: args.samples,
        seed: args.seed,
        include_paper_literal: diagnostic || !args.no_literal,
    };
    let (report, data) = equivalence_report(&params, &args.prompt_tokens, &opts)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = &args.out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &report)?;
    }
    if let Some(path) = &args.csv {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        data.write_csv(BufWriter::new(f))?;
    }
    if diagnostic {
        println!(
            "diagnostic: paper-literal TV {:.6} vs control {:.6}",
            report.tv_paper_literal.unwrap_or(f64::NAN),
            report.tv_control
        );
        return Ok(Outcome::Success);
    }
    println!(
        "{}: TV space {:.6}, TV control {:.6}",
        if report.pass { "PASS" } else { "FAIL" },
        report.tv_space,
        report.tv_control
    );
    Ok(if report.pass {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}
