use std::fs::File;
use std::io::BufWriter;

use anyhow::{Context, Result};
use space_core::layout::{build_layout, literal_mask_differences, render_layout};
use space_core::sarsft::{apply_sar_masking, sample_rng, synth_corpus, write_corpus, CorpusKind, TokenSpace};
use space_core::TokenId;

use crate::args::{KindArg, LayoutArgs, PrepArgs, PreviewArgs};
use crate::config::RunConfig;
use crate::train::load_corpus;
use crate::Outcome;

pub fn prep(args: PrepArgs) -> Result<Outcome> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let space = TokenSpace {
        vocab_size: args.vocab.unwrap_or(cfg.model.vocab_size),
        eos: cfg.model.eos_token_id,
        mask: cfg.model.mask_token_id,
    };
    let kind = match args.kind {
        KindArg::RepeatPattern => CorpusKind::RepeatPattern {
            period: args.period,
            patterns: args.patterns,
            answer_len: args.answer_len,
        },
        KindArg::Counting => CorpusKind::Counting {
            prompt_len: args.prompt_len,
            answer_len: args.answer_len,
        },
        KindArg::TemplatedPhrases => CorpusKind::TemplatedPhrases {
            templates: args.templates,
        },
    };
    let corpus = synth_corpus(&kind, args.size, args.seed, space)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_corpus(&corpus, BufWriter::new(f))?;
    println!("wrote {} samples to {}", corpus.len(), args.out.display());
    Ok(Outcome::Success)
}

fn cell(t: TokenId, mask: TokenId) -> String {
    if t == mask {
        "M".into()
    } else {
        t.to_string()
    }
}

pub fn preview(args: PreviewArgs) -> Result<Outcome> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let k = args.k.unwrap_or(cfg.sarsft.k);
    let p_ar = args.p_ar.unwrap_or(cfg.sarsft.p_ar);
    let mask = cfg.model.mask_token_id;
    let corpus = load_corpus(&args.corpus, &cfg.model)?;
    println!("k={k} p_ar={p_ar} seed={}; M = mask, [t] = supervised target, . = unsupervised", args.seed);
    for (i, sample) in corpus.iter().take(args.n).enumerate() {
        let mut rng = sample_rng(args.seed, 0, i);
        let m = apply_sar_masking(sample, k, p_ar, mask, &mut rng);
        match m.masked_at {
            Some(at) => println!("sample {i}: masked at m={at}"),
            None => println!("sample {i}: autoregressive"),
        }
        let width = m
            .tokens
            .iter()
            .chain(&m.targets)
            .map(|&t| cell(t, mask).len() + 2)
            .max()
            .unwrap_or(3);
        let input: String = m.tokens.iter().map(|&t| format!("{:>width$}", cell(t, mask))).collect();
        let targets: String = (0..m.tokens.len())
            .map(|j| {
                let s = if m.loss_mask[j] {
                    format!("[{}]", m.targets[j])
                } else {
                    ".".into()
                };
                format!("{s:>width$}")
            })
            .collect();
        println!("  input  {input}");
        println!("  target {targets}");
    }
    Ok(Outcome::Success)
}

pub fn layout(args: LayoutArgs) -> Result<Outcome> {
    const MASK: TokenId = 1;
    let prompt: Vec<TokenId> = (0..args.prompt_len as TokenId).map(|i| 2 + i).collect();
    let candidates: Vec<TokenId> = vec![2; args.k];
    let layout = build_layout(&prompt, &candidates, args.k, MASK)?;
    println!("l={} k={} |I|={}", args.prompt_len, args.k, layout.len());
    print!("{}", render_layout(&layout));
    if args.literal {
        let diffs = literal_mask_differences(&layout, MASK);
        println!("position-distance reading differs at {} cells", diffs.len());
        for (i, j) in diffs {
            println!("  row {i} col {j}");
        }
    }
    Ok(Outcome::Success)
}
