use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sciverify::data::{
    load_claims, load_claims_unchecked, load_corpus, load_predictions, read_jsonl, save_claims,
    save_predictions, validate_predictions, write_jsonl, ClaimId, DocId,
};
use sciverify::eval::{
    by_category, CategoryAnnotation, EvalReport, ReportFormat, ScoringOptions, Variant,
};
use sciverify::retrieval::{rerank, retrieve, Bm25Params, InvertedIndex, RankedList};
use sciverify::training::{audit_unseen, train, tune_lambda, FewShotSpec, StageConfig};
use sciverify::verifier::{Checkpoint, VerifierScorer};
use sciverify::weak::{
    ico_to_claims, load_prompts, mine_hard_negatives, title_to_claims, traces, GeneratedClaim,
    HardNegatives, DEFAULT_POOL_SIZE, DEFAULT_SAMPLE_SIZE,
};

use crate::manifest::{self, sibling, Recorder};
use crate::UsageError;

#[derive(Parser, Debug)]
#[command(
    name = "sciverify",
    version,
    about = "Scientific claim verification toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// BM25 index management.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Top-k abstracts per claim, optionally reranked by a verifier.
    Retrieve(RetrieveArgs),
    /// Generate weakly supervised claims.
    #[command(subcommand)]
    Weakgen(WeakgenCommand),
    /// Sample BM25 hard negatives for each claim.
    MineNegatives(MineArgs),
    /// Run one training stage from a config file.
    Train(TrainArgs),
    /// Label each (claim, candidate abstract) pair.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
    /// Render an evaluation report, optionally broken down by category.
    Report(ReportArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Subcommand, Debug)]
enum IndexCommand {
    Build(IndexBuildArgs),
}

#[derive(Args, Debug)]
struct IndexBuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    claims: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Verifier checkpoint used to rerank the head of each list.
    #[arg(long, requires = "corpus")]
    rerank_model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    rerank_depth: usize,
}

#[derive(Subcommand, Debug)]
enum WeakgenCommand {
    /// Claim pairs from intervention / comparator / outcome prompts.
    Ico(IcoArgs),
    /// Claims from claim-like abstract titles.
    Titles(TitlesArgs),
}

#[derive(Args, Debug)]
struct IcoArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    start_id: ClaimId,
}

#[derive(Args, Debug)]
struct TitlesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    start_id: ClaimId,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long)]
    claims: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pool: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Train on a uniform sample of this many claims per dataset.
    #[arg(long)]
    few_shot: Option<usize>,
    #[arg(long, requires = "few_shot")]
    few_shot_seed: Option<u64>,
    /// Comma-separated rationale weights to search on the dev set.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    claims: PathBuf,
    /// Candidates from `retrieve` output.
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    retrievals: Option<PathBuf>,
    /// Use each claim's cited abstracts as candidates.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// Refuse to run if the model's training history includes any of these files.
    #[arg(long, num_args = 1..)]
    held_out: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    max_rationale_sentences: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Tsv,
    MarkdownTable,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Tsv => ReportFormat::Tsv,
            FormatArg::MarkdownTable => ReportFormat::MarkdownTable,
        }
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    eval: PathBuf,
    /// Category annotations (JSONL) for a per-bucket breakdown.
    #[arg(long)]
    by_category: Option<PathBuf>,
    /// Variant scored per bucket.
    #[arg(long, default_value = "abstract_label_only", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, value_enum, default_value_t = FormatArg::MarkdownTable)]
    format: FormatArg,
    /// Row label in table formats.
    #[arg(long, default_value = "model")]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Fail unless the rerun reproduces every recorded output digest.
    #[arg(long)]
    check: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| {
        let names: Vec<String> = Variant::ALL
            .iter()
            .map(|v| {
                serde_json::to_value(v)
                    .unwrap()
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect();
        format!(
            "unknown variant {s:?}; expected one of {}",
            names.join(", ")
        )
    })
}

pub fn run(cli: Cli, argv: &[OsString]) -> Result<()> {
    match cli.command {
        Command::Index(IndexCommand::Build(a)) => index_build(a, argv),
        Command::Retrieve(a) => retrieve_cmd(a, argv),
        Command::Weakgen(WeakgenCommand::Ico(a)) => weakgen_ico(a, argv),
        Command::Weakgen(WeakgenCommand::Titles(a)) => weakgen_titles(a, argv),
        Command::MineNegatives(a) => mine(a, argv),
        Command::Train(a) => train_cmd(a, argv),
        Command::Predict(a) => predict(a, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::Report(a) => report(a),
        Command::Replay(a) => replay(a),
    }
}

fn index_build(a: IndexBuildArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("index build", argv);
    let corpus = load_corpus(&a.corpus)?;
    rec.input("corpus", &a.corpus);
    let index = InvertedIndex::build(&corpus, Bm25Params::new(a.k1, a.b)?)?;
    index.save(&a.out)?;
    rec.output("index", &a.out);
    rec.finish(&a.out)?;
    println!(
        "indexed {} documents into {}",
        index.num_docs(),
        a.out.display()
    );
    Ok(())
}

fn retrieve_cmd(a: RetrieveArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("retrieve", argv);
    let index = InvertedIndex::load(&a.index)?;
    rec.input("index", &a.index);
    let claims = load_claims_unchecked(&a.claims)?;
    rec.input("claims", &a.claims);
    let reranker = match &a.rerank_model {
        None => None,
        Some(path) => {
            let corpus_path = a.corpus.as_ref().expect("clap requires corpus");
            rec.input("rerank_model", path);
            rec.input("corpus", corpus_path);
            Some((Checkpoint::load(path)?, load_corpus(corpus_path)?))
        }
    };
    let mut lists = Vec::with_capacity(claims.len());
    for claim in &claims {
        let mut ranked = retrieve(&index, claim, a.k);
        if let Some((ckpt, corpus)) = &reranker {
            ranked = rerank(
                &ranked,
                claim,
                corpus,
                &VerifierScorer(&ckpt.verifier),
                a.rerank_depth,
            )?;
        }
        lists.push(ranked);
    }
    write_jsonl(&a.out, &lists)?;
    rec.output("retrievals", &a.out);
    rec.finish(&a.out)?;
    println!("retrieved top {} for {} claims", a.k, claims.len());
    Ok(())
}

fn write_generated(out: &Path, generated: &[GeneratedClaim], rec: &mut Recorder) -> Result<()> {
    let claims: Vec<_> = generated.iter().map(|g| g.claim.clone()).collect();
    save_claims(out, &claims)?;
    let trace_path = sibling(out, ".trace.jsonl");
    write_jsonl(&trace_path, traces(generated))?;
    rec.output("claims", out);
    rec.output("trace", &trace_path);
    println!("generated {} claims into {}", claims.len(), out.display());
    Ok(())
}

fn weakgen_ico(a: IcoArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("weakgen ico", argv);
    let corpus = load_corpus(&a.corpus)?;
    let prompts = load_prompts(&a.prompts, &corpus)?;
    rec.input("corpus", &a.corpus);
    rec.input("prompts", &a.prompts);
    let mut next_id = a.start_id;
    let generated: Vec<GeneratedClaim> = prompts
        .iter()
        .flat_map(|p| ico_to_claims(p, &mut next_id))
        .collect();
    write_generated(&a.out, &generated, &mut rec)?;
    rec.finish(&a.out)?;
    Ok(())
}

fn weakgen_titles(a: TitlesArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("weakgen titles", argv);
    let corpus = load_corpus(&a.corpus)?;
    rec.input("corpus", &a.corpus);
    let mut next_id = a.start_id;
    let generated: Vec<GeneratedClaim> = corpus
        .iter()
        .flat_map(|d| title_to_claims(d, &mut next_id))
        .collect();
    write_generated(&a.out, &generated, &mut rec)?;
    rec.finish(&a.out)?;
    Ok(())
}

fn mine(a: MineArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("mine-negatives", argv);
    let claims = load_claims_unchecked(&a.claims)?;
    let index = InvertedIndex::load(&a.index)?;
    rec.input("claims", &a.claims);
    rec.input("index", &a.index);
    rec.seed("seed", a.seed);
    let mut out = Vec::with_capacity(claims.len());
    for claim in &claims {
        out.push(HardNegatives {
            claim_id: claim.id,
            doc_ids: mine_hard_negatives(claim, &index, a.pool, a.sample, a.seed)?,
        });
    }
    write_jsonl(&a.out, &out)?;
    rec.output("negatives", &a.out);
    rec.finish(&a.out)?;
    println!("mined negatives for {} claims", out.len());
    Ok(())
}

fn train_cmd(a: TrainArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("train", argv);
    let mut cfg = StageConfig::load(&a.config)?;
    rec.input("config", &a.config);
    if let Some(out) = a.out {
        cfg.out = Some(out);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.epochs = epochs;
    }
    if let Some(n) = a.few_shot {
        cfg.few_shot = Some(FewShotSpec {
            n_examples: n,
            seed: a.few_shot_seed.unwrap_or(cfg.seed),
        });
    }
    let Some(out) = cfg.out.clone() else {
        return Err(
            UsageError("no checkpoint path: pass --out or set `out` in the config".into()).into(),
        );
    };
    rec.seed("seed", cfg.seed);
    if let Some(fs) = cfg.few_shot {
        rec.seed("few_shot_seed", fs.seed);
    }
    for d in &cfg.datasets {
        rec.input("claims", &d.claims);
        rec.input("corpus", &d.corpus);
        if let Some(n) = &d.negatives {
            rec.input("negatives", n);
        }
    }
    if let Some((c, p)) = &cfg.dev {
        rec.input("dev_claims", c);
        rec.input("dev_corpus", p);
    }
    if let Some(init) = &cfg.init {
        rec.input("init", init);
    }

    let outcome = match &a.lambda_grid {
        None => train(&cfg, None)?,
        Some(grid) => {
            let tuned = tune_lambda(grid, &cfg)?;
            cfg.lambda_rationale = tuned.best_lambda;
            let search = sibling(&out, ".lambda.json");
            let mut text = serde_json::to_string_pretty(&tuned.entries)?;
            text.push('\n');
            fs::write(&search, text).with_context(|| format!("writing {}", search.display()))?;
            rec.output("lambda_search", &search);
            println!("best lambda {}", tuned.best_lambda);
            // Rerun at the chosen weight so the log and config files match it.
            train(&cfg, None)?
        }
    };
    rec.output("checkpoint", &out);
    rec.output("log", &sibling(&out, ".log.jsonl"));
    rec.output("config", &sibling(&out, ".config"));
    rec.finish(&out)?;
    match (&outcome.dev_results, outcome.best_epoch) {
        (Some(results), Some(epoch)) => {
            println!("best dev epoch {epoch}");
            for r in results {
                println!("  {:<26} F1 {:.4}", r.variant.title(), r.f1);
            }
        }
        _ => println!("trained {} epochs", outcome.log.len()),
    }
    Ok(())
}

fn predict(a: PredictArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("predict", argv);
    let ckpt = Checkpoint::load(&a.model)?;
    rec.input("model", &a.model);
    let held: Vec<&Path> = a.held_out.iter().map(PathBuf::as_path).collect();
    audit_unseen(&ckpt.history, &held)?;
    let corpus = load_corpus(&a.corpus)?;
    let claims = load_claims(&a.claims, &corpus)?;
    rec.input("corpus", &a.corpus);
    rec.input("claims", &a.claims);
    let candidates: BTreeMap<ClaimId, Vec<DocId>> = match &a.retrievals {
        Some(path) => {
            rec.input("retrievals", path);
            read_jsonl::<RankedList>(path)?
                .into_iter()
                .map(|r| (r.claim_id, r.doc_ids))
                .collect()
        }
        None => claims
            .iter()
            .map(|c| (c.id, c.oracle_candidates()))
            .collect(),
    };
    let mut preds = Vec::new();
    for claim in &claims {
        let Some(docs) = candidates.get(&claim.id) else {
            bail!(sciverify::Error::Validation(format!(
                "no retrieval list for claim {}",
                claim.id
            )));
        };
        preds.extend(
            ckpt.verifier
                .predict_batch(claim, docs, &corpus, a.threshold)?,
        );
    }
    save_predictions(&a.out, &preds)?;
    rec.output("predictions", &a.out);
    rec.finish(&a.out)?;
    println!(
        "predicted {} pairs for {} claims",
        preds.len(),
        claims.len()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs, argv: &[OsString]) -> Result<()> {
    let mut rec = Recorder::new("evaluate", argv);
    let corpus = load_corpus(&a.corpus)?;
    let gold = load_claims(&a.gold, &corpus)?;
    let preds = load_predictions(&a.preds)?;
    rec.input("corpus", &a.corpus);
    rec.input("gold", &a.gold);
    rec.input("predictions", &a.preds);
    let violations = validate_predictions(&preds, &corpus, &gold);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        bail!(sciverify::Error::Validation(msgs.join("; ")));
    }
    let opts = ScoringOptions {
        max_rationale_sentences: a.max_rationale_sentences,
    };
    let report = EvalReport::build(&preds, &gold, opts);
    report.save(&a.out)?;
    rec.output("report", &a.out);
    rec.finish(&a.out)?;
    print!("{}", report.render(ReportFormat::Tsv, "model"));
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let eval = EvalReport::load(&a.eval)?;
    let format = ReportFormat::from(a.format);
    let text = match &a.by_category {
        None => eval.render(format, &a.name),
        Some(path) => {
            let annotations: Vec<CategoryAnnotation> = read_jsonl(path)?;
            let breakdown = by_category(
                &eval.predictions(),
                &eval.gold_claims(),
                &annotations,
                a.variant,
                &eval.options,
            )?;
            breakdown.render(format)
        }
    };
    match &a.out {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Mismatch<'a> {
    path: &'a str,
    recorded: &'a str,
    actual: String,
}

fn replay(a: ReplayArgs) -> Result<()> {
    let recorded = manifest::load(&a.manifest)?;
    let mut args = vec![OsString::from("sciverify")];
    args.extend(recorded.argv.iter().map(OsString::from));
    let cli = Cli::try_parse_from(&args)
        .map_err(|e| UsageError(format!("manifest argv no longer parses: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(UsageError("refusing to replay a replay".into()).into());
    }
    run(cli, &args[1..])?;
    if a.check {
        let mut mismatches = Vec::new();
        for out in &recorded.outputs {
            let actual = manifest::sha256_file(Path::new(&out.path))?;
            if actual != out.sha256 {
                mismatches.push(Mismatch {
                    path: &out.path,
                    recorded: &out.sha256,
                    actual,
                });
            }
        }
        if !mismatches.is_empty() {
            bail!(sciverify::Error::Validation(format!(
                "outputs differ from manifest: {}",
                serde_json::to_string(&mismatches)?
            )));
        }
        println!("replay reproduced {} outputs", recorded.outputs.len());
    }
    Ok(())
}
