use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use casepipe::pipeline::{self, BackendKind, PathsEnabled, RunConfig};
use casepipe::schema::{default_schema, validate, SchemaDefinition, SourceFamily};
use casepipe::synth::{synthesize, write_corpus, SynthesisSpec};
use casepipe::text::EngineSpec;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "casepipe", version, about = "Missing-person case documents to schema-valid records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a directory of documents on the rule and/or LLM path.
    Run(RunArgs),
    /// Score emitted records against a gold file.
    Evaluate(RunArgs),
    /// Generate a labelled synthetic corpus.
    Synth(SynthArgs),
    /// Print the schema in its text form.
    Schema {
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Validate every record in a JSONL file; exits 1 on any violation.
    Validate {
        file: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PathsArg {
    Rule,
    Llm,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Wire,
    Oracle,
    DropoutOracle,
    InvalidThenFix,
    NeverFix,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    paths: Option<PathsArg>,
    #[arg(long, value_enum, env = "CASEPIPE_BACKEND")]
    backend: Option<BackendArg>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    signatures: Option<PathBuf>,
    #[arg(long)]
    rules_dir: Option<PathBuf>,
    #[arg(long)]
    mappings_dir: Option<PathBuf>,
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    geocode_cache: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dropout_p: Option<f64>,
    #[arg(long)]
    invalid_rate: Option<f64>,
    #[arg(long)]
    budget_chars: Option<usize>,
    #[arg(long)]
    max_repair_attempts: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    backend_timeout: Option<f64>,
    /// PDF engine, repeatable, tried in order: `ENGINE=COMMAND` with
    /// ENGINE one of layout, basic, ocr.
    #[arg(long = "pdf-engine")]
    pdf_engines: Vec<String>,
    #[arg(long)]
    min_chars: Option<usize>,
    #[arg(long)]
    min_alnum: Option<f64>,
    #[arg(long)]
    ingest_ts: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    output: PathBuf,
    /// JSON synthesis spec; other flags are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    per_family: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Per-family dropout, repeatable: `FAMILY=RATE`.
    #[arg(long = "family-dropout")]
    family_dropout: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    cue_rate: f64,
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE, got {s:?}"))
}

fn build_config(a: &RunArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            let (Some(i), Some(o)) = (&a.input, &a.output) else {
                bail!("--input and --output are required without --config");
            };
            RunConfig::new(i, o)
        }
    };
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                c.$field = v;
            }
        };
    }
    set!(input_dir, a.input.clone());
    set!(output_dir, a.output.clone());
    set!(
        paths_enabled,
        a.paths.map(|p| match p {
            PathsArg::Rule => PathsEnabled::Rule,
            PathsArg::Llm => PathsEnabled::Llm,
            PathsArg::Both => PathsEnabled::Both,
        })
    );
    set!(
        backend,
        a.backend.map(|b| match b {
            BackendArg::Wire => BackendKind::Wire,
            BackendArg::Oracle => BackendKind::Oracle,
            BackendArg::DropoutOracle => BackendKind::DropoutOracle,
            BackendArg::InvalidThenFix => BackendKind::InvalidThenFix,
            BackendArg::NeverFix => BackendKind::NeverFix,
        })
    );
    for (slot, v) in [
        (&mut c.schema_path, &a.schema),
        (&mut c.signatures_path, &a.signatures),
        (&mut c.rulesets_dir, &a.rules_dir),
        (&mut c.mappings_dir, &a.mappings_dir),
        (&mut c.gazetteer_path, &a.gazetteer),
        (&mut c.regions_path, &a.regions),
        (&mut c.cache_path, &a.geocode_cache),
        (&mut c.gold_path, &a.gold),
    ] {
        if v.is_some() {
            *slot = v.clone();
        }
    }
    if a.seed.is_some() {
        c.seed = a.seed;
    }
    if a.ingest_ts.is_some() {
        c.ingest_ts = a.ingest_ts.clone();
    }
    set!(dropout_p, a.dropout_p);
    set!(invalid_rate, a.invalid_rate);
    set!(budget_chars, a.budget_chars);
    set!(max_repair_attempts, a.max_repair_attempts);
    set!(max_in_flight, a.max_in_flight);
    set!(workers, a.workers);
    set!(backend_timeout_s, a.backend_timeout);
    set!(min_chars, a.min_chars);
    set!(min_alnum, a.min_alnum);
    if !a.pdf_engines.is_empty() {
        c.pdf_chain = a
            .pdf_engines
            .iter()
            .map(|s| {
                let (engine, cmd) = split_pair(s)?;
                let engine = serde_json::from_value(engine.into()).map_err(|_| anyhow!("unknown engine {engine:?}"))?;
                Ok(EngineSpec::command(engine, cmd, c.backend_timeout_s))
            })
            .collect::<Result<_>>()?;
    }
    for (name, rate) in [("dropout-p", c.dropout_p), ("invalid-rate", c.invalid_rate), ("min-alnum", c.min_alnum)] {
        if !(0.0..=1.0).contains(&rate) {
            bail!("--{name} must lie in [0, 1], got {rate}");
        }
    }
    if c.workers == 0 || c.max_in_flight == 0 {
        bail!("--workers and --max-in-flight must be at least 1");
    }
    Ok(c)
}

fn load_schema(path: &Option<PathBuf>) -> Result<SchemaDefinition> {
    match path {
        Some(p) => SchemaDefinition::load(p).map_err(|e| anyhow!("{}: {e}", p.display())),
        None => Ok(default_schema()),
    }
}

fn synth_spec(a: &SynthArgs) -> Result<SynthesisSpec> {
    let spec = match &a.spec {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => {
            let mut s = SynthesisSpec::uniform(a.seed, a.per_family);
            s.label_dropout_rate = a.dropout;
            s.narrative_cue_rate = a.cue_rate;
            for pair in &a.family_dropout {
                let (family, rate) = split_pair(pair)?;
                let family = SourceFamily::parse(family).ok_or_else(|| anyhow!("unknown family {family:?}"))?;
                s.dropout_by_family.insert(family, rate.parse().context("family dropout rate")?);
            }
            s
        }
    };
    spec.check().map_err(|e| anyhow!(e))?;
    Ok(spec)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(a) => {
            let config = build_config(&a)?;
            let summary = pipeline::run(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate(a) => {
            let config = build_config(&a)?;
            let schema = load_schema(&config.schema_path)?;
            let reports = pipeline::evaluate(&config, &schema)?;
            print!("{}", casepipe::eval::comparison_table(&reports));
        }
        Command::Synth(a) => {
            let spec = synth_spec(&a)?;
            let cases = synthesize(&spec);
            write_corpus(&a.output, &cases, &spec).with_context(|| format!("writing {}", a.output.display()))?;
            println!("{} documents written to {}", cases.len(), a.output.display());
        }
        Command::Schema { schema } => print!("{}", load_schema(&schema)?.to_text()),
        Command::Validate { file, schema } => {
            let schema = load_schema(&schema)?;
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let mut bad = 0;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let value: serde_json::Value =
                    serde_json::from_str(line).with_context(|| format!("{}:{}", file.display(), n + 1))?;
                for m in validate(&value, &schema).messages() {
                    println!("line {}: {m}", n + 1);
                    bad += 1;
                }
            }
            if bad > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
