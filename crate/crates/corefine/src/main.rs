//! Thin command-line front end; all behavior lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corefine::cli::{
    cmd_convert, cmd_gen, cmd_predict, cmd_score, cmd_train, exit_code, RunConfig, SplitKind,
    Strategy,
};
use corefine::Scalar;

#[derive(Parser)]
#[command(name = "corefine", version, about = "Graph-based coreference resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic gold-annotated corpus
    Gen(GenArgs),
    /// Train a model (and, for the reduced strategy, its mention detector)
    Train(TrainArgs),
    /// Predict coreference for documents and write CoNLL output
    Predict(PredictArgs),
    /// Score a response against a key (MUC, B3, CEAF, average F1)
    Score(ScoreArgs),
    /// Convert between CoNLL, JSON-lines and graph dump formats
    Convert(ConvertArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file; command-line flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn base(&self, command: &str) -> Result<RunConfig, corefine::Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load_file(path)?,
            None => RunConfig::default(),
        };
        config.command = command.to_string();
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(output) = &self.output {
            config.output = Some(output.clone());
        }
        Ok(config)
    }
}

/// Inclusive `LO,HI` range.
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI but got `{s}`"))?;
    let lo = lo.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    Ok((lo, hi))
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long, value_parser = parse_range, value_name = "LO,HI")]
    doc_len: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_range, value_name = "LO,HI")]
    entities: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_range, value_name = "LO,HI")]
    mentions_per_entity: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_range, value_name = "LO,HI")]
    mention_len: Option<(usize, usize)>,
    #[arg(long)]
    nesting_prob: Option<f64>,
    /// Interleave entity mentions instead of grouping them
    #[arg(long)]
    scattered: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_positions: Option<usize>,
}

#[derive(Args)]
struct RefineArgs {
    /// Length strategy: full|truncated|overlap|reduced
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Window size K for the truncated/overlap/reduced strategies
    #[arg(long)]
    window: Option<usize>,
    /// Refinement iteration bound T
    #[arg(long)]
    iters: Option<usize>,
    /// Mention probability threshold
    #[arg(long)]
    tau: Option<Scalar>,
    #[arg(long)]
    max_span_len: Option<usize>,
    #[arg(long)]
    top_lambda: Option<Scalar>,
    #[arg(long)]
    recall_margin: Option<Scalar>,
    /// Sub-token splitter: none|chunk6
    #[arg(long)]
    split: Option<SplitKind>,
}

impl RefineArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = self.strategy {
            config.strategy = v;
        }
        if let Some(v) = self.window {
            config.window = v;
        }
        if let Some(v) = self.iters {
            config.iters = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.max_span_len {
            config.max_span_len = v;
        }
        if let Some(v) = self.top_lambda {
            config.top_lambda = Some(v);
        }
        if let Some(v) = self.recall_margin {
            config.recall_margin = v;
        }
        if let Some(v) = self.split {
            config.split = v;
        }
    }
}

impl ModelArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = self.layers {
            config.layers = v;
        }
        if let Some(v) = self.heads {
            config.heads = v;
        }
        if let Some(v) = self.d_model {
            config.d_model = v;
        }
        if let Some(v) = self.d_ff {
            config.d_ff = v;
        }
        if let Some(v) = self.max_positions {
            config.max_positions = v;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus file (.jsonl or .conll)
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    refine: RefineArgs,
    #[arg(long)]
    steps: Option<usize>,
    /// Steps for the mention detector of the reduced strategy
    #[arg(long)]
    detector_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<Scalar>,
    /// Optimizer: momentum|adam
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    teacher_forcing: Option<Scalar>,
    /// Write an intermediate checkpoint every this many steps
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue training from an existing checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    refine: RefineArgs,
    /// Parallel workers over documents
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long)]
    response: Option<PathBuf>,
    /// Second system for paired bootstrap comparison
    #[arg(long)]
    response_b: Option<PathBuf>,
    /// Bootstrap resampling iterations
    #[arg(long)]
    bootstrap: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path; the extension picks the format
    /// (.conll|.jsonl|.graph|.matrix)
    #[arg(long = "to")]
    to: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), corefine::Error> {
    match cli.command {
        Command::Gen(args) => {
            let mut config = args.common.base("gen")?;
            if let Some(v) = args.n_docs {
                config.n_docs = v;
            }
            if let Some(v) = args.vocab_size {
                config.vocab_size = v;
            }
            if let Some(v) = args.doc_len {
                config.doc_len = v;
            }
            if let Some(v) = args.entities {
                config.n_entities = v;
            }
            if let Some(v) = args.mentions_per_entity {
                config.mentions_per_entity = v;
            }
            if let Some(v) = args.mention_len {
                config.mention_len = v;
            }
            if let Some(v) = args.nesting_prob {
                config.nesting_prob = v;
            }
            if args.scattered {
                config.scattered = true;
            }
            cmd_gen(&config)
        }
        Command::Train(args) => {
            let mut config = args.common.base("train")?;
            if let Some(v) = &args.input {
                config.input = Some(v.clone());
            }
            args.model.apply(&mut config);
            args.refine.apply(&mut config);
            if let Some(v) = args.steps {
                config.steps = v;
            }
            if args.detector_steps.is_some() {
                config.detector_steps = args.detector_steps;
            }
            if let Some(v) = args.learning_rate {
                config.learning_rate = v;
            }
            if let Some(v) = &args.optimizer {
                config.optimizer = v.clone();
            }
            if let Some(v) = args.teacher_forcing {
                config.teacher_forcing = v;
            }
            if args.checkpoint_every.is_some() {
                config.checkpoint_every = args.checkpoint_every;
            }
            if let Some(v) = &args.resume {
                config.resume = Some(v.clone());
            }
            cmd_train(&config)
        }
        Command::Predict(args) => {
            let mut config = args.common.base("predict")?;
            if let Some(v) = &args.input {
                config.input = Some(v.clone());
            }
            if let Some(v) = &args.checkpoint {
                config.checkpoint = Some(v.clone());
            }
            let explicit = args.refine.strategy.is_some();
            args.refine.apply(&mut config);
            if let Some(v) = args.jobs {
                config.jobs = v;
            }
            cmd_predict(&config, explicit)
        }
        Command::Score(args) => {
            let mut config = args.common.base("score")?;
            if let Some(v) = &args.key {
                config.key = Some(v.clone());
            }
            if let Some(v) = &args.response {
                config.response = Some(v.clone());
            }
            if let Some(v) = &args.response_b {
                config.response_b = Some(v.clone());
            }
            if args.bootstrap.is_some() {
                config.bootstrap = args.bootstrap;
            }
            cmd_score(&config)
        }
        Command::Convert(args) => {
            let mut config = args.common.base("convert")?;
            if let Some(v) = &args.input {
                config.input = Some(v.clone());
            }
            if let Some(v) = &args.to {
                config.output = Some(v.clone());
            }
            cmd_convert(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep clap's rendering but pin usage problems to exit code 1
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
