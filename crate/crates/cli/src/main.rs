//! `wander`: batch pipeline over an events-v1 log. Every subcommand reads
//! the artifacts of earlier stages from the workspace and writes its own
//! stage directory.

mod io;
mod stages;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wander_core::par;

use workspace::Workspace;

#[derive(Parser, Debug)]
#[command(name = "wander", version, about = "Multi-community user trajectory analysis")]
struct Cli {
    /// Directory holding one subdirectory per stage.
    #[arg(long, global = true, default_value = "wander-ws")]
    workspace: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rerun even when the stage manifest is current.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate an event log into the workspace.
    Ingest(IngestArgs),
    /// Windowed metric series for every user with a full prefix.
    Metrics(MetricsArgs),
    /// Departing/staying labels and activity quartiles.
    Labels(LabelsArgs),
    /// Feature matrices for the prediction tasks.
    Features(FeaturesArgs),
    /// Repeated-trial departure and activity prediction.
    Predict(PredictArgs),
    /// Community-identification (style) experiment.
    Style(StyleArgs),
    /// First-post feedback in single- vs multi-post communities.
    Singlemulti(SingleMultiArgs),
    /// Generate a synthetic population with known archetypes.
    Synth(SynthArgs),
    /// Population curves per group, as CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Line-delimited event log.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = wander_core::ingest::EVENTS_V1)]
    pub format: String,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Drop events at or after this instant (epoch seconds or ISO-8601).
    #[arg(long)]
    pub cutoff: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct WindowArgs {
    /// Posts per window.
    #[arg(long, default_value_t = 10)]
    pub window_size: usize,
    /// Posts in the fixed-prefix view.
    #[arg(long, default_value_t = 50)]
    pub prefix_len: usize,
    /// Comma-separated vocabularies: pos, topK, full, fullN.
    #[arg(long, value_delimiter = ',', default_value = "pos,top100,top500,top1000,top5000,top10000,full")]
    pub vocab: Vec<String>,
    /// Comma-separated first-person pronoun lexicon.
    #[arg(long, value_delimiter = ',', default_value = "i,me,my,mine,myself")]
    pub pronouns: Vec<String>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Stages in the full-life view.
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    /// Communities with fewer posts get no dissimilarity.
    #[arg(long, default_value_t = 1000)]
    pub dissim_min_posts: u64,
    /// Also dump the (unsmoothed) model of COMMUNITY@YYYY-MM for every
    /// vocabulary. Repeatable.
    #[arg(long)]
    pub dump_model: Vec<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    /// Every user with a full prefix before SOF.
    All,
    /// Only departing and staying users.
    Labeled,
}

#[derive(Args, Debug)]
pub struct LabelsArgs {
    /// Start of the future window (epoch seconds or ISO-8601).
    #[arg(long, default_value = "2013-07-01")]
    pub sof: String,
    /// Length of each half of the horizon in days; calendar quarters when
    /// omitted.
    #[arg(long)]
    pub half_days: Option<i64>,
    #[arg(long, default_value_t = 50)]
    pub prefix_len: usize,
    #[arg(long, value_enum, default_value = "all")]
    pub quartile_scope: ScopeArg,
    /// Fail if the data does not reach the end of the horizon.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub window: WindowArgs,
    /// Skip the argmax/argmin window-index features.
    #[arg(long)]
    pub no_argextrema: bool,
    /// Protocol config (key = value); its xs and sweep sets decide which
    /// prefix ranges get matrices.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Protocol config (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Permute training labels (null control).
    #[arg(long)]
    pub shuffle_labels: bool,
}

#[derive(Args, Debug)]
pub struct StyleArgs {
    #[arg(long, value_delimiter = ',', default_value = "pos,top100,top500")]
    pub vocab: Vec<String>,
    /// Posts per community for a user to count as active there.
    #[arg(long, default_value_t = 25)]
    pub min_posts: usize,
    /// Keep at most this many community pairs per user.
    #[arg(long)]
    pub cap_per_user: Option<usize>,
    /// Leave the user's own posts out of the community models.
    #[arg(long)]
    pub exclude_own: bool,
    /// Null control: both sides drawn from the same community.
    #[arg(long)]
    pub same_community: bool,
    #[arg(long, default_value_t = 5)]
    pub style_window: usize,
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 500)]
    pub dev: usize,
    #[arg(long, default_value_t = 500)]
    pub test: usize,
    #[arg(long, default_value_t = 10)]
    pub splits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SingleMultiArgs {}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON population spec; missing fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Status,
    Quartile,
    Archetype,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Groupings to render; by default every one whose inputs exist.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub group_by: Vec<GroupBy>,
    /// Truth CSV with `user` and `archetype` columns (defaults to the
    /// workspace's synth output).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ws = Workspace::new(cli.workspace.clone(), cli.force);
    let threads = cli.threads.unwrap_or(0);
    let result = par::with_threads(threads, || match &cli.command {
        Command::Ingest(a) => stages::ingest(&ws, a),
        Command::Metrics(a) => stages::metrics(&ws, a),
        Command::Labels(a) => stages::labels(&ws, a),
        Command::Features(a) => stages::features(&ws, a),
        Command::Predict(a) => stages::predict(&ws, a),
        Command::Style(a) => stages::style(&ws, a),
        Command::Singlemulti(a) => stages::singlemulti(&ws, a),
        Command::Synth(a) => stages::synth(&ws, a),
        Command::Report(a) => stages::report(&ws, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
