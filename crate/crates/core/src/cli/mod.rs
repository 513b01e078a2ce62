//! The `slotcast` command line: generate, ingest, train, predict and eval.
//!
//! Every setting is a `key=value` pair. Values come from built-in defaults,
//! then `--config FILE`, then flags (`--some-key` sets `some_key`). Each run
//! writes the resolved settings next to its outputs; passing that snapshot
//! back with `--config` repeats the run exactly.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_eval, cmd_generate, cmd_ingest, cmd_predict, cmd_train, load_tokens};
pub use config::{parse_config_text, RunConfig};

macro_rules! command_args {
    ($name:ident, $cmd:literal, { $($field:ident = $default:literal : $help:literal),* $(,)? }) => {
        #[derive(Debug, clap::Args)]
        pub struct $name {
            /// key=value settings file; flags take precedence.
            #[arg(long)]
            pub config: Option<PathBuf>,
            $(
                #[arg(long, value_name = "VALUE", help = concat!($help, " [default: ", $default, "]"))]
                pub $field: Option<String>,
            )*
        }

        impl $name {
            pub const DEFAULTS: &'static [(&'static str, &'static str)] =
                &[$((stringify!($field), $default)),*];

            pub fn resolve(&self) -> anyhow::Result<RunConfig> {
                let flags = [$((stringify!($field), self.$field.as_deref())),*];
                RunConfig::resolve($cmd, Self::DEFAULTS, self.config.as_deref(), &flags)
            }
        }
    };
}

command_args!(GenerateArgs, "generate", {
    ues = "2": "number of UEs",
    traffic = "dl": "traffic per UE (dl, ul, bi), comma-separated; one entry applies to all",
    slots = "12000": "number of slots to simulate",
    seed = "0": "random seed",
    bandwidth = "106": "carrier width in PRBs",
    prach_period = "0": "slots between PRACH occasions; 0 disables",
    harq_delay = "4": "slots from PDSCH to HARQ feedback",
    ul_delay = "4": "slots from uplink grant to PUSCH",
    dl_rate = "0.3": "per-slot downlink arrival probability",
    ul_rate = "0.45": "per-slot uplink arrival probability",
    max_dl = "2": "downlink allocations per slot",
    max_ul = "2": "uplink grants per slot",
    out = "": "output corpus path",
});

command_args!(IngestArgs, "ingest", {
    input = "": "physical-layer log to read",
    out = "": "output corpus path",
});

command_args!(TrainArgs, "train", {
    corpus = "": "corpus to train on",
    out = "": "output checkpoint path",
    loss_csv = "": "loss history CSV [default: <out>.loss.csv]",
    context = "1024": "context length in tokens",
    embed = "8": "embedding width",
    layers = "3": "decoder layers",
    heads = "8": "attention heads",
    ff = "32": "feed-forward width",
    dropout = "0": "residual dropout probability",
    tie_embeddings = "true": "share input and output embeddings",
    init_seed = "0": "parameter initialisation seed",
    steps = "2000": "optimizer steps",
    batch = "4": "windows per step",
    lr = "0.001": "peak learning rate",
    warmup = "100": "linear warmup steps",
    min_lr_ratio = "0.1": "final learning rate as a fraction of the peak",
    beta1 = "0.9": "Adam beta1",
    beta2 = "0.99": "Adam beta2",
    weight_decay = "0": "decoupled weight decay",
    grad_clip = "1": "global gradient-norm clip (0 disables)",
    seed = "0": "window sampling and dropout seed",
    train_fraction = "0.8": "leading fraction of the corpus used for training",
    eval_interval = "100": "steps between validation passes",
    val_windows = "8": "validation windows per pass",
});

command_args!(PredictArgs, "predict", {
    checkpoint = "": "model checkpoint",
    corpus = "": "corpus holding the context",
    slot = "": "index of the slot to predict; the ten slots before it are the input",
    checker = "on": "grammar-constrained decoding (on or off)",
    temperature = "1": "sampling temperature",
    mode = "multinomial": "multinomial or greedy",
    seed = "0": "sampling seed",
    max_tokens = "256": "give up on a slot after this many tokens",
    probs = "": "per-step probability CSV path",
});

command_args!(EvalArgs, "eval", {
    checkpoint = "": "model checkpoint",
    corpus = "": "corpus to evaluate on",
    samples = "500": "number of sampled windows",
    checker = "both": "on, off or both (paired)",
    temperature = "1": "sampling temperature",
    mode = "multinomial": "multinomial or greedy",
    seed = "0": "window and sampling seed",
    max_tokens = "256": "give up on a slot after this many tokens",
    train_fraction = "0.8": "evaluation uses the corpus after this fraction",
    out_dir = "": "directory for reports",
});

#[derive(Debug, Parser)]
#[command(
    name = "slotcast",
    version,
    about = "Predict 5G NR physical-layer slots with a tiny Transformer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

// parsed once per process, so variant size is irrelevant
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a multi-UE scheduler and write a corpus.
    Generate(GenerateArgs),
    /// Convert a physical-layer log into a corpus.
    Ingest(IngestArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Predict one slot from the ten before it.
    Predict(PredictArgs),
    /// Score sampled predictions against a corpus.
    Eval(EvalArgs),
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(&a.resolve()?),
        Command::Ingest(a) => cmd_ingest(&a.resolve()?),
        Command::Train(a) => cmd_train(&a.resolve()?),
        Command::Predict(a) => cmd_predict(&a.resolve()?),
        Command::Eval(a) => cmd_eval(&a.resolve()?),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 on any error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
