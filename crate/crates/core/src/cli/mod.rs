//! The `ferret` command line.
//!
//! Exit codes: 0 success, 2 invalid input (the message names the first bad
//! record), 64 usage error, 74 I/O error.

mod commands;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser)]
#[command(
    name = "ferret",
    version,
    about = "Region encoding, spatial sampling, grounded evaluation and instruction-data compilation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinate bins per axis.
    #[arg(long, default_value_t = crate::quantizer::DEFAULT_N_BINS)]
    pub n_bins: u32,
    /// Add SHA-256 hashes of all inputs to the report.
    #[arg(long)]
    pub manifest: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predictions, JSON lines.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth joined by id; defaults to the `gt` field of each prediction.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoordArg {
    Bins,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FmapPattern {
    Random,
    Constant,
    RampX,
    RampY,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize a region and print its mask, bins and optional encoding.
    Rasterize {
        /// Region JSON (point, box, polygon, scribble or mask).
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        /// Also render `name [bins] <SPE>`.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the spatial sampler on a mask and feature map.
    Sample {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        fmap: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Referring expression comprehension accuracy.
    EvalRec(EvalArgs),
    /// Phrase grounding accuracy.
    EvalGround(EvalArgs),
    /// Grounded captioning F1.
    EvalGroundcap {
        #[command(flatten)]
        eval: EvalArgs,
        /// Per-record caption text and counts, JSON lines.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Referring object classification accuracy.
    EvalRefer(EvalArgs),
    /// Yes/no hallucination metrics.
    EvalPope(EvalArgs),
    /// Score ratio of predicted answers against judge answers.
    BenchRatio(EvalArgs),
    /// Convert scene records into instruction samples.
    GritCompile {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated task names; all tasks by default.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long, value_enum, default_value_t = CoordArg::Bins)]
        coords: CoordArg,
        /// Leave out the region-feature placeholder after prompt locations.
        #[arg(long)]
        no_spe: bool,
        /// Image ids to drop, one per line.
        #[arg(long)]
        exclude_ids: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mine hallucination negatives, add positives and balance polarities.
    GritNegatives {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Class vocabulary, one per line.
        #[arg(long)]
        vocab: PathBuf,
        /// Also mine misleading entities through the LLM client.
        #[arg(long)]
        semantic: bool,
        /// Keep every sample instead of equalizing polarities.
        #[arg(long)]
        no_balance: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write test fixtures.
    GenFixtures {
        #[arg(long)]
        out_dir: PathBuf,
        /// Tiny sampler fixture: C=3, N=16, r=2, k=3, two blocks, D=5.
        #[arg(long)]
        tiny: bool,
        /// Feature map pattern to write as `pattern.fmap`.
        #[arg(long, value_enum)]
        fmap: Option<FmapPattern>,
        #[arg(long, default_value_t = 8)]
        fmap_height: usize,
        #[arg(long, default_value_t = 8)]
        fmap_width: usize,
        #[arg(long, default_value_t = 3)]
        fmap_channels: usize,
        /// Example scene record as `scene.jsonl`.
        #[arg(long)]
        scene: bool,
        #[command(flatten)]
        common: Common,
    },
}

pub(crate) struct Manifest {
    enabled: bool,
    inputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            inputs: BTreeMap::new(),
        }
    }

    /// Reads a whole input file, recording its hash.
    pub(crate) fn read(&mut self, path: &Path) -> Result<Vec<u8>, Error> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        if self.enabled {
            self.inputs
                .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        }
        Ok(bytes)
    }

    fn attach(self, report: &mut Value) {
        if self.enabled {
            if let Value::Object(m) = report {
                m.insert("manifest".into(), json!({ "inputs": self.inputs }));
            }
        }
    }
}

pub(crate) fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

fn common_of(cmd: &Command) -> &Common {
    match cmd {
        Command::Rasterize { common, .. }
        | Command::Sample { common, .. }
        | Command::GritCompile { common, .. }
        | Command::GritNegatives { common, .. }
        | Command::GenFixtures { common, .. } => common,
        Command::EvalRec(a)
        | Command::EvalGround(a)
        | Command::EvalRefer(a)
        | Command::EvalPope(a)
        | Command::BenchRatio(a) => &a.common,
        Command::EvalGroundcap { eval, .. } => &eval.common,
    }
}

/// Parses `argv` (including the program name) and runs it, writing the
/// report to `out` and diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    let mut manifest = Manifest::new(common_of(&cli.command).manifest);
    match commands::dispatch(&cli.command, &mut manifest) {
        Ok(mut report) => {
            manifest.attach(&mut report);
            match serde_json::to_string(&report) {
                Ok(s) => {
                    if writeln!(out, "{s}").is_err() {
                        return EXIT_IO;
                    }
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_INVALID
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs with the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
