use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use opfkit::ipm::IpmOptions;
use opfkit::powerflow::FlowMode;
use opfkit::qcqp::Representation;
use opfkit::report::{render_csv, render_json, render_text, run_pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(
    name = "opfkit",
    version,
    about = "MATPOWER case toolkit: statistics, OPF bounds, sparse QCQP/SDPA export"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// MATPOWER case files (.m)
    #[arg(required = true)]
    cases: Vec<PathBuf>,
    /// JSON config file with the same keys as the flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Branch flow limit handling: S (apparent power), I (current), none
    #[arg(long)]
    flow_mode: Option<FlowMode>,
    /// QCQP representation: complex (Hermitian) or real (symmetric)
    #[arg(long)]
    repr: Option<Representation>,
    /// Directory for per-case artifacts (.qcqp, .dat-s, profiles CSV)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Interior point feasibility tolerance [default: 5e-6]
    #[arg(long)]
    feastol: Option<f64>,
    /// Interior point step (cost change) tolerance [default: 1e-8]
    #[arg(long)]
    xtol: Option<f64>,
    /// Interior point optimality (gradient) tolerance [default: 1e-4]
    #[arg(long)]
    opttol: Option<f64>,
    /// Interior point iteration limit [default: 150]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Worker threads (0 = all cores) [default: 0]
    #[arg(long)]
    jobs: Option<usize>,
    /// Emit the ledger as CSV instead of text tables
    #[arg(long)]
    csv: bool,
    /// Emit the ledger as JSON instead of text tables
    #[arg(long)]
    json: bool,
}

/// File-level defaults; any flag given on the command line overrides the
/// corresponding entry.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    flow_mode: Option<String>,
    repr: Option<String>,
    out: Option<PathBuf>,
    feastol: Option<f64>,
    xtol: Option<f64>,
    opttol: Option<f64>,
    max_iter: Option<usize>,
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Case statistics only (sizes, voltage levels, negative impedances)
    Stats(Common),
    /// DC-OPF lower bounds, power flow and local OPF upper bounds, gaps
    Bounds(Common),
    /// Build the sparse QCQP and export the triplet format
    Qcqp(Common),
    /// Export the Shor relaxation in SDPA sparse format
    Sdpa(Common),
    /// Per-voltage-level generation/load profile CSVs
    Profiles(Common),
    /// Everything: stats, bounds, QCQP, SDPA and profiles
    All(Common),
}

fn build_config(stage: Stage, common: &Common) -> Result<PipelineConfig, String> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("bad config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };
    fn parse_opt<T: std::str::FromStr>(s: &Option<String>, what: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        s.as_deref()
            .map(|s| s.parse().map_err(|e| format!("config {what}: {e}")))
            .transpose()
    }
    let flow_mode = match common.flow_mode {
        Some(m) => m,
        None => parse_opt(&file.flow_mode, "flow_mode")?.unwrap_or(FlowMode::None),
    };
    let representation = match common.repr {
        Some(r) => r,
        None => parse_opt(&file.repr, "repr")?.unwrap_or(Representation::Real),
    };
    let defaults = IpmOptions::default();
    Ok(PipelineConfig {
        stage,
        flow_mode,
        representation,
        out_dir: common.out.clone().or(file.out),
        ipm: IpmOptions {
            feastol: common.feastol.or(file.feastol).unwrap_or(defaults.feastol),
            costtol: common.xtol.or(file.xtol).unwrap_or(defaults.costtol),
            gradtol: common.opttol.or(file.opttol).unwrap_or(defaults.gradtol),
            max_iter: common.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter),
            ..defaults
        },
        jobs: common.jobs.or(file.jobs).unwrap_or(0),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common) = match cli.verb {
        Verb::Stats(c) => (Stage::Stats, c),
        Verb::Bounds(c) => (Stage::Bounds, c),
        Verb::Qcqp(c) => (Stage::Qcqp, c),
        Verb::Sdpa(c) => (Stage::Sdpa, c),
        Verb::Profiles(c) => (Stage::Profiles, c),
        Verb::All(c) => (Stage::All, c),
    };
    let config = match build_config(stage, &common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("opfkit: {e}");
            return ExitCode::FAILURE;
        }
    };
    let (outcomes, ok) = run_pipeline(&common.cases, &config);
    if common.json {
        println!("{}", render_json(&outcomes));
    } else if common.csv {
        print!("{}", render_csv(&outcomes));
    } else {
        print!("{}", render_text(&outcomes));
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
