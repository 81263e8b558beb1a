use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use super::SweepConfig;
use crate::dp::Epsilon;
use crate::sim::LabelProtection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelMode {
    Off,
    Rr,
}

/// Sweep the privacy budget and report accuracy and transport cost.
#[derive(Debug, Parser)]
#[command(name = "ppod", version, arg_required_else_help = true)]
pub struct Cli {
    /// CSV with numeric feature columns and a trailing `label` column.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub owners: usize,
    #[arg(long = "fog-nodes", default_value_t = 2)]
    pub fog_nodes: usize,
    /// Comma-separated budgets; `inf` disables noise.
    #[arg(long, default_value = "0.1,1,10,inf", allow_hyphen_values = true, value_parser = parse_epsilon_list)]
    pub epsilon: EpsilonList,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Training fraction per owner and class, in (0, 1).
    #[arg(long, default_value_t = 0.7, value_parser = parse_fraction)]
    pub split: f64,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    /// Also write the per-row event logs as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Include payloads in the event log.
    #[arg(long = "verbose-log")]
    pub verbose_log: bool,
    #[arg(long = "perturb-labels", value_enum, default_value_t = LabelMode::Off)]
    pub perturb_labels: LabelMode,
    /// Run trials on one thread.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonList(pub Vec<Epsilon>);

pub fn parse_epsilon_list(s: &str) -> Result<EpsilonList, String> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        let e = match item.to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Epsilon::INFINITY,
            _ => {
                let v: f64 = item
                    .parse()
                    .map_err(|_| format!("`{item}` is not a number or `inf`"))?;
                Epsilon::new(v).map_err(|e| e.to_string())?
            }
        };
        out.push(e);
    }
    if out.is_empty() {
        return Err("at least one epsilon is required".into());
    }
    Ok(EpsilonList(out))
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

/// Parses command-line arguments (including the program name) into a sweep
/// configuration.
pub fn parse_cli<I, T>(args: I) -> Result<SweepConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    if cli.owners == 0 || cli.fog_nodes == 0 || cli.trials == 0 {
        return Err(clap::Error::raw(
            clap::error::ErrorKind::ValueValidation,
            "--owners, --fog-nodes and --trials must be at least 1\n",
        ));
    }
    let mut config = SweepConfig::new(cli.dataset, cli.epsilon.0, cli.trials);
    config.owners = cli.owners;
    config.fog_nodes = cli.fog_nodes;
    config.base_seed = cli.seed;
    config.split_fraction = cli.split;
    config.out = cli.out;
    config.log = cli.log;
    config.verbose_log = cli.verbose_log;
    config.parallel = !cli.serial;
    config.label_protection = match cli.perturb_labels {
        LabelMode::Off => LabelProtection::Off,
        LabelMode::Rr => LabelProtection::RandomizedResponse,
    };
    Ok(config)
}
