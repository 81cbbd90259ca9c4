use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "qfpt", version, about = "First-passage-time statistics of monitored open quantum systems")]
pub struct Cli {
    /// Directory for CSV artifacts and the run manifest.
    #[arg(long, global = true, env = "QFPT_OUTPUT_DIR", default_value = "qfpt-out")]
    pub out: PathBuf,

    /// Worker threads for scan points and trajectory batches.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "workflow", rename_all = "kebab-case")]
pub enum Command {
    /// Deterministic FPT density of a counted jump current.
    FptJump(FptJumpArgs),
    /// Deterministic FPT density of a diffusive (homodyne) current.
    FptDiffusion(FptDiffusionArgs),
    /// Monte Carlo trajectories with first-hit detection.
    Trajectories(TrajectoryArgs),
    /// Kinetic uncertainty bounds over a range of drive strengths.
    KurScan(KurScanArgs),
    /// Check a configuration without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// Driven qubit in a thermal bath; counts net emitted excitations.
    ThermalQubit,
    /// Driven qubit at zero temperature under homodyne detection.
    HomodyneQubit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    Steady,
    Ground,
    Excited,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnravellingArg {
    Jump,
    Diffusion,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Built-in model.
    #[arg(long, value_enum, conflicts_with = "model", required_unless_present = "model")]
    pub builtin: Option<Builtin>,

    /// JSON model file.
    #[arg(long)]
    pub model: Option<PathBuf>,

    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,

    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,

    /// Thermal occupation (thermal qubit only).
    #[arg(long, default_value_t = 0.0)]
    pub nbar: f64,

    /// Initial state; defaults to the ground state for the homodyne qubit
    /// and the steady state otherwise.
    #[arg(long, value_enum)]
    pub start: Option<Start>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FptJumpArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Upper threshold on the integer charge.
    #[arg(long)]
    pub threshold: Option<i64>,

    /// Lower threshold on the integer charge.
    #[arg(long, allow_negative_numbers = true)]
    pub lower_threshold: Option<i64>,

    /// Sampling step; defaults to 0.01 divided by the largest rate.
    #[arg(long)]
    pub dt: Option<f64>,

    /// Fixed horizon; without it the run continues until absorbed.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FptDiffusionArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub lower_threshold: Option<f64>,

    /// Charge grid spacing.
    #[arg(long, default_value_t = 0.01)]
    pub dn: f64,

    #[arg(long)]
    pub dt: Option<f64>,

    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum, default_value = "jump")]
    pub unravelling: UnravellingArg,

    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub lower_threshold: Option<f64>,

    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,

    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,

    #[arg(long, default_value_t = 1000)]
    pub trajectories: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Record the charge every this many steps (0: no paths).
    #[arg(long, default_value_t = 0)]
    pub path_stride: usize,

    /// Histogram bins over `[0, horizon]`.
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KurScanArgs {
    #[arg(long, value_enum, default_value = "thermal-qubit")]
    pub builtin: Builtin,

    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,

    #[arg(long, default_value_t = 0.1)]
    pub nbar: f64,

    /// `lo:hi:count` in units of Ω/γ.
    #[arg(long, default_value = "0.1:5:50")]
    pub omega_range: Range,

    #[arg(long, default_value_t = 5)]
    pub threshold: i64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    pub lower_threshold: Option<f64>,

    #[arg(long)]
    pub dt: Option<f64>,

    #[arg(long, default_value_t = 0.01)]
    pub dn: f64,
}

/// Inclusive linear range `lo:hi:count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(format!("expected lo:hi:count, got `{s}`"));
        };
        let lo: f64 = lo.parse().map_err(|e| format!("bad lower end `{lo}`: {e}"))?;
        let hi: f64 = hi.parse().map_err(|e| format!("bad upper end `{hi}`: {e}"))?;
        let count: usize = count.parse().map_err(|e| format!("bad count `{count}`: {e}"))?;
        if !(lo.is_finite() && hi.is_finite()) || hi < lo || count == 0 {
            return Err(format!("range `{s}` must have lo <= hi and count >= 1"));
        }
        Ok(Range { lo, hi, count })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn range_syntax() {
        assert_eq!("0.1:5:50".parse::<Range>().unwrap(), Range { lo: 0.1, hi: 5.0, count: 50 });
        assert!("1:0:3".parse::<Range>().is_err());
        assert!("1:2".parse::<Range>().is_err());
        assert!("1:2:0".parse::<Range>().is_err());
    }

    #[test]
    fn builtin_and_model_file_are_exclusive() {
        let r = Cli::try_parse_from(["qfpt", "fpt-jump", "--builtin", "thermal-qubit", "--model", "m.json"]);
        assert!(r.is_err());
        let r = Cli::try_parse_from(["qfpt", "fpt-jump", "--threshold", "5"]);
        assert!(r.is_err());
    }

    #[test]
    fn negative_lower_threshold_parses() {
        let cli = Cli::try_parse_from([
            "qfpt",
            "fpt-jump",
            "--builtin",
            "thermal-qubit",
            "--lower-threshold",
            "-3",
        ])
        .unwrap();
        let Command::FptJump(a) = cli.command else { panic!() };
        assert_eq!(a.lower_threshold, Some(-3));
    }
}
