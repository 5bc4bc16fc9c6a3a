use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "fracsde",
    version,
    about = "Euler, modified Euler and Crank-Nicolson schemes for SDEs driven by fractional Brownian motion",
    after_help = "Exit status: 0 when every verdict passes, 1 on invalid input or I/O errors, 2 when a verdict fails."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a driving path (t, clock, m fBm components) and optionally its solution.
    #[command(args_override_self = true)]
    Paths(RunArgs),
    /// Strong error over an n ladder and a log-log rate fit.
    #[command(args_override_self = true)]
    Convergence(RunArgs),
    /// Tabulate the Levy-area constants kappa(H) or rho(H).
    #[command(args_override_self = true)]
    Constants(RunArgs),
    /// Scaled second moments of the discrete Levy areas.
    #[command(args_override_self = true)]
    Levy(RunArgs),
    /// Pathwise (m = 1, no drift) or distributional limit of the scaled CN error.
    #[command(args_override_self = true)]
    Limit(RunArgs),
}

impl Command {
    pub const NAMES: [&'static str; 5] = ["paths", "convergence", "constants", "levy", "limit"];

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Paths(a)
            | Command::Convergence(a)
            | Command::Constants(a)
            | Command::Levy(a)
            | Command::Limit(a) => a,
        }
    }
}

/// Flags shared by every subcommand. Unset options take the per-command
/// defaults listed in the help text.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Hurst parameter, open interval (1/2, 1). Default 0.7; `constants` uses its H grid when unset.
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,

    /// Time horizon T > 0 (time units).
    #[arg(long = "T", value_name = "T", default_value_t = 1.0)]
    pub horizon: f64,

    /// Number of coarse steps n >= 1. Default 256 (paths), 64 (levy).
    #[arg(long)]
    pub n: Option<usize>,

    /// Comma-separated, strictly increasing step counts, each dividing the largest.
    /// Default 32,64,128,256,512 (convergence), 32,64,128,256 (limit).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n_list: Option<Vec<usize>>,

    /// Number of fBm components m >= 0 for `paths`. Default: the SDE's m, or 1.
    #[arg(long)]
    pub m: Option<usize>,

    /// Monte Carlo sample size, >= 2. Default 1000 (convergence, limit), 2000 (levy).
    #[arg(long)]
    pub paths: Option<usize>,

    /// Moment order of the L^p error, p >= 1.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,

    /// Master seed; every path seed is derived from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Output CSV path. Default `<command>.csv`; companion files share its stem.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Worker threads, >= 1. Default: available cores. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,

    /// fGn sampler: cholesky (n <= 8192) or circulant.
    #[arg(long, default_value = "circulant")]
    pub method: String,

    /// Sub-steps M >= 1 per coarse step for the Levy-area simulation.
    #[arg(long, default_value_t = 32)]
    pub sub_factor: usize,

    /// Truncation P >= 1 of the lattice sum defining kappa and rho.
    #[arg(long = "trunc-P", value_name = "P", default_value_t = 128)]
    pub trunc_p: usize,

    /// Gauss-Legendre nodes per panel for the constants, >= 2.
    #[arg(long, default_value_t = 48)]
    pub quad_order: usize,

    /// Built-in SDE: scalar_linear, scalar_linear_drift, fbm2d_rotation, bounded_scalar, bounded_scalar_drift.
    #[arg(long)]
    pub sde: Option<String>,

    /// Scheme: euler, modified_euler (H < 3/4 for rate fits) or cn.
    #[arg(long, default_value = "cn")]
    pub scheme: String,

    /// Structural case: multi (m > 1), drift (m = 1, V_0 != 0) or driftless (m = 1, V_0 = 0).
    /// Must match the SDE; inferred from it when unset.
    #[arg(long)]
    pub case: Option<String>,

    /// constants: kappa or rho (default kappa). levy: fbm_fbm or fbm_time (default fbm_fbm).
    #[arg(long)]
    pub which: Option<String>,

    /// Comma-separated H grid for `constants`, each in (1/2, 1). Default 0.51,0.55,...,0.95.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub h_grid: Option<Vec<f64>>,

    /// Times in [0, T] on the coarse grid for `levy`. Default T/4, T/2, 3T/4, T.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub times: Option<Vec<f64>>,

    /// Limit forcing: printed (the stated limit equation) or full (adds the (dV)^2 V term).
    #[arg(long, default_value = "printed")]
    pub forcing: String,

    /// Reference solution: auto, closed_form or fine_cn.
    #[arg(long, default_value = "auto")]
    pub reference: String,

    /// Fine-grid factor: the reference grid has fine-factor * max(n-list) steps, >= 16 for fine_cn.
    #[arg(long, default_value_t = 16)]
    pub fine_factor: usize,

    /// Batches used for standard errors, 2 <= batches <= paths.
    #[arg(long, default_value_t = 20)]
    pub batches: usize,

    /// Rate verdict: |slope - theory| <= tolerance (log-log slope units).
    #[arg(long, default_value_t = 0.15)]
    pub tolerance: f64,

    /// Distributional verdict: every SD ratio at the largest n within [1 - r, 1 + r].
    #[arg(long, default_value_t = 0.2)]
    pub ratio_tolerance: f64,

    /// Also write a gnuplot script `<stem>.gp` next to the CSV.
    #[arg(long)]
    pub emit_gnuplot: bool,

    /// Plain-text file of `key = value` lines (keys are flag names); flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Reads `--config` (if present) and splices its entries right after the
/// subcommand, so flags given on the command line override them.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strings.iter().enumerate() {
        if a == "--config" {
            path = strings.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let Some(at) = strings
        .iter()
        .skip(1)
        .position(|a| Command::NAMES.contains(&a.as_str()))
    else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let injected = parse_config(&text).with_context(|| format!("in config file {path}"))?;
    let mut out = argv;
    let at = at + 2;
    out.splice(at..at, injected.into_iter().map(OsString::from));
    Ok(out)
}

fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{raw}`", no + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let key = match key.as_str() {
            "h" => "H".to_string(),
            "t" => "T".to_string(),
            "trunc-p" => "trunc-P".to_string(),
            _ => key,
        };
        let value = value.trim();
        if key == "config" {
            bail!("line {}: config files cannot include other config files", no + 1);
        }
        if key == "emit-gnuplot" {
            match value {
                "true" | "1" | "yes" => out.push("--emit-gnuplot".to_string()),
                "false" | "0" | "no" => {}
                other => bail!("line {}: emit-gnuplot expects true or false, got `{other}`", no + 1),
            }
            continue;
        }
        out.push(format!("--{key}"));
        out.push(value.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let got =
            parse_config("# comment\nH = 0.6\nn_list=32,64 # trailing\n\nemit-gnuplot = true\ntrunc_P = 64\n").unwrap();
        assert_eq!(
            got,
            ["--H", "0.6", "--n-list", "32,64", "--emit-gnuplot", "--trunc-P", "64"]
        );
        assert!(parse_config("H 0.6").is_err());
        assert!(parse_config("config = other.cfg").is_err());
    }

    #[test]
    fn injected_after_subcommand() {
        let dir = std::env::temp_dir().join(format!("fracsde-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let file = dir.join("run.cfg");
        fs::write(&file, "seed = 9\n").unwrap();
        let argv: Vec<OsString> = ["fracsde", "paths", "--seed", "3", "--config", file.to_str().unwrap()]
            .iter()
            .map(OsString::from)
            .collect();
        let out = expand_config(argv).unwrap();
        let cli = Cli::try_parse_from(out).unwrap();
        assert_eq!(cli.command.args().seed, 3);
        fs::remove_dir_all(dir).unwrap();
    }
}
