use std::path::PathBuf;
use std::process::ExitCode;

use bregman_ot_cli::config::KEYS;
use bregman_ot_cli::experiments::report;
use bregman_ot_cli::{load_config, run, CliError};
use clap::Parser;

fn keys_help() -> String {
    let mut text = String::from("Config keys (file `key = value`, or `--set key=value`):\n");
    for (key, default, about) in KEYS {
        text.push_str(&format!("  {key:<20} {about} [default: {default}]\n"));
    }
    text.push_str("\nExit codes: 0 success, 2 configuration error, 3 numerical failure, 1 other.");
    text
}

/// Regularized optimal transport experiments on rotating two moons.
#[derive(Debug, Parser)]
#[command(name = "bregman-ot", version, args_override_self = true, after_help = keys_help())]
struct Args {
    /// convergence | adaptation
    #[arg(long)]
    experiment: Option<String>,
    /// Config file with one `key = value` per line
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long = "eta-c")]
    eta_c: Option<String>,
    #[arg(long = "eta-t")]
    eta_t: Option<String>,
    /// Rotation steps after the first batch
    #[arg(long)]
    steps: Option<String>,
    #[arg(long = "step-deg")]
    step_deg: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    /// Output CSV path
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated candidate weights tuned on validation seeds
    #[arg(long)]
    grid: Option<String>,
    /// fb | cgs
    #[arg(long)]
    solver: Option<String>,
    /// seq | static
    #[arg(long = "cost-mode")]
    cost_mode: Option<String>,
    /// euclidean | sqeuclidean
    #[arg(long)]
    metric: Option<String>,
    /// Per-solver wall-clock budget in seconds, 0 disables
    #[arg(long)]
    budget: Option<String>,
    /// Any other config key, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let named = [
            ("experiment", &self.experiment),
            ("alpha", &self.alpha),
            ("lambda", &self.lambda),
            ("eta_c", &self.eta_c),
            ("eta_t", &self.eta_t),
            ("n_steps", &self.steps),
            ("step_deg", &self.step_deg),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("jobs", &self.jobs),
            ("output", &self.out),
            ("grid", &self.grid),
            ("solver", &self.solver),
            ("cost_mode", &self.cost_mode),
            ("metric", &self.metric),
            ("wall_clock_budget_s", &self.budget),
        ];
        let mut out: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = match args.overrides() {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let result = load_config(args.config.as_deref(), &overrides)
        .map_err(CliError::from)
        .and_then(|config| {
            let path = run(&config)?;
            let _ = report(std::io::stdout(), &config, &path);
            Ok(())
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
