use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use qmatrix_core::annotator::PromptVersion;
use qmatrix_core::ConfidenceTier;

#[derive(Debug, Parser)]
#[command(name = "qmatrix", version, about = "Generate and validate Q-matrices from LLM annotations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate assessment items through an OpenAI-compatible endpoint.
    Generate(GenerateArgs),
    /// Build one Q-matrix per confidence tier from an annotation set.
    Build(BuildArgs),
    /// Cross-validate a Q-matrix on a response log.
    Validate(ValidateArgs),
    /// Compare a candidate Q-matrix with a reference matrix.
    Compare(CompareArgs),
    /// Simulate DINA responses from a Q-matrix.
    Simulate(SimulateArgs),
    /// Rebuild report.json and report.md from a run directory.
    Report(ReportArgs),
    /// Run the whole loop from a JSON run configuration.
    Run(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Build(_) => "build",
            Command::Validate(_) => "validate",
            Command::Compare(_) => "compare",
            Command::Simulate(_) => "simulate",
            Command::Report(_) => "report",
            Command::Run(_) => "run",
        }
    }
}

/// Where the command's outputs go.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Location {
    /// Run name; outputs land in `<out-dir>/<name>/`. Defaults to the command name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
    /// JSON object of flag values (keys are long flag names); explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Server root, e.g. http://localhost:8000 (the client appends /v1/chat/completions).
    #[arg(long)]
    pub endpoint_url: String,
    #[arg(long)]
    pub model: String,
    /// Endpoint label used in file names and provenance.
    #[arg(long, default_value = "endpoint")]
    pub label: String,
    #[arg(long, default_value = "V3")]
    pub prompt_version: PromptVersion,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 120.0)]
    pub timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 4)]
    pub max_parallel: usize,
    #[arg(long, default_value_t = 1000)]
    pub retry_delay_ms: u64,
    #[command(flatten)]
    pub location: Location,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Column order; without it the columns are the ids the annotations use.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Row order from an items file.
    #[arg(long, conflicts_with = "reference")]
    pub items: Option<PathBuf>,
    /// Row order from a reference Q-matrix.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Threshold tier; repeat for several. Defaults to all three.
    #[arg(long = "tier")]
    pub tiers: Vec<ConfidenceTier>,
    /// Candidate label; defaults to `<endpoint label>-<prompt version>`.
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub location: Location,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub q: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    /// Candidate label; defaults to the Q-matrix file stem.
    #[arg(long)]
    pub label: Option<String>,
    /// Mark this matrix as the expert baseline in reports.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.002)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Hidden layer sizes.
    #[arg(long, num_args = 2, value_delimiter = ',', default_values_t = [64, 32])]
    pub hidden: Vec<usize>,
    /// Run the repeats on parallel threads (same result).
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub location: Location,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Candidate label; defaults to the candidate file stem.
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub location: Location,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub q: PathBuf,
    #[arg(long)]
    pub students: usize,
    #[arg(long, default_value_t = 0.1)]
    pub slip: f64,
    #[arg(long, default_value_t = 0.1)]
    pub guess: f64,
    /// Mastery probability of every attribute.
    #[arg(long, default_value_t = 0.5)]
    pub prevalence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub location: Location,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Run directory; defaults to `<out-dir>/<name>`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[command(flatten)]
    pub location: Location,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallel: bool,
}

fn flag_given(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

/// Splices the flags stored in a `--config` JSON object into `argv` right
/// after the command name. Flags already on the command line are kept and
/// the config value for them is skipped. `run` takes its own config format
/// and is left alone.
pub fn expand_config_file(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(cmd_pos) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        return Ok(argv);
    };
    if argv[cmd_pos] == "run" {
        return Ok(argv);
    }
    let Some(at) = argv.iter().position(|a| a == "--config") else { return Ok(argv) };
    let Some(path) = argv.get(at + 1) else { return Ok(argv) };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let Value::Object(map) = doc else {
        return Err(format!("{}: expected a JSON object of flag values", path.to_string_lossy()));
    };

    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || flag_given(&argv, &flag) {
            continue;
        }
        let scalar = |v: &Value| -> Result<String, String> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(format!("{}: unsupported value for {key}", path.to_string_lossy())),
            }
        };
        match &value {
            Value::Bool(true) => extra.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(values) if key == "hidden" => {
                extra.push(flag.into());
                let joined: Result<Vec<String>, String> = values.iter().map(scalar).collect();
                extra.push(joined?.join(",").into());
            }
            Value::Array(values) => {
                for v in values {
                    extra.push(flag.clone().into());
                    extra.push(scalar(v)?.into());
                }
            }
            v => {
                extra.push(flag.into());
                extra.push(scalar(v)?.into());
            }
        }
    }
    let mut out = argv[..=cmd_pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[cmd_pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_values_fill_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"students": 20, "slip": 0.2, "q": "a.csv", "parallel": true, "tier": ["High","Low"]}"#,
        )
        .unwrap();
        let argv = os(&["qmatrix", "simulate", "--config", path.to_str().unwrap(), "--students", "5"]);
        let out: Vec<String> =
            expand_config_file(argv).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(out.iter().filter(|a| *a == "--students").count(), 1);
        assert!(out.windows(2).any(|w| w[0] == "--students" && w[1] == "5"));
        assert!(out.windows(2).any(|w| w[0] == "--slip" && w[1] == "0.2"));
        assert!(out.windows(2).any(|w| w[0] == "--q" && w[1] == "a.csv"));
        assert!(out.contains(&"--parallel".to_string()));
        assert_eq!(out.iter().filter(|a| *a == "--tier").count(), 2);
        assert_eq!(out[1], "simulate");
    }

    #[test]
    fn run_keeps_its_own_config() {
        let argv = os(&["qmatrix", "run", "--config", "does-not-exist.json"]);
        assert_eq!(expand_config_file(argv.clone()).unwrap(), argv);
    }

    #[test]
    fn unreadable_config_is_an_error() {
        let argv = os(&["qmatrix", "simulate", "--config", "/nonexistent/c.json"]);
        assert!(expand_config_file(argv).unwrap_err().contains("/nonexistent/c.json"));
    }
}
