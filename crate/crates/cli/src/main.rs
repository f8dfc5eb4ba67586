//! `chorcc` — command-line driver for the choreography toolchain.
//!
//! Subcommands cover the whole pipeline: `parse` and `check` for the
//! frontend, `project-chor` and `project-ep` for the two translations, and
//! `run` for execution in any of the four modes (reference, checking,
//! endpoints, equivalence).
//!
//! Exit codes: 0 — everything passed; 1 — a dynamic check failed or the
//! heaps differ; 2 — the simulated endpoints deadlocked; 3 — the input was
//! rejected (usage, I/O, parse, well-formedness, or projection errors).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use chorcc_core::ast::Program;
use chorcc_core::chor_projection::project_chor;
use chorcc_core::ep_projection::{build_channel_table, project_ep, project_ep_all};
use chorcc_core::frontend::json::to_json;
use chorcc_core::frontend::parse;
use chorcc_core::frontend::pretty::pretty;
use chorcc_core::wellformed::check_wellformed;
use chorcc_core::{drive, Mode, RunConfig, RunVerdict, Schedule, Value};

#[derive(Parser)]
#[command(
    name = "chorcc",
    version,
    about = "Parse, check, project, and run choreographies"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a program and print it back in canonical form.
    Parse {
        input: PathBuf,
        /// Print the canonical JSON envelope instead of source text.
        #[arg(long)]
        json: bool,
    },
    /// Parse a program and run the static well-formedness checks.
    Check {
        input: PathBuf,
        /// Print the diagnostics as a JSON array.
        #[arg(long)]
        json: bool,
    },
    /// Project to the single sequential verification program.
    #[command(name = "project-chor")]
    ProjectChor {
        input: PathBuf,
        /// Print the program as JSON instead of text.
        #[arg(long)]
        json: bool,
        /// Also write <name>.vir and <name>.vir.json into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Project to one local program per endpoint sort plus the channel table.
    #[command(name = "project-ep")]
    ProjectEp {
        input: PathBuf,
        /// Project a single sort.
        #[arg(long, conflicts_with = "all")]
        sort: Option<String>,
        /// Project every sort of the choreography.
        #[arg(long)]
        all: bool,
        /// Directory the .ep / .ep.json / channels.json files are written to.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Execute the program and report every dynamic check.
    Run {
        input: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args, Clone, Default)]
struct RunOpts {
    /// Execution mode: chor | ir | endpoints | equiv.
    #[arg(long)]
    mode: Option<String>,
    /// Choreography parameters, e.g. --params n=4 (repeatable, comma lists ok).
    #[arg(long)]
    params: Vec<String>,
    /// Scheduling policy for the endpoint simulation: round-robin | random.
    #[arg(long)]
    schedule: Option<String>,
    /// Number of seeded random runs (random schedule only).
    #[arg(long)]
    seeds: Option<u64>,
    /// Print the full machine-readable report instead of the summary.
    #[arg(long)]
    json: bool,
    /// TOML file with default mode / schedule / seeds / params.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Defaults read from a `--config` TOML file; every command-line flag wins
/// over its file counterpart.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<String>,
    schedule: Option<String>,
    seeds: Option<u64>,
    #[serde(default)]
    params: BTreeMap<String, i64>,
}

/// Die quietly when the consumer of our stdout goes away (e.g. `| head`),
/// like every other line-oriented tool, instead of panicking on EPIPE.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and --version are successful outputs, not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(3);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Parse { input, json } => cmd_parse(&input, json),
        Cmd::Check { input, json } => cmd_check(&input, json),
        Cmd::ProjectChor { input, json, out_dir } => cmd_project_chor(&input, json, out_dir),
        Cmd::ProjectEp { input, sort, all, out_dir } => {
            cmd_project_ep(&input, sort.as_deref(), all, &out_dir)
        }
        Cmd::Run { input, opts } => cmd_run(&input, &opts),
    }
}

// ---------------------------------------------------------------------------
// frontend commands

fn load_program(input: &Path) -> Result<Program> {
    let src = fs::read_to_string(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    parse(&src).map_err(|diags| {
        for d in &diags {
            eprintln!("{}: {d}", input.display());
        }
        anyhow!("{} parse error(s)", diags.len())
    })
}

/// Parse plus static checks — the gate every later stage runs behind.
fn load_checked(input: &Path) -> Result<Program> {
    let program = load_program(input)?;
    let diags = check_wellformed(&program);
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("{}: {d}", input.display());
        }
        bail!("{} well-formedness error(s)", diags.len());
    }
    Ok(program)
}

fn cmd_parse(input: &Path, json: bool) -> Result<ExitCode> {
    let program = load_program(input)?;
    if json {
        println!("{}", to_json(&program));
    } else {
        print!("{}", pretty(&program));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(input: &Path, json: bool) -> Result<ExitCode> {
    let program = load_program(input)?;
    let diags = check_wellformed(&program);
    if json {
        let rendered: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        println!("{}", serde_json::to_string_pretty(&rendered)?);
    }
    if diags.is_empty() {
        if !json {
            println!("OK");
        }
        Ok(ExitCode::SUCCESS)
    } else {
        for d in &diags {
            eprintln!("{}: {d}", input.display());
        }
        bail!("{} well-formedness error(s)", diags.len());
    }
}

// ---------------------------------------------------------------------------
// projection commands

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_project_chor(input: &Path, json: bool, out_dir: Option<PathBuf>) -> Result<ExitCode> {
    let program = load_checked(input)?;
    let (vp, _trace) = project_chor(&program).map_err(|e| anyhow!("{e}"))?;
    let name = program
        .choreography()
        .map(|c| c.name.clone())
        .unwrap_or_else(|| "program".into());
    let text = vp.to_text();
    let as_json = serde_json::to_string_pretty(&vp)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        write_atomic(&dir.join(format!("{name}.vir")), &text)?;
        write_atomic(&dir.join(format!("{name}.vir.json")), &(as_json + "\n"))?;
    } else if json {
        println!("{as_json}");
    } else {
        print!("{text}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_project_ep(
    input: &Path,
    sort: Option<&str>,
    all: bool,
    out_dir: &Path,
) -> Result<ExitCode> {
    let program = load_checked(input)?;
    if sort.is_none() && !all {
        bail!("choose a sort with --sort NAME or project every sort with --all");
    }
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let (programs, table) = if let Some(sort) = sort {
        let (ep, _) = project_ep(&program, sort).map_err(|e| anyhow!("{e}"))?;
        let chor = program
            .choreography()
            .ok_or_else(|| anyhow!("the program must declare exactly one choreography"))?;
        (vec![ep], build_channel_table(chor))
    } else {
        let (eps, table, _) = project_ep_all(&program).map_err(|e| anyhow!("{e}"))?;
        (eps, table)
    };

    for ep in &programs {
        let stem = out_dir.join(&ep.sort.0);
        write_atomic(&stem.with_extension("ep"), &ep.to_text())?;
        write_atomic(
            &stem.with_extension("ep.json"),
            &(serde_json::to_string_pretty(ep)? + "\n"),
        )?;
    }
    write_atomic(
        &out_dir.join("channels.json"),
        &(serde_json::to_string_pretty(&table)? + "\n"),
    )?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// run command

fn cmd_run(input: &Path, opts: &RunOpts) -> Result<ExitCode> {
    let program = load_checked(input)?;
    let file_cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str::<FileConfig>(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let mode: Mode = opts
        .mode
        .clone()
        .or(file_cfg.mode)
        .unwrap_or_else(|| "equiv".into())
        .parse()
        .map_err(|e: String| anyhow!(e))?;
    let cfg = RunConfig {
        params: resolve_params(&opts.params, &file_cfg.params)?,
        schedules: resolve_schedules(
            opts.schedule.as_deref().or(file_cfg.schedule.as_deref()),
            opts.seeds.or(file_cfg.seeds),
        )?,
    };

    let outcome = drive(&program, mode, &cfg).map_err(|e| anyhow!("{e}"))?;

    if opts.json {
        let doc = serde_json::json!({
            "schema": 1,
            "verdict": outcome.verdict,
            "reports": outcome.reports,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        for r in &outcome.reports {
            println!("{}", summarize(r));
        }
        println!("{}", final_line(mode, &outcome.verdict, &outcome.reports));
    }
    Ok(ExitCode::from(outcome.verdict.exit_code() as u8))
}

/// One line per report: mode, schedule, verdict, and the salient numbers.
fn summarize(r: &chorcc_core::RunReport) -> String {
    let mut line = format!("[{}]", r.mode);
    if let Some(s) = &r.schedule {
        line.push_str(&format!(" {s}"));
        if let Some(seed) = r.seed {
            line.push_str(&format!(" seed={seed}"));
        }
    }
    line.push_str(&format!(
        " {}: {} checks, {} failed",
        match r.verdict {
            RunVerdict::Pass => "PASS",
            RunVerdict::CheckFail => "FAIL",
            RunVerdict::Deadlock => "DEADLOCK",
        },
        r.checks.len(),
        r.failures,
    ));
    if r.conservation_audits > 0 {
        line.push_str(&format!(", {} conservation audits", r.conservation_audits));
    }
    if let Some(c) = &r.comparison {
        line.push_str(if c.is_equal() { ", heap EQUAL" } else { ", heap DIFFERS" });
    }
    if let Some(d) = &r.deadlock {
        line.push_str(&format!(
            "; blocked: {}; waiting on: {}",
            d.blocked.join(", "),
            d.waiting_on.join(", ")
        ));
    }
    for c in r.checks.iter().filter(|c| !c.passed) {
        line.push_str(&format!("\n  failed {} `{}`: {}", c.class, c.label, c.detail));
    }
    line
}

/// The last line of the human summary — the word scripts grep for.
fn final_line(
    mode: Mode,
    verdict: &RunVerdict,
    reports: &[chorcc_core::RunReport],
) -> String {
    match verdict {
        RunVerdict::Deadlock => "DEADLOCK".into(),
        RunVerdict::CheckFail => {
            let differs = reports
                .iter()
                .any(|r| r.comparison.as_ref().is_some_and(|c| !c.is_equal()));
            if differs { "DIFFER".into() } else { "CHECK-FAIL".into() }
        }
        RunVerdict::Pass => match mode {
            Mode::Equiv => "EQUAL".into(),
            _ => "PASS".into(),
        },
    }
}

// ---------------------------------------------------------------------------
// flag plumbing

/// `--params n=4,m=2` (repeatable) over config-file params; flags win.
fn resolve_params(
    flags: &[String],
    file: &BTreeMap<String, i64>,
) -> Result<BTreeMap<String, Value>> {
    let mut out: BTreeMap<String, Value> = file
        .iter()
        .map(|(k, v)| (k.clone(), Value::int(*v)))
        .collect();
    for group in flags {
        for item in group.split(',').filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("`{item}` is not of the form name=value"))?;
            let n: i64 = value
                .trim()
                .parse()
                .with_context(|| format!("`{value}` is not an integer (in `{item}`)"))?;
            out.insert(key.trim().to_string(), Value::int(n));
        }
    }
    Ok(out)
}

fn resolve_schedules(schedule: Option<&str>, seeds: Option<u64>) -> Result<Vec<Schedule>> {
    match schedule.unwrap_or("round-robin") {
        "round-robin" => {
            if seeds.is_some() {
                bail!("--seeds only applies to --schedule random");
            }
            Ok(vec![Schedule::RoundRobin])
        }
        "random" => {
            let count = seeds.unwrap_or(1);
            if count == 0 {
                bail!("--seeds must be at least 1");
            }
            Ok((0..count).map(Schedule::Random).collect())
        }
        other => bail!("unknown schedule `{other}` (use round-robin or random)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_from_flags_override_the_config_file() {
        let file = BTreeMap::from([("n".to_string(), 2i64), ("m".to_string(), 9)]);
        let flags = vec!["n=4".to_string()];
        let out = resolve_params(&flags, &file).unwrap();
        assert_eq!(out["n"], Value::int(4));
        assert_eq!(out["m"], Value::int(9));
    }

    #[test]
    fn comma_groups_and_spaces_are_accepted() {
        let out = resolve_params(&["n=4, m=2".to_string()], &BTreeMap::new()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out["m"], Value::int(2));
    }

    #[test]
    fn malformed_params_are_rejected() {
        assert!(resolve_params(&["n".to_string()], &BTreeMap::new()).is_err());
        assert!(resolve_params(&["n=x".to_string()], &BTreeMap::new()).is_err());
    }

    #[test]
    fn random_schedule_expands_to_one_run_per_seed() {
        let s = resolve_schedules(Some("random"), Some(3)).unwrap();
        assert_eq!(
            s,
            vec![Schedule::Random(0), Schedule::Random(1), Schedule::Random(2)]
        );
    }

    #[test]
    fn seeds_without_random_schedule_is_an_error() {
        assert!(resolve_schedules(None, Some(3)).is_err());
        assert!(resolve_schedules(Some("round-robin"), Some(3)).is_err());
    }

    #[test]
    fn default_schedule_is_a_single_round_robin_run() {
        assert_eq!(resolve_schedules(None, None).unwrap(), vec![Schedule::RoundRobin]);
    }
}
