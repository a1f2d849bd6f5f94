//! `vperc`: command-line experiments for the `voronoi-perc` engine.
//!
//! Each run writes into `<out>/<command>-<digest>/`, where the digest covers
//! the command, its parameters, the seed and the crate version. Re-running
//! the same command finds the existing directory and leaves it untouched.
//!
//! Exit codes: 0 success, 2 bad parameters or input, 3 resource limits or
//! I/O, 4 a requested `--check` failed.

pub mod cli;
pub mod commands;
pub mod plots;
pub mod store;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use voronoi_perc::Error;

use crate::cli::{Cli, COMMANDS};
use crate::store::{address, Check, ExperimentManifest, Staging, SCHEMA, STREAMS};

/// What a finished (or reused) run produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub check: Option<Check>,
    pub reused: bool,
}

/// Process exit code for an engine error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Validation(_) | Error::Format(_) => 2,
        Error::Batch { source, .. } => exit_code(source),
        Error::Resource(_)
        | Error::State(_)
        | Error::WindowTooSmall(_)
        | Error::Fit { .. }
        | Error::Step(_)
        | Error::Io(_) => 3,
    }
}

fn toml_args(table: &toml::Table, skip: &[String]) -> Result<Vec<OsString>, Error> {
    let mut out = Vec::new();
    for (key, value) in table {
        if value.is_table() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if skip.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        let scalar = |v: &toml::Value| -> Result<String, Error> {
            match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                _ => Err(Error::Parameter(format!("config key {key} has an unsupported value"))),
            }
        };
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) if key == "boundary" => {
                for v in items {
                    out.push(flag.clone().into());
                    out.push(scalar(v)?.into());
                }
            }
            toml::Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            v => {
                out.push(flag.into());
                out.push(scalar(v)?.into());
            }
        }
    }
    Ok(out)
}

/// Splices a TOML config file into the argument list. Top-level keys are
/// global flags; a `[command]` table holds that command's flags. Flags
/// already on the command line are left alone.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in text.iter().enumerate() {
        if a == "--config" {
            path = text.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let raw = std::fs::read_to_string(&path).map_err(|e| Error::Parameter(format!("cannot read config {path}: {e}")))?;
    let table: toml::Table = raw.parse().map_err(|e| Error::Parameter(format!("bad config {path}: {e}")))?;
    let Some(pos) = text.iter().position(|a| COMMANDS.contains(&a.as_str())) else { return Ok(args) };
    let mut out: Vec<OsString> = args[..1].to_vec();
    out.extend(toml_args(&table, &text)?);
    out.extend(args[1..=pos].iter().cloned());
    if let Some(sub) = table.get(&text[pos]).and_then(|v| v.as_table()) {
        out.extend(toml_args(sub, &text)?);
    }
    out.extend(args[pos + 1..].iter().cloned());
    Ok(out)
}

/// Runs a parsed command line, reusing an existing result directory.
pub fn execute(cli: &Cli) -> Result<Outcome, Error> {
    let command = &cli.command;
    let params = commands::params(command)?;
    let name = address(command.name(), cli.seed, &params);
    let dir = cli.out.join(&name);
    if dir.join("manifest.json").exists() {
        let m = ExperimentManifest::read(&dir)?;
        return Ok(Outcome { dir, check: m.check, reused: true });
    }
    let st = Staging::new(&cli.out, &name)?;
    let result = if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| Error::Resource(e.to_string()))?
            .install(|| commands::run(command, cli.seed, &st))
    } else {
        commands::run(command, cli.seed, &st)
    };
    let check = match result {
        Ok(c) => c,
        Err(e) => {
            st.abandon();
            return Err(e);
        }
    };
    let manifest = ExperimentManifest {
        schema: SCHEMA,
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cli.seed,
        params,
        streams: STREAMS.iter().map(|s| s.to_string()).collect(),
        outputs: vec![],
        check: check.clone(),
    };
    let dir = st.finish(manifest)?;
    Ok(Outcome { dir, check, reused: false })
}

/// Parses, runs and reports; returns the exit code and the result directory.
pub fn run_args<I, T>(args: I) -> (i32, Option<PathBuf>)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return (exit_code(&e), None);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return (e.exit_code(), None);
        }
    };
    match execute(&cli) {
        Ok(out) => {
            println!("{}", out.dir.display());
            if let Some(c) = &out.check {
                eprintln!("{}: {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            let failed = cli.command.wants_check() && out.check.as_ref().is_some_and(|c| !c.passed);
            (if failed { 4 } else { 0 }, Some(out.dir))
        }
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(&e), None)
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_args(args).0
}

/// Reads the manifest of a result directory.
pub fn manifest(dir: &Path) -> Result<ExperimentManifest, Error> {
    ExperimentManifest::read(dir)
}
