mod args;
mod commands;
mod manifest;

use std::fs;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{Report, RunContext};
use manifest::{Io, RunManifest, MANIFEST_FORMAT};

const EXIT_ERROR: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_ERROR),
            };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    let result = match &cli.command {
        Command::Replay(a) => replay(&a.path),
        cmd => execute(&cli, cmd),
    };
    match result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            println!("{}", report.summary_line());
            if report.failed {
                ExitCode::from(EXIT_ERROR)
            } else if report.inconclusive {
                ExitCode::from(EXIT_INCONCLUSIVE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn execute(cli: &Cli, cmd: &Command) -> anyhow::Result<Report> {
    if !(cli.fps > 0.0 && cli.fps.is_finite()) {
        anyhow::bail!("--fps must be positive");
    }
    let ctx = RunContext { seed: cli.seed, fps: cli.fps };
    let mut io = Io::default();
    let report = commands::run(cmd, ctx, &mut io)?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        seed: cli.seed,
        fps: cli.fps,
        params: cmd.clone(),
        inputs: io.inputs,
        outputs: io.outputs,
        summary: report.summary.clone(),
    };
    let target = cli.manifest.clone().or_else(|| {
        manifest.outputs.first().map(|o| {
            let mut p = o.path.clone().into_os_string();
            p.push(".manifest.json");
            p.into()
        })
    });
    match target {
        Some(p) => fs::write(&p, manifest.to_json())
            .map_err(|e| anyhow::anyhow!("cannot write manifest {}: {e}", p.display()))?,
        None => eprintln!("manifest={}", serde_json::to_string(&manifest)?),
    }
    Ok(report)
}

/// Re-run a manifest's command and compare every output hash.
fn replay(path: &std::path::Path) -> anyhow::Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let m = RunManifest::from_json(&text)?;
    for input in &m.inputs {
        let bytes =
            fs::read(&input.path).map_err(|e| anyhow::anyhow!("cannot read input {}: {e}", input.path.display()))?;
        if manifest::sha256_hex(&bytes) != input.sha256 {
            anyhow::bail!("input {} changed since the manifest was written", input.path.display());
        }
    }
    let mut io = Io::default();
    let inner = commands::run(&m.params, RunContext { seed: m.seed, fps: m.fps }, &mut io)?;
    let matched = m.outputs.iter().filter(|o| io.outputs.contains(o)).count();
    let same = matched == m.outputs.len() && io.outputs.len() == m.outputs.len() && inner.summary == m.summary;
    let mut r = Report { lines: inner.lines, ..Default::default() };
    r.summary.push(("replayed".into(), m.command.clone()));
    r.summary.push(("outputs".into(), m.outputs.len().to_string()));
    r.summary.push(("matched".into(), matched.to_string()));
    r.summary.push(("identical".into(), same.to_string()));
    r.failed = !same;
    Ok(r)
}
