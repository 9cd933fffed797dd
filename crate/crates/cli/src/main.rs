use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ernm::Error;
use ernm_cli::studies::write_fit;
use ernm_cli::{
    run_contact_trace_study, run_fit_single, run_latent_class, run_mcar_study, run_simulate,
    ContactTraceSettings, ExperimentKind, RunConfig,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "ernm",
    version,
    about = "Simulate and fit exponential-family random network models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw networks from a model.
    Simulate(Common),
    /// Fit a model to one (possibly partially observed) network.
    Fit(Common),
    /// Refit under increasing completely-at-random missingness.
    McarStudy(Common),
    /// Fit a latent-class model and report class membership.
    LatentClass(Common),
    /// Estimate an infected count from positive contact-tracing samples.
    ContactTraceStudy {
        #[command(flatten)]
        common: Common,
        /// Use the n = 1000 population and six seed mixes.
        #[arg(long)]
        paper_scale: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replicates per condition; overrides the config.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn load(kind: ExperimentKind, common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(kind),
    };
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config is for '{}' but '{}' was requested",
            cfg.kind.name(),
            kind.name()
        )));
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(r) = common.replicates {
        cfg.replicates = Some(r);
    }
    cfg.validate()?;
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", cfg.kind.name())))
}

fn run(cli: Cli) -> Result<serde_json::Value, Error> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(ExperimentKind::Simulate, &c)?;
            let sim = run_simulate(&cfg)?;
            let dir = out_dir(&cfg);
            sim.write(&dir, &cfg)?;
            Ok(json!({ "out": dir, "networks": sim.networks.len() }))
        }
        Command::Fit(c) => {
            let cfg = load(ExperimentKind::FitSingle, &c)?;
            let (res, _) = run_fit_single(&cfg)?;
            let dir = out_dir(&cfg);
            write_fit(&res, &dir, &cfg)?;
            Ok(json!({
                "out": dir,
                "terms": res.labels,
                "eta": res.eta_hat,
                "se": res.se_eta,
                "converged": res.converged,
            }))
        }
        Command::McarStudy(c) => {
            let cfg = load(ExperimentKind::McarStudy, &c)?;
            let res = run_mcar_study(&cfg)?;
            let dir = out_dir(&cfg);
            res.write(&dir, &cfg)?;
            Ok(
                json!({ "out": dir, "rows": res.rows.len(), "failure_fraction": res.failure_fraction() }),
            )
        }
        Command::LatentClass(c) => {
            let cfg = load(ExperimentKind::LatentClass, &c)?;
            let res = run_latent_class(&cfg)?;
            let dir = out_dir(&cfg);
            res.write(&dir, &cfg)?;
            Ok(json!({
                "out": dir,
                "terms": res.labels,
                "eta": res.eta,
                "se": res.se_eta,
                "mu": res.mu,
                "occupied_classes": res.occupied,
            }))
        }
        Command::ContactTraceStudy {
            common,
            paper_scale,
        } => {
            let mut cfg = load(ExperimentKind::ContactTraceStudy, &common)?;
            if paper_scale {
                cfg.contact_trace = ContactTraceSettings::paper();
            }
            let res = run_contact_trace_study(&cfg)?;
            let dir = out_dir(&cfg);
            res.write(&dir, &cfg)?;
            Ok(json!({ "out": dir, "rows": res.rows.len(), "population": res.info }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("json"));
            ExitCode::FAILURE
        }
    }
}
