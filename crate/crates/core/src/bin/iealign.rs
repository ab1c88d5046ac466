use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iealign::augment::CandidateKind;
use iealign::client::{BackendConfig, MockPolicy};
use iealign::ingest::{mix_general, MixturePlan, DEFAULT_CAP};
use iealign::pipeline::{self, PipelineConfig};
use iealign::{Error, Result, TaskKind};

#[derive(Parser)]
#[command(name = "iealign", version, about = "Build and evaluate IE alignment corpora")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// echo | noisy:<p> | fixed:<text> | live:<model>@<endpoint>
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read, validate and filter datasets into <out>/<dataset>.jsonl.
    Ingest {
        /// Reader spec file ([[reader]] tables).
        #[arg(long, conflicts_with = "config")]
        spec: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Proportional mixture of ingested datasets.
    Mix {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// dataset=count, repeatable.
        #[arg(long = "quota", value_parser = parse_quota)]
        quotas: Vec<(String, usize)>,
        /// General-domain JSON-lines records to mix in.
        #[arg(long)]
        general: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        ie_rate: f64,
    },
    BuildSft(RunArgs),
    BuildDpo(RunArgs),
    /// Score predictions ({id, output} lines) against canonical gold.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: TaskKind,
        /// Format name; the task's evaluation format by default.
        #[arg(long)]
        format: Option<String>,
    },
    /// Composition report of an SFT corpus.
    Stats { corpus: PathBuf },
    /// Generate review candidates, or apply decisions to them.
    Review {
        #[arg(long)]
        candidates: PathBuf,
        /// Generate candidates of this kind instead of applying decisions.
        #[arg(long, value_parser = ["descriptions", "formats"])]
        generate: Option<String>,
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskKind>,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        formats: Option<PathBuf>,
        #[arg(long, default_value = "review_audit.jsonl")]
        audit: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        backend: Option<String>,
    },
}

fn parse_quota(s: &str) -> std::result::Result<(String, usize), String> {
    let (k, v) = s.split_once('=').ok_or("expected dataset=count")?;
    Ok((k.to_string(), v.parse().map_err(|e| format!("{e}"))?))
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    TaskKind::ALL
        .into_iter()
        .find(|t| t.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown task {s}"))
}

fn parse_backend(s: &str) -> Result<BackendConfig> {
    let mock = |policy| Ok(BackendConfig::Mock { policy, seed: 0 });
    match s.split_once(':') {
        None if s == "echo" || s == "mock" => mock(MockPolicy::EchoGold),
        Some(("noisy", p)) => mock(MockPolicy::NoisyGold(
            p.parse().map_err(|_| Error::config(format!("bad noise rate {p}")))?,
        )),
        Some(("fixed", t)) => mock(MockPolicy::FixedText(t.to_string())),
        Some(("live", rest)) => {
            let (model, endpoint) = rest
                .split_once('@')
                .ok_or_else(|| Error::config("live backend is live:<model>@<endpoint>"))?;
            Ok(BackendConfig::Live {
                endpoint: endpoint.to_string(),
                model: model.to_string(),
                api_key_env: "IEALIGN_API_KEY".into(),
                qps: None,
            })
        }
        _ => Err(Error::config(format!("unknown backend {s}"))),
    }
}

fn load_run(a: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.out = o.clone();
    }
    if let Some(b) = &a.backend {
        cfg.backend = parse_backend(b)?;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v)?;
    // A closed pipe (e.g. `| head`) is not an error.
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Ingest { spec, config, out, seed } => {
            let mut cfg = match (config, spec) {
                (Some(c), _) => PipelineConfig::load(&c)?,
                (None, Some(s)) => PipelineConfig {
                    reader_files: vec![s],
                    ..Default::default()
                },
                (None, None) => return Err(Error::config("ingest needs --spec or --config")),
            };
            cfg.out = out;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            print_json(&pipeline::ingest_to_dir(&cfg)?)
        }
        Cmd::Mix { input, out, cap, seed, quotas, general, ie_rate } => {
            let plan = MixturePlan {
                cap,
                quotas: quotas.into_iter().collect(),
                seed,
            };
            let stats = pipeline::mix_dir(&input, &plan, &out)?;
            if let Some(g) = general {
                let ie: Vec<serde_json::Value> = iealign::jsonl::read(&out)?;
                let gen: Vec<serde_json::Value> = iealign::jsonl::read(&g)?;
                let mixed = mix_general(&ie, &gen, ie_rate, seed)?;
                iealign::jsonl::write(&out, &mixed)?;
            }
            print_json(&stats)
        }
        Cmd::BuildSft(a) => print_json(&pipeline::build_sft(&load_run(&a)?)?),
        Cmd::BuildDpo(a) => print_json(&pipeline::build_dpo(&load_run(&a)?)?),
        Cmd::Evaluate { pred, gold, task, format } => {
            let spec = match format {
                Some(name) => iealign::assets::format_by_name(&name)
                    .ok_or_else(|| Error::config(format!("unknown format {name}")))?,
                None => iealign::assets::eval_format(task),
            };
            print_json(&pipeline::evaluate_files(&pred, &gold, task, spec)?)
        }
        Cmd::Stats { corpus } => print_json(&pipeline::stats_file(&corpus)?),
        Cmd::Review { candidates, generate, task, count, decisions, pools, formats, audit, seed, backend } => {
            if let Some(kind) = generate {
                let task = task.ok_or_else(|| Error::config("--generate needs --task"))?;
                let kind = if kind == "formats" { CandidateKind::FormatTemplate } else { CandidateKind::TaskDescription };
                let cfg = PipelineConfig {
                    backend: backend.as_deref().map(parse_backend).transpose()?.unwrap_or_default(),
                    ..Default::default()
                };
                let (client, _) = cfg.client()?;
                let report = pipeline::generate_candidates(kind, task, count, pools.as_deref(), &client, seed)?;
                iealign::jsonl::write(&candidates, &report.candidates)?;
                for e in &report.errors {
                    eprintln!("warning: {e}");
                }
                println!("{} candidates written to {}", report.candidates.len(), candidates.display());
                return Ok(());
            }
            let decisions = decisions.ok_or_else(|| Error::config("review needs --decisions or --generate"))?;
            print_json(&pipeline::apply_review(&candidates, &decisions, pools.as_deref(), formats.as_deref(), Path::new(&audit))?)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let result = run(Cli::parse().cmd);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(pipeline::exit_code(&result) as u8)
}
