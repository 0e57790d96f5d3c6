use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ransec_core::agents::{assess_compliance, run_compliance_loop, Agents, RetrievalMode};
use ransec_core::enforcement::Verdict;
use ransec_core::eval::{render_table, BenchmarkManifest};
use ransec_core::llm_provider::ChatProvider;

use crate::api::{router, AppState};
use crate::config::ServiceConfig;
use crate::engine::{build_chat, build_embedder, load_knowledge, replay_provider, Engine};

const DEFAULT_CONFIG: &str = "ransec.toml";

#[derive(Debug, Parser)]
#[command(name = "ransec", version, about = "Security-compliance checks for RAN component configurations")]
pub struct Cli {
    /// Service configuration; defaults to ./ransec.toml when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ingest this directory in memory instead of using the persisted knowledge store.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ChatArgs {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<RetrievalMode>,
    /// Serve model responses from a recorded transcript.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Model name used for replay fingerprints; defaults to the transcript's.
    #[arg(long, requires = "replay")]
    pub model: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a directory of specification documents into the knowledge store.
    Ingest { dir: PathBuf },
    /// One assessment pass; prints the compliance report.
    Assess {
        file: PathBuf,
        #[command(flatten)]
        chat: ChatArgs,
    },
    /// Assessment with reflection until convergence or the iteration cap.
    Loop {
        file: PathBuf,
        #[command(flatten)]
        chat: ChatArgs,
        /// Print the full outcome as JSON.
        #[arg(long)]
        json: bool,
        /// Record the outcome for this registered component, creating an action when needed.
        #[arg(long)]
        component: Option<String>,
    },
    /// Replay a benchmark manifest, print the table and check it against the expectations.
    Bench { manifest: PathBuf },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Policy source operations.
    Hub {
        #[command(subcommand)]
        command: HubCommand,
    },
    /// Security event operations.
    Events {
        #[command(subcommand)]
        command: EventsCommand,
    },
    /// Approve a pending action and apply it.
    Approve {
        action_id: String,
        #[arg(long, default_value = "cli")]
        operator: String,
    },
    Reject {
        action_id: String,
        #[arg(long, default_value = "cli")]
        operator: String,
    },
    /// Restore the last safe configuration of a component.
    Rollback { component: String },
    /// List actions awaiting a decision.
    Pending,
    /// Audit trail of one component.
    History { component: String },
    /// Compliance summary per component.
    Components,
}

#[derive(Debug, Subcommand)]
pub enum HubCommand {
    /// Poll every source once, ingest changes and re-assess registered components.
    Poll {
        #[arg(long)]
        no_reassess: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum EventsCommand {
    /// Correlate a JSONL event file with the configured rules.
    Ingest {
        file: PathBuf,
        /// Re-assess the components named by each matched pattern.
        #[arg(long)]
        dispatch: bool,
    },
}

fn parse_mode(s: &str) -> Result<RetrievalMode, String> {
    s.parse()
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ServiceConfig> {
    match path {
        Some(p) => Ok(ServiceConfig::load(p)?),
        None if Path::new(DEFAULT_CONFIG).exists() => Ok(ServiceConfig::load(Path::new(DEFAULT_CONFIG))?),
        None => Ok(ServiceConfig::default()),
    }
}

fn chat_for(config: &ServiceConfig, args: &ChatArgs) -> anyhow::Result<Arc<dyn ChatProvider>> {
    let chat = match &args.replay {
        Some(path) => Some(replay_provider(path, args.model.as_deref())?),
        None => build_chat(&config.chat)?,
    };
    chat.context("no chat backend configured; set [chat] in the configuration or pass --replay")
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

/// Runs one command; the returned error maps to exit code 1.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Assess { file, chat } => {
            let text = read(&file)?;
            let embedder = build_embedder(&config.embedder);
            let agents = Agents::single(chat_for(&config, &chat)?, embedder.clone());
            let mode = chat.mode.unwrap_or(config.default_mode);
            let kb = load_knowledge(&config, embedder.as_ref(), cli.corpus.as_deref())?;
            let store = (mode != RetrievalMode::NoRag).then_some(&kb);
            let run = assess_compliance(&agents, &config.agent, mode, &text, store, None, None)?;
            print!("{}", run.report.to_markdown());
        }
        Command::Loop { file, chat, json, component } => {
            let text = read(&file)?;
            let outcome = match component {
                Some(id) => {
                    let engine = Engine::open(config.clone(), Some(chat_for(&config, &chat)?))?;
                    let run_id = engine.submit(&id, &text, chat.mode, ransec_core::agents::TriggerKind::CodeSubmission, None)?;
                    let run = engine.execute(&run_id)?;
                    if let Some(action) = &run.action_id {
                        eprintln!("run {run_id}: action {action} recorded");
                    }
                    match run.outcome {
                        Some(o) => o,
                        None => bail!("run {run_id} failed: {}", run.error.unwrap_or_default()),
                    }
                }
                None => {
                    let embedder = build_embedder(&config.embedder);
                    let agents = Agents::single(chat_for(&config, &chat)?, embedder.clone());
                    let mode = chat.mode.unwrap_or(config.default_mode);
                    let kb = load_knowledge(&config, embedder.as_ref(), cli.corpus.as_deref())?;
                    let store = (mode != RetrievalMode::NoRag).then_some(&kb);
                    run_compliance_loop(&agents, &config.agent, mode, &text, store, None, None)?
                }
            };
            if json {
                print_json(&outcome);
            } else {
                print!("{}", outcome.final_report.to_markdown());
                println!(
                    "\nLoop: {:?} after {} iteration(s), {:.2} s",
                    outcome.outcome,
                    outcome.iterations_used,
                    outcome.total_latency.as_secs_f64()
                );
            }
        }
        Command::Bench { manifest } => {
            let m = BenchmarkManifest::load(&manifest)?;
            let report = m.run()?;
            print!("{}", render_table(&report));
            m.check(&report)?;
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| config.server.bind.clone());
            let operator_token = match &config.server.operator_token_env {
                Some(var) => Some(std::env::var(var).with_context(|| format!("operator token variable {var} is not set"))?),
                None => None,
            };
            let engine = Arc::new(Engine::open(config, None)?);
            let app = router(AppState { engine, operator_token });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("cannot bind {bind}"))?;
                tracing::info!(%bind, "serving");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        command => {
            let engine = Engine::open(config, None)?;
            match command {
                Command::Ingest { dir } => print_json(&engine.ingest_dir(&dir)?),
                Command::Hub { command: HubCommand::Poll { no_reassess } } => {
                    let (changes, runs) = engine.hub_poll(!no_reassess)?;
                    for c in &changes {
                        println!("{:?} {}/{}", c.change, c.source_id, c.filename);
                    }
                    for r in &runs {
                        println!("run {} {} {:?}", r.run_id, r.component_id, r.state);
                    }
                }
                Command::Events { command: EventsCommand::Ingest { file, dispatch } } => {
                    let (rejected, patterns, runs) = engine.events_ingest(&file, dispatch)?;
                    println!("{rejected} line(s) rejected, {} pattern(s)", patterns.len());
                    for p in &patterns {
                        println!("{}", p.summary());
                    }
                    for r in &runs {
                        println!("run {} {} {:?}", r.run_id, r.component_id, r.state);
                    }
                }
                Command::Approve { action_id, operator } => print_json(&engine.decide(&action_id, Verdict::Approve, &operator)?),
                Command::Reject { action_id, operator } => print_json(&engine.decide(&action_id, Verdict::Reject, &operator)?),
                Command::Rollback { component } => print_json(&engine.rollback(&component)?),
                Command::Pending => print_json(&engine.pending()),
                Command::History { component } => print_json(&engine.history(&component)?),
                Command::Components => print_json(&engine.components()),
                Command::Assess { .. } | Command::Loop { .. } | Command::Bench { .. } | Command::Serve { .. } => unreachable!(),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_tree_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_global_flags_after_the_verb() {
        let cli = Cli::try_parse_from(["ransec", "assess", "c.conf", "--mode", "rag", "--replay", "t.jsonl", "--corpus", "docs"]).unwrap();
        assert_eq!(cli.corpus.as_deref(), Some(Path::new("docs")));
        match cli.command {
            Command::Assess { file, chat } => {
                assert_eq!(file, PathBuf::from("c.conf"));
                assert_eq!(chat.mode, Some(RetrievalMode::PlainRag));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["ransec", "assess", "c.conf", "--model", "m"]).is_err());
        assert!(Cli::try_parse_from(["ransec", "events", "ingest", "e.jsonl", "--dispatch"]).is_ok());
    }
}
