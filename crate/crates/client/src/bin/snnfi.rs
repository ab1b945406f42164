use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use snnfi_client::{parse_fault_model, Client};
use snnfi_core::campaign::DroppedFault;
use snnfi_core::io::{
    export_plot_table, export_results, import_results, load_campaign_config, load_dataset, load_network,
    ResolvedRound,
};
use snnfi_core::{CampaignOptions, CampaignResults, Network, RoundLabel, Sample};
use tracing_subscriber::EnvFilter;

/// Fault-injection campaigns for spiking neural networks.
#[derive(Parser)]
#[command(name = "snnfi", version, about)]
struct Cli {
    /// Service URL; an in-process server is started when omitted.
    #[arg(long, global = true, env = "SNNFI_SERVER")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fault-free accuracy of a network on a dataset.
    Golden {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        no_parallel: bool,
    },
    /// Run the campaign described by a configuration file.
    Run {
        config: PathBuf,
        /// Results file (JSON).
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the plot table (CSV).
        #[arg(long)]
        plots: Option<PathBuf>,
        #[command(flatten)]
        options: OptionFlags,
    },
    /// One single-fault round per element of a layer.
    Complete {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Fault model, e.g. `dead_neuron`, `threshold:0.5`, `bitflip_synapse:7`.
        #[arg(long)]
        fault: String,
        /// Layer index or name.
        #[arg(long)]
        layer: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
        #[command(flatten)]
        options: OptionFlags,
    },
    /// Flatten a results file into the plot table.
    ExportPlots {
        results: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check a configuration, its network and dataset, and report dropped faults.
    Validate { config: PathBuf },
    /// Run the service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
}

/// Overrides for campaign options.
#[derive(Args, Clone, Default)]
struct OptionFlags {
    #[arg(long)]
    no_late_start: bool,
    #[arg(long)]
    no_early_stop: bool,
    /// Early-stop tolerance (1-norm of the output difference).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    no_parallel: bool,
    /// Keep faulty output records in the results file.
    #[arg(long)]
    save_outputs: bool,
    #[arg(long)]
    misprediction_tolerance: Option<f64>,
    /// Seed for random fault sites.
    #[arg(long)]
    seed: Option<u64>,
}

impl OptionFlags {
    fn apply(&self, mut o: CampaignOptions) -> CampaignOptions {
        o.late_start &= !self.no_late_start;
        o.early_stop &= !self.no_early_stop;
        o.parallel &= !self.no_parallel;
        o.save_outputs |= self.save_outputs;
        if let Some(tol) = self.tol {
            o.tol = tol;
        }
        if let Some(b) = self.batch_size {
            o.batch_size = b;
        }
        if let Some(m) = self.misprediction_tolerance {
            o.misprediction_tolerance = m;
        }
        if let Some(s) = self.seed {
            o.seed = s;
        }
        o
    }
}

/// Finished normally, but some faults were dropped.
const EXIT_DROPPED: u8 = 2;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn connect(server: Option<String>) -> Result<Client> {
    let client = match server {
        Some(url) => Client::new(url),
        None => {
            let (addr, _) = snnfi_server::spawn_ephemeral().await.context("starting embedded server")?;
            Client::new(format!("http://{addr}"))
        }
    };
    client.health().await.with_context(|| format!("service at {} is not reachable", client.base_url()))?;
    Ok(client)
}

async fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::ExportPlots { results, output } => {
            let results = import_results(&results)?;
            export_plot_table(&results, &output)?;
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { listen } => {
            let listener = tokio::net::TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            snnfi_server::serve(listener, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Golden { model, dataset, no_parallel } => {
            let network = load_network(&model)?;
            let data = load_dataset(&dataset, &network.clock)?;
            let client = connect(cli.server).await?;
            let golden = client.golden(&network, &data, !no_parallel).await?;
            let correct = golden.predictions.iter().zip(&golden.labels).filter(|(p, l)| p == l).count();
            println!("golden accuracy: {:.4} ({correct}/{})", golden.accuracy, data.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, output, plots, options } => {
            let config = load_campaign_config(&config)?;
            let network = load_network(&config.model)?;
            let data = load_dataset(&config.dataset, &network.clock)?;
            let (rounds, dropped) = config.resolve(&network);
            let options = options.apply(config.options.clone());
            let client = connect(cli.server).await?;
            let results = execute(&client, &network, options, rounds, &data, dropped).await?;
            finish(&results, &output, plots.as_deref())
        }
        Command::Complete { model, dataset, fault, layer, output, plots, options } => {
            let model_spec = parse_fault_model(&fault)?;
            let network = load_network(&model)?;
            let data = load_dataset(&dataset, &network.clock)?;
            let mut dropped = Vec::new();
            let mut rounds = Vec::new();
            match resolve_layer(&network, &layer) {
                Some(layer) => rounds.push(ResolvedRound::Complete { model: model_spec, layer }),
                None => dropped.push(DroppedFault {
                    round: None,
                    model: model_spec.name().to_string(),
                    sites: Vec::new(),
                    reason: format!("no such layer `{layer}`"),
                }),
            }
            let client = connect(cli.server).await?;
            let options = options.apply(CampaignOptions::default());
            let results = execute(&client, &network, options, rounds, &data, dropped).await?;
            finish(&results, &output, plots.as_deref())
        }
        Command::Validate { config } => {
            let config = load_campaign_config(&config)?;
            let network = load_network(&config.model)?;
            let data = load_dataset(&config.dataset, &network.clock)?;
            config.options.validate()?;
            let (rounds, mut dropped) = config.resolve(&network);
            let client = connect(cli.server).await?;
            let id = client.create_campaign(&network, &config.options).await?;
            submit(&client, id, rounds).await?;
            let prep = client.rounds(id).await?;
            client.delete(id).await?;
            dropped.extend(prep.dropped);
            println!(
                "network `{}`: {} layers; dataset: {} samples; {} valid rounds",
                network.name,
                network.len(),
                data.len(),
                prep.rounds.len()
            );
            report_dropped(&dropped);
            Ok(if dropped.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_DROPPED) })
        }
    }
}

fn resolve_layer(network: &Network, layer: &str) -> Option<usize> {
    match layer.parse::<usize>() {
        Ok(i) => Some(i),
        Err(_) => network.layer_index(layer),
    }
}

async fn submit(client: &Client, id: uuid::Uuid, rounds: Vec<ResolvedRound>) -> Result<()> {
    for round in rounds {
        match round {
            ResolvedRound::Faults(faults) => {
                client.then_inject(id, &faults).await?;
            }
            ResolvedRound::Complete { model, layer } => {
                client.inject_complete(id, &model, layer).await?;
            }
        }
    }
    Ok(())
}

async fn execute(
    client: &Client,
    network: &Network,
    options: CampaignOptions,
    rounds: Vec<ResolvedRound>,
    data: &[Sample],
    dropped: Vec<DroppedFault>,
) -> Result<CampaignResults> {
    options.validate()?;
    let id = client.create_campaign(network, &options).await?;
    submit(client, id, rounds).await?;
    let mut results = client.run(id, data).await?;
    client.delete(id).await?;
    // drops found while resolving layer names come first
    results.dropped.splice(0..0, dropped);
    Ok(results)
}

fn report_dropped(dropped: &[DroppedFault]) {
    for d in dropped {
        let round = d.round.map_or_else(|| "-".to_string(), |r| r.to_string());
        eprintln!("warning: dropped `{}` fault (round {round}): {}", d.model, d.reason);
    }
}

fn finish(results: &CampaignResults, output: &Path, plots: Option<&Path>) -> Result<ExitCode> {
    export_results(results, output)?;
    if let Some(plots) = plots {
        export_plot_table(results, plots)?;
    }
    let critical = results.rounds.iter().filter(|r| r.label == RoundLabel::Critical).count();
    println!(
        "golden accuracy {:.4}; {} rounds ({critical} critical, {} benign); {} layer evaluations, {} early stops, {} late starts",
        results.golden_accuracy,
        results.rounds.len(),
        results.rounds.len() - critical,
        results.totals.layer_evaluations,
        results.totals.early_stops,
        results.totals.late_starts,
    );
    if results.clamped_weights > 0 {
        eprintln!("warning: {} weights clamped into the quantizer range", results.clamped_weights);
    }
    report_dropped(&results.dropped);
    println!("wrote {}", output.display());
    Ok(if results.dropped.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_DROPPED) })
}

