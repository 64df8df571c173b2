use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use lstep_core::checks::{run_suite, Suite};
use lstep_core::config::{ConfigFile, RunConfig};
use lstep_core::graph::{
    chronological_split, load_events, load_with_manifest, write_normalized, EventStream, LoadOptions,
};
use lstep_core::model::ModelParams;
use lstep_core::numerics::Checkpoint;
use lstep_core::pe_init::InitialPe;
use lstep_core::training::{bound_report, evaluate_cells, train, EvalInputs, EvalReport, MetricCell, Setting, Strategy};

mod exit;

use exit::Invalid;

#[derive(Parser)]
#[command(name = "lstep", version, about = "Temporal link prediction with learnable positional encodings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize an event CSV and write its manifest.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// generic, or bipartite/jodie for user-item files.
        #[arg(long, default_value = "generic")]
        format: String,
        #[arg(long, default_value_t = 172)]
        d_n: usize,
        #[arg(long, default_value_t = 172)]
        d_e: usize,
    },
    /// Train, evaluate on the test split, and write a run directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Train once per seed, writing `seed-<n>` subdirectories of `--out`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Also write aggregate.json with the mean and standard deviation of each metric over seeds.
        #[arg(long)]
        aggregate: bool,
    },
    /// Evaluate a trained run directory.
    Eval {
        /// Directory written by `train`.
        run_dir: PathBuf,
        /// transductive, inductive or all.
        #[arg(long, default_value = "all")]
        setting: String,
        /// random, historical, inductive or all.
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; defaults to eval_report.json in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run property suites.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON summary here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Event file; overrides the config's dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p).map_err(Invalid::wrap)?,
        None => ConfigFile::default(),
    };
    if let Some(d) = &args.data {
        file.dataset = Some(d.display().to_string());
    }
    if let Some(s) = args.seed {
        file.seed = Some(s);
    }
    let config = file.resolve(args.preset.as_deref()).map_err(Invalid::wrap)?;
    if config.dataset.is_empty() {
        return Err(Invalid::msg("no dataset given (use --data or set `dataset` in the config)"));
    }
    Ok(config)
}

fn load_stream(config: &RunConfig) -> Result<EventStream> {
    let opts = LoadOptions {
        format: config.format.parse().map_err(Invalid::wrap)?,
        node_dim: config.d_n,
        edge_dim: config.d_e,
    };
    let path = Path::new(&config.dataset);
    let stream = load_with_manifest(path, &opts).map_err(Invalid::wrap)?;
    let mut problems = Vec::new();
    if stream.node_dim() != config.d_n {
        problems.push(format!("d_n is {} but the data has {} node feature columns", config.d_n, stream.node_dim()));
    }
    if stream.edge_dim() != config.d_e {
        problems.push(format!("d_e is {} but the data has {} edge feature columns", config.d_e, stream.edge_dim()));
    }
    if !problems.is_empty() {
        return Err(Invalid::msg(problems.join("; ")));
    }
    Ok(stream)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn parse_cells(setting: &str, strategy: &str) -> Result<Vec<(Setting, Strategy)>> {
    let settings = match setting {
        "all" => Setting::ALL.to_vec(),
        s => vec![s.parse().map_err(Invalid::wrap)?],
    };
    let strategies = match strategy {
        "all" => Strategy::ALL.to_vec(),
        s => vec![s.parse().map_err(Invalid::wrap)?],
    };
    Ok(settings
        .iter()
        .flat_map(|&a| strategies.iter().map(move |&b| (a, b)))
        .collect())
}

fn ingest(input: &Path, out: &Path, format: &str, d_n: usize, d_e: usize) -> Result<()> {
    let opts = LoadOptions {
        format: format.parse().map_err(Invalid::wrap)?,
        node_dim: d_n,
        edge_dim: d_e,
    };
    let stream = load_events(input, &opts).map_err(Invalid::wrap)?;
    let stream = stream.with_name(input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let manifest = write_normalized(&stream, out)?;
    print!("{}", manifest.to_text());
    Ok(())
}

fn train_cmd(run: &RunArgs, out: &Path, max_epochs: Option<usize>, seeds: &[u64], aggregate: bool) -> Result<()> {
    let mut config = resolve_config(run)?;
    if let Some(m) = max_epochs {
        config.max_epochs = m;
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(Invalid::msg(problems.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")));
        }
    }
    let stream = load_stream(&config)?;
    if seeds.is_empty() {
        let report = train_one(&stream, &config, out)?;
        if aggregate {
            write(&out.join("aggregate.json"), serde_json::to_string_pretty(&aggregate_reports(&[report]))?)?;
        }
        return Ok(());
    }
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let config = RunConfig { seed, ..config.clone() };
        reports.push(train_one(&stream, &config, &out.join(format!("seed-{seed}")))?);
    }
    if aggregate {
        let summary = aggregate_reports(&reports);
        write(&out.join("aggregate.json"), serde_json::to_string_pretty(&summary)?)?;
        for cell in summary["metrics"].as_array().into_iter().flatten() {
            println!(
                "{} {}: AP {:.4} ± {:.4} ROC-AUC {:.4} ± {:.4} over {} seeds",
                cell["setting"].as_str().unwrap_or_default(),
                cell["strategy"].as_str().unwrap_or_default(),
                cell["ap_mean"].as_f64().unwrap_or(f64::NAN),
                cell["ap_std"].as_f64().unwrap_or(f64::NAN),
                cell["roc_auc_mean"].as_f64().unwrap_or(f64::NAN),
                cell["roc_auc_std"].as_f64().unwrap_or(f64::NAN),
                reports.len()
            );
        }
    }
    Ok(())
}

/// Population mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate_reports(reports: &[EvalReport]) -> serde_json::Value {
    let mut metrics = Vec::new();
    for setting in Setting::ALL {
        for strategy in Strategy::ALL {
            let cells: Vec<&MetricCell> = reports.iter().filter_map(|r| r.cell(setting, strategy)).collect();
            if cells.is_empty() {
                continue;
            }
            let (ap_mean, ap_std) = mean_std(&cells.iter().map(|c| c.ap).collect::<Vec<_>>());
            let (auc_mean, auc_std) = mean_std(&cells.iter().map(|c| c.roc_auc).collect::<Vec<_>>());
            metrics.push(serde_json::json!({
                "setting": setting.as_str(),
                "strategy": strategy.as_str(),
                "runs": cells.len(),
                "ap_mean": ap_mean,
                "ap_std": ap_std,
                "roc_auc_mean": auc_mean,
                "roc_auc_std": auc_std,
            }));
        }
    }
    serde_json::json!({
        "dataset": reports.first().map(|r| r.dataset.clone()).unwrap_or_default(),
        "seeds": reports.iter().map(|r| r.seed).collect::<Vec<_>>(),
        "metrics": metrics,
    })
}

fn train_one(stream: &EventStream, config: &RunConfig, out: &Path) -> Result<EvalReport> {
    let split = chronological_split(stream, config.ratios()).map_err(Invalid::wrap)?;
    log::info!(
        "{} events, {} nodes; split {}/{}/{}; {} new nodes",
        stream.num_events(),
        stream.num_nodes(),
        split.train().len(),
        split.val().len(),
        split.test().len(),
        split.new_nodes.len()
    );
    let outcome = train(stream, &split, config)?;

    let mut cells = vec![(Setting::Transductive, Strategy::Random)];
    if !split.new_nodes.is_empty() {
        cells.push((Setting::Inductive, Strategy::Random));
    }
    let inputs = EvalInputs {
        params: &outcome.params,
        init_pe: &outcome.init_pe,
        stream,
        split: &split,
        config,
    };
    let results = evaluate_cells(inputs, &cells, config.seed)?;

    let mut report = EvalReport::new(&stream.metadata.name, config, &outcome.params);
    report.best_epoch = outcome.best_epoch;
    report.epochs_run = outcome.epochs.len();
    report.loss_trace = outcome.epochs.clone();
    report.metrics = results.into_iter().map(MetricCell::from).collect();
    report.bound_check = Some(bound_report(&outcome.params, stream, &split, config)?);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut ckpt = outcome.params.to_checkpoint();
    outcome.init_pe.to_checkpoint(&mut ckpt);
    write(&out.join("checkpoint.bin"), ckpt.to_bytes())?;
    write(&out.join("config.toml"), config.to_toml())?;
    write(&out.join("report.json"), report.to_json())?;
    write(&out.join("loss_trace.csv"), report.loss_trace_csv())?;
    for m in &report.metrics {
        println!("{} {}: AP {:.4} ROC-AUC {:.4}", m.setting, m.strategy, m.ap, m.roc_auc);
    }
    println!("wrote {}", out.display());
    Ok(report)
}

fn eval_cmd(run_dir: &Path, setting: &str, strategy: &str, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let cells = parse_cells(setting, strategy)?;
    let config_path = run_dir.join("config.toml");
    let text = fs::read_to_string(&config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let config = RunConfig::parse(&text).map_err(Invalid::wrap)?;
    let ckpt_path = run_dir.join("checkpoint.bin");
    let bytes = fs::read(&ckpt_path).with_context(|| format!("reading {}", ckpt_path.display()))?;
    let ckpt = Checkpoint::from_bytes(&bytes).map_err(Invalid::wrap)?;

    let mut params = ModelParams::pass_through(config.dims(), config.share_pe_mlp);
    let expected = params.shape_hash();
    let found = ModelParams::checkpoint_shape_hash(&ckpt);
    if expected != found {
        return Err(Invalid::msg(format!(
            "checkpoint shape hash {found} does not match the configuration ({expected})"
        )));
    }
    params.load_checkpoint(&ckpt).map_err(Invalid::wrap)?;
    let stream = load_stream(&config)?;
    let init_pe = InitialPe::from_checkpoint(&ckpt).unwrap_or_else(|| InitialPe::zero(stream.num_nodes(), config.d_p));
    if init_pe.num_nodes() != stream.num_nodes() {
        return Err(Invalid::msg(format!(
            "checkpoint covers {} nodes but the data has {}",
            init_pe.num_nodes(),
            stream.num_nodes()
        )));
    }
    let split = chronological_split(&stream, config.ratios()).map_err(Invalid::wrap)?;
    let inputs = EvalInputs {
        params: &params,
        init_pe: &init_pe,
        stream: &stream,
        split: &split,
        config: &config,
    };
    let seed = seed.unwrap_or(config.seed);
    let results = evaluate_cells(inputs, &cells, seed)?;
    let mut report = EvalReport::new(&stream.metadata.name, &config, &params);
    report.seed = seed;
    report.metrics = results.into_iter().map(MetricCell::from).collect();
    for m in &report.metrics {
        println!(
            "{} {}: AP {:.4} ROC-AUC {:.4} ({} positives, {} fallbacks)",
            m.setting, m.strategy, m.ap, m.roc_auc, m.positives, m.negative_fallbacks
        );
    }
    let default_out = run_dir.join("eval_report.json");
    write(out.unwrap_or(&default_out), report.to_json())?;
    Ok(())
}

fn check_cmd(suite: &str, seed: u64, out: Option<&Path>) -> Result<bool> {
    let suite: Suite = suite.parse().map_err(Invalid::wrap)?;
    let results = run_suite(suite, seed);
    for r in &results {
        eprintln!(
            "{} {}/{}: measured {:.3e} (threshold {:.3e}) {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.name,
            r.measured,
            r.threshold,
            r.detail
        );
    }
    let passed = results.iter().all(|r| r.passed);
    let summary = serde_json::json!({
        "suite": suite.as_str(),
        "seed": seed,
        "passed": passed,
        "checks": results,
    });
    let text = serde_json::to_string_pretty(&summary)?;
    println!("{text}");
    if let Some(p) = out {
        write(p, &text)?;
    }
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest {
            input,
            out,
            format,
            d_n,
            d_e,
        } => ingest(&input, &out, &format, d_n, d_e).map(|_| true),
        Command::Train {
            run,
            out,
            max_epochs,
            seeds,
            aggregate,
        } => train_cmd(&run, &out, max_epochs, &seeds, aggregate).map(|_| true),
        Command::Eval {
            run_dir,
            setting,
            strategy,
            seed,
            out,
        } => eval_cmd(&run_dir, &setting, &strategy, seed, out.as_deref()).map(|_| true),
        Command::Check { suite, seed, out } => check_cmd(&suite, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::VALIDATION } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::from(exit::SUCCESS),
        Ok(false) => ExitCode::from(exit::RUNTIME),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}
