use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cakalman::harness::io::{atomic_write, csv_bytes, fmt_f64, json_bytes, serialize_csv};
use cakalman::harness::{
    draw_samples, generate_onmodel, generate_synthetic, obtain_dataset, run_experiment, summarize, write_artifacts,
    write_results, DataConfig, ExperimentConfig, Method, OutputFormat, SummaryRow,
};
use cakalman::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cakal", version, about = "Computation-aware Kalman filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an on-model dataset from the discretized prior.
    GenerateOnmodel(Common),
    /// Write the noisy sin(x)·exp(−t) dataset.
    GenerateSynthetic(Common),
    /// Run the configured filter and write metrics and per-step states.
    Filter(Common),
    /// Run the smoother matching the configured method.
    Smooth(Common),
    /// Draw posterior sample trajectories.
    Sample(Common),
    /// Sweep the configured method over ranks and seeds.
    Benchmark(Common),
    /// Compare the computation-aware filter against EnKF, ETKF-S and ETKF-L.
    CompareBaselines(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Data seed (overrides `data.seed`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::TooLarge { .. } => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn load(common: &Common) -> cakalman::Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.data.set_seed(seed);
    }
    if let Some(f) = common.format {
        config.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let dir = config.output.dir.clone();
    Ok((config, dir))
}

fn generate(config: &ExperimentConfig, dir: &Path, synthetic: bool) -> cakalman::Result<()> {
    match (&config.data, synthetic) {
        (DataConfig::Synthetic { .. }, true) | (DataConfig::OnModel { .. }, false) => {}
        _ => {
            return Err(Error::Config(format!(
                "this subcommand needs data.kind = \"{}\"",
                if synthetic { "synthetic" } else { "on_model" }
            )))
        }
    }
    let seeds = config.data.seeds();
    for &seed in &seeds {
        let ds = if synthetic {
            generate_synthetic(&config.model, &config.data, seed)?
        } else {
            generate_onmodel(&config.model, &config.data, seed)?
        };
        let target = if seeds.len() == 1 {
            dir.to_path_buf()
        } else {
            dir.join(format!("seed_{seed}"))
        };
        ds.write(&target, &config.model)?;
        println!(
            "wrote {} ({} steps, {} spatial points, {} observed steps)",
            target.display(),
            ds.num_states(),
            ds.points.len(),
            ds.observed_steps().len()
        );
    }
    Ok(())
}

fn print_summary(summary: &[SummaryRow]) {
    println!("{:<8} {:>6} {:<6} {:>5} {:>14} {:>14} {:>12}", "method", "rank", "split", "seeds", "median_mse", "median_nld", "wall_s");
    for s in summary {
        println!(
            "{:<8} {:>6} {:<6} {:>5} {:>14.6e} {:>14.6e} {:>12.4e}",
            s.method,
            s.rank.map_or("-".into(), |r| r.to_string()),
            s.split,
            s.seeds,
            s.median_mse,
            s.median_avg_nld,
            s.median_wall_time_s
        );
    }
}

fn experiment(config: &ExperimentConfig, dir: &Path, methods: &[Method], artifacts: bool) -> cakalman::Result<()> {
    let out = run_experiment(config, methods)?;
    write_results(dir, config.output.format, &out.rows, config)?;
    if artifacts || config.output.artifacts {
        write_artifacts(dir, &out)?;
    }
    let summary = summarize(&out.rows);
    match config.output.format {
        OutputFormat::Csv => atomic_write(&dir.join("summary.csv"), &serialize_csv(&summary)?)?,
        OutputFormat::Json => atomic_write(&dir.join("summary.json"), &json_bytes(&summary)?)?,
    }
    print_summary(&summary);
    for run in &out.runs {
        for w in &run.warnings {
            eprintln!("warning [{} r={:?} seed={}]: {w}", run.method.label(), run.rank, run.seed);
        }
    }
    Ok(())
}

fn sample(config: &ExperimentConfig, dir: &Path) -> cakalman::Result<()> {
    let method = config.solver.method;
    let seed = *config.data.seeds().first().unwrap_or(&0);
    let dataset = obtain_dataset(&config.model, &config.data, seed)?;
    let samples = draw_samples(config, method, &dataset)?;
    let truth_dim = dataset.truth.first().map_or(0, |u| u.len());
    let rows = samples.iter().enumerate().flat_map(|(s, traj)| {
        traj.iter().enumerate().flat_map(move |(k, u)| {
            (0..truth_dim).map(move |i| vec![s.to_string(), k.to_string(), i.to_string(), fmt_f64(u[i])])
        })
    });
    match config.output.format {
        OutputFormat::Csv => atomic_write(
            &dir.join("samples.csv"),
            &csv_bytes(&["sample", "step_index", "state_index", "value"], rows)?,
        )?,
        OutputFormat::Json => {
            let nested: Vec<Vec<Vec<f64>>> = samples
                .iter()
                .map(|t| t.iter().map(|u| u.rows(0, truth_dim).iter().copied().collect()).collect())
                .collect();
            atomic_write(&dir.join("samples.json"), &json_bytes(&nested)?)?
        }
    }
    atomic_write(&dir.join("config.json"), &json_bytes(config)?)?;
    println!("wrote {} samples of {} steps to {}", samples.len(), dataset.num_states(), dir.display());
    Ok(())
}

fn run(cli: Cli) -> cakalman::Result<()> {
    match cli.command {
        Command::GenerateOnmodel(c) => {
            let (config, dir) = load(&c)?;
            generate(&config, &dir, false)
        }
        Command::GenerateSynthetic(c) => {
            let (config, dir) = load(&c)?;
            generate(&config, &dir, true)
        }
        Command::Filter(c) => {
            let (config, dir) = load(&c)?;
            experiment(&config, &dir, &[config.solver.method.as_filter()], true)
        }
        Command::Smooth(c) => {
            let (config, dir) = load(&c)?;
            let m = config
                .solver
                .method
                .as_smoother()
                .ok_or_else(|| Error::Config(format!("{} has no smoother", config.solver.method.label())))?;
            experiment(&config, &dir, &[m], true)
        }
        Command::Sample(c) => {
            let (config, dir) = load(&c)?;
            sample(&config, &dir)
        }
        Command::Benchmark(c) => {
            let (config, dir) = load(&c)?;
            experiment(&config, &dir, &[config.solver.method], false)
        }
        Command::CompareBaselines(c) => {
            let (config, dir) = load(&c)?;
            if config.solver.seed.is_none() {
                return Err(Error::Config("compare-baselines needs solver.seed".into()));
            }
            experiment(
                &config,
                &dir,
                &[Method::Cakf, Method::Enkf, Method::EtkfS, Method::EtkfL],
                false,
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
