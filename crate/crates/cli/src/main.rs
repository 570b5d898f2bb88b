use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use likert_latent::diagnostics::{acf_table, write_acf_csv};
use likert_latent::io::{read_likert_csv, read_trace_csv, write_likert_csv, write_trace_csv, EstimateReport, ModelSpec};
use likert_latent::model::simulate;
use likert_latent::rng::{derive_seed, replicate_seed, SIMULATION};
use likert_latent::stem::{run_stem, StemConfig};
use likert_latent::study::{run_study, Method, StudyConfig};

#[derive(Parser)]
#[command(name = "likert-latent", version, about = "Longitudinal Likert latent variable estimation")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset from a study configuration.
    Simulate(SimulateArgs),
    /// Estimate parameters from a long-format CSV panel.
    #[command(alias = "analyze")]
    Estimate(EstimateArgs),
    /// Run the Monte Carlo RMSE study.
    Study(StudyArgs),
    /// Autocorrelations of a StEM trace.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cr,
    Stem,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving `data.csv` and `truth.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Data CSV with header `subject,item,time,response`.
    data: PathBuf,
    #[arg(long, value_enum, default_value = "cr")]
    method: MethodArg,
    /// Category count; defaults to the largest observed response.
    #[arg(long)]
    num_categories: Option<usize>,
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    /// Defaults to 10% of the iterations.
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value_t = 10)]
    gibbs_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving `estimate.json` (and `trace.csv` for StEM);
    /// the estimate is printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restricts the study to one method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    gibbs_sweeps: Option<usize>,
    /// Directory receiving `rmse.csv` and `rmse.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnosticsArgs {
    /// Trace CSV with header `iteration,parameter,value`.
    trace: PathBuf,
    #[arg(long, default_value_t = 50)]
    max_lag: usize,
    /// Directory receiving `acf.csv`; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn classify(error: likert_latent::Error) -> Failure {
    let code = if error.is_input_error() { 2 } else { 1 };
    Failure { code, error: error.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(input)?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(input)
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(input)?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(input)?;
    Ok(BufWriter::new(file))
}

fn write_json<T: serde::Serialize>(mut w: impl Write, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| input(anyhow!(e)))?;
    writeln!(w).and_then(|_| w.flush()).map_err(input)
}

fn simulate_cmd(args: SimulateArgs) -> CliResult<()> {
    let mut config: StudyConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(classify)?;
    if config.replicates != 1 {
        return Err(input(anyhow!("simulate expects a configuration with one replicate")));
    }
    let (params, cuts) = config.truth().map_err(classify)?;
    // same stream as replicate 1 of a study with this configuration
    let seed = derive_seed(replicate_seed(config.seed, 0), &[SIMULATION]);
    let (_, data) = simulate(&params, &cuts, config.subjects, config.times, seed).map_err(classify)?;
    write_likert_csv(create(&args.out, "data.csv")?, &data).map_err(classify)?;
    write_json(create(&args.out, "truth.json")?, &ModelSpec::from_parts(&params, &cuts))?;
    log::info!("wrote {} rows to {}", data.subjects() * data.items() * data.times(), args.out.display());
    Ok(())
}

fn estimate_cmd(args: EstimateArgs) -> CliResult<()> {
    let file = File::open(&args.data)
        .with_context(|| format!("opening {}", args.data.display()))
        .map_err(input)?;
    let data = read_likert_csv(BufReader::new(file), args.num_categories).map_err(classify)?;
    let (report, chain) = match args.method {
        MethodArg::Cr => {
            let (fit, cuts) = likert_latent::reconstruction::estimate(&data).map_err(classify)?;
            let mut report = EstimateReport::from_fit(&fit, Some(cuts.pooled()));
            report.warnings = cuts
                .repairs()
                .iter()
                .map(|r| format!("item {} cut {}: tied estimate moved up by 1e-6", r.item, r.cut))
                .collect();
            (report, None)
        }
        MethodArg::Stem => {
            let mut config = StemConfig::new(args.iterations, args.seed);
            if let Some(b) = args.burn_in {
                config.burn_in = b;
            }
            config.gibbs_sweeps = args.gibbs_sweeps;
            config.validate().map_err(classify)?;
            let chain = run_stem(&data, &config).map_err(classify)?;
            (EstimateReport::from_chain(&chain), Some(chain))
        }
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    match &args.out {
        Some(dir) => {
            write_json(create(dir, "estimate.json")?, &report)?;
            if let Some(chain) = &chain {
                write_trace_csv(create(dir, "trace.csv")?, chain).map_err(classify)?;
            }
        }
        None => write_json(io::stdout().lock(), &report)?,
    }
    Ok(())
}

fn study_cmd(args: StudyArgs) -> CliResult<()> {
    let mut config: StudyConfig = read_json(&args.config)?;
    if let Some(m) = args.replicates {
        config.replicates = m;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(m) = args.method {
        config.methods = vec![match m {
            MethodArg::Cr => Method::Cr,
            MethodArg::Stem => Method::Stem,
        }];
    }
    if let Some(r) = args.iterations {
        config.stem.iterations = r;
    }
    if let Some(b) = args.burn_in {
        config.stem.burn_in = b;
    }
    if let Some(g) = args.gibbs_sweeps {
        config.stem.gibbs_sweeps = g;
    }
    let result = run_study(&config).map_err(classify)?;
    let report = &result.report;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &args.out {
        let mut csv = create(dir, "rmse.csv")?;
        csv.write_all(report.to_csv().as_bytes()).and_then(|_| csv.flush()).map_err(input)?;
        let mut txt = create(dir, "rmse.txt")?;
        txt.write_all(table.as_bytes()).and_then(|_| txt.flush()).map_err(input)?;
    }
    if report.failures > 0 {
        for o in result.outcomes.iter().filter(|o| o.failure.is_some()) {
            log::error!("replicate {}: {}", o.index + 1, o.failure.as_deref().unwrap_or_default());
        }
        return Err(Failure {
            code: 1,
            error: anyhow!("{} of {} replicates failed", report.failures, config.replicates),
        });
    }
    Ok(())
}

fn diagnostics_cmd(args: DiagnosticsArgs) -> CliResult<()> {
    let file = File::open(&args.trace)
        .with_context(|| format!("opening {}", args.trace.display()))
        .map_err(input)?;
    let trace = read_trace_csv(BufReader::new(file)).map_err(classify)?;
    let rows = acf_table(&trace, args.max_lag).map_err(classify)?;
    match &args.out {
        Some(dir) => write_acf_csv(create(dir, "acf.csv")?, &rows),
        None => write_acf_csv(io::stdout().lock(), &rows),
    }
    .map_err(classify)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Study(a) => study_cmd(a),
        Command::Diagnostics(a) => diagnostics_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
