use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cpfactor::bench::{self, BenchmarkSpec, SweepVariable};
use cpfactor::estimators::{fit, FitConfig, Method};
use cpfactor::io::{
    read_csv_matrix_series, read_json, read_series, write_csv_series, write_json, write_series,
    FitReport, ModelReport,
};
use cpfactor::linalg::GRAM_FLOOR;
use cpfactor::metrics::explained_variability;
use cpfactor::moments::{lag_scan, TensorTimeSeries};
use cpfactor::simulate::{gen_series, named_config, ConfigName, SimConfig, SimOverrides};
use cpfactor::Error;

#[derive(Parser)]
#[command(name = "cpfactor", version, about = "CP factor models for tensor time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a named or explicit configuration.
    Simulate(SimulateArgs),
    /// Estimate loadings, weights and factors.
    Fit(FitArgs),
    /// Explained fraction of the lag-h moment for h = 1..h_max.
    LagScan(LagScanArgs),
    /// Run a Monte Carlo benchmark described by a JSON spec.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Series file: TTS1 binary, or CSV when the name ends in .csv.
    #[arg(long)]
    input: PathBuf,
    /// Matrix shape ROWS,COLS for CSV input.
    #[arg(long, value_delimiter = ',')]
    csv_dims: Option<Vec<usize>>,
}

impl InputArgs {
    fn load(&self) -> cpfactor::Result<TensorTimeSeries> {
        let is_csv = self
            .input
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let dims = self
                .csv_dims
                .as_ref()
                .filter(|d| d.len() == 2)
                .ok_or_else(|| Error::InvalidArgument("CSV input needs --csv-dims ROWS,COLS".into()))?;
            read_csv_matrix_series(&self.input, dims[0], dims[1])
        } else {
            read_series(&self.input)
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Named configuration (I, II, III, IV or V).
    #[arg(long, conflicts_with = "spec")]
    config: Option<ConfigName>,
    /// JSON file with an explicit simulation configuration.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    r: Option<u64>,
    /// Series length.
    #[arg(long = "len", short = 'T')]
    t: Option<usize>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    phis: Option<Vec<f64>>,
    /// Off-diagonal noise correlation, shared by all modes.
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output series path.
    #[arg(long)]
    out: PathBuf,
    /// Write CSV (one row per time point) instead of TTS1.
    #[arg(long)]
    csv: bool,
    /// Ground-truth model JSON path.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    h: u64,
    #[arg(long, default_value = "HOPE")]
    method: Method,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    #[arg(long, default_value_t = GRAM_FLOOR)]
    gram_floor: f64,
    /// Random starts for ALS and OALS.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Result JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LagScanArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    h_max: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Benchmark spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Directory for rows.csv, summary.csv, timings.csv and trend.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    replications: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
}

fn report_error(kind: &str, message: String) {
    let body = ErrorBody { error: kind, message };
    let json = serde_json::to_string(&body).unwrap_or_else(|_| format!("{{\"error\":\"{kind}\"}}"));
    let _ = writeln!(io::stderr(), "{json}");
}

fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        log::info!("using seed {s}");
        eprintln!("seed: {s}");
        s
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> cpfactor::Result<()> {
    match out {
        Some(path) => write_json(value, path),
        None => {
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> cpfactor::Result<()> {
    let overrides = SimOverrides {
        dims: args.dims,
        r: args.r.map(|r| r as usize),
        t: args.t,
        w: args.w,
        delta: args.delta,
        phis: args.phis,
        psi: args.psi,
        burn_in: args.burn_in,
        seed: Some(seed_or_fresh(args.seed)),
    };
    let cfg = match (&args.config, &args.spec) {
        (Some(name), _) => named_config(*name, &overrides)?,
        (None, Some(path)) => apply_overrides(read_json(path)?, &overrides)?,
        (None, None) => {
            return Err(Error::InvalidArgument("simulate needs --config or --spec".into()))
        }
    };
    let (x, model) = gen_series(&cfg)?;
    if args.csv {
        write_csv_series(&x, &args.out)?;
    } else {
        write_series(&x, &args.out)?;
    }
    if let Some(path) = &args.truth {
        write_json(&ModelReport::new(&cfg, &model), path)?;
    }
    Ok(())
}

fn apply_overrides(mut cfg: SimConfig, o: &SimOverrides) -> cpfactor::Result<SimConfig> {
    if let Some(d) = &o.dims {
        cfg.dims = d.clone();
    }
    if let Some(r) = o.r {
        cfg.r = r;
    }
    if let Some(t) = o.t {
        cfg.t = t;
    }
    if let Some(w) = o.w {
        cfg.w = w;
    }
    if let Some(d) = o.delta {
        cfg.delta = d;
    }
    if let Some(p) = &o.phis {
        cfg.phis = p.clone();
    }
    if let Some(p) = o.psi {
        cfg.psi = vec![p; cfg.dims.len()];
    }
    if let Some(b) = o.burn_in {
        cfg.burn_in = b;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_fit(args: FitArgs) -> cpfactor::Result<()> {
    let x = args.input.load()?;
    let seed = match args.method {
        Method::Als | Method::Oals => Some(seed_or_fresh(args.seed)),
        _ => args.seed,
    };
    let cfg = FitConfig {
        r: args.r as usize,
        h: args.h as usize,
        eps: args.eps,
        max_iter: args.max_iter as usize,
        gram_floor: args.gram_floor,
        seed,
        restarts: args.restarts as usize,
    };
    let start = Instant::now();
    let result = fit(&x, args.method, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let ev = explained_variability(&x, &result)?;
    let report = FitReport::new(&result, x.dims(), cfg.h, ev, seconds);
    emit_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct LagRow {
    h: usize,
    explained_fraction: f64,
}

#[derive(Serialize)]
struct LagScanReport {
    r: usize,
    h_max: usize,
    table: Vec<LagRow>,
    selected_h: usize,
}

fn run_lag_scan(args: LagScanArgs) -> cpfactor::Result<()> {
    let x = args.input.load()?;
    let (table, selected_h) = lag_scan(&x, args.h_max as usize, args.r as usize)?;
    let report = LagScanReport {
        r: args.r as usize,
        h_max: args.h_max as usize,
        table: table
            .into_iter()
            .map(|(h, explained_fraction)| LagRow { h, explained_fraction })
            .collect(),
        selected_h,
    };
    emit_json(&report, args.out.as_deref())
}

fn run_benchmark(args: BenchmarkArgs) -> cpfactor::Result<()> {
    let mut spec: BenchmarkSpec = read_json(&args.spec)?;
    if let Some(n) = args.replications {
        spec.replications = n as usize;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let output = bench::run_benchmark(&spec)?;
    fs::create_dir_all(&args.out_dir)?;
    let create = |name: &str| fs::File::create(args.out_dir.join(name));
    bench::write_rows(&output.rows, create("rows.csv")?)?;
    bench::write_timings(&output.timings, create("timings.csv")?)?;
    let summary = bench::summarize(&output.rows);
    bench::write_summary(&summary, create("summary.csv")?)?;
    if output.variable == SweepVariable::Delta {
        bench::write_trends(&bench::trends(&summary), create("trend.csv")?)?;
    }
    let failed = output.rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} fits failed", output.rows.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim().to_string());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::LagScan(a) => run_lag_scan(a),
        Command::Benchmark(a) => run_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), e.to_string());
            ExitCode::from(1)
        }
    }
}
