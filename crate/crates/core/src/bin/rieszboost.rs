use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rieszboost::config::{GridSpec, RunConfig, DEFAULT_KDE_JOINT, DEFAULT_KDE_MARGINAL};
use rieszboost::data::{load_csv, CsvSchema, Dataset};
use rieszboost::estimate::{cross_fit_estimate, CrossFitConfig, EstimatorConfig, Method, TrainingFit};
use rieszboost::nuisance::{KdeGrids, NuisanceConstants};
use rieszboost::riesz::{Functional, FunctionalKind};
use rieszboost::sim::{run_study, true_alpha, true_psi, Dgp, TruthMode};
use rieszboost::Error;

#[derive(Parser)]
#[command(
    name = "rieszboost",
    version,
    about = "Riesz representer boosting for causal functionals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the true value of a functional under a simulation design.
    Truth(TruthArgs),
    /// Cross-fit estimate of a functional from a CSV file.
    Estimate(EstimateArgs),
    /// Run a replication study described by a configuration file.
    Simulate(SimulateArgs),
    /// Write a CSV of the fitted representer over a covariate grid.
    RepresenterCurve(CurveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Args)]
struct FunctionalArgs {
    /// ate, att, ase or lase.
    #[arg(long)]
    functional: FunctionalKind,
    /// Treatment shift (required for ase and lase).
    #[arg(long)]
    delta: Option<f64>,
    /// Treatment threshold for lase.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

impl FunctionalArgs {
    fn build(&self) -> Result<Functional, Error> {
        Functional::from_parts(self.functional, self.delta, Some(self.threshold))
    }
}

#[derive(Args)]
struct TruthArgs {
    #[arg(long)]
    dgp: Dgp,
    #[command(flatten)]
    functional: FunctionalArgs,
    #[arg(long, value_enum, default_value = "quadrature")]
    mode: ModeArg,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = 10_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    outcome: String,
    #[arg(long, default_value = "a")]
    treatment: String,
    /// Comma-separated covariate columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, Error> {
        let covariates = match &self.covariates {
            Some(c) => c.clone(),
            None => {
                let mut r = csv::ReaderBuilder::new()
                    .trim(csv::Trim::All)
                    .from_path(&self.data)
                    .map_err(|e| Error::Csv {
                        path: self.data.clone(),
                        message: e.to_string(),
                    })?;
                let headers = r.headers().map_err(|e| Error::Csv {
                    path: self.data.clone(),
                    message: e.to_string(),
                })?;
                headers
                    .iter()
                    .filter(|h| *h != self.outcome && *h != self.treatment)
                    .map(str::to_string)
                    .collect()
            }
        };
        let schema = CsvSchema {
            outcome: self.outcome.clone(),
            treatment: self.treatment.clone(),
            covariates,
        };
        load_csv(&self.data, &schema)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Take grids and nuisance settings from this configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_iterations: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    max_depths: Option<Vec<usize>>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    kde_joint: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    kde_marginal: Option<Vec<f64>>,
    /// Propensity clipping level, or `none`.
    #[arg(long)]
    clip: Option<String>,
}

impl ModelArgs {
    fn build(&self) -> Result<EstimatorConfig, Error> {
        let (mut grid, mut folds, mut kde, mut constants) = match &self.config {
            Some(p) => {
                let c = RunConfig::from_file(p)?;
                (c.grid, c.cv_folds, c.kde, c.constants)
            }
            None => (
                GridSpec::default(),
                5,
                KdeGrids {
                    joint: DEFAULT_KDE_JOINT.to_vec(),
                    marginal: DEFAULT_KDE_MARGINAL.to_vec(),
                },
                NuisanceConstants::default(),
            ),
        };
        if let Some(v) = &self.learning_rates {
            grid.learning_rates = v.clone();
        }
        if let Some(v) = &self.n_iterations {
            grid.n_iterations = v.clone();
        }
        if let Some(v) = &self.max_depths {
            grid.max_depths = v.clone();
        }
        if let Some(v) = self.min_samples_leaf {
            grid.min_samples_leaf = v;
        }
        if let Some(v) = self.folds {
            folds = v;
        }
        if let Some(v) = &self.kde_joint {
            kde.joint = v.clone();
        }
        if let Some(v) = &self.kde_marginal {
            kde.marginal = v.clone();
        }
        if let Some(c) = &self.clip {
            constants.clip = if c.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(
                    c.parse()
                        .map_err(|_| Error::InvalidParameter(format!("cannot parse --clip {c:?}")))?,
                )
            };
        }
        constants.validate()?;
        Ok(EstimatorConfig {
            grid: grid.build()?,
            cv_folds: folds,
            kde: Some(kde),
            constants,
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    functional: FunctionalArgs,
    #[arg(long, default_value = "rieszboost")]
    method: Method,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of rows used to fit the nuisances.
    #[arg(long, default_value_t = 0.5)]
    split_fraction: f64,
    /// Swap the halves and pool both estimates.
    #[arg(long)]
    two_fold: bool,
    /// Write the estimate as a one-row CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override `n_sims` from the configuration.
    #[arg(long)]
    n_sims: Option<usize>,
    /// Directory for output files whose paths the configuration leaves unset.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    functional: FunctionalArgs,
    #[arg(long, default_value = "rieszboost")]
    method: Method,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of points on the first covariate.
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    /// Treatment values (default: 0,1 for a binary treatment, otherwise the sample quartiles).
    #[arg(long, value_delimiter = ',')]
    a_values: Option<Vec<f64>>,
    /// Add the true representer of this design as `alpha_true`.
    #[arg(long)]
    dgp: Option<Dgp>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Truth(a) => cmd_truth(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::RepresenterCurve(a) => cmd_curve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn cmd_truth(args: TruthArgs) -> Result<(), Error> {
    let f = args.functional.build()?;
    let mode = match args.mode {
        ModeArg::ClosedForm => TruthMode::ClosedForm,
        ModeArg::Quadrature => TruthMode::Quadrature,
        ModeArg::MonteCarlo => TruthMode::MonteCarlo {
            draws: args.draws,
            seed: args.seed,
        },
    };
    let t = true_psi(args.dgp, &f, mode)?;
    match t.std_error {
        Some(se) => println!("{} {} {} (mc se {se})", args.dgp, f, t.value),
        None => println!("{} {} {}", args.dgp, f, t.value),
    }
    eprintln!("mode: {mode}");
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let f = args.functional.build()?;
    let data = args.data.load()?;
    eprintln!("loaded {} rows with {} covariates", data.n(), data.d());
    let config = CrossFitConfig {
        estimator: args.model.build()?,
        split_fraction: args.split_fraction,
        seed: args.seed,
        two_fold: args.two_fold,
    };
    let r = cross_fit_estimate(&data, &f, args.method, &config)?;
    println!("{} [{}, {}]", r.psi_hat, r.ci_lo, r.ci_hi);
    if let Some(out) = &args.out {
        let text = format!(
            "functional,method,psi_hat,se,ci_lo,ci_hi,n_estimation,seed\n{},{},{},{},{},{},{},{}\n",
            f.name(),
            args.method,
            r.psi_hat,
            r.se,
            r.ci_lo,
            r.ci_hi,
            r.phi.len(),
            args.seed
        );
        write_file(out, &text)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut config = RunConfig::from_file(&args.config)?;
    if let Some(n) = args.n_sims {
        config.n_sims = n;
        config.validate()?;
    }
    let rep = config.replication()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(Error::InvalidParameter("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker threads: {e}")))?;
    eprintln!(
        "simulating {} design: {} replications of n = {} on {} threads",
        rep.dgp,
        rep.n_sims,
        rep.n,
        pool.current_num_threads()
    );
    let start = Instant::now();
    let report = pool.install(|| run_study(&rep))?;
    eprintln!("finished in {:.1?}", start.elapsed());

    let out = |given: &Option<PathBuf>, default: &str| {
        given
            .clone()
            .unwrap_or_else(|| args.out_dir.join(format!("{}_{default}", rep.dgp)))
    };
    let csv_path = out(&config.report_csv, "report.csv");
    let md_path = out(&config.report_markdown, "report.md");
    let records_path = out(&config.records_csv, "records.csv");
    report.write_csv(&csv_path)?;
    report.write_records_csv(&records_path)?;
    let md = report.to_markdown();
    write_file(&md_path, &md)?;
    print!("{md}");
    eprintln!(
        "wrote {}, {} and {}",
        csv_path.display(),
        md_path.display(),
        records_path.display()
    );
    Ok(())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cmd_curve(args: CurveArgs) -> Result<(), Error> {
    let f = args.functional.build()?;
    let data = args.data.load()?;
    if args.grid_points < 2 {
        return Err(Error::InvalidParameter("--grid-points must be at least 2".into()));
    }
    if let Some(dgp) = args.dgp {
        dgp.check(&f)?;
        if data.d() != 1 {
            return Err(Error::InvalidParameter("alpha_true needs a single covariate".into()));
        }
    }
    let estimator = args.model.build()?;
    let mut fit = TrainingFit::new(&data, &estimator, args.seed);
    let alpha = fit.alpha(&f, args.method)?;

    let column = |j: usize| {
        let mut v: Vec<f64> = (0..data.n()).map(|i| data.x_row(i)[j]).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let x0 = column(0);
    let medians: Vec<f64> = (0..data.d()).map(|j| quantile(&column(j), 0.5)).collect();
    let a_values = match &args.a_values {
        Some(v) => v.clone(),
        None if data.has_binary_treatment() => vec![0.0, 1.0],
        None => {
            let mut a = data.a().to_vec();
            a.sort_by(f64::total_cmp);
            vec![quantile(&a, 0.25), quantile(&a, 0.5), quantile(&a, 0.75)]
        }
    };
    let (lo, hi) = (x0[0], x0[x0.len() - 1]);
    let mut text = String::from(if args.dgp.is_some() {
        "a,x,alpha_hat,alpha_true\n"
    } else {
        "a,x,alpha_hat\n"
    });
    for &a in &a_values {
        for i in 0..args.grid_points {
            let x = lo + (hi - lo) * i as f64 / (args.grid_points - 1) as f64;
            let mut row = medians.clone();
            row[0] = x;
            let est = alpha.predict(a, &row);
            match args.dgp {
                Some(dgp) => text.push_str(&format!("{a},{x},{est},{}\n", true_alpha(dgp, &f, a, x)?)),
                None => text.push_str(&format!("{a},{x},{est}\n")),
            }
        }
    }
    write_file(&args.out, &text)?;
    eprintln!(
        "wrote {} rows to {}",
        a_values.len() * args.grid_points,
        args.out.display()
    );
    Ok(())
}
