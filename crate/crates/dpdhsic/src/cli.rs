//! Command-line front end. [`run`] parses arguments, writes to the given
//! streams and returns the process exit status:
//!
//! | code | meaning                                               |
//! |------|-------------------------------------------------------|
//! | 0    | success                                               |
//! | 2    | bad flags, bad configuration or invalid input data    |
//! | 3    | a file could not be read or written                   |
//! | 4    | a size guard refused the request (e.g. U-statistic n) |

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpdhsic_core::dagcheck::{fit_residuals, Dag};
use dpdhsic_core::dpdhsic::dpdhsic_test;
use dpdhsic_core::rng::stream_rng;
use dpdhsic_core::{Dataset, KernelSpec, PrivacyParams, TestConfig, TestOutcome};

use crate::audit::{epsilon_audit, sensitivity_audit};
use crate::dagfile::read_dag_file;
use crate::error::{AppError, AppResult};
use crate::generators::GeneratorSpec;
use crate::harness::{estimate_rejection_rate, read_spec_file, run_experiment, write_results};
use crate::io::{read_dataset_file, write_dataset, write_dataset_file};
use crate::methods::{Bandwidth, TestKind};

#[derive(Parser, Debug)]
#[command(
    name = "dpdhsic",
    version,
    about = "Differentially private joint independence testing with dHSIC"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo loops; output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one test on a dataset and print REJECT or ACCEPT.
    Test(TestArgs),
    /// Run a Monte Carlo experiment described by a JSON file.
    Simulate(SimulateArgs),
    /// Check a hypothesised DAG by testing its regression residuals.
    DagCheck(DagCheckArgs),
    /// Stress the sensitivity bound or estimate a test's privacy loss.
    Audit(AuditArgs),
    /// Write synthetic data in the dataset CSV format.
    Generate(GenerateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct BudgetArgs {
    /// Privacy parameter epsilon; `inf` disables the noise.
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of resampled statistics.
    #[arg(long = "B", default_value_t = 200)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl BudgetArgs {
    fn resolve(&self) -> AppResult<(PrivacyParams, TestConfig)> {
        Ok((
            PrivacyParams::new(self.epsilon, self.delta)?,
            TestConfig::new(self.alpha, self.resamples, self.seed)?,
        ))
    }
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Dataset CSV with `g<j>_<k>` headers.
    #[arg(long)]
    pub data: PathBuf,
    /// Expected group dimensions, e.g. `1,1,2`; checked against the header.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub test: TestKind,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// `median` or one Gaussian bandwidth per group, comma-separated.
    #[arg(long, default_value = "median")]
    pub bandwidth: Bandwidth,
    /// Also print the p-value and noised statistic. These are NOT private.
    #[arg(long)]
    pub unsafe_internals: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment description (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Results CSV; completed grid points already in it are skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DagCheckArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// DAG file with lines `j: k1 k2 ...`.
    #[arg(long)]
    pub dag: PathBuf,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Repetitions with fresh permutations and noise; above 1 the
    /// rejection rate is printed instead of a decision.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value = "median")]
    pub bandwidth: Bandwidth,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMode {
    Sensitivity,
    Epsilon,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Gaussian,
    Laplacian,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub mode: AuditMode,
    /// Number of groups (sensitivity mode).
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value = "gaussian")]
    pub kernel: KernelChoice,
    /// Kernel bandwidth (sensitivity mode).
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    /// Neighbouring pairs (sensitivity) or mechanism runs per dataset
    /// (epsilon).
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Permutations per pair (sensitivity mode).
    #[arg(long, default_value_t = 20)]
    pub perms: usize,
    /// Test to audit (epsilon mode).
    #[arg(long, default_value = "dpdhsic")]
    pub test: TestKind,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "B", default_value_t = 19)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorChoice {
    NullGaussian,
    ProductDependence,
    Toeplitz,
    SemChain,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub generator: GeneratorChoice,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Randomly regroup the Toeplitz columns into this many groups.
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "csv")]
    pub emit: EmitFormat,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(AppError::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| AppError::Usage(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli.command, out, err))),
        None => dispatch(&cli.command, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> AppResult<()> {
    match command {
        Command::Test(a) => cmd_test(a, out, err),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::DagCheck(a) => cmd_dag_check(a, out, err),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Generate(a) => cmd_generate(a, out),
    }
}

fn io_out(e: std::io::Error) -> AppError {
    AppError::io("<stdout>", e)
}

fn warn_power(config: &TestConfig, err: &mut dyn Write) {
    if let Some(w) = config.power_warning() {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn decision(outcome: &TestOutcome) -> &'static str {
    if outcome.reject {
        "REJECT"
    } else {
        "ACCEPT"
    }
}

fn check_groups(data: &Dataset, groups: &str) -> AppResult<()> {
    let wanted = groups
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| AppError::Usage(format!("--groups: `{t}` is not a dimension")))
        })
        .collect::<AppResult<Vec<usize>>>()?;
    if wanted != data.dims() {
        return Err(AppError::Usage(format!(
            "--groups {groups} does not match the file's group dimensions {:?}",
            data.dims()
        )));
    }
    Ok(())
}

fn cmd_test(a: &TestArgs, out: &mut dyn Write, err: &mut dyn Write) -> AppResult<()> {
    let (privacy, config) = a.budget.resolve()?;
    let data = read_dataset_file(&a.data)?;
    if let Some(g) = &a.groups {
        check_groups(&data, g)?;
    }
    warn_power(&config, err);
    let specs = a.bandwidth.specs(&data)?;
    let outcome = a
        .test
        .run(&data, &specs, &privacy, &config, &mut stream_rng(config.seed, 0))?;
    writeln!(out, "{}", decision(&outcome)).map_err(io_out)?;
    if a.unsafe_internals {
        let i = outcome.internals;
        let mut line = String::from("NOT-DP");
        if let Some(p) = i.p_value {
            line += &format!(" p_value={p}");
        }
        if let Some(m0) = i.m0 {
            line += &format!(" m0={m0}");
        }
        if let Some(c) = i.noisy_count {
            line += &format!(" noisy_count={c}");
        }
        line += &format!(" noise_scale={}", i.noise_scale);
        writeln!(out, "{line}").map_err(io_out)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> AppResult<()> {
    let spec = read_spec_file(&a.config)?;
    let rows = run_experiment(&spec, &a.out, |_| {})?;
    write_results(&rows, &mut *out).map_err(|e| AppError::Usage(e.to_string()))
}

fn cmd_dag_check(a: &DagCheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> AppResult<()> {
    let (privacy, config) = a.budget.resolve()?;
    if a.reps == 0 {
        return Err(AppError::Usage("--reps must be at least 1".into()));
    }
    let data = read_dataset_file(&a.data)?;
    let dag: Dag = read_dag_file(&a.dag)?;
    warn_power(&config, err);
    let residuals = fit_residuals(&data, &dag)?;
    let specs: Vec<KernelSpec> = a.bandwidth.specs(&residuals)?;
    let run_once = |rep: u32| -> dpdhsic_core::Result<bool> {
        let mut rng = stream_rng(config.seed, rep as u64);
        Ok(dpdhsic_test(&residuals, &specs, &privacy, &config, &mut rng)?.reject)
    };
    if a.reps == 1 {
        let reject = run_once(0)?;
        writeln!(out, "{}", if reject { "REJECT" } else { "ACCEPT" }).map_err(io_out)?;
    } else {
        let est = estimate_rejection_rate(a.reps, run_once)?;
        let (lo, hi) = est.wilson95();
        writeln!(
            out,
            "rejection_rate={} ci_lo={lo} ci_hi={hi} reps={}",
            est.rate(),
            est.reps
        )
        .map_err(io_out)?;
    }
    Ok(())
}

fn cmd_audit(a: &AuditArgs, out: &mut dyn Write) -> AppResult<()> {
    if a.draws == 0 {
        return Err(AppError::Usage("--draws must be at least 1".into()));
    }
    let mut lines: Vec<(String, String)> = Vec::new();
    match a.mode {
        AuditMode::Sensitivity => {
            let kernel = match a.kernel {
                KernelChoice::Gaussian => KernelSpec::gaussian(a.bandwidth)?,
                KernelChoice::Laplacian => KernelSpec::laplacian(a.bandwidth)?,
            };
            let r = sensitivity_audit(a.d, a.n, kernel, a.draws, a.perms, a.seed)?;
            lines.push(("mode".into(), "sensitivity".into()));
            lines.push(("statistic".into(), "sqrt-V".into()));
            lines.push(("n".into(), a.n.to_string()));
            lines.push(("d".into(), a.d.to_string()));
            lines.push(("pairs".into(), r.pairs.to_string()));
            lines.push(("permutations".into(), r.permutations.to_string()));
            lines.push(("observed_max".into(), format!("{:.6e}", r.observed_max)));
            if let Some(adv) = r.adversarial {
                lines.push(("adversarial_pair".into(), format!("{adv:.6e}")));
            }
            lines.push(("bound".into(), format!("{:.6e}", r.bound)));
            lines.push(("violation".into(), if r.violated() { "yes" } else { "no" }.into()));
        }
        AuditMode::Epsilon => {
            let privacy = PrivacyParams::new(a.epsilon, a.delta)?;
            let config = TestConfig::new(a.alpha, a.resamples, a.seed)?;
            let r = epsilon_audit(a.test, a.n, &privacy, &config, a.draws)?;
            lines.push(("mode".into(), "epsilon".into()));
            lines.push(("test".into(), a.test.to_string()));
            lines.push(("n".into(), a.n.to_string()));
            lines.push(("draws".into(), r.counts.draws.to_string()));
            lines.push(("rejects_x".into(), r.counts.rejects_x.to_string()));
            lines.push(("rejects_x_prime".into(), r.counts.rejects_x_prime.to_string()));
            lines.push(("epsilon".into(), a.epsilon.to_string()));
            lines.push(("estimate".into(), format!("{:.4}", r.estimate)));
            lines.push(("lower_95".into(), format!("{:.4}", r.lower)));
            lines.push(("upper_95".into(), format!("{:.4}", r.upper)));
        }
    }
    let width = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in lines {
        writeln!(out, "{k:<width$}  {v}").map_err(io_out)?;
    }
    Ok(())
}

fn need<T: Copy>(value: Option<T>, flag: &str, generator: &str) -> AppResult<T> {
    value.ok_or_else(|| AppError::Usage(format!("the {generator} generator needs --{flag}")))
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> AppResult<()> {
    let spec = match a.generator {
        GeneratorChoice::NullGaussian => GeneratorSpec::NullGaussian {
            n: a.n,
            d: need(a.d, "d", "null-gaussian")?,
        },
        GeneratorChoice::ProductDependence => GeneratorSpec::ProductDependence {
            n: a.n,
            sigma: need(a.sigma, "sigma", "product-dependence")?,
        },
        GeneratorChoice::Toeplitz => GeneratorSpec::Toeplitz {
            n: a.n,
            d: need(a.d, "d", "toeplitz")?,
            rho: need(a.rho, "rho", "toeplitz")?,
            groups: a.groups,
        },
        GeneratorChoice::SemChain => GeneratorSpec::SemChain {
            n: a.n,
            d: need(a.d, "d", "sem-chain")?,
            sigma: a.sigma.unwrap_or(1.0),
        },
    };
    spec.validate()
        .map_err(|(field, msg)| AppError::Usage(format!("--{field}: {msg}")))?;
    let data = spec.generate(&mut stream_rng(a.seed, 0))?;
    match a.emit {
        EmitFormat::Csv => match &a.out {
            Some(path) => write_dataset_file(&data, path),
            None => write_dataset(&data, &mut *out).map_err(|e| AppError::Usage(e.to_string())),
        },
    }
}
