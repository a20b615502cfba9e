//! Command-line entry points.
//!
//! Exit codes: `0` success, `1` estimation or data failure, `2` usage or
//! configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sellab_core::simlab::{generate_dataset, DgpSpec, ErrorLaw, Method, MethodSettings};

use crate::config::{self, ConfigError, FileConfig, InputSection};
use crate::io::{self, CsvSchema, LoadOptions};
use crate::mc::{self, THREADS_ENV};
use crate::report::{self, coefficient_names};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sellab", version, about = "Estimators for binary outcomes under endogenous sample selection")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from a simulation design and write it as CSV.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate coefficients on a CSV dataset.
    Estimate(EstimateArgs),
    /// Monte Carlo bias/RMSE study.
    Mc {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated: mle, nls, matching, sieve.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Report CSV; the text table goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Aligned-text report.
        #[arg(long)]
        text: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Free regressors per equation.
    #[arg(long)]
    pub p: Option<usize>,
    /// normal or cauchy.
    #[arg(long)]
    pub errors: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated: mle, nls, matching, sieve.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Report CSV; the text table goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long)]
    pub selection_normalized: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub selection_free: Option<Vec<String>>,
    #[arg(long)]
    pub outcome_normalized: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub outcome_free: Option<Vec<String>>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub selection_sign: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub outcome_sign: Option<f64>,
    /// Keep free regressors on their original scale.
    #[arg(long)]
    pub no_standardize: bool,
    /// Treat the outcome column as continuous and split it at its median.
    #[arg(long)]
    pub binarize_outcome: bool,
}

/// A validated run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub threads: usize,
    pub task: Task,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Simulate {
        spec: DgpSpec,
        out: PathBuf,
    },
    Estimate {
        input: PathBuf,
        schema: SchemaSpec,
        load: LoadOptions,
        methods: Vec<Method>,
        settings: MethodSettings,
        out: Option<PathBuf>,
        text: Option<PathBuf>,
    },
    Mc {
        spec: DgpSpec,
        reps: usize,
        methods: Vec<Method>,
        settings: MethodSettings,
        out: Option<PathBuf>,
        text: Option<PathBuf>,
    },
}

/// Column roles; unset roles follow the simulated layout read off the header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SchemaSpec {
    pub selection_normalized: Option<String>,
    pub selection_free: Option<Vec<String>>,
    pub outcome_normalized: Option<String>,
    pub outcome_free: Option<Vec<String>>,
    pub d: Option<String>,
    pub y: Option<String>,
    pub selection_sign: Option<f64>,
    pub outcome_sign: Option<f64>,
}

impl SchemaSpec {
    pub fn resolve(&self, header: &[String]) -> CsvSchema {
        let base = CsvSchema::infer(header);
        CsvSchema {
            selection_normalized: self.selection_normalized.clone().unwrap_or(base.selection_normalized),
            selection_free: self.selection_free.clone().unwrap_or(base.selection_free),
            outcome_normalized: self.outcome_normalized.clone().unwrap_or(base.outcome_normalized),
            outcome_free: self.outcome_free.clone().unwrap_or(base.outcome_free),
            d: self.d.clone().unwrap_or(base.d),
            y: self.y.clone().unwrap_or(base.y),
            selection_sign: self.selection_sign.unwrap_or(1.0),
            outcome_sign: self.outcome_sign.unwrap_or(1.0),
        }
    }
}

fn design_spec(args: &DesignArgs, file: &FileConfig) -> Result<DgpSpec, ConfigError> {
    let d = file.design.clone().unwrap_or_default();
    let n = args.n.or(d.n).unwrap_or(1000);
    let p = args.p.or(d.p).unwrap_or(2);
    let errors = match args.errors.as_deref().or(d.errors.as_deref()) {
        Some(s) => config::parse_error_law(s)?,
        None => ErrorLaw::NormalPair,
    };
    let seed = args.seed.or(d.seed).unwrap_or(0);
    if n < 2 {
        return Err(ConfigError::Invalid("design needs n >= 2".into()));
    }
    Ok(DgpSpec::new(n, p, errors, seed))
}

fn methods(flag: &Option<Vec<String>>, file: &FileConfig) -> Result<Vec<Method>, ConfigError> {
    match flag.as_ref().or(file.methods.as_ref()) {
        Some(list) => config::parse_methods(list),
        None => Ok(Method::ALL.to_vec()),
    }
}

fn either(flag: &Option<PathBuf>, file: Option<&PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| file.cloned())
}

fn sign(v: Option<f64>, what: &str) -> Result<Option<f64>, ConfigError> {
    match v {
        Some(s) if s != 1.0 && s != -1.0 => Err(ConfigError::Invalid(format!("{what} must be 1 or -1"))),
        other => Ok(other),
    }
}

/// Combines flags and the configuration file into one validated run.
pub fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    if threads == 0 {
        return Err(ConfigError::Invalid("threads must be at least 1".into()));
    }
    let output = file.output.clone().unwrap_or_default();
    let task = match &cli.command {
        Command::Simulate { design, out } => Task::Simulate {
            spec: design_spec(design, &file)?,
            out: either(out, output.path.as_ref())
                .ok_or_else(|| ConfigError::Invalid("simulate needs an output path (--out)".into()))?,
        },
        Command::Mc {
            design,
            reps,
            methods: m,
            out,
            text,
        } => {
            let reps = reps.or(file.design.as_ref().and_then(|d| d.replications)).unwrap_or(10);
            if reps == 0 {
                return Err(ConfigError::Invalid("at least one replication is required".into()));
            }
            Task::Mc {
                spec: design_spec(design, &file)?,
                reps,
                methods: methods(m, &file)?,
                settings: config::method_settings(&file)?,
                out: either(out, output.path.as_ref()),
                text: either(text, output.text.as_ref()),
            }
        }
        Command::Estimate(a) => {
            let inp: InputSection = file.input.clone().unwrap_or_default();
            let input = either(&a.input, inp.path.as_ref())
                .filter(|p| !p.as_os_str().is_empty())
                .ok_or_else(|| ConfigError::Invalid("estimate needs an input path (--input)".into()))?;
            let schema = SchemaSpec {
                selection_normalized: a.selection_normalized.clone().or(inp.selection_normalized),
                selection_free: a.selection_free.clone().or(inp.selection_free),
                outcome_normalized: a.outcome_normalized.clone().or(inp.outcome_normalized),
                outcome_free: a.outcome_free.clone().or(inp.outcome_free),
                d: a.d.clone().or(inp.d),
                y: a.y.clone().or(inp.y),
                selection_sign: sign(a.selection_sign.or(inp.selection_sign), "selection_sign")?,
                outcome_sign: sign(a.outcome_sign.or(inp.outcome_sign), "outcome_sign")?,
            };
            let load = LoadOptions {
                standardize: !a.no_standardize && inp.standardize.unwrap_or(true),
                binarize_outcome: a.binarize_outcome || inp.binarize_outcome.unwrap_or(false),
            };
            Task::Estimate {
                input,
                schema,
                load,
                methods: methods(&a.methods, &file)?,
                settings: config::method_settings(&file)?,
                out: either(&a.out, output.path.as_ref()),
                text: either(&a.text, output.text.as_ref()),
            }
        }
    };
    Ok(RunConfig { threads, task })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: Option<&Path>, text: &str, to_stdout: bool) -> anyhow::Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
    }
    if to_stdout {
        print!("{text}");
    }
    Ok(())
}

/// Executes a validated run and returns its exit code.
pub fn execute(run: &RunConfig) -> anyhow::Result<i32> {
    match &run.task {
        Task::Simulate { spec, out } => {
            let data = generate_dataset(spec)?;
            io::write_csv(out, &data, &CsvSchema::simulated(spec.p_z(), spec.p_x()))?;
            log::info!("wrote {} rows to {}", data.n(), out.display());
            Ok(EXIT_OK)
        }
        Task::Estimate {
            input,
            schema,
            load,
            methods,
            settings,
            out,
            text,
        } => {
            let schema = schema.resolve(&io::read_header(input)?);
            let data = io::load_csv(input, &schema, *load)?;
            log::info!("loaded {} rows, {} selected", data.n(), data.selected_count());
            let rows = mc::estimate_all(&data, methods, settings, run.threads)?;
            let names = coefficient_names(&schema.selection_free, &schema.outcome_free);
            if let Some(p) = out {
                report::write_estimates_csv(create(p)?, &names, &rows)?;
            }
            write_text(text.as_deref(), &report::estimates_text(&names, &rows), out.is_none())?;
            let mut code = EXIT_OK;
            for r in &rows {
                if let Err(e) = &r.result {
                    eprintln!("error: {} failed: {e}", r.method.label());
                    code = EXIT_FAILURE;
                }
            }
            Ok(code)
        }
        Task::Mc {
            spec,
            reps,
            methods,
            settings,
            out,
            text,
        } => {
            let report = mc::run_parallel(spec, methods, *reps, settings, run.threads)?;
            if let Some(p) = out {
                report::write_mc_csv(create(p)?, &report)?;
            }
            write_text(text.as_deref(), &report::mc_text(&report, 10), out.is_none())?;
            let mut code = EXIT_OK;
            for s in report.methods.iter().filter(|s| s.is_failed()) {
                eprintln!("error: {} failed in every replication", s.method.label());
                code = EXIT_FAILURE;
            }
            Ok(code)
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let run = match resolve(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match execute(&run) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
