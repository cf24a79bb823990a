mod gen;
mod layers;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repsim::analysis::{self, SimilarityMatrixReport};
use repsim::ccafam::RidgeNormalization;
use repsim::index::{IndexParams, RegressionDirection};
use repsim::reprdata::DEFAULT_RANK_TOL;
use repsim::{center_columns, SimilarityIndex};
use serde::Serialize;

use output::{fmt_f64, to_json};

pub const THREADS_ENV: &str = "REPSIM_THREADS";

#[derive(Debug)]
pub enum CliError {
    Core(repsim::Error),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Core(repsim::Error::Io { .. }) => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<repsim::Error> for CliError {
    fn from(e: repsim::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "repsim", version, about = "Similarity indexes for neural network representations")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Similarity index (cka-linear, cka-rbf, hsic-linear, hsic-rbf, cca-r2, cca-rho,
    /// svcca-r2, svcca-rho, pwcca, pwcca-modified, linreg, ridge, procrustes)
    #[arg(long, global = true, default_value = "cka-linear")]
    index: String,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Singular values below rank_tol times the largest count as zero
    #[arg(long, global = true, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Layer labels (file stems) to leave out of correspondence scoring
    #[arg(long, global = true, value_delimiter = ',')]
    exclude: Vec<String>,
    /// RBF bandwidth as a fraction of the median example distance
    #[arg(long, global = true)]
    bandwidth_fraction: Option<f64>,
    /// Variance kept by the SVD step of SVCCA
    #[arg(long, global = true)]
    variance_threshold: Option<f64>,
    /// Ridge penalty on the first input
    #[arg(long, global = true)]
    kappa_x: Option<f64>,
    /// Ridge penalty on the second input
    #[arg(long, global = true)]
    kappa_y: Option<f64>,
    /// Ridge normalization: vn-trace, cauchy-schwarz-min or separable
    #[arg(long, global = true)]
    normalization: Option<String>,
    /// Regression direction: first-on-second or second-on-first
    #[arg(long, global = true)]
    direction: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Score two activation files
    Compare { file_a: PathBuf, file_b: PathBuf },
    /// Score every layer of one directory against every layer of another
    Matrix {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Report S + S^T
        #[arg(long)]
        symmetrize: bool,
    },
    /// Corresponding-layer accuracy across two or more networks
    SanityCheck {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
    },
    /// How the second file's RSM acts on eigenvectors of the first's
    Spectrum {
        file_a: PathBuf,
        file_b: PathBuf,
        #[arg(long, default_value_t = 10)]
        components: usize,
    },
    /// Generate synthetic activation files
    Gen(gen::GenArgs),
}

impl GlobalArgs {
    fn index(&self) -> Result<SimilarityIndex, CliError> {
        let normalization = self
            .normalization
            .as_deref()
            .map(str::parse::<RidgeNormalization>)
            .transpose()?;
        let direction = match self.direction.as_deref() {
            None => None,
            Some("first-on-second") => Some(RegressionDirection::FirstOnSecond),
            Some("second-on-first") => Some(RegressionDirection::SecondOnFirst),
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "unknown direction {other:?}; expected first-on-second or second-on-first"
                )))
            }
        };
        let params = IndexParams {
            bandwidth_fraction: self.bandwidth_fraction,
            variance_threshold: self.variance_threshold,
            kappa_x: self.kappa_x,
            kappa_y: self.kappa_y,
            normalization,
            direction,
        };
        Ok(SimilarityIndex::from_parts(&self.index, &params)?)
    }

    fn check_rank_tol(&self) -> Result<(), CliError> {
        if self.rank_tol.is_finite() && self.rank_tol > 0.0 && self.rank_tol < 1.0 {
            Ok(())
        } else {
            Err(CliError::Usage(format!("--rank-tol must lie in (0, 1), got {}", self.rank_tol)))
        }
    }
}

#[derive(Serialize)]
struct CompareOutput {
    index: String,
    params: SimilarityIndex,
    value: f64,
    raw_value: f64,
    normalized: bool,
    file_a: String,
    file_b: String,
    n: usize,
    p_a: usize,
    p_b: usize,
    rank_tol: f64,
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct MatrixOutput<'a> {
    #[serde(flatten)]
    report: &'a SimilarityMatrixReport,
    rank_tol: f64,
}

#[derive(Serialize)]
struct SanityOutput<'a> {
    #[serde(flatten)]
    report: &'a analysis::SanityCheckReport,
    dirs: Vec<String>,
    labels: Vec<String>,
    rank_tol: f64,
}

#[derive(Serialize)]
struct SpectrumOutput<'a> {
    #[serde(flatten)]
    report: &'a analysis::SpectrumReport,
    file_a: String,
    file_b: String,
    components: usize,
}

fn compare(g: &GlobalArgs, a: &Path, b: &Path) -> Result<String, CliError> {
    let index = g.index()?;
    g.check_rank_tol()?;
    let x = layers::load_file(a)?;
    let y = layers::load_file(b)?;
    let score = index.evaluate_with_tol(&x, &y, g.rank_tol)?;
    if g.format == OutputFormat::Csv {
        return Ok(format!("index,value\n{},{}\n", index.name(), fmt_f64(score.value)));
    }
    Ok(to_json(&CompareOutput {
        index: index.name().to_string(),
        params: index,
        value: score.value,
        raw_value: score.raw_value,
        normalized: score.normalized,
        file_a: a.display().to_string(),
        file_b: b.display().to_string(),
        n: x.n(),
        p_a: x.p(),
        p_b: y.p(),
        rank_tol: g.rank_tol,
        metadata: analysis::index_metadata(&index),
    }))
}

fn matrix(g: &GlobalArgs, dir_a: &Path, dir_b: &Path, symmetrize: bool) -> Result<String, CliError> {
    let index = g.index()?;
    g.check_rank_tol()?;
    let (labels_a, a) = layers::load_dir(dir_a)?;
    let (labels_b, b) = layers::load_dir(dir_b)?;
    let mut report = analysis::similarity_matrix_with_tol(&a, &b, &index, labels_a, labels_b, g.rank_tol)?;
    if symmetrize {
        report = analysis::symmetrize(&report)?;
    }
    Ok(match g.format {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => to_json(&MatrixOutput {
            report: &report,
            rank_tol: g.rank_tol,
        }),
    })
}

fn sanity_check(g: &GlobalArgs, dirs: &[PathBuf]) -> Result<String, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Usage(format!(
            "sanity-check needs at least 2 network directories, got {}",
            dirs.len()
        )));
    }
    let index = g.index()?;
    g.check_rank_tol()?;
    let mut labels = Vec::new();
    let mut networks = Vec::with_capacity(dirs.len());
    for (k, d) in dirs.iter().enumerate() {
        let (l, layers) = layers::load_dir(d)?;
        if k == 0 {
            labels = l;
        }
        networks.push(layers);
    }
    let report = analysis::sanity_check_with_tol(&networks, &labels, &index, &g.exclude, g.rank_tol)?;
    Ok(match g.format {
        OutputFormat::Csv => {
            let mut out = String::from("network_a,network_b,accuracy,jackknife_se\n");
            for p in &report.pairs {
                out.push_str(&format!("{},{},{},\n", p.network_a, p.network_b, fmt_f64(p.accuracy)));
            }
            let se = report.jackknife_se.map(fmt_f64).unwrap_or_default();
            out.push_str(&format!("mean,,{},{se}\n", fmt_f64(report.accuracy)));
            out
        }
        OutputFormat::Json => to_json(&SanityOutput {
            report: &report,
            dirs: dirs.iter().map(|d| d.display().to_string()).collect(),
            labels,
            rank_tol: g.rank_tol,
        }),
    })
}

fn spectrum(g: &GlobalArgs, a: &Path, b: &Path, components: usize) -> Result<String, CliError> {
    if components == 0 {
        return Err(CliError::Usage("--components must be at least 1".into()));
    }
    let x = center_columns(&layers::load_file(a)?);
    let y = center_columns(&layers::load_file(b)?);
    let report = analysis::shared_subspace_spectrum(&x, &y, components)?;
    Ok(match g.format {
        OutputFormat::Csv => {
            let mut out = String::from("component,own_scaling,cross_scaling,cosine\n");
            for i in 0..report.own_scaling.len() {
                out.push_str(&format!(
                    "{i},{},{},{}\n",
                    fmt_f64(report.own_scaling[i]),
                    fmt_f64(report.cross_scaling[i]),
                    fmt_f64(report.cosine[i])
                ));
            }
            out
        }
        OutputFormat::Json => to_json(&SpectrumOutput {
            report: &report,
            file_a: a.display().to_string(),
            file_b: b.display().to_string(),
            components,
        }),
    })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<String, CliError> {
    configure_threads()?;
    let g = &cli.global;
    match &cli.command {
        Command::Compare { file_a, file_b } => compare(g, file_a, file_b),
        Command::Matrix {
            dir_a,
            dir_b,
            symmetrize,
        } => matrix(g, dir_a, dir_b, *symmetrize),
        Command::SanityCheck { dirs } => sanity_check(g, dirs),
        Command::Spectrum {
            file_a,
            file_b,
            components,
        } => spectrum(g, file_a, file_b, *components),
        Command::Gen(args) => gen::run(args, g.seed).map(|m| to_json(&m)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
