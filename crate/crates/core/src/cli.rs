//! Command-line front end.
//!
//! Every subcommand reads a JSON walk description (see [`crate::spec_file`])
//! and writes either a CSV time series or a JSON report. Exit codes: 0 on
//! success, 1 when a numerical or validation check fails, 2 for unreadable or
//! malformed input.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::evolution::{self, EvolutionError, WalkRun};
use crate::oqw::{self, OqwError};
use crate::quantizer::{AugmentedState, QuantizedWalk, QuantizerError};
use crate::random;
use crate::spec_file::{self, InitialState, SpecError, WalkSpec};
use crate::spectral::{self, SpectralError, UEigenSystem};
use crate::szegedy::{self, CoinUnitaryFamily, SzegedyError};

/// Probability rows must sum to one within this.
pub const ROW_SUM_TOL: f64 = 1e-8;

/// Largest Szegedy reduction residual accepted by `szegedy`.
pub const REDUCTION_TOL: f64 = 1e-10;

/// Largest `‖Uφ − μφ‖` accepted by `spectrum`.
pub const EIGENPAIR_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "oqwlab",
    version,
    about = "Open quantum walks and their unitary quantization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Density-operator evolution of the open walk.
    Oqw,
    /// The quantized unitary walk.
    Unitary,
    /// Measured quantum trajectories of the open walk.
    Trajectory,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check completeness of the edge operators.
    Validate {
        spec: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve the initial state and write node probabilities as CSV.
    Run {
        spec: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Ensemble size in trajectory mode.
        #[arg(long, default_value_t = 1000)]
        trajectories: usize,
    },
    /// Report D, its classified spectrum, the eigenphases of U and the
    /// quantizer identities.
    Spectrum {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the long-time mean of the unitary walk with its exact limit.
    Asymptotic {
        spec: PathBuf,
        /// Horizon of the empirical mean.
        #[arg(long = "T", short = 'T', value_name = "N")]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
        /// Use the dense eigensystem of U instead of the one built from D.
        #[arg(long)]
        dense: bool,
    },
    /// Check that a stochastic matrix quantizes to Szegedy's walk.
    Szegedy {
        matrix: PathBuf,
        #[arg(long)]
        coin_dim: usize,
        /// The file holds a row-stochastic matrix; transpose it first.
        #[arg(long)]
        row_stochastic: bool,
        /// Draw random unitary coins from this seed; identity coins otherwise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random valid walk description with random initial states.
    Generate {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        coin_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

impl From<OqwError> for CliError {
    fn from(e: OqwError) -> Self {
        match e {
            OqwError::Incomplete { .. }
            | OqwError::ZeroProbability { .. }
            | OqwError::Numerics(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<QuantizerError> for CliError {
    fn from(e: QuantizerError) -> Self {
        match e {
            QuantizerError::Oqw(inner) => inner.into(),
            QuantizerError::DimensionMismatch(_) | QuantizerError::TooLarge { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Quantizer(inner) => inner.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EvolutionError> for CliError {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::Quantizer(inner) => inner.into(),
            EvolutionError::IndexOutOfRange { .. } | EvolutionError::EmptyHorizon => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SzegedyError> for CliError {
    fn from(e: SzegedyError) -> Self {
        match e {
            SzegedyError::NonStochastic(_) | SzegedyError::IndexOutOfRange(..) => {
                CliError::Input(e.to_string())
            }
            SzegedyError::Oqw(inner) => inner.into(),
            SzegedyError::Quantizer(inner) => inner.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Oqw(inner) => inner.into(),
            SpecError::Quantizer(inner) => inner.into(),
            SpecError::Szegedy(inner) => inner.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    let r: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    // drop negative zero
    r + 0.0
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(
    value: &T,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports always serialize");
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")
                .and_then(|_| w.flush())
                .map_err(|e| io_error(path, e))
        }
        None => writeln!(stdout, "{text}")
            .map_err(|e| CliError::Input(format!("cannot write report: {e}"))),
    }
}

fn check_row(t: usize, row: &[f64]) -> Result<(), CliError> {
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(CliError::Numerical(format!(
            "probabilities at t = {t} sum to {total}"
        )));
    }
    Ok(())
}

fn load_walk(spec: &WalkSpec) -> Result<QuantizedWalk, CliError> {
    Ok(QuantizedWalk::new(spec.kraus_family()?)?)
}

fn initial_augmented(spec: &WalkSpec, walk: &QuantizedWalk) -> Result<AugmentedState, CliError> {
    spec.initial_augmented(walk)?.ok_or_else(|| {
        CliError::Input(
            "spec has no initial augmented state (`initial.augmented` or `initial.node_vector`)"
                .into(),
        )
    })
}

/// Run one parsed command, writing any stdout report to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let started = Instant::now();
    let result = match &cli.command {
        Command::Validate { spec, out } => cmd_validate(spec, out.as_deref(), stdout),
        Command::Run {
            spec,
            mode,
            steps,
            seed,
            out,
            trajectories,
        } => cmd_run(spec, *mode, *steps, *seed, *trajectories, out),
        Command::Spectrum { spec, out } => cmd_spectrum(spec, out),
        Command::Asymptotic {
            spec,
            horizon,
            out,
            dense,
        } => cmd_asymptotic(spec, *horizon, *dense, out),
        Command::Szegedy {
            matrix,
            coin_dim,
            row_stochastic,
            seed,
            out,
        } => cmd_szegedy(
            matrix,
            *coin_dim,
            *row_stochastic,
            *seed,
            out.as_deref(),
            stdout,
        ),
        Command::Generate {
            nodes,
            coin_dim,
            seed,
            out,
        } => cmd_generate(*nodes, *coin_dim, *seed, out),
    };
    info!("finished in {:.3?}", started.elapsed());
    result
}

#[derive(Debug, Serialize)]
struct ValidateReport {
    command: &'static str,
    spec: String,
    num_nodes: usize,
    coin_dim: usize,
    residuals: Vec<f64>,
    max_residual: f64,
    passed: bool,
}

pub fn cmd_validate(
    spec_path: &Path,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let spec = WalkSpec::load(spec_path)?;
    let family = spec.kraus_family()?;
    let report = family.completeness_report();
    let record = ValidateReport {
        command: "validate",
        spec: spec_path.display().to_string(),
        num_nodes: family.num_nodes(),
        coin_dim: family.coin_dim(),
        residuals: report.residuals.clone(),
        max_residual: report.max_residual(),
        passed: report.passed(),
    };
    write_json(&record, out, stdout)?;
    if let Some((node, residual)) = report.first_failure() {
        return Err(CliError::Numerical(format!(
            "node {node} violates completeness (residual {residual:e})"
        )));
    }
    spec.initial_density()?;
    spec.initial_augmented(&QuantizedWalk::new(family)?)?;
    Ok(())
}

pub fn cmd_run(
    spec_path: &Path,
    mode: Mode,
    steps: usize,
    seed: u64,
    trajectories: usize,
    out: &Path,
) -> Result<(), CliError> {
    let spec = WalkSpec::load(spec_path)?;
    let family = spec.kraus_family()?;
    oqw::validate_kraus(&family)?;
    let mut w = create(out)?;
    let write_err = |e: io::Error| io_error(out, e);
    match mode {
        Mode::Oqw => {
            let mut rho = spec
                .initial_density()?
                .ok_or_else(|| CliError::Input("spec has no initial density".into()))?;
            writeln!(w, "t,node,probability").map_err(write_err)?;
            for t in 0..=steps {
                if t > 0 {
                    rho = oqw::oqw_step(&family, &rho)?;
                }
                let row = oqw::vertex_distribution(&rho);
                check_row(t, &row)?;
                for (node, p) in row.iter().enumerate() {
                    writeln!(w, "{t},{node},{}", round12(*p)).map_err(write_err)?;
                }
            }
        }
        Mode::Unitary => {
            let walk = QuantizedWalk::new(family)?;
            let alpha0 = initial_augmented(&spec, &walk)?;
            let history = if steps == 0 {
                vec![evolution::node_distribution(&alpha0)]
            } else {
                WalkRun::new(&walk, alpha0, steps)?
                    .with_history()
                    .run()?
                    .history
                    .expect("history was requested")
            };
            writeln!(w, "t,node,probability").map_err(write_err)?;
            for (t, row) in history.iter().enumerate() {
                check_row(t, row)?;
                for (node, p) in row.iter().enumerate() {
                    writeln!(w, "{t},{node},{}", round12(*p)).map_err(write_err)?;
                }
            }
        }
        Mode::Trajectory => {
            let rho0 = spec
                .initial_density()?
                .ok_or_else(|| CliError::Input("spec has no initial density".into()))?;
            let ensemble =
                oqw::run_ensemble_from_density(&family, &rho0, seed, trajectories, steps)?;
            let freq = oqw::occupation_frequencies(&ensemble, family.num_nodes());
            if let Some(last) = freq.last() {
                info!("occupation frequencies at t = {steps}: {last:?}");
            }
            writeln!(w, "trajectory_id,t,node,probability").map_err(write_err)?;
            for (id, traj) in ensemble.iter().enumerate() {
                for (t, &at) in traj.path.iter().enumerate() {
                    for node in 0..family.num_nodes() {
                        let p = u8::from(node == at);
                        writeln!(w, "{id},{t},{node},{p}").map_err(write_err)?;
                    }
                }
            }
        }
    }
    w.flush().map_err(write_err)
}

#[derive(Debug, Serialize)]
struct DEigenvalue {
    value: f64,
    class: &'static str,
}

#[derive(Debug, Serialize)]
struct PhaseGroup {
    /// In `(−π, π]`.
    phase: f64,
    re: f64,
    im: f64,
    multiplicity: usize,
}

#[derive(Debug, Serialize)]
struct SpectrumResiduals {
    isometry: f64,
    projection: f64,
    swap_compression: f64,
    eigenpairs: f64,
    orthonormality: f64,
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    command: &'static str,
    spec: String,
    num_nodes: usize,
    coin_dim: usize,
    state_dim: usize,
    d_matrix: Vec<Vec<f64>>,
    d_eigenvalues: Vec<DEigenvalue>,
    invariant_dimension: usize,
    u_phases: Vec<PhaseGroup>,
    residuals: SpectrumResiduals,
    passed: bool,
}

fn phase_groups(eig: &UEigenSystem) -> Vec<PhaseGroup> {
    let mut groups: Vec<PhaseGroup> = eig
        .groups
        .iter()
        .map(|g| {
            let mu = eig.pairs[g[0]].value;
            PhaseGroup {
                phase: mu.arg(),
                re: mu.re,
                im: mu.im,
                multiplicity: g.len(),
            }
        })
        .collect();
    groups.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    groups
}

pub fn cmd_spectrum(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let spec = WalkSpec::load(spec_path)?;
    let walk = load_walk(&spec)?;
    let d = walk.d_matrix();
    let classified = spectral::classify_spectrum(d)?;
    let eig = spectral::u_eigensystem(&walk, &classified)?;
    let identities = walk.verify_identities();
    let eigen_residual = eig.max_eigen_residual(&walk)?;

    let mut d_eigenvalues: Vec<DEigenvalue> = classified
        .interior
        .iter()
        .map(|(l, _)| DEigenvalue {
            value: *l,
            class: "interior",
        })
        .collect();
    d_eigenvalues.extend(classified.plus_one.iter().map(|_| DEigenvalue {
        value: 1.0,
        class: "plus_one",
    }));
    d_eigenvalues.extend(classified.minus_one.iter().map(|_| DEigenvalue {
        value: -1.0,
        class: "minus_one",
    }));
    d_eigenvalues.sort_by(|a, b| a.value.total_cmp(&b.value));

    let passed = identities.passed() && eigen_residual < EIGENPAIR_TOL;
    let report = SpectrumReport {
        command: "spectrum",
        spec: spec_path.display().to_string(),
        num_nodes: walk.num_nodes(),
        coin_dim: walk.coin_dim(),
        state_dim: walk.state_dim(),
        d_matrix: d.row_iter().map(|r| r.iter().copied().collect()).collect(),
        d_eigenvalues,
        invariant_dimension: classified.invariant_dimension(),
        u_phases: phase_groups(&eig),
        residuals: SpectrumResiduals {
            isometry: identities.isometry,
            projection: identities.projection,
            swap_compression: identities.swap_compression,
            eigenpairs: eigen_residual,
            orthonormality: eig.orthonormality_residual(),
        },
        passed,
    };
    write_json(&report, Some(out), &mut io::sink())?;
    if !passed {
        return Err(CliError::Numerical(format!(
            "identity residual {:e} or eigenpair residual {eigen_residual:e} out of tolerance",
            identities.max()
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct NodeLimit {
    node: usize,
    limit: f64,
    mean: f64,
    deviation: f64,
}

#[derive(Debug, Serialize)]
struct ProbeEntry {
    horizon: usize,
    max_deviation: f64,
}

#[derive(Debug, Serialize)]
struct AsymptoticReport {
    command: &'static str,
    spec: String,
    horizon: usize,
    eigensystem: &'static str,
    nodes: Vec<NodeLimit>,
    max_deviation: f64,
    span_residual: f64,
    probe: Vec<ProbeEntry>,
}

pub fn cmd_asymptotic(
    spec_path: &Path,
    horizon: usize,
    dense: bool,
    out: &Path,
) -> Result<(), CliError> {
    if horizon == 0 {
        return Err(CliError::Input("--T must be at least 1".into()));
    }
    let spec = WalkSpec::load(spec_path)?;
    let walk = load_walk(&spec)?;
    let alpha0 = initial_augmented(&spec, &walk)?;
    let eig = if dense {
        spectral::dense_u_eigensystem(&walk)?
    } else {
        spectral::analytic_eigensystem(&walk)?
    };
    let span_residual = eig.span_residual(&alpha0);
    let mut horizons = vec![horizon / 100, horizon / 10, horizon];
    horizons.retain(|&h| h > 0);
    let table = evolution::convergence_probe(&walk, &eig, &alpha0, &horizons)?;
    let last = table.rows.last().expect("at least one horizon");
    check_row(horizon, &last.mean)?;
    let nodes = (0..walk.num_nodes())
        .map(|j| NodeLimit {
            node: j,
            limit: round12(table.limit[j]),
            mean: round12(last.mean[j]),
            deviation: last.deviation[j],
        })
        .collect();
    if !table.within_envelope(1e-9) {
        warn!("running mean left the C/T envelope");
    }
    let report = AsymptoticReport {
        command: "asymptotic",
        spec: spec_path.display().to_string(),
        horizon,
        eigensystem: if dense { "dense" } else { "analytic" },
        nodes,
        max_deviation: last.max_deviation(),
        span_residual,
        probe: table
            .rows
            .iter()
            .map(|r| ProbeEntry {
                horizon: r.horizon,
                max_deviation: r.max_deviation(),
            })
            .collect(),
    };
    write_json(&report, Some(out), &mut io::sink())
}

#[derive(Debug, Serialize)]
struct PairResidual {
    from: usize,
    to: usize,
    residual: f64,
}

#[derive(Debug, Serialize)]
struct SzegedyReport {
    command: &'static str,
    matrix: String,
    size: usize,
    coin_dim: usize,
    coins: String,
    pairs: Vec<PairResidual>,
    max_residual: f64,
    /// `max |d_jk − √(p_kj·p_jk)|`.
    d_residual: f64,
    passed: bool,
}

pub fn cmd_szegedy(
    matrix_path: &Path,
    coin_dim: usize,
    row_stochastic: bool,
    seed: Option<u64>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if coin_dim == 0 {
        return Err(CliError::Input("--coin-dim must be positive".into()));
    }
    let p = spec_file::load_stochastic(matrix_path, row_stochastic)?;
    let size = p.size();
    let coins = match seed {
        Some(s) => CoinUnitaryFamily::random(size, coin_dim, &mut ChaCha8Rng::seed_from_u64(s)),
        None => CoinUnitaryFamily::identity(),
    };
    let walk = QuantizedWalk::new(szegedy::from_stochastic(&p, &coins, coin_dim)?)?;
    let mut pairs = Vec::with_capacity(size * size);
    for j in 0..size {
        for k in 0..size {
            pairs.push(PairResidual {
                from: j,
                to: k,
                residual: szegedy::reduction_residual(&walk, &p, j, k)?,
            });
        }
    }
    let max_residual = pairs.iter().map(|r| r.residual).fold(0.0, f64::max);
    let d = walk.d_matrix();
    let mut d_residual: f64 = 0.0;
    for j in 0..size {
        for k in 0..size {
            let expected = (p.prob(k, j) * p.prob(j, k)).sqrt();
            d_residual = d_residual.max((d[(j, k)] - expected).abs());
        }
    }
    let passed = max_residual < REDUCTION_TOL && d_residual < REDUCTION_TOL;
    let report = SzegedyReport {
        command: "szegedy",
        matrix: matrix_path.display().to_string(),
        size,
        coin_dim,
        coins: match seed {
            Some(s) => format!("random (seed {s})"),
            None => "identity".into(),
        },
        pairs,
        max_residual,
        d_residual,
        passed,
    };
    write_json(&report, out, stdout)?;
    if !passed {
        return Err(CliError::Numerical(format!(
            "reduction residual {max_residual:e}, D residual {d_residual:e}"
        )));
    }
    Ok(())
}

pub fn cmd_generate(nodes: usize, coin_dim: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if nodes == 0 || coin_dim == 0 {
        return Err(CliError::Input(
            "--nodes and --coin-dim must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = random::random_kraus_family(nodes, coin_dim, &mut rng);
    let rho = random::random_block_diagonal_density(nodes, coin_dim, &mut rng);
    let coefficients = random::random_unit_vector(nodes, &mut rng);
    let mut spec = WalkSpec::from_family(&family);
    spec.initial = Some(InitialState {
        density: Some(
            rho.blocks()
                .map(|((j, jp), m)| spec_file::BlockEntry {
                    block: [j, jp],
                    matrix: spec_file::matrix_to_pairs(m),
                })
                .collect(),
        ),
        augmented: None,
        node_vector: Some(coefficients.iter().map(|z| [z.re, z.im]).collect()),
    });
    let mut w = create(out)?;
    writeln!(w, "{}", spec.to_json())
        .and_then(|_| w.flush())
        .map_err(|e| io_error(out, e))
}
