//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::codec::{decode_conditional, encode_conditional, information_bits, Bitstream};
use crate::error::{Error, Result};
use crate::estimator::{
    minimize_mcdl, sweep_scalar, McdlObjective, MinimizeOptions, ObservationSet, DEFAULT_GRAD_TOL,
    DEFAULT_MAX_ITERS,
};
use crate::graph::{SubsetFamily, SubsetSpec};
use crate::model::{ModelFile, PairwiseModel, ParameterTying};
use crate::mpl::mpl_homogeneous;
use crate::oracle::{run_oracle_suite, ORACLE_TOLERANCE};
use crate::sampler::{
    sample_sequence, write_samples_file, SampleSequence, DEFAULT_BURN_IN, DEFAULT_SPACING,
};

pub const THREADS_ENV: &str = "MCDL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "mcdl",
    version,
    about = "Minimum conditional description length estimation for Ising fields"
)]
struct Cli {
    /// Worker threads for per-sample evaluation (default: MCDL_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a Gibbs-sampled sequence and write a sample file.
    Generate(GenerateArgs),
    /// Fit parameters by gradient descent; writes a JSON report.
    Estimate(EstimateArgs),
    /// Evaluate the temporal objective on a grid of scalar values.
    Sweep(SweepArgs),
    /// Evaluate the spatial (many-subset) objective on a grid of scalar values.
    SpatialSweep(SpatialSweepArgs),
    /// Single-site spatial estimate, compared with direct pseudo-likelihood.
    Mpl(MplArgs),
    /// Arithmetic-code one sample's subset given its boundary.
    Encode(EncodeArgs),
    /// Decode a bitstream back to the subset configuration.
    Decode(DecodeArgs),
    /// Check tree inference against exhaustive enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
struct ModelArg {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// middle-row, row:K, site:R,C, nodes:a,b,..., or all
    #[arg(long, default_value = "middle-row")]
    subset: String,
    /// Output path; defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SamplesArg {
    #[arg(long)]
    samples: PathBuf,
}

#[derive(Debug, Args)]
struct SweepGrid {
    #[arg(long, default_value_t = 0.3)]
    lo: f64,
    #[arg(long, default_value_t = 0.5)]
    hi: f64,
    #[arg(long, default_value_t = 161)]
    count: usize,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    samples: SamplesArg,
    /// Spatial subset family (rows, sites, rows:A-B); temporal when absent.
    #[arg(long)]
    spatial: Option<String>,
    /// Which configuration of a full-grid sample file to use in spatial mode.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = DEFAULT_GRAD_TOL)]
    grad_tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Comma-separated starting values for the free parameters.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    samples: SamplesArg,
    #[command(flatten)]
    grid: SweepGrid,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpatialSweepArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    samples: SamplesArg,
    #[arg(long, default_value = "rows")]
    subsets: String,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[command(flatten)]
    grid: SweepGrid,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MplArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    samples: SamplesArg,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = DEFAULT_GRAD_TOL)]
    grad_tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    samples: SamplesArg,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Sample file supplying the boundary configuration.
    #[command(flatten)]
    samples: SamplesArg,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    bits: PathBuf,
    /// Decoded subset as a line of `+`/`-`; defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 12)]
    max_u: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(THREADS_ENV).ok()?.parse().ok())
        .filter(|&n| n > 0)
}

fn execute(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads) {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate(a) => generate(a),
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::SpatialSweep(a) => spatial_sweep(a),
        Command::Mpl(a) => mpl(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::OracleCheck(a) => oracle_check(a),
    })
}

fn load_model(path: &Path) -> Result<(PairwiseModel, ParameterTying)> {
    ModelFile::load(path)?.build()
}

fn load_samples(path: &Path, model: &PairwiseModel) -> Result<SampleSequence> {
    SampleSequence::parse(&fs::read_to_string(path)?, model.graph())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn samples_provenance(path: &Path, samples: &SampleSequence) -> serde_json::Value {
    let p = samples.provenance();
    json!({
        "samples_file": path.display().to_string(),
        "seed": p.seed,
        "burn_in": p.burn_in,
        "spacing": p.spacing,
        "scan": p.scan,
        "rng": p.rng,
        "subset": p.subset.to_string(),
        "count": samples.len(),
    })
}

fn generate(a: GenerateArgs) -> Result<()> {
    let (model, _) = load_model(&a.model.model)?;
    let subset: SubsetSpec = a.subset.parse()?;
    let samples = sample_sequence(&model, &subset, a.n, a.burn_in, a.spacing, a.seed)?;
    match &a.out {
        Some(path) => write_samples_file(path, model.graph(), &samples)?,
        None => write_output(None, samples.to_text(model.graph())?.as_bytes())?,
    }
    eprintln!(
        "generated {} configurations over {} closure nodes (seed {})",
        samples.len(),
        samples.geometry().closure().len(),
        a.seed
    );
    Ok(())
}

/// A single full configuration for spatial modes.
fn spatial_config(
    samples: &SampleSequence,
    model: &PairwiseModel,
    index: usize,
) -> Result<Vec<i8>> {
    let n = model.graph().node_count();
    if samples.geometry().closure().len() != n {
        return Err(Error::InvalidArgument(
            "spatial modes need a sample file over the whole grid (generate --subset all)".into(),
        ));
    }
    if index >= samples.len() {
        return Err(Error::InvalidArgument(format!(
            "index {index} out of range for {} configurations",
            samples.len()
        )));
    }
    Ok(samples.full_config(index, n))
}

fn spatial_objective(
    model: &PairwiseModel,
    tying: ParameterTying,
    samples: &SampleSequence,
    family: SubsetFamily,
    index: usize,
) -> Result<McdlObjective> {
    let config = spatial_config(samples, model, index)?;
    let subsets = family.geometries(model.graph())?;
    McdlObjective::new(
        ObservationSet::spatial(model.shared_graph().clone(), &config, subsets)?,
        tying,
    )
}

fn parse_init(text: Option<&str>) -> Result<Option<Vec<f64>>> {
    text.map(|t| {
        t.split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad initial value `{v}`")))
            })
            .collect()
    })
    .transpose()
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let (model, tying) = load_model(&a.model.model)?;
    let samples = load_samples(&a.samples.samples, &model)?;
    let (objective, mode) = match &a.spatial {
        Some(family) => {
            let family: SubsetFamily = family.parse()?;
            (
                spatial_objective(&model, tying, &samples, family, a.index)?,
                format!("spatial:{family}"),
            )
        }
        None => (
            McdlObjective::new(
                ObservationSet::temporal(model.shared_graph().clone(), &samples)?,
                tying,
            )?,
            "temporal".to_string(),
        ),
    };
    let opts = MinimizeOptions {
        grad_tol: a.grad_tol,
        max_iters: a.max_iters,
        initial: parse_init(a.init.as_deref())?,
        ..MinimizeOptions::default()
    };
    let report = minimize_mcdl(&objective, &opts)?;
    eprintln!(
        "{mode}: theta={:?} H={:.9} nats |grad|={:.3e} iterations={} converged={}",
        report.theta,
        report.objective_nats,
        report.gradient_inf_norm,
        report.iterations,
        report.converged
    );
    let doc = json!({
        "mode": mode,
        "model_file": a.model.model.display().to_string(),
        "provenance": samples_provenance(&a.samples.samples, &samples),
        "report": report,
    });
    write_output(
        a.out.as_deref(),
        format!("{}\n", serde_json::to_string_pretty(&doc)?).as_bytes(),
    )?;
    if report.converged {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "no convergence within {} iterations (best iterate reported)",
            a.max_iters
        )))
    }
}

fn sweep_output(
    objective: &McdlObjective,
    grid: &SweepGrid,
    provenance: &str,
    out: Option<&Path>,
) -> Result<()> {
    let result = sweep_scalar(objective, grid.lo, grid.hi, grid.count)?;
    let mut buf = Vec::new();
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let text = String::from_utf8(csv).expect("ascii csv");
    let (body, last) = text
        .trim_end()
        .rsplit_once('\n')
        .expect("header and argmin");
    writeln!(buf, "{body}")?;
    writeln!(
        buf,
        "# H_bits_per_site = H_nats / ({:.6} * ln 2), the mean subset size",
        result.mean_subset_size
    )?;
    writeln!(buf, "# {provenance}")?;
    writeln!(buf, "{last}")?;
    write_output(out, &buf)?;
    eprintln!("argmin={:.6}", result.argmin);
    Ok(())
}

fn provenance_comment(
    model: &Path,
    samples_path: &Path,
    samples: &SampleSequence,
    extra: &str,
) -> String {
    let p = samples.provenance();
    format!(
        "model={} samples={} seed={} burn_in={} spacing={} rng={} subset={}{extra}",
        model.display(),
        samples_path.display(),
        p.seed,
        p.burn_in,
        p.spacing,
        p.rng,
        p.subset
    )
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (model, tying) = load_model(&a.model.model)?;
    let samples = load_samples(&a.samples.samples, &model)?;
    let objective = McdlObjective::new(
        ObservationSet::temporal(model.shared_graph().clone(), &samples)?,
        tying,
    )?;
    let prov = provenance_comment(
        &a.model.model,
        &a.samples.samples,
        &samples,
        " mode=temporal",
    );
    sweep_output(&objective, &a.grid, &prov, a.out.as_deref())
}

fn spatial_sweep(a: SpatialSweepArgs) -> Result<()> {
    let (model, tying) = load_model(&a.model.model)?;
    let samples = load_samples(&a.samples.samples, &model)?;
    let family: SubsetFamily = a.subsets.parse()?;
    let objective = spatial_objective(&model, tying, &samples, family, a.index)?;
    let extra = format!(" mode=spatial subsets={family} index={}", a.index);
    let prov = provenance_comment(&a.model.model, &a.samples.samples, &samples, &extra);
    sweep_output(&objective, &a.grid, &prov, a.out.as_deref())
}

fn mpl(a: MplArgs) -> Result<()> {
    let (model, tying) = load_model(&a.model.model)?;
    let samples = load_samples(&a.samples.samples, &model)?;
    let objective = spatial_objective(
        &model,
        tying.clone(),
        &samples,
        SubsetFamily::InteriorSites,
        a.index,
    )?;
    let opts = MinimizeOptions {
        grad_tol: a.grad_tol,
        max_iters: a.max_iters,
        ..MinimizeOptions::default()
    };
    let report = minimize_mcdl(&objective, &opts)?;
    // Direct pseudo-likelihood reference, available for the homogeneous tying.
    let direct = if tying == ParameterTying::homogeneous(&model)? {
        let config = spatial_config(&samples, &model, a.index)?;
        let sites: Vec<usize> = SubsetFamily::InteriorSites
            .geometries(model.graph())?
            .iter()
            .map(|g| g.subset()[0])
            .collect();
        let node = model.node_params().first().copied().unwrap_or(0.0);
        let uniform_nodes = model.node_params().iter().all(|&v| v == node);
        uniform_nodes
            .then(|| mpl_homogeneous(model.graph(), &config, &sites, node))
            .transpose()?
    } else {
        None
    };
    eprintln!(
        "mpl: theta={:?} |grad|={:.3e} converged={} direct={:?}",
        report.theta, report.gradient_inf_norm, report.converged, direct
    );
    let doc = json!({
        "mode": "spatial:sites",
        "model_file": a.model.model.display().to_string(),
        "provenance": samples_provenance(&a.samples.samples, &samples),
        "index": a.index,
        "direct_mpl_theta": direct,
        "report": report,
    });
    write_output(
        a.out.as_deref(),
        format!("{}\n", serde_json::to_string_pretty(&doc)?).as_bytes(),
    )
}

fn sample_parts(samples: &SampleSequence, index: usize) -> Result<(Vec<i8>, Vec<i8>)> {
    let config = samples.configs().get(index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "index {index} out of range for {} configurations",
            samples.len()
        ))
    })?;
    samples.geometry().split_closure(config)
}

fn encode(a: EncodeArgs) -> Result<()> {
    let (model, _) = load_model(&a.model.model)?;
    let samples = load_samples(&a.samples.samples, &model)?;
    let (x, bd) = sample_parts(&samples, a.index)?;
    let geometry = samples.geometry();
    let stream = encode_conditional(&model, geometry, &x, &bd)?;
    fs::write(&a.out, stream.to_bytes())?;
    eprintln!(
        "encoded {} sites in {} bits (information content {:.3} bits)",
        x.len(),
        stream.bit_len,
        information_bits(&model, geometry, &x, &bd)?
    );
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let (model, _) = load_model(&a.model.model)?;
    let samples = load_samples(&a.samples.samples, &model)?;
    let (_, bd) = sample_parts(&samples, a.index)?;
    let stream = Bitstream::from_bytes(&fs::read(&a.bits)?)?;
    let x = decode_conditional(&model, samples.geometry(), &bd, &stream)?;
    let mut line: String = x.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
    line.push('\n');
    write_output(a.out.as_deref(), line.as_bytes())
}

fn oracle_check(a: OracleArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let summary = run_oracle_suite(&mut rng, a.trials, a.max_u, ORACLE_TOLERANCE)?;
    println!(
        "{}/{} pass (tolerance {:e}); worst errors: log_partition={:.2e} moments={:.2e} log_prob={:.2e} sequential={:.2e}",
        summary.passed,
        summary.trials,
        ORACLE_TOLERANCE,
        summary.worst.log_partition,
        summary.worst.moments,
        summary.worst.log_prob,
        summary.worst.sequential
    );
    if summary.passed == summary.trials {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} oracle trials failed",
            summary.trials - summary.passed
        )))
    }
}
