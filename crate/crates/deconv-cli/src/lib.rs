//! Batch command-line interface: simulate datasets, fit the model, evaluate
//! density estimates, and run the dimension-scaling benchmark.
//!
//! One TOML config file drives a run (`--config`); the mode is selected by
//! its `mode` key. All randomness flows from the single `seed` (overridable
//! with `--seed`). Outputs land in a fresh run directory named by timestamp
//! and seed. Exit codes: 0 success, 1 configuration/validation problems,
//! 2 runtime failures.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use deconv_core::data::ReplicateDataset;
use deconv_core::evaluate::{
    estimate_density, estimate_marginal_density, ise_joint, ise_marginal, runtime_scaling,
};
use deconv_core::sampler::{Chain, PosteriorDraws, SamplerConfig};
use deconv_core::simulate::{
    generate_truth_config, simulate, NoiseCase, SimScenario, TruthSidecar,
    DEFAULT_KAPPA_SCALE, DEFAULT_MISSPEC_SCALE, DEFAULT_S_SCALE,
};
use deconv_core::Error as CoreError;

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Fit,
    Evaluate,
    Benchmark,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Master seed; mandatory so every run is reproducible.
    pub seed: u64,
    /// Parent directory for run outputs (default `runs`).
    pub out_dir: Option<PathBuf>,
    pub simulate: Option<SimulateSection>,
    pub fit: Option<FitSection>,
    pub evaluate: Option<EvaluateSection>,
    pub benchmark: Option<BenchmarkSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// `well_specified` or `mis_specified`.
    pub case: NoiseCase,
    pub kappa_scale: Option<f64>,
    pub s_scale: Option<f64>,
    pub misspec_scale: Option<f64>,
    pub lognormal_positive_mean: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Input dataset CSV (`subject_id,replicate_id,w_1..w_d`).
    pub data: PathBuf,
    pub n_iter: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub num_components: Option<usize>,
    pub num_intervals: Option<usize>,
    pub angle_grid_size: Option<usize>,
    pub disable_likelihood: Option<bool>,
    /// Fit the naive baseline (subject means as exact latents).
    pub naive: Option<bool>,
    /// Checkpoint interval in iterations (default 500; 0 disables).
    pub checkpoint_every: Option<usize>,
    /// Resume from a previously written checkpoint file.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// Draws file written by a fit run.
    pub draws: PathBuf,
    /// Truth sidecar written by a simulate run.
    pub truth: PathBuf,
    /// Marginal grid resolution (default 200).
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub d_list: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub iters: Option<usize>,
}

const DEFAULT_CHECKPOINT_EVERY: usize = 500;

// ---------------------------------------------------------------------------
// Entry point.
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "deconv",
    about = "Multivariate density deconvolution from replicated proxies"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap (accepted for forward compatibility; the current
    /// implementation computes on one thread).
    #[arg(long)]
    threads: Option<usize>,
}

/// Errors carrying their intended process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Validation(_) | CoreError::Parse { .. } => {
                CliError::validation(e.to_string())
            }
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(format!("i/o error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints its own help/version output with exit code 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn run_cli(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::validation("--threads must be >= 1"));
        }
    }
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        CliError::validation(format!("cannot read config {}: {e}", cli.config.display()))
    })?;
    let mut config: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::validation(format!("invalid config: {e}")))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let run_dir = create_run_dir(
        config.out_dir.as_deref().unwrap_or(Path::new("runs")),
        config.seed,
    )?;
    println!("run directory: {}", run_dir.display());
    match config.mode {
        Mode::Simulate => cmd_simulate(&config, &run_dir),
        Mode::Fit => cmd_fit(&config, &run_dir),
        Mode::Evaluate => cmd_evaluate(&config, &run_dir),
        Mode::Benchmark => cmd_benchmark(&config, &run_dir),
    }
}

/// `<out_dir>/run-<unix-seconds>-seed<seed>[-k]`, created fresh.
fn create_run_dir(out_dir: &Path, seed: u64) -> CliResult<PathBuf> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for k in 0..1000 {
        let name = if k == 0 {
            format!("run-{stamp}-seed{seed}")
        } else {
            format!("run-{stamp}-seed{seed}-{k}")
        };
        let dir = out_dir.join(name);
        match std::fs::create_dir_all(out_dir).and_then(|_| std::fs::create_dir(&dir)) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(CliError::runtime("could not create a unique run directory"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        serde_json::to_writer(&mut file, value)
            .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
        file.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let file = std::fs::File::open(path).map_err(|e| {
        CliError::validation(format!("cannot open {}: {e}", path.display()))
    })?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::validation(format!("cannot parse {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(config: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let sect = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::validation("mode = \"simulate\" needs a [simulate] section"))?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let truth = generate_truth_config(sect.d, &mut rng)?;
    let mut scenario = SimScenario::new(sect.n, sect.m, sect.case, truth, config.seed)?;
    scenario.kappa_scale = sect.kappa_scale.unwrap_or(DEFAULT_KAPPA_SCALE);
    scenario.s_scale = sect.s_scale.unwrap_or(DEFAULT_S_SCALE);
    scenario.misspec_scale = sect.misspec_scale.unwrap_or(DEFAULT_MISSPEC_SCALE);
    scenario.lognormal_positive_mean = sect.lognormal_positive_mean.unwrap_or(false);
    scenario.validate()?;

    let (data, sidecar) = simulate(&scenario)?;
    let data_path = run_dir.join("data.csv");
    data.write_csv(&data_path)?;
    sidecar.write_json(&run_dir.join("truth.json"))?;
    println!(
        "simulated n={} subjects, m={} replicates, d={}, case={:?}",
        scenario.n, scenario.m, scenario.d, scenario.case
    );
    println!("dataset: {}", data_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

/// Metadata persisted next to the draws for later evaluation.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitMeta {
    pub data_path: PathBuf,
    pub seed: u64,
    pub naive: bool,
    pub scales: Vec<f64>,
    pub runtime_seconds: f64,
}

fn sampler_config(config: &RunConfig, sect: &FitSection) -> SamplerConfig {
    let mut sc = SamplerConfig {
        seed: config.seed,
        ..SamplerConfig::default()
    };
    if let Some(v) = sect.n_iter {
        sc.n_iter = v;
    }
    if let Some(v) = sect.burn_in {
        sc.burn_in = v;
    }
    if let Some(v) = sect.thin {
        sc.thin = v;
    }
    if let Some(v) = sect.num_components {
        sc.num_components = v;
    }
    if let Some(v) = sect.num_intervals {
        sc.num_intervals = v;
    }
    if let Some(v) = sect.angle_grid_size {
        sc.angle_grid_size = v;
    }
    if let Some(v) = sect.disable_likelihood {
        sc.disable_likelihood = v;
    }
    sc
}

fn cmd_fit(config: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let sect = config
        .fit
        .as_ref()
        .ok_or_else(|| CliError::validation("mode = \"fit\" needs a [fit] section"))?;
    let start = std::time::Instant::now();

    let mut chain = if let Some(ckpt) = &sect.resume {
        let chain: Chain = read_json(ckpt)?;
        println!(
            "resumed from {} at iteration {}",
            ckpt.display(),
            chain.iter
        );
        chain
    } else {
        if !sect.data.exists() {
            return Err(CliError::validation(format!(
                "input dataset not found: {}",
                sect.data.display()
            )));
        }
        let data = ReplicateDataset::read_csv(&sect.data)?;
        let sc = sampler_config(config, sect);
        sc.validate()?;
        if sect.naive.unwrap_or(false) {
            Chain::new_naive(&data, &sc)?
        } else {
            Chain::new(&data, &sc)?
        }
    };

    let checkpoint_every = sect.checkpoint_every.unwrap_or(DEFAULT_CHECKPOINT_EVERY);
    let ckpt_path = run_dir.join("checkpoint.json");
    while !chain.is_done() {
        chain.step()?;
        if checkpoint_every > 0 && chain.iter % checkpoint_every == 0 && !chain.is_done() {
            write_json(&ckpt_path, &chain)?;
        }
    }

    let naive = chain.naive;
    let data_path = sect.data.clone();
    let draws = chain.finish();
    let elapsed = start.elapsed().as_secs_f64();

    write_json(&run_dir.join("draws.json"), &draws)?;
    {
        let mut file =
            std::io::BufWriter::new(std::fs::File::create(run_dir.join("diagnostics.ndjson"))?);
        for rec in &draws.diagnostics {
            serde_json::to_writer(&mut file, rec)
                .map_err(|e| CliError::runtime(format!("writing diagnostics: {e}")))?;
            writeln!(file)?;
        }
    }
    write_json(
        &run_dir.join("meta.json"),
        &FitMeta {
            data_path,
            seed: config.seed,
            naive,
            scales: draws.scales.clone(),
            runtime_seconds: elapsed,
        },
    )?;
    println!(
        "fit complete: {} retained draws in {elapsed:.1}s (final log posterior {:.3})",
        draws.params.len(),
        draws.log_post_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn cmd_evaluate(config: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let sect = config
        .evaluate
        .as_ref()
        .ok_or_else(|| CliError::validation("mode = \"evaluate\" needs an [evaluate] section"))?;
    let draws: PosteriorDraws = read_json(&sect.draws)?;
    let sidecar = TruthSidecar::read_json(&sect.truth)?;
    let metrics = evaluate_against_truth(&draws, &sidecar, sect.grid_points.unwrap_or(200), run_dir)?;
    let metrics_path = run_dir.join("metrics.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(file, "metric,dimension,value")?;
    for (name, dim, value) in &metrics {
        match dim {
            Some(l) => writeln!(file, "{name},{l},{value}")?,
            None => writeln!(file, "{name},,{value}")?,
        }
    }
    println!("metrics: {}", metrics_path.display());
    for (name, dim, value) in &metrics {
        match dim {
            Some(l) => println!("  {name}[{l}] = {value:.6e}"),
            None => println!("  {name} = {value:.6e}"),
        }
    }
    Ok(())
}

/// Marginal and joint integrated squared errors of the posterior density
/// against the simulation truth; also writes plot-ready density grids.
pub fn evaluate_against_truth(
    draws: &PosteriorDraws,
    sidecar: &TruthSidecar,
    grid_points: usize,
    out_dir: &Path,
) -> CliResult<Vec<(String, Option<usize>, f64)>> {
    if grid_points < 2 {
        return Err(CliError::validation("grid_points must be >= 2"));
    }
    let truth = &sidecar.scenario.truth;
    let d = truth.dim();
    let mut metrics = Vec::new();

    // Marginals on an equispaced grid over the truth support.
    let (a, b) = (truth.a_bound, truth.b_bound);
    for l in 0..d {
        let grid: Vec<f64> = (0..grid_points)
            .map(|i| a + (b - a) * i as f64 / (grid_points - 1) as f64)
            .collect();
        let marg = truth.marginal(l)?;
        let f_true: Vec<f64> = grid.iter().map(|&t| marg.logpdf(t).exp()).collect();
        let est = estimate_marginal_density(draws, l, &grid)?;
        let ise = ise_marginal(&f_true, &est.mean, &grid)?;
        metrics.push(("ise_marginal".to_string(), Some(l + 1), ise));

        let path = out_dir.join(format!("marginal_density_{}.csv", l + 1));
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(file, "x,true_density,estimated_density")?;
        for i in 0..grid.len() {
            writeln!(file, "{},{},{}", grid[i], f_true[i], est.mean[i])?;
        }
    }

    // Joint ISE over the latent sample points with p0 = true density.
    let points = sidecar.x_vectors();
    let cache = deconv_core::copula::CorrelationCache::from_angles(&truth.angles)?;
    let f_true: Vec<f64> = points
        .iter()
        .map(|x| {
            truth
                .log_density_with_cache(&cache, x)
                .map(|ld| ld.exp())
        })
        .collect::<deconv_core::Result<_>>()?;
    let est = estimate_density(draws, &points, false)?;
    let joint = ise_joint(&f_true, &est.mean, &f_true)?;
    metrics.push(("ise_joint".to_string(), None, joint));

    let path = out_dir.join("joint_density.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(file, "subject,true_density,estimated_density")?;
    for (i, (ft, fe)) in f_true.iter().zip(&est.mean).enumerate() {
        writeln!(file, "{},{},{}", i + 1, ft, fe)?;
    }
    Ok(metrics)
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

fn cmd_benchmark(config: &RunConfig, run_dir: &Path) -> CliResult<()> {
    let default = BenchmarkSection {
        d_list: None,
        n: None,
        m: None,
        iters: None,
    };
    let sect = config.benchmark.as_ref().unwrap_or(&default);
    let d_list = sect.d_list.clone().unwrap_or_else(|| vec![3, 5, 10]);
    let result = runtime_scaling(
        &d_list,
        sect.n.unwrap_or(100),
        sect.m.unwrap_or(3),
        sect.iters.unwrap_or(200),
        config.seed,
    )?;
    let path = run_dir.join("scaling.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(file, "d,seconds")?;
    for (d, t) in result.d_list.iter().zip(&result.seconds) {
        writeln!(file, "{d},{t}")?;
    }
    write_json(&run_dir.join("scaling.json"), &result)?;
    println!(
        "log-runtime vs log-dimension slope: {:.3} (95% CI {:.3}..{:.3})",
        result.slope, result.slope_ci.0, result.slope_ci.1
    );
    Ok(())
}
