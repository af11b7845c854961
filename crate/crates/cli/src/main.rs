#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridcop::config::{ChainFormat, CopulaConfig, RunConfig};
use gridcop::experiments::{
    derive_seed, density_matrix_csv, generate_dataset, run_comparison_study, run_model_study, ComparisonStudySpec,
    ModelStudySpec, StudySpec,
};
use gridcop::io;
use gridcop::likelihood::KnownMarginal;
use gridcop::mcmc::{density_bands, posterior_mean, prior_simulation_r, run_chain, ChainOutput, SamplerConfig};
use gridcop::measures::{hellinger, integrated_squared_error, kendall_tau, spearman_rho};
use gridcop::{Error, Family, Grid, GridCopula, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "gridcop", version, about = "Bayesian grid-uniform copula estimation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a grid-uniform copula from a TOML run configuration.
    Fit {
        config: PathBuf,
    },
    /// Simulate a dataset from a parametric copula.
    Simulate(SimulateArgs),
    /// Report Kendall's tau and Spearman's rho of a copula file, chain or fit output.
    Measures(MeasuresArgs),
    /// Project a parametric copula onto a uniform grid.
    Project(ProjectArgs),
    /// Fit quality against sample size.
    StudyModels(StudyArgs),
    /// Proposal prior against the flat prior.
    StudyComparison(StudyArgs),
    /// Draw the implied prior of the centering correlation.
    PriorSim(PriorSimArgs),
}

#[derive(Args, Clone)]
struct CopulaArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

impl CopulaArgs {
    fn config(&self) -> CopulaConfig {
        CopulaConfig { rho: self.rho, theta: self.theta, tau: self.tau, ..CopulaConfig::family(self.family) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Scale {
    /// Standard normal marginals.
    Normal,
    /// Uniform marginals, i.e. the copula sample itself.
    Copula,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    copula: CopulaArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Scale::Normal)]
    scale: Scale,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeasuresArgs {
    /// Copula file, chain file, or fit output directory.
    path: PathBuf,
    /// Also report distances to this copula.
    #[arg(long = "reference-family")]
    reference_family: Option<Family>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Per-axis refinement used to represent the reference.
    #[arg(long, default_value_t = 4)]
    refinement: usize,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    copula: CopulaArgs,
    /// Intervals per axis.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Study specification (TOML); the built-in defaults when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Use the full-size settings instead of the desk defaults.
    #[arg(long, conflicts_with = "spec")]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PriorSimArgs {
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long)]
    alpha_star: f64,
    #[arg(long, default_value_t = 20_000)]
    iterations: usize,
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thinning: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    tuning_r: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Fit { config } => fit(&config),
        Cmd::Simulate(a) => simulate(&a),
        Cmd::Measures(a) => measures(&a),
        Cmd::Project(a) => project(&a),
        Cmd::StudyModels(a) => study(&a, false),
        Cmd::StudyComparison(a) => study(&a, true),
        Cmd::PriorSim(a) => prior_sim(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.display().to_string(), msg: e.to_string() })
}

fn fit(config_path: &Path) -> Result<()> {
    let raw = std::fs::read(config_path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", config_path.display())))?;
    let text = String::from_utf8(raw.clone()).map_err(|_| Error::Config("config is not valid UTF-8".into()))?;
    let cfg = RunConfig::from_toml_str(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let run = cfg.resolve(base)?;
    let data = io::load_csv(&run.data_path, cfg.data.header, cfg.data.columns.as_deref())?;
    if data.dims() != run.dims {
        return Err(Error::Data(format!(
            "{}: data has {} columns, the configuration expects {}",
            run.data_path.display(),
            data.dims(),
            run.dims
        )));
    }
    let out = run_chain(&data, &run.grid, &run.prior, &run.marginals, &run.sampler)?;
    let dir = &run.output_dir;
    create_dir(dir)?;
    let mut files = Vec::new();
    if cfg.output.write_chain {
        let binary = cfg.output.chain_format == ChainFormat::Binary;
        let name = if binary { "chain.bin" } else { "chain.txt" };
        io::write_chain(&dir.join(name), &out.grid, &out.masses, binary)?;
        files.push(name.to_string());
    }
    let pm = posterior_mean(&out)?;
    io::save_copula(&dir.join("posterior_mean.copula"), &pm)?;
    files.push("posterior_mean.copula".into());
    write(&dir.join("density_summary.csv"), density_summary_csv(&out)?)?;
    files.push("density_summary.csv".into());
    if run.dims == 2 {
        write(&dir.join("density_grid.csv"), density_matrix_csv(&pm)?)?;
        files.push("density_grid.csv".into());
    }
    write(&dir.join("trace.csv"), trace_csv(&out))?;
    files.push("trace.csv".into());
    let report = acceptance_report(&out);
    write(&dir.join("acceptance.json"), serde_json::to_string_pretty(&report).expect("json") + "\n")?;
    files.push("acceptance.json".into());

    let mut hashes = serde_json::Map::new();
    for f in &files {
        let bytes = std::fs::read(dir.join(f)).map_err(|e| Error::Io { path: f.clone(), msg: e.to_string() })?;
        hashes.insert(f.clone(), json!(sha256_hex(&bytes)));
    }
    let data_bytes = std::fs::read(&run.data_path).map_err(|e| Error::Io { path: run.data_path.display().to_string(), msg: e.to_string() })?;
    let manifest = json!({
        "tool": "gridcop",
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": sha256_hex(&raw),
        "data_sha256": sha256_hex(&data_bytes),
        "seed": run.sampler.seed,
        "samples": out.n_samples,
        "outputs": hashes,
    });
    write(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;

    println!("samples: {}", out.n_samples);
    println!(
        "copula moves: {} proposed, acceptance {:.3}",
        out.acceptance.copula.proposed,
        out.acceptance.copula.rate()
    );
    if out.acceptance.correlation.proposed > 0 {
        println!("correlation moves: acceptance {:.3}", out.acceptance.correlation.rate());
    }
    if out.acceptance.marginal.proposed > 0 {
        println!("marginal moves: acceptance {:.3}", out.acceptance.marginal.rate());
    }
    println!("outputs written to {}", dir.display());
    Ok(())
}

fn density_summary_csv(out: &ChainOutput) -> Result<String> {
    let g = &out.grid;
    let bands = density_bands(out, 0.95)?;
    let mut s = String::from("cell");
    for i in 0..g.dims() {
        let _ = write!(s, ",k{}", i + 1);
    }
    s.push_str(",density_mean,density_q025,density_q975\n");
    for (flat, b) in bands.iter().enumerate() {
        let _ = write!(s, "{flat}");
        for k in g.cell_index(flat).0 {
            let _ = write!(s, ",{}", k + 1);
        }
        let _ = writeln!(s, ",{:.10e},{:.10e},{:.10e}", b.mean, b.lo, b.hi);
    }
    Ok(s)
}

fn trace_csv(out: &ChainOutput) -> String {
    let mut cols = vec!["sample".to_string()];
    let two_d = !out.tau.is_empty();
    if two_d {
        cols.extend(["tau".into(), "spearman".into()]);
    }
    if !out.hellinger.is_empty() {
        cols.push("hellinger".into());
    }
    if let Some(r) = out.corr.first() {
        cols.extend((0..r.len()).map(|k| format!("r{}", k + 1)));
    }
    if let Some(p) = out.marginal_params.first() {
        for k in 0..p.len() {
            cols.extend([format!("mean{}", k + 1), format!("log_sd{}", k + 1)]);
        }
    }
    let mut s = cols.join(",") + "\n";
    for i in 0..out.n_samples {
        let _ = write!(s, "{}", i + 1);
        if two_d {
            let _ = write!(s, ",{:.10e},{:.10e}", out.tau[i], out.spearman[i]);
        }
        if let Some(h) = out.hellinger.get(i) {
            let _ = write!(s, ",{h:.10e}");
        }
        for r in out.corr.get(i).into_iter().flatten() {
            let _ = write!(s, ",{r:.10e}");
        }
        for p in out.marginal_params.get(i).into_iter().flatten() {
            let _ = write!(s, ",{:.10e},{:.10e}", p[0], p[1]);
        }
        s.push('\n');
    }
    s
}

fn acceptance_report(out: &ChainOutput) -> serde_json::Value {
    let stats = |m: gridcop::mcmc::MoveStats| {
        json!({ "proposed": m.proposed, "accepted": m.accepted, "rate": if m.proposed > 0 { json!(m.rate()) } else { json!(null) } })
    };
    json!({
        "iterations": out.iterations,
        "burn_in": out.burn_in,
        "thinning": out.thinning,
        "proposals_per_iteration": out.proposals_per_iteration,
        "total_proposals": out.total_proposals(),
        "samples": out.n_samples,
        "copula": stats(out.acceptance.copula),
        "correlation": stats(out.acceptance.correlation),
        "marginal": stats(out.acceptance.marginal),
    })
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let reference = a.copula.config().build()?;
    let d = reference.dims();
    let margs = match a.scale {
        Scale::Normal => vec![KnownMarginal::Normal { mean: 0.0, sd: 1.0 }; d],
        Scale::Copula => vec![KnownMarginal::Uniform; d],
    };
    let data = generate_dataset(&reference, a.n, &margs, a.seed)?;
    let names: Vec<String> = (1..=d).map(|i| format!("y{i}")).collect();
    match &a.out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| Error::Io { path: p.display().to_string(), msg: e.to_string() })?;
            io::write_csv(f, &data, &names)
        }
        None => io::write_csv(std::io::stdout().lock(), &data, &names),
    }
}

/// Loads a copula from a copula file, a chain (posterior mean), or a fit
/// output directory.
fn load_any_copula(path: &Path) -> Result<GridCopula> {
    if path.is_dir() {
        return io::load_copula(&path.join("posterior_mean.copula"));
    }
    let head = std::fs::read(path).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
    if head.starts_with(io::CHAIN_MAGIC.as_bytes()) || head.starts_with(b"GRIDCOPB") {
        io::read_chain(path)?.posterior_mean()
    } else {
        io::read_copula(head.as_slice())
    }
}

fn measures(a: &MeasuresArgs) -> Result<()> {
    let c = load_any_copula(&a.path)?;
    let c2 = if c.grid().dims() == 2 { c.clone() } else { c.bivariate_margin(0, 1)? };
    println!("tau = {:.10}", kendall_tau(&c2)?);
    println!("spearman = {:.10}", spearman_rho(&c2)?);
    if let Some(family) = a.reference_family {
        let cfg = CopulaConfig { rho: a.rho, theta: a.theta, tau: a.tau, ..CopulaConfig::family(family) };
        let r = cfg.build()?;
        let fine = c.grid().subdivide(a.refinement).map_err(|e| e.into_config("refinement"))?;
        let target = GridCopula::project(&r, &fine)?;
        println!("hellinger = {:.10}", hellinger(&c, &target)?);
        println!("ise = {:.10}", integrated_squared_error(&c, &target)?);
    }
    Ok(())
}

fn project(a: &ProjectArgs) -> Result<()> {
    let r = a.copula.config().build()?;
    let g = Grid::uniform(r.dims(), a.m).map_err(|e| e.into_config("m"))?;
    io::save_copula(&a.out, &GridCopula::project(&r, &g)?)
}

fn study(a: &StudyArgs, comparison: bool) -> Result<()> {
    let mut spec = match (&a.spec, comparison) {
        (Some(p), _) => StudySpec::load(p)?,
        (None, false) => StudySpec::ModelStudy(if a.paper_scale { ModelStudySpec::paper_scale() } else { ModelStudySpec::desk() }),
        (None, true) => StudySpec::ComparisonStudy(if a.paper_scale {
            ComparisonStudySpec::paper_scale()
        } else {
            ComparisonStudySpec::desk()
        }),
    };
    if let Some(seed) = a.seed {
        match &mut spec {
            StudySpec::ModelStudy(s) => s.seed = seed,
            StudySpec::ComparisonStudy(s) => s.seed = seed,
        }
    }
    create_dir(&a.out)?;
    write(&a.out.join("spec.toml"), spec.to_toml())?;
    match (spec, comparison) {
        (StudySpec::ModelStudy(s), false) => {
            let res = run_model_study(&s)?;
            res.write(&a.out)?;
            print!("{}", res.summary_csv());
        }
        (StudySpec::ComparisonStudy(s), true) => {
            let res = run_comparison_study(&s)?;
            res.write(&a.out)?;
            print!("{}", res.table_csv(false));
        }
        (_, true) => return Err(Error::Config("study-comparison needs kind = \"comparison-study\"".into())),
        (_, false) => return Err(Error::Config("study-models needs kind = \"model-study\"".into())),
    }
    Ok(())
}

fn prior_sim(a: &PriorSimArgs) -> Result<()> {
    let g = Grid::uniform(2, a.m).map_err(|e| e.into_config("m"))?;
    let cfg = SamplerConfig {
        iterations: a.iterations,
        burn_in: a.burn_in,
        thinning: a.thinning,
        seed: derive_seed(a.seed, 0),
        hit_and_run_r: a.tuning_r,
        ..Default::default()
    };
    cfg.validate()?;
    if !(a.alpha_star > 0.0) {
        return Err(Error::Config(format!("alpha_star must be positive, got {}", a.alpha_star)));
    }
    let rs = prior_simulation_r(&g, a.alpha_star, &cfg)?;
    let mut s = String::from("r\n");
    for r in &rs {
        let _ = writeln!(s, "{r:.10e}");
    }
    write(&a.out, s)?;
    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
    let sd = (rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rs.len() as f64 - 1.0)).sqrt();
    println!("draws = {}", rs.len());
    println!("mean = {mean:.6}");
    println!("sd = {sd:.6}");
    Ok(())
}
