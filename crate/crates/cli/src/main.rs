use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jnplus::corpus::{gen, GeneratorSpec, Kind, Manifest};
use jnplus::grid::{AnyGrid, GridFunction, GridMode};
use jnplus::maximal::{check_p2, check_stopping, cz_decompose, maximal_function, weak_type_check};
use jnplus::maximal::{MaximalFieldJson, Variant};
use jnplus::report::{first_failure, VerificationReport};
use jnplus::scalar::{parse_rational, Exponent, Sample, Scalar};
use jnplus::seminorm::{
    antichain_oracle, bmo_plus_dyadic, bmo_plus_limit_form, jnp_classical_dyadic, jnp_plus_dyadic,
    Functional,
};
use jnplus::verify::{
    default_lambda_grid, theorem_check_with, LemmaContext, LemmaParams, TheoremRun,
};
use jnplus::{io, with_grid, DyadicCube};
use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "jnplus", version, about = "Forward-in-time dyadic maximal functions, stopping times and JN_p+ seminorms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid function.
    Gen(GenArgs),
    /// Dyadic seminorm of a grid function on its root.
    Seminorm(SeminormArgs),
    /// Forward-in-time dyadic maximal field.
    Maximal(MaximalArgs),
    /// Stopping-time decomposition at each λ, with its checks.
    Decompose(DecomposeArgs),
    /// Good-λ lemma and weak-type theorem checks.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Brute-force antichain maximum compared with the tree recursion.
    Oracle(SeminormArgs),
}

#[derive(Subcommand)]
enum VerifyCommand {
    GoodLambda(VerifyArgs),
    Theorem(VerifyArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Grid file (payload with `.json` sidecar, or a JSON document).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Convert the input to `f64` or `fixed:D` before running.
    #[arg(long)]
    mode: Option<String>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long = "level", short = 'L', default_value_t = 3)]
    level: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "fixed:1024")]
    mode: String,
    /// Exponent of the one-sided power profile.
    #[arg(long, default_value = "1/2")]
    alpha: String,
    /// Value of the constant profile.
    #[arg(long, default_value = "1")]
    value: String,
    /// Output path; a `.json` path gets a single JSON document.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Constant,
    UniformRandom,
    DyadicMartingale,
    TimeStep,
    OneSidedPower,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeminormKind {
    JnpPlus,
    JnpClassical,
    BmoPlus,
    BmoPlusLimit,
}

#[derive(Args)]
struct SeminormArgs {
    #[command(flatten)]
    io: InputArgs,
    #[arg(long, default_value = "2")]
    p: String,
    #[arg(long, value_enum, default_value = "jnp-plus")]
    functional: SeminormKind,
}

#[derive(Args)]
struct MaximalArgs {
    #[command(flatten)]
    io: InputArgs,
    #[arg(long, default_value = "grid")]
    variant: String,
    /// Also write `cell,value` rows.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    io: InputArgs,
    /// Comma-separated levels.
    #[arg(long)]
    lambda: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    io: InputArgs,
    #[arg(long, default_value = "2")]
    p: String,
    /// Defaults to `2^-(n+1)`.
    #[arg(long)]
    b: Option<String>,
    /// Comma-separated levels, or `auto` for the default sweep.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Run every entry of a corpus manifest (`pinned` for the bundled one).
    #[arg(long, conflicts_with = "input")]
    manifest: Option<String>,
    /// Worker threads for corpus runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Outcome of a command: a JSON report and the inequalities that failed.
struct Outcome {
    report: Value,
    failed: Vec<String>,
}

impl Outcome {
    fn clean(report: Value) -> Self {
        Outcome {
            report,
            failed: Vec::new(),
        }
    }

    fn from_reports(report: Value, reports: &[&VerificationReport]) -> Self {
        let mut failed: Vec<String> = reports.iter().filter(|r| !r.ok()).map(|r| r.id.clone()).collect();
        failed.dedup();
        Outcome { report, failed }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) if out.failed.is_empty() => ExitCode::SUCCESS,
        Ok(out) => {
            let mut ids = out.failed;
            ids.sort();
            ids.dedup();
            eprintln!("failed: {}", ids.join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Seminorm(a) => emit(&a.io.out.clone(), cmd_seminorm(a)?),
        Command::Maximal(a) => emit(&a.io.out.clone(), cmd_maximal(a)?),
        Command::Decompose(a) => emit(&a.io.out.clone(), cmd_decompose(a)?),
        Command::Oracle(a) => emit(&a.io.out.clone(), cmd_oracle(a)?),
        Command::Verify(VerifyCommand::GoodLambda(a)) => emit(&a.io.out.clone(), cmd_verify(a, false)?),
        Command::Verify(VerifyCommand::Theorem(a)) => emit(&a.io.out.clone(), cmd_verify(a, true)?),
    }
}

fn emit(out: &Option<PathBuf>, outcome: Outcome) -> Result<Outcome> {
    let mut text = serde_json::to_string_pretty(&outcome.report)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("--out {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(outcome)
}

fn parse_mode(s: &str) -> Result<GridMode> {
    s.parse().map_err(|e| anyhow!("--mode: {e}"))
}

fn parse_p(s: &str) -> Result<Exponent> {
    s.parse().map_err(|e| anyhow!("--p: {e}"))
}

fn load_input(a: &InputArgs) -> Result<AnyGrid> {
    let path = a.input.as_ref().ok_or_else(|| anyhow!("--input is required"))?;
    let g = io::load(path).with_context(|| format!("--input {}", path.display()))?;
    match &a.mode {
        Some(m) => Ok(g.into_mode(parse_mode(m)?).context("--mode")?),
        None => Ok(g),
    }
}

fn parse_lambdas(s: &str) -> Result<Vec<BigRational>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let l = parse_rational(part).map_err(|e| anyhow!("--lambda: {e}"))?;
        if l <= BigRational::from_integer(BigInt::from(0)) {
            bail!("--lambda: {part} must be positive");
        }
        out.push(l);
    }
    if out.is_empty() {
        bail!("--lambda: no levels given");
    }
    Ok(out)
}

fn cmd_gen(a: GenArgs) -> Result<Outcome> {
    let kind = match a.kind {
        GenKind::Constant => Kind::Constant { value: a.value.clone() },
        GenKind::UniformRandom => Kind::UniformRandom,
        GenKind::DyadicMartingale => Kind::DyadicMartingale,
        GenKind::TimeStep => Kind::TimeStep,
        GenKind::OneSidedPower => Kind::OneSidedPower { alpha: a.alpha.clone() },
    };
    let spec = GeneratorSpec {
        kind,
        n: a.n,
        level: a.level,
        seed: a.seed,
        mode: parse_mode(&a.mode)?,
    };
    let g = gen(&spec)?;
    io::save_any(&g, &a.out).with_context(|| format!("--out {}", a.out.display()))?;
    Ok(Outcome::clean(json!(spec)))
}

fn cmd_seminorm(a: SeminormArgs) -> Result<Outcome> {
    let g = load_input(&a.io)?;
    let p = parse_p(&a.p)?;
    let report = with_grid!(&g, f => seminorm_report(f, &p, a.functional)?);
    Ok(Outcome::clean(report))
}

fn seminorm_report<T: Sample>(f: &GridFunction<T>, p: &Exponent, kind: SeminormKind) -> Result<Value> {
    let root = f.root();
    Ok(match kind {
        SeminormKind::JnpPlus => serde_json::to_value(jnp_plus_dyadic(f, &root, p)?)?,
        SeminormKind::JnpClassical => serde_json::to_value(jnp_classical_dyadic(f, &root, p)?)?,
        SeminormKind::BmoPlus => json!({"functional": "bmo-plus", "max": bmo_plus_dyadic(f, &root)?}),
        SeminormKind::BmoPlusLimit => {
            json!({"functional": "bmo-plus-limit", "max": bmo_plus_limit_form(f, &root)?})
        }
    })
}

fn cmd_oracle(a: SeminormArgs) -> Result<Outcome> {
    let g = load_input(&a.io)?;
    let p = parse_p(&a.p)?;
    let functional = match a.functional {
        SeminormKind::JnpPlus => Functional::JnpPlus,
        SeminormKind::JnpClassical => Functional::JnpClassical,
        _ => bail!("--functional: the oracle covers jnp-plus and jnp-classical"),
    };
    with_grid!(&g, f => {
        let root = f.root();
        let oracle = antichain_oracle(f, &root, &p, functional)?;
        let dp = match functional {
            Functional::JnpPlus => jnp_plus_dyadic(f, &root, &p)?,
            Functional::JnpClassical => jnp_classical_dyadic(f, &root, &p)?,
        };
        let agree = match (oracle.weight(), dp.weight()) {
            (Scalar::Exact(x), Scalar::Exact(y)) => x == y,
            (x, y) => x.le_tol(y, 1e-12) && y.le_tol(x, 1e-12),
        };
        let check = VerificationReport::new("oracle", oracle.weight().clone(), dp.weight().clone(), agree);
        let report = json!({"oracle": oracle, "recursion": dp, "check": check});
        Ok(Outcome::from_reports(report, &[&check]))
    })
}

fn cmd_maximal(a: MaximalArgs) -> Result<Outcome> {
    let g = load_input(&a.io)?;
    let variant: Variant = a.variant.parse().map_err(|e| anyhow!("--variant: {e}"))?;
    let view = with_grid!(&g, f => {
        let m = maximal_function(f, &f.root(), variant)?;
        MaximalFieldJson::new(f, &m)
    });
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("--csv {}", path.display()))?;
        w.write_record(["cell", "value"])?;
        for (c, v) in view.cells.iter().zip(&view.values) {
            w.write_record([c.to_string(), v.decimal()])?;
        }
        w.flush()?;
    }
    Ok(Outcome::clean(serde_json::to_value(&view)?))
}

fn cmd_decompose(a: DecomposeArgs) -> Result<Outcome> {
    let g = load_input(&a.io)?;
    let lambdas = parse_lambdas(&a.lambda)?;
    with_grid!(&g, f => {
        let root = f.root();
        let field = maximal_function(f, &root, Variant::Grid)?;
        let mut entries = Vec::new();
        let mut all = Vec::new();
        for l in &lambdas {
            let dec = cz_decompose(f, &root, l)?;
            let mut reports = check_stopping(f, &dec, &field);
            reports.push(check_p2(f, &dec));
            reports.extend(weak_type_check(f, &root, l)?);
            entries.push(json!({"decomposition": dec, "reports": reports}));
            all.extend(reports);
        }
        let refs: Vec<&VerificationReport> = all.iter().collect();
        Ok(Outcome::from_reports(json!({ "levels": entries }), &refs))
    })
}

/// One grid to verify: a file, or a corpus entry.
struct Job {
    label: Value,
    grid: AnyGrid,
}

fn corpus_jobs(which: &str) -> Result<Vec<Job>> {
    let manifest = if which == "pinned" {
        Manifest::pinned()
    } else {
        Manifest::load(Path::new(which)).with_context(|| format!("--manifest {which}"))?
    };
    manifest
        .entries
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let grid = gen(&spec).with_context(|| format!("--manifest entry {i}"))?;
            Ok(Job {
                label: json!({"index": i, "spec": spec}),
                grid,
            })
        })
        .collect()
}

fn cmd_verify(a: VerifyArgs, theorem: bool) -> Result<Outcome> {
    let p = parse_p(&a.p)?;
    let b = a.b.as_deref().map(parse_rational).transpose().map_err(|e| anyhow!("--b: {e}"))?;
    let lambdas = match a.lambda.as_str() {
        "auto" => None,
        s => Some(parse_lambdas(s)?),
    };
    let jobs = match &a.manifest {
        Some(m) => {
            let mut jobs = corpus_jobs(m)?;
            if let Some(mode) = &a.io.mode {
                let mode = parse_mode(mode)?;
                for j in &mut jobs {
                    j.grid = j.grid.clone().into_mode(mode).context("--mode")?;
                }
            }
            jobs
        }
        None => {
            let grid = load_input(&a.io)?;
            let label = json!({"input": a.io.input.as_ref().map(|p| p.display().to_string())});
            vec![Job { label, grid }]
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .context("--jobs")?;
    type JobResult = Result<(Value, Vec<VerificationReport>, Option<TheoremRun>)>;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let params = params_for(&job.grid, &p, b.as_ref())?;
                with_grid!(&job.grid, f => verify_one(f, &params, lambdas.as_deref(), theorem))
                    .map(|(v, r, t)| (json!({"entry": job.label, "result": v}), r, t))
            })
            .collect()
    });
    let mut entries = Vec::new();
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for r in results {
        let (v, rs, run) = r?;
        entries.push(v);
        reports.extend(rs);
        runs.extend(run);
    }
    if let Some(path) = &a.csv {
        write_verify_csv(path, &entries, &runs, theorem)?;
    }
    let refs: Vec<&VerificationReport> = reports.iter().collect();
    let pass = first_failure(&reports).is_none();
    Ok(Outcome::from_reports(json!({"pass": pass, "entries": entries}), &refs))
}

fn params_for(g: &AnyGrid, p: &Exponent, b: Option<&BigRational>) -> Result<LemmaParams> {
    let n = g.dim();
    let b = b
        .cloned()
        .unwrap_or_else(|| BigRational::new(BigInt::from(1), BigInt::from(1) << (n + 1)));
    LemmaParams::new(n, p.clone(), b).map_err(|e| anyhow!("--b: {e}"))
}

fn verify_one<T: Sample>(
    f: &GridFunction<T>,
    params: &LemmaParams,
    lambdas: Option<&[BigRational]>,
    theorem: bool,
) -> Result<(Value, Vec<VerificationReport>, Option<TheoremRun>)> {
    let root: DyadicCube = f.root();
    let ctx = LemmaContext::new(f, &root, &params.p)?;
    let grid = match lambdas {
        Some(l) => l.to_vec(),
        None => default_lambda_grid(&ctx, params),
    };
    if theorem {
        let run = theorem_check_with(&ctx, params, &grid)?;
        let reports = run.reports.clone();
        return Ok((serde_json::to_value(&run)?, reports, Some(run)));
    }
    let mut levels = Vec::new();
    let mut all = Vec::new();
    for l in &grid {
        let reps = ctx.good_lambda(params, l)?;
        levels.push(json!({"lambda": Scalar::Exact(l.clone()), "reports": reps}));
        all.extend(reps);
    }
    let value = json!({
        "params": params,
        "k_plus": ctx.k_plus(),
        "levels": levels,
    });
    Ok((value, all, None))
}

#[derive(Serialize)]
struct TheoremRow {
    entry: usize,
    lambda: String,
    #[serde(rename = "E_grid")]
    e_grid: String,
    #[serde(rename = "E_aug")]
    e_aug: String,
    dist: String,
    bound: String,
    pass: bool,
}

fn write_verify_csv(path: &Path, entries: &[Value], runs: &[TheoremRun], theorem: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("--csv {}", path.display()))?;
    if theorem {
        for (i, run) in runs.iter().enumerate() {
            for r in &run.records {
                w.serialize(TheoremRow {
                    entry: i,
                    lambda: r.lambda.decimal(),
                    e_grid: r.e_grid.decimal(),
                    e_aug: r.e_aug.decimal(),
                    dist: r.dist.decimal(),
                    bound: r.bound.decimal(),
                    pass: r.pass,
                })?;
            }
        }
    } else {
        w.write_record(["entry", "lambda", "inequality-id", "admissible", "pass", "lhs", "rhs"])?;
        for (i, e) in entries.iter().enumerate() {
            let levels = e["result"]["levels"].as_array().cloned().unwrap_or_default();
            for level in levels {
                let lambda = level["lambda"]["decimal"].as_str().unwrap_or("").to_string();
                for r in level["reports"].as_array().cloned().unwrap_or_default() {
                    let side = |k: &str| r[k]["decimal"].as_str().unwrap_or("").to_string();
                    w.write_record([
                        i.to_string(),
                        lambda.clone(),
                        r["inequality-id"].as_str().unwrap_or("").to_string(),
                        r["admissible"].to_string(),
                        r["pass"].to_string(),
                        side("lhs"),
                        side("rhs"),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
