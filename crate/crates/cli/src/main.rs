//! `dslab`: command-line front end for the analysis pipeline.
//!
//! Every subcommand writes one document (JSON or CSV) to `--out`, or to standard output
//! when `--out` is absent. Diagnostics go to standard error. Exit status is 0 on success,
//! 2 when the symbol is rejected as outside the admissible class, 1 for any other failure.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dslab_core::approx::{
    an_bounds, boundary_regularity, compactness_index, lower_bound_witness, omega_estimate, truncated_matrix_probe, BoundInput,
    ExpForm, OmegaConfig, ProbeConfig, RegularityProfile, WitnessConfig,
};
use dslab_core::carleson::{kappa_fit, FitConfig, SamplerConfig};
use dslab_core::classify::{analyze, Analysis};
use dslab_core::flat::{
    build_flat_polynomial, build_separated_example, certify_nonnegative, counterexample_factory, flat_power_target, parse_polynomial,
    CexKind, SolveMode,
};
use dslab_core::genset::SearchConfig;
use dslab_core::keylemma::{attempt_factorization, grid_sweep, keylemma_equations, solve_im_b, KeylemmaParams};
use dslab_core::lift::BoundaryConfig;
use dslab_core::report::{AnalysisReport, LiftRecord, TOOL, VERSION};
use dslab_core::scalar::{format_rational, parse_rational};
use dslab_core::symbol::{parse_symbol_input, DirichletSymbol};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde_json::{json, Value};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "dslab", version, about = "Compactness analysis for Dirichlet polynomial symbols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Profile, boundary points and compactness verdict of a symbol.
    Analyze(AnalyzeArgs),
    /// Carleson box-measure exponent fit.
    Carleson(CarlesonArgs),
    /// Local factorization checks for the two-variable quadratic family.
    Keylemma(KeylemmaArgs),
    /// Boundary-flat polynomials, separated examples and counterexample families.
    Construct(ConstructArgs),
    /// Approximation-number diagnostics: index, contact exponent, lattice witness, matrix probe.
    Approx(ApproxArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct SymbolSource {
    /// Symbol text such as `9/2 - 2^-s - 3^-s`, or a path to a JSON symbol file.
    #[arg(long, allow_hyphen_values = true)]
    symbol: Option<String>,
    /// File holding the symbol in text or JSON form.
    #[arg(long)]
    file: Option<PathBuf>,
}

impl SymbolSource {
    fn load(&self) -> Result<DirichletSymbol> {
        let text = match (&self.symbol, &self.file) {
            (Some(s), _) if s.ends_with(".json") && std::path::Path::new(s).is_file() => read(&PathBuf::from(s))?,
            (Some(s), _) => s.clone(),
            (None, Some(p)) => read(p)?,
            (None, None) => bail!(Usage("one of --symbol or --file is required".into())),
        };
        Ok(parse_symbol_input(text.trim())?)
    }
}

fn read(p: &PathBuf) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: SymbolSource,
    #[command(flatten)]
    output: Output,
    /// Recorded in the report; seeds the Carleson fit when `--fit` is given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attach a Carleson exponent fit.
    #[arg(long)]
    fit: bool,
    /// Sample count per scale for `--fit`.
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
}

#[derive(Args, Debug)]
struct CarlesonArgs {
    #[command(flatten)]
    source: SymbolSource,
    #[command(flatten)]
    output: Output,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.2)]
    eps_max: f64,
    #[arg(long, default_value_t = 0.0125)]
    eps_min: f64,
    /// Geometric ratio between consecutive scales.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
}

#[derive(Args, Debug)]
struct KeylemmaArgs {
    #[command(flatten)]
    output: Output,
    #[arg(long, required_unless_present = "grid")]
    a1: Option<String>,
    #[arg(long, required_unless_present = "grid")]
    a2: Option<String>,
    /// `Im c`; defaults to 0.
    #[arg(long)]
    imc: Option<String>,
    /// `Im b1`; defaults to the first-order closed form (0 with `--exact`).
    #[arg(long)]
    imb1: Option<String>,
    /// `Im b2`; defaults to the first-order closed form (0 with `--exact`).
    #[arg(long)]
    imb2: Option<String>,
    /// Solve in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
    /// Sweep an `n x n` grid of the admissible triangle instead of a single point.
    #[arg(long, conflicts_with_all = ["a1", "a2", "exact"])]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
#[group(id = "what", required = true, multiple = false, args = ["flat", "separated", "counterexample"])]
struct ConstructArgs {
    #[command(flatten)]
    output: Output,
    /// Flatness order k and optional block count N.
    #[arg(long, num_args = 1..=2, value_names = ["K", "N"])]
    flat: Option<Vec<u32>>,
    /// Even orders k1,k2,... of a separated-variables example.
    #[arg(long, value_delimiter = ',')]
    separated: Option<Vec<u32>>,
    #[arg(long, value_parser = parse_cex)]
    counterexample: Option<CexKind>,
    /// Family parameter for `--counterexample`.
    #[arg(long, default_value = "1/10")]
    delta: String,
    /// Polynomial `p(z1, z2, ...)` for the families that take one.
    #[arg(long, allow_hyphen_values = true)]
    poly: Option<String>,
    /// Exact rational solve for `--flat` (binary64 otherwise beyond N = 8).
    #[arg(long)]
    exact: bool,
}

fn parse_cex(s: &str) -> std::result::Result<CexKind, String> {
    s.parse().map_err(|e: dslab_core::Error| e.to_string())
}

#[derive(Args, Debug)]
#[group(id = "mode", required = true, multiple = false, args = ["eta", "omega", "witness", "probe"])]
struct ApproxArgs {
    #[command(flatten)]
    source: SymbolSource,
    #[command(flatten)]
    output: Output,
    /// Compactness index at every boundary point.
    #[arg(long)]
    eta: bool,
    /// Contact exponent and the matching upper-bound curve.
    #[arg(long)]
    omega: bool,
    /// Lattice witness near the first boundary point.
    #[arg(long)]
    witness: bool,
    /// Singular values of a truncated matrix.
    #[arg(long)]
    probe: bool,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 8.0)]
    nu: f64,
    /// Largest column index for `--probe`.
    #[arg(long = "M", default_value_t = 256)]
    max_column: usize,
    /// Monomial degree for `--probe`.
    #[arg(long = "D", default_value_t = 24)]
    degree: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    /// Carleson exponent used by the `--omega` bound curve; the sampled estimate when absent.
    #[arg(long)]
    kappa: Option<f64>,
    /// Exponent sign convention for the `omega <= 1` branch.
    #[arg(long, value_enum, default_value_t = FormArg::Corrected)]
    exp_form: FormArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormArg {
    Printed,
    Corrected,
}

/// Marks errors that should exit with the usage status.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn emit(output: &Output, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &output.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn header(command: &str) -> Value {
    json!({"tool": TOOL, "version": VERSION, "command": command})
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn json_only(output: &Output, what: &str) -> Result<()> {
    if output.format == Format::Csv {
        bail!(Usage(format!("{what} has no CSV form; use --format json")));
    }
    Ok(())
}

fn run_analysis(sym: &DirichletSymbol) -> Result<Analysis> {
    Ok(analyze(sym, &SearchConfig::default(), &BoundaryConfig::default())?)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    json_only(&a.output, "analyze")?;
    let sym = a.source.load()?;
    let analysis = run_analysis(&sym)?;
    let mut report = AnalysisReport::new(&sym, &analysis, a.seed);
    match report.clone().with_regularity(&analysis) {
        Ok(r) => report = r,
        Err(e) => eprintln!("note: regularity profile skipped: {e}"),
    }
    if a.fit {
        let cfg = FitConfig { samples: a.samples, sampler: SamplerConfig { seed: a.seed, ..Default::default() }, ..Default::default() };
        report = report.with_carleson(kappa_fit(&analysis.lift, &cfg)?);
    }
    report.validate()?;
    eprintln!("{}: {:?} ({})", sym, report.verdict.verdict, report.verdict.rule.tag());
    emit(&a.output, &report.to_json_string()?)
}

fn cmd_carleson(a: &CarlesonArgs) -> Result<()> {
    let sym = a.source.load()?;
    let analysis = run_analysis(&sym)?;
    let cfg = FitConfig {
        eps_max: a.eps_max,
        eps_min: a.eps_min,
        ratio: a.ratio,
        samples: a.samples,
        sampler: SamplerConfig { seed: a.seed, ..Default::default() },
    };
    let fit = kappa_fit(&analysis.lift, &cfg)?;
    let text = match a.output.format {
        Format::Json => to_json(&merge(
            header("carleson"),
            json!({"seed": a.seed, "symbol": sym.to_string(), "config": cfg, "fit": fit}),
        ))?,
        Format::Csv => {
            let mut s = String::from("eps,tau_star,measure,ci95\n");
            for i in 0..fit.eps_grid.len() {
                s += &format!("{},{},{},{}\n", fit.eps_grid[i], fit.tau_star[i], fit.sup_tau_values[i], fit.ci95[i]);
            }
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            s += &format!("fit,kappa_hat={},stderr={},verdict={:?}\n", opt(fit.kappa_hat), opt(fit.stderr), fit.verdict);
            s
        }
    };
    eprintln!("kappa_hat = {:?}, verdict {:?}", fit.kappa_hat, fit.verdict);
    emit(&a.output, &text)
}

fn rational(name: &str, s: &str) -> Result<BigRational> {
    parse_rational(s).ok_or_else(|| anyhow!(Usage(format!("--{name}: cannot parse '{s}' as a rational number"))))
}

fn real(name: &str, s: &str) -> Result<f64> {
    if let Ok(x) = s.parse::<f64>() {
        return Ok(x);
    }
    rational(name, s)?.to_f64().ok_or_else(|| anyhow!(Usage(format!("--{name}: '{s}' is out of range"))))
}

fn cmd_keylemma(a: &KeylemmaArgs) -> Result<()> {
    if let Some(n) = a.grid {
        if n == 0 {
            bail!(Usage("--grid needs n >= 1".into()));
        }
        let pts = grid_sweep(n, n)?;
        let text = match a.output.format {
            Format::Json => {
                let obstructed = pts.iter().filter(|p| p.obstruction.is_some()).count();
                to_json(&merge(header("keylemma"), json!({"grid": n, "points": pts.len(), "obstructed": obstructed, "sweep": pts})))?
            }
            Format::Csv => {
                let mut s = String::from("a1,a2,im_c,obstructed,order,part,residual\n");
                for p in &pts {
                    match &p.obstruction {
                        Some(o) => s += &format!("{},{},{},true,{},{:?},{}\n", p.a1, p.a2, p.im_c, o.order, o.part, o.residual),
                        None => s += &format!("{},{},{},false,,,\n", p.a1, p.a2, p.im_c),
                    }
                }
                s
            }
        };
        return emit(&a.output, &text);
    }
    json_only(&a.output, "a single keylemma point")?;
    let (a1s, a2s) = (a.a1.as_deref().unwrap_or_default(), a.a2.as_deref().unwrap_or_default());
    let imcs = a.imc.as_deref().unwrap_or("0");
    let doc = if a.exact {
        let zero = || "0".to_string();
        let p = KeylemmaParams::new(
            rational("a1", a1s)?,
            rational("a2", a2s)?,
            rational("imb1", &a.imb1.clone().unwrap_or_else(zero))?,
            rational("imb2", &a.imb2.clone().unwrap_or_else(zero))?,
            rational("imc", imcs)?,
        )?;
        let att = attempt_factorization(&p)?;
        let shown = |r: &BigRational| format_rational(r);
        json!({
            "mode": "exact",
            "params": {"a1": shown(&p.a1), "a2": shown(&p.a2), "im_b1": shown(&p.im_b1), "im_b2": shown(&p.im_b2), "im_c": shown(&p.im_c)},
            "obstruction": att.obstruction,
            "constraints": att.constraints,
        })
    } else {
        let (a1, a2, c) = (real("a1", a1s)?, real("a2", a2s)?, real("imc", imcs)?);
        let (b1, b2) = match (&a.imb1, &a.imb2) {
            (Some(x), Some(y)) => (real("imb1", x)?, real("imb2", y)?),
            (None, None) => solve_im_b(a1, a2, c)?,
            _ => bail!(Usage("give both --imb1 and --imb2 or neither".into())),
        };
        let p = KeylemmaParams::new(a1, a2, b1, b2, c)?;
        let att = attempt_factorization(&p)?;
        let equations = match keylemma_equations(&p) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("note: printed-equation comparison skipped: {e}");
                None
            }
        };
        json!({"mode": "binary64", "params": p, "obstruction": att.obstruction, "constraints": att.constraints, "equations": equations})
    };
    emit(&a.output, &to_json(&merge(header("keylemma"), doc))?)
}

fn cmd_construct(a: &ConstructArgs) -> Result<()> {
    json_only(&a.output, "construct")?;
    let doc = if let Some(v) = &a.flat {
        let (k, n) = (v[0], v.get(1).copied());
        let mode = if a.exact { SolveMode::Exact } else { SolveMode::Auto };
        let f = build_flat_polynomial(&flat_power_target(k, n)?, mode)?;
        let lift = f.lift();
        let symbol = f.symbol(2).ok();
        json!({
            "kind": "flat",
            "k": k,
            "polynomial": f.to_json(),
            "symbol": symbol.as_ref().map(|s| s.to_string()),
            "symbol_json": symbol.as_ref().map(|s| s.to_json()),
            "lift": LiftRecord::from(&lift),
            "flatness_error": f.flatness_error(1000),
            "certificate": certify_nonnegative(&lift),
        })
    } else if let Some(orders) = &a.separated {
        let ex = build_separated_example(orders)?;
        json!({
            "kind": "separated",
            "orders": ex.orders,
            "parts": ex.parts.iter().map(|p| p.to_json()).collect::<Vec<_>>(),
            "symbol": ex.symbol.to_string(),
            "symbol_json": ex.symbol.to_json(),
            "lift": LiftRecord::from(&ex.lift),
            "min_away_from_zero": ex.min_away_from_zero,
            "certificate": certify_nonnegative(&ex.lift),
        })
    } else if let Some(kind) = a.counterexample {
        let delta = rational("delta", &a.delta)?;
        let poly = a.poly.as_deref().map(|t| parse_polynomial(t, 2)).transpose()?;
        let cex = counterexample_factory(kind, &delta, poly.as_ref())?;
        json!({
            "kind": "counterexample",
            "family": cex.kind,
            "delta": format_rational(&cex.delta),
            "symbol": cex.symbol.to_string(),
            "symbol_json": cex.symbol.to_json(),
            "lift": LiftRecord::from(&cex.lift),
            "certificate": cex.certificate,
        })
    } else {
        bail!(Usage("one of --flat, --separated or --counterexample is required".into()));
    };
    emit(&a.output, &to_json(&merge(header("construct"), doc))?)
}

fn first_profile(analysis: &Analysis) -> Result<RegularityProfile> {
    let scan = analysis.scan.as_ref().filter(|s| !s.points.is_empty());
    let scan = scan.ok_or_else(|| anyhow!("no boundary points: the range is restricted"))?;
    let mut last = None;
    for p in &scan.points {
        match boundary_regularity(&analysis.lift, p) {
            Ok(r) => return Ok(r),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("nonempty").into())
}

fn cmd_approx(a: &ApproxArgs) -> Result<()> {
    let sym = a.source.load()?;
    let analysis = run_analysis(&sym)?;
    let base = merge(header("approx"), json!({"symbol": sym.to_string()}));
    let text = if a.eta {
        json_only(&a.output, "approx --eta")?;
        let idx = compactness_index(&analysis.lift, &BoundaryConfig::default())?;
        eprintln!("eta = {}", idx.eta_exact);
        to_json(&merge(base, json!({"compactness_index": idx})))?
    } else if a.omega {
        json_only(&a.output, "approx --omega")?;
        let cfg = OmegaConfig { samples: a.samples, seed: a.seed, ..Default::default() };
        let c = omega_estimate(&analysis.lift, &cfg)?;
        let kappa = a.kappa.or(c.kappa_hat);
        let form = match a.exp_form {
            FormArg::Printed => ExpForm::Printed,
            FormArg::Corrected => ExpForm::Corrected,
        };
        let bounds = match kappa {
            Some(k) if !c.restricted_range => (1..=6)
                .map(|e| an_bounds(10u64.pow(e), &BoundInput::OmegaKappa { omega: c.omega_hat, kappa: k }, form))
                .collect::<dslab_core::Result<Vec<_>>>()
                .map(Some)
                .unwrap_or_else(|e| {
                    eprintln!("note: bound curve skipped: {e}");
                    None
                }),
            _ => None,
        };
        eprintln!("omega = {:.4}", c.omega_hat);
        to_json(&merge(base, json!({"seed": a.seed, "config": cfg, "contact": c, "kappa_used": kappa, "bounds": bounds})))?
    } else if a.witness {
        let profile = first_profile(&analysis)?;
        let w = lower_bound_witness(&analysis.lift, &profile, a.delta, a.nu, &WitnessConfig::default())?;
        if !w.checks.all() {
            eprintln!("warning: witness checks failed: {:?}", w.checks);
        }
        match a.output.format {
            Format::Csv => w.z_table_csv(),
            Format::Json => {
                let csv = w.z_table_csv();
                to_json(&merge(base, json!({"profile": profile, "witness": w, "z_table_csv": csv})))?
            }
        }
    } else if a.probe {
        json_only(&a.output, "approx --probe")?;
        let cfg = ProbeConfig { max_column: a.max_column, degree: a.degree, ..Default::default() };
        let r = truncated_matrix_probe(&sym, &cfg)?;
        if !r.reliable {
            eprintln!("warning: probe truncation is not reliable (min column mass {:.3})", r.min_column_mass);
        }
        to_json(&merge(base, json!({"config": cfg, "probe": r})))?
    } else {
        bail!(Usage("one of --eta, --omega, --witness or --probe is required".into()));
    };
    emit(&a.output, &text)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DSL_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow!(Usage(format!("DSL_THREADS must be a positive integer, got '{v}'"))))?;
        if n == 0 {
            bail!(Usage("DSL_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(core) = e.downcast_ref::<dslab_core::Error>() {
        if matches!(core, dslab_core::Error::NotInClass(_)) {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Carleson(a) => cmd_carleson(a),
        Command::Keylemma(a) => cmd_keylemma(a),
        Command::Construct(a) => cmd_construct(a),
        Command::Approx(a) => cmd_approx(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
