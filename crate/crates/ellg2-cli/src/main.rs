// ellg2: evaluate the scalar kernels, run verification checks, or sweep a
// check along one parameter axis. Exit code 0 means every executed check
// passed, 1 means at least one failed, 2 means the invocation or its
// configuration was unusable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use ellg2::integrand::ParameterSet;
use ellg2::special_functions::{
    e_pair, elliptic_gamma, qpoch_double_inf, qpoch_inf, theta, Nome, DEFAULT_TRUNC_TOL,
};
use ellg2::verifier::{qde_rhs_ratio, run_check, Report, SuiteConfig, CHECK_IDS};

#[derive(Parser)]
#[command(name = "ellg2", version, about = "Verification toolkit for a two-torus integral family")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one scalar kernel and print its value
    Eval {
        #[command(subcommand)]
        f: EvalFn,
    },
    /// Run one check by id, or the configured set with id "all"
    Verify(VerifyArgs),
    /// Re-run one check along a grid on a single parameter axis
    Sweep(SweepArgs),
}

/// Complex literals are RE, IMi, or RE+IMi / RE-IMi, e.g. 0.72+0.3i.
fn parse_complex(s: &str) -> Result<Complex64, String> {
    let bad = || format!("'{s}' is not a complex literal (expected RE, IMi, or RE+IMi)");
    let t = s.trim();
    let Some(body) = t.strip_suffix(['i', 'I']) else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re_str, im_str) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let re = re_str.parse::<f64>().map_err(|_| bad())?;
    let im = match im_str {
        "+" => 1.0,
        "-" => -1.0,
        _ => im_str.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(Complex64::new(re, im))
}

/// Shortest decimal that parses back to the same double, in scientific
/// notation where that is shorter (same writer the JSON output uses).
fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| format!("{x}"))
}

/// fmt_f64 composed into the same RE+IMi syntax the parser accepts.
fn fmt_complex(v: Complex64) -> String {
    if v.im == 0.0 {
        fmt_f64(v.re)
    } else if v.im < 0.0 {
        format!("{}-{}i", fmt_f64(v.re), fmt_f64(-v.im))
    } else {
        format!("{}+{}i", fmt_f64(v.re), fmt_f64(v.im))
    }
}

#[derive(Subcommand)]
enum EvalFn {
    /// Infinite q-Pochhammer (u; q)
    Qpoch {
        #[arg(long, value_parser = parse_complex)]
        u: Complex64,
        #[arg(long, value_parser = parse_complex)]
        q: Complex64,
    },
    /// Double infinite Pochhammer (u; p, q)
    Qpoch2 {
        #[arg(long, value_parser = parse_complex)]
        u: Complex64,
        #[arg(long, value_parser = parse_complex)]
        p: Complex64,
        #[arg(long, value_parser = parse_complex)]
        q: Complex64,
    },
    /// Theta function theta(u; p)
    Theta {
        #[arg(long, value_parser = parse_complex)]
        u: Complex64,
        #[arg(long, value_parser = parse_complex)]
        p: Complex64,
    },
    /// Elliptic gamma function Gamma(u; p, q)
    Gamma {
        #[arg(long, value_parser = parse_complex)]
        u: Complex64,
        #[arg(long, value_parser = parse_complex)]
        p: Complex64,
        #[arg(long, value_parser = parse_complex)]
        q: Complex64,
    },
    /// Theta pair e(u, v; p)
    E {
        #[arg(long, value_parser = parse_complex)]
        u: Complex64,
        #[arg(long, value_parser = parse_complex)]
        v: Complex64,
        #[arg(long, value_parser = parse_complex)]
        p: Complex64,
    },
    /// Contiguity coefficient of the double integral under a_k -> q a_k,
    /// with a5 rebuilt from the balancing condition
    ThetaRatio {
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = parse_complex)]
        p: Complex64,
        #[arg(long, value_parser = parse_complex)]
        q: Complex64,
        #[arg(long, value_parser = parse_complex)]
        a1: Complex64,
        #[arg(long, value_parser = parse_complex)]
        a2: Complex64,
        #[arg(long, value_parser = parse_complex)]
        a3: Complex64,
        #[arg(long, value_parser = parse_complex)]
        a4: Complex64,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        epsilon: i32,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check id, or "all" for the configured set
    check_id: String,
    /// Suite configuration (JSON); defaults apply field by field
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override for the sampled checks
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report table here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SweepAxis {
    A1,
    A2,
    A3,
    A4,
    P,
    Q,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::A1 => "a1",
            SweepAxis::A2 => "a2",
            SweepAxis::A3 => "a3",
            SweepAxis::A4 => "a4",
            SweepAxis::P => "p",
            SweepAxis::Q => "q",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Spacing {
    Linear,
    Log,
}

#[derive(Args)]
struct SweepArgs {
    /// Check id to re-run at each grid point
    check_id: String,
    /// Parameter axis; a1..a4 set the modulus and keep the phase
    #[arg(long, value_enum)]
    axis: SweepAxis,
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, allow_hyphen_values = true)]
    to: f64,
    /// Number of grid points (endpoints included)
    #[arg(long)]
    steps: usize,
    /// Grid spacing; log needs positive endpoints
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    spacing: Spacing,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Serialize)]
struct SweepRow {
    axis: &'static str,
    value: f64,
    report: Report,
}

/// Usage or configuration failure: message for stderr, exit status 2.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Usage> {
    if let Ok(s) = std::env::var("ELLG2_THREADS") {
        let n: usize = s
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Usage(format!("ELLG2_THREADS must be a positive integer, got '{s}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.cmd {
        Cmd::Eval { f } => {
            println!("{}", fmt_complex(eval(f)?));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Sweep(args) => cmd_sweep(args),
    }
}

fn eval(f: EvalFn) -> Result<Complex64, Usage> {
    Ok(match f {
        EvalFn::Qpoch { u, q } => qpoch_inf(u, q, DEFAULT_TRUNC_TOL)?,
        EvalFn::Qpoch2 { u, p, q } => qpoch_double_inf(u, &Nome::new(p, q)?)?,
        EvalFn::Theta { u, p } => theta(u, p)?,
        EvalFn::Gamma { u, p, q } => elliptic_gamma(u, &Nome::new(p, q)?)?,
        EvalFn::E { u, v, p } => e_pair(u, v, p)?,
        EvalFn::ThetaRatio { k, p, q, a1, a2, a3, a4, epsilon } => {
            let nome = Nome::new(p, q)?;
            let aset = ParameterSet::make_balanced([a1, a2, a3, a4], epsilon, &nome)?;
            qde_rhs_ratio(&aset, k, &nome, None)?
        }
    })
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<SuiteConfig, Usage> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Usage(format!("cannot parse {}: {e}", p.display())))?
        }
        None => SuiteConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, body: String) -> Result<(), Usage> {
    match out {
        Some(p) => std::fs::write(p, body + "\n")
            .map_err(|e| Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn exit_for(reports: &[Report]) -> ExitCode {
    if reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn progress(r: &Report) {
    eprintln!(
        "{:<22} {}  abs {:.3e}  rel {:.3e}  tol {:.1e}  {:.0} ms",
        r.check_id,
        if r.pass { "pass" } else { "FAIL" },
        r.abs_err,
        r.rel_err,
        r.tol,
        r.runtime_ms
    );
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Usage> {
    let cfg = load_config(&args.config, args.seed)?;
    let ids: Vec<String> = if args.check_id == "all" {
        match &cfg.checks {
            Some(list) => list.clone(),
            None => CHECK_IDS.iter().map(|s| s.to_string()).collect(),
        }
    } else if CHECK_IDS.contains(&args.check_id.as_str()) {
        vec![args.check_id.clone()]
    } else {
        return Err(Usage(format!(
            "unknown check id '{}'; known ids: all, {}",
            args.check_id,
            CHECK_IDS.join(", ")
        )));
    };

    let mut reports = Vec::with_capacity(ids.len());
    for id in &ids {
        let r = run_check(id, &cfg);
        progress(&r);
        reports.push(r);
    }

    let body = match args.format {
        Format::Json => serde_json::to_string_pretty(&reports)?,
        Format::Csv => {
            let mut s = String::from(REPORT_CSV_HEADER);
            for r in &reports {
                s.push('\n');
                s.push_str(&report_csv_row(r));
            }
            s
        }
    };
    emit(&args.out, body)?;
    Ok(exit_for(&reports))
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Usage> {
    if args.steps == 0 {
        return Err(Usage("the sweep grid is empty (--steps must be at least 1)".into()));
    }
    if !args.from.is_finite() || !args.to.is_finite() {
        return Err(Usage("--from and --to must be finite".into()));
    }
    if args.spacing == Spacing::Log && !(args.from > 0.0 && args.to > 0.0) {
        return Err(Usage("log spacing needs positive --from and --to".into()));
    }
    if !CHECK_IDS.contains(&args.check_id.as_str()) {
        return Err(Usage(format!(
            "unknown check id '{}'; known ids: {}",
            args.check_id,
            CHECK_IDS.join(", ")
        )));
    }
    let base = load_config(&args.config, args.seed)?;

    let mut rows = Vec::with_capacity(args.steps);
    for i in 0..args.steps {
        let t = if args.steps == 1 { 0.0 } else { i as f64 / (args.steps - 1) as f64 };
        let value = match args.spacing {
            Spacing::Linear => args.from + (args.to - args.from) * t,
            Spacing::Log => args.from * (args.to / args.from).powf(t),
        };
        let mut cfg = base.clone();
        apply_axis(&mut cfg, &args.check_id, args.axis, value)?;
        let report = run_check(&args.check_id, &cfg);
        eprint!("{} = {value:<10.6} ", args.axis.name());
        progress(&report);
        rows.push(SweepRow { axis: args.axis.name(), value, report });
    }

    let body = match args.format {
        Format::Json => serde_json::to_string_pretty(&rows)?,
        Format::Csv => {
            let mut s = format!("axis,value,{REPORT_CSV_HEADER}");
            for row in &rows {
                s.push('\n');
                s.push_str(&format!(
                    "{},{},{}",
                    row.axis,
                    fmt_f64(row.value),
                    report_csv_row(&row.report)
                ));
            }
            s
        }
    };
    emit(&args.out, body)?;
    let reports: Vec<Report> = rows.into_iter().map(|r| r.report).collect();
    Ok(exit_for(&reports))
}

/// Routes an axis value into the config section the check reads. Moduli
/// axes scale the parameter to the requested modulus and keep its phase.
fn apply_axis(
    cfg: &mut SuiteConfig,
    id: &str,
    axis: SweepAxis,
    value: f64,
) -> Result<(), Usage> {
    fn set_modulus(slot: &mut Complex64, value: f64) {
        let r = slot.norm();
        *slot = if r == 0.0 { Complex64::new(value, 0.0) } else { *slot * (value / r) };
    }
    fn index(axis: SweepAxis) -> Option<usize> {
        match axis {
            SweepAxis::A1 => Some(0),
            SweepAxis::A2 => Some(1),
            SweepAxis::A3 => Some(2),
            SweepAxis::A4 => Some(3),
            _ => None,
        }
    }
    let unsupported = |what: &str| {
        Usage(format!("check '{id}' has no {} axis ({what})", axis_name_for_err(axis)))
    };
    fn axis_name_for_err(axis: SweepAxis) -> &'static str {
        axis.name()
    }

    match id {
        "g2" | "g2-p-gt-q" => match axis {
            SweepAxis::P => cfg.g2.p = value,
            SweepAxis::Q => cfg.g2.q = value,
            _ => set_modulus(&mut cfg.g2.a[index(axis).unwrap()], value),
        },
        "qde-k1" | "qde-k2" | "qde-k3" | "qde-k4" | "qde-exploratory"
        | "qde-negative-control" => match axis {
            SweepAxis::P => cfg.qde.p = value,
            SweepAxis::Q => cfg.qde.q = value,
            _ => set_modulus(&mut cfg.qde.a[index(axis).unwrap()], value),
        },
        "two-term-k1" | "f1-f2-ratio" | "nabla-phi12" | "nabla-phi13" | "nabla-phi23"
        | "nabla-phi12p" | "nabla-phi13p" | "nabla-phi23p" | "interpolation" | "lemma67"
        | "ck" | "nd" => match axis {
            SweepAxis::P => cfg.coboundary.p = value,
            SweepAxis::Q => cfg.coboundary.q = value,
            _ => set_modulus(&mut cfg.coboundary.a[index(axis).unwrap()], value),
        },
        "bc1" => {
            match axis {
                SweepAxis::P => cfg.bc1.p = value,
                SweepAxis::Q => cfg.bc1.q = value,
                _ => return Err(unsupported("its six parameters are t1..t6")),
            }
            // Keep the balancing t1..t6 = pq exact by moving t6 with the
            // nome, so every grid point tests the identity itself.
            let five: Complex64 = cfg.bc1.t.iter().take(5).product();
            let t6 = Complex64::new(cfg.bc1.p * cfg.bc1.q, 0.0) / five;
            cfg.bc1.t[5] = t6;
        }
        "gustafson" => match axis {
            SweepAxis::Q => cfg.gustafson.q = value,
            SweepAxis::P => return Err(unsupported("the single-base integral has no p")),
            _ => set_modulus(&mut cfg.gustafson.a[index(axis).unwrap()], value),
        },
        "remark1" => match axis {
            SweepAxis::P => cfg.remark1.p_sequence = vec![value],
            SweepAxis::Q => cfg.gustafson.q = value,
            _ => set_modulus(&mut cfg.gustafson.a[index(axis).unwrap()], value),
        },
        "limit-j" | "bc1-reduction" => match axis {
            SweepAxis::P => cfg.limit.p = value,
            SweepAxis::Q => cfg.limit.q = value,
            SweepAxis::A2 => set_modulus(&mut cfg.limit.a2, value),
            SweepAxis::A3 => set_modulus(&mut cfg.limit.a3, value),
            SweepAxis::A4 => set_modulus(&mut cfg.limit.a4, value),
            SweepAxis::A1 => return Err(unsupported("a1 is pinned to the limit point")),
        },
        _ => return Err(Usage(format!("check '{id}' cannot be swept"))),
    }
    Ok(())
}

const REPORT_CSV_HEADER: &str = "schema,check_id,p_re,p_im,q_re,q_im,a,epsilon,lhs_re,lhs_im,\
rhs_re,rhs_im,abs_err,rel_err,tol,pass,n_used,runtime_ms,warnings";

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn report_csv_row(r: &Report) -> String {
    let a = r.params.a.iter().map(|z| fmt_complex(*z)).collect::<Vec<_>>().join(";");
    let warnings = r.warnings.join("; ");
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.schema,
        r.check_id,
        fmt_f64(r.params.p.re),
        fmt_f64(r.params.p.im),
        fmt_f64(r.params.q.re),
        fmt_f64(r.params.q.im),
        csv_quote(&a),
        r.params.epsilon,
        fmt_f64(r.lhs.re),
        fmt_f64(r.lhs.im),
        fmt_f64(r.rhs.re),
        fmt_f64(r.rhs.im),
        fmt_f64(r.abs_err),
        fmt_f64(r.rel_err),
        fmt_f64(r.tol),
        r.pass,
        r.n_used,
        fmt_f64(r.runtime_ms),
        csv_quote(&warnings)
    )
}
