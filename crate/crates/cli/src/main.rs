//! `whitney` — command-line front end for certified Whitney extension
//! evaluation: cube decompositions with distance certificates, point and
//! grid evaluation of extended jets, derivative-bound tables, and the
//! verification suites.
//!
//! Exit codes: 0 success (and all checks passed), 1 internal failure or a
//! failed check, 2 usage error (malformed input, oversize grid, derivative
//! order beyond the jet), 3 empty set. Diagnostics go to standard error
//! (controlled by the `WHITNEY_LOG` environment variable); results go to
//! standard output or `--out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use whitney_core::exact::{parse_ratio, ratio_as_dyadic, ratio_to_dyadic};
use whitney_core::{
    bprime, deriv_bounds, ext_constants, jet_make, multi_indices_upto, run_suite,
    wetm_eval_traced, CPoint, CheckReport, Decomposition, DyInterval, Dyadic, DyadicCube, Error,
    EvalBranch, Extender, JetSpec, Round, SetSpec, Suite, TotalClosedSet, WhitneyJet,
};

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

/// Certified evaluation of smooth extensions of Whitney jets from closed
/// sets, with the supporting cube decompositions and bound tables.
#[derive(Parser)]
#[command(name = "whitney", version, about)]
struct Cli {
    /// Cube-enlargement constant used by `decompose` (dyadic, 0 < eps <
    /// 1/5). Evaluation always runs at the calibrated 1/8.
    #[arg(long, global = true, default_value = "1/8")]
    eps: String,

    /// Seed driving all randomized sampling in `check`.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format (`grid` always writes CSV).
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate decomposition cubes meeting a region, each with a
    /// certified distance enclosure and comparability verdict.
    Decompose {
        /// Set description (JSON file).
        #[arg(long)]
        set: PathBuf,
        /// Region box: one `lo:hi` range per axis, comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        /// Cube level range `kmin:kmax` (a level-k cube has edge 2^-k).
        #[arg(long, allow_hyphen_values = true)]
        levels: String,
    },
    /// Evaluate the extension of a jet, or one of its derivatives, at a
    /// point, to within 2^-precision.
    Eval {
        /// Set description (JSON file).
        #[arg(long)]
        set: PathBuf,
        /// Jet description (JSON file).
        #[arg(long)]
        jet: PathBuf,
        /// Point coordinates, comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Derivative multi-index, comma-separated (defaults to the value).
        #[arg(long)]
        deriv: Option<String>,
        /// Result precision: the printed value is within 2^-i of the truth.
        #[arg(long, default_value_t = 16)]
        precision: i64,
    },
    /// Evaluate the extension on a rectangular grid; writes CSV rows
    /// `x_1,…,x_n,value` in row-major order (first axis slowest).
    Grid {
        /// Set description (JSON file).
        #[arg(long)]
        set: PathBuf,
        /// Jet description (JSON file).
        #[arg(long)]
        jet: PathBuf,
        /// Grid box: one `lo:hi` range per axis, comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        /// Points per axis: one count, or one per axis comma-separated;
        /// at most 4096 per axis.
        #[arg(long, allow_hyphen_values = true)]
        resolution: String,
        /// Derivative multi-index, comma-separated (defaults to the value).
        #[arg(long)]
        deriv: Option<String>,
        /// Result precision per grid point.
        #[arg(long, default_value_t = 16)]
        precision: i64,
    },
    /// Print the mollifier derivative-bound tables and, given a set and
    /// jet, the jet's extension constants. Text or JSON.
    Bounds {
        /// Largest derivative order to tabulate.
        #[arg(long, default_value_t = 4)]
        order: u32,
        /// Dimension for the multi-index rows.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Optional set description; with --jet, prints extension constants.
        #[arg(long)]
        set: Option<PathBuf>,
        /// Optional jet description (requires --set).
        #[arg(long)]
        jet: Option<PathBuf>,
    },
    /// Run a verification suite; prints one verdict per invariant and
    /// exits nonzero if any fails.
    Check {
        /// One of: cubes, partition, extend, all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Replace the built-in test sets of the geometric suites.
        #[arg(long)]
        set: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Failures and exit codes
// ---------------------------------------------------------------------------

struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::EmptySet => 3,
            Error::Parse(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::DerivOrderExceedsJet { .. }
            | Error::Unbounded(_) => 2,
            _ => 1,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WHITNEY_LOG", "warn"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let eps = parse_eps(&cli.eps)?;
    let format = cli.format;
    let out = cli.out;
    match cli.cmd {
        Cmd::Decompose { set, region, levels } => {
            cmd_decompose(&set, &region, &levels, eps, format, &out)
        }
        Cmd::Eval { set, jet, point, deriv, precision } => {
            cmd_eval(&set, &jet, &point, deriv.as_deref(), precision, format, &out)
        }
        Cmd::Grid { set, jet, region, resolution, deriv, precision } => {
            if format == Format::Json {
                log::warn!("grid always writes CSV; ignoring --format json");
            }
            cmd_grid(&set, &jet, &region, &resolution, deriv.as_deref(), precision, &out)
        }
        Cmd::Bounds { order, dim, set, jet } => {
            cmd_bounds(order, dim, set.as_deref(), jet.as_deref(), format, &out)
        }
        Cmd::Check { suite, set } => cmd_check(&suite, set.as_deref(), cli.seed, format, &out),
    }
}

// ---------------------------------------------------------------------------
// Input parsing
// ---------------------------------------------------------------------------

/// Parse an exact number (integer, finite decimal, or rational `p/q`).
/// Non-dyadic rationals are snapped to the 2^-24 grid with a warning, since
/// every downstream object takes exact dyadic inputs.
fn parse_dyadic(field: &str, s: &str) -> Result<Dyadic, Failure> {
    let r = parse_ratio(s.trim()).map_err(|e| usage(format!("{field}: {e}")))?;
    Ok(match ratio_as_dyadic(&r) {
        Some(d) => d,
        None => {
            let snapped = ratio_to_dyadic(&r, 24, Round::Nearest);
            log::warn!(
                "{field}: {s} is not dyadic; snapped to {} (2^-24 grid)",
                snapped.to_decimal_string()
            );
            snapped
        }
    })
}

fn parse_eps(s: &str) -> Result<Dyadic, Failure> {
    let r = parse_ratio(s.trim()).map_err(|e| usage(format!("--eps: {e}")))?;
    let eps = ratio_as_dyadic(&r).ok_or_else(|| usage("--eps must be a dyadic rational"))?;
    if eps.signum() <= 0 || eps.mul_int(5) >= Dyadic::one() {
        return Err(usage("--eps must satisfy 0 < eps < 1/5"));
    }
    Ok(eps)
}

/// `lo:hi` ranges, one per axis, comma-separated.
fn parse_region(s: &str, dim: usize) -> Result<(Vec<Dyadic>, Vec<Dyadic>), Failure> {
    let axes: Vec<&str> = s.split(',').collect();
    if axes.len() != dim {
        return Err(usage(format!(
            "--region has {} axes; the set lives in dimension {dim}",
            axes.len()
        )));
    }
    let mut bmin = Vec::with_capacity(dim);
    let mut bmax = Vec::with_capacity(dim);
    for (c, axis) in axes.iter().enumerate() {
        let (lo, hi) = axis
            .split_once(':')
            .ok_or_else(|| usage(format!("--region axis {c} must look like lo:hi")))?;
        bmin.push(parse_dyadic("--region", lo)?);
        bmax.push(parse_dyadic("--region", hi)?);
    }
    Ok((bmin, bmax))
}

fn parse_levels(s: &str) -> Result<(i64, i64), Failure> {
    let (a, b) = s.split_once(':').ok_or_else(|| usage("--levels must look like kmin:kmax"))?;
    let kmin = a.trim().parse().map_err(|e| usage(format!("--levels: {e}")))?;
    let kmax = b.trim().parse().map_err(|e| usage(format!("--levels: {e}")))?;
    Ok((kmin, kmax))
}

fn parse_point(s: &str, dim: usize) -> Result<Vec<Dyadic>, Failure> {
    let coords: Vec<&str> = s.split(',').collect();
    if coords.len() != dim {
        return Err(usage(format!(
            "--point has {} coordinates; the set lives in dimension {dim}",
            coords.len()
        )));
    }
    coords.iter().map(|c| parse_dyadic("--point", c)).collect()
}

fn parse_deriv(s: Option<&str>, dim: usize) -> Result<Vec<u32>, Failure> {
    match s {
        None => Ok(vec![0; dim]),
        Some(s) => {
            let parts: Vec<&str> = s.split(',').collect();
            if parts.len() != dim {
                return Err(usage(format!(
                    "--deriv has {} entries; the set lives in dimension {dim}",
                    parts.len()
                )));
            }
            parts
                .iter()
                .map(|p| p.trim().parse().map_err(|e| usage(format!("--deriv: {e}"))))
                .collect()
        }
    }
}

fn parse_resolution(s: &str, dim: usize) -> Result<Vec<u64>, Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    let counts: Vec<u64> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|e| usage(format!("--resolution: {e}"))))
        .collect::<Result<_, Failure>>()?;
    let counts = if counts.len() == 1 && dim > 1 {
        vec![counts[0]; dim]
    } else if counts.len() == dim {
        counts
    } else {
        return Err(usage(format!(
            "--resolution has {} entries; the set lives in dimension {dim}",
            counts.len()
        )));
    };
    for &c in &counts {
        if c == 0 || c > 4096 {
            return Err(usage("--resolution must be between 1 and 4096 per axis"));
        }
    }
    Ok(counts)
}

fn check_precision(i: i64) -> Result<i64, Failure> {
    if !(0..=512).contains(&i) {
        return Err(usage("--precision must be between 0 and 512"));
    }
    Ok(i)
}

fn load_spec(path: &Path) -> Result<SetSpec, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(SetSpec::from_json(&text)?)
}

fn load_set(path: &Path) -> Result<TotalClosedSet, Failure> {
    Ok(TotalClosedSet::make_set(load_spec(path)?)?)
}

fn load_jet(path: &Path, set: &TotalClosedSet) -> Result<WhitneyJet, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(jet_make(&JetSpec::from_json(&text)?, set)?)
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure { code: 1, msg: format!("cannot write {}: {e}", path.display()) }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Dyadic numbers travel in JSON as exact mantissa/exponent pairs.
fn dy_json(d: &Dyadic) -> serde_json::Value {
    json!({ "mant": d.mant().to_string(), "exp": d.exp() })
}

fn branch_str(b: EvalBranch) -> &'static str {
    match b {
        EvalBranch::OutsideF => "outsideF",
        EvalBranch::ViaF => "viaF",
    }
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

/// Distance enclosure of a cube, refined until the comparability
/// certificate `(1/2) diam(Q) < d(Q,F) < 5 diam(Q)` is decided (squared
/// comparisons; at most six refinements).
fn certify_cube(dec: &Decomposition, q: &DyadicCube) -> Result<(DyInterval, bool), Failure> {
    let n = q.dim() as i64;
    let quarter = Dyadic::int_times_pow2(n, -2 * q.level - 2);
    let twenty_five = Dyadic::int_times_pow2(25 * n, -2 * q.level);
    let mut last: Option<(DyInterval, bool)> = None;
    let mut p = (q.level + 16).max(16);
    for _ in 0..6 {
        let Some(e) = dec.cube_dist_encl(q, p) else { break };
        let lo = if e.lo().signum() > 0 { e.lo().clone() } else { Dyadic::zero() };
        let ok = lo.mul(&lo) > quarter && e.hi().mul(e.hi()) < twenty_five;
        let done = ok;
        last = Some((e, ok));
        if done {
            break;
        }
        p += 16;
    }
    last.ok_or_else(|| Failure {
        code: 1,
        msg: "the set description does not support distance certificates".into(),
    })
}

fn cmd_decompose(
    set_path: &Path,
    region: &str,
    levels: &str,
    eps: Dyadic,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<u8, Failure> {
    let set = load_set(set_path)?;
    let n = set.dim();
    let (bmin, bmax) = parse_region(region, n)?;
    let (kmin, kmax) = parse_levels(levels)?;
    let dec = Decomposition::with_eps(set, eps)?;
    let cubes = dec.enum_region(&bmin, &bmax, kmin, kmax)?;
    let mut rows = Vec::with_capacity(cubes.len());
    for q in &cubes {
        let (e, ok) = certify_cube(&dec, q)?;
        rows.push((q, e, ok));
    }
    let content = match format {
        Format::Json => {
            let arr: Vec<_> = rows
                .iter()
                .map(|(q, e, ok)| {
                    json!({
                        "level": q.level,
                        "corner": &q.corner,
                        "d_lo": dy_json(e.lo()),
                        "d_hi": dy_json(e.hi()),
                        "certified": ok,
                    })
                })
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&arr).expect("cube rows serialize"))
        }
        Format::Csv => {
            let corner_cols: Vec<String> = (1..=n).map(|c| format!("corner_{c}")).collect();
            let mut s = format!("level,{},d_lo,d_hi,certified\n", corner_cols.join(","));
            for (q, e, ok) in &rows {
                let corner: Vec<String> = q.corner.iter().map(|v| v.to_string()).collect();
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    q.level,
                    corner.join(","),
                    e.lo().to_decimal_string(),
                    e.hi().to_decimal_string(),
                    ok
                ));
            }
            s
        }
        Format::Text => {
            let mut s = format!("{} cubes\n", rows.len());
            for (q, e, ok) in &rows {
                s.push_str(&format!(
                    "level {:>4}  corner {:?}  d(Q,F) in [{}, {}]  {}\n",
                    q.level,
                    q.corner,
                    e.lo().to_decimal_string(),
                    e.hi().to_decimal_string(),
                    if *ok { "certified" } else { "UNCERTIFIED" }
                ));
            }
            s
        }
    };
    emit(out, &content)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(
    set_path: &Path,
    jet_path: &Path,
    point: &str,
    deriv: Option<&str>,
    precision: i64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<u8, Failure> {
    let set = load_set(set_path)?;
    let jet = load_jet(jet_path, &set)?;
    let coords = parse_point(point, set.dim())?;
    let kbar = parse_deriv(deriv, set.dim())?;
    let i = check_precision(precision)?;
    let outcome = wetm_eval_traced(&jet, &CPoint::from_dyadics(coords), &kbar, i)?;
    let branch = branch_str(outcome.branch);
    let content = match format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "value": dy_json(&outcome.value),
                "precision": i,
                "branch": branch,
            }))
            .expect("result serializes")
        ),
        Format::Csv => format!(
            "value,precision,branch\n{},{},{}\n",
            outcome.value.to_decimal_string(),
            i,
            branch
        ),
        Format::Text => format!(
            "value: {}\nprecision: 2^-{}\nbranch: {}\n",
            outcome.value.to_decimal_string(),
            i,
            branch
        ),
    };
    emit(out, &content)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

fn cmd_grid(
    set_path: &Path,
    jet_path: &Path,
    region: &str,
    resolution: &str,
    deriv: Option<&str>,
    precision: i64,
    out: &Option<PathBuf>,
) -> Result<u8, Failure> {
    let set = load_set(set_path)?;
    let n = set.dim();
    let jet = load_jet(jet_path, &set)?;
    let (bmin, bmax) = parse_region(region, n)?;
    let res = parse_resolution(resolution, n)?;
    let kbar = parse_deriv(deriv, n)?;
    let i = check_precision(precision)?;
    let ext = Extender::new(jet)?;
    // Per-axis sample coordinates; non-dyadic steps snap to the 2^-24 grid,
    // so every printed abscissa is the exact point that was evaluated.
    let mut axes: Vec<Vec<Dyadic>> = Vec::with_capacity(n);
    for c in 0..n {
        if res[c] == 1 {
            axes.push(vec![bmin[c].clone()]);
        } else {
            let step =
                bmax[c].sub(&bmin[c]).div(&Dyadic::from_int(res[c] as i64 - 1), 24, Round::Nearest);
            axes.push((0..res[c]).map(|j| bmin[c].add(&step.mul_int(j as i64))).collect());
        }
    }
    let header: Vec<String> = (1..=n).map(|c| format!("x{c}")).collect();
    let mut csv = format!("{},value\n", header.join(","));
    let total: u128 = res.iter().map(|&r| r as u128).product();
    for flat in 0..total {
        let mut rem = flat;
        let mut idx = vec![0usize; n];
        for c in (0..n).rev() {
            idx[c] = (rem % res[c] as u128) as usize;
            rem /= res[c] as u128;
        }
        let coords: Vec<Dyadic> = (0..n).map(|c| axes[c][idx[c]].clone()).collect();
        let cells: Vec<String> = coords.iter().map(|v| v.to_decimal_string()).collect();
        let outcome = ext.eval(&CPoint::from_dyadics(coords), &kbar, i)?;
        csv.push_str(&format!("{},{}\n", cells.join(","), outcome.value.to_decimal_string()));
    }
    emit(out, &csv)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

fn cmd_bounds(
    order: u32,
    dim: usize,
    set_path: Option<&Path>,
    jet_path: Option<&Path>,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<u8, Failure> {
    if dim == 0 {
        return Err(usage("--dim must be at least 1"));
    }
    if order > 16 {
        return Err(usage("--order is capped at 16 (tables grow doubly fast)"));
    }
    let tab = deriv_bounds(order);
    let kbars = multi_indices_upto(dim, order);
    let extension = match (set_path, jet_path) {
        (Some(sp), Some(jp)) => {
            let set = load_set(sp)?;
            Some(ext_constants(&load_jet(jp, &set)?))
        }
        (None, Some(_)) => return Err(usage("--jet requires --set")),
        _ => None,
    };
    let content = match format {
        Format::Json => {
            let table: Vec<_> = (0..=order)
                .map(|k| {
                    json!({
                        "k": k,
                        "a": tab.a_int(k).to_string(),
                        "h": tab.h_int(k).to_string(),
                        "b": tab.b_int(k).to_string(),
                    })
                })
                .collect();
            let bp: Vec<_> = kbars
                .iter()
                .map(|kbar| json!({ "kbar": kbar, "value": dy_json(&bprime(kbar, dim)) }))
                .collect();
            let ext = extension.map(|c| {
                let amk: Vec<_> = c
                    .a_mk
                    .iter()
                    .map(|(kbar, v)| json!({ "kbar": kbar, "value": dy_json(v) }))
                    .collect();
                json!({
                    "order": c.order,
                    "dim": c.dim,
                    "eps": dy_json(&c.eps),
                    "e_upper": dy_json(&c.e_upper),
                    "c": dy_json(&c.c_const),
                    "a_m": dy_json(&c.a_m),
                    "a_mk": amk,
                })
            });
            format!(
                "{}\n",
                serde_json::to_string_pretty(&json!({
                    "table": table,
                    "bprime": bp,
                    "extension": ext,
                }))
                .expect("bound tables serialize")
            )
        }
        Format::Csv => {
            return Err(usage("bounds supports --format text or json"));
        }
        Format::Text => {
            let mut s = String::from("  k             A_k             H_k             B_k\n");
            for k in 0..=order {
                s.push_str(&format!(
                    "{:>3} {:>15} {:>15} {:>15}\n",
                    k,
                    tab.a_int(k).to_string(),
                    tab.h_int(k).to_string(),
                    tab.b_int(k).to_string()
                ));
            }
            s.push_str("\nnormalized-bump derivative constants:\n");
            for kbar in &kbars {
                s.push_str(&format!(
                    "  B'_{:?} = {}\n",
                    kbar,
                    bprime(kbar, dim).to_decimal_string()
                ));
            }
            if let Some(c) = extension {
                s.push_str(&format!(
                    "\nextension constants (order {}, dimension {}):\n",
                    c.order, c.dim
                ));
                s.push_str(&format!("  eps = {}\n", c.eps.to_decimal_string()));
                s.push_str(&format!("  e <= {}\n", c.e_upper.to_decimal_string()));
                s.push_str(&format!("  c = {}\n", c.c_const.to_decimal_string()));
                s.push_str(&format!("  A_m = {}\n", c.a_m.to_decimal_string()));
                for (kbar, v) in &c.a_mk {
                    s.push_str(&format!("  A_m^{:?} = {}\n", kbar, v.to_decimal_string()));
                }
            }
            s
        }
    };
    emit(out, &content)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(
    suite: &str,
    set_path: Option<&Path>,
    seed: u64,
    format: Format,
    out: &Option<PathBuf>,
) -> Result<u8, Failure> {
    let suite = Suite::parse(suite)
        .ok_or_else(|| usage(format!("unknown suite '{suite}' (cubes|partition|extend|all)")))?;
    let spec = match set_path {
        Some(p) => Some(load_spec(p)?),
        None => None,
    };
    let reports: Vec<CheckReport> = run_suite(suite, spec.as_ref(), seed);
    let all_passed = reports.iter().all(|r| r.passed);
    let content = match format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&reports).expect("reports serialize")
        ),
        Format::Csv => {
            let mut s = String::from("name,passed,samples,failures,detail\n");
            for r in &reports {
                let detail = r.detail.replace([',', '\n'], ";");
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.name, r.passed, r.samples, r.failures, detail
                ));
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            for r in &reports {
                s.push_str(&r.line());
                s.push('\n');
            }
            s.push_str(&format!(
                "{}: {} of {} checks passed\n",
                if all_passed { "ok" } else { "FAILED" },
                reports.iter().filter(|r| r.passed).count(),
                reports.len()
            ));
            s
        }
    };
    emit(out, &content)?;
    Ok(if all_passed { 0 } else { 1 })
}
