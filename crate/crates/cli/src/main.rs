#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use motbound::envelope::{dual_value, improve_u2, GridFunction};
use motbound::hedge::{self, HedgeExport};
use motbound::io::{self, fmt_num, to_json};
use motbound::lp::SolverOptions;
use motbound::measures::{
    check_convex_order, counterexample_marginals, detect_barriers, discretize, from_call_curve,
    inverse_square_partial_sums, DensitySpec, DiscreteMeasure, MarginalSystem, DEFAULT_BARRIER_TOL,
};
use motbound::mot::{self, BoundSense, MotProblem, MotResult};
use motbound::payoff::{Payoff, PayoffSpec};
use motbound::Error;

#[derive(Parser)]
#[command(name = "motbound", version, about = "Model-independent bounds and semi-static hedges for multi-date options")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract marginals from call quotes.
    ImpliedMarginals(ImpliedArgs),
    /// Check that the marginals increase in convex order.
    CheckOrder(InputArgs),
    /// Lower and/or upper bound with hedges and diagnostics.
    Bounds(BoundsArgs),
    /// Bounds of forward-start calls over a strike list.
    Sweep(SweepArgs),
    /// The hedge payoff over the verification grid.
    Surface(BoundsArgs),
    /// Evaluate or improve the convex-envelope dual.
    Envelope(EnvelopeArgs),
    /// Compare a quoted price with the bounds.
    Arb(ArbArgs),
    /// Build the truncated barrier counterexample and solve it.
    Counterexample(CounterArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "tol-feas")]
    tol_feas: Option<f64>,
    #[arg(long = "tol-gap")]
    tol_gap: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Marginals JSON files: measures `{points, weights}` or density specs
    /// `{kind, ...}`, in date order.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    marginals: Vec<PathBuf>,
    /// Call quotes (CSV or JSON) to extract the marginals from.
    #[arg(long, conflicts_with = "marginals")]
    quotes: Option<PathBuf>,
    /// Spot, the common mean, when reading quotes.
    #[arg(long)]
    s0: Option<f64>,
    /// Number of atoms when discretizing density specs.
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ImpliedArgs {
    #[arg(long)]
    quotes: PathBuf,
    #[arg(long)]
    s0: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum SenseArg {
    Lower,
    Upper,
    Both,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Payoff JSON `{kind, n, params}`, inline or as a file path.
    #[arg(long)]
    payoff: String,
    #[arg(long, value_enum, default_value = "both")]
    sense: SenseArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated strikes or `start:stop:step`.
    #[arg(long)]
    strikes: String,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    payoff: String,
    /// Starting u2 as CSV `s2,u2` (default: the LP dual).
    #[arg(long)]
    u2: Option<PathBuf>,
    /// Coordinate-ascent sweeps.
    #[arg(long, default_value_t = 0)]
    iters: usize,
    /// Random u2 vectors checked against the LP bound, drawn from `--seed`.
    #[arg(long, default_value_t = 0)]
    samples: usize,
}

#[derive(Args)]
struct ArbArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    payoff: String,
    #[arg(long)]
    quoted: f64,
}

#[derive(Args)]
struct CounterArgs {
    #[arg(long, default_value_t = 5)]
    blocks: usize,
    #[arg(long = "per-block", default_value_t = 16)]
    per_block: usize,
    #[command(flatten)]
    common: Common,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_domain() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn config(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type Outcome = Result<(), Failure>;

fn emit(common: &Common, text: &str) -> Outcome {
    match &common.out {
        Some(p) => std::fs::write(p, text).map_err(|e| config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(common: &Common, value: &T) -> Outcome {
    emit(common, &to_json(value)?)
}

fn solver_options(common: &Common) -> Result<SolverOptions, Failure> {
    let mut opts = SolverOptions::default();
    for (flag, v, slot) in [
        ("--tol-feas", common.tol_feas, &mut opts.feasibility_tol),
        ("--tol-gap", common.tol_gap, &mut opts.gap_tol),
    ] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("{flag} must be positive, got {v}")));
            }
            *slot = v;
        }
    }
    Ok(opts)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn parse_marginal_value(v: Value, grid: Option<usize>) -> Result<DiscreteMeasure, Failure> {
    if v.get("kind").is_some() {
        let spec: DensitySpec = serde_json::from_value(v).map_err(|e| config(format!("density spec: {e}")))?;
        let m = grid.ok_or_else(|| config("--grid is required to discretize density specs"))?;
        Ok(discretize(&spec, m)?)
    } else {
        serde_json::from_value(v).map_err(|e| Failure { code: 1, message: format!("measure: {e}") })
    }
}

fn load_system(input: &InputArgs) -> Result<MarginalSystem, Failure> {
    if let Some(q) = &input.quotes {
        let s0 = input.s0.ok_or_else(|| config("--s0 is required with --quotes"))?;
        let curves = io::read_quotes(q)?;
        let measures = curves.iter().map(|c| from_call_curve(c, s0)).collect::<Result<Vec<_>, _>>()?;
        return Ok(MarginalSystem::new(measures)?);
    }
    if input.marginals.is_empty() {
        return Err(config("either --marginals or --quotes is required"));
    }
    if input.grid.is_some_and(|m| m < 2) {
        return Err(config("--grid must be at least 2"));
    }
    let mut measures = Vec::new();
    for path in &input.marginals {
        let v: Value = serde_json::from_str(&read_text(path)?)
            .map_err(|e| config(format!("{}: {e}", path.display())))?;
        let items = match v {
            Value::Array(items) => items,
            Value::Object(mut o) if o.contains_key("marginals") => match o.remove("marginals") {
                Some(Value::Array(items)) => items,
                _ => return Err(config(format!("{}: `marginals` must be an array", path.display()))),
            },
            other => vec![other],
        };
        for item in items {
            measures.push(parse_marginal_value(item, input.grid)?);
        }
    }
    Ok(MarginalSystem::new(measures)?)
}

fn load_payoff(arg: &str) -> Result<Payoff, Failure> {
    let text = if arg.trim_start().starts_with('{') { arg.to_string() } else { read_text(Path::new(arg))? };
    let spec: PayoffSpec = serde_json::from_str(&text).map_err(|e| config(format!("payoff: {e}")))?;
    Ok(spec.build()?)
}

fn parse_strikes(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || config(format!("cannot parse strikes `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|k| io::round12(start + step * k as f64)).collect());
    }
    let strikes: Vec<f64> = text.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    if strikes.is_empty() {
        return Err(bad());
    }
    Ok(strikes)
}

fn senses(arg: SenseArg) -> Vec<BoundSense> {
    match arg {
        SenseArg::Lower => vec![BoundSense::Lower],
        SenseArg::Upper => vec![BoundSense::Upper],
        SenseArg::Both => vec![BoundSense::Lower, BoundSense::Upper],
    }
}

fn result_json(problem: &MotProblem, r: &MotResult) -> Result<Value, Failure> {
    let grids = hedge::default_verification_grids(problem.system(), problem.payoff());
    let verification = hedge::verify(&r.hedge, problem.payoff(), &grids)?;
    Ok(json!({
        "value": r.value,
        "diagnostics": r.diagnostics,
        "verification": verification,
        "hedge": HedgeExport::from(&r.hedge),
    }))
}

fn run_implied(a: &ImpliedArgs) -> Outcome {
    let curves = io::read_quotes(&a.quotes)?;
    let measures = curves.iter().map(|c| from_call_curve(c, a.s0)).collect::<Result<Vec<_>, _>>()?;
    emit_json(&a.common, &measures)
}

fn run_check_order(a: &InputArgs) -> Outcome {
    let system = load_system(a)?;
    let report = check_convex_order(&system);
    emit_json(&a.common, &report)?;
    if report.admissible {
        Ok(())
    } else {
        Err(Failure { code: 1, message: report.summary() })
    }
}

fn run_bounds(a: &BoundsArgs) -> Outcome {
    let opts = solver_options(&a.input.common)?;
    let system = load_system(&a.input)?;
    let payoff = load_payoff(&a.payoff)?;
    let mut out = serde_json::Map::new();
    for sense in senses(a.sense) {
        let problem = MotProblem::new(system.clone(), payoff.clone(), sense)?;
        let r = mot::bound_with(&problem, &opts)?;
        let key = if sense == BoundSense::Lower { "lower" } else { "upper" };
        out.insert(key.into(), result_json(&problem, &r)?);
    }
    emit_json(&a.input.common, &out)
}

fn run_sweep(a: &SweepArgs) -> Outcome {
    let opts = solver_options(&a.input.common)?;
    let system = load_system(&a.input)?;
    let strikes = parse_strikes(&a.strikes)?;
    let table = mot::strike_sweep_with(&system, &strikes, &opts)?;
    for row in &table.rows {
        if let Some(e) = &row.error {
            eprintln!("strike {}: {e}", fmt_num(row.strike));
        }
    }
    emit(&a.input.common, &io::sweep_csv(&table))
}

fn run_surface(a: &BoundsArgs) -> Outcome {
    let opts = solver_options(&a.input.common)?;
    let system = load_system(&a.input)?;
    let payoff = load_payoff(&a.payoff)?;
    let sense = match a.sense {
        SenseArg::Upper => BoundSense::Upper,
        SenseArg::Lower | SenseArg::Both => BoundSense::Lower,
    };
    let problem = MotProblem::new(system, payoff, sense)?;
    let r = mot::bound_with(&problem, &opts)?;
    let grids = hedge::default_verification_grids(problem.system(), problem.payoff());
    let rows = hedge::surface(&r.hedge, problem.payoff(), &grids)?;
    emit(&a.input.common, &io::surface_csv(&rows))
}

fn run_envelope(a: &EnvelopeArgs) -> Outcome {
    use rand_like::uniform;
    let opts = solver_options(&a.input.common)?;
    let system = load_system(&a.input)?;
    let payoff = load_payoff(&a.payoff)?;
    if system.dates() != 2 {
        return Err(Failure { code: 1, message: "the envelope dual needs two dates".into() });
    }
    let (mu1, mu2) = (system.marginal(0), system.marginal(1));
    let problem = MotProblem::new(system.clone(), payoff.clone(), BoundSense::Lower)?;
    let lp = mot::bound_with(&problem, &opts)?;
    let start = match &a.u2 {
        Some(p) => io::parse_u2_csv(&read_text(p)?)?,
        None => GridFunction::new(
            mu2.points().to_vec(),
            mu2.points().iter().map(|&x| lp.hedge.statics[1].eval(x)).collect(),
        )?,
    };
    let start_value = dual_value(&start, &payoff, mu1, mu2)?;
    let improved = improve_u2(&start, &payoff, mu1, mu2, a.iters)?;
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..a.samples {
        let values = (0..start.points.len())
            .map(|i| uniform(a.input.common.seed, (k * start.points.len() + i) as u64) * 4.0 - 2.0)
            .collect();
        let u2 = GridFunction::new(start.points.clone(), values)?;
        worst_excess = worst_excess.max(dual_value(&u2, &payoff, mu1, mu2)? - lp.value);
    }
    let report = json!({
        "lp_lower": lp.value,
        "start_value": start_value,
        "value": improved.value,
        "gap_to_lp": lp.value - improved.value,
        "sweeps": improved.sweeps,
        "random_samples": a.samples,
        "max_random_excess": if a.samples > 0 { Some(worst_excess) } else { None },
        "u2": improved.u2,
    });
    emit_json(&a.input.common, &report)
}

/// Stateless counter-based uniforms, so samples do not depend on evaluation order.
mod rand_like {
    pub fn uniform(seed: u64, index: u64) -> f64 {
        let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn run_arb(a: &ArbArgs) -> Outcome {
    let opts = solver_options(&a.input.common)?;
    let system = load_system(&a.input)?;
    let payoff = load_payoff(&a.payoff)?;
    let lower = MotProblem::new(system.clone(), payoff.clone(), BoundSense::Lower)?;
    let l = mot::bound_with(&lower, &opts)?;
    let u = mot::bound_with(&lower.with_sense(BoundSense::Upper), &opts)?;
    let verdict = hedge::check_arbitrage(a.quoted, l.value, u.value, None);
    let hedge = match verdict.action {
        hedge::Action::Buy => Some(HedgeExport::from(&l.hedge)),
        hedge::Action::Sell => Some(HedgeExport::from(&u.hedge)),
        hedge::Action::NoArb => None,
    };
    emit_json(&a.input.common, &json!({ "verdict": verdict, "hedge": hedge }))
}

fn run_counterexample(a: &CounterArgs) -> Outcome {
    let opts = solver_options(&a.common)?;
    let system = counterexample_marginals(a.blocks, a.per_block)?;
    let (mu1, mu2) = (system.marginal(0), system.marginal(1));
    let split = detect_barriers(mu1, mu2, DEFAULT_BARRIER_TOL)?;
    let problem = MotProblem::new(system.clone(), Payoff::negated_straddle(), BoundSense::Lower)?;
    let decomposed = mot::decompose_and_solve_with(&problem, &opts)?;
    let monolithic = mot::bound_with(&problem, &opts)?;
    let mut edges = inverse_square_partial_sums(a.blocks);
    edges.push(2.0);
    let closed_form = -edges.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / 8.0;
    let report = json!({
        "partial_sums": &edges[1..edges.len() - 1],
        "barriers": split.barriers,
        "first_marginal": mu1,
        "value": monolithic.value,
        "decomposed_value": decomposed.value,
        "closed_form": closed_form,
        "relative_error": (monolithic.value - closed_form).abs() / closed_form.abs(),
        "delta_increments": mot::delta_increments(&monolithic, &system),
        "diagnostics": monolithic.diagnostics,
    });
    emit_json(&a.common, &report)
}

fn configure_threads() -> Outcome {
    if let Ok(v) = std::env::var("MOTBOUND_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| config(format!("MOTBOUND_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(config("MOTBOUND_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::ImpliedMarginals(a) => run_implied(a),
        Command::CheckOrder(a) => run_check_order(a),
        Command::Bounds(a) => run_bounds(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Surface(a) => run_surface(a),
        Command::Envelope(a) => run_envelope(a),
        Command::Arb(a) => run_arb(a),
        Command::Counterexample(a) => run_counterexample(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
