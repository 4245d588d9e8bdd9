//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when the analysed input is infeasible or a
//! verification fails, 2 on malformed input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::counting::{
    monte_carlo_p, p_exact, p_formula_2, p_upper_3, ProbabilityEstimate, DEFAULT_ENUMERATION_GUARD,
};
use crate::diophantine::{
    brute_force_solve, closed_form_solution, verify_solution, LambdaSolution, DEFAULT_NODE_LIMIT,
};
use crate::error::BiaError;
use crate::feasibility::{check_config, feasible_region, in_feasible_region};
use crate::pattern::{group_profile, ChannelConfig};
use crate::scheduler::{build_schedule, validate_schedule, Schedule, SuperSymbol};
use crate::signaling::verify_schedule_end_to_end;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Current schedule file format.
pub const SCHEDULE_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "bia",
    version,
    about = "Blind interference alignment feasibility and scheduling"
)]
pub struct Cli {
    /// Cap on worker threads for parallel commands.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide feasibility of one configuration.
    Check(CheckArgs),
    /// Tabulate the feasible offset region for three users.
    Region(RegionArgs),
    /// Write a slot-level alignment schedule.
    Decompose(DecomposeArgs),
    /// Verify a schedule numerically over random channels.
    Verify(VerifyArgs),
    /// Probability of finding a feasible subset of users.
    Prob(ProbArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Coherence time in slots.
    #[arg(long = "N")]
    pub coherence: usize,
    /// Comma-separated offsets; reduced modulo N.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub offsets: Vec<i64>,
}

impl ConfigArgs {
    fn config(&self) -> Result<ChannelConfig, BiaError> {
        ChannelConfig::from_signed(self.coherence, &self.offsets)
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub json: bool,
    /// Exit with status 1 when the configuration is infeasible.
    #[arg(long)]
    pub fail_on_infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long = "N")]
    pub coherence: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Enumerate every decomposition and write them as a JSON array.
    #[arg(long)]
    pub all_solutions: bool,
    /// Search budget for --all-solutions.
    #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
    pub node_limit: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bound,
    Exact,
    Mc,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("user_count").required(true).args(["users", "user_range"])))]
pub struct ProbArgs {
    #[arg(long = "N")]
    pub coherence: u64,
    #[arg(long = "K")]
    pub users: Option<u64>,
    /// Inclusive range of user counts, `a:b`.
    #[arg(long = "K-range")]
    pub user_range: Option<String>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..=3))]
    pub k_target: u64,
    #[arg(long, value_enum, default_value = "mc")]
    pub method: Method,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

/// On-disk schedule. Field order is alphabetical so the serialized keys are
/// sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "N")]
    pub coherence: usize,
    pub lambda: Vec<u64>,
    pub offsets: Vec<usize>,
    pub period: usize,
    pub tuples: Vec<TupleFile>,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleFile {
    pub slots: Vec<usize>,
    pub start_group: usize,
}

impl From<&Schedule> for ScheduleFile {
    fn from(s: &Schedule) -> Self {
        let mut s = s.clone();
        s.canonicalize();
        Self {
            users: s.config.users(),
            coherence: s.config.coherence(),
            lambda: s.lambda.values().to_vec(),
            offsets: s.config.offsets().to_vec(),
            period: s.period(),
            tuples: s
                .tuples
                .iter()
                .map(|t| TupleFile {
                    slots: t.slots.clone(),
                    start_group: t.start_group,
                })
                .collect(),
            version: SCHEDULE_VERSION,
        }
    }
}

impl ScheduleFile {
    /// Rebuild the schedule, rejecting files whose header is inconsistent.
    /// Tuple contents are not checked here.
    pub fn into_schedule(self) -> Result<Schedule, BiaError> {
        let bad = |msg: String| BiaError::InvalidInput(msg);
        if self.version != SCHEDULE_VERSION {
            return Err(bad(format!(
                "unsupported schedule version {}",
                self.version
            )));
        }
        let config = ChannelConfig::new(self.coherence, &self.offsets)?;
        if config.offsets() != self.offsets.as_slice() || config.users() != self.users {
            return Err(bad("offsets and K disagree with N".into()));
        }
        if self.period != config.period() {
            return Err(bad(format!(
                "period {} does not match (K+1)N = {}",
                self.period,
                config.period()
            )));
        }
        if self.lambda.len() != self.users * (self.users + 1) {
            return Err(bad(format!(
                "lambda has {} entries, expected K(K+1) = {}",
                self.lambda.len(),
                self.users * (self.users + 1)
            )));
        }
        let tuples = self
            .tuples
            .into_iter()
            .map(|t| SuperSymbol {
                start_group: t.start_group,
                slots: t.slots,
            })
            .collect();
        Ok(Schedule {
            config,
            lambda: LambdaSolution::new(self.lambda),
            tuples,
        })
    }
}

pub fn schedule_to_json(s: &Schedule) -> String {
    serde_json::to_string_pretty(&ScheduleFile::from(s)).expect("schedule serializes")
}

/// Accepts one schedule object or an array of them.
pub fn schedules_from_json(text: &str) -> Result<Vec<Schedule>, BiaError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ScheduleFile),
        Many(Vec<ScheduleFile>),
    }
    let parsed: OneOrMany = serde_json::from_str(text)
        .map_err(|e| BiaError::InvalidInput(format!("cannot parse schedule: {e}")))?;
    let files = match parsed {
        OneOrMany::One(f) => vec![f],
        OneOrMany::Many(v) => v,
    };
    if files.is_empty() {
        return Err(BiaError::InvalidInput(
            "schedule file holds no schedules".into(),
        ));
    }
    files.into_iter().map(ScheduleFile::into_schedule).collect()
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Outcome of a command that ran to completion.
type CmdResult = Result<i32, BiaError>;

fn exit_code(e: &BiaError) -> i32 {
    match e {
        BiaError::InvalidInput(_) | BiaError::ResourceLimit(_) => EXIT_USAGE,
        BiaError::ConditionViolated(_) | BiaError::Internal(_) => EXIT_FAILURE,
    }
}

fn io_err(e: std::io::Error) -> BiaError {
    BiaError::Internal(format!("write failed: {e}"))
}

/// Parse `args` (including the program name) and run. Output goes to `out`,
/// diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut text = e.render().to_string();
            if code == EXIT_USAGE && !text.contains("Usage:") {
                text.push_str(&format!("\n{}\n", Cli::command().render_usage()));
            }
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    let result = match cli.threads {
        Some(0) => Err(BiaError::InvalidInput("--threads must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => {
                let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
                let r = pool.install(|| {
                    let mut local = Io {
                        out: &mut out_buf,
                        err: &mut err_buf,
                    };
                    dispatch(&cli.command, &mut local)
                });
                let _ = io.out.write_all(&out_buf);
                let _ = io.err.write_all(&err_buf);
                r
            }
            Err(e) => Err(BiaError::Internal(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli.command, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: &Command, io: &mut Io) -> CmdResult {
    match cmd {
        Command::Check(a) => cmd_check(a, io),
        Command::Region(a) => cmd_region(a, io),
        Command::Decompose(a) => cmd_decompose(a, io),
        Command::Verify(a) => cmd_verify(a, io),
        Command::Prob(a) => cmd_prob(a, io),
    }
}

fn cmd_check(a: &CheckArgs, io: &mut Io) -> CmdResult {
    let cfg = a.config.config()?;
    let report = check_config(&cfg);
    let lambda = if report.feasible {
        Some(closed_form_solution(&group_profile(&cfg))?)
    } else {
        None
    };
    if a.json {
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["offsets"] = json!(cfg.offsets());
        v["lambda"] = json!(lambda.as_ref().map(LambdaSolution::values));
        writeln!(
            io.out,
            "{}",
            serde_json::to_string_pretty(&v).expect("json")
        )
        .map_err(io_err)?;
    } else {
        let s = group_profile(&cfg);
        let rel = if report.feasible { "<=" } else { ">" };
        writeln!(io.out, "{cfg}").map_err(io_err)?;
        writeln!(io.out, "group sizes: {s}").map_err(io_err)?;
        writeln!(
            io.out,
            "sum(s) = {} {rel} (K+1)*min(s) = {}",
            report.sum, report.bound
        )
        .map_err(io_err)?;
        writeln!(
            io.out,
            "min gap {} vs required {} (N/(K+1) = {:.4})",
            report.min_gap, report.required_gap, report.threshold
        )
        .map_err(io_err)?;
        if report.duplicate_offsets {
            writeln!(io.out, "note: two users share an offset").map_err(io_err)?;
        }
        writeln!(io.out, "feasible: {}", report.feasible).map_err(io_err)?;
        if let Some(lam) = &lambda {
            writeln!(io.out, "lambda: {lam}").map_err(io_err)?;
        }
    }
    Ok(if a.fail_on_infeasible && !report.feasible {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

fn cmd_region(a: &RegionArgs, io: &mut Io) -> CmdResult {
    let n = a.coherence;
    if n == 0 {
        return Err(BiaError::InvalidInput("N must be positive".into()));
    }
    let region = feasible_region(n);
    match a.format {
        Format::Csv => {
            writeln!(io.out, "n2,n3,feasible").map_err(io_err)?;
            for n2 in 0..n {
                for n3 in 0..n {
                    writeln!(io.out, "{n2},{n3},{}", in_feasible_region(n, n2, n3))
                        .map_err(io_err)?;
                }
            }
            writeln!(
                io.err,
                "N={n} count={} ratio={}",
                region.count(),
                region.ratio()
            )
            .map_err(io_err)?;
        }
        Format::Json => {
            let points: Vec<_> = (0..n)
                .flat_map(|n2| (0..n).map(move |n3| (n2, n3)))
                .map(|(n2, n3)| json!({"n2": n2, "n3": n3, "feasible": in_feasible_region(n, n2, n3)}))
                .collect();
            let v =
                json!({"N": n, "count": region.count(), "ratio": region.ratio(), "points": points});
            writeln!(io.out, "{v}").map_err(io_err)?;
        }
    }
    Ok(EXIT_OK)
}

fn write_target(path: Option<&Path>, text: &str, io: &mut Io) -> Result<(), BiaError> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| BiaError::InvalidInput(format!("cannot write {}: {e}", p.display()))),
        None => writeln!(io.out, "{text}").map_err(io_err),
    }
}

fn cmd_decompose(a: &DecomposeArgs, io: &mut Io) -> CmdResult {
    let cfg = a.config.config()?;
    let report = check_config(&cfg);
    if !report.feasible {
        writeln!(
            io.err,
            "infeasible: sum(s) = {} > (K+1)*min(s) = {} for s = {}",
            report.sum,
            report.bound,
            group_profile(&cfg)
        )
        .map_err(io_err)?;
        return Ok(EXIT_FAILURE);
    }
    let s = group_profile(&cfg);
    let (text, count) = if a.all_solutions {
        let schedules = brute_force_solve(&s, true, a.node_limit)?
            .iter()
            .map(|lam| build_schedule(&cfg, lam).map(|sc| ScheduleFile::from(&sc)))
            .collect::<Result<Vec<_>, _>>()?;
        let text = serde_json::to_string_pretty(&schedules).expect("json");
        (text, schedules.len())
    } else {
        let sched = build_schedule(&cfg, &closed_form_solution(&s)?)?;
        (schedule_to_json(&sched), 1)
    };
    write_target(a.out.as_deref(), &text, io)?;
    if let Some(p) = &a.out {
        writeln!(io.err, "wrote {count} schedule(s) to {}", p.display()).map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, io: &mut Io) -> CmdResult {
    let text = fs::read_to_string(&a.schedule).map_err(|e| {
        BiaError::InvalidInput(format!("cannot read {}: {e}", a.schedule.display()))
    })?;
    let schedules = schedules_from_json(&text)?;
    let mut all_passed = true;
    let mut rows = Vec::new();
    for (i, sched) in schedules.iter().enumerate() {
        let validation = validate_schedule(sched);
        let lambda_ok = verify_solution(&group_profile(&sched.config), &sched.lambda)?;
        let row = if !validation.passed || !lambda_ok {
            let mut issues: Vec<String> =
                validation.issues.iter().map(ToString::to_string).collect();
            if !lambda_ok {
                issues.push("lambda does not decompose the group sizes".into());
            }
            json!({"index": i, "passed": false, "issues": issues})
        } else {
            let r = verify_schedule_end_to_end(sched, a.seed, a.trials)?;
            json!({
                "index": i,
                "passed": r.passed(),
                "trials": r.trials,
                "tuples": r.tuples,
                "alignment_failures": r.alignment_failures,
                "decodability_failures": r.decodability_failures,
                "max_residual": r.max_residual,
                "min_singular_value": r.min_singular_value,
                "symbols_per_slot": r.symbols_per_slot.map(|q| *q.numer() as f64 / *q.denom() as f64),
            })
        };
        all_passed &= row["passed"] == json!(true);
        rows.push(row);
    }
    if a.json {
        let v = if rows.len() == 1 {
            rows.remove(0)
        } else {
            json!(rows)
        };
        writeln!(
            io.out,
            "{}",
            serde_json::to_string_pretty(&v).expect("json")
        )
        .map_err(io_err)?;
    } else {
        for row in &rows {
            write_verify_row(row, io)?;
        }
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_FAILURE })
}

fn write_verify_row(row: &serde_json::Value, io: &mut Io) -> Result<(), BiaError> {
    let verdict = if row["passed"] == json!(true) {
        "PASS"
    } else {
        "FAIL"
    };
    writeln!(io.out, "schedule {}: {verdict}", row["index"]).map_err(io_err)?;
    if let Some(issues) = row["issues"].as_array() {
        for issue in issues {
            writeln!(io.out, "  {}", issue.as_str().unwrap_or_default()).map_err(io_err)?;
        }
        return Ok(());
    }
    writeln!(
        io.out,
        "  trials {} tuples {} alignment failures {} decodability failures {}",
        row["trials"], row["tuples"], row["alignment_failures"], row["decodability_failures"]
    )
    .map_err(io_err)?;
    writeln!(
        io.out,
        "  max residual {:e}",
        row["max_residual"].as_f64().unwrap_or(f64::NAN)
    )
    .map_err(io_err)?;
    writeln!(
        io.out,
        "  min singular value {:e}",
        row["min_singular_value"].as_f64().unwrap_or(f64::NAN)
    )
    .map_err(io_err)?;
    if let Some(q) = row["symbols_per_slot"].as_f64() {
        writeln!(io.out, "  symbols/slot {q}").map_err(io_err)?;
    }
    Ok(())
}

fn user_counts(a: &ProbArgs) -> Result<Vec<u64>, BiaError> {
    if let Some(k) = a.users {
        return Ok(vec![k]);
    }
    let raw = a.user_range.as_deref().unwrap_or_default();
    let parsed = raw.split_once(':').and_then(|(lo, hi)| {
        Some((
            lo.trim().parse::<u64>().ok()?,
            hi.trim().parse::<u64>().ok()?,
        ))
    });
    match parsed {
        Some((lo, hi)) if lo <= hi => Ok((lo..=hi).collect()),
        _ => Err(BiaError::InvalidInput(format!(
            "--K-range expects a:b with a <= b, got {raw:?}"
        ))),
    }
}

fn estimate(a: &ProbArgs, k: u64) -> Result<ProbabilityEstimate, BiaError> {
    let n = a.coherence;
    if k < a.k_target {
        return Err(BiaError::InvalidInput(format!(
            "K = {k} is smaller than the target subset size {}",
            a.k_target
        )));
    }
    match (a.method, a.k_target) {
        (Method::Bound, 3) => p_upper_3(n, k),
        (Method::Bound, _) => p_formula_2(n, k),
        (Method::Exact, t) => p_exact(n, k, t, DEFAULT_ENUMERATION_GUARD),
        (Method::Mc, t) => monte_carlo_p(n, k, t, a.trials, a.seed),
    }
}

fn cmd_prob(a: &ProbArgs, io: &mut Io) -> CmdResult {
    let rows = user_counts(a)?
        .into_iter()
        .map(|k| estimate(a, k).map(|e| (k, e)))
        .collect::<Result<Vec<_>, _>>()?;
    match a.format {
        Format::Csv => {
            writeln!(io.out, "N,K,k_target,method,p,half_width").map_err(io_err)?;
            for (k, e) in &rows {
                let hw = e.half_width.map(|h| h.to_string()).unwrap_or_default();
                writeln!(
                    io.out,
                    "{},{k},{},{},{},{hw}",
                    a.coherence, a.k_target, e.method, e.p
                )
                .map_err(io_err)?;
            }
        }
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(k, e)| {
                    json!({
                        "N": a.coherence,
                        "K": k,
                        "k_target": a.k_target,
                        "method": e.method.to_string(),
                        "p": e.p,
                        "half_width": e.half_width,
                        "trials": e.trials,
                    })
                })
                .collect();
            writeln!(
                io.out,
                "{}",
                serde_json::to_string_pretty(&v).expect("json")
            )
            .map_err(io_err)?;
        }
    }
    Ok(EXIT_OK)
}
