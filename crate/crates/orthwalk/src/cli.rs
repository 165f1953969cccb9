//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a check or validation fails (or an
//! analysis cannot be carried out on the given input), 2 on bad parameters,
//! unreadable or malformed input files, and usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use orthwalk_core::lyapunov::{self, GeometricCheck, LinearCheck};
use orthwalk_core::machine::{Configuration, CounterMachine, RunOutcome};
use orthwalk_core::queueing::{embedded_chain, load_factor, queue_simulate};
use orthwalk_core::rational::to_f64;
use orthwalk_core::reduction::{self, CompiledWalk};
use orthwalk_core::stationary::{self, ApproxMode, ApproxParams, DEFAULT_STATE_CAP};
use orthwalk_core::{Error, Prob, TransitionKernel, WalkState};

use crate::formats::{self, CompileMeta, FormatError};
use crate::manifest::{write_with_manifest, RunManifest};
use crate::parallel;

#[derive(Parser, Debug)]
#[command(name = "orthwalk", version, about = "Constrained random walks on the nonnegative orthant")]
struct Cli {
    /// Table format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    /// Write the output to FILE, with the run manifest in FILE.manifest.json.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel validation and simulation.
    #[command(subcommand)]
    Walk(WalkCmd),
    /// Counter machines.
    #[command(subcommand)]
    Cm(CmCmd),
    /// Compile a counter machine into a walk kernel.
    ///
    /// Writes the kernel JSON; with --out also FILE.meta.json (machine and
    /// parameters, used by `stationary return` and `ldrate` to close
    /// excursion laws exactly) and FILE.cert.json (linear certificate).
    Compile(CompileArgs),
    /// Drift checks.
    #[command(subcommand)]
    Lyapunov(LyapunovCmd),
    /// Return times and stationary probabilities.
    #[command(subcommand)]
    Stationary(StationaryCmd),
    /// Large-deviation points π(nv). Columns: n, pi, log_pi_over_n.
    Ldrate(LdrateArgs),
    /// Single-station multiclass queues.
    #[command(subcommand)]
    Queue(QueueCmd),
}

#[derive(Subcommand, Debug)]
enum WalkCmd {
    /// Check a kernel file. Columns: violation.
    Validate { kernel: PathBuf },
    /// Sample one trajectory. Columns: t, state.
    Simulate {
        kernel: PathBuf,
        #[arg(long, default_value = "origin")]
        start: String,
        #[arg(long)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum CmCmd {
    /// Run a machine from its halting configuration. Columns (with --trace): t, config.
    Run {
        machine: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        trace: bool,
    },
}

#[derive(clap::Args, Debug)]
struct CompileArgs {
    machine: PathBuf,
    /// Survival probability, a rational in (0,1).
    #[arg(long)]
    p: Option<String>,
    /// Add the q3 height coordinate.
    #[arg(long)]
    q3: bool,
    /// Weight of q2 in the certificate (default 2/(1-p), or 3/(1-p) with --q3).
    #[arg(long)]
    c: Option<String>,
    /// Emit the deterministic walk instead of the stochastic one.
    #[arg(long)]
    deterministic: bool,
    /// Split ±2 steps into pairs of unit steps.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum LyapunovCmd {
    /// Linear drift check. Columns: face, drift, ok.
    Linear {
        kernel: PathBuf,
        /// Weights: inline list, list file, or linear certificate file.
        #[arg(long)]
        w: String,
        #[arg(long, default_value = "1")]
        gamma: String,
    },
    /// Geometric drift check. Columns: face, ratio, ok.
    Geometric {
        kernel: PathBuf,
        /// Build the certificate from these linear weights (inline list, list file, or linear certificate file).
        #[arg(long, conflicts_with = "cert")]
        from_linear: Option<String>,
        /// Check an existing certificate file.
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Exception set, states separated by ';'.
        #[arg(long, default_value = "origin")]
        exception: String,
        /// Write the certificate to FILE.
        #[arg(long, value_name = "FILE")]
        emit: Option<PathBuf>,
    },
    /// Inputs of the geometric mixing bound. Columns: quantity, value.
    MixingInputs {
        kernel: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Subcommand, Debug)]
enum StationaryCmd {
    /// First-return law. Columns: t, prob (exact) or t, count (mc).
    Return {
        kernel: PathBuf,
        #[arg(long, default_value = "origin")]
        target: String,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 100)]
        horizon: u64,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Step cap per Monte Carlo episode.
        #[arg(long, default_value_t = 1_000_000)]
        max_steps: u64,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Exact stationary law of a finite class. Columns: state, pi.
    Solve {
        kernel: PathBuf,
        #[arg(long, default_value = "origin")]
        seed_state: String,
        #[arg(long, default_value_t = 100_000)]
        cap: usize,
    },
    /// Interval for π(x0) from the geometric mixing bound.
    Approx {
        kernel: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        /// Fit (R, rho) from the propagated law; the interval is not certified.
        #[arg(long)]
        heuristic: bool,
        #[arg(long, default_value = "origin")]
        x0: String,
        #[arg(long, default_value = "origin")]
        start: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1_000_000)]
        horizon_cap: u64,
    },
}

#[derive(clap::Args, Debug)]
struct Budgets {
    /// Excursions enumerated before the analytic tail (compiled walks).
    #[arg(long, default_value_t = 64)]
    budget: u64,
    /// Machine steps run to look for halting (compiled walks).
    #[arg(long, default_value_t = 1_000_000)]
    machine_budget: u64,
}

#[derive(clap::Args, Debug)]
struct LdrateArgs {
    kernel: PathBuf,
    /// Direction, comma separated nonnegative integers.
    #[arg(long)]
    v: String,
    #[arg(long)]
    n_max: u64,
    #[arg(long, default_value = "origin")]
    seed_state: String,
    #[arg(long, default_value_t = 100_000)]
    cap: usize,
    #[command(flatten)]
    budgets: Budgets,
}

#[derive(Subcommand, Debug)]
enum QueueCmd {
    /// Load factor.
    Load { spec: PathBuf },
    /// Simulate epochs. Columns: buffer, mean_occupancy.
    Sim {
        spec: PathBuf,
        /// Number of epochs (slot blocks).
        #[arg(long)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Embedded chain at epochs. Columns: state, prob (or state, pi with --analyze).
    Embed {
        spec: PathBuf,
        /// Solve the stationary law of the class of the empty state.
        #[arg(long)]
        analyze: bool,
        /// State whose successors are listed (default empty).
        #[arg(long)]
        from: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        cap: usize,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn core_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_)
        | Error::Probability(_)
        | Error::DimensionMismatch { .. }
        | Error::UnsupportedDimension(_)
        | Error::MachineDefinition(_)
        | Error::InconsistentPolicy { .. } => 2,
        _ => 1,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: core_code(&e), message: e.to_string() }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Core(e) => e.into(),
            other => CliError { code: 2, message: other.to_string() },
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Text(String),
    Int(u64),
    Float(f64),
    Bool(bool),
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => x.to_string(),
            Value::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Text(s) => s.clone().into(),
            Value::Int(i) => (*i).into(),
            Value::Float(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, Into::into),
            Value::Bool(b) => (*b).into(),
        }
    }
}

fn text(s: impl ToString) -> Value {
    Value::Text(s.to_string())
}

/// Summary lines followed by a table.
#[derive(Default)]
struct Report {
    summary: Vec<String>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
    /// Exit code when the report itself is a failed check.
    code: i32,
}

impl Report {
    fn table(columns: &[&'static str]) -> Report {
        Report { columns: columns.to_vec(), ..Report::default() }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }

    fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                for s in &self.summary {
                    out.push_str(s);
                    out.push('\n');
                }
                if !self.columns.is_empty() {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    let _ = w.write_record(&self.columns);
                    for row in &self.rows {
                        let _ = w.write_record(row.iter().map(Value::csv));
                    }
                    out.push_str(&String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default());
                }
            }
            Format::JsonLines => {
                for s in &self.summary {
                    out.push_str(&serde_json::json!({ "summary": s }).to_string());
                    out.push('\n');
                }
                for row in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> =
                        self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    out.push_str(&serde_json::Value::Object(obj).to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

struct Context<'a> {
    manifest: RunManifest,
    quiet: bool,
    err: &'a mut dyn Write,
    started: Instant,
}

impl Context<'_> {
    fn read(&mut self, path: &Path) -> CliResult<String> {
        let s = formats::read_file(path)?;
        self.manifest.record_input(path, s.as_bytes());
        Ok(s)
    }

    fn progress(&mut self, msg: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "{msg}");
        }
    }

    fn kernel(&mut self, path: &Path) -> CliResult<TransitionKernel> {
        let text = self.read(path)?;
        Ok(formats::kernel_from_json(&text)?)
    }

    /// Rational vector from an inline list, a file holding one, or a linear
    /// certificate file (its `w`).
    fn vector(&mut self, arg: &str) -> CliResult<Vec<Prob>> {
        let path = Path::new(arg);
        if !path.is_file() {
            return Ok(formats::rational_vector(arg)?);
        }
        let text = self.read(path)?;
        if text.trim_start().starts_with('{') {
            return Ok(formats::linear_cert_from_json(&text)?.w);
        }
        Ok(formats::rational_vector(&text)?)
    }

    /// The compiled walk behind `kernel`, when its meta sidecar rebuilds it
    /// exactly.
    fn compiled(&mut self, path: &Path, kernel: &TransitionKernel) -> CliResult<Option<CompiledWalk>> {
        let mut meta_path = path.as_os_str().to_owned();
        meta_path.push(".meta.json");
        let meta_path = PathBuf::from(meta_path);
        if !meta_path.is_file() {
            return Ok(None);
        }
        let meta = formats::meta_from_json(&self.read(&meta_path)?)?;
        if meta.deterministic || meta.strict {
            return Ok(None);
        }
        let machine = formats::machine_from_file(&meta.machine)?;
        let p = formats::rational(meta.p.as_deref().unwrap_or(""))?;
        let c = meta.c.as_deref().map(formats::rational).transpose()?;
        let walk = reduction::compile_extended(&machine, &p, meta.with_q3, c)?;
        if walk.kernel != *kernel {
            self.progress("warning: meta sidecar does not match the kernel; treating it as a plain kernel");
            return Ok(None);
        }
        Ok(Some(walk))
    }
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut ctx = Context { manifest: RunManifest::new(command_line), quiet: cli.quiet, err, started: Instant::now() };
    let format = cli.format;
    let out_path = cli.out.clone();
    match dispatch(cli.command, &mut ctx, out_path.as_deref()) {
        Ok(Output::Report(report)) => {
            let rendered = report.render(format);
            ctx.manifest.wall_time_secs = ctx.started.elapsed().as_secs_f64();
            if let Some(path) = out_path {
                if let Err(e) = write_with_manifest(&path, &rendered, &ctx.manifest) {
                    let _ = writeln!(ctx.err, "error: cannot write {}: {e}", path.display());
                    return 1;
                }
            } else {
                let _ = out.write_all(rendered.as_bytes());
            }
            report.code
        }
        Ok(Output::Raw(text)) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Ok(Output::Done) => 0,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {}", e.message);
            e.code
        }
    }
}

enum Output {
    Report(Report),
    Raw(String),
    /// Everything was written to files.
    Done,
}

fn dispatch(command: Command, ctx: &mut Context<'_>, out: Option<&Path>) -> CliResult<Output> {
    Ok(match command {
        Command::Walk(cmd) => Output::Report(walk_cmd(cmd, ctx)?),
        Command::Cm(CmCmd::Run { machine, steps, trace }) => Output::Report(cm_run(ctx, &machine, steps, trace)?),
        Command::Compile(args) => compile(ctx, args, out)?,
        Command::Lyapunov(cmd) => Output::Report(lyapunov_cmd(cmd, ctx)?),
        Command::Stationary(cmd) => Output::Report(stationary_cmd(cmd, ctx)?),
        Command::Ldrate(args) => Output::Report(ldrate(ctx, args)?),
        Command::Queue(cmd) => Output::Report(queue_cmd(cmd, ctx)?),
    })
}

fn walk_cmd(cmd: WalkCmd, ctx: &mut Context<'_>) -> CliResult<Report> {
    match cmd {
        WalkCmd::Validate { kernel } => {
            let k = ctx.kernel(&kernel)?;
            let v = k.validate();
            let mut r = Report::table(&["violation"]);
            r.rows = v.violations.iter().map(|x| vec![text(x)]).collect();
            if v.is_valid() {
                r.line(format!("valid: dimension {}, {} faces", k.dimension(), k.face_count()));
            } else {
                r.line(format!("invalid: {} violations", v.violations.len()));
                r.code = 1;
            }
            Ok(r)
        }
        WalkCmd::Simulate { kernel, start, horizon, seed } => {
            let k = ctx.kernel(&kernel)?;
            ctx.manifest.seed = Some(seed);
            let start = formats::state(&start, k.dimension())?;
            let traj = k.simulate(&start, horizon, seed)?;
            let mut r = Report::table(&["t", "state"]);
            r.rows = traj.iter().enumerate().map(|(t, s)| vec![Value::Int(t as u64), text(formats::state_string(s))]).collect();
            Ok(r)
        }
    }
}

fn load_machine(ctx: &mut Context<'_>, path: &Path) -> CliResult<CounterMachine> {
    let text = ctx.read(path)?;
    Ok(formats::machine_from_json(&text)?)
}

fn config_string(m: &CounterMachine, c: &Configuration) -> String {
    format!("({},{},{})", m.names()[c.state], c.z1, c.z2)
}

fn cm_run(ctx: &mut Context<'_>, machine: &Path, steps: u64, trace: bool) -> CliResult<Report> {
    let m = load_machine(ctx, machine)?;
    let mut r = Report::table(if trace { &["t", "config"] } else { &[] });
    match m.run(m.halting(), steps)? {
        RunOutcome::Halted(t) => r.line(format!("halted after {t} steps")),
        RunOutcome::Running(c) => r.line(format!("running after {steps} steps at {}", config_string(&m, &c))),
    }
    if trace {
        r.rows = m
            .trace(m.halting(), steps)?
            .iter()
            .enumerate()
            .map(|(t, c)| vec![Value::Int(t as u64), text(config_string(&m, c))])
            .collect();
    }
    Ok(r)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn compile(ctx: &mut Context<'_>, args: CompileArgs, out: Option<&Path>) -> CliResult<Output> {
    let machine = load_machine(ctx, &args.machine)?;
    let mut meta = CompileMeta {
        machine: formats::machine_file(&machine),
        deterministic: args.deterministic,
        p: None,
        with_q3: args.q3,
        c: None,
        strict: args.strict,
        layout: Default::default(),
    };
    let (kernel, cert) = if args.deterministic {
        let walk = reduction::compile_deterministic(&machine)?;
        meta.layout = formats::layout_map(&walk.layout);
        (walk.kernel, None)
    } else {
        let p_text = args.p.as_deref().ok_or_else(|| usage("--p is required for the stochastic walk"))?;
        let p = formats::rational(p_text)?;
        if p <= Prob::from_integer(0.into()) || p >= Prob::from_integer(1.into()) {
            return Err(usage(format!("p outside (0,1): {p}")));
        }
        let c = args.c.as_deref().map(formats::rational).transpose()?;
        let walk = reduction::compile_extended(&machine, &p, args.q3, c)?;
        meta.p = Some(formats::rational_string(&p));
        meta.c = args.c.as_deref().map(formats::rational).transpose()?.map(|c| formats::rational_string(&c));
        meta.layout = formats::layout_map(&walk.layout);
        (walk.kernel, Some(walk.certificate))
    };
    let kernel = if args.strict { kernel.split_pm2()?.kernel } else { kernel };
    let kernel_json = formats::kernel_to_json(&kernel);
    let Some(path) = out else {
        return Ok(Output::Raw(kernel_json));
    };
    ctx.manifest.wall_time_secs = ctx.started.elapsed().as_secs_f64();
    let io = |e: std::io::Error| CliError { code: 1, message: format!("cannot write output: {e}") };
    write_with_manifest(path, &kernel_json, &ctx.manifest).map_err(io)?;
    let meta_path = sibling(path, ".meta.json");
    write_with_manifest(&meta_path, &formats::meta_to_json(&meta), &ctx.manifest).map_err(io)?;
    if let Some(cert) = cert.filter(|_| !args.strict) {
        write_with_manifest(&sibling(path, ".cert.json"), &formats::linear_cert_to_json(&cert), &ctx.manifest).map_err(io)?;
    }
    ctx.progress(&format!("wrote {} (dimension {}, {} faces)", path.display(), kernel.dimension(), kernel.face_count()));
    Ok(Output::Done)
}

fn lyapunov_cmd(cmd: LyapunovCmd, ctx: &mut Context<'_>) -> CliResult<Report> {
    match cmd {
        LyapunovCmd::Linear { kernel, w, gamma } => {
            let k = ctx.kernel(&kernel)?;
            let w = ctx.vector(&w)?;
            let gamma = formats::rational(&gamma)?;
            let check = lyapunov::check_linear(&k, &w, &gamma)?;
            let mut r = Report::table(&["face", "drift", "ok"]);
            let bound = -gamma.clone();
            r.rows = lyapunov::face_drifts(&k, &w)?
                .into_iter()
                .map(|(f, d)| vec![text(f), text(&d), Value::Bool(d <= bound)])
                .collect();
            match check {
                LinearCheck::Pass => r.line(format!("PASS: drift <= -{gamma} on every nonempty face")),
                LinearCheck::Fail { face, drift } => {
                    r.line(format!("FAIL: face {face} has drift {drift}"));
                    r.code = 1;
                }
            }
            Ok(r)
        }
        LyapunovCmd::Geometric { kernel, from_linear, cert, exception, emit } => {
            let k = ctx.kernel(&kernel)?;
            let cert = match (from_linear, cert) {
                (Some(w), None) => {
                    let w = ctx.vector(&w)?;
                    let b = formats::states(&exception, k.dimension())?;
                    lyapunov::geometric_from_linear(&k, &w, &b)?
                }
                (None, Some(path)) => formats::geometric_cert_from_json(&ctx.read(&path)?)?,
                _ => return Err(usage("give either --from-linear or --cert")),
            };
            let check = lyapunov::check_geometric(&k, &cert)?;
            let mut r = Report::table(&["face", "ratio", "ok"]);
            let b_origin = cert.exception_set.iter().any(WalkState::is_origin);
            r.rows = k
                .faces()
                .filter(|(f, rules)| !rules.is_empty() && !(f.is_empty() && b_origin))
                .map(|(f, rules)| {
                    let ratio = lyapunov::face_ratio(rules, &cert.w, cert.delta);
                    vec![text(f), Value::Float(ratio), Value::Bool(ratio <= cert.gamma_g)]
                })
                .collect();
            r.line(format!("delta = {}", cert.delta));
            r.line(format!("gamma_g = {}", cert.gamma_g));
            r.line(format!("b_max = {}", cert.b_max));
            match check {
                GeometricCheck::Pass => r.line("PASS"),
                GeometricCheck::Fail { face, ratio } => {
                    r.line(format!("FAIL: face {face} has ratio {ratio}"));
                    r.code = 1;
                }
                GeometricCheck::FailState { state, ratio } => {
                    r.line(format!("FAIL: state {state} has ratio {ratio}"));
                    r.code = 1;
                }
            }
            if let Some(path) = emit {
                ctx.manifest.wall_time_secs = ctx.started.elapsed().as_secs_f64();
                write_with_manifest(&path, &formats::geometric_cert_to_json(&cert), &ctx.manifest)
                    .map_err(|e| CliError { code: 1, message: format!("cannot write {}: {e}", path.display()) })?;
            }
            Ok(r)
        }
        LyapunovCmd::MixingInputs { kernel, cert } => {
            let k = ctx.kernel(&kernel)?;
            let cert = formats::geometric_cert_from_json(&ctx.read(&cert)?)?;
            let mi = lyapunov::mixing_inputs(&k, &cert)?;
            let mut r = Report::table(&["quantity", "value"]);
            r.rows = vec![
                vec![text("nu"), Value::Float(mi.nu)],
                vec![text("p_B_min"), text(&mi.p_b_min)],
                vec![text("gamma_g"), Value::Float(mi.gamma_g)],
                vec![text("b_max"), Value::Float(mi.b_max)],
            ];
            if let Some(w) = &mi.warning {
                r.line(format!("warning: {w}"));
            }
            Ok(r)
        }
    }
}

fn stationary_cmd(cmd: StationaryCmd, ctx: &mut Context<'_>) -> CliResult<Report> {
    match cmd {
        StationaryCmd::Return { kernel, target, mode, horizon, episodes, seed, max_steps, budgets } => {
            let k = ctx.kernel(&kernel)?;
            let target = formats::state(&target, k.dimension())?;
            match mode {
                Mode::Exact => {
                    let mut report = stationary::return_time_exact(&k, &target, horizon, DEFAULT_STATE_CAP)?;
                    if report.mean_exact.is_none() && target.is_origin() {
                        if let Some(walk) = ctx.compiled(&kernel, &k)? {
                            let profile = walk.cycle_profile(budgets.budget.max(horizon / 2 + 2), &[], budgets.machine_budget)?;
                            report = stationary::close_with_profile(report, &profile)?;
                        }
                    }
                    let mut r = Report::table(&["t", "prob"]);
                    r.rows = report.pmf_prefix.iter().map(|(t, p)| vec![Value::Int(*t), text(p)]).collect();
                    r.line(format!("target = {}", formats::state_string(&report.target)));
                    r.line(format!("tail_mass = {}", report.tail_mass));
                    r.line(format!("mean_lower = {}", report.mean_lower));
                    if let (Some(m), Some(pi)) = (&report.mean_exact, &report.pi_estimate) {
                        r.line(format!("mean_exact = {m}"));
                        r.line(format!("pi = {pi}"));
                    }
                    if report.tail_assumed {
                        r.line("tail_assumed = true (machine did not halt within the machine budget)");
                    }
                    Ok(r)
                }
                Mode::Mc => {
                    ctx.manifest.seed = Some(seed);
                    ctx.progress(&format!("running {episodes} episodes"));
                    let acc = parallel::return_time_mc_accumulate(&k, &target, episodes, seed, max_steps)?;
                    let s = acc.summary();
                    let mut r = Report::table(&["t", "count"]);
                    r.rows = acc.counts.iter().map(|(t, c)| vec![Value::Int(*t), Value::Int(*c)]).collect();
                    r.line(format!("episodes = {}", s.episodes));
                    r.line(format!("censored = {}", s.censored));
                    r.line(format!("mean = {}", s.mean));
                    r.line(format!("std_error = {}", s.std_error));
                    r.line(format!("pi_estimate = {}", 1.0 / s.mean));
                    Ok(r)
                }
            }
        }
        StationaryCmd::Solve { kernel, seed_state, cap } => {
            let k = ctx.kernel(&kernel)?;
            let seed = formats::state(&seed_state, k.dimension())?;
            let pi = stationary::solve_stationary_exact(&k, &seed, cap)?;
            let mut r = Report::table(&["state", "pi"]);
            r.line(format!("pi({}) = {}", seed_state.trim(), pi[&seed]));
            r.rows = pi.iter().map(|(s, p)| vec![text(formats::state_string(s)), text(p)]).collect();
            Ok(r)
        }
        StationaryCmd::Approx { kernel, cert, r, rho, heuristic, x0, start, epsilon, horizon_cap } => {
            let k = ctx.kernel(&kernel)?;
            let cert = formats::geometric_cert_from_json(&ctx.read(&cert)?)?;
            let mode = match (heuristic, r, rho) {
                (true, None, None) => ApproxMode::Heuristic,
                (false, Some(r), Some(rho)) => ApproxMode::Certified { r, rho },
                _ => return Err(usage("give --R and --rho, or --heuristic")),
            };
            let mut params = ApproxParams::new(mode, formats::state(&x0, k.dimension())?, formats::state(&start, k.dimension())?, epsilon);
            params.horizon_cap = horizon_cap;
            let a = stationary::approx_stationary(&k, &cert, &params)?;
            let mut rep = Report::table(&["lower", "upper", "p_t", "t", "R", "rho", "certified", "lazy", "leaked"]);
            rep.line(format!("pi({}) in [{}, {}]", x0.trim(), a.lower, a.upper));
            if !a.certified {
                rep.line("NON-CERTIFIED: (R, rho) were fitted heuristically");
            }
            if a.lazy {
                rep.line("computed on the lazy kernel (I+P)/2, which has the same stationary law");
            }
            rep.rows = vec![vec![
                Value::Float(a.lower),
                Value::Float(a.upper),
                Value::Float(a.p_t),
                Value::Int(a.t),
                Value::Float(a.r),
                Value::Float(a.rho),
                Value::Bool(a.certified),
                Value::Bool(a.lazy),
                Value::Float(a.leaked),
            ]];
            Ok(rep)
        }
    }
}

fn ldrate(ctx: &mut Context<'_>, args: LdrateArgs) -> CliResult<Report> {
    let k = ctx.kernel(&args.kernel)?;
    let v: Vec<u64> = args
        .v
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|_| usage(format!("bad direction entry {t:?}"))))
        .collect::<CliResult<_>>()?;
    if args.n_max == 0 {
        return Err(usage("--n-max must be at least 1"));
    }
    let report = match ctx.compiled(&args.kernel, &k)? {
        Some(walk) if formats::state(&args.seed_state, k.dimension())?.is_origin() => {
            stationary::ldrate_compiled(&walk, &v, args.n_max, args.budgets.budget, args.budgets.machine_budget)?
        }
        _ => {
            let seed = formats::state(&args.seed_state, k.dimension())?;
            stationary::ldrate_exact(&k, &seed, &v, args.n_max, args.cap)?
        }
    };
    let mut r = Report::table(&["n", "pi", "log_pi_over_n"]);
    r.rows = report
        .points
        .iter()
        .map(|p| vec![Value::Int(p.n), text(&p.pi), p.log_pi_over_n.map_or(text("-inf"), Value::Float)])
        .collect();
    if report.infinite {
        r.line(format!("L(v) = +inf: pi(nv) = 0 for all n >= {}", report.n0.unwrap_or(0)));
    } else {
        let f = |x: Option<f64>| x.map_or("n/a".to_string(), |x| x.to_string());
        r.line(format!("slope = {}", f(report.slope_estimate)));
        r.line(format!("L_minus = {}", f(report.l_minus)));
        r.line(format!("L_plus = {}", f(report.l_plus)));
    }
    if report.tail_assumed {
        r.line("tail_assumed = true (machine did not halt within the machine budget)");
    }
    Ok(r)
}

fn queue_cmd(cmd: QueueCmd, ctx: &mut Context<'_>) -> CliResult<Report> {
    let spec = match &cmd {
        QueueCmd::Load { spec } | QueueCmd::Sim { spec, .. } | QueueCmd::Embed { spec, .. } => spec.clone(),
    };
    let (system, policy) = formats::queue_from_json(&ctx.read(&spec)?)?;
    match cmd {
        QueueCmd::Load { .. } => {
            let l = load_factor(&system);
            let mut r = Report::table(&["rho", "rho_float", "stable_necessary"]);
            r.line(format!("rho = {}", l.rho));
            r.rows = vec![vec![text(&l.rho), Value::Float(to_f64(&l.rho)), Value::Bool(l.stable_necessary)]];
            Ok(r)
        }
        QueueCmd::Sim { horizon, seed, .. } => {
            ctx.manifest.seed = Some(seed);
            let stats = queue_simulate(&system, &policy, horizon, seed, 0)?;
            let mut r = Report::table(&["buffer", "mean_occupancy"]);
            r.line(format!("epochs = {}", stats.epochs));
            r.line(format!("empty_epoch_fraction = {}", stats.empty_epoch_fraction));
            r.line(format!("arrivals = {}", stats.arrivals));
            r.line(format!("departures = {}", stats.departures));
            r.rows = stats
                .mean_occupancy
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let (i, j) = system.buffer_label(k + 1);
                    vec![text(format!("B{i}{j}")), Value::Float(m)]
                })
                .collect();
            Ok(r)
        }
        QueueCmd::Embed { analyze, from, cap, .. } => {
            let chain = embedded_chain(&system, &policy);
            let n = system.buffers();
            if analyze {
                let empty = vec![0u64; n];
                let pi = stationary::solve_stationary_exact(&chain, &empty, cap)?;
                let means = chain.occupancy_means(&pi)?;
                let mut r = Report::table(&["state", "pi"]);
                r.line(format!("pi(empty) = {}", pi[&empty]));
                for (k, m) in means.iter().enumerate() {
                    let (i, j) = system.buffer_label(k + 1);
                    r.line(format!("mean_occupancy(B{i}{j}) = {m}"));
                }
                r.rows = pi.iter().map(|(s, p)| vec![text(join(s)), text(p)]).collect();
                Ok(r)
            } else {
                let state = match from {
                    Some(s) => formats::state(&s, n)?.0,
                    None => vec![0; n],
                };
                let mut r = Report::table(&["state", "prob"]);
                r.rows = orthwalk_core::MarkovChain::successors(&chain, &state)?
                    .into_iter()
                    .map(|(s, p)| vec![text(join(&s)), text(&p)])
                    .collect();
                Ok(r)
            }
        }
    }
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}
