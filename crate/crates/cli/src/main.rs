//! `hsps`: simulate cascade photon streams, emulate purification schemes
//! over them, fit emitter parameters and project hardware budgets.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver or estimation
//! failure, 4 I/O or stream-format error.

mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hsps_core::budget::{
    rate_projection, rate_vs_lifetime_curve, response_time_ps, scheme_difference_map,
    DetectorKind, HardwareConfig, Layout, SchemeOp,
};
use hsps_core::emitter::{self, EmitterParams, HeraldScheme, NoiseParams};
use hsps_core::estimation::{
    derive_emitter_params, fit_exponentials, measure_p1, DEFAULT_NOISE_LIFETIME_CEILING_NS,
};
use hsps_core::herald::{self, SchemeConfig, SweepAxis};
use hsps_core::presets;
use hsps_core::sim::{simulate_stream, DetectorConfig, SimConfig};
use hsps_core::timetag::{lifetime_histogram, read_stream_path, write_stream_path, Localized};
use hsps_core::Error;

use output::Format;

#[derive(Parser)]
#[command(name = "hsps", version, about = "Cascade photon-stream simulator and analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a time-tagged photon stream from the cascade model.
    Simulate(SimulateArgs),
    /// Replay a purification scheme over a recorded stream.
    Emulate(EmulateArgs),
    /// Evaluate closed-form model quantities.
    Analytic(AnalyticArgs),
    /// Fit lifetimes to a stream and derive emitter parameters.
    Fit(FitArgs),
    /// Hardware response-time budgets and photon-rate projections.
    Budget(BudgetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Unit yields and collection, lifetime ratio 4.
    Ideal,
    /// Nanocone-enhanced dot: yields 0.61/0.7, lifetimes 1.6/0.5 ns,
    /// collection 0.72.
    ModelSystem,
    /// Measured room-temperature nanocrystal dot, including its noise rates.
    PaperNqd,
}

impl Preset {
    fn emitter(self) -> EmitterParams {
        match self {
            Preset::Ideal => presets::ideal(),
            Preset::ModelSystem => presets::model_system(),
            Preset::PaperNqd => presets::measured_dot(),
        }
    }

    fn noise(self) -> NoiseParams {
        match self {
            Preset::PaperNqd => presets::measured_dot_noise(),
            _ => NoiseParams::none(),
        }
    }
}

/// Emitter/noise/detector flags shared by several commands. Values override
/// the preset (or config file) field by field.
#[derive(Args, Debug, Clone)]
struct ModelFlags {
    /// Parameter preset to start from.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    qyx: Option<f64>,
    #[arg(long)]
    qybx: Option<f64>,
    /// Exciton lifetime in ns.
    #[arg(long)]
    tau_x: Option<f64>,
    /// Biexciton lifetime in ns.
    #[arg(long)]
    tau_bx: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Correlated-noise probability per pulse (emitter level).
    #[arg(long)]
    eta_cn: Option<f64>,
    /// Correlated-noise lifetime in ns.
    #[arg(long)]
    tau_cn: Option<f64>,
    /// Uncorrelated-noise probability per pulse (emitter level).
    #[arg(long)]
    eta_un: Option<f64>,
    /// Disable all noise regardless of preset.
    #[arg(long)]
    no_noise: bool,
    /// First splitter reflectivity.
    #[arg(long)]
    r1: Option<f64>,
    /// Second splitter reflectivity.
    #[arg(long)]
    r2: Option<f64>,
    /// Per-detector dead time in ns; omit for one count per pulse per
    /// detector.
    #[arg(long)]
    dead_time: Option<f64>,
    /// Gaussian timing jitter in ps.
    #[arg(long)]
    jitter: Option<f64>,
}

impl ModelFlags {
    fn emitter(&self, base: Option<EmitterParams>) -> Result<EmitterParams, Error> {
        let base = self
            .preset
            .map(Preset::emitter)
            .or(base)
            .unwrap_or_else(presets::model_system);
        let p = EmitterParams {
            qy_x: self.qyx.unwrap_or(base.qy_x),
            qy_bx: self.qybx.unwrap_or(base.qy_bx),
            tau_x_ns: self.tau_x.unwrap_or(base.tau_x_ns),
            tau_bx_ns: self.tau_bx.unwrap_or(base.tau_bx_ns),
            beta: self.beta.unwrap_or(base.beta),
            alpha: self.alpha.unwrap_or(base.alpha),
        };
        p.validate()?;
        Ok(p)
    }

    fn noise(&self, base: Option<NoiseParams>) -> Result<NoiseParams, Error> {
        if self.no_noise {
            return Ok(NoiseParams::none());
        }
        let base = self
            .preset
            .map(Preset::noise)
            .or(base)
            .unwrap_or_else(NoiseParams::none);
        let n = NoiseParams {
            eta_cn: self.eta_cn.unwrap_or(base.eta_cn),
            tau_cn_ns: self.tau_cn.unwrap_or(base.tau_cn_ns),
            eta_un: self.eta_un.unwrap_or(base.eta_un),
        };
        n.validate()?;
        Ok(n)
    }

    fn detectors(&self, base: Option<DetectorConfig>) -> Result<DetectorConfig, Error> {
        let base = base.unwrap_or_default();
        let d = DetectorConfig {
            r1: self.r1.unwrap_or(base.r1),
            r2: self.r2.unwrap_or(base.r2),
            dead_time_ns: self.dead_time.or(base.dead_time_ns),
            jitter_sigma_ps: self.jitter.unwrap_or(base.jitter_sigma_ps),
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Number of excitation pulses (scientific notation accepted).
    #[arg(long, value_parser = parse_count)]
    pulses: Option<u64>,
    /// Time between excitation pulses in ns.
    #[arg(long)]
    rep_period_ns: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Full run configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output stream path (.tts binary, .csv twin format).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EmulateArgs {
    /// Input stream (.tts or .csv). A `<input>.json` sidecar, when present,
    /// supplies the detector geometry and collection efficiency.
    input: PathBuf,
    #[arg(long, value_enum)]
    scheme: SchemeKind,
    /// TIMED cutoff time in ns.
    #[arg(long)]
    t_c: Option<f64>,
    /// ASH response time in ns.
    #[arg(long)]
    t_r: Option<f64>,
    /// Noise filter in ns.
    #[arg(long, default_value_t = 0.3)]
    t_f: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long)]
    dead_time: Option<f64>,
    /// Sweep one parameter instead of a single evaluation.
    #[arg(long, value_enum)]
    sweep: Option<SweepAxisArg>,
    #[arg(long, requires = "sweep")]
    from: Option<f64>,
    #[arg(long, requires = "sweep")]
    to: Option<f64>,
    #[arg(long, requires = "sweep")]
    steps: Option<usize>,
    /// Add the closed-form efficiency prediction as a column (needs emitter
    /// parameters from the sidecar or model flags).
    #[arg(long)]
    overlay_analytic: bool,
    #[arg(long)]
    qyx: Option<f64>,
    #[arg(long)]
    qybx: Option<f64>,
    #[arg(long)]
    tau_x: Option<f64>,
    #[arg(long)]
    tau_bx: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeKind {
    Timed,
    Ash,
    Tgf,
    Bs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepAxisArg {
    Gate,
    Filter,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(value_enum)]
    op: AnalyticOp,
    #[command(flatten)]
    model: ModelFlags,
    /// Gate/cutoff time in ns (TIMED cutoff, determinicity gate, TGF filter).
    #[arg(long)]
    gate: Option<f64>,
    /// ASH response time in ns.
    #[arg(long)]
    tr: Option<f64>,
    /// Purity target for the gate solve.
    #[arg(long)]
    s_target: Option<f64>,
    /// Heralded scheme for determinicity.
    #[arg(long, value_enum)]
    scheme: Option<DetScheme>,
    /// Drop the correlated-noise term from the noise purity.
    #[arg(long)]
    exclude_correlated: bool,
    /// Sweep the op's time argument: start,stop,steps.
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<(f64, f64, usize)>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetScheme {
    Timed,
    Ash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalyticOp {
    QyRatio,
    TcOpt,
    EtaTimed,
    EtaAsh,
    BsEfficiency,
    Standalone,
    Tgf,
    SolveTgfGate,
    Determinicity,
    NoisePurity,
    PathProbs,
}

#[derive(Args)]
struct FitArgs {
    /// Input stream (.tts or .csv).
    input: PathBuf,
    /// Number of exponential components.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Histogram bin width in ps.
    #[arg(long, default_value_t = 100)]
    bin_ps: u64,
    /// Noise filter for the one-photon probability measurement, ns.
    #[arg(long, default_value_t = 0.3)]
    t_f: f64,
    /// Lifetimes at or below this are treated as noise, ns.
    #[arg(long, default_value_t = DEFAULT_NOISE_LIFETIME_CEILING_NS)]
    noise_ceiling: f64,
    /// Collection efficiency for the yield derivation; sidecar value used
    /// when omitted.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 4.0)]
    beta: f64,
    /// Skip the yield derivation and emit the fit alone.
    #[arg(long)]
    fit_only: bool,
}

#[derive(Args)]
struct BudgetArgs {
    #[command(subcommand)]
    what: BudgetCommand,
}

#[derive(Subcommand)]
enum BudgetCommand {
    /// Total switch response time for a hardware preset.
    ResponseTime {
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long, value_enum)]
        layout: LayoutArg,
    },
    /// Single-photon rates of every scheme for one emitter.
    Rates {
        #[command(flatten)]
        model: ModelFlags,
        /// Excitation repetition rate in Hz.
        #[arg(long)]
        rep_rate: f64,
        #[arg(long, default_value_t = 0.995)]
        s_target: f64,
        #[arg(long, value_enum, default_value_t = DetectorArg::Snspd)]
        detector: DetectorArg,
        #[arg(long, value_enum, default_value_t = LayoutArg::OnChip)]
        layout: LayoutArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Efficiency difference between active switching and gated filtering
    /// over a quantum-yield grid.
    DifferenceMap {
        /// Grid points per yield axis.
        #[arg(long, default_value_t = 20)]
        qy_steps: usize,
        #[arg(long, default_value_t = 0.995)]
        s_target: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 4.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Scheme rates as a function of the exciton lifetime.
    RateCurve {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, default_value_t = 0.05)]
        tau_from: f64,
        #[arg(long, default_value_t = 4.0)]
        tau_to: f64,
        #[arg(long, default_value_t = 80)]
        steps: usize,
        #[arg(long, default_value_t = 0.995)]
        s_target: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    Snspd,
    Spad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayoutArg {
    OnChip,
    FreeSpace,
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if v < 0.0 || v > 2f64.powi(53) || v.fract() != 0.0 {
        return Err(format!("not a whole non-negative count: {s}"));
    }
    Ok(v as u64)
}

fn parse_sweep(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected start,stop,steps".into());
    }
    let from: f64 = parts[0].trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let to: f64 = parts[1].trim().parse().map_err(|e| format!("bad stop: {e}"))?;
    let steps: usize = parts[2].trim().parse().map_err(|e| format!("bad steps: {e}"))?;
    if steps < 1 {
        return Err("steps must be >= 1".into());
    }
    Ok((from, to, steps))
}

fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![from];
    }
    (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::DegenerateSplitter(_)
        | Error::SchemeMismatch(_) => 2,
        Error::NoSolution(_)
        | Error::FitDidNotConverge { .. }
        | Error::InconsistentCalibration(_)
        | Error::NoEstimate(_) => 3,
        Error::Parse { .. } | Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("HSPS_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        } else {
            eprintln!("ignoring HSPS_THREADS={threads}: not a number");
        }
    }

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Emulate(args) => cmd_emulate(args),
        Command::Analytic(args) => cmd_analytic(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Budget(args) => cmd_budget(args.what),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let base: Option<SimConfig> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?)
        }
        None => None,
    };

    let cfg = SimConfig {
        emitter: args.model.emitter(base.as_ref().map(|c| c.emitter))?,
        noise: args.model.noise(base.as_ref().map(|c| c.noise))?,
        detectors: args.model.detectors(base.as_ref().map(|c| c.detectors))?,
        n_pulses: args
            .pulses
            .or(base.as_ref().map(|c| c.n_pulses))
            .ok_or_else(|| Error::Config("missing --pulses".into()))?,
        rep_period_ns: args
            .rep_period_ns
            .or(base.as_ref().map(|c| c.rep_period_ns))
            .unwrap_or(500.0),
        seed: args.seed.or(base.as_ref().map(|c| c.seed)).unwrap_or(0),
    };

    let out = simulate_stream(&cfg)?;
    for w in &out.summary.warnings {
        eprintln!("warning: {w}");
    }
    write_stream_path(&out.stream, &args.output)?;

    let sidecar = sidecar_path(&args.output);
    let mut f = BufWriter::new(File::create(&sidecar)?);
    writeln!(f, "{}", serde_json::to_string_pretty(&cfg).expect("config serialises"))?;

    eprintln!(
        "wrote {} records ({} pulses) to {}",
        out.stream.records.len(),
        cfg.n_pulses,
        args.output.display()
    );
    Ok(())
}

fn sidecar_path(stream: &Path) -> PathBuf {
    let mut name = stream.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    stream.with_file_name(name)
}

fn load_sidecar(stream: &Path) -> Option<SimConfig> {
    let text = std::fs::read_to_string(sidecar_path(stream)).ok()?;
    serde_json::from_str(&text).ok()
}

// ---------------------------------------------------------------------------
// emulate
// ---------------------------------------------------------------------------

fn cmd_emulate(args: EmulateArgs) -> Result<(), Error> {
    let stream = read_stream_path(&args.input)?;
    let loc = stream.localize()?;
    if loc.dropped_before_first_sync > 0 {
        eprintln!(
            "warning: dropped {} photons before the first sync",
            loc.dropped_before_first_sync
        );
    }
    let sidecar = load_sidecar(&args.input);

    let alpha = args
        .alpha
        .or(sidecar.as_ref().map(|c| c.emitter.alpha))
        .ok_or_else(|| Error::Config("missing --alpha and no stream sidecar".into()))?;
    let side_det = sidecar.as_ref().map(|c| c.detectors).unwrap_or_default();
    let detectors = DetectorConfig {
        r1: args.r1.unwrap_or(side_det.r1),
        r2: args.r2.unwrap_or(side_det.r2),
        dead_time_ns: args.dead_time.or(side_det.dead_time_ns),
        jitter_sigma_ps: side_det.jitter_sigma_ps,
    };
    detectors.validate()?;

    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Error::Config(format!("scheme requires {flag}")))
    };
    let base = match args.scheme {
        SchemeKind::Timed => SchemeConfig::Timed { t_c_ns: need(args.t_c, "--t-c")?, t_f_ns: args.t_f },
        SchemeKind::Ash => SchemeConfig::Ash { t_r_ns: need(args.t_r, "--t-r")?, t_f_ns: args.t_f },
        SchemeKind::Tgf => SchemeConfig::Tgf { t_f_ns: args.t_f },
        SchemeKind::Bs => SchemeConfig::BsHerald,
    };

    let reports = match args.sweep {
        None => vec![herald::emulate(&loc, &base, alpha, &detectors)?],
        Some(axis) => {
            let (from, to, steps) = match (args.from, args.to, args.steps) {
                (Some(f), Some(t), Some(s)) => (f, t, s),
                _ => {
                    return Err(Error::Config(
                        "--sweep needs --from, --to and --steps".into(),
                    ))
                }
            };
            let axis = match axis {
                SweepAxisArg::Gate => SweepAxis::Gate,
                SweepAxisArg::Filter => SweepAxis::Filter,
            };
            herald::sweep(&loc, &base, axis, &grid(from, to, steps), alpha, &detectors)?
        }
    };

    let analytic = if args.overlay_analytic {
        let p = overlay_params(&args, sidecar.as_ref())?;
        Some(
            reports
                .iter()
                .map(|r| predicted_efficiency(&p, r))
                .collect::<Result<Vec<f64>, Error>>()?,
        )
    } else {
        None
    };

    with_sink(args.output.as_deref(), |w| {
        output::write_reports(w, &reports, analytic.as_deref(), args.format)
    })
}

fn overlay_params(args: &EmulateArgs, sidecar: Option<&SimConfig>) -> Result<EmitterParams, Error> {
    let base = sidecar.map(|c| c.emitter);
    let missing = || {
        Error::Config(
            "analytic overlay needs emitter parameters (sidecar or \
             --qyx/--qybx/--tau-x/--tau-bx/--alpha)"
                .into(),
        )
    };
    let p = EmitterParams {
        qy_x: args.qyx.or(base.map(|b| b.qy_x)).ok_or_else(missing)?,
        qy_bx: args.qybx.or(base.map(|b| b.qy_bx)).ok_or_else(missing)?,
        tau_x_ns: args.tau_x.or(base.map(|b| b.tau_x_ns)).ok_or_else(missing)?,
        tau_bx_ns: args.tau_bx.or(base.map(|b| b.tau_bx_ns)).ok_or_else(missing)?,
        beta: base.map(|b| b.beta).unwrap_or(4.0),
        alpha: args.alpha.or(base.map(|b| b.alpha)).ok_or_else(missing)?,
    };
    p.validate()?;
    Ok(p)
}

fn predicted_efficiency(
    p: &EmitterParams,
    r: &hsps_core::herald::HeraldReport,
) -> Result<f64, Error> {
    match r.scheme.as_str() {
        "timed" => emitter::eta_timed(p, r.t_c_ns.unwrap_or(0.0)),
        "ash" => emitter::eta_ash(p, r.t_r_ns.unwrap_or(0.0)),
        "tgf" => Ok(emitter::tgf_metrics(p, r.t_f_ns)?.efficiency),
        _ => Ok(emitter::bs_herald_efficiency(p)),
    }
}

fn with_sink<F>(path: Option<&Path>, f: F) -> Result<(), Error>
where
    F: FnOnce(&mut dyn Write) -> Result<(), Error>,
{
    match path {
        Some(p) => {
            let mut file = BufWriter::new(File::create(p)?);
            f(&mut file)
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

// ---------------------------------------------------------------------------
// analytic
// ---------------------------------------------------------------------------

fn cmd_analytic(args: AnalyticArgs) -> Result<(), Error> {
    let p = args.model.emitter(None)?;
    let stdout = io::stdout();
    let mut w = stdout.lock();

    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Error::Config(format!("operation requires {flag}")))
    };

    // Ops over a swept time argument produce a table; scalars print a line.
    let sweep_rows = |f: &dyn Fn(f64) -> Result<f64, Error>| -> Result<Option<Vec<Vec<f64>>>, Error> {
        match args.sweep {
            None => Ok(None),
            Some((from, to, steps)) => {
                let mut rows = Vec::new();
                for t in grid(from, to, steps) {
                    rows.push(vec![t, f(t)?]);
                }
                Ok(Some(rows))
            }
        }
    };

    match args.op {
        AnalyticOp::QyRatio => {
            let v = emitter::qy_ratio(p.tau_x_ns, p.tau_bx_ns, p.beta)?;
            writeln!(w, "{v}")?;
        }
        AnalyticOp::TcOpt => {
            writeln!(w, "{}", emitter::tc_opt(p.tau_x_ns, p.tau_bx_ns)?)?;
        }
        AnalyticOp::EtaTimed => match sweep_rows(&|t| emitter::eta_timed(&p, t))? {
            Some(rows) => output::write_table(w, &["t_c_ns", "eta_timed"], &rows, args.format)?,
            None => writeln!(w, "{}", emitter::eta_timed(&p, need(args.gate, "--gate")?)?)?,
        },
        AnalyticOp::EtaAsh => match sweep_rows(&|t| emitter::eta_ash(&p, t))? {
            Some(rows) => output::write_table(w, &["t_r_ns", "eta_ash"], &rows, args.format)?,
            None => writeln!(w, "{}", emitter::eta_ash(&p, need(args.tr, "--tr")?)?)?,
        },
        AnalyticOp::BsEfficiency => {
            writeln!(w, "{}", emitter::bs_herald_efficiency(&p))?;
        }
        AnalyticOp::Standalone => {
            let m = emitter::standalone_metrics(&p);
            let rows = vec![vec![m.efficiency, m.purity.unwrap_or(f64::NAN)]];
            output::write_table(w, &["efficiency", "purity"], &rows, args.format)?;
        }
        AnalyticOp::Tgf => {
            let eval = |t: f64| -> Result<Vec<f64>, Error> {
                let m = emitter::tgf_metrics(&p, t)?;
                Ok(vec![t, m.efficiency, m.purity.unwrap_or(f64::NAN)])
            };
            let rows = match args.sweep {
                Some((from, to, steps)) => grid(from, to, steps)
                    .into_iter()
                    .map(eval)
                    .collect::<Result<Vec<_>, Error>>()?,
                None => vec![eval(need(args.gate, "--gate")?)?],
            };
            output::write_table(w, &["t_f_ns", "efficiency", "purity"], &rows, args.format)?;
        }
        AnalyticOp::SolveTgfGate => {
            let gate = emitter::solve_tgf_gate(&p, need(args.s_target, "--s-target")?)?;
            let rows = vec![vec![gate.t_f_ns, gate.efficiency]];
            output::write_table(w, &["t_f_ns", "efficiency"], &rows, args.format)?;
        }
        AnalyticOp::Determinicity => {
            let scheme = match args.scheme {
                Some(DetScheme::Timed) => HeraldScheme::Timed,
                Some(DetScheme::Ash) => HeraldScheme::Ash,
                None => return Err(Error::Config("operation requires --scheme".into())),
            };
            let d = emitter::determinicity(&p, scheme, need(args.gate, "--gate")?)?;
            writeln!(w, "{}", d.map(|v| v.to_string()).unwrap_or_else(|| "no-trigger".into()))?;
        }
        AnalyticOp::NoisePurity => {
            let n = args.model.noise(None)?;
            let v = emitter::noise_adjusted_purity(&p, &n, !args.exclude_correlated);
            writeln!(w, "{v}")?;
        }
        AnalyticOp::PathProbs => {
            let paths = emitter::path_probabilities(&p, need(args.gate, "--gate")?)?;
            let rows: Vec<Vec<f64>> = paths
                .as_array()
                .iter()
                .enumerate()
                .map(|(i, &v)| vec![(i + 1) as f64, v])
                .collect();
            output::write_table(w, &["path", "probability"], &rows, args.format)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let stream = read_stream_path(&args.input)?;
    let loc: Localized = stream.localize()?;
    let hist = lifetime_histogram(&loc, args.bin_ps)?;
    let fit = fit_exponentials(&hist, args.k)?;

    let mut body = serde_json::json!({ "fit": fit });
    if !args.fit_only {
        let sidecar = load_sidecar(&args.input);
        let alpha = args
            .alpha
            .or(sidecar.as_ref().map(|c| c.emitter.alpha))
            .ok_or_else(|| Error::Config("missing --alpha and no stream sidecar".into()))?;
        let p1 = measure_p1(&loc, &fit, &hist, args.t_f, args.noise_ceiling)?;
        let derived = derive_emitter_params(&fit, alpha, args.beta, p1, args.noise_ceiling)?;
        body["p1_measured"] = serde_json::json!(p1);
        body["emitter"] = serde_json::to_value(&derived).expect("params serialise");
    }
    println!("{}", serde_json::to_string_pretty(&body).expect("body serialises"));
    Ok(())
}

// ---------------------------------------------------------------------------
// budget
// ---------------------------------------------------------------------------

fn hardware(detector: DetectorArg, layout: LayoutArg) -> HardwareConfig {
    let d = match detector {
        DetectorArg::Snspd => DetectorKind::Snspd,
        DetectorArg::Spad => DetectorKind::Spad,
    };
    let l = match layout {
        LayoutArg::OnChip => Layout::OnChip,
        LayoutArg::FreeSpace => Layout::FreeSpace,
    };
    HardwareConfig::preset(d, l)
}

fn cmd_budget(cmd: BudgetCommand) -> Result<(), Error> {
    match cmd {
        BudgetCommand::ResponseTime { detector, layout } => {
            println!("{}", response_time_ps(&hardware(detector, layout)));
            Ok(())
        }
        BudgetCommand::Rates { model, rep_rate, s_target, detector, layout, format } => {
            let p = model.emitter(None)?;
            let response_ns = response_time_ps(&hardware(detector, layout)) * 1e-3;
            let rows = vec![vec![
                rate_projection(&p, &SchemeOp::Ash { response_ns }, rep_rate)?,
                rate_projection(&p, &SchemeOp::Timed, rep_rate)?,
                rate_projection(&p, &SchemeOp::Tgf { s_target }, rep_rate)?,
                rate_projection(&p, &SchemeOp::BsHerald, rep_rate)?,
            ]];
            let stdout = io::stdout();
            output::write_table(
                stdout.lock(),
                &["ash_hz", "timed_hz", "tgf_hz", "bs_herald_hz"],
                &rows,
                format,
            )
        }
        BudgetCommand::DifferenceMap { qy_steps, s_target, alpha, beta, format, output } => {
            if qy_steps < 1 {
                return Err(Error::Config("qy-steps must be >= 1".into()));
            }
            let axis: Vec<f64> =
                (1..=qy_steps).map(|i| i as f64 / qy_steps as f64).collect();
            let cells = scheme_difference_map(&axis, &axis, s_target, alpha, beta)?;
            let rows: Vec<Vec<f64>> = cells
                .iter()
                .map(|c| {
                    vec![
                        c.qy_x,
                        c.qy_bx,
                        c.eta_ash,
                        c.eta_tgf.unwrap_or(f64::NAN),
                        c.difference.unwrap_or(f64::NAN),
                    ]
                })
                .collect();
            with_sink(output.as_deref(), |w| {
                output::write_table(
                    w,
                    &["qy_x", "qy_bx", "eta_ash", "eta_tgf", "difference"],
                    &rows,
                    format,
                )
            })
        }
        BudgetCommand::RateCurve { model, tau_from, tau_to, steps, s_target, format, output } => {
            let template = model.emitter(None)?;
            let tau_grid = grid(tau_from, tau_to, steps.max(2));
            let configs = vec![
                ("snspd-on-chip".to_string(), hardware(DetectorArg::Snspd, LayoutArg::OnChip)),
                ("snspd-free-space".to_string(), hardware(DetectorArg::Snspd, LayoutArg::FreeSpace)),
                ("spad-on-chip".to_string(), hardware(DetectorArg::Spad, LayoutArg::OnChip)),
                ("spad-free-space".to_string(), hardware(DetectorArg::Spad, LayoutArg::FreeSpace)),
            ];
            let curves = rate_vs_lifetime_curve(&template, &tau_grid, &configs, s_target)?;
            for c in &curves.crossovers {
                eprintln!(
                    "crossover: ash({}) overtakes {} above tau_x = {:.3} ns",
                    c.config, c.other_scheme, c.tau_x_ns
                );
            }
            with_sink(output.as_deref(), |w| match format {
                Format::Csv => {
                    writeln!(w, "tau_x_ns,scheme,config,rate_hz")?;
                    for p in &curves.points {
                        writeln!(
                            w,
                            "{},{},{},{}",
                            p.tau_x_ns,
                            p.scheme,
                            p.config.as_deref().unwrap_or(""),
                            p.rate_hz
                        )?;
                    }
                    Ok(())
                }
                Format::Json => {
                    writeln!(
                        w,
                        "{}",
                        serde_json::to_string_pretty(&curves).expect("curves serialise")
                    )?;
                    Ok(())
                }
            })
        }
    }
}
