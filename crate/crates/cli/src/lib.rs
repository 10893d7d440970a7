//! `switchrate` command-line driver.
//!
//! Every command reads its inputs from files, writes its artifacts under
//! `--out` and maps failures onto stable exit codes (see [`ExitCode`]).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use switchrate::dynamics::{is_hurwitz, SwitchedSystem};
use switchrate::integrate::{simulate_switched, IntegratorConfig};
use switchrate::io;
use switchrate::lyapunov::{
    check_linearization_lyapunov, check_weak_lyapunov, check_weak_lyapunov_in_sublevel, DEFAULT_LINEARIZATION_TOLERANCE,
};
use switchrate::rates::{
    beta_curve, compute_m, compute_nonlinear_certificate, m_delta_curve, slow_convergence_demo,
    verify_homogeneous_bound, verify_nonlinear_bound, HomogeneousVerifyConfig, MSearch, NonlinearConfig,
    NonlinearVerifyConfig, RateFunction, SlowDemoConfig,
};
use switchrate::sampling::{SamplingConfig, DEFAULT_REFINE_ITERS};
use switchrate::signals::{generate_periodic, SwitchingSignal};
use switchrate::{catalog, Error};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Input = 2,
    Certification = 3,
    Numerical = 4,
    Violation = 5,
}

impl From<&Error> for ExitCode {
    fn from(e: &Error) -> Self {
        match e {
            Error::Input(_) | Error::Dimension { .. } | Error::Parse { .. } | Error::Io(_) => ExitCode::Input,
            Error::Certification { .. } => ExitCode::Certification,
            Error::Numerical(_) | Error::Integration(_) => ExitCode::Numerical,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "switchrate",
    version,
    about = "Certified convergence rates for switched systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report Hurwitz, positive-definiteness and weak-Lyapunov hypotheses.
    Check,
    /// Simulate a switched trajectory to CSV.
    Simulate,
    /// Compute M(δ) and the rate β for linear fields with quadratic V.
    CertifyHomogeneous,
    /// Compute the two-region certificate (m₁, r₁, r, m₂, α, γ).
    CertifyNonlinear,
    /// Tabulate M(δ) over a δ grid.
    MCurve,
    /// Tabulate β(1, t) for each δ of a grid.
    BetaCurve,
    /// Monte-Carlo check of the certified bound.
    Verify,
    /// Time to halve the state under constant-tail extensions of a signal.
    DemoSlow,
    /// Write the built-in two-mode example and run every stage on it.
    Example,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMethod {
    Exact,
    Sphere,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// System description (JSON).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    /// Switching signal (JSON, or CSV `t,i` with `--horizon`).
    #[arg(long, global = true)]
    pub signal: Option<PathBuf>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// `a:b:n` (linear) or `a:b:n,log`.
    #[arg(long = "delta-grid", global = true)]
    pub delta_grid: Option<String>,
    /// Sublevel `{V ≤ R}` for the nonlinear certificate.
    #[arg(long = "R", global = true)]
    pub big_r: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = SearchMethod::Exact)]
    pub method: SearchMethod,
    /// Initial state, comma separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Recording interval for trajectories.
    #[arg(long = "record-dt", global = true)]
    pub record_dt: Option<f64>,
    /// Tail starts for `demo-slow`, comma separated.
    #[arg(long = "tail-grid", global = true)]
    pub tail_grid: Option<String>,
}

/// Parses `a:b:n` or `a:b:n,log` into `n` points from `a` to `b`.
pub fn parse_grid(s: &str) -> switchrate::Result<Vec<f64>> {
    let bad = || Error::Input(format!("malformed grid `{s}` (expected a:b:n[,log])"));
    let (range, log) = match s.split_once(',') {
        Some((r, "log")) => (r, true),
        Some(_) => return Err(bad()),
        None => (s, false),
    };
    let parts: Vec<&str> = range.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(Error::Input("grid must have at least one point".into()));
    }
    if !(a > 0.0) || !(b >= a) || !b.is_finite() {
        return Err(Error::Input(format!("grid bounds must satisfy 0 < a ≤ b, got `{s}`")));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    let step = |k: usize| k as f64 / (n - 1) as f64;
    Ok(if log {
        let (la, lb) = (a.ln(), b.ln());
        (0..n).map(|k| (la + step(k) * (lb - la)).exp()).collect()
    } else {
        (0..n).map(|k| a + step(k) * (b - a)).collect()
    })
}

fn parse_list(s: &str, what: &str) -> switchrate::Result<Vec<f64>> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Input(format!("malformed {what} `{s}`"))),
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> switchrate::Result<T> {
    v.ok_or_else(|| Error::Input(format!("missing required flag --{flag}")))
}

fn load_system(opts: &Options) -> switchrate::Result<SwitchedSystem> {
    let path = opts
        .system
        .as_ref()
        .ok_or_else(|| Error::Input("missing required flag --system".into()))?;
    let text = fs::read_to_string(path)?;
    io::parse_system(&text)
}

fn load_signal(opts: &Options) -> switchrate::Result<Option<SwitchingSignal>> {
    let Some(path) = &opts.signal else {
        return Ok(None);
    };
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let horizon = need(opts.horizon, "horizon (required with a CSV signal)")?;
        Ok(Some(io::parse_signal_csv(fs::File::open(path)?, horizon)?))
    } else {
        Ok(Some(io::parse_signal_json(&fs::read_to_string(path)?)?))
    }
}

fn initial_state(opts: &Options, sys: &SwitchedSystem) -> switchrate::Result<DVector<f64>> {
    match &opts.x0 {
        Some(s) => {
            let v = parse_list(s, "--x0")?;
            if v.len() != sys.dimension() {
                return Err(Error::Dimension {
                    expected: sys.dimension(),
                    got: v.len(),
                });
            }
            Ok(DVector::from_vec(v))
        }
        None => {
            let mut x = DVector::zeros(sys.dimension());
            x[0] = 1.0;
            Ok(x)
        }
    }
}

fn search(opts: &Options) -> MSearch {
    match opts.method {
        SearchMethod::Exact => MSearch::ExactSvd,
        SearchMethod::Sphere => MSearch::SphereSearch {
            samples: opts.samples.unwrap_or(switchrate::sampling::DEFAULT_SAMPLES),
            refine_iters: DEFAULT_REFINE_ITERS,
            seed: opts.seed,
        },
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> switchrate::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir,
            written: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, contents: &str) -> switchrate::Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, contents)?;
        self.written.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, kind: &str, body: &T) -> switchrate::Result<()> {
        let s = io::to_report_json(kind, body)?;
        self.text(name, &s)
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> switchrate::Result<()>) -> switchrate::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let p = self.dir.join(name);
        fs::write(&p, buf)?;
        self.written.push(p);
        Ok(())
    }
}

#[derive(Serialize)]
struct SubsystemCheck {
    subsystem: usize,
    kind: switchrate::dynamics::SubsystemKind,
    hurwitz: bool,
    spectral_abscissa: f64,
    linearization_lyapunov: bool,
    linearization_max: f64,
    weak_lyapunov: bool,
    worst_lie_derivative: f64,
    worst_point: Vec<f64>,
}

#[derive(Serialize)]
struct CheckReport {
    dimension: usize,
    subsystems: Vec<SubsystemCheck>,
    lyapunov_positive_definite: bool,
    lyapunov_kind: &'static str,
    /// Sublevel `{V ≤ R}` (or shell radius for quadratic V) sampled.
    sampled_level: f64,
    samples: usize,
    seed: u64,
    all_hold: bool,
}

fn check_report(sys: &SwitchedSystem, opts: &Options) -> switchrate::Result<CheckReport> {
    let sampling = SamplingConfig::new(opts.samples.unwrap_or(1024), opts.seed).stage("check");
    let level = opts.big_r.unwrap_or(1.0);
    let weak = if sys.lyapunov().is_quadratic() {
        // homogeneous in x: one shell suffices
        check_weak_lyapunov(sys, &sampling, &[level], None)
    } else {
        check_weak_lyapunov_in_sublevel(sys, &sampling, level, 8)?
    };
    let lin = check_linearization_lyapunov(sys, DEFAULT_LINEARIZATION_TOLERANCE)?;
    let mut subsystems = Vec::new();
    for (i, f) in sys.subsystems().iter().enumerate() {
        let h = is_hurwitz(f.jacobian_at_origin(), 0.0)?;
        let w = weak
            .iter()
            .find(|r| r.subsystem == i + 1)
            .expect("one report per subsystem");
        subsystems.push(SubsystemCheck {
            subsystem: i + 1,
            kind: f.kind(),
            hurwitz: h.hurwitz,
            spectral_abscissa: h.spectral_abscissa,
            linearization_lyapunov: lin[i].holds,
            linearization_max: lin[i].max_value,
            weak_lyapunov: w.holds,
            worst_lie_derivative: w.worst_value,
            worst_point: w.worst_point.clone(),
        });
    }
    let all_hold = subsystems
        .iter()
        .all(|s| s.hurwitz && s.weak_lyapunov && s.linearization_lyapunov);
    Ok(CheckReport {
        dimension: sys.dimension(),
        subsystems,
        lyapunov_positive_definite: true,
        lyapunov_kind: if sys.lyapunov().is_quadratic() {
            "quadratic"
        } else {
            "polynomial"
        },
        sampled_level: level,
        samples: sampling.samples,
        seed: opts.seed,
        all_hold,
    })
}

fn cmd_check(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let report = check_report(&sys, opts)?;
    out.json("check.json", "check", &report)?;
    Ok(if report.all_hold {
        ExitCode::Success
    } else {
        ExitCode::Certification
    })
}

fn cmd_simulate(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let u = match load_signal(opts)? {
        Some(u) => u,
        None => SwitchingSignal::constant(1, need(opts.horizon, "horizon")?)?,
    };
    let horizon = opts.horizon.unwrap_or(u.horizon());
    let x0 = initial_state(opts, &sys)?;
    let dt = opts.record_dt.unwrap_or(horizon / 1000.0);
    let traj = simulate_switched(&sys, &u, &x0, horizon, &IntegratorConfig::default(), dt)?;
    out.csv("trajectory.csv", |w| io::write_trajectory_csv(w, &traj, sys.lyapunov()))?;
    Ok(ExitCode::Success)
}

fn cmd_certify_homogeneous(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let delta = need(opts.delta, "delta")?;
    let cert = compute_m(&sys, delta, &search(opts))?;
    let rate = RateFunction::from(&cert);
    out.json(
        "certificate_homogeneous.json",
        "homogeneous-certificate",
        &json!({
            "certificate": cert,
            "decay_rate": rate.decay_rate(),
            "seed": opts.seed,
        }),
    )?;
    Ok(ExitCode::Success)
}

fn nonlinear_config(opts: &Options) -> NonlinearConfig {
    let mut cfg = NonlinearConfig {
        seed: opts.seed,
        ..Default::default()
    };
    if let Some(s) = opts.samples {
        cfg.samples = s;
    }
    cfg
}

fn cmd_certify_nonlinear(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let delta = need(opts.delta, "delta")?;
    let big_r = need(opts.big_r, "R")?;
    let cfg = nonlinear_config(opts);
    let cert = compute_nonlinear_certificate(&sys, delta, big_r, &cfg)?;
    out.json(
        "certificate_nonlinear.json",
        "nonlinear-certificate",
        &json!({ "certificate": cert, "config": cfg }),
    )?;
    Ok(ExitCode::Success)
}

const DEFAULT_M_GRID: &str = "0.05:5:100";
const DEFAULT_BETA_DELTAS: [f64; 3] = [0.5, 1.0, 2.0];

fn cmd_m_curve(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let grid = parse_grid(opts.delta_grid.as_deref().unwrap_or(DEFAULT_M_GRID))?;
    let curve = m_delta_curve(&sys, &grid, &search(opts))?;
    out.csv("M_of_delta.csv", |w| io::write_m_curve_csv(w, &curve))?;
    Ok(ExitCode::Success)
}

fn t_grid(horizon: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| horizon * k as f64 / (points - 1) as f64).collect()
}

fn beta_outputs(
    sys: &SwitchedSystem,
    deltas: &[f64],
    horizon: f64,
    opts: &Options,
    out: &mut Outputs,
) -> switchrate::Result<()> {
    let rates = deltas
        .iter()
        .map(|&d| compute_m(sys, d, &search(opts)).map(|c| RateFunction::from(&c)))
        .collect::<switchrate::Result<Vec<_>>>()?;
    let ts = t_grid(horizon, 501);
    let cols = beta_curve(&rates, 1.0, &ts);
    out.csv("beta_of_t.csv", |w| io::write_beta_curve_csv(w, &ts, deltas, &cols))
}

fn cmd_beta_curve(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let deltas = match &opts.delta_grid {
        Some(g) => parse_grid(g)?,
        None => DEFAULT_BETA_DELTAS.to_vec(),
    };
    let horizon = opts.horizon.unwrap_or(20.0);
    if !(horizon > 0.0) {
        return Err(Error::Input("--horizon must be positive".into()));
    }
    beta_outputs(&sys, &deltas, horizon, opts, out)?;
    Ok(ExitCode::Success)
}

fn cmd_verify(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let delta = need(opts.delta, "delta")?;
    let homogeneous = sys.all_linear() && sys.lyapunov().is_quadratic() && opts.big_r.is_none();
    let passed = if homogeneous {
        let cert = compute_m(&sys, delta, &search(opts))?;
        let cfg = HomogeneousVerifyConfig {
            trials: opts.trials.unwrap_or(1000),
            seed: opts.seed,
            ..Default::default()
        };
        let report = verify_homogeneous_bound(&sys, &cert, &cfg)?;
        out.json(
            "verify.json",
            "homogeneous-verification",
            &json!({ "certificate": cert, "report": report }),
        )?;
        report.passed()
    } else {
        let big_r = need(opts.big_r, "R")?;
        let cert = compute_nonlinear_certificate(&sys, delta, big_r, &nonlinear_config(opts))?;
        let cfg = NonlinearVerifyConfig {
            trials: opts.trials.unwrap_or(500),
            seed: opts.seed,
            ..Default::default()
        };
        let report = verify_nonlinear_bound(&sys, &cert, &cfg)?;
        out.json(
            "verify.json",
            "nonlinear-verification",
            &json!({ "certificate": cert, "report": report }),
        )?;
        report.passed()
    };
    Ok(if passed { ExitCode::Success } else { ExitCode::Violation })
}

const DEFAULT_TAIL_GRID: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 20.0];

fn cmd_demo_slow(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = load_system(opts)?;
    let tails = match &opts.tail_grid {
        Some(s) => parse_list(s, "--tail-grid")?,
        None => DEFAULT_TAIL_GRID.to_vec(),
    };
    let u = match load_signal(opts)? {
        Some(u) => u,
        None => {
            let horizon = tails.iter().copied().fold(1.0, f64::max);
            generate_periodic(sys.len(), 0.01, horizon)?
        }
    };
    let x0 = initial_state(opts, &sys)?;
    let rows = slow_convergence_demo(&sys, &u, &x0, &tails, &SlowDemoConfig::default())?;
    out.csv("slow_convergence.csv", |w| io::write_slow_csv(w, &rows))?;
    Ok(ExitCode::Success)
}

fn cmd_example(opts: &Options, out: &mut Outputs) -> switchrate::Result<ExitCode> {
    let sys = catalog::example_system();
    out.text("system.json", &io::system_to_json(&sys))?;
    let opts = Options {
        system: Some(out.dir.join("system.json")),
        delta: Some(opts.delta.unwrap_or(1.0)),
        ..opts.clone()
    };
    let steps: [fn(&Options, &mut Outputs) -> switchrate::Result<ExitCode>; 6] = [
        cmd_check,
        cmd_certify_homogeneous,
        cmd_m_curve,
        cmd_beta_curve,
        cmd_verify,
        cmd_demo_slow,
    ];
    for step in steps {
        let code = step(&opts, out)?;
        if code != ExitCode::Success {
            return Ok(code);
        }
    }
    Ok(ExitCode::Success)
}

fn dispatch(cli: &Cli) -> switchrate::Result<(ExitCode, Vec<PathBuf>)> {
    let mut out = Outputs::new(&cli.opts.out)?;
    let opts = &cli.opts;
    let code = match cli.command {
        Command::Check => cmd_check(opts, &mut out)?,
        Command::Simulate => cmd_simulate(opts, &mut out)?,
        Command::CertifyHomogeneous => cmd_certify_homogeneous(opts, &mut out)?,
        Command::CertifyNonlinear => cmd_certify_nonlinear(opts, &mut out)?,
        Command::MCurve => cmd_m_curve(opts, &mut out)?,
        Command::BetaCurve => cmd_beta_curve(opts, &mut out)?,
        Command::Verify => cmd_verify(opts, &mut out)?,
        Command::DemoSlow => cmd_demo_slow(opts, &mut out)?,
        Command::Example => cmd_example(opts, &mut out)?,
    };
    Ok((code, out.written))
}

/// Runs one command, honouring `SWITCHRATE_THREADS`, and returns the exit code.
pub fn run(cli: &Cli) -> ExitCode {
    let threads = std::env::var("SWITCHRATE_THREADS").ok();
    let threads = match threads.as_deref().map(str::parse::<usize>) {
        None => None,
        Some(Ok(n)) if n > 0 => Some(n),
        Some(_) => {
            eprintln!("error: SWITCHRATE_THREADS must be a positive integer");
            return ExitCode::Input;
        }
    };
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Error::Numerical(format!("thread pool: {e}"))),
        },
        None => dispatch(cli),
    };
    match result {
        Ok((code, written)) => {
            for p in written {
                println!("{}", p.display());
            }
            if code == ExitCode::Violation {
                eprintln!("error: certified bound violated in simulation");
            } else if code == ExitCode::Certification {
                eprintln!("error: hypotheses do not hold");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1:3:3").unwrap(), vec![1.0, 2.0, 3.0]);
        let g = parse_grid("0.1:10:3,log").unwrap();
        assert!((g[1] - 1.0).abs() < 1e-12);
        assert_eq!(parse_grid("2:2:1").unwrap(), vec![2.0]);
        for bad in ["", "1:2", "1:2:0", "0:1:3", "2:1:3", "1:2:3,lin", "a:b:c"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(ExitCode::from(&Error::Input("x".into())), ExitCode::Input);
        assert_eq!(
            ExitCode::from(&Error::Parse {
                line: 1,
                column: 1,
                message: String::new()
            }),
            ExitCode::Input
        );
        assert_eq!(ExitCode::from(&Error::Numerical("x".into())), ExitCode::Numerical);
        assert_eq!(ExitCode::Violation as i32, 5);
    }
}
