//! Subcommands. Exit codes: 0 success, 1 configuration or input error,
//! 2 a completed run whose outcome check failed (artifacts still written).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmsol_core::analysis::{
    self, decay_envelope, decay_fit, run_suite, self_consistency_constants, tail_alpha, CaseRecord,
    DecayFit, Suite, SuiteConfig, VerificationReport, DEFAULT_FLOOR,
};
use dmsol_core::dynamics::{
    compare_averaging, evolve_averaged, evolve_full, ClosenessReport, CompareConfig,
    EvolutionConfig, Trajectory,
};
use dmsol_core::solver::maximize;
use dmsol_core::{
    Complex64, DiffractionProfile, Error as CoreError, Functional, GridFunction, Method,
    PropagatorEngine, QuadratureRule, Shape, SolitonResult, SolverConfig, SolverMethod,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::io::{
    self, read_initial, read_profile, read_soliton, write_json, write_soliton, write_text,
};
use crate::json::Meta;
use crate::svg::{self, Series};

/// Conservation thresholds for trajectories.
pub const NORM_DRIFT_TOL: f64 = 1e-9;
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(
    name = "dmsol",
    version,
    about = "Diffraction-managed discrete solitons: solve, verify, analyse and evolve"
)]
pub struct Cli {
    /// Output directory; defaults to $DMSOL_OUT_DIR, then ./dmsol-out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Maximize the averaged functional on the sphere of given mass.
    Solve(SolveArgs),
    /// Run numerical inequality suites and write one report per suite.
    Verify(VerifyArgs),
    /// Tail distribution, decay fit and self-consistency constants of a field.
    Decay(DecayArgs),
    /// Integrate the full or averaged equation from stored initial data.
    Evolve(EvolveArgs),
    /// Measure the distance between full and averaged flows.
    Compare(CompareArgs),
    /// Solve and compare over a grid of (profile, lambda, eps) in parallel.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 64)]
    pub radius: usize,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// gradient_ascent | fixed_point
    #[arg(long, default_value = "gradient_ascent")]
    pub method: SolverMethod,
    /// bessel | taylor | spectral
    #[arg(long, default_value = "bessel")]
    pub propagator: Method,
    #[arg(long, default_value_t = dmsol_core::quadrature::DEFAULT_ORDER)]
    pub quad_order: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// norms | kernel | bilinear | multilinear | selfconsistency | F | all
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random cases per hard check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub t_grid: usize,
    /// Defaults to the two-segment profile (½, +1), (½, −1).
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DecayArgs {
    /// A soliton.json written by `solve`.
    #[arg(long, conflicts_with = "field", required_unless_present = "field")]
    pub soliton: Option<PathBuf>,
    /// A bare field CSV.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Profile amplitude τ; overrides the profile and the soliton record.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    /// Exponent in the factorial comparison term `(n+1)^{−δ(n+1)}`.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Averaged,
    Compare,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvolveArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// soliton.json or field CSV.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub d_av: f64,
    /// Final fast time; defaults to ⌊1/ε⌋ (1 when ε = 0).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Step; defaults to 1/64 (full) or 1/8 (averaged).
    #[arg(long)]
    pub h: Option<f64>,
    /// Record every this many steps; defaults to once per unit time.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, default_value_t = dmsol_core::quadrature::DEFAULT_ORDER)]
    pub quad_order: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[arg(long)]
    pub profile: PathBuf,
    /// soliton.json or field CSV.
    #[arg(long)]
    pub init: PathBuf,
    /// Horizon `C` in `t ≤ C/ε`.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub d_av: f64,
    #[arg(long, default_value_t = 1.0 / 2048.0)]
    pub h_full: f64,
    #[arg(long, default_value_t = 0.125)]
    pub h_averaged: f64,
    /// Largest accepted `max‖u − v‖₂ / ε`.
    #[arg(long, default_value_t = 10.0)]
    pub max_ratio: f64,
    #[arg(long, default_value_t = dmsol_core::quadrature::DEFAULT_ORDER)]
    pub quad_order: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub profile: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub lambda: Vec<f64>,
    /// Averaging experiments per solved soliton; none when omitted.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    pub radius: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1.0 / 2048.0)]
    pub h_full: f64,
    #[arg(long, default_value_t = 0.125)]
    pub h_averaged: f64,
    /// Worker threads; defaults to the rayon global pool.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let out = io::resolve_out_dir(cli.out.as_deref());
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, &out),
        Command::Verify(a) => cmd_verify(a, &out),
        Command::Decay(a) => cmd_decay(a, &out),
        Command::Evolve(a) => cmd_evolve(a, &out),
        Command::Compare(a) => cmd_compare(a, &out),
        Command::Sweep(a) => cmd_sweep(a, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn config_meta<T: Serialize>(
    command: &str,
    args: &T,
    profile: &DiffractionProfile,
    seed: Option<u64>,
) -> Meta {
    let config = json!({ "command": command, "args": args, "segments": profile.segments() });
    Meta::new(&config, profile.tau(), seed)
}

pub fn build_functional(
    shape: Shape,
    profile: &DiffractionProfile,
    method: Method,
    order: usize,
) -> Result<Functional> {
    let engine = PropagatorEngine::new(shape, method, profile.tau().max(1.0))?;
    let rule = QuadratureRule::new(profile, order)?;
    Ok(Functional::new(engine, rule)?)
}

/// Runs the maximizer, treating non-convergence as a result rather than an error.
fn solve_soliton(cfg: &SolverConfig, func: &Functional) -> Result<SolitonResult> {
    match maximize(cfg, func) {
        Ok(res) => Ok(res),
        Err(CoreError::NotConverged(res)) => Ok(*res),
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_solve(a: &SolveArgs, out: &Path) -> Result<i32> {
    let profile = read_profile(&a.profile)?;
    let shape = Shape::new(a.dim, a.radius)?;
    let func = build_functional(shape, &profile, a.propagator, a.quad_order)?;
    let cfg = SolverConfig {
        lambda: a.lambda,
        method: a.method,
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let res = solve_soliton(&cfg, &func)?;
    write_soliton(out, config_meta("solve", a, &profile, None), &res)?;
    println!(
        "{} after {} iterations: p_lambda={:.16e} omega={:.16e} residual={:.3e} -> {}",
        if res.converged {
            "converged"
        } else {
            "NOT converged"
        },
        res.iterations,
        res.p_lambda,
        res.omega,
        res.residual,
        out.join("soliton.json").display()
    );
    Ok(if res.converged { 0 } else { 2 })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    meta: Meta,
    suite: &'a str,
    verdict: &'static str,
    violations: usize,
    /// Index into `cases` of the largest hard ratio.
    worst_case_index: Option<usize>,
    worst_case: Option<&'a CaseRecord>,
    constants: &'a BTreeMap<String, f64>,
    notes: &'a [String],
    cases: &'a [CaseRecord],
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

pub fn parse_suites(name: &str) -> Result<Vec<Suite>> {
    if name == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    match name.parse::<Suite>() {
        Ok(s) => Ok(vec![s]),
        Err(_) => bail!(
            "unknown suite {name:?}; expected one of norms, kernel, bilinear, multilinear, selfconsistency, F, all"
        ),
    }
}

/// Writes `<out>/<suite>/report.json` per suite and `<out>/verify.json`.
pub fn cmd_verify(a: &VerifyArgs, out: &Path) -> Result<i32> {
    let suites = parse_suites(&a.suite)?;
    let profile = match &a.profile {
        Some(p) => read_profile(p)?,
        None => DiffractionProfile::two_step(1.0),
    };
    let cfg = SuiteConfig {
        seed: a.seed,
        dims: a.dims.clone(),
        profile: profile.clone(),
        samples: a.samples,
        t_grid: a.t_grid,
        ..SuiteConfig::default()
    };
    println!("verify: seed {}", a.seed);
    let reports: Vec<VerificationReport> = suites
        .par_iter()
        .map(|&s| run_suite(s, &cfg))
        .collect::<Result<_, _>>()?;
    let meta = config_meta("verify", a, &profile, Some(a.seed));
    let mut summary = BTreeMap::new();
    for r in &reports {
        let dir = out.join(&r.suite);
        io::ensure_dir(&dir)?;
        let worst = r.worst_case();
        let file = ReportFile {
            meta: meta.clone(),
            suite: &r.suite,
            verdict: verdict(r.passed()),
            violations: r.violations(),
            worst_case_index: worst,
            worst_case: worst.map(|i| &r.cases[i]),
            constants: &r.constants,
            notes: &r.notes,
            cases: &r.cases,
        };
        write_json(&dir.join("report.json"), &file)?;
        println!(
            "{:<16} {} ({} cases, {} violations)",
            r.suite,
            verdict(r.passed()).to_uppercase(),
            r.cases.len(),
            r.violations()
        );
        summary.insert(r.suite.clone(), verdict(r.passed()));
    }
    let pass = reports.iter().all(VerificationReport::passed);
    write_json(
        &out.join("verify.json"),
        &json!({ "meta": meta, "suites": summary, "verdict": verdict(pass) }),
    )?;
    Ok(if pass { 0 } else { 1 })
}

#[derive(Serialize)]
struct SelfConsistencyRecord {
    delta: f64,
    c: f64,
    c1: Option<f64>,
    c1_at: Option<usize>,
    c2: Option<f64>,
    c2_at: Option<usize>,
    admissible: usize,
}

#[derive(Serialize)]
struct FitFile<'a> {
    #[serde(flatten)]
    meta: Meta,
    source: String,
    status: &'a str,
    compact_support: bool,
    entries_above_floor: usize,
    fit: Option<DecayFit>,
    self_consistency: SelfConsistencyRecord,
}

pub fn cmd_decay(a: &DecayArgs, out: &Path) -> Result<i32> {
    let (field, source, stored_tau) = match (&a.soliton, &a.field) {
        (Some(p), _) => {
            let (file, f) = read_soliton(p)?;
            (f, p.display().to_string(), Some(file.meta.tau))
        }
        (None, Some(p)) => (io::read_field(p)?, p.display().to_string(), None),
        (None, None) => bail!("one of --soliton or --field is required"),
    };
    let tau = match (a.tau, &a.profile) {
        (Some(t), _) => t,
        (None, Some(p)) => read_profile(p)?.tau(),
        (None, None) => stored_tau.context("--tau or --profile is required for a bare field")?,
    };
    if tau.is_nan() || tau <= 0.0 {
        bail!("tau must be positive, got {tau}");
    }
    let alpha = tail_alpha(&field).context("tail distribution needs a one-dimensional field")?;
    let c = analysis::decay_constant(tau);
    io::ensure_dir(out)?;
    write_text(
        &out.join("decay.csv"),
        &io::table_csv(
            &["n", "alpha", "envelope"],
            alpha
                .values()
                .iter()
                .enumerate()
                .map(|(n, &v)| vec![n as f64, v, decay_envelope(n, c)]),
        ),
    )?;

    let compact = alpha.has_compact_support();
    let entries = alpha.entries_above(a.floor);
    let (fit, status, code) = if compact {
        (None, "compact support", 0)
    } else {
        match decay_fit(&alpha, tau, a.floor) {
            Ok(fit) if fit.super_exponential => (Some(fit), "super-exponential", 0),
            Ok(fit) => (Some(fit), "not super-exponential", 2),
            Err(CoreError::InsufficientRange { .. }) => (None, "insufficient decaying range", 2),
            Err(e) => return Err(e.into()),
        }
    };
    let sc = self_consistency_constants(&alpha, a.delta, c, a.floor);

    let scale = fit.as_ref().map_or(1.0, |f| f.min_c);
    let series = [
        Series {
            label: "alpha(n)",
            points: alpha
                .values()
                .iter()
                .enumerate()
                .map(|(n, &v)| (n as f64, v))
                .collect(),
            dashed: false,
        },
        Series {
            label: "C * envelope",
            points: (0..alpha.len())
                .map(|n| (n as f64, scale * decay_envelope(n, c)))
                .collect(),
            dashed: true,
        },
    ];
    write_text(
        &out.join("decay.svg"),
        &svg::log_plot("Tail distribution", "n", "alpha(n)", &series),
    )?;

    let args = json!({ "args": a, "tau": tau });
    let meta = Meta::new(&json!({ "command": "decay", "config": args }), tau, None);
    let file = FitFile {
        meta,
        source,
        status,
        compact_support: compact,
        entries_above_floor: entries,
        fit: fit.clone(),
        self_consistency: SelfConsistencyRecord {
            delta: a.delta,
            c,
            c1: sc.c1,
            c1_at: sc.c1_at,
            c2: sc.c2,
            c2_at: sc.c2_at,
            admissible: sc.admissible,
        },
    };
    write_json(&out.join("fit.json"), &file)?;
    match &fit {
        Some(f) => println!(
            "{status}: mu_fit={:.6} mu_joint={:.6} share={:.3} min_C={:.6e} over {} entries",
            f.mu_fit, f.mu_joint, f.super_exp_share, f.min_c, f.entries
        ),
        None => println!("{status}: {entries} entries above {:e}", a.floor),
    }
    if code != 0 {
        eprintln!("decay: {status}");
    }
    Ok(code)
}

fn trajectory_csv(
    traj: &Trajectory,
    func: &Functional,
    d_av: f64,
    eps: f64,
    u0: &GridFunction,
    omega: Option<f64>,
) -> Result<(String, f64)> {
    let mut rows = Vec::with_capacity(traj.times.len());
    let mut last_dev = 0.0;
    for (i, (&t, u)) in traj.times.iter().zip(&traj.fields).enumerate() {
        let h = match &traj.hamiltonian {
            Some(hs) => hs[i],
            None => func.hamiltonian(u, d_av, eps)?,
        };
        let reference = match omega {
            Some(w) => u0.scale(Complex64::new(0.0, eps * w * t).exp()),
            None => u0.clone(),
        };
        last_dev = u.distance(&reference)?;
        rows.push(vec![t, traj.norms[i], h, last_dev]);
    }
    Ok((
        io::table_csv(&["t", "norm", "H", "deviation"], rows),
        last_dev,
    ))
}

pub fn cmd_evolve(a: &EvolveArgs, out: &Path) -> Result<i32> {
    if a.mode == Mode::Compare {
        let cmp = CompareArgs {
            eps: vec![a.eps],
            profile: a.profile.clone(),
            init: a.init.clone(),
            horizon: a.t_end.map_or(1.0, |t| t * a.eps),
            d_av: a.d_av,
            h_full: a.h.unwrap_or(1.0 / 2048.0),
            h_averaged: 0.125,
            max_ratio: 10.0,
            quad_order: a.quad_order,
        };
        return cmd_compare(&cmp, out);
    }
    let profile = read_profile(&a.profile)?;
    let (u0, omega) = read_initial(&a.init)?;
    let func = build_functional(u0.shape(), &profile, Method::Bessel, a.quad_order)?;
    let h = a.h.unwrap_or(if a.mode == Mode::Full {
        1.0 / 64.0
    } else {
        0.125
    });
    let t_end = a.t_end.unwrap_or(if a.eps > 0.0 {
        (1.0 / a.eps).floor().max(1.0)
    } else {
        1.0
    });
    let cfg = EvolutionConfig {
        eps: a.eps,
        d_av: a.d_av,
        t_end,
        h,
        record_stride: a.stride.unwrap_or(((1.0 / h).round() as usize).max(1)),
        ..EvolutionConfig::default()
    };
    cfg.validate()?;
    let traj = match a.mode {
        Mode::Full => evolve_full(&u0, &cfg, &profile, func.engine())?,
        _ => evolve_averaged(&u0, &cfg, &func)?,
    };
    let name = if a.mode == Mode::Full {
        "full"
    } else {
        "averaged"
    };
    let (csv, final_dev) = trajectory_csv(&traj, &func, a.d_av, a.eps, &u0, omega)?;
    io::ensure_dir(out)?;
    write_text(&out.join(format!("trajectory-{name}.csv")), &csv)?;
    let norm_drift = traj.norm_drift();
    let h_drift = traj.hamiltonian_drift();
    let pass = norm_drift <= NORM_DRIFT_TOL && h_drift.is_none_or(|d| d <= ENERGY_DRIFT_TOL);
    write_json(
        &out.join(format!("evolve-{name}.json")),
        &json!({
            "meta": config_meta("evolve", a, &profile, None),
            "mode": name,
            "eps": a.eps,
            "t_end": t_end,
            "h": h,
            "samples": traj.times.len(),
            "norm_drift": norm_drift,
            "hamiltonian_drift": h_drift,
            "final_deviation": final_dev,
            "verdict": verdict(pass),
        }),
    )?;
    println!(
        "{name}: t_end={t_end} norm_drift={norm_drift:.3e} hamiltonian_drift={} final_deviation={final_dev:.3e} {}",
        h_drift.map_or("n/a".to_string(), |d| format!("{d:.3e}")),
        verdict(pass).to_uppercase()
    );
    Ok(if pass { 0 } else { 2 })
}

/// Checks applied to one averaging run.
pub fn closeness_ok(r: &ClosenessReport, max_ratio: f64) -> bool {
    r.ratio <= max_ratio
        && r.full_norm_drift <= NORM_DRIFT_TOL
        && r.averaged_hamiltonian_drift <= ENERGY_DRIFT_TOL
}

/// Whether `ratio` is non-increasing as `eps` decreases.
pub fn ratios_non_increasing(runs: &[ClosenessReport]) -> bool {
    let mut sorted: Vec<&ClosenessReport> = runs.iter().collect();
    sorted.sort_by(|x, y| y.eps.total_cmp(&x.eps));
    sorted.windows(2).all(|w| w[1].ratio <= w[0].ratio)
}

pub fn run_comparisons(
    u0: &GridFunction,
    omega: Option<f64>,
    eps: &[f64],
    base: &CompareConfig,
    profile: &DiffractionProfile,
    func: &Functional,
) -> Result<Vec<ClosenessReport>> {
    let runs = eps
        .par_iter()
        .map(|&e| {
            compare_averaging(
                u0,
                omega,
                &CompareConfig {
                    eps: e,
                    ..base.clone()
                },
                profile,
                func,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(runs)
}

pub fn cmd_compare(a: &CompareArgs, out: &Path) -> Result<i32> {
    if a.eps.iter().any(|e| e.is_nan() || *e <= 0.0) {
        bail!("every eps must be positive");
    }
    let profile = read_profile(&a.profile)?;
    let (u0, omega) = read_initial(&a.init)?;
    let func = build_functional(u0.shape(), &profile, Method::Bessel, a.quad_order)?;
    let base = CompareConfig {
        eps: 0.0,
        horizon: a.horizon,
        d_av: a.d_av,
        h_full: a.h_full,
        h_averaged: a.h_averaged,
    };
    let runs = run_comparisons(&u0, omega, &a.eps, &base, &profile, &func)?;
    io::ensure_dir(out)?;
    for r in &runs {
        write_text(
            &out.join(format!("deviation-eps{}.csv", r.eps)),
            &io::table_csv(
                &["t", "deviation"],
                r.deviations.iter().map(|&(t, d)| vec![t, d]),
            ),
        )?;
        println!(
            "eps={}: max_dev={:.6e} ratio={:.6e} breather_dev={} {}",
            r.eps,
            r.max_deviation,
            r.ratio,
            r.breather_deviation
                .map_or("n/a".to_string(), |d| format!("{d:.3e}")),
            verdict(closeness_ok(r, a.max_ratio)).to_uppercase()
        );
    }
    let monotone = ratios_non_increasing(&runs);
    let pass = monotone && runs.iter().all(|r| closeness_ok(r, a.max_ratio));
    write_json(
        &out.join("closeness.json"),
        &json!({
            "meta": config_meta("compare", a, &profile, None),
            "omega": omega,
            "runs": runs,
            "ratio_non_increasing": monotone,
            "verdict": verdict(pass),
        }),
    )?;
    if runs.len() > 1 {
        println!("ratio non-increasing as eps decreases: {monotone}");
    }
    Ok(if pass { 0 } else { 2 })
}

#[derive(Clone, Debug, Serialize)]
struct SweepRun {
    dir: String,
    profile: String,
    lambda: f64,
    eps: Option<f64>,
    converged: bool,
    p_lambda: f64,
    omega: f64,
    ratio: Option<f64>,
    pass: bool,
}

pub fn cmd_sweep(a: &SweepArgs, out: &Path) -> Result<i32> {
    let profiles: Vec<(String, DiffractionProfile)> = a
        .profile
        .iter()
        .map(|p| Ok((p.display().to_string(), read_profile(p)?)))
        .collect::<Result<_>>()?;
    let eps: Vec<Option<f64>> = if a.eps.is_empty() {
        vec![None]
    } else {
        a.eps.iter().copied().map(Some).collect()
    };
    let mut tasks = Vec::new();
    for (pi, _) in profiles.iter().enumerate() {
        for &lambda in &a.lambda {
            for &e in &eps {
                tasks.push((pi, lambda, e));
            }
        }
    }
    io::ensure_dir(out)?;
    let work = || -> Vec<Result<SweepRun>> {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, &(pi, lambda, e))| {
                let (name, profile) = &profiles[pi];
                let dir = out.join(format!("run-{i:03}"));
                sweep_one(a, &dir, name, profile, lambda, e)
            })
            .collect()
    };
    let results = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(work),
        None => work(),
    };
    let runs: Vec<SweepRun> = results.into_iter().collect::<Result<_>>()?;
    let pass = runs.iter().all(|r| r.pass);
    write_json(
        &out.join("sweep.json"),
        &json!({
            "meta": Meta::new(&json!({ "command": "sweep", "args": a }), profiles.iter().map(|p| p.1.tau()).fold(0.0, f64::max), None),
            "runs": runs,
            "verdict": verdict(pass),
        }),
    )?;
    for r in &runs {
        println!(
            "{} profile={} lambda={} eps={} p_lambda={:.10e} {}",
            r.dir,
            r.profile,
            r.lambda,
            r.eps.map_or("-".to_string(), |e| e.to_string()),
            r.p_lambda,
            verdict(r.pass).to_uppercase()
        );
    }
    Ok(if pass { 0 } else { 2 })
}

fn sweep_one(
    a: &SweepArgs,
    dir: &Path,
    name: &str,
    profile: &DiffractionProfile,
    lambda: f64,
    eps: Option<f64>,
) -> Result<SweepRun> {
    let func = build_functional(
        Shape::new(1, a.radius)?,
        profile,
        Method::Bessel,
        dmsol_core::quadrature::DEFAULT_ORDER,
    )?;
    let cfg = SolverConfig {
        lambda,
        tol: a.tol,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let res = solve_soliton(&cfg, &func)?;
    let run_cfg = json!({ "command": "sweep-run", "profile": profile.segments(), "lambda": lambda, "eps": eps, "radius": a.radius, "tol": a.tol });
    write_soliton(dir, Meta::new(&run_cfg, profile.tau(), None), &res)?;
    let mut ratio = None;
    let mut pass = res.converged;
    if let Some(e) = eps {
        let cc = CompareConfig {
            eps: e,
            horizon: a.horizon,
            d_av: 0.0,
            h_full: a.h_full,
            h_averaged: a.h_averaged,
        };
        let report = compare_averaging(&res.f, Some(res.omega), &cc, profile, &func)?;
        pass &= closeness_ok(&report, 10.0);
        ratio = Some(report.ratio);
        write_json(
            &dir.join("closeness.json"),
            &json!({ "meta": Meta::new(&run_cfg, profile.tau(), None), "runs": [report] }),
        )?;
    }
    Ok(SweepRun {
        dir: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        profile: name.to_string(),
        lambda,
        eps,
        converged: res.converged,
        p_lambda: res.p_lambda,
        omega: res.omega,
        ratio,
        pass,
    })
}
