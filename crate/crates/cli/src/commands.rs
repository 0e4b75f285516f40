//! Command implementations and the exit-code contract.
//!
//! Exit codes: `0` success (a flagged divergence is a reported outcome, not
//! an error), `2` invalid input (schema, validation, or flag conflicts,
//! diagnostics on standard error), `3` analysis finished but a verdict is
//! undecided (the report is still written), `4` solver failure, `1` anything
//! else (I/O and similar).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use dualrail_core::analysis::{equilibrium_full, stability_report, StabilityReport};
use dualrail_core::crn::structure::extract_structure;
use dualrail_core::crn::{
    apply_perturbation, compile_dual_rail, export_reactions, is_cascaded, mass_action_field, Crn,
};
use dualrail_core::dsd::{export_program, fidelity_check, simulate_dsd, translate, FidelityScenario};
use dualrail_core::frontend::{
    pi_feedback_loop, two_state_loop, BlockDiagram, RatePair, RateTable,
};
use dualrail_core::sim::{
    integrate_decoupled, integrate_named, Method, ProfileStep, ReferenceProfile, SimError,
    SimOptions, Trajectory,
};

use crate::formats::{self, ArtifactEntry, RunManifest, RunMeta};
use crate::schema;

pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNDECIDED: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Relative band used for the settled-tail diagnostic in run sidecars.
pub const SETTLING_RTOL: f64 = 0.01;
/// Relative bump applied to the plus rails by `--perturb default`.
pub const DEFAULT_PERTURBATION: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    /// Bad input: schema, validation, or flag semantics. Exit 2.
    #[error("{0}")]
    Invalid(String),
    /// The integrator failed. Exit 4.
    #[error("solver failure: {0}")]
    Solver(SimError),
    /// I/O and other hard errors. Exit 1.
    #[error(transparent)]
    Hard(#[from] anyhow::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Invalid(_) => EXIT_INVALID,
            CmdError::Solver(_) => EXIT_SOLVER,
            CmdError::Hard(_) => 1,
        }
    }
}

fn solver_error(e: SimError) -> CmdError {
    match e {
        // A bad initial state is an input problem, not an integrator one.
        SimError::BadInitialState { expected } => {
            CmdError::Invalid(format!("initial state must be nonnegative with {expected} entries"))
        }
        other => CmdError::Solver(other),
    }
}

pub type CmdResult = Result<i32, CmdError>;

// ---------------------------------------------------------------------------
// Shared flag groups
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone)]
pub struct DesignOpts {
    /// Design document (JSON).
    pub design: PathBuf,
    /// Drop the wires into subtraction minus ports (open-loop variant).
    #[arg(long)]
    pub no_feedback: bool,
    /// Scale a named rate: `SYMBOL=FACTOR` or `SYMBOL=PLUS,MINUS`. Repeatable.
    #[arg(long = "scale", value_name = "SYM=F[,F]")]
    pub scales: Vec<String>,
    /// Scale the annihilation rate by this factor.
    #[arg(long, value_name = "FACTOR")]
    pub eta_scale: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutOpts {
    /// Output directory (default: $DUALRAIL_OUT, else the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifact file stem (default: the design's name).
    #[arg(long)]
    pub tag: Option<String>,
}

impl OutOpts {
    pub fn dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("DUALRAIL_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

/// `V` → the same value on both slots (symmetric factor), `V,V` → explicit.
fn parse_pair(text: &str, what: &str) -> Result<(f64, f64), CmdError> {
    let parts: Vec<&str> = text.split(',').collect();
    let bad = || CmdError::Invalid(format!("{what}: expected `V` or `V,V`, got `{text}`"));
    match parts.as_slice() {
        [v] => {
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            Ok((v, v))
        }
        [p, m] => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let m: f64 = m.trim().parse().map_err(|_| bad())?;
            Ok((p, m))
        }
        _ => Err(bad()),
    }
}

/// Reference flags: a single signed scalar maps to the rail encoding (the
/// positive part drives the plus rail, the negative part the minus rail);
/// `RP,RM` gives the rails explicitly.
fn parse_reference(text: &str, what: &str) -> Result<(f64, f64), CmdError> {
    if text.contains(',') {
        parse_pair(text, what)
    } else {
        let bad = || CmdError::Invalid(format!("{what}: expected `R` or `RP,RM`, got `{text}`"));
        let v: f64 = text.trim().parse().map_err(|_| bad())?;
        Ok((v.max(0.0), (-v).max(0.0)))
    }
}

fn parse_scales(flags: &[String]) -> Result<Vec<(String, RatePair)>, CmdError> {
    flags
        .iter()
        .map(|flag| {
            let (sym, factors) = flag.split_once('=').ok_or_else(|| {
                CmdError::Invalid(format!("--scale: expected `SYMBOL=F[,F]`, got `{flag}`"))
            })?;
            let (p, m) = parse_pair(factors, "--scale")?;
            Ok((sym.trim().to_string(), RatePair::split(p, m)))
        })
        .collect()
}

/// A design loaded from disk with every override applied.
pub struct Loaded {
    pub diagram: BlockDiagram,
    pub crn: Crn,
    pub scales: Vec<(String, RatePair)>,
    pub design_label: String,
    pub no_feedback: bool,
}

pub fn load_design(opts: &DesignOpts) -> Result<Loaded, CmdError> {
    let text = fs::read_to_string(&opts.design)
        .map_err(|e| CmdError::Invalid(format!("reading {}: {e}", opts.design.display())))?;
    let diagram = schema::parse_document(&text)
        .map_err(|e| CmdError::Invalid(format!("{}: {e}", opts.design.display())))?;
    let diagram = if opts.no_feedback { diagram.without_feedback() } else { diagram };
    diagram
        .validate()
        .map_err(|e| CmdError::Invalid(format!("{}: {e}", opts.design.display())))?;
    let crn = compile_dual_rail(&diagram)
        .map_err(|e| CmdError::Invalid(format!("{}: {e}", opts.design.display())))?;

    let mut scales = parse_scales(&opts.scales)?;
    if let Some(f) = opts.eta_scale {
        scales.push(("eta".to_string(), RatePair::symmetric(f)));
    }
    let crn = if scales.is_empty() {
        crn
    } else {
        let factors = scales.iter().cloned().collect();
        apply_perturbation(&crn, &factors)
            .map_err(|e| CmdError::Invalid(format!("rate override: {e}")))?
    };

    Ok(Loaded {
        diagram,
        crn,
        scales,
        design_label: opts.design.display().to_string(),
        no_feedback: opts.no_feedback,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CmdError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CmdError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialize");
    text.push('\n');
    write_text(path, &text)
}

// ---------------------------------------------------------------------------
// compile
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[command(flatten)]
    pub design: DesignOpts,
    #[command(flatten)]
    pub out: OutOpts,
}

pub fn cmd_compile(args: &CompileArgs) -> CmdResult {
    let loaded = load_design(&args.design)?;
    let structure = extract_structure(&loaded.crn);
    let cascaded = is_cascaded(&loaded.crn);

    let dir = args.out.dir();
    let stem = args.out.tag.clone().unwrap_or_else(|| loaded.crn.name.clone());
    let reactions_path = dir.join(format!("{stem}.reactions.txt"));
    let structure_path = dir.join(format!("{stem}.structure.json"));
    write_text(&reactions_path, &export_reactions(&loaded.crn))?;
    write_json(&structure_path, &formats::structure_json(&loaded.crn, &structure, cascaded))?;

    println!(
        "compiled {name}: {n} base species ({dim} states), {reactions} reactions, \
         {sym}, {casc}",
        name = loaded.crn.name,
        n = structure.n,
        dim = 2 * structure.n,
        reactions = loaded.crn.reactions.len(),
        sym = if structure.symmetric { "rail-symmetric" } else { "rail-asymmetric" },
        casc = if cascaded { "pure cascade" } else { "feedback interconnection" },
    );
    println!("wrote {}", reactions_path.display());
    println!("wrote {}", structure_path.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub design: DesignOpts,
    /// Constant reference the equilibrium is solved under: a signed scalar
    /// `R` (sign picks the rail) or explicit rails `RP,RM` (nM).
    #[arg(long, value_name = "RP[,RM]", default_value = "0")]
    pub reference: String,
    #[command(flatten)]
    pub out: OutOpts,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CmdResult {
    let loaded = load_design(&args.design)?;
    let (rp, rm) = parse_reference(&args.reference, "--reference")?;
    let report = stability_report(&loaded.crn, [rp, rm]);

    let dir = args.out.dir();
    let stem = args.out.tag.clone().unwrap_or_else(|| loaded.crn.name.clone());
    let path = dir.join(format!("{stem}.stability.json"));
    write_json(&path, &formats::stability_json(&report))?;

    print!("{}", formats::stability_table(&report));
    println!("wrote {}", path.display());

    if report.verdict("undecided").is_some() {
        eprintln!("analysis left an undecided verdict; see the notes in {}", path.display());
        return Ok(EXIT_UNDECIDED);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignOpts,
    /// Reference profile (JSON file with `steps` and optional `t_end`).
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Constant reference: a signed scalar `R` (sign picks the rail) or
    /// explicit rails `RP,RM` (nM); conflicts with --profile.
    #[arg(long, value_name = "RP[,RM]", conflicts_with = "profile")]
    pub r_const: Option<String>,
    /// Horizon in seconds (overrides the profile's own t_end).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Initial totals, comma-separated (length 2N, nM). Default: all zero.
    #[arg(long, value_name = "V,V,...", conflicts_with = "perturb")]
    pub x0: Option<String>,
    /// Start at the equilibrium under the initial reference, with the plus
    /// rails bumped by this relative amount (`default` = 0.01).
    #[arg(long, value_name = "AMOUNT|default")]
    pub perturb: Option<String>,
    /// Lower to the expanded strand-displacement program and simulate that.
    #[arg(long)]
    pub dsd: bool,
    /// Fuel budget for --dsd (nM).
    #[arg(long, default_value_t = 1.0e4)]
    pub c_max: f64,
    /// Integrate the rotated dynamics with the cross-coupling blocks dropped.
    #[arg(long, conflicts_with = "dsd")]
    pub decoupled: bool,
    /// Divergence threshold on ‖rails‖∞ (nM).
    #[arg(long)]
    pub divergence_threshold: Option<f64>,
    /// Relative integration tolerance
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Absolute integration tolerance (nM)
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Integration method: auto | explicit | stiff.
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// Record at most one sample per this many seconds (0 = every step).
    #[arg(long)]
    pub record_dt: Option<f64>,
    #[command(flatten)]
    pub out: OutOpts,
}

fn parse_method(name: &str) -> Result<Method, CmdError> {
    match name {
        "auto" => Ok(Method::Auto),
        "explicit" => Ok(Method::DormandPrince),
        "stiff" => Ok(Method::Rosenbrock),
        other => Err(CmdError::Invalid(format!(
            "--method: expected auto|explicit|stiff, got `{other}`"
        ))),
    }
}

/// Starting state for a run: explicit totals, a perturbed equilibrium, or
/// zeros.
fn initial_state(
    crn: &Crn,
    x0_flag: &Option<String>,
    perturb_flag: &Option<String>,
    r0: [f64; 2],
) -> Result<(Vec<f64>, Option<f64>), CmdError> {
    let dim = 2 * crn.bases.len();
    if let Some(text) = x0_flag {
        let values: Result<Vec<f64>, _> =
            text.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let values =
            values.map_err(|_| CmdError::Invalid(format!("--x0: not a number list: `{text}`")))?;
        if values.len() != dim {
            return Err(CmdError::Invalid(format!(
                "--x0: expected {dim} entries, got {}",
                values.len()
            )));
        }
        return Ok((values, None));
    }
    if let Some(text) = perturb_flag {
        let amount = if text == "default" {
            DEFAULT_PERTURBATION
        } else {
            text.parse::<f64>().map_err(|_| {
                CmdError::Invalid(format!("--perturb: expected a number or `default`, got `{text}`"))
            })?
        };
        let eq = equilibrium_full(crn, r0).map_err(|e| {
            CmdError::Invalid(format!("--perturb needs an equilibrium, but the solve failed: {e}"))
        })?;
        let n = crn.bases.len();
        let mut x = eq.x_star;
        for j in 0..n {
            x[j] *= 1.0 + amount;
        }
        return Ok((x, Some(amount)));
    }
    Ok((vec![0.0; dim], None))
}

/// Everything `simulate` and `repro` share: run one simulation and write its
/// trajectory, sidecar, and (for programs) fuel report.
struct SimJob<'a> {
    loaded: &'a Loaded,
    profile: ReferenceProfile,
    t_end: f64,
    x0: Vec<f64>,
    perturb: Option<f64>,
    opts: SimOptions,
    mode: SimMode,
    dir: PathBuf,
    stem: String,
}

#[derive(Clone, Copy, PartialEq)]
enum SimMode {
    Crn,
    Dsd { c_max: f64 },
    Decoupled,
}

struct SimOutcome {
    traj: Trajectory,
    csv_path: PathBuf,
    run_path: PathBuf,
    fuel_path: Option<PathBuf>,
}

fn run_sim_job(job: &SimJob) -> Result<SimOutcome, CmdError> {
    let crn = &job.loaded.crn;
    let (mode_name, c_max, traj, fuel) = match job.mode {
        SimMode::Crn => {
            let field = mass_action_field(crn);
            let traj = integrate_named(
                &field,
                crn.species_names(),
                &job.x0,
                &job.profile,
                job.t_end,
                &job.opts,
            )
            .map_err(solver_error)?;
            ("crn", None, traj, None)
        }
        SimMode::Dsd { c_max } => {
            if !(c_max.is_finite() && c_max > 0.0) {
                return Err(CmdError::Invalid(format!(
                    "--c-max must be positive and finite, got {c_max}"
                )));
            }
            let prog = translate(crn, c_max);
            let (traj, fuel) =
                simulate_dsd(&prog, &job.x0, &job.profile, job.t_end, &job.opts)
                    .map_err(solver_error)?;
            ("dsd", Some(c_max), traj, Some(fuel))
        }
        SimMode::Decoupled => {
            let structure = extract_structure(crn);
            let traj = integrate_decoupled(
                &structure,
                &job.x0,
                &job.profile,
                job.t_end,
                &job.opts,
                true,
            )
            .map_err(solver_error)?;
            ("rotated-decoupled", None, traj, None)
        }
    };

    let meta = RunMeta {
        design: &job.loaded.design_label,
        network: &crn.name,
        mode: mode_name,
        no_feedback: job.loaded.no_feedback,
        scales: &job.loaded.scales,
        eta_scale: job
            .loaded
            .scales
            .iter()
            .find(|(sym, _)| sym == "eta")
            .map(|(_, f)| f.plus),
        c_max,
        perturb: job.perturb,
        x0: &job.x0,
        profile: &job.profile,
        t_end: job.t_end,
        opts: &job.opts,
        settling_rtol: SETTLING_RTOL,
    };

    let csv_path = job.dir.join(format!("{}.trajectory.csv", job.stem));
    let run_path = job.dir.join(format!("{}.run.json", job.stem));
    write_text(&csv_path, &formats::trajectory_csv(&traj))?;
    write_json(&run_path, &formats::run_json(&meta, &traj))?;
    let fuel_path = match &fuel {
        Some(report) => {
            let path = job.dir.join(format!("{}.fuel.json", job.stem));
            write_json(&path, &formats::fuel_json(report))?;
            Some(path)
        }
        None => None,
    };
    Ok(SimOutcome { traj, csv_path, run_path, fuel_path })
}

pub fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let loaded = load_design(&args.design)?;

    let (profile, profile_t_end) = match (&args.profile, &args.r_const) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CmdError::Invalid(format!("reading {}: {e}", path.display())))?;
            formats::parse_profile(&text)
                .map_err(|e| CmdError::Invalid(format!("{}: {e}", path.display())))?
        }
        (None, Some(text)) => {
            let (rp, rm) = parse_reference(text, "--r-const")?;
            let profile = ReferenceProfile::constant(rp, rm)
                .map_err(|e| CmdError::Invalid(format!("--r-const: {e}")))?;
            (profile, None)
        }
        (None, None) => (ReferenceProfile::zero(), None),
    };
    let t_end = args
        .t_end
        .or(profile_t_end)
        .ok_or_else(|| CmdError::Invalid("no horizon: pass --t-end or a profile with t_end".into()))?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(CmdError::Invalid(format!("--t-end must be positive, got {t_end}")));
    }

    let mut opts = SimOptions::default();
    if let Some(v) = args.rel_tol {
        opts.rel_tol = v;
    }
    if let Some(v) = args.abs_tol {
        opts.abs_tol = v;
    }
    if let Some(v) = args.divergence_threshold {
        opts.divergence_threshold = v;
    }
    opts.method = parse_method(&args.method)?;
    opts.min_record_dt = match args.record_dt {
        Some(v) => v,
        // Expanded programs are wide; thin their records by default.
        None if args.dsd => t_end / 2000.0,
        None => 0.0,
    };

    let (x0, perturb) = initial_state(&loaded.crn, &args.x0, &args.perturb, profile.value_at(0.0))?;

    let mode = if args.dsd {
        SimMode::Dsd { c_max: args.c_max }
    } else if args.decoupled {
        SimMode::Decoupled
    } else {
        SimMode::Crn
    };
    let dir = args.out.dir();
    let stem = args.out.tag.clone().unwrap_or_else(|| loaded.crn.name.clone());
    let job = SimJob { loaded: &loaded, profile, t_end, x0, perturb, opts, mode, dir, stem };
    let outcome = run_sim_job(&job)?;

    let traj = &outcome.traj;
    println!(
        "integrated {name} to t = {t} s with {method}: {accepted} steps, {samples} samples{div}",
        name = loaded.crn.name,
        t = traj.last_time(),
        method = traj.stats.method,
        accepted = traj.stats.steps_accepted,
        samples = traj.t.len(),
        div = if traj.diverged { "; DIVERGED" } else { "" },
    );
    if let Some(t) = formats::signal_settling_time(traj, SETTLING_RTOL) {
        println!("signals settled (±{:.0}%) from t = {t} s", SETTLING_RTOL * 100.0);
    }
    println!("wrote {}", outcome.csv_path.display());
    println!("wrote {}", outcome.run_path.display());
    if let Some(path) = &outcome.fuel_path {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// repro
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReproArgs {
    /// Output root (default: $DUALRAIL_OUT, else the working directory). The
    /// datasets land in `<root>/repro-<date>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory name override (defaults to `repro-<date>`).
    #[arg(long)]
    pub dir_name: Option<String>,
}

/// Reference sequence for the closed-loop tracking studies (representative,
/// chosen so every held level settles before the next step).
pub fn tracking_profile() -> (ReferenceProfile, f64) {
    let steps = vec![
        ProfileStep { t_start: 0.0, r_plus: 1.0, r_minus: 0.0 },
        ProfileStep { t_start: 2.0e4, r_plus: 0.0, r_minus: 0.5 },
        ProfileStep { t_start: 4.0e4, r_plus: 0.75, r_minus: 0.0 },
        ProfileStep { t_start: 6.0e4, r_plus: 0.0, r_minus: 1.0 },
        ProfileStep { t_start: 8.0e4, r_plus: 0.5, r_minus: 0.0 },
        ProfileStep { t_start: 1.0e5, r_plus: 0.0, r_minus: 0.0 },
    ];
    (ReferenceProfile::new(steps).expect("tracking profile is ordered"), 4.0e6)
}

/// Slow reference sequence for the expanded-program study: wide holds on the
/// program's timescale, reference off for the final approach to the positive
/// equilibrium.
pub fn dsd_long_profile() -> (ReferenceProfile, f64) {
    let steps = vec![
        ProfileStep { t_start: 0.0, r_plus: 1.0, r_minus: 0.0 },
        ProfileStep { t_start: 1.0e6, r_plus: 0.0, r_minus: 0.5 },
        ProfileStep { t_start: 2.0e6, r_plus: 0.75, r_minus: 0.0 },
        ProfileStep { t_start: 3.0e6, r_plus: 0.0, r_minus: 1.0 },
        ProfileStep { t_start: 4.0e6, r_plus: 0.5, r_minus: 0.0 },
        ProfileStep { t_start: 5.0e6, r_plus: 0.0, r_minus: 0.0 },
    ];
    (ReferenceProfile::new(steps).expect("long profile is ordered"), 8.0e6)
}

/// Fuel budget for the long expanded-program run: sized so cumulative chain
/// turnover (~1e-2 nM/s over 8e6 s) stays below ~10% of the budget.
pub const LONG_RUN_C_MAX: f64 = 1.0e6;
/// Fuel budget for the short-horizon fidelity comparison.
pub const FIDELITY_C_MAX: f64 = 1.0e4;
/// Fuel budget for the instability study (large enough that fuel depletion
/// does not mask divergence before the threshold is hit).
pub const DIVERGENCE_C_MAX: f64 = 1.0e6;
/// Divergence threshold for the instability studies (nM).
pub const DIVERGENCE_THRESHOLD: f64 = 1.0e3;
/// Horizon for the instability studies (s).
pub const DIVERGENCE_T_END: f64 = 1.0e6;

struct Repro {
    root: PathBuf,
    artifacts: Vec<ArtifactEntry>,
}

impl Repro {
    fn note(&mut self, rel: &str, what: &str) {
        self.artifacts.push(ArtifactEntry { path: rel.to_string(), what: what.to_string() });
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn loaded_from_path(path: &Path) -> Result<Loaded, CmdError> {
    load_design(&DesignOpts {
        design: path.to_path_buf(),
        no_feedback: false,
        scales: Vec::new(),
        eta_scale: None,
    })
}

pub fn cmd_repro(args: &ReproArgs) -> CmdResult {
    let out_root = args
        .out
        .clone()
        .or_else(|| std::env::var_os("DUALRAIL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let dir_name = args
        .dir_name
        .clone()
        .unwrap_or_else(|| format!("repro-{}", chrono::Utc::now().format("%Y%m%d")));
    let root = out_root.join(dir_name);
    fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let mut repro = Repro { root, artifacts: Vec::new() };

    // --- Inputs: the worked designs and profiles, written first so the
    // dataset is self-describing and every later step reads from disk.
    let nominal = pi_feedback_loop(&RateTable::nominal());
    let asymmetric = pi_feedback_loop(&RateTable::asymmetric());
    write_text(&repro.path("designs/pi_loop_nominal.json"), &schema::render_document(&nominal))?;
    write_text(
        &repro.path("designs/pi_loop_asymmetric.json"),
        &schema::render_document(&asymmetric),
    )?;
    write_text(
        &repro.path("designs/two_state_loop.json"),
        &schema::render_document(&two_state_loop(1.0, 1.0, 1.0, 2.0)),
    )?;
    repro.note("designs/pi_loop_nominal.json", "closed-loop design, rail-symmetric rates");
    repro.note("designs/pi_loop_asymmetric.json", "closed-loop design, rail-asymmetric rates");
    repro.note("designs/two_state_loop.json", "two-species negative feedback loop");

    let (track_profile, track_t_end) = tracking_profile();
    let (long_profile, long_t_end) = dsd_long_profile();
    write_text(
        &repro.path("profiles/tracking.json"),
        &formats::render_profile(&track_profile, Some(track_t_end)),
    )?;
    write_text(
        &repro.path("profiles/dsd_long.json"),
        &formats::render_profile(&long_profile, Some(long_t_end)),
    )?;
    repro.note("profiles/tracking.json", "reference steps for the tracking study");
    repro.note("profiles/dsd_long.json", "slow reference steps for the expanded program");

    let nominal_loaded = loaded_from_path(&repro.path("designs/pi_loop_nominal.json"))?;
    let asymmetric_loaded = loaded_from_path(&repro.path("designs/pi_loop_asymmetric.json"))?;

    // --- Compilation dumps.
    for (loaded, stem) in [(&nominal_loaded, "pi_loop_nominal"), (&asymmetric_loaded, "pi_loop_asymmetric")]
    {
        let structure = extract_structure(&loaded.crn);
        write_text(
            &repro.path(&format!("compile/{stem}.reactions.txt")),
            &export_reactions(&loaded.crn),
        )?;
        write_json(
            &repro.path(&format!("compile/{stem}.structure.json")),
            &formats::structure_json(&loaded.crn, &structure, is_cascaded(&loaded.crn)),
        )?;
        repro.note(
            &format!("compile/{stem}.reactions.txt"),
            "compiled dual-rail reaction list",
        );
        repro.note(
            &format!("compile/{stem}.structure.json"),
            "state matrices and their rotated blocks",
        );
    }

    // --- Stability reports (the dominant-pole table rows).
    let report_nominal = stability_report(&nominal_loaded.crn, [0.0, 0.0]);
    let report_asymmetric = stability_report(&asymmetric_loaded.crn, [0.0, 0.0]);
    write_json(
        &repro.path("analysis/stability_nominal.json"),
        &formats::stability_json(&report_nominal),
    )?;
    write_json(
        &repro.path("analysis/stability_asymmetric.json"),
        &formats::stability_json(&report_asymmetric),
    )?;
    write_text(
        &repro.path("analysis/stability_nominal.txt"),
        &formats::stability_table(&report_nominal),
    )?;
    write_text(
        &repro.path("analysis/stability_asymmetric.txt"),
        &formats::stability_table(&report_asymmetric),
    )?;
    repro.note("analysis/stability_nominal.json", "dominant poles and verdicts, symmetric loop");
    repro.note(
        "analysis/stability_asymmetric.json",
        "dominant poles and verdicts, asymmetric loop",
    );
    check_decided(&report_nominal)?;
    check_decided(&report_asymmetric)?;

    // --- Annihilation-rate scaling of the positive equilibrium.
    let eta_csv = eta_scaling_csv(&nominal_loaded.crn)?;
    write_text(&repro.path("analysis/eta_scaling.csv"), &eta_csv)?;
    repro.note("analysis/eta_scaling.csv", "positive equilibrium size vs annihilation rate");

    // --- Existence grid for the two-species loop.
    let grid_csv = existence_grid_csv()?;
    write_text(&repro.path("analysis/existence_grid.csv"), &grid_csv)?;
    repro.note(
        "analysis/existence_grid.csv",
        "positive-equilibrium existence over the gain grid",
    );

    // --- Closed-loop tracking, nominal rates.
    let outcome = run_sim_job(&SimJob {
        loaded: &nominal_loaded,
        profile: track_profile.clone(),
        t_end: track_t_end,
        x0: vec![0.0; 10],
        perturb: None,
        opts: SimOptions::default(),
        mode: SimMode::Crn,
        dir: repro.path("sim"),
        stem: "tracking_nominal".into(),
    })?;
    repro.note("sim/tracking_nominal.trajectory.csv", "closed-loop step tracking, nominal rates");
    repro.note("sim/tracking_nominal.run.json", "run sidecar for the tracking study");
    if outcome.traj.diverged {
        return Err(CmdError::Hard(anyhow::anyhow!(
            "the nominal tracking run diverged; the dataset is wrong"
        )));
    }

    // --- Instability of the asymmetric loop from its perturbed equilibrium.
    let eq = equilibrium_full(&asymmetric_loaded.crn, [0.0, 0.0])
        .map_err(|e| anyhow::anyhow!("asymmetric equilibrium solve failed: {e}"))?;
    let mut x_perturbed = eq.x_star.clone();
    for j in 0..asymmetric_loaded.crn.bases.len() {
        x_perturbed[j] *= 1.0 + DEFAULT_PERTURBATION;
    }
    let mut diverge_opts = SimOptions::default();
    diverge_opts.divergence_threshold = DIVERGENCE_THRESHOLD;
    run_sim_job(&SimJob {
        loaded: &asymmetric_loaded,
        profile: ReferenceProfile::zero(),
        t_end: DIVERGENCE_T_END,
        x0: x_perturbed.clone(),
        perturb: Some(DEFAULT_PERTURBATION),
        opts: diverge_opts,
        mode: SimMode::Crn,
        dir: repro.path("sim"),
        stem: "divergence_asymmetric".into(),
    })?;
    repro.note(
        "sim/divergence_asymmetric.trajectory.csv",
        "asymmetric loop leaving its perturbed equilibrium",
    );
    repro.note("sim/divergence_asymmetric.run.json", "run sidecar with the divergence flag");

    // --- Same start, cross-coupling dropped: bounded.
    run_sim_job(&SimJob {
        loaded: &asymmetric_loaded,
        profile: ReferenceProfile::zero(),
        t_end: DIVERGENCE_T_END,
        x0: x_perturbed.clone(),
        perturb: Some(DEFAULT_PERTURBATION),
        opts: diverge_opts,
        mode: SimMode::Decoupled,
        dir: repro.path("sim"),
        stem: "decoupled_asymmetric".into(),
    })?;
    repro.note(
        "sim/decoupled_asymmetric.trajectory.csv",
        "same start with the signal/parity cross-coupling removed",
    );
    repro.note("sim/decoupled_asymmetric.run.json", "run sidecar for the decoupled variant");

    // --- Expanded program: long tracking run into the positive equilibrium.
    let mut long_opts = SimOptions::default();
    long_opts.min_record_dt = long_t_end / 2000.0;
    run_sim_job(&SimJob {
        loaded: &nominal_loaded,
        profile: long_profile.clone(),
        t_end: long_t_end,
        x0: vec![0.0; 10],
        perturb: None,
        opts: long_opts,
        mode: SimMode::Dsd { c_max: LONG_RUN_C_MAX },
        dir: repro.path("dsd"),
        stem: "dsd_tracking".into(),
    })?;
    repro.note("dsd/dsd_tracking.trajectory.csv", "expanded program tracking the slow profile");
    repro.note("dsd/dsd_tracking.run.json", "run sidecar incl. signal settling time");
    repro.note("dsd/dsd_tracking.fuel.json", "fuel depletion over the long run");

    // --- Expanded program: the asymmetric instability carries over.
    let mut dsd_diverge_opts = diverge_opts;
    dsd_diverge_opts.min_record_dt = DIVERGENCE_T_END / 2000.0;
    // Verdict-level run: the unstable mode's slow oscillation does not need
    // tight tolerances to cross the threshold, and tightening them roughly
    // quintuples the step count.
    dsd_diverge_opts.rel_tol = 1.0e-6;
    run_sim_job(&SimJob {
        loaded: &asymmetric_loaded,
        profile: ReferenceProfile::zero(),
        t_end: DIVERGENCE_T_END,
        x0: x_perturbed,
        perturb: Some(DEFAULT_PERTURBATION),
        opts: dsd_diverge_opts,
        mode: SimMode::Dsd { c_max: DIVERGENCE_C_MAX },
        dir: repro.path("dsd"),
        stem: "dsd_divergence".into(),
    })?;
    repro.note(
        "dsd/dsd_divergence.trajectory.csv",
        "expanded asymmetric program leaving the same perturbed equilibrium",
    );
    repro.note("dsd/dsd_divergence.run.json", "run sidecar with the divergence flag");
    repro.note("dsd/dsd_divergence.fuel.json", "fuel levels at the point of divergence");

    // --- Short-horizon fidelity of the expansion.
    let prog = translate(&nominal_loaded.crn, FIDELITY_C_MAX);
    let scenario = FidelityScenario {
        x0: vec![0.0; 10],
        profile: ReferenceProfile::constant(1.0, 0.0)
            .expect("constant reference profiles are valid"),
        t_end: 1.0e5,
        samples: 120,
    };
    let fidelity = fidelity_check(&nominal_loaded.crn, &prog, &scenario).map_err(solver_error)?;
    write_json(&repro.path("dsd/fidelity_nominal.json"), &formats::fidelity_json(&fidelity))?;
    write_text(&repro.path("dsd/program_nominal.txt"), &export_program(&prog))?;
    repro.note("dsd/fidelity_nominal.json", "program-vs-network deviation while fueled");
    repro.note("dsd/program_nominal.txt", "expanded reaction list at the fidelity budget");

    // --- Manifest last, listing everything above.
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: "repro".to_string(),
        inputs: vec![
            "designs/pi_loop_nominal.json".into(),
            "designs/pi_loop_asymmetric.json".into(),
            "designs/two_state_loop.json".into(),
            "profiles/tracking.json".into(),
            "profiles/dsd_long.json".into(),
        ],
        overrides: Vec::new(),
        output_directory: repro.root.display().to_string(),
        artifacts: repro.artifacts.clone(),
        determinism: "all computations are deterministic; rerunning reproduces every payload \
                      byte-for-byte"
            .to_string(),
    };
    write_text(&repro.path("manifest.json"), &manifest.render())?;

    println!("regenerated {} artifacts under {}", repro.artifacts.len(), repro.root.display());
    Ok(0)
}

fn check_decided(report: &StabilityReport) -> Result<(), CmdError> {
    if report.verdict("undecided").is_some() {
        return Err(CmdError::Hard(anyhow::anyhow!(
            "analysis of `{}` left an undecided verdict; the dataset is incomplete",
            report.name
        )));
    }
    Ok(())
}

/// Positive-equilibrium size against the annihilation rate: one row per
/// scale factor, nominal design.
fn eta_scaling_csv(nominal: &Crn) -> Result<String, CmdError> {
    let mut out = String::from("eta_scale,eta_per_nm_s,q_star_inf,classification\n");
    for scale in [0.5, 1.0, 2.0, 4.0] {
        let factors =
            [("eta".to_string(), RatePair::symmetric(scale))].into_iter().collect();
        let crn = apply_perturbation(nominal, &factors)
            .map_err(|e| CmdError::Hard(anyhow::anyhow!("eta scaling failed: {e}")))?;
        let eq = equilibrium_full(&crn, [0.0, 0.0])
            .map_err(|e| anyhow::anyhow!("equilibrium at eta scale {scale} failed: {e}"))?;
        let n = crn.bases.len();
        let q_inf =
            (0..n).map(|j| eq.x_star[j] + eq.x_star[j + n]).fold(0.0f64, f64::max);
        out.push_str(&format!(
            "{scale},{eta},{q_inf},{class}\n",
            eta = crn.eta,
            class = eq.classification.as_str()
        ));
    }
    Ok(out)
}

/// 20x20 grid over the loop gains (c1, c2) at unit degradation: existence
/// of the positive parity equilibrium next to the product condition
/// c1*c2 > d1*d2.
fn existence_grid_csv() -> Result<String, CmdError> {
    use dualrail_core::analysis::{descartes_condition, equilibrium_q};
    let mut out = String::from("c1,c2,product_condition,lambda_f,classification,q1,q2\n");
    let (d1, d2) = (1.0, 1.0);
    for i in 1..=20 {
        for j in 1..=20 {
            let c1 = 0.25 * i as f64;
            let c2 = 0.25 * j as f64;
            let diagram = two_state_loop(d1, d2, c1, c2);
            let crn = compile_dual_rail(&diagram)
                .map_err(|e| CmdError::Hard(anyhow::anyhow!("grid compile failed: {e}")))?;
            let structure = extract_structure(&crn);
            let exists = descartes_condition(d1, d2, c1, c2);
            let (lambda_f, class, q) = match equilibrium_q(&structure.r22, 1.0, &[0.0, 0.0]) {
                Ok(eq) => {
                    let lambda = dualrail_core::analysis::frobenius_perron(&structure.r22)
                        .map(|p| p.lambda_f)
                        .unwrap_or(f64::NAN);
                    (lambda, eq.classification.as_str().to_string(), eq.x_star)
                }
                Err(e) => {
                    return Err(CmdError::Hard(anyhow::anyhow!(
                        "grid equilibrium at ({c1}, {c2}) failed: {e}"
                    )))
                }
            };
            out.push_str(&format!(
                "{c1},{c2},{exists},{lambda_f},{class},{},{}\n",
                q[0], q[1]
            ));
        }
    }
    Ok(out)
}
