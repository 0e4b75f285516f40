//! File formats emitted by the commands: structure and stability JSON,
//! trajectory CSV with its JSON sidecar, fuel and fidelity JSON, reference
//! profiles, and the run manifest.
//!
//! Everything here is deterministic: keys are emitted in sorted order, no
//! timestamps or host details enter any payload, and floating-point values
//! are written in Rust's shortest round-trip form (eigenvalues rounded to
//! 6 significant digits first, so reports stay diff-friendly across minor
//! numeric refactors).

use dualrail_core::analysis::{
    BoundednessBound, EquilibriumResult, PerronPair, Spectrum, StabilityReport, Verdict,
};
use dualrail_core::crn::structure::StructuredSystem;
use dualrail_core::crn::Crn;
use dualrail_core::dsd::{FidelityReport, FuelReport};
use dualrail_core::frontend::RatePair;
use dualrail_core::linalg::Mat;
use dualrail_core::sim::{ProfileStep, ReferenceProfile, SimOptions, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Rounds to 6 significant digits (reports quote eigenvalues at this
/// precision).
pub fn sig6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().expect("formatted float parses back")
}

fn complex_value(re: f64, im: f64) -> Value {
    json!({ "re": sig6(re), "im": sig6(im) })
}

fn spectrum_value(s: &Spectrum) -> Value {
    json!({
        "eigenvalues": s.eigenvalues.iter().map(|z| complex_value(z.re, z.im)).collect::<Vec<_>>(),
        "spectral_abscissa": sig6(s.spectral_abscissa),
        "is_hurwitz": s.is_hurwitz,
        "is_marginal": s.is_marginal,
        "max_backward_error": s.max_backward_error,
    })
}

fn mat_value(m: &Mat) -> Value {
    Value::Array((0..m.rows()).map(|i| json!(m.row(i))).collect())
}

fn verdict_value(v: &Verdict) -> Value {
    json!({
        "code": v.code,
        "claim": v.claim,
        "premises": v.premises,
        "holds": v.holds,
    })
}

fn equilibrium_value(eq: &EquilibriumResult) -> Value {
    json!({
        "x_star": eq.x_star,
        "residual": eq.residual,
        "classification": eq.classification.as_str(),
        "converged": eq.converged,
    })
}

fn perron_value(p: &PerronPair) -> Value {
    json!({ "lambda_f": sig6(p.lambda_f), "w_f": p.w_f })
}

fn bound_value(b: &BoundednessBound) -> Value {
    json!({
        "unforced": b.unforced,
        "forced": b.forced,
        "forced_is_estimate": b.forced_is_estimate,
    })
}

/// Matrix dump of a compiled network: the block decomposition, the rotated
/// blocks, and the species ordering.
pub fn structure_json(crn: &Crn, s: &StructuredSystem, cascaded: bool) -> Value {
    json!({
        "name": crn.name,
        "n_bases": s.n,
        "species": crn.species_names(),
        "output": crn.output,
        "eta": s.eta,
        "symmetric": s.symmetric,
        "cascaded": cascaded,
        "a": mat_value(&s.a),
        "b": mat_value(&s.b),
        "a1_plus": mat_value(&s.a1_plus),
        "a1_minus": mat_value(&s.a1_minus),
        "a2_plus": mat_value(&s.a2_plus),
        "a2_minus": mat_value(&s.a2_minus),
        "r11": mat_value(&s.r11),
        "r12": mat_value(&s.r12),
        "r21": mat_value(&s.r21),
        "r22": mat_value(&s.r22),
        "rb": mat_value(&s.rb),
        "r11_bar": s.r11_bar.as_ref().map(mat_value),
        "r22_bar": s.r22_bar.as_ref().map(mat_value),
    })
}

pub fn stability_json(r: &StabilityReport) -> Value {
    json!({
        "name": r.name,
        "n_bases": r.n_bases,
        "symmetric": r.symmetric,
        "metzler": r.metzler,
        "cascaded": r.cascaded,
        "irreducible_parity": r.irreducible_parity,
        "reference": r.reference,
        "spectra": {
            "a": r.spectrum_a.as_ref().map(spectrum_value),
            "r11": r.spectrum_r11.as_ref().map(spectrum_value),
            "r22": r.spectrum_r22.as_ref().map(spectrum_value),
            "a_s": r.spectrum_a_s.as_ref().map(spectrum_value),
        },
        "perron": r.perron.as_ref().map(perron_value),
        "equilibrium": r.equilibrium.as_ref().map(equilibrium_value),
        "bound": r.bound.as_ref().map(bound_value),
        "verdicts": r.verdicts.iter().map(verdict_value).collect::<Vec<_>>(),
        "notes": r.notes,
    })
}

/// The eigenvalues sitting on the spectral abscissa, rendered like
/// `-3.96000e-6` or `3.16000e-5 ± i 1.26000e-3`.
fn dominant_poles(s: &Spectrum) -> String {
    let tol = 1e-9 * s.spectral_abscissa.abs().max(1e-300);
    let mut dominant: Vec<_> = s
        .eigenvalues
        .iter()
        .filter(|z| (z.re - s.spectral_abscissa).abs() <= tol)
        .collect();
    dominant.sort_by(|a, b| a.im.partial_cmp(&b.im).expect("finite eigenvalues"));
    let re = sig6(s.spectral_abscissa);
    match dominant.iter().map(|z| sig6(z.im.abs())).find(|&im| im > 0.0) {
        Some(im) => format!("{re:e} ± i {im:e}"),
        None => format!("{re:e}"),
    }
}

/// Human-readable summary: one row per analyzed matrix (dominant poles and
/// the Hurwitz call), then the verdicts.
pub fn stability_table(r: &StabilityReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "network {name}: {n} base species, {sym} rates, {casc}\n",
        name = r.name,
        n = r.n_bases,
        sym = if r.symmetric { "rail-symmetric" } else { "rail-asymmetric" },
        casc = if r.cascaded { "pure cascade" } else { "feedback interconnection" },
    ));
    out.push_str(&format!(
        "equilibrium under reference [{}, {}] nM: {}\n",
        r.reference[0],
        r.reference[1],
        match &r.equilibrium {
            Some(eq) => format!("{} (residual {:.3e} nM/s)", eq.classification.as_str(), eq.residual),
            None => "not found".to_string(),
        }
    ));
    out.push_str(&format!("{:<10} {:>34}   {}\n", "matrix", "pole(s) with max real part", "Hurwitz"));
    let rows: [(&str, &Option<Spectrum>); 4] = [
        ("A", &r.spectrum_a),
        (if r.symmetric { "R11 (= R11 bar)" } else { "R11" }, &r.spectrum_r11),
        (if r.symmetric { "R22 (= R22 bar)" } else { "R22" }, &r.spectrum_r22),
        ("A_s", &r.spectrum_a_s),
    ];
    for (label, spec) in rows {
        match spec {
            Some(s) => out.push_str(&format!(
                "{:<10} {:>34}   {}\n",
                label,
                dominant_poles(s),
                if s.is_hurwitz { "yes" } else { "no" }
            )),
            None => out.push_str(&format!("{label:<10} {:>34}   -\n", "(not computed)")),
        }
    }
    for v in &r.verdicts {
        out.push_str(&format!(
            "verdict {code}: {status} — {claim}\n",
            code = v.code,
            status = if v.holds { "holds" } else { "does not hold" },
            claim = v.claim,
        ));
    }
    for note in &r.notes {
        out.push_str(&format!("note: {note}\n"));
    }
    out
}

/// CSV export: `t,<species...>,p1..pN,q1..qN`. Time in s, concentrations
/// in nM. The species columns are the raw solver states; the p/q columns
/// are derived from the rail view (so dual-rail, rotated and expanded
/// program trajectories all carry comparable signal columns).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.n_bases;
    let mut out = String::new();
    out.push('t');
    for name in &traj.species_names {
        out.push(',');
        out.push_str(name);
    }
    for j in 0..n {
        out.push_str(&format!(",p{}", j + 1));
    }
    for j in 0..n {
        out.push_str(&format!(",q{}", j + 1));
    }
    out.push('\n');
    for i in 0..traj.t.len() {
        out.push_str(&format!("{}", traj.t[i]));
        for v in &traj.states[i] {
            out.push_str(&format!(",{v}"));
        }
        for v in traj.p_at(i) {
            out.push_str(&format!(",{v}"));
        }
        for v in traj.q_at(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Earliest recorded time after which every rail stays within
/// `rtol * ||rails(t_end)||_inf` of its final value, through the end of the
/// run. `None` when the trajectory never settles (or diverged).
pub fn signal_settling_time(traj: &Trajectory, rtol: f64) -> Option<f64> {
    if traj.diverged || traj.t.len() < 2 {
        return None;
    }
    let last = traj.rails.last().expect("nonempty trajectory");
    let scale = last.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 0.0 {
        return None;
    }
    let band = rtol * scale;
    let mut settled_from = traj.t.len() - 1;
    for i in (0..traj.t.len()).rev() {
        let dev = traj.rails[i]
            .iter()
            .zip(last)
            .fold(0.0f64, |m, (v, f)| m.max((v - f).abs()));
        if dev <= band {
            settled_from = i;
        } else {
            break;
        }
    }
    if settled_from == 0 || settled_from == traj.t.len() - 1 {
        // Settled from the very start carries no information; settled only
        // at the final sample is not a settled tail.
        if settled_from == 0 {
            return Some(traj.t[0]);
        }
        return None;
    }
    Some(traj.t[settled_from])
}

/// Everything the JSON sidecar records about one simulation run.
pub struct RunMeta<'a> {
    /// Design document path or builtin name.
    pub design: &'a str,
    pub network: &'a str,
    /// `crn`, `dsd`, `rotated` or `rotated-decoupled`.
    pub mode: &'a str,
    pub no_feedback: bool,
    pub scales: &'a [(String, RatePair)],
    pub eta_scale: Option<f64>,
    pub c_max: Option<f64>,
    pub perturb: Option<f64>,
    pub x0: &'a [f64],
    pub profile: &'a ReferenceProfile,
    pub t_end: f64,
    pub opts: &'a SimOptions,
    /// Relative tolerance used for the settling diagnostic.
    pub settling_rtol: f64,
}

pub fn run_json(meta: &RunMeta, traj: &Trajectory) -> Value {
    let n = traj.n_bases;
    let last = traj.t.len() - 1;
    let settling = signal_settling_time(traj, meta.settling_rtol);
    json!({
        "design": meta.design,
        "network": meta.network,
        "mode": meta.mode,
        "no_feedback": meta.no_feedback,
        "scales": meta.scales.iter().map(|(sym, f)| json!({
            "symbol": sym, "plus": f.plus, "minus": f.minus,
        })).collect::<Vec<_>>(),
        "eta_scale": meta.eta_scale,
        "c_max": meta.c_max,
        "perturb": meta.perturb,
        "x0": meta.x0,
        "profile": profile_doc(meta.profile, Some(meta.t_end)),
        "t_end": meta.t_end,
        "options": {
            "rel_tol": meta.opts.rel_tol,
            "abs_tol": meta.opts.abs_tol,
            "method": method_name(meta.opts),
            "divergence_threshold": meta.opts.divergence_threshold,
            "min_record_dt": meta.opts.min_record_dt,
            "max_steps": meta.opts.max_steps,
        },
        "diverged": traj.diverged,
        "events": traj.events.iter().map(|e| json!({
            "t": e.t, "kind": e.kind.as_str(), "detail": e.detail,
        })).collect::<Vec<_>>(),
        "stats": {
            "method": traj.stats.method,
            "steps_accepted": traj.stats.steps_accepted,
            "steps_rejected": traj.stats.steps_rejected,
            "rhs_evaluations": traj.stats.rhs_evaluations,
            "jacobian_evaluations": traj.stats.jacobian_evaluations,
            "lu_factorizations": traj.stats.lu_factorizations,
            "min_step": traj.stats.min_step,
            "max_step": traj.stats.max_step,
        },
        "samples": traj.t.len(),
        "final_time": traj.last_time(),
        "final_state": traj.last_state(),
        "final_rails": traj.rails[last],
        "final_p": traj.p_at(last),
        "final_q": traj.q_at(last),
        "signal_settling": settling.map(|t| json!({
            "t": t,
            "rtol": meta.settling_rtol,
        })),
        "n_bases": n,
    })
}

fn method_name(opts: &SimOptions) -> &'static str {
    match opts.method {
        dualrail_core::sim::Method::Auto => "auto",
        dualrail_core::sim::Method::DormandPrince => "dormand_prince54",
        dualrail_core::sim::Method::Rosenbrock => "rosenbrock23",
    }
}

pub fn fuel_json(report: &FuelReport) -> Value {
    json!({
        "c_max": report.c_max,
        "worst_depletion": report.worst_depletion(),
        "floor_fraction": report.floor_fraction(),
        "fuels": report.fuels.iter().map(|f| json!({
            "name": f.name,
            "initial": f.initial,
            "minimum": f.minimum,
            "depletion_fraction": f.depletion_fraction,
            "t_minimum": f.t_minimum,
        })).collect::<Vec<_>>(),
    })
}

pub fn fidelity_json(report: &FidelityReport) -> Value {
    json!({
        "max_relative_deviation": report.max_relative_deviation,
        "deviation_while_fueled": report.deviation_while_fueled,
        "signal_scale": report.signal_scale,
        "fuel_floor_fraction": report.fuel_floor_fraction,
        "threshold_crossing": report.threshold_crossing.map(|(t, floor)| json!({
            "t": t, "fuel_floor": floor,
        })),
        "crn_diverged": report.crn_diverged,
        "dsd_diverged": report.dsd_diverged,
    })
}

/// On-disk reference profile: step times with the rail values held from
/// each time onward, plus an optional default horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub steps: Vec<StepDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepDoc {
    pub t: f64,
    pub r_plus: f64,
    pub r_minus: f64,
}

impl ProfileDoc {
    pub fn to_profile(&self) -> anyhow::Result<ReferenceProfile> {
        let steps = self
            .steps
            .iter()
            .map(|s| ProfileStep { t_start: s.t, r_plus: s.r_plus, r_minus: s.r_minus })
            .collect();
        ReferenceProfile::new(steps).map_err(|e| anyhow::anyhow!("invalid profile: {e}"))
    }
}

pub fn parse_profile(text: &str) -> anyhow::Result<(ReferenceProfile, Option<f64>)> {
    let doc: ProfileDoc = serde_json::from_str(text)?;
    Ok((doc.to_profile()?, doc.t_end))
}

pub fn profile_doc(profile: &ReferenceProfile, t_end: Option<f64>) -> ProfileDoc {
    ProfileDoc {
        steps: profile
            .steps()
            .iter()
            .map(|s| StepDoc { t: s.t_start, r_plus: s.r_plus, r_minus: s.r_minus })
            .collect(),
        t_end,
    }
}

pub fn render_profile(profile: &ReferenceProfile, t_end: Option<f64>) -> String {
    let mut text = serde_json::to_string_pretty(&profile_doc(profile, t_end))
        .expect("profiles always serialize");
    text.push('\n');
    text
}

/// Run manifest: enough to regenerate a dataset directory byte-for-byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub inputs: Vec<String>,
    pub overrides: Vec<String>,
    pub output_directory: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub determinism: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub what: String,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("manifests always serialize");
        text.push('\n');
        text
    }
}
