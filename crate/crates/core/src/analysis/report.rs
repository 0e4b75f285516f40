//! The stability decision tree: structure flags, spectra, equilibrium,
//! and machine-checkable verdicts with their premises.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::analysis::equilibrium::{equilibrium_full, Classification, EquilibriumResult};
use crate::analysis::{
    boundedness_bound, frobenius_perron, is_irreducible, is_metzler, linearize, spectrum,
    BoundednessBound, PerronPair, Spectrum,
};
use crate::crn::structure::extract_structure;
use crate::crn::{is_cascaded, mass_action_field, Crn};
use crate::linalg::vecops;

/// One conclusion of the decision tree. `premises` carry the predicate
/// values the claim was derived from, so a reader (or a test) can re-check
/// the reasoning; `holds` says whether the claim was actually established.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    /// Stable machine-readable code.
    pub code: &'static str,
    pub claim: String,
    pub premises: Vec<String>,
    pub holds: bool,
}

/// Everything the analysis pipeline can say about one compiled network.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub name: String,
    pub n_bases: usize,
    pub symmetric: bool,
    pub metzler: bool,
    pub cascaded: bool,
    pub irreducible_parity: bool,
    /// Reference value the equilibrium was solved under.
    pub reference: [f64; 2],
    pub spectrum_a: Option<Spectrum>,
    pub spectrum_r11: Option<Spectrum>,
    pub spectrum_r22: Option<Spectrum>,
    /// Spectrum of the linearization at the reported equilibrium.
    pub spectrum_a_s: Option<Spectrum>,
    pub perron: Option<PerronPair>,
    pub equilibrium: Option<EquilibriumResult>,
    pub bound: Option<BoundednessBound>,
    pub verdicts: Vec<Verdict>,
    /// Failures and estimate flags, in human-readable form.
    pub notes: Vec<String>,
}

fn fmt_alpha(spec: &Spectrum) -> String {
    format!("{:.6e} 1/s", spec.spectral_abscissa)
}

/// Runs the full decision tree for `crn` under constant reference `r`.
pub fn stability_report(crn: &Crn, r: [f64; 2]) -> StabilityReport {
    let structure = extract_structure(crn);
    let field = mass_action_field(crn);
    let n = structure.n;

    let symmetric = structure.symmetric;
    let cascaded = is_cascaded(crn);
    let metzler = is_metzler(&structure.a);
    let irreducible_parity = is_irreducible(&structure.r22);

    let mut notes: Vec<String> = Vec::new();
    let mut spectrum_of = |label: &str, m: &crate::linalg::Mat| match spectrum(m) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("spectrum of {label} failed: {e}"));
            None
        }
    };
    let spectrum_a = spectrum_of("A", &structure.a);
    let spectrum_r11 = spectrum_of("R11", &structure.r11);
    let spectrum_r22 = spectrum_of("R22", &structure.r22);

    let perron = if metzler && irreducible_parity {
        match frobenius_perron(&structure.r22) {
            Ok(p) => Some(p),
            Err(e) => {
                notes.push(format!("Perron pair of R22 failed: {e}"));
                None
            }
        }
    } else {
        None
    };

    let equilibrium = match equilibrium_full(crn, r) {
        Ok(eq) => Some(eq),
        Err(e) => {
            notes.push(format!("equilibrium solve failed: {e}"));
            None
        }
    };

    let spectrum_a_s = equilibrium.as_ref().and_then(|eq| {
        let lin = linearize(&field, &eq.x_star);
        match spectrum(&lin.a_s) {
            Ok(s) => Some(s),
            Err(e) => {
                notes.push(format!("spectrum of the linearization failed: {e}"));
                None
            }
        }
    });

    // Parity-block forcing for the boundedness figure.
    let v_q: Vec<f64> =
        (0..n).map(|i| structure.rb[(i + n, 0)] * r[0] + structure.rb[(i + n, 1)] * r[1]).collect();
    let bound = if symmetric {
        Some(boundedness_bound(
            structure.r22_bar.as_ref().unwrap_or(&structure.r22),
            structure.eta,
            &v_q,
        ))
    } else {
        None
    };

    let mut verdicts: Vec<Verdict> = Vec::new();

    // (i) A strictly Hurwitz: the annihilation terms cannot destabilize a
    // stable unimolecular network.
    if let Some(sa) = &spectrum_a {
        if sa.is_hurwitz {
            verdicts.push(Verdict {
                code: "gas_origin",
                claim: String::from(
                    "the unforced network is globally asymptotically stable at the origin",
                ),
                premises: alloc::vec![
                    format!("alpha(A) = {} < 0 (strictly Hurwitz)", fmt_alpha(sa)),
                    String::from(
                        "A is Metzler Hurwitz, so a positive diagonal Lyapunov certificate \
                         exists and the annihilation terms only add negative drift",
                    ),
                ],
                holds: true,
            });
        }
    }

    // (ii) Pure cascades with symmetric rates: parity dynamics are GAS at
    // the origin when the parity block is strictly stable.
    if cascaded && symmetric {
        if let Some(s22) = &spectrum_r22 {
            let strict = s22.is_hurwitz;
            let mut premises = alloc::vec![
                String::from("the catalysis graph is acyclic (pure cascade)"),
                format!("alpha(R22) = {}", fmt_alpha(s22)),
            ];
            if s22.is_marginal {
                premises.push(String::from(
                    "a marginal parity mode (zero eigenvalue, e.g. an integrator without \
                     degradation) blocks the convergence guarantee: the parity state need \
                     not return to the origin",
                ));
            }
            verdicts.push(Verdict {
                code: "gas_cascade",
                claim: String::from(
                    "unforced cascade dynamics are globally asymptotically stable at the origin",
                ),
                premises,
                holds: strict,
            });
        }
    }

    // (iii) Symmetric feedback with an unstable irreducible parity block:
    // the origin is unstable and a strictly positive equilibrium appears.
    if symmetric && irreducible_parity {
        if let (Some(s22), Some(pair)) = (&spectrum_r22, &perron) {
            if !s22.is_hurwitz && !s22.is_marginal {
                let eq_positive = equilibrium
                    .as_ref()
                    .map(|eq| eq.classification == Classification::Positive)
                    .unwrap_or(false);
                let mut premises = alloc::vec![
                    format!(
                        "lambda_F(R22) = {:.6e} 1/s > 0 with a strictly positive left \
                         Perron vector",
                        pair.lambda_f
                    ),
                    String::from(
                        "near the origin the parity Lyapunov value w_F'q strictly increases",
                    ),
                ];
                match &equilibrium {
                    Some(eq) if eq_positive => premises.push(format!(
                        "a strictly positive equilibrium was found (residual {:.3e} nM/s, \
                         max parity {:.6e} nM)",
                        eq.residual,
                        (0..n).map(|j| eq.x_star[j] + eq.x_star[j + n]).fold(0.0f64, f64::max)
                    )),
                    Some(eq) => premises.push(format!(
                        "equilibrium search returned classification `{}`",
                        eq.classification.as_str()
                    )),
                    None => premises.push(String::from("equilibrium search failed")),
                }
                verdicts.push(Verdict {
                    code: "origin_unstable",
                    claim: String::from(
                        "the origin is unstable and the network settles around a strictly \
                         positive equilibrium",
                    ),
                    premises,
                    holds: eq_positive,
                });
            }
        }
    }

    // (iv) Symmetric parameterisation: concentrations stay bounded and the
    // bound scales inversely with the annihilation rate.
    if symmetric {
        if let (Some(s11), Some(b)) = (&spectrum_r11, &bound) {
            let mut premises = alloc::vec![
                format!("alpha(R11) = {} (signal block)", fmt_alpha(s11)),
                format!("unforced parity bound 2*sqrt(N)*||R22||_2/eta = {:.6e} nM", b.unforced),
            ];
            if let Some(f) = b.forced {
                premises.push(format!(
                    "forced parity bound (estimate at the implicit fixed point): {f:.6e} nM"
                ));
            }
            verdicts.push(Verdict {
                code: "bounded",
                claim: String::from(
                    "all concentrations remain bounded; the bound scales as 1/eta",
                ),
                premises,
                holds: s11.is_hurwitz,
            });
        }
    }

    // (v) Local verdict from the linearization at the reported equilibrium.
    if let (Some(eq), Some(sas)) = (&equilibrium, &spectrum_a_s) {
        let mut premises = Vec::new();
        if !symmetric {
            premises.push(String::from(
                "asymmetric rates interconnect the signal and parity dynamics; a Hurwitz \
                 signal block alone no longer guarantees boundedness, so the verdict rests \
                 on the full linearization",
            ));
        }
        premises.push(format!("alpha(A_s) = {}", fmt_alpha(sas)));
        premises.push(format!(
            "equilibrium classification `{}`, residual {:.3e} nM/s, ||x*||_inf = {:.6e} nM",
            eq.classification.as_str(),
            eq.residual,
            vecops::inf_norm(&eq.x_star)
        ));
        let (claim, holds) = if sas.is_marginal {
            (
                String::from(
                    "the linearization at the reported equilibrium is marginal; no local \
                     conclusion",
                ),
                false,
            )
        } else if sas.is_hurwitz {
            (
                String::from(
                    "the network is locally exponentially stable around the reported \
                     equilibrium",
                ),
                true,
            )
        } else {
            (
                String::from(
                    "the reported equilibrium is unstable; trajectories diverge from it",
                ),
                true,
            )
        };
        verdicts.push(Verdict { code: "local", claim, premises, holds });
    }

    // Anything the tree needed but could not compute becomes an explicit
    // "undecided" verdict instead of a silent gap.
    if equilibrium.is_none() || spectrum_a_s.is_none() {
        verdicts.push(Verdict {
            code: "undecided",
            claim: String::from("undecided: a required computation did not converge"),
            premises: notes.clone(),
            holds: false,
        });
    }

    StabilityReport {
        name: crn.name.clone(),
        n_bases: n,
        symmetric,
        metzler,
        cascaded,
        irreducible_parity,
        reference: r,
        spectrum_a,
        spectrum_r11,
        spectrum_r22,
        spectrum_a_s,
        perron,
        equilibrium,
        bound,
        verdicts,
        notes,
    }
}

impl StabilityReport {
    pub fn verdict(&self, code: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.code == code)
    }
}
