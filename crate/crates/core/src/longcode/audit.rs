//! Soundness machinery: Bob's folded spectra, the Fourier form of the
//! linear-check bias, extraction of a strategy for the repeated constraint
//! game, and the audit report tying the inequalities together.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use super::{Query, TestObservables, TestParams};
use crate::boolfun::{pi2, BoolFun, CubeSubset, NoiseSpec, VarSet};
use crate::error::{bail, Error, Result};
use crate::games::bcs_game;
use crate::obsfourier::{
    conditioned_spectrum, fourier_transform, FamilySource, FoldedConditioned, FoldedTrue, ObsFamily, ObsSpectrum,
    MAX_DENSE_VARS, MAX_SPECTRUM_VARS,
};
use crate::quantum::{self, maximally_entangled, trace_prod_re, CMatrix, GeneralStrategy, Povm, TOL};
use crate::transforms::{repeat, tuple_label, Repeated};

/// Default `δ = 1 − 1/√2`.
pub const DEFAULT_DELTA: f64 = 1.0 - FRAC_1_SQRT_2;

/// Largest Parseval residual accepted by extraction.
pub const PARSEVAL_TOL: f64 = 1e-6;

/// `s' = 1 − (1−δ)²/36`, the test value above which soundness applies.
pub fn soundness_threshold(delta: f64) -> f64 {
    1.0 - (1.0 - delta).powi(2) / 36.0
}

/// Bob's raw answers on queries over one domain, as a family.
struct BobFamily<'a, T: ?Sized> {
    strategy: &'a T,
    domain: VarSet,
}

impl<T: TestObservables + ?Sized> FamilySource for BobFamily<'_, T> {
    fn domain(&self) -> &VarSet {
        &self.domain
    }
    fn dim(&self) -> usize {
        self.strategy.dim()
    }
    fn observable(&self, f: &BoolFun) -> Result<CMatrix> {
        self.strategy.bob(&Query {
            domain: self.domain.clone(),
            carried: f.clone(),
        })
    }
}

/// Spectra of Bob's folded families for one support tuple.
#[derive(Clone, Debug)]
pub struct ContextSpectra {
    pub rounds: Vec<(usize, usize)>,
    pub weight: f64,
    /// `B̂^U_α` of `f ↦ m_f B_{(U, f_U)}`.
    pub u_side: ObsSpectrum,
    /// `B̂^{W,C}_β` of `g ↦ m_{g,C} B_{(W, s_{g,C})}`; all `β` when `W` is
    /// dense, otherwise only `β ⊆ C^{-1}(-1)`.
    pub w_side: Vec<(CubeSubset, CMatrix)>,
    pub constraint: BoolFun,
}

/// Spectra for every support tuple of the test.
pub fn bob_spectra(params: &TestParams, strategy: &impl TestObservables) -> Result<Vec<ContextSpectra>> {
    params
        .round_tuples()?
        .into_iter()
        .map(|(rounds, weight)| {
            let wb = params.blocks(&rounds.iter().map(|r| r.0).collect::<Vec<_>>());
            let ub = params.blocks(&rounds.iter().map(|r| r.1).collect::<Vec<_>>());
            if ub.domain.len() > MAX_DENSE_VARS {
                bail!(Capacity, "U-side spectra need |U| ≤ {MAX_DENSE_VARS}");
            }
            let c = params.constraint_fn(&wb);
            let u_fam = FoldedTrue(BobFamily {
                strategy,
                domain: ub.domain.clone(),
            });
            let u_side = fourier_transform(&ObsFamily::from_source(&u_fam)?)?;
            let w_fam = FoldedConditioned::new(
                BobFamily {
                    strategy,
                    domain: wb.domain.clone(),
                },
                c.clone(),
                params.policy(),
            )?;
            let w_side = if wb.domain.len() <= MAX_DENSE_VARS {
                let spec = fourier_transform(&ObsFamily::from_source(&w_fam)?)?;
                spec.iter().map(|(b, m)| (b, m.clone())).collect()
            } else {
                conditioned_spectrum(&w_fam, &c)?
            };
            Ok(ContextSpectra {
                rounds,
                weight,
                u_side,
                w_side,
                constraint: c,
            })
        })
        .collect()
}

/// `Σ_β Tr(Â_{π₂(β)} B̂_β²)/d · (1−2ε)^{|β|}`.
pub fn exact_bias_fourier(u_side: &ObsSpectrum, w_side: &[(CubeSubset, CMatrix)], epsilon: f64) -> Result<f64> {
    let mut total = 0.0;
    for (beta, b) in w_side {
        if beta.domain().len() > MAX_SPECTRUM_VARS {
            bail!(Capacity, "Fourier form needs |W| ≤ {MAX_SPECTRUM_VARS}");
        }
        let a = u_side.coefficient(&pi2(beta, u_side.domain())?)?;
        total += trace_prod_re(a, &(b * b)) * (1.0 - 2.0 * epsilon).powi(beta.len() as i32);
    }
    Ok(total)
}

/// Strategy for the `u`-fold constraint game read off Bob's spectra.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub strategy: GeneralStrategy,
    /// Largest `‖Σ E − I‖_max` over the extracted POVMs.
    pub povm_residual: f64,
    /// Alice answers with weight above tolerance that violate a constraint.
    pub alice_violations: usize,
}

fn label(parts: Vec<String>) -> String {
    if parts.len() == 1 {
        parts.into_iter().next().expect("one part")
    } else {
        tuple_label(&parts)
    }
}

/// Turns `{(β, E_β)}` into a POVM answering a uniform member of `β`.
fn subset_povm(
    dim: usize,
    outcomes: impl Iterator<Item = (CubeSubset, CMatrix)>,
) -> Result<(BTreeMap<usize, CMatrix>, f64)> {
    let mut effects: BTreeMap<usize, CMatrix> = BTreeMap::new();
    let mut total = CMatrix::zeros(dim);
    for (set, e) in outcomes {
        total = &total + &e;
        if set.is_empty() {
            if e.max_abs() > TOL {
                bail!(InvalidSpectrum, "empty subset carries weight {:.3e}", e.max_abs());
            }
            continue;
        }
        let share = e.scale(1.0 / set.len() as f64);
        for pt in set.members() {
            let slot = effects.entry(pt).or_insert_with(|| CMatrix::zeros(dim));
            *slot = &*slot + &share;
        }
    }
    let residual = (&total - &CMatrix::identity(dim)).max_abs();
    if residual > PARSEVAL_TOL {
        bail!(InvalidSpectrum, "Parseval residual {residual:.3e} exceeds {PARSEVAL_TOL:e}");
    }
    Ok((effects, residual))
}

/// Alice measures `{B̂_β²}` and Bob `{(B̂^U_α)ᵀ²}` on a maximally
/// entangled state; each answers a uniformly random member of the
/// measured subset.
pub fn extract_parallel_strategy(params: &TestParams, spectra: &[ContextSpectra]) -> Result<Extraction> {
    let dim = spectra
        .first()
        .map(|s| s.u_side.dim())
        .ok_or_else(|| Error::Configuration("no spectra to extract from".into()))?;
    let bcs = params.bcs();
    let mut alice = BTreeMap::new();
    let mut bob = BTreeMap::new();
    let mut povm_residual: f64 = 0.0;
    let mut alice_violations = 0;
    for s in spectra {
        let pairs: Vec<usize> = s.rounds.iter().map(|r| r.0).collect();
        let singles: Vec<usize> = s.rounds.iter().map(|r| r.1).collect();
        let qa = label(pairs.iter().map(|&k| bcs.constraint(k).label.clone()).collect());
        if let Entry::Vacant(slot) = alice.entry(qa) {
            let wb = params.blocks(&pairs);
            let (effects, res) = subset_povm(dim, s.w_side.iter().map(|(b, m)| (b.clone(), (m * m).hermitian_part())))?;
            povm_residual = povm_residual.max(res);
            alice_violations += effects
                .iter()
                .filter(|(&pt, e)| e.max_abs() > TOL && !s.constraint.eval(pt).is_minus())
                .count();
            let (labels, ops) = effects.into_iter().map(|(pt, e)| (label(wb.labels(pt)), e)).unzip();
            slot.insert(Povm::new_unchecked(labels, ops)?);
        }
        let qb = label(singles.iter().map(|&k| bcs.constraint(k).label.clone()).collect());
        if let Entry::Vacant(slot) = bob.entry(qb) {
            let ub = params.blocks(&singles);
            let (effects, res) = subset_povm(
                dim,
                s.u_side.iter().map(|(a, m)| (a, (m * m).hermitian_part().transpose())),
            )?;
            povm_residual = povm_residual.max(res);
            let (labels, ops) = effects.into_iter().map(|(pt, e)| (label(ub.labels(pt)), e)).unzip();
            slot.insert(Povm::new_unchecked(labels, ops)?);
        }
    }
    let strategy = GeneralStrategy::new(dim, dim, maximally_entangled(dim), alice, bob)?;
    Ok(Extraction {
        strategy,
        povm_residual,
        alice_violations,
    })
}

/// Value of an extracted strategy on the `u`-fold constraint game.
pub fn extracted_value(params: &TestParams, ex: &Extraction) -> Result<f64> {
    let game = bcs_game(params.bcs(), &params.dist().as_pair_dist())?;
    match repeat(&game, params.u())? {
        Repeated::Explicit(g) => quantum::winning_probability(&g, &ex.strategy),
        Repeated::Implicit(_) => bail!(Capacity, "the repeated constraint game is too large to evaluate exactly"),
    }
}

/// One audited inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    /// Slack in the direction of the inequality; negative when it fails.
    pub margin: f64,
    pub pass: bool,
}

impl Inequality {
    const SLACK: f64 = 1e-12;

    pub fn at_most(lhs: f64, rhs: f64) -> Self {
        Inequality {
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + Self::SLACK,
        }
    }

    pub fn at_least(lhs: f64, rhs: f64) -> Self {
        Inequality {
            lhs,
            rhs,
            margin: lhs - rhs,
            pass: lhs + Self::SLACK >= rhs,
        }
    }
}

/// `|β|^{-1/2} ≥ (4ε)^{1/2}(1−2ε)^{|β|}` for `1 ≤ |β| ≤ 64`, reported at
/// the size with the smallest margin.
pub fn scalar_inequality(epsilon: f64) -> Inequality {
    (1..=64)
        .map(|n| {
            let n = n as f64;
            Inequality::at_least(n.powf(-0.5), (4.0 * epsilon).sqrt() * (1.0 - 2.0 * epsilon).powf(n))
        })
        .min_by(|a, b| a.margin.total_cmp(&b.margin))
        .expect("nonempty range")
}

/// Per-tuple entries of an audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextAudit {
    pub rounds: Vec<(usize, usize)>,
    pub weight: f64,
    pub fourier_value: f64,
    pub direct_value: f64,
}

/// Report of [`soundness_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon: NoiseSpec,
    pub delta: f64,
    pub threshold: f64,
    pub test_value: f64,
    pub test_bias: f64,
    pub linear_bias: f64,
    /// Whether the test value reaches the soundness threshold.
    pub premise: bool,
    /// `|1 − E Tr(B^U B^{W,C} B^{W,C})/d| ≤ √(18(1 − β))` with the full bias.
    pub claim: Inequality,
    /// `√(18(1 − β_lin))` with the linear-check bias.
    pub claim_linear_rhs: f64,
    /// `|E_{W,U,C} Σ_β …| ≥ δ`.
    pub fourier_form: Inequality,
    /// Largest gap between the Fourier form and direct enumeration.
    pub fourier_identity_residual: f64,
    /// Extracted parallel value `≥ 4εδ²`.
    pub extraction: Inequality,
    pub povm_residual: f64,
    pub alice_violations: usize,
    pub scalar: Inequality,
    pub contexts: Vec<ContextAudit>,
}

/// Runs every soundness inequality on a strategy at toy scale.
pub fn soundness_audit(params: &TestParams, strategy: &impl TestObservables, delta: f64) -> Result<AuditReport> {
    let eps = params.epsilon().value();
    let exact = super::exact_test_value(params, strategy)?;
    let spectra = bob_spectra(params, strategy)?;
    let mut contexts = Vec::with_capacity(spectra.len());
    let mut fourier_total = 0.0;
    let mut identity_residual: f64 = 0.0;
    for (s, term) in spectra.iter().zip(&exact.contexts) {
        let fourier_value = exact_bias_fourier(&s.u_side, &s.w_side, eps)?;
        identity_residual = identity_residual.max((fourier_value - term.triple).abs());
        fourier_total += s.weight * fourier_value;
        contexts.push(ContextAudit {
            rounds: s.rounds.clone(),
            weight: s.weight,
            fourier_value,
            direct_value: term.triple,
        });
    }
    let extraction = extract_parallel_strategy(params, &spectra)?;
    let extracted = extracted_value(params, &extraction)?;
    let test_bias = 2.0 * exact.value - 1.0;
    let linear_bias = 2.0 * exact.linear - 1.0;
    let claim_lhs = ((1.0 - exact.triple[0]).powi(2) + exact.triple[1].powi(2)).sqrt();
    let threshold = soundness_threshold(delta);
    Ok(AuditReport {
        epsilon: params.epsilon(),
        delta,
        threshold,
        test_value: exact.value,
        test_bias,
        linear_bias,
        premise: exact.value >= threshold,
        claim: Inequality::at_most(claim_lhs, (18.0 * (1.0 - test_bias)).max(0.0).sqrt()),
        claim_linear_rhs: (18.0 * (1.0 - linear_bias)).max(0.0).sqrt(),
        fourier_form: Inequality::at_least(fourier_total.abs(), delta),
        fourier_identity_residual: identity_residual,
        extraction: Inequality::at_least(extracted, 4.0 * eps * delta * delta),
        povm_residual: extraction.povm_residual,
        alice_violations: extraction.alice_violations,
        scalar: scalar_inequality(eps),
        contexts,
    })
}
