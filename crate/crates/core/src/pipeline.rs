//! End-to-end compilation of a synchronous game into its long-code test.

use serde::{Deserialize, Serialize};

use crate::boolfun::{NoiseSpec, SectionPolicy};
use crate::error::{bail, Result};
use crate::games::{is_synchronous, projected_bcs_unchecked, ExplicitGame, ProjectedBcs};
use crate::longcode::{
    as_implicit_game, completeness_strategy, lift_to_bcs, sample_round, soundness_threshold, CompletenessStrategy,
    LongCodeTest, TestParams, DEFAULT_DELTA,
};
use crate::quantum::SyncStrategy;
use crate::seeding::round_rng;
use crate::transforms::{ensure_nonempty_answers, RepetitionParams};

/// Knobs of [`pipeline_compile`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub epsilon: NoiseSpec,
    pub u: usize,
    /// Answer length bound, in bits.
    pub h: usize,
    pub repetition: RepetitionParams,
    pub delta: f64,
    pub seed: u64,
    #[serde(default)]
    pub policy: SectionPolicy,
    /// Enforce `ε < 1/72`.
    #[serde(default)]
    pub paper_mode: bool,
}

impl PipelineParams {
    pub fn new(epsilon: NoiseSpec, u: usize, h: usize, seed: u64) -> Result<Self> {
        let p = PipelineParams {
            epsilon,
            u,
            h,
            repetition: RepetitionParams::new(u.max(1), 1.0, 3.0)?,
            delta: DEFAULT_DELTA,
            seed,
            policy: SectionPolicy::default(),
            paper_mode: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn paper(epsilon: NoiseSpec, u: usize, h: usize, seed: u64) -> Result<Self> {
        let p = PipelineParams {
            paper_mode: true,
            ..PipelineParams::new(epsilon, u, h, seed)?
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u == 0 || self.h == 0 {
            bail!(Configuration, "u and h must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!(Configuration, "δ = {} outside (0, 1)", self.delta);
        }
        let eps = self.epsilon;
        if self.paper_mode && 72 * u128::from(eps.numer()) >= u128::from(eps.denom()) {
            bail!(Configuration, "paper mode needs ε < 1/72, got {eps}");
        }
        Ok(())
    }

    /// `s' = 1 − (1 − δ)²/36`.
    pub fn threshold(&self) -> f64 {
        soundness_threshold(self.delta)
    }

    /// `"71/72"` for the default `δ`, where the threshold is rational.
    pub fn threshold_label(&self) -> Option<&'static str> {
        (self.delta == DEFAULT_DELTA).then_some("71/72")
    }
}

/// Every stage of a compiled game.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub source: ExplicitGame,
    /// The source after dead pairs are repaired.
    pub repaired: ExplicitGame,
    pub projected: ProjectedBcs,
    pub test: LongCodeTest,
}

impl Compiled {
    pub fn params(&self) -> &TestParams {
        self.test.params()
    }

    /// Pass names in application order.
    pub fn passes(&self) -> Vec<String> {
        let mut p = self.repaired.provenance().to_vec();
        p.push(format!("projected-bcs:h={}", self.projected.h));
        p.push(format!("long-code:u={}", self.params().u()));
        p
    }

    /// The honest test strategy induced by a perfect oracularizable
    /// strategy for the source game.
    pub fn honest_strategy(&self, s: &SyncStrategy) -> Result<CompletenessStrategy> {
        if !self.repaired.same_game(&self.source) {
            bail!(Precondition, "the source game needed repair; strategies for it do not cover the repaired game");
        }
        let lifted = lift_to_bcs(&self.projected, &self.repaired, s)?;
        completeness_strategy(&lifted, self.params())
    }
}

/// `G → G' → G^proj → long-code test`.
pub fn pipeline_compile(g: &ExplicitGame, params: &PipelineParams) -> Result<Compiled> {
    params.validate()?;
    if !is_synchronous(g) {
        bail!(Domain, "pipeline input must be a synchronous game");
    }
    let repaired = ensure_nonempty_answers(g)?;
    let projected = projected_bcs_unchecked(&repaired, params.h)?;
    let test_params = TestParams::from_projected(&projected, params.epsilon, params.u, params.policy, params.seed)?;
    Ok(Compiled {
        source: g.clone(),
        repaired,
        projected,
        test: as_implicit_game(test_params),
    })
}

/// JSON byte size of both questions of round 0 under `seed`.
pub fn question_payload_bytes(test: &LongCodeTest, seed: u64) -> Result<usize> {
    let (a, b) = sample_round(test.params(), &mut round_rng(seed, 0))?;
    Ok(serde_json::to_vec(&a)?.len() + serde_json::to_vec(&b)?.len())
}
