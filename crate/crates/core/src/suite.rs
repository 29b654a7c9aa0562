//! Named verification suites driven by a TOML config, producing a
//! self-contained JSON report.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boolfun::{enumerate_functions, BoolFun, NoiseSpec, Sign, VarSet};
use crate::error::{Error, Result};
use crate::fixtures::{fixture, magic_square_dist, magic_square_lcs, magic_square_lcs_game, FixtureName};
use crate::games::{bcs_game, lcs_bias, lcs_game, Lcs};
use crate::longcode::{
    exact_test_value, soundness_audit, AuditReport, Inequality, RandomObservables, UniformResponder, DEFAULT_DELTA,
};
use crate::obsfourier::{condition, fold_true, fourier_transform, inverse_transform, parseval_residual, ObsFamily};
use crate::pipeline::{pipeline_compile, PipelineParams};
use crate::quantum::{random_observable, random_pvm, triple_trace_gap, winning_probability, SyncStrategy};
use crate::seeding::derive_seed;
use crate::transforms::{ensure_nonempty_answers, repeat, Repeated};
use crate::value::{classical_value, monte_carlo_value, seesaw_sync, ValueEstimate};

pub fn version() -> String {
    format!("longcode {}", env!("CARGO_PKG_VERSION"))
}

fn default_epsilon() -> String {
    "1/10".into()
}

fn default_trials() -> usize {
    100
}

fn one() -> usize {
    1
}

/// One suite entry of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SuiteSpec {
    /// Inversion, Parseval, folding and conditioning on random families.
    Fourier {
        #[serde(default = "default_trials")]
        trials: usize,
    },
    /// The three-observable trace inequality on random sextuples.
    Trace {
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default)]
        dim: Option<usize>,
    },
    /// Direct bias against the correlation formula on a 3-equation system.
    LcsBias {
        #[serde(default = "default_trials")]
        trials: usize,
    },
    /// Exact classical values of the reference games.
    Classical,
    /// The magic-square operator solution through every transformation.
    Perfect,
    /// Honest acceptance of the compiled test.
    Completeness {
        fixture: FixtureName,
        #[serde(default = "default_epsilon")]
        epsilon: String,
        #[serde(default = "one")]
        u: usize,
        #[serde(default)]
        samples: Option<u64>,
        #[serde(default)]
        exact: bool,
    },
    /// Every soundness inequality on the honest toy strategy.
    Soundness {
        #[serde(default = "default_epsilon")]
        epsilon: String,
    },
    /// Audit of random observables; reports without asserting.
    CorruptedAudit {
        #[serde(default = "default_epsilon")]
        epsilon: String,
        #[serde(default)]
        dim: Option<usize>,
    },
    /// Uniformly random answers on the compiled magic-square test.
    Uniform {
        samples: u64,
    },
    /// See-saw lower bound for a fixture.
    Seesaw {
        fixture: FixtureName,
        dim: usize,
        #[serde(default)]
        iterations: Option<usize>,
    },
}

impl SuiteSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SuiteSpec::Fourier { .. } => "fourier",
            SuiteSpec::Trace { .. } => "trace",
            SuiteSpec::LcsBias { .. } => "lcs_bias",
            SuiteSpec::Classical => "classical",
            SuiteSpec::Perfect => "perfect",
            SuiteSpec::Completeness { .. } => "completeness",
            SuiteSpec::Soundness { .. } => "soundness",
            SuiteSpec::CorruptedAudit { .. } => "corrupted_audit",
            SuiteSpec::Uniform { .. } => "uniform",
            SuiteSpec::Seesaw { .. } => "seesaw",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "suite", default)]
    pub suites: Vec<SuiteSpec>,
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("malformed suite config: {e}")))
    }
}

/// A named inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(flatten)]
    pub inequality: Inequality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub spec: SuiteSpec,
    pub seed: u64,
    /// False when any asserted check fails.
    pub passed: bool,
    pub checks: Vec<Check>,
    pub estimates: BTreeMap<String, ValueEstimate>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub audit: Option<AuditReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: SuiteConfig,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
}

#[derive(Default)]
struct Collector {
    checks: Vec<Check>,
    estimates: BTreeMap<String, ValueEstimate>,
    audit: Option<AuditReport>,
    asserting: bool,
}

impl Collector {
    fn at_most(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, Inequality::at_most(lhs, rhs));
    }

    fn at_least(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.push(name, Inequality::at_least(lhs, rhs));
    }

    fn push(&mut self, name: &str, inequality: Inequality) {
        self.checks.push(Check {
            name: name.into(),
            inequality,
        });
    }

    fn finish(self, spec: SuiteSpec, seed: u64) -> SuiteReport {
        let passed = !self.asserting || self.checks.iter().all(|c| c.inequality.pass);
        SuiteReport {
            spec,
            seed,
            passed,
            checks: self.checks,
            estimates: self.estimates,
            audit: self.audit,
        }
    }
}

pub fn run_suite(config: &SuiteConfig) -> Result<RunReport> {
    let suites = config
        .suites
        .iter()
        .enumerate()
        .map(|(i, spec)| run_one(spec, derive_seed(config.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let passed = suites.iter().all(|s| s.passed);
    Ok(RunReport {
        version: version(),
        config: config.clone(),
        suites,
        passed,
    })
}

fn epsilon(text: &str) -> Result<NoiseSpec> {
    text.parse()
}

fn run_one(spec: &SuiteSpec, seed: u64) -> Result<SuiteReport> {
    log::info!("running suite {}", spec.name());
    let mut out = Collector {
        asserting: true,
        ..Collector::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        SuiteSpec::Fourier { trials } => fourier(*trials, &mut rng, &mut out)?,
        SuiteSpec::Trace { trials, dim } => trace(*trials, dim.unwrap_or(4), &mut rng, &mut out)?,
        SuiteSpec::LcsBias { trials } => bias(*trials, &mut rng, &mut out)?,
        SuiteSpec::Classical => classical(&mut out)?,
        SuiteSpec::Perfect => perfect(&mut out)?,
        SuiteSpec::Completeness {
            fixture: name,
            epsilon: eps,
            u,
            samples,
            exact,
        } => {
            let f = fixture(*name)?;
            let eps = epsilon(eps)?;
            let compiled = pipeline_compile(&f.game, &PipelineParams::new(eps, *u, answer_bits(*name), seed)?)?;
            let honest = compiled.honest_strategy(&f.strategy)?;
            let target = 1.0 - eps.value();
            if *exact {
                let v = exact_test_value(compiled.params(), &honest)?.value;
                out.estimates.insert("exact".into(), ValueEstimate::exact(v));
                out.at_least("exact value ≥ 1 − ε", v, target - 1e-12);
            }
            if let Some(n) = samples {
                let est = monte_carlo_value(&compiled.test, &honest, *n, seed)?;
                out.at_least("sampled value ≥ 1 − ε − 3σ", est.point, target - est.radius);
                out.estimates.insert("monte_carlo".into(), est);
            }
        }
        SuiteSpec::Soundness { epsilon: eps } => {
            let toy = fixture(FixtureName::ToyParity)?;
            let compiled = pipeline_compile(&toy.game, &PipelineParams::new(epsilon(eps)?, 1, 1, seed)?)?;
            let honest = compiled.honest_strategy(&toy.strategy)?;
            let r = soundness_audit(compiled.params(), &honest, DEFAULT_DELTA)?;
            out.at_least("test value ≥ s'", r.test_value, r.threshold);
            out.push("claim", r.claim);
            out.push("fourier form ≥ δ", r.fourier_form);
            out.push("extracted value ≥ 4εδ²", r.extraction);
            out.push("scalar inequality", r.scalar);
            out.at_most("fourier identity residual", r.fourier_identity_residual, 1e-10);
            out.at_most("extraction POVM residual", r.povm_residual, 1e-8);
            out.at_most("extracted Alice violations", r.alice_violations as f64, 0.0);
            out.audit = Some(r);
        }
        SuiteSpec::CorruptedAudit { epsilon: eps, dim } => {
            let toy = fixture(FixtureName::ToyParity)?;
            let compiled = pipeline_compile(&toy.game, &PipelineParams::new(epsilon(eps)?, 1, 1, seed)?)?;
            let corrupt = RandomObservables {
                dim: dim.unwrap_or(2),
                seed,
            };
            let r = soundness_audit(compiled.params(), &corrupt, DEFAULT_DELTA)?;
            out.push("claim", r.claim);
            out.push("fourier form ≥ δ", r.fourier_form);
            out.push("extracted value ≥ 4εδ²", r.extraction);
            out.audit = Some(r);
            out.asserting = false;
        }
        SuiteSpec::Uniform { samples } => {
            let ms = fixture(FixtureName::MagicSquare)?;
            let compiled = pipeline_compile(&ms.game, &PipelineParams::new(epsilon("1/10")?, 1, 3, seed)?)?;
            let est = monte_carlo_value(&compiled.test, &UniformResponder, *samples, seed)?;
            out.at_most("|value − 1/4| within 3σ", (est.point - 0.25).abs(), est.radius);
            out.estimates.insert("monte_carlo".into(), est);
        }
        SuiteSpec::Seesaw {
            fixture: name,
            dim,
            iterations,
        } => {
            let f = fixture(*name)?;
            let (s, est) = seesaw_sync(&f.game, *dim, iterations.unwrap_or(200), seed)?;
            let again = winning_probability(&f.game, &s)?;
            out.at_most("re-evaluation gap", (again - est.point).abs(), 1e-10);
            out.estimates.insert("seesaw".into(), est);
        }
    }
    Ok(out.finish(spec.clone(), seed))
}

fn answer_bits(name: FixtureName) -> usize {
    match name {
        FixtureName::MagicSquare => 3,
        FixtureName::Chsh | FixtureName::ToyParity => 1,
    }
}

fn domain(n: usize) -> Result<VarSet> {
    VarSet::new((0..n).map(|i| format!("v{i}")))
}

fn fourier(trials: usize, rng: &mut ChaCha8Rng, out: &mut Collector) -> Result<()> {
    let (mut inversion, mut parseval, mut even, mut antisym, mut unsat) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for t in 0..trials {
        let (n, d) = (1 + t % 2, 2 << ((t / 2) % 2));
        let u = domain(n)?;
        let fam = ObsFamily::from_fn(u.clone(), |_| random_observable(d, rng))?;
        let spec = fourier_transform(&fam)?;
        parseval = parseval.max(parseval_residual(&spec));
        for f in enumerate_functions(&u)? {
            let back = inverse_transform(&spec, &f)?;
            inversion = inversion.max((&back - fam.get(&f)?.matrix()).max_abs());
        }
        let folded = fold_true(&fam)?;
        for (alpha, c) in fourier_transform(&folded)?.iter() {
            if alpha.len() % 2 == 0 {
                even = even.max(c.norm());
            }
        }
        for f in enumerate_functions(&u)? {
            let pair = folded.get(&f)?.matrix() + folded.get(&-&f)?.matrix();
            antisym = antisym.max(pair.max_abs());
        }
        let c = loop {
            let c = BoolFun::random(u.clone(), rng);
            if !c.is_constant(Sign::Plus) {
                break c;
            }
        };
        for (alpha, m) in fourier_transform(&condition(&fam, &c)?)?.iter() {
            if alpha.members().iter().any(|&x| c.eval(x) == Sign::Plus) {
                unsat = unsat.max(m.norm());
            }
        }
    }
    out.at_most("inversion residual", inversion, 1e-10);
    out.at_most("parseval residual", parseval, 1e-10);
    out.at_most("folded even-size coefficients", even, 1e-10);
    out.at_most("folded antisymmetry", antisym, 1e-12);
    out.at_most("conditioned coefficients off C", unsat, 1e-10);
    Ok(())
}

fn trace(trials: usize, d: usize, rng: &mut ChaCha8Rng, out: &mut Collector) -> Result<()> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let obs: Vec<_> = (0..6).map(|_| random_observable(d, rng)).collect();
        let (lhs, rhs) = triple_trace_gap([&obs[0], &obs[1], &obs[2]], [&obs[3], &obs[4], &obs[5]])?;
        worst = worst.max(lhs - rhs);
    }
    out.at_most("max(lhs − rhs)", worst, 1e-9);
    let ys: Vec<_> = (0..3).map(|_| random_observable(d, rng)).collect();
    let (lhs, rhs) = triple_trace_gap([&ys[0], &ys[1], &ys[2]], [&ys[0], &ys[1], &ys[2]])?;
    out.at_most("equality case", lhs.max(rhs), 1e-6);
    Ok(())
}

/// `x·y = +1`, `y·z = +1`, `x·z = -1`: unsatisfiable, three variables.
pub fn triangle_lcs() -> Result<Lcs> {
    let names = ["x", "y", "z"].map(String::from).to_vec();
    let eq = |a: &str, b: &str, s: Sign| -> Result<(String, VarSet, Sign)> { Ok((format!("{a}{b}"), VarSet::new([a, b])?, s)) };
    Lcs::new(
        names,
        vec![eq("x", "y", Sign::Plus)?, eq("y", "z", Sign::Plus)?, eq("x", "z", Sign::Minus)?],
    )
}

fn bias(trials: usize, rng: &mut ChaCha8Rng, out: &mut Collector) -> Result<()> {
    let lcs = triangle_lcs()?;
    let dist = (0..3).map(|i| (i, crate::games::ratio(1, 3))).collect();
    let game = lcs_game(&lcs, &dist)?;
    let mut worst = 0f64;
    for t in 0..trials {
        let d = 1 << (1 + t % 2);
        let pvms = (0..game.num_questions())
            .map(|x| (game.question(x).to_string(), random_pvm(d, game.answers(x), rng)))
            .collect();
        let s = SyncStrategy::new(d, pvms)?;
        let (direct, formula) = lcs_bias(&lcs, &dist, &s)?;
        worst = worst.max((direct - formula).abs());
    }
    out.at_most("|direct − formula|", worst, 1e-10);
    Ok(())
}

fn classical(out: &mut Collector) -> Result<()> {
    let chsh = fixture(FixtureName::Chsh)?.game;
    let Repeated::Explicit(doubled) = repeat(&chsh, 2)? else {
        return Err(Error::Capacity("CHSH⊗2 did not materialize".into()));
    };
    for (name, game, expect) in [
        ("chsh", chsh, 0.75),
        ("chsh⊗2", doubled, 0.625),
        ("magic square constraint-variable", magic_square_lcs_game()?, 17.0 / 18.0),
    ] {
        let est = classical_value(&game)?;
        out.at_most(&format!("{name}: |value − reference|"), (est.point - expect).abs(), 0.0);
        out.estimates.insert(name.into(), est);
    }
    Ok(())
}

fn perfect(out: &mut Collector) -> Result<()> {
    let ms = fixture(FixtureName::MagicSquare)?;
    let g = &ms.game;
    let v = winning_probability(g, &ms.strategy)?;
    out.at_least("strategy value", v, 1.0 - 1e-9);
    let pairs = g.dist().keys().map(|&(x, y)| (g.question(x), g.question(y)));
    out.at_most("commutators on supported pairs", ms.strategy.commutator_residual(pairs)?, 1e-8);
    let repaired = ensure_nonempty_answers(g)?;
    out.at_most("nonempty repair changed the game", f64::from(u8::from(!repaired.same_game(g))), 0.0);
    let pb = crate::games::projected_bcs(g, 3)?;
    let lifted = crate::longcode::lift_to_bcs(&pb, g, &ms.strategy)?;
    let proj = bcs_game(&pb.bcs, &pb.dist.as_pair_dist())?;
    out.at_least("lifted value on the projected game", winning_probability(&proj, &lifted)?, 1.0 - 1e-8);
    let (direct, formula) = lcs_bias(&magic_square_lcs()?, &magic_square_dist(), &ms.strategy)?;
    out.at_most("LCS bias formula on the operator solution", (direct - formula).abs(), 1e-10);
    Ok(())
}
