//! The long-code test over a projected constraint system: sampler,
//! decider, linear-system view and transcripts.
//!
//! Round `l` of a `u`-fold test renames every variable `v` of its
//! constraints to `r<l>.v`, so the domains of different rounds are
//! disjoint.

mod audit;
mod strategies;

pub use audit::*;
pub use strategies::*;

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boolfun::{
    sample_noise, section, section_conditioned, BoolFun, NoiseSpec, Restriction, SectionPolicy, Sign, VarSet,
    MAX_CUBE_VARS,
};
use crate::error::{bail, Error, Result};
use crate::games::{format_rational, parse_rational, Bcs, ImplicitGame, ProjSupportDist, ProjectedBcs, Responder};
use crate::seeding::{derive_seed, round_rng};

/// `u` support entries and their joint probability.
pub type RoundTuple = (Vec<(usize, usize)>, f64);

/// Parameters of one long-code test.
#[derive(Clone, Debug)]
pub struct TestParams {
    epsilon: NoiseSpec,
    u: usize,
    bcs: Arc<Bcs>,
    dist: ProjSupportDist,
    policy: SectionPolicy,
    seed: u64,
    indicators: Vec<BoolFun>,
    by_context: HashMap<Vec<String>, usize>,
}

impl TestParams {
    pub fn new(
        bcs: Bcs,
        dist: ProjSupportDist,
        epsilon: NoiseSpec,
        u: usize,
        policy: SectionPolicy,
        seed: u64,
    ) -> Result<Self> {
        if u == 0 {
            bail!(Configuration, "repetition count must be at least 1");
        }
        if let Some(c) = bcs.constraints().iter().find(|c| c.satisfying.is_empty()) {
            bail!(EmptyConstraint, "constraint {:?} has no satisfying assignment", c.label);
        }
        let mut widest = 0;
        for &(k, kp, _) in dist.entries() {
            if k >= bcs.len() || kp >= bcs.len() {
                bail!(Domain, "distribution mentions an unknown constraint");
            }
            let (wide, narrow) = (&bcs.constraint(k).context, &bcs.constraint(kp).context);
            if !narrow.is_subset_of(wide) {
                bail!(
                    Domain,
                    "context of {:?} is not inside {:?}",
                    bcs.constraint(kp).label,
                    bcs.constraint(k).label
                );
            }
            widest = widest.max(wide.len());
        }
        if u.saturating_mul(widest) > MAX_CUBE_VARS {
            bail!(Capacity, "u·|context| = {} exceeds {MAX_CUBE_VARS}", u * widest);
        }
        let indicators = bcs.constraints().iter().map(|c| c.satisfying.indicator()).collect();
        let mut by_context = HashMap::new();
        for (k, c) in bcs.constraints().iter().enumerate() {
            by_context.entry(c.context.names().to_vec()).or_insert(k);
        }
        Ok(TestParams {
            epsilon,
            u,
            bcs: Arc::new(bcs),
            dist,
            policy,
            seed,
            indicators,
            by_context,
        })
    }

    pub fn from_projected(pb: &ProjectedBcs, epsilon: NoiseSpec, u: usize, policy: SectionPolicy, seed: u64) -> Result<Self> {
        TestParams::new(pb.bcs.clone(), pb.dist.clone(), epsilon, u, policy, seed)
    }

    pub fn epsilon(&self) -> NoiseSpec {
        self.epsilon
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn bcs(&self) -> &Bcs {
        &self.bcs
    }

    pub fn dist(&self) -> &ProjSupportDist {
        &self.dist
    }

    pub fn policy(&self) -> SectionPolicy {
        self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epsilon(mut self, epsilon: NoiseSpec) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Layout of the round domains for a tuple of constraints.
    pub(crate) fn blocks(&self, constraints: &[usize]) -> Blocks {
        let mut offsets = Vec::with_capacity(constraints.len());
        let mut parts = Vec::with_capacity(constraints.len());
        let mut off = 0;
        for (l, &k) in constraints.iter().enumerate() {
            let ctx = &self.bcs.constraint(k).context;
            offsets.push(off);
            off += ctx.len();
            parts.push(ctx.prefixed(&format!("r{l}.")));
        }
        let domain = VarSet::disjoint_union(parts.iter()).expect("round prefixes are distinct");
        Blocks {
            constraints: constraints.to_vec(),
            offsets,
            domain,
        }
    }

    /// Recovers the constraint of each round from a query domain.
    pub fn resolve(&self, domain: &VarSet) -> Result<Blocks> {
        let mut groups: Vec<Vec<String>> = Vec::new();
        for name in domain.names() {
            let (round, rest) = name
                .strip_prefix('r')
                .and_then(|s| s.split_once('.'))
                .and_then(|(l, rest)| l.parse::<usize>().ok().map(|l| (l, rest)))
                .ok_or_else(|| Error::Protocol(format!("variable {name:?} carries no round prefix")))?;
            if round == groups.len() {
                groups.push(Vec::new());
            } else if round + 1 != groups.len() {
                bail!(Protocol, "rounds of {name:?} are out of order");
            }
            groups[round].push(rest.to_string());
        }
        let constraints: Vec<usize> = groups
            .iter()
            .map(|g| {
                self.by_context
                    .get(g)
                    .copied()
                    .ok_or_else(|| Error::Protocol(format!("no constraint has context {g:?}")))
            })
            .collect::<Result<_>>()?;
        if constraints.len() != self.u {
            bail!(Protocol, "domain spans {} rounds, expected {}", constraints.len(), self.u);
        }
        Ok(self.blocks(&constraints))
    }

    /// `C = Π_l C_{k_l}` on the joint domain (`-1` where every round is
    /// satisfied).
    pub(crate) fn constraint_fn(&self, b: &Blocks) -> BoolFun {
        BoolFun::from_fn(b.domain.clone(), |y| {
            let ok = (0..b.constraints.len()).all(|l| self.indicators[b.constraints[l]].eval(b.part(l, y)).is_minus());
            Sign::from_bit(ok)
        })
    }

    /// Every tuple of `u` support entries with its probability.
    pub fn round_tuples(&self) -> Result<Vec<RoundTuple>> {
        let entries = self.dist.entries();
        let count = entries
            .len()
            .checked_pow(self.u as u32)
            .filter(|&c| c <= 100_000)
            .ok_or_else(|| Error::Capacity("too many round tuples to enumerate".into()))?;
        Ok((0..count)
            .map(|mut k| {
                let mut rounds = Vec::with_capacity(self.u);
                let mut p = 1.0;
                for _ in 0..self.u {
                    let (a, b, w) = &entries[k % entries.len()];
                    rounds.push((*a, *b));
                    p *= w.to_f64().unwrap_or(0.0);
                    k /= entries.len();
                }
                (rounds, p)
            })
            .collect())
    }
}

/// Round-by-round layout of a joint domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub constraints: Vec<usize>,
    pub offsets: Vec<usize>,
    pub domain: VarSet,
}

impl Blocks {
    fn len_of(&self, l: usize) -> usize {
        self.offsets.get(l + 1).copied().unwrap_or(self.domain.len()) - self.offsets[l]
    }

    /// Round `l`'s coordinates of the joint point `y`.
    pub fn part(&self, l: usize, y: usize) -> usize {
        (y >> self.offsets[l]) & ((1usize << self.len_of(l)) - 1)
    }

    /// Joint point from per-round points.
    pub fn join(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.offsets).fold(0, |acc, (&p, &o)| acc | (p << o))
    }

    /// Per-round bit-string labels of a joint point.
    pub fn labels(&self, y: usize) -> Vec<String> {
        (0..self.constraints.len())
            .map(|l| crate::boolfun::point_label(self.part(l, y), self.len_of(l)))
            .collect()
    }
}

/// Which of Alice's three answers a query matches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    F,
    G,
    GPrime,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::F, Slot::G, Slot::GPrime];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// What Bob sees: a domain and a function in canonical section form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub domain: VarSet,
    pub carried: BoolFun,
}

impl Query {
    /// Content address of the query's variable in the linear-system view.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for n in self.domain.names() {
            h.update(n.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        h.update(self.carried.to_hex().as_bytes());
        let digest = h.finalize();
        let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
        format!("z{hex}")
    }
}

#[derive(Serialize, Deserialize)]
struct QueryJson {
    domain: VarSet,
    carried: String,
}

impl Serialize for Query {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QueryJson {
            domain: self.domain.clone(),
            carried: self.carried.to_hex(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Query {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = QueryJson::deserialize(d)?;
        let carried = BoolFun::from_hex(raw.domain.clone(), &raw.carried).map_err(serde::de::Error::custom)?;
        Ok(Query {
            domain: raw.domain,
            carried,
        })
    }
}

/// Bob's question, tagged with the slot it checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobQuestion {
    pub slot: Slot,
    pub query: Query,
}

/// Alice's question `(W, U, C, f, g, g')` and the sampled rounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AliceQuestion {
    pub w: VarSet,
    pub u: VarSet,
    pub c: BoolFun,
    pub f: BoolFun,
    pub g: BoolFun,
    pub gprime: BoolFun,
    /// `(pair constraint, single constraint)` of each round.
    pub rounds: Vec<(usize, usize)>,
    noise: Option<BoolFun>,
}

impl AliceQuestion {
    /// The noise `μ` with `g' = f·g·μ`, when known.
    pub fn noise(&self) -> Option<&BoolFun> {
        self.noise.as_ref()
    }

    /// The three queries `(U, f_U)`, `(W, s_{g,C})`, `(W, s_{g',C})`, and
    /// `b_ω = m_f m_{g,C} m_{g',C}`.
    pub fn queries(&self, policy: SectionPolicy) -> Result<([Query; 3], Sign)> {
        let (fu, mf) = section(&self.f);
        let (sg, mg) = section_conditioned(&self.g, &self.c, policy)?;
        let (sgp, mgp) = section_conditioned(&self.gprime, &self.c, policy)?;
        let q = |domain: &VarSet, carried| Query {
            domain: domain.clone(),
            carried,
        };
        Ok(([q(&self.u, fu), q(&self.w, sg), q(&self.w, sgp)], mf * mg * mgp))
    }

    pub(crate) fn restriction(&self) -> Result<Restriction> {
        self.w.restriction_to(&self.u)
    }
}

#[derive(Serialize, Deserialize)]
struct AliceQuestionJson {
    w: VarSet,
    u: VarSet,
    c: String,
    f: String,
    g: String,
    gprime: String,
    rounds: Vec<(usize, usize)>,
}

impl Serialize for AliceQuestion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AliceQuestionJson {
            w: self.w.clone(),
            u: self.u.clone(),
            c: self.c.to_hex(),
            f: self.f.to_hex(),
            g: self.g.to_hex(),
            gprime: self.gprime.to_hex(),
            rounds: self.rounds.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AliceQuestion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = AliceQuestionJson::deserialize(d)?;
        if !raw.u.is_subset_of(&raw.w) {
            return Err(D::Error::custom("U is not a subset of W"));
        }
        let on_w = |hex: &str| BoolFun::from_hex(raw.w.clone(), hex).map_err(D::Error::custom);
        let c = on_w(&raw.c)?;
        if c.is_constant(Sign::Plus) {
            return Err(D::Error::custom("constraint C is unsatisfiable"));
        }
        Ok(AliceQuestion {
            f: BoolFun::from_hex(raw.u.clone(), &raw.f).map_err(D::Error::custom)?,
            g: on_w(&raw.g)?,
            gprime: on_w(&raw.gprime)?,
            c,
            w: raw.w,
            u: raw.u,
            rounds: raw.rounds,
            noise: None,
        })
    }
}

/// Outcome of one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundVerdict {
    pub rhs: Sign,
    pub linear_ok: bool,
    pub consistency_ok: bool,
}

impl RoundVerdict {
    pub fn accepted(&self) -> bool {
        self.linear_ok && self.consistency_ok
    }
}

/// Draws one round: `u` support entries, `f`, `g`, the noise `μ`, and
/// Bob's slot.
pub fn sample_round<R: Rng + ?Sized>(params: &TestParams, rng: &mut R) -> Result<(AliceQuestion, BobQuestion)> {
    let rounds: Vec<(usize, usize)> = (0..params.u).map(|_| params.dist.sample(rng)).collect();
    let wb = params.blocks(&rounds.iter().map(|r| r.0).collect::<Vec<_>>());
    let ub = params.blocks(&rounds.iter().map(|r| r.1).collect::<Vec<_>>());
    let c = params.constraint_fn(&wb);
    let restriction = wb.domain.restriction_to(&ub.domain)?;
    let f = BoolFun::random(ub.domain.clone(), rng);
    let g = BoolFun::random(wb.domain.clone(), rng);
    let mu = sample_noise(&params.epsilon, &wb.domain, rng);
    let gprime = f.lift_with(&wb.domain, &restriction).times(&g)?.times(&mu)?;
    let slot = Slot::ALL[rng.random_range(0..3usize)];
    let alice = AliceQuestion {
        w: wb.domain,
        u: ub.domain,
        c,
        f,
        g,
        gprime,
        rounds,
        noise: Some(mu),
    };
    let (queries, _) = alice.queries(params.policy)?;
    let query = queries[slot.index()].clone();
    Ok((alice, BobQuestion { slot, query }))
}

/// Accept iff `a₁a₂a₃ = b_ω` and Alice's answer in Bob's slot equals `b`.
pub fn decide(
    params: &TestParams,
    alice_q: &AliceQuestion,
    bob_q: &BobQuestion,
    a: [Sign; 3],
    b: Sign,
) -> Result<RoundVerdict> {
    let (queries, rhs) = alice_q.queries(params.policy)?;
    if queries[bob_q.slot.index()] != bob_q.query {
        bail!(Protocol, "Bob's query is not the {:?} query of Alice's question", bob_q.slot);
    }
    Ok(RoundVerdict {
        rhs,
        linear_ok: a[0] * a[1] * a[2] == rhs,
        consistency_ok: a[bob_q.slot.index()] == b,
    })
}

/// The test as an implicit game: three answer bits for Alice, one for Bob.
#[derive(Clone, Debug)]
pub struct LongCodeTest {
    params: Arc<TestParams>,
}

pub fn as_implicit_game(params: TestParams) -> LongCodeTest {
    LongCodeTest {
        params: Arc::new(params),
    }
}

impl LongCodeTest {
    pub fn params(&self) -> &TestParams {
        &self.params
    }
}

impl ImplicitGame for LongCodeTest {
    type AliceQ = AliceQuestion;
    type BobQ = BobQuestion;
    type AliceA = [Sign; 3];
    type BobA = Sign;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(AliceQuestion, BobQuestion)> {
        sample_round(&self.params, rng)
    }

    fn decide(&self, qa: &AliceQuestion, qb: &BobQuestion, a: &[Sign; 3], b: &Sign) -> Result<bool> {
        Ok(decide(&self.params, qa, qb, *a, *b)?.accepted())
    }

    fn answer_arity(&self) -> (usize, usize) {
        (3, 1)
    }
}

/// One parity equation of the linear-system view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub vars: [String; 3],
    pub rhs: Sign,
    /// Some variable occurs twice.
    pub degenerate: bool,
}

/// The test read as a sampled system of 3-variable parity equations over
/// content-addressed variables.
#[derive(Clone, Debug)]
pub struct LcsView {
    params: Arc<TestParams>,
}

pub fn as_lcs_view(params: TestParams) -> LcsView {
    LcsView {
        params: Arc::new(params),
    }
}

impl LcsView {
    /// The equation of round `index` under the parameter seed.
    pub fn equation(&self, index: u64) -> Result<Equation> {
        let mut rng = round_rng(self.params.seed, index);
        let (alice, _) = sample_round(&self.params, &mut rng)?;
        let (queries, rhs) = alice.queries(self.params.policy)?;
        let vars = queries.map(|q| q.id());
        let degenerate = vars[0] == vars[1] || vars[1] == vars[2] || vars[0] == vars[2];
        Ok(Equation { vars, rhs, degenerate })
    }
}

/// Both players' answers of a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answers {
    pub alice: [Sign; 3],
    pub bob: Sign,
}

/// One line of a JSON-lines transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub alice_q: AliceQuestion,
    pub bob_q: BobQuestion,
    pub answers: Answers,
    pub verdict: RoundVerdict,
    pub seed: u64,
}

impl TranscriptRecord {
    pub fn parse(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    /// Re-decides the round and compares with the recorded verdict.
    pub fn verify(&self, params: &TestParams) -> Result<bool> {
        let v = decide(params, &self.alice_q, &self.bob_q, self.answers.alice, self.answers.bob)?;
        Ok(v == self.verdict)
    }
}

/// Plays `rounds` rounds and writes one record per line; returns the
/// number of accepted rounds.
pub fn write_transcript<S, W>(test: &LongCodeTest, strategy: &S, rounds: u64, seed: u64, out: &mut W) -> Result<u64>
where
    S: Responder<LongCodeTest>,
    W: Write,
{
    let mut accepted = 0;
    for i in 0..rounds {
        let round_seed = derive_seed(seed, i);
        let mut rng = round_rng(seed, i);
        let (alice_q, bob_q) = sample_round(&test.params, &mut rng)?;
        let (a, b) = strategy.respond(test, &alice_q, &bob_q, &mut rng)?;
        let verdict = decide(&test.params, &alice_q, &bob_q, a, b)?;
        accepted += u64::from(verdict.accepted());
        let record = TranscriptRecord {
            alice_q,
            bob_q,
            answers: Answers { alice: a, bob: b },
            verdict,
            seed: round_seed,
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(accepted)
}

#[derive(Serialize, Deserialize)]
struct TestParamsJson {
    epsilon: NoiseSpec,
    u: usize,
    bcs: Bcs,
    dist: Vec<(usize, usize, String)>,
    section_policy: SectionPolicy,
    seed: u64,
}

impl Serialize for TestParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TestParamsJson {
            epsilon: self.epsilon,
            u: self.u,
            bcs: (*self.bcs).clone(),
            dist: self
                .dist
                .entries()
                .iter()
                .map(|(k, kp, p)| (*k, *kp, format_rational(p)))
                .collect(),
            section_policy: self.policy,
            seed: self.seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TestParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = TestParamsJson::deserialize(d)?;
        let entries = raw
            .dist
            .iter()
            .map(|(k, kp, p)| Ok((*k, *kp, parse_rational(p)?)))
            .collect::<Result<Vec<(usize, usize, BigRational)>>>()
            .map_err(D::Error::custom)?;
        let dist = ProjSupportDist::new(entries).map_err(D::Error::custom)?;
        TestParams::new(raw.bcs, dist, raw.epsilon, raw.u, raw.section_policy, raw.seed).map_err(D::Error::custom)
    }
}
