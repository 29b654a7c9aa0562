//! Nonlocal games, constraint systems and the games built from them.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boolfun::{parse_point_label, point_label, CubeSubset, Sign, VarSet};
use crate::error::{bail, Error, Result};
use crate::quantum::{self, observables_from_pvm, SyncStrategy};

/// Ordered question pair, by index.
pub type Pair = (usize, usize);

/// Parses `"p/q"` or `"p"` into a nonnegative rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let r = BigRational::from_str(s.trim()).map_err(|e| Error::Parse(format!("bad rational {s:?}: {e}")))?;
    if r.is_negative() {
        bail!(Parse, "probability {s:?} is negative");
    }
    Ok(r)
}

pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `p/q` as a rational.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Exact sampler for a finite distribution with rational weights.
#[derive(Clone, Debug)]
pub(crate) struct RationalSampler {
    cumulative: Vec<u128>,
}

impl RationalSampler {
    pub(crate) fn new<'a, I>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a BigRational>,
    {
        let weights: Vec<&BigRational> = weights.into_iter().collect();
        let lcm = weights
            .iter()
            .fold(BigInt::one(), |acc, w| acc.lcm(w.denom()));
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut total: u128 = 0;
        for w in weights {
            let scaled = (w.numer() * (&lcm / w.denom()))
                .to_u128()
                .ok_or_else(|| Error::Capacity("distribution denominators are too large to sample exactly".into()))?;
            total = total
                .checked_add(scaled)
                .ok_or_else(|| Error::Capacity("distribution weights overflow".into()))?;
            cumulative.push(total);
        }
        if total == 0 {
            bail!(Domain, "distribution has no mass");
        }
        Ok(RationalSampler { cumulative })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let r = rng.random_range(0..total);
        self.cumulative.partition_point(|&c| c <= r)
    }
}

/// A two-player one-round game given by full tables.
///
/// The decider is stored on `supp(π)` and the diagonal; every other question
/// pair rejects all answers.
#[derive(Clone, Debug)]
pub struct ExplicitGame {
    questions: Vec<String>,
    answers: Vec<Vec<String>>,
    dist: BTreeMap<Pair, BigRational>,
    decider: BTreeMap<Pair, Vec<bool>>,
    provenance: Vec<String>,
    index: HashMap<String, usize>,
    answer_index: Vec<HashMap<String, usize>>,
    sampler: RationalSampler,
}

impl ExplicitGame {
    pub fn new<F>(
        questions: Vec<String>,
        answers: Vec<Vec<String>>,
        dist: BTreeMap<Pair, BigRational>,
        decider: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize, usize, usize) -> bool,
    {
        let mut pairs: Vec<Pair> = dist.keys().copied().collect();
        pairs.extend((0..questions.len()).map(|i| (i, i)));
        pairs.sort_unstable();
        pairs.dedup();
        let mut table = BTreeMap::new();
        for (x, y) in pairs {
            if x >= answers.len() || y >= answers.len() {
                bail!(Domain, "question index out of range");
            }
            let (nx, ny) = (answers[x].len(), answers[y].len());
            let row: Vec<bool> = (0..nx * ny).map(|k| decider(x, y, k / ny, k % ny)).collect();
            table.insert((x, y), row);
        }
        Self::from_tables(questions, answers, dist, table)
    }

    pub fn from_tables(
        questions: Vec<String>,
        answers: Vec<Vec<String>>,
        dist: BTreeMap<Pair, BigRational>,
        decider: BTreeMap<Pair, Vec<bool>>,
    ) -> Result<Self> {
        if questions.len() != answers.len() {
            bail!(Domain, "need one answer set per question");
        }
        let mut index = HashMap::new();
        for (i, q) in questions.iter().enumerate() {
            if index.insert(q.clone(), i).is_some() {
                bail!(Domain, "duplicate question {q:?}");
            }
        }
        let mut answer_index = Vec::with_capacity(answers.len());
        for (q, set) in questions.iter().zip(&answers) {
            let mut m = HashMap::new();
            for (k, a) in set.iter().enumerate() {
                if m.insert(a.clone(), k).is_some() {
                    bail!(Domain, "duplicate answer {a:?} for question {q:?}");
                }
            }
            answer_index.push(m);
        }
        let n = questions.len();
        let mut total = BigRational::zero();
        for (&(x, y), p) in &dist {
            if x >= n || y >= n {
                bail!(Domain, "distribution mentions an unknown question");
            }
            if p.is_negative() {
                bail!(Domain, "negative probability");
            }
            total += p;
        }
        if !total.is_one() {
            bail!(Domain, "distribution sums to {}, not 1", format_rational(&total));
        }
        for (&(x, y), row) in &decider {
            if x >= n || y >= n || row.len() != answers[x].len() * answers[y].len() {
                bail!(Domain, "decider table for pair ({x},{y}) has the wrong shape");
            }
        }
        let dist: BTreeMap<Pair, BigRational> = dist.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        let sampler = RationalSampler::new(dist.values())?;
        Ok(ExplicitGame {
            questions,
            answers,
            dist,
            decider,
            provenance: Vec::new(),
            index,
            answer_index,
            sampler,
        })
    }

    pub fn with_provenance(mut self, pass: impl Into<String>) -> Self {
        self.provenance.push(pass.into());
        self
    }

    pub(crate) fn set_provenance(mut self, passes: Vec<String>) -> Self {
        self.provenance = passes;
        self
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn question(&self, x: usize) -> &str {
        &self.questions[x]
    }

    pub fn question_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn answers(&self, x: usize) -> &[String] {
        &self.answers[x]
    }

    pub fn answer_index(&self, x: usize, label: &str) -> Option<usize> {
        self.answer_index[x].get(label).copied()
    }

    /// Supported question pairs with their probabilities.
    pub fn dist(&self) -> &BTreeMap<Pair, BigRational> {
        &self.dist
    }

    pub fn prob(&self, x: usize, y: usize) -> BigRational {
        self.dist.get(&(x, y)).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Out-of-range answers are rejected.
    pub fn accepts(&self, x: usize, y: usize, a: usize, b: usize) -> bool {
        let ny = self.answers[y].len();
        a < self.answers[x].len() && b < ny && self.decider.get(&(x, y)).is_some_and(|row| row[a * ny + b])
    }

    /// Accepted answer pairs of a question pair.
    pub fn accepted(&self, x: usize, y: usize) -> Vec<Pair> {
        let ny = self.answers[y].len();
        self.decider
            .get(&(x, y))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &ok)| ok)
                    .map(|(k, _)| (k / ny, k % ny))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Pair {
        let k = self.sampler.sample(rng);
        *self.dist.keys().nth(k).expect("sampler index in range")
    }

    /// Same questions, answers, distribution and decider.
    pub fn same_game(&self, other: &ExplicitGame) -> bool {
        self.questions == other.questions
            && self.answers == other.answers
            && self.dist == other.dist
            && self.dist.keys().all(|&(x, y)| {
                let n = self.answers[x].len() * self.answers[y].len();
                (0..n).all(|k| {
                    let (a, b) = (k / self.answers[y].len(), k % self.answers[y].len());
                    self.accepts(x, y, a, b) == other.accepts(x, y, a, b)
                })
            })
            && (0..self.questions.len()).all(|x| {
                let n = self.answers[x].len();
                (0..n * n).all(|k| self.accepts(x, x, k / n, k % n) == other.accepts(x, x, k / n, k % n))
            })
    }
}

/// JSON form of [`ExplicitGame`].
#[derive(Debug, Serialize, Deserialize)]
pub struct GameJson {
    pub questions: Vec<String>,
    pub answers: BTreeMap<String, Vec<String>>,
    /// `[x, y, "p/q"]`
    pub dist: Vec<(String, String, String)>,
    /// Accepted `[x, y, a, b]` tuples.
    pub decider: Vec<(String, String, String, String)>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl From<&ExplicitGame> for GameJson {
    fn from(g: &ExplicitGame) -> Self {
        let answers = g
            .questions
            .iter()
            .cloned()
            .zip(g.answers.iter().cloned())
            .collect();
        let dist = g
            .dist
            .iter()
            .map(|(&(x, y), p)| (g.questions[x].clone(), g.questions[y].clone(), format_rational(p)))
            .collect();
        let mut decider = Vec::new();
        for &(x, y) in g.decider.keys() {
            for (a, b) in g.accepted(x, y) {
                decider.push((
                    g.questions[x].clone(),
                    g.questions[y].clone(),
                    g.answers[x][a].clone(),
                    g.answers[y][b].clone(),
                ));
            }
        }
        GameJson {
            questions: g.questions.clone(),
            answers,
            dist,
            decider,
            provenance: g.provenance.clone(),
        }
    }
}

impl TryFrom<GameJson> for ExplicitGame {
    type Error = Error;
    fn try_from(j: GameJson) -> Result<Self> {
        let mut answers = Vec::with_capacity(j.questions.len());
        for q in &j.questions {
            match j.answers.get(q) {
                Some(a) => answers.push(a.clone()),
                None => bail!(Parse, "no answer set for question {q:?}"),
            }
        }
        if j.answers.len() != j.questions.len() {
            bail!(Parse, "answer sets mention unknown questions");
        }
        let qidx: HashMap<&str, usize> = j.questions.iter().enumerate().map(|(i, q)| (q.as_str(), i)).collect();
        let find = |q: &str| {
            qidx.get(q)
                .copied()
                .ok_or_else(|| Error::Parse(format!("unknown question {q:?}")))
        };
        let mut dist = BTreeMap::new();
        for (x, y, p) in &j.dist {
            let key = (find(x)?, find(y)?);
            let p = parse_rational(p)?;
            *dist.entry(key).or_insert_with(BigRational::zero) += p;
        }
        let mut table: BTreeMap<Pair, Vec<bool>> = BTreeMap::new();
        let mut pairs: Vec<Pair> = dist.keys().copied().collect();
        pairs.extend((0..j.questions.len()).map(|i| (i, i)));
        for (x, y) in pairs {
            table.insert((x, y), vec![false; answers[x].len() * answers[y].len()]);
        }
        for (x, y, a, b) in &j.decider {
            let (xi, yi) = (find(x)?, find(y)?);
            let ai = answers[xi]
                .iter()
                .position(|s| s == a)
                .ok_or_else(|| Error::Parse(format!("answer {a:?} not valid for {x:?}")))?;
            let bi = answers[yi]
                .iter()
                .position(|s| s == b)
                .ok_or_else(|| Error::Parse(format!("answer {b:?} not valid for {y:?}")))?;
            let ny = answers[yi].len();
            let row = table
                .entry((xi, yi))
                .or_insert_with(|| vec![false; answers[xi].len() * ny]);
            row[ai * ny + bi] = true;
        }
        Ok(ExplicitGame::from_tables(j.questions, answers, dist, table)?.set_provenance(j.provenance))
    }
}

impl Serialize for ExplicitGame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GameJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExplicitGame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ExplicitGame::try_from(GameJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A game given by a sampler and a decider.
pub trait ImplicitGame: Sync {
    type AliceQ: Send;
    type BobQ: Send;
    type AliceA;
    type BobA;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Self::AliceQ, Self::BobQ)>;

    fn decide(&self, qa: &Self::AliceQ, qb: &Self::BobQ, a: &Self::AliceA, b: &Self::BobA) -> Result<bool>;

    /// Upper bound on random bits drawn per round, when known.
    fn randomness_budget(&self) -> Option<u64> {
        None
    }

    /// Answer lengths of the two players, in bits.
    fn answer_arity(&self) -> (usize, usize);
}

/// Joint answering rule for an implicit game; entangled players are
/// simulated by sampling both answers from their joint distribution.
pub trait Responder<G: ImplicitGame + ?Sized>: Sync {
    fn respond<R: Rng + ?Sized>(
        &self,
        game: &G,
        qa: &G::AliceQ,
        qb: &G::BobQ,
        rng: &mut R,
    ) -> Result<(G::AliceA, G::BobA)>;
}

/// Strategies on explicit games answer by sampling their correlation.
/// Outcomes outside the answer set map to an out-of-range index and lose.
impl<S: quantum::Strategy + Sync> Responder<ExplicitGame> for S {
    fn respond<R: Rng + ?Sized>(&self, game: &ExplicitGame, x: &usize, y: &usize, rng: &mut R) -> Result<(usize, usize)> {
        let corr = self.correlation(game.question(*x), game.question(*y))?;
        let weights: Vec<f64> = corr.p.iter().flatten().map(|p| p.max(0.0)).collect();
        let dist = rand::distr::weighted::WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidMeasurement(format!("correlation is not a distribution: {e}")))?;
        let k = rand::distr::Distribution::sample(&dist, rng);
        let nb = corr.bob.len();
        let (i, j) = (k / nb, k % nb);
        let a = game.answer_index(*x, &corr.alice[i]).unwrap_or(usize::MAX);
        let b = game.answer_index(*y, &corr.bob[j]).unwrap_or(usize::MAX);
        Ok((a, b))
    }
}

impl ImplicitGame for ExplicitGame {
    type AliceQ = usize;
    type BobQ = usize;
    type AliceA = usize;
    type BobA = usize;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        Ok(self.sample_pair(rng))
    }

    fn decide(&self, x: &usize, y: &usize, a: &usize, b: &usize) -> Result<bool> {
        Ok(self.accepts(*x, *y, *a, *b))
    }

    fn randomness_budget(&self) -> Option<u64> {
        Some(128)
    }

    fn answer_arity(&self) -> (usize, usize) {
        let bits = |n: usize| n.next_power_of_two().trailing_zeros() as usize;
        let widest = self.answers.iter().map(|a| bits(a.len())).max().unwrap_or(0);
        (widest, widest)
    }
}

/// `π` symmetric and `D(x,x,a,b) = 0` for `a ≠ b`.
pub fn is_synchronous(g: &ExplicitGame) -> bool {
    let symmetric = g.dist.iter().all(|(&(x, y), p)| g.dist.get(&(y, x)) == Some(p));
    let diagonal = (0..g.num_questions()).all(|x| {
        let n = g.answers[x].len();
        (0..n).all(|a| (0..n).all(|b| a == b || !g.accepts(x, x, a, b)))
    });
    symmetric && diagonal
}

/// Every supported `(x, y, a)` has at most one accepted `b`.
pub fn is_projection(g: &ExplicitGame) -> bool {
    g.dist.keys().all(|&(x, y)| {
        let ny = g.answers[y].len();
        (0..g.answers[x].len()).all(|a| (0..ny).filter(|&b| g.accepts(x, y, a, b)).count() <= 1)
    })
}

/// A Boolean constraint: a context and its satisfying assignments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub label: String,
    pub context: VarSet,
    pub satisfying: CubeSubset,
}

impl Constraint {
    pub fn new(label: impl Into<String>, satisfying: CubeSubset) -> Self {
        Constraint {
            label: label.into(),
            context: satisfying.domain().clone(),
            satisfying,
        }
    }

    /// Satisfying assignments as bit-string labels, ascending by point index.
    pub fn answer_labels(&self) -> Vec<String> {
        self.satisfying
            .members()
            .into_iter()
            .map(|i| point_label(i, self.context.len()))
            .collect()
    }
}

/// A Boolean constraint system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BcsJson", into = "BcsJson")]
pub struct Bcs {
    variables: Vec<String>,
    constraints: Vec<Constraint>,
}

impl Bcs {
    pub fn new(variables: Vec<String>, constraints: Vec<Constraint>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for v in &variables {
            if !seen.insert(v.as_str()) {
                bail!(Domain, "duplicate variable {v:?}");
            }
        }
        for c in &constraints {
            if let Some(v) = c.context.names().iter().find(|n| !seen.contains(n.as_str())) {
                bail!(Domain, "constraint {:?} uses unknown variable {v:?}", c.label);
            }
        }
        Ok(Bcs { variables, constraints })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, i: usize) -> &Constraint {
        &self.constraints[i]
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Whether the assignment (bit `k` set iff variable `k` is `-1`)
    /// satisfies every constraint.
    pub fn is_satisfied_by(&self, assignment: &[Sign]) -> bool {
        self.constraints.iter().all(|c| {
            let idx = c.context.names().iter().enumerate().fold(0usize, |acc, (k, n)| {
                let pos = self.variables.iter().position(|v| v == n).expect("validated");
                acc | (usize::from(assignment[pos].is_minus()) << k)
            });
            c.satisfying.contains(idx)
        })
    }
}

/// A linear constraint system: every constraint is a parity equation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LcsJson", into = "LcsJson")]
pub struct Lcs {
    bcs: Bcs,
    parity: Vec<Sign>,
}

impl Lcs {
    /// Equations `Π_{x∈context} x = parity`.
    pub fn new(variables: Vec<String>, equations: Vec<(String, VarSet, Sign)>) -> Result<Self> {
        let mut constraints = Vec::with_capacity(equations.len());
        let mut parity = Vec::with_capacity(equations.len());
        for (label, context, b) in equations {
            let members = (0..context.num_points()).filter(|i| (i.count_ones() % 2 == 1) == b.is_minus());
            constraints.push(Constraint::new(label, CubeSubset::from_indices(context, members)?));
            parity.push(b);
        }
        Ok(Lcs {
            bcs: Bcs::new(variables, constraints)?,
            parity,
        })
    }

    pub fn bcs(&self) -> &Bcs {
        &self.bcs
    }

    pub fn parity(&self) -> &[Sign] {
        &self.parity
    }
}

#[derive(Serialize, Deserialize)]
struct ConstraintJson {
    label: String,
    context: VarSet,
    /// Satisfying set as a hex mask.
    satisfying: String,
}

/// Wire form of [`Bcs`].
#[derive(Serialize, Deserialize)]
pub struct BcsJson {
    variables: Vec<String>,
    constraints: Vec<ConstraintJson>,
}

impl From<Bcs> for BcsJson {
    fn from(b: Bcs) -> Self {
        BcsJson {
            constraints: b
                .constraints
                .iter()
                .map(|c| ConstraintJson {
                    label: c.label.clone(),
                    context: c.context.clone(),
                    satisfying: c.satisfying.to_hex(),
                })
                .collect(),
            variables: b.variables,
        }
    }
}

impl TryFrom<BcsJson> for Bcs {
    type Error = Error;

    fn try_from(raw: BcsJson) -> Result<Self> {
        let constraints = raw
            .constraints
            .into_iter()
            .map(|c| Ok(Constraint::new(c.label, CubeSubset::from_hex(c.context, &c.satisfying)?)))
            .collect::<Result<_>>()?;
        Bcs::new(raw.variables, constraints)
    }
}

#[derive(Serialize, Deserialize)]
struct EquationJson {
    label: String,
    context: VarSet,
    parity: Sign,
}

/// Wire form of [`Lcs`].
#[derive(Serialize, Deserialize)]
pub struct LcsJson {
    variables: Vec<String>,
    equations: Vec<EquationJson>,
}

impl From<Lcs> for LcsJson {
    fn from(l: Lcs) -> Self {
        LcsJson {
            equations: l
                .bcs
                .constraints
                .iter()
                .zip(&l.parity)
                .map(|(c, &parity)| EquationJson {
                    label: c.label.clone(),
                    context: c.context.clone(),
                    parity,
                })
                .collect(),
            variables: l.bcs.variables,
        }
    }
}

impl TryFrom<LcsJson> for Lcs {
    type Error = Error;

    fn try_from(raw: LcsJson) -> Result<Self> {
        let eqs = raw.equations.into_iter().map(|e| (e.label, e.context, e.parity)).collect();
        Lcs::new(raw.variables, eqs)
    }
}

fn warn_empty(b: &Bcs, used: impl Iterator<Item = usize>) {
    for i in used {
        if b.constraints[i].satisfying.is_empty() {
            log::warn!("constraint {:?} has no satisfying assignment", b.constraints[i].label);
        }
    }
}

/// Constraint-constraint game: answers are satisfying assignments and the
/// players must agree on shared variables.
pub fn bcs_game(b: &Bcs, dist: &BTreeMap<Pair, BigRational>) -> Result<ExplicitGame> {
    let n = b.len();
    if dist.keys().any(|&(x, y)| x >= n || y >= n) {
        bail!(Domain, "distribution mentions an unknown constraint");
    }
    warn_empty(b, dist.keys().flat_map(|&(x, y)| [x, y]));
    let questions = b.constraints.iter().map(|c| c.label.clone()).collect();
    let answers = b.constraints.iter().map(Constraint::answer_labels).collect();
    let members: Vec<Vec<usize>> = b.constraints.iter().map(|c| c.satisfying.members()).collect();
    // shared[x][y]: (position in x, position in y) for each common variable
    let shared = |x: usize, y: usize| -> Vec<(usize, usize)> {
        let (cx, cy) = (&b.constraints[x].context, &b.constraints[y].context);
        cx.names()
            .iter()
            .enumerate()
            .filter_map(|(i, n)| cy.position(n).map(|j| (i, j)))
            .collect()
    };
    let mut overlap: HashMap<Pair, Vec<(usize, usize)>> = HashMap::new();
    for &(x, y) in dist.keys() {
        overlap.insert((x, y), shared(x, y));
    }
    for x in 0..n {
        overlap.insert((x, x), shared(x, x));
    }
    let game = ExplicitGame::new(questions, answers, dist.clone(), |x, y, a, bb| {
        let (pa, pb) = (members[x][a], members[y][bb]);
        overlap[&(x, y)]
            .iter()
            .all(|&(i, j)| ((pa >> i) & 1) == ((pb >> j) & 1))
    })?;
    Ok(game.with_provenance("bcs-game"))
}

/// Constraint-variable game of a linear system: Alice gets an equation,
/// Bob one of its variables.
///
/// Alice's questions are `e<i>`; Bob's questions are the variable names.
pub fn lcs_game(l: &Lcs, dist: &BTreeMap<usize, BigRational>) -> Result<ExplicitGame> {
    let b = &l.bcs;
    let m = b.len();
    if dist.keys().any(|&i| i >= m) {
        bail!(Domain, "distribution mentions an unknown equation");
    }
    let mut questions: Vec<String> = (0..m).map(|i| format!("e{i}")).collect();
    if let Some(v) = b.variables.iter().find(|v| questions.contains(v)) {
        bail!(Domain, "variable name {v:?} collides with an equation question");
    }
    questions.extend(b.variables.iter().cloned());
    let mut answers: Vec<Vec<String>> = b.constraints.iter().map(Constraint::answer_labels).collect();
    answers.extend(b.variables.iter().map(|_| vec!["0".to_string(), "1".to_string()]));
    let mut pd = BTreeMap::new();
    for (&i, p) in dist {
        let ctx = &b.constraints[i].context;
        if ctx.is_empty() {
            *pd.entry((i, i)).or_insert_with(BigRational::zero) += p.clone();
            continue;
        }
        let share = p / BigRational::from_integer(BigInt::from(ctx.len()));
        for name in ctx.names() {
            let v = m + b.variables.iter().position(|x| x == name).expect("validated");
            *pd.entry((i, v)).or_insert_with(BigRational::zero) += share.clone();
        }
    }
    let members: Vec<Vec<usize>> = b.constraints.iter().map(|c| c.satisfying.members()).collect();
    let game = ExplicitGame::new(questions, answers, pd, |x, y, a, bb| {
        if x == y {
            return a == bb;
        }
        if x >= m || y < m {
            return false;
        }
        let name = &b.variables[y - m];
        let j = b.constraints[x].context.position(name).expect("supported pair");
        ((members[x][a] >> j) & 1) == bb
    })?;
    Ok(game.with_provenance("lcs-game"))
}

/// `(β via ω, E_i E_{j∈V_i} ⟨A^i_j, B^j⟩)` for a synchronous strategy on the
/// constraint-variable game.
pub fn lcs_bias(l: &Lcs, dist: &BTreeMap<usize, BigRational>, strategy: &SyncStrategy) -> Result<(f64, f64)> {
    let game = lcs_game(l, dist)?;
    for (i, c) in l.bcs.constraints.iter().enumerate() {
        let pvm = strategy.pvm(&format!("e{i}"))?;
        for (label, p) in pvm.iter() {
            let satisfying = parse_point_label(label)
                .filter(|_| label.len() == c.context.len())
                .is_some_and(|idx| c.satisfying.contains(idx));
            if !satisfying && p.max_abs() > quantum::TOL {
                bail!(InvalidMeasurement, "equation {i} has weight on unsatisfying outcome {label:?}");
            }
        }
    }
    let direct = quantum::bias(&game, strategy)?;
    let mut formula = 0.0;
    for (&i, p) in dist {
        let c = &l.bcs.constraints[i];
        if c.context.is_empty() {
            formula += p.to_f64().unwrap_or(0.0);
            continue;
        }
        let pvm = strategy.pvm(&format!("e{i}"))?;
        let mut inner = 0.0;
        for name in c.context.names() {
            let a = observables_from_pvm(pvm, &c.context, name)?;
            let x = strategy.pvm(name)?;
            let plus = x.projection("0").cloned().unwrap_or_else(|| quantum::CMatrix::zeros(strategy.dim()));
            let minus = x.projection("1").cloned().unwrap_or_else(|| quantum::CMatrix::zeros(strategy.dim()));
            let bj = &plus - &minus;
            inner += quantum::hs_inner(a.matrix(), &bj)?.re;
        }
        formula += p.to_f64().unwrap_or(0.0) * inner / c.context.len() as f64;
    }
    Ok((direct, formula))
}

/// How the answers of one question were written as points of its cube.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerEncoding {
    /// Point index of each answer, in answer order.
    pub points: Vec<usize>,
}

/// Support of `π^proj`: pairs (pair constraint, single constraint) with mass.
#[derive(Clone, Debug)]
pub struct ProjSupportDist {
    entries: Vec<(usize, usize, BigRational)>,
    sampler: RationalSampler,
}

impl ProjSupportDist {
    pub(crate) fn new(entries: Vec<(usize, usize, BigRational)>) -> Result<Self> {
        let sampler = RationalSampler::new(entries.iter().map(|e| &e.2))?;
        Ok(ProjSupportDist { entries, sampler })
    }

    /// `(k, k', π^proj(k, k'))` with `k` a pair constraint and `k'` one of
    /// its two single constraints.
    pub fn entries(&self) -> &[(usize, usize, BigRational)] {
        &self.entries
    }

    pub fn as_pair_dist(&self) -> BTreeMap<Pair, BigRational> {
        let mut m = BTreeMap::new();
        for (k, kp, p) in &self.entries {
            *m.entry((*k, *kp)).or_insert_with(BigRational::zero) += p.clone();
        }
        m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let (k, kp, _) = &self.entries[self.sampler.sample(rng)];
        (*k, *kp)
    }
}

/// Output of [`projected_bcs`].
#[derive(Clone, Debug)]
pub struct ProjectedBcs {
    pub bcs: Bcs,
    pub dist: ProjSupportDist,
    /// Constraint index of each original question.
    pub single: Vec<usize>,
    /// Constraint index of each supported ordered question pair.
    pub pair: BTreeMap<Pair, usize>,
    pub encodings: Vec<AnswerEncoding>,
    pub h: usize,
}

fn encode_answers(labels: &[String], h: usize, question: &str) -> Result<AnswerEncoding> {
    let binary = labels
        .iter()
        .all(|a| !a.is_empty() && a.chars().all(|c| c == '0' || c == '1'));
    let points: Vec<usize> = if binary {
        if let Some(a) = labels.iter().find(|a| a.len() > h) {
            bail!(Capacity, "answer {a:?} of {question:?} is longer than h = {h}");
        }
        labels.iter().map(|a| parse_point_label(a).expect("binary label")).collect()
    } else {
        let need = labels.len().next_power_of_two().trailing_zeros() as usize;
        if need > h {
            bail!(Capacity, "answers of {question:?} need {need} bits, h = {h}");
        }
        (0..labels.len()).collect()
    };
    let mut sorted = points.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != points.len() {
        bail!(Domain, "answers of {question:?} collide after zero padding");
    }
    Ok(AnswerEncoding { points })
}

/// The projected constraint system of a synchronous game.
///
/// Every question `i` gets `h` fresh variables `q<i>#0 .. q<i>#(h-1)`; every
/// answer is padded with zeros to `h` bits. Constraint `q<i>` holds the
/// image of `O_i`; constraint `q<i>|q<j>` holds the winning answer pairs of
/// a supported pair.
pub fn projected_bcs(g: &ExplicitGame, h: usize) -> Result<ProjectedBcs> {
    if !is_synchronous(g) {
        bail!(Domain, "projected BCS needs a synchronous game");
    }
    projected_bcs_unchecked(g, h)
}

pub(crate) fn projected_bcs_unchecked(g: &ExplicitGame, h: usize) -> Result<ProjectedBcs> {
    if h == 0 {
        bail!(Domain, "answer length bound must be positive");
    }
    let n = g.num_questions();
    let vars_of = |i: usize| -> Vec<String> { (0..h).map(|j| format!("q{i}#{j}")).collect() };
    let mut variables = Vec::with_capacity(n * h);
    let mut encodings = Vec::with_capacity(n);
    let mut contexts = Vec::with_capacity(n);
    let mut constraints = Vec::new();
    for i in 0..n {
        variables.extend(vars_of(i));
        let enc = encode_answers(g.answers(i), h, g.question(i))?;
        let ctx = VarSet::new(vars_of(i))?;
        let sat = CubeSubset::from_indices(ctx.clone(), enc.points.iter().copied())?;
        constraints.push(Constraint::new(format!("q{i}"), sat));
        contexts.push(ctx);
        encodings.push(enc);
    }
    let single: Vec<usize> = (0..n).collect();
    let mut pair = BTreeMap::new();
    let mut entries = Vec::new();
    for (&(x, y), p) in g.dist() {
        let k = constraints.len();
        let sat = if x == y {
            let members = (0..g.answers(x).len())
                .filter(|&a| g.accepts(x, x, a, a))
                .map(|a| encodings[x].points[a]);
            CubeSubset::from_indices(contexts[x].clone(), members)?
        } else {
            let ctx = VarSet::disjoint_union([&contexts[x], &contexts[y]])?;
            let members = g
                .accepted(x, y)
                .into_iter()
                .map(|(a, b)| encodings[x].points[a] | (encodings[y].points[b] << h));
            CubeSubset::from_indices(ctx, members)?
        };
        constraints.push(Constraint::new(format!("q{x}|q{y}"), sat));
        pair.insert((x, y), k);
        let half = p / BigRational::from_integer(BigInt::from(2));
        entries.push((k, single[x], half.clone()));
        entries.push((k, single[y], half));
    }
    let bcs = Bcs::new(variables, constraints)?;
    Ok(ProjectedBcs {
        bcs,
        dist: ProjSupportDist::new(entries)?,
        single,
        pair,
        encodings,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{Pvm, SyncStrategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn uniform(pairs: &[Pair]) -> BTreeMap<Pair, BigRational> {
        pairs.iter().map(|&p| (p, ratio(1, pairs.len() as i64))).collect()
    }

    #[test]
    fn rejects_bad_distributions() {
        let d: BTreeMap<Pair, BigRational> = [((0, 0), ratio(1, 2))].into();
        let r = ExplicitGame::new(labels(&["x"]), vec![labels(&["0"])], d, |_, _, _, _| true);
        assert!(r.is_err());
    }

    #[test]
    fn synchronous_and_projection_predicates() {
        let g = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0", "1"]), labels(&["0", "1"])],
            uniform(&[(0, 1), (1, 0)]),
            |x, y, a, b| x != y || a == b,
        )
        .unwrap();
        assert!(is_synchronous(&g));
        assert!(!is_projection(&g));
        let lopsided = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0"]), labels(&["0"])],
            uniform(&[(0, 1)]),
            |_, _, a, b| a == b,
        )
        .unwrap();
        assert!(!is_synchronous(&lopsided));
        let xor = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0", "1"]), labels(&["0", "1"])],
            uniform(&[(0, 1)]),
            |_, _, a, b| a != b,
        )
        .unwrap();
        assert!(is_projection(&xor));
    }

    #[test]
    fn game_json_round_trip() {
        let g = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0", "1"]), labels(&["a", "b", "c"])],
            [((0, 1), ratio(1, 3)), ((1, 0), ratio(2, 3))].into(),
            |x, _, a, b| (a + b + x) % 2 == 0,
        )
        .unwrap()
        .with_provenance("test");
        let text = serde_json::to_string(&g).unwrap();
        let back: ExplicitGame = serde_json::from_str(&text).unwrap();
        assert!(g.same_game(&back));
        assert_eq!(back.provenance(), ["test"]);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn exact_sampling_frequencies() {
        let g = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0"]), labels(&["0"])],
            [((0, 1), ratio(1, 4)), ((1, 0), ratio(3, 4))].into(),
            |_, _, _, _| true,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40_000;
        let hits = (0..n).filter(|_| g.sample_pair(&mut rng) == (0, 1)).count();
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.25).abs() < 3.0 * sigma);
    }

    fn ctx(names: &[&str]) -> VarSet {
        VarSet::new(names.iter().copied()).unwrap()
    }

    #[test]
    fn bcs_game_agreement() {
        let a = Constraint::new("A", CubeSubset::full(ctx(&["x", "y"])));
        let b = Constraint::new("B", CubeSubset::full(ctx(&["z"])));
        let c = Constraint::new("C", CubeSubset::full(ctx(&["y", "z"])));
        let bcs = Bcs::new(labels(&["x", "y", "z"]), vec![a, b, c]).unwrap();
        let g = bcs_game(&bcs, &uniform(&[(0, 1), (0, 0), (0, 2)])).unwrap();
        // disjoint contexts accept everything
        assert_eq!(g.accepted(0, 1).len(), 4 * 2);
        // identical contexts accept equal assignments only
        let same = g.accepted(0, 0);
        assert_eq!(same.len(), 4);
        assert!(same.iter().all(|(p, q)| p == q));
        // y shared between A (position 1) and C (position 0)
        for (p, q) in g.accepted(0, 2) {
            assert_eq!(&g.answers(0)[p][1..2], &g.answers(2)[q][0..1]);
        }
    }

    #[test]
    fn lcs_satisfying_sets_are_affine() {
        let l = Lcs::new(
            labels(&["a", "b", "c"]),
            vec![
                ("e".into(), ctx(&["a", "b", "c"]), Sign::Minus),
                ("f".into(), ctx(&["a"]), Sign::Plus),
                ("vac".into(), VarSet::empty(), Sign::Plus),
            ],
        )
        .unwrap();
        assert_eq!(l.bcs().constraint(0).satisfying.len(), 4);
        assert_eq!(l.bcs().constraint(1).satisfying.len(), 1);
        assert_eq!(l.bcs().constraint(2).satisfying.len(), 1);
    }

    #[test]
    fn single_equation_lcs_game() {
        let l = Lcs::new(labels(&["x"]), vec![("e".into(), ctx(&["x"]), Sign::Plus)]).unwrap();
        let g = lcs_game(&l, &[(0, ratio(1, 1))].into()).unwrap();
        assert_eq!(g.answers(0), ["0"]);
        assert_eq!(g.accepted(0, 1), vec![(0, 0)]);
        let s = SyncStrategy::deterministic([("e0", "0"), ("x", "0")]);
        let (direct, formula) = lcs_bias(&l, &[(0, ratio(1, 1))].into(), &s).unwrap();
        assert!((direct - 1.0).abs() < 1e-12 && (formula - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lcs_bias_deterministic_assignment() {
        // x·y = -1 and x = +1 and y = +1 cannot all hold
        let l = Lcs::new(
            labels(&["x", "y"]),
            vec![
                ("xy".into(), ctx(&["x", "y"]), Sign::Minus),
                ("x".into(), ctx(&["x"]), Sign::Plus),
                ("y".into(), ctx(&["y"]), Sign::Plus),
            ],
        )
        .unwrap();
        let dist: BTreeMap<usize, BigRational> = (0..3).map(|i| (i, ratio(1, 3))).collect();
        // Alice answers x=+1,y=-1 on e0; Bob answers the all-plus assignment.
        let s = SyncStrategy::deterministic([("e0", "01"), ("e1", "0"), ("e2", "0"), ("x", "0"), ("y", "0")]);
        let (direct, formula) = lcs_bias(&l, &dist, &s).unwrap();
        // checks won: e0/x yes, e0/y no, e1/x yes, e2/y yes → ω = 1/3·(1/2) + 2/3 = 5/6
        assert!((direct - (2.0 * 5.0 / 6.0 - 1.0)).abs() < 1e-12);
        assert!((direct - formula).abs() < 1e-12);
    }

    #[test]
    fn lcs_bias_rejects_unsatisfying_weight() {
        let l = Lcs::new(labels(&["x"]), vec![("e".into(), ctx(&["x"]), Sign::Plus)]).unwrap();
        let bad = Pvm::new(labels(&["1"]), vec![quantum::CMatrix::identity(1)]).unwrap();
        let good = Pvm::new(labels(&["0", "1"]), vec![quantum::CMatrix::identity(1), quantum::CMatrix::zeros(1)]).unwrap();
        let s = SyncStrategy::new(1, [("e0".into(), bad), ("x".into(), good)].into()).unwrap();
        assert!(matches!(
            lcs_bias(&l, &[(0, ratio(1, 1))].into(), &s),
            Err(Error::InvalidMeasurement(_))
        ));
    }

    #[test]
    fn projected_bcs_shapes() {
        let single = ExplicitGame::new(
            labels(&["x"]),
            vec![labels(&["0", "1"])],
            uniform(&[(0, 0)]),
            |_, _, a, b| a == b,
        )
        .unwrap();
        let p = projected_bcs(&single, 1).unwrap();
        assert_eq!(p.bcs.len(), 2);
        assert_eq!(p.bcs.constraint(1).context, p.bcs.constraint(0).context);

        let two = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0", "1"]), labels(&["0", "1"])],
            uniform(&[(0, 1), (1, 0)]),
            |x, y, a, b| x != y || a == b,
        )
        .unwrap();
        let p = projected_bcs(&two, 1).unwrap();
        assert_eq!(p.bcs.variables().len(), 2);
        assert_eq!(p.bcs.constraint(p.pair[&(0, 1)]).context.len(), 2);
        for (k, kp, _) in p.dist.entries() {
            assert!(p.bcs.constraint(*kp).context.is_subset_of(&p.bcs.constraint(*k).context));
        }
        assert!(matches!(projected_bcs(&two, 0), Err(Error::Domain(_))));
        let long = ExplicitGame::new(
            labels(&["x"]),
            vec![labels(&["00", "11"])],
            uniform(&[(0, 0)]),
            |_, _, a, b| a == b,
        )
        .unwrap();
        assert!(matches!(projected_bcs(&long, 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn projected_bcs_rejects_non_synchronous() {
        let g = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0"]), labels(&["0"])],
            uniform(&[(0, 1)]),
            |_, _, _, _| true,
        )
        .unwrap();
        assert!(matches!(projected_bcs(&g, 1), Err(Error::Domain(_))));
    }
}
