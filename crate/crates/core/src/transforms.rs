//! Game-to-game passes: dead-pair repair, projection, parallel repetition,
//! and the matching strategy lifts.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::games::{ExplicitGame, ImplicitGame, Pair};
use crate::quantum::{self, CMatrix, Pvm, SyncStrategy, MAX_DIM};

/// Largest number of supported question tuples materialized by [`repeat`].
pub const MAX_EXPLICIT_PAIRS: usize = 10_000;

/// Label of a tuple of labels, written as a JSON array.
pub fn tuple_label<S: AsRef<str>>(parts: &[S]) -> String {
    let v: Vec<&str> = parts.iter().map(AsRef::as_ref).collect();
    serde_json::to_string(&v).expect("strings serialize")
}

fn half(p: &BigRational) -> BigRational {
    p / BigRational::from_integer(BigInt::from(2))
}

/// Pairs in `supp(π)` with no accepted answer pair.
pub fn dead_pairs(g: &ExplicitGame) -> Vec<Pair> {
    g.dist()
        .keys()
        .copied()
        .filter(|&(x, y)| g.accepted(x, y).is_empty())
        .collect()
}

/// Replaces every dead pair `(i, j)` by the two pairs `((i,j,±1), (i,j))`
/// of half its mass, won iff both players echo the sign.
///
/// New questions are labelled `["i","j"]` and `["i","j","+1"]`; their
/// answers are `"0"` (`+1`) and `"1"` (`-1`). A game without dead pairs is
/// returned unchanged.
pub fn ensure_nonempty_answers(g: &ExplicitGame) -> Result<ExplicitGame> {
    let dead = dead_pairs(g);
    if dead.is_empty() {
        return Ok(g.clone());
    }
    let n = g.num_questions();
    let mut questions: Vec<String> = g.questions().to_vec();
    let mut answers: Vec<Vec<String>> = (0..n).map(|x| g.answers(x).to_vec()).collect();
    let bits = || vec!["0".to_string(), "1".to_string()];
    let mut dist: BTreeMap<Pair, BigRational> = g.dist().clone();
    // new question index → sign it carries (None for the echo question)
    let mut carried: BTreeMap<usize, Option<usize>> = BTreeMap::new();
    for &(i, j) in &dead {
        let p = dist.remove(&(i, j)).expect("supported");
        let (qi, qj) = (g.question(i), g.question(j));
        let echo = questions.len();
        questions.push(tuple_label(&[qi, qj]));
        answers.push(bits());
        carried.insert(echo, None);
        for (sign, tag) in [(0usize, "+1"), (1, "-1")] {
            let q = questions.len();
            questions.push(tuple_label(&[qi, qj, tag]));
            answers.push(bits());
            carried.insert(q, Some(sign));
            dist.insert((q, echo), half(&p));
        }
    }
    let repaired = ExplicitGame::new(questions, answers, dist, |x, y, a, b| {
        match (carried.get(&x), carried.get(&y)) {
            (None, None) => g.accepts(x, y, a, b),
            (Some(Some(s)), Some(None)) => a == *s && b == *s,
            _ => x == y && a == b,
        }
    })
    .map_err(|e| match e {
        Error::Domain(m) if m.contains("duplicate question") => {
            Error::Domain(format!("repair labels collide with existing questions: {m}"))
        }
        e => e,
    })?;
    let mut passes = g.provenance().to_vec();
    passes.push("nonempty".into());
    Ok(repaired.set_provenance(passes))
}

/// `G^proj`: Alice receives a supported pair, Bob one of its two questions.
///
/// Question `k < |I|` is the original question `k`; the pair questions
/// follow in `supp(π)` order and are labelled `["x","y"]`, with answers
/// `["a","b"]` for every `(a, b) ∈ O_x × O_y`.
pub fn project(g: &ExplicitGame) -> Result<ExplicitGame> {
    let n = g.num_questions();
    let mut questions: Vec<String> = g.questions().to_vec();
    let mut answers: Vec<Vec<String>> = (0..n).map(|x| g.answers(x).to_vec()).collect();
    let mut pair_of: Vec<Pair> = Vec::new();
    let mut dist = BTreeMap::new();
    for (&(x, y), p) in g.dist() {
        let k = questions.len();
        questions.push(tuple_label(&[g.question(x), g.question(y)]));
        let mut labels = Vec::with_capacity(g.answers(x).len() * g.answers(y).len());
        for a in g.answers(x) {
            for b in g.answers(y) {
                labels.push(tuple_label(&[a, b]));
            }
        }
        answers.push(labels);
        pair_of.push((x, y));
        *dist.entry((k, x)).or_insert_with(BigRational::zero) += half(p);
        *dist.entry((k, y)).or_insert_with(BigRational::zero) += half(p);
    }
    let projected = ExplicitGame::new(questions, answers, dist, |k, c, ab, b| {
        if k < n {
            return k == c && ab == b;
        }
        if c >= n {
            return k == c && ab == b;
        }
        let (x, y) = pair_of[k - n];
        let ny = g.answers(y).len();
        let (a1, a2) = (ab / ny, ab % ny);
        if !g.accepts(x, y, a1, a2) {
            return false;
        }
        if c == x {
            a1 == b
        } else {
            a2 == b
        }
    })?;
    let mut passes = g.provenance().to_vec();
    passes.push("project".into());
    Ok(projected.set_provenance(passes))
}

/// Parameters of the parallel repetition bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionParams {
    pub u: usize,
    /// Multiplicative constant of the bound.
    pub scale: f64,
    /// Exponent applied to the gap `1 − ω`.
    pub exponent: f64,
}

impl RepetitionParams {
    pub fn new(u: usize, scale: f64, exponent: f64) -> Result<Self> {
        if u == 0 {
            bail!(Configuration, "repetition count must be at least 1");
        }
        if !(scale > 0.0 && exponent > 0.0) {
            bail!(Configuration, "repetition constants must be positive");
        }
        Ok(RepetitionParams { u, scale, exponent })
    }
}

/// `(1 − C(1 − v)^c)^{u/2}`, with the base clamped at zero.
pub fn repetition_bound(v: f64, params: &RepetitionParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        bail!(Domain, "value {v} outside [0, 1]");
    }
    let base = (1.0 - params.scale * (1.0 - v).powf(params.exponent)).max(0.0);
    Ok(base.powf(params.u as f64 / 2.0))
}

/// `u` independent copies of a game played in parallel, by sampling.
#[derive(Clone, Debug)]
pub struct RepeatedGame {
    base: ExplicitGame,
    u: usize,
}

impl RepeatedGame {
    pub fn new(base: ExplicitGame, u: usize) -> Result<Self> {
        if u == 0 {
            bail!(Configuration, "repetition count must be at least 1");
        }
        Ok(RepeatedGame { base, u })
    }

    pub fn base(&self) -> &ExplicitGame {
        &self.base
    }

    pub fn u(&self) -> usize {
        self.u
    }
}

impl ImplicitGame for RepeatedGame {
    type AliceQ = Vec<usize>;
    type BobQ = Vec<usize>;
    type AliceA = Vec<usize>;
    type BobA = Vec<usize>;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
        Ok((0..self.u).map(|_| self.base.sample_pair(rng)).unzip())
    }

    fn decide(&self, x: &Vec<usize>, y: &Vec<usize>, a: &Vec<usize>, b: &Vec<usize>) -> Result<bool> {
        if [x.len(), y.len(), a.len(), b.len()].iter().any(|&l| l != self.u) {
            bail!(Protocol, "expected {} coordinates", self.u);
        }
        Ok((0..self.u).all(|l| self.base.accepts(x[l], y[l], a[l], b[l])))
    }

    fn randomness_budget(&self) -> Option<u64> {
        Some(128 * self.u as u64)
    }

    fn answer_arity(&self) -> (usize, usize) {
        let (a, b) = self.base.answer_arity();
        (a * self.u, b * self.u)
    }
}

/// Result of [`repeat`]: materialized when small enough.
#[derive(Clone, Debug)]
pub enum Repeated {
    Explicit(ExplicitGame),
    Implicit(RepeatedGame),
}

fn tuples(n: usize, u: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n.pow(u as u32)).map(move |mut k| {
        let mut t = vec![0; u];
        for slot in t.iter_mut().rev() {
            *slot = k % n;
            k /= n;
        }
        t
    })
}

/// `G^{⊗u}`: product questions, product distribution, conjunction decider.
///
/// Questions and answers are JSON arrays of the coordinate labels. Falls
/// back to the sampled form when `|supp(π)|^u` or `|I|^u` exceeds
/// [`MAX_EXPLICIT_PAIRS`].
pub fn repeat(g: &ExplicitGame, u: usize) -> Result<Repeated> {
    if u == 0 {
        bail!(Configuration, "repetition count must be at least 1");
    }
    if u == 1 {
        return Ok(Repeated::Explicit(g.clone()));
    }
    let n = g.num_questions();
    let supp = g.dist().len();
    let fits = |base: usize| base.checked_pow(u as u32).is_some_and(|v| v <= MAX_EXPLICIT_PAIRS);
    let answer_tuples = (0..n).map(|x| g.answers(x).len()).max().unwrap_or(1);
    if !fits(supp) || !fits(n) || !fits(answer_tuples) {
        return Ok(Repeated::Implicit(RepeatedGame::new(g.clone(), u)?));
    }
    let qt: Vec<Vec<usize>> = tuples(n, u).collect();
    let questions: Vec<String> = qt
        .iter()
        .map(|t| tuple_label(&t.iter().map(|&x| g.question(x)).collect::<Vec<_>>()))
        .collect();
    let radices: Vec<Vec<usize>> = qt.iter().map(|t| t.iter().map(|&x| g.answers(x).len()).collect()).collect();
    let answer_digits = |q: usize, mut k: usize| -> Vec<usize> {
        let mut d = vec![0; u];
        for l in (0..u).rev() {
            d[l] = k % radices[q][l];
            k /= radices[q][l];
        }
        d
    };
    let answers: Vec<Vec<String>> = (0..qt.len())
        .map(|q| {
            let count: usize = radices[q].iter().product();
            (0..count)
                .map(|k| {
                    let d = answer_digits(q, k);
                    tuple_label(&(0..u).map(|l| g.answers(qt[q][l])[d[l]].as_str()).collect::<Vec<_>>())
                })
                .collect()
        })
        .collect();
    let index_of = |t: &[usize]| t.iter().fold(0, |acc, &x| acc * n + x);
    let support: Vec<(&Pair, &BigRational)> = g.dist().iter().collect();
    let mut dist = BTreeMap::new();
    for combo in tuples(supp, u) {
        let xs: Vec<usize> = combo.iter().map(|&k| support[k].0 .0).collect();
        let ys: Vec<usize> = combo.iter().map(|&k| support[k].0 .1).collect();
        let p = combo
            .iter()
            .fold(BigRational::one(), |acc, &k| acc * support[k].1);
        *dist
            .entry((index_of(&xs), index_of(&ys)))
            .or_insert_with(BigRational::zero) += p;
    }
    let game = ExplicitGame::new(questions, answers, dist, |x, y, a, b| {
        let (da, db) = (answer_digits(x, a), answer_digits(y, b));
        (0..u).all(|l| g.accepts(qt[x][l], qt[y][l], da[l], db[l]))
    })?;
    let mut passes = g.provenance().to_vec();
    passes.push(format!("repeat:{u}"));
    Ok(Repeated::Explicit(game.set_provenance(passes)))
}

/// Strategy for [`project`]`(g)` from a perfect oracularizable one for `g`:
/// pair questions measure `A^x_a A^y_b`.
pub fn lift_oracularizable(strategy: &SyncStrategy, g: &ExplicitGame) -> Result<SyncStrategy> {
    let pairs: Vec<(&str, &str)> = g
        .dist()
        .keys()
        .map(|&(x, y)| (g.question(x), g.question(y)))
        .collect();
    let worst = strategy.commutator_residual(pairs.iter().copied())?;
    if worst > quantum::TOL {
        bail!(NotOracularizable, "commutator norm {worst:.3e} on a supported pair");
    }
    let value = quantum::winning_probability(g, strategy)?;
    if value < 1.0 - quantum::TOL {
        log::warn!("lifting an imperfect strategy (value {value}); the lift carries no guarantee");
    }
    let mut pvms = strategy.pvms().clone();
    for (x, y) in pairs {
        let (px, py) = (strategy.pvm(x)?, strategy.pvm(y)?);
        let mut outcomes = Vec::new();
        let mut projections = Vec::new();
        for (a, pa) in px.iter() {
            for (b, pb) in py.iter() {
                outcomes.push(tuple_label(&[a, b]));
                projections.push((pa * pb).hermitian_part());
            }
        }
        pvms.insert(tuple_label(&[x, y]), Pvm::new(outcomes, projections)?);
    }
    SyncStrategy::new(strategy.dim(), pvms)
}

/// `u` parallel copies: `A^{x₁..x_u}_{a₁..a_u} = ⊗_l A^{x_l}_{a_l}` on every
/// question tuple.
pub fn product_strategy(p: &SyncStrategy, u: usize) -> Result<SyncStrategy> {
    if u == 0 {
        bail!(Configuration, "repetition count must be at least 1");
    }
    if u == 1 {
        return Ok(p.clone());
    }
    let dim = p
        .dim()
        .checked_pow(u as u32)
        .filter(|&d| d <= MAX_DIM)
        .ok_or_else(|| Error::Capacity(format!("dimension {}^{u} exceeds {MAX_DIM}", p.dim())))?;
    let qs: Vec<(&String, &Pvm)> = p.pvms().iter().collect();
    if qs.len().checked_pow(u as u32).is_none_or(|c| c > MAX_EXPLICIT_PAIRS) {
        bail!(Capacity, "too many question tuples to materialize");
    }
    let mut pvms = BTreeMap::new();
    for t in tuples(qs.len(), u) {
        let label = tuple_label(&t.iter().map(|&k| qs[k].0.as_str()).collect::<Vec<_>>());
        let mut outcomes = vec![Vec::<&str>::new()];
        let mut ops = vec![CMatrix::identity(1)];
        for &k in &t {
            let pvm = qs[k].1;
            let mut next_o = Vec::new();
            let mut next_p = Vec::new();
            for (o, m) in outcomes.iter().zip(&ops) {
                for (a, pa) in pvm.iter() {
                    let mut lab = o.clone();
                    lab.push(a);
                    next_o.push(lab);
                    next_p.push(m.kron(pa)?);
                }
            }
            outcomes = next_o;
            ops = next_p;
        }
        let labels = outcomes.iter().map(|o| tuple_label(o)).collect();
        pvms.insert(label, Pvm::new_unchecked(labels, ops)?);
    }
    SyncStrategy::new(dim, pvms)
}
