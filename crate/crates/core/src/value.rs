//! Value estimation: exact classical values, Monte Carlo evaluation of
//! implicit games and see-saw lower bounds for synchronous strategies.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::games::{ExplicitGame, ImplicitGame, Responder};
use crate::quantum::{random_unitary, winning_probability, CMatrix, Pvm, SyncStrategy, C64};
use crate::seeding::{derive_seed, round_rng};

/// Largest number of deterministic strategies enumerated on one side.
pub const MAX_STRATEGIES: u64 = 10_000_000;
pub const MIN_SAMPLES: u64 = 100;
pub const SEESAW_RESTARTS: u64 = 10;
pub const SEESAW_MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
    Seesaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub point: f64,
    /// Three-sigma half-width; zero for exact values.
    pub radius: f64,
    pub samples: u64,
    pub method: Method,
}

impl ValueEstimate {
    /// An exact value, clamped to `[0, 1]` against rounding.
    pub fn exact(point: f64) -> Self {
        ValueEstimate {
            point: point.clamp(0.0, 1.0),
            radius: 0.0,
            samples: 0,
            method: Method::Exact,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.point - v).abs() <= self.radius
    }
}

type Weight = (usize, usize, u128);

/// Integer weights `w(x, y) = π(x, y) · L` with `L` the common denominator.
fn integer_weights(g: &ExplicitGame) -> Result<(Vec<Weight>, BigInt)> {
    let lcm = g.dist().values().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
    let weights = g
        .dist()
        .iter()
        .map(|(&(x, y), p)| {
            let w = (p.numer() * (&lcm / p.denom()))
                .to_u128()
                .ok_or_else(|| Error::Capacity("distribution denominators are too large".into()))?;
            Ok((x, y, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((weights, lcm))
}

/// `(position in the fixed side, weight, accept[fixed answer][response])`.
type Row = (usize, u128, Vec<Vec<bool>>);

/// One side's fixed questions, and per question on the other side the
/// weighted decider rows it must answer against.
struct Enumeration {
    fixed: Vec<usize>,
    radices: Vec<usize>,
    responders: Vec<(usize, Vec<Row>)>,
}

impl Enumeration {
    fn new(g: &ExplicitGame, weights: &[Weight], alice_fixed: bool) -> Self {
        let key = |x: usize, y: usize| if alice_fixed { (x, y) } else { (y, x) };
        let mut fixed: Vec<usize> = weights.iter().map(|&(x, y, _)| key(x, y).0).collect();
        fixed.sort_unstable();
        fixed.dedup();
        let radices = fixed.iter().map(|&q| g.answers(q).len()).collect();
        let mut by_responder: BTreeMap<usize, Vec<Row>> = BTreeMap::new();
        for &(x, y, w) in weights {
            if w == 0 {
                continue;
            }
            let (f, r) = key(x, y);
            let pos = fixed.binary_search(&f).expect("collected");
            let table = (0..g.answers(f).len())
                .map(|a| {
                    (0..g.answers(r).len())
                        .map(|b| if alice_fixed { g.accepts(x, y, a, b) } else { g.accepts(x, y, b, a) })
                        .collect()
                })
                .collect();
            by_responder.entry(r).or_default().push((pos, w, table));
        }
        let responders = by_responder
            .into_iter()
            .map(|(r, terms)| (g.answers(r).len(), terms))
            .collect();
        Enumeration { fixed, radices, responders }
    }

    fn count(&self) -> Option<u64> {
        self.radices
            .iter()
            .try_fold(1u64, |acc, &r| acc.checked_mul(r as u64))
    }

    fn score(&self, index: u64) -> u128 {
        let mut rest = index;
        let answers: Vec<usize> = self
            .radices
            .iter()
            .map(|&r| {
                let a = (rest % r as u64) as usize;
                rest /= r as u64;
                a
            })
            .collect();
        self.responders
            .iter()
            .map(|(n, terms)| {
                (0..*n)
                    .map(|b| {
                        terms
                            .iter()
                            .filter(|(pos, _, table)| table[answers[*pos]][b])
                            .map(|(_, w, _)| *w)
                            .sum::<u128>()
                    })
                    .max()
                    .unwrap_or(0)
            })
            .sum()
    }
}

/// `ω(G)` as an exact rational: enumerate the side with fewer deterministic
/// strategies and best-respond question by question on the other.
pub fn classical_value_exact(g: &ExplicitGame) -> Result<BigRational> {
    enumerate_classical(g).map(|(v, _)| v)
}

fn enumerate_classical(g: &ExplicitGame) -> Result<(BigRational, u64)> {
    let (weights, lcm) = integer_weights(g)?;
    let alice = Enumeration::new(g, &weights, true);
    let bob = Enumeration::new(g, &weights, false);
    let (plan, count) = match (alice.count(), bob.count()) {
        (Some(a), Some(b)) if a <= b => (alice, a),
        (_, Some(b)) => (bob, b),
        (Some(a), None) => (alice, a),
        (None, None) => bail!(Capacity, "strategy count overflows"),
    };
    if count > MAX_STRATEGIES {
        bail!(Capacity, "{count} deterministic strategies exceed the cap of {MAX_STRATEGIES}");
    }
    log::debug!("classical enumeration over {count} strategies of {} questions", plan.fixed.len());
    let best = (0..count)
        .into_par_iter()
        .map(|i| plan.score(i))
        .max()
        .unwrap_or(0);
    Ok((BigRational::new(BigInt::from(best), lcm), count))
}

pub fn classical_value(g: &ExplicitGame) -> Result<ValueEstimate> {
    let (v, count) = enumerate_classical(g)?;
    Ok(ValueEstimate {
        point: v.to_f64().unwrap_or(f64::NAN),
        radius: 0.0,
        samples: count,
        method: Method::Exact,
    })
}

/// Empirical acceptance over `n` rounds; round `i` draws from
/// `round_rng(seed, i)`.
pub fn monte_carlo_value<G, S>(game: &G, strategy: &S, n: u64, seed: u64) -> Result<ValueEstimate>
where
    G: ImplicitGame,
    S: Responder<G>,
{
    if n < MIN_SAMPLES {
        bail!(Configuration, "Monte Carlo needs at least {MIN_SAMPLES} rounds, got {n}");
    }
    let wins: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = round_rng(seed, i);
            let (qa, qb) = game.sample(&mut rng)?;
            let (a, b) = strategy.respond(game, &qa, &qb, &mut rng)?;
            Ok(u64::from(game.decide(&qa, &qb, &a, &b)?))
        })
        .sum::<Result<u64>>()?;
    let p = wins as f64 / n as f64;
    Ok(ValueEstimate {
        point: p,
        radius: 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
        samples: n,
        method: Method::MonteCarlo,
    })
}

/// One see-saw descent from a random start.
#[derive(Clone, Debug)]
pub struct SeesawRun {
    pub strategy: SyncStrategy,
    /// Objective after initialisation and after each sweep.
    pub history: Vec<f64>,
}

struct Objective<'a> {
    game: &'a ExplicitGame,
    dim: usize,
    prob: BTreeMap<(usize, usize), f64>,
    // question -> partners y != x with π(x,y) or π(y,x) positive
    partners: Vec<Vec<usize>>,
}

impl<'a> Objective<'a> {
    fn new(game: &'a ExplicitGame, dim: usize) -> Self {
        let prob: BTreeMap<_, _> = game
            .dist()
            .iter()
            .map(|(&k, p)| (k, p.to_f64().unwrap_or(0.0)))
            .collect();
        let mut partners = vec![Vec::new(); game.num_questions()];
        for &(x, y) in prob.keys() {
            if x != y {
                partners[x].push(y);
                partners[y].push(x);
            }
        }
        for p in &mut partners {
            p.sort_unstable();
            p.dedup();
        }
        Objective { game, dim, prob, partners }
    }

    fn p(&self, x: usize, y: usize) -> f64 {
        self.prob.get(&(x, y)).copied().unwrap_or(0.0)
    }

    fn value(&self, pvms: &[Vec<CMatrix>]) -> f64 {
        let g = self.game;
        self.prob
            .iter()
            .map(|(&(x, y), &w)| {
                let mut s = 0.0;
                for (a, pa) in pvms[x].iter().enumerate() {
                    for (b, pb) in pvms[y].iter().enumerate() {
                        if g.accepts(x, y, a, b) {
                            s += re_trace(pa, pb);
                        }
                    }
                }
                w * s
            })
            .sum()
    }

    /// `R_a` with objective contribution of question `x` equal to
    /// `Σ_a Re tr(P_a R_a)`.
    fn rewards(&self, pvms: &[Vec<CMatrix>], x: usize) -> Vec<DMatrix<C64>> {
        let g = self.game;
        let d = self.dim;
        let scale = 1.0 / d as f64;
        (0..g.answers(x).len())
            .map(|a| {
                let diag = self.p(x, x) * f64::from(u8::from(g.accepts(x, x, a, a)));
                let mut r = DMatrix::<C64>::identity(d, d) * C64::new(diag, 0.0);
                for &y in &self.partners[x] {
                    let (fwd, back) = (self.p(x, y), self.p(y, x));
                    for (b, pb) in pvms[y].iter().enumerate() {
                        let w = fwd * f64::from(u8::from(g.accepts(x, y, a, b)))
                            + back * f64::from(u8::from(g.accepts(y, x, b, a)));
                        if w != 0.0 {
                            r += pb.inner() * C64::new(w, 0.0);
                        }
                    }
                }
                r * C64::new(scale, 0.0)
            })
            .collect()
    }
}

fn re_trace(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.dim();
    (a.inner().transpose().component_mul(b.inner()).sum().re) / d as f64
}

fn payoff(pvm: &[CMatrix], rewards: &[DMatrix<C64>]) -> f64 {
    pvm.iter()
        .zip(rewards)
        .map(|(p, r)| (p.inner() * r).trace().re)
        .sum()
}

fn hermitian(m: DMatrix<C64>) -> CMatrix {
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    CMatrix::new(h).expect("square")
}

fn orthogonalize(v: DVector<C64>, chosen: &[DVector<C64>]) -> Option<DVector<C64>> {
    let mut w = v;
    for c in chosen {
        let overlap = c.dotc(&w);
        w -= c * overlap;
    }
    let n = w.norm();
    (n > 1e-6).then(|| w / C64::new(n, 0.0))
}

/// Greedy projection: eigenvectors of every `R_a` sorted by descending
/// eigenvalue, each accepted into block `a` while that block is below its
/// rank and the vector is independent of those taken.
fn greedy_pvm(d: usize, ranks: &[usize], rewards: &[DMatrix<C64>]) -> Vec<CMatrix> {
    let mut candidates = Vec::new();
    for (a, r) in rewards.iter().enumerate() {
        let (vals, vecs) = hermitian(r.clone()).eigh();
        for (i, (l, v)) in vals.into_iter().zip(vecs).enumerate() {
            candidates.push((l, a, i, v));
        }
    }
    candidates.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut chosen: Vec<DVector<C64>> = Vec::new();
    let mut blocks = vec![Vec::new(); rewards.len()];
    for (_, a, _, v) in candidates {
        if blocks[a].len() >= ranks[a] {
            continue;
        }
        if let Some(w) = orthogonalize(v, &chosen) {
            chosen.push(w.clone());
            blocks[a].push(w);
        }
    }
    // numerically dependent leftovers: complete with the orthocomplement
    let mut fill = (0..d).filter_map(|k| {
        let e = DVector::from_fn(d, |i, _| C64::new(f64::from(u8::from(i == k)), 0.0));
        let w = orthogonalize(e, &chosen)?;
        chosen.push(w.clone());
        Some(w)
    });
    for (a, block) in blocks.iter_mut().enumerate() {
        while block.len() < ranks[a] {
            match fill.next() {
                Some(w) => block.push(w),
                None => break,
            }
        }
    }
    blocks.iter().map(|b| CMatrix::projector(d, b)).collect()
}

/// Re-split the range of each outcome pair along the top eigenvectors of
/// `R_a − R_b` restricted to it, keeping both ranks; never lowers the payoff.
fn refine_pairs(d: usize, ranks: &[usize], mut pvm: Vec<CMatrix>, rewards: &[DMatrix<C64>]) -> Vec<CMatrix> {
    let k = pvm.len();
    for _ in 0..3 {
        for a in 0..k {
            for b in a + 1..k {
                let joint = &pvm[a] + &pvm[b];
                let (vals, vecs) = joint.eigh();
                let basis: Vec<_> = vals
                    .iter()
                    .zip(vecs)
                    .filter(|(l, _)| **l > 0.5)
                    .map(|(_, v)| v)
                    .collect();
                if basis.len() != ranks[a] + ranks[b] || basis.is_empty() {
                    continue;
                }
                let v = DMatrix::from_columns(&basis);
                let m = v.adjoint() * (&rewards[a] - &rewards[b]) * &v;
                let (_, mvecs) = hermitian(m).eigh();
                let lifted: Vec<DVector<C64>> = mvecs.into_iter().rev().map(|w| &v * w).collect();
                let (to_a, to_b) = lifted.split_at(ranks[a]);
                pvm[a] = CMatrix::projector(d, to_a);
                pvm[b] = CMatrix::projector(d, to_b);
            }
        }
    }
    pvm
}

/// Balanced ranks summing to `d`, the remainder spread over random outcomes.
fn balanced_ranks<R: rand::Rng>(d: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut ranks = vec![d / k; k];
    let mut extra: Vec<usize> = (0..k).collect();
    extra.shuffle(rng);
    for &a in extra.iter().take(d % k) {
        ranks[a] += 1;
    }
    ranks
}

fn initial_pvm<R: rand::Rng>(d: usize, ranks: &[usize], rng: &mut R) -> Vec<CMatrix> {
    let u = random_unitary(d, rng);
    let mut col = 0;
    ranks
        .iter()
        .map(|&r| {
            let vs: Vec<_> = (col..col + r).map(|c| u.column(c).into_owned()).collect();
            col += r;
            CMatrix::projector(d, &vs)
        })
        .collect()
}

fn to_strategy(g: &ExplicitGame, d: usize, pvms: &[Vec<CMatrix>]) -> Result<SyncStrategy> {
    let map = pvms
        .iter()
        .enumerate()
        .map(|(x, ps)| Ok((g.question(x).to_string(), Pvm::new(g.answers(x).to_vec(), ps.clone())?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    SyncStrategy::new(d, map)
}

/// Single-threaded see-saw from the start drawn by `seed`.
pub fn seesaw_run(g: &ExplicitGame, d: usize, iterations: usize, seed: u64) -> Result<SeesawRun> {
    if d == 0 || d > SEESAW_MAX_DIM {
        bail!(Capacity, "see-saw dimension {d} outside 1..={SEESAW_MAX_DIM}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks: Vec<Vec<usize>> = (0..g.num_questions())
        .map(|x| balanced_ranks(d, g.answers(x).len(), &mut rng))
        .collect();
    let mut pvms: Vec<Vec<CMatrix>> = ranks.iter().map(|r| initial_pvm(d, r, &mut rng)).collect();
    let obj = Objective::new(g, d);
    let mut history = vec![obj.value(&pvms)];
    for _ in 0..iterations {
        for x in 0..g.num_questions() {
            let rewards = obj.rewards(&pvms, x);
            let current = payoff(&pvms[x], &rewards);
            let kept = refine_pairs(d, &ranks[x], pvms[x].clone(), &rewards);
            let fresh = refine_pairs(d, &ranks[x], greedy_pvm(d, &ranks[x], &rewards), &rewards);
            let (pk, pf) = (payoff(&kept, &rewards), payoff(&fresh, &rewards));
            let best = if pf > pk { (fresh, pf) } else { (kept, pk) };
            if best.1 > current {
                pvms[x] = best.0;
            }
        }
        let v = obj.value(&pvms);
        let last = *history.last().expect("initialised");
        history.push(v);
        if v - last <= 1e-14 {
            break;
        }
    }
    Ok(SeesawRun {
        strategy: to_strategy(g, d, &pvms)?,
        history,
    })
}

/// Best of [`SEESAW_RESTARTS`] see-saw runs, restart `r` seeded by
/// `derive_seed(seed, r)`; the reported value is recomputed from the
/// returned strategy.
pub fn seesaw_sync(g: &ExplicitGame, d: usize, iterations: usize, seed: u64) -> Result<(SyncStrategy, ValueEstimate)> {
    let runs = (0..SEESAW_RESTARTS)
        .into_par_iter()
        .map(|r| seesaw_run(g, d, iterations, derive_seed(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(SyncStrategy, f64, usize)> = None;
    for run in runs {
        let v = winning_probability(g, &run.strategy)?;
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((run.strategy, v, run.history.len() - 1));
        }
    }
    let (strategy, point, sweeps) = best.expect("at least one restart");
    Ok((
        strategy,
        ValueEstimate {
            point: point.clamp(0.0, 1.0),
            radius: 0.0,
            samples: sweeps as u64,
            method: Method::Seesaw,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::ratio;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn chsh() -> ExplicitGame {
        let dist = [(0, 2), (0, 3), (1, 2), (1, 3)]
            .into_iter()
            .map(|p| (p, ratio(1, 4)))
            .collect();
        let bits = labels(&["0", "1"]);
        ExplicitGame::new(labels(&["a0", "a1", "b0", "b1"]), vec![bits; 4], dist, |x, y, a, b| {
            if x == y {
                return a == b;
            }
            ((a ^ b) == 1) == (x == 1 && y == 3)
        })
        .unwrap()
    }

    #[test]
    fn chsh_classical_value() {
        assert_eq!(classical_value_exact(&chsh()).unwrap(), ratio(3, 4));
        let est = classical_value(&chsh()).unwrap();
        assert_eq!(est.point, 0.75);
        assert_eq!(est.radius, 0.0);
    }

    #[test]
    fn trivial_game_has_value_one() {
        let g = ExplicitGame::new(
            labels(&["x", "y"]),
            vec![labels(&["0", "1", "2"]), labels(&["0", "1"])],
            [((0, 1), ratio(1, 3)), ((1, 0), ratio(2, 3))].into(),
            |_, _, _, _| true,
        )
        .unwrap();
        assert_eq!(classical_value_exact(&g).unwrap(), ratio(1, 1));
        let (_, est) = seesaw_sync(&g, 2, 1, 0).unwrap();
        assert!((est.point - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seesaw_reaches_tsirelson() {
        let g = chsh();
        let (s, est) = seesaw_sync(&g, 2, 200, 3).unwrap();
        assert!(est.point >= 0.85, "{}", est.point);
        assert!((winning_probability(&g, &s).unwrap() - est.point).abs() < 1e-10);
    }

    #[test]
    fn seesaw_is_monotone() {
        let g = chsh();
        for seed in 0..5 {
            let run = seesaw_run(&g, 2, 50, seed).unwrap();
            assert!(run.history.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{:?}", run.history);
        }
    }

    #[test]
    fn monte_carlo_radius_shrinks() {
        let g = chsh();
        let s = SyncStrategy::deterministic([("a0", "0"), ("a1", "0"), ("b0", "0"), ("b1", "0")]);
        let small = monte_carlo_value(&g, &s, 2000, 1).unwrap();
        let large = monte_carlo_value(&g, &s, 4000, 1).unwrap();
        assert!(small.contains(0.75) && large.contains(0.75));
        let ratio = large.radius / small.radius;
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1, "{ratio}");
        assert!(monte_carlo_value(&g, &s, 10, 1).is_err());
        assert_eq!(monte_carlo_value(&g, &s, 500, 9).unwrap(), monte_carlo_value(&g, &s, 500, 9).unwrap());
    }

    #[test]
    fn seesaw_finds_magic_square_solution() {
        let g = crate::fixtures::magic_square().unwrap();
        let (s, est) = seesaw_sync(&g, 4, 200, 0).unwrap();
        assert!(est.point >= 1.0 - 1e-6, "{}", est.point);
        assert!((winning_probability(&g, &s).unwrap() - est.point).abs() < 1e-10);
    }
}
