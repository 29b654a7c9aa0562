//! Strategies for the long-code test and their exact evaluation.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AliceQuestion, Blocks, BobQuestion, LongCodeTest, Query, Slot, TestParams};
use crate::boolfun::{enumerate_functions, parse_point_label, point_label, BoolFun, Sign};
use crate::error::{bail, Error, Result};
use crate::games::{bcs_game, ExplicitGame, ProjectedBcs, Responder};
use crate::quantum::{self, trace_prod_re, CMatrix, Pvm, SyncStrategy, C64, MAX_DIM};

/// Largest `|W|` for exhaustive evaluation of the test.
pub const EXACT_MAX_W: usize = 2;

/// A synchronous strategy for the test given by its answer observables.
pub trait TestObservables: Sync {
    fn dim(&self) -> usize;
    /// Alice's three commuting answer observables, in slot order.
    fn alice(&self, q: &AliceQuestion) -> Result<[CMatrix; 3]>;
    /// Bob's answer observable for a query.
    fn bob(&self, t: &Query) -> Result<CMatrix>;
}

/// Moves a synchronous strategy for `g` to the constraint game of its
/// projected system: single constraints measure `A^x`, pair constraints
/// `A^x_a A^y_b`.
pub fn lift_to_bcs(pb: &ProjectedBcs, g: &ExplicitGame, s: &SyncStrategy) -> Result<SyncStrategy> {
    let h = pb.h;
    let encoded = |x: usize| -> Result<Vec<(usize, &CMatrix)>> {
        let pvm = s.pvm(g.question(x))?;
        pvm.iter()
            .map(|(a, p)| {
                let idx = g.answer_index(x, a).ok_or_else(|| {
                    Error::InvalidMeasurement(format!("outcome {a:?} is not an answer of {:?}", g.question(x)))
                })?;
                Ok((pb.encodings[x].points[idx], p))
            })
            .collect()
    };
    let mut pvms = std::collections::BTreeMap::new();
    for x in 0..g.num_questions() {
        let (labels, ops) = encoded(x)?.into_iter().map(|(pt, p)| (point_label(pt, h), p.clone())).unzip();
        pvms.insert(pb.bcs.constraint(pb.single[x]).label.clone(), Pvm::new(labels, ops)?);
    }
    for (&(x, y), &k) in &pb.pair {
        let label = pb.bcs.constraint(k).label.clone();
        if x == y {
            let (labels, ops) = encoded(x)?.into_iter().map(|(pt, p)| (point_label(pt, h), p.clone())).unzip();
            pvms.insert(label, Pvm::new(labels, ops)?);
            continue;
        }
        let worst = s.commutator_residual([(g.question(x), g.question(y))])?;
        if worst > quantum::TOL {
            bail!(NotOracularizable, "commutator norm {worst:.3e} on {label:?}");
        }
        let (ex, ey) = (encoded(x)?, encoded(y)?);
        let mut labels = Vec::new();
        let mut ops = Vec::new();
        for (pa, a) in &ex {
            for (pb_, b) in &ey {
                labels.push(point_label(pa | (pb_ << h), 2 * h));
                ops.push((*a * *b).hermitian_part());
            }
        }
        pvms.insert(label, Pvm::new(labels, ops)?);
    }
    SyncStrategy::new(s.dim(), pvms)
}

struct JointTable {
    index: WeightedIndex<f64>,
    outcomes: Vec<(usize, usize)>,
}

/// The honest strategy built from a perfect strategy for the constraint
/// game: measure the product PVM, answer `(f_U(φ|_U), s_{g,C}(φ), s_{g',C}(φ))`.
pub struct CompletenessStrategy {
    params: TestParams,
    base_dim: usize,
    pvms: HashMap<usize, Vec<(usize, CMatrix)>>,
    joint: HashMap<(usize, usize), JointTable>,
}

/// Builds the honest strategy; `p` must win the constraint game with
/// probability `1` within `1e-9`.
pub fn completeness_strategy(p: &SyncStrategy, params: &TestParams) -> Result<CompletenessStrategy> {
    let bcs = params.bcs();
    let game = bcs_game(bcs, &params.dist().as_pair_dist())?;
    let value = quantum::winning_probability(&game, p)?;
    if value < 1.0 - 1e-9 {
        bail!(Precondition, "strategy wins the constraint game with probability {value}, not 1");
    }
    let mut pvms = HashMap::new();
    for &(k, kp, _) in params.dist().entries() {
        for c in [k, kp] {
            if pvms.contains_key(&c) {
                continue;
            }
            let cons = bcs.constraint(c);
            let pvm = p.pvm(&cons.label)?;
            let by_point = pvm
                .iter()
                .map(|(label, proj)| {
                    parse_point_label(label)
                        .filter(|_| label.len() == cons.context.len())
                        .map(|pt| (pt, proj.clone()))
                        .ok_or_else(|| Error::InvalidMeasurement(format!("outcome {label:?} is not a point of {:?}", cons.label)))
                })
                .collect::<Result<Vec<_>>>()?;
            pvms.insert(c, by_point);
        }
    }
    let mut joint = HashMap::new();
    for &(k, kp, _) in params.dist().entries() {
        let mut outcomes = Vec::new();
        let mut weights = Vec::new();
        for (phi, a) in &pvms[&k] {
            for (psi, b) in &pvms[&kp] {
                outcomes.push((*phi, *psi));
                weights.push(trace_prod_re(a, b).max(0.0));
            }
        }
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidMeasurement(format!("joint outcome weights: {e}")))?;
        joint.insert((k, kp), JointTable { index, outcomes });
    }
    Ok(CompletenessStrategy {
        params: params.clone(),
        base_dim: p.dim(),
        pvms,
        joint,
    })
}

impl CompletenessStrategy {
    /// `⊗_l A^{k_l}_{φ_l}` for every joint point with nonzero projection.
    fn projectors(&self, b: &Blocks) -> Result<Vec<(usize, CMatrix)>> {
        let dim = self
            .base_dim
            .checked_pow(b.constraints.len() as u32)
            .filter(|&d| d <= MAX_DIM)
            .ok_or_else(|| Error::Capacity(format!("dimension {}^{} exceeds {MAX_DIM}", self.base_dim, b.constraints.len())))?;
        let mut acc: Vec<(Vec<usize>, CMatrix)> = vec![(Vec::new(), CMatrix::identity(1))];
        for &k in &b.constraints {
            let pvm = self
                .pvms
                .get(&k)
                .ok_or_else(|| Error::Configuration(format!("no measurement for constraint {k}")))?;
            let mut next = Vec::with_capacity(acc.len() * pvm.len());
            for (parts, m) in &acc {
                for (pt, p) in pvm {
                    let mut parts = parts.clone();
                    parts.push(*pt);
                    next.push((parts, m.kron(p)?));
                }
            }
            acc = next;
        }
        debug_assert!(acc.iter().all(|(_, m)| m.dim() == dim));
        Ok(acc.into_iter().map(|(parts, m)| (b.join(&parts), m)).collect())
    }

    fn observable(&self, projectors: &[(usize, CMatrix)], value: impl Fn(usize) -> Sign) -> CMatrix {
        let dim = projectors[0].1.dim();
        projectors.iter().fold(CMatrix::zeros(dim), |acc, (pt, p)| match value(*pt) {
            Sign::Plus => &acc + p,
            Sign::Minus => &acc - p,
        })
    }
}

impl TestObservables for CompletenessStrategy {
    fn dim(&self) -> usize {
        self.base_dim.pow(self.params.u() as u32)
    }

    fn alice(&self, q: &AliceQuestion) -> Result<[CMatrix; 3]> {
        let wb = self.params.blocks(&q.rounds.iter().map(|r| r.0).collect::<Vec<_>>());
        let proj = self.projectors(&wb)?;
        let (queries, _) = q.queries(self.params.policy())?;
        let r = q.restriction()?;
        Ok([
            self.observable(&proj, |phi| queries[0].carried.eval(r.apply(phi))),
            self.observable(&proj, |phi| queries[1].carried.eval(phi)),
            self.observable(&proj, |phi| queries[2].carried.eval(phi)),
        ])
    }

    fn bob(&self, t: &Query) -> Result<CMatrix> {
        let b = self.params.resolve(&t.domain)?;
        let proj = self.projectors(&b)?;
        Ok(self.observable(&proj, |x| t.carried.eval(x)))
    }
}

impl Responder<LongCodeTest> for CompletenessStrategy {
    fn respond<R: Rng + ?Sized>(
        &self,
        test: &LongCodeTest,
        qa: &AliceQuestion,
        qb: &BobQuestion,
        rng: &mut R,
    ) -> Result<([Sign; 3], Sign)> {
        let params = test.params();
        let mut phis = Vec::with_capacity(qa.rounds.len());
        let mut psis = Vec::with_capacity(qa.rounds.len());
        for round in &qa.rounds {
            let t = self
                .joint
                .get(round)
                .ok_or_else(|| Error::Protocol(format!("round {round:?} is outside the support")))?;
            let (phi, psi) = t.outcomes[t.index.sample(rng)];
            phis.push(phi);
            psis.push(psi);
        }
        let phi = params.blocks(&qa.rounds.iter().map(|r| r.0).collect::<Vec<_>>()).join(&phis);
        let psi = params.blocks(&qa.rounds.iter().map(|r| r.1).collect::<Vec<_>>()).join(&psis);
        let (queries, _) = qa.queries(params.policy())?;
        let r = qa.restriction()?;
        let alice = [
            queries[0].carried.eval(r.apply(phi)),
            queries[1].carried.eval(phi),
            queries[2].carried.eval(phi),
        ];
        let bob = match qb.slot {
            Slot::F => qb.query.carried.eval(psi),
            Slot::G | Slot::GPrime => qb.query.carried.eval(phi),
        };
        Ok((alice, bob))
    }
}

/// Independent fair bits for every answer.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformResponder;

impl Responder<LongCodeTest> for UniformResponder {
    fn respond<R: Rng + ?Sized>(
        &self,
        _: &LongCodeTest,
        _: &AliceQuestion,
        _: &BobQuestion,
        rng: &mut R,
    ) -> Result<([Sign; 3], Sign)> {
        let mut bit = || Sign::from_bit(rng.random());
        Ok(([bit(), bit(), bit()], bit()))
    }
}

/// Pseudorandom observables keyed by the question: Bob draws a Haar-type
/// observable per query, Alice three commuting ones per question.
#[derive(Clone, Copy, Debug)]
pub struct RandomObservables {
    pub dim: usize,
    pub seed: u64,
}

impl RandomObservables {
    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update(p);
            h.update([0xff]);
        }
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}

impl TestObservables for RandomObservables {
    fn dim(&self) -> usize {
        self.dim
    }

    fn alice(&self, q: &AliceQuestion) -> Result<[CMatrix; 3]> {
        let names = q.w.names().join(",");
        let tables = [q.f.to_hex(), q.g.to_hex(), q.gprime.to_hex()];
        let mut rng = self.rng(&[b"alice", names.as_bytes(), tables[0].as_bytes(), tables[1].as_bytes(), tables[2].as_bytes()]);
        let u = quantum::random_unitary(self.dim, &mut rng);
        let mut diag = || {
            let signs: Vec<f64> = (0..self.dim).map(|_| if rng.random::<bool>() { -1.0 } else { 1.0 }).collect();
            let d = CMatrix::new(nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| {
                if i == j {
                    C64::new(signs[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }))
            .expect("square");
            (&(&u * &d) * &u.adjoint()).hermitian_part()
        };
        Ok([diag(), diag(), diag()])
    }

    fn bob(&self, t: &Query) -> Result<CMatrix> {
        let names = t.domain.names().join(",");
        let mut rng = self.rng(&[b"bob", names.as_bytes(), t.carried.to_hex().as_bytes()]);
        Ok(quantum::random_observable(self.dim, &mut rng).matrix().clone())
    }
}

/// Exhaustive evaluation of one support tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextTerm {
    pub rounds: Vec<(usize, usize)>,
    pub weight: f64,
    pub value: f64,
    pub linear: f64,
    /// `E_{f,g,μ} Tr(B^U_f B^{W,C}_g B^{W,C}_{g'})/d` for Bob's folded
    /// observables (real part).
    pub triple: f64,
}

/// Exhaustive evaluation of the test for a strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEvaluation {
    /// Acceptance probability.
    pub value: f64,
    /// Probability that Alice's answers pass the linear check.
    pub linear: f64,
    /// `E_{W,U,C}` of the per-context `triple`, as a complex number.
    pub triple: [f64; 2],
    pub contexts: Vec<ContextTerm>,
}

fn re_tr(m: &CMatrix) -> f64 {
    m.trace().re / m.dim() as f64
}

fn noise_weight(eps: f64, minus: u32, points: usize) -> f64 {
    eps.powi(minus as i32) * (1.0 - eps).powi(points as i32 - minus as i32)
}

/// Acceptance probability by enumeration of `f`, `g` and `μ`; needs
/// `|W| ≤` [`EXACT_MAX_W`] in every round tuple.
pub fn exact_test_value(params: &TestParams, strategy: &impl TestObservables) -> Result<ExactEvaluation> {
    let eps = params.epsilon().value();
    let mut contexts = Vec::new();
    let mut total = (0.0, 0.0, C64::new(0.0, 0.0));
    for (rounds, weight) in params.round_tuples()? {
        let wb = params.blocks(&rounds.iter().map(|r| r.0).collect::<Vec<_>>());
        let ub = params.blocks(&rounds.iter().map(|r| r.1).collect::<Vec<_>>());
        if wb.domain.len() > EXACT_MAX_W {
            bail!(Capacity, "exact evaluation needs |W| ≤ {EXACT_MAX_W}, got {}", wb.domain.len());
        }
        let c = params.constraint_fn(&wb);
        let r = wb.domain.restriction_to(&ub.domain)?;
        let fs: Vec<BoolFun> = enumerate_functions(&ub.domain)?.collect();
        let gs: Vec<BoolFun> = enumerate_functions(&wb.domain)?.collect();
        let points = wb.domain.num_points();
        let per_fg = 1.0 / (fs.len() * gs.len()) as f64;
        let bob_cache: HashMap<Query, CMatrix> = {
            let mut queries: Vec<Query> = fs
                .iter()
                .map(|f| Query {
                    domain: ub.domain.clone(),
                    carried: crate::boolfun::section(f).0,
                })
                .collect();
            for g in &gs {
                queries.push(Query {
                    domain: wb.domain.clone(),
                    carried: crate::boolfun::section_conditioned(g, &c, params.policy())?.0,
                });
            }
            queries.sort_by_key(|q| q.carried.to_hex() + &q.domain.names().join(","));
            queries.dedup();
            queries
                .into_par_iter()
                .map(|q| strategy.bob(&q).map(|m| (q, m)))
                .collect::<Result<_>>()?
        };
        let terms: Vec<(f64, f64, C64)> = fs
            .par_iter()
            .map(|f| {
                let lifted = f.lift_with(&wb.domain, &r);
                let mut acc = (0.0, 0.0, C64::new(0.0, 0.0));
                for g in &gs {
                    let fg = lifted.times(g)?;
                    for mu in enumerate_functions(&wb.domain)? {
                        let w = per_fg * noise_weight(eps, mu.count_true() as u32, points);
                        if w == 0.0 {
                            continue;
                        }
                        let q = AliceQuestion {
                            w: wb.domain.clone(),
                            u: ub.domain.clone(),
                            c: c.clone(),
                            f: f.clone(),
                            g: g.clone(),
                            gprime: fg.times(&mu)?,
                            rounds: rounds.clone(),
                            noise: Some(mu),
                        };
                        let (queries, rhs) = q.queries(params.policy())?;
                        let ys = strategy.alice(&q)?;
                        let bs: Vec<&CMatrix> = queries.iter().map(|t| &bob_cache[t]).collect();
                        let y123 = &(&ys[0] * &ys[1]) * &ys[2];
                        let b = rhs.to_f64();
                        let lin = b * re_tr(&y123);
                        let mut win = 0.0;
                        for x in 0..3 {
                            let yb = &ys[x] * bs[x];
                            win += 0.25 * (1.0 + lin + re_tr(&yb) + b * re_tr(&(&y123 * &yb))) / 3.0;
                        }
                        let bbb = &(bs[0] * bs[1]) * bs[2];
                        acc.0 += w * win;
                        acc.1 += w * (1.0 + lin) / 2.0;
                        acc.2 += bbb.trace() * (w * b / bbb.dim() as f64);
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let sum = terms
            .iter()
            .fold((0.0, 0.0, C64::new(0.0, 0.0)), |a, t| (a.0 + t.0, a.1 + t.1, a.2 + t.2));
        total.0 += weight * sum.0;
        total.1 += weight * sum.1;
        total.2 += sum.2 * weight;
        contexts.push(ContextTerm {
            rounds,
            weight,
            value: sum.0,
            linear: sum.1,
            triple: sum.2.re,
        });
    }
    Ok(ExactEvaluation {
        value: total.0,
        linear: total.1,
        triple: [total.2.re, total.2.im],
        contexts,
    })
}
