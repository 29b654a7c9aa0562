//! Dense complex matrices, binary observables, measurements and strategies.

use std::collections::BTreeMap;
use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::boolfun::{parse_point_label, VarSet};
use crate::error::{bail, Error, Result};
use crate::games::ExplicitGame;

pub type C64 = Complex64;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 64;
/// Tolerance for algebraic identities (involutions, projections, sums).
pub const TOL: f64 = 1e-8;
/// Tolerance for identities that only involve floating-point arithmetic.
pub const ARITH_TOL: f64 = 1e-12;

/// A square complex matrix of dimension at most [`MAX_DIM`].
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            bail!(Domain, "matrix must be square and nonempty, got {}x{}", m.nrows(), m.ncols());
        }
        if m.nrows() > MAX_DIM {
            bail!(Capacity, "dimension {} exceeds cap {MAX_DIM}", m.nrows());
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            bail!(Domain, "matrix has non-finite entries");
        }
        Ok(CMatrix(m))
    }

    pub fn identity(d: usize) -> Self {
        CMatrix(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        CMatrix(DMatrix::zeros(d, d))
    }

    pub fn from_real(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            bail!(Domain, "expected {} entries, got {}", d * d, entries.len());
        }
        CMatrix::new(DMatrix::from_row_iterator(
            d,
            d,
            entries.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            bail!(Domain, "matrix rows must all have length {d}");
        }
        CMatrix::new(DMatrix::from_row_iterator(d, d, rows.iter().flatten().copied()))
    }

    /// Projection onto the span of the given orthonormal columns.
    pub fn projector(d: usize, columns: &[DVector<C64>]) -> Self {
        let mut p = DMatrix::zeros(d, d);
        for v in columns {
            p += v * v.adjoint();
        }
        CMatrix(p)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        CMatrix(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        CMatrix(&self.0 * C64::new(s, 0.0))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &CMatrix) -> Result<Self> {
        CMatrix::new(self.0.kronecker(&other.0))
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (self - &self.adjoint()).max_abs()
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale(0.5)
    }

    /// Eigenvalues (ascending) and matching orthonormal eigenvectors of the
    /// Hermitian part of `self`.
    pub fn eigh(&self) -> (Vec<f64>, Vec<DVector<C64>>) {
        let eig = self.hermitian_part().0.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.first().copied().unwrap_or(0.0)
    }
}

impl Deref for CMatrix {
    type Target = DMatrix<C64>;
    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-&self.0)
    }
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| [self.0[(i, j)].re, self.0[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        CMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn check_dims(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        bail!(Domain, "dimension mismatch: {} vs {}", a.dim(), b.dim());
    }
    Ok(())
}

/// `⟨A, B⟩ = Tr(A†B)/d`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    check_dims(a, b)?;
    Ok(hs(a, b))
}

pub(crate) fn hs(a: &CMatrix, b: &CMatrix) -> C64 {
    let s: C64 = a.0.iter().zip(b.0.iter()).map(|(x, y)| x.conj() * y).sum();
    s / a.dim() as f64
}

/// `Re Tr(AB)/d` without forming the product.
pub(crate) fn trace_prod_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.dim();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += (a.0[(i, j)] * b.0[(j, i)]).re;
        }
    }
    s / d as f64
}

/// The maximally entangled state `Σ_i |ii⟩/√d` as a vector of length `d²`.
pub fn maximally_entangled(d: usize) -> DVector<C64> {
    let mut v = DVector::zeros(d * d);
    let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    for i in 0..d {
        v[i * d + i] = amp;
    }
    v
}

/// `|⟨ψ|A⊗B|ψ⟩ − Tr(ABᵀ)/d|` with `ψ` maximally entangled, the left side
/// evaluated by an explicit tensor product.
pub fn mes_identity_check(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_dims(a, b)?;
    let d = a.dim();
    let psi = maximally_entangled(d);
    let ab = a.0.kronecker(&b.0);
    let lhs = (psi.adjoint() * ab * &psi)[(0, 0)];
    let rhs = (a * &b.transpose()).trace() / d as f64;
    Ok((lhs - rhs).norm())
}

/// A Hermitian unitary involution.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BinaryObservable(CMatrix);

impl BinaryObservable {
    pub fn new(m: CMatrix) -> Result<Self> {
        let herm = m.hermiticity_residual();
        if herm > TOL {
            bail!(InvalidObservable, "not Hermitian (residual {herm:.3e})");
        }
        let inv = (&(&m * &m) - &CMatrix::identity(m.dim())).max_abs();
        if inv > TOL {
            bail!(InvalidObservable, "not an involution (residual {inv:.3e})");
        }
        Ok(BinaryObservable(m))
    }

    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        BinaryObservable(m)
    }

    pub fn identity(d: usize) -> Self {
        BinaryObservable(CMatrix::identity(d))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn negated(&self) -> Self {
        BinaryObservable(-&self.0)
    }

    /// The projections `(I + A)/2` and `(I - A)/2` onto the `+1` and `-1`
    /// eigenspaces.
    pub fn spectral_projections(&self) -> (CMatrix, CMatrix) {
        let id = CMatrix::identity(self.dim());
        ((&id + &self.0).scale(0.5), (&id - &self.0).scale(0.5))
    }
}

impl<'de> Deserialize<'de> for BinaryObservable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        BinaryObservable::new(CMatrix::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A projection-valued measure with labelled outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Pvm {
    outcomes: Vec<String>,
    projections: Vec<CMatrix>,
}

impl Pvm {
    pub fn new(outcomes: Vec<String>, projections: Vec<CMatrix>) -> Result<Self> {
        let pvm = Pvm::new_unchecked(outcomes, projections)?;
        pvm.validate()?;
        Ok(pvm)
    }

    pub(crate) fn new_unchecked(outcomes: Vec<String>, projections: Vec<CMatrix>) -> Result<Self> {
        if outcomes.len() != projections.len() || outcomes.is_empty() {
            bail!(InvalidMeasurement, "need one projection per outcome");
        }
        let d = projections[0].dim();
        if projections.iter().any(|p| p.dim() != d) {
            bail!(InvalidMeasurement, "projections have different dimensions");
        }
        for (i, o) in outcomes.iter().enumerate() {
            if outcomes[..i].contains(o) {
                bail!(InvalidMeasurement, "duplicate outcome {o:?}");
            }
        }
        Ok(Pvm {
            outcomes,
            projections,
        })
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        let mut sum = CMatrix::zeros(d);
        for (o, p) in self.outcomes.iter().zip(&self.projections) {
            let h = p.hermiticity_residual();
            let idem = (&(p * p) - p).max_abs();
            if h > TOL || idem > TOL {
                bail!(InvalidMeasurement, "outcome {o:?} is not an orthogonal projection");
            }
            sum = &sum + p;
        }
        let r = (&sum - &CMatrix::identity(d)).max_abs();
        if r > TOL {
            bail!(InvalidMeasurement, "projections sum to I only up to {r:.3e}");
        }
        for i in 0..self.projections.len() {
            for j in i + 1..self.projections.len() {
                let o = (&self.projections[i] * &self.projections[j]).max_abs();
                if o > TOL {
                    bail!(
                        InvalidMeasurement,
                        "outcomes {:?} and {:?} are not orthogonal",
                        self.outcomes[i],
                        self.outcomes[j]
                    );
                }
            }
        }
        Ok(())
    }

    /// Two-outcome PVM of a binary observable, outcomes `"0"` (`+1`) and
    /// `"1"` (`-1`).
    pub fn from_observable(a: &BinaryObservable) -> Self {
        let (p, m) = a.spectral_projections();
        Pvm {
            outcomes: vec!["0".into(), "1".into()],
            projections: vec![p, m],
        }
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dim()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn projections(&self) -> &[CMatrix] {
        &self.projections
    }

    pub fn projection(&self, outcome: &str) -> Option<&CMatrix> {
        self.outcomes
            .iter()
            .position(|o| o == outcome)
            .map(|i| &self.projections[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CMatrix)> {
        self.outcomes.iter().zip(&self.projections)
    }
}

/// A positive operator-valued measure with labelled outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    outcomes: Vec<String>,
    effects: Vec<CMatrix>,
}

impl Povm {
    pub fn new(outcomes: Vec<String>, effects: Vec<CMatrix>) -> Result<Self> {
        let povm = Povm::new_unchecked(outcomes, effects)?;
        povm.validate(TOL)?;
        Ok(povm)
    }

    pub(crate) fn new_unchecked(outcomes: Vec<String>, effects: Vec<CMatrix>) -> Result<Self> {
        if outcomes.len() != effects.len() || outcomes.is_empty() {
            bail!(InvalidMeasurement, "need one effect per outcome");
        }
        let d = effects[0].dim();
        if effects.iter().any(|e| e.dim() != d) {
            bail!(InvalidMeasurement, "effects have different dimensions");
        }
        Ok(Povm { outcomes, effects })
    }

    /// Checks positivity and completeness; returns `‖ΣE − I‖_max`.
    pub fn validate(&self, tol: f64) -> Result<f64> {
        let d = self.dim();
        let mut sum = CMatrix::zeros(d);
        for (o, e) in self.outcomes.iter().zip(&self.effects) {
            if e.hermiticity_residual() > tol || e.min_eigenvalue() < -tol {
                bail!(InvalidMeasurement, "effect {o:?} is not positive semidefinite");
            }
            sum = &sum + e;
        }
        let r = (&sum - &CMatrix::identity(d)).max_abs();
        if r > tol {
            bail!(InvalidMeasurement, "effects sum to I only up to {r:.3e}");
        }
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }
}

impl From<Pvm> for Povm {
    fn from(p: Pvm) -> Povm {
        Povm {
            outcomes: p.outcomes,
            effects: p.projections,
        }
    }
}

/// Joint answer distribution of a strategy on a question pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    pub alice: Vec<String>,
    pub bob: Vec<String>,
    /// `p[a][b]` indexed by positions in `alice` and `bob`.
    pub p: Vec<Vec<f64>>,
}

impl Correlation {
    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }
}

/// Anything that induces a correlation on question pairs.
pub trait Strategy {
    fn correlation(&self, x: &str, y: &str) -> Result<Correlation>;
}

/// Synchronous strategy: one PVM per question, maximally entangled state and
/// transposed operators on the second player.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncStrategy {
    dim: usize,
    pvms: BTreeMap<String, Pvm>,
}

impl SyncStrategy {
    pub fn new(dim: usize, pvms: BTreeMap<String, Pvm>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            bail!(Capacity, "strategy dimension {dim} outside 1..={MAX_DIM}");
        }
        if let Some((q, _)) = pvms.iter().find(|(_, p)| p.dim() != dim) {
            bail!(InvalidMeasurement, "PVM for {q:?} has the wrong dimension");
        }
        Ok(SyncStrategy { dim, pvms })
    }

    /// Deterministic `d = 1` strategy answering `answer(question)`.
    pub fn deterministic<'a, I>(answers: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let pvms = answers
            .into_iter()
            .map(|(q, a)| {
                let pvm = Pvm {
                    outcomes: vec![a.to_string()],
                    projections: vec![CMatrix::identity(1)],
                };
                (q.to_string(), pvm)
            })
            .collect();
        SyncStrategy { dim: 1, pvms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pvm(&self, question: &str) -> Result<&Pvm> {
        self.pvms
            .get(question)
            .ok_or_else(|| Error::Configuration(format!("no measurement for question {question:?}")))
    }

    pub fn pvms(&self) -> &BTreeMap<String, Pvm> {
        &self.pvms
    }

    /// Largest `‖A^x_a A^y_b − A^y_b A^x_a‖_max` over the given question pairs.
    pub fn commutator_residual<'a, I>(&self, pairs: I) -> Result<f64>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut worst: f64 = 0.0;
        for (x, y) in pairs {
            let (px, py) = (self.pvm(x)?, self.pvm(y)?);
            for a in px.projections() {
                for b in py.projections() {
                    worst = worst.max((&(a * b) - &(b * a)).max_abs());
                }
            }
        }
        Ok(worst)
    }
}

impl Strategy for SyncStrategy {
    fn correlation(&self, x: &str, y: &str) -> Result<Correlation> {
        let (px, py) = (self.pvm(x)?, self.pvm(y)?);
        let p = px
            .projections()
            .iter()
            .map(|a| py.projections().iter().map(|b| trace_prod_re(a, b)).collect())
            .collect();
        Ok(Correlation {
            alice: px.outcomes.clone(),
            bob: py.outcomes.clone(),
            p,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SyncStrategyJson {
    dim: usize,
    questions: BTreeMap<String, BTreeMap<String, CMatrix>>,
}

impl Serialize for SyncStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SyncStrategyJson {
            dim: self.dim,
            questions: measurements_json(self.pvms.iter().map(|(q, p)| (q, &p.outcomes, &p.projections))),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SyncStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SyncStrategyJson::deserialize(d)?;
        let mut pvms = BTreeMap::new();
        for (q, ops) in raw.questions {
            let (outcomes, projections) = ops.into_iter().unzip();
            let pvm = Pvm::new(outcomes, projections).map_err(serde::de::Error::custom)?;
            pvms.insert(q, pvm);
        }
        SyncStrategy::new(raw.dim, pvms).map_err(serde::de::Error::custom)
    }
}

fn measurements_json<'a, I>(items: I) -> BTreeMap<String, BTreeMap<String, CMatrix>>
where
    I: IntoIterator<Item = (&'a String, &'a Vec<String>, &'a Vec<CMatrix>)>,
{
    items
        .into_iter()
        .map(|(q, outs, ops)| (q.clone(), outs.iter().cloned().zip(ops.iter().cloned()).collect()))
        .collect()
}

/// General strategy: arbitrary bipartite pure state and POVMs on each side.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralStrategy {
    dim_a: usize,
    dim_b: usize,
    /// `ψ` reshaped to a `d_A × d_B` matrix.
    state: DMatrix<C64>,
    alice: BTreeMap<String, Povm>,
    bob: BTreeMap<String, Povm>,
}

impl GeneralStrategy {
    /// `state` has length `d_A·d_B` with index `i·d_B + j` for `|i⟩⊗|j⟩`.
    pub fn new(
        dim_a: usize,
        dim_b: usize,
        state: DVector<C64>,
        alice: BTreeMap<String, Povm>,
        bob: BTreeMap<String, Povm>,
    ) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || dim_a > MAX_DIM || dim_b > MAX_DIM {
            bail!(Capacity, "local dimensions must lie in 1..={MAX_DIM}");
        }
        if state.len() != dim_a * dim_b {
            bail!(Domain, "state has length {}, expected {}", state.len(), dim_a * dim_b);
        }
        let norm = state.norm();
        if (norm - 1.0).abs() > TOL {
            bail!(Domain, "state norm is {norm}, expected 1");
        }
        if alice.values().any(|m| m.dim() != dim_a) || bob.values().any(|m| m.dim() != dim_b) {
            bail!(InvalidMeasurement, "measurement dimension does not match its side");
        }
        let state = DMatrix::from_row_iterator(dim_a, dim_b, state.iter().copied());
        Ok(GeneralStrategy {
            dim_a,
            dim_b,
            state,
            alice,
            bob,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    pub fn alice(&self, x: &str) -> Result<&Povm> {
        self.alice
            .get(x)
            .ok_or_else(|| Error::Configuration(format!("Alice has no measurement for {x:?}")))
    }

    pub fn bob(&self, y: &str) -> Result<&Povm> {
        self.bob
            .get(y)
            .ok_or_else(|| Error::Configuration(format!("Bob has no measurement for {y:?}")))
    }

    pub fn state(&self) -> DVector<C64> {
        DVector::from_iterator(self.dim_a * self.dim_b, self.state.transpose().iter().copied())
    }
}

impl Strategy for GeneralStrategy {
    fn correlation(&self, x: &str, y: &str) -> Result<Correlation> {
        let (ma, mb) = (self.alice(x)?, self.bob(y)?);
        // ⟨ψ|A⊗B|ψ⟩ = Tr(M† A M Bᵀ)
        let p = ma
            .effects()
            .iter()
            .map(|a| {
                let left = self.state.adjoint() * &a.0 * &self.state;
                mb.effects()
                    .iter()
                    .map(|b| {
                        let mut s = C64::zero();
                        for i in 0..self.dim_b {
                            for j in 0..self.dim_b {
                                s += left[(i, j)] * b.0[(i, j)];
                            }
                        }
                        s.re
                    })
                    .collect()
            })
            .collect();
        Ok(Correlation {
            alice: ma.outcomes.clone(),
            bob: mb.outcomes.clone(),
            p,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GeneralStrategyJson {
    dim_a: usize,
    dim_b: usize,
    state: Vec<[f64; 2]>,
    alice: BTreeMap<String, BTreeMap<String, CMatrix>>,
    bob: BTreeMap<String, BTreeMap<String, CMatrix>>,
}

impl Serialize for GeneralStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GeneralStrategyJson {
            dim_a: self.dim_a,
            dim_b: self.dim_b,
            state: self.state().iter().map(|z| [z.re, z.im]).collect(),
            alice: measurements_json(self.alice.iter().map(|(q, m)| (q, &m.outcomes, &m.effects))),
            bob: measurements_json(self.bob.iter().map(|(q, m)| (q, &m.outcomes, &m.effects))),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeneralStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = GeneralStrategyJson::deserialize(d)?;
        let side = |m: BTreeMap<String, BTreeMap<String, CMatrix>>| -> Result<BTreeMap<String, Povm>> {
            m.into_iter()
                .map(|(q, ops)| {
                    let (o, e) = ops.into_iter().unzip();
                    Ok((q, Povm::new(o, e)?))
                })
                .collect()
        };
        let state = DVector::from_iterator(raw.state.len(), raw.state.iter().map(|[re, im]| C64::new(*re, *im)));
        let alice = side(raw.alice).map_err(D::Error::custom)?;
        let bob = side(raw.bob).map_err(D::Error::custom)?;
        GeneralStrategy::new(raw.dim_a, raw.dim_b, state, alice, bob).map_err(D::Error::custom)
    }
}

/// `ω(G, p)`, the exact expected acceptance over `π`.
pub fn winning_probability(game: &ExplicitGame, strategy: &impl Strategy) -> Result<f64> {
    let mut total = 0.0;
    for ((x, y), weight) in game.dist() {
        let corr = strategy.correlation(game.question(*x), game.question(*y))?;
        let a_idx: Vec<Option<usize>> = corr.alice.iter().map(|a| game.answer_index(*x, a)).collect();
        let b_idx: Vec<Option<usize>> = corr.bob.iter().map(|b| game.answer_index(*y, b)).collect();
        let mut win = 0.0;
        for (i, row) in corr.p.iter().enumerate() {
            let Some(a) = a_idx[i] else { continue };
            for (j, &p) in row.iter().enumerate() {
                if let Some(b) = b_idx[j] {
                    if game.accepts(*x, *y, a, b) {
                        win += p;
                    }
                }
            }
        }
        total += weight.to_f64().unwrap_or(0.0) * win;
    }
    Ok(total)
}

/// `β(G, p) = 2ω(G, p) − 1`.
pub fn bias(game: &ExplicitGame, strategy: &impl Strategy) -> Result<f64> {
    Ok(2.0 * winning_probability(game, strategy)? - 1.0)
}

/// `(|Tr(Y₁Y₂Y₃ − X₁X₂X₃)/d|, (6(3 − Σ Tr(Y_l X_l)/d))^{1/2})`.
pub fn triple_trace_gap(ys: [&BinaryObservable; 3], xs: [&BinaryObservable; 3]) -> Result<(f64, f64)> {
    let d = ys[0].dim();
    if ys.iter().chain(xs.iter()).any(|o| o.dim() != d) {
        bail!(Domain, "all six observables must share a dimension");
    }
    let y = &(ys[0].matrix() * ys[1].matrix()) * ys[2].matrix();
    let x = &(xs[0].matrix() * xs[1].matrix()) * xs[2].matrix();
    let lhs = ((&y - &x).trace() / d as f64).norm();
    let overlap: f64 = ys
        .iter()
        .zip(xs.iter())
        .map(|(y, x)| trace_prod_re(y.matrix(), x.matrix()))
        .sum();
    let rhs = (6.0 * (3.0 - overlap)).max(0.0).sqrt();
    Ok((lhs, rhs))
}

/// `Σ_a a(j)·Y_a` for a PVM whose outcomes are assignments to `context`
/// written as bit strings (`'1'` is `-1`).
pub fn observables_from_pvm(pvm: &Pvm, context: &VarSet, var: &str) -> Result<BinaryObservable> {
    let j = context
        .position(var)
        .ok_or_else(|| Error::Domain(format!("variable {var:?} is not in the context")))?;
    let mut a = CMatrix::zeros(pvm.dim());
    for (label, p) in pvm.iter() {
        let idx = match parse_point_label(label) {
            Some(i) if label.len() == context.len() => i,
            _ => bail!(Domain, "outcome {label:?} is not an assignment to the context"),
        };
        a = if (idx >> j) & 1 == 1 { &a - p } else { &a + p };
    }
    Ok(BinaryObservable::new_unchecked(a))
}

/// Pauli matrices by letter (`I`, `X`, `Y`, `Z`).
pub fn pauli(letter: char) -> Result<CMatrix> {
    let (o, i) = (C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    let l = C64::new(1.0, 0.0);
    let m = match letter {
        'I' => [l, o, o, l],
        'X' => [o, l, l, o],
        'Y' => [o, -i, i, o],
        'Z' => [l, o, o, -l],
        _ => bail!(Parse, "unknown Pauli letter {letter:?}"),
    };
    CMatrix::new(DMatrix::from_row_slice(2, 2, &m))
}

/// Tensor product of Pauli letters, e.g. `"XZ"`.
pub fn pauli_string(s: &str) -> Result<CMatrix> {
    let mut out = CMatrix::identity(1);
    for c in s.chars() {
        out = out.kron(&pauli(c)?)?;
    }
    Ok(out)
}

fn gaussian<R: RngCore + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..d {
        let rk = r[(k, k)];
        let phase = if rk.norm() > 0.0 { rk / rk.norm() } else { C64::new(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    CMatrix(q)
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    CMatrix(DMatrix::from_fn(d, d, |_, _| gaussian(rng))).hermitian_part()
}

/// `U diag(±1) U†` with Haar `U` and independent fair signs.
pub fn random_observable<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> BinaryObservable {
    let u = random_unitary(d, rng);
    let signs: Vec<f64> = (0..d).map(|_| if rng.next_u32() & 1 == 1 { -1.0 } else { 1.0 }).collect();
    let diag = CMatrix(DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        signs.iter().map(|&s| C64::new(s, 0.0)),
    )));
    let m = &(&u * &diag) * &u.adjoint();
    BinaryObservable(m.hermitian_part())
}

/// PVM whose projections are spans of random basis vectors of a Haar unitary,
/// each basis vector assigned to a uniformly random outcome.
pub fn random_pvm<R: RngCore + ?Sized>(d: usize, outcomes: &[String], rng: &mut R) -> Pvm {
    let u = random_unitary(d, rng);
    let k = outcomes.len();
    let mut groups: Vec<Vec<DVector<C64>>> = vec![Vec::new(); k];
    for c in 0..d {
        let o = (rng.next_u64() % k as u64) as usize;
        groups[o].push(u.column(c).into_owned());
    }
    Pvm {
        outcomes: outcomes.to_vec(),
        projections: groups.iter().map(|g| CMatrix::projector(d, g)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hs_inner_examples() {
        let id = CMatrix::identity(3);
        assert!((hs_inner(&id, &id).unwrap() - 1.0).norm() < ARITH_TOL);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_observable(4, &mut rng);
        assert!((hs_inner(a.matrix(), a.matrix()).unwrap() - 1.0).norm() < 1e-10);
        let (x, z) = (pauli('X').unwrap(), pauli('Z').unwrap());
        assert!(hs_inner(&x, &z).unwrap().norm() < ARITH_TOL);
        assert!(hs_inner(&x, &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn mes_identity_examples() {
        let id = CMatrix::identity(2);
        assert!(mes_identity_check(&id, &id).unwrap() <= ARITH_TOL);
        let x = pauli('X').unwrap();
        assert!(mes_identity_check(&x, &x).unwrap() <= ARITH_TOL);
        let psi = maximally_entangled(2);
        let lhs = (psi.adjoint() * x.kronecker(&x) * &psi)[(0, 0)];
        assert!((lhs - 1.0).norm() < ARITH_TOL);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_hermitian(3, &mut rng);
            let b = random_hermitian(3, &mut rng);
            assert!(mes_identity_check(&a, &b).unwrap() <= ARITH_TOL);
        }
    }

    #[test]
    fn observable_validation() {
        assert!(BinaryObservable::new(pauli('Y').unwrap()).is_ok());
        assert!(matches!(
            BinaryObservable::new(CMatrix::identity(2).scale(0.5)),
            Err(Error::InvalidObservable(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_observable(4, &mut rng);
        for v in a.matrix().eigh().0 {
            assert!((v.abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn triple_trace_examples() {
        let id = BinaryObservable::identity(4);
        let neg = id.negated();
        let (l, r) = triple_trace_gap([&id, &id, &id], [&neg, &neg, &neg]).unwrap();
        assert!((l - 2.0).abs() < ARITH_TOL && (r - 6.0).abs() < ARITH_TOL);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ys: Vec<_> = (0..3).map(|_| random_observable(4, &mut rng)).collect();
        let (l, r) = triple_trace_gap([&ys[0], &ys[1], &ys[2]], [&ys[0], &ys[1], &ys[2]]).unwrap();
        assert!(l < 1e-12 && r < 1e-5);
    }

    #[test]
    fn observables_from_pvm_examples() {
        let ctx = VarSet::new(["a", "b"]).unwrap();
        let single = Pvm::new(vec!["10".into()], vec![CMatrix::identity(2)]).unwrap();
        let a = observables_from_pvm(&single, &ctx, "a").unwrap();
        assert!((a.matrix() + &CMatrix::identity(2)).max_abs() < ARITH_TOL);
        let b = observables_from_pvm(&single, &ctx, "b").unwrap();
        assert!((b.matrix() - &CMatrix::identity(2)).max_abs() < ARITH_TOL);

        let p = CMatrix::from_real(2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let q = &CMatrix::identity(2) - &p;
        let two = Pvm::new(vec!["00".into(), "10".into()], vec![p.clone(), q]).unwrap();
        let a = observables_from_pvm(&two, &ctx, "a").unwrap();
        let expect = &p.scale(2.0) - &CMatrix::identity(2);
        assert!((a.matrix() - &expect).max_abs() < ARITH_TOL);
        assert!(observables_from_pvm(&two, &ctx, "z").is_err());
        let bad = Pvm::new(vec!["x".into()], vec![CMatrix::identity(2)]).unwrap();
        assert!(observables_from_pvm(&bad, &ctx, "a").is_err());
    }

    #[test]
    fn random_pvms_commute_through_observables() {
        let ctx = VarSet::new(["a", "b", "c"]).unwrap();
        let labels: Vec<String> = ["000", "110", "101", "011"].iter().map(|s| s.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let pvm = random_pvm(4, &labels, &mut rng);
            assert!(Pvm::new(pvm.outcomes().to_vec(), pvm.projections().to_vec()).is_ok());
            let obs: Vec<_> = ["a", "b", "c"]
                .iter()
                .map(|v| observables_from_pvm(&pvm, &ctx, v).unwrap())
                .collect();
            for x in &obs {
                assert!(BinaryObservable::new(x.matrix().clone()).is_ok());
                for y in &obs {
                    let c = &(x.matrix() * y.matrix()) - &(y.matrix() * x.matrix());
                    assert!(c.max_abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn general_strategy_matches_sync_on_mes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let outs = vec!["0".to_string(), "1".to_string()];
        let (p, q) = (random_pvm(3, &outs, &mut rng), random_pvm(3, &outs, &mut rng));
        let sync = SyncStrategy::new(3, [("x".into(), p.clone()), ("y".into(), q.clone())].into()).unwrap();
        let transpose = |m: &Pvm| {
            Povm::new(m.outcomes().to_vec(), m.projections().iter().map(|c| c.transpose()).collect()).unwrap()
        };
        let alice = [("x".to_string(), Povm::from(p.clone()))].into();
        let bob = [("y".to_string(), transpose(&q))].into();
        let gen = GeneralStrategy::new(3, 3, maximally_entangled(3), alice, bob).unwrap();
        let a = sync.correlation("x", "y").unwrap();
        let b = gen.correlation("x", "y").unwrap();
        for (r1, r2) in a.p.iter().zip(&b.p) {
            for (u, v) in r1.iter().zip(r2) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        assert!((a.total() - 1.0).abs() < TOL);
    }

    #[test]
    fn strategy_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let outs = vec!["0".to_string(), "1".to_string()];
        let s = SyncStrategy::new(2, [("q".into(), random_pvm(2, &outs, &mut rng))].into()).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: SyncStrategy = serde_json::from_str(&text).unwrap();
        assert_eq!(s.dim(), back.dim());
        let (a, b) = (s.pvm("q").unwrap(), back.pvm("q").unwrap());
        for o in a.outcomes() {
            let diff = (a.projection(o).unwrap() - b.projection(o).unwrap()).max_abs();
            assert!(diff == 0.0);
        }
    }
}
