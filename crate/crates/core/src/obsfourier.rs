//! Fourier analysis of families of binary observables indexed by Boolean
//! functions.
//!
//! A family assigns an observable `A_f` to every `f : {±1}^U → {±1}`. Its
//! coefficient at `α ⊆ {±1}^U` is `Â_α = E_f χ_α(f) A_f`.

use crate::boolfun::{
    chi_unchecked, enumerate_functions, section, section_conditioned, BoolFun, CubeSubset, Sign,
    SectionPolicy, VarSet,
};
use crate::error::{bail, Result};
use crate::quantum::{BinaryObservable, CMatrix};

/// Largest domain stored densely.
pub const MAX_DENSE_VARS: usize = 2;
/// Largest domain for on-demand conditioned spectra.
pub const MAX_SPECTRUM_VARS: usize = 4;
/// Largest satisfying set for on-demand conditioned spectra.
pub const MAX_CONSTRAINT_POINTS: usize = 10;

/// A family of observables produced on demand.
pub trait FamilySource: Sync {
    fn domain(&self) -> &VarSet;
    fn dim(&self) -> usize;
    fn observable(&self, f: &BoolFun) -> Result<CMatrix>;
}

impl<T: FamilySource + ?Sized> FamilySource for &T {
    fn domain(&self) -> &VarSet {
        (**self).domain()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn observable(&self, f: &BoolFun) -> Result<CMatrix> {
        (**self).observable(f)
    }
}

/// A complete family over a domain of at most [`MAX_DENSE_VARS`] variables,
/// indexed by truth-table bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsFamily {
    domain: VarSet,
    dim: usize,
    members: Vec<BinaryObservable>,
}

fn num_functions(domain: &VarSet) -> usize {
    1usize << domain.num_points()
}

impl ObsFamily {
    pub fn new(domain: VarSet, members: Vec<BinaryObservable>) -> Result<Self> {
        if domain.len() > MAX_DENSE_VARS {
            bail!(Capacity, "dense families need at most {MAX_DENSE_VARS} variables");
        }
        if members.len() != num_functions(&domain) {
            bail!(
                Configuration,
                "family has {} observables, expected {}",
                members.len(),
                num_functions(&domain)
            );
        }
        let dim = members[0].dim();
        if members.iter().any(|m| m.dim() != dim) {
            bail!(Domain, "family members have different dimensions");
        }
        Ok(ObsFamily { domain, dim, members })
    }

    pub fn from_fn(domain: VarSet, mut f: impl FnMut(&BoolFun) -> BinaryObservable) -> Result<Self> {
        if domain.len() > MAX_DENSE_VARS {
            bail!(Capacity, "dense families need at most {MAX_DENSE_VARS} variables");
        }
        let members = enumerate_functions(&domain)?.map(|g| f(&g)).collect();
        ObsFamily::new(domain, members)
    }

    /// Materializes a source over a small domain.
    pub fn from_source(src: &impl FamilySource) -> Result<Self> {
        let domain = src.domain().clone();
        if domain.len() > MAX_DENSE_VARS {
            bail!(Capacity, "dense families need at most {MAX_DENSE_VARS} variables");
        }
        let members = enumerate_functions(&domain)?
            .map(|g| src.observable(&g).map(BinaryObservable::new_unchecked))
            .collect::<Result<_>>()?;
        ObsFamily::new(domain, members)
    }

    pub fn get(&self, f: &BoolFun) -> Result<&BinaryObservable> {
        if f.domain() != &self.domain {
            bail!(Domain, "function domain does not match the family");
        }
        let t = f.table().expect("dense domains fit a word") as usize;
        Ok(&self.members[t])
    }

    pub fn members(&self) -> &[BinaryObservable] {
        &self.members
    }
}

impl FamilySource for ObsFamily {
    fn domain(&self) -> &VarSet {
        &self.domain
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn observable(&self, f: &BoolFun) -> Result<CMatrix> {
        Ok(self.get(f)?.matrix().clone())
    }
}

/// All Fourier coefficients of a dense family, indexed by subset bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsSpectrum {
    domain: VarSet,
    dim: usize,
    coeffs: Vec<CMatrix>,
}

impl ObsSpectrum {
    pub fn new(domain: VarSet, coeffs: Vec<CMatrix>) -> Result<Self> {
        if domain.len() > MAX_DENSE_VARS {
            bail!(Capacity, "dense spectra need at most {MAX_DENSE_VARS} variables");
        }
        if coeffs.len() != num_functions(&domain) {
            bail!(Configuration, "spectrum needs one coefficient per subset");
        }
        let dim = coeffs[0].dim();
        if coeffs.iter().any(|c| c.dim() != dim) {
            bail!(Domain, "coefficients have different dimensions");
        }
        Ok(ObsSpectrum { domain, dim, coeffs })
    }

    pub fn domain(&self) -> &VarSet {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficient(&self, alpha: &CubeSubset) -> Result<&CMatrix> {
        if alpha.domain() != &self.domain {
            bail!(Domain, "subset domain does not match the spectrum");
        }
        Ok(&self.coeffs[alpha.mask().expect("dense domains fit a word") as usize])
    }

    /// `(α, Â_α)` in ascending bitmask order.
    pub fn iter(&self) -> impl Iterator<Item = (CubeSubset, &CMatrix)> {
        self.coeffs.iter().enumerate().map(|(m, c)| {
            let alpha = CubeSubset::from_mask(self.domain.clone(), m as u64).expect("in range");
            (alpha, c)
        })
    }
}

/// `(A + A†)/2`, logging how far `A` was from Hermitian.
fn hermitize(a: CMatrix) -> CMatrix {
    let r = a.hermiticity_residual();
    if r > 0.0 {
        log::trace!("symmetrized Fourier coefficient, residual {r:.3e}");
    }
    a.hermitian_part()
}

/// `Â_α` by full enumeration of the function space.
pub fn coefficient(src: &impl FamilySource, alpha: &CubeSubset) -> Result<CMatrix> {
    if alpha.domain() != src.domain() {
        bail!(Domain, "subset domain does not match the family");
    }
    let n = num_functions(src.domain()) as f64;
    let mut acc = CMatrix::zeros(src.dim());
    for f in enumerate_functions(src.domain())? {
        let a = src.observable(&f)?;
        acc = match chi_unchecked(alpha, &f) {
            Sign::Plus => &acc + &a,
            Sign::Minus => &acc - &a,
        };
    }
    Ok(hermitize(acc.scale(1.0 / n)))
}

/// The full spectrum of a dense family.
pub fn fourier_transform(fam: &ObsFamily) -> Result<ObsSpectrum> {
    let n = fam.members.len();
    let coeffs = (0..n as u64)
        .map(|m| {
            let alpha = CubeSubset::from_mask(fam.domain.clone(), m)?;
            coefficient(fam, &alpha)
        })
        .collect::<Result<_>>()?;
    ObsSpectrum::new(fam.domain.clone(), coeffs)
}

/// `Σ_α χ_α(f) Â_α`.
pub fn inverse_transform(spec: &ObsSpectrum, f: &BoolFun) -> Result<CMatrix> {
    if f.domain() != &spec.domain {
        bail!(Domain, "function domain does not match the spectrum");
    }
    let mut acc = CMatrix::zeros(spec.dim);
    for (alpha, c) in spec.iter() {
        acc = match chi_unchecked(&alpha, f) {
            Sign::Plus => &acc + c,
            Sign::Minus => &acc - c,
        };
    }
    Ok(acc)
}

/// `‖Σ_α Â_α² − I‖_max`.
pub fn parseval_residual(spec: &ObsSpectrum) -> f64 {
    parseval_sum_residual(spec.coeffs.iter(), spec.dim)
}

pub(crate) fn parseval_sum_residual<'a>(coeffs: impl Iterator<Item = &'a CMatrix>, dim: usize) -> f64 {
    let mut acc = CMatrix::zeros(dim);
    for c in coeffs {
        acc = &acc + &(c * c);
    }
    (&acc - &CMatrix::identity(dim)).max_abs()
}

/// `f ↦ m_f A_{s_U(f)}`.
pub struct FoldedTrue<S>(pub S);

impl<S: FamilySource> FamilySource for FoldedTrue<S> {
    fn domain(&self) -> &VarSet {
        self.0.domain()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn observable(&self, f: &BoolFun) -> Result<CMatrix> {
        let (s, m) = section(f);
        let a = self.0.observable(&s)?;
        Ok(if m.is_minus() { -&a } else { a })
    }
}

/// `f ↦ A_{f∧C}`.
pub struct Conditioned<S> {
    pub inner: S,
    pub constraint: BoolFun,
}

impl<S: FamilySource> FamilySource for Conditioned<S> {
    fn domain(&self) -> &VarSet {
        self.inner.domain()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn observable(&self, f: &BoolFun) -> Result<CMatrix> {
        self.inner.observable(&crate::boolfun::and_fold(f, &self.constraint)?)
    }
}

/// `f ↦ m_{f,C} A_{s_{f,C}}`.
pub struct FoldedConditioned<S> {
    inner: S,
    constraint: BoolFun,
    policy: SectionPolicy,
}

impl<S: FamilySource> FoldedConditioned<S> {
    pub fn new(inner: S, constraint: BoolFun, policy: SectionPolicy) -> Result<Self> {
        if constraint.domain() != inner.domain() {
            bail!(Domain, "constraint domain does not match the family");
        }
        if constraint.is_constant(Sign::Plus) {
            bail!(EmptyConstraint, "cannot fold over an unsatisfiable constraint");
        }
        Ok(FoldedConditioned {
            inner,
            constraint,
            policy,
        })
    }

    pub fn constraint(&self) -> &BoolFun {
        &self.constraint
    }
}

impl<S: FamilySource> FamilySource for FoldedConditioned<S> {
    fn domain(&self) -> &VarSet {
        self.inner.domain()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn observable(&self, f: &BoolFun) -> Result<CMatrix> {
        let (s, m) = section_conditioned(f, &self.constraint, self.policy)?;
        let a = self.inner.observable(&s)?;
        Ok(if m.is_minus() { -&a } else { a })
    }
}

/// Folding over true.
pub fn fold_true(fam: &ObsFamily) -> Result<ObsFamily> {
    ObsFamily::from_source(&FoldedTrue(fam))
}

/// Conditioning upon `C`.
pub fn condition(fam: &ObsFamily, c: &BoolFun) -> Result<ObsFamily> {
    if c.domain() != &fam.domain {
        bail!(Domain, "constraint domain does not match the family");
    }
    ObsFamily::from_source(&Conditioned {
        inner: fam,
        constraint: c.clone(),
    })
}

/// Folding over true and conditioning upon `C` in one step.
pub fn fold_and_condition(fam: &ObsFamily, c: &BoolFun, policy: SectionPolicy) -> Result<ObsFamily> {
    ObsFamily::from_source(&FoldedConditioned::new(fam, c.clone(), policy)?)
}

/// Nonzero-candidate coefficients of a family that depends on `f` only
/// through `f∧C`: every `β ⊆ C^{-1}(-1)` with its coefficient, computed as
/// `2^{-t} Σ_{h ⊆ T} χ_β(h) A_h` over the `t` satisfying points `T`.
/// Coefficients at `β ⊄ T` vanish and are omitted.
pub fn conditioned_spectrum(src: &impl FamilySource, c: &BoolFun) -> Result<Vec<(CubeSubset, CMatrix)>> {
    let domain = src.domain();
    if c.domain() != domain {
        bail!(Domain, "constraint domain does not match the family");
    }
    if domain.len() > MAX_SPECTRUM_VARS {
        bail!(Capacity, "exact spectra need at most {MAX_SPECTRUM_VARS} variables");
    }
    let t_points = c.true_set().members();
    let t = t_points.len();
    if t > MAX_CONSTRAINT_POINTS {
        bail!(Capacity, "constraint has {t} satisfying points, cap {MAX_CONSTRAINT_POINTS}");
    }
    let subset = |mask: usize| {
        CubeSubset::from_indices(
            domain.clone(),
            (0..t).filter(|k| (mask >> k) & 1 == 1).map(|k| t_points[k]),
        )
    };
    let members: Vec<CMatrix> = (0..1usize << t)
        .map(|h| src.observable(&subset(h)?.indicator()))
        .collect::<Result<_>>()?;
    let scale = 1.0 / (1usize << t) as f64;
    (0..1usize << t)
        .map(|beta| {
            let mut acc = CMatrix::zeros(src.dim());
            for (h, a) in members.iter().enumerate() {
                acc = if (beta & h).count_ones() % 2 == 1 { &acc - a } else { &acc + a };
            }
            Ok((subset(beta)?, hermitize(acc.scale(scale))))
        })
        .collect()
}
