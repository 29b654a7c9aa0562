//! Boolean cubes, subsets of cubes and Boolean functions.
//!
//! Everything here uses the multiplicative convention: `+1` is *false* and
//! `-1` is *true*. A cube point over a [`VarSet`] of `n` variables is stored
//! as an index in `0..2^n` whose bit `i` is set iff variable `i` equals `-1`.
//! Truth tables and subsets are bitmasks over those indices; for a
//! [`BoolFun`] a set bit means the value `-1`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Mul, Neg};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{bail, Error, Result};

/// Largest supported cube dimension.
pub const MAX_CUBE_VARS: usize = 16;
/// Largest domain for which all functions may be enumerated.
pub const MAX_ENUM_VARS: usize = 4;

/// A value in `{+1, -1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// `true` maps to `-1`.
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn is_minus(self) -> bool {
        self == Sign::Minus
    }

    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.to_i8())
    }

    pub fn from_i64(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => bail!(Parse, "expected +1 or -1, got {v}"),
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Sign) -> Sign {
        Sign::from_bit(self.is_minus() ^ rhs.is_minus())
    }
}

impl Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        Sign::from_bit(!self.is_minus())
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.to_i8())
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Sign::from_i64(v).map_err(serde::de::Error::custom)
    }
}

/// An ordered set of distinct variable names.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VarSet(Arc<[String]>);

impl VarSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() > MAX_CUBE_VARS {
            bail!(
                Capacity,
                "variable set has {} names, cap is {MAX_CUBE_VARS}",
                names.len()
            );
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                bail!(Domain, "duplicate variable name {n:?}");
            }
        }
        Ok(VarSet(names.into()))
    }

    pub fn empty() -> Self {
        VarSet(Vec::new().into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    /// Number of points of the cube `{±1}^self`.
    pub fn num_points(&self) -> usize {
        1usize << self.len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    pub fn is_subset_of(&self, other: &VarSet) -> bool {
        self.0.iter().all(|n| other.position(n).is_some())
    }

    /// Concatenation of pairwise disjoint sets, in the given order.
    pub fn disjoint_union<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a VarSet>,
    {
        let names: Vec<String> = parts
            .into_iter()
            .flat_map(|p| p.names().iter().cloned())
            .collect();
        VarSet::new(names)
    }

    /// Positions of `sub`'s variables inside `self`.
    pub fn restriction_to(&self, sub: &VarSet) -> Result<Restriction> {
        let mut positions = Vec::with_capacity(sub.len());
        for n in sub.names() {
            match self.position(n) {
                Some(p) => positions.push(p),
                None => bail!(Domain, "variable {n:?} is not in the enclosing set"),
            }
        }
        Ok(Restriction { positions })
    }

    /// Rename every variable with a common prefix.
    pub fn prefixed(&self, prefix: &str) -> VarSet {
        VarSet(self.0.iter().map(|n| format!("{prefix}{n}")).collect())
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Serialize for VarSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for VarSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        VarSet::new(names).map_err(serde::de::Error::custom)
    }
}

/// Index map from a cube over `W` onto a cube over `U ⊆ W`.
#[derive(Clone, Debug)]
pub struct Restriction {
    positions: Vec<usize>,
}

impl Restriction {
    pub fn apply(&self, index: usize) -> usize {
        self.positions
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &p)| acc | (((index >> p) & 1) << k))
    }
}

/// Fixed-length bitmask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub(crate) struct Bits {
    len: usize,
    words: Vec<u64>,
}

impl Bits {
    pub(crate) fn zeros(len: usize) -> Self {
        Bits {
            len,
            words: vec![0; len.div_ceil(64).max(1)],
        }
    }

    fn tail_mask(&self) -> u64 {
        let r = self.len % 64;
        if r == 0 {
            u64::MAX
        } else {
            (1u64 << r) - 1
        }
    }

    fn normalize(&mut self) {
        let m = self.tail_mask();
        if let Some(last) = self.words.last_mut() {
            *last &= m;
        }
    }

    pub(crate) fn ones(len: usize) -> Self {
        let mut b = Bits {
            len,
            words: vec![u64::MAX; len.div_ceil(64).max(1)],
        };
        b.normalize();
        b
    }

    pub(crate) fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub(crate) fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let w = &mut self.words[i / 64];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub(crate) fn toggle(&mut self, i: usize) {
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub(crate) fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn xor(&self, o: &Bits) -> Bits {
        Bits {
            len: self.len,
            words: self.words.iter().zip(&o.words).map(|(a, b)| a ^ b).collect(),
        }
    }

    pub(crate) fn and(&self, o: &Bits) -> Bits {
        Bits {
            len: self.len,
            words: self.words.iter().zip(&o.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub(crate) fn not(&self) -> Bits {
        let mut b = Bits {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        b.normalize();
        b
    }

    pub(crate) fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub(crate) fn numeric_cmp(&self, o: &Bits) -> Ordering {
        self.words.iter().rev().cmp(o.words.iter().rev())
    }

    pub(crate) fn from_u64(len: usize, v: u64) -> Bits {
        let mut b = Bits::zeros(len);
        b.words[0] = v;
        b.normalize();
        b
    }

    pub(crate) fn as_u64(&self) -> Option<u64> {
        (self.len <= 64).then(|| self.words[0])
    }

    pub(crate) fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Bits {
        let mut b = Bits {
            len,
            words: (0..len.div_ceil(64).max(1)).map(|_| rng.next_u64()).collect(),
        };
        b.normalize();
        b
    }

    fn hex_digits(&self) -> usize {
        self.len.div_ceil(4).max(1)
    }

    /// Lowercase hex of the mask as an integer; point 0 is the least
    /// significant bit.
    pub(crate) fn to_hex(&self) -> String {
        let digits = self.hex_digits();
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = d * 4;
            let nib = (self.words[bit / 64] >> (bit % 64)) & 0xf;
            s.push(char::from_digit(nib as u32, 16).expect("nibble"));
        }
        s
    }

    pub(crate) fn from_hex(len: usize, s: &str) -> Result<Bits> {
        let mut b = Bits::zeros(len);
        if s.len() != b.hex_digits() {
            bail!(
                Parse,
                "truth table for {len} points needs {} hex digits, got {}",
                b.hex_digits(),
                s.len()
            );
        }
        for (d, c) in s.chars().rev().enumerate() {
            let nib = match c {
                '0'..='9' | 'a'..='f' => c.to_digit(16).expect("hex digit") as u64,
                _ => bail!(Parse, "invalid lowercase hex digit {c:?}"),
            };
            let bit = d * 4;
            b.words[bit / 64] |= nib << (bit % 64);
        }
        let before = b.words.clone();
        b.normalize();
        if before != b.words {
            bail!(Parse, "truth table has bits beyond its {len} points");
        }
        Ok(b)
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

/// A point of `{±1}^domain`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CubePoint {
    domain: VarSet,
    index: usize,
}

impl CubePoint {
    pub fn from_index(domain: VarSet, index: usize) -> Result<Self> {
        if index >= domain.num_points() {
            bail!(Domain, "point index {index} out of range");
        }
        Ok(CubePoint { domain, index })
    }

    pub fn from_values(domain: VarSet, values: &[Sign]) -> Result<Self> {
        if values.len() != domain.len() {
            bail!(
                Domain,
                "point has {} values for {} variables",
                values.len(),
                domain.len()
            );
        }
        let index = values
            .iter()
            .enumerate()
            .fold(0, |acc, (i, v)| acc | (usize::from(v.is_minus()) << i));
        Ok(CubePoint { domain, index })
    }

    pub fn domain(&self) -> &VarSet {
        &self.domain
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn values(&self) -> Vec<Sign> {
        (0..self.domain.len())
            .map(|i| Sign::from_bit((self.index >> i) & 1 == 1))
            .collect()
    }

    pub fn value(&self, var: usize) -> Sign {
        Sign::from_bit((self.index >> var) & 1 == 1)
    }

    /// Bit-string label: character `i` is `'1'` iff variable `i` is `-1`.
    pub fn label(&self) -> String {
        point_label(self.index, self.domain.len())
    }
}

pub(crate) fn point_label(index: usize, n: usize) -> String {
    (0..n)
        .map(|i| if (index >> i) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub(crate) fn parse_point_label(label: &str) -> Option<usize> {
    let mut idx = 0usize;
    for (i, c) in label.chars().enumerate() {
        match c {
            '0' => {}
            '1' => idx |= 1 << i,
            _ => return None,
        }
    }
    Some(idx)
}

/// Restriction `x|_U` of a point over `W`.
pub fn restrict(x: &CubePoint, sub: &VarSet) -> Result<CubePoint> {
    let r = x.domain.restriction_to(sub)?;
    Ok(CubePoint {
        domain: sub.clone(),
        index: r.apply(x.index),
    })
}

/// A subset of `{±1}^domain`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CubeSubset {
    domain: VarSet,
    bits: Bits,
}

impl CubeSubset {
    pub fn empty(domain: VarSet) -> Self {
        let n = domain.num_points();
        CubeSubset {
            domain,
            bits: Bits::zeros(n),
        }
    }

    pub fn full(domain: VarSet) -> Self {
        let n = domain.num_points();
        CubeSubset {
            domain,
            bits: Bits::ones(n),
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(domain: VarSet, indices: I) -> Result<Self> {
        let mut s = CubeSubset::empty(domain);
        for i in indices {
            if i >= s.domain.num_points() {
                bail!(Domain, "point index {i} out of range");
            }
            s.bits.set(i, true);
        }
        Ok(s)
    }

    /// Subset with membership mask `mask` (cube of at most 64 points).
    pub fn from_mask(domain: VarSet, mask: u64) -> Result<Self> {
        let n = domain.num_points();
        if n > 64 {
            bail!(Capacity, "integer masks cover at most 64 points");
        }
        if n < 64 && mask >> n != 0 {
            bail!(Domain, "mask has bits beyond {n} points");
        }
        Ok(CubeSubset {
            domain,
            bits: Bits::from_u64(n, mask),
        })
    }

    pub fn from_hex(domain: VarSet, hex: &str) -> Result<Self> {
        let bits = Bits::from_hex(domain.num_points(), hex)?;
        Ok(CubeSubset { domain, bits })
    }

    pub fn to_hex(&self) -> String {
        self.bits.to_hex()
    }

    pub fn domain(&self) -> &VarSet {
        &self.domain
    }

    pub fn contains(&self, index: usize) -> bool {
        self.bits.get(index)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> Vec<usize> {
        self.bits.iter_ones().collect()
    }

    pub fn mask(&self) -> Option<u64> {
        self.bits.as_u64()
    }

    pub fn symmetric_difference(&self, other: &CubeSubset) -> Result<CubeSubset> {
        same_domain(&self.domain, &other.domain)?;
        Ok(CubeSubset {
            domain: self.domain.clone(),
            bits: self.bits.xor(&other.bits),
        })
    }

    /// The subset as the function that is `-1` (true) exactly on members.
    pub fn indicator(&self) -> BoolFun {
        BoolFun {
            domain: self.domain.clone(),
            bits: self.bits.clone(),
        }
    }
}

fn same_domain(a: &VarSet, b: &VarSet) -> Result<()> {
    if a != b {
        bail!(Domain, "domain mismatch: {a:?} vs {b:?}");
    }
    Ok(())
}

/// `π₂`: points of `{±1}^U` hit an odd number of times by restricting `α`.
pub fn pi2(alpha: &CubeSubset, sub: &VarSet) -> Result<CubeSubset> {
    let r = alpha.domain.restriction_to(sub)?;
    Ok(pi2_with(alpha, sub, &r))
}

pub(crate) fn pi2_with(alpha: &CubeSubset, sub: &VarSet, r: &Restriction) -> CubeSubset {
    let mut out = CubeSubset::empty(sub.clone());
    for y in alpha.bits.iter_ones() {
        out.bits.toggle(r.apply(y));
    }
    out
}

/// A function `{±1}^domain → {±1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoolFun {
    domain: VarSet,
    bits: Bits,
}

impl BoolFun {
    pub fn constant(domain: VarSet, value: Sign) -> Self {
        let n = domain.num_points();
        let bits = match value {
            Sign::Plus => Bits::zeros(n),
            Sign::Minus => Bits::ones(n),
        };
        BoolFun { domain, bits }
    }

    pub fn from_fn(domain: VarSet, mut f: impl FnMut(usize) -> Sign) -> Self {
        let n = domain.num_points();
        let mut bits = Bits::zeros(n);
        for i in 0..n {
            if f(i).is_minus() {
                bits.set(i, true);
            }
        }
        BoolFun { domain, bits }
    }

    /// Function whose table bitmask is `table` (cubes of at most 64 points).
    pub fn from_table(domain: VarSet, table: u64) -> Result<Self> {
        Ok(CubeSubset::from_mask(domain, table)?.indicator())
    }

    pub fn from_hex(domain: VarSet, hex: &str) -> Result<Self> {
        let bits = Bits::from_hex(domain.num_points(), hex)?;
        Ok(BoolFun { domain, bits })
    }

    pub fn to_hex(&self) -> String {
        self.bits.to_hex()
    }

    pub fn random<R: RngCore + ?Sized>(domain: VarSet, rng: &mut R) -> Self {
        let bits = Bits::random(domain.num_points(), rng);
        BoolFun { domain, bits }
    }

    pub fn domain(&self) -> &VarSet {
        &self.domain
    }

    pub fn num_points(&self) -> usize {
        self.bits.len
    }

    /// Table bitmask as an integer, when the cube has at most 64 points.
    pub fn table(&self) -> Option<u64> {
        self.bits.as_u64()
    }

    pub fn eval(&self, index: usize) -> Sign {
        Sign::from_bit(self.bits.get(index))
    }

    pub fn eval_point(&self, x: &CubePoint) -> Result<Sign> {
        same_domain(&self.domain, &x.domain)?;
        Ok(self.eval(x.index))
    }

    /// Number of points mapped to `-1`.
    pub fn count_true(&self) -> usize {
        self.bits.count_ones()
    }

    /// The satisfying set `{x : f(x) = -1}`.
    pub fn true_set(&self) -> CubeSubset {
        CubeSubset {
            domain: self.domain.clone(),
            bits: self.bits.clone(),
        }
    }

    pub fn is_constant(&self, value: Sign) -> bool {
        match value {
            Sign::Plus => self.count_true() == 0,
            Sign::Minus => self.count_true() == self.bits.len,
        }
    }

    /// Pointwise product.
    pub fn times(&self, other: &BoolFun) -> Result<BoolFun> {
        same_domain(&self.domain, &other.domain)?;
        Ok(BoolFun {
            domain: self.domain.clone(),
            bits: self.bits.xor(&other.bits),
        })
    }

    /// The function `y ↦ self(y|_U)` on the larger domain `wide`.
    pub fn lift(&self, wide: &VarSet) -> Result<BoolFun> {
        let r = wide.restriction_to(&self.domain)?;
        Ok(self.lift_with(wide, &r))
    }

    pub(crate) fn lift_with(&self, wide: &VarSet, r: &Restriction) -> BoolFun {
        BoolFun::from_fn(wide.clone(), |y| self.eval(r.apply(y)))
    }

    pub(crate) fn numeric_cmp(&self, other: &BoolFun) -> Ordering {
        self.bits.numeric_cmp(&other.bits)
    }
}

impl Neg for &BoolFun {
    type Output = BoolFun;
    fn neg(self) -> BoolFun {
        BoolFun {
            domain: self.domain.clone(),
            bits: self.bits.not(),
        }
    }
}

impl Neg for BoolFun {
    type Output = BoolFun;
    fn neg(self) -> BoolFun {
        -&self
    }
}

/// `m(f)`: `-1` iff strictly more points map to `-1` than to `+1`.
pub fn majority(f: &BoolFun) -> Sign {
    let t = f.count_true();
    Sign::from_bit(2 * t > f.num_points())
}

/// `χ_α(f) = ∏_{x∈α} f(x)`.
pub fn chi(alpha: &CubeSubset, f: &BoolFun) -> Result<Sign> {
    same_domain(&alpha.domain, &f.domain)?;
    Ok(chi_unchecked(alpha, f))
}

pub(crate) fn chi_unchecked(alpha: &CubeSubset, f: &BoolFun) -> Sign {
    Sign::from_bit(alpha.bits.and(&f.bits).count_ones() % 2 == 1)
}

/// The section `s_U(f)` together with `m(f·s_U(f))`.
///
/// `s_U(f)` is whichever of `f, -f` takes `+1` at the all-`+1` point; the
/// sign is `+1` when that is `f` itself.
pub fn section(f: &BoolFun) -> (BoolFun, Sign) {
    if f.eval(0).is_minus() {
        (-f, Sign::Minus)
    } else {
        (f.clone(), Sign::Plus)
    }
}

/// `f ∧ C` with `-1` as true.
pub fn and_fold(f: &BoolFun, c: &BoolFun) -> Result<BoolFun> {
    same_domain(&f.domain, &c.domain)?;
    Ok(BoolFun {
        domain: f.domain.clone(),
        bits: f.bits.and(&c.bits),
    })
}

/// Deterministic rule choosing one of `g∧C`, `(-g)∧C`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionPolicy {
    /// The candidate with the numerically smaller table bitmask.
    #[default]
    LexMinBitmask,
    /// The candidate that is `+1` at the lowest-index point of `C`.
    PlusAtFirstTrue,
}

impl SectionPolicy {
    pub fn id(self) -> &'static str {
        match self {
            SectionPolicy::LexMinBitmask => "lex-min-bitmask",
            SectionPolicy::PlusAtFirstTrue => "plus-at-first-true",
        }
    }
}

/// `(s_{g,C}, m_{g,C})`: the chosen representative of `{g∧C, (-g)∧C}` and
/// `+1` iff it equals `g∧C`.
pub fn section_conditioned(
    g: &BoolFun,
    c: &BoolFun,
    policy: SectionPolicy,
) -> Result<(BoolFun, Sign)> {
    same_domain(&g.domain, &c.domain)?;
    if c.is_constant(Sign::Plus) {
        bail!(EmptyConstraint, "cannot condition on the constant +1 function");
    }
    let pos = BoolFun {
        domain: g.domain.clone(),
        bits: g.bits.and(&c.bits),
    };
    let neg = BoolFun {
        domain: g.domain.clone(),
        bits: g.bits.not().and(&c.bits),
    };
    let keep_pos = match policy {
        SectionPolicy::LexMinBitmask => pos.numeric_cmp(&neg) == Ordering::Less,
        SectionPolicy::PlusAtFirstTrue => {
            let first = c.bits.iter_ones().next().expect("nonempty constraint");
            !pos.bits.get(first)
        }
    };
    Ok(if keep_pos {
        (pos, Sign::Plus)
    } else {
        (neg, Sign::Minus)
    })
}

/// Noise rate `ε = p/q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoiseSpec {
    p: u64,
    q: u64,
}

impl NoiseSpec {
    /// A reduced rational with `0 < p/q < 1/2`.
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if q == 0 || p == 0 || 2 * (p as u128) >= q as u128 {
            bail!(Domain, "noise rate must satisfy 0 < p/q < 1/2, got {p}/{q}");
        }
        let g = num_integer::gcd(p, q);
        Ok(NoiseSpec { p: p / g, q: q / g })
    }

    /// The degenerate rate `ε = 0`; only meant for tests.
    pub fn noiseless() -> Self {
        NoiseSpec { p: 0, q: 1 }
    }

    pub fn numer(&self) -> u64 {
        self.p
    }

    pub fn denom(&self) -> u64 {
        self.q
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn is_noiseless(&self) -> bool {
        self.p == 0
    }

    /// Exact Bernoulli(p/q) draw.
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> bool {
        self.p > 0 && rng.random_range(0..self.q) < self.p
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (p, q) = s
            .trim()
            .split_once('/')
            .ok_or_else(|| Error::Parse(format!("expected p/q, got {s:?}")))?;
        let p: u64 = p
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad numerator: {e}")))?;
        let q: u64 = q
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad denominator: {e}")))?;
        if p == 0 && q > 0 {
            return Ok(NoiseSpec::noiseless());
        }
        NoiseSpec::new(p, q)
    }
}

impl Serialize for NoiseSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NoiseSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `μ` with each point independently `-1` with probability exactly `ε`.
pub fn sample_noise<R: RngCore + ?Sized>(spec: &NoiseSpec, domain: &VarSet, rng: &mut R) -> BoolFun {
    BoolFun::from_fn(domain.clone(), |_| Sign::from_bit(spec.draw(rng)))
}

/// All functions on `domain` in ascending table order.
pub fn enumerate_functions(domain: &VarSet) -> Result<impl Iterator<Item = BoolFun>> {
    if domain.len() > MAX_ENUM_VARS {
        bail!(
            Capacity,
            "cannot enumerate functions on {} variables (cap {MAX_ENUM_VARS})",
            domain.len()
        );
    }
    let n = domain.num_points();
    let d = domain.clone();
    Ok((0..1u64 << n).map(move |t| BoolFun {
        domain: d.clone(),
        bits: Bits::from_u64(n, t),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vs(names: &[&str]) -> VarSet {
        VarSet::new(names.iter().copied()).unwrap()
    }

    #[test]
    fn restrict_examples() {
        let w = vs(&["w1", "w2"]);
        let x = CubePoint::from_values(w.clone(), &[Sign::Minus, Sign::Plus]).unwrap();
        let r = restrict(&x, &vs(&["w1"])).unwrap();
        assert_eq!(r.values(), vec![Sign::Minus]);
        assert_eq!(restrict(&x, &w).unwrap(), x);
        assert!(restrict(&x, &VarSet::empty()).unwrap().values().is_empty());
        assert!(matches!(restrict(&x, &vs(&["z"])), Err(Error::Domain(_))));
    }

    #[test]
    fn varset_rejects_duplicates_and_oversize() {
        assert!(VarSet::new(["a", "a"]).is_err());
        let many: Vec<String> = (0..17).map(|i| format!("v{i}")).collect();
        assert!(matches!(VarSet::new(many), Err(Error::Capacity(_))));
    }

    #[test]
    fn pi2_examples() {
        let w = vs(&["a", "b"]);
        let u = vs(&["a"]);
        assert!(pi2(&CubeSubset::empty(w.clone()), &u).unwrap().is_empty());
        // y = (-1, -1) is index 3; restriction to a is index 1.
        let single = CubeSubset::from_indices(w.clone(), [3]).unwrap();
        assert_eq!(pi2(&single, &u).unwrap().members(), vec![1]);
        // indices 1 and 3 agree on a.
        let pair = CubeSubset::from_indices(w.clone(), [1, 3]).unwrap();
        assert!(pi2(&pair, &u).unwrap().is_empty());
        assert!(pi2(&pair, &vs(&["c"])).is_err());
    }

    #[test]
    fn majority_examples() {
        let u = vs(&["x"]);
        assert_eq!(majority(&BoolFun::constant(u.clone(), Sign::Minus)), Sign::Minus);
        assert_eq!(majority(&BoolFun::from_table(u.clone(), 0b01).unwrap()), Sign::Plus);
        assert_eq!(majority(&BoolFun::constant(u, Sign::Plus)), Sign::Plus);
    }

    #[test]
    fn chi_examples() {
        let u = vs(&["x", "y"]);
        for t in 0..16 {
            let f = BoolFun::from_table(u.clone(), t).unwrap();
            assert_eq!(chi(&CubeSubset::empty(u.clone()), &f).unwrap(), Sign::Plus);
            let x0 = CubeSubset::from_indices(u.clone(), [2]).unwrap();
            assert_eq!(chi(&x0, &f).unwrap(), f.eval(2));
        }
        let one = BoolFun::constant(u.clone(), Sign::Plus);
        for m in 0..16 {
            let a = CubeSubset::from_mask(u.clone(), m).unwrap();
            assert_eq!(chi(&a, &one).unwrap(), Sign::Plus);
        }
    }

    #[test]
    fn section_examples() {
        let u = vs(&["x", "y"]);
        for f in enumerate_functions(&u).unwrap() {
            let (s, m) = section(&f);
            let (s_neg, m_neg) = section(&-&f);
            assert_eq!(s.eval(0), Sign::Plus);
            assert_eq!(s, s_neg);
            assert_eq!(m * m_neg, Sign::Minus);
            if f.eval(0) == Sign::Plus {
                assert_eq!(s, f);
            } else {
                assert_eq!(s, -&f);
            }
            // the sign is m(f·s)
            assert_eq!(m, majority(&f.times(&s).unwrap()));
        }
    }

    #[test]
    fn and_fold_examples() {
        let u = vs(&["x"]);
        let f = BoolFun::from_fn(u.clone(), |i| if i == 0 { Sign::Minus } else { Sign::Plus });
        let all_true = BoolFun::constant(u.clone(), Sign::Minus);
        let all_false = BoolFun::constant(u.clone(), Sign::Plus);
        assert_eq!(and_fold(&f, &all_true).unwrap(), f);
        assert_eq!(and_fold(&f, &all_false).unwrap(), all_false);
        // f=(-1,+1), C=(-1,-1) gives (-1,+1)
        let expect = BoolFun::from_table(u.clone(), 0b01).unwrap();
        assert_eq!(and_fold(&f, &all_true).unwrap(), expect);
    }

    #[test]
    fn section_conditioned_examples() {
        let u = vs(&["x", "y"]);
        let all_true = BoolFun::constant(u.clone(), Sign::Minus);
        for g in enumerate_functions(&u).unwrap() {
            let (s, m) = section_conditioned(&g, &all_true, SectionPolicy::default()).unwrap();
            let lo = if g.table() < (-&g).table() { g.clone() } else { -&g };
            assert_eq!(s, lo);
            assert_eq!(m == Sign::Plus, s == g);
        }
        for c in enumerate_functions(&u).unwrap().skip(1) {
            for g in enumerate_functions(&u).unwrap() {
                for policy in [SectionPolicy::LexMinBitmask, SectionPolicy::PlusAtFirstTrue] {
                    let (s1, m1) = section_conditioned(&g, &c, policy).unwrap();
                    let (s2, m2) = section_conditioned(&-&g, &c, policy).unwrap();
                    assert_eq!(s1, s2);
                    assert_eq!(m1 * m2, Sign::Minus);
                    assert_eq!((s1.clone(), m1), section_conditioned(&g, &c, policy).unwrap());
                }
            }
        }
        let none = BoolFun::constant(u.clone(), Sign::Plus);
        assert!(matches!(
            section_conditioned(&all_true, &none, SectionPolicy::default()),
            Err(Error::EmptyConstraint(_))
        ));
    }

    #[test]
    fn noise_sampling() {
        let w = vs(&["a", "b", "c", "d"]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mu = sample_noise(&NoiseSpec::noiseless(), &w, &mut rng);
        assert!(mu.is_constant(Sign::Plus));

        let spec = NoiseSpec::new(1, 10).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(sample_noise(&spec, &w, &mut a), sample_noise(&spec, &w, &mut b));

        // 10^5 draws; binomial 3σ interval around p/q.
        let n = 100_000usize;
        let draws = 6250;
        let mut hits = 0usize;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..draws {
            hits += sample_noise(&spec, &w, &mut rng).count_true();
        }
        let p = 0.1;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::new(1, 2).is_err());
        assert!(NoiseSpec::new(0, 5).is_err());
        let e = NoiseSpec::new(2, 20).unwrap();
        assert_eq!((e.numer(), e.denom()), (1, 10));
        assert_eq!("1/72".parse::<NoiseSpec>().unwrap().to_string(), "1/72");
        assert!("3/4".parse::<NoiseSpec>().is_err());
    }

    #[test]
    fn enumeration() {
        assert_eq!(enumerate_functions(&vs(&["a"])).unwrap().count(), 4);
        assert_eq!(enumerate_functions(&vs(&["a", "b"])).unwrap().count(), 16);
        let first = enumerate_functions(&vs(&["a", "b"])).unwrap().next().unwrap();
        assert!(first.is_constant(Sign::Plus));
        assert!(matches!(
            enumerate_functions(&vs(&["a", "b", "c", "d", "e"])),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn hex_layout() {
        let u = vs(&["a", "b", "c"]);
        let f = BoolFun::from_table(u.clone(), 0b1000_0001).unwrap();
        assert_eq!(f.to_hex(), "81");
        assert_eq!(BoolFun::from_hex(u.clone(), "81").unwrap(), f);
        assert!(BoolFun::from_hex(u.clone(), "8").is_err());
        assert!(BoolFun::from_hex(u.clone(), "8G").is_err());
        let one = vs(&["a"]);
        assert!(BoolFun::from_hex(one, "4").is_err());
    }
}
