//! Reference games with known strategies and values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::boolfun::{Sign, VarSet};
use crate::error::{Error, Result};
use crate::games::{lcs_game, ratio, ExplicitGame, Lcs, Pair};
use crate::quantum::{pauli_string, CMatrix, Pvm, SyncStrategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureName {
    Chsh,
    MagicSquare,
    ToyParity,
}

impl FixtureName {
    pub const ALL: [FixtureName; 3] = [FixtureName::Chsh, FixtureName::MagicSquare, FixtureName::ToyParity];

    pub fn as_str(self) -> &'static str {
        match self {
            FixtureName::Chsh => "chsh",
            FixtureName::MagicSquare => "magic_square",
            FixtureName::ToyParity => "toy_parity",
        }
    }
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixtureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown fixture {s:?}; expected chsh, magic_square or toy_parity")))
    }
}

/// A game together with its best known strategy and reference values.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: FixtureName,
    pub game: ExplicitGame,
    pub strategy: SyncStrategy,
    pub classical_value: BigRational,
    /// Value of `strategy`.
    pub quantum_value: f64,
}

pub fn fixture(name: FixtureName) -> Result<Fixture> {
    match name {
        FixtureName::Chsh => Ok(Fixture {
            name,
            game: chsh()?,
            strategy: tsirelson()?,
            classical_value: ratio(3, 4),
            quantum_value: (2.0 + std::f64::consts::SQRT_2) / 4.0,
        }),
        FixtureName::MagicSquare => Ok(Fixture {
            name,
            game: magic_square()?,
            strategy: magic_square_strategy()?,
            classical_value: ratio(17, 18),
            quantum_value: 1.0,
        }),
        FixtureName::ToyParity => Ok(Fixture {
            name,
            game: toy_parity()?,
            strategy: SyncStrategy::deterministic([("x", "0"), ("y", "1")]),
            classical_value: ratio(1, 1),
            quantum_value: 1.0,
        }),
    }
}

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// CHSH with separate question labels for the two players: Alice gets
/// `a0`/`a1`, Bob `b0`/`b1`, and they win iff `a ⊕ b = x ∧ y`.
pub fn chsh() -> Result<ExplicitGame> {
    let dist = [(0, 2), (0, 3), (1, 2), (1, 3)]
        .into_iter()
        .map(|p| (p, ratio(1, 4)))
        .collect();
    let bits = labels(&["0", "1"]);
    let game = ExplicitGame::new(labels(&["a0", "a1", "b0", "b1"]), vec![bits; 4], dist, |x, y, a, b| {
        if x == y {
            return a == b;
        }
        ((a ^ b) == 1) == (x == 1 && y == 3)
    })?;
    Ok(game.with_provenance("fixture:chsh"))
}

fn binary_pvm(o: &CMatrix) -> Result<Pvm> {
    let id = CMatrix::identity(o.dim());
    Pvm::new(
        labels(&["0", "1"]),
        vec![(&id + o).scale(0.5), (&id - o).scale(0.5)],
    )
}

/// Optimal qubit strategy for [`chsh`], value `(2 + √2)/4`.
pub fn tsirelson() -> Result<SyncStrategy> {
    let (z, x) = (pauli_string("Z")?, pauli_string("X")?);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let plus = (&z + &x).scale(r);
    let minus = (&z - &x).scale(r);
    let pvms = [("a0", &z), ("a1", &x), ("b0", &plus), ("b1", &minus)]
        .into_iter()
        .map(|(q, o)| Ok((q.to_string(), binary_pvm(o)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    SyncStrategy::new(2, pvms)
}

const GRID: [[&str; 3]; 3] = [["IZ", "ZI", "ZZ"], ["XI", "IX", "XX"], ["-XZ", "-ZX", "YY"]];

fn grid_operator(i: usize, j: usize) -> Result<CMatrix> {
    let s = GRID[i][j];
    match s.strip_prefix('-') {
        Some(rest) => Ok(-&pauli_string(rest)?),
        None => pauli_string(s),
    }
}

fn cell(i: usize, j: usize) -> String {
    format!("x{}{}", i + 1, j + 1)
}

/// Cells of each equation: three rows then three columns.
fn magic_lines() -> [[(usize, usize); 3]; 6] {
    let mut lines = [[(0, 0); 3]; 6];
    for k in 0..3 {
        lines[k] = [(k, 0), (k, 1), (k, 2)];
        lines[3 + k] = [(0, k), (1, k), (2, k)];
    }
    lines
}

/// Rows multiply to `+1` and columns to `-1`.
pub fn magic_square_lcs() -> Result<Lcs> {
    let variables = (0..9).map(|c| cell(c / 3, c % 3)).collect();
    let equations = magic_lines()
        .iter()
        .enumerate()
        .map(|(e, line)| {
            let ctx = VarSet::new(line.iter().map(|&(i, j)| cell(i, j)))?;
            let parity = if e < 3 { Sign::Plus } else { Sign::Minus };
            let label = if e < 3 { format!("row{}", e + 1) } else { format!("col{}", e - 2) };
            Ok((label, ctx, parity))
        })
        .collect::<Result<Vec<_>>>()?;
    Lcs::new(variables, equations)
}

/// Uniform distribution over the six equations.
pub fn magic_square_dist() -> BTreeMap<usize, BigRational> {
    (0..6).map(|e| (e, ratio(1, 6))).collect()
}

/// Constraint-variable game of the magic square: Alice gets an equation,
/// Bob one of its cells.
pub fn magic_square_lcs_game() -> Result<ExplicitGame> {
    lcs_game(&magic_square_lcs()?, &magic_square_dist())
}

/// Synchronous form of [`magic_square_lcs_game`]: each equation-cell pair is
/// asked in both orders with half the mass.
pub fn magic_square() -> Result<ExplicitGame> {
    let base = magic_square_lcs_game()?;
    let half = ratio(1, 2);
    let mut dist: BTreeMap<Pair, BigRational> = BTreeMap::new();
    for (&(x, y), p) in base.dist() {
        *dist.entry((x, y)).or_default() += p * &half;
        *dist.entry((y, x)).or_default() += p * &half;
    }
    let game = ExplicitGame::new(
        base.questions().to_vec(),
        (0..base.num_questions()).map(|x| base.answers(x).to_vec()).collect(),
        dist,
        |x, y, a, b| {
            if x == y {
                a == b
            } else if base.prob(x, y) > ratio(0, 1) {
                base.accepts(x, y, a, b)
            } else {
                base.accepts(y, x, b, a)
            }
        },
    )?;
    Ok(game.with_provenance("fixture:magic_square"))
}

/// Two-qubit operator solution: cell observables from [`GRID`], equation
/// projections `Π_j (I ± O_j)/2`.
pub fn magic_square_strategy() -> Result<SyncStrategy> {
    let lcs = magic_square_lcs()?;
    let game = magic_square_lcs_game()?;
    let mut pvms = BTreeMap::new();
    for (e, line) in magic_lines().iter().enumerate() {
        let ops = line
            .iter()
            .map(|&(i, j)| grid_operator(i, j))
            .collect::<Result<Vec<_>>>()?;
        let c = lcs.bcs().constraint(e);
        let projections = c
            .satisfying
            .members()
            .into_iter()
            .map(|pt| {
                ops.iter().enumerate().fold(CMatrix::identity(4), |acc, (j, o)| {
                    let sign = if (pt >> j) & 1 == 1 { -1.0 } else { 1.0 };
                    let factor = (&CMatrix::identity(4) + &o.scale(sign)).scale(0.5);
                    &acc * &factor
                })
            })
            .collect::<Vec<_>>();
        let q = game.question(e).to_string();
        pvms.insert(q, Pvm::new(c.answer_labels(), projections)?);
    }
    for i in 0..3 {
        for j in 0..3 {
            pvms.insert(cell(i, j), binary_pvm(&grid_operator(i, j)?)?);
        }
    }
    SyncStrategy::new(4, pvms)
}

/// Two questions that must receive different bits.
pub fn toy_parity() -> Result<ExplicitGame> {
    let bits = labels(&["0", "1"]);
    let game = ExplicitGame::new(
        labels(&["x", "y"]),
        vec![bits.clone(), bits],
        [((0, 1), ratio(1, 2)), ((1, 0), ratio(1, 2))].into(),
        |x, y, a, b| if x == y { a == b } else { a != b },
    )?;
    Ok(game.with_provenance("fixture:toy_parity"))
}

pub fn all_fixtures() -> Result<Vec<Fixture>> {
    FixtureName::ALL.into_iter().map(fixture).collect()
}
