use std::collections::BTreeMap;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use longcode::boolfun::{enumerate_functions, BoolFun, CubeSubset, NoiseSpec, Sign, VarSet};
use longcode::fixtures::{fixture, magic_square_lcs_game, FixtureName};
use longcode::games::{bcs_game, lcs_bias, lcs_game, projected_bcs, ratio, ExplicitGame, ImplicitGame, Responder};
use longcode::longcode::{
    bob_spectra, exact_test_value, extract_parallel_strategy, lift_to_bcs, soundness_audit, CompletenessStrategy,
    RandomObservables, TestObservables, TestParams, UniformResponder, DEFAULT_DELTA,
};
use longcode::obsfourier::{condition, fold_true, fourier_transform, ObsFamily};
use longcode::pipeline::{pipeline_compile, Compiled, PipelineParams};
use longcode::quantum::{random_observable, random_pvm, triple_trace_gap, winning_probability, CMatrix, SyncStrategy};
use longcode::seeding::round_rng;
use longcode::suite::{run_suite, triangle_lcs, SuiteConfig};
use longcode::transforms::{ensure_nonempty_answers, repeat, Repeated};
use longcode::value::{classical_value_exact, monte_carlo_value};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Outcome);

fn eps(p: u64, q: u64) -> NoiseSpec {
    NoiseSpec::new(p, q).unwrap()
}

fn domain(n: usize) -> VarSet {
    VarSet::new((0..n).map(|i| format!("v{i}"))).unwrap()
}

/// `Π_{x∈α} f(x)`.
fn character(alpha: u64, f: &BoolFun) -> f64 {
    (0..f.num_points())
        .filter(|x| alpha >> x & 1 == 1)
        .map(|x| f.eval(x).to_f64())
        .product()
}

/// Coefficients straight from the defining average, keyed by subset mask.
fn naive_spectrum(fam: &ObsFamily, u: &VarSet) -> BTreeMap<u64, CMatrix> {
    let fs: Vec<BoolFun> = enumerate_functions(u).unwrap().collect();
    let d = fam.members()[0].dim();
    (0..1u64 << u.num_points())
        .map(|alpha| {
            let sum = fs.iter().fold(CMatrix::zeros(d), |acc, f| {
                &acc + &fam.get(f).unwrap().matrix().scale(character(alpha, f))
            });
            (alpha, sum.scale(1.0 / fs.len() as f64))
        })
        .collect()
}

fn random_family(t: usize, rng: &mut ChaCha8Rng) -> (VarSet, ObsFamily) {
    let (n, d) = (1 + t % 2, 2 << (t / 2 % 2));
    let u = domain(n);
    let fam = ObsFamily::from_fn(u.clone(), |_| random_observable(d, rng)).unwrap();
    (u, fam)
}

fn fourier_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut agree, mut inversion, mut parseval) = (0f64, 0f64, 0f64);
    for t in 0..100 {
        let (u, fam) = random_family(t, &mut rng);
        let lib = fourier_transform(&fam)?;
        let naive = naive_spectrum(&fam, &u);
        for (&alpha, c) in &naive {
            let got = lib.coefficient(&CubeSubset::from_mask(u.clone(), alpha)?)?;
            agree = agree.max((got - c).max_abs());
        }
        for f in enumerate_functions(&u)? {
            let back = naive
                .iter()
                .fold(CMatrix::zeros(lib.dim()), |acc, (&a, c)| &acc + &c.scale(character(a, &f)));
            inversion = inversion.max((&back - fam.get(&f)?.matrix()).max_abs());
        }
        let squares = naive.values().fold(CMatrix::zeros(lib.dim()), |acc, c| &acc + &(c * c));
        parseval = parseval.max((&squares - &CMatrix::identity(lib.dim())).max_abs());
    }
    Ok((
        agree <= 1e-10 && inversion <= 1e-10 && parseval <= 1e-10,
        format!("transform vs oracle {agree:.1e}, inversion {inversion:.1e}, parseval {parseval:.1e}"),
    ))
}

fn folding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut even, mut antisym) = (0f64, 0f64);
    for t in 0..100 {
        let (u, fam) = random_family(t, &mut rng);
        let folded = fold_true(&fam)?;
        for (alpha, c) in naive_spectrum(&folded, &u) {
            if alpha.count_ones() % 2 == 0 {
                even = even.max(c.norm());
            }
        }
        for f in enumerate_functions(&u)? {
            let pair = folded.get(&f)?.matrix() + folded.get(&-&f)?.matrix();
            antisym = antisym.max(pair.max_abs());
        }
    }
    Ok((
        even <= 1e-10 && antisym <= 1e-12,
        format!("even coefficients {even:.1e}, antisymmetry {antisym:.1e}"),
    ))
}

fn conditioning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    for t in 0..100 {
        let (u, fam) = random_family(t, &mut rng);
        let c = loop {
            let c = BoolFun::random(u.clone(), &mut rng);
            if !c.is_constant(Sign::Plus) {
                break c;
            }
        };
        let unsat: u64 = (0..u.num_points()).filter(|&x| !c.eval(x).is_minus()).map(|x| 1 << x).sum();
        for (alpha, m) in naive_spectrum(&condition(&fam, &c)?, &u) {
            if alpha & unsat != 0 {
                worst = worst.max(m.norm());
            }
        }
    }
    Ok((worst <= 1e-10, format!("largest coefficient touching an unsatisfying point {worst:.1e}")))
}

fn trace_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let o: Vec<_> = (0..6).map(|_| random_observable(4, &mut rng)).collect();
        let (lhs, rhs) = triple_trace_gap([&o[0], &o[1], &o[2]], [&o[3], &o[4], &o[5]])?;
        worst = worst.max(lhs - rhs);
    }
    let y: Vec<_> = (0..3).map(|_| random_observable(4, &mut rng)).collect();
    let (lhs, rhs) = triple_trace_gap([&y[0], &y[1], &y[2]], [&y[0], &y[1], &y[2]])?;
    let equality = lhs.abs().max(rhs.abs());
    Ok((
        worst <= 1e-9 && equality <= 1e-6,
        format!("max(lhs - rhs) {worst:.2e}, equality case {equality:.1e}"),
    ))
}

/// `E_i E_{j∈V_i} Σ_φ Σ_b [φ_j = b] Tr(P^i_φ Q^j_b)/d`, mapped to a bias.
fn naive_lcs_bias(game: &ExplicitGame, ctx: &[VarSet], dist: &BTreeMap<usize, BigRational>, s: &SyncStrategy) -> f64 {
    let d = s.dim() as f64;
    let mut win = 0.0;
    for (&i, p) in dist {
        let eq = s.pvm(game.question(i)).unwrap();
        let mut inner = 0.0;
        for (j, name) in ctx[i].names().iter().enumerate() {
            let var = s.pvm(name).unwrap();
            for (phi, pe) in eq.iter() {
                let bit = &phi[j..=j];
                if let Some(q) = var.projection(bit) {
                    inner += (pe * q).trace().re / d;
                }
            }
        }
        win += p.to_f64().unwrap() * inner / ctx[i].len() as f64;
    }
    2.0 * win - 1.0
}

fn lcs_bias_formula() -> Outcome {
    let lcs = triangle_lcs()?;
    let dist: BTreeMap<usize, BigRational> = (0..3).map(|i| (i, ratio(1, 3))).collect();
    let game = lcs_game(&lcs, &dist)?;
    let ctx: Vec<VarSet> = lcs.bcs().constraints().iter().map(|c| c.context.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut cross) = (0f64, 0f64);
    for t in 0..100 {
        let d = 2 << (t % 2);
        let pvms = (0..game.num_questions())
            .map(|x| (game.question(x).to_string(), random_pvm(d, game.answers(x), &mut rng)))
            .collect();
        let s = SyncStrategy::new(d, pvms)?;
        let (direct, formula) = lcs_bias(&lcs, &dist, &s)?;
        worst = worst.max((direct - formula).abs());
        cross = cross.max((naive_lcs_bias(&game, &ctx, &dist, &s) - formula).abs());
    }
    Ok((
        worst <= 1e-10 && cross <= 1e-10,
        format!("|direct - formula| {worst:.1e}, oracle vs formula {cross:.1e}"),
    ))
}

/// Best deterministic pair: every Alice assignment against Bob's best
/// response.
fn brute_force_value(g: &ExplicitGame) -> BigRational {
    let alice: Vec<usize> = {
        let mut xs: Vec<usize> = g.dist().keys().map(|&(x, _)| x).collect();
        xs.dedup();
        xs
    };
    let radix: Vec<usize> = alice.iter().map(|&x| g.answers(x).len()).collect();
    let total: usize = radix.iter().product();
    let mut best = BigRational::zero();
    for mut k in 0..total {
        let mut choice = vec![usize::MAX; g.num_questions()];
        for (&x, &r) in alice.iter().zip(&radix) {
            choice[x] = k % r;
            k /= r;
        }
        let mut by_bob: BTreeMap<usize, Vec<(usize, &BigRational)>> = BTreeMap::new();
        for (&(x, y), p) in g.dist() {
            by_bob.entry(y).or_default().push((x, p));
        }
        let mut score = BigRational::zero();
        for (y, xs) in by_bob {
            let mut top = BigRational::zero();
            for b in 0..g.answers(y).len() {
                let mut v = BigRational::zero();
                for &(x, p) in &xs {
                    if g.accepts(x, y, choice[x], b) {
                        v += p;
                    }
                }
                if v > top {
                    top = v;
                }
            }
            score += top;
        }
        if score > best {
            best = score;
        }
    }
    best
}

fn classical_values() -> Outcome {
    let chsh = fixture(FixtureName::Chsh)?.game;
    let Repeated::Explicit(doubled) = repeat(&chsh, 2)? else {
        return Ok((false, "CHSH⊗2 did not materialize".into()));
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, g, expect) in [
        ("chsh", chsh, ratio(3, 4)),
        ("chsh⊗2", doubled, ratio(5, 8)),
        ("magic square", magic_square_lcs_game()?, ratio(17, 18)),
    ] {
        let start = Instant::now();
        let lib = classical_value_exact(&g)?;
        let secs = start.elapsed().as_secs_f64();
        let oracle = brute_force_value(&g);
        pass &= lib == oracle && oracle == expect && secs < 10.0;
        detail.push(format!("{name} {lib} (oracle {oracle}, {secs:.2} s)"));
    }
    Ok((pass, detail.join(", ")))
}

fn perfect_chain() -> Outcome {
    let ms = fixture(FixtureName::MagicSquare)?;
    let g = &ms.game;
    let value = winning_probability(g, &ms.strategy)?;
    let pairs = g.dist().keys().map(|&(x, y)| (g.question(x), g.question(y)));
    let commutator = ms.strategy.commutator_residual(pairs)?;
    let unchanged = ensure_nonempty_answers(g)?.same_game(g);
    let pb = projected_bcs(g, 3)?;
    let lifted = lift_to_bcs(&pb, g, &ms.strategy)?;
    let lifted_value = winning_probability(&bcs_game(&pb.bcs, &pb.dist.as_pair_dist())?, &lifted)?;
    Ok((
        (1.0 - value).abs() <= 1e-9 && commutator <= 1e-8 && (1.0 - lifted_value).abs() <= 1e-8 && unchanged,
        format!("value {value:.12}, commutators {commutator:.1e}, lifted {lifted_value:.12}, repair is identity {unchanged}"),
    ))
}

fn compile(name: FixtureName, epsilon: NoiseSpec, u: usize, h: usize, seed: u64) -> (Compiled, CompletenessStrategy) {
    let f = fixture(name).unwrap();
    let c = pipeline_compile(&f.game, &PipelineParams::new(epsilon, u, h, seed).unwrap()).unwrap();
    let honest = c.honest_strategy(&f.strategy).unwrap();
    (c, honest)
}

fn count_wins<G: ImplicitGame, S: Responder<G>>(game: &G, s: &S, rounds: u64, seed: u64) -> u64 {
    (0..rounds)
        .map(|i| {
            let mut rng = round_rng(seed, i);
            let (qa, qb) = game.sample(&mut rng).unwrap();
            let (a, b) = s.respond(game, &qa, &qb, &mut rng).unwrap();
            u64::from(game.decide(&qa, &qb, &a, &b).unwrap())
        })
        .sum()
}

fn completeness() -> Outcome {
    let (toy, honest) = compile(FixtureName::ToyParity, eps(1, 10), 1, 1, 0);
    let exact = exact_test_value(toy.params(), &honest)?.value;
    let (noiseless, honest0) = compile(FixtureName::ToyParity, NoiseSpec::noiseless(), 1, 1, 0);
    let exact0 = exact_test_value(noiseless.params(), &honest0)?.value;

    let (ms, honest) = compile(FixtureName::MagicSquare, eps(1, 10), 1, 3, 8);
    let est = monte_carlo_value(&ms.test, &honest, 100_000, 8)?;
    let prefix = monte_carlo_value(&ms.test, &honest, 2000, 8)?;
    let recount = count_wins(&ms.test, &honest, 2000, 8) as f64 / 2000.0;
    Ok((
        exact >= 0.9 - 1e-12
            && (exact - 0.9).abs() <= 1e-12
            && (exact0 - 1.0).abs() <= 1e-12
            && est.point >= 0.9 - est.radius
            && recount == prefix.point,
        format!(
            "toy exact {exact:.15} (ε = 0: {exact0:.15}), magic square {:.5} ± {:.5} over 10^5 rounds, sequential recount agrees {}",
            est.point,
            est.radius,
            recount == prefix.point
        ),
    ))
}

fn soundness() -> Outcome {
    let (toy, honest) = compile(FixtureName::ToyParity, eps(1, 100), 1, 1, 0);
    let r = soundness_audit(toy.params(), &honest, DEFAULT_DELTA)?;
    let delta = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    let extraction_floor = 4.0 * 0.01 * delta * delta;
    let scalar = (1..=64).all(|n| {
        let n = n as f64;
        n.powf(-0.5) >= (4.0f64 * 0.01).sqrt() * (1.0 - 0.02f64).powf(n)
    });
    let pass = r.test_value >= 71.0 / 72.0
        && r.claim.pass
        && r.fourier_form.lhs >= delta
        && r.extraction.lhs >= extraction_floor
        && (r.extraction.rhs - extraction_floor).abs() < 1e-15
        && r.scalar.pass
        && scalar;
    Ok((
        pass,
        format!(
            "test value {:.4} ≥ 71/72; claim {:.4} ≤ {:.4}; Fourier form {:.4} ≥ δ = {:.4}; extracted {:.4} ≥ {:.5}; scalar margin {:.3e}",
            r.test_value, r.claim.lhs, r.claim.rhs, r.fourier_form.lhs, delta, r.extraction.lhs, extraction_floor, r.scalar.margin
        ),
    ))
}

/// Alice outcomes with weight must be answers of the repeated constraint
/// game, which lists satisfying assignments only.
fn outside_answers(c: &Compiled, strategy: &impl TestObservables) -> Result<(f64, usize), Box<dyn std::error::Error>> {
    let params: &TestParams = c.params();
    let spectra = bob_spectra(params, strategy)?;
    let ex = extract_parallel_strategy(params, &spectra)?;
    let Repeated::Explicit(game) = repeat(&bcs_game(params.bcs(), &params.dist().as_pair_dist())?, params.u())? else {
        return Err("repeated game did not materialize".into());
    };
    let mut bad = ex.alice_violations;
    let mut seen = std::collections::BTreeSet::new();
    for &(x, _) in game.dist().keys() {
        if !seen.insert(x) {
            continue;
        }
        let povm = ex.strategy.alice(game.question(x))?;
        let total = povm.effects().iter().fold(CMatrix::zeros(povm.dim()), |acc, e| &acc + e);
        let residual = (&total - &CMatrix::identity(povm.dim())).max_abs();
        if residual > 1e-8 {
            bad += 1;
        }
        for (label, e) in povm.outcomes().iter().zip(povm.effects()) {
            if e.max_abs() > 1e-9 && game.answer_index(x, label).is_none() {
                bad += 1;
            }
        }
    }
    Ok((ex.povm_residual, bad))
}

fn extraction_validity() -> Outcome {
    let mut worst = 0f64;
    let mut violations = 0;
    let mut audited = 0;
    for u in [1, 2] {
        for epsilon in [eps(1, 100), eps(1, 10)] {
            let (c, honest) = compile(FixtureName::ToyParity, epsilon, u, 1, 0);
            let (r, v) = outside_answers(&c, &honest)?;
            worst = worst.max(r);
            violations += v;
            for seed in 0..3 {
                let (r, v) = outside_answers(&c, &RandomObservables { dim: 2, seed })?;
                worst = worst.max(r);
                violations += v;
            }
            audited += 4;
        }
    }
    Ok((
        worst <= 1e-8 && violations == 0,
        format!("{audited} strategies, POVM residual {worst:.1e}, violations {violations}"),
    ))
}

fn uniform_answers() -> Outcome {
    let (ms, _) = compile(FixtureName::MagicSquare, eps(1, 10), 1, 3, 11);
    let n = 100_000u64;
    let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
    let lib = monte_carlo_value(&ms.test, &UniformResponder, n, 11)?;
    let wins: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = round_rng(12, i);
            let (qa, qb) = ms.test.sample(&mut rng).unwrap();
            let mut coins = ChaCha8Rng::seed_from_u64(i ^ 0x5eed);
            let a = [0; 3].map(|_| if coins.random::<bool>() { Sign::Minus } else { Sign::Plus });
            let b = if coins.random::<bool>() { Sign::Minus } else { Sign::Plus };
            u64::from(ms.test.decide(&qa, &qb, &a, &b).unwrap())
        })
        .sum();
    let own = wins as f64 / n as f64;
    Ok((
        (lib.point - 0.25).abs() <= 3.0 * sigma && (own - 0.25).abs() <= 3.0 * sigma,
        format!("library {:.5}, independent coins {own:.5}, 3σ = {:.5}", lib.point, 3.0 * sigma),
    ))
}

const ALL_SUITES: &str = r#"
seed = 12

[[suite]]
kind = "fourier"
trials = 10

[[suite]]
kind = "trace"
trials = 50

[[suite]]
kind = "lcs_bias"
trials = 10

[[suite]]
kind = "classical"

[[suite]]
kind = "perfect"

[[suite]]
kind = "completeness"
fixture = "toy_parity"
exact = true
samples = 500

[[suite]]
kind = "soundness"
epsilon = "1/100"

[[suite]]
kind = "corrupted_audit"

[[suite]]
kind = "uniform"
samples = 500

[[suite]]
kind = "seesaw"
fixture = "chsh"
dim = 2
iterations = 20
"#;

fn determinism() -> Outcome {
    let cfg = SuiteConfig::parse(ALL_SUITES)?;
    let one = serde_json::to_vec(&run_suite(&cfg)?)?;
    let two = serde_json::to_vec(&run_suite(&cfg)?)?;
    Ok((one == two, format!("{} suites, {} report bytes, identical {}", cfg.suites.len(), one.len(), one == two)))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("Fourier identities", fourier_identities),
        ("folding lemma", folding),
        ("conditioning lemma", conditioning),
        ("trace inequality", trace_inequality),
        ("LCS bias formula", lcs_bias_formula),
        ("classical values", classical_values),
        ("perfect-strategy chain", perfect_chain),
        ("completeness", completeness),
        ("soundness machinery", soundness),
        ("extraction validity", extraction_validity),
        ("uniform answering", uniform_answers),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1} s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
