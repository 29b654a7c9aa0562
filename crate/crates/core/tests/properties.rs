use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use longcode::boolfun::{
    chi, pi2, restrict, section, section_conditioned, BoolFun, CubePoint, CubeSubset, NoiseSpec, SectionPolicy, Sign,
    VarSet,
};
use longcode::fixtures::{fixture, FixtureName};
use longcode::games::{format_rational, parse_rational, ExplicitGame};
use longcode::longcode::{decide, sample_round, TestParams, UniformResponder};
use longcode::obsfourier::{fold_true, fourier_transform, inverse_transform, parseval_residual, ObsFamily};
use longcode::pipeline::{pipeline_compile, PipelineParams};
use longcode::quantum::{random_observable, random_pvm, BinaryObservable, CMatrix, Pvm, SyncStrategy};
use longcode::seeding::round_rng;
use longcode::value::monte_carlo_value;
use num_rational::BigRational;
use num_traits::{One, Zero};

fn domain(n: usize) -> VarSet {
    VarSet::new((0..n).map(|i| format!("x{i}"))).unwrap()
}

fn fun(n: usize, table: u64) -> BoolFun {
    let mask = if n == 4 { u64::from(u16::MAX) } else { (1u64 << (1 << n)) - 1 };
    BoolFun::from_table(domain(n), table & mask).unwrap()
}

fn subset(n: usize, mask: u64) -> CubeSubset {
    let full = if n == 4 { u64::from(u16::MAX) } else { (1u64 << (1 << n)) - 1 };
    CubeSubset::from_mask(domain(n), mask & full).unwrap()
}

fn params(name: FixtureName, h: usize) -> TestParams {
    let f = fixture(name).unwrap();
    let p = PipelineParams::new(NoiseSpec::new(1, 10).unwrap(), 1, h, 0).unwrap();
    pipeline_compile(&f.game, &p).unwrap().params().clone()
}

fn toy() -> &'static TestParams {
    static P: OnceLock<TestParams> = OnceLock::new();
    P.get_or_init(|| params(FixtureName::ToyParity, 1))
}

fn magic() -> &'static TestParams {
    static P: OnceLock<TestParams> = OnceLock::new();
    P.get_or_init(|| params(FixtureName::MagicSquare, 3))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn varset_rejects_duplicates_and_keeps_order(names in prop::collection::btree_set("[a-z]{1,3}", 1..6), seed: u64) {
        let mut names: Vec<String> = names.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(names.as_mut_slice(), &mut rng);
        let v = VarSet::new(names.clone()).unwrap();
        let back: VarSet = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        prop_assert_eq!(back.names(), names.as_slice());
        let mut dup = names.clone();
        dup.push(names[0].clone());
        prop_assert!(VarSet::new(dup).is_err());
    }

    #[test]
    fn points_have_one_value_per_variable(n in 0usize..5, index: usize) {
        let d = domain(n);
        let x = CubePoint::from_index(d.clone(), index % d.num_points()).unwrap();
        prop_assert_eq!(x.values().len(), n);
        prop_assert_eq!(CubePoint::from_values(d, &x.values()).unwrap().index(), x.index());
    }

    #[test]
    fn restriction_agrees_on_the_subdomain(n in 1usize..5, index: usize, keep: u8) {
        let w = domain(n);
        let sub: Vec<String> = w.names().iter().enumerate().filter(|(i, _)| keep >> i & 1 == 1).map(|(_, s)| s.clone()).collect();
        let u = VarSet::new(sub).unwrap();
        let x = CubePoint::from_index(w.clone(), index % w.num_points()).unwrap();
        let y = restrict(&x, &u).unwrap();
        for (j, name) in u.names().iter().enumerate() {
            prop_assert_eq!(y.value(j), x.value(w.position(name).unwrap()));
        }
        prop_assert!(restrict(&y, &w).is_err() || u.len() == w.len());
    }

    #[test]
    fn tables_round_trip_through_hex(n in 0usize..5, table: u64) {
        let f = fun(n, table);
        prop_assert_eq!(BoolFun::from_hex(domain(n), &f.to_hex()).unwrap(), f.clone());
        prop_assert_eq!(f.count_true() + (-&f).count_true(), f.num_points());
    }

    #[test]
    fn characters_are_multiplicative(n in 0usize..5, a: u64, b: u64, s: u64, t: u64) {
        let (alpha, beta) = (subset(n, a), subset(n, b));
        let (f, g) = (fun(n, s), fun(n, t));
        let fg = f.times(&g).unwrap();
        prop_assert_eq!(chi(&alpha, &fg).unwrap(), chi(&alpha, &f).unwrap() * chi(&alpha, &g).unwrap());
        let both = alpha.symmetric_difference(&beta).unwrap();
        prop_assert_eq!(chi(&both, &f).unwrap(), chi(&alpha, &f).unwrap() * chi(&beta, &f).unwrap());
    }

    #[test]
    fn pi2_counts_restrictions_mod_two(a: u64) {
        let w = domain(2);
        let u = VarSet::new(["x0"]).unwrap();
        let alpha = subset(2, a);
        let image = pi2(&alpha, &u).unwrap();
        for y in 0..2 {
            let hits = alpha.members().iter().filter(|&&x| x & 1 == y).count();
            prop_assert_eq!(image.contains(y), hits % 2 == 1);
        }
        prop_assert_eq!(pi2(&alpha, &w).unwrap(), alpha);
    }

    #[test]
    fn sections_pick_a_canonical_representative(n in 0usize..5, table: u64) {
        let f = fun(n, table);
        let (s, m) = section(&f);
        prop_assert_eq!(s.eval(0), Sign::Plus);
        prop_assert_eq!(if m == Sign::Plus { s.clone() } else { -&s }, f.clone());
        let (s2, m2) = section(&-&f);
        prop_assert_eq!(s2, s);
        prop_assert_eq!(m2, -m);
    }

    #[test]
    fn conditioned_sections_live_inside_the_constraint(n in 1usize..5, table: u64, c: u64, plus_first: bool) {
        let c = fun(n, c);
        prop_assume!(!c.is_constant(Sign::Plus));
        let policy = if plus_first { SectionPolicy::PlusAtFirstTrue } else { SectionPolicy::LexMinBitmask };
        let g = fun(n, table);
        let (s, m) = section_conditioned(&g, &c, policy).unwrap();
        let (s2, m2) = section_conditioned(&-&g, &c, policy).unwrap();
        prop_assert_eq!(&s, &s2);
        prop_assert_eq!(m, -m2);
        for x in 0..s.num_points() {
            if s.eval(x).is_minus() {
                prop_assert!(c.eval(x).is_minus());
            }
        }
    }

    #[test]
    fn noise_rates_are_reduced(p in 1u64..1000, q in 1u64..1000) {
        match NoiseSpec::new(p, q) {
            Ok(e) => {
                prop_assert!(2 * p < q);
                prop_assert_eq!(num_integer::gcd(e.numer(), e.denom()), 1);
                prop_assert_eq!(e.to_string().parse::<NoiseSpec>().unwrap(), e);
                prop_assert_eq!(e.numer() * q, p * e.denom());
            }
            Err(_) => prop_assert!(2 * p >= q),
        }
    }

    #[test]
    fn rationals_round_trip(p in 0i64..1000, q in 1i64..1000) {
        let r = BigRational::new(p.into(), q.into());
        prop_assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r.clone());
        if p > 0 {
            prop_assert!(parse_rational(&format_rational(&-r)).is_err());
        }
    }

    #[test]
    fn random_observables_are_binary(d in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_observable(d, &mut rng);
        prop_assert!(BinaryObservable::new(a.matrix().clone()).is_ok());
        let json = serde_json::to_string(a.matrix()).unwrap();
        let back: CMatrix = serde_json::from_str(&json).unwrap();
        prop_assert!((&back - a.matrix()).max_abs() == 0.0);
    }

    #[test]
    fn random_pvms_are_valid(d in 1usize..7, k in 1usize..5, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcomes: Vec<String> = (0..k).map(|i| i.to_string()).collect();
        let pvm = random_pvm(d, &outcomes, &mut rng);
        prop_assert!(Pvm::new(pvm.outcomes().to_vec(), pvm.projections().to_vec()).is_ok());
        let s = SyncStrategy::new(d, [("q".to_string(), pvm)].into()).unwrap();
        let back: SyncStrategy = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&s).unwrap());
    }

    #[test]
    fn spectra_invert_and_satisfy_parseval(n in 1usize..3, wide: bool, seed: u64) {
        let d = if wide { 4 } else { 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fam = ObsFamily::from_fn(domain(n), |_| random_observable(d, &mut rng)).unwrap();
        let spec = fourier_transform(&fam).unwrap();
        prop_assert!(parseval_residual(&spec) <= 1e-10);
        for (alpha, c) in spec.iter() {
            prop_assert!(c.hermiticity_residual() <= 1e-10, "{:?}", alpha);
        }
        for f in longcode::boolfun::enumerate_functions(&domain(n)).unwrap() {
            let back = inverse_transform(&spec, &f).unwrap();
            prop_assert!((&back - fam.get(&f).unwrap().matrix()).max_abs() <= 1e-10);
        }
        for (alpha, c) in fourier_transform(&fold_true(&fam).unwrap()).unwrap().iter() {
            if alpha.len() % 2 == 0 {
                prop_assert!(c.max_abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn games_round_trip_through_json(name in prop::sample::select(FixtureName::ALL.to_vec())) {
        let g = fixture(name).unwrap().game;
        let back: ExplicitGame = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert!(back.same_game(&g));
        let total = g.dist().values().fold(BigRational::zero(), |acc, p| acc + p);
        prop_assert!(total.is_one());
        prop_assert!(g.dist().values().all(|p| *p > BigRational::zero()));
    }

    #[test]
    fn sampled_rounds_are_well_formed(seed: u64, index: u64, square: bool) {
        let params = if square { magic() } else { toy() };
        let (a, b) = sample_round(params, &mut round_rng(seed, index)).unwrap();
        let (again, _) = sample_round(params, &mut round_rng(seed, index)).unwrap();
        prop_assert_eq!(&a, &again);
        prop_assert!(a.u.is_subset_of(&a.w));
        prop_assert!(!a.c.is_constant(Sign::Plus));
        let mu = a.noise().unwrap();
        let lifted = a.f.lift(&a.w).unwrap();
        prop_assert_eq!(lifted.times(&a.g).unwrap().times(mu).unwrap(), a.gprime.clone());
        let (queries, rhs) = a.queries(params.policy()).unwrap();
        prop_assert_eq!(&queries[b.slot.index()], &b.query);
        prop_assert_eq!(section(&queries[0].carried).0, queries[0].carried.clone());
        // Any answer with the right parity and a matching slot is accepted.
        let answer = [Sign::Plus, Sign::Plus, rhs];
        let verdict = decide(params, &a, &b, answer, answer[b.slot.index()]).unwrap();
        prop_assert!(verdict.accepted());
        let flipped = decide(params, &a, &b, [Sign::Minus, Sign::Plus, rhs], Sign::Minus).unwrap();
        prop_assert!(!flipped.linear_ok);
        prop_assert_eq!(flipped.accepted(), flipped.linear_ok && flipped.consistency_ok);
    }

    #[test]
    fn params_round_trip_preserves_the_sampler(seed: u64, square: bool) {
        let params = if square { magic() } else { toy() };
        let back: TestParams = serde_json::from_str(&serde_json::to_string(params).unwrap()).unwrap();
        let one = sample_round(params, &mut round_rng(seed, 0)).unwrap();
        let two = sample_round(&back, &mut round_rng(seed, 0)).unwrap();
        prop_assert_eq!(serde_json::to_string(&one.0).unwrap(), serde_json::to_string(&two.0).unwrap());
        prop_assert_eq!(one.1, two.1);
    }

    #[test]
    fn estimates_are_probabilities(seed: u64, n in 100u64..400) {
        let test = longcode::longcode::as_implicit_game(toy().clone());
        let est = monte_carlo_value(&test, &UniformResponder, n, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&est.point));
        prop_assert!(est.radius >= 0.0);
        prop_assert_eq!(est.samples, n);
    }

    #[test]
    fn paper_mode_bounds_the_noise(p in 1u64..50, q in 3u64..5000) {
        prop_assume!(2 * p < q);
        let e = NoiseSpec::new(p, q).unwrap();
        let ok = PipelineParams::paper(e, 1, 1, 0).is_ok();
        prop_assert_eq!(ok, 72 * e.numer() < e.denom());
    }
}
