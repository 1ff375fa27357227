use std::collections::BTreeSet;

use maasim_core::fixtures;
use maasim_core::moo::{
    brute_force_front, dominates, non_dominated_sort, run, AdditiveProblem, AlgoConfig, Algorithm, Front, Individual,
    Objectives, Problem, SimProblem,
};
use maasim_core::simcore::genome_to_string;

fn key(o: &Objectives) -> (u64, usize) {
    (o.score.to_bits(), o.turns)
}

fn points(f: &Front) -> BTreeSet<(u64, usize)> {
    f.members.iter().map(|m| key(&m.objectives)).collect()
}

fn toy_cfg(seed: u64) -> AlgoConfig {
    AlgoConfig { evaluations: 1000, seed, ..Default::default() }
}

fn hits_oracle(alg: Algorithm, p: &dyn Problem) -> usize {
    let oracle = points(&brute_force_front(p).unwrap());
    (0..10).filter(|&s| points(&run(alg, p, &toy_cfg(s)).unwrap().front) == oracle).count()
}

#[test]
fn toy_oracle_front() {
    let toy = fixtures::toy().unwrap();
    let p = SimProblem { base: &toy.session, forest: &toy.forest, catalog: &toy.catalog };
    let f = brute_force_front(&p).unwrap();
    let got: Vec<(String, f64, usize)> =
        f.members.iter().map(|m| (genome_to_string(&m.genome), m.objectives.score, m.objectives.turns)).collect();
    assert_eq!(got, vec![("10".to_string(), 3.5, 1), ("11".to_string(), 3.6, 2)]);
}

#[test]
fn every_algorithm_recovers_the_toy_front() {
    let toy = fixtures::toy().unwrap();
    let sim = SimProblem { base: &toy.session, forest: &toy.forest, catalog: &toy.catalog };
    let add = fixtures::toy_additive();
    for alg in Algorithm::ALL {
        let a = hits_oracle(alg, &sim);
        let b = hits_oracle(alg, &add);
        assert!(a >= 9 && b >= 9, "{alg}: {a}/10 simulated, {b}/10 additive");
    }
}

#[test]
fn twelve_action_fronts_are_contained_in_the_oracle() {
    let fx = fixtures::action_fixture(42).unwrap();
    let p = SimProblem { base: &fx.session, forest: &fx.forest, catalog: &fx.catalog };
    assert_eq!(p.n_bits(), 12);
    let oracle = brute_force_front(&p).unwrap();
    let oracle_pts = points(&oracle);
    for alg in Algorithm::ALL {
        for seed in 0..3 {
            let out = run(alg, &p, &AlgoConfig { evaluations: 10_000, seed, ..Default::default() }).unwrap();
            assert!(out.front.is_valid());
            assert!(out.evaluations <= 10_000);
            for m in &out.front.members {
                assert!(!oracle.dominates_point(&m.objectives), "{alg} seed {seed}: {:?} dominated", m.objectives);
                assert!(oracle_pts.contains(&key(&m.objectives)), "{alg} seed {seed}: {:?} not on the oracle", m.objectives);
            }
        }
    }
}

#[test]
fn vanishing_epsilon_keeps_the_plain_non_dominated_set() {
    let fx = fixtures::action_fixture(42).unwrap();
    let p = SimProblem { base: &fx.session, forest: &fx.forest, catalog: &fx.catalog };

    // Rank-1 points of the exhaustive population.
    let n = p.n_bits();
    let all: Vec<Objectives> = (1u32..(1 << n))
        .map(|bits| {
            let g: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            p.evaluate(&g).unwrap()
        })
        .collect();
    let rank1: BTreeSet<(u64, usize)> = non_dominated_sort(&all)[0].iter().map(|&i| key(&all[i])).collect();

    for seed in 0..3 {
        let cfg = AlgoConfig { evaluations: 10_000, epsilon: 1e-9, seed, ..Default::default() };
        let front = run(Algorithm::Epsmoea, &p, &cfg).unwrap().front;
        // One representative per point at this resolution.
        assert_eq!(front.len(), points(&front).len());
        assert_eq!(points(&front), rank1, "seed {seed}");
    }
}

#[test]
fn runs_are_deterministic() {
    let p = fixtures::plateau(10);
    for alg in Algorithm::ALL {
        let cfg = AlgoConfig { evaluations: 2000, seed: 5, ..Default::default() };
        assert_eq!(run(alg, &p, &cfg).unwrap(), run(alg, &p, &cfg).unwrap(), "{alg}");
    }
}

#[test]
fn spea2_fills_its_archive_on_a_wide_front() {
    let p = fixtures::plateau(12);
    let cfg = AlgoConfig { evaluations: 20_000, seed: 1, ..Default::default() };
    let front = run(Algorithm::Spea2, &p, &cfg).unwrap().front;
    assert_eq!(front.len(), 100);
    assert!(front.is_valid());
}

#[test]
fn single_action_front_is_that_genome() {
    let p = AdditiveProblem { base: 2.0, gains: vec![0.3], bounds: (1.0, 6.0) };
    let f = brute_force_front(&p).unwrap();
    assert_eq!(f.members, vec![Individual { genome: vec![true], objectives: Objectives::new(2.3, 1) }]);
    assert!(dominates(&Objectives::new(2.3, 1), &Objectives::new(2.0, 1)));
}
