//! Bi-objective action planning: maximise the liveability score, minimise the
//! number of turns, over binary genomes that select catalog actions. The
//! all-zero genome is infeasible (no turn taken) and is repaired by flipping
//! one random bit wherever the solvers create it.

mod epsmoea;
mod nsga2;
mod paes;
mod spea2;

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::par;
use crate::simcore::{apply_deltas, genome_to_string, ActionCatalog, Genome, SessionState};

pub use epsmoea::epsmoea;
pub use nsga2::nsga2;
pub use paes::paes;
pub use spea2::spea2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub score: f64,
    pub turns: usize,
}

impl Objectives {
    pub fn new(score: f64, turns: usize) -> Self {
        Objectives { score, turns }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub objectives: Objectives,
}

/// Pareto dominance for (maximise score, minimise turns).
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.score >= b.score && a.turns <= b.turns && (a.score > b.score || a.turns < b.turns)
}

/// Something that maps a genome to objectives.
pub trait Problem: Sync {
    fn n_bits(&self) -> usize;
    fn evaluate(&self, genome: &[bool]) -> Result<Objectives>;
    /// Range of attainable scores, used to normalise the score objective.
    fn score_bounds(&self) -> (f64, f64);
    /// Largest attainable turn count, used to normalise the turns objective.
    fn max_turns(&self) -> usize {
        self.n_bits()
    }
}

/// The simulation as an optimisation problem, starting from a session state.
pub struct SimProblem<'a> {
    pub base: &'a SessionState,
    pub forest: &'a Forest,
    pub catalog: &'a ActionCatalog,
}

impl Problem for SimProblem<'_> {
    fn n_bits(&self) -> usize {
        self.catalog.len()
    }

    fn evaluate(&self, genome: &[bool]) -> Result<Objectives> {
        if genome.len() != self.catalog.len() {
            return Err(Error::Shape { expected: self.catalog.len(), got: genome.len() });
        }
        let mut x = self.base.current.clone();
        let mut turns = 0;
        for (a, _) in self.catalog.actions.iter().zip(genome).filter(|(_, &b)| b) {
            apply_deltas(&mut x, &self.base.baseline, a);
            turns += a.cost_turns;
        }
        if turns == 0 {
            return Err(Error::Infeasible);
        }
        Ok(Objectives { score: self.forest.predict(&x)?, turns })
    }

    fn score_bounds(&self) -> (f64, f64) {
        (self.forest.class_range.0 as f64, self.forest.class_range.1 as f64)
    }

    fn max_turns(&self) -> usize {
        self.catalog.actions.iter().map(|a| a.cost_turns).sum()
    }
}

/// Score is a base value plus a fixed gain per selected bit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveProblem {
    pub base: f64,
    pub gains: Vec<f64>,
    pub bounds: (f64, f64),
}

impl Problem for AdditiveProblem {
    fn n_bits(&self) -> usize {
        self.gains.len()
    }

    fn evaluate(&self, genome: &[bool]) -> Result<Objectives> {
        if genome.len() != self.gains.len() {
            return Err(Error::Shape { expected: self.gains.len(), got: genome.len() });
        }
        let turns = genome.iter().filter(|&&b| b).count();
        if turns == 0 {
            return Err(Error::Infeasible);
        }
        let score = self.base + self.gains.iter().zip(genome).filter(|(_, &b)| b).map(|(g, _)| g).sum::<f64>();
        Ok(Objectives { score, turns })
    }

    fn score_bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

/// Objectives of a genome applied to `base` (wrapper over [`SimProblem`]).
pub fn evaluate_genome(g: &[bool], base: &SessionState, f: &Forest, catalog: &ActionCatalog) -> Result<Objectives> {
    SimProblem { base, forest: f, catalog }.evaluate(g)
}

/// Mutually non-dominated, genome-unique set of individuals in canonical
/// order (turns ascending, then score descending, then genome).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Front {
    pub members: Vec<Individual>,
}

impl Front {
    /// Non-dominated members of `pop`, duplicates of a genome collapsed.
    pub fn from_population(pop: &[Individual]) -> Front {
        let mut seen = HashSet::new();
        let unique: Vec<Individual> = pop.iter().filter(|i| seen.insert(i.genome.clone())).cloned().collect();
        let mut members: Vec<Individual> = non_dominated_indices(&unique).into_iter().map(|i| unique[i].clone()).collect();
        members.sort_by(canonical_order);
        Front { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self) -> Vec<Objectives> {
        self.members.iter().map(|m| m.objectives).collect()
    }

    /// Mutual non-dominance and genome uniqueness, checked pairwise.
    pub fn is_valid(&self) -> bool {
        let mut seen = HashSet::new();
        self.members.iter().all(|m| seen.insert(&m.genome))
            && self.members.iter().all(|a| self.members.iter().all(|b| !dominates(&a.objectives, &b.objectives)))
    }

    /// True when some member of `self` dominates `o`.
    pub fn dominates_point(&self, o: &Objectives) -> bool {
        self.members.iter().any(|m| dominates(&m.objectives, o))
    }
}

fn canonical_order(a: &Individual, b: &Individual) -> Ordering {
    a.objectives
        .turns
        .cmp(&b.objectives.turns)
        .then(b.objectives.score.total_cmp(&a.objectives.score))
        .then_with(|| a.genome.cmp(&b.genome))
}

/// Indices of the non-dominated members, O(n log n) for two objectives.
/// Members sharing a non-dominated objective vector are all kept.
pub fn non_dominated_indices(pop: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| canonical_order(&pop[a], &pop[b]));
    let mut keep = Vec::new();
    let mut best_fewer = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let t = pop[order[i]].objectives.turns;
        let level_max = pop[order[i]].objectives.score;
        let mut j = i;
        while j < order.len() && pop[order[j]].objectives.turns == t {
            let s = pop[order[j]].objectives.score;
            if s == level_max && s > best_fewer {
                keep.push(order[j]);
            }
            j += 1;
        }
        best_fewer = best_fewer.max(level_max);
        i = j;
    }
    keep.sort_unstable();
    keep
}

/// Fast non-dominated sorting: rank-ordered fronts of indices into `objs`.
pub fn non_dominated_sort(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for p in 0..n {
        for q in 0..n {
            if dominates(&objs[p], &objs[q]) {
                dominated_by_me[p].push(q);
            } else if dominates(&objs[q], &objs[p]) {
                counts[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&p| counts[p] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                counts[q] -= 1;
                if counts[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of a front. Extremes of either
/// objective get infinity; repeated copies of an objective vector after its
/// first occurrence get 0.
pub fn crowding_distance(objs: &[Objectives]) -> Vec<f64> {
    let n = objs.len();
    let mut out = vec![0.0; n];
    // First occurrence of each distinct objective vector.
    let mut firsts: Vec<usize> = Vec::new();
    for i in 0..n {
        if !firsts.iter().any(|&f| objs[f] == objs[i]) {
            firsts.push(i);
        }
    }
    if firsts.len() <= 2 {
        for &f in &firsts {
            out[f] = f64::INFINITY;
        }
        return out;
    }
    let getters: [fn(&Objectives) -> f64; 2] = [|o| o.score, |o| o.turns as f64];
    for get in getters {
        let mut order = firsts.clone();
        order.sort_by(|&a, &b| get(&objs[a]).total_cmp(&get(&objs[b])).then(a.cmp(&b)));
        let lo = get(&objs[order[0]]);
        let hi = get(&objs[order[order.len() - 1]]);
        out[order[0]] = f64::INFINITY;
        out[order[order.len() - 1]] = f64::INFINITY;
        if hi > lo {
            for w in order.windows(3) {
                out[w[1]] += (get(&objs[w[2]]) - get(&objs[w[0]])) / (hi - lo);
            }
        }
    }
    out
}

/// Exact Pareto front by enumerating every feasible genome.
pub fn brute_force_front(problem: &dyn Problem) -> Result<Front> {
    let n = problem.n_bits();
    if n > 20 {
        return Err(Error::TooLarge(n));
    }
    if n == 0 {
        return Ok(Front::default());
    }
    let total = (1usize << n) - 1;
    let evaluated = par::map_range(total, |m| {
        let mask = m + 1;
        let genome: Genome = (0..n).map(|b| mask >> b & 1 == 1).collect();
        problem.evaluate(&genome).map(|objectives| Individual { genome, objectives })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Front::from_population(&evaluated))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub population: usize,
    pub archive: usize,
    pub epsilon: f64,
    pub evaluations: usize,
    /// Per-bit flip probability; `None` means 1 / genome length.
    pub mutation_rate: Option<f64>,
    pub crossover_rate: f64,
    pub seed: u64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            population: 100,
            archive: 100,
            epsilon: 0.01,
            evaluations: 10_000,
            mutation_rate: None,
            crossover_rate: 0.9,
            seed: 0,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.archive == 0 {
            return Err(Error::Config("population and archive must be positive".into()));
        }
        if self.evaluations < self.population {
            return Err(Error::Config(format!(
                "evaluation budget {} below population {}",
                self.evaluations, self.population
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config("crossover_rate outside [0, 1]".into()));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::Config("mutation_rate outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    fn mutation_for(&self, n: usize) -> f64 {
        self.mutation_rate.unwrap_or(1.0 / n.max(1) as f64)
    }
}

/// Budgeted access to a problem. Every call to [`Evaluator::eval`] is one
/// function evaluation.
pub(crate) struct Evaluator<'a> {
    problem: &'a dyn Problem,
    budget: usize,
    used: Cell<usize>,
    bounds: (f64, f64),
    max_turns: usize,
}

impl<'a> Evaluator<'a> {
    pub(crate) fn new(problem: &'a dyn Problem, budget: usize) -> Self {
        Evaluator { problem, budget, used: Cell::new(0), bounds: problem.score_bounds(), max_turns: problem.max_turns() }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.budget - self.used.get()
    }

    pub(crate) fn used(&self) -> usize {
        self.used.get()
    }

    pub(crate) fn n_bits(&self) -> usize {
        self.problem.n_bits()
    }

    pub(crate) fn eval(&self, genome: Genome) -> Result<Individual> {
        assert!(self.remaining() > 0, "evaluation budget exceeded");
        self.used.set(self.used.get() + 1);
        let objectives = self.problem.evaluate(&genome)?;
        Ok(Individual { genome, objectives })
    }

    /// Both objectives mapped to [0, 1] and oriented for minimisation.
    pub(crate) fn normalised(&self, o: &Objectives) -> [f64; 2] {
        let (lo, hi) = self.bounds;
        let s = if hi > lo { (hi - o.score) / (hi - lo) } else { 0.0 };
        let t = if self.max_turns > 1 { (o.turns as f64 - 1.0) / (self.max_turns as f64 - 1.0) } else { 0.0 };
        [s, t]
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn repair<R: Rng>(g: &mut [bool], rng: &mut R) {
    if !g.is_empty() && g.iter().all(|&b| !b) {
        let i = rng.random_range(0..g.len());
        g[i] = true;
    }
}

pub(crate) fn random_genome<R: Rng>(n: usize, rng: &mut R) -> Genome {
    let mut g: Genome = (0..n).map(|_| rng.random_bool(0.5)).collect();
    repair(&mut g, rng);
    g
}

pub(crate) fn mutate<R: Rng>(g: &mut [bool], rate: f64, rng: &mut R) {
    for b in g.iter_mut() {
        if rng.random_bool(rate) {
            *b = !*b;
        }
    }
}

pub(crate) fn uniform_crossover<R: Rng>(a: &[bool], b: &[bool], rng: &mut R) -> (Genome, Genome) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    for i in 0..a.len() {
        if rng.random_bool(0.5) {
            std::mem::swap(&mut c1[i], &mut c2[i]);
        }
    }
    (c1, c2)
}

/// Crossover (with probability `crossover_rate`), mutation and repair.
pub(crate) fn offspring<R: Rng>(a: &[bool], b: &[bool], cfg: &AlgoConfig, rng: &mut R) -> (Genome, Genome) {
    let (mut c1, mut c2) =
        if rng.random_bool(cfg.crossover_rate) { uniform_crossover(a, b, rng) } else { (a.to_vec(), b.to_vec()) };
    let rate = cfg.mutation_for(a.len());
    for c in [&mut c1, &mut c2] {
        mutate(c, rate, rng);
        repair(c, rng);
    }
    (c1, c2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Nsga2,
    Paes,
    Spea2,
    Epsmoea,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Nsga2, Algorithm::Paes, Algorithm::Spea2, Algorithm::Epsmoea];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Nsga2 => "nsga2",
            Algorithm::Paes => "paes",
            Algorithm::Spea2 => "spea2",
            Algorithm::Epsmoea => "epsmoea",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub front: Front,
    /// Function evaluations actually spent.
    pub evaluations: usize,
}

pub fn run(algorithm: Algorithm, problem: &dyn Problem, cfg: &AlgoConfig) -> Result<RunOutcome> {
    match algorithm {
        Algorithm::Nsga2 => nsga2(problem, cfg),
        Algorithm::Paes => paes(problem, cfg),
        Algorithm::Spea2 => spea2(problem, cfg),
        Algorithm::Epsmoea => epsmoea(problem, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub genome: String,
    pub score: f64,
    pub turns: usize,
}

/// Serialised form of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub evaluations: usize,
    pub front: Vec<SolutionRecord>,
}

impl RunResult {
    pub fn new(algorithm: Algorithm, seed: u64, outcome: &RunOutcome) -> Self {
        RunResult {
            algorithm,
            seed,
            evaluations: outcome.evaluations,
            front: outcome
                .front
                .members
                .iter()
                .map(|m| SolutionRecord {
                    genome: genome_to_string(&m.genome),
                    score: m.objectives.score,
                    turns: m.objectives.turns,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(bits: &str, score: f64, turns: usize) -> Individual {
        Individual { genome: bits.chars().map(|c| c == '1').collect(), objectives: Objectives::new(score, turns) }
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&Objectives::new(4.2, 3), &Objectives::new(4.0, 5)));
        assert!(!dominates(&Objectives::new(4.2, 3), &Objectives::new(4.2, 3)));
        assert!(!dominates(&Objectives::new(4.5, 6), &Objectives::new(4.2, 3)));
        assert!(!dominates(&Objectives::new(4.2, 3), &Objectives::new(4.5, 6)));
    }

    #[test]
    fn sorting_into_fronts() {
        let objs = [Objectives::new(3.5, 1), Objectives::new(3.6, 2), Objectives::new(3.1, 1), Objectives::new(3.0, 2)];
        assert_eq!(non_dominated_sort(&objs), vec![vec![0, 1], vec![2], vec![3]]);
        assert_eq!(non_dominated_sort(&objs[..1]), vec![vec![0]]);
        let incomparable = [Objectives::new(1.0, 1), Objectives::new(2.0, 2), Objectives::new(3.0, 3)];
        assert_eq!(non_dominated_sort(&incomparable), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn fast_filter_agrees_with_sort() {
        let pop = vec![ind("10", 3.5, 1), ind("11", 3.6, 2), ind("01", 3.1, 1), ind("00", 3.5, 1), ind("111", 3.6, 3)];
        let objs: Vec<Objectives> = pop.iter().map(|p| p.objectives).collect();
        assert_eq!(non_dominated_indices(&pop), non_dominated_sort(&objs)[0]);
    }

    #[test]
    fn crowding_cases() {
        let two = [Objectives::new(1.0, 1), Objectives::new(2.0, 2)];
        assert!(crowding_distance(&two).iter().all(|d| d.is_infinite()));

        let three = [Objectives::new(1.0, 1), Objectives::new(2.0, 2), Objectives::new(3.0, 3)];
        let d = crowding_distance(&three);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-12);

        let dup = [
            Objectives::new(1.0, 1),
            Objectives::new(2.0, 2),
            Objectives::new(2.0, 2),
            Objectives::new(3.0, 3),
        ];
        let d = crowding_distance(&dup);
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn toy_oracle_front() {
        let p = AdditiveProblem { base: 3.0, gains: vec![0.5, 0.1], bounds: (1.0, 6.0) };
        let f = brute_force_front(&p).unwrap();
        assert_eq!(f.objectives(), vec![Objectives::new(3.5, 1), Objectives::new(3.6, 2)]);
        assert_eq!(f.members[0].genome, vec![true, false]);
        assert!(f.is_valid());

        let single = AdditiveProblem { base: 3.0, gains: vec![0.2], bounds: (1.0, 6.0) };
        assert_eq!(brute_force_front(&single).unwrap().members[0].genome, vec![true]);

        let big = AdditiveProblem { base: 3.0, gains: vec![0.1; 21], bounds: (1.0, 6.0) };
        assert!(matches!(brute_force_front(&big), Err(Error::TooLarge(21))));
    }

    #[test]
    fn zero_genome_infeasible() {
        let p = AdditiveProblem { base: 3.0, gains: vec![0.5, 0.1], bounds: (1.0, 6.0) };
        assert!(matches!(p.evaluate(&[false, false]), Err(Error::Infeasible)));
        assert_eq!(p.evaluate(&[false, true]).unwrap().turns, 1);
    }

    #[test]
    fn front_dedups_genomes() {
        let pop = vec![ind("10", 3.5, 1), ind("10", 3.5, 1), ind("01", 3.5, 1)];
        let f = Front::from_population(&pop);
        assert_eq!(f.len(), 2);
        assert!(f.is_valid());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("moead".parse::<Algorithm>().is_err());
    }
}
