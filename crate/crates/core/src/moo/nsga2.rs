use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{crowding_distance, non_dominated_sort, offspring, random_genome, AlgoConfig, Evaluator, Front, Individual, Objectives, Problem, RunOutcome};
use crate::error::Result;

/// Rank and crowding of every member, with the sorted fronts.
fn rank_and_crowd(pop: &[Individual]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<f64>) {
    let objs: Vec<Objectives> = pop.iter().map(|p| p.objectives).collect();
    let fronts = non_dominated_sort(&objs);
    let mut rank = vec![0; pop.len()];
    let mut crowd = vec![0.0; pop.len()];
    for (r, front) in fronts.iter().enumerate() {
        let fo: Vec<Objectives> = front.iter().map(|&i| objs[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&fo)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (fronts, rank, crowd)
}

fn tournament<R: Rng>(rank: &[usize], crowd: &[f64], rng: &mut R) -> usize {
    let a = rng.random_range(0..rank.len());
    let b = rng.random_range(0..rank.len());
    if rank[a] != rank[b] {
        return if rank[a] < rank[b] { a } else { b };
    }
    if crowd[a] != crowd[b] {
        return if crowd[a] > crowd[b] { a } else { b };
    }
    if rng.random_bool(0.5) { a } else { b }
}

pub fn nsga2(problem: &dyn Problem, cfg: &AlgoConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let ev = Evaluator::new(problem, cfg.evaluations);
    let n = ev.n_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pop = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        pop.push(ev.eval(random_genome(n, &mut rng))?);
    }
    let (_, mut rank, mut crowd) = rank_and_crowd(&pop);

    while ev.remaining() > 0 {
        let m = cfg.population.min(ev.remaining());
        let mut children = Vec::with_capacity(m);
        while children.len() < m {
            let p1 = tournament(&rank, &crowd, &mut rng);
            let p2 = tournament(&rank, &crowd, &mut rng);
            let (c1, c2) = offspring(&pop[p1].genome, &pop[p2].genome, cfg, &mut rng);
            children.push(ev.eval(c1)?);
            if children.len() < m {
                children.push(ev.eval(c2)?);
            }
        }

        pop.extend(children);
        let (fronts, all_rank, all_crowd) = rank_and_crowd(&pop);
        let mut keep: Vec<usize> = Vec::with_capacity(cfg.population);
        for front in fronts {
            if keep.len() + front.len() <= cfg.population {
                keep.extend(front);
            } else {
                let mut f = front;
                f.sort_by(|&a, &b| all_crowd[b].total_cmp(&all_crowd[a]).then(a.cmp(&b)));
                f.truncate(cfg.population - keep.len());
                keep.extend(f);
            }
            if keep.len() == cfg.population {
                break;
            }
        }
        rank = keep.iter().map(|&i| all_rank[i]).collect();
        crowd = keep.iter().map(|&i| all_crowd[i]).collect();
        let mut old: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
        pop = keep.iter().map(|&i| old[i].take().expect("index kept once")).collect();
    }

    Ok(RunOutcome { front: Front::from_population(&pop), evaluations: ev.used() })
}
