use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{distance, dominates, offspring, random_genome, AlgoConfig, Evaluator, Front, Individual, Problem, RunOutcome};
use crate::error::Result;

/// Raw fitness plus density for every member; lower is better and values
/// below 1 mark the non-dominated members.
fn fitness(pop: &[Individual], pts: &[[f64; 2]]) -> Vec<f64> {
    let n = pop.len();
    let strength: Vec<usize> =
        (0..n).map(|i| (0..n).filter(|&j| dominates(&pop[i].objectives, &pop[j].objectives)).count()).collect();
    let k = ((n as f64).sqrt() as usize).min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let raw: usize =
                (0..n).filter(|&j| dominates(&pop[j].objectives, &pop[i].objectives)).map(|j| strength[j]).sum();
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| distance(pts[i], pts[j])).collect();
            let sigma = if d.is_empty() {
                0.0
            } else {
                let kk = k.max(1) - 1;
                d.select_nth_unstable_by(kk, f64::total_cmp);
                d[kk]
            };
            raw as f64 + 1.0 / (sigma + 2.0)
        })
        .collect()
}

/// Iteratively drop the member whose sorted neighbour distances are
/// lexicographically smallest until `cap` remain.
fn truncate(mut keep: Vec<usize>, pts: &[[f64; 2]], cap: usize) -> Vec<usize> {
    let mut rows: Vec<Vec<(f64, usize)>> = keep
        .iter()
        .map(|&i| {
            let mut r: Vec<(f64, usize)> =
                keep.iter().filter(|&&j| j != i).map(|&j| (distance(pts[i], pts[j]), j)).collect();
            r.sort_by(|a, b| a.0.total_cmp(&b.0));
            r
        })
        .collect();
    while keep.len() > cap {
        let mut worst = 0;
        for c in 1..keep.len() {
            let ord = rows[c]
                .iter()
                .map(|x| x.0)
                .partial_cmp(rows[worst].iter().map(|x| x.0))
                .unwrap_or(std::cmp::Ordering::Equal);
            if ord == std::cmp::Ordering::Less {
                worst = c;
            }
        }
        let gone = keep.remove(worst);
        rows.remove(worst);
        for r in &mut rows {
            r.retain(|&(_, j)| j != gone);
        }
    }
    keep
}

/// Environmental selection into an archive of size `cap`.
fn select(union: &[Individual], pts: &[[f64; 2]], cap: usize) -> Vec<usize> {
    let fit = fitness(union, pts);
    let nondom: Vec<usize> = (0..union.len()).filter(|&i| fit[i] < 1.0).collect();
    if nondom.len() > cap {
        return truncate(nondom, pts, cap);
    }
    let mut keep = nondom;
    let mut rest: Vec<usize> = (0..union.len()).filter(|&i| fit[i] >= 1.0).collect();
    rest.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
    keep.extend(rest.into_iter().take(cap - keep.len()));
    keep.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
    keep
}

pub fn spea2(problem: &dyn Problem, cfg: &AlgoConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let ev = Evaluator::new(problem, cfg.evaluations);
    let n = ev.n_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pop = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        pop.push(ev.eval(random_genome(n, &mut rng))?);
    }
    let mut archive: Vec<Individual> = Vec::new();

    loop {
        let mut seen = HashSet::new();
        let union: Vec<Individual> =
            archive.drain(..).chain(pop.drain(..)).filter(|i| seen.insert(i.genome.clone())).collect();
        let pts: Vec<[f64; 2]> = union.iter().map(|i| ev.normalised(&i.objectives)).collect();
        let chosen = select(&union, &pts, cfg.archive);
        archive = chosen.iter().map(|&i| union[i].clone()).collect();
        if ev.remaining() == 0 {
            break;
        }

        // Archive is ordered by fitness, so a smaller index wins a tournament.
        let m = cfg.population.min(ev.remaining());
        let pick = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(0..archive.len());
            let b = rng.random_range(0..archive.len());
            a.min(b)
        };
        while pop.len() < m {
            let p1 = pick(&mut rng);
            let p2 = pick(&mut rng);
            let (c1, c2) = offspring(&archive[p1].genome, &archive[p2].genome, cfg, &mut rng);
            pop.push(ev.eval(c1)?);
            if pop.len() < m {
                pop.push(ev.eval(c2)?);
            }
        }
    }

    Ok(RunOutcome { front: Front::from_population(&archive), evaluations: ev.used() })
}
