use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{distance, dominates, offspring, random_genome, AlgoConfig, Evaluator, Front, Individual, Problem, RunOutcome};
use crate::error::Result;

fn box_of(p: [f64; 2], eps: f64) -> [i64; 2] {
    [(p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64]
}

fn box_dominates(a: [i64; 2], b: [i64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && a != b
}

/// One representative per ε-box, boxes mutually non-dominated.
pub(crate) struct EpsArchive {
    pub(crate) members: Vec<(Individual, [f64; 2])>,
    eps: f64,
}

impl EpsArchive {
    pub(crate) fn new(eps: f64) -> Self {
        EpsArchive { members: Vec::new(), eps }
    }

    /// Offer a candidate at normalised point `p`; returns whether it was stored.
    pub(crate) fn offer(&mut self, cand: &Individual, p: [f64; 2]) -> bool {
        let cb = box_of(p, self.eps);
        if self.members.iter().any(|(_, q)| box_dominates(box_of(*q, self.eps), cb)) {
            return false;
        }
        self.members.retain(|(_, q)| !box_dominates(cb, box_of(*q, self.eps)));
        if let Some(i) = self.members.iter().position(|(_, q)| box_of(*q, self.eps) == cb) {
            let (m, q) = &self.members[i];
            let replace = if dominates(&cand.objectives, &m.objectives) {
                true
            } else if dominates(&m.objectives, &cand.objectives) {
                false
            } else {
                let corner = [cb[0] as f64 * self.eps, cb[1] as f64 * self.eps];
                distance(p, corner) < distance(*q, corner)
            };
            if replace {
                self.members[i] = (cand.clone(), p);
            }
            return replace;
        }
        self.members.push((cand.clone(), p));
        true
    }
}

pub fn epsmoea(problem: &dyn Problem, cfg: &AlgoConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let ev = Evaluator::new(problem, cfg.evaluations);
    let n = ev.n_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pop = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        pop.push(ev.eval(random_genome(n, &mut rng))?);
    }
    let mut archive = EpsArchive::new(cfg.epsilon);
    for i in &pop {
        archive.offer(i, ev.normalised(&i.objectives));
    }

    while ev.remaining() > 0 {
        let a = rng.random_range(0..pop.len());
        let b = rng.random_range(0..pop.len());
        let p1 = if dominates(&pop[a].objectives, &pop[b].objectives) {
            a
        } else if dominates(&pop[b].objectives, &pop[a].objectives) {
            b
        } else if rng.random_bool(0.5) {
            a
        } else {
            b
        };
        let p2 = rng.random_range(0..archive.members.len());
        let (child, _) = offspring(&pop[p1].genome, &archive.members[p2].0.genome, cfg, &mut rng);
        let child = ev.eval(child)?;

        let beaten: Vec<usize> = (0..pop.len()).filter(|&i| dominates(&child.objectives, &pop[i].objectives)).collect();
        if !beaten.is_empty() {
            let v = beaten[rng.random_range(0..beaten.len())];
            pop[v] = child.clone();
        } else if !pop.iter().any(|i| dominates(&i.objectives, &child.objectives)) {
            let v = rng.random_range(0..pop.len());
            pop[v] = child.clone();
        }
        archive.offer(&child, ev.normalised(&child.objectives));
    }

    let members: Vec<Individual> = archive.members.into_iter().map(|(m, _)| m).collect();
    Ok(RunOutcome { front: Front::from_population(&members), evaluations: ev.used() })
}
