use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dominates, mutate, random_genome, repair, AlgoConfig, Evaluator, Front, Individual, Problem, RunOutcome};
use crate::error::Result;

const GRID_DEPTH: u32 = 4;

/// Archive of mutually non-dominated, genome-unique members, bounded in
/// size, with an adaptive grid over the normalised objective space.
pub(crate) struct GridArchive {
    pub(crate) members: Vec<(Individual, [f64; 2])>,
    cap: usize,
}

impl GridArchive {
    pub(crate) fn new(cap: usize) -> Self {
        GridArchive { members: Vec::new(), cap }
    }

    /// Grid cell of `p` with bounds taken over the archive and `extra`.
    fn cell(&self, p: [f64; 2], extra: [f64; 2]) -> (usize, usize) {
        let divs = 1usize << GRID_DEPTH;
        let mut lo = extra;
        let mut hi = extra;
        for (_, q) in &self.members {
            for d in 0..2 {
                lo[d] = lo[d].min(q[d]);
                hi[d] = hi[d].max(q[d]);
            }
        }
        let idx = |d: usize| {
            let w = hi[d] - lo[d];
            if w <= 0.0 {
                0
            } else {
                (((p[d] - lo[d]) / w * divs as f64) as usize).min(divs - 1)
            }
        };
        (idx(0), idx(1))
    }

    fn crowd(&self, cell: (usize, usize), extra: [f64; 2]) -> usize {
        self.members.iter().filter(|(_, q)| self.cell(*q, extra) == cell).count()
    }

    /// Offer a candidate; returns whether it was stored.
    pub(crate) fn offer<R: Rng>(&mut self, cand: &Individual, p: [f64; 2], rng: &mut R) -> bool {
        if self.members.iter().any(|(m, _)| dominates(&m.objectives, &cand.objectives) || m.genome == cand.genome) {
            return false;
        }
        self.members.retain(|(m, _)| !dominates(&cand.objectives, &m.objectives));
        if self.members.len() < self.cap {
            self.members.push((cand.clone(), p));
            return true;
        }
        let cells: Vec<(usize, usize)> = self.members.iter().map(|(_, q)| self.cell(*q, p)).collect();
        let count = |c: (usize, usize)| cells.iter().filter(|&&x| x == c).count();
        let (busiest, most) = cells.iter().map(|&c| (c, count(c))).max_by_key(|&(_, k)| k).expect("archive is full");
        if count(self.cell(p, p)) >= most {
            return false;
        }
        let victims: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == busiest).collect();
        let v = victims[rng.random_range(0..victims.len())];
        self.members.remove(v);
        self.members.push((cand.clone(), p));
        true
    }
}

pub fn paes(problem: &dyn Problem, cfg: &AlgoConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let ev = Evaluator::new(problem, cfg.evaluations);
    let n = ev.n_bits();
    let rate = cfg.mutation_for(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = GridArchive::new(cfg.archive);

    let mut current = ev.eval(random_genome(n, &mut rng))?;
    let cp = ev.normalised(&current.objectives);
    archive.offer(&current, cp, &mut rng);

    while ev.remaining() > 0 {
        let mut g = current.genome.clone();
        mutate(&mut g, rate, &mut rng);
        if g == current.genome {
            let i = rng.random_range(0..n);
            g[i] = !g[i];
        }
        repair(&mut g, &mut rng);
        let cand = ev.eval(g)?;
        let p = ev.normalised(&cand.objectives);

        if dominates(&current.objectives, &cand.objectives) {
            continue;
        }
        if dominates(&cand.objectives, &current.objectives) {
            archive.offer(&cand, p, &mut rng);
            current = cand;
            continue;
        }
        if archive.members.iter().any(|(m, _)| dominates(&m.objectives, &cand.objectives)) {
            continue;
        }
        let stored = archive.offer(&cand, p, &mut rng) || archive.members.iter().any(|(m, _)| m.genome == cand.genome);
        let cur_p = ev.normalised(&current.objectives);
        let cand_crowd = archive.crowd(archive.cell(p, p), p);
        let cur_crowd = archive.crowd(archive.cell(cur_p, p), p);
        let parent_archived = archive.members.iter().any(|(m, _)| m.genome == current.genome);
        let accept = if stored { !parent_archived || cand_crowd <= cur_crowd } else { cand_crowd < cur_crowd };
        if accept {
            current = cand;
        }
    }

    let members: Vec<Individual> = archive.members.into_iter().map(|(m, _)| m).collect();
    Ok(RunOutcome { front: Front::from_population(&members), evaluations: ev.used() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moo::Objectives;

    fn ind(g: &[bool], score: f64, turns: usize) -> Individual {
        Individual { genome: g.to_vec(), objectives: Objectives::new(score, turns) }
    }

    #[test]
    fn archive_stays_bounded_and_non_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = GridArchive::new(3);
        for t in 1..=8usize {
            let g: Vec<bool> = (0..8).map(|b| b < t).collect();
            let o = ind(&g, t as f64, t);
            a.offer(&o, [1.0 - t as f64 / 8.0, t as f64 / 8.0], &mut rng);
            assert!(a.members.len() <= 3);
            let f = Front { members: a.members.iter().map(|(m, _)| m.clone()).collect() };
            assert!(f.is_valid());
        }
        // A dominating candidate clears everything it beats.
        let top = ind(&[false; 8], 10.0, 1);
        assert!(a.offer(&top, [0.0, 0.0], &mut rng));
        assert_eq!(a.members.len(), 1);
    }

    #[test]
    fn dominated_and_duplicate_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = GridArchive::new(5);
        let x = ind(&[true, false], 3.5, 1);
        assert!(a.offer(&x, [0.5, 0.0], &mut rng));
        assert!(!a.offer(&x, [0.5, 0.0], &mut rng));
        assert!(!a.offer(&ind(&[false, true], 3.1, 1), [0.6, 0.0], &mut rng));
    }
}
