//! Front quality indicators and the rank-sum significance test.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::moo::{Front, Objectives};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Distinct objective vectors of a front, in (score, turns) coordinates.
fn unique_points(objs: &[Objectives]) -> Vec<[f64; 2]> {
    let mut seen = HashSet::new();
    objs.iter()
        .filter(|o| seen.insert((o.score.to_bits(), o.turns)))
        .map(|o| [o.score, o.turns as f64])
        .collect()
}

/// Affine map to [0, 1] per objective by the reference extent. A flat
/// reference dimension is left unscaled.
struct Scale {
    lo: [f64; 2],
    width: [f64; 2],
}

impl Scale {
    fn of(reference: &[[f64; 2]]) -> Scale {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in reference {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let width = [0, 1].map(|d| if hi[d] > lo[d] { hi[d] - lo[d] } else { 1.0 });
        Scale { lo, width }
    }

    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.lo[0]) / self.width[0], (p[1] - self.lo[1]) / self.width[1]]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn normalised_pair(front: &[Objectives], reference: &[Objectives]) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    if front.is_empty() {
        return Err(Error::EmptyFront);
    }
    if reference.is_empty() {
        return Err(Error::Reference("empty reference front".into()));
    }
    let r = unique_points(reference);
    let scale = Scale::of(&r);
    let by_score = |a: &[f64; 2], b: &[f64; 2]| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]));
    let mut f: Vec<[f64; 2]> = unique_points(front).into_iter().map(|p| scale.apply(p)).collect();
    let mut r: Vec<[f64; 2]> = r.into_iter().map(|p| scale.apply(p)).collect();
    f.sort_by(by_score);
    r.sort_by(by_score);
    Ok((f, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub value: f64,
    /// Set for single-point fronts, where the gap terms are empty.
    pub degenerate: bool,
}

/// Extent-and-uniformity indicator; 0 for a front that spans the reference
/// extremes with equal gaps.
pub fn spread(front: &[Objectives], reference: &[Objectives]) -> Result<Spread> {
    let (f, r) = normalised_pair(front, reference)?;
    let d_f = dist(r[0], f[0]);
    let d_l = dist(r[r.len() - 1], f[f.len() - 1]);
    let gaps: Vec<f64> = f.windows(2).map(|w| dist(w[0], w[1])).collect();
    let degenerate = gaps.is_empty();
    let mean = if degenerate { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
    let num = d_f + d_l + gaps.iter().map(|d| (d - mean).abs()).sum::<f64>();
    let den = d_f + d_l + gaps.len() as f64 * mean;
    let value = if den > 0.0 { num / den } else { 0.0 };
    Ok(Spread { value, degenerate })
}

/// Deviation of the distances from each member to its nearest reference
/// point; 0 when the front lies on the reference.
pub fn spacing(front: &[Objectives], reference: &[Objectives]) -> Result<f64> {
    let (f, r) = normalised_pair(front, reference)?;
    if f.len() == 1 {
        return Ok(0.0);
    }
    let d: Vec<f64> =
        f.iter().map(|p| r.iter().map(|q| dist(*p, *q)).fold(f64::INFINITY, f64::min)).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Ok((d.iter().map(|x| (mean - x).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt())
}

/// Number of distinct genomes among the front's members.
pub fn cardinality(front: &Front) -> usize {
    front.members.iter().map(|m| &m.genome).collect::<HashSet<_>>().len()
}

/// Highest score and fewest turns over the front.
pub fn extremes(front: &[Objectives]) -> Result<(f64, usize)> {
    if front.is_empty() {
        return Err(Error::EmptyFront);
    }
    let best = front.iter().map(|o| o.score).fold(f64::NEG_INFINITY, f64::max);
    let turns = front.iter().map(|o| o.turns).min().expect("non-empty");
    Ok((best, turns))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub spread: f64,
    pub spread_degenerate: bool,
    pub spacing: f64,
    pub cardinality: usize,
    pub best_score: f64,
    pub min_turns: usize,
}

pub fn evaluate_front(front: &Front, reference: &Front) -> Result<MetricReport> {
    let objs = front.objectives();
    let refs = reference.objectives();
    let s = spread(&objs, &refs)?;
    let (best_score, min_turns) = extremes(&objs)?;
    Ok(MetricReport {
        spread: s.value,
        spread_degenerate: s.degenerate,
        spacing: spacing(&objs, &refs)?,
        cardinality: cardinality(front),
        best_score,
        min_turns,
    })
}

/// Metrics reported per run, with the sense in which each one improves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Spread,
    Spacing,
    Cardinality,
    BestScore,
    MinTurns,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Spread, Metric::Spacing, Metric::Cardinality, Metric::BestScore, Metric::MinTurns];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Spread => "spread",
            Metric::Spacing => "spacing",
            Metric::Cardinality => "cardinality",
            Metric::BestScore => "best_score",
            Metric::MinTurns => "min_turns",
        }
    }

    pub fn better(self) -> Better {
        match self {
            Metric::Cardinality | Metric::BestScore => Better::Higher,
            Metric::Spread | Metric::Spacing | Metric::MinTurns => Better::Lower,
        }
    }

    pub fn of(self, r: &MetricReport) -> f64 {
        match self {
            Metric::Spread => r.spread,
            Metric::Spacing => r.spacing,
            Metric::Cardinality => r.cardinality as f64,
            Metric::BestScore => r.best_score,
            Metric::MinTurns => r.min_turns as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    Higher,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    AGreater,
    ALess,
}

/// Which sample is significantly larger at the one-sided 5% level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AGreater,
    BGreater,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTestResult {
    /// Number of (a, b) pairs with a > b, ties counting one half.
    pub u_statistic: f64,
    pub p_value: f64,
    pub direction: Direction,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Null distribution of U for sample sizes (m, n): counts per value 0..=m·n.
fn exact_counts(m: usize, n: usize) -> Vec<f64> {
    // table[i][j][u]: arrangements of i a's and j b's with statistic u.
    let mut table = vec![vec![Vec::<f64>::new(); n + 1]; m + 1];
    for i in 0..=m {
        for j in 0..=n {
            let mut c = vec![0.0; i * j + 1];
            if i == 0 || j == 0 {
                c[0] = 1.0;
            } else {
                // Largest element is an a (beats all j b's) or a b.
                for (u, v) in table[i - 1][j].iter().enumerate() {
                    c[u + j] += v;
                }
                for (u, v) in table[i][j - 1].iter().enumerate() {
                    c[u] += v;
                }
            }
            table[i][j] = c;
        }
    }
    std::mem::take(&mut table[m][n])
}

/// One-sided tail probabilities (P[U ≥ u], P[U ≤ u]).
fn tails(u: f64, na: usize, nb: usize, ties: &[usize], exact: bool) -> (f64, f64) {
    if exact {
        let counts = exact_counts(na, nb);
        let total: f64 = counts.iter().sum();
        let ui = u.round() as usize;
        let upper = counts[ui..].iter().sum::<f64>() / total;
        let lower = counts[..=ui].iter().sum::<f64>() / total;
        return (upper, lower);
    }
    let n = (na + nb) as f64;
    let (a, b) = (na as f64, nb as f64);
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = a * b / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let mean = a * b / 2.0;
    let phi = Normal::standard();
    let upper = 1.0 - phi.cdf((u - mean - 0.5) / sd);
    let lower = phi.cdf((u - mean + 0.5) / sd);
    (upper.clamp(0.0, 1.0), lower.clamp(0.0, 1.0))
}

/// Wilcoxon–Mann–Whitney rank-sum test of `a` against `b`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<RankTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;
    let exact = na + nb <= 12 && ties.iter().all(|&t| t == 1);
    let (upper, lower) = tails(u, na, nb, &ties, exact);
    let p_value = match alternative {
        Alternative::AGreater => upper,
        Alternative::ALess => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    };
    let direction = if upper < SIGNIFICANCE_LEVEL {
        Direction::AGreater
    } else if lower < SIGNIFICANCE_LEVEL {
        Direction::BGreater
    } else {
        Direction::None
    };
    Ok(RankTestResult { u_statistic: u, p_value, direction, exact })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub names: Vec<String>,
    /// `flags[row][col]`: the row's values are significantly better.
    pub flags: Vec<Vec<bool>>,
}

impl SignificanceMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("better_than");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.flags) {
            out.push_str(n);
            for &f in row {
                out.push_str(if f { ",x" } else { "," });
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise one-sided tests between named samples of equal length.
pub fn significance_matrix(runs: &[(String, Vec<f64>)], better: Better) -> Result<SignificanceMatrix> {
    if runs.len() < 2 {
        return Err(Error::Config("significance matrix needs at least two samples".into()));
    }
    let len = runs[0].1.len();
    if let Some((_, bad)) = runs.iter().find(|(_, v)| v.len() != len) {
        return Err(Error::Shape { expected: len, got: bad.len() });
    }
    let alt = match better {
        Better::Higher => Alternative::AGreater,
        Better::Lower => Alternative::ALess,
    };
    let k = runs.len();
    let mut flags = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                flags[i][j] = mann_whitney_u(&runs[i].1, &runs[j].1, alt)?.p_value < SIGNIFICANCE_LEVEL;
            }
        }
    }
    Ok(SignificanceMatrix { names: runs.iter().map(|(n, _)| n.clone()).collect(), flags })
}
