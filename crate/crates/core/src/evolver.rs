//! Genetic algorithm that learns the four per-scale fusion weights.
//!
//! Fitness is the mean over categories of the mean per-query precision when
//! each record queries the whole database. Per-block d1 distances are
//! precomputed once into a [`DistanceTensor`], so a fitness evaluation is a
//! weighted sum of stored values plus a partial sort per query.
//!
//! All random decisions (initialization, selection, cuts, mutation) come from
//! one seeded ChaCha stream consumed in a fixed serial order. Only the fitness
//! evaluations run in parallel, and they draw nothing from the stream, so the
//! outcome does not depend on the thread count.
//!
//! Ranking is invariant under scaling all weights by the same positive factor,
//! so the search effectively runs over directions in weight space.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decimal::format_sig9;
use crate::error::{Error, Result};
use crate::metrics::{block_distances, fuse, MetricId, WeightVector};
use crate::retrieval::FeatureDatabase;
use crate::BLOCKS;

pub const WEIGHTS_MAGIC: &str = "FLNIPW";
pub const WEIGHTS_VERSION: &str = "1";

/// Four genes in `[0, 1]`, one weight per feature block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightChromosome([f64; BLOCKS]);

impl WeightChromosome {
    pub fn new(genes: [f64; BLOCKS]) -> Result<Self> {
        if let Some(&g) = genes.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::GeneOutOfRange(g));
        }
        Ok(WeightChromosome(genes))
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        WeightChromosome(std::array::from_fn(|_| rng.random()))
    }

    pub fn genes(&self) -> &[f64; BLOCKS] {
        &self.0
    }

    pub fn to_weights(&self) -> Result<WeightVector> {
        WeightVector::new(self.0)
    }
}

/// How many hits each query retrieves during fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopK {
    /// the query's own category size
    #[default]
    CategorySize,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    /// 0 disables elitism
    pub elite_count: usize,
    pub seed: u64,
    pub top_k: TopK,
    pub exclude_self: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 20,
            generations: 50,
            mutation_rate: 0.01,
            crossover_rate: 0.9,
            elite_count: 1,
            seed: 42,
            top_k: TopK::CategorySize,
            exclude_self: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if self.generations < 1 {
            return bad("generations must be at least 1".into());
        }
        if self.elite_count >= self.population_size {
            return bad(format!(
                "elite_count {} must be below population_size {}",
                self.elite_count, self.population_size
            ));
        }
        for (name, r) in [("mutation_rate", self.mutation_rate), ("crossover_rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} {r} outside [0,1]"));
            }
        }
        if self.top_k == TopK::Fixed(0) {
            return bad("fixed top-k must be positive".into());
        }
        Ok(())
    }
}

/// Per-block d1 distances between every pair of records.
///
/// Stored as `[a][b][block]`, so one query row is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTensor {
    n: usize,
    data: Vec<f64>,
}

impl DistanceTensor {
    /// Builds from explicit per-block matrices (`blocks[j][a][b]`).
    pub fn from_blocks(blocks: &[Vec<Vec<f64>>; BLOCKS]) -> Result<Self> {
        let n = blocks[0].len();
        if n < 2 {
            return Err(Error::TooFewRecords(n));
        }
        let mut data = vec![0.0; n * n * BLOCKS];
        for (j, m) in blocks.iter().enumerate() {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(Error::LengthMismatch(m.len(), n));
            }
            for a in 0..n {
                for b in 0..n {
                    data[(a * n + b) * BLOCKS + j] = m[a][b];
                }
            }
        }
        Ok(DistanceTensor { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance between records `a` and `b` on block `j`.
    #[inline]
    pub fn get(&self, j: usize, a: usize, b: usize) -> f64 {
        self.data[(a * self.n + b) * BLOCKS + j]
    }

    #[inline]
    fn pair(&self, a: usize, b: usize) -> &[f64; BLOCKS] {
        let s = (a * self.n + b) * BLOCKS;
        self.data[s..s + BLOCKS].try_into().expect("block stride")
    }

    /// Fused distance, bit-identical to the on-the-fly query path.
    #[inline]
    pub fn fused(&self, w: &[f64; BLOCKS], a: usize, b: usize) -> f64 {
        fuse(w, self.pair(a, b))
    }
}

/// Computes all pairwise per-block d1 distances, rows in parallel.
pub fn precompute_tensor(db: &FeatureDatabase) -> Result<DistanceTensor> {
    let n = db.len();
    if n < 2 {
        return Err(Error::TooFewRecords(n));
    }
    let recs = db.records();
    let mut data = vec![0.0; n * n * BLOCKS];
    data.par_chunks_mut(n * BLOCKS).enumerate().for_each(|(a, row)| {
        for (b, out) in row.chunks_exact_mut(BLOCKS).enumerate() {
            out.copy_from_slice(&block_distances(&recs[a].feature, &recs[b].feature, MetricId::D1));
        }
    });
    Ok(DistanceTensor { n, data })
}

/// Category bookkeeping shared by every fitness evaluation.
struct Problem<'a> {
    tensor: &'a DistanceTensor,
    labels: &'a [usize],
    members: Vec<Vec<usize>>,
    top_k: TopK,
    exclude_self: bool,
}

impl<'a> Problem<'a> {
    fn new(tensor: &'a DistanceTensor, labels: &'a [usize], config: &GaConfig) -> Result<Self> {
        if labels.len() != tensor.len() {
            return Err(Error::LengthMismatch(labels.len(), tensor.len()));
        }
        let ncat = labels.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); ncat];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let exclude = usize::from(config.exclude_self);
        if let Some(c) = members.iter().position(|m| m.len() <= exclude) {
            return Err(Error::EmptyCategory(format!("#{c}")));
        }
        if let TopK::Fixed(k) = config.top_k {
            if k == 0 || k > tensor.len() - exclude {
                return Err(Error::InvalidConfig(format!(
                    "fixed top-k {k} outside 1..={}",
                    tensor.len() - exclude
                )));
            }
        }
        Ok(Problem {
            tensor,
            labels,
            members,
            top_k: config.top_k,
            exclude_self: config.exclude_self,
        })
    }

    fn fitness(&self, genes: &[f64; BLOCKS]) -> f64 {
        let n = self.tensor.len();
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut total = 0.0;
        for members in &self.members {
            let mut cat = 0.0;
            for &q in members {
                scored.clear();
                scored.extend(
                    (0..n)
                        .filter(|&b| !(self.exclude_self && b == q))
                        .map(|b| (self.tensor.fused(genes, q, b), b)),
                );
                let k = match self.top_k {
                    TopK::CategorySize => members.len() - usize::from(self.exclude_self),
                    TopK::Fixed(k) => k,
                };
                if k < scored.len() {
                    scored.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                }
                let hits = scored[..k]
                    .iter()
                    .filter(|(_, b)| self.labels[*b] == self.labels[q])
                    .count();
                cat += hits as f64 / k as f64;
            }
            total += cat / members.len() as f64;
        }
        total / self.members.len() as f64
    }
}

/// Mean per-category precision of the ranking induced by `chromosome`.
pub fn fitness(
    chromosome: &WeightChromosome,
    tensor: &DistanceTensor,
    labels: &[usize],
    config: &GaConfig,
) -> Result<f64> {
    Ok(Problem::new(tensor, labels, config)?.fitness(&chromosome.0))
}

/// Fitness-proportional selection; uniform when every fitness is zero.
pub fn roulette_select(fitnesses: &[f64], rng: &mut impl Rng) -> Result<usize> {
    if fitnesses.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let total: f64 = fitnesses.iter().sum();
    if total <= 0.0 {
        return Ok(rng.random_range(0..fitnesses.len()));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &f) in fitnesses.iter().enumerate() {
        if f > 0.0 {
            acc += f;
            last_positive = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Exchanges genes in `lo..hi` (0-based) between the parents.
pub fn crossover_at(
    p1: &WeightChromosome,
    p2: &WeightChromosome,
    lo: usize,
    hi: usize,
) -> (WeightChromosome, WeightChromosome) {
    let (mut c1, mut c2) = (*p1, *p2);
    c1.0[lo..hi].copy_from_slice(&p2.0[lo..hi]);
    c2.0[lo..hi].copy_from_slice(&p1.0[lo..hi]);
    (c1, c2)
}

/// Two distinct cut points drawn uniformly from the inner gene boundaries.
pub fn two_point_crossover(
    p1: &WeightChromosome,
    p2: &WeightChromosome,
    rng: &mut impl Rng,
) -> (WeightChromosome, WeightChromosome) {
    const CUTS: [(usize, usize); 3] = [(1, 2), (1, 3), (2, 3)];
    let (lo, hi) = CUTS[rng.random_range(0..CUTS.len())];
    crossover_at(p1, p2, lo, hi)
}

/// Redraws each gene from `U[0,1]` with probability `rate`.
pub fn mutate(c: &WeightChromosome, rate: f64, rng: &mut impl Rng) -> WeightChromosome {
    let mut out = *c;
    for g in out.0.iter_mut() {
        if rng.random_bool(rate) {
            *g = rng.random();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub best: WeightChromosome,
    pub best_fitness: f64,
    /// best fitness within each generation's population
    pub history: Vec<f64>,
}

/// Runs the GA. Call inside a rayon pool to cap the evaluation threads.
pub fn evolve(tensor: &DistanceTensor, labels: &[usize], config: &GaConfig) -> Result<Evolution> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = (0..config.population_size)
        .map(|_| WeightChromosome::random(&mut rng))
        .collect();
    run(tensor, labels, config, initial, rng)
}

/// Like [`evolve`] but starting from `initial` instead of a random draw.
pub fn evolve_from(
    tensor: &DistanceTensor,
    labels: &[usize],
    config: &GaConfig,
    initial: Vec<WeightChromosome>,
) -> Result<Evolution> {
    config.validate()?;
    if initial.len() != config.population_size {
        return Err(Error::InvalidConfig(format!(
            "initial population has {} members, expected {}",
            initial.len(),
            config.population_size
        )));
    }
    run(tensor, labels, config, initial, ChaCha8Rng::seed_from_u64(config.seed))
}

fn run(
    tensor: &DistanceTensor,
    labels: &[usize],
    config: &GaConfig,
    initial: Vec<WeightChromosome>,
    mut rng: ChaCha8Rng,
) -> Result<Evolution> {
    let problem = Problem::new(tensor, labels, config)?;
    let pop = config.population_size;
    let mut population: Vec<(WeightChromosome, Option<f64>)> = initial.into_iter().map(|c| (c, None)).collect();
    let mut history = Vec::with_capacity(config.generations);
    let mut best: Option<(WeightChromosome, f64)> = None;

    for generation in 0..config.generations {
        let scores: Vec<f64> = population
            .par_iter()
            .map(|(c, cached)| cached.unwrap_or_else(|| problem.fitness(&c.0)))
            .collect();

        let mut order: Vec<usize> = (0..pop).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let top = order[0];
        history.push(scores[top]);
        if best.is_none_or(|(_, f)| scores[top] > f) {
            best = Some((population[top].0, scores[top]));
        }
        if generation + 1 == config.generations {
            break;
        }

        let mut next: Vec<(WeightChromosome, Option<f64>)> = order[..config.elite_count]
            .iter()
            .map(|&i| (population[i].0, Some(scores[i])))
            .collect();
        while next.len() < pop {
            let a = population[roulette_select(&scores, &mut rng)?].0;
            let b = population[roulette_select(&scores, &mut rng)?].0;
            let (c1, c2) = if rng.random_bool(config.crossover_rate) {
                two_point_crossover(&a, &b, &mut rng)
            } else {
                (a, b)
            };
            let c1 = mutate(&c1, config.mutation_rate, &mut rng);
            let c2 = mutate(&c2, config.mutation_rate, &mut rng);
            next.push((c1, None));
            if next.len() < pop {
                next.push((c2, None));
            }
        }
        population = next;
    }

    let (best, best_fitness) = best.expect("at least one generation");
    Ok(Evolution {
        best,
        best_fitness,
        history,
    })
}

/// `FLNIPW 1` followed by one weight per line, 9 significant digits.
pub fn weights_to_string(w: &[f64; BLOCKS]) -> String {
    let mut out = format!("{WEIGHTS_MAGIC} {WEIGHTS_VERSION}\n");
    for v in w {
        let _ = writeln!(out, "{}", format_sig9(*v));
    }
    out
}

pub fn parse_weights(text: &str) -> Result<WeightVector> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let mut parts = header.split(' ');
    if parts.next() != Some(WEIGHTS_MAGIC) {
        return Err(Error::BadMagic(header.to_string()));
    }
    match parts.next() {
        Some(WEIGHTS_VERSION) if parts.next().is_none() => {}
        Some(v) => return Err(Error::VersionUnsupported(v.to_string())),
        None => return Err(Error::BadMagic(header.to_string())),
    }
    let values = lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::CorruptRecord {
                line: i + 2,
                reason: format!("bad weight {l:?}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let w: [f64; BLOCKS] = values.try_into().map_err(|v: Vec<f64>| Error::CorruptRecord {
        line: v.len() + 2,
        reason: format!("expected {BLOCKS} weights, found {}", v.len()),
    })?;
    WeightVector::new(w)
}

pub fn write_weights(w: &[f64; BLOCKS], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, weights_to_string(w)).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weights(&text)
}
