//! Genetic search over salience parameters against labeled salient masks.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::canny::canny_response;
use super::salience::{combine_salience, emd_salience};
use super::{check_min_side, LandmarkError, Result, SalienceParams};
use crate::grid::Grid;

/// An image with its hand-labeled salient pixels (row-major, same shape).
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: Grid,
    pub mask: Vec<bool>,
}

impl LabeledImage {
    pub fn new(image: Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != image.width() * image.height() {
            return Err(LandmarkError::InvalidParams(format!(
                "mask has {} pixels, image has {}",
                mask.len(),
                image.width() * image.height()
            )));
        }
        Ok(Self { image, mask })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 30,
            generations: 40,
            mutation_rate: 0.2,
            crossover_rate: 0.9,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(LandmarkError::InvalidParams("population must be at least 2".into()));
        }
        if self.elitism >= self.population {
            return Err(LandmarkError::InvalidParams(format!(
                "elitism {} must be below population {}",
                self.elitism, self.population
            )));
        }
        for (name, v) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LandmarkError::InvalidParams(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Inclusive search ranges. Fields not searched (Canny thresholds, bins,
/// minimum area) are copied from `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBounds {
    pub inner_window: (usize, usize),
    pub outer_window: (usize, usize),
    pub w_canny: (f64, f64),
    pub w_emd: (f64, f64),
    pub salience_threshold: (f64, f64),
    pub base: SalienceParams,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            inner_window: (3, 15),
            outer_window: (9, 41),
            w_canny: (0.0, 1.0),
            w_emd: (0.0, 1.0),
            salience_threshold: (0.05, 0.95),
            base: SalienceParams::default(),
        }
    }
}

impl ParamBounds {
    fn ranges(&self) -> [(f64, f64); 5] {
        [
            (self.inner_window.0 as f64, self.inner_window.1 as f64),
            (self.outer_window.0 as f64, self.outer_window.1 as f64),
            self.w_canny,
            self.w_emd,
            self.salience_threshold,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LandmarkError::InvalidBounds(m));
        for (lo, hi) in self.ranges() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("range ({lo}, {hi}) is not well-ordered"));
            }
        }
        if self.inner_window.0 == 0 {
            return bad("inner window must be at least 1".into());
        }
        if self.w_canny.0 < 0.0 || self.w_emd.0 < 0.0 {
            return bad("weights must be nonnegative".into());
        }
        if self.salience_threshold.0 < 0.0 || self.salience_threshold.1 > 1.0 {
            return bad("threshold range must lie in [0, 1]".into());
        }
        if odd_at_most(self.outer_window.1) < odd_at_least(self.inner_window.0) + 2 {
            return bad("outer window range cannot exceed the inner window".into());
        }
        if odd_at_least(self.inner_window.0) > self.inner_window.1
            || odd_at_least(self.outer_window.0) > self.outer_window.1
        {
            return bad("window range contains no odd size".into());
        }
        Ok(())
    }

    /// Maps a gene vector to valid parameters: windows snap to the nearest
    /// odd size in range with outer >= inner + 2, and an all-zero weight pair
    /// falls back to pure EMD.
    fn decode(&self, genes: &[f64; 5]) -> SalienceParams {
        let snap = |v: f64, (lo, hi): (usize, usize)| {
            let odd = ((v - 1.0) / 2.0).round().max(0.0) as usize * 2 + 1;
            odd.clamp(odd_at_least(lo), odd_at_most(hi))
        };
        let outer_max = odd_at_most(self.outer_window.1);
        let inner = snap(genes[0], self.inner_window).min(outer_max - 2);
        let outer = snap(genes[1], self.outer_window).max(inner + 2);
        let (mut w_canny, mut w_emd) = (genes[2].max(0.0), genes[3].max(0.0));
        if w_canny + w_emd <= 0.0 {
            w_canny = 0.0;
            w_emd = 1.0;
        }
        SalienceParams {
            inner_window: inner,
            outer_window: outer,
            w_canny,
            w_emd,
            salience_threshold: genes[4].clamp(0.0, 1.0),
            ..self.base.clone()
        }
    }
}

fn odd_at_least(v: usize) -> usize {
    if v % 2 == 1 {
        v
    } else {
        v + 1
    }
}

fn odd_at_most(v: usize) -> usize {
    if v % 2 == 1 || v == 0 {
        v.max(1)
    } else {
        v - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub params: SalienceParams,
    pub fitness: f64,
    /// Best fitness seen so far, after the initial population and each generation.
    pub history: Vec<f64>,
    /// Best fitness within each population (initial population first).
    pub generation_best: Vec<f64>,
}

fn f1(pred: impl Iterator<Item = bool>, truth: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, &t) in pred.zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

struct Evaluator<'a> {
    labeled: &'a [LabeledImage],
    canny: Vec<Grid>,
    emd: HashMap<(usize, usize), Vec<Grid>>,
}

impl<'a> Evaluator<'a> {
    fn new(labeled: &'a [LabeledImage], base: &SalienceParams, uses_canny: bool) -> Result<Self> {
        let canny = labeled
            .par_iter()
            .map(|l| {
                if uses_canny {
                    canny_response(&l.image, base)
                } else {
                    Ok(Grid::new(l.image.width(), l.image.height(), 0.0))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            labeled,
            canny,
            emd: HashMap::new(),
        })
    }

    fn prepare(&mut self, params: &[SalienceParams]) -> Result<()> {
        let missing: BTreeSet<(usize, usize)> = params
            .iter()
            .map(|p| (p.inner_window, p.outer_window))
            .filter(|k| !self.emd.contains_key(k))
            .collect();
        let computed: Vec<((usize, usize), Vec<Grid>)> = missing
            .into_par_iter()
            .map(|(inner, outer)| {
                let p = SalienceParams {
                    inner_window: inner,
                    outer_window: outer,
                    ..params[0].clone()
                };
                let maps = self
                    .labeled
                    .iter()
                    .map(|l| emd_salience(&l.image, &p).map(|m| m.scores))
                    .collect::<Result<Vec<_>>>()?;
                Ok(((inner, outer), maps))
            })
            .collect::<Result<_>>()?;
        self.emd.extend(computed);
        Ok(())
    }

    fn fitness(&self, p: &SalienceParams) -> Result<f64> {
        let emd = &self.emd[&(p.inner_window, p.outer_window)];
        let mut total = 0.0;
        for ((l, canny), emd) in self.labeled.iter().zip(&self.canny).zip(emd) {
            let map = combine_salience(canny, emd, p)?;
            let pred = map.scores.data().iter().map(|&s| s >= p.salience_threshold);
            total += f1(pred, &l.mask);
        }
        Ok(total / self.labeled.len() as f64)
    }

    fn evaluate(&mut self, genes: &[[f64; 5]], bounds: &ParamBounds) -> Result<Vec<f64>> {
        let params: Vec<SalienceParams> = genes.iter().map(|g| bounds.decode(g)).collect();
        self.prepare(&params)?;
        params.par_iter().map(|p| self.fitness(p)).collect()
    }
}

fn order_by_fitness(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    idx
}

fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64]) -> usize {
    let a = rng.random_range(0..fitness.len());
    let b = rng.random_range(0..fitness.len());
    if fitness[b] > fitness[a] || (fitness[b] == fitness[a] && b < a) {
        b
    } else {
        a
    }
}

/// Generational GA maximizing mean per-image F1 between the thresholded
/// salience mask and the labeled mask. Returns the best individual ever seen.
pub fn ga_optimize(labeled: &[LabeledImage], bounds: &ParamBounds, cfg: &GaConfig) -> Result<GaResult> {
    if labeled.is_empty() {
        return Err(LandmarkError::EmptyTrainingSet);
    }
    bounds.validate()?;
    cfg.validate()?;
    bounds.base.validate()?;
    for l in labeled {
        check_min_side(&l.image, odd_at_most(bounds.outer_window.1), "the largest outer window")?;
    }
    let ranges = bounds.ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval = Evaluator::new(labeled, &bounds.base, bounds.w_canny.1 > 0.0)?;

    let mut pop: Vec<[f64; 5]> = (0..cfg.population)
        .map(|_| {
            let mut g = [0.0; 5];
            for (v, &(lo, hi)) in g.iter_mut().zip(&ranges) {
                *v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            }
            g
        })
        .collect();
    let mut fitness = eval.evaluate(&pop, bounds)?;

    let first = order_by_fitness(&fitness)[0];
    let (mut best_genes, mut best_fit) = (pop[first], fitness[first]);
    let mut history = vec![best_fit];
    let mut generation_best = vec![best_fit];

    let noise: Vec<Option<Normal<f64>>> = ranges
        .iter()
        .map(|&(lo, hi)| (hi > lo).then(|| Normal::new(0.0, 0.1 * (hi - lo)).expect("finite width")))
        .collect();

    for _ in 0..cfg.generations {
        let order = order_by_fitness(&fitness);
        let mut next: Vec<[f64; 5]> = order[..cfg.elitism].iter().map(|&i| pop[i]).collect();
        while next.len() < cfg.population {
            let a = pop[tournament(&mut rng, &fitness)];
            let b = pop[tournament(&mut rng, &fitness)];
            let mut child = a;
            if rng.random::<f64>() < cfg.crossover_rate {
                for (k, gene) in child.iter_mut().enumerate() {
                    if rng.random::<bool>() {
                        *gene = b[k];
                    }
                }
            }
            for (k, gene) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < cfg.mutation_rate {
                    if let Some(n) = &noise[k] {
                        *gene = (*gene + n.sample(&mut rng)).clamp(ranges[k].0, ranges[k].1);
                    }
                }
            }
            next.push(child);
        }
        pop = next;
        fitness = eval.evaluate(&pop, bounds)?;
        let top = order_by_fitness(&fitness)[0];
        generation_best.push(fitness[top]);
        if fitness[top] > best_fit {
            best_fit = fitness[top];
            best_genes = pop[top];
        }
        history.push(best_fit);
    }

    Ok(GaResult {
        params: bounds.decode(&best_genes),
        fitness: best_fit,
        history,
        generation_best,
    })
}
