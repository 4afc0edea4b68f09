//! Genetic-algorithm selection of kernel family, kernel parameters, C, the
//! composite weight mu and the random-field strength beta, scored by
//! stratified k-fold cross-validation accuracy of the pixel SVM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelParams, KernelSpec, ALL_FAMILIES};
use crate::raster::{ClassId, TrainingSet};
use crate::svm::train_multiclass;

pub const LOG2_C_RANGE: (f64, f64) = (-5.0, 15.0);
pub const LOG2_GAMMA_RANGE: (f64, f64) = (-15.0, 3.0);
pub const MU_RANGE: (f64, f64) = (0.0, 1.0);
pub const BETA_RANGE: (f64, f64) = (0.0, 5.0);
pub const DEGREES: [u32; 3] = [2, 3, 4];

/// Searched hyperparameters. The kernel family, gamma and degree apply to
/// both the spectral and spatial side of the composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Genome {
    pub log2_c: f64,
    pub family: KernelFamily,
    pub log2_gamma: f64,
    pub degree: u32,
    pub mu: f64,
    pub beta: f64,
}

impl Genome {
    pub fn c(&self) -> f64 {
        self.log2_c.exp2()
    }

    pub fn gamma(&self) -> f64 {
        self.log2_gamma.exp2()
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        let params = KernelParams::new(self.family, self.gamma(), self.degree, 1.0)
            .expect("genome ranges keep parameters valid");
        KernelSpec::new(params, params, self.mu).expect("genome mu stays in range")
    }

    pub fn clamp(&mut self) {
        self.log2_c = self.log2_c.clamp(LOG2_C_RANGE.0, LOG2_C_RANGE.1);
        self.log2_gamma = self.log2_gamma.clamp(LOG2_GAMMA_RANGE.0, LOG2_GAMMA_RANGE.1);
        self.mu = self.mu.clamp(MU_RANGE.0, MU_RANGE.1);
        self.beta = self.beta.clamp(BETA_RANGE.0, BETA_RANGE.1);
        if !DEGREES.contains(&self.degree) {
            self.degree = 3;
        }
    }

    pub fn is_valid(&self) -> bool {
        (LOG2_C_RANGE.0..=LOG2_C_RANGE.1).contains(&self.log2_c)
            && (LOG2_GAMMA_RANGE.0..=LOG2_GAMMA_RANGE.1).contains(&self.log2_gamma)
            && (MU_RANGE.0..=MU_RANGE.1).contains(&self.mu)
            && (BETA_RANGE.0..=BETA_RANGE.1).contains(&self.beta)
            && DEGREES.contains(&self.degree)
    }

    fn random(rng: &mut ChaCha8Rng) -> Genome {
        Genome {
            log2_c: rng.random_range(LOG2_C_RANGE.0..=LOG2_C_RANGE.1),
            family: ALL_FAMILIES[rng.random_range(0..ALL_FAMILIES.len())],
            log2_gamma: rng.random_range(LOG2_GAMMA_RANGE.0..=LOG2_GAMMA_RANGE.1),
            degree: DEGREES[rng.random_range(0..DEGREES.len())],
            mu: rng.random_range(MU_RANGE.0..=MU_RANGE.1),
            beta: rng.random_range(BETA_RANGE.0..=BETA_RANGE.1),
        }
    }

    /// Key=value block for the tuner output: the kernel spec plus C and beta.
    pub fn to_kv_block(&self) -> String {
        let mut out = self.kernel_spec().to_kv_block();
        out.push_str(&format!("c={}\n", self.c()));
        out.push_str(&format!("beta={}\n", self.beta));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    /// Per-gene probability of taking the second parent's gene.
    pub crossover_prob: f64,
    /// Per-gene mutation probability; continuous genes take a Gaussian step
    /// with sigma = 10% of the range, categorical genes resample.
    pub mutation_prob: f64,
    pub elitism: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 20,
            generations: 30,
            tournament_size: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.1,
            elitism: 1,
            seed: 0,
            folds: 5,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("GA population must be >= 2".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("GA folds must be >= 2".into()));
        }
        if self.elitism >= self.population {
            return Err(Error::Config(
                "GA elitism must be smaller than the population".into(),
            ));
        }
        if self.tournament_size < 1 {
            return Err(Error::Config("tournament size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stratified k-fold split: indices of each class are shuffled with the
/// seeded generator and dealt round-robin, so per-fold class counts differ
/// from the ideal share by at most one sample. Folds come back with sorted
/// indices.
pub fn kfold_split(
    n: usize,
    labels: &[ClassId],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {} samples",
            labels.len(),
            n
        )));
    }
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "folds must lie in [2, {n}], got {folds}"
        )));
    }
    let mut classes: Vec<ClassId> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = vec![Vec::new(); folds];
    let mut cursor = 0usize;
    for class in classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::TooFewSamples {
                class,
                count: members.len(),
                required: folds,
            });
        }
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        for idx in members {
            result[cursor % folds].push(idx);
            cursor += 1;
        }
    }
    for fold in &mut result {
        fold.sort_unstable();
    }
    Ok(result)
}

/// Mean held-out overall accuracy of the genome's pixel SVM over the folds.
/// A fold whose training fails contributes accuracy 0.
pub fn fitness(
    genome: &Genome,
    data: &TrainingSet,
    spatial: &[Vec<f64>],
    config: &GaConfig,
) -> Result<f64> {
    let labels: Vec<ClassId> = data.samples.iter().map(|(_, l)| *l).collect();
    let folds = kfold_split(data.len(), &labels, config.folds, config.seed)?;
    let spec = genome.kernel_spec();
    let mut total = 0.0;
    for fold in &folds {
        let mut mask = vec![false; data.len()];
        for &i in fold {
            mask[i] = true;
        }
        let mut train_samples = Vec::new();
        let mut train_spatial = Vec::new();
        for i in 0..data.len() {
            if !mask[i] {
                train_samples.push(data.samples[i].clone());
                train_spatial.push(spatial[i].clone());
            }
        }
        let train_set = TrainingSet::new(data.dim, train_samples)?;
        let accuracy = match train_multiclass(&train_set, &train_spatial, &spec, genome.c(), 1e-3)
        {
            Ok(model) => {
                let mut correct = 0usize;
                let mut failed = false;
                for &i in fold {
                    let pair = crate::kernel::FeaturePair::new(
                        data.samples[i].0.clone(),
                        spatial[i].clone(),
                    );
                    match model.predict(&pair) {
                        Ok(pred) if pred == labels[i] => correct += 1,
                        Ok(_) => {}
                        Err(e) => {
                            log::warn!("prediction failed in CV fold: {e}");
                            failed = true;
                            break;
                        }
                    }
                }
                if failed {
                    0.0
                } else {
                    correct as f64 / fold.len() as f64
                }
            }
            Err(e) => {
                log::warn!("training failed in CV fold: {e}");
                0.0
            }
        };
        total += accuracy;
    }
    Ok(total / folds.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaOutcome {
    pub best: Genome,
    pub best_fitness: f64,
    /// Best population fitness after the initial evaluation and after each
    /// generation; non-decreasing because of elitism.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn tournament(rng: &mut ChaCha8Rng, fitnesses: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..fitnesses.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..fitnesses.len());
        if fitnesses[challenger] > fitnesses[best]
            || (fitnesses[challenger] == fitnesses[best] && challenger < best)
        {
            best = challenger;
        }
    }
    best
}

fn crossover(rng: &mut ChaCha8Rng, a: &Genome, b: &Genome, prob: f64) -> Genome {
    let mut child = *a;
    if rng.random::<f64>() < prob {
        child.log2_c = b.log2_c;
    }
    if rng.random::<f64>() < prob {
        child.family = b.family;
    }
    if rng.random::<f64>() < prob {
        child.log2_gamma = b.log2_gamma;
    }
    if rng.random::<f64>() < prob {
        child.degree = b.degree;
    }
    if rng.random::<f64>() < prob {
        child.mu = b.mu;
    }
    if rng.random::<f64>() < prob {
        child.beta = b.beta;
    }
    child
}

fn mutate(rng: &mut ChaCha8Rng, genome: &mut Genome, prob: f64) {
    use rand_distr::StandardNormal;
    fn step(rng: &mut ChaCha8Rng, range: (f64, f64), value: &mut f64) {
        let z: f64 = rng.sample(StandardNormal);
        *value += z * 0.1 * (range.1 - range.0);
    }
    if rng.random::<f64>() < prob {
        step(rng, LOG2_C_RANGE, &mut genome.log2_c);
    }
    if rng.random::<f64>() < prob {
        genome.family = ALL_FAMILIES[rng.random_range(0..ALL_FAMILIES.len())];
    }
    if rng.random::<f64>() < prob {
        step(rng, LOG2_GAMMA_RANGE, &mut genome.log2_gamma);
    }
    if rng.random::<f64>() < prob {
        genome.degree = DEGREES[rng.random_range(0..DEGREES.len())];
    }
    if rng.random::<f64>() < prob {
        step(rng, MU_RANGE, &mut genome.mu);
    }
    if rng.random::<f64>() < prob {
        step(rng, BETA_RANGE, &mut genome.beta);
    }
    genome.clamp();
}

/// Runs the GA: tournament selection, uniform crossover, Gaussian mutation
/// and single-individual elitism with a cached fitness.
pub fn evolve(data: &TrainingSet, spatial: &[Vec<f64>], config: &GaConfig) -> Result<GaOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population: Vec<Genome> = (0..config.population)
        .map(|_| Genome::random(&mut rng))
        .collect();
    let mut evaluations = 0usize;
    let mut fitnesses = Vec::with_capacity(population.len());
    for genome in &population {
        fitnesses.push(fitness(genome, data, spatial, config)?);
        evaluations += 1;
    }

    let best_index = |fits: &[f64]| {
        let mut best = 0usize;
        for (i, &f) in fits.iter().enumerate() {
            if f > fits[best] {
                best = i;
            }
        }
        best
    };

    let mut best = population[best_index(&fitnesses)];
    let mut best_fitness = fitnesses[best_index(&fitnesses)];
    let mut history = vec![best_fitness];

    for _generation in 0..config.generations {
        let elite_idx = best_index(&fitnesses);
        let mut next = Vec::with_capacity(config.population);
        let mut next_fit = Vec::with_capacity(config.population);
        if config.elitism > 0 {
            next.push(population[elite_idx]);
            next_fit.push(Some(fitnesses[elite_idx]));
        }
        while next.len() < config.population {
            let p1 = tournament(&mut rng, &fitnesses, config.tournament_size);
            let p2 = tournament(&mut rng, &fitnesses, config.tournament_size);
            let mut child = crossover(&mut rng, &population[p1], &population[p2], config.crossover_prob);
            mutate(&mut rng, &mut child, config.mutation_prob);
            next.push(child);
            next_fit.push(None);
        }
        population = next;
        fitnesses = Vec::with_capacity(population.len());
        for (genome, cached) in population.iter().zip(next_fit) {
            match cached {
                Some(f) => fitnesses.push(f),
                None => {
                    fitnesses.push(fitness(genome, data, spatial, config)?);
                    evaluations += 1;
                }
            }
        }
        let gen_best = best_index(&fitnesses);
        if fitnesses[gen_best] > best_fitness {
            best_fitness = fitnesses[gen_best];
            best = population[gen_best];
        }
        history.push(fitnesses[gen_best]);
    }

    Ok(GaOutcome {
        best,
        best_fitness,
        history,
        evaluations,
    })
}
