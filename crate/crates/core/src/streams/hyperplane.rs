//! Drifting hyperplane generator with recurring concepts and sensor overlays.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DriftSchedule, Instance, StreamConfig, StreamError, Variant};

pub const CONCEPT_POOL_SIZE: usize = 5;

const POOL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Iterator over a seeded hyperplane stream. `y = (x_p + x_q + x_r) / 3`.
#[derive(Debug, Clone)]
pub struct HyperplaneStream {
    pool: Vec<[usize; 3]>,
    order: Vec<usize>,
    schedule: DriftSchedule,
    num_features: usize,
    length: usize,
    variant: Variant,
    rng: ChaCha8Rng,
    t: usize,
    failure: Option<Failure>,
    selected: Option<usize>,
}

#[derive(Debug, Clone)]
struct Failure {
    failed: usize,
    /// Random order over the other features; the first two outside the
    /// current concept carry the failed value, so the concept stays learnable.
    spares: Vec<usize>,
}

impl Failure {
    fn carriers(&self, triple: [usize; 3]) -> (usize, usize) {
        let mut it = self.spares.iter().copied().filter(|f| !triple.contains(f));
        (it.next().expect("at least two spare features"), it.next().expect("at least two spare features"))
    }
}

/// Draws `CONCEPT_POOL_SIZE` distinct sorted feature triples.
pub(crate) fn concept_pool(num_features: usize, shared_seed: u64) -> Vec<[usize; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(shared_seed ^ POOL_SALT);
    let mut pool: Vec<[usize; 3]> = Vec::with_capacity(CONCEPT_POOL_SIZE);
    let all: Vec<usize> = (0..num_features).collect();
    // With n ≥ 4 there are at least 4 triples; allow repeats only if n = 4.
    let max_distinct = num_features * (num_features - 1) * (num_features - 2) / 6;
    while pool.len() < CONCEPT_POOL_SIZE {
        let mut triple: [usize; 3] = all
            .choose_multiple(&mut rng, 3)
            .copied()
            .collect::<Vec<_>>()
            .try_into()
            .expect("three indices");
        triple.sort_unstable();
        if pool.len() >= max_distinct || !pool.contains(&triple) {
            pool.push(triple);
        }
    }
    pool
}

pub fn hyperplane_stream(config: &StreamConfig) -> Result<HyperplaneStream, StreamError> {
    config.validate()?;
    let schedule = config.schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..CONCEPT_POOL_SIZE).collect();
    order.shuffle(&mut rng);
    Ok(HyperplaneStream {
        pool: concept_pool(config.num_features, config.shared_seed()),
        order,
        schedule,
        num_features: config.num_features,
        length: config.length,
        variant: config.variant,
        rng,
        t: 0,
        failure: None,
        selected: None,
    })
}

impl HyperplaneStream {
    pub fn pool(&self) -> &[[usize; 3]] {
        &self.pool
    }

    pub fn triple_of(&self, concept: u32) -> [usize; 3] {
        self.pool[concept as usize]
    }

    fn concept_of_segment(&self, segment: usize) -> usize {
        self.order[segment % CONCEPT_POOL_SIZE]
    }

    fn overlay(&mut self, x: &mut [f64], y: &mut f64, triple: [usize; 3]) {
        let t = self.t;
        let progress = t as f64 / self.length as f64;
        match self.variant {
            Variant::A => {
                if self.rng.random_bool(0.2) {
                    let sign = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    *y = (*y + sign * 0.05).clamp(0.0, 1.0);
                }
            }
            Variant::B => {
                if self.failure.is_none() && self.rng.random_bool(0.001) {
                    let failed = self.rng.random_range(0..self.num_features);
                    let mut spares: Vec<usize> = (0..self.num_features).filter(|&f| f != failed).collect();
                    spares.shuffle(&mut self.rng);
                    self.failure = Some(Failure { failed, spares });
                }
                if let Some(f) = &self.failure {
                    let failed = f.failed;
                    if triple.contains(&failed) {
                        let (j, k) = f.carriers(triple);
                        let xi = x[failed];
                        x[j] = xi / 4.0;
                        x[k] = 3.0 * xi / 4.0;
                    }
                    x[failed] = 0.0;
                }
            }
            Variant::C => {
                if let Some(i) = self.selected {
                    if self.rng.random_bool(0.3) {
                        x[i] = 0.0;
                    }
                } else if self.rng.random_bool(0.001) {
                    // Selected at t − 1; failures start from the next step.
                    self.selected = Some(self.rng.random_range(0..self.num_features));
                }
            }
            Variant::D => {
                if self.selected.is_none() && self.rng.random_bool((0.001 * progress).min(1.0)) {
                    self.selected = Some(self.rng.random_range(0..self.num_features));
                }
                if let Some(i) = self.selected {
                    let sign = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    x[i] = (x[i] + sign * 0.2 * progress).clamp(0.0, 1.0);
                }
            }
        }
    }
}

impl Iterator for HyperplaneStream {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        if self.t >= self.length {
            return None;
        }
        let (segment, mixing) = self.schedule.locate(self.t);
        let segment = match mixing {
            Some((u, m)) => {
                let p_new = (u + 1) as f64 / (m + 1) as f64;
                if self.rng.random_bool(p_new) {
                    segment + 1
                } else {
                    segment
                }
            }
            None => segment,
        };
        let concept = self.concept_of_segment(segment);
        let triple = self.pool[concept];
        let mut x: Vec<f64> = (0..self.num_features).map(|_| self.rng.random::<f64>()).collect();
        let mut y = triple.iter().map(|&i| x[i]).sum::<f64>() / 3.0;
        self.overlay(&mut x, &mut y, triple);
        let inst = Instance::new(x, y, self.t).with_concept(concept as u32);
        self.t += 1;
        Some(inst)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.length - self.t;
        (rest, Some(rest))
    }
}
