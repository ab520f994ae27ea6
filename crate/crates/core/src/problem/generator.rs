use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CvrpInstance, FfspInstance, Instance, ProblemError, ProblemKind, Stage, TspInstance};

/// Distribution parameters. Coordinates are always uniform in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub demand_min: u32,
    pub demand_max: u32,
    /// Vehicle capacity; derived from the customer count when absent.
    pub capacity: Option<u32>,
    pub time_min: u32,
    pub time_max: u32,
    pub stages: usize,
    pub machines_per_stage: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            demand_min: 1,
            demand_max: 9,
            capacity: None,
            time_min: 2,
            time_max: 9,
            stages: 3,
            machines_per_stage: 4,
        }
    }
}

impl GeneratorParams {
    /// Capacity convention of the usual random CVRP benchmarks.
    pub fn default_capacity(n: usize) -> u32 {
        match n {
            0..=10 => 20,
            11..=20 => 30,
            21..=50 => 40,
            _ => 50,
        }
    }
}

/// Seeded instance source: `(seed, index)` fully determines an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceGenerator {
    pub kind: ProblemKind,
    /// Node count (TSP), customer count (CVRP) or job count (FFSP).
    pub size: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: GeneratorParams,
}

impl InstanceGenerator {
    pub fn new(kind: ProblemKind, size: usize, seed: u64) -> Self {
        Self { kind, size, seed, params: GeneratorParams::default() }
    }

    pub fn with_params(mut self, params: GeneratorParams) -> Self {
        self.params = params;
        self
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn validate(&self) -> Result<(), ProblemError> {
        let p = &self.params;
        let bad = |msg: String| Err(ProblemError::InvalidParameters(msg));
        match self.kind {
            ProblemKind::Tsp if self.size < TspInstance::MIN_NODES => {
                bad(format!("TSP size {} is below {}", self.size, TspInstance::MIN_NODES))
            }
            ProblemKind::Cvrp | ProblemKind::Ffsp if self.size == 0 => bad("size must be positive".into()),
            ProblemKind::Cvrp => {
                let cap = p.capacity.unwrap_or_else(|| GeneratorParams::default_capacity(self.size));
                if p.demand_min == 0 || p.demand_min > p.demand_max || p.demand_max > cap {
                    bad(format!("demand range {}..={} does not fit capacity {cap}", p.demand_min, p.demand_max))
                } else {
                    Ok(())
                }
            }
            ProblemKind::Ffsp => {
                if p.stages == 0 || p.machines_per_stage == 0 {
                    bad("stages and machines per stage must be positive".into())
                } else if p.time_min == 0 || p.time_min > p.time_max {
                    bad(format!("invalid processing time range {}..={}", p.time_min, p.time_max))
                } else {
                    Ok(())
                }
            }
            ProblemKind::Tsp => Ok(()),
        }
    }

    pub fn generate(&self, index: u64) -> Result<Instance, ProblemError> {
        self.validate()?;
        let mut rng = self.rng(index);
        let p = &self.params;
        let point = |rng: &mut ChaCha8Rng| [rng.gen::<f64>(), rng.gen::<f64>()];
        match self.kind {
            ProblemKind::Tsp => {
                let coords = (0..self.size).map(|_| point(&mut rng)).collect();
                TspInstance::new(coords).map(Instance::Tsp)
            }
            ProblemKind::Cvrp => {
                let depot = point(&mut rng);
                let customers = (0..self.size).map(|_| point(&mut rng)).collect();
                let demands = (0..self.size).map(|_| rng.gen_range(p.demand_min..=p.demand_max)).collect();
                let cap = p.capacity.unwrap_or_else(|| GeneratorParams::default_capacity(self.size));
                CvrpInstance::new(depot, customers, demands, cap).map(Instance::Cvrp)
            }
            ProblemKind::Ffsp => {
                let stages = (0..p.stages)
                    .map(|_| Stage {
                        machines: (0..p.machines_per_stage)
                            .map(|_| (0..self.size).map(|_| rng.gen_range(p.time_min..=p.time_max)).collect())
                            .collect(),
                    })
                    .collect();
                FfspInstance::new(self.size, stages).map(Instance::Ffsp)
            }
        }
    }

    pub fn generate_batch(&self, count: usize) -> Result<Vec<Instance>, ProblemError> {
        (0..count as u64).map(|i| self.generate(i)).collect()
    }
}
