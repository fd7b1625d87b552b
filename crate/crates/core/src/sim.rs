//! Seeded, thread-count independent Monte Carlo.
//!
//! Samples are split into fixed batches; batch `i` draws from the ChaCha8
//! stream `i` of the master seed and batches are reduced in index order, so
//! the result depends on the seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::Objective;

pub const BATCH_SIZE: u64 = 4096;

/// Environment variable capping the worker threads of the CLI.
pub const THREADS_ENV: &str = "PRICING_LAB_THREADS";

/// Running sums for one batch: payoff moments and per-agent serve counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub served: Vec<f64>,
}

impl Tally {
    pub fn new(agents: usize) -> Self {
        Tally {
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            served: vec![0.0; agents],
        }
    }

    pub fn record(&mut self, payoff: f64) {
        self.count += 1;
        self.sum += payoff;
        self.sum_sq += payoff * payoff;
    }

    fn merge(mut self, other: &Tally) -> Tally {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (a, b) in self.served.iter_mut().zip(&other.served) {
            *a += b;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub objective: Objective,
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
    /// Per-agent probability of being offered service (or of winning, for
    /// auctions).
    pub serve_prob: Vec<f64>,
    pub seed: u64,
}

impl SimResult {
    pub fn from_tally(objective: Objective, tally: &Tally, seed: u64) -> Self {
        let n = tally.count.max(1) as f64;
        let mean = tally.sum / n;
        let var = if tally.count > 1 {
            ((tally.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        SimResult {
            objective,
            mean,
            std_err: (var / n).sqrt(),
            samples: tally.count,
            serve_prob: tally.served.iter().map(|s| s / n).collect(),
            seed,
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err + 1e-12
    }
}

/// Runs `samples` draws of `sample` and reduces the batches in order. The
/// closure records into the batch tally and receives the batch stream.
pub fn run<F>(seed: u64, samples: u64, agents: usize, sample: F) -> Tally
where
    F: Fn(&mut ChaCha8Rng, &mut Tally) + Sync,
{
    let batches = samples.div_ceil(BATCH_SIZE);
    let tallies: Vec<Tally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let mut tally = Tally::new(agents);
            let size = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            for _ in 0..size {
                sample(&mut rng, &mut tally);
            }
            tally
        })
        .collect();
    tallies
        .iter()
        .fold(Tally::new(agents), |acc, t| acc.merge(t))
}

/// Thread cap from `PRICING_LAB_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn mean_of_uniform(seed: u64, threads: usize) -> SimResult {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let tally = pool.install(|| {
            run(seed, 20_000, 1, |rng, t| {
                let u: f64 = rng.random();
                t.served[0] += f64::from(u < 0.25);
                t.record(u);
            })
        });
        SimResult::from_tally(Objective::Revenue, &tally, seed)
    }

    #[test]
    fn identical_across_thread_counts() {
        let a = mean_of_uniform(7, 1);
        let b = mean_of_uniform(7, 8);
        assert_eq!(a, b);
        assert_eq!(a.samples, 20_000);
        assert!(a.within(0.5, 4.0));
        assert!((a.serve_prob[0] - 0.25).abs() < 0.02);
        assert!(((a.std_err * a.std_err * 20_000.0) - 1.0 / 12.0).abs() < 0.005);
    }

    #[test]
    fn seeds_give_different_streams() {
        assert_ne!(mean_of_uniform(1, 2).mean, mean_of_uniform(2, 2).mean);
    }
}
