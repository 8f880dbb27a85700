//! A synthetic decision-maker with a hidden linear utility over the three
//! objectives and softmax choice noise controlled by a temperature.

use crate::error::{Error, Result};
use crate::model::{ObjectiveVector, OBJECTIVE_COUNT};
use crate::rng::{self, TeamRng};

#[derive(Debug, Clone)]
pub struct SimulatedUser {
    weights: [f64; OBJECTIVE_COUNT],
    temperature: f64,
    rng: TeamRng,
}

impl SimulatedUser {
    /// `weights` must be non-negative and sum to 1 (within 1e-9); the
    /// temperature must be non-negative.
    pub fn new(weights: [f64; OBJECTIVE_COUNT], temperature: f64, seed: u64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "user weights must be non-negative, got {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "user weights must sum to 1, got {total}"
            )));
        }
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(SimulatedUser {
            weights,
            temperature,
            rng: rng::seeded(seed),
        })
    }

    pub fn weights(&self) -> [f64; OBJECTIVE_COUNT] {
        self.weights
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn utility(&self, objectives: &ObjectiveVector) -> f64 {
        self.weights
            .iter()
            .zip(objectives.as_array())
            .map(|(w, x)| w * x)
            .sum()
    }

    /// Position of the chosen team within `presented`. Simulated users never
    /// skip.
    pub fn choose(&mut self, presented: &[ObjectiveVector]) -> Result<usize> {
        let utilities: Vec<f64> = presented.iter().map(|o| self.utility(o)).collect();
        self.choose_by_utility(&utilities)
    }

    /// Choice over raw utilities: argmax (first wins ties) at zero
    /// temperature, softmax sampling otherwise.
    pub fn choose_by_utility(&mut self, utilities: &[f64]) -> Result<usize> {
        if utilities.is_empty() {
            return Err(Error::EmptyPresentation);
        }
        let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.temperature == 0.0 {
            return Ok(utilities
                .iter()
                .position(|&u| u == max)
                .expect("max is attained"));
        }
        let weights: Vec<f64> = utilities
            .iter()
            .map(|u| ((u - max) / self.temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let target = rng::unit(&mut self.rng) * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return Ok(i);
            }
        }
        Ok(weights.len() - 1)
    }
}
