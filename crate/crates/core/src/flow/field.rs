//! Velocity fields and the built-in toy registry.

use std::collections::BTreeMap;

use ndarray::Zip;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::sampler::Latent;
use super::FlowError;
use crate::render::CnocsMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub index: usize,
    pub tau: f64,
}

/// What a field is conditioned on. `map` is `None` outside the injection window.
#[derive(Debug, Clone, Copy)]
pub struct Condition<'a> {
    pub prompt: &'a str,
    pub map: Option<&'a CnocsMap>,
}

impl<'a> Condition<'a> {
    pub fn new(prompt: &'a str, map: Option<&'a CnocsMap>) -> Self {
        Self { prompt, map }
    }
}

/// `v(x, k, prompt, map)`. Must return a latent of the same shape as `x`
/// and be deterministic for fixed inputs.
pub trait VelocityField: Sync {
    fn velocity(&self, x: &Latent, step: StepInfo, cond: &Condition<'_>) -> Result<Latent, FlowError>;
}

/// Always zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl VelocityField for ZeroField {
    fn velocity(&self, x: &Latent, _step: StepInfo, _cond: &Condition<'_>) -> Result<Latent, FlowError> {
        Ok(Latent::zeros(x.raw_dim()))
    }
}

/// `v = (x − target(prompt)) / τ`.
///
/// Under the Euler update this scales the residual `x − target` by
/// `τ_{k+1} / τ_k` each step, so the last step lands on the target.
#[derive(Debug, Clone, Default)]
pub struct LinearToTarget {
    targets: BTreeMap<String, Latent>,
}

impl LinearToTarget {
    pub fn new(targets: BTreeMap<String, Latent>) -> Self {
        Self { targets }
    }

    pub fn target(&self, prompt: &str) -> Option<&Latent> {
        self.targets.get(prompt)
    }
}

impl VelocityField for LinearToTarget {
    fn velocity(&self, x: &Latent, step: StepInfo, cond: &Condition<'_>) -> Result<Latent, FlowError> {
        let target = self
            .targets
            .get(cond.prompt)
            .ok_or_else(|| FlowError::UnknownCondition(cond.prompt.to_string()))?;
        if target.shape() != x.shape() {
            return Err(FlowError::ShapeMismatch {
                expected: x.shape().to_vec(),
                got: target.shape().to_vec(),
            });
        }
        if step.tau <= 0.0 {
            return Err(FlowError::InvalidSchedule("linear field evaluated at τ = 0".into()));
        }
        let mut v = x.clone();
        Zip::from(&mut v).and(target).for_each(|v, &t| *v = (*v - t) / step.tau);
        Ok(v)
    }
}

/// Stationary standard-normal field; each prompt gets its own stream.
#[derive(Debug, Clone, Copy)]
pub struct SeededRandom {
    pub seed: u64,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl VelocityField for SeededRandom {
    fn velocity(&self, x: &Latent, _step: StepInfo, cond: &Condition<'_>) -> Result<Latent, FlowError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(cond.prompt));
        Ok(Latent::from_shape_simple_fn(x.raw_dim(), || StandardNormal.sample(&mut rng)))
    }
}

/// Manifest entry naming a toy field. Target values are file references
/// resolved by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    LinearToTarget { targets: BTreeMap<String, String> },
    SeededRandom { seed: u64 },
}

impl FieldSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FieldSpec::Zero => "zero",
            FieldSpec::LinearToTarget { .. } => "linear_to_target",
            FieldSpec::SeededRandom { .. } => "seeded_random",
        }
    }
}

/// A resolved toy field.
#[derive(Debug, Clone)]
pub enum ToyField {
    Zero(ZeroField),
    LinearToTarget(LinearToTarget),
    SeededRandom(SeededRandom),
}

impl ToyField {
    /// Builds the field, loading each target through `load`.
    pub fn build<F>(spec: &FieldSpec, mut load: F) -> Result<Self, FlowError>
    where
        F: FnMut(&str) -> Result<Latent, FlowError>,
    {
        Ok(match spec {
            FieldSpec::Zero => ToyField::Zero(ZeroField),
            FieldSpec::SeededRandom { seed } => ToyField::SeededRandom(SeededRandom { seed: *seed }),
            FieldSpec::LinearToTarget { targets } => {
                let mut loaded = BTreeMap::new();
                for (label, reference) in targets {
                    loaded.insert(label.clone(), load(reference)?);
                }
                ToyField::LinearToTarget(LinearToTarget::new(loaded))
            }
        })
    }
}

impl VelocityField for ToyField {
    fn velocity(&self, x: &Latent, step: StepInfo, cond: &Condition<'_>) -> Result<Latent, FlowError> {
        match self {
            ToyField::Zero(f) => f.velocity(x, step, cond),
            ToyField::LinearToTarget(f) => f.velocity(x, step, cond),
            ToyField::SeededRandom(f) => f.velocity(x, step, cond),
        }
    }
}
