//! Disentangled object sampling.
//!
//! Each step inside the injection window computes a global update from the
//! scene prompt and the full-scene map, then one update per object from the
//! same pre-step latent, conditioned on that object's prompt and map. Object
//! updates overwrite the global one inside the object's mask, in index order,
//! so a later object wins where masks overlap. After the window a single
//! global update runs with no map.

use rayon::prelude::*;

use super::field::{Condition, StepInfo, VelocityField};
use super::sampler::{advance, Latent, Schedule};
use super::FlowError;
use crate::render::mask::{downsample_mask, foreground_mask, Mask};
use crate::render::{render_cnocs, CnocsMap, EncodingSpec};
use crate::scene::Scene;

pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_INJECTION_STEPS: usize = 15;
pub const DEFAULT_LATENT_CHANNELS: usize = 4;
pub const DEFAULT_LATENT_FACTOR: usize = 8;
/// Fraction of a latent cell the object must cover to enter its mask.
pub const MASK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCondition {
    pub prompt: String,
    pub map: CnocsMap,
    /// Latent-resolution mask.
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DosConfig {
    pub steps: usize,
    pub injection_steps: usize,
    pub prompt: String,
    pub global_map: Option<CnocsMap>,
    pub objects: Vec<ObjectCondition>,
}

/// Latent layout derived from image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentGeometry {
    pub channels: usize,
    pub factor: usize,
}

impl Default for LatentGeometry {
    fn default() -> Self {
        Self {
            channels: DEFAULT_LATENT_CHANNELS,
            factor: DEFAULT_LATENT_FACTOR,
        }
    }
}

impl LatentGeometry {
    /// `(channels, ceil(h / f), ceil(w / f))`.
    pub fn shape(&self, width: u32, height: u32) -> (usize, usize, usize) {
        (
            self.channels,
            (height as usize).div_ceil(self.factor),
            (width as usize).div_ceil(self.factor),
        )
    }
}

impl DosConfig {
    /// A config with no per-object branches.
    pub fn global(steps: usize, injection_steps: usize, prompt: impl Into<String>, map: Option<CnocsMap>) -> Self {
        Self {
            steps,
            injection_steps,
            prompt: prompt.into(),
            global_map: map,
            objects: Vec::new(),
        }
    }

    /// Renders the full-scene map and one map per object; each object's mask
    /// is its own footprint downsampled to latent resolution.
    pub fn from_scene(
        scene: &Scene,
        spec: &EncodingSpec,
        geometry: LatentGeometry,
        steps: usize,
        injection_steps: usize,
    ) -> Self {
        let objects = (0..scene.objects.len())
            .into_par_iter()
            .map(|i| {
                let map = render_cnocs(&scene.single(i), spec);
                let mask = downsample_mask(&foreground_mask(&map), geometry.factor, MASK_THRESHOLD);
                ObjectCondition {
                    prompt: scene.object_prompt(i).to_string(),
                    map,
                    mask,
                }
            })
            .collect();
        Self {
            steps,
            injection_steps,
            prompt: scene.prompt.clone(),
            global_map: Some(render_cnocs(scene, spec)),
            objects,
        }
    }

    pub fn validate(&self, shape: &[usize]) -> Result<(), FlowError> {
        if self.steps == 0 {
            return Err(FlowError::InvalidSchedule("need at least one step".into()));
        }
        if self.injection_steps > self.steps {
            return Err(FlowError::InvalidConfig(format!(
                "injection steps {} exceed total steps {}",
                self.injection_steps, self.steps
            )));
        }
        if shape.len() != 3 {
            return Err(FlowError::InvalidConfig("latent must be three-dimensional".into()));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.mask.height != shape[1] || obj.mask.width != shape[2] {
                return Err(FlowError::MaskShape {
                    object: i,
                    expected: (shape[1], shape[2]),
                    got: (obj.mask.height, obj.mask.width),
                });
            }
        }
        Ok(())
    }
}

/// Copies every channel of `src` into `dst` where `mask` is set.
fn overwrite_masked(dst: &mut Latent, src: &Latent, mask: &Mask) {
    let (c, h, w) = dst.dim();
    for v in 0..h {
        for u in 0..w {
            if mask.get(u, v) {
                for k in 0..c {
                    dst[[k, v, u]] = src[[k, v, u]];
                }
            }
        }
    }
}

/// All states `x_0 = ε, …, x_T`.
pub fn dos_trajectory<F: VelocityField + ?Sized>(
    eps: &Latent,
    config: &DosConfig,
    field: &F,
) -> Result<Vec<Latent>, FlowError> {
    config.validate(eps.shape())?;
    let schedule = Schedule::uniform(config.steps)?;
    let mut states = Vec::with_capacity(config.steps + 1);
    states.push(eps.clone());
    for k in 0..config.steps {
        let x = &states[k];
        let info = StepInfo {
            index: k,
            tau: schedule.tau(k),
        };
        let dt = schedule.dt(k);
        let next = if k < config.injection_steps {
            let global = Condition::new(&config.prompt, config.global_map.as_ref());
            let mut next = advance(x, &field.velocity(x, info, &global)?, dt)?;
            let branches: Vec<Latent> = config
                .objects
                .par_iter()
                .map(|obj| {
                    let cond = Condition::new(&obj.prompt, Some(&obj.map));
                    advance(x, &field.velocity(x, info, &cond)?, dt)
                })
                .collect::<Result<_, _>>()?;
            for (obj, branch) in config.objects.iter().zip(&branches) {
                overwrite_masked(&mut next, branch, &obj.mask);
            }
            next
        } else {
            let global = Condition::new(&config.prompt, None);
            advance(x, &field.velocity(x, info, &global)?, dt)?
        };
        states.push(next);
    }
    Ok(states)
}

pub fn dos_sample<F: VelocityField + ?Sized>(eps: &Latent, config: &DosConfig, field: &F) -> Result<Latent, FlowError> {
    Ok(dos_trajectory(eps, config, field)?.pop().expect("trajectory holds at least ε"))
}

/// Euler sampling with the global condition only: `prompt` and `map` during
/// the first `injection_steps` steps, `prompt` alone afterwards.
pub fn plain_sample<F: VelocityField + ?Sized>(
    eps: &Latent,
    steps: usize,
    injection_steps: usize,
    prompt: &str,
    map: Option<&CnocsMap>,
    field: &F,
) -> Result<Latent, FlowError> {
    let injection_steps = injection_steps.min(steps);
    let schedule = Schedule::uniform(steps)?;
    let mut x = eps.clone();
    for k in 0..steps {
        let info = StepInfo {
            index: k,
            tau: schedule.tau(k),
        };
        let cond = Condition::new(prompt, if k < injection_steps { map } else { None });
        x = advance(&x, &field.velocity(&x, info, &cond)?, schedule.dt(k))?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::flow::field::{LinearToTarget, SeededRandom, ZeroField};
    use crate::flow::sampler::gaussian_noise;

    fn half_mask(w: usize, h: usize) -> Mask {
        Mask::from_fn(w, h, |u, _| u < w / 2)
    }

    fn dummy_map() -> CnocsMap {
        CnocsMap::empty(8, 8, EncodingSpec::identity())
    }

    #[test]
    fn no_objects_is_plain_sampling() {
        let eps = gaussian_noise((2, 4, 4), 1);
        let field = SeededRandom { seed: 3 };
        let cfg = DosConfig::global(20, 15, "a room", None);
        let a = dos_sample(&eps, &cfg, &field).unwrap();
        let b = plain_sample(&eps, 20, 15, "a room", None, &field).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_field_returns_noise() {
        let eps = gaussian_noise((2, 4, 4), 2);
        let mut cfg = DosConfig::global(20, 15, "x", Some(dummy_map()));
        cfg.objects.push(ObjectCondition {
            prompt: "o".into(),
            map: dummy_map(),
            mask: half_mask(4, 4),
        });
        assert_eq!(dos_sample(&eps, &cfg, &ZeroField).unwrap(), eps);
    }

    #[test]
    fn later_object_wins_overlap() {
        let shape = (1, 2, 2);
        let mut targets = BTreeMap::new();
        targets.insert("g".to_string(), Latent::from_elem(shape, 0.0));
        targets.insert("a".to_string(), Latent::from_elem(shape, 1.0));
        targets.insert("b".to_string(), Latent::from_elem(shape, 2.0));
        let field = LinearToTarget::new(targets);
        let full = Mask::from_fn(2, 2, |_, _| true);
        let left = Mask::from_fn(2, 2, |u, _| u == 0);
        let mut cfg = DosConfig::global(10, 10, "g", None);
        for (p, m) in [("a", full), ("b", left)] {
            cfg.objects.push(ObjectCondition {
                prompt: p.into(),
                map: dummy_map(),
                mask: m,
            });
        }
        let out = dos_sample(&gaussian_noise(shape, 4), &cfg, &field).unwrap();
        for v in 0..2 {
            assert!((out[[0, v, 0]] - 2.0).abs() < 1e-9);
            assert!((out[[0, v, 1]] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn validates_config() {
        let eps = Latent::zeros((1, 4, 4));
        let cfg = DosConfig::global(10, 11, "g", None);
        assert!(matches!(dos_sample(&eps, &cfg, &ZeroField), Err(FlowError::InvalidConfig(_))));
        let mut cfg = DosConfig::global(10, 5, "g", None);
        cfg.objects.push(ObjectCondition {
            prompt: "o".into(),
            map: dummy_map(),
            mask: Mask::new(3, 4),
        });
        assert!(matches!(dos_sample(&eps, &cfg, &ZeroField), Err(FlowError::MaskShape { .. })));
    }

    #[test]
    fn latent_geometry_rounds_up() {
        let g = LatentGeometry::default();
        assert_eq!(g.shape(512, 512), (4, 64, 64));
        assert_eq!(g.shape(100, 60), (4, 8, 13));
    }
}
