use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::harmonics::{HarmonicBasis, MAX_DEGREE};
use crate::rotation::{EulerAngles, Rotation};
use crate::scene::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Per-object Euler angles over π, independent of the surface point.
    Constant,
    /// The normalized object coordinate itself.
    Identity,
    /// Amplitude-scaled real spherical harmonics of the coordinate's direction.
    Spherical,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Constant => 0,
            Variant::Identity => 1,
            Variant::Spherical => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Constant),
            1 => Some(Variant::Identity),
            2 => Some(Variant::Spherical),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Constant => "constant",
            Variant::Identity => "identity",
            Variant::Spherical => "spherical",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(Variant::Constant),
            "identity" => Ok(Variant::Identity),
            "spherical" => Ok(Variant::Spherical),
            other => Err(format!("unknown encoding variant `{other}`")),
        }
    }
}

fn default_degree() -> u8 {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub variant: Variant,
    /// Maximum harmonic degree; only used by [`Variant::Spherical`].
    #[serde(default = "default_degree")]
    pub degree: u8,
    /// Append the scaled radius `r / √3` as a final channel (spherical only).
    #[serde(default)]
    pub include_radius: bool,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl EncodingSpec {
    pub fn constant() -> Self {
        Self {
            variant: Variant::Constant,
            degree: 0,
            include_radius: false,
        }
    }

    pub fn identity() -> Self {
        Self {
            variant: Variant::Identity,
            degree: 0,
            include_radius: false,
        }
    }

    pub fn spherical(degree: u8, include_radius: bool) -> Self {
        Self {
            variant: Variant::Spherical,
            degree,
            include_radius,
        }
    }

    pub fn channels(&self) -> usize {
        match self.variant {
            Variant::Constant | Variant::Identity => 3,
            Variant::Spherical => {
                let l = self.degree as usize + 1;
                l * l + usize::from(self.include_radius)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.variant == Variant::Spherical && self.degree > MAX_DEGREE {
            return Err(format!("degree must be at most {MAX_DEGREE}"));
        }
        Ok(())
    }
}

/// Reusable encoder; holds the harmonic tables for the spherical variant.
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncodingSpec,
    basis: Option<HarmonicBasis>,
}

impl Encoder {
    pub fn new(spec: EncodingSpec) -> Self {
        let basis = (spec.variant == Variant::Spherical).then(|| HarmonicBasis::new(spec.degree));
        Self { spec, basis }
    }

    pub fn spec(&self) -> &EncodingSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.spec.channels()
    }

    /// Writes the feature for one surface point into `out` (`channels()` long).
    ///
    /// `orientation` is the box rotation relative to the viewer; only the
    /// constant variant reads it.
    pub fn encode_into(&self, normalized: &Vector3<f64>, orientation: &Rotation, out: &mut [f64]) {
        match self.spec.variant {
            Variant::Constant => {
                out[..3].copy_from_slice(&constant_feature(&orientation.euler()));
            }
            Variant::Identity => {
                out[0] = normalized.x;
                out[1] = normalized.y;
                out[2] = normalized.z;
            }
            Variant::Spherical => {
                let r = normalized.norm();
                assert!(r > 0.0, "spherical encoding is undefined at the object center");
                let theta = (normalized.z / r).clamp(-1.0, 1.0).acos();
                let phi = normalized.y.atan2(normalized.x);
                let basis = self.basis.as_ref().expect("spherical encoder has a basis");
                let n = basis.len();
                basis.eval_scaled(theta, phi, &mut out[..n]);
                if self.spec.include_radius {
                    out[n] = (r / 3f64.sqrt()).min(1.0);
                }
            }
        }
    }
}

/// One-shot encoding of a normalized surface point of `obb`.
pub fn encode(spec: &EncodingSpec, normalized: &Vector3<f64>, obb: &OrientedBox) -> Vec<f64> {
    let encoder = Encoder::new(*spec);
    let mut out = vec![0.0; encoder.channels()];
    encoder.encode_into(normalized, &obb.rotation, &mut out);
    out
}

/// Euler angles over π, the constant-variant feature.
pub fn constant_feature(angles: &EulerAngles) -> [f64; 3] {
    [angles.azimuth / PI, angles.elevation / PI, angles.roll / PI]
}
