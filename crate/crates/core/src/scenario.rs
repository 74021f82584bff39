//! Initial conditions of the two reference experiments.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{canonical_from_particle, CanonicalState, ParticleVelocities, PhysParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Motionless layer with a Gaussian bulge on `[-5, 5]²`, `T = 100`.
    GeostrophicAdjustment,
    /// Perturbed balanced shear layer on `[0, 10]²`, `T = 50`.
    ShearInstability,
    /// User domain with a Gaussian bulge (see [`CustomBulge`]).
    Custom,
}

/// Shear-layer amplitude `Δ_h`.
pub const SHEAR_DELTA_H: f64 = 0.2;
/// Shear-layer displacement `Δ_y`.
pub const SHEAR_DELTA_Y: f64 = 0.5;
/// Shear-layer domain length `L`.
pub const SHEAR_LENGTH: f64 = 10.0;

/// Gaussian bulge `h = 1 + amplitude · exp(-(x² + y²)/width²)` used by the
/// custom scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomBulge {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for CustomBulge {
    fn default() -> Self {
        CustomBulge {
            amplitude: 0.5,
            width: 1.25,
        }
    }
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::GeostrophicAdjustment => "geostrophic_adjustment",
            Scenario::ShearInstability => "shear_instability",
            Scenario::Custom => "custom",
        }
    }

    /// Domain `(a, b, c, d)` pinned by the named experiments.
    pub fn domain(&self) -> Option<(f64, f64, f64, f64)> {
        match self {
            Scenario::GeostrophicAdjustment => Some((-5.0, 5.0, -5.0, 5.0)),
            Scenario::ShearInstability => Some((0.0, SHEAR_LENGTH, 0.0, SHEAR_LENGTH)),
            Scenario::Custom => None,
        }
    }

    pub fn final_time(&self) -> Option<f64> {
        match self {
            Scenario::GeostrophicAdjustment => Some(100.0),
            Scenario::ShearInstability => Some(50.0),
            Scenario::Custom => None,
        }
    }

    /// Initial canonical state on `grid`.
    pub fn initial_state(&self, grid: &Grid, params: &PhysParams) -> Result<CanonicalState> {
        self.initial_state_with(grid, params, CustomBulge::default())
    }

    pub fn initial_state_with(
        &self,
        grid: &Grid,
        params: &PhysParams,
        bulge: CustomBulge,
    ) -> Result<CanonicalState> {
        let n = grid.len();
        let (h, u, v) = match self {
            Scenario::GeostrophicAdjustment => (
                grid.sample(|x, y| {
                    1.0 + 0.5 * (-(0.8 * x).powi(2) - (0.8 * y).powi(2)).exp()
                }),
                vec![0.0; n],
                vec![0.0; n],
            ),
            Scenario::ShearInstability => {
                let wz = params.omega_hat[2];
                if wz == 0.0 {
                    return Err(Error::InvalidArgument(
                        "the shear layer is balanced by Ω̂ᶻ, which must be nonzero".into(),
                    ));
                }
                let k = 2.0 * PI / SHEAR_LENGTH;
                let phase = move |x: f64, y: f64| k * (y - SHEAR_DELTA_Y * (k * x).sin());
                (
                    grid.sample(|x, y| 1.0 + SHEAR_DELTA_H * phase(x, y).sin()),
                    grid.sample(|x, y| -k * SHEAR_DELTA_H / wz * phase(x, y).cos()),
                    grid.sample(|x, y| {
                        -k * k * SHEAR_DELTA_H * SHEAR_DELTA_Y / wz
                            * phase(x, y).cos()
                            * (k * x).cos()
                    }),
                )
            }
            Scenario::Custom => {
                let w2 = bulge.width * bulge.width;
                (
                    grid.sample(|x, y| 1.0 + bulge.amplitude * (-(x * x + y * y) / w2).exp()),
                    vec![0.0; n],
                    vec![0.0; n],
                )
            }
        };
        canonical_from_particle(&ParticleVelocities { u, v }, &h, params)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geostrophic_adjustment" | "ex1" => Ok(Scenario::GeostrophicAdjustment),
            "shear_instability" | "ex2" => Ok(Scenario::ShearInstability),
            "custom" => Ok(Scenario::Custom),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}
