//! Experiment configuration, read from and echoed as TOML.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::integrator::AvfConfig;
use crate::model::{NondimScales, PhysParams};
use crate::pod::ModeSelection;
use crate::scenario::{CustomBulge, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub physics: PhysicsConfig,
    pub rom: RomConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// `[a, b, c, d]` for `[a, b) × [c, d)`; fixed by the named scenarios.
    pub domain: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    /// Defaults to the scenario's end time.
    pub final_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Latitude `φ` in radians.
    pub latitude: f64,
    /// Non-traditional parameter; derived from `scales` when absent.
    pub delta: Option<f64>,
    /// Nondimensional gravity.
    pub gravity: f64,
    pub scales: ScalesConfig,
    /// Initial bulge of the custom scenario.
    pub bulge: CustomBulge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalesConfig {
    /// Layer depth in m.
    pub depth: f64,
    /// Rotation rate in rad/s.
    pub rotation: f64,
    /// Gravity in m/s².
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomConfig {
    pub kappa_pod: f64,
    pub kappa_deim: f64,
    /// Explicit POD mode count per component; overrides `kappa_pod`.
    pub modes: Option<usize>,
    /// Explicit DEIM point count per component; overrides `kappa_deim`.
    pub deim_modes: Option<usize>,
    /// Online runs per reduced model; the median wall time is reported.
    pub online_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Fom,
    Pod,
    Deim,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Fom, Stage::Pod, Stage::Deim];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fom => "fom",
            Stage::Pod => "pod",
            Stage::Deim => "deim",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fom" => Ok(Stage::Fom),
            "pod" => Ok(Stage::Pod),
            "deim" => Ok(Stage::Deim),
            other => Err(Error::Config(format!("unknown stage `{other}`"))),
        }
    }
}

/// Parses `all`, `fom-only` or a comma-separated stage list.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>> {
    match s {
        "all" => Ok(Stage::ALL.to_vec()),
        "fom-only" => Ok(vec![Stage::Fom]),
        list => list.split(',').map(|t| t.trim().parse()).collect(),
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::GeostrophicAdjustment,
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            physics: PhysicsConfig::default(),
            rom: RomConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 100,
            ny: 100,
            domain: None,
        }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt: 0.1,
            final_time: None,
        }
    }
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            latitude: FRAC_PI_4,
            delta: None,
            gravity: 1.0,
            scales: ScalesConfig::default(),
            bulge: CustomBulge::default(),
        }
    }
}

impl Default for ScalesConfig {
    fn default() -> Self {
        let s = NondimScales::default();
        ScalesConfig {
            depth: s.h_scale,
            rotation: s.omega_rot,
            gravity: s.g_dim,
        }
    }
}

impl Default for RomConfig {
    fn default() -> Self {
        RomConfig {
            kappa_pod: 1e-3,
            kappa_deim: 1e-5,
            modes: None,
            deim_modes: None,
            online_repeats: 3,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let avf = AvfConfig::default();
        SolverConfig {
            tol: avf.tol,
            max_iter: avf.max_iter,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            stages: Stage::ALL.to_vec(),
        }
    }
}

const DEFAULT_CUSTOM_DOMAIN: [f64; 4] = [-5.0, 5.0, -5.0, 5.0];
const DEFAULT_CUSTOM_FINAL_TIME: f64 = 10.0;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills every scenario-dependent default and validates the result.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        let pinned = c.scenario.domain().map(|(a, b, cc, d)| [a, b, cc, d]);
        c.grid.domain = match (pinned, c.grid.domain) {
            (Some(p), Some(given)) if p != given => {
                return Err(Error::Config(format!(
                    "scenario {} uses the domain {p:?}, not {given:?}",
                    c.scenario
                )))
            }
            (Some(p), _) => Some(p),
            (None, given) => Some(given.unwrap_or(DEFAULT_CUSTOM_DOMAIN)),
        };
        if c.time.final_time.is_none() {
            c.time.final_time = Some(c.scenario.final_time().unwrap_or(DEFAULT_CUSTOM_FINAL_TIME));
        }
        if c.physics.delta.is_none() {
            c.physics.delta = Some(c.scales().delta());
        }
        c.validate()?;
        Ok(c)
    }

    fn scales(&self) -> NondimScales {
        NondimScales {
            h_scale: self.physics.scales.depth,
            omega_rot: self.physics.scales.rotation,
            g_dim: self.physics.scales.gravity,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.grid.nx < 3 || self.grid.ny < 3 {
            return bad(format!("grid {}x{} needs at least 3 points per direction", self.grid.nx, self.grid.ny));
        }
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            return bad(format!("time step must be positive, got {}", self.time.dt));
        }
        let t = self.final_time();
        if !(t > 0.0 && t.is_finite()) {
            return bad(format!("final time must be positive, got {t}"));
        }
        let ratio = t / self.time.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!("final time {t} is not a whole number of steps of {}", self.time.dt));
        }
        let delta = self.physics.delta.unwrap_or(f64::NAN);
        if !delta.is_finite() || !self.physics.latitude.is_finite() || !(self.physics.gravity > 0.0) {
            return bad("latitude, delta and gravity must be finite with positive gravity".into());
        }
        for (name, k) in [("kappa_pod", self.rom.kappa_pod), ("kappa_deim", self.rom.kappa_deim)] {
            if !(k > 0.0 && k < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {k}"));
            }
        }
        if self.rom.modes == Some(0) || self.rom.deim_modes == Some(0) {
            return bad("mode counts must be positive".into());
        }
        if self.rom.online_repeats == 0 {
            return bad("online_repeats must be at least 1".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver tolerance and iteration cap must be positive".into());
        }
        if self.output.stages.is_empty() {
            return bad("no stages selected".into());
        }
        Ok(())
    }

    /// End time; call on a resolved config.
    pub fn final_time(&self) -> f64 {
        self.time
            .final_time
            .or(self.scenario.final_time())
            .unwrap_or(DEFAULT_CUSTOM_FINAL_TIME)
    }

    pub fn steps(&self) -> usize {
        (self.final_time() / self.time.dt).round() as usize
    }

    /// Sets the end time to `steps` time steps.
    pub fn set_steps(&mut self, steps: usize) {
        self.time.final_time = Some(steps as f64 * self.time.dt);
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let [a, b, c, d] = self
            .grid
            .domain
            .or(self.scenario.domain().map(|(a, b, c, d)| [a, b, c, d]))
            .unwrap_or(DEFAULT_CUSTOM_DOMAIN);
        Grid::new(a, b, c, d, self.grid.nx, self.grid.ny)
    }

    pub fn phys_params(&self, nodes: usize) -> PhysParams {
        let delta = self.physics.delta.unwrap_or_else(|| self.scales().delta());
        PhysParams::from_latitude(self.physics.latitude, delta, nodes).with_gravity(self.physics.gravity)
    }

    pub fn avf(&self) -> AvfConfig {
        AvfConfig {
            dt: self.time.dt,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn pod_selection(&self) -> ModeSelection {
        self.rom.modes.map_or(ModeSelection::Energy(self.rom.kappa_pod), ModeSelection::Fixed)
    }

    pub fn deim_selection(&self) -> ModeSelection {
        self.rom
            .deim_modes
            .map_or(ModeSelection::Energy(self.rom.kappa_deim), ModeSelection::Fixed)
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.output.stages.contains(&stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = ExperimentConfig::default().resolve().unwrap();
        assert_eq!(c.time.dt, 0.1);
        assert_eq!(c.steps(), 1000);
        assert_eq!(c.grid.domain, Some([-5.0, 5.0, -5.0, 5.0]));
        let g = c.build_grid().unwrap();
        assert!((g.dx - 0.1).abs() < 1e-15 && (g.dy - 0.1).abs() < 1e-15);
        assert!((c.physics.delta.unwrap() - 0.146).abs() < 5e-4);
        assert_eq!(c.pod_selection(), ModeSelection::Energy(1e-3));
        assert_eq!(c.deim_selection(), ModeSelection::Energy(1e-5));
    }

    #[test]
    fn shear_layer_is_pinned_to_its_domain() {
        let c = ExperimentConfig::from_toml("scenario = \"shear_instability\"").unwrap().resolve().unwrap();
        assert_eq!(c.grid.domain, Some([0.0, 10.0, 0.0, 10.0]));
        assert_eq!(c.steps(), 500);
        let wrong = ExperimentConfig::from_toml(
            "scenario = \"shear_instability\"\n[grid]\ndomain = [0.0, 5.0, 0.0, 5.0]",
        )
        .unwrap();
        assert!(wrong.resolve().is_err());
    }

    #[test]
    fn partial_steps_are_rejected() {
        let c = ExperimentConfig::from_toml("[time]\ndt = 0.3\nfinal_time = 1.0").unwrap();
        assert!(matches!(c.resolve(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_toml("[time]\ndt = 0.1\nfinal_time = 0.3").unwrap();
        assert_eq!(c.resolve().unwrap().steps(), 3);
    }

    #[test]
    fn unknown_keys_and_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("[grid]\nnz = 4").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"tsunami\"").is_err());
        assert!(ExperimentConfig::from_toml("[rom]\nkappa_pod = 2.0").unwrap().resolve().is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = ExperimentConfig::from_toml("[rom]\nmodes = 12\n[output]\nstages = [\"fom\", \"pod\"]").unwrap();
        c.set_steps(7);
        let r = c.resolve().unwrap();
        let back = ExperimentConfig::from_toml(&r.to_toml().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolve().unwrap(), r);
        assert_eq!(r.pod_selection(), ModeSelection::Fixed(12));
        assert!(r.runs(Stage::Pod) && !r.runs(Stage::Deim));
    }

    #[test]
    fn stage_lists_parse() {
        assert_eq!(parse_stages("fom-only").unwrap(), vec![Stage::Fom]);
        assert_eq!(parse_stages("all").unwrap(), Stage::ALL.to_vec());
        assert_eq!(parse_stages("fom, deim").unwrap(), vec![Stage::Fom, Stage::Deim]);
        assert!(parse_stages("rom").is_err());
    }
}
