//! Experiment orchestration: FOM → snapshots → POD / DEIM → ROM runs → reports.
//!
//! Artifacts written to the output directory:
//!
//! | file | contents |
//! |---|---|
//! | `config.toml` | the fully resolved configuration |
//! | `fom_initial.swrm` | `3N × 1` initial state |
//! | `snapshots_{u,v,h}.swrm` | `N × N_t` FOM states `k = 1..N_t` |
//! | `series_{fom,pod,deim}.csv` | `time,H,Z,M,V` per time level |
//! | `pod_{modes,mean,sigma}_{u,v,h}.swrm` | POD basis |
//! | `pod_coefficients.swrm` | `3n × (N_t+1)` reduced trajectory |
//! | `deim_{basis,sigma}_{u,v,h}.swrm` | DEIM bases of the right-hand-side blocks |
//! | `deim_points_{u,v,h}.csv` | selected interpolation indices |
//! | `deim_coefficients.swrm` | `3n × (N_t+1)` reduced trajectory |
//! | `errors_{pod,deim}.csv` | `quantity,value` accuracy and conservation |
//! | `timing_runs.csv` | `phase,seconds`, one row per timed run |
//! | `timing.csv` | `quantity,value` medians and speedups |

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Stage};
use crate::deim::{DeimOperator, DeimRom, NonlinearitySnapshots};
use crate::diagnostics::{
    benchmark_report, conservation_drift, conservation_drift_from, ErrorReport, Phase, RelativeErrorAccumulator,
    TimingReport,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate_with, AvfSystem};
use crate::io;
use crate::model::{ConservedQuantities, ShallowWater};
use crate::pod::{Component, PodBasis, PodRom, ReducedOperators, SnapshotSet};

/// The full-order run.
#[derive(Debug, Clone)]
pub struct FomOutput {
    /// States `z⁰ … z^{N_t}`.
    pub states: Vec<Vec<f64>>,
    pub conserved: Vec<ConservedQuantities>,
    /// `None` when the states were read back from an earlier run.
    pub wall_time: Option<Duration>,
    pub mean_iterations: f64,
}

/// One reduced model run.
#[derive(Debug, Clone)]
pub struct RomOutput {
    pub method: Stage,
    /// Reduced states `z_r⁰ … z_r^{N_t}`.
    pub coefficients: Vec<Vec<f64>>,
    /// Conserved quantities of the lifted states.
    pub conserved: Vec<ConservedQuantities>,
    /// POD modes per component.
    pub modes: usize,
    /// DEIM points per block, zero for POD.
    pub deim_modes: usize,
    pub offline: Duration,
    pub online: Vec<Duration>,
    pub mean_iterations: f64,
    pub report: ErrorReport,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub config: ExperimentConfig,
    pub fom: FomOutput,
    pub basis: Option<PodBasis>,
    pub deim: Option<DeimOperator>,
    pub roms: Vec<RomOutput>,
    /// Present once both the FOM and a reduced model have been timed.
    pub timing: Option<TimingReport>,
}

impl PipelineOutput {
    pub fn rom(&self, method: Stage) -> Option<&RomOutput> {
        self.roms.iter().find(|r| r.method == method)
    }

    pub fn error_reports(&self) -> Vec<ErrorReport> {
        self.roms.iter().map(|r| r.report.clone()).collect()
    }
}

/// Runs the configured stages, writing artifacts to `config.output.dir`.
///
/// Reduced-model stages run without the `fom` stage read the full-order
/// states from the directory instead.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let config = config.resolve().map_err(Error::in_stage("config"))?;
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(Error::from)
        .and_then(|()| io::write_atomic(&dir.join("config.toml"), config.to_toml()?.as_bytes()))
        .map_err(Error::in_stage("setup"))?;
    Runner {
        config,
        dir: Some(dir),
    }
    .run()
}

/// Runs the configured stages without touching the file system.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let config = config.resolve().map_err(Error::in_stage("config"))?;
    if !config.runs(Stage::Fom) {
        return Err(Error::Config("an in-memory run must include the fom stage".into()));
    }
    Runner { config, dir: None }.run()
}

struct Runner {
    config: ExperimentConfig,
    dir: Option<PathBuf>,
}

struct Setup {
    model: ShallowWater,
    initial: Vec<f64>,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    let grid = config.build_grid()?;
    let params = config.phys_params(grid.len());
    let initial = config
        .scenario
        .initial_state_with(&grid, &params, config.physics.bulge)?
        .into_vec();
    Ok(Setup {
        model: ShallowWater::new(grid, params)?,
        initial,
    })
}

impl Runner {
    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn run(self) -> Result<PipelineOutput> {
        // sequential kernels keep every artifact reproducible bit for bit
        faer::set_global_parallelism(faer::Par::Seq);
        let Setup { model, initial } = setup(&self.config).map_err(Error::in_stage("setup"))?;
        let fom = if self.config.runs(Stage::Fom) {
            self.run_fom(&model, &initial).map_err(Error::in_stage("fom"))?
        } else {
            self.load_fom(&model, &initial).map_err(Error::in_stage("fom"))?
        };
        let mut records = Vec::new();
        if let Some(t) = fom.wall_time {
            records.push((Phase::Fom, t));
        }

        let want_pod = self.config.runs(Stage::Pod);
        let want_deim = self.config.runs(Stage::Deim);
        let mut basis = None;
        let mut deim = None;
        let mut roms = Vec::new();
        if want_pod || want_deim {
            let (b, offline) = self.pod_basis(&fom, want_pod).map_err(Error::in_stage("pod"))?;
            if want_pod {
                let rom = self
                    .run_pod(&model, &b, offline, &fom, &mut records)
                    .map_err(Error::in_stage("pod"))?;
                roms.push(rom);
            }
            if want_deim {
                let (rom, op) = self
                    .run_deim(&model, &b, &fom, &mut records)
                    .map_err(Error::in_stage("deim"))?;
                roms.push(rom);
                deim = Some(op);
            }
            basis = Some(b);
        }
        let timing = self.timing(&records).map_err(Error::in_stage("report"))?;
        Ok(PipelineOutput {
            config: self.config,
            fom,
            basis,
            deim,
            roms,
            timing,
        })
    }

    fn run_fom(&self, model: &ShallowWater, initial: &[f64]) -> Result<FomOutput> {
        let steps = self.config.steps();
        let nodes = model.nodes();
        let mut writers = match &self.dir {
            Some(dir) => {
                io::write_vector(dir.join("fom_initial.swrm"), initial)?;
                let mut w = Vec::with_capacity(3);
                for c in Component::ALL {
                    w.push(io::ColumnWriter::create(
                        dir.join(format!("snapshots_{}.swrm", c.name())),
                        nodes,
                        steps,
                    )?);
                }
                Some(w)
            }
            None => None,
        };
        let mut states = Vec::with_capacity(steps + 1);
        let mut conserved = Vec::with_capacity(steps + 1);
        let stats = integrate_with(model, initial, steps, &self.config.avf(), |k, z| {
            if k > 0 {
                if let Some(w) = writers.as_mut() {
                    for (c, w) in Component::ALL.into_iter().zip(w.iter_mut()) {
                        w.push(c.block(z, nodes))?;
                    }
                }
            }
            conserved.push(model.conserved(z)?);
            states.push(z.to_vec());
            Ok(())
        })?;
        if let Some(w) = writers {
            for w in w {
                w.finish()?;
            }
        }
        self.write_series("series_fom.csv", &conserved)?;
        Ok(FomOutput {
            states,
            conserved,
            wall_time: Some(stats.wall_time),
            mean_iterations: stats.mean_iterations(),
        })
    }

    fn load_fom(&self, model: &ShallowWater, initial: &[f64]) -> Result<FomOutput> {
        let dir = self.dir.as_ref().expect("loading needs an output directory");
        let steps = self.config.steps();
        let nodes = model.nodes();
        let initial_path = dir.join("fom_initial.swrm");
        if !initial_path.exists() {
            return Err(Error::Config(format!(
                "{} holds no full-order run; run the fom stage first",
                dir.display()
            )));
        }
        let stored = io::read_vector(initial_path)?;
        if stored != initial {
            return Err(Error::Config(format!(
                "{} holds a full-order run of a different configuration",
                dir.display()
            )));
        }
        let mut readers = Vec::with_capacity(3);
        for c in Component::ALL {
            let path = dir.join(format!("snapshots_{}.swrm", c.name()));
            let r = io::ColumnReader::open(&path)?;
            if r.rows() != nodes || r.cols() != steps {
                return Err(Error::Format {
                    path,
                    reason: format!("expected {nodes}x{steps}, found {}x{}", r.rows(), r.cols()),
                });
            }
            readers.push(r);
        }
        let mut states = Vec::with_capacity(steps + 1);
        states.push(initial.to_vec());
        for _ in 0..steps {
            let mut z = vec![0.0; 3 * nodes];
            for (c, r) in Component::ALL.into_iter().zip(readers.iter_mut()) {
                r.next_into(&mut z[c.index() * nodes..(c.index() + 1) * nodes])?;
            }
            states.push(z);
        }
        let conserved = states.iter().map(|z| model.conserved(z)).collect::<Result<Vec<_>>>()?;
        Ok(FomOutput {
            states,
            conserved,
            wall_time: None,
            mean_iterations: f64::NAN,
        })
    }

    /// Computes the POD basis, or reads it back when only DEIM is requested
    /// and an earlier run left one behind. The duration is `None` when read.
    fn pod_basis(&self, fom: &FomOutput, force: bool) -> Result<(PodBasis, Option<Duration>)> {
        if !force {
            if let Some(b) = self.load_basis()? {
                return Ok((b, None));
            }
        }
        let start = Instant::now();
        let snapshots = SnapshotSet::from_states(&fom.states[1..])?;
        let basis = PodBasis::compute(&snapshots, self.config.pod_selection())?;
        let elapsed = start.elapsed();
        if let Some(dir) = &self.dir {
            for c in Component::ALL {
                let name = c.name();
                io::write_matrix(dir.join(format!("pod_modes_{name}.swrm")), basis.modes(c))?;
                io::write_vector(dir.join(format!("pod_mean_{name}.swrm")), basis.mean(c))?;
                io::write_vector(dir.join(format!("pod_sigma_{name}.swrm")), basis.sigma(c))?;
            }
        }
        Ok((basis, Some(elapsed)))
    }

    fn load_basis(&self) -> Result<Option<PodBasis>> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let file = |kind: &str, c: Component| dir.join(format!("pod_{kind}_{}.swrm", c.name()));
        if !Component::ALL.iter().all(|&c| file("modes", c).exists()) {
            return Ok(None);
        }
        let mut modes = Vec::with_capacity(3);
        let mut means = Vec::with_capacity(3);
        let mut sigma = Vec::with_capacity(3);
        for c in Component::ALL {
            modes.push(io::read_matrix(file("modes", c))?);
            means.push(io::read_vector(file("mean", c))?);
            sigma.push(io::read_vector(file("sigma", c))?);
        }
        let basis = PodBasis::from_parts(
            modes.try_into().expect("three components"),
            sigma.try_into().expect("three components"),
            means.try_into().expect("three components"),
        )?;
        match self.config.rom.modes {
            Some(n) if n != basis.modes_per_component() => Ok(None),
            _ => Ok(Some(basis)),
        }
    }

    fn run_pod(
        &self,
        model: &ShallowWater,
        basis: &PodBasis,
        basis_time: Option<Duration>,
        fom: &FomOutput,
        records: &mut Vec<(Phase, Duration)>,
    ) -> Result<RomOutput> {
        let start = Instant::now();
        let operators = ReducedOperators::new(basis, &model.ops)?;
        let offline = start.elapsed() + basis_time.unwrap_or_default();
        let rom = PodRom::new(model, basis, &operators)?;
        let z0 = basis.project(&fom.states[0])?;
        let (coefficients, online, mean_iterations) = self.run_online(&rom, &z0)?;
        records.push((Phase::PodOffline, offline));
        records.extend(online.iter().map(|&t| (Phase::PodOnline, t)));
        self.finish_rom(
            model,
            basis,
            fom,
            RomRun {
                method: Stage::Pod,
                coefficients,
                deim_modes: 0,
                offline,
                online,
                mean_iterations,
            },
        )
    }

    fn run_deim(
        &self,
        model: &ShallowWater,
        basis: &PodBasis,
        fom: &FomOutput,
        records: &mut Vec<(Phase, Duration)>,
    ) -> Result<(RomOutput, DeimOperator)> {
        let start = Instant::now();
        let snapshots = NonlinearitySnapshots::collect(model, &fom.states[1..])?;
        let operator = DeimOperator::build(model, basis, &snapshots, self.config.deim_selection())?;
        drop(snapshots);
        let offline = start.elapsed();
        if let Some(dir) = &self.dir {
            for c in Component::ALL {
                let name = c.name();
                let part = operator.component(c);
                io::write_matrix(dir.join(format!("deim_basis_{name}.swrm")), &part.basis)?;
                io::write_vector(dir.join(format!("deim_sigma_{name}.swrm")), &part.sigma)?;
                let points: Vec<[f64; 1]> = part.points.iter().map(|&p| [p as f64]).collect();
                io::write_csv(dir.join(format!("deim_points_{name}.csv")), &["index"], &points)?;
            }
        }
        let rom = DeimRom::new(model, &operator);
        let z0 = basis.project(&fom.states[0])?;
        let (coefficients, online, mean_iterations) = self.run_online(&rom, &z0)?;
        records.push((Phase::DeimOffline, offline));
        records.extend(online.iter().map(|&t| (Phase::DeimOnline, t)));
        let out = self.finish_rom(
            model,
            basis,
            fom,
            RomRun {
                method: Stage::Deim,
                coefficients,
                deim_modes: operator.modes(),
                offline,
                online,
                mean_iterations,
            },
        )?;
        Ok((out, operator))
    }

    /// Integrates `online_repeats` times; the trajectory of the last run is kept.
    fn run_online<S: AvfSystem + ?Sized>(&self, rom: &S, z0: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Duration>, f64)> {
        let steps = self.config.steps();
        let mut times = Vec::with_capacity(self.config.rom.online_repeats);
        let mut states = Vec::new();
        let mut iterations = 0.0;
        for _ in 0..self.config.rom.online_repeats {
            states = Vec::with_capacity(steps + 1);
            let stats = integrate_with(rom, z0, steps, &self.config.avf(), |_, z| {
                states.push(z.to_vec());
                Ok(())
            })?;
            times.push(stats.wall_time);
            iterations = stats.mean_iterations();
        }
        Ok((states, times, iterations))
    }

    fn finish_rom(&self, model: &ShallowWater, basis: &PodBasis, fom: &FomOutput, run: RomRun) -> Result<RomOutput> {
        let name = run.method.name();
        let mut acc = RelativeErrorAccumulator::new(model.nodes());
        let mut conserved = Vec::with_capacity(run.coefficients.len());
        let mut lifted = vec![0.0; 3 * model.nodes()];
        for (k, (z_r, z)) in run.coefficients.iter().zip(&fom.states).enumerate() {
            basis.lift_into(z_r, &mut lifted)?;
            if k > 0 {
                acc.add(z, &lifted)?;
            }
            conserved.push(model.conserved(&lifted)?);
        }
        let report = ErrorReport {
            model: name.to_string(),
            relative_errors: acc.finish()?,
            drift: conservation_drift_from(&conserved, &fom.conserved[0])?.mean,
            self_drift: conservation_drift(&conserved)?.mean,
        };
        if let Some(dir) = &self.dir {
            io::write_columns(
                dir.join(format!("{name}_coefficients.swrm")),
                3 * basis.modes_per_component(),
                &run.coefficients,
            )?;
            self.write_series(&format!("series_{name}.csv"), &conserved)?;
            let mut rows = report.rows();
            rows.push((format!("{name}_modes"), basis.modes_per_component() as f64));
            if run.deim_modes > 0 {
                rows.push((format!("{name}_points"), run.deim_modes as f64));
            }
            rows.push((format!("{name}_mean_iterations"), run.mean_iterations));
            io::write_quantities(dir.join(format!("errors_{name}.csv")), &rows)?;
        }
        Ok(RomOutput {
            method: run.method,
            coefficients: run.coefficients,
            conserved,
            modes: basis.modes_per_component(),
            deim_modes: run.deim_modes,
            offline: run.offline,
            online: run.online,
            mean_iterations: run.mean_iterations,
            report,
        })
    }

    fn write_series(&self, name: &str, conserved: &[ConservedQuantities]) -> Result<()> {
        let Some(path) = self.path(name) else { return Ok(()) };
        let dt = self.config.time.dt;
        let rows: Vec<[f64; 5]> = conserved
            .iter()
            .enumerate()
            .map(|(k, q)| [k as f64 * dt, q.energy, q.enstrophy, q.mass, q.vorticity])
            .collect();
        io::write_csv(path, &["time", "H", "Z", "M", "V"], &rows)
    }

    /// Merges this run's timings with earlier ones for phases not re-run.
    fn timing(&self, records: &[(Phase, Duration)]) -> Result<Option<TimingReport>> {
        let mut all: Vec<(Phase, Duration)> = match &self.dir {
            Some(dir) => read_timing_runs(dir)?
                .into_iter()
                .filter(|(p, _)| !records.iter().any(|(q, _)| q == p))
                .collect(),
            None => Vec::new(),
        };
        all.extend_from_slice(records);
        if let Some(dir) = &self.dir {
            write_timing_runs(dir, &all)?;
        }
        let has_rom = all.iter().any(|(p, _)| *p != Phase::Fom);
        if !has_rom || !all.iter().any(|(p, _)| *p == Phase::Fom) {
            return Ok(None);
        }
        let report = benchmark_report(&all)?;
        if let Some(path) = self.path("timing.csv") {
            io::write_quantities(path, &report.rows())?;
        }
        Ok(Some(report))
    }
}

struct RomRun {
    method: Stage,
    coefficients: Vec<Vec<f64>>,
    deim_modes: usize,
    offline: Duration,
    online: Vec<Duration>,
    mean_iterations: f64,
}

#[derive(Serialize, Deserialize)]
struct TimingRow {
    phase: String,
    seconds: f64,
}

const PHASES: [Phase; 5] = [
    Phase::Fom,
    Phase::PodOffline,
    Phase::PodOnline,
    Phase::DeimOffline,
    Phase::DeimOnline,
];

/// Reads `timing_runs.csv`; a missing file is an empty record list.
pub fn read_timing_runs(dir: &Path) -> Result<Vec<(Phase, Duration)>> {
    let path = dir.join("timing_runs.csv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let fail = |reason: String| Error::Format {
        path: path.clone(),
        reason,
    };
    let mut r = csv::Reader::from_path(&path).map_err(|e| fail(e.to_string()))?;
    let mut out = Vec::new();
    for row in r.deserialize::<TimingRow>() {
        let row = row.map_err(|e| fail(e.to_string()))?;
        let phase = PHASES
            .into_iter()
            .find(|p| p.name() == row.phase)
            .ok_or_else(|| fail(format!("unknown phase `{}`", row.phase)))?;
        let t = Duration::try_from_secs_f64(row.seconds).map_err(|e| fail(e.to_string()))?;
        out.push((phase, t));
    }
    Ok(out)
}

fn write_timing_runs(dir: &Path, records: &[(Phase, Duration)]) -> Result<()> {
    let path = dir.join("timing_runs.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format {
        path: path.clone(),
        reason: e.to_string(),
    };
    for (p, t) in records {
        w.serialize(TimingRow {
            phase: p.name().to_string(),
            seconds: t.as_secs_f64(),
        })
        .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    io::write_atomic(&path, &bytes)
}

/// Error reports and timings recorded in an output directory.
pub fn load_reports(dir: &Path) -> Result<(Vec<ErrorReport>, Option<TimingReport>)> {
    let mut errors = Vec::new();
    for method in [Stage::Pod, Stage::Deim] {
        let path = dir.join(format!("errors_{}.csv", method.name()));
        if path.exists() {
            let rows = io::read_quantities(&path)?;
            errors.push(ErrorReport::from_rows(method.name(), &rows).map_err(|reason| Error::Format { path, reason })?);
        }
    }
    let runs = read_timing_runs(dir)?;
    let timing = if runs.iter().any(|(p, _)| *p == Phase::Fom) && runs.iter().any(|(p, _)| *p != Phase::Fom) {
        Some(benchmark_report(&runs)?)
    } else {
        None
    };
    Ok((errors, timing))
}

/// Stacks the per-component snapshot files of a directory into `3N × N_t`.
pub fn read_snapshot_matrix(dir: &Path) -> Result<Mat<f64>> {
    let blocks: Vec<Mat<f64>> = Component::ALL
        .iter()
        .map(|c| io::read_matrix(dir.join(format!("snapshots_{}.swrm", c.name()))))
        .collect::<Result<_>>()?;
    let (n, cols) = (blocks[0].nrows(), blocks[0].ncols());
    for b in &blocks {
        if (b.nrows(), b.ncols()) != (n, cols) {
            return Err(Error::InvalidArgument("snapshot blocks differ in shape".into()));
        }
    }
    Ok(Mat::from_fn(3 * n, cols, |i, j| blocks[i / n][(i % n, j)]))
}
