//! Average vector field (AVF) time stepping.
//!
//! For a skew-gradient system `dz/dt = J(z) F(z)` one AVF step solves
//!
//! ```text
//! z⁺ = z + Δt · J((z⁺ + z)/2) · ∫₀¹ F(z + ξ(z⁺ − z)) dξ
//! ```
//!
//! by Picard iteration. All gradients in this crate are quadratic in the
//! state, so Simpson's rule evaluates the line integral exactly.

use std::time::{Duration, Instant};

use crate::error::{check_len, Error, Result};

/// Anything with a fixed state dimension.
pub trait StateSpace {
    fn dimension(&self) -> usize;
}

/// `dz/dt = J(z) F(z)` with `J` skew-symmetric.
pub trait SkewGradientSystem: StateSpace {
    /// The gradient field `F(z)`.
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>>;

    /// `∫₀¹ F(z_a + ξ(z_b − z_a)) dξ`, by Simpson's rule (exact for quadratic `F`).
    fn averaged_gradient(&self, z_a: &[f64], z_b: &[f64]) -> Result<Vec<f64>> {
        let mid = midpoint(z_a, z_b);
        let fa = self.gradient(z_a)?;
        let fm = self.gradient(&mid)?;
        let fb = self.gradient(z_b)?;
        Ok(simpson(&fa, &fm, &fb))
    }

    /// Same as [`SkewGradientSystem::averaged_gradient`] with `F(z_a)` known.
    fn averaged_gradient_with(&self, f_a: &[f64], z_a: &[f64], z_b: &[f64]) -> Result<Vec<f64>> {
        let fm = self.gradient(&midpoint(z_a, z_b))?;
        let fb = self.gradient(z_b)?;
        Ok(simpson(f_a, &fm, &fb))
    }

    /// `J(z_mid) g`.
    fn apply_skew(&self, z_mid: &[f64], g: &[f64]) -> Result<Vec<f64>>;
}

/// A discrete vector field that can be advanced by the AVF step.
///
/// A step from `z_k` solves `z = z_k + Δt · avf_field(anchor, z_k, z)`, where
/// `anchor` holds whatever depends on `z_k` alone and is computed once per step.
pub trait AvfSystem: StateSpace {
    type Anchor;

    fn anchor(&self, z_k: &[f64]) -> Result<Self::Anchor>;

    fn avf_field(&self, anchor: &Self::Anchor, z_k: &[f64], z: &[f64]) -> Result<Vec<f64>>;
}

/// `J((z_k + z)/2) · (F(z_k) + 4F((z_k + z)/2) + F(z)) / 6` given `f_k = F(z_k)`.
pub fn skew_gradient_field<S: SkewGradientSystem + ?Sized>(
    system: &S,
    f_k: &[f64],
    z_k: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let mid = midpoint(z_k, z);
    let fm = system.gradient(&mid)?;
    let fb = system.gradient(z)?;
    system.apply_skew(&mid, &simpson(f_k, &fm, &fb))
}

/// Runs any [`SkewGradientSystem`] through the AVF step with the default
/// Simpson averaging.
pub struct Avf<'a, S: ?Sized>(pub &'a S);

impl<S: SkewGradientSystem + ?Sized> StateSpace for Avf<'_, S> {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }
}

impl<S: SkewGradientSystem + ?Sized> AvfSystem for Avf<'_, S> {
    type Anchor = Vec<f64>;

    fn anchor(&self, z_k: &[f64]) -> Result<Vec<f64>> {
        self.0.gradient(z_k)
    }

    fn avf_field(&self, f_k: &Vec<f64>, z_k: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let mid = midpoint(z_k, z);
        let g = self.0.averaged_gradient_with(f_k, z_k, z)?;
        self.0.apply_skew(&mid, &g)
    }
}

pub fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// `(fa + 4 fm + fb) / 6`.
pub fn simpson(fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((a, m), b)| (a + 4.0 * m + b) / 6.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvfConfig {
    pub dt: f64,
    /// Tolerance on the max-norm of the Picard increment.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AvfConfig {
    fn default() -> Self {
        AvfConfig {
            dt: 0.1,
            tol: 1e-11,
            max_iter: 200,
        }
    }
}

impl AvfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt != 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be nonzero, got {}", self.dt)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    /// Max-norm of the last Picard increment.
    pub increment: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One AVF step from `z_k`, solved by Picard iteration started at `z_k`.
///
/// The iterate `z` is accepted once `‖z_k + Δt·f(z_k, z) − z‖∞ ≤ tol`; that
/// quantity is both the increment to the next iterate and the residual of
/// the discrete equation at `z`. The returned state is the final update.
pub fn avf_step<S: AvfSystem + ?Sized>(
    system: &S,
    z_k: &[f64],
    config: &AvfConfig,
) -> Result<(Vec<f64>, StepReport)> {
    check_len("AVF state", system.dimension(), z_k.len())?;
    let anchor = system.anchor(z_k)?;
    let mut z = z_k.to_vec();
    let mut increment = f64::INFINITY;
    for iteration in 1..=config.max_iter {
        let field = system.avf_field(&anchor, z_k, &z)?;
        let next: Vec<f64> = z_k
            .iter()
            .zip(&field)
            .map(|(zk, f)| zk + config.dt * f)
            .collect();
        increment = max_abs_diff(&next, &z);
        if !increment.is_finite() {
            break;
        }
        z = next;
        if increment <= config.tol {
            return Ok((
                z,
                StepReport {
                    iterations: iteration,
                    increment,
                },
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        residual: increment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub iterations: Vec<usize>,
    pub wall_time: Duration,
    pub final_state: Vec<f64>,
}

impl RunStats {
    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.iterations.is_empty() {
            0.0
        } else {
            self.total_iterations() as f64 / self.iterations.len() as f64
        }
    }
}

/// Runs `steps` AVF steps, handing every state (including the initial one)
/// to `observer` as `(k, z_k)`. States are not retained.
///
/// The wall time covers the stepping only, not the observer.
pub fn integrate_with<S, O>(
    system: &S,
    z0: &[f64],
    steps: usize,
    config: &AvfConfig,
    mut observer: O,
) -> Result<RunStats>
where
    S: AvfSystem + ?Sized,
    O: FnMut(usize, &[f64]) -> Result<()>,
{
    config.validate()?;
    check_len("initial state", system.dimension(), z0.len())?;
    observer(0, z0)?;
    let mut z = z0.to_vec();
    let mut iterations = Vec::with_capacity(steps);
    let mut wall_time = Duration::ZERO;
    for k in 1..=steps {
        let start = Instant::now();
        let (next, report) = avf_step(system, &z, config).map_err(|e| Error::StepFailed {
            step: k,
            source: Box::new(e),
        })?;
        wall_time += start.elapsed();
        iterations.push(report.iterations);
        z = next;
        observer(k, &z)?;
    }
    Ok(RunStats {
        steps,
        iterations,
        wall_time,
        final_state: z,
    })
}

/// States `z⁰ … z^{N_t}` of one run on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub wall_time: Duration,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of time steps `N_t`.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// The snapshot columns `z¹ … z^{N_t}`.
    pub fn snapshots(&self) -> &[Vec<f64>] {
        self.states.get(1..).unwrap_or(&[])
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Like [`integrate_with`], retaining every state.
pub fn integrate<S: AvfSystem + ?Sized>(
    system: &S,
    z0: &[f64],
    steps: usize,
    config: &AvfConfig,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(steps + 1);
    let stats = integrate_with(system, z0, steps, config, |_, z| {
        states.push(z.to_vec());
        Ok(())
    })?;
    Ok(Trajectory {
        dt: config.dt,
        states,
        iterations: stats.iterations,
        wall_time: stats.wall_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Free rigid body: `J(z) = skew(z)`, `H = Σ zᵢ² / 2Iᵢ`.
    struct RigidBody {
        inertia: [f64; 3],
    }

    impl StateSpace for RigidBody {
        fn dimension(&self) -> usize {
            3
        }
    }

    impl SkewGradientSystem for RigidBody {
        fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
            Ok((0..3).map(|i| z[i] / self.inertia[i]).collect())
        }

        fn apply_skew(&self, z: &[f64], g: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![
                z[2] * g[1] - z[1] * g[2],
                z[0] * g[2] - z[2] * g[0],
                z[1] * g[0] - z[0] * g[1],
            ])
        }
    }

    impl RigidBody {
        fn energy(&self, z: &[f64]) -> f64 {
            (0..3).map(|i| 0.5 * z[i] * z[i] / self.inertia[i]).sum()
        }
    }

    /// Quadratic gradient in one variable, to probe the Simpson rule.
    struct Cubic;

    impl StateSpace for Cubic {
        fn dimension(&self) -> usize {
            1
        }
    }

    impl SkewGradientSystem for Cubic {
        fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![3.0 * z[0] * z[0] - z[0] + 2.0])
        }

        fn apply_skew(&self, _: &[f64], _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
    }

    #[test]
    fn averaged_gradient_of_equal_endpoints() {
        let body = RigidBody {
            inertia: [1.0, 2.0, 3.0],
        };
        let z = [0.3, -1.0, 2.0];
        assert_eq!(body.averaged_gradient(&z, &z).unwrap(), body.gradient(&z).unwrap());
    }

    #[test]
    fn averaged_gradient_of_linear_field_is_midpoint_value() {
        let body = RigidBody {
            inertia: [1.0, 2.0, 3.0],
        };
        let (a, b) = ([0.3, -1.0, 2.0], [1.0, 0.5, -0.25]);
        let avg = body.averaged_gradient(&a, &b).unwrap();
        let mid = body.gradient(&midpoint(&a, &b)).unwrap();
        for (x, y) in avg.iter().zip(&mid) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn simpson_is_exact_for_quadratic_gradient() {
        // ∫₀¹ 3(a + ξd)² − (a + ξd) + 2 dξ
        let (a, b) = (0.4, -1.3);
        let d = b - a;
        let exact = 3.0 * (a * a + a * d + d * d / 3.0) - (a + d / 2.0) + 2.0;
        let avg = Cubic.averaged_gradient(&[a], &[b]).unwrap();
        assert!((avg[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn rigid_body_energy_is_preserved() {
        let body = RigidBody {
            inertia: [1.0, 2.0, 3.0],
        };
        let config = AvfConfig {
            dt: 0.05,
            tol: 1e-14,
            max_iter: 100,
        };
        let traj = integrate(&Avf(&body), &[1.0, 0.5, -0.2], 400, &config).unwrap();
        let e0 = body.energy(&traj.states[0]);
        let casimir = |z: &[f64]| z.iter().map(|v| v * v).sum::<f64>();
        let c0 = casimir(&traj.states[0]);
        for z in &traj.states {
            assert!((body.energy(z) - e0).abs() <= 1e-13);
            assert!((casimir(z) - c0).abs() <= 1e-12);
        }
    }

    #[test]
    fn reversing_the_step_restores_the_state() {
        let body = RigidBody {
            inertia: [1.0, 2.0, 3.0],
        };
        let config = AvfConfig {
            dt: 0.1,
            tol: 1e-13,
            max_iter: 100,
        };
        let z0 = [1.0, 0.5, -0.2];
        let (z1, _) = avf_step(&Avf(&body), &z0, &config).unwrap();
        let back = AvfConfig {
            dt: -0.1,
            ..config
        };
        let (z2, _) = avf_step(&Avf(&body), &z1, &back).unwrap();
        assert!(max_abs_diff(&z2, &z0) <= 100.0 * config.tol);
    }

    #[test]
    fn fixed_point_converges_in_one_iteration() {
        let body = RigidBody {
            inertia: [1.0, 1.0, 1.0],
        };
        // isotropic body: every state is an equilibrium
        let (z, report) = avf_step(&Avf(&body), &[0.2, 0.1, 0.3], &AvfConfig::default()).unwrap();
        assert_eq!(z, vec![0.2, 0.1, 0.3]);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn non_convergence_is_reported() {
        let body = RigidBody {
            inertia: [1.0, 2.0, 3.0],
        };
        let config = AvfConfig {
            dt: 0.1,
            tol: 1e-30,
            max_iter: 3,
        };
        match avf_step(&Avf(&body), &[1.0, 0.5, -0.2], &config) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("unexpected {other:?}"),
        }
        match integrate(&Avf(&body), &[1.0, 0.5, -0.2], 5, &config) {
            Err(Error::StepFailed { step, .. }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_steps_keeps_the_initial_state() {
        let body = RigidBody {
            inertia: [1.0, 2.0, 3.0],
        };
        let traj = integrate(&Avf(&body), &[1.0, 0.5, -0.2], 0, &AvfConfig::default()).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], vec![1.0, 0.5, -0.2]);
        assert!(traj.snapshots().is_empty());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = [
            AvfConfig {
                dt: 0.0,
                ..AvfConfig::default()
            },
            AvfConfig {
                tol: 0.0,
                ..AvfConfig::default()
            },
            AvfConfig {
                max_iter: 0,
                ..AvfConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
