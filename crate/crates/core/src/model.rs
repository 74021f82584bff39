//! Nondimensional non-traditional shallow water physics on a periodic grid.
//!
//! The semi-discrete system is the skew-gradient ODE
//!
//! ```text
//! d/dt (ũ, ṽ, h) = J(q) (u∘h, v∘h, Φ),   J = [[0, q, -Dx], [-q, 0, -Dy], [-Dx, -Dy, 0]]
//! ```
//!
//! with canonical velocities `ũ = u + δΩ̂ʸ(h_b + h/2)`, `ṽ = v − δΩ̂ˣ(h_b + h/2)`,
//! potential vorticity `q = (Ω̂ᶻ + Dx ṽ − Dy ũ) / h` and Bernoulli potential
//! `Φ = ½(u² + v²) + g(h_b + h) + (δ/2) h (Ω̂ˣ v − Ω̂ʸ u)`.
//! The gradient of the discrete energy with respect to `(ũ, ṽ, h)` is
//! `dx·dy·(u∘h, v∘h, Φ)`.

use crate::error::{check_len, Error, Result};
use crate::grid::{DiffOperators, Grid};
use crate::integrator::{skew_gradient_field, AvfSystem, SkewGradientSystem, StateSpace};

/// Dimensional scales used to derive the non-traditional parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimScales {
    /// Layer thickness scale `H` in metres.
    pub h_scale: f64,
    /// Planetary rotation rate `Ω` in rad/s.
    pub omega_rot: f64,
    /// Gravitational acceleration in m/s².
    pub g_dim: f64,
}

impl Default for NondimScales {
    fn default() -> Self {
        NondimScales {
            h_scale: 1000.0,
            omega_rot: 7.3e-5,
            g_dim: 1e-3,
        }
    }
}

impl NondimScales {
    /// Gravity wave speed `c = sqrt(g H)`.
    pub fn wave_speed(&self) -> f64 {
        (self.g_dim * self.h_scale).sqrt()
    }

    /// Rossby deformation radius `R_d = c / 2Ω`.
    pub fn deformation_radius(&self) -> f64 {
        self.wave_speed() / (2.0 * self.omega_rot)
    }

    /// `δ = H / R_d`.
    pub fn delta(&self) -> f64 {
        self.h_scale / self.deformation_radius()
    }
}

/// Physical parameters of the nondimensional model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// Dimensionless rotation components `(Ω̂ˣ, Ω̂ʸ, Ω̂ᶻ)`.
    pub omega_hat: [f64; 3],
    /// Non-traditional parameter `δ`.
    pub delta: f64,
    /// Nondimensional gravity, 1 for the standard scaling.
    pub gravity: f64,
    /// Bottom topography, one value per node.
    pub bottom: Vec<f64>,
}

impl PhysParams {
    /// Rotation vector at latitude `phi` (`Ω̂ = (0, cos φ, sin φ)`), unit
    /// gravity and a flat bottom.
    pub fn from_latitude(phi: f64, delta: f64, nodes: usize) -> Self {
        PhysParams {
            omega_hat: [0.0, phi.cos(), phi.sin()],
            delta,
            gravity: 1.0,
            bottom: vec![0.0; nodes],
        }
    }

    pub fn with_gravity(mut self, gravity: f64) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn with_bottom(mut self, bottom: Vec<f64>) -> Self {
        self.bottom = bottom;
        self
    }

    pub fn len(&self) -> usize {
        self.bottom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bottom.is_empty()
    }

    /// `δΩ̂ʸ`: shift between `ũ` and `u` per unit of `h_b + h/2`.
    #[inline]
    fn shift_u(&self) -> f64 {
        self.delta * self.omega_hat[1]
    }

    /// `δΩ̂ˣ`: shift between `v` and `ṽ` per unit of `h_b + h/2`.
    #[inline]
    fn shift_v(&self) -> f64 {
        self.delta * self.omega_hat[0]
    }
}

/// Canonical state `(ũ, ṽ, h)`, stored stacked as one vector of length `3N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    data: Vec<f64>,
}

impl CanonicalState {
    pub fn new(u_tilde: &[f64], v_tilde: &[f64], h: &[f64]) -> Result<Self> {
        let n = h.len();
        check_len("canonical ũ", n, u_tilde.len())?;
        check_len("canonical ṽ", n, v_tilde.len())?;
        let mut data = Vec::with_capacity(3 * n);
        data.extend_from_slice(u_tilde);
        data.extend_from_slice(v_tilde);
        data.extend_from_slice(h);
        Ok(CanonicalState { data })
    }

    pub fn from_stacked(data: Vec<f64>) -> Result<Self> {
        if data.len() % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "stacked state length {} is not a multiple of 3",
                data.len()
            )));
        }
        Ok(CanonicalState { data })
    }

    /// Number of grid nodes.
    pub fn nodes(&self) -> usize {
        self.data.len() / 3
    }

    pub fn u_tilde(&self) -> &[f64] {
        &self.data[..self.nodes()]
    }

    pub fn v_tilde(&self) -> &[f64] {
        let n = self.nodes();
        &self.data[n..2 * n]
    }

    pub fn h(&self) -> &[f64] {
        let n = self.nodes();
        &self.data[2 * n..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Fails with the first node whose height is not strictly positive.
    pub fn check_height(&self) -> Result<()> {
        check_positive(self.h())
    }
}

pub(crate) fn check_positive(h: &[f64]) -> Result<()> {
    match h.iter().position(|&v| !(v > 0.0)) {
        None => Ok(()),
        Some(index) => Err(Error::NonPositiveHeight {
            index,
            value: h[index],
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleVelocities {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedQuantities {
    pub energy: f64,
    pub enstrophy: f64,
    pub mass: f64,
    pub vorticity: f64,
}

pub fn canonical_from_particle(
    particle: &ParticleVelocities,
    h: &[f64],
    params: &PhysParams,
) -> Result<CanonicalState> {
    let n = h.len();
    check_len("particle u", n, particle.u.len())?;
    check_len("particle v", n, particle.v.len())?;
    check_len("bottom topography", n, params.len())?;
    check_positive(h)?;
    let (su, sv) = (params.shift_u(), params.shift_v());
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let level = params.bottom[i] + 0.5 * h[i];
        data[i] = particle.u[i] + su * level;
        data[n + i] = particle.v[i] - sv * level;
        data[2 * n + i] = h[i];
    }
    Ok(CanonicalState { data })
}

pub fn particle_from_canonical(state: &CanonicalState, params: &PhysParams) -> ParticleVelocities {
    let n = state.nodes();
    let (su, sv) = (params.shift_u(), params.shift_v());
    let (ut, vt, h) = (state.u_tilde(), state.v_tilde(), state.h());
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let level = params.bottom[i] + 0.5 * h[i];
        u.push(ut[i] - su * level);
        v.push(vt[i] + sv * level);
    }
    ParticleVelocities { u, v }
}

/// Writes `Ω̂ᶻ + Dx ṽ − Dy ũ` (the numerator of `q`) into `out`.
pub(crate) fn absolute_vorticity_into(
    u_tilde: &[f64],
    v_tilde: &[f64],
    ops: &DiffOperators,
    omega_z: f64,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    ops.apply_dx(v_tilde, out);
    ops.apply_dy(u_tilde, scratch);
    for (o, s) in out.iter_mut().zip(scratch.iter()) {
        *o += omega_z - s;
    }
}

/// Potential vorticity `q = (Ω̂ᶻ + Dx ṽ − Dy ũ) / h`.
pub fn potential_vorticity(
    state: &CanonicalState,
    ops: &DiffOperators,
    params: &PhysParams,
) -> Result<Vec<f64>> {
    check_len("potential vorticity", ops.len(), state.nodes())?;
    state.check_height()?;
    let n = state.nodes();
    let mut q = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    absolute_vorticity_into(
        state.u_tilde(),
        state.v_tilde(),
        ops,
        params.omega_hat[2],
        &mut q,
        &mut scratch,
    );
    for (qi, hi) in q.iter_mut().zip(state.h()) {
        *qi /= hi;
    }
    Ok(q)
}

/// `q` of a stacked state `(ũ, ṽ, h)`, failing on the first nonpositive height.
pub(crate) fn stacked_potential_vorticity_into(
    z: &[f64],
    ops: &DiffOperators,
    omega_z: f64,
    q: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = q.len();
    let h = &z[2 * n..3 * n];
    check_positive(h)?;
    absolute_vorticity_into(&z[..n], &z[n..2 * n], ops, omega_z, q, scratch);
    for (qi, hi) in q.iter_mut().zip(h) {
        *qi /= hi;
    }
    Ok(())
}

/// Writes the unscaled energy gradient `(u∘h, v∘h, Φ)` of a stacked canonical
/// state into `out` (both of length `3N`).
pub(crate) fn gradient_into(z: &[f64], params: &PhysParams, out: &mut [f64]) {
    let n = z.len() / 3;
    let (ut, rest) = z.split_at(n);
    let (vt, h) = rest.split_at(n);
    let (f1, rest) = out.split_at_mut(n);
    let (f2, f3) = rest.split_at_mut(n);
    for i in 0..n {
        [f1[i], f2[i], f3[i]] = gradient_at(ut[i], vt[i], h[i], params.bottom[i], params);
    }
}

/// `(u h, v h, Φ)` at a single node.
#[inline]
pub(crate) fn gradient_at(ut: f64, vt: f64, h: f64, hb: f64, params: &PhysParams) -> [f64; 3] {
    let [ox, oy, _] = params.omega_hat;
    let level = hb + 0.5 * h;
    let u = ut - params.shift_u() * level;
    let v = vt + params.shift_v() * level;
    [
        u * h,
        v * h,
        0.5 * (u * u + v * v) + params.gravity * (hb + h) + 0.5 * params.delta * h * (ox * v - oy * u),
    ]
}

/// Bernoulli potential `Φ`.
pub fn bernoulli(state: &CanonicalState, params: &PhysParams) -> Vec<f64> {
    let n = state.nodes();
    let mut f = vec![0.0; 3 * n];
    gradient_into(state.as_slice(), params, &mut f);
    f.split_off(2 * n)
}

/// Unscaled energy gradient `F = (u∘h, v∘h, Φ)`, stacked.
pub fn grad_hamiltonian(state: &CanonicalState, params: &PhysParams) -> Vec<f64> {
    let mut f = vec![0.0; state.as_slice().len()];
    gradient_into(state.as_slice(), params, &mut f);
    f
}

/// Writes `J(q) F` into `out`; `scratch` must have length `N`.
pub(crate) fn poisson_into(
    q: &[f64],
    f: &[f64],
    ops: &DiffOperators,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let n = q.len();
    let (f1, rest) = f.split_at(n);
    let (f2, f3) = rest.split_at(n);
    let (o1, rest) = out.split_at_mut(n);
    let (o2, o3) = rest.split_at_mut(n);

    // o1 = q f2 - Dx f3, o2 = -q f1 - Dy f3
    ops.apply_dx(f3, o1);
    ops.apply_dy(f3, o2);
    for i in 0..n {
        o1[i] = q[i] * f2[i] - o1[i];
        o2[i] = -q[i] * f1[i] - o2[i];
    }
    // o3 = -Dx f1 - Dy f2
    ops.apply_dx(f1, o3);
    ops.apply_dy(f2, scratch);
    for (o, s) in o3.iter_mut().zip(scratch.iter()) {
        *o = -*o - s;
    }
}

/// Applies the Poisson matrix `J(q)` to a stacked vector `F`, matrix-free.
pub fn apply_poisson(q: &[f64], f: &[f64], ops: &DiffOperators) -> Result<Vec<f64>> {
    let n = q.len();
    check_len("Poisson operand", 3 * n, f.len())?;
    check_len("Poisson operator", ops.len(), n)?;
    let mut out = vec![0.0; 3 * n];
    let mut scratch = vec![0.0; n];
    poisson_into(q, f, ops, &mut out, &mut scratch);
    Ok(out)
}

/// Discrete energy of a stacked canonical state.
pub fn energy(z: &[f64], grid: &Grid, params: &PhysParams) -> f64 {
    let n = z.len() / 3;
    let (su, sv) = (params.shift_u(), params.shift_v());
    let (ut, rest) = z.split_at(n);
    let (vt, h) = rest.split_at(n);
    let mut sum = 0.0;
    for i in 0..n {
        let hb = params.bottom[i];
        let level = hb + 0.5 * h[i];
        let u = ut[i] - su * level;
        let v = vt[i] + sv * level;
        sum += 0.5 * h[i] * (u * u + v * v) + params.gravity * h[i] * (hb + 0.5 * h[i]);
    }
    sum * grid.cell_area()
}

pub fn conserved_quantities(
    state: &CanonicalState,
    grid: &Grid,
    ops: &DiffOperators,
    params: &PhysParams,
) -> Result<ConservedQuantities> {
    let n = state.nodes();
    check_len("conserved quantities", grid.len(), n)?;
    check_len("bottom topography", n, params.len())?;
    state.check_height()?;
    let mut zeta = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    absolute_vorticity_into(
        state.u_tilde(),
        state.v_tilde(),
        ops,
        params.omega_hat[2],
        &mut zeta,
        &mut scratch,
    );
    let area = grid.cell_area();
    let h = state.h();
    let enstrophy = 0.5 * zeta.iter().zip(h).map(|(w, hi)| w * w / hi).sum::<f64>() * area;
    Ok(ConservedQuantities {
        energy: energy(state.as_slice(), grid, params),
        enstrophy,
        mass: h.iter().sum::<f64>() * area,
        // h q = Ω̂ᶻ + Dx ṽ − Dy ũ
        vorticity: zeta.iter().sum::<f64>() * area,
    })
}

/// The full order model: grid, operators and parameters bundled as a
/// skew-gradient system on stacked canonical states.
#[derive(Debug, Clone)]
pub struct ShallowWater {
    pub grid: Grid,
    pub ops: DiffOperators,
    pub params: PhysParams,
}

impl ShallowWater {
    pub fn new(grid: Grid, params: PhysParams) -> Result<Self> {
        check_len("bottom topography", grid.len(), params.len())?;
        let ops = DiffOperators::new(&grid);
        Ok(ShallowWater { grid, ops, params })
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// Full right-hand side `J(z̃) F(z̃)` at a stacked state.
    pub fn rhs(&self, z: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient(z)?;
        self.apply_skew(z, &g)
    }

    pub fn conserved(&self, z: &[f64]) -> Result<ConservedQuantities> {
        let state = CanonicalState::from_stacked(z.to_vec())?;
        conserved_quantities(&state, &self.grid, &self.ops, &self.params)
    }
}

impl StateSpace for ShallowWater {
    fn dimension(&self) -> usize {
        3 * self.nodes()
    }
}

impl AvfSystem for ShallowWater {
    type Anchor = Vec<f64>;

    fn anchor(&self, z_k: &[f64]) -> Result<Vec<f64>> {
        self.gradient(z_k)
    }

    fn avf_field(&self, f_k: &Vec<f64>, z_k: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        skew_gradient_field(self, f_k, z_k, z)
    }
}

impl SkewGradientSystem for ShallowWater {
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.dimension(), z.len())?;
        let mut f = vec![0.0; z.len()];
        gradient_into(z, &self.params, &mut f);
        Ok(f)
    }

    fn apply_skew(&self, z_mid: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let n = self.nodes();
        check_len("state", 3 * n, z_mid.len())?;
        check_len("gradient", 3 * n, g.len())?;
        let mut q = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        stacked_potential_vorticity_into(z_mid, &self.ops, self.params.omega_hat[2], &mut q, &mut scratch)?;
        let mut out = vec![0.0; 3 * n];
        poisson_into(&q, g, &self.ops, &mut out, &mut scratch);
        Ok(out)
    }
}
