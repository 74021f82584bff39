//! Proper orthogonal decomposition and the structure-preserving Galerkin ROM.
//!
//! Each canonical component gets its own basis, so the lifted state is
//! `z̃ ≈ z̄ + blkdiag(V_u, V_v, V_h) z_r` and the reduced system keeps the
//! skew-gradient form `dz_r/dt = J_r(z̃) Vᵀ F(z̃)`.

use faer::Mat;

use crate::error::{check_len, Error, Result};
use crate::integrator::{simpson, AvfSystem, SkewGradientSystem, StateSpace, Trajectory};
use crate::linalg::{leading_left_singular_vectors, mat_t_vec_into, mat_vec_into};
use crate::model::{gradient_into, stacked_potential_vorticity_into, ShallowWater};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    U,
    V,
    H,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::U, Component::V, Component::H];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::U => "u",
            Component::V => "v",
            Component::H => "h",
        }
    }

    /// This component's block of a stacked vector of length `3·nodes`.
    pub fn block(self, z: &[f64], nodes: usize) -> &[f64] {
        let k = self.index();
        &z[k * nodes..(k + 1) * nodes]
    }
}

/// Mean-subtracted snapshot matrices, one per component.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    matrices: [Mat<f64>; 3],
    means: [Vec<f64>; 3],
}

impl SnapshotSet {
    /// Uses every given state as a column; the means are taken over the same
    /// columns.
    pub fn from_states<S: AsRef<[f64]>>(states: &[S]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
        let dim = first.as_ref().len();
        for s in states {
            check_len("snapshot", dim, s.as_ref().len())?;
        }
        Self::from_columns(dim, states.len(), |k| states[k].as_ref())
    }

    /// Columns of a stacked `3N × N_t` matrix.
    pub fn from_stacked_matrix(m: &Mat<f64>) -> Result<Self> {
        Self::from_columns(m.nrows(), m.ncols(), |k| m.col_as_slice(k))
    }

    fn from_columns<'a>(dim: usize, count: usize, col: impl Fn(usize) -> &'a [f64]) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 snapshots, got {count}"
            )));
        }
        if dim == 0 || dim % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "snapshot length {dim} is not a positive multiple of 3"
            )));
        }
        let nodes = dim / 3;
        let means: [Vec<f64>; 3] = std::array::from_fn(|c| {
            let mut mean = vec![0.0; nodes];
            for k in 0..count {
                for (m, x) in mean.iter_mut().zip(&col(k)[c * nodes..(c + 1) * nodes]) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            mean
        });
        let matrices = std::array::from_fn(|c| {
            let mean = &means[c];
            let mut s = Mat::<f64>::zeros(nodes, count);
            for k in 0..count {
                let src = &col(k)[c * nodes..(c + 1) * nodes];
                for ((dst, x), m) in s.col_as_slice_mut(k).iter_mut().zip(src).zip(mean) {
                    *dst = x - m;
                }
            }
            s
        });
        Ok(SnapshotSet { matrices, means })
    }

    pub fn nodes(&self) -> usize {
        self.means[0].len()
    }

    pub fn count(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn matrix(&self, c: Component) -> &Mat<f64> {
        &self.matrices[c.index()]
    }

    pub fn mean(&self, c: Component) -> &[f64] {
        &self.means[c.index()]
    }
}

/// Snapshot set of a trajectory's states after the initial one.
pub fn assemble_snapshots(trajectory: &Trajectory) -> Result<SnapshotSet> {
    SnapshotSet::from_states(trajectory.snapshots())
}

/// Smallest `p` whose relative cumulative energy `Σ_{j≤p} σ_j² / Σ σ_j²`
/// exceeds `1 − κ`.
pub fn select_mode_count(sigma: &[f64], kappa: f64) -> Result<usize> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::RankDeficient("all singular values are zero".into()));
    }
    let mut acc = 0.0;
    for (p, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc / total > 1.0 - kappa {
            return Ok(p + 1);
        }
    }
    // only reachable when 1 − κ rounds to 1
    Ok(sigma.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeSelection {
    Fixed(usize),
    /// Energy criterion; the largest count over the three components wins.
    Energy(f64),
}

#[derive(Debug, Clone)]
pub struct PodBasis {
    modes: [Mat<f64>; 3],
    sigma: [Vec<f64>; 3],
    means: [Vec<f64>; 3],
}

impl PodBasis {
    pub fn compute(snapshots: &SnapshotSet, selection: ModeSelection) -> Result<Self> {
        let bound = snapshots.nodes().min(snapshots.count());
        let mut full = Vec::with_capacity(3);
        for c in Component::ALL {
            full.push(leading_left_singular_vectors(snapshots.matrix(c), bound)?);
        }
        let n = match selection {
            ModeSelection::Fixed(n) => n,
            ModeSelection::Energy(kappa) => {
                let mut n = 0;
                for (_, sigma) in &full {
                    n = n.max(select_mode_count(sigma, kappa)?);
                }
                n
            }
        };
        if n == 0 || n > bound {
            return Err(Error::InvalidArgument(format!(
                "mode count {n} must lie in 1..={bound} (min of nodes and snapshots)"
            )));
        }
        let mut full = full.into_iter();
        let mut next = || {
            let (u, sigma) = full.next().expect("three components");
            (u.subcols(0, n).to_owned(), sigma)
        };
        let (mu, su) = next();
        let (mv, sv) = next();
        let (mh, sh) = next();
        Ok(PodBasis {
            modes: [mu, mv, mh],
            sigma: [su, sv, sh],
            means: [0, 1, 2].map(|c| snapshots.means[c].clone()),
        })
    }

    /// Assembles a basis from precomputed pieces (e.g. read back from disk).
    pub fn from_parts(modes: [Mat<f64>; 3], sigma: [Vec<f64>; 3], means: [Vec<f64>; 3]) -> Result<Self> {
        let nodes = modes[0].nrows();
        let n = modes[0].ncols();
        if n == 0 {
            return Err(Error::InvalidArgument("basis has no modes".into()));
        }
        for c in 0..3 {
            check_len("mode rows", nodes, modes[c].nrows())?;
            check_len("mode count", n, modes[c].ncols())?;
            check_len("mean", nodes, means[c].len())?;
        }
        Ok(PodBasis { modes, sigma, means })
    }

    pub fn nodes(&self) -> usize {
        self.modes[0].nrows()
    }

    pub fn modes_per_component(&self) -> usize {
        self.modes[0].ncols()
    }

    pub fn reduced_dimension(&self) -> usize {
        3 * self.modes_per_component()
    }

    pub fn modes(&self, c: Component) -> &Mat<f64> {
        &self.modes[c.index()]
    }

    pub fn sigma(&self, c: Component) -> &[f64] {
        &self.sigma[c.index()]
    }

    pub fn mean(&self, c: Component) -> &[f64] {
        &self.means[c.index()]
    }

    /// `w = w̄ + V_w w_r` per component, written into `out` (length `3N`).
    pub fn lift_into(&self, z_r: &[f64], out: &mut [f64]) -> Result<()> {
        let (nodes, n) = (self.nodes(), self.modes_per_component());
        check_len("reduced state", 3 * n, z_r.len())?;
        check_len("lifted state", 3 * nodes, out.len())?;
        for c in 0..3 {
            let dst = &mut out[c * nodes..(c + 1) * nodes];
            mat_vec_into(&self.modes[c], &z_r[c * n..(c + 1) * n], dst);
            for (d, m) in dst.iter_mut().zip(&self.means[c]) {
                *d += m;
            }
        }
        Ok(())
    }

    pub fn lift(&self, z_r: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 3 * self.nodes()];
        self.lift_into(z_r, &mut out)?;
        Ok(out)
    }

    /// Reduced coordinates `V_wᵀ (w − w̄)` of a full stacked state.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let nodes = self.nodes();
        check_len("full state", 3 * nodes, z.len())?;
        let centred: Vec<f64> = (0..3 * nodes).map(|i| z[i] - self.means[i / nodes][i % nodes]).collect();
        self.project_vector(&centred)
    }

    /// `blkdiag(V_u, V_v, V_h)ᵀ g`, without touching the means.
    pub fn project_vector(&self, g: &[f64]) -> Result<Vec<f64>> {
        let (nodes, n) = (self.nodes(), self.modes_per_component());
        check_len("full vector", 3 * nodes, g.len())?;
        let mut out = vec![0.0; 3 * n];
        for c in 0..3 {
            mat_t_vec_into(&self.modes[c], &g[c * nodes..(c + 1) * nodes], &mut out[c * n..(c + 1) * n]);
        }
        Ok(out)
    }
}

/// Constant projected difference blocks and the gather matrix for the
/// state-dependent vorticity block.
#[derive(Debug, Clone)]
pub struct ReducedOperators {
    pub a_uh: Mat<f64>,
    pub a_vh: Mat<f64>,
    pub a_hu: Mat<f64>,
    pub a_hv: Mat<f64>,
    /// `N × n²`, row `i` is `V_u(i,:) ⊗ V_v(i,:)`.
    pub k_uv: Mat<f64>,
}

fn apply_to_columns(v: &Mat<f64>, apply: impl Fn(&[f64], &mut [f64])) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(v.nrows(), v.ncols());
    for j in 0..v.ncols() {
        apply(v.col_as_slice(j), out.col_as_slice_mut(j));
    }
    out
}

impl ReducedOperators {
    pub fn new(basis: &PodBasis, ops: &crate::grid::DiffOperators) -> Result<Self> {
        check_len("difference operators", basis.nodes(), ops.len())?;
        let (vu, vv, vh) = (basis.modes(Component::U), basis.modes(Component::V), basis.modes(Component::H));
        let dx_vh = apply_to_columns(vh, |w, o| ops.apply_dx(w, o));
        let dy_vh = apply_to_columns(vh, |w, o| ops.apply_dy(w, o));
        let dx_vu = apply_to_columns(vu, |w, o| ops.apply_dx(w, o));
        let dy_vv = apply_to_columns(vv, |w, o| ops.apply_dy(w, o));
        let n = basis.modes_per_component();
        let k_uv = Mat::from_fn(basis.nodes(), n * n, |i, col| vu[(i, col / n)] * vv[(i, col % n)]);
        Ok(ReducedOperators {
            a_uh: vu.transpose() * &dx_vh,
            a_vh: vv.transpose() * &dy_vh,
            a_hu: vh.transpose() * &dx_vu,
            a_hv: vh.transpose() * &dy_vv,
            k_uv,
        })
    }

    pub fn modes_per_component(&self) -> usize {
        self.a_uh.nrows()
    }

    /// `vec(B_uv)` in row-major order: `out[a·n + b] = Σ_i q_i V_u(i,a) V_v(i,b)`.
    pub fn vorticity_block_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("potential vorticity", self.k_uv.nrows(), q.len())?;
        check_len("vorticity block", self.k_uv.ncols(), out.len())?;
        mat_t_vec_into(&self.k_uv, q, out);
        Ok(())
    }

    /// `(B_uv, B_vu) = (V_uᵀ diag(q) V_v, V_vᵀ diag(q) V_u)`; the second is
    /// the transpose of the first since `diag(q)` is symmetric.
    pub fn project_vorticity_blocks(&self, q: &[f64]) -> Result<(Mat<f64>, Mat<f64>)> {
        let n = self.modes_per_component();
        let mut flat = vec![0.0; n * n];
        self.vorticity_block_into(q, &mut flat)?;
        let b_uv = Mat::from_fn(n, n, |a, b| flat[a * n + b]);
        let b_vu = b_uv.transpose().to_owned();
        Ok((b_uv, b_vu))
    }

    /// Multiply-adds spent by one gather `K_uvᵀ q`.
    pub fn gather_flops(&self) -> usize {
        self.k_uv.nrows() * self.k_uv.ncols()
    }

    /// `J_r g` given the row-major vorticity block `b_uv`:
    ///
    /// ```text
    /// ⎡  0      B_uv  −A_uh ⎤
    /// ⎢ −B_uvᵀ  0     −A_vh ⎥
    /// ⎣ −A_hu  −A_hv   0    ⎦
    /// ```
    pub fn apply_reduced_poisson(&self, b_uv: &[f64], g: &[f64], out: &mut [f64]) {
        let n = self.modes_per_component();
        let (gu, rest) = g.split_at(n);
        let (gv, gh) = rest.split_at(n);
        let (ou, rest) = out.split_at_mut(n);
        let (ov, oh) = rest.split_at_mut(n);
        for a in 0..n {
            let row = &b_uv[a * n..(a + 1) * n];
            let mut su = 0.0;
            let mut sh = 0.0;
            for b in 0..n {
                su += row[b] * gv[b] - self.a_uh[(a, b)] * gh[b];
                sh -= self.a_hu[(a, b)] * gu[b] + self.a_hv[(a, b)] * gv[b];
            }
            ou[a] = su;
            oh[a] = sh;
        }
        for b in 0..n {
            let mut sv = 0.0;
            for a in 0..n {
                sv -= b_uv[a * n + b] * gu[a] + self.a_vh[(b, a)] * gh[a];
            }
            ov[b] = sv;
        }
    }
}

/// The POD-Galerkin reduced system on coordinates `z_r ∈ ℝ^{3n}`.
#[derive(Debug, Clone, Copy)]
pub struct PodRom<'a> {
    pub model: &'a ShallowWater,
    pub basis: &'a PodBasis,
    pub operators: &'a ReducedOperators,
}

/// Lifted start state of an AVF step and its full gradient.
#[derive(Debug, Clone)]
pub struct PodAnchor {
    lifted: Vec<f64>,
    gradient: Vec<f64>,
}

impl<'a> PodRom<'a> {
    pub fn new(model: &'a ShallowWater, basis: &'a PodBasis, operators: &'a ReducedOperators) -> Result<Self> {
        check_len("basis nodes", model.nodes(), basis.nodes())?;
        check_len(
            "reduced operators",
            basis.modes_per_component(),
            operators.modes_per_component(),
        )?;
        Ok(PodRom {
            model,
            basis,
            operators,
        })
    }

    fn full_gradient(&self, lifted: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; lifted.len()];
        gradient_into(lifted, &self.model.params, &mut f);
        f
    }

    /// `J_r(z̃) g` where `z̃` is an already lifted full state.
    fn apply_skew_lifted(&self, lifted: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let nodes = self.basis.nodes();
        let n = self.basis.modes_per_component();
        let mut q = vec![0.0; nodes];
        let mut scratch = vec![0.0; nodes];
        stacked_potential_vorticity_into(
            lifted,
            &self.model.ops,
            self.model.params.omega_hat[2],
            &mut q,
            &mut scratch,
        )?;
        let mut b_uv = vec![0.0; n * n];
        self.operators.vorticity_block_into(&q, &mut b_uv)?;
        let mut out = vec![0.0; 3 * n];
        self.operators.apply_reduced_poisson(&b_uv, g, &mut out);
        Ok(out)
    }

    /// `dz_r/dt = J_r(z̃) Vᵀ F(z̃)` with `z̃ = lift(z_r)`.
    pub fn reduced_rhs(&self, z_r: &[f64]) -> Result<Vec<f64>> {
        let lifted = self.basis.lift(z_r)?;
        let g = self.basis.project_vector(&self.full_gradient(&lifted))?;
        self.apply_skew_lifted(&lifted, &g)
    }

    /// Dense `J_r(lift(z_r))`, mainly for inspection and tests.
    pub fn poisson_matrix(&self, z_r: &[f64]) -> Result<Mat<f64>> {
        let dim = self.dimension();
        let lifted = self.basis.lift(z_r)?;
        let mut j = Mat::<f64>::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        for col in 0..dim {
            e[col] = 1.0;
            let out = self.apply_skew_lifted(&lifted, &e)?;
            e[col] = 0.0;
            j.col_as_slice_mut(col).copy_from_slice(&out);
        }
        Ok(j)
    }
}

impl StateSpace for PodRom<'_> {
    fn dimension(&self) -> usize {
        self.basis.reduced_dimension()
    }
}

impl SkewGradientSystem for PodRom<'_> {
    fn gradient(&self, z_r: &[f64]) -> Result<Vec<f64>> {
        let lifted = self.basis.lift(z_r)?;
        self.basis.project_vector(&self.full_gradient(&lifted))
    }

    fn apply_skew(&self, z_mid: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        check_len("reduced gradient", self.dimension(), g.len())?;
        let lifted = self.basis.lift(z_mid)?;
        self.apply_skew_lifted(&lifted, g)
    }
}

impl AvfSystem for PodRom<'_> {
    type Anchor = PodAnchor;

    fn anchor(&self, z_k: &[f64]) -> Result<PodAnchor> {
        let lifted = self.basis.lift(z_k)?;
        let gradient = self.full_gradient(&lifted);
        Ok(PodAnchor { lifted, gradient })
    }

    // Lifting is affine, so the lifted midpoint is the midpoint of the lifts
    // and the Simpson average can be formed in full space before projecting.
    fn avf_field(&self, anchor: &PodAnchor, _z_k: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let lifted_b = self.basis.lift(z)?;
        let mid: Vec<f64> = anchor.lifted.iter().zip(&lifted_b).map(|(a, b)| 0.5 * (a + b)).collect();
        let fm = self.full_gradient(&mid);
        let fb = self.full_gradient(&lifted_b);
        let g = self.basis.project_vector(&simpson(&anchor.gradient, &fm, &fb))?;
        self.apply_skew_lifted(&mid, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::PhysParams;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn frobenius_sq(m: &Mat<f64>) -> f64 {
        let mut s = 0.0;
        for j in 0..m.ncols() {
            s += m.col_as_slice(j).iter().map(|x| x * x).sum::<f64>();
        }
        s
    }

    fn small_model(nx: usize, ny: usize) -> ShallowWater {
        let grid = Grid::new(-5.0, 5.0, -5.0, 5.0, nx, ny).unwrap();
        let params = PhysParams::from_latitude(std::f64::consts::FRAC_PI_4, 0.146, grid.len());
        ShallowWater::new(grid, params).unwrap()
    }

    fn random_states(rng: &mut StdRng, nodes: usize, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                (0..3 * nodes)
                    .map(|i| {
                        if i >= 2 * nodes {
                            1.0 + rng.random_range(-0.2..0.2)
                        } else {
                            rng.random_range(-0.5..0.5)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn identity_basis(nodes: usize) -> PodBasis {
        let eye = || Mat::<f64>::identity(nodes, nodes);
        PodBasis::from_parts(
            [eye(), eye(), eye()],
            [vec![1.0; nodes], vec![1.0; nodes], vec![1.0; nodes]],
            [vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]],
        )
        .unwrap()
    }

    #[test]
    fn constant_trajectory_gives_zero_snapshots() {
        let states = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; 4];
        let s = SnapshotSet::from_states(&states).unwrap();
        for c in Component::ALL {
            assert_eq!(crate::linalg::max_abs(s.matrix(c)), 0.0);
        }
        assert_eq!(s.mean(Component::V), &[3.0, 4.0]);
    }

    #[test]
    fn two_snapshots_are_symmetric_about_the_mean() {
        let a = vec![1.0, 0.0, 2.0];
        let b = vec![3.0, 4.0, -2.0];
        let s = SnapshotSet::from_states(&[a.clone(), b.clone()]).unwrap();
        for (c, comp) in Component::ALL.into_iter().enumerate() {
            let m = s.matrix(comp);
            assert_eq!(m[(0, 0)], (a[c] - b[c]) / 2.0);
            assert_eq!(m[(0, 1)], -(a[c] - b[c]) / 2.0);
        }
    }

    #[test]
    fn snapshot_errors() {
        assert!(SnapshotSet::from_states(&[vec![1.0; 3]]).is_err());
        assert!(SnapshotSet::from_states::<Vec<f64>>(&[]).is_err());
        assert!(SnapshotSet::from_states(&[vec![1.0; 4], vec![1.0; 4]]).is_err());
    }

    #[test]
    fn stacked_matrix_matches_state_list() {
        let states = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.0, 1.0, 1.0, 2.0, 3.0, 5.0]];
        let m = Mat::from_fn(6, 2, |i, k| states[k][i]);
        let a = SnapshotSet::from_stacked_matrix(&m).unwrap();
        let b = SnapshotSet::from_states(&states).unwrap();
        for c in Component::ALL {
            assert_eq!(a.matrix(c), b.matrix(c));
            assert_eq!(a.mean(c), b.mean(c));
        }
    }

    #[test]
    fn mode_count_examples() {
        assert_eq!(select_mode_count(&[1.0, 0.03, 0.01], 1e-3).unwrap(), 1);
        assert_eq!(select_mode_count(&[1.0, 0.5, 0.1], 0.999_999).unwrap(), 1);
        assert_eq!(select_mode_count(&[1.0, 1.0, 1.0], 0.5).unwrap(), 2);
        assert!(select_mode_count(&[0.0, 0.0], 0.1).is_err());
        assert!(select_mode_count(&[1.0], 0.0).is_err());
        assert!(select_mode_count(&[1.0], 1.0).is_err());
    }

    #[test]
    fn rank_one_snapshots_give_the_generating_vector() {
        let w = [0.0, 0.6, -0.8, 0.0];
        let v = [0.5, -0.5, 0.5, -0.5, 0.0, 0.0];
        let sigma = 3.0;
        // all three components share the same rank-one pattern
        let states: Vec<Vec<f64>> = (0..v.len())
            .map(|k| (0..12).map(|i| sigma * w[i % 4] * v[k]).collect())
            .collect();
        let snaps = SnapshotSet::from_states(&states).unwrap();
        let basis = PodBasis::compute(&snaps, ModeSelection::Fixed(1)).unwrap();
        for c in Component::ALL {
            let s = basis.sigma(c);
            assert!((s[0] - sigma).abs() < 1e-12, "{s:?}");
            assert!(s[1] < 1e-12);
            let m = basis.modes(c);
            // the largest-magnitude entry (−0.8) is flipped positive
            for i in 0..4 {
                assert!((m[(i, 0)] + w[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_many_modes_is_an_error() {
        let mut rng = StdRng::seed_from_u64(1);
        let snaps = SnapshotSet::from_states(&random_states(&mut rng, 5, 3)).unwrap();
        assert!(PodBasis::compute(&snaps, ModeSelection::Fixed(4)).is_err());
        assert!(PodBasis::compute(&snaps, ModeSelection::Fixed(0)).is_err());
        assert!(PodBasis::compute(&snaps, ModeSelection::Fixed(3)).is_ok());
    }

    #[test]
    fn energy_selection_takes_the_largest_component_count() {
        let mut rng = StdRng::seed_from_u64(2);
        let snaps = SnapshotSet::from_states(&random_states(&mut rng, 8, 6)).unwrap();
        let basis = PodBasis::compute(&snaps, ModeSelection::Energy(1e-3)).unwrap();
        let expected = Component::ALL
            .iter()
            .map(|&c| select_mode_count(basis.sigma(c), 1e-3).unwrap())
            .max()
            .unwrap();
        assert_eq!(basis.modes_per_component(), expected);
    }

    #[test]
    fn reconstruction_error_matches_singular_value_tail() {
        let mut rng = StdRng::seed_from_u64(3);
        let snaps = SnapshotSet::from_states(&random_states(&mut rng, 20, 12)).unwrap();
        for n in [1, 4, 9] {
            let basis = PodBasis::compute(&snaps, ModeSelection::Fixed(n)).unwrap();
            for c in Component::ALL {
                let v = basis.modes(c);
                let s = snaps.matrix(c);
                let residual = s - v * (v.transpose() * s);
                let tail: f64 = basis.sigma(c)[n..].iter().map(|x| x * x).sum();
                let err = frobenius_sq(&residual);
                assert!((err - tail).abs() <= 1e-8 * tail.max(1e-300), "n={n}: {err} vs {tail}");
                let gram = v.transpose() * v;
                let eye = Mat::<f64>::identity(n, n);
                assert!(crate::linalg::max_abs(&(&gram - &eye)) < 1e-12);
                assert!(basis.sigma(c).windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
            }
        }
    }

    #[test]
    fn lift_and_project() {
        let mut rng = StdRng::seed_from_u64(4);
        let states = random_states(&mut rng, 10, 8);
        let snaps = SnapshotSet::from_states(&states).unwrap();
        let basis = PodBasis::compute(&snaps, ModeSelection::Fixed(5)).unwrap();
        let zero = vec![0.0; 15];
        let lifted = basis.lift(&zero).unwrap();
        for c in Component::ALL {
            assert_eq!(c.block(&lifted, 10), basis.mean(c));
        }
        // lift ∘ project is idempotent
        let once = basis.lift(&basis.project(&states[3]).unwrap()).unwrap();
        let twice = basis.lift(&basis.project(&once).unwrap()).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
        // with all modes a snapshot is reproduced exactly
        let full = PodBasis::compute(&snaps, ModeSelection::Fixed(8)).unwrap();
        let back = full.lift(&full.project(&states[5]).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&states[5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_modes_give_zero_difference_blocks() {
        let model = small_model(4, 5);
        let nodes = model.nodes();
        let c = Mat::from_fn(nodes, 1, |_, _| 1.0 / (nodes as f64).sqrt());
        let basis = PodBasis::from_parts(
            [c.clone(), c.clone(), c],
            [vec![1.0], vec![1.0], vec![1.0]],
            [vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]],
        )
        .unwrap();
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        for a in [&ops.a_uh, &ops.a_vh, &ops.a_hu, &ops.a_hv] {
            assert!(a[(0, 0)].abs() < 1e-15);
        }
    }

    fn random_basis(rng: &mut StdRng, nodes: usize, n: usize) -> PodBasis {
        let states = random_states(rng, nodes, n + 3);
        let snaps = SnapshotSet::from_states(&states).unwrap();
        PodBasis::compute(&snaps, ModeSelection::Fixed(n)).unwrap()
    }

    /// Dense `V_uᵀ diag(q) V_v` through the explicit `N × N` diagonal, counting
    /// multiply-adds.
    fn dense_vorticity_block(vu: &Mat<f64>, vv: &Mat<f64>, q: &[f64], flops: &mut usize) -> Mat<f64> {
        let nodes = q.len();
        let n = vu.ncols();
        let diag = Mat::from_fn(nodes, nodes, |i, j| if i == j { q[i] } else { 0.0 });
        let mut dv = Mat::<f64>::zeros(nodes, n);
        for i in 0..nodes {
            for b in 0..n {
                for k in 0..nodes {
                    dv[(i, b)] += diag[(i, k)] * vv[(k, b)];
                    *flops += 1;
                }
            }
        }
        let mut out = Mat::<f64>::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                for i in 0..nodes {
                    out[(a, b)] += vu[(i, a)] * dv[(i, b)];
                    *flops += 1;
                }
            }
        }
        out
    }

    #[test]
    fn vorticity_block_matches_dense_product() {
        let mut rng = StdRng::seed_from_u64(5);
        let model = small_model(4, 4);
        let basis = random_basis(&mut rng, 16, 5);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        let q: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (b_uv, b_vu) = ops.project_vorticity_blocks(&q).unwrap();
        let mut flops = 0;
        let dense = dense_vorticity_block(basis.modes(Component::U), basis.modes(Component::V), &q, &mut flops);
        assert!(crate::linalg::max_abs(&(&b_uv - &dense)) < 1e-12);
        let dense_vu = dense_vorticity_block(basis.modes(Component::V), basis.modes(Component::U), &q, &mut 0);
        assert!(crate::linalg::max_abs(&(&b_vu - &dense_vu)) < 1e-12);
        let (nodes, n) = (16, 5);
        assert_eq!(ops.gather_flops(), nodes * n * n);
        assert_eq!(flops, n * nodes * (n + nodes));
    }

    #[test]
    fn vorticity_block_special_vectors() {
        let mut rng = StdRng::seed_from_u64(6);
        let model = small_model(3, 4);
        let basis = random_basis(&mut rng, 12, 4);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        let (vu, vv) = (basis.modes(Component::U), basis.modes(Component::V));
        let (b, _) = ops.project_vorticity_blocks(&[1.0; 12]).unwrap();
        assert!(crate::linalg::max_abs(&(&b - vu.transpose() * vv)) < 1e-14);
        let mut e = vec![0.0; 12];
        e[7] = 1.0;
        let (b, _) = ops.project_vorticity_blocks(&e).unwrap();
        for a in 0..4 {
            for c in 0..4 {
                assert!((b[(a, c)] - vu[(7, a)] * vv[(7, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn difference_blocks_are_skew_related() {
        let mut rng = StdRng::seed_from_u64(7);
        let model = small_model(5, 4);
        let basis = random_basis(&mut rng, 20, 6);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        assert!(crate::linalg::max_abs(&(&ops.a_hu + ops.a_uh.transpose())) < 1e-12);
        assert!(crate::linalg::max_abs(&(&ops.a_hv + ops.a_vh.transpose())) < 1e-12);
    }

    #[test]
    fn full_basis_reproduces_full_rhs() {
        let model = small_model(4, 4);
        let basis = identity_basis(16);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        let rom = PodRom::new(&model, &basis, &ops).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        for z in random_states(&mut rng, 16, 5) {
            let full = model.rhs(&z).unwrap();
            let reduced = rom.reduced_rhs(&z).unwrap();
            for (a, b) in full.iter().zip(&reduced) {
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn reduced_poisson_matches_projected_full_operator() {
        // distinct bases per component, so mixing up u, v and h would show
        let mut rng = StdRng::seed_from_u64(17);
        let model = small_model(5, 4);
        let basis = random_basis(&mut rng, 20, 4);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        let rom = PodRom::new(&model, &basis, &ops).unwrap();
        let z_r: Vec<f64> = (0..12).map(|_| rng.random_range(-0.1..0.1)).collect();
        let g: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lifted = basis.lift(&z_r).unwrap();
        let state = crate::model::CanonicalState::from_stacked(lifted.clone()).unwrap();
        let q = crate::model::potential_vorticity(&state, &model.ops, &model.params).unwrap();
        let mut vg = vec![0.0; 60];
        for c in 0..3 {
            mat_vec_into(&basis.modes[c], &g[4 * c..4 * (c + 1)], &mut vg[20 * c..20 * (c + 1)]);
        }
        let full = crate::model::apply_poisson(&q, &vg, &model.ops).unwrap();
        let expected = basis.project_vector(&full).unwrap();
        let got = rom.apply_skew(&z_r, &g).unwrap();
        for (a, b) in expected.iter().zip(&got) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rest_state_is_steady() {
        let model = small_model(4, 4);
        let basis = identity_basis(16);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        let rom = PodRom::new(&model, &basis, &ops).unwrap();
        // flat surface, zero particle velocity: ũ, ṽ carry the rotation shifts
        let params = &model.params;
        let mut z = vec![0.0; 48];
        for i in 0..16 {
            z[i] = params.delta * params.omega_hat[1] * 0.5;
            z[16 + i] = -params.delta * params.omega_hat[0] * 0.5;
            z[32 + i] = 1.0;
        }
        let rhs = rom.reduced_rhs(&z).unwrap();
        assert!(rhs.iter().all(|r| r.abs() < 1e-14), "{rhs:?}");
    }

    #[test]
    fn nonpositive_lifted_height_is_rejected() {
        let model = small_model(3, 3);
        let basis = identity_basis(9);
        let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
        let rom = PodRom::new(&model, &basis, &ops).unwrap();
        let mut z = vec![0.0; 27];
        z[18..].iter_mut().for_each(|h| *h = 1.0);
        z[20] = -0.1;
        assert!(matches!(
            rom.reduced_rhs(&z),
            Err(Error::NonPositiveHeight { index: 2, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reduced_poisson_matrix_is_skew(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = StdRng::seed_from_u64(seed);
            let model = small_model(4, 3);
            let basis = random_basis(&mut rng, 12, n);
            let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
            let rom = PodRom::new(&model, &basis, &ops).unwrap();
            let z_r: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-0.05..0.05)).collect();
            let j = rom.poisson_matrix(&z_r).unwrap();
            prop_assert!(crate::linalg::max_abs(&(&j + j.transpose())) <= 1e-13);
            let g: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jg = rom.apply_skew(&z_r, &g).unwrap();
            let inner: f64 = g.iter().zip(&jg).map(|(a, b)| a * b).sum();
            let norm: f64 = g.iter().map(|x| x * x).sum();
            prop_assert!(inner.abs() <= 1e-12 * norm);
        }

        #[test]
        fn vorticity_gather_matches_dense(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = StdRng::seed_from_u64(seed);
            let model = small_model(3, 3);
            let basis = random_basis(&mut rng, 9, n);
            let ops = ReducedOperators::new(&basis, &model.ops).unwrap();
            let q: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (b, _) = ops.project_vorticity_blocks(&q).unwrap();
            let dense = dense_vorticity_block(basis.modes(Component::U), basis.modes(Component::V), &q, &mut 0);
            prop_assert!(crate::linalg::max_abs(&(&b - &dense)) <= 1e-12);
        }
    }
}
