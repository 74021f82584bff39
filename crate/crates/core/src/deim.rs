//! Discrete empirical interpolation of the full right-hand side.
//!
//! Each block `(J(z̃) F(z̃))_i` of the full-order vector field is replaced by
//! `V_F (Pᵀ V_F)⁻¹ Pᵀ (J F)_i`, so the reduced field needs only the `m` sampled
//! entries. Those depend on the state at the sample points and their four
//! stencil neighbours, which are the only rows ever lifted online.

use faer::Mat;

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::integrator::{AvfSystem, StateSpace};
use crate::linalg::{condition_number, leading_left_singular_vectors, mat_vec_into, right_divide, select_rows};
use crate::model::{gradient_at, ShallowWater};
use crate::pod::{select_mode_count, Component, ModeSelection, PodBasis};

/// Columns of the three right-hand-side blocks over a set of states.
#[derive(Debug, Clone)]
pub struct NonlinearitySnapshots {
    blocks: [Mat<f64>; 3],
}

impl NonlinearitySnapshots {
    pub fn collect<S: AsRef<[f64]>>(model: &ShallowWater, states: &[S]) -> Result<Self> {
        let nodes = model.nodes();
        let mut blocks: [Mat<f64>; 3] = std::array::from_fn(|_| Mat::zeros(nodes, states.len()));
        for (k, z) in states.iter().enumerate() {
            let rhs = model.rhs(z.as_ref())?;
            for (c, block) in blocks.iter_mut().enumerate() {
                block.col_as_slice_mut(k).copy_from_slice(&rhs[c * nodes..(c + 1) * nodes]);
            }
        }
        Ok(NonlinearitySnapshots { blocks })
    }

    pub fn from_blocks(blocks: [Mat<f64>; 3]) -> Result<Self> {
        for b in &blocks[1..] {
            check_len("nonlinearity rows", blocks[0].nrows(), b.nrows())?;
            check_len("nonlinearity columns", blocks[0].ncols(), b.ncols())?;
        }
        Ok(NonlinearitySnapshots { blocks })
    }

    pub fn block(&self, c: Component) -> &Mat<f64> {
        &self.blocks[c.index()]
    }

    pub fn count(&self) -> usize {
        self.blocks[0].ncols()
    }
}

/// Greedy DEIM points of the columns of `v_f`; ties go to the smallest index.
pub fn deim_select_points(v_f: &Mat<f64>) -> Result<Vec<usize>> {
    let (rows, m) = (v_f.nrows(), v_f.ncols());
    if m == 0 || m > rows {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {m} interpolation points among {rows} rows"
        )));
    }
    let scale = crate::linalg::max_abs(v_f);
    let mut points = Vec::with_capacity(m);
    let mut residual = v_f.col_as_slice(0).to_vec();
    for j in 0..m {
        if j > 0 {
            // residual of column j after interpolating it on the points so far
            let basis = v_f.subcols(0, j).to_owned();
            let p_basis = select_rows(&basis, &points);
            let rhs = Mat::from_fn(j, 1, |i, _| v_f[(points[i], j)]);
            let coeffs = {
                use faer::linalg::solvers::Solve;
                p_basis.partial_piv_lu().solve(&rhs)
            };
            let c: Vec<f64> = (0..j).map(|i| coeffs[(i, 0)]).collect();
            mat_vec_into(&basis, &c, &mut residual);
            for (r, v) in residual.iter_mut().zip(v_f.col_as_slice(j)) {
                *r = v - *r;
            }
        }
        let mut best = 0;
        for (i, r) in residual.iter().enumerate() {
            if r.abs() > residual[best].abs() {
                best = i;
            }
        }
        let peak = residual[best].abs();
        if !(peak > 1e-12 * scale) || points.contains(&best) {
            return Err(Error::RankDeficient(format!(
                "interpolation basis is singular at column {} of {m}",
                j + 1
            )));
        }
        points.push(best);
    }
    Ok(points)
}

/// Interpolation data for one right-hand-side block.
#[derive(Debug, Clone)]
pub struct DeimComponent {
    pub basis: Mat<f64>,
    pub points: Vec<usize>,
    /// `V_wᵀ V_F (Pᵀ V_F)⁻¹`, `n × m`.
    pub projector: Mat<f64>,
    /// Condition number of `Pᵀ V_F`.
    pub condition: f64,
    /// `‖(Pᵀ V_F)⁻¹‖₂`, the constant in the interpolation error bound.
    pub inverse_norm: f64,
    /// Singular values of the block's snapshot matrix, when built from data.
    pub sigma: Vec<f64>,
}

impl DeimComponent {
    fn new(basis: Mat<f64>, modes: &Mat<f64>, sigma: Vec<f64>) -> Result<Self> {
        let points = deim_select_points(&basis)?;
        Self::with_points(basis, points, modes, sigma)
    }

    fn with_points(basis: Mat<f64>, points: Vec<usize>, modes: &Mat<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_len("interpolation points", basis.ncols(), points.len())?;
        check_len("interpolation basis rows", modes.nrows(), basis.nrows())?;
        if let Some(&p) = points.iter().find(|&&p| p >= basis.nrows()) {
            return Err(Error::InvalidArgument(format!("interpolation point {p} out of range")));
        }
        let p_basis = select_rows(&basis, &points);
        let condition = condition_number(&p_basis)?;
        if !condition.is_finite() {
            return Err(Error::RankDeficient("Pᵀ V_F is singular".into()));
        }
        let s = p_basis
            .singular_values()
            .map_err(|e| Error::LinearAlgebra(format!("SVD failed: {e:?}")))?;
        let inverse_norm = 1.0 / s.last().copied().unwrap_or(0.0);
        let projector = right_divide(&(modes.transpose() * &basis), &p_basis);
        Ok(DeimComponent {
            basis,
            points,
            projector,
            condition,
            inverse_norm,
            sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `V_F (Pᵀ V_F)⁻¹ Pᵀ g`.
    pub fn interpolate(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len("interpolated vector", self.basis.nrows(), g.len())?;
        let p_basis = select_rows(&self.basis, &self.points);
        let sampled = Mat::from_fn(self.len(), 1, |i, _| g[self.points[i]]);
        let coeffs = {
            use faer::linalg::solvers::Solve;
            p_basis.partial_piv_lu().solve(&sampled)
        };
        let c: Vec<f64> = (0..self.len()).map(|i| coeffs[(i, 0)]).collect();
        let mut out = vec![0.0; g.len()];
        mat_vec_into(&self.basis, &c, &mut out);
        Ok(out)
    }
}

/// One sampled entry: the local indices of the point and its neighbours in
/// the gathered node list, ordered `[x+1, x−1, y+1, y−1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stencil {
    centre: usize,
    around: [usize; 4],
}

/// DEIM data for all three blocks plus the gather map shared by them.
#[derive(Debug, Clone)]
pub struct DeimOperator {
    components: [DeimComponent; 3],
    /// Sorted global indices of every node whose state is needed online.
    gathered: Vec<usize>,
    stencils: [Vec<Stencil>; 3],
    /// Rows `gathered` of the POD modes, per canonical component.
    local_modes: [Mat<f64>; 3],
    local_means: [Vec<f64>; 3],
    local_bottom: Vec<f64>,
    inv_2dx: f64,
    inv_2dy: f64,
}

impl DeimOperator {
    /// SVD of each nonlinearity block, greedy points and offline projectors.
    pub fn build(
        model: &ShallowWater,
        pod: &PodBasis,
        snapshots: &NonlinearitySnapshots,
        selection: ModeSelection,
    ) -> Result<Self> {
        let bound = pod.nodes().min(snapshots.count());
        let mut svds = Vec::with_capacity(3);
        for c in Component::ALL {
            svds.push(leading_left_singular_vectors(snapshots.block(c), bound)?);
        }
        let m = match selection {
            ModeSelection::Fixed(m) => m,
            ModeSelection::Energy(kappa) => {
                let mut m = 0;
                for (_, sigma) in &svds {
                    m = m.max(select_mode_count(sigma, kappa)?);
                }
                m
            }
        };
        if m == 0 || m > bound {
            return Err(Error::InvalidArgument(format!(
                "DEIM mode count {m} must lie in 1..={bound}"
            )));
        }
        let mut parts = Vec::with_capacity(3);
        for (c, (u, sigma)) in Component::ALL.into_iter().zip(svds) {
            if !(sigma[m - 1] > 1e-13 * sigma[0]) {
                return Err(Error::RankDeficient(format!(
                    "block {} has numerical rank below the requested {m}",
                    c.name()
                )));
            }
            parts.push(DeimComponent::new(u.subcols(0, m).to_owned(), pod.modes(c), sigma)?);
        }
        let components = parts.try_into().expect("three components");
        Self::assemble(&model.grid, model, pod, components)
    }

    /// Uses the given interpolation bases (e.g. read back from disk).
    pub fn from_bases(model: &ShallowWater, pod: &PodBasis, bases: [Mat<f64>; 3]) -> Result<Self> {
        let [bu, bv, bh] = bases;
        let components = [
            DeimComponent::new(bu, pod.modes(Component::U), Vec::new())?,
            DeimComponent::new(bv, pod.modes(Component::V), Vec::new())?,
            DeimComponent::new(bh, pod.modes(Component::H), Vec::new())?,
        ];
        Self::assemble(&model.grid, model, pod, components)
    }

    fn assemble(grid: &Grid, model: &ShallowWater, pod: &PodBasis, components: [DeimComponent; 3]) -> Result<Self> {
        check_len("basis nodes", model.nodes(), pod.nodes())?;
        let mut gathered: Vec<usize> = components
            .iter()
            .flat_map(|c| c.points.iter())
            .flat_map(|&p| std::iter::once(p).chain(grid.neighbours(p)))
            .collect();
        gathered.sort_unstable();
        gathered.dedup();
        let local = |g: usize| gathered.binary_search(&g).expect("gathered node");
        let stencils = std::array::from_fn(|c| {
            components[c]
                .points
                .iter()
                .map(|&p| Stencil {
                    centre: local(p),
                    around: grid.neighbours(p).map(local),
                })
                .collect()
        });
        let local_modes = Component::ALL.map(|c| select_rows(pod.modes(c), &gathered));
        let local_means = Component::ALL.map(|c| gathered.iter().map(|&g| pod.mean(c)[g]).collect());
        let local_bottom = gathered.iter().map(|&g| model.params.bottom[g]).collect();
        Ok(DeimOperator {
            components,
            stencils,
            local_modes,
            local_means,
            local_bottom,
            inv_2dx: 0.5 / grid.dx,
            inv_2dy: 0.5 / grid.dy,
            gathered,
        })
    }

    pub fn component(&self, c: Component) -> &DeimComponent {
        &self.components[c.index()]
    }

    /// Interpolation points per block (the largest count over the blocks).
    pub fn modes(&self) -> usize {
        self.components.iter().map(DeimComponent::len).max().unwrap_or(0)
    }

    pub fn gathered_nodes(&self) -> &[usize] {
        &self.gathered
    }

    fn reduced_modes(&self) -> usize {
        self.local_modes[0].ncols()
    }

    /// Lifted `(ũ, ṽ, h)` on the gathered nodes, stacked per component.
    pub fn lift_gathered(&self, z_r: &[f64], out: &mut [f64]) -> Result<()> {
        let (g, n) = (self.gathered.len(), self.reduced_modes());
        check_len("reduced state", 3 * n, z_r.len())?;
        check_len("gathered state", 3 * g, out.len())?;
        for c in 0..3 {
            let dst = &mut out[c * g..(c + 1) * g];
            mat_vec_into(&self.local_modes[c], &z_r[c * n..(c + 1) * n], dst);
            for (d, m) in dst.iter_mut().zip(&self.local_means[c]) {
                *d += m;
            }
        }
        Ok(())
    }

    /// The sampled right-hand-side entries `Pᵢᵀ (J F)ᵢ`, stacked per block,
    /// from a lifted state on the gathered nodes.
    pub fn sample_rhs(&self, model: &ShallowWater, local: &[f64], out: &mut [f64]) -> Result<()> {
        let g = self.gathered.len();
        check_len("gathered state", 3 * g, local.len())?;
        let (ut, rest) = local.split_at(g);
        let (vt, h) = rest.split_at(g);
        if let Some(i) = h.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveHeight {
                index: self.gathered[i],
                value: h[i],
            });
        }
        let params = &model.params;
        let grad = |i: usize| gradient_at(ut[i], vt[i], h[i], self.local_bottom[i], params);
        let q = |s: &Stencil| {
            let [xp, xm, yp, ym] = s.around;
            let zeta = params.omega_hat[2] + (vt[xp] - vt[xm]) * self.inv_2dx - (ut[yp] - ut[ym]) * self.inv_2dy;
            zeta / h[s.centre]
        };
        let (dx, dy) = (self.inv_2dx, self.inv_2dy);
        let mut offset = 0;
        for (c, stencils) in self.stencils.iter().enumerate() {
            for (k, s) in stencils.iter().enumerate() {
                let [xp, xm, yp, ym] = s.around;
                out[offset + k] = match c {
                    0 => q(s) * grad(s.centre)[1] - (grad(xp)[2] - grad(xm)[2]) * dx,
                    1 => -q(s) * grad(s.centre)[0] - (grad(yp)[2] - grad(ym)[2]) * dy,
                    _ => -(grad(xp)[0] - grad(xm)[0]) * dx - (grad(yp)[1] - grad(ym)[1]) * dy,
                };
            }
            offset += stencils.len();
        }
        Ok(())
    }

    fn sample_len(&self) -> usize {
        self.components.iter().map(DeimComponent::len).sum()
    }

    /// `(𝒱₁ r₁, 𝒱₂ r₂, 𝒱₃ r₃)` for stacked sampled entries `r`.
    pub fn project_samples(&self, samples: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.reduced_modes();
        check_len("sampled entries", self.sample_len(), samples.len())?;
        check_len("reduced field", 3 * n, out.len())?;
        let mut offset = 0;
        for (c, comp) in self.components.iter().enumerate() {
            let m = comp.len();
            mat_vec_into(&comp.projector, &samples[offset..offset + m], &mut out[c * n..(c + 1) * n]);
            offset += m;
        }
        Ok(())
    }
}

/// The POD-DEIM reduced system.
#[derive(Debug, Clone, Copy)]
pub struct DeimRom<'a> {
    pub model: &'a ShallowWater,
    pub operator: &'a DeimOperator,
}

#[derive(Debug, Clone)]
pub struct DeimAnchor {
    local: Vec<f64>,
    samples: Vec<f64>,
}

impl<'a> DeimRom<'a> {
    pub fn new(model: &'a ShallowWater, operator: &'a DeimOperator) -> Self {
        DeimRom { model, operator }
    }

    fn lift(&self, z_r: &[f64]) -> Result<Vec<f64>> {
        let mut local = vec![0.0; 3 * self.operator.gathered.len()];
        self.operator.lift_gathered(z_r, &mut local)?;
        Ok(local)
    }

    fn samples(&self, local: &[f64]) -> Result<Vec<f64>> {
        let mut s = vec![0.0; self.operator.sample_len()];
        self.operator.sample_rhs(self.model, local, &mut s)?;
        Ok(s)
    }

    /// The hyper-reduced right-hand side at `z_r`.
    pub fn reduced_rhs(&self, z_r: &[f64]) -> Result<Vec<f64>> {
        let samples = self.samples(&self.lift(z_r)?)?;
        let mut out = vec![0.0; self.dimension()];
        self.operator.project_samples(&samples, &mut out)?;
        Ok(out)
    }
}

impl StateSpace for DeimRom<'_> {
    fn dimension(&self) -> usize {
        3 * self.operator.reduced_modes()
    }
}

impl AvfSystem for DeimRom<'_> {
    type Anchor = DeimAnchor;

    fn anchor(&self, z_k: &[f64]) -> Result<DeimAnchor> {
        let local = self.lift(z_k)?;
        let samples = self.samples(&local)?;
        Ok(DeimAnchor { local, samples })
    }

    // Simpson's rule over the interpolated right-hand side; the projection is
    // linear, so the three sampled evaluations are combined before it.
    fn avf_field(&self, anchor: &DeimAnchor, _z_k: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let local_b = self.lift(z)?;
        let local_m: Vec<f64> = anchor.local.iter().zip(&local_b).map(|(a, b)| 0.5 * (a + b)).collect();
        let sm = self.samples(&local_m)?;
        let sb = self.samples(&local_b)?;
        let combined = crate::integrator::simpson(&anchor.samples, &sm, &sb);
        let mut out = vec![0.0; self.dimension()];
        self.operator.project_samples(&combined, &mut out)?;
        Ok(out)
    }
}
