//! The constrained phase space and its multiplier machinery.
//!
//! States live on the affine-linear manifold
//!
//! ```text
//!   div u = 0 in every cell,       u = 0 on S,
//!   u·ν = (interpolated w₂) on Ω,  mean(w₁) = 0,
//! ```
//!
//! encoded as `C x = 0` on flat triples `x = [u; w₁; w₂]`. The mean of `w₂`
//! is not a constraint row: it is implied by the divergence theorem (zero
//! net flux through a closed boundary) and checked as a derived invariant.
//!
//! The evolution is the metric-orthogonal projection of the block drift
//!
//! ```text
//!   M ẋ = drift(x) + Cᵀλ,   C ẋ = 0,
//!   drift(x) = [-K_visc u;  K_plate w₂;  -K_plate w₁],
//! ```
//!
//! and the multiplier λ carries the physics eliminated by the projection:
//! the divergence block of `λ` *is* the discrete pressure (scaled by the
//! cell volume), the `Ω` block is the interface traction the plate feels,
//! and the `S` block is the wall reaction. One Cholesky factorization of
//! the saddle operator `C M⁻¹ Cᵀ` per (grid, ρ) serves every pressure
//! reconstruction, generator application, and time step.

use crate::error::{Error, Result};
use crate::geometry::{build_grid, GeometryConfig, GridTopology};
use crate::linalg::SpdSolver;
use crate::operators::{
    assemble_fluid_ops, assemble_plate_ops, energy_metric, interface_matrix, EnergyMetric,
    FluidOperators, PlateOperators,
};
use crate::state::{ComplexState, State, C64};
use nalgebra::{DMatrix, DVector};
use std::ops::Range;
use std::sync::Arc;

/// Linear constraints pinning the energy space inside the flat triple space.
pub struct ConstraintSet {
    pub matrix: DMatrix<f64>,
    pub div_rows: Range<usize>,
    pub s_rows: Range<usize>,
    pub omega_rows: Range<usize>,
    pub mean_row: usize,
    pub kernel_dim: usize,
}

fn build_constraints(topo: &GridTopology, fluid: &FluidOperators, t: &DMatrix<f64>) -> ConstraintSet {
    let nf = topo.total_faces();
    let m = topo.plate_node_count();
    let cells = topo.cell_count();
    let n_s = topo.s_faces().len();
    let n_omega = topo.omega_faces().len();
    let rows = cells + n_s + n_omega + 1;
    let cols = nf + 2 * m;

    let mut c = DMatrix::zeros(rows, cols);
    c.view_mut((0, 0), (cells, nf)).copy_from(&fluid.divergence);
    for (i, &f) in topo.s_faces().iter().enumerate() {
        c[(cells + i, f)] = 1.0;
    }
    for (k, &f) in topo.omega_faces().iter().enumerate() {
        let row = cells + n_s + k;
        c[(row, f)] = 1.0;
        for j in 0..m {
            let tij = t[(k, j)];
            if tij != 0.0 {
                c[(row, nf + m + j)] = -tij;
            }
        }
    }
    let mean_row = rows - 1;
    for j in 0..m {
        c[(mean_row, nf + j)] = 1.0 / m as f64;
    }

    ConstraintSet {
        matrix: c,
        div_rows: 0..cells,
        s_rows: cells..cells + n_s,
        omega_rows: cells + n_s..cells + n_s + n_omega,
        mean_row,
        kernel_dim: cols - rows,
    }
}

/// Cached factorization of the saddle operator `C M⁻¹ Cᵀ`.
pub struct MultiplierSolver {
    saddle: SpdSolver,
    /// `M⁻¹ Cᵀ`, reused to recover constrained rates from multipliers.
    minv_ct: DMatrix<f64>,
}

impl MultiplierSolver {
    fn new(cs: &ConstraintSet, metric: &EnergyMetric) -> Result<Self> {
        let rows = cs.matrix.nrows();
        let cols = cs.matrix.ncols();
        let mut minv_ct = DMatrix::zeros(cols, rows);
        for r in 0..rows {
            let col = cs.matrix.row(r).transpose();
            minv_ct.set_column(r, &metric.solve_flat(&col));
        }
        let gram = &cs.matrix * &minv_ct;
        // Symmetrize round-off before factorizing.
        let gram = (&gram + gram.transpose()) * 0.5;
        Ok(MultiplierSolver {
            saddle: SpdSolver::new(gram, "constraint saddle operator")?,
            minv_ct,
        })
    }

    /// Multipliers for a force: `λ` solving `C M⁻¹ Cᵀ λ = -(C M⁻¹ f) + extra`.
    pub fn multipliers(
        &self,
        cs: &ConstraintSet,
        metric: &EnergyMetric,
        force: &DVector<f64>,
        extra_rhs: Option<&DVector<f64>>,
    ) -> DVector<f64> {
        let minv_f = metric.solve_flat(force);
        let mut rhs = -(&cs.matrix * &minv_f);
        if let Some(extra) = extra_rhs {
            rhs += extra;
        }
        self.saddle.solve(&rhs)
    }

    /// Raw saddle solve `(C M⁻¹ Cᵀ) λ = rhs`.
    pub fn solve_saddle(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.saddle.solve(rhs)
    }

    /// Constrained rate `ẋ = M⁻¹(f + Cᵀλ)` together with its multipliers.
    pub fn constrained_rate(
        &self,
        cs: &ConstraintSet,
        metric: &EnergyMetric,
        force: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let lambda = self.multipliers(cs, metric, force, None);
        let rate = metric.solve_flat(force) + &self.minv_ct * &lambda;
        (rate, lambda)
    }
}

/// Everything one grid and one ρ determine: operators, metric, constraints,
/// and the cached multiplier factorization. Immutable once built; shared
/// read-only across workers.
pub struct Discretization {
    pub config: GeometryConfig,
    pub topo: GridTopology,
    pub fluid: FluidOperators,
    pub plate: PlateOperators,
    pub metric: EnergyMetric,
    /// Interface interpolation from plate vertices to `Ω` face values.
    pub interface: DMatrix<f64>,
    pub constraints: ConstraintSet,
    pub multiplier: MultiplierSolver,
    pub rho: f64,
}

impl Discretization {
    pub fn new(config: GeometryConfig, rho: f64) -> Result<Arc<Self>> {
        let topo = build_grid(&config)?;
        let fluid = assemble_fluid_ops(&topo);
        let plate = assemble_plate_ops(&topo, rho)?;
        let metric = energy_metric(&fluid, &plate)?;
        let interface = interface_matrix(&topo);
        let constraints = build_constraints(&topo, &fluid, &interface);
        let multiplier = MultiplierSolver::new(&constraints, &metric)?;
        Ok(Arc::new(Discretization {
            config,
            topo,
            fluid,
            plate,
            metric,
            interface,
            constraints,
            multiplier,
            rho,
        }))
    }

    pub fn face_count(&self) -> usize {
        self.topo.total_faces()
    }

    pub fn plate_count(&self) -> usize {
        self.plate.count
    }

    pub fn flat_dim(&self) -> usize {
        self.face_count() + 2 * self.plate_count()
    }

    pub fn zero_state(&self) -> State {
        State::zeros(self.face_count(), self.plate_count())
    }

    pub fn state_from_flat(&self, x: &DVector<f64>) -> State {
        State::from_flat(x, self.face_count(), self.plate_count())
    }

    pub fn complex_state_from_flat(&self, x: &DVector<C64>) -> ComplexState {
        ComplexState::from_flat(x, self.face_count(), self.plate_count())
    }

    /// Block drift `[-K_visc u; K_plate w₂; -K_plate w₁]` as a flat force.
    pub fn drift_force(&self, s: &State) -> DVector<f64> {
        let (nf, m) = (self.face_count(), self.plate_count());
        let mut f = DVector::zeros(nf + 2 * m);
        f.rows_mut(0, nf)
            .copy_from(&(-(&self.fluid.viscous_form * &s.fluid)));
        f.rows_mut(nf, m)
            .copy_from(&(&self.plate.bilaplacian_form * &s.velocity));
        f.rows_mut(nf + m, m)
            .copy_from(&(-(&self.plate.bilaplacian_form * &s.displacement)));
        f
    }

    /// Dense drift matrix (flat-space quadratic form against the metric).
    pub fn drift_matrix(&self) -> DMatrix<f64> {
        let (nf, m) = (self.face_count(), self.plate_count());
        let mut b = DMatrix::zeros(nf + 2 * m, nf + 2 * m);
        b.view_mut((0, 0), (nf, nf))
            .copy_from(&(-&self.fluid.viscous_form));
        b.view_mut((nf, nf + m), (m, m))
            .copy_from(&self.plate.bilaplacian_form);
        b.view_mut((nf + m, nf), (m, m))
            .copy_from(&(-&self.plate.bilaplacian_form));
        b
    }

    /// Worst violation among the essential fluid constraints
    /// (divergence, wall trace, interface matching).
    pub fn essential_constraint_residual(&self, s: &State) -> f64 {
        let div = (&self.fluid.divergence * &s.fluid).amax();
        let wall = self
            .topo
            .s_faces()
            .iter()
            .map(|&f| s.fluid[f].abs())
            .fold(0.0, f64::max);
        let matched = &self.interface * &s.velocity;
        let interface = self
            .topo
            .omega_faces()
            .iter()
            .enumerate()
            .map(|(k, &f)| (s.fluid[f] - matched[k]).abs())
            .fold(0.0, f64::max);
        div.max(wall).max(interface)
    }

    /// Worst violation among all manifold conditions, including the
    /// mean gauges on the plate fields.
    pub fn constraint_residual(&self, s: &State) -> f64 {
        let essential = self.essential_constraint_residual(s);
        let mean_w1 = self.plate.mean(&s.displacement).abs();
        let mean_w2 = self.plate.mean(&s.velocity).abs();
        essential.max(mean_w1).max(mean_w2)
    }

    /// Scale of a state for relative residual checks.
    pub fn state_scale(&self, s: &State) -> f64 {
        s.fluid.amax().max(s.displacement.amax()).max(s.velocity.amax())
    }

    /// Cell ids of the cells just below the `Ω` faces, in face order.
    pub fn omega_adjacent_cells(&self) -> Vec<usize> {
        let d = self.topo.dim();
        let n = self.topo.cells_per_side();
        self.topo
            .omega_faces()
            .iter()
            .map(|&f| {
                let (_, idx) = self.topo.face_multi_index(f);
                let mut cell = idx;
                cell[d - 1] = n - 1;
                self.topo.cell_id(&cell[..d])
            })
            .collect()
    }

    /// Pressure block of a multiplier vector, converted to physical units.
    pub fn pressure_from_multipliers(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let cells = self.constraints.div_rows.len();
        let scale = 1.0 / self.fluid.face_weight();
        DVector::from_fn(cells, |c, _| lambda[c] * scale)
    }

    /// Interface-traction block of a multiplier vector.
    pub fn traction_from_multipliers(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let r = self.constraints.omega_rows.clone();
        DVector::from_iterator(r.len(), lambda.rows(r.start, r.len()).iter().cloned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DimMode;
    use crate::linalg::{random_vector, seeded_rng};

    #[test]
    fn kernel_dimension_matches_counting() {
        // 2-D: (n-1)² stream modes + twice the mean-free plate dimension.
        for n in [4usize, 8, 16] {
            let core = Discretization::new(GeometryConfig::new(DimMode::Analogue2d, n), 0.0).unwrap();
            let expect = (n - 1) * (n - 1) + 2 * (n - 2);
            assert_eq!(core.constraints.kernel_dim, expect, "n={n}");
        }
        for n in [2usize, 3] {
            let core = Discretization::new(GeometryConfig::new(DimMode::Box3d, n), 0.0).unwrap();
            let m = (n - 1) * (n - 1);
            let expect = 3 * n * n * (n + 1) + 2 * m - (n * n * n + 5 * n * n + n * n + 1);
            assert_eq!(core.constraints.kernel_dim, expect, "n={n}");
        }
    }

    #[test]
    fn constrained_rate_lands_in_kernel() {
        let core = Discretization::new(GeometryConfig::new(DimMode::Analogue2d, 6), 0.5).unwrap();
        let mut rng = seeded_rng(9);
        let f = random_vector(&mut rng, core.flat_dim());
        let (rate, _) = core
            .multiplier
            .constrained_rate(&core.constraints, &core.metric, &f);
        let violation = (&core.constraints.matrix * &rate).amax();
        assert!(violation < 1e-9, "constraint violation {violation}");
    }
}
