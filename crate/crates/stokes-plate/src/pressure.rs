//! Pressure elimination by harmonic extension.
//!
//! In the continuous model the pressure is the harmonic extension of
//! boundary data assembled from the plate load and the viscous traces,
//! with a Robin closure on the elastic patch:
//!
//! ```text
//!   Δp = 0 in O,
//!   ∂p/∂ν = (Δu)·ν            on S,
//!   ∂p/∂ν + P_ρ⁻¹ p = P_ρ⁻¹ Δ²w + Δu·ν   on Ω,
//! ```
//!
//! so that `p = G₁(w) + G₂(u)` splits into a displacement-driven and a
//! velocity-driven harmonic extension.
//!
//! Discretely the same object is the divergence block of the constraint
//! multiplier for the block drift (see [`crate::model`]): the saddle rows
//! restricted to cells form exactly a cell-centered Laplacian with a
//! Neumann closure on `S` and a Robin-type closure on `Ω` whose weight is
//! the interface-interpolated inverse inertia. One cached factorization
//! per (grid, ρ) serves every solve; distinct right-hand sides may be
//! solved concurrently.

use crate::error::{Error, Result};
use crate::model::Discretization;
use crate::state::{ComplexState, State, C64};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Harmonic-extension solver with the Robin interface closure.
///
/// Wraps the shared multiplier factorization; `solve` realizes both Robin
/// branches (data on `Ω`, data on `S`) in one call, with either trace
/// zeroed as needed.
pub struct RobinSolver {
    core: Arc<Discretization>,
}

impl RobinSolver {
    pub fn new(core: Arc<Discretization>) -> Self {
        RobinSolver { core }
    }

    pub fn rho(&self) -> f64 {
        self.core.rho
    }

    pub fn core(&self) -> &Arc<Discretization> {
        &self.core
    }

    /// Solves the mixed Neumann/Robin boundary value problem.
    ///
    /// `g_omega` holds the Robin data at plate vertices; `g_s` holds the
    /// outward normal-derivative data at `S` faces (ordered as
    /// `topo.s_faces()`). Returns the cell pressure field.
    pub fn solve(&self, g_omega: &DVector<f64>, g_s: &DVector<f64>) -> Result<DVector<f64>> {
        let core = &self.core;
        let m = core.plate_count();
        let n_s = core.topo.s_faces().len();
        if g_omega.len() != m {
            return Err(Error::config(format!(
                "robin data on the interface must have {} vertex values, got {}",
                m,
                g_omega.len()
            )));
        }
        if g_s.len() != n_s {
            return Err(Error::config(format!(
                "robin data on the wall must have {} face values, got {}",
                n_s,
                g_s.len()
            )));
        }

        // Interface data enters as a plate load: with g = P⁻¹Δ²w the load
        // is exactly the clamped bilaplacian of w.
        let mut force = DVector::zeros(core.flat_dim());
        let load = core.plate.apply_inertia(g_omega) * core.plate.node_mass;
        force
            .rows_mut(core.face_count() + m, m)
            .copy_from(&(-&load));

        // Wall data enters the flux balance of the wall-adjacent cell:
        // outward flux `g` through the wall face adds `g/h` to its cell
        // equation, independently of the wall's orientation.
        let mut extra = DVector::zeros(core.constraints.matrix.nrows());
        let h = core.topo.spacing();
        for (i, &f) in core.topo.s_faces().iter().enumerate() {
            let col = core.fluid.divergence.column(f);
            for (cell, &coef) in col.iter().enumerate() {
                if coef != 0.0 {
                    extra[cell] += g_s[i] / h;
                }
            }
        }

        let lambda = core
            .multiplier
            .multipliers(&core.constraints, &core.metric, &force, Some(&extra));
        Ok(core.pressure_from_multipliers(&lambda))
    }

    /// Max-norm residual of the cell-centered five-point Laplacian at
    /// cells whose entire stencil stays inside the cavity.
    pub fn interior_laplacian_residual(&self, p: &DVector<f64>) -> f64 {
        interior_laplacian_residual(&self.core, p)
    }

    /// First-order evaluation of the `Ω` Robin closure residual
    /// `∂p/∂ν + P⁻¹ p|_Ω - g` at the plate vertices.
    pub fn omega_robin_residual(&self, p: &DVector<f64>, g_omega: &DVector<f64>) -> f64 {
        let core = &self.core;
        let topo = &core.topo;
        let n = topo.cells_per_side();
        let h = topo.spacing();
        let omega = topo.omega_faces().len();
        let mut dn = DVector::zeros(omega);
        let mut trace = DVector::zeros(omega);
        for k in 0..omega {
            let f = topo.omega_faces()[k];
            let (_, idx) = topo.face_multi_index(f);
            let mut top = idx;
            top[topo.dim() - 1] = n - 1;
            let mut below = top;
            below[topo.dim() - 1] = n - 2;
            let c_top = topo.cell_id(&top[..topo.dim()]);
            let c_below = topo.cell_id(&below[..topo.dim()]);
            dn[k] = (p[c_top] - p[c_below]) / h;
            trace[k] = 1.5 * p[c_top] - 0.5 * p[c_below];
        }
        // Pull face values to vertices (adjoint interpolation has unit
        // column sums), apply the inverse inertia to the trace.
        let t = &core.interface;
        let dn_nodes = t.transpose() * dn;
        let tr_nodes = core.plate.solve_inertia(&(t.transpose() * trace));
        (dn_nodes + tr_nodes - g_omega).amax()
    }
}

/// The two harmonic-extension maps reconstructing the pressure from the
/// plate displacement and from the fluid velocity.
pub struct PressureMaps {
    robin: RobinSolver,
}

impl PressureMaps {
    pub fn new(core: Arc<Discretization>) -> Self {
        PressureMaps {
            robin: RobinSolver::new(core),
        }
    }

    pub fn robin(&self) -> &RobinSolver {
        &self.robin
    }

    pub fn core(&self) -> &Arc<Discretization> {
        self.robin.core()
    }

    /// Displacement-driven pressure `G₁(w)`; depends on `w` only through
    /// the inertia-weighted bilaplacian.
    pub fn from_displacement(&self, w: &DVector<f64>) -> DVector<f64> {
        let core = self.core();
        let (nf, m) = (core.face_count(), core.plate_count());
        let mut force = DVector::zeros(core.flat_dim());
        force
            .rows_mut(nf + m, m)
            .copy_from(&(-(&core.plate.bilaplacian_form * w)));
        let lambda = core
            .multiplier
            .multipliers(&core.constraints, &core.metric, &force, None);
        core.pressure_from_multipliers(&lambda)
    }

    /// Velocity-driven pressure `G₂(u)`; depends on `u` only through the
    /// boundary behaviour of its discrete Laplacian.
    pub fn from_fluid(&self, u: &DVector<f64>) -> DVector<f64> {
        let core = self.core();
        let nf = core.face_count();
        let mut force = DVector::zeros(core.flat_dim());
        force
            .rows_mut(0, nf)
            .copy_from(&(-(&core.fluid.viscous_form * u)));
        let lambda = core
            .multiplier
            .multipliers(&core.constraints, &core.metric, &force, None);
        core.pressure_from_multipliers(&lambda)
    }

    /// Pressure of a state: `p = G₁(w₁) + G₂(u)`, realized as the exact
    /// constraint multiplier of the block drift.
    ///
    /// Requires the essential fluid constraints (divergence, wall trace,
    /// interface matching); the displacement mean gauge is deliberately
    /// not required, since the pressure of a clamped plate depends on the
    /// full displacement, not its mean-free representative.
    pub fn pressure_from_state(&self, s: &State) -> Result<DVector<f64>> {
        let core = self.core();
        let scale = core.state_scale(s).max(1.0);
        let resid = core.essential_constraint_residual(s);
        if resid > 1e-8 * scale {
            return Err(Error::numerics(format!(
                "state violates the essential constraints (residual {resid:.3e}); \
                 project it onto the energy space first"
            )));
        }
        let force = core.drift_force(s);
        let lambda = core
            .multiplier
            .multipliers(&core.constraints, &core.metric, &force, None);
        Ok(core.pressure_from_multipliers(&lambda))
    }

    pub fn pressure_from_complex_state(&self, s: &ComplexState) -> Result<DVector<C64>> {
        let re = self.pressure_from_state(&s.real_part())?;
        let im = self.pressure_from_state(&s.imag_part())?;
        Ok(re.zip_map(&im, |a, b| C64::new(a, b)))
    }
}

/// Max-norm of the five-point cell Laplacian over fully interior cells.
pub fn interior_laplacian_residual(core: &Discretization, p: &DVector<f64>) -> f64 {
    let topo = &core.topo;
    let n = topo.cells_per_side();
    let d = topo.dim();
    let h2 = topo.spacing() * topo.spacing();
    let mut worst = 0.0f64;
    for cell in 0..topo.cell_count() {
        let idx = topo.cell_multi_index(cell);
        let interior = (0..d).all(|a| idx[a] >= 1 && idx[a] <= n - 2);
        if !interior {
            continue;
        }
        let mut acc = -2.0 * d as f64 * p[cell];
        for a in 0..d {
            for dir in [-1isize, 1] {
                let mut nb = idx;
                nb[a] = (nb[a] as isize + dir) as usize;
                acc += p[topo.cell_id(&nb[..d])];
            }
        }
        worst = worst.max((acc / h2).abs());
    }
    worst
}

/// Discrete H¹ norm (gradient seminorm plus L² norm) of a cell field,
/// used for the boundedness checks of the harmonic extension.
pub fn discrete_h1_norm(core: &Discretization, p: &DVector<f64>) -> f64 {
    let topo = &core.topo;
    let hd = core.fluid.face_weight();
    let mut grad_sq = 0.0;
    let g = -(core.fluid.divergence.transpose() * p);
    for f in 0..topo.total_faces() {
        if !topo.is_boundary_face(f) {
            grad_sq += hd * g[f] * g[f];
        }
    }
    let l2_sq: f64 = hd * p.norm_squared();
    (grad_sq + l2_sq).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DimMode, GeometryConfig};
    use crate::linalg::{random_vector, seeded_rng};

    fn core2d(n: usize, rho: f64) -> Arc<Discretization> {
        Discretization::new(GeometryConfig::new(DimMode::Analogue2d, n), rho).unwrap()
    }

    #[test]
    fn constant_interface_data_gives_constant_pressure() {
        let core = core2d(8, 0.0);
        let robin = RobinSolver::new(core.clone());
        let m = core.plate_count();
        let g = DVector::from_element(m, 2.75);
        let gs = DVector::zeros(core.topo.s_faces().len());
        let p = robin.solve(&g, &gs).unwrap();
        for c in 0..core.topo.cell_count() {
            assert!((p[c] - 2.75).abs() < 1e-10, "cell {c}: {}", p[c]);
        }
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let core = core2d(6, 0.3);
        let robin = RobinSolver::new(core.clone());
        let p = robin
            .solve(
                &DVector::zeros(core.plate_count()),
                &DVector::zeros(core.topo.s_faces().len()),
            )
            .unwrap();
        assert!(p.amax() < 1e-13);
    }

    #[test]
    fn random_data_is_discrete_harmonic_inside() {
        let core = core2d(8, 0.0);
        let robin = RobinSolver::new(core.clone());
        let mut rng = seeded_rng(21);
        let g = random_vector(&mut rng, core.plate_count());
        let gs = random_vector(&mut rng, core.topo.s_faces().len());
        let p = robin.solve(&g, &gs).unwrap();
        let resid = robin.interior_laplacian_residual(&p);
        assert!(
            resid <= 1e-10 * p.amax().max(1.0),
            "interior residual {resid}"
        );
    }

    #[test]
    fn manufactured_linear_field() {
        // p = x is harmonic; its Robin and Neumann data are known exactly.
        let errs: Vec<f64> = [8usize, 16]
            .iter()
            .map(|&n| {
                let core = core2d(n, 0.0);
                let robin = RobinSolver::new(core.clone());
                let g = DVector::from_fn(core.plate_count(), |j, _| {
                    core.topo.plate_node_position(j)[0]
                });
                let gs = DVector::from_fn(core.topo.s_faces().len(), |i, _| {
                    let f = core.topo.s_faces()[i];
                    let nu = core.topo.normal(f).unwrap();
                    nu[0] // ∂x/∂ν
                });
                let p = robin.solve(&g, &gs).unwrap();
                (0..core.topo.cell_count())
                    .map(|c| (p[c] - core.topo.cell_center(c)[0]).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] < 0.05, "n=8 error {}", errs[0]);
        assert!(errs[1] < errs[0], "no refinement improvement: {errs:?}");
    }

    #[test]
    fn deep_divergence_free_field_has_no_pressure() {
        // G₂ sees only boundary traces: a divergence-free field supported
        // well inside the cavity produces a vanishing pressure.
        let core = core2d(8, 0.0);
        let maps = PressureMaps::new(core.clone());
        // Stream-function bump at interior vertex (4,4), two cells from walls:
        // u = curl ψ with ψ supported on that single vertex.
        let topo = &core.topo;
        let h = topo.spacing();
        let mut u = DVector::zeros(core.face_count());
        let psi = 1.0;
        // Faces around vertex (4,4): ux = ∂ψ/∂y, uy = -∂ψ/∂x on the staggered grid.
        u[topo.face_id(0, &[4, 3])] = psi / h;
        u[topo.face_id(0, &[4, 4])] = -psi / h;
        u[topo.face_id(1, &[3, 4])] = -psi / h;
        u[topo.face_id(1, &[4, 4])] = psi / h;
        assert!((&core.fluid.divergence * &u).amax() < 1e-12);
        let p = maps.from_fluid(&u);
        assert!(p.amax() < 1e-10 * (1.0 / h), "pressure leaked: {}", p.amax());
    }

    #[test]
    fn displacement_map_feels_only_weighted_bilaplacian() {
        // Two displacement fields with the same P⁻¹Δ²w give the same G₁.
        let core = core2d(8, 0.7);
        let maps = PressureMaps::new(core.clone());
        let mut rng = seeded_rng(5);
        let w = random_vector(&mut rng, core.plate_count());
        let p1 = maps.from_displacement(&w);
        // Reconstruct a field with identical load through the robin data path.
        let g = core
            .plate
            .solve_inertia(&core.plate.bilaplacian(&w));
        let p2 = maps
            .robin()
            .solve(&g, &DVector::zeros(core.topo.s_faces().len()))
            .unwrap();
        assert!((&p1 - &p2).amax() < 1e-9 * p1.amax().max(1.0));
    }

    #[test]
    fn unit_load_deflection_pressurizes_to_one() {
        let core = core2d(8, 0.0);
        let maps = PressureMaps::new(core.clone());
        let phi = core.plate.unit_load_deflection();
        let mut s = core.zero_state();
        s.displacement = phi;
        let p = maps.pressure_from_state(&s).unwrap();
        for c in 0..core.topo.cell_count() {
            assert!((p[c] - 1.0).abs() < 1e-10, "cell {c}: {}", p[c]);
        }
    }

    #[test]
    fn pressure_rejects_unconstrained_states() {
        let core = core2d(6, 0.0);
        let maps = PressureMaps::new(core.clone());
        let mut rng = seeded_rng(31);
        let mut s = core.zero_state();
        s.fluid = random_vector(&mut rng, core.face_count());
        assert!(maps.pressure_from_state(&s).is_err());
    }
}
