//! Stationary Stokes saddle-point solves on the staggered grid.
//!
//! Solves, for a prescribed interior force and prescribed boundary face
//! values (with compatible net flux),
//!
//! ```text
//!   -K_visc u + Dᵀλ = force   at interior faces,
//!   D u = 0                   in every cell,
//!   Σ λ = 0                   (pressure gauge),
//! ```
//!
//! returning the velocity, the mean-zero pressure `q = λ / h^d`, and the
//! momentum residual at boundary faces (the traction the boundary exerts).
//! The factorization depends only on the grid and is cached for reuse
//! across lifts and constructive-inverse solves.

use crate::error::{Error, Result};
use crate::model::Discretization;
use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};
use std::sync::Arc;

pub struct StokesSolution {
    /// Velocity on all faces (boundary entries echo the prescribed data).
    pub velocity: DVector<f64>,
    /// Mean-zero cell pressure.
    pub pressure: DVector<f64>,
    /// Momentum residual `(-K_visc u + Dᵀλ - force)` at every face;
    /// zero at interior faces, the boundary traction elsewhere.
    pub traction: DVector<f64>,
    /// Gauge multiplier; vanishes for flux-compatible data.
    pub gauge: f64,
}

pub struct StokesSolver {
    core: Arc<Discretization>,
    interior_faces: Vec<usize>,
    lu: LU<f64, Dyn, Dyn>,
}

impl StokesSolver {
    pub fn new(core: Arc<Discretization>) -> Self {
        let topo = &core.topo;
        let interior_faces: Vec<usize> = (0..topo.total_faces())
            .filter(|&f| !topo.is_boundary_face(f))
            .collect();
        let ni = interior_faces.len();
        let cells = topo.cell_count();
        let dim = ni + cells + 1;

        let mut mat = DMatrix::zeros(dim, dim);
        for (a, &fa) in interior_faces.iter().enumerate() {
            for (b, &fb) in interior_faces.iter().enumerate() {
                mat[(a, b)] = core.fluid.viscous_form[(fa, fb)];
            }
            for c in 0..cells {
                let d = core.fluid.divergence[(c, fa)];
                mat[(a, ni + c)] = -d;
                mat[(ni + c, a)] = -d;
            }
        }
        for c in 0..cells {
            mat[(ni + c, ni + cells)] = 1.0;
            mat[(ni + cells, ni + c)] = 1.0;
        }
        StokesSolver {
            core,
            interior_faces,
            lu: LU::new(mat),
        }
    }

    pub fn core(&self) -> &Arc<Discretization> {
        &self.core
    }

    /// Solves with `force` on all faces (interior entries drive the
    /// momentum balance; boundary entries only enter the reported
    /// traction) and `boundary` carrying prescribed boundary face values.
    pub fn solve(&self, force: &DVector<f64>, boundary: &DVector<f64>) -> Result<StokesSolution> {
        let core = &self.core;
        let topo = &core.topo;
        let nf = topo.total_faces();
        let cells = topo.cell_count();
        let ni = self.interior_faces.len();

        // Compatibility: the prescribed data must carry no net flux.
        let mut bvals = DVector::zeros(nf);
        for f in 0..nf {
            if topo.is_boundary_face(f) {
                bvals[f] = boundary[f];
            }
        }
        let flux = core.fluid.boundary_flux(topo, &bvals);
        let scale = bvals.amax().max(1.0);
        if flux.abs() > 1e-10 * scale {
            return Err(Error::numerics(format!(
                "stationary flow data carries net boundary flux {flux:.3e}; \
                 the interface velocity must integrate to zero"
            )));
        }

        // Right-hand side.
        let kb = &core.fluid.viscous_form * &bvals;
        let db = &core.fluid.divergence * &bvals;
        let mut rhs = DVector::zeros(ni + cells + 1);
        for (a, &fa) in self.interior_faces.iter().enumerate() {
            rhs[a] = -force[fa] - kb[fa];
        }
        for c in 0..cells {
            rhs[ni + c] = db[c];
        }

        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::numerics("stationary Stokes system singular"))?;

        let mut velocity = bvals;
        for (a, &fa) in self.interior_faces.iter().enumerate() {
            velocity[fa] += sol[a];
        }
        let lambda = DVector::from_fn(cells, |c, _| sol[ni + c]);
        let gauge = sol[ni + cells];

        // Momentum residual on every face.
        let mut traction = -(&core.fluid.viscous_form * &velocity)
            + core.fluid.divergence.transpose() * &lambda
            - force;
        for &fa in &self.interior_faces {
            traction[fa] = 0.0;
        }

        let hd = core.fluid.face_weight();
        Ok(StokesSolution {
            velocity,
            pressure: lambda / hd,
            traction,
            gauge,
        })
    }
}
