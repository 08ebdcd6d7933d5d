//! Stationary solves: the constructive inverse at frequency zero and
//! resolvent solves along the imaginary axis.
//!
//! The inverse at zero follows a constructive recipe whose steps are
//! meaningful on their own:
//!
//! 1. the new plate velocity is the displacement datum;
//! 2. a stationary Stokes solve lifts that velocity into the cavity and
//!    produces a mean-zero pressure;
//! 3. a clamped biharmonic solve driven by the interface traction and the
//!    velocity datum recovers the displacement;
//! 4. the displacement is shifted to its mean-free representative, which
//!    simultaneously fixes the pressure gauge: removing `c·φ` from the
//!    displacement (φ the unit-load deflection) shifts the pressure by
//!    the constant `-c`.
//!
//! The recipe inverts the reduced generator to factorization round-off,
//! and its step-4 pressure coincides with the harmonic-extension
//! reconstruction of the pressure module.

use crate::error::{Error, Result};
use crate::generator::{apply_generator_complex, Generator};
use crate::linalg::{complexify, smallest_singular_value, CMatrix};
use crate::operators::{apply_real, PlateOperators};
use crate::state::{ComplexState, State, C64};
use crate::stokes::StokesSolver;
use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};

/// Projection onto mean-free plate displacements along the unit-load
/// deflection `φ` (`Δ²φ = 1`, clamped). The complement is one-dimensional
/// and orthogonal in the `(Δ·, Δ·)` form, because `Δ²φ` is constant.
pub struct MeanFreeProjector {
    /// Unit-load deflection `φ`.
    pub deflection: DVector<f64>,
    deflection_mean: f64,
}

/// Builds the projector from the plate operators.
pub fn build_projection(plate: &PlateOperators) -> Result<MeanFreeProjector> {
    let deflection = plate.unit_load_deflection();
    let deflection_mean = plate.mean(&deflection);
    if deflection_mean <= 0.0 {
        return Err(Error::numerics(
            "unit-load deflection has nonpositive mean; clamped closure broken",
        ));
    }
    Ok(MeanFreeProjector {
        deflection,
        deflection_mean,
    })
}

impl MeanFreeProjector {
    /// Coefficient `c` with `(I - P) w = c φ`.
    pub fn complement_coefficient(&self, plate: &PlateOperators, w: &DVector<f64>) -> f64 {
        plate.mean(w) / self.deflection_mean
    }

    /// Mean-free part `P w = w - c φ`.
    pub fn apply(&self, plate: &PlateOperators, w: &DVector<f64>) -> DVector<f64> {
        let c = self.complement_coefficient(plate, w);
        w - &self.deflection * c
    }
}

/// Residuals and identity checks attached to a stationary solve.
#[derive(Debug, Clone)]
pub struct ResolventDiagnostics {
    /// `‖(iβ - A) y - y*‖ / ‖y*‖` in the energy norm.
    pub residual: f64,
    /// Relative gap in `‖∇u‖² = Re⟨y*, y⟩`.
    pub dissipation_gap: f64,
    /// Max-norm gap in the interface relation `iβ w₁ = u·ν − w₁*`,
    /// evaluated at the interface faces.
    pub trace_gap: f64,
    /// For the constructive inverse: relative gap between the step-4
    /// pressure and the harmonic-extension reconstruction.
    pub pressure_match: Option<f64>,
}

/// A stationary solution `(iβ - A) y = y*` with its pressure and checks.
pub struct ResolventSolution {
    pub beta: f64,
    pub state: ComplexState,
    pub pressure: DVector<C64>,
    pub data: ComplexState,
    pub diagnostics: ResolventDiagnostics,
}

fn complex_amax(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Interface relation of the resolvent system `(iβ - A) y = y*`: the
/// second block forces `w₂ = iβ w₁ - w₁*`, so the fluid trace satisfies
/// `u·ν = T(iβ w₁ - w₁*)` face by face.
fn trace_gap(gen: &Generator, beta: f64, y: &ComplexState, data: &ComplexState) -> f64 {
    let core = &gen.core;
    let ib = C64::new(0.0, beta);
    let lhs = apply_real(&core.interface, &y.displacement) * ib
        - apply_real(&core.interface, &data.displacement);
    let mut worst = 0.0f64;
    for (k, &f) in core.topo.omega_faces().iter().enumerate() {
        worst = worst.max((y.fluid[f] - lhs[k]).norm());
    }
    let scale = complex_amax(&y.fluid)
        .max(complex_amax(&data.displacement))
        .max(1.0);
    worst / scale
}

fn dissipation_gap(gen: &Generator, y: &ComplexState, data: &ComplexState) -> f64 {
    let grad = gen.core.fluid.dirichlet_energy_complex(&y.fluid);
    let pairing = gen.core.metric.inner_complex(data, y).re;
    (grad - pairing).abs() / grad.abs().max(1e-30)
}

/// Inverts the generator at frequency zero by the constructive recipe.
///
/// The datum must be a constrained state; its displacement block must be
/// mean-free (the solvability condition for the interface lift: the plate
/// velocity it prescribes must carry zero net flux).
pub fn invert_at_zero(
    gen: &Generator,
    proj: &MeanFreeProjector,
    stokes: &StokesSolver,
    data: &State,
) -> Result<ResolventSolution> {
    let core = &gen.core;
    let scale = core.state_scale(data).max(1e-300);
    let resid = core.constraint_residual(data);
    if resid > 1e-8 * scale {
        return Err(Error::numerics(format!(
            "datum violates the energy-space constraints (residual {resid:.3e})"
        )));
    }
    let mean_w1 = core.plate.mean(&data.displacement).abs();
    if mean_w1 > 1e-10 * scale {
        return Err(Error::numerics(format!(
            "datum displacement has nonzero interface mean ({mean_w1:.3e}); \
             the prescribed interface velocity must carry zero net flux"
        )));
    }

    // Step 1: the plate velocity is resolved immediately.
    let velocity = data.displacement.clone();

    // Step 2: stationary Stokes lift of that velocity, forced by the
    // fluid datum.
    let hd = core.fluid.face_weight();
    let force = &data.fluid * hd;
    let mut boundary = DVector::zeros(core.face_count());
    let tvals = &core.interface * &velocity;
    for (k, &f) in core.topo.omega_faces().iter().enumerate() {
        boundary[f] = tvals[k];
    }
    let flow = stokes.solve(&force, &boundary)?;

    // Step 3: clamped biharmonic solve driven by the interface traction
    // and the velocity datum.
    let omega_traction = DVector::from_iterator(
        core.topo.omega_faces().len(),
        core.topo.omega_faces().iter().map(|&f| flow.traction[f]),
    );
    let rhs = core.interface.transpose() * omega_traction
        - core.plate.apply_inertia(&data.velocity) * core.plate.node_mass;
    let displacement_hat = core.plate.solve_bilaplacian_form(&rhs);

    // Step 4: mean-free representative; the same shift fixes the
    // pressure gauge.
    let gauge_shift = proj.complement_coefficient(&core.plate, &displacement_hat);
    let displacement = &displacement_hat - &proj.deflection * gauge_shift;
    let pressure = flow.pressure.add_scalar(-gauge_shift);

    let y = State {
        fluid: flow.velocity,
        displacement,
        velocity,
    };

    // Verification: forward application reproduces the datum, and the
    // step-4 pressure matches the harmonic-extension reconstruction.
    let yc = y.to_complex();
    let datac = data.to_complex();
    let applied = apply_generator_complex(gen, &yc);
    let diff = ComplexState {
        fluid: &applied.fluid - &datac.fluid,
        displacement: &applied.displacement - &datac.displacement,
        velocity: &applied.velocity - &datac.velocity,
    };
    let data_norm = gen.core.metric.norm_complex(&datac).max(1e-300);
    let residual = gen.core.metric.norm_complex(&diff) / data_norm;

    let reconstructed = gen.maps.pressure_from_state(&y)?;
    let pressure_gap = (&reconstructed - &pressure).amax()
        / reconstructed.amax().max(pressure.amax()).max(1e-300);

    // The constructive inverse solves `A y = d`, which is the resolvent
    // system at β = 0 with datum `-d`; the identity checks use that sign.
    let negated = ComplexState {
        fluid: -&datac.fluid,
        displacement: -&datac.displacement,
        velocity: -&datac.velocity,
    };
    let diagnostics = ResolventDiagnostics {
        residual,
        dissipation_gap: dissipation_gap(gen, &yc, &negated),
        trace_gap: trace_gap(gen, 0.0, &yc, &negated),
        pressure_match: Some(pressure_gap),
    };

    Ok(ResolventSolution {
        beta: 0.0,
        state: yc,
        pressure: pressure.map(|v| C64::new(v, 0.0)),
        data: datac,
        diagnostics,
    })
}

/// Cached complex factorization of `iβ - A` (and its adjoint, for the
/// smallest-singular-value iterations of the spectral sweeps).
pub struct ShiftedSolver {
    pub beta: f64,
    matrix: CMatrix,
    lu: LU<C64, Dyn, Dyn>,
    lu_adjoint: LU<C64, Dyn, Dyn>,
}

impl ShiftedSolver {
    pub fn new(gen: &Generator, beta: f64) -> Self {
        let r = gen.reduced_dim;
        let mut h = complexify(&(-&gen.reduced));
        for i in 0..r {
            h[(i, i)] += C64::new(0.0, beta);
        }
        ShiftedSolver {
            beta,
            lu: LU::new(h.clone()),
            lu_adjoint: LU::new(h.adjoint()),
            matrix: h,
        }
    }

    pub fn solve(&self, rhs: &DVector<C64>) -> Result<DVector<C64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::numerics("shifted system singular"))
    }

    pub fn solve_adjoint(&self, rhs: &DVector<C64>) -> Result<DVector<C64>> {
        self.lu_adjoint
            .solve(rhs)
            .ok_or_else(|| Error::numerics("adjoint shifted system singular"))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `1 / σ_min(iβ - A)`, the energy-metric resolvent norm at this shift.
    pub fn resolvent_norm(&self, seed: u64) -> Result<f64> {
        Ok(1.0 / smallest_singular_value(&self.matrix, seed)?)
    }
}

/// Solves `(iβ - A) y = y*` in reduced coordinates with a cached shift.
pub fn solve_resolvent_with(
    gen: &Generator,
    shift: &ShiftedSolver,
    data: &ComplexState,
) -> Result<ResolventSolution> {
    let d = gen.reduce_complex(data);
    let z = shift.solve(&d)?;
    let resid = complex_amax(&(shift.matrix() * &z - &d));
    let dnorm = d.norm().max(1e-300);
    if resid > 1e-6 * dnorm {
        // A genuinely singular shift cannot occur for a dissipative,
        // invertible generator; report the nearest eigenvalue to help
        // diagnose a broken assembly.
        let eigs = gen.reduced.clone().complex_eigenvalues();
        let target = C64::new(0.0, shift.beta);
        let nearest = eigs
            .iter()
            .min_by(|a, b| {
                (*a - target)
                    .norm()
                    .partial_cmp(&(*b - target).norm())
                    .unwrap()
            })
            .cloned()
            .unwrap_or_default();
        return Err(Error::numerics(format!(
            "resolvent solve at beta = {} lost accuracy (residual {resid:.3e}); \
             nearest eigenvalue {nearest}",
            shift.beta
        )));
    }

    let y = gen.lift_complex(&z);
    let pressure = gen.maps.pressure_from_complex_state(&y)?;
    let residual = (shift.matrix() * &z - &d).norm() / dnorm;
    let diagnostics = ResolventDiagnostics {
        residual,
        dissipation_gap: dissipation_gap(gen, &y, data),
        trace_gap: trace_gap(gen, shift.beta, &y, data),
        pressure_match: None,
    };
    Ok(ResolventSolution {
        beta: shift.beta,
        state: y,
        pressure,
        data: data.clone(),
        diagnostics,
    })
}

/// Convenience single solve at one frequency.
pub fn solve_resolvent(gen: &Generator, beta: f64, data: &ComplexState) -> Result<ResolventSolution> {
    let shift = ShiftedSolver::new(gen, beta);
    solve_resolvent_with(gen, &shift, data)
}

/// Both sides of the integration-by-parts identity connecting the
/// interface pressure pairing with the stationary flow lift of the
/// displacement, together with their gap.
#[derive(Debug, Clone)]
pub struct LiftIdentityReport {
    pub interface_side: C64,
    pub volume_side: C64,
    pub gap: f64,
}

/// Solves the stationary lift of the displacement and evaluates the
/// identity `(p|_Ω, w₁) = -iβ(u, ψ) - (∇u, ∇ψ) + (u*, ψ)`.
pub fn auxiliary_lift_diagnostic(
    gen: &Generator,
    stokes: &StokesSolver,
    sol: &ResolventSolution,
) -> Result<LiftIdentityReport> {
    let core = &gen.core;
    let w1 = &sol.state.displacement;
    let scale = complex_amax(w1).max(1e-300);
    let mean = core.plate.mean(&w1.map(|z| z.re)).abs().max(core.plate.mean(&w1.map(|z| z.im)).abs());
    if mean > 1e-10 * scale {
        return Err(Error::numerics(format!(
            "lift data has nonzero interface mean ({mean:.3e}); \
             the stationary lift is only solvable for mean-free displacements"
        )));
    }

    // Lift ψ with ψ·ν = (interpolated w₁) on the interface, ψ = 0 on the wall.
    let zero_force = DVector::zeros(core.face_count());
    let mut lift = |w: &DVector<f64>| -> Result<DVector<f64>> {
        let mut boundary = DVector::zeros(core.face_count());
        let tvals = &core.interface * w;
        for (k, &f) in core.topo.omega_faces().iter().enumerate() {
            boundary[f] = tvals[k];
        }
        Ok(stokes.solve(&zero_force, &boundary)?.velocity)
    };
    let psi_re = lift(&w1.map(|z| z.re))?;
    let psi_im = lift(&w1.map(|z| z.im))?;
    let psi = psi_re.zip_map(&psi_im, |a, b| C64::new(a, b));

    // Interface side: the pressure trace paired with the displacement.
    // Second-order one-sided extrapolation from the two cells under each
    // interface face.
    let cells = core.omega_adjacent_cells();
    let topo = &core.topo;
    let n = topo.cells_per_side();
    let d = topo.dim();
    let face_trace = DVector::from_fn(cells.len(), |k, _| {
        let mut below = topo.cell_multi_index(cells[k]);
        below[d - 1] = n - 2;
        let b = topo.cell_id(&below[..d]);
        sol.pressure[cells[k]] * C64::new(1.5, 0.0) - sol.pressure[b] * C64::new(0.5, 0.0)
    });
    let node_trace = {
        let re = core.interface.transpose() * face_trace.map(|z| z.re);
        let im = core.interface.transpose() * face_trace.map(|z| z.im);
        re.zip_map(&im, |a, b| C64::new(a, b))
    };
    let interface_side = w1.dotc(&node_trace) * C64::new(core.plate.node_mass, 0.0);

    // Volume side: -iβ(u, ψ) - (∇u, ∇ψ) + (u*, ψ).
    let hd = core.fluid.face_weight();
    let u = &sol.state.fluid;
    let u_star = &sol.data.fluid;
    let ib = C64::new(0.0, sol.beta);
    let mass_term = psi.dotc(u) * C64::new(hd, 0.0);
    let visc_term = psi.dotc(&apply_real(&core.fluid.viscous_form, u));
    let data_term = psi.dotc(u_star) * C64::new(hd, 0.0);
    let volume_side = -ib * mass_term - visc_term + data_term;

    Ok(LiftIdentityReport {
        interface_side,
        volume_side,
        gap: (interface_side - volume_side).norm(),
    })
}

/// Dense-inverse resolvent norm (test oracle at tiny scale).
pub fn dense_resolvent_norm(gen: &Generator, beta: f64) -> Result<f64> {
    let r = gen.reduced_dim;
    let mut h = complexify(&(-&gen.reduced));
    for i in 0..r {
        h[(i, i)] += C64::new(0.0, beta);
    }
    let inv = h
        .try_inverse()
        .ok_or_else(|| Error::numerics("shifted matrix singular"))?;
    // Operator two-norm via the Hermitian eigenvalues of inv^H inv.
    let normal = inv.adjoint() * &inv;
    let eig = nalgebra::linalg::SymmetricEigen::new(normal);
    Ok(eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt())
}
