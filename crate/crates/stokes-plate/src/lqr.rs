//! Linear-quadratic control of the coupled flow at desk scale.
//!
//! Two actuation channels:
//! * point loads on the plate interior, injected into the plate-velocity
//!   equation through the inverse inertia (the discrete load is the scaled
//!   indicator of the nearest plate vertex, so the control space stays a
//!   plain `ℝ^J`);
//! * normal-velocity control through a wall patch `Σ`, realized
//!   quasi-statically: each channel's stationary flow lift (with the net
//!   flux returned uniformly through the elastic face, since the cavity is
//!   closed) is projected onto the energy space.
//!
//! The quadratic cost integrates `‖R z‖² + ‖g‖²`; the synthesis solves the
//! algebraic Riccati equation by Newton iteration with dense Lyapunov
//! solves, or a finite-horizon backward sweep with the same implicit
//! midpoint discipline as the simulator. Both run in reduced coordinates,
//! where the metric is the identity.
//!
//! Discrete point loads do not converge as the grid refines (the
//! continuum delta is not a bounded functional on the energy space); the
//! honest report is the gain-norm growth table under refinement, not a
//! converged gain.

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::linalg::lyapunov_solve;
use crate::sim::{Integrator, StepScheme};
use crate::spectral::{compute_spectrum, SpectrumCount};
use crate::stokes::StokesSolver;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    PointPlate,
    BoundaryNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Identity on reduced coordinates (full-state energy observation).
    FullState,
    /// Plate displacement and velocity blocks in their energy norms.
    PlateOnly,
}

/// Actuation and observation maps in reduced coordinates.
pub struct ControlSetup {
    pub kind: ControlKind,
    pub input_dim: usize,
    /// Reduced control-to-state map (`reduced_dim × input_dim`).
    pub input_map: DMatrix<f64>,
    /// Observation map (`obs_dim × reduced_dim`).
    pub observation: DMatrix<f64>,
    pub horizon: Horizon,
    /// Point channels: (plate vertex, weight).
    pub point_nodes: Vec<(usize, f64)>,
    /// Boundary channels: wall faces of `Σ`.
    pub sigma_faces: Vec<usize>,
    /// Net flux each boundary channel drives through `Σ` (reported, not
    /// hidden: the closed cavity returns it through the elastic face).
    pub sigma_fluxes: Vec<f64>,
}

fn observation_matrix(gen: &Generator, obs: Observation) -> Result<DMatrix<f64>> {
    match obs {
        Observation::FullState => Ok(DMatrix::identity(gen.reduced_dim, gen.reduced_dim)),
        Observation::PlateOnly => {
            let core = &gen.core;
            let nf = core.face_count();
            let m = core.plate_count();
            let chol_k = nalgebra::linalg::Cholesky::new(core.plate.bilaplacian_form.clone())
                .ok_or_else(|| Error::numerics("displacement form not positive definite"))?;
            let chol_p = nalgebra::linalg::Cholesky::new(&core.plate.inertia * core.plate.node_mass)
                .ok_or_else(|| Error::numerics("velocity form not positive definite"))?;
            let w1_block = gen.basis.rows(nf, m).into_owned();
            let w2_block = gen.basis.rows(nf + m, m).into_owned();
            let mut r = DMatrix::zeros(2 * m, gen.reduced_dim);
            r.rows_mut(0, m)
                .copy_from(&(chol_k.l().transpose() * &w1_block));
            r.rows_mut(m, m)
                .copy_from(&(chol_p.l().transpose() * &w2_block));
            Ok(r)
        }
    }
}

/// Discrete point-load density before the inertia inverse: the scaled
/// indicator of a plate vertex (`weight / h^plate_dim`).
pub fn point_injection_density(gen: &Generator, node: usize, weight: f64) -> DVector<f64> {
    let mut v = DVector::zeros(gen.core.plate_count());
    v[node] = weight / gen.core.plate.node_mass;
    v
}

/// Builds point control at interior locations `ξ_j` with weights `a_j`.
pub fn build_point_control(
    gen: &Generator,
    points: &[(Vec<f64>, f64)],
    observation: Observation,
    horizon: Horizon,
) -> Result<ControlSetup> {
    if points.is_empty() {
        return Err(Error::config("point control needs at least one location"));
    }
    let core = &gen.core;
    let dp = core.topo.dim() - 1;
    let h = core.topo.spacing();
    let m_axis = core.topo.plate_nodes_per_axis();

    let mut point_nodes = Vec::new();
    let mut input_map = DMatrix::zeros(gen.reduced_dim, points.len());
    for (j, (xi, weight)) in points.iter().enumerate() {
        if xi.len() != dp {
            return Err(Error::config(format!(
                "control location {j} has {} coordinates, the plate is {dp}-dimensional",
                xi.len()
            )));
        }
        for &c in xi {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::config(format!(
                    "control location {j} lies on or outside the plate boundary: {xi:?}"
                )));
            }
        }
        let vert: Vec<usize> = xi
            .iter()
            .map(|&c| ((c / h).round() as usize).clamp(1, m_axis))
            .collect();
        let node = core.topo.plate_node_id(&vert);
        point_nodes.push((node, *weight));

        // Forcing (0, 0, P⁻¹ δ) projected onto the energy space: the
        // metric cancels the inertia, leaving the bare vertex indicator.
        let mut flat = DVector::zeros(core.flat_dim());
        flat[core.face_count() + core.plate_count() + node] = *weight;
        input_map.set_column(j, &(gen.basis.transpose() * flat));
    }

    Ok(ControlSetup {
        kind: ControlKind::PointPlate,
        input_dim: points.len(),
        input_map,
        observation: observation_matrix(gen, observation)?,
        horizon,
        point_nodes,
        sigma_faces: Vec::new(),
        sigma_fluxes: Vec::new(),
    })
}

/// Builds boundary normal-velocity control through the wall faces `sigma`.
pub fn build_boundary_control(
    gen: &Generator,
    sigma: &[usize],
    observation: Observation,
    horizon: Horizon,
) -> Result<ControlSetup> {
    if sigma.is_empty() {
        return Err(Error::config("boundary control needs a nonempty patch"));
    }
    let core = &gen.core;
    let topo = &core.topo;
    for &f in sigma {
        match crate::geometry::classify_boundary(topo, f)? {
            crate::geometry::BoundaryPatch::S => {}
            crate::geometry::BoundaryPatch::Omega => {
                return Err(Error::config(format!(
                    "control patch face {f} lies on the elastic interface"
                )));
            }
        }
    }

    let stokes = StokesSolver::new(core.clone());
    let omega_count = topo.omega_faces().len() as f64;
    let area = core.fluid.face_weight() / topo.spacing();
    let mut input_map = DMatrix::zeros(gen.reduced_dim, sigma.len());
    let mut fluxes = Vec::with_capacity(sigma.len());

    for (j, &f) in sigma.iter().enumerate() {
        let nu = topo.normal(f)?;
        let (comp, _) = topo.face_multi_index(f);
        let mut boundary = DVector::zeros(core.face_count());
        // Unit outward normal velocity through this channel's face.
        boundary[f] = nu[comp];
        // The cavity is closed: return the flux uniformly through the
        // elastic face (the interface's zero-mean constraint forbids any
        // net flux there in the state itself; the lift carries it).
        let compensation = -1.0 / omega_count;
        for &of in topo.omega_faces() {
            boundary[of] = compensation;
        }
        let lift = stokes.solve(&DVector::zeros(core.face_count()), &boundary)?;
        fluxes.push(area * boundary[f] * nu[comp]);

        let mut flat = DVector::zeros(core.flat_dim());
        flat
            .rows_mut(0, core.face_count())
            .copy_from(&(&lift.velocity * core.fluid.face_weight()));
        input_map.set_column(j, &(gen.basis.transpose() * flat));
    }

    Ok(ControlSetup {
        kind: ControlKind::BoundaryNormal,
        input_dim: sigma.len(),
        input_map,
        observation: observation_matrix(gen, observation)?,
        horizon,
        point_nodes: Vec::new(),
        sigma_faces: sigma.to_vec(),
        sigma_fluxes: fluxes,
    })
}

/// Riccati synthesis output.
pub struct RiccatiSolution {
    pub horizon: Horizon,
    /// Stationary solution (infinite horizon) or value matrix at time 0.
    pub p: DMatrix<f64>,
    /// Feedback gain `K = Bᵀ P` (the optimal control is `g = -K z`).
    pub gain: DMatrix<f64>,
    /// Relative algebraic residual of the stationary equation.
    pub residual: f64,
    pub open_loop_abscissa: f64,
    pub closed_loop_abscissa: f64,
    /// Finite horizon: `(t, trace P(t))` samples of the backward sweep.
    pub trace_history: Vec<(f64, f64)>,
    pub iterations: usize,
}

fn are_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let bbt = b * b.transpose();
    let res = a.transpose() * p + p * a - p * &bbt * p + q;
    res.norm() / q.norm().max(1e-300)
}

fn abscissa_of(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves the LQR problem for the given setup.
///
/// Infinite horizon: Newton iteration on the algebraic Riccati equation,
/// each step a dense Lyapunov solve, starting from the uncontrolled
/// (stable) flow. Finite horizon: backward implicit-midpoint sweep of the
/// differential Riccati equation from the zero terminal condition.
pub fn solve_lqr(gen: &Generator, setup: &ControlSetup) -> Result<RiccatiSolution> {
    let a = &gen.reduced;
    let b = &setup.input_map;
    let q = setup.observation.transpose() * &setup.observation;
    let open_loop_abscissa = compute_spectrum(gen, SpectrumCount::Rightmost(1))?.abscissa;
    if open_loop_abscissa >= 0.0 {
        return Err(Error::numerics(format!(
            "open-loop generator unstable (abscissa {open_loop_abscissa:.3e}); \
             the infinite-horizon problem needs a stable or stabilizable plant"
        )));
    }

    match setup.horizon {
        Horizon::Infinite => {
            let mut p = DMatrix::zeros(gen.reduced_dim, gen.reduced_dim);
            let mut gain = DMatrix::zeros(setup.input_dim, gen.reduced_dim);
            let mut history = Vec::new();
            let mut residual = f64::INFINITY;
            let mut iterations = 0;
            for it in 0..60 {
                let a_cl = a - b * &gain;
                let rhs = &q + gain.transpose() * &gain;
                let p_next = lyapunov_solve(&a_cl, &rhs)?;
                let delta = (&p_next - &p).norm() / p_next.norm().max(1e-300);
                p = p_next;
                gain = b.transpose() * &p;
                residual = are_residual(a, b, &q, &p);
                history.push(residual);
                iterations = it + 1;
                if residual <= 1e-10 || delta <= 1e-14 {
                    break;
                }
            }
            if residual > 1e-8 {
                return Err(Error::numerics(format!(
                    "Riccati iteration stalled; residual history {history:?}"
                )));
            }
            let closed_loop_abscissa = abscissa_of(&(a - b * &gain));
            Ok(RiccatiSolution {
                horizon: Horizon::Infinite,
                p,
                gain,
                residual,
                open_loop_abscissa,
                closed_loop_abscissa,
                trace_history: Vec::new(),
                iterations,
            })
        }
        Horizon::Finite(t_final) => {
            if t_final <= 0.0 {
                return Err(Error::config("finite horizon must be positive"));
            }
            let dt = (t_final / 400.0).min(0.5 / open_loop_abscissa.abs().max(1.0));
            let steps = (t_final / dt).ceil() as usize;
            let riccati_rate = |p: &DMatrix<f64>| -> DMatrix<f64> {
                let bbt = b * b.transpose();
                a.transpose() * p + p * a - p * &bbt * p + &q
            };
            let mut p = DMatrix::zeros(gen.reduced_dim, gen.reduced_dim);
            let mut history = vec![(t_final, 0.0)];
            // Backward in time: with τ = T - t the sweep marches forward,
            // dP/dτ = AᵀP + PA - PBBᵀP + Q, implicit midpoint by fixed
            // point iteration.
            for k in 0..steps {
                let mut p_next = &p + riccati_rate(&p) * dt;
                for _ in 0..6 {
                    let mid = (&p + &p_next) * 0.5;
                    p_next = &p + riccati_rate(&mid) * dt;
                }
                p = (&p_next + p_next.transpose()) * 0.5;
                let t = t_final - (k + 1) as f64 * dt;
                history.push((t.max(0.0), p.trace()));
            }
            let gain = b.transpose() * &p;
            let residual = are_residual(a, b, &q, &p);
            let closed_loop_abscissa = abscissa_of(&(a - b * &gain));
            Ok(RiccatiSolution {
                horizon: Horizon::Finite(t_final),
                p,
                gain,
                residual,
                open_loop_abscissa,
                closed_loop_abscissa,
                trace_history: history,
                iterations: steps,
            })
        }
    }
}

/// Closed-form positive root of the scalar stationary Riccati equation
/// `2 a p - p² b² / r + q = 0`.
pub fn scalar_riccati(a: f64, b: f64, q: f64, r: f64) -> f64 {
    (a + (a * a + b * b * q / r).sqrt()) * r / (b * b)
}

/// Simulated quadratic cost `∫ ‖R z‖² + ‖g‖² dt` with the feedback
/// `g = -K z` (open loop when `gain` is `None`), trapezoidal in time.
pub fn simulate_cost(
    gen: &Generator,
    setup: &ControlSetup,
    gain: Option<&DMatrix<f64>>,
    z0: &DVector<f64>,
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    let a_cl = match gain {
        Some(k) => &gen.reduced - &setup.input_map * k,
        None => gen.reduced.clone(),
    };
    let integ = Integrator::for_matrix(a_cl, dt, StepScheme::ImplicitMidpoint)?;
    let running = |z: &DVector<f64>| -> f64 {
        let obs = &setup.observation * z;
        let mut total = obs.norm_squared();
        if let Some(k) = gain {
            total += (k * z).norm_squared();
        }
        total
    };
    let steps = (t_final / dt).ceil() as usize;
    let mut z = z0.clone();
    let mut cost = 0.5 * running(&z) * dt;
    for k in 0..steps {
        let (next, _) = integ.step(&z)?;
        let w = if k + 1 == steps { 0.5 } else { 1.0 };
        cost += w * running(&next) * dt;
        z = next;
    }
    Ok(cost)
}

/// Dimension of the Krylov space generated by the control channels;
/// saturation at the full reduced dimension is the desk-scale
/// controllability smoke test.
pub fn krylov_rank(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> usize {
    let n = a.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut frontier: Vec<DVector<f64>> = (0..b.ncols()).map(|j| b.column(j).into_owned()).collect();
    while !frontier.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for mut v in frontier {
            let scale = v.norm();
            for u in &basis {
                let c = u.dot(&v);
                v -= u * c;
            }
            // Re-orthogonalize once for stability.
            for u in &basis {
                let c = u.dot(&v);
                v -= u * c;
            }
            if v.norm() > tol * scale.max(1.0) {
                let u = &v / v.norm();
                next.push(a * &u);
                basis.push(u);
            }
        }
        frontier = next;
    }
    basis.len()
}

/// Gain-norm growth under grid refinement for a fixed point actuator: the
/// discrete footprint of an unbounded control operator. Reported as
/// `(n, ‖K‖)` rows.
pub fn gain_norm_table(
    mode: crate::geometry::DimMode,
    ns: &[usize],
    rho: f64,
    location: &[f64],
    weight: f64,
) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for &n in ns {
        let gen = crate::generator::assemble_generator(
            crate::geometry::GeometryConfig::new(mode, n),
            rho,
        )?;
        let setup = build_point_control(
            &gen,
            &[(location.to_vec(), weight)],
            Observation::FullState,
            Horizon::Infinite,
        )?;
        let sol = solve_lqr(&gen, &setup)?;
        rows.push((n, sol.gain.norm()));
    }
    Ok(rows)
}
