//! Time-domain propagation of the contraction semigroup.
//!
//! The workhorse is the implicit midpoint rule in reduced coordinates,
//!
//! ```text
//!   (I - dt/2 A) z⁺ = (I + dt/2 A) z,
//! ```
//!
//! which is A-stable, time-reversible, and — because the reduced basis is
//! orthonormal in the energy metric — reproduces the energy balance
//! exactly: the per-step energy drop equals `dt · ‖∇u(z_mid)‖²` to
//! round-off, so the cumulative dissipation integral closes the budget.
//! Backward Euler is available as an over-damping fallback for stiffness
//! sanity checks; it is contractive but not balance-exact.

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::state::State;
use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepScheme {
    ImplicitMidpoint,
    BackwardEuler,
}

/// Cached one-step propagator for a linear system `ż = a z`.
pub struct Integrator {
    a: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    pub dt: f64,
    pub scheme: StepScheme,
}

impl Integrator {
    pub fn for_matrix(a: DMatrix<f64>, dt: f64, scheme: StepScheme) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let r = a.nrows();
        let shift = match scheme {
            StepScheme::ImplicitMidpoint => 0.5 * dt,
            StepScheme::BackwardEuler => dt,
        };
        let mat = DMatrix::identity(r, r) - &a * shift;
        Ok(Integrator {
            lu: LU::new(mat),
            a,
            dt,
            scheme,
        })
    }

    pub fn new(gen: &Generator, dt: f64, scheme: StepScheme) -> Result<Self> {
        Self::for_matrix(gen.reduced.clone(), dt, scheme)
    }

    /// Advances one step; also returns the midpoint iterate used by the
    /// balance bookkeeping (for backward Euler the endpoint is returned).
    pub fn step(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let rhs = match self.scheme {
            StepScheme::ImplicitMidpoint => z + (&self.a * z) * (0.5 * self.dt),
            StepScheme::BackwardEuler => z.clone(),
        };
        let next = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::numerics("time-step factorization failed"))?;
        let mid = match self.scheme {
            StepScheme::ImplicitMidpoint => (z + &next) * 0.5,
            StepScheme::BackwardEuler => next.clone(),
        };
        Ok((next, mid))
    }
}

/// Recommended step for balance-accuracy (not stability; the scheme is
/// A-stable): a quarter of the squared grid spacing.
pub fn default_dt(gen: &Generator) -> f64 {
    let h = gen.core.topo.spacing();
    0.25 * h * h
}

/// One implicit-midpoint step on a constrained state.
pub fn step(gen: &Generator, y: &State, dt: f64) -> Result<State> {
    let integ = Integrator::new(gen, dt, StepScheme::ImplicitMidpoint)?;
    let (next, _) = integ.step(&gen.reduce(y))?;
    Ok(gen.lift(&next))
}

/// Damps the rough content of a state with a few backward Euler steps.
///
/// The midpoint rule is unitary on undamped oscillatory modes, so
/// refinement studies that sample pressures or traces need data whose
/// unresolved high-frequency content has been dissipated the way the true
/// flow would dissipate it. A short backward Euler run does exactly that.
pub fn dissipative_burn_in(gen: &Generator, y0: &State, steps: usize, dt: f64) -> Result<State> {
    let integ = Integrator::new(gen, dt, StepScheme::BackwardEuler)?;
    let mut z = gen.reduce(y0);
    for _ in 0..steps {
        let (next, _) = integ.step(&z)?;
        z = next;
    }
    Ok(gen.lift(&z))
}

/// Energy/dissipation history of one trajectory.
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `E(t_k) = ½ ‖y(t_k)‖²` in the energy norm.
    pub energies: Vec<f64>,
    /// Cumulative dissipation `Σ dt ‖∇u(mid)‖²` up to `t_k`.
    pub dissipation: Vec<f64>,
    /// Interface mean of the displacement at `t_k`.
    pub mean_displacement: Vec<f64>,
    /// Optional reduced-state snapshots `(step index, z)`.
    pub snapshots: Vec<(usize, DVector<f64>)>,
    pub dt: f64,
    pub scheme: StepScheme,
}

impl TrajectoryRecord {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().unwrap_or(&0.0)
    }

    /// Worst violation of the energy budget `E(0) = E(t) + D(t)`.
    pub fn balance_defect(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .zip(&self.dissipation)
            .map(|(e, d)| (e0 - e - d).abs())
            .fold(0.0, f64::max)
    }

    /// Worst drift of the interface displacement mean.
    pub fn mean_drift(&self) -> f64 {
        let m0 = self.mean_displacement[0];
        self.mean_displacement
            .iter()
            .map(|m| (m - m0).abs())
            .fold(0.0, f64::max)
    }
}

/// Propagates `y0` to time `t_final`, recording energies, dissipation and
/// the interface mean; snapshots every `snapshot_every` steps if requested.
pub fn simulate(
    gen: &Generator,
    y0: &State,
    t_final: f64,
    dt: f64,
    scheme: StepScheme,
    snapshot_every: Option<usize>,
) -> Result<TrajectoryRecord> {
    if t_final <= 0.0 {
        return Err(Error::config("final time must be positive"));
    }
    let integ = Integrator::new(gen, dt, scheme)?;
    let steps = (t_final / dt).ceil() as usize;
    let mut z = gen.reduce(y0);

    let mean_of = |gen: &Generator, z: &DVector<f64>| {
        let s = gen.lift(z);
        gen.core.plate.mean(&s.displacement)
    };

    let mut record = TrajectoryRecord {
        times: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        dissipation: Vec::with_capacity(steps + 1),
        mean_displacement: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        dt,
        scheme,
    };
    record.times.push(0.0);
    record.energies.push(gen.energy(&z));
    record.dissipation.push(0.0);
    record.mean_displacement.push(mean_of(gen, &z));
    if snapshot_every.is_some() {
        record.snapshots.push((0, z.clone()));
    }

    let mut dissipated = 0.0;
    for k in 1..=steps {
        let (next, mid) = integ.step(&z)?;
        dissipated += dt * gen.gradient_norm_sq(&mid);
        z = next;
        record.times.push(k as f64 * dt);
        record.energies.push(gen.energy(&z));
        record.dissipation.push(dissipated);
        record.mean_displacement.push(mean_of(gen, &z));
        if let Some(every) = snapshot_every {
            if k % every == 0 {
                record.snapshots.push((k, z.clone()));
            }
        }
    }
    Ok(record)
}

/// One sampled comparison between the time-discrete multiplier pressure
/// and the harmonic-extension reconstruction at the step endpoint.
pub struct PressureCheckSample {
    pub time: f64,
    /// Discrete `L²(O)` norm of the difference.
    pub l2_gap: f64,
    /// Norm of the reconstructed pressure, for relative reporting.
    pub l2_scale: f64,
}

/// Simulates and, every `check_every` steps, extracts the saddle-point
/// integrator's multiplier pressure from the step increment and compares
/// it with the reconstruction at the step endpoint.
pub fn simulate_with_pressure_checks(
    gen: &Generator,
    y0: &State,
    steps: usize,
    dt: f64,
    check_every: usize,
) -> Result<(TrajectoryRecord, Vec<PressureCheckSample>)> {
    let core = &gen.core;
    let integ = Integrator::new(gen, dt, StepScheme::ImplicitMidpoint)?;
    let mut z = gen.reduce(y0);
    let mut samples = Vec::new();
    let hd = core.fluid.face_weight();

    let mut record = TrajectoryRecord {
        times: vec![0.0],
        energies: vec![gen.energy(&z)],
        dissipation: vec![0.0],
        mean_displacement: vec![core.plate.mean(&gen.lift(&z).displacement)],
        snapshots: Vec::new(),
        dt,
        scheme: StepScheme::ImplicitMidpoint,
    };
    let mut dissipated = 0.0;

    for k in 1..=steps {
        let (next, mid) = integ.step(&z)?;

        if k % check_every == 0 {
            // Multiplier of the time-discrete step: M (z⁺-z)/dt = B x_mid + Cᵀλ.
            let x = gen.basis.clone() * &z;
            let x_next = gen.basis.clone() * &next;
            let rate = (&x_next - &x) / dt;
            let x_mid_state = core.state_from_flat(&((&x + &x_next) * 0.5));
            let residual_force =
                core.metric.apply_flat(&core.state_from_flat(&rate)) - core.drift_force(&x_mid_state);
            let minv = core.metric.solve_flat(&residual_force);
            let rhs = &core.constraints.matrix * minv;
            let lambda = core.multiplier.solve_saddle(&rhs);
            let dae_pressure = core.pressure_from_multipliers(&lambda);

            let end_state = gen.lift(&next);
            let reconstructed = gen.maps.pressure_from_state(&end_state)?;
            let diff = &dae_pressure - &reconstructed;
            samples.push(PressureCheckSample {
                time: k as f64 * dt,
                l2_gap: (hd * diff.norm_squared()).sqrt(),
                l2_scale: (hd * reconstructed.norm_squared()).sqrt(),
            });
        }

        dissipated += dt * gen.gradient_norm_sq(&mid);
        z = next;
        record.times.push(k as f64 * dt);
        record.energies.push(gen.energy(&z));
        record.dissipation.push(dissipated);
        record
            .mean_displacement
            .push(core.plate.mean(&gen.lift(&z).displacement));
    }
    Ok((record, samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Least squares on `log E` over the tail window.
    Exponential,
    /// Boundedness check of `t · E(t)` over the window.
    Rational,
}

/// Decay-fit summary of a trajectory.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub mode: FitMode,
    pub window: (f64, f64),
    /// Fitted energy decay rate: `E(t) ≈ amplitude · exp(-rate t)`.
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    /// `sup t E(t)` over the window (rational mode).
    pub sup_t_energy: Option<f64>,
    /// Ratio of `sup t E` over the second half of the window to the first
    /// half; a non-exploding trend stays near or below one.
    pub sup_trend: Option<f64>,
}

/// Fits the energy decay over a window (default: the last 80% of the
/// trajectory), ignoring samples below the double-precision noise floor.
pub fn fit_decay(
    record: &TrajectoryRecord,
    mode: FitMode,
    window: Option<(f64, f64)>,
) -> Result<DecayFit> {
    let t_end = *record.times.last().unwrap_or(&0.0);
    let (w0, w1) = window.unwrap_or((0.2 * t_end, t_end));
    let floor = 1e-13 * record.energies[0].max(1e-300);
    let pts: Vec<(f64, f64)> = record
        .times
        .iter()
        .zip(&record.energies)
        .filter(|(t, e)| **t >= w0 && **t <= w1 && **e > floor)
        .map(|(t, e)| (*t, *e))
        .collect();
    if pts.len() < 20 {
        return Err(Error::numerics(format!(
            "decay window [{w0}, {w1}] holds only {} usable samples (need 20)",
            pts.len()
        )));
    }

    // Linear least squares on log E.
    let n = pts.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (t, e) in &pts {
        let y = e.ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    let mean_y = sy / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (t, e) in &pts {
        let y = e.ln();
        let fit = intercept + slope * t;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let (sup_t_energy, sup_trend) = if mode == FitMode::Rational {
        let mid = 0.5 * (w0 + w1);
        let sup = |lo: f64, hi: f64| {
            pts.iter()
                .filter(|(t, _)| *t >= lo && *t <= hi)
                .map(|(t, e)| t * e)
                .fold(0.0, f64::max)
        };
        let first = sup(w0, mid);
        let second = sup(mid, w1);
        (
            Some(sup(w0, w1)),
            Some(if first > 0.0 { second / first } else { 0.0 }),
        )
    } else {
        (None, None)
    };

    Ok(DecayFit {
        mode,
        window: (w0, w1),
        rate: -slope,
        amplitude: intercept.exp(),
        r_squared,
        sup_t_energy,
        sup_trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::assemble_generator;
    use crate::geometry::{DimMode, GeometryConfig};
    use crate::linalg::seeded_rng;

    fn gen2d(n: usize, rho: f64) -> Generator {
        assemble_generator(GeometryConfig::new(DimMode::Analogue2d, n), rho).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let gen = gen2d(6, 0.0);
        let y = step(&gen, &gen.core.zero_state(), 0.01).unwrap();
        assert!(y.to_flat().amax() < 1e-14);
    }

    #[test]
    fn midpoint_is_time_reversible() {
        let gen = gen2d(8, 0.0);
        let mut rng = seeded_rng(51);
        let y = gen.random_state(&mut rng);
        let z = gen.reduce(&y);
        let dt = default_dt(&gen);
        let fwd = Integrator::new(&gen, dt, StepScheme::ImplicitMidpoint).unwrap();
        let (z1, _) = fwd.step(&z).unwrap();
        // A backward step of the same size: swap the Cayley factors.
        let back = Integrator::for_matrix(-gen.reduced.clone(), dt, StepScheme::ImplicitMidpoint).unwrap();
        let (z0, _) = back.step(&z1).unwrap();
        assert!((z0 - &z).amax() < 1e-10 * z.amax().max(1.0));
    }

    #[test]
    fn energy_never_grows_and_balance_is_exact() {
        for rho in [0.0, 1.0] {
            let gen = gen2d(8, rho);
            let mut rng = seeded_rng(52);
            let y = gen.random_state(&mut rng);
            let rec = simulate(&gen, &y, 0.5, default_dt(&gen), StepScheme::ImplicitMidpoint, None)
                .unwrap();
            for w in rec.energies.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * rec.energies[0]);
            }
            assert!(
                rec.balance_defect() <= 1e-10 * rec.energies[0],
                "rho={rho}: balance defect {}",
                rec.balance_defect()
            );
            assert!(rec.mean_drift() < 1e-12);
        }
    }

    #[test]
    fn contraction_operator_bound() {
        let gen = gen2d(6, 0.5);
        let dt = default_dt(&gen);
        let integ = Integrator::new(&gen, dt, StepScheme::ImplicitMidpoint).unwrap();
        let mut rng = seeded_rng(53);
        for _ in 0..100 {
            let z = {
                let mut z = crate::linalg::random_vector(&mut rng, gen.reduced_dim);
                z /= z.norm();
                z
            };
            let (next, _) = integ.step(&z).unwrap();
            assert!(next.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn step_refinement_is_second_order() {
        let gen = gen2d(6, 0.0);
        let y = gen.smooth_state();
        let t_final = 0.2;
        let dt0 = 0.01;
        let e: Vec<f64> = [dt0, dt0 / 2.0, dt0 / 4.0]
            .iter()
            .map(|&dt| {
                simulate(&gen, &y, t_final, dt, StepScheme::ImplicitMidpoint, None)
                    .unwrap()
                    .final_energy()
            })
            .collect();
        let order = ((e[0] - e[1]).abs() / (e[1] - e[2]).abs()).log2();
        assert!(order >= 1.8, "measured order {order} from {e:?}");
    }

    #[test]
    fn backward_euler_overdamps_but_contracts() {
        let gen = gen2d(6, 0.0);
        let mut rng = seeded_rng(55);
        let y = gen.random_state(&mut rng);
        let rec_be = simulate(&gen, &y, 0.3, 0.01, StepScheme::BackwardEuler, None).unwrap();
        let rec_im = simulate(&gen, &y, 0.3, 0.01, StepScheme::ImplicitMidpoint, None).unwrap();
        assert!(rec_be.final_energy() <= rec_im.final_energy() + 1e-12);
        for w in rec_be.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * rec_be.energies[0]);
        }
    }

    #[test]
    fn synthetic_exponential_fit() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let energies: Vec<f64> = times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let record = TrajectoryRecord {
            dissipation: vec![0.0; times.len()],
            mean_displacement: vec![0.0; times.len()],
            snapshots: Vec::new(),
            dt: 0.05,
            scheme: StepScheme::ImplicitMidpoint,
            times,
            energies,
        };
        let fit = fit_decay(&record, FitMode::Exponential, None).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6, "rate {}", fit.rate);
        assert!((fit.amplitude - 3.0).abs() < 1e-6, "amplitude {}", fit.amplitude);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn underpopulated_window_rejected() {
        let record = TrajectoryRecord {
            times: vec![0.0, 1.0],
            energies: vec![1.0, 0.5],
            dissipation: vec![0.0, 0.5],
            mean_displacement: vec![0.0, 0.0],
            snapshots: Vec::new(),
            dt: 1.0,
            scheme: StepScheme::ImplicitMidpoint,
        };
        assert!(fit_decay(&record, FitMode::Exponential, None).is_err());
    }

    #[test]
    fn dae_pressure_tracks_reconstruction() {
        let gen = gen2d(8, 0.0);
        let y = dissipative_burn_in(&gen, &gen.smooth_state(), 20, 0.005).unwrap();
        let (_, samples) =
            simulate_with_pressure_checks(&gen, &y, 40, default_dt(&gen), 10).unwrap();
        assert!(!samples.is_empty());
        let mean_gap: f64 = samples.iter().map(|s| s.l2_gap).sum::<f64>() / samples.len() as f64;
        let mean_scale: f64 =
            samples.iter().map(|s| s.l2_scale).sum::<f64>() / samples.len() as f64;
        assert!(
            mean_gap <= 0.2 * mean_scale,
            "mean gap {mean_gap} vs scale {mean_scale}"
        );
        for s in &samples {
            assert!(s.l2_gap <= 0.6 * s.l2_scale.max(1e-12));
        }
    }
}
