//! Discrete differential operators and the energy inner product.
//!
//! Fluid side (MAC staggered grid):
//! * `divergence`: cell-exact flux balance, one value per cell;
//! * `gradient`: minus the divergence transpose on interior faces
//!   (summation by parts holds with uniform face/cell quadrature);
//! * `viscous_form`: the discrete Dirichlet form `u ↦ Σ w_q (δ_q u)²`
//!   accumulated from all first-difference quotients, with half-cell
//!   closures encoding the homogeneous tangential wall conditions. The
//!   pointwise vector Laplacian with mirror-ghost closure is recovered as
//!   `-viscous_form / h^d`.
//!
//! Plate side (interior vertices of the top face, clamped ring eliminated):
//! * `dirichlet_laplacian`: the classical second-difference matrix;
//! * `inertia`: `I + rho * dirichlet_laplacian`;
//! * `bilaplacian_form`: `L_cᵀ W L_c` where `L_c` is the discrete Laplacian
//!   extended to all vertices with mirror ghosts (`w(-1) = w(1)`), the
//!   standard second-order clamped closure. Interior rows reproduce the
//!   1-4-6-4-1 stencil and the near-wall 7-4-1 closure exactly.
//!
//! The energy metric is block diagonal: uniform `h^d` quadrature on fluid
//! faces, the clamped bilaplacian form on displacements (so the
//! displacement seminorm is the discrete `‖Δw‖`), and `h^{d-1}(I + ρ A_D)`
//! on plate velocities.

use crate::error::{Error, Result};
use crate::geometry::GridTopology;
use crate::linalg::SpdSolver;
use crate::state::{ComplexState, State, C64};
use nalgebra::{DMatrix, DVector};

/// Fluid-side discrete operators on the staggered grid.
pub struct FluidOperators {
    /// Divergence, `cells × faces`, entries `±1/h`.
    pub divergence: DMatrix<f64>,
    /// Discrete Dirichlet form on face vectors (symmetric positive
    /// semidefinite; positive definite once wall faces are pinned).
    pub viscous_form: DMatrix<f64>,
    pub h: f64,
    pub dim: usize,
}

/// Assembles divergence, gradient and the viscous Dirichlet form.
pub fn assemble_fluid_ops(topo: &GridTopology) -> FluidOperators {
    let n = topo.cells_per_side();
    let d = topo.dim();
    let h = topo.spacing();
    let nf = topo.total_faces();
    let hd = h.powi(d as i32);

    // Divergence.
    let mut div = DMatrix::zeros(topo.cell_count(), nf);
    for cell in 0..topo.cell_count() {
        let idx = topo.cell_multi_index(cell);
        for k in 0..d {
            let mut hi = idx;
            hi[k] += 1;
            let f_lo = topo.face_id(k, &idx[..d]);
            let f_hi = topo.face_id(k, &hi[..d]);
            div[(cell, f_lo)] -= 1.0 / h;
            div[(cell, f_hi)] += 1.0 / h;
        }
    }

    // Viscous Dirichlet form: accumulate w * qᵀq over difference quotients.
    let mut visc = DMatrix::zeros(nf, nf);
    let mut add = |entries: &[(usize, f64)], w: f64| {
        for &(fi, ci) in entries {
            for &(fj, cj) in entries {
                visc[(fi, fj)] += w * ci * cj;
            }
        }
    };

    for k in 0..d {
        // Differences along the component's own axis live at cell centers.
        for cell in 0..topo.cell_count() {
            let idx = topo.cell_multi_index(cell);
            let mut hi = idx;
            hi[k] += 1;
            let f_lo = topo.face_id(k, &idx[..d]);
            let f_hi = topo.face_id(k, &hi[..d]);
            add(&[(f_hi, 1.0 / h), (f_lo, -1.0 / h)], hd);
        }

        // Differences along the other axes, with half-cell wall closures
        // for the homogeneous tangential conditions on S and on the top.
        for j in 0..d {
            if j == k {
                continue;
            }
            // Enumerate faces of component k by multi-index.
            let per_comp = topo.faces_per_component();
            for flat in 0..per_comp {
                let face = k * per_comp + flat;
                let (_, idx) = topo.face_multi_index(face);
                // Trapezoid factor along the component axis.
                let wk = if idx[k] == 0 || idx[k] == n { 0.5 } else { 1.0 };
                // Interior quotient with the neighbor below along j.
                if idx[j] >= 1 {
                    let mut lo = idx;
                    lo[j] -= 1;
                    let f_lo = topo.face_id(k, &lo[..d]);
                    add(&[(face, 1.0 / h), (f_lo, -1.0 / h)], hd * wk);
                }
                // Wall closures at the two ends of the line along j.
                if idx[j] == 0 {
                    add(&[(face, 2.0 / h)], 0.5 * hd * wk);
                }
                if idx[j] == n - 1 {
                    add(&[(face, 2.0 / h)], 0.5 * hd * wk);
                }
            }
        }
    }

    FluidOperators {
        divergence: div,
        viscous_form: visc,
        h,
        dim: d,
    }
}

impl FluidOperators {
    /// Uniform face quadrature weight `h^d`.
    pub fn face_weight(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Discrete pressure gradient on interior faces (boundary rows zero);
    /// equals minus the divergence transpose there.
    pub fn gradient(&self, topo: &GridTopology, p: &DVector<f64>) -> DVector<f64> {
        let mut g = -(self.divergence.transpose() * p);
        for f in 0..topo.total_faces() {
            if topo.is_boundary_face(f) {
                g[f] = 0.0;
            }
        }
        g
    }

    /// Pointwise vector Laplacian with the mirror-ghost boundary closure.
    pub fn vector_laplacian(&self, u: &DVector<f64>) -> DVector<f64> {
        -(&self.viscous_form * u) / self.face_weight()
    }

    /// Dirichlet energy `‖∇u‖²` of a face vector.
    pub fn dirichlet_energy(&self, u: &DVector<f64>) -> f64 {
        (&self.viscous_form * u).dot(u)
    }

    pub fn dirichlet_energy_complex(&self, u: &DVector<C64>) -> f64 {
        let re = u.map(|z| z.re);
        let im = u.map(|z| z.im);
        self.dirichlet_energy(&re) + self.dirichlet_energy(&im)
    }

    /// Dirichlet form pairing `(∇u, ∇v)`.
    pub fn dirichlet_pairing(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (&self.viscous_form * u).dot(v)
    }

    /// Signed normal trace `u·ν` on the elastic interface.
    pub fn omega_normal_trace(&self, topo: &GridTopology, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            topo.omega_faces().len(),
            topo.omega_faces().iter().map(|&f| u[f]),
        )
    }

    /// Signed normal trace `u·ν` on the rigid wall.
    pub fn s_normal_trace(&self, topo: &GridTopology, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            topo.s_faces().len(),
            topo.s_faces().iter().map(|&f| {
                let nu = topo.normal(f).expect("s face is boundary");
                let (comp, _) = topo.face_multi_index(f);
                u[f] * nu[comp]
            }),
        )
    }

    /// Net outward volume flux of a face vector.
    pub fn boundary_flux(&self, topo: &GridTopology, u: &DVector<f64>) -> f64 {
        let area = self.h.powi(self.dim as i32 - 1);
        let omega: f64 = topo.omega_faces().iter().map(|&f| u[f]).sum();
        let s: f64 = self.s_normal_trace(topo, u).iter().sum();
        area * (omega + s)
    }
}

/// Plate-side discrete operators on the interior vertices of the top face.
pub struct PlateOperators {
    /// Plate dimension (1 for the 2-D cavity, 2 for the 3-D box).
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub count: usize,
    pub h: f64,
    pub rho: f64,
    /// Vertex quadrature weight `h^dim` (uniform over interior vertices).
    pub node_mass: f64,
    /// Dirichlet Laplacian `A_D` (second differences, zero boundary ring).
    pub dirichlet_laplacian: DMatrix<f64>,
    /// `P_ρ = I + ρ A_D`.
    pub inertia: DMatrix<f64>,
    /// Clamped bilaplacian form `K = L_cᵀ W L_c` (symmetric positive definite).
    pub bilaplacian_form: DMatrix<f64>,
    inertia_solver: SpdSolver,
    bilaplacian_solver: SpdSolver,
}

/// Assembles the plate operators for rotational-inertia parameter `rho ≥ 0`.
pub fn assemble_plate_ops(topo: &GridTopology, rho: f64) -> Result<PlateOperators> {
    if rho < 0.0 {
        return Err(Error::config(format!(
            "physics: rotational inertia must be nonnegative, got {rho}"
        )));
    }
    let dp = topo.dim() - 1;
    let n = topo.cells_per_side();
    let m_axis = topo.plate_nodes_per_axis();
    let m = topo.plate_node_count();
    let h = topo.spacing();
    let h2 = h * h;

    // Dirichlet Laplacian on interior vertices.
    let mut lap = DMatrix::zeros(m, m);
    for node in 0..m {
        let vert = topo.plate_node_multi_index(node);
        lap[(node, node)] += 2.0 * dp as f64 / h2;
        for a in 0..dp {
            for dir in [-1isize, 1] {
                let j = vert[a] as isize + dir;
                if j >= 1 && j <= m_axis as isize {
                    let mut nb = vert.clone();
                    nb[a] = j as usize;
                    let other = topo.plate_node_id(&nb);
                    lap[(node, other)] -= 1.0 / h2;
                }
            }
        }
    }

    let inertia = DMatrix::identity(m, m) + &lap * rho;

    // Clamped Laplacian extended to every vertex of the closed patch:
    // boundary-ring values are zero, ghosts mirror the first interior row.
    let ext_count = (n + 1).pow(dp as u32);
    let mut l_ext: DMatrix<f64> = DMatrix::zeros(ext_count, m);
    let mut weights: DVector<f64> = DVector::zeros(ext_count);
    // Value of the discrete field at integer coordinates, after folding
    // ghosts back by reflection across the boundary vertex.
    let value = |coords: &[isize]| -> Option<(usize, f64)> {
        let mut folded = vec![0usize; dp];
        for a in 0..dp {
            let c = match coords[a] {
                -1 => 1,
                c if c == (n as isize + 1) => n as isize - 1,
                c => c,
            };
            if c == 0 || c == n as isize {
                return None; // clamped ring
            }
            folded[a] = c as usize;
        }
        Some((topo.plate_node_id(&folded), 1.0))
    };
    for ext in 0..ext_count {
        // Decode the extended vertex multi-index (coordinates 0..=n).
        let mut rem = ext;
        let mut vert = vec![0isize; dp];
        for a in (0..dp).rev() {
            vert[a] = (rem % (n + 1)) as isize;
            rem /= n + 1;
        }
        let mut w = h.powi(dp as i32);
        for a in 0..dp {
            if vert[a] == 0 || vert[a] == n as isize {
                w *= 0.5;
            }
        }
        weights[ext] = w;

        let center = value(&vert);
        for a in 0..dp {
            for dir in [-1isize, 1] {
                let mut nb = vert.clone();
                nb[a] += dir;
                if let Some((node, c)) = value(&nb) {
                    l_ext[(ext, node)] += c / h2;
                }
            }
            if let Some((node, c)) = center {
                l_ext[(ext, node)] -= 2.0 * c / h2;
            }
        }
    }
    let mut weighted = l_ext.clone();
    for r in 0..ext_count {
        let w = weights[r];
        for c in 0..m {
            weighted[(r, c)] *= w;
        }
    }
    let bilaplacian_form: DMatrix<f64> = l_ext.transpose() * weighted;

    let inertia_solver = SpdSolver::new(inertia.clone(), "plate inertia operator")?;
    let bilaplacian_solver = SpdSolver::new(bilaplacian_form.clone(), "clamped bilaplacian")?;

    Ok(PlateOperators {
        dim: dp,
        nodes_per_axis: m_axis,
        count: m,
        h,
        rho,
        node_mass: h.powi(dp as i32),
        dirichlet_laplacian: lap,
        inertia,
        bilaplacian_form,
        inertia_solver,
        bilaplacian_solver,
    })
}

impl PlateOperators {
    /// Pointwise clamped bilaplacian `Δ²_h w`.
    pub fn bilaplacian(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.bilaplacian_form * w) / self.node_mass
    }

    pub fn apply_inertia(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.inertia * w
    }

    pub fn solve_inertia(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.inertia_solver.solve(rhs)
    }

    /// Solves `K x = rhs` with the clamped bilaplacian form.
    pub fn solve_bilaplacian_form(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.bilaplacian_solver.solve(rhs)
    }

    /// Deflection under a uniform unit load: `Δ²_h φ = 1`, clamped.
    pub fn unit_load_deflection(&self) -> DVector<f64> {
        self.solve_bilaplacian_form(&DVector::from_element(self.count, self.node_mass))
    }

    pub fn mean(&self, w: &DVector<f64>) -> f64 {
        w.sum() / self.count as f64
    }

    /// Projection onto mean-zero vertex vectors (idempotent, self-adjoint
    /// in the uniform vertex quadrature).
    pub fn remove_mean(&self, w: &DVector<f64>) -> DVector<f64> {
        w.add_scalar(-self.mean(w))
    }

    /// `(Δ_h a, Δ_h b)` pairing in the clamped form.
    pub fn laplacian_pairing(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (&self.bilaplacian_form * a).dot(b)
    }

    pub fn laplacian_pairing_complex(&self, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
        let ka = apply_real(&self.bilaplacian_form, a);
        b.dotc(&ka)
    }
}

/// Applies a real matrix to a complex vector.
pub fn apply_real(mat: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let re = mat * v.map(|z| z.re);
    let im = mat * v.map(|z| z.im);
    re.zip_map(&im, |a, b| C64::new(a, b))
}

/// Interface interpolation from interior plate vertices to `Omega` face
/// values (corner average; clamped ring corners contribute zero).
pub fn interface_matrix(topo: &GridTopology) -> DMatrix<f64> {
    let omega = topo.omega_faces().len();
    let m = topo.plate_node_count();
    let corners = 1usize << (topo.dim() - 1);
    let w = 1.0 / corners as f64;
    let mut t = DMatrix::zeros(omega, m);
    for k in 0..omega {
        for corner in topo.omega_corner_nodes(k) {
            if let Some(node) = corner {
                t[(k, *node)] += w;
            }
        }
    }
    t
}

/// Block-diagonal energy metric on state triples.
pub struct EnergyMetric {
    /// `h^d` quadrature weight per fluid face.
    pub fluid_weight: f64,
    /// Clamped bilaplacian form (displacement block).
    pub displacement_form: DMatrix<f64>,
    /// `h^{d-1} (I + ρ A_D)` (plate-velocity block).
    pub velocity_form: DMatrix<f64>,
    displacement_solver: SpdSolver,
    velocity_solver: SpdSolver,
}

pub fn energy_metric(fluid: &FluidOperators, plate: &PlateOperators) -> Result<EnergyMetric> {
    let velocity_form = &plate.inertia * plate.node_mass;
    Ok(EnergyMetric {
        fluid_weight: fluid.face_weight(),
        displacement_form: plate.bilaplacian_form.clone(),
        displacement_solver: SpdSolver::new(plate.bilaplacian_form.clone(), "displacement block")?,
        velocity_solver: SpdSolver::new(velocity_form.clone(), "plate velocity block")?,
        velocity_form,
    })
}

impl EnergyMetric {
    pub fn check_layout(&self, a: &State) -> Result<()> {
        if a.displacement.len() != self.displacement_form.nrows()
            || a.velocity.len() != self.velocity_form.nrows()
        {
            return Err(Error::config("state does not match this grid"));
        }
        Ok(())
    }

    pub fn inner(&self, a: &State, b: &State) -> f64 {
        self.fluid_weight * a.fluid.dot(&b.fluid)
            + (&self.displacement_form * &a.displacement).dot(&b.displacement)
            + (&self.velocity_form * &a.velocity).dot(&b.velocity)
    }

    /// Hermitian inner product `(a, b) = Σ a conj(b)` in the energy metric.
    pub fn inner_complex(&self, a: &ComplexState, b: &ComplexState) -> C64 {
        let fluid = b.fluid.dotc(&a.fluid) * C64::new(self.fluid_weight, 0.0);
        let disp = b
            .displacement
            .dotc(&apply_real(&self.displacement_form, &a.displacement));
        let vel = b.velocity.dotc(&apply_real(&self.velocity_form, &a.velocity));
        fluid + disp + vel
    }

    pub fn norm(&self, a: &State) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    pub fn norm_complex(&self, a: &ComplexState) -> f64 {
        self.inner_complex(a, a).re.max(0.0).sqrt()
    }

    /// Applies the metric blockwise: `x ↦ M x` as a flat vector.
    pub fn apply_flat(&self, s: &State) -> DVector<f64> {
        let (nf, m) = s.dims();
        let mut out = DVector::zeros(nf + 2 * m);
        out.rows_mut(0, nf).copy_from(&(&s.fluid * self.fluid_weight));
        out.rows_mut(nf, m)
            .copy_from(&(&self.displacement_form * &s.displacement));
        out.rows_mut(nf + m, m)
            .copy_from(&(&self.velocity_form * &s.velocity));
        out
    }

    /// Dense block-diagonal metric matrix on flat triples.
    pub fn matrix(&self, faces: usize) -> DMatrix<f64> {
        let m = self.displacement_form.nrows();
        let dim = faces + 2 * m;
        let mut out = DMatrix::zeros(dim, dim);
        for f in 0..faces {
            out[(f, f)] = self.fluid_weight;
        }
        out.view_mut((faces, faces), (m, m))
            .copy_from(&self.displacement_form);
        out.view_mut((faces + m, faces + m), (m, m))
            .copy_from(&self.velocity_form);
        out
    }

    /// Solves `M x = rhs` blockwise on a flat vector.
    pub fn solve_flat(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = self.displacement_form.nrows();
        let nf = rhs.len() - 2 * m;
        let mut out = DVector::zeros(rhs.len());
        out.rows_mut(0, nf)
            .copy_from(&(rhs.rows(0, nf) / self.fluid_weight));
        out.rows_mut(nf, m)
            .copy_from(&self.displacement_solver.solve(&rhs.rows(nf, m).into_owned()));
        out.rows_mut(nf + m, m)
            .copy_from(&self.velocity_solver.solve(&rhs.rows(nf + m, m).into_owned()));
        out
    }
}

/// Energy inner product of two states on the same grid (conjugate-linear
/// in the second argument).
pub fn energy_inner_product(
    a: &ComplexState,
    b: &ComplexState,
    metric: &EnergyMetric,
) -> Result<C64> {
    if a.dims() != b.dims() {
        return Err(Error::config("states live on different grids"));
    }
    if a.displacement.len() != metric.displacement_form.nrows() {
        return Err(Error::config("states do not match the metric's grid"));
    }
    Ok(metric.inner_complex(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DimMode, GeometryConfig};
    use crate::linalg::{random_vector, seeded_rng};
    use approx::assert_relative_eq;
    use nalgebra::linalg::SymmetricEigen;

    fn grid2d(n: usize) -> GridTopology {
        build_grid(&GeometryConfig::new(DimMode::Analogue2d, n)).unwrap()
    }

    #[test]
    fn divergence_of_linear_field_vanishes() {
        // u = (x, -y) is exactly divergence-free cell by cell.
        let topo = grid2d(8);
        let fluid = assemble_fluid_ops(&topo);
        let mut u = DVector::zeros(topo.total_faces());
        for f in 0..topo.total_faces() {
            let (comp, _) = topo.face_multi_index(f);
            let pos = topo.face_position(f);
            u[f] = match comp {
                0 => pos[0],
                _ => -pos[1],
            };
        }
        let div = &fluid.divergence * &u;
        assert!(div.amax() < 1e-13);
    }

    #[test]
    fn gradient_is_negative_divergence_transpose_inside() {
        let topo = grid2d(6);
        let fluid = assemble_fluid_ops(&topo);
        let mut rng = seeded_rng(1);
        let u = random_vector(&mut rng, topo.total_faces());
        let p = random_vector(&mut rng, topo.cell_count());
        // <div u, p> h^d + <u, grad p> h^d = boundary flux terms only.
        let hd = fluid.face_weight();
        let lhs = (&fluid.divergence * &u).dot(&p) * hd + u.dot(&fluid.gradient(&topo, &p)) * hd;
        // Boundary part: sum over boundary faces of u * p_adjacent * h^{d-1}.
        let mut boundary = 0.0;
        for f in 0..topo.total_faces() {
            if topo.is_boundary_face(f) {
                let col = fluid.divergence.column(f);
                for (cell, &coef) in col.iter().enumerate() {
                    boundary += hd * coef * u[f] * p[cell];
                }
            }
        }
        assert_relative_eq!(lhs, boundary, epsilon = 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn constant_field_sees_wall_closure() {
        let topo = grid2d(6);
        let fluid = assemble_fluid_ops(&topo);
        let u = DVector::from_element(topo.total_faces(), 1.0);
        let lap = fluid.vector_laplacian(&u);
        // Interior rows far from walls annihilate constants; wall-adjacent
        // tangential rows do not.
        let deep = topo.face_id(0, &[3, 3]);
        assert!(lap[deep].abs() < 1e-10);
        let near_wall = topo.face_id(0, &[3, 0]);
        assert!(lap[near_wall].abs() > 1.0);
    }

    #[test]
    fn interior_laplacian_matches_five_point_stencil() {
        let topo = grid2d(8);
        let fluid = assemble_fluid_ops(&topo);
        let mut rng = seeded_rng(4);
        let u = random_vector(&mut rng, topo.total_faces());
        let lap = fluid.vector_laplacian(&u);
        let h2 = topo.spacing() * topo.spacing();
        let f = topo.face_id(0, &[4, 3]);
        let e = topo.face_id(0, &[5, 3]);
        let w = topo.face_id(0, &[3, 3]);
        let nn = topo.face_id(0, &[4, 4]);
        let s = topo.face_id(0, &[4, 2]);
        let expect = (u[e] + u[w] + u[nn] + u[s] - 4.0 * u[f]) / h2;
        assert_relative_eq!(lap[f], expect, max_relative = 1e-12);
    }

    #[test]
    fn dirichlet_eigenvalues_closed_form() {
        // 4 interior vertices: eigenvalues (2 - 2 cos(kπ/5)) / h².
        let topo = grid2d(5);
        let plate = assemble_plate_ops(&topo, 0.0).unwrap();
        let h = topo.spacing();
        let eig = SymmetricEigen::new(plate.dirichlet_laplacian.clone());
        let mut got: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, lam) in got.iter().enumerate() {
            let expect = (2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 5.0).cos()) / (h * h);
            assert_relative_eq!(*lam, expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_inertia_is_identity() {
        let topo = grid2d(8);
        let plate = assemble_plate_ops(&topo, 0.0).unwrap();
        let mut rng = seeded_rng(2);
        let w = random_vector(&mut rng, plate.count);
        assert!((plate.apply_inertia(&w) - &w).amax() < 1e-14);
    }

    #[test]
    fn negative_inertia_rejected() {
        let topo = grid2d(4);
        assert!(assemble_plate_ops(&topo, -1.0).is_err());
    }

    #[test]
    fn inertia_dominates_identity() {
        for rho in [0.0, 0.1, 1.0] {
            let topo = grid2d(8);
            let plate = assemble_plate_ops(&topo, rho).unwrap();
            let eig = SymmetricEigen::new(plate.inertia.clone());
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= 1.0 - 1e-12, "rho={rho}: min eig {min}");
        }
    }

    #[test]
    fn clamped_bilaplacian_matches_reference_stencil() {
        let topo = grid2d(5); // 4 interior vertices
        let plate = assemble_plate_ops(&topo, 0.0).unwrap();
        let h = topo.spacing();
        let scale = 1.0 / (h * h * h * h);
        let reference = DMatrix::from_row_slice(
            4,
            4,
            &[
                7.0, -4.0, 1.0, 0.0, //
                -4.0, 6.0, -4.0, 1.0, //
                1.0, -4.0, 6.0, -4.0, //
                0.0, 1.0, -4.0, 7.0,
            ],
        ) * scale;
        let pointwise = &plate.bilaplacian_form / plate.node_mass;
        assert!((pointwise - reference).amax() < 1e-9);
    }

    #[test]
    fn unit_load_deflection_converges_quadratically() {
        // Δ²φ = 1 clamped on (0,1): φ(x) = x²(1-x)²/24.
        let mut errors = Vec::new();
        for n in [16usize, 32] {
            let topo = grid2d(n);
            let plate = assemble_plate_ops(&topo, 0.0).unwrap();
            let phi = plate.unit_load_deflection();
            let mut err = 0.0f64;
            for node in 0..plate.count {
                let x = topo.plate_node_position(node)[0];
                let exact = x * x * (1.0 - x) * (1.0 - x) / 24.0;
                err = err.max((phi[node] - exact).abs());
            }
            errors.push(err);
        }
        let order = (errors[0] / errors[1]).log2();
        assert!(order >= 1.8, "measured order {order}, errors {errors:?}");
    }

    #[test]
    fn clamped_bilaplacian_consistency_order() {
        // Compactly supported smooth test function sin⁸(πx): the operator
        // applied to its samples reproduces the analytic fourth derivative
        // at second order in the max norm.
        let fourth = |x: f64| {
            let p = std::f64::consts::PI;
            // sin⁸ = (35 - 56 cos2πx + 28 cos4πx - 8 cos6πx + cos8πx)/128
            (-56.0 * (2.0 * p).powi(4) * (2.0 * p * x).cos()
                + 28.0 * (4.0 * p).powi(4) * (4.0 * p * x).cos()
                - 8.0 * (6.0 * p).powi(4) * (6.0 * p * x).cos()
                + (8.0 * p).powi(4) * (8.0 * p * x).cos())
                / 128.0
        };
        let sample = |x: f64| (std::f64::consts::PI * x).sin().powi(8);
        let mut errors = Vec::new();
        for n in [16usize, 32] {
            let topo = grid2d(n);
            let plate = assemble_plate_ops(&topo, 0.0).unwrap();
            let w = DVector::from_fn(plate.count, |i, _| sample(topo.plate_node_position(i)[0]));
            let lhs = plate.bilaplacian(&w);
            let mut err = 0.0f64;
            for node in 0..plate.count {
                let x = topo.plate_node_position(node)[0];
                err = err.max((lhs[node] - fourth(x)).abs());
            }
            errors.push(err);
        }
        let order = (errors[0] / errors[1]).log2();
        assert!(order >= 1.8, "measured order {order}, errors {errors:?}");
    }

    #[test]
    fn mean_projection_properties() {
        let topo = grid2d(8);
        let plate = assemble_plate_ops(&topo, 0.0).unwrap();
        let ones = DVector::from_element(plate.count, 3.5);
        assert!(plate.remove_mean(&ones).amax() < 1e-14);
        let mut rng = seeded_rng(3);
        let w = plate.remove_mean(&random_vector(&mut rng, plate.count));
        assert!((plate.remove_mean(&w) - &w).amax() < 1e-14);
    }

    #[test]
    fn metric_conjugate_symmetry_and_reductions() {
        let topo = grid2d(6);
        let fluid = assemble_fluid_ops(&topo);
        let plate = assemble_plate_ops(&topo, 0.0).unwrap();
        let metric = energy_metric(&fluid, &plate).unwrap();
        let mut rng = seeded_rng(5);
        let (nf, m) = (topo.total_faces(), plate.count);

        let zero = State::zeros(nf, m).to_complex();
        assert_eq!(energy_inner_product(&zero, &zero, &metric).unwrap(), C64::new(0.0, 0.0));

        // Velocity-only state at rho=0 reduces to the plate L² norm.
        let mut s = State::zeros(nf, m);
        s.velocity = random_vector(&mut rng, m);
        let val = metric.inner(&s, &s);
        let expect = plate.node_mass * s.velocity.norm_squared();
        assert_relative_eq!(val, expect, max_relative = 1e-13);

        // Conjugate symmetry on random complex states.
        let a = ComplexState {
            fluid: crate::linalg::random_complex_vector(&mut rng, nf),
            displacement: crate::linalg::random_complex_vector(&mut rng, m),
            velocity: crate::linalg::random_complex_vector(&mut rng, m),
        };
        let b = ComplexState {
            fluid: crate::linalg::random_complex_vector(&mut rng, nf),
            displacement: crate::linalg::random_complex_vector(&mut rng, m),
            velocity: crate::linalg::random_complex_vector(&mut rng, m),
        };
        let ab = energy_inner_product(&a, &b, &metric).unwrap();
        let ba = energy_inner_product(&b, &a, &metric).unwrap();
        assert_relative_eq!(ab.re, ba.conj().re, max_relative = 1e-12);
        assert_relative_eq!(ab.im, ba.conj().im, max_relative = 1e-12);
    }

    #[test]
    fn interface_matrix_averages_corners() {
        let topo = grid2d(8);
        let t = interface_matrix(&topo);
        assert_eq!(t.nrows(), 8);
        assert_eq!(t.ncols(), 7);
        // Row sums: 1 inside, 1/2 at the two clamped ends.
        for k in 0..8 {
            let sum: f64 = t.row(k).iter().sum();
            let expect = if k == 0 || k == 7 { 0.5 } else { 1.0 };
            assert_relative_eq!(sum, expect, max_relative = 1e-14);
        }
        // Column sums are 1: each interior vertex feeds its two faces.
        for j in 0..7 {
            let sum: f64 = t.column(j).iter().sum();
            assert_relative_eq!(sum, 1.0, max_relative = 1e-14);
        }
    }
}
