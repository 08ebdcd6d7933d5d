//! Cavity geometry and staggered-grid bookkeeping.
//!
//! The fluid fills the unit box `O` in two dimensions (`Analogue2d`: 2-D
//! cavity with a 1-D beam on the top edge) or three dimensions (`Box3d`:
//! 3-D cavity with a 2-D plate on the top face). The boundary splits into
//! the elastic patch `Omega` (the full top face) and the rigid wall `S`
//! (everything else). The outward unit normal on `Omega` is constant and
//! points along the last coordinate axis.
//!
//! Unknown placement is MAC-staggered: pressures at cell centers, velocity
//! component `k` at faces orthogonal to axis `k`. Plate unknowns live at
//! the interior vertices of the top face; the clamped boundary ring is
//! eliminated. Each `Omega` fluid face is paired with the plate cell that
//! has the identical geometric footprint; the face's corner vertices give
//! the interface interpolation stencil.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Spatial configuration of the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimMode {
    /// 2-D cavity, 1-D beam on the top edge.
    Analogue2d,
    /// 3-D cavity, 2-D plate on the top face.
    Box3d,
}

impl DimMode {
    /// Fluid dimension (2 or 3).
    pub fn fluid_dim(self) -> usize {
        match self {
            DimMode::Analogue2d => 2,
            DimMode::Box3d => 3,
        }
    }
}

/// Geometry section of a run configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub dim_mode: DimMode,
    /// Cells per side of the unit box; grid spacing is `1/n`.
    pub n: usize,
}

impl GeometryConfig {
    pub fn new(dim_mode: DimMode, n: usize) -> Self {
        GeometryConfig { dim_mode, n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!(
                "geometry: n must be at least 2, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Boundary classification of a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPatch {
    /// Rigid wall (no-slip).
    S,
    /// Elastic interface (top face).
    Omega,
}

/// Staggered grid with face/cell/plate index maps.
#[derive(Debug, Clone)]
pub struct GridTopology {
    dim: usize,
    n: usize,
    h: f64,
    face_offset: [usize; 3],
    total_faces: usize,
    cell_count: usize,
    /// Global face ids of the `Omega` faces, in plate-cell lexicographic order.
    omega_faces: Vec<usize>,
    /// Global face ids of the `S` (rigid wall) boundary faces.
    s_faces: Vec<usize>,
    /// Per-face boundary classification (`None` for interior faces).
    boundary: Vec<Option<BoundaryPatch>>,
    /// Interior plate vertices per axis (`n - 1`).
    plate_nodes_per_axis: usize,
    plate_node_count: usize,
    /// For each `Omega` face, the ids of its corner plate vertices
    /// (`None` where the corner sits on the clamped boundary ring).
    omega_corner_nodes: Vec<Vec<Option<usize>>>,
}

/// Builds the staggered grid and all degree-of-freedom index maps.
pub fn build_grid(config: &GeometryConfig) -> Result<GridTopology> {
    config.validate()?;
    let dim = config.dim_mode.fluid_dim();
    let n = config.n;
    let h = 1.0 / n as f64;

    // Component k has n+1 faces along axis k and n along the others.
    let per_comp = (n + 1) * n.pow((dim - 1) as u32);
    let mut face_offset = [0usize; 3];
    for k in 0..dim {
        face_offset[k] = k * per_comp;
    }
    let total_faces = dim * per_comp;
    let cell_count = n.pow(dim as u32);

    let mut topo = GridTopology {
        dim,
        n,
        h,
        face_offset,
        total_faces,
        cell_count,
        omega_faces: Vec::new(),
        s_faces: Vec::new(),
        boundary: vec![None; total_faces],
        plate_nodes_per_axis: n - 1,
        plate_node_count: (n - 1).pow((dim - 1) as u32),
        omega_corner_nodes: Vec::new(),
    };

    // Classify boundary faces: top faces of the vertical component are Omega,
    // every other boundary face is S.
    let vertical = dim - 1;
    for comp in 0..dim {
        for flat in 0..per_comp {
            let idx = topo.face_multi_index_local(comp, flat);
            if idx[comp] == 0 || idx[comp] == n {
                let id = face_offset[comp] + flat;
                if comp == vertical && idx[comp] == n {
                    topo.boundary[id] = Some(BoundaryPatch::Omega);
                } else {
                    topo.boundary[id] = Some(BoundaryPatch::S);
                    topo.s_faces.push(id);
                }
            }
        }
    }

    // Omega faces in plate-cell lexicographic order (horizontal axes only).
    let mut cell = vec![0usize; dim - 1];
    loop {
        let mut idx = [0usize; 3];
        for a in 0..dim - 1 {
            idx[a] = cell[a];
        }
        idx[vertical] = n;
        let id = topo.face_id(vertical, &idx[..dim]);
        topo.omega_faces.push(id);

        // Corner plate vertices of this face (clamped ring corners are None).
        let corners = 1usize << (dim - 1);
        let mut nodes = Vec::with_capacity(corners);
        for c in 0..corners {
            let mut vert = vec![0usize; dim - 1];
            let mut valid = true;
            for a in 0..dim - 1 {
                let j = cell[a] + ((c >> a) & 1);
                if j == 0 || j == n {
                    valid = false;
                }
                vert[a] = j;
            }
            nodes.push(if valid { Some(topo.plate_node_id(&vert)) } else { None });
        }
        topo.omega_corner_nodes.push(nodes);

        // Advance the lexicographic counter.
        let mut a = dim - 1;
        loop {
            if a == 0 {
                break;
            }
            a -= 1;
            cell[a] += 1;
            if cell[a] < n {
                break;
            }
            cell[a] = 0;
            if a == 0 {
                return Ok(topo);
            }
        }
        if dim == 1 {
            break;
        }
    }
    Ok(topo)
}

impl GridTopology {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn total_faces(&self) -> usize {
        self.total_faces
    }

    /// Faces of one velocity component.
    pub fn faces_per_component(&self) -> usize {
        (self.n + 1) * self.n.pow((self.dim - 1) as u32)
    }

    pub fn omega_faces(&self) -> &[usize] {
        &self.omega_faces
    }

    pub fn s_faces(&self) -> &[usize] {
        &self.s_faces
    }

    pub fn boundary_face_count(&self) -> usize {
        self.omega_faces.len() + self.s_faces.len()
    }

    pub fn is_boundary_face(&self, face: usize) -> bool {
        self.boundary[face].is_some()
    }

    /// Interior plate vertices per axis.
    pub fn plate_nodes_per_axis(&self) -> usize {
        self.plate_nodes_per_axis
    }

    /// Total interior plate vertices (the plate degrees of freedom).
    pub fn plate_node_count(&self) -> usize {
        self.plate_node_count
    }

    /// Corner plate vertices of the `k`-th `Omega` face.
    pub fn omega_corner_nodes(&self, k: usize) -> &[Option<usize>] {
        &self.omega_corner_nodes[k]
    }

    /// Global face id for velocity component `comp` at multi-index `idx`.
    pub fn face_id(&self, comp: usize, idx: &[usize]) -> usize {
        let n = self.n;
        let mut flat = 0usize;
        for a in 0..self.dim {
            let extent = if a == comp { n + 1 } else { n };
            debug_assert!(idx[a] < extent);
            flat = flat * extent + idx[a];
        }
        self.face_offset[comp] + flat
    }

    /// Component and multi-index of a global face id.
    pub fn face_multi_index(&self, face: usize) -> (usize, [usize; 3]) {
        let per_comp = self.faces_per_component();
        let comp = face / per_comp;
        let idx = self.face_multi_index_local(comp, face - self.face_offset[comp]);
        (comp, idx)
    }

    fn face_multi_index_local(&self, comp: usize, mut flat: usize) -> [usize; 3] {
        let n = self.n;
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            let extent = if a == comp { n + 1 } else { n };
            idx[a] = flat % extent;
            flat /= extent;
        }
        idx
    }

    /// Center of a face (velocity degree-of-freedom location).
    pub fn face_position(&self, face: usize) -> [f64; 3] {
        let (comp, idx) = self.face_multi_index(face);
        let mut pos = [0.0; 3];
        for a in 0..self.dim {
            pos[a] = if a == comp {
                idx[a] as f64 * self.h
            } else {
                (idx[a] as f64 + 0.5) * self.h
            };
        }
        pos
    }

    pub fn cell_id(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for a in 0..self.dim {
            debug_assert!(idx[a] < self.n);
            flat = flat * self.n + idx[a];
        }
        flat
    }

    pub fn cell_multi_index(&self, mut cell: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            idx[a] = cell % self.n;
            cell /= self.n;
        }
        idx
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let idx = self.cell_multi_index(cell);
        let mut pos = [0.0; 3];
        for a in 0..self.dim {
            pos[a] = (idx[a] as f64 + 0.5) * self.h;
        }
        pos
    }

    /// Plate vertex id from its interior vertex multi-index (entries in `1..n`).
    pub fn plate_node_id(&self, vert: &[usize]) -> usize {
        let m = self.plate_nodes_per_axis;
        let mut flat = 0usize;
        for a in 0..self.dim - 1 {
            debug_assert!(vert[a] >= 1 && vert[a] <= m);
            flat = flat * m + (vert[a] - 1);
        }
        flat
    }

    pub fn plate_node_multi_index(&self, mut node: usize) -> Vec<usize> {
        let m = self.plate_nodes_per_axis;
        let mut vert = vec![0usize; self.dim - 1];
        for a in (0..self.dim - 1).rev() {
            vert[a] = node % m + 1;
            node /= m;
        }
        vert
    }

    pub fn plate_node_position(&self, node: usize) -> [f64; 3] {
        let vert = self.plate_node_multi_index(node);
        let mut pos = [0.0; 3];
        for a in 0..self.dim - 1 {
            pos[a] = vert[a] as f64 * self.h;
        }
        pos[self.dim - 1] = 1.0;
        pos
    }

    /// Center of the `k`-th plate cell; coincides with the `k`-th `Omega` face center.
    pub fn plate_cell_center(&self, k: usize) -> [f64; 3] {
        self.face_position(self.omega_faces[k])
    }

    /// Outward unit normal of a boundary face.
    pub fn normal(&self, face: usize) -> Result<[f64; 3]> {
        if !self.is_boundary_face(face) {
            return Err(Error::config(format!("face {face} is not a boundary face")));
        }
        let (comp, idx) = self.face_multi_index(face);
        let mut nu = [0.0; 3];
        nu[comp] = if idx[comp] == 0 { -1.0 } else { 1.0 };
        Ok(nu)
    }
}

/// Boundary classification of a face id; interior faces are an error.
pub fn classify_boundary(topo: &GridTopology, face: usize) -> Result<BoundaryPatch> {
    if face >= topo.total_faces() {
        return Err(Error::config(format!("face id {face} out of range")));
    }
    topo.boundary[face]
        .ok_or_else(|| Error::config(format!("face {face} is an interior face")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(mode: DimMode, n: usize) -> GridTopology {
        build_grid(&GeometryConfig::new(mode, n)).unwrap()
    }

    #[test]
    fn analogue2d_n8_counts() {
        let topo = grid(DimMode::Analogue2d, 8);
        assert_eq!(topo.cell_count(), 64);
        assert_eq!(topo.omega_faces().len(), 8);
        assert_eq!(topo.plate_node_count(), 7);
        assert_eq!(topo.total_faces(), 2 * 9 * 8);
    }

    #[test]
    fn box3d_n4_top_patch() {
        let topo = grid(DimMode::Box3d, 4);
        assert_eq!(topo.omega_faces().len(), 16);
        for &f in topo.omega_faces() {
            assert_eq!(topo.normal(f).unwrap(), [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(build_grid(&GeometryConfig::new(DimMode::Analogue2d, 1)).is_err());
    }

    #[test]
    fn classification_by_position() {
        let topo = grid(DimMode::Analogue2d, 4);
        let top = topo.face_id(1, &[2, 4]);
        let bottom = topo.face_id(1, &[2, 0]);
        let side = topo.face_id(0, &[0, 2]);
        assert_eq!(classify_boundary(&topo, top).unwrap(), BoundaryPatch::Omega);
        assert_eq!(classify_boundary(&topo, bottom).unwrap(), BoundaryPatch::S);
        assert_eq!(classify_boundary(&topo, side).unwrap(), BoundaryPatch::S);
        let interior = topo.face_id(0, &[2, 2]);
        assert!(classify_boundary(&topo, interior).is_err());
    }

    #[test]
    fn partition_covers_boundary() {
        for n in 2..=32 {
            let topo = grid(DimMode::Analogue2d, n);
            let total_boundary = topo
                .s_faces()
                .len()
                .checked_add(topo.omega_faces().len())
                .unwrap();
            assert_eq!(total_boundary, 4 * n, "n={n}");
            // Every boundary face classified exactly once.
            let mut seen = vec![false; topo.total_faces()];
            for &f in topo.s_faces().iter().chain(topo.omega_faces()) {
                assert!(!seen[f]);
                seen[f] = true;
            }
        }
        for n in 2..=6 {
            let topo = grid(DimMode::Box3d, n);
            assert_eq!(topo.s_faces().len() + topo.omega_faces().len(), 6 * n * n);
        }
    }

    #[test]
    fn plate_cells_coincide_with_omega_faces() {
        for (mode, n) in [(DimMode::Analogue2d, 8), (DimMode::Box3d, 3)] {
            let topo = grid(mode, n);
            for (k, &f) in topo.omega_faces().iter().enumerate() {
                let face = topo.face_position(f);
                let cell = topo.plate_cell_center(k);
                assert_eq!(face, cell);
                // Corner vertices bracket the face center at half a spacing.
                for (c, corner) in topo.omega_corner_nodes(k).iter().enumerate() {
                    if let Some(node) = corner {
                        let pos = topo.plate_node_position(*node);
                        for a in 0..topo.dim() - 1 {
                            let offset = if (c >> a) & 1 == 1 { 0.5 } else { -0.5 };
                            let expect = face[a] + offset * topo.spacing();
                            assert!((pos[a] - expect).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }
}
