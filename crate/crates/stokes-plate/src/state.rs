//! State triples `(fluid velocity, plate displacement, plate velocity)`.
//!
//! The fluid vector holds one value per staggered face (boundary faces
//! included; wall faces are pinned to zero and interface faces to the
//! interpolated plate velocity by the constraint machinery). Plate vectors
//! hold one value per interior vertex of the elastic patch.

use nalgebra::{Complex, DVector};

pub type C64 = Complex<f64>;

/// Real-valued state triple (time-domain contexts).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub fluid: DVector<f64>,
    pub displacement: DVector<f64>,
    pub velocity: DVector<f64>,
}

/// Complex-valued state triple (frequency-domain contexts).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexState {
    pub fluid: DVector<C64>,
    pub displacement: DVector<C64>,
    pub velocity: DVector<C64>,
}

impl State {
    pub fn zeros(faces: usize, plate: usize) -> Self {
        State {
            fluid: DVector::zeros(faces),
            displacement: DVector::zeros(plate),
            velocity: DVector::zeros(plate),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.fluid.len(), self.displacement.len())
    }

    pub fn same_layout(&self, other: &State) -> bool {
        self.fluid.len() == other.fluid.len()
            && self.displacement.len() == other.displacement.len()
            && self.velocity.len() == other.velocity.len()
    }

    /// Flat vector `[fluid; displacement; velocity]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let (nf, m) = self.dims();
        let mut x = DVector::zeros(nf + 2 * m);
        x.rows_mut(0, nf).copy_from(&self.fluid);
        x.rows_mut(nf, m).copy_from(&self.displacement);
        x.rows_mut(nf + m, m).copy_from(&self.velocity);
        x
    }

    pub fn from_flat(x: &DVector<f64>, faces: usize, plate: usize) -> Self {
        State {
            fluid: x.rows(0, faces).into_owned(),
            displacement: x.rows(faces, plate).into_owned(),
            velocity: x.rows(faces + plate, plate).into_owned(),
        }
    }

    pub fn to_complex(&self) -> ComplexState {
        ComplexState {
            fluid: self.fluid.map(|v| C64::new(v, 0.0)),
            displacement: self.displacement.map(|v| C64::new(v, 0.0)),
            velocity: self.velocity.map(|v| C64::new(v, 0.0)),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &State) {
        self.fluid.axpy(alpha, &other.fluid, 1.0);
        self.displacement.axpy(alpha, &other.displacement, 1.0);
        self.velocity.axpy(alpha, &other.velocity, 1.0);
    }

    pub fn scale(&self, alpha: f64) -> State {
        State {
            fluid: &self.fluid * alpha,
            displacement: &self.displacement * alpha,
            velocity: &self.velocity * alpha,
        }
    }
}

impl ComplexState {
    pub fn zeros(faces: usize, plate: usize) -> Self {
        ComplexState {
            fluid: DVector::zeros(faces),
            displacement: DVector::zeros(plate),
            velocity: DVector::zeros(plate),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.fluid.len(), self.displacement.len())
    }

    pub fn to_flat(&self) -> DVector<C64> {
        let (nf, m) = self.dims();
        let mut x = DVector::zeros(nf + 2 * m);
        x.rows_mut(0, nf).copy_from(&self.fluid);
        x.rows_mut(nf, m).copy_from(&self.displacement);
        x.rows_mut(nf + m, m).copy_from(&self.velocity);
        x
    }

    pub fn from_flat(x: &DVector<C64>, faces: usize, plate: usize) -> Self {
        ComplexState {
            fluid: x.rows(0, faces).into_owned(),
            displacement: x.rows(faces, plate).into_owned(),
            velocity: x.rows(faces + plate, plate).into_owned(),
        }
    }

    pub fn real_part(&self) -> State {
        State {
            fluid: self.fluid.map(|v| v.re),
            displacement: self.displacement.map(|v| v.re),
            velocity: self.velocity.map(|v| v.re),
        }
    }

    pub fn imag_part(&self) -> State {
        State {
            fluid: self.fluid.map(|v| v.im),
            displacement: self.displacement.map(|v| v.im),
            velocity: self.velocity.map(|v| v.im),
        }
    }

    pub fn conjugate(&self) -> ComplexState {
        ComplexState {
            fluid: self.fluid.map(|v| v.conj()),
            displacement: self.displacement.map(|v| v.conj()),
            velocity: self.velocity.map(|v| v.conj()),
        }
    }

    pub fn from_parts(re: &State, im: &State) -> ComplexState {
        ComplexState {
            fluid: re.fluid.zip_map(&im.fluid, |a, b| C64::new(a, b)),
            displacement: re
                .displacement
                .zip_map(&im.displacement, |a, b| C64::new(a, b)),
            velocity: re.velocity.zip_map(&im.velocity, |a, b| C64::new(a, b)),
        }
    }
}
