//! Subspaces of a coordinate space, stored as orthonormal column bases.

use crate::error::{Error, Result};
use crate::linalg::{column_space, hstack, orth_complement, Mat};

/// Default bound on the Frobenius distance of projectors for equality.
pub const PROJECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Mat,
}

impl Subspace {
    /// Span of the columns of `spanning`, orthonormalized at rank tolerance `tol`.
    pub fn span(spanning: &Mat, tol: f64) -> Self {
        Subspace {
            basis: column_space(spanning, tol, 0.0),
        }
    }

    /// Wraps a basis that is already orthonormal. Fails if it is not.
    pub fn from_orthonormal(basis: Mat) -> Result<Self> {
        let k = basis.ncols();
        let gram = basis.transpose() * &basis;
        if (gram - Mat::identity(k, k)).amax() > 1e-10 {
            return Err(Error::Precondition("basis columns are not orthonormal".into()));
        }
        Ok(Subspace { basis })
    }

    pub(crate) fn from_orthonormal_unchecked(basis: Mat) -> Self {
        Subspace { basis }
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace {
            basis: Mat::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            basis: Mat::identity(ambient, ambient),
        }
    }

    /// Span of the listed standard basis vectors (0-based indices).
    pub fn coordinate(ambient: usize, axes: &[usize]) -> Self {
        let mut b = Mat::zeros(ambient, axes.len());
        for (c, &i) in axes.iter().enumerate() {
            b[(i, c)] = 1.0;
        }
        Self::span(&b, 1e-12)
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn projector(&self) -> Mat {
        &self.basis * self.basis.transpose()
    }

    /// Frobenius distance between orthogonal projectors.
    pub fn distance(&self, other: &Subspace) -> f64 {
        if self.ambient_dim() != other.ambient_dim() {
            return f64::INFINITY;
        }
        (self.projector() - other.projector()).norm()
    }

    pub fn approx_eq(&self, other: &Subspace, projector_tol: f64) -> bool {
        self.distance(other) < projector_tol
    }

    pub fn contains_vector(&self, v: &Mat, tol: f64) -> bool {
        let r = v - self.projector() * v;
        r.norm() <= tol * v.norm().max(1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim()
    }

    /// Image `{B v : v in self}` inside the target of `b`. Rank is measured
    /// against the norm of `b` so that numerically vanishing images are zero.
    pub fn image(&self, b: &Mat, tol: f64) -> Result<Subspace> {
        check_ambient(b.ncols(), self.ambient_dim())?;
        let scale = crate::linalg::spectral_norm(b);
        Ok(Subspace {
            basis: column_space(&(b * &self.basis), tol, scale),
        })
    }

    pub fn sum(&self, other: &Subspace, tol: f64) -> Result<Subspace> {
        check_ambient(self.ambient_dim(), other.ambient_dim())?;
        Ok(Subspace {
            basis: column_space(&hstack(&self.basis, &other.basis), tol, 1.0),
        })
    }

    pub fn orthocomplement(&self) -> Subspace {
        Subspace {
            basis: orth_complement(&self.basis),
        }
    }

    /// `V ∩ W = (V⊥ + W⊥)⊥`.
    pub fn intersection(&self, other: &Subspace, tol: f64) -> Result<Subspace> {
        Ok(self
            .orthocomplement()
            .sum(&other.orthocomplement(), tol)?
            .orthocomplement())
    }

    /// Image of the subspace under an invertible change of coordinates.
    pub fn transform(&self, c: &Mat, tol: f64) -> Result<Subspace> {
        check_ambient(c.ncols(), self.ambient_dim())?;
        Ok(Subspace {
            basis: column_space(&(c * &self.basis), tol, 0.0),
        })
    }
}

fn check_ambient(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("ambient dimensions differ ({a} vs {b})")));
    }
    Ok(())
}

/// One operation of the subspace algebra.
pub enum SubspaceOp<'a> {
    Image(&'a Mat, &'a Subspace),
    Sum(&'a Subspace, &'a Subspace),
    Intersection(&'a Subspace, &'a Subspace),
    Orthocomplement(&'a Subspace),
}

pub fn subspace_algebra(op: SubspaceOp<'_>, tol: f64) -> Result<Subspace> {
    match op {
        SubspaceOp::Image(b, v) => v.image(b, tol),
        SubspaceOp::Sum(v, w) => v.sum(w, tol),
        SubspaceOp::Intersection(v, w) => v.intersection(w, tol),
        SubspaceOp::Orthocomplement(v) => Ok(v.orthocomplement()),
    }
}

/// Pushes `candidate` unless an approximately equal subspace is present.
/// Returns whether it was inserted.
pub fn push_unique(list: &mut Vec<Subspace>, candidate: Subspace, projector_tol: f64) -> bool {
    if list
        .iter()
        .any(|s| s.dim() == candidate.dim() && s.approx_eq(&candidate, projector_tol))
    {
        return false;
    }
    list.push(candidate);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TAU: f64 = 1e-9;

    #[test]
    fn lines_meet_in_zero() {
        let a = Subspace::coordinate(2, &[0]);
        let b = Subspace::coordinate(2, &[1]);
        assert_eq!(a.intersection(&b, TAU).unwrap().dim(), 0);
        assert_eq!(a.sum(&b, TAU).unwrap().dim(), 2);
    }

    #[test]
    fn sum_is_idempotent() {
        let v = Subspace::span(&Mat::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, -1.0]), TAU);
        let s = v.sum(&v, TAU).unwrap();
        assert!(s.approx_eq(&v, PROJECTOR_TOL));
    }

    #[test]
    fn image_under_coordinate_projection() {
        // Projection of R^3 onto the (x2, x3) coordinates.
        let p1 = Mat::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let plane = Subspace::coordinate(3, &[0, 1]);
        assert_eq!(plane.image(&p1, TAU).unwrap().dim(), 1);
    }

    #[test]
    fn numerically_null_image_is_zero() {
        let b = Mat::from_row_slice(1, 2, &[1.0, 1e-17]);
        let v = Subspace::coordinate(2, &[1]);
        assert_eq!(v.image(&b, TAU).unwrap().dim(), 0);
    }

    #[test]
    fn ambient_mismatch_is_an_error() {
        let a = Subspace::full(2);
        let b = Subspace::full(3);
        assert!(matches!(a.sum(&b, TAU), Err(Error::Dimension(_))));
    }

    #[test]
    fn dispatcher_matches_methods() {
        let a = Subspace::coordinate(3, &[0, 1]);
        let b = Subspace::coordinate(3, &[1, 2]);
        let i = subspace_algebra(SubspaceOp::Intersection(&a, &b), TAU).unwrap();
        assert!(i.approx_eq(&Subspace::coordinate(3, &[1]), PROJECTOR_TOL));
        let c = subspace_algebra(SubspaceOp::Orthocomplement(&a), TAU).unwrap();
        assert!(c.approx_eq(&Subspace::coordinate(3, &[2]), PROJECTOR_TOL));
    }

    fn random_subspace() -> impl Strategy<Value = Subspace> {
        (1usize..=8)
            .prop_flat_map(|n| (Just(n), 0usize..=n))
            .prop_flat_map(|(n, k)| {
                prop::collection::vec(-1.0f64..1.0, n * k)
                    .prop_map(move |v| Subspace::span(&Mat::from_vec(n, k, v), TAU))
            })
    }

    fn pair() -> impl Strategy<Value = (Subspace, Subspace)> {
        (2usize..=8).prop_flat_map(|n| {
            let one = (0usize..=n).prop_flat_map(move |k| {
                prop::collection::vec(-1.0f64..1.0, n * k)
                    .prop_map(move |v| Subspace::span(&Mat::from_vec(n, k, v), TAU))
            });
            (one.clone(), one)
        })
    }

    proptest! {
        #[test]
        fn basis_is_orthonormal(v in random_subspace()) {
            let k = v.dim();
            let g = v.basis().transpose() * v.basis();
            prop_assert!((g - Mat::identity(k, k)).amax() < 1e-10);
        }

        #[test]
        fn modular_dimension_formula((v, w) in pair()) {
            let s = v.sum(&w, TAU).unwrap();
            let i = v.intersection(&w, TAU).unwrap();
            prop_assert_eq!(s.dim() + i.dim(), v.dim() + w.dim());
        }

        #[test]
        fn complement_dimensions(v in random_subspace()) {
            prop_assert_eq!(v.dim() + v.orthocomplement().dim(), v.ambient_dim());
        }
    }
}
