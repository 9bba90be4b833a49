//! Cyclic Jacobi eigensolver for symmetric 3×3 matrices.

use nalgebra::{Matrix3, Vector3};

use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen3<T: Real> {
    /// Eigenvalues sorted so that `values[0] >= values[1] >= values[2]`.
    pub values: Vector3<T>,
    /// Unit eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix3<T>,
}

const MAX_SWEEPS: usize = 64;

pub fn symmetric_eigen3<T: Real>(m: &Matrix3<T>) -> SymmetricEigen3<T> {
    let mut a = (m + m.transpose()) * lit::<T>(0.5);
    let mut v = Matrix3::<T>::identity();
    let scale = a.abs().max();
    let tol = T::default_epsilon() * scale;

    for _ in 0..MAX_SWEEPS {
        let off = a[(0, 1)].abs() + a[(0, 2)].abs() + a[(1, 2)].abs();
        if off <= tol || off == T::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == T::zero() {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (apq * lit(2.0));
            let t = if theta >= T::zero() {
                T::one() / (theta + (theta * theta + T::one()).sqrt())
            } else {
                -T::one() / (-theta + (theta * theta + T::one()).sqrt())
            };
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            let mut j = Matrix3::<T>::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            a = j.transpose() * a * j;
            a[(p, q)] = T::zero();
            a[(q, p)] = T::zero();
            v *= j;
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &k| {
        a[(k, k)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&k))
    });
    let values = Vector3::new(a[(order[0], order[0])], a[(order[1], order[1])], a[(order[2], order[2])]);
    let vectors = Matrix3::from_columns(&[
        v.column(order[0]).normalize(),
        v.column(order[1]).normalize(),
        v.column(order[2]).normalize(),
    ]);
    SymmetricEigen3 { values, vectors }
}
