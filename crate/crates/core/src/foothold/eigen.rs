//! Symmetric 3×3 eigendecomposition.
//!
//! Closed-form trigonometric solution for well-separated spectra; cyclic Jacobi rotations
//! when eigenvalues cluster or the closed form fails its residual check.

use nalgebra::{Matrix3, Vector3};

/// Relative eigenvalue gap (on the max-entry-normalised matrix) below which the closed
/// form is abandoned. The trigonometric route loses roughly `eps / gap` accuracy as two
/// roots merge, so the switch has to happen well before the gap reaches round-off.
const CLUSTER_GAP: f64 = 1e-5;
/// Residual tolerance on the normalised matrix for accepting the closed form.
const CLOSED_FORM_RESIDUAL: f64 = 1e-11;

/// Eigenpairs sorted so that `values[0] <= values[1] <= values[2]`; `vectors[j]` is the
/// unit eigenvector of `values[j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

impl SymEigen3 {
    /// `max_j ‖A v_j − λ_j v_j‖`.
    pub fn max_residual(&self, a: &Matrix3<f64>) -> f64 {
        (0..3)
            .map(|j| (a * self.vectors[j] - self.values[j] * self.vectors[j]).norm())
            .fold(0.0, f64::max)
    }
}

/// Which route produced a decomposition; exposed for diagnostics and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenRoute {
    Trivial,
    ClosedForm,
    Jacobi,
}

pub fn sym_eigen3(a: &Matrix3<f64>) -> SymEigen3 {
    sym_eigen3_with_route(a).0
}

pub fn sym_eigen3_with_route(a: &Matrix3<f64>) -> (SymEigen3, EigenRoute) {
    let a = symmetrize(a);
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return (
            SymEigen3 { values: [0.0; 3], vectors: [Vector3::x(), Vector3::y(), Vector3::z()] },
            EigenRoute::Trivial,
        );
    }
    let b = a / scale;
    if let Some(mut eig) = deflated(&b) {
        for v in &mut eig.values {
            *v *= scale;
        }
        return (eig, EigenRoute::Trivial);
    }
    let (mut eig, route) = match closed_form(&b) {
        Some(e) => (e, EigenRoute::ClosedForm),
        None => (jacobi(&b), EigenRoute::Jacobi),
    };
    for v in &mut eig.values {
        *v *= scale;
    }
    (eig, route)
}

fn symmetrize(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a + a.transpose()) * 0.5
}

/// Exact split when some axis is decoupled (both of its off-diagonal entries are zero).
fn deflated(b: &Matrix3<f64>) -> Option<SymEigen3> {
    let k = (0..3).find(|&k| (0..3).all(|j| j == k || b[(k, j)] == 0.0))?;
    let (i, j) = match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (a, off, c) = (b[(i, i)], b[(i, j)], b[(j, j)]);
    let (cs, sn) = if off == 0.0 {
        (1.0, 0.0)
    } else {
        let theta = (c - a) / (2.0 * off);
        let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
        let cs = 1.0 / (t * t + 1.0).sqrt();
        (cs, t * cs)
    };
    let (l_i, l_j) = if off == 0.0 { (a, c) } else { (a - (sn / cs) * off, c + (sn / cs) * off) };
    let mut u = Vector3::zeros();
    u[i] = cs;
    u[j] = -sn;
    let mut w = Vector3::zeros();
    w[i] = sn;
    w[j] = cs;
    let mut e = Vector3::zeros();
    e[k] = 1.0;
    let mut pairs = [(b[(k, k)], e), (l_i, u), (l_j, w)];
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Some(SymEigen3 { values: pairs.map(|p| p.0), vectors: pairs.map(|p| p.1) })
}

fn closed_form(b: &Matrix3<f64>) -> Option<SymEigen3> {
    let p1 = b[(0, 1)].powi(2) + b[(0, 2)].powi(2) + b[(1, 2)].powi(2);
    let q = b.trace() / 3.0;
    let p2 = (b[(0, 0)] - q).powi(2) + (b[(1, 1)] - q).powi(2) + (b[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p < CLUSTER_GAP {
        // all three roots within the cluster tolerance of each other
        return None;
    }
    let c = (b - Matrix3::identity() * q) / p;
    let r = (c.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + third).cos();
    let mid = 3.0 * q - hi - lo;
    if (mid - lo).min(hi - mid) < CLUSTER_GAP {
        return None;
    }
    let v_lo = null_vector(&(b - Matrix3::identity() * lo))?;
    let v_hi = null_vector(&(b - Matrix3::identity() * hi))?;
    let v_mid = v_hi.cross(&v_lo).try_normalize(1e-30)?;
    // re-orthogonalise the top vector against the other two
    let v_hi = v_lo.cross(&v_mid);
    let eig = SymEigen3 { values: [lo, mid, hi], vectors: [v_lo, v_mid, v_hi] };
    (eig.max_residual(b) <= CLOSED_FORM_RESIDUAL).then_some(eig)
}

/// Unit vector spanning the null space of a rank-2 symmetric matrix: the largest cross
/// product of its row pairs.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let r0 = m.row(0).transpose();
    let r1 = m.row(1).transpose();
    let r2 = m.row(2).transpose();
    let cands = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = cands
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .copied()?;
    best.try_normalize(1e-150)
}

/// Cyclic Jacobi on a symmetric matrix. Always converges for 3×3.
pub fn jacobi(a: &Matrix3<f64>) -> SymEigen3 {
    let mut m = symmetrize(a);
    let mut v = Matrix3::<f64>::identity();
    for _sweep in 0..64 {
        let off = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        let diag = m[(0, 0)].powi(2) + m[(1, 1)].powi(2) + m[(2, 2)].powi(2);
        if off == 0.0 || off <= 1e-36 * diag {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::<f64>::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            m = rot.transpose() * m * rot;
            m[(p, q)] = 0.0;
            m[(q, p)] = 0.0;
            v *= rot;
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    SymEigen3 {
        values: idx.map(|i| m[(i, i)]),
        vectors: idx.map(|i| v.column(i).normalize()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &Matrix3<f64>) -> SymEigen3 {
        let e = sym_eigen3(a);
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2], "{:?}", e.values);
        let lam3 = e.values[2].abs().max(1.0);
        assert!(e.max_residual(a) <= 1e-8 * lam3, "residual {}", e.max_residual(a));
        for v in &e.vectors {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        e
    }

    #[test]
    fn diagonal() {
        let e = check(&Matrix3::from_diagonal(&Vector3::new(3.0, 1.0, 2.0)));
        assert_eq!(e.values, [1.0, 2.0, 3.0]);
        assert!((e.vectors[0].y.abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_and_identity() {
        let e = check(&Matrix3::zeros());
        assert_eq!(e.values, [0.0; 3]);
        let e = check(&Matrix3::identity());
        assert_eq!(e.values, [1.0; 3]);
    }

    #[test]
    fn plane_covariance() {
        // points spread in x-y only
        let a = Matrix3::new(0.02, 0.001, 0.0, 0.001, 0.01, 0.0, 0.0, 0.0, 0.0);
        let e = check(&a);
        assert!(e.values[0].abs() < 1e-18);
        assert!((e.vectors[0].z.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clustered_spectrum_uses_jacobi() {
        // rotate diag(1, 1 + 1e-12, 2) away from the axes
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let a = r * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0 + 1e-12, 2.0)) * r.transpose();
        let (e, route) = sym_eigen3_with_route(&a);
        assert_eq!(route, EigenRoute::Jacobi);
        assert!(e.max_residual(&a) < 1e-14);
        assert!((e.values[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn decoupled_axis_is_exact() {
        let a = Matrix3::new(0.02, 0.001, 0.0, 0.001, 0.01, 0.0, 0.0, 0.0, 0.0);
        let (e, route) = sym_eigen3_with_route(&a);
        assert_eq!(route, EigenRoute::Trivial);
        assert_eq!(e.values[0], 0.0);
        assert_eq!(e.vectors[0], Vector3::z());
        assert!(e.max_residual(&a) < 1e-17);
    }

    #[test]
    fn separated_spectrum_uses_closed_form() {
        let a = Matrix3::new(2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5);
        let (_, route) = sym_eigen3_with_route(&a);
        assert_eq!(route, EigenRoute::ClosedForm);
        check(&a);
    }

    #[test]
    fn jacobi_matches_closed_form() {
        let a = Matrix3::new(4.0, 1.0, -2.0, 1.0, 3.0, 0.5, -2.0, 0.5, 1.0);
        let e1 = sym_eigen3(&a);
        let e2 = jacobi(&a);
        for j in 0..3 {
            assert!((e1.values[j] - e2.values[j]).abs() < 1e-12);
        }
    }
}
