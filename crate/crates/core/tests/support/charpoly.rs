//! Reference eigenvalues of a symmetric 3×3 matrix from its characteristic polynomial,
//! evaluated in double-double arithmetic and bracketed by the critical points.

#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;

#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, a.mul_add(b, -p))
}

impl Dd {
    fn from(a: f64) -> Self {
        Dd(a, 0.0)
    }
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let e = s.1 + self.1 + o.1;
        two_sum(s.0, e)
    }
    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }
    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.0, o.0);
        let e = p.1 + (self.0 * o.1 + self.1 * o.0);
        two_sum(p.0, e)
    }
    fn val(self) -> f64 {
        self.0 + self.1
    }
}

/// Coefficients of `λ³ − c2 λ² + c1 λ − c0`.
struct CharPoly {
    c2: Dd,
    c1: Dd,
    c0: Dd,
}

impl CharPoly {
    fn new(a: &Matrix3<f64>) -> Self {
        let m = |i: usize, j: usize| Dd::from(a[(i, j)]);
        let c2 = m(0, 0).add(m(1, 1)).add(m(2, 2));
        let minor = |i: usize, j: usize| m(i, i).mul(m(j, j)).sub(m(i, j).mul(m(j, i)));
        let c1 = minor(0, 1).add(minor(0, 2)).add(minor(1, 2));
        let c0 = m(0, 0)
            .mul(minor(1, 2))
            .sub(m(0, 1).mul(m(1, 0).mul(m(2, 2)).sub(m(1, 2).mul(m(2, 0)))))
            .add(m(0, 2).mul(m(1, 0).mul(m(2, 1)).sub(m(1, 1).mul(m(2, 0)))));
        Self { c2, c1, c0 }
    }

    fn eval(&self, x: f64) -> Dd {
        let x = Dd::from(x);
        x.sub(self.c2).mul(x).add(self.c1).mul(x).sub(self.c0)
    }

    /// Root of the monotone piece on `[lo, hi]`; the endpoint of least magnitude when the
    /// polynomial does not change sign there.
    fn bisect(&self, mut lo: f64, mut hi: f64) -> f64 {
        let mut flo = self.eval(lo).val();
        let fhi = self.eval(hi).val();
        if flo == 0.0 {
            return lo;
        }
        if fhi == 0.0 {
            return hi;
        }
        if flo.signum() == fhi.signum() {
            return if flo.abs() <= fhi.abs() { lo } else { hi };
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.eval(mid).val();
            if fm == 0.0 {
                return mid;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn charpoly_eigenvalues(a: &Matrix3<f64>) -> [f64; 3] {
    let p = CharPoly::new(a);
    let bound = a.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let c2 = p.c2.val();
    // critical points of p: 3λ² − 2 c2 λ + c1 = 0
    let disc = p.c2.mul(p.c2).sub(Dd::from(3.0).mul(p.c1)).val().max(0.0).sqrt();
    let k1 = (c2 - disc) / 3.0;
    let k2 = (c2 + disc) / 3.0;
    let mut r = [p.bisect(-bound, k1), p.bisect(k1, k2), p.bisect(k2, bound)];
    r.sort_by(f64::total_cmp);
    r
}

/// Random symmetric test matrices: dense, near-double, near-triple and scaled spectra.
pub fn random_symmetric<R: Rng>(rng: &mut R, i: usize) -> Matrix3<f64> {
    let rot = Rotation3::from_euler_angles(
        rng.random_range(-3.2..3.2),
        rng.random_range(-1.6..1.6),
        rng.random_range(-3.2..3.2),
    )
    .into_inner();
    let gap = 10f64.powf(rng.random_range(-12.0..-2.0));
    let base: f64 = rng.random_range(-1.0..1.0);
    let spectrum = match i % 4 {
        0 => {
            let mut m = Matrix3::zeros();
            for r in 0..3 {
                for c in r..3 {
                    let v = rng.random_range(-1.0..1.0);
                    m[(r, c)] = v;
                    m[(c, r)] = v;
                }
            }
            return m;
        }
        1 => Vector3::new(base, base + gap, rng.random_range(-1.0..1.0)),
        2 => Vector3::new(base, base + gap, base + gap * rng.random_range(1.0..3.0)),
        _ => Vector3::new(
            rng.random_range(0.0..1e-6),
            rng.random_range(0.0..1e-2),
            rng.random_range(0.0..1e-2),
        ),
    };
    let m = rot * Matrix3::from_diagonal(&spectrum) * rot.transpose();
    (m + m.transpose()) * 0.5
}
