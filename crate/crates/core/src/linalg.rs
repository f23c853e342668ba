//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Complex Ginibre matrix with unit-variance entries.
pub fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `diag(R)`
/// moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<CMatrix> {
    if dim < 1 {
        return param("unitary dimension must be positive");
    }
    let qr = ginibre(dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let ph = if n > 0.0 { rjj / n } else { ONE };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    Ok(q)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Eigendecomposition of a Hermitian matrix, kept so that `exp(-iHt)` can be
/// formed for many `t` at the cost of one diagonalization.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Mismatch { expected: h.nrows(), found: h.ncols() });
        }
        let scale = max_abs(h).max(1.0);
        let herr = hermiticity_error(h);
        if herr > 1e-10 * scale {
            return Err(Error::State(format!("matrix is not Hermitian (deviation {herr:.2e})")));
        }
        let sym = (h + h.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(sym);
        Ok(Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors })
    }

    /// `exp(-i H t)`.
    pub fn evolve(&self, t: f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let ph = C64::from_polar(1.0, -e * t);
            for i in 0..n {
                scaled[(i, j)] *= ph;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `f(H)` for a real function of the spectrum.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let v = f(e);
            for i in 0..n {
                scaled[(i, j)] *= v;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    Ok(HermitianEigen::new(h)?.evolve(t))
}

/// Bessel functions `J_0(x), ..., J_kmax(x)` by Miller's downward recurrence.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = (kmax.max(ax.ceil() as usize) + 40 + (4.0 * ax.sqrt()) as usize) | 1;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        if k - 1 <= kmax {
            out[k - 1] = cur;
        }
        if k - 1 > 0 && (k - 1) % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += cur;
    for (k, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if x < 0.0 && k % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// `exp(-i H t) v` by a Chebyshev expansion, where `apply(a, b)` sets
/// `b = H a` and the spectrum of `H` lies in `[-radius, radius]`. The series
/// is cut where the Bessel weights fall below double precision.
pub fn chebyshev_evolve(apply: impl Fn(&[C64], &mut [C64]), radius: f64, t: f64, v: &mut [C64]) {
    let x = radius * t;
    if x == 0.0 {
        return;
    }
    let kmax = (x.abs() + 20.0 + 6.0 * x.abs().cbrt()).ceil() as usize;
    let j = bessel_j_sequence(x, kmax);
    let n = v.len();
    let inv = 1.0 / radius;
    let mut prev = v.to_vec();
    let mut cur = vec![ZERO; n];
    apply(&prev, &mut cur);
    cur.iter_mut().for_each(|c| *c *= inv);
    let mut acc: Vec<C64> = prev.iter().map(|a| a * j[0]).collect();
    let mut phase = -I;
    let mut scratch = vec![ZERO; n];
    for (k, &jk) in j.iter().enumerate().skip(1) {
        let w = phase * (2.0 * jk);
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += w * c;
        }
        if k == kmax {
            break;
        }
        apply(&cur, &mut scratch);
        for (s, p) in scratch.iter_mut().zip(&prev) {
            *s = *s * (2.0 * inv) - p;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut scratch);
        phase *= -I;
    }
    v.copy_from_slice(&acc);
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn haar_is_unitary_and_deterministic() {
        let mut rng = rng_from_seed(11);
        for dim in [1, 2, 4, 16] {
            let u = haar_unitary(dim, &mut rng).unwrap();
            assert!(unitarity_error(&u) < 1e-12);
        }
        let a = haar_unitary(4, &mut rng_from_seed(5)).unwrap();
        let b = haar_unitary(4, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        assert!(haar_unitary(0, &mut rng).is_err());
    }

    #[test]
    fn haar_first_moment() {
        // E|U_00|^2 = 1/dim
        let mut rng = rng_from_seed(99);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| haar_unitary(2, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn haar_phase_is_uniform() {
        // a QR without the phase fix biases arg(U_00) towards 0
        let mut rng = rng_from_seed(3);
        let n = 20_000;
        let c: f64 = (0..n)
            .map(|_| {
                let u = haar_unitary(2, &mut rng).unwrap();
                let z = u[(0, 0)];
                z.re / z.norm()
            })
            .sum::<f64>()
            / n as f64;
        assert!(c.abs() < 0.03, "mean cos(arg U00) = {c}");
    }

    #[test]
    fn evolution_identities() {
        let z = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let u0 = expm_hermitian(&z, 0.0).unwrap();
        assert!(max_abs(&(u0 - CMatrix::identity(2, 2))) < 1e-14);
        let upi = expm_hermitian(&z, std::f64::consts::PI).unwrap();
        assert!(max_abs(&(upi + CMatrix::identity(2, 2))) < 1e-12);

        let mut rng = rng_from_seed(1);
        let g = ginibre(8, &mut rng);
        let h = (&g + g.adjoint()).scale(0.5);
        let eig = HermitianEigen::new(&h).unwrap();
        let lhs = eig.evolve(0.7);
        let rhs = eig.evolve(0.3) * eig.evolve(0.4);
        assert!(max_abs(&(lhs - rhs)) < 1e-9);
        assert!(unitarity_error(&eig.evolve(3.1)) < 1e-10);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(HermitianEigen::new(&m).is_err());
    }

    #[test]
    fn bessel_reference_values() {
        let cases = [
            (1.0, 0, 0.7651976865579666),
            (1.0, 1, 0.44005058574493355),
            (10.0, 5, -0.2340615281867936),
            (30.0, 0, -0.08636798358104021),
            (30.0, 40, 0.00036120236088965705),
            (-2.0, 3, -0.12894324947440208),
        ];
        for (x, k, want) in cases {
            let got = bessel_j_sequence(x, 45)[k];
            assert!((got - want).abs() < 1e-14, "J_{k}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn chebyshev_matches_eigendecomposition() {
        let mut rng = rng_from_seed(21);
        let g = ginibre(16, &mut rng);
        let h = (&g + g.adjoint()).scale(0.5);
        let radius = h.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
        let eig = HermitianEigen::new(&h).unwrap();
        let v0 = CVector::from_fn(16, |i, _| C64::new(i as f64, 1.0 - i as f64));
        for t in [0.3, -1.0, 4.5] {
            let mut v: Vec<C64> = v0.iter().copied().collect();
            chebyshev_evolve(
                |a, b| {
                    let out = &h * CVector::from_column_slice(a);
                    b.copy_from_slice(out.as_slice());
                },
                radius,
                t,
                &mut v,
            );
            let want = eig.evolve(t) * &v0;
            let err = v.iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-11, "t = {t}: {err:.2e}");
        }
    }
}
