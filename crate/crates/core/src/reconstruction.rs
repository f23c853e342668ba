//! Reconstruction coefficients, the measurement channel and its inverse.
//!
//! For a locally scrambled ensemble with entanglement feature `W`, the
//! inverse channel is `M^-1[sigma] = d^N sum_A r_A sigma_A` where `sigma_A`
//! is the reduced snapshot on `A` padded with the maximally mixed state.
//! On a Pauli `P` it acts as multiplication by `d^N kappa(supp P)` with
//! `kappa = superset_sum(r)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::state::{DensityMatrix, PureState};
use crate::error::{param, Error, Result};
use crate::lattice::{per_site_in_place, LatticeVector};
use crate::linalg::{hermiticity_error, CMatrix, HermitianEigen, ZERO};
use crate::region::{check_dim, check_sites, fusion_site_tensor, full_mask, weingarten_unchecked, Region};
use crate::scalar::Scalar;

/// Condition estimates above this are reported as a singular ensemble.
pub const MAX_CONDITION: f64 = 1e10;
/// Largest register handled by the dense solve.
pub const MAX_DENSE_SOLVE_SITES: usize = 12;
const RESIDUAL_TOL: f64 = 1e-6;
const TRACE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconSource {
    DenseSolve,
    ClosedForm,
    AnalyticTwoQudit,
    GlobalHaar,
    LocalHaar,
    /// Coefficients supplied by the caller, e.g. read from a file.
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconVector {
    pub r: LatticeVector<f64>,
    pub d: u32,
    pub source: ReconSource,
    /// `max_B |(M r - e_Omega)_B|`, when it was computed.
    pub residual: Option<f64>,
    pub condition: Option<f64>,
}

impl ReconVector {
    pub fn n_sites(&self) -> usize {
        self.r.n_sites()
    }

    /// `kappa(S) = sum_{A >= S} r_A`, the Pauli eigenvalue of `M^-1` up to `d^N`.
    pub fn kappa(&self) -> LatticeVector<f64> {
        self.r.superset_sum()
    }

    fn checked(self) -> Result<Self> {
        let n = self.n_sites();
        let target = (self.d as f64).powi(-(n as i32));
        let s = self.r.sum();
        let l1: f64 = self.r.as_slice().iter().map(|v| v.abs()).sum();
        if !self.r.is_finite() || (s - target).abs() > TRACE_TOL.max(l1 * 1e-12) {
            return Err(Error::State(format!("coefficients sum to {s}, expected {target}")));
        }
        if let Some(res) = self.residual {
            if res > RESIDUAL_TOL {
                return Err(Error::Singular { condition: self.condition.unwrap_or(f64::INFINITY) });
            }
        }
        Ok(self)
    }
}

fn check_ef<T: Scalar>(w: &LatticeVector<T>) -> Result<()> {
    let n = w.n_sites();
    let near = |v: T| (v - T::one()).approx_f64().abs() < 1e-9;
    if !near(w[0]) || !near(w[full_mask(n) as usize]) {
        return param("an entanglement feature needs W[empty] = W[full] = 1");
    }
    Ok(())
}

/// `(M r)_B = sum_{A,C} f_{A,B,C} W_C r_A`, in `O(N 4^N)`.
pub fn apply_fusion_system<T: Scalar>(w: &LatticeVector<T>, r: &LatticeVector<T>, d: u32) -> Result<LatticeVector<T>> {
    check_dim(d)?;
    let n = w.n_sites();
    if r.n_sites() != n {
        return Err(Error::Mismatch { expected: n, found: r.n_sites() });
    }
    let f = fusion_site_tensor::<T>(d);
    let mut out = LatticeVector::zeros(n)?;
    let mut col = vec![T::zero(); w.len()];
    for a in 0..w.len() {
        if r[a] == T::zero() {
            continue;
        }
        col.copy_from_slice(w.as_slice());
        per_site_in_place(&mut col, |i| f[a >> i & 1]);
        for (o, c) in out.as_mut_slice().iter_mut().zip(&col) {
            *o += *c * r[a];
        }
    }
    Ok(out)
}

/// The matrix `M_{B,A} = sum_C f_{A,B,C} W_C`.
pub fn fusion_matrix(w: &LatticeVector<f64>, d: u32) -> Result<DMatrix<f64>> {
    check_dim(d)?;
    let dim = w.len();
    let f = fusion_site_tensor::<f64>(d);
    let mut m = DMatrix::zeros(dim, dim);
    let mut col = vec![0.0; dim];
    for a in 0..dim {
        col.copy_from_slice(w.as_slice());
        per_site_in_place(&mut col, |i| f[a >> i & 1]);
        m.column_mut(a).copy_from_slice(&col);
    }
    Ok(m)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Hager's estimate of `||A^-1||_1` from an LU factorization `P A = L U`.
fn inverse_norm_estimate(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Option<f64> {
    let n = lu.l().nrows();
    let l = lu.l();
    let u = lu.u();
    let p = lu.p();
    let solve = |b: &DVector<f64>| lu.solve(b);
    let solve_t = |b: &DVector<f64>| -> Option<DVector<f64>> {
        // A^T = U^T L^T P
        let w = u.tr_solve_upper_triangular(b)?;
        let mut v = l.tr_solve_lower_triangular(&w)?;
        p.inv_permute_rows(&mut v);
        Some(v)
    };
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = solve(&x)?;
        est = y.iter().map(|v| v.abs()).sum();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve_t(&xi)?;
        let (j, zmax) = z.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    Some(est)
}

/// Solves `M r = e_Omega` by partial-pivot LU for any local dimension.
pub fn solve_recon_dense(w: &LatticeVector<f64>, d: u32) -> Result<ReconVector> {
    check_dim(d)?;
    let n = w.n_sites();
    if n > MAX_DENSE_SOLVE_SITES {
        return param(format!("dense solve supports at most {MAX_DENSE_SOLVE_SITES} sites"));
    }
    check_ef(w)?;
    let m = fusion_matrix(w, d)?;
    let dim = w.len();
    let norm = one_norm(&m);
    let lu = m.clone().lu();
    let singular = |c: f64| Error::Singular { condition: c };
    let inv_norm = inverse_norm_estimate(&lu).ok_or_else(|| singular(f64::INFINITY))?;
    let condition = norm * inv_norm;
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(singular(condition));
    }
    let mut e = DVector::zeros(dim);
    e[dim - 1] = 1.0;
    let r = lu.solve(&e).ok_or_else(|| singular(condition))?;
    let residual = (&m * &r - &e).amax();
    log::debug!("dense solve N={n}: condition {condition:.3e}, residual {residual:.3e}");
    ReconVector {
        r: LatticeVector::from_vec(r.as_slice().to_vec(), n)?,
        d,
        source: ReconSource::DenseSolve,
        residual: Some(residual),
        condition: Some(condition),
    }
    .checked()
}

/// Qubit closed form
/// `r_A = (-1)^|A| 2^-N sum_{S >= A} 3^|S| / sum_{B <= S} (-2)^|B| W_B`.
pub fn closed_form_coefficients<T: Scalar>(w: &LatticeVector<T>) -> Result<LatticeVector<T>> {
    check_ef(w)?;
    let n = w.n_sites();
    let minus_two = T::from_i64(-2);
    let three = T::from_i64(3);
    let den = LatticeVector::from_fn(n, |b| minus_two.powi_exact(b.count_ones() as i32) * w[b as usize])?.subset_sum();
    let mut g = LatticeVector::zeros(n)?;
    for s in 0..den.len() {
        let v = den[s];
        if v == T::zero() || v.approx_f64().abs() < 1e-12 {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        g[s] = three.powi_exact((s as u32).count_ones() as i32) / v;
    }
    let sum = g.superset_sum();
    let scale = T::from_i64(2).powi_exact(-(n as i32));
    LatticeVector::from_fn(n, |a| {
        let sign = if a.count_ones() % 2 == 0 { T::one() } else { -T::one() };
        sign * scale * sum[a as usize]
    })
}

/// Closed-form solve for qubits. The residual is checked up to
/// [`MAX_DENSE_SOLVE_SITES`]; beyond that only the trace condition is.
pub fn solve_recon_closed_form(w: &LatticeVector<f64>) -> Result<ReconVector> {
    let r = closed_form_coefficients(w)?;
    let residual = if w.n_sites() <= MAX_DENSE_SOLVE_SITES {
        let mut res = apply_fusion_system(w, &r, 2)?;
        let last = res.len() - 1;
        res[last] -= 1.0;
        Some(res.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs())))
    } else {
        None
    };
    ReconVector { r, d: 2, source: ReconSource::ClosedForm, residual, condition: None }.checked()
}

/// Exact coefficients `(r_empty, r_1, r_2, r_12)` for two qudits with
/// `W = (1, w, w, 1)`.
pub fn two_qudit_coefficients<T: Scalar>(w: T, d: u32) -> Result<[T; 4]> {
    check_dim(d)?;
    let dd = T::from_i64(d as i64);
    let one = T::one();
    let two = T::from_i64(2);
    let three = T::from_i64(3);
    let lo = (two * dd / (dd * dd + one)).approx_f64();
    let wf = w.approx_f64();
    if !(lo - 1e-12..=1.0 + 1e-12).contains(&wf) {
        return param(format!("w = {wf} outside [{lo}, 1]"));
    }
    let p = dd * w - one;
    let q = dd * dd - two * dd * w + one;
    if p == T::zero() || q == T::zero() || p.approx_f64().abs() < 1e-14 || q.approx_f64().abs() < 1e-14 {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    let d2 = dd * dd;
    let d3 = d2 * dd;
    let r0 = (d3 * w - three * d2 + three * dd * w - two * w * w + one) / (p * q);
    let r1 = (-d2 * d2 * w + two * d3 - two * dd + w) / (dd * p * q);
    let r12 = (d2 - one) * (d2 - one) / (d2 * q);
    Ok([r0, r1, r1, r12])
}

pub fn two_qudit_analytic_r(w: f64, d: u32) -> Result<ReconVector> {
    let r = two_qudit_coefficients(w, d)?;
    let wv = LatticeVector::from_vec(vec![1.0, w, w, 1.0], 2)?;
    let mut res = apply_fusion_system(&wv, &LatticeVector::from_vec(r.to_vec(), 2)?, d)?;
    res[3] -= 1.0;
    let residual = res.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ReconVector { r: LatticeVector::from_vec(r.to_vec(), 2)?, d, source: ReconSource::AnalyticTwoQudit, residual: Some(residual), condition: None }
        .checked()
}

/// `M^-1[sigma] = (d^N + 1) sigma - 1`.
pub fn global_haar_r(n_sites: usize, d: u32) -> Result<ReconVector> {
    check_sites(n_sites)?;
    check_dim(d)?;
    let full = full_mask(n_sites) as usize;
    let dn = (d as f64).powi(n_sites as i32);
    let mut r = LatticeVector::zeros(n_sites)?;
    r[0] = -1.0;
    r[full] += (dn + 1.0) / dn;
    ReconVector { r, d, source: ReconSource::GlobalHaar, residual: None, condition: None }.checked()
}

/// `M^-1 = (x)_i ((d + 1) sigma_i - 1)`, i.e. `r_A = (-1)^{N-|A|} ((d+1)/d)^|A|`.
pub fn local_haar_r(n_sites: usize, d: u32) -> Result<ReconVector> {
    check_sites(n_sites)?;
    check_dim(d)?;
    let g = (d as f64 + 1.0) / d as f64;
    let r = LatticeVector::from_fn(n_sites, |a| {
        let k = a.count_ones() as i32;
        let sign = if (n_sites as i32 - k) % 2 == 0 { 1.0 } else { -1.0 };
        sign * g.powi(k)
    })?;
    ReconVector { r, d, source: ReconSource::LocalHaar, residual: None, condition: None }.checked()
}

fn require_qubits(d: u32) -> Result<()> {
    if d != 2 {
        return param("density-matrix operations are implemented for qubits only");
    }
    Ok(())
}

/// Multiplies the Pauli coefficient of every `P` by `g(supp P)`.
fn pauli_multiplier(spectrum: &mut [f64], g: &LatticeVector<f64>) {
    let n = g.n_sites();
    let dim = 1usize << n;
    for x in 0..dim {
        for z in 0..dim {
            spectrum[x * dim + z] *= g[x | z];
        }
    }
}

/// Channel coefficients `s_B = d^{2N-|B|} sum_C Wg_{B,C} W_C`, so that
/// `M[rho] = sum_B s_B rho_B`.
pub fn channel_coefficients(w: &LatticeVector<f64>, d: u32) -> Result<LatticeVector<f64>> {
    check_dim(d)?;
    let n = w.n_sites() as i32;
    let dd = d as f64;
    let norm = (dd * dd - 1.0).powi(-n);
    let ws = w.weighted_symdiff(d);
    LatticeVector::from_fn(w.n_sites(), |b| dd.powi(2 * n - b.count_ones() as i32) * norm * ws[b as usize])
}

/// `M[rho] = sum_{B,C} d^{2N-|B|} rho_B Wg_{B,C} W_C`, evaluated in the
/// Pauli basis.
pub fn apply_measurement_channel(rho: &DensityMatrix, w: &LatticeVector<f64>, d: u32) -> Result<DensityMatrix> {
    require_qubits(d)?;
    let n = rho.n_sites();
    if w.n_sites() != n {
        return Err(Error::Mismatch { expected: n, found: w.n_sites() });
    }
    let g = channel_coefficients(w, d)?.superset_sum();
    let mut spec = rho.pauli_spectrum();
    pauli_multiplier(&mut spec, &g);
    DensityMatrix::from_pauli_spectrum(&spec, n)
}

/// The same channel as a literal double sum over regions.
pub fn apply_measurement_channel_naive(rho: &DensityMatrix, w: &LatticeVector<f64>, d: u32) -> Result<DensityMatrix> {
    require_qubits(d)?;
    let n = rho.n_sites();
    if w.n_sites() != n {
        return Err(Error::Mismatch { expected: n, found: w.n_sites() });
    }
    let dim = 1usize << n;
    let mut out = CMatrix::from_element(dim, dim, ZERO);
    for b in Region::all(n) {
        let rb = rho.reduced_embedded(b);
        let mut coeff = 0.0;
        for c in Region::all(n) {
            coeff += weingarten_unchecked::<f64>(b.bits() ^ c.bits(), d, n) * w.get(c);
        }
        coeff *= (d as f64).powi(2 * n as i32 - b.len() as i32);
        out += rb * crate::linalg::C64::from(coeff);
    }
    DensityMatrix::new_unchecked(out, n)
}

/// `M^-1[sigma] = d^N sum_A r_A sigma_A`, evaluated in the Pauli basis.
pub fn apply_reconstruction(sigma: &DensityMatrix, r: &ReconVector) -> Result<DensityMatrix> {
    let mut spec = sigma.pauli_spectrum();
    reconstruct_spectrum(&mut spec, r)
}

/// `M^-1` applied to a pure snapshot.
pub fn apply_reconstruction_pure(sigma: &PureState, r: &ReconVector) -> Result<DensityMatrix> {
    let mut spec = sigma.pauli_spectrum();
    reconstruct_spectrum(&mut spec, r)
}

/// `M^-1` of the operator with Pauli coefficients `spec` (row `x`, column
/// `z`), e.g. the mean spectrum of many snapshots.
pub fn apply_reconstruction_spectrum(spec: &[f64], r: &ReconVector) -> Result<DensityMatrix> {
    let mut spec = spec.to_vec();
    reconstruct_spectrum(&mut spec, r)
}

fn reconstruct_spectrum(spec: &mut [f64], r: &ReconVector) -> Result<DensityMatrix> {
    require_qubits(r.d)?;
    let n = r.n_sites();
    if spec.len() != 1 << (2 * n) {
        return Err(Error::Mismatch { expected: 1 << (2 * n), found: spec.len() });
    }
    let g = r.kappa().map(|k| k * (1u64 << n) as f64);
    pauli_multiplier(spec, &g);
    DensityMatrix::from_pauli_spectrum(spec, n)
}

/// `d^N sum_A r_A sigma_A` as a literal sum of padded reduced snapshots.
pub fn apply_reconstruction_naive(sigma: &DensityMatrix, r: &ReconVector) -> Result<DensityMatrix> {
    require_qubits(r.d)?;
    let n = sigma.n_sites();
    if r.n_sites() != n {
        return Err(Error::Mismatch { expected: n, found: r.n_sites() });
    }
    let dim = 1usize << n;
    let mut out = CMatrix::from_element(dim, dim, ZERO);
    for a in Region::all(n) {
        let ra = r.r.get(a);
        if ra != 0.0 {
            out += sigma.reduced_embedded(a) * crate::linalg::C64::from(ra * dim as f64);
        }
    }
    DensityMatrix::new_unchecked(out, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    /// Closest density matrix in Hilbert-Schmidt distance.
    Simplex,
    /// Projector onto the top eigenvector.
    Pure,
}

/// Euclidean projection of a vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

pub fn project_physical(rho: &DensityMatrix, mode: Projection) -> Result<DensityMatrix> {
    let m = rho.matrix();
    let scale = crate::linalg::max_abs(m).max(1.0);
    if hermiticity_error(m) > 1e-9 * scale {
        return Err(Error::State("projection needs a Hermitian matrix".into()));
    }
    let eig = HermitianEigen::new(m)?;
    let dim = eig.values.len();
    let weights: Vec<f64> = match mode {
        Projection::Simplex => project_simplex(eig.values.as_slice()),
        Projection::Pure => {
            let top = eig.values.iter().enumerate().fold(0, |best, (i, v)| if *v > eig.values[best] { i } else { best });
            (0..dim).map(|i| if i == top { 1.0 } else { 0.0 }).collect()
        }
    };
    let mut out = CMatrix::from_element(dim, dim, ZERO);
    for (k, &p) in weights.iter().enumerate() {
        if p > 0.0 {
            let v = eig.vectors.column(k);
            out += (v * v.adjoint()).scale(p);
        }
    }
    DensityMatrix::new(out, rho.n_sites())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::{block_page_ef, page_ef, product_ef};
    use crate::linalg::haar_unitary;
    use crate::rng::rng_from_seed;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn two_qubit_limits() {
        let ones = LatticeVector::constant(2, 1.0).unwrap();
        let r = solve_recon_dense(&ones, 2).unwrap();
        assert!(close(r.r.as_slice(), &[1.0, -1.5, -1.5, 2.25], 1e-12));
        let page = LatticeVector::from_vec(vec![1.0, 0.8, 0.8, 1.0], 2).unwrap();
        let r = solve_recon_dense(&page, 2).unwrap();
        assert!(close(r.r.as_slice(), &[-1.0, 0.0, 0.0, 1.25], 1e-12));
        assert!(r.residual.unwrap() < 1e-12);
        assert!(r.condition.unwrap() >= 1.0);
    }

    #[test]
    fn exact_two_qudit_formula() {
        let r = |a, b| Ratio::new(a, b);
        assert_eq!(two_qudit_coefficients(r(1, 1), 2).unwrap(), [r(1, 1), r(-3, 2), r(-3, 2), r(9, 4)]);
        assert_eq!(two_qudit_coefficients(r(4, 5), 2).unwrap(), [r(-1, 1), r(0, 1), r(0, 1), r(5, 4)]);
        // d = 3: short-time limit (1, -4/3, -4/3, 16/9), long-time limit w = 3/5
        assert_eq!(two_qudit_coefficients(r(1, 1), 3).unwrap(), [r(1, 1), r(-4, 3), r(-4, 3), r(16, 9)]);
        assert_eq!(two_qudit_coefficients(r(3, 5), 3).unwrap(), [r(-1, 1), r(0, 1), r(0, 1), r(10, 9)]);
        assert!(two_qudit_coefficients(r(1, 2), 2).is_err());
    }

    #[test]
    fn two_qudit_matches_dense() {
        for d in [2, 3] {
            for w in [1.0, 0.95, 0.9] {
                let wv = LatticeVector::from_vec(vec![1.0, w, w, 1.0], 2).unwrap();
                let a = solve_recon_dense(&wv, d).unwrap();
                let b = two_qudit_analytic_r(w, d).unwrap();
                assert!(a.r.max_abs_diff(&b.r).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_exact() {
        let ones: LatticeVector<Ratio<i64>> = product_ef(2).unwrap();
        let r = closed_form_coefficients(&ones).unwrap();
        let q = |a, b| Ratio::new(a, b);
        assert_eq!(r.as_slice(), &[q(1, 1), q(-3, 2), q(-3, 2), q(9, 4)]);
        let page: LatticeVector<Ratio<i64>> = page_ef(2, 2).unwrap();
        let r = closed_form_coefficients(&page).unwrap();
        assert_eq!(r.as_slice(), &[q(-1, 1), q(0, 1), q(0, 1), q(5, 4)]);
        // product EF for any N: r_A = (-1)^{N-|A|} (3/2)^|A|
        let ones: LatticeVector<Ratio<i64>> = product_ef(4).unwrap();
        let r = closed_form_coefficients(&ones).unwrap();
        for a in 0..16u32 {
            let k = a.count_ones() as i32;
            let sign = if (4 - k) % 2 == 0 { q(1, 1) } else { q(-1, 1) };
            assert_eq!(r[a as usize], sign * q(3, 2).powi_exact(k));
        }
    }

    #[test]
    fn limits_match_named_coefficients() {
        for n in 1..=4 {
            let a = solve_recon_dense(&product_ef(n).unwrap(), 2).unwrap();
            assert!(a.r.max_abs_diff(&local_haar_r(n, 2).unwrap().r).unwrap() < 1e-10);
            let b = solve_recon_dense(&page_ef(n, 2).unwrap(), 2).unwrap();
            assert!(b.r.max_abs_diff(&global_haar_r(n, 2).unwrap().r).unwrap() < 1e-10);
            let c = solve_recon_dense(&page_ef(n, 3).unwrap(), 3).unwrap();
            assert!(c.r.max_abs_diff(&global_haar_r(n, 3).unwrap().r).unwrap() < 1e-10);
        }
    }

    #[test]
    fn singular_ensemble_is_rejected() {
        // W_C = 1/2^|C| would be all snapshots maximally entangled with nothing.
        let w = LatticeVector::from_vec(vec![1.0, 0.5, 0.5, 1.0], 2).unwrap();
        assert!(matches!(solve_recon_dense(&w, 2), Err(Error::Singular { .. })));
        assert!(matches!(solve_recon_closed_form(&w), Err(Error::Singular { .. })));
        let bad = LatticeVector::from_vec(vec![0.9, 0.8, 0.8, 1.0], 2).unwrap();
        assert!(solve_recon_dense(&bad, 2).is_err());
    }

    #[test]
    fn condition_estimate_matches_exact_inverse() {
        let w = block_page_ef::<f64>(&[0b11, 0b1100], 4, 2).unwrap();
        let m = fusion_matrix(&w, 2).unwrap();
        let exact = one_norm(&m) * one_norm(&m.clone().try_inverse().unwrap());
        let est = solve_recon_dense(&w, 2).unwrap().condition.unwrap();
        assert!(est <= exact * (1.0 + 1e-9) && est >= exact / 3.0, "{est} vs {exact}");
    }

    #[test]
    fn system_product_matches_matrix() {
        let w = block_page_ef::<f64>(&[0b011, 0b100], 3, 2).unwrap();
        let r = LatticeVector::from_fn(3, |a| a as f64 - 2.5).unwrap();
        let fast = apply_fusion_system(&w, &r, 2).unwrap();
        let m = fusion_matrix(&w, 2).unwrap();
        let slow = m * DVector::from_column_slice(r.as_slice());
        assert!(close(fast.as_slice(), slow.as_slice(), 1e-12));
    }

    #[test]
    fn single_qubit_channel() {
        let mut rng = rng_from_seed(3);
        let rho = DensityMatrix::random(1, &mut rng).unwrap();
        let ones = product_ef(1).unwrap();
        let sigma = apply_measurement_channel(&rho, &ones, 2).unwrap();
        let expect = (rho.matrix() + CMatrix::identity(2, 2)).scale(1.0 / 3.0);
        assert!(crate::linalg::max_abs(&(sigma.matrix() - expect)) < 1e-12);
    }

    #[test]
    fn channel_paths_agree() {
        let mut rng = rng_from_seed(8);
        for n in 1..=3 {
            let rho = DensityMatrix::random(n, &mut rng).unwrap();
            for w in [product_ef(n).unwrap(), page_ef(n, 2).unwrap()] {
                let a = apply_measurement_channel(&rho, &w, 2).unwrap();
                let b = apply_measurement_channel_naive(&rho, &w, 2).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-12);
                assert!((a.trace() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maximally_mixed_is_fixed() {
        let w = block_page_ef::<f64>(&[0b0011, 0b1100], 4, 2).unwrap();
        let mm = DensityMatrix::maximally_mixed(4).unwrap();
        let s = apply_measurement_channel(&mm, &w, 2).unwrap();
        assert!(s.max_abs_diff(&mm) < 1e-12);
    }

    #[test]
    fn reconstruction_paths_agree() {
        let mut rng = rng_from_seed(9);
        for n in 1..=3 {
            let sigma = DensityMatrix::random(n, &mut rng).unwrap();
            let r = solve_recon_dense(&page_ef(n, 2).unwrap(), 2).unwrap();
            let a = apply_reconstruction(&sigma, &r).unwrap();
            let b = apply_reconstruction_naive(&sigma, &r).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn named_inverse_channels() {
        let mut rng = rng_from_seed(4);
        let n = 3;
        let sigma = DensityMatrix::random(n, &mut rng).unwrap();
        let gh = apply_reconstruction(&sigma, &global_haar_r(n, 2).unwrap()).unwrap();
        let expect = sigma.matrix().scale(9.0) - CMatrix::identity(8, 8);
        assert!(crate::linalg::max_abs(&(gh.matrix() - expect)) < 1e-12);

        // local Haar on a product state
        let parts: Vec<PureState> = (0..n).map(|_| PureState::random_haar(1, &mut rng).unwrap()).collect();
        let mut prod = CMatrix::identity(1, 1);
        let mut expect = CMatrix::identity(1, 1);
        for p in parts.iter().rev() {
            let m = p.density_matrix().into_matrix();
            expect = crate::linalg::kron(&expect, &(m.scale(3.0) - CMatrix::identity(2, 2)));
            prod = crate::linalg::kron(&prod, &m);
        }
        let prod = DensityMatrix::new(prod, n).unwrap();
        let lh = apply_reconstruction(&prod, &local_haar_r(n, 2).unwrap()).unwrap();
        assert!(crate::linalg::max_abs(&(lh.matrix() - expect)) < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.2.into(), (-0.2).into()]));
        let rho = DensityMatrix::new_unchecked(m, 1).unwrap();
        let p = project_physical(&rho, Projection::Simplex).unwrap();
        let expect = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0.into(), 0.0.into()]));
        assert!(crate::linalg::max_abs(&(p.matrix() - expect)) < 1e-12);

        let phys = DensityMatrix::random(2, &mut rng_from_seed(1)).unwrap();
        let same = project_physical(&phys, Projection::Simplex).unwrap();
        assert!(same.max_abs_diff(&phys) < 1e-10);
        let pure = project_physical(&phys, Projection::Pure).unwrap();
        assert!((pure.trace() - 1.0).abs() < 1e-12);
        assert!((pure.expectation(pure.matrix()).re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn simplex_projection_by_hand() {
        assert!(close(&project_simplex(&[0.5, 0.5]), &[0.5, 0.5], 1e-15));
        assert!(close(&project_simplex(&[2.0, 0.0, 0.0]), &[1.0, 0.0, 0.0], 1e-15));
        assert!(close(&project_simplex(&[0.6, 0.6, -1.0]), &[0.5, 0.5, 0.0], 1e-15));
    }

    fn random_block_ef(n: usize, seed: u64) -> LatticeVector<f64> {
        // convex mixture of block-Page features
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let mut acc = LatticeVector::zeros(n).unwrap();
        let k = 3;
        let mut total = 0.0;
        for _ in 0..k {
            let mut blocks = Vec::new();
            let mut left: Vec<usize> = (0..n).collect();
            while !left.is_empty() {
                let size = rng.random_range(1..=left.len());
                let mut m = 0u32;
                for _ in 0..size {
                    let i = rng.random_range(0..left.len());
                    m |= 1 << left.swap_remove(i);
                }
                blocks.push(m);
            }
            let p: f64 = rng.random_range(0.1..1.0);
            total += p;
            acc = acc.axpby(1.0, &block_page_ef(&blocks, n, 2).unwrap(), p).unwrap();
        }
        acc.map(|v| v / total)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn closed_form_agrees_with_dense(n in 2usize..=6, seed in any::<u64>()) {
            let w = random_block_ef(n, seed);
            let a = solve_recon_dense(&w, 2).unwrap();
            let b = solve_recon_closed_form(&w).unwrap();
            let scale = a.r.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(a.r.max_abs_diff(&b.r).unwrap() / scale < 1e-8);
        }

        #[test]
        fn round_trip_and_self_adjoint(n in 1usize..=3, seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let w = random_block_ef(n, seed ^ 1);
            let r = solve_recon_dense(&w, 2).unwrap();
            let rho = DensityMatrix::random(n, &mut rng).unwrap();
            let back = apply_reconstruction(&apply_measurement_channel(&rho, &w, 2).unwrap(), &r).unwrap();
            prop_assert!(back.max_abs_diff(&rho) < 1e-8);

            let o = DensityMatrix::random(n, &mut rng).unwrap();
            let lhs = o.expectation(apply_reconstruction(&rho, &r).unwrap().matrix());
            let rhs = rho.expectation(apply_reconstruction(&o, &r).unwrap().matrix());
            prop_assert!((lhs - rhs).norm() < 1e-9);

            let u = (0..n).fold(CMatrix::identity(1, 1), |acc, _| crate::linalg::kron(&haar_unitary(2, &mut rng).unwrap(), &acc));
            let a = apply_reconstruction(&rho.conjugated(&u), &r).unwrap();
            let b = apply_reconstruction(&rho, &r).unwrap().conjugated(&u);
            prop_assert!(a.max_abs_diff(&b) < 1e-9);
        }

        #[test]
        fn projection_is_physical(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let sigma = DensityMatrix::random(2, &mut rng).unwrap();
            let biased = apply_reconstruction(&sigma, &global_haar_r(2, 2).unwrap()).unwrap();
            for mode in [Projection::Simplex, Projection::Pure] {
                let p = project_physical(&biased, mode).unwrap();
                let ev = p.eigenvalues().unwrap();
                prop_assert!(ev[0] >= -1e-12);
                prop_assert!((p.trace() - 1.0).abs() < 1e-10);
            }
        }
    }
}
