//! Operator shadow norms from entanglement features.
//!
//! `||O||^2 = sum_{A,B,C,D} r_A r_B (d^2/(d^2-1))^N d^{|A&B&C| - |C|}
//! (-1/d)^{|C xor D|} W_sigma[A&B&C] W_O[D]`, which is the ensemble average
//! of the squared single-shot estimator.

use crate::error::{param, Error, Result};
use crate::lattice::LatticeVector;
use crate::reconstruction::ReconVector;
use crate::region::check_dim;
use crate::scalar::Scalar;

fn check_sizes<T: Scalar>(r: &LatticeVector<T>, ws: &LatticeVector<T>, wo: &LatticeVector<T>) -> Result<usize> {
    let n = r.n_sites();
    for v in [ws, wo] {
        if v.n_sites() != n {
            return Err(Error::Mismatch { expected: n, found: v.n_sites() });
        }
    }
    Ok(n)
}

/// Shadow norm in `O(4^N)`: the `D` sum is a weighted symmetric-difference
/// transform of `W_O` and the `(A, B)` sum only depends on `A & B`.
pub fn shadow_norm_coefficients<T: Scalar>(
    r: &LatticeVector<T>,
    w_sigma: &LatticeVector<T>,
    w_o: &LatticeVector<T>,
    d: u32,
) -> Result<T> {
    check_dim(d)?;
    let n = check_sizes(r, w_sigma, w_o)?;
    let dd = T::from_i64(d as i64);
    let inv_d = T::one() / dd;
    let g = w_o.weighted_symdiff(d);
    // T_E = sum_{A & B = E} r_A r_B
    let big_r = r.superset_sum();
    let t = big_r.map(|v| v * v).superset_mobius();
    let pow_inv: Vec<T> = (0..=n as i32).map(|k| inv_d.powi_exact(k)).collect();
    let mut total = T::zero();
    for e in 0..t.len() {
        if t[e] == T::zero() {
            continue;
        }
        let mut k = T::zero();
        for c in 0..g.len() {
            let outside = (c & !e).count_ones() as usize;
            k += w_sigma[c & e] * pow_inv[outside] * g[c];
        }
        total += t[e] * k;
    }
    let pref = (dd * dd / (dd * dd - T::one())).powi_exact(n as i32);
    Ok(pref * total)
}

/// The literal `16^N` quadruple sum; for `N <= 3` cross-checks.
pub fn shadow_norm_naive<T: Scalar>(r: &LatticeVector<T>, w_sigma: &LatticeVector<T>, w_o: &LatticeVector<T>, d: u32) -> Result<T> {
    check_dim(d)?;
    let n = check_sizes(r, w_sigma, w_o)?;
    if n > 3 {
        return param("the naive shadow norm is limited to three sites");
    }
    let dd = T::from_i64(d as i64);
    let t = -(T::one() / dd);
    let pref = (dd * dd / (dd * dd - T::one())).powi_exact(n as i32);
    let len = r.len();
    let mut total = T::zero();
    for a in 0..len {
        for b in 0..len {
            for c in 0..len {
                for e in 0..len {
                    let abc = a & b & c;
                    let v = r[a]
                        * r[b]
                        * pref
                        * dd.powi_exact(abc.count_ones() as i32 - c.count_ones() as i32)
                        * t.powi_exact((c ^ e).count_ones() as i32);
                    total += v * w_sigma[abc] * w_o[e];
                }
            }
        }
    }
    Ok(total)
}

pub fn shadow_norm(r: &ReconVector, w_sigma: &LatticeVector<f64>, w_o: &LatticeVector<f64>) -> Result<f64> {
    shadow_norm_coefficients(&r.r, w_sigma, w_o, r.d)
}

/// Two-qudit shadow norm per unit `Tr O^2`, with `k_tot = k_1 + k_2`:
/// `(d^2-1)/d^3 (k_tot/(dw-1) + (d^2-1)(d-k_tot)/(d^2-2dw+1))`.
pub fn two_qudit_shadow_norm<T: Scalar>(w: T, k_tot: T, d: u32) -> Result<T> {
    check_dim(d)?;
    let dd = T::from_i64(d as i64);
    let one = T::one();
    let two = T::from_i64(2);
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
    let d2m1 = dd * dd - one;
    Ok(d2m1 / (dd * dd * dd) * (k_tot / p + d2m1 * (dd - k_tot) / q))
}
