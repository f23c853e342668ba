//! Second entanglement features `W_C = E Tr_C (Tr_{not C} sigma)^2` of
//! snapshot ensembles, and operator entanglement features of Pauli strings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::circuit::{CircuitInstance, Ensemble, EnsembleSpec};
use crate::dense::state::PureState;
use crate::error::{param, Error, Result};
use crate::lattice::LatticeVector;
use crate::region::{check_dim, check_sites, Region};
use crate::rng::{child_seed, derive_seed, rng_from_seed, Stream};
use crate::scalar::Scalar;
use crate::stabilizer::pauli::PauliString;
use crate::stabilizer::tableau::Tableau;

/// How measurement outcomes enter the prior-ensemble average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeMode {
    /// One uniformly random outcome per sampled unitary.
    Sample,
    /// Exact average over all `2^N` outcomes per sampled unitary.
    Enumerate,
}

/// Largest register for which [`OutcomeMode::Enumerate`] is the default.
pub const ENUMERATE_DEFAULT_MAX_SITES: usize = 6;

impl OutcomeMode {
    pub fn default_for(n_sites: usize) -> Self {
        if n_sites <= ENUMERATE_DEFAULT_MAX_SITES {
            Self::Enumerate
        } else {
            Self::Sample
        }
    }
}

#[derive(Clone, Debug)]
pub struct EfEstimate {
    pub w: LatticeVector<f64>,
    pub stderr: LatticeVector<f64>,
    pub n_samples: usize,
    pub mode: OutcomeMode,
    pub spec: EnsembleSpec,
    pub seed: u64,
}

impl EfEstimate {
    /// Checks the purity bounds `d^-|C| <= W_C <= 1` and the complement
    /// symmetry, each within `k` standard errors (plus rounding slack).
    pub fn check_invariants(&self, k: f64) -> Result<()> {
        let n = self.w.n_sites();
        let slack = |c: usize| k * self.stderr[c] + 1e-12;
        for c in Region::all(n) {
            let i = c.bits() as usize;
            let v = self.w[i];
            let lo = 2f64.powi(-(c.len() as i32));
            if v < lo - slack(i) || v > 1.0 + slack(i) {
                return Err(Error::State(format!("W{c:?} = {v} outside [{lo}, 1]")));
            }
            let j = c.complement().bits() as usize;
            let tol = k * (self.stderr[i].powi(2) + self.stderr[j].powi(2)).sqrt() + 1e-12;
            if (v - self.w[j]).abs() > tol {
                return Err(Error::State(format!("W{c:?} and its complement differ by {}", (v - self.w[j]).abs())));
            }
        }
        Ok(())
    }
}

/// `Tr rho_C^2` of a pure state.
pub fn subsystem_purity(state: &PureState, c: Region) -> f64 {
    state.purity(c)
}

/// Purities of the snapshot `U^dagger |b>` on every region, computed on a
/// tableau for Clifford members and on the state vector otherwise.
pub fn snapshot_purities(member: &CircuitInstance, b: u64) -> Result<LatticeVector<f64>> {
    if member.is_clifford() {
        Ok(member.tableau_snapshot(b)?.all_purities())
    } else {
        Ok(member.snapshot_state(b)?.all_purities())
    }
}

fn member_purities(member: &CircuitInstance, mode: OutcomeMode, outcome_seed: u64) -> Result<Vec<f64>> {
    let n = member.n_sites();
    let dim = 1usize << n;
    match mode {
        OutcomeMode::Sample => {
            let b = rand::Rng::random_range(&mut rng_from_seed(outcome_seed), 0..dim as u64);
            Ok(snapshot_purities(member, b)?.into_vec())
        }
        OutcomeMode::Enumerate => {
            let mut acc = vec![0.0; dim];
            if let Some(gates) = member.clifford_gates() {
                for b in 0..dim as u64 {
                    let t = Tableau::snapshot(&gates, b, n)?;
                    for (a, p) in acc.iter_mut().zip(t.all_purities().as_slice()) {
                        *a += p;
                    }
                }
            } else {
                let u = member.unitary()?;
                for b in 0..dim {
                    // U^dagger |b> is the conjugated row b of U
                    let amps = (0..dim).map(|c| u[(b, c)].conj()).collect();
                    let phi = PureState::normalized(amps, n)?;
                    for (a, p) in acc.iter_mut().zip(phi.all_purities().as_slice()) {
                        *a += p;
                    }
                }
            }
            let inv = 1.0 / dim as f64;
            Ok(acc.into_iter().map(|a| a * inv).collect())
        }
    }
}

/// Componentwise mean and standard error, accumulated in sample order.
pub(crate) fn mean_and_stderr(samples: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((q, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *q += (v - m) * (v - m);
        }
    }
    let se = var.into_iter().map(|q| (q / (n - 1.0) / n).sqrt()).collect();
    (mean, se)
}

/// Per-member purity vectors behind [`estimate_ef`], in sample order.
pub fn ef_samples(ensemble: &Ensemble, n_samples: usize, mode: OutcomeMode) -> Result<Vec<Vec<f64>>> {
    let master = ensemble.master_seed();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master, Stream::EntanglementFeature, i);
            let member = ensemble.member(seed)?;
            member_purities(&member, mode, child_seed(seed, 1))
        })
        .collect()
}

/// Monte Carlo entanglement feature of the prior snapshot ensemble.
///
/// Member seeds come from the entanglement-feature stream of the master
/// seed, so they never coincide with the members used to measure a state.
pub fn estimate_ef(ensemble: &Ensemble, n_samples: usize, mode: OutcomeMode) -> Result<EfEstimate> {
    if n_samples < 2 {
        return param("at least two samples are needed for a standard error");
    }
    let n = ensemble.n_sites();
    let master = ensemble.master_seed();
    let samples = ef_samples(ensemble, n_samples, mode)?;
    let (mean, se) = mean_and_stderr(&samples, 1 << n);
    Ok(EfEstimate {
        w: LatticeVector::from_vec(mean, n)?,
        stderr: LatticeVector::from_vec(se, n)?,
        n_samples,
        mode,
        spec: ensemble.spec().clone(),
        seed: master,
    })
}

/// `W_{E_O, D} = [supp P in D] d^{2N - |D|}` for a non-identity Pauli string.
pub fn pauli_operator_ef<T: Scalar>(p: &PauliString, d: u32) -> Result<LatticeVector<T>> {
    check_dim(d)?;
    if p.is_identity() {
        return param("the identity is not traceless");
    }
    let n = p.n_sites();
    let supp = p.support().bits();
    let dd = T::from_i64(d as i64);
    LatticeVector::from_fn(n, |m| {
        if supp & !m == 0 {
            dd.powi_exact(2 * n as i32 - m.count_ones() as i32)
        } else {
            T::zero()
        }
    })
}

/// Entanglement feature of product snapshots: all ones.
pub fn product_ef<T: Scalar>(n_sites: usize) -> Result<LatticeVector<T>> {
    LatticeVector::constant(n_sites, T::one())
}

/// Snapshots that are independent Haar-random states on each block of a
/// site partition. `blocks` are disjoint masks covering the register.
pub fn block_page_ef<T: Scalar>(blocks: &[u32], n_sites: usize, d: u32) -> Result<LatticeVector<T>> {
    check_sites(n_sites)?;
    check_dim(d)?;
    let cover = blocks.iter().fold(0u32, |a, &b| {
        if a & b != 0 {
            u32::MAX
        } else {
            a | b
        }
    });
    if cover != crate::region::full_mask(n_sites) {
        return param("blocks must partition the register");
    }
    let dd = T::from_i64(d as i64);
    LatticeVector::from_fn(n_sites, |c| {
        let mut w = T::one();
        for &blk in blocks {
            let k = blk.count_ones() as i32;
            let m = (blk & c).count_ones() as i32;
            w = w * (dd.powi_exact(m) + dd.powi_exact(k - m)) / (dd.powi_exact(k) + T::one());
        }
        w
    })
}

/// Global Haar (Page) snapshots.
pub fn page_ef<T: Scalar>(n_sites: usize, d: u32) -> Result<LatticeVector<T>> {
    block_page_ef(&[crate::region::full_mask(n_sites)], n_sites, d)
}
