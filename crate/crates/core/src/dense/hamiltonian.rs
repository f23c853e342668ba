//! Hamiltonians that drive the quench ensembles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::linalg::{chebyshev_evolve, ginibre, CMatrix, HermitianEigen, C64, ZERO};
use crate::region::check_sites;
use crate::stabilizer::pauli::PauliString;

/// Real linear combination of Pauli strings.
#[derive(Clone, Debug, Default)]
pub struct PauliSum {
    pub terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn push(&mut self, c: f64, p: PauliString) {
        self.terms.push((c, p));
    }

    pub fn to_matrix(&self, n_sites: usize) -> CMatrix {
        let dim = 1usize << n_sites;
        let mut m = CMatrix::from_element(dim, dim, ZERO);
        for (c, p) in &self.terms {
            for col in 0..dim as u32 {
                let (r, v) = p.column_entry(col);
                m[(r as usize, col as usize)] += v * *c;
            }
        }
        m
    }
}

/// Embed a row-major 4x4 operator on sites `(i, j)` (0-based, local index
/// `2 b_i + b_j`) into the full register.
pub fn embed_two_site(h: &CMatrix, i: usize, j: usize, n_sites: usize) -> CMatrix {
    let dim = 1usize << n_sites;
    let (bi, bj) = (1usize << i, 1usize << j);
    let mut m = CMatrix::from_element(dim, dim, ZERO);
    for c in 0..dim {
        let lc = 2 * ((c & bi != 0) as usize) + (c & bj != 0) as usize;
        let base = c & !(bi | bj);
        for lr in 0..4 {
            let v = h[(lr, lc)];
            if v == ZERO {
                continue;
            }
            let r = base | if lr & 2 != 0 { bi } else { 0 } | if lr & 1 != 0 { bj } else { 0 };
            m[(r, c)] += v;
        }
    }
    m
}

/// `(A + A^dagger)/sqrt 8` with `A` a standard complex Gaussian `4x4` matrix,
/// so that `E Tr H^2 = 4`.
pub fn gue_term<R: Rng + ?Sized>(rng: &mut R) -> CMatrix {
    let a = ginibre(4, rng);
    (&a + a.adjoint()).scale(1.0 / 8f64.sqrt())
}

/// Nearest-neighbor bonds `(i, i+1)`, plus `(N-1, 0)` when periodic and `N > 2`.
pub fn chain_bonds(n_sites: usize, periodic: bool) -> Vec<(usize, usize)> {
    let mut b: Vec<(usize, usize)> = (0..n_sites.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if periodic && n_sites > 2 {
        b.push((n_sites - 1, 0));
    }
    b
}

/// `H = sum_i H_{i,i+1}` with independent GUE terms.
pub fn gue2_hamiltonian<R: Rng + ?Sized>(n_sites: usize, periodic: bool, rng: &mut R) -> Result<CMatrix> {
    check_sites(n_sites)?;
    if n_sites < 2 {
        return param("GUE2 needs at least two sites");
    }
    let dim = 1usize << n_sites;
    let mut h = CMatrix::from_element(dim, dim, ZERO);
    for (i, j) in chain_bonds(n_sites, periodic) {
        h += embed_two_site(&gue_term(rng), i, j, n_sites);
    }
    Ok(h)
}

/// Disordered Ising chain with a uniform in-plane field of random angle.
#[derive(Clone, Debug)]
pub struct DqimModel {
    n_sites: usize,
    field: f64,
    couplings: Vec<f64>,
    /// `(flip mask, J_ij)` of each `X_i X_j` bond.
    bonds: Vec<(usize, f64)>,
    radius: f64,
}

impl DqimModel {
    /// Periodic nearest-neighbor couplings `J_ij ~ U[J/2, 3J/2]`.
    pub fn sample_couplings<R: Rng + ?Sized>(n_sites: usize, coupling: f64, rng: &mut R) -> Vec<f64> {
        chain_bonds(n_sites, true).iter().map(|_| coupling * rng.random_range(0.5..1.5)).collect()
    }

    pub fn new(n_sites: usize, couplings: Vec<f64>, field: f64) -> Result<Self> {
        check_sites(n_sites)?;
        let bonds = chain_bonds(n_sites, true);
        if couplings.len() != bonds.len() {
            return param(format!("expected {} couplings, got {}", bonds.len(), couplings.len()));
        }
        if !field.is_finite() || couplings.iter().any(|j| !j.is_finite()) {
            return param("DQIM parameters must be finite");
        }
        let bonds: Vec<(usize, f64)> = bonds.iter().zip(&couplings).map(|(&(i, j), &jij)| ((1 << i) | (1 << j), jij)).collect();
        // the field part has norm at most N |h|
        let radius = couplings.iter().map(|j| j.abs()).sum::<f64>() + n_sites as f64 * field.abs();
        Ok(Self { n_sites, field, couplings, bonds, radius })
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// `H_t` at field angle `theta`.
    pub fn hamiltonian(&self, theta: f64) -> CMatrix {
        let (s, c) = theta.sin_cos();
        let mut h = PauliSum::default();
        for i in 0..self.n_sites {
            h.push(self.field * c, PauliString::new(1 << i, 0, self.n_sites).expect("site in range"));
            h.push(self.field * s, PauliString::new(1 << i, 1 << i, self.n_sites).expect("site in range"));
        }
        for &(mask, j) in &self.bonds {
            h.push(j, PauliString::new(mask as u32, 0, self.n_sites).expect("sites in range"));
        }
        h.to_matrix(self.n_sites)
    }

    /// `b = H_t a`.
    fn apply_hamiltonian(&self, theta: f64, a: &[C64], b: &mut [C64]) {
        // X cos + Y sin maps |0> to e^{i theta}|1> and |1> to e^{-i theta}|0>
        let up = C64::from_polar(self.field, theta);
        let down = up.conj();
        for (k, bk) in b.iter_mut().enumerate() {
            let mut v = ZERO;
            for &(mask, j) in &self.bonds {
                v += a[k ^ mask] * j;
            }
            for i in 0..self.n_sites {
                let src = a[k ^ (1 << i)];
                v += if k >> i & 1 == 1 { up * src } else { down * src };
            }
            *bk = v;
        }
    }

    /// `exp(-i H_t)` for one unit-duration step.
    pub fn step(&self, theta: f64) -> Result<CMatrix> {
        Ok(HermitianEigen::new(&self.hamiltonian(theta))?.evolve(1.0))
    }

    /// `prod_t exp(-i H_t)`, the first angle applied first.
    pub fn evolution(&self, thetas: &[f64]) -> Result<CMatrix> {
        let dim = 1usize << self.n_sites;
        let mut u = CMatrix::identity(dim, dim);
        for &th in thetas {
            u = self.step(th)? * u;
        }
        Ok(u)
    }

    /// Applies `prod_t exp(-i H_t)` to `v` without forming a matrix, or its
    /// adjoint when `adjoint` is set.
    pub fn evolve_vector(&self, thetas: &[f64], v: &mut [C64], adjoint: bool) {
        let step = |th: f64, v: &mut [C64], t: f64| {
            chebyshev_evolve(|a, b| self.apply_hamiltonian(th, a, b), self.radius, t, v)
        };
        if adjoint {
            thetas.iter().rev().for_each(|&th| step(th, v, -1.0));
        } else {
            thetas.iter().for_each(|&th| step(th, v, 1.0));
        }
    }
}

/// Rydberg-chain parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RydbergParams {
    pub omega: f64,
    pub delta: f64,
    pub blockade_radius: f64,
    #[serde(default = "unit_spacing")]
    pub spacing: f64,
}

fn unit_spacing() -> f64 {
    1.0
}

impl Default for RydbergParams {
    fn default() -> Self {
        Self { omega: 2.75, delta: 1.0, blockade_radius: 1.0, spacing: 1.0 }
    }
}

/// `Omega/2 sum X_i - Delta sum Z_i + Omega sum_{i<j} (R_b/(a|i-j|))^6 Z_i Z_j`
/// on an open chain with all pairs coupled.
pub fn rydberg_hamiltonian(p: &RydbergParams, n_sites: usize) -> Result<CMatrix> {
    check_sites(n_sites)?;
    if ![p.omega, p.delta, p.blockade_radius, p.spacing].iter().all(|v| v.is_finite()) || p.spacing <= 0.0 {
        return param("Rydberg parameters must be finite with positive spacing");
    }
    let mut h = PauliSum::default();
    for i in 0..n_sites {
        h.push(p.omega / 2.0, PauliString::new(1 << i, 0, n_sites)?);
        h.push(-p.delta, PauliString::new(0, 1 << i, n_sites)?);
        for j in i + 1..n_sites {
            let v = p.omega * (p.blockade_radius / (p.spacing * (j - i) as f64)).powi(6);
            h.push(v, PauliString::new(0, (1 << i) | (1 << j), n_sites)?);
        }
    }
    Ok(h.to_matrix(n_sites))
}
