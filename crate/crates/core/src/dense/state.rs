//! State vectors and density matrices on `N` qubits.
//!
//! Basis index bit `i` is the value of qubit `i + 1`, matching the region
//! masks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Error, Result};
use crate::lattice::{subset_sum_in_place, LatticeVector};
use crate::linalg::{CMatrix, HermitianEigen, C64, ONE, ZERO};
use crate::region::{check_sites, full_mask, Region};
use crate::stabilizer::pauli::{i_pow, PauliString};

pub const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
    n_sites: usize,
}

/// In-place unnormalized Walsh-Hadamard transform.
pub(crate) fn wht(v: &mut [C64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let a = v[j];
                let b = v[j + h];
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h <<= 1;
    }
}

impl PureState {
    pub fn new(amps: Vec<C64>, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if amps.len() != 1 << n_sites {
            return Err(Error::Mismatch { expected: 1 << n_sites, found: amps.len() });
        }
        let s = Self { amps, n_sites };
        let nrm = s.norm_sqr();
        if (nrm - 1.0).abs() > NORM_TOL {
            return Err(Error::State(format!("state norm^2 is {nrm}")));
        }
        Ok(s)
    }

    /// Normalizes the input; errors on the zero vector.
    pub fn normalized(mut amps: Vec<C64>, n_sites: usize) -> Result<Self> {
        let nrm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::State("cannot normalize a zero or non-finite vector".into()));
        }
        for a in &mut amps {
            *a /= nrm;
        }
        Self::new(amps, n_sites)
    }

    pub fn basis(b: u64, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if b >= 1 << n_sites {
            return param(format!("basis index {b} out of range for {n_sites} sites"));
        }
        let mut amps = vec![ZERO; 1 << n_sites];
        amps[b as usize] = ONE;
        Ok(Self { amps, n_sites })
    }

    /// `(|0...0> + s |1...1>)/sqrt 2` with `s = +-1`.
    pub fn ghz_signed(n_sites: usize, sign: f64) -> Result<Self> {
        check_sites(n_sites)?;
        let mut amps = vec![ZERO; 1 << n_sites];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amps[0] = C64::new(h, 0.0);
        amps[full_mask(n_sites) as usize] += C64::new(sign * h, 0.0);
        Ok(Self { amps, n_sites })
    }

    pub fn ghz(n_sites: usize) -> Result<Self> {
        Self::ghz_signed(n_sites, 1.0)
    }

    pub fn random_haar<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<Self> {
        check_sites(n_sites)?;
        let amps = (0..1usize << n_sites)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(amps, n_sites)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn check_norm(&self) -> Result<()> {
        let nrm = self.norm_sqr();
        if (nrm - 1.0).abs() > NORM_TOL {
            return Err(Error::State(format!("state norm^2 is {nrm}")));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Computational-basis outcome drawn with the Born rule.
    pub fn sample_outcome<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.norm_sqr();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                last = i;
            }
            acc += p;
            if u < acc {
                return i as u64;
            }
        }
        last as u64
    }

    /// Row-major 2x2 gate on qubit `q` (0-based).
    pub fn apply_1q(&mut self, q: usize, m: &[C64; 4]) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0] * a0 + m[1] * a1;
                self.amps[i | bit] = m[2] * a0 + m[3] * a1;
            }
        }
    }

    /// Row-major 4x4 gate on qubits `(qa, qb)`; local index `2 b_qa + b_qb`.
    pub fn apply_2q(&mut self, qa: usize, qb: usize, m: &[C64; 16]) {
        let ba = 1usize << qa;
        let bb = 1usize << qb;
        for i in 0..self.amps.len() {
            if i & (ba | bb) == 0 {
                let idx = [i, i | bb, i | ba, i | ba | bb];
                let v = [self.amps[idx[0]], self.amps[idx[1]], self.amps[idx[2]], self.amps[idx[3]]];
                for r in 0..4 {
                    self.amps[idx[r]] = m[4 * r] * v[0] + m[4 * r + 1] * v[1] + m[4 * r + 2] * v[2] + m[4 * r + 3] * v[3];
                }
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let bc = 1usize << control;
        let bt = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bc != 0 && i & bt == 0 {
                self.amps.swap(i, i | bt);
            }
        }
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn apply_matrix(&mut self, u: &CMatrix) {
        let out = u * nalgebra::DVector::from_column_slice(&self.amps);
        self.amps.copy_from_slice(out.as_slice());
    }

    /// `<self| i^phase P |self>`.
    pub fn pauli_expectation(&self, p: &PauliString) -> C64 {
        let mut acc = ZERO;
        for (c, a) in self.amps.iter().enumerate() {
            let (r, v) = p.column_entry(c as u32);
            acc += self.amps[r as usize].conj() * v * a;
        }
        acc
    }

    /// `<P(x, z)>` for every `z` at fixed `x`, in `O(N 2^N)`.
    pub fn pauli_row(&self, x: u32) -> Vec<f64> {
        let mut q: Vec<C64> = (0..self.amps.len()).map(|c| self.amps[c ^ x as usize].conj() * self.amps[c]).collect();
        wht(&mut q);
        q.iter()
            .enumerate()
            .map(|(z, e)| (i_pow((x & z as u32).count_ones() as u8) * e).re)
            .collect()
    }

    /// Every Pauli expectation, indexed `[x << N | z]`.
    pub fn pauli_spectrum(&self) -> Vec<f64> {
        let dim = self.amps.len();
        let mut out = Vec::with_capacity(dim * dim);
        for x in 0..dim as u32 {
            out.extend(self.pauli_row(x));
        }
        out
    }

    /// Purity of the reduced state on every region.
    pub fn all_purities(&self) -> LatticeVector<f64> {
        let dim = self.amps.len();
        let mut s = vec![0.0; dim];
        let mut q = vec![ZERO; dim];
        for x in 0..dim {
            for (c, qc) in q.iter_mut().enumerate() {
                *qc = self.amps[c ^ x].conj() * self.amps[c];
            }
            wht(&mut q);
            for (z, e) in q.iter().enumerate() {
                s[x | z] += e.norm_sqr();
            }
        }
        subset_sum_in_place(&mut s);
        for (c, v) in s.iter_mut().enumerate() {
            *v /= (1u64 << (c as u32).count_ones()) as f64;
        }
        LatticeVector::from_vec(s, self.n_sites).expect("length is 2^N")
    }

    /// `Tr rho_C^2` from the reduced density matrix on `C`.
    pub fn purity(&self, c: Region) -> f64 {
        reduced_density_matrix(&self.amps, self.n_sites, c.bits()).map(|z| z.norm_sqr()).sum()
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityMatrix { m: &v * v.adjoint(), n_sites: self.n_sites }
    }
}

/// Scatter the bits of `k` into the positions of `mask`.
#[inline]
pub(crate) fn deposit(k: usize, mask: u32) -> usize {
    let mut out = 0usize;
    let mut m = mask;
    let mut i = 0;
    while m != 0 {
        let low = m & m.wrapping_neg();
        if k >> i & 1 == 1 {
            out |= low as usize;
        }
        m ^= low;
        i += 1;
    }
    out
}

/// `Tr_{not C} |psi><psi|` as a `2^|C|` square matrix; local index bit `j`
/// is the `j`-th lowest site of `C`.
fn reduced_density_matrix(amps: &[C64], n_sites: usize, c: u32) -> CMatrix {
    let k = c.count_ones() as usize;
    let comp = !c & full_mask(n_sites);
    let dk = 1usize << k;
    let de = 1usize << (n_sites - k);
    let cols: Vec<usize> = (0..dk).map(|a| deposit(a, c)).collect();
    let mut m = CMatrix::from_element(dk, dk, ZERO);
    for e in 0..de {
        let off = deposit(e, comp);
        for a in 0..dk {
            let va = amps[off | cols[a]];
            if va == ZERO {
                continue;
            }
            for b in 0..dk {
                m[(a, b)] += va * amps[off | cols[b]].conj();
            }
        }
    }
    m
}

/// Hermitian unit-trace matrix; positivity is not enforced because
/// reconstructed states need not be physical.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
    n_sites: usize,
}

impl DensityMatrix {
    pub fn new(m: CMatrix, n_sites: usize) -> Result<Self> {
        let s = Self::new_unchecked(m, n_sites)?;
        let herr = crate::linalg::hermiticity_error(&s.m);
        if herr > 1e-10 {
            return Err(Error::State(format!("density matrix not Hermitian (deviation {herr:.2e})")));
        }
        let tr = s.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::State(format!("density matrix trace is {tr}")));
        }
        Ok(s)
    }

    /// Only checks the shape.
    pub fn new_unchecked(m: CMatrix, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Mismatch { expected: dim, found: m.nrows() });
        }
        Ok(Self { m, n_sites })
    }

    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        Ok(Self { m: CMatrix::identity(dim, dim).scale(1.0 / dim as f64), n_sites })
    }

    /// `sum_k w_k |psi_k><psi_k|`.
    pub fn mixture(parts: &[(f64, &PureState)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return param("empty mixture");
        };
        let n = first.n_sites();
        let dim = 1usize << n;
        let mut m = CMatrix::from_element(dim, dim, ZERO);
        for (w, psi) in parts {
            if psi.n_sites() != n {
                return Err(Error::Mismatch { expected: n, found: psi.n_sites() });
            }
            if *w < 0.0 {
                return param("mixture weights must be non-negative");
            }
            m += psi.density_matrix().m.scale(*w);
        }
        Self::new(m, n)
    }

    /// Random full-rank state `G G^dagger / Tr` from a Ginibre matrix.
    pub fn random<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<Self> {
        check_sites(n_sites)?;
        let g = crate::linalg::ginibre(1 << n_sites, rng);
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        Self::new(m.scale(1.0 / tr), n_sites)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// `<psi| rho |psi>`.
    pub fn expectation_pure(&self, psi: &PureState) -> f64 {
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        (v.adjoint() * &self.m * &v)[(0, 0)].re
    }

    /// `Tr(rho O)`.
    pub fn expectation(&self, o: &CMatrix) -> C64 {
        (&self.m * o).trace()
    }

    /// `Tr_{not B} rho (x) 1/d^{|not B|}`.
    pub fn reduced_embedded(&self, b: Region) -> CMatrix {
        let n = self.n_sites;
        let dim = 1usize << n;
        let comp = !b.bits() & full_mask(n);
        let k = b.len();
        let dk = 1usize << k;
        let de = 1usize << (n - k);
        let cols: Vec<usize> = (0..dk).map(|a| deposit(a, b.bits())).collect();
        let mut red = CMatrix::from_element(dk, dk, ZERO);
        for e in 0..de {
            let off = deposit(e, comp);
            for a in 0..dk {
                for c in 0..dk {
                    red[(a, c)] += self.m[(off | cols[a], off | cols[c])];
                }
            }
        }
        let scale = 1.0 / de as f64;
        let mut out = CMatrix::from_element(dim, dim, ZERO);
        for e in 0..de {
            let off = deposit(e, comp);
            for a in 0..dk {
                for c in 0..dk {
                    out[(off | cols[a], off | cols[c])] = red[(a, c)] * scale;
                }
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut v = HermitianEigen::new(&self.m)?.values;
        v.sort_by(|a, b| a.total_cmp(b));
        Ok(v)
    }

    /// `(1/2) ||a - b||_1`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.n_sites != other.n_sites {
            return Err(Error::Mismatch { expected: self.n_sites, found: other.n_sites });
        }
        let diff = &self.m - &other.m;
        Ok(0.5 * HermitianEigen::new(&diff)?.values.iter().map(|e| e.abs()).sum::<f64>())
    }

    /// `max |a_ij - b_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        crate::linalg::max_abs(&(&self.m - &other.m))
    }

    /// Conjugate by a unitary: `U rho U^dagger`.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        Self { m: u * &self.m * u.adjoint(), n_sites: self.n_sites }
    }

    /// `Tr(rho P(x, z))` for every Pauli, indexed `[x << N | z]`.
    pub fn pauli_spectrum(&self) -> Vec<f64> {
        let dim = 1usize << self.n_sites;
        let mut out = vec![0.0; dim * dim];
        let mut q = vec![ZERO; dim];
        for x in 0..dim {
            // Tr(rho X^x Z^z) = sum_c (-1)^{z.c} rho[c, c^x]
            for (c, qc) in q.iter_mut().enumerate() {
                *qc = self.m[(c, c ^ x)];
            }
            wht(&mut q);
            for (z, e) in q.iter().enumerate() {
                out[x * dim + z] = (i_pow(((x & z) as u32).count_ones() as u8) * e).re;
            }
        }
        out
    }

    /// `2^-N sum_P c_P P(x, z)`, the inverse of [`pauli_spectrum`](Self::pauli_spectrum).
    pub fn from_pauli_spectrum(coeffs: &[f64], n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if coeffs.len() != dim * dim {
            return Err(Error::Mismatch { expected: dim * dim, found: coeffs.len() });
        }
        let mut m = CMatrix::from_element(dim, dim, ZERO);
        let scale = 1.0 / dim as f64;
        let mut col = vec![ZERO; dim];
        for x in 0..dim {
            // entry (c ^ x, c) of P(x, z) is i^{|x&z|} (-1)^{z.c}
            for (z, v) in col.iter_mut().enumerate() {
                *v = i_pow(((x & z) as u32).count_ones() as u8) * coeffs[x * dim + z];
            }
            wht(&mut col);
            for c in 0..dim {
                m[(c ^ x, c)] += col[c] * scale;
            }
        }
        Self::new_unchecked(m, n_sites)
    }
}
