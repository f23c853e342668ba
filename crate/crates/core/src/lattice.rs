//! Vectors indexed by the subset lattice of an `N`-site register, and the
//! `O(N 2^N)` transforms over it.

use std::io::{Read, Write};
use std::ops::{Index, IndexMut};

use crate::error::{param, Error, Result};
use crate::region::{check_sites, Region};
use crate::scalar::{Real, Scalar};

/// One value per region; `values[mask]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeVector<T> {
    values: Vec<T>,
    n_sites: usize,
}

impl<T: Scalar> LatticeVector<T> {
    pub fn zeros(n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        Ok(Self { values: vec![T::zero(); 1 << n_sites], n_sites })
    }

    pub fn constant(n_sites: usize, v: T) -> Result<Self> {
        check_sites(n_sites)?;
        Ok(Self { values: vec![v; 1 << n_sites], n_sites })
    }

    pub fn from_vec(values: Vec<T>, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if values.len() != 1 << n_sites {
            return Err(Error::Mismatch { expected: 1 << n_sites, found: values.len() });
        }
        Ok(Self { values, n_sites })
    }

    pub fn from_fn(n_sites: usize, mut f: impl FnMut(u32) -> T) -> Result<Self> {
        check_sites(n_sites)?;
        let values = (0..1u32 << n_sites).map(&mut f).collect();
        Ok(Self { values, n_sites })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, r: Region) -> T {
        self.values[r.bits() as usize]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), n_sites: self.n_sites }
    }

    pub fn sum(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.values {
            acc += v;
        }
        acc
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n_sites != other.n_sites {
            return Err(Error::Mismatch { expected: self.n_sites, found: other.n_sites });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        let mut acc = T::zero();
        for (&a, &b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        Ok(acc)
    }

    /// `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| alpha * a + beta * b).collect();
        Ok(Self { values, n_sites: self.n_sites })
    }

    /// `out[A] = sum_{S subset of A} v[S]`.
    pub fn subset_sum(&self) -> Self {
        let mut out = self.clone();
        subset_sum_in_place(&mut out.values);
        out
    }

    /// `out[A] = sum_{S superset of A} v[S]`.
    pub fn superset_sum(&self) -> Self {
        let mut out = self.clone();
        superset_sum_in_place(&mut out.values);
        out
    }

    /// Inverse of [`subset_sum`](Self::subset_sum).
    pub fn subset_mobius(&self) -> Self {
        let mut out = self.clone();
        subset_mobius_in_place(&mut out.values);
        out
    }

    /// Inverse of [`superset_sum`](Self::superset_sum).
    pub fn superset_mobius(&self) -> Self {
        let mut out = self.clone();
        superset_mobius_in_place(&mut out.values);
        out
    }

    /// `out[C] = sum_D (-1/d)^|C xor D| v[D]`.
    pub fn weighted_symdiff(&self, d: u32) -> Self {
        let mut out = self.clone();
        let t = -(T::one() / T::from_i64(d as i64));
        symdiff_in_place(&mut out.values, t);
        out
    }

    /// `out[C] = sum_D t^|C xor D| v[D]` for an arbitrary per-site weight.
    pub fn symdiff_with(&self, t: T) -> Self {
        let mut out = self.clone();
        symdiff_in_place(&mut out.values, t);
        out
    }
}

impl<T> Index<usize> for LatticeVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T> IndexMut<usize> for LatticeVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.values[i]
    }
}

pub(crate) fn subset_sum_in_place<T: Scalar>(v: &mut [T]) {
    let n = v.len();
    let mut bit = 1;
    while bit < n {
        for m in 0..n {
            if m & bit != 0 {
                let lo = v[m ^ bit];
                v[m] += lo;
            }
        }
        bit <<= 1;
    }
}

pub(crate) fn superset_sum_in_place<T: Scalar>(v: &mut [T]) {
    let n = v.len();
    let mut bit = 1;
    while bit < n {
        for m in 0..n {
            if m & bit == 0 {
                let hi = v[m | bit];
                v[m] += hi;
            }
        }
        bit <<= 1;
    }
}

pub(crate) fn subset_mobius_in_place<T: Scalar>(v: &mut [T]) {
    let n = v.len();
    let mut bit = 1;
    while bit < n {
        for m in 0..n {
            if m & bit != 0 {
                let lo = v[m ^ bit];
                v[m] -= lo;
            }
        }
        bit <<= 1;
    }
}

pub(crate) fn superset_mobius_in_place<T: Scalar>(v: &mut [T]) {
    let n = v.len();
    let mut bit = 1;
    while bit < n {
        for m in 0..n {
            if m & bit == 0 {
                let hi = v[m | bit];
                v[m] -= hi;
            }
        }
        bit <<= 1;
    }
}

/// Per-bit `[[1, t], [t, 1]]`.
pub(crate) fn symdiff_in_place<T: Scalar>(v: &mut [T], t: T) {
    let n = v.len();
    let mut bit = 1;
    while bit < n {
        for m in 0..n {
            if m & bit == 0 {
                let a = v[m];
                let b = v[m | bit];
                v[m] = a + t * b;
                v[m | bit] = t * a + b;
            }
        }
        bit <<= 1;
    }
}

/// Per-site transform with a 2x2 kernel `k(site)[out][in]`.
pub(crate) fn per_site_in_place<T: Scalar>(v: &mut [T], k: impl Fn(usize) -> [[T; 2]; 2]) {
    let n = v.len();
    let mut bit = 1;
    let mut site = 0;
    while bit < n {
        let k = k(site);
        site += 1;
        for m in 0..n {
            if m & bit == 0 {
                let a = v[m];
                let b = v[m | bit];
                v[m] = k[0][0] * a + k[0][1] * b;
                v[m | bit] = k[1][0] * a + k[1][1] * b;
            }
        }
        bit <<= 1;
    }
}

impl<T: Real> LatticeVector<T> {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }
}

/// Write `mask,value[,stderr]` rows in mask order.
pub fn write_csv<W: Write>(out: W, values: &LatticeVector<f64>, stderr: Option<&LatticeVector<f64>>) -> Result<()> {
    if let Some(se) = stderr {
        values.check_same(se)?;
    }
    let mut w = csv::Writer::from_writer(out);
    if stderr.is_some() {
        w.write_record(["mask", "value", "stderr"])?;
    } else {
        w.write_record(["mask", "value"])?;
    }
    for m in 0..values.len() {
        let mut row = vec![m.to_string(), format_f64(values[m])];
        if let Some(se) = stderr {
            row.push(format_f64(se[m]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same bits.
fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Read a vector written by [`write_csv`]. Rows must cover every mask once,
/// in ascending order.
pub fn read_csv<R: Read>(input: R) -> Result<(LatticeVector<f64>, Option<LatticeVector<f64>>)> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let has_se = match headers.len() {
        2 => false,
        3 => true,
        n => return Err(Error::Format(format!("expected 2 or 3 columns, found {n}"))),
    };
    let mut values = Vec::new();
    let mut errs = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mask: usize = rec[0].trim().parse().map_err(|_| Error::Format(format!("bad mask {:?}", &rec[0])))?;
        if mask != i {
            return Err(Error::Format(format!("row {i} has mask {mask}; rows must be sorted and complete")));
        }
        values.push(parse_f64(&rec[1])?);
        if has_se {
            errs.push(parse_f64(&rec[2])?);
        }
    }
    let len = values.len();
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Format(format!("{len} rows is not a power-of-two lattice")));
    }
    let n = len.trailing_zeros() as usize;
    let v = LatticeVector::from_vec(values, n)?;
    let se = if has_se { Some(LatticeVector::from_vec(errs, n)?) } else { None };
    if !v.is_finite() {
        return param("lattice vector has non-finite entries");
    }
    Ok((v, se))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format(format!("bad number {s:?}")))
}
