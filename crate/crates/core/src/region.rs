//! Subsystems of an `N`-site register as bit masks, and the weights that the
//! local-twirl calculus attaches to pairs and triples of them.
//!
//! Bit `i` of a mask is site `i + 1`; a region's index in every lattice
//! vector is its mask value.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::scalar::Scalar;

/// Largest supported register. Dense `2^N x 2^N` solves and `4^N` density
/// matrices stay desk-scale below this.
pub const MAX_SITES: usize = 14;

/// A subset of the sites `{1, ..., N}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region {
    bits: u32,
    n_sites: u8,
}

impl Region {
    pub fn new(bits: u32, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if (bits as u64) >= (1u64 << n_sites) {
            return param(format!("mask {bits:#b} does not fit {n_sites} sites"));
        }
        Ok(Self { bits, n_sites: n_sites as u8 })
    }

    pub fn empty(n_sites: usize) -> Self {
        Self { bits: 0, n_sites: n_sites as u8 }
    }

    pub fn full(n_sites: usize) -> Self {
        Self { bits: full_mask(n_sites), n_sites: n_sites as u8 }
    }

    /// Region from 1-based site labels.
    pub fn from_sites(sites: &[usize], n_sites: usize) -> Result<Self> {
        let mut bits = 0u32;
        for &s in sites {
            if s == 0 || s > n_sites {
                return param(format!("site {s} outside 1..={n_sites}"));
            }
            bits |= 1 << (s - 1);
        }
        Self::new(bits, n_sites)
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn n_sites(self) -> usize {
        self.n_sites as usize
    }

    #[inline]
    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn complement(self) -> Self {
        Self { bits: !self.bits & full_mask(self.n_sites()), n_sites: self.n_sites }
    }

    pub fn intersection(self, other: Self) -> Self {
        Self { bits: self.bits & other.bits, n_sites: self.n_sites }
    }

    pub fn union(self, other: Self) -> Self {
        Self { bits: self.bits | other.bits, n_sites: self.n_sites }
    }

    pub fn symmetric_difference(self, other: Self) -> Self {
        Self { bits: self.bits ^ other.bits, n_sites: self.n_sites }
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn contains_site(self, site: usize) -> bool {
        site >= 1 && site <= self.n_sites() && self.bits >> (site - 1) & 1 == 1
    }

    /// 1-based site labels in increasing order.
    pub fn sites(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..32).filter(move |i| bits >> i & 1 == 1).map(|i| i + 1)
    }

    /// Every region of an `n`-site register, in mask order.
    pub fn all(n_sites: usize) -> impl Iterator<Item = Region> {
        (0..1u32 << n_sites).map(move |bits| Region { bits, n_sites: n_sites as u8 })
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, s) in self.sites().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

#[inline]
pub fn full_mask(n_sites: usize) -> u32 {
    if n_sites >= 32 {
        u32::MAX
    } else {
        (1u32 << n_sites) - 1
    }
}

pub(crate) fn check_sites(n_sites: usize) -> Result<()> {
    if n_sites == 0 || n_sites > MAX_SITES {
        return param(format!("number of sites must be in 1..={MAX_SITES}, got {n_sites}"));
    }
    Ok(())
}

pub(crate) fn check_dim(d: u32) -> Result<()> {
    if d < 2 {
        return param(format!("local dimension must be at least 2, got {d}"));
    }
    Ok(())
}

/// Weingarten weight `(d^2 - 1)^-N (-1/d)^|A xor B|` of a pair of regions.
pub fn weingarten<T: Scalar>(a: Region, b: Region, d: u32, n_sites: usize) -> Result<T> {
    check_dim(d)?;
    check_sites(n_sites)?;
    if a.n_sites() != n_sites || b.n_sites() != n_sites {
        return param("regions belong to a different register size");
    }
    Ok(weingarten_unchecked(a.bits ^ b.bits, d, n_sites))
}

pub(crate) fn weingarten_unchecked<T: Scalar>(symdiff: u32, d: u32, n_sites: usize) -> T {
    let d = T::from_i64(d as i64);
    let norm = (d * d - T::one()).powi_exact(-(n_sites as i32));
    let minus_inv_d = -(T::one() / d);
    norm * minus_inv_d.powi_exact(symdiff.count_ones() as i32)
}

/// Per-site fusion tensor `f[a][b][c]`.
pub fn fusion_site_tensor<T: Scalar>(d: u32) -> [[[T; 2]; 2]; 2] {
    let d = T::from_i64(d as i64);
    let z = T::zero();
    let dd1 = d * d - T::one();
    let hi = d * d / dd1;
    let lo = d / dd1;
    [
        [[d, z], [z, z]],
        [[hi * d, -hi], [-lo, lo * d]],
    ]
}

/// Fusion coefficient `f_{A,B,C}` as a product of per-site factors.
pub fn fusion_coeff<T: Scalar>(a: Region, b: Region, c: Region, d: u32) -> Result<T> {
    check_dim(d)?;
    let n = a.n_sites();
    if b.n_sites() != n || c.n_sites() != n {
        return param("regions belong to a different register size");
    }
    let f = fusion_site_tensor::<T>(d);
    let mut acc = T::one();
    for i in 0..n {
        let ai = (a.bits >> i & 1) as usize;
        let bi = (b.bits >> i & 1) as usize;
        let ci = (c.bits >> i & 1) as usize;
        acc *= f[ai][bi][ci];
        if acc == T::zero() {
            break;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn reg(bits: u32, n: usize) -> Region {
        Region::new(bits, n).unwrap()
    }

    #[test]
    fn weingarten_examples() {
        let w: Q = weingarten(reg(0, 1), reg(0, 1), 2, 1).unwrap();
        assert_eq!(w, q(1, 3));
        let w: Q = weingarten(reg(1, 1), reg(0, 1), 2, 1).unwrap();
        assert_eq!(w, q(-1, 6));
        let w: Q = weingarten(reg(0b01, 2), reg(0b10, 2), 2, 2).unwrap();
        assert_eq!(w, q(1, 36));
    }

    #[test]
    fn weingarten_rejects_small_dimension() {
        assert!(weingarten::<f64>(reg(0, 1), reg(0, 1), 1, 1).is_err());
    }

    #[test]
    fn fusion_examples() {
        // a=0, b=1 vanishes for every c
        for c in 0..2 {
            let f: Q = fusion_coeff(reg(0, 1), reg(1, 1), reg(c, 1), 2).unwrap();
            assert_eq!(f, q(0, 1));
        }
        let f: Q = fusion_coeff(reg(1, 1), reg(1, 1), reg(0, 1), 2).unwrap();
        assert_eq!(f, q(-2, 3));
        let f: Q = fusion_coeff(reg(1, 1), reg(1, 1), reg(1, 1), 2).unwrap();
        assert_eq!(f, q(4, 3));
    }

    /// `(d^3/(d^2-1))^N sum_D [B = A and D] d^-|D| (-1/d)^|C xor D|`
    fn fusion_by_definition(a: u32, b: u32, c: u32, d: i64, n: usize) -> Q {
        let dq = Q::from_integer(d);
        let pref = (dq * dq * dq / (dq * dq - Q::from_integer(1))).powi_exact(n as i32);
        let mut acc = Q::from_integer(0);
        for dm in 0..1u32 << n {
            if a & dm != b {
                continue;
            }
            let t = dq.powi_exact(-(dm.count_ones() as i32))
                * (-(Q::from_integer(1) / dq)).powi_exact((c ^ dm).count_ones() as i32);
            acc += t;
        }
        pref * acc
    }

    #[test]
    fn fusion_factorization_matches_definition_exhaustively() {
        for d in [2u32, 3] {
            for n in 1..=3usize {
                for a in 0..1u32 << n {
                    for b in 0..1u32 << n {
                        for c in 0..1u32 << n {
                            let f: Q = fusion_coeff(reg(a, n), reg(b, n), reg(c, n), d).unwrap();
                            assert_eq!(f, fusion_by_definition(a, b, c, d as i64, n), "{a} {b} {c} d={d}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fusion_vanishes_unless_b_in_a() {
        let n = 3;
        for a in 0..8 {
            for b in 0..8 {
                if b & !a != 0 {
                    for c in 0..8 {
                        let f: f64 = fusion_coeff(reg(a, n), reg(b, n), reg(c, n), 2).unwrap();
                        assert_eq!(f, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn region_set_algebra() {
        let n = 5;
        for a in Region::all(n) {
            assert_eq!(a.complement().len(), n - a.len());
            for b in Region::all(n) {
                let lhs = a.symmetric_difference(b).len();
                assert_eq!(lhs, a.len() + b.len() - 2 * a.intersection(b).len());
                let wab: f64 = weingarten(a, b, 2, n).unwrap();
                let wba: f64 = weingarten(b, a, 2, n).unwrap();
                assert_eq!(wab, wba);
            }
        }
    }

    #[test]
    fn region_validation() {
        assert!(Region::new(4, 2).is_err());
        assert!(Region::new(0, 0).is_err());
        assert!(Region::new(0, MAX_SITES + 1).is_err());
        let r = Region::from_sites(&[1, 3], 3).unwrap();
        assert_eq!(r.bits(), 0b101);
        assert_eq!(format!("{r:?}"), "{1,3}");
    }
}
