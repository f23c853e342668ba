//! Pauli strings in symplectic form.
//!
//! `PauliString { x, z, phase }` is the operator `i^phase P(x, z)` with
//! `P(x, z) = i^{|x & z|} X^x Z^z`, the Hermitian Pauli whose letter at site
//! `s` is `I, X, Z, Y` for `(x_s, z_s) = 00, 10, 01, 11`.

use std::fmt;
use std::str::FromStr;

use crate::error::{param, Error, Result};
use crate::linalg::{CMatrix, C64, I, ONE, ZERO};
use crate::region::{check_sites, full_mask, Region};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    x: u32,
    z: u32,
    n_sites: u8,
    phase: u8,
}

#[inline]
pub(crate) fn i_pow(k: u8) -> C64 {
    match k & 3 {
        0 => ONE,
        1 => I,
        2 => -ONE,
        _ => -I,
    }
}

impl PauliString {
    pub fn new(x: u32, z: u32, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let m = full_mask(n_sites);
        if x & !m != 0 || z & !m != 0 {
            return param(format!("Pauli masks do not fit {n_sites} sites"));
        }
        Ok(Self { x, z, n_sites: n_sites as u8, phase: 0 })
    }

    pub(crate) fn raw(x: u32, z: u32, n_sites: usize, phase: u8) -> Self {
        Self { x, z, n_sites: n_sites as u8, phase: phase & 3 }
    }

    pub fn identity(n_sites: usize) -> Self {
        Self::raw(0, 0, n_sites, 0)
    }

    pub fn single(letter: char, site: usize, n_sites: usize) -> Result<Self> {
        if site == 0 || site > n_sites {
            return param(format!("site {site} outside 1..={n_sites}"));
        }
        let b = 1u32 << (site - 1);
        let (x, z) = match letter {
            'I' => (0, 0),
            'X' => (b, 0),
            'Y' => (b, b),
            'Z' => (0, b),
            _ => return param(format!("unknown Pauli letter {letter:?}")),
        };
        Self::new(x, z, n_sites)
    }

    /// `Z` on sites `1..=k`, identity elsewhere.
    pub fn z_string(k: usize, n_sites: usize) -> Result<Self> {
        if k > n_sites {
            return param(format!("string length {k} exceeds {n_sites} sites"));
        }
        Self::new(0, full_mask(k), n_sites)
    }

    pub fn x_mask(&self) -> u32 {
        self.x
    }

    pub fn z_mask(&self) -> u32 {
        self.z
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites as usize
    }

    /// Power of `i` in front of the Hermitian Pauli.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn with_phase(mut self, phase: u8) -> Self {
        self.phase = phase & 3;
        self
    }

    /// `+1` or `-1` for Hermitian strings, `None` for `+-i`.
    pub fn sign(&self) -> Option<f64> {
        match self.phase {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    pub fn support(&self) -> Region {
        Region::new(self.x | self.z, self.n_sites()).expect("masks validated on construction")
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    pub fn neg(mut self) -> Self {
        self.phase = (self.phase + 2) & 3;
        self
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n_sites, other.n_sites);
        let a1 = (self.x & self.z).count_ones();
        let a2 = (other.x & other.z).count_ones();
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let a3 = (x & z).count_ones();
        let cross = 2 * (self.z & other.x).count_ones();
        let k = self.phase as u32 + other.phase as u32 + a1 + a2 + cross + 4 * 32 - a3;
        Self::raw(x, z, self.n_sites(), (k & 3) as u8)
    }

    /// Matrix element `<r| i^phase P |c>`: nonzero only for `r = c ^ x`.
    #[inline]
    pub fn column_entry(&self, c: u32) -> (u32, C64) {
        let a = (self.x & self.z).count_ones() as u8 + self.phase;
        let sign = if (self.z & c).count_ones() % 2 == 1 { 2 } else { 0 };
        (c ^ self.x, i_pow(a + sign))
    }

    pub fn to_matrix(&self) -> CMatrix {
        let dim = 1usize << self.n_sites;
        let mut m = CMatrix::from_element(dim, dim, ZERO);
        for c in 0..dim as u32 {
            let (r, v) = self.column_entry(c);
            m[(r as usize, c as usize)] = v;
        }
        m
    }

    pub fn letter(&self, site: usize) -> char {
        let b = 1u32 << (site - 1);
        match (self.x & b != 0, self.z & b != 0) {
            (false, false) => 'I',
            (true, false) => 'X',
            (true, true) => 'Y',
            (false, true) => 'Z',
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = ["+", "+i", "-", "-i"][self.phase as usize];
        write!(f, "{p}")?;
        for s in 1..=self.n_sites() {
            write!(f, "{}", self.letter(s))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// `"+ZZII"`, `"-iXY"`, or an unsigned `"XIZ"`; the first letter is site 1.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, body) = if let Some(rest) = s.strip_prefix("+i") {
            (1, rest)
        } else if let Some(rest) = s.strip_prefix("-i") {
            (3, rest)
        } else if let Some(rest) = s.strip_prefix('+') {
            (0, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (2, rest)
        } else {
            (0, s)
        };
        let n = body.chars().count();
        check_sites(n)?;
        let mut x = 0;
        let mut z = 0;
        for (i, ch) in body.chars().enumerate() {
            let b = 1u32 << i;
            match ch {
                'I' => {}
                'X' => x |= b,
                'Y' => {
                    x |= b;
                    z |= b
                }
                'Z' => z |= b,
                _ => return Err(Error::Format(format!("bad Pauli letter {ch:?} in {s:?}"))),
            }
        }
        Ok(Self::raw(x, z, n, phase))
    }
}
