//! Stabilizer tableaux for snapshot states `U^dagger |b>` of Clifford circuits.

use serde::{Deserialize, Serialize};

use crate::dense::state::PureState;
use crate::error::{param, Error, Result};
use crate::lattice::LatticeVector;
use crate::linalg::{C64, ZERO};
use crate::region::{check_sites, full_mask, Region};
use crate::stabilizer::clifford::{self, PauliImage};
use crate::stabilizer::pauli::PauliString;

/// A Clifford gate with 0-based sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CliffordGate {
    /// Element `index` of the single-qubit group table.
    Single { site: usize, index: u8 },
    Cnot { control: usize, target: usize },
}

impl CliffordGate {
    pub fn hadamard(site: usize) -> Self {
        Self::Single { site, index: clifford::hadamard_index() }
    }

    pub fn phase(site: usize) -> Self {
        Self::Single { site, index: clifford::phase_index() }
    }

    pub fn inverse(&self) -> Self {
        match *self {
            Self::Single { site, index } => Self::Single { site, index: clifford::inverse_index(index) },
            g => g,
        }
    }

    pub fn max_site(&self) -> usize {
        match *self {
            Self::Single { site, .. } => site,
            Self::Cnot { control, target } => control.max(target),
        }
    }
}

/// JSON form: `{"gate": "cnot", "sites": [1, 2]}` with 1-based sites;
/// names `h`, `s`, `cnot`, or `c1` with an `index` into the group table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRecord {
    pub gate: String,
    pub sites: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u8>,
}

impl TryFrom<&GateRecord> for CliffordGate {
    type Error = Error;

    fn try_from(r: &GateRecord) -> Result<Self> {
        let site = |k: usize| -> Result<usize> {
            match r.sites.get(k) {
                Some(&s) if s >= 1 => Ok(s - 1),
                _ => Err(Error::Format(format!("gate {:?} needs 1-based sites", r.gate))),
            }
        };
        let arity = match r.gate.to_ascii_lowercase().as_str() {
            "cnot" | "cx" => 2,
            _ => 1,
        };
        if r.sites.len() != arity {
            return Err(Error::Format(format!("gate {:?} takes {arity} site(s)", r.gate)));
        }
        match r.gate.to_ascii_lowercase().as_str() {
            "h" => Ok(Self::hadamard(site(0)?)),
            "s" => Ok(Self::phase(site(0)?)),
            "cnot" | "cx" => {
                let (c, t) = (site(0)?, site(1)?);
                if c == t {
                    return Err(Error::Format("CNOT control equals target".into()));
                }
                Ok(Self::Cnot { control: c, target: t })
            }
            "c1" => match r.index {
                Some(i) if (i as usize) < clifford::GROUP_ORDER => Ok(Self::Single { site: site(0)?, index: i }),
                _ => Err(Error::Format("c1 gate needs an index in 0..24".into())),
            },
            other => Err(Error::NotClifford(other.to_string())),
        }
    }
}

impl From<&CliffordGate> for GateRecord {
    fn from(g: &CliffordGate) -> Self {
        match *g {
            CliffordGate::Single { site, index } => {
                if index == clifford::hadamard_index() {
                    GateRecord { gate: "h".into(), sites: vec![site + 1], index: None }
                } else if index == clifford::phase_index() {
                    GateRecord { gate: "s".into(), sites: vec![site + 1], index: None }
                } else {
                    GateRecord { gate: "c1".into(), sites: vec![site + 1], index: Some(index) }
                }
            }
            CliffordGate::Cnot { control, target } => {
                GateRecord { gate: "cnot".into(), sites: vec![control + 1, target + 1], index: None }
            }
        }
    }
}

/// `CNOT(1->2), CNOT(2->3), ..., CNOT(N-1->N)`.
pub fn cnot_staircase(n_sites: usize) -> Vec<CliffordGate> {
    (0..n_sites.saturating_sub(1)).map(|i| CliffordGate::Cnot { control: i, target: i + 1 }).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tableau {
    n_sites: usize,
    rows: Vec<PauliString>,
}

fn image_to_pauli(img: PauliImage, site: usize, n: usize) -> PauliString {
    let b = 1u32 << site;
    PauliString::raw(if img.x { b } else { 0 }, if img.z { b } else { 0 }, n, img.phase)
}

/// Symplectic vector restricted to `mask`, packed as `x | z << 16`.
#[inline]
fn packed(p: &PauliString, mask: u32) -> u32 {
    (p.x_mask() & mask) | (p.z_mask() & mask) << 16
}

fn gf2_rank(mut v: Vec<u32>) -> usize {
    let mut rank = 0;
    for bit in 0..32 {
        let b = 1u32 << bit;
        let Some(p) = (rank..v.len()).find(|&i| v[i] & b != 0) else {
            continue;
        };
        v.swap(rank, p);
        let piv = v[rank];
        for (i, w) in v.iter_mut().enumerate() {
            if i != rank && *w & b != 0 {
                *w ^= piv;
            }
        }
        rank += 1;
    }
    rank
}

impl Tableau {
    /// Stabilizers `(-1)^{b_i} Z_i` of `|b>`.
    pub fn basis(b: u64, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if b >= 1 << n_sites {
            return param(format!("outcome {b:#x} out of range for {n_sites} sites"));
        }
        let rows = (0..n_sites)
            .map(|i| PauliString::raw(0, 1 << i, n_sites, if b >> i & 1 == 1 { 2 } else { 0 }))
            .collect();
        Ok(Self { n_sites, rows })
    }

    pub fn from_generators(rows: Vec<PauliString>) -> Result<Self> {
        let n = rows.len();
        check_sites(n)?;
        if rows.iter().any(|r| r.n_sites() != n) {
            return param("generators act on a different number of sites");
        }
        let t = Self { n_sites: n, rows };
        t.check_invariants()?;
        Ok(t)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.rows
    }

    /// Hermitian, pairwise commuting, independent.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, a) in self.rows.iter().enumerate() {
            if a.sign().is_none() {
                return Err(Error::State(format!("generator {a} is not Hermitian")));
            }
            for b in &self.rows[i + 1..] {
                if !a.commutes_with(b) {
                    return Err(Error::State(format!("generators {a} and {b} anticommute")));
                }
            }
        }
        let full = full_mask(self.n_sites);
        if gf2_rank(self.rows.iter().map(|r| packed(r, full)).collect()) != self.n_sites {
            return Err(Error::State("generators are not independent".into()));
        }
        Ok(())
    }

    /// Conjugate every row by `G`: the stabilized state becomes `G |psi>`.
    pub fn apply(&mut self, g: &CliffordGate) -> Result<()> {
        if g.max_site() >= self.n_sites {
            return param(format!("gate {g:?} acts outside {} sites", self.n_sites));
        }
        let n = self.n_sites;
        match *g {
            CliffordGate::Single { site, index } => {
                let e = &clifford::group()[index as usize];
                let ix = image_to_pauli(e.image_x, site, n);
                let iz = image_to_pauli(e.image_z, site, n);
                let iy = ix.mul(&iz).with_phase((ix.mul(&iz).phase() + 1) & 3);
                let b = 1u32 << site;
                for r in &mut self.rows {
                    let local = match (r.x_mask() & b != 0, r.z_mask() & b != 0) {
                        (false, false) => continue,
                        (true, false) => ix,
                        (false, true) => iz,
                        (true, true) => iy,
                    };
                    let rest = PauliString::raw(r.x_mask() & !b, r.z_mask() & !b, n, r.phase());
                    *r = rest.mul(&local);
                }
            }
            CliffordGate::Cnot { control, target } => {
                let bc = 1u32 << control;
                let bt = 1u32 << target;
                let xc = PauliString::raw(bc | bt, 0, n, 0);
                let zc = PauliString::raw(0, bc, n, 0);
                let xt = PauliString::raw(bt, 0, n, 0);
                let zt = PauliString::raw(0, bc | bt, n, 0);
                let both = bc | bt;
                for r in &mut self.rows {
                    let (x, z) = (r.x_mask(), r.z_mask());
                    if (x | z) & both == 0 {
                        continue;
                    }
                    // i^{|x&z| on the pair} X_c^xc Z_c^zc X_t^xt Z_t^zt
                    let a = ((x & z & both).count_ones()) as u8;
                    let mut local = PauliString::identity(n).with_phase(a);
                    if x & bc != 0 {
                        local = local.mul(&xc);
                    }
                    if z & bc != 0 {
                        local = local.mul(&zc);
                    }
                    if x & bt != 0 {
                        local = local.mul(&xt);
                    }
                    if z & bt != 0 {
                        local = local.mul(&zt);
                    }
                    let rest = PauliString::raw(x & !both, z & !both, n, r.phase());
                    *r = rest.mul(&local);
                }
            }
        }
        Ok(())
    }

    /// Tableau of `U^dagger |b>` where `U` applies `gates` in order.
    pub fn snapshot(gates: &[CliffordGate], b: u64, n_sites: usize) -> Result<Self> {
        let mut t = Self::basis(b, n_sites)?;
        for g in gates.iter().rev() {
            t.apply(&g.inverse())?;
        }
        Ok(t)
    }

    /// Independent generators of the subgroup supported inside `a`.
    pub fn reduced_generators(&self, a: Region) -> Vec<PauliString> {
        let comp = !a.bits() & full_mask(self.n_sites);
        let mut rows = self.rows.clone();
        let mut next = 0;
        for col in 0..32 {
            let (is_z, site) = (col >= 16, col % 16);
            let b = 1u32 << site;
            if comp & b == 0 {
                continue;
            }
            let hit = |p: &PauliString| if is_z { p.z_mask() & b != 0 } else { p.x_mask() & b != 0 };
            let Some(p) = (next..rows.len()).find(|&i| hit(&rows[i])) else {
                continue;
            };
            rows.swap(next, p);
            let piv = rows[next];
            for i in 0..rows.len() {
                if i != next && hit(&rows[i]) {
                    rows[i] = rows[i].mul(&piv);
                }
            }
            next += 1;
        }
        rows.split_off(next)
    }

    /// `+-1` if `+-P` stabilizes the state, otherwise 0.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n_sites() != self.n_sites {
            return Err(Error::Mismatch { expected: self.n_sites, found: p.n_sites() });
        }
        if self.rows.iter().any(|r| !r.commutes_with(p)) {
            return Ok(0.0);
        }
        // P commutes with a maximal stabilizer group, so +-P is in it.
        let full = full_mask(self.n_sites);
        let mut rows = self.rows.clone();
        let mut pivots = Vec::new();
        let mut next = 0;
        for bit in 0..32 {
            let m = 1u32 << bit;
            let Some(k) = (next..rows.len()).find(|&i| packed(&rows[i], full) & m != 0) else {
                continue;
            };
            rows.swap(next, k);
            let piv = rows[next];
            for i in 0..rows.len() {
                if i != next && packed(&rows[i], full) & m != 0 {
                    rows[i] = rows[i].mul(&piv);
                }
            }
            pivots.push((m, next));
            next += 1;
        }
        let mut acc = PauliString::identity(self.n_sites);
        let mut residual = packed(p, full);
        for (m, i) in pivots {
            if residual & m != 0 {
                acc = acc.mul(&rows[i]);
                residual ^= packed(&rows[i], full);
            }
        }
        if residual != 0 {
            return Err(Error::State("Pauli commutes with the group but is not in it".into()));
        }
        let rel = (p.phase() + 4 - acc.phase()) & 3;
        match rel {
            0 => Ok(1.0),
            2 => Ok(-1.0),
            _ => Err(Error::State(format!("{p} is not Hermitian"))),
        }
    }

    /// `2^{g_C - |C|}` with `g_C` the number of generators supported in `C`.
    pub fn purity(&self, c: Region) -> f64 {
        let comp = !c.bits() & full_mask(self.n_sites);
        let rank = gf2_rank(self.rows.iter().map(|r| packed(r, comp)).collect());
        let g = self.n_sites - rank;
        2f64.powi(g as i32 - c.len() as i32)
    }

    pub fn all_purities(&self) -> LatticeVector<f64> {
        LatticeVector::from_fn(self.n_sites, |m| self.purity(Region::new(m, self.n_sites).expect("in range")))
            .expect("valid size")
    }

    /// All `2^N` signed elements of the stabilizer group, in Gray-code order
    /// starting from the identity.
    pub fn stabilizer_group(&self) -> Vec<PauliString> {
        let n = self.rows.len();
        let mut out = Vec::with_capacity(1 << n);
        let mut cur = PauliString::identity(self.n_sites);
        out.push(cur);
        for k in 1u64..1 << n {
            cur = cur.mul(&self.rows[k.trailing_zeros() as usize]);
            out.push(cur);
        }
        out
    }

    /// Dense state vector (up to global phase), via the projector
    /// `prod_i (1 + g_i)/2` applied to a basis state.
    pub fn to_state(&self) -> Result<PureState> {
        let dim = 1usize << self.n_sites;
        for start in 0..dim {
            let mut v = vec![ZERO; dim];
            v[start] = C64::new(1.0, 0.0);
            for g in &self.rows {
                let mut w = v.clone();
                for (c, &a) in v.iter().enumerate() {
                    if a == ZERO {
                        continue;
                    }
                    let (r, e) = g.column_entry(c as u32);
                    w[r as usize] += e * a;
                }
                for x in &mut w {
                    *x *= 0.5;
                }
                v = w;
            }
            let nrm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            if nrm > 1e-6 {
                return PureState::normalized(v, self.n_sites);
            }
        }
        Err(Error::State("stabilizer projector annihilated every basis state".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::str::FromStr;

    fn ps(s: &str) -> PauliString {
        PauliString::from_str(s).unwrap()
    }

    #[test]
    fn group_elements_stabilize() {
        let mut rng = rng_from_seed(21);
        let mut t = Tableau::basis(5, 4).unwrap();
        for _ in 0..40 {
            t.apply(&random_gate(4, &mut rng)).unwrap();
        }
        let group = t.stabilizer_group();
        assert_eq!(group.len(), 16);
        let psi = t.to_state().unwrap();
        let mut seen = std::collections::HashSet::new();
        for g in &group {
            assert!((psi.pauli_expectation(g).re - 1.0).abs() < 1e-10, "{g}");
            assert!(seen.insert((g.x_mask(), g.z_mask())));
        }
    }

    #[test]
    fn basis_and_hadamard() {
        let t = Tableau::basis(0, 2).unwrap();
        let g: Vec<String> = t.generators().iter().map(|p| p.to_string()).collect();
        assert_eq!(g, ["+ZI", "+IZ"]);

        let t = Tableau::snapshot(&[CliffordGate::hadamard(0)], 0, 1).unwrap();
        assert_eq!(t.generators()[0].to_string(), "+X");
    }

    fn ghz_tableau() -> Tableau {
        Tableau::from_generators(vec![ps("XX"), ps("ZZ")]).unwrap()
    }

    #[test]
    fn ghz_queries() {
        let t = ghz_tableau();
        assert_eq!(t.pauli_expectation(&ps("XX")).unwrap(), 1.0);
        assert_eq!(t.pauli_expectation(&ps("ZI")).unwrap(), 0.0);
        assert_eq!(t.pauli_expectation(&ps("YY")).unwrap(), -1.0);
        assert!(t.reduced_generators(Region::new(1, 2).unwrap()).is_empty());
        assert_eq!(t.reduced_generators(Region::full(2)).len(), 2);
        assert!((t.purity(Region::new(1, 2).unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_state_queries() {
        let t = Tableau::basis(0b10, 2).unwrap();
        let red = t.reduced_generators(Region::new(1, 2).unwrap());
        assert_eq!(red.len(), 1);
        assert_eq!(red[0].to_string(), "+ZI");
        assert_eq!(t.pauli_expectation(&ps("IZ")).unwrap(), -1.0);
        assert_eq!(t.pauli_expectation(&ps("XI")).unwrap(), 0.0);
        assert!(t.all_purities().as_slice().iter().all(|&p| p == 1.0));
        let one = Tableau::basis(0, 1).unwrap();
        assert_eq!(one.pauli_expectation(&ps("Z")).unwrap(), 1.0);
        assert_eq!(one.pauli_expectation(&ps("X")).unwrap(), 0.0);
    }

    #[test]
    fn invalid_generators_rejected() {
        assert!(Tableau::from_generators(vec![ps("XI"), ps("ZI")]).is_err());
        assert!(Tableau::from_generators(vec![ps("ZI"), ps("ZI")]).is_err());
    }

    #[test]
    fn gate_records() {
        let r: GateRecord = serde_json::from_str(r#"{"gate":"cnot","sites":[1,2]}"#).unwrap();
        assert_eq!(CliffordGate::try_from(&r).unwrap(), CliffordGate::Cnot { control: 0, target: 1 });
        let bad = GateRecord { gate: "t".into(), sites: vec![1], index: None };
        assert!(matches!(CliffordGate::try_from(&bad), Err(Error::NotClifford(_))));
        let h = CliffordGate::hadamard(2);
        assert_eq!(CliffordGate::try_from(&GateRecord::from(&h)).unwrap(), h);
    }

    #[test]
    fn invariants_hold_after_every_gate() {
        let mut rng = rng_from_seed(8);
        let n = 5;
        let mut t = Tableau::basis(0b10110, n).unwrap();
        for _ in 0..200 {
            let g = random_gate(n, &mut rng);
            t.apply(&g).unwrap();
            t.check_invariants().unwrap();
        }
    }

    pub(crate) fn random_gate(n: usize, rng: &mut crate::rng::Rng) -> CliffordGate {
        use rand::Rng as _;
        if rng.random_bool(0.5) {
            CliffordGate::Single { site: rng.random_range(0..n), index: clifford::sample_index(rng) }
        } else {
            let c = rng.random_range(0..n);
            let mut t = rng.random_range(0..n - 1);
            if t >= c {
                t += 1;
            }
            CliffordGate::Cnot { control: c, target: t }
        }
    }
}
