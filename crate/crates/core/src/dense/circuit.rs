//! Measurement ensembles and their sampled members.
//!
//! An [`EnsembleSpec`] is a declarative description; [`Ensemble`] binds it to
//! a master seed and caches the parts shared by every member (fixed
//! sandwiched unitaries, frozen disorder). A member is a [`CircuitInstance`]
//! and is a pure function of its member seed.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::hamiltonian::{gue2_hamiltonian, rydberg_hamiltonian, DqimModel, RydbergParams};
use crate::dense::state::PureState;
use crate::error::{param, Error, Result};
use crate::linalg::{haar_unitary, CMatrix, HermitianEigen, C64};
use crate::region::check_sites;
use crate::rng::{derive_seed, rng_from_seed, Rng as StreamRng, Stream};
use crate::stabilizer::clifford;
use crate::stabilizer::tableau::{cnot_staircase, CliffordGate, GateRecord, Tableau};

/// Dense two-qubit unitaries above this register size are refused when a
/// full `2^N x 2^N` matrix is needed.
pub const MAX_DENSE_UNITARY_SITES: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FixedPart {
    /// No entangling part: randomized single-qubit Clifford (Pauli) measurements.
    Identity,
    Clifford { gates: Vec<GateRecord> },
    Rydberg {
        #[serde(flatten)]
        params: RydbergParams,
        time: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// `depth` layers of Haar two-qubit gates; `depth = 0` is one layer of
    /// on-site Haar gates.
    Brickwall {
        depth: usize,
        #[serde(default = "default_true")]
        periodic: bool,
    },
    OnsiteHaar,
    GlobalHaar,
    /// Random on-site Clifford layers before and after a fixed part.
    Sandwich { fixed: FixedPart },
    Gue2 {
        time: f64,
        #[serde(default)]
        periodic: bool,
    },
    /// `steps` unit-time quenches. With `instance` set, the couplings are
    /// frozen to the realization seeded by it; field angles stay random per
    /// member.
    Dqim {
        coupling: f64,
        #[serde(default = "quarter_pi")]
        field: f64,
        steps: usize,
        #[serde(default)]
        instance: Option<u64>,
    },
    /// Plain `exp(-iHT)` of the Rydberg chain (a single fixed unitary).
    Rydberg {
        #[serde(flatten)]
        params: RydbergParams,
        time: f64,
    },
}

fn default_true() -> bool {
    true
}

fn quarter_pi() -> f64 {
    std::f64::consts::FRAC_PI_4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_sites: usize,
    #[serde(flatten)]
    pub kind: EnsembleKind,
}

impl EnsembleSpec {
    pub fn new(n_sites: usize, kind: EnsembleKind) -> Result<Self> {
        let s = Self { n_sites, kind };
        s.validate()?;
        Ok(s)
    }

    pub fn brickwall(n_sites: usize, depth: usize) -> Self {
        Self { n_sites, kind: EnsembleKind::Brickwall { depth, periodic: true } }
    }

    pub fn random_pauli(n_sites: usize) -> Self {
        Self { n_sites, kind: EnsembleKind::Sandwich { fixed: FixedPart::Identity } }
    }

    pub fn cnot_sandwich(n_sites: usize) -> Self {
        let gates = cnot_staircase(n_sites).iter().map(GateRecord::from).collect();
        Self { n_sites, kind: EnsembleKind::Sandwich { fixed: FixedPart::Clifford { gates } } }
    }

    pub fn rydberg_sandwich(n_sites: usize, params: RydbergParams, time: f64) -> Self {
        Self { n_sites, kind: EnsembleKind::Sandwich { fixed: FixedPart::Rydberg { params, time } } }
    }

    pub fn validate(&self) -> Result<()> {
        check_sites(self.n_sites)?;
        let finite = |v: f64, what: &str| -> Result<()> {
            if !v.is_finite() {
                return param(format!("{what} must be finite"));
            }
            Ok(())
        };
        match &self.kind {
            EnsembleKind::Gue2 { time, .. } => {
                finite(*time, "time")?;
                if *time < 0.0 {
                    return param("time must be non-negative");
                }
                if self.n_sites < 2 {
                    return param("GUE2 needs at least two sites");
                }
            }
            EnsembleKind::Dqim { coupling, field, .. } => {
                finite(*coupling, "coupling")?;
                finite(*field, "field")?;
            }
            EnsembleKind::Rydberg { time, .. } | EnsembleKind::Sandwich { fixed: FixedPart::Rydberg { time, .. } } => {
                finite(*time, "time")?;
                if *time < 0.0 {
                    return param("time must be non-negative");
                }
            }
            EnsembleKind::Sandwich { fixed: FixedPart::Clifford { gates } } => {
                for g in gates {
                    let g = CliffordGate::try_from(g)?;
                    if g.max_site() >= self.n_sites {
                        return param(format!("gate {g:?} acts outside {} sites", self.n_sites));
                    }
                }
            }
            _ => {}
        }
        if self.needs_dense_unitary() && self.n_sites > MAX_DENSE_UNITARY_SITES {
            return param(format!("dense-unitary ensembles are limited to {MAX_DENSE_UNITARY_SITES} sites"));
        }
        Ok(())
    }

    fn needs_dense_unitary(&self) -> bool {
        matches!(
            self.kind,
            EnsembleKind::GlobalHaar
                | EnsembleKind::Gue2 { .. }
                | EnsembleKind::Dqim { .. }
                | EnsembleKind::Rydberg { .. }
                | EnsembleKind::Sandwich { fixed: FixedPart::Rydberg { .. } }
        )
    }

    /// Whether every member is a Clifford circuit.
    pub fn is_clifford(&self) -> bool {
        matches!(self.kind, EnsembleKind::Sandwich { fixed: FixedPart::Identity | FixedPart::Clifford { .. } })
    }

    /// Canonical JSON: struct fields in declaration order, no whitespace.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble spec serializes")
    }
}

#[derive(Clone, Debug)]
pub enum Gate {
    /// Row-major 2x2 on a 0-based site.
    One { site: usize, m: [C64; 4] },
    /// Row-major 4x4, local index `2 b_a + b_b`.
    Two { a: usize, b: usize, m: [C64; 16] },
    Clifford(CliffordGate),
    Dense(Arc<CMatrix>),
    /// Quench sequence applied matrix-free, the first angle first.
    Dqim { model: Arc<DqimModel>, thetas: Vec<f64> },
}

fn adjoint2(m: &[C64; 4]) -> [C64; 4] {
    [m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()]
}

fn adjoint4(m: &[C64; 16]) -> [C64; 16] {
    let mut o = [C64::default(); 16];
    for r in 0..4 {
        for c in 0..4 {
            o[4 * r + c] = m[4 * c + r].conj();
        }
    }
    o
}

impl Gate {
    pub fn apply(&self, s: &mut PureState) {
        match self {
            Gate::One { site, m } => s.apply_1q(*site, m),
            Gate::Two { a, b, m } => s.apply_2q(*a, *b, m),
            Gate::Clifford(CliffordGate::Single { site, index }) => {
                s.apply_1q(*site, &clifford::group()[*index as usize].matrix)
            }
            Gate::Clifford(CliffordGate::Cnot { control, target }) => s.apply_cnot(*control, *target),
            Gate::Dense(u) => s.apply_matrix(u),
            Gate::Dqim { model, thetas } => model.evolve_vector(thetas, s.amplitudes_mut(), false),
        }
    }

    pub fn apply_adjoint(&self, s: &mut PureState) {
        match self {
            Gate::One { site, m } => s.apply_1q(*site, &adjoint2(m)),
            Gate::Two { a, b, m } => s.apply_2q(*a, *b, &adjoint4(m)),
            Gate::Clifford(g) => Gate::Clifford(g.inverse()).apply(s),
            Gate::Dense(u) => s.apply_matrix(&u.adjoint()),
            Gate::Dqim { model, thetas } => model.evolve_vector(thetas, s.amplitudes_mut(), true),
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Two { .. } | Gate::Clifford(CliffordGate::Cnot { .. }))
    }
}

fn haar1<R: Rng + ?Sized>(rng: &mut R) -> [C64; 4] {
    let u = haar_unitary(2, rng).expect("dimension 2");
    [u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]]
}

fn haar2<R: Rng + ?Sized>(rng: &mut R) -> [C64; 16] {
    let u = haar_unitary(4, rng).expect("dimension 4");
    let mut m = [C64::default(); 16];
    for r in 0..4 {
        for c in 0..4 {
            m[4 * r + c] = u[(r, c)];
        }
    }
    m
}

/// Site pairs of brick-wall layer `layer` (0-based sites).
pub fn brickwall_layer(n_sites: usize, layer: usize, periodic: bool) -> Vec<(usize, usize)> {
    if n_sites < 2 {
        return Vec::new();
    }
    if periodic {
        let off = layer % n_sites;
        (0..n_sites / 2).map(|k| ((off + 2 * k) % n_sites, (off + 2 * k + 1) % n_sites)).collect()
    } else {
        let off = layer % 2;
        (0..).map(|k| (off + 2 * k, off + 2 * k + 1)).take_while(|&(_, b)| b < n_sites).collect()
    }
}

/// One sampled unitary `U`, stored as gates in application order.
#[derive(Clone, Debug)]
pub struct CircuitInstance {
    n_sites: usize,
    gates: Vec<Gate>,
}

impl CircuitInstance {
    pub fn new(n_sites: usize, gates: Vec<Gate>) -> Self {
        Self { n_sites, gates }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_two_qubit()).count()
    }

    /// `U |psi>`.
    pub fn apply(&self, s: &mut PureState) {
        for g in &self.gates {
            g.apply(s);
        }
    }

    /// `U^dagger |psi>`.
    pub fn apply_adjoint(&self, s: &mut PureState) {
        for g in self.gates.iter().rev() {
            g.apply_adjoint(s);
        }
    }

    /// The snapshot vector `U^dagger |b>`.
    pub fn snapshot_state(&self, b: u64) -> Result<PureState> {
        let mut s = PureState::basis(b, self.n_sites)?;
        self.apply_adjoint(&mut s);
        Ok(s)
    }

    /// Dense `U`.
    pub fn unitary(&self) -> Result<CMatrix> {
        if self.n_sites > MAX_DENSE_UNITARY_SITES {
            return param(format!("dense unitaries are limited to {MAX_DENSE_UNITARY_SITES} sites"));
        }
        if let [Gate::Dense(u)] = self.gates.as_slice() {
            return Ok((**u).clone());
        }
        let dim = 1usize << self.n_sites;
        let mut u = CMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut s = PureState::basis(c as u64, self.n_sites)?;
            self.apply(&mut s);
            u.set_column(c, &nalgebra::DVector::from_column_slice(s.amplitudes()));
        }
        Ok(u)
    }

    pub fn clifford_gates(&self) -> Option<Vec<CliffordGate>> {
        self.gates
            .iter()
            .map(|g| match g {
                Gate::Clifford(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    pub fn is_clifford(&self) -> bool {
        self.gates.iter().all(|g| matches!(g, Gate::Clifford(_)))
    }

    /// Stabilizer tableau of `U^dagger |b>`.
    pub fn tableau_snapshot(&self, b: u64) -> Result<Tableau> {
        let gates = self.clifford_gates().ok_or_else(|| Error::NotClifford("non-Clifford gate in circuit".into()))?;
        Tableau::snapshot(&gates, b, self.n_sites)
    }
}

/// An ensemble bound to a master seed, with shared parts precomputed.
#[derive(Clone, Debug)]
pub struct Ensemble {
    spec: EnsembleSpec,
    master_seed: u64,
    fixed_unitary: Option<Arc<CMatrix>>,
    fixed_clifford: Option<Vec<CliffordGate>>,
    dqim: Option<Arc<DqimModel>>,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec, master_seed: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_sites;
        let mut e = Self { spec, master_seed, fixed_unitary: None, fixed_clifford: None, dqim: None };
        match &e.spec.kind {
            EnsembleKind::Sandwich { fixed: FixedPart::Rydberg { params, time } } | EnsembleKind::Rydberg { params, time } => {
                let h = rydberg_hamiltonian(params, n)?;
                e.fixed_unitary = Some(Arc::new(HermitianEigen::new(&h)?.evolve(*time)));
            }
            EnsembleKind::Sandwich { fixed: FixedPart::Clifford { gates } } => {
                e.fixed_clifford = Some(gates.iter().map(CliffordGate::try_from).collect::<Result<_>>()?);
            }
            EnsembleKind::Dqim { coupling, field, instance: Some(inst), .. } => {
                let mut rng = rng_from_seed(derive_seed(*inst, Stream::Instance, 0));
                let j = DqimModel::sample_couplings(n, *coupling, &mut rng);
                e.dqim = Some(Arc::new(DqimModel::new(n, j, *field)?));
            }
            _ => {}
        }
        Ok(e)
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Seed of member `index`.
    pub fn member_seed(&self, index: u64) -> u64 {
        derive_seed(self.master_seed, Stream::Circuit, index)
    }

    pub fn member_by_index(&self, index: u64) -> Result<CircuitInstance> {
        self.member(self.member_seed(index))
    }

    pub fn member(&self, member_seed: u64) -> Result<CircuitInstance> {
        let n = self.spec.n_sites;
        let mut rng: StreamRng = rng_from_seed(member_seed);
        let onsite_clifford = |rng: &mut StreamRng, gates: &mut Vec<Gate>| {
            for site in 0..n {
                gates.push(Gate::Clifford(CliffordGate::Single { site, index: clifford::sample_index(rng) }));
            }
        };
        let gates = match &self.spec.kind {
            EnsembleKind::Brickwall { depth, periodic } => {
                let mut gates = Vec::new();
                let mut touched = 0u32;
                for l in 0..*depth {
                    for (a, b) in brickwall_layer(n, l, *periodic) {
                        gates.push(Gate::Two { a, b, m: haar2(&mut rng) });
                        touched |= (1 << a) | (1 << b);
                    }
                }
                for site in 0..n {
                    if touched >> site & 1 == 0 {
                        gates.push(Gate::One { site, m: haar1(&mut rng) });
                    }
                }
                gates
            }
            EnsembleKind::OnsiteHaar => (0..n).map(|site| Gate::One { site, m: haar1(&mut rng) }).collect(),
            EnsembleKind::GlobalHaar => vec![Gate::Dense(Arc::new(haar_unitary(1 << n, &mut rng)?))],
            EnsembleKind::Sandwich { fixed } => {
                let mut gates = Vec::new();
                onsite_clifford(&mut rng, &mut gates);
                match fixed {
                    FixedPart::Identity => return Ok(CircuitInstance::new(n, gates)),
                    FixedPart::Clifford { .. } => {
                        let fixed = self.fixed_clifford.as_ref().expect("prepared in Ensemble::new");
                        gates.extend(fixed.iter().map(|g| Gate::Clifford(*g)));
                    }
                    FixedPart::Rydberg { .. } => {
                        gates.push(Gate::Dense(self.fixed_unitary.clone().expect("prepared in Ensemble::new")));
                    }
                }
                onsite_clifford(&mut rng, &mut gates);
                gates
            }
            EnsembleKind::Gue2 { time, periodic } => {
                let h = gue2_hamiltonian(n, *periodic, &mut rng)?;
                vec![Gate::Dense(Arc::new(HermitianEigen::new(&h)?.evolve(*time)))]
            }
            EnsembleKind::Dqim { coupling, field, steps, .. } => {
                let model = match &self.dqim {
                    Some(m) => m.clone(),
                    None => {
                        let j = DqimModel::sample_couplings(n, *coupling, &mut rng);
                        Arc::new(DqimModel::new(n, j, *field)?)
                    }
                };
                let thetas: Vec<f64> = (0..*steps).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
                vec![Gate::Dqim { model, thetas }]
            }
            EnsembleKind::Rydberg { .. } => {
                vec![Gate::Dense(self.fixed_unitary.clone().expect("prepared in Ensemble::new"))]
            }
        };
        Ok(CircuitInstance::new(n, gates))
    }

    /// The frozen DQIM realization, if any.
    pub fn dqim_model(&self) -> Option<&DqimModel> {
        self.dqim.as_deref()
    }
}
