//! Snapshot collection and single-shot estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::circuit::{CircuitInstance, Ensemble};
use crate::dense::prepare::PreparedState;
use crate::dense::state::PureState;
use crate::error::{param, Error, Result};
use crate::estimators::stats::{report_with, signed_sqrt, EstimateReport, Uncertainty};
use crate::reconstruction::ReconVector;
use crate::rng::{stream_rng, Stream};
use crate::stabilizer::pauli::PauliString;
use crate::stabilizer::tableau::Tableau;

/// Everything needed to replay one measurement: the member unitary is
/// regenerated from `member_seed` and the snapshot is `U^dagger |outcome>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowRecord {
    pub index: u64,
    pub member_seed: u64,
    pub outcome: u64,
}

#[derive(Clone, Debug)]
pub enum Snapshot {
    Dense(PureState),
    Stabilizer(Tableau),
}

impl Snapshot {
    pub fn n_sites(&self) -> usize {
        match self {
            Self::Dense(s) => s.n_sites(),
            Self::Stabilizer(t) => t.n_sites(),
        }
    }

    /// `<phi| P |phi>` for a Hermitian Pauli string.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n_sites() != self.n_sites() {
            return Err(Error::Mismatch { expected: self.n_sites(), found: p.n_sites() });
        }
        match self {
            Self::Dense(s) => Ok(s.pauli_expectation(p).re),
            Self::Stabilizer(t) => t.pauli_expectation(p),
        }
    }

    pub fn to_state(&self) -> Result<PureState> {
        match self {
            Self::Dense(s) => Ok(s.clone()),
            Self::Stabilizer(t) => t.to_state(),
        }
    }
}

/// Runs shot `index`: draws the member unitary and the input state, evolves
/// and samples a Born outcome. All randomness derives from the ensemble's
/// master seed, on streams disjoint from entanglement-feature estimation.
pub fn measure(ensemble: &Ensemble, state: &PreparedState, index: u64) -> Result<ShadowRecord> {
    Ok(measure_member(ensemble, state, index)?.0)
}

fn measure_member(ensemble: &Ensemble, state: &PreparedState, index: u64) -> Result<(ShadowRecord, CircuitInstance)> {
    if state.n_sites() != ensemble.n_sites() {
        return Err(Error::Mismatch { expected: ensemble.n_sites(), found: state.n_sites() });
    }
    let master = ensemble.master_seed();
    let member_seed = ensemble.member_seed(index);
    let member = ensemble.member(member_seed)?;
    let mut psi = state.shot(master, index).clone();
    member.apply(&mut psi);
    let outcome = psi.sample_outcome(&mut stream_rng(master, Stream::Outcome, index));
    Ok((ShadowRecord { index, member_seed, outcome }, member))
}

fn snapshot_of(member: &CircuitInstance, outcome: u64) -> Result<Snapshot> {
    if member.is_clifford() {
        Ok(Snapshot::Stabilizer(member.tableau_snapshot(outcome)?))
    } else {
        Ok(Snapshot::Dense(member.snapshot_state(outcome)?))
    }
}

/// The snapshot of a record, as a tableau when the member is Clifford.
pub fn materialize(ensemble: &Ensemble, record: &ShadowRecord) -> Result<Snapshot> {
    snapshot_of(&ensemble.member(record.member_seed)?, record.outcome)
}

pub fn collect_shadows(ensemble: &Ensemble, state: &PreparedState, n_shots: usize) -> Result<Vec<ShadowRecord>> {
    (0..n_shots as u64).into_par_iter().map(|i| measure(ensemble, state, i)).collect()
}

/// Measures shots `0..n_shots` and maps each snapshot through `f`, in
/// parallel, returning results in shot order.
pub fn map_shots<T, F>(ensemble: &Ensemble, state: &PreparedState, n_shots: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Snapshot) -> Result<T> + Sync,
{
    map_shot_range(ensemble, state, 0..n_shots as u64, f)
}

/// [`map_shots`] over the shot indices in `range`.
pub fn map_shot_range<T, F>(ensemble: &Ensemble, state: &PreparedState, range: std::ops::Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Snapshot) -> Result<T> + Sync,
{
    range
        .into_par_iter()
        .map(|i| {
            let (rec, member) = measure_member(ensemble, state, i)?;
            f(&snapshot_of(&member, rec.outcome)?)
        })
        .collect()
}

/// Replays stored records through `f`.
pub fn map_records<T, F>(ensemble: &Ensemble, records: &[ShadowRecord], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Snapshot) -> Result<T> + Sync,
{
    records.par_iter().map(|rec| f(&materialize(ensemble, rec)?)).collect()
}

fn check_recon(r: &ReconVector, n: usize) -> Result<()> {
    if r.d != 2 {
        return param("snapshot estimators are implemented for qubits only");
    }
    if r.n_sites() != n {
        return Err(Error::Mismatch { expected: n, found: r.n_sites() });
    }
    Ok(())
}

/// `<Psi| M^-1[sigma] |Psi> = sum_P kappa(supp P) <phi|P|phi> <Psi|P|Psi>`
/// with the target's Pauli spectrum precomputed. Only the `X`-patterns on
/// which the target has weight are visited for dense snapshots; stabilizer
/// snapshots sum over their `2^N` group elements.
#[derive(Clone, Debug)]
pub struct OverlapEstimator {
    n_sites: usize,
    target: PureState,
    kappa: Vec<f64>,
    spectrum: Vec<f64>,
    rows: Vec<(u32, Vec<f64>)>,
}

impl OverlapEstimator {
    pub fn new(target: &PureState, r: &ReconVector) -> Result<Self> {
        let n = target.n_sites();
        check_recon(r, n)?;
        let kappa = r.kappa().into_vec();
        let dim = 1usize << n;
        let mut spectrum = Vec::with_capacity(dim * dim);
        let mut rows = Vec::new();
        for x in 0..dim as u32 {
            let row = target.pauli_row(x);
            if row.iter().any(|t| t.abs() > 1e-14) {
                let w = row.iter().enumerate().map(|(z, t)| kappa[(x | z as u32) as usize] * t).collect();
                rows.push((x, w));
            }
            spectrum.extend(row);
        }
        Ok(Self { n_sites: n, target: target.clone(), kappa, spectrum, rows })
    }

    pub fn target(&self) -> &PureState {
        &self.target
    }

    pub fn single_shot(&self, s: &Snapshot) -> Result<f64> {
        if s.n_sites() != self.n_sites {
            return Err(Error::Mismatch { expected: self.n_sites, found: s.n_sites() });
        }
        let n = self.n_sites;
        Ok(match s {
            Snapshot::Dense(phi) => self
                .rows
                .iter()
                .map(|(x, w)| phi.pauli_row(*x).iter().zip(w).map(|(e, w)| e * w).sum::<f64>())
                .sum(),
            Snapshot::Stabilizer(t) => t
                .stabilizer_group()
                .iter()
                .map(|g| {
                    let (x, z) = (g.x_mask(), g.z_mask());
                    let sign = g.sign().expect("stabilizers are Hermitian");
                    sign * self.kappa[(x | z) as usize] * self.spectrum[((x as usize) << n) | z as usize]
                })
                .sum(),
        })
    }
}

/// One-off `<Psi| M^-1[sigma] |Psi>`.
pub fn single_shot_overlap(s: &Snapshot, r: &ReconVector, target: &PureState) -> Result<f64> {
    OverlapEstimator::new(target, r)?.single_shot(s)
}

/// `o = d^N kappa(supp P) <phi|P|phi>`.
#[derive(Clone, Debug)]
pub struct PauliEstimator {
    p: PauliString,
    factor: f64,
}

impl PauliEstimator {
    pub fn new(p: &PauliString, r: &ReconVector) -> Result<Self> {
        check_recon(r, p.n_sites())?;
        if p.is_identity() {
            return param("the identity has no fluctuating estimator");
        }
        if p.sign().is_none() {
            return param(format!("{p} is not Hermitian"));
        }
        let factor = (1u64 << p.n_sites()) as f64 * r.kappa().get(p.support());
        Ok(Self { p: *p, factor })
    }

    /// `d^N kappa(supp P)`.
    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn single_shot(&self, s: &Snapshot) -> Result<f64> {
        Ok(self.factor * s.pauli_expectation(&self.p)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityMode {
    /// `F = sqrt(mean)`.
    SqrtMean,
    /// `F = mean`, the plain overlap `<Psi|rho|Psi>`.
    Mean,
}

/// Fidelity report from single-shot overlaps. A negative mean in
/// [`FidelityMode::SqrtMean`] is reported as `-sqrt|mean|` and flagged.
pub fn estimate_fidelity<R: rand::Rng + ?Sized>(
    overlaps: &[f64],
    mode: FidelityMode,
    method: Uncertainty,
    rng: &mut R,
) -> Result<EstimateReport> {
    let mut rep = match mode {
        FidelityMode::SqrtMean => report_with(overlaps, method, "fidelity-sqrt-mean", signed_sqrt, rng)?,
        FidelityMode::Mean => report_with(overlaps, method, "fidelity-mean", |m| m, rng)?,
    };
    if mode == FidelityMode::SqrtMean && rep.value < 0.0 {
        log::warn!("negative mean overlap; fidelity reported as a signed square root");
        rep.biased = true;
    }
    Ok(rep)
}

pub fn estimate_pauli<R: rand::Rng + ?Sized>(values: &[f64], method: Uncertainty, rng: &mut R) -> Result<EstimateReport> {
    report_with(values, method, "pauli", |m| m, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::circuit::EnsembleSpec;
    use crate::dense::prepare::{prepare_state, StateSpec};
    use crate::entanglement::{block_page_ef, page_ef};
    use crate::estimators::stats::mean;
    use crate::reconstruction::{apply_reconstruction_pure, global_haar_r, local_haar_r, solve_recon_dense};
    use crate::rng::rng_from_seed;
    use std::str::FromStr;

    fn random_snapshot(n: usize, seed: u64) -> Snapshot {
        Snapshot::Dense(PureState::random_haar(n, &mut rng_from_seed(seed)).unwrap())
    }

    fn dense_overlap(s: &Snapshot, r: &ReconVector, psi: &PureState) -> f64 {
        let rho = apply_reconstruction_pure(&s.to_state().unwrap(), r).unwrap();
        rho.expectation_pure(psi)
    }

    #[test]
    fn global_haar_limits() {
        let n = 3;
        let psi = PureState::ghz(n).unwrap();
        let r = global_haar_r(n, 2).unwrap();
        let same = Snapshot::Dense(psi.clone());
        assert!((single_shot_overlap(&same, &r, &psi).unwrap() - 8.0).abs() < 1e-10);
        let orth = Snapshot::Dense(PureState::ghz_signed(n, -1.0).unwrap());
        assert!((single_shot_overlap(&orth, &r, &psi).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn overlap_matches_dense_oracle() {
        let n = 4;
        let r = solve_recon_dense(&block_page_ef(&[0b0011, 0b1100], n, 2).unwrap(), 2).unwrap();
        let mut rng = rng_from_seed(2);
        for target in [PureState::ghz(n).unwrap(), PureState::random_haar(n, &mut rng).unwrap()] {
            let est = OverlapEstimator::new(&target, &r).unwrap();
            for seed in 0..4 {
                let s = random_snapshot(n, seed);
                let a = est.single_shot(&s).unwrap();
                let b = dense_overlap(&s, &r, &target);
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn stabilizer_paths_match_dense() {
        let n = 4;
        let e = Ensemble::new(EnsembleSpec::cnot_sandwich(n), 6).unwrap();
        let r = local_haar_r(n, 2).unwrap();
        let psi = PureState::ghz(n).unwrap();
        let est = OverlapEstimator::new(&psi, &r).unwrap();
        let p = PauliString::from_str("-XYZX").unwrap();
        let pe = PauliEstimator::new(&p, &r).unwrap();
        for i in 0..6 {
            let member = e.member_by_index(i).unwrap();
            let tab = Snapshot::Stabilizer(member.tableau_snapshot(i * 3 % 16).unwrap());
            let den = Snapshot::Dense(member.snapshot_state(i * 3 % 16).unwrap());
            assert!((est.single_shot(&tab).unwrap() - est.single_shot(&den).unwrap()).abs() < 1e-9);
            assert!((pe.single_shot(&tab).unwrap() - pe.single_shot(&den).unwrap()).abs() < 1e-9);
            // Pauli estimator equals the literal d^N sum_A r_A Tr(P sigma_A)
            let rho = apply_reconstruction_pure(&den.to_state().unwrap(), &r).unwrap();
            assert!((pe.single_shot(&den).unwrap() - rho.expectation(&p.to_matrix()).re).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = local_haar_r(2, 2).unwrap();
        assert!(PauliEstimator::new(&PauliString::identity(2), &r).is_err());
        assert!(PauliEstimator::new(&PauliString::from_str("+iXZ").unwrap(), &r).is_err());
        assert!(PauliEstimator::new(&PauliString::from_str("XZZ").unwrap(), &r).is_err());
        let est = OverlapEstimator::new(&PureState::ghz(2).unwrap(), &r).unwrap();
        assert!(est.single_shot(&random_snapshot(3, 0)).is_err());
    }

    #[test]
    fn replay_is_deterministic() {
        let e = Ensemble::new(EnsembleSpec::brickwall(3, 2), 44).unwrap();
        let st = prepare_state(&StateSpec::Ghz, 3).unwrap();
        let a = collect_shadows(&e, &st, 20).unwrap();
        let b = collect_shadows(&e, &st, 20).unwrap();
        assert_eq!(a, b);
        let s1 = materialize(&e, &a[7]).unwrap().to_state().unwrap();
        let s2 = materialize(&e, &a[7]).unwrap().to_state().unwrap();
        assert_eq!(s1.amplitudes(), s2.amplitudes());
    }

    #[test]
    fn unbiased_on_exact_global_haar() {
        // global Haar snapshots with the exact Page EF reconstruct any state
        let n = 3;
        let e = Ensemble::new(EnsembleSpec::new(n, crate::dense::circuit::EnsembleKind::GlobalHaar).unwrap(), 9).unwrap();
        let st = prepare_state(&StateSpec::Ghz, n).unwrap();
        let r = solve_recon_dense(&page_ef(n, 2).unwrap(), 2).unwrap();
        let psi = PureState::ghz(n).unwrap();
        let est = OverlapEstimator::new(&psi, &r).unwrap();
        let v = map_shots(&e, &st, 4000, |s| est.single_shot(s)).unwrap();
        let rep = estimate_fidelity(&v, FidelityMode::Mean, Uncertainty::default(), &mut rng_from_seed(1)).unwrap();
        assert!(rep.z_score(1.0) < 3.0, "{rep:?}");
        let p = PauliString::z_string(2, n).unwrap();
        let pe = PauliEstimator::new(&p, &r).unwrap();
        let v = map_shots(&e, &st, 4000, |s| pe.single_shot(s)).unwrap();
        let rep = estimate_pauli(&v, Uncertainty::default(), &mut rng_from_seed(1)).unwrap();
        assert!(rep.z_score(1.0) < 3.0, "{rep:?} mean {}", mean(&v));
    }

    #[test]
    fn negative_mean_is_flagged() {
        let v = vec![-1.0, -2.0, -0.5, -1.5];
        let rep = estimate_fidelity(&v, FidelityMode::SqrtMean, Uncertainty::default(), &mut rng_from_seed(0)).unwrap();
        assert!(rep.biased);
        assert!((rep.value + 1.25f64.sqrt()).abs() < 1e-12);
    }
}
