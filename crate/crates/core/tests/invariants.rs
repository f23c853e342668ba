//! Cross-module invariants that need more than one module or a larger
//! sample than the unit tests.

use ls_shadows::dense::circuit::brickwall_layer;
use ls_shadows::dense::hamiltonian::RydbergParams;
use ls_shadows::dense::{CircuitInstance, DensityMatrix, Ensemble, EnsembleKind, EnsembleSpec, Gate, PureState};
use ls_shadows::entanglement::{block_page_ef, estimate_ef, OutcomeMode};
use ls_shadows::estimators::shadow::{OverlapEstimator, PauliEstimator};
use ls_shadows::estimators::{map_shots, Snapshot};
use ls_shadows::frame::{frame_gap, ls_frame_potential, PairMode};
use ls_shadows::harness::experiments::solve_recon;
use ls_shadows::harness::{run, ExperimentConfig, ExperimentId};
use ls_shadows::lattice::LatticeVector;
use ls_shadows::linalg::{haar_unitary, kron, CMatrix};
use ls_shadows::reconstruction::{
    apply_reconstruction, global_haar_r, local_haar_r, solve_recon_closed_form, solve_recon_dense, two_qudit_analytic_r,
};
use ls_shadows::rng::{derive_seed, rng_from_seed, Stream};
use ls_shadows::stabilizer::clifford;
use ls_shadows::stabilizer::{CliffordGate, PauliString};
use ls_shadows::Region;

fn open_brickwall(n: usize, depth: usize) -> EnsembleSpec {
    EnsembleSpec::new(n, EnsembleKind::Brickwall { depth, periodic: false }).unwrap()
}

#[test]
fn gates_preserve_norm() {
    let mut rng = rng_from_seed(1);
    let e = Ensemble::new(EnsembleSpec::brickwall(8, 100), 2).unwrap();
    let member = e.member_by_index(0).unwrap();
    let mut psi = PureState::random_haar(8, &mut rng).unwrap();
    for g in member.gates() {
        let before = psi.norm_sqr();
        g.apply(&mut psi);
        assert!((psi.norm_sqr() - before).abs() < 1e-10);
    }
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-8, "drift {}", psi.norm_sqr() - 1.0);
}

#[test]
fn brickwall_purity_respects_light_cone() {
    // a two-qubit gate has operator Schmidt rank <= 4, so every gate across
    // a cut adds at most 2 ln 2 of second Renyi entropy
    let n = 6;
    for depth in 0..6 {
        let e = Ensemble::new(open_brickwall(n, depth), 40 + depth as u64).unwrap();
        for i in 0..20 {
            let member = e.member_by_index(i).unwrap();
            let phi = member.snapshot_state(i * 7 % 64).unwrap();
            for k in 1..n {
                let crossing: usize = (0..depth).map(|l| brickwall_layer(n, l, false).iter().filter(|&&(a, b)| a < k && b >= k).count()).sum();
                let bits = (1u32 << k) - 1;
                let cap = k.min(n - k).min(2 * crossing) as i32;
                let p = phi.purity(Region::new(bits, n).unwrap());
                assert!(p >= 2f64.powi(-cap) - 1e-12, "L = {depth}, cut {k}: purity {p} below 2^-{cap}");
            }
        }
    }
}

fn clifford_members(n: usize, count: u64) -> Vec<CircuitInstance> {
    let e = Ensemble::new(EnsembleSpec::cnot_sandwich(n), 11).unwrap();
    (0..count).map(|i| e.member_by_index(i).unwrap()).collect()
}

/// Elements of the group generated by `gens`, without signs.
fn unsigned_group(gens: &[PauliString]) -> Vec<(u32, u32)> {
    (0..1u32 << gens.len())
        .map(|m| {
            let mut p = PauliString::identity(gens.first().map_or(1, |g| g.n_sites()));
            for (i, g) in gens.iter().enumerate() {
                if m >> i & 1 == 1 {
                    p = p.mul(g);
                }
            }
            (p.x_mask(), p.z_mask())
        })
        .collect()
}

#[test]
fn stabilizer_snapshots_match_dense() {
    let n = 5;
    let mut rng = rng_from_seed(5);
    for (i, member) in clifford_members(n, 12).iter().enumerate() {
        let b = (i as u64 * 13) % 32;
        let t = member.tableau_snapshot(b).unwrap();
        t.check_invariants().unwrap();
        let phi = member.snapshot_state(b).unwrap();
        for c in Region::all(n) {
            assert!((t.purity(c) - phi.purity(c)).abs() < 1e-12, "region {c:?}");
        }
        for _ in 0..40 {
            let (x, z) = (rand::Rng::random_range(&mut rng, 0..32u32), rand::Rng::random_range(&mut rng, 0..32u32));
            let p = PauliString::new(x, z, n).unwrap();
            let Some(_) = p.sign() else { continue };
            let e = t.pauli_expectation(&p).unwrap();
            assert!(e * e == 0.0 || e * e == 1.0, "<P>^2 = {}", e * e);
            let in_reduced = unsigned_group(&t.reduced_generators(p.support())).contains(&(x, z));
            assert_eq!(e * e == 1.0, in_reduced, "{p}");
            assert!((e - phi.pauli_expectation(&p).re).abs() < 1e-12);
        }
    }
}

#[test]
fn entanglement_feature_invariants_and_depth_monotonicity() {
    let n = 6;
    let mut prev: Option<ls_shadows::EfEstimate> = None;
    for depth in 0..4 {
        let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), 70 + depth as u64).unwrap();
        let est = estimate_ef(&e, 1500, OutcomeMode::Sample).unwrap();
        est.check_invariants(4.0).unwrap();
        if let Some(p) = &prev {
            for site in 0..n {
                let i = 1usize << site;
                let tol = 3.0 * (p.stderr[i].powi(2) + est.stderr[i].powi(2)).sqrt() + 1e-12;
                assert!(est.w[i] <= p.w[i] + tol, "L = {depth}, site {site}: {} after {}", est.w[i], p.w[i]);
            }
        }
        prev = Some(est);
    }
}

#[test]
fn every_recon_vector_is_a_valid_inverse() {
    let mut rng = rng_from_seed(9);
    let mut vectors = vec![global_haar_r(4, 2).unwrap(), local_haar_r(4, 2).unwrap(), two_qudit_analytic_r(0.9, 2).unwrap()];
    for n in 2..=5 {
        let w = block_page_ef::<f64>(&[(1 << (n - 1)) - 1, 1 << (n - 1)], n, 2).unwrap();
        vectors.push(solve_recon_dense(&w, 2).unwrap());
        vectors.push(solve_recon_closed_form(&w).unwrap());
        let e = Ensemble::new(EnsembleSpec::brickwall(n, 2), rand::Rng::random(&mut rng)).unwrap();
        vectors.push(solve_recon(&estimate_ef(&e, 300, OutcomeMode::Sample).unwrap().w).unwrap());
    }
    for r in &vectors {
        let n = r.n_sites();
        assert!((r.r.sum() - 2f64.powi(-(n as i32))).abs() < 1e-9 * r.r.as_slice().iter().map(|v| v.abs()).sum::<f64>().max(1.0));
        if let Some(res) = r.residual {
            assert!(res < 1e-6, "{:?} residual {res}", r.source);
        }
    }
}

fn onsite_unitary(n: usize, seed: u64) -> CMatrix {
    let mut rng = rng_from_seed(seed);
    let mut v = CMatrix::identity(1, 1);
    for _ in 0..n {
        // the last factor is site 0, the least significant bit
        v = kron(&v, &haar_unitary(2, &mut rng).unwrap());
    }
    v
}

#[test]
fn inverse_commutes_with_onsite_unitaries() {
    let mut rng = rng_from_seed(12);
    for n in 1..=4 {
        let blocks: Vec<u32> = (0..n).map(|i| 1 << i).collect();
        let w = block_page_ef::<f64>(&blocks, n, 2).unwrap().axpby(0.5, &block_page_ef::<f64>(&[(1 << n) - 1], n, 2).unwrap(), 0.5).unwrap();
        let r = solve_recon_dense(&w, 2).unwrap();
        for k in 0..3 {
            let sigma = DensityMatrix::random(n, &mut rng).unwrap();
            let v = onsite_unitary(n, 100 + k);
            let lhs = apply_reconstruction(&sigma.conjugated(&v), &r).unwrap();
            let rhs = apply_reconstruction(&sigma, &r).unwrap().conjugated(&v);
            assert!(lhs.max_abs_diff(&rhs) < 1e-9, "N = {n}: {}", lhs.max_abs_diff(&rhs));
        }
    }
}

#[test]
fn exact_posterior_average_is_unbiased() {
    // every member of the on-site Clifford ensemble at N = 3, every outcome
    // weighted by its Born probability
    let n = 3;
    let mut rng = rng_from_seed(21);
    let rho = DensityMatrix::random(n, &mut rng).unwrap();
    let target = PureState::random_haar(n, &mut rng).unwrap();
    let r = local_haar_r(n, 2).unwrap();
    let paulis: Vec<PauliString> = ["ZII", "XYZ", "IYX", "ZZZ"].iter().map(|s| s.parse().unwrap()).collect();
    let pests: Vec<PauliEstimator> = paulis.iter().map(|p| PauliEstimator::new(p, &r).unwrap()).collect();
    let fest = OverlapEstimator::new(&target, &r).unwrap();
    let size = clifford::group().len();
    let mut acc = vec![0.0; paulis.len() + 1];
    for m in 0..size.pow(n as u32) {
        let gates = (0..n).map(|s| Gate::Clifford(CliffordGate::Single { site: s, index: ((m / size.pow(s as u32)) % size) as u8 })).collect();
        let member = CircuitInstance::new(n, gates);
        for b in 0..1u64 << n {
            let phi = member.snapshot_state(b).unwrap();
            let p = rho.expectation_pure(&phi);
            let snap = Snapshot::Dense(phi);
            for (a, est) in acc.iter_mut().zip(&pests) {
                *a += p * est.single_shot(&snap).unwrap();
            }
            acc[paulis.len()] += p * fest.single_shot(&snap).unwrap();
        }
    }
    let norm = size.pow(n as u32) as f64;
    for (p, a) in paulis.iter().zip(&acc) {
        let exact = rho.expectation(&p.to_matrix()).re;
        assert!((a / norm - exact).abs() < 1e-10, "{p}: {} vs {exact}", a / norm);
    }
    let exact = rho.expectation_pure(&target);
    assert!((acc[paulis.len()] / norm - exact).abs() < 1e-10);
}

#[test]
fn variance_ordering_with_depth() {
    let n = 6;
    let z1 = PauliString::z_string(1, n).unwrap();
    let z6 = PauliString::z_string(6, n).unwrap();
    let state = ls_shadows::dense::prepare_state(&ls_shadows::dense::StateSpec::Ghz, n).unwrap();
    let mut vars = Vec::new();
    for depth in 0..4 {
        let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), 300 + depth as u64).unwrap();
        let r = solve_recon(&estimate_ef(&e, 2000, OutcomeMode::Sample).unwrap().w).unwrap();
        let ests = [PauliEstimator::new(&z1, &r).unwrap(), PauliEstimator::new(&z6, &r).unwrap()];
        let shots = map_shots(&e, &state, 40_000, |s| Ok([ests[0].single_shot(s)?, ests[1].single_shot(s)?])).unwrap();
        let var = |j: usize| {
            let m = shots.iter().map(|s| s[j]).sum::<f64>() / shots.len() as f64;
            shots.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (shots.len() - 1) as f64
        };
        vars.push((var(0), var(1)));
    }
    for w in vars.windows(2) {
        assert!(w[1].0 > w[0].0, "Var Z1 should grow with depth: {vars:?}");
        assert!(w[1].1 < w[0].1, "Var Z6 should shrink with depth: {vars:?}");
    }
}

#[test]
fn frame_potential_is_bounded_below_by_local_twirl() {
    let n = 4;
    let specs = [
        EnsembleSpec::brickwall(n, 1),
        EnsembleSpec::new(n, EnsembleKind::Gue2 { time: 0.3, periodic: false }).unwrap(),
        EnsembleSpec::new(n, EnsembleKind::Dqim { coupling: 1.0, field: std::f64::consts::FRAC_PI_4, steps: 1, instance: None }).unwrap(),
        EnsembleSpec::cnot_sandwich(n),
        EnsembleSpec::rydberg_sandwich(n, RydbergParams::default(), 1.0),
    ];
    for (i, spec) in specs.into_iter().enumerate() {
        let e = Ensemble::new(spec.clone(), 500 + i as u64).unwrap();
        let g = frame_gap(&e, 300, 600, PairMode::Enumerate, OutcomeMode::Enumerate).unwrap();
        assert!(g.delta + 3.0 * g.stderr >= 0.0, "{:?}: delta {} +- {}", spec.kind, g.delta, g.stderr);
    }
}

#[test]
fn prior_and_posterior_members_are_disjoint() {
    let e = Ensemble::new(EnsembleSpec::brickwall(4, 1), 77).unwrap();
    let shots: std::collections::HashSet<u64> = (0..20_000).map(|i| e.member_seed(i)).collect();
    assert!((0..20_000).all(|i| !shots.contains(&derive_seed(77, Stream::EntanglementFeature, i))));
}

#[test]
fn experiment_rows_are_reproducible_and_tagged() {
    let mut cfg = ExperimentConfig::new(ExperimentId::BiasDemo, 8);
    cfg.n_sites = 3;
    cfg.samples = 200;
    cfg.ef_samples = 100;
    cfg.sweep.depths = vec![1, 2];
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.table.rows, b.table.rows);
    let seed = a.table.column("seed").unwrap();
    let hash = a.table.column("config_hash").unwrap();
    for row in &a.table.rows {
        assert!(row[seed].parse::<u64>().is_ok());
        assert_eq!(row[hash], cfg.hash());
    }
    cfg.seed = 9;
    assert_ne!(run(&cfg).unwrap().table.rows, a.table.rows);
}

#[test]
fn closed_form_and_dense_agree_on_estimated_features() {
    let e = Ensemble::new(EnsembleSpec::brickwall(5, 3), 3).unwrap();
    let w: LatticeVector<f64> = estimate_ef(&e, 500, OutcomeMode::Sample).unwrap().w;
    let (a, b) = (solve_recon_dense(&w, 2).unwrap(), solve_recon_closed_form(&w).unwrap());
    let scale = a.r.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(a.r.max_abs_diff(&b.r).unwrap() < 1e-8 * scale);
}

fn permute_bits(bits: u32, perm: &[usize]) -> u32 {
    perm.iter().enumerate().filter(|&(i, _)| bits >> i & 1 == 1).fold(0, |m, (_, &j)| m | 1 << j)
}

proptest::proptest! {
    #[test]
    fn weingarten_depends_only_on_symmetric_difference(n in 1usize..=6, a in 0u32..64, b in 0u32..64, c in 0u32..64, d in 2u32..5) {
        let m = (1u32 << n) - 1;
        let (a, b, c) = (Region::new(a & m, n).unwrap(), Region::new(b & m, n).unwrap(), Region::new(c & m, n).unwrap());
        let w = |x, y| ls_shadows::region::weingarten::<num_rational::Ratio<i64>>(x, y, d, n).unwrap();
        proptest::prop_assert_eq!(w(a, b), w(b, a));
        // c has the same distance from the empty region as a from b iff the sizes match
        if c.len() == a.symmetric_difference(b).len() {
            proptest::prop_assert_eq!(w(a, b), w(c, Region::empty(n)));
        }
    }

    #[test]
    fn ls_frame_potential_ignores_site_labels(n in 1usize..=5, seed in proptest::prelude::any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let e = Ensemble::new(EnsembleSpec::brickwall(n, 1), seed).unwrap();
        let w = estimate_ef(&e, 20, OutcomeMode::Sample).unwrap().w;
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permuted = LatticeVector::from_fn(n, |bits| {
            let inv = (0..1u32 << n).find(|&x| permute_bits(x, &perm) == bits).unwrap();
            w.as_slice()[inv as usize]
        }).unwrap();
        let (a, b) = (ls_frame_potential(&w, 2).unwrap(), ls_frame_potential(&permuted, 2).unwrap());
        proptest::prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}
