//! The experiment suite. Each experiment turns a config into a result table
//! (one row per sweep point) and a JSON summary.
//!
//! Sweep point `i`, repeat `j` runs on master seed
//! `child_seed(derive_seed(seed, Sweep, i), j)`. Prior (entanglement feature)
//! samples and measured shots come from disjoint streams of that seed.

use serde::Serialize;
use serde_json::{json, Value};

use crate::dense::circuit::{Ensemble, EnsembleKind, EnsembleSpec, FixedPart};
use crate::dense::prepare::{prepare_state, PreparedState, StateSpec};
use crate::dense::state::{DensityMatrix, PureState};
use crate::entanglement::{estimate_ef, pauli_operator_ef, EfEstimate, OutcomeMode};
use crate::error::{param, Error, Result};
use crate::estimators::shadow::{map_shot_range, OverlapEstimator, PauliEstimator};
use crate::estimators::stats::{mean, variance, EstimateReport};
use crate::estimators::{estimate_fidelity, estimate_pauli, shadow_norm, FidelityMode, Uncertainty};
use crate::frame::{auto_window, frame_gap, FrameGap, GapPoint, ScramblingFit};
use crate::harness::config::{ExperimentConfig, ExperimentId};
use crate::harness::output::{cell, write_atomic, write_json_atomic, Table};
use crate::reconstruction::{
    apply_reconstruction_spectrum, global_haar_r, project_physical, solve_recon_closed_form, solve_recon_dense, Projection,
    ReconVector, MAX_DENSE_SOLVE_SITES,
};
use crate::rng::{child_seed, derive_seed, stream_rng, Stream};
use crate::stabilizer::pauli::PauliString;

/// Seed of sweep point `point`, repeat `run`.
pub fn point_seed(master: u64, point: u64, run: u64) -> u64 {
    child_seed(derive_seed(master, Stream::Sweep, point), run)
}

/// Prior entanglement feature of an ensemble and its reconstruction map.
#[derive(Clone, Debug)]
pub struct PriorFit {
    pub ef: EfEstimate,
    pub recon: ReconVector,
}

/// Dense solve up to [`MAX_DENSE_SOLVE_SITES`], closed form beyond.
pub fn solve_recon(w: &crate::lattice::LatticeVector<f64>) -> Result<ReconVector> {
    if w.n_sites() <= MAX_DENSE_SOLVE_SITES {
        solve_recon_dense(w, 2)
    } else {
        solve_recon_closed_form(w)
    }
}

pub fn fit_prior(ensemble: &Ensemble, ef_samples: usize, mode: OutcomeMode) -> Result<PriorFit> {
    let ef = estimate_ef(ensemble, ef_samples, mode)?;
    let recon = solve_recon(&ef.w)?;
    if let Some(cond) = recon.condition {
        let rel = ef.w.as_slice().iter().zip(ef.stderr.as_slice()).map(|(w, s)| s / w).fold(0.0, f64::max);
        if cond * rel > 0.1 {
            log::warn!("reconstruction condition {cond:.2e} amplifies the EF relative error {rel:.1e}; expect a visible bias");
        }
    }
    Ok(PriorFit { ef, recon })
}

/// Single-shot overlaps `<Psi|M^-1[sigma]|Psi>` of shots `0..m`.
pub fn overlap_values(ensemble: &Ensemble, state: &PreparedState, target: &PureState, r: &ReconVector, m: usize) -> Result<Vec<f64>> {
    let est = OverlapEstimator::new(target, r)?;
    map_shot_range(ensemble, state, 0..m as u64, |s| est.single_shot(s))
}

fn fidelity_report(values: &[f64], mode: FidelityMode, method: Uncertainty, seed: u64) -> Result<EstimateReport> {
    estimate_fidelity(values, mode, method, &mut stream_rng(seed, Stream::Bootstrap, 0))
}

/// Pure state whose overlap is estimated: the GHZ state for the GHZ family,
/// otherwise the prepared state itself.
pub fn target_state(state: &StateSpec, n: usize) -> Result<PureState> {
    match state {
        StateSpec::Ghz | StateSpec::ZErrorGhz { .. } => PureState::ghz(n),
        other => match prepare_state(other, n)? {
            PreparedState::Pure(p) => Ok(p),
            PreparedState::Mixture(_) => param("mixed states need an explicit target"),
        },
    }
}

fn or_default<T: Clone>(v: &[T], default: &[T]) -> Vec<T> {
    if v.is_empty() {
        default.to_vec()
    } else {
        v.to_vec()
    }
}

fn report_cells(r: &EstimateReport) -> Vec<String> {
    let (lo, hi) = r.ci.map_or((f64::NAN, f64::NAN), |c| (c.lo, c.hi));
    vec![cell(r.value), cell(r.stderr), cell(lo), cell(hi)]
}

/// Fourth-moment standard error of the sample variance.
fn variance_stderr(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = variance(v);
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / v.len() as f64;
    ((m4 - var * var).max(0.0) / v.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: ExperimentId,
    pub table: Table,
    pub summary: Value,
}

// ---------------------------------------------------------------- fidelity

#[derive(Clone, Debug, Serialize)]
pub struct FidelityPoint {
    pub depth: usize,
    pub run: usize,
    pub seed: u64,
    pub report: EstimateReport,
    pub single_shot_var: f64,
}

/// Fidelity of the configured state with brickwall measurements of each depth.
pub fn ghz_fidelity_vs_depth(cfg: &ExperimentConfig) -> Result<Vec<FidelityPoint>> {
    let n = cfg.n_sites;
    let state = prepare_state(&cfg.state, n)?;
    let target = target_state(&cfg.state, n)?;
    let mut out = Vec::new();
    for (i, &depth) in or_default(&cfg.sweep.depths, &[0, 1, 2, 3]).iter().enumerate() {
        for run in 0..cfg.repeats {
            let seed = point_seed(cfg.seed, i as u64, run as u64);
            let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), seed)?;
            let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
            let v = overlap_values(&e, &state, &target, &prior.recon, cfg.samples)?;
            let report = fidelity_report(&v, cfg.fidelity_mode, cfg.uncertainty, seed)?;
            log::info!("L = {depth} run {run}: F = {:.4} +- {:.4}", report.value, report.stderr);
            out.push(FidelityPoint { depth, run, seed, single_shot_var: variance(&v), report });
        }
    }
    Ok(out)
}

fn fidelity_table(points: &[FidelityPoint]) -> Result<Table> {
    let mut t = Table::new(&["L", "run", "seed", "F", "stderr", "ci_lo", "ci_hi", "single_shot_var", "samples", "biased"]);
    for p in points {
        let mut row = vec![cell(p.depth), cell(p.run), cell(p.seed)];
        row.extend(report_cells(&p.report));
        row.extend([cell(p.single_shot_var), cell(p.report.n_samples), cell(p.report.biased)]);
        t.push(row)?;
    }
    Ok(t)
}

// ---------------------------------------------------------------- bias

#[derive(Clone, Debug, Serialize)]
pub struct BiasPoint {
    pub depth: usize,
    pub seed: u64,
    pub recon: String,
    pub observable: String,
    pub report: EstimateReport,
    pub exact: f64,
}

/// Fidelity and `P_0 = <0...0|rho|0...0>` from the same brickwall shots,
/// post-processed with the global-Haar map and with the EF map.
pub fn bias_demo(cfg: &ExperimentConfig) -> Result<Vec<BiasPoint>> {
    let n = cfg.n_sites;
    let state = prepare_state(&cfg.state, n)?;
    let rho = state.density_matrix()?;
    let target = target_state(&cfg.state, n)?;
    let zero = PureState::basis(0, n)?;
    let mut out = Vec::new();
    for (i, &depth) in or_default(&cfg.sweep.depths, &[1, 2, 3]).iter().enumerate() {
        let seed = point_seed(cfg.seed, i as u64, 0);
        let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), seed)?;
        let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
        let gh = global_haar_r(n, 2)?;
        for (name, r) in [("global-haar", &gh), ("entanglement-feature", &prior.recon)] {
            let ests = [OverlapEstimator::new(&target, r)?, OverlapEstimator::new(&zero, r)?];
            let both = map_shot_range(&e, &state, 0..cfg.samples as u64, |s| Ok([ests[0].single_shot(s)?, ests[1].single_shot(s)?]))?;
            for (j, obs) in ["fidelity", "p0"].into_iter().enumerate() {
                let v: Vec<f64> = both.iter().map(|b| b[j]).collect();
                let mode = if j == 0 { cfg.fidelity_mode } else { FidelityMode::Mean };
                let report = fidelity_report(&v, mode, cfg.uncertainty, child_seed(seed, j as u64))?;
                let exact = rho.expectation_pure(ests[j].target());
                let exact = if mode == FidelityMode::SqrtMean { exact.sqrt() } else { exact };
                out.push(BiasPoint { depth, seed, recon: name.into(), observable: obs.into(), report, exact });
            }
        }
    }
    Ok(out)
}

fn bias_table(points: &[BiasPoint]) -> Result<Table> {
    let mut t = Table::new(&["L", "seed", "recon", "observable", "value", "stderr", "ci_lo", "ci_hi", "exact", "z"]);
    for p in points {
        let mut row = vec![cell(p.depth), cell(p.seed), p.recon.clone(), p.observable.clone()];
        row.extend(report_cells(&p.report));
        row.extend([cell(p.exact), cell((p.report.value - p.exact) / p.report.stderr)]);
        t.push(row)?;
    }
    Ok(t)
}

// ---------------------------------------------------------------- variance

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VariancePoint {
    pub n: usize,
    pub depth: usize,
    pub seed: u64,
    pub mean: f64,
    pub var: f64,
    pub var_stderr: f64,
}

/// `ln Var F = a + c N / (L+1)^alpha`, with `alpha` from a grid search and
/// `(a, c)` by least squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollapseFit {
    pub alpha: f64,
    pub c: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

pub fn fit_collapse(points: &[VariancePoint]) -> Result<CollapseFit> {
    let pts: Vec<&VariancePoint> = points.iter().filter(|p| p.var > 0.0).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points with positive variance", pts.len())));
    }
    let ys: Vec<f64> = pts.iter().map(|p| p.var.ln()).collect();
    let ym = mean(&ys);
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let line = |alpha: f64| -> Option<(f64, f64, f64)> {
        let xs: Vec<f64> = pts.iter().map(|p| p.n as f64 / ((p.depth + 1) as f64).powf(alpha)).collect();
        let xm = mean(&xs);
        let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
        if sxx < 1e-12 {
            return None;
        }
        let c = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>() / sxx;
        let a = ym - c * xm;
        let sse = xs.iter().zip(&ys).map(|(x, y)| (y - a - c * x).powi(2)).sum();
        Some((c, a, sse))
    };
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 1..=4000 {
        let alpha = i as f64 * 0.0005;
        if let Some((c, a, sse)) = line(alpha) {
            if best.is_none_or(|b| sse < b.3) {
                best = Some((alpha, c, a, sse));
            }
        }
    }
    let (alpha, c, intercept, sse) = best.ok_or_else(|| Error::InsufficientData("all points share one N/(L+1)".into()))?;
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(CollapseFit { alpha, c, intercept, r2, n_points: pts.len() })
}

/// Single-shot fidelity variance on the `sites x depths` grid.
pub fn fidelity_variance_grid(cfg: &ExperimentConfig, default_sites: &[usize], default_depths: &[usize]) -> Result<Vec<VariancePoint>> {
    let sites = or_default(&cfg.sweep.sites, default_sites);
    let depths = or_default(&cfg.sweep.depths, default_depths);
    let mut out = Vec::new();
    let mut point = 0u64;
    for &n in &sites {
        let state = prepare_state(&cfg.state, n)?;
        let target = target_state(&cfg.state, n)?;
        for &depth in &depths {
            let seed = point_seed(cfg.seed, point, 0);
            point += 1;
            let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), seed)?;
            let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
            let v = overlap_values(&e, &state, &target, &prior.recon, cfg.samples)?;
            let p = VariancePoint { n, depth, seed, mean: mean(&v), var: variance(&v), var_stderr: variance_stderr(&v) };
            log::info!("N = {n}, L = {depth}: Var F = {:.3} +- {:.3}", p.var, p.var_stderr);
            out.push(p);
        }
    }
    Ok(out)
}

fn variance_table(points: &[VariancePoint], fit: Option<&CollapseFit>) -> Result<Table> {
    let mut t = Table::new(&["N", "L", "seed", "mean", "var", "var_stderr", "n_eff", "complexity"]);
    for p in points {
        let n_eff = fit.map_or(f64::NAN, |f| p.n as f64 / ((p.depth + 1) as f64).powf(f.alpha));
        t.push(vec![
            cell(p.n),
            cell(p.depth),
            cell(p.seed),
            cell(p.mean),
            cell(p.var),
            cell(p.var_stderr),
            cell(n_eff),
            cell((p.depth + 1) as f64 * p.var),
        ])?;
    }
    Ok(t)
}

/// Depth minimizing `(L+1) Var F` for each `N`, and whether it is interior
/// to the swept depths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexityMinimum {
    pub n: usize,
    pub depth: usize,
    pub complexity: f64,
    pub interior: bool,
}

pub fn complexity_minima(points: &[VariancePoint]) -> Vec<ComplexityMinimum> {
    let mut sites: Vec<usize> = points.iter().map(|p| p.n).collect();
    sites.dedup();
    sites
        .into_iter()
        .filter_map(|n| {
            let row: Vec<&VariancePoint> = points.iter().filter(|p| p.n == n).collect();
            let c = |p: &VariancePoint| (p.depth + 1) as f64 * p.var;
            let best = row.iter().copied().min_by(|a, b| c(a).total_cmp(&c(b)))?;
            let lo = row.iter().map(|p| p.depth).min()?;
            let hi = row.iter().map(|p| p.depth).max()?;
            Some(ComplexityMinimum { n, depth: best.depth, complexity: c(best), interior: best.depth > lo && best.depth < hi })
        })
        .collect()
}

// ---------------------------------------------------------------- pauli

#[derive(Clone, Debug, Serialize)]
pub struct PauliPoint {
    pub depth: usize,
    pub observable: String,
    pub weight: usize,
    pub seed: u64,
    pub report: EstimateReport,
    pub var: f64,
    pub second_moment: f64,
    pub second_moment_stderr: f64,
    pub shadow_norm: f64,
    pub exact: f64,
}

fn observables(cfg: &ExperimentConfig, n: usize) -> Result<Vec<PauliString>> {
    if cfg.observables.is_empty() {
        let ks = or_default(&cfg.sweep.ks, &(1..=n).collect::<Vec<_>>());
        ks.iter().map(|&k| PauliString::z_string(k, n)).collect()
    } else {
        cfg.observables.iter().map(|s| s.parse()).collect()
    }
}

/// Pauli estimates with their empirical second moments against the
/// shadow-norm prediction, per depth.
pub fn pauli_variance_vs_depth(cfg: &ExperimentConfig) -> Result<Vec<PauliPoint>> {
    let n = cfg.n_sites;
    let state = prepare_state(&cfg.state, n)?;
    let rho = state.density_matrix()?;
    let obs = observables(cfg, n)?;
    let mut out = Vec::new();
    for (i, &depth) in or_default(&cfg.sweep.depths, &[0, 1, 2, 3]).iter().enumerate() {
        let seed = point_seed(cfg.seed, i as u64, 0);
        let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), seed)?;
        let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
        let ests: Vec<PauliEstimator> = obs.iter().map(|p| PauliEstimator::new(p, &prior.recon)).collect::<Result<_>>()?;
        let shots = map_shot_range(&e, &state, 0..cfg.samples as u64, |s| ests.iter().map(|est| est.single_shot(s)).collect::<Result<Vec<f64>>>())?;
        for (j, p) in obs.iter().enumerate() {
            let v: Vec<f64> = shots.iter().map(|s| s[j]).collect();
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            let report = estimate_pauli(&v, cfg.uncertainty, &mut stream_rng(child_seed(seed, j as u64), Stream::Bootstrap, 0))?;
            let wo = pauli_operator_ef(p, 2)?;
            out.push(PauliPoint {
                depth,
                observable: p.to_string(),
                weight: p.weight(),
                seed,
                var: variance(&v),
                second_moment: mean(&sq),
                second_moment_stderr: (variance(&sq) / sq.len() as f64).sqrt(),
                shadow_norm: shadow_norm(&prior.recon, &prior.ef.w, &wo)?,
                exact: rho.expectation(&p.to_matrix()).re,
                report,
            });
        }
    }
    Ok(out)
}

fn pauli_table(points: &[PauliPoint]) -> Result<Table> {
    let mut t = Table::new(&[
        "L",
        "observable",
        "k",
        "seed",
        "value",
        "stderr",
        "ci_lo",
        "ci_hi",
        "exact",
        "var",
        "second_moment",
        "second_moment_stderr",
        "shadow_norm",
        "complexity",
    ]);
    for p in points {
        let mut row = vec![cell(p.depth), p.observable.clone(), cell(p.weight), cell(p.seed)];
        row.extend(report_cells(&p.report));
        row.extend([
            cell(p.exact),
            cell(p.var),
            cell(p.second_moment),
            cell(p.second_moment_stderr),
            cell(p.shadow_norm),
            cell((p.depth + 1) as f64 * p.var),
        ]);
        t.push(row)?;
    }
    Ok(t)
}

// ---------------------------------------------------------------- sandwich

#[derive(Clone, Debug, Serialize)]
pub struct SandwichPoint {
    pub n: usize,
    pub protocol: String,
    pub seed: u64,
    pub report: EstimateReport,
    pub var: f64,
}

/// Fidelity with randomized Pauli measurements and with the CNOT and
/// Rydberg sandwiches.
pub fn sandwich_fidelity(cfg: &ExperimentConfig) -> Result<Vec<SandwichPoint>> {
    let mut out = Vec::new();
    let mut point = 0u64;
    for n in cfg.sweep_sites() {
        let state = prepare_state(&cfg.state, n)?;
        let target = target_state(&cfg.state, n)?;
        let protocols = [
            ("pauli", EnsembleSpec::random_pauli(n)),
            ("cnot", EnsembleSpec::cnot_sandwich(n)),
            ("rydberg", EnsembleSpec::rydberg_sandwich(n, cfg.rydberg, cfg.rydberg_time)),
        ];
        for (name, spec) in protocols {
            let seed = point_seed(cfg.seed, point, 0);
            point += 1;
            let e = Ensemble::new(spec, seed)?;
            let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
            let v = overlap_values(&e, &state, &target, &prior.recon, cfg.samples)?;
            let report = fidelity_report(&v, cfg.fidelity_mode, cfg.uncertainty, seed)?;
            log::info!("N = {n} {name}: F = {:.4}, Var = {:.3}", report.value, variance(&v));
            out.push(SandwichPoint { n, protocol: name.into(), seed, var: variance(&v), report });
        }
    }
    Ok(out)
}

fn sandwich_table(points: &[SandwichPoint]) -> Result<Table> {
    let mut t = Table::new(&["N", "protocol", "seed", "F", "stderr", "ci_lo", "ci_hi", "single_shot_var", "var_ratio_to_pauli"]);
    for p in points {
        let base = points.iter().find(|q| q.n == p.n && q.protocol == "pauli").map_or(f64::NAN, |q| q.var);
        let mut row = vec![cell(p.n), p.protocol.clone(), cell(p.seed)];
        row.extend(report_cells(&p.report));
        row.extend([cell(p.var), cell(p.var / base)]);
        t.push(row)?;
    }
    Ok(t)
}

// ---------------------------------------------------------------- frame gap

/// `spec` with its evolution parameter set to `t`: the GUE2/Rydberg time,
/// the DQIM step count or the brickwall depth.
pub fn at_time(spec: &EnsembleSpec, t: f64) -> Result<EnsembleSpec> {
    let mut s = spec.clone();
    let whole = |t: f64| -> Result<usize> {
        if (t - t.round()).abs() > 1e-9 || t < 0.0 {
            return param(format!("{t} is not a whole number of steps"));
        }
        Ok(t.round() as usize)
    };
    match &mut s.kind {
        EnsembleKind::Gue2 { time, .. } | EnsembleKind::Rydberg { time, .. } => *time = t,
        EnsembleKind::Sandwich { fixed: FixedPart::Rydberg { time, .. } } => *time = t,
        EnsembleKind::Dqim { steps, .. } => *steps = whole(t)?,
        EnsembleKind::Brickwall { depth, .. } => *depth = whole(t)?,
        _ => return param("this ensemble has no time parameter"),
    }
    s.validate()?;
    Ok(s)
}

fn with_sites_and_coupling(spec: &EnsembleSpec, n: usize, j: Option<f64>) -> Result<EnsembleSpec> {
    let mut s = spec.clone();
    s.n_sites = n;
    if let (Some(j), EnsembleKind::Dqim { coupling, .. }) = (j, &mut s.kind) {
        *coupling = j;
    }
    s.validate()?;
    Ok(s)
}

fn base_ensemble(cfg: &ExperimentConfig, default: EnsembleKind) -> EnsembleSpec {
    cfg.ensemble.clone().unwrap_or(EnsembleSpec { n_sites: cfg.n_sites, kind: default })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapCurve {
    pub n: usize,
    pub coupling: Option<f64>,
    pub seed: u64,
    pub points: Vec<(f64, FrameGap)>,
    pub fit: Option<ScramblingFit>,
}

/// `Delta(T)` curves for every `(N, J)` of the sweep, each with its
/// scrambling-time fit over the heuristic early window.
pub fn frame_gap_vs_t(cfg: &ExperimentConfig) -> Result<Vec<GapCurve>> {
    let base = base_ensemble(cfg, EnsembleKind::Gue2 { time: 0.0, periodic: false });
    let default_times: Vec<f64> = match base.kind {
        EnsembleKind::Dqim { .. } | EnsembleKind::Brickwall { .. } => (0..5).map(f64::from).collect(),
        _ => (0..6).map(|i| 0.2 * i as f64).collect(),
    };
    let times = or_default(&cfg.sweep.times, &default_times);
    let couplings: Vec<Option<f64>> = if cfg.sweep.couplings.is_empty() { vec![None] } else { cfg.sweep.couplings.iter().map(|&j| Some(j)).collect() };
    let mut out = Vec::new();
    let mut curve = 0u64;
    for n in cfg.sweep_sites() {
        for &j in &couplings {
            let seed = point_seed(cfg.seed, curve, 0);
            curve += 1;
            let spec = with_sites_and_coupling(&base, n, j)?;
            let mut points = Vec::new();
            for (ti, &t) in times.iter().enumerate() {
                let e = Ensemble::new(at_time(&spec, t)?, child_seed(seed, ti as u64))?;
                let g = frame_gap(&e, cfg.frame_pairs, cfg.ef_samples, cfg.pair_mode, cfg.ef_mode)?;
                log::info!("N = {n}, J = {j:?}, T = {t}: gap {:.3e} +- {:.1e}", g.delta, g.stderr);
                points.push((t, g));
            }
            let gp: Vec<GapPoint> = points.iter().map(|(t, g)| GapPoint { time: *t, delta: g.delta, stderr: g.stderr }).collect();
            let fit = auto_window(&gp).map_err(|e| log::warn!("N = {n}, J = {j:?}: no scrambling-time fit ({e})")).ok();
            out.push(GapCurve { n, coupling: j, seed, points, fit });
        }
    }
    Ok(out)
}

fn gap_table(curves: &[GapCurve], n_pairs: usize) -> Result<Table> {
    let mut t = Table::new(&["N", "J", "T", "seed", "delta", "stderr", "f2", "f2_stderr", "f_ls", "f_ls_stderr", "n_pairs"]);
    for c in curves {
        for (time, g) in &c.points {
            t.push(vec![
                cell(c.n),
                c.coupling.map_or(String::new(), cell),
                cell(time),
                cell(c.seed),
                cell(g.delta),
                cell(g.stderr),
                cell(g.frame_potential.value),
                cell(g.frame_potential.stderr),
                cell(g.ls_bound.value),
                cell(g.ls_bound.stderr),
                cell(n_pairs),
            ])?;
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------- approximate ensembles

/// Full reconstruction at one evolution time.
#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionPoint {
    pub time: f64,
    pub seed: u64,
    pub fidelity: EstimateReport,
    /// `<Psi|P(rho)|Psi>` after projecting onto the top eigenvector.
    pub fidelity_pure: f64,
    /// The same after projection onto density matrices.
    pub fidelity_simplex: f64,
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
}

const SHOT_CHUNK: u64 = 256;

/// `rho = mean M^-1[sigma]` over shots `0..m`, and the single-shot overlaps
/// with `target`. Shots are summed in fixed chunks so that results do not
/// depend on the worker count.
pub fn reconstruct_state(
    ensemble: &Ensemble,
    state: &PreparedState,
    target: &PureState,
    r: &ReconVector,
    m: usize,
) -> Result<(DensityMatrix, Vec<f64>)> {
    let n = ensemble.n_sites();
    let est = OverlapEstimator::new(target, r)?;
    let mut sum = vec![0.0; 1 << (2 * n)];
    let mut overlaps = Vec::with_capacity(m);
    let mut start = 0u64;
    while start < m as u64 {
        let end = (start + SHOT_CHUNK).min(m as u64);
        let chunk = map_shot_range(ensemble, state, start..end, |s| Ok((est.single_shot(s)?, s.to_state()?.pauli_spectrum())))?;
        for (o, spec) in chunk {
            overlaps.push(o);
            for (a, v) in sum.iter_mut().zip(spec) {
                *a += v;
            }
        }
        start = end;
    }
    for a in &mut sum {
        *a /= m as f64;
    }
    Ok((apply_reconstruction_spectrum(&sum, r)?, overlaps))
}

/// Reconstruction with an approximately scrambling ensemble at each time.
pub fn approximate_fidelity_vs_t(cfg: &ExperimentConfig) -> Result<Vec<ReconstructionPoint>> {
    let n = cfg.n_sites;
    let base = base_ensemble(
        cfg,
        EnsembleKind::Dqim { coupling: 1.0, field: std::f64::consts::FRAC_PI_4, steps: 1, instance: Some(derive_seed(cfg.seed, Stream::Instance, 0)) },
    );
    let base = with_sites_and_coupling(&base, n, None)?;
    let state = prepare_state(&cfg.state, n)?;
    let target = target_state(&cfg.state, n)?;
    let mut out = Vec::new();
    for (i, &t) in or_default(&cfg.sweep.times, &[1.0, 2.0, 4.0, 7.0]).iter().enumerate() {
        let seed = point_seed(cfg.seed, i as u64, 0);
        let e = Ensemble::new(at_time(&base, t)?, seed)?;
        let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
        let (rho, overlaps) = reconstruct_state(&e, &state, &target, &prior.recon, cfg.samples)?;
        let fidelity = fidelity_report(&overlaps, cfg.fidelity_mode, cfg.uncertainty, seed)?;
        let pure = project_physical(&rho, Projection::Pure)?.expectation_pure(&target);
        let simplex = project_physical(&rho, Projection::Simplex)?.expectation_pure(&target);
        let (pure, simplex) = if cfg.fidelity_mode == FidelityMode::SqrtMean { (pure.sqrt(), simplex.sqrt()) } else { (pure, simplex) };
        let mut eigenvalues = rho.eigenvalues()?;
        eigenvalues.sort_by(|a, b| a.total_cmp(b));
        log::info!("T = {t}: F = {:.4} +- {:.4}, projected {pure:.4}, min eigenvalue {:.4}", fidelity.value, fidelity.stderr, eigenvalues[0]);
        out.push(ReconstructionPoint { time: t, seed, fidelity, fidelity_pure: pure, fidelity_simplex: simplex, trace: rho.trace(), eigenvalues });
    }
    Ok(out)
}

fn reconstruction_table(points: &[ReconstructionPoint]) -> Result<Table> {
    let mut t = Table::new(&["T", "seed", "F", "stderr", "ci_lo", "ci_hi", "F_pure", "F_simplex", "min_eigenvalue", "trace"]);
    for p in points {
        let mut row = vec![cell(p.time), cell(p.seed)];
        row.extend(report_cells(&p.fidelity));
        row.extend([cell(p.fidelity_pure), cell(p.fidelity_simplex), cell(p.eigenvalues[0]), cell(p.trace)]);
        t.push(row)?;
    }
    Ok(t)
}

fn spectrum_table(points: &[ReconstructionPoint]) -> Result<Table> {
    let mut t = Table::new(&["T", "seed", "index", "eigenvalue"]);
    for p in points {
        for (k, v) in p.eigenvalues.iter().enumerate() {
            t.push(vec![cell(p.time), cell(p.seed), cell(k), cell(v)])?;
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------- z error

#[derive(Clone, Debug, Serialize)]
pub struct ZErrorPoint {
    pub p: f64,
    pub seed: u64,
    pub report: EstimateReport,
    pub exact: f64,
}

/// Fidelity of `(1-p) GHZ+ + p GHZ-` with the GHZ state, at the first
/// configured depth (default 2).
pub fn z_error_fidelity(cfg: &ExperimentConfig) -> Result<Vec<ZErrorPoint>> {
    let n = cfg.n_sites;
    let depth = cfg.sweep.depths.first().copied().unwrap_or(2);
    let target = PureState::ghz(n)?;
    let mut out = Vec::new();
    for (i, &p) in or_default(&cfg.sweep.ps, &[0.0, 0.1, 0.2, 0.3]).iter().enumerate() {
        let seed = point_seed(cfg.seed, i as u64, 0);
        let state = prepare_state(&StateSpec::ZErrorGhz { p }, n)?;
        let e = Ensemble::new(EnsembleSpec::brickwall(n, depth), seed)?;
        let prior = fit_prior(&e, cfg.ef_samples, cfg.ef_mode)?;
        let v = overlap_values(&e, &state, &target, &prior.recon, cfg.samples)?;
        let report = fidelity_report(&v, cfg.fidelity_mode, cfg.uncertainty, seed)?;
        let exact = state.density_matrix()?.expectation_pure(&target);
        let exact = if cfg.fidelity_mode == FidelityMode::SqrtMean { exact.sqrt() } else { exact };
        out.push(ZErrorPoint { p, seed, report, exact });
    }
    Ok(out)
}

fn z_error_table(points: &[ZErrorPoint]) -> Result<Table> {
    let mut t = Table::new(&["p", "seed", "F", "stderr", "ci_lo", "ci_hi", "exact"]);
    for p in points {
        let mut row = vec![cell(p.p), cell(p.seed)];
        row.extend(report_cells(&p.report));
        row.push(cell(p.exact));
        t.push(row)?;
    }
    Ok(t)
}

// ---------------------------------------------------------------- driver

/// Runs `cfg.experiment` and returns its table, with `config_hash` appended
/// to every row.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (table, summary) = match cfg.experiment {
        ExperimentId::GhzFidelityVsDepth => {
            let p = ghz_fidelity_vs_depth(cfg)?;
            (fidelity_table(&p)?, json!({ "points": p }))
        }
        ExperimentId::BiasDemo => {
            let p = bias_demo(cfg)?;
            (bias_table(&p)?, json!({ "points": p }))
        }
        ExperimentId::VarianceScaling => {
            let p = fidelity_variance_grid(cfg, &[4, 6, 8], &[0, 1, 2, 3, 4])?;
            let fit = fit_collapse(&p).ok();
            (variance_table(&p, fit.as_ref())?, json!({ "collapse_fit": fit }))
        }
        ExperimentId::PauliVarianceVsDepth => {
            let p = pauli_variance_vs_depth(cfg)?;
            (pauli_table(&p)?, json!({ "points": p }))
        }
        ExperimentId::TomographyComplexity => {
            let p = fidelity_variance_grid(cfg, &[6, 8, 10], &[0, 1, 2, 3, 4, 5, 6])?;
            let fit = fit_collapse(&p).ok();
            (variance_table(&p, fit.as_ref())?, json!({ "minima": complexity_minima(&p), "collapse_fit": fit }))
        }
        ExperimentId::SandwichFidelity => {
            let p = sandwich_fidelity(cfg)?;
            (sandwich_table(&p)?, json!({ "points": p }))
        }
        ExperimentId::FrameGapVsT => {
            let c = frame_gap_vs_t(cfg)?;
            let fits: Vec<Value> = c
                .iter()
                .map(|c| json!({ "N": c.n, "J": c.coupling, "T_th": c.fit.as_ref().map(|f| f.t_th), "fit": c.fit }))
                .collect();
            (gap_table(&c, cfg.frame_pairs)?, json!({ "fits": fits }))
        }
        ExperimentId::ApproximateFidelityVsT => {
            let p = approximate_fidelity_vs_t(cfg)?;
            (reconstruction_table(&p)?, json!({ "points": p }))
        }
        ExperimentId::ZErrorFidelity => {
            let p = z_error_fidelity(cfg)?;
            (z_error_table(&p)?, json!({ "points": p }))
        }
        ExperimentId::SpectrumAndProjection => {
            let p = approximate_fidelity_vs_t(cfg)?;
            let fids: Vec<Value> = p
                .iter()
                .map(|p| json!({ "T": p.time, "F": p.fidelity.value, "F_pure": p.fidelity_pure, "F_simplex": p.fidelity_simplex }))
                .collect();
            (spectrum_table(&p)?, json!({ "fidelities": fids }))
        }
    };
    let hash = cfg.hash();
    let mut table = table;
    table.columns.push("config_hash".into());
    for row in &mut table.rows {
        row.push(hash.clone());
    }
    let summary = json!({
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_hash": hash,
        "config": cfg,
        "results": summary,
    });
    Ok(ExperimentResult { experiment: cfg.experiment, table, summary })
}

/// Runs the experiment and writes `<out_dir>/<id>.csv` and `<id>.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let res = run(cfg)?;
    let stem = cfg.out_dir.join(cfg.experiment.name());
    write_atomic(&stem.with_extension("csv"), |w| res.table.write_csv(w))?;
    write_json_atomic(&stem.with_extension("json"), &res.summary)?;
    Ok(res)
}
