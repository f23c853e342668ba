//! Frame potentials, the locally scrambled bound and the gap between them.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::circuit::{Ensemble, EnsembleSpec};
use crate::dense::state::PureState;
use crate::entanglement::{ef_samples, OutcomeMode};
use crate::error::{param, Error, Result};
use crate::lattice::LatticeVector;
use crate::region::check_dim;
use crate::rng::{child_seed, derive_seed, rng_from_seed, Stream};
use crate::scalar::Scalar;

/// How a pair of members contributes to the frame potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// One random outcome per member: `|<phi|phi'>|^{2k}`.
    Sample,
    /// All outcome pairs: `4^-N sum_{b,b'} |(U U'^dagger)_{b b'}|^{2k}`.
    Enumerate,
}

impl PairMode {
    pub fn default_for(n_sites: usize) -> Self {
        if n_sites <= 8 {
            Self::Enumerate
        } else {
            Self::Sample
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub stderr: f64,
}

fn mean_se(v: &[f64]) -> MeanEstimate {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    MeanEstimate { value: m, stderr: (var / n).sqrt() }
}

/// Frame potential `E (Tr sigma sigma')^k` of an arbitrary snapshot sampler,
/// from independent pairs. `sampler(seed)` must return a fresh snapshot.
pub fn frame_potential_of_sampler<F>(k: u32, n_pairs: usize, seed: u64, sampler: F) -> Result<MeanEstimate>
where
    F: Fn(u64) -> Result<PureState> + Sync,
{
    check_order(k, n_pairs)?;
    let vals: Vec<f64> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, Stream::FramePairs, i);
            let a = sampler(child_seed(s, 1))?;
            let b = sampler(child_seed(s, 2))?;
            Ok(a.inner(&b).norm_sqr().powi(k as i32))
        })
        .collect::<Result<_>>()?;
    Ok(mean_se(&vals))
}

fn check_order(k: u32, n_pairs: usize) -> Result<()> {
    if !(1..=2).contains(&k) {
        return param(format!("frame potential order {k} not in {{1, 2}}"));
    }
    if n_pairs < 2 {
        return param("at least two pairs are needed");
    }
    Ok(())
}

/// `F^(k)` of the snapshot ensemble with independent member pairs drawn from
/// the frame-pair stream of the master seed.
pub fn estimate_frame_potential(ensemble: &Ensemble, k: u32, n_pairs: usize, mode: PairMode) -> Result<MeanEstimate> {
    check_order(k, n_pairs)?;
    let n = ensemble.n_sites();
    let dim = 1usize << n;
    let master = ensemble.master_seed();
    let vals: Vec<f64> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(master, Stream::FramePairs, i);
            let u = ensemble.member(child_seed(s, 1))?;
            let v = ensemble.member(child_seed(s, 2))?;
            match mode {
                PairMode::Sample => {
                    let mut rng = rng_from_seed(child_seed(s, 3));
                    let a = u.snapshot_state(rng.random_range(0..dim as u64))?;
                    let b = v.snapshot_state(rng.random_range(0..dim as u64))?;
                    Ok(a.inner(&b).norm_sqr().powi(k as i32))
                }
                PairMode::Enumerate => {
                    let prod = u.unitary()? * v.unitary()?.adjoint();
                    let sum: f64 = prod.iter().map(|z| z.norm_sqr().powi(k as i32)).sum();
                    Ok(sum / (dim * dim) as f64)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(mean_se(&vals))
}

/// `F_LS = sum_{A,B} W_A Wg_{A,B} W_B`, in `O(N 2^N)`.
pub fn ls_frame_potential<T: Scalar>(w: &LatticeVector<T>, d: u32) -> Result<T> {
    check_dim(d)?;
    let dd = T::from_i64(d as i64);
    let norm = (dd * dd - T::one()).powi_exact(-(w.n_sites() as i32));
    Ok(norm * w.dot(&w.weighted_symdiff(d))?)
}

/// The same quadratic form as a double loop over regions.
pub fn ls_frame_potential_naive<T: Scalar>(w: &LatticeVector<T>, d: u32) -> Result<T> {
    check_dim(d)?;
    let n = w.n_sites();
    let mut acc = T::zero();
    for a in 0..w.len() {
        for b in 0..w.len() {
            acc += w[a] * crate::region::weingarten_unchecked::<T>((a ^ b) as u32, d, n) * w[b];
        }
    }
    Ok(acc)
}

/// `F_LS` of the ensemble mean EF, estimated without the `tr(Q Cov)/n` bias
/// of plugging in a noisy mean: the quadratic form is averaged over distinct
/// sample pairs. The error bar is the delta-method one.
pub fn ls_frame_potential_from_samples(samples: &[Vec<f64>], n_sites: usize, d: u32) -> Result<MeanEstimate> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InsufficientData("need at least two EF samples".into()));
    }
    let dim = 1usize << n_sites;
    let mut sum = vec![0.0; dim];
    for s in samples {
        for (a, v) in sum.iter_mut().zip(s) {
            *a += v;
        }
    }
    let total = LatticeVector::from_vec(sum, n_sites)?;
    let mut diag = 0.0;
    let mut grad_proj = Vec::with_capacity(m);
    let mean = total.map(|v| v / m as f64);
    let qmean = mean.weighted_symdiff(d);
    let dd = d as f64;
    let norm = (dd * dd - 1.0).powi(-(n_sites as i32));
    for s in samples {
        let v = LatticeVector::from_vec(s.clone(), n_sites)?;
        diag += ls_frame_potential(&v, d)?;
        grad_proj.push(2.0 * norm * v.dot(&qmean)?);
    }
    let full = ls_frame_potential(&total, d)?;
    let value = (full - diag) / (m * (m - 1)) as f64;
    let stderr = mean_se(&grad_proj).stderr;
    Ok(MeanEstimate { value, stderr })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGap {
    pub delta: f64,
    pub stderr: f64,
    pub frame_potential: MeanEstimate,
    pub ls_bound: MeanEstimate,
}

/// `Delta = F^(2) - F_LS`, the two terms from independent sample sets.
pub fn frame_gap(ensemble: &Ensemble, n_pairs: usize, ef_count: usize, pairs: PairMode, outcomes: OutcomeMode) -> Result<FrameGap> {
    let f = estimate_frame_potential(ensemble, 2, n_pairs, pairs)?;
    let samples = ef_samples(ensemble, ef_count, outcomes)?;
    let ls = ls_frame_potential_from_samples(&samples, ensemble.n_sites(), 2)?;
    Ok(FrameGap {
        delta: f.value - ls.value,
        stderr: f.stderr.hypot(ls.stderr),
        frame_potential: f,
        ls_bound: ls,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub time: f64,
    pub delta: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGapSeries {
    pub points: Vec<GapPoint>,
    pub ensemble: EnsembleSpec,
    pub n_pairs: usize,
}

impl FrameGapSeries {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "delta", "stderr", "n_pairs"])?;
        for p in &self.points {
            w.write_record([format!("{:?}", p.time), format!("{:?}", p.delta), format!("{:?}", p.stderr), self.n_pairs.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Gap at each time of a sweep; `at(t)` builds the ensemble for time `t`.
pub fn frame_gap_series(
    times: &[f64],
    at: impl Fn(f64) -> Result<Ensemble>,
    n_pairs: usize,
    ef_count: usize,
    pairs: PairMode,
    outcomes: OutcomeMode,
) -> Result<FrameGapSeries> {
    if times.is_empty() {
        return param("empty time sweep");
    }
    let mut points = Vec::with_capacity(times.len());
    let mut spec = None;
    for &t in times {
        let e = at(t)?;
        let g = frame_gap(&e, n_pairs, ef_count, pairs, outcomes)?;
        log::info!("T = {t}: gap {:.4e} +- {:.1e}", g.delta, g.stderr);
        points.push(GapPoint { time: t, delta: g.delta, stderr: g.stderr });
        spec.get_or_insert_with(|| e.spec().clone());
    }
    Ok(FrameGapSeries { points, ensemble: spec.expect("non-empty sweep"), n_pairs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScramblingFit {
    pub t_th: f64,
    pub t_th_stderr: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// True when the window was picked by [`auto_window`].
    pub heuristic: bool,
}

/// Least-squares line through `(T, ln Delta)` on the window, giving
/// `T_Th = -1/slope`. Points with `Delta <= 0` are dropped. The slope error
/// is the larger of the residual scatter and the propagated Monte Carlo
/// error of the points.
pub fn fit_scrambling_time(points: &[GapPoint], window: (f64, f64)) -> Result<ScramblingFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sig = Vec::new();
    for p in points.iter().filter(|p| p.time >= window.0 && p.time <= window.1) {
        if p.delta > 0.0 {
            xs.push(p.time);
            ys.push(p.delta.ln());
            sig.push(p.stderr / p.delta);
        } else {
            log::warn!("dropping T = {} with nonpositive gap {}", p.time, p.delta);
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} usable points in window {window:?}")));
    }
    let xm = xs.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all points at the same time".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let scatter = (sse / (n - 2) as f64 / sxx).sqrt();
    let propagated = xs.iter().zip(&sig).map(|(x, s)| ((x - xm) / sxx * s).powi(2)).sum::<f64>().sqrt();
    let slope_stderr = scatter.max(propagated);
    if slope >= 0.0 {
        return Err(Error::InsufficientData(format!("gap does not decay in window {window:?} (slope {slope})")));
    }
    Ok(ScramblingFit {
        t_th: -1.0 / slope,
        t_th_stderr: slope_stderr / (slope * slope),
        slope,
        slope_stderr,
        intercept,
        r2,
        window,
        n_points: n,
        heuristic: false,
    })
}

/// Heuristic early-time window: the longest time-ordered prefix of points
/// resolved above `3 sigma` (at least three) whose log-linear fit keeps
/// `R^2 > 0.9`. Points at the noise floor would otherwise bend the fit
/// towards the plateau.
pub fn auto_window(points: &[GapPoint]) -> Result<ScramblingFit> {
    let mut sorted: Vec<GapPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let resolved = sorted.iter().take_while(|p| p.delta > 3.0 * p.stderr).count();
    sorted.truncate(resolved);
    let mut best = None;
    for end in 3..=sorted.len() {
        let w = (sorted[0].time, sorted[end - 1].time);
        match fit_scrambling_time(&sorted[..end], w) {
            Ok(f) if f.r2 > 0.9 => best = Some(f),
            _ => break,
        }
    }
    let mut f = best.ok_or_else(|| Error::InsufficientData("no prefix with R^2 > 0.9".into()))?;
    f.heuristic = true;
    Ok(f)
}
