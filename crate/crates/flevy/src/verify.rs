//! Deterministic verification battery for the library's core identities and
//! statistical contracts.
//!
//! Each criterion is a seeded, self-contained experiment returning a
//! structured outcome; [`run_all`] drives the full battery and
//! [`write_bundle`] persists a report together with a hash manifest, so two
//! runs with the same configuration produce byte-identical manifests.
//! Replication loops fan out over a thread pool but always reduce in
//! replication order, so results do not depend on the number of threads.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criterion::{fv_criterion, stable_threshold, Verdict};
use crate::error::{Error, Result};
use crate::idbounds::{bound_c2, bound_c3, fd_tv_bound, mean_abs_bound};
use crate::levy::{sample_increments, IncrementGrid, JumpAtom, JumpFamily, LevyModel};
use crate::rng::{child_rng, derive_seed, tag};
use crate::special::gamma;
use crate::stats::{ks_two_sample, mean_stderr, ols_slope, sample_variance};
use crate::synth::{
    synthesize, synthesize_nd_by_decomposition, tail_variance, KernelKind, KernelSpec,
    WeightMatrix,
};
use crate::variation::{dyadic_tv, expected_tv, nd_derivative_from_path, tv_profile, y0_from_path};

/// The finite-activity reference driver: unit jumps of either sign at rate
/// 1/2 each, mean zero.
fn standard_cpp() -> LevyModel {
    LevyModel::new(
        0.0,
        0.0,
        JumpFamily::CompoundPoisson {
            atoms: vec![
                JumpAtom { size: 1.0, rate: 0.5 },
                JumpAtom { size: -1.0, rate: 0.5 },
            ],
        },
        true,
    )
    .expect("valid reference driver")
}

/// Symmetric truncated-stable driver with unit intensity per side.
fn truncated_stable(alpha: f64) -> LevyModel {
    LevyModel::new(
        0.0,
        0.0,
        JumpFamily::TruncatedStable { alpha, c: 1.0, symmetric: true },
        true,
    )
    .expect("valid driver")
}

fn default_seed() -> u64 {
    0x464c4556
}
fn default_model() -> LevyModel {
    standard_cpp()
}
fn default_d() -> f64 {
    0.25
}
fn default_decomposition_paths() -> usize {
    100
}
fn default_lattice_side() -> usize {
    20
}
fn default_tv_paths() -> usize {
    1000
}
fn default_y0_draws() -> usize {
    10_000
}
fn default_dichotomy_paths() -> usize {
    200
}
fn default_exponent_paths() -> usize {
    20
}
fn default_scaling_reps() -> usize {
    10_000
}
fn default_pairing_paths() -> usize {
    8000
}
fn default_ks_paths() -> usize {
    2000
}
fn default_mc_draws() -> usize {
    10_000
}
fn default_tv_mc_paths() -> usize {
    100
}

/// Scales and seed of the verification battery.  The defaults are the
/// scales the acceptance checks are specified at; smaller values still give
/// valid (if wider-tolerance) statistical checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Root seed every experiment derives its replication seeds from.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Driver for the expected-TV identity check.  The remaining criteria
    /// pin their own drivers; a driver failing the finite-variation test
    /// makes that check assert the expected infinite verdict instead.
    #[serde(default = "default_model")]
    pub model: LevyModel,
    /// Smoothness index for the expected-TV identity check.
    #[serde(default = "default_d")]
    pub d: f64,
    /// Paths for the exact kernel-decomposition identities.
    #[serde(default = "default_decomposition_paths")]
    pub decomposition_paths: usize,
    /// Side length of the (alpha, d) verdict lattice.
    #[serde(default = "default_lattice_side")]
    pub lattice_side: usize,
    /// Paths for the Monte Carlo total-variation side of the identity.
    #[serde(default = "default_tv_paths")]
    pub tv_paths: usize,
    /// Draws for the derivative side of the identity.
    #[serde(default = "default_y0_draws")]
    pub y0_draws: usize,
    /// Paths for the finite-activity TV-convergence count.
    #[serde(default = "default_dichotomy_paths")]
    pub dichotomy_paths: usize,
    /// Paths per smoothness index for the Gaussian growth-exponent fit.
    #[serde(default = "default_exponent_paths")]
    pub exponent_paths: usize,
    /// Replications per driver for the variance-scaling slope.
    #[serde(default = "default_scaling_reps")]
    pub scaling_reps: usize,
    /// Paths for the paired small-time derivative comparison.
    #[serde(default = "default_pairing_paths")]
    pub pairing_paths: usize,
    /// Paths per sample for the two-sample increment test.
    #[serde(default = "default_ks_paths")]
    pub ks_paths: usize,
    /// Draws for the mean-absolute-increment bound check.
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    /// Paths for the past-component TV bound check.
    #[serde(default = "default_tv_mc_paths")]
    pub tv_mc_paths: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: default_seed(),
            model: default_model(),
            d: default_d(),
            decomposition_paths: default_decomposition_paths(),
            lattice_side: default_lattice_side(),
            tv_paths: default_tv_paths(),
            y0_draws: default_y0_draws(),
            dichotomy_paths: default_dichotomy_paths(),
            exponent_paths: default_exponent_paths(),
            scaling_reps: default_scaling_reps(),
            pairing_paths: default_pairing_paths(),
            ks_paths: default_ks_paths(),
            mc_draws: default_mc_draws(),
            tv_mc_paths: default_tv_mc_paths(),
        }
    }
}

impl VerifyConfig {
    /// A cheap variant with the same seed and drivers, used by the
    /// reproducibility check to double-run the battery end to end.
    pub fn reduced(&self) -> VerifyConfig {
        VerifyConfig {
            seed: self.seed,
            model: self.model.clone(),
            d: self.d,
            decomposition_paths: 8,
            lattice_side: 6,
            tv_paths: 48,
            y0_draws: 400,
            dichotomy_paths: 16,
            exponent_paths: 4,
            scaling_reps: 400,
            pairing_paths: 64,
            ks_paths: 128,
            mc_draws: 512,
            tv_mc_paths: 16,
        }
    }
}

/// Outcome of one verification criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionOutcome {
    /// Criterion number, 1-based.
    pub index: usize,
    /// Short kebab-case name.
    pub name: String,
    /// Whether the check held.
    pub pass: bool,
    /// Deterministic one-line summary (estimates, tolerances, counts).
    pub details: String,
    /// Wall-clock runtime.  Excluded from serialized reports so repeated
    /// runs produce byte-identical bytes; persisted separately.
    #[serde(skip)]
    pub seconds: f64,
}

/// Full battery result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub outcomes: Vec<CriterionOutcome>,
    pub all_pass: bool,
}

/// Run one criterion (1 through 9).
pub fn run_criterion(index: usize, cfg: &VerifyConfig) -> Result<CriterionOutcome> {
    let (name, run): (&str, fn(&VerifyConfig) -> Result<(bool, String)>) = match index {
        1 => ("exact-decomposition", c1_exact_decomposition),
        2 => ("variation-phase-boundary", c2_phase_boundary),
        3 => ("expected-tv-identity", c3_expected_tv),
        4 => ("tv-dichotomy", c4_tv_dichotomy),
        5 => ("second-order-scaling", c5_second_order),
        6 => ("derivative-convergence", c6_derivative_convergence),
        7 => ("bound-dominance", c7_bound_dominance),
        8 => ("increment-stationarity", c8_stationarity),
        9 => ("reproducibility", c9_reproducibility),
        _ => {
            return Err(Error::invalid(format!(
                "criterion index must lie in 1..=9, got {index}"
            )))
        }
    };
    let start = Instant::now();
    let (pass, details) = run(cfg)?;
    Ok(CriterionOutcome {
        index,
        name: name.to_string(),
        pass,
        details,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run criteria 1 through 9.
pub fn run_all(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let outcomes: Vec<CriterionOutcome> =
        (1..=9).map(|i| run_criterion(i, cfg)).collect::<Result<_>>()?;
    let all_pass = outcomes.iter().all(|o| o.pass);
    Ok(VerifyReport { config: cfg.clone(), outcomes, all_pass })
}

/// Dyadic nodes `a + (b-a) i 2^-depth`, `i = 0..=2^depth`.
fn dyadic_times(a: f64, b: f64, depth: u32) -> Vec<f64> {
    let n = 1usize << depth;
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

// ---------------------------------------------------------------------------
// Criterion 1: the cell-exact kernel decompositions.
// ---------------------------------------------------------------------------

fn c1_exact_decomposition(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let model = standard_cpp();
    let d = 0.25;
    let h = 1.0 / 512.0;
    let grid = IncrementGrid::new(-4.0, 1.0, h)?;
    let out: Vec<f64> = (0..=512).map(|i| i as f64 * h).collect();
    let na = KernelSpec::new(KernelKind::NonAnticipative, d)?;
    let tail = KernelSpec::new(KernelKind::TailPart, d)?;
    let rl = KernelSpec::new(KernelKind::RiemannLiouville, d)?;
    let wb = KernelSpec::new(KernelKind::WellBalanced, d)?;
    let worst: Vec<(f64, f64)> = (0..cfg.decomposition_paths)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let seed = derive_seed(cfg.seed, &[1, i as u64]);
            let path = sample_increments(&model, &grid, seed);
            let m = synthesize(&path, &na, &out)?;
            let f = synthesize(&path, &tail, &out)?;
            let r = synthesize(&path, &rl, &out)?;
            let n = synthesize(&path, &wb, &out)?;
            let n2 = synthesize_nd_by_decomposition(&path, d, &out)?;
            let scale_m = m.values.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
            let scale_n = n.values.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
            let mut e_na = 0.0f64;
            let mut e_wb = 0.0f64;
            for j in 0..out.len() {
                e_na = e_na.max((m.values[j] - (f.values[j] + r.values[j])).abs() / scale_m);
                e_wb = e_wb.max((n.values[j] - n2.values[j]).abs() / scale_n);
            }
            Ok((e_na, e_wb))
        })
        .collect::<Result<_>>()?;
    let max_na = worst.iter().fold(0.0f64, |a, w| a.max(w.0));
    let max_wb = worst.iter().fold(0.0f64, |a, w| a.max(w.1));
    let pass = max_na <= 1e-10 && max_wb <= 1e-10;
    Ok((
        pass,
        format!(
            "max rel |M - (F + I)| = {max_na:.3e}, max rel |N - (M1 + M2(-.))| = {max_wb:.3e} \
             over {} paths (tol 1e-10)",
            cfg.decomposition_paths
        ),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2: verdict phase boundary on the (alpha, d) lattice.
// ---------------------------------------------------------------------------

fn c2_phase_boundary(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let side = cfg.lattice_side.max(2);
    let mut total = 0usize;
    let mut agree = 0usize;
    for i in 0..side {
        let alpha = 0.1 + 1.8 * i as f64 / (side - 1) as f64;
        let model = truncated_stable(alpha);
        for j in 0..side {
            let d = 0.03 + 0.44 * j as f64 / (side - 1) as f64;
            let want = if alpha < stable_threshold(d)? {
                Verdict::FiniteVariation
            } else {
                Verdict::InfiniteVariation
            };
            total += 1;
            if fv_criterion(&model, d)?.verdict == want {
                agree += 1;
            }
        }
    }
    // Exactly-critical pairs sit on the boundary and must classify as
    // infinite variation.
    for &d in &[0.25, 0.4] {
        let alpha = stable_threshold(d)?;
        total += 1;
        if fv_criterion(&truncated_stable(alpha), d)?.verdict == Verdict::InfiniteVariation {
            agree += 1;
        }
    }
    Ok((
        agree == total,
        format!("verdict agreement {agree}/{total} on the (alpha, d) lattice incl. 2 boundary pairs"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3: expected total variation equals the derivative-mean formula.
// ---------------------------------------------------------------------------

fn c3_expected_tv(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let model = &cfg.model;
    let d = cfg.d;
    let report = fv_criterion(model, d)?;
    let etv = expected_tv(model, d, 0.0, 1.0, cfg.y0_draws, derive_seed(cfg.seed, &[3, 1]))?;
    if report.verdict != Verdict::FiniteVariation {
        let pass = etv.verdict == report.verdict && etv.value.is_infinite();
        return Ok((
            pass,
            "driver fails the finite-variation test; the expected-TV estimate reports the \
             infinite verdict as expected"
                .to_string(),
        ));
    }

    let h = 1.0 / 4096.0;
    let grid = IncrementGrid::new(-64.0, 1.0, h)?;
    let out = dyadic_times(0.0, 1.0, 12);
    let spec = KernelSpec::new(KernelKind::NonAnticipative, d)?;
    // Far history beyond the simulated radius acts on [0, 1] as an
    // asymptotically linear drift; patch it in with the same Gaussian
    // surrogate (and seed derivation) the derivative sampler uses, so both
    // sides of the identity describe the same process.
    let tail_sd = tail_variance(model.variance_rate(), d, 64.0).sqrt();
    let g = gamma(d);
    let tvs: Vec<f64> = (0..cfg.tv_paths)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let seed = derive_seed(cfg.seed, &[3, 0, i as u64]);
            let path = sample_increments(model, &grid, seed);
            let mut fp = synthesize(&path, &spec, &out)?;
            if tail_sd > 0.0 {
                let w: f64 = StandardNormal.sample(&mut child_rng(seed, &[tag::TAIL_SURROGATE]));
                let slope = tail_sd * w / g;
                for (v, t) in fp.values.iter_mut().zip(&fp.times) {
                    *v += slope * t;
                }
            }
            let prof = tv_profile(&fp, 0.0, 1.0, 12)?;
            Ok(*prof.tv.last().expect("profile has depths"))
        })
        .collect::<Result<_>>()?;
    let (tv_mean, tv_se) = mean_stderr(&tvs);
    let comb = (tv_se * tv_se + etv.stderr * etv.stderr).sqrt();
    let gap = (tv_mean - etv.value).abs();
    let pass = gap <= 3.0 * comb;
    Ok((
        pass,
        format!(
            "E TV {tv_mean:.4} +- {tv_se:.4} ({} paths) vs derivative side {:.4} +- {:.4} \
             ({} draws); |gap| = {gap:.4} <= 3 x {comb:.4}",
            cfg.tv_paths, etv.value, etv.stderr, etv.n_mc
        ),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 4: TV dichotomy between finite-activity and Gaussian drivers.
// ---------------------------------------------------------------------------

fn c4_tv_dichotomy(cfg: &VerifyConfig) -> Result<(bool, String)> {
    // Finite-activity driver: the dyadic TV profile must stabilize.
    let model = standard_cpp();
    let grid = IncrementGrid::new(-16.0, 1.0, 1.0 / 4096.0)?;
    let out = dyadic_times(0.0, 1.0, 12);
    let spec = KernelSpec::new(KernelKind::NonAnticipative, 0.25)?;
    let converged: Vec<bool> = (0..cfg.dichotomy_paths)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let seed = derive_seed(cfg.seed, &[4, 0, i as u64]);
            let path = sample_increments(&model, &grid, seed);
            let fp = synthesize(&path, &spec, &out)?;
            Ok(tv_profile(&fp, 0.0, 1.0, 12)?.converged)
        })
        .collect::<Result<_>>()?;
    let n_conv = converged.iter().filter(|c| **c).count();
    let frac = n_conv as f64 / converged.len() as f64;
    let cpp_ok = frac >= 0.95;

    // Gaussian driver: dyadic TV grows like 2^(n(1-H)), H = d + 1/2.
    let brown = LevyModel::brownian(1.0)?;
    let gridb = IncrementGrid::new(-8.0, 1.0, 1.0 / 16384.0)?;
    let mut exps = Vec::new();
    let mut brown_ok = true;
    for &db in &[0.1, 0.25, 0.4] {
        let specb = KernelSpec::new(KernelKind::NonAnticipative, db)?;
        let fitted: Vec<f64> = (0..cfg.exponent_paths)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let seed = derive_seed(cfg.seed, &[4, 1, (1000.0 * db) as u64, i as u64]);
                let path = sample_increments(&brown, &gridb, seed);
                let fp = synthesize(&path, &specb, &out)?;
                Ok(tv_profile(&fp, 0.0, 1.0, 12)?.growth_exponent)
            })
            .collect::<Result<_>>()?;
        let (mean, _) = mean_stderr(&fitted);
        brown_ok &= (mean - (0.5 - db)).abs() <= 0.1;
        exps.push(format!("d = {db}: {mean:.3} (target {:.2})", 0.5 - db));
    }
    let pass = cpp_ok && brown_ok;
    Ok((
        pass,
        format!(
            "finite-activity convergence {n_conv}/{} ({:.1}%, need 95%); Gaussian growth \
             exponents [{}] within +-0.1",
            converged.len(),
            100.0 * frac,
            exps.join(", ")
        ),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 5: second-order self-similarity, Var X(t) ~ t^(2d+1).
// ---------------------------------------------------------------------------

fn c5_second_order(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let d = 0.25;
    let grid = IncrementGrid::new(-16.0, 0.5, 1.0 / 1024.0)?;
    let out = [0.0625, 0.125, 0.25, 0.5];
    let spec = KernelSpec::new(KernelKind::NonAnticipative, d)?;
    let wm = WeightMatrix::new(&grid, &spec, &out)?;
    let ln_t: Vec<f64> = out.iter().map(|t| t.ln()).collect();
    let target = 2.0 * d + 1.0;
    let mut msgs = Vec::new();
    let mut pass = true;
    for (mi, model) in [standard_cpp(), LevyModel::brownian(1.0)?].iter().enumerate() {
        let vals: Vec<Vec<f64>> = (0..cfg.scaling_reps)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let seed = derive_seed(cfg.seed, &[5, mi as u64, i as u64]);
                wm.apply(&sample_increments(model, &grid, seed))
            })
            .collect::<Result<_>>()?;
        let ln_var: Vec<f64> = (0..out.len())
            .map(|j| {
                let col: Vec<f64> = vals.iter().map(|v| v[j]).collect();
                sample_variance(&col).ln()
            })
            .collect();
        let slope = ols_slope(&ln_t, &ln_var);
        pass &= (slope - target).abs() <= 0.05;
        msgs.push(format!(
            "{}: slope {slope:.4}",
            if mi == 0 { "finite-activity" } else { "gaussian" }
        ));
    }
    Ok((
        pass,
        format!(
            "log-log variance slopes [{}] vs target {target:.2} +- 0.05 at {} replications",
            msgs.join(", "),
            cfg.scaling_reps
        ),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 6: small-time convergence of X(t)/t to the derivative integral.
// ---------------------------------------------------------------------------

fn c6_derivative_convergence(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let model = standard_cpp();
    let d = 0.25;
    let grid = IncrementGrid::new(-16.0, 16.0, 1.0 / 4096.0)?;
    // Descending, so the mean gaps should decrease along the sequence.
    let ts: Vec<f64> = (3..=8).map(|k| 0.5f64.powi(k)).collect();
    let na = KernelSpec::new(KernelKind::NonAnticipative, d)?;
    let wb = KernelSpec::new(KernelKind::WellBalanced, d)?;
    let g = gamma(d);
    let diffs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.pairing_paths)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let seed = derive_seed(cfg.seed, &[6, i as u64]);
            let path = sample_increments(&model, &grid, seed);
            let m = synthesize(&path, &na, &ts)?;
            let n = synthesize(&path, &wb, &ts)?;
            // Cell-averaged derivative weights: exactly the lattice limit of
            // X(t)/t, since synthesis averages the kernel over each cell.
            let y0 = y0_from_path(&path, d);
            let w0 = nd_derivative_from_path(&path, d);
            let dm = ts
                .iter()
                .enumerate()
                .map(|(j, &t)| (m.values[j] / t - y0 / g).abs())
                .collect();
            let dn = ts
                .iter()
                .enumerate()
                .map(|(j, &t)| (n.values[j] / t - w0 / g).abs())
                .collect();
            Ok((dm, dn))
        })
        .collect::<Result<_>>()?;
    let mean_at = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>, j: usize| -> f64 {
        diffs.iter().map(|p| pick(p)[j]) .sum::<f64>() / diffs.len() as f64
    };
    let m_means: Vec<f64> = (0..ts.len()).map(|j| mean_at(|p| &p.0, j)).collect();
    let n_means: Vec<f64> = (0..ts.len()).map(|j| mean_at(|p| &p.1, j)).collect();
    let inversions = |xs: &[f64]| xs.windows(2).filter(|w| w[1] > w[0]).count();
    let (inv_m, inv_n) = (inversions(&m_means), inversions(&n_means));
    let pass = inv_m <= 1 && inv_n <= 1;
    let fmt = |xs: &[f64]| {
        xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
    };
    Ok((
        pass,
        format!(
            "paired E|X(t)/t - Y/gamma(d)| along t = 2^-3..2^-8: one-sided [{}] ({inv_m} \
             inversions), two-sided [{}] ({inv_n} inversions); at most 1 allowed each",
            fmt(&m_means),
            fmt(&n_means)
        ),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 7: closed bounds dominate their Monte Carlo / quadrature sides.
// ---------------------------------------------------------------------------

fn c7_bound_dominance(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut pass = true;

    // Worked closed values of the mean-absolute-increment bound.
    let cpp = standard_cpp();
    let ts11 = truncated_stable(1.0);
    let w1 = mean_abs_bound(&cpp, 2.0)?;
    let w2 = mean_abs_bound(&ts11, 1.0)?;
    let worked_ok = (w1 - 2.5).abs() <= 1e-12 && (w2 - 3.0).abs() <= 1e-12;
    pass &= worked_ok;
    parts.push(format!("worked values {w1:.6}/{w2:.6} (want 2.5/3)"));

    // The bound dominates E|L(1)| for every split level.
    let grid1 = IncrementGrid::new(0.0, 1.0, 0.25)?;
    let mut mc_ok = true;
    for (mi, model) in [&cpp, &ts11].iter().enumerate() {
        let draws: Vec<f64> = (0..cfg.mc_draws)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(cfg.seed, &[7, 0, mi as u64, i as u64]);
                sample_increments(model, &grid1, seed).increments.iter().sum::<f64>().abs()
            })
            .collect();
        let (mean, se) = mean_stderr(&draws);
        for &eps in &[0.1, 1.0, 10.0] {
            mc_ok &= mean <= mean_abs_bound(model, eps)? + 3.0 * se;
        }
    }
    pass &= mc_ok;
    parts.push(format!("E|L(1)| dominance over {} draws = {mc_ok}", cfg.mc_draws));

    // Closed tail bounds dominate their quadrature left-hand sides.
    let ts05 = truncated_stable(0.5);
    let mut lat_total = 0usize;
    let mut lat_ok = 0usize;
    for model in [&cpp, &ts05, &ts11] {
        for &dd in &[0.1, 0.25, 0.4] {
            for &r in &[-0.5, -1.0] {
                for &a in &[0.5, 1.0, 2.0] {
                    let (l2, r2) = bound_c2(model, dd, r, a)?;
                    let (l3, r3) = bound_c3(model, dd, r, a)?;
                    lat_total += 2;
                    lat_ok += usize::from(l2 <= r2 * (1.0 + 5e-6) + 1e-12);
                    lat_ok += usize::from(l3 <= r3 * (1.0 + 5e-6) + 1e-12);
                }
            }
        }
    }
    pass &= lat_ok == lat_total;
    parts.push(format!("tail-bound lattice {lat_ok}/{lat_total}"));

    // Past-component TV bound: closed Beta-form reference plus MC dominance.
    let b = 0.5;
    let bound = fd_tv_bound(&cpp, 0.25, b)?;
    let j_closed = |dd: f64, bb: f64| {
        bb.powf(dd + 0.5) * gamma(1.5 - dd) * gamma(1.5)
            / ((dd + 0.5) * (0.5 - dd) * gamma(1.0 - dd))
    };
    let reference = cpp.variance_rate().sqrt() / gamma(0.25) * j_closed(0.25, b);
    let ref_ok = ((bound - reference) / reference).abs() <= 1e-6;
    pass &= ref_ok;
    let gridf = IncrementGrid::new(-16.0, b, 1.0 / 256.0)?;
    let outf = dyadic_times(0.0, b, 7);
    let specf = KernelSpec::new(KernelKind::TailPart, 0.25)?;
    let tvs: Vec<f64> = (0..cfg.tv_mc_paths)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let seed = derive_seed(cfg.seed, &[7, 1, i as u64]);
            let path = sample_increments(&cpp, &gridf, seed);
            Ok(dyadic_tv(&synthesize(&path, &specf, &outf)?.values))
        })
        .collect::<Result<_>>()?;
    let (mean_tv, se_tv) = mean_stderr(&tvs);
    let fd_ok = mean_tv <= bound + 3.0 * se_tv;
    pass &= fd_ok;
    parts.push(format!(
        "past-TV bound: closed ref agree = {ref_ok}, MC {mean_tv:.4} <= {bound:.4} + 3 x {se_tv:.4}"
    ));

    Ok((pass, parts.join("; ")))
}

// ---------------------------------------------------------------------------
// Criterion 8: two-sample test of increment stationarity.
// ---------------------------------------------------------------------------

fn c8_stationarity(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let model = standard_cpp();
    let spec = KernelSpec::new(KernelKind::NonAnticipative, 0.25)?;
    let grid = IncrementGrid::new(-16.0, 0.75, 1.0 / 256.0)?;
    let sample_a: Vec<f64> = (0..cfg.ks_paths)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let seed = derive_seed(cfg.seed, &[8, 0, i as u64]);
            let path = sample_increments(&model, &grid, seed);
            Ok(synthesize(&path, &spec, &[0.25])?.values[0])
        })
        .collect::<Result<_>>()?;
    let sample_b: Vec<f64> = (0..cfg.ks_paths)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let seed = derive_seed(cfg.seed, &[8, 1, i as u64]);
            let fp = synthesize(&sample_increments(&model, &grid, seed), &spec, &[0.5, 0.75])?;
            Ok(fp.values[1] - fp.values[0])
        })
        .collect::<Result<_>>()?;
    let ks = ks_two_sample(&sample_a, &sample_b);
    let pass = ks.p_value >= 0.01;
    Ok((
        pass,
        format!(
            "increments over lag 1/4 at t = 0 vs t = 1/2: KS D = {:.4}, p = {:.3} on {} + {} \
             independent paths (reject below 0.01)",
            ks.statistic,
            ks.p_value,
            sample_a.len(),
            sample_b.len()
        ),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 9: double-run reproducibility of the report bundle.
// ---------------------------------------------------------------------------

fn c9_reproducibility(cfg: &VerifyConfig) -> Result<(bool, String)> {
    let rcfg = cfg.reduced();
    let base = std::env::temp_dir().join(format!("flevy-verify-{}", std::process::id()));
    let bundles = (|| -> Result<(Vec<u8>, Vec<u8>)> {
        let m1 = write_bundle(&rcfg, &base.join("first"))?;
        let m2 = write_bundle(&rcfg, &base.join("second"))?;
        Ok((m1, m2))
    })();
    let _ = fs::remove_dir_all(&base);
    let (m1, m2) = bundles?;
    let pass = m1 == m2;
    Ok((
        pass,
        format!(
            "two reduced-scale report bundles: manifest bytes {} vs {}, byte-identical = {pass}",
            m1.len(),
            m2.len()
        ),
    ))
}

// ---------------------------------------------------------------------------
// Report bundle.
// ---------------------------------------------------------------------------

fn to_json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    name: &'a str,
    sha256: String,
}

/// Manifest JSON for a set of written files: content hashes for the
/// deterministic ones, a `volatile` list (no hash) for files whose bytes
/// legitimately differ between runs, such as wall-clock timings.  Entries
/// are sorted by name so the manifest itself is deterministic.
pub fn manifest_bytes(hashed: &[(&str, &[u8])], volatile: &[&str]) -> Result<Vec<u8>> {
    let mut files: Vec<ManifestFile> = hashed
        .iter()
        .map(|(name, bytes)| ManifestFile { name, sha256: sha256_hex(bytes) })
        .collect();
    files.sort_by(|x, y| x.name.cmp(y.name));
    let mut vol: Vec<&str> = volatile.to_vec();
    vol.sort_unstable();
    to_json_bytes(&serde_json::json!({ "files": files, "volatile": vol }))
}

/// Run the given criteria for `cfg`, write `report.json`, `timings.json`
/// and `manifest.json` into `dir`, and return the manifest bytes together
/// with the report.
///
/// `report.json` holds only deterministic fields and is content-hashed in
/// the manifest; wall-clock numbers go to `timings.json`, which the
/// manifest lists as volatile, so two runs of the same configuration yield
/// byte-identical manifests.
pub fn write_bundle_for(
    cfg: &VerifyConfig,
    dir: &Path,
    indices: &[usize],
) -> Result<(Vec<u8>, VerifyReport)> {
    fs::create_dir_all(dir)?;
    let outcomes: Vec<CriterionOutcome> =
        indices.iter().map(|&i| run_criterion(i, cfg)).collect::<Result<_>>()?;
    let all_pass = outcomes.iter().all(|o| o.pass);
    let report = VerifyReport { config: cfg.clone(), outcomes, all_pass };
    let report_bytes = to_json_bytes(&report)?;
    fs::write(dir.join("report.json"), &report_bytes)?;
    let timings: Vec<serde_json::Value> = report
        .outcomes
        .iter()
        .map(|o| serde_json::json!({ "index": o.index, "name": o.name, "seconds": o.seconds }))
        .collect();
    let timing_bytes = to_json_bytes(&serde_json::json!({ "criteria": timings }))?;
    fs::write(dir.join("timings.json"), &timing_bytes)?;
    let manifest = manifest_bytes(&[("report.json", report_bytes.as_slice())], &["timings.json"])?;
    fs::write(dir.join("manifest.json"), &manifest)?;
    Ok((manifest, report))
}

/// [`write_bundle_for`] over criteria 1 through 8 (the self-contained ones;
/// criterion 9 is itself a double run of this bundle).
pub fn write_bundle(cfg: &VerifyConfig, dir: &Path) -> Result<Vec<u8>> {
    let indices: Vec<usize> = (1..=8).collect();
    write_bundle_for(cfg, dir, &indices).map(|(manifest, _)| manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_fields() {
        let cfg = VerifyConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: VerifyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        // Partial configs fall back to defaults field by field.
        let partial: VerifyConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.tv_paths, cfg.tv_paths);
        assert!(serde_json::from_str::<VerifyConfig>(r#"{"sede": 7}"#).is_err());
    }

    #[test]
    fn reduced_preserves_seed_and_driver() {
        let cfg = VerifyConfig { seed: 99, ..VerifyConfig::default() };
        let r = cfg.reduced();
        assert_eq!(r.seed, 99);
        assert_eq!(r.model, cfg.model);
        assert!(r.tv_paths < cfg.tv_paths);
    }

    #[test]
    fn manifest_is_sorted_and_deterministic() {
        let m1 = manifest_bytes(&[("b.json", b"x"), ("a.json", b"y")], &["t.json"]).unwrap();
        let m2 = manifest_bytes(&[("a.json", b"y"), ("b.json", b"x")], &["t.json"]).unwrap();
        assert_eq!(m1, m2);
        let text = String::from_utf8(m1).unwrap();
        let pa = text.find("a.json").unwrap();
        let pb = text.find("b.json").unwrap();
        assert!(pa < pb);
        assert!(text.contains(&sha256_hex(b"y")));
    }

    #[test]
    fn sha256_matches_known_vector() {
        // SHA-256 of the empty string.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn phase_boundary_criterion_runs_and_passes() {
        let cfg = VerifyConfig::default();
        let out = run_criterion(2, &cfg).unwrap();
        assert!(out.pass, "{}", out.details);
        assert_eq!(out.index, 2);
        assert_eq!(out.name, "variation-phase-boundary");
    }

    #[test]
    fn criterion_index_is_validated() {
        assert!(run_criterion(0, &VerifyConfig::default()).is_err());
        assert!(run_criterion(10, &VerifyConfig::default()).is_err());
    }

    #[test]
    fn expected_infinite_verdict_marks_pass_for_gaussian_driver() {
        let cfg = VerifyConfig {
            model: LevyModel::brownian(1.0).unwrap(),
            ..VerifyConfig::default()
        };
        let out = run_criterion(3, &cfg).unwrap();
        assert!(out.pass, "{}", out.details);
        assert!(out.details.contains("infinite"));
    }
}
