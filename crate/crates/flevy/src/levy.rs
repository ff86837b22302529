//! Parametric Lévy driver models and seeded increment sampling.
//!
//! A driver is described by a Gaussian variance rate `sigma`, a jump part
//! built from compound-Poisson atoms and truncated-stable components, and a
//! drift convention: either the model is *centered* (`E L(1) = 0`, enforced
//! by an internal drift adjustment) or it carries an explicit triplet drift
//! `gamma` relative to the cutoff function `x -> (1 - |x|)^+`.  Internally
//! every model is reduced to its mean per unit time, so sampling never has
//! to re-derive drift conventions.
//!
//! Closed forms are provided for the upper tail `nu([x, inf))` of the Lévy
//! measure and for truncated absolute moments `int_{lo<|x|<=hi} |x|^p nu(dx)`
//! (with `+inf` returned where the integral diverges); both are exact for
//! every representable model, including mixtures.
//!
//! Sampling follows the small-jump Gaussian replacement scheme for
//! truncated-stable components: jumps larger than a threshold `eps` are
//! simulated exactly as a marked Poisson process and the compensated
//! small-jump remainder is replaced by a Brownian motion matching its
//! variance.  All draws come from child streams derived from one root seed
//! (see [`crate::rng`]), with the negative and positive halves of the time
//! axis using independent streams, so a two-sided path realizes the
//! standard construction from two independent copies of the driver.

use crate::error::{Error, Result};
use crate::rng::{child_rng, tag};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

/// One compound-Poisson atom: jumps of exactly `size` at intensity `rate`
/// per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub size: f64,
    pub rate: f64,
}

/// Jump part of a driver model.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpFamily {
    /// No jumps.
    None,
    /// Finite-activity jumps with the given atoms.
    CompoundPoisson { atoms: Vec<JumpAtom> },
    /// Infinite-activity jumps with Lévy density `c |x|^(-1-alpha)` on
    /// `0 < x <= 1` (and mirrored onto `[-1, 0)` when `symmetric`).
    TruncatedStable { alpha: f64, c: f64, symmetric: bool },
    /// Independent superposition of several jump parts.
    Mixture(Vec<JumpFamily>),
}

/// A Lévy driver model.
///
/// Construct with [`LevyModel::new`]; the constructor validates all
/// parameters and fixes the mean per unit time once and for all.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    /// Variance per unit time of the Brownian component (`>= 0`).
    sigma: f64,
    /// Triplet drift relative to the cutoff `x -> (1 - |x|)^+`; ignored for
    /// centered models.
    gamma: f64,
    /// Jump part.
    family: JumpFamily,
    /// When set, the drift is adjusted so that `E L(1) = 0`.
    centered: bool,
    /// Mean of `L(1)`, derived at construction.
    mean_rate: f64,
}

/// Flattened leaf of a jump family (mixtures expanded, `None` dropped).
enum Leaf<'a> {
    Atoms(&'a [JumpAtom]),
    Stable { alpha: f64, c: f64, symmetric: bool },
}

fn collect_leaves<'a>(family: &'a JumpFamily, out: &mut Vec<Leaf<'a>>) {
    match family {
        JumpFamily::None => {}
        JumpFamily::CompoundPoisson { atoms } => out.push(Leaf::Atoms(atoms)),
        JumpFamily::TruncatedStable { alpha, c, symmetric } => {
            out.push(Leaf::Stable { alpha: *alpha, c: *c, symmetric: *symmetric })
        }
        JumpFamily::Mixture(parts) => {
            for p in parts {
                collect_leaves(p, out);
            }
        }
    }
}

fn validate_family(family: &JumpFamily) -> Result<()> {
    match family {
        JumpFamily::None => Ok(()),
        JumpFamily::CompoundPoisson { atoms } => {
            for a in atoms {
                if !a.size.is_finite() || a.size == 0.0 {
                    return Err(Error::invalid(format!(
                        "compound-Poisson atom size must be finite and non-zero, got {}",
                        a.size
                    )));
                }
                if !a.rate.is_finite() || a.rate <= 0.0 {
                    return Err(Error::invalid(format!(
                        "compound-Poisson atom rate must be finite and positive, got {}",
                        a.rate
                    )));
                }
            }
            Ok(())
        }
        JumpFamily::TruncatedStable { alpha, c, .. } => {
            if !alpha.is_finite() || *alpha <= 0.0 || *alpha >= 2.0 {
                return Err(Error::invalid(format!(
                    "truncated-stable alpha must lie in (0, 2), got {alpha}"
                )));
            }
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::invalid(format!(
                    "truncated-stable scale must be finite and positive, got {c}"
                )));
            }
            Ok(())
        }
        JumpFamily::Mixture(parts) => {
            for p in parts {
                validate_family(p)?;
            }
            Ok(())
        }
    }
}

impl LevyModel {
    /// Build and validate a model.
    ///
    /// `sigma` is the Gaussian variance per unit time, `gamma` the triplet
    /// drift relative to the cutoff `x -> (1 - |x|)^+`, and `centered`
    /// requests the zero-mean version of the process (in which case `gamma`
    /// plays no role in the law).
    pub fn new(sigma: f64, gamma: f64, family: JumpFamily, centered: bool) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be finite and non-negative, got {sigma}"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be finite, got {gamma}")));
        }
        validate_family(&family)?;
        let mut model =
            LevyModel { sigma, gamma, family, centered, mean_rate: 0.0 };
        model.mean_rate = if centered {
            0.0
        } else {
            // E L(1) = gamma + int x (1 - cutoff(x)) nu(dx); with the cutoff
            // (1 - |x|)^+ the integrand is x|x| on |x| <= 1 and x outside.
            let mut leaves = Vec::new();
            collect_leaves(&model.family, &mut leaves);
            let mut mean = gamma;
            for leaf in &leaves {
                match leaf {
                    Leaf::Atoms(atoms) => {
                        for a in *atoms {
                            mean += a.rate
                                * if a.size.abs() <= 1.0 { a.size * a.size.abs() } else { a.size };
                        }
                    }
                    Leaf::Stable { alpha, c, symmetric } => {
                        if !symmetric {
                            // int_0^1 x * x * c x^(-1-alpha) dx = c / (2 - alpha)
                            mean += c / (2.0 - alpha);
                        }
                    }
                }
            }
            mean
        };
        Ok(model)
    }

    /// Pure Brownian model with variance rate `sigma`.
    pub fn brownian(sigma: f64) -> Result<Self> {
        Self::new(sigma, 0.0, JumpFamily::None, true)
    }

    /// Gaussian variance per unit time.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Triplet drift as passed to the constructor.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Jump part.
    pub fn family(&self) -> &JumpFamily {
        &self.family
    }

    /// Whether the model is the centered (zero-mean) version.
    pub fn centered(&self) -> bool {
        self.centered
    }

    /// Mean of `L(1)`.
    pub fn mean_rate(&self) -> f64 {
        self.mean_rate
    }

    /// Variance of `L(1)`: Gaussian part plus `int x^2 nu(dx)`.
    pub fn variance_rate(&self) -> f64 {
        let mut leaves = Vec::new();
        collect_leaves(&self.family, &mut leaves);
        let mut v = self.sigma;
        for leaf in &leaves {
            match leaf {
                Leaf::Atoms(atoms) => {
                    for a in *atoms {
                        v += a.rate * a.size * a.size;
                    }
                }
                Leaf::Stable { alpha, c, symmetric } => {
                    let sides = if *symmetric { 2.0 } else { 1.0 };
                    // int_0^1 x^2 c x^(-1-alpha) dx = c / (2 - alpha)
                    v += sides * c / (2.0 - alpha);
                }
            }
        }
        v
    }

    /// Largest jump magnitude in the support of the Lévy measure
    /// (`0` for models without jumps).
    pub fn max_jump(&self) -> f64 {
        let mut leaves = Vec::new();
        collect_leaves(&self.family, &mut leaves);
        let mut m: f64 = 0.0;
        for leaf in &leaves {
            match leaf {
                Leaf::Atoms(atoms) => {
                    for a in *atoms {
                        m = m.max(a.size.abs());
                    }
                }
                Leaf::Stable { .. } => m = m.max(1.0),
            }
        }
        m
    }

    /// Whether the law of the driver is symmetric around zero.
    ///
    /// Requires zero mean, a symmetric jump part (atom for atom), and any
    /// Gaussian component (which is symmetric by itself).
    pub fn is_symmetric(&self) -> bool {
        if self.mean_rate != 0.0 {
            return false;
        }
        let mut leaves = Vec::new();
        collect_leaves(&self.family, &mut leaves);
        for leaf in &leaves {
            match leaf {
                Leaf::Atoms(atoms) => {
                    // Net rate per signed size must mirror: for every size s
                    // the total rate at s equals the total rate at -s.
                    let mut sizes: Vec<f64> = atoms.iter().map(|a| a.size.abs()).collect();
                    sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    sizes.dedup();
                    for s in sizes {
                        let rate_at = |x: f64| {
                            atoms
                                .iter()
                                .filter(|a| a.size == x)
                                .map(|a| a.rate)
                                .sum::<f64>()
                        };
                        let (rp, rn) = (rate_at(s), rate_at(-s));
                        if (rp - rn).abs() > 1e-12 * (rp + rn).max(1e-300) {
                            return false;
                        }
                    }
                }
                Leaf::Stable { symmetric, .. } => {
                    if !symmetric {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Upper tail of the Lévy measure, `nu([x, inf))`, for `x > 0`.
    ///
    /// Exact closed form: atoms contribute their rates when `size >= x`, a
    /// truncated-stable part contributes `c (x^-alpha - 1) / alpha` for
    /// `x <= 1` and nothing beyond its support.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::invalid(format!("tail_mass needs x > 0, got {x}")));
        }
        let mut leaves = Vec::new();
        collect_leaves(&self.family, &mut leaves);
        let mut mass = 0.0;
        for leaf in &leaves {
            match leaf {
                Leaf::Atoms(atoms) => {
                    mass += atoms
                        .iter()
                        .filter(|a| a.size > 0.0 && a.size >= x)
                        .map(|a| a.rate)
                        .sum::<f64>();
                }
                Leaf::Stable { alpha, c, .. } => {
                    // The density is c x^(-1-alpha) on each side present, so
                    // the positive-side tail does not depend on `symmetric`.
                    if x <= 1.0 {
                        mass += c * (x.powf(-alpha) - 1.0) / alpha;
                    }
                }
            }
        }
        Ok(mass)
    }

    /// Truncated absolute moment `int_{lo < |x| <= hi} |x|^p nu(dx)` as an
    /// extended real (`f64::INFINITY` where the integral diverges).
    ///
    /// Requires `p > 0`, `0 <= lo < hi` (`hi` may be `inf`).  For a
    /// truncated-stable part the integral diverges exactly when `lo = 0`
    /// and `p <= alpha`.
    pub fn abs_moment(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        self.moment_impl(p, lo, hi, false)
    }

    /// One-sided moment `int_{lo < x <= hi} x^p nu(dx)` over positive jumps
    /// only; same conventions as [`LevyModel::abs_moment`].
    pub fn pos_moment(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        self.moment_impl(p, lo, hi, true)
    }

    fn moment_impl(&self, p: f64, lo: f64, hi: f64, positive_side_only: bool) -> Result<f64> {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::invalid(format!("moment order must be positive, got {p}")));
        }
        if !lo.is_finite() || lo < 0.0 || hi <= lo {
            return Err(Error::invalid(format!(
                "moment bounds must satisfy 0 <= lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        let mut leaves = Vec::new();
        collect_leaves(&self.family, &mut leaves);
        let mut total = 0.0;
        for leaf in &leaves {
            match leaf {
                Leaf::Atoms(atoms) => {
                    for a in *atoms {
                        if positive_side_only && a.size < 0.0 {
                            continue;
                        }
                        let s = a.size.abs();
                        if s > lo && s <= hi {
                            total += a.rate * s.powf(p);
                        }
                    }
                }
                Leaf::Stable { alpha, c, symmetric } => {
                    let sides = if *symmetric && !positive_side_only { 2.0 } else { 1.0 };
                    let hi_eff = hi.min(1.0);
                    if hi_eff <= lo {
                        continue;
                    }
                    if lo == 0.0 && p <= *alpha {
                        // int_0^hi x^(p-1-alpha) dx diverges at the origin
                        // (logarithmically at p = alpha).
                        return Ok(f64::INFINITY);
                    }
                    let delta = p - alpha;
                    let piece = if lo == 0.0 {
                        hi_eff.powf(delta) / delta
                    } else if delta == 0.0 {
                        (hi_eff / lo).ln()
                    } else {
                        // (hi^delta - lo^delta)/delta, written via exp_m1 to
                        // stay accurate when delta is tiny.
                        lo.powf(delta) * (delta * (hi_eff / lo).ln()).exp_m1() / delta
                    };
                    total += sides * c * piece;
                }
            }
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// JSON representation
// ---------------------------------------------------------------------------

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Wire format of a jump component.
#[derive(Serialize, Deserialize, Clone)]
#[serde(tag = "type", rename_all = "snake_case")]
enum JumpJson {
    CompoundPoisson { atoms: Vec<JumpAtom> },
    TruncatedStable { alpha: f64, c: f64, symmetric: bool },
}

/// Wire format of a model: `{"sigma": .., "mean_zero": .., "jumps": [..]}`
/// with an optional `gamma` for models that carry an explicit drift.
#[derive(Serialize, Deserialize, Clone)]
struct ModelJson {
    sigma: f64,
    mean_zero: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    gamma: f64,
    jumps: Vec<JumpJson>,
}

impl TryFrom<ModelJson> for LevyModel {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        let parts: Vec<JumpFamily> = j
            .jumps
            .into_iter()
            .map(|p| match p {
                JumpJson::CompoundPoisson { atoms } => JumpFamily::CompoundPoisson { atoms },
                JumpJson::TruncatedStable { alpha, c, symmetric } => {
                    JumpFamily::TruncatedStable { alpha, c, symmetric }
                }
            })
            .collect();
        let family = match parts.len() {
            0 => JumpFamily::None,
            1 => parts.into_iter().next().unwrap(),
            _ => JumpFamily::Mixture(parts),
        };
        LevyModel::new(j.sigma, j.gamma, family, j.mean_zero)
    }
}

impl From<LevyModel> for ModelJson {
    fn from(m: LevyModel) -> Self {
        let mut leaves = Vec::new();
        collect_leaves(&m.family, &mut leaves);
        let jumps = leaves
            .iter()
            .map(|leaf| match leaf {
                Leaf::Atoms(atoms) => JumpJson::CompoundPoisson { atoms: atoms.to_vec() },
                Leaf::Stable { alpha, c, symmetric } => JumpJson::TruncatedStable {
                    alpha: *alpha,
                    c: *c,
                    symmetric: *symmetric,
                },
            })
            .collect();
        ModelJson { sigma: m.sigma, mean_zero: m.centered, gamma: m.gamma, jumps }
    }
}

impl Serialize for LevyModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelJson::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for LevyModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ModelJson::deserialize(d)?;
        LevyModel::try_from(j).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Grids and sampled paths
// ---------------------------------------------------------------------------

/// A uniform increment grid `r_min = s_0 < s_1 < ... < s_K = t_max` with
/// `r_min <= 0 <= t_max` and `0` exactly on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementGrid {
    r_min: f64,
    t_max: f64,
    step: f64,
    n_cells: usize,
    zero_index: usize,
}

impl IncrementGrid {
    /// Build a grid over `[r_min, t_max]` with the given step.
    ///
    /// The span must be a whole number of steps and `0` must land on a
    /// node (both up to a `1e-9` relative snap).
    pub fn new(r_min: f64, t_max: f64, step: f64) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::invalid(format!("grid step must be positive, got {step}")));
        }
        if !r_min.is_finite() || !t_max.is_finite() || r_min > 0.0 || t_max < 0.0 {
            return Err(Error::invalid(format!(
                "grid must satisfy r_min <= 0 <= t_max, got [{r_min}, {t_max}]"
            )));
        }
        let span = t_max - r_min;
        if span <= 0.0 {
            return Err(Error::invalid("grid span must be positive".to_string()));
        }
        let n_cells_f = span / step;
        let n_cells = n_cells_f.round();
        if (n_cells_f - n_cells).abs() > 1e-9 * n_cells.max(1.0) || n_cells < 1.0 {
            return Err(Error::invalid(format!(
                "grid span {span} is not a whole number of steps {step}"
            )));
        }
        let k0_f = (-r_min) / step;
        let k0 = k0_f.round();
        if (k0_f - k0).abs() > 1e-9 * k0.max(1.0) {
            return Err(Error::invalid(format!(
                "zero is not a grid node for r_min={r_min}, step={step}"
            )));
        }
        Ok(IncrementGrid {
            r_min,
            t_max,
            step,
            n_cells: n_cells as usize,
            zero_index: k0 as usize,
        })
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }
    pub fn t_max(&self) -> f64 {
        self.t_max
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    /// Number of cells `[s_k, s_{k+1})`.
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    /// Index of the node at time `0`.
    pub fn zero_index(&self) -> usize {
        self.zero_index
    }
    /// Node `s_k`.
    pub fn node(&self, k: usize) -> f64 {
        self.r_min + k as f64 * self.step
    }
    /// Index of the node at time `t`, when `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let kf = (t - self.r_min) / self.step;
        let k = kf.round();
        if k < 0.0 || k > self.n_cells as f64 || (kf - k).abs() > 1e-9 * kf.abs().max(1.0) {
            return Err(Error::InsufficientCoverage(format!(
                "time {t} is not a node of the grid [{}, {}] with step {}",
                self.r_min, self.t_max, self.step
            )));
        }
        Ok(k as usize)
    }
}

/// Sampled driver increments on a grid, with cumulative values anchored at
/// `L(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub grid: IncrementGrid,
    /// `increments[k] = L(s_{k+1}) - L(s_k)`.
    pub increments: Vec<f64>,
    /// `values[k] = L(s_k)`, with `values[zero_index] = 0` exactly.
    pub values: Vec<f64>,
    /// Root seed the sample was drawn from (provenance only).
    pub seed: u64,
}

impl PathSample {
    /// Assemble a sample from explicit increments (used by tests and the
    /// splicing constructor); cumulative values are anchored at `L(0) = 0`.
    pub fn from_increments(grid: IncrementGrid, increments: Vec<f64>, seed: u64) -> Result<Self> {
        if increments.len() != grid.n_cells() {
            return Err(Error::invalid(format!(
                "expected {} increments, got {}",
                grid.n_cells(),
                increments.len()
            )));
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for &dx in &increments {
            acc += dx;
            values.push(acc);
        }
        let anchor = values[grid.zero_index()];
        for v in &mut values {
            *v -= anchor;
        }
        // Re-pin the anchor node to exact zero (it already is, up to the
        // subtraction's own rounding).
        values[grid.zero_index()] = 0.0;
        Ok(PathSample { grid, increments, values, seed })
    }

    /// Value `L(s_k)`.
    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Number of non-zero increments (drives the synthesis strategy).
    pub fn nnz(&self) -> usize {
        self.increments.iter().filter(|v| **v != 0.0).count()
    }

    /// Write the sample as CSV with columns `s,l` (node, cumulative value),
    /// 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,l")?;
        for k in 0..=self.grid.n_cells() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.node(k), self.values[k])?;
        }
        Ok(())
    }
}

/// Options for increment sampling.
#[derive(Debug, Clone, Copy, Default)]
pub struct SamplingOptions {
    /// Override for the small-jump replacement threshold of
    /// truncated-stable components; `None` selects
    /// `clamp(0.1 * step^(1/alpha), 1e-6, 1e-2)`.
    pub stable_threshold: Option<f64>,
}

/// Draw driver increments on `grid` from the child streams of `seed`.
///
/// Cells on the negative side are driven by streams independent of the
/// positive side and are filled in order of increasing `|s|`, so a grid
/// over `[r_min, t_max]` realizes the two-sided construction of the driver
/// from two independent one-sided copies.
pub fn sample_increments(model: &LevyModel, grid: &IncrementGrid, seed: u64) -> PathSample {
    sample_increments_opts(model, grid, seed, SamplingOptions::default())
}

/// [`sample_increments`] with explicit [`SamplingOptions`].
pub fn sample_increments_opts(
    model: &LevyModel,
    grid: &IncrementGrid,
    seed: u64,
    opts: SamplingOptions,
) -> PathSample {
    let k0 = grid.zero_index();
    let n = grid.n_cells();
    let h = grid.step();
    let mut inc = vec![0.0f64; n];

    // Sides: (tag, number of cells, map from side-local cell u to grid cell).
    // Side-local cell u covers times of distance [u h, (u+1) h) from zero.
    let neg_cells = k0;
    let pos_cells = n - k0;
    let side_specs: [(u64, usize); 2] =
        [(tag::SIDE_NEG, neg_cells), (tag::SIDE_POS, pos_cells)];
    let to_grid = |side: u64, u: usize| -> usize {
        if side == tag::SIDE_NEG {
            k0 - 1 - u
        } else {
            k0 + u
        }
    };

    // Brownian component.
    if model.sigma > 0.0 {
        let sd = (model.sigma * h).sqrt();
        for (side, cells) in side_specs {
            let mut rng = child_rng(seed, &[side, tag::GAUSSIAN]);
            for u in 0..cells {
                let z: f64 = StandardNormal.sample(&mut rng);
                inc[to_grid(side, u)] += sd * z;
            }
        }
    }

    let mut leaves = Vec::new();
    collect_leaves(&model.family, &mut leaves);

    // Drift per unit time: the sampled jump parts below contribute their
    // own means, so the deterministic remainder is the model mean minus
    // those contributions.  (The small-jump Gaussian replacement stands for
    // the *compensated* small jumps and contributes no mean.)
    let mut drift = model.mean_rate;

    for (ci, leaf) in leaves.iter().enumerate() {
        let ci = ci as u64;
        match leaf {
            Leaf::Atoms(atoms) => {
                for (ai, atom) in atoms.iter().enumerate() {
                    drift -= atom.rate * atom.size;
                    for (side, cells) in side_specs {
                        if cells == 0 {
                            continue;
                        }
                        let mut rng = child_rng(seed, &[side, tag::ATOM, ci, ai as u64]);
                        let span = cells as f64 * h;
                        let count =
                            Poisson::new(atom.rate * span).expect("positive rate").sample(&mut rng);
                        for _ in 0..count as u64 {
                            let u: f64 = rng.gen::<f64>() * span;
                            let cell = ((u / h) as usize).min(cells - 1);
                            inc[to_grid(side, cell)] += atom.size;
                        }
                    }
                }
            }
            Leaf::Stable { alpha, c, symmetric } => {
                let eps = opts
                    .stable_threshold
                    .unwrap_or_else(|| (0.1 * h.powf(1.0 / alpha)).clamp(1e-6, 1e-2));
                // Per-side intensity of jumps in (eps, 1].
                let side_rate = c * (eps.powf(-alpha) - 1.0) / alpha;
                let sides = if *symmetric { 2.0 } else { 1.0 };
                // Mean per unit time of the simulated (uncompensated) large
                // jumps; zero by symmetry in the symmetric case.
                if !symmetric {
                    let large_mean = if *alpha == 1.0 {
                        c * (1.0 / eps).ln()
                    } else {
                        c * (1.0 - eps.powf(1.0 - alpha)) / (1.0 - alpha)
                    };
                    drift -= large_mean;
                }
                // Variance per unit time of the compensated small jumps.
                let resid_var = sides * c * eps.powf(2.0 - alpha) / (2.0 - alpha);

                for (side, cells) in side_specs {
                    if cells == 0 {
                        continue;
                    }
                    let span = cells as f64 * h;
                    let mut jrng = child_rng(seed, &[side, tag::STABLE_JUMPS, ci]);
                    let count = Poisson::new(sides * side_rate * span)
                        .expect("positive rate")
                        .sample(&mut jrng);
                    let pow_lo = eps.powf(-alpha);
                    for _ in 0..count as u64 {
                        let u: f64 = jrng.gen::<f64>() * span;
                        let cell = ((u / h) as usize).min(cells - 1);
                        // Inverse transform on (eps, 1]: survival proportional
                        // to x^-alpha - 1.
                        let v: f64 = jrng.gen();
                        let size = (1.0 + v * (pow_lo - 1.0)).powf(-1.0 / alpha);
                        let signed = if *symmetric && jrng.gen::<bool>() { -size } else { size };
                        inc[to_grid(side, cell)] += signed;
                    }
                    if resid_var > 0.0 {
                        let sd = (resid_var * h).sqrt();
                        let mut rrng = child_rng(seed, &[side, tag::STABLE_RESIDUAL, ci]);
                        for u in 0..cells {
                            let z: f64 = StandardNormal.sample(&mut rrng);
                            inc[to_grid(side, u)] += sd * z;
                        }
                    }
                }
            }
        }
    }

    if drift != 0.0 {
        let dh = drift * h;
        for v in &mut inc {
            *v += dh;
        }
    }

    PathSample::from_increments(*grid, inc, seed).expect("lengths match by construction")
}

/// Splice a positive-side sample and an independent negative-side source
/// into one two-sided sample.
///
/// `pos` must live on `[0, t_max]` and `neg_source` on `[0, u_max]`; the
/// result lives on `[-u_max, t_max]`.  The negative side realizes
/// `t -> -L2((-t)-)` at grid resolution: the increment of the spliced path
/// over `[s_j, s_{j+1})` is the increment of `neg_source` over
/// `[-s_{j+1}, -s_j)`, so a single positive jump of `L2` at `u > 0` makes
/// the spliced path equal `-jump` on all nodes strictly left of `-u` and
/// `0` from the node at or right of `-u` on (left-limit convention).
pub fn splice_two_sided(pos: &PathSample, neg_source: &PathSample) -> Result<PathSample> {
    if pos.grid.r_min() != 0.0 || neg_source.grid.r_min() != 0.0 {
        return Err(Error::Precondition(
            "splice_two_sided expects one-sided samples starting at 0".to_string(),
        ));
    }
    if pos.grid.step() != neg_source.grid.step() {
        return Err(Error::Precondition(format!(
            "splice_two_sided: mismatched steps {} vs {}",
            pos.grid.step(),
            neg_source.grid.step()
        )));
    }
    let grid = IncrementGrid::new(-neg_source.grid.t_max(), pos.grid.t_max(), pos.grid.step())?;
    let k0 = grid.zero_index();
    let mut inc = vec![0.0f64; grid.n_cells()];
    for j in 0..k0 {
        inc[j] = neg_source.increments[k0 - 1 - j];
    }
    inc[k0..].copy_from_slice(&pos.increments);
    PathSample::from_increments(grid, inc, crate::rng::derive_seed(pos.seed, &[neg_source.seed]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn symmetric_unit_cpp() -> LevyModel {
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
        .unwrap()
    }

    fn symmetric_ts(alpha: f64, c: f64) -> LevyModel {
        LevyModel::new(
            0.0,
            0.0,
            JumpFamily::TruncatedStable { alpha, c, symmetric: true },
            true,
        )
        .unwrap()
    }

    #[test]
    fn brownian_model_has_unit_variance_rate() {
        let m = LevyModel::brownian(1.0).unwrap();
        assert_eq!(m.variance_rate(), 1.0);
        assert_eq!(m.mean_rate(), 0.0);
        assert!(m.is_symmetric());
    }

    #[test]
    fn truncated_stable_variance_rate_closed_form() {
        // 2 c / (2 - alpha) with alpha = 1, c = 1.
        let m = symmetric_ts(1.0, 1.0);
        assert_relative_eq!(m.variance_rate(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn parameter_validation_rejects_bad_models() {
        assert!(LevyModel::new(-1.0, 0.0, JumpFamily::None, true).is_err());
        assert!(LevyModel::new(
            0.0,
            0.0,
            JumpFamily::TruncatedStable { alpha: 2.0, c: 1.0, symmetric: true },
            true
        )
        .is_err());
        assert!(LevyModel::new(
            0.0,
            0.0,
            JumpFamily::TruncatedStable { alpha: 0.0, c: 1.0, symmetric: true },
            true
        )
        .is_err());
        assert!(LevyModel::new(
            0.0,
            0.0,
            JumpFamily::CompoundPoisson { atoms: vec![JumpAtom { size: 0.0, rate: 1.0 }] },
            true
        )
        .is_err());
        assert!(LevyModel::new(
            0.0,
            0.0,
            JumpFamily::CompoundPoisson { atoms: vec![JumpAtom { size: 1.0, rate: -1.0 }] },
            true
        )
        .is_err());
    }

    #[test]
    fn uncentered_subordinator_has_step_paths() {
        // Pure compound Poisson, not centered, gamma 0: paths are
        // nondecreasing step functions with unit jumps.
        let m = LevyModel::new(
            0.0,
            0.0,
            JumpFamily::CompoundPoisson { atoms: vec![JumpAtom { size: 1.0, rate: 2.0 }] },
            false,
        )
        .unwrap();
        assert_relative_eq!(m.mean_rate(), 2.0, max_relative = 1e-15);
        let grid = IncrementGrid::new(0.0, 64.0, 0.25).unwrap();
        let path = sample_increments(&m, &grid, 7);
        for &dx in &path.increments {
            assert!(dx == 0.0 || (dx / 1.0).fract() == 0.0, "non-unit increment {dx}");
            assert!(dx >= 0.0);
        }
        assert!(path.values.windows(2).all(|w| w[1] >= w[0]));
        // At rate 2 over span 64 we expect around 128 jumps; at least one.
        assert!(path.nnz() > 0);
    }

    #[test]
    fn tail_mass_closed_forms() {
        let cpp = symmetric_unit_cpp();
        assert_eq!(cpp.tail_mass(0.5).unwrap(), 0.5);
        assert_eq!(cpp.tail_mass(1.0).unwrap(), 0.5);
        assert_eq!(cpp.tail_mass(1.5).unwrap(), 0.0);

        let ts = symmetric_ts(1.0, 1.0);
        assert_relative_eq!(ts.tail_mass(0.5).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(ts.tail_mass(2.0).unwrap(), 0.0);
        assert!(ts.tail_mass(0.0).is_err());
        assert!(ts.tail_mass(-1.0).is_err());
    }

    #[test]
    fn tail_mass_is_nonincreasing_and_vanishes_past_support() {
        let m = LevyModel::new(
            0.0,
            0.0,
            JumpFamily::Mixture(vec![
                JumpFamily::CompoundPoisson {
                    atoms: vec![
                        JumpAtom { size: 0.4, rate: 0.3 },
                        JumpAtom { size: -0.4, rate: 0.3 },
                    ],
                },
                JumpFamily::TruncatedStable { alpha: 0.7, c: 0.5, symmetric: true },
            ]),
            true,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for i in 1..200 {
            let x = i as f64 * 0.01;
            let t = m.tail_mass(x).unwrap();
            assert!(t <= last + 1e-15);
            last = t;
        }
        // Ten times the largest support point: exactly zero.
        assert_eq!(m.tail_mass(10.0 * m.max_jump()).unwrap(), 0.0);
    }

    #[test]
    fn abs_moment_closed_forms_and_divergence() {
        let ts = symmetric_ts(1.0, 1.0);
        // 2 * int_0^1 x^(4/3 - 2) dx = 2 * 3 = 6.
        assert_relative_eq!(
            ts.abs_moment(4.0 / 3.0, 0.0, f64::INFINITY).unwrap(),
            6.0,
            max_relative = 1e-12
        );
        // Divergent at the origin once p <= alpha.
        let ts15 = symmetric_ts(1.5, 1.0);
        assert_eq!(ts15.abs_moment(4.0 / 3.0, 0.0, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(ts15.abs_moment(1.5, 0.0, 1.0).unwrap(), f64::INFINITY);
        // Away from the origin everything is finite; log form at p = alpha.
        assert_relative_eq!(
            ts15.abs_moment(1.5, 0.25, 1.0).unwrap(),
            2.0 * (1.0f64 / 0.25).ln(),
            max_relative = 1e-12
        );
        // Compound Poisson: plain weighted power sums.
        let cpp = symmetric_unit_cpp();
        assert_relative_eq!(
            cpp.abs_moment(2.0, 0.0, f64::INFINITY).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        assert_eq!(cpp.abs_moment(2.0, 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn abs_moment_nonincreasing_in_p_for_subunit_jumps() {
        // All jump sizes in (0, 1]: |x|^p is nonincreasing in p pointwise.
        let m = LevyModel::new(
            0.0,
            0.0,
            JumpFamily::Mixture(vec![
                JumpFamily::CompoundPoisson {
                    atoms: vec![
                        JumpAtom { size: 0.9, rate: 0.2 },
                        JumpAtom { size: -0.9, rate: 0.2 },
                    ],
                },
                JumpFamily::TruncatedStable { alpha: 0.8, c: 1.0, symmetric: true },
            ]),
            true,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for i in 0..40 {
            let p = 0.85 + i as f64 * 0.05;
            let v = m.abs_moment(p, 0.0, 1.0).unwrap();
            assert!(v <= last * (1.0 + 1e-13) || (v.is_infinite() && last.is_infinite()));
            last = v;
        }
    }

    #[test]
    fn pos_moment_is_one_side_of_a_symmetric_moment() {
        let ts = symmetric_ts(1.0, 1.0);
        let both = ts.abs_moment(1.5, 0.1, 1.0).unwrap();
        let one = ts.pos_moment(1.5, 0.1, 1.0).unwrap();
        assert_relative_eq!(both, 2.0 * one, max_relative = 1e-14);
    }

    #[test]
    fn model_json_round_trip_is_lossless() {
        let m = LevyModel::new(
            0.5,
            0.25,
            JumpFamily::Mixture(vec![
                JumpFamily::CompoundPoisson {
                    atoms: vec![JumpAtom { size: 1.0, rate: 0.5 }],
                },
                JumpFamily::TruncatedStable { alpha: 1.25, c: 0.75, symmetric: true },
            ]),
            false,
        )
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: LevyModel = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);

        // Documented wire format parses.
        let wire = r#"{"sigma": 1.0, "mean_zero": true,
            "jumps": [{"type": "compound_poisson",
                       "atoms": [{"size": 1.0, "rate": 0.5},
                                 {"size": -1.0, "rate": 0.5}]}]}"#;
        let m2: LevyModel = serde_json::from_str(wire).unwrap();
        assert_eq!(m2.sigma(), 1.0);
        assert!(m2.centered());

        // Invalid parameters are rejected at parse time.
        let bad = r#"{"sigma": -1.0, "mean_zero": true, "jumps": []}"#;
        assert!(serde_json::from_str::<LevyModel>(bad).is_err());
    }

    #[test]
    fn grid_validation_and_node_lookup() {
        let g = IncrementGrid::new(-2.0, 1.0, 0.25).unwrap();
        assert_eq!(g.n_cells(), 12);
        assert_eq!(g.zero_index(), 8);
        assert_eq!(g.node(8), 0.0);
        assert_eq!(g.index_of(0.75).unwrap(), 11);
        assert!(g.index_of(0.3).is_err());
        assert!(IncrementGrid::new(-1.0, 1.0, 0.3).is_err());
        assert!(IncrementGrid::new(0.5, 1.0, 0.25).is_err());
        assert!(IncrementGrid::new(-1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let m = LevyModel::new(
            0.25,
            0.0,
            JumpFamily::Mixture(vec![
                JumpFamily::CompoundPoisson {
                    atoms: vec![
                        JumpAtom { size: 0.5, rate: 1.0 },
                        JumpAtom { size: -0.5, rate: 1.0 },
                    ],
                },
                JumpFamily::TruncatedStable { alpha: 0.6, c: 0.3, symmetric: true },
            ]),
            true,
        )
        .unwrap();
        let grid = IncrementGrid::new(-2.0, 2.0, 0.125).unwrap();
        let a = sample_increments(&m, &grid, 42);
        let b = sample_increments(&m, &grid, 42);
        assert_eq!(a, b);
        let c = sample_increments(&m, &grid, 43);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn sides_use_independent_streams() {
        // Extending the grid to the left must not change the increments on
        // the positive side (they come from the positive-side streams).
        let m = symmetric_unit_cpp();
        let short = IncrementGrid::new(-1.0, 2.0, 0.25).unwrap();
        let long = IncrementGrid::new(-4.0, 2.0, 0.25).unwrap();
        let a = sample_increments(&m, &short, 11);
        let b = sample_increments(&m, &long, 11);
        let (ka, kb) = (short.zero_index(), long.zero_index());
        assert_eq!(a.increments[ka..], b.increments[kb..]);
        // And the shared part of the negative side agrees too (cells are
        // filled outward from zero).
        for u in 0..ka {
            assert_eq!(a.increments[ka - 1 - u], b.increments[kb - 1 - u]);
        }
    }

    #[test]
    fn sample_mean_and_variance_match_model_rates() {
        // Unit-time increments; mean within 5 standard errors, variance
        // within 5 standard errors of the model variance rate.
        let cases: Vec<(LevyModel, usize)> = vec![
            (
                LevyModel::new(
                    1.0,
                    0.0,
                    JumpFamily::CompoundPoisson {
                        atoms: vec![
                            JumpAtom { size: 1.0, rate: 0.5 },
                            JumpAtom { size: -1.0, rate: 0.5 },
                        ],
                    },
                    true,
                )
                .unwrap(),
                100_000,
            ),
            (
                LevyModel::new(
                    0.0,
                    0.0,
                    JumpFamily::CompoundPoisson { atoms: vec![JumpAtom { size: 1.0, rate: 2.0 }] },
                    true,
                )
                .unwrap(),
                100_000,
            ),
            (symmetric_ts(0.5, 1.0), 100_000),
            (
                LevyModel::new(
                    0.0,
                    0.0,
                    JumpFamily::TruncatedStable { alpha: 1.3, c: 1.0, symmetric: false },
                    true,
                )
                .unwrap(),
                10_000,
            ),
        ];
        for (i, (m, n)) in cases.iter().enumerate() {
            let grid = IncrementGrid::new(0.0, *n as f64, 1.0).unwrap();
            let path = sample_increments(m, &grid, 1000 + i as u64);
            let (mean, se) = crate::stats::mean_stderr(&path.increments);
            assert!(
                (mean - m.mean_rate()).abs() <= 5.0 * se.max(1e-12),
                "case {i}: mean {mean} vs rate {} (se {se})",
                m.mean_rate()
            );
            let var = crate::stats::sample_variance(&path.increments);
            // Standard error of the sample variance via the fourth moment.
            let m4 = path
                .increments
                .iter()
                .map(|x| {
                    let d = x - mean;
                    d * d * d * d
                })
                .sum::<f64>()
                / (*n as f64);
            let se_var = ((m4 - var * var).max(0.0) / *n as f64).sqrt();
            assert!(
                (var - m.variance_rate()).abs() <= 5.0 * se_var.max(1e-12),
                "case {i}: variance {var} vs rate {} (se {se_var})",
                m.variance_rate()
            );
        }
    }

    #[test]
    fn splice_places_reversed_negative_side() {
        // neg source: single +1 jump in cell [1, 2) of a [0, 4] grid.
        let g1 = IncrementGrid::new(0.0, 4.0, 1.0).unwrap();
        let mut neg_inc = vec![0.0; 4];
        neg_inc[1] = 1.0;
        let neg = PathSample::from_increments(g1, neg_inc, 1).unwrap();
        // pos side: single +2 jump in cell [0, 1) of a [0, 2] grid.
        let g2 = IncrementGrid::new(0.0, 2.0, 1.0).unwrap();
        let pos = PathSample::from_increments(g2, vec![2.0, 0.0], 2).unwrap();

        let s = splice_two_sided(&pos, &neg).unwrap();
        assert_eq!(s.grid.r_min(), -4.0);
        assert_eq!(s.grid.t_max(), 2.0);
        // Nodes: -4 -3 -2 -1 0 1 2.  The jump of the source at u in [1,2)
        // shows up on [-2, -1): value -1 strictly left of it, 0 after.
        assert_eq!(s.values, vec![-1.0, -1.0, -1.0, 0.0, 0.0, 2.0, 2.0]);
        // Prefix sums telescope: L(s_k) equals the sum of increments from 0.
        let k0 = s.grid.zero_index();
        let mut acc = 0.0;
        for k in k0..s.grid.n_cells() {
            acc += s.increments[k];
            assert_eq!(s.values[k + 1], acc);
        }
    }

    #[test]
    fn splice_rejects_mismatched_inputs() {
        let g1 = IncrementGrid::new(0.0, 1.0, 0.5).unwrap();
        let g2 = IncrementGrid::new(0.0, 1.0, 0.25).unwrap();
        let a = PathSample::from_increments(g1, vec![0.0; 2], 0).unwrap();
        let b = PathSample::from_increments(g2, vec![0.0; 4], 0).unwrap();
        assert!(splice_two_sided(&a, &b).is_err());
        let g3 = IncrementGrid::new(-0.5, 0.5, 0.5).unwrap();
        let c = PathSample::from_increments(g3, vec![0.0; 2], 0).unwrap();
        assert!(splice_two_sided(&c, &a).is_err());
    }

    #[test]
    fn scaling_atom_sizes_by_two_scales_the_path_exactly() {
        let base = symmetric_unit_cpp();
        let scaled = LevyModel::new(
            0.0,
            0.0,
            JumpFamily::CompoundPoisson {
                atoms: vec![
                    JumpAtom { size: 2.0, rate: 0.5 },
                    JumpAtom { size: -2.0, rate: 0.5 },
                ],
            },
            true,
        )
        .unwrap();
        let grid = IncrementGrid::new(-8.0, 8.0, 0.125).unwrap();
        let a = sample_increments(&base, &grid, 5);
        let b = sample_increments(&scaled, &grid, 5);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(2.0 * x, *y);
        }
    }
}
