//! Exponential-dichotomy detection and related hyperbolicity diagnostics.
//!
//! The detector builds candidate stable/unstable subspaces from singular
//! vectors of probe-horizon transition products, verifies equivariance, and
//! fits the contraction/expansion rates by log-linear regression. On top of
//! it sit the transversality check at index 0, a bounded-response probe, the
//! 1-D window-product trichotomy, and the orthogonal reduction that splits a
//! cocycle along a normalized direction sequence.

use nalgebra::{DMatrix, DVector};

use crate::cocycle::{estimate_gain, operator_norm, Cocycle};
use crate::maps::SmoothMap;
use crate::space::Pt;
use crate::stats::fit_line;
use crate::{Error, Result};

/// Which half of the index axis a splitting refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    Forward,
    Backward,
}

/// Detection thresholds. The defaults separate the catalog's true positives
/// and negatives by about two orders of magnitude.
#[derive(Clone, Copy, Debug)]
pub struct DetectParams {
    /// Probe horizon T for the transition products.
    pub probe_horizon: usize,
    /// Reject fitted rates above this.
    pub max_rate: f64,
    /// Reject log-scale regression residuals above this.
    pub max_fit_residual: f64,
    /// Equivariance tolerance (principal angle, radians).
    pub equivariance_tol: f64,
    /// Reject splittings whose combined basis is worse conditioned.
    pub max_basis_condition: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            probe_horizon: 30,
            max_rate: 0.95,
            max_fit_residual: 0.1,
            equivariance_tol: 1e-6,
            max_basis_condition: 1e8,
        }
    }
}

/// An exponential-dichotomy splitting with fitted constants.
#[derive(Clone, Debug)]
pub struct DichotomySplitting {
    pub half: Half,
    /// Fiber index of the first basis entry.
    pub k_lo: i64,
    /// Orthonormal stable bases per fiber index (may have zero columns).
    pub stable: Vec<DMatrix<f64>>,
    /// Orthonormal unstable bases per fiber index.
    pub unstable: Vec<DMatrix<f64>>,
    /// Fitted rate λ ∈ (0, 1): contraction of the stable side and of the
    /// inverse on the unstable side.
    pub rate: f64,
    /// Fitted prefactor C ≥ 1.
    pub prefactor: f64,
    /// Sup of the projection norms onto either subbundle.
    pub projection_bound: f64,
}

impl DichotomySplitting {
    pub fn stable_dim(&self) -> usize {
        self.stable[0].ncols()
    }

    pub fn unstable_dim(&self) -> usize {
        self.unstable[0].ncols()
    }

    pub fn basis_at(&self, k: i64, unstable: bool) -> &DMatrix<f64> {
        let idx = (k - self.k_lo) as usize;
        if unstable {
            &self.unstable[idx]
        } else {
            &self.stable[idx]
        }
    }
}

/// sin of the largest principal angle between equal-dimension subspaces
/// spanned by orthonormal columns.
fn subspace_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    // ‖(I − B Bᵀ) A‖ = sin of the largest principal angle.
    let proj = b * b.transpose();
    let rest = a - &proj * a;
    operator_norm(&rest)
}

fn orthonormalize(cols: DMatrix<f64>) -> DMatrix<f64> {
    if cols.ncols() == 0 {
        return cols;
    }
    let ncols = cols.ncols();
    let qr = cols.qr();
    let q = qr.q();
    q.columns(0, q.ncols().min(ncols)).into_owned()
}

/// One side of a candidate splitting: orthonormal bases per fiber plus the
/// fitted rate data. Stable bundles come from trailing right-singular
/// directions of future transition windows; unstable bundles are the stable
/// bundles of the time-reversed cocycle.
struct Bundle {
    bases: Vec<DMatrix<f64>>,
    /// Whether the basis at a fiber came from a full probe window.
    full: Vec<bool>,
    dim: usize,
    /// Fitted one-step contraction rate along the bundle (0 if empty).
    rate: f64,
    prefactor: f64,
    fit_residual: f64,
}

/// The time-reversed cocycle: step j of the reversal applies the inverse of
/// the original step k_max − 1 − (j − k_min').
fn reversed(cocycle: &Cocycle) -> Result<Cocycle> {
    let mut mats = Vec::with_capacity(cocycle.len());
    let mut k = cocycle.k_max() - 1;
    while k >= cocycle.k_min() {
        mats.push(cocycle.inv(k).clone());
        k -= 1;
    }
    Cocycle::new(cocycle.dim(), -cocycle.k_max(), mats)
}

const MIN_PROBE: usize = 6;

/// Build the contracting bundle from trailing right-singular directions of
/// the forward transition windows. Returns `None` when the split dimension
/// is inconsistent across full windows or a rate fit degenerates.
fn stable_bundle(cocycle: &Cocycle, params: &DetectParams) -> Result<Option<Bundle>> {
    let t = params.probe_horizon;
    let m = cocycle.dim();
    let k_lo = cocycle.k_min();
    let k_hi = cocycle.k_max();

    // Split dimension from the full windows.
    let mut ds: Option<usize> = None;
    let mut k = k_lo;
    while k + (t as i64) <= k_hi {
        let phi = cocycle.transition(k, t)?;
        let svd = phi.svd(false, false);
        let count = svd.singular_values.iter().filter(|&&s| s <= 1.0).count();
        match ds {
            None => ds = Some(count),
            Some(d) if d != count => return Ok(None),
            _ => {}
        }
        k += 4_i64;
    }
    let ds = match ds {
        Some(d) => d,
        None => return Ok(None),
    };

    let mut bases: Vec<DMatrix<f64>> = Vec::with_capacity(cocycle.len() + 1);
    let mut full: Vec<bool> = Vec::with_capacity(cocycle.len() + 1);
    let mut k = k_lo;
    while k <= k_hi {
        let w = t.min((k_hi - k) as usize);
        if w >= MIN_PROBE && ds > 0 {
            let phi = cocycle.transition(k, w)?;
            let svd = phi.svd(true, true);
            let v_t = svd.v_t.as_ref().expect("svd with vectors");
            let mut cols = DMatrix::zeros(m, ds);
            for j in 0..ds {
                for i in 0..m {
                    cols[(i, j)] = v_t[(m - ds + j, i)];
                }
            }
            bases.push(cols);
            full.push(w == t);
        } else if ds == 0 {
            bases.push(DMatrix::zeros(m, 0));
            full.push(true);
        } else {
            // Too close to the window end for a probe: push the previous
            // basis forward one step (at most MIN_PROBE times).
            let prev = bases.last().expect("window length >= 2t").clone();
            bases.push(orthonormalize(cocycle.mat(k - 1) * prev));
            full.push(false);
        }
        k += 1;
    }

    // Rate fit with per-step reprojection: following a contracting direction
    // forward otherwise drowns in rounding-injected expanding components
    // after a few dozen steps.
    let mut rate = 0.0;
    let mut prefactor = 1.0f64;
    let mut fit_residual = 0.0;
    if ds > 0 {
        let anchors = (cocycle.len() - t) as i64;
        let stride = ((anchors as usize / 16).max(1)) as i64;
        let mut ls: Vec<f64> = Vec::new();
        let mut logs: Vec<f64> = Vec::new();
        let mut k = k_lo;
        while k <= k_lo + anchors {
            let idx = (k - k_lo) as usize;
            for col in 0..ds {
                let mut v: DVector<f64> = bases[idx].column(col).into_owned();
                let mut log_norm = 0.0f64;
                for l in 1..=t {
                    v = cocycle.mat(k + l as i64 - 1) * v;
                    let q = &bases[idx + l];
                    v = q * (q.transpose() * &v);
                    let n = v.norm();
                    if !(n > 0.0) || !n.is_finite() {
                        return Ok(None);
                    }
                    log_norm += n.ln();
                    ls.push(l as f64);
                    logs.push(log_norm);
                    v /= n;
                }
            }
            k += stride;
        }
        let fit = match fit_line(&ls, &logs) {
            Some(f) => f,
            None => return Ok(None),
        };
        rate = fit.slope.exp();
        fit_residual = fit.rms_residual;
        for (l, lg) in ls.iter().zip(&logs) {
            let dev = lg - fit.slope * l;
            prefactor = prefactor.max(dev.exp()).max((-dev).exp());
        }
    }

    Ok(Some(Bundle {
        bases,
        full,
        dim: ds,
        rate,
        prefactor,
        fit_residual,
    }))
}

/// Detect an exponential dichotomy over the full window of `cocycle`.
///
/// Returns `Ok(None)` when no splitting with an acceptable rate fit exists
/// (for example for the identity cocycle).
pub fn detect(
    cocycle: &Cocycle,
    half: Half,
    params: &DetectParams,
) -> Result<Option<DichotomySplitting>> {
    let t = params.probe_horizon;
    let len = cocycle.len();
    if len < 2 * t {
        return Err(Error::WindowTooShort {
            need: 2 * t,
            have: len,
        });
    }
    let m = cocycle.dim();
    let k_lo = cocycle.k_min();
    let k_hi = cocycle.k_max();

    let s_bundle = match stable_bundle(cocycle, params)? {
        Some(b) => b,
        None => return Ok(None),
    };
    let rev = reversed(cocycle)?;
    let u_rev = match stable_bundle(&rev, params)? {
        Some(b) => b,
        None => return Ok(None),
    };
    // Map the reversed bundle back: reversed fiber j is original fiber −j.
    let n_fibers = cocycle.len() + 1;
    let mut u_bases: Vec<DMatrix<f64>> = Vec::with_capacity(n_fibers);
    let mut u_full: Vec<bool> = Vec::with_capacity(n_fibers);
    for i in 0..n_fibers {
        u_bases.push(u_rev.bases[n_fibers - 1 - i].clone());
        u_full.push(u_rev.full[n_fibers - 1 - i]);
    }
    let ds = s_bundle.dim;
    let du = u_rev.dim;
    if ds + du != m {
        return Ok(None);
    }

    // Equivariance on fibers whose bases came from full probe windows.
    for (bases, full) in [(&s_bundle.bases, &s_bundle.full), (&u_bases, &u_full)] {
        if bases[0].ncols() == 0 {
            continue;
        }
        for i in 0..cocycle.len() {
            if !(full[i] && full[i + 1]) {
                continue;
            }
            let a = cocycle.mat(k_lo + i as i64);
            let pushed = orthonormalize(a * &bases[i]);
            let gap = subspace_gap(&pushed, &bases[i + 1]);
            if gap > params.equivariance_tol {
                return Ok(None);
            }
        }
    }

    // Combined rate and residual gates. The reversed-side fit measures the
    // contraction of the inverse along the unstable bundle.
    let mut rate = 0.0f64;
    let mut prefactor = 1.0f64;
    for b in [&s_bundle, &u_rev] {
        if b.dim == 0 {
            continue;
        }
        if b.fit_residual > params.max_fit_residual {
            return Ok(None);
        }
        rate = rate.max(b.rate);
        prefactor = prefactor.max(b.prefactor);
    }
    if !(rate > 0.0) || rate >= params.max_rate {
        return Ok(None);
    }

    // Projection bound and basis conditioning.
    let mut projection_bound: f64 = if ds == 0 || du == 0 { 1.0 } else { 0.0 };
    if ds > 0 && du > 0 {
        for (i, (qs, qu)) in s_bundle.bases.iter().zip(&u_bases).enumerate() {
            let _ = i;
            let mut combined = DMatrix::zeros(m, m);
            combined.columns_mut(0, ds).copy_from(qs);
            combined.columns_mut(ds, du).copy_from(qu);
            let svd = combined.clone().svd(false, false);
            let smax = svd.singular_values[0];
            let smin = svd.singular_values[svd.singular_values.len() - 1];
            if !(smin > 0.0) || smax / smin > params.max_basis_condition {
                return Ok(None);
            }
            let inv = combined
                .try_inverse()
                .ok_or_else(|| Error::Singular("splitting basis not invertible".into()))?;
            let ps = qs * inv.rows(0, ds);
            let pu = qu * inv.rows(ds, du);
            projection_bound = projection_bound
                .max(operator_norm(&ps))
                .max(operator_norm(&pu));
        }
    }
    let _ = k_hi;

    Ok(Some(DichotomySplitting {
        half,
        k_lo,
        stable: s_bundle.bases,
        unstable: u_bases,
        rate,
        prefactor,
        projection_bound,
    }))
}

/// Slice the cocycle around index 0 and detect on the requested half.
pub fn detect_half(
    cocycle: &Cocycle,
    half: Half,
    params: &DetectParams,
) -> Result<Option<DichotomySplitting>> {
    let sliced = match half {
        Half::Forward => cocycle.slice(0.max(cocycle.k_min()), cocycle.k_max())?,
        Half::Backward => cocycle.slice(cocycle.k_min(), 0.min(cocycle.k_max()))?,
    };
    detect(&sliced, half, params)
}

/// Result of the transversality check between the forward-stable and
/// backward-unstable spaces at index 0.
#[derive(Clone, Debug)]
pub struct TransversalityReport {
    /// Smallest principal angle between the two subspaces (radians);
    /// π/2 when either subspace is trivial.
    pub angle: f64,
    /// Smallest singular value of the combined basis.
    pub min_singular: f64,
    /// m − rank of the combined basis.
    pub defect_dim: usize,
    pub pass: bool,
}

/// Check that the forward-stable and backward-unstable spaces at index 0
/// jointly span the fiber.
pub fn transversality_check(
    forward: &DichotomySplitting,
    backward: &DichotomySplitting,
) -> Result<TransversalityReport> {
    if forward.half != Half::Forward || backward.half != Half::Backward {
        return Err(Error::InvalidParams(
            "transversality expects a forward and a backward splitting".into(),
        ));
    }
    let qs = forward.basis_at(0, false);
    let qu = backward.basis_at(0, true);
    let m = qs.nrows();
    let ds = qs.ncols();
    let du = qu.ncols();
    let mut combined = DMatrix::zeros(m, ds + du);
    if ds > 0 {
        combined.columns_mut(0, ds).copy_from(qs);
    }
    if du > 0 {
        combined.columns_mut(ds, du).copy_from(qu);
    }
    let (min_singular, rank) = if ds + du == 0 {
        (0.0, 0)
    } else {
        let svd = combined.svd(false, false);
        let smin = svd.singular_values[svd.singular_values.len() - 1];
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-6).count();
        (smin, rank)
    };
    let angle = if ds == 0 || du == 0 {
        std::f64::consts::FRAC_PI_2
    } else {
        let overlap = operator_norm(&(qs.transpose() * qu));
        overlap.clamp(-1.0, 1.0).acos()
    };
    let defect_dim = m.saturating_sub(rank.min(m));
    let pass = rank >= m && min_singular > 1e-6;
    Ok(TransversalityReport {
        angle,
        min_singular,
        defect_dim,
        pass,
    })
}

/// Index span a response probe runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Span {
    /// Windows anchored at index 0 growing forward.
    Forward,
    /// Windows ending at index 0 growing backward.
    Backward,
    /// Windows centered at index 0. This is the span that reveals failures
    /// of the index-0 transversality: each one-sided problem may be tame
    /// while the straddling windows force unbounded responses.
    Centered,
}

/// Growth of the sampled worst-case response with window length.
#[derive(Clone, Debug)]
pub struct ResponseGrowth {
    /// (window length, sampled gain).
    pub per_window: Vec<(usize, f64)>,
    /// Gain at the largest window.
    pub l_hat: f64,
    /// Log-log slope of gain against window length.
    pub slope: f64,
}

/// Probe whether unit forcings admit uniformly bounded responses on the
/// given span: the log-log slope stays near zero exactly when they do.
pub fn bounded_response_check(
    cocycle: &Cocycle,
    span: Span,
    trials: usize,
    seed: u64,
) -> Result<ResponseGrowth> {
    let (lo, hi) = match span {
        Span::Forward => (0.max(cocycle.k_min()), cocycle.k_max()),
        Span::Backward => (cocycle.k_min(), 0.min(cocycle.k_max())),
        Span::Centered => (cocycle.k_min(), cocycle.k_max()),
    };
    let avail = (hi - lo) as usize;
    if avail < 8 {
        return Err(Error::WindowTooShort {
            need: 8,
            have: avail,
        });
    }
    let mut lengths = Vec::new();
    let mut n = 8usize;
    while n <= avail {
        lengths.push(n);
        n *= 2;
    }
    if *lengths.last().unwrap() != avail {
        lengths.push(avail);
    }
    let mut per_window = Vec::with_capacity(lengths.len());
    for &n in &lengths {
        let start = match span {
            Span::Forward => lo,
            Span::Backward => hi - n as i64,
            Span::Centered => (-(n as i64) / 2).max(lo).min(hi - n as i64),
        };
        let gain = estimate_gain(cocycle, start, n, trials, seed)?.gain;
        per_window.push((n, gain));
    }
    let xs: Vec<f64> = per_window.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = per_window.iter().map(|(_, g)| *g).collect();
    let slope = crate::stats::fit_power_law(&xs, &ys)
        .map(|f| f.slope)
        .unwrap_or(f64::NAN);
    Ok(ResponseGrowth {
        l_hat: per_window.last().unwrap().1,
        per_window,
        slope,
    })
}

/// Classification of the 1-D window products over a scan.
#[derive(Clone, Debug, PartialEq)]
pub enum TrichotomyCase {
    /// Every window of the given length multiplies lengths by more than 2.
    Expanding,
    /// Every window contracts below 1/2.
    Contracting,
    /// Expansion strictly before contraction, with witness indices.
    Mixed { expand_at: i64, contract_at: i64 },
    /// The expansion-or-later-contraction alternative fails somewhere; the
    /// cocycle cannot have sublinear response growth at this window length.
    NoTrichotomy { fail_at: Option<i64> },
}

/// Scan all windows of length `n` of a 1-D cocycle and classify them:
/// all expanding, all contracting, or mixed with expansion preceding
/// contraction. When some window neither expands above 2 nor is followed by
/// a window contracting below 1/2, no trichotomy holds at this length.
pub fn trichotomy_1d(cocycle: &Cocycle, n: usize) -> Result<TrichotomyCase> {
    if cocycle.dim() != 1 {
        return Err(Error::Unsupported("trichotomy needs a 1-D cocycle".into()));
    }
    if n == 0 || cocycle.len() < n {
        return Err(Error::WindowTooShort {
            need: n.max(1),
            have: cocycle.len(),
        });
    }
    let k_last = cocycle.k_max() - n as i64;
    let mut expand_at: Vec<i64> = Vec::new();
    let mut contract_at: Vec<i64> = Vec::new();
    let mut k = cocycle.k_min();
    while k <= k_last {
        let p = cocycle.window_product(k, n)?;
        if p > 2.0 {
            expand_at.push(k);
        }
        if p < 0.5 {
            contract_at.push(k);
        }
        k += 1;
    }
    let total = (k_last - cocycle.k_min() + 1) as usize;
    if expand_at.len() == total {
        return Ok(TrichotomyCase::Expanding);
    }
    if contract_at.len() == total {
        return Ok(TrichotomyCase::Contracting);
    }
    // Expansion-or-later-contraction alternative on the checkable range.
    let mut k = cocycle.k_min();
    while k + 2 * n as i64 <= cocycle.k_max() {
        let here = cocycle.window_product(k, n)?;
        let next = cocycle.window_product(k + n as i64, n)?;
        if !(here > 2.0 || next < 0.5) {
            return Ok(TrichotomyCase::NoTrichotomy { fail_at: Some(k) });
        }
        k += 1;
    }
    match (expand_at.first(), contract_at.last()) {
        (Some(&e), Some(&c)) if e < c => Ok(TrichotomyCase::Mixed {
            expand_at: e,
            contract_at: c,
        }),
        _ => Ok(TrichotomyCase::NoTrichotomy { fail_at: None }),
    }
}

/// The guaranteed window-expansion lower bound
/// G(n) = (1 / (L (2n+1)^γ)) · (1 + 1 / (L (2n+1)^γ))^(n−2),
/// evaluated in log space. It diverges as n → ∞ exactly when γ < 1.
pub fn product_growth_bound(scale: f64, exponent: f64, n: u64) -> Result<f64> {
    Ok(log_product_growth_bound(scale, exponent, n)?.exp())
}

fn log_product_growth_bound(scale: f64, exponent: f64, n: u64) -> Result<f64> {
    if !(scale > 0.0) || !(exponent > 0.0) || n < 2 {
        return Err(Error::InvalidParams(
            "growth bound needs scale > 0, exponent > 0, n >= 2".into(),
        ));
    }
    let b = scale * ((2 * n + 1) as f64).powf(exponent);
    Ok(-(b.ln()) + (n as f64 - 2.0) * (1.0 / b).ln_1p())
}

/// Smallest window length whose growth bound exceeds `threshold`, or `None`
/// up to `n_max`. Finite for exponents below 1.
pub fn first_window_above(
    scale: f64,
    exponent: f64,
    threshold: f64,
    n_max: u64,
) -> Result<Option<u64>> {
    let log_thr = threshold.ln();
    let mut n = 2u64;
    // Linear scan at small n (the bound is not monotone from the start),
    // then a doubling scan with bisection refinement.
    while n <= n_max.min(100_000) {
        if log_product_growth_bound(scale, exponent, n)? > log_thr {
            return Ok(Some(n));
        }
        n += 1;
    }
    let mut lo = n - 1;
    let mut hi = lo.saturating_mul(2);
    while hi <= n_max {
        if log_product_growth_bound(scale, exponent, hi)? > log_thr {
            let mut a = lo;
            let mut b = hi;
            while b - a > 1 {
                let mid = a + (b - a) / 2;
                if log_product_growth_bound(scale, exponent, mid)? > log_thr {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(Some(b));
        }
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    Ok(None)
}

/// A cocycle split along a normalized direction sequence: the scalar stretch
/// along the directions, the reduced cocycle on the orthogonal complements,
/// and the coupling row mixing the complement back into the direction line.
#[derive(Clone, Debug)]
pub struct OrthogonalReduction {
    /// Unit directions e_k per fiber index.
    pub directions: Vec<DVector<f64>>,
    /// λ_k = |A_k e_k| per step.
    pub stretch: Vec<f64>,
    /// Orthonormal complement bases per fiber index (m×(m−1)).
    pub complement: Vec<DMatrix<f64>>,
    /// The reduced (m−1)-dimensional cocycle B_k in the complement bases.
    pub reduced: Cocycle,
    /// Coupling rows D_k (1×(m−1)) per step.
    pub coupling: Vec<DMatrix<f64>>,
}

fn complement_basis(e: &DVector<f64>) -> DMatrix<f64> {
    let m = e.len();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m - 1);
    // Gram-Schmidt the coordinate axes against e.
    let mut axis = 0usize;
    while cols.len() < m - 1 && axis < m {
        let mut v = DVector::zeros(m);
        v[axis] = 1.0;
        v -= e * e.dot(&v);
        for c in &cols {
            let cv: &DVector<f64> = c;
            v -= cv * cv.dot(&v);
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / n);
        }
        axis += 1;
    }
    let mut out = DMatrix::zeros(m, m - 1);
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).copy_from(c);
    }
    out
}

/// Split the cocycle along the direction sequence generated from `e0` at
/// index 0 by forward normalization and backward normalized inverses.
pub fn orthogonal_reduction(cocycle: &Cocycle, e0: &DVector<f64>) -> Result<OrthogonalReduction> {
    let m = cocycle.dim();
    if m < 2 {
        return Err(Error::Unsupported(
            "the orthogonal reduction needs dimension at least 2".into(),
        ));
    }
    if (e0.norm() - 1.0).abs() > 1e-9 || e0.len() != m {
        return Err(Error::InvalidParams("e0 must be a unit vector".into()));
    }
    if !(cocycle.k_min() <= 0 && cocycle.k_max() >= 0) {
        return Err(Error::InvalidParams(
            "the reduction anchors the direction sequence at index 0".into(),
        ));
    }
    let len = cocycle.len();
    let mut directions: Vec<DVector<f64>> = vec![DVector::zeros(m); len + 1];
    let at = |k: i64| (k - cocycle.k_min()) as usize;
    directions[at(0)] = e0.clone();
    let mut k = 0i64;
    while k < cocycle.k_max() {
        let v = cocycle.mat(k) * &directions[at(k)];
        directions[at(k + 1)] = &v / v.norm();
        k += 1;
    }
    let mut k = 0i64;
    while k > cocycle.k_min() {
        let v = cocycle.inv(k - 1) * &directions[at(k)];
        directions[at(k - 1)] = &v / v.norm();
        k -= 1;
    }

    let complement: Vec<DMatrix<f64>> = directions.iter().map(complement_basis).collect();
    let mut stretch = Vec::with_capacity(len);
    let mut reduced_mats = Vec::with_capacity(len);
    let mut coupling = Vec::with_capacity(len);
    let mut k = cocycle.k_min();
    while k < cocycle.k_max() {
        let a = cocycle.mat(k);
        let e_next = &directions[at(k + 1)];
        let s_here = &complement[at(k)];
        let s_next = &complement[at(k + 1)];
        stretch.push((a * &directions[at(k)]).norm());
        reduced_mats.push(s_next.transpose() * a * s_here);
        let row = e_next.transpose() * a * s_here;
        coupling.push(DMatrix::from_fn(1, row.ncols(), |_, j| row[(0, j)]));
        k += 1;
    }
    let reduced = Cocycle::new(m - 1, cocycle.k_min(), reduced_mats)?;
    Ok(OrthogonalReduction {
        directions,
        stretch,
        complement,
        reduced,
        coupling,
    })
}

impl OrthogonalReduction {
    /// Split a full-space vector at fiber k into (complement coords, line coord).
    pub fn split(&self, k_idx: usize, v: &DVector<f64>) -> (DVector<f64>, f64) {
        let perp = self.complement[k_idx].transpose() * v;
        let line = self.directions[k_idx].dot(v);
        (perp, line)
    }

    /// Reassemble a full-space vector from split coordinates at fiber k.
    pub fn assemble(&self, k_idx: usize, perp: &DVector<f64>, line: f64) -> DVector<f64> {
        &self.complement[k_idx] * perp + &self.directions[k_idx] * line
    }
}

/// Outcome of the full orbit probe: dichotomies on both halves plus the
/// transversality of the spaces meeting at index 0.
#[derive(Clone, Debug)]
pub struct OrbitHyperbolicityReport {
    pub forward: Option<DichotomySplitting>,
    pub backward: Option<DichotomySplitting>,
    pub transversality: Option<TransversalityReport>,
    pub verdict: OrbitVerdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrbitVerdict {
    /// Both halves carry a dichotomy and the index-0 spaces span the fiber.
    /// Numerical evidence at finite horizon, not a proof.
    HyperbolicLike,
    /// A dichotomy is missing on at least one half.
    NoDichotomy,
    /// Dichotomies exist but the index-0 spaces fail to span.
    NotTransversal,
}

/// Probe the derivative cocycle along the orbit of `p0` over
/// [−horizon, horizon]: dichotomy on each half, then transversality at 0.
pub fn orbit_hyperbolicity_check(
    map: &dyn SmoothMap,
    p0: &Pt,
    horizon: usize,
    params: &DetectParams,
) -> Result<OrbitHyperbolicityReport> {
    let h = horizon as i64;
    let cocycle = Cocycle::from_orbit(map, p0, (-h, h))?;
    let forward = detect_half(&cocycle, Half::Forward, params)?;
    let backward = detect_half(&cocycle, Half::Backward, params)?;
    let (transversality, verdict) = match (&forward, &backward) {
        (Some(f), Some(b)) => {
            let t = transversality_check(f, b)?;
            let v = if t.pass {
                OrbitVerdict::HyperbolicLike
            } else {
                OrbitVerdict::NotTransversal
            };
            (Some(t), v)
        }
        _ => (None, OrbitVerdict::NoDichotomy),
    };
    Ok(OrbitHyperbolicityReport {
        forward,
        backward,
        transversality,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{build_circle_cubic, CatMap, CircleCubicParams, IdentityCircle};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_half_two(len: usize) -> Cocycle {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        Cocycle::constant(m, -(len as i64 / 2), len).unwrap()
    }

    fn cat_cocycle(len: usize) -> Cocycle {
        Cocycle::constant(CatMap::matrix(), -(len as i64 / 2), len).unwrap()
    }

    fn identity_2d(len: usize) -> Cocycle {
        Cocycle::constant(DMatrix::identity(2, 2), -(len as i64 / 2), len).unwrap()
    }

    /// λ = 2 for k < 0 and λ = 1/2 for k ≥ 0 (expansion before contraction).
    fn expand_then_contract(half: usize) -> Cocycle {
        let factors: Vec<f64> = (0..2 * half)
            .map(|i| if i < half { 2.0 } else { 0.5 })
            .collect();
        Cocycle::scalar(&factors, -(half as i64)).unwrap()
    }

    /// λ = 1/2 for k < 0 and λ = 2 for k ≥ 0 (contraction before expansion).
    fn contract_then_expand(half: usize) -> Cocycle {
        let factors: Vec<f64> = (0..2 * half)
            .map(|i| if i < half { 0.5 } else { 2.0 })
            .collect();
        Cocycle::scalar(&factors, -(half as i64)).unwrap()
    }

    #[test]
    fn detect_diagonal_splitting() {
        let c = diag_half_two(80);
        let split = detect(&c, Half::Forward, &DetectParams::default())
            .unwrap()
            .expect("diag(1/2,2) has a dichotomy");
        assert_eq!(split.stable_dim(), 1);
        assert_eq!(split.unstable_dim(), 1);
        assert!(
            (split.rate - 0.5).abs() / 0.5 < 0.02,
            "rate = {}",
            split.rate
        );
        assert!(split.prefactor >= 1.0 && split.prefactor < 1.2);
        // Stable axis is x, unstable is y.
        let qs = split.basis_at(0, false);
        assert!(qs[(0, 0)].abs() > 0.999);
        assert!((split.projection_bound - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detect_cat_rate() {
        let c = cat_cocycle(80);
        let split = detect(&c, Half::Forward, &DetectParams::default())
            .unwrap()
            .expect("cat cocycle has a dichotomy");
        let expected = (3.0 - 5.0f64.sqrt()) / 2.0;
        assert!(
            (split.rate - expected).abs() / expected < 0.05,
            "rate = {} vs {}",
            split.rate,
            expected
        );
    }

    #[test]
    fn detect_identity_is_none() {
        let c = identity_2d(80);
        assert!(detect(&c, Half::Forward, &DetectParams::default())
            .unwrap()
            .is_none());
        let c1 = Cocycle::scalar(&vec![1.0; 80], 0).unwrap();
        assert!(detect(&c1, Half::Forward, &DetectParams::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn detect_window_too_short() {
        let c = identity_2d(20);
        assert!(matches!(
            detect(&c, Half::Forward, &DetectParams::default()),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn rate_is_stable_under_halved_probe() {
        let c = cat_cocycle(140);
        let full = detect(&c, Half::Forward, &DetectParams::default())
            .unwrap()
            .unwrap();
        let halved = detect(
            &c,
            Half::Forward,
            &DetectParams {
                probe_horizon: 15,
                ..DetectParams::default()
            },
        )
        .unwrap()
        .unwrap();
        assert!(
            (full.rate - halved.rate).abs() / full.rate < 0.1,
            "rates {} vs {}",
            full.rate,
            halved.rate
        );
    }

    #[test]
    fn transversality_on_hyperbolic_cases() {
        let params = DetectParams::default();
        for c in [cat_cocycle(120), diag_half_two(120)] {
            let f = detect_half(&c, Half::Forward, &params).unwrap().unwrap();
            let b = detect_half(&c, Half::Backward, &params).unwrap().unwrap();
            let t = transversality_check(&f, &b).unwrap();
            assert!(t.pass);
            assert_eq!(t.defect_dim, 0);
            // Both model matrices are symmetric, so the splitting is orthogonal.
            assert!((t.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        }
    }

    #[test]
    fn transversality_trivial_stable_side() {
        // Pure expansion: the forward-stable space is {0}, the
        // backward-unstable space is everything; their sum spans.
        let c = Cocycle::scalar(&vec![2.0; 120], -60).unwrap();
        let params = DetectParams::default();
        let f = detect_half(&c, Half::Forward, &params).unwrap().unwrap();
        assert_eq!(f.stable_dim(), 0);
        let b = detect_half(&c, Half::Backward, &params).unwrap().unwrap();
        assert_eq!(b.unstable_dim(), 1);
        let t = transversality_check(&f, &b).unwrap();
        assert!(t.pass);
        assert!((t.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn mixed_cocycle_fails_transversality_and_grows() {
        let c = contract_then_expand(60);
        let params = DetectParams::default();
        let f = detect_half(&c, Half::Forward, &params).unwrap().unwrap();
        assert_eq!(f.stable_dim(), 0, "forward half is expanding");
        let b = detect_half(&c, Half::Backward, &params).unwrap().unwrap();
        assert_eq!(b.unstable_dim(), 0, "backward half is contracting");
        let t = transversality_check(&f, &b).unwrap();
        assert!(!t.pass);
        assert_eq!(t.defect_dim, 1);

        // Each half alone is tame, but windows straddling index 0 force
        // unbounded responses.
        let fwd_only = bounded_response_check(&c, Span::Forward, 6, 11).unwrap();
        assert!(fwd_only.slope < 0.1, "forward slope = {}", fwd_only.slope);
        let growth = bounded_response_check(&c, Span::Centered, 6, 11).unwrap();
        assert!(growth.slope > 0.1, "centered slope = {}", growth.slope);
    }

    #[test]
    fn bounded_response_matches_dichotomy() {
        // Hyperbolic: bounded responses on each half.
        let cat = cat_cocycle(128);
        let g = bounded_response_check(&cat, Span::Centered, 6, 13).unwrap();
        assert!(g.slope < 0.1, "cat slope = {}", g.slope);
        assert!(g.l_hat < 4.0, "cat l_hat = {}", g.l_hat);

        // Identity: responses grow linearly.
        let ident = identity_2d(128);
        let g = bounded_response_check(&ident, Span::Centered, 6, 13).unwrap();
        assert!(g.slope > 0.9, "identity slope = {}", g.slope);
    }

    #[test]
    fn trichotomy_cases() {
        let exp = Cocycle::scalar(&[2.0; 12], 0).unwrap();
        assert_eq!(trichotomy_1d(&exp, 2).unwrap(), TrichotomyCase::Expanding);

        let con = Cocycle::scalar(&[0.5; 12], 0).unwrap();
        assert_eq!(trichotomy_1d(&con, 2).unwrap(), TrichotomyCase::Contracting);

        let mixed = expand_then_contract(20);
        match trichotomy_1d(&mixed, 6).unwrap() {
            TrichotomyCase::Mixed {
                expand_at,
                contract_at,
            } => assert!(expand_at < contract_at),
            other => panic!("expected mixed, got {:?}", other),
        }

        let bad = contract_then_expand(20);
        assert!(matches!(
            trichotomy_1d(&bad, 6).unwrap(),
            TrichotomyCase::NoTrichotomy { .. }
        ));

        let ident = Cocycle::scalar(&[1.0; 12], 0).unwrap();
        assert!(matches!(
            trichotomy_1d(&ident, 3).unwrap(),
            TrichotomyCase::NoTrichotomy { .. }
        ));
    }

    #[test]
    fn growth_bound_values() {
        // n = 2 collapses to 1/(L·5^γ).
        let g = product_growth_bound(1.0, 0.5, 2).unwrap();
        assert!((g - 1.0 / 5.0f64.sqrt()).abs() < 1e-12);

        // Large windows blow up for γ = 1/2 ...
        let g100 = product_growth_bound(1.0, 0.5, 100).unwrap();
        let b = (201.0f64).sqrt();
        let expect = (1.0 / b) * (1.0 + 1.0 / b).powi(98);
        assert!((g100 - expect).abs() / expect < 1e-10);
        assert!(g100 > 2.0);
        let n = first_window_above(1.0, 0.5, 2.0, 1_000_000).unwrap();
        assert!(n.is_some() && n.unwrap() <= 100, "finder: {:?}", n);

        // ... but stay bounded for γ = 1.
        assert_eq!(first_window_above(1.0, 1.0, 2.0, 1_000_000).unwrap(), None);
    }

    #[test]
    fn reduction_on_diagonal_matrix() {
        let c = diag_half_two(10);
        let e0 = DVector::from_vec(vec![1.0, 0.0]);
        let r = orthogonal_reduction(&c, &e0).unwrap();
        for s in &r.stretch {
            assert!((s - 0.5).abs() < 1e-12);
        }
        for b in 0..r.reduced.len() {
            let k = r.reduced.k_min() + b as i64;
            assert!((r.reduced.mat(k)[(0, 0)].abs() - 2.0).abs() < 1e-12);
        }
        for d in &r.coupling {
            assert!(d[(0, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_on_cat_unstable_direction() {
        let c = cat_cocycle(12);
        let (u, _s) = CatMap::eigenvectors();
        let e0 = DVector::from_vec(vec![u.get(0), u.get(1)]);
        let r = orthogonal_reduction(&c, &e0).unwrap();
        let (lu, ls) = CatMap::eigenvalues();
        for s in &r.stretch {
            assert!((s - lu).abs() < 1e-9, "stretch = {}", s);
        }
        for b in 0..r.reduced.len() {
            let k = r.reduced.k_min() + b as i64;
            assert!(
                (r.reduced.mat(k)[(0, 0)].abs() - ls).abs() < 1e-9,
                "complement factor = {}",
                r.reduced.mat(k)[(0, 0)]
            );
        }
        for d in &r.coupling {
            assert!(d[(0, 0)].abs() < 1e-9);
        }
    }

    #[test]
    fn reduction_split_recursion_matches_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut done = 0;
        while done < 20 {
            let n = 8;
            let mats: Vec<DMatrix<f64>> = (0..n)
                .map(|_| {
                    DMatrix::from_fn(3, 3, |i, j| {
                        rng.gen_range(-1.2f64..1.2) + if i == j { 1.0 } else { 0.0 }
                    })
                })
                .collect();
            let c = match Cocycle::new(3, 0, mats) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let mut e0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0f64..1.0));
            e0 /= e0.norm();
            let r = orthogonal_reduction(&c, &e0).unwrap();

            // Norm bounds of the reduced data.
            for b in 0..r.reduced.len() {
                let k = r.reduced.k_min() + b as i64;
                assert!(operator_norm(r.reduced.mat(k)) < c.bound());
                assert!(operator_norm(r.reduced.inv(k)) < c.bound());
                assert!(operator_norm(&r.coupling[b]) < c.bound());
            }

            // Split recursion reproduces the full recursion.
            let mut v = DVector::from_fn(3, |_, _| rng.gen_range(-1.0f64..1.0));
            for step in 0..n {
                let w = DVector::from_fn(3, |_, _| rng.gen_range(-1.0f64..1.0));
                let k = c.k_min() + step as i64;
                let full_next = c.mat(k) * &v + &w;

                let (v_perp, v_line) = r.split(step, &v);
                let (w_perp, w_line) = r.split(step + 1, &w);
                let next_perp = r.reduced.mat(k) * &v_perp + &w_perp;
                let next_line =
                    r.stretch[step] * v_line + (&r.coupling[step] * &v_perp)[(0, 0)] + w_line;
                let rebuilt = r.assemble(step + 1, &next_perp, next_line);
                assert!(
                    (&rebuilt - &full_next).norm() < 1e-10,
                    "split recursion drifted: {}",
                    (&rebuilt - &full_next).norm()
                );
                v = full_next;
            }
            done += 1;
        }
    }

    #[test]
    fn orbit_probe_verdicts() {
        let params = DetectParams::default();
        let cat = orbit_hyperbolicity_check(&CatMap, &Pt::d2(0.13, 0.71), 64, &params).unwrap();
        assert_eq!(cat.verdict, OrbitVerdict::HyperbolicLike);

        let ident = orbit_hyperbolicity_check(&IdentityCircle, &Pt::d1(0.4), 64, &params).unwrap();
        assert_eq!(ident.verdict, OrbitVerdict::NoDichotomy);
        assert!(ident.forward.is_none() && ident.backward.is_none());

        let circle = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let at_repeller = orbit_hyperbolicity_check(&circle, &Pt::d1(0.0), 64, &params).unwrap();
        assert_eq!(at_repeller.verdict, OrbitVerdict::NoDichotomy);
    }
}
