//! Sequences of invertible linear maps along a window, and min–sup solvers
//! for the inhomogeneous recursion v_{k+1} = A_k v_k + w_{k+1}.
//!
//! The central quantity is the smallest possible sup norm of a solution for
//! a given forcing. Three solver paths cover the conditioning range:
//!
//! * dimension 1 — exact interval bisection on the sup bound (stable for
//!   arbitrarily long expanding windows);
//! * small accumulated growth — ellipsoid method on the convex objective
//!   parameterized by the initial vector;
//! * dimension 2 with large accumulated growth — bisection on the sup bound
//!   with outer polygonal reach sets, where the initial-vector
//!   parameterization is numerically meaningless.
//!
//! A zoom-grid oracle ([`brute_force_oracle`]) provides an independent check
//! for small instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::maps::SmoothMap;
use crate::space::Pt;
use crate::stats::{fit_power_law, LineFit};
use crate::{Error, Result};

/// Operator (spectral) norm via singular values.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

/// A finite window of invertible linear maps A_k, k ∈ [k_min, k_max), acting
/// between the fibers k and k+1. Fiber indices run over [k_min, k_max].
#[derive(Clone, Debug)]
pub struct Cocycle {
    dim: usize,
    k_min: i64,
    mats: Vec<DMatrix<f64>>,
    invs: Vec<DMatrix<f64>>,
    bound: f64,
}

impl Cocycle {
    /// Build from explicit matrices; checks invertibility and computes the
    /// norm bound R with a 1.1 safety factor.
    pub fn new(dim: usize, k_min: i64, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if dim == 0 || dim > 3 || mats.is_empty() {
            return Err(Error::InvalidParams(
                "cocycle needs dimension 1..=3 and at least one matrix".into(),
            ));
        }
        let mut invs = Vec::with_capacity(mats.len());
        let mut sup = 0.0f64;
        for (j, m) in mats.iter().enumerate() {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidParams(format!(
                    "matrix {} has shape {}x{}, expected {}x{}",
                    j,
                    m.nrows(),
                    m.ncols(),
                    dim,
                    dim
                )));
            }
            let svd = m.clone().svd(true, true);
            let smax = svd.singular_values[0];
            let smin = svd.singular_values[svd.singular_values.len() - 1];
            if !(smin > 0.0) || smax / smin > 1e12 {
                return Err(Error::Singular(format!(
                    "matrix at offset {} has condition number above 1e12",
                    j
                )));
            }
            let inv = svd
                .pseudo_inverse(0.0)
                .map_err(|e| Error::Singular(e.to_string()))?;
            sup = sup.max(smax).max(1.0 / smin);
            invs.push(inv);
        }
        Ok(Cocycle {
            dim,
            k_min,
            mats,
            invs,
            bound: 1.1 * sup,
        })
    }

    /// Constant cocycle with `len` copies of one matrix, starting at `k_min`.
    pub fn constant(mat: DMatrix<f64>, k_min: i64, len: usize) -> Result<Self> {
        let dim = mat.nrows();
        Cocycle::new(dim, k_min, vec![mat; len])
    }

    /// Scalar (1-D) cocycle from explicit factors.
    pub fn scalar(factors: &[f64], k_min: i64) -> Result<Self> {
        let mats = factors
            .iter()
            .map(|&a| DMatrix::from_element(1, 1, a))
            .collect();
        Cocycle::new(1, k_min, mats)
    }

    /// Derivative cocycle along the orbit of `map` through `p0`, with A_k =
    /// Df(p_k) for k ∈ [k0, k1). Negative k0 requires the map inverse.
    pub fn from_orbit(map: &dyn SmoothMap, p0: &Pt, window: (i64, i64)) -> Result<Self> {
        let (k0, k1) = window;
        if k1 <= k0 {
            return Err(Error::InvalidParams("empty orbit window".into()));
        }
        let mut mats = Vec::with_capacity((k1 - k0) as usize);
        let mut p = if k0 >= 0 {
            map.iterate(p0, k0 as usize)
        } else {
            map.iterate_back(p0, (-k0) as usize).ok_or_else(|| {
                Error::Unsupported("negative window start needs an invertible map".into())
            })?
        };
        for _ in k0..k1 {
            mats.push(map.derivative(&p));
            p = map.eval(&p);
        }
        Cocycle::new(map.space().dim(), k0, mats)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First fiber index.
    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    /// Last fiber index (= k_min + number of matrices).
    pub fn k_max(&self) -> i64 {
        self.k_min + self.mats.len() as i64
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// The norm bound R (strict upper bound on all ‖A_k‖, ‖A_k⁻¹‖).
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn mat(&self, k: i64) -> &DMatrix<f64> {
        &self.mats[(k - self.k_min) as usize]
    }

    pub fn inv(&self, k: i64) -> &DMatrix<f64> {
        &self.invs[(k - self.k_min) as usize]
    }

    /// Scalar factor for 1-D cocycles.
    pub fn factor(&self, k: i64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.mat(k)[(0, 0)]
    }

    pub fn contains_step(&self, k: i64) -> bool {
        k >= self.k_min && k < self.k_max()
    }

    /// Transition A_{k+l−1} ⋯ A_k (the identity for l = 0).
    pub fn transition(&self, k: i64, l: usize) -> Result<DMatrix<f64>> {
        if l > 0 && (k < self.k_min || k + l as i64 > self.k_max()) {
            return Err(Error::InvalidParams(format!(
                "transition window [{}, {}] overflows [{}, {}]",
                k,
                k + l as i64,
                self.k_min,
                self.k_max()
            )));
        }
        let mut t = DMatrix::identity(self.dim, self.dim);
        for j in 0..l {
            t = self.mat(k + j as i64) * t;
        }
        Ok(t)
    }

    /// |λ_k ⋯ λ_{k+l−1}| for 1-D cocycles (1 for l = 0).
    pub fn window_product(&self, k: i64, l: usize) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::Unsupported(
                "window_product needs a 1-D cocycle; use a direction reduction first".into(),
            ));
        }
        if l > 0 && (k < self.k_min || k + l as i64 > self.k_max()) {
            return Err(Error::InvalidParams("window overflow".into()));
        }
        let mut p = 1.0;
        for j in 0..l {
            p *= self.factor(k + j as i64).abs();
        }
        Ok(p)
    }

    /// Restrict to the fiber range [a, b] (matrices [a, b)).
    pub fn slice(&self, a: i64, b: i64) -> Result<Cocycle> {
        if a < self.k_min || b > self.k_max() || b <= a {
            return Err(Error::InvalidParams(format!(
                "slice [{}, {}] outside [{}, {}]",
                a,
                b,
                self.k_min,
                self.k_max()
            )));
        }
        let lo = (a - self.k_min) as usize;
        let hi = (b - self.k_min) as usize;
        Ok(Cocycle {
            dim: self.dim,
            k_min: a,
            mats: self.mats[lo..hi].to_vec(),
            invs: self.invs[lo..hi].to_vec(),
            bound: self.bound,
        })
    }

    /// Plain-text format: header `m k0 k1 R`, then one matrix per line in
    /// row-major order.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {}\n",
            self.dim,
            self.k_min,
            self.k_max(),
            self.bound
        );
        for m in &self.mats {
            let row: Vec<String> = (0..self.dim)
                .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
                .map(|(i, j)| format!("{:.17e}", m[(i, j)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty cocycle file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(Error::Parse("header must be 'm k0 k1 R'".into()));
        }
        let dim: usize = h[0]
            .parse()
            .map_err(|_| Error::Parse("bad dimension".into()))?;
        let k0: i64 = h[1].parse().map_err(|_| Error::Parse("bad k0".into()))?;
        let k1: i64 = h[2].parse().map_err(|_| Error::Parse("bad k1".into()))?;
        let mut mats = Vec::new();
        for line in lines {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad entry '{}'", v)))
                })
                .collect::<Result<_>>()?;
            if vals.len() != dim * dim {
                return Err(Error::Parse(format!(
                    "matrix line has {} entries, expected {}",
                    vals.len(),
                    dim * dim
                )));
            }
            mats.push(DMatrix::from_row_slice(dim, dim, &vals));
        }
        if mats.len() as i64 != k1 - k0 {
            return Err(Error::Parse(format!(
                "found {} matrices, header promises {}",
                mats.len(),
                k1 - k0
            )));
        }
        Cocycle::new(dim, k0, mats)
    }
}

// ---------------------------------------------------------------------------
// The min-sup problem
// ---------------------------------------------------------------------------

/// Forcing data for the recursion over k ∈ [start, start+len]: vectors
/// w_k for k ∈ [start+1, start+len].
#[derive(Clone, Debug)]
pub struct MinSupProblem<'a> {
    cocycle: &'a Cocycle,
    start: i64,
    len: usize,
    forcing: Vec<DVector<f64>>,
}

impl<'a> MinSupProblem<'a> {
    pub fn new(
        cocycle: &'a Cocycle,
        start: i64,
        len: usize,
        forcing: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParams(
                "window length must be positive".into(),
            ));
        }
        if start < cocycle.k_min() || start + len as i64 > cocycle.k_max() {
            return Err(Error::InvalidParams(format!(
                "window [{}, {}] outside cocycle [{}, {}]",
                start,
                start + len as i64,
                cocycle.k_min(),
                cocycle.k_max()
            )));
        }
        if forcing.len() != len {
            return Err(Error::InvalidParams(format!(
                "need {} forcing vectors, got {}",
                len,
                forcing.len()
            )));
        }
        for w in &forcing {
            if w.len() != cocycle.dim() || w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams("bad forcing vector".into()));
            }
        }
        Ok(MinSupProblem {
            cocycle,
            start,
            len,
            forcing,
        })
    }

    pub fn cocycle(&self) -> &Cocycle {
        self.cocycle
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        // Construction rejects empty windows.
        false
    }

    pub fn forcing(&self) -> &[DVector<f64>] {
        &self.forcing
    }

    /// Forward solution for a given initial vector; returns the whole
    /// sequence v_k, k ∈ [start, start+len].
    pub fn propagate(&self, v0: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut vs = Vec::with_capacity(self.len + 1);
        vs.push(v0.clone());
        for j in 0..self.len {
            let k = self.start + j as i64;
            let next = self.cocycle.mat(k) * vs.last().unwrap() + &self.forcing[j];
            vs.push(next);
        }
        vs
    }

    /// Sup norm of the forward solution from `v0`.
    pub fn sup_from(&self, v0: &DVector<f64>) -> f64 {
        self.propagate(v0)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Accumulated growth along the window: Σ log max(‖A_k‖, ‖A_k⁻¹‖).
    /// Large values mean the initial-vector parameterization is hopeless.
    fn log_amplification(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.len {
            let k = self.start + j as i64;
            let a = operator_norm(self.cocycle.mat(k));
            let b = operator_norm(self.cocycle.inv(k));
            acc += a.max(b).max(1.0).ln();
        }
        acc
    }
}

/// Solver used for a [`MinSupSolution`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Interval1d,
    Ellipsoid,
    ReachSet,
}

/// A near-minimal-sup solution of the recursion.
#[derive(Clone, Debug)]
pub struct MinSupSolution {
    /// v_k for k ∈ [start, start+len].
    pub values: Vec<DVector<f64>>,
    /// max_k |v_k|.
    pub sup: f64,
    /// The determining initial vector v_start.
    pub initial: DVector<f64>,
    /// Sup of the recursion residuals of `values` (0 for exact forward
    /// propagation; a few ulps for the stabilized paths).
    pub residual_sup: f64,
    pub method: SolveMethod,
}

/// Minimize max_k |v_k| over solutions of the recursion.
pub fn solve_min_sup(problem: &MinSupProblem) -> Result<MinSupSolution> {
    if problem.forcing.iter().all(|w| w.norm() == 0.0) {
        let zero = DVector::zeros(problem.cocycle.dim());
        return Ok(MinSupSolution {
            values: vec![zero.clone(); problem.len + 1],
            sup: 0.0,
            initial: zero,
            residual_sup: 0.0,
            method: SolveMethod::Interval1d,
        });
    }
    if problem.cocycle.dim() == 1 {
        return solve_interval_1d(problem);
    }
    let log_amp = problem.log_amplification();
    if log_amp <= 8f64 * std::f64::consts::LN_10 {
        solve_ellipsoid(problem)
    } else if problem.cocycle.dim() == 2 {
        solve_reach_set(problem)
    } else {
        Err(Error::Unsupported(
            "min-sup for dimension-3 windows with huge growth is not supported".into(),
        ))
    }
}

// --- path 1: exact interval bisection in dimension 1 ----------------------

#[derive(Clone, Copy, Debug)]
struct Iv {
    lo: f64,
    hi: f64,
}

impl Iv {
    fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    fn clamp_to(&self, other: &Iv) -> Iv {
        Iv {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }
}

fn forward_intervals_1d(problem: &MinSupProblem, t: f64) -> Option<Vec<Iv>> {
    let ball = Iv { lo: -t, hi: t };
    let mut ivs = Vec::with_capacity(problem.len + 1);
    ivs.push(ball);
    for j in 0..problem.len {
        let a = problem.cocycle.factor(problem.start + j as i64);
        let w = problem.forcing[j][0];
        let prev = ivs[j];
        let (p, q) = (a * prev.lo + w, a * prev.hi + w);
        let mapped = Iv {
            lo: p.min(q),
            hi: p.max(q),
        };
        let clipped = mapped.clamp_to(&ball);
        if clipped.is_empty() {
            return None;
        }
        ivs.push(clipped);
    }
    Some(ivs)
}

fn solve_interval_1d(problem: &MinSupProblem) -> Result<MinSupSolution> {
    // Upper bracket from the zero-initial forward solution.
    let zero = DVector::zeros(1);
    let mut hi = problem.sup_from(&zero) * (1.0 + 1e-12) + 1e-300;
    let mut lo = 0.0f64;
    // Geometric descent to a factor-2 bracket, then plain bisection.
    while forward_intervals_1d(problem, hi / 2.0).is_some() {
        hi /= 2.0;
        if hi < 1e-300 {
            break;
        }
    }
    lo = lo.max(hi / 2.0);
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if forward_intervals_1d(problem, mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let fwd = forward_intervals_1d(problem, hi).ok_or_else(|| {
        Error::Singular("interval bisection lost feasibility at the final bound".into())
    })?;
    // Backward-feasible refinement: G_k = J_k ∩ A_k^{-1}(G_{k+1} - w).
    let mut g = fwd.clone();
    for j in (0..problem.len).rev() {
        let a = problem.cocycle.factor(problem.start + j as i64);
        let w = problem.forcing[j][0];
        let nxt = g[j + 1];
        let (p, q) = ((nxt.lo - w) / a, (nxt.hi - w) / a);
        let back = Iv {
            lo: p.min(q),
            hi: p.max(q),
        };
        let refined = g[j].clamp_to(&back);
        // Rounding can starve the intersection at a binding constraint by an
        // ulp; the nearest endpoint of the forward set keeps the chain
        // consistent to rounding precision.
        g[j] = if refined.is_empty() {
            if back.lo > g[j].hi {
                Iv { lo: g[j].hi, hi: g[j].hi }
            } else {
                Iv { lo: g[j].lo, hi: g[j].lo }
            }
        } else {
            refined
        };
    }

    // Forward point pass with per-step clamping into the feasible sets.
    let mut vals = Vec::with_capacity(problem.len + 1);
    let mut v = 0.5 * (g[0].lo + g[0].hi);
    vals.push(v);
    let mut residual_sup = 0.0f64;
    for j in 0..problem.len {
        let a = problem.cocycle.factor(problem.start + j as i64);
        let w = problem.forcing[j][0];
        let raw = a * v + w;
        let clamped = raw.clamp(g[j + 1].lo, g[j + 1].hi);
        residual_sup = residual_sup.max((clamped - raw).abs());
        v = clamped;
        vals.push(v);
    }
    let sup = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(MinSupSolution {
        initial: DVector::from_element(1, vals[0]),
        values: vals
            .into_iter()
            .map(|x| DVector::from_element(1, x))
            .collect(),
        sup,
        residual_sup,
        method: SolveMethod::Interval1d,
    })
}

// --- path 2: ellipsoid method on the initial-vector parameterization ------

struct AffineForm {
    /// Transitions T_k (fiber start → k) and offsets b_k, so that
    /// v_k = T_k x + b_k.
    ts: Vec<DMatrix<f64>>,
    bs: Vec<DVector<f64>>,
}

impl AffineForm {
    fn build(problem: &MinSupProblem) -> Self {
        let m = problem.cocycle.dim();
        let mut ts = Vec::with_capacity(problem.len + 1);
        let mut bs = Vec::with_capacity(problem.len + 1);
        ts.push(DMatrix::identity(m, m));
        bs.push(DVector::zeros(m));
        for j in 0..problem.len {
            let a = problem.cocycle.mat(problem.start + j as i64);
            ts.push(a * ts.last().unwrap());
            bs.push(a * bs.last().unwrap() + &problem.forcing[j]);
        }
        AffineForm { ts, bs }
    }

    fn objective(&self, x: &DVector<f64>) -> (f64, usize) {
        let mut best = -1.0;
        let mut arg = 0;
        for (k, (t, b)) in self.ts.iter().zip(&self.bs).enumerate() {
            let n = (t * x + b).norm();
            if n > best {
                best = n;
                arg = k;
            }
        }
        (best, arg)
    }
}

fn solve_ellipsoid(problem: &MinSupProblem) -> Result<MinSupSolution> {
    let m = problem.cocycle.dim();
    let form = AffineForm::build(problem);
    let x0 = DVector::zeros(m);
    let (f0, _) = form.objective(&x0);
    // |x*| ≤ F* ≤ F(0), so a ball of radius F(0) contains the minimizer.
    let r0 = f0 * (1.0 + 1e-9) + 1e-300;

    // Factorized ellipsoid {c + B u : |u| ≤ 1}. Updating B instead of B Bᵀ
    // keeps the set nonsingular on extremely anisotropic valleys.
    let mut center = x0;
    let mut basis = DMatrix::<f64>::identity(m, m) * r0;
    let mut best_x = center.clone();
    let mut best_f = f0;

    let mf = m as f64;
    let dilate = mf / (mf * mf - 1.0).sqrt();
    let squeeze = ((mf - 1.0) / (mf + 1.0)).sqrt() - 1.0;
    let iters =
        ((2.0 * mf * mf * ((r0.max(1e-12) / 1e-14).ln() + 30.0)).ceil() as usize).min(8000);
    for _ in 0..iters {
        let (f, arg) = form.objective(&center);
        if f < best_f {
            best_f = f;
            best_x = center.clone();
        }
        let v = &form.ts[arg] * &center + &form.bs[arg];
        let n = v.norm();
        if n == 0.0 {
            best_x = center.clone();
            break;
        }
        let g = form.ts[arg].transpose() * (v / n);
        let bg = basis.transpose() * &g;
        let bgn = bg.norm();
        if !(bgn > 0.0) || !bgn.is_finite() {
            break;
        }
        let u = bg / bgn;
        center -= (&basis * &u) * (1.0 / (mf + 1.0));
        basis = &basis * dilate + (&basis * &u) * (dilate * squeeze) * u.transpose();
        if basis.norm() < 1e-30 * r0 {
            break;
        }
    }

    let values = problem.propagate(&best_x);
    let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(MinSupSolution {
        initial: best_x,
        values,
        sup,
        residual_sup: 0.0,
        method: SolveMethod::Ellipsoid,
    })
}

// --- path 3: outer polygonal reach sets for stiff 2-D windows -------------

const DISK_SIDES: usize = 48;

/// Clip a convex polygon against the circumscribed `DISK_SIDES`-gon of the
/// unit disk (an outer approximation of the disk). Returns false if empty.
fn clip_to_unit_disk(poly: &mut Vec<[f64; 2]>) -> bool {
    // Fast path: entirely inside the unit disk.
    if poly.iter().all(|p| p[0] * p[0] + p[1] * p[1] <= 1.0) {
        return !poly.is_empty();
    }
    let mut scratch: Vec<[f64; 2]> = Vec::with_capacity(poly.len() + 4);
    for side in 0..DISK_SIDES {
        if poly.is_empty() {
            return false;
        }
        let th = 2.0 * std::f64::consts::PI * side as f64 / DISK_SIDES as f64;
        let (nx, ny) = (th.cos(), th.sin());
        // Halfplane n·x ≤ 1 (tangent line of the unit circle).
        let dist = |p: &[f64; 2]| nx * p[0] + ny * p[1] - 1.0;
        if poly.iter().all(|p| dist(p) <= 0.0) {
            continue;
        }
        scratch.clear();
        let n = poly.len();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let da = dist(&a);
            let db = dist(&b);
            if da <= 0.0 {
                scratch.push(a);
            }
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                let s = da / (da - db);
                scratch.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
            }
        }
        std::mem::swap(poly, &mut scratch);
    }
    !poly.is_empty()
}

fn reach_feasible(problem: &MinSupProblem, t: f64) -> bool {
    // Work in coordinates normalized by t: the constraint set is the unit disk.
    let sides = 32;
    let outer = 1.0 / (std::f64::consts::PI / sides as f64).cos();
    let mut poly: Vec<[f64; 2]> = (0..sides)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / sides as f64;
            [outer * th.cos(), outer * th.sin()]
        })
        .collect();
    for j in 0..problem.len {
        let a = problem.cocycle.mat(problem.start + j as i64);
        let w = &problem.forcing[j];
        for p in poly.iter_mut() {
            let (x, y) = (p[0], p[1]);
            p[0] = a[(0, 0)] * x + a[(0, 1)] * y + w[0] / t;
            p[1] = a[(1, 0)] * x + a[(1, 1)] * y + w[1] / t;
        }
        if !clip_to_unit_disk(&mut poly) {
            return false;
        }
        // Vertex growth stays bounded by the clip sides; decimate only if a
        // pathological chain builds up.
        if poly.len() > 3 * DISK_SIDES {
            let mut pruned = Vec::with_capacity(poly.len() / 2 + 2);
            for (i, p) in poly.iter().enumerate() {
                if i % 2 == 0 {
                    pruned.push(*p);
                }
            }
            poly = pruned;
        }
    }
    true
}

fn solve_reach_set(problem: &MinSupProblem) -> Result<MinSupSolution> {
    let zero = DVector::zeros(problem.cocycle.dim());
    let f0 = problem.sup_from(&zero);
    let mut hi = f0 * (1.0 + 1e-9) + 1e-300;
    let mut lo = 0.0f64;
    // Geometric descent first: the bracket can span dozens of decades.
    while hi > 1e-290 && reach_feasible(problem, hi / 4.0) {
        hi /= 4.0;
    }
    if reach_feasible(problem, hi / 2.0) {
        hi /= 2.0;
    }
    lo = lo.max(hi / 4.0);
    for _ in 0..40 {
        if hi - lo <= 1e-4 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if reach_feasible(problem, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Best-effort witness sequence: the certified quantity is `sup`; the
    // sequence is diagnostic for stiff windows and carries its residual.
    let mut values = Vec::with_capacity(problem.len + 1);
    let mut v: DVector<f64> = DVector::zeros(2);
    values.push(v.clone());
    let mut residual_sup = 0.0f64;
    for j in 0..problem.len {
        let a = problem.cocycle.mat(problem.start + j as i64);
        let raw = a * &v + &problem.forcing[j];
        let n = raw.norm();
        let clamped = if n > hi { &raw * (hi / n) } else { raw.clone() };
        residual_sup = residual_sup.max((&clamped - &raw).norm());
        v = clamped;
        values.push(v.clone());
    }
    Ok(MinSupSolution {
        initial: values[0].clone(),
        sup: hi,
        values,
        residual_sup,
        method: SolveMethod::ReachSet,
    })
}

// ---------------------------------------------------------------------------
// Independent oracle
// ---------------------------------------------------------------------------

fn golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, iters: usize) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = f1.min(f2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        best = best.min(f1).min(f2);
    }
    best
}

/// Exhaustive bracketed minimization over the initial vector, independent of
/// the solver paths. Only for small windows (dim ≤ 2, len ≤ 12);
/// `resolution` sets the bracket shrink target.
///
/// The objective is convex in the initial vector, and the partial minimum
/// over one coordinate is again convex in the other, so nested golden-section
/// searches over the bracket [−F(0), F(0)] converge to the global minimum.
pub fn brute_force_oracle(problem: &MinSupProblem, resolution: f64) -> Result<f64> {
    let m = problem.cocycle.dim();
    if m > 2 || problem.len > 12 {
        return Err(Error::Unsupported(
            "oracle is restricted to dim <= 2 and len <= 12".into(),
        ));
    }
    let zero = DVector::zeros(m);
    let f0 = problem.sup_from(&zero);
    if f0 == 0.0 {
        return Ok(0.0);
    }
    let r0 = f0 * (1.0 + 1e-9);
    let res = resolution.max(1e-14);
    // Shrink factor per golden iteration is ~0.618.
    let iters = (((r0 / res).ln() / 0.4812f64).ceil() as usize).clamp(60, 220);
    let best = if m == 1 {
        golden_min(
            |x| problem.sup_from(&DVector::from_element(1, x)),
            -r0,
            r0,
            iters,
        )
    } else {
        golden_min(
            |x| {
                golden_min(
                    |y| problem.sup_from(&DVector::from_vec(vec![x, y])),
                    -r0,
                    r0,
                    iters,
                )
            },
            -r0,
            r0,
            iters,
        )
    };
    Ok(best)
}

// ---------------------------------------------------------------------------
// Worst-case gain and growth fitting
// ---------------------------------------------------------------------------

/// Result of sampling the worst-case sup-norm response to unit forcing.
#[derive(Clone, Debug)]
pub struct GainEstimate {
    /// Sampled lower bound on the true worst-case gain.
    pub gain: f64,
    /// Number of forcing sequences tried.
    pub samples: usize,
    /// Draw index that attained the maximum (deterministic tie-break to the
    /// lowest index).
    pub argmax_draw: usize,
}

pub(crate) fn unit_vector<R: Rng>(rng: &mut R, m: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| rng.gen_range(-1.0f64..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Deterministic forcing patterns worth trying: constant directions and a
/// sign-alternating direction.
fn forcing_patterns(m: usize, len: usize) -> Vec<Vec<DVector<f64>>> {
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for axis in 0..m {
        let mut e = DVector::zeros(m);
        e[axis] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    if m == 2 {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        dirs.push(DVector::from_vec(vec![d, d]));
        dirs.push(DVector::from_vec(vec![d, -d]));
    }
    let mut out: Vec<Vec<DVector<f64>>> = dirs.iter().map(|e| vec![e.clone(); len]).collect();
    // Alternating signs along the first axis.
    let mut e = DVector::zeros(m);
    e[0] = 1.0;
    out.push(
        (0..len)
            .map(|k| if k % 2 == 0 { e.clone() } else { -e.clone() })
            .collect(),
    );
    out
}

/// Sampled lower bound on the worst-case response gain over unit forcing:
/// max over drawn |w_k| = 1 sequences of the min-sup response, refined by
/// coordinate sign-pattern hill climbing.
pub fn estimate_gain(
    cocycle: &Cocycle,
    start: i64,
    len: usize,
    samples: usize,
    seed: u64,
) -> Result<GainEstimate> {
    let m = cocycle.dim();
    let mut best = f64::NEG_INFINITY;
    let mut best_w: Vec<DVector<f64>> = Vec::new();
    let mut best_draw = usize::MAX;
    let mut tried = 0usize;

    let consider = |w: Vec<DVector<f64>>,
                    draw: usize,
                    best: &mut f64,
                    best_w: &mut Vec<DVector<f64>>,
                    best_draw: &mut usize|
     -> Result<()> {
        let p = MinSupProblem::new(cocycle, start, len, w.clone())?;
        let f = solve_min_sup(&p)?.sup;
        if f > *best {
            *best = f;
            *best_w = w;
            *best_draw = draw;
        }
        Ok(())
    };

    for (j, w) in forcing_patterns(m, len).into_iter().enumerate() {
        consider(w, j, &mut best, &mut best_w, &mut best_draw)?;
        tried += 1;
    }
    let base = tried;
    for j in 0..samples.saturating_sub(tried) {
        // Per-draw stream: extending the window keeps all previous draws as
        // prefixes, which makes the sampled gain monotone in window length.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64 + 1);
        let w: Vec<DVector<f64>> = (0..len).map(|_| unit_vector(&mut rng, m)).collect();
        consider(w, base + j, &mut best, &mut best_w, &mut best_draw)?;
        tried += 1;
    }

    // Coordinate sign-pattern hill climbing from the best draw. Skipped for
    // stiff long windows where each evaluation is expensive.
    let climbable = len <= 64 || m == 1;
    if climbable {
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 2 {
            improved = false;
            passes += 1;
            for k in 0..len {
                let mut w = best_w.clone();
                w[k] = -&w[k];
                let p = MinSupProblem::new(cocycle, start, len, w.clone())?;
                let f = solve_min_sup(&p)?.sup;
                if f > best + 1e-15 {
                    best = f;
                    best_w = w;
                    improved = true;
                }
            }
        }
    }

    Ok(GainEstimate {
        gain: best,
        samples: tried,
        argmax_draw: best_draw,
    })
}

/// Power-law fit of the response gain against window length.
#[derive(Clone, Debug)]
pub struct GrowthFit {
    /// (window length, sampled gain) pairs.
    pub pairs: Vec<(usize, f64)>,
    /// Prefactor of the fitted gain ≈ scale · N^exponent.
    pub scale: f64,
    /// Fitted growth exponent.
    pub exponent: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub class: GrowthClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthClass {
    /// Exponent below 0.2: gains stay essentially bounded.
    BoundedResponse,
    /// Exponent in [0.2, 0.9].
    Sublinear,
    /// Exponent above 0.9.
    LinearOrWorse,
}

/// Fit the growth exponent of the response gain over a geometric grid of
/// window lengths.
pub fn fit_growth(
    cocycle: &Cocycle,
    start: i64,
    window_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<GrowthFit> {
    if window_grid.len() < 4 {
        return Err(Error::InvalidParams(
            "growth fitting needs at least 4 window lengths".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(window_grid.len());
    for &n in window_grid {
        let g = estimate_gain(cocycle, start, n, samples, seed)?;
        pairs.push((n, g.gain));
    }
    let xs: Vec<f64> = pairs.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, g)| *g).collect();
    let fit: LineFit =
        fit_power_law(&xs, &ys).ok_or_else(|| Error::Singular("degenerate growth fit".into()))?;
    let exponent = fit.slope;
    let class = if exponent < 0.2 {
        GrowthClass::BoundedResponse
    } else if exponent <= 0.9 {
        GrowthClass::Sublinear
    } else {
        GrowthClass::LinearOrWorse
    };
    Ok(GrowthFit {
        pairs,
        scale: fit.intercept.exp(),
        exponent,
        residual: fit.rms_residual,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{build_circle_cubic, CatMap, CircleCubicParams, IdentityCircle};

    fn identity_1d(len: usize) -> Cocycle {
        Cocycle::scalar(&vec![1.0; len], 0).unwrap()
    }

    fn scalar_const(a: f64, len: usize) -> Cocycle {
        Cocycle::scalar(&vec![a; len], 0).unwrap()
    }

    fn ones(len: usize) -> Vec<DVector<f64>> {
        vec![DVector::from_element(1, 1.0); len]
    }

    #[test]
    fn identity_unit_forcing_min_sup() {
        let c = identity_1d(4);
        let p = MinSupProblem::new(&c, 0, 4, ones(4)).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        assert!((sol.sup - 2.0).abs() < 1e-9, "sup = {}", sol.sup);
        assert!((sol.initial[0] + 2.0).abs() < 1e-6);
        assert!(sol.residual_sup < 1e-12);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let c = identity_1d(6);
        let p = MinSupProblem::new(&c, 0, 6, vec![DVector::zeros(1); 6]).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        assert_eq!(sol.sup, 0.0);
    }

    #[test]
    fn expanding_backward_sum_bound() {
        // v_k = -sum_{j>k} 2^{k-j} w_j keeps |v| <= 1 for any |w| <= 1.
        for n in [10usize, 50, 200] {
            let c = scalar_const(2.0, n);
            let p = MinSupProblem::new(&c, 0, n, ones(n)).unwrap();
            let sol = solve_min_sup(&p).unwrap();
            assert!(sol.sup <= 1.0 + 1e-9, "n = {}: sup = {}", n, sol.sup);
            assert!(sol.sup >= 0.5, "n = {}: sup = {}", n, sol.sup);
            // The recursion must hold to rounding precision.
            assert!(sol.residual_sup <= 1e-12 * c.bound() * sol.sup.max(1e-30));
        }
    }

    #[test]
    fn contracting_forward_sum_bound() {
        let c = scalar_const(0.5, 10);
        let p = MinSupProblem::new(&c, 0, 10, ones(10)).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        assert!(sol.sup <= 2.0 + 1e-9, "sup = {}", sol.sup);
    }

    #[test]
    fn oracle_identity_examples() {
        let c = identity_1d(4);
        let p = MinSupProblem::new(&c, 0, 4, ones(4)).unwrap();
        let f = brute_force_oracle(&p, 1e-10).unwrap();
        assert!((f - 2.0).abs() < 1e-8);
        let pz = MinSupProblem::new(&c, 0, 4, vec![DVector::zeros(1); 4]).unwrap();
        assert_eq!(brute_force_oracle(&pz, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn oracle_contracting_example() {
        let c = scalar_const(0.5, 10);
        let p = MinSupProblem::new(&c, 0, 10, ones(10)).unwrap();
        let f = brute_force_oracle(&p, 1e-10).unwrap();
        assert!(f <= 2.0 + 1e-8, "f = {}", f);
    }

    #[test]
    fn solver_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..40 {
            let m = if case % 2 == 0 { 1 } else { 2 };
            let n = 2 + (case % 11);
            let mats: Vec<DMatrix<f64>> = (0..n)
                .map(|_| loop {
                    let cand = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-2.0f64..2.0));
                    let svd = cand.clone().svd(false, false);
                    let smin = svd.singular_values[svd.singular_values.len() - 1];
                    if smin > 0.25 {
                        break cand;
                    }
                })
                .collect();
            let c = Cocycle::new(m, 0, mats).unwrap();
            let mut wrng = ChaCha8Rng::seed_from_u64(1000 + case as u64);
            let w: Vec<DVector<f64>> = (0..n).map(|_| unit_vector(&mut wrng, m)).collect();
            let p = MinSupProblem::new(&c, 0, n, w).unwrap();
            let f_solver = solve_min_sup(&p).unwrap().sup;
            let f_oracle = brute_force_oracle(&p, 1e-10).unwrap();
            assert!(
                (f_solver - f_oracle).abs() <= 1e-6,
                "case {}: solver {} vs oracle {}",
                case,
                f_solver,
                f_oracle
            );
        }
    }

    #[test]
    fn objective_is_convex_in_initial_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut done = 0;
        while done < 200 {
            let m = 2;
            let n = 6;
            let mats: Vec<DMatrix<f64>> = (0..n)
                .map(|_| {
                    DMatrix::from_fn(m, m, |i, j| {
                        rng.gen_range(-1.5f64..1.5) + if i == j { 0.8 } else { 0.0 }
                    })
                })
                .collect();
            let c = match Cocycle::new(m, 0, mats) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let w: Vec<DVector<f64>> = (0..n).map(|_| unit_vector(&mut rng, m)).collect();
            let p = MinSupProblem::new(&c, 0, n, w).unwrap();
            let a = DVector::from_fn(m, |_, _| rng.gen_range(-3.0f64..3.0));
            let b = DVector::from_fn(m, |_, _| rng.gen_range(-3.0f64..3.0));
            let mid = (&a + &b) * 0.5;
            let lhs = p.sup_from(&mid);
            let rhs = 0.5 * (p.sup_from(&a) + p.sup_from(&b));
            assert!(lhs <= rhs + 1e-10, "convexity violated: {} > {}", lhs, rhs);
            done += 1;
        }
    }

    #[test]
    fn min_sup_is_absolutely_homogeneous_in_forcing() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..25 {
            let n = 8;
            let factors: Vec<f64> = (0..n)
                .map(|_| {
                    let a: f64 = rng.gen_range(0.4f64..2.2);
                    if rng.gen_bool(0.5) {
                        a
                    } else {
                        -a
                    }
                })
                .collect();
            let c = Cocycle::scalar(&factors, 0).unwrap();
            let w: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_element(1, rng.gen_range(-1.0f64..1.0)))
                .collect();
            let scale: f64 = rng.gen_range(0.1f64..30.0);
            let ws: Vec<DVector<f64>> = w.iter().map(|v| v * scale).collect();
            let p1 = MinSupProblem::new(&c, 0, n, w).unwrap();
            let p2 = MinSupProblem::new(&c, 0, n, ws).unwrap();
            let f1 = solve_min_sup(&p1).unwrap().sup;
            let f2 = solve_min_sup(&p2).unwrap().sup;
            if f1 > 1e-12 {
                assert!(
                    (f2 - scale * f1).abs() <= 1e-9 * scale * f1 + 1e-12,
                    "homogeneity: {} vs {}",
                    f2,
                    scale * f1
                );
            }
        }
    }

    #[test]
    fn gain_identity_closed_form() {
        for n in [4usize, 10, 50] {
            let c = identity_1d(n);
            let g = estimate_gain(&c, 0, n, 16, 3).unwrap();
            assert!(
                (g.gain - n as f64 / 2.0).abs() <= 1e-6,
                "n = {}: gain = {}",
                n,
                g.gain
            );
        }
    }

    #[test]
    fn gain_expanding_stays_below_one() {
        let c = scalar_const(2.0, 30);
        let g = estimate_gain(&c, 0, 30, 16, 3).unwrap();
        assert!(g.gain <= 1.0 + 1e-9, "gain = {}", g.gain);
        assert!(g.gain >= 0.5, "gain = {}", g.gain);
    }

    #[test]
    fn gain_monotone_in_window_length() {
        let c = identity_1d(24);
        let mut prev = 0.0;
        for n in [6usize, 12, 18, 24] {
            let g = estimate_gain(&c, 0, n, 12, 7).unwrap().gain;
            assert!(g >= prev - 1e-9, "gain dropped: {} after {}", g, prev);
            prev = g;
        }
    }

    #[test]
    fn growth_classes_on_model_cocycles() {
        let grid = [8usize, 16, 32, 64];
        let ident = identity_1d(64);
        let fit = fit_growth(&ident, 0, &grid, 10, 5).unwrap();
        assert!(
            (fit.exponent - 1.0).abs() <= 0.1,
            "identity exponent = {}",
            fit.exponent
        );
        assert_eq!(fit.class, GrowthClass::LinearOrWorse);

        let exp = scalar_const(2.0, 64);
        let fit = fit_growth(&exp, 0, &grid, 10, 5).unwrap();
        assert!(fit.exponent < 0.1, "expanding exponent = {}", fit.exponent);
        assert_eq!(fit.class, GrowthClass::BoundedResponse);
    }

    #[test]
    fn cat_gain_bounded_via_reach_sets() {
        let c = Cocycle::constant(CatMap::matrix(), 0, 40).unwrap();
        let w: Vec<DVector<f64>> = vec![DVector::from_vec(vec![1.0, 0.0]); 40];
        let p = MinSupProblem::new(&c, 0, 40, w).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        assert_eq!(sol.method, SolveMethod::ReachSet);
        assert!(sol.sup <= 2.5, "cat response sup = {}", sol.sup);
        assert!(sol.sup >= 0.3, "cat response sup = {}", sol.sup);
    }

    #[test]
    fn reach_set_agrees_with_ellipsoid_on_borderline_windows() {
        // Window short enough for the ellipsoid path but long enough for the
        // reach-set geometry to be non-trivial.
        let c = Cocycle::constant(CatMap::matrix(), 0, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let w: Vec<DVector<f64>> = (0..12).map(|_| unit_vector(&mut rng, 2)).collect();
            let p = MinSupProblem::new(&c, 0, 12, w).unwrap();
            let f_ell = solve_ellipsoid(&p).unwrap().sup;
            let f_rs = solve_reach_set(&p).unwrap().sup;
            // The reach-set path carries the outer-polygon bias (~1%).
            assert!(
                (f_ell - f_rs).abs() <= 1.5e-2 * f_ell.max(1.0),
                "ellipsoid {} vs reach {}",
                f_ell,
                f_rs
            );
        }
    }

    #[test]
    fn transitions_and_products() {
        let c = scalar_const(2.0, 5);
        assert_eq!(c.window_product(0, 3).unwrap(), 8.0);
        assert_eq!(c.window_product(2, 0).unwrap(), 1.0);
        let t = c.transition(1, 2).unwrap();
        assert_eq!(t[(0, 0)], 4.0);
        let id = c.transition(3, 0).unwrap();
        assert_eq!(id[(0, 0)], 1.0);
        assert!(c.window_product(3, 4).is_err());
    }

    #[test]
    fn from_orbit_constant_for_linear_maps() {
        let c = Cocycle::from_orbit(&CatMap, &Pt::d2(0.3, 0.7), (0, 6)).unwrap();
        for k in 0..6 {
            assert_eq!(c.mat(k)[(0, 0)], 2.0);
        }
        assert!(c.bound() >= operator_norm(&CatMap::matrix()));

        let ident = Cocycle::from_orbit(&IdentityCircle, &Pt::d1(0.2), (-3, 3)).unwrap();
        assert!((ident.bound() - 1.1).abs() < 1e-12);
        assert_eq!(ident.k_min(), -3);
    }

    #[test]
    fn from_orbit_circle_at_repeller_is_unit() {
        let f = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let c = Cocycle::from_orbit(&f, &Pt::d1(0.0), (0, 5)).unwrap();
        for k in 0..5 {
            assert_eq!(c.factor(k), 1.0);
        }
    }

    #[test]
    fn text_round_trip() {
        let c = Cocycle::constant(CatMap::matrix(), -2, 4).unwrap();
        let text = c.to_text();
        let back = Cocycle::from_text(&text).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.k_min(), -2);
        assert_eq!(back.k_max(), 2);
        for k in -2..2 {
            assert_eq!(back.mat(k), c.mat(k));
        }
        assert!(Cocycle::from_text("1 0 3 1.1\n2.0\n").is_err());
    }
}
