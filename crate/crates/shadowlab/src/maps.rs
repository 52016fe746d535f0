//! Smooth test maps on flat spaces.
//!
//! The centerpiece is [`CircleCubic`]: a circle diffeomorphism with exactly
//! two fixed points, a neutral repeller at 0 where the map is x ↦ x + x³ in
//! local coordinates, and a hyperbolic attractor at 1/2 where it is x ↦ x/2.
//! The two complementary arcs are monotone quintic Hermite blends matching
//! value and first two derivatives of the local models, so the map is C² and
//! every point outside a neighborhood of the repeller falls into the
//! contracting neighborhood after a bounded number of steps.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::space::{wrap_diff, wrap_unit, Pt, Space};
use crate::{Error, Result};

/// An evaluatable self-map of a flat space with derivative data.
///
/// `c2_bound` is a constant S such that
/// `dist(f(exp_x(v)), exp_{f(x)}(Df(x) v)) ≤ S |v|²` for all sampled x and
/// all |v| below the injectivity radius.
pub trait SmoothMap: Sync + Send {
    fn space(&self) -> Space;
    fn name(&self) -> &str;
    fn eval(&self, p: &Pt) -> Pt;
    fn derivative(&self, p: &Pt) -> DMatrix<f64>;
    fn inverse(&self, p: &Pt) -> Option<Pt> {
        let _ = p;
        None
    }
    fn c2_bound(&self) -> f64;

    /// Attracting fixed points, if the map declares any (used by the
    /// adversarial noise model).
    fn attracting_fixed_points(&self) -> Vec<Pt> {
        Vec::new()
    }

    /// Repelling (possibly one-sided neutral) fixed points, if declared
    /// (used to seed worst-case shadowing trials).
    fn repelling_fixed_points(&self) -> Vec<Pt> {
        Vec::new()
    }

    /// Bounding box half-width for divergence checks on planes.
    fn plane_bound(&self) -> f64 {
        1e6
    }

    /// A reasonable random starting point for experiments: uniform over
    /// compact spaces, near the interesting set for maps on planes.
    fn typical_point(&self, rng: &mut ChaCha8Rng) -> Pt {
        self.space().random_point(rng, 1.0)
    }

    /// Scalar evaluation shortcut for one-dimensional maps.
    fn eval1(&self, x: f64) -> f64 {
        debug_assert_eq!(self.space().dim(), 1);
        self.eval(&Pt::d1(x)).get(0)
    }

    /// Scalar inverse shortcut for one-dimensional maps.
    fn inverse1(&self, y: f64) -> Option<f64> {
        self.inverse(&Pt::d1(y)).map(|p| p.get(0))
    }

    /// k-th forward iterate.
    fn iterate(&self, p: &Pt, k: usize) -> Pt {
        let mut q = *p;
        for _ in 0..k {
            q = self.eval(&q);
        }
        q
    }

    /// k-th backward iterate; requires `inverse`.
    fn iterate_back(&self, p: &Pt, k: usize) -> Option<Pt> {
        let mut q = *p;
        for _ in 0..k {
            q = self.inverse(&q)?;
        }
        Some(q)
    }
}

/// Verify |g(x) − g(y)| ≥ ε + ε³/4 for g(x) = x + x³ whenever |x − y| ≥ ε.
///
/// This is the one-step expansion gap of the cubic local model; it must hold
/// for every valid input and is exercised as a property test elsewhere.
pub fn expansion_gap(x: f64, y: f64, eps: f64) -> Result<bool> {
    // Relative slack so that inputs sitting exactly on the boundary are not
    // rejected for rounding of x - y.
    if !(eps > 0.0) || (x - y).abs() < eps * (1.0 - 1e-9) {
        return Err(Error::InvalidParams(format!(
            "expansion_gap requires |x - y| >= eps > 0, got |{} - {}| < {}",
            x, y, eps
        )));
    }
    let g = |t: f64| t + t * t * t;
    Ok((g(x) - g(y)).abs() >= eps + eps.powi(3) / 4.0)
}

// ---------------------------------------------------------------------------
// Quintic Hermite blending
// ---------------------------------------------------------------------------

/// Quintic Hermite segment on [a, b] matching value and first two
/// derivatives at both endpoints.
#[derive(Clone, Debug)]
struct QuinticSegment {
    a: f64,
    b: f64,
    /// (value, d1, d2) at a and at b.
    left: (f64, f64, f64),
    right: (f64, f64, f64),
}

impl QuinticSegment {
    fn h(t: f64) -> [f64; 6] {
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            0.5 * t3 - t4 + 0.5 * t5,
        ]
    }

    fn dh(t: f64) -> [f64; 6] {
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        [
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            1.5 * t2 - 4.0 * t3 + 2.5 * t4,
        ]
    }

    fn coeffs(&self) -> [f64; 6] {
        let h = self.b - self.a;
        [
            self.left.0,
            h * self.left.1,
            h * h * self.left.2,
            self.right.0,
            h * self.right.1,
            h * h * self.right.2,
        ]
    }

    fn eval(&self, x: f64) -> f64 {
        let t = (x - self.a) / (self.b - self.a);
        let h = Self::h(t);
        let c = self.coeffs();
        (0..6).map(|i| c[i] * h[i]).sum()
    }

    fn deriv(&self, x: f64) -> f64 {
        let w = self.b - self.a;
        let t = (x - self.a) / w;
        let dh = Self::dh(t);
        let c = self.coeffs();
        (0..6).map(|i| c[i] * dh[i]).sum::<f64>() / w
    }
}

// ---------------------------------------------------------------------------
// Circle map with a cubic neutral repeller
// ---------------------------------------------------------------------------

/// Parameters of the circle map: `delta` is the half-width of the two local
/// neighborhoods, in local coordinates. The repeller sits at 0 and the
/// attractor at 1/2 on ℝ/ℤ.
#[derive(Clone, Copy, Debug)]
pub struct CircleCubicParams {
    pub delta: f64,
}

impl Default for CircleCubicParams {
    fn default() -> Self {
        CircleCubicParams { delta: 0.1 }
    }
}

/// The circle map itself. Piecewise definition on [0,1):
/// x + x³ around 0 (local coordinates), 1/2 + t/2 around 1/2
/// (t the local coordinate), quintic blends on the two arcs in between.
#[derive(Clone, Debug)]
pub struct CircleCubic {
    delta: f64,
    up: QuinticSegment,
    down: QuinticSegment,
    c2: f64,
    /// Smallest N > 2 with f^N(S¹∖U_u) ⊂ U_s and f^{−N}(S¹∖U_s) ⊂ U_u.
    funnel_steps: usize,
}

impl CircleCubic {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Position of the neutral repelling fixed point.
    pub fn repeller(&self) -> f64 {
        0.0
    }

    /// Position of the contracting fixed point.
    pub fn attractor(&self) -> f64 {
        0.5
    }

    pub fn funnel_steps(&self) -> usize {
        self.funnel_steps
    }

    /// Membership in the repeller neighborhood U_u.
    pub fn in_repeller_nbhd(&self, x: f64) -> bool {
        wrap_diff(x, 0.0).abs() < self.delta
    }

    /// Membership in the attractor neighborhood U_s.
    pub fn in_attractor_nbhd(&self, x: f64) -> bool {
        wrap_diff(x, 0.5).abs() < self.delta
    }

    fn eval_raw(&self, x: f64) -> f64 {
        let x = wrap_unit(x);
        let d = self.delta;
        // Local coordinate around the repeller.
        let r = wrap_diff(x, 0.0);
        if r.abs() <= d {
            return wrap_unit(r + r * r * r);
        }
        let s = wrap_diff(x, 0.5);
        if s.abs() <= d {
            return wrap_unit(0.5 + s / 2.0);
        }
        if x > d && x < 0.5 - d {
            wrap_unit(self.up.eval(x))
        } else {
            wrap_unit(self.down.eval(x))
        }
    }

    fn deriv_raw(&self, x: f64) -> f64 {
        let x = wrap_unit(x);
        let d = self.delta;
        let r = wrap_diff(x, 0.0);
        if r.abs() <= d {
            return 1.0 + 3.0 * r * r;
        }
        let s = wrap_diff(x, 0.5);
        if s.abs() <= d {
            return 0.5;
        }
        if x > d && x < 0.5 - d {
            self.up.deriv(x)
        } else {
            // The descending arc lives on (0.5+d, 1-d) in lifted coordinates.
            self.down.deriv(if x < 0.5 { x + 1.0 } else { x })
        }
    }

    fn inverse_raw(&self, y: f64) -> f64 {
        let y = wrap_unit(y);
        let d = self.delta;
        // Invert the contracting piece: image of U_s is (1/2 - d/2, 1/2 + d/2).
        let s = wrap_diff(y, 0.5);
        if s.abs() <= d / 2.0 {
            return wrap_unit(0.5 + 2.0 * s);
        }
        // Invert the cubic piece: image of U_u is (-(d + d³), d + d³).
        let r = wrap_diff(y, 0.0);
        if r.abs() <= d + d * d * d {
            let mut x = r;
            for _ in 0..60 {
                let fx = x + x * x * x - r;
                let dfx = 1.0 + 3.0 * x * x;
                let step = fx / dfx;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            if x.abs() <= d {
                return wrap_unit(x);
            }
        }
        // Fall back to monotone bisection on the lifted map.
        self.invert_monotone(y)
    }

    /// Invert via bisection using that the lift F satisfies F(x+1) = F(x)+1.
    fn invert_monotone(&self, y: f64) -> f64 {
        let f0 = self.lift_from(0.0, self.eval_raw(0.0));
        // x ∈ [0, 1) maps to F(x) ∈ [f0, f0 + 1); shift y into that range.
        let mut yy = y;
        while yy < f0 {
            yy += 1.0;
        }
        while yy >= f0 + 1.0 {
            yy -= 1.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut flo = f0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let fm = self.lift_near(mid, flo, lo);
            if fm < yy {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        wrap_unit(0.5 * (lo + hi))
    }

    /// Continuous lift value at `x` given a nearby anchor (x0, F(x0)).
    fn lift_near(&self, x: f64, fx0: f64, x0: f64) -> f64 {
        let raw = self.eval_raw(x);
        // Expected drift of the lift between x0 and x is close to x - x0.
        let guess = fx0 + (x - x0);
        raw + (guess - raw).round()
    }

    fn lift_from(&self, _x: f64, raw: f64) -> f64 {
        // Anchor the lift so that F(0) = raw ∈ [0,1).
        raw
    }
}

impl SmoothMap for CircleCubic {
    fn space(&self) -> Space {
        Space::Circle
    }

    fn name(&self) -> &str {
        "circle_cubic"
    }

    fn eval(&self, p: &Pt) -> Pt {
        Pt::d1(self.eval_raw(p.get(0)))
    }

    fn derivative(&self, p: &Pt) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.deriv_raw(p.get(0)))
    }

    fn inverse(&self, p: &Pt) -> Option<Pt> {
        Some(Pt::d1(self.inverse_raw(p.get(0))))
    }

    fn c2_bound(&self) -> f64 {
        self.c2
    }

    fn attracting_fixed_points(&self) -> Vec<Pt> {
        vec![Pt::d1(0.5)]
    }

    fn repelling_fixed_points(&self) -> Vec<Pt> {
        vec![Pt::d1(0.0)]
    }
}

/// Build the circle map, checking monotonicity of the blends and the
/// funnel conditions by dense sampling.
pub fn build_circle_cubic(params: CircleCubicParams) -> Result<CircleCubic> {
    let d = params.delta;
    if !(d > 0.0 && d < 0.125) {
        return Err(Error::InvalidParams(format!(
            "delta must lie in (0, 1/8), got {}",
            d
        )));
    }
    // Ascending arc from the edge of U_u to the edge of U_s.
    let up = QuinticSegment {
        a: d,
        b: 0.5 - d,
        left: (d + d * d * d, 1.0 + 3.0 * d * d, 6.0 * d),
        right: (0.5 - d / 2.0, 0.5, 0.0),
    };
    // Descending arc from the other edge of U_s back to U_u, in lifted
    // coordinates on (0.5 + d, 1 - d).
    let down = QuinticSegment {
        a: 0.5 + d,
        b: 1.0 - d,
        left: (0.5 + d / 2.0, 0.5, 0.0),
        right: (1.0 - d - d * d * d, 1.0 + 3.0 * d * d, -6.0 * d),
    };

    let mut map = CircleCubic {
        delta: d,
        up,
        down,
        c2: 0.0,
        funnel_steps: 0,
    };

    // Monotonicity and direction of motion on both arcs.
    let grid = 4000;
    for seg in [&map.up, &map.down] {
        for i in 0..=grid {
            let x = seg.a + (seg.b - seg.a) * i as f64 / grid as f64;
            if seg.deriv(x) <= 0.0 {
                return Err(Error::Construction(format!(
                    "blend loses monotonicity at x = {}",
                    x
                )));
            }
        }
    }
    for i in 1..grid {
        let x = d + (0.5 - 2.0 * d) * i as f64 / grid as f64;
        if map.up.eval(x) <= x {
            return Err(Error::Construction(
                "ascending arc fails to move points toward the attractor".into(),
            ));
        }
        let y = 0.5 + d + (0.5 - 2.0 * d) * i as f64 / grid as f64;
        if map.down.eval(y) >= y {
            return Err(Error::Construction(
                "descending arc fails to move points toward the attractor".into(),
            ));
        }
    }

    // Funnel condition: some N > 2 sends the complement of U_u into U_s
    // forward and the complement of U_s into U_u backward, and f²(U_u)
    // misses U_s.
    let samples = 10_000;
    let mut n_fwd = None;
    'outer: for n in 3..400usize {
        for i in 0..=samples {
            let x = d + (1.0 - 2.0 * d) * i as f64 / samples as f64;
            let y = map.iterate(&Pt::d1(x), n).get(0);
            if !map.in_attractor_nbhd(y) {
                continue 'outer;
            }
        }
        n_fwd = Some(n);
        break;
    }
    let n_fwd = n_fwd.ok_or_else(|| {
        Error::Construction("no forward funnel step count below 400".into())
    })?;
    for i in 0..=samples {
        let x = 0.5 + d + (1.0 - 2.0 * d) * i as f64 / samples as f64;
        let y = map
            .iterate_back(&Pt::d1(wrap_unit(x)), n_fwd)
            .expect("circle map has an inverse")
            .get(0);
        if !map.in_repeller_nbhd(y) {
            return Err(Error::Construction(format!(
                "backward funnel fails at N = {}, start {}",
                n_fwd, x
            )));
        }
    }
    let a2 = map.iterate(&Pt::d1(wrap_unit(-d)), 2).get(0);
    let b2 = map.iterate(&Pt::d1(d), 2).get(0);
    // f²(U_u) is the arc between the images of the endpoints; it must miss U_s.
    let top = wrap_diff(b2, 0.0).abs().max(wrap_diff(a2, 0.0).abs());
    if top >= 0.5 - d {
        return Err(Error::Construction(
            "f²(U_u) reaches the attractor neighborhood".into(),
        ));
    }
    map.funnel_steps = n_fwd;

    // Measure the second-order chart defect.
    map.c2 = estimate_c2_bound(&map, &[], 0.05);
    Ok(map)
}

// ---------------------------------------------------------------------------
// Linear and polynomial test maps
// ---------------------------------------------------------------------------

/// Hyperbolic automorphism [[2,1],[1,1]] of the 2-torus.
#[derive(Clone, Copy, Debug, Default)]
pub struct CatMap;

impl SmoothMap for CatMap {
    fn space(&self) -> Space {
        Space::Torus2
    }

    fn name(&self) -> &str {
        "cat"
    }

    fn eval(&self, p: &Pt) -> Pt {
        let (x, y) = (p.get(0), p.get(1));
        Pt::d2(wrap_unit(2.0 * x + y), wrap_unit(x + y))
    }

    fn derivative(&self, _p: &Pt) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])
    }

    fn inverse(&self, p: &Pt) -> Option<Pt> {
        let (x, y) = (p.get(0), p.get(1));
        Some(Pt::d2(wrap_unit(x - y), wrap_unit(-x + 2.0 * y)))
    }

    fn c2_bound(&self) -> f64 {
        0.0
    }
}

impl CatMap {
    pub fn matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])
    }

    /// Eigenvalues (λ_u, λ_s) = ((3+√5)/2, (3−√5)/2).
    pub fn eigenvalues() -> (f64, f64) {
        let r = 5.0f64.sqrt();
        ((3.0 + r) / 2.0, (3.0 - r) / 2.0)
    }

    /// Unit eigenvectors (unstable, stable).
    pub fn eigenvectors() -> (Pt, Pt) {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let u = Pt::d2(phi, 1.0);
        let s = Pt::d2(1.0, -phi);
        (u.scale(1.0 / u.norm()), s.scale(1.0 / s.norm()))
    }
}

/// Planar contraction x ↦ x/2 on ℝ².
#[derive(Clone, Copy, Debug, Default)]
pub struct PlanarContraction;

impl SmoothMap for PlanarContraction {
    fn space(&self) -> Space {
        Space::Plane(2)
    }

    fn name(&self) -> &str {
        "contraction"
    }

    fn eval(&self, p: &Pt) -> Pt {
        p.scale(0.5)
    }

    fn derivative(&self, _p: &Pt) -> DMatrix<f64> {
        DMatrix::from_diagonal_element(2, 2, 0.5)
    }

    fn inverse(&self, p: &Pt) -> Option<Pt> {
        Some(p.scale(2.0))
    }

    fn c2_bound(&self) -> f64 {
        0.0
    }

    fn attracting_fixed_points(&self) -> Vec<Pt> {
        vec![Pt::zero(2)]
    }

    fn plane_bound(&self) -> f64 {
        1e9
    }
}

/// Identity map on the circle.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityCircle;

impl SmoothMap for IdentityCircle {
    fn space(&self) -> Space {
        Space::Circle
    }

    fn name(&self) -> &str {
        "identity_circle"
    }

    fn eval(&self, p: &Pt) -> Pt {
        Pt::d1(wrap_unit(p.get(0)))
    }

    fn derivative(&self, _p: &Pt) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn inverse(&self, p: &Pt) -> Option<Pt> {
        Some(*p)
    }

    fn c2_bound(&self) -> f64 {
        0.0
    }
}

/// Hénon map (x, y) ↦ (1 − a x² + y, b x) with the classical parameters.
#[derive(Clone, Copy, Debug)]
pub struct HenonMap {
    pub a: f64,
    pub b: f64,
}

impl Default for HenonMap {
    fn default() -> Self {
        HenonMap { a: 1.4, b: 0.3 }
    }
}

impl SmoothMap for HenonMap {
    fn space(&self) -> Space {
        Space::Plane(2)
    }

    fn name(&self) -> &str {
        "henon"
    }

    fn eval(&self, p: &Pt) -> Pt {
        let (x, y) = (p.get(0), p.get(1));
        Pt::d2(1.0 - self.a * x * x + y, self.b * x)
    }

    fn derivative(&self, p: &Pt) -> DMatrix<f64> {
        let x = p.get(0);
        DMatrix::from_row_slice(2, 2, &[-2.0 * self.a * x, 1.0, self.b, 0.0])
    }

    fn inverse(&self, p: &Pt) -> Option<Pt> {
        let (big_x, big_y) = (p.get(0), p.get(1));
        let x = big_y / self.b;
        let y = big_x - 1.0 + self.a * x * x;
        Some(Pt::d2(x, y))
    }

    fn c2_bound(&self) -> f64 {
        // The only curvature is the quadratic term: remainder = (-a vx², 0).
        self.a
    }

    fn plane_bound(&self) -> f64 {
        20.0
    }

    fn typical_point(&self, rng: &mut ChaCha8Rng) -> Pt {
        // Land on the attractor: a long transient from a point in the basin.
        let extra = (rng.gen::<u64>() % 256) as usize;
        self.iterate(&Pt::d2(0.1, 0.1), 600 + extra)
    }
}

// ---------------------------------------------------------------------------
// Catalog and estimators
// ---------------------------------------------------------------------------

/// All built-in maps, addressable by name.
pub fn builtin_maps() -> Vec<Box<dyn SmoothMap>> {
    vec![
        Box::new(build_circle_cubic(CircleCubicParams::default())
            .expect("default circle map construction must succeed")),
        Box::new(CatMap),
        Box::new(PlanarContraction),
        Box::new(IdentityCircle),
        Box::new(HenonMap::default()),
    ]
}

/// Look up a built-in map by name; `circle_cubic` honors a custom delta.
pub fn map_by_name(name: &str, circle_delta: Option<f64>) -> Result<Box<dyn SmoothMap>> {
    match name {
        "circle_cubic" => {
            let params = CircleCubicParams {
                delta: circle_delta.unwrap_or(0.1),
            };
            Ok(Box::new(build_circle_cubic(params)?))
        }
        "cat" => Ok(Box::new(CatMap)),
        "contraction" => Ok(Box::new(PlanarContraction)),
        "identity_circle" => Ok(Box::new(IdentityCircle)),
        "henon" => Ok(Box::new(HenonMap::default())),
        other => Err(Error::InvalidParams(format!("unknown map '{}'", other))),
    }
}

/// Sampled second-order chart defect: the smallest S (with a 1.1 safety
/// factor) such that dist(f(exp_x v), exp_{f(x)}(Df(x) v)) ≤ S|v|² over a
/// dense grid of (x, v) with |v| ≤ radius.
pub fn estimate_c2_bound(map: &dyn SmoothMap, region: &[Pt], radius: f64) -> f64 {
    let space = map.space();
    assert!(radius <= space.injectivity_radius());
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_edc2);
    let points: Vec<Pt> = if region.is_empty() {
        (0..4000).map(|_| space.random_point(&mut rng, 2.0)).collect()
    } else {
        region.to_vec()
    };
    let mut sup = 0.0f64;
    for x in &points {
        let fx = map.eval(x);
        let df = map.derivative(x);
        for _ in 0..24 {
            let v = space.random_ball_vector(&mut rng, radius);
            let n2 = v.norm() * v.norm();
            if n2 < 1e-20 {
                continue;
            }
            let fy = map.eval(&space.exp(x, &v));
            let mut dfv = Pt::zero(space.dim());
            for i in 0..space.dim() {
                let mut acc = 0.0;
                for j in 0..space.dim() {
                    acc += df[(i, j)] * v.get(j);
                }
                dfv.set(i, acc);
            }
            let lin = space.exp(&fx, &dfv);
            let defect = space.dist(&fy, &lin);
            // Ignore pure rounding noise, which otherwise dominates after
            // division by |v|² for affine maps.
            if defect > 1e-13 {
                sup = sup.max(defect / n2);
            }
        }
    }
    if sup < 1e-7 {
        0.0
    } else {
        1.1 * sup
    }
}

/// Central finite-difference cross-check of the map derivative.
pub fn derivative_consistency(map: &dyn SmoothMap, samples: usize, seed: u64) -> f64 {
    let space = map.space();
    let m = space.dim();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = space.random_point(&mut rng, 1.5);
        let df = map.derivative(&x);
        for j in 0..m {
            let mut e = Pt::zero(m);
            e.set(j, h);
            let fp = map.eval(&space.exp(&x, &e));
            let fm = map.eval(&space.exp(&x, &e.scale(-1.0)));
            let fx = map.eval(&x);
            for i in 0..m {
                // Wrap-aware central difference through the chart at f(x).
                let dp = space.log(&fx, &fp).unwrap_or_else(|_| fp.sub(&fx));
                let dm = space.log(&fx, &fm).unwrap_or_else(|_| fm.sub(&fx));
                let fd = (dp.get(i) - dm.get(i)) / (2.0 * h);
                let denom = df[(i, j)].abs().max(1.0);
                worst = worst.max((fd - df[(i, j)]).abs() / denom);
            }
        }
    }
    worst
}
