//! Flat phase spaces and wrap-aware chart operations.
//!
//! All spaces here are flat quotients of ℝ^m (m ≤ 3): the exponential chart
//! at a point is translation and the log chart is wrap-aware subtraction.
//! Both are exact inverses of each other inside the injectivity radius, and
//! the chart Lipschitz factors are exactly 1.

use rand::Rng;

use crate::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A point (or a tangent vector — the spaces are flat) with up to three
/// coordinates. Coordinates beyond `dim` are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pt {
    c: [f64; MAX_DIM],
    dim: usize,
}

impl Pt {
    pub fn new(coords: &[f64]) -> Self {
        assert!(!coords.is_empty() && coords.len() <= MAX_DIM);
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Pt { c, dim: coords.len() }
    }

    pub fn d1(x: f64) -> Self {
        Pt::new(&[x])
    }

    pub fn d2(x: f64, y: f64) -> Self {
        Pt::new(&[x, y])
    }

    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Pt { c: [0.0; MAX_DIM], dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn get(&self, i: usize) -> f64 {
        debug_assert!(i < self.dim);
        self.c[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!(i < self.dim);
        self.c[i] = v;
    }

    pub fn add(&self, other: &Pt) -> Pt {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            out.c[i] += other.c[i];
        }
        out
    }

    pub fn sub(&self, other: &Pt) -> Pt {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            out.c[i] -= other.c[i];
        }
        out
    }

    pub fn scale(&self, s: f64) -> Pt {
        let mut out = *self;
        for i in 0..self.dim {
            out.c[i] *= s;
        }
        out
    }

    pub fn dot(&self, other: &Pt) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.dim).map(|i| self.c[i] * other.c[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|x| x.is_finite())
    }
}

/// Wrap a real number into the fundamental domain [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Signed difference a − b reduced to (−1/2, 1/2] on the unit circle.
pub fn wrap_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    d -= d.round();
    d
}

/// The supported flat spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// ℝ/ℤ with the quotient metric; injectivity radius 1/2.
    Circle,
    /// ℝ²/ℤ² with the quotient metric; injectivity radius 1/2 per coordinate.
    Torus2,
    /// ℝ^m, m ≤ 3.
    Plane(usize),
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Circle => 1,
            Space::Torus2 => 2,
            Space::Plane(m) => *m,
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, Space::Plane(_))
    }

    /// Injectivity radius of the translation charts.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Space::Circle | Space::Torus2 => 0.5,
            Space::Plane(_) => f64::INFINITY,
        }
    }

    /// Reduce a point to the fundamental domain.
    pub fn canonical(&self, p: &Pt) -> Pt {
        match self {
            Space::Circle => Pt::d1(wrap_unit(p.get(0))),
            Space::Torus2 => Pt::d2(wrap_unit(p.get(0)), wrap_unit(p.get(1))),
            Space::Plane(_) => *p,
        }
    }

    /// Quotient distance between two points.
    pub fn dist(&self, p: &Pt, q: &Pt) -> f64 {
        match self {
            Space::Circle => wrap_diff(p.get(0), q.get(0)).abs(),
            Space::Torus2 => {
                let dx = wrap_diff(p.get(0), q.get(0));
                let dy = wrap_diff(p.get(1), q.get(1));
                (dx * dx + dy * dy).sqrt()
            }
            Space::Plane(_) => p.sub(q).norm(),
        }
    }

    /// Exponential chart at `x`: translation by `v`, reduced to the
    /// fundamental domain.
    pub fn exp(&self, x: &Pt, v: &Pt) -> Pt {
        self.canonical(&x.add(v))
    }

    /// Log chart at `x`: the smallest representative of y − x. Errors if the
    /// points are farther apart than the injectivity radius.
    pub fn log(&self, x: &Pt, y: &Pt) -> Result<Pt> {
        let d = self.dist(x, y);
        if d >= self.injectivity_radius() {
            return Err(Error::ChartDomain(format!(
                "dist {} is not below the injectivity radius {}",
                d,
                self.injectivity_radius()
            )));
        }
        Ok(match self {
            Space::Circle => Pt::d1(wrap_diff(y.get(0), x.get(0))),
            Space::Torus2 => Pt::d2(
                wrap_diff(y.get(0), x.get(0)),
                wrap_diff(y.get(1), x.get(1)),
            ),
            Space::Plane(_) => y.sub(x),
        })
    }

    /// Uniform random point: over the fundamental domain for compact spaces,
    /// over the given box radius for planes.
    pub fn random_point<R: Rng>(&self, rng: &mut R, plane_radius: f64) -> Pt {
        match self {
            Space::Circle => Pt::d1(rng.gen::<f64>()),
            Space::Torus2 => Pt::d2(rng.gen::<f64>(), rng.gen::<f64>()),
            Space::Plane(m) => {
                let mut p = Pt::zero(*m);
                for i in 0..*m {
                    p.set(i, rng.gen_range(-plane_radius..plane_radius));
                }
                p
            }
        }
    }

    /// Uniform random tangent vector of norm strictly below `radius`.
    pub fn random_ball_vector<R: Rng>(&self, rng: &mut R, radius: f64) -> Pt {
        let m = self.dim();
        loop {
            let mut v = Pt::zero(m);
            for i in 0..m {
                v.set(i, rng.gen_range(-1.0..1.0));
            }
            let n = v.norm();
            if n > 1e-12 && n <= 1.0 {
                // Rescale for a uniform radial law in dimension m.
                let r = radius * rng.gen::<f64>().powf(1.0 / m as f64);
                return v.scale(r / n);
            }
        }
    }
}
