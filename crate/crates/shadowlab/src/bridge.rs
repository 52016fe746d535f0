//! Two-way constructions between the cocycle and shadowing sides: lift
//! solutions of the inhomogeneous recursion to pseudotrajectories of the map,
//! and extract linearized residuals of exact orbits around base orbits.
//!
//! On the flat spaces used here the charts are translations, so the defect
//! of a lifted sequence is controlled by S·|d v|² + d |w| ≤ (S+2)·d whenever
//! (d · max|v|)² < d, and the one-step residual of the chart coordinates of
//! an exact orbit obeys |c_{k+1} − A_k c_k| ≤ 2 S |c_k|².

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cocycle::{fit_growth, Cocycle};
use crate::maps::SmoothMap;
use crate::pseudo::Pseudotrajectory;
use crate::space::Pt;
use crate::{Error, Result};

/// A pseudotrajectory obtained by displacing a base orbit along a scaled
/// solution sequence.
#[derive(Clone, Debug)]
pub struct LiftedPseudo {
    /// The base orbit p_k.
    pub base: Vec<Pt>,
    /// The displacement vectors v_k.
    pub displacement: Vec<DVector<f64>>,
    /// Displacement scale d.
    pub scale: f64,
    /// The lifted sequence y_k = exp_{p_k}(d v_k).
    pub traj: Pseudotrajectory,
    /// The guaranteed defect bound (S+2)·d.
    pub defect_bound: f64,
    /// The measured sup of one-step defects.
    pub measured_defect: f64,
}

/// Lift a solution sequence along the orbit of `p0`:
/// y_k = exp_{p_k}(d·v_k), a ((S+2)·d)-pseudotrajectory.
pub fn lift_solution_to_pseudo(
    map: &dyn SmoothMap,
    p0: &Pt,
    displacement: &[DVector<f64>],
    d: f64,
) -> Result<LiftedPseudo> {
    if displacement.len() < 2 {
        return Err(Error::InvalidParams("need at least two vectors".into()));
    }
    let space = map.space();
    let m = space.dim();
    let sup_v = displacement.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(d > 0.0) || d * sup_v >= space.injectivity_radius() {
        return Err(Error::InvalidParams(format!(
            "displacement scale {} exceeds the injectivity radius",
            d * sup_v
        )));
    }
    if (d * sup_v) * (d * sup_v) >= d {
        return Err(Error::InvalidParams(
            "need (d · max|v|)^2 < d for the quadratic defect to stay linear in d".into(),
        ));
    }
    let mut base = Vec::with_capacity(displacement.len());
    let mut points = Vec::with_capacity(displacement.len());
    let mut p = space.canonical(p0);
    for v in displacement {
        let mut step = Pt::zero(m);
        for i in 0..m {
            step.set(i, d * v[i]);
        }
        base.push(p);
        points.push(space.exp(&p, &step));
        p = map.eval(&p);
    }
    let s = map.c2_bound();
    let defect_bound = (s + 2.0) * d;
    let mut measured = 0.0f64;
    for w in points.windows(2) {
        measured = measured.max(space.dist(&w[1], &map.eval(&w[0])));
    }
    if measured > defect_bound {
        return Err(Error::Construction(format!(
            "lifted defect {} exceeds the bound {}",
            measured, defect_bound
        )));
    }
    Ok(LiftedPseudo {
        base,
        displacement: displacement.to_vec(),
        scale: d,
        traj: Pseudotrajectory {
            points,
            k_first: 0,
            defect: defect_bound,
        },
        defect_bound,
        measured_defect: measured,
    })
}

/// Rounding floor for the residual bound: offsets contracted to (sub-)
/// rounding scale produce residuals dominated by the floating-point noise of
/// the orbit points themselves.
const RESIDUAL_FP_FLOOR: f64 = 1e-13;

/// Chart coordinates of an exact orbit around a base orbit, with one-step
/// linearization residuals.
#[derive(Clone, Debug)]
pub struct ResidualTrace {
    /// c_k = log_{p_k}(x_k).
    pub offsets: Vec<Pt>,
    /// t_k = c_{k+1} − A_k c_k.
    pub residuals: Vec<Pt>,
    pub max_residual: f64,
    /// Largest observed |t_k| / (2 S |c_k|² + rounding floor); at most 1
    /// when the quadratic bound holds.
    pub worst_ratio: f64,
}

/// Extract the linearized residuals of the exact orbit x around the base
/// orbit p. Requires dist(p_k, x_k) below the injectivity radius and x to be
/// an actual orbit of the map.
pub fn orbit_residual_trace(
    map: &dyn SmoothMap,
    base: &[Pt],
    orbit: &[Pt],
) -> Result<ResidualTrace> {
    if base.len() != orbit.len() || base.len() < 2 {
        return Err(Error::InvalidParams(
            "base and orbit must have equal length at least 2".into(),
        ));
    }
    let space = map.space();
    let m = space.dim();
    for w in orbit.windows(2) {
        let defect = space.dist(&w[1], &map.eval(&w[0]));
        if defect > 1e-10 {
            return Err(Error::InvalidParams(format!(
                "the given orbit is not exact: one-step defect {}",
                defect
            )));
        }
    }
    let mut offsets = Vec::with_capacity(base.len());
    for (p, x) in base.iter().zip(orbit) {
        offsets.push(space.log(p, x)?);
    }
    let s = map.c2_bound();
    let mut residuals = Vec::with_capacity(base.len() - 1);
    let mut max_residual = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for k in 0..base.len() - 1 {
        let a = map.derivative(&base[k]);
        let mut lin = Pt::zero(m);
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += a[(i, j)] * offsets[k].get(j);
            }
            lin.set(i, acc);
        }
        let t = offsets[k + 1].sub(&lin);
        let tn = t.norm();
        max_residual = max_residual.max(tn);
        let c2 = offsets[k].norm() * offsets[k].norm();
        let bound = 2.0 * s * c2 + RESIDUAL_FP_FLOOR;
        worst_ratio = worst_ratio.max(tn / bound);
        residuals.push(t);
    }
    Ok(ResidualTrace {
        offsets,
        residuals,
        max_residual,
        worst_ratio,
    })
}

/// One row of the orbit growth survey.
#[derive(Clone, Debug)]
pub struct GrowthRow {
    pub map: String,
    pub orbit_id: usize,
    pub window: usize,
    pub gain: f64,
    pub exponent: f64,
}

/// Survey the response-gain growth of derivative cocycles along sampled
/// orbits: for each start, build the cocycle, sample worst-case gains over
/// the window grid, and fit the growth exponent.
pub fn orbit_growth_survey(
    map: &dyn SmoothMap,
    starts: &[Pt],
    window_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<GrowthRow>> {
    if window_grid.len() < 4 {
        return Err(Error::InvalidParams(
            "the survey needs at least 4 window lengths".into(),
        ));
    }
    let n_max = *window_grid.iter().max().unwrap();
    let mut rows = Vec::new();
    for (orbit_id, p0) in starts.iter().enumerate() {
        let cocycle = Cocycle::from_orbit(map, p0, (0, n_max as i64))?;
        let fit = fit_growth(&cocycle, 0, window_grid, samples, seed ^ orbit_id as u64)?;
        for (n, gain) in &fit.pairs {
            rows.push(GrowthRow {
                map: map.name().to_string(),
                orbit_id,
                window: *n,
                gain: *gain,
                exponent: fit.exponent,
            });
        }
    }
    Ok(rows)
}

/// Random displacement solutions for defect-bound sweeps: unit forcing run
/// through the min-sup solver along the orbit of `p0`. The lift bound
/// quantifies over exact solutions of the recursion, so when the stiff
/// solver path can only return an approximate witness sequence the forward
/// propagation from zero is used instead (always recursion-exact, at the
/// cost of a larger sup).
pub fn random_lift_displacement(
    map: &dyn SmoothMap,
    p0: &Pt,
    len: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let m = map.space().dim();
    let cocycle = Cocycle::from_orbit(map, p0, (0, len as i64))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forcing: Vec<DVector<f64>> = (0..len)
        .map(|_| {
            let v = DVector::from_fn(m, |_, _| rng.gen_range(-1.0f64..1.0));
            let n = v.norm();
            if n > 1e-9 {
                v / n
            } else {
                DVector::from_element(m, 1.0 / (m as f64).sqrt())
            }
        })
        .collect();
    let problem = crate::cocycle::MinSupProblem::new(&cocycle, 0, len, forcing.clone())?;
    let values = match crate::cocycle::solve_min_sup(&problem) {
        Ok(sol) if sol.residual_sup <= 1e-9 * (1.0 + sol.sup) => sol.values,
        _ => problem.propagate(&DVector::zeros(m)),
    };
    // The recursion is linear: scaling a solution scales its forcing, so a
    // huge sup can be normalized away (|w| ≤ 1 still holds after shrinking).
    let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if sup > 100.0 {
        let s = 100.0 / sup;
        Ok(values.into_iter().map(|v| v * s).collect())
    } else {
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{solve_min_sup, MinSupProblem};
    use crate::maps::{build_circle_cubic, CatMap, CircleCubicParams, IdentityCircle};

    #[test]
    fn zero_displacement_lifts_to_base_orbit() {
        let map = CatMap;
        let vs = vec![DVector::zeros(2); 10];
        let lift = lift_solution_to_pseudo(&map, &Pt::d2(0.2, 0.7), &vs, 1e-4).unwrap();
        assert_eq!(lift.measured_defect, 0.0);
        for (b, y) in lift.base.iter().zip(&lift.traj.points) {
            assert_eq!(b, y);
        }
    }

    #[test]
    fn cat_lift_defect_within_linear_bound() {
        // S = 0 for the cat map: the bound collapses to 2d.
        let map = CatMap;
        let c = Cocycle::from_orbit(&map, &Pt::d2(0.3, 0.1), (0, 12)).unwrap();
        let w = vec![DVector::from_vec(vec![1.0, 0.0]); 12];
        let p = MinSupProblem::new(&c, 0, 12, w).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        let d = 1e-5;
        let lift = lift_solution_to_pseudo(&map, &Pt::d2(0.3, 0.1), &sol.values, d).unwrap();
        assert!(
            lift.measured_defect <= 2.0 * d + 1e-15,
            "defect {} vs 2d = {}",
            lift.measured_defect,
            2.0 * d
        );
    }

    #[test]
    fn circle_lift_defect_within_bound() {
        let map = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let c = Cocycle::from_orbit(&map, &Pt::d1(0.02), (0, 40)).unwrap();
        let w = vec![DVector::from_element(1, 1.0); 40];
        let p = MinSupProblem::new(&c, 0, 40, w).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        let d = 1e-6;
        let lift = lift_solution_to_pseudo(&map, &Pt::d1(0.02), &sol.values, d).unwrap();
        assert!(lift.measured_defect <= lift.defect_bound);
        assert!(lift.defect_bound >= 2.0 * d);
    }

    #[test]
    fn lift_preconditions_are_enforced() {
        let map = CatMap;
        let vs = vec![DVector::from_element(2, 1e4); 5];
        // (d · max|v|)² = (1e-3·1.41e4)² = 200 ≥ d.
        assert!(lift_solution_to_pseudo(&map, &Pt::d2(0.0, 0.0), &vs, 1e-3).is_err());
    }

    #[test]
    fn residuals_vanish_on_matching_orbits() {
        let map = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let p0 = Pt::d1(0.23);
        let orbit: Vec<Pt> = (0..30).map(|k| map.iterate(&p0, k)).collect();
        let trace = orbit_residual_trace(&map, &orbit, &orbit).unwrap();
        assert_eq!(trace.max_residual, 0.0);
    }

    #[test]
    fn residuals_vanish_for_linear_maps() {
        // A fixed small offset evolves exactly by the derivative.
        let map = CatMap;
        let p0 = Pt::d2(0.21, 0.77);
        let x0 = Pt::d2(0.21 + 2e-7, 0.77 - 1e-7);
        // The offset grows by the top eigenvalue each step; keep the window
        // short enough to stay inside the chart.
        let base: Vec<Pt> = (0..14).map(|k| map.iterate(&p0, k)).collect();
        let orbit: Vec<Pt> = (0..14).map(|k| map.iterate(&x0, k)).collect();
        let trace = orbit_residual_trace(&map, &base, &orbit).unwrap();
        assert!(trace.max_residual < 1e-12, "residual {}", trace.max_residual);
    }

    #[test]
    fn circle_residuals_obey_quadratic_bound() {
        let map = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let p0 = Pt::d1(0.03);
        let x0 = Pt::d1(0.03 + 1e-4);
        let base: Vec<Pt> = (0..50).map(|k| map.iterate(&p0, k)).collect();
        let orbit: Vec<Pt> = (0..50).map(|k| map.iterate(&x0, k)).collect();
        let trace = orbit_residual_trace(&map, &base, &orbit).unwrap();
        assert!(trace.max_residual > 0.0);
        assert!(
            trace.worst_ratio <= 1.0,
            "quadratic bound violated: ratio {}",
            trace.worst_ratio
        );
    }

    #[test]
    fn rejects_inexact_orbits() {
        let map = CatMap;
        let p0 = Pt::d2(0.2, 0.3);
        let base: Vec<Pt> = (0..10).map(|k| map.iterate(&p0, k)).collect();
        let mut fake = base.clone();
        let moved = fake[5];
        fake[5] = Pt::d2(moved.get(0) + 1e-4, moved.get(1));
        assert!(orbit_residual_trace(&map, &base, &fake).is_err());
    }

    #[test]
    fn lift_then_extract_reproduces_forcing() {
        // On flat spaces c_k = d v_k exactly, so the step residuals of the
        // lifted sequence against the base orbit recover d·w_{k+1}.
        let map = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let space = map.space();
        let p0 = Pt::d1(0.02);
        let len = 30;
        let c = Cocycle::from_orbit(&map, &p0, (0, len as i64)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<DVector<f64>> = (0..len)
            .map(|_| DVector::from_element(1, if rng.gen_bool(0.5) { 1.0 } else { -1.0 }))
            .collect();
        let p = MinSupProblem::new(&c, 0, len, w.clone()).unwrap();
        let sol = solve_min_sup(&p).unwrap();
        let d = 1e-6;
        let lift = lift_solution_to_pseudo(&map, &p0, &sol.values, d).unwrap();
        let sup_v = sol.sup;
        #[allow(clippy::needless_range_loop)]
        for k in 0..len - 1 {
            let ck = space.log(&lift.base[k], &lift.traj.points[k]).unwrap();
            let cn = space.log(&lift.base[k + 1], &lift.traj.points[k + 1]).unwrap();
            let a = map.derivative(&lift.base[k])[(0, 0)];
            let recovered = (cn.get(0) - a * ck.get(0)) / d;
            // Quadratic chart defect: |recovered − w| ≤ 2 S d |v|².
            let slack = 2.0 * map.c2_bound() * d * sup_v * sup_v + 1e-9;
            assert!(
                (recovered - w[k][0]).abs() <= slack,
                "k = {}: recovered {} vs w {}",
                k,
                recovered,
                w[k][0]
            );
        }
    }

    #[test]
    fn growth_survey_classifies_model_maps() {
        let grid = [10usize, 20, 40, 80];
        let cat_rows =
            orbit_growth_survey(&CatMap, &[Pt::d2(0.4, 0.9)], &grid, 8, 5).unwrap();
        assert!(cat_rows.iter().all(|r| r.exponent < 0.1));

        let id_rows =
            orbit_growth_survey(&IdentityCircle, &[Pt::d1(0.5)], &grid, 8, 5).unwrap();
        assert!(
            (id_rows[0].exponent - 1.0).abs() < 0.1,
            "identity exponent {}",
            id_rows[0].exponent
        );

        // An orbit entering the contracting region has bounded gains.
        let map = build_circle_cubic(CircleCubicParams::default()).unwrap();
        let rows = orbit_growth_survey(&map, &[Pt::d1(0.15)], &grid, 8, 5).unwrap();
        assert!(
            rows[0].exponent < 0.1,
            "transition-orbit exponent {}",
            rows[0].exponent
        );
    }
}
