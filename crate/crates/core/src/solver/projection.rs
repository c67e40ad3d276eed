//! Per-coordinate projections onto the PP and PN feasible sets.
//!
//! With `m = |x0 - b|`, a PP coordinate must satisfy `|x - b| <= m` and a PN
//! coordinate `|x - b| >= m`, both intersected with the box `[lo, hi]`. The
//! mirror endpoint `2b - x0` is nudged by ulps so that the floating-point
//! feasibility test holds exactly at the boundary. `x0` is assumed to lie in
//! its box.

use rand::Rng;

fn next_toward(x: f64, target: f64) -> f64 {
    if x == target || x.is_nan() {
        return x;
    }
    if x == 0.0 {
        let tiny = f64::from_bits(1);
        return if target > 0.0 { tiny } else { -tiny };
    }
    let bits = x.to_bits();
    let up = (target > x) == (x > 0.0);
    f64::from_bits(if up { bits + 1 } else { bits - 1 })
}

/// Mirror of `x0` through `b`, adjusted to lie inside (`inside = true`) or
/// outside the radius `|x0 - b|` under floating-point evaluation.
fn mirror(x0: f64, b: f64, inside: bool) -> f64 {
    let m = (x0 - b).abs();
    let mut e = b - (x0 - b);
    if inside {
        while (e - b).abs() > m {
            e = next_toward(e, b);
        }
    } else {
        let away = if x0 >= b { f64::NEG_INFINITY } else { f64::INFINITY };
        while (e - b).abs() < m {
            e = next_toward(e, away);
        }
    }
    e
}

/// Feasible PP interval for one coordinate.
pub fn pp_interval(x0: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    let e = mirror(x0, b, true);
    let (a, z) = if x0 >= b { (e, x0) } else { (x0, e) };
    (a.max(lo), z.min(hi))
}

/// The two PN rays clipped to the box: `(near, far)`, where `near` is the ray
/// containing `x0`. Either may be empty.
pub fn pn_rays(x0: f64, b: f64, lo: f64, hi: f64) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
    let e = mirror(x0, b, false);
    let (near, far) = if x0 >= b {
        ((x0, hi), (lo, e))
    } else {
        ((lo, x0), (e, hi))
    };
    let keep = |(a, z): (f64, f64)| (a <= z).then_some((a, z));
    (keep(near), keep(far))
}

pub fn project_pp_coord(x: f64, x0: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let (a, z) = pp_interval(x0, b, lo, hi);
    if a > z {
        return x0;
    }
    x.clamp(a, z)
}

/// Nearest point of the two PN rays; equal distances go to the ray holding `x0`.
pub fn project_pn_coord(x: f64, x0: f64, b: f64, lo: f64, hi: f64) -> f64 {
    match pn_rays(x0, b, lo, hi) {
        (None, None) => x0,
        (Some((a, z)), None) | (None, Some((a, z))) => x.clamp(a, z),
        (Some(near), Some(far)) => {
            let pn = x.clamp(near.0, near.1);
            let pf = x.clamp(far.0, far.1);
            if (pf - x).abs() < (pn - x).abs() {
                pf
            } else {
                pn
            }
        }
    }
}

pub fn project_pp(x: &[f64], x0: &[f64], b: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    (0..x.len())
        .map(|i| project_pp_coord(x[i], x0[i], b[i], bounds[i].0, bounds[i].1))
        .collect()
}

pub fn project_pn(x: &[f64], x0: &[f64], b: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    (0..x.len())
        .map(|i| project_pn_coord(x[i], x0[i], b[i], bounds[i].0, bounds[i].1))
        .collect()
}

pub fn pp_feasible(x: &[f64], x0: &[f64], b: &[f64], bounds: &[(f64, f64)]) -> bool {
    (0..x.len()).all(|i| {
        let (lo, hi) = bounds[i];
        (lo..=hi).contains(&x[i]) && (x[i] - b[i]).abs() <= (x0[i] - b[i]).abs()
    })
}

pub fn pn_feasible(x: &[f64], x0: &[f64], b: &[f64], bounds: &[(f64, f64)]) -> bool {
    (0..x.len()).all(|i| {
        let (lo, hi) = bounds[i];
        (lo..=hi).contains(&x[i]) && (x[i] - b[i]).abs() >= (x0[i] - b[i]).abs()
    })
}

/// The part of the PP interval on the input's side of the base, clipped to
/// the box. The solver searches here so that positives lie between base and
/// input.
pub fn pp_segment(x0: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    (x0.min(b).max(lo), x0.max(b).min(hi))
}

pub fn clamp_pp_segment(x: f64, x0: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let (a, z) = pp_segment(x0, b, lo, hi);
    if a > z {
        return x0;
    }
    x.clamp(a, z)
}

/// Uniform draw from the segment between base and input.
pub fn sample_pp_segment<R: Rng + ?Sized>(x0: f64, b: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (a, z) = pp_segment(x0, b, lo, hi);
    if a >= z {
        return x0;
    }
    rng.gen_range(a..=z)
}

/// Uniform draw from a coordinate's PP interval.
pub fn sample_pp_coord<R: Rng + ?Sized>(x0: f64, b: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (a, z) = pp_interval(x0, b, lo, hi);
    if a >= z {
        return x0;
    }
    rng.gen_range(a..=z)
}

/// Uniform draw from the union of a coordinate's PN rays.
pub fn sample_pn_coord<R: Rng + ?Sized>(x0: f64, b: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let len = |r: Option<(f64, f64)>| r.map_or(0.0, |(a, z)| z - a);
    let (near, far) = pn_rays(x0, b, lo, hi);
    let total = len(near) + len(far);
    if total <= 0.0 {
        return x0;
    }
    let u = rng.gen_range(0.0..total);
    match (near, far) {
        (Some((a, _)), _) if u < len(near) => a + u,
        (_, Some((a, z))) => (a + u - len(near)).min(z),
        (Some((a, z)), None) => (a + u).min(z),
        (None, None) => x0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pp_examples() {
        assert_eq!(project_pp_coord(0.7, 0.7, 0.4, 0.0, 1.0), 0.7);
        assert_eq!(project_pp_coord(0.9, 0.7, 0.4, 0.0, 1.0), 0.7);
        let low = project_pp_coord(0.05, 0.7, 0.4, 0.0, 1.0);
        assert!((low - 0.1).abs() < 1e-12);
        assert!((low - 0.4).abs() <= (0.7f64 - 0.4).abs());
        // categorical coordinate with base code 0
        assert_eq!(project_pp_coord(0.9, 0.5, 0.0, 0.0, 1.0), 0.5);
        assert_eq!(project_pp_coord(-0.2, 0.5, 0.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn pn_examples() {
        assert_eq!(project_pn_coord(0.7, 0.7, 0.4, 0.0, 1.0), 0.7);
        assert_eq!(project_pn_coord(0.5, 0.7, 0.4, 0.0, 1.0), 0.7);
        let far = project_pn_coord(0.15, 0.7, 0.4, 0.0, 1.0);
        assert!((far - 0.1).abs() < 1e-12);
        assert!((far - 0.4).abs() >= (0.7f64 - 0.4).abs());
        // tie at the base: goes to the ray holding x0
        assert_eq!(project_pn_coord(0.4, 0.7, 0.4, 0.0, 1.0), 0.7);
        // far ray outside the box
        assert_eq!(project_pn_coord(0.1, 0.7, 0.2, 0.0, 1.0), 0.7);
        // x0 outside the box: pinned
        assert_eq!(project_pn_coord(0.5, 1.5, 0.4, 0.0, 1.0), 1.5);
    }

    #[test]
    fn zero_radius_leaves_whole_box() {
        assert_eq!(project_pp_coord(0.9, 0.3, 0.3, 0.0, 1.0), 0.3);
        assert_eq!(project_pn_coord(0.9, 0.3, 0.3, 0.0, 1.0), 0.9);
        assert_eq!(project_pn_coord(0.1, 0.3, 0.3, 0.0, 1.0), 0.1);
        assert_eq!(project_pn_coord(1.4, 0.3, 0.3, 0.0, 1.0), 1.0);
    }

    fn tuple() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
        (-2.0f64..2.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(x, a, c, t0, tb)| {
            let (lo, hi) = if a <= c { (a, c) } else { (c, a) };
            let hi = if hi == lo { lo + 0.5 } else { hi };
            (x, lo + t0 * (hi - lo), lo + tb * (hi - lo), lo, hi)
        })
    }

    proptest! {
        #[test]
        fn segment_lies_inside_pp_set((x, x0, b, lo, hi) in tuple()) {
            let p = clamp_pp_segment(x, x0, b, lo, hi);
            prop_assert!(pp_feasible(&[p], &[x0], &[b], &[(lo, hi)]));
            prop_assert!(p >= x0.min(b) && p <= x0.max(b));
        }

        #[test]
        fn pp_projection_is_feasible_and_idempotent((x, x0, b, lo, hi) in tuple()) {
            let p = project_pp_coord(x, x0, b, lo, hi);
            prop_assert!(pp_feasible(&[p], &[x0], &[b], &[(lo, hi)]));
            prop_assert_eq!(project_pp_coord(p, x0, b, lo, hi), p);
        }

        #[test]
        fn pn_projection_is_feasible_idempotent_and_nearest((x, x0, b, lo, hi) in tuple()) {
            let p = project_pn_coord(x, x0, b, lo, hi);
            prop_assert!(pn_feasible(&[p], &[x0], &[b], &[(lo, hi)]));
            prop_assert_eq!(project_pn_coord(p, x0, b, lo, hi), p);
            let (near, far) = pn_rays(x0, b, lo, hi);
            for (a, z) in [near, far].into_iter().flatten() {
                prop_assert!((p - x).abs() <= (x.clamp(a, z) - x).abs());
            }
        }

        #[test]
        fn samples_are_feasible((_, x0, b, lo, hi) in tuple(), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_pp_coord(x0, b, lo, hi, &mut rng);
            prop_assert!(pp_feasible(&[s], &[x0], &[b], &[(lo, hi)]));
            let s = sample_pn_coord(x0, b, lo, hi, &mut rng);
            prop_assert!(pn_feasible(&[s], &[x0], &[b], &[(lo, hi)]));
        }
    }
}
