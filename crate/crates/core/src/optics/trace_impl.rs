//! The sequential trace kernel, generic over the scalar type.
//!
//! Surfaces are intersected with the stable curvature form of the sphere
//! equation (no cancellation as curvature tends to zero; an exact plane
//! branch handles flat surfaces), refraction uses the vector form of Snell's
//! law, and all failure modes degrade to [`RayStatus`] values. Branch
//! decisions compare primal values only, so an evaluation on dual numbers
//! follows the identical path as the `f64` evaluation at the same point.

use crate::error::{Error, Result};
use crate::glass::Catalog;
use crate::optics::{LensDesign, Ray, RayStatus, TraceResult};
use crate::scalar::Scalar;

/// A ray dies with `NegativePath` when a leg runs backwards past this bound
/// (mm); tiny negative roundoff at zero-width gaps survives.
pub(crate) const NEG_PATH_KILL_MM: f64 = -1e-9;

/// Scalar-generic view of a design's geometry: per-surface curvature, the
/// gaps between consecutive vertices, the image gap (when resolved), and the
/// (constant) aperture radii.
#[derive(Clone, Debug)]
pub struct Geometry<S> {
    pub curv: Vec<S>,
    /// Gap after surface `i`, length `curv.len() - 1`.
    pub gaps: Vec<S>,
    /// Gap from the last surface to the image plane; `None` means it still
    /// needs a paraxial solve.
    pub image: Option<S>,
    pub semi: Vec<f64>,
}

/// Intermediate ray in scalar type `S`.
#[derive(Copy, Clone, Debug)]
pub struct RayState<S> {
    pub p: [S; 3],
    pub d: [S; 3],
}

/// Scalar-generic trace outcome.
#[derive(Clone, Debug)]
pub struct GenTrace<S> {
    pub status: RayStatus,
    pub landing: Option<[S; 2]>,
    /// Signed length of each traversed design gap, then the image gap; the
    /// launch leg up to the first surface is not a design gap and is omitted.
    pub paths: Vec<S>,
}

#[inline]
fn dot3<S: Scalar>(a: &[S; 3], b: &[S; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn normalize3<S: Scalar>(v: &mut [S; 3]) {
    let n = dot3(v, v).sqrt();
    v[0] = v[0] / n;
    v[1] = v[1] / n;
    v[2] = v[2] / n;
}

/// Vector Snell refraction at a surface with unit normal `normal`, from
/// index `n1` into `n2`. Returns the refracted unit direction, or `None` on
/// total internal reflection. Matched indices return the direction bitwise
/// unchanged. The normal's orientation does not matter.
pub fn refract(direction: [f64; 3], normal: [f64; 3], n1: f64, n2: f64) -> Option<[f64; 3]> {
    refract_generic(direction, normal, n1, n2)
}

pub(crate) fn refract_generic<S: Scalar>(
    direction: [S; 3],
    normal: [S; 3],
    n1: f64,
    n2: f64,
) -> Option<[S; 3]> {
    if n1 == n2 {
        return Some(direction);
    }
    let mut m = normal;
    // Orient the normal against the incident direction so cos(theta1) >= 0.
    if dot3(&direction, &m).value() > 0.0 {
        m = [-m[0], -m[1], -m[2]];
    }
    let cos1 = -dot3(&direction, &m);
    let eta = S::from_f64(n1 / n2);
    let radicand = S::one() - eta * eta * (S::one() - cos1 * cos1);
    if radicand.value() < 0.0 {
        return None;
    }
    let k = eta * cos1 - radicand.sqrt();
    let mut out = [
        eta * direction[0] + k * m[0],
        eta * direction[1] + k * m[1],
        eta * direction[2] + k * m[2],
    ];
    normalize3(&mut out);
    Some(out)
}

/// Trace one ray through an already-resolved geometry.
///
/// `n_table[i]` is the refractive index after surface `i` at the ray's
/// wavelength; the ambient medium before surface 0 is air. Statuses cover
/// geometric failures; an `Err` is returned only for non-finite arithmetic.
pub(crate) fn trace_generic<S: Scalar>(
    geom: &Geometry<S>,
    image_distance: S,
    n_table: &[f64],
    ray: RayState<S>,
) -> Result<GenTrace<S>> {
    let nsurf = geom.curv.len();
    debug_assert_eq!(geom.gaps.len(), nsurf.saturating_sub(1));
    debug_assert_eq!(n_table.len(), nsurf);

    let mut p = ray.p;
    let mut d = ray.d;
    let mut n_before = 1.0_f64;
    let mut z_vertex = S::zero();
    let mut paths: Vec<S> = Vec::with_capacity(nsurf);
    let dead = |status: RayStatus, paths: Vec<S>| Ok(GenTrace { status, landing: None, paths });

    for i in 0..nsurf {
        let c = geom.curv[i];
        let rel = [p[0], p[1], p[2] - z_vertex];
        // Intersection parameter t along the ray. Curved surfaces use the
        // root of c*t^2*|d|^2 + 2t*(c<o,d> - dz) + (c|o|^2 - 2oz) = 0 that is
        // continuous with the plane solution as c -> 0.
        let t = if c.value() == 0.0 {
            if d[2].value() == 0.0 {
                return dead(RayStatus::MissedSurface { surface: i }, paths);
            }
            -rel[2] / d[2]
        } else {
            let half_b = c * dot3(&rel, &d) - d[2];
            let cterm = c * dot3(&rel, &rel) - S::from_f64(2.0) * rel[2];
            let disc = half_b * half_b - c * cterm;
            if disc.value() < 0.0 {
                return dead(RayStatus::MissedSurface { surface: i }, paths);
            }
            let den = disc.sqrt() - half_b;
            if den.value() == 0.0 {
                return dead(RayStatus::MissedSurface { surface: i }, paths);
            }
            cterm / den
        };
        if !t.is_finite_value() {
            return Err(Error::NonFinite { surface: i });
        }
        // The leg up to surface 0 is launch clearance, not a design gap.
        if i > 0 {
            paths.push(t);
        }
        if t.value() < NEG_PATH_KILL_MM {
            return dead(RayStatus::NegativePath { surface: i }, paths);
        }
        p = [p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2]];
        if !(p[0].is_finite_value() && p[1].is_finite_value() && p[2].is_finite_value()) {
            return Err(Error::NonFinite { surface: i });
        }

        let r2 = p[0] * p[0] + p[1] * p[1];
        let a = geom.semi[i];
        if r2.value() > a * a {
            return dead(RayStatus::Vignetted { surface: i }, paths);
        }

        let n_after = n_table[i];
        if n_before != n_after {
            // Outward gradient of the surface function, exact for flats too.
            let mut normal = [c * p[0], c * p[1], c * (p[2] - z_vertex) - S::one()];
            normalize3(&mut normal);
            match refract_generic(d, normal, n_before, n_after) {
                Some(refr) => d = refr,
                None => {
                    return dead(RayStatus::TotalInternalReflection { surface: i }, paths)
                }
            }
        }
        n_before = n_after;
        if i + 1 < nsurf {
            z_vertex = z_vertex + geom.gaps[i];
        }
    }

    // Transfer to the image plane.
    let z_image = z_vertex + image_distance;
    if d[2].value() == 0.0 {
        return dead(RayStatus::MissedSurface { surface: nsurf }, paths);
    }
    let t = (z_image - p[2]) / d[2];
    if !t.is_finite_value() {
        return Err(Error::NonFinite { surface: nsurf });
    }
    paths.push(t);
    if t.value() < NEG_PATH_KILL_MM {
        return dead(RayStatus::NegativePath { surface: nsurf }, paths);
    }
    let landing = [p[0] + t * d[0], p[1] + t * d[1]];
    if !(landing[0].is_finite_value() && landing[1].is_finite_value()) {
        return Err(Error::NonFinite { surface: nsurf });
    }
    Ok(GenTrace { status: RayStatus::Alive, landing: Some(landing), paths })
}

/// Trace a single ray through a design.
///
/// Resolves the image distance paraxially (at the primary wavelength) when
/// the design leaves it solved. Failures along the ray are reported in the
/// result status together with the failing surface index; the image plane
/// counts as index `surfaces.len()`.
pub fn trace(design: &LensDesign, catalog: &Catalog, ray: &Ray) -> Result<TraceResult> {
    let resolved = design.resolved(catalog)?;
    let geom = resolved.geometry_with::<f64>(&resolved.continuous_params())?;
    let image = geom.image.expect("resolved design has an explicit image distance");
    let n_table = design.index_table(catalog, ray.wavelength_um)?;
    let out = trace_generic(
        &geom,
        image,
        &n_table,
        RayState { p: ray.origin, d: ray.direction },
    )?;
    Ok(TraceResult {
        status: out.status,
        landing: out.landing,
        path_lengths: out.paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glass::{DispersionModel, Glass};
    use crate::optics::{ImageDistance, Medium, Surface};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn const_glass(n: f64) -> Catalog {
        Catalog {
            glasses: vec![Glass {
                name: format!("N{n}"),
                model: DispersionModel::Constant { nd: n, nf: n, nc: n },
                range_um: (0.3, 1.0),
            }],
        }
    }

    /// Biconvex singlet, front curvature `c1`, rear `c2`, center thickness
    /// `t`, in a single-glass catalog.
    fn singlet(c1: f64, c2: f64, t: f64, image: ImageDistance) -> LensDesign {
        LensDesign {
            surfaces: vec![
                Surface {
                    curvature: c1,
                    semi_diameter: 15.0,
                    thickness: t,
                    medium: Medium::Glass(0),
                    is_stop: true,
                    curvature_variable: true,
                    thickness_variable: false,
                    thickness_bounds: (t, t),
                },
                Surface {
                    curvature: c2,
                    semi_diameter: 15.0,
                    thickness: 0.0,
                    medium: Medium::Air,
                    is_stop: false,
                    curvature_variable: true,
                    thickness_variable: false,
                    thickness_bounds: (0.0, 0.0),
                },
            ],
            image_distance: image,
            epd: 10.0,
            half_fov_deg: 5.0,
            field_fractions: vec![0.0, 1.0],
            wavelengths_um: vec![0.58756],
            primary_wl_idx: 0,
            pupil_rings: 2,
        }
    }

    fn axial_ray(y: f64) -> Ray {
        Ray::new([0.0, y, -50.0], [0.0, 0.0, 1.0], 0.58756).unwrap()
    }

    #[test]
    fn refract_index_matched_is_identity() {
        let d = [0.3, -0.2, 0.933].map(|v: f64| v / (0.3f64 * 0.3 + 0.2 * 0.2 + 0.933 * 0.933).sqrt());
        let out = refract(d, [0.0, 0.0, -1.0], 1.5, 1.5).unwrap();
        assert_eq!(out, d, "matched indices must not touch the direction");
    }

    #[test]
    fn refract_total_internal_reflection_at_60_degrees() {
        // Glass to air at 60 degrees incidence: sin(60)*1.5 > 1.
        let th = 60f64.to_radians();
        let d = [0.0, th.sin(), th.cos()];
        assert_eq!(refract(d, [0.0, 0.0, -1.0], 1.5, 1.0), None);
    }

    #[test]
    fn refract_critical_angle_bracket() {
        // Critical angle for n = 1.5 is asin(1/1.5) = 41.810 degrees.
        let just_below = 41.7f64.to_radians();
        let just_above = 41.9f64.to_radians();
        let mk = |th: f64| [0.0, th.sin(), th.cos()];
        assert!(refract(mk(just_below), [0.0, 0.0, -1.0], 1.5, 1.0).is_some());
        assert!(refract(mk(just_above), [0.0, 0.0, -1.0], 1.5, 1.0).is_none());
    }

    #[test]
    fn refract_preserves_snell_invariant_on_random_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let unit = |rng: &mut ChaCha8Rng| {
            let mut v: [f64; 3];
            loop {
                v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 1e-3 {
                    v = [v[0] / n, v[1] / n, v[2] / n];
                    break;
                }
            }
            v
        };
        let cross_norm = |a: [f64; 3], b: [f64; 3]| {
            let c = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
        };
        let mut refracted = 0usize;
        for _ in 0..10_000 {
            let d = unit(&mut rng);
            let m = unit(&mut rng);
            let (n1, n2) = if rng.gen_bool(0.5) { (1.5, 1.0) } else { (1.0, 1.7) };
            if let Some(out) = refract(d, m, n1, n2) {
                let norm = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
                assert!((norm - 1.0).abs() <= 1e-12, "unit norm violated: {norm}");
                let lhs = n1 * cross_norm(d, m);
                let rhs = n2 * cross_norm(out, m);
                assert!((lhs - rhs).abs() <= 1e-12, "Snell violated: {lhs} vs {rhs}");
                refracted += 1;
            }
        }
        assert!(refracted > 5_000, "TIR should not dominate random geometry");
    }

    #[test]
    fn axial_ray_lands_exactly_on_axis() {
        let cat = const_glass(1.5);
        let design = singlet(0.01, -0.01, 2.0, ImageDistance::Solved);
        let out = trace(&design, &cat, &axial_ray(0.0)).unwrap();
        assert_eq!(out.status, RayStatus::Alive);
        assert_eq!(out.landing.unwrap(), [0.0, 0.0], "axis ray must stay exactly on axis");
    }

    #[test]
    fn marginal_ray_near_paraxial_focus() {
        // f~100 singlet: defocus plus spherical aberration keep a 5 mm
        // marginal ray well within 0.5 mm of the axis at the image plane.
        let cat = const_glass(1.5);
        let design = singlet(0.01, -0.01, 2.0, ImageDistance::Fixed(100.0));
        let out = trace(&design, &cat, &axial_ray(5.0)).unwrap();
        assert_eq!(out.status, RayStatus::Alive);
        let [x, y] = out.landing.unwrap();
        assert_eq!(x, 0.0);
        assert!(y.abs() < 0.5, "landing y = {y}");
    }

    #[test]
    fn ray_outside_first_aperture_is_vignetted_at_surface_zero() {
        let cat = const_glass(1.5);
        let design = singlet(0.01, -0.01, 2.0, ImageDistance::Fixed(100.0));
        let out = trace(&design, &cat, &axial_ray(15.5)).unwrap();
        assert_eq!(out.status, RayStatus::Vignetted { surface: 0 });
        assert_eq!(out.landing, None);
    }

    #[test]
    fn dead_ray_reports_first_failure_only() {
        // Vignetted at surface 0 even though it would also fail downstream.
        let cat = const_glass(1.5);
        let mut design = singlet(0.2, -0.2, 1.0, ImageDistance::Fixed(50.0));
        design.surfaces[0].semi_diameter = 2.0;
        design.surfaces[1].semi_diameter = 0.1;
        let out = trace(&design, &cat, &axial_ray(4.0)).unwrap();
        assert_eq!(out.status, RayStatus::Vignetted { surface: 0 });
    }

    #[test]
    fn ray_beyond_the_sphere_misses_the_surface() {
        // c = 0.2 means R = 5 mm: a ray at height 10 cannot intersect it.
        let cat = const_glass(1.5);
        let design = singlet(0.2, -0.2, 1.0, ImageDistance::Fixed(50.0));
        let out = trace(&design, &cat, &axial_ray(10.0)).unwrap();
        assert_eq!(out.status, RayStatus::MissedSurface { surface: 0 });
    }

    #[test]
    fn plane_branch_is_exact() {
        let cat = const_glass(1.5);
        let mut design = singlet(0.0, 0.0, 3.0, ImageDistance::Fixed(40.0));
        design.surfaces[0].curvature = 0.0;
        let out = trace(&design, &cat, &axial_ray(4.0)).unwrap();
        assert_eq!(out.status, RayStatus::Alive);
        // A plane-parallel plate leaves an axis-parallel ray at its height.
        assert_eq!(out.landing.unwrap(), [0.0, 4.0]);
        // Design gaps traversed: glass gap and image gap.
        assert_eq!(out.path_lengths.len(), 2);
        assert!((out.path_lengths[0] - 3.0).abs() < 1e-12);
        assert!((out.path_lengths[1] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn negative_path_is_recorded_and_terminal() {
        // Deep concave rear surface (R = -4.2 mm) curls back past the flat
        // front at y = 4: the second intersection lies behind the first, a
        // back-tracking leg of about -2.5 mm.
        let cat = const_glass(1.5);
        let design = singlet(0.0, -0.24, 0.5, ImageDistance::Fixed(50.0));
        let out = trace(&design, &cat, &axial_ray(4.0)).unwrap();
        assert_eq!(out.status, RayStatus::NegativePath { surface: 1 });
        assert_eq!(out.path_lengths.len(), 1);
        assert!(out.path_lengths[0] < 0.0, "leg = {}", out.path_lengths[0]);
    }

    #[test]
    fn rotational_symmetry_of_landings() {
        let cat = const_glass(1.5);
        let design = singlet(0.012, -0.008, 4.0, ImageDistance::Fixed(90.0));
        // A skew ray: off-axis origin and tilted direction.
        let base_o = [3.0, 1.5, -60.0];
        let base_d = [0.02, 0.05, 1.0];
        let land = |phi: f64| {
            let (s, c) = phi.sin_cos();
            let rot = |v: [f64; 3]| [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
            let ray = Ray::new(rot(base_o), rot(base_d), 0.58756).unwrap();
            trace(&design, &cat, &ray).unwrap().landing.unwrap()
        };
        let l0 = land(0.0);
        for k in 1..4 {
            let phi = std::f64::consts::FRAC_PI_2 * k as f64;
            let (s, c) = phi.sin_cos();
            let expect = [c * l0[0] - s * l0[1], s * l0[0] + c * l0[1]];
            let got = land(phi);
            assert!(
                (got[0] - expect[0]).abs() < 1e-9 && (got[1] - expect[1]).abs() < 1e-9,
                "rotation {k}: {got:?} vs {expect:?}"
            );
        }
    }

    #[test]
    fn scaling_lengths_scales_landings() {
        let cat = const_glass(1.5);
        let design = singlet(0.012, -0.008, 4.0, ImageDistance::Fixed(90.0));
        let s = 2.5;
        let scaled = design.scaled(s);
        let ray = Ray::new([1.0, 2.0, -70.0], [0.01, -0.02, 1.0], 0.58756).unwrap();
        let scaled_ray = Ray::new([1.0 * s, 2.0 * s, -70.0 * s], [0.01, -0.02, 1.0], 0.58756).unwrap();
        let a = trace(&design, &cat, &ray).unwrap().landing.unwrap();
        let b = trace(&scaled, &cat, &scaled_ray).unwrap().landing.unwrap();
        for i in 0..2 {
            let rel = (b[i] - s * a[i]).abs() / (s * a[i]).abs().max(1.0);
            assert!(rel < 1e-9, "component {i}: {} vs {}", b[i], s * a[i]);
        }
    }

    #[test]
    fn dual_trace_follows_f64_branch_decisions() {
        use crate::scalar::Dual;
        let cat = const_glass(1.5);
        let design = singlet(0.01, -0.01, 2.0, ImageDistance::Fixed(95.0));
        let geom_f = design.geometry_with::<f64>(&design.continuous_params()).unwrap();
        let params: Vec<Dual> = design
            .continuous_params()
            .iter()
            .map(|&v| Dual::constant(v))
            .collect();
        let geom_d = design.geometry_with::<Dual>(&params).unwrap();
        let ntab = design.index_table(&cat, 0.58756).unwrap();
        let ray_f = RayState { p: [0.0, 6.0, -40.0], d: [0.0, 0.0, 1.0] };
        let ray_d = RayState {
            p: [Dual::constant(0.0), Dual::constant(6.0), Dual::constant(-40.0)],
            d: [Dual::constant(0.0), Dual::constant(0.0), Dual::constant(1.0)],
        };
        let a = trace_generic(&geom_f, 95.0, &ntab, ray_f).unwrap();
        let b = trace_generic(&geom_d, Dual::constant(95.0), &ntab, ray_d).unwrap();
        assert_eq!(a.status, b.status);
        let la = a.landing.unwrap();
        let lb = b.landing.unwrap();
        assert_eq!(la[0], lb[0].v);
        assert_eq!(la[1], lb[1].v);
    }
}
