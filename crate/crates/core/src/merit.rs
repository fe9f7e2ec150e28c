//! Penalized merit function over traced ray fans.
//!
//! The objective is
//!
//! ```text
//! F = RMS^2 + sum_k w_k P_k^2
//! ```
//!
//! where RMS is the centroid-referenced spot radius (per field, aggregated as
//! the root of the field-averaged mean square, in mm) and the five penalties
//! are rectified, normalized violations — zero inside the allowed region and
//! linear in the violation outside, so each squared term is C^1 where it
//! activates:
//!
//! * `P1` — fraction of rays lost to vignetting, total internal reflection,
//!   or a missed surface.
//! * `P2` — back-tracking geometry: negative signed path lengths along any
//!   traversed gap, averaged per ray and normalized to 1 mm.
//! * `P3` — glass center thickness below the minimum, or air gaps below the
//!   minimum, summed over gaps.
//! * `P4` — free working distance (image gap) below the minimum.
//! * `P5` — relative focal-length deviation beyond a dead zone.
//!
//! Evaluation is generic over [`Scalar`]; [`MeritFn`] exposes it to
//! [`crate::optics::gradient`] for exact derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glass::Catalog;
use crate::optics::paraxial::{efl_generic, image_distance_generic};
use crate::optics::trace_impl::{trace_generic, RayState};
use crate::optics::{launch, ray_fan, DesignFn, LensDesign, Medium, RayStatus};
use crate::preset::LensPreset;
use crate::scalar::Scalar;

/// Merit-function configuration. Lengths in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeritConfig {
    /// Penalty weights `w1..w5`.
    pub weights: [f64; 5],
    /// Minimum glass center thickness.
    pub min_glass_thickness: f64,
    /// Minimum air gap.
    pub min_air_gap: f64,
    /// Minimum free working distance (last vertex to image plane).
    pub min_working_distance: f64,
    /// Focal-length target.
    pub target_efl: f64,
    /// Relative dead zone of the focal-length penalty.
    pub efl_dead_zone: f64,
    /// Manufacturing curvature bound: |c| <= this (1 / minimum radius).
    pub max_curvature: f64,
    /// Constrain the first variable curvature positive.
    pub first_curvature_positive: bool,
}

impl MeritConfig {
    /// Defaults for a preset: table weights, 1 mm glass / 0.2 mm air minima,
    /// 20 mm working distance, 4 mm minimum radius of curvature.
    pub fn for_preset(preset: &LensPreset) -> MeritConfig {
        MeritConfig {
            weights: [10.0, 1.0, 1.0, 1.0, 1.0],
            min_glass_thickness: 1.0,
            min_air_gap: 0.2,
            min_working_distance: 20.0,
            target_efl: preset.target_efl,
            efl_dead_zone: 1e-4,
            max_curvature: 0.25,
            first_curvature_positive: preset.first_curvature_positive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("merit weights must be positive".into()));
        }
        if !(self.target_efl > 0.0) {
            return Err(Error::Config("target EFL must be positive".into()));
        }
        if !(self.max_curvature > 0.0) {
            return Err(Error::Config("curvature bound must be positive".into()));
        }
        if self.min_glass_thickness < 0.0 || self.min_air_gap < 0.0 || self.efl_dead_zone < 0.0 {
            return Err(Error::Config("merit minima must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-ray outcome counts of one evaluation.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RayCensus {
    pub total: usize,
    pub alive: usize,
    pub vignetted: usize,
    pub total_internal_reflection: usize,
    pub missed: usize,
    pub negative_path: usize,
    /// Some field ended with zero alive rays; RMS is reported as 0 then.
    pub empty_field: bool,
}

/// The evaluated objective with its components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeritBreakdown {
    /// Centroid-referenced spot radius, mm.
    pub rms: f64,
    /// Penalty values `P1..P5` (unweighted, unsquared).
    pub penalties: [f64; 5],
    /// Weights the total was formed with.
    pub weights: [f64; 5],
    /// `F = rms^2 + sum_k w_k P_k^2`.
    pub total: f64,
    pub census: RayCensus,
    /// Focal length at the primary wavelength, mm.
    pub efl: f64,
    /// Image gap used for the trace, mm.
    pub image_distance: f64,
}

impl MeritBreakdown {
    /// Recompute the total from the stored components.
    pub fn recompute_total(&self) -> f64 {
        let mut t = self.rms * self.rms;
        for k in 0..5 {
            t += self.weights[k] * self.penalties[k] * self.penalties[k];
        }
        t
    }
}

/// Spot statistics of alive landing points grouped per field.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SpotStats {
    pub rms: f64,
    pub any_field_empty: bool,
}

/// Centroid-referenced RMS spot radius: per-field mean squared distance to
/// the field centroid, averaged over fields, rooted. A field with no points
/// forces rms 0 with the empty flag set (the failure census carries the
/// signal instead).
pub fn rms_spot(per_field: &[Vec<[f64; 2]>]) -> SpotStats {
    let (rms, empty) = rms_generic::<f64>(per_field);
    SpotStats { rms, any_field_empty: empty }
}

fn rms_generic<S: Scalar>(per_field: &[Vec<[S; 2]>]) -> (S, bool) {
    if per_field.iter().any(|f| f.is_empty()) {
        return (S::zero(), true);
    }
    let mut acc = S::zero();
    for field in per_field {
        let inv_n = S::from_f64(1.0 / field.len() as f64);
        let mut cx = S::zero();
        let mut cy = S::zero();
        for p in field {
            cx = cx + p[0];
            cy = cy + p[1];
        }
        cx = cx * inv_n;
        cy = cy * inv_n;
        let mut ms = S::zero();
        for p in field {
            let dx = p[0] - cx;
            let dy = p[1] - cy;
            ms = ms + dx * dx + dy * dy;
        }
        acc = acc + ms * inv_n;
    }
    (
        (acc * S::from_f64(1.0 / per_field.len() as f64)).sqrt(),
        false,
    )
}

#[inline]
fn hinge<S: Scalar>(x: S) -> S {
    x.smax(S::zero())
}

pub(crate) struct GenBreakdown<S> {
    pub rms: S,
    pub penalties: [S; 5],
    pub total: S,
    pub census: RayCensus,
    pub efl: S,
    pub image_distance: S,
}

/// Scalar-generic merit evaluation at explicit continuous parameters.
pub(crate) fn evaluate_generic<S: Scalar>(
    design: &LensDesign,
    catalog: &Catalog,
    cfg: &MeritConfig,
    params: &[S],
) -> Result<GenBreakdown<S>> {
    if params.iter().any(|p| !p.is_finite_value()) {
        return Err(Error::InvalidArgument("non-finite parameter".into()));
    }
    let geom = design.geometry_with(params)?;
    let primary = design.primary_wavelength_um();
    let n_tables: Vec<Vec<f64>> = design
        .wavelengths_um
        .iter()
        .map(|&wl| design.index_table(catalog, wl))
        .collect::<Result<_>>()?;
    let primary_tab = &n_tables[design.primary_wl_idx];

    let efl = efl_generic(&geom, primary_tab, primary)?;
    let image = match geom.image {
        Some(v) => v,
        None => image_distance_generic(&geom, primary_tab, primary)?,
    };

    let mut census = RayCensus::default();
    let mut per_field: Vec<Vec<[S; 2]>> = vec![Vec::new(); design.field_fractions.len()];
    let mut neg_path = S::zero();
    let fan = ray_fan(design);
    census.total = fan.len();
    for fr in &fan {
        let (ray, _) = launch(design, fr);
        let state = RayState {
            p: [S::from_f64(ray.origin[0]), S::from_f64(ray.origin[1]), S::from_f64(ray.origin[2])],
            d: [
                S::from_f64(ray.direction[0]),
                S::from_f64(ray.direction[1]),
                S::from_f64(ray.direction[2]),
            ],
        };
        let out = trace_generic(&geom, image, &n_tables[fr.wl_idx], state)?;
        for &t in &out.paths {
            neg_path = neg_path + hinge(-t);
        }
        match out.status {
            RayStatus::Alive => {
                census.alive += 1;
                per_field[fr.field_idx].push(out.landing.expect("alive ray lands"));
            }
            RayStatus::Vignetted { .. } => census.vignetted += 1,
            RayStatus::TotalInternalReflection { .. } => census.total_internal_reflection += 1,
            RayStatus::MissedSurface { .. } => census.missed += 1,
            RayStatus::NegativePath { .. } => census.negative_path += 1,
        }
    }

    let (rms, any_empty) = rms_generic(&per_field);
    census.empty_field = any_empty;

    // P1: lost-ray fraction (constant a.e. in the parameters).
    let failed = census.vignetted + census.total_internal_reflection + census.missed;
    let p1 = S::from_f64(failed as f64 / census.total as f64);

    // P2: back-tracking, mean per ray, normalized to 1 mm.
    let p2 = neg_path * S::from_f64(1.0 / census.total as f64);

    // P3: thickness floor violations over all internal gaps.
    let mut p3 = S::zero();
    for (i, s) in design.surfaces.iter().enumerate().take(design.surfaces.len() - 1) {
        let gap = geom.gaps[i];
        let (min, label_glass) = match s.medium {
            Medium::Glass(_) => (cfg.min_glass_thickness, true),
            Medium::Air => (cfg.min_air_gap, false),
        };
        let _ = label_glass;
        if min > 0.0 {
            p3 = p3 + hinge((S::from_f64(min) - gap) * S::from_f64(1.0 / min));
        }
    }

    // P4: free working distance.
    let p4 = if cfg.min_working_distance > 0.0 {
        hinge(
            (S::from_f64(cfg.min_working_distance) - image)
                * S::from_f64(1.0 / cfg.min_working_distance),
        )
    } else {
        S::zero()
    };

    // P5: relative EFL deviation beyond the dead zone.
    let dev = (efl * S::from_f64(1.0 / cfg.target_efl) - S::one()).abs();
    let p5 = hinge(dev - S::from_f64(cfg.efl_dead_zone));

    let penalties = [p1, p2, p3, p4, p5];
    let mut total = rms * rms;
    for k in 0..5 {
        total = total + S::from_f64(cfg.weights[k]) * penalties[k] * penalties[k];
    }
    if !total.is_finite_value() {
        return Err(Error::NonFinite { surface: design.surfaces.len() });
    }
    Ok(GenBreakdown { rms, penalties, total, census, efl, image_distance: image })
}

/// Evaluate the merit function of a design.
pub fn objective(
    design: &LensDesign,
    catalog: &Catalog,
    cfg: &MeritConfig,
) -> Result<MeritBreakdown> {
    let out = evaluate_generic::<f64>(design, catalog, cfg, &design.continuous_params())?;
    Ok(MeritBreakdown {
        rms: out.rms,
        penalties: out.penalties,
        weights: cfg.weights,
        total: out.total,
        census: out.census,
        efl: out.efl,
        image_distance: out.image_distance,
    })
}

/// The merit total as a [`DesignFn`], for gradients.
pub struct MeritFn {
    pub cfg: MeritConfig,
}

impl DesignFn for MeritFn {
    fn eval_scalar<S: Scalar>(
        &self,
        design: &LensDesign,
        catalog: &Catalog,
        params: &[S],
    ) -> Result<S> {
        Ok(evaluate_generic(design, catalog, &self.cfg, params)?.total)
    }
}

/// Hard feasibility: structural validity, variable gaps inside their bounds,
/// curvature magnitudes inside the manufacturing bound, non-negative gaps,
/// and the positive-first-curvature flag.
pub fn is_feasible(design: &LensDesign, catalog: &Catalog, cfg: &MeritConfig) -> bool {
    if design.validate(catalog).is_err() {
        return false;
    }
    let mut first_variable = true;
    for s in &design.surfaces {
        if s.thickness < 0.0 {
            return false;
        }
        if s.thickness_variable
            && (s.thickness < s.thickness_bounds.0 || s.thickness > s.thickness_bounds.1)
        {
            return false;
        }
        if s.curvature_variable {
            if s.curvature.abs() > cfg.max_curvature {
                return false;
            }
            if first_variable && cfg.first_curvature_positive && s.curvature <= 0.0 {
                return false;
            }
            first_variable = false;
        }
    }
    true
}
