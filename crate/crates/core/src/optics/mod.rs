//! Sequential geometric optics for axially symmetric spherical systems.
//!
//! A [`LensDesign`] is an ordered list of spherical [`Surface`]s on a common
//! axis (+z), an entrance pupil diameter, a field set, and a wavelength set.
//! Lengths are millimeters, wavelengths micrometers, curvatures 1/mm with
//! sign positive when the center of curvature lies toward +z.
//!
//! The trace kernel ([`trace`], internals in [`self::trace_impl`]) intersects
//! rays with each surface, applies vector Snell refraction, and lands on the
//! image plane; failures (aperture, total internal reflection, missed or
//! back-tracked surfaces) are recorded as statuses, never panics. The same
//! kernel is generic over [`Scalar`], which is what makes the merit function
//! differentiable: running it on dual numbers yields exact forward-mode
//! derivatives with respect to any continuous parameter.

pub mod gradient;
pub mod paraxial;
pub(crate) mod trace_impl;

pub use gradient::{gradient, DesignFn, EflFn, ImageDistanceFn};
pub use paraxial::{effective_focal_length, paraxial_image_distance};
pub use trace_impl::{refract, trace, GenTrace, Geometry, RayState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glass::Catalog;
use crate::scalar::Scalar;

/// What fills the gap after a surface.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Medium {
    Air,
    /// Index into the glass catalog.
    Glass(usize),
}

/// One spherical (or flat) surface plus the gap that follows it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    /// 1/mm; 0 means flat.
    pub curvature: f64,
    /// Aperture radius in mm.
    pub semi_diameter: f64,
    /// Axial distance to the next vertex in mm. The last surface's gap to the
    /// image plane is held in [`LensDesign::image_distance`] instead and this
    /// field must be 0 there.
    pub thickness: f64,
    /// Medium filling the gap after this surface.
    pub medium: Medium,
    /// True, exactly once per design, for the aperture stop.
    pub is_stop: bool,
    /// Whether the curvature is an optimization variable.
    pub curvature_variable: bool,
    /// Whether the following gap is an optimization variable.
    pub thickness_variable: bool,
    /// Box for the following gap when it is variable (mm).
    pub thickness_bounds: (f64, f64),
}

impl Surface {
    /// Flat, fixed aperture stop.
    pub fn stop(semi_diameter: f64, thickness_after: f64) -> Surface {
        Surface {
            curvature: 0.0,
            semi_diameter,
            thickness: thickness_after,
            medium: Medium::Air,
            is_stop: true,
            curvature_variable: false,
            thickness_variable: false,
            thickness_bounds: (thickness_after, thickness_after),
        }
    }
}

/// Image-plane location: solved paraxially at evaluation time, or pinned.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ImageDistance {
    /// Place the image plane at the paraxial focus of the primary wavelength.
    Solved,
    /// Explicit distance from the last surface vertex, mm.
    Fixed(f64),
}

/// A complete lens system description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensDesign {
    pub surfaces: Vec<Surface>,
    pub image_distance: ImageDistance,
    /// Entrance pupil (launch footprint) diameter, mm.
    pub epd: f64,
    /// Half field of view, degrees; fields are fractions of it.
    pub half_fov_deg: f64,
    /// Field set as fractions of `half_fov_deg`, e.g. `[0.0, 0.7, 1.0]`.
    pub field_fractions: Vec<f64>,
    /// Evaluation wavelengths, micrometers.
    pub wavelengths_um: Vec<f64>,
    /// Index into `wavelengths_um` used for paraxial solves and EFL targets.
    pub primary_wl_idx: usize,
    /// Hexapolar rings around the center ray; `k` rings give `1 + 3k(k+1)`
    /// pupil samples per field per wavelength.
    pub pupil_rings: usize,
}

/// Identifies one continuous parameter of a design.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Curvature of surface `i`.
    Curvature(usize),
    /// Gap after surface `i`.
    Thickness(usize),
    /// Explicit image distance (present only when [`ImageDistance::Fixed`]).
    ImageDistance,
}

/// Canonical ordering of a design's continuous parameters: variable
/// curvatures in surface order, then variable gaps in surface order, then the
/// image distance when it is explicit.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub kinds: Vec<ParamKind>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Position of the image-distance parameter, if present.
    pub fn image_distance_index(&self) -> Option<usize> {
        self.kinds.iter().position(|k| *k == ParamKind::ImageDistance)
    }

    /// Indices of curvature parameters.
    pub fn curvature_indices(&self) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, ParamKind::Curvature(_)))
            .map(|(i, _)| i)
            .collect()
    }
}

impl LensDesign {
    /// Number of hexapolar pupil samples per (field, wavelength) pair.
    pub fn rays_per_bundle(&self) -> usize {
        1 + 3 * self.pupil_rings * (self.pupil_rings + 1)
    }

    /// Total rays in the evaluation fan.
    pub fn total_rays(&self) -> usize {
        self.rays_per_bundle() * self.field_fractions.len() * self.wavelengths_um.len()
    }

    pub fn primary_wavelength_um(&self) -> f64 {
        self.wavelengths_um[self.primary_wl_idx]
    }

    /// Index of the stop surface.
    pub fn stop_index(&self) -> Option<usize> {
        self.surfaces.iter().position(|s| s.is_stop)
    }

    /// Surface indices whose following gap is glass, in order. These are the
    /// design's elements; the descriptor's material vector runs over them.
    pub fn glass_gap_surfaces(&self) -> Vec<usize> {
        self.surfaces
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s.medium, Medium::Glass(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Material (catalog index) per element, in element order.
    pub fn materials(&self) -> Vec<usize> {
        self.surfaces
            .iter()
            .filter_map(|s| match s.medium {
                Medium::Glass(g) => Some(g),
                Medium::Air => None,
            })
            .collect()
    }

    /// Replace element materials, in element order.
    pub fn with_materials(&self, materials: &[usize]) -> Result<LensDesign> {
        let gaps = self.glass_gap_surfaces();
        if gaps.len() != materials.len() {
            return Err(Error::InvalidArgument(format!(
                "design has {} elements, got {} materials",
                gaps.len(),
                materials.len()
            )));
        }
        let mut d = self.clone();
        for (&surf, &mat) in gaps.iter().zip(materials) {
            d.surfaces[surf].medium = Medium::Glass(mat);
        }
        Ok(d)
    }

    pub fn param_layout(&self) -> ParamLayout {
        let mut kinds = Vec::new();
        for (i, s) in self.surfaces.iter().enumerate() {
            if s.curvature_variable {
                kinds.push(ParamKind::Curvature(i));
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if s.thickness_variable {
                kinds.push(ParamKind::Thickness(i));
            }
        }
        if matches!(self.image_distance, ImageDistance::Fixed(_)) {
            kinds.push(ParamKind::ImageDistance);
        }
        ParamLayout { kinds }
    }

    /// Current values of the continuous parameters, in layout order.
    pub fn continuous_params(&self) -> Vec<f64> {
        self.param_layout()
            .kinds
            .iter()
            .map(|k| match *k {
                ParamKind::Curvature(i) => self.surfaces[i].curvature,
                ParamKind::Thickness(i) => self.surfaces[i].thickness,
                ParamKind::ImageDistance => match self.image_distance {
                    ImageDistance::Fixed(v) => v,
                    ImageDistance::Solved => unreachable!("layout lists image distance only when fixed"),
                },
            })
            .collect()
    }

    /// Design with the continuous parameters replaced, in layout order.
    pub fn with_continuous_params(&self, params: &[f64]) -> Result<LensDesign> {
        let layout = self.param_layout();
        if params.len() != layout.len() {
            return Err(Error::InvalidArgument(format!(
                "layout has {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        let mut d = self.clone();
        for (k, &v) in layout.kinds.iter().zip(params) {
            match *k {
                ParamKind::Curvature(i) => d.surfaces[i].curvature = v,
                ParamKind::Thickness(i) => d.surfaces[i].thickness = v,
                ParamKind::ImageDistance => d.image_distance = ImageDistance::Fixed(v),
            }
        }
        Ok(d)
    }

    /// Scalar-generic view of the geometry with parameters substituted from
    /// `params` (layout order); fixed quantities are lifted as constants.
    pub(crate) fn geometry_with<S: Scalar>(&self, params: &[S]) -> Result<Geometry<S>> {
        let layout = self.param_layout();
        if params.len() != layout.len() {
            return Err(Error::InvalidArgument(format!(
                "layout has {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        let n = self.surfaces.len();
        let mut curv: Vec<S> = self.surfaces.iter().map(|s| S::from_f64(s.curvature)).collect();
        let mut gaps: Vec<S> = self.surfaces.iter().map(|s| S::from_f64(s.thickness)).collect();
        let mut image = match self.image_distance {
            ImageDistance::Fixed(v) => Some(S::from_f64(v)),
            ImageDistance::Solved => None,
        };
        for (k, &v) in layout.kinds.iter().zip(params) {
            match *k {
                ParamKind::Curvature(i) => curv[i] = v,
                ParamKind::Thickness(i) => gaps[i] = v,
                ParamKind::ImageDistance => image = Some(v),
            }
        }
        gaps.truncate(n.saturating_sub(1));
        Ok(Geometry {
            curv,
            gaps,
            image,
            semi: self.surfaces.iter().map(|s| s.semi_diameter).collect(),
        })
    }

    /// Refractive index after each surface at `wavelength_um` (ambient is
    /// air before surface 0).
    pub(crate) fn index_table(&self, catalog: &Catalog, wavelength_um: f64) -> Result<Vec<f64>> {
        self.surfaces
            .iter()
            .map(|s| match s.medium {
                Medium::Air => Ok(1.0),
                Medium::Glass(g) => catalog.glass(g)?.refractive_index(wavelength_um),
            })
            .collect()
    }

    /// Structural validation against a catalog.
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidDesign(m));
        if self.surfaces.is_empty() {
            return fail("no surfaces".into());
        }
        let stops = self.surfaces.iter().filter(|s| s.is_stop).count();
        if stops != 1 {
            return fail(format!("expected exactly one stop surface, found {stops}"));
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if !(s.semi_diameter > 0.0) {
                return fail(format!("surface {i}: semi-diameter must be positive"));
            }
            if s.thickness < 0.0 {
                return fail(format!("surface {i}: thickness must be >= 0"));
            }
            if let Medium::Glass(g) = s.medium {
                catalog.glass(g)?;
            }
        }
        let last = self.surfaces.len() - 1;
        if self.surfaces[last].medium != Medium::Air {
            return fail("image space must be air".into());
        }
        if self.surfaces[last].thickness != 0.0 {
            return fail("last surface thickness is the image gap; set it to 0 and use image_distance".into());
        }
        if !(self.epd > 0.0) {
            return fail("entrance pupil diameter must be positive".into());
        }
        if self.field_fractions.is_empty() || self.wavelengths_um.is_empty() {
            return fail("need at least one field and one wavelength".into());
        }
        if self.primary_wl_idx >= self.wavelengths_um.len() {
            return fail("primary wavelength index out of range".into());
        }
        if let ImageDistance::Fixed(v) = self.image_distance {
            if !v.is_finite() {
                return fail("image distance must be finite".into());
            }
        }
        Ok(())
    }

    /// Same design with the image distance made explicit (paraxially solved
    /// at the primary wavelength when it was [`ImageDistance::Solved`]).
    pub fn resolved(&self, catalog: &Catalog) -> Result<LensDesign> {
        match self.image_distance {
            ImageDistance::Fixed(_) => Ok(self.clone()),
            ImageDistance::Solved => {
                let d = paraxial_image_distance(self, catalog, self.primary_wavelength_um())?;
                let mut out = self.clone();
                out.image_distance = ImageDistance::Fixed(d);
                Ok(out)
            }
        }
    }

    /// Every length scaled by `s` (curvatures divide). Refraction is
    /// scale-free, so landing coordinates, EFL and image distance scale by
    /// `s` as well.
    pub fn scaled(&self, s: f64) -> LensDesign {
        let mut d = self.clone();
        for surf in &mut d.surfaces {
            surf.curvature /= s;
            surf.semi_diameter *= s;
            surf.thickness *= s;
            surf.thickness_bounds = (surf.thickness_bounds.0 * s, surf.thickness_bounds.1 * s);
        }
        d.epd *= s;
        if let ImageDistance::Fixed(v) = d.image_distance {
            d.image_distance = ImageDistance::Fixed(v * s);
        }
        d
    }

    /// Axial vertex position of each surface, mm.
    pub fn vertex_positions(&self) -> Vec<f64> {
        let mut z = 0.0;
        let mut out = Vec::with_capacity(self.surfaces.len());
        for s in &self.surfaces {
            out.push(z);
            z += s.thickness;
        }
        out
    }
}

/// A geometric ray: origin, unit direction, wavelength.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub wavelength_um: f64,
}

impl Ray {
    /// Normalizes the direction; zero direction is an error.
    pub fn new(origin: [f64; 3], direction: [f64; 3], wavelength_um: f64) -> Result<Ray> {
        let norm = (direction[0] * direction[0]
            + direction[1] * direction[1]
            + direction[2] * direction[2])
            .sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("ray direction must be nonzero and finite".into()));
        }
        Ok(Ray {
            origin,
            direction: [direction[0] / norm, direction[1] / norm, direction[2] / norm],
            wavelength_um,
        })
    }
}

/// Why a ray stopped, and where. Surface indices follow design order; the
/// image plane counts as index `surfaces.len()`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayStatus {
    Alive,
    /// Hit a surface outside its aperture.
    Vignetted { surface: usize },
    /// Snell radicand went negative.
    TotalInternalReflection { surface: usize },
    /// No real intersection with the surface sphere.
    MissedSurface { surface: usize },
    /// Intersection lies backwards along the ray.
    NegativePath { surface: usize },
}

impl RayStatus {
    pub fn is_alive(self) -> bool {
        matches!(self, RayStatus::Alive)
    }
}

/// Outcome of tracing one ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub status: RayStatus,
    /// Image-plane landing coordinates (x, y) in mm when the ray survived.
    pub landing: Option<[f64; 2]>,
    /// Signed path length of every traversed gap, one entry per gap in
    /// traversal order (the image gap included when reached).
    pub path_lengths: Vec<f64>,
}

/// One ray of the evaluation fan, identified by field, wavelength, and
/// normalized pupil coordinates in the unit disk.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FanRay {
    pub field_idx: usize,
    pub wl_idx: usize,
    pub px: f64,
    pub py: f64,
}

/// Normalized hexapolar pupil grid: center point plus `rings` rings, ring
/// `k` holding `6k` equally spaced points at radius `k/rings`.
pub fn pupil_grid(rings: usize) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    for k in 1..=rings {
        let r = k as f64 / rings as f64;
        let m = 6 * k;
        for j in 0..m {
            let a = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            pts.push((r * a.cos(), r * a.sin()));
        }
    }
    pts
}

/// The full evaluation fan of a design, in deterministic order: fields outer,
/// wavelengths middle, pupil points inner.
pub fn ray_fan(design: &LensDesign) -> Vec<FanRay> {
    let grid = pupil_grid(design.pupil_rings);
    let mut fan =
        Vec::with_capacity(design.field_fractions.len() * design.wavelengths_um.len() * grid.len());
    for field_idx in 0..design.field_fractions.len() {
        for wl_idx in 0..design.wavelengths_um.len() {
            for &(px, py) in &grid {
                fan.push(FanRay { field_idx, wl_idx, px, py });
            }
        }
    }
    fan
}

/// Launch geometry for a fan ray: a parallel bundle tilted by the field angle
/// whose footprint crosses the first-vertex plane (z = 0) exactly on the
/// entrance-pupil disk. Returned as (origin, direction) with unit direction.
pub fn launch(design: &LensDesign, fan: &FanRay) -> (Ray, f64) {
    let theta = design.half_fov_deg.to_radians() * design.field_fractions[fan.field_idx];
    let (s, c) = (theta.sin(), theta.cos());
    // Launch plane well before any first-surface sag (|sag| <= semi-diameter).
    let clearance = design.epd + 2.0 * design.surfaces[0].semi_diameter;
    let r = design.epd / 2.0;
    let origin = [fan.px * r, fan.py * r - clearance * (s / c), -clearance];
    let wl = design.wavelengths_um[fan.wl_idx];
    (
        Ray { origin, direction: [0.0, s, c], wavelength_um: wl },
        theta,
    )
}
