//! Lens templates and the `.lens` preset file format.
//!
//! A preset fixes everything the optimizer does not touch: surface order and
//! count, which curvatures and gaps are variable, per-gap bounds, stop
//! position with its two fixed adjacent gaps, pupil/field/wavelength
//! conventions, and the focal-length target. The optimizers then act on
//! (continuous parameters, element materials) pairs via
//! [`LensPreset::build_design`].
//!
//! Two templates are built in: a six-element double Gauss (the full-size
//! problem: 18 continuous + 6 integer variables) and a three-element Cooke
//! triplet (a scaled-down problem for fast runs: 10 continuous + 3 integer).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glass::Catalog;
use crate::optics::{ImageDistance, LensDesign, Medium, Surface};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensPreset {
    pub name: String,
    /// Entrance pupil diameter, mm.
    pub epd: f64,
    /// Half field of view, degrees.
    pub half_fov_deg: f64,
    /// Field set as fractions of the half field.
    pub field_fractions: Vec<f64>,
    /// Evaluation wavelengths, micrometers.
    pub wavelengths_um: Vec<f64>,
    /// Index of the primary wavelength in `wavelengths_um`.
    pub primary_wl_idx: usize,
    /// Hexapolar pupil rings (2 rings = 19 rays per bundle).
    pub pupil_rings: usize,
    /// Focal-length target for the merit function, mm.
    pub target_efl: f64,
    /// When set, the first variable curvature is constrained positive and
    /// descriptors never sample a negative first sign.
    pub first_curvature_positive: bool,
    pub surfaces: Vec<Surface>,
}

impl LensPreset {
    /// The template design itself (image distance left to the paraxial
    /// solve).
    pub fn design(&self) -> LensDesign {
        LensDesign {
            surfaces: self.surfaces.clone(),
            image_distance: ImageDistance::Solved,
            epd: self.epd,
            half_fov_deg: self.half_fov_deg,
            field_fractions: self.field_fractions.clone(),
            wavelengths_um: self.wavelengths_um.clone(),
            primary_wl_idx: self.primary_wl_idx,
            pupil_rings: self.pupil_rings,
        }
    }

    /// Design with the given continuous parameters (template layout order)
    /// and element materials.
    pub fn build_design(&self, params: &[f64], materials: &[usize]) -> Result<LensDesign> {
        self.design()
            .with_materials(materials)?
            .with_continuous_params(params)
    }

    /// Number of elements (glass gaps).
    pub fn n_elements(&self) -> usize {
        self.design().glass_gap_surfaces().len()
    }

    /// Number of variable curvatures (descriptor sign slots).
    pub fn n_variable_curvatures(&self) -> usize {
        self.surfaces.iter().filter(|s| s.curvature_variable).count()
    }

    /// Continuous search dimension (variable curvatures + variable gaps) of
    /// the template, i.e. with the image distance solved.
    pub fn continuous_dim(&self) -> usize {
        self.design().param_layout().len()
    }

    /// Bounds of each variable gap, in layout order (after the curvature
    /// block).
    pub fn variable_thickness_bounds(&self) -> Vec<(f64, f64)> {
        self.surfaces
            .iter()
            .filter(|s| s.thickness_variable)
            .map(|s| s.thickness_bounds)
            .collect()
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        self.design().validate(catalog)?;
        if self.first_curvature_positive {
            let first = self
                .surfaces
                .iter()
                .find(|s| s.curvature_variable)
                .ok_or_else(|| Error::InvalidDesign("no variable curvature".into()))?;
            if first.curvature <= 0.0 {
                return Err(Error::InvalidDesign(
                    "template violates its positive-first-curvature flag".into(),
                ));
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if s.thickness_variable {
                let (lo, hi) = s.thickness_bounds;
                if !(lo >= 0.0 && hi > lo) {
                    return Err(Error::InvalidDesign(format!(
                        "surface {i}: bad thickness bounds [{lo}, {hi}]"
                    )));
                }
                if s.thickness < lo || s.thickness > hi {
                    return Err(Error::InvalidDesign(format!(
                        "surface {i}: template thickness {} outside its bounds [{lo}, {hi}]",
                        s.thickness
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parse the `.lens` format: `key value` lines followed by one `surf`
    /// line per surface:
    ///
    /// ```text
    /// surf <curvature> <semi_diameter> <thickness> <air|glass:IDX> <flags> <t_lo> <t_hi>
    /// ```
    ///
    /// where `<flags>` is a comma list from {`cv`, `tv`, `stop`} or `fixed`.
    pub fn parse(text: &str, source_name: &str) -> Result<LensPreset> {
        let mut p = LensPreset {
            name: String::new(),
            epd: 0.0,
            half_fov_deg: 0.0,
            field_fractions: Vec::new(),
            wavelengths_um: Vec::new(),
            primary_wl_idx: 0,
            pupil_rings: 2,
            target_efl: 0.0,
            first_curvature_positive: false,
            surfaces: Vec::new(),
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                message,
            };
            let mut toks = line.split_whitespace();
            let key = toks.next().unwrap();
            let rest: Vec<&str> = toks.collect();
            let one = || -> Result<&str> {
                rest.first().copied().ok_or_else(|| fail(format!("{key}: missing value")))
            };
            let nums = |xs: &[&str]| -> Result<Vec<f64>> {
                xs.iter()
                    .map(|t| t.parse::<f64>().map_err(|e| fail(format!("{key}: bad number: {e}"))))
                    .collect()
            };
            match key {
                "name" => p.name = one()?.to_string(),
                "epd" => p.epd = nums(&rest)?[0],
                "half_fov_deg" => p.half_fov_deg = nums(&rest)?[0],
                "fields" => p.field_fractions = nums(&rest)?,
                "wavelengths" => p.wavelengths_um = nums(&rest)?,
                "primary" => {
                    p.primary_wl_idx = one()?
                        .parse()
                        .map_err(|e| fail(format!("primary: bad index: {e}")))?
                }
                "rings" => {
                    p.pupil_rings = one()?
                        .parse()
                        .map_err(|e| fail(format!("rings: bad count: {e}")))?
                }
                "target_efl" => p.target_efl = nums(&rest)?[0],
                "first_curvature_positive" => {
                    p.first_curvature_positive = match one()? {
                        "true" => true,
                        "false" => false,
                        other => return Err(fail(format!("expected true/false, got '{other}'"))),
                    }
                }
                "surf" => {
                    if rest.len() != 7 {
                        return Err(fail(format!(
                            "surf takes 7 fields (curvature semi thickness medium flags t_lo t_hi), got {}",
                            rest.len()
                        )));
                    }
                    let geom = nums(&rest[..3])?;
                    let medium = match rest[3] {
                        "air" => Medium::Air,
                        g if g.starts_with("glass:") => {
                            let idx = g["glass:".len()..]
                                .parse()
                                .map_err(|e| fail(format!("bad glass index: {e}")))?;
                            Medium::Glass(idx)
                        }
                        other => return Err(fail(format!("unknown medium '{other}'"))),
                    };
                    let mut cv = false;
                    let mut tv = false;
                    let mut stop = false;
                    if rest[4] != "fixed" {
                        for flag in rest[4].split(',') {
                            match flag {
                                "cv" => cv = true,
                                "tv" => tv = true,
                                "stop" => stop = true,
                                other => return Err(fail(format!("unknown flag '{other}'"))),
                            }
                        }
                    }
                    let bounds = nums(&rest[5..])?;
                    p.surfaces.push(Surface {
                        curvature: geom[0],
                        semi_diameter: geom[1],
                        thickness: geom[2],
                        medium,
                        is_stop: stop,
                        curvature_variable: cv,
                        thickness_variable: tv,
                        thickness_bounds: (bounds[0], bounds[1]),
                    });
                }
                other => return Err(fail(format!("unknown key '{other}'"))),
            }
        }
        if p.surfaces.is_empty() {
            return Err(Error::Config(format!("preset '{source_name}' has no surfaces")));
        }
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> Result<LensPreset> {
        let text = std::fs::read_to_string(path)?;
        LensPreset::parse(&text, &path.display().to_string())
    }

    /// Serialize to the `.lens` text format parsed by [`LensPreset::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name {}\n", self.name));
        out.push_str(&format!("epd {}\n", self.epd));
        out.push_str(&format!("half_fov_deg {}\n", self.half_fov_deg));
        let join = |xs: &[f64]| {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        out.push_str(&format!("fields {}\n", join(&self.field_fractions)));
        out.push_str(&format!("wavelengths {}\n", join(&self.wavelengths_um)));
        out.push_str(&format!("primary {}\n", self.primary_wl_idx));
        out.push_str(&format!("rings {}\n", self.pupil_rings));
        out.push_str(&format!("target_efl {}\n", self.target_efl));
        out.push_str(&format!(
            "first_curvature_positive {}\n",
            self.first_curvature_positive
        ));
        out.push_str("# surf: curvature semi_diameter thickness medium flags t_lo t_hi\n");
        for s in &self.surfaces {
            let medium = match s.medium {
                Medium::Air => "air".to_string(),
                Medium::Glass(g) => format!("glass:{g}"),
            };
            let mut flags: Vec<&str> = Vec::new();
            if s.curvature_variable {
                flags.push("cv");
            }
            if s.thickness_variable {
                flags.push("tv");
            }
            if s.is_stop {
                flags.push("stop");
            }
            let flags = if flags.is_empty() { "fixed".to_string() } else { flags.join(",") };
            out.push_str(&format!(
                "surf {} {} {} {} {} {} {}\n",
                s.curvature,
                s.semi_diameter,
                s.thickness,
                medium,
                flags,
                s.thickness_bounds.0,
                s.thickness_bounds.1
            ));
        }
        out
    }
}

fn surf(
    curvature: f64,
    semi_diameter: f64,
    thickness: f64,
    medium: Medium,
    cv: bool,
    tv: bool,
    bounds: (f64, f64),
) -> Surface {
    Surface {
        curvature,
        semi_diameter,
        thickness,
        medium,
        is_stop: false,
        curvature_variable: cv,
        thickness_variable: tv,
        thickness_bounds: bounds,
    }
}

/// Six-element double Gauss template: front singlet, cemented doublet, stop,
/// cemented doublet, rear singlet. 10 variable curvatures + 8 variable gaps
/// (the two stop-adjacent air gaps are fixed) and 6 element materials.
///
/// Target: EFL 95.5 mm at f/2.9, full field 28 degrees, F/d/C lines.
pub fn double_gauss() -> LensPreset {
    LensPreset {
        name: "double-gauss".into(),
        epd: 33.33,
        half_fov_deg: 14.0,
        field_fractions: vec![0.0, 0.7, 1.0],
        wavelengths_um: vec![crate::glass::WL_F_UM, crate::glass::WL_D_UM, crate::glass::WL_C_UM],
        primary_wl_idx: 1,
        pupil_rings: 2,
        target_efl: 95.5,
        first_curvature_positive: true,
        surfaces: vec![
            surf(1.0 / 56.0, 26.0, 7.0, Medium::Glass(3), true, true, (1.0, 12.0)),
            surf(1.0 / 170.0, 25.0, 0.5, Medium::Air, true, true, (0.2, 8.0)),
            surf(1.0 / 32.0, 23.0, 11.0, Medium::Glass(9), true, true, (1.0, 14.0)),
            surf(-1.0 / 75.0, 21.0, 2.0, Medium::Glass(17), true, true, (1.0, 8.0)),
            surf(1.0 / 21.0, 16.0, 7.0, Medium::Air, true, false, (7.0, 7.0)),
            Surface::stop(14.0, 7.0),
            surf(-1.0 / 23.0, 16.0, 2.0, Medium::Glass(18), true, true, (1.0, 8.0)),
            surf(1.0 / 72.0, 19.0, 9.0, Medium::Glass(8), true, true, (1.0, 14.0)),
            surf(-1.0 / 35.0, 20.0, 0.5, Medium::Air, true, true, (0.2, 8.0)),
            surf(1.0 / 160.0, 22.0, 6.0, Medium::Glass(9), true, true, (1.0, 12.0)),
            surf(-1.0 / 60.0, 22.0, 0.0, Medium::Air, true, false, (0.0, 0.0)),
        ],
    }
}

/// Three-element Cooke triplet template: crown, flint, stop, crown. 6
/// variable curvatures + 4 variable gaps and 3 element materials; a fast,
/// desk-size counterpart of the double Gauss.
pub fn cooke_triplet() -> LensPreset {
    LensPreset {
        name: "cooke-triplet".into(),
        epd: 10.0,
        half_fov_deg: 15.0,
        field_fractions: vec![0.0, 0.7, 1.0],
        wavelengths_um: vec![crate::glass::WL_F_UM, crate::glass::WL_D_UM, crate::glass::WL_C_UM],
        primary_wl_idx: 1,
        pupil_rings: 2,
        target_efl: 50.0,
        first_curvature_positive: true,
        surfaces: vec![
            surf(1.0 / 22.6, 9.0, 3.0, Medium::Glass(3), true, true, (1.0, 6.0)),
            surf(-1.0 / 440.0, 9.0, 5.5, Medium::Air, true, true, (0.2, 10.0)),
            surf(-1.0 / 24.0, 6.5, 1.2, Medium::Glass(17), true, true, (1.0, 4.0)),
            surf(1.0 / 23.0, 6.5, 3.0, Medium::Air, true, false, (3.0, 3.0)),
            Surface::stop(5.5, 3.0),
            surf(1.0 / 120.0, 8.0, 2.5, Medium::Glass(3), true, true, (1.0, 6.0)),
            surf(-1.0 / 20.0, 8.0, 0.0, Medium::Air, true, false, (0.0, 0.0)),
        ],
    }
}
