//! First-order (y-u) properties: paraxial image distance and focal length.
//!
//! A single paraxial marginal ray from infinity (height 1, slope 0) is
//! propagated with the refraction equation `n' u' = n u - y c (n' - n)` and
//! the transfer `y' = y + t u'`. The image distance is where that ray crosses
//! the axis behind the last surface; the effective focal length is the
//! incoming height over the exiting convergence angle.

use crate::error::{Error, Result};
use crate::glass::Catalog;
use crate::optics::{Geometry, LensDesign};
use crate::scalar::Scalar;

/// Exit (height, slope) of the infinity marginal ray after the last surface.
pub(crate) fn paraxial_marginal<S: Scalar>(geom: &Geometry<S>, n_table: &[f64]) -> (S, S) {
    let mut y = S::one();
    let mut u = S::zero();
    let mut n_before = 1.0_f64;
    for i in 0..geom.curv.len() {
        let n_after = n_table[i];
        u = (S::from_f64(n_before) * u - y * geom.curv[i] * S::from_f64(n_after - n_before))
            / S::from_f64(n_after);
        if let Some(gap) = geom.gaps.get(i) {
            y = y + *gap * u;
        }
        n_before = n_after;
    }
    (y, u)
}

/// Threshold below which the exit slope counts as afocal.
const AFOCAL_SLOPE: f64 = 1e-12;

pub(crate) fn image_distance_generic<S: Scalar>(
    geom: &Geometry<S>,
    n_table: &[f64],
    wavelength_um: f64,
) -> Result<S> {
    let (y, u) = paraxial_marginal(geom, n_table);
    if u.value().abs() < AFOCAL_SLOPE {
        return Err(Error::NoPower { wavelength_um });
    }
    Ok(-y / u)
}

pub(crate) fn efl_generic<S: Scalar>(
    geom: &Geometry<S>,
    n_table: &[f64],
    wavelength_um: f64,
) -> Result<S> {
    let (_, u) = paraxial_marginal(geom, n_table);
    if u.value().abs() < AFOCAL_SLOPE {
        return Err(Error::NoPower { wavelength_um });
    }
    Ok(-S::one() / u)
}

/// Axial distance from the last surface vertex to the paraxial focus at
/// `wavelength_um`. Errors with [`Error::NoPower`] for afocal systems.
pub fn paraxial_image_distance(
    design: &LensDesign,
    catalog: &Catalog,
    wavelength_um: f64,
) -> Result<f64> {
    let geom = design.geometry_with::<f64>(&design.continuous_params())?;
    let n_table = design.index_table(catalog, wavelength_um)?;
    image_distance_generic(&geom, &n_table, wavelength_um)
}

/// Effective focal length at `wavelength_um` (positive for converging
/// systems).
pub fn effective_focal_length(
    design: &LensDesign,
    catalog: &Catalog,
    wavelength_um: f64,
) -> Result<f64> {
    let geom = design.geometry_with::<f64>(&design.continuous_params())?;
    let n_table = design.index_table(catalog, wavelength_um)?;
    efl_generic(&geom, &n_table, wavelength_um)
}
