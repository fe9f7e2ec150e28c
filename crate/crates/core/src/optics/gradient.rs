//! Exact forward-mode gradients of scalar functions of a design.
//!
//! A [`DesignFn`] evaluates some scalar property (merit value, focal length,
//! image distance, ...) generically in the scalar type, taking the design's
//! continuous parameters as a slice. [`gradient`] then runs one dual-number
//! forward pass per parameter: pass `j` seeds a unit derivative on parameter
//! `j` and reads the derivative off the result. The derivatives are exact
//! (machine-precision chain rule, no truncation error) wherever the function
//! is differentiable; across ray status changes they are one-sided.

use crate::error::Result;
use crate::glass::Catalog;
use crate::optics::paraxial;
use crate::optics::LensDesign;
use crate::scalar::{Dual, Scalar};

/// A scalar function of a design's continuous parameters, evaluable in any
/// scalar type. `params` follows [`LensDesign::param_layout`] order.
pub trait DesignFn {
    fn eval_scalar<S: Scalar>(
        &self,
        design: &LensDesign,
        catalog: &Catalog,
        params: &[S],
    ) -> Result<S>;
}

/// Value and exact gradient of `f` at the design's current parameters.
pub fn gradient<F: DesignFn + ?Sized>(
    f: &F,
    design: &LensDesign,
    catalog: &Catalog,
) -> Result<(f64, Vec<f64>)> {
    let p0 = design.continuous_params();
    let value = f.eval_scalar::<f64>(design, catalog, &p0)?;
    let mut grad = Vec::with_capacity(p0.len());
    let mut params: Vec<Dual> = p0.iter().map(|&v| Dual::constant(v)).collect();
    for j in 0..p0.len() {
        params[j] = Dual::variable(p0[j]);
        let out = f.eval_scalar::<Dual>(design, catalog, &params)?;
        grad.push(out.d);
        params[j] = Dual::constant(p0[j]);
    }
    Ok((value, grad))
}

/// Effective focal length at a fixed wavelength, as a [`DesignFn`].
pub struct EflFn {
    pub wavelength_um: f64,
}

impl DesignFn for EflFn {
    fn eval_scalar<S: Scalar>(
        &self,
        design: &LensDesign,
        catalog: &Catalog,
        params: &[S],
    ) -> Result<S> {
        let geom = design.geometry_with(params)?;
        let n_table = design.index_table(catalog, self.wavelength_um)?;
        paraxial::efl_generic(&geom, &n_table, self.wavelength_um)
    }
}

/// Paraxial image distance at a fixed wavelength, as a [`DesignFn`].
pub struct ImageDistanceFn {
    pub wavelength_um: f64,
}

impl DesignFn for ImageDistanceFn {
    fn eval_scalar<S: Scalar>(
        &self,
        design: &LensDesign,
        catalog: &Catalog,
        params: &[S],
    ) -> Result<S> {
        let geom = design.geometry_with(params)?;
        let n_table = design.index_table(catalog, self.wavelength_um)?;
        paraxial::image_distance_generic(&geom, &n_table, self.wavelength_um)
    }
}
