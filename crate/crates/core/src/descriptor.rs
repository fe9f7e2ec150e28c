//! Behavior descriptors and the learned distribution over them.
//!
//! A [`Descriptor`] is the discrete signature of a lens design: the sign of
//! every optimizable curvature plus the catalog index of every element's
//! glass. Thicknesses are deliberately excluded — they move a design inside
//! its niche, they do not change which niche it is. The continuous search
//! space belonging to one descriptor is an axis-aligned box
//! ([`subspace_bounds`]) whose curvature intervals exclude zero, so the
//! descriptor is invariant over the whole box.
//!
//! [`DescriptorDistribution`] is a fully factorized model — one Bernoulli per
//! sign, one categorical per element — updated toward the empirical marginals
//! of selected descriptors (the univariate marginal distribution algorithm)
//! and compared across iterations by exact factor-wise KL divergence.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merit::MeritConfig;
use crate::optics::{LensDesign, ParamKind};

/// Strict-sign margin keeping curvature boxes away from zero (1/mm).
pub const SIGN_MARGIN: f64 = 1e-4;

/// Probability floor applied after every distribution update; keeps sampling
/// ergodic where a learning rate of 1 would otherwise collapse mass forever.
pub const PROB_FLOOR: f64 = 1e-3;

/// Discrete niche identity: curvature signs (over optimizable curvatures, in
/// surface order) and glass catalog indices (in element order).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Descriptor {
    /// One of −1, 0, +1 per optimizable curvature. 0 occurs only when
    /// describing a literally flat surface; sampling never produces it.
    pub signs: Vec<i8>,
    /// Catalog index per element.
    pub materials: Vec<usize>,
}

impl Descriptor {
    /// Compact form used in archives and reports: signs as `+`/`-`/`0`, a
    /// `|`, then comma-separated material indices.
    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.signs {
            f.write_str(match s {
                1 => "+",
                -1 => "-",
                _ => "0",
            })?;
        }
        f.write_str("|")?;
        for (i, m) in self.materials.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Descriptor> {
        let bad = |m: &str| Error::InvalidArgument(format!("descriptor {s:?}: {m}"));
        let (sign_part, mat_part) =
            s.split_once('|').ok_or_else(|| bad("missing '|' separator"))?;
        let mut signs = Vec::with_capacity(sign_part.len());
        for ch in sign_part.chars() {
            signs.push(match ch {
                '+' => 1,
                '-' => -1,
                '0' => 0,
                _ => return Err(bad("signs must be '+', '-' or '0'")),
            });
        }
        let materials = if mat_part.is_empty() {
            Vec::new()
        } else {
            mat_part
                .split(',')
                .map(|t| t.parse::<usize>().map_err(|_| bad("bad material index")))
                .collect::<Result<_>>()?
        };
        Ok(Descriptor { signs, materials })
    }
}

impl Serialize for Descriptor {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Descriptor {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Descriptor, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Map a design to its descriptor: componentwise curvature signs (over the
/// optimizable curvatures) plus the element materials.
pub fn describe(design: &LensDesign) -> Descriptor {
    let signs = design
        .surfaces
        .iter()
        .filter(|s| s.curvature_variable)
        .map(|s| {
            if s.curvature > 0.0 {
                1
            } else if s.curvature < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    Descriptor { signs, materials: design.materials() }
}

/// Objective tolerance for descriptor equivalence: `1e-9 · max(1, |f|)`.
pub fn equivalence_tol(f_a: f64, f_b: f64) -> f64 {
    1e-9 * f_a.abs().max(f_b.abs()).max(1.0)
}

/// Two designs are descriptor-equivalent when they share a descriptor and
/// their objective values agree within `tol`.
pub fn equivalent(a: &LensDesign, b: &LensDesign, f_a: f64, f_b: f64, tol: f64) -> bool {
    (f_a - f_b).abs() <= tol && describe(a) == describe(b)
}

/// Fully factorized sampling distribution over descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorDistribution {
    /// Per-sign probability of +1.
    pub sign_p: Vec<f64>,
    /// Per-element categorical over the glass catalog.
    pub material_p: Vec<Vec<f64>>,
    /// Learning rate of [`DescriptorDistribution::update`].
    pub alpha: f64,
}

impl DescriptorDistribution {
    /// Uniform model: every sign fifty-fifty, every glass equally likely.
    pub fn uniform(n_signs: usize, n_elements: usize, catalog_size: usize, alpha: f64) -> Self {
        DescriptorDistribution {
            sign_p: vec![0.5; n_signs],
            material_p: vec![vec![1.0 / catalog_size as f64; catalog_size]; n_elements],
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sign_p.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("sign probability outside [0, 1]".into()));
        }
        for cat in &self.material_p {
            if cat.is_empty() || cat.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument("bad categorical".into()));
            }
            let sum: f64 = cat.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "categorical sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// One independent draw per factor. Signs are ±1 only; the first sign is
    /// forced to +1 when `first_sign_positive` is set.
    pub fn sample<R: Rng>(&self, rng: &mut R, first_sign_positive: bool) -> Descriptor {
        let signs = self
            .sign_p
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if i == 0 && first_sign_positive {
                    // Keep the stream aligned with the unforced path.
                    let _ = rng.gen::<f64>();
                    1
                } else if rng.gen::<f64>() < p {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let materials = self
            .material_p
            .iter()
            .map(|cat| {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                for (k, &p) in cat.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k;
                    }
                }
                cat.len() - 1
            })
            .collect();
        Descriptor { signs, materials }
    }

    /// Draw `n` descriptors, rejection-resampling duplicates within the batch
    /// up to 10 retries each before accepting the duplicate.
    pub fn sample_batch<R: Rng>(
        &self,
        rng: &mut R,
        n: usize,
        first_sign_positive: bool,
    ) -> Vec<Descriptor> {
        let mut out = Vec::with_capacity(n);
        let mut seen: HashSet<Descriptor> = HashSet::with_capacity(n);
        for _ in 0..n {
            let mut cand = self.sample(rng, first_sign_positive);
            for _retry in 0..10 {
                if !seen.contains(&cand) {
                    break;
                }
                cand = self.sample(rng, first_sign_positive);
            }
            seen.insert(cand.clone());
            out.push(cand);
        }
        out
    }

    /// Univariate-marginal update toward the selected descriptors:
    /// `p' = (1 − α) p + α · empirical`, per factor, then floored at
    /// [`PROB_FLOOR`] and renormalized.
    pub fn update(&self, selected: &[Descriptor], alpha: f64) -> Result<DescriptorDistribution> {
        if selected.is_empty() {
            return Err(Error::InvalidArgument("update needs a non-empty selection".into()));
        }
        for d in selected {
            if d.signs.len() != self.sign_p.len() || d.materials.len() != self.material_p.len() {
                return Err(Error::InvalidArgument(
                    "selected descriptor shape does not match distribution".into(),
                ));
            }
        }
        let inv_mu = 1.0 / selected.len() as f64;
        let sign_p = self
            .sign_p
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                let freq = selected.iter().filter(|d| d.signs[j] > 0).count() as f64 * inv_mu;
                ((1.0 - alpha) * p + alpha * freq).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
            })
            .collect();
        let material_p = self
            .material_p
            .iter()
            .enumerate()
            .map(|(j, cat)| {
                let mut next: Vec<f64> = cat
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| {
                        let freq =
                            selected.iter().filter(|d| d.materials[j] == k).count() as f64 * inv_mu;
                        ((1.0 - alpha) * p + alpha * freq).max(PROB_FLOOR)
                    })
                    .collect();
                let sum: f64 = next.iter().sum();
                for p in &mut next {
                    *p /= sum;
                }
                next
            })
            .collect();
        Ok(DescriptorDistribution { sign_p, material_p, alpha: self.alpha })
    }

    /// Exact KL divergence `KL(self ‖ q)`, the sum of the factor-wise
    /// divergences (valid because both models factorize). `q` must be
    /// strictly positive, which the update's flooring guarantees.
    pub fn kl_divergence(&self, q: &DescriptorDistribution) -> f64 {
        fn term(p: f64, q: f64) -> f64 {
            if p <= 0.0 {
                0.0
            } else {
                p * (p / q).ln()
            }
        }
        let mut kl = 0.0;
        for (&p, &qq) in self.sign_p.iter().zip(&q.sign_p) {
            kl += term(p, qq) + term(1.0 - p, 1.0 - qq);
        }
        for (pc, qc) in self.material_p.iter().zip(&q.material_p) {
            for (&p, &qq) in pc.iter().zip(qc) {
                kl += term(p, qq);
            }
        }
        kl
    }
}

/// Box constraints over a design's continuous parameters for one descriptor:
/// each optimizable curvature is confined to the strictly signed interval
/// `[SIGN_MARGIN, max_curvature]` (mirrored for −1), each variable gap to its
/// surface-table bounds. Zero signs have no box and are an error.
pub fn subspace_bounds(
    descriptor: &Descriptor,
    design: &LensDesign,
    cfg: &MeritConfig,
) -> Result<Vec<(f64, f64)>> {
    let layout = design.param_layout();
    let n_signs = layout
        .kinds
        .iter()
        .filter(|k| matches!(k, ParamKind::Curvature(_)))
        .count();
    if descriptor.signs.len() != n_signs {
        return Err(Error::InvalidArgument(format!(
            "descriptor has {} signs, design has {} optimizable curvatures",
            descriptor.signs.len(),
            n_signs
        )));
    }
    let mut sign_iter = descriptor.signs.iter();
    layout
        .kinds
        .iter()
        .map(|k| match *k {
            ParamKind::Curvature(_) => match sign_iter.next().unwrap() {
                1 => Ok((SIGN_MARGIN, cfg.max_curvature)),
                -1 => Ok((-cfg.max_curvature, -SIGN_MARGIN)),
                _ => Err(Error::InvalidArgument(
                    "flat (0-sign) curvatures have no search box".into(),
                )),
            },
            ParamKind::Thickness(i) => Ok(design.surfaces[i].thickness_bounds),
            ParamKind::ImageDistance => Err(Error::InvalidArgument(
                "descriptor subspaces require a paraxially solved image distance".into(),
            )),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glass::synthetic_catalog;
    use crate::optics::{ImageDistance, Medium, Surface};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn plano_singlet(material: usize) -> LensDesign {
        LensDesign {
            surfaces: vec![
                Surface {
                    curvature: 0.02,
                    semi_diameter: 10.0,
                    thickness: 3.0,
                    medium: Medium::Glass(material),
                    is_stop: true,
                    curvature_variable: true,
                    thickness_variable: true,
                    thickness_bounds: (1.0, 8.0),
                },
                Surface {
                    curvature: 0.0,
                    semi_diameter: 10.0,
                    thickness: 0.0,
                    medium: Medium::Air,
                    is_stop: false,
                    curvature_variable: true,
                    thickness_variable: false,
                    thickness_bounds: (0.0, 0.0),
                },
            ],
            image_distance: ImageDistance::Solved,
            epd: 8.0,
            half_fov_deg: 3.0,
            field_fractions: vec![0.0],
            wavelengths_um: vec![0.58756],
            primary_wl_idx: 0,
            pupil_rings: 1,
        }
    }

    #[test]
    fn plano_convex_singlet_maps_to_plus_zero_three() {
        let d = describe(&plano_singlet(3));
        assert_eq!(d.signs, vec![1, 0]);
        assert_eq!(d.materials, vec![3]);
        assert_eq!(d.to_string(), "+0|3");
    }

    #[test]
    fn describe_ignores_magnitudes_and_thicknesses() {
        let base = plano_singlet(3);
        let mut scaled = base.clone();
        for s in &mut scaled.surfaces {
            s.curvature *= 2.0;
        }
        assert_eq!(describe(&base), describe(&scaled));
        let mut thicker = base.clone();
        thicker.surfaces[0].thickness = 7.0;
        assert_eq!(describe(&base), describe(&thicker));
    }

    #[test]
    fn serialization_round_trips() {
        for s in ["+0|3", "++-+-|0,17,23", "-|5", "+-|"] {
            let d: Descriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        let d = Descriptor { signs: vec![1, -1, 0], materials: vec![2, 0] };
        assert_eq!(d.to_string().parse::<Descriptor>().unwrap(), d);
        // JSON uses the same compact string.
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, "\"+-0|2,0\"");
        assert_eq!(serde_json::from_str::<Descriptor>(&json).unwrap(), d);
    }

    #[test]
    fn malformed_strings_are_rejected()  {
        for s in ["+0", "+x|3", "+0|3,a", "+0|3,"] {
            assert!(s.parse::<Descriptor>().is_err(), "{s:?} should not parse");
        }
    }

    #[test]
    fn equivalence_requires_descriptor_and_value() {
        let a = plano_singlet(3);
        let tol = equivalence_tol(0.5, 0.5);
        assert!(equivalent(&a, &a, 0.5, 0.5, tol));
        // Same descriptor, values 10 tolerances apart.
        assert!(!equivalent(&a, &a, 0.5, 0.5 + 10.0 * tol, tol));
        // Different material, identical value.
        let b = plano_singlet(4);
        assert!(!equivalent(&a, &b, 0.5, 0.5, tol));
    }

    #[test]
    fn degenerate_distribution_samples_one_descriptor() {
        let dist = DescriptorDistribution {
            sign_p: vec![1.0, 0.0],
            material_p: vec![vec![0.0, 0.0, 1.0]],
            alpha: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = dist.sample(&mut rng, false);
            assert_eq!(d.signs, vec![1, -1]);
            assert_eq!(d.materials, vec![2]);
        }
    }

    #[test]
    fn uniform_sampling_is_uniform_over_the_descriptor_space() {
        // 2 signs x 1 element over 2 glasses: 8 descriptors, each 1/8.
        let dist = DescriptorDistribution::uniform(2, 1, 2, 1.0);
        dist.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut counts: HashMap<String, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(dist.sample(&mut rng, false).to_string()).or_default() += 1;
        }
        assert_eq!(counts.len(), 8);
        let p = 1.0 / 8.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (k, c) in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() <= 3.0 * sigma, "{k}: freq {freq} vs {p}");
        }
    }

    #[test]
    fn first_sign_flag_forces_positive() {
        let dist = DescriptorDistribution::uniform(3, 1, 4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            assert_eq!(dist.sample(&mut rng, true).signs[0], 1);
        }
    }

    #[test]
    fn batch_rejects_duplicates_while_space_allows() {
        let dist = DescriptorDistribution::uniform(4, 2, 6, 1.0); // 16 * 36 combos
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = dist.sample_batch(&mut rng, 12, false);
        let unique: HashSet<_> = batch.iter().collect();
        assert_eq!(unique.len(), batch.len(), "ample space: no duplicates expected");
        // Degenerate distribution: retries exhaust, duplicates accepted.
        let degenerate = DescriptorDistribution {
            sign_p: vec![1.0],
            material_p: vec![vec![1.0]],
            alpha: 1.0,
        };
        let batch = degenerate.sample_batch(&mut rng, 5, false);
        assert_eq!(batch.len(), 5);
        assert!(batch.iter().all(|d| *d == batch[0]));
    }

    #[test]
    fn update_closed_forms() {
        let dist = DescriptorDistribution::uniform(2, 1, 4, 1.0);
        let plus = Descriptor { signs: vec![1, 1], materials: vec![2] };
        let minus = Descriptor { signs: vec![1, -1], materials: vec![1] };

        // alpha = 0: unchanged.
        assert_eq!(dist.update(&[plus.clone()], 0.0).unwrap(), dist);

        // alpha = 1, mu = 1: all mass on the selection (up to the floor).
        let up = dist.update(&[plus.clone()], 1.0).unwrap();
        assert_eq!(up.sign_p, vec![1.0 - PROB_FLOOR; 2]);
        let cat = &up.material_p[0];
        assert!(cat[2] > 0.99, "selected glass holds the mass: {cat:?}");
        assert!((cat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(cat.iter().all(|&p| p >= PROB_FLOOR / 2.0));

        // alpha = 1, mu = 2, signs {+1, -1} at position 1: Bernoulli 0.5.
        let up = dist.update(&[plus, minus], 1.0).unwrap();
        assert_eq!(up.sign_p[1], 0.5);
        assert_eq!(up.sign_p[0], 1.0 - PROB_FLOOR);

        // Empty selection is an error.
        assert!(dist.update(&[], 1.0).is_err());
    }

    #[test]
    fn repeated_selection_makes_the_descriptor_modal() {
        let dist = DescriptorDistribution::uniform(3, 2, 5, 1.0);
        let target = Descriptor { signs: vec![1, -1, 1], materials: vec![4, 0] };
        let up = dist.update(&std::iter::repeat(target.clone()).take(5).collect::<Vec<_>>(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let hits = (0..1000).filter(|_| up.sample(&mut rng, false) == target).count();
        assert!(hits >= 950, "stationary selection should dominate sampling: {hits}/1000");
    }

    #[test]
    fn kl_oracles_and_nonnegativity() {
        let p = DescriptorDistribution::uniform(2, 1, 3, 1.0);
        assert_eq!(p.kl_divergence(&p), 0.0);

        // Single Bernoulli factor 0.5 vs 0.25:
        // 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75) = 0.14384...
        let a = DescriptorDistribution { sign_p: vec![0.5], material_p: vec![], alpha: 1.0 };
        let b = DescriptorDistribution { sign_p: vec![0.25], material_p: vec![], alpha: 1.0 };
        assert!((a.kl_divergence(&b) - 0.1438410362258904).abs() < 1e-5);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let rand_dist = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                DescriptorDistribution {
                    sign_p: vec![rng.gen_range(0.05..0.95)],
                    material_p: vec![raw.iter().map(|r| r / sum).collect()],
                    alpha: 1.0,
                }
            };
            let p = rand_dist(&mut rng);
            let q = rand_dist(&mut rng);
            assert!(p.kl_divergence(&q) >= -1e-15);
        }
    }

    #[test]
    fn kl_goes_to_zero_under_stationary_selection() {
        let mut dist = DescriptorDistribution::uniform(2, 1, 4, 1.0);
        let sel = vec![Descriptor { signs: vec![1, -1], materials: vec![3] }];
        dist = dist.update(&sel, 1.0).unwrap();
        let again = dist.update(&sel, 1.0).unwrap();
        assert!(dist.kl_divergence(&again) < 1e-12);
    }

    #[test]
    fn subspace_bounds_are_strictly_signed() {
        let design = plano_singlet(3);
        let cfg = MeritConfig {
            weights: [10.0, 1.0, 1.0, 1.0, 1.0],
            min_glass_thickness: 1.0,
            min_air_gap: 0.2,
            min_working_distance: 20.0,
            target_efl: 100.0,
            efl_dead_zone: 1e-4,
            max_curvature: 0.25,
            first_curvature_positive: true,
        };
        let x = Descriptor { signs: vec![1, -1], materials: vec![3] };
        let b = subspace_bounds(&x, &design, &cfg).unwrap();
        // Layout: curvature 0, curvature 1, thickness 0.
        assert_eq!(b[0], (SIGN_MARGIN, 0.25));
        assert_eq!(b[1], (-0.25, -SIGN_MARGIN));
        assert_eq!(b[2], (1.0, 8.0));
        assert!(b.iter().all(|(lo, hi)| lo < hi && (*lo > 0.0 || *hi < 0.0 || *lo >= 0.0)));

        // Zero signs have no box.
        let flat = Descriptor { signs: vec![1, 0], materials: vec![3] };
        assert!(subspace_bounds(&flat, &design, &cfg).is_err());
        // Shape mismatch is an error.
        let short = Descriptor { signs: vec![1], materials: vec![3] };
        assert!(subspace_bounds(&short, &design, &cfg).is_err());
    }

    #[test]
    fn every_in_box_point_keeps_the_descriptor() {
        let design = plano_singlet(0);
        let cat = synthetic_catalog();
        let cfg = MeritConfig {
            weights: [10.0, 1.0, 1.0, 1.0, 1.0],
            min_glass_thickness: 1.0,
            min_air_gap: 0.2,
            min_working_distance: 20.0,
            target_efl: 100.0,
            efl_dead_zone: 1e-4,
            max_curvature: 0.25,
            first_curvature_positive: true,
        };
        let x = Descriptor { signs: vec![1, -1], materials: vec![7] };
        let bounds = subspace_bounds(&x, &design, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let p: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            let d = design
                .with_materials(&x.materials)
                .unwrap()
                .with_continuous_params(&p)
                .unwrap();
            assert_eq!(describe(&d), x);
            assert!(d.validate(&cat).is_ok());
        }
    }
}
