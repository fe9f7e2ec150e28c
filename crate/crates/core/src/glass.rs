//! Glass dispersion models and the glass catalog.
//!
//! A catalog is an ordered list of glasses; material choices elsewhere in the
//! crate are indices into it. Each glass carries either a 3-term Sellmeier
//! model,
//!
//! ```text
//! n^2(l) = 1 + B1 l^2/(l^2 - C1) + B2 l^2/(l^2 - C2) + B3 l^2/(l^2 - C3)
//! ```
//!
//! with `l` in micrometers, or a constant-index model given by the indices at
//! the three standard spectral lines (interpolated linearly in wavelength
//! between them). Querying outside a glass's validity range is an error, not
//! an extrapolation.
//!
//! The bundled catalog is synthetic: Sellmeier coefficients are solved so that
//! each entry hits a prescribed (n_d, V_d) pair on a crown/flint grid, with
//! the resonance constants shared across entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Blue hydrogen F line, micrometers.
pub const WL_F_UM: f64 = 0.48613;
/// Yellow helium d line, micrometers.
pub const WL_D_UM: f64 = 0.58756;
/// Red hydrogen C line, micrometers.
pub const WL_C_UM: f64 = 0.65627;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DispersionModel {
    /// 3-term Sellmeier, `b` numerators and `c` resonance constants (um^2).
    Sellmeier { b: [f64; 3], c: [f64; 3] },
    /// Indices at the F, d, C lines; linear in wavelength between them,
    /// clamped outside.
    Constant { nd: f64, nf: f64, nc: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Glass {
    pub name: String,
    pub model: DispersionModel,
    /// Validity range in micrometers, inclusive.
    pub range_um: (f64, f64),
}

impl Glass {
    /// Refractive index at `wavelength_um`.
    pub fn refractive_index(&self, wavelength_um: f64) -> Result<f64> {
        let (lo, hi) = self.range_um;
        if !(wavelength_um >= lo && wavelength_um <= hi) {
            return Err(Error::WavelengthOutOfRange {
                glass: self.name.clone(),
                wavelength_um,
                min_um: lo,
                max_um: hi,
            });
        }
        Ok(match &self.model {
            DispersionModel::Sellmeier { b, c } => {
                let l2 = wavelength_um * wavelength_um;
                let mut n2 = 1.0;
                for k in 0..3 {
                    n2 += b[k] * l2 / (l2 - c[k]);
                }
                n2.sqrt()
            }
            DispersionModel::Constant { nd, nf, nc } => {
                let pts = [(WL_F_UM, *nf), (WL_D_UM, *nd), (WL_C_UM, *nc)];
                if wavelength_um <= pts[0].0 {
                    pts[0].1
                } else if wavelength_um >= pts[2].0 {
                    pts[2].1
                } else {
                    let (x0, y0, x1, y1) = if wavelength_um <= pts[1].0 {
                        (pts[0].0, pts[0].1, pts[1].0, pts[1].1)
                    } else {
                        (pts[1].0, pts[1].1, pts[2].0, pts[2].1)
                    };
                    y0 + (y1 - y0) * (wavelength_um - x0) / (x1 - x0)
                }
            }
        })
    }

    /// Index at the d line.
    pub fn nd(&self) -> f64 {
        self.refractive_index(WL_D_UM).expect("d line inside validity range")
    }

    /// Abbe number V_d = (n_d - 1) / (n_F - n_C).
    pub fn abbe(&self) -> f64 {
        let nf = self.refractive_index(WL_F_UM).expect("F line inside validity range");
        let nc = self.refractive_index(WL_C_UM).expect("C line inside validity range");
        (self.nd() - 1.0) / (nf - nc)
    }
}

/// Ordered glass list; material indices elsewhere refer to positions here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub glasses: Vec<Glass>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.glasses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glasses.is_empty()
    }

    pub fn glass(&self, id: usize) -> Result<&Glass> {
        self.glasses.get(id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "material index {id} outside catalog of {} glasses",
                self.glasses.len()
            ))
        })
    }

    /// Ranks of each glass when sorted ascending by n_d (used for rendering
    /// colors). Ties keep catalog order.
    pub fn nd_ranks(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.glasses.len()).collect();
        order.sort_by(|&a, &b| {
            self.glasses[a]
                .nd()
                .partial_cmp(&self.glasses[b].nd())
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut rank = vec![0usize; self.glasses.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        rank
    }

    /// Parse the delimited text format: one glass per line,
    /// `name sellmeier B1 C1 B2 C2 B3 C3 lo hi` or
    /// `name constant nd nf nc lo hi`. `#` starts a comment.
    pub fn parse(text: &str, source_name: &str) -> Result<Catalog> {
        let mut glasses = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let fail = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                message,
            };
            if toks.len() < 2 {
                return Err(fail("expected `name model ...`".into()));
            }
            let name = toks[0].to_string();
            let nums: Vec<f64> = toks[2..]
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fail(format!("bad number: {e}")))?;
            let glass = match toks[1] {
                "sellmeier" => {
                    if nums.len() != 8 {
                        return Err(fail(format!(
                            "sellmeier takes 8 numbers (B1 C1 B2 C2 B3 C3 lo hi), got {}",
                            nums.len()
                        )));
                    }
                    Glass {
                        name,
                        model: DispersionModel::Sellmeier {
                            b: [nums[0], nums[2], nums[4]],
                            c: [nums[1], nums[3], nums[5]],
                        },
                        range_um: (nums[6], nums[7]),
                    }
                }
                "constant" => {
                    if nums.len() != 5 {
                        return Err(fail(format!(
                            "constant takes 5 numbers (nd nf nc lo hi), got {}",
                            nums.len()
                        )));
                    }
                    Glass {
                        name,
                        model: DispersionModel::Constant {
                            nd: nums[0],
                            nf: nums[1],
                            nc: nums[2],
                        },
                        range_um: (nums[3], nums[4]),
                    }
                }
                other => return Err(fail(format!("unknown model tag '{other}'"))),
            };
            if !(glass.range_um.0 > 0.0 && glass.range_um.1 > glass.range_um.0) {
                return Err(fail("validity range must satisfy 0 < lo < hi".into()));
            }
            glasses.push(glass);
        }
        if glasses.is_empty() {
            return Err(Error::Config(format!("catalog '{source_name}' has no glasses")));
        }
        Ok(Catalog { glasses })
    }

    pub fn load(path: &std::path::Path) -> Result<Catalog> {
        let text = std::fs::read_to_string(path)?;
        Catalog::parse(&text, &path.display().to_string())
    }

    /// Serialize to the delimited text format parsed by [`Catalog::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# glass catalog: name model coefficients range_lo range_hi (um)\n");
        for g in &self.glasses {
            match &g.model {
                DispersionModel::Sellmeier { b, c } => {
                    out.push_str(&format!(
                        "{} sellmeier {} {} {} {} {} {} {} {}\n",
                        g.name, b[0], c[0], b[1], c[1], b[2], c[2], g.range_um.0, g.range_um.1
                    ));
                }
                DispersionModel::Constant { nd, nf, nc } => {
                    out.push_str(&format!(
                        "{} constant {} {} {} {} {}\n",
                        g.name, nd, nf, nc, g.range_um.0, g.range_um.1
                    ));
                }
            }
        }
        out
    }
}

/// Resonance constants shared by all synthetic glasses (um^2).
const SYN_C: [f64; 3] = [0.00600069867, 0.0200179144, 103.560653];

/// (n_d, V_d) grid the bundled catalog is built on: crowns then flints.
const SYN_TARGETS: [(&str, f64, f64); 24] = [
    ("C44-95", 1.4440, 94.5),
    ("C49-70", 1.4875, 70.4),
    ("C50-82", 1.4970, 81.6),
    ("C52-64", 1.5168, 64.2),
    ("C52-59", 1.5224, 59.5),
    ("C53-49", 1.5317, 48.8),
    ("C57-56", 1.5688, 56.0),
    ("C59-61", 1.5891, 61.3),
    ("C60-65", 1.6030, 65.4),
    ("C62-60", 1.6200, 60.3),
    ("C65-58", 1.6516, 58.5),
    ("C68-55", 1.6779, 55.3),
    ("C69-55", 1.6910, 54.7),
    ("C71-54", 1.7130, 53.9),
    ("C74-45", 1.7440, 44.8),
    ("F57-41", 1.5750, 41.5),
    ("F61-37", 1.6128, 37.0),
    ("F62-36", 1.6200, 36.4),
    ("F65-34", 1.6477, 33.8),
    ("F67-32", 1.6727, 32.2),
    ("F72-30", 1.7174, 29.5),
    ("F76-28", 1.7552, 27.5),
    ("F78-26", 1.7847, 26.1),
    ("F85-24", 1.8467, 23.8),
];

/// Build the bundled synthetic catalog.
///
/// For each target (n_d, V_d) the two short-wavelength Sellmeier numerators
/// are solved from the d-line index and the F-C dispersion while B3 is pinned
/// at 1; the (n_F + n_C) factor in the dispersion equation is refined by
/// fixed-point iteration.
pub fn synthetic_catalog() -> Catalog {
    let f = |l: f64, c: f64| l * l / (l * l - c);
    let fd = [f(WL_D_UM, SYN_C[0]), f(WL_D_UM, SYN_C[1]), f(WL_D_UM, SYN_C[2])];
    let ff = [f(WL_F_UM, SYN_C[0]), f(WL_F_UM, SYN_C[1]), f(WL_F_UM, SYN_C[2])];
    let fc = [f(WL_C_UM, SYN_C[0]), f(WL_C_UM, SYN_C[1]), f(WL_C_UM, SYN_C[2])];
    let b3 = 1.0;

    let glasses = SYN_TARGETS
        .iter()
        .map(|&(name, nd, vd)| {
            let delta = (nd - 1.0) / vd; // n_F - n_C
            let mut sum = 2.0 * nd; // n_F + n_C, refined below
            let mut b = [0.0, 0.0, b3];
            for _ in 0..6 {
                let r1 = nd * nd - 1.0 - b3 * fd[2];
                let r2 = delta * sum - b3 * (ff[2] - fc[2]);
                let (a11, a12) = (fd[0], fd[1]);
                let (a21, a22) = (ff[0] - fc[0], ff[1] - fc[1]);
                let det = a11 * a22 - a12 * a21;
                b[0] = (r1 * a22 - r2 * a12) / det;
                b[1] = (a11 * r2 - a21 * r1) / det;
                let n_at = |fk: &[f64; 3]| {
                    (1.0 + b[0] * fk[0] + b[1] * fk[1] + b[2] * fk[2]).sqrt()
                };
                sum = n_at(&ff) + n_at(&fc);
            }
            Glass {
                name: name.to_string(),
                model: DispersionModel::Sellmeier { b, c: SYN_C },
                range_um: (0.35, 2.4),
            }
        })
        .collect();
    Catalog { glasses }
}
