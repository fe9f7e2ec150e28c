//! Static SVG 1.1 cross-sections of archived designs: element outlines from
//! curvatures, thicknesses, and apertures; glass labels; fill colors by the
//! glass's rank in the catalog sorted by refractive index. Pure function of
//! the design and catalog, so output is deterministic.

use lensopt::glass::Catalog;
use lensopt::optics::{ImageDistance, LensDesign, Medium};

use crate::{CliError, CliResult};

/// Points along a spherical surface profile at axial position `z`, bottom to
/// top. The profile is the circle sag `c·y² / (1 + √(1 − c²y²))`; a flat
/// surface is a straight vertical edge. Apertures wider than the sphere
/// allows are clipped to the drawable cap.
pub fn surface_profile(z: f64, curvature: f64, semi_diameter: f64, samples: usize) -> Vec<(f64, f64)> {
    let a = drawable_semi_diameter(curvature, semi_diameter);
    let n = samples.max(2);
    (0..n)
        .map(|i| {
            let y = -a + 2.0 * a * (i as f64) / ((n - 1) as f64);
            (z + sag(curvature, y), y)
        })
        .collect()
}

fn sag(c: f64, y: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let w = 1.0 - c * c * y * y;
    c * y * y / (1.0 + w.max(0.0).sqrt())
}

fn drawable_semi_diameter(c: f64, a: f64) -> f64 {
    if c == 0.0 {
        a
    } else {
        a.min(0.999 / c.abs())
    }
}

/// Catalog-rank color: lowest refractive index renders blue, highest red.
pub fn rank_color(rank: usize, n: usize) -> String {
    let t = if n > 1 { rank as f64 / (n - 1) as f64 } else { 0.0 };
    let (r, g, b) = hsl_to_rgb(225.0 * (1.0 - t), 0.62, 0.60);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to8 = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to8(r1), to8(g1), to8(b1))
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

struct Canvas {
    body: String,
    min_x: f64,
    max_x: f64,
    max_y: f64,
}

impl Canvas {
    fn new(min_x: f64, max_x: f64, max_y: f64) -> Canvas {
        Canvas { body: String::new(), min_x, max_x, max_y }
    }

    /// Optical coordinates → SVG user units (y flipped so up is up).
    fn pt(&self, z: f64, y: f64) -> (f64, f64) {
        (z - self.min_x, self.max_y - y)
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, stroke_w: f64) {
        self.body.push_str("  <path d=\"");
        for (i, &(z, y)) in pts.iter().enumerate() {
            let (x, yy) = self.pt(z, y);
            self.body.push_str(if i == 0 { "M" } else { "L" });
            self.body.push_str(&format!("{},{} ", fmt(x), fmt(yy)));
        }
        self.body.push_str(&format!(
            "Z\" fill=\"{fill}\" stroke=\"#222222\" stroke-width=\"{}\"/>\n",
            fmt(stroke_w)
        ));
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), style: &str) {
        let (x1, y1) = self.pt(a.0, a.1);
        let (x2, y2) = self.pt(b.0, b.1);
        self.body.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {style}/>\n",
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2)
        ));
    }

    fn text(&mut self, z: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let (x, yy) = self.pt(z, y);
        self.body.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"{}\" text-anchor=\"{anchor}\" fill=\"#111111\">{}</text>\n",
            fmt(x),
            fmt(yy),
            fmt(size),
            xml_escape(content)
        ));
    }

    fn width(&self) -> f64 {
        self.max_x - self.min_x
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PROFILE_SAMPLES: usize = 33;

/// Render a cross-section. `image_distance` places the image-plane line; a
/// design with a pinned image plane supplies its own.
pub fn render_svg(
    design: &LensDesign,
    catalog: &Catalog,
    image_distance: Option<f64>,
    title: &str,
) -> CliResult<String> {
    if design.surfaces.is_empty() {
        return Err(CliError::config("nothing to draw: design has no surfaces"));
    }
    let n = design.surfaces.len();
    let mut z = vec![0.0f64; n];
    for i in 1..n {
        z[i] = z[i - 1] + design.surfaces[i - 1].thickness;
    }
    let image_z = match design.image_distance {
        ImageDistance::Fixed(v) => Some(z[n - 1] + v),
        ImageDistance::Solved => image_distance.map(|v| z[n - 1] + v),
    };

    let max_a = design.surfaces.iter().map(|s| s.semi_diameter).fold(0.0f64, f64::max);
    let min_x = z[0].min(0.0) - 0.06 * z[n - 1].max(1.0);
    let max_x = image_z.unwrap_or(z[n - 1]).max(z[n - 1]) + 0.06 * z[n - 1].max(1.0);
    let head = 0.42 * max_a; // label band above the tallest element
    let max_y = max_a + head;

    let mut canvas = Canvas::new(min_x, max_x, max_y);
    let font = (0.16 * max_a).max(1.2);
    let stroke = (0.012 * (max_x - min_x)).clamp(0.05, 0.4);
    let thin = format!("stroke=\"#555555\" stroke-width=\"{}\"", fmt(stroke * 0.6));

    // Optical axis.
    canvas.line(
        (min_x, 0.0),
        (max_x, 0.0),
        &format!("stroke=\"#888888\" stroke-width=\"{}\" stroke-dasharray=\"2,2\"", fmt(stroke * 0.5)),
    );

    // Elements: every glass gap drawn as front profile + back profile.
    let ranks = catalog.nd_ranks();
    for i in 0..n {
        let Medium::Glass(gid) = design.surfaces[i].medium else {
            continue;
        };
        if i + 1 >= n {
            continue;
        }
        let front = &design.surfaces[i];
        let back = &design.surfaces[i + 1];
        let mut outline = surface_profile(z[i], front.curvature, front.semi_diameter, PROFILE_SAMPLES);
        let mut back_pts =
            surface_profile(z[i + 1], back.curvature, back.semi_diameter, PROFILE_SAMPLES);
        back_pts.reverse();
        outline.extend(back_pts);
        let glass = catalog.glass(gid).map_err(CliError::from)?;
        let color = rank_color(ranks[gid], catalog.len());
        canvas.polygon(&outline, &color, stroke);
        let center = 0.5 * (z[i] + z[i + 1]);
        let top = front.semi_diameter.max(back.semi_diameter);
        canvas.text(center, top + 0.12 * max_a, font, "middle", &glass.name);
    }

    // Aperture stop: blade ticks above and below the opening.
    if let Some(stop) = design.surfaces.iter().position(|s| s.is_stop) {
        let a = design.surfaces[stop].semi_diameter;
        let reach = a + 0.25 * max_a;
        canvas.line((z[stop], a), (z[stop], reach), &thin);
        canvas.line((z[stop], -a), (z[stop], -reach), &thin);
    }

    // Image plane.
    if let Some(iz) = image_z {
        canvas.line((iz, -max_a), (iz, max_a), &thin);
    }

    canvas.text(min_x + 0.01 * canvas.width(), max_y - 0.02 * max_a, font, "start", title);

    let w = canvas.width();
    let h = 2.0 * max_y;
    let svg_w = 900.0;
    let svg_h = (svg_w * h / w).round();
    Ok(format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{svg_w}\" height=\"{svg_h}\" viewBox=\"0 0 {} {}\">\n{}</svg>\n",
        fmt(w),
        fmt(h),
        canvas.body
    ))
}
