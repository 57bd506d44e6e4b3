//! Procedural template images for image-valued mixture priors.
//!
//! Every template is smooth, lies in `[0.1, 0.9]`, and is defined for any
//! size, so priors can be built without shipping image files.

use ndarray::Array1;
use spgd::ImageGeometry;

/// Names accepted after the `builtin:` prefix.
pub const BUILTIN_TEMPLATES: &[&str] = &[
    "horizontal",
    "vertical",
    "disk",
    "ring",
    "stripes",
    "checker",
    "blob",
    "diagonal",
];

/// Templates used when a config asks for `"templates": "builtin"`.
pub const DEFAULT_TEMPLATE_SET: &[&str] = &["horizontal", "vertical", "disk", "stripes", "checker", "blob"];

fn smoothstep(edge: f64, soft: f64, v: f64) -> f64 {
    1.0 / (1.0 + (-(v - edge) / soft).exp())
}

/// Renders the named template; `None` for unknown names.
pub fn builtin_template(name: &str, geometry: ImageGeometry) -> Option<Array1<f64>> {
    let (w, h) = (geometry.width as f64, geometry.height as f64);
    let span = w.min(h);
    let field: Box<dyn Fn(f64, f64) -> f64> = match name {
        "horizontal" => Box::new(move |_, c| c / (w - 1.0).max(1.0)),
        "vertical" => Box::new(move |r, _| r / (h - 1.0).max(1.0)),
        "diagonal" => Box::new(move |r, c| (r + c) / (w + h - 2.0).max(1.0)),
        "disk" => Box::new(move |r, c| {
            let d = ((r - (h - 1.0) / 2.0).powi(2) + (c - (w - 1.0) / 2.0).powi(2)).sqrt();
            1.0 - smoothstep(0.3 * span, 0.06 * span, d)
        }),
        "ring" => Box::new(move |r, c| {
            let d = ((r - (h - 1.0) / 2.0).powi(2) + (c - (w - 1.0) / 2.0).powi(2)).sqrt();
            (-((d - 0.3 * span) / (0.08 * span)).powi(2)).exp()
        }),
        "stripes" => Box::new(move |_, c| 0.5 + 0.5 * (std::f64::consts::TAU * c / (0.5 * w)).sin()),
        "checker" => Box::new(move |r, c| {
            let p = std::f64::consts::TAU / (0.5 * span);
            0.5 + 0.5 * (p * r).sin() * (p * c).sin()
        }),
        "blob" => Box::new(move |r, c| {
            let (cr, cc) = (0.3 * (h - 1.0), 0.65 * (w - 1.0));
            (-((r - cr).powi(2) + (c - cc).powi(2)) / (2.0 * (0.2 * span).powi(2))).exp()
        }),
        _ => return None,
    };
    let mut out = Array1::zeros(geometry.len());
    for r in 0..geometry.height {
        for c in 0..geometry.width {
            let v = 0.1 + 0.8 * field(r as f64, c as f64).clamp(0.0, 1.0);
            for ch in 0..geometry.channels {
                out[geometry.index(r, c, ch)] = v;
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_render_in_range() {
        let g = ImageGeometry::new(16, 12, 3);
        for name in BUILTIN_TEMPLATES {
            let t = builtin_template(name, g).unwrap();
            assert_eq!(t.len(), g.len());
            assert!(t.iter().all(|&v| (0.1..=0.9).contains(&v)), "{name}");
        }
        assert!(builtin_template("nope", g).is_none());
    }

    #[test]
    fn templates_are_distinct() {
        let g = ImageGeometry::gray(16, 16);
        let ts: Vec<_> = DEFAULT_TEMPLATE_SET
            .iter()
            .map(|n| builtin_template(n, g).unwrap())
            .collect();
        for i in 0..ts.len() {
            for j in (i + 1)..ts.len() {
                let d = &ts[i] - &ts[j];
                assert!(d.dot(&d).sqrt() > 1.0);
            }
        }
    }
}
