//! Ellipse glyphs for real 2×2 matrices: the image of the unit circle
//! plus the right singular vectors scaled by the singular values.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Vector2, SVD};

use crate::error::{Error, Result};
use crate::linalg::CMat2;
use crate::migrate::ImageField;

pub type RMat2 = Matrix2<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipseGlyph {
    pub center: [f64; 2],
    /// Samples of `{scale · A v : |v| = 1}` around `center`.
    pub boundary: Vec<[f64; 2]>,
    /// `scale σ_i v_i`.
    pub arrows: [[f64; 2]; 2],
    /// Principal semi-axes `scale σ_i u_i`.
    pub axes: [[f64; 2]; 2],
    pub singular_values: [f64; 2],
    pub scale: f64,
}

fn svd2(a: &RMat2) -> (RMat2, [f64; 2], RMat2) {
    let svd = SVD::new(*a, true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let s = [svd.singular_values[0], svd.singular_values[1]];
    if s[0] >= s[1] {
        (u, s, vt.transpose())
    } else {
        let swap =
            |m: RMat2| RMat2::from_columns(&[m.column(1).into_owned(), m.column(0).into_owned()]);
        (swap(u), [s[1], s[0]], swap(vt.transpose()))
    }
}

impl EllipseGlyph {
    pub fn new(a: &RMat2, center: [f64; 2], scale: f64, samples: usize) -> Self {
        let (u, s, v) = svd2(a);
        let boundary = (0..=samples)
            .map(|i| {
                let t = TAU * i as f64 / samples as f64;
                let p = a * Vector2::new(t.cos(), t.sin()) * scale;
                [center[0] + p.x, center[1] + p.y]
            })
            .collect();
        let vec = |m: &RMat2, i: usize| [m[(0, i)] * s[i] * scale, m[(1, i)] * s[i] * scale];
        EllipseGlyph {
            center,
            boundary,
            arrows: [vec(&v, 0), vec(&v, 1)],
            axes: [vec(&u, 0), vec(&u, 1)],
            singular_values: s,
            scale,
        }
    }
}

/// Largest angle (radians) between a right singular vector and the line
/// of the matching left one. Zero for symmetric matrices.
pub fn axis_deviation(a: &RMat2) -> f64 {
    let (u, _, v) = svd2(a);
    (0..2)
        .map(|i| {
            let c = u.column(i).dot(&v.column(i)).abs().min(1.0);
            c.acos()
        })
        .fold(0.0, f64::max)
}

/// Glyph sets for the real and imaginary parts of a tensor field.
#[derive(Debug, Clone)]
pub struct GlyphSet {
    pub svg: String,
    pub csv: String,
    pub count: usize,
}

/// Plane axes of a slice grid (the two with more than one point, or the first two).
fn plane_axes(counts: [usize; 3]) -> (usize, usize) {
    let free: Vec<usize> = (0..3).filter(|&a| counts[a] > 1).collect();
    match free.as_slice() {
        [a, b] => (*a, *b),
        [a] => (*a, if *a == 2 { 0 } else { 2 }),
        _ => (0, 1),
    }
}

/// Places glyphs at local maxima of `‖α̃‖` above `threshold · max`.
/// Every glyph is scaled so its longest semi-axis is 0.45 grid cells.
pub fn emit_glyphs(field: &ImageField<CMat2>, threshold: f64) -> Result<GlyphSet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid("glyph threshold must lie in [0, 1]"));
    }
    let peak = field.max_norm();
    if field.grid.is_empty() || !(peak > 0.0) {
        return Err(Error::invalid("cannot draw glyphs for an empty field"));
    }
    let g = field.grid;
    let (ax, ay) = plane_axes(g.counts);
    let cell = [
        g.step[ax].max(f64::MIN_POSITIVE),
        g.step[ay].max(f64::MIN_POSITIVE),
    ];
    let (nx, ny) = (g.counts[ax], g.counts[ay]);
    let px = 24.0;
    let to_px = |p: [f64; 2]| {
        let x = (p[0] - g.origin[ax]) / cell[0] * px + px;
        let y = (ny as f64 + 1.0) * px - ((p[1] - g.origin[ay]) / cell[1] * px + px);
        (x, y)
    };
    let (w, h) = ((nx as f64 + 1.0) * px, (ny as f64 + 1.0) * px);
    let mut svg = String::new();
    let mut csv = String::from("part,i0,i1,i2,x,y,scale,sigma1,sigma2,arrow1_x,arrow1_y,arrow2_x,arrow2_y,axis1_x,axis1_y,axis2_x,axis2_y\n");
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    for n in 0..g.len() {
        let idx = g.unindex(n);
        let p = g.at(idx);
        let (x, y) = to_px([p[ax], p[ay]]);
        let level = (255.0 * (1.0 - field.norms()[n] / peak)).round() as u8;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{px}" height="{px}" fill="rgb({level},{level},{level})"/>"#,
            x - px / 2.0,
            y - px / 2.0
        );
    }
    let mut count = 0;
    for n in 0..g.len() {
        let idx = g.unindex(n);
        let v = field.norms()[n];
        if v < threshold * peak || !is_local_max(field, idx, ax, ay) {
            continue;
        }
        let p = g.at(idx);
        let a = field.values()[n];
        for (part, m, colour) in [
            ("real", a.map(|z| z.re), "black"),
            ("imag", a.map(|z| z.im), "magenta"),
        ] {
            let s1 = svd2(&m).1[0];
            if s1 == 0.0 {
                continue;
            }
            let scale = 0.45 / s1;
            // glyph coordinates in cells, converted to pixels
            let glyph = EllipseGlyph::new(&m, [0.0, 0.0], scale, 64);
            let (cx, cy) = to_px([p[ax], p[ay]]);
            let pts: Vec<String> = glyph
                .boundary
                .iter()
                .map(|q| format!("{:.2},{:.2}", cx + q[0] * px, cy - q[1] * px))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1"/>"#,
                pts.join(" ")
            );
            for arrow in glyph.arrows {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{cx:.2}" y1="{cy:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-dasharray="2,1"/>"#,
                    cx + arrow[0] * px,
                    cy - arrow[1] * px
                );
            }
            let _ = writeln!(
                csv,
                "{part},{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                idx[0], idx[1], idx[2], p[ax], p[ay], scale,
                glyph.singular_values[0], glyph.singular_values[1],
                glyph.arrows[0][0], glyph.arrows[0][1], glyph.arrows[1][0], glyph.arrows[1][1],
                glyph.axes[0][0], glyph.axes[0][1], glyph.axes[1][0], glyph.axes[1][1]
            );
            count += 1;
        }
    }
    svg.push_str("</svg>\n");
    Ok(GlyphSet { svg, csv, count })
}

fn is_local_max(field: &ImageField<CMat2>, idx: [usize; 3], ax: usize, ay: usize) -> bool {
    let g = field.grid;
    let here = field.norms()[g.index(idx)];
    for (da, db) in [
        (-1i64, 0i64),
        (1, 0),
        (0, -1),
        (0, 1),
        (-1, -1),
        (1, 1),
        (-1, 1),
        (1, -1),
    ] {
        let mut j = idx;
        let (a, b) = (idx[ax] as i64 + da, idx[ay] as i64 + db);
        if a < 0 || b < 0 || a >= g.counts[ax] as i64 || b >= g.counts[ay] as i64 {
            continue;
        }
        j[ax] = a as usize;
        j[ay] = b as usize;
        if field.norms()[g.index(j)] > here {
            return false;
        }
    }
    true
}
