//! PCA projection of embeddings and SVG scatter plots colored by label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub ids: Vec<String>,
    /// One row of `out_dims` coordinates per id.
    pub coords: Vec<Vec<f64>>,
    /// Principal directions, `out_dims` rows of length `dim`.
    pub components: Vec<Vec<f64>>,
    /// Every covariance eigenvalue, descending.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

impl Projection {
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn retained_variance(&self) -> f64 {
        self.eigenvalues[..self.components.len()].iter().sum()
    }

    pub fn discarded_variance(&self) -> f64 {
        self.eigenvalues[self.components.len()..].iter().sum()
    }
}

/// Mean-centers the vectors and projects them onto the top `out_dims`
/// eigenvectors of the sample covariance (divisor `n - 1`). Each component's
/// largest-magnitude loading is made positive.
pub fn pca_project(embeddings: &BTreeMap<String, Vec<f64>>, out_dims: usize) -> Result<Projection> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two points".into()));
    }
    let dim = embeddings.values().next().map(Vec::len).unwrap_or(0);
    if let Some((id, v)) = embeddings.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::Dimension {
            id: id.clone(),
            expected: dim,
            found: v.len(),
        });
    }
    if out_dims == 0 || out_dims > dim {
        return Err(Error::InvalidArgument(format!(
            "cannot project {dim}-dimensional data onto {out_dims} components"
        )));
    }

    let mut mean = vec![0.0; dim];
    for v in embeddings.values() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let rows: Vec<&Vec<f64>> = embeddings.values().collect();
    let centered = DMatrix::from_fn(n, dim, |r, c| rows[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let components: Vec<Vec<f64>> = order[..out_dims]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(k, _)| k)
                .unwrap_or(0);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let coords = (0..n)
        .map(|r| {
            components
                .iter()
                .map(|c| (0..dim).map(|k| centered[(r, k)] * c[k]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        ids: embeddings.keys().cloned().collect(),
        coords,
        components,
        eigenvalues,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub color_key: String,
}

/// Turns the first two projected coordinates into plot points.
pub fn projected_points<F>(projection: &Projection, mut color_key: F) -> Vec<ProjectedPoint>
where
    F: FnMut(&str) -> String,
{
    projection
        .ids
        .iter()
        .zip(&projection.coords)
        .map(|(id, c)| ProjectedPoint {
            id: id.clone(),
            x: c[0],
            y: c.get(1).copied().unwrap_or(0.0),
            color_key: color_key(id),
        })
        .collect()
}

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders a scatter plot with one circle per point and a legend. Colors are
/// assigned to the sorted distinct keys, cycling through [`PALETTE`].
pub fn render_scatter(points: &[ProjectedPoint], title: &str) -> Result<String> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::NonFinite("projected coordinates".into()));
    }
    let keys: BTreeSet<&str> = points.iter().map(|p| p.color_key.as_str()).collect();
    let color: BTreeMap<&str, &str> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (*k, PALETTE[i % PALETTE.len()]))
        .collect();

    let (width, height, margin, legend_w) = (800.0, 600.0, 40.0, 180.0);
    let plot_w = width - legend_w - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = span(&mut points.iter().map(|p| p.x));
    let (y0, y1) = span(&mut points.iter().map(|p| p.y));
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| margin + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{margin}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    )
    .unwrap();
    writeln!(
        svg,
        r##"<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#cccccc"/>"##
    )
    .unwrap();
    for p in points {
        writeln!(
            svg,
            r#"<circle class="marker" cx="{:.3}" cy="{:.3}" r="3.5" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
            sx(p.x),
            sy(p.y),
            color[p.color_key.as_str()],
            escape(&p.id)
        )
        .unwrap();
    }
    let lx = width - legend_w;
    for (i, key) in keys.iter().enumerate() {
        let ly = margin + 18.0 * i as f64;
        writeln!(
            svg,
            r#"<g class="legend-entry"><rect x="{lx}" y="{ly}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text></g>"#,
            color[key],
            lx + 16.0,
            ly + 9.0,
            escape(key)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_scatter(points: &[ProjectedPoint], title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = render_scatter(points, title)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
