//! Extraction of the `u = 1/2` level set as oriented facets.
//!
//! The dual lattice joins neighbouring cell centers. In 1-D a facet is a
//! crossing point, in 2-D a segment (marching squares), in 3-D a triangle
//! (marching tetrahedra over a six-tetrahedron split of each dual cube).
//! Normals point out of the phase `{u > 1/2}`.

use std::io::Write as _;
use std::path::Path;

use crate::anisotropy::Anisotropy;
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};

pub const LEVEL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    /// Unwrapped vertex coordinates, ordered so the phase lies on the left
    /// (2-D) or the triangle normal points outward (3-D).
    pub vertices: Vec<[f64; 3]>,
    pub midpoint: [f64; 3],
    /// Outer unit normal.
    pub normal: [f64; 3],
    /// Length (2-D), area (3-D) or 1 (1-D).
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Interface {
    pub grid: Grid,
    pub facets: Vec<Facet>,
}

impl Interface {
    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    /// Total length or area.
    pub fn measure(&self) -> f64 {
        self.facets.iter().map(|f| f.weight).sum()
    }

    /// Area (2-D) or volume (3-D) enclosed by the facets, measured from
    /// `center` with periodic displacements. Valid for a phase that does not
    /// wrap around the torus.
    pub fn enclosed_volume(&self, center: &[f64]) -> f64 {
        let d = self.grid.dim;
        let mut acc = 0.0;
        for f in &self.facets {
            let x = self.grid.periodic_delta(&f.midpoint, center);
            acc += (0..d).map(|a| x[a] * f.normal[a]).sum::<f64>() * f.weight;
        }
        acc / d as f64
    }

    /// Radius of the ball with the enclosed volume.
    pub fn equivalent_radius(&self, center: &[f64]) -> f64 {
        let v = self.enclosed_volume(center).max(0.0);
        match self.grid.dim {
            1 => v / 2.0,
            2 => (v / std::f64::consts::PI).sqrt(),
            _ => (3.0 * v / (4.0 * std::f64::consts::PI)).cbrt(),
        }
    }

    /// `Σ σ(ν)·weight`.
    pub fn sharp_energy(&self, a: &Anisotropy) -> f64 {
        self.facets.iter().map(|f| a.value(&f.normal[..self.grid.dim]) * f.weight).sum()
    }

    /// Writes one row per facet: midpoint, normal, weight and optional
    /// per-facet velocity.
    pub fn write_csv(&self, path: &Path, velocity: Option<&[Option<f64>]>) -> Result<()> {
        let d = self.grid.dim;
        let axes = ["x", "y", "z"];
        let mut out = String::new();
        let mut header: Vec<String> = axes[..d].iter().map(|s| s.to_string()).collect();
        header.extend(axes[..d].iter().map(|s| format!("n{s}")));
        header.push("weight".into());
        header.push("v".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, f) in self.facets.iter().enumerate() {
            let mut row: Vec<String> = f.midpoint[..d].iter().map(|v| v.to_string()).collect();
            row.extend(f.normal[..d].iter().map(|v| v.to_string()));
            row.push(f.weight.to_string());
            row.push(match velocity.and_then(|v| v.get(i).copied().flatten()) {
                Some(v) => v.to_string(),
                None => String::new(),
            });
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Extracts the `u = 1/2` level set. A field that never crosses the level
/// gives an empty interface.
pub fn extract_interface(u: &PeriodicField) -> Interface {
    let grid = *u.grid();
    let facets = match grid.dim {
        1 => extract_1d(u),
        2 => extract_2d(u),
        _ => extract_3d(u),
    };
    Interface { grid, facets }
}

fn extract_1d(u: &PeriodicField) -> Vec<Facet> {
    let g = u.grid();
    let dx = g.dx();
    let data = u.data();
    let mut out = Vec::new();
    for i in 0..g.n {
        let j = g.next(i, 0);
        let (a, b) = (data[i] - LEVEL, data[j] - LEVEL);
        if (a >= 0.0) == (b >= 0.0) {
            continue;
        }
        let t = a / (a - b);
        let x = (i as f64 + 0.5 + t) * dx;
        let nx = if b < a { 1.0 } else { -1.0 };
        let p = [x, 0.0, 0.0];
        out.push(Facet {
            vertices: vec![p],
            midpoint: p,
            normal: [nx, 0.0, 0.0],
            weight: 1.0,
        });
    }
    out
}

/// Linear crossing on the edge from `(pa, a)` to `(pb, b)`.
fn crossing(pa: [f64; 3], a: f64, pb: [f64; 3], b: f64) -> [f64; 3] {
    let t = a / (a - b);
    [
        pa[0] + t * (pb[0] - pa[0]),
        pa[1] + t * (pb[1] - pa[1]),
        pa[2] + t * (pb[2] - pa[2]),
    ]
}

fn extract_2d(u: &PeriodicField) -> Vec<Facet> {
    let g = u.grid();
    let n = g.n;
    let dx = g.dx();
    let data = u.data();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let k00 = i * n + j;
            let k10 = g.next(k00, 0);
            let k01 = g.next(k00, 1);
            let k11 = g.next(k10, 1);
            // Corners counter-clockwise in the (axis 0, axis 1) plane.
            let v = [
                data[k00] - LEVEL,
                data[k10] - LEVEL,
                data[k11] - LEVEL,
                data[k01] - LEVEL,
            ];
            let inside = v.map(|x| x >= 0.0);
            let count = inside.iter().filter(|&&b| b).count();
            if count == 0 || count == 4 {
                continue;
            }
            let x0 = (i as f64 + 0.5) * dx;
            let y0 = (j as f64 + 0.5) * dx;
            let p = [
                [x0, y0, 0.0],
                [x0 + dx, y0, 0.0],
                [x0 + dx, y0 + dx, 0.0],
                [x0, y0 + dx, 0.0],
            ];
            // Crossing on edge e joins corner e to corner e+1.
            let cross = |e: usize| crossing(p[e], v[e], p[(e + 1) % 4], v[(e + 1) % 4]);
            let edges: Vec<usize> = (0..4).filter(|&e| inside[e] != inside[(e + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = if edges.len() == 2 {
                vec![(edges[0], edges[1])]
            } else {
                // Saddle: decide by the bilinear value at the cell center.
                let center = 0.25 * v.iter().sum::<f64>();
                if (center >= 0.0) == inside[0] {
                    // Corners 0 and 2 connected through the center.
                    vec![(0, 1), (2, 3)]
                } else {
                    vec![(3, 0), (1, 2)]
                }
            };
            for (ea, eb) in pairs {
                let a = cross(ea);
                let b = cross(eb);
                push_segment(&mut out, a, b, x0, y0, dx, &v);
            }
        }
    }
    out
}

/// Bilinear gradient of the corner values `v` at `x` within the dual cell
/// anchored at `(x0, y0)`.
fn bilinear_gradient(v: &[f64; 4], x0: f64, y0: f64, dx: f64, x: &[f64; 3]) -> [f64; 2] {
    let s = ((x[0] - x0) / dx).clamp(0.0, 1.0);
    let t = ((x[1] - y0) / dx).clamp(0.0, 1.0);
    // v[0]=(0,0), v[1]=(1,0), v[2]=(1,1), v[3]=(0,1)
    let gx = ((1.0 - t) * (v[1] - v[0]) + t * (v[2] - v[3])) / dx;
    let gy = ((1.0 - s) * (v[3] - v[0]) + s * (v[2] - v[1])) / dx;
    [gx, gy]
}

fn push_segment(out: &mut Vec<Facet>, a: [f64; 3], b: [f64; 3], x0: f64, y0: f64, dx: f64, v: &[f64; 4]) {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len == 0.0 {
        return;
    }
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.0];
    let grad = bilinear_gradient(v, x0, y0, dx, &mid);
    let gn = grad[0].hypot(grad[1]);
    // Geometric right-hand normal of a → b.
    let geo = [(b[1] - a[1]) / len, (a[0] - b[0]) / len];
    let normal = if gn > 0.0 { [-grad[0] / gn, -grad[1] / gn] } else { geo };
    let (mut a, mut b) = (a, b);
    if geo[0] * normal[0] + geo[1] * normal[1] < 0.0 {
        std::mem::swap(&mut a, &mut b);
    }
    out.push(Facet {
        vertices: vec![a, b],
        midpoint: mid,
        normal: [normal[0], normal[1], 0.0],
        weight: len,
    });
}

/// Kuhn split of the unit cube into six tetrahedra sharing the main
/// diagonal; corners are indexed by bit pattern `x | y<<1 | z<<2`.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

fn extract_3d(u: &PeriodicField) -> Vec<Facet> {
    let g = u.grid();
    let n = g.n;
    let dx = g.dx();
    let data = u.data();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let base = (i * n + j) * n + l;
                let mut v = [0.0; 8];
                let mut p = [[0.0; 3]; 8];
                for c in 0..8 {
                    let mut k = base;
                    for a in 0..3 {
                        if (c >> a) & 1 == 1 {
                            k = g.next(k, a);
                        }
                    }
                    v[c] = data[k] - LEVEL;
                    p[c] = [
                        (i as f64 + 0.5 + (c & 1) as f64) * dx,
                        (j as f64 + 0.5 + ((c >> 1) & 1) as f64) * dx,
                        (l as f64 + 0.5 + ((c >> 2) & 1) as f64) * dx,
                    ];
                }
                if v.iter().all(|&x| x >= 0.0) || v.iter().all(|&x| x < 0.0) {
                    continue;
                }
                for t in &TETS {
                    tetrahedron(&mut out, t.map(|c| p[c]), t.map(|c| v[c]));
                }
            }
        }
    }
    out
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn tetrahedron(out: &mut Vec<Facet>, p: [[f64; 3]; 4], v: [f64; 4]) {
    let inside: Vec<usize> = (0..4).filter(|&c| v[c] >= 0.0).collect();
    let outside: Vec<usize> = (0..4).filter(|&c| v[c] < 0.0).collect();
    if inside.is_empty() || outside.is_empty() {
        return;
    }
    // Gradient of the linear interpolant: solve M g = Δv with rows p_c − p_0.
    let m = [sub(p[1], p[0]), sub(p[2], p[0]), sub(p[3], p[0])];
    let rhs = [v[1] - v[0], v[2] - v[0], v[3] - v[0]];
    let det = dot3(m[0], cross3(m[1], m[2]));
    let c0 = cross3(m[1], m[2]);
    let c1 = cross3(m[2], m[0]);
    let c2 = cross3(m[0], m[1]);
    let grad = [
        (rhs[0] * c0[0] + rhs[1] * c1[0] + rhs[2] * c2[0]) / det,
        (rhs[0] * c0[1] + rhs[1] * c1[1] + rhs[2] * c2[1]) / det,
        (rhs[0] * c0[2] + rhs[1] * c1[2] + rhs[2] * c2[2]) / det,
    ];
    let gn = dot3(grad, grad).sqrt();
    if gn == 0.0 {
        return;
    }
    let normal = [-grad[0] / gn, -grad[1] / gn, -grad[2] / gn];
    let x = |a: usize, b: usize| crossing(p[a], v[a], p[b], v[b]);
    let tris: Vec<[[f64; 3]; 3]> = match (inside.len(), outside.len()) {
        (1, 3) => vec![[x(inside[0], outside[0]), x(inside[0], outside[1]), x(inside[0], outside[2])]],
        (3, 1) => vec![[x(inside[0], outside[0]), x(inside[1], outside[0]), x(inside[2], outside[0])]],
        _ => {
            let (i0, i1, o0, o1) = (inside[0], inside[1], outside[0], outside[1]);
            let q = [x(i0, o0), x(i0, o1), x(i1, o1), x(i1, o0)];
            vec![[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
        }
    };
    for mut t in tris {
        let nrm = cross3(sub(t[1], t[0]), sub(t[2], t[0]));
        let area2 = dot3(nrm, nrm).sqrt();
        if area2 == 0.0 {
            continue;
        }
        if dot3(nrm, normal) < 0.0 {
            t.swap(1, 2);
        }
        let mid = [
            (t[0][0] + t[1][0] + t[2][0]) / 3.0,
            (t[0][1] + t[1][1] + t[2][1]) / 3.0,
            (t[0][2] + t[1][2] + t[2][2]) / 3.0,
        ];
        out.push(Facet {
            vertices: t.to_vec(),
            midpoint: mid,
            normal,
            weight: 0.5 * area2,
        });
    }
}

/// Distance from `x` to the segment `a b`, using the periodic displacement
/// of `x` relative to `a`.
fn point_segment_distance(grid: &Grid, x: &[f64], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = grid.dim;
    let xa = grid.periodic_delta(x, a);
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ll: f64 = (0..d).map(|i| ab[i] * ab[i]).sum();
    let t = if ll > 0.0 {
        ((0..d).map(|i| xa[i] * ab[i]).sum::<f64>() / ll).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (0..d).map(|i| (xa[i] - t * ab[i]).powi(2)).sum::<f64>().sqrt()
}

/// Two-sided Hausdorff distance between a 2-D interface and a closed
/// polyline through `curve` (consecutive points joined, last to first).
pub fn hausdorff_to_polyline(iface: &Interface, curve: &[[f64; 2]]) -> f64 {
    let g = &iface.grid;
    if iface.is_empty() || curve.is_empty() {
        return if iface.is_empty() && curve.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let lifted: Vec<[f64; 3]> = curve.iter().map(|p| [p[0], p[1], 0.0]).collect();
    let m = lifted.len();
    let mut forward: f64 = 0.0;
    for f in &iface.facets {
        for v in f.vertices.iter().chain(std::iter::once(&f.midpoint)) {
            let dmin = (0..m)
                .map(|i| point_segment_distance(g, v, &lifted[i], &lifted[(i + 1) % m]))
                .fold(f64::INFINITY, f64::min);
            forward = forward.max(dmin);
        }
    }
    let mut backward: f64 = 0.0;
    for p in &lifted {
        let dmin = iface
            .facets
            .iter()
            .map(|f| match f.vertices.as_slice() {
                [a, b] => point_segment_distance(g, p, a, b),
                vs => vs.iter().map(|v| point_segment_distance(g, p, v, v)).fold(f64::INFINITY, f64::min),
            })
            .fold(f64::INFINITY, f64::min);
        backward = backward.max(dmin);
    }
    forward.max(backward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn disc(n: usize, r: f64, width: f64) -> PeriodicField {
        let g = Grid::unit(2, n).unwrap();
        PeriodicField::from_fn(g, |x| {
            let d = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
            0.5 * (1.0 + ((r - d) / width).tanh())
        })
    }

    #[test]
    fn constant_field_has_no_interface() {
        let g = Grid::unit(2, 16).unwrap();
        assert!(extract_interface(&PeriodicField::constant(g, 0.7)).is_empty());
        let g3 = Grid::unit(3, 6).unwrap();
        assert!(extract_interface(&PeriodicField::constant(g3, 0.2)).is_empty());
    }

    #[test]
    fn circle_length_area_and_orientation() {
        let u = disc(128, 0.3, 0.02);
        let iface = extract_interface(&u);
        assert!((iface.measure() - 2.0 * PI * 0.3).abs() < 0.02 * 2.0 * PI * 0.3);
        let area = iface.enclosed_volume(&[0.5, 0.5]);
        assert!((area - PI * 0.09).abs() < 1e-3, "{area}");
        for f in &iface.facets {
            let r = [f.midpoint[0] - 0.5, f.midpoint[1] - 0.5];
            let rn = r[0].hypot(r[1]);
            assert!((f.normal[0] * r[0] + f.normal[1] * r[1]) / rn > 0.99);
            assert!((f.normal[0].hypot(f.normal[1]) - 1.0).abs() < 1e-12);
            // Counter-clockwise: the phase is on the left of a → b.
            let (a, b) = (f.vertices[0], f.vertices[1]);
            let cross = r[0] * (b[1] - a[1]) - r[1] * (b[0] - a[0]);
            assert!(cross > 0.0);
        }
        let curve: Vec<[f64; 2]> = (0..2000)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 2000.0;
                [0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin()]
            })
            .collect();
        assert!(hausdorff_to_polyline(&iface, &curve) < 1.0 / 128.0);
    }

    #[test]
    fn interface_across_periodic_seam() {
        let g = Grid::unit(2, 32).unwrap();
        let u = PeriodicField::from_fn(g, |x| if (x[0] - 0.05).abs() < 0.2 || x[0] > 0.85 { 1.0 } else { 0.0 });
        let iface = extract_interface(&u);
        assert!((iface.measure() - 2.0).abs() < 1e-12);
        assert_eq!(iface.enclosed_volume(&[0.0, 0.5]).signum(), 1.0);
    }

    #[test]
    fn sphere_area_and_volume() {
        let n = 48;
        let g = Grid::unit(3, n).unwrap();
        let r = 0.3;
        let u = PeriodicField::from_fn(g, |x| {
            let d = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2)).sqrt();
            0.5 * (1.0 + ((r - d) / 0.05).tanh())
        });
        let iface = extract_interface(&u);
        let area = iface.measure();
        assert!((area - 4.0 * PI * r * r).abs() < 0.02 * 4.0 * PI * r * r, "{area}");
        assert!((iface.equivalent_radius(&[0.5, 0.5, 0.5]) - r).abs() < 2e-3);
        for f in &iface.facets {
            let t = &f.vertices;
            let nrm = cross3(sub(t[1], t[0]), sub(t[2], t[0]));
            assert!(dot3(nrm, f.normal) > 0.0);
        }
    }

    #[test]
    fn one_dimensional_crossings() {
        let g = Grid::unit(1, 64).unwrap();
        let u = PeriodicField::from_fn(g, |x| if (x[0] - 0.5).abs() < 0.25 { 0.9 } else { 0.1 });
        let iface = extract_interface(&u);
        assert_eq!(iface.len(), 2);
        let mut normals: Vec<f64> = iface.facets.iter().map(|f| f.normal[0]).collect();
        normals.sort_by(f64::total_cmp);
        assert_eq!(normals, vec![-1.0, 1.0]);
        assert!((iface.enclosed_volume(&[0.5]) - 0.5).abs() < 1.0 / 64.0);
    }
}
