//! Analytic scenes for the simulator.
//!
//! Text format, one primitive per line, whitespace-separated decimals, `#` starts a comment:
//!
//! ```text
//! plane px py pz nx ny nz ex ey
//! pole  bx by bz ax ay az r h
//! ```
//!
//! A plane is a rectangle centred on `p` with normal `n` and full side lengths
//! `ex` (along `u`) and `ey` (along `v`); `inf` gives an unbounded side. The
//! in-plane axes are `u = normalize(a x n)` and `v = n x u`, where `a` is +z
//! unless the normal is within ~25 degrees of vertical, in which case `a` is +y.
//! A pole is the lateral surface of a cylinder rising `h` from base point `b`
//! along unit axis `a` with radius `r`.

use std::fmt::Write as _;

use nalgebra::Vector3;

use super::PointCloudError;

const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
        extent_u: f64,
        extent_v: f64,
    },
    Pole {
        base: Vector3<f64>,
        axis: Vector3<f64>,
        radius: f64,
        height: f64,
    },
}

fn plane_axes(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if normal.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::y()
    };
    let u = a.cross(normal).normalize();
    let v = normal.cross(&u);
    (u, v)
}

impl Primitive {
    pub fn plane(point: Vector3<f64>, normal: Vector3<f64>, extent_u: f64, extent_v: f64) -> Self {
        Primitive::Plane {
            point,
            normal: normal.normalize(),
            extent_u,
            extent_v,
        }
    }

    pub fn infinite_plane(point: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self::plane(point, normal, f64::INFINITY, f64::INFINITY)
    }

    pub fn pole(base: Vector3<f64>, axis: Vector3<f64>, radius: f64, height: f64) -> Self {
        Primitive::Pole {
            base,
            axis: axis.normalize(),
            radius,
            height,
        }
    }

    /// Nearest positive ray parameter along a unit direction.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Plane {
                point,
                normal,
                extent_u,
                extent_v,
            } => {
                let denom = normal.dot(dir);
                if denom.abs() < PARALLEL_EPS {
                    return None;
                }
                let t = normal.dot(&(point - origin)) / denom;
                if t <= 0.0 {
                    return None;
                }
                if extent_u.is_finite() || extent_v.is_finite() {
                    let (u, v) = plane_axes(normal);
                    let d = origin + dir * t - point;
                    if d.dot(&u).abs() > 0.5 * extent_u || d.dot(&v).abs() > 0.5 * extent_v {
                        return None;
                    }
                }
                Some(t)
            }
            Primitive::Pole {
                base,
                axis,
                radius,
                height,
            } => {
                let w = origin - base;
                let d_perp = dir - axis * dir.dot(axis);
                let w_perp = w - axis * w.dot(axis);
                let a = d_perp.norm_squared();
                if a < PARALLEL_EPS {
                    return None;
                }
                let b = 2.0 * w_perp.dot(&d_perp);
                let c = w_perp.norm_squared() - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // numerically stable root pair
                let q = -0.5 * (b + b.signum() * sq);
                let (mut t0, mut t1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                [t0, t1].into_iter().find(|&t| {
                    let h = (w + dir * t).dot(axis);
                    t > 0.0 && (0.0..=*height).contains(&h)
                })
            }
        }
    }

    /// Euclidean distance from a point to this primitive's surface.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::Plane {
                point,
                normal,
                extent_u,
                extent_v,
            } => {
                let (u, v) = plane_axes(normal);
                let d = p - point;
                let du = (d.dot(&u).abs() - 0.5 * extent_u).max(0.0);
                let dv = (d.dot(&v).abs() - 0.5 * extent_v).max(0.0);
                let dn = d.dot(normal);
                (dn * dn + du * du + dv * dv).sqrt()
            }
            Primitive::Pole {
                base,
                axis,
                radius,
                height,
            } => {
                let w = p - base;
                let h = w.dot(axis);
                let radial = (w - axis * h).norm() - radius;
                let dh = if h < 0.0 {
                    -h
                } else if h > *height {
                    h - height
                } else {
                    0.0
                };
                (radial * radial + dh * dh).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

fn fmt_num(out: &mut String, v: f64) {
    if v == f64::INFINITY {
        out.push_str(" inf");
    } else {
        let _ = write!(out, " {}", v);
    }
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { primitives }
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, PointCloudError> {
        let mut primitives = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| PointCloudError::Scene {
                line: line_no,
                message,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let kind = fields.next().unwrap_or_default();
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| err(format!("invalid number `{f}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.iter().any(|v| v.is_nan()) {
                return Err(err("NaN is not allowed".into()));
            }
            let v3 = |i: usize| Vector3::new(values[i], values[i + 1], values[i + 2]);
            let prim = match kind {
                "plane" => {
                    if values.len() != 8 {
                        return Err(err(format!("plane needs 8 values, got {}", values.len())));
                    }
                    let n = v3(3);
                    if n.norm() < 1e-12 {
                        return Err(err("plane normal is zero".into()));
                    }
                    if values[6] <= 0.0 || values[7] <= 0.0 {
                        return Err(err("plane extents must be positive".into()));
                    }
                    Primitive::plane(v3(0), n, values[6], values[7])
                }
                "pole" => {
                    if values.len() != 8 {
                        return Err(err(format!("pole needs 8 values, got {}", values.len())));
                    }
                    let a = v3(3);
                    if a.norm() < 1e-12 {
                        return Err(err("pole axis is zero".into()));
                    }
                    if !(values[6] > 0.0 && values[7] > 0.0) {
                        return Err(err("pole radius and height must be positive".into()));
                    }
                    Primitive::pole(v3(0), a, values[6], values[7])
                }
                other => return Err(err(format!("unknown primitive `{other}`"))),
            };
            primitives.push(prim);
        }
        Ok(Self { primitives })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.primitives {
            let (kind, a, b, x, y) = match p {
                Primitive::Plane {
                    point,
                    normal,
                    extent_u,
                    extent_v,
                } => ("plane", point, normal, *extent_u, *extent_v),
                Primitive::Pole {
                    base,
                    axis,
                    radius,
                    height,
                } => ("pole", base, axis, *radius, *height),
            };
            out.push_str(kind);
            for v in a.iter().chain(b.iter()).copied().chain([x, y]) {
                fmt_num(&mut out, v);
            }
            out.push('\n');
        }
        out
    }

    /// Nearest hit over all primitives.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(origin, dir))
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed box room `[x0,x1] x [y0,y1] x [z0,z1]` made of six bounded planes.
    pub fn box_room(min: Vector3<f64>, max: Vector3<f64>) -> Vec<Primitive> {
        let c = (min + max) * 0.5;
        let s = max - min;
        vec![
            Primitive::plane(Vector3::new(min.x, c.y, c.z), Vector3::x(), s.y, s.z),
            Primitive::plane(Vector3::new(max.x, c.y, c.z), -Vector3::x(), s.y, s.z),
            Primitive::plane(Vector3::new(c.x, min.y, c.z), Vector3::y(), s.x, s.z),
            Primitive::plane(Vector3::new(c.x, max.y, c.z), -Vector3::y(), s.x, s.z),
            Primitive::plane(Vector3::new(c.x, c.y, min.z), Vector3::z(), s.x, s.y),
            Primitive::plane(Vector3::new(c.x, c.y, max.z), -Vector3::z(), s.x, s.y),
        ]
    }

    /// Solid axis-aligned box given by its centre and full sizes (outward-facing faces).
    pub fn solid_box(center: Vector3<f64>, size: Vector3<f64>) -> Vec<Primitive> {
        let h = size * 0.5;
        vec![
            Primitive::plane(center + Vector3::new(h.x, 0.0, 0.0), Vector3::x(), size.y, size.z),
            Primitive::plane(center - Vector3::new(h.x, 0.0, 0.0), -Vector3::x(), size.y, size.z),
            Primitive::plane(center + Vector3::new(0.0, h.y, 0.0), Vector3::y(), size.x, size.z),
            Primitive::plane(center - Vector3::new(0.0, h.y, 0.0), -Vector3::y(), size.x, size.z),
            Primitive::plane(center + Vector3::new(0.0, 0.0, h.z), Vector3::z(), size.x, size.y),
            Primitive::plane(center - Vector3::new(0.0, 0.0, h.z), -Vector3::z(), size.x, size.y),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_roundtrip() {
        let text = "# warehouse\nplane 0 0 0  0 0 2  inf inf\n\npole 1 2 0 0 0 1 0.1 3 # column\n";
        let scene = Scene::parse(text).unwrap();
        assert_eq!(scene.primitives.len(), 2);
        match &scene.primitives[0] {
            Primitive::Plane { normal, extent_u, .. } => {
                assert_eq!(*normal, Vector3::z());
                assert!(extent_u.is_infinite());
            }
            _ => panic!("expected plane"),
        }
        let again = Scene::parse(&scene.to_text()).unwrap();
        assert_eq!(again, scene);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = Scene::parse("plane 0 0 0 1 0 0 1 1\nplane 1 2 3\n").unwrap_err();
        assert!(matches!(err, PointCloudError::Scene { line: 2, .. }));
        let err = Scene::parse("\n\ncube 1 1 1\n").unwrap_err();
        assert!(matches!(err, PointCloudError::Scene { line: 3, .. }));
        let err = Scene::parse("pole 0 0 0 0 0 1 x 2\n").unwrap_err();
        assert!(matches!(err, PointCloudError::Scene { line: 1, .. }));
    }

    #[test]
    fn normals_are_normalized() {
        let scene = Scene::parse("plane 0 0 0 3 4 0 1 1\npole 0 0 0 0 0 7 1 1").unwrap();
        for p in &scene.primitives {
            let n = match p {
                Primitive::Plane { normal, .. } => normal,
                Primitive::Pole { axis, .. } => axis,
            };
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn plane_hit_and_extent() {
        let wall = Primitive::plane(Vector3::new(5.0, 0.0, 0.0), -Vector3::x(), 2.0, 2.0);
        let o = Vector3::zeros();
        assert_eq!(wall.intersect(&o, &Vector3::x()), Some(5.0));
        let steep = Vector3::new(1.0, 0.5, 0.0).normalize();
        assert_eq!(wall.intersect(&o, &steep), None);
        assert_eq!(wall.intersect(&o, &-Vector3::x()), None);
    }

    #[test]
    fn pole_hit_from_outside() {
        let pole = Primitive::pole(Vector3::new(4.0, 0.0, -1.0), Vector3::z(), 0.5, 2.0);
        let t = pole.intersect(&Vector3::zeros(), &Vector3::x()).unwrap();
        assert!((t - 3.5).abs() < 1e-12);
        // above the top
        let up = Vector3::new(1.0, 0.0, 1.0).normalize();
        assert_eq!(pole.intersect(&Vector3::zeros(), &up), None);
        let hit = Vector3::x() * t;
        assert!(pole.distance(&hit) < 1e-12);
    }
}
