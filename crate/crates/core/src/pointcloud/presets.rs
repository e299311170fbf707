//! Built-in simulation scenes.

use nalgebra::Vector3;

use super::{Primitive, Scene};

const FLOOR: f64 = -1.2;
const CEILING: f64 = 2.8;
/// Half-width of the warehouse aisle.
const AISLE: f64 = 4.0;

fn wall(a: (f64, f64), b: (f64, f64)) -> Primitive {
    let (pa, pb) = (Vector3::new(a.0, a.1, 0.0), Vector3::new(b.0, b.1, 0.0));
    let along = pb - pa;
    let normal = Vector3::new(-along.y, along.x, 0.0);
    let mid = (pa + pb) * 0.5 + Vector3::new(0.0, 0.0, 0.5 * (FLOOR + CEILING));
    Primitive::plane(mid, normal, along.norm(), CEILING - FLOOR)
}

fn column(x: f64, y: f64, sx: f64, sy: f64) -> Vec<Primitive> {
    Scene::solid_box(
        Vector3::new(x, y, 0.5 * (FLOOR + CEILING)),
        Vector3::new(sx, sy, CEILING - FLOOR),
    )
}

/// A 38 m aisle opening into a 20 x 20 m hall.
///
/// The sensor sits 1.2 m above the floor. The aisle spans x in [-6, 32],
/// y in [-4, 4] with pilasters every 4 m on alternating sides; the hall
/// spans x in [32, 52], y in [-10, 10] and holds free-standing columns and crates.
pub fn warehouse() -> Scene {
    let mut p = vec![
        Primitive::plane(Vector3::new(23.0, 0.0, FLOOR), Vector3::z(), 58.0, 20.0),
        Primitive::plane(Vector3::new(23.0, 0.0, CEILING), -Vector3::z(), 58.0, 20.0),
        wall((-6.0, -AISLE), (-6.0, AISLE)),
        wall((-6.0, AISLE), (32.0, AISLE)),
        wall((-6.0, -AISLE), (32.0, -AISLE)),
        wall((32.0, AISLE), (32.0, 10.0)),
        wall((32.0, -AISLE), (32.0, -10.0)),
        wall((32.0, 10.0), (52.0, 10.0)),
        wall((32.0, -10.0), (52.0, -10.0)),
        wall((52.0, -10.0), (52.0, 10.0)),
    ];
    let mut x = -4.0;
    let mut left = true;
    while x < 31.0 {
        let y = if left { AISLE - 0.5 } else { 0.5 - AISLE };
        p.extend(column(x, y, 1.6, 1.0));
        left = !left;
        x += 4.0;
    }
    for (cx, cy) in [(37.0, -5.0), (37.0, 5.0), (44.0, 0.0), (48.0, -6.0), (48.0, 6.0)] {
        p.extend(column(cx, cy, 1.6, 1.6));
    }
    for (cx, cy) in [(35.5, -8.0), (50.0, 7.5)] {
        p.extend(Scene::solid_box(Vector3::new(cx, cy, FLOOR + 0.6), Vector3::new(2.4, 1.6, 1.2)));
    }
    Scene::new(p)
}

/// A 24 x 20 m hall with columns and crates; the origin is near its centre.
pub fn hall() -> Scene {
    let mut p = vec![
        Primitive::plane(Vector3::new(0.0, 0.0, FLOOR), Vector3::z(), 24.0, 20.0),
        Primitive::plane(Vector3::new(0.0, 0.0, CEILING), -Vector3::z(), 24.0, 20.0),
        wall((-12.0, -10.0), (12.0, -10.0)),
        wall((12.0, -10.0), (12.0, 10.0)),
        wall((12.0, 10.0), (-12.0, 10.0)),
        wall((-12.0, 10.0), (-12.0, -10.0)),
    ];
    for (cx, cy) in [(-6.0, -5.0), (-6.0, 5.0), (6.0, -5.0), (6.0, 5.0), (0.0, 7.0), (-1.0, -4.0)] {
        p.extend(column(cx, cy, 1.6, 1.6));
    }
    for x in [-11.5, 11.5] {
        for y in [-6.0, 0.0, 6.0] {
            p.extend(column(x, y, 1.0, 1.6));
        }
    }
    for (cx, cy) in [(-9.0, -8.0), (9.0, 8.0), (3.0, -8.0)] {
        p.extend(Scene::solid_box(Vector3::new(cx, cy, FLOOR + 0.6), Vector3::new(2.4, 1.6, 1.2)));
    }
    Scene::new(p)
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Option<Scene> {
    match name {
        "warehouse" => Some(warehouse()),
        "hall" => Some(hall()),
        _ => None,
    }
}
