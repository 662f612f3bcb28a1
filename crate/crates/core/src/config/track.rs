//! Geometry of command-value tracks: curve extraction and a polyline
//! self-intersection test.

use super::value::Command;

/// Rotation (degrees) of every curve in the track. A curve is an `L`/`R`
/// command; it turns by `units × dy`, where `dy` is the value of the most
/// recent `DY` command (0 if none precedes it).
pub fn curve_angles(pairs: &[(Command, f64)]) -> Vec<f64> {
    let mut dy = 0.0;
    let mut out = Vec::new();
    for &(c, v) in pairs {
        match c {
            Command::DY => dy = v,
            Command::L | Command::R => out.push(v * dy),
            Command::S => {}
        }
    }
    out
}

/// Centreline polyline: unit-length road pieces, starting at the origin
/// heading along +y.
pub fn centreline(pairs: &[(Command, f64)]) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    let (mut x, mut y) = (0.0f64, 0.0f64);
    let mut heading = 90.0f64;
    let mut dy = 0.0;
    for &(c, v) in pairs {
        let units = v.max(0.0).round() as usize;
        match c {
            Command::DY => dy = v,
            Command::S | Command::L | Command::R => {
                for _ in 0..units {
                    match c {
                        Command::L => heading += dy,
                        Command::R => heading -= dy,
                        _ => {}
                    }
                    let rad = heading.to_radians();
                    x += rad.cos();
                    y += rad.sin();
                    pts.push((x, y));
                }
            }
        }
    }
    pts
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) - 1e-12
        && p.0 <= a.0.max(b.0) + 1e-12
        && p.1 >= a.1.min(b.1) - 1e-12
        && p.1 <= a.1.max(b.1) + 1e-12
}

fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    const EPS: f64 = 1e-12;
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
    {
        return true;
    }
    (d1.abs() <= EPS && on_segment(q1, q2, p1))
        || (d2.abs() <= EPS && on_segment(q1, q2, p2))
        || (d3.abs() <= EPS && on_segment(p1, p2, q1))
        || (d4.abs() <= EPS && on_segment(p1, p2, q2))
}

/// True when two non-adjacent pieces of the centreline touch or cross.
pub fn self_intersects(pairs: &[(Command, f64)]) -> bool {
    let pts = centreline(pairs);
    let n = pts.len();
    if n < 4 {
        return false;
    }
    for i in 0..n - 1 {
        for j in i + 2..n - 1 {
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return true;
            }
        }
    }
    false
}
