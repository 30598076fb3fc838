//! Structured ball-in-box generator: Kuhn-split grid mirrored per octant.
//! The node cube shell just enclosing the sphere is projected radially onto
//! it; the remaining nodes are blended along the same rays so no cell folds.

use super::{signed_volume, BoundaryTag, Mesh, SolidMesh};
use crate::error::{FsiError, Result};
use crate::Vec3;
use std::f64::consts::FRAC_PI_4;

/// Kuhn paths through the unit cube: each permutation of axes gives one tet.
const KUHN: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

pub fn generate_ball_in_box(
    box_half_width: f64,
    ball_radius: f64,
    resolution: usize,
) -> Result<(Mesh, SolidMesh)> {
    let l = box_half_width;
    let r = ball_radius;
    if !(r > 0.0 && r < l) {
        return Err(FsiError::InvalidParameter(format!(
            "need 0 < ball_radius < box_half_width, got {r} and {l}"
        )));
    }
    if resolution < 8 {
        return Err(FsiError::InvalidParameter(format!("resolution {resolution} < 8")));
    }
    if resolution % 2 != 0 {
        return Err(FsiError::InvalidParameter(format!(
            "resolution {resolution} must be even (the grid is mirrored about the origin)"
        )));
    }
    let n = resolution;
    let h = 2.0 * l / n as f64;
    if (l - r) / h < 2.0 {
        return Err(FsiError::ResolutionTooCoarse(format!(
            "{:.3} cell layers between ball and wall, need 2",
            (l - r) / h
        )));
    }
    // Integer logical coordinates a = 2i - n; cube shells are max|a| = const.
    // The sphere takes the smallest node shell of the unmapped grid that
    // encloses it.
    let k_sphere = ((n as f64 * r / (2.0 * l)).floor() as usize + 1).min(n / 2 - 2);
    let shell = 2 * k_sphere;

    let np = n + 1;
    let id = |i: usize, j: usize, k: usize| (i * np + j) * np + k;
    let logical = |i: usize| 2 * i as i64 - n as i64;
    let m_b = shell as f64 / n as f64;
    let mut nodes = Vec::with_capacity(np * np * np);
    let mut layer = Vec::with_capacity(np * np * np);
    for i in 0..np {
        for j in 0..np {
            for k in 0..np {
                let a = [logical(i), logical(j), logical(k)];
                let ma = a.iter().map(|c| c.unsigned_abs() as usize).max().unwrap();
                nodes.push(map_node(a, ma, n, shell, m_b, r, l));
                layer.push(ma);
            }
        }
    }

    let mut fluid_tets = Vec::new();
    let mut solid_tets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let cell = [i, j, k];
                let flip: [bool; 3] = std::array::from_fn(|c| 2 * cell[c] + 1 < n);
                let corner = |p: [usize; 3]| {
                    let q: [usize; 3] = std::array::from_fn(|c| {
                        cell[c] + if flip[c] { 1 - p[c] } else { p[c] }
                    });
                    id(q[0], q[1], q[2])
                };
                // A cell lies outside the sphere shell iff its far corner does.
                let is_fluid = layer[corner([0, 0, 0])] > shell || layer[corner([1, 1, 1])] > shell;
                for path in KUHN {
                    let mut p = [0usize; 3];
                    let mut t = [corner(p), 0, 0, 0];
                    for (s, &axis) in path.iter().enumerate() {
                        p[axis] = 1;
                        t[s + 1] = corner(p);
                    }
                    if signed_volume(&std::array::from_fn(|a| nodes[t[a]])) < 0.0 {
                        t.swap(2, 3);
                    }
                    if is_fluid {
                        fluid_tets.push(t);
                    } else {
                        solid_tets.push(t);
                    }
                }
            }
        }
    }

    let floor = 1e-6 * h * h * h;
    for (e, t) in fluid_tets.iter().chain(solid_tets.iter()).enumerate() {
        let v = signed_volume(&std::array::from_fn(|a| nodes[t[a]]));
        if v <= floor {
            return Err(FsiError::DegenerateElement { element: e, volume: v });
        }
    }

    let (f_nodes, f_tets, _) = compact(&nodes, &fluid_tets);
    let (s_nodes, s_tets, _) = compact(&nodes, &solid_tets);

    let on_wall = |x: &Vec3| (0..3).any(|c| x[c].abs() == l);
    let mut facets = Vec::new();
    for (face, _) in super::exterior_faces(&f_tets) {
        let tag = if face.iter().all(|&i| on_wall(&f_nodes[i])) {
            BoundaryTag::OuterWall
        } else {
            BoundaryTag::SolidInterface
        };
        facets.push((face, tag));
    }
    facets.sort_by_key(|f| f.0);

    let mut mesh = Mesh::from_parts(f_nodes, f_tets, facets)?;
    mesh.cell_size = h;
    mesh.container = super::Aabb { min: Vec3::repeat(-l), max: Vec3::repeat(l) };
    let mut solid = SolidMesh::from_parts(s_nodes, s_tets)?;
    mesh.link_solid(&mut solid)?;
    Ok((mesh, solid))
}

/// Radial blend of the logical cube. Shell `ma == shell` lands on the sphere
/// with equiangular spacing, the outer shell on the box with uniform spacing.
/// Fluid shells stay round near the ball and square up towards the wall.
fn map_node(a: [i64; 3], ma: usize, n: usize, shell: usize, m_b: f64, r: f64, l: f64) -> Vec3 {
    if ma == 0 {
        return Vec3::zeros();
    }
    let m = ma as f64 / n as f64;
    // face coordinates: the dominant component is exactly ±1
    let cube = Vec3::from_fn(|c, _| a[c] as f64 / ma as f64);
    let warp = cube.map(|c| if c.abs() == 1.0 { c } else { (FRAC_PI_4 * c).tan() });
    if ma == shell {
        warp * (r / warp.norm())
    } else if ma > shell {
        let s = (m - m_b) / (1.0 - m_b);
        if s == 1.0 {
            return cube * l;
        }
        let d = warp * (1.0 - s) + cube * s;
        let norm = d.norm();
        // uniform radial spacing near the ball; the corner stretch is deferred
        let rho = r + s * (l - r) + s * s * (l * norm - l);
        d * (rho / norm)
    } else {
        let w = m / m_b;
        (cube * (1.0 - w) + warp * (w / warp.norm())) * (w * r)
    }
}

fn compact(nodes: &[Vec3], tets: &[[usize; 4]]) -> (Vec<Vec3>, Vec<[usize; 4]>, Vec<usize>) {
    let mut map = vec![usize::MAX; nodes.len()];
    let mut used = Vec::new();
    for t in tets {
        for &i in t {
            if map[i] == usize::MAX {
                map[i] = 0;
            }
        }
    }
    for (i, m) in map.iter_mut().enumerate() {
        if *m == 0 {
            *m = used.len();
            used.push(i);
        }
    }
    let new_nodes = used.iter().map(|&i| nodes[i]).collect();
    let new_tets = tets.iter().map(|t| t.map(|i| map[i])).collect();
    (new_nodes, new_tets, used)
}
