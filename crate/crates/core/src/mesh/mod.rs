//! Reference geometry: the fluid domain F = O \ S̄ and the companion solid mesh of S.

pub mod generate;
pub mod io;
pub mod quadrature;

use std::collections::HashMap;

use crate::error::{FsiError, Result};
use crate::kinematics::{DeformationField, RigidState};
use crate::{Mat3, Vec3};

pub use generate::generate_ball_in_box;
pub use io::{load_mesh, save_mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    OuterWall,
    SolidInterface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Wall,
    Interface,
}

#[derive(Clone, Debug)]
pub struct BoundaryFacet {
    pub nodes: [usize; 3],
    pub tag: BoundaryTag,
    /// Index of the unique tet containing this facet.
    pub owner: usize,
    /// Unit normal pointing out of the owning tet.
    pub normal: Vec3,
    pub area: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Slab distance from `x` to the box boundary; negative outside.
    pub fn distance_to_boundary(&self, x: &Vec3) -> f64 {
        (0..3)
            .map(|c| (x[c] - self.min[c]).min(self.max[c] - x[c]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (self.max - self.min).product()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub facets: Vec<BoundaryFacet>,
    pub node_kind: Vec<NodeKind>,
    pub container: Aabb,
    /// Characteristic edge length.
    pub cell_size: f64,
    /// Solid-mesh index of each interface node.
    pub solid_node: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct SolidFacet {
    pub nodes: [usize; 3],
    pub owner: usize,
    /// Unit normal pointing out of the solid.
    pub normal: Vec3,
    pub area: f64,
}

#[derive(Clone, Debug)]
pub struct SolidMesh {
    pub nodes: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub surface: Vec<SolidFacet>,
    /// Fluid-mesh index of each surface node.
    pub fluid_node: Vec<Option<usize>>,
}

pub fn signed_volume(x: &[Vec3; 4]) -> f64 {
    (x[1] - x[0]).dot(&(x[2] - x[0]).cross(&(x[3] - x[0]))) / 6.0
}

/// Gradients of the barycentric coordinates of a non-degenerate tet.
pub fn barycentric_gradients(x: &[Vec3; 4]) -> [Vec3; 4] {
    let j = Mat3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
    let jinv = j.try_inverse().unwrap_or_else(Mat3::zeros);
    let g1 = jinv.row(0).transpose();
    let g2 = jinv.row(1).transpose();
    let g3 = jinv.row(2).transpose();
    [-(g1 + g2 + g3), g1, g2, g3]
}

fn corners<const K: usize>(nodes: &[Vec3], idx: &[usize; K]) -> [Vec3; K] {
    std::array::from_fn(|a| nodes[idx[a]])
}

fn sorted3(f: [usize; 3]) -> [usize; 3] {
    let mut s = f;
    s.sort_unstable();
    s
}

pub(crate) const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Map from sorted face to (tet, local face) for faces seen exactly once.
fn exterior_faces(tets: &[[usize; 4]]) -> HashMap<[usize; 3], (usize, usize)> {
    let mut seen: HashMap<[usize; 3], (usize, usize, u8)> = HashMap::with_capacity(tets.len() * 2);
    for (e, t) in tets.iter().enumerate() {
        for (lf, f) in TET_FACES.iter().enumerate() {
            let key = sorted3([t[f[0]], t[f[1]], t[f[2]]]);
            seen.entry(key).and_modify(|v| v.2 += 1).or_insert((e, lf, 1));
        }
    }
    seen.into_iter()
        .filter(|(_, v)| v.2 == 1)
        .map(|(k, v)| (k, (v.0, v.1)))
        .collect()
}

fn outward_facet(nodes: &[Vec3], tet: &[usize; 4], lf: usize, face: [usize; 3]) -> (Vec3, f64) {
    let [a, b, c] = corners(nodes, &face);
    let mut n = (b - a).cross(&(c - a));
    let area = 0.5 * n.norm();
    n /= 2.0 * area;
    let opposite = nodes[tet[lf]];
    if n.dot(&((a + b + c) / 3.0 - opposite)) < 0.0 {
        n = -n;
    }
    (n, area)
}

fn check_volumes(nodes: &[Vec3], tets: &[[usize; 4]], floor: f64) -> Result<()> {
    for (e, t) in tets.iter().enumerate() {
        let v = signed_volume(&corners(nodes, t));
        if !(v > floor) {
            return Err(FsiError::DegenerateElement { element: e, volume: v });
        }
    }
    Ok(())
}

fn mean_edge(nodes: &[Vec3], tets: &[[usize; 4]]) -> f64 {
    let mut s = 0.0;
    for t in tets {
        for a in 0..4 {
            for b in a + 1..4 {
                s += (nodes[t[a]] - nodes[t[b]]).norm();
            }
        }
    }
    s / (6.0 * tets.len().max(1) as f64)
}

impl Mesh {
    /// Builds a fluid mesh from raw arrays; `facets` must list every exterior face once.
    pub fn from_parts(
        nodes: Vec<Vec3>,
        tets: Vec<[usize; 4]>,
        facets: Vec<([usize; 3], BoundaryTag)>,
    ) -> Result<Mesh> {
        if tets.is_empty() {
            return Err(FsiError::InvalidParameter("fluid mesh has no tets".into()));
        }
        if let Some(bad) = tets.iter().flatten().find(|&&i| i >= nodes.len()) {
            return Err(FsiError::InvalidParameter(format!("tet references node {bad}")));
        }
        check_volumes(&nodes, &tets, 0.0)?;
        let ext = exterior_faces(&tets);
        if ext.len() != facets.len() {
            return Err(FsiError::InvalidParameter(format!(
                "{} exterior faces but {} tagged facets",
                ext.len(),
                facets.len()
            )));
        }
        let mut node_kind = vec![NodeKind::Interior; nodes.len()];
        let mut out = Vec::with_capacity(facets.len());
        for (f, tag) in facets {
            let &(owner, lf) = ext.get(&sorted3(f)).ok_or_else(|| {
                FsiError::InvalidParameter(format!("facet {f:?} is not an exterior face"))
            })?;
            let (normal, area) = outward_facet(&nodes, &tets[owner], lf, f);
            let kind = match tag {
                BoundaryTag::OuterWall => NodeKind::Wall,
                BoundaryTag::SolidInterface => NodeKind::Interface,
            };
            for &i in &f {
                if node_kind[i] != NodeKind::Interior && node_kind[i] != kind {
                    return Err(FsiError::InvalidParameter(format!(
                        "node {i} lies on both the wall and the solid interface"
                    )));
                }
                node_kind[i] = kind;
            }
            out.push(BoundaryFacet { nodes: f, tag, owner, normal, area });
        }
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for x in &nodes {
            min = min.inf(x);
            max = max.sup(x);
        }
        let cell_size = mean_edge(&nodes, &tets);
        let n = nodes.len();
        Ok(Mesh {
            nodes,
            tets,
            facets: out,
            node_kind,
            container: Aabb { min, max },
            cell_size,
            solid_node: vec![None; n],
        })
    }

    pub fn tet_corners(&self, e: usize) -> [Vec3; 4] {
        corners(&self.nodes, &self.tets[e])
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|e| signed_volume(&self.tet_corners(e))).sum()
    }

    pub fn facets_with(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryFacet> {
        self.facets.iter().filter(move |f| f.tag == tag)
    }

    pub fn interface_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.node_kind[i] == NodeKind::Interface)
    }

    pub fn interface_area(&self) -> f64 {
        self.facets_with(BoundaryTag::SolidInterface).map(|f| f.area).sum()
    }

    /// Local index of `node` within tet `e`.
    pub fn local_index(&self, e: usize, node: usize) -> Option<usize> {
        self.tets[e].iter().position(|&i| i == node)
    }

    /// Links interface nodes to the solid mesh by bitwise coordinate equality.
    pub fn link_solid(&mut self, solid: &mut SolidMesh) -> Result<()> {
        let key = |x: &Vec3| [x[0].to_bits(), x[1].to_bits(), x[2].to_bits()];
        let by_coord: HashMap<[u64; 3], usize> =
            solid.nodes.iter().enumerate().map(|(i, x)| (key(x), i)).collect();
        solid.fluid_node = vec![None; solid.nodes.len()];
        self.solid_node = vec![None; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if self.node_kind[i] != NodeKind::Interface {
                continue;
            }
            let s = *by_coord.get(&key(&self.nodes[i])).ok_or_else(|| {
                FsiError::InvalidParameter(format!("interface node {i} has no solid counterpart"))
            })?;
            self.solid_node[i] = Some(s);
            solid.fluid_node[s] = Some(i);
        }
        for f in &solid.surface {
            if f.nodes.iter().any(|&s| solid.fluid_node[s].is_none()) {
                return Err(FsiError::InvalidParameter(
                    "solid surface node missing from the fluid interface".into(),
                ));
            }
        }
        Ok(())
    }
}

impl SolidMesh {
    pub fn from_parts(nodes: Vec<Vec3>, tets: Vec<[usize; 4]>) -> Result<SolidMesh> {
        if tets.is_empty() {
            return Err(FsiError::InvalidParameter("solid mesh has no tets".into()));
        }
        check_volumes(&nodes, &tets, 0.0)?;
        let mut surface: Vec<SolidFacet> = exterior_faces(&tets)
            .into_iter()
            .map(|(f, (owner, lf))| {
                let (normal, area) = outward_facet(&nodes, &tets[owner], lf, f);
                SolidFacet { nodes: f, owner, normal, area }
            })
            .collect();
        surface.sort_by_key(|f| f.nodes);
        let n = nodes.len();
        Ok(SolidMesh { nodes, tets, surface, fluid_node: vec![None; n] })
    }

    pub fn tet_corners(&self, e: usize) -> [Vec3; 4] {
        corners(&self.nodes, &self.tets[e])
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|e| signed_volume(&self.tet_corners(e))).sum()
    }
}

/// Smallest distance from the moving solid surface to the container wall.
pub fn solid_wall_distance(
    mesh: &Mesh,
    solid: &SolidMesh,
    rigid: &RigidState,
    deform: &DeformationField,
    t: f64,
) -> Result<f64> {
    let sample = deform.sample(solid, t)?;
    Ok(solid
        .surface
        .iter()
        .flat_map(|f| f.nodes)
        .map(|s| mesh.container.distance_to_boundary(&(rigid.h + rigid.r * sample.x[s])))
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_gradients_reproduce_linears() {
        let x = [
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(1.0, 0.2, 0.0),
            Vec3::new(0.0, 1.1, 0.3),
            Vec3::new(0.2, 0.1, 0.9),
        ];
        let g = barycentric_gradients(&x);
        for a in 0..4 {
            for b in 0..4 {
                // λ_a(x_b) - λ_a(x_0) = ∇λ_a · (x_b - x_0)
                let expect = if a == b { 1.0 } else { 0.0 } - if a == 0 { 1.0 } else { 0.0 };
                assert!((g[a].dot(&(x[b] - x[0])) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn aabb_distance_is_slab_distance() {
        let b = Aabb { min: Vec3::repeat(-1.0), max: Vec3::repeat(1.0) };
        assert!((b.distance_to_boundary(&Vec3::new(0.8, 0.0, -0.1)) - 0.2).abs() < 1e-15);
        assert!(b.distance_to_boundary(&Vec3::new(1.5, 0.0, 0.0)) < 0.0);
    }
}
