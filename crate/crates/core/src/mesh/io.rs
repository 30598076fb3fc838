//! ASCII mesh format.
//!
//! ```text
//! FSIMESH 1
//! NODES n        followed by n lines  x y z
//! TETS m         followed by m lines  a b c d        (fluid tets, zero-based)
//! FACETS k       followed by k lines  i j l tag      (tag: wall | solid)
//! SOLIDTETS s    optional; s lines    a b c d        (solid tets, same node list)
//! ```
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryTag, Mesh, SolidMesh};
use crate::error::{FsiError, Result};
use crate::Vec3;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Some(t);
        }
        None
    }

    fn err(&self, msg: impl Into<String>) -> FsiError {
        FsiError::MeshFormat { line: self.line, msg: msg.into() }
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let l = self.next().ok_or_else(|| self.err(format!("missing {name} section")))?;
        self.count_of(l, name)
    }

    fn count_of(&self, l: &str, name: &str) -> Result<usize> {
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(self.err(format!("expected {name}, found `{l}`")));
        }
        it.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("bad {name} count")))
    }

    fn fields<T: std::str::FromStr>(&mut self, k: usize) -> Result<(Vec<T>, Vec<&'a str>)> {
        let l = self.next().ok_or_else(|| self.err("unexpected end of file"))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() < k {
            return Err(self.err(format!("expected {k} fields, found `{l}`")));
        }
        let vals = parts[..k]
            .iter()
            .map(|s| s.parse::<T>().map_err(|_| self.err(format!("cannot parse `{s}`"))))
            .collect::<Result<Vec<T>>>()?;
        Ok((vals, parts[k..].to_vec()))
    }
}

fn compact(n: usize, tets: &[[usize; 4]]) -> (Vec<usize>, Vec<usize>) {
    let mut map = vec![usize::MAX; n];
    let mut used = Vec::new();
    let mut touched = vec![false; n];
    for t in tets {
        for &i in t {
            touched[i] = true;
        }
    }
    for i in 0..n {
        if touched[i] {
            map[i] = used.len();
            used.push(i);
        }
    }
    (map, used)
}

pub fn parse_mesh(text: &str) -> Result<(Mesh, Option<SolidMesh>)> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    match lines.next() {
        Some(h) if h.split_whitespace().collect::<Vec<_>>() == ["FSIMESH", "1"] => {}
        _ => return Err(lines.err("missing `FSIMESH 1` header")),
    }
    let n = lines.section("NODES")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (v, _) = lines.fields::<f64>(3)?;
        nodes.push(Vec3::new(v[0], v[1], v[2]));
    }
    let read_tets = |lines: &mut Lines, m: usize| -> Result<Vec<[usize; 4]>> {
        (0..m)
            .map(|_| {
                let (v, _) = lines.fields::<usize>(4)?;
                if v.iter().any(|&i| i >= n) {
                    return Err(lines.err("node index out of range"));
                }
                Ok([v[0], v[1], v[2], v[3]])
            })
            .collect()
    };
    let m = lines.section("TETS")?;
    let tets = read_tets(&mut lines, m)?;
    let k = lines.section("FACETS")?;
    let mut facets = Vec::with_capacity(k);
    for _ in 0..k {
        let (v, rest) = lines.fields::<usize>(3)?;
        let tag = match rest.first().copied() {
            Some("wall") => BoundaryTag::OuterWall,
            Some("solid") => BoundaryTag::SolidInterface,
            other => return Err(lines.err(format!("bad facet tag {other:?}"))),
        };
        if v.iter().any(|&i| i >= n) {
            return Err(lines.err("node index out of range"));
        }
        facets.push(([v[0], v[1], v[2]], tag));
    }
    let solid_tets = match lines.next() {
        None => None,
        Some(l) => {
            let s = lines.count_of(l, "SOLIDTETS")?;
            Some(read_tets(&mut lines, s)?)
        }
    };

    let (fmap, fused) = compact(n, &tets);
    let f_nodes = fused.iter().map(|&i| nodes[i]).collect();
    let f_tets = tets.iter().map(|t| t.map(|i| fmap[i])).collect();
    let mut f_facets = Vec::with_capacity(facets.len());
    for (f, tag) in facets {
        if f.iter().any(|&i| fmap[i] == usize::MAX) {
            return Err(FsiError::MeshFormat { line: 0, msg: "facet uses a non-fluid node".into() });
        }
        f_facets.push((f.map(|i| fmap[i]), tag));
    }
    let mut mesh = Mesh::from_parts(f_nodes, f_tets, f_facets)?;
    let solid = match solid_tets {
        None => None,
        Some(st) => {
            let (smap, sused) = compact(n, &st);
            let s_nodes = sused.iter().map(|&i| nodes[i]).collect();
            let s_tets = st.iter().map(|t| t.map(|i| smap[i])).collect();
            let mut solid = SolidMesh::from_parts(s_nodes, s_tets)?;
            mesh.link_solid(&mut solid)?;
            Some(solid)
        }
    };
    Ok((mesh, solid))
}

pub fn load_mesh(path: &Path) -> Result<(Mesh, Option<SolidMesh>)> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn format_mesh(mesh: &Mesh, solid: Option<&SolidMesh>) -> String {
    let mut out = String::new();
    let mut solid_index = Vec::new();
    let mut extra = Vec::new();
    if let Some(s) = solid {
        for (i, x) in s.nodes.iter().enumerate() {
            match s.fluid_node[i] {
                Some(f) => solid_index.push(f),
                None => {
                    solid_index.push(mesh.nodes.len() + extra.len());
                    extra.push(*x);
                }
            }
        }
    }
    let _ = writeln!(out, "FSIMESH 1");
    let _ = writeln!(out, "NODES {}", mesh.nodes.len() + extra.len());
    for x in mesh.nodes.iter().chain(extra.iter()) {
        let _ = writeln!(out, "{:?} {:?} {:?}", x[0], x[1], x[2]);
    }
    let _ = writeln!(out, "TETS {}", mesh.tets.len());
    for t in &mesh.tets {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "FACETS {}", mesh.facets.len());
    for f in &mesh.facets {
        let tag = match f.tag {
            BoundaryTag::OuterWall => "wall",
            BoundaryTag::SolidInterface => "solid",
        };
        let _ = writeln!(out, "{} {} {} {}", f.nodes[0], f.nodes[1], f.nodes[2], tag);
    }
    if let Some(s) = solid {
        let _ = writeln!(out, "SOLIDTETS {}", s.tets.len());
        for t in &s.tets {
            let g = t.map(|i| solid_index[i]);
            let _ = writeln!(out, "{} {} {} {}", g[0], g[1], g[2], g[3]);
        }
    }
    out
}

pub fn save_mesh(path: &Path, mesh: &Mesh, solid: Option<&SolidMesh>) -> Result<()> {
    std::fs::write(path, format_mesh(mesh, solid))?;
    Ok(())
}
