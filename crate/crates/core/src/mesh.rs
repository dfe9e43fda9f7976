//! Two-region triangulations: a heart domain embedded in a torso domain.
//!
//! Region tags live on triangles. A vertex on the heart/torso interface is
//! shared by triangles of both regions and therefore belongs to both.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Heart,
    Torso,
}

impl Region {
    pub fn code(self) -> u32 {
        match self {
            Region::Heart => 1,
            Region::Torso => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Region::Heart),
            2 => Some(Region::Torso),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    TorsoOuter,
}

impl BoundaryTag {
    pub fn code(self) -> u32 {
        1
    }

    pub fn from_code(code: u32) -> Option<Self> {
        (code == 1).then_some(BoundaryTag::TorsoOuter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Validated two-region triangulation. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    boundary_edges: Vec<BoundaryEdge>,
    interface_edges: Vec<[usize; 2]>,
    heart_vertex: Vec<bool>,
    torso_vertex: Vec<bool>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Twice the signed area of the triangle (p0, p1, p2).
pub fn doubled_signed_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
}

impl TriMesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<Triangle>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.vertices.iter().find(|&&i| i >= nv) {
                return Err(MeshError::Invalid(format!(
                    "triangle {t} references vertex {bad} but only {nv} vertices exist"
                )));
            }
            let [a, b, c] = tri.vertices;
            let area2 = doubled_signed_area(vertices[a], vertices[b], vertices[c]);
            if !(area2 > 0.0) {
                return Err(MeshError::Invalid(format!(
                    "triangle {t} has non-positive signed area {}",
                    0.5 * area2
                )));
            }
        }

        let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.vertices;
            for (p, q) in [(a, b), (b, c), (c, a)] {
                edge_tris.entry(edge_key(p, q)).or_default().push(t);
            }
        }
        if let Some((e, ts)) = edge_tris.iter().find(|(_, ts)| ts.len() > 2) {
            return Err(MeshError::Invalid(format!(
                "edge {e:?} is shared by {} triangles",
                ts.len()
            )));
        }

        for (k, edge) in boundary_edges.iter().enumerate() {
            let [a, b] = edge.vertices;
            if a >= nv || b >= nv {
                return Err(MeshError::Invalid(format!(
                    "boundary edge {k} references a vertex out of range"
                )));
            }
            match edge_tris.get(&edge_key(a, b)) {
                Some(ts) if ts.len() == 1 => {}
                Some(ts) => {
                    return Err(MeshError::Invalid(format!(
                        "boundary edge {k} ({a}, {b}) belongs to {} triangles",
                        ts.len()
                    )))
                }
                None => {
                    return Err(MeshError::Invalid(format!(
                        "boundary edge {k} ({a}, {b}) is not an edge of any triangle"
                    )))
                }
            }
        }

        let mut interface_edges: Vec<[usize; 2]> = edge_tris
            .iter()
            .filter(|(_, ts)| {
                ts.len() == 2 && triangles[ts[0]].region != triangles[ts[1]].region
            })
            .map(|(&(a, b), _)| [a, b])
            .collect();
        interface_edges.sort_unstable();

        for region in [Region::Heart, Region::Torso] {
            check_edge_connected(&triangles, &edge_tris, region)?;
        }

        let mut heart_vertex = vec![false; nv];
        let mut torso_vertex = vec![false; nv];
        for tri in &triangles {
            let marks = match tri.region {
                Region::Heart => &mut heart_vertex,
                Region::Torso => &mut torso_vertex,
            };
            for &i in &tri.vertices {
                marks[i] = true;
            }
        }

        Ok(TriMesh {
            vertices,
            triangles,
            boundary_edges,
            interface_edges,
            heart_vertex,
            torso_vertex,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Edges with one heart and one torso triangle, sorted, each as `[min, max]`.
    pub fn interface_edges(&self) -> &[[usize; 2]] {
        &self.interface_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Whether vertex `i` touches at least one heart triangle.
    pub fn is_heart_vertex(&self, i: usize) -> bool {
        self.heart_vertex[i]
    }

    pub fn is_torso_vertex(&self, i: usize) -> bool {
        self.torso_vertex[i]
    }

    pub fn heart_mask(&self) -> &[bool] {
        &self.heart_vertex
    }

    pub fn heart_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| self.heart_vertex[i]).collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].vertices;
        0.5 * doubled_signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].region == region)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].vertices;
        let p = [self.vertices[a], self.vertices[b], self.vertices[c]];
        [(0, 1), (1, 2), (2, 0)]
            .iter()
            .map(|&(i, j)| distance(p[i], p[j]))
            .fold(0.0, f64::max)
    }

    /// Longest edge over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].vertices;
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }
}

pub(crate) fn distance(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn check_edge_connected(
    triangles: &[Triangle],
    edge_tris: &HashMap<(usize, usize), Vec<usize>>,
    region: Region,
) -> Result<(), MeshError> {
    let members: Vec<usize> = (0..triangles.len())
        .filter(|&t| triangles[t].region == region)
        .collect();
    if members.is_empty() {
        return Ok(());
    }
    let mut neighbours: HashMap<usize, Vec<usize>> = HashMap::new();
    for ts in edge_tris.values() {
        if let [a, b] = ts[..] {
            if triangles[a].region == region && triangles[b].region == region {
                neighbours.entry(a).or_default().push(b);
                neighbours.entry(b).or_default().push(a);
            }
        }
    }
    let mut seen = vec![false; triangles.len()];
    let mut stack = vec![members[0]];
    seen[members[0]] = true;
    let mut count = 0;
    while let Some(t) = stack.pop() {
        count += 1;
        for &n in neighbours.get(&t).map(Vec::as_slice).unwrap_or(&[]) {
            if !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    if count != members.len() {
        return Err(MeshError::Invalid(format!(
            "{region:?} triangles are not edge-connected ({count} of {} reachable)",
            members.len()
        )));
    }
    Ok(())
}

/// Concentric polar triangulation of a disk of radius `r_heart` inside a disk
/// of radius `r_torso`.
///
/// `n_rings` is the number of radial intervals inside the heart; the torso
/// annulus gets as many intervals as needed to keep the radial spacing close
/// to the heart's. Every ring carries `n_sectors` equally spaced vertices and
/// neighbouring quads alternate their diagonal. The ring at `r_heart` makes the
/// interface mesh-conforming.
pub fn generate_disk_in_disk(
    r_heart: f64,
    r_torso: f64,
    n_rings: usize,
    n_sectors: usize,
) -> Result<TriMesh, MeshError> {
    if !(r_heart > 0.0 && r_heart.is_finite()) {
        return Err(MeshError::InvalidParameters(format!(
            "r_heart must be positive, got {r_heart}"
        )));
    }
    if !(r_torso > r_heart && r_torso.is_finite()) {
        return Err(MeshError::InvalidParameters(format!(
            "r_torso ({r_torso}) must exceed r_heart ({r_heart})"
        )));
    }
    if n_rings < 2 {
        return Err(MeshError::InvalidParameters(format!(
            "n_rings must be at least 2, got {n_rings}"
        )));
    }
    if n_sectors < 8 {
        return Err(MeshError::InvalidParameters(format!(
            "n_sectors must be at least 8, got {n_sectors}"
        )));
    }

    let heart_step = r_heart / n_rings as f64;
    let torso_rings = (((r_torso - r_heart) / heart_step).round() as usize).max(1);
    let mut radii: Vec<f64> = (1..=n_rings)
        .map(|k| r_heart * k as f64 / n_rings as f64)
        .collect();
    radii[n_rings - 1] = r_heart;
    radii.extend((1..=torso_rings).map(|k| {
        if k == torso_rings {
            r_torso
        } else {
            r_heart + (r_torso - r_heart) * k as f64 / torso_rings as f64
        }
    }));

    let mut vertices = Vec::with_capacity(1 + radii.len() * n_sectors);
    vertices.push([0.0, 0.0]);
    for &r in &radii {
        for j in 0..n_sectors {
            let theta = 2.0 * PI * j as f64 / n_sectors as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let ring_vertex = |ring: usize, j: usize| 1 + ring * n_sectors + (j % n_sectors);

    let mut triangles = Vec::with_capacity(n_sectors * (2 * radii.len() - 1));
    let mut push = |tri: [usize; 3], region: Region, vertices: &[[f64; 2]]| {
        let [a, b, c] = tri;
        let oriented = if doubled_signed_area(vertices[a], vertices[b], vertices[c]) > 0.0 {
            [a, b, c]
        } else {
            [a, c, b]
        };
        triangles.push(Triangle {
            vertices: oriented,
            region,
        });
    };

    for j in 0..n_sectors {
        push([0, ring_vertex(0, j), ring_vertex(0, j + 1)], Region::Heart, &vertices);
    }
    for ring in 0..radii.len() - 1 {
        let region = if ring + 1 < n_rings {
            Region::Heart
        } else {
            Region::Torso
        };
        for j in 0..n_sectors {
            let a = ring_vertex(ring, j);
            let b = ring_vertex(ring, j + 1);
            let c = ring_vertex(ring + 1, j + 1);
            let d = ring_vertex(ring + 1, j);
            if (ring + j) % 2 == 0 {
                push([a, b, c], region, &vertices);
                push([a, c, d], region, &vertices);
            } else {
                push([a, b, d], region, &vertices);
                push([b, c, d], region, &vertices);
            }
        }
    }

    let outer = radii.len() - 1;
    let boundary_edges = (0..n_sectors)
        .map(|j| BoundaryEdge {
            vertices: [ring_vertex(outer, j), ring_vertex(outer, j + 1)],
            tag: BoundaryTag::TorsoOuter,
        })
        .collect();

    TriMesh::new(vertices, triangles, boundary_edges)
}

/// Serializes the mesh in the whitespace-separated ASCII format
/// (`nv nt nb`, then vertices, triangles and boundary edges).
pub fn write_mesh(mesh: &TriMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len()
    );
    for p in &mesh.vertices {
        let _ = writeln!(out, "{:.16e} {:.16e}", p[0], p[1]);
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.vertices;
        let _ = writeln!(out, "{a} {b} {c} {}", t.region.code());
    }
    for e in &mesh.boundary_edges {
        let _ = writeln!(out, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.code());
    }
    out
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, write_mesh(mesh))?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn parse_mesh(text: &str) -> Result<TriMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let err = |line: usize, message: String| MeshError::Parse { line, message };
    let fields = |line: usize, l: &str, n: usize| -> Result<Vec<String>, MeshError> {
        let parts: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
        if parts.len() != n {
            return Err(MeshError::Parse {
                line,
                message: format!("expected {n} fields, found {}", parts.len()),
            });
        }
        Ok(parts)
    };
    fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, MeshError> {
        s.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("cannot parse '{s}'"),
        })
    }

    let (line, header) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
    let h = fields(line, header, 3)?;
    let nv: usize = num(line, &h[0])?;
    let nt: usize = num(line, &h[1])?;
    let nb: usize = num(line, &h[2])?;

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file while reading {what}")))
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = next("vertices")?;
        let f = fields(line, l, 2)?;
        let x: f64 = num(line, &f[0])?;
        let y: f64 = num(line, &f[1])?;
        if !x.is_finite() || !y.is_finite() {
            return Err(err(line, "non-finite coordinate".into()));
        }
        vertices.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, l) = next("triangles")?;
        let f = fields(line, l, 4)?;
        let mut idx = [0usize; 3];
        for (k, slot) in idx.iter_mut().enumerate() {
            *slot = num(line, &f[k])?;
            if *slot >= nv {
                return Err(err(
                    line,
                    format!("vertex index {} out of range (vertex count {nv})", *slot),
                ));
            }
        }
        let code: u32 = num(line, &f[3])?;
        let region = Region::from_code(code)
            .ok_or_else(|| err(line, format!("unknown region tag {code}")))?;
        triangles.push(Triangle {
            vertices: idx,
            region,
        });
    }
    let mut boundary_edges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (line, l) = next("boundary edges")?;
        let f = fields(line, l, 3)?;
        let a: usize = num(line, &f[0])?;
        let b: usize = num(line, &f[1])?;
        for i in [a, b] {
            if i >= nv {
                return Err(err(
                    line,
                    format!("vertex index {i} out of range (vertex count {nv})"),
                ));
            }
        }
        let code: u32 = num(line, &f[2])?;
        let tag = BoundaryTag::from_code(code)
            .ok_or_else(|| err(line, format!("unknown boundary tag {code}")))?;
        boundary_edges.push(BoundaryEdge {
            vertices: [a, b],
            tag,
        });
    }
    if let Some((line, _)) = lines.next() {
        return Err(err(line, "trailing content after declared counts".into()));
    }
    TriMesh::new(vertices, triangles, boundary_edges)
}
