//! Conforming P1 triangulations of the unit square `[0,1]²` and the unit disk.
//!
//! A mesh is immutable once built. Besides the raw vertex/triangle arrays it
//! carries the data every other module needs: the unique edge list, lumped
//! vertex masses, and the boundary loop (counterclockwise, with outward unit
//! normals stored per boundary edge).

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    UnitSquare,
    UnitDisk,
}

impl Region {
    pub fn area(self) -> f64 {
        match self {
            Region::UnitSquare => 1.0,
            Region::UnitDisk => std::f64::consts::PI,
        }
    }

    pub fn centroid(self) -> Point {
        match self {
            Region::UnitSquare => [0.5, 0.5],
            Region::UnitDisk => [0.0, 0.0],
        }
    }

    /// Exact signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(self, p: Point) -> f64 {
        match self {
            Region::UnitSquare => {
                let qx = (p[0] - 0.5).abs() - 0.5;
                let qy = (p[1] - 0.5).abs() - 0.5;
                let outside = qx.max(0.0).hypot(qy.max(0.0));
                let inside = qx.max(qy).min(0.0);
                outside + inside
            }
            Region::UnitDisk => p[0].hypot(p[1]) - 1.0,
        }
    }

    // Where the boundary traversal starts.
    fn loop_anchor(self) -> Point {
        match self {
            Region::UnitSquare => [0.0, 0.0],
            Region::UnitDisk => [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Oriented so that the domain lies to the left.
    pub vertices: [usize; 2],
    /// Outward unit normal.
    pub normal: Point,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    region: Region,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    boundary_vertex_flags: Vec<bool>,

    edges: Vec<[usize; 2]>,
    triangle_areas: Vec<f64>,
    lumped_mass: Vec<f64>,
    boundary_vertices: Vec<usize>,
    boundary_position: Vec<Option<usize>>,
    boundary_arclength: Vec<f64>,
    perimeter: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Shirley–Chiu concentric map from `[-1,1]²` onto the unit disk. Squares of
/// constant `max(|a|,|b|)` go to circles, with equal angular spacing.
fn concentric_map(a: f64, b: f64) -> Point {
    if a == 0.0 && b == 0.0 {
        return [0.0, 0.0];
    }
    let (r, phi) = if a.abs() >= b.abs() { (a, FRAC_PI_4 * (b / a)) } else { (b, FRAC_PI_2 - FRAC_PI_4 * (a / b)) };
    [r * phi.cos(), r * phi.sin()]
}

impl TriangleMesh {
    /// Structured mesh of `region`. For the square, `resolution` cells per
    /// side with every cell split along its `(0,0)-(1,1)` diagonal; for the
    /// disk, a `2·resolution` grid on `[-1,1]²` pushed through the concentric
    /// map, diagonals pointing away from the centre.
    pub fn generate(region: Region, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidResolution(resolution));
        }
        match region {
            Region::UnitSquare => Self::square(resolution),
            Region::UnitDisk => Self::disk(resolution),
        }
    }

    fn square(n: usize) -> Result<Self> {
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // Exact 0 and 1 at the sides.
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            }
        }
        Self::from_parts(Region::UnitSquare, vertices, triangles)
    }

    fn disk(resolution: usize) -> Result<Self> {
        let n = 2 * resolution;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let coord = |k: usize| -1.0 + 2.0 * k as f64 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let (a, b) = (coord(i), coord(j));
                let mut p = concentric_map(a, b);
                if a.abs() == 1.0 || b.abs() == 1.0 {
                    let r = p[0].hypot(p[1]);
                    p = [p[0] / r, p[1] / r];
                }
                vertices.push(p);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                let centre = (coord(i) + coord(i + 1)) * (coord(j) + coord(j + 1));
                if centre > 0.0 {
                    triangles.push([p00, p10, p11]);
                    triangles.push([p00, p11, p01]);
                } else {
                    triangles.push([p00, p10, p01]);
                    triangles.push([p10, p11, p01]);
                }
            }
        }
        Self::from_parts(Region::UnitDisk, vertices, triangles)
    }

    /// Build a mesh from raw arrays, deriving edges, masses and the boundary
    /// loop, and validating the invariants.
    pub fn from_parts(region: Region, vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let mut triangle_areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive signed area {area:e}")));
            }
            triangle_areas.push(area);
        }

        // Directed half-edges; an undirected edge seen once is a boundary edge.
        let mut half_edges: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if half_edges.insert((a, b), 1).is_some() {
                    return Err(Error::InvalidMesh(format!("half-edge ({a},{b}) appears twice")));
                }
            }
        }
        let mut edges: Vec<[usize; 2]> = half_edges.keys().map(|&(a, b)| [a.min(b), a.max(b)]).collect();
        edges.sort_unstable();
        edges.dedup();

        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in half_edges.keys() {
            if !half_edges.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(Error::InvalidMesh(format!("boundary vertex {a} has two outgoing boundary edges")));
            }
        }
        if next.is_empty() {
            return Err(Error::InvalidMesh("mesh has no boundary".into()));
        }

        let anchor = region.loop_anchor();
        let start = *next
            .keys()
            .min_by(|&&p, &&q| dist(vertices[p], anchor).total_cmp(&dist(vertices[q], anchor)).then(p.cmp(&q)))
            .expect("non-empty boundary");

        let mut boundary_vertices = vec![start];
        let mut boundary_edges = Vec::with_capacity(next.len());
        let mut current = start;
        loop {
            let succ = next[&current];
            let (p, q) = (vertices[current], vertices[succ]);
            let length = dist(p, q);
            let t = [(q[0] - p[0]) / length, (q[1] - p[1]) / length];
            boundary_edges.push(BoundaryEdge { vertices: [current, succ], normal: [t[1], -t[0]], length });
            if succ == start {
                break;
            }
            if boundary_vertices.len() > next.len() {
                return Err(Error::InvalidMesh("boundary traversal does not close".into()));
            }
            boundary_vertices.push(succ);
            current = succ;
        }
        if boundary_edges.len() != next.len() {
            return Err(Error::InvalidMesh(format!(
                "boundary splits into several loops ({} of {} edges reached)",
                boundary_edges.len(),
                next.len()
            )));
        }

        let mut boundary_vertex_flags = vec![false; nv];
        let mut boundary_position = vec![None; nv];
        for (k, &v) in boundary_vertices.iter().enumerate() {
            boundary_vertex_flags[v] = true;
            boundary_position[v] = Some(k);
        }
        let perimeter: f64 = boundary_edges.iter().map(|e| e.length).sum();
        let mut boundary_arclength = Vec::with_capacity(boundary_vertices.len());
        let mut s = 0.0;
        for e in &boundary_edges {
            boundary_arclength.push(s / perimeter);
            s += e.length;
        }

        let mut lumped_mass = vec![0.0; nv];
        for (tri, &area) in triangles.iter().zip(&triangle_areas) {
            for &v in tri {
                lumped_mass[v] += area / 3.0;
            }
        }
        if let Some(v) = lumped_mass.iter().position(|&m| m == 0.0) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no triangle")));
        }

        Ok(Self {
            region,
            vertices,
            triangles,
            boundary_edges,
            boundary_vertex_flags,
            edges,
            triangle_areas,
            lumped_mass,
            boundary_vertices,
            boundary_position,
            boundary_arclength,
            perimeter,
        })
    }

    /// Uniform red refinement: every triangle is split into four through its
    /// edge midpoints. On the disk, boundary midpoints are projected back to
    /// the circle.
    pub fn refine(&self) -> Result<Self> {
        let nv = self.vertices.len();
        let edge_index: HashMap<[usize; 2], usize> = self.edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        let on_boundary: std::collections::HashSet<[usize; 2]> =
            self.boundary_edges.iter().map(|e| [e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])]).collect();
        let mut vertices = self.vertices.clone();
        vertices.reserve(self.edges.len());
        for e in &self.edges {
            let (p, q) = (self.vertices[e[0]], self.vertices[e[1]]);
            let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if self.region == Region::UnitDisk && on_boundary.contains(e) {
                let r = m[0].hypot(m[1]);
                m = [m[0] / r, m[1] / r];
            }
            vertices.push(m);
        }
        let mid = |a: usize, b: usize| nv + edge_index[&[a.min(b), a.max(b)]];
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        Self::from_parts(self.region, vertices, triangles)
    }

    /// Exact signed distance from `point` to the boundary of the region
    /// (analytic, no mesh search).
    pub fn boundary_distance(&self, point: Point) -> f64 {
        self.region.signed_distance(point)
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.triangle_areas
    }

    /// Unique undirected edges `[a, b]` with `a < b`, sorted.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.boundary_vertex_flags
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_vertex_flags[v]
    }

    /// Boundary vertices in counterclockwise traversal order. Boundary edge
    /// `k` runs from `boundary_vertices()[k]` to the next one.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn num_boundary_vertices(&self) -> usize {
        self.boundary_vertices.len()
    }

    /// Position of vertex `v` in the boundary traversal, if on the boundary.
    pub fn boundary_position(&self, v: usize) -> Option<usize> {
        self.boundary_position[v]
    }

    /// Normalised arclength `s ∈ [0, 1)` of each boundary vertex, in
    /// traversal order.
    pub fn boundary_arclength(&self) -> &[f64] {
        &self.boundary_arclength
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Vertex-quadrature mass `Σ_{T∋v} |T|/3`.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn area(&self) -> f64 {
        self.triangle_areas.iter().sum()
    }

    pub fn max_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                dist(p, q).max(dist(q, r)).max(dist(r, p))
            })
            .fold(0.0, f64::max)
    }

    /// Gradients of the three P1 basis functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let twice_area = 2.0 * self.triangle_areas[t];
        [
            [(q[1] - r[1]) / twice_area, (r[0] - q[0]) / twice_area],
            [(r[1] - p[1]) / twice_area, (p[0] - r[0]) / twice_area],
            [(p[1] - q[1]) / twice_area, (q[0] - p[0]) / twice_area],
        ]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.iter().map(|e| e.vertices).collect(),
            region: self.region,
        }
    }

    pub fn from_document(doc: &MeshDocument) -> Result<Self> {
        let mesh = Self::from_parts(doc.region, doc.vertices.clone(), doc.triangles.clone())?;
        let mut stored: Vec<[usize; 2]> = doc.boundary_edges.iter().map(|&[a, b]| [a.min(b), a.max(b)]).collect();
        let mut derived: Vec<[usize; 2]> =
            mesh.boundary_edges.iter().map(|e| [e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])]).collect();
        stored.sort_unstable();
        derived.sort_unstable();
        if stored != derived {
            return Err(Error::InvalidMesh("boundary_edges do not match the topological boundary".into()));
        }
        Ok(mesh)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeshDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// On-disk mesh layout; indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    pub region: Region,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts() {
        let m = TriangleMesh::generate(Region::UnitSquare, 2).unwrap();
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.triangles().len(), 8);
        for n in [3, 5, 8] {
            let m = TriangleMesh::generate(Region::UnitSquare, n).unwrap();
            assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.triangles().len(), 2 * n * n);
            assert_eq!(m.num_boundary_vertices(), 4 * n);
        }
    }

    #[test]
    fn rejects_low_resolution() {
        assert!(matches!(TriangleMesh::generate(Region::UnitSquare, 1), Err(Error::InvalidResolution(1))));
        assert!(TriangleMesh::generate(Region::UnitDisk, 0).is_err());
    }

    #[test]
    fn disk_boundary_on_circle() {
        let m = TriangleMesh::generate(Region::UnitDisk, 16).unwrap();
        for &v in m.boundary_vertices() {
            let p = m.vertex(v);
            assert!((p[0].hypot(p[1]) - 1.0).abs() <= 1e-12);
        }
        let r = m.refine().unwrap();
        for &v in r.boundary_vertices() {
            let p = r.vertex(v);
            assert!((p[0].hypot(p[1]) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn disk_area_at_resolution_32() {
        let m = TriangleMesh::generate(Region::UnitDisk, 32).unwrap();
        assert!((m.area() - std::f64::consts::PI).abs() < 1e-3, "area {}", m.area());
    }

    #[test]
    fn normals_unit_and_outward() {
        for region in [Region::UnitSquare, Region::UnitDisk] {
            let m = TriangleMesh::generate(region, 6).unwrap();
            let c = region.centroid();
            for e in m.boundary_edges() {
                let (p, q) = (m.vertex(e.vertices[0]), m.vertex(e.vertices[1]));
                let mid = [0.5 * (p[0] + q[0]) - c[0], 0.5 * (p[1] + q[1]) - c[1]];
                assert!((e.normal[0].hypot(e.normal[1]) - 1.0).abs() <= 1e-12);
                assert!(e.normal[0] * mid[0] + e.normal[1] * mid[1] > 0.0);
            }
        }
    }

    #[test]
    fn refine_quadruples_and_nests() {
        let m = TriangleMesh::generate(Region::UnitSquare, 2).unwrap();
        let r = m.refine().unwrap();
        assert_eq!(r.triangles().len(), 32);
        assert_eq!(&r.vertices()[..m.num_vertices()], m.vertices());
        assert!((r.max_diameter() - 0.5 * m.max_diameter()).abs() < 1e-14);
    }

    #[test]
    fn boundary_distance_examples() {
        let disk = TriangleMesh::generate(Region::UnitDisk, 4).unwrap();
        assert_eq!(disk.boundary_distance([2.0, 0.0]), 1.0);
        assert_eq!(disk.boundary_distance([0.0, 0.0]), -1.0);
        let sq = TriangleMesh::generate(Region::UnitSquare, 4).unwrap();
        assert!((sq.boundary_distance([0.5, 1.25]) - 0.25).abs() < 1e-15);
        assert_eq!(sq.boundary_distance([1.0, 0.3]), 0.0);
        assert!((sq.boundary_distance([0.5, 0.4]) + 0.4).abs() < 1e-15);
        assert!((sq.boundary_distance([2.0, 2.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn boundary_loop_starts_at_anchor() {
        let sq = TriangleMesh::generate(Region::UnitSquare, 4).unwrap();
        assert_eq!(sq.vertex(sq.boundary_vertices()[0]), [0.0, 0.0]);
        assert_eq!(sq.vertex(sq.boundary_vertices()[1]), [0.25, 0.0]);
        let disk = TriangleMesh::generate(Region::UnitDisk, 4).unwrap();
        let p = disk.vertex(disk.boundary_vertices()[0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_rejects_bad_boundary() {
        let m = TriangleMesh::generate(Region::UnitDisk, 3).unwrap();
        let back = TriangleMesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.boundary_vertices(), m.boundary_vertices());

        let mut doc = m.to_document();
        doc.boundary_edges.pop();
        assert!(TriangleMesh::from_document(&doc).is_err());
    }

    #[test]
    fn rejects_clockwise_triangle() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(TriangleMesh::from_parts(Region::UnitSquare, v, vec![[0, 2, 1]]).is_err());
    }
}
