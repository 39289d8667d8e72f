//! Triangulation of quarter domains, uniform 1-to-4 refinement and point location.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use crate::error::{Error, Result};
use crate::geometry::{dist, Domain, Point, SpecimenGeometry};

/// Boundary segment labels of the quarter domain.
///
/// `B1` carries the end traction, `B2`/`B3` are free (`B3` is the notch), `B4` is the
/// symmetry line `y = 0` and `B5` the symmetry line `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    B1,
    B2,
    B3,
    B4,
    B5,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::B1 => "B1",
            BoundaryTag::B2 => "B2",
            BoundaryTag::B3 => "B3",
            BoundaryTag::B4 => "B4",
            BoundaryTag::B5 => "B5",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// Index of the domain piece the edge discretises.
    pub piece: usize,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub refinement_level: usize,
    pub domain: Domain,
}

/// Size of elements next to an arc relative to the target edge length.
pub const NOTCH_SIZE_RATIO: f64 = 0.25;
/// Growth of the size field with distance from the arcs (length per unit distance).
const SIZE_GRADING: f64 = 0.4;
const MIN_ANGLE_DEG: f64 = 25.0;

fn size_at(domain: &Domain, h: f64, p: Point) -> f64 {
    match domain.distance_to_arcs(p) {
        Some(d) => (NOTCH_SIZE_RATIO * h + SIZE_GRADING * d).min(h),
        None => h,
    }
}

/// Triangulates the quarter domain of a specimen with target edge length `h`.
pub fn triangulate(geom: &SpecimenGeometry, h: f64) -> Result<TriMesh> {
    triangulate_domain(&geom.domain(), h)
}

/// Graded constrained-Delaunay triangulation of a tagged boundary loop.
///
/// Boundary nodes are spaced by the size field (`h/4` on arcs, growing to `h`); the
/// interior is filled by Delaunay refinement with a minimum-angle bound and the area
/// cap of an equilateral triangle of side `h`.
pub fn triangulate_domain(domain: &Domain, h: f64) -> Result<TriMesh> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Mesh(format!("target edge length must be positive, got {h}")));
    }
    if let Some(r) = domain.min_radius() {
        if h > r {
            return Err(Error::MeshTooCoarse { h, radius: r });
        }
    }
    domain.check_closed()?;

    // Boundary nodes, shared at piece junctions.
    let mut nodes: Vec<Point> = Vec::new();
    let mut piece_ranges = Vec::with_capacity(domain.pieces.len());
    for piece in &domain.pieces {
        let ts = sample_piece(domain, &piece.curve, h);
        let first = nodes.len();
        // skip the end point: it is the start of the next piece
        for &t in &ts[..ts.len() - 1] {
            nodes.push(piece.curve.point(t));
        }
        piece_ranges.push((first, nodes.len()));
    }
    let n_boundary = nodes.len();
    let edges: Vec<[usize; 2]> = (0..n_boundary).map(|i| [i, (i + 1) % n_boundary]).collect();

    let vertices: Vec<Point2<f64>> = nodes.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(vertices, edges)
        .map_err(|e| Error::Mesh(format!("constrained triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != n_boundary {
        return Err(Error::Mesh("duplicate boundary nodes".into()));
    }
    let max_area = 3f64.sqrt() / 4.0 * h * h;
    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .keep_constraint_edges()
        .with_max_allowed_area(max_area)
        .with_angle_limit(AngleLimit::from_deg(MIN_ANGLE_DEG))
        .with_max_additional_vertices(2_000_000);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(Error::Mesh("Delaunay refinement did not complete".into()));
    }

    let positions: Vec<Point> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if result.excluded_faces.contains(&face.fix()) {
            continue;
        }
        let v = face.vertices();
        let mut tri = [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()];
        if signed_area(&positions, tri) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }

    // Drop any vertex not referenced by an inner triangle and renumber.
    let mut remap = vec![usize::MAX; positions.len()];
    let mut used: Vec<usize> = triangles.iter().flatten().copied().collect();
    used.extend(0..n_boundary);
    used.sort_unstable();
    used.dedup();
    let mut final_nodes = Vec::with_capacity(used.len());
    for &old in &used {
        remap[old] = final_nodes.len();
        final_nodes.push(positions[old]);
    }
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            *v = remap[*v];
        }
    }

    let mut boundary_edges = Vec::with_capacity(n_boundary);
    for (pi, &(first, end)) in piece_ranges.iter().enumerate() {
        for i in first..end {
            let j = if i + 1 == n_boundary { 0 } else { i + 1 };
            boundary_edges.push(BoundaryEdge {
                nodes: [remap[i], remap[j]],
                tag: domain.pieces[pi].tag,
                piece: pi,
            });
        }
    }

    let mesh = TriMesh {
        nodes: final_nodes,
        triangles,
        boundary_edges,
        refinement_level: 0,
        domain: domain.clone(),
    };
    mesh.check_invariants()?;
    Ok(mesh)
}

/// Parameters along a curve such that consecutive nodes are one local size apart.
fn sample_piece(domain: &Domain, curve: &crate::geometry::Curve, h: f64) -> Vec<f64> {
    const SAMPLES: usize = 512;
    let len = curve.length();
    let mut cumulative = Vec::with_capacity(SAMPLES + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for k in 0..SAMPLES {
        let t = (k as f64 + 0.5) / SAMPLES as f64;
        acc += len / SAMPLES as f64 / size_at(domain, h, curve.point(t));
        cumulative.push(acc);
    }
    let n = (acc - 1e-9).ceil().max(1.0) as usize;
    let mut ts = Vec::with_capacity(n + 1);
    ts.push(0.0);
    let mut k = 0;
    for i in 1..n {
        let target = acc * i as f64 / n as f64;
        while cumulative[k + 1] < target {
            k += 1;
        }
        let frac = (target - cumulative[k]) / (cumulative[k + 1] - cumulative[k]);
        ts.push((k as f64 + frac) / SAMPLES as f64);
    }
    ts.push(1.0);
    ts
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn signed_area(nodes: &[Point], tri: [usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| nodes[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl TriMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.nodes, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        dist(self.nodes[e.nodes[0]], self.nodes[e.nodes[1]])
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges.iter().map(|e| self.edge_length(e)).sum()
    }

    pub fn boundary_length_of(&self, tag: BoundaryTag) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| self.edge_length(e))
            .sum()
    }

    /// Nodes touched by at least one edge with the given tag, ascending.
    pub fn nodes_on(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Longest boundary edge lying on an arc piece.
    pub fn max_arc_edge_length(&self) -> Option<f64> {
        self.boundary_edges
            .iter()
            .filter(|e| self.domain.pieces[e.piece].curve.is_arc())
            .map(|e| self.edge_length(e))
            .max_by(f64::total_cmp)
    }

    /// Largest gap between boundary edge midpoints and their true curve.
    pub fn max_chord_deviation(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| {
                let [a, b] = e.nodes.map(|i| self.nodes[i]);
                let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                self.domain.pieces[e.piece].curve.distance(m)
            })
            .fold(0.0, f64::max)
    }

    /// Checks orientation, boundary closure and tag placement.
    pub fn check_invariants(&self) -> Result<()> {
        for (t, &tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            if signed_area(&self.nodes, tri) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} has non-positive area")));
            }
        }
        // Topological boundary: edges with exactly one incident triangle.
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        if count.values().any(|&c| c > 2) {
            return Err(Error::Mesh("non-manifold edge".into()));
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for e in &self.boundary_edges {
            if tagged
                .insert(edge_key(e.nodes[0], e.nodes[1]), e.tag)
                .is_some()
            {
                return Err(Error::Mesh("boundary edge tagged twice".into()));
            }
            if self.domain.pieces[e.piece].tag != e.tag {
                return Err(Error::Mesh("boundary edge tag disagrees with its piece".into()));
            }
        }
        for (k, &c) in &count {
            let on_boundary = c == 1;
            if on_boundary != tagged.contains_key(k) {
                return Err(Error::Mesh(format!(
                    "edge {k:?} is {} but {}",
                    if on_boundary { "on the boundary" } else { "interior" },
                    if on_boundary { "untagged" } else { "tagged" }
                )));
            }
        }
        let mut degree: HashMap<usize, u32> = HashMap::new();
        for e in &self.boundary_edges {
            for n in e.nodes {
                *degree.entry(n).or_default() += 1;
            }
        }
        if degree.values().any(|&d| d != 2) {
            return Err(Error::Mesh("boundary edges do not form closed chains".into()));
        }
        let scale = self
            .nodes
            .iter()
            .fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        let tol = 1e-9 * scale.max(1.0);
        for e in &self.boundary_edges {
            let [a, b] = e.nodes.map(|i| self.nodes[i]);
            let off_axis = match e.tag {
                BoundaryTag::B4 => a[1].abs().max(b[1].abs()),
                BoundaryTag::B5 => a[0].abs().max(b[0].abs()),
                _ => 0.0,
            };
            if off_axis > tol {
                return Err(Error::Mesh(format!("{} edge leaves its symmetry axis", e.tag)));
            }
        }
        Ok(())
    }
}

/// Splits every triangle into four through its edge midpoints.
///
/// Midpoints of boundary edges on arcs are projected back onto the arc. New nodes are
/// numbered in order of first appearance, so the result is deterministic.
pub fn refine(mesh: &TriMesh) -> TriMesh {
    let mut nodes = mesh.nodes.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let boundary_piece: HashMap<(usize, usize), usize> = mesh
        .boundary_edges
        .iter()
        .map(|e| (edge_key(e.nodes[0], e.nodes[1]), e.piece))
        .collect();
    let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let pa = nodes[a];
        let pb = nodes[b];
        let mut p = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        if let Some(&piece) = boundary_piece.get(&key) {
            let curve = &mesh.domain.pieces[piece].curve;
            if curve.is_arc() {
                p = curve.project(p);
            }
        }
        let idx = nodes.len();
        nodes.push(p);
        midpoint.insert(key, idx);
        idx
    };
    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut nodes);
        let bc = mid(b, c, &mut nodes);
        let ca = mid(c, a, &mut nodes);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(mesh.boundary_edges.len() * 2);
    for e in &mesh.boundary_edges {
        let m = midpoint[&edge_key(e.nodes[0], e.nodes[1])];
        boundary_edges.push(BoundaryEdge {
            nodes: [e.nodes[0], m],
            ..*e
        });
        boundary_edges.push(BoundaryEdge {
            nodes: [m, e.nodes[1]],
            ..*e
        });
    }
    TriMesh {
        nodes,
        triangles,
        boundary_edges,
        refinement_level: mesh.refinement_level + 1,
        domain: mesh.domain.clone(),
    }
}

/// Applies [`refine`] `levels` times.
pub fn refine_n(mesh: &TriMesh, levels: usize) -> TriMesh {
    let mut m = mesh.clone();
    for _ in 0..levels {
        m = refine(&m);
    }
    m
}

/// Surface area of the 3D sheet: lateral faces `thickness * |C|` plus both flat faces `2 |D1|`.
pub fn surface_measure(mesh: &TriMesh, thickness: f64) -> f64 {
    thickness * mesh.boundary_length() + 2.0 * mesh.total_area()
}

/// Default coarse edge length for a specimen: resolves the notch and the half width.
pub fn default_edge_length(geom: &SpecimenGeometry) -> f64 {
    let base = 0.45 * geom.w_max;
    if geom.has_notch() {
        base.min(geom.notch_radius)
    } else {
        base
    }
}

/// Mesh at a given refinement level: the default coarse mesh refined `level` times.
pub fn mesh_at_level(geom: &SpecimenGeometry, level: usize) -> Result<TriMesh> {
    let base = triangulate(geom, default_edge_length(geom))?;
    Ok(refine_n(&base, level))
}

/// Bucket grid over triangle bounding boxes for point-in-triangle queries.
#[derive(Debug, Clone)]
pub struct PointLocator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

/// Barycentric tolerance for points on element edges.
const LOCATE_TOL: f64 = 1e-10;

impl PointLocator {
    pub fn new(mesh: &TriMesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let w = (hi[0] - lo[0]).max(1e-300);
        let h = (hi[1] - lo[1]).max(1e-300);
        let target_cells = (mesh.triangles.len() as f64).max(1.0);
        let cell = (w * h / target_cells).sqrt().max(w.max(h) / 4096.0);
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((h / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = tri.map(|i| mesh.nodes[i]);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in pts {
                for k in 0..2 {
                    a[k] = a[k].min(p[k]);
                    b[k] = b[k].max(p[k]);
                }
            }
            let i0 = Self::index(a[0], lo[0], cell, nx);
            let i1 = Self::index(b[0], lo[0], cell, nx);
            let j0 = Self::index(a[1], lo[1], cell, ny);
            let j1 = Self::index(b[1], lo[1], cell, ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t as u32);
                }
            }
        }
        PointLocator {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn index(v: f64, lo: f64, cell: f64, n: usize) -> usize {
        (((v - lo) / cell).floor().max(0.0) as usize).min(n - 1)
    }

    /// Triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, mesh: &TriMesh, p: Point) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        let slack = 1e-9;
        if fx < -slack || fy < -slack || fx > self.nx as f64 + slack || fy > self.ny as f64 + slack {
            return None;
        }
        let i = Self::index(p[0], self.origin[0], self.cell, self.nx);
        let j = Self::index(p[1], self.origin[1], self.cell, self.ny);
        for &t in &self.buckets[j * self.nx + i] {
            let t = t as usize;
            let bary = barycentric(mesh, t, p);
            if bary.iter().all(|&l| l >= -LOCATE_TOL) {
                return Some((t, bary));
            }
        }
        None
    }
}

pub fn barycentric(mesh: &TriMesh, t: usize, p: Point) -> [f64; 3] {
    let [a, b, c] = mesh.triangles[t].map(|i| mesh.nodes[i]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryPiece, Curve};

    pub(crate) fn two_triangle_rectangle(a: f64, b: f64) -> TriMesh {
        let domain = Domain {
            pieces: vec![
                BoundaryPiece::new(BoundaryTag::B4, Curve::line([0.0, 0.0], [a, 0.0])),
                BoundaryPiece::new(BoundaryTag::B1, Curve::line([a, 0.0], [a, b])),
                BoundaryPiece::new(BoundaryTag::B2, Curve::line([a, b], [0.0, b])),
                BoundaryPiece::new(BoundaryTag::B5, Curve::line([0.0, b], [0.0, 0.0])),
            ],
        };
        TriMesh {
            nodes: vec![[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: vec![
                BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::B4, piece: 0 },
                BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::B1, piece: 1 },
                BoundaryEdge { nodes: [2, 3], tag: BoundaryTag::B2, piece: 2 },
                BoundaryEdge { nodes: [3, 0], tag: BoundaryTag::B5, piece: 3 },
            ],
            refinement_level: 0,
            domain,
        }
    }

    #[test]
    fn two_triangles_refine_to_eight() {
        let m = two_triangle_rectangle(2.0, 1.0);
        m.check_invariants().unwrap();
        let r = refine(&m);
        assert_eq!(r.num_triangles(), 8);
        // 4 nodes + 5 unique edges
        assert_eq!(r.num_nodes(), 9);
        r.check_invariants().unwrap();
        assert!((r.total_area() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_square_surface_measure() {
        let m = two_triangle_rectangle(1.0, 1.0);
        assert!((surface_measure(&m, 0.09) - 2.36).abs() < 1e-14);
        let m = two_triangle_rectangle(3.0, 0.5);
        let expected = 0.09 * 2.0 * 3.5 + 2.0 * 1.5;
        assert!((surface_measure(&m, 0.09) - expected).abs() < 1e-14);
    }

    #[test]
    fn rectangle_strip_smallest_mesh() {
        let g = SpecimenGeometry::rectangle(1.0, 2.0, 0.09).unwrap();
        let m = triangulate(&g, g.w_min / 4.0).unwrap();
        assert!(m.num_triangles() >= 2);
        m.check_invariants().unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_h_is_refused_for_sharp_notch() {
        let g = SpecimenGeometry::specimen3();
        match triangulate(&g, 0.1) {
            Err(Error::MeshTooCoarse { .. }) => {}
            other => panic!("expected refusal, got {other:?}"),
        }
        assert!(triangulate(&g, -1.0).is_err());
    }

    #[test]
    fn notch_edges_are_a_quarter_of_h() {
        let g = SpecimenGeometry::specimen2();
        let h = 0.3;
        let m = triangulate(&g, h).unwrap();
        let longest = m.max_arc_edge_length().unwrap();
        assert!(longest <= h / 4.0 + 1e-12, "{longest}");
    }

    #[test]
    fn triangle_counts_grow_as_h_shrinks() {
        let g = SpecimenGeometry::specimen2();
        let mut last = 0;
        for h in [0.75, 0.5, 0.3, 0.2, 0.1] {
            let m = triangulate(&g, h).unwrap();
            m.check_invariants().unwrap();
            assert!(m.num_triangles() > last, "h = {h}");
            last = m.num_triangles();
        }
    }

    #[test]
    fn triangulation_is_deterministic() {
        let g = SpecimenGeometry::specimen2();
        let a = triangulate(&g, 0.3).unwrap();
        let b = triangulate(&g, 0.3).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.triangles, b.triangles);
    }

    #[test]
    fn refinement_moves_chords_toward_the_notch_arc() {
        let g = SpecimenGeometry::specimen2();
        let m0 = triangulate(&g, 0.5).unwrap();
        let m1 = refine(&m0);
        let m2 = refine(&m1);
        // nodes stay on the arc
        for e in &m2.boundary_edges {
            let curve = &m2.domain.pieces[e.piece].curve;
            for n in e.nodes {
                assert!(curve.distance(m2.nodes[n]) < 1e-12);
            }
        }
        let d0 = m0.max_chord_deviation();
        let d1 = m1.max_chord_deviation();
        let d2 = m2.max_chord_deviation();
        assert!(d1 < d0 && d2 < d1, "{d0} {d1} {d2}");
        m2.check_invariants().unwrap();
    }

    #[test]
    fn locator_finds_nodes_and_rejects_outside_points() {
        let g = SpecimenGeometry::specimen2();
        let m = triangulate(&g, 0.3).unwrap();
        let loc = PointLocator::new(&m);
        for (i, &p) in m.nodes.iter().enumerate() {
            let (t, bary) = loc.locate(&m, p).expect("node must be located");
            let k = m.triangles[t].iter().position(|&n| n == i);
            if let Some(k) = k {
                assert!((bary[k] - 1.0).abs() < 1e-9);
            }
        }
        assert!(loc.locate(&m, [0.05, g.w_max / 2.0 - 0.01]).is_none());
        assert!(loc.locate(&m, [-0.1, 0.1]).is_none());
    }
}
