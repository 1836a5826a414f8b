//! Nested triangulations, coarse neighborhoods and combinatorial constants.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Conforming triangle mesh with counterclockwise cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(nodes: Vec<Point>, cells: Vec<[usize; 3]>) -> Self {
        let mut cells = cells;
        for c in cells.iter_mut() {
            if signed_area(nodes[c[0]], nodes[c[1]], nodes[c[2]]) < 0.0 {
                c.swap(1, 2);
            }
        }
        Self { nodes, cells }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self, c: usize) -> [Point; 3] {
        let t = self.cells[c];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn area(&self, c: usize) -> f64 {
        let [a, b, d] = self.vertices(c);
        signed_area(a, b, d)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.area(c)).sum()
    }

    pub fn centroid(&self, c: usize) -> Point {
        let [a, b, d] = self.vertices(c);
        [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0]
    }

    /// Longest edge of a cell.
    pub fn diameter(&self, c: usize) -> f64 {
        let [a, b, d] = self.vertices(c);
        dist(a, b).max(dist(b, d)).max(dist(a, d))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.diameter(c)).fold(0.0, f64::max)
    }

    /// Gradients of the three P1 hat functions on a cell.
    pub fn hat_gradients(&self, c: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.vertices(c);
        let two_a = 2.0 * signed_area(p0, p1, p2);
        [
            [(p1[1] - p2[1]) / two_a, (p2[0] - p1[0]) / two_a],
            [(p2[1] - p0[1]) / two_a, (p0[0] - p2[0]) / two_a],
            [(p0[1] - p1[1]) / two_a, (p1[0] - p0[0]) / two_a],
        ]
    }

    /// Edges used by exactly one cell, oriented as in that cell, sorted.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: HashMap<[usize; 2], (usize, [usize; 2])> = HashMap::new();
        for t in &self.cells {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                count.entry(key).or_insert((0, [a, b])).0 += 1;
            }
        }
        let mut out: Vec<[usize; 2]> = count
            .into_values()
            .filter(|(n, _)| *n == 1)
            .map(|(_, e)| e)
            .collect();
        out.sort();
        out
    }

    /// Nodes on the mesh boundary, sorted.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut flag = vec![false; self.num_nodes()];
        for e in self.boundary_edges() {
            flag[e[0]] = true;
            flag[e[1]] = true;
        }
        (0..self.num_nodes()).filter(|&i| flag[i]).collect()
    }

    /// Red refinement: each cell is split into four similar children.
    ///
    /// Returns the refined mesh and the parent of every child cell.
    pub fn refine_red(&self) -> (TriMesh, Vec<usize>) {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (pa, pb) = (nodes[a], nodes[b]);
                nodes.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                nodes.len() - 1
            })
        };
        let mut cells = Vec::with_capacity(4 * self.num_cells());
        let mut parent = Vec::with_capacity(4 * self.num_cells());
        for (c, t) in self.cells.iter().enumerate() {
            let m01 = midpoint(t[0], t[1], &mut nodes);
            let m12 = midpoint(t[1], t[2], &mut nodes);
            let m20 = midpoint(t[2], t[0], &mut nodes);
            cells.push([t[0], m01, m20]);
            cells.push([m01, t[1], m12]);
            cells.push([m20, m12, t[2]]);
            cells.push([m01, m12, m20]);
            parent.extend([c; 4]);
        }
        (TriMesh { nodes, cells }, parent)
    }

    /// Plain-text dump: `node <i> <x> <y>` and `cell <i> <a> <b> <c>` records.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "node {i} {:.15e} {:.15e}", p[0], p[1])?;
        }
        for (i, t) in self.cells.iter().enumerate() {
            writeln!(w, "cell {i} {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Barycentric coordinates of `p` in triangle `t`.
pub fn barycentric(t: [Point; 3], p: Point) -> [f64; 3] {
    let a = signed_area(t[0], t[1], t[2]);
    [
        signed_area(p, t[1], t[2]) / a,
        signed_area(t[0], p, t[2]) / a,
        signed_area(t[0], t[1], p) / a,
    ]
}

/// Uniform mesh of a rectangle: `nx × ny` squares, each cut along its
/// south-west to north-east diagonal.
pub fn rectangle_mesh(lo: Point, hi: Point, nx: usize, ny: usize) -> TriMesh {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64,
            ]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            cells.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh { nodes, cells }
}

/// Polygonal disk of radius `r` made of `rings` concentric node rings.
///
/// Ring `k` carries `6k` equally spaced nodes, so the mesh size is about `r/rings`.
pub fn disk_mesh(r: f64, rings: usize) -> TriMesh {
    let mut nodes = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(nodes.len());
        let n = 6 * k;
        let rad = r * k as f64 / rings as f64;
        for j in 0..n {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            nodes.push([rad * th.cos(), rad * th.sin()]);
        }
    }
    let mut cells = Vec::new();
    for k in 1..=rings {
        let n_out = 6 * k;
        let out = |o: usize| ring_start[k] + o % n_out;
        if k == 1 {
            for o in 0..n_out {
                cells.push([0, out(o), out(o + 1)]);
            }
            continue;
        }
        let n_in = 6 * (k - 1);
        let inn = |i: usize| ring_start[k - 1] + i % n_in;
        let (mut i, mut o) = (0usize, 0usize);
        while i < n_in || o < n_out {
            let next_in = (i + 1) as f64 / n_in as f64;
            let next_out = (o + 1) as f64 / n_out as f64;
            if o < n_out && (i >= n_in || next_out <= next_in) {
                cells.push([inn(i), out(o), out(o + 1)]);
                o += 1;
            } else {
                cells.push([inn(i), out(o), inn(i + 1)]);
                i += 1;
            }
        }
    }
    TriMesh::new(nodes, cells)
}

/// Nested coarse and fine triangulations of a rectangle.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub domain_polygon: Vec<Point>,
    pub coarse: TriMesh,
    pub fine: TriMesh,
    /// Coarse leg length (grid spacing).
    pub coarse_size: f64,
    /// Fine leg length (grid spacing).
    pub fine_size: f64,
    /// Maximum coarse element diameter.
    pub coarse_diameter: f64,
    /// Maximum fine element diameter.
    pub fine_diameter: f64,
    pub diam_domain: f64,
    pub fine_to_coarse: Vec<usize>,
    pub coarse_to_fine: Vec<Vec<usize>>,
    /// Fine nodes lying on the boundary of the domain.
    pub on_boundary: Vec<bool>,
}

impl MeshHierarchy {
    /// Builds the hierarchy with coarse spacing `h_coarse` and `levels` red refinements.
    pub fn build(polygon: &[Point], h_coarse: f64, levels: usize) -> Result<Self> {
        if levels < 1 {
            return Err(Error::Mesh("mesh: refinement_levels must be at least 1".into()));
        }
        let (lo, hi) = rectangle_bounds(polygon)?;
        let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
        if !(h_coarse > 0.0) || h_coarse > w.min(h) * (1.0 + 1e-12) {
            return Err(Error::Mesh(format!(
                "mesh: coarse size {h_coarse} larger than the domain ({w} x {h})"
            )));
        }
        let nx = divisions(w, h_coarse)?;
        let ny = divisions(h, h_coarse)?;
        let coarse = rectangle_mesh(lo, hi, nx, ny);
        let mut fine = coarse.clone();
        let mut fine_to_coarse: Vec<usize> = (0..coarse.num_cells()).collect();
        for _ in 0..levels {
            let (next, parent) = fine.refine_red();
            fine_to_coarse = parent.iter().map(|&p| fine_to_coarse[p]).collect();
            fine = next;
        }
        let mut coarse_to_fine = vec![Vec::new(); coarse.num_cells()];
        for (f, &c) in fine_to_coarse.iter().enumerate() {
            coarse_to_fine[c].push(f);
        }
        let mut on_boundary = vec![false; fine.num_nodes()];
        for e in fine.boundary_edges() {
            on_boundary[e[0]] = true;
            on_boundary[e[1]] = true;
        }
        Ok(Self {
            domain_polygon: polygon.to_vec(),
            coarse_diameter: coarse.max_diameter(),
            fine_diameter: fine.max_diameter(),
            coarse_size: h_coarse,
            fine_size: h_coarse / (1u64 << levels) as f64,
            diam_domain: (w * w + h * h).sqrt(),
            coarse,
            fine,
            fine_to_coarse,
            coarse_to_fine,
            on_boundary,
        })
    }

    /// Builds the hierarchy from a target fine spacing, which must be
    /// `h_coarse / 2^k` for some `k ≥ 1`.
    pub fn build_with_fine_size(polygon: &[Point], h_coarse: f64, h_fine: f64) -> Result<Self> {
        let ratio = h_coarse / h_fine;
        let levels = ratio.log2().round();
        if levels < 1.0 || ((2f64).powf(levels) - ratio).abs() > 1e-9 * ratio {
            return Err(Error::Mesh(format!(
                "mesh: fine size {h_fine} is not coarse size {h_coarse} over a power of two"
            )));
        }
        Self::build(polygon, h_coarse, levels as usize)
    }

    /// Fine nodes in the closure of coarse element `k`, sorted.
    pub fn fine_nodes_of_coarse(&self, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.coarse_to_fine[k]
            .iter()
            .flat_map(|&c| self.fine.cells[c])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// One neighborhood per coarse node.
    pub fn neighborhoods(&self) -> Vec<Neighborhood> {
        let mut star = vec![Vec::new(); self.coarse.num_nodes()];
        for (k, t) in self.coarse.cells.iter().enumerate() {
            for &v in t {
                star[v].push(k);
            }
        }
        star.into_iter()
            .enumerate()
            .map(|(i, coarse_cells)| {
                let mut cells: Vec<usize> = coarse_cells
                    .iter()
                    .flat_map(|&k| self.coarse_to_fine[k].iter().copied())
                    .collect();
                cells.sort_unstable();
                Neighborhood::from_cells(i, self.coarse.nodes[i], &self.fine, &cells, coarse_cells, &self.on_boundary)
            })
            .collect()
    }

    /// Fine-cell count per coarse element, for diagnostics.
    pub fn refinement_ratio(&self) -> usize {
        self.coarse_to_fine[0].len()
    }
}

fn divisions(len: f64, step: f64) -> Result<usize> {
    let n = (len / step).round();
    if n < 1.0 || (n * step - len).abs() > 1e-9 * len {
        return Err(Error::Mesh(format!(
            "mesh: coarse size {step} does not divide the side length {len}"
        )));
    }
    Ok(n as usize)
}

/// Validates a simple closed polygon and returns its bounding box when it
/// is an axis-aligned rectangle.
pub fn rectangle_bounds(polygon: &[Point]) -> Result<(Point, Point)> {
    let mut pts: Vec<Point> = polygon.to_vec();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return Err(Error::Mesh("mesh: polygon needs at least three vertices".into()));
    }
    if !is_simple(&pts) {
        return Err(Error::Mesh("mesh: polygon is not simple".into()));
    }
    let n = pts.len();
    let corners: Vec<Point> = (0..n)
        .filter(|&i| {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            signed_area(a, b, c).abs() > 1e-14 * (1.0 + dist(a, c).powi(2))
        })
        .map(|i| pts[i])
        .collect();
    let xs = corners.iter().map(|p| p[0]);
    let ys = corners.iter().map(|p| p[1]);
    let lo = [xs.clone().fold(f64::INFINITY, f64::min), ys.clone().fold(f64::INFINITY, f64::min)];
    let hi = [xs.fold(f64::NEG_INFINITY, f64::max), ys.fold(f64::NEG_INFINITY, f64::max)];
    let on_box = corners.iter().all(|p| {
        (p[0] == lo[0] || p[0] == hi[0]) && (p[1] == lo[1] || p[1] == hi[1])
    });
    if corners.len() != 4 || !on_box {
        return Err(Error::Mesh(
            "mesh: only axis-aligned rectangular domains are supported".into(),
        ));
    }
    Ok((lo, hi))
}

fn is_simple(pts: &[Point]) -> bool {
    let n = pts.len();
    let mut area = 0.0;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        area += a[0] * b[1] - b[0] * a[1];
    }
    if area.abs() < 1e-14 {
        return false;
    }
    for i in 0..n {
        let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
        let folds = (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]) < 0.0;
        if a == b || (signed_area(a, b, c).abs() < 1e-14 && folds) {
            return false;
        }
    }
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = signed_area(a, b, c);
    let o2 = signed_area(a, b, d);
    let o3 = signed_area(c, d, a);
    let o4 = signed_area(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on = |p: Point, q: Point, r: Point, o: f64| {
        o == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4)
}

/// Submesh of fine cells around one coarse node.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub index: usize,
    pub center: Point,
    pub mesh: TriMesh,
    /// Local node to global fine node.
    pub nodes: Vec<usize>,
    /// Local cell to global fine cell.
    pub cells: Vec<usize>,
    pub coarse_cells: Vec<usize>,
    /// Local indices of boundary nodes, sorted.
    pub boundary: Vec<usize>,
    /// Local indices of interior nodes, sorted.
    pub interior: Vec<usize>,
    /// Boundary edges in local indices.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Per entry of `boundary`: whether the node lies on the domain boundary.
    pub on_domain_boundary: Vec<bool>,
}

impl Neighborhood {
    fn from_cells(
        index: usize,
        center: Point,
        fine: &TriMesh,
        cells: &[usize],
        coarse_cells: Vec<usize>,
        global_boundary: &[bool],
    ) -> Self {
        let mut nodes: Vec<usize> = cells.iter().flat_map(|&c| fine.cells[c]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut g2l = HashMap::with_capacity(nodes.len());
        for (l, &g) in nodes.iter().enumerate() {
            g2l.insert(g, l);
        }
        let local_cells = cells
            .iter()
            .map(|&c| {
                let t = fine.cells[c];
                [g2l[&t[0]], g2l[&t[1]], g2l[&t[2]]]
            })
            .collect();
        let mesh = TriMesh {
            nodes: nodes.iter().map(|&g| fine.nodes[g]).collect(),
            cells: local_cells,
        };
        let flags: Vec<bool> = nodes.iter().map(|&g| global_boundary[g]).collect();
        Self::assemble(index, center, mesh, nodes, cells.to_vec(), coarse_cells, &flags)
    }

    /// Treats a whole mesh as a single neighborhood, e.g. for oracle tests.
    pub fn from_mesh(mesh: TriMesh) -> Self {
        let n = mesh.num_nodes();
        let m = mesh.num_cells();
        let mut cx = [0.0, 0.0];
        for p in &mesh.nodes {
            cx[0] += p[0] / n as f64;
            cx[1] += p[1] / n as f64;
        }
        let flags = vec![false; n];
        Self::assemble(0, cx, mesh, (0..n).collect(), (0..m).collect(), vec![], &flags)
    }

    fn assemble(
        index: usize,
        center: Point,
        mesh: TriMesh,
        nodes: Vec<usize>,
        cells: Vec<usize>,
        coarse_cells: Vec<usize>,
        node_on_domain: &[bool],
    ) -> Self {
        let boundary_edges = mesh.boundary_edges();
        let boundary = mesh.boundary_nodes();
        let mut is_b = vec![false; mesh.num_nodes()];
        for &b in &boundary {
            is_b[b] = true;
        }
        let interior = (0..mesh.num_nodes()).filter(|&i| !is_b[i]).collect();
        let on_domain_boundary = boundary.iter().map(|&b| node_on_domain[b]).collect();
        Self {
            index,
            center,
            mesh,
            nodes,
            cells,
            coarse_cells,
            boundary,
            interior,
            boundary_edges,
            on_domain_boundary,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    /// Length of the neighborhood boundary.
    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| dist(self.mesh.nodes[e[0]], self.mesh.nodes[e[1]]))
            .sum()
    }

    pub fn area(&self) -> f64 {
        self.mesh.total_area()
    }

    /// Whether any part of the neighborhood boundary lies on the domain boundary.
    pub fn touches_domain_boundary(&self) -> bool {
        self.on_domain_boundary.iter().any(|&b| b)
    }
}

/// Largest number of neighborhoods containing one coarse element.
pub fn overlap_constant(num_coarse_cells: usize, nbhds: &[Neighborhood]) -> usize {
    let mut count = vec![0usize; num_coarse_cells];
    for n in nbhds {
        for &k in &n.coarse_cells {
            count[k] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    #[test]
    fn unit_square_counts() {
        let m = MeshHierarchy::build(&UNIT, 0.25, 3).unwrap();
        assert_eq!(m.coarse.num_nodes(), 25);
        assert!((m.fine_size - 1.0 / 32.0).abs() < 1e-15);
        let m = MeshHierarchy::build(&UNIT, 1.0, 1).unwrap();
        assert_eq!(m.coarse.num_cells(), 2);
        assert_eq!(m.fine.num_cells(), 8);
    }

    #[test]
    fn interior_star_has_six_triangles() {
        let m = MeshHierarchy::build(&UNIT, 0.125, 1).unwrap();
        let nb = m.neighborhoods();
        for n in &nb {
            if !n.touches_domain_boundary() {
                assert_eq!(n.coarse_cells.len(), 6);
            }
        }
        assert_eq!(overlap_constant(m.coarse.num_cells(), &nb), 3);
    }

    #[test]
    fn corner_neighborhoods() {
        let m = MeshHierarchy::build(&UNIT, 0.25, 1).unwrap();
        let nb = m.neighborhoods();
        // (0,0) touches one triangle of the SW-NE split, (1,0) touches two.
        assert_eq!(nb[0].coarse_cells.len(), 2);
        assert_eq!(nb[4].coarse_cells.len(), 1);
    }

    #[test]
    fn rejects_bad_domains() {
        let bow = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(MeshHierarchy::build(&bow, 0.25, 1).is_err());
        assert!(MeshHierarchy::build(&UNIT, 2.0, 1).is_err());
        assert!(MeshHierarchy::build(&UNIT, 0.3, 1).is_err());
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(MeshHierarchy::build(&tri, 0.25, 1).is_err());
    }

    #[test]
    fn disk_mesh_is_valid() {
        let d = disk_mesh(1.0, 8);
        assert_eq!(d.num_nodes(), 1 + 3 * 8 * 9);
        assert!((0..d.num_cells()).all(|c| d.area(c) > 0.0));
        assert_eq!(d.boundary_nodes().len(), 48);
        let poly_area = 0.5 * 48.0 * (2.0 * std::f64::consts::PI / 48.0).sin();
        assert!((d.total_area() - poly_area).abs() < 1e-12);
    }
}
