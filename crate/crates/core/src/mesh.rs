//! Triangle meshes and zero level-set extraction.

use crate::error::{Error, Result};
use crate::sampling::Transform;
use crate::vec3::Vec3;

/// An indexed triangle soup. Vertices are in whatever frame the producer
/// used; [`TriangleMesh::apply_transform`] maps a normalized-frame mesh
/// back to object units.
#[derive(Clone, Debug, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<TriangleMesh> {
        let n = vertices.len() as u64;
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v as u64 >= n) {
                return Err(Error::InvalidConfig(format!(
                    "triangle {i} references vertex {} of {n}",
                    t.iter().max().unwrap()
                )));
            }
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Area-weighted average of incident face normals per vertex. The sum of
    /// raw cross products is already area-weighted (each contributes
    /// 2·area·n̂), so no explicit weights appear. Vertices with no incident
    /// area keep a zero vector.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = [t[0] as usize, t[1] as usize, t[2] as usize];
            let n = (self.vertices[b] - self.vertices[a])
                .cross(self.vertices[c] - self.vertices[a]);
            acc[a] += n;
            acc[b] += n;
            acc[c] += n;
        }
        acc.iter()
            .map(|n| n.normalized(0.0).unwrap_or(Vec3::ZERO))
            .collect()
    }

    pub fn apply_transform(&self, t: &Transform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| t.to_object(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Every edge shared by exactly two triangles (and no degenerate edges):
    /// the closed-surface test used on extraction output.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &self.triangles {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if e.0 == e.1 {
                    return false;
                }
                let key = (e.0.min(e.1), e.0.max(e.1));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }
}

// ---------------------------------------------------------------------------
// Marching cubes
//
// Cube corners are numbered by bits (x = bit 0, y = bit 1, z = bit 2); each
// edge joins two corners differing in one bit. A corner is "inside" when
// f < 0, so f = 0 counts as outside and the sign split is total. Per cell,
// every face pairs its cut edges into contour segments (4-cut faces resolved
// by the sign of the bilinear interpolant's saddle value), the segments are
// walked into closed polygons, each polygon is wound to face along the local
// gradient (outward for an SDF), and the fan-triangulated result is welded
// across cells by global edge id — no case tables involved.

use rayon::prelude::*;

/// Corner pairs of the 12 cube edges, x-direction edges first.
const EDGE_CORNERS: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// The 6 faces as (corner cycle, edge cycle); edge `i` joins cycle corners
/// `i` and `i+1`.
const FACES: [([usize; 4], [usize; 4]); 6] = [
    ([0, 2, 6, 4], [4, 10, 6, 8]),
    ([1, 3, 7, 5], [5, 11, 7, 9]),
    ([0, 1, 5, 4], [0, 9, 2, 8]),
    ([2, 3, 7, 6], [1, 11, 3, 10]),
    ([0, 1, 3, 2], [0, 5, 1, 4]),
    ([4, 5, 7, 6], [2, 7, 3, 6]),
];

fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

fn edge_axis(e: usize) -> usize {
    let (a, b) = EDGE_CORNERS[e];
    (a ^ b).trailing_zeros() as usize
}

fn inside(v: f64) -> bool {
    v < 0.0
}

/// Pair the cut edges of one face into contour segments (local edge ids).
/// `corners`/`edges` come from [`FACES`]; `vals` are the face's corner
/// values in cycle order.
fn face_segments(vals: [f64; 4], edges: [usize; 4], out: &mut Vec<(usize, usize)>) {
    let cls = [inside(vals[0]), inside(vals[1]), inside(vals[2]), inside(vals[3])];
    let cut: Vec<usize> = (0..4).filter(|&i| cls[i] != cls[(i + 1) % 4]).collect();
    match cut.len() {
        0 => {}
        2 => out.push((edges[cut[0]], edges[cut[1]])),
        4 => {
            // Alternating corner classes; the bilinear saddle value decides
            // which diagonal pair of corners connects through the middle.
            let saddle = (vals[0] * vals[2] - vals[1] * vals[3])
                / (vals[0] + vals[2] - vals[1] - vals[3]);
            if inside(saddle) == cls[0] {
                // Corners 0 and 2 connect; corners 1 and 3 are clipped off.
                out.push((edges[0], edges[1]));
                out.push((edges[2], edges[3]));
            } else {
                out.push((edges[3], edges[0]));
                out.push((edges[1], edges[2]));
            }
        }
        _ => unreachable!("sign changes around a 4-cycle come in pairs"),
    }
}

/// Walk a cell's face segments into closed polygons of local edge ids.
fn walk_polygons(segments: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut incident: [[usize; 2]; 12] = [[usize::MAX; 2]; 12];
    for (si, &(a, b)) in segments.iter().enumerate() {
        for e in [a, b] {
            let slot = &mut incident[e];
            if slot[0] == usize::MAX {
                slot[0] = si;
            } else {
                slot[1] = si;
            }
        }
    }
    let mut used = vec![false; segments.len()];
    let mut polys = Vec::new();
    for s0 in 0..segments.len() {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let start = segments[s0].0;
        let mut cur = segments[s0].1;
        let mut poly = vec![start];
        while cur != start {
            poly.push(cur);
            let next = incident[cur]
                .into_iter()
                .find(|&s| s != usize::MAX && !used[s])
                .expect("every cut edge joins exactly two face segments");
            used[next] = true;
            cur = if segments[next].0 == cur {
                segments[next].1
            } else {
                segments[next].0
            };
        }
        polys.push(poly);
    }
    polys
}

struct Grid {
    res: usize,
    lo: Vec3,
    step: Vec3,
    values: Vec<f64>,
}

impl Grid {
    fn n1(&self) -> usize {
        self.res + 1
    }

    fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[(ix * self.n1() + iy) * self.n1() + iz]
    }

    fn point(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.lo
            + crate::vec3::vec3(
                self.step.x * ix as f64,
                self.step.y * iy as f64,
                self.step.z * iz as f64,
            )
    }

    /// Pack a cell-local edge into a grid-global id for vertex welding.
    fn edge_key(&self, cell: [usize; 3], e: usize) -> u64 {
        let base = corner_offset(EDGE_CORNERS[e].0);
        let (ex, ey, ez) = (cell[0] + base[0], cell[1] + base[1], cell[2] + base[2]);
        (((edge_axis(e) * self.n1() + ex) * self.n1() + ey) * self.n1() + ez) as u64
    }

    fn edge_vertex(&self, key: u64) -> Vec3 {
        let n1 = self.n1() as u64;
        let ez = (key % n1) as usize;
        let ey = ((key / n1) % n1) as usize;
        let ex = ((key / (n1 * n1)) % n1) as usize;
        let axis = (key / (n1 * n1 * n1)) as usize;
        let (jx, jy, jz) = match axis {
            0 => (ex + 1, ey, ez),
            1 => (ex, ey + 1, ez),
            _ => (ex, ey, ez + 1),
        };
        let v0 = self.value(ex, ey, ez);
        let v1 = self.value(jx, jy, jz);
        let t = (v0 / (v0 - v1)).clamp(0.0, 1.0);
        let p0 = self.point(ex, ey, ez);
        let p1 = self.point(jx, jy, jz);
        p0 + (p1 - p0) * t
    }

    /// Oriented polygons (as global edge keys) for one cell.
    fn cell_polygons(&self, cell: [usize; 3], out: &mut Vec<Vec<u64>>) {
        let mut corner_vals = [0.0; 8];
        let mut any_in = false;
        let mut any_out = false;
        for (c, val) in corner_vals.iter_mut().enumerate() {
            let o = corner_offset(c);
            *val = self.value(cell[0] + o[0], cell[1] + o[1], cell[2] + o[2]);
            if inside(*val) {
                any_in = true;
            } else {
                any_out = true;
            }
        }
        if !(any_in && any_out) {
            return;
        }

        let mut segments = Vec::with_capacity(8);
        for (corners, edges) in FACES {
            let vals = [
                corner_vals[corners[0]],
                corner_vals[corners[1]],
                corner_vals[corners[2]],
                corner_vals[corners[3]],
            ];
            face_segments(vals, edges, &mut segments);
        }

        // Trilinear gradient at the cell center, for outward winding.
        let mut grad = Vec3::ZERO;
        for c in 0..8 {
            let o = corner_offset(c);
            let v = corner_vals[c];
            grad.x += if o[0] == 1 { v } else { -v } / self.step.x;
            grad.y += if o[1] == 1 { v } else { -v } / self.step.y;
            grad.z += if o[2] == 1 { v } else { -v } / self.step.z;
        }

        for mut poly in walk_polygons(&segments) {
            let pts: Vec<Vec3> = poly
                .iter()
                .map(|&e| self.edge_vertex(self.edge_key(cell, e)))
                .collect();
            let mut newell = Vec3::ZERO;
            for i in 0..pts.len() {
                newell += pts[i].cross(pts[(i + 1) % pts.len()]);
            }
            if newell.dot(grad) < 0.0 {
                poly.reverse();
            }
            out.push(poly.iter().map(|&e| self.edge_key(cell, e)).collect());
        }
    }
}

/// Extract the zero level-set of `field` on a `res`³ cell grid over the box
/// `[lo, hi]`, with linearly interpolated vertices welded across cells.
/// Output is deterministic: cells are processed in slab order regardless of
/// how rayon schedules the per-slab work.
pub fn marching_cubes<F>(field: F, res: usize, lo: Vec3, hi: Vec3) -> Result<TriangleMesh>
where
    F: Fn(Vec3) -> f64 + Sync,
{
    if res < 8 {
        return Err(Error::InvalidConfig(format!(
            "marching-cubes resolution {res} is below the minimum of 8"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
        return Err(Error::InvalidConfig(format!(
            "degenerate extraction domain [{lo:?}, {hi:?}]"
        )));
    }

    let n1 = res + 1;
    let step = (hi - lo) / res as f64;
    let mut values = vec![0.0; n1 * n1 * n1];
    values
        .par_chunks_mut(n1 * n1)
        .enumerate()
        .for_each(|(ix, slab)| {
            let x = lo.x + step.x * ix as f64;
            for iy in 0..n1 {
                for iz in 0..n1 {
                    slab[iy * n1 + iz] = field(crate::vec3::vec3(
                        x,
                        lo.y + step.y * iy as f64,
                        lo.z + step.z * iz as f64,
                    ));
                }
            }
        });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let grid = Grid {
        res,
        lo,
        step,
        values,
    };

    let slabs: Vec<Vec<Vec<u64>>> = (0..res)
        .into_par_iter()
        .map(|cx| {
            let mut polys = Vec::new();
            for cy in 0..res {
                for cz in 0..res {
                    grid.cell_polygons([cx, cy, cz], &mut polys);
                }
            }
            polys
        })
        .collect();

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut vertex_of_edge: std::collections::HashMap<u64, u32> = std::collections::HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for poly in slabs.iter().flatten() {
        let ids: Vec<u32> = poly
            .iter()
            .map(|&key| {
                *vertex_of_edge.entry(key).or_insert_with(|| {
                    vertices.push(grid.edge_vertex(key));
                    (vertices.len() - 1) as u32
                })
            })
            .collect();
        for k in 1..ids.len() - 1 {
            let [a, b, c] = [ids[0], ids[k], ids[k + 1]];
            let cross = (vertices[b as usize] - vertices[a as usize])
                .cross(vertices[c as usize] - vertices[a as usize]);
            if cross.norm_sq() > 0.0 {
                triangles.push([a, b, c]);
            }
        }
    }

    if triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod marching_cubes_tests {
    use super::*;
    use crate::vec3::vec3;
    use std::collections::HashMap;

    const LO: Vec3 = vec3(-1.0, -1.0, -1.0);
    const HI: Vec3 = vec3(1.0, 1.0, 1.0);

    #[test]
    fn rejects_coarse_grids_and_empty_fields() {
        let sphere = |x: Vec3| x.norm() - 0.5;
        assert!(matches!(
            marching_cubes(sphere, 4, LO, HI),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            marching_cubes(|_| 1.0, 16, LO, HI),
            Err(Error::EmptySurface)
        ));
        // Everything inside: the surface lies outside the grid.
        assert!(matches!(
            marching_cubes(|x: Vec3| x.norm() - 5.0, 16, LO, HI),
            Err(Error::EmptySurface)
        ));
        assert!(matches!(
            marching_cubes(|_| f64::NAN, 16, LO, HI),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn sphere_vertices_lie_on_the_sphere() {
        let res = 128;
        let mesh = marching_cubes(|x: Vec3| x.norm() - 0.5, res, LO, HI).unwrap();
        let cell_diagonal = (2.0 / res as f64) * 3.0f64.sqrt();
        for v in &mesh.vertices {
            assert!((v.norm() - 0.5).abs() <= 2.0 * cell_diagonal, "{v:?}");
        }
    }

    #[test]
    fn sphere_area_matches_the_analytic_value() {
        let mesh = marching_cubes(|x: Vec3| x.norm() - 0.5, 128, LO, HI).unwrap();
        let analytic = 4.0 * std::f64::consts::PI * 0.25;
        let rel = (mesh.total_area() - analytic).abs() / analytic;
        assert!(rel < 0.02, "area off by {:.3}%", rel * 100.0);
    }

    #[test]
    fn plane_yields_a_planar_mesh() {
        let offset = 0.0131;
        let res = 32;
        let mesh = marching_cubes(|x: Vec3| x.z - offset, res, LO, HI).unwrap();
        let cell = 2.0 / res as f64;
        for v in &mesh.vertices {
            assert!((v.z - offset).abs() < cell);
            assert!((v.z - offset).abs() < 1e-12, "linear field interpolates exactly");
        }
    }

    #[test]
    fn closed_surface_is_watertight_and_outward() {
        let center = vec3(0.013, 0.027, -0.041);
        let mesh = marching_cubes(|x: Vec3| (x - center).norm() - 0.55, 32, LO, HI).unwrap();
        assert!(mesh.is_watertight());
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle_vertices(t);
            let n = (b - a).cross(c - a);
            let centroid = (a + b + c) / 3.0;
            assert!(n.dot(centroid - center) > 0.0, "inward-facing triangle {t}");
        }
    }

    #[test]
    fn saddle_surface_has_no_interior_cracks() {
        // A hyperboloid produces plenty of ambiguous faces; any inconsistent
        // pairing would show up as an interior edge used by one triangle.
        let f = |x: Vec3| x.x * x.x + x.y * x.y - x.z * x.z - 0.09;
        let mesh = marching_cubes(f, 48, LO, HI).unwrap();
        let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &mesh.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &edge_count {
            assert!(count <= 2);
            if count == 1 {
                for v in [mesh.vertices[a as usize], mesh.vertices[b as usize]] {
                    let on_boundary = v.abs().max_component() > 1.0 - 2.0 / 48.0 - 1e-9;
                    assert!(on_boundary, "interior crack at {v:?}");
                }
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let f = |x: Vec3| (x - vec3(0.01, 0.0, 0.02)).norm() - 0.42;
        let a = marching_cubes(f, 24, LO, HI).unwrap();
        let b = marching_cubes(f, 24, LO, HI).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
    }
}

#[cfg(test)]
mod mesh_tests {
    use super::*;
    use crate::vec3::vec3;

    fn quad() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                vec3(0.0, 0.0, 0.0),
                vec3(1.0, 0.0, 0.0),
                vec3(1.0, 1.0, 0.0),
                vec3(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn construction_checks_index_range() {
        assert!(TriangleMesh::new(vec![Vec3::ZERO; 3], vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(vec![Vec3::ZERO; 3], vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn areas_and_normals_of_a_flat_quad() {
        let m = quad();
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        for n in m.vertex_normals() {
            assert!((n - Vec3::Z).norm() < 1e-15);
        }
    }

    #[test]
    fn transform_maps_vertices_only() {
        let m = quad();
        let t = Transform {
            scale: 2.0,
            translate: vec3(10.0, 0.0, 0.0),
        };
        let mapped = m.apply_transform(&t);
        assert_eq!(mapped.vertices[2], vec3(12.0, 2.0, 0.0));
        assert_eq!(mapped.triangles, m.triangles);
        assert!((mapped.total_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn watertightness_distinguishes_open_and_closed() {
        assert!(!quad().is_watertight());
        // A tetrahedron is the smallest closed triangle mesh.
        let tet = TriangleMesh::new(
            vec![
                vec3(0.0, 0.0, 0.0),
                vec3(1.0, 0.0, 0.0),
                vec3(0.0, 1.0, 0.0),
                vec3(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap();
        assert!(tet.is_watertight());
    }
}
