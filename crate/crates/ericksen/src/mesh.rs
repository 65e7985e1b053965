//! Structured weakly-acute simplicial meshes.
//!
//! Squares are split into right triangles along a common diagonal
//! (opposite angles across any interior edge sum to 135 degrees), cubes
//! into six path tetrahedra sharing the main diagonal, so the P1
//! stiffness matrix has non-positive off-diagonal entries by
//! construction.  Red refinement and the shear map to ideal tetrahedra
//! preserve that property.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegionLabel(pub String);

impl RegionLabel {
    pub fn new(name: &str) -> Self {
        RegionLabel(name.to_string())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Vec3>,
    /// Flat cell connectivity, dim+1 vertex indices per cell.
    cells: Vec<usize>,
    /// Flat boundary face connectivity, dim vertex indices per face.
    boundary_faces: Vec<usize>,
    /// Per-face index into `label_names`.
    face_labels: Vec<u32>,
    label_names: Vec<String>,
}

pub struct AcutenessReport {
    pub pass: bool,
    /// min over i != j of k_ij = -int grad phi_i . grad phi_j
    pub worst_k_offdiag: f64,
    pub worst_pair: (usize, usize),
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn n_boundary_faces(&self) -> usize {
        self.face_labels.len()
    }

    pub fn vertex(&self, i: usize) -> Vec3 {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn boundary_face(&self, f: usize) -> (&[usize], &str) {
        let k = self.dim;
        (
            &self.boundary_faces[f * k..(f + 1) * k],
            &self.label_names[self.face_labels[f] as usize],
        )
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Signed volume of a cell (positive for correctly oriented cells).
    pub fn cell_volume(&self, c: usize) -> f64 {
        let v = self.cell(c);
        if self.dim == 2 {
            let a = self.vertices[v[1]] - self.vertices[v[0]];
            let b = self.vertices[v[2]] - self.vertices[v[0]];
            0.5 * (a.x * b.y - a.y * b.x)
        } else {
            let a = self.vertices[v[1]] - self.vertices[v[0]];
            let b = self.vertices[v[2]] - self.vertices[v[0]];
            let d = self.vertices[v[3]] - self.vertices[v[0]];
            a.dot(b.cross(d)) / 6.0
        }
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    /// Gradients of the barycentric (hat) basis functions on a cell.
    pub fn cell_basis_gradients(&self, c: usize) -> Vec<Vec3> {
        let v = self.cell(c);
        if self.dim == 2 {
            let p0 = self.vertices[v[0]];
            let p1 = self.vertices[v[1]];
            let p2 = self.vertices[v[2]];
            let det = 2.0 * self.cell_volume(c);
            // grad lam_i is perpendicular to the opposite edge
            let g = |a: Vec3, b: Vec3| Vec3::new(a.y - b.y, b.x - a.x, 0.0) * (1.0 / det);
            vec![g(p1, p2), g(p2, p0), g(p0, p1)]
        } else {
            let p0 = self.vertices[v[0]];
            let e1 = self.vertices[v[1]] - p0;
            let e2 = self.vertices[v[2]] - p0;
            let e3 = self.vertices[v[3]] - p0;
            let det = e1.dot(e2.cross(e3));
            let g1 = e2.cross(e3) * (1.0 / det);
            let g2 = e3.cross(e1) * (1.0 / det);
            let g3 = e1.cross(e2) * (1.0 / det);
            vec![-g1 - g2 - g3, g1, g2, g3]
        }
    }

    /// Longest edge over all cells.
    pub fn max_edge_length(&self) -> f64 {
        let k = self.dim + 1;
        let mut h: f64 = 0.0;
        for c in 0..self.n_cells() {
            let v = self.cell(c);
            for a in 0..k {
                for b in a + 1..k {
                    h = h.max((self.vertices[v[a]] - self.vertices[v[b]]).norm());
                }
            }
        }
        h
    }

    /// Build a mesh from raw vertex and connectivity data.  Cells are
    /// oriented for positive volume; boundary faces are found by facet
    /// counting and all carry the label "boundary".
    pub fn from_parts(dim: usize, vertices: Vec<Vec3>, mut cells: Vec<usize>) -> Result<Mesh> {
        if dim != 2 && dim != 3 {
            return Err(Error::Mesh(format!("unsupported dimension {dim}")));
        }
        let k = dim + 1;
        if cells.len() % k != 0 {
            return Err(Error::Mesh("cell array length not a multiple of dim+1".into()));
        }
        for c in 0..cells.len() / k {
            orient_cell(&vertices, &mut cells[c * k..(c + 1) * k], dim);
        }
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in 0..cells.len() / k {
            let v = &cells[c * k..(c + 1) * k];
            for skip in 0..k {
                let mut face: Vec<usize> = (0..k).filter(|&a| a != skip).map(|a| v[a]).collect();
                face.sort_unstable();
                *counts.entry(face).or_insert(0) += 1;
            }
        }
        let mut faces = Vec::new();
        let mut labels = Vec::new();
        let mut sorted: Vec<(&Vec<usize>, &usize)> = counts.iter().collect();
        sorted.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (face, &cnt) in sorted {
            if cnt == 1 {
                faces.extend_from_slice(face);
                labels.push(0);
            }
        }
        let mesh = Mesh {
            dim,
            vertices,
            cells,
            boundary_faces: faces,
            face_labels: labels,
            label_names: vec!["boundary".to_string()],
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let k = self.dim + 1;
        for c in 0..self.n_cells() {
            let v = self.cell(c);
            for &i in v {
                if i >= self.vertices.len() {
                    return Err(Error::Mesh(format!("cell {c} has out-of-range vertex {i}")));
                }
            }
            for a in 0..k {
                for b in a + 1..k {
                    if v[a] == v[b] {
                        return Err(Error::Mesh(format!("cell {c} has duplicate vertex {}", v[a])));
                    }
                }
            }
            if self.cell_volume(c) <= 0.0 {
                return Err(Error::Mesh(format!(
                    "cell {c} has non-positive volume {}",
                    self.cell_volume(c)
                )));
            }
        }
        Ok(())
    }
}

fn orient_cell(vertices: &[Vec3], cell: &mut [usize], dim: usize) {
    let signed = if dim == 2 {
        let a = vertices[cell[1]] - vertices[cell[0]];
        let b = vertices[cell[2]] - vertices[cell[0]];
        a.x * b.y - a.y * b.x
    } else {
        let a = vertices[cell[1]] - vertices[cell[0]];
        let b = vertices[cell[2]] - vertices[cell[0]];
        let d = vertices[cell[3]] - vertices[cell[0]];
        a.dot(b.cross(d))
    };
    if signed < 0.0 {
        cell.swap(dim - 1, dim);
    }
}

const SIDE_TOL: f64 = 1e-10;

/// Collect boundary faces by facet counting and label them by the box
/// side they lie on (coordinate within 1e-10 of a face of the bounding
/// box `lo..hi`).
fn extract_boundary(
    dim: usize,
    vertices: &[Vec3],
    cells: &[usize],
    lo: Vec3,
    hi: Vec3,
) -> Result<(Vec<usize>, Vec<u32>, Vec<String>)> {
    let k = dim + 1;
    let n_cells = cells.len() / k;
    let mut counts: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for c in 0..n_cells {
        let v = &cells[c * k..(c + 1) * k];
        for skip in 0..k {
            let mut face: Vec<usize> = (0..k).filter(|&a| a != skip).map(|a| v[a]).collect();
            face.sort_unstable();
            counts.entry(face).or_default().push(c);
        }
    }
    let side_defs: Vec<(&str, usize, f64)> = match dim {
        2 => vec![("x0", 0, lo.x), ("x1", 0, hi.x), ("y0", 1, lo.y), ("y1", 1, hi.y)],
        _ => vec![
            ("x0", 0, lo.x),
            ("x1", 0, hi.x),
            ("y0", 1, lo.y),
            ("y1", 1, hi.y),
            ("z0", 2, lo.z),
            ("z1", 2, hi.z),
        ],
    };
    let mut label_names: Vec<String> = side_defs.iter().map(|(s, _, _)| s.to_string()).collect();
    let mut faces = Vec::new();
    let mut labels = Vec::new();
    let mut sorted: Vec<(&Vec<usize>, &Vec<usize>)> = counts.iter().collect();
    sorted.sort_unstable_by(|a, b| a.0.cmp(b.0));
    for (face, owners) in sorted {
        if owners.len() != 1 {
            continue;
        }
        let mut label = None;
        for (li, (_, axis, coord)) in side_defs.iter().enumerate() {
            if face.iter().all(|&vi| (vertices[vi][*axis] - coord).abs() < SIDE_TOL) {
                label = Some(li as u32);
                break;
            }
        }
        let li = match label {
            Some(li) => li,
            None => {
                // not on any box side (should not happen for box meshes)
                let name = "unlabeled".to_string();
                let pos = label_names.iter().position(|s| *s == name).unwrap_or_else(|| {
                    label_names.push(name);
                    label_names.len() - 1
                });
                pos as u32
            }
        };
        faces.extend_from_slice(face);
        labels.push(li);
    }
    Ok((faces, labels, label_names))
}

/// Uniform right-triangle mesh of a rectangle; every square is split
/// along the diagonal from its min corner to its max corner.
pub fn build_square_mesh(nx: usize, ny: usize, lo: Vec3, hi: Vec3) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh("cell counts must be at least 1".into()));
    }
    let mx = nx + 1;
    let mut vertices = Vec::with_capacity(mx * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(
                lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
                0.0,
            ));
        }
    }
    let vid = |i: usize, j: usize| i + mx * j;
    let mut cells = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            cells.extend_from_slice(&[v00, v10, v11]);
            cells.extend_from_slice(&[v00, v11, v01]);
        }
    }
    let (faces, labels, names) = extract_boundary(2, &vertices, &cells, lo, hi)?;
    let mesh = Mesh {
        dim: 2,
        vertices,
        cells,
        boundary_faces: faces,
        face_labels: labels,
        label_names: names,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Kuhn subdivision of a box: each grid cube is split into six path
/// tetrahedra that share the diagonal from the cube's min corner to its
/// max corner; all dihedral angles are non-obtuse.
pub fn build_cube_mesh(nx: usize, ny: usize, nz: usize, lo: Vec3, hi: Vec3) -> Result<Mesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Mesh("cell counts must be at least 1".into()));
    }
    let (mx, my) = (nx + 1, ny + 1);
    let mut vertices = Vec::with_capacity(mx * my * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vec3::new(
                    lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
                    lo.z + (hi.z - lo.z) * k as f64 / nz as f64,
                ));
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| i + mx * (j + my * k);
    // the six axis orderings trace vertex paths from (0,0,0) to (1,1,1)
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut cells = Vec::with_capacity(24 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut corner = [i, j, k];
                    let mut tet = [vid(corner[0], corner[1], corner[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = vid(corner[0], corner[1], corner[2]);
                    }
                    let start = cells.len();
                    cells.extend_from_slice(&tet);
                    orient_cell(&vertices, &mut cells[start..start + 4], 3);
                }
            }
        }
    }
    let (faces, labels, names) = extract_boundary(3, &vertices, &cells, lo, hi)?;
    let mesh = Mesh {
        dim: 3,
        vertices,
        cells,
        boundary_faces: faces,
        face_labels: labels,
        label_names: names,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// The six-tetrahedra cube subdivision whose image under the shear map
/// consists entirely of ideal (isosceles) tetrahedra.  Unlike the path
/// subdivision it mixes main-diagonal and face-diagonal tetrahedra;
/// it is the pullback of the body-centered-cubic Delaunay tiling.
const IDEAL_CUBE_TETS: [[[usize; 3]; 4]; 6] = [
    [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 0, 1]],
    [[0, 0, 0], [0, 1, 0], [0, 1, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 1]],
    [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 1]],
    [[0, 0, 0], [1, 0, 0], [1, 0, 1], [1, 1, 1]],
    [[0, 1, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]],
];

/// Mesh of ideal tetrahedra: the box is subdivided into six tetrahedra
/// per cube compatible with the shear, then sheared.  Every element of
/// the result is an isosceles tetrahedron with coincident circumcenter
/// and barycenter, and the mesh is weakly acute.  Boundary labels name
/// the box sides of the unsheared grid.
pub fn build_ideal_mesh(nx: usize, ny: usize, nz: usize, lo: Vec3, hi: Vec3) -> Result<Mesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Mesh("cell counts must be at least 1".into()));
    }
    let (mx, my) = (nx + 1, ny + 1);
    let mut vertices = Vec::with_capacity(mx * my * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vec3::new(
                    lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
                    lo.z + (hi.z - lo.z) * k as f64 / nz as f64,
                ));
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| i + mx * (j + my * k);
    let mut cells = Vec::with_capacity(24 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for shape in IDEAL_CUBE_TETS {
                    let start = cells.len();
                    for corner in shape {
                        cells.push(vid(i + corner[0], j + corner[1], k + corner[2]));
                    }
                    orient_cell(&vertices, &mut cells[start..start + 4], 3);
                }
            }
        }
    }
    let (faces, labels, names) = extract_boundary(3, &vertices, &cells, lo, hi)?;
    let mesh = Mesh {
        dim: 3,
        vertices,
        cells,
        boundary_faces: faces,
        face_labels: labels,
        label_names: names,
    };
    mesh.validate()?;
    apply_shear_map(&mesh)
}

/// Shear a 3-D mesh into ideal tetrahedra: every vertex is mapped by
/// the fixed matrix with rows (1/sqrt2, 0, 0), (0, 1/sqrt2, 0),
/// (-1/2, -1/2, 1).  Connectivity and boundary labels are unchanged.
/// Note: the shear image of a path-tetrahedron mesh is NOT weakly
/// acute; [`build_ideal_mesh`] uses the compatible subdivision.
pub fn apply_shear_map(mesh: &Mesh) -> Result<Mesh> {
    if mesh.dim != 3 {
        return Err(Error::Mesh("shear map applies to 3-D meshes only".into()));
    }
    let s = 1.0 / (2.0f64).sqrt();
    let m = Mat3::from_rows(
        Vec3::new(s, 0.0, 0.0),
        Vec3::new(0.0, s, 0.0),
        Vec3::new(-0.5, -0.5, 1.0),
    );
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = m.mul_vec(*v);
    }
    // positive determinant keeps orientation
    out.validate()?;
    Ok(out)
}

/// Uniform red refinement: triangles split 1-to-4 by edge midpoints,
/// tetrahedra 1-to-8 with the interior octahedron cut along its
/// shortest diagonal (ties broken by lexicographic vertex index).
/// Boundary faces inherit the parent face's label.
pub fn refine_red(mesh: &Mesh) -> Result<Mesh> {
    let dim = mesh.dim;
    let k = dim + 1;
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let p = (vertices[key.0] + vertices[key.1]) * 0.5;
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut cells = Vec::with_capacity(mesh.cells.len() * 8);
    for c in 0..mesh.n_cells() {
        let v: Vec<usize> = mesh.cell(c).to_vec();
        if dim == 2 {
            let m01 = mid(v[0], v[1], &mut vertices);
            let m12 = mid(v[1], v[2], &mut vertices);
            let m20 = mid(v[2], v[0], &mut vertices);
            for tri in [
                [v[0], m01, m20],
                [m01, v[1], m12],
                [m20, m12, v[2]],
                [m01, m12, m20],
            ] {
                let start = cells.len();
                cells.extend_from_slice(&tri);
                orient_cell(&vertices, &mut cells[start..start + 3], 2);
            }
        } else {
            let m: Vec<Vec<usize>> = (0..4)
                .map(|a| {
                    (0..4)
                        .map(|b| if a == b { usize::MAX } else { mid(v[a], v[b], &mut vertices) })
                        .collect()
                })
                .collect();
            // four corner tetrahedra
            for a in 0..4 {
                let mut tet = [v[a], 0, 0, 0];
                let mut t = 1;
                for b in 0..4 {
                    if b != a {
                        tet[t] = m[a][b];
                        t += 1;
                    }
                }
                let start = cells.len();
                cells.extend_from_slice(&tet);
                orient_cell(&vertices, &mut cells[start..start + 4], 3);
            }
            // octahedron m01 m02 m03 m12 m13 m23; diagonals pair opposite
            // parent edges: (01,23), (02,13), (03,12).  Choose the
            // shortest; ties are broken by the lexicographically largest
            // sign-canonicalized direction, which is orientation
            // independent and keeps path tetrahedra non-obtuse (it
            // selects the skew-median diagonal there).
            let diag_pairs = [
                ((0usize, 1usize), (2usize, 3usize)),
                ((0, 2), (1, 3)),
                ((0, 3), (1, 2)),
            ];
            let canon_dir = |p: Vec3, q: Vec3| -> [f64; 3] {
                let d = (q - p).normalized();
                let sign = if d.x.abs() > 1e-12 {
                    d.x.signum()
                } else if d.y.abs() > 1e-12 {
                    d.y.signum()
                } else {
                    d.z.signum()
                };
                [d.x * sign, d.y * sign, d.z * sign]
            };
            let mut best = 0;
            let mut best_len = f64::INFINITY;
            let mut best_dir = [f64::NEG_INFINITY; 3];
            let scale = (vertices[m[0][1]] - vertices[m[2][3]]).norm();
            for (t, ((a0, a1), (b0, b1))) in diag_pairs.iter().enumerate() {
                let p = vertices[m[*a0][*a1]];
                let q = vertices[m[*b0][*b1]];
                let len = (p - q).norm();
                let dir = canon_dir(p, q);
                let better = len < best_len - 1e-12 * scale
                    || ((len - best_len).abs() <= 1e-12 * scale && dir > best_dir);
                if better {
                    best = t;
                    best_len = len;
                    best_dir = dir;
                }
            }
            let ((a0, a1), (b0, b1)) = diag_pairs[best];
            let p = m[a0][a1];
            let q = m[b0][b1];
            // remaining four midpoints form the equatorial cycle; two are
            // adjacent iff their parent edges share a vertex
            let all_pairs = [(0usize, 1usize), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
            let remaining: Vec<(usize, usize)> = all_pairs
                .iter()
                .copied()
                .filter(|&(x, y)| (x, y) != (a0, a1) && (x, y) != (b0, b1))
                .collect();
            for i in 0..4 {
                for j in i + 1..4 {
                    let (e1, e2) = (remaining[i], remaining[j]);
                    let shared = [e1.0, e1.1]
                        .iter()
                        .filter(|x| [e2.0, e2.1].contains(x))
                        .count();
                    if shared == 1 {
                        let r = m[e1.0][e1.1];
                        let s = m[e2.0][e2.1];
                        let start = cells.len();
                        cells.extend_from_slice(&[p, q, r, s]);
                        orient_cell(&vertices, &mut cells[start..start + 4], 3);
                    }
                }
            }
        }
    }
    // inherit boundary labels: map each parent face to its label, then
    // resolve every child boundary facet to the parent face containing it
    let mut parent_label: HashMap<Vec<usize>, u32> = HashMap::new();
    for f in 0..mesh.n_boundary_faces() {
        let (verts, _) = mesh.boundary_face(f);
        let mut key = verts.to_vec();
        key.sort_unstable();
        parent_label.insert(key, mesh.face_labels[f]);
    }
    let mut parent_of_mid: HashMap<usize, (usize, usize)> = HashMap::new();
    for (&(a, b), &m) in midpoint.iter() {
        parent_of_mid.insert(m, (a, b));
    }
    let n_cells = cells.len() / k;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for c in 0..n_cells {
        let v = &cells[c * k..(c + 1) * k];
        for skip in 0..k {
            let mut face: Vec<usize> = (0..k).filter(|&a| a != skip).map(|a| v[a]).collect();
            face.sort_unstable();
            *counts.entry(face).or_insert(0) += 1;
        }
    }
    let mut boundary_faces = Vec::new();
    let mut face_labels = Vec::new();
    let mut sorted: Vec<(&Vec<usize>, &usize)> = counts.iter().collect();
    sorted.sort_unstable_by(|a, b| a.0.cmp(b.0));
    for (face, &cnt) in sorted {
        if cnt != 1 {
            continue;
        }
        let mut parents: Vec<usize> = Vec::new();
        for &vi in face {
            match parent_of_mid.get(&vi) {
                Some(&(a, b)) => {
                    for w in [a, b] {
                        if !parents.contains(&w) {
                            parents.push(w);
                        }
                    }
                }
                None => {
                    if !parents.contains(&vi) {
                        parents.push(vi);
                    }
                }
            }
        }
        parents.sort_unstable();
        let label = parent_label.get(&parents).copied().ok_or_else(|| {
            Error::Mesh("refined boundary face has no labeled parent".into())
        })?;
        boundary_faces.extend_from_slice(face);
        face_labels.push(label);
    }
    let out = Mesh {
        dim,
        vertices,
        cells,
        boundary_faces,
        face_labels,
        label_names: mesh.label_names.clone(),
    };
    out.validate()?;
    Ok(out)
}

/// Audit the weak-acuteness condition: every off-diagonal stiffness
/// entry must satisfy k_ij = -int grad phi_i . grad phi_j >= -tol.
pub fn check_weak_acute(mesh: &Mesh, tol: f64) -> Result<AcutenessReport> {
    let stiff = crate::fem::assemble_stiffness(mesh)?;
    let mut worst = f64::INFINITY;
    let mut pair = (0, 0);
    for i in 0..stiff.n_rows {
        let (cols, vals) = stiff.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if *c == i {
                continue;
            }
            let kij = -v;
            if kij < worst {
                worst = kij;
                pair = (i, *c);
            }
        }
    }
    if !worst.is_finite() {
        worst = 0.0; // mesh with a single isolated entry pattern
    }
    Ok(AcutenessReport {
        pass: worst >= -tol,
        worst_k_offdiag: worst,
        worst_pair: pair,
    })
}

/// Vertex indices incident to boundary faces carrying `label`, in
/// ascending order.  The pseudo-label "all" selects every boundary
/// face.
pub fn boundary_nodes(mesh: &Mesh, label: &RegionLabel) -> Result<Vec<usize>> {
    let all = label.as_str() == "all";
    if !all && !mesh.label_names.iter().any(|s| s == label.as_str()) {
        return Err(Error::Mesh(format!("unknown boundary label '{}'", label.as_str())));
    }
    let mut nodes = Vec::new();
    for f in 0..mesh.n_boundary_faces() {
        let (verts, name) = mesh.boundary_face(f);
        if all || name == label.as_str() {
            nodes.extend_from_slice(verts);
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}
