//! P1 finite element assembly and the discrete Ericksen energies.
//!
//! Sign convention: the assembled stiffness matrix stores the positive
//! form `int grad phi_i . grad phi_j`, so the paper-style coefficients
//! are `k_ij = -stiffness[i][j]` and are non-negative off the diagonal
//! on weakly acute meshes.  Every formula below negates on use; tests
//! assert the convention.

use crate::energy::DoubleWell;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::Mesh;
use crate::quadrature::simplex_rule;
use crate::sparse::SparseMatrix;

/// One scalar per mesh vertex.
pub type NodalScalarField = Vec<f64>;
/// One vector per mesh vertex (z component zero in 2-D).
pub type NodalVectorField = Vec<Vec3>;

/// Stiffness matrix with entries `int grad phi_i . grad phi_j`.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    let n = mesh.n_vertices();
    let k = mesh.dim() + 1;
    let mut trips = Vec::with_capacity(mesh.n_cells() * k * k);
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell_volume(c);
        if vol <= 0.0 {
            return Err(Error::Mesh(format!("cell {c} has non-positive volume {vol}")));
        }
        let g = mesh.cell_basis_gradients(c);
        let v = mesh.cell(c);
        for a in 0..k {
            for b in 0..k {
                trips.push((v[a], v[b], vol * g[a].dot(g[b])));
            }
        }
    }
    let mut m = SparseMatrix::from_triplets(n, n, &trips)?;
    m.symmetric = true;
    Ok(m)
}

/// Consistent P1 mass matrix, exact for products of hat functions.
pub fn assemble_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    let n = mesh.n_vertices();
    let d = mesh.dim();
    let k = d + 1;
    let off = 1.0 / ((d + 1) as f64 * (d + 2) as f64);
    let mut trips = Vec::with_capacity(mesh.n_cells() * k * k);
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell_volume(c);
        let v = mesh.cell(c);
        for a in 0..k {
            for b in 0..k {
                let w = if a == b { 2.0 * off } else { off };
                trips.push((v[a], v[b], vol * w));
            }
        }
    }
    let mut m = SparseMatrix::from_triplets(n, n, &trips)?;
    m.symmetric = true;
    Ok(m)
}

/// Lumped mass vector: entry i is sum over cells containing x_i of
/// |T|/(d+1).
pub fn assemble_lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let n = mesh.n_vertices();
    let k = mesh.dim() + 1;
    let mut w = vec![0.0; n];
    for c in 0..mesh.n_cells() {
        let share = mesh.cell_volume(c) / k as f64;
        for &v in mesh.cell(c) {
            w[v] += share;
        }
    }
    w
}

/// Walk the strictly upper triangle of a symmetric CSR matrix.
fn for_upper_offdiag(a: &SparseMatrix, mut f: impl FnMut(usize, usize, f64)) {
    for i in 0..a.n_rows {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if *c > i {
                f(i, *c, *v);
            }
        }
    }
}

/// The discrete Ericksen energy
/// (kappa/2) sum k_ij (delta_ij s)^2
///   + (1/2) sum k_ij ((s_i^2 + s_j^2)/2) |delta_ij n|^2.
pub fn energy_e1h(stiff: &SparseMatrix, s: &[f64], n: &[Vec3], kappa: f64) -> f64 {
    assert_eq!(stiff.n_rows, s.len(), "E1h dimension mismatch");
    assert_eq!(s.len(), n.len(), "E1h dimension mismatch");
    let mut e = 0.0;
    for_upper_offdiag(stiff, |i, j, a_ij| {
        let kij = -a_ij;
        let ds = s[i] - s[j];
        let dn = n[i] - n[j];
        let sigma = 0.5 * (s[i] * s[i] + s[j] * s[j]);
        e += kij * (kappa * ds * ds + sigma * dn.norm2());
    });
    e
}

/// Double-well energy int psi(s_h) by degree-4 quadrature (exact:
/// psi is quartic and s_h linear per cell).  Values outside the
/// admissible range (-1/2, 1) are allowed but logged.
pub fn energy_e2h(mesh: &Mesh, s: &[f64], dw: &DoubleWell) -> f64 {
    if let Some(&bad) = s.iter().find(|&&v| v <= -0.5 || v >= 1.0) {
        log::warn!("degree of orientation {bad} outside (-1/2, 1)");
    }
    let rule = simplex_rule(mesh.dim());
    let k = mesh.dim() + 1;
    let mut e = 0.0;
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell_volume(c);
        let v = mesh.cell(c);
        let mut cell_acc = 0.0;
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let mut sh = 0.0;
            for a in 0..k {
                sh += pt[a] * s[v[a]];
            }
            cell_acc += w * dw.eval(sh).psi;
        }
        e += vol * cell_acc;
    }
    e
}

/// Residuals of the discrete energy inequality:
/// E_h = (1/4) sum k_ij (delta_ij s)^2 |delta_ij n|^2 and the variant
/// with s replaced by its nodal absolute value.
pub fn residuals(stiff: &SparseMatrix, s: &[f64], n: &[Vec3]) -> (f64, f64) {
    let mut e = 0.0;
    let mut e_abs = 0.0;
    for_upper_offdiag(stiff, |i, j, a_ij| {
        let kij = -a_ij;
        let dn2 = (n[i] - n[j]).norm2();
        let ds = s[i] - s[j];
        let ds_abs = s[i].abs() - s[j].abs();
        e += 0.5 * kij * ds * ds * dn2;
        e_abs += 0.5 * kij * ds_abs * ds_abs * dn2;
    });
    (e, e_abs)
}

/// The auxiliary-variable energy
/// (kappa - 1) int |grad s_h|^2 + int |grad u_h|^2
/// evaluated through stiffness quadratic forms.
pub fn tilde_energy_e1h(stiff: &SparseMatrix, s: &[f64], u: &[Vec3], kappa: f64) -> f64 {
    let mut grad_s2 = 0.0;
    let mut grad_u2 = 0.0;
    for i in 0..stiff.n_rows {
        let (cols, vals) = stiff.row(i);
        let mut acc_s = 0.0;
        let mut acc_u = Vec3::ZERO;
        for (c, v) in cols.iter().zip(vals) {
            acc_s += v * s[*c];
            acc_u += u[*c] * *v;
        }
        grad_s2 += s[i] * acc_s;
        grad_u2 += u[i].dot(acc_u);
    }
    (kappa - 1.0) * grad_s2 + grad_u2
}

/// Diagonal D(n)_ii = sum_j k_ij |delta_ij n|^2 used in the implicit
/// s-update.
pub fn assemble_d_of_n(stiff: &SparseMatrix, n: &[Vec3]) -> Vec<f64> {
    let mut d = vec![0.0; stiff.n_rows];
    for_upper_offdiag(stiff, |i, j, a_ij| {
        let t = -a_ij * (n[i] - n[j]).norm2();
        d[i] += t;
        d[j] += t;
    });
    d
}

/// The matrices of the director system: Atilde(s)_ij = k_ij (s_i^2 +
/// s_j^2) and the diagonal of its row sums.  The system block is
/// Dtilde - Atilde, symmetric positive semi-definite on weakly acute
/// meshes.
pub fn assemble_director_blocks(stiff: &SparseMatrix, s: &[f64]) -> (SparseMatrix, Vec<f64>) {
    let mut atilde = stiff.clone();
    for i in 0..stiff.n_rows {
        let lo = stiff.row_offsets[i];
        let hi = stiff.row_offsets[i + 1];
        for p in lo..hi {
            let j = stiff.col_indices[p];
            atilde.values[p] = -stiff.values[p] * (s[i] * s[i] + s[j] * s[j]);
        }
    }
    let mut dtilde = vec![0.0; stiff.n_rows];
    for i in 0..stiff.n_rows {
        let (_, vals) = atilde.row(i);
        dtilde[i] = vals.iter().sum();
    }
    (atilde, dtilde)
}

/// The full director system matrix Dtilde(s) - Atilde(s) on the
/// stiffness sparsity pattern.
pub fn director_system_matrix(stiff: &SparseMatrix, s: &[f64]) -> SparseMatrix {
    let (mut atilde, dtilde) = assemble_director_blocks(stiff, s);
    for i in 0..atilde.n_rows {
        let lo = atilde.row_offsets[i];
        let hi = atilde.row_offsets[i + 1];
        for p in lo..hi {
            let j = atilde.col_indices[p];
            atilde.values[p] = if j == i {
                dtilde[i] - atilde.values[p]
            } else {
                -atilde.values[p]
            };
        }
    }
    atilde.symmetric = true;
    atilde
}

/// Nodal auxiliary field u_i = s_i n_i.
pub fn compute_u(s: &[f64], n: &[Vec3]) -> Vec<Vec3> {
    s.iter().zip(n).map(|(&si, &ni)| ni * si).collect()
}

/// L2 and H1-seminorm errors of a nodal scalar field against an
/// analytic solution, by element-wise degree-4 quadrature.  The
/// analytic function must be smooth within each cell.
pub fn scalar_error_norms(
    mesh: &Mesh,
    field: &[f64],
    exact: &dyn Fn(Vec3) -> f64,
    exact_grad: &dyn Fn(Vec3) -> Vec3,
) -> (f64, f64) {
    let rule = simplex_rule(mesh.dim());
    let k = mesh.dim() + 1;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell_volume(c);
        let v = mesh.cell(c);
        let g = mesh.cell_basis_gradients(c);
        let mut grad_h = Vec3::ZERO;
        for a in 0..k {
            grad_h += g[a] * field[v[a]];
        }
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = Vec3::ZERO;
            let mut fh = 0.0;
            for a in 0..k {
                x += mesh.vertex(v[a]) * pt[a];
                fh += pt[a] * field[v[a]];
            }
            let d = fh - exact(x);
            l2 += vol * w * d * d;
            h1 += vol * w * (grad_h - exact_grad(x)).norm2();
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// Vector-field version; `exact_grad` returns the gradient of each
/// component.
pub fn vector_error_norms(
    mesh: &Mesh,
    field: &[Vec3],
    exact: &dyn Fn(Vec3) -> Vec3,
    exact_grad: &dyn Fn(Vec3) -> [Vec3; 3],
) -> (f64, f64) {
    let rule = simplex_rule(mesh.dim());
    let k = mesh.dim() + 1;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell_volume(c);
        let v = mesh.cell(c);
        let g = mesh.cell_basis_gradients(c);
        let mut jac = [Vec3::ZERO; 3];
        for a in 0..k {
            let u = field[v[a]];
            jac[0] += g[a] * u.x;
            jac[1] += g[a] * u.y;
            jac[2] += g[a] * u.z;
        }
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = Vec3::ZERO;
            let mut fh = Vec3::ZERO;
            for a in 0..k {
                x += mesh.vertex(v[a]) * pt[a];
                fh += field[v[a]] * pt[a];
            }
            l2 += vol * w * (fh - exact(x)).norm2();
            let ej = exact_grad(x);
            h1 += vol * w * ((jac[0] - ej[0]).norm2() + (jac[1] - ej[1]).norm2() + (jac[2] - ej[2]).norm2());
        }
    }
    (l2.sqrt(), h1.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::DoubleWell;
    use crate::mesh::{build_cube_mesh, build_square_mesh, Mesh};
    use rand::{Rng, SeedableRng};

    fn unit_square(nx: usize) -> Mesh {
        build_square_mesh(nx, nx, Vec3::ZERO, Vec3::new(1.0, 1.0, 0.0)).unwrap()
    }

    fn unit_cube(nx: usize) -> Mesh {
        build_cube_mesh(nx, nx, nx, Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).unwrap()
    }

    fn random_state(
        mesh: &Mesh,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> (Vec<f64>, Vec<Vec3>) {
        let n = mesh.n_vertices();
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.45..0.95)).collect();
        let nv: Vec<Vec3> = (0..n)
            .map(|_| {
                loop {
                    let v = Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        if mesh.dim() == 3 { rng.gen_range(-1.0..1.0) } else { 0.0 },
                    );
                    if v.norm() > 1e-3 {
                        return v.normalized();
                    }
                }
            })
            .collect();
        (s, nv)
    }

    #[test]
    fn stiffness_of_unit_right_triangle() {
        // hand integration of hat gradients on ((0,0),(1,0),(0,1)):
        // (1/2) [[2,-1,-1],[-1,1,0],[-1,0,1]]
        let mesh = Mesh::from_parts(
            2,
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![0, 1, 2],
        )
        .unwrap();
        let a = assemble_stiffness(&mesh).unwrap();
        let expect = [
            [1.0, -0.5, -0.5],
            [-0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.5],
        ];
        for i in 0..3 {
            let (cols, vals) = a.row(i);
            for j in 0..3 {
                let got = cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0);
                assert!((got - expect[i][j]).abs() < 1e-14, "entry ({i},{j}) = {got}");
            }
        }
        // across the hypotenuse of the 1x1 square split, the two 45
        // degree opposite angles give k_ij = 0 there and -1/2 on the legs
        let m = unit_square(1);
        let a = assemble_stiffness(&m).unwrap();
        let idx = |p: Vec3| m.vertices().iter().position(|v| (*v - p).norm() < 1e-12).unwrap();
        let i00 = idx(Vec3::ZERO);
        let i10 = idx(Vec3::new(1.0, 0.0, 0.0));
        let i11 = idx(Vec3::new(1.0, 1.0, 0.0));
        let get = |i: usize, j: usize| {
            let (cols, vals) = a.row(i);
            cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
        };
        assert!((get(i00, i10) + 0.5).abs() < 1e-14);
        assert!(get(i00, i11).abs() < 1e-14);
        assert!((get(i00, i00) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        for mesh in [unit_square(3), unit_cube(2)] {
            let a = assemble_stiffness(&mesh).unwrap();
            let ones = vec![1.0; mesh.n_vertices()];
            for v in a.spmv(&ones) {
                assert!(v.abs() < 1e-12, "row sum {v}");
            }
            assert!(a.max_symmetry_violation() < 1e-13);
        }
    }

    #[test]
    fn dirichlet_energy_of_linear_function() {
        let m = unit_square(1);
        let a = assemble_stiffness(&m).unwrap();
        let s: Vec<f64> = m.vertices().iter().map(|v| v.x).collect();
        assert!((a.quadratic_form(&s) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dirichlet_integral_identity() {
        // s^T K s = 1/2 sum k_ij (delta_ij s)^2 for random nodal s
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for mesh in [unit_square(4), unit_cube(2)] {
            let a = assemble_stiffness(&mesh).unwrap();
            let s: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let quad = a.quadratic_form(&s);
            let mut sum = 0.0;
            for_upper_offdiag(&a, |i, j, a_ij| {
                sum += -a_ij * (s[i] - s[j]).powi(2);
            });
            assert!((quad - sum).abs() < 1e-10 * quad.abs().max(1.0));
        }
    }

    #[test]
    fn mass_matrix_values() {
        let m = unit_square(1);
        let mm = assemble_mass(&m).unwrap();
        // total mass = area
        let ones = vec![1.0; m.n_vertices()];
        assert!((mm.quadratic_form(&ones) - 1.0).abs() < 1e-14);
        // diagonal of corner vertex touching one triangle: |T|/6 = 1/12
        let idx = |p: Vec3| m.vertices().iter().position(|v| (*v - p).norm() < 1e-12).unwrap();
        let i10 = idx(Vec3::new(1.0, 0.0, 0.0));
        let (cols, vals) = mm.row(i10);
        let d = cols.binary_search(&i10).map(|p| vals[p]).unwrap();
        assert!((d - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn lumped_mass_sums_to_volume() {
        for mesh in [unit_square(3), unit_cube(2)] {
            let w = assemble_lumped_mass(&mesh);
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn e1h_constant_state_is_zero() {
        let mesh = unit_cube(2);
        let a = assemble_stiffness(&mesh).unwrap();
        let s = vec![0.6; mesh.n_vertices()];
        let n = vec![Vec3::new(0.0, 0.0, 1.0); mesh.n_vertices()];
        assert_eq!(energy_e1h(&a, &s, &n, 1.0), 0.0);
    }

    #[test]
    fn e1h_s_equal_one_reduces_to_dirichlet_energy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mesh = unit_cube(2);
        let a = assemble_stiffness(&mesh).unwrap();
        let s = vec![1.0; mesh.n_vertices()];
        let (_, n) = random_state(&mesh, &mut rng);
        let e = energy_e1h(&a, &s, &n, 0.0);
        // per-component Dirichlet energy of n
        let nx: Vec<f64> = n.iter().map(|v| v.x).collect();
        let ny: Vec<f64> = n.iter().map(|v| v.y).collect();
        let nz: Vec<f64> = n.iter().map(|v| v.z).collect();
        let direct = a.quadratic_form(&nx) + a.quadratic_form(&ny) + a.quadratic_form(&nz);
        assert!((e - direct).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn e1h_linear_s_constant_n() {
        let mesh = unit_square(2);
        let a = assemble_stiffness(&mesh).unwrap();
        let s: Vec<f64> = mesh.vertices().iter().map(|v| v.x).collect();
        let n = vec![Vec3::new(1.0, 0.0, 0.0); mesh.n_vertices()];
        let e = energy_e1h(&a, &s, &n, 2.0);
        assert!((e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn e2h_values() {
        let dw = DoubleWell::default();
        let cube = unit_cube(2);
        let zero = vec![0.0; cube.n_vertices()];
        assert_eq!(energy_e2h(&cube, &zero, &dw), 0.0);
        let s75 = vec![0.75; cube.n_vertices()];
        let e = energy_e2h(&cube, &s75, &dw);
        assert!((e - (-6.25)).abs() < 1e-10, "E2h(0.75) = {e}");
    }

    #[test]
    fn residual_zero_for_constant_fields() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mesh = unit_square(3);
        let a = assemble_stiffness(&mesh).unwrap();
        let (s, n) = random_state(&mesh, &mut rng);
        let n_const = vec![Vec3::new(0.0, 1.0, 0.0); mesh.n_vertices()];
        let s_const = vec![0.4; mesh.n_vertices()];
        assert_eq!(residuals(&a, &s, &n_const), (0.0, 0.0));
        let (r, rt) = residuals(&a, &s_const, &n);
        assert_eq!(r, 0.0);
        assert_eq!(rt, 0.0);
    }

    #[test]
    fn energy_inequality_with_residuals() {
        // Lemma: E1h - tilde_E1h[s,u] >= residual >= 0 on weakly acute
        // meshes, and ditto for the |s| variant
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for mesh in [unit_square(4), unit_cube(2)] {
            let a = assemble_stiffness(&mesh).unwrap();
            for kappa in [0.2, 1.0, 2.0] {
                for _ in 0..25 {
                    let (s, n) = random_state(&mesh, &mut rng);
                    let u = compute_u(&s, &n);
                    let s_abs: Vec<f64> = s.iter().map(|v| v.abs()).collect();
                    let u_abs = compute_u(&s_abs, &n);
                    let e1 = energy_e1h(&a, &s, &n, kappa);
                    let (res, res_abs) = residuals(&a, &s, &n);
                    assert!(res >= -1e-12 && res_abs >= -1e-12);
                    let t1 = tilde_energy_e1h(&a, &s, &u, kappa);
                    let t2 = tilde_energy_e1h(&a, &s_abs, &u_abs, kappa);
                    assert!(e1 - t1 >= res - 1e-10, "gap {} < residual {}", e1 - t1, res);
                    assert!(e1 - t2 >= res_abs - 1e-10);
                }
            }
        }
    }

    #[test]
    fn tilde_energy_trivial_cases() {
        let mesh = unit_square(2);
        let a = assemble_stiffness(&mesh).unwrap();
        let n = mesh.n_vertices();
        let s = vec![0.3; n];
        let u = vec![Vec3::new(0.1, 0.2, 0.0); n];
        assert!(tilde_energy_e1h(&a, &s, &u, 3.0).abs() < 1e-14);
        // kappa = 1: only the u form remains
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (s, nv) = random_state(&mesh, &mut rng);
        let u = compute_u(&s, &nv);
        let t = tilde_energy_e1h(&a, &s, &u, 1.0);
        let ux: Vec<f64> = u.iter().map(|v| v.x).collect();
        let uy: Vec<f64> = u.iter().map(|v| v.y).collect();
        let direct = a.quadratic_form(&ux) + a.quadratic_form(&uy);
        assert!((t - direct).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn d_of_n_row_sums() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mesh = unit_square(3);
        let a = assemble_stiffness(&mesh).unwrap();
        let (_, n) = random_state(&mesh, &mut rng);
        let n_const = vec![Vec3::new(1.0, 0.0, 0.0); mesh.n_vertices()];
        assert!(assemble_d_of_n(&a, &n_const).iter().all(|&d| d == 0.0));
        let d = assemble_d_of_n(&a, &n);
        // brute-force row sums over adjacency
        for i in 0..mesh.n_vertices() {
            let (cols, vals) = a.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c != i {
                    acc += -v * (n[i] - n[*c]).norm2();
                }
            }
            assert!((d[i] - acc).abs() < 1e-12 * acc.abs().max(1.0));
        }
        // diagonal consistency: sum_i D_ii s_i^2 = sum_ij A(n)_ij s_i^2
        let (s, _) = random_state(&mesh, &mut rng);
        let lhs: f64 = (0..s.len()).map(|i| d[i] * s[i] * s[i]).sum();
        let mut rhs = 0.0;
        for i in 0..s.len() {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c != i {
                    rhs += -v * (n[i] - n[*c]).norm2() * s[i] * s[i];
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn director_blocks_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mesh = unit_cube(2);
        let a = assemble_stiffness(&mesh).unwrap();
        let nvert = mesh.n_vertices();
        // s = 0 -> zero system
        let zeros = vec![0.0; nvert];
        let sys = director_system_matrix(&a, &zeros);
        assert!(sys.values.iter().all(|v| v.abs() < 1e-15));
        // s = 1 -> quadratic form is 2 * Dirichlet energy per component
        let ones = vec![1.0; nvert];
        let sys = director_system_matrix(&a, &ones);
        let v: Vec<f64> = (0..nvert).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!((sys.quadratic_form(&v) - 2.0 * a.quadratic_form(&v)).abs() < 1e-10);
        // n^T (Dt - At) n summed over components = 2 * second E1h term
        let (s, n) = random_state(&mesh, &mut rng);
        let sys = director_system_matrix(&a, &s);
        let nx: Vec<f64> = n.iter().map(|p| p.x).collect();
        let ny: Vec<f64> = n.iter().map(|p| p.y).collect();
        let nz: Vec<f64> = n.iter().map(|p| p.z).collect();
        let qf = sys.quadratic_form(&nx) + sys.quadratic_form(&ny) + sys.quadratic_form(&nz);
        let term2 = energy_e1h(&a, &s, &n, 0.0);
        assert!((qf - 2.0 * term2).abs() < 1e-10 * term2.abs().max(1.0));
        assert!(sys.max_symmetry_violation() < 1e-13);
    }

    #[test]
    fn compute_u_properties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mesh = unit_square(2);
        let (s, n) = random_state(&mesh, &mut rng);
        let u = compute_u(&s, &n);
        for i in 0..s.len() {
            assert!((u[i].norm() - s[i].abs()).abs() < 1e-12);
        }
        let zeros = vec![0.0; s.len()];
        assert!(compute_u(&zeros, &n).iter().all(|v| v.norm() == 0.0));
        let ones = vec![1.0; s.len()];
        let un = compute_u(&ones, &n);
        for i in 0..s.len() {
            assert_eq!(un[i], n[i]);
        }
    }

    #[test]
    fn error_norms_zero_for_interpolated_linear() {
        let mesh = unit_cube(2);
        let f = |x: Vec3| 2.0 * x.x - x.y + 0.5 * x.z + 1.0;
        let gf = |_: Vec3| Vec3::new(2.0, -1.0, 0.5);
        let field: Vec<f64> = mesh.vertices().iter().map(|&v| f(v)).collect();
        let (l2, h1) = scalar_error_norms(&mesh, &field, &f, &gf);
        assert!(l2 < 1e-13 && h1 < 1e-13);
    }

    #[test]
    fn quadratic_interpolation_error_decays_second_order() {
        let f = |x: Vec3| x.z * x.z;
        let gf = |x: Vec3| Vec3::new(0.0, 0.0, 2.0 * x.z);
        let mut errs = Vec::new();
        for nx in [4, 8] {
            let mesh = unit_cube(nx);
            let field: Vec<f64> = mesh.vertices().iter().map(|&v| f(v)).collect();
            let (l2, _) = scalar_error_norms(&mesh, &field, &f, &gf);
            errs.push(l2);
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 4.0).abs() < 0.2, "L2 ratio {ratio}");
    }
}
