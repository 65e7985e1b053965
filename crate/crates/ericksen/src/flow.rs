//! The discrete quasi-gradient flow: tangent-space director
//! minimization, nodal projection, and the implicit convex-split
//! update of the degree of orientation, with monotone energy
//! bookkeeping.
//!
//! The tangent solve is assembled in reduced (frame) coordinates.  The
//! per-node frames make the reduced system block-sparse on the mesh
//! adjacency; Dirichlet director nodes are eliminated symmetrically.
//! A decoupled pair of n x n systems replaces the coupled solve only
//! when it is exactly equivalent: pure Ericksen energy and a director
//! field contained in a fixed plane, with frames adapted to that plane
//! (general per-node frames do NOT satisfy the cross-orthogonality the
//! splitting needs, so the coupled solve is the default).

use crate::energy::{
    electric_director_matrix, electric_s_rhs, weak_anchor_director_matrix, AnchoringKind,
    AnchoringModel, DoubleWell, ElectricModel,
};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_d_of_n, assemble_lumped_mass, assemble_mass, assemble_stiffness,
    director_system_matrix, energy_e1h, energy_e2h,
};
use crate::geom::{Mat3, Vec3};
use crate::mesh::Mesh;
use crate::quadrature::simplex_rule;
use crate::sparse::{apply_dirichlet, cg_solve, SparseMatrix};
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct LCState {
    pub s: Vec<f64>,
    pub n: Vec<Vec3>,
}

impl LCState {
    pub fn new(s: Vec<f64>, n: Vec<Vec3>) -> Self {
        LCState { s, n }
    }

    /// Largest deviation of |n_i| from 1.
    pub fn max_unit_violation(&self) -> f64 {
        self.n
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default)]
pub struct BoundaryConditions {
    pub dirichlet_s: Vec<(usize, f64)>,
    pub dirichlet_n: Vec<(usize, Vec3)>,
}

impl BoundaryConditions {
    pub fn validate(&self, n_vertices: usize) -> Result<()> {
        for &(i, _) in &self.dirichlet_s {
            if i >= n_vertices {
                return Err(Error::Model(format!("Dirichlet s node {i} out of range")));
            }
        }
        let mut s_nodes: Vec<usize> = self.dirichlet_s.iter().map(|&(i, _)| i).collect();
        s_nodes.sort_unstable();
        for &(i, q) in &self.dirichlet_n {
            if i >= n_vertices {
                return Err(Error::Model(format!("Dirichlet n node {i} out of range")));
            }
            if (q.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Model(format!(
                    "Dirichlet director at node {i} is not unit (|q| = {})",
                    q.norm()
                )));
            }
            // the director trace needs s != 0, so the n-set must sit
            // inside the s-set when both are prescribed
            if !self.dirichlet_s.is_empty() && s_nodes.binary_search(&i).is_err() {
                return Err(Error::Model(format!(
                    "Dirichlet director node {i} is not in the Dirichlet s set"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TangentPath {
    /// Decoupled when exactly valid, coupled otherwise.
    Auto,
    Coupled,
    /// Force the plane-adapted decoupled solve (errors when invalid).
    Decoupled,
}

#[derive(Clone, Debug)]
pub struct FlowParams {
    /// Pseudo-timestep of the implicit s-update.
    pub dt: f64,
    /// Minimizing-movement weight; `None` selects 1e-8 * domain volume.
    pub rho: Option<f64>,
    pub max_iters: usize,
    /// Stop when (|ds|_L2 + |dn|_L2) / dt falls below this.
    pub tol_stationarity: f64,
    pub cg_tol: f64,
    /// CG iteration cap as a multiple of the system size.
    pub cg_max_iter_factor: usize,
    pub tangent_path: TangentPath,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            dt: 1.0,
            rho: None,
            max_iters: 20_000,
            tol_stationarity: 1e-6,
            cg_tol: 1e-10,
            cg_max_iter_factor: 10,
            tangent_path: TangentPath::Auto,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Model("pseudo-timestep must be positive".into()));
        }
        if let Some(r) = self.rho {
            if r < 0.0 {
                return Err(Error::Model("minimizing-movement weight must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EnergyModel {
    pub kappa: f64,
    pub double_well: Option<DoubleWell>,
    pub anchoring: AnchoringModel,
    pub electric: Option<ElectricModel>,
}

impl EnergyModel {
    pub fn ericksen_only(kappa: f64) -> Self {
        EnergyModel {
            kappa,
            double_well: None,
            anchoring: AnchoringModel::none(),
            electric: None,
        }
    }

    fn is_pure_ericksen(&self) -> bool {
        self.anchoring.kind == AnchoringKind::None && self.electric.is_none()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EnergyBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub ea: f64,
    pub eext: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: EnergyBreakdown,
    pub ds_l2: f64,
    pub dn_l2: f64,
    pub wall_seconds: f64,
}

/// Per-node orthonormal tangent frame; `w` is zero in 2-D where the
/// tangent space is one-dimensional.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub q: Vec3,
    pub w: Vec3,
}

/// Orthonormal frames {n_i, q_i, w_i}: in 3-D, q_i is the canonical
/// axis of smallest |component| orthogonalized against n_i and
/// w_i = n_i x q_i; in 2-D, q_i is n_i rotated by +90 degrees.
pub fn tangent_frame(n: &[Vec3], dim: usize) -> Vec<Frame> {
    n.iter()
        .map(|&ni| {
            if dim == 2 {
                Frame {
                    q: Vec3::new(-ni.y, ni.x, 0.0),
                    w: Vec3::ZERO,
                }
            } else {
                let mut axis = 0;
                let mut best = ni.x.abs();
                if ni.y.abs() < best {
                    axis = 1;
                    best = ni.y.abs();
                }
                if ni.z.abs() < best {
                    axis = 2;
                }
                let e = Vec3::axis(axis);
                let q = (e - ni * e.dot(ni)).normalized();
                Frame { q, w: ni.cross(q) }
            }
        })
        .collect()
}

/// Normal of a plane containing every director, if one exists within
/// the given relative tolerance of the nodal Gram matrix.
pub fn coplanar_normal(n: &[Vec3], rel_tol: f64) -> Option<Vec3> {
    let mut gram = Mat3::ZERO;
    for v in n {
        gram += Mat3::outer(*v, *v);
    }
    let (evals, evecs) = jacobi_eigen_sym3(&gram);
    let mut k = 0;
    for i in 1..3 {
        if evals[i] < evals[k] {
            k = i;
        }
    }
    if evals[k] <= rel_tol * n.len() as f64 {
        Some(evecs[k])
    } else {
        None
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi
/// rotations.
fn jacobi_eigen_sym3(a: &Mat3) -> ([f64; 3], [Vec3; 3]) {
    let mut m = a.m;
    let mut v = Mat3::identity().m;
    for _ in 0..64 {
        // largest off-diagonal
        let (mut p, mut q, mut big) = (0usize, 1usize, m[0][1].abs());
        if m[0][2].abs() > big {
            p = 0;
            q = 2;
            big = m[0][2].abs();
        }
        if m[1][2].abs() > big {
            p = 1;
            q = 2;
            big = m[1][2].abs();
        }
        if big < 1e-300 || big < 1e-16 * (m[0][0].abs() + m[1][1].abs() + m[2][2].abs()).max(1e-300) {
            break;
        }
        let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        let mpp = m[p][p];
        let mqq = m[q][q];
        let mpq = m[p][q];
        m[p][p] = mpp - t * mpq;
        m[q][q] = mqq + t * mpq;
        m[p][q] = 0.0;
        m[q][p] = 0.0;
        for k in 0..3 {
            if k != p && k != q {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[p][k] = m[k][p];
                m[k][q] = s * mkp + c * mkq;
                m[q][k] = m[k][q];
            }
        }
        for k in 0..3 {
            let vkp = v[k][p];
            let vkq = v[k][q];
            v[k][p] = c * vkp - s * vkq;
            v[k][q] = s * vkp + c * vkq;
        }
    }
    (
        [m[0][0], m[1][1], m[2][2]],
        [
            Vec3::new(v[0][0], v[1][0], v[2][0]),
            Vec3::new(v[0][1], v[1][1], v[2][1]),
            Vec3::new(v[0][2], v[1][2], v[2][2]),
        ],
    )
}

/// Precomputed assembly shared across flow iterations.
pub struct FlowContext<'a> {
    pub mesh: &'a Mesh,
    pub model: &'a EnergyModel,
    pub bc: &'a BoundaryConditions,
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub lumped: Vec<f64>,
    pub volume: f64,
    /// Raw phase-weight forms (Q, q, q0) without the K_a C0 eps factor.
    anchor_weight: Option<(SparseMatrix, Vec<f64>, f64)>,
    /// M + dt 2 kappa K (+ dt 2 c0 M) (+ dt K_a C0 eps Q): the constant
    /// part of the step (c) system.
    step_c_base: SparseMatrix,
    step_c_diag_pos: Vec<Option<usize>>,
    dirichlet_n_mask: Vec<bool>,
    dt: f64,
}

impl<'a> FlowContext<'a> {
    pub fn new(
        mesh: &'a Mesh,
        model: &'a EnergyModel,
        bc: &'a BoundaryConditions,
        params: &FlowParams,
    ) -> Result<Self> {
        params.validate()?;
        bc.validate(mesh.n_vertices())?;
        let stiffness = assemble_stiffness(mesh)?;
        let mass = assemble_mass(mesh)?;
        let lumped = assemble_lumped_mass(mesh);
        let volume: f64 = lumped.iter().sum();
        let anchor_weight = match model.anchoring.kind {
            AnchoringKind::None => None,
            _ => Some(crate::energy::assemble_phase_weight(mesh, model.anchoring.phase()?)?),
        };
        let dt = params.dt;
        let n = mesh.n_vertices();
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mass_coeff = match &model.double_well {
            Some(dw) => 1.0 + 2.0 * dw.c0() * dt,
            None => 1.0,
        };
        for i in 0..n {
            let (cols, vals) = mass.row(i);
            for (c, v) in cols.iter().zip(vals) {
                trips.push((i, *c, mass_coeff * v));
            }
            let (cols, vals) = stiffness.row(i);
            for (c, v) in cols.iter().zip(vals) {
                trips.push((i, *c, 2.0 * model.kappa * dt * v));
            }
        }
        if let Some((q_mat, _, _)) = &anchor_weight {
            let coeff = model.anchoring.coeff()?;
            for i in 0..n {
                let (cols, vals) = q_mat.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    trips.push((i, *c, dt * coeff * v));
                }
            }
        }
        let mut step_c_base = SparseMatrix::from_triplets(n, n, &trips)?;
        step_c_base.symmetric = true;
        let step_c_diag_pos = step_c_base.diagonal_positions();
        let mut dirichlet_n_mask = vec![false; n];
        for &(i, _) in &bc.dirichlet_n {
            dirichlet_n_mask[i] = true;
        }
        Ok(FlowContext {
            mesh,
            model,
            bc,
            stiffness,
            mass,
            lumped,
            volume,
            anchor_weight,
            step_c_base,
            step_c_diag_pos,
            dirichlet_n_mask,
            dt,
        })
    }

    pub fn rho(&self, params: &FlowParams) -> f64 {
        params.rho.unwrap_or(1e-8 * self.volume)
    }

    fn anchoring_director_blocks(&self, s: &[f64]) -> Result<Option<(Vec<Mat3>, Option<Vec<Vec3>>)>> {
        match self.model.anchoring.kind {
            AnchoringKind::None => Ok(None),
            AnchoringKind::Weak => {
                let blocks = weak_anchor_director_matrix(&self.lumped, s, &self.model.anchoring)?;
                Ok(Some((blocks, None)))
            }
            AnchoringKind::DirichletPenalty => {
                let (blocks, rhs) =
                    crate::energy::penalty_director_terms(&self.lumped, s, &self.model.anchoring)?;
                Ok(Some((blocks, Some(rhs))))
            }
        }
    }

    /// Nodal diagonal weights of the anchoring s-variation (the lumped
    /// beta_i part; the Q part lives in `step_c_base`).
    fn anchoring_s_diag(&self, n: &[Vec3]) -> Result<Option<Vec<f64>>> {
        let anch = &self.model.anchoring;
        let pf = match anch.kind {
            AnchoringKind::None => return Ok(None),
            _ => anch.phase()?,
        };
        let coeff = anch.coeff()?;
        let mut diag = Vec::with_capacity(n.len());
        match anch.kind {
            AnchoringKind::Weak => {
                for i in 0..n.len() {
                    let g = pf.grad_phi[i];
                    let beta = n[i].norm2() * g.norm2() - g.dot(n[i]).powi(2);
                    diag.push(coeff * self.lumped[i] * beta);
                }
            }
            AnchoringKind::DirichletPenalty => {
                for i in 0..n.len() {
                    let g = pf.grad_phi[i];
                    let dev = n[i] * g.norm() - g;
                    diag.push(coeff * self.lumped[i] * dev.norm2());
                }
            }
            AnchoringKind::None => unreachable!(),
        }
        Ok(Some(diag))
    }
}

/// Energy of the current state, component by component.
pub fn energy_total(ctx: &FlowContext, state: &LCState) -> Result<EnergyBreakdown> {
    let e1 = energy_e1h(&ctx.stiffness, &state.s, &state.n, ctx.model.kappa);
    let e2 = match &ctx.model.double_well {
        Some(dw) => energy_e2h(ctx.mesh, &state.s, dw),
        None => 0.0,
    };
    let ea = match ctx.model.anchoring.kind {
        AnchoringKind::None => 0.0,
        _ => {
            let anch = &ctx.model.anchoring;
            let pf = anch.phase()?;
            let coeff = anch.coeff()?;
            let (q_mat, q_vec, q0) = ctx.anchor_weight.as_ref().unwrap();
            let mut lumped_part = 0.0;
            for i in 0..state.s.len() {
                let g = pf.grad_phi[i];
                let si2 = state.s[i] * state.s[i];
                lumped_part += match anch.kind {
                    AnchoringKind::Weak => {
                        ctx.lumped[i]
                            * si2
                            * (state.n[i].norm2() * g.norm2() - g.dot(state.n[i]).powi(2))
                    }
                    AnchoringKind::DirichletPenalty => {
                        ctx.lumped[i] * si2 * (state.n[i] * g.norm() - g).norm2()
                    }
                    AnchoringKind::None => 0.0,
                };
            }
            let g = anch.target;
            let misfit = q_mat.quadratic_form(&state.s)
                - 2.0 * g * q_vec.iter().zip(&state.s).map(|(a, b)| a * b).sum::<f64>()
                + g * g * q0;
            0.5 * coeff * (lumped_part + misfit)
        }
    };
    let eext = match &ctx.model.electric {
        Some(e) => crate::energy::electric_energy(&ctx.lumped, &state.s, &state.n, e),
        None => 0.0,
    };
    Ok(EnergyBreakdown {
        e1,
        e2,
        ea,
        eext,
        total: e1 + e2 + ea + eext,
    })
}

/// The tangent system ingredients of Step (a): reduced symmetric
/// matrix over tangent coefficients (Dirichlet rows eliminated),
/// right-hand side, and the per-node frames used for the reduction.
pub struct DirectorSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub frames: Vec<Frame>,
    /// Tangent components per node (dim - 1).
    pub n_comp: usize,
}

/// Assemble the coupled tangent system.  The full-space matrix is
/// blockdiag_d(Dtilde - Atilde) plus node blocks from anchoring,
/// electric, and minimizing-movement terms; the right-hand side is
/// the negated director variation at the current state.
pub fn assemble_director_system(
    ctx: &FlowContext,
    state: &LCState,
    params: &FlowParams,
) -> Result<DirectorSystem> {
    let n = ctx.mesh.n_vertices();
    let dim = ctx.mesh.dim();
    let n_comp = dim - 1;
    let es = director_system_matrix(&ctx.stiffness, &state.s);
    let rho = ctx.rho(params);

    // node blocks of the energy Hessian (without the rho term) and the
    // penalty load
    let mut blocks = vec![Mat3::ZERO; n];
    let mut load: Option<Vec<Vec3>> = None;
    if let Some((ab, arhs)) = ctx.anchoring_director_blocks(&state.s)? {
        for i in 0..n {
            blocks[i] += ab[i];
        }
        load = arhs;
    }
    if let Some(e) = &ctx.model.electric {
        let eb = electric_director_matrix(&ctx.lumped, &state.s, e);
        for i in 0..n {
            blocks[i] += eb[i];
        }
    }

    // full-space rhs C_i = L_i - (Es n)_i - blocks_i n_i
    let mut c_full = vec![Vec3::ZERO; n];
    for i in 0..n {
        let (cols, vals) = es.row(i);
        let mut acc = Vec3::ZERO;
        for (c, v) in cols.iter().zip(vals) {
            acc += state.n[*c] * *v;
        }
        let mut ci = -acc - blocks[i].mul_vec(state.n[i]);
        if let Some(l) = &load {
            ci += l[i];
        }
        c_full[i] = ci;
    }

    let frames = tangent_frame(&state.n, dim);
    let frame_vec = |f: &Frame, alpha: usize| if alpha == 0 { f.q } else { f.w };

    // reduced CSR on the Es pattern with n_comp x n_comp blocks
    let nr = n * n_comp;
    let mut row_offsets = Vec::with_capacity(nr + 1);
    row_offsets.push(0usize);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        let (cols, vals) = es.row(i);
        for alpha in 0..n_comp {
            let fi = frame_vec(&frames[i], alpha);
            for (c, v) in cols.iter().zip(vals) {
                let j = *c;
                for beta in 0..n_comp {
                    let fj = frame_vec(&frames[j], beta);
                    let mut entry = v * fi.dot(fj);
                    if j == i {
                        let mut bi = blocks[i];
                        let rw = 2.0 * rho * ctx.lumped[i];
                        for k in 0..3 {
                            bi.m[k][k] += rw;
                        }
                        entry += fi.dot(bi.mul_vec(fj));
                    }
                    col_indices.push(j * n_comp + beta);
                    values.push(entry);
                }
            }
            row_offsets.push(col_indices.len());
        }
    }
    let mut matrix = SparseMatrix {
        n_rows: nr,
        n_cols: nr,
        row_offsets,
        col_indices,
        values,
        symmetric: true,
    };
    let mut rhs = vec![0.0; nr];
    for i in 0..n {
        for alpha in 0..n_comp {
            rhs[i * n_comp + alpha] = frame_vec(&frames[i], alpha).dot(c_full[i]);
        }
    }
    let fixed: Vec<(usize, f64)> = ctx
        .bc
        .dirichlet_n
        .iter()
        .flat_map(|&(i, _)| (0..n_comp).map(move |a| (i * n_comp + a, 0.0)))
        .collect();
    apply_dirichlet(&mut matrix, &mut rhs, &fixed);
    debug_assert!(matrix.max_symmetry_violation() < 1e-10);
    Ok(DirectorSystem {
        matrix,
        rhs,
        frames,
        n_comp,
    })
}

fn solve_tangent_coupled(
    ctx: &FlowContext,
    state: &LCState,
    params: &FlowParams,
) -> Result<Vec<Vec3>> {
    let sys = assemble_director_system(ctx, state, params)?;
    let nr = sys.matrix.n_rows;
    let (coef, rep) = cg_solve(
        &sys.matrix,
        &sys.rhs,
        &vec![0.0; nr],
        params.cg_tol,
        params.cg_max_iter_factor * nr,
        None,
    )?;
    if !rep.converged {
        return Err(Error::Solver(format!(
            "tangent solve did not converge ({} iterations, residual {:.3e})",
            rep.iterations, rep.final_residual_norm
        )));
    }
    let n = ctx.mesh.n_vertices();
    let mut t = vec![Vec3::ZERO; n];
    for i in 0..n {
        if ctx.dirichlet_n_mask[i] {
            continue;
        }
        let mut ti = sys.frames[i].q * coef[i * sys.n_comp];
        if sys.n_comp == 2 {
            ti += sys.frames[i].w * coef[i * sys.n_comp + 1];
        }
        t[i] = ti;
    }
    Ok(t)
}

/// Plane-adapted decoupled solve: with every director orthogonal to a
/// fixed unit normal y, taking q_i = y and w_i = n_i x y makes the
/// cross terms vanish identically (q_i . w_j = y . (n_j x y) = 0), so
/// the two n x n systems are exactly the coupled system.
fn solve_tangent_decoupled(
    ctx: &FlowContext,
    state: &LCState,
    params: &FlowParams,
    normal: Vec3,
) -> Result<Vec<Vec3>> {
    if !ctx.model.is_pure_ericksen() {
        return Err(Error::Solver(
            "decoupled tangent path requires a pure Ericksen energy".into(),
        ));
    }
    let n = ctx.mesh.n_vertices();
    let es = director_system_matrix(&ctx.stiffness, &state.s);
    let rho = ctx.rho(params);
    let w_frames: Vec<Vec3> = state.n.iter().map(|&ni| ni.cross(normal)).collect();

    // q-system: A = Es + 2 rho diag(w_l); rhs_i = y . C_i
    let mut a_q = es.clone();
    let diag_pos = a_q.diagonal_positions();
    for i in 0..n {
        if let Some(p) = diag_pos[i] {
            a_q.values[p] += 2.0 * rho * ctx.lumped[i];
        }
    }
    // w-system: A_ij = Es_ij (w_i . w_j) + 2 rho diag
    let mut a_w = es.clone();
    for i in 0..n {
        let lo = a_w.row_offsets[i];
        let hi = a_w.row_offsets[i + 1];
        for p in lo..hi {
            let j = a_w.col_indices[p];
            a_w.values[p] *= w_frames[i].dot(w_frames[j]);
        }
        if let Some(p) = diag_pos[i] {
            a_w.values[p] += 2.0 * rho * ctx.lumped[i];
        }
    }
    let mut c_q = vec![0.0; n];
    let mut c_w = vec![0.0; n];
    for i in 0..n {
        let (cols, vals) = es.row(i);
        let mut acc = Vec3::ZERO;
        for (c, v) in cols.iter().zip(vals) {
            acc += state.n[*c] * *v;
        }
        c_q[i] = -normal.dot(acc);
        c_w[i] = -w_frames[i].dot(acc);
    }
    let fixed: Vec<(usize, f64)> = ctx.bc.dirichlet_n.iter().map(|&(i, _)| (i, 0.0)).collect();
    apply_dirichlet(&mut a_q, &mut c_q, &fixed);
    apply_dirichlet(&mut a_w, &mut c_w, &fixed);
    let cap = params.cg_max_iter_factor * n;
    let (f, rep_f) = cg_solve(&a_q, &c_q, &vec![0.0; n], params.cg_tol, cap, None)?;
    let (g, rep_g) = cg_solve(&a_w, &c_w, &vec![0.0; n], params.cg_tol, cap, None)?;
    if !rep_f.converged || !rep_g.converged {
        return Err(Error::Solver("decoupled tangent solve did not converge".into()));
    }
    let mut t = vec![Vec3::ZERO; n];
    for i in 0..n {
        if ctx.dirichlet_n_mask[i] {
            continue;
        }
        t[i] = normal * f[i] + w_frames[i] * g[i];
    }
    Ok(t)
}

/// Step (a): minimize the energy over tangential variations.  The
/// returned update is nodally orthogonal to the current director.
pub fn step_a_minimize(ctx: &FlowContext, state: &LCState, params: &FlowParams) -> Result<Vec<Vec3>> {
    match params.tangent_path {
        TangentPath::Coupled => solve_tangent_coupled(ctx, state, params),
        TangentPath::Decoupled => {
            if ctx.mesh.dim() == 2 {
                // the 2-D tangent space is one-dimensional; the coupled
                // builder already produces a single n x n system
                return solve_tangent_coupled(ctx, state, params);
            }
            let normal = coplanar_normal(&state.n, 1e-18).ok_or_else(|| {
                Error::Solver("decoupled tangent path requires a coplanar director field".into())
            })?;
            solve_tangent_decoupled(ctx, state, params, normal)
        }
        TangentPath::Auto => {
            if ctx.mesh.dim() == 3 && ctx.model.is_pure_ericksen() {
                if let Some(normal) = coplanar_normal(&state.n, 1e-18) {
                    return solve_tangent_decoupled(ctx, state, params, normal);
                }
            }
            solve_tangent_coupled(ctx, state, params)
        }
    }
}

/// Step (b): nodal projection back to the unit sphere.  Nodes with a
/// zero update (in particular Dirichlet nodes) keep their director
/// bit-identical.
pub fn step_b_project(n: &[Vec3], t: &[Vec3]) -> Result<Vec<Vec3>> {
    let mut out = Vec::with_capacity(n.len());
    for i in 0..n.len() {
        if t[i] == Vec3::ZERO {
            out.push(n[i]);
            continue;
        }
        let w = n[i] + t[i];
        let norm = w.norm();
        if norm < 1.0 - 1e-12 {
            return Err(Error::Flow(format!(
                "projection pre-condition violated at node {i}: |n + t| = {norm}"
            )));
        }
        out.push(w * (1.0 / norm));
    }
    Ok(out)
}

/// Step (c): implicit convex-split update of the degree of
/// orientation with the director held at n^{k+1}.
pub fn step_c_s_update(
    ctx: &FlowContext,
    s_old: &[f64],
    n_new: &[Vec3],
    params: &FlowParams,
) -> Result<Vec<f64>> {
    let n = ctx.mesh.n_vertices();
    let dt = params.dt;
    if (dt - ctx.dt).abs() > 1e-15 * dt.abs() {
        return Err(Error::Flow("flow context was built for a different timestep".into()));
    }
    let mut sys = ctx.step_c_base.clone();
    let d_of_n = assemble_d_of_n(&ctx.stiffness, n_new);
    let anchor_diag = ctx.anchoring_s_diag(n_new)?;
    for i in 0..n {
        if let Some(p) = ctx.step_c_diag_pos[i] {
            let mut add = dt * d_of_n[i];
            if let Some(ad) = &anchor_diag {
                add += dt * ad[i];
            }
            sys.values[p] += add;
        }
    }
    let mut rhs = ctx.mass.spmv(s_old);
    if let Some(dw) = &ctx.model.double_well {
        let b = assemble_convex_split_load(ctx.mesh, s_old, dw);
        for i in 0..n {
            rhs[i] += dt * b[i];
        }
    }
    if ctx.model.anchoring.kind != AnchoringKind::None {
        let coeff = ctx.model.anchoring.coeff()?;
        let g = ctx.model.anchoring.target;
        let (_, q_vec, _) = ctx.anchor_weight.as_ref().unwrap();
        for i in 0..n {
            rhs[i] += dt * coeff * g * q_vec[i];
        }
    }
    if let Some(e) = &ctx.model.electric {
        let b_e = electric_s_rhs(&ctx.lumped, n_new, e);
        for i in 0..n {
            rhs[i] -= dt * b_e[i];
        }
    }
    apply_dirichlet(&mut sys, &mut rhs, &ctx.bc.dirichlet_s);
    let (s_new, rep) = cg_solve(
        &sys,
        &rhs,
        s_old,
        params.cg_tol,
        params.cg_max_iter_factor * n,
        None,
    )?;
    if !rep.converged {
        return Err(Error::Solver(format!(
            "s-update did not converge ({} iterations, residual {:.3e})",
            rep.iterations, rep.final_residual_norm
        )));
    }
    Ok(s_new)
}

/// Load vector B_i = int psi_e'(s^k) phi_i of the explicit convex-split
/// part, by degree-4 quadrature (exact: psi_e' is cubic).
pub fn assemble_convex_split_load(mesh: &Mesh, s: &[f64], dw: &DoubleWell) -> Vec<f64> {
    let rule = simplex_rule(mesh.dim());
    let k = mesh.dim() + 1;
    let mut b = vec![0.0; s.len()];
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell_volume(c);
        let v = mesh.cell(c);
        for (pt, w) in rule.points.iter().zip(&rule.weights) {
            let mut sh = 0.0;
            for a in 0..k {
                sh += pt[a] * s[v[a]];
            }
            let dpe = dw.eval(sh).dpsi_e;
            for a in 0..k {
                b[v[a]] += vol * w * dpe * pt[a];
            }
        }
    }
    b
}

fn l2_norm_mass(mass: &SparseMatrix, v: &[f64]) -> f64 {
    mass.quadratic_form(v).max(0.0).sqrt()
}

fn l2_norm_mass_vec(mass: &SparseMatrix, v: &[Vec3]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for r in 0..3 {
        let comp: Vec<f64> = (0..n).map(|i| v[i][r]).collect();
        acc += mass.quadratic_form(&comp);
    }
    acc.max(0.0).sqrt()
}

/// Iterate Steps (a)-(c) until stationarity or the iteration cap.
/// The total energy is asserted monotone (with 1e-10 |E| slack per
/// step); an increase aborts with diagnostics.
pub fn run_flow(
    mesh: &Mesh,
    model: &EnergyModel,
    bc: &BoundaryConditions,
    params: &FlowParams,
    initial: &LCState,
) -> Result<(LCState, Vec<IterRecord>)> {
    let ctx = FlowContext::new(mesh, model, bc, params)?;
    run_flow_with_context(&ctx, params, initial)
}

pub fn run_flow_with_context(
    ctx: &FlowContext,
    params: &FlowParams,
    initial: &LCState,
) -> Result<(LCState, Vec<IterRecord>)> {
    let n = ctx.mesh.n_vertices();
    if initial.s.len() != n || initial.n.len() != n {
        return Err(Error::Flow("initial state has wrong length".into()));
    }
    let mut state = initial.clone();
    // impose Dirichlet data on the initial state
    for &(i, v) in &ctx.bc.dirichlet_s {
        state.s[i] = v;
    }
    for &(i, q) in &ctx.bc.dirichlet_n {
        state.n[i] = q;
    }
    let viol = state.max_unit_violation();
    if viol > 1e-12 {
        return Err(Error::Flow(format!(
            "initial director is not nodally unit (violation {viol:.3e})"
        )));
    }
    if let Some(&bad) = state.s.iter().find(|&&v| v <= -0.5 || v >= 1.0) {
        log::warn!("initial degree of orientation {bad} outside (-1/2, 1)");
    }

    let mut records = Vec::new();
    let mut energy_old = energy_total(ctx, &state)?;
    let t0 = Instant::now();
    for iter in 0..params.max_iters {
        let t = step_a_minimize(ctx, &state, params)?;
        let n_new = step_b_project(&state.n, &t)?;
        let s_new = step_c_s_update(ctx, &state.s, &n_new, params)?;

        let ds: Vec<f64> = (0..n).map(|i| s_new[i] - state.s[i]).collect();
        let dn: Vec<Vec3> = (0..n).map(|i| n_new[i] - state.n[i]).collect();
        let ds_l2 = l2_norm_mass(&ctx.mass, &ds);
        let dn_l2 = l2_norm_mass_vec(&ctx.mass, &dn);

        state.s = s_new;
        state.n = n_new;
        let energy_new = energy_total(ctx, &state)?;
        // roundoff floor: component-scale epsilon noise plus a
        // state-independent numerical zero for all-zero energies
        let scale = energy_old.e1.abs()
            + energy_old.e2.abs()
            + energy_old.ea.abs()
            + energy_old.eext.abs();
        let slack = 1e-10 * energy_old.total.abs()
            + f64::EPSILON * (scale + f64::EPSILON * n as f64);
        if energy_new.total > energy_old.total + slack {
            let (smin, smax) = state
                .s
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            log::error!(
                "energy increased at iteration {iter}: {} -> {} (ds {ds_l2:.3e}, dn {dn_l2:.3e}, s in [{smin}, {smax}])",
                energy_old.total,
                energy_new.total
            );
            return Err(Error::Flow(format!(
                "energy increased at iteration {iter}: {} -> {}",
                energy_old.total, energy_new.total
            )));
        }
        records.push(IterRecord {
            iter,
            energy: energy_new,
            ds_l2,
            dn_l2,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
        energy_old = energy_new;
        if (ds_l2 + dn_l2) / params.dt < params.tol_stationarity {
            break;
        }
    }
    if let Some(&bad) = state.s.iter().find(|&&v| v <= -0.5 || v >= 1.0) {
        log::warn!("equilibrium degree of orientation {bad} outside (-1/2, 1)");
    }
    Ok((state, records))
}

/// Nodes where |s| falls below the threshold, with geometric
/// diagnostics for defect rings.
#[derive(Clone, Debug)]
pub struct DefectReport {
    pub nodes: Vec<usize>,
    pub centroid: Vec3,
    /// Largest distance from the centroid over defect nodes.
    pub max_radius: f64,
    /// Largest distance from the centroid after projecting out the z
    /// offset (the colloid's equatorial plane).
    pub equatorial_radius: f64,
    /// Connected components of the defect set under mesh adjacency.
    pub n_clusters: usize,
}

pub fn defect_set(mesh: &Mesh, s: &[f64], threshold: f64) -> DefectReport {
    assert!(threshold > 0.0, "defect threshold must be positive");
    let nodes: Vec<usize> = (0..s.len()).filter(|&i| s[i].abs() < threshold).collect();
    if nodes.is_empty() {
        return DefectReport {
            nodes,
            centroid: Vec3::ZERO,
            max_radius: 0.0,
            equatorial_radius: 0.0,
            n_clusters: 0,
        };
    }
    let mut centroid = Vec3::ZERO;
    for &i in &nodes {
        centroid += mesh.vertex(i);
    }
    centroid = centroid * (1.0 / nodes.len() as f64);
    let mut max_radius: f64 = 0.0;
    let mut equatorial_radius: f64 = 0.0;
    for &i in &nodes {
        let d = mesh.vertex(i) - centroid;
        max_radius = max_radius.max(d.norm());
        equatorial_radius = equatorial_radius.max(Vec3::new(d.x, d.y, 0.0).norm());
    }
    // connected components over mesh edges restricted to defect nodes
    let mut in_set = vec![false; s.len()];
    for &i in &nodes {
        in_set[i] = true;
    }
    let k = mesh.dim() + 1;
    let mut adj: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for c in 0..mesh.n_cells() {
        let v = mesh.cell(c);
        for a in 0..k {
            for b in a + 1..k {
                if in_set[v[a]] && in_set[v[b]] {
                    adj.entry(v[a]).or_default().push(v[b]);
                    adj.entry(v[b]).or_default().push(v[a]);
                }
            }
        }
    }
    let mut visited: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let mut n_clusters = 0;
    for &start in &nodes {
        if visited.contains(&start) {
            continue;
        }
        n_clusters += 1;
        let mut stack = vec![start];
        visited.insert(start);
        while let Some(u) = stack.pop() {
            if let Some(next) = adj.get(&u) {
                for &v in next {
                    if visited.insert(v) {
                        stack.push(v);
                    }
                }
            }
        }
    }
    DefectReport {
        nodes,
        centroid,
        max_radius,
        equatorial_radius,
        n_clusters,
    }
}
