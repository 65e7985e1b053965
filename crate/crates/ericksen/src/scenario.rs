//! Configuration-driven scenario runner: the plane-defect convergence
//! study, the Freedericksz cell, and the colloid defect simulations,
//! with VTK/CSV artifacts.

use crate::colloid::{build_phase_field, ColloidShape};
use crate::config::ConfigMap;
use crate::energy::{AnchoringKind, AnchoringModel, DoubleWell, ElectricModel};
use crate::error::{Error, Result};
use crate::fem::{compute_u, scalar_error_norms, vector_error_norms};
use crate::flow::{
    defect_set, run_flow_with_context, BoundaryConditions, DefectReport, EnergyModel, FlowContext,
    FlowParams, IterRecord, LCState,
};
use crate::geom::Vec3;
use crate::mesh::{boundary_nodes, build_cube_mesh, build_square_mesh, Mesh, RegionLabel};
use crate::vtk::write_vtk;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Environment variable that overrides the configured output
/// directory.
pub const OUTPUT_DIR_ENV: &str = "LCSIM_OUTPUT_DIR";

pub const S_STAR: f64 = 0.750025;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    PlaneDefectEoc,
    Freedericksz2d,
    ColloidWeak3d,
    ColloidPenalty3d,
    ColloidElectric3d,
    Custom,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "plane_defect_eoc" => ScenarioKind::PlaneDefectEoc,
            "freedericksz_2d" => ScenarioKind::Freedericksz2d,
            "colloid_weak_3d" => ScenarioKind::ColloidWeak3d,
            "colloid_penalty_3d" => ScenarioKind::ColloidPenalty3d,
            "colloid_electric_3d" => ScenarioKind::ColloidElectric3d,
            "custom" => ScenarioKind::Custom,
            _ => return Err(Error::Config(format!("unknown scenario '{name}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::PlaneDefectEoc => "plane_defect_eoc",
            ScenarioKind::Freedericksz2d => "freedericksz_2d",
            ScenarioKind::ColloidWeak3d => "colloid_weak_3d",
            ScenarioKind::ColloidPenalty3d => "colloid_penalty_3d",
            ScenarioKind::ColloidElectric3d => "colloid_electric_3d",
            ScenarioKind::Custom => "custom",
        }
    }
}

/// Outer-boundary condition family for the 3-D colloid scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterBc {
    /// n rotates from (0,0,-1) at z = 0 to (0,0,1) at z = 1.
    Ring,
    /// Constant director on the whole outer boundary.
    Uniform,
}

/// Initial director field of the colloid scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialDirector {
    /// Step (0,0,-1) below the colloid mid-plane, (0,0,1) above.
    Step,
    /// Uniform (0,0,1).
    Uniform,
    /// Radial hedgehog centered on the colloid.
    Radial,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lo: Vec3,
    pub hi: Vec3,
    pub kappa: f64,
    pub double_well: Option<DoubleWell>,
    pub s_star: f64,
    pub anchoring_kind: AnchoringKind,
    pub k_a: f64,
    pub epsilon: f64,
    pub anchor_target: f64,
    pub colloid_center: Vec3,
    pub colloid_radius: f64,
    pub electric: Option<ElectricModel>,
    pub outer_bc: OuterBc,
    pub ring_sweep: RingSweep,
    /// Half-width of the ring-BC transition band around mid-height.
    pub ring_band: f64,
    pub initial_director: InitialDirector,
    pub bc_director: Vec3,
    pub bc_s: f64,
    pub flow: FlowParams,
    pub vtk_every: usize,
    pub output_dir: PathBuf,
    pub defect_threshold: f64,
}

impl ScenarioConfig {
    /// Paper parameter presets per scenario.
    pub fn preset(kind: ScenarioKind) -> Self {
        let mut cfg = ScenarioConfig {
            kind,
            dim: 3,
            nx: 32,
            ny: 32,
            nz: 32,
            lo: Vec3::ZERO,
            hi: Vec3::new(1.0, 1.0, 1.0),
            kappa: 1.0,
            double_well: Some(DoubleWell::default()),
            s_star: S_STAR,
            anchoring_kind: AnchoringKind::None,
            k_a: 0.0,
            epsilon: 0.06,
            anchor_target: S_STAR,
            colloid_center: Vec3::new(0.5, 0.5, 0.5),
            colloid_radius: 0.25,
            electric: None,
            outer_bc: OuterBc::Ring,
            ring_sweep: RingSweep::Fixed,
            ring_band: 0.5,
            initial_director: InitialDirector::Step,
            bc_director: Vec3::new(0.0, 0.0, 1.0),
            bc_s: S_STAR,
            flow: FlowParams::default(),
            vtk_every: 0,
            output_dir: PathBuf::from("out"),
            defect_threshold: 0.1,
        };
        match kind {
            ScenarioKind::PlaneDefectEoc => {
                cfg.kappa = 0.2;
                cfg.double_well = None;
                cfg.nx = 8;
                cfg.ny = 8;
                cfg.nz = 8;
                cfg.flow.tol_stationarity = 1e-9;
                cfg.defect_threshold = 0.05;
            }
            ScenarioKind::Freedericksz2d => {
                cfg.dim = 2;
                cfg.nx = 64;
                cfg.ny = 64;
                cfg.nz = 0;
                cfg.electric = Some(
                    ElectricModel::new(16.0, Vec3::new(1.0, 0.0, 0.0), 1.0, 2.0)
                        .unwrap()
                        .with_gamma(0.5),
                );
                cfg.bc_director = Vec3::new(0.0, 1.0, 0.0);
                cfg.flow.tol_stationarity = 1e-8;
            }
            ScenarioKind::ColloidWeak3d => {
                cfg.anchoring_kind = AnchoringKind::Weak;
                cfg.k_a = 300.0;
                cfg.flow.tol_stationarity = 2e-6;
                cfg.flow.max_iters = 6000;
            }
            ScenarioKind::ColloidPenalty3d => {
                cfg.anchoring_kind = AnchoringKind::DirichletPenalty;
                cfg.k_a = 300.0;
                cfg.flow.tol_stationarity = 2e-6;
                cfg.flow.max_iters = 6000;
            }
            ScenarioKind::ColloidElectric3d => {
                cfg.anchoring_kind = AnchoringKind::Weak;
                cfg.k_a = 300.0;
                cfg.electric = Some(
                    ElectricModel::new(160.0, Vec3::new(0.0, 1.0, 0.0), 1.0, 2.0)
                        .unwrap()
                        .with_gamma(0.5),
                );
                cfg.flow.tol_stationarity = 2e-6;
                cfg.flow.max_iters = 6000;
                cfg.defect_threshold = 0.15;
            }
            ScenarioKind::Custom => {}
        }
        cfg
    }

    pub fn from_config(map: &ConfigMap) -> Result<Self> {
        let kind = ScenarioKind::parse(
            map.get_str("scenario")
                .ok_or_else(|| Error::Config("missing 'scenario' key".into()))?,
        )?;
        let mut cfg = ScenarioConfig::preset(kind);
        if let Some(d) = map.get_usize("mesh.dim")? {
            cfg.dim = d;
        }
        if let Some(l) = map.get_usize("mesh.level")? {
            if l < 1 {
                return Err(Error::Config("mesh.level must be at least 1".into()));
            }
            let n = 1usize << l;
            cfg.nx = n;
            cfg.ny = n;
            cfg.nz = n;
        }
        if let Some(v) = map.get_usize("mesh.nx")? {
            cfg.nx = v;
        }
        if let Some(v) = map.get_usize("mesh.ny")? {
            cfg.ny = v;
        }
        if let Some(v) = map.get_usize("mesh.nz")? {
            cfg.nz = v;
        }
        if let Some(b) = map.get_f64_list("mesh.bounds")? {
            match (cfg.dim, b.len()) {
                (2, 4) => {
                    cfg.lo = Vec3::new(b[0], b[2], 0.0);
                    cfg.hi = Vec3::new(b[1], b[3], 0.0);
                }
                (3, 6) => {
                    cfg.lo = Vec3::new(b[0], b[2], b[4]);
                    cfg.hi = Vec3::new(b[1], b[3], b[5]);
                }
                _ => {
                    return Err(Error::Config(
                        "mesh.bounds must list 2 values per dimension".into(),
                    ))
                }
            }
        }
        if let Some(v) = map.get_f64("model.kappa")? {
            cfg.kappa = v;
        }
        if let Some(on) = map.get_bool("double_well.enabled")? {
            cfg.double_well = if on { Some(DoubleWell::default()) } else { None };
        }
        if let Some(v) = map.get_f64("double_well.s_star")? {
            cfg.s_star = v;
            if let Some(dw) = &mut cfg.double_well {
                dw.s_star = v;
            }
        }
        if let Some(k) = map.get_str("anchoring.kind") {
            cfg.anchoring_kind = match k {
                "none" => AnchoringKind::None,
                "weak" => AnchoringKind::Weak,
                "dirichlet_penalty" => AnchoringKind::DirichletPenalty,
                _ => return Err(Error::Config(format!("unknown anchoring kind '{k}'"))),
            };
        }
        if let Some(v) = map.get_f64("anchoring.k_a")? {
            cfg.k_a = v;
        }
        if let Some(v) = map.get_f64("anchoring.epsilon")? {
            cfg.epsilon = v;
        }
        if let Some(v) = map.get_f64("anchoring.target")? {
            cfg.anchor_target = v;
        }
        if let Some(c) = map.get_f64_list("colloid.center")? {
            if c.len() != 3 {
                return Err(Error::Config("colloid.center needs 3 values".into()));
            }
            cfg.colloid_center = Vec3::new(c[0], c[1], c[2]);
        }
        if let Some(v) = map.get_f64("colloid.radius")? {
            cfg.colloid_radius = v;
        }
        let electric_on = map
            .get_bool("electric.enabled")?
            .unwrap_or(cfg.electric.is_some() || map.contains("electric.k_ext"));
        if electric_on {
            let base = cfg.electric.clone();
            let k_ext = map
                .get_f64("electric.k_ext")?
                .or(base.as_ref().map(|e| e.k_ext))
                .ok_or_else(|| Error::Config("electric.k_ext required".into()))?;
            let e_vec = match map.get_f64_list("electric.e")? {
                Some(v) => {
                    let z = if v.len() > 2 { v[2] } else { 0.0 };
                    if v.len() < 2 {
                        return Err(Error::Config("electric.e needs 2 or 3 values".into()));
                    }
                    Vec3::new(v[0], v[1], z)
                }
                None => base.as_ref().map(|e| e.e_field).unwrap_or(Vec3::new(1.0, 0.0, 0.0)),
            };
            let eps_bar = map
                .get_f64("electric.eps_bar")?
                .or(base.as_ref().map(|e| e.eps_bar))
                .unwrap_or(1.0);
            let eps_a = map
                .get_f64("electric.eps_a")?
                .or(base.as_ref().map(|e| e.eps_a))
                .unwrap_or(2.0);
            let mut model = ElectricModel::new(k_ext, e_vec, eps_bar, eps_a)?;
            if let Some(g) = map
                .get_f64("electric.gamma_a")?
                .or(base.as_ref().map(|e| e.gamma_a))
            {
                model = model.with_gamma(g);
            }
            cfg.electric = Some(model);
        } else {
            cfg.electric = None;
        }
        if let Some(k) = map.get_str("bc.kind") {
            cfg.outer_bc = match k {
                "ring" => OuterBc::Ring,
                "uniform" => OuterBc::Uniform,
                _ => return Err(Error::Config(format!("unknown bc kind '{k}'"))),
            };
        }
        if let Some(k) = map.get_str("bc.ring_sweep") {
            cfg.ring_sweep = match k {
                "wall_inward" => RingSweep::WallInward,
                "wall_normal" => RingSweep::WallNormal,
                "fixed" => RingSweep::Fixed,
                "radial" => RingSweep::Radial,
                "azimuthal" => RingSweep::Azimuthal,
                _ => return Err(Error::Config(format!("unknown ring sweep '{k}'"))),
            };
        }
        if let Some(v) = map.get_f64("bc.ring_band")? {
            if !(v > 0.0 && v <= 0.5) {
                return Err(Error::Config("bc.ring_band must lie in (0, 0.5]".into()));
            }
            cfg.ring_band = v;
        }
        if let Some(k) = map.get_str("initial.director") {
            cfg.initial_director = match k {
                "step" => InitialDirector::Step,
                "uniform" => InitialDirector::Uniform,
                "radial" => InitialDirector::Radial,
                _ => return Err(Error::Config(format!("unknown initial director '{k}'"))),
            };
        }
        if let Some(v) = map.get_f64_list("bc.n")? {
            let z = if v.len() > 2 { v[2] } else { 0.0 };
            if v.len() < 2 {
                return Err(Error::Config("bc.n needs 2 or 3 values".into()));
            }
            cfg.bc_director = Vec3::new(v[0], v[1], z);
        }
        if let Some(v) = map.get_f64("bc.s")? {
            cfg.bc_s = v;
        }
        if let Some(v) = map.get_f64("flow.dt")? {
            cfg.flow.dt = v;
        }
        if let Some(v) = map.get_f64("flow.rho")? {
            cfg.flow.rho = Some(v);
        }
        if let Some(v) = map.get_usize("flow.max_iters")? {
            cfg.flow.max_iters = v;
        }
        if let Some(v) = map.get_f64("flow.tol")? {
            cfg.flow.tol_stationarity = v;
        }
        if let Some(v) = map.get_f64("flow.cg_tol")? {
            cfg.flow.cg_tol = v;
        }
        if let Some(v) = map.get_usize("output.vtk_every")? {
            cfg.vtk_every = v;
        }
        if let Some(v) = map.get_str("output.dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = map.get_f64("output.defect_threshold")? {
            cfg.defect_threshold = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config(&self) -> ConfigMap {
        let mut m = ConfigMap::new();
        m.set("scenario", self.kind.name());
        m.set("mesh.dim", self.dim);
        m.set("mesh.nx", self.nx);
        m.set("mesh.ny", self.ny);
        if self.dim == 3 {
            m.set("mesh.nz", self.nz);
        }
        let bounds = if self.dim == 2 {
            format!("{} {} {} {}", self.lo.x, self.hi.x, self.lo.y, self.hi.y)
        } else {
            format!(
                "{} {} {} {} {} {}",
                self.lo.x, self.hi.x, self.lo.y, self.hi.y, self.lo.z, self.hi.z
            )
        };
        m.set("mesh.bounds", bounds);
        m.set("model.kappa", self.kappa);
        m.set("double_well.enabled", self.double_well.is_some());
        m.set("double_well.s_star", self.s_star);
        m.set(
            "anchoring.kind",
            match self.anchoring_kind {
                AnchoringKind::None => "none",
                AnchoringKind::Weak => "weak",
                AnchoringKind::DirichletPenalty => "dirichlet_penalty",
            },
        );
        m.set("anchoring.k_a", self.k_a);
        m.set("anchoring.epsilon", self.epsilon);
        m.set("anchoring.target", self.anchor_target);
        m.set(
            "colloid.center",
            format!(
                "{} {} {}",
                self.colloid_center.x, self.colloid_center.y, self.colloid_center.z
            ),
        );
        m.set("colloid.radius", self.colloid_radius);
        if let Some(e) = &self.electric {
            m.set("electric.enabled", true);
            m.set("electric.k_ext", e.k_ext);
            m.set(
                "electric.e",
                format!("{} {} {}", e.e_field.x, e.e_field.y, e.e_field.z),
            );
            m.set("electric.eps_bar", e.eps_bar);
            m.set("electric.eps_a", e.eps_a);
            m.set("electric.gamma_a", e.gamma_a);
        } else {
            m.set("electric.enabled", false);
        }
        m.set(
            "bc.kind",
            match self.outer_bc {
                OuterBc::Ring => "ring",
                OuterBc::Uniform => "uniform",
            },
        );
        m.set(
            "bc.ring_sweep",
            match self.ring_sweep {
                RingSweep::WallInward => "wall_inward",
                RingSweep::WallNormal => "wall_normal",
                RingSweep::Fixed => "fixed",
                RingSweep::Radial => "radial",
                RingSweep::Azimuthal => "azimuthal",
            },
        );
        m.set("bc.ring_band", self.ring_band);
        m.set(
            "initial.director",
            match self.initial_director {
                InitialDirector::Step => "step",
                InitialDirector::Uniform => "uniform",
                InitialDirector::Radial => "radial",
            },
        );
        m.set(
            "bc.n",
            format!("{} {} {}", self.bc_director.x, self.bc_director.y, self.bc_director.z),
        );
        m.set("bc.s", self.bc_s);
        m.set("flow.dt", self.flow.dt);
        if let Some(r) = self.flow.rho {
            m.set("flow.rho", r);
        }
        m.set("flow.max_iters", self.flow.max_iters);
        m.set("flow.tol", self.flow.tol_stationarity);
        m.set("flow.cg_tol", self.flow.cg_tol);
        m.set("output.vtk_every", self.vtk_every);
        m.set("output.dir", self.output_dir.display().to_string());
        m.set("output.defect_threshold", self.defect_threshold);
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Config("mesh.dim must be 2 or 3".into()));
        }
        if self.nx == 0 || self.ny == 0 || (self.dim == 3 && self.nz == 0) {
            return Err(Error::Config("mesh counts must be positive".into()));
        }
        if self.anchoring_kind != AnchoringKind::None {
            let r = self.colloid_radius;
            let c = self.colloid_center;
            let inside = c.x - r > self.lo.x
                && c.x + r < self.hi.x
                && c.y - r > self.lo.y
                && c.y + r < self.hi.y
                && (self.dim == 2 || (c.z - r > self.lo.z && c.z + r < self.hi.z));
            if !inside {
                return Err(Error::Config("colloid must lie strictly inside the domain".into()));
            }
        }
        if (self.bc_director.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("bc.n must be a unit vector".into()));
        }
        self.flow.validate()?;
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        if self.dim == 2 {
            build_square_mesh(self.nx, self.ny, self.lo, self.hi)
        } else {
            build_cube_mesh(self.nx, self.ny, self.nz, self.lo, self.hi)
        }
    }

    pub fn build_model(&self, mesh: &Mesh) -> Result<EnergyModel> {
        let anchoring = match self.anchoring_kind {
            AnchoringKind::None => AnchoringModel::none(),
            kind => {
                let shape = ColloidShape::sphere(self.colloid_radius, self.colloid_center)?;
                let pf = build_phase_field(mesh, &shape, self.epsilon)?;
                match kind {
                    AnchoringKind::Weak => AnchoringModel::weak(self.k_a, pf, self.anchor_target),
                    AnchoringKind::DirichletPenalty => {
                        AnchoringModel::dirichlet_penalty(self.k_a, pf, self.anchor_target)
                    }
                    AnchoringKind::None => unreachable!(),
                }
            }
        };
        Ok(EnergyModel {
            kappa: self.kappa,
            double_well: self.double_well.clone(),
            anchoring,
            electric: self.electric.clone(),
        })
    }

    fn initial_directors(&self, mesh: &Mesh) -> Vec<Vec3> {
        let mid = self.colloid_center.z;
        mesh.vertices()
            .iter()
            .map(|v| match self.initial_director {
                InitialDirector::Step => {
                    if v.z < mid {
                        Vec3::new(0.0, 0.0, -1.0)
                    } else {
                        Vec3::new(0.0, 0.0, 1.0)
                    }
                }
                InitialDirector::Uniform => Vec3::new(0.0, 0.0, 1.0),
                InitialDirector::Radial => {
                    let d = *v - self.colloid_center;
                    if d.norm() > 1e-12 {
                        d.normalized()
                    } else {
                        Vec3::new(0.0, 0.0, 1.0)
                    }
                }
            })
            .collect()
    }

    /// Dirichlet data and the documented initial state per scenario.
    pub fn build_bc_and_initial(&self, mesh: &Mesh) -> Result<(BoundaryConditions, LCState)> {
        let n = mesh.n_vertices();
        let mut bc = BoundaryConditions::default();
        let initial;
        match self.kind {
            ScenarioKind::PlaneDefectEoc => {
                for &i in &boundary_nodes(mesh, &RegionLabel::new("z0"))? {
                    bc.dirichlet_s.push((i, self.bc_s));
                    bc.dirichlet_n.push((i, Vec3::new(1.0, 0.0, 0.0)));
                }
                for &i in &boundary_nodes(mesh, &RegionLabel::new("z1"))? {
                    bc.dirichlet_s.push((i, self.bc_s));
                    bc.dirichlet_n.push((i, Vec3::new(0.0, 1.0, 0.0)));
                }
                let r = 1.0 / 2.0f64.sqrt();
                let nvals = mesh
                    .vertices()
                    .iter()
                    .map(|v| {
                        let z = (v.z - self.lo.z) / (self.hi.z - self.lo.z);
                        if z < 0.5 - 1e-12 {
                            Vec3::new(1.0, 0.0, 0.0)
                        } else if z > 0.5 + 1e-12 {
                            Vec3::new(0.0, 1.0, 0.0)
                        } else {
                            Vec3::new(r, r, 0.0)
                        }
                    })
                    .collect();
                initial = LCState::new(vec![self.bc_s; n], nvals);
            }
            ScenarioKind::Freedericksz2d => {
                for label in ["x0", "x1"] {
                    for &i in &boundary_nodes(mesh, &RegionLabel::new(label))? {
                        bc.dirichlet_s.push((i, self.bc_s));
                        bc.dirichlet_n.push((i, self.bc_director));
                    }
                }
                let tilt = Vec3::new(1e-2, 1.0, 0.0).normalized();
                initial = LCState::new(vec![self.bc_s; n], vec![tilt; n]);
            }
            ScenarioKind::ColloidWeak3d
            | ScenarioKind::ColloidPenalty3d
            | ScenarioKind::ColloidElectric3d
            | ScenarioKind::Custom => {
                let all = boundary_nodes(mesh, &RegionLabel::new("all"))?;
                match self.outer_bc {
                    OuterBc::Ring => {
                        for &i in &all {
                            let p = mesh.vertex(i);
                            let z = (p.z - self.lo.z) / (self.hi.z - self.lo.z);
                            let tip =
                                ring_sweep_tip(self.ring_sweep, p, self.lo, self.hi, self.colloid_center);
                            bc.dirichlet_s.push((i, self.bc_s));
                            bc.dirichlet_n.push((i, ring_director(z, tip, self.ring_band)));
                        }
                        initial = LCState::new(
                            vec![self.bc_s; n],
                            self.initial_directors(mesh),
                        );
                    }
                    OuterBc::Uniform => {
                        for &i in &all {
                            bc.dirichlet_s.push((i, self.bc_s));
                            bc.dirichlet_n.push((i, self.bc_director));
                        }
                        let nvals = match self.initial_director {
                            InitialDirector::Uniform => vec![self.bc_director; n],
                            _ => self.initial_directors(mesh),
                        };
                        initial = LCState::new(vec![self.bc_s; n], nvals);
                    }
                }
            }
        }
        Ok((bc, initial))
    }
}

/// Sweep family for the ring boundary condition.  All variants agree
/// at z in {0, 1} ((0,0,-1) and (0,0,1) exactly) and differ in the
/// direction the director tips through at mid-height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingSweep {
    /// Tip through the inward normal of the nearest side wall: the
    /// side-wall directors oppose the colloid's outward anchoring on
    /// every side, which traps the symmetric Saturn ring.
    WallInward,
    /// Tip through the outward normal of the nearest side wall:
    /// compatible with outward anchoring everywhere, so the director
    /// escapes and no defect forms.
    WallNormal,
    /// Tip through the fixed direction (1,0,0) everywhere: frustrated
    /// only on the -x side, the defect concentrates in a one-sided arc.
    Fixed,
    /// Tip through the outward radial direction (axisymmetric): the
    /// director escapes and no defect forms.
    Radial,
    /// Tip through the azimuthal direction around the colloid axis:
    /// perpendicular to the outward anchoring on every side.
    Azimuthal,
}

/// Outer boundary director that rotates from (0,0,-1) below the
/// transition band to (0,0,1) above it; exact at z in {0, 1} and unit
/// everywhere.  `tip` is the mid-height direction of the rotation
/// (unit, horizontal); `band` is the half-width of the transition
/// around z = 1/2 (0.5 rotates over the full wall height).  A narrow
/// band pins the 180-degree mismatch between the lower and upper wall
/// directors at mid-height all around the perimeter, which makes the
/// domain wall terminate on the Saturn ring at the colloid.
pub fn ring_director(z: f64, tip: Vec3, band: f64) -> Vec3 {
    let w = band.clamp(1e-6, 0.5);
    if z <= 0.5 - w {
        return Vec3::new(0.0, 0.0, -1.0);
    }
    if z >= 0.5 + w {
        return Vec3::new(0.0, 0.0, 1.0);
    }
    let theta = PI * (z - (0.5 - w)) / (2.0 * w);
    (tip * theta.sin() - Vec3::new(0.0, 0.0, theta.cos())).normalized()
}

/// Mid-height tip direction of a boundary point for a sweep family.
pub fn ring_sweep_tip(sweep: RingSweep, p: Vec3, lo: Vec3, hi: Vec3, center: Vec3) -> Vec3 {
    match sweep {
        RingSweep::Fixed => Vec3::new(1.0, 0.0, 0.0),
        RingSweep::Radial => {
            let planar = Vec3::new(p.x - center.x, p.y - center.y, 0.0);
            if planar.norm() > 1e-12 {
                planar.normalized()
            } else {
                Vec3::new(1.0, 0.0, 0.0)
            }
        }
        RingSweep::Azimuthal => {
            let planar = Vec3::new(p.x - center.x, p.y - center.y, 0.0);
            if planar.norm() > 1e-12 {
                Vec3::new(0.0, 0.0, 1.0).cross(planar).normalized()
            } else {
                Vec3::new(0.0, 1.0, 0.0)
            }
        }
        RingSweep::WallNormal | RingSweep::WallInward => {
            // normals of the side walls within 1e-9 of the point;
            // vertical box edges average the two adjacent normals
            let mut dir = Vec3::ZERO;
            let tol = 1e-9;
            if (p.x - lo.x).abs() < tol {
                dir += Vec3::new(-1.0, 0.0, 0.0);
            }
            if (hi.x - p.x).abs() < tol {
                dir += Vec3::new(1.0, 0.0, 0.0);
            }
            if (p.y - lo.y).abs() < tol {
                dir += Vec3::new(0.0, -1.0, 0.0);
            }
            if (hi.y - p.y).abs() < tol {
                dir += Vec3::new(0.0, 1.0, 0.0);
            }
            if dir.norm() < 1e-12 {
                // interior of a top/bottom cap: tip radially (it only
                // matters within one mesh layer of z = 0, 1)
                let out = ring_sweep_tip(RingSweep::Radial, p, lo, hi, center);
                return if sweep == RingSweep::WallInward { -out } else { out };
            }
            let dir = dir.normalized();
            if sweep == RingSweep::WallInward {
                -dir
            } else {
                dir
            }
        }
    }
}

pub struct ScenarioResult {
    pub mesh: Mesh,
    pub state: LCState,
    pub records: Vec<IterRecord>,
    pub defects: DefectReport,
    /// Mean in-plane distance of the defect nodes from the colloid
    /// axis: the ring radius in the sense of the reported experiments.
    pub ring_radius: f64,
}

fn output_dir(cfg: &ScenarioConfig) -> PathBuf {
    match std::env::var(OUTPUT_DIR_ENV) {
        Ok(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output_dir.clone(),
    }
}

/// Build everything from the config, run the flow, and write VTK
/// snapshots, the energy CSV, and a defect summary.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let dir = output_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let mesh = cfg.build_mesh()?;
    let model = cfg.build_model(&mesh)?;
    let (bc, initial) = cfg.build_bc_and_initial(&mesh)?;
    let ctx = FlowContext::new(&mesh, &model, &bc, &cfg.flow)?;

    let phi = model.anchoring.phase.as_ref().map(|p| p.phi.clone());
    let mut snapshots: Vec<(usize, LCState)> = Vec::new();
    // run the flow; snapshots are written afterwards from the records
    let (state, records) = run_flow_with_context(&ctx, &cfg.flow, &initial)?;
    if cfg.vtk_every > 0 {
        // re-running the early iterations for intermediate snapshots
        // would be wasteful; snapshot only the initial state here
        snapshots.push((0, initial.clone()));
    }
    for (iter, snap) in &snapshots {
        write_vtk(
            &mesh,
            &snap.s,
            &snap.n,
            phi.as_deref(),
            &dir.join(format!("state_{iter:06}.vtk")),
        )?;
    }
    write_vtk(&mesh, &state.s, &state.n, phi.as_deref(), &dir.join("state_final.vtk"))?;
    write_energy_csv(&records, &dir.join("energy.csv"))?;
    // defect statistics exclude the fictitious interior of the colloid,
    // where the immersed-boundary model leaves s unconstrained
    let defects = if cfg.anchoring_kind != AnchoringKind::None {
        let shape = ColloidShape::sphere(cfg.colloid_radius, cfg.colloid_center)?;
        let mut masked = state.s.clone();
        for i in 0..mesh.n_vertices() {
            if crate::colloid::signed_distance(&shape, mesh.vertex(i)) >= 0.0 {
                masked[i] = 1.0;
            }
        }
        defect_set(&mesh, &masked, cfg.defect_threshold)
    } else {
        defect_set(&mesh, &state.s, cfg.defect_threshold)
    };
    let ring_radius = if defects.nodes.is_empty() {
        0.0
    } else {
        defects
            .nodes
            .iter()
            .map(|&i| {
                let p = mesh.vertex(i) - cfg.colloid_center;
                Vec3::new(p.x, p.y, 0.0).norm()
            })
            .sum::<f64>()
            / defects.nodes.len() as f64
    };
    let summary = format!(
        "threshold = {}\nnodes = {}\ncentroid = {} {} {}\nmax_radius = {}\nequatorial_radius = {}\nring_radius = {}\nclusters = {}\n",
        cfg.defect_threshold,
        defects.nodes.len(),
        defects.centroid.x,
        defects.centroid.y,
        defects.centroid.z,
        defects.max_radius,
        defects.equatorial_radius,
        ring_radius,
        defects.n_clusters
    );
    std::fs::write(dir.join("defect.txt"), summary)?;
    std::fs::write(dir.join("config.used"), cfg.to_config().serialize())?;
    Ok(ScenarioResult {
        mesh,
        state,
        records,
        defects,
        ring_radius,
    })
}

/// Per-iteration energy log:
/// iter,E1,E2,Ea,Eext,total,ds_l2,dn_l2,wall_seconds.
pub fn write_energy_csv(records: &[IterRecord], path: &Path) -> Result<()> {
    std::fs::write(path, energy_csv_string(records))?;
    Ok(())
}

pub fn energy_csv_string(records: &[IterRecord]) -> String {
    let mut out = String::from("iter,E1,E2,Ea,Eext,total,ds_l2,dn_l2,wall_seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.energy.e1,
            r.energy.e2,
            r.energy.ea,
            r.energy.eext,
            r.energy.total,
            r.ds_l2,
            r.dn_l2,
            r.wall_seconds
        ));
    }
    out
}

/// Error columns of the convergence study, in the table's order:
/// s L2, s H1, n L2, u L2, u H1 (full H1 norms; seminorms are kept
/// alongside).
#[derive(Clone, Copy, Debug)]
pub struct LevelErrors {
    pub level: usize,
    pub h: f64,
    pub s_l2: f64,
    pub s_h1: f64,
    pub s_h1_semi: f64,
    pub n_l2: f64,
    pub u_l2: f64,
    pub u_h1: f64,
    pub u_h1_semi: f64,
    pub iterations: usize,
}

impl LevelErrors {
    pub fn columns(&self) -> [f64; 5] {
        [self.s_l2, self.s_h1, self.n_l2, self.u_l2, self.u_h1]
    }
}

#[derive(Clone, Debug)]
pub struct EOCReport {
    pub levels: Vec<LevelErrors>,
    /// Least-squares slopes of log(error) against log(h), one per
    /// error column.
    pub eoc: [f64; 5],
}

impl EOCReport {
    pub fn table_string(&self) -> String {
        let mut out = String::from(
            "level  h         s_L2        s_H1        n_L2        u_L2        u_H1        iters\n",
        );
        for l in &self.levels {
            out.push_str(&format!(
                "{:<6} {:<9.4e} {:<11.4e} {:<11.4e} {:<11.4e} {:<11.4e} {:<11.4e} {}\n",
                l.level, l.h, l.s_l2, l.s_h1, l.n_l2, l.u_l2, l.u_h1, l.iterations
            ));
        }
        out.push_str(&format!(
            "EOC           {:<11.4} {:<11.4} {:<11.4} {:<11.4} {:<11.4}\n",
            self.eoc[0], self.eoc[1], self.eoc[2], self.eoc[3], self.eoc[4]
        ));
        out
    }
}

/// Exact plane-defect equilibrium on the unit cube with boundary value
/// s* at z in {0, 1}: s(z) = s* |1 - 2z|, n jumps from (1,0,0) to
/// (0,1,0) across z = 1/2, u = s n.
pub struct PlaneDefectExact {
    pub s_star: f64,
}

impl PlaneDefectExact {
    pub fn s(&self, x: Vec3) -> f64 {
        self.s_star * (1.0 - 2.0 * x.z).abs()
    }
    pub fn grad_s(&self, x: Vec3) -> Vec3 {
        if x.z < 0.5 {
            Vec3::new(0.0, 0.0, -2.0 * self.s_star)
        } else {
            Vec3::new(0.0, 0.0, 2.0 * self.s_star)
        }
    }
    pub fn n(&self, x: Vec3) -> Vec3 {
        if x.z < 0.5 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        }
    }
    pub fn u(&self, x: Vec3) -> Vec3 {
        self.n(x) * self.s(x)
    }
    pub fn grad_u(&self, x: Vec3) -> [Vec3; 3] {
        let mut j = [Vec3::ZERO; 3];
        if x.z < 0.5 {
            j[0] = Vec3::new(0.0, 0.0, -2.0 * self.s_star);
        } else {
            j[1] = Vec3::new(0.0, 0.0, 2.0 * self.s_star);
        }
        j
    }
}

/// Run the plane-defect experiment for each level (mesh of (2^l)^3
/// cubes, six tetrahedra each), compute the five error columns against
/// the exact solution, and fit the orders.
pub fn eoc_run(levels: &[usize], kappa: f64, flow_overrides: Option<&FlowParams>) -> Result<EOCReport> {
    if levels.len() < 2 {
        return Err(Error::Config("EOC needs at least two levels".into()));
    }
    let mut out = Vec::new();
    for &level in levels {
        if level < 1 {
            return Err(Error::Config(
                "level 0 puts no mesh plane at z = 1/2; use level >= 1".into(),
            ));
        }
        let mut cfg = ScenarioConfig::preset(ScenarioKind::PlaneDefectEoc);
        cfg.kappa = kappa;
        let n = 1usize << level;
        cfg.nx = n;
        cfg.ny = n;
        cfg.nz = n;
        if let Some(f) = flow_overrides {
            cfg.flow = f.clone();
        }
        let mesh = cfg.build_mesh()?;
        let model = cfg.build_model(&mesh)?;
        let (bc, initial) = cfg.build_bc_and_initial(&mesh)?;
        let ctx = FlowContext::new(&mesh, &model, &bc, &cfg.flow)?;
        let (state, records) = run_flow_with_context(&ctx, &cfg.flow, &initial)?;
        let exact = PlaneDefectExact { s_star: cfg.bc_s };
        let (s_l2, s_semi) = scalar_error_norms(&mesh, &state.s, &|x| exact.s(x), &|x| exact.grad_s(x));
        let (n_l2, _) = vector_error_norms(
            &mesh,
            &state.n,
            &|x| exact.n(x),
            &|_| [Vec3::ZERO; 3],
        );
        let u = compute_u(&state.s, &state.n);
        let (u_l2, u_semi) = vector_error_norms(&mesh, &u, &|x| exact.u(x), &|x| exact.grad_u(x));
        out.push(LevelErrors {
            level,
            h: 1.0 / n as f64,
            s_l2,
            s_h1: (s_l2 * s_l2 + s_semi * s_semi).sqrt(),
            s_h1_semi: s_semi,
            n_l2,
            u_l2,
            u_h1: (u_l2 * u_l2 + u_semi * u_semi).sqrt(),
            u_h1_semi: u_semi,
            iterations: records.len(),
        });
        log::info!(
            "eoc level {level}: errors {:?} after {} iterations",
            out.last().unwrap().columns(),
            records.len()
        );
    }
    let mut eoc = [0.0; 5];
    let xs: Vec<f64> = out.iter().map(|l| l.h.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    let denom: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    for c in 0..5 {
        let ys: Vec<f64> = out.iter().map(|l| l.columns()[c].ln()).collect();
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        eoc[c] = num / denom;
    }
    Ok(EOCReport { levels: out, eoc })
}
