//! Simulation driver: healthy baseline solve and the loosely-coupled
//! implicit Euler loop.
//!
//! Each step first solves the quasi-static three-compartment pressure system
//! with the coupling coefficients evaluated at the lagged misfolded
//! concentration ũⁿ, then advances the two protein concentrations with
//! implicit Euler, each using the other's lagged value in the conversion
//! term. Pressures at a time level are therefore functions of ũⁿ alone.

use std::sync::Arc;

use crate::assembly::{
    assemble_load, assemble_mass, assemble_mass_cached, assemble_sipg, assemble_sipg_cached,
    AssembledOperator, DirichletSpec, QuadratureValues, ScalarCoefficient, SymTensor2,
    TensorCoefficient,
};
use crate::error::{Error, Result};
use crate::linsolve::{
    compose_block_cached, solve_cg, BlockSystem, DirectSolver, Preconditioner, SolverKind,
};
use crate::mesh::{BoundaryTag, Mesh, SubdomainSpec};
use crate::model::{
    diffusion_tensor, hypoperfusion_ratio, modulated_rates_at, transfer_coefficient,
    PhysicalParams, MM2_TO_M2,
};
use crate::space::{build_space, DgSpace, FieldRole, FieldVector};
use crate::sparse::{CsrPattern, SparseMatrix};
use crate::Point2;

/// Base-coefficient overrides inside a subdomain (vascular injury). Only the
/// supplied coefficients are overridden; the sigmoid floors and
/// sensitivities stay global.
#[derive(Debug, Clone, PartialEq)]
pub struct InjuryOverride {
    pub region: SubdomainSpec,
    /// [(Pa·s)⁻¹]
    pub beta_ac: Option<f64>,
    /// [(Pa·s)⁻¹]
    pub beta_cv: Option<f64>,
    /// [mm²·(Pa·s)⁻¹]
    pub k_c: Option<f64>,
}

/// Synthetic axonal fiber field for the anisotropic diffusion tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiberField {
    None,
    Uniform([f64; 2]),
}

/// Constant background plus seeded disks for the misfolded initial datum;
/// inside a seed the amplitude replaces the background.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: f64,
    pub util0: f64,
    pub seeds: Vec<Seed>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub region: SubdomainSpec,
    pub amplitude: f64,
}

impl InitialData {
    fn util_at(&self, x: Point2) -> f64 {
        for seed in &self.seeds {
            if seed.region.contains(x) {
                return seed.amplitude;
            }
        }
        self.util0
    }
}

/// Everything fixed over a run: spaces, parameters and the operators that do
/// not depend on the state.
pub struct Problem {
    pub mesh: Arc<Mesh>,
    pub space_pressure: Arc<DgSpace>,
    pub space_protein: Arc<DgSpace>,
    pub params: PhysicalParams,
    pub injuries: Vec<InjuryOverride>,
    pub penalty: f64,
    pub solver: SolverKind,
    pub fiber: FiberField,
    arterial: AssembledOperator,
    venous: AssembledOperator,
    protein_stiffness: SparseMatrix,
    protein_mass: SparseMatrix,
    /// Pressure basis evaluated at the protein-space quadrature points.
    pressure_on_protein_rule: RuleEval,
}

/// Evaluation of fields of one space at the volume quadrature points of
/// another space over the same mesh.
struct RuleEval {
    table: Vec<f64>,
    ndofs: usize,
    nq: usize,
}

impl RuleEval {
    fn new(field_space: &DgSpace, target_space: &DgSpace) -> RuleEval {
        let points = &target_space.volume_rule.points;
        RuleEval {
            table: field_space.basis_table_at(points),
            ndofs: field_space.dofs_per_element,
            nq: points.len(),
        }
    }

    fn values(&self, field: &FieldVector, k: usize, out: &mut [f64]) {
        let block = &field.coeffs[k * self.ndofs..(k + 1) * self.ndofs];
        for q in 0..self.nq {
            let row = &self.table[q * self.ndofs..(q + 1) * self.ndofs];
            out[q] = row.iter().zip(block).map(|(b, c)| b * c).sum();
        }
    }
}

impl Problem {
    pub fn new(
        mesh: Arc<Mesh>,
        degree_pressure: usize,
        degree_protein: usize,
        params: PhysicalParams,
        injuries: Vec<InjuryOverride>,
        penalty: f64,
        solver: SolverKind,
        fiber: FiberField,
    ) -> Result<Problem> {
        params.validate_coefficients()?;
        if !mesh
            .boundary_faces
            .iter()
            .any(|f| f.tag == BoundaryTag::Pial)
        {
            return Err(Error::validation(
                "mesh has no pial boundary faces; the pressure system would be singular",
            ));
        }
        let space_pressure = build_space(Arc::clone(&mesh), degree_pressure)?;
        let space_protein = build_space(Arc::clone(&mesh), degree_protein)?;

        let k_a = SymTensor2::isotropic(params.k_a * MM2_TO_M2);
        let arterial = assemble_sipg(
            &space_pressure,
            &TensorCoefficient::Constant(k_a),
            Some(&DirichletSpec::on(&[BoundaryTag::Pial], params.p_arteries)),
            penalty,
        )?;
        let k_v = SymTensor2::isotropic(params.k_v * MM2_TO_M2);
        let venous = assemble_sipg(
            &space_pressure,
            &TensorCoefficient::Constant(k_v),
            Some(&DirichletSpec::on(&[BoundaryTag::Pial], params.p_veins)),
            penalty,
        )?;

        let params_d = params.clone();
        let fiber_fn = move |x: Point2| match fiber {
            FiberField::None => [0.0, 0.0],
            FiberField::Uniform(a) => {
                let _ = x;
                a
            }
        };
        let diffusion = move |x: Point2| {
            let t = diffusion_tensor(x, &params_d, Some(&fiber_fn));
            SymTensor2 {
                xx: t.xx * MM2_TO_M2,
                xy: t.xy * MM2_TO_M2,
                yy: t.yy * MM2_TO_M2,
            }
        };
        // Zero-flux protein boundary conditions: interior faces only.
        let protein_stiffness =
            assemble_sipg(&space_protein, &TensorCoefficient::Analytic(&diffusion), None, penalty)?
                .matrix;
        let protein_mass = assemble_mass(&space_protein, &ScalarCoefficient::Constant(1.0));
        let pressure_on_protein_rule = RuleEval::new(&space_pressure, &space_protein);

        Ok(Problem {
            mesh,
            space_pressure,
            space_protein,
            params,
            injuries,
            penalty,
            solver,
            fiber,
            arterial,
            venous,
            protein_stiffness,
            protein_mass,
            pressure_on_protein_rule,
        })
    }

    fn base_beta_ac(&self, x: Point2) -> f64 {
        for inj in &self.injuries {
            if inj.region.contains(x) {
                if let Some(b) = inj.beta_ac {
                    return b;
                }
            }
        }
        self.params.beta_ac
    }

    fn base_beta_cv(&self, x: Point2) -> f64 {
        for inj in &self.injuries {
            if inj.region.contains(x) {
                if let Some(b) = inj.beta_cv {
                    return b;
                }
            }
        }
        self.params.beta_cv
    }

    fn base_k_c(&self, x: Point2) -> f64 {
        for inj in &self.injuries {
            if inj.region.contains(x) {
                if let Some(k) = inj.k_c {
                    return k;
                }
            }
        }
        self.params.k_c
    }
}

/// Reusable solver state: cached symbolic factorizations per system.
#[derive(Default)]
pub struct SolverWorkspace {
    /// Shared by the healthy and per-step pressure solves: the monolith
    /// pattern is the same, only coefficient values differ.
    pressure: DirectSolver,
    /// Shared by the two protein solves, whose system patterns coincide.
    protein: DirectSolver,
    // Pattern caches: every per-step matrix has a fixed sparsity layout, so
    // sorting/compression happens once per run.
    pat_capillary: Option<CsrPattern>,
    pat_mass_pressure: Option<CsrPattern>,
    pat_mass_protein: Option<CsrPattern>,
    pat_diag_a: Option<CsrPattern>,
    pat_diag_c: Option<CsrPattern>,
    pat_diag_v: Option<CsrPattern>,
    pat_monolith: Option<CsrPattern>,
    pat_protein_system: Option<CsrPattern>,
}

impl SolverWorkspace {
    pub fn new() -> SolverWorkspace {
        SolverWorkspace::default()
    }
}

/// Healthy pressures and CBF rate, computed once with ũ ≡ 0 and the
/// uninjured base coefficients.
#[derive(Debug)]
pub struct HealthyBaseline {
    pub p_a: FieldVector,
    pub p_c: FieldVector,
    pub p_v: FieldVector,
    /// Q_H at the protein-space quadrature points.
    pub q_h: QuadratureValues,
    pub q_h_min: f64,
}

pub fn solve_healthy_baseline(
    problem: &Problem,
    ws: &mut SolverWorkspace,
) -> Result<HealthyBaseline> {
    let util_zero = FieldVector::zeros(Arc::clone(&problem.space_protein), FieldRole::MisfoldedProtein);
    let (p_a, p_c, p_v) = pressure_solve(problem, &util_zero, false, ws)?;

    // Q_H from the uninjured base transfer coefficient.
    let space_u = &problem.space_protein;
    let nq = space_u.volume_rule.len();
    let nelem = space_u.mesh.num_elements();
    let mut q_h = QuadratureValues::zeros(nelem, nq);
    let mut pa_vals = vec![0.0; nq];
    let mut pc_vals = vec![0.0; nq];
    let mut q_h_min = f64::INFINITY;
    for k in 0..nelem {
        problem.pressure_on_protein_rule.values(&p_a, k, &mut pa_vals);
        problem.pressure_on_protein_rule.values(&p_c, k, &mut pc_vals);
        let out = q_h.elem_mut(k);
        for q in 0..nq {
            let v = problem.params.beta_ac / problem.params.rho * (pa_vals[q] - pc_vals[q]);
            out[q] = v;
            q_h_min = q_h_min.min(v);
        }
    }
    // Positive beyond rounding noise of the pressure solve; equal boundary
    // data collapses Q_H to roundoff and is rejected here.
    let q_h_scale = problem.params.beta_ac / problem.params.rho
        * problem
            .params
            .p_arteries
            .abs()
            .max(problem.params.p_veins.abs())
            .max(1.0);
    if !(q_h_min > 1e-10 * q_h_scale) {
        return Err(Error::validation(format!(
            "healthy CBF rate must be positive everywhere (min {q_h_min:.3e}); \
             check the boundary pressure data"
        )));
    }
    Ok(HealthyBaseline {
        p_a,
        p_c,
        p_v,
        q_h,
        q_h_min,
    })
}

/// Solves the 3×3 pressure block with coefficients evaluated at ũⁿ.
pub fn solve_pressure_block(
    problem: &Problem,
    util_n: &FieldVector,
    ws: &mut SolverWorkspace,
) -> Result<(FieldVector, FieldVector, FieldVector)> {
    pressure_solve(problem, util_n, true, ws)
}

fn pressure_solve(
    problem: &Problem,
    util_n: &FieldVector,
    with_injuries: bool,
    ws: &mut SolverWorkspace,
) -> Result<(FieldVector, FieldVector, FieldVector)> {
    let p = &problem.params;
    let space = &problem.space_pressure;

    let k_c_map = |ut: f64, x: Point2| {
        let base = if with_injuries {
            problem.base_k_c(x)
        } else {
            p.k_c
        };
        transfer_coefficient(ut, base, p.k_c_abeta, p.alpha_k_c) * MM2_TO_M2
    };
    let capillary = assemble_sipg_cached(
        space,
        &TensorCoefficient::State {
            field: util_n,
            map: &k_c_map,
        },
        // Zero-flux capillary condition on the whole boundary.
        None,
        problem.penalty,
        &mut ws.pat_capillary,
    )?;

    let beta_ac_map = |ut: f64, x: Point2| {
        let base = if with_injuries {
            problem.base_beta_ac(x)
        } else {
            p.beta_ac
        };
        transfer_coefficient(ut, base, p.beta_ac_abeta, p.alpha_beta_ac)
    };
    let beta_cv_map = |ut: f64, x: Point2| {
        let base = if with_injuries {
            problem.base_beta_cv(x)
        } else {
            p.beta_cv
        };
        transfer_coefficient(ut, base, p.beta_cv_abeta, p.alpha_beta_cv)
    };
    let m_beta_ac = assemble_mass_cached(
        space,
        &ScalarCoefficient::State {
            field: util_n,
            map: &beta_ac_map,
        },
        &mut ws.pat_mass_pressure,
    );
    let m_beta_cv = assemble_mass_cached(
        space,
        &ScalarCoefficient::State {
            field: util_n,
            map: &beta_cv_map,
        },
        &mut ws.pat_mass_pressure,
    );

    let diag_a = SparseMatrix::linear_combination_cached(
        &[(1.0, &problem.arterial.matrix), (1.0, &m_beta_ac)],
        &mut ws.pat_diag_a,
    )?;
    let diag_c = SparseMatrix::linear_combination_cached(
        &[
            (1.0, &capillary.matrix),
            (1.0, &m_beta_ac),
            (1.0, &m_beta_cv),
        ],
        &mut ws.pat_diag_c,
    )?;
    let diag_v = SparseMatrix::linear_combination_cached(
        &[(1.0, &problem.venous.matrix), (1.0, &m_beta_cv)],
        &mut ws.pat_diag_v,
    )?;
    let mut neg_ac = m_beta_ac.clone();
    neg_ac.scale(-1.0);
    let mut neg_cv = m_beta_cv.clone();
    neg_cv.scale(-1.0);

    let zero_rhs = vec![0.0; space.total_dofs()];
    let system = BlockSystem {
        blocks: [
            [Some(&diag_a), Some(&neg_ac), None],
            [Some(&neg_ac), Some(&diag_c), Some(&neg_cv)],
            [None, Some(&neg_cv), Some(&diag_v)],
        ],
        rhs: [
            &problem.arterial.dirichlet_lift,
            &zero_rhs,
            &problem.venous.dirichlet_lift,
        ],
    };
    let (mono, rhs) = compose_block_cached(&system, &mut ws.pat_monolith)?;
    let x = match problem.solver {
        SolverKind::Direct => ws.pressure.solve_spd(&mono, &rhs)?,
        SolverKind::Cg { tol, max_iter } => solve_cg(
            &mono,
            &rhs,
            tol,
            max_iter,
            &Preconditioner::BlockJacobi(space.dofs_per_element),
        )?,
    };

    let n = space.total_dofs();
    let mk = |range: std::ops::Range<usize>, role| {
        FieldVector::from_coeffs(Arc::clone(space), role, x[range].to_vec())
    };
    Ok((
        mk(0..n, FieldRole::ArterialPressure)?,
        mk(n..2 * n, FieldRole::CapillaryPressure)?,
        mk(2 * n..3 * n, FieldRole::VenousPressure)?,
    ))
}

/// Per-step perfusion-derived tables on the protein space: CBF rate, its
/// relative reduction, and the modulated kinetic rates.
pub struct PerfusionTables {
    pub cbf: QuadratureValues,
    pub reduction: QuadratureValues,
    pub k0: QuadratureValues,
    pub k1: QuadratureValues,
    pub k1_tilde: QuadratureValues,
    pub max_reduction: f64,
}

/// Evaluates Q with the same lagged local transfer coefficient β̃_AC(ũⁿ)
/// that the pressure flux uses, then the hypoperfusion-modulated rates.
pub fn perfusion_tables(
    problem: &Problem,
    baseline: &HealthyBaseline,
    util_lagged: &FieldVector,
    p_a: &FieldVector,
    p_c: &FieldVector,
) -> PerfusionTables {
    let p = &problem.params;
    let space_u = &problem.space_protein;
    let nq = space_u.volume_rule.len();
    let nelem = space_u.mesh.num_elements();
    let mut cbf = QuadratureValues::zeros(nelem, nq);
    let mut reduction = QuadratureValues::zeros(nelem, nq);
    let mut k0 = QuadratureValues::zeros(nelem, nq);
    let mut k1 = QuadratureValues::zeros(nelem, nq);
    let mut k1t = QuadratureValues::zeros(nelem, nq);
    let mut max_reduction = f64::NEG_INFINITY;

    let mut pa_vals = vec![0.0; nq];
    let mut pc_vals = vec![0.0; nq];
    let mut ut_vals = vec![0.0; nq];
    for k in 0..nelem {
        problem.pressure_on_protein_rule.values(p_a, k, &mut pa_vals);
        problem.pressure_on_protein_rule.values(p_c, k, &mut pc_vals);
        util_lagged.values_at_quadrature(k, &mut ut_vals);
        for q in 0..nq {
            let x = space_u.map_to_physical(k, space_u.volume_rule.points[q]);
            let beta_local =
                transfer_coefficient(ut_vals[q], problem.base_beta_ac(x), p.beta_ac_abeta, p.alpha_beta_ac);
            let q_val = beta_local / p.rho * (pa_vals[q] - pc_vals[q]);
            let q_h = baseline.q_h.elem(k)[q];
            let red = (q_h - q_val) / q_h;
            let rates = modulated_rates_at(hypoperfusion_ratio(q_val, q_h), p);
            cbf.elem_mut(k)[q] = q_val;
            reduction.elem_mut(k)[q] = red;
            k0.elem_mut(k)[q] = rates.k0;
            k1.elem_mut(k)[q] = rates.k1;
            k1t.elem_mut(k)[q] = rates.k1_tilde;
            max_reduction = max_reduction.max(red.clamp(0.0, 1.0));
        }
    }
    PerfusionTables {
        cbf,
        reduction,
        k0,
        k1,
        k1_tilde: k1t,
        max_reduction,
    }
}

/// Advances the two protein fields by one implicit Euler step with the
/// paper's lagged operator pattern: the u-equation uses ũⁿ in the conversion
/// matrix, the ũ-equation uses uⁿ.
pub fn step_proteins(
    problem: &Problem,
    tables: &PerfusionTables,
    u_n: &FieldVector,
    util_n: &FieldVector,
    dt: f64,
    ws: &mut SolverWorkspace,
) -> Result<(FieldVector, FieldVector, bool)> {
    if !(dt > 0.0) {
        return Err(Error::invalid_argument(format!(
            "time step must be positive (got {dt})"
        )));
    }
    let space = &problem.space_protein;
    let k12 = problem.params.k12;

    let m_k1 = assemble_mass_cached(
        space,
        &ScalarCoefficient::AtQuadrature(&tables.k1),
        &mut ws.pat_mass_protein,
    );
    let m_k1t = assemble_mass_cached(
        space,
        &ScalarCoefficient::AtQuadrature(&tables.k1_tilde),
        &mut ws.pat_mass_protein,
    );
    let conv = |v: f64, _x: Point2| k12 * v.max(0.0);
    let m_conv_util = assemble_mass_cached(
        space,
        &ScalarCoefficient::State {
            field: util_n,
            map: &conv,
        },
        &mut ws.pat_mass_protein,
    );
    let m_conv_u = assemble_mass_cached(
        space,
        &ScalarCoefficient::State {
            field: u_n,
            map: &conv,
        },
        &mut ws.pat_mass_protein,
    );
    let f_k0 = assemble_load(space, &ScalarCoefficient::AtQuadrature(&tables.k0));

    let system_u = SparseMatrix::linear_combination_cached(
        &[
            (1.0, &problem.protein_mass),
            (dt, &problem.protein_stiffness),
            (dt, &m_k1),
            (dt, &m_conv_util),
        ],
        &mut ws.pat_protein_system,
    )?;
    let mut rhs_u = problem.protein_mass.matvec_alloc(&u_n.coeffs);
    for (r, f) in rhs_u.iter_mut().zip(&f_k0) {
        *r += dt * f;
    }
    let u_next = solve_protein(problem, &system_u, &rhs_u, &mut ws.protein)?;

    let system_util = SparseMatrix::linear_combination_cached(
        &[
            (1.0, &problem.protein_mass),
            (dt, &problem.protein_stiffness),
            (dt, &m_k1t),
            (-dt, &m_conv_u),
        ],
        &mut ws.pat_protein_system,
    )?;
    let rhs_util = problem.protein_mass.matvec_alloc(&util_n.coeffs);
    let util_next = solve_protein(problem, &system_util, &rhs_util, &mut ws.protein)?;

    let u_field = FieldVector::from_coeffs(Arc::clone(space), FieldRole::HealthyProtein, u_next)?;
    let util_field =
        FieldVector::from_coeffs(Arc::clone(space), FieldRole::MisfoldedProtein, util_next)?;

    // Positivity of ũ is not preserved by the scheme; warn on serious
    // undershoot instead of failing.
    let min_ut = util_field.min_at_quadrature();
    let max_ut = util_field.max_at_quadrature();
    let warning = min_ut < -1e-3 * max_ut.max(0.0);

    Ok((u_field, util_field, warning))
}

fn solve_protein(
    problem: &Problem,
    system: &SparseMatrix,
    rhs: &[f64],
    solver: &mut DirectSolver,
) -> Result<Vec<f64>> {
    match problem.solver {
        SolverKind::Direct => solver.solve_spd(system, rhs),
        SolverKind::Cg { tol, max_iter } => solve_cg(
            system,
            rhs,
            tol,
            max_iter,
            &Preconditioner::BlockJacobi(problem.space_protein.dofs_per_element),
        ),
    }
}

/// Long-time classification of a seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Outbreak,
    Extinction,
    Indeterminate,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Outbreak => "OUTBREAK",
            Classification::Extinction => "EXTINCTION",
            Classification::Indeterminate => "INDETERMINATE",
        };
        f.write_str(s)
    }
}

/// State at one time level with recomputed diagnostics.
pub struct SimulationState {
    pub time: f64,
    pub u: FieldVector,
    pub util: FieldVector,
    pub p_a: FieldVector,
    pub p_c: FieldVector,
    pub p_v: FieldVector,
    /// (Q_H − Q)/Q_H at the protein quadrature points.
    pub cbf_reduction: QuadratureValues,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    pub mass_u: f64,
    pub mass_util: f64,
    pub max_util: f64,
    pub min_u: f64,
    pub max_cbf_reduction: f64,
    pub positivity_warning: bool,
}

/// One diagnostics row per step.
#[derive(Debug, Clone)]
pub struct DiagRow {
    pub step: usize,
    pub time: f64,
    pub mass_u: f64,
    pub mass_util: f64,
    pub max_util: f64,
    pub min_u: f64,
    pub max_cbf_reduction: f64,
    pub classification_so_far: Classification,
}

/// Time-loop settings.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    /// Final time [yr].
    pub t_end: f64,
    /// Time step [yr].
    pub dt: f64,
    /// Snapshot cadence [yr].
    pub snapshot_cadence: f64,
}

pub struct RunOutcome {
    pub classification: Classification,
    pub final_state: SimulationState,
    pub r_max_observed: f64,
    pub steps: usize,
    pub seed_amplitude: f64,
}

fn make_state(
    tables: &PerfusionTables,
    time: f64,
    u: FieldVector,
    util: FieldVector,
    p_a: FieldVector,
    p_c: FieldVector,
    p_v: FieldVector,
    positivity_warning: bool,
) -> SimulationState {
    let diagnostics = Diagnostics {
        mass_u: u.integral(),
        mass_util: util.integral(),
        max_util: util.max_at_quadrature(),
        min_u: u.min_at_quadrature(),
        max_cbf_reduction: tables.max_reduction,
        positivity_warning,
    };
    SimulationState {
        time,
        u,
        util,
        p_a,
        p_c,
        p_v,
        cbf_reduction: tables.reduction.clone(),
        diagnostics,
    }
}

fn classify(
    problem: &Problem,
    max_util_final: f64,
    seed_amplitude: f64,
    r_max: f64,
) -> Classification {
    if seed_amplitude > 0.0 && max_util_final < 1e-3 * seed_amplitude {
        return Classification::Extinction;
    }
    let rates = modulated_rates_at(r_max, &problem.params);
    let eq = rates.equilibria(problem.params.k12);
    if eq.pathogenic_physical && max_util_final > 0.5 * eq.pathogenic.1 {
        return Classification::Outbreak;
    }
    Classification::Indeterminate
}

/// Runs the full simulation: healthy baseline, initial projection, then the
/// loosely-coupled loop. `on_snapshot` fires at t = 0 and every cadence
/// crossing; `on_diag` fires once per step (plus the initial row).
pub fn run_simulation(
    problem: &Problem,
    initial: &InitialData,
    settings: &RunSettings,
    mut on_snapshot: impl FnMut(&SimulationState, usize) -> Result<()>,
    mut on_diag: impl FnMut(&DiagRow) -> Result<()>,
) -> Result<RunOutcome> {
    if !(settings.dt > 0.0) || !(settings.t_end > 0.0) {
        return Err(Error::invalid_argument(
            "final time and time step must be positive",
        ));
    }
    let n_steps = (settings.t_end / settings.dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::invalid_argument("no steps to run"));
    }
    let dt = settings.t_end / n_steps as f64;

    let mut ws = SolverWorkspace::new();
    let baseline = solve_healthy_baseline(problem, &mut ws)?;

    let space_u = &problem.space_protein;
    let mut u = space_u.l2_project(FieldRole::HealthyProtein, |_| initial.u0);
    let mut util = space_u.l2_project(FieldRole::MisfoldedProtein, |x| initial.util_at(x));
    let seed_amplitude = util.max_at_quadrature();

    // Pressures at a time level are functions of the lagged ũ; the t = 0
    // state carries the solve at ũ⁰, which is also the step-1 pressure.
    let (mut p_a, mut p_c, mut p_v) = solve_pressure_block(problem, &util, &mut ws)?;
    let mut tables = perfusion_tables(problem, &baseline, &util, &p_a, &p_c);
    let mut r_max = tables.max_reduction;

    let state0 = make_state(
        &tables,
        0.0,
        u.clone(),
        util.clone(),
        p_a.clone(),
        p_c.clone(),
        p_v.clone(),
        false,
    );
    let mut snapshots = 0usize;
    on_snapshot(&state0, snapshots)?;
    snapshots += 1;
    on_diag(&DiagRow {
        step: 0,
        time: 0.0,
        mass_u: state0.diagnostics.mass_u,
        mass_util: state0.diagnostics.mass_util,
        max_util: state0.diagnostics.max_util,
        min_u: state0.diagnostics.min_u,
        max_cbf_reduction: state0.diagnostics.max_cbf_reduction,
        classification_so_far: classify(problem, state0.diagnostics.max_util, seed_amplitude, r_max),
    })?;

    let mut next_snapshot = settings.snapshot_cadence;
    let mut last_state = state0;
    for n in 0..n_steps {
        if n > 0 {
            let (a, c, v) = solve_pressure_block(problem, &util, &mut ws)?;
            p_a = a;
            p_c = c;
            p_v = v;
            tables = perfusion_tables(problem, &baseline, &util, &p_a, &p_c);
        }
        let (u_next, util_next, warning) =
            step_proteins(problem, &tables, &u, &util, dt, &mut ws)?;
        if !(u_next.is_finite() && util_next.is_finite()) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        u = u_next;
        util = util_next;
        let time = (n + 1) as f64 * dt;
        r_max = r_max.max(tables.max_reduction);

        let state = make_state(
            &tables,
            time,
            u.clone(),
            util.clone(),
            p_a.clone(),
            p_c.clone(),
            p_v.clone(),
            warning,
        );
        on_diag(&DiagRow {
            step: n + 1,
            time,
            mass_u: state.diagnostics.mass_u,
            mass_util: state.diagnostics.mass_util,
            max_util: state.diagnostics.max_util,
            min_u: state.diagnostics.min_u,
            max_cbf_reduction: state.diagnostics.max_cbf_reduction,
            classification_so_far: classify(problem, state.diagnostics.max_util, seed_amplitude, r_max),
        })?;
        if time + 1e-9 * settings.t_end >= next_snapshot {
            on_snapshot(&state, snapshots)?;
            snapshots += 1;
            next_snapshot += settings.snapshot_cadence;
        }
        last_state = state;
    }

    let classification = classify(
        problem,
        last_state.diagnostics.max_util,
        seed_amplitude,
        r_max,
    );
    Ok(RunOutcome {
        classification,
        final_state: last_state,
        r_max_observed: r_max,
        steps: n_steps,
        seed_amplitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect_mesh;
    use crate::model::MMHG_TO_PA;

    fn small_problem(params: PhysicalParams, injuries: Vec<InjuryOverride>) -> Problem {
        let mesh = Arc::new(generate_rect_mesh(6, 18, 0.1, 0.4).unwrap());
        Problem::new(
            mesh,
            1,
            1,
            params,
            injuries,
            10.0,
            SolverKind::Direct,
            FiberField::None,
        )
        .unwrap()
    }

    #[test]
    fn healthy_baseline_structure() {
        let problem = small_problem(PhysicalParams::default(), vec![]);
        let mut ws = SolverWorkspace::new();
        let baseline = solve_healthy_baseline(&problem, &mut ws).unwrap();
        assert!(baseline.q_h_min > 0.0);
        // Arterial pressure peaks at the boundary value and decays inward.
        let max_pa = baseline.p_a.max_at_quadrature() / MMHG_TO_PA;
        assert!((max_pa - 70.0).abs() < 0.7, "max p_A = {max_pa} mmHg");
        // Capillary pressure sits strictly between the boundary values.
        let pc_mean = baseline.p_c.integral() / 0.04 / MMHG_TO_PA;
        assert!(pc_mean > 7.0 && pc_mean < 70.0, "mean p_C = {pc_mean}");
    }

    #[test]
    fn equal_boundary_pressures_rejected() {
        // Equal arterial/venous data give constant pressures and Q_H ≡ 0;
        // the baseline must reject that.
        let mesh = Arc::new(generate_rect_mesh(4, 4, 0.1, 0.1).unwrap());
        let mut params = PhysicalParams::default();
        params.p_arteries = 10.0 * MMHG_TO_PA;
        params.p_veins = 10.0 * MMHG_TO_PA;
        let problem = Problem::new(
            mesh,
            1,
            1,
            params,
            vec![],
            10.0,
            SolverKind::Direct,
            FiberField::None,
        )
        .unwrap();
        let mut ws = SolverWorkspace::new();
        let err = solve_healthy_baseline(&problem, &mut ws).unwrap_err();
        assert!(err.to_string().contains("CBF rate"), "{err}");
    }

    #[test]
    fn pressure_block_at_zero_misfolded_matches_baseline() {
        let problem = small_problem(PhysicalParams::default(), vec![]);
        let mut ws = SolverWorkspace::new();
        let baseline = solve_healthy_baseline(&problem, &mut ws).unwrap();
        let util = FieldVector::zeros(Arc::clone(&problem.space_protein), FieldRole::MisfoldedProtein);
        let (p_a, p_c, p_v) = solve_pressure_block(&problem, &util, &mut ws).unwrap();
        for (ours, base) in [(&p_a, &baseline.p_a), (&p_c, &baseline.p_c), (&p_v, &baseline.p_v)] {
            let scale = base.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = ours
                .coeffs
                .iter()
                .zip(&base.coeffs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(diff <= 1e-8 * scale, "relative diff {}", diff / scale);
        }
    }

    #[test]
    fn saturated_misfolded_reduces_cbf() {
        let problem = small_problem(PhysicalParams::default(), vec![]);
        let mut ws = SolverWorkspace::new();
        let baseline = solve_healthy_baseline(&problem, &mut ws).unwrap();
        let util = FieldVector::constant(
            Arc::clone(&problem.space_protein),
            FieldRole::MisfoldedProtein,
            5.0,
        );
        let (p_a, p_c, _) = solve_pressure_block(&problem, &util, &mut ws).unwrap();
        let tables = perfusion_tables(&problem, &baseline, &util, &p_a, &p_c);
        // Vasoconstriction raises resistance: the flux drops everywhere.
        let mut min_red = f64::INFINITY;
        for v in &tables.reduction.values {
            min_red = min_red.min(*v);
        }
        assert!(min_red > 0.0, "min reduction {min_red}");
        assert!(tables.max_reduction < 1.0);
    }

    #[test]
    fn healthy_equilibrium_is_fixed_point() {
        let problem = small_problem(PhysicalParams::default(), vec![]);
        let initial = InitialData {
            u0: 1.0,
            util0: 0.0,
            seeds: vec![],
        };
        let settings = RunSettings {
            t_end: 2.0,
            dt: 0.1,
            snapshot_cadence: 1e9,
        };
        let mut max_drift = 0.0f64;
        let mut prev_mass = None;
        let outcome = run_simulation(
            &problem,
            &initial,
            &settings,
            |_, _| Ok(()),
            |row| {
                if let Some(m) = prev_mass {
                    let drift: f64 = row.mass_u - m;
                    max_drift = max_drift.max(drift.abs());
                }
                prev_mass = Some(row.mass_u);
                assert!(row.max_util.abs() < 1e-12);
                Ok(())
            },
        )
        .unwrap();
        assert!(max_drift < 1e-10, "mass drift {max_drift}");
        assert_eq!(outcome.r_max_observed, 0.0);
    }

    #[test]
    fn pressures_are_functions_of_lagged_misfolded_field() {
        let problem = small_problem(PhysicalParams::default(), vec![]);
        let mut ws = SolverWorkspace::new();
        let disk = SubdomainSpec::disk([0.08, 0.02], 5e-4).unwrap();
        let util = problem.space_protein.l2_project(FieldRole::MisfoldedProtein, |x| {
            if disk.contains(x) {
                0.6
            } else {
                0.0
            }
        });
        let (a1, c1, v1) = solve_pressure_block(&problem, &util, &mut ws).unwrap();
        let (a2, c2, v2) = solve_pressure_block(&problem, &util, &mut ws).unwrap();
        assert_eq!(a1.coeffs, a2.coeffs);
        assert_eq!(c1.coeffs, c2.coeffs);
        assert_eq!(v1.coeffs, v2.coeffs);
    }

    #[test]
    fn single_element_scalar_decay() {
        // D = 0, k₀ = k₁₂ = 0, k₁ = 1: one implicit Euler step gives
        // u¹ = u⁰/(1 + Δt) on constant fields.
        let params = PhysicalParams {
            k0: 1e-300,
            k12: 1e-300,
            d_ext: 1e-300,
            kappa0: 0.0,
            kappa1: 0.0,
            kappa1_tilde: 0.0,
            ..PhysicalParams::default()
        };
        let problem = small_problem(params, vec![]);
        let mut ws = SolverWorkspace::new();
        let baseline = solve_healthy_baseline(&problem, &mut ws).unwrap();
        let u0 = FieldVector::constant(
            Arc::clone(&problem.space_protein),
            FieldRole::HealthyProtein,
            1.0,
        );
        let util0 = FieldVector::zeros(Arc::clone(&problem.space_protein), FieldRole::MisfoldedProtein);
        let (p_a, p_c, _) = solve_pressure_block(&problem, &util0, &mut ws).unwrap();
        let tables = perfusion_tables(&problem, &baseline, &util0, &p_a, &p_c);
        let (u1, _, _) = step_proteins(&problem, &tables, &u0, &util0, 0.1, &mut ws).unwrap();
        let expected = 1.0 / 1.1;
        for k in 0..problem.mesh.num_elements() {
            let (vals, _) = u1.eval_at_quadrature(k);
            for v in vals {
                assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
            }
        }
    }
}
