//! Independent oracles and convergence studies.
//!
//! Nothing here reuses the implicit Euler/SIPG production path it checks:
//! the reaction kinetics are integrated with a fixed-step RK4 scheme, the 0D
//! perfusion feedback uses a two-resistor lumped analogue of the
//! three-compartment system, and the Poisson study compares against a closed
//! form manufactured solution.

use crate::assembly::{
    assemble_load, assemble_sipg, DirichletSpec, ScalarCoefficient, SymTensor2, TensorCoefficient,
};
use crate::error::{Error, Result};
use crate::linsolve::solve_direct;
use crate::mesh::{generate_rect_mesh, BoundaryTag};
use crate::model::{
    cbf_rate, hypoperfusion_ratio, modulated_rates_at, transfer_coefficient, ModulatedRates,
    PhysicalParams,
};
use crate::space::{build_space, FieldRole, FieldVector};

/// Sampled trajectory of the two-species kinetics (u, ũ).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn last(&self) -> [f64; 2] {
        *self
            .states
            .last()
            .expect("trajectory has at least the initial state")
    }
}

/// Fixed-step classical RK4 over a two-component system.
pub fn rk4_integrate(
    f: impl Fn(f64, [f64; 2]) -> [f64; 2],
    y0: [f64; 2],
    t_end: f64,
    dt: f64,
) -> Trajectory {
    assert!(dt > 0.0 && t_end >= 0.0);
    let n_steps = (t_end / dt).round().max(0.0) as usize;
    let dt = if n_steps > 0 { t_end / n_steps as f64 } else { dt };
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut t = 0.0;
    let mut y = y0;
    times.push(t);
    states.push(y);
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    for _ in 0..n_steps {
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * dt, add(y, k1, 0.5 * dt));
        let k3 = f(t + 0.5 * dt, add(y, k2, 0.5 * dt));
        let k4 = f(t + dt, add(y, k3, dt));
        y = [
            y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        t += dt;
        times.push(t);
        states.push(y);
    }
    Trajectory { times, states }
}

/// Reaction right-hand side of the heterodimer kinetics:
/// u̇ = −k₁u − k₁₂uũ + k₀, ũ̇ = −k̃₁ũ + k₁₂uũ.
pub fn reaction_rhs(rates: &ModulatedRates, k12: f64, y: [f64; 2]) -> [f64; 2] {
    let [u, ut] = y;
    [
        -rates.k1 * u - k12 * u * ut + rates.k0,
        -rates.k1_tilde * ut + k12 * u * ut,
    ]
}

/// RK4 reference trajectory of the fixed-rate kinetics.
pub fn ode_oracle(
    rates: &ModulatedRates,
    k12: f64,
    u0: f64,
    ut0: f64,
    t_end: f64,
    dt_oracle: f64,
) -> Trajectory {
    rk4_integrate(
        |_, y| reaction_rhs(rates, k12, y),
        [u0, ut0],
        t_end,
        dt_oracle,
    )
}

/// The production scheme's implicit Euler update collapsed to a single
/// spatial point: the pressure feedback is frozen (fixed rates) and both
/// reaction partners are lagged exactly like the PDE scheme lags them.
pub fn implicit_euler_0d(
    rates: &ModulatedRates,
    k12: f64,
    u0: f64,
    ut0: f64,
    t_end: f64,
    dt: f64,
) -> [f64; 2] {
    let n_steps = (t_end / dt).round() as usize;
    let dt = t_end / n_steps as f64;
    let mut u = u0;
    let mut ut = ut0;
    for _ in 0..n_steps {
        let u_new = (u + dt * rates.k0) / (1.0 + dt * (rates.k1 + k12 * ut));
        let ut_new = ut / (1.0 + dt * (rates.k1_tilde - k12 * u));
        u = u_new;
        ut = ut_new;
    }
    [u, ut]
}

/// Two-resistor lumped analogue of the three-compartment perfusion system:
/// series conductances β̃_AC(ũ) and β̃_CV(ũ) between fixed arterial and
/// venous pressures, with the capillary node floating.
pub struct LumpedPerfusion<'a> {
    pub params: &'a PhysicalParams,
}

impl LumpedPerfusion<'_> {
    pub fn new(params: &PhysicalParams) -> LumpedPerfusion<'_> {
        LumpedPerfusion { params }
    }

    fn betas(&self, ut: f64) -> (f64, f64) {
        let p = self.params;
        (
            transfer_coefficient(ut, p.beta_ac, p.beta_ac_abeta, p.alpha_beta_ac),
            transfer_coefficient(ut, p.beta_cv, p.beta_cv_abeta, p.alpha_beta_cv),
        )
    }

    /// Floating capillary pressure from flux balance.
    pub fn capillary_pressure(&self, ut: f64) -> f64 {
        let p = self.params;
        let (bac, bcv) = self.betas(ut);
        (bac * p.p_arteries + bcv * p.p_veins) / (bac + bcv)
    }

    /// CBF rate at misfolded concentration ũ, with the local constricted
    /// transfer coefficient.
    pub fn cbf(&self, ut: f64) -> f64 {
        let p = self.params;
        let (bac, _) = self.betas(ut);
        cbf_rate(p.p_arteries, self.capillary_pressure(ut), bac, p.rho)
    }

    /// Healthy CBF rate (ũ = 0).
    pub fn cbf_healthy(&self) -> f64 {
        self.cbf(0.0)
    }

    pub fn hypoperfusion(&self, ut: f64) -> f64 {
        hypoperfusion_ratio(self.cbf(ut), self.cbf_healthy())
    }

    pub fn rates(&self, ut: f64) -> ModulatedRates {
        modulated_rates_at(self.hypoperfusion(ut), self.params)
    }
}

/// RK4 trajectory of the kinetics with the perfusion feedback evaluated
/// through the lumped analogue at every stage.
pub fn coupled_0d_oracle(
    params: &PhysicalParams,
    u0: f64,
    ut0: f64,
    t_end: f64,
    dt_oracle: f64,
) -> Trajectory {
    let lumped = LumpedPerfusion::new(params);
    rk4_integrate(
        |_, y| {
            let rates = lumped.rates(y[1]);
            reaction_rhs(&rates, params.k12, y)
        },
        [u0, ut0],
        t_end,
        dt_oracle,
    )
}

/// Long-time fate of a uniform seed in the 0D feedback model.
pub fn seed_outbreaks_0d(params: &PhysicalParams, ut0: f64, t_end: f64) -> bool {
    let traj = coupled_0d_oracle(params, params.k0 / params.k1, ut0, t_end, 1e-3);
    traj.last()[1] > 0.1
}

/// Brackets the separatrix seed amplitude by bisection: `lo` must
/// extinguish and `hi` must outbreak.
pub fn bistability_bracket(
    params: &PhysicalParams,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let t_end = 300.0;
    if seed_outbreaks_0d(params, lo, t_end) {
        return Err(Error::InvalidState(format!(
            "lower seed amplitude {lo} already outbreaks"
        )));
    }
    if !seed_outbreaks_0d(params, hi, t_end) {
        return Err(Error::InvalidState(format!(
            "upper seed amplitude {hi} does not outbreak"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if seed_outbreaks_0d(params, mid, t_end) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub degree: usize,
    pub subdivisions: usize,
    pub h: f64,
    pub l2_error: f64,
    /// Observed order against the previous row of the same degree.
    pub observed_order: Option<f64>,
}

/// SIPG solve of −Δu = 2π²·sin(πx)sin(πy) on the unit square with
/// homogeneous Dirichlet data, over a sequence of uniformly refined meshes.
pub fn poisson_convergence_study(
    degrees: &[usize],
    refinements: usize,
) -> Result<Vec<ConvergenceRow>> {
    if degrees.iter().any(|d| !(1..=3).contains(d)) {
        return Err(Error::invalid_argument(
            "convergence study supports degrees 1 through 3",
        ));
    }
    if refinements == 0 {
        return Err(Error::invalid_argument("need at least one refinement level"));
    }
    let pi = std::f64::consts::PI;
    let exact = move |x: [f64; 2]| (pi * x[0]).sin() * (pi * x[1]).sin();
    let source = move |x: [f64; 2]| 2.0 * pi * pi * exact(x);

    let mut rows = Vec::new();
    for &degree in degrees {
        let mut prev: Option<(f64, f64)> = None;
        for level in 0..refinements {
            let n = 8usize << level;
            let mesh = std::sync::Arc::new(generate_rect_mesh(n, n, 1.0, 1.0)?);
            let space = build_space(mesh, degree)?;
            let op = assemble_sipg(
                &space,
                &TensorCoefficient::Constant(SymTensor2::isotropic(1.0)),
                Some(&DirichletSpec::on(&[BoundaryTag::Pial], 0.0)),
                10.0,
            )?;
            let mut rhs = assemble_load(&space, &ScalarCoefficient::Analytic(&source));
            for (r, l) in rhs.iter_mut().zip(&op.dirichlet_lift) {
                *r += l;
            }
            let x = solve_direct(&op.matrix, &rhs)?;
            let uh = FieldVector::from_coeffs(space.clone(), FieldRole::Auxiliary, x)?;

            let mut err_sq = 0.0;
            for k in 0..space.mesh.num_elements() {
                let (vals, _) = uh.eval_at_quadrature(k);
                let det = space.det_jac(k);
                for (q, v) in vals.iter().enumerate() {
                    let xq = space.map_to_physical(k, space.volume_rule.points[q]);
                    let d = v - exact(xq);
                    err_sq += det * space.volume_rule.weights[q] * d * d;
                }
            }
            let l2_error = err_sq.sqrt();
            let h = space.mesh.h_max();
            let observed_order = prev.map(|(h0, e0)| (e0 / l2_error).ln() / (h0 / h).ln());
            rows.push(ConvergenceRow {
                degree,
                subdivisions: n,
                h,
                l2_error,
                observed_order,
            });
            prev = Some((h, l2_error));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_rates() -> ModulatedRates {
        ModulatedRates {
            k0: 1.0,
            k1: 1.0,
            k1_tilde: 1.5,
        }
    }

    fn supercritical_rates() -> ModulatedRates {
        // R₀ = 2 with unit production/clearance.
        ModulatedRates {
            k0: 1.0,
            k1: 1.0,
            k1_tilde: 0.5,
        }
    }

    #[test]
    fn oracle_converges_to_pathogenic_equilibrium() {
        // Slowest Jacobian eigenvalue at (0.5, 1.0) is −1 + 1/√2 ≈ −0.293,
        // so the distance at T = 50 is ≈ e^(−14.6); fully below 1e-6 by T = 60.
        let traj = ode_oracle(&supercritical_rates(), 1.0, 1.0, 0.1, 50.0, 1e-3);
        let [u, ut] = traj.last();
        assert!((u - 0.5).abs() < 2e-6, "u = {u}");
        assert!((ut - 1.0).abs() < 2e-6, "ut = {ut}");
        let [u, ut] = ode_oracle(&supercritical_rates(), 1.0, 1.0, 0.1, 60.0, 1e-3).last();
        assert!((u - 0.5).abs() < 1e-6 && (ut - 1.0).abs() < 1e-6, "({u}, {ut})");
    }

    #[test]
    fn oracle_converges_to_healthy_equilibrium_when_subcritical() {
        let traj = ode_oracle(&base_rates(), 1.0, 1.0, 0.1, 60.0, 1e-3);
        let [u, ut] = traj.last();
        assert!((u - 1.0).abs() < 1e-8, "u = {u}");
        assert!(ut.abs() < 1e-8, "ut = {ut}");
    }

    #[test]
    fn zero_seed_is_invariant() {
        let traj = ode_oracle(&supercritical_rates(), 1.0, 2.0, 0.0, 20.0, 1e-3);
        for s in &traj.states {
            assert_eq!(s[1], 0.0);
        }
    }

    #[test]
    fn oracle_self_convergence() {
        let r = base_rates();
        let a = ode_oracle(&r, 1.0, 1.0, 0.4, 50.0, 1e-3).last();
        let b = ode_oracle(&r, 1.0, 1.0, 0.4, 50.0, 5e-4).last();
        assert!((a[0] - b[0]).abs() < 1e-8);
        assert!((a[1] - b[1]).abs() < 1e-8);
    }

    #[test]
    fn implicit_euler_first_order_against_oracle() {
        let r = supercritical_rates();
        let (u0, ut0, t_end) = (1.0, 0.1, 5.0);
        let reference = ode_oracle(&r, 1.0, u0, ut0, t_end, 1e-5).last();
        let mut errors = Vec::new();
        for &dt in &[0.2, 0.1, 0.05, 0.025] {
            let ie = implicit_euler_0d(&r, 1.0, u0, ut0, t_end, dt);
            let err = ((ie[0] - reference[0]).powi(2) + (ie[1] - reference[1]).powi(2)).sqrt();
            errors.push(err);
        }
        for pair in errors.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(
                (order - 1.0).abs() <= 0.15,
                "observed order {order}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn scalar_implicit_euler_step() {
        // Pure decay, one step: u¹ = 1/(1 + Δt).
        let r = ModulatedRates {
            k0: 0.0,
            k1: 1.0,
            k1_tilde: 1.0,
        };
        let out = implicit_euler_0d(&r, 0.0, 1.0, 0.0, 0.1, 0.1);
        assert!((out[0] - 1.0 / 1.1).abs() < 1e-15, "{}", out[0]);
    }

    #[test]
    fn conversion_invariant_under_pure_exchange() {
        // k₀ = k₁ = k̃₁ = 0: u + ũ is exactly conserved by RK4 and to O(Δt)
        // by the lagged implicit scheme.
        let r = ModulatedRates {
            k0: 0.0,
            k1: 0.0,
            k1_tilde: 0.0,
        };
        let rk = ode_oracle(&r, 1.0, 0.5, 0.1, 1.0, 1e-3);
        for s in &rk.states {
            assert!((s[0] + s[1] - 0.6).abs() < 1e-13);
        }
        let ie = implicit_euler_0d(&r, 1.0, 0.5, 0.1, 1.0, 0.01);
        assert!((ie[0] + ie[1] - 0.6).abs() < 1e-3);
    }

    #[test]
    fn lumped_feedback_is_bistable() {
        let p = PhysicalParams::default();
        assert!(!seed_outbreaks_0d(&p, 0.0, 200.0));
        assert!(seed_outbreaks_0d(&p, 0.6, 200.0));
        let (lo, hi) = bistability_bracket(&p, 0.0, 0.6, 1e-3).unwrap();
        assert!(hi - lo <= 1e-3);
        assert!(lo > 0.0 && hi < 0.6);

        // Monotone fate across a scan of seed amplitudes.
        for i in 0..20 {
            let amp = 0.6 * (i as f64 + 0.5) / 20.0;
            let fate = seed_outbreaks_0d(&p, amp, 300.0);
            if amp < lo {
                assert!(!fate, "amplitude {amp} below bracket outbroke");
            }
            if amp > hi {
                assert!(fate, "amplitude {amp} above bracket extinguished");
            }
        }
    }

    #[test]
    fn no_feedback_subcritical_always_extinguishes() {
        let p = PhysicalParams {
            kappa0: 0.0,
            kappa1: 0.0,
            kappa1_tilde: 0.0,
            ..PhysicalParams::default()
        };
        for amp in [0.05, 0.3, 0.6, 2.0] {
            assert!(!seed_outbreaks_0d(&p, amp, 200.0), "amplitude {amp}");
        }
    }

    #[test]
    fn lumped_healthy_capillary_pressure() {
        // Series conductances 5:4 put the healthy capillary node at
        // (5·70 + 4·7)/9 = 42 mmHg.
        let p = PhysicalParams::default();
        let lumped = LumpedPerfusion::new(&p);
        let pc = lumped.capillary_pressure(0.0) / crate::model::MMHG_TO_PA;
        assert!((pc - 42.0).abs() < 1e-10, "pc = {pc}");
        assert!(lumped.cbf_healthy() > 0.0);
        assert_eq!(lumped.hypoperfusion(0.0), 0.0);
    }
}
