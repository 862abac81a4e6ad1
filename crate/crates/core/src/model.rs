//! Physical parameters and coupling laws of the protein/perfusion model.
//!
//! Unit conventions: rates and times in years, concentrations in µg·mm⁻³,
//! pressures in Pa (mmHg inputs are converted once at 133.322 Pa/mmHg),
//! permeabilities and diffusivities in mm²-based units as tabulated; the
//! single mm² → m² conversion happens where PDE coefficient fields are built
//! ([`MM2_TO_M2`]), since the mesh is in metres.

use crate::assembly::SymTensor2;
use crate::error::{Error, Result};
use crate::Point2;

pub const MMHG_TO_PA: f64 = 133.322;
pub const MM2_TO_M2: f64 = 1e-6;

/// Floor applied to hypoperfusion-reduced clearance rates [yr⁻¹]; the
/// tabulated sensitivities allow the raw rate to go negative, which would
/// turn clearance into a source.
pub const RATE_FLOOR: f64 = 1e-6;

/// Hypoperfusion ratio at which the modulated-rate dimensionless groups are
/// reported.
pub const REFERENCE_HYPOPERFUSION: f64 = 0.2;

/// Every physical symbol of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Healthy-protein production rate [µg·yr⁻¹·mm⁻³].
    pub k0: f64,
    /// Healthy-protein clearance rate [yr⁻¹].
    pub k1: f64,
    /// Misfolded-protein clearance rate [yr⁻¹].
    pub k1_tilde: f64,
    /// Conversion rate [mm³·µg⁻¹·yr⁻¹].
    pub k12: f64,
    /// Hypoperfusion sensitivities of production/clearance.
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa1_tilde: f64,
    /// Extracellular and axonal diffusivity [mm²·yr⁻¹].
    pub d_ext: f64,
    pub d_axn: f64,
    /// Arterial, venous, capillary permeability [mm²·(Pa·s)⁻¹].
    pub k_a: f64,
    pub k_v: f64,
    pub k_c: f64,
    /// Saturated capillary permeability and sigmoid sensitivity.
    pub k_c_abeta: f64,
    pub alpha_k_c: f64,
    /// Transfer coefficients [(Pa·s)⁻¹] with saturated values and
    /// sensitivities.
    pub beta_ac: f64,
    pub beta_cv: f64,
    pub beta_ac_abeta: f64,
    pub beta_cv_abeta: f64,
    pub alpha_beta_ac: f64,
    pub alpha_beta_cv: f64,
    /// Boundary pressures [Pa].
    pub p_arteries: f64,
    pub p_veins: f64,
    /// Tissue density [kg·m⁻³].
    pub rho: f64,
}

impl Default for PhysicalParams {
    /// Parameter set of the idealized rectangular test cases.
    fn default() -> Self {
        PhysicalParams {
            k0: 1.0,
            k1: 1.0,
            k1_tilde: 1.5,
            k12: 1.0,
            kappa0: 1.25,
            kappa1: 1.25,
            kappa1_tilde: 3.75,
            d_ext: 8.0,
            d_axn: 0.0,
            k_a: 1e-2,
            k_v: 1e-2,
            k_c: 5e-3,
            k_c_abeta: 1e-4,
            alpha_k_c: 2.0,
            beta_ac: 5e-7,
            beta_cv: 4e-7,
            beta_ac_abeta: 4e-7,
            beta_cv_abeta: 3e-7,
            alpha_beta_ac: 2.0,
            alpha_beta_cv: 2.0,
            p_arteries: 70.0 * MMHG_TO_PA,
            p_veins: 7.0 * MMHG_TO_PA,
            rho: 1000.0,
        }
    }
}

impl PhysicalParams {
    /// Full validation for user-supplied configurations.
    pub fn validate(&self) -> Result<()> {
        self.validate_coefficients()?;
        if self.p_arteries <= self.p_veins {
            return Err(Error::validation(format!(
                "arterial pressure ({} Pa) must exceed venous pressure ({} Pa)",
                self.p_arteries, self.p_veins
            )));
        }
        Ok(())
    }

    /// Coefficient checks needed for assembly to be well posed; the boundary
    /// pressure ordering is enforced downstream through Q_H > 0.
    pub fn validate_coefficients(&self) -> Result<()> {
        let positive = [
            ("k0", self.k0),
            ("k1", self.k1),
            ("k1_tilde", self.k1_tilde),
            ("k12", self.k12),
            ("d_ext", self.d_ext),
            ("k_a", self.k_a),
            ("k_v", self.k_v),
            ("k_c", self.k_c),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        let nonnegative = [
            ("kappa0", self.kappa0),
            ("kappa1", self.kappa1),
            ("kappa1_tilde", self.kappa1_tilde),
            ("d_axn", self.d_axn),
            ("alpha_k_c", self.alpha_k_c),
            ("alpha_beta_ac", self.alpha_beta_ac),
            ("alpha_beta_cv", self.alpha_beta_cv),
        ];
        for (name, v) in nonnegative {
            if !(v >= 0.0) {
                return Err(Error::validation(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.k_c_abeta > self.k_c {
            return Err(Error::validation(
                "saturated capillary permeability exceeds the base value",
            ));
        }
        if self.beta_ac_abeta > self.beta_ac || self.beta_cv_abeta > self.beta_cv {
            return Err(Error::validation(
                "saturated transfer coefficient exceeds its base value",
            ));
        }
        Ok(())
    }

    /// Basic reproduction number of the base kinetics.
    pub fn reproduction_number(&self) -> f64 {
        reproduction_number(self.k0, self.k1, self.k1_tilde, self.k12)
    }
}

/// Decreasing sigmoid law shared by the capillary permeability and the
/// transfer coefficients: base − (base − floor)·tanh(α·max(ũ, 0)). Negative
/// ũ (dG undershoot) is clamped so the law stays in (floor, base].
pub fn transfer_coefficient(u_tilde: f64, base: f64, floor: f64, alpha: f64) -> f64 {
    base - (base - floor) * (alpha * u_tilde.max(0.0)).tanh()
}

/// Capillary permeability k̃_C(ũ) [mm²·(Pa·s)⁻¹].
pub fn capillary_permeability(u_tilde: f64, p: &PhysicalParams) -> f64 {
    transfer_coefficient(u_tilde, p.k_c, p.k_c_abeta, p.alpha_k_c)
}

/// CBF rate Q = (β_AC/ρ)(p_A − p_C): arterial-to-capillary flow per unit
/// tissue mass. Pressures in Pa, β in (Pa·s)⁻¹, ρ in kg·m⁻³.
pub fn cbf_rate(p_a: f64, p_c: f64, beta_ac_local: f64, rho: f64) -> f64 {
    beta_ac_local / rho * (p_a - p_c)
}

/// Relative CBF deficit (Q_H − Q)/Q_H clamped to [0, 1]; hyperperfusion and
/// flow reversal are outside the modulation laws.
pub fn hypoperfusion_ratio(q: f64, q_h: f64) -> f64 {
    ((q_h - q) / q_h).clamp(0.0, 1.0)
}

/// Kinetic rates after hypoperfusion modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedRates {
    pub k0: f64,
    pub k1: f64,
    pub k1_tilde: f64,
}

impl ModulatedRates {
    pub fn reproduction_number(&self, k12: f64) -> f64 {
        reproduction_number(self.k0, self.k1, self.k1_tilde, k12)
    }
}

/// Production increases and clearances decrease with the hypoperfusion
/// ratio; clearances are floored at [`RATE_FLOOR`].
pub fn modulated_rates(q: f64, q_h: f64, p: &PhysicalParams) -> Result<ModulatedRates> {
    if !(q_h > 0.0) {
        return Err(Error::InvalidState(format!(
            "healthy CBF rate must be positive, got {q_h}"
        )));
    }
    Ok(modulated_rates_at(hypoperfusion_ratio(q, q_h), p))
}

/// Modulated rates at an explicit hypoperfusion ratio r ∈ [0, 1].
pub fn modulated_rates_at(r: f64, p: &PhysicalParams) -> ModulatedRates {
    ModulatedRates {
        k0: p.k0 + p.kappa0 * r,
        k1: (p.k1 - p.kappa1 * r).max(RATE_FLOOR),
        k1_tilde: (p.k1_tilde - p.kappa1_tilde * r).max(RATE_FLOOR),
    }
}

/// R₀ = k₀k₁₂/(k₁k̃₁).
pub fn reproduction_number(k0: f64, k1: f64, k1_tilde: f64, k12: f64) -> f64 {
    k0 * k12 / (k1 * k1_tilde)
}

/// The two spatially homogeneous equilibria of the reaction kinetics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPair {
    /// (u, ũ) = (k₀/k₁, 0).
    pub healthy: (f64, f64),
    /// (u, ũ) = (k̃₁/k₁₂, k₀/k̃₁ − k₁/k₁₂).
    pub pathogenic: (f64, f64),
    /// The pathogenic state has ũ > 0 exactly when R₀ > 1.
    pub pathogenic_physical: bool,
}

pub fn homogeneous_equilibria(k0: f64, k1: f64, k1_tilde: f64, k12: f64) -> EquilibriumPair {
    let pathogenic_util = k0 / k1_tilde - k1 / k12;
    EquilibriumPair {
        healthy: (k0 / k1, 0.0),
        pathogenic: (k1_tilde / k12, pathogenic_util),
        pathogenic_physical: pathogenic_util > 0.0,
    }
}

impl ModulatedRates {
    pub fn equilibria(&self, k12: f64) -> EquilibriumPair {
        homogeneous_equilibria(self.k0, self.k1, self.k1_tilde, k12)
    }
}

/// Protein diffusion tensor d_ext·I + d_axn·(ā ⊗ ā) [mm²·yr⁻¹]. A non-unit
/// fiber vector is normalized; a zero vector leaves the tensor isotropic.
pub fn diffusion_tensor(
    x: Point2,
    p: &PhysicalParams,
    fiber: Option<&dyn Fn(Point2) -> Point2>,
) -> SymTensor2 {
    let mut t = SymTensor2::isotropic(p.d_ext);
    if p.d_axn != 0.0 {
        if let Some(f) = fiber {
            let a = f(x);
            let norm2 = a[0] * a[0] + a[1] * a[1];
            if norm2 > 0.0 {
                let s = p.d_axn / norm2;
                t.xx += s * a[0] * a[0];
                t.xy += s * a[0] * a[1];
                t.yy += s * a[1] * a[1];
            }
        }
    }
    t
}

/// Dimensionless groups of the coupled system. The modulated-rate groups
/// λ₁ᴮ, λ̃₁ᴮ, μ₀ᴮ are reported at r = [`REFERENCE_HYPOPERFUSION`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimlessParams {
    /// ε = k̃₁/k₁.
    pub epsilon: f64,
    /// R₀ = k₀k₁₂/(k₁k̃₁).
    pub r0: f64,
    pub delta_ext: f64,
    pub delta_axn: f64,
    /// σ_j = k̃₁ k_j / (d_ext β_AC).
    pub sigma_a: f64,
    pub sigma_c: f64,
    pub sigma_v: f64,
    /// B = β_CV/β_AC.
    pub b_ratio: f64,
    /// Saturated transfer ratios β^Aβ/β.
    pub gamma_ac: f64,
    pub gamma_cv: f64,
    /// k₁ᴮ/k₁, k̃₁ᴮ/k̃₁, k₀ᴮ/k₀ at the reference hypoperfusion ratio.
    pub lambda1: f64,
    pub lambda1_tilde: f64,
    pub mu0: f64,
}

pub fn nondimensionalize(p: &PhysicalParams) -> DimlessParams {
    let r = REFERENCE_HYPOPERFUSION;
    DimlessParams {
        epsilon: p.k1_tilde / p.k1,
        r0: p.reproduction_number(),
        delta_ext: 1.0,
        delta_axn: p.d_axn / p.d_ext,
        sigma_a: p.k1_tilde * p.k_a / (p.d_ext * p.beta_ac),
        sigma_c: p.k1_tilde * p.k_c / (p.d_ext * p.beta_ac),
        sigma_v: p.k1_tilde * p.k_v / (p.d_ext * p.beta_ac),
        b_ratio: p.beta_cv / p.beta_ac,
        gamma_ac: p.beta_ac_abeta / p.beta_ac,
        gamma_cv: p.beta_cv_abeta / p.beta_cv,
        lambda1: 1.0 - p.kappa1 * r / p.k1,
        lambda1_tilde: 1.0 - p.kappa1_tilde * r / p.k1_tilde,
        mu0: 1.0 + p.kappa0 * r / p.k0,
    }
}

/// Inverse of [`nondimensionalize`] on the invertible subset. Scale anchors
/// (k₀, k₁, d_ext, β_AC) and the fields not represented by any group
/// (pressures, ρ, sigmoid sensitivities, k_C^Aβ) are taken from `anchors`.
pub fn redimensionalize(d: &DimlessParams, anchors: &PhysicalParams) -> PhysicalParams {
    let r = REFERENCE_HYPOPERFUSION;
    let k1 = anchors.k1;
    let k0 = anchors.k0;
    let d_ext = anchors.d_ext;
    let beta_ac = anchors.beta_ac;
    let k1_tilde = d.epsilon * k1;
    let beta_cv = d.b_ratio * beta_ac;
    PhysicalParams {
        k0,
        k1,
        k1_tilde,
        k12: d.r0 * k1 * k1_tilde / k0,
        kappa0: (d.mu0 - 1.0) * k0 / r,
        kappa1: (1.0 - d.lambda1) * k1 / r,
        kappa1_tilde: (1.0 - d.lambda1_tilde) * k1_tilde / r,
        d_ext,
        d_axn: d.delta_axn * d_ext,
        k_a: d.sigma_a * d_ext * beta_ac / k1_tilde,
        k_v: d.sigma_v * d_ext * beta_ac / k1_tilde,
        k_c: d.sigma_c * d_ext * beta_ac / k1_tilde,
        k_c_abeta: anchors.k_c_abeta,
        alpha_k_c: anchors.alpha_k_c,
        beta_ac,
        beta_cv,
        beta_ac_abeta: d.gamma_ac * beta_ac,
        beta_cv_abeta: d.gamma_cv * beta_cv,
        alpha_beta_ac: anchors.alpha_beta_ac,
        alpha_beta_cv: anchors.alpha_beta_cv,
        p_arteries: anchors.p_arteries,
        p_veins: anchors.p_veins,
        rho: anchors.rho,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capillary_permeability_values() {
        let p = PhysicalParams::default();
        assert_eq!(capillary_permeability(0.0, &p), 5e-3);
        let v = capillary_permeability(0.6, &p);
        assert!((v - 9.151e-4).abs() < 1e-7, "got {v}");
        // Saturation: far into the sigmoid the value reaches the floor.
        let sat = capillary_permeability(6.0, &p); // α·ũ = 12
        assert!((sat - p.k_c_abeta).abs() < 1e-6 * p.k_c_abeta);
    }

    #[test]
    fn transfer_coefficient_values() {
        let p = PhysicalParams::default();
        assert_eq!(
            transfer_coefficient(0.0, p.beta_ac, p.beta_ac_abeta, p.alpha_beta_ac),
            5e-7
        );
        let v = transfer_coefficient(0.6, p.beta_ac, p.beta_ac_abeta, p.alpha_beta_ac);
        assert!((v - 4.166e-7).abs() < 1e-10, "got {v}");
        // tanh saturation reaches the floor within 1e-6 relative at α·ũ = 8.
        let sat = transfer_coefficient(4.0, p.beta_ac, p.beta_ac_abeta, p.alpha_beta_ac);
        assert!((sat - p.beta_ac_abeta).abs() < 1e-6 * p.beta_ac_abeta);
    }

    #[test]
    fn cbf_rate_values() {
        assert_eq!(cbf_rate(1000.0, 1000.0, 5e-7, 1000.0), 0.0);
        let q = cbf_rate(5000.0, 1000.0, 5e-7, 1000.0);
        assert!((q - 2e-6).abs() < 1e-18);
        assert_eq!(cbf_rate(5000.0, 1000.0, 1e-6, 1000.0), 2.0 * q);
    }

    #[test]
    fn modulated_rates_values() {
        let p = PhysicalParams::default();
        let base = modulated_rates(1.0, 1.0, &p).unwrap();
        assert_eq!((base.k0, base.k1, base.k1_tilde), (1.0, 1.0, 1.5));

        let r02 = modulated_rates_at(0.2, &p);
        assert!((r02.k0 - 1.25).abs() < 1e-14);
        assert!((r02.k1 - 0.75).abs() < 1e-14);
        assert!((r02.k1_tilde - 0.75).abs() < 1e-14);

        // Full hypoperfusion: the raw misfolded clearance 1.5 − 3.75 < 0 is
        // clamped at the rate floor.
        let r1 = modulated_rates_at(1.0, &p);
        assert_eq!(r1.k1_tilde, RATE_FLOOR);

        assert!(modulated_rates(0.5, 0.0, &p).is_err());
        assert!(modulated_rates(0.5, -1.0, &p).is_err());
    }

    #[test]
    fn reproduction_numbers() {
        let p = PhysicalParams::default();
        assert!((p.reproduction_number() - 2.0 / 3.0).abs() < 1e-15);
        assert!((reproduction_number(1.0, 1.0, 1.5, 1.2) - 0.8).abs() < 1e-15);
        let r02 = modulated_rates_at(0.2, &p);
        let r0 = r02.reproduction_number(p.k12);
        assert!((r0 - 1.25 / (0.75 * 0.75)).abs() < 1e-14);
        assert!(r0 > 1.0);
    }

    #[test]
    fn equilibria_values() {
        let base = homogeneous_equilibria(1.0, 1.0, 1.5, 1.0);
        assert_eq!(base.healthy, (1.0, 0.0));
        assert!((base.pathogenic.1 - (-1.0 / 3.0)).abs() < 1e-15);
        assert!(!base.pathogenic_physical);

        let p = PhysicalParams::default();
        let r02 = modulated_rates_at(0.2, &p).equilibria(p.k12);
        assert!((r02.pathogenic.0 - 0.75).abs() < 1e-14);
        assert!((r02.pathogenic.1 - (1.25 / 0.75 - 0.75)).abs() < 1e-14);
        assert!(r02.pathogenic_physical);

        let oracle_case = homogeneous_equilibria(1.0, 1.0, 0.5, 1.0);
        assert_eq!(oracle_case.pathogenic, (0.5, 1.0));
        assert!(oracle_case.pathogenic_physical);
    }

    #[test]
    fn equilibria_are_reaction_fixed_points() {
        let cases = [
            (1.0, 1.0, 1.5, 1.0),
            (1.0, 1.0, 0.5, 1.0),
            (1.25, 0.75, 0.75, 1.0),
            (2.0, 0.5, 0.25, 3.0),
        ];
        for (k0, k1, k1t, k12) in cases {
            let eq = homogeneous_equilibria(k0, k1, k1t, k12);
            for (u, ut) in [eq.healthy, eq.pathogenic] {
                let fu = -k1 * u - k12 * u * ut + k0;
                let fut = -k1t * ut + k12 * u * ut;
                assert!(fu.abs() < 1e-12, "residual {fu} at ({u}, {ut})");
                assert!(fut.abs() < 1e-12, "residual {fut} at ({u}, {ut})");
            }
        }
    }

    #[test]
    fn diffusion_tensor_values() {
        let p = PhysicalParams::default();
        let iso = diffusion_tensor([0.0, 0.0], &p, None);
        assert_eq!(iso, SymTensor2::isotropic(8.0));

        let aniso = PhysicalParams {
            d_axn: 80.0,
            ..PhysicalParams::default()
        };
        let fiber = |_x: Point2| [1.0, 0.0];
        let t = diffusion_tensor([0.0, 0.0], &aniso, Some(&fiber));
        assert_eq!((t.xx, t.xy, t.yy), (88.0, 0.0, 8.0));
    }

    #[test]
    fn nondimensional_groups() {
        let d = nondimensionalize(&PhysicalParams::default());
        assert!((d.epsilon - 1.5).abs() < 1e-15);
        assert!((d.r0 - 2.0 / 3.0).abs() < 1e-15);
        // Computed from the physical values; the ratio is 0.8 even where a
        // rounded 0.75 circulates.
        assert!((d.b_ratio - 0.8).abs() < 1e-15);
        assert!((d.gamma_ac - 0.8).abs() < 1e-15);
        assert!((d.gamma_cv - 0.75).abs() < 1e-15);
        assert!((d.lambda1 - 0.75).abs() < 1e-15);
        assert!((d.lambda1_tilde - 0.5).abs() < 1e-15);
        assert!((d.mu0 - 1.25).abs() < 1e-15);
    }

    #[test]
    fn nondimensionalize_round_trip() {
        let p = PhysicalParams::default();
        let d = nondimensionalize(&p);
        let back = redimensionalize(&d, &p);
        let pairs = [
            (p.k1_tilde, back.k1_tilde),
            (p.k12, back.k12),
            (p.kappa0, back.kappa0),
            (p.kappa1, back.kappa1),
            (p.kappa1_tilde, back.kappa1_tilde),
            (p.d_axn, back.d_axn),
            (p.k_a, back.k_a),
            (p.k_c, back.k_c),
            (p.k_v, back.k_v),
            (p.beta_cv, back.beta_cv),
            (p.beta_ac_abeta, back.beta_ac_abeta),
            (p.beta_cv_abeta, back.beta_cv_abeta),
        ];
        for (orig, rec) in pairs {
            let scale = orig.abs().max(1e-30);
            assert!((orig - rec).abs() <= 1e-12 * scale, "{orig} vs {rec}");
        }
    }

    #[test]
    fn identity_scaling_fixed_point() {
        // A parameter set engineered so every group equals one maps onto
        // itself.
        let p = PhysicalParams {
            k0: 1.0,
            k1: 1.0,
            k1_tilde: 1.0,
            k12: 1.0,
            kappa0: 0.0,
            kappa1: 0.0,
            kappa1_tilde: 0.0,
            d_ext: 1.0,
            d_axn: 0.0,
            k_a: 1.0,
            k_v: 1.0,
            k_c: 1.0,
            k_c_abeta: 1.0,
            alpha_k_c: 1.0,
            beta_ac: 1.0,
            beta_cv: 1.0,
            beta_ac_abeta: 1.0,
            beta_cv_abeta: 1.0,
            alpha_beta_ac: 1.0,
            alpha_beta_cv: 1.0,
            p_arteries: 1.0,
            p_veins: 0.0,
            rho: 1.0,
        };
        let d = nondimensionalize(&p);
        for (name, v) in [
            ("epsilon", d.epsilon),
            ("r0", d.r0),
            ("sigma_a", d.sigma_a),
            ("sigma_c", d.sigma_c),
            ("sigma_v", d.sigma_v),
            ("b", d.b_ratio),
            ("gamma_ac", d.gamma_ac),
            ("gamma_cv", d.gamma_cv),
            ("lambda1", d.lambda1),
            ("lambda1_tilde", d.lambda1_tilde),
            ("mu0", d.mu0),
        ] {
            assert!((v - 1.0).abs() < 1e-15, "{name} = {v}");
        }
        let back = redimensionalize(&d, &p);
        assert_eq!(back, p);
    }

    #[test]
    fn validate_catches_bad_params() {
        let mut p = PhysicalParams::default();
        p.p_veins = p.p_arteries;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::default();
        p.k_c_abeta = 1.0;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::default();
        p.k1 = 0.0;
        assert!(p.validate().is_err());
        assert!(PhysicalParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn sigmoid_laws_monotone_and_bounded(
            u1 in 0.0f64..10.0,
            u2 in 0.0f64..10.0,
            alpha in 0.1f64..5.0,
        ) {
            let (base, floor) = (5e-3, 1e-4);
            let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
            let a = transfer_coefficient(lo, base, floor, alpha);
            let b = transfer_coefficient(hi, base, floor, alpha);
            prop_assert!(b <= a + 1e-18);
            prop_assert!(a <= base && b > floor);
        }

        #[test]
        fn transcritical_structure(k12 in 0.2f64..4.0) {
            // Pathogenic ũ is positive exactly when R₀ > 1; the sign flips
            // at k₁₂ = k₁k̃₁/k₀.
            let (k0, k1, k1t) = (1.0, 1.0, 1.5);
            let eq = homogeneous_equilibria(k0, k1, k1t, k12);
            let r0 = reproduction_number(k0, k1, k1t, k12);
            prop_assert_eq!(eq.pathogenic_physical, r0 > 1.0);
        }

        #[test]
        fn diffusion_tensor_eigenvalues_at_least_d_ext(
            ax in -1.0f64..1.0,
            ay in -1.0f64..1.0,
        ) {
            let p = PhysicalParams { d_axn: 80.0, ..PhysicalParams::default() };
            let fiber = move |_x: Point2| [ax, ay];
            let t = diffusion_tensor([0.0, 0.0], &p, Some(&fiber));
            let (lo, _) = t.eigenvalues();
            prop_assert!(lo >= p.d_ext - 1e-10);
        }

        #[test]
        fn modulated_rates_clamp(q in -2.0f64..4.0) {
            let p = PhysicalParams::default();
            let rates = modulated_rates(q, 1.0, &p).unwrap();
            prop_assert!(rates.k0 >= p.k0 - 1e-15);
            prop_assert!(rates.k0 <= p.k0 + p.kappa0 + 1e-15);
            prop_assert!(rates.k1 >= RATE_FLOOR && rates.k1 <= p.k1);
            prop_assert!(rates.k1_tilde >= RATE_FLOOR && rates.k1_tilde <= p.k1_tilde);
        }
    }
}
